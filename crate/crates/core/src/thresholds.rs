//! Extinction/permanence thresholds.
//!
//! Discrete thresholds are sliding products of per-step growth ratios along
//! the disease-free auxiliary orbit; continuous thresholds are sliding
//! integrals of the linearised infective growth rate. The asymptotic
//! liminf/limsup are replaced by min/max over a finite scan window after a
//! burn-in; for periodic coefficients this surrogate is exact.

use serde::Serialize;

use crate::dynamics::{periodic_aux_solution, simulate_aux, AuxState};
use crate::error::{Error, Result};
use crate::incidence::IncidenceFn;
use crate::schedules::{validate_hypotheses, Coefficient, Coefficients, DiscreteParams, Horizons, ScheduleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    Extinction,
    Permanence,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Extinction => "Extinction",
            Verdict::Permanence => "Permanence",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    Discrete,
    Continuous,
}

/// Values within this distance of the critical value (1 for discrete, 0 for
/// continuous) are indistinguishable from it in double precision.
pub const CRITICAL_BAND: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub mode: Mode,
    /// Window length: number of extra factors (discrete) or time span (continuous).
    pub lambda: f64,
    pub r_lower: f64,
    pub r_upper: f64,
    /// Per-window products (discrete) or integrals (continuous), in scan order.
    pub window_values: Vec<f64>,
    /// Start of the scan, in steps (discrete) or time (continuous).
    pub burn_in: f64,
    /// Length of the scan, in steps (discrete) or time (continuous).
    pub scan: f64,
    pub verdict: Verdict,
    pub exact_periodic: bool,
}

pub fn classify(report: &ThresholdReport, mode: Mode) -> Verdict {
    let critical = match mode {
        Mode::Discrete => 1.0,
        Mode::Continuous => 0.0,
    };
    if report.r_upper < critical - CRITICAL_BAND {
        Verdict::Extinction
    } else if report.r_lower > critical + CRITICAL_BAND {
        Verdict::Permanence
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteWindow {
    pub burn_in: usize,
    pub scan: usize,
    pub aux_start: AuxState,
}

impl Default for DiscreteWindow {
    fn default() -> Self {
        DiscreteWindow {
            burn_in: 2000,
            scan: 4000,
            aux_start: AuxState::new(1.0, 1.0),
        }
    }
}

/// Burn-in long enough for the auxiliary orbit to contract by 1e-16, never
/// below the default 2000 steps.
pub fn recommended_burn_in(dp: &DiscreteParams) -> usize {
    let mu_min = (0..1000).map(|n| dp.at(n).mu).fold(f64::INFINITY, f64::min);
    if !(mu_min > 0.0) {
        return DiscreteWindow::default().burn_in;
    }
    let steps = (16.0 * std::f64::consts::LN_10 / mu_min.ln_1p()).ceil();
    (steps.min(1e6) as usize).max(DiscreteWindow::default().burn_in)
}

fn growth_factor(c: &Coefficients, phi: &IncidenceFn, psi: &IncidenceFn, next: AuxState, pop: f64) -> Result<f64> {
    let pop = Some(pop);
    let num = 1.0 + c.beta * phi.d2_at_zero(next.x, pop)? + c.sigma * psi.d2_at_zero(next.y, pop)?;
    Ok(num / (1.0 + c.mu + c.alpha + c.gamma))
}

/// Discrete thresholds: min/max over `n ∈ [burn_in, burn_in + scan)` of
/// `∏_{k=n}^{n+λ} (1 + β_k ∂₂φ(x*_{k+1},0) + σ_k ∂₂ψ(y*_{k+1},0)) / (1 + μ_k + α_k + γ_k)`.
///
/// The standard incidence is evaluated with the disease-free population
/// `x*_k + y*_k` of step `k`.
pub fn discrete_thresholds(
    dp: &DiscreteParams,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    lambda: usize,
    window: &DiscreteWindow,
) -> Result<ThresholdReport> {
    if window.scan < lambda + 1 {
        return Err(Error::domain(format!(
            "scan ({}) must cover at least one window of {} factors",
            window.scan,
            lambda + 1
        )));
    }
    if !(window.aux_start.x > 0.0 && window.aux_start.y > 0.0) {
        return Err(Error::domain("auxiliary start must be positive"));
    }
    let last_k = window.burn_in + window.scan + lambda;
    let orbit = simulate_aux(dp, window.aux_start, last_k + 1);
    let factors = (window.burn_in..last_k)
        .map(|k| {
            let pop = orbit[k].x + orbit[k].y;
            growth_factor(&dp.at(k), phi, psi, orbit[k + 1], pop)
        })
        .collect::<Result<Vec<f64>>>()?;
    let products: Vec<f64> = (0..window.scan)
        .map(|offset| factors[offset..=offset + lambda].iter().product())
        .collect();
    let exact_periodic = dp.step_period().is_some_and(|omega| (lambda + 1).is_multiple_of(omega));
    Ok(finish(
        Mode::Discrete,
        lambda as f64,
        products,
        window.burn_in as f64,
        window.scan as f64,
        exact_periodic,
    ))
}

fn finish(mode: Mode, lambda: f64, values: Vec<f64>, burn_in: f64, scan: f64, exact_periodic: bool) -> ThresholdReport {
    let r_lower = values.iter().copied().fold(f64::INFINITY, f64::min);
    let r_upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut report = ThresholdReport {
        mode,
        lambda,
        r_lower,
        r_upper,
        window_values: values,
        burn_in,
        scan,
        verdict: Verdict::Inconclusive,
        exact_periodic,
    };
    report.verdict = classify(&report, mode);
    report
}

/// One-period product along the periodic auxiliary orbit.
pub fn periodic_discrete_threshold(
    dp: &DiscreteParams,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    omega: usize,
) -> Result<f64> {
    let orbit = periodic_aux_solution(dp, omega)?;
    let mut product = 1.0;
    for k in 0..omega {
        let pop = orbit[k].x + orbit[k].y;
        product *= growth_factor(&dp.at(k), phi, psi, orbit[(k + 1) % omega], pop)?;
    }
    Ok(product)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContinuousWindow {
    /// Time at which the scan starts. Defaults to 0 when the disease-free
    /// solution is an explicit equilibrium, otherwise to `40 / min μ`.
    pub t_start: Option<f64>,
    /// Defaults to twice the larger of `λ` and the longest declared period.
    pub scan_len: Option<f64>,
    /// Defaults to `min(0.05, λ/64) / 4`.
    pub quad_step: Option<f64>,
}

pub fn default_quad_step(lambda: f64) -> f64 {
    0.05f64.min(lambda / 64.0) / 4.0
}

/// Composite Simpson over equally spaced samples; `values.len()` must be odd.
pub(crate) fn simpson(values: &[f64], step: f64) -> f64 {
    debug_assert!(values.len() % 2 == 1 && values.len() >= 3);
    let last = values.len() - 1;
    let mut acc = values[0] + values[last];
    for (j, v) in values.iter().enumerate().take(last).skip(1) {
        acc += if j % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * step / 3.0
}

/// Disease-free equilibrium of the auxiliary system for constant Λ, μ, η, p.
pub fn demographic_equilibrium(lambda: f64, mu: f64, eta: f64, p: f64) -> AuxState {
    let d = mu * (mu + eta + p);
    AuxState::new(lambda * (mu + eta) / d, p * lambda / d)
}

fn aux_rhs(c: &Coefficients, a: AuxState) -> [f64; 2] {
    [
        c.lambda - (c.mu + c.p) * a.x + c.eta * a.y,
        c.p * a.x - (c.mu + c.eta) * a.y,
    ]
}

fn aux_rk4(schedules: &ScheduleSet, t: f64, h: f64, a: AuxState) -> AuxState {
    let shift = |a: AuxState, d: [f64; 2], s: f64| AuxState::new(a.x + s * d[0], a.y + s * d[1]);
    let mid = schedules.at(t + 0.5 * h);
    let k1 = aux_rhs(&schedules.at(t), a);
    let k2 = aux_rhs(&mid, shift(a, k1, 0.5 * h));
    let k3 = aux_rhs(&mid, shift(a, k2, 0.5 * h));
    let k4 = aux_rhs(&schedules.at(t + h), shift(a, k3, h));
    AuxState::new(
        a.x + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        a.y + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    )
}

/// Continuous thresholds: min/max of `∫_t^{t+λ} β g_φ(x*) + σ g_ψ(y*) − μ − α − γ ds`
/// over window starts `t` on the quadrature grid.
pub fn continuous_thresholds(
    schedules: &ScheduleSet,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    lambda: f64,
    window: &ContinuousWindow,
) -> Result<ThresholdReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!(
            "continuous window must be positive, got {lambda}"
        )));
    }
    let requested = window.quad_step.unwrap_or_else(|| default_quad_step(lambda));
    if !(requested > 0.0) || requested > lambda / 16.0 {
        return Err(Error::config(
            "quad_step",
            format!(
                "quadrature step {requested} must be positive and at most λ/16 = {}",
                lambda / 16.0
            ),
        ));
    }
    let mut m = (lambda / requested).ceil() as usize;
    m += m % 2;
    let step = lambda / m as f64;

    let period = schedules.common_period().unwrap_or(lambda);
    let scan_len = window.scan_len.unwrap_or(2.0 * lambda.max(period));
    if !(scan_len >= lambda) {
        return Err(Error::domain(format!(
            "scan length {scan_len} is shorter than λ = {lambda}"
        )));
    }
    let explicit_equilibrium = schedules.has_constant_demography();
    let t_start = match window.t_start {
        Some(t) if t >= 0.0 => t,
        Some(t) => return Err(Error::domain(format!("scan start must be nonnegative, got {t}"))),
        None if explicit_equilibrium => 0.0,
        None => {
            let mu_min = (0..=1000)
                .map(|i| schedules.get(Coefficient::Mu).value(0.1 * i as f64))
                .fold(f64::INFINITY, f64::min);
            if mu_min > 0.0 {
                (40.0 / mu_min).min(1e4)
            } else {
                1e4
            }
        }
    };
    let windows = (scan_len / step + 1e-9).floor() as usize + 1;
    let nodes = windows + m;

    let aux: Vec<AuxState> = if explicit_equilibrium {
        let c = schedules.at(0.0);
        vec![demographic_equilibrium(c.lambda, c.mu, c.eta, c.p); nodes]
    } else {
        let mut a = AuxState::new(1.0, 1.0);
        let pre = (t_start / step).ceil() as usize;
        if pre > 0 {
            let h = t_start / pre as f64;
            for k in 0..pre {
                a = aux_rk4(schedules, k as f64 * h, h, a);
            }
        }
        let mut out = Vec::with_capacity(nodes);
        for i in 0..nodes {
            out.push(a);
            a = aux_rk4(schedules, t_start + i as f64 * step, step, a);
        }
        out
    };

    let integrand = (0..nodes)
        .map(|i| {
            let t = t_start + i as f64 * step;
            let c = schedules.at(t);
            let pop = Some(aux[i].x + aux[i].y);
            Ok(
                c.beta * phi.d2_at_zero(aux[i].x, pop)? + c.sigma * psi.d2_at_zero(aux[i].y, pop)?
                    - c.mu
                    - c.alpha
                    - c.gamma,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let integrals: Vec<f64> = (0..windows).map(|w| simpson(&integrand[w..=w + m], step)).collect();
    Ok(finish(Mode::Continuous, lambda, integrals, t_start, scan_len, false))
}

#[derive(Clone, Debug, PartialEq)]
pub enum IndependenceOutcome {
    /// Largest pairwise difference of `r_lower` and `r_upper` across starts.
    Spread(f64),
    /// Attractivity of the auxiliary solution is not guaranteed.
    Skipped(String),
}

/// Compare discrete thresholds computed from several auxiliary starts.
pub fn independence_check(
    dp: &DiscreteParams,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    lambda: usize,
    starts: &[AuxState],
    burn_in: usize,
    scan: usize,
) -> Result<IndependenceOutcome> {
    if starts.len() < 2 {
        return Err(Error::domain("independence check needs at least two starts"));
    }
    let hyp = validate_hypotheses(dp, Horizons::default(), 0..(burn_in + scan).max(1))?;
    if !hyp.all_hold() {
        return Ok(IndependenceOutcome::Skipped(format!(
            "demographic hypotheses fail (max survival product {}, min recruitment {}, min vaccination {}); \
             the auxiliary solution need not be attractive",
            hyp.max_survival_product, hyp.min_recruitment_sum, hyp.min_vaccination_sum
        )));
    }
    let reports = starts
        .iter()
        .map(|&aux_start| {
            discrete_thresholds(
                dp,
                phi,
                psi,
                lambda,
                &DiscreteWindow {
                    burn_in,
                    scan,
                    aux_start,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spread: f64 = 0.0;
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            spread = spread
                .max((a.r_lower - b.r_lower).abs())
                .max((a.r_upper - b.r_upper).abs());
        }
    }
    Ok(IndependenceOutcome::Spread(spread))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(lo: f64, hi: f64) -> ThresholdReport {
        finish(Mode::Discrete, 0.0, vec![lo, hi], 0.0, 2.0, false)
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&report(0.5, 0.644), Mode::Discrete), Verdict::Extinction);
        assert_eq!(classify(&report(1.0, 1.0), Mode::Discrete), Verdict::Inconclusive);
        assert_eq!(classify(&report(3.4, 3.4), Mode::Continuous), Verdict::Permanence);
        assert_eq!(classify(&report(3.4, 3.4), Mode::Discrete), Verdict::Permanence);
        assert_eq!(classify(&report(-0.1, 0.2), Mode::Continuous), Verdict::Inconclusive);
        assert_eq!(classify(&report(0.0, 0.0), Mode::Continuous), Verdict::Inconclusive);
    }

    #[test]
    fn simpson_exact_for_cubics() {
        let step = 0.25;
        let values: Vec<f64> = (0..=8).map(|i| (i as f64 * step).powi(3)).collect();
        assert!((simpson(&values, step) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn constant_periodic_threshold() {
        let c = Coefficients {
            lambda: 0.5,
            mu: 0.3,
            p: 2.0 / 3.0,
            eta: 0.05,
            alpha: 0.05,
            beta: 0.3,
            sigma: 0.2,
            gamma: 0.3,
        };
        let dp = DiscreteParams::constant(1.0, c).unwrap();
        let f = IncidenceFn::mass_action();
        let eq = demographic_equilibrium(c.lambda, c.mu, c.eta, c.p);
        let expected = (1.0 + c.beta * eq.x + c.sigma * eq.y) / (1.0 + c.mu + c.alpha + c.gamma);
        let got = periodic_discrete_threshold(&dp, &f, &f, 1).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn scan_must_cover_window() {
        let dp = DiscreteParams::constant(
            1.0,
            Coefficients {
                lambda: 1.0,
                mu: 0.5,
                p: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        let f = IncidenceFn::mass_action();
        let w = DiscreteWindow {
            burn_in: 10,
            scan: 3,
            aux_start: AuxState::new(1.0, 1.0),
        };
        assert!(discrete_thresholds(&dp, &f, &f, 3, &w).is_err());
    }

    #[test]
    fn independence_skipped_without_mortality() {
        let dp = DiscreteParams::constant(
            1.0,
            Coefficients {
                lambda: 1.0,
                p: 0.1,
                beta: 0.2,
                ..Default::default()
            },
        )
        .unwrap();
        let f = IncidenceFn::mass_action();
        let starts = [AuxState::new(1.0, 1.0), AuxState::new(2.0, 3.0)];
        let out = independence_check(&dp, &f, &f, 2, &starts, 100, 100).unwrap();
        assert!(matches!(out, IndependenceOutcome::Skipped(_)));
        let same = [AuxState::new(1.0, 1.0), AuxState::new(1.0, 1.0)];
        let dp2 = DiscreteParams::constant(
            1.0,
            Coefficients {
                lambda: 1.0,
                mu: 0.2,
                p: 0.1,
                beta: 0.2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            independence_check(&dp2, &f, &f, 2, &same, 100, 100).unwrap(),
            IndependenceOutcome::Spread(0.0)
        );
    }
}
