//! Step-size bounds guaranteeing that the discrete threshold verdict agrees
//! with the continuous one, for constant Λ, μ, η, p.
//!
//! With `(a, b)` the disease-free equilibrium and
//! `f(t) = β(t) g_φ(a) + σ(t) g_ψ(b) − μ − α(t) − γ(t)`, the bounds are
//! `h^u = −R_C^u(λ) / (sup|f′| (λ+1))` and `h^ℓ = R_C^ℓ(λ) / (sup|f′| (λ+1))`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{AuxState, State};
use crate::error::{Error, Result};
use crate::incidence::IncidenceFn;
use crate::scenarios::ScenarioSpec;
use crate::schedules::{mickens_discretize, Coefficient, DenominatorFn, ParamSchedule, ScheduleSet};
use crate::thresholds::{
    continuous_thresholds, demographic_equilibrium, discrete_thresholds, recommended_burn_in, ContinuousWindow,
    DiscreteWindow, ThresholdReport, Verdict,
};

const FD_STEP: f64 = 1e-5;

/// The forcing function `f` and its derivative.
#[derive(Clone, Debug)]
pub struct ForcingFn {
    schedules: ScheduleSet,
    equilibrium: AuxState,
    phi_a: f64,
    psi_b: f64,
    mu: f64,
    analytic: bool,
}

impl ForcingFn {
    pub fn value(&self, t: f64) -> f64 {
        let c = self.schedules.at(t);
        c.beta * self.phi_a + c.sigma * self.psi_b - self.mu - c.alpha - c.gamma
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if self.analytic {
            let d = |c: Coefficient| self.schedules.get(c).derivative_at(t).unwrap_or(0.0);
            return d(Coefficient::Beta) * self.phi_a + d(Coefficient::Sigma) * self.psi_b
                - d(Coefficient::Alpha)
                - d(Coefficient::Gamma);
        }
        // central difference with one Richardson step; shifted right near t = 0
        let t = t.max(2.0 * FD_STEP);
        let diff = |h: f64| (self.value(t + h) - self.value(t - h)) / (2.0 * h);
        (4.0 * diff(FD_STEP / 2.0) - diff(FD_STEP)) / 3.0
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    pub fn equilibrium(&self) -> AuxState {
        self.equilibrium
    }
}

/// Build `f` for schedules with constant Λ, μ, η, p and differentiable β, σ, α, γ.
pub fn build_f(schedules: &ScheduleSet, phi: &IncidenceFn, psi: &IncidenceFn) -> Result<ForcingFn> {
    for c in [Coefficient::Lambda, Coefficient::Mu, Coefficient::Eta, Coefficient::P] {
        if !schedules.get(c).is_constant() {
            return Err(Error::NotApplicable(format!(
                "the consistency bound needs a constant `{c}` schedule"
            )));
        }
    }
    let forced = [
        Coefficient::Beta,
        Coefficient::Sigma,
        Coefficient::Alpha,
        Coefficient::Gamma,
    ];
    if let Some(c) = forced.iter().find(|c| !schedules.get(**c).is_differentiable()) {
        return Err(Error::NotApplicable(format!(
            "`{c}` is a step function without a bounded derivative"
        )));
    }
    let c0 = schedules.at(0.0);
    if !(c0.mu > 0.0) {
        return Err(Error::NotApplicable("the disease-free equilibrium needs μ > 0".into()));
    }
    let eq = demographic_equilibrium(c0.lambda, c0.mu, c0.eta, c0.p);
    let pop = Some(eq.x + eq.y);
    let analytic = forced.iter().all(|c| schedules.get(*c).derivative_at(0.0).is_some());
    Ok(ForcingFn {
        schedules: schedules.clone(),
        equilibrium: eq,
        phi_a: phi.d2_at_zero(eq.x, pop)?,
        psi_b: psi.d2_at_zero(eq.y, pop)?,
        mu: c0.mu,
        analytic,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupReport {
    pub value: f64,
    pub argmax: f64,
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

/// `max |f′|` on a uniform grid of `points` samples over `[start, end]`.
pub fn sup_abs_fprime(fprime: impl Fn(f64) -> f64, start: f64, end: f64, points: usize) -> Result<SupReport> {
    if points < 1000 {
        return Err(Error::domain("sup|f′| needs at least 1000 grid points"));
    }
    if !(end > start && start >= 0.0) {
        return Err(Error::domain(format!("invalid scan range [{start}, {end}]")));
    }
    let mut best = SupReport {
        value: 0.0,
        argmax: start,
        start,
        end,
        points,
    };
    for i in 0..points {
        let t = start + (end - start) * i as f64 / (points - 1) as f64;
        let v = fprime(t).abs();
        if v > best.value {
            best.value = v;
            best.argmax = t;
        }
    }
    Ok(best)
}

/// A step-size bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum HMax {
    Bounded(f64),
    /// `sup|f′| = 0`: the coefficients are constant and the bound is vacuous.
    Unbounded,
    /// The sign condition on the continuous threshold fails.
    NotApplicable,
}

impl HMax {
    pub fn value(self) -> Option<f64> {
        match self {
            HMax::Bounded(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bound {
    /// Extinction side, requires `R_C^u < 0`.
    Upper,
    /// Permanence side, requires `R_C^ℓ > 0`.
    Lower,
}

pub fn h_max(r_c: f64, sup_abs_fprime: f64, lambda: f64, bound: Bound) -> HMax {
    let margin = match bound {
        Bound::Upper => -r_c,
        Bound::Lower => r_c,
    };
    if !(margin > 0.0) {
        HMax::NotApplicable
    } else if sup_abs_fprime == 0.0 {
        HMax::Unbounded
    } else {
        HMax::Bounded(margin / (sup_abs_fprime * (lambda + 1.0)))
    }
}

/// A labelled number shown alongside computed values, e.g. a literature
/// figure that the computation does not reproduce.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reference {
    pub label: String,
    pub value: f64,
}

impl Reference {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Reference {
            label: label.into(),
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub lambda_steps: usize,
    pub r_lower: f64,
    pub r_upper: f64,
    pub discrete: Verdict,
    pub continuous: Verdict,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub lambda: f64,
    pub r_c_lower: f64,
    pub r_c_upper: f64,
    pub continuous_verdict: Verdict,
    pub sup_abs_fprime: f64,
    pub sup_argmax: f64,
    pub fprime_analytic: bool,
    pub h_max_upper: HMax,
    pub h_max_lower: HMax,
    pub equilibrium: (f64, f64),
    /// `(t, f(t))` over the scanned range.
    pub f_samples: Vec<(f64, f64)>,
    pub references: Vec<Reference>,
    pub warnings: Vec<String>,
    pub sweep: Option<Vec<SweepRow>>,
}

impl ConsistencyReport {
    /// The bound matching the continuous verdict, if any.
    pub fn active_h_max(&self) -> HMax {
        match self.continuous_verdict {
            Verdict::Extinction => self.h_max_upper,
            Verdict::Permanence => self.h_max_lower,
            Verdict::Inconclusive => HMax::NotApplicable,
        }
    }
}

/// Horizon used for aperiodic schedules when approximating `sup_{t≥0}`.
pub const APERIODIC_SUP_HORIZON: f64 = 100.0;
const SUP_POINTS: usize = 100_000;

/// Continuous thresholds, `sup|f′|` and both step bounds.
pub fn analyze(
    schedules: &ScheduleSet,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    lambda: f64,
) -> Result<ConsistencyReport> {
    let f = build_f(schedules, phi, psi)?;
    let continuous = continuous_thresholds(schedules, phi, psi, lambda, &ContinuousWindow::default())?;
    let mut warnings = Vec::new();
    let horizon = match schedules.common_period() {
        Some(p) => p,
        None => {
            if schedules.iter().any(|s| !s.is_constant()) {
                warnings.push(format!(
                    "schedules are aperiodic; sup|f′| is taken over [0, {APERIODIC_SUP_HORIZON}] only"
                ));
            }
            APERIODIC_SUP_HORIZON
        }
    };
    let sup = sup_abs_fprime(|t| f.derivative(t), 0.0, horizon, SUP_POINTS)?;
    let eq = f.equilibrium();
    let samples = 200;
    let f_samples = (0..=samples)
        .map(|i| {
            let t = horizon * i as f64 / samples as f64;
            (t, f.value(t))
        })
        .collect();
    Ok(ConsistencyReport {
        lambda,
        r_c_lower: continuous.r_lower,
        r_c_upper: continuous.r_upper,
        continuous_verdict: continuous.verdict,
        sup_abs_fprime: sup.value,
        sup_argmax: sup.argmax,
        fprime_analytic: f.is_analytic(),
        h_max_upper: h_max(continuous.r_upper, sup.value, lambda, Bound::Upper),
        h_max_lower: h_max(continuous.r_lower, sup.value, lambda, Bound::Lower),
        equilibrium: (eq.x, eq.y),
        f_samples,
        references: Vec::new(),
        warnings,
        sweep: None,
    })
}

/// `⌊λ/h⌋`, tolerant to the representation error of `λ/h`.
pub fn window_steps(lambda: f64, h: f64) -> usize {
    (lambda / h + 1e-9).floor().max(0.0) as usize
}

/// How a window of length `λ` in model time becomes a discrete window of
/// `λ_D + 1` factors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowRule {
    /// `λ_D + 1` steps span time `λ`: `λ_D = ⌈λ/h⌉ − 1` (at least 0).
    #[default]
    Span,
    /// `λ_D = ⌊λ/h⌋`, the window of the step-size bound.
    Floor,
}

impl WindowRule {
    pub fn steps(self, lambda: f64, h: f64) -> usize {
        match self {
            WindowRule::Floor => window_steps(lambda, h),
            WindowRule::Span => ((lambda / h - 1e-9).ceil() - 1.0).max(0.0) as usize,
        }
    }
}

impl std::str::FromStr for WindowRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "span" => Ok(WindowRule::Span),
            "floor" => Ok(WindowRule::Floor),
            other => Err(Error::config(
                "window_rule",
                format!("unknown window rule `{other}` (span, floor)"),
            )),
        }
    }
}

/// Discrete thresholds at step `h` with window `⌊λ/h⌋` and an automatic
/// burn-in and scan.
pub fn discrete_at(
    schedules: &ScheduleSet,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    denominator: &DenominatorFn,
    lambda_steps: usize,
    h: f64,
) -> Result<ThresholdReport> {
    let dp = mickens_discretize(schedules, h, denominator)?;
    let period_steps = dp.step_period().unwrap_or(0);
    let window = DiscreteWindow {
        burn_in: recommended_burn_in(&dp),
        scan: DiscreteWindow::default()
            .scan
            .max(2 * (lambda_steps + 1) + period_steps),
        ..DiscreteWindow::default()
    };
    discrete_thresholds(&dp, phi, psi, lambda_steps, &window)
}

/// Compare discrete and continuous verdicts at `count` log-spaced steps
/// `h_k = h_max · 10^{-2k/count}`, `k = 1..=count`, all strictly below `h_max`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    schedules: &ScheduleSet,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    denominator: &DenominatorFn,
    lambda: f64,
    h_max: f64,
    continuous: Verdict,
    count: usize,
) -> Result<Vec<SweepRow>> {
    (1..=count)
        .map(|k| {
            let h = h_max * 10f64.powf(-2.0 * k as f64 / count as f64);
            let lambda_steps = window_steps(lambda, h);
            let report = discrete_at(schedules, phi, psi, denominator, lambda_steps, h)?;
            Ok(SweepRow {
                h,
                lambda_steps,
                r_lower: report.r_lower,
                r_upper: report.r_upper,
                discrete: report.verdict,
                continuous,
                agrees: report.verdict == continuous,
            })
        })
        .collect()
}

/// Period-one example whose transmission peaks fall between the sampling
/// instants `n/L` of the discrete model.
#[derive(Clone, Debug)]
pub struct InconsistencyExample {
    pub spec: ScenarioSpec,
    pub step: f64,
    /// `d(1 + c/2) − μ − α − γ`.
    pub continuous_closed_form: f64,
    /// `(1 + d/L) / (1 + μ + α + γ)`, the published discrete value.
    pub published_discrete_closed_form: f64,
    /// `c > 2(μ + γ + α − d)/d`.
    pub continuous_condition: bool,
    /// `d < μ + α + γ`.
    pub discrete_condition: bool,
    /// Both closed forms predict disagreement (continuous permanence,
    /// discrete extinction).
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InconsistencyParams {
    pub l: u32,
    pub d: f64,
    pub c: f64,
    pub mu: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub eta: f64,
    pub p: f64,
}

impl Default for InconsistencyParams {
    fn default() -> Self {
        InconsistencyParams {
            l: 6,
            d: 0.6,
            c: 1.5,
            mu: 0.25,
            gamma: 0.3,
            alpha: 0.05,
            eta: 0.05,
            p: 2.0 / 3.0,
        }
    }
}

/// `d[1 + c sin²(2πLt)(1 + cos 2πt)]` with its analytic derivative.
pub fn squared_sine_forcing(coefficient: Coefficient, l: u32, d: f64, c: f64) -> Result<ParamSchedule> {
    let lf = l as f64;
    let f = Arc::new(move |t: f64| {
        let s = (2.0 * PI * lf * t).sin();
        d * (1.0 + c * s * s * (1.0 + (2.0 * PI * t).cos()))
    });
    let df = Arc::new(move |t: f64| {
        let s = (2.0 * PI * lf * t).sin();
        d * c
            * (2.0 * PI * lf * (4.0 * PI * lf * t).sin() * (1.0 + (2.0 * PI * t).cos())
                - 2.0 * PI * s * s * (2.0 * PI * t).sin())
    });
    ParamSchedule::custom(
        coefficient,
        format!("{d}*(1+{c}*sin^2(2*pi*{l}*t)*(1+cos(2*pi*t)))"),
        f,
        Some(df),
        Some(1.0),
    )
}

pub fn inconsistency_example(params: InconsistencyParams) -> Result<InconsistencyExample> {
    let InconsistencyParams {
        l,
        d,
        c,
        mu,
        gamma,
        alpha,
        eta,
        p,
    } = params;
    if l == 0 {
        return Err(Error::domain("L must be a positive integer"));
    }
    for (name, v) in [
        ("d", d),
        ("mu", mu),
        ("gamma", gamma),
        ("alpha", alpha),
        ("eta", eta),
        ("p", p),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must be nonnegative, got {c}")));
    }
    let schedules = ScheduleSet::new(vec![
        ParamSchedule::constant(Coefficient::Lambda, mu)?,
        ParamSchedule::constant(Coefficient::Mu, mu)?,
        ParamSchedule::constant(Coefficient::P, p)?,
        ParamSchedule::constant(Coefficient::Eta, eta)?,
        ParamSchedule::constant(Coefficient::Alpha, alpha)?,
        ParamSchedule::constant(Coefficient::Gamma, gamma)?,
        squared_sine_forcing(Coefficient::Beta, l, d, c)?,
        squared_sine_forcing(Coefficient::Sigma, l, d, c)?,
    ])?;
    let step = 1.0 / l as f64;
    let removal = mu + alpha + gamma;
    let continuous_closed_form = d * (1.0 + c / 2.0) - removal;
    let published_discrete_closed_form = (1.0 + d / l as f64) / (1.0 + removal);
    let spec = ScenarioSpec {
        name: "inconsistency_4".into(),
        schedules,
        incidence_phi: IncidenceFn::mass_action(),
        incidence_psi: IncidenceFn::mass_action(),
        denominator: DenominatorFn::Identity,
        h_values: vec![step],
        lambda: 1.0,
        t_end: 50.0,
        initial_state: State::new(0.5, 0.1, 0.0, 0.4)?,
        observed: None,
        observed_path: None,
        notes: format!(
            "Period-1 forcing sampled at its minima t = n/{l}. Closed forms: continuous threshold {continuous_closed_form}, \
             published discrete threshold {published_discrete_closed_form}; the window product evaluated literally \
             uses per-step ratios (1 + d h)/(1 + (mu + alpha + gamma) h) and is reported separately."
        ),
    };
    Ok(InconsistencyExample {
        spec,
        step,
        continuous_closed_form,
        published_discrete_closed_form,
        continuous_condition: c > 2.0 / d * (removal - d),
        discrete_condition: d < removal,
        flagged: continuous_closed_form > 0.0 && published_discrete_closed_form < 1.0,
    })
}
