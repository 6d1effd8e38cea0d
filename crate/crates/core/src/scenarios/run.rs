use serde::Serialize;

use super::ScenarioSpec;
use crate::consistency::{analyze, sweep, ConsistencyReport, HMax, Reference, WindowRule};
use crate::dynamics::{integrate_continuous, simulate_discrete, Method, State, Trajectory};
use crate::error::{Error, Result};
use crate::schedules::mickens_discretize;
use crate::thresholds::{
    continuous_thresholds, discrete_thresholds, recommended_burn_in, ContinuousWindow, DiscreteWindow, ThresholdReport,
    Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Overrides the automatic discrete burn-in.
    pub burn_in: Option<usize>,
    /// Overrides the automatic discrete scan length.
    pub scan: Option<usize>,
    /// Overrides the spec's threshold window.
    pub lambda: Option<f64>,
    /// Upper bound on the RK4 reference step.
    pub reference_step: f64,
    /// Run the step-size sweep below the consistency bound.
    pub sweep: bool,
    pub window_rule: WindowRule,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            burn_in: None,
            scan: None,
            lambda: None,
            reference_step: 0.01,
            sweep: false,
            window_rule: WindowRule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub method: Method,
    pub h: f64,
    pub steps: usize,
    pub final_state: State,
    pub max_i: f64,
    pub min_component: f64,
    pub first_negative: Option<usize>,
    /// `max_k |I_k − I_ref(t_k)|` against the RK4 reference, when the grids align.
    pub sup_dev_i: Option<f64>,
}

impl TrajectorySummary {
    fn of(tr: &Trajectory, h: f64, reference: &Trajectory) -> Self {
        TrajectorySummary {
            method: tr.method,
            h,
            steps: tr.states.len() - 1,
            final_state: *tr.last(),
            max_i: tr.infectives().fold(0.0, f64::max),
            min_component: tr
                .states
                .iter()
                .flat_map(|s| s.components())
                .fold(f64::INFINITY, f64::min),
            first_negative: tr.first_negative,
            sup_dev_i: tr.sup_deviation_i(reference).ok(),
        }
    }

    pub fn negativity_flag(&self) -> bool {
        self.first_negative.is_some() || self.min_component < 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRun {
    pub h: f64,
    pub phi_h: f64,
    pub lambda_steps: usize,
    #[serde(skip)]
    pub nsfd: Trajectory,
    #[serde(skip)]
    pub euler: Trajectory,
    pub nsfd_summary: TrajectorySummary,
    pub euler_summary: TrajectorySummary,
    #[serde(skip)]
    pub discrete: std::result::Result<ThresholdReport, String>,
}

/// One cell of the verdict matrix; `h` is absent for the continuous model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictCell {
    pub method: String,
    pub h: Option<f64>,
    pub verdict: Option<Verdict>,
    pub r_lower: Option<f64>,
    pub r_upper: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub t: f64,
    pub model: f64,
    pub observed: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservedComparison {
    pub label: String,
    pub h: f64,
    pub rows: Vec<ResidualRow>,
    pub rms: Option<f64>,
    /// Observed times outside the simulated grid.
    pub unmatched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub lambda: f64,
    pub per_h: Vec<StepRun>,
    pub continuous: ThresholdReport,
    #[serde(skip)]
    pub rk4: Trajectory,
    pub consistency: Option<ConsistencyReport>,
    pub consistency_note: Option<String>,
    pub verdicts: Vec<VerdictCell>,
    /// Steps whose discrete verdict differs from a definite continuous verdict.
    pub inconsistent_steps: Vec<f64>,
    pub inconsistency: bool,
    pub residuals: Option<ObservedComparison>,
    pub references: Vec<Reference>,
    pub notes: String,
}

/// Reference step: the largest value not above `bound` dividing the smallest `h`.
fn reference_step(h_values: &[f64], bound: f64) -> f64 {
    let h_min = h_values.iter().copied().fold(f64::INFINITY, f64::min);
    h_min / (h_min / bound - 1e-9).ceil().max(1.0)
}

pub fn run_scenario(spec: &ScenarioSpec, options: &RunOptions) -> Result<ScenarioReport> {
    spec.validate()?;
    if !(options.reference_step > 0.0) {
        return Err(Error::config("reference_step", "must be positive"));
    }
    let lambda = options.lambda.unwrap_or(spec.lambda);
    let (phi, psi) = (&spec.incidence_phi, &spec.incidence_psi);

    let h_ref = reference_step(&spec.h_values, options.reference_step);
    let rk4 = integrate_continuous(
        &spec.schedules,
        phi,
        psi,
        spec.initial_state,
        spec.t_end,
        h_ref,
        Method::Rk4,
    )?;

    let mut per_h = Vec::with_capacity(spec.h_values.len());
    for &h in &spec.h_values {
        let dp = mickens_discretize(&spec.schedules, h, &spec.denominator)?;
        let n_steps = ((spec.t_end / h).round() as usize).max(1);
        let nsfd = simulate_discrete(&dp, phi, psi, spec.initial_state, n_steps)?;
        let euler = integrate_continuous(
            &spec.schedules,
            phi,
            psi,
            spec.initial_state,
            spec.t_end,
            h,
            Method::Euler,
        )?;
        let lambda_steps = options.window_rule.steps(lambda, h);
        let period_steps = dp.step_period().unwrap_or(0);
        let window = DiscreteWindow {
            burn_in: options.burn_in.unwrap_or_else(|| recommended_burn_in(&dp)),
            scan: options.scan.unwrap_or_else(|| {
                DiscreteWindow::default()
                    .scan
                    .max(2 * (lambda_steps + 1) + period_steps)
            }),
            ..DiscreteWindow::default()
        };
        let discrete = discrete_thresholds(&dp, phi, psi, lambda_steps, &window).map_err(|e| e.to_string());
        per_h.push(StepRun {
            h,
            phi_h: dp.denominator_value().unwrap_or(h),
            lambda_steps,
            nsfd_summary: TrajectorySummary::of(&nsfd, h, &rk4),
            euler_summary: TrajectorySummary::of(&euler, h, &rk4),
            nsfd,
            euler,
            discrete,
        });
    }

    let continuous = continuous_thresholds(&spec.schedules, phi, psi, lambda, &ContinuousWindow::default())?;

    let references = spec.references();
    let (consistency, consistency_note) = if spec.schedules.has_constant_demography() {
        match analyze(&spec.schedules, phi, psi, lambda) {
            Ok(mut report) => {
                report.references = references.clone();
                if options.sweep {
                    if let HMax::Bounded(bound) = report.active_h_max() {
                        report.sweep = Some(sweep(
                            &spec.schedules,
                            phi,
                            psi,
                            &spec.denominator,
                            lambda,
                            bound,
                            report.continuous_verdict,
                            16,
                        )?);
                    }
                }
                (Some(report), None)
            }
            Err(Error::NotApplicable(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        }
    } else {
        (
            None,
            Some("recruitment, mortality or vaccination rates vary in time".to_string()),
        )
    };

    let mut verdicts: Vec<VerdictCell> = per_h
        .iter()
        .map(|run| match &run.discrete {
            Ok(r) => VerdictCell {
                method: "discrete".into(),
                h: Some(run.h),
                verdict: Some(r.verdict),
                r_lower: Some(r.r_lower),
                r_upper: Some(r.r_upper),
                error: None,
            },
            Err(e) => VerdictCell {
                method: "discrete".into(),
                h: Some(run.h),
                verdict: None,
                r_lower: None,
                r_upper: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    verdicts.push(VerdictCell {
        method: "continuous".into(),
        h: None,
        verdict: Some(continuous.verdict),
        r_lower: Some(continuous.r_lower),
        r_upper: Some(continuous.r_upper),
        error: None,
    });

    let inconsistent_steps: Vec<f64> = if continuous.verdict == Verdict::Inconclusive {
        Vec::new()
    } else {
        per_h
            .iter()
            .filter(|run| !matches!(&run.discrete, Ok(r) if r.verdict == continuous.verdict))
            .map(|run| run.h)
            .collect()
    };

    let residuals = spec.observed.as_ref().map(|obs| {
        let run = &per_h[0];
        let mut rows = Vec::new();
        let mut unmatched = 0;
        for (&t, &cases) in obs.times.iter().zip(&obs.cases) {
            let pos = t / run.h;
            let k = pos.round();
            match run.nsfd.states.get(k as usize) {
                Some(st) if k >= 0.0 && (pos - k).abs() < 1e-9 => rows.push(ResidualRow {
                    t,
                    model: st.i,
                    observed: cases,
                    residual: st.i - cases,
                }),
                _ => unmatched += 1,
            }
        }
        let rms = (!rows.is_empty())
            .then(|| (rows.iter().map(|r| r.residual * r.residual).sum::<f64>() / rows.len() as f64).sqrt());
        ObservedComparison {
            label: obs.label.clone(),
            h: run.h,
            rows,
            rms,
            unmatched,
        }
    });

    Ok(ScenarioReport {
        name: spec.name.clone(),
        lambda,
        inconsistency: !inconsistent_steps.is_empty(),
        inconsistent_steps,
        per_h,
        continuous,
        rk4,
        consistency,
        consistency_note,
        verdicts,
        residuals,
        references,
        notes: spec.notes.clone(),
    })
}
