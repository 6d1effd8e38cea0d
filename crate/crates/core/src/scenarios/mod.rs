//! Built-in scenarios, configuration files, observed data and end-to-end runs.

mod config;
mod observed;
mod run;

use std::f64::consts::PI;
use std::path::PathBuf;

pub use config::{
    load_config, parse_config, DenominatorConfig, IncidenceConfig, IncidenceKindConfig, ScenarioConfig, ScheduleConfig,
    SchedulesConfig, StateConfig,
};
pub use observed::{load_observed, parse_observed, ObservedSeries};
pub use run::{
    run_scenario, ObservedComparison, ResidualRow, RunOptions, ScenarioReport, StepRun, TrajectorySummary, VerdictCell,
};

use crate::consistency::{inconsistency_example, InconsistencyParams, Reference};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::incidence::{validate_incidence, IncidenceFn, IncidenceGrid};
use crate::schedules::{
    mickens_discretize, validate_hypotheses, Coefficient, DenominatorFn, Horizons, ParamSchedule, ScheduleSet,
};

/// A complete, validated model run description.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub schedules: ScheduleSet,
    pub incidence_phi: IncidenceFn,
    pub incidence_psi: IncidenceFn,
    pub denominator: DenominatorFn,
    pub h_values: Vec<f64>,
    /// Threshold window in model time units.
    pub lambda: f64,
    pub t_end: f64,
    pub initial_state: State,
    pub observed: Option<ObservedSeries>,
    pub observed_path: Option<PathBuf>,
    pub notes: String,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h_values.is_empty() {
            return Err(Error::config("h_values", "at least one step size is required"));
        }
        if let Some(h) = self.h_values.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::config(
                "h_values",
                format!("step sizes must be positive, got {h}"),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config(
                "lambda",
                format!("window must be positive, got {}", self.lambda),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.lambda) {
            return Err(Error::config(
                "t_end",
                format!(
                    "end time must be finite and at least lambda = {}, got {}",
                    self.lambda, self.t_end
                ),
            ));
        }
        let st = self.initial_state;
        for (key, v) in [("S", st.s), ("I", st.i), ("R", st.r), ("V", st.v)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("initial_state.{key}"),
                    format!("must be nonnegative, got {v}"),
                ));
            }
        }
        self.denominator
            .validate()
            .map_err(|e| Error::config("denominator", e.to_string()))?;
        Ok(())
    }

    /// Human-readable findings from the hypothesis and incidence checks.
    /// Empty when everything holds.
    pub fn diagnostics(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for &h in &self.h_values {
            let dp = mickens_discretize(&self.schedules, h, &self.denominator)?;
            let hyp = validate_hypotheses(&dp, Horizons::default(), 0..2000)?;
            if !hyp.all_hold() {
                out.push(format!(
                    "h = {h}: demographic hypotheses fail (max survival product {}, min recruitment {}, min vaccination {})",
                    hyp.max_survival_product, hyp.min_recruitment_sum, hyp.min_vaccination_sum
                ));
            }
        }
        let extent = self.initial_state.total().max(1.0);
        for (key, f) in [("phi", &self.incidence_phi), ("psi", &self.incidence_psi)] {
            let report = validate_incidence(f, IncidenceGrid::square(extent))?;
            if !report.all_ok() {
                out.push(format!("incidence.{key}: sampled hypothesis violation {report:?}"));
            }
            out.extend(report.flags.iter().map(|flag| format!("incidence.{key}: {flag}")));
        }
        Ok(out)
    }

    pub fn references(&self) -> Vec<Reference> {
        published_references(&self.name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Extinction51,
    Persistence51,
    SaturatedExt,
    SaturatedPer,
    Inconsistency4,
    MeaslesFrance,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Extinction51,
        Builtin::Persistence51,
        Builtin::SaturatedExt,
        Builtin::SaturatedPer,
        Builtin::Inconsistency4,
        Builtin::MeaslesFrance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Extinction51 => "extinction_5_1",
            Builtin::Persistence51 => "persistence_5_1",
            Builtin::SaturatedExt => "saturated_5_1_ext",
            Builtin::SaturatedPer => "saturated_5_1_per",
            Builtin::Inconsistency4 => "inconsistency_4",
            Builtin::MeaslesFrance => "measles_france_5_2",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Builtin::Extinction51 => "seasonal mass-action model, b = 0.3, disease dies out",
            Builtin::Persistence51 => "seasonal mass-action model, b = 0.9, disease persists",
            Builtin::SaturatedExt => "seasonal model with saturated incidence SI/(1+0.7I), b = 0.3",
            Builtin::SaturatedPer => "seasonal model with saturated incidence SI/(1+0.7I), b = 0.9",
            Builtin::Inconsistency4 => {
                "forcing peaks between sampling instants; discrete and continuous verdicts differ"
            }
            Builtin::MeaslesFrance => "monthly measles model for France 2012-2016, standard incidence",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Builtin::ALL.into_iter().find(|b| b.name() == name).ok_or_else(|| {
            let names: Vec<&str> = Builtin::ALL.iter().map(|b| b.name()).collect();
            Error::config(
                "name",
                format!("unknown scenario `{name}`; valid names: {}", names.join(", ")),
            )
        })
    }

    pub fn spec(self) -> Result<ScenarioSpec> {
        let mass = IncidenceFn::mass_action;
        let spec = match self {
            Builtin::Extinction51 => seasonal(self, 0.3, mass())?,
            Builtin::Persistence51 => seasonal(self, 0.9, mass())?,
            Builtin::SaturatedExt => seasonal(self, 0.3, IncidenceFn::saturated(0.7)?)?,
            Builtin::SaturatedPer => seasonal(self, 0.9, IncidenceFn::saturated(0.7)?)?,
            Builtin::Inconsistency4 => inconsistency_example(InconsistencyParams::default())?.spec,
            Builtin::MeaslesFrance => measles_spec(true)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn builtin(name: &str) -> Result<ScenarioSpec> {
    Builtin::from_name(name)?.spec()
}

/// `b (1 + 0.3 cos(π t / 2))` for both transmission rates, period 4.
fn seasonal(which: Builtin, b: f64, incidence: IncidenceFn) -> Result<ScenarioSpec> {
    let schedules = ScheduleSet::new(vec![
        ParamSchedule::constant(Coefficient::Lambda, 0.5)?,
        ParamSchedule::constant(Coefficient::Mu, 0.3)?,
        ParamSchedule::constant(Coefficient::P, 2.0 / 3.0)?,
        ParamSchedule::constant(Coefficient::Eta, 0.05)?,
        ParamSchedule::constant(Coefficient::Alpha, 0.05)?,
        ParamSchedule::constant(Coefficient::Gamma, 0.3)?,
        ParamSchedule::harmonic(Coefficient::Beta, b, 0.3 * b, PI / 2.0, 0.0)?,
        ParamSchedule::harmonic(Coefficient::Sigma, b, 0.3 * b, PI / 2.0, 0.0)?,
    ])?;
    let notes = match which {
        Builtin::Extinction51 | Builtin::SaturatedExt => {
            "Threshold window 4 with phi(h) = h + 0.2 h^2. The explicit step bound for this parameter set \
             evaluates to about 0.509; a bound of 0.05 is also quoted in the literature for it."
        }
        _ => {
            "Threshold window 4 with phi(h) = h + 0.2 h^2. The literature rounds the h = 0.5 discrete \
             threshold to 10.2; the window product evaluates to about 10.28."
        }
    };
    Ok(ScenarioSpec {
        name: which.name().into(),
        schedules,
        incidence_phi: incidence.clone(),
        incidence_psi: incidence,
        denominator: DenominatorFn::quadratic(0.2)?,
        h_values: vec![4.0, 2.0, 1.0, 0.5],
        lambda: 4.0,
        t_end: 200.0,
        initial_state: State::new(1.0, 0.5, 0.0, 0.5)?,
        observed: None,
        observed_path: None,
        notes: notes.into(),
    })
}

/// Months of seasonal measles forcing before `β` settles at 2.7.
pub const MEASLES_SEASONAL_MONTHS: usize = 72;

/// `3.8 + 10 sin((n+1)π/6)` for the first 72 months, then 2.7.
pub fn measles_beta(n: usize) -> f64 {
    if n / 12 <= 5 {
        3.8 + 10.0 * ((n as f64 + 1.0) * PI / 6.0).sin()
    } else {
        2.7
    }
}

pub const MEASLES_CLAMP_NOTE: &str = "beta_n = 3.8 + 10 sin((n+1) pi/6) is negative in some months; \
     those values are clamped at 0 so that all coefficients stay nonnegative";

/// The monthly measles scenario. With `clamp = false` the raw, partly
/// negative `β_n` is kept; that variant violates the model hypotheses.
pub fn measles_spec(clamp: bool) -> Result<ScenarioSpec> {
    let breakpoints: Vec<f64> = (0..=MEASLES_SEASONAL_MONTHS).map(|n| n as f64).collect();
    let values: Vec<f64> = (0..=MEASLES_SEASONAL_MONTHS)
        .map(|n| {
            if clamp {
                measles_beta(n).max(0.0)
            } else {
                measles_beta(n)
            }
        })
        .collect();
    let beta = if clamp {
        ParamSchedule::table(Coefficient::Beta, breakpoints, values)?
    } else {
        ParamSchedule::table_unchecked(Coefficient::Beta, breakpoints, values)?
    };
    let schedules = ScheduleSet::new(vec![
        ParamSchedule::constant(Coefficient::Lambda, 50_000.0)?,
        ParamSchedule::constant(Coefficient::Mu, 0.0007)?,
        ParamSchedule::constant(Coefficient::P, 0.001)?,
        ParamSchedule::constant(Coefficient::Eta, 0.001)?,
        ParamSchedule::constant(Coefficient::Alpha, 0.000375)?,
        ParamSchedule::constant(Coefficient::Gamma, 0.957)?,
        ParamSchedule::constant(Coefficient::Sigma, 0.03)?,
        beta,
    ])?;
    let notes = if clamp {
        format!("Monthly steps (h = 1, phi(h) = h). {MEASLES_CLAMP_NOTE}.")
    } else {
        "Monthly steps (h = 1, phi(h) = h). UNCLAMPED: beta_n takes negative values and the model \
         hypotheses do not hold."
            .to_string()
    };
    Ok(ScenarioSpec {
        name: if clamp {
            Builtin::MeaslesFrance.name().into()
        } else {
            format!("{}_unclamped", Builtin::MeaslesFrance.name())
        },
        schedules,
        incidence_phi: IncidenceFn::standard(),
        incidence_psi: IncidenceFn::standard(),
        denominator: DenominatorFn::Identity,
        h_values: vec![1.0],
        lambda: 12.0,
        t_end: 60.0,
        initial_state: State::new(7.20428e6, 106.0, 1.81918e4, 5.84372e7)?,
        observed: None,
        observed_path: None,
        notes,
    })
}

/// Literature values for built-in scenarios that the computation is
/// checked or contrasted against.
pub fn published_references(name: &str) -> Vec<Reference> {
    match name {
        "extinction_5_1" => vec![
            Reference::new("published continuous upper threshold, window 4", -0.6),
            Reference::new("published discrete threshold, window 0, h = 4", 1.0),
            Reference::new("published discrete upper threshold, window 3, h = 1", 0.644),
            Reference::new("published discrete threshold, window 7, h = 0.5", 0.601),
            Reference::new("published step bound h_max", 0.05),
        ],
        "persistence_5_1" => vec![
            Reference::new("published continuous lower threshold, window 4", 3.4),
            Reference::new("published discrete lower threshold, window 1, h = 2", 3.201),
            Reference::new("published discrete lower threshold, window 3, h = 1", 5.9),
            Reference::new("published discrete lower threshold, window 7, h = 0.5", 10.2),
        ],
        "inconsistency_4" => vec![
            Reference::new("closed-form continuous lower threshold, window 1", 0.45),
            Reference::new("published closed-form discrete threshold, h = 1/6", 0.6875),
        ],
        "measles_france_5_2" => vec![Reference::new("initial infectives", 106.0)],
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_examples() {
        let ext = builtin("extinction_5_1").unwrap();
        assert!((ext.schedules.get(Coefficient::Beta).eval(0.0).unwrap() - 0.39).abs() < 1e-15);
        let measles = builtin("measles_france_5_2").unwrap();
        assert_eq!(measles.schedules.get(Coefficient::Beta).eval(72.0).unwrap(), 2.7);
        assert_eq!(measles.initial_state.i, 106.0);
        assert!(measles.notes.contains("clamped"));
        let inc = builtin("inconsistency_4").unwrap();
        let lambda = inc.schedules.get(Coefficient::Lambda);
        assert!(lambda.is_constant());
        assert_eq!(lambda.eval(0.0).unwrap(), 0.25);
    }

    #[test]
    fn unknown_builtin_lists_names() {
        let err = builtin("nope").unwrap_err();
        assert!(err.is_configuration());
        assert!(err.to_string().contains("measles_france_5_2"));
    }

    #[test]
    fn measles_beta_is_negative_without_clamp() {
        assert!((0..72).any(|n| measles_beta(n) < 0.0));
        let raw = measles_spec(false).unwrap();
        assert!(raw.schedules.get(Coefficient::Beta).eval(8.5).unwrap() < 0.0);
        let clamped = measles_spec(true).unwrap();
        assert_eq!(clamped.schedules.get(Coefficient::Beta).eval(8.5).unwrap(), 0.0);
    }

    #[test]
    fn builtins_pass_checks() {
        for b in Builtin::ALL {
            let spec = b.spec().unwrap();
            let diags = spec.diagnostics().unwrap();
            if b == Builtin::MeaslesFrance {
                assert!(diags.iter().all(|d| d.contains("incidence.")), "{diags:?}");
            } else {
                assert!(diags.is_empty(), "{}: {diags:?}", b.name());
            }
        }
    }

    #[test]
    fn invalid_spec_fields() {
        let mut spec = builtin("extinction_5_1").unwrap();
        spec.h_values.clear();
        assert!(matches!(spec.validate(), Err(Error::Config { field, .. }) if field == "h_values"));
        let mut spec = builtin("extinction_5_1").unwrap();
        spec.t_end = 1.0;
        assert!(matches!(spec.validate(), Err(Error::Config { field, .. }) if field == "t_end"));
    }
}
