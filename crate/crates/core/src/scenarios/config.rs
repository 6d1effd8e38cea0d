use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_observed, ScenarioSpec};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::incidence::{IncidenceFn, IncidenceKind};
use crate::schedules::{Coefficient, DenominatorFn, ParamSchedule, ScheduleKind, ScheduleSet};

/// On-disk scenario description (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub schedules: SchedulesConfig,
    pub incidence: IncidenceConfig,
    pub denominator: DenominatorConfig,
    pub h_values: Vec<f64>,
    pub lambda: f64,
    pub t_end: f64,
    pub initial_state: StateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_path: Option<PathBuf>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulesConfig {
    #[serde(rename = "Lambda")]
    pub lambda: ScheduleConfig,
    pub mu: ScheduleConfig,
    pub p: ScheduleConfig,
    pub eta: ScheduleConfig,
    pub alpha: ScheduleConfig,
    pub beta: ScheduleConfig,
    pub sigma: ScheduleConfig,
    pub gamma: ScheduleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant {
        value: f64,
    },
    Harmonic {
        base: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Left-closed step function starting at `t = 0`. `unchecked` skips the
    /// nonnegativity check.
    Table {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        unchecked: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidenceConfig {
    pub phi: IncidenceKindConfig,
    pub psi: IncidenceKindConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncidenceKindConfig {
    MassAction,
    Saturated { a: f64 },
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenominatorConfig {
    Identity,
    Quadratic { a: f64 },
    ExpDecay { c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

impl SchedulesConfig {
    fn get(&self, c: Coefficient) -> &ScheduleConfig {
        match c {
            Coefficient::Lambda => &self.lambda,
            Coefficient::Mu => &self.mu,
            Coefficient::P => &self.p,
            Coefficient::Eta => &self.eta,
            Coefficient::Alpha => &self.alpha,
            Coefficient::Beta => &self.beta,
            Coefficient::Sigma => &self.sigma,
            Coefficient::Gamma => &self.gamma,
        }
    }
}

impl ScheduleConfig {
    fn build(&self, c: Coefficient) -> Result<ParamSchedule> {
        match self.clone() {
            ScheduleConfig::Constant { value } => ParamSchedule::constant(c, value),
            ScheduleConfig::Harmonic {
                base,
                amplitude,
                omega,
                phase,
            } => ParamSchedule::harmonic(c, base, amplitude, omega, phase),
            ScheduleConfig::Table {
                breakpoints,
                values,
                unchecked: false,
            } => ParamSchedule::table(c, breakpoints, values),
            ScheduleConfig::Table {
                breakpoints,
                values,
                unchecked: true,
            } => ParamSchedule::table_unchecked(c, breakpoints, values),
        }
    }

    fn from_schedule(s: &ParamSchedule) -> Result<Self> {
        Ok(match s.kind() {
            ScheduleKind::Constant(value) => ScheduleConfig::Constant { value: *value },
            ScheduleKind::Harmonic {
                base,
                amplitude,
                omega,
                phase,
            } => ScheduleConfig::Harmonic {
                base: *base,
                amplitude: *amplitude,
                omega: *omega,
                phase: *phase,
            },
            ScheduleKind::PiecewiseTable { breakpoints, values } => ScheduleConfig::Table {
                breakpoints: breakpoints.clone(),
                values: values.clone(),
                unchecked: values.iter().any(|v| *v < 0.0),
            },
            ScheduleKind::Custom { label, .. } => {
                return Err(Error::config(
                    s.coefficient().field(),
                    format!("custom schedule `{label}` cannot be written to a configuration file"),
                ))
            }
        })
    }
}

impl IncidenceKindConfig {
    fn build(&self) -> Result<IncidenceFn> {
        Ok(match self {
            IncidenceKindConfig::MassAction => IncidenceFn::mass_action(),
            IncidenceKindConfig::Saturated { a } => IncidenceFn::saturated(*a)?,
            IncidenceKindConfig::Standard => IncidenceFn::standard(),
        })
    }

    fn from_incidence(f: &IncidenceFn, field: &str) -> Result<Self> {
        match f.kind() {
            IncidenceKind::MassAction => Ok(IncidenceKindConfig::MassAction),
            IncidenceKind::Saturated(a) => Ok(IncidenceKindConfig::Saturated { a: *a }),
            IncidenceKind::Standard => Ok(IncidenceKindConfig::Standard),
            other => Err(Error::config(
                field,
                format!("incidence {other:?} cannot be written to a configuration file"),
            )),
        }
    }
}

impl DenominatorConfig {
    fn build(&self) -> Result<DenominatorFn> {
        match self {
            DenominatorConfig::Identity => Ok(DenominatorFn::Identity),
            DenominatorConfig::Quadratic { a } => DenominatorFn::quadratic(*a),
            DenominatorConfig::ExpDecay { c } => DenominatorFn::exp_decay(*c),
        }
        .map_err(|e| Error::config("denominator", e.to_string()))
    }
}

impl ScenarioConfig {
    /// Build and validate the spec. A relative `observed_path` is resolved
    /// against `base_dir` and loaded.
    pub fn into_spec(self, base_dir: Option<&Path>) -> Result<ScenarioSpec> {
        let schedules = ScheduleSet::new(
            Coefficient::ALL
                .into_iter()
                .map(|c| self.schedules.get(c).build(c))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let incidence_phi = self
            .incidence
            .phi
            .build()
            .map_err(|e| Error::config("incidence.phi", e.to_string()))?;
        let incidence_psi = self
            .incidence
            .psi
            .build()
            .map_err(|e| Error::config("incidence.psi", e.to_string()))?;
        let st = self.initial_state;
        for (key, v) in [("S", st.s), ("I", st.i), ("R", st.r), ("V", st.v)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("initial_state.{key}"),
                    format!("must be nonnegative, got {v}"),
                ));
            }
        }
        let observed_path = self.observed_path.map(|p| match base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        });
        let observed = observed_path.as_deref().map(load_observed).transpose()?;
        let spec = ScenarioSpec {
            name: self.name,
            schedules,
            incidence_phi,
            incidence_psi,
            denominator: self.denominator.build()?,
            h_values: self.h_values,
            lambda: self.lambda,
            t_end: self.t_end,
            initial_state: State::new(st.s, st.i, st.r, st.v)?,
            observed,
            observed_path,
            notes: self.notes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self> {
        let s = |c: Coefficient| ScheduleConfig::from_schedule(spec.schedules.get(c));
        let denominator = match &spec.denominator {
            DenominatorFn::Identity => DenominatorConfig::Identity,
            DenominatorFn::Quadratic(a) => DenominatorConfig::Quadratic { a: *a },
            DenominatorFn::ExpDecay(c) => DenominatorConfig::ExpDecay { c: *c },
            DenominatorFn::Custom { label, .. } => {
                return Err(Error::config(
                    "denominator",
                    format!("custom denominator `{label}` cannot be written to a configuration file"),
                ))
            }
        };
        let st = spec.initial_state;
        Ok(ScenarioConfig {
            name: spec.name.clone(),
            schedules: SchedulesConfig {
                lambda: s(Coefficient::Lambda)?,
                mu: s(Coefficient::Mu)?,
                p: s(Coefficient::P)?,
                eta: s(Coefficient::Eta)?,
                alpha: s(Coefficient::Alpha)?,
                beta: s(Coefficient::Beta)?,
                sigma: s(Coefficient::Sigma)?,
                gamma: s(Coefficient::Gamma)?,
            },
            incidence: IncidenceConfig {
                phi: IncidenceKindConfig::from_incidence(&spec.incidence_phi, "incidence.phi")?,
                psi: IncidenceKindConfig::from_incidence(&spec.incidence_psi, "incidence.psi")?,
            },
            denominator,
            h_values: spec.h_values.clone(),
            lambda: spec.lambda,
            t_end: spec.t_end,
            initial_state: StateConfig {
                s: st.s,
                i: st.i,
                r: st.r,
                v: st.v,
            },
            observed_path: spec.observed_path.clone(),
            notes: spec.notes.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

impl ScenarioSpec {
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        ScenarioConfig::from_spec(self)
    }
}

/// Parse a JSON configuration. `origin` is only used in error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: std::result::Result<ScenarioConfig, _> = serde_path_to_error::deserialize(de);
    parsed.map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let location = format!("line {} column {}", inner.line(), inner.column());
        let message = if field.is_empty() || field == "." {
            format!("{location}: {inner}")
        } else {
            format!("field `{field}`, {location}: {inner}")
        };
        Error::Parse {
            path: origin.to_path_buf(),
            message,
        }
    })
}

/// Read, parse and validate a scenario configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)?.into_spec(path.parent())
}
