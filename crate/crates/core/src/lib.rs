#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Non-autonomous SIRVS epidemic model with a nonstandard finite-difference
//! discretisation, extinction/permanence thresholds and step-size
//! consistency bounds.

pub mod consistency;
pub mod dynamics;
pub mod error;
pub mod incidence;
pub mod scenarios;
pub mod schedules;
pub mod thresholds;

pub use dynamics::{Method, State, Trajectory};
pub use error::{Error, Result};
pub use incidence::IncidenceFn;
pub use scenarios::{builtin, load_config, run_scenario, RunOptions, ScenarioReport, ScenarioSpec};
pub use schedules::{Coefficient, DenominatorFn, ParamSchedule, ScheduleSet};
pub use thresholds::{ThresholdReport, Verdict};
