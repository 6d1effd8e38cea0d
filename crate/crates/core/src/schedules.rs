//! Time-varying model coefficients, derivative denominators and the
//! Mickens map from continuous schedules to discrete parameter sequences.
//!
//! A [`ParamSchedule`] is validated when it is built: nonnegativity is
//! checked by dense sampling, a declared period is checked on a grid and a
//! user-supplied derivative is compared with a fourth-order central
//! difference. Everything is immutable after construction.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar function handle used by custom schedules and denominators.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The eight model coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coefficient {
    Lambda,
    Mu,
    P,
    Eta,
    Alpha,
    Beta,
    Sigma,
    Gamma,
}

impl Coefficient {
    pub const ALL: [Coefficient; 8] = [
        Coefficient::Lambda,
        Coefficient::Mu,
        Coefficient::P,
        Coefficient::Eta,
        Coefficient::Alpha,
        Coefficient::Beta,
        Coefficient::Sigma,
        Coefficient::Gamma,
    ];

    /// Key used in configuration files.
    pub fn key(self) -> &'static str {
        match self {
            Coefficient::Lambda => "Lambda",
            Coefficient::Mu => "mu",
            Coefficient::P => "p",
            Coefficient::Eta => "eta",
            Coefficient::Alpha => "alpha",
            Coefficient::Beta => "beta",
            Coefficient::Sigma => "sigma",
            Coefficient::Gamma => "gamma",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }

    fn index(self) -> usize {
        self as usize
    }

    pub(crate) fn field(self) -> String {
        format!("schedules.{}", self.key())
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Functional form of a schedule.
#[derive(Clone)]
pub enum ScheduleKind {
    Constant(f64),
    /// `base + amplitude * cos(omega * t + phase)`.
    Harmonic {
        base: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// Left-closed step function: `values[i]` on `[breakpoints[i], breakpoints[i+1])`,
    /// the last value extending to infinity. `breakpoints[0]` is always 0.
    PiecewiseTable {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Custom {
        label: String,
        f: ScalarFn,
    },
}

impl fmt::Debug for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            ScheduleKind::Harmonic {
                base,
                amplitude,
                omega,
                phase,
            } => f
                .debug_struct("Harmonic")
                .field("base", base)
                .field("amplitude", amplitude)
                .field("omega", omega)
                .field("phase", phase)
                .finish(),
            ScheduleKind::PiecewiseTable { breakpoints, values } => f
                .debug_struct("PiecewiseTable")
                .field("breakpoints", breakpoints)
                .field("values", values)
                .finish(),
            ScheduleKind::Custom { label, .. } => f.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

impl PartialEq for ScheduleKind {
    fn eq(&self, other: &Self) -> bool {
        use ScheduleKind::*;
        match (self, other) {
            (Constant(a), Constant(b)) => a == b,
            (
                Harmonic {
                    base: b1,
                    amplitude: a1,
                    omega: w1,
                    phase: p1,
                },
                Harmonic {
                    base: b2,
                    amplitude: a2,
                    omega: w2,
                    phase: p2,
                },
            ) => b1 == b2 && a1 == a2 && w1 == w2 && p1 == p2,
            (
                PiecewiseTable {
                    breakpoints: b1,
                    values: v1,
                },
                PiecewiseTable {
                    breakpoints: b2,
                    values: v2,
                },
            ) => b1 == b2 && v1 == v2,
            (Custom { label: l1, f: f1 }, Custom { label: l2, f: f2 }) => l1 == l2 && Arc::ptr_eq(f1, f2),
            _ => false,
        }
    }
}

/// A named, validated, time-varying coefficient.
#[derive(Clone)]
pub struct ParamSchedule {
    coefficient: Coefficient,
    kind: ScheduleKind,
    derivative: Option<ScalarFn>,
    period: Option<f64>,
}

impl fmt::Debug for ParamSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamSchedule")
            .field("coefficient", &self.coefficient)
            .field("kind", &self.kind)
            .field("has_derivative", &self.derivative.is_some())
            .field("period", &self.period)
            .finish()
    }
}

impl PartialEq for ParamSchedule {
    fn eq(&self, other: &Self) -> bool {
        let same_derivative = match (&self.derivative, &other.derivative) {
            (None, None) => true,
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            _ => false,
        };
        self.coefficient == other.coefficient
            && self.kind == other.kind
            && self.period == other.period
            && same_derivative
    }
}

/// Points per declared period (or over `[0, 100]`) used by the nonnegativity scan.
const NONNEG_SAMPLES: usize = 10_000;
const APERIODIC_HORIZON: f64 = 100.0;
const FD_STEP: f64 = 1e-4;

impl ParamSchedule {
    pub fn constant(coefficient: Coefficient, value: f64) -> Result<Self> {
        Self::build(coefficient, ScheduleKind::Constant(value), None, None, true)
    }

    /// `base + amplitude * cos(omega * t + phase)`, periodic with period
    /// `2π/omega` when `omega > 0`.
    pub fn harmonic(coefficient: Coefficient, base: f64, amplitude: f64, omega: f64, phase: f64) -> Result<Self> {
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::config(
                coefficient.field(),
                format!("angular frequency must be finite and nonnegative, got {omega}"),
            ));
        }
        let period = (omega > 0.0).then(|| 2.0 * PI / omega);
        Self::build(
            coefficient,
            ScheduleKind::Harmonic {
                base,
                amplitude,
                omega,
                phase,
            },
            None,
            period,
            true,
        )
    }

    pub fn table(coefficient: Coefficient, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(
            coefficient,
            ScheduleKind::PiecewiseTable { breakpoints, values },
            None,
            None,
            true,
        )
    }

    /// Step table whose values are not checked for nonnegativity. Used for
    /// deliberately out-of-hypothesis experiments only.
    pub fn table_unchecked(coefficient: Coefficient, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(
            coefficient,
            ScheduleKind::PiecewiseTable { breakpoints, values },
            None,
            None,
            false,
        )
    }

    pub fn custom(
        coefficient: Coefficient,
        label: impl Into<String>,
        f: ScalarFn,
        derivative: Option<ScalarFn>,
        period: Option<f64>,
    ) -> Result<Self> {
        Self::build(
            coefficient,
            ScheduleKind::Custom { label: label.into(), f },
            derivative,
            period,
            true,
        )
    }

    /// Declare (or override) the period and re-validate.
    pub fn with_period(self, period: f64) -> Result<Self> {
        Self::build(self.coefficient, self.kind, self.derivative, Some(period), true)
    }

    fn build(
        coefficient: Coefficient,
        kind: ScheduleKind,
        derivative: Option<ScalarFn>,
        period: Option<f64>,
        check_sign: bool,
    ) -> Result<Self> {
        let schedule = ParamSchedule {
            coefficient,
            kind,
            derivative,
            period,
        };
        schedule.check_shape()?;
        if check_sign {
            schedule.check_nonnegative()?;
        }
        schedule.check_period()?;
        schedule.check_derivative()?;
        Ok(schedule)
    }

    fn check_shape(&self) -> Result<()> {
        let field = self.coefficient.field();
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(&field, format!("{what} must be finite, got {v}")))
            }
        };
        match &self.kind {
            ScheduleKind::Constant(v) => finite(*v, "value")?,
            ScheduleKind::Harmonic {
                base,
                amplitude,
                omega,
                phase,
            } => {
                finite(*base, "base")?;
                finite(*amplitude, "amplitude")?;
                finite(*omega, "omega")?;
                finite(*phase, "phase")?;
            }
            ScheduleKind::PiecewiseTable { breakpoints, values } => {
                if breakpoints.is_empty() || values.is_empty() {
                    return Err(Error::config(&field, "piecewise table is empty"));
                }
                if breakpoints.len() != values.len() {
                    return Err(Error::config(
                        &field,
                        format!(
                            "table has {} breakpoints but {} values",
                            breakpoints.len(),
                            values.len()
                        ),
                    ));
                }
                if breakpoints[0] != 0.0 {
                    return Err(Error::config(&field, "first breakpoint must be 0"));
                }
                if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config(&field, "breakpoints must be strictly increasing"));
                }
                for &v in breakpoints.iter().chain(values) {
                    finite(v, "table entry")?;
                }
            }
            ScheduleKind::Custom { .. } => {}
        }
        if let Some(period) = self.period {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::config(
                    &field,
                    format!("declared period must be positive, got {period}"),
                ));
            }
        }
        Ok(())
    }

    fn check_nonnegative(&self) -> Result<()> {
        if let ScheduleKind::PiecewiseTable { values, .. } = &self.kind {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::config(
                    self.coefficient.field(),
                    format!("table value {i} is negative ({v})"),
                ));
            }
            return Ok(());
        }
        let span = self.period.unwrap_or(APERIODIC_HORIZON);
        for i in 0..=NONNEG_SAMPLES {
            let t = span * i as f64 / NONNEG_SAMPLES as f64;
            let v = self.value(t);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(
                    self.coefficient.field(),
                    format!("schedule takes value {v} at t = {t}; coefficients must be nonnegative"),
                ));
            }
        }
        Ok(())
    }

    fn check_period(&self) -> Result<()> {
        let Some(period) = self.period else {
            return Ok(());
        };
        let n = 1000;
        for i in 0..=n {
            let t = 4.0 * period * i as f64 / n as f64;
            let a = self.value(t);
            let b = self.value(t + period);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::config(
                    self.coefficient.field(),
                    format!("declared period {period} violated at t = {t}: {a} vs {b}"),
                ));
            }
        }
        Ok(())
    }

    fn check_derivative(&self) -> Result<()> {
        let Some(derivative) = &self.derivative else {
            return Ok(());
        };
        let span = self.period.unwrap_or(APERIODIC_HORIZON);
        let n = 1000;
        for i in 0..=n {
            let t = 2.0 * FD_STEP + span * i as f64 / n as f64;
            let exact = derivative(t);
            let approx = self.central_difference(t);
            if !((exact - approx).abs() <= 1e-6 * exact.abs().max(1.0)) {
                return Err(Error::config(
                    self.coefficient.field(),
                    format!("derivative {exact} disagrees with finite difference {approx} at t = {t}"),
                ));
            }
        }
        Ok(())
    }

    /// Fourth-order central difference, valid for `t >= 2e-4`.
    fn central_difference(&self, t: f64) -> f64 {
        let h = FD_STEP;
        (8.0 * (self.value(t + h) - self.value(t - h)) - (self.value(t + 2.0 * h) - self.value(t - 2.0 * h)))
            / (12.0 * h)
    }

    pub fn coefficient(&self) -> Coefficient {
        self.coefficient
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn has_custom_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// Evaluate at `t >= 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!(
                "schedule `{}` evaluated at negative time {t}",
                self.coefficient
            )));
        }
        Ok(self.value(t))
    }

    /// Unchecked evaluation for hot loops; callers guarantee `t >= 0`.
    pub(crate) fn value(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Constant(v) => *v,
            ScheduleKind::Harmonic {
                base,
                amplitude,
                omega,
                phase,
            } => base + amplitude * (omega * t + phase).cos(),
            ScheduleKind::PiecewiseTable { breakpoints, values } => {
                let idx = breakpoints.partition_point(|b| *b <= t);
                values[idx.saturating_sub(1)]
            }
            ScheduleKind::Custom { f, .. } => f(t),
        }
    }

    /// Analytic derivative when one exists. Step tables with more than one
    /// distinct value have none.
    pub fn derivative_at(&self, t: f64) -> Option<f64> {
        match &self.kind {
            ScheduleKind::Constant(_) => Some(0.0),
            ScheduleKind::Harmonic {
                amplitude,
                omega,
                phase,
                ..
            } => Some(-amplitude * omega * (omega * t + phase).sin()),
            ScheduleKind::PiecewiseTable { values, .. } => values.iter().all(|v| *v == values[0]).then_some(0.0),
            ScheduleKind::Custom { .. } => self.derivative.as_ref().map(|d| d(t)),
        }
    }

    /// Whether the schedule is constant in time.
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            ScheduleKind::Constant(_) => true,
            ScheduleKind::Harmonic { amplitude, omega, .. } => *amplitude == 0.0 || *omega == 0.0,
            ScheduleKind::PiecewiseTable { values, .. } => values.iter().all(|v| *v == values[0]),
            ScheduleKind::Custom { .. } => false,
        }
    }

    /// Whether a bounded derivative exists everywhere.
    pub fn is_differentiable(&self) -> bool {
        match &self.kind {
            ScheduleKind::PiecewiseTable { .. } => self.is_constant(),
            _ => true,
        }
    }
}

/// Function `φ(h)` replacing the step size in the discrete derivative.
#[derive(Clone)]
pub enum DenominatorFn {
    /// `φ(h) = h`
    Identity,
    /// `φ(h) = h + a h²`
    Quadratic(f64),
    /// `φ(h) = (1 - e^{-c h}) / c`
    ExpDecay(f64),
    Custom {
        label: String,
        f: ScalarFn,
    },
}

impl fmt::Debug for DenominatorFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenominatorFn::Identity => f.write_str("Identity"),
            DenominatorFn::Quadratic(a) => f.debug_tuple("Quadratic").field(a).finish(),
            DenominatorFn::ExpDecay(c) => f.debug_tuple("ExpDecay").field(c).finish(),
            DenominatorFn::Custom { label, .. } => f.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

impl PartialEq for DenominatorFn {
    fn eq(&self, other: &Self) -> bool {
        use DenominatorFn::*;
        match (self, other) {
            (Identity, Identity) => true,
            (Quadratic(a), Quadratic(b)) => a == b,
            (ExpDecay(a), ExpDecay(b)) => a == b,
            (Custom { label: l1, f: f1 }, Custom { label: l2, f: f2 }) => l1 == l2 && Arc::ptr_eq(f1, f2),
            _ => false,
        }
    }
}

impl DenominatorFn {
    pub fn quadratic(a: f64) -> Result<Self> {
        let d = DenominatorFn::Quadratic(a);
        d.validate()?;
        Ok(d)
    }

    pub fn exp_decay(c: f64) -> Result<Self> {
        let d = DenominatorFn::ExpDecay(c);
        d.validate()?;
        Ok(d)
    }

    /// A user-supplied denominator, accepted only if it is positive, tends
    /// to zero and satisfies `|φ(h)/h - 1| <= 1e-6` at `h = 1e-8`.
    pub fn custom(label: impl Into<String>, f: ScalarFn) -> Result<Self> {
        let d = DenominatorFn::Custom { label: label.into(), f };
        d.validate()?;
        Ok(d)
    }

    fn raw(&self, h: f64) -> f64 {
        match self {
            DenominatorFn::Identity => h,
            DenominatorFn::Quadratic(a) => h + a * h * h,
            DenominatorFn::ExpDecay(c) => -(-c * h).exp_m1() / c,
            DenominatorFn::Custom { f, .. } => f(h),
        }
    }

    pub fn eval(&self, h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("time step must be positive, got {h}")));
        }
        Ok(self.raw(h))
    }

    pub fn validate(&self) -> Result<()> {
        let field = "denominator";
        match self {
            DenominatorFn::Quadratic(a) if !(a.is_finite() && *a >= 0.0) => {
                return Err(Error::config(
                    field,
                    format!("quadratic coefficient must be >= 0, got {a}"),
                ));
            }
            DenominatorFn::ExpDecay(c) if !(c.is_finite() && *c > 0.0) => {
                return Err(Error::config(field, format!("decay rate must be > 0, got {c}")));
            }
            _ => {}
        }
        // positivity on a log grid 1e-8 .. 1e2
        for e in -80..=20 {
            let h = 10f64.powf(e as f64 / 10.0);
            let v = self.raw(h);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("φ({h}) = {v} is not positive")));
            }
        }
        let mut prev = f64::INFINITY;
        for e in 1..=8 {
            let h = 10f64.powi(-e);
            let v = self.raw(h);
            if !(v < prev) {
                return Err(Error::config(field, "φ(h) does not decrease to 0 as h → 0"));
            }
            prev = v;
        }
        let h = 1e-8;
        let ratio = self.raw(h) / h;
        if !((ratio - 1.0).abs() <= 1e-6) {
            return Err(Error::config(
                field,
                format!("φ(h)/h = {ratio} at h = 1e-8; the denominator must satisfy φ(h)/h → 1"),
            ));
        }
        Ok(())
    }
}

/// Coefficient values at one instant (continuous) or one step (discrete).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coefficients {
    pub lambda: f64,
    pub mu: f64,
    pub p: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl Coefficients {
    pub fn get(&self, c: Coefficient) -> f64 {
        match c {
            Coefficient::Lambda => self.lambda,
            Coefficient::Mu => self.mu,
            Coefficient::P => self.p,
            Coefficient::Eta => self.eta,
            Coefficient::Alpha => self.alpha,
            Coefficient::Beta => self.beta,
            Coefficient::Sigma => self.sigma,
            Coefficient::Gamma => self.gamma,
        }
    }

    fn set(&mut self, c: Coefficient, v: f64) {
        match c {
            Coefficient::Lambda => self.lambda = v,
            Coefficient::Mu => self.mu = v,
            Coefficient::P => self.p = v,
            Coefficient::Eta => self.eta = v,
            Coefficient::Alpha => self.alpha = v,
            Coefficient::Beta => self.beta = v,
            Coefficient::Sigma => self.sigma = v,
            Coefficient::Gamma => self.gamma = v,
        }
    }

    /// Every coefficient multiplied by `factor` (same operand order as the Mickens map).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        for c in Coefficient::ALL {
            out.set(c, factor * self.get(c));
        }
        out
    }

    fn approx_eq(&self, other: &Self, rel: f64) -> bool {
        Coefficient::ALL.into_iter().all(|c| {
            let (a, b) = (self.get(c), other.get(c));
            (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
        })
    }
}

/// The full set of eight schedules.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSet {
    schedules: Vec<ParamSchedule>,
}

impl ScheduleSet {
    /// Requires every coefficient exactly once, in any order.
    pub fn new(schedules: Vec<ParamSchedule>) -> Result<Self> {
        let mut slots: Vec<Option<ParamSchedule>> = vec![None; 8];
        for s in schedules {
            let idx = s.coefficient.index();
            if slots[idx].is_some() {
                return Err(Error::config(s.coefficient.field(), "schedule given twice"));
            }
            slots[idx] = Some(s);
        }
        let mut out = Vec::with_capacity(8);
        for (c, slot) in Coefficient::ALL.into_iter().zip(slots) {
            out.push(slot.ok_or_else(|| Error::config(c.field(), "missing schedule"))?);
        }
        Ok(ScheduleSet { schedules: out })
    }

    pub fn get(&self, c: Coefficient) -> &ParamSchedule {
        &self.schedules[c.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamSchedule> {
        self.schedules.iter()
    }

    /// All coefficient values at time `t >= 0`.
    pub fn at(&self, t: f64) -> Coefficients {
        let mut out = Coefficients::default();
        for s in &self.schedules {
            out.set(s.coefficient, s.value(t));
        }
        out
    }

    /// Replace one schedule.
    pub fn with(mut self, schedule: ParamSchedule) -> Self {
        let idx = schedule.coefficient.index();
        self.schedules[idx] = schedule;
        self
    }

    /// Whether Λ, μ, η and p are constant, the setting in which the
    /// disease-free auxiliary solution is an explicit equilibrium.
    pub fn has_constant_demography(&self) -> bool {
        [Coefficient::Lambda, Coefficient::Mu, Coefficient::Eta, Coefficient::P]
            .into_iter()
            .all(|c| self.get(c).is_constant())
    }

    /// Longest declared period among non-constant schedules. `None` if some
    /// non-constant schedule is aperiodic or all are constant.
    pub fn common_period(&self) -> Option<f64> {
        let mut longest: Option<f64> = None;
        for s in self.schedules.iter().filter(|s| !s.is_constant()) {
            let p = s.period?;
            longest = Some(longest.map_or(p, |l: f64| l.max(p)));
        }
        longest
    }

    /// Step period of the Mickens-sampled sequences for step `h`.
    fn step_period(&self, h: f64) -> Option<usize> {
        let mut omega: usize = 1;
        for s in &self.schedules {
            if s.is_constant() {
                continue;
            }
            let ratio = s.period? / h;
            let rounded = ratio.round();
            if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio {
                return None;
            }
            omega = lcm(omega, rounded as usize);
            if omega > 10_000_000 {
                return None;
            }
        }
        Some(omega)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

type SequenceFn = Arc<dyn Fn(usize) -> Coefficients + Send + Sync>;

#[derive(Clone)]
enum Source {
    Mickens { schedules: Arc<ScheduleSet>, phi_h: f64 },
    Sequence(SequenceFn),
}

/// Discrete parameter sequences indexed by step `n`.
#[derive(Clone)]
pub struct DiscreteParams {
    h: f64,
    source: Source,
    step_period: Option<usize>,
}

impl fmt::Debug for DiscreteParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Mickens { phi_h, .. } => format!("Mickens(φ(h) = {phi_h})"),
            Source::Sequence(_) => "Sequence".to_string(),
        };
        f.debug_struct("DiscreteParams")
            .field("h", &self.h)
            .field("source", &kind)
            .field("step_period", &self.step_period)
            .finish()
    }
}

impl DiscreteParams {
    /// Sequences given directly by a function of the step index. Values are
    /// the caller's responsibility; `step_period` is verified numerically.
    pub fn from_sequence(
        h: f64,
        f: impl Fn(usize) -> Coefficients + Send + Sync + 'static,
        step_period: Option<usize>,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("time step must be positive, got {h}")));
        }
        let dp = DiscreteParams {
            h,
            source: Source::Sequence(Arc::new(f)),
            step_period,
        };
        if let Some(omega) = step_period {
            dp.check_period(omega)?;
        }
        Ok(dp)
    }

    /// Constant sequences.
    pub fn constant(h: f64, coefficients: Coefficients) -> Result<Self> {
        Self::from_sequence(h, move |_| coefficients, Some(1))
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `φ(h)` when built by the Mickens map.
    pub fn denominator_value(&self) -> Option<f64> {
        match &self.source {
            Source::Mickens { phi_h, .. } => Some(*phi_h),
            Source::Sequence(_) => None,
        }
    }

    pub fn schedules(&self) -> Option<&ScheduleSet> {
        match &self.source {
            Source::Mickens { schedules, .. } => Some(schedules),
            Source::Sequence(_) => None,
        }
    }

    /// Coefficient values at step `n`.
    pub fn at(&self, n: usize) -> Coefficients {
        match &self.source {
            Source::Mickens { schedules, phi_h } => schedules.at(n as f64 * self.h).scaled(*phi_h),
            Source::Sequence(f) => f(n),
        }
    }

    /// Step period `ω` with `c_{n+ω} = c_n` for every sequence, if known.
    pub fn step_period(&self) -> Option<usize> {
        self.step_period
    }

    /// Verify `c_{n+ω} = c_n` (to 1e-12 relative) over three periods.
    pub fn check_period(&self, omega: usize) -> Result<()> {
        if omega == 0 {
            return Err(Error::NotPeriodic(omega));
        }
        let span = (3 * omega).max(16);
        for n in 0..span {
            if !self.at(n).approx_eq(&self.at(n + omega), 1e-12) {
                return Err(Error::NotPeriodic(omega));
            }
        }
        Ok(())
    }
}

/// The Mickens map: `c_n = φ(h) · c(n h)` for every coefficient.
pub fn mickens_discretize(schedules: &ScheduleSet, h: f64, denominator: &DenominatorFn) -> Result<DiscreteParams> {
    let phi_h = denominator.eval(h)?;
    let step_period = schedules.step_period(h);
    Ok(DiscreteParams {
        h,
        source: Source::Mickens {
            schedules: Arc::new(schedules.clone()),
            phi_h,
        },
        step_period,
    })
}

/// Window lengths used when checking the demographic hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Horizons {
    pub mu: usize,
    pub lambda: usize,
    pub p: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Horizons { mu: 1, lambda: 1, p: 1 }
    }
}

/// Finite-window evidence for the mortality and recruitment hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    /// `max_n ∏_{k=n}^{n+ω_μ} 1/(1+μ_k)`; must be `< 1`.
    pub max_survival_product: f64,
    /// `min_n Σ_{k=n+1}^{n+ω_Λ} Λ_k`; must be `> 0`.
    pub min_recruitment_sum: f64,
    /// `min_n Σ_{k=n+1}^{n+ω_p} p_k`; must be `> 0`.
    pub min_vaccination_sum: f64,
    pub mortality_holds: bool,
    pub recruitment_holds: bool,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.mortality_holds && self.recruitment_holds
    }
}

pub fn validate_hypotheses(dp: &DiscreteParams, horizons: Horizons, scan: Range<usize>) -> Result<HypothesisReport> {
    if scan.is_empty() {
        return Err(Error::domain("hypothesis scan range is empty"));
    }
    let reach = horizons.mu.max(horizons.lambda).max(horizons.p);
    let coeffs: Vec<Coefficients> = (scan.start..scan.end + reach + 1).map(|n| dp.at(n)).collect();
    let mut max_prod = f64::NEG_INFINITY;
    let mut min_lambda = f64::INFINITY;
    let mut min_p = f64::INFINITY;
    for offset in 0..scan.len() {
        let prod: f64 = coeffs[offset..=offset + horizons.mu]
            .iter()
            .map(|c| 1.0 / (1.0 + c.mu))
            .product();
        max_prod = max_prod.max(prod);
        let lambda_sum: f64 = coeffs[offset + 1..=offset + horizons.lambda]
            .iter()
            .map(|c| c.lambda)
            .sum();
        min_lambda = min_lambda.min(lambda_sum);
        let p_sum: f64 = coeffs[offset + 1..=offset + horizons.p].iter().map(|c| c.p).sum();
        min_p = min_p.min(p_sum);
    }
    Ok(HypothesisReport {
        max_survival_product: max_prod,
        min_recruitment_sum: min_lambda,
        min_vaccination_sum: min_p,
        mortality_holds: max_prod < 1.0,
        recruitment_holds: min_lambda > 0.0 && min_p > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seasonal(b: f64, c: Coefficient) -> ParamSchedule {
        ParamSchedule::harmonic(c, b, 0.3 * b, PI / 2.0, 0.0).unwrap()
    }

    fn constant_set(values: [f64; 8]) -> ScheduleSet {
        ScheduleSet::new(
            Coefficient::ALL
                .into_iter()
                .zip(values)
                .map(|(c, v)| ParamSchedule::constant(c, v).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn denominator_values() {
        let q = DenominatorFn::quadratic(0.2).unwrap();
        assert!((q.eval(1.0).unwrap() - 1.2).abs() < 1e-15);
        assert!((q.eval(0.5).unwrap() - 0.55).abs() < 1e-15);
        assert_eq!(DenominatorFn::Identity.eval(0.25).unwrap(), 0.25);
        assert!(q.eval(0.0).is_err());
        assert!(q.eval(-1.0).is_err());
        let e = DenominatorFn::exp_decay(0.002).unwrap();
        let expected = (1.0 - (-0.002f64).exp()) / 0.002;
        assert!((e.eval(1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn denominator_rejects_bad_kinds() {
        assert!(DenominatorFn::quadratic(-0.1).is_err());
        assert!(DenominatorFn::exp_decay(0.0).is_err());
        // positive and vanishing, but φ(h)/h → 2
        assert!(DenominatorFn::custom("double", Arc::new(|h| 2.0 * h)).is_err());
        assert!(DenominatorFn::custom("sinh", Arc::new(|h: f64| h.sinh())).is_ok());
    }

    #[test]
    fn denominator_ratio_converges_linearly() {
        for d in [
            DenominatorFn::Identity,
            DenominatorFn::Quadratic(0.2),
            DenominatorFn::ExpDecay(0.002),
            DenominatorFn::ExpDecay(3.0),
        ] {
            let mut prev = f64::INFINITY;
            let mut worst_c: f64 = 0.0;
            for e in 1..=6 {
                let h = 10f64.powi(-e);
                let dev = (d.eval(h).unwrap() / h - 1.0).abs();
                assert!(dev <= prev, "{d:?}: deviation not monotone at h = {h}");
                prev = dev;
                worst_c = worst_c.max(dev / h);
            }
            assert!(worst_c.is_finite() && worst_c < 10.0, "{d:?}: c = {worst_c}");
        }
    }

    #[test]
    fn schedule_evaluation() {
        let beta = seasonal(0.3, Coefficient::Beta);
        assert!((beta.eval(0.0).unwrap() - 0.39).abs() < 1e-15);
        assert_eq!(beta.period(), Some(4.0));
        let mu = ParamSchedule::constant(Coefficient::Mu, 0.0007).unwrap();
        assert_eq!(mu.eval(123.4).unwrap(), 0.0007);
        let flat = ParamSchedule::harmonic(Coefficient::Beta, 0.4, 0.0, 2.0, 0.3).unwrap();
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(flat.eval(t).unwrap(), 0.4);
        }
        assert!(beta.eval(-1e-9).is_err());
    }

    #[test]
    fn table_is_left_closed() {
        let s = ParamSchedule::table(Coefficient::Beta, vec![0.0, 1.0, 2.0], vec![5.0, 6.0, 7.0]).unwrap();
        assert_eq!(s.eval(0.0).unwrap(), 5.0);
        assert_eq!(s.eval(0.999).unwrap(), 5.0);
        assert_eq!(s.eval(1.0).unwrap(), 6.0);
        assert_eq!(s.eval(1e6).unwrap(), 7.0);
        assert!(ParamSchedule::table(Coefficient::Beta, vec![], vec![]).is_err());
        assert!(ParamSchedule::table(Coefficient::Beta, vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(ParamSchedule::table_unchecked(Coefficient::Beta, vec![0.0, 1.0], vec![1.0, -1.0]).is_ok());
    }

    #[test]
    fn negative_schedule_rejected() {
        let err = ParamSchedule::harmonic(Coefficient::Mu, 0.1, 0.2, 1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("schedules.mu"), "{err}");
        assert!(ParamSchedule::constant(Coefficient::Mu, -0.3).is_err());
    }

    #[test]
    fn custom_derivative_checked() {
        let f: ScalarFn = Arc::new(|t: f64| 1.0 + (2.0 * t).sin().powi(2));
        let good: ScalarFn = Arc::new(|t: f64| 2.0 * (4.0 * t).sin());
        let bad: ScalarFn = Arc::new(|t: f64| (4.0 * t).sin());
        assert!(ParamSchedule::custom(Coefficient::Beta, "s2", f.clone(), Some(good), Some(PI / 2.0)).is_ok());
        assert!(ParamSchedule::custom(Coefficient::Beta, "s2", f.clone(), Some(bad), None).is_err());
        assert!(ParamSchedule::custom(Coefficient::Beta, "s2", f, None, Some(1.0)).is_err());
    }

    #[test]
    fn schedule_set_requires_all_coefficients() {
        let partial = vec![ParamSchedule::constant(Coefficient::Mu, 0.3).unwrap()];
        let err = ScheduleSet::new(partial).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn mickens_map_examples() {
        let set = constant_set([0.5, 0.3, 2.0 / 3.0, 0.05, 0.05, 0.3, 0.3, 0.3]).with(seasonal(0.3, Coefficient::Beta));
        let dp = mickens_discretize(&set, 1.0, &DenominatorFn::Quadratic(0.2)).unwrap();
        for n in [0, 1, 17] {
            assert!((dp.at(n).lambda - 0.6).abs() < 1e-15);
        }
        assert!((dp.at(0).beta - 0.468).abs() < 1e-15);
        assert_eq!(dp.step_period(), Some(4));
        let id = mickens_discretize(&set, 0.37, &DenominatorFn::Identity).unwrap();
        assert_eq!(id.at(0).mu, 0.37 * 0.3);
    }

    #[test]
    fn step_period_detection() {
        let set = constant_set([1.0; 8]).with(seasonal(0.3, Coefficient::Beta));
        let d = DenominatorFn::Identity;
        assert_eq!(mickens_discretize(&set, 0.5, &d).unwrap().step_period(), Some(8));
        assert_eq!(mickens_discretize(&set, 4.0, &d).unwrap().step_period(), Some(1));
        assert_eq!(mickens_discretize(&set, 0.3, &d).unwrap().step_period(), None);
        assert_eq!(
            mickens_discretize(&constant_set([1.0; 8]), 0.3, &d)
                .unwrap()
                .step_period(),
            Some(1)
        );
    }

    #[test]
    fn hypothesis_examples() {
        let c = Coefficients {
            lambda: 0.1,
            mu: 0.3,
            p: 0.1,
            ..Default::default()
        };
        let dp = DiscreteParams::constant(1.0, c).unwrap();
        let r = validate_hypotheses(&dp, Horizons::default(), 0..50).unwrap();
        assert!((r.max_survival_product - 1.0 / 1.69).abs() < 1e-15);
        assert!(r.all_hold());

        let dp0 = DiscreteParams::constant(1.0, Coefficients { lambda: 0.0, ..c }).unwrap();
        let r0 = validate_hypotheses(&dp0, Horizons::default(), 0..50).unwrap();
        assert!(!r0.recruitment_holds);
        assert!(validate_hypotheses(&dp, Horizons::default(), 3..3).is_err());
    }

    #[test]
    fn sequence_period_verified() {
        let seq = |n: usize| Coefficients {
            beta: (n % 3) as f64,
            ..Default::default()
        };
        assert!(DiscreteParams::from_sequence(1.0, seq, Some(3)).is_ok());
        assert!(matches!(
            DiscreteParams::from_sequence(1.0, seq, Some(2)),
            Err(Error::NotPeriodic(2))
        ));
    }
}
