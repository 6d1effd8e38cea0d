//! Incidence functions `φ(S, I)` and `ψ(V, I)`.
//!
//! Threshold formulas only consume `∂₂f(x, 0)` ([`IncidenceFn::d2_at_zero`]);
//! the continuous model uses the same quantity as its one-argument incidence
//! `g(x)`, so one type serves both the discrete and the continuous views.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schedules::ScalarFn;

pub type BivariateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum IncidenceKind {
    /// `x y`
    MassAction,
    /// `x y / (1 + a y)`
    Saturated(f64),
    /// `x y / P` with an external population `P > 0`.
    Standard,
    /// `g(x) y` for a nonnegative, nondecreasing, Lipschitz `g` with `g(0) = 0`.
    SeparableProduct { label: String, g: ScalarFn },
    /// Arbitrary `f(x, y)` together with its `∂₂f(x, 0)`. Not assumed to
    /// satisfy any hypothesis; use [`validate_incidence`].
    Custom {
        label: String,
        f: BivariateFn,
        d2: ScalarFn,
    },
}

impl fmt::Debug for IncidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncidenceKind::MassAction => f.write_str("MassAction"),
            IncidenceKind::Saturated(a) => f.debug_tuple("Saturated").field(a).finish(),
            IncidenceKind::Standard => f.write_str("Standard"),
            IncidenceKind::SeparableProduct { label, .. } => {
                f.debug_struct("SeparableProduct").field("label", label).finish()
            }
            IncidenceKind::Custom { label, .. } => f.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

impl PartialEq for IncidenceKind {
    fn eq(&self, other: &Self) -> bool {
        use IncidenceKind::*;
        match (self, other) {
            (MassAction, MassAction) | (Standard, Standard) => true,
            (Saturated(a), Saturated(b)) => a == b,
            (SeparableProduct { label: l1, g: g1 }, SeparableProduct { label: l2, g: g2 }) => {
                l1 == l2 && Arc::ptr_eq(g1, g2)
            }
            (Custom { label: l1, f: f1, .. }, Custom { label: l2, f: f2, .. }) => l1 == l2 && Arc::ptr_eq(f1, f2),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceFn {
    kind: IncidenceKind,
    lipschitz_k: f64,
}

impl IncidenceFn {
    pub fn mass_action() -> Self {
        IncidenceFn {
            kind: IncidenceKind::MassAction,
            lipschitz_k: 1.0,
        }
    }

    pub fn saturated(a: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::config(
                "incidence",
                format!("saturation constant must be >= 0, got {a}"),
            ));
        }
        Ok(IncidenceFn {
            kind: IncidenceKind::Saturated(a),
            lipschitz_k: 1.0,
        })
    }

    /// Standard incidence. Its Lipschitz constant is `1/P`; `lipschitz_k`
    /// stores the population-free factor 1.
    pub fn standard() -> Self {
        IncidenceFn {
            kind: IncidenceKind::Standard,
            lipschitz_k: 1.0,
        }
    }

    pub fn separable(label: impl Into<String>, g: ScalarFn, lipschitz_k: f64) -> Result<Self> {
        Self::with_kind(IncidenceKind::SeparableProduct { label: label.into(), g }, lipschitz_k)
    }

    pub fn custom(label: impl Into<String>, f: BivariateFn, d2: ScalarFn, lipschitz_k: f64) -> Result<Self> {
        Self::with_kind(
            IncidenceKind::Custom {
                label: label.into(),
                f,
                d2,
            },
            lipschitz_k,
        )
    }

    fn with_kind(kind: IncidenceKind, lipschitz_k: f64) -> Result<Self> {
        if !(lipschitz_k.is_finite() && lipschitz_k >= 0.0) {
            return Err(Error::config(
                "incidence",
                format!("Lipschitz constant must be >= 0, got {lipschitz_k}"),
            ));
        }
        Ok(IncidenceFn { kind, lipschitz_k })
    }

    pub fn kind(&self) -> &IncidenceKind {
        &self.kind
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn needs_population(&self) -> bool {
        matches!(self.kind, IncidenceKind::Standard)
    }

    /// `f(x, y) = c(y) · x` for these kinds, so the implicit step is linear
    /// in the unknowns.
    pub(crate) fn is_linear_in_x(&self) -> bool {
        matches!(
            self.kind,
            IncidenceKind::MassAction | IncidenceKind::Saturated(_) | IncidenceKind::Standard
        )
    }

    fn population(&self, pop: Option<f64>) -> Result<f64> {
        match (self.needs_population(), pop) {
            (true, Some(p)) if p > 0.0 && p.is_finite() => Ok(p),
            (true, Some(p)) => Err(Error::domain(format!(
                "standard incidence needs a positive population, got {p}"
            ))),
            (true, None) => Err(Error::domain("standard incidence needs a population")),
            (false, _) => Ok(1.0),
        }
    }

    pub fn eval(&self, x: f64, y: f64, pop: Option<f64>) -> Result<f64> {
        if !(x >= 0.0 && y >= 0.0) {
            return Err(Error::domain(format!(
                "incidence evaluated at negative argument ({x}, {y})"
            )));
        }
        let pop = self.population(pop)?;
        Ok(self.raw(x, y, pop))
    }

    pub(crate) fn raw(&self, x: f64, y: f64, pop: f64) -> f64 {
        match &self.kind {
            IncidenceKind::MassAction => x * y,
            IncidenceKind::Saturated(a) => x * y / (1.0 + a * y),
            IncidenceKind::Standard => x * y / pop,
            IncidenceKind::SeparableProduct { g, .. } => g(x) * y,
            IncidenceKind::Custom { f, .. } => f(x, y),
        }
    }

    /// `∂₂f(x, 0)`.
    pub fn d2_at_zero(&self, x: f64, pop: Option<f64>) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::domain(format!(
                "incidence derivative evaluated at negative x = {x}"
            )));
        }
        let pop = self.population(pop)?;
        Ok(self.raw_d2(x, pop))
    }

    pub(crate) fn raw_d2(&self, x: f64, pop: f64) -> f64 {
        match &self.kind {
            IncidenceKind::MassAction | IncidenceKind::Saturated(_) => x,
            IncidenceKind::Standard => x / pop,
            IncidenceKind::SeparableProduct { g, .. } => g(x),
            IncidenceKind::Custom { d2, .. } => d2(x),
        }
    }
}

/// Sampling rectangle for [`validate_incidence`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncidenceGrid {
    pub x_max: f64,
    pub y_max: f64,
    pub resolution: usize,
    /// Population used for kinds that need one. Defaults to `x_max + y_max`.
    pub population: Option<f64>,
}

impl IncidenceGrid {
    pub fn square(extent: f64) -> Self {
        IncidenceGrid {
            x_max: extent,
            y_max: extent,
            resolution: 256,
            population: None,
        }
    }
}

/// Worst-case sampled violations of the incidence hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceReport {
    /// `max |f(x,0)| + |f(0,y)|` on the grid.
    pub boundary_violation: f64,
    /// Most negative sampled value (0 when none).
    pub negativity: f64,
    /// Largest increase of `y ↦ f(x,y)/y` between consecutive grid points.
    pub ratio_increase: f64,
    /// Largest decrease of `x ↦ ∂₂f(x,0)` between consecutive grid points.
    pub derivative_decrease: f64,
    /// Estimated Lipschitz constant of `x ↦ ∂₂f(x,0)`.
    pub lipschitz_estimate: f64,
    /// Lipschitz constant the estimate is compared against.
    pub lipschitz_declared: f64,
    /// `max f(x,y) - k x y`.
    pub bound_excess: f64,
    pub boundary_ok: bool,
    pub nonnegative_ok: bool,
    pub ratio_monotone_ok: bool,
    pub derivative_monotone_ok: bool,
    pub lipschitz_ok: bool,
    pub bound_ok: bool,
    /// Kind-specific caveats (the standard incidence depends on a
    /// state-dependent population and is outside the fixed two-argument family).
    pub flags: Vec<String>,
}

impl IncidenceReport {
    pub fn all_ok(&self) -> bool {
        self.boundary_ok
            && self.nonnegative_ok
            && self.ratio_monotone_ok
            && self.derivative_monotone_ok
            && self.lipschitz_ok
            && self.bound_ok
    }
}

pub fn validate_incidence(f: &IncidenceFn, grid: IncidenceGrid) -> Result<IncidenceReport> {
    if !(grid.x_max > 0.0 && grid.y_max > 0.0) {
        return Err(Error::domain("incidence grid must have positive extent"));
    }
    if grid.resolution < 16 {
        return Err(Error::domain("incidence grid needs at least 16 points per axis"));
    }
    let pop = match grid.population {
        Some(p) if p > 0.0 => p,
        Some(p) => return Err(Error::domain(format!("grid population must be positive, got {p}"))),
        None => grid.x_max + grid.y_max,
    };
    let n = grid.resolution;
    let xs: Vec<f64> = (0..n).map(|i| grid.x_max * i as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = (0..n).map(|j| grid.y_max * j as f64 / (n - 1) as f64).collect();
    let k = if f.needs_population() {
        f.lipschitz_k / pop
    } else {
        f.lipschitz_k
    };

    let mut boundary: f64 = 0.0;
    for &v in &xs {
        boundary = boundary.max(f.raw(v, 0.0, pop).abs());
    }
    for &v in &ys {
        boundary = boundary.max(f.raw(0.0, v, pop).abs());
    }

    let mut negativity: f64 = 0.0;
    let mut ratio_increase: f64 = 0.0;
    let mut bound_excess = f64::NEG_INFINITY;
    for &x in &xs {
        let mut prev_ratio: Option<f64> = None;
        for &y in &ys {
            let v = f.raw(x, y, pop);
            negativity = negativity.min(v);
            bound_excess = bound_excess.max(v - k * x * y);
            if y > 0.0 {
                let ratio = v / y;
                if let Some(prev) = prev_ratio {
                    ratio_increase = ratio_increase.max(ratio - prev);
                }
                prev_ratio = Some(ratio);
            }
        }
    }

    let d2: Vec<f64> = xs.iter().map(|&x| f.raw_d2(x, pop)).collect();
    let mut lipschitz: f64 = 0.0;
    let mut decrease: f64 = 0.0;
    for i in 1..n {
        let slope = (d2[i] - d2[i - 1]) / (xs[i] - xs[i - 1]);
        lipschitz = lipschitz.max(slope.abs());
        decrease = decrease.max(d2[i - 1] - d2[i]);
    }

    let scale = 1.0 + grid.x_max * grid.y_max * k.max(1e-300);
    let tol = 1e-12 * scale;
    let mut flags = Vec::new();
    if f.needs_population() {
        flags.push(format!(
            "standard incidence: the population P is state dependent, so the fixed two-argument \
             hypotheses are only checked at P = {pop}"
        ));
    }
    Ok(IncidenceReport {
        boundary_violation: boundary,
        negativity,
        ratio_increase,
        derivative_decrease: decrease,
        lipschitz_estimate: lipschitz,
        lipschitz_declared: k,
        bound_excess,
        boundary_ok: boundary == 0.0,
        nonnegative_ok: negativity >= 0.0,
        ratio_monotone_ok: ratio_increase <= tol,
        derivative_monotone_ok: decrease <= tol,
        lipschitz_ok: lipschitz <= k * (1.0 + 1e-9),
        bound_ok: bound_excess <= tol,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(IncidenceFn::mass_action().eval(2.0, 3.0, None).unwrap(), 6.0);
        let sat = IncidenceFn::saturated(0.7).unwrap();
        assert_eq!(sat.eval(1.0, 0.0, None).unwrap(), 0.0);
        let v = IncidenceFn::standard().eval(5.84372e7, 106.0, Some(6.56e7)).unwrap();
        assert!((v - 5.84372e7 * 106.0 / 6.56e7).abs() < 1e-9);
        assert!((v - 94.43).abs() < 0.01);
    }

    #[test]
    fn standard_requires_population() {
        let f = IncidenceFn::standard();
        assert!(f.eval(1.0, 1.0, None).is_err());
        assert!(f.eval(1.0, 1.0, Some(0.0)).is_err());
        assert!(f.d2_at_zero(1.0, Some(-2.0)).is_err());
        assert_eq!(f.d2_at_zero(3.0, Some(6.0)).unwrap(), 0.5);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(IncidenceFn::mass_action().d2_at_zero(0.5738, None).unwrap(), 0.5738);
        let sat = IncidenceFn::saturated(0.7).unwrap();
        assert_eq!(sat.d2_at_zero(1.0, None).unwrap(), 1.0);
        // forward difference of y/(1+0.7y) at 0: 1/(1+0.7ε) = 1 - 0.7ε + ...
        for eps in [1e-4, 1e-6] {
            let fd = sat.eval(1.0, eps, None).unwrap() / eps;
            assert!((fd - 1.0).abs() <= 0.7 * eps * 1.01);
        }
    }

    #[test]
    fn builtin_kinds_pass_validation() {
        for f in [IncidenceFn::mass_action(), IncidenceFn::saturated(0.7).unwrap()] {
            let r = validate_incidence(&f, IncidenceGrid::square(10.0)).unwrap();
            assert!(r.all_ok(), "{f:?}: {r:?}");
            assert!((r.lipschitz_estimate - 1.0).abs() < 1e-12);
        }
        let r = validate_incidence(&IncidenceFn::standard(), IncidenceGrid::square(10.0)).unwrap();
        assert!(r.all_ok());
        assert_eq!(r.flags.len(), 1);
    }

    #[test]
    fn broken_custom_incidence_flagged() {
        let f = IncidenceFn::custom(
            "x*y^2",
            Arc::new(|x: f64, y: f64| x * y * y),
            Arc::new(|_x: f64| 0.0),
            1.0,
        )
        .unwrap();
        let r = validate_incidence(&f, IncidenceGrid::square(10.0)).unwrap();
        assert!(!r.ratio_monotone_ok);
        assert!(!r.bound_ok);
        assert!(!r.all_ok());
    }

    #[test]
    fn separable_lipschitz_checked() {
        let g: ScalarFn = Arc::new(|x: f64| 2.0 * x / (1.0 + x));
        let ok = IncidenceFn::separable("2x/(1+x)", g.clone(), 2.0).unwrap();
        assert!(
            validate_incidence(&ok, IncidenceGrid::square(5.0))
                .unwrap()
                .lipschitz_ok
        );
        let understated = IncidenceFn::separable("2x/(1+x)", g, 1.0).unwrap();
        assert!(
            !validate_incidence(&understated, IncidenceGrid::square(5.0))
                .unwrap()
                .lipschitz_ok
        );
    }

    #[test]
    fn grid_preconditions() {
        let f = IncidenceFn::mass_action();
        let mut g = IncidenceGrid::square(1.0);
        g.resolution = 8;
        assert!(validate_incidence(&f, g).is_err());
        assert!(validate_incidence(&f, IncidenceGrid::square(0.0)).is_err());
    }
}
