//! Steppers: the implicit NSFD update, the disease-free auxiliary system,
//! its periodic solution, and explicit Euler/RK4 for the continuous model.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::incidence::IncidenceFn;
use crate::schedules::{Coefficients, DiscreteParams, ScheduleSet};

/// Compartment sizes `(S, I, R, V)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct State {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub v: f64,
}

impl State {
    /// Checked constructor: all components finite and nonnegative.
    pub fn new(s: f64, i: f64, r: f64, v: f64) -> Result<Self> {
        let st = State { s, i, r, v };
        if !st.is_valid() {
            return Err(Error::domain(format!(
                "state must be finite and nonnegative, got {st:?}"
            )));
        }
        Ok(st)
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.v
    }

    pub fn is_valid(&self) -> bool {
        self.components().iter().all(|c| c.is_finite() && *c >= 0.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.components().iter().all(|c| *c >= 0.0)
    }

    pub fn components(&self) -> [f64; 4] {
        [self.s, self.i, self.r, self.v]
    }

    fn axpy(&self, a: f64, d: &[f64; 4]) -> State {
        State {
            s: self.s + a * d[0],
            i: self.i + a * d[1],
            r: self.r + a * d[2],
            v: self.v + a * d[3],
        }
    }
}

/// Disease-free proxies `(x, y)` for the susceptible and vaccinated classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AuxState {
    pub x: f64,
    pub y: f64,
}

impl AuxState {
    pub fn new(x: f64, y: f64) -> Self {
        AuxState { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nsfd,
    Euler,
    Rk4,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nsfd => "nsfd",
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nsfd" => Ok(Method::Nsfd),
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::config(
                "method",
                format!("unknown method `{other}` (nsfd, euler, rk4)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<State>,
    pub method: Method,
    /// First index at which some component went negative (explicit methods only).
    pub first_negative: Option<usize>,
}

impl Trajectory {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectories are never empty")
    }

    pub fn infectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.i)
    }

    /// `max_k |I_k - I_ref(t_k)|`, where every sample time of `self` must
    /// coincide with a sample of `reference`.
    pub fn sup_deviation_i(&self, reference: &Trajectory) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (k, st) in self.states.iter().enumerate() {
            let t = self.time(k);
            let pos = (t - reference.t0) / reference.dt;
            let j = pos.round();
            if (pos - j).abs() > 1e-6 || j < 0.0 {
                return Err(Error::domain(format!(
                    "time {t} is not on the reference grid (step {})",
                    reference.dt
                )));
            }
            let Some(r) = reference.states.get(j as usize) else {
                break;
            };
            worst = worst.max((st.i - r.i).abs());
        }
        Ok(worst)
    }
}

fn aux_update(c: &Coefficients, a: AuxState) -> AuxState {
    let a_coef = 1.0 + c.mu + c.p;
    let b_coef = 1.0 + c.mu + c.eta;
    let det = a_coef * b_coef - c.eta * c.p;
    let x = (b_coef * (c.lambda + a.x) + c.eta * a.y) / det;
    let y = (c.p * x + a.y) / b_coef;
    AuxState { x, y }
}

/// One step of the disease-free auxiliary system, solved exactly.
pub fn aux_step(dp: &DiscreteParams, n: usize, a: AuxState) -> AuxState {
    aux_update(&dp.at(n), a)
}

/// `n_steps + 1` auxiliary states starting from `a0` at step 0.
pub fn simulate_aux(dp: &DiscreteParams, a0: AuxState, n_steps: usize) -> Vec<AuxState> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(a0);
    let mut a = a0;
    for n in 0..n_steps {
        a = aux_step(dp, n, a);
        out.push(a);
    }
    out
}

/// The unique `ω`-periodic auxiliary solution, `orbit[k]` being its value at
/// steps `k, k+ω, k+2ω, …`.
pub fn periodic_aux_solution(dp: &DiscreteParams, omega: usize) -> Result<Vec<AuxState>> {
    dp.check_period(omega)?;
    let period_map = |z: AuxState| (0..omega).fold(z, |acc, n| aux_step(dp, n, acc));
    // the period map is affine: z ↦ M z + q
    let q = period_map(AuxState::new(0.0, 0.0));
    let e1 = period_map(AuxState::new(1.0, 0.0));
    let e2 = period_map(AuxState::new(0.0, 1.0));
    let (m11, m21) = (e1.x - q.x, e1.y - q.y);
    let (m12, m22) = (e2.x - q.x, e2.y - q.y);
    let (a11, a12, a21, a22) = (1.0 - m11, -m12, -m21, 1.0 - m22);
    let det = a11 * a22 - a12 * a21;
    if !(det.abs() > 1e-14) {
        return Err(Error::Singular(format!("det(I - M) = {det:e} for step period {omega}")));
    }
    let start = AuxState::new((q.x * a22 - a12 * q.y) / det, (a11 * q.y - a21 * q.x) / det);
    let mut orbit = Vec::with_capacity(omega);
    let mut z = start;
    for n in 0..omega {
        orbit.push(z);
        z = aux_step(dp, n, z);
    }
    let residual = (z.x - start.x).abs().max((z.y - start.y).abs());
    if residual > 1e-12 * (1.0 + start.x.abs().max(start.y.abs())) {
        return Err(Error::Singular(format!(
            "periodic orbit does not close (residual {residual:e})"
        )));
    }
    Ok(orbit)
}

/// How the implicit `(S⁺, V⁺)` system is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ImplicitSolver {
    /// Closed form for incidences linear in their first argument, damped
    /// fixed-point iteration with bisection fallback otherwise.
    #[default]
    Auto,
    FixedPoint,
    Bisection,
}

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_CAP: usize = 200;
const BALANCE_TOL: f64 = 1e-10;

struct StepInput<'a> {
    c: &'a Coefficients,
    phi: &'a IncidenceFn,
    psi: &'a IncidenceFn,
    state: State,
    pop: f64,
}

impl StepInput<'_> {
    fn phi(&self, x: f64) -> f64 {
        if self.state.i == 0.0 {
            0.0
        } else {
            self.phi.raw(x, self.state.i, self.pop)
        }
    }

    fn psi(&self, x: f64) -> f64 {
        if self.state.i == 0.0 {
            0.0
        } else {
            self.psi.raw(x, self.state.i, self.pop)
        }
    }

    fn closed_form(&self) -> (f64, f64) {
        let c = self.c;
        let phi_rate = self.phi(1.0);
        let psi_rate = self.psi(1.0);
        let a = 1.0 + c.mu + c.p + c.beta * phi_rate;
        let b = 1.0 + c.mu + c.eta + c.sigma * psi_rate;
        let det = a * b - c.eta * c.p;
        let s = (b * (c.lambda + self.state.s) + c.eta * self.state.v) / det;
        let v = (c.p * s + self.state.v) / b;
        (s, v)
    }

    fn fixed_point(&self) -> Option<(f64, f64)> {
        let c = self.c;
        let st = self.state;
        let ds = 1.0 + c.mu + c.p;
        let dv = 1.0 + c.mu + c.eta;
        let kappa = (c.beta * self.phi.lipschitz_k() * st.i / ds).max(c.sigma * self.psi.lipschitz_k() * st.i / dv);
        let w = 1.0 / (1.0 + kappa);
        let (mut s, mut v) = (st.s, st.v);
        for _ in 0..FIXED_POINT_CAP {
            let ts = (c.lambda + st.s - c.beta * self.phi(s) + c.eta * v) / ds;
            let s_new = ((1.0 - w) * s + w * ts).max(0.0);
            let tv = (c.p * s_new + st.v - c.sigma * self.psi(v)) / dv;
            let v_new = ((1.0 - w) * v + w * tv).max(0.0);
            let change = (s_new - s).abs().max((v_new - v).abs());
            let scale = s_new.abs().max(v_new.abs()).max(1.0);
            s = s_new;
            v = v_new;
            if !(s.is_finite() && v.is_finite()) {
                return None;
            }
            if change <= FIXED_POINT_TOL * scale {
                return Some((s, v));
            }
        }
        None
    }

    /// `V⁺` solving `V(1+μ+η) + σψ(V, I) = p S⁺ + V_n` for a given `S⁺`.
    fn v_given_s(&self, s: f64) -> f64 {
        let c = self.c;
        let rhs = c.p * s + self.state.v;
        let dv = 1.0 + c.mu + c.eta;
        bisect(0.0, rhs / dv, |v| v * dv + c.sigma * self.psi(v) - rhs)
    }

    fn bisection(&self) -> (f64, f64) {
        let c = self.c;
        let ds = 1.0 + c.mu + c.p;
        let residual = |s: f64| s * ds + c.beta * self.phi(s) - c.lambda - self.state.s - c.eta * self.v_given_s(s);
        let mut hi = (c.lambda + self.state.s + c.eta * self.state.v).max(1.0);
        while residual(hi) < 0.0 {
            hi *= 2.0;
        }
        let s = bisect(0.0, hi, residual);
        (s, self.v_given_s(s))
    }
}

/// Root of an increasing function on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if f(lo) >= 0.0 {
        return lo;
    }
    if f(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One implicit NSFD step from step `n` to `n+1`.
pub fn nsfd_step(dp: &DiscreteParams, n: usize, phi: &IncidenceFn, psi: &IncidenceFn, s: State) -> Result<State> {
    nsfd_step_with(dp, n, phi, psi, s, ImplicitSolver::Auto)
}

pub fn nsfd_step_with(
    dp: &DiscreteParams,
    n: usize,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    s: State,
    solver: ImplicitSolver,
) -> Result<State> {
    let c = dp.at(n);
    step_coefficients(&c, n, phi, psi, s, solver)
}

pub(crate) fn step_coefficients(
    c: &Coefficients,
    n: usize,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    state: State,
    solver: ImplicitSolver,
) -> Result<State> {
    let pop = state.total();
    if state.i > 0.0 && (phi.needs_population() || psi.needs_population()) && !(pop > 0.0) {
        return Err(Error::Step {
            step: n,
            residual: f64::NAN,
            message: "standard incidence with zero total population".into(),
        });
    }
    let input = StepInput {
        c,
        phi,
        psi,
        state,
        pop,
    };
    let linear = phi.is_linear_in_x() && psi.is_linear_in_x();
    let (s_new, v_new) = match solver {
        ImplicitSolver::Auto if linear || state.i == 0.0 => input.closed_form(),
        ImplicitSolver::Auto | ImplicitSolver::FixedPoint => match input.fixed_point() {
            Some(sv) => sv,
            None if solver == ImplicitSolver::Auto => input.bisection(),
            None => {
                return Err(Error::Step {
                    step: n,
                    residual: f64::NAN,
                    message: format!("fixed-point iteration did not converge in {FIXED_POINT_CAP} iterations"),
                })
            }
        },
        ImplicitSolver::Bisection => input.bisection(),
    };
    let inflow = c.beta * input.phi(s_new) + c.sigma * input.psi(v_new);
    let i_new = (inflow + state.i) / (1.0 + c.mu + c.alpha + c.gamma);
    let r_new = (c.gamma * i_new + state.r) / (1.0 + c.mu);
    let next = State {
        s: s_new,
        i: i_new,
        r: r_new,
        v: v_new,
    };
    let lhs = (1.0 + c.mu) * next.total() + c.alpha * i_new;
    let rhs = state.total() + c.lambda;
    let residual = (lhs - rhs).abs();
    if !next.is_valid() || residual > BALANCE_TOL * (1.0 + rhs) {
        return Err(Error::Step {
            step: n,
            residual,
            message: format!("implicit solve produced {next:?}"),
        });
    }
    Ok(next)
}

/// Iterate the NSFD scheme for `n_steps` steps.
pub fn simulate_discrete(
    dp: &DiscreteParams,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    s0: State,
    n_steps: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::domain("simulation needs at least one step"));
    }
    if !s0.is_valid() {
        return Err(Error::domain(format!(
            "initial state must be finite and nonnegative, got {s0:?}"
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(s0);
    let mut st = s0;
    for n in 0..n_steps {
        st = nsfd_step(dp, n, phi, psi, st)?;
        states.push(st);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt: dp.h(),
        states,
        method: Method::Nsfd,
        first_negative: None,
    })
}

/// One-argument incidence `g(x) = ∂₂f(x, 0)` of the continuous model.
/// Linear kinds are extended linearly to negative `x`; others are evaluated at `max(x, 0)`.
fn continuous_incidence(f: &IncidenceFn, x: f64, pop: f64) -> f64 {
    if f.is_linear_in_x() {
        f.raw_d2(x, pop)
    } else {
        f.raw_d2(x.max(0.0), pop)
    }
}

fn continuous_rhs(c: &Coefficients, phi: &IncidenceFn, psi: &IncidenceFn, st: &State) -> [f64; 4] {
    let pop = st.total();
    let (g_phi, g_psi) = if pop > 0.0 || !(phi.needs_population() || psi.needs_population()) {
        (
            continuous_incidence(phi, st.s, pop),
            continuous_incidence(psi, st.v, pop),
        )
    } else {
        (0.0, 0.0)
    };
    let infection_s = c.beta * g_phi * st.i;
    let infection_v = c.sigma * g_psi * st.i;
    [
        c.lambda - infection_s - (c.mu + c.p) * st.s + c.eta * st.v,
        infection_s + infection_v - (c.mu + c.alpha + c.gamma) * st.i,
        c.gamma * st.i - c.mu * st.r,
        c.p * st.s - (c.mu + c.eta) * st.v - infection_v,
    ]
}

/// Explicit fixed-step integration of the continuous model. Negative
/// states are recorded in `first_negative`, never clamped.
pub fn integrate_continuous(
    schedules: &ScheduleSet,
    phi: &IncidenceFn,
    psi: &IncidenceFn,
    s0: State,
    t_end: f64,
    h: f64,
    method: Method,
) -> Result<Trajectory> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("step must be positive, got {h}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::domain(format!("end time must be positive, got {t_end}")));
    }
    if method == Method::Nsfd {
        return Err(Error::domain("integrate_continuous supports euler and rk4 only"));
    }
    if !s0.is_valid() {
        return Err(Error::domain(format!(
            "initial state must be finite and nonnegative, got {s0:?}"
        )));
    }
    let n_steps = ((t_end / h).round() as usize).max(1);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(s0);
    let mut st = s0;
    let mut first_negative = None;
    for k in 0..n_steps {
        let t = k as f64 * h;
        st = match method {
            Method::Euler => {
                let d = continuous_rhs(&schedules.at(t), phi, psi, &st);
                st.axpy(h, &d)
            }
            _ => {
                let mid = schedules.at(t + 0.5 * h);
                let k1 = continuous_rhs(&schedules.at(t), phi, psi, &st);
                let k2 = continuous_rhs(&mid, phi, psi, &st.axpy(0.5 * h, &k1));
                let k3 = continuous_rhs(&mid, phi, psi, &st.axpy(0.5 * h, &k2));
                let k4 = continuous_rhs(&schedules.at(t + h), phi, psi, &st.axpy(h, &k3));
                let d: [f64; 4] = std::array::from_fn(|j| (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0);
                st.axpy(h, &d)
            }
        };
        if first_negative.is_none() && !st.is_nonnegative() {
            first_negative = Some(k + 1);
        }
        states.push(st);
    }
    Ok(Trajectory {
        t0: 0.0,
        dt: h,
        states,
        method,
        first_negative,
    })
}
