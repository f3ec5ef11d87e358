//! Dirac integrators for the discrete implicit Lagrangian system and the
//! classical comparators run on the multiplier-eliminated ODE.
//!
//! With `q̃` a discrete velocity, `G_k` the constraint Jacobian at `q_k`,
//! one Dirac step solves
//!
//! ```text
//! (i)   G_k q̃ = 0
//! (ii)  p_{k+1} = M q̃
//! (iii) p_k − M q̃ − h ∇V(q_k) = G_kᵀ λ
//! ```
//!
//! for `(q_{k+1}, p_{k+1}, λ)`. Dirac-1 uses `q̃ = (q_{k+1} − q_k)/h` and
//! Dirac-2 uses `q̃ = (q_{k+1} − q_{k−1})/(2h)`. For constant `M` the system
//! is linear and is solved by eliminating `λ` through the Schur complement
//! `G_k M⁻¹ G_kᵀ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::models::{MechanicalSystem, State};

/// Relative cutoff on the singular values of `G M⁻¹ Gᵀ`.
pub const DEGENERACY_CUTOFF: f64 = 1e-12;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("timestep must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate constraint configuration (condition {condition:.3e})")]
    DegenerateConstraints { condition: f64 },
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("{scheme} needs {needed} history states, got {got}")]
    InsufficientHistory { scheme: SchemeId, needed: usize, got: usize },
    #[error("{0} is not a classical scheme")]
    NotClassical(SchemeId),
    #[error("non-finite value produced")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown scheme `{0}` (expected one of dirac1, dirac2, euler, trapezium, ab3, rk4)")]
pub struct UnknownScheme(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Dirac1,
    Dirac2,
    ExplicitEuler,
    Trapezium,
    AB3,
    RK4,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Dirac1,
        SchemeId::Dirac2,
        SchemeId::ExplicitEuler,
        SchemeId::Trapezium,
        SchemeId::AB3,
        SchemeId::RK4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Dirac1 => "dirac1",
            SchemeId::Dirac2 => "dirac2",
            SchemeId::ExplicitEuler => "euler",
            SchemeId::Trapezium => "trapezium",
            SchemeId::AB3 => "ab3",
            SchemeId::RK4 => "rk4",
        }
    }

    pub fn is_dirac(self) -> bool {
        matches!(self, SchemeId::Dirac1 | SchemeId::Dirac2)
    }

    /// Number of past states a single step consumes.
    pub fn history_len(self) -> usize {
        match self {
            SchemeId::Dirac2 => 2,
            SchemeId::AB3 => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s.trim())
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// Max absolute residuals of the discrete equations after a Dirac step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepResiduals {
    /// `G_k q̃`
    pub tangency: f64,
    /// `p_{k+1} − M q̃`
    pub momentum: f64,
    /// `p_k − M q̃ − h ∇V(q_k) − G_kᵀ λ`
    pub force_balance: f64,
    /// `q_{k+1}` minus its reconstruction from `q̃`
    pub reconstruction: f64,
}

impl StepResiduals {
    pub fn max(&self) -> f64 {
        self.tangency.max(self.momentum).max(self.force_balance).max(self.reconstruction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: State,
    pub lambda: DVector<f64>,
    pub residuals: StepResiduals,
    /// Set when `G M⁻¹ Gᵀ` is poorly conditioned but still accepted.
    pub near_degenerate: bool,
}

fn check_h(h: f64) -> Result<(), StepError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(StepError::InvalidTimestep(h))
    }
}

fn check_state(system: &MechanicalSystem, s: &State) -> Result<(), StepError> {
    for v in [&s.q, &s.p] {
        if v.len() != system.dim() {
            return Err(StepError::DimensionMismatch { expected: system.dim(), found: v.len() });
        }
    }
    Ok(())
}

/// Solves `S x = b` for the Schur complement `S = G M⁻¹ Gᵀ`, rejecting
/// configurations whose singular-value ratio is below `DEGENERACY_CUTOFF`.
/// Returns the solution and whether the ratio fell below `1e-8`.
fn solve_schur(schur: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, bool), StepError> {
    if schur.nrows() == 0 {
        return Ok((DVector::zeros(0), false));
    }
    let svd = schur.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio.is_nan() || ratio < DEGENERACY_CUTOFF {
        return Err(StepError::DegenerateConstraints { condition: ratio });
    }
    let x = svd.solve(rhs, 0.0).map_err(|_| StepError::DegenerateConstraints { condition: ratio })?;
    Ok((x, ratio < 1e-8))
}

/// `(M q̃, λ, G, ∇V, near-degenerate flag)` at the evaluation point.
type DiracSolution = (DVector<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>, bool);

/// Shared linear solve of (i)–(iii).
fn dirac_solve(
    system: &MechanicalSystem,
    q: &DVector<f64>,
    p: &DVector<f64>,
    h: f64,
) -> Result<DiracSolution, StepError> {
    let grad = system.potential_gradient(q);
    let g = system.constraint_jacobian(q);
    let rhs = p - &grad * h;
    let gm = &g * system.mass_inv();
    let schur = &gm * g.transpose();
    let (lambda, flag) = solve_schur(&schur, &(&gm * &rhs))?;
    let m_qtilde = &rhs - g.transpose() * &lambda;
    Ok((m_qtilde, lambda, g, grad, flag))
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    system: &MechanicalSystem,
    g: &DMatrix<f64>,
    grad: &DVector<f64>,
    p_k: &DVector<f64>,
    qtilde: &DVector<f64>,
    p_next: &DVector<f64>,
    lambda: &DVector<f64>,
    h: f64,
) -> StepResiduals {
    let mq = system.mass() * qtilde;
    let balance = p_k - &mq - grad * h - g.transpose() * lambda;
    StepResiduals {
        tangency: if g.nrows() == 0 { 0.0 } else { (g * qtilde).amax() },
        momentum: (p_next - mq).amax(),
        force_balance: balance.amax(),
        reconstruction: 0.0,
    }
}

/// One Dirac-1 step, `q̃ = (q_{k+1} − q_k)/h`.
pub fn dirac1_step(system: &MechanicalSystem, state: &State, h: f64) -> Result<StepResult, StepError> {
    check_h(h)?;
    check_state(system, state)?;
    let (m_qtilde, lambda, g, grad, flag) = dirac_solve(system, &state.q, &state.p, h)?;
    let qtilde = system.mass_inv() * &m_qtilde;
    let q_next = &state.q + &qtilde * h;
    let p_next = system.mass() * &qtilde;
    let mut res = residuals(system, &g, &grad, &state.p, &qtilde, &p_next, &lambda, h);
    res.reconstruction = ((&q_next - &state.q) / h - &qtilde).amax();
    let next = State::new(q_next, p_next, state.t + h);
    if !next.is_finite() || lambda.iter().any(|x| !x.is_finite()) {
        return Err(StepError::NonFinite);
    }
    Ok(StepResult { state: next, lambda, residuals: res, near_degenerate: flag })
}

/// One Dirac-2 step, `q̃ = (q_{k+1} − q_{k−1})/(2h)`, with `G` and `∇V`
/// evaluated at `curr.q`.
pub fn dirac2_step(
    system: &MechanicalSystem,
    prev: &State,
    curr: &State,
    h: f64,
) -> Result<StepResult, StepError> {
    check_h(h)?;
    check_state(system, prev)?;
    check_state(system, curr)?;
    let (m_qtilde, lambda, g, grad, flag) = dirac_solve(system, &curr.q, &curr.p, h)?;
    let qtilde = system.mass_inv() * &m_qtilde;
    let q_next = &prev.q + &qtilde * (2.0 * h);
    let p_next = system.mass() * &qtilde;
    let mut res = residuals(system, &g, &grad, &curr.p, &qtilde, &p_next, &lambda, h);
    res.reconstruction = ((&q_next - &prev.q) / (2.0 * h) - &qtilde).amax();
    let next = State::new(q_next, p_next, curr.t + h);
    if !next.is_finite() || lambda.iter().any(|x| !x.is_finite()) {
        return Err(StepError::NonFinite);
    }
    Ok(StepResult { state: next, lambda, residuals: res, near_degenerate: flag })
}

/// `L_d(q_k, q_{k+1}) = h(½q̃ᵀMq̃ − V(q_k))` with `q̃ = (q_{k+1} − q_k)/h`.
pub fn discrete_lagrangian(system: &MechanicalSystem, q_k: &DVector<f64>, q_next: &DVector<f64>, h: f64) -> f64 {
    let qt = (q_next - q_k) / h;
    h * (0.5 * qt.dot(&(system.mass() * &qt)) - system.potential(q_k))
}

/// Partial derivatives `(∂L_d/∂q_k, ∂L_d/∂q_{k+1})`.
pub fn discrete_lagrangian_partials(
    system: &MechanicalSystem,
    q_k: &DVector<f64>,
    q_next: &DVector<f64>,
    h: f64,
) -> (DVector<f64>, DVector<f64>) {
    let mqt = system.mass() * ((q_next - q_k) / h);
    (-&mqt - system.potential_gradient(q_k) * h, mqt)
}

/// Acceleration and multipliers of the continuous constrained system:
/// `M q̈ = −∇V + Gᵀλ` with `G q̈ + (q̇ᵀ∇²φ^a q̇)_a = 0`.
pub fn constrained_accel(
    system: &MechanicalSystem,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), StepError> {
    if q.len() != system.dim() || qdot.len() != system.dim() {
        return Err(StepError::DimensionMismatch {
            expected: system.dim(),
            found: if q.len() != system.dim() { q.len() } else { qdot.len() },
        });
    }
    let grad = system.potential_gradient(q);
    let minv_grad = system.mass_inv() * &grad;
    if system.num_constraints() == 0 {
        return Ok((-minv_grad, DVector::zeros(0)));
    }
    let g = system.constraint_jacobian(q);
    let curvature = DVector::from_iterator(
        system.num_constraints(),
        system.constraints().iter().map(|c| qdot.dot(&(c.hessian(q) * qdot))),
    );
    let gm = &g * system.mass_inv();
    let schur = &gm * g.transpose();
    let (lambda, _) = solve_schur(&schur, &(&g * &minv_grad - curvature))?;
    let accel = system.mass_inv() * (g.transpose() * &lambda - grad);
    Ok((accel, lambda))
}

/// Right-hand side `(M⁻¹p, M q̈)` of the first-order ODE on `(q, p)`.
pub fn phase_velocity(system: &MechanicalSystem, q: &DVector<f64>, p: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), StepError> {
    let v = system.mass_inv() * p;
    let (a, _) = constrained_accel(system, q, &v)?;
    Ok((v, system.mass() * a))
}

fn pack(q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(q);
    y.rows_mut(n, n).copy_from(p);
    y
}

fn rhs(system: &MechanicalSystem, y: &DVector<f64>) -> Result<DVector<f64>, StepError> {
    let n = system.dim();
    let q = y.rows(0, n).into_owned();
    let p = y.rows(n, n).into_owned();
    let (dq, dp) = phase_velocity(system, &q, &p)?;
    Ok(pack(&dq, &dp))
}

fn unpack(y: &DVector<f64>, t: f64) -> Result<State, StepError> {
    let n = y.len() / 2;
    let s = State::new(y.rows(0, n).into_owned(), y.rows(n, n).into_owned(), t);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(StepError::NonFinite)
    }
}

fn rk4(system: &MechanicalSystem, y: &DVector<f64>, h: f64) -> Result<DVector<f64>, StepError> {
    let k1 = rhs(system, y)?;
    let k2 = rhs(system, &(y + &k1 * (h / 2.0)))?;
    let k3 = rhs(system, &(y + &k2 * (h / 2.0)))?;
    let k4 = rhs(system, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn trapezium(system: &MechanicalSystem, y0: &DVector<f64>, h: f64) -> Result<DVector<f64>, StepError> {
    let f0 = rhs(system, y0)?;
    let base = y0 + &f0 * (h / 2.0);
    let residual = |y: &DVector<f64>| -> Result<DVector<f64>, StepError> {
        Ok(y - &base - rhs(system, y)? * (h / 2.0))
    };
    let dim = y0.len();
    let mut y = y0 + &f0 * h;
    let mut r = residual(&y)?;
    let mut norm = r.amax();
    for _ in 0..NEWTON_MAX_ITER {
        if norm <= NEWTON_TOL {
            return Ok(y);
        }
        // forward-difference Jacobian of the residual
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let eps = 1e-7 * y[j].abs().max(1.0);
            let mut yj = y.clone();
            yj[j] += eps;
            let col = (residual(&yj)? - &r) / eps;
            jac.set_column(j, &col);
        }
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or(StepError::NewtonDiverged { iterations: 0, residual: norm })?;
        let mut damping = 1.0;
        loop {
            let trial = &y + &delta * damping;
            let tr = residual(&trial)?;
            let tn = tr.amax();
            if tn < norm || damping < 1.0 / 1024.0 {
                y = trial;
                r = tr;
                norm = tn;
                break;
            }
            damping *= 0.5;
        }
    }
    if norm <= NEWTON_TOL {
        Ok(y)
    } else {
        Err(StepError::NewtonDiverged { iterations: NEWTON_MAX_ITER, residual: norm })
    }
}

/// One step of a classical scheme on the multiplier-eliminated ODE.
/// `history` is oldest first; the last entry is the current state.
pub fn classical_step(
    scheme: SchemeId,
    system: &MechanicalSystem,
    history: &[State],
    h: f64,
) -> Result<State, StepError> {
    check_h(h)?;
    if scheme.is_dirac() {
        return Err(StepError::NotClassical(scheme));
    }
    let needed = scheme.history_len();
    if history.len() < needed {
        return Err(StepError::InsufficientHistory { scheme, needed, got: history.len() });
    }
    let curr = history.last().expect("history is non-empty");
    check_state(system, curr)?;
    let y = pack(&curr.q, &curr.p);
    let next = match scheme {
        SchemeId::ExplicitEuler => &y + rhs(system, &y)? * h,
        SchemeId::RK4 => rk4(system, &y, h)?,
        SchemeId::Trapezium => trapezium(system, &y, h)?,
        SchemeId::AB3 => {
            let k = history.len();
            let f: Vec<DVector<f64>> = history[k - 3..]
                .iter()
                .map(|s| {
                    check_state(system, s)?;
                    rhs(system, &pack(&s.q, &s.p))
                })
                .collect::<Result<_, _>>()?;
            &y + (&f[2] * 23.0 - &f[1] * 16.0 + &f[0] * 5.0) * (h / 12.0)
        }
        SchemeId::Dirac1 | SchemeId::Dirac2 => unreachable!(),
    };
    unpack(&next, curr.t + h)
}
