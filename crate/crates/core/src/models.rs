//! Mechanical systems `L(q, v) = ½vᵀMv − V(q)` with holonomic constraints.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, LagrangianPartials};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mass matrix is not symmetric positive definite")]
    MassNotPositiveDefinite,
    #[error("joints {0} and {1} coincide")]
    CoincidentJoints(usize, usize),
    #[error("no sample points supplied")]
    NoSamples,
}

/// Potential energy with its gradient.
pub trait Potential: Send + Sync {
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;
}

/// A configuration constraint `φ(q) = 0` with first and second derivatives.
pub trait HolonomicConstraint: Send + Sync {
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Nominal rod length when the constraint fixes a distance.
    fn rod_length(&self) -> Option<f64> {
        None
    }
    /// Current distance between the constrained points, if any.
    fn current_length(&self, _q: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// `V(q) = ½qᵀKq + c·q`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub stiffness: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl Potential for QuadraticPotential {
    fn value(&self, q: &DVector<f64>) -> f64 {
        0.5 * q.dot(&(&self.stiffness * q)) + self.linear.dot(q)
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        (&self.stiffness + self.stiffness.transpose()) * q * 0.5 + &self.linear
    }
}

/// `φ(q) = |P_i(q) − P_j(q)|² − l²` for planar points stored as
/// `(x_k, y_k)` at `q[2k], q[2k+1]`; `j = None` pins `P_i` to the origin.
#[derive(Debug, Clone)]
pub struct DistanceConstraint {
    pub point: usize,
    pub anchor: Option<usize>,
    pub length: f64,
    pub dim: usize,
}

impl DistanceConstraint {
    fn segment(&self, q: &DVector<f64>) -> (f64, f64) {
        let (x, y) = (q[2 * self.point], q[2 * self.point + 1]);
        match self.anchor {
            Some(a) => (x - q[2 * a], y - q[2 * a + 1]),
            None => (x, y),
        }
    }
}

impl HolonomicConstraint for DistanceConstraint {
    fn value(&self, q: &DVector<f64>) -> f64 {
        let (dx, dy) = self.segment(q);
        dx * dx + dy * dy - self.length * self.length
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let (dx, dy) = self.segment(q);
        let mut g = DVector::zeros(self.dim);
        g[2 * self.point] = 2.0 * dx;
        g[2 * self.point + 1] = 2.0 * dy;
        if let Some(a) = self.anchor {
            g[2 * a] = -2.0 * dx;
            g[2 * a + 1] = -2.0 * dy;
        }
        g
    }

    fn hessian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        let i = self.point;
        for c in 0..2 {
            h[(2 * i + c, 2 * i + c)] = 2.0;
            if let Some(a) = self.anchor {
                h[(2 * a + c, 2 * a + c)] = 2.0;
                h[(2 * i + c, 2 * a + c)] = -2.0;
                h[(2 * a + c, 2 * i + c)] = -2.0;
            }
        }
        h
    }

    fn rod_length(&self) -> Option<f64> {
        Some(self.length)
    }

    fn current_length(&self, q: &DVector<f64>) -> Option<f64> {
        let (dx, dy) = self.segment(q);
        Some(dx.hypot(dy))
    }
}

/// Angle of the segment `(dx, dy)` from the upward vertical, positive
/// toward `+x`, in `(−π, π]`.
pub fn segment_angle(dx: f64, dy: f64) -> f64 {
    let a = dx.atan2(dy);
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Planar chain potential: a constant load `P·y_i` at every joint plus
/// restoring angular springs `(k/2)(θ_i − θ_{i−1})²` with `θ_0 = 0`.
#[derive(Debug, Clone)]
pub struct ZieglerPotential {
    pub links: usize,
    pub stiffness: f64,
    pub load: f64,
}

impl ZieglerPotential {
    fn segments(&self, q: &DVector<f64>) -> Vec<(f64, f64)> {
        (0..self.links)
            .map(|i| {
                let (px, py) = if i == 0 { (0.0, 0.0) } else { (q[2 * i - 2], q[2 * i - 1]) };
                (q[2 * i] - px, q[2 * i + 1] - py)
            })
            .collect()
    }

    fn angles(&self, q: &DVector<f64>) -> Vec<f64> {
        self.segments(q).into_iter().map(|(dx, dy)| segment_angle(dx, dy)).collect()
    }
}

impl Potential for ZieglerPotential {
    fn value(&self, q: &DVector<f64>) -> f64 {
        let theta = self.angles(q);
        let mut v = 0.0;
        let mut prev = 0.0;
        for (i, &t) in theta.iter().enumerate() {
            v += self.load * q[2 * i + 1];
            v += 0.5 * self.stiffness * (t - prev).powi(2);
            prev = t;
        }
        v
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let segs = self.segments(q);
        let theta: Vec<f64> = segs.iter().map(|&(dx, dy)| segment_angle(dx, dy)).collect();
        let links = self.links;
        // ∂V/∂θ_i
        let dv_dtheta: Vec<f64> = (0..links)
            .map(|i| {
                let prev = if i == 0 { 0.0 } else { theta[i - 1] };
                let mut d = self.stiffness * (theta[i] - prev);
                if i + 1 < links {
                    d -= self.stiffness * (theta[i + 1] - theta[i]);
                }
                d
            })
            .collect();
        let mut g = DVector::zeros(2 * links);
        for i in 0..links {
            g[2 * i + 1] += self.load;
            let (dx, dy) = segs[i];
            let r2 = dx * dx + dy * dy;
            // θ = atan2(dx, dy): ∂θ/∂dx = dy/r², ∂θ/∂dy = −dx/r²
            let gx = dv_dtheta[i] * dy / r2;
            let gy = -dv_dtheta[i] * dx / r2;
            g[2 * i] += gx;
            g[2 * i + 1] += gy;
            if i > 0 {
                g[2 * i - 2] -= gx;
                g[2 * i - 1] -= gy;
            }
        }
        g
    }
}

/// Which built-in family a system belongs to; drives diagnostics that need
/// to know the geometry (angles, pivot).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Pendulum,
    Ziegler,
    Custom,
}

/// `L(q, v) = ½vᵀMv − V(q)` with constraints `φ^a(q) = 0`.
#[derive(Clone)]
pub struct MechanicalSystem {
    kind: SystemKind,
    mass: DMatrix<f64>,
    mass_inv: DMatrix<f64>,
    potential: Arc<dyn Potential>,
    constraints: Vec<Arc<dyn HolonomicConstraint>>,
}

impl fmt::Debug for MechanicalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MechanicalSystem")
            .field("kind", &self.kind)
            .field("n", &self.dim())
            .field("m", &self.num_constraints())
            .field("mass", &self.mass)
            .finish_non_exhaustive()
    }
}

impl MechanicalSystem {
    pub fn new(
        kind: SystemKind,
        mass: DMatrix<f64>,
        potential: Arc<dyn Potential>,
        constraints: Vec<Arc<dyn HolonomicConstraint>>,
    ) -> Result<Self, ModelError> {
        let (r, c) = mass.shape();
        if r != c {
            return Err(ModelError::DimensionMismatch { expected: r, found: c });
        }
        let asym = (&mass - mass.transpose()).amax();
        if asym > 1e-12 * mass.amax().max(1.0) {
            return Err(ModelError::MassNotPositiveDefinite);
        }
        let chol = mass.clone().cholesky().ok_or(ModelError::MassNotPositiveDefinite)?;
        let mass_inv = chol.inverse();
        Ok(Self { kind, mass, mass_inv, potential, constraints })
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn mass_inv(&self) -> &DMatrix<f64> {
        &self.mass_inv
    }

    pub fn constraints(&self) -> &[Arc<dyn HolonomicConstraint>] {
        &self.constraints
    }

    pub fn potential(&self, q: &DVector<f64>) -> f64 {
        self.potential.value(q)
    }

    pub fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.potential.gradient(q)
    }

    /// `m × n` matrix of constraint gradients.
    pub fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.num_constraints(), self.dim());
        for (a, c) in self.constraints.iter().enumerate() {
            g.row_mut(a).copy_from(&c.gradient(q).transpose());
        }
        g
    }

    /// Same system with the potential replaced, e.g. to inject faults.
    pub fn with_potential(&self, potential: Arc<dyn Potential>) -> Self {
        Self { potential, ..self.clone() }
    }

    /// Same system without its constraints.
    pub fn unconstrained(&self) -> Self {
        Self { constraints: Vec::new(), ..self.clone() }
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<(), ModelError> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch { expected: self.dim(), found: v.len() })
        }
    }
}

impl LagrangianPartials for MechanicalSystem {
    fn partials(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        for x in [q, v] {
            self.check_dim(x).map_err(|e| GeometryError::Evaluator(e.to_string()))?;
        }
        Ok((-self.potential_gradient(q), &self.mass * v))
    }
}

/// Phase-space point `(q, p)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub t: f64,
}

impl State {
    pub fn new(q: DVector<f64>, p: DVector<f64>, t: f64) -> Self {
        Self { q, p, t }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let p = DVector::zeros(q.len());
        Self { q, p, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

fn positive(name: &'static str, x: f64) -> Result<(), ModelError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, reason: format!("must be positive, got {x}") })
    }
}

/// Point mass on a massless rod of length `l` hinged at the origin;
/// `V = m g y`, `φ = x² + y² − l²`.
pub fn pendulum_system(mass: f64, gravity: f64, length: f64) -> Result<MechanicalSystem, ModelError> {
    positive("mass", mass)?;
    positive("length", length)?;
    if !gravity.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "gravity",
            reason: "must be finite".into(),
        });
    }
    let potential = QuadraticPotential {
        stiffness: DMatrix::zeros(2, 2),
        linear: DVector::from_vec(vec![0.0, mass * gravity]),
    };
    let rod = DistanceConstraint { point: 0, anchor: None, length, dim: 2 };
    MechanicalSystem::new(
        SystemKind::Pendulum,
        DMatrix::from_diagonal_element(2, 2, mass),
        Arc::new(potential),
        vec![Arc::new(rod)],
    )
}

/// Planar chain of rods from a pivot at the origin. Coordinates are
/// `(x_1, y_1, …, x_L, y_L)`.
pub fn ziegler_system(
    lengths: &[f64],
    masses: &[f64],
    stiffness: f64,
    load: f64,
) -> Result<MechanicalSystem, ModelError> {
    if lengths.len() != masses.len() {
        return Err(ModelError::DimensionMismatch { expected: lengths.len(), found: masses.len() });
    }
    if lengths.is_empty() {
        return Err(ModelError::InvalidParameter { name: "lengths", reason: "need at least one rod".into() });
    }
    for &l in lengths {
        positive("lengths", l)?;
    }
    for &m in masses {
        positive("masses", m)?;
    }
    if !(stiffness >= 0.0 && stiffness.is_finite()) {
        return Err(ModelError::InvalidParameter {
            name: "stiffness",
            reason: format!("must be non-negative, got {stiffness}"),
        });
    }
    if !load.is_finite() {
        return Err(ModelError::InvalidParameter { name: "load", reason: "must be finite".into() });
    }
    let links = lengths.len();
    let n = 2 * links;
    let diag = DVector::from_iterator(n, masses.iter().flat_map(|&m| [m, m]));
    let constraints = lengths
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let anchor = if i == 0 { None } else { Some(i - 1) };
            Arc::new(DistanceConstraint { point: i, anchor, length: l, dim: n })
                as Arc<dyn HolonomicConstraint>
        })
        .collect();
    MechanicalSystem::new(
        SystemKind::Ziegler,
        DMatrix::from_diagonal(&diag),
        Arc::new(ZieglerPotential { links, stiffness, load }),
        constraints,
    )
}

/// Unconstrained isotropic oscillator `M = mI`, `V = ½k|q|²`.
pub fn harmonic_oscillator(dim: usize, mass: f64, stiffness: f64) -> Result<MechanicalSystem, ModelError> {
    positive("mass", mass)?;
    let potential = QuadraticPotential {
        stiffness: DMatrix::from_diagonal_element(dim, dim, stiffness),
        linear: DVector::zeros(dim),
    };
    MechanicalSystem::new(
        SystemKind::Custom,
        DMatrix::from_diagonal_element(dim, dim, mass),
        Arc::new(potential),
        Vec::new(),
    )
}

/// Joint positions on a planar chain, `θ_i = atan2(x_i − x_{i−1}, y_i − y_{i−1})`
/// with the virtual base joint at the origin.
pub fn joint_angles(system: &MechanicalSystem, q: &DVector<f64>) -> Result<Vec<f64>, ModelError> {
    system.check_dim(q)?;
    if !q.len().is_multiple_of(2) {
        return Err(ModelError::DimensionMismatch { expected: q.len() + 1, found: q.len() });
    }
    let links = q.len() / 2;
    (0..links)
        .map(|i| {
            let (px, py) = if i == 0 { (0.0, 0.0) } else { (q[2 * i - 2], q[2 * i - 1]) };
            let (dx, dy) = (q[2 * i] - px, q[2 * i + 1] - py);
            if dx == 0.0 && dy == 0.0 {
                Err(ModelError::CoincidentJoints(i, i + 1))
            } else {
                Ok(segment_angle(dx, dy))
            }
        })
        .collect()
}

/// Configuration of a chain with the given joint angles (from the upward
/// vertical) and rod lengths.
pub fn chain_configuration(angles: &[f64], lengths: &[f64]) -> DVector<f64> {
    let mut q = DVector::zeros(2 * angles.len());
    let (mut x, mut y) = (0.0, 0.0);
    for (i, (&th, &l)) in angles.iter().zip(lengths).enumerate() {
        x += l * th.sin();
        y += l * th.cos();
        q[2 * i] = x;
        q[2 * i + 1] = y;
    }
    q
}

/// Legendre transform `p = M v`.
pub fn legendre(system: &MechanicalSystem, v: &DVector<f64>) -> DVector<f64> {
    system.mass() * v
}

pub fn inverse_legendre(system: &MechanicalSystem, p: &DVector<f64>) -> DVector<f64> {
    system.mass_inv() * p
}

/// Total energy `½pᵀM⁻¹p + V(q)`.
pub fn energy(system: &MechanicalSystem, state: &State) -> f64 {
    0.5 * state.p.dot(&(system.mass_inv() * &state.p)) + system.potential(&state.q)
}

pub fn constraint_residuals(system: &MechanicalSystem, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(system.num_constraints(), system.constraints().iter().map(|c| c.value(q)))
}

/// Removes the component of `p` that violates the velocity constraint
/// `G M⁻¹ p = 0`.
pub fn project_momentum(system: &MechanicalSystem, q: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    if system.num_constraints() == 0 {
        return p.clone();
    }
    let g = system.constraint_jacobian(q);
    let gm = &g * system.mass_inv();
    let schur = &gm * g.transpose();
    match schur.lu().solve(&(&gm * p)) {
        Some(mu) => p - g.transpose() * mu,
        None => p.clone(),
    }
}

/// Outcome of comparing analytic derivatives with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub samples: usize,
    pub max_gradient_error: f64,
    pub max_constraint_gradient_error: f64,
    pub max_constraint_hessian_error: f64,
    pub tolerance: f64,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.max_gradient_error
            .max(self.max_constraint_gradient_error)
            .max(self.max_constraint_hessian_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() <= self.tolerance
    }
}

const FD_STEP: f64 = 1e-6;

fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, q: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        q.len(),
        (0..q.len()).map(|i| {
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[i] += FD_STEP;
            minus[i] -= FD_STEP;
            (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
        }),
    )
}

fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    analytic
        .iter()
        .zip(reference)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// Checks `∇V`, `∇φ^a` and `∇²φ^a` against central finite differences.
/// Relative errors are measured in the max norm, scaled by
/// `max(1, ‖finite difference‖∞)`.
pub fn validate_derivatives(
    system: &MechanicalSystem,
    samples: &[DVector<f64>],
    tol: f64,
) -> Result<DerivativeReport, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::NoSamples);
    }
    let mut report = DerivativeReport {
        samples: samples.len(),
        max_gradient_error: 0.0,
        max_constraint_gradient_error: 0.0,
        max_constraint_hessian_error: 0.0,
        tolerance: tol,
    };
    for q in samples {
        system.check_dim(q)?;
        let fd = central_gradient(|x| system.potential(x), q);
        let an = system.potential_gradient(q);
        report.max_gradient_error =
            report.max_gradient_error.max(relative_error(an.as_slice(), fd.as_slice()));
        for c in system.constraints() {
            let fd = central_gradient(|x| c.value(x), q);
            let an = c.gradient(q);
            report.max_constraint_gradient_error = report
                .max_constraint_gradient_error
                .max(relative_error(an.as_slice(), fd.as_slice()));

            let n = q.len();
            let mut fd_h = DMatrix::zeros(n, n);
            for j in 0..n {
                let col = central_gradient(|x| c.gradient(x)[j], q);
                fd_h.row_mut(j).copy_from(&col.transpose());
            }
            let an_h = c.hessian(q);
            report.max_constraint_hessian_error = report
                .max_constraint_hessian_error
                .max(relative_error(an_h.as_slice(), fd_h.as_slice()));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn pendulum() -> MechanicalSystem {
        pendulum_system(1.0, 10.0, 1.0).unwrap()
    }

    #[test]
    fn pendulum_values() {
        let s = pendulum();
        assert_eq!(s.potential(&dvector![0.0, -1.0]), -10.0);
        assert_eq!(constraint_residuals(&s, &dvector![0.0, -1.0])[0], 0.0);
        assert_eq!(constraint_residuals(&s, &dvector![1.0, 1.0])[0], 1.0);
        assert_eq!(constraint_residuals(&s, &dvector![2.0, 0.0])[0], 3.0);
        let g = s.constraints()[0].gradient(&dvector![0.6, -0.8]);
        assert_relative_eq!(g, dvector![1.2, -1.6], epsilon = 1e-15);
        assert_eq!(s.constraints()[0].hessian(&dvector![0.3, 0.1]), DMatrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn pendulum_rejects_bad_parameters() {
        assert!(pendulum_system(0.0, 10.0, 1.0).is_err());
        assert!(pendulum_system(1.0, 10.0, -1.0).is_err());
        assert!(pendulum_system(1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ziegler_upright() {
        let (l1, l2, p) = (1.0, 0.5, 3.0);
        let s = ziegler_system(&[l1, l2], &[1.0, 2.0], 7.0, p).unwrap();
        let q = dvector![0.0, l1, 0.0, l1 + l2];
        assert_eq!(joint_angles(&s, &q).unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.potential(&q), p * (l1 + l1 + l2));
        assert_eq!(constraint_residuals(&s, &q), dvector![0.0, 0.0]);
        assert_eq!(s.mass().diagonal(), dvector![1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn ziegler_rejects_bad_parameters() {
        assert!(matches!(
            ziegler_system(&[1.0, 1.0], &[1.0], 1.0, 1.0),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(ziegler_system(&[1.0, 0.0], &[1.0, 1.0], 1.0, 1.0).is_err());
        assert!(ziegler_system(&[1.0], &[1.0], -1.0, 1.0).is_err());
        assert!(ziegler_system(&[], &[], 1.0, 1.0).is_err());
    }

    #[test]
    fn ziegler_hessians_have_unit_pattern() {
        let s = ziegler_system(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 1.0, 1.0).unwrap();
        let q = chain_configuration(&[0.1, 0.2, -0.3], &[1.0, 1.0, 1.0]);
        for c in s.constraints() {
            let h = c.hessian(&q);
            assert!(h.iter().all(|&x| x == 0.0 || x == 2.0 || x == -2.0));
            assert_eq!(h, h.transpose());
        }
    }

    #[test]
    fn joint_angle_conventions() {
        let s = ziegler_system(&[1.0, 1.0], &[1.0, 1.0], 1.0, 1.0).unwrap();
        assert_eq!(joint_angles(&s, &dvector![0.0, 1.0, 0.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let th = joint_angles(&s, &dvector![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(th[0], PI / 2.0);
        assert_relative_eq!(th[1], 0.0);
        let p = pendulum();
        assert_eq!(joint_angles(&p, &dvector![0.0, -1.0]).unwrap(), vec![PI]);
        assert_eq!(joint_angles(&p, &dvector![-0.0, -1.0]).unwrap(), vec![PI]);
        assert_eq!(
            joint_angles(&s, &dvector![1.0, 1.0, 1.0, 1.0]),
            Err(ModelError::CoincidentJoints(1, 2))
        );
        assert!(joint_angles(&s, &dvector![1.0, 1.0]).is_err());
    }

    #[test]
    fn chain_configuration_inverts_joint_angles() {
        let s = ziegler_system(&[1.0, 2.0], &[1.0, 1.0], 1.0, 1.0).unwrap();
        let angles = [0.3, -1.2];
        let q = chain_configuration(&angles, &[1.0, 2.0]);
        let back = joint_angles(&s, &q).unwrap();
        assert_relative_eq!(back[0], angles[0], epsilon = 1e-14);
        assert_relative_eq!(back[1], angles[1], epsilon = 1e-14);
        assert!(constraint_residuals(&s, &q).amax() < 1e-14);
    }

    #[test]
    fn legendre_examples() {
        let s = MechanicalSystem::new(
            SystemKind::Custom,
            DMatrix::from_diagonal_element(2, 2, 2.0),
            Arc::new(QuadraticPotential { stiffness: DMatrix::zeros(2, 2), linear: DVector::zeros(2) }),
            Vec::new(),
        )
        .unwrap();
        assert_eq!(legendre(&s, &dvector![1.0, 0.0]), dvector![2.0, 0.0]);
        assert_eq!(legendre(&s, &dvector![0.0, 0.0]), dvector![0.0, 0.0]);
        let v = dvector![0.3, -0.7];
        assert_relative_eq!(inverse_legendre(&s, &legendre(&s, &v)), v, epsilon = 1e-14);
    }

    #[test]
    fn energy_examples() {
        let s = pendulum();
        assert_eq!(energy(&s, &State::at_rest(dvector![0.0, -1.0])), -10.0);
        let free = harmonic_oscillator(2, 1.0, 0.0).unwrap();
        assert_eq!(energy(&free, &State::new(dvector![3.0, 4.0], dvector![1.0, 0.0], 0.0)), 0.5);
    }

    #[test]
    fn mass_must_be_spd() {
        let pot = Arc::new(QuadraticPotential { stiffness: DMatrix::zeros(2, 2), linear: DVector::zeros(2) });
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(
            MechanicalSystem::new(SystemKind::Custom, bad, pot.clone(), Vec::new()).unwrap_err(),
            ModelError::MassNotPositiveDefinite
        );
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(MechanicalSystem::new(SystemKind::Custom, asym, pot, Vec::new()).is_err());
    }

    #[test]
    fn momentum_projection_is_tangent() {
        let s = ziegler_system(&[1.0, 1.5], &[1.0, 2.0], 1.0, 1.0).unwrap();
        let q = chain_configuration(&[0.4, -0.2], &[1.0, 1.5]);
        let p = dvector![1.0, -2.0, 0.5, 3.0];
        let pp = project_momentum(&s, &q, &p);
        let g = s.constraint_jacobian(&q);
        assert!((g * s.mass_inv() * &pp).amax() < 1e-13);
        let again = project_momentum(&s, &q, &pp);
        assert_relative_eq!(again, pp, epsilon = 1e-13);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        struct Corrupt(ZieglerPotential);
        impl Potential for Corrupt {
            fn value(&self, q: &DVector<f64>) -> f64 {
                self.0.value(q)
            }
            fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
                let mut g = self.0.gradient(q);
                g[1] += 1.0;
                g
            }
        }
        let s = ziegler_system(&[1.0, 1.0], &[1.0, 1.0], 2.0, 1.0).unwrap();
        let bad = s.with_potential(Arc::new(Corrupt(ZieglerPotential { links: 2, stiffness: 2.0, load: 1.0 })));
        let samples = vec![chain_configuration(&[0.2, 0.5], &[1.0, 1.0])];
        assert!(validate_derivatives(&s, &samples, 1e-6).unwrap().passed());
        let report = validate_derivatives(&bad, &samples, 1e-6).unwrap();
        assert!(!report.passed());
        assert!(report.max_gradient_error > 0.1);
        assert_eq!(validate_derivatives(&s, &[], 1e-6), Err(ModelError::NoSamples));
    }
}
