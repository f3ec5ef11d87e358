//! Pointwise linear algebra of the Pontryagin bundle over `T*Q`.
//!
//! Everything here lives in a single fiber: the base point is carried along
//! for bookkeeping, and all maps are linear in the fiber coordinates. Every
//! 4n-dimensional object uses the block order `(q, p, vq, vp)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value cutoff for rank decisions on constraint rows.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Tolerance for least-squares subspace membership.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("base points differ")]
    BaseMismatch,
    #[error("constraint rows are rank deficient: rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("empty basis")]
    EmptyBasis,
    #[error("lagrangian evaluation failed: {0}")]
    Evaluator(String),
}

fn check_dim(expected: usize, found: usize) -> Result<(), GeometryError> {
    if expected == found {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, found })
    }
}

/// An element `v ⊕ η` of `TM ⊕ T*M` at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct PontryaginElement {
    pub base: DVector<f64>,
    pub v: DVector<f64>,
    pub eta: DVector<f64>,
}

impl PontryaginElement {
    pub fn new(
        base: DVector<f64>,
        v: DVector<f64>,
        eta: DVector<f64>,
    ) -> Result<Self, GeometryError> {
        check_dim(base.len(), v.len())?;
        check_dim(base.len(), eta.len())?;
        Ok(Self { base, v, eta })
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }
}

/// Symmetric pairing `<v ⊕ η, v' ⊕ η'> = η(v') + η'(v)`.
pub fn pairing(e1: &PontryaginElement, e2: &PontryaginElement) -> Result<f64, GeometryError> {
    check_dim(e1.dim(), e2.dim())?;
    if e1.base != e2.base {
        return Err(GeometryError::BaseMismatch);
    }
    Ok(e2.v.dot(&e1.eta) + e1.v.dot(&e2.eta))
}

/// Element of `TT*Q` in coordinates `(q, p, vq, vp)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleTangentVector {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub vq: DVector<f64>,
    pub vp: DVector<f64>,
}

/// Element of `T*T*Q` in coordinates `(q, p, θ, ψ)`; `θ` pairs with `vq`
/// and `ψ` with `vp`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleCotangentCovector {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub theta: DVector<f64>,
    pub psi: DVector<f64>,
}

/// Element of `T*TQ` in coordinates `(q, v, ξ, ψ)`; `ξ` pairs with `δq`
/// and `ψ` with `δv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentOfTangentCovector {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub xi: DVector<f64>,
    pub psi: DVector<f64>,
}

fn four_blocks(
    a: &DVector<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<(), GeometryError> {
    check_dim(a.len(), b.len())?;
    check_dim(a.len(), c.len())?;
    check_dim(a.len(), d.len())
}

fn stack(blocks: [&DVector<f64>; 4]) -> DVector<f64> {
    let n = blocks[0].len();
    let mut out = DVector::zeros(4 * n);
    for (k, b) in blocks.iter().enumerate() {
        out.rows_mut(k * n, n).copy_from(b);
    }
    out
}

fn unstack(x: &DVector<f64>) -> Result<[DVector<f64>; 4], GeometryError> {
    if !x.len().is_multiple_of(4) {
        return Err(GeometryError::DimensionMismatch {
            expected: 4 * (x.len() / 4),
            found: x.len(),
        });
    }
    let n = x.len() / 4;
    Ok([0, 1, 2, 3].map(|k| x.rows(k * n, n).into_owned()))
}

impl DoubleTangentVector {
    pub fn new(
        q: DVector<f64>,
        p: DVector<f64>,
        vq: DVector<f64>,
        vp: DVector<f64>,
    ) -> Result<Self, GeometryError> {
        four_blocks(&q, &p, &vq, &vp)?;
        Ok(Self { q, p, vq, vp })
    }

    pub fn zeros(n: usize) -> Self {
        let z = DVector::zeros(n);
        Self { q: z.clone(), p: z.clone(), vq: z.clone(), vp: z }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_coords(&self) -> DVector<f64> {
        stack([&self.q, &self.p, &self.vq, &self.vp])
    }

    pub fn from_coords(x: &DVector<f64>) -> Result<Self, GeometryError> {
        let [q, p, vq, vp] = unstack(x)?;
        Ok(Self { q, p, vq, vp })
    }
}

impl DoubleCotangentCovector {
    pub fn new(
        q: DVector<f64>,
        p: DVector<f64>,
        theta: DVector<f64>,
        psi: DVector<f64>,
    ) -> Result<Self, GeometryError> {
        four_blocks(&q, &p, &theta, &psi)?;
        Ok(Self { q, p, theta, psi })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_coords(&self) -> DVector<f64> {
        stack([&self.q, &self.p, &self.theta, &self.psi])
    }

    /// Canonical pairing `θ·vq + ψ·vp` with a tangent vector at the same base.
    pub fn apply(&self, w: &DoubleTangentVector) -> Result<f64, GeometryError> {
        check_dim(self.dim(), w.dim())?;
        if self.q != w.q || self.p != w.p {
            return Err(GeometryError::BaseMismatch);
        }
        Ok(self.theta.dot(&w.vq) + self.psi.dot(&w.vp))
    }
}

impl CotangentOfTangentCovector {
    pub fn new(
        q: DVector<f64>,
        v: DVector<f64>,
        xi: DVector<f64>,
        psi: DVector<f64>,
    ) -> Result<Self, GeometryError> {
        four_blocks(&q, &v, &xi, &psi)?;
        Ok(Self { q, v, xi, psi })
    }
}

/// `Ω♭ : (q, p, vq, vp) ↦ (q, p, −vp, vq)`.
pub fn omega_flat(w: &DoubleTangentVector) -> DoubleCotangentCovector {
    DoubleCotangentCovector {
        q: w.q.clone(),
        p: w.p.clone(),
        theta: -&w.vp,
        psi: w.vq.clone(),
    }
}

pub fn omega_flat_inv(a: &DoubleCotangentCovector) -> DoubleTangentVector {
    DoubleTangentVector {
        q: a.q.clone(),
        p: a.p.clone(),
        vq: a.psi.clone(),
        vp: -&a.theta,
    }
}

/// Tulczyjew isomorphism `κ : (q, p, vq, vp) ↦ (q, vq, vp, p)`.
pub fn kappa(w: &DoubleTangentVector) -> CotangentOfTangentCovector {
    CotangentOfTangentCovector {
        q: w.q.clone(),
        v: w.vq.clone(),
        xi: w.vp.clone(),
        psi: w.p.clone(),
    }
}

pub fn kappa_inv(c: &CotangentOfTangentCovector) -> DoubleTangentVector {
    DoubleTangentVector {
        q: c.q.clone(),
        p: c.psi.clone(),
        vq: c.v.clone(),
        vp: c.xi.clone(),
    }
}

/// `γ = Ω♭ ∘ κ⁻¹`, written directly as `(q, v, ξ, ψ) ↦ (q, ψ, −ξ, v)`.
pub fn gamma(c: &CotangentOfTangentCovector) -> DoubleCotangentCovector {
    DoubleCotangentCovector {
        q: c.q.clone(),
        p: c.psi.clone(),
        theta: -&c.xi,
        psi: c.v.clone(),
    }
}

/// Source of the partial derivatives of a Lagrangian `L(q, v)`.
pub trait LagrangianPartials {
    /// Returns `(∂L/∂q, ∂L/∂v)` at `(q, v)`.
    fn partials(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), GeometryError>;
}

/// `dL : (q, v) ↦ (q, v, ∂L/∂q, ∂L/∂v)`.
pub fn lagrangian_differential<L: LagrangianPartials + ?Sized>(
    lagrangian: &L,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<CotangentOfTangentCovector, GeometryError> {
    check_dim(q.len(), v.len())?;
    let (dq, dv) = lagrangian.partials(q, v)?;
    CotangentOfTangentCovector::new(q.clone(), v.clone(), dq, dv)
}

/// Dirac differential `𝒟L : (q, v) ↦ (q, ∂L/∂v, −∂L/∂q, v)`.
pub fn dirac_differential<L: LagrangianPartials + ?Sized>(
    lagrangian: &L,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DoubleCotangentCovector, GeometryError> {
    check_dim(q.len(), v.len())?;
    let (dq, dv) = lagrangian.partials(q, v)?;
    DoubleCotangentCovector::new(q.clone(), dv, -dq, v.clone())
}

/// General quadratic Lagrangian
/// `L = ½vᵀAv + vᵀBq + ½qᵀCq + c·q + d·v`.
#[derive(Debug, Clone)]
pub struct QuadraticLagrangian {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub linear_q: DVector<f64>,
    pub linear_v: DVector<f64>,
}

impl QuadraticLagrangian {
    pub fn value(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.a * v))
            + v.dot(&(&self.b * q))
            + 0.5 * q.dot(&(&self.c * q))
            + self.linear_q.dot(q)
            + self.linear_v.dot(v)
    }
}

impl LagrangianPartials for QuadraticLagrangian {
    fn partials(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let n = self.a.nrows();
        check_dim(n, q.len())?;
        check_dim(n, v.len())?;
        let sym_a = (&self.a + self.a.transpose()) * 0.5;
        let sym_c = (&self.c + self.c.transpose()) * 0.5;
        let dq = self.b.transpose() * v + sym_c * q + &self.linear_q;
        let dv = sym_a * v + &self.b * q + &self.linear_v;
        Ok((dq, dv))
    }
}

/// Constraint data at one configuration: the rows of `g` are the constraint
/// one-forms, the columns of `d` span their common kernel `Δ_Q(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFiber {
    pub n: usize,
    pub m: usize,
    pub g: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Singular values (descending) and the matching right singular vectors of
/// `a`, with the full `n × n` right factor even when `a` has fewer rows.
fn full_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let mut padded = DMatrix::zeros(n.max(a.nrows()), n);
    padded.rows_mut(0, a.nrows()).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(n, order.len());
    for (col, &i) in order.iter().enumerate() {
        v.set_column(col, &v_t.row(i).transpose());
    }
    (values, v)
}

/// Numerical rank with cutoff `RANK_CUTOFF × σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let (sv, _) = full_svd(a);
    let cutoff = RANK_CUTOFF * sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

impl ConstraintFiber {
    /// Builds the fiber from the `m × n` matrix of constraint gradients.
    pub fn from_gradients(g: DMatrix<f64>) -> Result<Self, GeometryError> {
        let (m, n) = g.shape();
        if m == 0 {
            return Ok(Self { n, m, g, d: DMatrix::identity(n, n) });
        }
        let (sv, v) = full_svd(&g);
        let cutoff = RANK_CUTOFF * sv[0];
        let rank = sv.iter().filter(|&&s| s > cutoff && s > 0.0).count();
        if rank != m {
            return Err(GeometryError::RankDeficient { rank, expected: m });
        }
        let d = v.columns(m, n - m).into_owned();
        Ok(Self { n, m, g, d })
    }

    /// Whether `vq` lies in `Δ_Q(q)`, up to `MEMBERSHIP_TOL`.
    pub fn admits_velocity(&self, vq: &DVector<f64>) -> bool {
        self.m == 0 || (&self.g * vq).amax() < MEMBERSHIP_TOL
    }

    /// Least-squares residual of `theta` against the row space of `g`.
    pub fn annihilator_residual(&self, theta: &DVector<f64>) -> f64 {
        if self.m == 0 {
            return theta.amax();
        }
        let gt = self.g.transpose();
        let svd = gt.clone().svd(true, true);
        let coeffs = svd
            .solve(theta, RANK_CUTOFF)
            .expect("both factors requested");
        (&gt * coeffs - theta).amax()
    }
}

/// A pair `(w, α)` in `TT*Q ⊕ T*T*Q` at a common base point.
pub type DiracPair = (DoubleTangentVector, DoubleCotangentCovector);

/// Spanning set of `D_{Δ_Q}(q, p)`: `2n` pairs.
///
/// The first `n − m` pairs are `(w, Ω♭w)` with `w.vq` a kernel column, the
/// next `n` are `(w, Ω♭w)` with `w.vp` a unit vector, and the last `m` are
/// `(0, α)` with `α.θ` a constraint row and `α.ψ = 0`.
pub fn dirac_fiber_basis(
    fiber: &ConstraintFiber,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<Vec<DiracPair>, GeometryError> {
    let n = fiber.n;
    check_dim(n, q.len())?;
    check_dim(n, p.len())?;
    check_dim(n, fiber.g.ncols())?;
    check_dim(n, fiber.d.nrows())?;
    let m = fiber.m;
    let d_rank = numerical_rank(&fiber.d);
    if d_rank != n - m || fiber.d.ncols() != n - m {
        return Err(GeometryError::RankDeficient { rank: d_rank, expected: n - m });
    }
    if m > 0 && numerical_rank(&fiber.g) != m {
        return Err(GeometryError::RankDeficient {
            rank: numerical_rank(&fiber.g),
            expected: m,
        });
    }

    let zero = DVector::<f64>::zeros(n);
    let at = |vq: DVector<f64>, vp: DVector<f64>| DoubleTangentVector {
        q: q.clone(),
        p: p.clone(),
        vq,
        vp,
    };
    let mut basis = Vec::with_capacity(2 * n);
    for col in fiber.d.column_iter() {
        let w = at(col.into_owned(), zero.clone());
        let a = omega_flat(&w);
        basis.push((w, a));
    }
    for i in 0..n {
        let mut e = zero.clone();
        e[i] = 1.0;
        let w = at(zero.clone(), e);
        let a = omega_flat(&w);
        basis.push((w, a));
    }
    for row in fiber.g.row_iter() {
        let a = DoubleCotangentCovector {
            q: q.clone(),
            p: p.clone(),
            theta: row.transpose(),
            psi: zero.clone(),
        };
        basis.push((at(zero.clone(), zero.clone()), a));
    }
    Ok(basis)
}

/// Reads `(w, α)` as an element of `T(T*Q) ⊕ T*(T*Q)` with base `(q, p)`.
pub fn pair_as_pontryagin(pair: &DiracPair) -> PontryaginElement {
    let (w, a) = pair;
    let n = w.dim();
    let mut base = DVector::zeros(2 * n);
    base.rows_mut(0, n).copy_from(&w.q);
    base.rows_mut(n, n).copy_from(&w.p);
    let mut v = DVector::zeros(2 * n);
    v.rows_mut(0, n).copy_from(&w.vq);
    v.rows_mut(n, n).copy_from(&w.vp);
    let mut eta = DVector::zeros(2 * n);
    eta.rows_mut(0, n).copy_from(&a.theta);
    eta.rows_mut(n, n).copy_from(&a.psi);
    PontryaginElement { base, v, eta }
}

/// Largest `|<b_i, b_j>|` over all pairs, diagonal included.
pub fn check_isotropy(basis: &[PontryaginElement]) -> Result<f64, GeometryError> {
    let first = basis.first().ok_or(GeometryError::EmptyBasis)?;
    let dim = first.dim();
    let mut worst = 0.0_f64;
    for (i, bi) in basis.iter().enumerate() {
        check_dim(dim, bi.dim())?;
        for bj in &basis[i..] {
            worst = worst.max(pairing(bi, bj)?.abs());
        }
    }
    Ok(worst)
}

/// Isotropy of a Dirac basis as returned by [`dirac_fiber_basis`].
pub fn pair_isotropy(basis: &[DiracPair]) -> Result<f64, GeometryError> {
    let elems: Vec<_> = basis.iter().map(pair_as_pontryagin).collect();
    check_isotropy(&elems)
}

/// Rank of the `k × 4n` matrix whose rows are `(w.vq, w.vp, α.θ, α.ψ)`.
pub fn basis_rank(basis: &[DiracPair]) -> usize {
    let Some((w0, _)) = basis.first() else {
        return 0;
    };
    let n = w0.dim();
    let mut rows = DMatrix::zeros(basis.len(), 4 * n);
    for (r, (w, a)) in basis.iter().enumerate() {
        let row = stack([&w.vq, &w.vp, &a.theta, &a.psi]);
        rows.row_mut(r).copy_from(&row.transpose());
    }
    numerical_rank(&rows)
}

/// Largest violation of the two membership conditions over a basis:
/// `G·w.vq = 0`, and `α − Ω♭w` has zero `ψ` block and `θ` block in the row
/// space of `G`.
pub fn membership_residual(fiber: &ConstraintFiber, basis: &[DiracPair]) -> f64 {
    let mut worst = 0.0_f64;
    for (w, a) in basis {
        if fiber.m > 0 {
            worst = worst.max((&fiber.g * &w.vq).amax());
        }
        let flat = omega_flat(w);
        let diff_theta = &a.theta - &flat.theta;
        let diff_psi = &a.psi - &flat.psi;
        worst = worst.max(diff_psi.amax());
        worst = worst.max(fiber.annihilator_residual(&diff_theta));
    }
    worst
}

/// Coordinate matrices of `ω̃₁ = −dvp∧dq + dvq∧dp` and
/// `ω̃₂ = dvp∧dq − dvq∧dp` on `TT*Q`, with entry `(i, j) = ω(e_i, e_j)`.
pub fn canonical_two_forms(n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>), GeometryError> {
    if n == 0 {
        return Err(GeometryError::DimensionMismatch { expected: 1, found: 0 });
    }
    let (q, p, vq, vp) = (0, n, 2 * n, 3 * n);
    let mut w1 = DMatrix::zeros(4 * n, 4 * n);
    for i in 0..n {
        // -dvp ∧ dq
        w1[(vp + i, q + i)] = -1.0;
        w1[(q + i, vp + i)] = 1.0;
        // dvq ∧ dp
        w1[(vq + i, p + i)] = 1.0;
        w1[(p + i, vq + i)] = -1.0;
    }
    let w2 = -&w1;
    Ok((w1, w2))
}
