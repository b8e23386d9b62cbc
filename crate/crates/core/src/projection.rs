//! Projection-like operators `P_k x = x - sum_i k_i <x, y_i>` and their
//! complements `Pt_k = I - P_k`.
//!
//! Admissible `k` are parameterized as `k_i = y_i + sum_a c[a][i] z_a`, where
//! `{z_a}` is an orthonormal basis of the complement of `span{y_i}`. Every
//! coefficient matrix `c` gives `<k_i, y_j> = delta_ij`, and every admissible
//! `k` has exactly one such representation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{ensure_same, gram_determinant, gram_schmidt, LinearOperator, Space, SpaceVector};

/// Tolerance for `<k_i, y_j> = delta_ij` and related orthogonality checks.
pub const BIORTHOGONALITY_TOL: f64 = 1e-10;
/// Gram determinant at or below which the `k_i` count as dependent.
pub const GRAM_DET_THRESHOLD: f64 = 1e-12;
/// Default Gram-Schmidt rejection threshold for raw constraint vectors.
pub const DEFAULT_GS_TOL: f64 = 1e-10;

/// Orthonormal constraint vectors `y_i` together with an orthonormal basis
/// of their orthogonal complement.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    space: Arc<Space>,
    ys: Vec<SpaceVector>,
    complement: Vec<SpaceVector>,
    y_mat: DMatrix<f64>,
    z_mat: DMatrix<f64>,
}

impl ConstraintSet {
    /// Orthonormalizes `raw` and completes the basis.
    pub fn new(space: &Arc<Space>, raw: &[SpaceVector], gs_tol: f64) -> Result<Self> {
        if raw.is_empty() {
            return Ok(Self::unconstrained(space));
        }
        if raw.len() > space.dim() {
            return Err(Error::Dimension { expected: space.dim(), found: raw.len() });
        }
        let ys = gram_schmidt(space, raw, gs_tol)?;
        Self::assemble(space, ys)
    }

    /// Accepts vectors that are already orthonormal (checked to 1e-10).
    pub fn from_orthonormal(space: &Arc<Space>, ys: Vec<SpaceVector>) -> Result<Self> {
        if ys.len() > space.dim() {
            return Err(Error::Dimension { expected: space.dim(), found: ys.len() });
        }
        for (i, yi) in ys.iter().enumerate() {
            ensure_same(space, yi.space())?;
            for (j, yj) in ys.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                let g = yi.inner(yj)?;
                if (g - target).abs() > BIORTHOGONALITY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "constraint vectors not orthonormal: <y_{i}, y_{j}> = {g}"
                    )));
                }
            }
        }
        Self::assemble(space, ys)
    }

    /// The empty constraint set: `P_k` is the identity.
    pub fn unconstrained(space: &Arc<Space>) -> Self {
        Self::assemble(space, Vec::new()).expect("empty constraint set always assembles")
    }

    fn assemble(space: &Arc<Space>, ys: Vec<SpaceVector>) -> Result<Self> {
        let n = space.dim();
        let m = ys.len();
        let y_mat = DMatrix::from_fn(n, m, |r, c| ys[c].values()[r]);
        let z_mat = complement_basis(space, &y_mat)?;
        let complement = (0..z_mat.ncols())
            .map(|a| SpaceVector::new(space, z_mat.column(a).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConstraintSet { space: Arc::clone(space), ys, complement, y_mat, z_mat })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    /// Number of constraints `m`.
    pub fn m(&self) -> usize {
        self.ys.len()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn ys(&self) -> &[SpaceVector] {
        &self.ys
    }

    pub fn complement(&self) -> &[SpaceVector] {
        &self.complement
    }

    /// `dim x m` matrix whose columns are the `y_i`.
    pub fn y_matrix(&self) -> &DMatrix<f64> {
        &self.y_mat
    }

    /// `dim x (dim - m)` matrix whose columns are the complement basis.
    pub fn complement_matrix(&self) -> &DMatrix<f64> {
        &self.z_mat
    }

    /// The constraint functionals `<x, y_i>`.
    pub fn functionals(&self, x: &SpaceVector) -> Result<DVector<f64>> {
        ensure_same(&self.space, x.space())?;
        Ok(self.functionals_raw(x.values()))
    }

    pub(crate) fn functionals_raw(&self, x: &DVector<f64>) -> DVector<f64> {
        let dx = weighted(&self.space, x);
        self.y_mat.tr_mul(&dx)
    }

    /// Orthogonal projector onto the complement of `span{y_i}`.
    pub fn orthogonal_complement_projector(&self) -> LinearOperator {
        let n = self.dim();
        let dy = self.weighted_y();
        let q = DMatrix::identity(n, n) - &self.y_mat * dy.transpose();
        LinearOperator::new(&self.space, q).expect("shape matches space")
    }

    /// `D Y`, so that `(D Y)^T x` evaluates all functionals.
    fn weighted_y(&self) -> DMatrix<f64> {
        let w = self.space.weights();
        DMatrix::from_fn(self.y_mat.nrows(), self.y_mat.ncols(), |r, c| w[r] * self.y_mat[(r, c)])
    }
}

fn weighted(space: &Space, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(space.weights()).map(|(v, w)| v * w))
}

/// Completes the orthonormal columns of `y` to an orthonormal basis using
/// coordinate vectors, pivoting on the largest remaining relative residual.
fn complement_basis(space: &Arc<Space>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = space.dim();
    let m = y.ncols();
    let w = space.weights();
    let mut residual = DMatrix::<f64>::identity(n, n);
    let mut basis: Vec<DVector<f64>> = (0..m).map(|c| y.column(c).into_owned()).collect();
    let deflate = |residual: &mut DMatrix<f64>, q: &DVector<f64>| {
        let dq = weighted(space, q);
        let coeffs = residual.tr_mul(&dq);
        residual.ger(-1.0, q, &coeffs, 1.0);
    };
    for q in &basis {
        deflate(&mut residual, q);
    }
    let mut used = vec![false; n];
    let mut out = DMatrix::zeros(n, n - m);
    for col in 0..(n - m) {
        let (pivot, rel) = (0..n)
            .filter(|&j| !used[j])
            .map(|j| (j, space.norm_raw(&residual.column(j).into_owned()) / w[j].sqrt()))
            .fold((usize::MAX, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if pivot == usize::MAX || rel < 1e-8 {
            return Err(Error::DependentConstraint { index: col, norm: rel.max(0.0) });
        }
        used[pivot] = true;
        let mut q = residual.column(pivot).into_owned();
        for b in &basis {
            let c = space.inner_raw(&q, b);
            q.axpy(-c, b, 1.0);
        }
        let norm = space.norm_raw(&q);
        q /= norm;
        deflate(&mut residual, &q);
        out.set_column(col, &q);
        basis.push(q);
    }
    Ok(out)
}

/// Admissible free vectors `k_i` with `<k_i, y_j> = delta_ij`.
#[derive(Debug, Clone)]
pub struct KVectors {
    constraints: Arc<ConstraintSet>,
    coeffs: DMatrix<f64>,
    ks: Vec<SpaceVector>,
    k_mat: DMatrix<f64>,
}

/// Builds `k_i = y_i + sum_a coeffs[a][i] z_a`; `coeffs` is `(dim - m) x m`.
pub fn build_k(constraints: &Arc<ConstraintSet>, coeffs: DMatrix<f64>) -> Result<KVectors> {
    let n = constraints.dim();
    let m = constraints.m();
    if coeffs.nrows() != n - m {
        return Err(Error::Dimension { expected: n - m, found: coeffs.nrows() });
    }
    if coeffs.ncols() != m {
        return Err(Error::Dimension { expected: m, found: coeffs.ncols() });
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("k coefficients must be finite".into()));
    }
    let k_mat = constraints.y_matrix() + constraints.complement_matrix() * &coeffs;
    KVectors::finish(constraints, coeffs, k_mat)
}

impl KVectors {
    /// `k = y`: the orthogonal-projection choice.
    pub fn orthogonal(constraints: &Arc<ConstraintSet>) -> KVectors {
        let n = constraints.dim();
        let m = constraints.m();
        build_k(constraints, DMatrix::zeros(n - m, m)).expect("k = y is always admissible")
    }

    /// Accepts explicit vectors, checking biorthogonality and recovering the
    /// free coefficients.
    pub fn from_vectors(constraints: &Arc<ConstraintSet>, ks: &[SpaceVector]) -> Result<KVectors> {
        let n = constraints.dim();
        let m = constraints.m();
        if ks.len() != m {
            return Err(Error::Dimension { expected: m, found: ks.len() });
        }
        for k in ks {
            ensure_same(constraints.space(), k.space())?;
        }
        let k_mat = DMatrix::from_fn(n, m, |r, c| ks[c].values()[r]);
        let coeffs = constraints.complement_matrix().transpose() * weighted_cols(constraints.space(), &k_mat);
        Self::finish(constraints, coeffs, k_mat)
    }

    fn finish(constraints: &Arc<ConstraintSet>, coeffs: DMatrix<f64>, k_mat: DMatrix<f64>) -> Result<KVectors> {
        let space = constraints.space();
        let m = constraints.m();
        let cross = constraints.y_matrix().transpose() * weighted_cols(space, &k_mat);
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                // cross[(j, i)] = <k_i, y_j>
                if (cross[(j, i)] - target).abs() > BIORTHOGONALITY_TOL {
                    return Err(Error::Admissibility(format!(
                        "<k_{i}, y_{j}> = {} but should be {target}",
                        cross[(j, i)]
                    )));
                }
            }
        }
        let ks = (0..m)
            .map(|c| SpaceVector::new(space, k_mat.column(c).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        if m > 0 {
            let det = gram_determinant(space, &ks)?;
            if !(det > GRAM_DET_THRESHOLD) {
                return Err(Error::DependentK { gram_det: det });
            }
        }
        Ok(KVectors { constraints: Arc::clone(constraints), coeffs, ks, k_mat })
    }

    pub fn constraints(&self) -> &Arc<ConstraintSet> {
        &self.constraints
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn ks(&self) -> &[SpaceVector] {
        &self.ks
    }

    /// `dim x m` matrix whose columns are the `k_i`.
    pub fn k_matrix(&self) -> &DMatrix<f64> {
        &self.k_mat
    }

    /// `k'_i = k_i + eps * eta_i`, where `eta_i = Z d_i` for the columns
    /// `d_i` of `direction` (a `(dim - m) x m` coefficient matrix).
    pub fn perturbed(&self, direction: &DMatrix<f64>, eps: f64) -> Result<KVectors> {
        build_k(&self.constraints, &self.coeffs + direction * eps)
    }
}

fn weighted_cols(space: &Space, m: &DMatrix<f64>) -> DMatrix<f64> {
    let w = space.weights();
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| w[r] * m[(r, c)])
}

/// Rank-`m` operator `x -> sum_i lefts_i <x, ys_i>`.
pub fn outer_sum(space: &Arc<Space>, lefts: &[SpaceVector], ys: &[SpaceVector]) -> Result<LinearOperator> {
    if lefts.len() != ys.len() {
        return Err(Error::Dimension { expected: ys.len(), found: lefts.len() });
    }
    let n = space.dim();
    let mut mat = DMatrix::zeros(n, n);
    for (l, y) in lefts.iter().zip(ys) {
        ensure_same(space, l.space())?;
        ensure_same(space, y.space())?;
        let dy = weighted(space, y.values());
        mat.ger(1.0, l.values(), &dy, 1.0);
    }
    LinearOperator::new(space, mat)
}

/// `P_k` and `Pt_k` as dense matrices.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub k: KVectors,
    pub p: LinearOperator,
    pub pt: LinearOperator,
}

pub fn build_projections(k: &KVectors) -> ProjectionPair {
    let cs = k.constraints();
    let space = cs.space();
    let n = space.dim();
    let pt_mat = k.k_matrix() * weighted_cols(space, cs.y_matrix()).transpose();
    let p_mat = DMatrix::identity(n, n) - &pt_mat;
    ProjectionPair {
        k: k.clone(),
        p: LinearOperator::new(space, p_mat).expect("shape matches space"),
        pt: LinearOperator::new(space, pt_mat).expect("shape matches space"),
    }
}

/// The values `<P_k x, y_j>`; all vanish for admissible `k`.
pub fn check_projected_constraints(pair: &ProjectionPair, x: &SpaceVector) -> Result<Vec<f64>> {
    let px = pair.p.apply(x)?;
    Ok(pair.k.constraints().functionals(&px)?.iter().copied().collect())
}
