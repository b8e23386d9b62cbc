//! Weighted inner-product spaces, dense operators and operator norms.
//!
//! A [`Space`] is `R^n` equipped with `<u, v> = sum_i w_i u_i v_i`. With unit
//! weights this is plain coordinate space; with quadrature weights it is the
//! Nyström image of `L^2[a, b]`, so discretized integral operators and plain
//! matrix problems share one code path.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Finite-dimensional real Hilbert space with positive diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    weights: Vec<f64>,
    nodes: Option<Vec<f64>>,
}

impl Space {
    /// Plain coordinate space of dimension `dim`.
    pub fn unit(dim: usize) -> Result<Arc<Space>> {
        Self::weighted(vec![1.0; dim])
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Arc<Space>> {
        Self::build(weights, None)
    }

    /// Space backed by quadrature nodes and weights.
    pub fn with_nodes(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Arc<Space>> {
        Self::build(weights, Some(nodes))
    }

    fn build(weights: Vec<f64>, nodes: Option<Vec<f64>>) -> Result<Arc<Space>> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("space dimension must be at least 1".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "weight {i} is {} but must be positive and finite",
                weights[i]
            )));
        }
        if let Some(nodes) = &nodes {
            if nodes.len() != weights.len() {
                return Err(Error::Dimension { expected: weights.len(), found: nodes.len() });
            }
            if nodes.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(Error::InvalidInput("nodes must be strictly increasing".into()));
            }
        }
        Ok(Arc::new(Space { weights, nodes }))
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> Option<&[f64]> {
        self.nodes.as_deref()
    }

    pub fn is_unit(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Weighted inner product of two raw coordinate vectors.
    pub fn inner_raw(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.weights.iter().zip(u.iter().zip(v.iter())).map(|(w, (a, b))| w * a * b).sum()
    }

    pub fn norm_raw(&self, u: &DVector<f64>) -> f64 {
        self.inner_raw(u, u).sqrt()
    }

    /// `D = diag(weights)` as a dense matrix.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.weights))
    }
}

pub(crate) fn ensure_same(a: &Arc<Space>, b: &Arc<Space>) -> Result<()> {
    if Arc::ptr_eq(a, b) {
        return Ok(());
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: b.dim() });
    }
    if a.weights != b.weights {
        return Err(Error::SpaceMismatch { dim: a.dim() });
    }
    Ok(())
}

/// Element of a [`Space`].
#[derive(Debug, Clone)]
pub struct SpaceVector {
    space: Arc<Space>,
    values: DVector<f64>,
}

impl SpaceVector {
    pub fn new(space: &Arc<Space>, values: DVector<f64>) -> Result<Self> {
        if values.len() != space.dim() {
            return Err(Error::Dimension { expected: space.dim(), found: values.len() });
        }
        Ok(SpaceVector { space: Arc::clone(space), values })
    }

    pub fn from_slice(space: &Arc<Space>, values: &[f64]) -> Result<Self> {
        Self::new(space, DVector::from_column_slice(values))
    }

    pub fn zeros(space: &Arc<Space>) -> Self {
        SpaceVector { space: Arc::clone(space), values: DVector::zeros(space.dim()) }
    }

    /// The `i`-th coordinate vector `e_i` (not normalized).
    pub fn basis(space: &Arc<Space>, i: usize) -> Self {
        let mut v = Self::zeros(space);
        v.values[i] = 1.0;
        v
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inner(&self, other: &SpaceVector) -> Result<f64> {
        inner(&self.space, self, other)
    }

    pub fn norm(&self) -> f64 {
        self.space.norm_raw(&self.values)
    }

    pub fn scaled(&self, s: f64) -> SpaceVector {
        SpaceVector { space: Arc::clone(&self.space), values: &self.values * s }
    }

    pub fn add(&self, other: &SpaceVector) -> Result<SpaceVector> {
        ensure_same(&self.space, &other.space)?;
        Ok(SpaceVector { space: Arc::clone(&self.space), values: &self.values + &other.values })
    }

    pub fn sub(&self, other: &SpaceVector) -> Result<SpaceVector> {
        ensure_same(&self.space, &other.space)?;
        Ok(SpaceVector { space: Arc::clone(&self.space), values: &self.values - &other.values })
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SpaceVector) -> Result<SpaceVector> {
        ensure_same(&self.space, &other.space)?;
        Ok(SpaceVector { space: Arc::clone(&self.space), values: &self.values + &other.values * s })
    }
}

/// Weighted inner product `sum_i w_i u_i v_i`.
pub fn inner(space: &Arc<Space>, u: &SpaceVector, v: &SpaceVector) -> Result<f64> {
    ensure_same(space, &u.space)?;
    ensure_same(space, &v.space)?;
    Ok(space.inner_raw(&u.values, &v.values))
}

/// Orthonormalizes `vs` with modified Gram-Schmidt and one reorthogonalization
/// pass. Fails at the first vector whose orthogonalized norm drops below `tol`.
pub fn gram_schmidt(space: &Arc<Space>, vs: &[SpaceVector], tol: f64) -> Result<Vec<SpaceVector>> {
    if vs.is_empty() {
        return Err(Error::InvalidInput("gram_schmidt needs at least one vector".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("gram_schmidt tolerance must be positive, got {tol}")));
    }
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for (index, v) in vs.iter().enumerate() {
        ensure_same(space, &v.space)?;
        let mut w = v.values.clone();
        for _pass in 0..2 {
            for q in &out {
                let c = space.inner_raw(&w, q);
                w.axpy(-c, q, 1.0);
            }
        }
        let norm = space.norm_raw(&w);
        if !(norm >= tol) {
            return Err(Error::DependentConstraint { index, norm });
        }
        out.push(w / norm);
    }
    Ok(out.into_iter().map(|values| SpaceVector { space: Arc::clone(space), values }).collect())
}

/// Dense linear operator on a [`Space`]. Entry `(i, j)` maps input component
/// `j` to output component `i`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    space: Arc<Space>,
    matrix: DMatrix<f64>,
}

impl LinearOperator {
    pub fn new(space: &Arc<Space>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = space.dim();
        if matrix.nrows() != n {
            return Err(Error::Dimension { expected: n, found: matrix.nrows() });
        }
        if matrix.ncols() != n {
            return Err(Error::Dimension { expected: n, found: matrix.ncols() });
        }
        Ok(LinearOperator { space: Arc::clone(space), matrix })
    }

    /// Builds from row-major nested slices.
    pub fn from_rows(space: &Arc<Space>, rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("ragged matrix rows".into()));
        }
        Self::new(space, DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn identity(space: &Arc<Space>) -> Self {
        LinearOperator { space: Arc::clone(space), matrix: DMatrix::identity(space.dim(), space.dim()) }
    }

    pub fn zeros(space: &Arc<Space>) -> Self {
        LinearOperator { space: Arc::clone(space), matrix: DMatrix::zeros(space.dim(), space.dim()) }
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn apply(&self, x: &SpaceVector) -> Result<SpaceVector> {
        ensure_same(&self.space, &x.space)?;
        Ok(SpaceVector { space: Arc::clone(&self.space), values: &self.matrix * &x.values })
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &LinearOperator) -> Result<LinearOperator> {
        ensure_same(&self.space, &other.space)?;
        Ok(LinearOperator { space: Arc::clone(&self.space), matrix: &self.matrix * &other.matrix })
    }

    pub fn add(&self, other: &LinearOperator) -> Result<LinearOperator> {
        ensure_same(&self.space, &other.space)?;
        Ok(LinearOperator { space: Arc::clone(&self.space), matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &LinearOperator) -> Result<LinearOperator> {
        ensure_same(&self.space, &other.space)?;
        Ok(LinearOperator { space: Arc::clone(&self.space), matrix: &self.matrix - &other.matrix })
    }

    pub fn scale(&self, s: f64) -> LinearOperator {
        LinearOperator { space: Arc::clone(&self.space), matrix: &self.matrix * s }
    }

    /// Adjoint under the weighted inner product: `D^{-1} M^T D`.
    pub fn adjoint(&self) -> LinearOperator {
        let w = self.space.weights();
        let t = self.matrix.transpose();
        let matrix = DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] * w[j] / w[i]);
        LinearOperator { space: Arc::clone(&self.space), matrix }
    }

    /// `D^{1/2} M D^{-1/2}`: the same operator expressed in a Euclidean
    /// orthonormal basis, so its spectral norm is the induced weighted norm.
    pub fn euclidean_form(&self) -> DMatrix<f64> {
        let sw: Vec<f64> = self.space.weights().iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| sw[i] * self.matrix[(i, j)] / sw[j])
    }

    pub fn max_abs_diff(&self, other: &LinearOperator) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    ExactSvd,
    PowerIteration,
}

impl NormMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMethod::ExactSvd => "exact-svd",
            NormMethod::PowerIteration => "power-iteration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig {
    /// Largest dimension handled by a full SVD.
    pub svd_cutoff: usize,
    /// Relative tolerance for power iteration.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { svd_cutoff: 512, tol: 1e-12, max_iters: 20_000 }
    }
}

/// Induced operator norm of `a` under its space's weighted inner product.
pub fn operator_norm(a: &LinearOperator, cfg: &NormConfig) -> Result<NormEstimate> {
    let b = a.euclidean_form();
    if a.dim() <= cfg.svd_cutoff {
        return Ok(NormEstimate {
            value: spectral_norm(&b),
            method: NormMethod::ExactSvd,
            iterations: 0,
            tolerance: 0.0,
        });
    }
    power_norm(&b, cfg)
}

/// Largest singular value of a dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() || m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

fn power_norm(b: &DMatrix<f64>, cfg: &NormConfig) -> Result<NormEstimate> {
    let n = b.ncols();
    let bt = b.transpose();
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64) * 0.7548776662).fract());
    v /= v.norm();
    let mut lambda = 0.0f64;
    for it in 1..=cfg.max_iters {
        let w = &bt * (b * &v);
        let next = w.norm();
        if next == 0.0 {
            return Ok(NormEstimate { value: 0.0, method: NormMethod::PowerIteration, iterations: it, tolerance: cfg.tol });
        }
        v = w / next;
        if (next - lambda).abs() <= cfg.tol * next {
            return Ok(NormEstimate {
                value: next.sqrt(),
                method: NormMethod::PowerIteration,
                iterations: it,
                tolerance: cfg.tol,
            });
        }
        lambda = next;
    }
    Err(Error::NormNotConverged {
        estimate: NormEstimate {
            value: lambda.sqrt(),
            method: NormMethod::PowerIteration,
            iterations: cfg.max_iters,
            tolerance: cfg.tol,
        },
    })
}

/// Determinant of the weighted Gram matrix of `vs`.
pub fn gram_determinant(space: &Arc<Space>, vs: &[SpaceVector]) -> Result<f64> {
    for v in vs {
        ensure_same(space, &v.space)?;
    }
    let n = vs.len();
    let g = DMatrix::from_fn(n, n, |i, j| space.inner_raw(&vs[i].values, &vs[j].values));
    Ok(g.determinant())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(space: &Arc<Space>, xs: &[f64]) -> SpaceVector {
        SpaceVector::from_slice(space, xs).unwrap()
    }

    #[test]
    fn inner_examples() {
        let s = Space::unit(2).unwrap();
        assert_eq!(inner(&s, &v(&s, &[1.0, 0.0]), &v(&s, &[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(inner(&s, &v(&s, &[3.0, 4.0]), &v(&s, &[3.0, 4.0])).unwrap(), 25.0);
        let h = Space::weighted(vec![0.5, 0.5]).unwrap();
        assert_eq!(inner(&h, &v(&h, &[1.0, 1.0]), &v(&h, &[1.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn inner_rejects_foreign_vectors() {
        let s2 = Space::unit(2).unwrap();
        let s3 = Space::unit(3).unwrap();
        let err = inner(&s2, &v(&s2, &[1.0, 0.0]), &v(&s3, &[1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, found: 3 }));
        assert!(SpaceVector::from_slice(&s2, &[1.0]).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(Space::unit(0).is_err());
        assert!(Space::weighted(vec![1.0, 0.0]).is_err());
        assert!(Space::with_nodes(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Space::with_nodes(vec![0.0, 1.0], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn gram_schmidt_examples() {
        let s = Space::unit(2).unwrap();
        let out = gram_schmidt(&s, &[v(&s, &[2.0, 0.0]), v(&s, &[0.0, 3.0])], 1e-10).unwrap();
        assert_eq!(out[0].values().as_slice(), &[1.0, 0.0]);
        assert_eq!(out[1].values().as_slice(), &[0.0, 1.0]);

        let out = gram_schmidt(&s, &[v(&s, &[1.0, 0.0]), v(&s, &[1.0, 1.0])], 1e-10).unwrap();
        assert!((out[1].values() - DVector::from_column_slice(&[0.0, 1.0])).amax() < 1e-15);

        let err = gram_schmidt(&s, &[v(&s, &[1.0, 0.0]), v(&s, &[1e-15, 0.0])], 1e-10).unwrap_err();
        assert!(matches!(err, Error::DependentConstraint { index: 1, .. }));
        assert!(gram_schmidt(&s, &[], 1e-10).is_err());
    }

    #[test]
    fn norm_examples() {
        let cfg = NormConfig::default();
        let h = Space::weighted(vec![0.2, 3.0, 0.7]).unwrap();
        assert!((operator_norm(&LinearOperator::identity(&h), &cfg).unwrap().value - 1.0).abs() < 1e-14);
        assert_eq!(operator_norm(&LinearOperator::zeros(&h), &cfg).unwrap().value, 0.0);

        let s = Space::unit(2).unwrap();
        let a = LinearOperator::from_rows(&s, &[&[0.0, 0.3], &[0.0, 0.2]]).unwrap();
        let est = operator_norm(&a, &cfg).unwrap();
        assert_eq!(est.method, NormMethod::ExactSvd);
        assert!((est.value - 0.13f64.sqrt()).abs() < 1e-14);
        assert!((est.value - 0.360555).abs() < 1e-6);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let s = Space::weighted(vec![0.5, 1.5, 2.0, 0.25]).unwrap();
        let a = LinearOperator::from_rows(
            &s,
            &[&[0.1, 0.4, 0.0, -0.2], &[0.3, -0.1, 0.2, 0.0], &[0.0, 0.5, 0.1, 0.3], &[0.2, 0.0, -0.4, 0.1]],
        )
        .unwrap();
        let exact = operator_norm(&a, &NormConfig::default()).unwrap();
        let cfg = NormConfig { svd_cutoff: 0, tol: 1e-14, max_iters: 10_000 };
        let pow = operator_norm(&a, &cfg).unwrap();
        assert_eq!(pow.method, NormMethod::PowerIteration);
        assert!(pow.tolerance > 0.0);
        assert!((pow.value - exact.value).abs() < 1e-8 * exact.value);
    }

    #[test]
    fn power_iteration_reports_best_estimate() {
        let s = Space::unit(3).unwrap();
        let a = LinearOperator::from_rows(&s, &[&[1.0, 0.0, 0.0], &[0.0, 0.999, 0.0], &[0.0, 0.0, 0.5]]).unwrap();
        let cfg = NormConfig { svd_cutoff: 0, tol: 1e-15, max_iters: 2 };
        match operator_norm(&a, &cfg) {
            Err(Error::NormNotConverged { estimate }) => {
                assert!(estimate.value > 0.9 && estimate.value <= 1.0 + 1e-12)
            }
            other => panic!("expected NormNotConverged, got {other:?}"),
        }
    }

    #[test]
    fn apply_and_compose() {
        let s = Space::unit(2).unwrap();
        let a = LinearOperator::from_rows(&s, &[&[1.0, 0.3], &[0.0, 0.2]]).unwrap();
        let y = a.apply(&v(&s, &[0.0, 1.0])).unwrap();
        assert_eq!(y.values().as_slice(), &[0.3, 0.2]);
        let id = LinearOperator::identity(&s);
        assert_eq!(id.apply(&v(&s, &[2.0, -1.0])).unwrap().values().as_slice(), &[2.0, -1.0]);
        assert_eq!(a.compose(&id).unwrap().matrix(), a.matrix());
        let s3 = Space::unit(3).unwrap();
        assert!(matches!(a.compose(&LinearOperator::identity(&s3)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn adjoint_is_weighted() {
        let s = Space::weighted(vec![0.5, 2.0]).unwrap();
        let a = LinearOperator::from_rows(&s, &[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let x = v(&s, &[0.3, -1.1]);
        let z = v(&s, &[1.7, 0.4]);
        let lhs = a.apply(&x).unwrap().inner(&z).unwrap();
        let rhs = x.inner(&a.adjoint().apply(&z).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
