//! Tensor-product spaces `H1 ⊗ H2`, the partial inner product against an
//! `H2` vector, and lifting of `H2` constraints to the product space.
//!
//! Elements of `H1 ⊗ H2` are stored as `h1.dim x h2.dim` matrices and
//! flattened row-major, `(i, j) -> i * h2.dim + j`. Product weights are the
//! outer product of the factor weights, so flattening is an isometry.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{ensure_same, Space, SpaceVector};
use crate::projection::{ConstraintSet, BIORTHOGONALITY_TOL};

#[derive(Debug, Clone)]
pub struct ProductSpace {
    h1: Arc<Space>,
    h2: Arc<Space>,
    space: Arc<Space>,
}

impl ProductSpace {
    pub fn new(h1: &Arc<Space>, h2: &Arc<Space>) -> Result<Arc<ProductSpace>> {
        let weights = h1
            .weights()
            .iter()
            .flat_map(|w1| h2.weights().iter().map(move |w2| w1 * w2))
            .collect();
        Ok(Arc::new(ProductSpace { h1: Arc::clone(h1), h2: Arc::clone(h2), space: Space::weighted(weights)? }))
    }

    pub fn h1(&self) -> &Arc<Space> {
        &self.h1
    }

    pub fn h2(&self) -> &Arc<Space> {
        &self.h2
    }

    /// The flattened space of dimension `h1.dim * h2.dim`.
    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    /// Orthonormal coordinate basis vector `psi_j = e_j / sqrt(w1_j)` of `h1`.
    pub fn psi(&self, j: usize) -> SpaceVector {
        SpaceVector::basis(&self.h1, j).scaled(1.0 / self.h1.weights()[j].sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct ProductVector {
    pspace: Arc<ProductSpace>,
    values: DMatrix<f64>,
}

impl ProductVector {
    pub fn new(pspace: &Arc<ProductSpace>, values: DMatrix<f64>) -> Result<Self> {
        let (n1, n2) = (pspace.h1.dim(), pspace.h2.dim());
        if values.nrows() != n1 {
            return Err(Error::Dimension { expected: n1, found: values.nrows() });
        }
        if values.ncols() != n2 {
            return Err(Error::Dimension { expected: n2, found: values.ncols() });
        }
        Ok(ProductVector { pspace: Arc::clone(pspace), values })
    }

    pub fn pspace(&self) -> &Arc<ProductSpace> {
        &self.pspace
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn flatten(&self) -> SpaceVector {
        let n2 = self.pspace.h2.dim();
        let flat = DVector::from_fn(self.values.len(), |idx, _| self.values[(idx / n2, idx % n2)]);
        SpaceVector::new(&self.pspace.space, flat).expect("flattened length matches")
    }

    pub fn unflatten(pspace: &Arc<ProductSpace>, v: &SpaceVector) -> Result<Self> {
        ensure_same(&pspace.space, v.space())?;
        let (n1, n2) = (pspace.h1.dim(), pspace.h2.dim());
        let values = DMatrix::from_fn(n1, n2, |i, j| v.values()[i * n2 + j]);
        Ok(ProductVector { pspace: Arc::clone(pspace), values })
    }

    pub fn inner(&self, other: &ProductVector) -> Result<f64> {
        self.flatten().inner(&other.flatten())
    }
}

/// `a ⊗ b` for `a` in `h1` and `b` in `h2`.
pub fn kron(pspace: &Arc<ProductSpace>, a: &SpaceVector, b: &SpaceVector) -> Result<ProductVector> {
    ensure_same(&pspace.h1, a.space())?;
    ensure_same(&pspace.h2, b.space())?;
    ProductVector::new(pspace, a.values() * b.values().transpose())
}

/// The partial inner product `<x, y>_2'`, characterized by
/// `<<x, y>_2', z>_1 = <x, z ⊗ y>` for every `z` in `h1`.
pub fn partial_inner(x: &ProductVector, y: &SpaceVector) -> Result<SpaceVector> {
    let h2 = &x.pspace.h2;
    ensure_same(h2, y.space())?;
    let wy = DVector::from_iterator(y.len(), y.values().iter().zip(h2.weights()).map(|(v, w)| v * w));
    SpaceVector::new(&x.pspace.h1, &x.values * wy)
}

/// Constraints `<x, y_i>_2' = 0` in `h2`, truncated to the first
/// `truncation` basis vectors `psi_j` of `h1`.
#[derive(Debug, Clone)]
pub struct LiftedConstraints {
    pspace: Arc<ProductSpace>,
    ys: Vec<SpaceVector>,
    truncation: usize,
}

impl LiftedConstraints {
    pub fn new(pspace: &Arc<ProductSpace>, ys: Vec<SpaceVector>, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidInput("truncation must be at least 1".into()));
        }
        if truncation > pspace.h1.dim() {
            return Err(Error::Dimension { expected: pspace.h1.dim(), found: truncation });
        }
        for (i, yi) in ys.iter().enumerate() {
            ensure_same(&pspace.h2, yi.space())?;
            for (j, yj) in ys.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                let g = yi.inner(yj)?;
                if (g - target).abs() > BIORTHOGONALITY_TOL {
                    return Err(Error::InvalidInput(format!("<y_{i}, y_{j}>_2 = {g}, expected {target}")));
                }
            }
        }
        Ok(LiftedConstraints { pspace: Arc::clone(pspace), ys, truncation })
    }

    /// Full truncation `J = h1.dim`.
    pub fn full(pspace: &Arc<ProductSpace>, ys: Vec<SpaceVector>) -> Result<Self> {
        let j = pspace.h1.dim();
        Self::new(pspace, ys, j)
    }

    pub fn pspace(&self) -> &Arc<ProductSpace> {
        &self.pspace
    }

    pub fn ys(&self) -> &[SpaceVector] {
        &self.ys
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }
}

/// `psi_j ⊗ v_i` for `j < truncation`, ordered `j`-major (index `j * m + i`).
pub fn lift_vectors(pspace: &Arc<ProductSpace>, vs: &[SpaceVector], truncation: usize) -> Result<Vec<SpaceVector>> {
    let mut out = Vec::with_capacity(truncation * vs.len());
    for j in 0..truncation {
        let psi = pspace.psi(j);
        for v in vs {
            out.push(kron(pspace, &psi, v)?.flatten());
        }
    }
    Ok(out)
}

/// The orthonormal family `psi_j ⊗ y_i` as a constraint set on the product space.
pub fn lift_constraints(lc: &LiftedConstraints) -> Result<ConstraintSet> {
    let total = lc.pspace.space.dim();
    let count = lc.truncation * lc.ys.len();
    if count > total {
        return Err(Error::Dimension { expected: total, found: count });
    }
    let lifted = lift_vectors(&lc.pspace, &lc.ys, lc.truncation)?;
    ConstraintSet::from_orthonormal(&lc.pspace.space, lifted)
}

/// `x - sum_i <x, y_i>_2' ⊗ k_i`, the projection-like operator written
/// with partial inner products.
pub fn expanded_projection(x: &ProductVector, ys: &[SpaceVector], ks: &[SpaceVector]) -> Result<ProductVector> {
    let pspace = &x.pspace;
    if ys.len() != ks.len() {
        return Err(Error::Dimension { expected: ys.len(), found: ks.len() });
    }
    for (i, k) in ks.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            let g = k.inner(y)?;
            if (g - target).abs() > BIORTHOGONALITY_TOL {
                return Err(Error::Admissibility(format!("<k_{i}, y_{j}>_2 = {g}, expected {target}")));
            }
        }
    }
    let mut out = x.values.clone();
    for (y, k) in ys.iter().zip(ks) {
        ensure_same(&pspace.h2, k.space())?;
        let u = partial_inner(x, y)?;
        out.ger(-1.0, u.values(), k.values(), 1.0);
    }
    ProductVector::new(pspace, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::gram_determinant;
    use crate::projection::{build_projections, KVectors};

    fn unit_pspace(n1: usize, n2: usize) -> Arc<ProductSpace> {
        ProductSpace::new(&Space::unit(n1).unwrap(), &Space::unit(n2).unwrap()).unwrap()
    }

    #[test]
    fn partial_inner_examples() {
        let ps = unit_pspace(2, 2);
        let x = ProductVector::new(&ps, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let y = SpaceVector::from_slice(ps.h2(), &[1.0, 0.0]).unwrap();
        assert_eq!(partial_inner(&x, &y).unwrap().values().as_slice(), &[1.0, 3.0]);
        let zero = SpaceVector::zeros(ps.h2());
        assert_eq!(partial_inner(&x, &zero).unwrap().values().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn partial_inner_of_rank_one() {
        let h1 = Space::weighted(vec![0.5, 1.5, 2.0]).unwrap();
        let h2 = Space::weighted(vec![0.25, 3.0]).unwrap();
        let ps = ProductSpace::new(&h1, &h2).unwrap();
        let a = SpaceVector::from_slice(&h1, &[1.0, -2.0, 0.5]).unwrap();
        let b = SpaceVector::from_slice(&h2, &[0.3, 0.7]).unwrap();
        let y = SpaceVector::from_slice(&h2, &[-1.0, 2.0]).unwrap();
        let u = partial_inner(&kron(&ps, &a, &b).unwrap(), &y).unwrap();
        let expected = a.scaled(b.inner(&y).unwrap());
        assert!((u.values() - expected.values()).amax() < 1e-12);
    }

    #[test]
    fn flatten_is_row_major_isometry() {
        let h1 = Space::weighted(vec![0.5, 2.0]).unwrap();
        let h2 = Space::weighted(vec![1.0, 0.1, 3.0]).unwrap();
        let ps = ProductSpace::new(&h1, &h2).unwrap();
        let x = ProductVector::new(&ps, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        assert_eq!(x.flatten().values().as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let direct: f64 = (0..2)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| h1.weights()[i] * h2.weights()[j] * x.values()[(i, j)].powi(2))
            .sum();
        assert!((x.inner(&x).unwrap() - direct).abs() < 1e-12);
        let back = ProductVector::unflatten(&ps, &x.flatten()).unwrap();
        assert_eq!(back.values(), x.values());
    }

    #[test]
    fn lifting_first_column_constraint() {
        let ps = unit_pspace(2, 2);
        let y = SpaceVector::from_slice(ps.h2(), &[1.0, 0.0]).unwrap();
        let cs = lift_constraints(&LiftedConstraints::full(&ps, vec![y.clone()]).unwrap()).unwrap();
        assert_eq!(cs.m(), 2);
        assert_eq!(cs.ys()[0].values().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(cs.ys()[1].values().as_slice(), &[0.0, 0.0, 1.0, 0.0]);

        let one = lift_constraints(&LiftedConstraints::new(&ps, vec![y], 1).unwrap()).unwrap();
        assert_eq!(one.m(), 1);
    }

    #[test]
    fn lifting_preserves_orthonormality_with_weights() {
        let h1 = Space::weighted(vec![0.3, 1.7, 0.9]).unwrap();
        let h2 = Space::weighted(vec![2.0, 0.5, 1.0]).unwrap();
        let ps = ProductSpace::new(&h1, &h2).unwrap();
        let raw = [
            SpaceVector::from_slice(&h2, &[1.0, 1.0, 0.0]).unwrap(),
            SpaceVector::from_slice(&h2, &[0.0, 1.0, 1.0]).unwrap(),
        ];
        let ys = crate::hilbert::gram_schmidt(&h2, &raw, 1e-10).unwrap();
        let cs = lift_constraints(&LiftedConstraints::full(&ps, ys).unwrap()).unwrap();
        let n = cs.m();
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((cs.ys()[a].inner(&cs.ys()[b]).unwrap() - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn too_many_lifted_constraints() {
        let ps = unit_pspace(2, 1);
        let y = SpaceVector::from_slice(ps.h2(), &[1.0]).unwrap();
        assert!(LiftedConstraints::new(&ps, vec![y], 3).is_err());
    }

    #[test]
    fn expanded_projection_examples() {
        let ps = unit_pspace(2, 2);
        let x = ProductVector::new(&ps, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let e1 = SpaceVector::from_slice(ps.h2(), &[1.0, 0.0]).unwrap();
        let out = expanded_projection(&x, std::slice::from_ref(&e1), std::slice::from_ref(&e1)).unwrap();
        assert_eq!(out.values(), &DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 4.0]));

        // Already constrained: unchanged.
        let again = expanded_projection(&out, std::slice::from_ref(&e1), std::slice::from_ref(&e1)).unwrap();
        assert_eq!(again.values(), out.values());

        let bad = SpaceVector::from_slice(ps.h2(), &[0.5, 1.0]).unwrap();
        assert!(matches!(expanded_projection(&x, std::slice::from_ref(&e1), &[bad]), Err(Error::Admissibility(_))));
    }

    #[test]
    fn expanded_projection_matches_lifted_matrix() {
        let h1 = Space::weighted(vec![0.4, 1.1, 2.5]).unwrap();
        let h2 = Space::weighted(vec![1.3, 0.2, 0.8, 1.0]).unwrap();
        let ps = ProductSpace::new(&h1, &h2).unwrap();
        let y = crate::hilbert::gram_schmidt(&h2, &[SpaceVector::from_slice(&h2, &[1.0, -1.0, 0.5, 2.0]).unwrap()], 1e-10)
            .unwrap();
        let cs2 = Arc::new(ConstraintSet::from_orthonormal(&h2, y.clone()).unwrap());
        let k2 = crate::projection::build_k(&cs2, DMatrix::from_column_slice(3, 1, &[0.7, -0.2, 1.4])).unwrap();

        let lifted = Arc::new(lift_constraints(&LiftedConstraints::full(&ps, y.clone()).unwrap()).unwrap());
        let lifted_k = KVectors::from_vectors(&lifted, &lift_vectors(&ps, k2.ks(), 3).unwrap()).unwrap();
        assert!(gram_determinant(ps.space(), lifted_k.ks()).unwrap() > 1e-12);
        let pair = build_projections(&lifted_k);

        let x = ProductVector::new(&ps, DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7)).unwrap();
        let expanded = expanded_projection(&x, &y, k2.ks()).unwrap().flatten();
        let matrix_form = pair.p.apply(&x.flatten()).unwrap();
        assert!((expanded.values() - matrix_form.values()).amax() < 1e-12);
    }
}
