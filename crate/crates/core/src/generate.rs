//! Seeded random instances for property checks and lemma trials.
//!
//! All generators draw from a caller-supplied RNG so that trial `i` can use
//! seed `base_seed + i` and stay reproducible.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hilbert::{spectral_norm, LinearOperator, Space, SpaceVector};
use crate::projection::{build_k, ConstraintSet, KVectors, DEFAULT_GS_TOL};
use crate::solver::{Problem, SolverSettings};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1)`.
pub fn matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Weights in `[0.2, 2)`.
pub fn weighted_space<R: Rng>(rng: &mut R, dim: usize) -> Arc<Space> {
    Space::weighted((0..dim).map(|_| rng.random_range(0.2..2.0)).collect()).expect("positive weights")
}

/// Dense matrix rescaled to a given spectral norm (Euclidean).
pub fn matrix_with_norm<R: Rng>(rng: &mut R, dim: usize, norm: f64) -> DMatrix<f64> {
    let m = matrix(rng, dim, dim);
    let s = spectral_norm(&m);
    if s == 0.0 {
        m
    } else {
        m * (norm / s)
    }
}

/// Operator with weighted induced norm exactly `norm` (up to rounding).
pub fn operator_with_norm<R: Rng>(rng: &mut R, space: &Arc<Space>, norm: f64) -> LinearOperator {
    let b = matrix_with_norm(rng, space.dim(), norm);
    // Undo the similarity D^{1/2} M D^{-1/2} so the weighted norm is `norm`.
    let sw: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
    let m = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * sw[j] / sw[i]);
    LinearOperator::new(space, m).expect("square matrix of space dimension")
}

/// `m` random (then orthonormalized) constraints.
pub fn constraints<R: Rng>(rng: &mut R, space: &Arc<Space>, m: usize) -> Arc<ConstraintSet> {
    loop {
        let raw: Vec<SpaceVector> = (0..m)
            .map(|_| SpaceVector::new(space, vector(rng, space.dim())).expect("dimension matches"))
            .collect();
        if let Ok(cs) = ConstraintSet::new(space, &raw, DEFAULT_GS_TOL) {
            return Arc::new(cs);
        }
    }
}

/// Admissible `k` with coefficients uniform in `[-scale, scale)`.
pub fn k_vectors<R: Rng>(rng: &mut R, cs: &Arc<ConstraintSet>, scale: f64) -> KVectors {
    let c = matrix(rng, cs.dim() - cs.m(), cs.m()) * scale;
    build_k(cs, c).expect("parameterized k is admissible")
}

/// `(dim - m) x m` coefficient matrix whose columns have unit Euclidean
/// norm; each column `d_i` encodes the unit direction `eta_i = Z d_i`
/// orthogonal to every constraint.
pub fn unit_directions<R: Rng>(rng: &mut R, cs: &ConstraintSet) -> DMatrix<f64> {
    let rows = cs.dim() - cs.m();
    let mut d = matrix(rng, rows, cs.m());
    for mut col in d.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        } else if rows > 0 {
            col[0] = 1.0;
        }
    }
    d
}

/// A constrained problem with a planted solution.
#[derive(Debug, Clone)]
pub struct PlantedProblem {
    pub problem: Problem,
    pub solution: SpaceVector,
}

/// Builds `A` with `|A| = a_norm`, a solution `x*` satisfying `m` random
/// constraints, and `phi = x* - A x*`.
pub fn planted_problem<R: Rng>(
    rng: &mut R,
    dim: usize,
    m: usize,
    a_norm: f64,
    weighted: bool,
) -> Result<PlantedProblem> {
    let space = if weighted { weighted_space(rng, dim) } else { Space::unit(dim)? };
    let cs = constraints(rng, &space, m);
    let a = operator_with_norm(rng, &space, a_norm);
    let free = vector(rng, dim - m);
    let x_star = SpaceVector::new(&space, cs.complement_matrix() * free)?;
    let phi = x_star.sub(&a.apply(&x_star)?)?;
    let problem = Problem::new(a, phi, cs, SolverSettings::for_dim(dim))?;
    Ok(PlantedProblem { problem, solution: x_star })
}
