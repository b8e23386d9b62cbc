//! Numerical checks of the operator-series identities the solver relies on:
//! reordering of absolutely convergent double sums, the Cauchy product, the
//! perturbed Neumann series, and the split of `P_k'` under `k' = k + eps eta`.
//!
//! Every check compares independently accumulated quantities and passes iff
//! the discrepancy is within an explicit tolerance (rounding allowance plus
//! an analytic geometric tail bound where series are truncated).

pub mod pairing;
pub mod trials;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{operator_norm, spectral_norm, LinearOperator, NormConfig, NormEstimate, SpaceVector};
use crate::projection::{build_projections, outer_sum, KVectors, BIORTHOGONALITY_TOL};

pub use pairing::{pair_index, sigma};

/// Tolerance for the exact-algebra operator split.
pub const SPLIT_TOL: f64 = 1e-12;
/// Four-way agreement tolerance for the perturbed Neumann identity.
pub const PERTURBATION_TOL: f64 = 1e-8;
/// Largest `|X| + |Y|` accepted by the perturbation check.
pub const PERTURBATION_MAX_NORM_SUM: f64 = 0.9;

/// Certified bound `|X_ij| <= scale * row_rate^i * col_rate^j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricBound {
    pub scale: f64,
    pub row_rate: f64,
    pub col_rate: f64,
}

impl GeometricBound {
    fn summable(&self) -> bool {
        let ok = |r: f64| r.is_finite() && (0.0..1.0).contains(&r);
        self.scale.is_finite() && self.scale >= 0.0 && ok(self.row_rate) && ok(self.col_rate)
    }

    /// Bound on everything outside the `n x n` leading block.
    fn tail_outside_square(&self, n: usize) -> f64 {
        let (r, s) = (self.row_rate, self.col_rate);
        self.scale * (r.powi(n as i32) + s.powi(n as i32)) / ((1.0 - r) * (1.0 - s))
    }
}

type Term2 = Box<dyn Fn(usize, usize) -> DMatrix<f64> + Send + Sync>;
type Term1 = Box<dyn Fn(usize) -> DMatrix<f64> + Send + Sync>;

/// Doubly indexed family of operators `X_ij`.
pub struct OperatorFamily {
    pub dim: usize,
    pub term: Term2,
    pub bound: Option<GeometricBound>,
}

/// Sequence `X_i` with `|X_i| <= scale * rate^i`.
pub struct OperatorSequence {
    pub dim: usize,
    pub term: Term1,
    pub scale: f64,
    pub rate: f64,
}

impl OperatorSequence {
    fn summable(&self) -> bool {
        self.scale.is_finite() && self.scale >= 0.0 && self.rate.is_finite() && (0.0..1.0).contains(&self.rate)
    }

    /// Powers `A^i`, bounded by `|A|^i`.
    pub fn powers(a: DMatrix<f64>) -> Self {
        let rate = spectral_norm(&a);
        let dim = a.nrows();
        OperatorSequence {
            dim,
            term: Box::new(move |i| a.pow(i as u32)),
            scale: 1.0,
            rate,
        }
    }
}

/// Truncation parameters: tail target `epsilon`, the index `mu` beyond which
/// the certified tail falls below it, and the number of terms actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSchedule {
    pub epsilon: f64,
    pub mu: usize,
    pub max_terms: usize,
}

impl TruncationSchedule {
    pub fn new(epsilon: f64, max_terms: usize) -> Self {
        TruncationSchedule { epsilon, mu: max_terms, max_terms }
    }

    /// Smallest `mu` with `scale * rate^mu / (1 - rate) <= epsilon`; uses
    /// `max(mu, min_terms)` terms, capped at `cap`.
    pub fn geometric(epsilon: f64, scale: f64, rate: f64, min_terms: usize, cap: usize) -> Self {
        let mu = if rate <= 0.0 || scale <= 0.0 {
            1
        } else {
            let needed = ((epsilon * (1.0 - rate) / scale).ln() / rate.ln()).ceil();
            if needed.is_finite() {
                needed.max(1.0) as usize
            } else {
                cap
            }
        };
        TruncationSchedule { epsilon, mu, max_terms: mu.max(min_terms).min(cap) }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub terms_used: usize,
    pub seed: u64,
    pub detail: Option<String>,
}

impl CheckReport {
    pub fn new(name: &str, discrepancy: f64, tolerance: f64, terms_used: usize, seed: u64) -> Self {
        CheckReport {
            name: name.to_string(),
            passed: discrepancy <= tolerance,
            discrepancy,
            tolerance,
            terms_used,
            seed,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

fn max_pairwise(ms: &[&DMatrix<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in ms.iter().enumerate() {
        for b in &ms[i + 1..] {
            worst = worst.max(spectral_norm(&(*a - *b)));
        }
    }
    worst
}

/// Row-major, column-major and `sigma`-ordered sums of `X_ij`.
///
/// The row and column orders sum the `M x M` block; the `sigma` order runs
/// over the first `2M - 1` anti-diagonals, a superset of that block. All
/// extra terms lie outside the block, so every pairwise difference is bounded
/// by `epsilon` plus the certified tail outside the block.
pub fn check_reordering(family: &OperatorFamily, sched: &TruncationSchedule, seed: u64) -> Result<CheckReport> {
    let bound = family.bound.filter(GeometricBound::summable).ok_or(Error::UnsummableFamily)?;
    let m = sched.max_terms.max(1);
    let zero = || DMatrix::<f64>::zeros(family.dim, family.dim);

    let mut rows = zero();
    for i in 0..m {
        for j in 0..m {
            rows += (family.term)(i, j);
        }
    }
    let mut cols = zero();
    for j in 0..m {
        for i in 0..m {
            cols += (family.term)(i, j);
        }
    }
    let mut diag = zero();
    let count = pairing::triangular(2 * m as u64 - 1);
    for idx in 0..count {
        let (i, j) = sigma(idx);
        diag += (family.term)(i as usize, j as usize);
    }
    let discrepancy = max_pairwise(&[&rows, &cols, &diag]);
    let tolerance = sched.epsilon + bound.tail_outside_square(m);
    Ok(CheckReport::new("reorder", discrepancy, tolerance, m, seed))
}

/// Cauchy (diagonal) accumulation `sum_t sum_{j<=t} X_j Y_{t-j}` against the
/// product of the partial sums. Uses the same block-versus-diagonals
/// argument as [`check_reordering`].
pub fn check_cauchy_product(
    xs: &OperatorSequence,
    ys: &OperatorSequence,
    sched: &TruncationSchedule,
    seed: u64,
) -> Result<CheckReport> {
    if !xs.summable() || !ys.summable() {
        return Err(Error::UnsummableFamily);
    }
    if xs.dim != ys.dim {
        return Err(Error::Dimension { expected: xs.dim, found: ys.dim });
    }
    let n = sched.max_terms.max(1);
    let span = 2 * n - 1;
    let x: Vec<DMatrix<f64>> = (0..span).map(|i| (xs.term)(i)).collect();
    let y: Vec<DMatrix<f64>> = (0..span).map(|j| (ys.term)(j)).collect();
    let sum = |v: &[DMatrix<f64>]| v.iter().fold(DMatrix::zeros(xs.dim, xs.dim), |acc, t| acc + t);
    let product = sum(&x[..n]) * sum(&y[..n]);
    let mut diagonal = DMatrix::zeros(xs.dim, xs.dim);
    for t in 0..span {
        for j in 0..=t {
            diagonal += &x[j] * &y[t - j];
        }
    }
    let discrepancy = spectral_norm(&(diagonal - product));
    let tail = GeometricBound { scale: xs.scale * ys.scale, row_rate: xs.rate, col_rate: ys.rate };
    let tolerance = sched.epsilon + tail.tail_outside_square(n);
    Ok(CheckReport::new("cauchy", discrepancy, tolerance, n, seed))
}

/// Operands of the perturbed Neumann identity.
#[derive(Debug, Clone)]
pub struct LemmaOperands {
    pub x: LinearOperator,
    pub y: LinearOperator,
    pub x_norm: NormEstimate,
    pub y_norm: NormEstimate,
}

impl LemmaOperands {
    pub fn new(x: LinearOperator, y: LinearOperator) -> Result<Self> {
        let cfg = NormConfig::default();
        x.add(&y)?;
        let x_norm = operator_norm(&x, &cfg)?;
        let y_norm = operator_norm(&y, &cfg)?;
        Ok(LemmaOperands { x, y, x_norm, y_norm })
    }
}

/// Truncated `sum_{i < n} T^i`.
fn truncated_neumann(t: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let dim = t.nrows();
    let mut term = DMatrix::identity(dim, dim);
    let mut total = term.clone();
    for _ in 1..n {
        term = t * term;
        total += &term;
    }
    total
}

fn dense_inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.try_inverse().ok_or(Error::SingularSystem { condition: f64::INFINITY })
}

/// `Z = sum (X + Y)^i` against `Zbar = Xbar sum (Y Xbar)^i`, each by
/// truncated series and by dense inverses. Requires `|X| + |Y| <= 0.9`.
pub fn check_neumann_perturbation(ops: &LemmaOperands, sched: &TruncationSchedule, seed: u64) -> Result<CheckReport> {
    let a = ops.x_norm.value;
    let b = ops.y_norm.value;
    if !(a + b <= PERTURBATION_MAX_NORM_SUM) {
        return Err(Error::HypothesisViolated(format!("|X| + |Y| = {} exceeds {PERTURBATION_MAX_NORM_SUM}", a + b)));
    }
    // The lemma is stated for operator norms on the space; the matrices are
    // combined in coordinates, which is the same algebra.
    let x = ops.x.matrix();
    let y = ops.y.matrix();
    let dim = x.nrows();
    let id = DMatrix::<f64>::identity(dim, dim);

    let terms_for = |rate: f64| TruncationSchedule::geometric(sched.epsilon, 1.0, rate, 1, sched.max_terms).max_terms;
    let n_z = terms_for(a + b);
    let n_x = terms_for(a);
    let n_yx = terms_for(if a < 1.0 { b / (1.0 - a) } else { 1.0 });

    let z_series = truncated_neumann(&(x + y), n_z);
    let xbar = truncated_neumann(x, n_x);
    let zbar_series = &xbar * truncated_neumann(&(y * &xbar), n_yx);

    let z_dense = dense_inverse(&id - x - y)?;
    let xinv = dense_inverse(&id - x)?;
    let zbar_dense = &xinv * dense_inverse(&id - y * &xinv)?;

    let discrepancy = max_pairwise(&[&z_series, &zbar_series, &z_dense, &zbar_dense]);
    Ok(CheckReport::new("perturb", discrepancy, PERTURBATION_TOL, n_z.max(n_x).max(n_yx), seed))
}

/// `P_{k'} = P_k - eps Pt_eta` for `k'_i = k_i + eps eta_i`, compared as
/// assembled matrices.
pub fn check_operator_split(k: &KVectors, eta: &[SpaceVector], eps: f64, seed: u64) -> Result<CheckReport> {
    let cs = k.constraints();
    let space = cs.space();
    if eta.len() != cs.m() {
        return Err(Error::Dimension { expected: cs.m(), found: eta.len() });
    }
    for (i, e) in eta.iter().enumerate() {
        let n = e.norm();
        if (n - 1.0).abs() > BIORTHOGONALITY_TOL {
            return Err(Error::Admissibility(format!("|eta_{i}| = {n}, expected 1")));
        }
        for (j, y) in cs.ys().iter().enumerate() {
            let g = e.inner(y)?;
            if g.abs() > BIORTHOGONALITY_TOL {
                return Err(Error::Admissibility(format!("<eta_{i}, y_{j}> = {g}, expected 0")));
            }
        }
    }
    let shifted: Vec<SpaceVector> = k.ks().iter().zip(eta).map(|(ki, ei)| ki.axpy(eps, ei)).collect::<Result<_>>()?;
    let k_prime = KVectors::from_vectors(cs, &shifted)?;
    let lhs = build_projections(&k_prime).p;
    let pt_eta = outer_sum(space, eta, cs.ys())?;
    let rhs = build_projections(k).p.sub(&pt_eta.scale(eps))?;
    Ok(CheckReport::new("split", lhs.max_abs_diff(&rhs), SPLIT_TOL, 0, seed))
}
