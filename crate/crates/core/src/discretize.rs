//! Quadrature, Nyström discretization of integral operators, and the
//! built-in problem corpus.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hilbert::{LinearOperator, Space, SpaceVector};
use crate::projection::{ConstraintSet, KVectors, DEFAULT_GS_TOL};
use crate::solver::{Problem, SolverSettings};
use crate::tensor::{kron, lift_constraints, lift_vectors, LiftedConstraints, ProductSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    GaussLegendre,
    Trapezoid,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::GaussLegendre => "gauss-legendre",
            Rule::Trapezoid => "trapezoid",
        }
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-legendre" => Ok(Rule::GaussLegendre),
            "trapezoid" => Ok(Rule::Trapezoid),
            other => Err(Error::Config(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub rule: Rule,
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Config(format!("quadrature interval [{a}, {b}] must be finite with a < b")));
    }
    Ok(())
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// `n`-point Gauss-Legendre rule mapped to `[a, b]`, nodes ascending.
pub fn gauss_legendre(a: f64, b: f64, n: usize) -> Result<Quadrature> {
    check_interval(a, b)?;
    if n == 0 {
        return Err(Error::Config("Gauss-Legendre needs at least one node".into()));
    }
    let mut ref_nodes = vec![0.0; n];
    let mut ref_weights = vec![0.0; n];
    if n == 1 {
        ref_weights[0] = 2.0;
    } else {
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            ref_nodes[i] = -x;
            ref_nodes[n - 1 - i] = x;
            ref_weights[i] = w;
            ref_weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            ref_nodes[n / 2] = 0.0;
        }
    }
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    Ok(Quadrature {
        rule: Rule::GaussLegendre,
        a,
        b,
        nodes: ref_nodes.iter().map(|x| mid + half * x).collect(),
        weights: ref_weights.iter().map(|w| half * w).collect(),
    })
}

/// Composite trapezoid rule on `n >= 2` equispaced nodes.
pub fn trapezoid(a: f64, b: f64, n: usize) -> Result<Quadrature> {
    check_interval(a, b)?;
    if n < 2 {
        return Err(Error::Config("trapezoid rule needs at least two nodes".into()));
    }
    let h = (b - a) / (n - 1) as f64;
    let nodes = (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect();
    let weights = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    Ok(Quadrature { rule: Rule::Trapezoid, a, b, nodes, weights })
}

impl Quadrature {
    pub fn new(rule: Rule, a: f64, b: f64, n: usize) -> Result<Self> {
        match rule {
            Rule::GaussLegendre => gauss_legendre(a, b, n),
            Rule::Trapezoid => trapezoid(a, b, n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    /// Weighted space carrying the nodes.
    pub fn space(&self) -> Result<Arc<Space>> {
        Space::with_nodes(self.nodes.clone(), self.weights.clone())
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.nodes.iter().map(|x| f(*x)))
    }
}

/// Kernel `f(x, y)` of an integral operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `p(x) q(y)` with polynomial coefficients in ascending powers.
    SeparablePoly { p: Vec<f64>, q: Vec<f64> },
    /// `sqrt(2 / pi) sin(x y)`.
    Sine,
    /// Kernel values at node pairs.
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kernel: Kernel,
    /// Multiplier applied to every entry.
    pub scale: f64,
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl KernelSpec {
    pub fn new(kernel: Kernel, scale: f64) -> Self {
        KernelSpec { kernel, scale }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match &self.kernel {
            Kernel::SeparablePoly { p, q } if p.is_empty() || q.is_empty() => {
                Err(Error::Config("separable kernel needs nonempty coefficient lists".into()))
            }
            Kernel::Matrix(m) if m.nrows() != m.ncols() => {
                Err(Error::Config(format!("kernel matrix is {}x{}, expected square", m.nrows(), m.ncols())))
            }
            Kernel::Matrix(m) if m.nrows() != n => Err(Error::Dimension { expected: n, found: m.nrows() }),
            _ => Ok(()),
        }
    }

    fn eval(&self, i: usize, j: usize, x: f64, y: f64) -> f64 {
        match &self.kernel {
            Kernel::SeparablePoly { p, q } => horner(p, x) * horner(q, y),
            Kernel::Sine => (2.0 / PI).sqrt() * (x * y).sin(),
            Kernel::Matrix(m) => m[(i, j)],
        }
    }
}

/// `A_ij = scale * w_j * f(x_i, x_j)` on the quadrature's weighted space.
pub fn nystrom(spec: &KernelSpec, quad: &Quadrature) -> Result<LinearOperator> {
    let n = quad.len();
    spec.validate(n)?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let f = spec.eval(i, j, quad.nodes[i], quad.nodes[j]);
            let v = spec.scale * quad.weights[j] * f;
            if !v.is_finite() {
                return Err(Error::KernelEval { row: i, col: j, value: v });
            }
            m[(i, j)] = v;
        }
    }
    LinearOperator::new(&quad.space()?, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Compared entrywise against the computed solution.
    Solution,
    /// A solution of the homogeneous equation, checked through the
    /// relative defect `|A v - v| / |v|`.
    HomogeneousSolution,
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub kind: ReferenceKind,
    pub values: SpaceVector,
    pub tolerance: f64,
}

impl Reference {
    /// Relative defect `|A v + phi - v| / |v|`.
    pub fn defect(&self, problem: &Problem) -> Result<f64> {
        let v = &self.values;
        let r = problem.a.apply(v)?.add(&problem.phi)?.sub(v)?;
        Ok(r.norm() / v.norm())
    }

    /// Max-abs deviation of `x` from the reference values.
    pub fn max_error(&self, x: &SpaceVector) -> Result<f64> {
        Ok(x.sub(&self.values)?.values().amax())
    }

    /// The quantity the reference promises to keep within `tolerance`.
    pub fn self_check(&self, problem: &Problem) -> Result<f64> {
        match self.kind {
            ReferenceKind::Solution => {
                let (eq, con) = crate::solver::verify_solution(problem, &self.values)?;
                Ok(eq.max(con))
            }
            ReferenceKind::HomogeneousSolution => self.defect(problem),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusProblem {
    pub name: &'static str,
    pub problem: Problem,
    pub reference: Option<Reference>,
    pub k_init: KVectors,
}

pub const CORPUS: [&str; 3] = ["separable-basic", "sine-singular", "tensor-demo"];

pub fn corpus_names() -> &'static [&'static str] {
    &CORPUS
}

pub fn corpus(name: &str) -> Result<CorpusProblem> {
    match name {
        "separable-basic" => separable_basic(64),
        "sine-singular" => sine_singular(12.0, 200),
        "tensor-demo" => tensor_demo(),
        other => Err(Error::Config(format!("unknown corpus problem `{other}` (available: {})", CORPUS.join(", ")))),
    }
}

/// `x(s) = int_0^1 s t x(t) dt + 1`, solved by `x(s) = 1 + 0.75 s`.
pub fn separable_basic(n: usize) -> Result<CorpusProblem> {
    let quad = gauss_legendre(0.0, 1.0, n)?;
    let space = quad.space()?;
    let a = nystrom(&KernelSpec::new(Kernel::SeparablePoly { p: vec![0.0, 1.0], q: vec![0.0, 1.0] }, 1.0), &quad)?;
    let phi = SpaceVector::new(&space, DVector::from_element(n, 1.0))?;
    let cs = Arc::new(ConstraintSet::unconstrained(&space));
    let k_init = KVectors::orthogonal(&cs);
    let reference = Reference {
        kind: ReferenceKind::Solution,
        values: SpaceVector::new(&space, quad.sample(|s| 1.0 + 0.75 * s))?,
        tolerance: 1e-6,
    };
    Ok(CorpusProblem {
        name: "separable-basic",
        problem: Problem::new(a, phi, cs, SolverSettings::for_dim(n))?,
        reference: Some(reference),
        k_init,
    })
}

fn unit_normalized(space: &Arc<Space>, v: DVector<f64>) -> Result<SpaceVector> {
    let mut v = SpaceVector::new(space, v)?;
    if v.values()[0] < 0.0 {
        v = v.scaled(-1.0);
    }
    let n = v.norm();
    Ok(v.scaled(1.0 / n))
}

/// `x(s) = sqrt(2/pi) int_0^R sin(s t) x(t) dt` with `phi = 0` and the
/// constraint `<x, h_3> = 0`, where `h_3 = (2t^3 - 3t) e^{-t^2/2}` is the odd
/// Hermite function the sine transform maps to its negative. The reference
/// is the self-reciprocal `t e^{-t^2/2}`, normalized to unit weighted norm
/// and positive at the first node.
pub fn sine_singular(r: f64, n: usize) -> Result<CorpusProblem> {
    let quad = gauss_legendre(0.0, r, n)?;
    let space = quad.space()?;
    let a = nystrom(&KernelSpec::new(Kernel::Sine, 1.0), &quad)?;
    let phi = SpaceVector::zeros(&space);
    let h3 = SpaceVector::new(&space, quad.sample(|t| (2.0 * t.powi(3) - 3.0 * t) * (-0.5 * t * t).exp()))?;
    let cs = Arc::new(ConstraintSet::new(&space, &[h3], DEFAULT_GS_TOL)?);
    let k_init = KVectors::orthogonal(&cs);
    let reference = Reference {
        kind: ReferenceKind::HomogeneousSolution,
        values: unit_normalized(&space, quad.sample(|t| t * (-0.5 * t * t).exp()))?,
        tolerance: 1e-3,
    };
    Ok(CorpusProblem {
        name: "sine-singular",
        problem: Problem::new(a, phi, cs, SolverSettings::for_dim(n))?,
        reference: Some(reference),
        k_init,
    })
}

/// A constrained problem on a 4 x 4 product space: `A = A1 ⊗ A2`, the
/// partial-inner-product constraint `<X, y>_2' = 0` lifted to the four
/// functionals `psi_j ⊗ y`, and a planted solution
/// `X* = a ⊗ b + c ⊗ d` with `b, d ⊥ y`.
pub fn tensor_demo() -> Result<CorpusProblem> {
    let h1 = Space::unit(4)?;
    let quad = gauss_legendre(0.0, 1.0, 4)?;
    let h2 = quad.space()?;
    let ps = ProductSpace::new(&h1, &h2)?;

    let y = unit_normalized(&h2, DVector::from_element(4, 1.0))?;
    let lc = LiftedConstraints::full(&ps, vec![y.clone()])?;
    let cs = Arc::new(lift_constraints(&lc)?);

    let orth = |v: DVector<f64>| -> Result<SpaceVector> {
        let v = SpaceVector::new(&h2, v)?;
        let c = v.inner(&y)?;
        v.axpy(-c, &y)
    };
    let b = orth(quad.sample(|t| t))?;
    let d = orth(quad.sample(|t| t * t))?;
    let a1 = SpaceVector::from_slice(&h1, &[1.0, -0.5, 0.25, 2.0])?;
    let c1 = SpaceVector::from_slice(&h1, &[0.0, 1.0, 1.0, -1.0])?;
    let x_star = kron(&ps, &a1, &b)?.flatten().add(&kron(&ps, &c1, &d)?.flatten())?;

    let m1 = DMatrix::from_row_slice(4, 4, &[
        0.2, 0.1, 0.0, 0.0, //
        0.0, 0.3, -0.1, 0.0, //
        0.1, 0.0, 0.2, 0.1, //
        0.0, 0.0, 0.1, -0.2,
    ]);
    let a2 = nystrom(&KernelSpec::new(Kernel::SeparablePoly { p: vec![1.0, 1.0], q: vec![0.5, -1.0] }, 0.5), &quad)?;
    let a = LinearOperator::new(ps.space(), m1.kronecker(a2.matrix()))?;
    let phi = x_star.sub(&a.apply(&x_star)?)?;

    let k2 = y.axpy(0.3, &b.scaled(1.0 / b.norm()))?;
    let ks = lift_vectors(&ps, &[k2], lc.truncation())?;
    let k_init = KVectors::from_vectors(&cs, &ks)?;

    let reference = Reference { kind: ReferenceKind::Solution, values: x_star, tolerance: 1e-8 };
    Ok(CorpusProblem {
        name: "tensor-demo",
        problem: Problem::new(a, phi, cs, SolverSettings::for_dim(16))?,
        reference: Some(reference),
        k_init,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{operator_norm, NormConfig};
    use crate::solver::{solve_constrained, Status};

    #[test]
    fn low_order_rules() {
        let q = gauss_legendre(-1.0, 1.0, 1).unwrap();
        assert_eq!(q.nodes, vec![0.0]);
        assert_eq!(q.weights, vec![2.0]);

        let q = gauss_legendre(-1.0, 1.0, 2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((q.nodes[0] + r).abs() < 1e-15 && (q.nodes[1] - r).abs() < 1e-15);
        assert!((q.weights[0] - 1.0).abs() < 1e-15 && (q.weights[1] - 1.0).abs() < 1e-15);
        assert!((q.integrate(|x| x * x) - 2.0 / 3.0).abs() < 1e-15);

        assert!(matches!(gauss_legendre(0.0, 1.0, 0), Err(Error::Config(_))));
        assert!(gauss_legendre(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn gauss_legendre_accuracy() {
        for n in [2, 3, 7, 20, 64, 200] {
            let q = gauss_legendre(0.0, 1.0, n).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13, "n={n}");
            assert!((q.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-14, "n={n}");
            assert!(q.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(q.weights.iter().all(|w| *w > 0.0));
        }
        let q = gauss_legendre(0.0, 1.0, 64).unwrap();
        assert!((q.integrate(f64::exp) - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_rule() {
        let q = trapezoid(0.0, 2.0, 5).unwrap();
        assert_eq!(q.weights, vec![0.25, 0.5, 0.5, 0.5, 0.25]);
        assert!((q.integrate(|x| x) - 2.0).abs() < 1e-15);
        assert!(trapezoid(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn rank_one_kernel_norm() {
        for n in [32, 64] {
            let quad = gauss_legendre(0.0, 1.0, n).unwrap();
            let spec = KernelSpec::new(Kernel::SeparablePoly { p: vec![0.0, 1.0], q: vec![0.0, 1.0] }, 1.0);
            let a = nystrom(&spec, &quad).unwrap();
            let norm = operator_norm(&a, &NormConfig::default()).unwrap().value;
            assert!((norm - 1.0 / 3.0).abs() < 1e-6, "n={n}: {norm}");
        }
    }

    #[test]
    fn zero_and_bad_kernels() {
        let quad = gauss_legendre(0.0, 1.0, 5).unwrap();
        let a = nystrom(&KernelSpec::new(Kernel::SeparablePoly { p: vec![0.0], q: vec![1.0] }, 1.0), &quad).unwrap();
        assert_eq!(a.matrix().amax(), 0.0);

        let mut m = DMatrix::from_element(5, 5, 1.0);
        m[(2, 3)] = f64::NAN;
        let err = nystrom(&KernelSpec::new(Kernel::Matrix(m), 1.0), &quad).unwrap_err();
        assert!(matches!(err, Error::KernelEval { row: 2, col: 3, .. }));

        let err = nystrom(&KernelSpec::new(Kernel::Matrix(DMatrix::zeros(5, 4)), 1.0), &quad).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(nystrom(&KernelSpec::new(Kernel::SeparablePoly { p: vec![], q: vec![1.0] }, 1.0), &quad).is_err());
    }

    #[test]
    fn self_reciprocal_function() {
        let quad = gauss_legendre(0.0, 12.0, 200).unwrap();
        let a = nystrom(&KernelSpec::new(Kernel::Sine, 1.0), &quad).unwrap();
        let v = SpaceVector::new(a.space(), quad.sample(|x| x * (-0.5 * x * x).exp())).unwrap();
        let defect = a.apply(&v).unwrap().sub(&v).unwrap().norm() / v.norm();
        assert!(defect <= 1e-3, "{defect}");
    }

    #[test]
    fn separable_reference_value() {
        let c: f64 = 0.5 / (1.0 - 1.0 / 3.0);
        assert!((1.0 + c - 1.75).abs() < 1e-15);
        let cp = separable_basic(64).unwrap();
        let r = cp.reference.as_ref().unwrap();
        assert!(r.self_check(&cp.problem).unwrap() <= 1e-12);
    }

    #[test]
    fn separable_basic_solves_unconstrained() {
        let cp = corpus("separable-basic").unwrap();
        let report = solve_constrained(&cp.problem, &cp.k_init).unwrap();
        assert_eq!(report.status, Status::Solved);
        let err = cp.reference.unwrap().max_error(report.x.as_ref().unwrap()).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn nystrom_resolution_independence() {
        let at_one = |n: usize| {
            let cp = separable_basic(n).unwrap();
            let x = solve_constrained(&cp.problem, &cp.k_init).unwrap().x.unwrap();
            // Nyström interpolation: x(1) = phi(1) + sum_j w_j * 1 * t_j x_j.
            let nodes = cp.problem.space().nodes().unwrap().to_vec();
            let w = cp.problem.space().weights().to_vec();
            1.0 + (0..n).map(|j| w[j] * nodes[j] * x.values()[j]).sum::<f64>()
        };
        let (a, b) = (at_one(64), at_one(128));
        assert!((a - b).abs() <= 1e-10);
        assert!((a - 1.75).abs() <= 1e-10);
    }

    #[test]
    fn shipped_references_pass_self_check() {
        for name in corpus_names() {
            let cp = corpus(name).unwrap();
            let r = cp.reference.as_ref().unwrap();
            let d = r.self_check(&cp.problem).unwrap();
            assert!(d <= r.tolerance, "{name}: {d}");
        }
    }

    #[test]
    fn tensor_demo_recovers_planted_solution() {
        let cp = corpus("tensor-demo").unwrap();
        assert_eq!(cp.problem.dim(), 16);
        assert_eq!(cp.problem.constraints.m(), 4);
        let report = solve_constrained(&cp.problem, &cp.k_init).unwrap();
        assert_eq!(report.status, Status::Solved);
        let err = cp.reference.unwrap().max_error(report.x.as_ref().unwrap()).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn sine_reference_meets_constraint() {
        let cp = corpus("sine-singular").unwrap();
        let r = cp.reference.unwrap();
        let f = cp.problem.constraints.functionals(&r.values).unwrap();
        assert!(f.amax() < 1e-8, "{f}");
        assert!((r.values.norm() - 1.0).abs() < 1e-14);
        assert!(r.values.values()[0] > 0.0);
    }

    #[test]
    fn unknown_corpus_name() {
        assert!(matches!(corpus("nope"), Err(Error::Config(_))));
    }
}
