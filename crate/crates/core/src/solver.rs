//! Constrained solves of `A x + phi = x` subject to `<x, y_i> = 0`.
//!
//! For admissible `k`, the series `B_k phi = sum_n (A P_k)^n phi` solves
//! `A P_k x + phi = x`. When additionally `<B_k phi, y_i> = 0` for every `i`,
//! `P_k x = x` and `x` solves the original constrained equation. The solver
//! searches the free coefficients of `k` for a zero of those `m` residuals.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{ensure_same, operator_norm, LinearOperator, NormConfig, NormEstimate, Space, SpaceVector};
use crate::projection::{build_k, build_projections, ConstraintSet, KVectors};
use crate::search::NelderMead;

/// Largest dimension for which the dense path is the default.
pub const DENSE_DEFAULT_MAX_DIM: usize = 256;
/// Condition estimate at or above which `I - A P` counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;
/// The norm-reduction phase stops once `|A P_k|` falls below this.
const NORM_REDUCTION_TARGET: f64 = 0.9;
/// Newton stalls when an accepted step improves `|g|` by less than this fraction.
const NEWTON_STALL_RATIO: f64 = 1e-10;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Newton,
    NelderMead,
    None,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Newton => "newton",
            SearchMode::NelderMead => "nelder-mead",
            SearchMode::None => "none",
        }
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(SearchMode::Newton),
            "nelder-mead" => Ok(SearchMode::NelderMead),
            "none" => Ok(SearchMode::None),
            other => Err(Error::Config(format!(
                "unknown search mode {other:?} (expected newton, nelder-mead or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Bound on the discarded series tail.
    pub neumann_tol: f64,
    pub neumann_max_terms: usize,
    pub residual_tol: f64,
    pub search: SearchMode,
    pub search_max_iters: usize,
    /// Base finite-difference step; the actual step is `fd_step * (1 + |c|)`.
    pub fd_step: f64,
    /// Solve `(I - A P_k) x = phi` densely instead of summing the series.
    pub direct_solve: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            neumann_tol: 1e-12,
            neumann_max_terms: 10_000,
            residual_tol: 1e-10,
            search: SearchMode::Newton,
            search_max_iters: 200,
            fd_step: 1e-6,
            direct_solve: true,
        }
    }
}

impl SolverSettings {
    /// Defaults, with the dense path enabled up to [`DENSE_DEFAULT_MAX_DIM`].
    pub fn for_dim(dim: usize) -> Self {
        SolverSettings { direct_solve: dim <= DENSE_DEFAULT_MAX_DIM, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("neumann_tol", self.neumann_tol),
            ("residual_tol", self.residual_tol),
            ("fd_step", self.fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.neumann_max_terms == 0 {
            return Err(Error::Config("neumann_max_terms must be at least 1".into()));
        }
        Ok(())
    }
}

/// `A x + phi = x` subject to the constraints.
#[derive(Debug, Clone)]
pub struct Problem {
    pub a: LinearOperator,
    pub phi: SpaceVector,
    pub constraints: Arc<ConstraintSet>,
    pub settings: SolverSettings,
}

impl Problem {
    pub fn new(
        a: LinearOperator,
        phi: SpaceVector,
        constraints: Arc<ConstraintSet>,
        settings: SolverSettings,
    ) -> Result<Self> {
        ensure_same(a.space(), phi.space())?;
        ensure_same(a.space(), constraints.space())?;
        settings.validate()?;
        Ok(Problem { a, phi, constraints, settings })
    }

    pub fn space(&self) -> &Arc<Space> {
        self.a.space()
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub x: SpaceVector,
    /// Series terms summed; 0 for the dense path.
    pub terms: usize,
    pub norm: NormEstimate,
}

/// Solves `x = (A ∘ P) x + phi` by the Neumann series, or densely when
/// `s.direct_solve` is set. Requires `|A ∘ P| < 1`.
pub fn neumann_solve(
    a: &LinearOperator,
    p: &LinearOperator,
    phi: &SpaceVector,
    s: &SolverSettings,
) -> Result<NeumannSolution> {
    let m = a.compose(p)?;
    ensure_same(m.space(), phi.space())?;
    let norm = operator_norm(&m, &NormConfig::default())?;
    let q = norm.value;
    if !(q < 1.0) {
        return Err(Error::Contraction { norm: q });
    }
    if s.direct_solve {
        let x = dense_solve(&m, phi)?;
        return Ok(NeumannSolution { x, terms: 0, norm });
    }
    let space = m.space();
    let mat = m.matrix();
    let mut term = phi.values().clone();
    let mut x = term.clone();
    let mut terms = 1;
    loop {
        let tail = space.norm_raw(&term) * q / (1.0 - q);
        if tail <= s.neumann_tol {
            break;
        }
        if terms >= s.neumann_max_terms {
            return Err(Error::SeriesNotConverged { terms, tail_bound: tail });
        }
        term = mat * term;
        x += &term;
        terms += 1;
    }
    Ok(NeumannSolution { x: SpaceVector::new(space, x)?, terms, norm })
}

/// Dense LU solve of `(I - A ∘ P) x = phi`, independent of the series.
pub fn direct_solve_oracle(a: &LinearOperator, p: &LinearOperator, phi: &SpaceVector) -> Result<SpaceVector> {
    dense_solve(&a.compose(p)?, phi)
}

fn dense_solve(m: &LinearOperator, phi: &SpaceVector) -> Result<SpaceVector> {
    ensure_same(m.space(), phi.space())?;
    let n = m.dim();
    let system = DMatrix::identity(n, n) - m.matrix();
    let sv = system.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < SINGULAR_CONDITION) {
        return Err(Error::SingularSystem { condition });
    }
    let x = system
        .lu()
        .solve(phi.values())
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    SpaceVector::new(m.space(), x)
}

/// The residuals `g_i(k) = <B_k phi, y_i>`.
pub fn residual(problem: &Problem, k: &KVectors) -> Result<Vec<f64>> {
    let pair = build_projections(k);
    let sol = neumann_solve(&problem.a, &pair.p, &problem.phi, &problem.settings)?;
    Ok(problem.constraints.functionals(&sol.x)?.iter().copied().collect())
}

/// `(|A x + phi - x|, max_i |<x, y_i>|)`.
pub fn verify_solution(problem: &Problem, x: &SpaceVector) -> Result<(f64, f64)> {
    let defect = problem.a.apply(x)?.add(&problem.phi)?.sub(x)?;
    let functionals = problem.constraints.functionals(x)?;
    Ok((defect.norm(), functionals.amax()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    ResidualNonzero,
    NormGeOne,
    SearchFailed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Solved => "solved",
            Status::ResidualNonzero => "residual-nonzero",
            Status::NormGeOne => "norm-ge-one",
            Status::SearchFailed => "search-failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: Status,
    /// Absent when no admissible `k` was ever reached.
    pub x: Option<SpaceVector>,
    pub k: KVectors,
    pub norm_apk: NormEstimate,
    /// `<B_k phi, y_i>` at the final `k`; empty without `x`.
    pub residual: Vec<f64>,
    pub equation_residual: Option<f64>,
    pub constraint_residual: Option<f64>,
    pub neumann_terms: usize,
    pub region: Option<RegionEstimate>,
    pub search_iters: usize,
    /// Residual norm after each accepted search step.
    pub history: Vec<f64>,
}

/// Solution-region estimate around a `k` with `|A P_k| < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionEstimate {
    pub norm_apk: f64,
    /// `sup |A Pt_eta|` over admissible unit `eta` (an upper bound when `m > 1`).
    pub sup_apt_eta: f64,
    /// `(1 - norm_apk) / sup_apt_eta`; infinite when the sup vanishes.
    pub epsilon: f64,
    pub exact: bool,
}

impl RegionEstimate {
    pub fn unbounded(&self) -> bool {
        self.epsilon.is_infinite()
    }
}

/// Radius `eps` such that every `k' = k + eps_eta * eta` with
/// `eps_eta < eps` still gives a solution.
///
/// For one constraint `Pt_eta x = eta <x, y>` is rank one, so
/// `|A Pt_eta| = |A eta|` and the sup over unit `eta ⊥ y` is exactly
/// `|A Q|` with `Q` the orthogonal projector onto `y`'s complement. For
/// `m > 1` subadditivity gives the bound `m |A Q|`.
pub fn region_radius(problem: &Problem, k: &KVectors) -> Result<RegionEstimate> {
    let cfg = NormConfig::default();
    let pair = build_projections(k);
    let norm_apk = operator_norm(&problem.a.compose(&pair.p)?, &cfg)?.value;
    if !(norm_apk < 1.0) {
        return Err(Error::Contraction { norm: norm_apk });
    }
    let cs = &problem.constraints;
    let m = cs.m();
    let sup_apt_eta = if m == 0 {
        0.0
    } else {
        let q = cs.orthogonal_complement_projector();
        m as f64 * operator_norm(&problem.a.compose(&q)?, &cfg)?.value
    };
    let epsilon = if sup_apt_eta == 0.0 { f64::INFINITY } else { (1.0 - norm_apk) / sup_apt_eta };
    Ok(RegionEstimate { norm_apk, sup_apt_eta, epsilon, exact: m == 1 })
}

/// Walks `k + t * direction` for `t = step, 2 step, ...` and returns the
/// norm `|A P_k|` at the last probe before the norm reaches 1, or `None` if
/// the walk never leaves the contractive set within `max_steps`.
pub fn boundary_probe(
    problem: &Problem,
    k: &KVectors,
    direction: &DMatrix<f64>,
    step: f64,
    max_steps: usize,
) -> Result<Option<f64>> {
    let cfg = NormConfig::default();
    let norm_at = |kk: &KVectors| -> Result<f64> {
        let pair = build_projections(kk);
        Ok(operator_norm(&problem.a.compose(&pair.p)?, &cfg)?.value)
    };
    let mut last = norm_at(k)?;
    if !(last < 1.0) {
        return Err(Error::Contraction { norm: last });
    }
    for s in 1..=max_steps {
        let probe = k.perturbed(direction, step * s as f64)?;
        let n = norm_at(&probe)?;
        if !(n < 1.0) {
            return Ok(Some(last));
        }
        last = n;
    }
    Ok(None)
}

/// Outcome of re-solving at perturbed `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Persistence {
    pub trials: usize,
    /// Perturbed solves whose `x` satisfies equation and constraints within `tol`.
    pub persisted: usize,
    pub worst_residual: f64,
}

/// Solves at `k + step * Z d` for each direction `d` (columns of unit
/// Euclidean norm, so each `eta_i` is a unit vector orthogonal to the
/// constraints) and counts the solves that still verify within `tol`.
pub fn persistence_probe(
    problem: &Problem,
    k: &KVectors,
    directions: &[DMatrix<f64>],
    step: f64,
    tol: f64,
) -> Result<Persistence> {
    let mut persisted = 0;
    let mut worst = 0.0f64;
    for d in directions {
        let kp = k.perturbed(d, step)?;
        let pair = build_projections(&kp);
        let residual = match neumann_solve(&problem.a, &pair.p, &problem.phi, &problem.settings) {
            Ok(sol) => {
                let (eq, con) = verify_solution(problem, &sol.x)?;
                eq.max(con)
            }
            Err(Error::Contraction { .. } | Error::SeriesNotConverged { .. } | Error::SingularSystem { .. }) => {
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        debug!("probe step {step:e}: residual {residual:e}");
        if residual <= tol {
            persisted += 1;
        }
        worst = worst.max(residual);
    }
    Ok(Persistence { trials: directions.len(), persisted, worst_residual: worst })
}

/// One evaluation of the residual map at free coefficients `c`.
#[derive(Debug, Clone)]
enum Probe {
    Admissible { k: KVectors, norm: NormEstimate, x: SpaceVector, terms: usize, g: DVector<f64> },
    /// `|A P_k| >= 1` or the `k_i` / dense system degenerate.
    Inadmissible { norm: Option<NormEstimate> },
    /// The series did not reach its tolerance within the term budget.
    Starved { k: KVectors, norm: NormEstimate },
}

impl Probe {
    fn residual_norm(&self) -> f64 {
        match self {
            Probe::Admissible { g, .. } => g.norm(),
            _ => f64::INFINITY,
        }
    }

    fn is_admissible(&self) -> bool {
        matches!(self, Probe::Admissible { .. })
    }
}

struct Evaluator<'a> {
    problem: &'a Problem,
    rows: usize,
    cols: usize,
}

impl Evaluator<'_> {
    fn coeffs(&self, c: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, c)
    }

    fn kvectors(&self, c: &[f64]) -> Option<KVectors> {
        build_k(&self.problem.constraints, self.coeffs(c)).ok()
    }

    fn norm(&self, c: &[f64]) -> f64 {
        let Some(k) = self.kvectors(c) else { return f64::INFINITY };
        let pair = build_projections(&k);
        match self.problem.a.compose(&pair.p).and_then(|m| operator_norm(&m, &NormConfig::default())) {
            Ok(n) => n.value,
            Err(_) => f64::INFINITY,
        }
    }

    fn eval(&self, c: &[f64]) -> Probe {
        let Some(k) = self.kvectors(c) else { return Probe::Inadmissible { norm: None } };
        let pair = build_projections(&k);
        match neumann_solve(&self.problem.a, &pair.p, &self.problem.phi, &self.problem.settings) {
            Ok(sol) => {
                let g = self.problem.constraints.functionals_raw(sol.x.values());
                Probe::Admissible { k, norm: sol.norm, x: sol.x, terms: sol.terms, g }
            }
            Err(Error::SeriesNotConverged { .. }) => {
                let norm = self
                    .problem
                    .a
                    .compose(&pair.p)
                    .and_then(|m| operator_norm(&m, &NormConfig::default()))
                    .expect("norm was computed before the series ran");
                Probe::Starved { k, norm }
            }
            Err(Error::Contraction { norm }) => Probe::Inadmissible {
                norm: Some(NormEstimate {
                    value: norm,
                    method: crate::hilbert::NormMethod::ExactSvd,
                    iterations: 0,
                    tolerance: 0.0,
                }),
            },
            Err(_) => Probe::Inadmissible { norm: None },
        }
    }

    /// Forward differences, falling back to backward ones at the boundary.
    fn jacobian(&self, c: &[f64], g: &DVector<f64>) -> Option<DMatrix<f64>> {
        let s = &self.problem.settings;
        let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = s.fd_step * (1.0 + cnorm);
        let mut jac = DMatrix::zeros(g.len(), c.len());
        let mut probe = c.to_vec();
        for a in 0..c.len() {
            let mut column = None;
            for sign in [1.0, -1.0] {
                probe[a] = c[a] + sign * h;
                if let Probe::Admissible { g: gp, .. } = self.eval(&probe) {
                    column = Some((gp - g) / (sign * h));
                    break;
                }
            }
            probe[a] = c[a];
            jac.set_column(a, &column?);
        }
        Some(jac)
    }
}

/// Drives the residuals to zero over the free coefficients of `k`,
/// starting from `k0`. Failures are reported as statuses.
pub fn solve_constrained(problem: &Problem, k0: &KVectors) -> Result<SolveReport> {
    if !Arc::ptr_eq(k0.constraints(), &problem.constraints) {
        ensure_same(k0.constraints().space(), problem.space())?;
        if k0.constraints().m() != problem.constraints.m() {
            return Err(Error::Dimension { expected: problem.constraints.m(), found: k0.constraints().m() });
        }
    }
    let s = problem.settings;
    let ev = Evaluator { problem, rows: problem.dim() - problem.constraints.m(), cols: problem.constraints.m() };
    let mut c: Vec<f64> = k0.coeffs().as_slice().to_vec();
    let n_free = c.len();
    let mut iters = 0usize;
    let mut history = Vec::new();
    let mut current = ev.eval(&c);
    let mut nm_converged = false;

    // Reduce |A P_k| first when the start is not contractive.
    if !current.is_admissible() && !matches!(current, Probe::Starved { .. }) && s.search != SearchMode::None && n_free > 0 {
        let nm = NelderMead { max_iters: s.search_max_iters, target: NORM_REDUCTION_TARGET, ..Default::default() };
        let found = nm.minimize(&c, |x| ev.norm(x));
        iters += found.iterations;
        info!("norm reduction: |A P_k| = {} after {} iterations", found.value, found.iterations);
        if found.value < 1.0 {
            c = found.x;
            current = ev.eval(&c);
        }
    }

    let tol = s.residual_tol;
    let converged = |p: &Probe| matches!(p, Probe::Admissible { g, .. } if g.amax() <= tol);

    if current.is_admissible() && !converged(&current) && n_free > 0 {
        history.push(current.residual_norm());
        let mut stalled = s.search == SearchMode::NelderMead;
        if s.search == SearchMode::Newton {
            loop {
                if converged(&current) {
                    break;
                }
                if iters >= s.search_max_iters {
                    break;
                }
                let Probe::Admissible { g, .. } = &current else { unreachable!() };
                let Some(jac) = ev.jacobian(&c, g) else {
                    stalled = true;
                    break;
                };
                let Some(step) = newton_step(&jac, g) else {
                    stalled = true;
                    break;
                };
                let before = current.residual_norm();
                let mut accepted = None;
                let mut lambda = 1.0;
                for _ in 0..=MAX_HALVINGS {
                    let trial: Vec<f64> = c.iter().zip(step.iter()).map(|(ci, di)| ci + lambda * di).collect();
                    let probe = ev.eval(&trial);
                    if probe.residual_norm() < before {
                        accepted = Some((trial, probe));
                        break;
                    }
                    lambda *= 0.5;
                }
                let Some((trial, probe)) = accepted else {
                    stalled = true;
                    break;
                };
                iters += 1;
                let after = probe.residual_norm();
                debug!("newton iteration {iters}: |g| {before:e} -> {after:e} (lambda {lambda})");
                c = trial;
                current = probe;
                history.push(after);
                if before - after < NEWTON_STALL_RATIO * before && !converged(&current) {
                    stalled = true;
                    break;
                }
            }
        }
        if stalled && !converged(&current) && iters < s.search_max_iters {
            let budget = s.search_max_iters - iters;
            let nm = NelderMead { max_iters: budget, target: tol * tol, ..Default::default() };
            let found = nm.minimize(&c, |x| {
                let r = ev.eval(x).residual_norm();
                r * r
            });
            iters += found.iterations;
            nm_converged = found.converged;
            if found.value < current.residual_norm().powi(2) {
                c = found.x;
                current = ev.eval(&c);
                let r = current.residual_norm();
                if r < *history.last().unwrap_or(&f64::INFINITY) {
                    history.push(r);
                }
            }
        }
    }

    let search_exhausted = iters >= s.search_max_iters;
    finish(problem, k0, current, iters, history, search_exhausted, nm_converged || n_free == 0 || s.search == SearchMode::None)
}

fn newton_step(jac: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return None;
    }
    // Minimum-norm least-squares step for the rectangular system J d = -g.
    let d = svd.solve(&(-g), 1e-12 * smax).ok()?;
    d.iter().all(|v| v.is_finite()).then_some(d)
}

fn finish(
    problem: &Problem,
    k0: &KVectors,
    probe: Probe,
    search_iters: usize,
    history: Vec<f64>,
    exhausted: bool,
    search_settled: bool,
) -> Result<SolveReport> {
    let tol = problem.settings.residual_tol;
    match probe {
        Probe::Admissible { k, norm, x, terms, g } => {
            let (eq, con) = verify_solution(problem, &x)?;
            let status = if g.amax() <= tol {
                if eq <= 10.0 * tol && con <= 10.0 * tol {
                    Status::Solved
                } else {
                    Status::ResidualNonzero
                }
            } else if exhausted && !search_settled {
                Status::SearchFailed
            } else {
                Status::ResidualNonzero
            };
            let region = region_radius(problem, &k).ok();
            Ok(SolveReport {
                status,
                x: Some(x),
                k,
                norm_apk: norm,
                residual: g.iter().copied().collect(),
                equation_residual: Some(eq),
                constraint_residual: Some(con),
                neumann_terms: terms,
                region,
                search_iters,
                history,
            })
        }
        Probe::Starved { k, norm } => Ok(SolveReport {
            status: Status::SearchFailed,
            x: None,
            k,
            norm_apk: norm,
            residual: Vec::new(),
            equation_residual: None,
            constraint_residual: None,
            neumann_terms: problem.settings.neumann_max_terms,
            region: None,
            search_iters,
            history,
        }),
        Probe::Inadmissible { norm } => {
            let norm_apk = match norm {
                Some(n) => n,
                None => {
                    let pair = build_projections(k0);
                    operator_norm(&problem.a.compose(&pair.p)?, &NormConfig::default())?
                }
            };
            Ok(SolveReport {
                status: Status::NormGeOne,
                x: None,
                k: k0.clone(),
                norm_apk,
                residual: Vec::new(),
                equation_residual: None,
                constraint_residual: None,
                neumann_terms: 0,
                region: None,
                search_iters,
                history,
            })
        }
    }
}
