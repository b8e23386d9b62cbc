//! Problem configuration files.
//!
//! A config is one JSON document:
//!
//! ```json
//! {
//!   "space": {"dim": 2},
//!   "operator": [[1.0, 0.3], [0.0, 0.2]],
//!   "phi": [-0.3, 0.8],
//!   "constraints": [[1.0, 0.0]],
//!   "k_init": {"coeffs": [[0.0]]},
//!   "solver": {"search": "newton"}
//! }
//! ```
//!
//! `space` is `{"dim": n}`, `{"weights": [...]}`, `{"nodes": [...], "weights": [...]}`
//! or `{"quadrature": {"rule": "gauss-legendre", "a": 0, "b": 1, "n": 64}}`.
//! Any matrix or vector may be given inline or as `{"csv": "relative/path.csv"}`,
//! resolved against the config's directory. The operator may instead be a
//! kernel, `{"kernel": {"kind": "separable-poly", "p": [...], "q": [...], "scale": 1}}`
//! (kinds `separable-poly`, `sine`, `matrix` with `values`), discretized on
//! the quadrature space. Constraint rows are the `y_i`. `k_init` holds either
//! `coeffs`, the `(dim - m) x m` free coefficients, or `vectors`, the `k_i`
//! themselves.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discretize::{nystrom, CorpusProblem, Kernel, KernelSpec, Quadrature, Reference, Rule};
use crate::error::{Error, Result};
use crate::hilbert::{LinearOperator, Space, SpaceVector};
use crate::io::{read_matrix_file, read_vector_file};
use crate::projection::{build_k, ConstraintSet, KVectors, DEFAULT_GS_TOL};
use crate::report::{sig, sigs, Sig17};
use crate::solver::{Problem, SearchMode, SolverSettings};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    space: RawSpace,
    operator: RawOperator,
    phi: RawVector,
    #[serde(default)]
    constraints: Option<RawMatrix>,
    #[serde(default)]
    k_init: Option<RawK>,
    #[serde(default)]
    solver: RawSolver,
}

#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum RawSpace {
    Dim { dim: usize },
    Nodes { nodes: Vec<f64>, weights: Vec<f64> },
    Weights { weights: Vec<f64> },
    Quadrature { quadrature: RawQuadrature },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    #[serde(default = "default_rule")]
    rule: Rule,
    a: f64,
    b: f64,
    n: usize,
}

fn default_rule() -> Rule {
    Rule::GaussLegendre
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    Inline(Vec<Vec<f64>>),
    Csv { csv: String },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawVector {
    Inline(Vec<f64>),
    Csv { csv: String },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawOperator {
    Kernel { kernel: RawKernel },
    Matrix(RawMatrix),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawKernel {
    SeparablePoly {
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    Sine {
        #[serde(default = "one")]
        scale: f64,
    },
    Matrix {
        values: RawMatrix,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawK {
    Coeffs { coeffs: RawMatrix },
    Vectors { vectors: RawMatrix },
}

/// Solver keys; all optional in files, also accepted by `--override`.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neumann_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neumann_max_terms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_solve: Option<bool>,
}

impl RawSolver {
    fn apply(&self, s: &mut SolverSettings) -> Result<()> {
        if let Some(v) = self.neumann_tol {
            s.neumann_tol = v;
        }
        if let Some(v) = self.neumann_max_terms {
            s.neumann_max_terms = v;
        }
        if let Some(v) = self.residual_tol {
            s.residual_tol = v;
        }
        if let Some(v) = &self.search {
            s.search = v.parse::<SearchMode>()?;
        }
        if let Some(v) = self.search_max_iters {
            s.search_max_iters = v;
        }
        if let Some(v) = self.fd_step {
            s.fd_step = v;
        }
        match self.direct_solve {
            Some(v) => s.direct_solve = v,
            // Tuning the series implies using it.
            None if self.neumann_tol.is_some() || self.neumann_max_terms.is_some() => s.direct_solve = false,
            None => {}
        }
        s.validate()
    }
}

/// A problem ready to solve, from a config file or the corpus.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub name: String,
    pub problem: Problem,
    pub k_init: KVectors,
    pub reference: Option<Reference>,
}

impl From<CorpusProblem> for LoadedProblem {
    fn from(cp: CorpusProblem) -> Self {
        LoadedProblem { name: cp.name.to_string(), problem: cp.problem, k_init: cp.k_init, reference: cp.reference }
    }
}

fn cfg_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {msg}", path.display()))
}

struct Resolver<'a> {
    path: &'a Path,
    dir: PathBuf,
}

impl Resolver<'_> {
    fn file(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn matrix(&self, key: &str, m: &RawMatrix) -> Result<DMatrix<f64>> {
        match m {
            RawMatrix::Inline(rows) => {
                if rows.is_empty() {
                    return Ok(DMatrix::zeros(0, 0));
                }
                let cols = rows[0].len();
                if let Some(i) = rows.iter().position(|r| r.len() != cols) {
                    return Err(cfg_err(
                        self.path,
                        format!("`{key}` row {} has {} entries, expected {cols}", i + 1, rows[i].len()),
                    ));
                }
                Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
            }
            RawMatrix::Csv { csv } => read_matrix_file(&self.file(csv)).map_err(|e| cfg_err(self.path, format!("`{key}`: {e}"))),
        }
    }

    fn vector(&self, key: &str, v: &RawVector) -> Result<DVector<f64>> {
        match v {
            RawVector::Inline(vs) => Ok(DVector::from_column_slice(vs)),
            RawVector::Csv { csv } => read_vector_file(&self.file(csv)).map_err(|e| cfg_err(self.path, format!("`{key}`: {e}"))),
        }
    }
}

/// Parses a config document. `path` is used for messages and to resolve
/// relative CSV paths.
pub fn parse_config(text: &str, path: &Path) -> Result<LoadedProblem> {
    let raw: RawConfig = serde_json::from_str(text)
        .map_err(|e| cfg_err(path, format!("line {} column {}: {e}", e.line(), e.column())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let res = Resolver { path, dir };
    let ctx = |key: &str, e: Error| match e {
        Error::Config(_) => e,
        other => cfg_err(path, format!("`{key}`: {other}")),
    };

    let mut quad: Option<Quadrature> = None;
    let space = match &raw.space {
        RawSpace::Dim { dim } => Space::unit(*dim),
        RawSpace::Weights { weights } => Space::weighted(weights.clone()),
        RawSpace::Nodes { nodes, weights } => Space::with_nodes(nodes.clone(), weights.clone()),
        RawSpace::Quadrature { quadrature: q } => {
            let built = Quadrature::new(q.rule, q.a, q.b, q.n)?;
            let s = built.space();
            quad = Some(built);
            s
        }
    }
    .map_err(|e| ctx("space", e))?;
    let dim = space.dim();

    let a = match &raw.operator {
        RawOperator::Matrix(m) => LinearOperator::new(&space, res.matrix("operator", m)?),
        RawOperator::Kernel { kernel } => {
            let quad = quad
                .as_ref()
                .ok_or_else(|| cfg_err(path, "a kernel operator needs a `quadrature` space"))?;
            let spec = match kernel {
                RawKernel::SeparablePoly { p, q, scale } => {
                    KernelSpec::new(Kernel::SeparablePoly { p: p.clone(), q: q.clone() }, *scale)
                }
                RawKernel::Sine { scale } => KernelSpec::new(Kernel::Sine, *scale),
                RawKernel::Matrix { values, scale } => {
                    KernelSpec::new(Kernel::Matrix(res.matrix("operator.kernel.values", values)?), *scale)
                }
            };
            nystrom(&spec, quad)
        }
    }
    .map_err(|e| ctx("operator", e))?;

    let phi = SpaceVector::new(&space, res.vector("phi", &raw.phi)?).map_err(|e| ctx("phi", e))?;

    let cs = match &raw.constraints {
        None => ConstraintSet::unconstrained(&space),
        Some(m) => {
            let rows = res.matrix("constraints", m)?;
            if rows.nrows() > 0 && rows.ncols() != dim {
                return Err(cfg_err(path, format!("`constraints` rows have {} entries, expected {dim}", rows.ncols())));
            }
            let ys: Vec<SpaceVector> = rows
                .row_iter()
                .map(|r| SpaceVector::new(&space, r.transpose()))
                .collect::<Result<_>>()?;
            ConstraintSet::new(&space, &ys, DEFAULT_GS_TOL).map_err(|e| ctx("constraints", e))?
        }
    };
    let cs = Arc::new(cs);

    let k_init = match &raw.k_init {
        None => KVectors::orthogonal(&cs),
        Some(RawK::Coeffs { coeffs }) => {
            let c = res.matrix("k_init.coeffs", coeffs)?;
            let c = if c.is_empty() { DMatrix::zeros(dim - cs.m(), cs.m()) } else { c };
            if c.shape() != (dim - cs.m(), cs.m()) {
                return Err(cfg_err(
                    path,
                    format!("`k_init.coeffs` is {}x{}, expected {}x{}", c.nrows(), c.ncols(), dim - cs.m(), cs.m()),
                ));
            }
            build_k(&cs, c).map_err(|e| ctx("k_init", e))?
        }
        Some(RawK::Vectors { vectors }) => {
            let rows = res.matrix("k_init.vectors", vectors)?;
            let ks: Vec<SpaceVector> = rows
                .row_iter()
                .map(|r| SpaceVector::new(&space, r.transpose()))
                .collect::<Result<_>>()
                .map_err(|e| ctx("k_init.vectors", e))?;
            KVectors::from_vectors(&cs, &ks).map_err(|e| ctx("k_init", e))?
        }
    };

    let mut settings = SolverSettings::for_dim(dim);
    raw.solver.apply(&mut settings).map_err(|e| ctx("solver", e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "config".into());
    let problem = Problem::new(a, phi, cs, settings)?;
    Ok(LoadedProblem { name, problem, k_init, reference: None })
}

pub fn load_config(path: &Path) -> Result<LoadedProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(path, e))?;
    parse_config(&text, path)
}

/// Applies `key=value` overrides: any solver key, or `k0=c1,c2,...` with
/// the free coefficients in column-major order.
pub fn apply_overrides(lp: &mut LoadedProblem, overrides: &[String]) -> Result<()> {
    let mut raw = RawSolver::default();
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("override `{key}`: {e}"));
        match key {
            "neumann_tol" => raw.neumann_tol = Some(value.parse().map_err(|e| bad(&e))?),
            "neumann_max_terms" => raw.neumann_max_terms = Some(value.parse().map_err(|e| bad(&e))?),
            "residual_tol" => raw.residual_tol = Some(value.parse().map_err(|e| bad(&e))?),
            "search" => raw.search = Some(value.to_string()),
            "search_max_iters" => raw.search_max_iters = Some(value.parse().map_err(|e| bad(&e))?),
            "fd_step" => raw.fd_step = Some(value.parse().map_err(|e| bad(&e))?),
            "direct_solve" => raw.direct_solve = Some(value.parse().map_err(|e| bad(&e))?),
            "k0" => {
                let cs = lp.problem.constraints.clone();
                let coeffs: Vec<f64> = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(&e))?
                };
                let (rows, cols) = (cs.dim() - cs.m(), cs.m());
                if coeffs.len() != rows * cols {
                    return Err(bad(&format!("expected {} coefficients, got {}", rows * cols, coeffs.len())));
                }
                lp.k_init = build_k(&cs, DMatrix::from_column_slice(rows, cols, &coeffs)).map_err(|e| bad(&e))?;
            }
            other => return Err(Error::Config(format!("unknown override key `{other}`"))),
        }
    }
    raw.apply(&mut lp.problem.settings).map_err(|e| Error::Config(format!("override: {e}")))
}

#[derive(Serialize)]
struct DumpSpace {
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<Sig17>>,
    weights: Vec<Sig17>,
}

#[derive(Serialize)]
struct DumpK {
    vectors: Vec<Vec<Sig17>>,
}

#[derive(Serialize)]
struct Dump {
    space: DumpSpace,
    operator: Vec<Vec<Sig17>>,
    phi: Vec<Sig17>,
    constraints: Vec<Vec<Sig17>>,
    k_init: DumpK,
    solver: RawSolver,
}

/// The problem as a self-contained config document with inline values.
pub fn dump_config(lp: &LoadedProblem) -> String {
    let p = &lp.problem;
    let space = p.space();
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<Sig17>> { m.row_iter().map(|r| r.iter().copied().map(sig).collect()).collect() };
    let vecs = |vs: &[SpaceVector]| -> Vec<Vec<Sig17>> { vs.iter().map(|v| sigs(v.values().as_slice())).collect() };
    let s = &p.settings;
    let dump = Dump {
        space: DumpSpace { nodes: space.nodes().map(sigs), weights: sigs(space.weights()) },
        operator: rows(p.a.matrix()),
        phi: sigs(p.phi.values().as_slice()),
        constraints: vecs(p.constraints.ys()),
        k_init: DumpK { vectors: vecs(lp.k_init.ks()) },
        solver: RawSolver {
            neumann_tol: Some(s.neumann_tol),
            neumann_max_terms: Some(s.neumann_max_terms),
            residual_tol: Some(s.residual_tol),
            search: Some(s.search.as_str().to_string()),
            search_max_iters: Some(s.search_max_iters),
            fd_step: Some(s.fd_step),
            direct_solve: Some(s.direct_solve),
        },
    };
    crate::report::to_pretty(&dump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::corpus;

    const TWO_BY_TWO: &str = r#"{
  "space": {"dim": 2},
  "operator": [[1.0, 0.3], [0.0, 0.2]],
  "phi": [-0.3, 0.8],
  "constraints": [[1.0, 0.0]]
}"#;

    #[test]
    fn inline_config() {
        let lp = parse_config(TWO_BY_TWO, Path::new("two.json")).unwrap();
        assert_eq!(lp.name, "two");
        assert_eq!(lp.problem.dim(), 2);
        assert_eq!(lp.problem.constraints.m(), 1);
        assert_eq!(lp.k_init.coeffs()[(0, 0)], 0.0);
        assert!(lp.problem.settings.direct_solve);
    }

    #[test]
    fn syntax_errors_carry_line() {
        let bad = "{\n  \"space\": {\"dim\": 2},\n  \"operator\": [[1, 2], [3, 4]],\n  \"phi\": [1, 2,]\n}";
        let err = parse_config(bad, Path::new("bad.json")).unwrap_err().to_string();
        assert!(err.contains("bad.json: line 4"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = TWO_BY_TWO.replace("\"phi\"", "\"solver\": {\"tolerance\": 1}, \"phi\"");
        let err = parse_config(&bad, Path::new("c.json")).unwrap_err().to_string();
        assert!(err.contains("tolerance"), "{err}");
    }

    #[test]
    fn ragged_and_mismatched_inputs() {
        let bad = TWO_BY_TWO.replace("[[1.0, 0.3], [0.0, 0.2]]", "[[1.0, 0.3], [0.0]]");
        assert!(parse_config(&bad, Path::new("c.json")).unwrap_err().to_string().contains("row 2"));
        let bad = TWO_BY_TWO.replace("[-0.3, 0.8]", "[-0.3, 0.8, 1.0]");
        assert!(matches!(parse_config(&bad, Path::new("c.json")), Err(Error::Config(_))));
    }

    #[test]
    fn csv_sources_resolve_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "1.0,0.3\n0.0,0.2\n").unwrap();
        std::fs::write(dir.path().join("phi.csv"), "-0.3\n0.8\n").unwrap();
        let cfg = r#"{"space": {"dim": 2}, "operator": {"csv": "a.csv"}, "phi": {"csv": "phi.csv"},
            "constraints": [[1, 0]], "k_init": {"vectors": [[1, 1]]}}"#;
        let path = dir.path().join("p.json");
        std::fs::write(&path, cfg).unwrap();
        let lp = load_config(&path).unwrap();
        assert_eq!(lp.problem.a.matrix()[(0, 1)], 0.3);
        assert!((lp.k_init.coeffs()[(0, 0)] - 1.0).abs() < 1e-15);

        std::fs::write(dir.path().join("a.csv"), "1.0,0.3\n0.0,x\n").unwrap();
        let err = load_config(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn kernel_operator_on_quadrature() {
        let cfg = r#"{"space": {"quadrature": {"rule": "gauss-legendre", "a": 0, "b": 1, "n": 64}},
            "operator": {"kernel": {"kind": "separable-poly", "p": [0, 1], "q": [0, 1]}},
            "phi": {"csv": "missing.csv"}}"#;
        assert!(parse_config(cfg, Path::new("k.json")).is_err());
        let cfg = cfg.replace(r#"{"csv": "missing.csv"}"#, &format!("[{}]", vec!["1"; 64].join(",")));
        let lp = parse_config(&cfg, Path::new("k.json")).unwrap();
        let reference = corpus("separable-basic").unwrap();
        assert!((lp.problem.a.matrix() - reference.problem.a.matrix()).amax() == 0.0);
    }

    #[test]
    fn overrides() {
        let mut lp = parse_config(TWO_BY_TWO, Path::new("t.json")).unwrap();
        apply_overrides(&mut lp, &["neumann_max_terms=5".into(), "k0=1".into(), "search=none".into()]).unwrap();
        assert_eq!(lp.problem.settings.neumann_max_terms, 5);
        assert!(!lp.problem.settings.direct_solve);
        assert_eq!(lp.problem.settings.search, SearchMode::None);
        assert_eq!(lp.k_init.coeffs()[(0, 0)], 1.0);
        for bad in ["nope=1", "k0=1,2", "neumann_tol=-1", "search=bfgs", "missing"] {
            assert!(matches!(apply_overrides(&mut lp, &[bad.into()]), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn dump_round_trips() {
        for name in crate::discretize::corpus_names() {
            let lp: LoadedProblem = corpus(name).unwrap().into();
            let text = dump_config(&lp);
            let back = parse_config(&text, Path::new("d.json")).unwrap();
            assert_eq!(back.problem.a.matrix(), lp.problem.a.matrix());
            assert_eq!(back.problem.phi.values(), lp.problem.phi.values());
            assert_eq!(back.problem.space().weights(), lp.problem.space().weights());
            assert!((back.k_init.k_matrix() - lp.k_init.k_matrix()).amax() < 1e-12, "{name}");
            assert_eq!(back.problem.settings, lp.problem.settings);
        }
    }
}
