//! Seeded random trials for each check. Trial `i` of a run with base seed
//! `s` draws everything from seed `s + i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use super::pairing::{compare_formula, pair_index, sigma, sigma_as_printed};
use super::{
    check_cauchy_product, check_neumann_perturbation, check_operator_split, check_reordering, CheckReport,
    GeometricBound, LemmaOperands, OperatorFamily, OperatorSequence, TruncationSchedule, PERTURBATION_MAX_NORM_SUM,
};
use crate::error::{Error, Result};
use crate::generate;
use crate::hilbert::{spectral_norm, Space, SpaceVector};

/// Indices checked per pairing trial.
pub const PAIRING_WINDOW: u64 = 10_000;
/// Terms per index in the reordering and Cauchy trials.
pub const SERIES_TERMS: usize = 80;
/// Rounding allowance added to the analytic tail bound.
pub const ROUNDING_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LemmaCheck {
    Pairing,
    Reorder,
    Cauchy,
    Perturb,
    Split,
}

impl LemmaCheck {
    pub const ALL: [LemmaCheck; 5] =
        [LemmaCheck::Pairing, LemmaCheck::Reorder, LemmaCheck::Cauchy, LemmaCheck::Perturb, LemmaCheck::Split];

    pub fn as_str(self) -> &'static str {
        match self {
            LemmaCheck::Pairing => "pairing",
            LemmaCheck::Reorder => "reorder",
            LemmaCheck::Cauchy => "cauchy",
            LemmaCheck::Perturb => "perturb",
            LemmaCheck::Split => "split",
        }
    }
}

impl fmt::Display for LemmaCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LemmaCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaCheck::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown check `{s}` (expected pairing, reorder, cauchy, perturb or split)")))
    }
}

/// Result of one trial. Draws that violate a check's hypothesis are
/// skipped, never counted as passes.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Checked(CheckReport),
    Skipped { name: String, seed: u64, reason: String },
}

impl TrialOutcome {
    pub fn passed(&self) -> Option<bool> {
        match self {
            TrialOutcome::Checked(r) => Some(r.passed),
            TrialOutcome::Skipped { .. } => None,
        }
    }
}

pub fn run_trial(check: LemmaCheck, seed: u64) -> Result<TrialOutcome> {
    let result = match check {
        LemmaCheck::Pairing => Ok(pairing_trial(seed)),
        LemmaCheck::Reorder => reorder_trial(seed),
        LemmaCheck::Cauchy => cauchy_trial(seed),
        LemmaCheck::Perturb => perturb_trial(seed),
        LemmaCheck::Split => split_trial(seed),
    };
    match result {
        Ok(r) => Ok(TrialOutcome::Checked(r)),
        Err(Error::HypothesisViolated(reason)) => {
            Ok(TrialOutcome::Skipped { name: check.as_str().to_string(), seed, reason })
        }
        Err(e) => Err(e),
    }
}

/// A window of consecutive indices at a random offset: every index must
/// invert, and consecutive indices must step along the anti-diagonal.
fn pairing_trial(seed: u64) -> CheckReport {
    let mut rng = generate::rng(seed);
    let start: u64 = if seed.is_multiple_of(2) { 0 } else { rng.random_range(0..1_000_000_000_000) };
    let mut failures = 0u64;
    let mut prev = sigma(start);
    if pair_index(prev.0, prev.1) != start {
        failures += 1;
    }
    for i in start + 1..start + PAIRING_WINDOW {
        let (a, b) = sigma(i);
        let expected = if prev.1 == 0 { (0, prev.0 + 1) } else { (prev.0 + 1, prev.1 - 1) };
        if (a, b) != expected || pair_index(a, b) != i {
            failures += 1;
        }
        prev = (a, b);
    }
    let (a0, b0) = sigma(0);
    let (sa, sb) = sigma(start);
    let printed = compare_formula(PAIRING_WINDOW, sigma_as_printed);
    CheckReport::new("pairing", failures as f64, 0.0, PAIRING_WINDOW as usize, seed).with_detail(format!(
        "sigma(0)=({a0},{b0}) sigma({start})=({sa},{sb}) printed_formula_agrees={}/{}",
        printed.agreeing, printed.checked
    ))
}

fn reorder_trial(seed: u64) -> Result<CheckReport> {
    let mut rng = generate::rng(seed);
    let dim = rng.random_range(2..=6);
    let r: f64 = rng.random_range(0.1..0.7);
    let s: f64 = rng.random_range(0.1..0.7);
    let es: Vec<DMatrix<f64>> = (0..3).map(|_| generate::matrix(&mut rng, dim, dim)).collect();
    let scale = es.iter().map(spectral_norm).sum();
    let family = OperatorFamily {
        dim,
        term: Box::new(move |i, j| {
            let (fi, fj) = (i as f64, j as f64);
            (&es[0] + &es[1] * (fi + 1.0).cos() + &es[2] * (2.0 * fj + 1.0).sin()) * (r.powi(i as i32) * s.powi(j as i32))
        }),
        bound: Some(GeometricBound { scale, row_rate: r, col_rate: s }),
    };
    check_reordering(&family, &TruncationSchedule::new(ROUNDING_EPS, SERIES_TERMS), seed)
        .map(|rep| rep.with_detail(format!("dim={dim} r={r:.6} s={s:.6}")))
}

fn cauchy_trial(seed: u64) -> Result<CheckReport> {
    let mut rng = generate::rng(seed);
    let dim = rng.random_range(2..=6);
    let na = rng.random_range(0.1..0.6);
    let nb = rng.random_range(0.1..0.6);
    let a = generate::matrix_with_norm(&mut rng, dim, na);
    let b = generate::matrix_with_norm(&mut rng, dim, nb);
    let xs = OperatorSequence::powers(a);
    let ys = OperatorSequence::powers(b);
    check_cauchy_product(&xs, &ys, &TruncationSchedule::new(ROUNDING_EPS, SERIES_TERMS), seed)
        .map(|rep| rep.with_detail(format!("dim={dim} |A|={na:.6} |B|={nb:.6}")))
}

fn perturb_trial(seed: u64) -> Result<CheckReport> {
    let mut rng = generate::rng(seed);
    let dim = rng.random_range(2..=8);
    let a = rng.random_range(0.0..0.85);
    let b = rng.random_range(0.0..PERTURBATION_MAX_NORM_SUM - a);
    let space = if rng.random_bool(0.5) { generate::weighted_space(&mut rng, dim) } else { Space::unit(dim)? };
    let x = generate::operator_with_norm(&mut rng, &space, a);
    let y = generate::operator_with_norm(&mut rng, &space, b);
    let ops = LemmaOperands::new(x, y)?;
    check_neumann_perturbation(&ops, &TruncationSchedule::new(1e-13, 10_000), seed)
        .map(|rep| rep.with_detail(format!("dim={dim} |X|={a:.6} |Y|={b:.6}")))
}

fn split_trial(seed: u64) -> Result<CheckReport> {
    let mut rng = generate::rng(seed);
    let dim = rng.random_range(3..=8);
    // At least one direction orthogonal to every constraint.
    let m = rng.random_range(1..=3.min(dim - 1));
    let eps = rng.random_range(0.0..2.0);
    let space = generate::weighted_space(&mut rng, dim);
    let cs = generate::constraints(&mut rng, &space, m);
    let k = generate::k_vectors(&mut rng, &cs, 1.0);
    let d = generate::unit_directions(&mut rng, &cs);
    let eta: Vec<SpaceVector> = d
        .column_iter()
        .map(|col| SpaceVector::new(&space, cs.complement_matrix() * col))
        .collect::<Result<_>>()?;
    check_operator_split(&k, &eta, eps, seed).map(|rep| rep.with_detail(format!("dim={dim} m={m} eps={eps:.6}")))
}
