//! JSON reports with a fixed key order and 17 significant digits.

use serde::ser::{Error as _, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::io::format_f64;
use crate::series::trials::TrialOutcome;
use crate::solver::RegionEstimate;

/// A float written as `d.dddddddddddddddde±x`; non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format_f64(self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn sig(v: f64) -> Sig17 {
    Sig17(v)
}

pub fn sigs(vs: &[f64]) -> Vec<Sig17> {
    vs.iter().copied().map(Sig17).collect()
}

/// Serializes with the struct's field order; floats go through [`Sig17`].
pub fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types serialize infallibly")
}

pub fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize infallibly")
}

#[derive(Debug, Serialize)]
pub struct SolveJson {
    pub problem: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub x_csv_path: Option<String>,
    pub residual: Vec<Sig17>,
    pub equation_residual: Option<Sig17>,
    pub constraint_residual: Option<Sig17>,
    #[serde(rename = "norm_APk")]
    pub norm_apk: Sig17,
    pub norm_method: &'static str,
    pub epsilon: Option<Sig17>,
    pub epsilon_unbounded: bool,
    pub neumann_terms: usize,
    pub search_iters: usize,
    pub k_coeffs: Vec<Sig17>,
    pub reference_error: Option<Sig17>,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct ProbeJson {
    pub trials: usize,
    pub persisted: usize,
    pub step: Sig17,
    pub worst_residual: Sig17,
}

#[derive(Debug, Serialize)]
pub struct RegionJson {
    pub problem: String,
    #[serde(rename = "norm_APk")]
    pub norm_apk: Sig17,
    #[serde(rename = "sup_APt_eta")]
    pub sup_apt_eta: Sig17,
    pub epsilon: Sig17,
    pub unbounded: bool,
    pub exact: bool,
    pub probe: Option<ProbeJson>,
    pub seed: u64,
}

impl RegionJson {
    pub fn new(problem: &str, r: &RegionEstimate, probe: Option<ProbeJson>, seed: u64) -> Self {
        RegionJson {
            problem: problem.to_string(),
            norm_apk: sig(r.norm_apk),
            sup_apt_eta: sig(r.sup_apt_eta),
            epsilon: sig(r.epsilon),
            unbounded: r.unbounded(),
            exact: r.exact,
            probe,
            seed,
        }
    }
}

/// `region` output when the starting `k` is not contractive.
#[derive(Debug, Serialize)]
pub struct NonContractiveJson {
    pub problem: String,
    pub status: &'static str,
    #[serde(rename = "norm_APk")]
    pub norm_apk: Sig17,
}

#[derive(Debug, Serialize)]
pub struct CheckJson<'a> {
    pub name: &'a str,
    pub seed: u64,
    pub passed: Option<bool>,
    pub skipped: bool,
    pub discrepancy: Option<Sig17>,
    pub tolerance: Option<Sig17>,
    pub terms_used: Option<usize>,
    pub detail: Option<&'a str>,
}

impl<'a> CheckJson<'a> {
    pub fn new(outcome: &'a TrialOutcome) -> Self {
        match outcome {
            TrialOutcome::Checked(r) => CheckJson {
                name: &r.name,
                seed: r.seed,
                passed: Some(r.passed),
                skipped: false,
                discrepancy: Some(sig(r.discrepancy)),
                tolerance: Some(sig(r.tolerance)),
                terms_used: Some(r.terms_used),
                detail: r.detail.as_deref(),
            },
            TrialOutcome::Skipped { name, seed, reason } => CheckJson {
                name,
                seed: *seed,
                passed: None,
                skipped: true,
                discrepancy: None,
                tolerance: None,
                terms_used: None,
                detail: Some(reason),
            },
        }
    }
}
