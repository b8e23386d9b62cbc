//! Anti-diagonal enumeration of `N x N`.
//!
//! Index `i` lies on anti-diagonal `t = floor((sqrt(8i + 1) - 1) / 2)`, at
//! offset `j = i - t (t + 1) / 2`, and maps to `(j, t - j)`:
//!
//! ```text
//! 0 -> (0,0)  1 -> (0,1)  2 -> (1,0)  3 -> (0,2)  4 -> (1,1)  5 -> (2,0) ...
//! ```

/// `t (t + 1) / 2`.
pub fn triangular(t: u64) -> u64 {
    t * (t + 1) / 2
}

/// Index of the anti-diagonal containing enumeration index `i`.
pub fn diagonal_of(i: u64) -> u64 {
    ((((8 * i as u128) + 1).isqrt() - 1) / 2) as u64
}

pub fn sigma(i: u64) -> (u64, u64) {
    let t = diagonal_of(i);
    let j = i - triangular(t);
    (j, t - j)
}

/// Inverse of [`sigma`].
pub fn pair_index(a: u64, b: u64) -> u64 {
    triangular(a + b) + a
}

/// The closed form evaluated in floating point exactly as typeset in the
/// source: the squared term carries no floor, unlike the two linear terms.
pub fn sigma_as_printed(i: u64) -> (f64, f64) {
    let i = i as f64;
    let s = ((8.0 * i + 1.0) / 4.0).sqrt() - 0.5;
    let fl = s.floor();
    (i - 0.5 * s * s - 0.5 * fl, 1.5 * fl - i + 0.5 * s * s)
}

/// The same expression with the floor applied to the squared term too.
pub fn sigma_floored(i: u64) -> (f64, f64) {
    let i = i as f64;
    let fl = (((8.0 * i + 1.0) / 4.0).sqrt() - 0.5).floor();
    (i - 0.5 * fl * fl - 0.5 * fl, 1.5 * fl - i + 0.5 * fl * fl)
}

/// `(index, formula value, enumeration value)`.
pub type Mismatch = (u64, (f64, f64), (u64, u64));

/// Agreement of a floating-point closed form with [`sigma`] over `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaComparison {
    pub checked: u64,
    pub agreeing: u64,
    /// The first few mismatches.
    pub mismatches: Vec<Mismatch>,
}

pub fn compare_formula(n: u64, formula: fn(u64) -> (f64, f64)) -> FormulaComparison {
    let mut agreeing = 0;
    let mut mismatches = Vec::new();
    for i in 0..n {
        let got = formula(i);
        let want = sigma(i);
        if got.0 == want.0 as f64 && got.1 == want.1 as f64 {
            agreeing += 1;
        } else if mismatches.len() < 16 {
            mismatches.push((i, got, want));
        }
    }
    FormulaComparison { checked: n, agreeing, mismatches }
}

/// Verifies that `sigma` is injective on `0..n` and that every pair on the
/// anti-diagonals fully inside `0..n` is hit exactly once.
pub fn verify_bijection(n: u64) -> Result<u64, String> {
    let mut full = 0;
    while triangular(full + 1) <= n {
        full += 1;
    }
    let mut seen: Vec<Vec<bool>> = (0..full).map(|t| vec![false; t as usize + 1]).collect();
    for i in 0..n {
        let (a, b) = sigma(i);
        if pair_index(a, b) != i {
            return Err(format!("sigma({i}) = ({a},{b}) does not invert"));
        }
        let t = a + b;
        if t < full {
            let slot = &mut seen[t as usize][a as usize];
            if *slot {
                return Err(format!("pair ({a},{b}) hit twice"));
            }
            *slot = true;
        }
    }
    for (t, row) in seen.iter().enumerate() {
        if let Some(a) = row.iter().position(|hit| !hit) {
            return Err(format!("pair ({a},{}) never hit", t - a));
        }
    }
    Ok(full)
}
