//! Exact expected-trace statistics.
//!
//! For an input weighted by `a` and sent through a deletion channel with
//! per-position retention `p`, the expected padded trace has generating
//! function `Psi(w) = sum_k a_k p_k prod_{l<k} (p_l w + q_l)`. Its `j`-th
//! coefficient is `sum_k a_k p_k P(B_0 + .. + B_{k-1} = j)` with
//! independent Bernoulli survivals `B_l`, which a Poisson-binomial
//! dynamic program computes exactly in O(n^2).

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use num_complex::Complex64;

/// Weight vector with entries in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SignedInput {
    values: Vec<f64>,
}

impl SignedInput {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("signed input must have length >= 1"));
        }
        for (k, &v) in values.iter().enumerate() {
            if !(v.is_finite() && (-1.0..=1.0).contains(&v)) {
                return Err(Error::domain(format!("entry {k} must lie in [-1, 1], got {v}")));
            }
        }
        Ok(SignedInput { values })
    }

    /// Componentwise `x - y`; entries must stay within [-1, 1], so this is
    /// mainly useful for binary strings.
    pub fn difference(x: &[u8], y: &[u8]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::domain(format!(
                "difference needs equal lengths, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        SignedInput::new(x.iter().zip(y).map(|(&a, &b)| a as f64 - b as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Coefficient vector of the expected padded-trace polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct GenPoly {
    coeffs: Vec<f64>,
}

impl GenPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        GenPoly { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        acc
    }

    /// Comma-separated decimal coefficients, shortest round-trip form.
    pub fn to_decimal_list(&self) -> String {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        parts.join(",")
    }

    pub fn from_decimal_list(text: &str) -> Result<Self> {
        let coeffs = text
            .trim()
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(format!("bad coefficient {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(GenPoly { coeffs })
    }
}

fn check_bernoulli(p: f64, k: usize) -> Result<()> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::domain(format!("p_list[{k}] must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_retention_seq(retention: &[f64]) -> Result<()> {
    for (k, &p) in retention.iter().enumerate() {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!(
                "retention_seq[{k}] must lie in (0, 1], got {p}"
            )));
        }
    }
    Ok(())
}

/// P(B_0 + .. + B_{k-1} = j) for independent Bernoulli(p_list[l]) draws.
/// The DP keeps only indices up to `j`, costing O(k * j).
pub fn poisson_binomial_pmf(p_list: &[f64], j: usize) -> Result<f64> {
    if j > p_list.len() {
        return Err(Error::domain(format!(
            "index {j} out of range for {} Bernoulli terms",
            p_list.len()
        )));
    }
    for (k, &p) in p_list.iter().enumerate() {
        check_bernoulli(p, k)?;
    }
    let mut pmf = vec![0.0; j + 1];
    pmf[0] = 1.0;
    for (k, &p) in p_list.iter().enumerate() {
        let hi = (k + 1).min(j);
        for i in (1..=hi).rev() {
            pmf[i] = pmf[i] * (1.0 - p) + pmf[i - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    Ok(pmf[j])
}

/// Full pmf over j = 0..=k.
pub fn poisson_binomial_pmf_all(p_list: &[f64]) -> Result<Vec<f64>> {
    for (k, &p) in p_list.iter().enumerate() {
        check_bernoulli(p, k)?;
    }
    let mut pmf = vec![0.0; p_list.len() + 1];
    pmf[0] = 1.0;
    for (k, &p) in p_list.iter().enumerate() {
        for i in (1..=k + 1).rev() {
            pmf[i] = pmf[i] * (1.0 - p) + pmf[i - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    Ok(pmf)
}

/// coeffs[j] = sum_k weights[k] * retention[k] * P(B_0 + .. + B_{k-1} = j),
/// truncated at j = n-1. Truncation is exact: survival counts only ever
/// grow, so mass above n-1 never feeds back into kept indices.
pub(crate) fn weighted_coefficients(weights: &[f64], retention: &[f64]) -> Vec<f64> {
    let n = weights.len();
    let mut coeffs = vec![0.0; n];
    if n == 0 {
        return coeffs;
    }
    let mut pmf = vec![0.0; n];
    pmf[0] = 1.0;
    for k in 0..n {
        let p = retention[k];
        let w = weights[k];
        let top = k.min(n - 1);
        if w != 0.0 {
            let wp = w * p;
            for j in 0..=top {
                coeffs[j] += wp * pmf[j];
            }
        }
        if k + 1 < n {
            let hi = (k + 1).min(n - 1);
            for j in (1..=hi).rev() {
                pmf[j] = pmf[j] * (1.0 - p) + pmf[j - 1] * p;
            }
            pmf[0] *= 1.0 - p;
        }
    }
    coeffs
}

/// Coefficients of the expected padded-trace polynomial for weights `a`.
pub fn psi_coefficients(a: &SignedInput, retention_seq: &[f64]) -> Result<GenPoly> {
    if a.len() != retention_seq.len() {
        return Err(Error::domain(format!(
            "weights have {} entries, retention_seq has {}",
            a.len(),
            retention_seq.len()
        )));
    }
    check_retention_seq(retention_seq)?;
    Ok(GenPoly::new(weighted_coefficients(a.values(), retention_seq)))
}

/// Direct product-sum evaluation, O(n) with a running prefix product.
pub fn psi_eval(a: &SignedInput, retention_seq: &[f64], w: Complex64) -> Result<Complex64> {
    if a.len() != retention_seq.len() {
        return Err(Error::domain(format!(
            "weights have {} entries, retention_seq has {}",
            a.len(),
            retention_seq.len()
        )));
    }
    check_retention_seq(retention_seq)?;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prefix = Complex64::new(1.0, 0.0);
    for (&ak, &pk) in a.values().iter().zip(retention_seq) {
        acc += ak * pk * prefix;
        prefix *= pk * w + (1.0 - pk);
    }
    Ok(acc)
}

/// Change of variables for 2-periodic retention sequences alternating
/// between a smaller and a larger probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicMap {
    p: f64,
    p_tilde: f64,
}

impl PeriodicMap {
    pub fn new(p: f64, p_tilde: f64) -> Result<Self> {
        if !(p.is_finite() && p_tilde.is_finite() && 0.0 < p && p < p_tilde && p_tilde <= 1.0) {
            return Err(Error::domain(format!(
                "periodic map needs 0 < p < p_tilde <= 1, got p={p}, p_tilde={p_tilde}"
            )));
        }
        Ok(PeriodicMap { p, p_tilde })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn p_tilde(&self) -> f64 {
        self.p_tilde
    }

    pub fn q_tilde(&self) -> f64 {
        1.0 - self.p_tilde
    }

    /// Retention ratio p / p_tilde; controls the disc bound in z.
    pub fn p_star(&self) -> f64 {
        self.p / self.p_tilde
    }

    pub fn map_to_w(&self, z: Complex64) -> Complex64 {
        (z - self.q_tilde()) / self.p_tilde
    }

    /// Does `retention_seq` alternate between the two probabilities
    /// (either phase)? Exact comparison.
    pub fn matches(&self, retention_seq: &[f64]) -> bool {
        if retention_seq.is_empty() {
            return false;
        }
        [(self.p, self.p_tilde), (self.p_tilde, self.p)].iter().any(|&(even, odd)| {
            retention_seq
                .iter()
                .enumerate()
                .all(|(k, &p)| p == if k % 2 == 0 { even } else { odd })
        })
    }
}

/// Evaluates the mapped polynomial at `z` via the exact identity with
/// `Psi` at `w = (z - q_tilde)/p_tilde`.
pub fn psi_tilde_eval(
    a: &SignedInput,
    retention_seq: &[f64],
    z: Complex64,
    map: &PeriodicMap,
) -> Result<Complex64> {
    if !map.matches(retention_seq) {
        return Err(Error::domain(
            "retention_seq must alternate between the map's two probabilities".to_string(),
        ));
    }
    psi_eval(a, retention_seq, map.map_to_w(z))
}

/// Per-letter, per-position means of padded traces.
///
/// `sample_count = 0` marks an exact matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsMatrix {
    values: Vec<Vec<f64>>,
    sample_count: usize,
}

const ENTRY_SLACK: f64 = 1e-9;

impl StatsMatrix {
    pub fn new(values: Vec<Vec<f64>>, sample_count: usize) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain("stats matrix needs at least two letter rows"));
        }
        let n = values[0].len();
        for (z, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(Error::domain("stats matrix rows must have equal length"));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < -ENTRY_SLACK || v > 1.0 + ENTRY_SLACK {
                    return Err(Error::domain(format!(
                        "stats entry [{z}][{j}] outside [0, 1]: {v}"
                    )));
                }
            }
        }
        Ok(StatsMatrix { values, sample_count })
    }

    pub fn alphabet_size(&self) -> usize {
        self.values.len()
    }

    pub fn positions(&self) -> usize {
        self.values[0].len()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn is_exact(&self) -> bool {
        self.sample_count == 0
    }

    pub fn value(&self, letter: u8, j: usize) -> f64 {
        self.values[letter as usize][j]
    }

    pub fn row(&self, letter: u8) -> &[f64] {
        &self.values[letter as usize]
    }

    /// Largest absolute entry difference; shapes must match.
    pub fn max_abs_diff(&self, other: &StatsMatrix) -> Result<f64> {
        if self.alphabet_size() != other.alphabet_size() || self.positions() != other.positions() {
            return Err(Error::domain("stats matrices have different shapes"));
        }
        let mut worst = 0.0f64;
        for (ra, rb) in self.values.iter().zip(&other.values) {
            for (&a, &b) in ra.iter().zip(rb) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// CSV with a `# samples=` comment, then header `letter,j0,..`.
    pub fn to_csv(&self) -> String {
        let n = self.positions();
        let mut out = format!("# samples={}\n", self.sample_count);
        let header: Vec<String> = (0..n).map(|j| format!("j{j}")).collect();
        out.push_str(&format!("letter,{}\n", header.join(",")));
        for (z, row) in self.values.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{z},{}\n", cells.join(",")));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut sample_count = 0usize;
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.peek() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("samples=") {
                    sample_count = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(format!("bad samples count {v:?}")))?;
                }
                lines.next();
            } else {
                break;
            }
        }
        let header = lines.next().ok_or_else(|| Error::parse("missing stats header"))?;
        if !header.trim_start().starts_with("letter") {
            return Err(Error::parse("stats header must start with 'letter'"));
        }
        let n = header.split(',').count() - 1;
        let mut values = Vec::new();
        for (z, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let mut cells = line.split(',');
            let label: usize = cells
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad letter label in row {z}")))?;
            if label != z {
                return Err(Error::parse(format!("expected letter {z}, found {label}")));
            }
            let row = cells
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(format!("bad value {tok:?} in row {z}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != n {
                return Err(Error::parse(format!(
                    "row {z} has {} values, header promises {n}",
                    row.len()
                )));
            }
            values.push(row);
        }
        StatsMatrix::new(values, sample_count).map_err(|e| match e {
            Error::Domain(msg) => Error::Parse(msg),
            other => other,
        })
    }
}

/// Exact indicator means S[z][j] = P(j-th trace symbol exists and equals z),
/// from one shared pmf evolution across all letters.
pub fn expected_letter_stats(x: &[u8], spec: &ChannelSpec) -> Result<StatsMatrix> {
    let resolved = spec.resolved_retention(x)?;
    let n = x.len();
    let m = spec.alphabet_size();
    let mut values = vec![vec![0.0; n]; m];
    if n > 0 {
        let mut pmf = vec![0.0; n];
        pmf[0] = 1.0;
        for k in 0..n {
            let p = resolved[k];
            let row = &mut values[x[k] as usize];
            for j in 0..=k.min(n - 1) {
                row[j] += p * pmf[j];
            }
            if k + 1 < n {
                let hi = (k + 1).min(n - 1);
                for j in (1..=hi).rev() {
                    pmf[j] = pmf[j] * (1.0 - p) + pmf[j - 1] * p;
                }
                pmf[0] *= 1.0 - p;
            }
        }
    }
    StatsMatrix::new(values, 0)
}
