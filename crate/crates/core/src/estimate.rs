//! Retention estimation and the unknown-probability pipeline.
//!
//! When per-letter retention probabilities are unknown, the count of a
//! letter in a trace is binomial with mean r p and variance r p (1 - p)
//! over the r source occurrences, so 1 - p = variance / mean. The
//! method-of-moments estimate feeds a second, equalizing channel that
//! thins letter z at rate p_min_hat / p_hat_z; the composite channel is
//! then near-constant and the known-probability tournament applies.

use crate::channel::{thin_trace, ChannelKind, ChannelSpec, Trace, TraceEnsemble};
use crate::error::{Error, Result};
use crate::genfunc::weighted_coefficients;
use crate::reconstruct::{
    empirical_stats, reconstruct_from_stats, ReconstructionRecord, DEFAULT_CANDIDATE_BUDGET,
};
use crate::rng::{self, STAGE_THIN};
use rayon::prelude::*;

/// Moment estimates for one letter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LetterEstimate {
    pub letter: u8,
    /// Mean letter count per trace.
    pub mu_hat: f64,
    /// Unbiased sample variance of the letter count.
    pub v_hat: f64,
    /// 1 - v_hat/mu_hat, clamped to [floor, 1].
    pub p_hat: f64,
    pub clamped: bool,
}

/// Per-letter estimates plus the clamping floor they were built with.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    letters: Vec<LetterEstimate>,
    floor: f64,
}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor.is_finite() && floor > 0.0 && floor <= 1.0) {
        return Err(Error::domain(format!("floor must lie in (0, 1], got {floor}")));
    }
    Ok(())
}

impl EstimateReport {
    pub fn from_estimates(letters: Vec<LetterEstimate>, floor: f64) -> Result<Self> {
        check_floor(floor)?;
        if letters.len() < 2 {
            return Err(Error::domain("report needs at least two letters"));
        }
        for (z, e) in letters.iter().enumerate() {
            if e.letter as usize != z {
                return Err(Error::domain(format!(
                    "letter rows must be 0..m in order, found {} at row {z}",
                    e.letter
                )));
            }
            if !(e.p_hat.is_finite() && e.p_hat >= floor && e.p_hat <= 1.0) {
                return Err(Error::domain(format!(
                    "p_hat for letter {z} must lie in [{floor}, 1], got {}",
                    e.p_hat
                )));
            }
        }
        Ok(EstimateReport { letters, floor })
    }

    /// Degenerate report with exactly known probabilities injected.
    pub fn exact(p: &[f64], floor: f64) -> Result<Self> {
        let letters = p
            .iter()
            .enumerate()
            .map(|(z, &p)| LetterEstimate {
                letter: z as u8,
                mu_hat: f64::NAN,
                v_hat: f64::NAN,
                p_hat: p,
                clamped: false,
            })
            .collect();
        Self::from_estimates(letters, floor)
    }

    pub fn letters(&self) -> &[LetterEstimate] {
        &self.letters
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Smallest estimated retention, the equalization target.
    pub fn p_star_hat(&self) -> f64 {
        self.letters.iter().map(|e| e.p_hat).fold(f64::INFINITY, f64::min)
    }

    /// Thinning rates p_star_hat / p_hat_z, all in (0, 1].
    pub fn rates(&self) -> Vec<f64> {
        let target = self.p_star_hat();
        self.letters.iter().map(|e| target / e.p_hat).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# floor={}\nletter,mu_hat,v_hat,p_hat,clamped\n", self.floor);
        for e in &self.letters {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.letter, e.mu_hat, e.v_hat, e.p_hat, e.clamped
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut floor = None;
        let mut lines = text.lines().peekable();
        while let Some(line) = lines.peek() {
            if let Some(rest) = line.trim().strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("floor=") {
                    floor = Some(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::parse(format!("bad floor {v:?}")))?,
                    );
                }
                lines.next();
            } else {
                break;
            }
        }
        let floor = floor.ok_or_else(|| Error::parse("missing '# floor=' line"))?;
        let header = lines.next().ok_or_else(|| Error::parse("missing estimate header"))?;
        if header.trim() != "letter,mu_hat,v_hat,p_hat,clamped" {
            return Err(Error::parse(format!("unexpected header {header:?}")));
        }
        let mut letters = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(Error::parse(format!("expected 5 cells, got {}", cells.len())));
            }
            letters.push(LetterEstimate {
                letter: cells[0].trim().parse().map_err(|_| Error::parse("bad letter"))?,
                mu_hat: cells[1].trim().parse().map_err(|_| Error::parse("bad mu_hat"))?,
                v_hat: cells[2].trim().parse().map_err(|_| Error::parse("bad v_hat"))?,
                p_hat: cells[3].trim().parse().map_err(|_| Error::parse("bad p_hat"))?,
                clamped: cells[4].trim().parse().map_err(|_| Error::parse("bad clamped"))?,
            });
        }
        Self::from_estimates(letters, floor).map_err(|e| match e {
            Error::Domain(msg) => Error::Parse(msg),
            other => other,
        })
    }
}

/// Method-of-moments estimate for one letter.
///
/// The sums are integer-exact, so the (T-1)-denominator sample variance
/// comes out bit-identical for any reduction order, and a constant count
/// gives exactly zero variance.
pub fn estimate_retention(
    ensemble: &TraceEnsemble,
    letter: u8,
    floor: f64,
) -> Result<LetterEstimate> {
    check_floor(floor)?;
    if letter as usize >= ensemble.spec().alphabet_size() {
        return Err(Error::domain(format!(
            "letter {letter} outside alphabet of size {}",
            ensemble.spec().alphabet_size()
        )));
    }
    let t = ensemble.count();
    if t < 2 {
        return Err(Error::domain("need T >= 2 traces for a sample variance"));
    }
    let (sum, sum_sq) = ensemble
        .traces()
        .par_iter()
        .map(|tr| {
            let y = tr.letter_count(letter) as u128;
            (y, y * y)
        })
        .reduce(|| (0u128, 0u128), |a, b| (a.0 + b.0, a.1 + b.1));
    if sum == 0 {
        return Err(Error::estimation(format!("letter {letter} unobserved in {t} traces")));
    }
    let tf = t as f64;
    let mu_hat = sum as f64 / tf;
    // T * sum(Y^2) - (sum Y)^2 = T (T-1) * sample variance, exactly
    let numerator = (t as u128 * sum_sq - sum * sum) as f64;
    let v_hat = numerator / (tf * (tf - 1.0));
    let raw = 1.0 - v_hat / mu_hat;
    let p_hat = raw.clamp(floor, 1.0);
    Ok(LetterEstimate { letter, mu_hat, v_hat, p_hat, clamped: p_hat != raw })
}

/// Estimates every letter of the alphabet; any unobserved letter is an error.
pub fn estimate_all(ensemble: &TraceEnsemble, floor: f64) -> Result<EstimateReport> {
    let m = ensemble.spec().alphabet_size();
    let letters = (0..m as u16)
        .map(|z| estimate_retention(ensemble, z as u8, floor))
        .collect::<Result<Vec<_>>>()?;
    EstimateReport::from_estimates(letters, floor)
}

/// Thins every trace at per-letter rates p_star_hat / p_hat_z through a
/// fresh substream of `seed`, independent of the channel stage. The
/// returned ensemble carries the composed true-channel spec.
pub fn equalize(ensemble: &TraceEnsemble, report: &EstimateReport, seed: u64) -> Result<TraceEnsemble> {
    let m = ensemble.spec().alphabet_size();
    if report.letters().len() != m {
        return Err(Error::domain(format!(
            "report covers {} letters, ensemble alphabet has {m}",
            report.letters().len()
        )));
    }
    if ensemble.spec().kind() != ChannelKind::LetterVarying {
        return Err(Error::domain("equalization applies to letter-varying ensembles"));
    }
    for e in report.letters() {
        if !(e.p_hat >= report.floor() && e.p_hat > 0.0) {
            return Err(Error::domain(format!(
                "estimate for letter {} is below the floor {}",
                e.letter,
                report.floor()
            )));
        }
    }
    let rates = report.rates();
    let composed = ensemble.spec().compose_thinning(&rates)?;
    let thinned: Vec<Trace> = ensemble
        .traces()
        .par_iter()
        .enumerate()
        .map(|(i, tr)| {
            let mut rng = rng::substream(seed, STAGE_THIN, i as u64);
            thin_trace(tr, &rates, &mut rng)
        })
        .collect::<Result<_>>()?;
    TraceEnsemble::new(thinned, ensemble.seed(), composed)
}

/// Coefficients of sum_k x_k p_{x_k} prod_{l<k} (p_{x_l} w + q_{x_l}).
#[derive(Clone, Debug, PartialEq)]
pub struct PhiPoly {
    coeffs: Vec<f64>,
}

impl PhiPoly {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Builds the letter-weighted polynomial of `x` under per-letter
/// retention `p_by_letter`.
pub fn phi_coefficients(x: &[u8], p_by_letter: &[f64]) -> Result<PhiPoly> {
    for (z, &p) in p_by_letter.iter().enumerate() {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("p[{z}] must lie in (0, 1], got {p}")));
        }
    }
    let mut resolved = Vec::with_capacity(x.len());
    let mut weights = Vec::with_capacity(x.len());
    for (k, &sym) in x.iter().enumerate() {
        let p = *p_by_letter.get(sym as usize).ok_or_else(|| {
            Error::domain(format!(
                "symbol {sym} at position {k} has no retention entry (vector has {})",
                p_by_letter.len()
            ))
        })?;
        resolved.push(p);
        weights.push(sym as f64);
    }
    Ok(PhiPoly { coeffs: weighted_coefficients(&weights, &resolved) })
}

/// Largest absolute coefficient difference between the polynomials of `x`
/// under two retention vectors.
pub fn phi_coefficient_gap(x: &[u8], p: &[f64], p_prime: &[f64]) -> Result<f64> {
    if p.len() != p_prime.len() {
        return Err(Error::domain(format!(
            "retention vectors must share a length, got {} and {}",
            p.len(),
            p_prime.len()
        )));
    }
    let a = phi_coefficients(x, p)?;
    let b = phi_coefficients(x, p_prime)?;
    Ok(a.coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(&u, &v)| (u - v).abs())
        .fold(0.0, f64::max))
}

/// Outcome of the unknown-probability pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct UnknownOutcome {
    pub record: ReconstructionRecord,
    pub report: EstimateReport,
}

/// Full unknown-probability pipeline: estimate retentions, equalize with a
/// second channel, then run the tournament against exact statistics of the
/// estimated constant-retention model.
pub fn reconstruct_unknown_record(
    ensemble: &TraceEnsemble,
    n: usize,
    m: usize,
    floor: f64,
    budget: u64,
) -> Result<UnknownOutcome> {
    if ensemble.source_length() != n {
        return Err(Error::domain(format!(
            "ensemble source length {} does not match n={n}",
            ensemble.source_length()
        )));
    }
    if ensemble.spec().alphabet_size() != m {
        return Err(Error::domain(format!(
            "ensemble alphabet {} does not match m={m}",
            ensemble.spec().alphabet_size()
        )));
    }
    let report = estimate_all(ensemble, floor)?;
    let equalized = equalize(ensemble, &report, ensemble.seed())?;
    let model = ChannelSpec::constant(report.p_star_hat(), m)?;
    let stats = empirical_stats(&equalized, n, m)?;
    let record = reconstruct_from_stats(&stats, &model, n, m, budget)?;
    Ok(UnknownOutcome { record, report })
}

/// [`reconstruct_unknown_record`] with the default budget, returning the
/// winning string.
pub fn reconstruct_unknown(
    ensemble: &TraceEnsemble,
    n: usize,
    m: usize,
    floor: f64,
) -> Result<Vec<u8>> {
    Ok(reconstruct_unknown_record(ensemble, n, m, floor, DEFAULT_CANDIDATE_BUDGET)?
        .record
        .estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_ensemble;
    use crate::genfunc::{expected_letter_stats, poisson_binomial_pmf_all};

    fn block_input(r: usize, m: usize) -> Vec<u8> {
        let mut x = Vec::with_capacity(r * m);
        for z in 0..m {
            x.extend(std::iter::repeat(z as u8).take(r));
        }
        x
    }

    #[test]
    fn certain_retention_estimates_exactly() {
        let spec = ChannelSpec::letter_varying(vec![1.0, 1.0]).unwrap();
        let ens = generate_ensemble(&[0, 1, 1, 0], &spec, 50, 3).unwrap();
        let e = estimate_retention(&ens, 1, 1e-6).unwrap();
        assert_eq!(e.mu_hat, 2.0);
        assert_eq!(e.v_hat, 0.0);
        assert_eq!(e.p_hat, 1.0);
        assert!(!e.clamped);
    }

    #[test]
    fn binomial_moment_identities() {
        // over the exact count distribution: mean r p, variance r p (1 - p)
        for r in 1..=12usize {
            for &p in &[0.3, 0.5, 0.9, 1.0] {
                let pmf = poisson_binomial_pmf_all(&vec![p; r]).unwrap();
                let mu: f64 = pmf.iter().enumerate().map(|(y, &q)| y as f64 * q).sum();
                let v: f64 = pmf
                    .iter()
                    .enumerate()
                    .map(|(y, &q)| (y as f64 - mu).powi(2) * q)
                    .sum();
                assert!((mu - r as f64 * p).abs() < 1e-12, "r={r} p={p}");
                assert!((v - r as f64 * p * (1.0 - p)).abs() < 1e-12, "r={r} p={p}");
                if p < 1.0 {
                    assert!(((1.0 - v / mu) - p).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn estimates_concentrate() {
        let spec = ChannelSpec::constant(0.7, 2).unwrap();
        let x = block_input(10, 2);
        let ens = generate_ensemble(&x, &spec, 20_000, 8).unwrap();
        for z in 0..2u8 {
            let e = estimate_retention(&ens, z, 1e-6).unwrap();
            assert!((e.p_hat - 0.7).abs() < 0.02, "letter {z}: {}", e.p_hat);
            assert!(!e.clamped);
        }
    }

    #[test]
    fn estimation_error_paths() {
        let spec = ChannelSpec::letter_varying(vec![0.9, 0.9]).unwrap();
        let ens = generate_ensemble(&[0, 0, 0], &spec, 100, 1).unwrap();
        assert!(matches!(estimate_retention(&ens, 1, 1e-6), Err(Error::Estimation(_))));
        assert!(matches!(estimate_all(&ens, 1e-6), Err(Error::Estimation(_))));
        assert!(matches!(estimate_retention(&ens, 2, 1e-6), Err(Error::Domain(_))));
        assert!(matches!(estimate_retention(&ens, 0, 0.0), Err(Error::Domain(_))));

        let tiny = generate_ensemble(&[0, 0], &spec, 1, 1).unwrap();
        assert!(matches!(estimate_retention(&tiny, 0, 1e-6), Err(Error::Domain(_))));
    }

    #[test]
    fn clamping_flags_pathological_samples() {
        let spec = ChannelSpec::letter_varying(vec![0.5, 0.5]).unwrap();
        let traces = vec![
            Trace::new(vec![1, 1, 1, 1], 4).unwrap(),
            Trace::new(vec![], 4).unwrap(),
        ];
        let ens = TraceEnsemble::new(traces, 0, spec).unwrap();
        let e = estimate_retention(&ens, 1, 0.05).unwrap();
        // counts 4 and 0: v_hat = 8 exceeds mu_hat = 2, raw estimate is negative
        assert_eq!(e.v_hat, 8.0);
        assert!(e.clamped);
        assert_eq!(e.p_hat, 0.05);
    }

    #[test]
    fn report_accessors_and_csv() {
        let report = EstimateReport::exact(&[1.0, 0.5], 0.1).unwrap();
        assert_eq!(report.p_star_hat(), 0.5);
        assert_eq!(report.rates(), vec![0.5, 1.0]);

        let spec = ChannelSpec::constant(0.8, 2).unwrap();
        let ens = generate_ensemble(&block_input(5, 2), &spec, 500, 2).unwrap();
        let report = estimate_all(&ens, 1e-3).unwrap();
        let back = EstimateReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(report, back);
        assert!(matches!(EstimateReport::from_csv("letter\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn equalize_identity_when_estimates_agree() {
        let spec = ChannelSpec::letter_varying(vec![0.7, 0.7]).unwrap();
        let ens = generate_ensemble(&block_input(4, 2), &spec, 200, 5).unwrap();
        let report = EstimateReport::exact(&[0.7, 0.7], 0.1).unwrap();
        let eq = equalize(&ens, &report, 99).unwrap();
        for (a, b) in ens.traces().iter().zip(eq.traces()) {
            assert_eq!(a.symbols(), b.symbols());
        }
    }

    #[test]
    fn equalize_rejects_mismatch() {
        let spec = ChannelSpec::letter_varying(vec![0.7, 0.7]).unwrap();
        let ens = generate_ensemble(&[0, 1], &spec, 10, 5).unwrap();
        let report = EstimateReport::exact(&[0.7, 0.7, 0.7], 0.1).unwrap();
        assert!(matches!(equalize(&ens, &report, 1), Err(Error::Domain(_))));

        let pv = ChannelSpec::position_varying(vec![0.7, 0.7], 2).unwrap();
        let ens = generate_ensemble(&[0, 1], &pv, 10, 5).unwrap();
        let report = EstimateReport::exact(&[0.7, 0.7], 0.1).unwrap();
        assert!(matches!(equalize(&ens, &report, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn equalization_matches_constant_channel_exactly() {
        let true_spec = ChannelSpec::letter_varying(vec![0.8, 0.6]).unwrap();
        let report = EstimateReport::exact(&[0.8, 0.6], 0.1).unwrap();
        let composed = true_spec.compose_thinning(&report.rates()).unwrap();
        let constant = ChannelSpec::constant(0.6, 2).unwrap();
        let x = [1u8, 0, 1, 1, 0];
        let a = expected_letter_stats(&x, &composed).unwrap();
        let b = expected_letter_stats(&x, &constant).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn phi_gap_examples() {
        let x = block_input(10, 2);
        assert_eq!(phi_coefficient_gap(&x, &[0.7, 0.7], &[0.7, 0.7]).unwrap(), 0.0);

        let eps = 1e-6;
        let gap = phi_coefficient_gap(&x, &[0.7, 0.7], &[0.7 + eps, 0.7 + eps]).unwrap();
        let n = x.len() as f64;
        assert!(gap > 0.0);
        assert!(gap <= n * n * 2.0 * eps, "gap {gap}");
    }

    #[test]
    fn phi_gap_decomposes_by_letter() {
        let x = [0u8, 1, 0, 1, 1, 0, 1, 0, 0, 1];
        let p = [0.7, 0.7];
        let eps = 1e-3;
        let p_one = [0.7 + eps, 0.7];
        let p_all = [0.7 + eps, 0.7 + eps];
        let one = phi_coefficient_gap(&x, &p, &p_one).unwrap();
        let all = phi_coefficient_gap(&x, &p, &p_all).unwrap();
        // holds on this instance; not true for arbitrary inputs
        assert!(one <= all + 1e-15, "one {one} all {all}");
        // the triangle inequality is the general guarantee
        let second = phi_coefficient_gap(&x, &p_one, &p_all).unwrap();
        assert!(all <= one + second + 1e-15);
    }

    #[test]
    fn phi_validation() {
        assert!(matches!(phi_coefficients(&[0, 2], &[0.5, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(phi_coefficients(&[0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(
            phi_coefficient_gap(&[0], &[0.5], &[0.5, 0.5]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn injected_exact_estimates_match_two_stage_pipeline() {
        let true_p = [0.9, 0.6];
        let spec = ChannelSpec::letter_varying(true_p.to_vec()).unwrap();
        let x = [1u8, 0, 1, 1, 0, 1];
        let ens = generate_ensemble(&x, &spec, 4000, 17).unwrap();

        let report = EstimateReport::exact(&true_p, 0.1).unwrap();
        let eq = equalize(&ens, &report, ens.seed()).unwrap();
        let model = ChannelSpec::constant(0.6, 2).unwrap();
        let stats = empirical_stats(&eq, 6, 2).unwrap();
        let via_injection = reconstruct_from_stats(&stats, &model, 6, 2, 1 << 10).unwrap();

        // manual two-stage path with the same seeds and true ratios
        let manual: Vec<Trace> = ens
            .traces()
            .iter()
            .enumerate()
            .map(|(i, tr)| {
                let mut rng = rng::substream(ens.seed(), STAGE_THIN, i as u64);
                thin_trace(tr, &[0.6 / 0.9, 1.0], &mut rng).unwrap()
            })
            .collect();
        let manual_ens =
            TraceEnsemble::new(manual, ens.seed(), spec.compose_thinning(&[0.6 / 0.9, 1.0]).unwrap())
                .unwrap();
        let manual_stats = empirical_stats(&manual_ens, 6, 2).unwrap();
        let manual_record = reconstruct_from_stats(&manual_stats, &model, 6, 2, 1 << 10).unwrap();

        assert_eq!(via_injection.estimate, manual_record.estimate);
        assert_eq!(via_injection.estimate, x);
    }

    #[test]
    fn unknown_pipeline_small_run() {
        let spec = ChannelSpec::letter_varying(vec![0.9, 0.7]).unwrap();
        let x = [1u8, 0, 1, 1, 0, 0];
        for seed in 0..5u64 {
            let ens = generate_ensemble(&x, &spec, 20_000, 100 + seed).unwrap();
            let got = reconstruct_unknown(&ens, 6, 2, 0.5).unwrap();
            assert_eq!(got, x, "seed {seed}");
        }
    }

    #[test]
    fn unknown_pipeline_surfaces_missing_letter() {
        let spec = ChannelSpec::letter_varying(vec![0.9, 0.7]).unwrap();
        let ens = generate_ensemble(&[0, 0, 0, 0], &spec, 100, 3).unwrap();
        assert!(matches!(
            reconstruct_unknown(&ens, 4, 2, 0.5),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn variance_scaling_across_seeds() {
        let spec = ChannelSpec::constant(0.6, 2).unwrap();
        let x = block_input(6, 2);
        let t = 400usize;
        let mut mus = Vec::new();
        for seed in 0..200u64 {
            let ens = generate_ensemble(&x, &spec, t, 7000 + seed).unwrap();
            mus.push(estimate_retention(&ens, 0, 1e-6).unwrap().mu_hat);
        }
        let mean: f64 = mus.iter().sum::<f64>() / mus.len() as f64;
        let var: f64 =
            mus.iter().map(|&m| (m - mean).powi(2)).sum::<f64>() / (mus.len() - 1) as f64;
        let r = 6.0;
        assert!(var <= r / t as f64 * 1.5, "Var[mu_hat] = {var}");
    }
}
