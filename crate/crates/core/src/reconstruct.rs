//! Mean-based reconstruction.
//!
//! Empirical padded-trace statistics are compared against exact expected
//! statistics of candidate strings at the single best separating
//! coordinate. A Hoeffding plan sizes the ensemble so that, with a union
//! bound over all candidate pairs, every comparison involving the true
//! string lands on its side; a single-elimination tournament then needs
//! only m^n - 1 comparisons instead of all pairs.

use crate::channel::{ChannelKind, ChannelSpec, TraceEnsemble};
use crate::error::{Error, Result};
use crate::genfunc::expected_letter_stats;
use crate::rng::{self, STAGE_CHANNEL};
use crate::separation::best_coordinate_between;
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

pub use crate::genfunc::StatsMatrix;

/// Default cap on the number of tournament candidates m^n.
pub const DEFAULT_CANDIDATE_BUDGET: u64 = 1 << 20;

/// Sample-size plan for testing all candidate pairs at gap `gap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestPlan {
    pub gap: f64,
    pub failure_prob: f64,
    pub candidate_count: u64,
    pub samples_required: u64,
}

/// T = ceil(2 ln(2 c^2 / failure_prob) / gap^2): two-sided Hoeffding for
/// [0,1]-bounded indicator means with a union bound over candidate pairs.
pub fn plan_samples(gap: f64, failure_prob: f64, candidate_count: u64) -> Result<TestPlan> {
    if !(gap.is_finite() && gap > 0.0 && gap <= 1.0) {
        return Err(Error::domain(format!("gap must lie in (0, 1], got {gap}")));
    }
    if !(failure_prob.is_finite() && failure_prob > 0.0 && failure_prob < 1.0) {
        return Err(Error::domain(format!(
            "failure_prob must lie in (0, 1), got {failure_prob}"
        )));
    }
    if candidate_count < 2 {
        return Err(Error::domain("need at least two candidates to plan for"));
    }
    let c = candidate_count as f64;
    let raw = 2.0 * (2.0 * c * c / failure_prob).ln() / (gap * gap);
    if !raw.is_finite() || raw > 1e15 {
        return Err(Error::capacity(format!("required sample count {raw:e} is not usable")));
    }
    Ok(TestPlan {
        gap,
        failure_prob,
        candidate_count,
        samples_required: raw.ceil() as u64,
    })
}

fn check_stats_shape(stats: &StatsMatrix, n: usize, m: usize, spec: &ChannelSpec) -> Result<()> {
    if stats.alphabet_size() != m || stats.positions() != n {
        return Err(Error::domain(format!(
            "stats shape {}x{} does not match m={m}, n={n}",
            stats.alphabet_size(),
            stats.positions()
        )));
    }
    if spec.alphabet_size() != m {
        return Err(Error::domain(format!(
            "spec alphabet {} does not match m={m}",
            spec.alphabet_size()
        )));
    }
    if let Some(len) = spec.length() {
        if len != n {
            return Err(Error::domain(format!("spec length {len} does not match n={n}")));
        }
    }
    Ok(())
}

/// Per-letter, per-position frequencies over the ensemble:
/// values[z][j] = (1/T) #\{traces whose j-th symbol exists and equals z\}.
pub fn empirical_stats(ensemble: &TraceEnsemble, n: usize, m: usize) -> Result<StatsMatrix> {
    if ensemble.count() == 0 {
        return Err(Error::domain("ensemble is empty"));
    }
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
    // integer counts make the parallel reduction order irrelevant
    let zero = || vec![vec![0u64; n]; m];
    let counts = ensemble
        .traces()
        .par_iter()
        .fold(zero, |mut acc, t| {
            for (j, &sym) in t.symbols().iter().enumerate() {
                acc[sym as usize][j] += 1;
            }
            acc
        })
        .reduce(zero, |mut left, right| {
            for (lr, rr) in left.iter_mut().zip(right) {
                for (lv, rv) in lr.iter_mut().zip(rr) {
                    *lv += rv;
                }
            }
            left
        });
    let total = ensemble.count() as f64;
    let values = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / total).collect())
        .collect();
    StatsMatrix::new(values, ensemble.count())
}

/// Same result as [`generate_ensemble`](crate::channel::generate_ensemble)
/// followed by [`empirical_stats`], without materializing the traces.
/// Bit-identical because trace `i` consumes the same substream either way.
pub fn empirical_stats_streamed(
    x: &[u8],
    spec: &ChannelSpec,
    count: usize,
    seed: u64,
) -> Result<StatsMatrix> {
    spec.validate_input(x)?;
    if count == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let n = x.len();
    let m = spec.alphabet_size();
    let resolved = spec.resolved_retention(x)?;
    let zero = || vec![vec![0u64; n]; m];
    let counts = (0..count)
        .into_par_iter()
        .fold(zero, |mut acc, i| {
            let mut rng = rng::substream(seed, STAGE_CHANNEL, i as u64);
            let mut j = 0usize;
            for (k, &sym) in x.iter().enumerate() {
                if rng.gen::<f64>() < resolved[k] {
                    acc[sym as usize][j] += 1;
                    j += 1;
                }
            }
            acc
        })
        .reduce(zero, |mut left, right| {
            for (lr, rr) in left.iter_mut().zip(right) {
                for (lv, rv) in lr.iter_mut().zip(rr) {
                    *lv += rv;
                }
            }
            left
        });
    let total = count as f64;
    let values = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / total).collect())
        .collect();
    StatsMatrix::new(values, count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairwiseOutcome {
    First,
    Second,
}

/// Outcome of one pairwise comparison plus how decisive it was.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseDetail {
    pub winner: PairwiseOutcome,
    /// |d_x - d_y| where d are the distances at the deciding coordinate.
    pub margin: f64,
    pub letter: u8,
    pub index: usize,
}

/// Compares the observed statistic to both candidates' exact statistics at
/// their best separating coordinate; the closer candidate wins. Distance
/// ties go to the lexicographically smaller string.
pub fn pairwise_test_detail(
    stats: &StatsMatrix,
    x: &[u8],
    y: &[u8],
    spec: &ChannelSpec,
) -> Result<PairwiseDetail> {
    if x == y {
        return Err(Error::domain("candidates must differ"));
    }
    if x.len() != y.len() || x.len() != stats.positions() {
        return Err(Error::domain("candidate lengths must match the stats matrix"));
    }
    let exact_x = expected_letter_stats(x, spec)?;
    let exact_y = expected_letter_stats(y, spec)?;
    check_stats_shape(stats, x.len(), spec.alphabet_size(), spec)?;
    let (letter, index, _, _) = best_coordinate_between(&exact_x, &exact_y)?;
    let observed = stats.value(letter, index);
    let dx = (observed - exact_x.value(letter, index)).abs();
    let dy = (observed - exact_y.value(letter, index)).abs();
    let winner = if dx < dy {
        PairwiseOutcome::First
    } else if dy < dx {
        PairwiseOutcome::Second
    } else if x <= y {
        PairwiseOutcome::First
    } else {
        PairwiseOutcome::Second
    };
    Ok(PairwiseDetail { winner, margin: (dx - dy).abs(), letter, index })
}

/// [`pairwise_test_detail`] without the diagnostics.
pub fn pairwise_test(
    stats: &StatsMatrix,
    x: &[u8],
    y: &[u8],
    spec: &ChannelSpec,
) -> Result<PairwiseOutcome> {
    Ok(pairwise_test_detail(stats, x, y, spec)?.winner)
}

/// Pointwise indicator string 1{x_k = letter}.
pub fn letter_indicator(x: &[u8], letter: u8, m: usize) -> Result<Vec<u8>> {
    if letter as usize >= m {
        return Err(Error::domain(format!("letter {letter} outside alphabet of size {m}")));
    }
    if let Some(&sym) = x.iter().find(|&&s| s as usize >= m) {
        return Err(Error::domain(format!("symbol {sym} outside alphabet of size {m}")));
    }
    Ok(x.iter().map(|&s| u8::from(s == letter)).collect())
}

/// One tournament round's worth of diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub matches: usize,
    pub min_margin: f64,
}

/// Result record of one reconstruction run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionRecord {
    pub estimate: Vec<u8>,
    /// Set when the true string is known.
    pub success: Option<bool>,
    pub rounds: Vec<RoundSummary>,
    /// Sample count behind the statistics (0 for exact).
    pub samples_used: usize,
    pub wall_ms: u128,
}

impl ReconstructionRecord {
    pub fn with_truth(mut self, truth: &[u8]) -> Self {
        self.success = Some(self.estimate == truth);
        self
    }

    pub fn to_record(&self) -> String {
        let estimate: Vec<String> = self.estimate.iter().map(|s| s.to_string()).collect();
        let mut out = format!("estimate={}\n", estimate.join(" "));
        if let Some(s) = self.success {
            out.push_str(&format!("success={s}\n"));
        }
        out.push_str(&format!("samples={}\nwall_ms={}\n", self.samples_used, self.wall_ms));
        for r in &self.rounds {
            out.push_str(&format!(
                "round={} matches={} min_margin={}\n",
                r.round, r.matches, r.min_margin
            ));
        }
        out
    }
}

fn index_to_string(mut idx: u64, n: usize, m: usize) -> Vec<u8> {
    let mut out = vec![0u8; n];
    for slot in out.iter_mut().rev() {
        *slot = (idx % m as u64) as u8;
        idx /= m as u64;
    }
    out
}

/// Single-elimination tournament over candidate indices 0..total, seeded
/// in lexicographic order. `fight(i, j)` returns (true iff `i` wins, margin).
fn run_tournament<F>(total: u64, fight: F) -> Result<(u64, Vec<RoundSummary>)>
where
    F: Fn(u64, u64) -> Result<(bool, f64)> + Sync,
{
    let mut alive: Vec<u64> = (0..total).collect();
    let mut rounds = Vec::new();
    let mut round = 0usize;
    while alive.len() > 1 {
        round += 1;
        let outcomes: Vec<(u64, f64)> = alive
            .par_chunks(2)
            .map(|pair| match pair {
                [i, j] => {
                    let (first_wins, margin) = fight(*i, *j)?;
                    Ok((if first_wins { *i } else { *j }, margin))
                }
                [i] => Ok((*i, f64::INFINITY)),
                _ => unreachable!(),
            })
            .collect::<Result<Vec<_>>>()?;
        let matches = alive.len() / 2;
        let min_margin = outcomes
            .iter()
            .map(|&(_, margin)| margin)
            .fold(f64::INFINITY, f64::min);
        alive = outcomes.into_iter().map(|(winner, _)| winner).collect();
        rounds.push(RoundSummary { round, matches, min_margin });
    }
    Ok((alive[0], rounds))
}

fn checked_candidate_count(n: usize, m: usize, budget: u64) -> Result<u64> {
    let total = (m as u128)
        .checked_pow(u32::try_from(n).map_err(|_| Error::capacity("length too large"))?)
        .ok_or_else(|| Error::capacity(format!("m^n overflows for m={m}, n={n}")))?;
    if total > budget as u128 {
        return Err(Error::capacity(format!(
            "candidate count m^n = {total} exceeds budget {budget}"
        )));
    }
    Ok(total as u64)
}

/// Tournament reconstruction from a precomputed statistics matrix.
pub fn reconstruct_from_stats(
    stats: &StatsMatrix,
    spec: &ChannelSpec,
    n: usize,
    m: usize,
    budget: u64,
) -> Result<ReconstructionRecord> {
    check_stats_shape(stats, n, m, spec)?;
    let start = Instant::now();
    let total = checked_candidate_count(n, m, budget)?;
    let (winner, rounds) = run_tournament(total, |i, j| {
        let x = index_to_string(i, n, m);
        let y = index_to_string(j, n, m);
        let detail = pairwise_test_detail(stats, &x, &y, spec)?;
        Ok((detail.winner == PairwiseOutcome::First, detail.margin))
    })?;
    Ok(ReconstructionRecord {
        estimate: index_to_string(winner, n, m),
        success: None,
        rounds,
        samples_used: stats.sample_count(),
        wall_ms: start.elapsed().as_millis(),
    })
}

/// Full record variant of [`reconstruct_exhaustive`].
pub fn reconstruct_exhaustive_record(
    ensemble: &TraceEnsemble,
    spec: &ChannelSpec,
    n: usize,
    m: usize,
    budget: u64,
) -> Result<ReconstructionRecord> {
    let stats = empirical_stats(ensemble, n, m)?;
    reconstruct_from_stats(&stats, spec, n, m, budget)
}

/// Reconstructs by tournament over all m^n candidates (default budget).
pub fn reconstruct_exhaustive(
    ensemble: &TraceEnsemble,
    spec: &ChannelSpec,
    n: usize,
    m: usize,
) -> Result<Vec<u8>> {
    Ok(reconstruct_exhaustive_record(ensemble, spec, n, m, DEFAULT_CANDIDATE_BUDGET)?.estimate)
}

/// Result of the per-letter reduction route.
#[derive(Clone, Debug, PartialEq)]
pub struct LetterMergeOutcome {
    pub estimate: Vec<u8>,
    /// Positions claimed by more than one letter.
    pub conflicts: usize,
    /// Positions claimed by no letter.
    pub unclaimed: usize,
}

/// Binary statistics of the letter-indicator reduction: row 1 is the
/// letter's row, row 0 collects every other letter.
fn binary_reduction_stats(stats: &StatsMatrix, letter: u8) -> Result<StatsMatrix> {
    let n = stats.positions();
    let mut other = vec![0.0; n];
    for z in 0..stats.alphabet_size() as u16 {
        let z = z as u8;
        if z == letter {
            continue;
        }
        for (j, o) in other.iter_mut().enumerate() {
            *o += stats.value(z, j);
        }
    }
    StatsMatrix::new(vec![other, stats.row(letter).to_vec()], stats.sample_count())
}

/// How strongly the statistics favor `keep` over `keep` with position `k`
/// flipped; positive means the flip fits worse.
fn flip_preference(
    stats_b: &StatsMatrix,
    spec_b: &ChannelSpec,
    keep: &[u8],
    k: usize,
) -> Result<f64> {
    let mut flipped = keep.to_vec();
    flipped[k] ^= 1;
    let exact_keep = expected_letter_stats(keep, spec_b)?;
    let exact_flip = expected_letter_stats(&flipped, spec_b)?;
    let (letter, index, _, _) = best_coordinate_between(&exact_keep, &exact_flip)?;
    let observed = stats_b.value(letter, index);
    let d_keep = (observed - exact_keep.value(letter, index)).abs();
    let d_flip = (observed - exact_flip.value(letter, index)).abs();
    Ok(d_flip - d_keep)
}

/// Reconstructs the positions of each letter by a binary tournament per
/// letter, then merges the claimed position sets. Needs a retention
/// sequence that does not depend on the letters, so the spec must be
/// position-varying or constant letter-varying. Conflicting and unclaimed
/// positions resolve by the empirical flip margin and are counted.
pub fn reconstruct_by_letters(
    stats: &StatsMatrix,
    spec: &ChannelSpec,
    n: usize,
    m: usize,
    budget: u64,
) -> Result<LetterMergeOutcome> {
    check_stats_shape(stats, n, m, spec)?;
    let resolved = match spec.kind() {
        ChannelKind::PositionVarying => spec.retention().to_vec(),
        ChannelKind::LetterVarying => {
            let first = spec.retention()[0];
            if spec.retention().iter().any(|&p| p != first) {
                return Err(Error::domain(
                    "per-letter reduction needs a constant or position-varying retention".to_string(),
                ));
            }
            vec![first; n]
        }
    };
    let spec_b = ChannelSpec::position_varying(resolved, 2)?;
    checked_candidate_count(n, 2, budget)?;

    let mut claims: Vec<Vec<u8>> = Vec::with_capacity(m);
    let mut reduced: Vec<StatsMatrix> = Vec::with_capacity(m);
    for z in 0..m as u16 {
        let stats_b = binary_reduction_stats(stats, z as u8)?;
        let record = reconstruct_from_stats(&stats_b, &spec_b, n, 2, budget)?;
        claims.push(record.estimate);
        reduced.push(stats_b);
    }

    let mut estimate = vec![0u8; n];
    let mut conflicts = 0usize;
    let mut unclaimed = 0usize;
    for k in 0..n {
        let claimants: Vec<u8> = (0..m as u16)
            .map(|z| z as u8)
            .filter(|&z| claims[z as usize][k] == 1)
            .collect();
        match claimants.len() {
            1 => estimate[k] = claimants[0],
            0 => {
                unclaimed += 1;
                // every letter denies the position; take the least confident denial
                let mut best = (0u8, f64::INFINITY);
                for z in 0..m as u16 {
                    let z = z as u8;
                    let pref = flip_preference(&reduced[z as usize], &spec_b, &claims[z as usize], k)?;
                    if pref < best.1 {
                        best = (z, pref);
                    }
                }
                estimate[k] = best.0;
            }
            _ => {
                conflicts += 1;
                let mut best = (claimants[0], f64::NEG_INFINITY);
                for &z in &claimants {
                    let pref = flip_preference(&reduced[z as usize], &spec_b, &claims[z as usize], k)?;
                    if pref > best.1 {
                        best = (z, pref);
                    }
                }
                estimate[k] = best.0;
            }
        }
    }
    Ok(LetterMergeOutcome { estimate, conflicts, unclaimed })
}
