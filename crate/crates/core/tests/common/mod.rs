//! Brute-force reference implementations for small inputs.
//!
//! Everything here enumerates all 2^n deletion masks directly, so it is
//! exact (up to f64 rounding of sums) and entirely independent of the
//! incremental recurrences used by the library.

// each test binary uses its own subset of these helpers
#![allow(dead_code)]

use tracerecon::channel::ChannelSpec;

/// Exact padded per-letter indicator means: entry [z][j] is the
/// probability that position j of the padded trace holds letter z.
pub fn exact_padded_stats(x: &[u8], spec: &ChannelSpec) -> Vec<Vec<f64>> {
    let n = x.len();
    assert!(n <= 20, "mask enumeration is 2^n");
    let m = spec.alphabet_size();
    let mut stats = vec![vec![0.0; n]; m];
    for mask in 0u32..1 << n {
        let mut prob = 1.0;
        for (k, &sym) in x.iter().enumerate() {
            let p = spec.retention_for(k, sym);
            prob *= if mask >> k & 1 == 1 { p } else { 1.0 - p };
        }
        let mut j = 0;
        for (k, &sym) in x.iter().enumerate() {
            if mask >> k & 1 == 1 {
                stats[sym as usize][j] += prob;
                j += 1;
            }
        }
    }
    stats
}

/// Coefficients (degrees 0..n-1) of sum_k a_k p_k prod_{l<k} (p_l w + q_l),
/// expanded term by term over subsets of the prefix.
pub fn brute_weighted_coefficients(a: &[f64], p: &[f64]) -> Vec<f64> {
    let n = a.len();
    assert_eq!(n, p.len());
    assert!(n <= 20);
    let mut coeffs = vec![0.0; n];
    for k in 0..n {
        for subset in 0u32..1 << k {
            let mut term = a[k] * p[k];
            for l in 0..k {
                term *= if subset >> l & 1 == 1 { p[l] } else { 1.0 - p[l] };
            }
            coeffs[subset.count_ones() as usize] += term;
        }
    }
    coeffs
}

/// Largest absolute entry-wise difference between two matrices of equal shape.
pub fn matrix_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut gap: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (&u, &v) in ra.iter().zip(rb) {
            gap = gap.max((u - v).abs());
        }
    }
    gap
}
