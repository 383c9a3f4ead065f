//! Arc scans and separating coordinates.
//!
//! The reconstruction argument needs two numeric facts: on the arc
//! gamma_L = {e^{i theta} : |theta| <= pi/L} the polynomial `Psi` of a
//! nonzero signed input stays bounded away from zero, and the prefix
//! products `prod (p_l w + q_l)` stay bounded below. This module scans
//! those quantities on grids, searches adversarially over sign vectors,
//! and picks the best separating coordinate for a candidate pair.

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::genfunc::{expected_letter_stats, psi_eval, GenPoly, PeriodicMap, SignedInput, StatsMatrix};
use crate::rng::{self, STAGE_SEARCH};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Default grid resolution per arc. Odd so that theta = 0 is on the grid
/// along with both endpoints.
pub const DEFAULT_GRID_POINTS: usize = 513;

/// Constant in the prefix-product lower bound exp(-len * C2 / L^2).
/// Provable from the factor modulus identity for L >= 2; the bound can
/// fail below that, which the pass flag reports.
pub const PRODUCT_BOUND_C2: f64 = PI * PI / 2.0;

/// Constant in the mapped-point modulus bound exp(-C7 / L^2). Mapped arc
/// points satisfy |(z - q_tilde)/p_tilde| >= 1, so any positive value works.
pub const DEFAULT_MAPPED_MODULUS_C7: f64 = 1.0;

/// Default offset for the extra probe point z = -1 + delta used by the
/// mapped scan when the two retention values are in ratio 2.
pub const DEFAULT_PROBE_DELTA: f64 = 0.1;

/// The arc gamma_L, sampled at equally spaced angles with both endpoints
/// and theta = 0 on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    l: f64,
    grid_points: usize,
}

impl Arc {
    pub fn new(l: f64, grid_points: usize) -> Result<Self> {
        if !(l.is_finite() && l >= 1.0) {
            return Err(Error::domain(format!("arc parameter L must be >= 1, got {l}")));
        }
        if grid_points < 3 || grid_points % 2 == 0 {
            return Err(Error::domain(format!(
                "grid_points must be odd and >= 3 so the grid contains theta = 0, got {grid_points}"
            )));
        }
        Ok(Arc { l, grid_points })
    }

    pub fn with_default_grid(l: f64) -> Result<Self> {
        Arc::new(l, DEFAULT_GRID_POINTS)
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn theta(&self, t: usize) -> f64 {
        let g = (self.grid_points - 1) as f64;
        PI * (2.0 * t as f64 - g) / (self.l * g)
    }

    /// Grid points e^{i theta_t}, t = 0..grid_points.
    pub fn points(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.grid_points).map(|t| Complex64::from_polar(1.0, self.theta(t)))
    }
}

/// Which polynomial an arc scan evaluates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScanVariant {
    /// |Psi(w)| at arc points w.
    Direct,
    /// |Psi((z - q_tilde)/p_tilde)| at arc points z, optionally probing
    /// the extra point z = -1 + probe_delta.
    PeriodicMapped {
        map: PeriodicMap,
        probe_delta: Option<f64>,
    },
}

/// Max of the scanned modulus over the grid; returns the argmax point
/// (w-space for `Direct`, z-space for `PeriodicMapped`) and the value.
/// Ties keep the earliest grid point.
pub fn arc_max_abs(
    a: &SignedInput,
    retention_seq: &[f64],
    arc: &Arc,
    variant: &ScanVariant,
) -> Result<(Complex64, f64)> {
    if a.values()[0] != 1.0 {
        return Err(Error::domain(format!(
            "scan requires a_0 = 1, got {}",
            a.values()[0]
        )));
    }
    let eval_at = |point: Complex64| -> Result<f64> {
        let w = match variant {
            ScanVariant::Direct => point,
            ScanVariant::PeriodicMapped { map, .. } => map.map_to_w(point),
        };
        Ok(psi_eval(a, retention_seq, w)?.norm())
    };
    if let ScanVariant::PeriodicMapped { map, probe_delta } = variant {
        if !map.matches(retention_seq) {
            return Err(Error::domain(
                "retention_seq must alternate between the map's two probabilities".to_string(),
            ));
        }
        if let Some(d) = probe_delta {
            if !(d.is_finite() && *d > 0.0 && *d < 1.0) {
                return Err(Error::domain(format!("probe delta must lie in (0, 1), got {d}")));
            }
        }
    }
    let mut best_point = Complex64::new(0.0, 0.0);
    let mut best = f64::NEG_INFINITY;
    for point in arc.points() {
        let mag = eval_at(point)?;
        if mag > best {
            best = mag;
            best_point = point;
        }
    }
    if let ScanVariant::PeriodicMapped { probe_delta: Some(d), .. } = variant {
        let probe = Complex64::new(-1.0 + d, 0.0);
        let mag = eval_at(probe)?;
        if mag > best {
            best = mag;
            best_point = probe;
        }
    }
    Ok((best_point, best))
}

/// Squared modulus of p e^{i theta} + (1 - p) in closed form.
pub fn factor_modulus_sq(p: f64, theta: f64) -> f64 {
    1.0 - 2.0 * p * (1.0 - p) * (1.0 - theta.cos())
}

/// Outcome of a prefix-product scan on one arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductBoundReport {
    pub min_modulus: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Scans |prod_l (p_l w + q_l)| over the arc and compares against
/// exp(-len * C2 / L^2).
pub fn check_product_lower_bound(
    retention_prefix: &[f64],
    arc: &Arc,
) -> Result<ProductBoundReport> {
    for (k, &p) in retention_prefix.iter().enumerate() {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!(
                "retention_prefix[{k}] must lie in (0, 1], got {p}"
            )));
        }
    }
    let mut min_modulus = f64::INFINITY;
    for w in arc.points() {
        let mut prod = Complex64::new(1.0, 0.0);
        for &p in retention_prefix {
            prod *= p * w + (1.0 - p);
        }
        min_modulus = min_modulus.min(prod.norm());
    }
    let bound = (-(retention_prefix.len() as f64) * PRODUCT_BOUND_C2 / (arc.l() * arc.l())).exp();
    let margin = min_modulus - bound;
    Ok(ProductBoundReport { min_modulus, bound, margin, pass: margin >= 0.0 })
}

/// Smallest |(z - q_tilde)/p_tilde| over the arc grid.
pub fn mapped_point_min_modulus(map: &PeriodicMap, arc: &Arc) -> f64 {
    arc.points()
        .map(|z| map.map_to_w(z).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Row of the adversarial scan table: min over sign vectors of the
/// arc max for one L.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcScanRow {
    pub l: f64,
    pub min_max: f64,
}

/// Adversarial scan table plus the least-squares fit of
/// -log(min_max) = c * L + intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcFitReport {
    pub rows: Vec<ArcScanRow>,
    pub c: f64,
    pub intercept: f64,
    pub trials: usize,
    pub grid_points: usize,
}

impl ArcFitReport {
    /// CSV rows (L, min_max, bound, margin) with bound from the fit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,min_max,bound,margin\n");
        for row in &self.rows {
            let bound = (-(self.c * row.l + self.intercept)).exp();
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.l,
                row.min_max,
                bound,
                row.min_max - bound
            ));
        }
        out
    }
}

fn grid_max(poly_a: &SignedInput, retention: &[f64], arc: &Arc) -> f64 {
    arc.points()
        .map(|w| psi_eval(poly_a, retention, w).expect("validated inputs").norm())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Empirical min over adversarial sign vectors (a_0 = 1, a_k = +-1) of the
/// arc max, per L, with coordinate-descent refinement of each champion.
/// Every refined champion is re-evaluated on every arc, so the table is
/// non-increasing in L up to grid discretization.
pub fn fit_arc_constant(
    retention: &[f64],
    l_list: &[f64],
    trials: usize,
    seed: u64,
    grid_points: usize,
) -> Result<ArcFitReport> {
    let n = retention.len();
    if n == 0 {
        return Err(Error::domain("retention sequence must be nonempty"));
    }
    for (k, &p) in retention.iter().enumerate() {
        if !(p.is_finite() && p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("retention[{k}] must lie in (0, 1], got {p}")));
        }
    }
    if l_list.len() < 2 {
        return Err(Error::domain("need at least two L values to fit a slope"));
    }
    for pair in l_list.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::domain("L_list must be strictly increasing"));
        }
    }
    if !(l_list[0].is_finite() && l_list[0] >= 1.0) {
        return Err(Error::domain("every L must be >= 1"));
    }
    if trials == 0 {
        return Err(Error::domain("need at least one adversarial trial"));
    }
    let arcs: Vec<Arc> = l_list.iter().map(|&l| Arc::new(l, grid_points)).collect::<Result<_>>()?;

    let draw = |index: usize| -> SignedInput {
        let mut rng = rng::substream(seed, STAGE_SEARCH, index as u64);
        let mut values = vec![1.0; n];
        for v in values.iter_mut().skip(1) {
            *v = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        SignedInput::new(values).expect("sign vectors are valid weights")
    };

    // per-L (min value, trial index); elementwise min with lowest-index
    // ties is order-independent, so the parallel reduce is deterministic
    let identity = || vec![(f64::INFINITY, usize::MAX); arcs.len()];
    let mins = (0..trials)
        .into_par_iter()
        .fold(identity, |mut acc, i| {
            let a = draw(i);
            for (slot, arc) in acc.iter_mut().zip(&arcs) {
                let v = grid_max(&a, retention, arc);
                if v < slot.0 || (v == slot.0 && i < slot.1) {
                    *slot = (v, i);
                }
            }
            acc
        })
        .reduce(identity, |mut left, right| {
            for (l, r) in left.iter_mut().zip(right) {
                if r.0 < l.0 || (r.0 == l.0 && r.1 < l.1) {
                    *l = r;
                }
            }
            left
        });

    // refine each champion by single-coordinate sign flips
    let mut champions: Vec<SignedInput> = Vec::with_capacity(arcs.len());
    for (slot, arc) in mins.iter().zip(&arcs) {
        let mut best = draw(slot.1);
        let mut best_val = slot.0;
        for _ in 0..4 {
            let mut improved = false;
            for k in 1..n {
                let mut flipped = best.values().to_vec();
                flipped[k] = -flipped[k];
                let cand = SignedInput::new(flipped).unwrap();
                let v = grid_max(&cand, retention, arc);
                if v < best_val {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        champions.push(best);
    }

    let rows: Vec<ArcScanRow> = arcs
        .iter()
        .zip(&mins)
        .map(|(arc, slot)| {
            let refined = champions
                .iter()
                .map(|a| grid_max(a, retention, arc))
                .fold(f64::INFINITY, f64::min);
            ArcScanRow { l: arc.l(), min_max: slot.0.min(refined) }
        })
        .collect();

    // least squares of -log(min_max) against L
    let k = rows.len() as f64;
    let sx: f64 = rows.iter().map(|r| r.l).sum();
    let sy: f64 = rows.iter().map(|r| -r.min_max.ln()).sum();
    let sxx: f64 = rows.iter().map(|r| r.l * r.l).sum();
    let sxy: f64 = rows.iter().map(|r| -r.l * r.min_max.ln()).sum();
    let denom = k * sxx - sx * sx;
    let c = (k * sxy - sx * sy) / denom;
    let intercept = (sy - c * sx) / k;

    Ok(ArcFitReport { rows, c, intercept, trials, grid_points })
}

/// Where the arc witness for a separating pair was found.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcWitness {
    pub point: Complex64,
    pub magnitude: f64,
    pub l_used: f64,
}

/// Best separating coordinate for a candidate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    /// Letter whose indicator statistics separate best.
    pub letter: u8,
    /// Trace position of the maximal gap.
    pub best_index: usize,
    /// |E X_j - E Y_j| at the best coordinate.
    pub gap: f64,
    /// Sign of E X_j - E Y_j there.
    pub sign: i8,
    /// Max of the letter-difference polynomial over the arc schedule.
    pub witness: Option<ArcWitness>,
}

impl SeparationReport {
    pub fn to_record(&self) -> String {
        let mut out = format!(
            "letter={}\nbest_index={}\ngap={}\nsign={}\n",
            self.letter, self.best_index, self.gap, self.sign
        );
        if let Some(w) = &self.witness {
            out.push_str(&format!(
                "witness_point={},{}\nwitness_magnitude={}\nl_used={}\n",
                w.point.re, w.point.im, w.magnitude, w.l_used
            ));
        }
        out
    }
}

/// Argmax coordinate of |A[letter][j] - B[letter][j]| over two matrices of
/// the same shape; ties keep the lexicographically first (letter, position).
/// Returns (letter, position, gap, sign of A - B there).
pub fn best_coordinate_between(a: &StatsMatrix, b: &StatsMatrix) -> Result<(u8, usize, f64, i8)> {
    if a.alphabet_size() != b.alphabet_size() || a.positions() != b.positions() {
        return Err(Error::domain("stats matrices have different shapes"));
    }
    let mut best = (0u8, 0usize, -1.0f64, 0.0f64);
    for z in 0..a.alphabet_size() as u16 {
        let z = z as u8;
        for j in 0..a.positions() {
            let diff = a.value(z, j) - b.value(z, j);
            if diff.abs() > best.2 {
                best = (z, j, diff.abs(), diff);
            }
        }
    }
    Ok((best.0, best.1, best.2.max(0.0), if best.3 >= 0.0 { 1 } else { -1 }))
}

/// Argmax of |S_x[letter][j] - S_y[letter][j]| over letters and positions,
/// from exact expected statistics. Ties keep the lexicographically first
/// (letter, position). An optional arc schedule evaluates the difference
/// polynomial of the winning letter for the report's witness.
pub fn best_separating_index(
    x: &[u8],
    y: &[u8],
    spec: &ChannelSpec,
    arc_schedule: &[Arc],
) -> Result<SeparationReport> {
    if x == y {
        return Err(Error::domain("candidates must differ"));
    }
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "candidates must share a length, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let stats_x = expected_letter_stats(x, spec)?;
    let stats_y = expected_letter_stats(y, spec)?;
    let (letter, best_index, gap, sign) = best_coordinate_between(&stats_x, &stats_y)?;
    let witness = if arc_schedule.is_empty() {
        None
    } else {
        let coeffs: Vec<f64> = stats_x
            .row(letter)
            .iter()
            .zip(stats_y.row(letter))
            .map(|(&a, &b)| a - b)
            .collect();
        let poly = GenPoly::new(coeffs);
        let mut found: Option<ArcWitness> = None;
        for arc in arc_schedule {
            for w in arc.points() {
                let mag = poly.eval(w).norm();
                if found.as_ref().map_or(true, |f| mag > f.magnitude) {
                    found = Some(ArcWitness { point: w, magnitude: mag, l_used: arc.l() });
                }
            }
        }
        found
    };
    Ok(SeparationReport { letter, best_index, gap, sign, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{weak_monotone_family, ChannelSpec};
    use crate::genfunc::psi_coefficients;
    use proptest::prelude::*;
    use rand::Rng;

    fn si(values: &[f64]) -> SignedInput {
        SignedInput::new(values.to_vec()).unwrap()
    }

    #[test]
    fn arc_grid_structure() {
        assert!(Arc::new(0.5, 101).is_err());
        assert!(Arc::new(2.0, 100).is_err());
        assert!(Arc::new(2.0, 1).is_err());
        let arc = Arc::new(4.0, 101).unwrap();
        let pts: Vec<Complex64> = arc.points().collect();
        assert_eq!(pts.len(), 101);
        assert!((arc.theta(0) + PI / 4.0).abs() < 1e-15);
        assert!((arc.theta(100) - PI / 4.0).abs() < 1e-15);
        assert_eq!(arc.theta(50), 0.0);
        assert_eq!(pts[50], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn constant_scan_value() {
        let arc = Arc::new(3.0, 11).unwrap();
        let (_, max) = arc_max_abs(&si(&[1.0, 0.0, 0.0]), &[0.7, 0.5, 0.5], &arc, &ScanVariant::Direct).unwrap();
        assert!((max - 0.7).abs() < 1e-15);
    }

    #[test]
    fn two_term_scan_matches_closed_form() {
        let arc = Arc::new(4.0, 101).unwrap();
        let (_, max) = arc_max_abs(&si(&[1.0, -1.0]), &[0.5, 0.5], &arc, &ScanVariant::Direct).unwrap();
        let manual = arc
            .points()
            .map(|w| (0.5 - 0.5 * (0.5 * w + 0.5)).norm())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((max - manual).abs() < 1e-15);
    }

    #[test]
    fn scan_requires_unit_leading_weight() {
        let arc = Arc::new(2.0, 11).unwrap();
        let err = arc_max_abs(&si(&[0.5, 1.0]), &[0.5, 0.5], &arc, &ScanVariant::Direct);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn random_scan_minimum_is_positive() {
        let retention = weak_monotone_family(30, 0.1).unwrap();
        let arc = Arc::new(8.0, 129).unwrap();
        let mut worst = f64::INFINITY;
        for i in 0..300usize {
            let mut rng = rng::substream(97, STAGE_SEARCH, i as u64);
            let mut values = vec![1.0; 30];
            for v in values.iter_mut().skip(1) {
                *v = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
            let (_, max) = arc_max_abs(&si(&values), &retention, &arc, &ScanVariant::Direct).unwrap();
            worst = worst.min(max);
        }
        assert!(worst > 0.0, "min of maxima {worst}");
    }

    #[test]
    fn mapped_scan_and_probe() {
        let map = PeriodicMap::new(0.3, 0.6).unwrap();
        let retention = [0.3, 0.6, 0.3, 0.6];
        let arc = Arc::new(4.0, 65).unwrap();
        let a = si(&[1.0, -1.0, 1.0, -1.0]);
        let plain = arc_max_abs(
            &a,
            &retention,
            &arc,
            &ScanVariant::PeriodicMapped { map, probe_delta: None },
        )
        .unwrap();
        let probed = arc_max_abs(
            &a,
            &retention,
            &arc,
            &ScanVariant::PeriodicMapped { map, probe_delta: Some(DEFAULT_PROBE_DELTA) },
        )
        .unwrap();
        assert!(probed.1 >= plain.1);
        assert!(plain.1 > 0.0);

        let err = arc_max_abs(
            &a,
            &[0.3, 0.5, 0.3, 0.6],
            &arc,
            &ScanVariant::PeriodicMapped { map, probe_delta: None },
        );
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = arc_max_abs(
            &a,
            &retention,
            &arc,
            &ScanVariant::PeriodicMapped { map, probe_delta: Some(1.5) },
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn modulus_identity() {
        for i in 0..200 {
            let p = 0.005 + 0.99 * (i as f64 / 199.0);
            for t in 0..50 {
                let theta = -PI + 2.0 * PI * t as f64 / 49.0;
                let direct = (p * Complex64::from_polar(1.0, theta) + (1.0 - p)).norm_sqr();
                assert!((direct - factor_modulus_sq(p, theta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_bound_examples() {
        let arc = Arc::new(10.0, 257).unwrap();
        let empty = check_product_lower_bound(&[], &arc).unwrap();
        assert_eq!(empty.min_modulus, 1.0);
        assert_eq!(empty.bound, 1.0);
        assert!(empty.pass);

        let single = check_product_lower_bound(&[0.5], &arc).unwrap();
        let expect = factor_modulus_sq(0.5, PI / 10.0).sqrt();
        assert!((single.min_modulus - expect).abs() < 1e-12);
        assert!(single.pass);

        let long = check_product_lower_bound(&[0.5; 20], &arc).unwrap();
        assert!((long.bound - (-20.0 * PRODUCT_BOUND_C2 / 100.0).exp()).abs() < 1e-15);
        assert!(long.pass, "margin {}", long.margin);

        assert!(check_product_lower_bound(&[0.0], &arc).is_err());
    }

    #[test]
    fn product_bound_can_fail_below_l_two() {
        // at L = 1 the arc is the full circle and w = -1 kills a p = 0.5 factor
        let arc = Arc::new(1.0, 257).unwrap();
        let report = check_product_lower_bound(&[0.5], &arc).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn mapped_points_stay_outside_unit_disc() {
        for (p, pt) in [(0.3, 0.6), (0.4, 0.7), (0.1, 1.0)] {
            let map = PeriodicMap::new(p, pt).unwrap();
            for l in [2.0, 4.0, 16.0] {
                let arc = Arc::new(l, 129).unwrap();
                let min = mapped_point_min_modulus(&map, &arc);
                assert!(min >= 1.0 - 1e-12, "min modulus {min}");
                assert!(min >= (-DEFAULT_MAPPED_MODULUS_C7 / (l * l)).exp() - 1e-12);
            }
        }
    }

    #[test]
    fn fit_needs_two_arcs() {
        let err = fit_arc_constant(&[0.5, 0.5], &[4.0], 10, 1, 33);
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = fit_arc_constant(&[0.5, 0.5], &[4.0, 2.0], 10, 1, 33);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn littlewood_fit_is_positive() {
        let report = fit_arc_constant(&[1.0; 8], &[2.0, 4.0, 8.0], 200, 5, 65).unwrap();
        assert!(report.c.is_finite());
        assert!(report.c > 0.0, "fitted c {}", report.c);
        for row in &report.rows {
            assert!(row.min_max > 0.0);
        }
    }

    #[test]
    fn scan_table_is_monotone() {
        let retention = weak_monotone_family(10, 0.1).unwrap();
        let report = fit_arc_constant(&retention, &[2.0, 4.0, 8.0, 16.0], 300, 7, 129).unwrap();
        for pair in report.rows.windows(2) {
            assert!(
                pair[1].min_max <= pair[0].min_max * (1.0 + 1e-3),
                "rows {:?}",
                report.rows
            );
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("L,min_max,bound,margin\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn identity_channel_pair() {
        let spec = ChannelSpec::position_varying(vec![1.0, 1.0], 2).unwrap();
        let report = best_separating_index(&[1, 0], &[0, 1], &spec, &[]).unwrap();
        assert_eq!(report.best_index, 0);
        assert_eq!(report.gap, 1.0);
        assert!(report.witness.is_none());
    }

    #[test]
    fn half_retention_pair() {
        let spec = ChannelSpec::position_varying(vec![0.5, 0.5], 2).unwrap();
        let report = best_separating_index(&[1, 1], &[1, 0], &spec, &[]).unwrap();
        assert!((report.gap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn pair_validation() {
        let spec = ChannelSpec::position_varying(vec![0.5, 0.5], 2).unwrap();
        assert!(matches!(
            best_separating_index(&[1, 0], &[1, 0], &spec, &[]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            best_separating_index(&[1], &[1, 0], &spec, &[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn witness_matches_difference_polynomial() {
        let spec = ChannelSpec::position_varying(vec![0.9, 0.7, 0.8], 2).unwrap();
        let arcs = [Arc::new(2.0, 33).unwrap(), Arc::new(4.0, 33).unwrap()];
        let report = best_separating_index(&[1, 1, 0], &[1, 0, 1], &spec, &arcs).unwrap();
        let witness = report.witness.unwrap();

        let diff = SignedInput::new(vec![0.0, 1.0, -1.0]).unwrap();
        let poly = psi_coefficients(&diff, &[0.9, 0.7, 0.8]).unwrap();
        let manual = arcs
            .iter()
            .flat_map(|arc| arc.points().collect::<Vec<_>>())
            .map(|w| poly.eval(w).norm())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((witness.magnitude - manual).abs() < 1e-12);
        assert!(witness.magnitude > 0.0);
        let record = report.to_record();
        assert!(record.contains("witness_magnitude="));
    }

    #[test]
    fn gap_positive_for_all_pairs_small() {
        let spec = ChannelSpec::position_varying(vec![0.6, 0.9, 0.5, 0.7, 0.8], 2).unwrap();
        let n = 5;
        for xv in 0u32..(1 << n) {
            for yv in (xv + 1)..(1 << n) {
                let x: Vec<u8> = (0..n).map(|k| ((xv >> k) & 1) as u8).collect();
                let y: Vec<u8> = (0..n).map(|k| ((yv >> k) & 1) as u8).collect();
                let report = best_separating_index(&x, &y, &spec, &[]).unwrap();
                assert!(report.gap > 0.0, "pair {xv} {yv}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn arc_max_monotone_in_l(
            signs in proptest::collection::vec(prop_oneof![Just(-1.0f64), Just(1.0f64)], 4..12),
            seed in 0u64..50,
        ) {
            let n = signs.len();
            let mut rng = rng::substream(seed, STAGE_SEARCH, 0);
            let retention: Vec<f64> = (0..n).map(|_| 0.3 + 0.7 * rng.gen::<f64>()).collect();
            let mut values = signs;
            values[0] = 1.0;
            let a = SignedInput::new(values).unwrap();
            let mut prev = f64::INFINITY;
            for l in [1.5, 3.0, 6.0, 12.0] {
                let arc = Arc::new(l, DEFAULT_GRID_POINTS).unwrap();
                let (_, max) = arc_max_abs(&a, &retention, &arc, &ScanVariant::Direct).unwrap();
                prop_assert!(max <= prev * (1.0 + 1e-3), "L={l}: {max} > {prev}");
                prev = max;
            }
        }

        #[test]
        fn random_pairs_have_positive_gap(
            x in proptest::collection::vec(0u8..3, 2..10),
            flip in 0usize..10,
        ) {
            let n = x.len();
            let mut y = x.clone();
            let k = flip % n;
            y[k] = (y[k] + 1) % 3;
            let retention: Vec<f64> = (0..n).map(|i| 0.25 + 0.7 * ((i as f64 * 0.59).sin().abs())).collect();
            let spec = ChannelSpec::position_varying(retention, 3).unwrap();
            let report = best_separating_index(&x, &y, &spec, &[]).unwrap();
            prop_assert!(report.gap > 0.0);
        }
    }
}
