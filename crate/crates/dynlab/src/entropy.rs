//! Entropy estimators: itinerary counting relative to a partition, empirical
//! metric entropy, entropy rates, Lyapunov spectra, and Pesin sums.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::maps::PlaneMap;

/// Axis-aligned cell, possibly wrapping around the torus in either
/// coordinate (`lo > hi` means the interval wraps through 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Cell {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Cell {
    fn contains_coord(lo: f64, hi: f64, x: f64) -> bool {
        if lo <= hi {
            lo <= x && x < hi
        } else {
            x >= lo || x < hi
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        Cell::contains_coord(self.lo.x, self.hi.x, p.x) && Cell::contains_coord(self.lo.y, self.hi.y, p.y)
    }
}

/// A labelled partition of the sampled domain into axis-aligned cells.
///
/// Labels are cell indices. Points on shared boundaries are assigned to the
/// lowest matching label, so classification is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn new(cells: Vec<Cell>) -> Self {
        Partition { cells }
    }

    /// Regular nx-by-ny grid on the unit square.
    pub fn unit_grid(nx: usize, ny: usize) -> Self {
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                cells.push(Cell {
                    lo: Vec2::new(i as f64 / nx as f64, j as f64 / ny as f64),
                    hi: Vec2::new((i + 1) as f64 / nx as f64, (j + 1) as f64 / ny as f64),
                });
            }
        }
        Partition { cells }
    }

    /// Translate every cell by `v` (mod 1 semantics are preserved by the
    /// wrapping `contains`).
    pub fn translated(&self, v: Vec2) -> Self {
        use crate::geom::wrap_unit;
        let cells = self
            .cells
            .iter()
            .map(|c| Cell {
                lo: Vec2::new(wrap_unit(c.lo.x + v.x), wrap_unit(c.lo.y + v.y)),
                hi: Vec2::new(wrap_unit(c.hi.x + v.x), wrap_unit(c.hi.y + v.y)),
            })
            .collect();
        Partition { cells }
    }

    /// Apply a label permutation: cell `i` of the result is `cells[perm[i]]`.
    pub fn relabeled(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.cells.len());
        Partition { cells: perm.iter().map(|&i| self.cells[i]).collect() }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Lowest-label cell containing `p`, or `None` if no cell covers it.
    pub fn classify(&self, p: Vec2) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(p))
    }
}

/// Observed itineraries of a fixed length with their hit counts.
#[derive(Debug, Clone)]
pub struct ItineraryTable {
    /// Itinerary length parameter n: strings have n+1 symbols.
    pub n: usize,
    pub counts: HashMap<Vec<u8>, u64>,
    /// Ensemble points whose full orbit stayed inside the partition.
    pub used_points: usize,
    /// Points dropped because some iterate left every cell.
    pub dropped_points: usize,
}

impl ItineraryTable {
    pub fn observed(&self) -> usize {
        self.counts.len()
    }

    pub fn total_hits(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Empirical metric entropy `-sum mu(X_I) log mu(X_I)` with
    /// `mu(X_I) = count / total`.
    pub fn metric_entropy(&self) -> f64 {
        let total = self.total_hits();
        if total == 0 {
            return 0.0;
        }
        let t = total as f64;
        -self
            .counts
            .values()
            .map(|&c| {
                let p = c as f64 / t;
                p * p.ln()
            })
            .sum::<f64>()
    }

    /// Itinerary-count entropy `log |observed|`.
    pub fn count_entropy(&self) -> f64 {
        if self.counts.is_empty() {
            0.0
        } else {
            (self.observed() as f64).ln()
        }
    }
}

/// Label sequences of length `n_max + 1` per ensemble point; `None` if any
/// visited point fell outside every cell.
fn label_orbits(
    map: &PlaneMap,
    partition: &Partition,
    n_max: usize,
    ensemble: &[Vec2],
) -> Vec<Option<Vec<u8>>> {
    assert!(partition.len() <= u8::MAX as usize + 1, "too many cells for u8 labels");
    ensemble
        .par_iter()
        .map(|&p0| {
            let mut labels = Vec::with_capacity(n_max + 1);
            let mut p = p0;
            for i in 0..=n_max {
                match partition.classify(p) {
                    Some(l) => labels.push(l as u8),
                    None => return None,
                }
                if i < n_max {
                    p = map.eval(p);
                }
            }
            Some(labels)
        })
        .collect()
}

fn table_from_orbits(orbits: &[Option<Vec<u8>>], n: usize) -> ItineraryTable {
    let mut counts: HashMap<Vec<u8>, u64> = HashMap::new();
    let mut used = 0;
    let mut dropped = 0;
    for orbit in orbits {
        match orbit {
            Some(labels) => {
                used += 1;
                *counts.entry(labels[..=n].to_vec()).or_insert(0) += 1;
            }
            None => dropped += 1,
        }
    }
    ItineraryTable { n, counts, used_points: used, dropped_points: dropped }
}

/// Build the itinerary table of length `n` over the ensemble.
pub fn itineraries(
    map: &PlaneMap,
    partition: &Partition,
    n: usize,
    ensemble: &[Vec2],
) -> ItineraryTable {
    let orbits = label_orbits(map, partition, n, ensemble);
    table_from_orbits(&orbits, n)
}

/// Itinerary-count entropy at time n: `log` of the number of observed
/// strings, together with the underlying table.
pub fn itinerary_entropy(
    map: &PlaneMap,
    partition: &Partition,
    n: usize,
    ensemble: &[Vec2],
) -> (f64, ItineraryTable) {
    assert!(n >= 1);
    assert!(!ensemble.is_empty());
    let table = itineraries(map, partition, n, ensemble);
    (table.count_entropy(), table)
}

/// Empirical partition metric entropy at time n.
pub fn partition_metric_entropy(
    map: &PlaneMap,
    partition: &Partition,
    n: usize,
    ensemble: &[Vec2],
) -> f64 {
    itineraries(map, partition, n, ensemble).metric_entropy()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyRateReport {
    /// h(n) = log(observed itineraries of length n+1) for n = 1..=n_max.
    pub h_seq: Vec<f64>,
    /// Metric-entropy sequence on the same runs.
    pub h_metric_seq: Vec<f64>,
    /// Least-squares slope of h(n) over the top half of the n range.
    pub rate: f64,
}

/// Entropy rate: extrapolated growth rate of `h_n` in `n`.
///
/// The additive transient of a subadditive sequence cancels in the slope, so
/// the estimator fits a least-squares line over the upper half of the range.
pub fn entropy_rate(
    map: &PlaneMap,
    partition: &Partition,
    n_max: usize,
    ensemble: &[Vec2],
) -> EntropyRateReport {
    assert!(n_max >= 4, "entropy_rate needs n_max >= 4");
    let orbits = label_orbits(map, partition, n_max, ensemble);
    let mut h_seq = Vec::with_capacity(n_max);
    let mut h_metric_seq = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let t = table_from_orbits(&orbits, n);
        h_seq.push(t.count_entropy());
        h_metric_seq.push(t.metric_entropy());
    }
    let lo = n_max / 2; // n values lo+1 ..= n_max (upper half)
    let pts: Vec<(f64, f64)> =
        (lo..n_max).map(|i| ((i + 1) as f64, h_seq[i])).collect();
    let rate = least_squares_slope(&pts);
    EntropyRateReport { h_seq, h_metric_seq, rate }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in pts {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Lyapunov exponents along one orbit, estimated by QR re-orthonormalization
/// of the derivative cocycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Exponents sorted descending.
    pub exponents: (f64, f64),
    /// Iterates actually performed.
    pub n: usize,
    pub point: Vec2,
    /// Step at which the orbit left the domain, when it did; the estimate is
    /// then partial.
    pub escaped_at: Option<usize>,
}

/// Run the QR cocycle for `n` iterates starting at `point`.
pub fn lyapunov_spectrum(map: &PlaneMap, point: Vec2, n: usize) -> LyapunovEstimate {
    assert!(n >= 1);
    let mut p = point;
    let mut v1 = Vec2::new(1.0, 0.0);
    let mut v2 = Vec2::new(0.0, 1.0);
    let mut s1 = 0.0f64;
    let mut s2 = 0.0f64;
    let mut escaped_at = None;
    let mut done = 0;
    for i in 0..n {
        if !p.is_finite() || p.norm() > 1e9 {
            escaped_at = Some(i);
            break;
        }
        let j = map.differential(p);
        let w1 = j.apply(v1);
        let w2 = j.apply(v2);
        let r11 = w1.norm();
        let q1 = w1 * (1.0 / r11);
        let r12 = q1.dot(w2);
        let w2p = w2 - q1 * r12;
        let r22 = w2p.norm();
        if !(r11 > 0.0 && r22 > 0.0 && r11.is_finite() && r22.is_finite()) {
            escaped_at = Some(i);
            break;
        }
        s1 += r11.ln();
        s2 += r22.ln();
        v1 = q1;
        v2 = w2p * (1.0 / r22);
        p = map.eval(p);
        done += 1;
    }
    let denom = done.max(1) as f64;
    let (mut l1, mut l2) = (s1 / denom, s2 / denom);
    if l2 > l1 {
        std::mem::swap(&mut l1, &mut l2);
    }
    LyapunovEstimate { exponents: (l1, l2), n: done, point, escaped_at }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PesinReport {
    /// Ensemble mean of `max(lambda_1, 0)`.
    pub mean: f64,
    pub std_error: f64,
    pub points: usize,
    pub n: usize,
    /// Number of orbits flagged as escaped (still included, partial).
    pub escaped: usize,
}

/// Ensemble estimate of the integral of the positive Lyapunov exponent.
pub fn pesin_entropy(map: &PlaneMap, ensemble: &[Vec2], n: usize) -> PesinReport {
    assert!(!ensemble.is_empty());
    let values: Vec<(f64, bool)> = ensemble
        .par_iter()
        .map(|&p| {
            let est = lyapunov_spectrum(map, p, n);
            (est.exponents.0.max(0.0), est.escaped_at.is_some())
        })
        .collect();
    let k = values.len() as f64;
    let mean = values.iter().map(|v| v.0).sum::<f64>() / k;
    let var = values.iter().map(|v| (v.0 - mean) * (v.0 - mean)).sum::<f64>() / k.max(2.0);
    let escaped = values.iter().filter(|v| v.1).count();
    PesinReport { mean, std_error: (var / k).sqrt(), points: ensemble.len(), n, escaped }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerCheck {
    pub m: usize,
    pub lambda_f: f64,
    pub lambda_fm: f64,
    pub abs_discrepancy: f64,
    pub rel_discrepancy: f64,
}

/// Compare the top exponent of the m-fold composition against m times the
/// top exponent of the map, over the same total orbit length.
pub fn power_property_check(map: &PlaneMap, point: Vec2, n: usize, m: usize) -> PowerCheck {
    assert!(m >= 2 || m == 1);
    let fm = crate::maps::power(map, m);
    let est_fm = lyapunov_spectrum(&fm, point, n);
    let est_f = lyapunov_spectrum(map, point, n * m);
    let lambda_f = est_f.exponents.0;
    let lambda_fm = est_fm.exponents.0;
    let abs = (lambda_fm - m as f64 * lambda_f).abs();
    let scale = (m as f64 * lambda_f).abs().max(1e-12);
    PowerCheck { m, lambda_f, lambda_fm, abs_discrepancy: abs, rel_discrepancy: abs / scale }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{cat_map, identity, standard_map, torus_translation, Domain};
    use crate::report::uniform_ensemble;
    use approx::assert_relative_eq;

    const GOLDEN_ENTROPY: f64 = 0.9624236501192069; // ln((3 + sqrt 5)/2)

    #[test]
    fn identity_itineraries_are_constant() {
        let id = identity(Domain::Torus);
        let part = Partition::unit_grid(3, 3);
        let ens = uniform_ensemble(500, 1, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let (h2, t2) = itinerary_entropy(&id, &part, 2, &ens);
        let (h7, t7) = itinerary_entropy(&id, &part, 7, &ens);
        // Constant itineraries: one string per occupied cell, independent of n.
        assert_eq!(t2.observed(), t7.observed());
        assert_relative_eq!(h2, h7);
        assert!(t2.observed() <= 9);
    }

    #[test]
    fn metric_entropy_uniform_and_singleton() {
        // Uniform itineraries over k strings -> exactly log k.
        let mut counts = HashMap::new();
        for i in 0..8u8 {
            counts.insert(vec![i], 5u64);
        }
        let t = ItineraryTable { n: 0, counts, used_points: 40, dropped_points: 0 };
        assert_relative_eq!(t.metric_entropy(), (8.0f64).ln(), epsilon = 1e-14);
        // Single itinerary -> 0.
        let mut one = HashMap::new();
        one.insert(vec![0u8, 1], 17u64);
        let t1 = ItineraryTable { n: 1, counts: one, used_points: 17, dropped_points: 0 };
        assert_eq!(t1.metric_entropy(), 0.0);
    }

    #[test]
    fn goodwyn_inequality_on_cat_map() {
        let cat = cat_map();
        let part = Partition::unit_grid(2, 2);
        let ens = uniform_ensemble(4000, 2, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let (h_count, table) = itinerary_entropy(&cat, &part, 10, &ens);
        assert!(table.metric_entropy() <= h_count + 1e-12);
    }

    #[test]
    fn itinerary_entropy_invariant_under_relabeling() {
        let cat = cat_map();
        let part = Partition::unit_grid(2, 2);
        let perm = vec![2usize, 0, 3, 1];
        let ens = uniform_ensemble(2000, 3, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let (h1, _) = itinerary_entropy(&cat, &part, 8, &ens);
        let (h2, _) = itinerary_entropy(&cat, &part.relabeled(&perm), 8, &ens);
        assert_relative_eq!(h1, h2, epsilon = 1e-12);
    }

    #[test]
    fn entropy_rate_identity_is_zero() {
        let id = identity(Domain::Torus);
        let part = Partition::unit_grid(4, 4);
        let ens = uniform_ensemble(500, 4, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let rep = entropy_rate(&id, &part, 8, &ens);
        assert_eq!(rep.rate, 0.0);
    }

    #[test]
    fn entropy_rate_rotation_is_tiny() {
        // Irrational rigid rotation: itinerary counts grow polynomially and
        // saturate at the ensemble size, so the fitted rate collapses to ~0.
        let rot = torus_translation(Vec2::new(0.367879441171, 0.141421356237));
        let part = Partition::unit_grid(2, 2);
        let ens = uniform_ensemble(10_000, 5, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let rep = entropy_rate(&rot, &part, 256, &ens);
        assert!(rep.rate.abs() < 1e-3, "rate {}", rep.rate);
    }

    #[test]
    fn cat_map_rate_approaches_entropy() {
        let cat = cat_map();
        let part = Partition::unit_grid(2, 2);
        let ens = uniform_ensemble(300_000, 6, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let rep = entropy_rate(&cat, &part, 8, &ens);
        // Subadditivity: h_n/n approaches the limit from above, so the
        // sequence decreases toward the Lyapunov value while the fitted
        // slope lands on it.
        let ratios: Vec<f64> =
            rep.h_seq.iter().enumerate().map(|(i, h)| h / (i + 1) as f64).collect();
        for w in ratios.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "h_n/n should decrease: {ratios:?}");
        }
        assert!(*ratios.last().unwrap() > GOLDEN_ENTROPY);
        let lyap = lyapunov_spectrum(&cat, Vec2::new(0.123, 0.456), 10_000).exponents.0;
        assert!(
            (rep.rate - lyap).abs() / lyap < 0.1,
            "rate {} vs lyapunov {lyap}",
            rep.rate
        );
    }

    #[test]
    fn lyapunov_cat_map_matches_eigenvalue() {
        let cat = cat_map();
        let est = lyapunov_spectrum(&cat, Vec2::new(0.2357, 0.6180), 10_000);
        assert!((est.exponents.0 - GOLDEN_ENTROPY).abs() < 1e-3);
        assert!((est.exponents.0 + est.exponents.1).abs() < 3e-3);
    }

    #[test]
    fn lyapunov_rotation_is_zero() {
        let rot = torus_translation(Vec2::new(0.31830988618, 0.2));
        let est = lyapunov_spectrum(&rot, Vec2::new(0.1, 0.4), 1000);
        assert!(est.exponents.0.abs() < 1e-6);
        assert!(est.exponents.1.abs() < 1e-6);
    }

    #[test]
    fn lyapunov_parabolic_standard_map() {
        // lambda = 0: powers of [[2,-1],[1,0]] grow linearly, so both
        // exponents tend to zero like log(n)/n.
        let f = standard_map(0.0);
        let est = lyapunov_spectrum(&f, Vec2::new(0.3, 0.7), 30_000);
        assert!(est.exponents.0.abs() < 1e-3, "{:?}", est.exponents);
        assert!(est.exponents.1.abs() < 1e-3);
    }

    #[test]
    fn pesin_cat_and_rotation() {
        let cat = cat_map();
        let ens = uniform_ensemble(100, 7, Vec2::ZERO, Vec2::new(1.0, 1.0));
        let rep = pesin_entropy(&cat, &ens, 2000);
        assert!((rep.mean - GOLDEN_ENTROPY).abs() < 1e-2, "mean {}", rep.mean);
        let rot = torus_translation(Vec2::new(0.123, 0.456));
        let rep0 = pesin_entropy(&rot, &ens, 2000);
        assert!(rep0.mean.abs() < 1e-4);
    }

    #[test]
    fn power_property_cat_exact() {
        let cat = cat_map();
        let chk = power_property_check(&cat, Vec2::new(0.37, 0.59), 2000, 3);
        assert!(chk.rel_discrepancy < 1e-6, "{chk:?}");
    }

    #[test]
    fn power_property_identity() {
        let id = identity(Domain::Torus);
        let chk = power_property_check(&id, Vec2::new(0.3, 0.4), 100, 4);
        assert_eq!(chk.abs_discrepancy, 0.0);
    }

    #[test]
    fn conjugacy_invariance_of_rate() {
        // Conjugating by a rigid translation and translating the partition
        // accordingly leaves the empirical rate unchanged up to noise.
        let cat = cat_map();
        let v = Vec2::new(0.23, 0.71);
        let h = torus_translation(v);
        let hinv = h.inverse_map().unwrap();
        let conj = crate::maps::compose(&[h, cat.clone(), hinv]).unwrap();
        let part = Partition::unit_grid(2, 2);
        let part_t = part.translated(Vec2::new(-0.23, -0.71));
        let ens = uniform_ensemble(100_000, 8, Vec2::ZERO, Vec2::new(1.0, 1.0));
        // Conjugated ensemble so the empirical measure matches.
        let ens_t: Vec<Vec2> = ens
            .iter()
            .map(|&p| crate::geom::wrap_torus(p - v))
            .collect();
        let r1 = entropy_rate(&cat, &part, 9, &ens);
        let r2 = entropy_rate(&conj, &part_t, 9, &ens_t);
        let rel = (r1.rate - r2.rate).abs() / r1.rate.max(1e-12);
        assert!(rel < 0.02, "rates {} vs {}", r1.rate, r2.rate);
    }
}
