//! Hyperbolic machinery: Newton search for periodic points, invariant
//! manifold growing, intersection and coincidence-band detection, and the
//! affine horseshoe oracle model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::{Cell, Partition};
use crate::geom::{Mat2, Vec2};
use crate::maps::{Domain, MapError, PlaneMap};

#[derive(Debug, Error)]
pub enum HyperbolicError {
    #[error("Newton did not converge in {steps} steps (last residual {residual:.3e})")]
    NewtonNoConvergence { steps: usize, residual: f64 },
    #[error("singular Jacobian in Newton step")]
    SingularJacobian,
    #[error("periodic point is {0:?}, not hyperbolic")]
    NotHyperbolic(PointClass),
    #[error("stable branches require an invertible map")]
    MissingInverse(#[from] MapError),
    #[error("empty parameter window")]
    EmptyWindow,
    #[error("branch is not a graph over the window near x = {fold_x}")]
    GraphCondition { fold_x: f64 },
}

/// Linear type of a periodic point, from the eigenvalues of `Df^tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Hyperbolic,
    Elliptic,
    Parabolic,
}

/// A located periodic orbit point with its linear data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub location: Vec2,
    pub period: usize,
    /// (contracting, expanding); product is `det Df^tau` (1 for symplectic).
    /// Entries may be negative for orientation-flipping saddles.
    pub eigen_contracting: f64,
    pub eigen_expanding: f64,
    pub stable_dir: Vec2,
    pub unstable_dir: Vec2,
    pub class: PointClass,
    /// Final Newton residual `|f^tau(x) - x|`.
    pub residual: f64,
}

/// Newton solve of `f^tau(x) = x` from `guess`.
pub fn find_periodic_point(
    map: &PlaneMap,
    guess: Vec2,
    period: usize,
) -> Result<PeriodicPoint, HyperbolicError> {
    assert!(period >= 1);
    let domain = map.domain();
    let mut x = domain.reduce(guess);
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let fx = map.iterate(x, period);
        let g = domain.displacement(x, fx);
        residual = g.norm();
        if residual <= 1e-10 {
            return classify(map, x, period, residual);
        }
        let dg = map.iterate_differential(x, period).sub(Mat2::IDENTITY);
        if dg.det().abs() < 1e-14 {
            return Err(HyperbolicError::SingularJacobian);
        }
        let step = dg.solve(g).ok_or(HyperbolicError::SingularJacobian)?;
        x = domain.reduce(x - step);
        if !x.is_finite() {
            return Err(HyperbolicError::NewtonNoConvergence { steps: 50, residual });
        }
    }
    // One final residual check: quadratic convergence may land exactly on
    // the last allowed iteration.
    let fx = map.iterate(x, period);
    let g = domain.displacement(x, fx);
    if g.norm() <= 1e-10 {
        return classify(map, x, period, g.norm());
    }
    Err(HyperbolicError::NewtonNoConvergence { steps: 50, residual })
}

fn classify(
    map: &PlaneMap,
    x: Vec2,
    period: usize,
    residual: f64,
) -> Result<PeriodicPoint, HyperbolicError> {
    let m = map.iterate_differential(x, period);
    let tr = m.trace().abs();
    let class = if (tr - 2.0).abs() <= 1e-8 {
        PointClass::Parabolic
    } else if tr > 2.0 {
        PointClass::Hyperbolic
    } else {
        PointClass::Elliptic
    };
    let (contracting, expanding, vs, vu) = match m.real_eigenvalues() {
        Some((big, small)) if class == PointClass::Hyperbolic => {
            (small, big, m.eigenvector(small), m.eigenvector(big))
        }
        _ => (1.0, 1.0, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)),
    };
    Ok(PeriodicPoint {
        location: x,
        period,
        eigen_contracting: contracting,
        eigen_expanding: expanding,
        stable_dir: vs,
        unstable_dir: vu,
        class,
        residual,
    })
}

/// Which invariant branch to grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    UnstablePlus,
    UnstableMinus,
    StablePlus,
    StableMinus,
}

impl Branch {
    pub fn is_stable(self) -> bool {
        matches!(self, Branch::StablePlus | Branch::StableMinus)
    }

    fn sign(self) -> f64 {
        match self {
            Branch::UnstablePlus | Branch::StablePlus => 1.0,
            _ => -1.0,
        }
    }
}

/// Re-evaluable parametrization of one branch: `point_at(q)` with global
/// parameter `q = level + t` maps the fundamental segment through `floor(q)`
/// iterates.
pub struct BranchTracer {
    step: PlaneMap,
    domain: Domain,
    seed_a: Vec2,
    seed_b: Vec2,
}

impl BranchTracer {
    pub fn new(
        map: &PlaneMap,
        pp: &PeriodicPoint,
        branch: Branch,
        seed_len: f64,
    ) -> Result<Self, HyperbolicError> {
        if pp.class != PointClass::Hyperbolic {
            return Err(HyperbolicError::NotHyperbolic(pp.class));
        }
        let step = if branch.is_stable() {
            crate::maps::power(&map.inverse_map()?, pp.period)
        } else {
            crate::maps::power(map, pp.period)
        };
        let dir = if branch.is_stable() { pp.stable_dir } else { pp.unstable_dir };
        let seed_a = pp.location + dir * (branch.sign() * seed_len);
        let seed_b = step.eval(seed_a);
        Ok(BranchTracer { step, domain: map.domain(), seed_a, seed_b })
    }

    /// Point at global parameter `q >= 0`.
    pub fn point_at(&self, q: f64) -> Vec2 {
        let level = q.floor().max(0.0) as usize;
        let t = q - q.floor();
        let seed = self.seed_a + self.domain.displacement(self.seed_a, self.seed_b) * t;
        self.step.iterate(seed, level)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn step_map(&self) -> &PlaneMap {
        &self.step
    }
}

/// Ordered polyline approximation of one stable/unstable branch.
///
/// Vertices are stored as `(parameter, lifted point)`; on the torus the lift
/// keeps consecutive vertices in the same fundamental image so segments can
/// be measured euclideanly. `cuts` marks vertex indices after which the
/// curve is discontinuous (the underlying map had a seam there); distance
/// queries never bridge a cut.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub branch: Branch,
    vertices: Vec<(f64, Vec2)>,
    cuts: Vec<usize>,
    pub arclength: f64,
    pub flagged_partial: bool,
}

impl ManifoldCurve {
    pub fn vertices(&self) -> &[(f64, Vec2)] {
        &self.vertices
    }

    pub fn points(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.vertices.iter().map(|v| v.1)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn is_cut(&self, idx: usize) -> bool {
        self.cuts.binary_search(&idx).is_ok()
    }

    /// Iterate over euclidean segments (cut positions excluded).
    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.vertices
            .windows(2)
            .enumerate()
            .filter(move |(i, _)| !self.is_cut(*i))
            .map(|(_, w)| (w[0].1, w[1].1))
    }

    /// Cumulative arclength at each vertex (cut gaps contribute zero).
    pub fn cumulative_arclength(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.vertices.len());
        out.push(0.0);
        for i in 1..self.vertices.len() {
            if !self.is_cut(i - 1) {
                acc += (self.vertices[i].1 - self.vertices[i - 1].1).norm();
            }
            out.push(acc);
        }
        out
    }

    /// Distance from `p` to the polyline (domain-aware for torus curves).
    pub fn distance_to(&self, p: Vec2, domain: Domain) -> f64 {
        let mut best = f64::INFINITY;
        let translates: &[Vec2] = match domain {
            Domain::Torus => &TORUS_TRANSLATES,
            _ => &[Vec2 { x: 0.0, y: 0.0 }],
        };
        for &t in translates {
            let q = p + t;
            for (a, b) in self.segments() {
                best = best.min(point_segment_distance(q, a, b));
            }
            for v in self.points() {
                best = best.min((q - v).norm());
            }
        }
        best
    }
}

const TORUS_TRANSLATES: [Vec2; 9] = [
    Vec2 { x: 0.0, y: 0.0 },
    Vec2 { x: 1.0, y: 0.0 },
    Vec2 { x: -1.0, y: 0.0 },
    Vec2 { x: 0.0, y: 1.0 },
    Vec2 { x: 0.0, y: -1.0 },
    Vec2 { x: 1.0, y: 1.0 },
    Vec2 { x: 1.0, y: -1.0 },
    Vec2 { x: -1.0, y: 1.0 },
    Vec2 { x: -1.0, y: -1.0 },
];

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let denom = ab.norm_sq();
    if denom == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub const MAX_CURVE_VERTICES: usize = 10_000_000;

/// Options for manifold growing.
#[derive(Debug, Clone, Copy)]
pub struct GrowOptions {
    /// Maximum euclidean gap between consecutive polyline vertices.
    pub max_step: f64,
    /// Seed offset along the eigendirection.
    pub seed_len: f64,
    /// Parameter gap below which an unclosable vertex gap is treated as a
    /// genuine discontinuity of the underlying model and recorded as a cut.
    pub min_param: f64,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions { max_step: 1e-3, seed_len: 1e-4, min_param: 1e-12 }
    }
}

/// Grow one branch to the requested arclength budget.
pub fn grow_manifold(
    map: &PlaneMap,
    pp: &PeriodicPoint,
    branch: Branch,
    arclength_budget: f64,
    opts: GrowOptions,
) -> Result<ManifoldCurve, HyperbolicError> {
    let tracer = BranchTracer::new(map, pp, branch, opts.seed_len)?;
    let domain = map.domain();

    let mut vertices: Vec<(f64, Vec2)> = vec![(0.0, pp.location)];
    let mut cuts: Vec<usize> = Vec::new();
    let mut arclength = 0.0f64;
    let mut flagged = false;

    // Lift helper: place `raw` in the image nearest to the previous vertex.
    let lift = |prev: Vec2, raw: Vec2| -> Vec2 {
        match domain {
            Domain::Torus => {
                prev + crate::geom::torus_displacement(crate::geom::wrap_torus(prev), raw)
            }
            _ => raw,
        }
    };

    let mut level: usize = 0;
    'outer: loop {
        let q0 = level as f64;
        let q1 = q0 + 1.0 - 1e-15;
        // Interval stack, rightmost pushed first so vertices emit in order.
        let mut pending: Vec<(f64, Vec2, f64, Vec2)> =
            vec![(q0, tracer.point_at(q0), q1, tracer.point_at(q1))];
        while let Some((qa, pa, qb, pb)) = pending.pop() {
            let step_gap = domain.distance(pa, pb);
            let mut cut_here = false;
            if step_gap > opts.max_step {
                if qb - qa > opts.min_param {
                    let qm = 0.5 * (qa + qb);
                    let pm = tracer.point_at(qm);
                    pending.push((qm, pm, qb, pb));
                    pending.push((qa, pa, qm, pm));
                    continue;
                }
                // Unclosable jump: genuine seam of a piecewise model.
                cut_here = true;
            }
            let lifted_prev = vertices.last().unwrap().1;
            let lifted;
            if cut_here {
                cuts.push(vertices.len() - 1);
                lifted = pb;
            } else {
                lifted = lift(lifted_prev, pb);
                arclength += (lifted - lifted_prev).norm();
            }
            vertices.push((qb, lifted));
            if vertices.len() >= MAX_CURVE_VERTICES {
                flagged = true;
                break 'outer;
            }
            if arclength >= arclength_budget {
                break 'outer;
            }
        }
        level += 1;
        if level > 400 {
            flagged = true;
            break;
        }
    }

    Ok(ManifoldCurve { branch, vertices, cuts, arclength, flagged_partial: flagged })
}

/// Deviation of the curve from invariance: max over vertices (whose image
/// stays within the grown part) of the distance from the mapped vertex to
/// the polyline.
pub fn invariance_deviation(map: &PlaneMap, pp: &PeriodicPoint, curve: &ManifoldCurve) -> f64 {
    let domain = map.domain();
    let stable = curve.branch.is_stable();
    let mut worst = 0.0f64;
    let n = curve.vertices().len();
    for &(q, v) in curve.vertices().iter().take(n.saturating_sub(1)) {
        // Skip the last level: its image exceeds the grown curve.
        if q + 1.0 > curve.vertices().last().unwrap().0 {
            continue;
        }
        let image = if stable {
            let mut p = crate::geom::wrap_torus_if(domain, v);
            for _ in 0..pp.period {
                p = map.inverse_eval(p).expect("stable branch requires inverse");
            }
            p
        } else {
            map.iterate(crate::geom::wrap_torus_if(domain, v), pp.period)
        };
        worst = worst.max(curve.distance_to(image, domain));
    }
    worst
}

// ---------------------------------------------------------------------------
// Intersections and coincidence bands
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Intersection {
    pub point: Vec2,
    /// Crossing angle in radians, in [0, pi/2].
    pub angle: f64,
    pub transversal: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub points: Vec<Intersection>,
    /// Set when stretches of the two curves coincide (overlap within
    /// tolerance at near-zero angle) rather than crossing discretely.
    pub coincident: bool,
}

/// Crossing angle threshold separating numerical tangency from transversal
/// intersection.
pub const ANGLE_TOL: f64 = 1e-4;

/// Segment sweep over both polylines.
pub fn detect_intersections(c1: &ManifoldCurve, c2: &ManifoldCurve, tol: f64) -> IntersectionReport {
    let mut points: Vec<Intersection> = Vec::new();
    let mut coincident = false;
    let segs2: Vec<(Vec2, Vec2)> = c2.segments().collect();
    for (a1, b1) in c1.segments() {
        let d1 = b1 - a1;
        let (lo1, hi1) = seg_bbox(a1, b1, tol);
        for &(a2, b2) in &segs2 {
            let (lo2, hi2) = seg_bbox(a2, b2, tol);
            if lo1.x > hi2.x || lo2.x > hi1.x || lo1.y > hi2.y || lo2.y > hi1.y {
                continue;
            }
            let d2 = b2 - a2;
            let denom = d1.cross(d2);
            let len1 = d1.norm();
            let len2 = d2.norm();
            if len1 == 0.0 || len2 == 0.0 {
                continue;
            }
            let sin_angle = (denom / (len1 * len2)).abs();
            if sin_angle <= ANGLE_TOL {
                // Near-parallel: coincidence when the segments overlap
                // within tol.
                let d_a2 = point_segment_distance(a2, a1, b1);
                let d_b2 = point_segment_distance(b2, a1, b1);
                if d_a2 <= tol && d_b2 <= tol {
                    coincident = true;
                }
                continue;
            }
            let t = (a2 - a1).cross(d2) / denom;
            let u = (a2 - a1).cross(d1) / denom;
            if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
                let p = a1 + d1 * t;
                let angle = sin_angle.asin();
                // Deduplicate near-identical hits (shared endpoints).
                if points.iter().all(|q| (q.point - p).norm() > tol.max(1e-12)) {
                    points.push(Intersection { point: p, angle, transversal: angle > ANGLE_TOL });
                }
            }
        }
    }
    IntersectionReport { points, coincident }
}

fn seg_bbox(a: Vec2, b: Vec2, pad: f64) -> (Vec2, Vec2) {
    (
        Vec2::new(a.x.min(b.x) - pad, a.y.min(b.y) - pad),
        Vec2::new(a.x.max(b.x) + pad, a.y.max(b.y) + pad),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandReport {
    pub sup_distance: f64,
    pub is_band: bool,
    pub band_tol: f64,
    pub window_vertices: usize,
}

pub const BAND_TOL: f64 = 1e-8;

/// One-sided sup distance from the window of `c1` (an arclength interval)
/// to `c2`.
pub fn band_coincidence(
    c1: &ManifoldCurve,
    c2: &ManifoldCurve,
    window: (f64, f64),
    domain: Domain,
) -> Result<BandReport, HyperbolicError> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(HyperbolicError::EmptyWindow);
    }
    let cum = c1.cumulative_arclength();
    let mut sup = 0.0f64;
    let mut count = 0;
    for (i, &(_, v)) in c1.vertices().iter().enumerate() {
        if cum[i] >= lo && cum[i] <= hi {
            sup = sup.max(c2.distance_to(crate::geom::wrap_torus_if(domain, v), domain));
            count += 1;
        }
    }
    if count == 0 {
        return Err(HyperbolicError::EmptyWindow);
    }
    Ok(BandReport { sup_distance: sup, is_band: sup < BAND_TOL, band_tol: BAND_TOL, window_vertices: count })
}

// ---------------------------------------------------------------------------
// The affine horseshoe oracle model
// ---------------------------------------------------------------------------

/// The standard affine horseshoe on the unit square: contraction 1/3,
/// expansion 3, orientation-reversing fold, together with its invariant-set
/// two-cell partition. Admissible itineraries form the full 2-shift.
pub struct HorseshoeModel {
    pub map: PlaneMap,
    pub partition: Partition,
}

pub fn linear_horseshoe_model() -> HorseshoeModel {
    let map = PlaneMap::new(
        Domain::Plane,
        "horseshoe",
        |p| {
            if p.y <= 1.0 / 3.0 {
                Vec2::new(p.x / 3.0, 3.0 * p.y)
            } else if p.y >= 2.0 / 3.0 {
                Vec2::new(1.0 - p.x / 3.0, 3.0 - 3.0 * p.y)
            } else {
                // The fold arch: pushed far right, never returns to the
                // labelled cells, volume preserving.
                Vec2::new(p.x / 3.0 + 10.0, 3.0 * p.y - 1.0)
            }
        },
        |p| {
            if p.y <= 1.0 / 3.0 {
                Mat2::diagonal(1.0 / 3.0, 3.0)
            } else if p.y >= 2.0 / 3.0 {
                Mat2::diagonal(-1.0 / 3.0, -3.0)
            } else {
                Mat2::diagonal(1.0 / 3.0, 3.0)
            }
        },
    )
    .with_inverse(|p| {
        if p.x >= 5.0 {
            Vec2::new(3.0 * (p.x - 10.0), (p.y + 1.0) / 3.0)
        } else if p.x >= 0.5 {
            Vec2::new(3.0 * (1.0 - p.x), 1.0 - p.y / 3.0)
        } else {
            Vec2::new(3.0 * p.x, p.y / 3.0)
        }
    });
    let partition = Partition::new(vec![
        Cell { lo: Vec2::new(0.0, 0.0), hi: Vec2::new(1.0 + 1e-12, 1.0 / 3.0 + 1e-12) },
        Cell { lo: Vec2::new(0.0, 2.0 / 3.0), hi: Vec2::new(1.0 + 1e-12, 1.0 + 1e-12) },
    ]);
    HorseshoeModel { map, partition }
}

impl HorseshoeModel {
    /// One point per depth-`n` cylinder of the invariant-set construction:
    /// for every label string of length n+1 the returned point realizes
    /// exactly that itinerary.
    pub fn cylinder_ensemble(&self, n: usize) -> Vec<Vec2> {
        let strings = 1usize << (n + 1);
        let mut out = Vec::with_capacity(strings);
        for code in 0..strings {
            // Bit i of `code` = label at time i (0 = bottom band, 1 = top).
            let mut lo;
            let mut hi;
            // Start from the final symbol and pull back.
            if (code >> n) & 1 == 0 {
                lo = 0.0;
                hi = 1.0 / 3.0;
            } else {
                lo = 2.0 / 3.0;
                hi = 1.0;
            }
            for i in (0..n).rev() {
                if (code >> i) & 1 == 0 {
                    // Branch A: y -> 3y, preimage of [lo, hi] is [lo/3, hi/3].
                    lo /= 3.0;
                    hi /= 3.0;
                } else {
                    // Branch B: y -> 3 - 3y, preimage is [(3-hi)/3, (3-lo)/3].
                    let nlo = (3.0 - hi) / 3.0;
                    let nhi = (3.0 - lo) / 3.0;
                    lo = nlo;
                    hi = nhi;
                }
            }
            out.push(Vec2::new(0.5, 0.5 * (lo + hi)));
        }
        out
    }
}
