//! Composable area-preserving maps of the plane and torus, the built-in map
//! zoo, and the degree-2 quotient of the torus to the sphere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::func::{PlateauProfile, ScalarFn};
use crate::geom::{torus_displacement, wrap_torus, Mat2, Vec2};
use crate::report::SeededRng;
use crate::symplectic::SaddleBump;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot compose maps on different domains: {0:?} vs {1:?}")]
    DomainMismatch(Domain, Domain),
    #[error("composition of zero maps")]
    EmptyComposition,
    #[error("map has no inverse")]
    MissingInverse,
    #[error(
        "map is not odd-symmetric: |f(-p) + f(p)| = {deviation:.3e} > {tol:.3e} at p = ({x}, {y})"
    )]
    SymmetryViolation { deviation: f64, tol: f64, x: f64, y: f64 },
    #[error("slowdown discs of radius {radius} overlap (max radius {max_radius})")]
    OverlappingDiscs { radius: f64, max_radius: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Domain a map acts on; drives coordinate reduction and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Plane,
    Torus,
    Disc,
}

impl Domain {
    /// Reduce a point to the domain's fundamental coordinates.
    pub fn reduce(self, p: Vec2) -> Vec2 {
        match self {
            Domain::Torus => wrap_torus(p),
            _ => p,
        }
    }

    /// Signed displacement `b - a` respecting the domain metric.
    pub fn displacement(self, a: Vec2, b: Vec2) -> Vec2 {
        match self {
            Domain::Torus => torus_displacement(a, b),
            _ => b - a,
        }
    }

    pub fn distance(self, a: Vec2, b: Vec2) -> f64 {
        self.displacement(a, b).norm()
    }

    /// Default box for seeded sampling.
    pub fn default_region(self) -> (Vec2, Vec2) {
        match self {
            Domain::Torus => (Vec2::ZERO, Vec2::new(1.0, 1.0)),
            Domain::Disc => (Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)),
            Domain::Plane => (Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)),
        }
    }
}

type PointFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
type JacFn = Arc<dyn Fn(Vec2) -> Mat2 + Send + Sync>;

/// A smooth map of the plane/torus with evaluation, differential, and an
/// optional inverse. Immutable after construction; evaluation is pure.
#[derive(Clone)]
pub struct PlaneMap {
    domain: Domain,
    name: String,
    fwd: PointFn,
    jac: JacFn,
    bwd: Option<PointFn>,
}

impl std::fmt::Debug for PlaneMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PlaneMap({}, {:?})", self.name, self.domain)
    }
}

impl PlaneMap {
    pub fn new(
        domain: Domain,
        name: impl Into<String>,
        fwd: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static,
        jac: impl Fn(Vec2) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        PlaneMap { domain, name: name.into(), fwd: Arc::new(fwd), jac: Arc::new(jac), bwd: None }
    }

    pub fn with_inverse(mut self, bwd: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static) -> Self {
        self.bwd = Some(Arc::new(bwd));
        self
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_inverse(&self) -> bool {
        self.bwd.is_some()
    }

    pub fn eval(&self, p: Vec2) -> Vec2 {
        let q = (self.fwd)(self.domain.reduce(p));
        self.domain.reduce(q)
    }

    pub fn differential(&self, p: Vec2) -> Mat2 {
        (self.jac)(self.domain.reduce(p))
    }

    pub fn inverse_eval(&self, p: Vec2) -> Result<Vec2, MapError> {
        let bwd = self.bwd.as_ref().ok_or(MapError::MissingInverse)?;
        let q = bwd(self.domain.reduce(p));
        Ok(self.domain.reduce(q))
    }

    /// The inverse as a standalone map (chain-rule differential).
    pub fn inverse_map(&self) -> Result<PlaneMap, MapError> {
        let bwd = self.bwd.clone().ok_or(MapError::MissingInverse)?;
        let fwd = self.fwd.clone();
        let jac = self.jac.clone();
        let domain = self.domain;
        Ok(PlaneMap {
            domain,
            name: format!("{}^-1", self.name),
            fwd: bwd.clone(),
            jac: Arc::new(move |p| {
                let pre = domain.reduce(bwd(p));
                jac(pre).inverse().expect("differential of an invertible map is invertible")
            }),
            bwd: Some(fwd),
        })
    }

    pub fn iterate(&self, p: Vec2, n: usize) -> Vec2 {
        let mut q = p;
        for _ in 0..n {
            q = self.eval(q);
        }
        q
    }

    /// Differential of the n-th iterate at p (cocycle product).
    pub fn iterate_differential(&self, p: Vec2, n: usize) -> Mat2 {
        let mut q = p;
        let mut m = Mat2::IDENTITY;
        for _ in 0..n {
            m = self.differential(q).mul(m);
            q = self.eval(q);
        }
        m
    }
}

/// Right-to-left composition: `compose([f, g, h])` applies `f` first, i.e.
/// the composite is `h . g . f`.
pub fn compose(maps: &[PlaneMap]) -> Result<PlaneMap, MapError> {
    if maps.is_empty() {
        return Err(MapError::EmptyComposition);
    }
    let domain = maps[0].domain();
    for m in maps {
        if m.domain() != domain {
            return Err(MapError::DomainMismatch(domain, m.domain()));
        }
    }
    let chain: Vec<PlaneMap> = maps.to_vec();
    let chain_jac = chain.clone();
    let name = chain.iter().map(|m| m.name()).collect::<Vec<_>>().join(";");
    let invertible = chain.iter().all(|m| m.has_inverse());
    let mut composite = PlaneMap::new(
        domain,
        name,
        move |p| chain.iter().fold(p, |q, m| m.eval(q)),
        move |p| {
            let mut q = p;
            let mut jac = Mat2::IDENTITY;
            for m in &chain_jac {
                jac = m.differential(q).mul(jac);
                q = m.eval(q);
            }
            jac
        },
    );
    if invertible {
        let chain_inv: Vec<PlaneMap> = maps.to_vec();
        composite = composite.with_inverse(move |p| {
            chain_inv
                .iter()
                .rev()
                .fold(p, |q, m| m.inverse_eval(q).expect("verified invertible"))
        });
    }
    Ok(composite)
}

/// n-fold self-composition.
pub fn power(map: &PlaneMap, n: usize) -> PlaneMap {
    let maps: Vec<PlaneMap> = std::iter::repeat(map.clone()).take(n).collect();
    compose(&maps).expect("same-domain composition")
}

// ---------------------------------------------------------------------------
// Built-in maps
// ---------------------------------------------------------------------------

pub fn identity(domain: Domain) -> PlaneMap {
    PlaneMap::new(domain, "id", |p| p, |_| Mat2::IDENTITY).with_inverse(|p| p)
}

/// Linear map of the given domain (matrix must be invertible).
pub fn linear(domain: Domain, m: Mat2, name: &str) -> PlaneMap {
    let inv = m.inverse().expect("linear map must be invertible");
    PlaneMap::new(domain, name, move |p| m.apply(p), move |_| m).with_inverse(move |p| inv.apply(p))
}

/// Henon-type map `H_psi(x, y) = (y, -x + psi(y))`.
pub fn henon_map(psi: ScalarFn) -> PlaneMap {
    let psi_j = psi.clone();
    let psi_inv = psi.clone();
    PlaneMap::new(
        Domain::Plane,
        "henon",
        move |p| Vec2::new(p.y, -p.x + psi.eval(p.y)),
        move |p| Mat2::new(0.0, 1.0, -1.0, psi_j.deriv(p.y)),
    )
    .with_inverse(move |p| Vec2::new(-p.y + psi_inv.eval(p.x), p.x))
}

/// Vertical shear `S_psi(x, y) = (x, y + psi(x))`; inverse is `S_{-psi}`.
pub fn vertical_shear(psi: ScalarFn) -> PlaneMap {
    vertical_shear_on(Domain::Plane, psi)
}

pub fn vertical_shear_on(domain: Domain, psi: ScalarFn) -> PlaneMap {
    let psi_j = psi.clone();
    let psi_inv = psi.clone();
    PlaneMap::new(
        domain,
        "vshear",
        move |p| Vec2::new(p.x, p.y + psi.eval(p.x)),
        move |p| Mat2::new(1.0, 0.0, psi_j.deriv(p.x), 1.0),
    )
    .with_inverse(move |p| Vec2::new(p.x, p.y - psi_inv.eval(p.x)))
}

/// The standard family on the torus: `f(x, y) = (2x - y + lambda sin(2 pi x), x)`.
pub fn standard_map(lambda: f64) -> PlaneMap {
    use std::f64::consts::PI;
    PlaneMap::new(
        Domain::Torus,
        format!("standard({lambda})"),
        move |p| Vec2::new(2.0 * p.x - p.y + lambda * (2.0 * PI * p.x).sin(), p.x),
        move |p| Mat2::new(2.0 + 2.0 * PI * lambda * (2.0 * PI * p.x).cos(), -1.0, 1.0, 0.0),
    )
    .with_inverse(move |p| Vec2::new(p.y, 2.0 * p.y - p.x + lambda * (2.0 * PI * p.y).sin()))
}

pub const CAT_MATRIX: Mat2 = Mat2 { a: 2.0, b: 1.0, c: 1.0, d: 1.0 };

/// The hyperbolic torus automorphism `(x, y) -> (2x + y, x + y) mod 1`.
pub fn cat_map() -> PlaneMap {
    linear(Domain::Torus, CAT_MATRIX, "cat")
}

/// Rigid translation of the torus (an isometry; zero entropy).
pub fn torus_translation(v: Vec2) -> PlaneMap {
    PlaneMap::new(
        Domain::Torus,
        format!("translation({}, {})", v.x, v.y),
        move |p| p + v,
        |_| Mat2::IDENTITY,
    )
    .with_inverse(move |p| p - v)
}

/// Fixed points of `-Id` on the torus, also the ramification points of the
/// quotient to the sphere.
pub const HALF_PERIOD_POINTS: [Vec2; 4] = [
    Vec2 { x: 0.0, y: 0.0 },
    Vec2 { x: 0.5, y: 0.0 },
    Vec2 { x: 0.0, y: 0.5 },
    Vec2 { x: 0.5, y: 0.5 },
];

/// Cat map slowed down near the four fixed points of `-Id`.
///
/// `F = cat . B` where B is an exact-symplectic saddle bump (generating
/// function patch) at each of the four points, acting along the cat map's
/// eigendirections with total multiplier `1/Lambda`. On each bump plateau
/// `DF = Id`, outside the discs `F` evaluates the cat formula bit-exactly,
/// and `F(-p) = -F(p)` holds identically because the bumps are odd.
pub fn slowed_cat_map(slowdown_radius: f64, profile_exponent: u32) -> Result<PlaneMap, MapError> {
    if profile_exponent < 2 {
        return Err(MapError::InvalidParameter("profile_exponent must be >= 2".into()));
    }
    // Disc centers are 0.5 apart on the torus; keep discs strictly disjoint.
    let max_radius = 0.24;
    if !(slowdown_radius > 0.0 && slowdown_radius <= max_radius) {
        return Err(MapError::OverlappingDiscs { radius: slowdown_radius, max_radius });
    }
    let lambda_big = (3.0 + 5.0_f64.sqrt()) / 2.0;
    let (l1, _) = CAT_MATRIX.real_eigenvalues().expect("cat matrix is hyperbolic");
    let v_u = CAT_MATRIX.eigenvector(l1);
    let v_s = Vec2::new(-v_u.y, v_u.x); // orthogonal complement = stable direction
    let frame = Mat2::from_columns(v_u, v_s);
    let r2 = slowdown_radius * slowdown_radius;
    let chi = PlateauProfile::new(0.25 * r2, r2, profile_exponent);
    let bumps: Vec<SaddleBump> = HALF_PERIOD_POINTS
        .iter()
        .map(|&c| SaddleBump::new(c, frame, 1.0 / lambda_big, 12, chi))
        .collect();

    let apply_bumps = |bumps: &[SaddleBump], p: Vec2| -> Vec2 {
        for b in bumps {
            let d = torus_displacement(b.center(), p);
            if d.norm_sq() < b.support_radius_sq() {
                return wrap_torus(b.center() + b.eval_offset(d));
            }
        }
        p
    };

    let bumps_f = bumps.clone();
    let bumps_j = bumps.clone();
    let bumps_i = bumps;
    let cat_inv = CAT_MATRIX.inverse().unwrap();
    Ok(PlaneMap::new(
        Domain::Torus,
        format!("slowed_cat(r={slowdown_radius}, m={profile_exponent})"),
        move |p| CAT_MATRIX.apply(apply_bumps(&bumps_f, p)),
        move |p| {
            for b in &bumps_j {
                let d = torus_displacement(b.center(), p);
                if d.norm_sq() < b.support_radius_sq() {
                    return CAT_MATRIX.mul(b.diff_offset(d));
                }
            }
            CAT_MATRIX
        },
        )
        .with_inverse(move |p| {
            let q = wrap_torus(cat_inv.apply(p));
            for b in &bumps_i {
                let d = torus_displacement(b.center(), q);
                if d.norm_sq() < b.support_radius_sq() {
                    return wrap_torus(b.center() + b.inverse_offset(d));
                }
            }
            q
        }))
}

// ---------------------------------------------------------------------------
// Verification helpers
// ---------------------------------------------------------------------------

/// Report from seeded determinant sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaReport {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_abs_deviation: f64,
    pub worst_point: Vec2,
    pub pass: bool,
}

/// Sample `|det Df - 1|` at seeded uniform points of the region.
pub fn check_area_preservation(
    map: &PlaneMap,
    samples: usize,
    tol: f64,
    seed: u64,
    region: Option<(Vec2, Vec2)>,
) -> AreaReport {
    assert!(samples >= 1);
    let (lo, hi) = region.unwrap_or_else(|| map.domain().default_region());
    let mut rng = SeededRng::new(seed);
    let mut max_dev = 0.0f64;
    let mut worst = lo;
    for _ in 0..samples {
        let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        let dev = (map.differential(p).det() - 1.0).abs();
        if dev > max_dev {
            max_dev = dev;
            worst = p;
        }
    }
    AreaReport { samples, seed, tol, max_abs_deviation: max_dev, worst_point: worst, pass: max_dev <= tol }
}

/// Max deviation between the analytic differential and central finite
/// differences of `eval` over the given points.
pub fn differential_fd_deviation(map: &PlaneMap, points: &[Vec2], h: f64) -> f64 {
    let mut worst = 0.0f64;
    for &p in points {
        let d = map.domain();
        let fx1 = map.eval(Vec2::new(p.x + h, p.y));
        let fx0 = map.eval(Vec2::new(p.x - h, p.y));
        let fy1 = map.eval(Vec2::new(p.x, p.y + h));
        let fy0 = map.eval(Vec2::new(p.x, p.y - h));
        let cx = d.displacement(fx0, fx1) * (1.0 / (2.0 * h));
        let cy = d.displacement(fy0, fy1) * (1.0 / (2.0 * h));
        let fd = Mat2::from_columns(cx, cy);
        worst = worst.max(map.differential(p).sub(fd).max_abs());
    }
    worst
}

/// Sampled check that `evaluate(inverse(p)) = p`.
pub fn inverse_roundtrip_deviation(map: &PlaneMap, points: &[Vec2]) -> Result<f64, MapError> {
    let mut worst = 0.0f64;
    for &p in points {
        let q = map.inverse_eval(p)?;
        worst = worst.max(map.domain().distance(map.eval(q), p));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Quotient to the sphere
// ---------------------------------------------------------------------------

/// A point of the quotient sphere: the equivalence class `{p, -p}` of torus
/// points under the involution `-Id`, stored as a canonical representative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    rep: Vec2,
}

impl SpherePoint {
    pub fn representative(self) -> Vec2 {
        self.rep
    }
}

/// Canonicalize: the lexicographically smaller of `p mod 1` and `-p mod 1`.
pub fn quotient_to_sphere(p: Vec2) -> SpherePoint {
    let a = wrap_torus(p);
    let b = wrap_torus(-a);
    let rep = if (a.x, a.y) <= (b.x, b.y) { a } else { b };
    SpherePoint { rep }
}

/// Distance on the quotient: nearest-image distance to either preimage.
pub fn sphere_distance(a: SpherePoint, b: SpherePoint) -> f64 {
    let d1 = crate::geom::torus_distance(a.rep, b.rep);
    let d2 = crate::geom::torus_distance(a.rep, wrap_torus(-b.rep));
    d1.min(d2)
}

/// A torus map pushed to the sphere quotient.
pub struct SphereMap {
    map: PlaneMap,
}

impl SphereMap {
    pub fn eval(&self, p: SpherePoint) -> SpherePoint {
        quotient_to_sphere(self.map.eval(p.rep))
    }

    pub fn torus_map(&self) -> &PlaneMap {
        &self.map
    }
}

/// Push a torus map to the sphere. The map must be odd (`F(-p) = -F(p)`)
/// within `tol`, checked on seeded samples; the worst violating sample is
/// reported otherwise.
pub fn push_map_to_sphere(
    map: &PlaneMap,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<SphereMap, MapError> {
    assert_eq!(map.domain(), Domain::Torus, "only torus maps can be pushed to the sphere");
    let mut rng = SeededRng::new(seed);
    let mut worst_dev = 0.0f64;
    let mut worst = Vec2::ZERO;
    for _ in 0..samples {
        let p = Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let a = map.eval(Vec2::new(-p.x, -p.y));
        let b = map.eval(p);
        // F(-p) should be -F(p) on the torus.
        let dev = crate::geom::torus_distance(a, wrap_torus(-b));
        if dev > worst_dev {
            worst_dev = dev;
            worst = p;
        }
    }
    if worst_dev > tol {
        return Err(MapError::SymmetryViolation { deviation: worst_dev, tol, x: worst.x, y: worst.y });
    }
    Ok(SphereMap { map: map.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_points(n: usize, seed: u64, lo: Vec2, hi: Vec2) -> Vec<Vec2> {
        let mut rng = SeededRng::new(seed);
        (0..n)
            .map(|_| Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y)))
            .collect()
    }

    #[test]
    fn compose_identity_is_identity() {
        let id = identity(Domain::Plane);
        let c = compose(&[id.clone()]).unwrap();
        let p = Vec2::new(0.3, -0.7);
        assert_eq!(c.eval(p), p);
    }

    #[test]
    fn compose_henon_with_inverse_is_identity() {
        let h = henon_map(ScalarFn::poly(vec![0.1, -0.3, 0.0, 0.2]));
        let hinv = h.inverse_map().unwrap();
        let c = compose(&[h, hinv]).unwrap();
        for p in sample_points(10_000, 7, Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)) {
            let q = c.eval(p);
            assert!((q - p).norm() <= 1e-12, "{p:?} -> {q:?}");
        }
    }

    #[test]
    fn compose_cat_squared_det() {
        let c = compose(&[cat_map(), cat_map()]).unwrap();
        // By hand: [[2,1],[1,1]]^2 = [[5,3],[3,2]], det 10 - 9 = 1 exactly.
        let d = c.differential(Vec2::new(0.2, 0.4));
        assert_eq!(d, Mat2::new(5.0, 3.0, 3.0, 2.0));
        assert_eq!(d.det(), 1.0);
    }

    #[test]
    fn compose_rejects_domain_mismatch() {
        let err = compose(&[cat_map(), identity(Domain::Plane)]).unwrap_err();
        assert!(matches!(err, MapError::DomainMismatch(_, _)));
    }

    #[test]
    fn compose_is_associative_on_samples() {
        let f = henon_map(ScalarFn::sine(0.5, 1.0, 0.0));
        let g = vertical_shear(ScalarFn::poly(vec![0.0, 0.2]));
        let h = henon_map(ScalarFn::poly(vec![0.3]));
        let left = compose(&[compose(&[f.clone(), g.clone()]).unwrap(), h.clone()]).unwrap();
        let right = compose(&[f, g, h]).unwrap();
        for p in sample_points(500, 3, Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)) {
            assert!((left.eval(p) - right.eval(p)).norm() <= 1e-12);
        }
    }

    #[test]
    fn henon_examples() {
        // psi = 0: quarter turn.
        let h0 = henon_map(ScalarFn::zero());
        assert_eq!(h0.eval(Vec2::new(1.0, 2.0)), Vec2::new(2.0, -1.0));
        // psi(y) = y.
        let h = henon_map(ScalarFn::poly(vec![0.0, 1.0]));
        assert_eq!(h.eval(Vec2::new(0.0, 1.0)), Vec2::new(1.0, 1.0));
        // det DH = 1 with psi = sin at random points.
        let hs = henon_map(ScalarFn::sine(1.0, 1.0, 0.0));
        for p in sample_points(1000, 11, Vec2::new(-3.0, -3.0), Vec2::new(3.0, 3.0)) {
            assert_relative_eq!(hs.differential(p).det(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn shear_examples() {
        let s = vertical_shear(ScalarFn::sine(1.0, 1.0, 0.0));
        let sinv = s.inverse_map().unwrap();
        let c = compose(&[s.clone(), sinv]).unwrap();
        for p in sample_points(1000, 5, Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)) {
            assert!((c.eval(p) - p).norm() <= 1e-14);
        }
        let s2 = vertical_shear(ScalarFn::poly(vec![0.0, 0.0, 1.0])); // psi(x) = x^2
        assert_eq!(s2.eval(Vec2::new(2.0, 0.0)), Vec2::new(2.0, 4.0));
    }

    #[test]
    fn henon_shear_factorization() {
        // S_psi = H_psi . H_0^{-1} pointwise.
        let psi = ScalarFn::trig_poly(2.0, vec![0.0, 0.3, -0.1], vec![0.0, 0.2, 0.05]);
        let lhs = vertical_shear(psi.clone());
        let rhs = compose(&[
            henon_map(ScalarFn::zero()).inverse_map().unwrap(),
            henon_map(psi),
        ])
        .unwrap();
        for p in sample_points(10_000, 13, Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0)) {
            assert!((lhs.eval(p) - rhs.eval(p)).norm() <= 1e-12);
        }
    }

    #[test]
    fn standard_map_basics() {
        // lambda = 0: linear parabolic map.
        let f0 = standard_map(0.0);
        assert_eq!(f0.differential(Vec2::new(0.3, 0.9)), Mat2::new(2.0, -1.0, 1.0, 0.0));
        // Origin fixed for all lambda.
        for &l in &[0.0, 0.7, 1.5, 3.0] {
            let f = standard_map(l);
            assert_eq!(f.eval(Vec2::ZERO), Vec2::ZERO);
        }
        // Area preservation.
        let f = standard_map(1.5);
        let rep = check_area_preservation(&f, 1000, 1e-12, 17, None);
        assert!(rep.pass, "max dev {}", rep.max_abs_deviation);
        // Inverse roundtrip.
        let pts = sample_points(1000, 19, Vec2::ZERO, Vec2::new(1.0, 1.0));
        assert!(inverse_roundtrip_deviation(&f, &pts).unwrap() <= 1e-10);
    }

    #[test]
    fn cat_map_basics() {
        let cat = cat_map();
        assert_eq!(cat.eval(Vec2::ZERO), Vec2::ZERO);
        let (l1, l2) = cat.differential(Vec2::ZERO).real_eigenvalues().unwrap();
        let golden = (3.0 + 5.0_f64.sqrt()) / 2.0;
        assert_relative_eq!(l1, golden, epsilon = 1e-12);
        assert_relative_eq!(l2, 1.0 / golden, epsilon = 1e-12);
        // Rational points are periodic: follow (1/2, 1/2).
        let p = Vec2::new(0.5, 0.5);
        let mut q = p;
        let mut period = 0;
        for i in 1..=12 {
            q = cat.eval(q);
            if crate::geom::torus_distance(q, p) < 1e-12 {
                period = i;
                break;
            }
        }
        assert!(period > 0, "orbit of (1/2, 1/2) must be periodic");
        assert_eq!(cat.differential(Vec2::new(0.1, 0.9)).det(), 1.0);
    }

    #[test]
    fn slowed_cat_tangent_to_identity_and_symmetric() {
        let f = slowed_cat_map(0.12, 3).unwrap();
        // Fixed at origin with identity differential.
        assert!(crate::geom::torus_distance(f.eval(Vec2::ZERO), Vec2::ZERO) < 1e-14);
        let d0 = f.differential(Vec2::ZERO).sub(Mat2::IDENTITY).max_abs();
        assert!(d0 <= 1e-8, "DF(0) deviation {d0}");
        // Odd symmetry on samples.
        let pts = sample_points(1000, 23, Vec2::ZERO, Vec2::new(1.0, 1.0));
        for p in pts {
            let a = f.eval(Vec2::new(-p.x, -p.y));
            let b = f.eval(p);
            assert!(crate::geom::torus_distance(a, wrap_torus(-b)) <= 1e-10);
        }
        // Equals the cat map bit-for-bit outside the slowdown discs.
        let cat = cat_map();
        let mut outside = 0;
        for p in sample_points(2000, 29, Vec2::ZERO, Vec2::new(1.0, 1.0)) {
            let far = HALF_PERIOD_POINTS
                .iter()
                .all(|&c| torus_displacement(c, p).norm() >= 0.12);
            if far {
                outside += 1;
                assert_eq!(f.eval(p), cat.eval(p));
            }
        }
        assert!(outside > 500);
        // Area preservation well within the 1e-6 budget.
        let rep = check_area_preservation(&f, 2000, 1e-6, 31, None);
        assert!(rep.pass, "max dev {}", rep.max_abs_deviation);
    }

    #[test]
    fn slowed_cat_rejects_overlapping_discs() {
        assert!(matches!(slowed_cat_map(0.3, 3), Err(MapError::OverlappingDiscs { .. })));
    }

    #[test]
    fn differential_fd_agreement() {
        let pts = sample_points(200, 37, Vec2::ZERO, Vec2::new(1.0, 1.0));
        for m in &[cat_map(), standard_map(1.3)] {
            let dev = differential_fd_deviation(m, &pts, 1e-5);
            assert!(dev <= 1e-6, "{}: fd deviation {dev}", m.name());
        }
        // The slowdown bump has curvature on the scale of its collar, so the
        // O(h^2) truncation constant is larger; the agreement is still O(h^2).
        let slow = slowed_cat_map(0.2, 2).unwrap();
        let dev5 = differential_fd_deviation(&slow, &pts, 1e-5);
        assert!(dev5 <= 1e-4, "slowed cat fd deviation {dev5}");
        let dev4 = differential_fd_deviation(&slow, &pts, 1e-4);
        assert!(
            dev4 / dev5 > 10.0 || dev5 < 1e-8,
            "expected O(h^2) scaling: dev(1e-4) = {dev4}, dev(1e-5) = {dev5}"
        );
    }

    #[test]
    fn quotient_canonicalization() {
        let p = Vec2::new(0.75, 0.25);
        let a = quotient_to_sphere(p);
        let b = quotient_to_sphere(Vec2::new(-0.75, -0.25));
        assert_eq!(a, b);
        assert_eq!(a.representative(), Vec2::new(0.25, 0.75));
    }

    #[test]
    fn push_cat_map_to_sphere() {
        // The linear cat map is odd, so the push succeeds.
        let cat = cat_map();
        let pushed = push_map_to_sphere(&cat, 500, 41, 1e-8).unwrap();
        // Classes are respected: pushing p and -p gives the same image.
        let p = Vec2::new(0.37, 0.81);
        let i1 = pushed.eval(quotient_to_sphere(p));
        let i2 = pushed.eval(quotient_to_sphere(Vec2::new(-0.37, -0.81)));
        assert!(sphere_distance(i1, i2) < 1e-14);
    }

    #[test]
    fn push_rejects_asymmetric_map() {
        // A torus shear with non-odd profile violates F(-p) = -F(p).
        let f = vertical_shear_on(Domain::Torus, ScalarFn::poly(vec![0.3]));
        assert!(matches!(
            push_map_to_sphere(&f, 200, 43, 1e-8),
            Err(MapError::SymmetryViolation { .. })
        ));
    }

    #[test]
    fn ramification_points_behaviour_under_slowed_cat() {
        let f = slowed_cat_map(0.12, 3).unwrap();
        let pushed = push_map_to_sphere(&f, 500, 47, 1e-8).unwrap();
        // The origin class is fixed; the ramification set is invariant.
        let o = quotient_to_sphere(Vec2::ZERO);
        assert!(sphere_distance(pushed.eval(o), o) < 1e-12);
        let ram: Vec<SpherePoint> = HALF_PERIOD_POINTS.iter().map(|&p| quotient_to_sphere(p)).collect();
        for &r in &ram {
            let img = pushed.eval(r);
            assert!(
                ram.iter().any(|&s| sphere_distance(img, s) < 1e-12),
                "ramification set must be invariant"
            );
        }
    }

    #[test]
    fn area_check_catches_non_symplectic_map() {
        let bad = PlaneMap::new(
            Domain::Plane,
            "double-x",
            |p| Vec2::new(2.0 * p.x, p.y),
            |_| Mat2::new(2.0, 0.0, 0.0, 1.0),
        );
        let rep = check_area_preservation(&bad, 100, 1e-9, 53, None);
        assert!(!rep.pass);
        assert_relative_eq!(rep.max_abs_deviation, 1.0);
    }

    #[test]
    fn area_check_deterministic_given_seed() {
        let f = standard_map(1.1);
        let a = check_area_preservation(&f, 500, 1e-9, 99, None);
        let b = check_area_preservation(&f, 500, 1e-9, 99, None);
        assert_eq!(a.max_abs_deviation.to_bits(), b.max_abs_deviation.to_bits());
        assert_eq!(a.worst_point, b.worst_point);
    }
}
