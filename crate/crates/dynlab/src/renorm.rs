//! A saddle model with an exact homoclinic band and the renormalization
//! machinery around it: rescaling charts, in-box transition convergence, the
//! normal form of the band transition, and Henon-composition verification of
//! renormalized return maps.
//!
//! The model is `f = R . C . L` where `L = diag(lambda, 1/lambda)` is a
//! global linear saddle, `C` an optional exact-symplectic cubic shear (test
//! fixture), and `R` a closed-form elliptic rotor ring. On the ring's
//! plateau annulus `R` equals the affine map `G = T . L^{-1}`, so the full
//! map equals the band transition `T` exactly on a neighbourhood of the band
//! segment `I` on the unstable axis, while staying exactly area-preserving
//! everywhere. `T` carries the vertical segment `I` to a horizontal segment
//! `I'` on the stable axis; in centered coordinates it is the quarter turn
//! followed by a horizontal shear, `(X, Y) -> (Y - a X, -X)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::func::{FnDescriptor, ScalarFn};
use crate::geom::{Affine2, Mat2, Vec2};
use crate::maps::{compose, vertical_shear, Domain, PlaneMap};
use crate::symplectic::{EllipticRotor, RingProfile};

#[derive(Debug, Error)]
pub enum RenormError {
    #[error("model geometry infeasible: {0}")]
    Geometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("number of shear profiles must be odd, got {0}")]
    EvenProfileCount(usize),
    #[error(
        "marker ellipses would overlap: spacing {spacing:.3e} < required {required:.3e}; \
         increase k"
    )]
    EllipseOverlap { spacing: f64, required: f64 },
    #[error("dwell condition failed at k = {k}: orbit left the linearization box")]
    DwellViolation { k: usize },
    #[error("orbit left the charted region at disc sample ({x}, {y})")]
    OrbitEscape { x: f64, y: f64 },
}

/// Parameters of [`build_saddle_band_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleBandParams {
    /// Contraction eigenvalue of the saddle, in (0, 1).
    pub lambda: f64,
    /// Transition coefficient of the band normal form.
    pub a: f64,
    /// Half-width of the linearization box `V = [-alpha, alpha]^2`.
    pub alpha: f64,
    /// Center height of the band segment `I` on the unstable axis.
    pub band_center_y: f64,
    /// Half-length of `I`.
    pub band_half_len: f64,
    /// Center abscissa of the image segment `I'` on the stable axis.
    pub exit_center_x: f64,
    /// Relative width of the rotor blend collars (ring rise/fall zones).
    pub blend_width: f64,
    /// Amplitude of the cubic in-box perturbation (0 for the exact model).
    ///
    /// Realized as the conserved-quantity flow `(x, y) ->
    /// (e^{-theta} x, e^{theta} y)` with `theta = ln(1/lambda) + eps x y`:
    /// exactly symplectic, axes invariant, lowest-order terms cubic.
    pub cubic_eps: f64,
}

impl Default for SaddleBandParams {
    fn default() -> Self {
        SaddleBandParams {
            lambda: 0.5,
            a: 0.7,
            alpha: 1.0,
            band_center_y: 0.55,
            band_half_len: 0.08,
            exit_center_x: 0.3,
            blend_width: 0.1,
            cubic_eps: 0.0,
        }
    }
}

/// The saddle-with-band model.
#[derive(Clone)]
pub struct SaddleBandModel {
    pub params: SaddleBandParams,
    map: PlaneMap,
    rotor: EllipticRotor,
    /// The exact affine band transition near `I`.
    transition: Affine2,
    /// Radial knots of the rotor ring, for diagnostics.
    pub ring: RingProfile,
}

impl SaddleBandModel {
    pub fn map(&self) -> &PlaneMap {
        &self.map
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    /// The affine transition `T` in effect near the band segment.
    pub fn transition(&self) -> Affine2 {
        self.transition
    }

    /// Center of the band segment `I` (on the unstable axis).
    pub fn band_center(&self) -> Vec2 {
        Vec2::new(0.0, self.params.band_center_y)
    }

    /// Center of the image segment `I'` (on the stable axis).
    pub fn exit_center(&self) -> Vec2 {
        Vec2::new(self.params.exit_center_x, 0.0)
    }

    /// Sub-segment of `I` on which the transition is exactly affine
    /// (markers and band-coincidence windows live here).
    pub fn band_exact_window(&self) -> (f64, f64) {
        let c = self.params.band_center_y;
        let h = 0.75 * self.params.band_half_len;
        (c - h, c + h)
    }
}

/// Linear saddle part `diag(lambda, 1/lambda)`.
fn saddle_linear(lambda: f64) -> Affine2 {
    Affine2::new(Mat2::diagonal(lambda, 1.0 / lambda), Vec2::ZERO)
}

/// The affine band transition `T = M+ + D (p - M-)`,
/// `D = [[-a, 1], [-1, 0]]`: vertical through `M-` goes to horizontal
/// through `M+`.
fn band_transition(a: f64, band_center: Vec2, exit_center: Vec2) -> Affine2 {
    let d = Mat2::new(-a, 1.0, -1.0, 0.0);
    Affine2::new(d, exit_center - d.apply(band_center))
}

pub fn build_saddle_band_model(params: SaddleBandParams) -> Result<SaddleBandModel, RenormError> {
    let p = params.clone();
    if !(p.lambda > 0.0 && p.lambda < 1.0) {
        return Err(RenormError::InvalidParameter("lambda must lie in (0, 1)".into()));
    }
    if p.a.abs() >= 2.0 * p.lambda {
        return Err(RenormError::InvalidParameter(format!(
            "transition coefficient too large: need |a| < 2 lambda = {}",
            2.0 * p.lambda
        )));
    }
    if !(p.band_half_len > 0.0 && p.blend_width > 0.0 && p.blend_width < 0.25 * p.alpha) {
        return Err(RenormError::InvalidParameter("blend width / band length out of range".into()));
    }
    // The contracted image of I' must clear I' itself so the hole and the
    // plateau separate radially.
    let (xc, yc, l) = (p.exit_center_x, p.band_center_y, p.band_half_len);
    if p.lambda * (xc + l) >= xc - l {
        return Err(RenormError::Geometry(format!(
            "lambda (x_c + l) = {:.4} must be < x_c - l = {:.4}",
            p.lambda * (xc + l),
            xc - l
        )));
    }

    let lin = saddle_linear(p.lambda);
    let t = band_transition(p.a, Vec2::new(0.0, yc), Vec2::new(xc, 0.0));
    // The rotor realizes G = T . L^{-1} on its plateau.
    let g = t.compose(lin.inverse().expect("saddle is invertible"));

    // Probe rotor (any profile) to measure s-values of the key sets.
    let probe = EllipticRotor::for_affine(g, RingProfile::disc(1.0, 2.0, 3))
        .map_err(|e| RenormError::Geometry(format!("transition is not elliptic: {e}")))?;

    // Identity-required region, in post-L coordinates: L-images of every
    // corridor orbit point. s is a positive quadratic form, so the max over
    // a rectangle sits at a corner.
    let corr = [
        Vec2::new(0.0, 0.0),
        Vec2::new(p.lambda * (xc + l) * 1.02, 0.0),
        Vec2::new(0.0, (yc + l) * 1.02),
        Vec2::new(p.lambda * (xc + l) * 1.02, (yc + l) * 1.02),
    ];
    let s_id_max = corr.iter().map(|&q| probe.s_of(q)).fold(0.0f64, f64::max);

    // Plateau-required region: L-image of the inner band window, with
    // margins for scheme ellipses and shear columns.
    let (wlo, whi) = (yc - 0.75 * l, yc + 0.75 * l);
    let mx = 0.02 * p.alpha;
    let my = 0.015 * p.alpha;
    let mut s_t_min = f64::INFINITY;
    let mut s_t_max = 0.0f64;
    for i in 0..=24 {
        for j in 0..=24 {
            let q = Vec2::new(
                -mx + 2.0 * mx * i as f64 / 24.0,
                (wlo / p.lambda - my) + (((whi - wlo) / p.lambda) + 2.0 * my) * j as f64 / 24.0,
            );
            let s = probe.s_of(q);
            s_t_min = s_t_min.min(s);
            s_t_max = s_t_max.max(s);
        }
    }
    if s_id_max * 1.02 >= s_t_min * 0.98 {
        return Err(RenormError::Geometry(format!(
            "identity zone (s <= {s_id_max:.4}) and transition zone (s >= {s_t_min:.4}) \
             do not separate; adjust band placement"
        )));
    }
    let gap = s_t_min - s_id_max;
    let s0 = s_id_max + 0.15 * gap;
    let s1 = s_t_min - 0.15 * gap;
    let s2 = s_t_max * (1.0 + p.blend_width);
    let s3 = s2 * (1.0 + 2.0 * p.blend_width);
    let ring = RingProfile::ring(s0, s1, s2, s3, 3);
    let rotor = EllipticRotor::for_affine(g, ring)
        .map_err(|e| RenormError::Geometry(format!("rotor construction failed: {e}")))?;

    // Assemble the map. The in-box factor conserves s = x y, so it is
    // exactly symplectic and keeps both axes invariant for any eps.
    let lam = p.lambda;
    let eps = p.cubic_eps;
    let theta0 = (1.0 / lam).ln();
    let rot_f = rotor.clone();
    let rot_j = rotor.clone();
    let rot_i = rotor.clone();
    let map = PlaneMap::new(
        Domain::Plane,
        "saddle_band",
        move |q| {
            let s = q.x * q.y;
            let e = (theta0 + eps * s).exp();
            rot_f.eval(Vec2::new(q.x / e, q.y * e))
        },
        move |q| {
            let s = q.x * q.y;
            let e = (theta0 + eps * s).exp();
            let din = Mat2::new(
                (1.0 - eps * s) / e,
                -eps * q.x * q.x / e,
                eps * q.y * q.y * e,
                (1.0 + eps * s) * e,
            );
            rot_j.diff(Vec2::new(q.x / e, q.y * e)).mul(din)
        },
    )
    .with_inverse(move |q| {
        let w = rot_i.inverse(q);
        // s is conserved, so the exponent can be read off the image.
        let e = (theta0 + eps * w.x * w.y).exp();
        Vec2::new(w.x * e, w.y / e)
    });

    let model = SaddleBandModel { params, map, rotor, transition: t, ring };

    if model.params.cubic_eps == 0.0 {
        // Normal-form sanity: exact saddle on the corridor, exact transition
        // near the band.
        let dev = model.normal_form_deviation();
        if dev > 1e-11 {
            return Err(RenormError::Geometry(format!(
                "normal-form deviation {dev:.3e} after construction"
            )));
        }
    }
    Ok(model)
}

impl SaddleBandModel {
    /// Worst deviation of the built map from its two exact normal forms
    /// (saddle on the corridor region, affine transition near the band).
    pub fn normal_form_deviation(&self) -> f64 {
        let p = &self.params;
        let lin = saddle_linear(p.lambda);
        let mut worst = 0.0f64;
        // Corridor: includes the origin, the band segment itself, and the
        // contraction zone of the exit segment.
        for i in 0..=20 {
            for j in 0..=20 {
                let q = Vec2::new(
                    (p.exit_center_x + p.band_half_len) * i as f64 / 20.0,
                    (p.band_center_y + p.band_half_len) * j as f64 / 20.0,
                );
                let lq = lin.apply(q);
                if self.rotor.s_of(lq) < self.ring.s0 {
                    worst = worst.max((self.map.eval(q) - lq).norm());
                }
            }
        }
        // Band neighbourhood: inner window of I, small x margins.
        let (wlo, whi) = self.band_exact_window();
        for i in 0..=20 {
            for j in 0..=20 {
                let q = Vec2::new(
                    -0.008 + 0.016 * i as f64 / 20.0,
                    wlo + (whi - wlo) * j as f64 / 20.0,
                );
                worst = worst.max((self.map.eval(q) - self.transition.apply(q)).norm());
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Rescaling charts
// ---------------------------------------------------------------------------

/// Chart at a band-entry marker `(0, y_i)`: `(x, y) -> (x / lambda^k, y - y_i)`,
/// post-composed with the homothety by `1/mu`.
pub fn scale_minus(y_i: f64, k: usize, lambda: f64, mu: f64) -> Affine2 {
    let lk = lambda.powi(k as i32);
    Affine2::new(Mat2::diagonal(1.0 / (lk * mu), 1.0 / mu), Vec2::new(0.0, -y_i / mu))
}

/// Chart at a band-exit marker `(x_i, 0)`: `(x, y) -> (x - x_i, y / lambda^k)`,
/// post-composed with the homothety by `1/mu`.
pub fn scale_plus(x_i: f64, k: usize, lambda: f64, mu: f64) -> Affine2 {
    let lk = lambda.powi(k as i32);
    Affine2::new(Mat2::diagonal(1.0 / mu, 1.0 / (lk * mu)), Vec2::new(-x_i / mu, 0.0))
}

/// Subexponentially decreasing homothety scale, `mu_k = mu0 / k^2`.
pub fn default_mu(mu0: f64, k: usize) -> f64 {
    mu0 / (k as f64 * k as f64)
}

pub const DEFAULT_MU0: f64 = 0.07;

// ---------------------------------------------------------------------------
// In-box transition convergence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct T0Row {
    pub k: usize,
    pub mu: f64,
    /// Sampled sup norm of `T0 - Id` over the unit disc.
    pub sup_c0: f64,
    /// Sampled sup norm of the first finite difference of `T0 - Id`.
    pub sup_c1: f64,
    pub skipped: Option<String>,
}

/// Renormalized in-box transition for a matched chart pair: the k-fold map
/// from the exit ellipse `B+` to the entry ellipse `B-`, read through the
/// scale charts centered on one exact orbit (the transition carries the
/// entry center to the exit center, which pins both ellipse centers).
pub fn check_t0_convergence(model: &SaddleBandModel, k_list: &[usize], mu0: f64) -> Vec<T0Row> {
    let p = &model.params;
    let lam = p.lambda;
    let alpha = p.alpha;
    let mut rows = Vec::new();
    for &k in k_list {
        let mu = default_mu(mu0, k);
        let lk = lam.powi(k as i32);
        // Ellipse centers on the true orbit of the model.
        let c_plus = Vec2::new(p.exit_center_x, lk * p.band_center_y);
        let c_minus = model.map().iterate(c_plus, k);
        let chart_plus = Affine2::new(
            Mat2::diagonal(1.0 / (mu * alpha), 1.0 / (lk * mu * alpha)),
            Vec2::new(-c_plus.x / (mu * alpha), -c_plus.y / (lk * mu * alpha)),
        );
        let chart_minus = Affine2::new(
            Mat2::diagonal(1.0 / (lk * mu * alpha), 1.0 / (mu * alpha)),
            Vec2::new(-c_minus.x / (lk * mu * alpha), -c_minus.y / (mu * alpha)),
        );
        let inv_plus = chart_plus.inverse().unwrap();

        // Dwell check plus sampling on a disc grid.
        let mut sup = 0.0f64;
        let mut grid: Vec<(Vec2, Vec2)> = Vec::new();
        let mut skipped = None;
        'sampling: for i in -6..=6i32 {
            for j in -6..=6i32 {
                let xy = Vec2::new(i as f64 / 6.0, j as f64 / 6.0);
                if xy.norm_sq() > 1.0 {
                    continue;
                }
                let mut q = inv_plus.apply(xy);
                for _ in 0..k {
                    if q.x.abs() > alpha || q.y.abs() > alpha {
                        skipped = Some(format!("orbit left the box at k = {k}"));
                        break 'sampling;
                    }
                    q = model.map().eval(q);
                }
                let out = chart_minus.apply(q);
                let delta = out - xy;
                sup = sup.max(delta.norm());
                grid.push((xy, delta));
            }
        }
        if let Some(msg) = skipped {
            rows.push(T0Row { k, mu, sup_c0: f64::NAN, sup_c1: f64::NAN, skipped: Some(msg) });
            continue;
        }
        // First-difference norm of Delta over neighbouring grid samples.
        let mut sup_c1 = 0.0f64;
        for (i, (x1, d1)) in grid.iter().enumerate() {
            for (x2, d2) in grid.iter().skip(i + 1) {
                let dist = (*x2 - *x1).norm();
                if dist > 1e-12 && dist < 0.35 {
                    sup_c1 = sup_c1.max((*d2 - *d1).norm() / dist);
                }
            }
        }
        rows.push(T0Row { k, mu, sup_c0: sup, sup_c1, skipped: None });
    }
    rows
}

// ---------------------------------------------------------------------------
// Band-transition normal form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionFit {
    pub k: usize,
    /// Fitted shear coefficient of the normal form `(X, Y) -> (Y - a X, -X)`.
    pub a_fit: f64,
    pub linear: Mat2,
    pub translation: Vec2,
    pub sup_residual: f64,
}

/// Least-squares affine fit of the band transition read through the
/// k-independent homothety charts at the markers.
pub fn homoclinic_transition_form(model: &SaddleBandModel, k: usize) -> TransitionFit {
    let p = &model.params;
    let mu = default_mu(DEFAULT_MU0, k.max(1)) * p.alpha;
    let m_minus = model.band_center();
    let m_plus = model.transition.apply(m_minus);
    let hom_minus_inv = Affine2::new(Mat2::diagonal(mu, mu), m_minus);
    let hom_plus = Affine2::new(
        Mat2::diagonal(1.0 / mu, 1.0 / mu),
        Vec2::new(-m_plus.x / mu, -m_plus.y / mu),
    );

    // Samples of the renormalized transition on the unit disc.
    let mut xs: Vec<Vec2> = Vec::new();
    let mut ys: Vec<Vec2> = Vec::new();
    for i in -8..=8i32 {
        for j in -8..=8i32 {
            let xy = Vec2::new(i as f64 / 8.0, j as f64 / 8.0);
            if xy.norm_sq() > 1.0 {
                continue;
            }
            let q = hom_minus_inv.apply(xy);
            let out = hom_plus.apply(model.map().eval(q));
            xs.push(xy);
            ys.push(out);
        }
    }
    let fit = affine_lsq(&xs, &ys);
    let mut sup = 0.0f64;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sup = sup.max((fit.apply(*x) - *y).norm());
    }
    TransitionFit { k, a_fit: -fit.m.a, linear: fit.m, translation: fit.t, sup_residual: sup }
}

fn affine_lsq(xs: &[Vec2], ys: &[Vec2]) -> Affine2 {
    // Normal equations for the 3-parameter fit per output component.
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in xs {
        sx += p.x;
        sy += p.y;
        sxx += p.x * p.x;
        sxy += p.x * p.y;
        syy += p.y * p.y;
    }
    let m = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
    let det3 = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    let solve3 = |b: [f64; 3]| -> (f64, f64, f64) {
        let rep = |col: usize| -> f64 {
            let mut mm = m;
            mm[0][col] = b[0];
            mm[1][col] = b[1];
            mm[2][col] = b[2];
            det3(&mm) / d
        };
        (rep(0), rep(1), rep(2))
    };
    let (mut bx, mut by) = ([0.0f64; 3], [0.0f64; 3]);
    for (p, q) in xs.iter().zip(ys.iter()) {
        bx[0] += p.x * q.x;
        bx[1] += p.y * q.x;
        bx[2] += q.x;
        by[0] += p.x * q.y;
        by[1] += p.y * q.y;
        by[2] += q.y;
    }
    let (a, b, tx) = solve3(bx);
    let (c, dd, ty) = solve3(by);
    Affine2::new(Mat2::new(a, b, c, dd), Vec2::new(tx, ty))
}

// ---------------------------------------------------------------------------
// Renormalization schemes
// ---------------------------------------------------------------------------

/// One marker leg of a scheme: charts, the extracted near-identity factor,
/// and the (mean-normalized) shear profile realized on this leg.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeLeg {
    pub marker_minus: Vec2,
    pub marker_plus: Vec2,
    pub center_minus: Vec2,
    pub center_plus: Vec2,
    pub chart_minus: Affine2,
    pub chart_plus: Affine2,
    /// Extracted factor `Phi_i`; depends on `k`, not on `psi_i`.
    pub phi: Affine2,
    pub psi: FnDescriptor,
}

/// A built scheme: the chart `Q`, the marker legs, and bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenormScheme {
    pub k: usize,
    pub n_markers: usize,
    pub mu: f64,
    /// Return step count `n = N (1 + k)`.
    pub n_steps: usize,
    pub q_chart: Affine2,
    pub legs: Vec<SchemeLeg>,
    /// Sup over the disc of `|Phi_i - Id|`.
    pub phi_deviation: f64,
}

pub struct BuiltScheme {
    pub scheme: RenormScheme,
    pub f_hat: PlaneMap,
    /// Mean-normalized shear profiles actually inserted.
    pub psi_list: Vec<ScalarFn>,
}

/// Construct the shear insertion `g` and the scheme so that the
/// renormalized return of `f_hat = g . f` factors through Henon maps.
pub fn build_renorm_scheme(
    model: &SaddleBandModel,
    psi_list: &[ScalarFn],
    k: usize,
    mu0: f64,
) -> Result<BuiltScheme, RenormError> {
    let n_markers = psi_list.len();
    if n_markers == 0 || n_markers % 2 == 0 {
        return Err(RenormError::EvenProfileCount(n_markers));
    }
    if k < 2 {
        return Err(RenormError::InvalidParameter("k must be at least 2".into()));
    }
    let p = &model.params;
    let lam = p.lambda;
    let lk = lam.powi(k as i32);
    let mu = default_mu(mu0, k);
    let scale = mu * p.alpha;

    // Markers, pairwise distinct, confined to the exactly affine window.
    let (wlo, whi) = model.band_exact_window();
    let span = 0.8 * (whi - wlo);
    let center = 0.5 * (wlo + whi);
    let y_marker = |i: usize| -> f64 {
        if n_markers == 1 {
            center
        } else {
            center - span / 2.0 + span * i as f64 / (n_markers - 1) as f64
        }
    };
    // Mean-normalize the profiles: the constant part is a vertical
    // translation, absorbed by recentering.
    let psi_tilde: Vec<ScalarFn> = psi_list
        .iter()
        .map(|f| {
            let c = f.eval(0.0);
            f.add(&ScalarFn::constant(-c))
        })
        .collect();

    // Measure the excursion of the Henon composition over the disc: the
    // renormalized image after each leg sizes that leg's ellipses and the
    // shear window. (The paper's uniformly bounded radius ratios.)
    let phi_shear = Mat2::new(1.0, 0.0, -p.a * lk, 1.0);
    let mut leg_xmax = vec![0.0f64; n_markers];
    let mut leg_inmax = vec![0.0f64; n_markers];
    for s in 0..64 {
        let th = s as f64 * std::f64::consts::TAU / 48.0;
        let r = if s < 48 { 1.0 } else { 0.5 };
        let mut z = Vec2::new(r * th.cos(), r * th.sin());
        for i in 0..n_markers {
            leg_inmax[i] = leg_inmax[i].max(z.x.abs()).max(z.y.abs());
            let w = phi_shear.apply(z);
            let x_out = w.y;
            leg_xmax[i] = leg_xmax[i].max(x_out.abs());
            z = Vec2::new(x_out, -w.x + psi_tilde[i].eval(x_out));
        }
    }
    let excursion = leg_inmax
        .iter()
        .chain(leg_xmax.iter())
        .fold(1.0f64, |acc, &v| acc.max(v));
    // Ellipses and windows must stay inside the exactly affine collar of
    // the band (x margin 0.02 alpha, y margin 0.015 alpha at build time).
    let zone_x = 0.016 * p.alpha;
    let zone_y = 0.012 * p.alpha;
    if scale * excursion > zone_x.min(zone_y) {
        return Err(RenormError::InvalidParameter(format!(
            "shear profiles too large for the chart scale: excursion {excursion:.2} \
             times scale {scale:.2e} exceeds the exact-zone margin"
        )));
    }
    if n_markers > 1 {
        let spacing = span / (n_markers - 1) as f64;
        let required = 2.5 * scale * excursion;
        if spacing < required {
            return Err(RenormError::EllipseOverlap { spacing, required });
        }
    }

    // Solve the cyclic linear system for the entry abscissas so the center
    // orbit closes exactly: cx_{i+1} = lambda^k x_exit_i,
    // x_exit_i = x_c - a cx_i + (y_i - y_c).
    let mut cx = vec![0.0f64; n_markers + 1];
    for _ in 0..200 {
        for i in 0..n_markers {
            let x_exit = p.exit_center_x - p.a * cx[i] + (y_marker(i) - p.band_center_y);
            cx[i + 1] = lk * x_exit;
        }
        let drift = (cx[n_markers] - cx[0]).abs();
        cx[0] = cx[n_markers];
        if drift < 1e-16 {
            break;
        }
    }

    // Build legs along the exact center orbit.
    let mut legs = Vec::with_capacity(n_markers);
    let mut columns: Vec<ScalarFn> = Vec::new();
    let mut plateau_halves = Vec::with_capacity(n_markers);
    for i in 0..n_markers {
        let y_i = y_marker(i);
        let y_next = y_marker((i + 1) % n_markers);
        let c_minus = Vec2::new(cx[i], y_i);
        let exit_pre = model.transition.apply(c_minus);
        let shift = lk * y_next - exit_pre.y;
        let c_plus = Vec2::new(exit_pre.x, lk * y_next);

        // Column shear: window * (shift + lambda^k scale psi((x - x_exit)/scale)),
        // plateau wide enough for the measured excursion of this leg.
        let plateau_half = scale * (leg_xmax[i] + 0.5);
        let rise = 0.5 * scale;
        plateau_halves.push(plateau_half);
        let window = crate::func::smooth_window(
            exit_pre.x - plateau_half - rise,
            exit_pre.x + plateau_half + rise,
            rise,
            3,
        );
        let kick = psi_tilde[i]
            .rescale_arg(exit_pre.x, scale)
            .scale(lk * scale)
            .add(&ScalarFn::constant(shift));
        columns.push(window.product(&kick));

        let chart_minus = Affine2::new(
            Mat2::diagonal(1.0 / (lk * scale), 1.0 / scale),
            Vec2::new(-c_minus.x / (lk * scale), -c_minus.y / scale),
        );
        let chart_plus = Affine2::new(
            Mat2::diagonal(1.0 / scale, 1.0 / (lk * scale)),
            Vec2::new(-c_plus.x / scale, -c_plus.y / (lk * scale)),
        );
        let phi = Affine2::new(Mat2::new(1.0, 0.0, -p.a * lk, 1.0), Vec2::ZERO);
        legs.push(SchemeLeg {
            marker_minus: Vec2::new(0.0, y_i),
            marker_plus: model.transition.apply(Vec2::new(0.0, y_i)),
            center_minus: c_minus,
            center_plus: c_plus,
            chart_minus,
            chart_plus,
            phi,
            psi: psi_tilde[i].descriptor().clone(),
        });
    }

    // Marker columns must not overlap.
    for i in 0..n_markers {
        for j in (i + 1)..n_markers {
            let d = (legs[i].center_plus.x - legs[j].center_plus.x).abs();
            let need = plateau_halves[i] + plateau_halves[j] + 2.0 * scale;
            if d < need {
                return Err(RenormError::EllipseOverlap { spacing: d, required: need });
            }
        }
    }

    let beta = columns.into_iter().reduce(|acc, c| acc.add(&c)).expect("at least one column");
    let g = vertical_shear(beta);
    let f_hat = compose(&[model.map().clone(), g]).expect("same domain");

    let q_chart = legs[0].chart_minus.inverse().expect("chart is invertible");
    let phi_deviation = p.a.abs() * lk;

    let scheme = RenormScheme {
        k,
        n_markers,
        mu,
        n_steps: n_markers * (1 + k),
        q_chart,
        legs,
        phi_deviation,
    };
    Ok(BuiltScheme { scheme, f_hat, psi_list: psi_tilde })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub k: usize,
    pub n_markers: usize,
    pub samples: usize,
    /// Sup residual against the factored form `H . Phi . ... . H . Phi`.
    pub residual_factored: f64,
    /// Sup residual against the pure Henon composition (`Phi` dropped);
    /// measures how close the extracted factors are to the identity.
    pub residual_pure_henon: f64,
    pub phi_deviation: f64,
    pub pass: bool,
}

/// Compare `Q^{-1} . f_hat^n . Q` against the Henon compositions on disc
/// samples.
pub fn verify_renorm_identity(
    built: &BuiltScheme,
    sample_count: usize,
    tol: f64,
) -> Result<IdentityReport, RenormError> {
    let scheme = &built.scheme;
    let q = scheme.q_chart;
    let q_inv = q.inverse().expect("affine chart invertible");
    let n = scheme.n_steps;

    let mut worst_factored = 0.0f64;
    let mut worst_pure = 0.0f64;
    let mut rng = crate::report::SeededRng::new(1234);
    for s in 0..sample_count {
        // Boundary ring first, then seeded interior points.
        let x = if s < 16 {
            let th = s as f64 * std::f64::consts::TAU / 16.0;
            Vec2::new(0.95 * th.cos(), 0.95 * th.sin())
        } else {
            rng.gen_unit_disc()
        };
        // LHS through the actual dynamics.
        let mut p = q.apply(x);
        for _ in 0..n {
            p = built.f_hat.eval(p);
        }
        let lhs = q_inv.apply(p);
        if !lhs.is_finite() || lhs.norm() > 50.0 {
            return Err(RenormError::OrbitEscape { x: x.x, y: x.y });
        }
        // RHS compositions.
        let mut rhs = x;
        let mut rhs_pure = x;
        for (leg, psi) in scheme.legs.iter().zip(built.psi_list.iter()) {
            rhs = leg.phi.apply(rhs);
            rhs = Vec2::new(rhs.y, -rhs.x + psi.eval(rhs.y));
            rhs_pure = Vec2::new(rhs_pure.y, -rhs_pure.x + psi.eval(rhs_pure.y));
        }
        worst_factored = worst_factored.max((lhs - rhs).norm());
        worst_pure = worst_pure.max((lhs - rhs_pure).norm());
    }
    Ok(IdentityReport {
        k: scheme.k,
        n_markers: scheme.n_markers,
        samples: sample_count,
        residual_factored: worst_factored,
        residual_pure_henon: worst_pure,
        phi_deviation: scheme.phi_deviation,
        pass: worst_factored <= tol,
    })
}

/// Check that `Q(D)` and its `n - 1` intermediate images are pairwise
/// disjoint (sampled bounding boxes of the ellipse orbit).
pub fn check_orbit_disjointness(built: &BuiltScheme) -> bool {
    let q = built.scheme.q_chart;
    let n = built.scheme.n_steps;
    let mut pts: Vec<Vec2> = (0..48)
        .map(|i| {
            let th = i as f64 * std::f64::consts::TAU / 48.0;
            q.apply(Vec2::new(th.cos(), th.sin()))
        })
        .collect();
    let bbox = |pts: &[Vec2]| -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    };
    let mut stages: Vec<(Vec2, Vec2)> = vec![bbox(&pts)];
    for _ in 0..n - 1 {
        pts = pts.iter().map(|&p| built.f_hat.eval(p)).collect();
        stages.push(bbox(&pts));
    }
    for i in 0..stages.len() {
        for j in (i + 1)..stages.len() {
            let (lo1, hi1) = stages[i];
            let (lo2, hi2) = stages[j];
            let sep = lo1.x > hi2.x || lo2.x > hi1.x || lo1.y > hi2.y || lo2.y > hi1.y;
            if !sep {
                return false;
            }
        }
    }
    true
}

/// Outcome of realizing `S_psi . F` with `F` an even Henon composition.
pub struct CorollaryReport {
    pub built: BuiltScheme,
    pub identity: IdentityReport,
    /// Sup over disc samples of |renormalized - S_psi . F_target|.
    pub target_residual: f64,
}

/// Build the `N = m + 1` scheme whose top profile is `psi` and verify that
/// the renormalized return realizes `S_psi . F` for
/// `F = H_0 . H_{psi_m} . ... . H_{psi_1}`.
pub fn corollary_factorization(
    model: &SaddleBandModel,
    target_psis: &[ScalarFn],
    psi: ScalarFn,
    k: usize,
    mu0: f64,
    tol: f64,
) -> Result<CorollaryReport, RenormError> {
    if target_psis.len() % 2 != 0 {
        return Err(RenormError::InvalidParameter(
            "target must be an even-length Henon composition".into(),
        ));
    }
    let mut all: Vec<ScalarFn> = target_psis.to_vec();
    all.push(psi);
    let built = build_renorm_scheme(model, &all, k, mu0)?;
    let identity = verify_renorm_identity(&built, 200, tol)?;

    // Compare against S_psi~ . F~ with the same mean normalization the
    // scheme applies.
    let q = built.scheme.q_chart;
    let q_inv = q.inverse().unwrap();
    let mut chain: Vec<PlaneMap> = built.psi_list[..target_psis.len()]
        .iter()
        .map(|f| crate::maps::henon_map(f.clone()))
        .collect();
    chain.push(crate::maps::henon_map(ScalarFn::zero()));
    let f_target = compose(&chain).expect("plane maps");
    let shear = vertical_shear(built.psi_list[target_psis.len()].clone());
    let rhs_map = compose(&[f_target, shear]).unwrap();

    let mut worst = 0.0f64;
    let mut rng = crate::report::SeededRng::new(4321);
    for _ in 0..200 {
        let x = rng.gen_unit_disc();
        let mut p = q.apply(x);
        for _ in 0..built.scheme.n_steps {
            p = built.f_hat.eval(p);
        }
        let lhs = q_inv.apply(p);
        let rhs = rhs_map.eval(x);
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(CorollaryReport { built, identity, target_residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> SaddleBandModel {
        build_saddle_band_model(SaddleBandParams::default()).unwrap()
    }

    #[test]
    fn model_normal_forms_hold() {
        let m = model();
        assert!(m.normal_form_deviation() <= 1e-12);
        // Fixed point at the origin with eigenvalues (lambda, 1/lambda).
        let pp =
            crate::hyperbolic::find_periodic_point(m.map(), Vec2::new(0.01, -0.01), 1).unwrap();
        assert!(pp.location.norm() < 1e-11);
        assert_relative_eq!(pp.eigen_contracting, 0.5, epsilon = 1e-9);
        assert_relative_eq!(pp.eigen_expanding, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn model_is_area_preserving() {
        let m = model();
        let rep = crate::maps::check_area_preservation(
            m.map(),
            4000,
            1e-8,
            7,
            Some((Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.5))),
        );
        assert!(rep.pass, "max deviation {}", rep.max_abs_deviation);
    }

    #[test]
    fn charts_are_affine_inverses() {
        let c = scale_minus(0.55, 4, 0.5, 0.02);
        let ci = c.inverse().unwrap();
        let p = Vec2::new(0.31, -0.7);
        assert!((ci.apply(c.apply(p)) - p).norm() < 1e-13);
        // Jacobian is the constant 1/(lambda^k mu^2).
        let expect = 1.0 / (0.5f64.powi(4) * 0.02 * 0.02);
        assert_relative_eq!(c.det(), expect, epsilon = 1e-9 * expect);
        // k = 0, mu = 1: pure translation by (0, -y_i).
        let t = scale_minus(0.55, 0, 0.5, 1.0);
        assert_eq!(t.m, Mat2::IDENTITY);
        assert_eq!(t.apply(Vec2::ZERO), Vec2::new(0.0, -0.55));
    }

    #[test]
    fn t0_exact_model_is_identity() {
        let m = model();
        let rows = check_t0_convergence(&m, &[2, 4, 6], DEFAULT_MU0);
        for r in &rows {
            assert!(r.skipped.is_none(), "{:?}", r.skipped);
            assert!(r.sup_c0 <= 1e-10, "k = {}: sup {}", r.k, r.sup_c0);
        }
    }

    #[test]
    fn t0_decays_on_cubic_fixture() {
        let params = SaddleBandParams {
            lambda: 0.45,
            band_half_len: 0.06,
            cubic_eps: 0.05,
            ..Default::default()
        };
        let m = build_saddle_band_model(params).unwrap();
        let ks: Vec<usize> = (1..=8).collect();
        let rows = check_t0_convergence(&m, &ks, DEFAULT_MU0);
        for r in &rows {
            assert!(r.skipped.is_none());
        }
        for w in rows.windows(2) {
            assert!(
                w[1].sup_c0 < w[0].sup_c0,
                "expected strict decay: k={} {:.3e} vs k={} {:.3e}",
                w[0].k,
                w[0].sup_c0,
                w[1].k,
                w[1].sup_c0
            );
        }
        assert!(rows[0].sup_c0 / rows[7].sup_c0 > 10.0);
        assert!(rows[7].sup_c0 > 1e-13, "decay should not bottom out at noise");
    }

    #[test]
    fn transition_fit_recovers_a() {
        let m = model();
        let f3 = homoclinic_transition_form(&m, 3);
        let f6 = homoclinic_transition_form(&m, 6);
        assert!(f3.sup_residual <= 1e-8, "residual {}", f3.sup_residual);
        assert_relative_eq!(f3.a_fit, 0.7, epsilon = 1e-8);
        assert!((f3.a_fit - f6.a_fit).abs() <= 1e-8);
        // a = 0: the fit is the quarter turn (Y, -X).
        let p0 = SaddleBandParams { a: 0.0, band_half_len: 0.05, ..Default::default() };
        let m0 = build_saddle_band_model(p0).unwrap();
        let f = homoclinic_transition_form(&m0, 4);
        assert!(f.linear.sub(Mat2::new(0.0, 1.0, -1.0, 0.0)).max_abs() <= 1e-9);
    }

    #[test]
    fn scheme_identity_exact_and_trend() {
        let m = model();
        let psi = vec![
            ScalarFn::poly(vec![0.0, 0.8, 0.0, 0.35]),
            ScalarFn::trig_poly(2.0, vec![0.0, 0.4], vec![0.0, 0.3]),
            ScalarFn::poly(vec![0.2, -0.5, 0.1]),
        ];
        let built = build_renorm_scheme(&m, &psi, 6, DEFAULT_MU0).unwrap();
        assert_eq!(built.scheme.n_steps, 3 * 7);
        let rep = verify_renorm_identity(&built, 150, 1e-2).unwrap();
        assert!(rep.pass, "factored residual {}", rep.residual_factored);
        assert!(rep.residual_factored <= 1e-9, "{}", rep.residual_factored);
        // Pure-Henon residual decreases with k.
        let b4 = build_renorm_scheme(&m, &psi, 4, DEFAULT_MU0).unwrap();
        let b8 = build_renorm_scheme(&m, &psi, 8, DEFAULT_MU0).unwrap();
        let r4 = verify_renorm_identity(&b4, 150, 1e-2).unwrap();
        let r8 = verify_renorm_identity(&b8, 150, 1e-2).unwrap();
        assert!(
            r8.residual_pure_henon < r4.residual_pure_henon,
            "{} vs {}",
            r8.residual_pure_henon,
            r4.residual_pure_henon
        );
        // f_hat equals f outside the shear columns.
        let far = Vec2::new(-0.6, 0.4);
        assert_eq!(built.f_hat.eval(far), m.map().eval(far));
        assert!(check_orbit_disjointness(&built));
    }

    #[test]
    fn scheme_rejects_even_profiles() {
        let m = model();
        let psi = vec![ScalarFn::zero(), ScalarFn::zero()];
        assert!(matches!(
            build_renorm_scheme(&m, &psi, 5, DEFAULT_MU0),
            Err(RenormError::EvenProfileCount(2))
        ));
    }

    #[test]
    fn corollary_realizes_shear_composition() {
        let m = model();
        let target = vec![
            ScalarFn::poly(vec![0.0, 0.3, 0.2]),
            ScalarFn::poly(vec![0.0, -0.4, 0.0, 0.1]),
        ];
        let psi = ScalarFn::sine(0.1, 1.0, 0.0);
        let rep = corollary_factorization(&m, &target, psi, 6, DEFAULT_MU0, 1e-2).unwrap();
        assert!(rep.identity.pass);
        assert!(
            rep.target_residual <= 20.0 * rep.identity.phi_deviation + 1e-6,
            "target residual {} vs phi deviation {}",
            rep.target_residual,
            rep.identity.phi_deviation
        );
        // psi = 0: the renormalized map approximates the target itself.
        let rep0 =
            corollary_factorization(&m, &target, ScalarFn::zero(), 6, DEFAULT_MU0, 1e-2).unwrap();
        assert!(rep0.target_residual <= 20.0 * rep0.identity.phi_deviation + 1e-6);
    }

    #[test]
    fn renormalization_of_composition_property() {
        // Through matching middle charts, renormalizing a composition equals
        // composing the renormalizations; verified on the scheme's factors.
        let m = model();
        let psi = vec![ScalarFn::poly(vec![0.0, 0.5])];
        let built = build_renorm_scheme(&m, &psi, 5, DEFAULT_MU0).unwrap();
        let leg = &built.scheme.legs[0];
        let band = |p: Vec2| built.f_hat.eval(p);
        let boxk = |mut p: Vec2| {
            for _ in 0..built.scheme.k {
                p = built.f_hat.eval(p);
            }
            p
        };
        let cm = leg.chart_minus;
        let cp = leg.chart_plus;
        let cm_inv = cm.inverse().unwrap();
        let cp_inv = cp.inverse().unwrap();
        let mut rng = crate::report::SeededRng::new(99);
        for _ in 0..50 {
            let x = rng.gen_unit_disc();
            // Renormalized composition (orbit closes, so the outer chart is
            // the entry chart again).
            let whole = cm.apply(boxk(band(cm_inv.apply(x))));
            // Composition of renormalizations through the shared middle chart.
            let r_band = cp.apply(band(cm_inv.apply(x)));
            let r_box = cm.apply(boxk(cp_inv.apply(r_band)));
            assert!((whole - r_box).norm() <= 1e-11);
        }
    }
}
