//! Exact-symplectic building blocks: implicitly generated near-identity
//! patches and closed-form elliptic rotors.
//!
//! Both primitives have unit Jacobian in exact arithmetic (generating
//! function respectively conserved-quantity flow), so piecewise models built
//! from them stay area-preserving to machine precision instead of to the
//! accuracy of some blending heuristic.

use crate::func::PlateauProfile;
use crate::geom::{Affine2, Mat2, Vec2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SymplecticError {
    #[error("matrix is not elliptic: |trace| = {trace_abs} >= 2")]
    NotElliptic { trace_abs: f64 },
    #[error("affine map has no isolated fixed point")]
    NoFixedPoint,
    #[error("implicit step failed to converge (residual {residual})")]
    NewtonStall { residual: f64 },
    #[error("invariant frame construction failed: {0}")]
    FrameConstruction(String),
}

/// Fixed point of an affine map, when `I - M` is invertible.
pub fn affine_fixed_point(g: Affine2) -> Option<Vec2> {
    let m = Mat2::IDENTITY.sub(g.m);
    m.solve(g.t)
}

// ---------------------------------------------------------------------------
// Radial angle profiles
// ---------------------------------------------------------------------------

/// Piecewise profile in a radial-squared variable `s`:
/// 0 on [0, s0], rising to 1 on [s0, s1], 1 on [s1, s2], falling on [s2, s3].
///
/// With `s0 = s1 = 0` this degenerates to a plateau disc profile.
#[derive(Debug, Clone, Copy)]
pub struct RingProfile {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub order: u32,
}

impl RingProfile {
    pub fn ring(s0: f64, s1: f64, s2: f64, s3: f64, order: u32) -> Self {
        assert!(
            0.0 <= s0 && s0 <= s1 && s1 < s2 && s2 < s3,
            "ring knots must be ordered: {s0} {s1} {s2} {s3}"
        );
        RingProfile { s0, s1, s2, s3, order }
    }

    pub fn disc(s_plateau: f64, s_outer: f64, order: u32) -> Self {
        RingProfile { s0: 0.0, s1: 0.0, s2: s_plateau, s3: s_outer, order }
    }

    pub fn value(&self, s: f64) -> f64 {
        use crate::func::smoothstep;
        if s <= self.s0 {
            if self.s1 == 0.0 {
                1.0
            } else {
                0.0
            }
        } else if s < self.s1 {
            smoothstep(self.order, (s - self.s0) / (self.s1 - self.s0))
        } else if s <= self.s2 {
            1.0
        } else if s < self.s3 {
            1.0 - smoothstep(self.order, (s - self.s2) / (self.s3 - self.s2))
        } else {
            0.0
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        use crate::func::smoothstep_deriv;
        if s > self.s0 && s < self.s1 {
            let w = self.s1 - self.s0;
            smoothstep_deriv(self.order, (s - self.s0) / w) / w
        } else if s > self.s2 && s < self.s3 {
            let w = self.s3 - self.s2;
            -smoothstep_deriv(self.order, (s - self.s2) / w) / w
        } else {
            0.0
        }
    }

    pub fn support_outer(&self) -> f64 {
        self.s3
    }

    pub fn support_inner(&self) -> f64 {
        if self.s1 == 0.0 {
            0.0
        } else {
            self.s0
        }
    }
}

// ---------------------------------------------------------------------------
// Elliptic rotors
// ---------------------------------------------------------------------------

/// Closed-form localized symplectomorphism built from the flow of a
/// quadratic-form Hamiltonian: in the normalizing frame `w = J (p - center)`,
/// the map rotates each level circle `|w|^2 = s` rigidly by `angle * chi(s)`.
///
/// Because `|w|^2` is conserved, the map is exactly area-preserving, equals
/// the affine elliptic target wherever `chi = 1`, and is the identity
/// wherever `chi = 0`.
#[derive(Debug, Clone)]
pub struct EllipticRotor {
    center: Vec2,
    j: Mat2,
    j_inv: Mat2,
    angle: f64,
    profile: RingProfile,
}

impl EllipticRotor {
    /// Rotor realizing the elliptic linear map `m` about `center` on the
    /// profile plateau.
    pub fn for_linear(
        m: Mat2,
        center: Vec2,
        profile: RingProfile,
    ) -> Result<Self, SymplecticError> {
        let tr = m.trace();
        if tr.abs() >= 2.0 {
            return Err(SymplecticError::NotElliptic { trace_abs: tr.abs() });
        }
        let cos_phi = tr / 2.0;
        let mut sin_phi = (1.0 - cos_phi * cos_phi).sqrt();

        // N = (M - cos I)/sin squares to -I; q(v) = omega(v, N v) is the
        // invariant quadratic form. Pick the sin sign that makes it positive.
        let build_s = |sin_phi: f64| -> Mat2 {
            let n = m.sub(Mat2::diagonal(cos_phi, cos_phi)).scale(1.0 / sin_phi);
            Mat2::new(n.c, (n.d - n.a) / 2.0, (n.d - n.a) / 2.0, -n.b)
        };
        let mut s_form = build_s(sin_phi);
        if s_form.a <= 0.0 || s_form.det() <= 0.0 {
            sin_phi = -sin_phi;
            s_form = build_s(sin_phi);
        }
        if s_form.a <= 0.0 || s_form.det() <= 0.0 {
            return Err(SymplecticError::FrameConstruction(
                "invariant quadratic form is not definite".into(),
            ));
        }
        // Normalize to unit determinant, then Cholesky: S = J^T J, det J = 1.
        let scale = s_form.det().sqrt();
        let s_n = s_form.scale(1.0 / scale);
        let alpha = s_n.a;
        let beta = s_n.b;
        let gamma = s_n.d;
        let ra = alpha.sqrt();
        let j = Mat2::new(ra, beta / ra, 0.0, (gamma - beta * beta / alpha).sqrt());
        let j_inv = j.inverse().ok_or_else(|| {
            SymplecticError::FrameConstruction("frame matrix not invertible".into())
        })?;

        // In the J frame the target must be an honest rotation; read off its
        // angle so the plateau realizes M exactly.
        let r = j.mul(m).mul(j_inv);
        let ortho_defect = r.mul(r.transpose()).sub(Mat2::IDENTITY).max_abs();
        if ortho_defect > 1e-9 {
            return Err(SymplecticError::FrameConstruction(format!(
                "conjugated map is not orthogonal (defect {ortho_defect:.2e})"
            )));
        }
        let angle = r.c.atan2(r.a);
        Ok(EllipticRotor { center, j, j_inv, angle, profile })
    }

    /// Rotor realizing a full affine elliptic map about its fixed point.
    pub fn for_affine(g: Affine2, profile: RingProfile) -> Result<Self, SymplecticError> {
        let center = affine_fixed_point(g).ok_or(SymplecticError::NoFixedPoint)?;
        Self::for_linear(g.m, center, profile)
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn frame(&self) -> Mat2 {
        self.j
    }

    pub fn profile(&self) -> &RingProfile {
        &self.profile
    }

    /// Conserved radial-squared coordinate of `p`.
    pub fn s_of(&self, p: Vec2) -> f64 {
        self.j.apply(p - self.center).norm_sq()
    }

    fn rotate(&self, p: Vec2, sign: f64) -> Vec2 {
        let w = self.j.apply(p - self.center);
        let s = w.norm_sq();
        if s >= self.profile.s3 || (self.profile.s1 > 0.0 && s <= self.profile.s0) {
            return p;
        }
        let theta = sign * self.angle * self.profile.value(s);
        let (sn, cs) = theta.sin_cos();
        let wr = Vec2::new(cs * w.x - sn * w.y, sn * w.x + cs * w.y);
        self.center + self.j_inv.apply(wr)
    }

    pub fn eval(&self, p: Vec2) -> Vec2 {
        self.rotate(p, 1.0)
    }

    pub fn inverse(&self, p: Vec2) -> Vec2 {
        self.rotate(p, -1.0)
    }

    pub fn diff(&self, p: Vec2) -> Mat2 {
        let w = self.j.apply(p - self.center);
        let s = w.norm_sq();
        if s >= self.profile.s3 || (self.profile.s1 > 0.0 && s <= self.profile.s0) {
            return Mat2::IDENTITY;
        }
        let theta = self.angle * self.profile.value(s);
        let dtheta = self.angle * self.profile.deriv(s);
        let r = Mat2::rotation(theta);
        // d/dw [R(theta(|w|^2)) w] = R + theta'(s) R' w (2 w^T)
        let rp = Mat2::rotation(theta + std::f64::consts::FRAC_PI_2);
        let rw = rp.apply(w);
        let outer = Mat2::new(rw.x * w.x, rw.x * w.y, rw.y * w.x, rw.y * w.y);
        let dw = r.add(outer.scale(2.0 * dtheta));
        self.j_inv.mul(dw).mul(self.j)
    }
}

// ---------------------------------------------------------------------------
// Generating-function saddle bumps
// ---------------------------------------------------------------------------

/// Localized exact-symplectic patch that equals the linear saddle
/// `diag(mult, 1/mult)` (in an orthogonal local frame) on the plateau of its
/// cutoff and the identity outside its support.
///
/// Implemented as `substeps` implicit steps with type-2 generating function
/// `W(x, Y) = kappa x Y chi(x^2 + Y^2)`, `1 + kappa = mult^(1/substeps)`;
/// each step is exactly symplectic regardless of the cutoff shape.
#[derive(Debug, Clone)]
pub struct SaddleBump {
    center: Vec2,
    /// Orthogonal frame, columns = (first axis, second axis).
    frame: Mat2,
    frame_t: Mat2,
    kappa: f64,
    substeps: u32,
    chi: PlateauProfile,
}

impl SaddleBump {
    pub fn new(
        center: Vec2,
        frame: Mat2,
        mult: f64,
        substeps: u32,
        chi: PlateauProfile,
    ) -> Self {
        assert!(mult > 0.0 && substeps >= 1);
        let kappa = mult.powf(1.0 / substeps as f64) - 1.0;
        SaddleBump { center, frame, frame_t: frame.transpose(), kappa, substeps, chi }
    }

    pub fn support_radius_sq(&self) -> f64 {
        self.chi.s_outer
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    fn w_x(&self, x: f64, y: f64) -> f64 {
        let s = x * x + y * y;
        self.kappa * y * (self.chi.value(s) + 2.0 * x * x * self.chi.deriv(s))
    }

    fn w_y(&self, x: f64, y: f64) -> f64 {
        let s = x * x + y * y;
        self.kappa * x * (self.chi.value(s) + 2.0 * y * y * self.chi.deriv(s))
    }

    fn w_xx(&self, x: f64, y: f64) -> f64 {
        let s = x * x + y * y;
        self.kappa * y * (6.0 * x * self.chi.deriv(s) + 4.0 * x * x * x * self.chi.deriv2(s))
    }

    fn w_yy(&self, x: f64, y: f64) -> f64 {
        let s = x * x + y * y;
        self.kappa * x * (6.0 * y * self.chi.deriv(s) + 4.0 * y * y * y * self.chi.deriv2(s))
    }

    fn w_xy(&self, x: f64, y: f64) -> f64 {
        let s = x * x + y * y;
        self.kappa
            * (self.chi.value(s)
                + 2.0 * (x * x + y * y) * self.chi.deriv(s)
                + 4.0 * x * x * y * y * self.chi.deriv2(s))
    }

    /// One forward substep in local coordinates.
    fn substep(&self, p: Vec2) -> Vec2 {
        // Solve y = Y + W_x(x, Y) for Y.
        let x = p.x;
        let mut yy = p.y;
        for _ in 0..64 {
            let g = yy + self.w_x(x, yy) - p.y;
            if g == 0.0 {
                break;
            }
            let dg = 1.0 + self.w_xy(x, yy);
            let step = g / dg;
            yy -= step;
            if step.abs() <= 1e-16 * (1.0 + yy.abs()) {
                break;
            }
        }
        Vec2::new(x + self.w_y(x, yy), yy)
    }

    fn substep_inv(&self, p: Vec2) -> Vec2 {
        // Solve X = x + W_Y(x, Y) for x, then y = Y + W_x(x, Y).
        let yy = p.y;
        let mut x = p.x;
        for _ in 0..64 {
            let g = x + self.w_y(x, yy) - p.x;
            if g == 0.0 {
                break;
            }
            let dg = 1.0 + self.w_xy(x, yy);
            let step = g / dg;
            x -= step;
            if step.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        Vec2::new(x, yy + self.w_x(x, yy))
    }

    fn substep_diff(&self, p: Vec2) -> (Vec2, Mat2) {
        let out = self.substep(p);
        let (x, yy) = (p.x, out.y);
        let wxx = self.w_xx(x, yy);
        let wxy = self.w_xy(x, yy);
        let wyy = self.w_yy(x, yy);
        let dy_dx = -wxx / (1.0 + wxy);
        let dy_dy = 1.0 / (1.0 + wxy);
        let dx_dx = 1.0 + wxy + wyy * dy_dx;
        let dx_dy = wyy * dy_dy;
        (out, Mat2::new(dx_dx, dx_dy, dy_dx, dy_dy))
    }

    /// Evaluate with a local-offset accessor so callers control torus wrap.
    pub fn eval_offset(&self, offset: Vec2) -> Vec2 {
        let mut u = self.frame_t.apply(offset);
        if u.norm_sq() >= self.chi.s_outer {
            return offset;
        }
        for _ in 0..self.substeps {
            u = self.substep(u);
        }
        self.frame.apply(u)
    }

    pub fn inverse_offset(&self, offset: Vec2) -> Vec2 {
        let mut u = self.frame_t.apply(offset);
        if u.norm_sq() >= self.chi.s_outer {
            return offset;
        }
        for _ in 0..self.substeps {
            u = self.substep_inv(u);
        }
        self.frame.apply(u)
    }

    pub fn diff_offset(&self, offset: Vec2) -> Mat2 {
        let mut u = self.frame_t.apply(offset);
        if u.norm_sq() >= self.chi.s_outer {
            return Mat2::IDENTITY;
        }
        let mut jac = Mat2::IDENTITY;
        for _ in 0..self.substeps {
            let (next, dj) = self.substep_diff(u);
            jac = dj.mul(jac);
            u = next;
        }
        self.frame.mul(jac).mul(self.frame_t)
    }

    pub fn eval(&self, p: Vec2) -> Vec2 {
        self.center + self.eval_offset(p - self.center)
    }

    pub fn inverse(&self, p: Vec2) -> Vec2 {
        self.center + self.inverse_offset(p - self.center)
    }

    pub fn diff(&self, p: Vec2) -> Mat2 {
        self.diff_offset(p - self.center)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_jacobian(f: impl Fn(Vec2) -> Vec2, p: Vec2, h: f64) -> Mat2 {
        let fx1 = f(Vec2::new(p.x + h, p.y));
        let fx0 = f(Vec2::new(p.x - h, p.y));
        let fy1 = f(Vec2::new(p.x, p.y + h));
        let fy0 = f(Vec2::new(p.x, p.y - h));
        Mat2::new(
            (fx1.x - fx0.x) / (2.0 * h),
            (fy1.x - fy0.x) / (2.0 * h),
            (fx1.y - fx0.y) / (2.0 * h),
            (fy1.y - fy0.y) / (2.0 * h),
        )
    }

    #[test]
    fn rotor_plateau_matches_affine_target() {
        // Elliptic map: rotation-like with shear.
        let m = Mat2::new(0.2, 1.1, -0.8, 0.6); // trace 0.8, det 0.2*0.6+0.88=1.0
        assert_relative_eq!(m.det(), 1.0, epsilon = 1e-12);
        let g = Affine2::new(m, Vec2::new(0.3, -0.1));
        let rotor = EllipticRotor::for_affine(g, RingProfile::disc(4.0, 9.0, 3)).unwrap();
        let c = rotor.center();
        // Fixed point consistency.
        let gc = g.apply(c);
        assert_relative_eq!(gc.x, c.x, epsilon = 1e-12);
        assert_relative_eq!(gc.y, c.y, epsilon = 1e-12);
        // Points with s <= plateau map by g exactly.
        for &(dx, dy) in &[(0.1, 0.0), (0.0, 0.2), (-0.15, 0.1), (0.2, -0.2)] {
            let p = c + Vec2::new(dx, dy);
            if rotor.s_of(p) < 4.0 {
                let a = rotor.eval(p);
                let b = g.apply(p);
                assert_relative_eq!(a.x, b.x, epsilon = 1e-12);
                assert_relative_eq!(a.y, b.y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rotor_determinant_and_inverse() {
        let m = Mat2::new(0.2, 1.1, -0.8, 0.6);
        let rotor =
            EllipticRotor::for_linear(m, Vec2::new(0.0, 0.0), RingProfile::ring(0.5, 1.0, 2.0, 4.0, 3))
                .unwrap();
        for i in 0..200 {
            let t = i as f64 * 0.173;
            let p = Vec2::new(2.3 * t.sin(), 1.7 * (1.3 * t).cos());
            let d = rotor.diff(p);
            assert_relative_eq!(d.det(), 1.0, epsilon = 1e-11);
            let q = rotor.inverse(rotor.eval(p));
            assert_relative_eq!(q.x, p.x, epsilon = 1e-12);
            assert_relative_eq!(q.y, p.y, epsilon = 1e-12);
            // s is conserved.
            assert_relative_eq!(rotor.s_of(rotor.eval(p)), rotor.s_of(p), epsilon = 1e-11);
        }
    }

    #[test]
    fn rotor_differential_matches_fd() {
        let m = Mat2::new(0.2, 1.1, -0.8, 0.6);
        let rotor =
            EllipticRotor::for_linear(m, Vec2::ZERO, RingProfile::ring(0.5, 1.0, 2.0, 4.0, 3)).unwrap();
        for i in 0..40 {
            let t = i as f64 * 0.37;
            let p = Vec2::new(1.9 * t.sin(), 1.4 * (0.7 * t).cos());
            let fd = fd_jacobian(|q| rotor.eval(q), p, 1e-6);
            let an = rotor.diff(p);
            assert!(an.sub(fd).max_abs() < 2e-6, "at {p:?}: {an:?} vs {fd:?}");
        }
    }

    #[test]
    fn saddle_bump_plateau_and_identity() {
        let mult = 0.4; // contract first axis by 0.4, expand second by 2.5
        let bump = SaddleBump::new(
            Vec2::ZERO,
            Mat2::IDENTITY,
            mult,
            12,
            PlateauProfile::new(0.06, 0.25, 3),
        );
        // Deep plateau point: orbit of substeps stays inside plateau.
        let p = Vec2::new(0.05, 0.03);
        let out = bump.eval(p);
        assert_relative_eq!(out.x, mult * p.x, epsilon = 1e-12);
        assert_relative_eq!(out.y, p.y / mult, epsilon = 1e-12);
        // Identity outside support, bit-exact.
        let q = Vec2::new(0.6, 0.4);
        assert_eq!(bump.eval(q), q);
        assert_eq!(bump.diff(q), Mat2::IDENTITY);
    }

    #[test]
    fn saddle_bump_symplectic_and_invertible() {
        let bump = SaddleBump::new(
            Vec2::new(0.2, -0.1),
            Mat2::rotation(0.4),
            0.382,
            12,
            PlateauProfile::new(0.02, 0.16, 3),
        );
        for i in 0..300 {
            let t = i as f64 * 0.0531;
            let p = Vec2::new(0.2 + 0.45 * t.sin(), -0.1 + 0.45 * (1.7 * t).cos());
            let d = bump.diff(p);
            assert_relative_eq!(d.det(), 1.0, epsilon = 1e-10);
            let back = bump.inverse(bump.eval(p));
            assert_relative_eq!(back.x, p.x, epsilon = 1e-11);
            assert_relative_eq!(back.y, p.y, epsilon = 1e-11);
        }
    }

    #[test]
    fn saddle_bump_differential_matches_fd() {
        let bump = SaddleBump::new(
            Vec2::ZERO,
            Mat2::rotation(-0.3),
            0.5,
            8,
            PlateauProfile::new(0.02, 0.2, 3),
        );
        for i in 0..40 {
            let t = i as f64 * 0.29;
            let p = Vec2::new(0.4 * t.sin(), 0.4 * (2.1 * t).cos());
            let fd = fd_jacobian(|q| bump.eval(q), p, 1e-6);
            let an = bump.diff(p);
            assert!(an.sub(fd).max_abs() < 5e-6, "at {p:?}");
        }
    }

    #[test]
    fn bump_is_odd_about_center() {
        let bump = SaddleBump::new(
            Vec2::ZERO,
            Mat2::rotation(0.7),
            0.4,
            10,
            PlateauProfile::new(0.02, 0.2, 3),
        );
        for i in 0..50 {
            let t = i as f64 * 0.12;
            let p = Vec2::new(0.4 * t.sin(), 0.35 * (1.1 * t).cos());
            let a = bump.eval(p);
            let b = bump.eval(-p);
            assert_relative_eq!(a.x, -b.x, epsilon = 1e-12);
            assert_relative_eq!(a.y, -b.y, epsilon = 1e-12);
        }
    }
}
