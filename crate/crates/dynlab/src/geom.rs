//! Small fixed-size linear algebra for planar dynamics: vectors, 2x2
//! matrices, affine maps, and torus arithmetic.

use serde::{Deserialize, Serialize};

/// A point or tangent vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Cross product z-component (signed parallelogram area).
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Row-major 2x2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn diagonal(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    /// Rotation by `theta` (counter-clockwise).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// Matrix with the given column vectors.
    pub fn from_columns(u: Vec2, v: Vec2) -> Self {
        Mat2::new(u.x, v.x, u.y, v.y)
    }

    pub fn det(self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    pub fn scale(self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }

    pub fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }

    pub fn inverse(self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Solve `self * x = rhs`.
    pub fn solve(self, rhs: Vec2) -> Option<Vec2> {
        self.inverse().map(|inv| inv.apply(rhs))
    }

    /// Max absolute entry.
    pub fn max_abs(self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Real eigenvalues sorted by absolute value descending, if they exist.
    ///
    /// Uses the trace/determinant quadratic; returns `None` for complex pairs.
    pub fn real_eigenvalues(self) -> Option<(f64, f64)> {
        let t = self.trace();
        let d = self.det();
        let disc = t * t - 4.0 * d;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        // Stable quadratic roots.
        let l1 = if t >= 0.0 { (t + s) / 2.0 } else { (t - s) / 2.0 };
        let l2 = if l1 != 0.0 { d / l1 } else { t - l1 };
        if l1.abs() >= l2.abs() {
            Some((l1, l2))
        } else {
            Some((l2, l1))
        }
    }

    /// An eigenvector for the given eigenvalue, unit length.
    pub fn eigenvector(self, lambda: f64) -> Vec2 {
        // (A - lambda I) v = 0: pick the larger row for stability.
        let r1 = Vec2::new(self.a - lambda, self.b);
        let r2 = Vec2::new(self.c, self.d - lambda);
        let v = if r1.norm_sq() >= r2.norm_sq() {
            Vec2::new(-r1.y, r1.x)
        } else {
            Vec2::new(-r2.y, r2.x)
        };
        if v.norm_sq() == 0.0 {
            // Any vector is an eigenvector (multiple of identity).
            Vec2::new(1.0, 0.0)
        } else {
            v.normalized()
        }
    }
}

/// Affine map `p -> m p + t` of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub m: Mat2,
    pub t: Vec2,
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { m: Mat2::IDENTITY, t: Vec2::ZERO };

    pub fn new(m: Mat2, t: Vec2) -> Self {
        Affine2 { m, t }
    }

    pub fn translation(t: Vec2) -> Self {
        Affine2 { m: Mat2::IDENTITY, t }
    }

    /// Affine map with linear part `m` fixing the point `center`.
    pub fn about_point(m: Mat2, center: Vec2) -> Self {
        Affine2 { m, t: center - m.apply(center) }
    }

    pub fn apply(self, p: Vec2) -> Vec2 {
        self.m.apply(p) + self.t
    }

    /// `self` after `other`: (self ∘ other)(p) = self(other(p)).
    pub fn compose(self, other: Affine2) -> Affine2 {
        Affine2 { m: self.m.mul(other.m), t: self.m.apply(other.t) + self.t }
    }

    pub fn inverse(self) -> Option<Affine2> {
        let m_inv = self.m.inverse()?;
        Some(Affine2 { m: m_inv, t: -m_inv.apply(self.t) })
    }

    pub fn det(self) -> f64 {
        self.m.det()
    }
}

/// Reduce a coordinate to [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    // x.floor() of a value like -1e-18 yields r == 1.0; canonicalize.
    if r >= 1.0 {
        r - 1.0
    } else {
        r
    }
}

/// Reduce a point to the fundamental domain [0,1)^2 of the torus.
pub fn wrap_torus(p: Vec2) -> Vec2 {
    Vec2::new(wrap_unit(p.x), wrap_unit(p.y))
}

/// Signed displacement `b - a` on the torus, each component in [-1/2, 1/2).
pub fn torus_displacement(a: Vec2, b: Vec2) -> Vec2 {
    fn comp(a: f64, b: f64) -> f64 {
        let mut d = wrap_unit(b - a);
        if d >= 0.5 {
            d -= 1.0;
        }
        d
    }
    Vec2::new(comp(a.x, b.x), comp(a.y, b.y))
}

/// Distance between two torus points in the nearest-image metric.
pub fn torus_distance(a: Vec2, b: Vec2) -> f64 {
    torus_displacement(a, b).norm()
}

/// Wrap only when the domain is the torus.
pub fn wrap_torus_if(domain: crate::maps::Domain, p: Vec2) -> Vec2 {
    match domain {
        crate::maps::Domain::Torus => wrap_torus(p),
        _ => p,
    }
}
