//! One-variable real functions used as shear and kick profiles: polynomials,
//! trigonometric polynomials, smooth compactly supported bumps, and truncated
//! Fourier series with exact derivatives.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Serializable description of how a [`ScalarFn`] was built, for report dumps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum FnDescriptor {
    Zero,
    /// Power-basis coefficients c0 + c1 x + c2 x^2 + ...
    Poly(Vec<f64>),
    /// Periodic Fourier data.
    Fourier { period: f64, cos: Vec<f64>, sin: Vec<f64> },
    Opaque(String),
}

/// A scalar function with an exact first derivative.
///
/// Built from closed-form constructors so both value and slope are analytic;
/// combinators wire the product/chain rules.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    desc: FnDescriptor,
}

impl std::fmt::Debug for ScalarFn {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fm, "ScalarFn({:?})", self.desc)
    }
}

impl ScalarFn {
    pub fn from_parts(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        desc: FnDescriptor,
    ) -> Self {
        ScalarFn { f: Arc::new(f), df: Arc::new(df), desc }
    }

    pub fn zero() -> Self {
        ScalarFn::from_parts(|_| 0.0, |_| 0.0, FnDescriptor::Zero)
    }

    pub fn constant(c: f64) -> Self {
        ScalarFn::from_parts(move |_| c, |_| 0.0, FnDescriptor::Poly(vec![c]))
    }

    /// Power-basis polynomial with coefficients `[c0, c1, ...]`.
    pub fn poly(coeffs: Vec<f64>) -> Self {
        let c = coeffs.clone();
        let d: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &ci)| ci * i as f64)
            .collect();
        ScalarFn::from_parts(
            move |x| horner(&c, x),
            move |x| horner(&d, x),
            FnDescriptor::Poly(coeffs),
        )
    }

    /// `amp * sin(omega x + phase)`.
    pub fn sine(amp: f64, omega: f64, phase: f64) -> Self {
        ScalarFn::from_parts(
            move |x| amp * (omega * x + phase).sin(),
            move |x| amp * omega * (omega * x + phase).cos(),
            FnDescriptor::Opaque(format!("{amp}*sin({omega}x+{phase})")),
        )
    }

    /// Trigonometric polynomial on period `T`:
    /// `sum_k cos[k] cos(2 pi k x / T) + sin[k] sin(2 pi k x / T)` (k from 0).
    pub fn trig_poly(period: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        PeriodicFunction::new(period, cos, sin).into_scalar_fn()
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    pub fn descriptor(&self) -> &FnDescriptor {
        &self.desc
    }

    pub fn scale(&self, s: f64) -> ScalarFn {
        let f = self.f.clone();
        let df = self.df.clone();
        let desc = match &self.desc {
            FnDescriptor::Poly(c) => FnDescriptor::Poly(c.iter().map(|v| v * s).collect()),
            FnDescriptor::Fourier { period, cos, sin } => FnDescriptor::Fourier {
                period: *period,
                cos: cos.iter().map(|v| v * s).collect(),
                sin: sin.iter().map(|v| v * s).collect(),
            },
            other => FnDescriptor::Opaque(format!("{s}*{other:?}")),
        };
        ScalarFn { f: Arc::new(move |x| s * f(x)), df: Arc::new(move |x| s * df(x)), desc }
    }

    pub fn add(&self, other: &ScalarFn) -> ScalarFn {
        let (f1, d1) = (self.f.clone(), self.df.clone());
        let (f2, d2) = (other.f.clone(), other.df.clone());
        ScalarFn {
            f: Arc::new(move |x| f1(x) + f2(x)),
            df: Arc::new(move |x| d1(x) + d2(x)),
            desc: FnDescriptor::Opaque("sum".into()),
        }
    }

    pub fn product(&self, other: &ScalarFn) -> ScalarFn {
        let (f1, d1) = (self.f.clone(), self.df.clone());
        let (f2, d2) = (other.f.clone(), other.df.clone());
        let f1b = f1.clone();
        let f2b = f2.clone();
        ScalarFn {
            f: Arc::new(move |x| f1(x) * f2(x)),
            df: Arc::new(move |x| d1(x) * f2b(x) + f1b(x) * d2(x)),
            desc: FnDescriptor::Opaque("product".into()),
        }
    }

    /// `self((x - shift) / scale)`.
    pub fn rescale_arg(&self, shift: f64, scale: f64) -> ScalarFn {
        let (f, df) = (self.f.clone(), self.df.clone());
        ScalarFn {
            f: Arc::new(move |x| f((x - shift) / scale)),
            df: Arc::new(move |x| df((x - shift) / scale) / scale),
            desc: FnDescriptor::Opaque("rescaled".into()),
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Generalized smoothstep S_N on [0,1]: polynomial of degree 2N+1 with
/// S(0)=0, S(1)=1 and N vanishing derivatives at both ends (class C^N).
pub fn smoothstep(order: u32, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let n = order as i64;
    let mut sum = 0.0;
    for k in 0..=n {
        sum += binomial(n + k, k) * binomial(2 * n + 1, n - k) * (-s).powi(k as i32);
    }
    s.powi((n + 1) as i32) * sum
}

/// Derivative of [`smoothstep`] with respect to `s`.
pub fn smoothstep_deriv(order: u32, s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let n = order as i64;
    let mut val = 0.0;
    for k in 0..=n {
        let c = binomial(n + k, k) * binomial(2 * n + 1, n - k) * (-1.0f64).powi(k as i32);
        let p = (n + 1 + k) as i32;
        val += c * p as f64 * s.powi(p - 1);
    }
    val
}

/// Second derivative of [`smoothstep`].
pub fn smoothstep_deriv2(order: u32, s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let n = order as i64;
    let mut val = 0.0;
    for k in 0..=n {
        let c = binomial(n + k, k) * binomial(2 * n + 1, n - k) * (-1.0f64).powi(k as i32);
        let p = (n + 1 + k) as i32;
        if p >= 2 {
            val += c * (p as f64) * (p - 1) as f64 * s.powi(p - 2);
        }
    }
    val
}

fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Smooth plateau profile on a radial-squared variable: 1 on [0, s_plateau],
/// falling to 0 at s_outer, with C^order joins.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlateauProfile {
    pub s_plateau: f64,
    pub s_outer: f64,
    pub order: u32,
}

impl PlateauProfile {
    pub fn new(s_plateau: f64, s_outer: f64, order: u32) -> Self {
        assert!(s_plateau >= 0.0 && s_outer > s_plateau, "degenerate plateau profile");
        PlateauProfile { s_plateau, s_outer, order }
    }

    pub fn value(&self, s: f64) -> f64 {
        if s <= self.s_plateau {
            1.0
        } else if s >= self.s_outer {
            0.0
        } else {
            let u = (s - self.s_plateau) / (self.s_outer - self.s_plateau);
            1.0 - smoothstep(self.order, u)
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        if s <= self.s_plateau || s >= self.s_outer {
            0.0
        } else {
            let w = self.s_outer - self.s_plateau;
            -smoothstep_deriv(self.order, (s - self.s_plateau) / w) / w
        }
    }

    pub fn deriv2(&self, s: f64) -> f64 {
        if s <= self.s_plateau || s >= self.s_outer {
            0.0
        } else {
            let w = self.s_outer - self.s_plateau;
            -smoothstep_deriv2(self.order, (s - self.s_plateau) / w) / (w * w)
        }
    }
}

/// Smooth window equal to 1 on [lo+rise, hi-rise], 0 outside [lo, hi].
pub fn smooth_window(lo: f64, hi: f64, rise: f64, order: u32) -> ScalarFn {
    assert!(hi - lo > 2.0 * rise, "window too narrow for its rise width");
    let f = move |x: f64| -> f64 {
        if x <= lo || x >= hi {
            0.0
        } else if x < lo + rise {
            smoothstep(order, (x - lo) / rise)
        } else if x > hi - rise {
            1.0 - smoothstep(order, (x - hi + rise) / rise)
        } else {
            1.0
        }
    };
    let df = move |x: f64| -> f64 {
        if x <= lo || x >= hi {
            0.0
        } else if x < lo + rise {
            smoothstep_deriv(order, (x - lo) / rise) / rise
        } else if x > hi - rise {
            -smoothstep_deriv(order, (x - hi + rise) / rise) / rise
        } else {
            0.0
        }
    };
    ScalarFn::from_parts(f, df, FnDescriptor::Opaque(format!("window[{lo},{hi}]")))
}

/// A real tau-periodic function as a truncated Fourier series
/// `c0 + sum_{k=1}^K a_k cos(2 pi k t / tau) + b_k sin(2 pi k t / tau)`,
/// with exact derivatives of every order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PeriodicFunction {
    period: f64,
    /// cos coefficients, index 0 is the mean term.
    cos: Vec<f64>,
    /// sin coefficients, index 0 unused (kept for alignment).
    sin: Vec<f64>,
    /// Declared smoothness budget; bookkeeping for staged constructions.
    pub smoothness_budget: Option<i32>,
}

impl PeriodicFunction {
    pub fn new(period: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        assert!(period > 0.0, "period must be positive");
        let n = cos.len().max(sin.len());
        let mut c = cos;
        let mut s = sin;
        c.resize(n, 0.0);
        s.resize(n, 0.0);
        PeriodicFunction { period, cos: c, sin: s, smoothness_budget: None }
    }

    pub fn zero(period: f64, order: usize) -> Self {
        PeriodicFunction::new(period, vec![0.0; order + 1], vec![0.0; order + 1])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn order(&self) -> usize {
        self.cos.len().saturating_sub(1)
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    pub fn mean(&self) -> f64 {
        self.cos[0]
    }

    pub fn is_zero_mean(&self, tol: f64) -> bool {
        self.cos[0].abs() <= tol
    }

    pub fn set_mean(&mut self, mean: f64) {
        self.cos[0] = mean;
    }

    /// Value of the n-th derivative at `t` (n = 0 is the function itself).
    pub fn deriv_n(&self, t: f64, n: u32) -> f64 {
        let omega = 2.0 * PI / self.period;
        let mut acc = if n == 0 { self.cos[0] } else { 0.0 };
        for k in 1..self.cos.len() {
            let w = omega * k as f64;
            let arg = w * t;
            let (a, b) = (self.cos[k], self.sin[k]);
            // d/dt rotates the (cos, sin) phase by pi/2 and scales by w.
            let (ca, sa) = match n % 4 {
                0 => (a, b),
                1 => (b, -a),
                2 => (-a, -b),
                _ => (-b, a),
            };
            let scale = w.powi(n as i32);
            acc += scale * (ca * arg.cos() + sa * arg.sin());
        }
        acc
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.deriv_n(t, 0)
    }

    /// Sampled sup norm of the n-th derivative over one period.
    pub fn deriv_sup_norm(&self, n: u32, samples: usize) -> f64 {
        let mut sup = 0.0f64;
        for i in 0..samples {
            let t = self.period * i as f64 / samples as f64;
            sup = sup.max(self.deriv_n(t, n).abs());
        }
        sup
    }

    /// Project grid samples (uniform over one period) onto a truncated
    /// Fourier series of the given order.
    pub fn project_from_samples(period: f64, values: &[f64], order: usize) -> Self {
        let n = values.len();
        assert!(n >= 2 * order + 1, "not enough samples for the requested order");
        let mut cos = vec![0.0; order + 1];
        let mut sin = vec![0.0; order + 1];
        for (j, &v) in values.iter().enumerate() {
            let theta = 2.0 * PI * j as f64 / n as f64;
            cos[0] += v;
            for k in 1..=order {
                let arg = theta * k as f64;
                cos[k] += v * arg.cos();
                sin[k] += v * arg.sin();
            }
        }
        cos[0] /= n as f64;
        for k in 1..=order {
            cos[k] *= 2.0 / n as f64;
            sin[k] *= 2.0 / n as f64;
        }
        PeriodicFunction::new(period, cos, sin)
    }

    pub fn scale(&self, s: f64) -> PeriodicFunction {
        let mut out = self.clone();
        for c in &mut out.cos {
            *c *= s;
        }
        for c in &mut out.sin {
            *c *= s;
        }
        out
    }

    pub fn add(&self, other: &PeriodicFunction) -> PeriodicFunction {
        assert!((self.period - other.period).abs() < 1e-12 * self.period);
        let n = self.cos.len().max(other.cos.len());
        let mut cos = vec![0.0; n];
        let mut sin = vec![0.0; n];
        for k in 0..n {
            cos[k] = self.cos.get(k).copied().unwrap_or(0.0) + other.cos.get(k).copied().unwrap_or(0.0);
            sin[k] = self.sin.get(k).copied().unwrap_or(0.0) + other.sin.get(k).copied().unwrap_or(0.0);
        }
        let mut out = PeriodicFunction::new(self.period, cos, sin);
        out.smoothness_budget = match (self.smoothness_budget, other.smoothness_budget) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        out
    }

    pub fn into_scalar_fn(self) -> ScalarFn {
        let desc = FnDescriptor::Fourier {
            period: self.period,
            cos: self.cos.clone(),
            sin: self.sin.clone(),
        };
        let g = self.clone();
        let g2 = self;
        ScalarFn::from_parts(move |t| g.deriv_n(t, 0), move |t| g2.deriv_n(t, 1), desc)
    }
}

/// Project uniform samples over `[lo, lo + period)` onto a truncated
/// Fourier series evaluated in the global variable (phase preserved), so
/// that `result.eval(lo + i period / n) ~= values[i]`.
pub fn project_from_samples_at(
    period: f64,
    lo: f64,
    values: &[f64],
    order: usize,
) -> PeriodicFunction {
    let base = PeriodicFunction::project_from_samples(period, values, order);
    // Rotate coefficients by the phase -2 pi k lo / period.
    let mut cos = base.cos.clone();
    let mut sin = base.sin.clone();
    for k in 1..cos.len() {
        let phase = 2.0 * PI * k as f64 * lo / period;
        let (s, c) = phase.sin_cos();
        let (a, b) = (base.cos[k], base.sin[k]);
        // a cos(w(t - lo)) + b sin(w(t - lo)) expanded in cos(wt), sin(wt).
        cos[k] = a * c - b * s;
        sin[k] = a * s + b * c;
    }
    PeriodicFunction::new(period, cos, sin)
}

/// Max over derivative orders 1..=r of the sampled sup norm of D^i psi.
///
/// Order zero is deliberately excluded: constants have norm zero.
pub fn cr_norm(psi: &PeriodicFunction, r: u32, samples: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 1..=r {
        worst = worst.max(psi.deriv_sup_norm(i, samples));
    }
    worst
}
