//! Seeded randomness and small shared report plumbing.
//!
//! Every sampling operation takes an explicit 64-bit seed and records it in
//! its report so runs are reproducible byte for byte.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec2;

/// The one RNG used everywhere: ChaCha8 keyed by a caller-supplied seed.
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn gen_range(&mut self, range: std::ops::Range<f64>) -> f64 {
        self.0.gen_range(range)
    }

    pub fn gen_unit(&mut self) -> f64 {
        self.0.gen_range(0.0..1.0)
    }

    /// Uniform point in the axis-aligned box [lo, hi).
    pub fn gen_point(&mut self, lo: Vec2, hi: Vec2) -> Vec2 {
        Vec2::new(self.0.gen_range(lo.x..hi.x), self.0.gen_range(lo.y..hi.y))
    }

    /// Uniform point in the closed unit disc (rejection sampling).
    pub fn gen_unit_disc(&mut self) -> Vec2 {
        loop {
            let p = Vec2::new(self.0.gen_range(-1.0..1.0), self.0.gen_range(-1.0..1.0));
            if p.norm_sq() <= 1.0 {
                return p;
            }
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Seeded ensemble of uniform points in a box.
pub fn uniform_ensemble(n: usize, seed: u64, lo: Vec2, hi: Vec2) -> Vec<Vec2> {
    let mut rng = SeededRng::new(seed);
    (0..n).map(|_| rng.gen_point(lo, hi)).collect()
}

/// Format a float for CSV bodies: shortest representation that round-trips,
/// so reruns are byte-identical.
pub fn csv_f64(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}
