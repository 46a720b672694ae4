use std::cmp::Ordering;

use crate::geometry::Pixel;

/// A minutia location `(theta, a, b)` on finger `theta` (1-based), with an
/// optional extractor quality in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub finger: u8,
    pub a: i32,
    pub b: i32,
    pub quality: Option<f64>,
}

impl Minutia {
    pub const fn new(finger: u8, a: i32, b: i32) -> Self {
        Self {
            finger,
            a,
            b,
            quality: None,
        }
    }

    pub fn with_quality(mut self, q: f64) -> Self {
        self.quality = Some(q);
        self
    }

    pub fn pixel(&self) -> Pixel {
        (self.a, self.b)
    }

    /// Lexicographic ordering key `(theta, a, b)`.
    pub fn key(&self) -> (u8, i32, i32) {
        (self.finger, self.a, self.b)
    }

    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}
