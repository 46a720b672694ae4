//! Arithmetic over a prime field `F_q` and polynomials of bounded length.
//!
//! Field elements are plain `u64` values in `[0, q)`. The modulus is limited to
//! `q < 2^32` so that every product fits in a `u64` without widening.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not a prime below 2^32")]
    NotPrime(u64),
    #[error("two interpolation points share the abscissa {0}")]
    DuplicateAbscissa(u64),
    #[error("expected {expected} interpolation points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("coefficient {0} is outside the field")]
    OutOfRange(u64),
}

/// The prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q >= 1 << 32 || !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        Ok(Self { q })
    }

    /// Smallest prime field with at least `n` elements.
    pub fn at_least(n: u64) -> Self {
        Self {
            q: next_prime(n.max(2)),
        }
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x % self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        a * b % self.q
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.q;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem. `a` must be nonzero.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(!a.is_multiple_of(self.q), "inverse of zero");
        self.pow(a, self.q - 2)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.q)
    }

    /// Uniform element different from `avoid`.
    pub fn random_except<R: Rng + ?Sized>(&self, avoid: u64, rng: &mut R) -> u64 {
        let v = rng.random_range(0..self.q - 1);
        if v >= avoid {
            v + 1
        } else {
            v
        }
    }

    /// Number of bytes needed to hold any element.
    pub fn element_bytes(&self) -> usize {
        let bits = 64 - self.q.leading_zeros() as usize;
        bits.div_ceil(8)
    }
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Polynomial `e_0 + e_1 z + ... + e_{k-1} z^{k-1}` with exactly `k` stored
/// coefficients; trailing zeros are kept.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldPoly {
    coeffs: Vec<u64>,
    field: PrimeField,
}

impl FieldPoly {
    pub fn new(coeffs: Vec<u64>, field: PrimeField) -> Result<Self, FieldError> {
        if let Some(&c) = coeffs.iter().find(|&&c| c >= field.q) {
            return Err(FieldError::OutOfRange(c));
        }
        Ok(Self { coeffs, field })
    }

    pub fn random<R: Rng + ?Sized>(k: usize, field: PrimeField, rng: &mut R) -> Self {
        let coeffs = (0..k).map(|_| field.random(rng)).collect();
        Self { coeffs, field }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    /// The length `k` (one more than the maximal degree).
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation.
    pub fn eval(&self, x: u64) -> u64 {
        let f = &self.field;
        let x = f.reduce(x);
        self.coeffs
            .iter()
            .rev()
            .fold(0, |acc, &c| f.add(f.mul(acc, x), c))
    }
}

/// Unique polynomial of length `k` through exactly `k` points with distinct
/// abscissae.
pub fn lagrange_interpolate(
    points: &[(u64, u64)],
    k: usize,
    field: PrimeField,
) -> Result<FieldPoly, FieldError> {
    if points.len() != k {
        return Err(FieldError::PointCount {
            expected: k,
            got: points.len(),
        });
    }
    let f = field;
    let xs: Vec<u64> = points.iter().map(|&(x, _)| f.reduce(x)).collect();
    for i in 0..k {
        for j in 0..i {
            if xs[i] == xs[j] {
                return Err(FieldError::DuplicateAbscissa(xs[i]));
            }
        }
    }
    // master(z) = prod (z - x_j), low degree first, length k + 1
    let mut master = vec![0u64; k + 1];
    master[0] = 1;
    for (deg, &x) in xs.iter().enumerate() {
        let nx = f.neg(x);
        for i in (0..=deg + 1).rev() {
            let hi = if i > 0 { master[i - 1] } else { 0 };
            master[i] = f.add(hi, f.mul(master[i], nx));
        }
    }
    let mut out = vec![0u64; k];
    let mut quot = vec![0u64; k];
    for (i, &(_, y)) in points.iter().enumerate() {
        let xi = xs[i];
        // synthetic division of master by (z - x_i)
        let mut carry = 0u64;
        for d in (0..k).rev() {
            carry = f.add(master[d + 1], f.mul(carry, xi));
            quot[d] = carry;
        }
        let denom = xs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(1u64, |acc, (_, &xj)| f.mul(acc, f.sub(xi, xj)));
        let scale = f.mul(f.reduce(y), f.inv(denom));
        for d in 0..k {
            out[d] = f.add(out[d], f.mul(scale, quot[d]));
        }
    }
    Ok(FieldPoly { coeffs: out, field })
}
