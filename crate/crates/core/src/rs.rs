//! Unique Reed-Solomon decoding over arbitrary evaluation points.
//!
//! The received points are read as a word of a generalized RS code. Its dual
//! code has column multipliers `v_i = 1 / prod_{l != i} (x_i - x_l)`, which
//! gives syndromes `S_j = sum_i v_i y_i x_i^j` for `j < w - k`. These are power
//! sums over the error positions, so Berlekamp-Massey yields the error locator.
//! Errors at `x = 0` show up as a locator whose length exceeds its degree.

use crate::field::{lagrange_interpolate, FieldError, FieldPoly, PrimeField};

/// Minimum number of agreeing points for a unique decode from `w` points.
pub fn agreement_threshold(w: usize, k: usize) -> usize {
    (w + k).div_ceil(2)
}

/// Decode `points` to the unique polynomial of length `k` agreeing with at
/// least `ceil((w + k) / 2)` of them. `Ok(None)` when no such polynomial exists.
pub fn rs_decode(
    points: &[(u64, u64)],
    k: usize,
    field: PrimeField,
) -> Result<Option<FieldPoly>, FieldError> {
    let w = points.len();
    if w < k {
        return Err(FieldError::PointCount {
            expected: k,
            got: w,
        });
    }
    let f = field;
    let xs: Vec<u64> = points.iter().map(|&(x, _)| f.reduce(x)).collect();
    let ys: Vec<u64> = points.iter().map(|&(_, y)| f.reduce(y)).collect();
    let mut sorted = xs.clone();
    sorted.sort_unstable();
    if let Some(win) = sorted.windows(2).find(|p| p[0] == p[1]) {
        return Err(FieldError::DuplicateAbscissa(win[0]));
    }
    if k == 0 {
        return Ok(None);
    }
    if w == k {
        let pts: Vec<(u64, u64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        return lagrange_interpolate(&pts, k, f).map(Some);
    }

    let n_syn = w - k;
    let mut syndromes = vec![0u64; n_syn];
    for i in 0..w {
        let denom = (0..w)
            .filter(|&l| l != i)
            .fold(1u64, |acc, l| f.mul(acc, f.sub(xs[i], xs[l])));
        let mut term = f.mul(f.inv(denom), ys[i]);
        for s in syndromes.iter_mut() {
            *s = f.add(*s, term);
            term = f.mul(term, xs[i]);
        }
    }

    let (conn, len) = berlekamp_massey(&syndromes, f);
    if 2 * len > n_syn {
        return Ok(None);
    }
    // characteristic polynomial x^L * C(1/x); coefficient of x^(L-i) is C_i
    let error_at = |x: u64| {
        let mut acc = 0u64;
        for i in 0..=len {
            let c = conn.get(i).copied().unwrap_or(0);
            acc = f.add(f.mul(acc, x), c);
        }
        acc == 0
    };
    let is_error: Vec<bool> = xs.iter().map(|&x| error_at(x)).collect();
    if is_error.iter().filter(|&&e| e).count() != len {
        return Ok(None);
    }
    let clean: Vec<(u64, u64)> = (0..w)
        .filter(|&i| !is_error[i])
        .map(|i| (xs[i], ys[i]))
        .take(k)
        .collect();
    let poly = lagrange_interpolate(&clean, k, f)?;
    let agree = xs
        .iter()
        .zip(&ys)
        .filter(|&(&x, &y)| poly.eval(x) == y)
        .count();
    if agree >= agreement_threshold(w, k) {
        Ok(Some(poly))
    } else {
        Ok(None)
    }
}

/// Shortest LFSR generating `seq`. Returns the connection polynomial
/// `1 + c_1 z + ...` and the register length `L`.
pub fn berlekamp_massey(seq: &[u64], f: PrimeField) -> (Vec<u64>, usize) {
    let mut conn = vec![1u64];
    let mut prev = vec![1u64];
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut prev_disc = 1u64;
    for n in 0..seq.len() {
        let mut disc = seq[n];
        for i in 1..=len.min(conn.len() - 1) {
            disc = f.add(disc, f.mul(conn[i], seq[n - i]));
        }
        if disc == 0 {
            shift += 1;
            continue;
        }
        let coef = f.mul(disc, f.inv(prev_disc));
        let snapshot = conn.clone();
        if conn.len() < prev.len() + shift {
            conn.resize(prev.len() + shift, 0);
        }
        for (i, &b) in prev.iter().enumerate() {
            conn[i + shift] = f.sub(conn[i + shift], f.mul(coef, b));
        }
        if 2 * len <= n {
            len = n + 1 - len;
            prev = snapshot;
            prev_disc = disc;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    (conn, len)
}
