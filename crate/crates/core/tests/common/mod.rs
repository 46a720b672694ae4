#![allow(dead_code)]

use fuzzy_vault::field::{FieldPoly, PrimeField};
use fuzzy_vault::geometry::{dist2, rotate_about, EllipseRegion, Pixel, Point};
use fuzzy_vault::matcher::Isometry;
use fuzzy_vault::minutia::Minutia;
use fuzzy_vault::prealign::GrayImage;
use fuzzy_vault::vault::{build_vault, SystemParams, Template, Vault};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Black ellipse on white, rotated by `tilt_deg` about the image center.
pub fn ellipse_mask(size: usize, semi_x: f64, semi_y: f64, tilt_deg: f64) -> GrayImage {
    let mut img = GrayImage::new(size, size, 255);
    let c = img.center();
    for y in 0..size {
        for x in 0..size {
            let p = rotate_about(Point::new(x as f64, y as f64), c, -tilt_deg.to_radians());
            let (dx, dy) = ((p.x - c.x) / semi_x, (p.y - c.y) / semi_y);
            if dx * dx + dy * dy <= 1.0 {
                img.set(x, y, 0);
            }
        }
    }
    img
}

/// `n` points in `ellipse` pairwise at least `spacing` apart.
pub fn spaced_points<R: Rng>(
    n: usize,
    spacing: i64,
    ellipse: &EllipseRegion,
    rng: &mut R,
) -> Vec<Pixel> {
    let mut pts: Vec<Pixel> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = ellipse.sample(rng);
        if pts.iter().all(|&o| dist2(o, p) >= spacing * spacing) {
            pts.push(p);
        }
    }
    pts
}

pub struct Planted {
    pub reference: Vec<Pixel>,
    pub query: Vec<Pixel>,
    /// `(reference index, query index)` of every planted correspondence.
    pub truth: Vec<(usize, usize)>,
    /// Maps query coordinates into the reference frame.
    pub isometry: Isometry,
}

/// Reference set plus a moved, jittered copy with `keep` surviving points and
/// `extra` unrelated points.
pub fn planted<R: Rng>(
    rng: &mut R,
    n: usize,
    keep: usize,
    extra: usize,
    jitter: f64,
    max_rot: f64,
    max_trans: f64,
) -> Planted {
    let ellipse = EllipseRegion::default();
    let reference = spaced_points(n, 20, &ellipse, rng);
    let center = Point::new(256.0, 256.0);
    let place = Isometry {
        phi_deg: rng.random_range(-max_rot..=max_rot),
        vx: rng.random_range(-max_trans..=max_trans),
        vy: rng.random_range(-max_trans..=max_trans),
        pivot: center,
    };
    let mut query = Vec::new();
    let mut truth = Vec::new();
    let chosen = rand::seq::index::sample(rng, n, keep);
    for i in chosen.iter() {
        let p = place.apply_pixel(reference[i]);
        let (r, a) = (
            jitter * rng.random::<f64>().sqrt(),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let q = Point::new(p.x + r * a.cos(), p.y + r * a.sin());
        truth.push((i, query.len()));
        query.push((q.x.round() as i32, q.y.round() as i32));
    }
    for _ in 0..extra {
        query.push(place.apply_pixel(ellipse.sample(rng)).round());
    }
    Planted {
        reference,
        query,
        truth,
        isometry: place.inverse(),
    }
}

/// Vault on a regular grid: the first `t` grid points are genuine, the rest
/// chaff. Fingers alternate.
pub fn grid_vault(t: usize, r: usize, k: usize, fingers: u8, seed: u64) -> (Vault, FieldPoly) {
    let mut rng = rng(seed);
    let mut p = SystemParams::new(fingers, 1, t, r.max(t + 1), k, 1, 10.0, 7.0, 0.0);
    p.field = PrimeField::at_least(r as u64);
    let all: Vec<Minutia> = (0..r)
        .map(|i| {
            let n = i as i32 / fingers as i32;
            Minutia::new(
                1 + (i % fingers as usize) as u8,
                160 + 12 * (n % 16),
                100 + 12 * (n / 16),
            )
        })
        .collect();
    let template = Template {
        minutiae: all[..t].to_vec(),
    };
    let poly = FieldPoly::random(k, p.field, &mut rng);
    (
        build_vault(&template, &all[t..], &poly, &p, &mut rng).unwrap(),
        poly,
    )
}

/// Structural checks on an enrolled vault: strict lexicographic order,
/// per-finger spacing `d`, ellipse membership, exactly `t` genuine points and
/// at least `chi` of them on every finger.
pub fn check_vault(v: &Vault, poly: &FieldPoly, params: &SystemParams) -> Result<(), String> {
    let keys: Vec<_> = v.points.iter().map(|p| (p.finger, p.a, p.b)).collect();
    if keys.windows(2).any(|w| w[0] >= w[1]) {
        return Err("points not strictly ordered".into());
    }
    let d2 = (v.d as i64).pow(2);
    for (i, p) in v.points.iter().enumerate() {
        if !v.ellipse.contains(p.pixel()) {
            return Err(format!("point {} outside ellipse", i + 1));
        }
        for q in &v.points[i + 1..] {
            if q.finger == p.finger && dist2(p.pixel(), q.pixel()) < d2 {
                return Err(format!("points {:?} and {:?} closer than d", p, q));
            }
        }
    }
    let genuine = v.positions_on(poly);
    if genuine.len() != params.t {
        return Err(format!(
            "{} genuine points, expected {}",
            genuine.len(),
            params.t
        ));
    }
    for finger in 1..=v.fingers {
        let n = genuine
            .iter()
            .filter(|&&i| v.points[i - 1].finger == finger)
            .count();
        if n < params.chi {
            return Err(format!("finger {finger} holds {n} genuine points"));
        }
    }
    if v.r() != params.r {
        return Err(format!("r={} expected {}", v.r(), params.r));
    }
    Ok(())
}
