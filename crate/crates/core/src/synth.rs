//! Synthetic fingers and noisy impressions with ground truth.
//!
//! A finger is a set of true minutiae placed uniformly in the ellipse with a
//! generation spacing. An impression moves the whole finger by a random
//! rotation about the frame center plus a translation, jitters each surviving
//! minutia inside a disk, drops minutiae at random, adds Poisson-many spurious
//! ones and attaches quality scores.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::geometry::{dist2, EllipseRegion, Frame, Pixel, Point};
use crate::matcher::Isometry;
use crate::minutia::Minutia;
use crate::prealign::render_hull_mask;
use crate::vault::Impression;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("could not place minutia {placed} of finger {finger} after {budget} attempts")]
    PlacementFailure {
        finger: u8,
        placed: usize,
        budget: usize,
    },
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("malformed population file, line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Radius of the uniform disk displacement per minutia.
    pub jitter_radius: f64,
    pub p_delete: f64,
    /// Poisson mean of spurious minutiae per impression.
    pub n_spurious: f64,
    /// Largest rotation magnitude in degrees.
    pub global_rot: f64,
    /// Largest translation per axis in pixels.
    pub global_trans: f64,
    /// Uniform quality range for true minutiae.
    pub quality_true: (f64, f64),
    /// Uniform quality range for spurious minutiae.
    pub quality_spurious: (f64, f64),
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            jitter_radius: 0.0,
            p_delete: 0.0,
            n_spurious: 0.0,
            global_rot: 0.0,
            global_trans: 0.0,
            quality_true: (0.3, 1.0),
            quality_spurious: (0.0, 0.6),
        }
    }

    pub fn moderate() -> Self {
        Self {
            jitter_radius: 3.0,
            p_delete: 0.1,
            n_spurious: 10.0,
            global_rot: 10.0,
            global_trans: 10.0,
            ..Self::zero()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidNoise(m.into()));
        let range_ok = |(lo, hi): (f64, f64)| {
            (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi
        };
        if !(0.0..=1.0).contains(&self.p_delete) {
            return bad("p_delete must lie in [0, 1]");
        }
        if !(self.jitter_radius >= 0.0 && self.n_spurious >= 0.0) {
            return bad("jitter radius and spurious mean must be non-negative");
        }
        if !(self.global_rot >= 0.0 && self.global_trans >= 0.0) {
            return bad("rotation and translation limits must be non-negative");
        }
        if !range_ok(self.quality_true) || !range_ok(self.quality_spurious) {
            return bad("quality ranges must be ordered and inside [0, 1]");
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::moderate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFinger {
    pub finger: u8,
    pub minutiae: Vec<Minutia>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub fingers: Vec<SyntheticFinger>,
}

/// Default spacing between generated true minutiae.
pub const GENERATION_SPACING: u32 = 8;

const PLACEMENT_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSpec {
    pub fingers: u8,
    pub per_finger: usize,
    pub spacing: u32,
    pub ellipse: EllipseRegion,
}

impl PopulationSpec {
    pub fn new(fingers: u8, per_finger: usize) -> Self {
        Self {
            fingers,
            per_finger,
            spacing: GENERATION_SPACING,
            ellipse: EllipseRegion::default(),
        }
    }
}

pub fn gen_finger<R: Rng + ?Sized>(
    finger: u8,
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<SyntheticFinger, SynthError> {
    let s2 = (spec.spacing as i64).pow(2);
    let mut pts: Vec<Pixel> = Vec::with_capacity(spec.per_finger);
    let mut failures = 0;
    while pts.len() < spec.per_finger {
        let p = spec.ellipse.sample(rng);
        if pts.iter().all(|&o| dist2(o, p) >= s2) {
            pts.push(p);
            failures = 0;
        } else {
            failures += 1;
            if failures >= PLACEMENT_BUDGET {
                return Err(SynthError::PlacementFailure {
                    finger,
                    placed: pts.len(),
                    budget: PLACEMENT_BUDGET,
                });
            }
        }
    }
    pts.sort_unstable();
    Ok(SyntheticFinger {
        finger,
        minutiae: pts
            .into_iter()
            .map(|(a, b)| Minutia::new(finger, a, b))
            .collect(),
    })
}

pub fn gen_user<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<SyntheticUser, SynthError> {
    let fingers = (1..=spec.fingers)
        .map(|f| gen_finger(f, spec, rng))
        .collect::<Result<_, _>>()?;
    Ok(SyntheticUser { fingers })
}

pub fn gen_population<R: Rng + ?Sized>(
    n_users: usize,
    spec: &PopulationSpec,
    rng: &mut R,
) -> Result<Vec<SyntheticUser>, SynthError> {
    (0..n_users).map(|_| gen_user(spec, rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImpression {
    pub minutiae: Vec<Minutia>,
    /// Transform taking true finger coordinates to impression coordinates.
    pub placement: Isometry,
    /// For each impression minutia, the index of its true minutia, or `None`
    /// for spurious ones.
    pub truth: Vec<Option<usize>>,
}

impl SyntheticImpression {
    /// The impression with a rendered hull silhouette attached, ready for
    /// pre-alignment.
    pub fn with_mask(&self, frame: Frame) -> Impression {
        let pixels: Vec<Pixel> = self.minutiae.iter().map(Minutia::pixel).collect();
        Impression {
            minutiae: self.minutiae.clone(),
            image: Some(render_hull_mask(
                &pixels,
                frame.width as usize,
                frame.height as usize,
            )),
        }
    }

    pub fn points_only(&self) -> Impression {
        Impression::points(self.minutiae.clone())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, limit: f64) -> f64 {
    if limit == 0.0 {
        0.0
    } else {
        rng.random_range(-limit..=limit)
    }
}

/// Integer pixel within `radius` of `ideal`, uniform over the disk before
/// rounding; falls back to plain rounding when the disk holds no lattice
/// point.
fn jitter<R: Rng + ?Sized>(ideal: Point, radius: f64, rng: &mut R) -> Pixel {
    if radius > 0.0 {
        for _ in 0..64 {
            let rho = radius * rng.random::<f64>().sqrt();
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let p = Point::new(ideal.x + rho * ang.cos(), ideal.y + rho * ang.sin()).round();
            if Point::from_pixel(p).dist(ideal) <= radius {
                return p;
            }
        }
    }
    ideal.round()
}

pub fn sample_impression<R: Rng + ?Sized>(
    finger: &SyntheticFinger,
    noise: &NoiseModel,
    frame: Frame,
    ellipse: &EllipseRegion,
    rng: &mut R,
) -> SyntheticImpression {
    let placement = Isometry {
        phi_deg: symmetric(rng, noise.global_rot),
        vx: symmetric(rng, noise.global_trans),
        vy: symmetric(rng, noise.global_trans),
        pivot: frame.center(),
    };
    let mut out: Vec<(Minutia, Option<usize>)> = Vec::new();
    for (i, m) in finger.minutiae.iter().enumerate() {
        if noise.p_delete > 0.0 && rng.random_bool(noise.p_delete) {
            continue;
        }
        let (a, b) = jitter(placement.apply_pixel(m.pixel()), noise.jitter_radius, rng);
        let q = uniform(rng, noise.quality_true);
        out.push((Minutia::new(finger.finger, a, b).with_quality(q), Some(i)));
    }
    let n_spurious = if noise.n_spurious > 0.0 {
        Poisson::new(noise.n_spurious).map_or(0, |p| p.sample(rng) as usize)
    } else {
        0
    };
    for _ in 0..n_spurious {
        let (a, b) = placement.apply_pixel(ellipse.sample(rng)).round();
        let q = uniform(rng, noise.quality_spurious);
        out.push((Minutia::new(finger.finger, a, b).with_quality(q), None));
    }
    // extractor output order carries no information
    for i in (1..out.len()).rev() {
        out.swap(i, rng.random_range(0..=i));
    }
    let (minutiae, truth) = out.into_iter().unzip();
    SyntheticImpression {
        minutiae,
        placement,
        truth,
    }
}

impl SyntheticUser {
    /// Dump format: `[finger N]` sections of `<a> <b>` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for f in &self.fingers {
            let _ = writeln!(s, "[finger {}]", f.finger);
            for m in &f.minutiae {
                let _ = writeln!(s, "{} {}", m.a, m.b);
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, SynthError> {
        let mut fingers: Vec<SyntheticFinger> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let bad = |reason: &str| SynthError::MalformedDump {
                line: n + 1,
                reason: reason.into(),
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line
                .strip_prefix("[finger ")
                .and_then(|r| r.strip_suffix(']'))
            {
                let finger: u8 = rest.parse().map_err(|_| bad("bad finger index"))?;
                if finger as usize != fingers.len() + 1 {
                    return Err(bad("finger sections must be numbered 1, 2, ..."));
                }
                fingers.push(SyntheticFinger {
                    finger,
                    minutiae: Vec::new(),
                });
                continue;
            }
            let cur = fingers
                .last_mut()
                .ok_or_else(|| bad("point before any finger section"))?;
            let mut it = line.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad("expected `<a> <b>`"));
            };
            let a = a.parse().map_err(|_| bad("bad coordinate"))?;
            let b = b.parse().map_err(|_| bad("bad coordinate"))?;
            cur.minutiae.push(Minutia::new(cur.finger, a, b));
        }
        Ok(Self { fingers })
    }
}
