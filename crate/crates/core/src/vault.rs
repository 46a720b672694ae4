//! Enrollment: reliable-minutiae extraction, template selection, chaff
//! generation and vault assembly, plus the on-disk vault format.
//!
//! Vault points are kept in lexicographic `(finger, a, b)` order and the
//! secret polynomial is evaluated on the 1-based position `i` of each genuine
//! point through `E(i) = i mod q`, so the stored list leaks nothing through
//! its order.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;

use crate::commit::{commit, Commitment};
use crate::field::{FieldPoly, PrimeField};
use crate::geometry::{dist2, v_delta, EllipseRegion, Frame, Pixel, Point};
use crate::matcher::{match_points, MatchParams};
use crate::minutia::Minutia;
use crate::prealign::{prealign, GrayImage, ImageError, PrealignParams};

#[derive(Debug, thiserror::Error)]
pub enum VaultError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("finger {0} has fewer than chi reliable minutiae")]
    FingerBelowChi(u8),
    #[error("ERROR: Not enough reliable minutiae")]
    NotEnoughReliableMinutiae,
    #[error("could not place chaff point after {0} consecutive rejections")]
    ChaffPlacementFailure(usize),
    #[error("duplicate vault point ({0}, {1}, {2})")]
    DuplicatePoint(u8, i32, i32),
    #[error("malformed vault: {0}")]
    MalformedVault(String),
    #[error("pre-alignment failed: {0}")]
    Prealign(#[from] ImageError),
}

/// Matcher constants shared by enrollment and verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatcherLimits {
    pub epsilon: f64,
    pub omega_deg: f64,
    pub max_translation: f64,
}

impl Default for MatcherLimits {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            omega_deg: 45.0,
            max_translation: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Number of fingers `f`.
    pub fingers: u8,
    /// Impressions per finger at enrollment `u`.
    pub impressions: usize,
    /// Template size `t`.
    pub t: usize,
    /// Vault size `r`.
    pub r: usize,
    /// Polynomial length `k`.
    pub k: usize,
    /// Minimum same-finger distance `d` in pixels.
    pub d: u32,
    /// Minimum template minutiae per finger.
    pub chi: usize,
    pub delta_e: f64,
    pub delta_v: f64,
    /// Minimum query minutia quality `Q`.
    pub quality_min: f64,
    /// Largest accepted matcher rotation in degrees.
    pub rotation_gate: f64,
    pub field: PrimeField,
    pub frame: Frame,
    pub ellipse: EllipseRegion,
    pub matcher: MatcherLimits,
}

impl SystemParams {
    /// Parameters with `d = floor(1.5 delta_v)`, `q` the smallest prime not
    /// below `r`, and default frame, ellipse, gate and matcher limits.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fingers: u8,
        impressions: usize,
        t: usize,
        r: usize,
        k: usize,
        chi: usize,
        delta_e: f64,
        delta_v: f64,
        quality_min: f64,
    ) -> Self {
        Self {
            fingers,
            impressions,
            t,
            r,
            k,
            d: (1.5 * delta_v).floor() as u32,
            chi,
            delta_e,
            delta_v,
            quality_min,
            rotation_gate: 8.0,
            field: PrimeField::at_least(r as u64),
            frame: Frame::default(),
            ellipse: EllipseRegion::default(),
            matcher: MatcherLimits::default(),
        }
    }

    pub fn match_params(&self, delta: f64) -> MatchParams {
        MatchParams {
            delta,
            epsilon: self.matcher.epsilon,
            omega_deg: self.matcher.omega_deg,
            max_translation: self.matcher.max_translation,
            pivot: self.frame.center(),
        }
    }

    /// Per-finger packing bound `0.45 * area / V_d`.
    pub fn chaff_capacity_per_finger(&self) -> f64 {
        0.45 * self.ellipse.area_px() as f64 / v_delta(self.d as f64) as f64
    }

    pub fn validate(&self) -> Result<(), VaultError> {
        let bad = |m: String| Err(VaultError::InvalidParams(m));
        if self.fingers < 2 {
            return bad("at least two fingers are required".into());
        }
        if self.impressions == 0 {
            return bad("at least one impression per finger is required".into());
        }
        if !(self.k < self.t && self.t < self.r && self.r as u64 <= self.field.modulus()) {
            return bad(format!(
                "need k < t < r <= q, got k={} t={} r={} q={}",
                self.k,
                self.t,
                self.r,
                self.field.modulus()
            ));
        }
        if self.chi * self.fingers as usize > self.t {
            return bad(format!("chi={} exceeds t/f", self.chi));
        }
        if self.d < 1 {
            return bad("d must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.quality_min) {
            return bad("quality threshold must lie in [0, 1]".into());
        }
        let per_finger = self.r as f64 / self.fingers as f64;
        if per_finger >= self.chaff_capacity_per_finger() {
            return bad(format!(
                "r/f = {per_finger:.1} exceeds the packing bound {:.1} for d={}",
                self.chaff_capacity_per_finger(),
                self.d
            ));
        }
        Ok(())
    }
}

/// The secret set of genuine minutiae.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub minutiae: Vec<Minutia>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaultPoint {
    pub finger: u8,
    pub a: i32,
    pub b: i32,
    pub y: u64,
}

impl VaultPoint {
    pub fn pixel(&self) -> Pixel {
        (self.a, self.b)
    }

    fn key(&self) -> (u8, i32, i32) {
        (self.finger, self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vault {
    pub field: PrimeField,
    pub fingers: u8,
    pub k: usize,
    pub d: u32,
    pub ellipse: EllipseRegion,
    pub points: Vec<VaultPoint>,
    pub commitment: Commitment,
}

/// `E(i) = i mod q` for the 1-based vault position `i`.
pub fn encode_index(position: usize, field: PrimeField) -> u64 {
    field.reduce(position as u64)
}

impl Vault {
    pub fn r(&self) -> usize {
        self.points.len()
    }

    /// `(E(i), y_i)` for the 1-based position `i`.
    pub fn graph_point(&self, position: usize) -> (u64, u64) {
        (
            encode_index(position, self.field),
            self.points[position - 1].y,
        )
    }

    /// 1-based positions and locations of the points on one finger.
    pub fn finger_points(&self, finger: u8) -> (Vec<usize>, Vec<Pixel>) {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.finger == finger)
            .map(|(i, p)| (i + 1, p.pixel()))
            .unzip()
    }

    /// Positions whose value lies on `poly`.
    pub fn positions_on(&self, poly: &FieldPoly) -> Vec<usize> {
        (1..=self.r())
            .filter(|&i| {
                let (x, y) = self.graph_point(i);
                poly.eval(x) == y
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let e = &self.ellipse;
        let mut s = String::new();
        s.push_str("FFV1\n");
        let _ = writeln!(
            s,
            "q={} f={} r={} k={} d={} ell={},{},{},{}",
            self.field.modulus(),
            self.fingers,
            self.r(),
            self.k,
            self.d,
            e.cx,
            e.cy,
            e.semi_x,
            e.semi_y
        );
        for p in &self.points {
            let _ = writeln!(s, "{} {} {} {}", p.finger, p.a, p.b, p.y);
        }
        let _ = writeln!(s, "H={}", self.commitment.to_hex());
        s
    }

    /// Parse and validate the line-based vault format.
    pub fn from_text(text: &str) -> Result<Self, VaultError> {
        let bad = |m: String| VaultError::MalformedVault(m);
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.contains('\r') {
            return Err(bad("CR characters are not allowed".into()));
        }
        let lines: Vec<&str> = body.split('\n').collect();
        if lines.len() < 3 || lines[0] != "FFV1" {
            return Err(bad("missing FFV1 magic".into()));
        }
        let header = parse_header(lines[1]).map_err(bad)?;
        let (q, fingers, r, k, d, ell) = header;
        let field = PrimeField::new(q).map_err(|e| bad(e.to_string()))?;
        if r as u64 > q {
            return Err(bad(format!("r={r} exceeds q={q}")));
        }
        if k == 0 || k > r {
            return Err(bad(format!("k={k} must lie in 1..=r")));
        }
        if fingers == 0 || d == 0 {
            return Err(bad("f and d must be positive".into()));
        }
        if ell.2 <= 0 || ell.3 <= 0 {
            return Err(bad("ellipse semi-axes must be positive".into()));
        }
        let ellipse = EllipseRegion::new(ell.0, ell.1, ell.2, ell.3);
        if lines.len() != r + 3 {
            return Err(bad(format!(
                "expected {} point lines, found {}",
                r,
                lines.len() - 3
            )));
        }
        let mut points = Vec::with_capacity(r);
        for (n, line) in lines[2..2 + r].iter().enumerate() {
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 4 {
                return Err(bad(format!("point line {} needs 4 fields", n + 1)));
            }
            let num = |s: &str| {
                s.parse::<i64>()
                    .map_err(|_| bad(format!("bad number {s:?}")))
            };
            let (theta, a, b, y) = (num(f[0])?, num(f[1])?, num(f[2])?, num(f[3])?);
            if theta < 1 || theta > fingers as i64 {
                return Err(bad(format!("finger {theta} out of range")));
            }
            if y < 0 || y as u64 >= q {
                return Err(bad(format!("value {y} outside the field")));
            }
            let p = VaultPoint {
                finger: theta as u8,
                a: i32::try_from(a).map_err(|_| bad("coordinate overflow".into()))?,
                b: i32::try_from(b).map_err(|_| bad("coordinate overflow".into()))?,
                y: y as u64,
            };
            if !ellipse.contains(p.pixel()) {
                return Err(bad(format!(
                    "point ({theta}, {a}, {b}) outside the ellipse"
                )));
            }
            points.push(p);
        }
        if points.windows(2).any(|w| w[0].key() >= w[1].key()) {
            return Err(bad("points are not in strict lexicographic order".into()));
        }
        check_spacing(&points, d).map_err(bad)?;
        let hash = lines[r + 2]
            .strip_prefix("H=")
            .ok_or_else(|| bad("missing H= line".into()))?;
        let commitment = hash.parse::<Commitment>().map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            field,
            fingers,
            k,
            d,
            ellipse,
            points,
            commitment,
        })
    }
}

type Header = (u64, u8, usize, usize, u32, (i32, i32, i32, i32));

fn parse_header(line: &str) -> Result<Header, String> {
    let fields: Vec<&str> = line.split(' ').collect();
    let keys = ["q", "f", "r", "k", "d", "ell"];
    if fields.len() != keys.len() {
        return Err("header must have fields q f r k d ell".into());
    }
    let mut vals = Vec::new();
    for (field, key) in fields.iter().zip(keys) {
        let v = field
            .strip_prefix(key)
            .and_then(|s| s.strip_prefix('='))
            .ok_or_else(|| format!("expected {key}=..., got {field:?}"))?;
        vals.push(v);
    }
    let num = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| format!("bad header number {s:?}"))
    };
    let ell: Vec<i32> = vals[5]
        .split(',')
        .map(|s| {
            s.parse::<i32>()
                .map_err(|_| format!("bad ellipse value {s:?}"))
        })
        .collect::<Result<_, _>>()?;
    if ell.len() != 4 {
        return Err("ell needs cx,cy,A,B".into());
    }
    let f = num(vals[1])?;
    let d = num(vals[4])?;
    if f > u8::MAX as u64 || d > u32::MAX as u64 {
        return Err("header value out of range".into());
    }
    Ok((
        num(vals[0])?,
        f as u8,
        num(vals[2])? as usize,
        num(vals[3])? as usize,
        d as u32,
        (ell[0], ell[1], ell[2], ell[3]),
    ))
}

fn check_spacing(points: &[VaultPoint], d: u32) -> Result<(), String> {
    let d2 = (d as i64) * (d as i64);
    for (i, p) in points.iter().enumerate() {
        for o in &points[i + 1..] {
            if o.finger != p.finger {
                break;
            }
            if dist2(p.pixel(), o.pixel()) < d2 {
                return Err(format!(
                    "points ({}, {}, {}) and ({}, {}, {}) are closer than d={d}",
                    p.finger, p.a, p.b, o.finger, o.a, o.b
                ));
            }
        }
    }
    Ok(())
}

/// Remove random members of too-close pairs until all pairs are `d` apart.
fn dedupe<R: Rng + ?Sized>(points: &mut Vec<Pixel>, d: u32, rng: &mut R) {
    let d2 = (d as i64) * (d as i64);
    'scan: loop {
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if dist2(points[i], points[j]) < d2 {
                    let victim = if rng.random_bool(0.5) { i } else { j };
                    points.remove(victim);
                    continue 'scan;
                }
            }
        }
        return;
    }
}

/// Minutiae of the first impression found in every other impression, each
/// placed at the mean of its matched locations, restricted to the ellipse and
/// thinned to minimum distance `d`.
pub fn reliable_minutiae<R: Rng + ?Sized>(
    impressions: &[Vec<Pixel>],
    finger: u8,
    params: &SystemParams,
    rng: &mut R,
) -> Vec<Minutia> {
    let Some(first) = impressions.first() else {
        return Vec::new();
    };
    let mp = params.match_params(params.delta_e);
    let mut sums: Vec<Option<Point>> = first.iter().map(|&p| Some(Point::from_pixel(p))).collect();
    for other in &impressions[1..] {
        let m = match_points(first, other, &mp);
        let mut hit = vec![None; first.len()];
        if let Some(iso) = m.isometry {
            for &(ri, qi) in &m.pairs {
                hit[ri] = Some(iso.apply_pixel(other[qi]));
            }
        }
        for (acc, h) in sums.iter_mut().zip(hit) {
            *acc = match (*acc, h) {
                (Some(s), Some(p)) => Some(Point::new(s.x + p.x, s.y + p.y)),
                _ => None,
            };
        }
    }
    let u = impressions.len() as f64;
    let mut kept: Vec<Pixel> = sums
        .into_iter()
        .flatten()
        .map(|s| Point::new(s.x / u, s.y / u).round())
        .filter(|&p| params.ellipse.contains(p))
        .collect();
    kept.sort_unstable();
    dedupe(&mut kept, params.d, rng);
    kept.into_iter()
        .map(|(a, b)| Minutia::new(finger, a, b))
        .collect()
}

const TEMPLATE_REJECTION_BUDGET: usize = 10_000;

/// Uniform `t`-subset of the pooled reliable minutiae conditioned on every
/// finger contributing at least `chi`.
pub fn select_template<R: Rng + ?Sized>(
    pool: &[Vec<Minutia>],
    t: usize,
    chi: usize,
    rng: &mut R,
) -> Result<Template, VaultError> {
    for (i, finger) in pool.iter().enumerate() {
        if finger.len() < chi {
            return Err(VaultError::FingerBelowChi(i as u8 + 1));
        }
    }
    let flat: Vec<(usize, Minutia)> = pool
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.iter().map(move |&m| (i, m)))
        .collect();
    if flat.len() < t || chi * pool.len() > t {
        return Err(VaultError::NotEnoughReliableMinutiae);
    }
    let mut counts = vec![0usize; pool.len()];
    for _ in 0..TEMPLATE_REJECTION_BUDGET {
        let pick = index::sample(rng, flat.len(), t).into_vec();
        counts.iter_mut().for_each(|c| *c = 0);
        for &i in &pick {
            counts[flat[i].0] += 1;
        }
        if counts.iter().all(|&c| c >= chi) {
            let mut minutiae: Vec<Minutia> = pick.iter().map(|&i| flat[i].1).collect();
            minutiae.sort_by(Minutia::lex_cmp);
            return Ok(Template { minutiae });
        }
    }
    Ok(exact_conditional_template(pool, t, chi, rng))
}

/// Same distribution as the rejection sampler: draw per-finger counts with
/// weight `prod C(n_i, c_i)`, then a uniform subset on each finger.
fn exact_conditional_template<R: Rng + ?Sized>(
    pool: &[Vec<Minutia>],
    t: usize,
    chi: usize,
    rng: &mut R,
) -> Template {
    let f = pool.len();
    let ln_choose = |n: usize, c: usize| -> f64 {
        (0..c)
            .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
            .sum()
    };
    // ways[i][s]: log-weight of distributing s among fingers i.. with each >= chi
    let mut ways = vec![vec![f64::NEG_INFINITY; t + 1]; f + 1];
    ways[f][0] = 0.0;
    for i in (0..f).rev() {
        for s in 0..=t {
            let terms: Vec<f64> = (chi..=pool[i].len().min(s))
                .map(|c| ln_choose(pool[i].len(), c) + ways[i + 1][s - c])
                .filter(|v| v.is_finite())
                .collect();
            ways[i][s] = log_sum_exp(&terms);
        }
    }
    let mut remaining = t;
    let mut minutiae = Vec::with_capacity(t);
    for i in 0..f {
        let options: Vec<(usize, f64)> = (chi..=pool[i].len().min(remaining))
            .map(|c| (c, ln_choose(pool[i].len(), c) + ways[i + 1][remaining - c]))
            .filter(|(_, v)| v.is_finite())
            .collect();
        let top = options
            .iter()
            .map(|o| o.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = options.iter().map(|o| (o.1 - top).exp()).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = options.last().map(|o| o.0).unwrap_or(0);
        for &(c, w) in &options {
            u -= (w - top).exp();
            if u <= 0.0 {
                chosen = c;
                break;
            }
        }
        for j in index::sample(rng, pool[i].len(), chosen) {
            minutiae.push(pool[i][j]);
        }
        remaining -= chosen;
    }
    minutiae.sort_by(Minutia::lex_cmp);
    Template { minutiae }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `count` chaff points, uniform in the ellipse on uniformly chosen fingers,
/// each at least `d` from every earlier same-finger point.
pub fn add_chaff<R: Rng + ?Sized>(
    genuine: &[Minutia],
    count: usize,
    params: &SystemParams,
    budget: usize,
    rng: &mut R,
) -> Result<Vec<Minutia>, VaultError> {
    let d2 = (params.d as i64) * (params.d as i64);
    let mut placed: Vec<Vec<Pixel>> = vec![Vec::new(); params.fingers as usize];
    for m in genuine {
        placed[(m.finger - 1) as usize].push(m.pixel());
    }
    let mut chaff = Vec::with_capacity(count);
    let mut failures = 0usize;
    while chaff.len() < count {
        let finger = rng.random_range(1..=params.fingers);
        let p = params.ellipse.sample(rng);
        let same = &mut placed[(finger - 1) as usize];
        if same.iter().all(|&o| dist2(o, p) >= d2) {
            same.push(p);
            chaff.push(Minutia::new(finger, p.0, p.1));
            failures = 0;
        } else {
            failures += 1;
            if failures >= budget {
                return Err(VaultError::ChaffPlacementFailure(budget));
            }
        }
    }
    Ok(chaff)
}

/// Sort genuine and chaff points and attach polynomial values: genuine
/// positions get `P(E(i))`, chaff positions a uniform value other than it.
pub fn build_vault<R: Rng + ?Sized>(
    template: &Template,
    chaff: &[Minutia],
    poly: &FieldPoly,
    params: &SystemParams,
    rng: &mut R,
) -> Result<Vault, VaultError> {
    let field = poly.field();
    let mut all: Vec<(Minutia, bool)> = template
        .minutiae
        .iter()
        .map(|&m| (m, true))
        .chain(chaff.iter().map(|&m| (m, false)))
        .collect();
    all.sort_by(|a, b| a.0.lex_cmp(&b.0));
    if let Some(w) = all.windows(2).find(|w| w[0].0.key() == w[1].0.key()) {
        let m = w[0].0;
        return Err(VaultError::DuplicatePoint(m.finger, m.a, m.b));
    }
    if all.len() as u64 > field.modulus() {
        return Err(VaultError::InvalidParams("r exceeds q".into()));
    }
    let points = all
        .iter()
        .enumerate()
        .map(|(i, &(m, genuine))| {
            let on_curve = poly.eval(encode_index(i + 1, field));
            VaultPoint {
                finger: m.finger,
                a: m.a,
                b: m.b,
                y: if genuine {
                    on_curve
                } else {
                    field.random_except(on_curve, rng)
                },
            }
        })
        .collect();
    Ok(Vault {
        field,
        fingers: params.fingers,
        k: poly.len(),
        d: params.d,
        ellipse: params.ellipse,
        points,
        commitment: commit(poly),
    })
}

/// One capture of a finger: extracted minutiae, optionally with the image
/// they came from (used for pre-alignment).
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub minutiae: Vec<Minutia>,
    pub image: Option<GrayImage>,
}

impl Impression {
    pub fn points(minutiae: Vec<Minutia>) -> Self {
        Self {
            minutiae,
            image: None,
        }
    }

    /// Rotate the minutiae by the pre-alignment angle when an image is present.
    pub fn aligned(&self, params: &PrealignParams) -> Result<(Vec<Minutia>, i32), ImageError> {
        let Some(img) = &self.image else {
            return Ok((self.minutiae.clone(), 0));
        };
        let report = prealign(img, params)?;
        let c = img.center();
        let rad = (report.total_rotation as f64).to_radians();
        let out = self
            .minutiae
            .iter()
            .map(|m| {
                let (a, b) =
                    crate::geometry::rotate_about(Point::from_pixel(m.pixel()), c, rad).round();
                Minutia { a, b, ..*m }
            })
            .collect();
        Ok((out, report.total_rotation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrollOptions {
    /// Consecutive chaff rejections tolerated before giving up.
    pub chaff_budget: usize,
    /// Captures per finger before a finger below `chi` fails enrollment.
    pub recapture_attempts: u32,
    pub prealign: PrealignParams,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        Self {
            chaff_budget: 10_000,
            recapture_attempts: 3,
            prealign: PrealignParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub vault: Vault,
    pub poly: FieldPoly,
    pub template: Template,
    /// Captures used per finger.
    pub attempts: Vec<u32>,
}

/// Enroll from one fixed set of `u` impressions per finger.
pub fn enroll<R: Rng + ?Sized>(
    captures: &[Vec<Impression>],
    params: &SystemParams,
    opts: &EnrollOptions,
    rng: &mut R,
) -> Result<Enrollment, VaultError> {
    if captures.len() != params.fingers as usize {
        return Err(VaultError::InvalidParams(format!(
            "expected captures for {} fingers, got {}",
            params.fingers,
            captures.len()
        )));
    }
    let single = EnrollOptions {
        recapture_attempts: 1,
        ..*opts
    };
    enroll_with_recapture(
        |finger, _| captures[(finger - 1) as usize].clone(),
        params,
        &single,
        rng,
    )
}

/// Enroll, calling `capture(finger, attempt)` again for a finger whose
/// reliable set falls below `chi`, up to `opts.recapture_attempts` times.
pub fn enroll_with_recapture<R, C>(
    mut capture: C,
    params: &SystemParams,
    opts: &EnrollOptions,
    rng: &mut R,
) -> Result<Enrollment, VaultError>
where
    R: Rng + ?Sized,
    C: FnMut(u8, u32) -> Vec<Impression>,
{
    params.validate()?;
    let poly = FieldPoly::random(params.k, params.field, rng);
    let mut pool = Vec::with_capacity(params.fingers as usize);
    let mut attempts = Vec::with_capacity(params.fingers as usize);
    for finger in 1..=params.fingers {
        let mut reliable = Vec::new();
        let mut used = 0;
        for attempt in 0..opts.recapture_attempts.max(1) {
            used = attempt + 1;
            let shots = capture(finger, attempt);
            let mut sets = Vec::with_capacity(shots.len());
            for shot in &shots {
                let (pts, _) = shot.aligned(&opts.prealign)?;
                sets.push(pts.iter().map(Minutia::pixel).collect::<Vec<_>>());
            }
            reliable = reliable_minutiae(&sets, finger, params, rng);
            if reliable.len() >= params.chi {
                break;
            }
        }
        if reliable.len() < params.chi {
            return Err(VaultError::FingerBelowChi(finger));
        }
        pool.push(reliable);
        attempts.push(used);
    }
    let template = select_template(&pool, params.t, params.chi, rng)?;
    let chaff = add_chaff(
        &template.minutiae,
        params.r - params.t,
        params,
        opts.chaff_budget,
        rng,
    )?;
    let vault = build_vault(&template, &chaff, &poly, params, rng)?;
    Ok(Enrollment {
        vault,
        poly,
        template,
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_params() -> SystemParams {
        let mut p = SystemParams::new(1, 1, 3, 6, 2, 1, 10.0, 7.0, 0.0);
        p.field = PrimeField::new(7).unwrap();
        p
    }

    #[test]
    fn params_defaults_follow_rules() {
        let p = SystemParams::new(2, 2, 20, 80, 8, 5, 10.0, 7.0, 0.3);
        assert_eq!(p.d, 10);
        assert_eq!(p.field.modulus(), 83);
        p.validate().unwrap();
        let mut bad = p.clone();
        bad.k = 20;
        assert!(bad.validate().is_err());
        let mut bad = p.clone();
        bad.chi = 11;
        assert!(bad.validate().is_err());
        let mut dense = p;
        dense.d = 60;
        assert!(dense.validate().is_err());
    }

    #[test]
    fn single_impression_keeps_ellipse_points_spaced() {
        let p = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let imp = vec![(256, 256), (258, 256), (300, 300), (10, 10)];
        let out = reliable_minutiae(&[imp], 1, &p, &mut rng);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|m| p.ellipse.contains(m.pixel())));
        assert!(out.iter().any(|m| m.pixel() == (300, 300)));
    }

    #[test]
    fn identical_impressions_are_fully_reliable() {
        let p = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imp: Vec<Pixel> = vec![(200, 150), (260, 300), (310, 220), (230, 380)];
        let out = reliable_minutiae(&[imp.clone(), imp.clone()], 1, &p, &mut rng);
        let got: Vec<Pixel> = out.iter().map(Minutia::pixel).collect();
        let mut want = imp;
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn template_selection_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f1: Vec<Minutia> = (0..2).map(|i| Minutia::new(1, 200 + 20 * i, 200)).collect();
        let f2: Vec<Minutia> = (0..2).map(|i| Minutia::new(2, 200 + 20 * i, 200)).collect();
        let t = select_template(&[f1.clone(), f2.clone()], 4, 2, &mut rng).unwrap();
        assert_eq!(t.minutiae.len(), 4);
        assert!(matches!(
            select_template(&[f1.clone(), f2[..1].to_vec()], 3, 2, &mut rng),
            Err(VaultError::FingerBelowChi(2))
        ));
        assert!(matches!(
            select_template(&[f1, f2], 5, 1, &mut rng),
            Err(VaultError::NotEnoughReliableMinutiae)
        ));
    }

    #[test]
    fn exact_fallback_respects_chi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f1: Vec<Minutia> = (0..5).map(|i| Minutia::new(1, 150 + 10 * i, 200)).collect();
        let f2: Vec<Minutia> = (0..200).map(|i| Minutia::new(2, i, 200)).collect();
        for _ in 0..20 {
            let t = exact_conditional_template(&[f1.clone(), f2.clone()], 20, 5, &mut rng);
            assert_eq!(t.minutiae.len(), 20);
            assert_eq!(t.minutiae.iter().filter(|m| m.finger == 1).count(), 5);
        }
    }

    #[test]
    fn chaff_edges() {
        let mut p = SystemParams::new(1, 1, 10, 50, 4, 0, 10.0, 7.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(add_chaff(&[], 0, &p, 10_000, &mut rng).unwrap().is_empty());
        let pts = add_chaff(&[], 50, &p, 10_000, &mut rng).unwrap();
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                assert!(dist2(a.pixel(), b.pixel()) >= 100);
            }
        }
        p.d = 500;
        assert!(matches!(
            add_chaff(&[], 2, &p, 10_000, &mut rng),
            Err(VaultError::ChaffPlacementFailure(_))
        ));
    }

    #[test]
    fn noiseless_vault_decodes() {
        let p = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let template = Template {
            minutiae: vec![
                Minutia::new(1, 200, 200),
                Minutia::new(1, 250, 300),
                Minutia::new(1, 300, 200),
            ],
        };
        let poly = FieldPoly::random(2, p.field, &mut rng);
        let v = build_vault(&template, &[], &poly, &p, &mut rng).unwrap();
        let pts: Vec<(u64, u64)> = (1..=v.r()).map(|i| v.graph_point(i)).collect();
        assert_eq!(
            crate::rs::rs_decode(&pts, 2, p.field).unwrap(),
            Some(poly.clone())
        );
        assert_eq!(v.positions_on(&poly), vec![1, 2, 3]);
    }

    #[test]
    fn duplicate_points_rejected() {
        let p = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let template = Template {
            minutiae: vec![Minutia::new(1, 200, 200)],
        };
        let poly = FieldPoly::random(2, p.field, &mut rng);
        assert!(matches!(
            build_vault(&template, &[Minutia::new(1, 200, 200)], &poly, &p, &mut rng),
            Err(VaultError::DuplicatePoint(1, 200, 200))
        ));
    }

    #[test]
    fn text_format_round_trip_and_rejections() {
        let p = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let template = Template {
            minutiae: vec![
                Minutia::new(1, 200, 200),
                Minutia::new(1, 250, 300),
                Minutia::new(1, 300, 200),
            ],
        };
        let chaff = add_chaff(&template.minutiae, 3, &p, 10_000, &mut rng).unwrap();
        let poly = FieldPoly::random(2, p.field, &mut rng);
        let v = build_vault(&template, &chaff, &poly, &p, &mut rng).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("FFV1\nq=7 f=1 r=6 k=2 d=10 ell=256,256,133,208\n"));
        assert_eq!(Vault::from_text(&text).unwrap(), v);

        let lines: Vec<&str> = text.lines().collect();
        let mut swapped = lines.clone();
        swapped.swap(2, 3);
        assert!(Vault::from_text(&swapped.join("\n")).is_err());
        let crowded = text.replacen(
            lines[3],
            &format!("1 {} {} 0", v.points[0].a + 1, v.points[0].b),
            1,
        );
        assert!(Vault::from_text(&crowded).is_err());
        assert!(Vault::from_text(&text.replace("FFV1", "FFV2")).is_err());
        assert!(Vault::from_text(&text.replace("d=10", "d=x")).is_err());
        assert!(Vault::from_text(&text.replace('\n', "\r\n")).is_err());
    }
}
