//! Two-pair isometry search for single-finger point sets.
//!
//! Every pair of reference points is compared with every ordered pair of query
//! points. When the two inter-point distances agree within the relative
//! tolerance `epsilon`, the pair defines a candidate isometry (rotation about
//! the frame pivot, then translation) taking the query pair onto the reference
//! pair. Candidates within the rotation and translation limits are scored by
//! the number of mutual nearest neighbours closer than `delta`. The winner is
//! finally polished by a least-squares fit over its own correspondences. The
//! refit correspondences replace the winner's only if none is lost.

use std::cmp::Ordering;

use crate::geometry::{direction, rotate_about, Pixel, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Pair distance tolerance in pixels (strict).
    pub delta: f64,
    /// Relative tolerance for comparing inter-point distances.
    pub epsilon: f64,
    /// Rotation limit in degrees (strict).
    pub omega_deg: f64,
    /// Translation limit in pixels (strict).
    pub max_translation: f64,
    /// Rotation pivot, normally the frame center.
    pub pivot: Point,
}

impl MatchParams {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            delta: 7.0,
            epsilon: 0.2,
            omega_deg: 45.0,
            max_translation: 200.0,
            pivot: Point::new(256.0, 256.0),
        }
    }
}

/// Rotation by `phi_deg` about `pivot` followed by translation `(vx, vy)`;
/// maps query coordinates into the reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isometry {
    pub phi_deg: f64,
    pub vx: f64,
    pub vy: f64,
    pub pivot: Point,
}

impl Isometry {
    pub fn identity(pivot: Point) -> Self {
        Self {
            phi_deg: 0.0,
            vx: 0.0,
            vy: 0.0,
            pivot,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let r = rotate_about(p, self.pivot, self.phi_deg.to_radians());
        Point::new(r.x + self.vx, r.y + self.vy)
    }

    pub fn apply_pixel(&self, p: Pixel) -> Point {
        self.apply(Point::from_pixel(p))
    }

    pub fn inverse(&self) -> Self {
        let phi = -self.phi_deg;
        let back = rotate_about(
            Point::new(self.pivot.x - self.vx, self.pivot.y - self.vy),
            self.pivot,
            phi.to_radians(),
        );
        Self {
            phi_deg: phi,
            vx: back.x - self.pivot.x,
            vy: back.y - self.pivot.y,
            pivot: self.pivot,
        }
    }

    pub fn translation_norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Least-squares rigid fit taking `from[i]` onto `to[i]`.
    pub fn fit(from: &[Point], to: &[Point], pivot: Point) -> Option<Self> {
        if from.len() != to.len() || from.is_empty() {
            return None;
        }
        let n = from.len() as f64;
        let mean = |ps: &[Point]| {
            let (sx, sy) = ps.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
            Point::new(sx / n, sy / n)
        };
        let cf = mean(from);
        let ct = mean(to);
        let (mut dot, mut cross) = (0.0, 0.0);
        for (f, t) in from.iter().zip(to) {
            let (fx, fy) = (f.x - cf.x, f.y - cf.y);
            let (tx, ty) = (t.x - ct.x, t.y - ct.y);
            dot += fx * tx + fy * ty;
            cross += fy * tx - fx * ty;
        }
        let phi = cross.atan2(dot);
        let rc = rotate_about(cf, pivot, phi);
        Some(Self {
            phi_deg: phi.to_degrees(),
            vx: ct.x - rc.x,
            vy: ct.y - rc.y,
            pivot,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `None` when no seed pair satisfied the limits.
    pub isometry: Option<Isometry>,
    /// `(reference index, query index)`, a partial bijection.
    pub pairs: Vec<(usize, usize)>,
}

impl MatchResult {
    pub fn empty() -> Self {
        Self {
            isometry: None,
            pairs: Vec::new(),
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn phi_deg(&self) -> Option<f64> {
        self.isometry.map(|i| i.phi_deg)
    }
}

/// Accept unless the recovered rotation exceeds `rho_deg` in magnitude.
/// A result without isometry is rejected.
pub fn rotation_gate(m: &MatchResult, rho_deg: f64) -> bool {
    match m.isometry {
        Some(iso) => iso.phi_deg.abs() <= rho_deg,
        None => false,
    }
}

/// Uniform grid over the reference points for radius queries.
struct Grid {
    min_x: f64,
    min_y: f64,
    cell: f64,
    cols: i64,
    rows: i64,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    fn new(points: &[Point], cell: f64) -> Self {
        let min_x = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let min_y = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_x = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let max_y = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let cols = ((max_x - min_x) / cell).floor() as i64 + 1;
        let rows = ((max_y - min_y) / cell).floor() as i64 + 1;
        let n_cells = (cols * rows) as usize;
        let cell_of = |p: &Point| {
            let cx = ((p.x - min_x) / cell).floor() as i64;
            let cy = ((p.y - min_y) / cell).floor() as i64;
            (cy * cols + cx) as usize
        };
        let mut counts = vec![0u32; n_cells + 1];
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Self {
            min_x,
            min_y,
            cell,
            cols,
            rows,
            starts: counts,
            items,
        }
    }

    #[inline]
    fn for_neighbors(&self, p: Point, mut visit: impl FnMut(usize)) {
        let cx = ((p.x - self.min_x) / self.cell).floor() as i64;
        let cy = ((p.y - self.min_y) / self.cell).floor() as i64;
        if cx < -1 || cy < -1 || cx > self.cols || cy > self.rows {
            return;
        }
        for y in (cy - 1).max(0)..=(cy + 1).min(self.rows - 1) {
            let row = y * self.cols;
            let x0 = (cx - 1).max(0);
            let x1 = (cx + 1).min(self.cols - 1);
            if x0 > x1 {
                continue;
            }
            let s = self.starts[(row + x0) as usize] as usize;
            let e = self.starts[(row + x1 + 1) as usize] as usize;
            for &i in &self.items[s..e] {
                visit(i as usize);
            }
        }
    }
}

struct Scorer<'a> {
    reference: &'a [Point],
    /// Query points relative to the pivot.
    query_rel: Vec<(f64, f64)>,
    grid: Grid,
    delta2: f64,
    pivot: Point,
    cands: Vec<(f64, u32, u32)>,
    ref_used: Vec<bool>,
    query_used: Vec<bool>,
}

impl<'a> Scorer<'a> {
    fn new(reference: &'a [Point], query: &[Point], params: &MatchParams) -> Self {
        let pivot = params.pivot;
        Self {
            reference,
            query_rel: query
                .iter()
                .map(|q| (q.x - pivot.x, q.y - pivot.y))
                .collect(),
            grid: Grid::new(reference, params.delta.max(1e-6)),
            delta2: params.delta * params.delta,
            pivot,
            cands: Vec::new(),
            ref_used: vec![false; reference.len()],
            query_used: vec![false; query.len()],
        }
    }

    /// Candidate pairs closer than delta under the isometry. Gives up early
    /// (returning `false`) once fewer than `need` query points can still match.
    fn collect(&mut self, iso: &Isometry, need: usize) -> bool {
        let (s, c) = iso.phi_deg.to_radians().sin_cos();
        let ox = self.pivot.x + iso.vx;
        let oy = self.pivot.y + iso.vy;
        self.cands.clear();
        let n = self.query_rel.len();
        let mut hit = 0usize;
        for (qi, &(dx, dy)) in self.query_rel.iter().enumerate() {
            if hit + (n - qi) < need {
                return false;
            }
            let p = Point::new(ox + dx * c + dy * s, oy - dx * s + dy * c);
            let before = self.cands.len();
            let reference = self.reference;
            let delta2 = self.delta2;
            let cands = &mut self.cands;
            self.grid.for_neighbors(p, |ri| {
                let r = reference[ri];
                let d2 = (r.x - p.x) * (r.x - p.x) + (r.y - p.y) * (r.y - p.y);
                if d2 < delta2 {
                    cands.push((d2, ri as u32, qi as u32));
                }
            });
            if self.cands.len() > before {
                hit += 1;
            }
        }
        hit >= need
    }

    /// Greedy mutual-nearest resolution in increasing distance order.
    fn resolve(&mut self, mut out: Option<&mut Vec<(usize, usize)>>) -> usize {
        self.cands.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        self.ref_used.iter_mut().for_each(|u| *u = false);
        self.query_used.iter_mut().for_each(|u| *u = false);
        let mut count = 0;
        for &(_, r, q) in &self.cands {
            let (r, q) = (r as usize, q as usize);
            if !self.ref_used[r] && !self.query_used[q] {
                self.ref_used[r] = true;
                self.query_used[q] = true;
                count += 1;
                if let Some(v) = out.as_deref_mut() {
                    v.push((r, q));
                }
            }
        }
        count
    }

    fn score(&mut self, iso: &Isometry, need: usize) -> Option<usize> {
        if !self.collect(iso, need) {
            return None;
        }
        let n = self.resolve(None);
        (n >= need).then_some(n)
    }

    fn pairs(&mut self, iso: &Isometry) -> Vec<(usize, usize)> {
        self.collect(iso, 0);
        let mut out = Vec::new();
        self.resolve(Some(&mut out));
        out.sort_unstable();
        out
    }
}

/// Ordering on candidates: more pairs, then smaller |phi|, then smaller |v|.
fn better(count: usize, iso: &Isometry, best_count: usize, best: &Isometry) -> bool {
    if count != best_count {
        return count > best_count;
    }
    let (a, b) = (iso.phi_deg.abs(), best.phi_deg.abs());
    if a != b {
        return a < b;
    }
    iso.translation_norm() < best.translation_norm()
}

fn wrap_pi(mut x: f64) -> f64 {
    use std::f64::consts::PI;
    while x > PI {
        x -= 2.0 * PI;
    }
    while x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Find the isometry mapping `query` onto `reference` with the most
/// mutual-nearest correspondences closer than `params.delta`.
pub fn match_points(reference: &[Pixel], query: &[Pixel], params: &MatchParams) -> MatchResult {
    let refs: Vec<Point> = reference.iter().map(|&p| Point::from_pixel(p)).collect();
    let qs: Vec<Point> = query.iter().map(|&p| Point::from_pixel(p)).collect();
    match_float(&refs, &qs, params)
}

/// [`match_points`] on real-valued coordinates.
pub fn match_float(reference: &[Point], query: &[Point], params: &MatchParams) -> MatchResult {
    if reference.len() < 2 || query.len() < 2 {
        return MatchResult::empty();
    }
    let omega = params.omega_deg.to_radians();
    let pivot = params.pivot;

    // ordered query pairs sorted by length
    let mut qpairs: Vec<(f64, f64, u32)> = Vec::with_capacity(query.len() * (query.len() - 1));
    for (i, a) in query.iter().enumerate() {
        for (j, b) in query.iter().enumerate() {
            if i != j {
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                qpairs.push((dx.hypot(dy), direction(dx, dy), i as u32));
            }
        }
    }
    qpairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let rotated_rel: Vec<(f64, f64)> = query
        .iter()
        .map(|q| (q.x - pivot.x, q.y - pivot.y))
        .collect();

    let mut scorer = Scorer::new(reference, query, params);
    let mut best: Option<(usize, Isometry)> = None;

    for i in 0..reference.len() {
        for j in i + 1..reference.len() {
            let (ri, rj) = (reference[i], reference[j]);
            let (dx, dy) = (rj.x - ri.x, rj.y - ri.y);
            let d = dx.hypot(dy);
            let dir_ref = direction(dx, dy);
            let lo = d * (1.0 - params.epsilon);
            let hi = d * (1.0 + params.epsilon);
            let start = qpairs.partition_point(|p| p.0 < lo);
            for &(_, dir_q, qi) in qpairs[start..].iter().take_while(|p| p.0 <= hi) {
                let phi = wrap_pi(dir_ref - dir_q);
                if phi.abs() >= omega {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                let (qx, qy) = rotated_rel[qi as usize];
                let vx = ri.x - (pivot.x + qx * c + qy * s);
                let vy = ri.y - (pivot.y - qx * s + qy * c);
                if vx.hypot(vy) >= params.max_translation {
                    continue;
                }
                let iso = Isometry {
                    phi_deg: phi.to_degrees(),
                    vx,
                    vy,
                    pivot,
                };
                // a tie only wins on a strictly better rotation/translation key
                let need = match &best {
                    None => 0,
                    Some((bc, b)) => {
                        if better(*bc, &iso, *bc, b) {
                            *bc
                        } else {
                            bc + 1
                        }
                    }
                };
                if let Some(count) = scorer.score(&iso, need) {
                    let replace = match &best {
                        None => true,
                        Some((bc, b)) => better(count, &iso, *bc, b),
                    };
                    if replace {
                        best = Some((count, iso));
                    }
                }
            }
        }
    }

    let Some((_, mut iso)) = best else {
        return MatchResult::empty();
    };
    let mut pairs = scorer.pairs(&iso);
    for _ in 0..3 {
        let from: Vec<Point> = pairs.iter().map(|&(_, q)| query[q]).collect();
        let to: Vec<Point> = pairs.iter().map(|&(r, _)| reference[r]).collect();
        let Some(fit) = Isometry::fit(&from, &to, pivot) else {
            break;
        };
        if fit.phi_deg.abs() >= params.omega_deg || fit.translation_norm() >= params.max_translation
        {
            break;
        }
        let refit = scorer.pairs(&fit);
        if refit.len() < pairs.len() {
            // keep the correspondences but report their fitted motion
            iso = fit;
            break;
        }
        let settled = refit == pairs;
        iso = fit;
        pairs = refit;
        if settled {
            break;
        }
    }
    MatchResult {
        isometry: Some(iso),
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Pixel> {
        let mut pts: Vec<Pixel> = Vec::new();
        while pts.len() < n {
            let p = (rng.random_range(150..360), rng.random_range(100..410));
            if pts.iter().all(|&q| crate::geometry::dist(p, q) >= 12.0) {
                pts.push(p);
            }
        }
        pts
    }

    #[test]
    fn identity_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(10, &mut rng);
        let m = match_points(&pts, &pts, &MatchParams::new(5.0));
        let iso = m.isometry.unwrap();
        assert_eq!(iso.phi_deg, 0.0);
        assert_eq!(iso.translation_norm(), 0.0);
        assert_eq!(m.pairs, (0..10).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn recovers_inverse_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = random_points(10, &mut rng);
        let c = Point::new(256.0, 256.0);
        let rotated: Vec<Pixel> = pts
            .iter()
            .map(|&p| rotate_about(Point::from_pixel(p), c, 10f64.to_radians()).round())
            .collect();
        let m = match_points(&pts, &rotated, &MatchParams::new(5.0));
        let phi = m.phi_deg().unwrap();
        assert!((phi + 10.0).abs() <= 1.0, "phi = {phi}");
        assert_eq!(m.n_pairs(), 10);
    }

    #[test]
    fn jitter_and_spurious_fixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(20, &mut rng);
        let mut query: Vec<Pixel> = pts
            .iter()
            .map(|&(a, b)| loop {
                let (dx, dy) = (
                    rng.random_range(-2.0..=2.0f64),
                    rng.random_range(-2.0..=2.0f64),
                );
                if dx.hypot(dy) <= 2.0 {
                    break (a + dx.round() as i32, b + dy.round() as i32);
                }
            })
            .collect();
        for _ in 0..5 {
            query.push((rng.random_range(150..360), rng.random_range(100..410)));
        }
        let m = match_points(&pts, &query, &MatchParams::new(7.0));
        let correct = m.pairs.iter().filter(|&&(r, q)| r == q).count();
        let spurious = m.pairs.len() - correct;
        assert!(correct >= 18, "correct = {correct}");
        assert!(spurious <= 2, "spurious = {spurious}");
    }

    #[test]
    fn empty_when_limits_exclude_everything() {
        let pts = vec![(200, 200), (300, 300), (250, 320)];
        let far: Vec<Pixel> = pts.iter().map(|&(a, b)| (a + 400, b)).collect();
        let m = match_points(&pts, &far, &MatchParams::new(5.0));
        assert_eq!(m, MatchResult::empty());
        assert!(!rotation_gate(&m, 8.0));
        assert_eq!(
            match_points(&pts[..1], &pts, &MatchParams::new(5.0)),
            MatchResult::empty()
        );
    }

    #[test]
    fn gate_boundaries() {
        let mk = |phi| MatchResult {
            isometry: Some(Isometry {
                phi_deg: phi,
                ..Isometry::identity(Point::new(0.0, 0.0))
            }),
            pairs: vec![],
        };
        assert!(rotation_gate(&mk(0.0), 8.0));
        assert!(!rotation_gate(&mk(9.0), 8.0));
        assert!(rotation_gate(&mk(-8.0), 8.0));
    }

    #[test]
    fn inverse_round_trip() {
        let iso = Isometry {
            phi_deg: 12.5,
            vx: 7.0,
            vy: -3.0,
            pivot: Point::new(256.0, 256.0),
        };
        let p = Point::new(100.0, 400.0);
        let back = iso.inverse().apply(iso.apply(p));
        assert!(back.dist(p) < 1e-9);
    }

    #[test]
    fn fit_recovers_exact_isometry() {
        let iso = Isometry {
            phi_deg: -4.0,
            vx: 11.0,
            vy: 5.0,
            pivot: Point::new(256.0, 256.0),
        };
        let from: Vec<Point> = [(100.0, 120.0), (300.0, 80.0), (210.0, 400.0)]
            .iter()
            .map(|&(x, y)| Point::new(x, y))
            .collect();
        let to: Vec<Point> = from.iter().map(|&p| iso.apply(p)).collect();
        let fit = Isometry::fit(&from, &to, iso.pivot).unwrap();
        assert!((fit.phi_deg - iso.phi_deg).abs() < 1e-9);
        assert!((fit.vx - iso.vx).abs() < 1e-6 && (fit.vy - iso.vy).abs() < 1e-6);
    }
}
