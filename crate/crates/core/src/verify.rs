//! Verification: per-finger matching against the vault, rotation gating and
//! polynomial recovery checked against the stored commitment.

use rand::seq::index;
use rand::Rng;

use crate::commit::{verify_commit, Commitment};
use crate::field::{FieldPoly, PrimeField};
use crate::geometry::{Frame, Pixel};
use crate::matcher::{match_points, rotation_gate, MatchParams};
use crate::minutia::Minutia;
use crate::prealign::{ImageError, PrealignParams};
use crate::rs::rs_decode;
use crate::vault::{Impression, MatcherLimits, SystemParams, Vault};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("expected queries for {expected} fingers, got {got}")]
    FingerCount { expected: usize, got: usize },
    #[error("pre-alignment failed: {0}")]
    Prealign(#[from] ImageError),
    #[error("malformed query line {line}: {reason}")]
    MalformedQuery { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyParams {
    pub delta_v: f64,
    pub quality_min: f64,
    pub rotation_gate: f64,
    pub matcher: MatcherLimits,
    pub frame: Frame,
    /// Expected number of correct matches; sizes the stage-2 subsets. `None`
    /// makes stage 2 draw `k`-subsets.
    pub expected_correct: Option<usize>,
    /// Expected number of chaff matches. A query with `n` matches is assumed
    /// to hold at most `n - expected_false` correct ones.
    pub expected_false: usize,
    /// Stage-2 subset trials.
    pub budget: usize,
    pub prealign: PrealignParams,
}

impl From<&SystemParams> for VerifyParams {
    fn from(p: &SystemParams) -> Self {
        Self {
            delta_v: p.delta_v,
            quality_min: p.quality_min,
            rotation_gate: p.rotation_gate,
            matcher: p.matcher,
            frame: p.frame,
            expected_correct: None,
            expected_false: 0,
            budget: 100_000,
            prealign: PrealignParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerReport {
    pub finger: u8,
    pub n_matches: usize,
    pub phi_deg: Option<f64>,
    /// True when the finger was rejected by the rotation gate.
    pub gated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub success: bool,
    pub recovered: Option<FieldPoly>,
    pub per_finger: Vec<FingerReport>,
    /// Decoder invocations, stage 1 included.
    pub decode_trials: usize,
    /// Matched vault positions (1-based, sorted).
    pub matched: Vec<usize>,
}

/// Keep minutiae with quality at least `q_min`; minutiae without a quality
/// survive only when `q_min` is zero.
pub fn quality_filter(query: &[Minutia], q_min: f64) -> Vec<Minutia> {
    query
        .iter()
        .filter(|m| match m.quality {
            Some(q) => q >= q_min,
            None => q_min == 0.0,
        })
        .copied()
        .collect()
}

/// Match each finger's query against that finger's vault points and collect
/// the matched positions of fingers passing the rotation gate.
pub fn collect_matches(
    vault: &Vault,
    queries: &[Vec<Minutia>],
    params: &VerifyParams,
) -> Result<(Vec<usize>, Vec<FingerReport>), VerifyError> {
    if queries.len() != vault.fingers as usize {
        return Err(VerifyError::FingerCount {
            expected: vault.fingers as usize,
            got: queries.len(),
        });
    }
    let mp = MatchParams {
        delta: params.delta_v,
        epsilon: params.matcher.epsilon,
        omega_deg: params.matcher.omega_deg,
        max_translation: params.matcher.max_translation,
        pivot: params.frame.center(),
    };
    let mut matched = Vec::new();
    let mut reports = Vec::with_capacity(queries.len());
    for (i, query) in queries.iter().enumerate() {
        let finger = i as u8 + 1;
        let (positions, reference) = vault.finger_points(finger);
        let filtered: Vec<Pixel> = quality_filter(query, params.quality_min)
            .iter()
            .map(Minutia::pixel)
            .collect();
        let m = match_points(&reference, &filtered, &mp);
        let gated = m.isometry.is_some() && !rotation_gate(&m, params.rotation_gate);
        if !gated {
            matched.extend(m.pairs.iter().map(|&(r, _)| positions[r]));
        }
        reports.push(FingerReport {
            finger,
            n_matches: m.n_pairs(),
            phi_deg: m.phi_deg(),
            gated,
        });
    }
    matched.sort_unstable();
    Ok((matched, reports))
}

/// Result of [`recover`]: the verified polynomial and decoder invocations.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub poly: Option<FieldPoly>,
    pub trials: usize,
}

/// Stage-2 subset size `min(n, max(k, 2 m_c - k))`.
pub fn subset_size(n: usize, k: usize, expected_correct: Option<usize>) -> usize {
    let m_c = expected_correct.unwrap_or(k);
    n.min(k.max((2 * m_c).saturating_sub(k)))
}

impl VerifyParams {
    /// The correct-match estimate for a query with `n` matches.
    pub fn correct_estimate(&self, n: usize) -> Option<usize> {
        self.expected_correct
            .map(|m| m.min(n.saturating_sub(self.expected_false)))
    }
}

/// Decode all points, then random subsets, until a candidate matches the
/// commitment or the budget runs out.
#[allow(clippy::too_many_arguments)]
pub fn recover<R: Rng + ?Sized>(
    points: &[(u64, u64)],
    k: usize,
    field: PrimeField,
    commitment: &Commitment,
    expected_correct: Option<usize>,
    budget: usize,
    rng: &mut R,
) -> Recovery {
    let n = points.len();
    if n < k || k == 0 {
        return Recovery {
            poly: None,
            trials: 0,
        };
    }
    let check = |pts: &[(u64, u64)]| -> Option<FieldPoly> {
        rs_decode(pts, k, field)
            .ok()
            .flatten()
            .filter(|p| verify_commit(p, commitment))
    };
    if let Some(p) = check(points) {
        return Recovery {
            poly: Some(p),
            trials: 1,
        };
    }
    let w = subset_size(n, k, expected_correct);
    let mut trials = 1;
    if w == n {
        return Recovery { poly: None, trials };
    }
    let mut subset = Vec::with_capacity(w);
    for _ in 0..budget {
        trials += 1;
        subset.clear();
        subset.extend(index::sample(rng, n, w).iter().map(|i| points[i]));
        if let Some(p) = check(&subset) {
            return Recovery {
                poly: Some(p),
                trials,
            };
        }
    }
    Recovery { poly: None, trials }
}

/// Full verification of one query impression per finger.
pub fn verify<R: Rng + ?Sized>(
    vault: &Vault,
    queries: &[Impression],
    params: &VerifyParams,
    rng: &mut R,
) -> Result<VerifyOutcome, VerifyError> {
    let aligned = queries
        .iter()
        .map(|q| q.aligned(&params.prealign).map(|(m, _)| m))
        .collect::<Result<Vec<_>, _>>()?;
    let (matched, per_finger) = collect_matches(vault, &aligned, params)?;
    let points: Vec<(u64, u64)> = matched.iter().map(|&i| vault.graph_point(i)).collect();
    let rec = recover(
        &points,
        vault.k,
        vault.field,
        &vault.commitment,
        params.correct_estimate(points.len()),
        params.budget,
        rng,
    );
    Ok(VerifyOutcome {
        success: rec.poly.is_some(),
        recovered: rec.poly,
        per_finger,
        decode_trials: rec.trials,
        matched,
    })
}

/// Parse one finger's query: lines `<a> <b> [quality]`; blank lines and
/// `#` comments are skipped.
pub fn parse_query(text: &str, finger: u8) -> Result<Vec<Minutia>, VerifyError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| VerifyError::MalformedQuery {
            line: n + 1,
            reason: reason.into(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&f.len()) {
            return Err(bad("expected `<a> <b> [quality]`"));
        }
        let a = f[0].parse().map_err(|_| bad("bad coordinate"))?;
        let b = f[1].parse().map_err(|_| bad("bad coordinate"))?;
        let mut m = Minutia::new(finger, a, b);
        if let Some(q) = f.get(2) {
            let q: f64 = q.parse().map_err(|_| bad("bad quality"))?;
            if !(0.0..=1.0).contains(&q) {
                return Err(bad("quality outside [0, 1]"));
            }
            m = m.with_quality(q);
        }
        out.push(m);
    }
    Ok(out)
}

pub fn format_query(minutiae: &[Minutia]) -> String {
    let mut s = String::new();
    for m in minutiae {
        match m.quality {
            Some(q) => s.push_str(&format!("{} {} {:.4}\n", m.a, m.b, q)),
            None => s.push_str(&format!("{} {}\n", m.a, m.b)),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commit::commit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quality_filter_rules() {
        let ms = vec![
            Minutia::new(1, 0, 0).with_quality(0.1),
            Minutia::new(1, 1, 0).with_quality(0.25),
            Minutia::new(1, 2, 0).with_quality(0.9),
            Minutia::new(1, 3, 0),
        ];
        assert_eq!(quality_filter(&ms, 0.0), ms);
        assert_eq!(quality_filter(&ms, 0.3), vec![ms[2]]);
    }

    fn planted(k: usize, correct: usize, wrong: usize, seed: u64) -> (FieldPoly, Vec<(u64, u64)>) {
        let field = PrimeField::new(257).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FieldPoly::random(k, field, &mut rng);
        let xs = index::sample(&mut rng, 257, correct + wrong);
        let pts = xs
            .iter()
            .enumerate()
            .map(|(n, x)| {
                let y = p.eval(x as u64);
                let y = if n < correct {
                    y
                } else {
                    field.random_except(y, &mut rng)
                };
                (x as u64, y)
            })
            .collect();
        (p, pts)
    }

    #[test]
    fn stage_one_when_all_genuine() {
        let (p, pts) = planted(8, 20, 0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = recover(&pts, 8, p.field(), &commit(&p), None, 10, &mut rng);
        assert_eq!(r.poly, Some(p));
        assert_eq!(r.trials, 1);
    }

    #[test]
    fn stage_one_at_threshold() {
        let (p, pts) = planted(8, 14, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = recover(&pts, 8, p.field(), &commit(&p), None, 0, &mut rng);
        assert_eq!(r.poly, Some(p));
        assert_eq!(r.trials, 1);
    }

    #[test]
    fn stage_two_finds_clean_subset() {
        let (p, pts) = planted(3, 3, 9, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = recover(&pts, 3, p.field(), &commit(&p), None, 100_000, &mut rng);
        assert_eq!(r.poly, Some(p));
        assert!(r.trials > 1);
    }

    #[test]
    fn too_few_points_fail_immediately() {
        let (p, pts) = planted(5, 4, 0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = recover(&pts, 5, p.field(), &commit(&p), None, 10, &mut rng);
        assert_eq!(
            r,
            Recovery {
                poly: None,
                trials: 0
            }
        );
    }

    #[test]
    fn subset_sizes() {
        assert_eq!(subset_size(20, 8, None), 8);
        assert_eq!(subset_size(20, 8, Some(12)), 16);
        assert_eq!(subset_size(10, 8, Some(12)), 10);
        assert_eq!(subset_size(20, 8, Some(3)), 8);
    }

    #[test]
    fn estimate_capped_by_match_count() {
        let p = VerifyParams {
            expected_correct: Some(9),
            expected_false: 6,
            ..VerifyParams::from(&SystemParams::new(2, 2, 20, 80, 8, 5, 10.0, 7.0, 0.3))
        };
        assert_eq!(p.correct_estimate(24), Some(9));
        assert_eq!(p.correct_estimate(13), Some(7));
        assert_eq!(p.correct_estimate(4), Some(0));
        assert_eq!(
            VerifyParams {
                expected_correct: None,
                ..p
            }
            .correct_estimate(13),
            None
        );
    }

    #[test]
    fn query_text_round_trip() {
        let ms = vec![
            Minutia::new(2, 10, 20).with_quality(0.5),
            Minutia::new(2, 30, 40),
        ];
        assert_eq!(parse_query(&format_query(&ms), 2).unwrap(), ms);
        assert!(parse_query("1 2 3 4", 1).is_err());
        assert!(parse_query("1 2 1.5", 1).is_err());
        assert_eq!(
            parse_query("# c\n\n5 6\n", 1).unwrap(),
            vec![Minutia::new(1, 5, 6)]
        );
    }
}
