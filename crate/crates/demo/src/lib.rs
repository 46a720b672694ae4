//! Browser bindings for a small interactive tour of the vault: the brute-force
//! cost curve, enrolling and verifying a synthetic user, and pre-alignment of
//! a rotated finger silhouette. Everything here also builds natively so the
//! workspace tests cover it.

use fuzzy_vault::config::Config;
use fuzzy_vault::experiment::{capture_query, enroll_user};
use fuzzy_vault::geometry::Pixel;
use fuzzy_vault::matcher::Isometry;
use fuzzy_vault::prealign::{apply_rotation, prealign, render_hull_mask, PrealignParams};
use fuzzy_vault::security::{attack_cost_bits, LogBase};
use fuzzy_vault::synth::{gen_user, NoiseModel, SyntheticUser};
use fuzzy_vault::vault::Enrollment;
use fuzzy_vault::verify::verify;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Attack cost in bits for every vault size `r` in `r_from..=r_to`; NaN where
/// `r < t`.
#[wasm_bindgen]
pub fn security_curve(
    t: usize,
    k: usize,
    chi: usize,
    fingers: usize,
    r_from: usize,
    r_to: usize,
) -> Vec<f64> {
    (r_from..=r_to)
        .map(|r| {
            if r < t || t < k || fingers == 0 {
                f64::NAN
            } else {
                attack_cost_bits(t, r, k, chi, fingers, LogBase::Two)
            }
        })
        .collect()
}

/// Moderate noise scaled by `level`; 0 is a perfect capture.
fn scaled_noise(level: f64) -> NoiseModel {
    let level = level.clamp(0.0, 2.0);
    let m = NoiseModel::moderate();
    NoiseModel {
        jitter_radius: m.jitter_radius * level,
        p_delete: (m.p_delete * level).min(0.9),
        n_spurious: m.n_spurious * level,
        global_rot: m.global_rot * level,
        global_trans: m.global_trans * level,
        ..m
    }
}

/// One enrolled synthetic user plus an impostor to query with.
#[wasm_bindgen]
pub struct Session {
    cfg: Config,
    user: SyntheticUser,
    impostor: SyntheticUser,
    enrollment: Enrollment,
    rng: ChaCha8Rng,
    matched: Vec<u32>,
}

#[wasm_bindgen]
impl Session {
    /// Enrolls user `seed` with the default two-finger setup.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Session, JsError> {
        let cfg = Config::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user = gen_user(&cfg.population, &mut rng)?;
        let impostor = gen_user(&cfg.population, &mut rng)?;
        let enrollment = enroll_user(&user, &cfg, &mut rng)?;
        Ok(Session {
            cfg,
            user,
            impostor,
            enrollment,
            rng,
            matched: Vec::new(),
        })
    }

    pub fn fingers(&self) -> u8 {
        self.enrollment.vault.fingers
    }

    pub fn frame_width(&self) -> u32 {
        self.cfg.params.frame.width
    }

    pub fn frame_height(&self) -> u32 {
        self.cfg.params.frame.height
    }

    /// Vault points flattened as `finger, a, b` triples in vault order.
    pub fn vault_points(&self) -> Vec<i32> {
        self.enrollment
            .vault
            .points
            .iter()
            .flat_map(|p| [p.finger as i32, p.a, p.b])
            .collect()
    }

    /// 1-based positions of the genuine points. Only the enrolling side knows
    /// these; the page shows them on request.
    pub fn genuine_positions(&self) -> Vec<u32> {
        self.enrollment
            .vault
            .positions_on(&self.enrollment.poly)
            .into_iter()
            .map(|i| i as u32)
            .collect()
    }

    /// Captures a fresh query from the user (or the impostor) and runs the
    /// full verification. Returns a one-line summary.
    pub fn verify(&mut self, impostor: bool, noise_level: f64) -> Result<String, JsError> {
        let mut cfg = self.cfg.clone();
        cfg.noise = scaled_noise(noise_level);
        let who = if impostor { &self.impostor } else { &self.user };
        let query = capture_query(who, &cfg, &mut self.rng);
        let out = verify(&self.enrollment.vault, &query, &cfg.verify, &mut self.rng)?;
        self.matched = out.matched.iter().map(|&i| i as u32).collect();
        let on_curve = self.enrollment.vault.positions_on(&self.enrollment.poly);
        let correct = out
            .matched
            .iter()
            .filter(|i| on_curve.binary_search(i).is_ok())
            .count();
        let fingers: Vec<String> = out
            .per_finger
            .iter()
            .map(|f| {
                let phi = f.phi_deg.map_or("-".into(), |p| format!("{p:.1}"));
                let gate = if f.gated { " gated" } else { "" };
                format!(
                    "finger {}: {} matches, rotation {phi}{gate}",
                    f.finger, f.n_matches
                )
            })
            .collect();
        Ok(format!(
            "{}; {} matched ({} genuine); {} decoder calls; {}",
            if out.success {
                "key recovered"
            } else {
                "rejected"
            },
            out.matched.len(),
            correct,
            out.decode_trials,
            fingers.join("; ")
        ))
    }

    /// Vault positions matched by the last query.
    pub fn last_matched(&self) -> Vec<u32> {
        self.matched.clone()
    }
}

/// A silhouette before and after pre-alignment.
#[wasm_bindgen(getter_with_clone)]
pub struct AlignmentView {
    pub width: u32,
    pub height: u32,
    /// Rotation the pre-aligner applied, in degrees.
    pub rotation: i32,
    pub before: Vec<u8>,
    pub after: Vec<u8>,
}

/// Hull silhouette of synthetic finger `seed` turned by `tilt_deg`, and the
/// result of pre-aligning it.
#[wasm_bindgen]
pub fn prealign_demo(seed: u64, tilt_deg: f64) -> Result<AlignmentView, JsError> {
    let cfg = Config::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user = gen_user(&cfg.population, &mut rng)?;
    let frame = cfg.params.frame;
    let turn = Isometry {
        phi_deg: tilt_deg,
        vx: 0.0,
        vy: 0.0,
        pivot: frame.center(),
    };
    let pts: Vec<Pixel> = user.fingers[0]
        .minutiae
        .iter()
        .map(|m| turn.apply_pixel(m.pixel()).round())
        .collect();
    let before = render_hull_mask(&pts, frame.width as usize, frame.height as usize);
    let report = prealign(&before, &PrealignParams::default())?;
    let after = apply_rotation(&before, report.total_rotation as f64);
    Ok(AlignmentView {
        width: frame.width,
        height: frame.height,
        rotation: report.total_rotation,
        before: before.pixels().to_vec(),
        after: after.pixels().to_vec(),
    })
}
