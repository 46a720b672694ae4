//! Synthetic end-to-end runs: enroll a simulated user, verify genuine and
//! impostor queries, and tally error rates and match counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::synth::{gen_user, sample_impression, SynthError, SyntheticImpression, SyntheticUser};
use crate::vault::{enroll_with_recapture, Enrollment, Impression, VaultError};
use crate::verify::{verify, VerifyError, VerifyOutcome};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

fn as_impression(imp: &SyntheticImpression, cfg: &Config) -> Impression {
    if cfg.use_prealign {
        imp.with_mask(cfg.params.frame)
    } else {
        imp.points_only()
    }
}

/// One noisy capture per finger.
pub fn capture_query<R: Rng + ?Sized>(
    user: &SyntheticUser,
    cfg: &Config,
    rng: &mut R,
) -> Vec<Impression> {
    user.fingers
        .iter()
        .map(|f| {
            let imp = sample_impression(f, &cfg.noise, cfg.params.frame, &cfg.params.ellipse, rng);
            as_impression(&imp, cfg)
        })
        .collect()
}

/// Enroll from `u` fresh noisy captures per finger, re-capturing a finger
/// that falls below `chi`.
pub fn enroll_user<R: Rng + ?Sized>(
    user: &SyntheticUser,
    cfg: &Config,
    rng: &mut R,
) -> Result<Enrollment, VaultError> {
    let mut capture_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let capture = |finger: u8, _attempt: u32| -> Vec<Impression> {
        let truth = &user.fingers[finger as usize - 1];
        (0..cfg.params.impressions)
            .map(|_| {
                let imp = sample_impression(
                    truth,
                    &cfg.noise,
                    cfg.params.frame,
                    &cfg.params.ellipse,
                    &mut capture_rng,
                );
                as_impression(&imp, cfg)
            })
            .collect()
    };
    enroll_with_recapture(capture, &cfg.params, &cfg.enroll, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTrial {
    /// `None` on failure to enroll.
    pub genuine: Option<VerifyOutcome>,
    pub impostor: Option<VerifyOutcome>,
    /// Matched vault positions that are genuine / chaff in the genuine query.
    pub correct: usize,
    pub false_matches: usize,
    pub enroll_error: Option<String>,
}

/// Enroll user `seed`, verify a fresh genuine capture and a capture from an
/// independent impostor.
pub fn run_user(
    cfg: &Config,
    seed: u64,
    with_impostor: bool,
) -> Result<UserTrial, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user = gen_user(&cfg.population, &mut rng)?;
    let impostor = gen_user(&cfg.population, &mut rng)?;
    let enrollment = match enroll_user(&user, cfg, &mut rng) {
        Ok(e) => e,
        Err(e) => {
            return Ok(UserTrial {
                genuine: None,
                impostor: None,
                correct: 0,
                false_matches: 0,
                enroll_error: Some(e.to_string()),
            })
        }
    };
    let query = capture_query(&user, cfg, &mut rng);
    let genuine = verify(&enrollment.vault, &query, &cfg.verify, &mut rng)?;
    let on_curve = enrollment.vault.positions_on(&enrollment.poly);
    let correct = genuine
        .matched
        .iter()
        .filter(|i| on_curve.binary_search(i).is_ok())
        .count();
    let false_matches = genuine.matched.len() - correct;
    let impostor = if with_impostor {
        let q = capture_query(&impostor, cfg, &mut rng);
        Some(verify(&enrollment.vault, &q, &cfg.verify, &mut rng)?)
    } else {
        None
    };
    Ok(UserTrial {
        genuine: Some(genuine),
        impostor,
        correct,
        false_matches,
        enroll_error: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub users: usize,
    pub fte: usize,
    pub false_rejects: usize,
    pub impostor_accepts: usize,
    pub impostor_trials: usize,
    pub mean_correct: f64,
    pub mean_false: f64,
}

impl BenchSummary {
    pub fn fte_rate(&self) -> f64 {
        self.fte as f64 / self.users as f64
    }

    pub fn frr(&self) -> f64 {
        let enrolled = self.users - self.fte;
        if enrolled == 0 {
            0.0
        } else {
            self.false_rejects as f64 / enrolled as f64
        }
    }

    pub fn far(&self) -> f64 {
        if self.impostor_trials == 0 {
            0.0
        } else {
            self.impostor_accepts as f64 / self.impostor_trials as f64
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "users            {}\n\
             FTE%             {:.2}\n\
             FRR%             {:.2}\n\
             impostor_accept% {:.2}\n\
             mean_m_c         {:.2}\n\
             mean_m_f         {:.2}\n",
            self.users,
            100.0 * self.fte_rate(),
            100.0 * self.frr(),
            100.0 * self.far(),
            self.mean_correct,
            self.mean_false
        )
    }
}

/// Run users `base_seed .. base_seed + users`.
pub fn bench(cfg: &Config, users: usize, base_seed: u64) -> Result<BenchSummary, ExperimentError> {
    let mut s = BenchSummary {
        users,
        fte: 0,
        false_rejects: 0,
        impostor_accepts: 0,
        impostor_trials: 0,
        mean_correct: 0.0,
        mean_false: 0.0,
    };
    let (mut correct, mut false_matches) = (0usize, 0usize);
    for i in 0..users as u64 {
        let trial = run_user(cfg, base_seed + i, true)?;
        let Some(g) = &trial.genuine else {
            s.fte += 1;
            continue;
        };
        if !g.success {
            s.false_rejects += 1;
        }
        correct += trial.correct;
        false_matches += trial.false_matches;
        if let Some(imp) = &trial.impostor {
            s.impostor_trials += 1;
            if imp.success {
                s.impostor_accepts += 1;
            }
        }
    }
    let enrolled = (users - s.fte).max(1) as f64;
    s.mean_correct = correct as f64 / enrolled;
    s.mean_false = false_matches as f64 / enrolled;
    Ok(s)
}
