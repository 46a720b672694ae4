//! Brute-force template recovery: interpolate random `k`-subsets of the vault
//! and test each candidate against the commitment.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commit::verify_commit;
use crate::field::{lagrange_interpolate, FieldPoly};
use crate::security::{attack_cost_bits, ops_per_trial, LogBase};
use crate::vault::Vault;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("predicted cost of {0:.1} bits exceeds the 40-bit desk-scale limit")]
    Infeasible(f64),
}

/// Predicted attacks above this many bits are refused.
pub const MAX_FEASIBLE_BITS: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRun {
    pub trials: u64,
    pub success: bool,
    pub recovered: Option<FieldPoly>,
    pub elapsed: Duration,
    pub seed: u64,
}

impl AttackRun {
    /// One-line record for an experiment log.
    pub fn log_line(&self) -> String {
        format!(
            "seed={} trials={} success={} elapsed_ms={:.3}",
            self.seed,
            self.trials,
            self.success,
            self.elapsed.as_secs_f64() * 1e3
        )
    }
}

fn trial<R: Rng + ?Sized>(
    vault: &Vault,
    pts: &mut Vec<(u64, u64)>,
    rng: &mut R,
) -> Option<FieldPoly> {
    pts.clear();
    pts.extend(
        index::sample(rng, vault.r(), vault.k)
            .iter()
            .map(|i| vault.graph_point(i + 1)),
    );
    lagrange_interpolate(pts, vault.k, vault.field)
        .ok()
        .filter(|p| verify_commit(p, &vault.commitment))
}

/// Sequential attack from an explicit RNG; stops at the first verified
/// polynomial or after `max_trials`.
pub fn brute_force_with_rng<R: Rng + ?Sized>(
    vault: &Vault,
    max_trials: u64,
    seed: u64,
    rng: &mut R,
) -> AttackRun {
    let start = Instant::now();
    let mut pts = Vec::with_capacity(vault.k);
    let mut trials = 0;
    let mut recovered = None;
    while trials < max_trials && vault.k <= vault.r() {
        trials += 1;
        if let Some(p) = trial(vault, &mut pts, rng) {
            recovered = Some(p);
            break;
        }
    }
    AttackRun {
        trials,
        success: recovered.is_some(),
        recovered,
        elapsed: start.elapsed(),
        seed,
    }
}

pub fn brute_force(vault: &Vault, max_trials: u64, seed: u64) -> AttackRun {
    brute_force_with_rng(
        vault,
        max_trials,
        seed,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

/// Attack on `workers` threads sharing a stop flag. Worker `w` draws from
/// stream `w` of the seeded generator; the trial count sums all workers.
pub fn brute_force_parallel(
    vault: &Vault,
    max_trials: u64,
    seed: u64,
    workers: usize,
) -> AttackRun {
    let workers = workers.max(1) as u64;
    let start = Instant::now();
    let stop = AtomicBool::new(false);
    let found: Mutex<Option<FieldPoly>> = Mutex::new(None);
    let mut total = 0;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let share = max_trials / workers + u64::from(w < max_trials % workers);
                let (stop, found) = (&stop, &found);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(w);
                    let mut pts = Vec::with_capacity(vault.k);
                    let mut n = 0;
                    while n < share && !stop.load(Ordering::Relaxed) {
                        n += 1;
                        if let Some(p) = trial(vault, &mut pts, &mut rng) {
                            stop.store(true, Ordering::Relaxed);
                            found.lock().unwrap().get_or_insert(p);
                            break;
                        }
                    }
                    n
                })
            })
            .collect();
        total = handles.into_iter().map(|h| h.join().unwrap()).sum();
    });
    let recovered = found.into_inner().unwrap();
    AttackRun {
        trials: total,
        success: recovered.is_some(),
        recovered,
        elapsed: start.elapsed(),
        seed,
    }
}

/// Exact expected trials `C(r, k) / C(t, k)` for uniform `k`-subsets.
pub fn expected_trials(t: usize, r: usize, k: usize) -> f64 {
    (0..k).map(|i| (r - i) as f64 / (t - i) as f64).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostComparison {
    pub run: AttackRun,
    pub measured_trials_log2: f64,
    pub expected_trials_log2: f64,
    /// `log2(trials * 6.5 * 18 * k log^2 k)`.
    pub measured_ops_log2: f64,
    pub predicted_ops_log2: f64,
}

/// Run the attack to completion and set the measured effort beside the
/// predicted cost. `t` and `chi` are supplied out of band.
pub fn measured_vs_predicted(
    vault: &Vault,
    t: usize,
    chi: usize,
    seed: u64,
    base: LogBase,
) -> Result<CostComparison, AttackError> {
    let (r, k) = (vault.r(), vault.k);
    let predicted = if r > t {
        attack_cost_bits(t, r, k, chi, vault.fingers as usize, base)
    } else {
        0.0
    };
    if predicted > MAX_FEASIBLE_BITS {
        return Err(AttackError::Infeasible(predicted));
    }
    let run = brute_force(vault, u64::MAX, seed);
    let trials = run.trials as f64;
    Ok(CostComparison {
        measured_trials_log2: trials.log2(),
        expected_trials_log2: expected_trials(t, r, k).log2(),
        measured_ops_log2: (trials * ops_per_trial(k, base)).log2(),
        predicted_ops_log2: predicted,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::minutia::Minutia;
    use crate::vault::{build_vault, SystemParams, Template};

    fn vault(t: usize, r: usize, k: usize, seed: u64) -> (Vault, FieldPoly) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = SystemParams::new(2, 1, t, r.max(t + 1), k, 1, 10.0, 7.0, 0.0);
        p.field = PrimeField::at_least(r as u64);
        let all: Vec<Minutia> = (0..r)
            .map(|i| {
                let n = i as i32 / 2;
                Minutia::new(1 + (i % 2) as u8, 160 + 12 * (n % 16), 100 + 12 * (n / 16))
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

    #[test]
    fn all_genuine_succeeds_first_trial() {
        let (v, p) = vault(10, 10, 4, 1);
        let run = brute_force(&v, 10, 3);
        assert_eq!(run.trials, 1);
        assert_eq!(run.recovered, Some(p));
        assert!(run.log_line().starts_with("seed=3 trials=1 success=true"));
    }

    #[test]
    fn reproducible_per_seed() {
        let (v, _) = vault(10, 30, 4, 2);
        assert_eq!(
            brute_force(&v, 10_000, 9).trials,
            brute_force(&v, 10_000, 9).trials
        );
    }

    #[test]
    fn parallel_recovers() {
        let (v, p) = vault(10, 30, 4, 3);
        let run = brute_force_parallel(&v, 1_000_000, 5, 3);
        assert!(run.success);
        assert_eq!(run.recovered, Some(p));
    }

    #[test]
    fn budget_gate() {
        let (v, _) = vault(62, 240, 28, 4);
        assert!(matches!(
            measured_vs_predicted(&v, 62, 9, 0, LogBase::Two),
            Err(AttackError::Infeasible(_))
        ));
        let (v, _) = vault(10, 10, 4, 5);
        let cmp = measured_vs_predicted(&v, 10, 1, 0, LogBase::Two).unwrap();
        assert_eq!(cmp.measured_trials_log2, 0.0);
    }

    #[test]
    fn expected_trials_oracle() {
        let exact = 27_405.0 / 210.0;
        assert!((expected_trials(10, 30, 4) - exact).abs() < 1e-9);
    }
}
