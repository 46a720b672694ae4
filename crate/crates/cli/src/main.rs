use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fuzzy_vault::attack::{brute_force_parallel, expected_trials, MAX_FEASIBLE_BITS};
use fuzzy_vault::config::Config;
use fuzzy_vault::experiment::bench;
use fuzzy_vault::matcher::{match_points, MatchParams};
use fuzzy_vault::security::{
    attack_cost_bits, param_search, ReferenceTables, SearchOptions, SecurityInputs, SecurityReport,
};
use fuzzy_vault::synth::{gen_user, sample_impression};
use fuzzy_vault::vault::{enroll, Vault, VaultError};
use fuzzy_vault::verify::{parse_query, verify};

mod files;

use files::{read_impression, read_text, write_impression, write_text, CliError};

#[derive(Parser)]
#[command(name = "ffv", version, about = "Multi-finger fuzzy fingerprint vault")]
struct Cli {
    /// Configuration file (`key = value` lines); defaults apply otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic users with enrollment and query impressions.
    Gen {
        #[arg(long, default_value_t = 1)]
        users: usize,
        /// Output directory; one subdirectory per user.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a vault from a user directory's enrollment impressions.
    Enroll {
        /// Directory written by `gen` (reads `enroll_f<F>_<J>.txt`).
        #[arg(long)]
        user: PathBuf,
        /// Vault file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        reveal_key: bool,
    },
    /// Unlock a vault with one query per finger.
    Verify {
        #[arg(long)]
        vault: PathBuf,
        #[command(flatten)]
        query: QuerySource,
        #[arg(long)]
        reveal_key: bool,
    },
    /// Align two single-finger point lists and list the correspondences.
    Match {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Pair distance tolerance; defaults to `delta_v`.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Brute-force a vault by interpolating random k-subsets.
    Attack {
        #[arg(long)]
        vault: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        /// Template size, known out of band; enables the cost gate and the
        /// expected-trials line.
        #[arg(long)]
        t: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        reveal_key: bool,
    },
    /// Security report for the configured (or overridden) parameters.
    Security(SecurityArgs),
    /// Search parameters reaching a security target.
    Params {
        #[arg(long)]
        fingers: usize,
        #[arg(long)]
        impressions: usize,
        #[arg(long)]
        target: f64,
    },
    /// Enroll and verify synthetic users and summarize error rates.
    Bench {
        #[arg(long, default_value_t = 100)]
        users: usize,
        /// Also write the summary to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    Config,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QuerySource {
    /// Directory written by `gen` (reads `query_f<F>.txt`).
    #[arg(long)]
    user: Option<PathBuf>,
    /// One query file per finger, in finger order.
    #[arg(long)]
    query: Vec<PathBuf>,
}

#[derive(Args)]
struct SecurityArgs {
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    chi: Option<usize>,
    #[arg(long)]
    delta_v: Option<f64>,
    /// Match rate; looked up from the reference tables when absent.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    tau: f64,
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::parse(&read_text(path)?)
            .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_vault(path: &Path) -> Result<Vault, CliError> {
    Vault::from_text(&read_text(path)?)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let cfg = load_config(&cli)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cli.command {
        Command::Gen { users, out } => {
            for i in 0..users {
                let user = gen_user(&cfg.population, &mut rng).map_err(CliError::op("gen"))?;
                let dir = out.join(format!("user_{i:03}"));
                std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
                write_text(&dir.join("truth.txt"), &user.to_text())?;
                for finger in &user.fingers {
                    let f = finger.finger;
                    for j in 1..=cfg.params.impressions {
                        let imp = sample_impression(
                            finger,
                            &cfg.noise,
                            cfg.params.frame,
                            &cfg.params.ellipse,
                            &mut rng,
                        );
                        write_impression(&dir, &format!("enroll_f{f}_{j}"), &imp, &cfg)?;
                    }
                    let imp = sample_impression(
                        finger,
                        &cfg.noise,
                        cfg.params.frame,
                        &cfg.params.ellipse,
                        &mut rng,
                    );
                    write_impression(&dir, &format!("query_f{f}"), &imp, &cfg)?;
                }
            }
            println!("wrote {users} users to {}", out.display());
        }
        Command::Enroll {
            user,
            out,
            reveal_key,
        } => {
            let mut captures = Vec::new();
            for f in 1..=cfg.params.fingers {
                let shots = (1..=cfg.params.impressions)
                    .map(|j| read_impression(&user, &format!("enroll_f{f}_{j}"), f))
                    .collect::<Result<Vec<_>, _>>()?;
                captures.push(shots);
            }
            let enrollment = match enroll(&captures, &cfg.params, &cfg.enroll, &mut rng) {
                Ok(e) => e,
                Err(
                    e @ (VaultError::FingerBelowChi(_) | VaultError::NotEnoughReliableMinutiae),
                ) => {
                    eprintln!("ffv enroll: {e}");
                    return Ok(ExitCode::from(3));
                }
                Err(e) => return Err(CliError::op("enroll")(e)),
            };
            let text = enrollment.vault.to_text();
            match &out {
                Some(path) => {
                    write_text(path, &text)?;
                    println!(
                        "vault written to {} (r={}, k={})",
                        path.display(),
                        enrollment.vault.r(),
                        enrollment.vault.k
                    );
                }
                None => print!("{text}"),
            }
            if reveal_key {
                eprintln!("key {:?}", enrollment.poly.coeffs());
            }
        }
        Command::Verify {
            vault,
            query,
            reveal_key,
        } => {
            let vault = load_vault(&vault)?;
            let queries = match (&query.user, query.query.as_slice()) {
                (Some(dir), _) => (1..=vault.fingers)
                    .map(|f| read_impression(dir, &format!("query_f{f}"), f))
                    .collect::<Result<Vec<_>, _>>()?,
                (None, paths) => paths
                    .iter()
                    .enumerate()
                    .map(|(i, p)| files::read_query_file(p, i as u8 + 1))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let out =
                verify(&vault, &queries, &cfg.verify, &mut rng).map_err(CliError::op("verify"))?;
            for r in &out.per_finger {
                let phi = r.phi_deg.map_or("-".to_string(), |p| format!("{p:.2}"));
                println!(
                    "finger {} matches {} phi {}{}",
                    r.finger,
                    r.n_matches,
                    phi,
                    if r.gated { " gated" } else { "" }
                );
            }
            println!("decode trials {}", out.decode_trials);
            if !out.success {
                println!("Verification failed");
                return Ok(ExitCode::from(1));
            }
            println!("Verification successful");
            if let (true, Some(p)) = (reveal_key, &out.recovered) {
                println!("key {:?}", p.coeffs());
            }
        }
        Command::Match {
            reference,
            query,
            delta,
        } => {
            let reference =
                parse_query(&read_text(&reference)?, 1).map_err(CliError::op("match"))?;
            let query = parse_query(&read_text(&query)?, 1).map_err(CliError::op("match"))?;
            let mp = MatchParams {
                delta: delta.unwrap_or(cfg.params.delta_v),
                epsilon: cfg.params.matcher.epsilon,
                omega_deg: cfg.params.matcher.omega_deg,
                max_translation: cfg.params.matcher.max_translation,
                pivot: cfg.params.frame.center(),
            };
            let rp: Vec<_> = reference.iter().map(|m| m.pixel()).collect();
            let qp: Vec<_> = query.iter().map(|m| m.pixel()).collect();
            let m = match_points(&rp, &qp, &mp);
            match m.isometry {
                Some(iso) => println!("phi {:.3} v ({:.2}, {:.2})", iso.phi_deg, iso.vx, iso.vy),
                None => println!("no alignment"),
            }
            println!("pairs {}", m.n_pairs());
            for (r, q) in &m.pairs {
                println!("{} {} <- {} {}", rp[*r].0, rp[*r].1, qp[*q].0, qp[*q].1);
            }
        }
        Command::Attack {
            vault,
            trials,
            t,
            workers,
            reveal_key,
        } => {
            let vault = load_vault(&vault)?;
            if let Some(t) = t {
                if t <= vault.k || t > vault.r() {
                    return Err(CliError::Usage(format!(
                        "--t must lie in {}..={}",
                        vault.k + 1,
                        vault.r()
                    )));
                }
                let bits = attack_cost_bits(
                    t,
                    vault.r(),
                    vault.k,
                    cfg.params.chi,
                    vault.fingers as usize,
                    cfg.log_base,
                );
                if bits > MAX_FEASIBLE_BITS {
                    eprintln!("ffv attack: predicted cost {bits:.1} bits exceeds {MAX_FEASIBLE_BITS} bits");
                    return Ok(ExitCode::from(3));
                }
                println!(
                    "expected trials {:.1}, predicted cost {bits:.2} bits",
                    expected_trials(t, vault.r(), vault.k)
                );
            }
            let run = brute_force_parallel(&vault, trials, cfg.seed, workers);
            println!("{}", run.log_line());
            if let (true, Some(p)) = (reveal_key, &run.recovered) {
                println!("key {:?}", p.coeffs());
            }
        }
        Command::Security(a) => {
            let p = &cfg.params;
            let delta_v = a.delta_v.unwrap_or(p.delta_v);
            let tables = ReferenceTables::builtin();
            let mu = match a.mu {
                Some(mu) => mu,
                None => tables.match_rate(p.impressions, delta_v).ok_or_else(|| {
                    CliError::Usage(format!(
                        "no tabulated match rate for u={} delta_v={delta_v}; pass --mu",
                        p.impressions
                    ))
                })?,
            };
            let report = SecurityReport::new(SecurityInputs {
                f: a.f.unwrap_or(p.fingers as usize),
                t: a.t.unwrap_or(p.t),
                r: a.r.unwrap_or(p.r),
                k: a.k.unwrap_or(p.k),
                chi: a.chi.unwrap_or(p.chi),
                delta_v,
                d: (1.5 * delta_v).floor() as u32,
                mu,
                tau: a.tau,
                area_px: p.ellipse.area_px(),
                log_base: cfg.log_base,
            });
            print!("{}", report.to_text());
        }
        Command::Params {
            fingers,
            impressions,
            target,
        } => {
            let opts = SearchOptions {
                area_px: cfg.params.ellipse.area_px(),
                log_base: cfg.log_base,
                ..SearchOptions::default()
            };
            let found = match param_search(
                fingers,
                impressions,
                target,
                &ReferenceTables::builtin(),
                &opts,
            ) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("ffv params: {e}");
                    return Ok(ExitCode::from(3));
                }
            };
            println!("delta_e delta_v   t   r   k chi  d    bits    m_c    m_f  margin");
            for c in &found {
                println!(
                    "{:>7} {:>7} {:>3} {:>3} {:>3} {:>3} {:>2} {:>7.2} {:>6.2} {:>6.2} {:>7.3}",
                    c.delta_e,
                    c.delta_v,
                    c.t,
                    c.r,
                    c.k,
                    c.chi,
                    c.d,
                    c.bits,
                    c.m_c,
                    c.m_f,
                    c.k_margin
                );
            }
        }
        Command::Bench { users, out } => {
            let summary = bench(&cfg, users, cfg.seed).map_err(CliError::op("bench"))?;
            let text = format!("seed             {}\n{}", cfg.seed, summary.to_text());
            print!("{text}");
            if let Some(path) = out {
                write_text(&path, &text)?;
            }
        }
        Command::Config => print!("{}", cfg.to_text()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ffv: {e}");
            ExitCode::from(2)
        }
    }
}
