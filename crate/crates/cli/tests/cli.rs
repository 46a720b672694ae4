use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ffv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffv"))
        .args(args)
        .output()
        .expect("run ffv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("ffv.conf");
    std::fs::write(&path, extra).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_noise_enroll_then_verify() {
    let dir = scratch("zero_noise");
    let conf = write_config(
        &dir,
        "jitter_radius = 0\np_delete = 0\nn_spurious = 0\nglobal_rot = 0\nglobal_trans = 0\n",
    );
    let conf = s(&conf);
    let out = ffv(&[
        "--config",
        conf,
        "--seed",
        "3",
        "gen",
        "--users",
        "1",
        "--out",
        s(&dir),
    ]);
    assert!(out.status.success(), "{out:?}");
    let user = dir.join("user_000");
    assert!(user.join("truth.txt").exists());
    assert!(user.join("enroll_f2_2.pgm").exists());
    let vault = dir.join("vault.txt");
    let out = ffv(&[
        "--config",
        conf,
        "--seed",
        "4",
        "enroll",
        "--user",
        s(&user),
        "--out",
        s(&vault),
    ]);
    assert!(out.status.success(), "{out:?}");
    let out = ffv(&[
        "--config",
        conf,
        "--seed",
        "5",
        "verify",
        "--vault",
        s(&vault),
        "--user",
        s(&user),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("Verification successful"));
    assert!(!text.contains("key"), "coefficients leaked: {text}");
    let out = ffv(&[
        "--config",
        conf,
        "--seed",
        "5",
        "verify",
        "--vault",
        s(&vault),
        "--user",
        s(&user),
        "--reveal-key",
    ]);
    assert!(stdout(&out).contains("key ["));
}

#[test]
fn enrollment_is_reproducible() {
    let dir = scratch("repro");
    assert!(ffv(&["--seed", "8", "gen", "--out", s(&dir)])
        .status
        .success());
    let user = dir.join("user_000");
    let a = ffv(&["--seed", "1", "enroll", "--user", s(&user)]);
    let b = ffv(&["--seed", "1", "enroll", "--user", s(&user)]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("FFV1\n"));
}

#[test]
fn impostor_query_is_rejected() {
    let dir = scratch("impostor");
    assert!(
        ffv(&["--seed", "11", "gen", "--users", "2", "--out", s(&dir)])
            .status
            .success()
    );
    let vault = dir.join("vault.txt");
    let enroll = ffv(&[
        "--seed",
        "2",
        "enroll",
        "--user",
        s(&dir.join("user_000")),
        "--out",
        s(&vault),
    ]);
    assert!(enroll.status.success(), "{enroll:?}");
    let q1 = dir.join("user_001/query_f1.txt");
    let q2 = dir.join("user_001/query_f2.txt");
    let out = ffv(&[
        "verify",
        "--vault",
        s(&vault),
        "--query",
        s(&q1),
        "--query",
        s(&q2),
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    assert!(stdout(&out).contains("Verification failed"));
}

#[test]
fn enrollment_failure_exits_3() {
    let dir = scratch("fte");
    let user = dir.join("user");
    std::fs::create_dir_all(&user).unwrap();
    for f in 1..=2 {
        for j in 1..=2 {
            std::fs::write(user.join(format!("enroll_f{f}_{j}.txt")), "256 256 0.9\n").unwrap();
        }
    }
    let out = ffv(&["enroll", "--user", s(&user)]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn security_report_for_printed_row() {
    let out = ffv(&[
        "security",
        "--f",
        "2",
        "--t",
        "62",
        "--r",
        "240",
        "--k",
        "27",
        "--chi",
        "9",
        "--delta-v",
        "5",
        "--mu",
        "0.8",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let bits: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("attack_bits"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((bits - 68.0).abs() <= 2.0, "{text}");
}

#[test]
fn params_search_and_infeasible_target() {
    let out = ffv(&[
        "params",
        "--fingers",
        "2",
        "--impressions",
        "2",
        "--target",
        "68",
    ]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).lines().count() > 1);
    let out = ffv(&[
        "params",
        "--fingers",
        "2",
        "--impressions",
        "2",
        "--target",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn attack_tiny_vault_and_cost_gate() {
    let dir = scratch("attack");
    let conf = write_config(&dir, "t = 10\nr = 30\nk = 4\nchi = 3\n");
    let conf = s(&conf);
    assert!(
        ffv(&["--config", conf, "--seed", "6", "gen", "--out", s(&dir)])
            .status
            .success()
    );
    let vault = dir.join("vault.txt");
    let out = ffv(&[
        "--config",
        conf,
        "enroll",
        "--user",
        s(&dir.join("user_000")),
        "--out",
        s(&vault),
    ]);
    assert!(out.status.success(), "{out:?}");
    let out = ffv(&[
        "--config",
        conf,
        "attack",
        "--vault",
        s(&vault),
        "--t",
        "10",
        "--trials",
        "100000",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("success=true"), "{text}");
    assert!(!text.contains("key ["));

    let big = dir.join("big.txt");
    let conf_big = write_config(&dir, "t = 30\nr = 150\nk = 20\nchi = 5\n");
    let out = ffv(&[
        "--config",
        s(&conf_big),
        "gen",
        "--out",
        s(&dir.join("big")),
    ]);
    assert!(out.status.success());
    let out = ffv(&[
        "--config",
        s(&conf_big),
        "enroll",
        "--user",
        s(&dir.join("big/user_000")),
        "--out",
        s(&big),
    ]);
    assert!(out.status.success(), "{out:?}");
    let out = ffv(&[
        "--config",
        s(&conf_big),
        "attack",
        "--vault",
        s(&big),
        "--t",
        "30",
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn match_lists_pairs() {
    let dir = scratch("match");
    let pts = "200 200\n260 210\n230 300\n300 280\n250 150\n";
    let shifted = "205 203\n265 213\n235 303\n305 283\n";
    std::fs::write(dir.join("a.txt"), pts).unwrap();
    std::fs::write(dir.join("b.txt"), shifted).unwrap();
    let out = ffv(&[
        "match",
        "--reference",
        s(&dir.join("a.txt")),
        "--query",
        s(&dir.join("b.txt")),
    ]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("pairs 4"), "{}", stdout(&out));
}

#[test]
fn usage_and_format_errors_exit_2() {
    assert_eq!(ffv(&["frobnicate"]).status.code(), Some(2));
    let dir = scratch("format");
    let bad = dir.join("bad.txt");
    std::fs::write(&bad, "not a vault\n").unwrap();
    let out = ffv(&["verify", "--vault", s(&bad), "--query", s(&bad)]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let conf = write_config(&dir, "bogus = 1\n");
    assert_eq!(
        ffv(&["--config", s(&conf), "config"]).status.code(),
        Some(2)
    );
}

#[test]
fn config_round_trips() {
    let out = ffv(&["--seed", "42", "config"]);
    assert!(out.status.success());
    let dir = scratch("config");
    let path = dir.join("c.conf");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = ffv(&["--config", s(&path), "config"]);
    assert_eq!(out.stdout, again.stdout);
    assert!(stdout(&out).contains("seed = 42"));
}

#[test]
fn bench_prints_summary() {
    let dir = scratch("bench");
    let out_file = dir.join("bench.txt");
    let out = ffv(&[
        "--seed",
        "1",
        "bench",
        "--users",
        "3",
        "--out",
        s(&out_file),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(out_file).unwrap();
    for key in ["FTE%", "FRR%", "impostor_accept%", "mean_m_c", "mean_m_f"] {
        assert!(text.contains(key), "{text}");
    }
}
