mod common;

use std::collections::HashMap;
use std::path::PathBuf;

use fuzzy_vault::field::{FieldPoly, PrimeField};
use fuzzy_vault::minutia::Minutia;
use fuzzy_vault::synth::{gen_finger, sample_impression, NoiseModel, PopulationSpec};
use fuzzy_vault::vault::{
    add_chaff, build_vault, enroll_with_recapture, reliable_minutiae, select_template,
    EnrollOptions, Impression, SystemParams, Template, Vault, VaultError,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn golden_params() -> SystemParams {
    let mut p = SystemParams::new(1, 1, 3, 6, 2, 1, 10.0, 7.0, 0.0);
    p.field = PrimeField::new(7).unwrap();
    p
}

fn golden_vault() -> Vault {
    let mut rng = common::rng(2024);
    let p = golden_params();
    let template = Template {
        minutiae: vec![
            Minutia::new(1, 200, 200),
            Minutia::new(1, 250, 300),
            Minutia::new(1, 300, 220),
        ],
    };
    let chaff = [
        Minutia::new(1, 220, 150),
        Minutia::new(1, 256, 256),
        Minutia::new(1, 280, 380),
    ];
    let poly = FieldPoly::new(vec![3, 5], p.field).unwrap();
    build_vault(&template, &chaff, &poly, &p, &mut rng).unwrap()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn golden_vault_file() {
    let v = golden_vault();
    let text = v.to_text();
    let path = data("golden_vault.txt");
    if std::env::var_os("FFV_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let stored = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, stored);
    assert_eq!(Vault::from_text(&stored).unwrap(), v);
    // sha256(b"FFV-COMMIT-1|q=7|k=2|" + bytes([3, 5])) computed outside Rust
    assert_eq!(
        v.commitment.to_hex(),
        "8e9842318a178bbfa3844042e26e1e694014bd966748855590c870762cf925df"
    );
    // P(x) = 3 + 5x over F_7 at the genuine positions
    let poly = FieldPoly::new(vec![3, 5], PrimeField::new(7).unwrap()).unwrap();
    assert_eq!(v.positions_on(&poly).len(), 3);
}

#[test]
fn malformed_vaults_rejected() {
    let good = golden_vault().to_text();
    let cases = [
        good.replace("FFV1", "FFV2"),
        good.replace('\n', "\r\n"),
        good.replacen("H=", "H=0", 1),
        good.replacen("q=7", "q=8", 1),
        good.replacen("r=6", "r=7", 1),
    ];
    for bad in &cases {
        assert!(
            matches!(Vault::from_text(bad), Err(VaultError::MalformedVault(_))),
            "{bad}"
        );
    }
    // swap two point lines to break the ordering
    let mut lines: Vec<&str> = good.lines().collect();
    lines.swap(2, 3);
    let swapped = lines.join("\n") + "\n";
    assert!(Vault::from_text(&swapped).is_err());
}

proptest! {
    /// The vault depends only on the sets, not on how they were listed.
    #[test]
    fn ordering_independence(seed: u64, shuffle_seed: u64) {
        let mut rng = common::rng(seed);
        let params = SystemParams::new(2, 1, 12, 40, 5, 3, 10.0, 7.0, 0.0);
        let mut all = common::spaced_points(40, 11, &params.ellipse, &mut rng);
        all.truncate(40);
        let ms: Vec<Minutia> = all.iter().enumerate().map(|(i, &(a, b))| Minutia::new(1 + (i % 2) as u8, a, b)).collect();
        let template = Template { minutiae: ms[..12].to_vec() };
        let chaff = ms[12..].to_vec();
        let poly = FieldPoly::random(5, params.field, &mut rng);
        let a = build_vault(&template, &chaff, &poly, &params, &mut common::rng(seed ^ 1)).unwrap();
        let mut srng = common::rng(shuffle_seed);
        let mut t2 = template.clone();
        t2.minutiae.shuffle(&mut srng);
        let mut c2 = chaff.clone();
        c2.shuffle(&mut srng);
        let b = build_vault(&t2, &c2, &poly, &params, &mut common::rng(seed ^ 1)).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert_eq!(a.positions_on(&poly).len(), 12);
    }

    #[test]
    fn text_round_trip(seed in 0u64..200) {
        let mut rng = common::rng(seed);
        let params = SystemParams::new(2, 1, 10, 30, 4, 2, 10.0, 7.0, 0.0);
        let pts = common::spaced_points(10, 11, &params.ellipse, &mut rng);
        let template = Template {
            minutiae: pts.iter().enumerate().map(|(i, &(a, b))| Minutia::new(1 + (i % 2) as u8, a, b)).collect(),
        };
        let chaff = add_chaff(&template.minutiae, 20, &params, 10_000, &mut rng).unwrap();
        let poly = FieldPoly::random(4, params.field, &mut rng);
        let v = build_vault(&template, &chaff, &poly, &params, &mut rng).unwrap();
        prop_assert_eq!(Vault::from_text(&v.to_text()).unwrap(), v);
    }
}

/// With pool 3 + 3, t = 4 and chi = 2 exactly the nine 2 + 2 splits are
/// admissible; each must come up equally often.
#[test]
fn template_selection_is_uniform() {
    let pool = vec![
        (0..3)
            .map(|i| Minutia::new(1, 200 + 20 * i, 200))
            .collect::<Vec<_>>(),
        (0..3)
            .map(|i| Minutia::new(2, 200 + 20 * i, 200))
            .collect::<Vec<_>>(),
    ];
    let mut rng = common::rng(11);
    let draws = 9_000;
    let mut counts: HashMap<Vec<(u8, i32, i32)>, usize> = HashMap::new();
    for _ in 0..draws {
        let t = select_template(&pool, 4, 2, &mut rng).unwrap();
        *counts
            .entry(t.minutiae.iter().map(Minutia::key).collect())
            .or_default() += 1;
    }
    assert_eq!(counts.len(), 9);
    let expected = draws as f64 / 9.0;
    let chi2: f64 = counts
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 8 degrees of freedom, p = 0.001
    assert!(chi2 < 26.12, "chi2={chi2}");
}

#[test]
fn template_requires_chi_per_finger() {
    let pool = vec![
        vec![Minutia::new(1, 200, 200)],
        vec![Minutia::new(2, 200, 200); 5],
    ];
    let mut rng = common::rng(0);
    assert!(matches!(
        select_template(&pool, 4, 2, &mut rng),
        Err(VaultError::FingerBelowChi(1))
    ));
}

/// A minutia of the first impression survives `u - 1` further captures with
/// probability `(1 - p_delete)^(u - 1)`.
#[test]
fn reliable_fraction_under_deletion() {
    let params = SystemParams::new(2, 3, 20, 80, 8, 5, 10.0, 7.0, 0.0);
    let spec = PopulationSpec {
        spacing: 14,
        ..PopulationSpec::new(1, 40)
    };
    let noise = NoiseModel {
        p_delete: 0.2,
        ..NoiseModel::zero()
    };
    let mut rng = common::rng(21);
    let (mut kept, mut first_total) = (0usize, 0usize);
    for _ in 0..150 {
        let finger = gen_finger(1, &spec, &mut rng).unwrap();
        let shots: Vec<Vec<(i32, i32)>> = (0..3)
            .map(|_| {
                sample_impression(&finger, &noise, params.frame, &params.ellipse, &mut rng)
                    .minutiae
                    .iter()
                    .map(Minutia::pixel)
                    .collect()
            })
            .collect();
        first_total += shots[0].len();
        kept += reliable_minutiae(&shots, 1, &params, &mut rng).len();
    }
    let frac = kept as f64 / first_total as f64;
    // standard error is about 0.006
    assert!((frac - 0.64).abs() < 0.03, "fraction {frac}");
}

#[test]
fn enrollment_fails_after_recaptures() {
    let params = SystemParams::new(2, 2, 20, 80, 8, 5, 10.0, 7.0, 0.0);
    let opts = EnrollOptions {
        recapture_attempts: 3,
        ..EnrollOptions::default()
    };
    let spec = PopulationSpec::new(2, 40);
    let mut rng = common::rng(7);
    let good = gen_finger(1, &spec, &mut rng).unwrap();
    let mut calls = [0u32; 3];
    let result = enroll_with_recapture(
        |finger, _| {
            calls[finger as usize] += 1;
            let pts = if finger == 1 {
                good.minutiae.clone()
            } else {
                vec![Minutia::new(2, 256, 256), Minutia::new(2, 300, 300)]
            };
            vec![Impression::points(pts.clone()), Impression::points(pts)]
        },
        &params,
        &opts,
        &mut rng,
    );
    assert!(matches!(result, Err(VaultError::FingerBelowChi(2))));
    assert_eq!(calls[1..], [1, 3]);
}

#[test]
fn recapture_can_rescue_enrollment() {
    let params = SystemParams::new(2, 2, 20, 80, 8, 5, 10.0, 7.0, 0.0);
    let spec = PopulationSpec::new(2, 40);
    let mut rng = common::rng(8);
    let fingers = [
        gen_finger(1, &spec, &mut rng).unwrap(),
        gen_finger(2, &spec, &mut rng).unwrap(),
    ];
    let enrollment = enroll_with_recapture(
        |finger, attempt| {
            let pts = if finger == 2 && attempt == 0 {
                Vec::new()
            } else {
                fingers[finger as usize - 1].minutiae.clone()
            };
            vec![Impression::points(pts.clone()), Impression::points(pts)]
        },
        &params,
        &EnrollOptions::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(enrollment.attempts, vec![1, 2]);
    common::check_vault(&enrollment.vault, &enrollment.poly, &params).unwrap();
}
