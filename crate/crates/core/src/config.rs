//! Flat `key = value` configuration. `#` starts a comment; unknown and
//! repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::field::PrimeField;
use crate::geometry::{EllipseRegion, Frame};
use crate::prealign::PrealignParams;
use crate::security::LogBase;
use crate::synth::{NoiseModel, PopulationSpec};
use crate::vault::{EnrollOptions, SystemParams, VaultError};
use crate::verify::VerifyParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    DuplicateKey(String),
    #[error("bad value for `{key}`: {value:?}")]
    BadValue { key: String, value: String },
    #[error(transparent)]
    Params(#[from] VaultError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: SystemParams,
    pub noise: NoiseModel,
    pub population: PopulationSpec,
    pub enroll: EnrollOptions,
    pub verify: VerifyParams,
    /// Pre-align synthetic impressions from rendered hull masks.
    pub use_prealign: bool,
    pub log_base: LogBase,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "fingers",
    "impressions",
    "t",
    "r",
    "k",
    "d",
    "chi",
    "q",
    "delta_e",
    "delta_v",
    "quality_min",
    "rotation_gate",
    "frame_width",
    "frame_height",
    "ellipse_cx",
    "ellipse_cy",
    "ellipse_semi_x",
    "ellipse_semi_y",
    "epsilon",
    "omega",
    "max_translation",
    "jitter_radius",
    "p_delete",
    "n_spurious",
    "global_rot",
    "global_trans",
    "quality_true_min",
    "quality_true_max",
    "quality_spurious_min",
    "quality_spurious_max",
    "per_finger",
    "spacing",
    "chaff_budget",
    "recapture_attempts",
    "decode_budget",
    "expected_correct",
    "expected_false",
    "use_prealign",
    "prealign_threshold",
    "prealign_downscale",
    "prealign_max_steps",
    "log_base",
    "seed",
];

impl Default for Config {
    /// Desk-scale two-finger setup.
    fn default() -> Self {
        let params = SystemParams::new(2, 2, 20, 80, 8, 5, 10.0, 7.0, 0.3);
        // Stage-2 subsets of 2 * 9 - k = 10 points. 9 sits near the low end
        // of the correct-match counts seen at this scale; subsets of k points
        // would turn verification into a brute-force search. About 6 chaff
        // points match a genuine query here, so short match lists get
        // smaller subsets.
        let verify = VerifyParams {
            expected_correct: Some(9),
            expected_false: 6,
            ..VerifyParams::from(&params)
        };
        Self {
            verify,
            population: PopulationSpec {
                ellipse: params.ellipse,
                ..PopulationSpec::new(params.fingers, 40)
            },
            params,
            noise: NoiseModel::moderate(),
            enroll: EnrollOptions::default(),
            use_prealign: true,
            log_base: LogBase::Two,
            seed: 0,
        }
    }
}

struct Values {
    map: BTreeMap<String, String>,
}

impl Values {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: v.clone(),
            }),
        }
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                reason: "expected `key = value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.into()));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::DuplicateKey(k.into()));
            }
        }
        Self::from_values(&Values { map })
    }

    fn from_values(v: &Values) -> Result<Self, ConfigError> {
        let base = Config::default();
        let mut p = base.params.clone();
        v.set("fingers", &mut p.fingers)?;
        v.set("impressions", &mut p.impressions)?;
        v.set("t", &mut p.t)?;
        v.set("r", &mut p.r)?;
        v.set("k", &mut p.k)?;
        v.set("chi", &mut p.chi)?;
        v.set("delta_e", &mut p.delta_e)?;
        v.set("delta_v", &mut p.delta_v)?;
        p.d = (1.5 * p.delta_v).floor() as u32;
        v.set("d", &mut p.d)?;
        v.set("quality_min", &mut p.quality_min)?;
        v.set("rotation_gate", &mut p.rotation_gate)?;
        p.field = match v.get::<u64>("q")? {
            Some(q) => PrimeField::new(q).map_err(|_| ConfigError::BadValue {
                key: "q".into(),
                value: q.to_string(),
            })?,
            None => PrimeField::at_least(p.r as u64),
        };
        let mut frame = Frame::default();
        v.set("frame_width", &mut frame.width)?;
        v.set("frame_height", &mut frame.height)?;
        p.frame = frame;
        let e = EllipseRegion::default();
        let (mut cx, mut cy, mut sx, mut sy) = (e.cx, e.cy, e.semi_x, e.semi_y);
        v.set("ellipse_cx", &mut cx)?;
        v.set("ellipse_cy", &mut cy)?;
        v.set("ellipse_semi_x", &mut sx)?;
        v.set("ellipse_semi_y", &mut sy)?;
        if sx <= 0 || sy <= 0 {
            return Err(ConfigError::BadValue {
                key: "ellipse_semi_x/ellipse_semi_y".into(),
                value: format!("{sx},{sy}"),
            });
        }
        p.ellipse = EllipseRegion::new(cx, cy, sx, sy);
        v.set("epsilon", &mut p.matcher.epsilon)?;
        v.set("omega", &mut p.matcher.omega_deg)?;
        v.set("max_translation", &mut p.matcher.max_translation)?;
        p.validate()?;

        let mut noise = base.noise;
        v.set("jitter_radius", &mut noise.jitter_radius)?;
        v.set("p_delete", &mut noise.p_delete)?;
        v.set("n_spurious", &mut noise.n_spurious)?;
        v.set("global_rot", &mut noise.global_rot)?;
        v.set("global_trans", &mut noise.global_trans)?;
        v.set("quality_true_min", &mut noise.quality_true.0)?;
        v.set("quality_true_max", &mut noise.quality_true.1)?;
        v.set("quality_spurious_min", &mut noise.quality_spurious.0)?;
        v.set("quality_spurious_max", &mut noise.quality_spurious.1)?;
        noise.validate().map_err(|e| ConfigError::BadValue {
            key: "noise".into(),
            value: e.to_string(),
        })?;

        let mut population = PopulationSpec {
            ellipse: p.ellipse,
            ..PopulationSpec::new(p.fingers, base.population.per_finger)
        };
        v.set("per_finger", &mut population.per_finger)?;
        v.set("spacing", &mut population.spacing)?;

        let mut prealign = PrealignParams::default();
        v.set("prealign_threshold", &mut prealign.brightness_threshold)?;
        v.set("prealign_downscale", &mut prealign.downscale)?;
        v.set("prealign_max_steps", &mut prealign.max_steps)?;
        if prealign.downscale == 0 {
            return Err(ConfigError::BadValue {
                key: "prealign_downscale".into(),
                value: "0".into(),
            });
        }
        let mut enroll = EnrollOptions {
            prealign,
            ..base.enroll
        };
        v.set("chaff_budget", &mut enroll.chaff_budget)?;
        v.set("recapture_attempts", &mut enroll.recapture_attempts)?;

        let mut verify = VerifyParams::from(&p);
        verify.prealign = prealign;
        v.set("decode_budget", &mut verify.budget)?;
        verify.expected_correct = match v.map.get("expected_correct").map(String::as_str) {
            None => base.verify.expected_correct,
            Some("none") => None,
            Some(_) => v.get("expected_correct")?,
        };
        verify.expected_false = base.verify.expected_false;
        v.set("expected_false", &mut verify.expected_false)?;

        let mut use_prealign = base.use_prealign;
        v.set("use_prealign", &mut use_prealign)?;
        let log_base = match v.map.get("log_base").map(String::as_str) {
            None | Some("2") => LogBase::Two,
            Some("e") => LogBase::Natural,
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "log_base".into(),
                    value: other.into(),
                })
            }
        };
        let mut seed = 0;
        v.set("seed", &mut seed)?;
        Ok(Self {
            params: p,
            noise,
            population,
            enroll,
            verify,
            use_prealign,
            log_base,
            seed,
        })
    }

    /// Render every key, suitable for reading back with [`Config::parse`].
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let n = &self.noise;
        let system = vec![
            ("fingers", p.fingers.to_string()),
            ("impressions", p.impressions.to_string()),
            ("t", p.t.to_string()),
            ("r", p.r.to_string()),
            ("k", p.k.to_string()),
            ("d", p.d.to_string()),
            ("chi", p.chi.to_string()),
            ("q", p.field.modulus().to_string()),
            ("delta_e", p.delta_e.to_string()),
            ("delta_v", p.delta_v.to_string()),
            ("quality_min", p.quality_min.to_string()),
            ("rotation_gate", p.rotation_gate.to_string()),
            ("frame_width", p.frame.width.to_string()),
            ("frame_height", p.frame.height.to_string()),
            ("ellipse_cx", p.ellipse.cx.to_string()),
            ("ellipse_cy", p.ellipse.cy.to_string()),
            ("ellipse_semi_x", p.ellipse.semi_x.to_string()),
            ("ellipse_semi_y", p.ellipse.semi_y.to_string()),
            ("epsilon", p.matcher.epsilon.to_string()),
            ("omega", p.matcher.omega_deg.to_string()),
            ("max_translation", p.matcher.max_translation.to_string()),
        ];
        let synthetic = vec![
            ("jitter_radius", n.jitter_radius.to_string()),
            ("p_delete", n.p_delete.to_string()),
            ("n_spurious", n.n_spurious.to_string()),
            ("global_rot", n.global_rot.to_string()),
            ("global_trans", n.global_trans.to_string()),
            ("quality_true_min", n.quality_true.0.to_string()),
            ("quality_true_max", n.quality_true.1.to_string()),
            ("quality_spurious_min", n.quality_spurious.0.to_string()),
            ("quality_spurious_max", n.quality_spurious.1.to_string()),
            ("per_finger", self.population.per_finger.to_string()),
            ("spacing", self.population.spacing.to_string()),
        ];
        let mut pipeline = vec![
            ("chaff_budget", self.enroll.chaff_budget.to_string()),
            (
                "recapture_attempts",
                self.enroll.recapture_attempts.to_string(),
            ),
            ("decode_budget", self.verify.budget.to_string()),
            ("use_prealign", self.use_prealign.to_string()),
            (
                "prealign_threshold",
                self.enroll.prealign.brightness_threshold.to_string(),
            ),
            (
                "prealign_downscale",
                self.enroll.prealign.downscale.to_string(),
            ),
            (
                "prealign_max_steps",
                self.enroll.prealign.max_steps.to_string(),
            ),
            (
                "log_base",
                match self.log_base {
                    LogBase::Two => "2".into(),
                    LogBase::Natural => "e".into(),
                },
            ),
            ("seed", self.seed.to_string()),
        ];
        pipeline.push((
            "expected_correct",
            self.verify
                .expected_correct
                .map_or("none".into(), |m| m.to_string()),
        ));
        pipeline.push(("expected_false", self.verify.expected_false.to_string()));
        let mut s = String::new();
        for (title, entries) in [
            ("system", system),
            ("synthetic data", synthetic),
            ("pipeline", pipeline),
        ] {
            let _ = writeln!(s, "# {title}");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}
