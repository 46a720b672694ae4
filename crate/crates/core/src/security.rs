//! Security estimates: the chi-enforcement probability, brute-force attack
//! cost, expected correct and false matches, chaff capacity and a parameter
//! search over the empirical reference tables.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::geometry::v_delta;

const BUILTIN_TABLES: &str = include_str!("../data/reference_tables.txt");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SecurityError {
    #[error("malformed reference tables, line {line}: {reason}")]
    MalformedTables { line: usize, reason: String },
    #[error("no configuration reaches {0} bits")]
    NoFeasibleParams(f64),
    #[error("no table entry for {0}")]
    MissingEntry(String),
}

/// A table indexed by impressions `u` (rows) and a tolerance in pixels
/// (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub columns: Vec<f64>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl Grid {
    pub fn get(&self, u: usize, column: f64) -> Option<f64> {
        let c = self.columns.iter().position(|&x| x == column)?;
        self.rows.iter().find(|r| r.0 == u).map(|r| r.1[c])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTables {
    /// Reliable minutiae per finger by `(u, delta_e)`.
    pub reliable: Grid,
    /// Match rate in percent by `(u, delta_v)`.
    pub match_rate: Grid,
    /// Query minutiae count after filtering, by minimum quality.
    pub quality: Vec<(f64, f64)>,
}

impl ReferenceTables {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLES).expect("shipped tables parse")
    }

    /// Parse the sectioned text format of `data/reference_tables.txt`.
    pub fn parse(text: &str) -> Result<Self, SecurityError> {
        let mut sections: HashMap<String, Vec<(usize, Vec<&str>)>> = HashMap::new();
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = Some(name.to_string());
                sections.entry(name.to_string()).or_default();
                continue;
            }
            let Some(name) = &current else {
                return Err(SecurityError::MalformedTables {
                    line: n + 1,
                    reason: "data before the first section".into(),
                });
            };
            sections
                .get_mut(name)
                .unwrap()
                .push((n + 1, line.split_whitespace().collect()));
        }
        let take = |name: &str| {
            sections.get(name).filter(|s| !s.is_empty()).ok_or_else(|| {
                SecurityError::MalformedTables {
                    line: 0,
                    reason: format!("missing section [{name}]"),
                }
            })
        };
        let num = |line: usize, s: &str| {
            s.parse::<f64>()
                .map_err(|_| SecurityError::MalformedTables {
                    line,
                    reason: format!("bad number {s:?}"),
                })
        };
        let grid = |name: &str| -> Result<Grid, SecurityError> {
            let rows = take(name)?;
            let (hl, header) = &rows[0];
            let columns = header[1..]
                .iter()
                .map(|s| num(*hl, s))
                .collect::<Result<Vec<_>, _>>()?;
            let mut out = Vec::new();
            for (l, fields) in &rows[1..] {
                if fields.len() != columns.len() + 1 {
                    return Err(SecurityError::MalformedTables {
                        line: *l,
                        reason: "row length differs from header".into(),
                    });
                }
                let u = fields[0]
                    .parse::<usize>()
                    .map_err(|_| SecurityError::MalformedTables {
                        line: *l,
                        reason: "bad row key".into(),
                    })?;
                let vals = fields[1..]
                    .iter()
                    .map(|s| num(*l, s))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push((u, vals));
            }
            Ok(Grid { columns, rows: out })
        };
        let reliable = grid("reliable")?;
        let match_rate = grid("match_rate")?;
        let mut quality = Vec::new();
        for (l, fields) in &take("quality")?[1..] {
            if fields.len() != 2 {
                return Err(SecurityError::MalformedTables {
                    line: *l,
                    reason: "expected `Q tau`".into(),
                });
            }
            quality.push((num(*l, fields[0])?, num(*l, fields[1])?));
        }
        Ok(Self {
            reliable,
            match_rate,
            quality,
        })
    }

    pub fn reliable_minutiae(&self, u: usize, delta_e: f64) -> Option<usize> {
        self.reliable.get(u, delta_e).map(|v| v as usize)
    }

    /// Match rate as a fraction.
    pub fn match_rate(&self, u: usize, delta_v: f64) -> Option<f64> {
        self.match_rate.get(u, delta_v).map(|p| p / 100.0)
    }

    pub fn query_minutiae(&self, q_min: f64) -> Option<f64> {
        self.quality.iter().find(|e| e.0 == q_min).map(|e| e.1)
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Probability that `t` minutiae assigned uniformly and independently to `f`
/// fingers leave at least `chi` on every finger.
///
/// Exact: the first finger's count is binomial, the rest recurse on the
/// remaining fingers.
pub fn zeta(t: usize, chi: usize, f: usize) -> f64 {
    if f == 0 {
        return if t == 0 { 1.0 } else { 0.0 };
    }
    if chi * f > t {
        return 0.0;
    }
    if chi == 0 {
        return 1.0;
    }
    // z[n] = probability for n items over the fingers processed so far
    let mut z: Vec<f64> = (0..=t).map(|n| if n >= chi { 1.0 } else { 0.0 }).collect();
    for g in 2..=f {
        let p = 1.0 / g as f64;
        let mut next = vec![0.0; t + 1];
        for (n, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in chi..=n {
                let rest = z[n - c];
                if rest == 0.0 {
                    continue;
                }
                let ln_w = ln_choose(n, c) + c as f64 * p.ln() + (n - c) as f64 * (1.0 - p).ln();
                acc += ln_w.exp() * rest;
            }
            *slot = acc;
        }
        z = next;
    }
    z[t]
}

/// Inclusion-exclusion over the set of fingers holding at most `bound`
/// minutiae. With `bound = chi - 1` this equals [`zeta`]; the sign is that of
/// `1 + f^-t sum_theta (-1)^theta ...`.
pub fn zeta_inclusion_exclusion(t: usize, bound: usize, f: usize) -> f64 {
    let ln_f = (f as f64).ln();
    let mut total = 0.0;
    for theta in 1..=f {
        // g[s]: sum over theta-tuples in [0, bound] summing to s of prod 1/i!
        let mut g = vec![0.0; t + 1];
        g[0] = 1.0;
        for _ in 0..theta {
            let mut next = vec![0.0; t + 1];
            for (s, &gs) in g.iter().enumerate() {
                if gs == 0.0 {
                    continue;
                }
                for i in 0..=bound.min(t - s) {
                    next[s + i] += gs * (-ln_factorial(i)).exp();
                }
            }
            g = next;
        }
        let rest = f - theta;
        let mut inner = 0.0;
        for (s, &gs) in g.iter().enumerate() {
            if gs == 0.0 {
                continue;
            }
            let left = t - s;
            let ln_pow = if rest == 0 {
                if left == 0 {
                    0.0
                } else {
                    continue;
                }
            } else {
                left as f64 * (rest as f64).ln()
            };
            inner += gs * (ln_factorial(t) - ln_factorial(left) + ln_pow - t as f64 * ln_f).exp();
        }
        let sign = if theta % 2 == 1 { -1.0 } else { 1.0 };
        total += sign * ln_choose(f, theta).exp() * inner;
    }
    1.0 + total
}

/// [`zeta_inclusion_exclusion`] with the bound `chi - 1`.
pub fn zeta_closed_form(t: usize, chi: usize, f: usize) -> f64 {
    if chi == 0 {
        return 1.0;
    }
    zeta_inclusion_exclusion(t, chi - 1, f)
}

/// Base of the logarithm in the `log^2 k` factor of the attack cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Two,
    Natural,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::Natural => x.ln(),
        }
    }
}

/// Interpolation operations per brute-force trial, `6.5 * 18 * k log^2 k`.
pub fn ops_per_trial(k: usize, base: LogBase) -> f64 {
    let l = base.log(k as f64);
    6.5 * 18.0 * k as f64 * l * l
}

/// `log2(129 zeta k log^2(k) (r/t)^k)`.
pub fn attack_cost_bits_with_zeta(t: usize, r: usize, k: usize, zeta: f64, base: LogBase) -> f64 {
    let l = base.log(k as f64);
    (129.0 * zeta * k as f64 * l * l).log2() + k as f64 * (r as f64 / t as f64).log2()
}

pub fn attack_cost_bits(t: usize, r: usize, k: usize, chi: usize, f: usize, base: LogBase) -> f64 {
    attack_cost_bits_with_zeta(t, r, k, zeta(t, chi, f), base)
}

/// Expected correct and false matches `(m_c, m_f)`; the surplus
/// `tau - mu t / f` is clamped at zero.
pub fn expected_matches(
    t: usize,
    r: usize,
    f: usize,
    mu: f64,
    tau: f64,
    delta_v: f64,
    area_px: u64,
) -> (f64, f64) {
    let m_c = mu * t as f64;
    let surplus = (tau - mu * t as f64 / f as f64).max(0.0);
    let m_f = 1.4 * (r - t) as f64 * surplus * v_delta(delta_v) as f64 / area_px as f64;
    (m_c, m_f)
}

/// `(floor(0.45 area / V_d), floor(0.2 area / V_d))` per finger.
pub fn chaff_capacity(d: u32, area_px: u64) -> (usize, usize) {
    let v = v_delta(d as f64) as f64;
    let area = area_px as f64;
    (
        (0.45 * area / v).floor() as usize,
        (0.2 * area / v).floor() as usize,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityInputs {
    pub f: usize,
    pub t: usize,
    pub r: usize,
    pub k: usize,
    pub chi: usize,
    pub delta_v: f64,
    pub d: u32,
    pub mu: f64,
    pub tau: f64,
    pub area_px: u64,
    pub log_base: LogBase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub inputs: SecurityInputs,
    pub zeta: f64,
    pub zeta_closed_form: f64,
    pub attack_ops_log2: f64,
    pub m_c: f64,
    pub m_f: f64,
    pub max_chaff_per_finger: usize,
    /// Largest `r` over all fingers within the safe density.
    pub safe_r_bound: usize,
}

impl SecurityReport {
    pub fn new(inputs: SecurityInputs) -> Self {
        let z = zeta(inputs.t, inputs.chi, inputs.f);
        let (m_c, m_f) = expected_matches(
            inputs.t,
            inputs.r,
            inputs.f,
            inputs.mu,
            inputs.tau,
            inputs.delta_v,
            inputs.area_px,
        );
        let (max, safe) = chaff_capacity(inputs.d, inputs.area_px);
        Self {
            inputs,
            zeta: z,
            zeta_closed_form: zeta_closed_form(inputs.t, inputs.chi, inputs.f),
            attack_ops_log2: attack_cost_bits_with_zeta(
                inputs.t,
                inputs.r,
                inputs.k,
                z,
                inputs.log_base,
            ),
            m_c,
            m_f,
            max_chaff_per_finger: max,
            safe_r_bound: safe * inputs.f,
        }
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let i = &self.inputs;
        vec![
            ("f", i.f.to_string()),
            ("t", i.t.to_string()),
            ("r", i.r.to_string()),
            ("k", i.k.to_string()),
            ("chi", i.chi.to_string()),
            ("delta_v", i.delta_v.to_string()),
            ("d", i.d.to_string()),
            ("mu", format!("{:.4}", i.mu)),
            ("tau", format!("{:.1}", i.tau)),
            ("zeta", format!("{:.6}", self.zeta)),
            ("zeta_closed_form", format!("{:.6}", self.zeta_closed_form)),
            ("attack_bits", format!("{:.2}", self.attack_ops_log2)),
            ("m_c", format!("{:.2}", self.m_c)),
            ("m_f", format!("{:.2}", self.m_f)),
            (
                "max_chaff_per_finger",
                self.max_chaff_per_finger.to_string(),
            ),
            ("safe_r_bound", self.safe_r_bound.to_string()),
        ]
    }

    pub fn to_key_value(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let entries = self.entries();
        let width = entries.iter().map(|e| e.0.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in entries {
            let _ = writeln!(s, "{k:<width$}  {v}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub delta_v: Vec<f64>,
    pub quality_min: f64,
    pub tau: f64,
    pub area_px: u64,
    pub log_base: LogBase,
    /// `k` is drawn from this fraction range of `m_c - m_f`.
    pub k_fraction: (f64, f64),
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            delta_v: vec![5.0, 7.0],
            quality_min: 0.3,
            tau: 50.0,
            area_px: crate::geometry::EllipseRegion::default().area_px(),
            log_base: LogBase::Two,
            k_fraction: (0.75, 0.9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub delta_e: f64,
    pub delta_v: f64,
    pub t: usize,
    pub r: usize,
    pub k: usize,
    pub chi: usize,
    pub d: u32,
    pub quality_min: f64,
    pub bits: f64,
    pub m_c: f64,
    pub m_f: f64,
    /// `1 - k / (m_c - m_f)`.
    pub k_margin: f64,
}

/// `chi = 9` when `m_c / m_f >= 2.7`, rising linearly to 15 at ratio 2;
/// `None` below 2.
pub fn chi_for_ratio(ratio: f64) -> Option<usize> {
    if ratio < 2.0 {
        None
    } else if ratio >= 2.7 {
        Some(9)
    } else {
        let steps = ((2.7 - ratio) / 0.7 * 6.0 - 1e-9).ceil() as usize;
        Some((9 + steps).min(15))
    }
}

/// Sweep `delta_v`, `t` and `r` following the parameter selection method
/// and return the configurations reaching `target_bits` that no other
/// configuration beats on both smaller `t` and larger `k` margin, sorted by
/// bits.
pub fn param_search(
    f: usize,
    u: usize,
    target_bits: f64,
    tables: &ReferenceTables,
    opts: &SearchOptions,
) -> Result<Vec<Candidate>, SecurityError> {
    let mut columns = tables.reliable.columns.clone();
    columns.sort_by(f64::total_cmp);
    let t_max = columns
        .iter()
        .filter_map(|&c| tables.reliable_minutiae(u, c))
        .max()
        .ok_or_else(|| SecurityError::MissingEntry(format!("reliable minutiae for u={u}")))?
        * f;
    let mut zeta_cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut best: Vec<Candidate> = Vec::new();
    for &delta_v in &opts.delta_v {
        let mu = tables.match_rate(u, delta_v).ok_or_else(|| {
            SecurityError::MissingEntry(format!("match rate u={u} delta_v={delta_v}"))
        })?;
        let d = (1.5 * delta_v).floor() as u32;
        let (_, safe) = chaff_capacity(d, opts.area_px);
        let r_max = safe * f;
        for t in 2..=t_max {
            let Some(delta_e) = columns
                .iter()
                .copied()
                .find(|&c| tables.reliable_minutiae(u, c).is_some_and(|m| m * f >= t))
            else {
                continue;
            };
            let mut pick: Option<Candidate> = None;
            for r in t + 1..=r_max {
                let (m_c, m_f) = expected_matches(t, r, f, mu, opts.tau, delta_v, opts.area_px);
                let ratio = if m_f > 0.0 { m_c / m_f } else { f64::INFINITY };
                let Some(chi) = chi_for_ratio(ratio) else {
                    continue;
                };
                if chi * f > t {
                    continue;
                }
                let z = *zeta_cache
                    .entry((t, chi))
                    .or_insert_with(|| zeta(t, chi, f));
                let gap = m_c - m_f;
                let k_lo = ((opts.k_fraction.0 * gap).ceil() as usize).max(2);
                let k_hi = ((opts.k_fraction.1 * gap).floor() as usize).min(t - 1);
                for k in k_lo..=k_hi {
                    let bits = attack_cost_bits_with_zeta(t, r, k, z, opts.log_base);
                    if bits < target_bits {
                        continue;
                    }
                    let cand = Candidate {
                        delta_e,
                        delta_v,
                        t,
                        r,
                        k,
                        chi,
                        d,
                        quality_min: opts.quality_min,
                        bits,
                        m_c,
                        m_f,
                        k_margin: 1.0 - k as f64 / gap,
                    };
                    // the smallest qualifying k has the largest margin
                    if pick.is_none_or(|p| cand.k_margin > p.k_margin) {
                        pick = Some(cand);
                    }
                    break;
                }
            }
            if let Some(c) = pick {
                best.push(c);
            }
        }
    }
    let mut front: Vec<Candidate> = best
        .iter()
        .filter(|c| {
            !best.iter().any(|o| {
                o.t <= c.t && o.k_margin >= c.k_margin && (o.t < c.t || o.k_margin > c.k_margin)
            })
        })
        .copied()
        .collect();
    if front.is_empty() {
        return Err(SecurityError::NoFeasibleParams(target_bits));
    }
    front.sort_by(|a, b| a.bits.total_cmp(&b.bits).then(a.t.cmp(&b.t)));
    Ok(front)
}
