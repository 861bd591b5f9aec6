//! Sectioned `key = value` experiment configs.
//!
//! ```text
//! [grid]
//! T = 1.0
//! N = 32
//! [problem]
//! preset = paper_arctan
//! ```
//!
//! `#` starts a comment. Every problem is reported with its line number and
//! parsing never stops at the first one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use bdsde_lab::coefficients::{builtin_catalog, lookup_preset};
use bdsde_lab::AssumptionCard;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// 1-based; 0 when no single line is responsible.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            if i.line == 0 {
                write!(f, "{}", i.message)?;
            } else {
                write!(f, "line {}: {}", i.line, i.message)?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Audit,
    QBounds,
    LinearOracle,
    Comparison,
    Sandwich,
    Monotonicity,
    Holder,
    NegativeMoment,
    ForwardMoment,
    Field,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::Audit,
        Check::QBounds,
        Check::LinearOracle,
        Check::Comparison,
        Check::Sandwich,
        Check::Monotonicity,
        Check::Holder,
        Check::NegativeMoment,
        Check::ForwardMoment,
        Check::Field,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Audit => "audit",
            Check::QBounds => "q_bounds",
            Check::LinearOracle => "linear_oracle",
            Check::Comparison => "comparison",
            Check::Sandwich => "sandwich",
            Check::Monotonicity => "monotonicity",
            Check::Holder => "holder",
            Check::NegativeMoment => "negative_moment",
            Check::ForwardMoment => "forward_moment",
            Check::Field => "field",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Card constants that `[problem]` may override, with their config keys.
pub const CARD_KEYS: [&str; 14] = [
    "C_f",
    "C_g",
    "alpha_g",
    "C_0",
    "C_1",
    "epsilon_1",
    "delta_R",
    "C_R",
    "R_0",
    "epsilon",
    "beta",
    "c_1",
    "c_2",
    "gamma",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub horizon: f64,
    pub steps: usize,
    pub w_count: usize,
    pub b_count: usize,
    pub seed: u64,
    pub preset: String,
    pub x: f64,
    /// Terminal family override by name.
    pub terminal: Option<String>,
    /// Constant added to the terminal family.
    pub shift: f64,
    /// Inline driver `λ y + μ z`.
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    /// Inline constant loading.
    pub loading: Option<f64>,
    /// Inline geometric forward leg.
    pub fwd_mu: Option<f64>,
    pub fwd_sigma: Option<f64>,
    pub card: BTreeMap<String, f64>,
    pub degree: usize,
    pub trunc_lo: f64,
    pub trunc_hi: f64,
    pub checks: Vec<Check>,
    pub pass_threshold: f64,
    pub sigmas: f64,
    pub t_index: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub field_points: usize,
    pub comparison_shift: f64,
    pub linear_fraction: f64,
    pub q_drift: f64,
    pub q_z: f64,
    pub q_noise: f64,
    pub holder_pairs: usize,
    pub probes: usize,
    pub bench_reps: usize,
    pub out_dir: PathBuf,
    pub formats: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 32,
            w_count: 8192,
            b_count: 64,
            seed: 42,
            preset: "paper_arctan".into(),
            x: 0.0,
            terminal: None,
            shift: 0.0,
            lambda: None,
            mu: None,
            loading: None,
            fwd_mu: None,
            fwd_sigma: None,
            card: BTreeMap::new(),
            degree: 3,
            trunc_lo: 0.01,
            trunc_hi: 0.99,
            checks: Vec::new(),
            pass_threshold: 0.99,
            sigmas: 3.0,
            t_index: 0,
            x_min: -2.0,
            x_max: 2.0,
            x_points: 21,
            field_points: 9,
            comparison_shift: 1.0,
            linear_fraction: 0.95,
            q_drift: 0.0,
            q_z: 0.5,
            q_noise: 0.3,
            holder_pairs: 5,
            probes: 20_000,
            bench_reps: 5,
            out_dir: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

pub const TERMINALS: [&str; 5] = ["identity", "cubic", "constant", "brownian_shift", "forward"];

struct Raw {
    value: String,
    line: usize,
}

const SECTIONS: [(&str, &[&str]); 7] = [
    ("grid", &["T", "N"]),
    ("paths", &["M_W", "M_B", "seed"]),
    (
        "problem",
        &[
            "preset",
            "x",
            "terminal",
            "shift",
            "lambda",
            "mu",
            "loading",
            "fwd_mu",
            "fwd_sigma",
        ],
    ),
    ("scheme", &["degree", "trunc_lo", "trunc_hi"]),
    (
        "verify",
        &[
            "checks",
            "pass_threshold",
            "sigmas",
            "t_index",
            "x_min",
            "x_max",
            "x_points",
            "field_points",
            "comparison_shift",
            "linear_fraction",
            "q_drift",
            "q_z",
            "q_noise",
            "holder_pairs",
            "probes",
        ],
    ),
    ("bench", &["reps"]),
    ("output", &["dir", "formats"]),
];

fn known(section: &str, key: &str) -> bool {
    SECTIONS
        .iter()
        .any(|(s, keys)| *s == section && (keys.contains(&key) || (section == "problem" && CARD_KEYS.contains(&key))))
}

struct Reader {
    raw: BTreeMap<(String, String), Raw>,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, line: usize, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            line,
            message: message.into(),
        });
    }

    fn get(&self, section: &str, key: &str) -> Option<&Raw> {
        self.raw.get(&(section.to_string(), key.to_string()))
    }

    fn line(&self, section: &str, key: &str) -> usize {
        self.get(section, key).map_or(0, |r| r.line)
    }

    fn parse<V: std::str::FromStr>(&mut self, section: &str, key: &str, kind: &str) -> Option<V> {
        let (value, line) = {
            let r = self.get(section, key)?;
            (r.value.clone(), r.line)
        };
        match value.parse::<V>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.issue(line, format!("{key}: expected {kind}, got {value:?}"));
                None
            }
        }
    }

    fn float(&mut self, section: &str, key: &str, slot: &mut f64) {
        if let Some(v) = self.parse::<f64>(section, key, "a number") {
            if v.is_finite() {
                *slot = v;
            } else {
                let line = self.line(section, key);
                self.issue(line, format!("{key}: must be finite"));
            }
        }
    }

    fn opt_float(&mut self, section: &str, key: &str, slot: &mut Option<f64>) {
        if self.get(section, key).is_some() {
            let mut v = 0.0;
            self.float(section, key, &mut v);
            *slot = Some(v);
        }
    }

    fn count(&mut self, section: &str, key: &str, slot: &mut usize) {
        if let Some(v) = self.parse::<usize>(section, key, "a non-negative integer") {
            *slot = v;
        }
    }

    fn list(&self, section: &str, key: &str) -> Option<(Vec<String>, usize)> {
        self.get(section, key).map(|r| {
            let items = r
                .value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            (items, r.line)
        })
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut r = Reader {
        raw: BTreeMap::new(),
        issues: Vec::new(),
    };
    let mut section: Option<String> = None;
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) => {
                    let name = name.trim();
                    if SECTIONS.iter().any(|(s, _)| *s == name) {
                        section = Some(name.to_string());
                    } else {
                        r.issue(line, format!("unknown section [{name}]"));
                        section = None;
                    }
                }
                None => r.issue(line, format!("malformed section header {content:?}")),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            r.issue(line, format!("expected `key = value`, got {content:?}"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.clone() else {
            // keys under an unknown section were already reported with it
            if !r.issues.iter().any(|i| i.message.starts_with("unknown section")) {
                r.issue(line, format!("key {key} outside any section"));
            }
            continue;
        };
        if !known(&sec, key) {
            r.issue(line, format!("unknown key {key} in [{sec}]"));
            continue;
        }
        let slot = (sec.clone(), key.to_string());
        if let Some(first) = r.raw.get(&slot) {
            let first = first.line;
            r.issue(
                line,
                format!("duplicate key {key} in [{sec}] (lines {first} and {line})"),
            );
            continue;
        }
        r.raw.insert(
            slot,
            Raw {
                value: value.to_string(),
                line,
            },
        );
    }

    let mut c = ExperimentConfig::default();
    r.float("grid", "T", &mut c.horizon);
    r.count("grid", "N", &mut c.steps);
    r.count("paths", "M_W", &mut c.w_count);
    r.count("paths", "M_B", &mut c.b_count);
    if let Some(v) = r.parse::<u64>("paths", "seed", "an unsigned 64-bit integer") {
        c.seed = v;
    }
    if let Some(p) = r.get("problem", "preset") {
        c.preset = p.value.clone();
    }
    r.float("problem", "x", &mut c.x);
    if let Some(t) = r.get("problem", "terminal") {
        c.terminal = Some(t.value.clone());
    }
    r.float("problem", "shift", &mut c.shift);
    r.opt_float("problem", "lambda", &mut c.lambda);
    r.opt_float("problem", "mu", &mut c.mu);
    r.opt_float("problem", "loading", &mut c.loading);
    r.opt_float("problem", "fwd_mu", &mut c.fwd_mu);
    r.opt_float("problem", "fwd_sigma", &mut c.fwd_sigma);
    for key in CARD_KEYS {
        let mut v = None;
        r.opt_float("problem", key, &mut v);
        if let Some(v) = v {
            c.card.insert(key.to_string(), v);
        }
    }
    r.count("scheme", "degree", &mut c.degree);
    r.float("scheme", "trunc_lo", &mut c.trunc_lo);
    r.float("scheme", "trunc_hi", &mut c.trunc_hi);
    if let Some((items, line)) = r.list("verify", "checks") {
        for item in items {
            if item == "all" {
                c.checks.extend(Check::ALL);
                continue;
            }
            match Check::from_name(&item) {
                Some(ch) => c.checks.push(ch),
                None => r.issue(line, format!("unknown check {item:?}")),
            }
        }
        c.checks.sort();
        c.checks.dedup();
    }
    r.float("verify", "pass_threshold", &mut c.pass_threshold);
    r.float("verify", "sigmas", &mut c.sigmas);
    r.count("verify", "t_index", &mut c.t_index);
    r.float("verify", "x_min", &mut c.x_min);
    r.float("verify", "x_max", &mut c.x_max);
    r.count("verify", "x_points", &mut c.x_points);
    r.count("verify", "field_points", &mut c.field_points);
    r.float("verify", "comparison_shift", &mut c.comparison_shift);
    r.float("verify", "linear_fraction", &mut c.linear_fraction);
    r.float("verify", "q_drift", &mut c.q_drift);
    r.float("verify", "q_z", &mut c.q_z);
    r.float("verify", "q_noise", &mut c.q_noise);
    r.count("verify", "holder_pairs", &mut c.holder_pairs);
    r.count("verify", "probes", &mut c.probes);
    r.count("bench", "reps", &mut c.bench_reps);
    if let Some(d) = r.get("output", "dir") {
        c.out_dir = PathBuf::from(&d.value);
    }
    if let Some((items, line)) = r.list("output", "formats") {
        for f in &items {
            if f != "csv" && f != "json" {
                r.issue(line, format!("unknown output format {f:?}"));
            }
        }
        c.formats = items;
    }

    validate(&c, &mut r);
    if r.issues.is_empty() {
        Ok(c)
    } else {
        r.issues.sort_by_key(|i| i.line);
        Err(ConfigError { issues: r.issues })
    }
}

fn validate(c: &ExperimentConfig, r: &mut Reader) {
    let mut check = |ok: bool, section: &str, key: &str, msg: String| {
        if !ok {
            let line = r.line(section, key);
            r.issue(line, msg);
        }
    };
    check(c.horizon > 0.0, "grid", "T", "horizon must be > 0".into());
    check(c.steps >= 1, "grid", "N", "step_count must be ≥ 1".into());
    check(c.w_count >= 1, "paths", "M_W", "M_W must be ≥ 1".into());
    check(c.b_count >= 1, "paths", "M_B", "M_B must be ≥ 1".into());
    check(c.degree <= 8, "scheme", "degree", "basis degree must be ≤ 8".into());
    check(
        0.0 <= c.trunc_lo && c.trunc_lo < c.trunc_hi && c.trunc_hi <= 1.0,
        "scheme",
        "trunc_lo",
        "truncation quantiles must satisfy 0 ≤ lo < hi ≤ 1".into(),
    );
    check(
        c.pass_threshold > 0.0 && c.pass_threshold <= 1.0,
        "verify",
        "pass_threshold",
        "pass_threshold must lie in (0, 1]".into(),
    );
    check(c.sigmas > 0.0, "verify", "sigmas", "sigmas must be > 0".into());
    check(
        c.t_index < c.steps.max(1),
        "verify",
        "t_index",
        format!("t_index must be < N = {}", c.steps),
    );
    check(c.x_min < c.x_max, "verify", "x_min", "x_min must be < x_max".into());
    check(c.x_points >= 2, "verify", "x_points", "x_points must be ≥ 2".into());
    check(
        c.field_points >= 2,
        "verify",
        "field_points",
        "field_points must be ≥ 2".into(),
    );
    check(
        c.holder_pairs >= 3,
        "verify",
        "holder_pairs",
        "holder_pairs must be ≥ 3".into(),
    );
    check(c.probes >= 1, "verify", "probes", "probes must be ≥ 1".into());
    check(c.bench_reps >= 5, "bench", "reps", "bench reps must be ≥ 5".into());
    if let Some(t) = &c.terminal {
        check(
            TERMINALS.contains(&t.as_str()),
            "problem",
            "terminal",
            format!("unknown terminal family {t:?}; known: {}", TERMINALS.join(", ")),
        );
    }
    check(
        c.fwd_mu.is_some() == c.fwd_sigma.is_some(),
        "problem",
        "fwd_mu",
        "fwd_mu and fwd_sigma must be given together".into(),
    );
    match lookup_preset::<f64>(&c.preset) {
        None => {
            let names: Vec<&str> = builtin_catalog::<f64>().names().collect();
            check(
                false,
                "problem",
                "preset",
                format!("unknown preset {:?}; known: {}", c.preset, names.join(", ")),
            );
        }
        Some(p) => {
            let card = apply_card(&p.card, &c.card);
            if let Err(e) = card.validate() {
                let line = c.card.keys().map(|k| r.line("problem", k)).min().unwrap_or(0);
                r.issue(line, e.to_string());
            }
        }
    }
}

/// The preset card with `[problem]` overrides applied.
pub fn apply_card(base: &AssumptionCard, overrides: &BTreeMap<String, f64>) -> AssumptionCard {
    let mut card = base.clone();
    for (k, &v) in overrides {
        match k.as_str() {
            "C_f" => card.driver_lipschitz = v,
            "C_g" => card.noise_lipschitz = v,
            "alpha_g" => card.noise_z_weight = v,
            "C_0" => card.driver_origin_bound = Some(v),
            "C_1" => card.coercivity = v,
            "epsilon_1" => card.coercivity_radius = v,
            "delta_R" => card.holder_exponent = v,
            "C_R" => card.holder_constant = v,
            "R_0" => card.growth_radius = v,
            "epsilon" => card.growth_floor = v,
            "beta" => card.moment_exponent = Some(v),
            "c_1" => card.forward_growth = v,
            "c_2" => card.floor_constant = v,
            "gamma" => card.floor_exponent = v,
            _ => unreachable!("card key {k} is validated by the parser"),
        }
    }
    card
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

impl ExperimentConfig {
    /// Canonical text form; parsing it yields `self` again.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("[grid]", String::new());
        kv("T", num(self.horizon));
        kv("N", self.steps.to_string());
        kv("[paths]", String::new());
        kv("M_W", self.w_count.to_string());
        kv("M_B", self.b_count.to_string());
        kv("seed", self.seed.to_string());
        kv("[problem]", String::new());
        kv("preset", self.preset.clone());
        kv("x", num(self.x));
        if let Some(t) = &self.terminal {
            kv("terminal", t.clone());
        }
        kv("shift", num(self.shift));
        for (k, v) in [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("loading", self.loading),
            ("fwd_mu", self.fwd_mu),
            ("fwd_sigma", self.fwd_sigma),
        ] {
            if let Some(v) = v {
                kv(k, num(v));
            }
        }
        for key in CARD_KEYS {
            if let Some(&v) = self.card.get(key) {
                kv(key, num(v));
            }
        }
        kv("[scheme]", String::new());
        kv("degree", self.degree.to_string());
        kv("trunc_lo", num(self.trunc_lo));
        kv("trunc_hi", num(self.trunc_hi));
        kv("[verify]", String::new());
        let checks: Vec<&str> = self.checks.iter().map(|c| c.name()).collect();
        kv("checks", checks.join(", "));
        kv("pass_threshold", num(self.pass_threshold));
        kv("sigmas", num(self.sigmas));
        kv("t_index", self.t_index.to_string());
        kv("x_min", num(self.x_min));
        kv("x_max", num(self.x_max));
        kv("x_points", self.x_points.to_string());
        kv("field_points", self.field_points.to_string());
        kv("comparison_shift", num(self.comparison_shift));
        kv("linear_fraction", num(self.linear_fraction));
        kv("q_drift", num(self.q_drift));
        kv("q_z", num(self.q_z));
        kv("q_noise", num(self.q_noise));
        kv("holder_pairs", self.holder_pairs.to_string());
        kv("probes", self.probes.to_string());
        kv("[bench]", String::new());
        kv("reps", self.bench_reps.to_string());
        kv("[output]", String::new());
        kv("dir", self.out_dir.display().to_string());
        kv("formats", self.formats.join(", "));
        // section headers were written as `[name] = `
        s.lines()
            .map(|l| l.strip_suffix(" = ").unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    /// Canonical text without the `[output]` section: what determines results.
    pub fn replay_text(&self) -> String {
        let full = self.canonical();
        full.split("[output]").next().unwrap_or(&full).to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("[problem]\npreset = paper_arctan\n").unwrap();
        assert_eq!((c.steps, c.w_count, c.b_count), (32, 8192, 64));
        assert_eq!(c.degree, 3);
        assert_eq!((c.trunc_lo, c.trunc_hi), (0.01, 0.99));
    }

    #[test]
    fn zero_steps_reported_at_line() {
        let e = parse_config("[grid]\nT = 1\nN = 0\n").unwrap_err();
        assert_eq!(e.issues.len(), 1);
        assert_eq!(e.issues[0].line, 3);
        assert_eq!(e.issues[0].message, "step_count must be ≥ 1");
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let e = parse_config("[grid]\nN = 4\n# note\nN = 8\n").unwrap_err();
        assert_eq!(e.issues.len(), 1);
        assert!(e.issues[0].message.contains("lines 2 and 4"), "{}", e.issues[0].message);
    }

    #[test]
    fn all_errors_collected() {
        let text = "[grid]\nN = x\nbogus = 1\n[nope]\na = 1\n[paths]\nM_W = 0\n[problem]\npreset = missing\n";
        let e = parse_config(text).unwrap_err();
        let lines: Vec<usize> = e.issues.iter().map(|i| i.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 7, 9], "{e}");
    }

    #[test]
    fn card_override_validated() {
        let e = parse_config("[problem]\npreset = paper_arctan\nC_f = -1\n").unwrap_err();
        assert_eq!(e.issues[0].line, 3);
        let c = parse_config("[problem]\npreset = paper_arctan\nbeta = -0.3\n").unwrap();
        assert_eq!(c.card.get("beta"), Some(&-0.3));
    }

    #[test]
    fn canonical_round_trip() {
        let text =
            "[grid]\nN = 16\n[problem]\npreset = linear\nx = 0.5\nC_f = 0.75\n[verify]\nchecks = comparison, audit\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.checks, vec![Check::Audit, Check::Comparison]);
        let again = parse_config(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.canonical(), again.canonical());
        assert!(!c.replay_text().contains("[output]"));
    }
}
