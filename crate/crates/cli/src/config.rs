//! Experiment configuration: TOML schema, overrides, and validation.
//!
//! Validation resolves every parameter a run will need (channel, input,
//! sample sizes, candidate counts) before any trace is generated, so a
//! bad config fails fast with the offending field named.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use tracerecon::channel::{
    validate_assumption, weak_monotone_family, AssumptionTag, ChannelKind, ChannelSpec,
    ChannelSpecConfig, MAX_ENSEMBLE_SYMBOLS,
};
use tracerecon::reconstruct::DEFAULT_CANDIDATE_BUDGET;
use tracerecon::rng::{self, STAGE_INPUT};
use tracerecon::separation::DEFAULT_GRID_POINTS;
use tracerecon::sha256_hex;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ReconKnown,
    ReconUnknown,
    EstimatorError,
    ArcScan,
    BoundCheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ReconKnown => "recon-known",
            ExperimentKind::ReconUnknown => "recon-unknown",
            ExperimentKind::EstimatorError => "estimator-error",
            ExperimentKind::ArcScan => "arc-scan",
            ExperimentKind::BoundCheck => "bound-check",
        }
    }
}

/// Named retention family as an alternative to an explicit channel table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub name: FamilyName,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    WeakMonotone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub kind: ExperimentKind,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    /// Explicit source string; absent means one random draw per seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<u64>>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<f64>>,
    /// Random draw count for arc-scan trials and bound-check sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// Everything a runner needs, resolved and validated.
#[derive(Clone, Debug)]
pub struct ResolvedPlan {
    pub spec: ChannelSpec,
    pub assumption: AssumptionTag,
    pub t_list: Vec<u64>,
    pub grid_points: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("config does not parse")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the canonical serialization with the output path blanked,
    /// so renaming a report does not change its identity.
    pub fn stable_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        sha256_hex(canonical.to_toml().as_bytes())
    }

    fn needs_channel(&self) -> bool {
        !matches!(self.kind, ExperimentKind::ArcScan)
    }

    fn resolve_channel(&self) -> Result<(ChannelSpec, AssumptionTag)> {
        match (&self.channel, &self.family) {
            (Some(_), Some(_)) => bail!("channel, family: give one, not both"),
            (Some(cfg), None) => {
                let (spec, tag) = cfg.build().map_err(|e| anyhow!("channel: {e}"))?;
                if spec.alphabet_size() != self.m {
                    bail!("channel.alphabet_size: {} does not match m={}", spec.alphabet_size(), self.m);
                }
                if let Some(len) = spec.length() {
                    if len != self.n {
                        bail!("channel.retention: length {len} does not match n={}", self.n);
                    }
                }
                Ok((spec, tag))
            }
            (None, Some(fam)) => match fam.name {
                FamilyName::WeakMonotone => {
                    let retention = weak_monotone_family(self.n, fam.delta)
                        .map_err(|e| anyhow!("family.delta: {e}"))?;
                    let spec = ChannelSpec::position_varying(retention, self.m)
                        .map_err(|e| anyhow!("family: {e}"))?;
                    let tag = AssumptionTag::WeakMonotone { delta: fam.delta };
                    debug_assert!(validate_assumption(&spec, &tag));
                    Ok((spec, tag))
                }
            },
            (None, None) => bail!("channel: required for kind={}", self.kind.as_str()),
        }
    }

    fn resolve_t_list(&self) -> Result<Vec<u64>> {
        match (self.t, &self.t_grid) {
            (Some(_), Some(_)) => bail!("t, t_grid: give one, not both"),
            (Some(t), None) => Ok(vec![t]),
            (None, Some(grid)) if !grid.is_empty() => Ok(grid.clone()),
            (None, Some(_)) => bail!("t_grid: must be nonempty"),
            (None, None) => bail!("t: required for kind={}", self.kind.as_str()),
        }
    }

    /// Draws the source string for one seed: the explicit input if given,
    /// otherwise uniform symbols from a seed-specific substream.
    pub fn input_for_seed(&self, seed: u64) -> Vec<u8> {
        use rand::Rng;
        match &self.input {
            Some(x) => x.clone(),
            None => {
                let mut r = rng::substream(seed, STAGE_INPUT, 0);
                (0..self.n).map(|_| r.gen_range(0..self.m as u8)).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<ResolvedPlan> {
        if self.schema != SCHEMA_VERSION {
            bail!("schema: expected {SCHEMA_VERSION}, got {}", self.schema);
        }
        if self.n == 0 {
            bail!("n: must be >= 1");
        }
        if self.m < 2 {
            bail!("m: must be >= 2");
        }
        if self.seeds.is_empty() {
            bail!("seeds: must be nonempty");
        }
        let grid_points = self.grid_points.unwrap_or(DEFAULT_GRID_POINTS);

        let (spec, assumption) = if self.needs_channel() {
            self.resolve_channel()?
        } else {
            // arc-scan accepts either form; it only needs a position sequence
            match (&self.channel, &self.family) {
                (None, None) => bail!("family: required for kind=arc-scan"),
                _ => self.resolve_channel()?,
            }
        };

        if let Some(x) = &self.input {
            spec.validate_input(x).map_err(|e| anyhow!("input: {e}"))?;
            if x.len() != self.n {
                bail!("input: length {} does not match n={}", x.len(), self.n);
            }
        }

        let t_list = match self.kind {
            ExperimentKind::ReconKnown | ExperimentKind::ReconUnknown
            | ExperimentKind::EstimatorError => {
                let t_list = self.resolve_t_list()?;
                for &t in &t_list {
                    if t == 0 {
                        bail!("t: must be >= 1");
                    }
                    if t as u128 * self.n.max(1) as u128 > MAX_ENSEMBLE_SYMBOLS {
                        bail!("t: {t} traces of length {} exceed the ensemble capacity", self.n);
                    }
                }
                t_list
            }
            ExperimentKind::ArcScan | ExperimentKind::BoundCheck => Vec::new(),
        };

        match self.kind {
            ExperimentKind::ReconKnown | ExperimentKind::ReconUnknown => {
                let mut count: u64 = 1;
                for _ in 0..self.n {
                    count = count
                        .checked_mul(self.m as u64)
                        .filter(|&c| c <= DEFAULT_CANDIDATE_BUDGET)
                        .ok_or_else(|| {
                            anyhow!(
                                "n: candidate count {}^{} exceeds the {} budget",
                                self.m,
                                self.n,
                                DEFAULT_CANDIDATE_BUDGET
                            )
                        })?;
                }
            }
            _ => {}
        }

        match self.kind {
            ExperimentKind::ReconUnknown | ExperimentKind::EstimatorError => {
                if spec.kind() != ChannelKind::LetterVarying {
                    bail!(
                        "channel.kind: kind={} needs per-letter ground truth, use letter_varying",
                        self.kind.as_str()
                    );
                }
            }
            ExperimentKind::ArcScan => {
                if spec.kind() != ChannelKind::PositionVarying {
                    bail!("channel.kind: arc-scan needs a position sequence");
                }
            }
            _ => {}
        }

        if let Some(floor) = self.delta_floor {
            if !(floor.is_finite() && floor > 0.0 && floor <= 1.0) {
                bail!("delta_floor: must lie in (0, 1], got {floor}");
            }
        }
        if self.kind == ExperimentKind::ReconUnknown && self.delta_floor.is_none() {
            bail!("delta_floor: required for kind=recon-unknown");
        }
        if let Some(fp) = self.failure_prob {
            if !(fp.is_finite() && fp > 0.0 && fp < 1.0) {
                bail!("failure_prob: must lie in (0, 1), got {fp}");
            }
        }
        if let Some(list) = &self.l_list {
            if list.is_empty() {
                bail!("l_list: must be nonempty");
            }
            for pair in list.windows(2) {
                if !(pair[0] < pair[1]) {
                    bail!("l_list: must be strictly increasing");
                }
            }
            if list[0] < 1.0 {
                bail!("l_list: every L must be >= 1");
            }
        }
        match self.kind {
            ExperimentKind::ArcScan => {
                let list = self.l_list.as_ref().ok_or_else(|| anyhow!("l_list: required for kind=arc-scan"))?;
                if list.len() < 2 {
                    bail!("l_list: need at least two L values to fit a slope");
                }
                if self.draws.unwrap_or(0) == 0 {
                    bail!("draws: required (>= 1) for kind=arc-scan");
                }
            }
            ExperimentKind::BoundCheck => {
                if self.draws.unwrap_or(0) == 0 {
                    bail!("draws: required (>= 1) for kind=bound-check");
                }
            }
            _ => {}
        }
        if grid_points < 3 || grid_points % 2 == 0 {
            bail!("grid_points: must be odd and >= 3, got {grid_points}");
        }

        Ok(ResolvedPlan { spec, assumption, t_list, grid_points })
    }
}

/// Applies `--override key=value` pairs and flag shortcuts to the raw TOML
/// tree, then re-parses. Dotted keys descend into tables.
pub fn apply_overrides(
    text: &str,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&str>,
) -> Result<ExperimentConfig> {
    if overrides.is_empty() && seed.is_none() && out.is_none() {
        return ExperimentConfig::from_toml(text);
    }
    let mut root: toml::Value = text.parse().context("config does not parse")?;
    for pair in overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override {pair:?} is not key=value"))?;
        let parsed = parse_override_value(value);
        set_path(&mut root, key.trim(), parsed)?;
    }
    if let Some(seed) = seed {
        set_path(&mut root, "seeds", toml::Value::Array(vec![toml::Value::Integer(seed as i64)]))?;
    }
    if let Some(out) = out {
        set_path(&mut root, "out", toml::Value::String(out.to_string()))?;
    }
    let cfg: ExperimentConfig = root.try_into().context("config does not parse after overrides")?;
    Ok(cfg)
}

fn parse_override_value(raw: &str) -> toml::Value {
    let attempt = format!("v = {}", raw.trim());
    if let Ok(table) = attempt.parse::<toml::Value>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.trim().to_string())
}

fn set_path(root: &mut toml::Value, dotted: &str, value: toml::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            bail!("override key {dotted:?} has an empty segment");
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("override key {dotted:?}: {part:?} is not inside a table"))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("parts is nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml() -> String {
        r#"
schema = 1
kind = "recon-known"
n = 4
m = 2
t = 50
seeds = [1, 2]
out = "report.csv"

[channel]
kind = "position_varying"
retention = [0.9, 0.8, 0.7, 0.6]
alphabet_size = 2
"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(&base_toml()).unwrap();
        let plan = cfg.validate().unwrap();
        assert_eq!(plan.t_list, vec![50]);
        assert_eq!(plan.spec.length(), Some(4));
        assert_eq!(plan.grid_points, DEFAULT_GRID_POINTS);
    }

    #[test]
    fn hash_ignores_out_path() {
        let a = ExperimentConfig::from_toml(&base_toml()).unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere.csv".into());
        assert_eq!(a.stable_hash(), b.stable_hash());
        let mut c = a.clone();
        c.t = Some(51);
        assert_ne!(a.stable_hash(), c.stable_hash());
    }

    #[test]
    fn field_errors_name_the_field() {
        let mut cfg = ExperimentConfig::from_toml(&base_toml()).unwrap();
        cfg.t = None;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("t:"), "{err}");

        let mut cfg = ExperimentConfig::from_toml(&base_toml()).unwrap();
        cfg.input = Some(vec![0, 1]);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("input:"), "{err}");

        let mut cfg = ExperimentConfig::from_toml(&base_toml()).unwrap();
        cfg.n = 3;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.starts_with("channel.retention:"), "{err}");
    }

    #[test]
    fn unknown_kind_requires_letter_truth_and_floor() {
        let text = r#"
schema = 1
kind = "recon-unknown"
n = 4
m = 2
t = 50
seeds = [1]
delta_floor = 0.5

[channel]
kind = "letter_varying"
retention = [0.9, 0.7]
alphabet_size = 2
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();

        let mut no_floor = cfg.clone();
        no_floor.delta_floor = None;
        assert!(no_floor.validate().unwrap_err().to_string().starts_with("delta_floor:"));

        let mut wrong_kind = cfg;
        wrong_kind.channel = Some(
            ChannelSpec::position_varying(vec![0.9, 0.8, 0.7, 0.6], 2).unwrap().to_config(None),
        );
        assert!(wrong_kind
            .validate()
            .unwrap_err()
            .to_string()
            .starts_with("channel.kind:"));
    }

    #[test]
    fn family_resolves_arc_scan() {
        let text = r#"
schema = 1
kind = "arc-scan"
n = 10
m = 2
seeds = [7]
l_list = [2.0, 4.0, 8.0]
draws = 100

[family]
name = "weak_monotone"
delta = 0.1
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let plan = cfg.validate().unwrap();
        assert_eq!(plan.spec.retention().len(), 10);
        assert!(matches!(plan.assumption, AssumptionTag::WeakMonotone { .. }));

        let mut missing = cfg.clone();
        missing.l_list = None;
        assert!(missing.validate().unwrap_err().to_string().starts_with("l_list:"));
        let mut missing = cfg;
        missing.draws = None;
        assert!(missing.validate().unwrap_err().to_string().starts_with("draws:"));
    }

    #[test]
    fn candidate_budget_guard() {
        let mut cfg = ExperimentConfig::from_toml(&base_toml()).unwrap();
        cfg.n = 40;
        cfg.channel = Some(
            ChannelSpec::position_varying(vec![0.9; 40], 2).unwrap().to_config(None),
        );
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("candidate count"), "{err}");
    }

    #[test]
    fn overrides_apply_and_report_bad_keys() {
        let cfg = apply_overrides(&base_toml(), &["t=99".into()], None, None).unwrap();
        assert_eq!(cfg.t, Some(99));

        let cfg = apply_overrides(&base_toml(), &[], Some(42), Some("x.csv")).unwrap();
        assert_eq!(cfg.seeds, vec![42]);
        assert_eq!(cfg.out.as_deref(), Some("x.csv"));

        let cfg = apply_overrides(
            &base_toml(),
            &["channel.retention=[0.9, 0.9, 0.9, 0.9]".into()],
            None,
            None,
        )
        .unwrap();
        assert_eq!(cfg.channel.unwrap().retention, vec![0.9; 4]);

        assert!(apply_overrides(&base_toml(), &["t99".into()], None, None).is_err());
        assert!(apply_overrides(&base_toml(), &["bogus=1".into()], None, None).is_err());
    }

    #[test]
    fn explicit_input_is_seed_independent() {
        let mut cfg = ExperimentConfig::from_toml(&base_toml()).unwrap();
        cfg.input = Some(vec![0, 1, 1, 0]);
        assert_eq!(cfg.input_for_seed(1), cfg.input_for_seed(2));
        cfg.input = None;
        assert_eq!(cfg.input_for_seed(5), cfg.input_for_seed(5));
        let a = cfg.input_for_seed(5);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|&s| s < 2));
    }
}
