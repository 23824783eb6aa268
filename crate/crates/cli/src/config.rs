//! Run configuration: one TOML file per run.

use std::fmt;
use std::path::{Path, PathBuf};

use sensorfault::forecast::{MethodVariant, SelectorMode};
use sensorfault::rng::{derive_key, tag};
use sensorfault::{ChannelRule, ChannelSchema, EvalConfig, ScenarioId, BENCHMARK};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// A 64-bit seed. Written as a TOML integer when it fits in `i64` and as a
/// `0x…` string otherwise; both forms are accepted on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed(pub u64);

impl Seed {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
            None => s.replace('_', "").parse(),
        };
        parsed
            .map(Seed)
            .map_err(|e| format!("invalid seed {s:?}: {e}"))
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Seed;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or a decimal/0x string")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seed, E> {
                u64::try_from(v)
                    .map(Seed)
                    .map_err(|_| E::custom(format!("seed {v} is negative")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seed, E> {
                Ok(Seed(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Seed, E> {
                Seed::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// A channel named in the config, by header name or 0-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV path; relative paths resolve against the config file's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub timestamp_column: bool,
    pub names: Vec<String>,
    /// Continuous flags aligned with `names`; all continuous when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<Vec<bool>>,
    pub targets: Vec<ChannelRef>,
    /// Expected continuous channel count, checked against `continuous`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_cont: Option<usize>,
    #[serde(default = "default_splits")]
    pub splits: [f64; 3],
    #[serde(default)]
    pub min_rows: usize,
}

fn default_splits() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub input: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioId>,
    #[serde(default)]
    pub channel_rule: ChannelRule,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Evaluation seed; derived from the master seed when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<Seed>,
}

fn default_k() -> usize {
    10_000
}
fn default_scenarios() -> Vec<ScenarioId> {
    BENCHMARK.to_vec()
}
fn default_bootstrap() -> usize {
    1000
}
fn default_level() -> f64 {
    0.95
}

impl Default for EvalBlock {
    fn default() -> Self {
        Self {
            k: default_k(),
            scenarios: default_scenarios(),
            channel_rule: ChannelRule::default(),
            bootstrap: default_bootstrap(),
            level: default_level(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    SeasonalNaive {
        #[serde(default = "default_periods")]
        periods: Vec<usize>,
    },
    Linear {
        #[serde(default = "default_ridge")]
        ridge: Vec<f64>,
        #[serde(default = "default_max_candidates")]
        max_candidates: usize,
        /// Training windows used for fitting; 0 keeps all of them.
        #[serde(default)]
        train_cap: usize,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_processes")]
        processes: usize,
    },
}

fn default_periods() -> Vec<usize> {
    vec![1, 24]
}
fn default_ridge() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1]
}
fn default_max_candidates() -> usize {
    6
}
fn default_timeout() -> f64 {
    60.0
}
fn default_processes() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Evaluation seeds for the seed sweep; the first is the reference.
    #[serde(default)]
    pub eval_seeds: Vec<Seed>,
    /// Fixed channel fractions compared against the coupled rule.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5]
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            eval_seeds: Vec::new(),
            fractions: default_fractions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_master_seed")]
    pub master_seed: Seed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub selector: SelectorMode,
    pub dataset: DatasetConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub eval: EvalBlock,
    pub model: ModelConfig,
    /// Method applied to the model; the baseline in `compare`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodVariant>,
    /// Variants paired against `method` by `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodVariant>,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    std::env::current_dir()
        .map(|d| d.join(p))
        .unwrap_or_else(|_| p.to_path_buf())
}

fn default_master_seed() -> Seed {
    Seed(42)
}

/// Seeds for the three roles, each a fixed function of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub model: u64,
    pub eval: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.dataset.path.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.dataset.path = base.join(&cfg.dataset.path);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn seeds(&self) -> Seeds {
        let m = self.master_seed.0;
        Seeds {
            data: derive_key(m, &[tag::DATA]),
            model: derive_key(m, &[tag::MODEL]),
            eval: self
                .eval
                .seed
                .map_or_else(|| derive_key(m, &[tag::EVAL]), |s| s.0),
        }
    }

    /// Fill every derived field so the written config reproduces the run on
    /// its own.
    pub fn resolve(&mut self) {
        let eval = self.seeds().eval;
        self.eval.seed = Some(Seed(eval));
        self.dataset.path = absolute(&self.dataset.path);
        self.out = self.out.as_deref().map(absolute);
    }

    pub fn schema(&self) -> Result<ChannelSchema, CliError> {
        let d = &self.dataset;
        let m = d.names.len();
        let targets = d
            .targets
            .iter()
            .map(|t| match t {
                ChannelRef::Index(i) if *i < m => Ok(*i),
                ChannelRef::Index(i) => Err(CliError::Config(format!(
                    "target index {i} out of range for {m} channels"
                ))),
                ChannelRef::Name(name) => d.names.iter().position(|n| n == name).ok_or_else(|| {
                    CliError::Config(format!("target {name:?} is not a dataset channel"))
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let continuous = d.continuous.clone().unwrap_or_else(|| vec![true; m]);
        let schema = ChannelSchema::new(d.names.clone(), continuous, targets)?;
        if let Some(expected) = d.m_cont {
            if expected != schema.m_cont() {
                return Err(CliError::Config(format!(
                    "m_cont = {expected} but the continuous flags mark {} channels",
                    schema.m_cont()
                )));
            }
        }
        Ok(schema)
    }

    pub fn eval_config(&self, workers: usize) -> Result<EvalConfig, CliError> {
        let e = &self.eval;
        let cfg = EvalConfig {
            k: e.k,
            eval_seed: self.seeds().eval,
            scenarios: e.scenarios.clone(),
            channel_rule: e.channel_rule,
            bootstrap: e.bootstrap,
            level: e.level,
            workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.schema()?;
        self.eval_config(0)?;
        for m in self.method.iter().chain(&self.methods) {
            m.validate()?;
        }
        match &self.model {
            ModelConfig::SeasonalNaive { periods }
                if periods.is_empty() || periods.contains(&0) =>
            {
                Err(CliError::Config(
                    "periods must be a non-empty list of positive integers".into(),
                ))
            }
            ModelConfig::Linear {
                ridge,
                max_candidates,
                ..
            } if ridge.is_empty()
                || *max_candidates == 0
                || ridge.iter().any(|l| !(*l >= 0.0 && l.is_finite())) =>
            {
                Err(CliError::Config(
                    "linear model needs a non-empty ridge grid of finite values >= 0".into(),
                ))
            }
            ModelConfig::External {
                command,
                timeout_secs,
                processes,
            } if command.is_empty() || !(*timeout_secs > 0.0) || *processes == 0 => {
                Err(CliError::Config(
                    "external model needs a command, a positive timeout and processes".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [dataset]
        path = "data.csv"
        names = ["a", "b"]
        targets = ["b"]

        [window]
        input = 8
        horizon = 2

        [model]
        kind = "seasonal-naive"
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.master_seed, Seed(42));
        assert_eq!(cfg.eval.k, 10_000);
        assert_eq!(cfg.eval.scenarios, BENCHMARK.to_vec());
        assert_eq!(cfg.dataset.splits, [0.6, 0.2, 0.2]);
        assert_eq!(
            cfg.model,
            ModelConfig::SeasonalNaive {
                periods: vec![1, 24]
            }
        );
        assert_eq!(cfg.schema().unwrap().targets(), &[1]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.method = Some(MethodVariant::FaultAugmentation {
            p_aug: 0.5,
            pool: sensorfault::TRANSFER.to_vec(),
        });
        cfg.eval.channel_rule = ChannelRule::fixed(0.5, 0.25).unwrap();
        cfg.resolve();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.seeds(), cfg.seeds());
    }

    #[test]
    fn seeds_depend_on_master_seed() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        let a = cfg.seeds();
        cfg.master_seed = Seed(43);
        let b = cfg.seeds();
        assert!(a.data != b.data && a.model != b.model && a.eval != b.eval);
        cfg.eval.seed = Some(Seed(7));
        let c = cfg.seeds();
        assert_eq!((c.data, c.model, c.eval), (b.data, b.model, 7));
    }

    #[test]
    fn large_seeds_survive_toml() {
        for v in [0, 42, i64::MAX as u64, u64::MAX] {
            #[derive(Serialize, Deserialize)]
            struct W {
                s: Seed,
            }
            let text = toml::to_string(&W { s: Seed(v) }).unwrap();
            assert_eq!(toml::from_str::<W>(&text).unwrap().s, Seed(v));
        }
        assert_eq!(Seed::parse("0xff").unwrap(), Seed(255));
        assert!(Seed::parse("-1").is_err());
    }

    #[test]
    fn schema_errors_name_the_channel() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.dataset.targets = vec![ChannelRef::Index(5)];
        assert!(cfg.schema().unwrap_err().to_string().contains("index 5"));
        cfg.dataset.targets = vec![ChannelRef::Name("zz".into())];
        assert!(cfg.schema().unwrap_err().to_string().contains("\"zz\""));
        cfg.dataset.targets = vec![ChannelRef::Index(0)];
        cfg.dataset.m_cont = Some(1);
        assert!(cfg.schema().unwrap_err().to_string().contains("m_cont"));
    }

    #[test]
    fn scored_scenarios_rejected_for_augmentation() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.method = Some(MethodVariant::FaultAugmentation {
            p_aug: 0.5,
            pool: vec![ScenarioId::Noise],
        });
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
