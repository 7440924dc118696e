use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mi_bracket::data::{PairingPolicy, SyntheticSpec};
use mi_bracket::fusion::TrainConfig;
use mi_bracket::ksg::KsgConfig;
use serde::{Deserialize, Serialize};

/// Prefix of environment overrides. `MIBRACKET_TRAINING__MAX_EPOCHS=20` sets
/// `training.max_epochs`: the key path is upper-cased and `.` becomes `__`.
pub const ENV_PREFIX: &str = "MIBRACKET_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub pairing: PairingPolicy,
    /// Rows drawn (stratified when labels exist) from every feature file.
    pub sample_size: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Label of the dataset combination, used as the heatmap column.
    pub combination: String,
    pub training: TrainConfig,
    pub ksg: KsgConfig,
    pub attribution: AttributionSettings,
    /// Feature set name to delimited file.
    pub features: BTreeMap<String, PathBuf>,
    pub pairs: Vec<PairSpec>,
    pub synthetic: Vec<SyntheticPairSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairing: PairingPolicy::SeededRandom,
            sample_size: 500,
            workers: 0,
            combination: "default".into(),
            training: TrainConfig::default(),
            ksg: KsgConfig::default(),
            attribution: AttributionSettings::default(),
            features: BTreeMap::new(),
            pairs: Vec::new(),
            synthetic: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSettings {
    pub bootstrap: usize,
    pub level: f64,
    pub source: Option<String>,
    pub filter: Option<String>,
    pub dimensions: Vec<String>,
}

impl Default for AttributionSettings {
    fn default() -> Self {
        Self { bootstrap: 10, level: 0.95, source: None, filter: None, dimensions: Vec::new() }
    }
}

impl AttributionSettings {
    pub fn configured(&self) -> bool {
        self.source.is_some() || self.filter.is_some() || !self.dimensions.is_empty()
    }
}

/// Two named feature sets to estimate between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub name: String,
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPairSpec {
    pub name: String,
    #[serde(flatten)]
    pub spec: SyntheticSpec,
}

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Parse(String),
    Invalid(Vec<String>),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read config {}: {e}", p.display()),
            ConfigError::Parse(m) => write!(f, "invalid config: {m}"),
            ConfigError::Invalid(problems) => {
                write!(f, "invalid config ({} problems):", problems.len())?;
                for p in problems {
                    write!(f, "\n  - {p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses an environment value as a TOML value, falling back to a string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Applies `MIBRACKET_*` overrides to a parsed document.
pub fn apply_env(doc: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let mut overrides: Vec<(String, String)> =
        vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len()).collect();
    overrides.sort();
    for (key, raw) in overrides {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        let (last, parents) = path.split_last().expect("non-empty key");
        let mut table = &mut *doc;
        for part in parents {
            let entry = table.entry(part.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| ConfigError::Parse(format!("{key}: `{part}` is not a table")))?;
        }
        table.insert(last.clone(), env_value(&raw));
    }
    Ok(())
}

/// Reads a config file (or the defaults when `path` is `None`), then applies
/// environment overrides from `vars`.
pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig, ConfigError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read(p.to_owned(), e))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    apply_env(&mut doc, vars)?;
    let mut cfg: RunConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    // Relative feature paths are taken from the config's directory and made
    // absolute, so the echoed config works from any directory.
    let base = path.and_then(Path::parent).unwrap_or(Path::new(""));
    for p in cfg.features.values_mut() {
        if p.is_relative() {
            *p = std::path::absolute(base.join(&*p)).map_err(|e| ConfigError::Parse(format!("{}: {e}", p.display())))?;
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Every violated constraint, so a broken config is fixed in one pass.
    pub fn problems(&self) -> Vec<String> {
        let mut p: Vec<String> = self.training.problems().into_iter().map(|m| format!("training.{m}")).collect();
        if self.ksg.k == 0 {
            p.push("ksg.k must be at least 1".into());
        }
        if self.ksg.leaf_size == 0 {
            p.push("ksg.leaf_size must be at least 1".into());
        }
        if !(self.ksg.noise >= 0.0 && self.ksg.noise.is_finite()) {
            p.push("ksg.noise must be finite and non-negative".into());
        }
        if self.seed > i64::MAX as u64 {
            p.push("seed must fit in a signed 64-bit integer".into());
        }
        if self.sample_size < 2 {
            p.push("sample_size must be at least 2".into());
        }
        if self.attribution.bootstrap < 2 {
            p.push("attribution.bootstrap must be at least 2".into());
        }
        if !(self.attribution.level > 0.0 && self.attribution.level < 1.0) {
            p.push("attribution.level must lie in (0, 1)".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for pair in &self.pairs {
            for side in [&pair.x, &pair.y] {
                if !self.features.contains_key(side) {
                    p.push(format!("pair `{}` refers to unknown feature set `{side}`", pair.name));
                }
            }
        }
        for name in self.pairs.iter().map(|x| &x.name).chain(self.synthetic.iter().map(|s| &s.name)) {
            if !names.insert(name) {
                p.push(format!("pair name `{name}` is used more than once"));
            }
        }
        for s in &self.synthetic {
            if let Err(e) = s.spec.validate() {
                p.push(format!("synthetic `{}`: {e}", s.name));
            }
        }
        if self.attribution.configured() {
            let a = &self.attribution;
            for (role, name) in [("source", &a.source), ("filter", &a.filter)] {
                match name {
                    None => p.push(format!("attribution.{role} is required when attribution is configured")),
                    Some(n) if !self.features.contains_key(n) => {
                        p.push(format!("attribution.{role} refers to unknown feature set `{n}`"))
                    }
                    Some(_) => {}
                }
            }
            if a.dimensions.is_empty() {
                p.push("attribution.dimensions must name at least one feature set".into());
            }
            for d in &a.dimensions {
                if !self.features.contains_key(d) {
                    p.push(format!("attribution dimension `{d}` is not a known feature set"));
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }
}
