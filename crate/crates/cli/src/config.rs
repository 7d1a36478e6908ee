//! Per-subcommand configuration files. Every file is TOML; command-line
//! flags override the values read from it.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use ewlab::matrix_lemma::DEFAULT_TOLERANCE;

pub const DEFAULT_SELFTEST_SEED: u64 = 20_240_601;
pub const DEFAULT_ORACLE_SEED: u64 = 20_240_602;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaCheckConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_starts")]
    pub adversarial_starts: usize,
    #[serde(default = "default_iterations")]
    pub adversarial_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_instances() -> usize {
    100_000
}
fn default_dims() -> Vec<usize> {
    vec![1, 2, 3, 5]
}
fn default_rhos() -> Vec<f64> {
    vec![1.1, 2.0, 3.0, 6.0]
}
fn default_floor() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_starts() -> usize {
    32
}
fn default_iterations() -> usize {
    2000
}

impl Default for LemmaCheckConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtSelftestConfig {
    #[serde(default = "default_selftest_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_selftest_seed() -> u64 {
    DEFAULT_SELFTEST_SEED
}
fn default_trials() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckConfig {
    #[serde(default = "default_oracle_seed")]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
}

fn default_oracle_seed() -> u64 {
    DEFAULT_ORACLE_SEED
}
fn default_paths() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCompareConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub experiment: ewlab::rate_harness::ExperimentSpec,
}

fn default_beta() -> f64 {
    2.0
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
}

pub fn load_or_default<T: DeserializeOwned>(path: Option<&Path>) -> Result<T, String> {
    match path {
        Some(p) => load(p),
        None => toml::from_str("").map_err(|e| format!("internal default config: {e}")),
    }
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, String> {
    toml::to_string(value).map_err(|e| format!("cannot serialize config: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(value: &T) {
        let text = to_toml(value).unwrap();
        let back: T = toml::from_str(&text).unwrap();
        assert_eq!(&back, value);
        assert_eq!(to_toml(&back).unwrap(), text);
    }

    #[test]
    fn configs_round_trip() {
        round_trip(&LemmaCheckConfig { seed: Some(3), ..LemmaCheckConfig::default() });
        round_trip(&LemmaCheckConfig::default());
        round_trip(&OtSelftestConfig { seed: 1, trials: 5 });
        round_trip(&OracleCheckConfig { seed: 2, paths: 100 });
        let exp = ewlab::rate_harness::ExperimentSpec::oracle("holder-ou", Some(0.25), 2.0, vec![8, 16, 32, 64]);
        round_trip(&GridCompareConfig { beta: 3.0, experiment: exp });
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let c = LemmaCheckConfig::default();
        assert_eq!(c.instances, 100_000);
        assert_eq!(c.dims, vec![1, 2, 3, 5]);
        assert!(c.seed.is_none());
        assert!(toml::from_str::<LemmaCheckConfig>("instance = 3").is_err());
        assert!(toml::from_str::<OtSelftestConfig>("").unwrap().seed == DEFAULT_SELFTEST_SEED);
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let lemma: LemmaCheckConfig = load(&dir.join("lemma-check.toml")).unwrap();
        round_trip(&lemma);
        let grid: GridCompareConfig = load(&dir.join("grid-compare-const-ou.toml")).unwrap();
        grid.experiment.validate().unwrap();
        for name in ["const-ou-oracle.toml", "holder-ou-half.toml", "tanh-exact-ot.toml"] {
            let exp: ewlab::rate_harness::ExperimentSpec = load(&dir.join(name)).unwrap();
            exp.validate().unwrap();
            round_trip(&exp);
        }
    }
}
