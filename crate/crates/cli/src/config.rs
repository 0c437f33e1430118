//! Run configuration: a JSON file whose keys can each be overridden from the
//! command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use transduce_core::baselines::LAMBDA_GRID;
use transduce_core::dataset::{InputColumns, Schema};
use transduce_core::featurizer::ScalerKind;
use transduce_core::Fingerprint;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Featurization {
    Composition,
    Precomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Transduction,
    Ridge,
    Knn,
    Mlp,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Transduction => "transduction",
            ModelChoice::Ridge => "ridge",
            ModelChoice::Knn => "knn",
            ModelChoice::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub id_column: String,
    pub formula_column: String,
    pub target_column: String,
    /// Precomputed inputs: every column starting with this prefix.
    pub feature_prefix: String,
    /// Column holding the dedup key (lowest value kept); dedup is off without it.
    pub dedup_column: Option<String>,
    pub log10: bool,
    pub featurization: Featurization,
    pub scaler: ScalerKind,
    pub nan_fill: Option<f64>,
    /// Keep only the top-k columns by mutual information with the target.
    pub nmi_top_k: Option<usize>,
    pub nmi_bins: usize,
    pub model: ModelChoice,
    pub layers: usize,
    pub width: usize,
    pub k_embed: usize,
    pub interaction: bool,
    /// Anchors drawn per target each epoch; 0 means every valid pair.
    pub per_target_pairs: usize,
    /// Sampled difference-index size.
    pub index_size: usize,
    pub exhaustive_index: bool,
    pub index_cap: usize,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_grid: Vec<f64>,
    pub k_nn: usize,
    pub ood_frac: f64,
    pub val_frac: f64,
    pub precision_frac: f64,
    pub histogram_bins: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            id_column: "id".into(),
            formula_column: "formula".into(),
            target_column: "target".into(),
            feature_prefix: "f".into(),
            dedup_column: None,
            log10: false,
            featurization: Featurization::Composition,
            scaler: ScalerKind::StandardNormalize,
            nan_fill: None,
            nmi_top_k: None,
            nmi_bins: 10,
            model: ModelChoice::Transduction,
            layers: 3,
            width: 256,
            k_embed: 32,
            interaction: false,
            per_target_pairs: 4,
            index_size: 2048,
            exhaustive_index: false,
            index_cap: 250_000,
            epochs: 500,
            patience: 25,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 0.0,
            lambda_grid: LAMBDA_GRID.to_vec(),
            k_nn: 5,
            ood_frac: 0.05,
            val_frac: 0.05,
            precision_frac: 0.30,
            histogram_bins: 20,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Parse a flag value as JSON, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Turn `--key value` pairs into `(key, value)` with dashes mapped to underscores.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, Value)>, CliError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            return Err(CliError::Config {
                key: flag.clone(),
                message: "expected --key value".into(),
            });
        };
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Config {
                    key: key.to_string(),
                    message: "missing value".into(),
                })?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), parse_value(&raw)));
    }
    Ok(out)
}

fn config_error(e: serde_json::Error, source: &str) -> CliError {
    let msg = e.to_string();
    // serde reports unknown keys as "unknown field `x`"
    let key = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| source.to_string());
    CliError::Config { key, message: msg }
}

impl RunConfig {
    /// Load `path` (if any) and apply overrides key by key.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut map = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::MissingArtifact {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                match serde_json::from_str::<Value>(&text).map_err(|e| config_error(e, "<config>"))? {
                    Value::Object(m) => m,
                    _ => {
                        return Err(CliError::Config {
                            key: "<root>".into(),
                            message: "config must be a JSON object".into(),
                        })
                    }
                }
            }
            None => Map::new(),
        };
        // validate the file on its own so errors name the file's key
        serde_json::from_value::<RunConfig>(Value::Object(map.clone())).map_err(|e| config_error(e, "<config>"))?;
        for (key, value) in overrides {
            let mut probe = Map::new();
            probe.insert(key.clone(), value.clone());
            serde_json::from_value::<RunConfig>(Value::Object(probe)).map_err(|e| CliError::Config {
                key: key.clone(),
                message: e.to_string(),
            })?;
            map.insert(key.clone(), value.clone());
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| config_error(e, "<config>"))
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| CliError::Config {
            key: "dataset".into(),
            message: "no dataset path given".into(),
        })
    }

    pub fn schema(&self) -> Schema {
        Schema {
            id: self.id_column.clone(),
            input: match self.featurization {
                Featurization::Composition => InputColumns::Formula(self.formula_column.clone()),
                Featurization::Precomputed => InputColumns::FeaturePrefix(self.feature_prefix.clone()),
            },
            target: self.target_column.clone(),
            dedup_key: self.dedup_column.clone(),
        }
    }

    /// Hash of the canonical (sorted-key) JSON form. The output directory is
    /// left out so identical runs in different places agree.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut value {
            m.remove("out_dir");
        }
        Fingerprint::of_bytes(value.to_string().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_map_dashes_and_parse_json() {
        let o = parse_overrides(&args(&["--k-nn", "7", "--model=ridge", "--dataset", "d.csv"])).unwrap();
        let c = RunConfig::resolve(None, &o).unwrap();
        assert_eq!(c.k_nn, 7);
        assert_eq!(c.model, ModelChoice::Ridge);
        assert_eq!(c.dataset.as_deref(), Some(Path::new("d.csv")));
    }

    #[test]
    fn unknown_key_is_named() {
        let o = parse_overrides(&args(&["--epochz", "3"])).unwrap();
        match RunConfig::resolve(None, &o) {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "epochz"),
            other => panic!("{other:?}"),
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 1, "bogus": true}"#).unwrap();
        match RunConfig::resolve(Some(&p), &[]) {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_type_names_key() {
        let o = parse_overrides(&args(&["--epochs", "many"])).unwrap();
        assert!(matches!(RunConfig::resolve(None, &o), Err(CliError::Config { key, .. }) if key == "epochs"));
    }

    #[test]
    fn fingerprint_ignores_out_dir_only() {
        let a = RunConfig::default();
        let b = RunConfig { out_dir: "elsewhere".into(), ..RunConfig::default() };
        let c = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
