//! Pipeline stages. Each stage reads its inputs from the output directory
//! and writes its artifacts there, so `run` is exactly the stages in order.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use transduce_core::baselines::{knn_fit, mlp_baseline, ridge_select, MlpBaseline, MlpBaselineConfig, MlpBaselineMeta, RidgeModel};
use transduce_core::dataset::{apply_log10, dedup_min_by, labeled_subset, load_records, make_splits, PropertyRecord, SplitAssignment};
use transduce_core::eval::{compute_metrics, histogram, EvalRow, MetricsReport};
use transduce_core::featurizer::{
    default_nan_fill, featurize_records, fit_scaler_with_fill, top_k_by_nmi, transform, ElementTable, FeatureMatrix, ScalerState,
};
use transduce_core::nets::AdamConfig;
use transduce_core::transduction::{
    build_difference_index, export_analogies, read_predictions_file, train_bilinear, write_predictions_file, AnchorColumns, AnchorSearcher,
    Architecture, BilinearModel, IndexConfig, IndexMode, ModelMeta, PairSampling, PredictionRow, TransductionConfig,
};
use transduce_core::{Execution, Fingerprint};

use crate::config::{ModelChoice, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub const FEATURES: &str = "features.csv";
pub const SPLIT: &str = "split.json";
pub const MODEL_DIR: &str = "model";
pub const PREDICTIONS: &str = "predictions.csv";
pub const ANALOGIES: &str = "analogies.csv";
pub const HISTOGRAM: &str = "histogram.csv";
pub const REPORT: &str = "report.json";
pub const ARTIFACTS: &str = "artifacts.json";

/// Hashes and producing config of the CSV artifacts, which cannot carry
/// the fingerprint inline.
#[derive(Debug, Default, Serialize, Deserialize)]
struct ArtifactLog {
    files: BTreeMap<String, ArtifactEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactEntry {
    sha256: Fingerprint,
    config_fingerprint: Fingerprint,
}

#[derive(Debug, Serialize, Deserialize)]
struct ColumnSelection {
    columns: Vec<String>,
    config_fingerprint: Fingerprint,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SimpleModel {
    Ridge {
        model: RidgeModel,
        val_mae_by_lambda: Vec<(f64, f64)>,
        config_fingerprint: Fingerprint,
    },
    Knn {
        k: usize,
        config_fingerprint: Fingerprint,
    },
}

struct Ctx {
    out: PathBuf,
    fp: Fingerprint,
}

impl Ctx {
    fn new(cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| transduce_core::Error::Io {
            path: cfg.out_dir.clone(),
            source: e,
        })?;
        Ok(Ctx {
            out: cfg.out_dir.clone(),
            fp: cfg.fingerprint(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact {
                message: "run the producing stage first".into(),
                path: p,
            })
        }
    }

    fn check(&self, artifact: &str, found: Option<&Fingerprint>) -> Result<()> {
        match found {
            Some(f) if *f != self.fp => Err(CliError::Fingerprint {
                artifact: artifact.to_string(),
                expected: self.fp.short().to_string(),
                found: f.short().to_string(),
            }),
            _ => Ok(()),
        }
    }

    fn log(&self) -> Result<ArtifactLog> {
        let p = self.path(ARTIFACTS);
        if p.exists() {
            read_json(&p)
        } else {
            Ok(ArtifactLog::default())
        }
    }

    fn register(&self, name: &str) -> Result<()> {
        let mut log = self.log()?;
        log.files.insert(
            name.to_string(),
            ArtifactEntry {
                sha256: Fingerprint::of_file(&self.path(name))?,
                config_fingerprint: self.fp.clone(),
            },
        );
        write_json(&self.path(ARTIFACTS), &log)
    }

    /// Files absent from the log (hand-made inputs) are accepted as is.
    fn check_csv(&self, name: &str) -> Result<()> {
        let log = self.log()?;
        if let Some(entry) = log.files.get(name) {
            if entry.sha256 == Fingerprint::of_file(&self.path(name))? {
                self.check(name, Some(&entry.config_fingerprint))?;
            }
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(transduce_core::Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| transduce_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingArtifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(serde_json::from_str(&text).map_err(transduce_core::Error::from)?)
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<PropertyRecord>> {
    let mut records = load_records(cfg.dataset_path()?, &cfg.schema())?;
    if cfg.dedup_column.is_some() {
        records = dedup_min_by(records)?;
    }
    if cfg.log10 {
        records = apply_log10(records)?;
    }
    Ok(records)
}

pub fn featurize(cfg: &RunConfig) -> Result<()> {
    let ctx = Ctx::new(cfg)?;
    let records = load_dataset(cfg)?;
    let features = featurize_records(&records, &ElementTable::builtin())?;
    features.write(&ctx.path(FEATURES))?;
    ctx.register(FEATURES)?;
    info!("featurized {} rows x {} columns", features.ids.len(), features.names.len());
    Ok(())
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let ctx = Ctx::new(cfg)?;
    let records = load_dataset(cfg)?;
    let mut split = make_splits(&records, cfg.ood_frac, cfg.val_frac, cfg.seed)?;
    split.config_fingerprint = Some(ctx.fp.clone());
    split.write(&ctx.path(SPLIT))?;
    info!(
        "split {} train / {} val / {} ood, support max {}",
        split.train.len(),
        split.val.len(),
        split.ood.len(),
        split.support_max
    );
    Ok(())
}

fn read_split(ctx: &Ctx) -> Result<SplitAssignment> {
    let split = SplitAssignment::read(&ctx.require(SPLIT)?)?;
    ctx.check(SPLIT, split.config_fingerprint.as_ref())?;
    Ok(split)
}

fn read_features(ctx: &Ctx) -> Result<FeatureMatrix> {
    let p = ctx.require(FEATURES)?;
    ctx.check_csv(FEATURES)?;
    Ok(FeatureMatrix::read(&p)?)
}

fn select_columns(m: &FeatureMatrix, columns: &[String]) -> Result<FeatureMatrix> {
    let idx = columns
        .iter()
        .map(|c| {
            m.names.iter().position(|n| n == c).ok_or_else(|| {
                CliError::Core(transduce_core::Error::MissingColumn(c.clone()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        ids: m.ids.clone(),
        names: columns.to_vec(),
        values: m.values.select(ndarray::Axis(1), &idx),
    })
}

fn scaled(m: &FeatureMatrix, scaler: &ScalerState) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix {
        ids: m.ids.clone(),
        names: m.names.clone(),
        values: transform(m.values.view(), scaler)?,
    })
}

fn transduction_config(cfg: &RunConfig) -> TransductionConfig {
    TransductionConfig {
        arch: Architecture {
            layers: cfg.layers,
            width: cfg.width,
            embed_dim: cfg.k_embed,
            interaction: cfg.interaction,
        },
        pairs: if cfg.per_target_pairs == 0 {
            PairSampling::All
        } else {
            PairSampling::PerTarget(cfg.per_target_pairs)
        },
        epochs: cfg.epochs,
        patience: cfg.patience,
        batch_size: cfg.batch_size,
        adam: adam(cfg),
        index: IndexConfig {
            mode: if cfg.exhaustive_index { IndexMode::Exhaustive } else { IndexMode::Sampled },
            m: cfg.index_size,
            seed: cfg.seed,
            cap: cfg.index_cap,
        },
        seed: cfg.seed,
    }
}

fn adam(cfg: &RunConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    }
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let ctx = Ctx::new(cfg)?;
    let split = read_split(&ctx)?;
    let raw = read_features(&ctx)?;
    let records = load_dataset(cfg)?;
    let columns = match cfg.nmi_top_k {
        Some(k) => {
            let train = labeled_subset(&raw, &records, &split.train)?;
            let keep = top_k_by_nmi(train.x.view(), &train.y, k, cfg.nmi_bins);
            keep.into_iter().map(|i| raw.names[i].clone()).collect()
        }
        None => raw.names.clone(),
    };
    let selected = select_columns(&raw, &columns)?;
    let fill = cfg.nan_fill.unwrap_or_else(|| default_nan_fill(cfg.scaler));
    let scaler = fit_scaler_with_fill(selected.rows_for(&split.train)?.view(), cfg.scaler, fill);
    let checksum = scaler.checksum();
    let x = scaled(&selected, &scaler)?;
    let train = labeled_subset(&x, &records, &split.train)?.with_scaler_checksum(checksum.clone());
    let val = labeled_subset(&x, &records, &split.val)?.with_scaler_checksum(checksum);

    let dir = ctx.path(MODEL_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| transduce_core::Error::Io { path: dir.clone(), source: e })?;
    write_json(&dir.join("scaler.json"), &scaler)?;
    write_json(
        &dir.join("columns.json"),
        &ColumnSelection {
            columns,
            config_fingerprint: ctx.fp.clone(),
        },
    )?;
    let fp = Some(ctx.fp.clone());
    match cfg.model {
        ModelChoice::Transduction => {
            let tc = transduction_config(cfg);
            let (model, history) = train_bilinear(&train, &val, &tc)?;
            info!("transduction model best epoch {}", history.best_epoch);
            let meta = ModelMeta {
                seed: cfg.seed,
                index: tc.index,
                best_epoch: history.best_epoch,
                config_fingerprint: fp,
            };
            model.save(&dir, &meta)?;
            write_json(&dir.join("history.json"), &history)?;
        }
        ModelChoice::Mlp => {
            let mc = MlpBaselineConfig {
                layers: cfg.layers,
                width: cfg.width,
                epochs: cfg.epochs,
                patience: cfg.patience,
                batch_size: cfg.batch_size,
                adam: adam(cfg),
                seed: cfg.seed,
            };
            let (model, history) = mlp_baseline(&train, &val, &mc)?;
            let meta = MlpBaselineMeta {
                seed: cfg.seed,
                best_epoch: history.best_epoch,
                config_fingerprint: fp,
            };
            model.save(&dir, &meta)?;
            write_json(&dir.join("history.json"), &history)?;
        }
        ModelChoice::Ridge => {
            let (model, scores) = ridge_select(&train, &val, &cfg.lambda_grid)?;
            info!("ridge selected lambda {}", model.lambda);
            write_json(
                &dir.join("manifest.json"),
                &SimpleModel::Ridge {
                    model,
                    val_mae_by_lambda: scores,
                    config_fingerprint: ctx.fp.clone(),
                },
            )?;
        }
        ModelChoice::Knn => {
            knn_fit(&train, cfg.k_nn)?;
            write_json(
                &dir.join("manifest.json"),
                &SimpleModel::Knn {
                    k: cfg.k_nn,
                    config_fingerprint: ctx.fp.clone(),
                },
            )?;
        }
    }
    Ok(())
}

fn sorted(mut ids: Vec<String>) -> Vec<String> {
    ids.sort();
    ids
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let ctx = Ctx::new(cfg)?;
    let split = read_split(&ctx)?;
    let raw = read_features(&ctx)?;
    let records = load_dataset(cfg)?;
    let dir = ctx.path(MODEL_DIR);
    let selection: ColumnSelection = read_json(&ctx.require(&format!("{MODEL_DIR}/columns.json"))?)?;
    ctx.check("model/columns.json", Some(&selection.config_fingerprint))?;
    let scaler: ScalerState = read_json(&dir.join("scaler.json"))?;
    let checksum = scaler.checksum();
    let x = scaled(&select_columns(&raw, &selection.columns)?, &scaler)?;
    let train = labeled_subset(&x, &records, &split.train)?.with_scaler_checksum(checksum.clone());
    let eval_ids = sorted(split.val.iter().chain(&split.ood).cloned().collect());
    let test = labeled_subset(&x, &records, &eval_ids)?.with_scaler_checksum(checksum);
    let exec = Execution::default();

    let (pred, anchors): (Vec<f64>, Vec<Option<AnchorColumns>>) = match cfg.model {
        ModelChoice::Transduction => {
            let (model, meta) = BilinearModel::load(&dir)?;
            ctx.check("model/manifest.json", meta.config_fingerprint.as_ref())?;
            let index = build_difference_index(&train, meta.index)?;
            let found = AnchorSearcher::new(&train, &index)?.select_all(&test.x, exec)?;
            let pred = model.predict_batch(&test.x, &train, &found)?;
            (pred, found.iter().map(|a| Some(AnchorColumns::from(a))).collect())
        }
        ModelChoice::Mlp => {
            let (model, meta): (MlpBaseline, _) = MlpBaseline::load(&dir)?;
            ctx.check("model/manifest.json", meta.config_fingerprint.as_ref())?;
            (model.predict(test.x.view())?, vec![None; test.len()])
        }
        ModelChoice::Ridge | ModelChoice::Knn => {
            let pred = match read_json::<SimpleModel>(&dir.join("manifest.json"))? {
                SimpleModel::Ridge { model, config_fingerprint, .. } => {
                    ctx.check("model/manifest.json", Some(&config_fingerprint))?;
                    model.predict(test.x.view())?
                }
                SimpleModel::Knn { k, config_fingerprint } => {
                    ctx.check("model/manifest.json", Some(&config_fingerprint))?;
                    knn_fit(&train, k)?.predict_all(&test.x, exec)?
                }
            };
            (pred, vec![None; test.len()])
        }
    };
    let rows: Vec<PredictionRow> = test
        .ids
        .iter()
        .zip(&test.y)
        .zip(pred.iter().zip(anchors))
        .map(|((id, &y_true), (&y_pred, anchor))| PredictionRow {
            test_id: id.clone(),
            y_true,
            y_pred,
            anchor,
        })
        .collect();
    write_predictions_file(&rows, &ctx.path(PREDICTIONS))?;
    ctx.register(PREDICTIONS)?;
    let path = ctx.path(ANALOGIES);
    let file = std::fs::File::create(&path).map_err(|e| transduce_core::Error::Io { path: path.clone(), source: e })?;
    export_analogies(&rows, std::io::BufWriter::new(file))?;
    ctx.register(ANALOGIES)?;
    histogram(&pred, &test.y, cfg.histogram_bins)?.write_csv_file(&ctx.path(HISTOGRAM))?;
    ctx.register(HISTOGRAM)?;
    info!("wrote {} predictions", rows.len());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<MetricsReport> {
    let ctx = Ctx::new(cfg)?;
    let split = read_split(&ctx)?;
    let pred_path = ctx.require(PREDICTIONS)?;
    ctx.check_csv(PREDICTIONS)?;
    let rows = read_predictions_file(&pred_path)?;
    let ood: HashSet<&str> = split.ood.iter().map(String::as_str).collect();
    let eval_rows: Vec<EvalRow> = rows
        .iter()
        .map(|r| EvalRow {
            id: r.test_id.clone(),
            y_true: r.y_true,
            y_pred: r.y_pred,
            ood: ood.contains(r.test_id.as_str()),
        })
        .collect();
    let metrics = compute_metrics(&eval_rows, split.support_max, cfg.precision_frac)?;
    let mut report = MetricsReport::new(cfg.model.name(), metrics);
    report.log10_targets = cfg.log10;
    report.seeds.insert("split".into(), split.seed);
    report.seeds.insert("model".into(), cfg.seed);
    if let Some(p) = cfg.dataset.as_deref().filter(|p| p.exists()) {
        report.input_hashes.insert("dataset".into(), Fingerprint::of_file(p)?.as_str().to_string());
    }
    report
        .input_hashes
        .insert("predictions".into(), Fingerprint::of_file(&pred_path)?.as_str().to_string());
    report.config_fingerprint = Some(ctx.fp.clone());
    report.write(&ctx.path(REPORT))?;
    Ok(report)
}

pub fn run(cfg: &RunConfig) -> Result<MetricsReport> {
    featurize(cfg)?;
    split(cfg)?;
    train(cfg)?;
    predict(cfg)?;
    evaluate(cfg)
}
