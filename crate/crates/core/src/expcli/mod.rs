//! Experiment harness: event splits, the four labeling regimes, evaluation
//! on the all-station test set, report export and the command-line driver.

pub mod cli;
mod report;
mod run;
mod split;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{
    export_report, export_sweep, load_report, load_sweep, station_name, ExperimentReport, RepeatResult, RowResult,
    RunMeta, StationMatrix, SweepReport, MATRIX_FILE, REPORT_FILE,
};
pub use run::{
    evaluate, plan_for, prepare, run_regime, run_regime_with, run_sweep, Classifier, Evaluation, Prepared, RunContext,
};
pub use split::{owning_event, partition_segments, split_dataset, EventSplit, Partition, SplitSpec, MIN_EVENTS};

use crate::siggen::{FeatureConfig, SegmenterConfig, SynthConfig};
use crate::train::{Method, TrainPlan};
use crate::{Error, Result};

/// `100 · matches / total`.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::Argument(format!(
            "accuracy needs equal non-empty inputs, got {} predictions and {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Which labels are visible and whether cross-sensor context edges are used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    All,
    AllSc,
    OneStation,
    OneStationSc,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::All, Regime::AllSc, Regime::OneStation, Regime::OneStationSc];

    pub fn system_context(self) -> bool {
        matches!(self, Regime::AllSc | Regime::OneStationSc)
    }

    pub fn one_station(self) -> bool {
        matches!(self, Regime::OneStation | Regime::OneStationSc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::All => "all",
            Regime::AllSc => "all_sc",
            Regime::OneStation => "one_station",
            Regime::OneStationSc => "one_station_sc",
        }
    }

    /// Methods that make sense under this regime.
    pub fn methods(self) -> &'static [Method] {
        if self.system_context() {
            &[Method::IgLink, Method::IgAnchor]
        } else {
            &Method::ALL
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| {
            Error::Argument(format!("unknown regime {s:?} (expected all, all_sc, one_station or one_station_sc)"))
        })
    }
}

/// One cell of the experiment grid. `station = None` under a one-station
/// regime sweeps every station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub station: Option<usize>,
    pub method: Method,
    pub repeats: usize,
}

impl RegimeSpec {
    pub fn validate(&self, n_stations: usize) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        if !self.regime.methods().contains(&self.method) {
            return Err(Error::Argument(format!(
                "method {} is not available under regime {}",
                self.method.as_str(),
                self.regime.as_str()
            )));
        }
        match (self.regime.one_station(), self.station) {
            (false, Some(_)) => Err(Error::Argument(format!("regime {} takes no station", self.regime.as_str()))),
            (true, Some(s)) if s >= n_stations => {
                Err(Error::Argument(format!("station {s} out of range for {n_stations} stations")))
            }
            _ => Ok(()),
        }
    }

    /// Stations the regime trains from, one list per matrix row.
    pub fn rows(&self, n_stations: usize) -> Vec<Vec<usize>> {
        match (self.regime.one_station(), self.station) {
            (false, _) => vec![(0..n_stations).collect()],
            (true, Some(s)) => vec![vec![s]],
            (true, None) => (0..n_stations).map(|s| vec![s]).collect(),
        }
    }
}

/// Encoder and head widths; input width and class count come from the data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub encoder_widths: Vec<usize>,
    pub head_hidden: usize,
    pub embed_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            encoder_widths: vec![512, 512],
            head_hidden: 512,
            embed_dim: 128,
        }
    }
}

/// Complete experiment configuration, loadable from TOML.
///
/// ```toml
/// seed = 1
/// repeats = 3
/// xe_epochs = 40          # optional, defaults to train.epochs
/// # data_dir = "data/"    # load a saved dataset instead of synthesising
///
/// [synth]      # SynthConfig
/// [split]      # test_fraction, val_fraction, seed
/// [pretrain_segments]  # window_s, stride_s
/// [eval_segments]
/// [features]   # win_s, hop_s, freq_bands, time_frames
/// [model]      # encoder_widths, head_hidden, embed_dim
/// [train]      # TrainPlan: epochs, finetune_epochs, n_e, batch_size, tau, lr0, ...
/// ```
///
/// Per run, `train.method`, `use_system_context`, `annotation_mask`, `seed`
/// and `selection` are overwritten from the regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repeats: usize,
    pub xe_epochs: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub split: SplitSpec,
    pub pretrain_segments: SegmenterConfig,
    pub eval_segments: SegmenterConfig,
    pub features: FeatureConfig,
    pub model: ModelSpec,
    pub train: TrainPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: 5,
            xe_epochs: None,
            data_dir: None,
            synth: SynthConfig::default(),
            split: SplitSpec::default(),
            pretrain_segments: SegmenterConfig { window_s: 30.0, stride_s: 30.0 },
            eval_segments: SegmenterConfig { window_s: 30.0, stride_s: 15.0 },
            features: FeatureConfig::default(),
            model: ModelSpec::default(),
            train: TrainPlan::default(),
        }
    }
}

/// The bundled reference benchmark, identical to `configs/reference.toml`.
pub const REFERENCE_TOML: &str = include_str!("../../../../configs/reference.toml");

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Small multi-station benchmark used by the trend checks.
    pub fn reference_benchmark() -> Self {
        Self::from_toml(REFERENCE_TOML).expect("bundled reference config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        self.synth.validate()?;
        self.split.validate()?;
        self.pretrain_segments.validate()?;
        self.eval_segments.validate()?;
        if self.model.encoder_widths.is_empty() || self.model.encoder_widths.contains(&0) {
            return Err(Error::Config("model.encoder_widths must be non-empty and positive".into()));
        }
        if self.xe_epochs == Some(0) {
            return Err(Error::Config("xe_epochs must be positive".into()));
        }
        Ok(())
    }
}
