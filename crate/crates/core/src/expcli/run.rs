use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::report::{ExperimentReport, RepeatResult, RowResult, RunMeta, StationMatrix, SweepReport};
use super::split::{partition_segments, split_dataset, EventSplit};
use super::{accuracy, station_name, ExperimentConfig, Regime, RegimeSpec};
use crate::infograph::{add_annotation_anchors, build_info_graph, InfoGraph};
use crate::model::{init_anchor_vectors, ModelConfig, ModelParams};
use crate::rng::derive_seed;
use crate::siggen::{segment_dataset, Dataset, SegIdAllocator, Segment};
use crate::train::{train_semi_supervised, train_supervised_xe, FeatureSet, Method, Selection, TrainOutcome, TrainPlan};
use crate::{Error, Result};

/// Anything that labels the rows of a feature set.
pub trait Classifier {
    fn predict_set(&self, set: &FeatureSet<f64>) -> Result<Vec<usize>>;

    /// Epoch the classifier was taken from, when it was trained in epochs.
    fn selected_epoch(&self) -> Option<usize> {
        None
    }
}

impl Classifier for ModelParams<f64> {
    fn predict_set(&self, set: &FeatureSet<f64>) -> Result<Vec<usize>> {
        self.predict(&set.x)
    }
}

impl Classifier for TrainOutcome<f64> {
    fn predict_set(&self, set: &FeatureSet<f64>) -> Result<Vec<usize>> {
        self.model.predict(&set.x)
    }

    fn selected_epoch(&self) -> Option<usize> {
        Some(self.selected_epoch)
    }
}

/// Segmented, featurized and standardized data shared by every run of a
/// sweep.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub n_stations: usize,
    pub n_classes: usize,
    pub split: EventSplit,
    /// Training-partition segments at the pretraining geometry, without samples.
    pub graph_segments: Vec<Segment>,
    /// Features of `graph_segments`, same order.
    pub pretrain: FeatureSet<f64>,
    /// Training-partition segments at the evaluation geometry.
    pub finetune: FeatureSet<f64>,
    pub val: FeatureSet<f64>,
    pub test: FeatureSet<f64>,
    pub test_hash: String,
    sc_graph: InfoGraph,
    plain_graph: InfoGraph,
}

impl Prepared {
    /// Information graph for a run: context edges when `system_context`,
    /// plus annotation anchors for labeled segments of `stations`.
    pub fn graph(&self, system_context: bool, stations: &[usize]) -> Result<InfoGraph> {
        let g = if system_context { self.sc_graph.clone() } else { self.plain_graph.clone() };
        let labeled: Vec<(u64, usize)> = self
            .graph_segments
            .iter()
            .filter(|s| stations.contains(&s.stream.station))
            .filter_map(|s| s.label.map(|l| (s.seg_id, l)))
            .collect();
        add_annotation_anchors(g, &labeled, self.n_classes)
    }
}

fn feature_hash(f: &FeatureSet<f64>) -> String {
    let mut h = Sha256::new();
    for r in 0..f.len() {
        h.update(f.ids[r].to_le_bytes());
        h.update((f.labels[r].map_or(u64::MAX, |l| l as u64)).to_le_bytes());
        h.update((f.stations[r] as u64).to_le_bytes());
        for v in f.x.row(r) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Split by event, segment at both geometries, featurize, and standardize
/// with statistics of the training-partition pretraining features.
pub fn prepare(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Prepared> {
    cfg.validate()?;
    let events = dataset.events();
    let split = split_dataset(events, &cfg.split)?;
    let noise = dataset.noise_class();
    let mut ids = SegIdAllocator::new();
    let coarse = segment_dataset(&dataset.streams, &cfg.pretrain_segments, noise, &mut ids);
    let fine = segment_dataset(&dataset.streams, &cfg.eval_segments, noise, &mut ids);
    let [coarse_train, _, _] = partition_segments(coarse, events, &split)?;
    let [fine_train, fine_val, fine_test] = partition_segments(fine, events, &split)?;
    if coarse_train.is_empty() || fine_train.is_empty() || fine_test.is_empty() {
        return Err(Error::Config("a partition holds no segments; the dataset is too short".into()));
    }
    let mut pretrain = FeatureSet::from_segments(&coarse_train, &cfg.features)?;
    let mut finetune = FeatureSet::from_segments(&fine_train, &cfg.features)?;
    let mut val = FeatureSet::from_segments(&fine_val, &cfg.features)?;
    let mut test = FeatureSet::from_segments(&fine_test, &cfg.features)?;
    let st = pretrain.fit_standardizer();
    for f in [&mut pretrain, &mut finetune, &mut val, &mut test] {
        if !f.is_empty() {
            f.standardize(&st)?;
        }
    }
    let graph_segments: Vec<Segment> = coarse_train
        .into_iter()
        .map(|s| Segment { samples: Vec::new(), ..s })
        .collect();
    Ok(Prepared {
        n_stations: dataset.config.n_stations,
        n_classes: dataset.config.n_classes,
        split,
        sc_graph: build_info_graph(&graph_segments),
        plain_graph: InfoGraph::isolated(&graph_segments),
        graph_segments,
        test_hash: feature_hash(&test),
        pretrain,
        finetune,
        val,
        test,
    })
}

/// Per-run inputs handed to a trainer.
pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub prepared: &'a Prepared,
    pub spec: RegimeSpec,
    /// Stations whose labels are visible.
    pub stations: Vec<usize>,
    pub repeat: usize,
    pub plan: TrainPlan,
}

impl RunContext<'_> {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.prepared.pretrain.dim(),
            encoder_widths: self.cfg.model.encoder_widths.clone(),
            head_hidden: self.cfg.model.head_hidden,
            embed_dim: self.cfg.model.embed_dim,
            n_classes: self.prepared.n_classes,
            seed: derive_seed(self.plan.seed, &[0x30DE1]),
        }
    }

    /// The default trainer: supervised cross-entropy or the semi-supervised
    /// graph schedule, per the plan's method.
    pub fn train(&self) -> Result<TrainOutcome<f64>> {
        self.train_with_plan(&self.plan)
    }

    pub fn train_with_plan(&self, plan: &TrainPlan) -> Result<TrainOutcome<f64>> {
        let p = self.prepared;
        let model = ModelParams::init(&self.model_config())?;
        let labeled = p.finetune.subset(&p.finetune.labeled_rows(&self.stations))?;
        let val = p.val.subset(&p.val.labeled_rows(&self.stations))?;
        match plan.method {
            Method::Xe => train_supervised_xe(plan, &labeled, Some(&val), model),
            _ => {
                let graph = p.graph(plan.use_system_context, &self.stations)?;
                let anchors = init_anchor_vectors(p.n_classes, self.cfg.model.embed_dim, derive_seed(plan.seed, &[0xA2]))?;
                train_semi_supervised(plan, &graph, &p.pretrain, &labeled, Some(&val), model, &anchors)
            }
        }
    }
}

/// Accuracy on a test set overall, per station and as a confusion matrix
/// (`confusion[label][prediction]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub overall: f64,
    pub per_station: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
}

pub fn evaluate(preds: &[usize], test: &FeatureSet<f64>, n_stations: usize, n_classes: usize) -> Result<Evaluation> {
    let labels = test.labels_of(&(0..test.len()).collect::<Vec<_>>())?;
    let overall = accuracy(preds, &labels)?;
    let mut per_station = Vec::with_capacity(n_stations);
    for s in 0..n_stations {
        let rows: Vec<usize> = (0..test.len()).filter(|&r| test.stations[r] == s).collect();
        let p: Vec<usize> = rows.iter().map(|&r| preds[r]).collect();
        let l: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        per_station.push(if rows.is_empty() { f64::NAN } else { accuracy(&p, &l)? });
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &l) in preds.iter().zip(&labels) {
        if p >= n_classes || l >= n_classes {
            return Err(Error::Argument(format!("class index {} out of range", p.max(l))));
        }
        confusion[l][p] += 1;
    }
    Ok(Evaluation { overall, per_station, confusion })
}

fn repeat_seed(cfg: &ExperimentConfig, repeat: usize) -> u64 {
    derive_seed(cfg.seed, &[repeat as u64])
}

/// Plan of one run. The seed depends on the repeat and the labeled stations
/// only, so regimes and methods of a repeat share their randomness.
pub fn plan_for(cfg: &ExperimentConfig, spec: &RegimeSpec, stations: &[usize], repeat: usize) -> TrainPlan {
    let row_key = if spec.regime.one_station() { stations[0] as u64 + 1 } else { 0 };
    let mut plan = cfg.train.clone();
    plan.method = spec.method;
    plan.use_system_context = spec.regime.system_context();
    plan.annotation_mask = stations.to_vec();
    plan.seed = derive_seed(repeat_seed(cfg, repeat), &[row_key]);
    plan.selection = if spec.regime == Regime::OneStationSc { Selection::LastEpoch } else { Selection::BestValidation };
    plan.out_dir = None;
    if spec.method == Method::Xe {
        plan.epochs = cfg.xe_epochs.unwrap_or(plan.epochs);
    }
    plan
}

pub(super) fn run_meta(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<RunMeta> {
    let config_json = serde_json::to_string(cfg)?;
    Ok(RunMeta {
        config: cfg.clone(),
        seeds: (0..cfg.repeats).map(|r| repeat_seed(cfg, r)).collect(),
        commit: "unknown".into(),
        config_hash: hex::encode(Sha256::digest(config_json.as_bytes())),
        test_hash: prepared.test_hash.clone(),
    })
}

/// Run every (repeat, row) of `spec` with `train` and aggregate. Runs are
/// independent and execute in parallel; results are joined in
/// (repeat, row) order.
pub fn run_regime_with<C, F>(cfg: &ExperimentConfig, prepared: &Prepared, spec: &RegimeSpec, train: F) -> Result<ExperimentReport>
where
    C: Classifier,
    F: Fn(&RunContext) -> Result<C> + Sync,
{
    spec.validate(prepared.n_stations)?;
    let rows = spec.rows(prepared.n_stations);
    let jobs: Vec<(usize, usize)> = (0..spec.repeats).flat_map(|r| (0..rows.len()).map(move |k| (r, k))).collect();
    let results: Vec<(RowResult, Vec<Vec<u64>>)> = jobs
        .par_iter()
        .map(|&(repeat, k)| {
            let ctx = RunContext {
                cfg,
                prepared,
                spec: *spec,
                stations: rows[k].clone(),
                repeat,
                plan: plan_for(cfg, spec, &rows[k], repeat),
            };
            let label = format!(
                "{}/{} stations {:?} repeat {repeat}",
                spec.regime.as_str(),
                spec.method.as_str(),
                rows[k]
            );
            let run = || -> Result<_> {
                let clf = train(&ctx)?;
                let preds = clf.predict_set(&prepared.test)?;
                let ev = evaluate(&preds, &prepared.test, prepared.n_stations, prepared.n_classes)?;
                Ok((
                    RowResult {
                        train_stations: rows[k].clone(),
                        accuracy: ev.overall,
                        per_station: ev.per_station,
                        selected_epoch: clf.selected_epoch(),
                    },
                    ev.confusion,
                ))
            };
            run().map_err(|e| e.context(label))
        })
        .collect::<Result<_>>()?;
    let mut confusion = vec![vec![0u64; prepared.n_classes]; prepared.n_classes];
    let mut repeats: Vec<RepeatResult> = (0..spec.repeats)
        .map(|r| RepeatResult { repeat: r, seed: repeat_seed(cfg, r), accuracy: 0.0, rows: Vec::new() })
        .collect();
    for (&(r, _), (row, conf)) in jobs.iter().zip(results) {
        for (acc, c) in confusion.iter_mut().zip(conf) {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        repeats[r].rows.push(row);
    }
    for rep in &mut repeats {
        rep.accuracy = rep.rows.iter().map(|x| x.accuracy).sum::<f64>() / rep.rows.len() as f64;
    }
    let row_names = if spec.regime.one_station() {
        rows.iter().map(|r| station_name(r[0])).collect()
    } else {
        vec!["all".to_string()]
    };
    let cells: Vec<Vec<f64>> = (0..rows.len())
        .map(|k| {
            (0..prepared.n_stations)
                .map(|s| repeats.iter().map(|rep| rep.rows[k].per_station[s]).sum::<f64>() / spec.repeats as f64)
                .collect()
        })
        .collect();
    let cross_station_mean = spec.regime.one_station().then(|| {
        let off: Vec<f64> = rows
            .iter()
            .zip(&cells)
            .flat_map(|(r, c)| c.iter().enumerate().filter(move |(s, _)| *s != r[0]).map(|(_, &v)| v))
            .collect();
        off.iter().sum::<f64>() / off.len().max(1) as f64
    });
    let accuracies: Vec<f64> = repeats.iter().map(|r| r.accuracy).collect();
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accuracies.len() as f64).sqrt();
    Ok(ExperimentReport {
        regime: spec.regime,
        method: spec.method,
        station: spec.station,
        accuracies,
        mean,
        std,
        cross_station_mean,
        matrix: StationMatrix {
            row_names,
            col_names: (0..prepared.n_stations).map(station_name).collect(),
            cells,
        },
        confusion,
        repeats,
        meta: run_meta(cfg, prepared)?,
    })
}

/// [`run_regime_with`] using the built-in trainer.
pub fn run_regime(cfg: &ExperimentConfig, prepared: &Prepared, spec: &RegimeSpec) -> Result<ExperimentReport> {
    run_regime_with(cfg, prepared, spec, |ctx| ctx.train())
}

/// Every valid (regime, method) cell, one-station regimes swept over all
/// stations, on one shared test set.
pub fn run_sweep(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<SweepReport> {
    let mut cells = Vec::new();
    for regime in Regime::ALL {
        for &method in regime.methods() {
            let spec = RegimeSpec { regime, station: None, method, repeats: cfg.repeats };
            log::info!("running {} / {}", regime.as_str(), method.as_str());
            cells.push(run_regime(cfg, prepared, &spec)?);
        }
    }
    if cells.iter().any(|c| c.meta.test_hash != prepared.test_hash) {
        return Err(Error::Training("sweep cells were evaluated on different test sets".into()));
    }
    Ok(SweepReport { meta: run_meta(cfg, prepared)?, cells })
}
