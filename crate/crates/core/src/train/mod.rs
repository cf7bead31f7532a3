//! Optimiser, feature sets and the training protocols: supervised
//! cross-entropy, graph-contrastive pretraining and frozen-encoder
//! fine-tuning of the class head.

mod features;
mod optim;

use std::fs::OpenOptions;
use std::path::{Path as FsPath, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use features::{FeatureSet, Standardizer};
pub use optim::{cosine_lr, sgd_step, OptimState};

use crate::expcli::accuracy;
use crate::infograph::{build_batch, sample_edges, BalanceQuotas, InfoGraph};
use crate::linalg::Matrix;
use crate::loss::{batch_contrastive_loss, cross_entropy_batch, LossConfig, Strategy};
use crate::model::{save_checkpoint, AnchorVectors, GradientTape, Group, ModelParams, Path};
use crate::rng::rng_for;
use crate::scalar::Real;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Xe,
    IgLink,
    IgAnchor,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Xe, Method::IgLink, Method::IgAnchor];

    /// Contrastive strategy, `None` for plain cross-entropy.
    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Method::Xe => None,
            Method::IgLink => Some(Strategy::Link),
            Method::IgAnchor => Some(Strategy::Anchor),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Xe => "xe",
            Method::IgLink => "ig_link",
            Method::IgAnchor => "ig_anchor",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown method {s:?} (expected xe, ig_link or ig_anchor)")))
    }
}

/// Which epoch's model a run returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    LastEpoch,
    BestValidation,
}

/// Everything a training run needs besides data and model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub method: Method,
    pub use_system_context: bool,
    pub epochs: usize,
    /// Fine-tuning passes over the labeled set per semi-supervised epoch.
    pub finetune_epochs: usize,
    pub n_e: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub unlabeled_ratio: f64,
    pub seed: u64,
    /// Stations whose labels are visible.
    pub annotation_mask: Vec<usize>,
    pub lr0: f64,
    pub lr_min: f64,
    pub finetune_lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub selection: Selection,
    /// Save a checkpoint every this many epochs when `out_dir` is set; 0 disables.
    pub checkpoint_every: usize,
    /// Destination for `history.csv` and checkpoints.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            method: Method::IgAnchor,
            use_system_context: true,
            epochs: 60,
            finetune_epochs: 20,
            n_e: 64,
            batch_size: 128,
            tau: 0.1,
            unlabeled_ratio: 4.5,
            seed: 0,
            annotation_mask: vec![0],
            lr0: 0.05,
            lr_min: 0.0,
            finetune_lr0: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            selection: Selection::BestValidation,
            checkpoint_every: 0,
            out_dir: None,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.n_e == 0 || self.batch_size == 0 {
            return bad("n_e and batch_size must be positive".into());
        }
        if self.method != Method::Xe && 2 * self.n_e > self.batch_size {
            return bad(format!(
                "batch_size {} cannot hold the 2·n_e = {} nodes of a sampled batch",
                self.batch_size,
                2 * self.n_e
            ));
        }
        if self.method != Method::Xe && self.finetune_epochs == 0 {
            return bad("graph methods need finetune_epochs > 0".into());
        }
        if self.annotation_mask.is_empty() {
            return bad("annotation mask selects no station".into());
        }
        if self.method == Method::Xe && self.use_system_context {
            return bad("xe does not use system-context pretraining".into());
        }
        if !(self.tau > 0.0) || !(self.unlabeled_ratio > 0.0) {
            return bad("tau and unlabeled_ratio must be positive".into());
        }
        if !(self.lr0 > 0.0) || !(self.finetune_lr0 > 0.0) || !(0.0..=self.lr0).contains(&self.lr_min) {
            return bad(format!("learning rates lr0 {} / lr_min {} invalid", self.lr0, self.lr_min));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("momentum must be in [0,1) and weight_decay ≥ 0".into());
        }
        Ok(())
    }

    fn loss_config(&self) -> Result<LossConfig> {
        let strategy = self
            .method
            .strategy()
            .ok_or_else(|| Error::Config("xe has no contrastive loss".into()))?;
        let cfg = LossConfig { tau: self.tau, strategy };
        cfg.validate()?;
        Ok(cfg)
    }

    fn optimizer<T: Real>(&self, params: &[&[T]], lr0: f64, total_steps: usize) -> OptimState<T> {
        OptimState::new(
            params,
            T::lit(lr0),
            T::lit(self.lr_min.min(lr0)),
            T::lit(self.momentum),
            T::lit(self.weight_decay),
            total_steps,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Contrastive,
    Finetune,
    Supervised,
}

/// One row of `history.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: ModelParams<T>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters `model` holds.
    pub selected_epoch: usize,
}

/// Mean loss of one pass plus how many batches contributed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub batches: usize,
    pub skipped: usize,
}

pub const CONTRASTIVE_GROUPS: [Group; 2] = [Group::Encoder, Group::EmbedHead];
pub const SUPERVISED_GROUPS: [Group; 2] = [Group::Encoder, Group::ClassHead];
pub const HEAD_GROUPS: [Group; 1] = [Group::ClassHead];

/// Batches per contrastive epoch: `⌈edges / n_e⌉`.
pub fn epoch_batches(n_edges: usize, n_e: usize) -> usize {
    n_edges.div_ceil(n_e.max(1)).max(1)
}

/// Class-balanced batches of indices into `labels`.
///
/// Each present class is drawn from its own shuffled cycle and classes are
/// interleaved round-robin, so per-batch class counts differ by at most one.
pub fn balanced_batches<R: Rng + ?Sized>(
    labels: &[usize],
    batch_size: usize,
    n_batches: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        pools[c].push(i);
    }
    pools.retain(|p| !p.is_empty());
    if pools.is_empty() {
        return Vec::new();
    }
    for p in &mut pools {
        p.shuffle(rng);
    }
    let k = pools.len();
    let mut cursor = vec![0usize; k];
    let mut out = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let c = (b + i) % k;
            if cursor[c] == pools[c].len() {
                pools[c].shuffle(rng);
                cursor[c] = 0;
            }
            batch.push(pools[c][cursor[c]]);
            cursor[c] += 1;
        }
        out.push(batch);
    }
    out
}

fn apply_update<T: Real>(model: &mut ModelParams<T>, tape: &mut GradientTape<T>, groups: &[Group], opt: &mut OptimState<T>) -> Result<()> {
    sgd_step(model.slices_mut(groups), tape.slices(groups), opt)?;
    model.commit_running_stats(tape);
    Ok(())
}

/// One pass of graph-contrastive updates over `⌈|edges|/n_e⌉` sampled batches.
///
/// Batches without an evaluable pair are skipped; the schedule still advances.
#[allow(clippy::too_many_arguments)]
pub fn contrastive_epoch<T: Real, R: Rng + ?Sized>(
    plan: &TrainPlan,
    graph: &InfoGraph,
    feats: &FeatureSet<T>,
    model: &mut ModelParams<T>,
    anchors: &AnchorVectors<T>,
    opt: &mut OptimState<T>,
    tape: &mut GradientTape<T>,
    rng: &mut R,
) -> Result<EpochStats> {
    let cfg = plan.loss_config()?;
    let quotas = BalanceQuotas::new(plan.n_e, graph.n_classes(), plan.unlabeled_ratio)?;
    let n_batches = epoch_batches(graph.edges().len(), plan.n_e);
    let mut total = 0.0;
    let mut used = 0;
    for _ in 0..n_batches {
        opt.advance()?;
        let sample = sample_edges(graph, plan.n_e, rng, &quotas)?;
        let batch = build_batch(graph, &sample);
        let (slots, rows): (Vec<usize>, Vec<usize>) = batch
            .segment_slots()
            .map(|(slot, id)| {
                feats
                    .row(id)
                    .map(|r| (slot, r))
                    .ok_or_else(|| Error::Training(format!("segment {id} has no features")))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        tape.zero();
        let z_seg = model.forward(&feats.x.select_rows(&rows), Path::Embed, tape)?;
        let mut z = Matrix::zeros(batch.len(), z_seg.cols());
        for (k, &slot) in slots.iter().enumerate() {
            z.row_mut(slot).copy_from_slice(z_seg.row(k));
        }
        for (slot, c) in batch.anchor_slots() {
            z.row_mut(slot).copy_from_slice(anchors.vector(c));
        }
        let res = match batch_contrastive_loss(&batch, &z, anchors, &cfg) {
            Ok(r) => r,
            Err(Error::BatchLoss(_)) => continue,
            Err(e) => return Err(e),
        };
        let upstream = res.dz.select_rows(&slots);
        model.backward(tape, &upstream)?;
        apply_update(model, tape, &CONTRASTIVE_GROUPS, opt)?;
        total += res.value.as_f64();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Training("no batch of the epoch produced an evaluable pair".into()));
    }
    Ok(EpochStats {
        mean_loss: total / used as f64,
        batches: used,
        skipped: n_batches - used,
    })
}

fn xe_batches(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size.max(1)).max(1)
}

/// One class-balanced cross-entropy pass over `labeled`. With `groups`
/// excluding the encoder, representations are computed once in inference
/// mode and only the head is differentiated.
#[allow(clippy::too_many_arguments)]
pub fn xe_epoch<T: Real, R: Rng + ?Sized>(
    plan: &TrainPlan,
    labeled: &FeatureSet<T>,
    model: &mut ModelParams<T>,
    groups: &[Group],
    opt: &mut OptimState<T>,
    tape: &mut GradientTape<T>,
    rng: &mut R,
) -> Result<EpochStats> {
    let labels = labeled.labels_of(&(0..labeled.len()).collect::<Vec<_>>())?;
    let frozen = !groups.contains(&Group::Encoder);
    let reps = if frozen { Some(model.encode_batch(&labeled.x)?) } else { None };
    let n_batches = xe_batches(labeled.len(), plan.batch_size);
    let mut total = 0.0;
    for idx in balanced_batches(&labels, plan.batch_size.min(labeled.len()), n_batches, rng) {
        opt.advance()?;
        tape.zero();
        let logits = match &reps {
            Some(r) => model.forward_from_rep(&r.select_rows(&idx), Path::Classify, tape)?,
            None => model.forward(&labeled.x.select_rows(&idx), Path::Classify, tape)?,
        };
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, dlogits) = cross_entropy_batch(&logits, &y)?;
        model.backward(tape, &dlogits)?;
        apply_update(model, tape, groups, opt)?;
        total += loss.as_f64();
    }
    Ok(EpochStats {
        mean_loss: total / n_batches as f64,
        batches: n_batches,
        skipped: 0,
    })
}

fn require_labels<T: Real>(labeled: &FeatureSet<T>) -> Result<()> {
    if labeled.is_empty() {
        return Err(Error::Config("no labeled segments visible under the annotation mask".into()));
    }
    Ok(())
}

/// Contrastive pretraining alone for `plan.epochs` epochs; returns the mean
/// loss of each epoch.
pub fn pretrain_contrastive<T: Real>(
    plan: &TrainPlan,
    graph: &InfoGraph,
    feats: &FeatureSet<T>,
    model: &mut ModelParams<T>,
    anchors: &AnchorVectors<T>,
) -> Result<Vec<f64>> {
    plan.validate()?;
    let per_epoch = epoch_batches(graph.edges().len(), plan.n_e);
    let mut opt = plan.optimizer(&model.slices(&CONTRASTIVE_GROUPS), plan.lr0, plan.epochs * per_epoch);
    let mut tape = GradientTape::new(&model.config);
    (1..=plan.epochs)
        .map(|e| {
            let mut rng = rng_for(plan.seed, &[0xC0, e as u64]);
            contrastive_epoch(plan, graph, feats, model, anchors, &mut opt, &mut tape, &mut rng).map(|s| s.mean_loss)
        })
        .collect()
}

/// Train only the class head on frozen representations for
/// `plan.finetune_epochs` passes; returns per-pass mean losses.
pub fn finetune_head<T: Real>(plan: &TrainPlan, labeled: &FeatureSet<T>, model: &mut ModelParams<T>) -> Result<Vec<f64>> {
    require_labels(labeled)?;
    let per_epoch = xe_batches(labeled.len(), plan.batch_size);
    let mut opt = plan.optimizer(&model.slices(&HEAD_GROUPS), plan.finetune_lr0, plan.finetune_epochs.max(1) * per_epoch);
    let mut tape = GradientTape::new(&model.config);
    (1..=plan.finetune_epochs)
        .map(|e| {
            let mut rng = rng_for(plan.seed, &[0xF7, e as u64]);
            xe_epoch(plan, labeled, model, &HEAD_GROUPS, &mut opt, &mut tape, &mut rng).map(|s| s.mean_loss)
        })
        .collect()
}

fn validation_accuracy<T: Real>(model: &ModelParams<T>, val: Option<&FeatureSet<T>>) -> Result<Option<f64>> {
    match val {
        Some(v) if !v.is_empty() => {
            let preds = model.predict(&v.x)?;
            let labels = v.labels_of(&(0..v.len()).collect::<Vec<_>>())?;
            Ok(Some(accuracy(&preds, &labels)?))
        }
        _ => Ok(None),
    }
}

/// Keeps the history, the running best snapshot and the output side effects.
struct RunTracker<T> {
    history: Vec<EpochRecord>,
    best: Option<(f64, usize, ModelParams<T>)>,
}

impl<T: Real> RunTracker<T> {
    fn new() -> Self {
        Self { history: Vec::new(), best: None }
    }

    fn record(&mut self, plan: &TrainPlan, rec: EpochRecord) -> Result<()> {
        if let Some(dir) = &plan.out_dir {
            append_history(&dir.join("history.csv"), std::slice::from_ref(&rec))?;
        }
        self.history.push(rec);
        Ok(())
    }

    fn end_epoch(&mut self, plan: &TrainPlan, epoch: usize, val_acc: Option<f64>, model: &ModelParams<T>) -> Result<()> {
        if let Some(acc) = val_acc {
            if self.best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                self.best = Some((acc, epoch, model.clone()));
            }
        }
        if let Some(dir) = &plan.out_dir {
            if plan.checkpoint_every > 0 && epoch % plan.checkpoint_every == 0 {
                save_checkpoint(model, &dir.join(format!("checkpoint_{epoch:04}.bin")))?;
            }
        }
        Ok(())
    }

    fn finish(self, plan: &TrainPlan, model: ModelParams<T>) -> Result<TrainOutcome<T>> {
        let selected_epoch = select_model(&self.history, plan.selection)?;
        let model = match self.best {
            Some((_, e, m)) if e == selected_epoch => m,
            _ => model,
        };
        Ok(TrainOutcome {
            model,
            history: self.history,
            selected_epoch,
        })
    }
}

/// Joint encoder + class-head training with cross-entropy.
pub fn train_supervised_xe<T: Real>(
    plan: &TrainPlan,
    labeled: &FeatureSet<T>,
    val: Option<&FeatureSet<T>>,
    mut model: ModelParams<T>,
) -> Result<TrainOutcome<T>> {
    plan.validate()?;
    require_labels(labeled)?;
    let per_epoch = xe_batches(labeled.len(), plan.batch_size);
    let mut opt = plan.optimizer(&model.slices(&SUPERVISED_GROUPS), plan.lr0, plan.epochs * per_epoch);
    let mut tape = GradientTape::new(&model.config);
    let mut tracker = RunTracker::new();
    for e in 1..=plan.epochs {
        let mut rng = rng_for(plan.seed, &[0x5E, e as u64]);
        let stats = xe_epoch(plan, labeled, &mut model, &SUPERVISED_GROUPS, &mut opt, &mut tape, &mut rng)?;
        let val_acc = validation_accuracy(&model, val)?;
        tracker.record(plan, EpochRecord { epoch: e, phase: Phase::Supervised, loss: stats.mean_loss, val_acc })?;
        tracker.end_epoch(plan, e, val_acc, &model)?;
    }
    tracker.finish(plan, model)
}

/// Semi-supervised schedule: every epoch runs one contrastive pass over the
/// graph, then `finetune_epochs` frozen-encoder passes over the labeled set.
pub fn train_semi_supervised<T: Real>(
    plan: &TrainPlan,
    graph: &InfoGraph,
    feats: &FeatureSet<T>,
    labeled: &FeatureSet<T>,
    val: Option<&FeatureSet<T>>,
    mut model: ModelParams<T>,
    anchors: &AnchorVectors<T>,
) -> Result<TrainOutcome<T>> {
    plan.validate()?;
    require_labels(labeled)?;
    let per_epoch = epoch_batches(graph.edges().len(), plan.n_e);
    let mut c_opt = plan.optimizer(&model.slices(&CONTRASTIVE_GROUPS), plan.lr0, plan.epochs * per_epoch);
    let ft_steps = plan.epochs * plan.finetune_epochs * xe_batches(labeled.len(), plan.batch_size);
    let mut f_opt = plan.optimizer(&model.slices(&HEAD_GROUPS), plan.finetune_lr0, ft_steps);
    let mut tape = GradientTape::new(&model.config);
    let mut tracker = RunTracker::new();
    for e in 1..=plan.epochs {
        let mut rng = rng_for(plan.seed, &[0xC0, e as u64]);
        let c = contrastive_epoch(plan, graph, feats, &mut model, anchors, &mut c_opt, &mut tape, &mut rng)?;
        tracker.record(plan, EpochRecord { epoch: e, phase: Phase::Contrastive, loss: c.mean_loss, val_acc: None })?;
        let mut ft_loss = 0.0;
        for k in 0..plan.finetune_epochs {
            let mut rng = rng_for(plan.seed, &[0xF7, e as u64, k as u64]);
            ft_loss += xe_epoch(plan, labeled, &mut model, &HEAD_GROUPS, &mut f_opt, &mut tape, &mut rng)?.mean_loss;
        }
        let val_acc = validation_accuracy(&model, val)?;
        tracker.record(
            plan,
            EpochRecord {
                epoch: e,
                phase: Phase::Finetune,
                loss: ft_loss / plan.finetune_epochs as f64,
                val_acc,
            },
        )?;
        tracker.end_epoch(plan, e, val_acc, &model)?;
    }
    tracker.finish(plan, model)
}

/// Pick the epoch to keep: the last one, or the earliest epoch with the
/// highest validation accuracy (falling back to the last epoch when no
/// validation was recorded).
pub fn select_model(history: &[EpochRecord], selection: Selection) -> Result<usize> {
    let last = history
        .iter()
        .map(|r| r.epoch)
        .max()
        .ok_or_else(|| Error::Argument("empty training history".into()))?;
    if selection == Selection::LastEpoch {
        return Ok(last);
    }
    let mut best: Option<(f64, usize)> = None;
    for r in history {
        if let Some(acc) = r.val_acc {
            let better = match best {
                None => true,
                Some((b, e)) => acc > b || (acc == b && r.epoch < e),
            };
            if better {
                best = Some((acc, r.epoch));
            }
        }
    }
    Ok(best.map_or(last, |(_, e)| e))
}

/// Append records to a `epoch,phase,loss,val_acc` CSV, writing the header
/// when the file is new.
pub fn append_history(path: &FsPath, records: &[EpochRecord]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &FsPath) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}
