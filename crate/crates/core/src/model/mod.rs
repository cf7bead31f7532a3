//! Encoder, embedding head, classification head and fixed class anchors,
//! with hand-derived reverse-mode gradients.
//!
//! The encoder is a stack of affine layers, each followed by ReLU; its last
//! width is the representation size `H`. Both heads map `H → hidden → out`
//! through affine, per-feature normalisation, ReLU and affine. The embedding
//! head output is L2-normalised; the classification head emits logits.

mod anchors;
mod checkpoint;
mod layers;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use anchors::{init_anchor_vectors, AnchorVectors};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::{BatchStats, Dense, Head, Norm};

use crate::linalg::{affine_backward, norm, Matrix};
use crate::rng::rng_for;
use crate::scalar::Real;
use crate::siggen::SpectrogramFeature;
use crate::{Error, Result};
use layers::HeadCache;

/// Minimum pre-normalisation norm accepted for an embedding.
pub const MIN_EMBED_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Flattened feature length.
    pub input_dim: usize,
    /// Output width of each encoder layer; the last one is `H`.
    pub encoder_widths: Vec<usize>,
    pub head_hidden: usize,
    /// Embedding dimension `d`.
    pub embed_dim: usize,
    pub n_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 129 * 344,
            encoder_widths: vec![512, 512],
            head_hidden: 512,
            embed_dim: 128,
            n_classes: 3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.encoder_widths.is_empty()
            || self.encoder_widths.contains(&0)
            || self.head_hidden == 0
            || self.embed_dim == 0
            || self.n_classes == 0
        {
            return Err(Error::Config(format!("invalid model shape {self:?}")));
        }
        Ok(())
    }

    pub fn rep_dim(&self) -> usize {
        *self.encoder_widths.last().expect("validated")
    }

    /// Trainable parameter count:
    /// `Σ_l (w_{l-1}·w_l + w_l)` over the encoder (with `w_0 = input_dim`),
    /// plus for each head `H·h + h + 2h + h·out + out`.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut prev = self.input_dim;
        for &w in &self.encoder_widths {
            n += prev * w + w;
            prev = w;
        }
        let head = |out: usize| prev * self.head_hidden + 3 * self.head_hidden + self.head_hidden * out + out;
        n + head(self.embed_dim) + head(self.n_classes)
    }
}

/// Parameter groups the optimizer can update independently.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Encoder,
    EmbedHead,
    ClassHead,
}

/// Which head a forward pass goes through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Path {
    /// Encoder head followed by L2 normalisation.
    Embed,
    /// Classification head, raw logits.
    Classify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder: Vec<Dense<T>>,
    pub embed_head: Head<T>,
    pub class_head: Head<T>,
}

#[derive(Clone, Debug)]
struct EncoderCache<T> {
    /// Input to each layer.
    inputs: Vec<Matrix<T>>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix<T>>,
}

#[derive(Clone, Debug)]
struct ForwardCache<T> {
    path: Path,
    encoder: Option<EncoderCache<T>>,
    head: HeadCache<T>,
    /// Normalised embeddings and pre-normalisation norms (embed path only).
    embed: Option<(Matrix<T>, Vec<T>)>,
}

/// Gradient buffers shaped like [`ModelParams`] plus the activations cached
/// by the most recent training forward pass.
///
/// Running statistics in `grads` are unused and stay zero.
#[derive(Clone, Debug)]
pub struct GradientTape<T> {
    pub grads: ModelParams<T>,
    cache: Option<ForwardCache<T>>,
    pending_stats: Option<(Path, BatchStats<T>)>,
}

impl<T: Real> GradientTape<T> {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            grads: ModelParams::zeros(config),
            cache: None,
            pending_stats: None,
        }
    }

    pub fn zero(&mut self) {
        for s in self.grads.all_slices_mut() {
            s.iter_mut().for_each(|v| *v = T::zero());
        }
        self.cache = None;
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn slices(&self, groups: &[Group]) -> Vec<&[T]> {
        self.grads.slices(groups)
    }
}

fn relu_inplace<T: Real>(m: &mut Matrix<T>) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(T::zero()));
}

impl<T: Real> ModelParams<T> {
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, &[0x3E4C]);
        let mut prev = config.input_dim;
        let encoder = config
            .encoder_widths
            .iter()
            .map(|&w| {
                let l = Dense::init(prev, w, &mut rng);
                prev = w;
                l
            })
            .collect();
        let mut hrng = rng_for(config.seed, &[0x4EAD, 0]);
        let embed_head = Head::init(prev, config.head_hidden, config.embed_dim, &mut hrng);
        let mut crng = rng_for(config.seed, &[0x4EAD, 1]);
        let class_head = Head::init(prev, config.head_hidden, config.n_classes, &mut crng);
        Ok(Self {
            config: config.clone(),
            encoder,
            embed_head,
            class_head,
        })
    }

    /// All-zero parameters of the configured shape (also the gradient layout).
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut prev = config.input_dim;
        let encoder = config
            .encoder_widths
            .iter()
            .map(|&w| {
                let l = Dense::zeros(prev, w);
                prev = w;
                l
            })
            .collect();
        Self {
            config: config.clone(),
            encoder,
            embed_head: Head::zeros(prev, config.head_hidden, config.embed_dim),
            class_head: Head::zeros(prev, config.head_hidden, config.n_classes),
        }
    }

    /// Fresh random classification head drawn from `seed`.
    pub fn reinit_class_head(&mut self, seed: u64) {
        let mut rng = rng_for(seed, &[0x4EAD, 2]);
        self.class_head = Head::init(
            self.config.rep_dim(),
            self.config.head_hidden,
            self.config.n_classes,
            &mut rng,
        );
    }

    fn head(&self, path: Path) -> &Head<T> {
        match path {
            Path::Embed => &self.embed_head,
            Path::Classify => &self.class_head,
        }
    }

    fn head_slices(h: &Head<T>) -> [&[T]; 6] {
        [&h.fc1.w, &h.fc1.b, &h.norm.gamma, &h.norm.beta, &h.fc2.w, &h.fc2.b]
    }

    fn head_slices_mut(h: &mut Head<T>) -> [&mut [T]; 6] {
        [
            &mut h.fc1.w,
            &mut h.fc1.b,
            &mut h.norm.gamma,
            &mut h.norm.beta,
            &mut h.fc2.w,
            &mut h.fc2.b,
        ]
    }

    /// Trainable tensors of the given groups in a fixed order
    /// (encoder layers, embed head, class head).
    pub fn slices(&self, groups: &[Group]) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        if groups.contains(&Group::Encoder) {
            for l in &self.encoder {
                out.push(&l.w);
                out.push(&l.b);
            }
        }
        if groups.contains(&Group::EmbedHead) {
            out.extend(Self::head_slices(&self.embed_head));
        }
        if groups.contains(&Group::ClassHead) {
            out.extend(Self::head_slices(&self.class_head));
        }
        out
    }

    pub fn slices_mut(&mut self, groups: &[Group]) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        if groups.contains(&Group::Encoder) {
            for l in &mut self.encoder {
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
        }
        if groups.contains(&Group::EmbedHead) {
            out.extend(Self::head_slices_mut(&mut self.embed_head));
        }
        if groups.contains(&Group::ClassHead) {
            out.extend(Self::head_slices_mut(&mut self.class_head));
        }
        out
    }

    /// Every stored tensor including running statistics, in checkpoint order.
    pub fn all_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.encoder {
            out.push(&l.w);
            out.push(&l.b);
        }
        for h in [&self.embed_head, &self.class_head] {
            out.extend([
                &h.fc1.w[..],
                &h.fc1.b,
                &h.norm.gamma,
                &h.norm.beta,
                &h.norm.running_mean,
                &h.norm.running_var,
                &h.fc2.w,
                &h.fc2.b,
            ]);
        }
        out
    }

    pub fn all_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        for h in [&mut self.embed_head, &mut self.class_head] {
            out.push(&mut h.fc1.w);
            out.push(&mut h.fc1.b);
            out.push(&mut h.norm.gamma);
            out.push(&mut h.norm.beta);
            out.push(&mut h.norm.running_mean);
            out.push(&mut h.norm.running_var);
            out.push(&mut h.fc2.w);
            out.push(&mut h.fc2.b);
        }
        out
    }

    /// SHA-256 over the little-endian `f64` image of the selected groups.
    pub fn fingerprint(&self, groups: &[Group]) -> String {
        fingerprint_slices(&self.slices(groups))
    }

    pub fn is_finite(&self) -> bool {
        self.all_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.config.input_dim {
            return Err(Error::Argument(format!(
                "feature length {cols} does not match encoder input {}",
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn check_rep(&self, cols: usize) -> Result<()> {
        if cols != self.config.rep_dim() {
            return Err(Error::Argument(format!(
                "representation length {cols} does not match H = {}",
                self.config.rep_dim()
            )));
        }
        Ok(())
    }

    fn encode_cached(&self, x: &Matrix<T>) -> (Matrix<T>, EncoderCache<T>) {
        let mut inputs = Vec::with_capacity(self.encoder.len());
        let mut pre = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for layer in &self.encoder {
            let p = layer.forward(&h);
            inputs.push(h);
            h = p.clone();
            relu_inplace(&mut h);
            pre.push(p);
        }
        (h, EncoderCache { inputs, pre })
    }

    /// Encoder representations for a batch of feature rows.
    pub fn encode_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x.cols())?;
        let mut h = x.clone();
        for layer in &self.encoder {
            h = layer.forward(&h);
            relu_inplace(&mut h);
        }
        Ok(h)
    }

    pub fn encode(&self, features: &[T]) -> Result<Vec<T>> {
        let x = Matrix::from_vec(1, features.len(), features.to_vec());
        Ok(self.encode_batch(&x)?.into_vec())
    }

    pub fn encode_feature(&self, feat: &SpectrogramFeature<T>) -> Result<Vec<T>> {
        self.encode(&feat.values)
    }

    fn normalize_rows(y: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
        let mut z = y.clone();
        let mut norms = Vec::with_capacity(y.rows());
        for r in 0..y.rows() {
            let n = norm(y.row(r));
            if !(n.as_f64() >= MIN_EMBED_NORM) {
                return Err(Error::DegenerateEmbedding { norm: n.as_f64() });
            }
            z.row_mut(r).iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok((z, norms))
    }

    /// Unit-norm embeddings of representation rows (evaluation statistics).
    pub fn embed_batch(&self, rep: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_rep(rep.cols())?;
        let (y, _) = self.embed_head.forward(rep, false);
        Ok(Self::normalize_rows(&y)?.0)
    }

    pub fn head_embed(&self, rep: &[T]) -> Result<Vec<T>> {
        let m = Matrix::from_vec(1, rep.len(), rep.to_vec());
        Ok(self.embed_batch(&m)?.into_vec())
    }

    /// Class logits of representation rows (evaluation statistics).
    pub fn classify_batch(&self, rep: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_rep(rep.cols())?;
        Ok(self.class_head.forward(rep, false).0)
    }

    pub fn head_classify(&self, rep: &[T]) -> Result<Vec<T>> {
        let m = Matrix::from_vec(1, rep.len(), rep.to_vec());
        Ok(self.classify_batch(&m)?.into_vec())
    }

    /// Argmax class per feature row, encoder then classification head.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let logits = self.classify_batch(&self.encode_batch(x)?)?;
        Ok((0..logits.rows())
            .map(|r| {
                logits
                    .row(r)
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    fn head_forward(&self, rep: &Matrix<T>, path: Path) -> Result<(Matrix<T>, HeadCache<T>, Option<(Matrix<T>, Vec<T>)>)> {
        let (y, hc) = self.head(path).forward(rep, true);
        match path {
            Path::Embed => {
                let (z, norms) = Self::normalize_rows(&y)?;
                Ok((z.clone(), hc, Some((z, norms))))
            }
            Path::Classify => Ok((y, hc, None)),
        }
    }

    /// Training-mode forward from raw features; caches activations on the tape.
    pub fn forward(&self, x: &Matrix<T>, path: Path, tape: &mut GradientTape<T>) -> Result<Matrix<T>> {
        self.check_input(x.cols())?;
        let (rep, ec) = self.encode_cached(x);
        let (out, hc, embed) = self.head_forward(&rep, path)?;
        if let Some(s) = &hc.stats {
            tape.pending_stats = Some((path, s.clone()));
        }
        tape.cache = Some(ForwardCache {
            path,
            encoder: Some(ec),
            head: hc,
            embed,
        });
        Ok(out)
    }

    /// Training-mode forward from fixed representations; backward stops at
    /// the representation and leaves encoder gradients untouched.
    pub fn forward_from_rep(&self, rep: &Matrix<T>, path: Path, tape: &mut GradientTape<T>) -> Result<Matrix<T>> {
        self.check_rep(rep.cols())?;
        let (out, hc, embed) = self.head_forward(rep, path)?;
        if let Some(s) = &hc.stats {
            tape.pending_stats = Some((path, s.clone()));
        }
        tape.cache = Some(ForwardCache {
            path,
            encoder: None,
            head: hc,
            embed,
        });
        Ok(out)
    }

    /// Accumulate `∂loss/∂θ` into the tape given the gradient w.r.t. the
    /// forward output (unit embeddings or logits). Consumes the cached
    /// activations.
    pub fn backward(&self, tape: &mut GradientTape<T>, upstream: &Matrix<T>) -> Result<()> {
        let cache = tape
            .cache
            .take()
            .ok_or_else(|| Error::Usage("backward called without cached activations".into()))?;
        let dy = match &cache.embed {
            Some((z, norms)) => {
                if upstream.rows() != z.rows() || upstream.cols() != z.cols() {
                    return Err(Error::Argument("upstream gradient shape mismatch".into()));
                }
                l2_normalize_backward(z, norms, upstream)
            }
            None => upstream.clone(),
        };
        let grads = &mut tape.grads;
        let head_grad = match cache.path {
            Path::Embed => &mut grads.embed_head,
            Path::Classify => &mut grads.class_head,
        };
        let drep = self.head(cache.path).backward(&cache.head, &dy, head_grad);
        if let Some(ec) = cache.encoder {
            let mut dh = drep;
            for l in (0..self.encoder.len()).rev() {
                let pre = &ec.pre[l];
                for (d, &p) in dh.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= T::zero() {
                        *d = T::zero();
                    }
                }
                let g = &mut grads.encoder[l];
                match affine_backward(&ec.inputs[l], &self.encoder[l].w, &dh, &mut g.w, &mut g.b, l > 0) {
                    Some(dx) => dh = dx,
                    None => break,
                }
            }
        }
        Ok(())
    }

    /// Fold the batch statistics of the last training forward into the
    /// running statistics of that head.
    pub fn commit_running_stats(&mut self, tape: &mut GradientTape<T>) {
        if let Some((path, stats)) = tape.pending_stats.take() {
            match path {
                Path::Embed => self.embed_head.norm.update_running(&stats),
                Path::Classify => self.class_head.norm.update_running(&stats),
            }
        }
    }
}

/// Backward of row-wise `z = y/‖y‖`: `dy = (dz − z⟨z, dz⟩)/‖y‖`.
pub fn l2_normalize_backward<T: Real>(z: &Matrix<T>, norms: &[T], dz: &Matrix<T>) -> Matrix<T> {
    let mut dy = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let zr = z.row(r);
        let dzr = dz.row(r);
        let proj = crate::linalg::dot(zr, dzr);
        for ((d, &zv), &g) in dy.row_mut(r).iter_mut().zip(zr).zip(dzr) {
            *d = (g - zv * proj) / norms[r];
        }
    }
    dy
}

pub fn fingerprint_slices<T: Real>(slices: &[&[T]]) -> String {
    let mut h = Sha256::new();
    for s in slices {
        h.update((s.len() as u64).to_le_bytes());
        for v in s.iter() {
            h.update(v.as_f64().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests;
