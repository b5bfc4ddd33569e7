use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FnoConfig, FnoParameters};
use crate::dataset::{Dataset, SampleStore};
use crate::error::{Error, Result};

/// Samples per parallel work item. Chunk sums are reduced in index order,
/// so results do not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    RelativeL2,
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            loss: LossKind::RelativeL2,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

/// Anything the training loop can optimize.
pub trait Trainable: Clone + Sync {
    fn params(&self) -> &[Vec<f64>];
    fn params_mut(&mut self) -> &mut [Vec<f64>];
    /// Loss on sample `index`; with `grads`, adds `scale * dloss/dparams`.
    fn loss(
        &self,
        store: &SampleStore,
        index: usize,
        kind: LossKind,
        grads: Option<(&mut [Vec<f64>], f64)>,
    ) -> Result<f64>;
}

impl Trainable for FnoParameters {
    fn params(&self) -> &[Vec<f64>] {
        self.tensors()
    }

    fn params_mut(&mut self) -> &mut [Vec<f64>] {
        self.tensors_mut()
    }

    fn loss(
        &self,
        store: &SampleStore,
        index: usize,
        kind: LossKind,
        grads: Option<(&mut [Vec<f64>], f64)>,
    ) -> Result<f64> {
        let shape = self.config.spectral_shape(store.height, store.width)?;
        self.sample_loss(&shape, store.input(index), store.target(index), kind, grads)
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u32,
}

impl AdamState {
    pub fn new(params: &[Vec<f64>]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; weight decay enters as an L2 term.
pub fn adam_step(params: &mut [Vec<f64>], grads: &[Vec<f64>], state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let gi = g[i] + cfg.weight_decay * p[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput<M> {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: M,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Trains a freshly initialized FNO (seeded by `cfg.seed`) on `data`.
pub fn train(data: &Dataset, model: FnoConfig, cfg: &TrainConfig) -> Result<TrainOutput<FnoParameters>> {
    let store = &data.store;
    if store.channels != model.in_channels || store.out_len != model.out_channels {
        return Err(Error::Shape(format!(
            "dataset has {} input / {} target channels, model expects {} / {}",
            store.channels, store.out_len, model.in_channels, model.out_channels
        )));
    }
    let init = FnoParameters::init(model, cfg.seed)?;
    train_with(init, data, cfg, |_| {})
}

/// Mini-batch Adam over the training split. `observer` sees every epoch.
pub fn train_with<M: Trainable>(
    mut model: M,
    data: &Dataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochLog),
) -> Result<TrainOutput<M>> {
    cfg.validate()?;
    let train_idx = &data.manifest.train_indices;
    let val_idx = &data.manifest.val_indices;
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    let store = &data.store;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(model.params());
    let mut order = train_idx.clone();
    let mut best: Option<(f64, usize, M)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss_sum, grads) = batch_gradient(&model, store, batch, cfg.loss)?;
            let loss = loss_sum / batch.len() as f64;
            let finite = loss.is_finite() && grads.iter().flatten().all(|g| g.is_finite());
            if !finite {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            adam_step(model.params_mut(), &grads, &mut adam, cfg);
            train_sum += loss_sum;
        }
        let train_loss = train_sum / order.len() as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            evaluate(&model, store, val_idx, cfg.loss)?
        };
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        observer(&entry);
        log.push(entry);
        if best.as_ref().is_none_or(|(v, _, _)| val_loss < *v) {
            best = Some((val_loss, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutput { model, best_epoch, log })
}

/// Sum of per-sample losses and the gradient of their mean.
fn batch_gradient<M: Trainable>(
    model: &M,
    store: &SampleStore,
    batch: &[usize],
    kind: LossKind,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let zeros = || model.params().iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
    let scale = 1.0 / batch.len() as f64;
    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
    let wave = rayon::current_num_threads().max(1);
    let mut total = zeros();
    let mut loss_sum = 0.0;
    for group in chunks.chunks(wave) {
        let parts: Vec<Result<(f64, Vec<Vec<f64>>)>> = group
            .par_iter()
            .map(|chunk| {
                let mut g = zeros();
                let mut s = 0.0;
                for &i in chunk.iter() {
                    s += model.loss(store, i, kind, Some((&mut g, scale)))?;
                }
                Ok((s, g))
            })
            .collect();
        for part in parts {
            let (s, g) = part?;
            loss_sum += s;
            for (t, gi) in total.iter_mut().zip(&g) {
                for (a, b) in t.iter_mut().zip(gi) {
                    *a += b;
                }
            }
        }
    }
    Ok((loss_sum, total))
}

/// Mean loss over `indices`.
pub(crate) fn evaluate<M: Trainable>(model: &M, store: &SampleStore, indices: &[usize], kind: LossKind) -> Result<f64> {
    let parts: Vec<Result<f64>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().map(|&i| model.loss(store, i, kind, None)).sum())
        .collect();
    let mut sum = 0.0;
    for p in parts {
        sum += p?;
    }
    Ok(sum / indices.len() as f64)
}
