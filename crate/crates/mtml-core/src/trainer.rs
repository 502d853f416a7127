//! Training orchestration: split, standardize, mine, step, log, checkpoint.
//!
//! Everything is deterministic in (dataset, config): per-epoch and per-batch
//! randomness derives from the master seed and absolute epoch/batch
//! coordinates, so a run resumed from a checkpoint continues bit-identically
//! to an uninterrupted one. Wall-clock time enters only through the
//! observer; the default observer reports zero, keeping library histories
//! reproducible.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureScaler};
use crate::error::CoreError;
use crate::math;
use crate::metric::{self, LossConfig, LossMode, MetricParams};
use crate::miner::{self, MinerConfig, MiningStrategy, Triplet};
use crate::rng;
use crate::stiefel::{self, OptMethod, OptimizerState};

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptMethod,
    /// Embedding size l (must stay below the feature dimension d).
    pub embed_dim: usize,
    pub seed: u64,
    /// Checkpoint cadence in epochs; 0 disables periodic checkpoints
    /// (a final checkpoint is always emitted).
    pub checkpoint_every: usize,
    /// Fraction of individuals assigned to the training split.
    pub train_fraction: f64,
    pub loss: LossConfig,
    pub miner: MinerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.05,
            optimizer: OptMethod::Rsgd,
            embed_dim: 128,
            seed: 42,
            checkpoint_every: 10,
            train_fraction: 0.8,
            loss: LossConfig::default(),
            miner: MinerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.lr > 0.0) {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.embed_dim == 0 {
            return Err(CoreError::InvalidConfig(
                "embedding size must be positive".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        self.loss.validate()?;
        self.miner.validate()?;
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean total loss over stepped batches.
    pub mean_total: f64,
    pub mean_metric: f64,
    pub mean_mse: f64,
    pub batches: usize,
    pub skipped_batches: usize,
    pub triplets: usize,
    /// Admissible anchor-positive pairs in the training split.
    pub admissible_pairs: usize,
    /// Worst ‖LᵀL − I‖_F observed after any step this epoch.
    pub ortho_residual_proj: f64,
    pub ortho_residual_weight: f64,
    /// Filled from the observer clock; zero under the default observer.
    pub wall_time_s: f64,
}

/// One entry per completed epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Everything needed to resume training bit-identically, and the on-disk
/// checkpoint payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    /// Number of completed epochs.
    pub epoch: usize,
    pub params: MetricParams,
    pub opt_proj: OptimizerState,
    pub opt_weight: OptimizerState,
    pub scaler: FeatureScaler,
    pub history: TrainHistory,
    pub config: TrainConfig,
}

/// Training callbacks. `now_seconds` feeds wall-time into the history;
/// the default keeps it at zero so histories stay bit-reproducible.
pub trait TrainObserver {
    fn now_seconds(&mut self) -> f64 {
        0.0
    }
    fn on_epoch(&mut self, _stats: &EpochStats) {}
    fn on_checkpoint(&mut self, _state: &CheckpointState) {}
}

/// Observer that does nothing.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MetricParams,
    pub history: TrainHistory,
    pub scaler: FeatureScaler,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub final_state: CheckpointState,
}

/// Trains the metric on the dataset's training split.
///
/// The dataset must already be imputed and gradient-labeled. Splitting is
/// by individual; features are standardized with statistics from the
/// training split only. With `resume`, training continues from the
/// checkpointed epoch and produces the same result as an uninterrupted run.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    resume: Option<&CheckpointState>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, CoreError> {
    config.validate()?;
    if config.embed_dim >= dataset.dim() {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "embedding size {} must be below feature dimension {}",
            config.embed_dim,
            dataset.dim()
        )));
    }
    let (train_indices, test_indices) =
        dataset.split_by_individual(config.train_fraction, config.seed);
    if train_indices.is_empty() {
        return Err(CoreError::InvalidData("training split is empty".into()));
    }
    let scaler = match resume {
        Some(state) => state.scaler.clone(),
        None => FeatureScaler::fit(dataset, &train_indices)?,
    };
    let standardized = dataset.apply_scaler(&scaler)?;
    let train_ds = standardized.subset(&train_indices)?;

    let admissible = miner::admissible_pair_count(&train_ds, config.miner.n);
    if admissible == 0 {
        return Err(CoreError::NTooStrict {
            n: config.miner.n,
            admissible_pairs: 0,
        });
    }

    let (mut params, mut opt_proj, mut opt_weight, mut history, start_epoch) = match resume {
        Some(state) => (
            state.params.clone(),
            state.opt_proj.clone(),
            state.opt_weight.clone(),
            state.history.clone(),
            state.epoch,
        ),
        None => (
            MetricParams::init(dataset.dim(), config.embed_dim, config.seed)?,
            OptimizerState::new(config.optimizer, config.lr)?,
            OptimizerState::new(config.optimizer, config.lr)?,
            TrainHistory::default(),
            0,
        ),
    };

    let batch_size = config.miner.batch_size;
    for epoch in start_epoch..config.epochs {
        let t0 = observer.now_seconds();
        let mut order: Vec<usize> = (0..train_ds.len()).collect();
        order.shuffle(&mut rng::stream(config.seed, &[rng::SALT_EPOCH, epoch as u64]));

        let mut sums = (0.0f64, 0.0f64, 0.0f64);
        let mut stepped = 0usize;
        let mut skipped = 0usize;
        let mut triplet_count = 0usize;
        let mut worst_proj: f64 = params.proj.ortho_residual();
        let mut worst_weight: f64 = params.weight.ortho_residual();

        for (batch_idx, chunk) in order.chunks(batch_size).enumerate() {
            let batch_ds = train_ds.subset(chunk)?;
            let miner_cfg = MinerConfig {
                seed: rng::mix_seed(
                    config.seed,
                    &[rng::SALT_BATCH, epoch as u64, batch_idx as u64],
                ),
                ..config.miner.clone()
            };
            let miner_params = match miner_cfg.strategy {
                MiningStrategy::Random => None,
                MiningStrategy::SemiHard | MiningStrategy::Hard => Some(&params),
            };
            let triplets = match miner::sample_triplets(&batch_ds, miner_params, &miner_cfg) {
                Ok(t) => t,
                // a batch without admissible pairs is skipped; global
                // admissibility was checked up front
                Err(CoreError::NTooStrict { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if triplets.is_empty() {
                skipped += 1;
                continue;
            }
            let samples: Vec<usize> = (0..batch_ds.len()).collect();
            let (grad_proj, grad_weight, breakdown) =
                metric::grad_total_loss(&params, &batch_ds, &triplets, &samples, &config.loss)?;
            if !breakdown.total.is_finite() {
                return Err(CoreError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            params.proj = stiefel::step(&mut opt_proj, &params.proj, &grad_proj)?;
            if config.loss.mode == LossMode::OpmlNll {
                params.weight = stiefel::step(&mut opt_weight, &params.weight, &grad_weight)?;
            }
            if !params.proj.is_finite() || !params.weight.is_finite() {
                return Err(CoreError::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            let (rp, rw) = params.ortho_residuals();
            worst_proj = worst_proj.max(rp);
            worst_weight = worst_weight.max(rw);
            sums.0 += breakdown.total;
            sums.1 += breakdown.metric_term;
            sums.2 += breakdown.mse_term;
            triplet_count += breakdown.triplet_count;
            stepped += 1;
        }

        let denom = stepped.max(1) as f64;
        let stats = EpochStats {
            epoch,
            mean_total: sums.0 / denom,
            mean_metric: sums.1 / denom,
            mean_mse: sums.2 / denom,
            batches: stepped,
            skipped_batches: skipped,
            triplets: triplet_count,
            admissible_pairs: admissible,
            ortho_residual_proj: worst_proj,
            ortho_residual_weight: worst_weight,
            wall_time_s: observer.now_seconds() - t0,
        };
        history.epochs.push(stats.clone());
        observer.on_epoch(&stats);

        let completed = epoch + 1;
        let periodic = config.checkpoint_every > 0 && completed % config.checkpoint_every == 0;
        if periodic && completed < config.epochs {
            observer.on_checkpoint(&make_state(
                completed, &params, &opt_proj, &opt_weight, &scaler, &history, config,
            ));
        }
    }

    let final_state = make_state(
        config.epochs,
        &params,
        &opt_proj,
        &opt_weight,
        &scaler,
        &history,
        config,
    );
    observer.on_checkpoint(&final_state);
    Ok(TrainOutcome {
        params,
        history,
        scaler,
        train_indices,
        test_indices,
        final_state,
    })
}

fn make_state(
    epoch: usize,
    params: &MetricParams,
    opt_proj: &OptimizerState,
    opt_weight: &OptimizerState,
    scaler: &FeatureScaler,
    history: &TrainHistory,
    config: &TrainConfig,
) -> CheckpointState {
    CheckpointState {
        epoch,
        params: params.clone(),
        opt_proj: opt_proj.clone(),
        opt_weight: opt_weight.clone(),
        scaler: scaler.clone(),
        history: history.clone(),
        config: config.clone(),
    }
}

/// Compares the closed-form gradients against central finite differences
/// (h = 1e−5), entry-wise over both matrices, and returns the worst
/// relative error. Entries where both sides sit below finite-difference
/// resolution contribute their absolute difference, so an all-zero gradient
/// audits as 0. Intended for small instances (d ≤ 8, l ≤ 4).
pub fn finite_diff_audit(
    params: &MetricParams,
    dataset: &Dataset,
    triplets: &[Triplet],
    samples: &[usize],
    config: &LossConfig,
) -> Result<f64, CoreError> {
    const H: f64 = 1e-5;
    let (grad_proj, grad_weight, _) =
        metric::grad_total_loss(params, dataset, triplets, samples, config)?;
    let eval = |p: &MetricParams| -> Result<f64, CoreError> {
        Ok(metric::total_loss(p, dataset, triplets, samples, config)?.total)
    };
    let mut worst: f64 = 0.0;
    for (matrix, analytic) in [(Side::Proj, &grad_proj), (Side::Weight, &grad_weight)] {
        for i in 0..analytic.rows() {
            for j in 0..analytic.cols() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                match matrix {
                    Side::Proj => {
                        plus.proj[(i, j)] += H;
                        minus.proj[(i, j)] -= H;
                    }
                    Side::Weight => {
                        plus.weight[(i, j)] += H;
                        minus.weight[(i, j)] -= H;
                    }
                }
                let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * H);
                let an = analytic[(i, j)];
                let den = math::abs(an).max(math::abs(fd));
                let err = if den < 1e-7 {
                    math::abs(an - fd)
                } else {
                    math::abs(an - fd) / den
                };
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}

enum Side {
    Proj,
    Weight,
}
