//! The parametric metric: embeddings, distances, similarities, triplet
//! losses (angular hinge and probabilistic NLL), MSE heads, and their
//! closed-form Euclidean gradients.
//!
//! Loss and gradient share one evaluation path (`eval_batch`) so the
//! reported breakdown and the differentiated quantity are always the same
//! function.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::linalg::{dot, sub, Mat};
use crate::math;
use crate::miner::Triplet;
use crate::rng;
use crate::schema::Schema;

/// Learnable state: two `d×l` matrices with orthonormal columns.
///
/// `proj` parameterizes the squared Mahalanobis-like distance
/// `δ²(x, y) = ‖projᵀ(x − y)‖²` and carries the embedding; `weight`
/// parameterizes the bilinear similarity factor of the probabilistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub proj: Mat,
    pub weight: Mat,
}

impl MetricParams {
    /// Random orthonormal initialization: seeded Gaussian entries pushed
    /// through thin QR. Requires `embed_dim < feature_dim`.
    pub fn init(feature_dim: usize, embed_dim: usize, seed: u64) -> Result<Self, CoreError> {
        if embed_dim == 0 || embed_dim >= feature_dim {
            return Err(CoreError::InvalidConfig(format!(
                "embedding size must satisfy 0 < l < d, got l = {embed_dim}, d = {feature_dim}"
            )));
        }
        let proj = random_orthonormal(feature_dim, embed_dim, seed, rng::SALT_INIT_L)?;
        let weight = random_orthonormal(feature_dim, embed_dim, seed, rng::SALT_INIT_R)?;
        Ok(MetricParams { proj, weight })
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.proj.rows()
    }

    #[inline]
    pub fn embed_dim(&self) -> usize {
        self.proj.cols()
    }

    /// Orthonormality residuals (proj, weight).
    pub fn ortho_residuals(&self) -> (f64, f64) {
        (self.proj.ortho_residual(), self.weight.ortho_residual())
    }
}

fn random_orthonormal(d: usize, l: usize, seed: u64, salt: u64) -> Result<Mat, CoreError> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = rng::stream(seed, &[salt]);
    let gauss = Mat::from_fn(d, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    gauss.thin_qr_q()
}

/// Which triplet loss drives the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Hinged angular constraint; touches only `proj`.
    AngularHinge,
    /// Probabilistic (negative log likelihood) form; trains `proj` and `weight`.
    OpmlNll,
}

/// Loss hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default = "default_mode")]
    pub mode: LossMode,
    /// Angular bound α in degrees, 0 < α < 90.
    #[serde(default = "default_alpha")]
    pub alpha_deg: f64,
    /// Logistic temperature for the NLL mode.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Weight of the MSE head term; 0 disables the heads.
    #[serde(default = "default_lambda")]
    pub lambda_mse: f64,
    /// Task index → embedding dimension. `None` selects the default layout
    /// (experts then gradients on the trailing dimensions).
    #[serde(default)]
    pub head_assignment: Option<BTreeMap<usize, usize>>,
}

fn default_mode() -> LossMode {
    LossMode::AngularHinge
}
fn default_alpha() -> f64 {
    45.0
}
fn default_tau() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.1
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mode: default_mode(),
            alpha_deg: default_alpha(),
            tau: default_tau(),
            lambda_mse: default_lambda(),
            head_assignment: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.alpha_deg > 0.0 && self.alpha_deg < 90.0) {
            return Err(CoreError::InvalidConfig(format!(
                "alpha must lie in (0, 90) degrees, got {}",
                self.alpha_deg
            )));
        }
        if !(self.tau > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.lambda_mse < 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "lambda_mse must be non-negative, got {}",
                self.lambda_mse
            )));
        }
        Ok(())
    }

    /// Resolves the head map against a schema and embedding size, checking
    /// that dimensions are distinct and in range.
    pub fn resolved_heads(
        &self,
        schema: &Schema,
        embed_dim: usize,
    ) -> Result<BTreeMap<usize, usize>, CoreError> {
        let heads = match &self.head_assignment {
            Some(map) => map.clone(),
            None => default_head_assignment(schema, embed_dim),
        };
        let mut seen = Vec::new();
        for (&task, &dim) in &heads {
            if task >= schema.len() {
                return Err(CoreError::InvalidConfig(format!(
                    "head task {task} out of range (T = {})",
                    schema.len()
                )));
            }
            if dim >= embed_dim {
                return Err(CoreError::InvalidConfig(format!(
                    "head dimension {dim} out of range (l = {embed_dim})"
                )));
            }
            if seen.contains(&dim) {
                return Err(CoreError::InvalidConfig(format!(
                    "head dimension {dim} assigned twice"
                )));
            }
            seen.push(dim);
        }
        Ok(heads)
    }
}

/// Default head layout: expert tasks first, then gradient tasks, as many as
/// fit, occupying the trailing embedding dimensions in task order.
pub fn default_head_assignment(schema: &Schema, embed_dim: usize) -> BTreeMap<usize, usize> {
    let tasks = schema.head_tasks();
    let count = tasks.len().min(embed_dim);
    let first_dim = embed_dim - count;
    tasks
        .into_iter()
        .take(count)
        .enumerate()
        .map(|(i, task)| (task, first_dim + i))
        .collect()
}

/// `projᵀ x`, the embedding of a feature vector.
pub fn embed(proj: &Mat, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), proj.rows(), "embed: feature dimension");
    proj.transpose_mul_vec(x)
}

/// Squared Mahalanobis-like distance `‖projᵀ(a − b)‖²`.
pub fn mahalanobis_sq(proj: &Mat, a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mahalanobis_sq: point dimensions");
    let e = proj.transpose_mul_vec(&sub(a, b));
    dot(&e, &e)
}

/// Bilinear similarity `aᵀ M Mᵀ b`.
pub fn bilinear_sim(m: &Mat, a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "bilinear_sim: point dimensions");
    let ea = m.transpose_mul_vec(a);
    let eb = m.transpose_mul_vec(b);
    dot(&ea, &eb)
}

/// The angular-loss coefficient 4·tan²α (α in degrees).
///
/// Exactly 4.0 at α = 45° (see [`math::tan_degrees`]).
pub fn angular_coefficient(alpha_deg: f64) -> f64 {
    let t = math::tan_degrees(alpha_deg);
    4.0 * t * t
}

/// Angular hinge max(0, δ²(a, p) − 4·tan²α · δ²(neg, c)) with the center c
/// taken as the input-space midpoint (a + p)/2.
pub fn angular_hinge(proj: &Mat, a: &[f64], p: &[f64], neg: &[f64], alpha_deg: f64) -> f64 {
    let margin = constraint_margin(proj, a, p, neg, alpha_deg);
    if margin < 0.0 {
        -margin
    } else {
        0.0
    }
}

/// Signed angular-constraint margin m = 4·tan²α·δ²(neg, c) − δ²(a, p);
/// positive means the constraint is satisfied.
fn constraint_margin(proj: &Mat, a: &[f64], p: &[f64], neg: &[f64], alpha_deg: f64) -> f64 {
    let c: Vec<f64> = a.iter().zip(p.iter()).map(|(x, y)| 0.5 * (x + y)).collect();
    angular_coefficient(alpha_deg) * mahalanobis_sq(proj, neg, &c) - mahalanobis_sq(proj, a, p)
}

/// Stable −log(σ(m/τ)·σ(s/τ)); finite for |m/τ|, |s/τ| well beyond 1e4.
pub fn nll_from_margins(m: f64, s: f64, tau: f64) -> f64 {
    math::neg_log_sigmoid(m / tau) + math::neg_log_sigmoid(s / tau)
}

/// Probabilistic triplet loss −log p with
/// p = σ(m/τ)·σ(s/τ), m the angular-constraint margin and s the
/// `weight`-similarity margin between positive and negative.
pub fn triplet_nll(
    params: &MetricParams,
    a: &[f64],
    p: &[f64],
    neg: &[f64],
    alpha_deg: f64,
    tau: f64,
) -> f64 {
    let m = constraint_margin(&params.proj, a, p, neg, alpha_deg);
    let s = bilinear_sim(&params.weight, a, p) - bilinear_sim(&params.weight, a, neg);
    nll_from_margins(m, s, tau)
}

/// Squared error of embedding dimension `k` against a target.
pub fn mse_head(proj: &Mat, x: &[f64], k: usize, target: f64) -> f64 {
    assert!(k < proj.cols(), "mse_head: dimension {k} out of range");
    let e = embed(proj, x)[k] - target;
    e * e
}

/// Per-term loss decomposition; `total` is exactly `metric_term + mse_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean triplet loss over the batch.
    pub metric_term: f64,
    /// λ · mean of the per-(sample, head) squared errors.
    pub mse_term: f64,
    pub total: f64,
    /// Unweighted mean squared error over evaluated (sample, head) pairs.
    pub mse_raw_mean: f64,
    /// Number of (sample, head) pairs with a present label.
    pub mse_pairs: usize,
    pub triplet_count: usize,
}

/// Total loss over a triplet batch plus labeled samples; see
/// [`grad_total_loss`] for the matching gradients.
pub fn total_loss(
    params: &MetricParams,
    dataset: &Dataset,
    triplets: &[Triplet],
    samples: &[usize],
    config: &LossConfig,
) -> Result<LossBreakdown, CoreError> {
    eval_batch(params, dataset, triplets, samples, config, None)
}

/// Total loss and its exact Euclidean gradients (d×l each) with respect to
/// `proj` and `weight`.
pub fn grad_total_loss(
    params: &MetricParams,
    dataset: &Dataset,
    triplets: &[Triplet],
    samples: &[usize],
    config: &LossConfig,
) -> Result<(Mat, Mat, LossBreakdown), CoreError> {
    let d = params.feature_dim();
    let l = params.embed_dim();
    let mut grads = (Mat::zeros(d, l), Mat::zeros(d, l));
    let breakdown = eval_batch(params, dataset, triplets, samples, config, Some(&mut grads))?;
    Ok((grads.0, grads.1, breakdown))
}

fn eval_batch(
    params: &MetricParams,
    dataset: &Dataset,
    triplets: &[Triplet],
    samples: &[usize],
    config: &LossConfig,
    mut grads: Option<&mut (Mat, Mat)>,
) -> Result<LossBreakdown, CoreError> {
    if triplets.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    config.validate()?;
    let heads = config.resolved_heads(dataset.schema(), params.embed_dim())?;
    let k4 = angular_coefficient(config.alpha_deg);
    let inv_batch = 1.0 / triplets.len() as f64;

    let mut metric_sum = 0.0;
    for t in triplets {
        let a = &dataset.record(t.anchor).features;
        let p = &dataset.record(t.positive).features;
        let neg = &dataset.record(t.negative).features;
        let u = sub(a, p);
        let c: Vec<f64> = a.iter().zip(p.iter()).map(|(x, y)| 0.5 * (x + y)).collect();
        let v = sub(neg, &c);
        let pu = params.proj.transpose_mul_vec(&u);
        let pv = params.proj.transpose_mul_vec(&v);
        let d_ap = dot(&pu, &pu);
        let d_nc = dot(&pv, &pv);
        match config.mode {
            LossMode::AngularHinge => {
                let h = d_ap - k4 * d_nc;
                if h > 0.0 {
                    metric_sum += h;
                    if let Some((dl, _)) = grads.as_deref_mut() {
                        dl.add_outer(2.0 * inv_batch, &u, &pu);
                        dl.add_outer(-2.0 * k4 * inv_batch, &v, &pv);
                    }
                }
            }
            LossMode::OpmlNll => {
                let m = k4 * d_nc - d_ap;
                let w = sub(p, neg);
                let wa = params.weight.transpose_mul_vec(a);
                let ww = params.weight.transpose_mul_vec(&w);
                let s = dot(&wa, &ww);
                metric_sum += nll_from_margins(m, s, config.tau);
                if let Some((dl, dr)) = grads.as_deref_mut() {
                    // d(−log σ(m/τ))/dm = (σ(m/τ) − 1)/τ
                    let gm = (math::sigmoid(m / config.tau) - 1.0) / config.tau;
                    dl.add_outer(2.0 * k4 * gm * inv_batch, &v, &pv);
                    dl.add_outer(-2.0 * gm * inv_batch, &u, &pu);
                    let gs = (math::sigmoid(s / config.tau) - 1.0) / config.tau;
                    dr.add_outer(gs * inv_batch, a, &ww);
                    dr.add_outer(gs * inv_batch, &w, &wa);
                }
            }
        }
    }
    let metric_term = metric_sum * inv_batch;

    let mut mse_sum = 0.0;
    let mut pairs = 0usize;
    if !heads.is_empty() {
        // first pass only counts, so gradient scaling knows the pair count
        for &s in samples {
            for (&task, _) in &heads {
                if dataset.record(s).labels.is_present(task) {
                    pairs += 1;
                }
            }
        }
        if pairs > 0 {
            let coef = 2.0 * config.lambda_mse / pairs as f64;
            for &s in samples {
                let rec = dataset.record(s);
                for (&task, &dim) in &heads {
                    let y = match rec.labels.get(task) {
                        Some(y) => y,
                        None => continue,
                    };
                    let e = embed(&params.proj, &rec.features)[dim] - y;
                    mse_sum += e * e;
                    if config.lambda_mse != 0.0 {
                        if let Some((dl, _)) = grads.as_deref_mut() {
                            add_to_column(dl, dim, coef * e, &rec.features);
                        }
                    }
                }
            }
        }
    }
    let mse_raw_mean = if pairs > 0 {
        mse_sum / pairs as f64
    } else {
        0.0
    };
    let mse_term = config.lambda_mse * mse_raw_mean;

    Ok(LossBreakdown {
        metric_term,
        mse_term,
        total: metric_term + mse_term,
        mse_raw_mean,
        mse_pairs: pairs,
        triplet_count: triplets.len(),
    })
}

fn add_to_column(m: &mut Mat, col: usize, coef: f64, x: &[f64]) {
    for (i, &xi) in x.iter().enumerate() {
        m[(i, col)] += coef * xi;
    }
}
