//! Synthetic longitudinal datasets with known ground truth.
//!
//! Each individual carries a bounded latent random walk; automated labels
//! are linear readouts of the latent state, expert scores are quantized
//! readouts observed on a fixed cadence, and features are a fixed linear
//! mixing of the latent state plus an individual offset chosen orthogonal
//! to the mixing range. The orthogonality keeps the true score an exact
//! linear function of the noiseless features, so a learned metric can in
//! principle regress it to zero error.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelMatrix, ObservationRecord};
use crate::error::CoreError;
use crate::linalg::Mat;
use crate::math;
use crate::rng;
use crate::schema::{Schema, TaskKind, TaskSchema};

/// Expert-score quantization step (two scorers on quarter-point scales).
pub const SCORE_QUANTUM: f64 = 0.25;
/// Latent random-walk standard deviation per day.
const WALK_SD_PER_DAY: f64 = 0.02;
/// Scale of the individual-specific feature offset.
const OFFSET_SD: f64 = 0.5;
/// Latent shift accumulated by a drift event over its span.
const DRIFT_TOTAL: f64 = 1.2;
/// Readout gains: automated tasks, then expert tasks.
const AUTO_GAINS: [f64; 3] = [1.0, 0.8, 1.2];
const EXPERT_GAINS: [f64; 2] = [1.6, 2.0];

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub individuals: usize,
    /// Observations per individual.
    pub steps: usize,
    #[serde(default = "default_step_days")]
    pub step_days: i64,
    pub feature_dim: usize,
    pub latent_dim: usize,
    #[serde(default = "default_period")]
    pub expert_period_days: i64,
    #[serde(default)]
    pub observer_noise_sd: f64,
    #[serde(default)]
    pub feature_noise_sd: f64,
    /// Fraction of individuals given a piecewise-linear score drift.
    #[serde(default)]
    pub drift_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_step_days() -> i64 {
    1
}
fn default_period() -> i64 {
    21
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        let positive = [
            ("individuals", self.individuals),
            ("steps", self.steps),
            ("feature_dim", self.feature_dim),
            ("latent_dim", self.latent_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CoreError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.step_days <= 0 || self.expert_period_days <= 0 {
            return Err(CoreError::InvalidConfig(
                "step_days and expert_period_days must be positive".into(),
            ));
        }
        if self.latent_dim > self.feature_dim {
            return Err(CoreError::InvalidConfig(format!(
                "latent_dim {} exceeds feature_dim {}",
                self.latent_dim, self.feature_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.drift_fraction) {
            return Err(CoreError::InvalidConfig(format!(
                "drift_fraction must lie in [0, 1], got {}",
                self.drift_fraction
            )));
        }
        if self.observer_noise_sd < 0.0 || self.feature_noise_sd < 0.0 {
            return Err(CoreError::InvalidConfig(
                "noise standard deviations must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// The 9-slot schema emitted with generated data; gradient resolutions
    /// scale with the expert cadence (one quantum per period).
    pub fn schema(&self) -> Schema {
        let grad_res = SCORE_QUANTUM / self.expert_period_days as f64;
        Schema::new(alloc::vec![
            TaskSchema::new("auto_0", TaskKind::Automated, 0.1),
            TaskSchema::new("auto_1", TaskKind::Automated, 0.1),
            TaskSchema::new("auto_2", TaskKind::Automated, 0.1),
            TaskSchema::new("score_0", TaskKind::Expert, SCORE_QUANTUM),
            TaskSchema::new("score_1", TaskKind::Expert, SCORE_QUANTUM),
            TaskSchema::gradient("score_0_fwd", TaskKind::GradientForward, grad_res, 3),
            TaskSchema::gradient("score_0_bwd", TaskKind::GradientBackward, grad_res, 3),
            TaskSchema::gradient("score_1_fwd", TaskKind::GradientForward, grad_res, 4),
            TaskSchema::gradient("score_1_bwd", TaskKind::GradientBackward, grad_res, 4),
        ])
        .expect("generator schema is valid")
    }
}

/// Noise-free per-record truth for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub individual_id: String,
    pub timestamp: i64,
    /// Unquantized expert scores, one per expert task.
    pub true_scores: Vec<f64>,
    /// Forward per-day rate of each true score (0 at the final record).
    pub true_changes: Vec<f64>,
    pub drifted: bool,
}

/// Generates a dataset plus its ground truth; deterministic in the seed.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, Vec<GroundTruth>), CoreError> {
    config.validate()?;
    let d = config.feature_dim;
    let m = config.latent_dim;
    let mut global = rng::stream(config.seed, &[rng::SALT_SYNTH, 0]);

    let mixing = Mat::from_fn(d, m, |_, _| global.sample::<f64, _>(StandardNormal));
    // orthonormal basis of the mixing range, used to strip offsets of any
    // in-range component
    let range_basis = mixing.thin_qr_q()?;
    let auto_readouts: Vec<Vec<f64>> = (0..AUTO_GAINS.len())
        .map(|_| unit_gaussian(&mut global, m))
        .collect();
    let expert_readouts: Vec<Vec<f64>> = (0..EXPERT_GAINS.len())
        .map(|_| unit_gaussian(&mut global, m))
        .collect();

    // exact drifted count: first ⌊round(fraction·N)⌋ of a seeded shuffle
    let mut drift_order: Vec<usize> = (0..config.individuals).collect();
    drift_order.shuffle(&mut global);
    let n_drift = math::round(config.drift_fraction * config.individuals as f64) as usize;
    let drifted: Vec<bool> = {
        let mut flags = alloc::vec![false; config.individuals];
        for &ind in drift_order.iter().take(n_drift) {
            flags[ind] = true;
        }
        flags
    };

    let walk_sd = WALK_SD_PER_DAY * math::sqrt(config.step_days as f64);
    let mut records = Vec::with_capacity(config.individuals * config.steps);
    let mut truth = Vec::with_capacity(config.individuals * config.steps);

    for ind in 0..config.individuals {
        let id = format!("ind{ind:04}");
        let mut rng = rng::stream(config.seed, &[rng::SALT_SYNTH, 1 + ind as u64]);

        // latent walk, reflected into [-1, 1]^m
        let mut state: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut latents: Vec<Vec<f64>> = Vec::with_capacity(config.steps);
        for _ in 0..config.steps {
            latents.push(state.clone());
            for coord in state.iter_mut() {
                *coord += walk_sd * rng.sample::<f64, _>(StandardNormal);
                *coord = reflect(*coord);
            }
        }

        if drifted[ind] {
            let lo = config.steps / 4;
            let hi = (config.steps / 2).max(lo + 1);
            let start = rng.gen_range(lo..hi);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let span_days = ((config.steps - 1 - start).max(1) as i64 * config.step_days) as f64;
            let rate = sign * DRIFT_TOTAL / span_days;
            // trend pushes the first expert readout direction
            let dir = &expert_readouts[0];
            for (step, latent) in latents.iter_mut().enumerate().skip(start) {
                let dt = ((step - start) as i64 * config.step_days) as f64;
                for (coord, w) in latent.iter_mut().zip(dir.iter()) {
                    *coord += rate * dt * w;
                }
            }
        }

        let offset = {
            let raw: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let in_range = range_basis.mul_vec(&range_basis.transpose_mul_vec(&raw));
            raw.iter()
                .zip(in_range.iter())
                .map(|(r, p)| OFFSET_SD * (r - p))
                .collect::<Vec<f64>>()
        };

        let mut scores: Vec<Vec<f64>> = Vec::with_capacity(config.steps);
        for latent in &latents {
            scores.push(
                expert_readouts
                    .iter()
                    .zip(EXPERT_GAINS.iter())
                    .map(|(w, g)| g * crate::linalg::dot(w, latent))
                    .collect(),
            );
        }

        for step in 0..config.steps {
            let day = step as i64 * config.step_days;
            let latent = &latents[step];
            let mut features = mixing.mul_vec(latent);
            for (f, o) in features.iter_mut().zip(offset.iter()) {
                *f += o;
                if config.feature_noise_sd > 0.0 {
                    *f += config.feature_noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }

            let mut labels = LabelMatrix::new_missing(9);
            for (t, (w, g)) in auto_readouts.iter().zip(AUTO_GAINS.iter()).enumerate() {
                labels.set(t, g * crate::linalg::dot(w, latent));
            }
            if day % config.expert_period_days == 0 {
                for (e, score) in scores[step].iter().enumerate() {
                    let mut observed = math::quantize(*score, SCORE_QUANTUM);
                    if config.observer_noise_sd > 0.0 {
                        observed += config.observer_noise_sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    labels.set(3 + e, observed);
                }
            }

            let true_changes: Vec<f64> = if step + 1 < config.steps {
                scores[step]
                    .iter()
                    .zip(scores[step + 1].iter())
                    .map(|(now, next)| (next - now) / config.step_days as f64)
                    .collect()
            } else {
                alloc::vec![0.0; EXPERT_GAINS.len()]
            };

            records.push(ObservationRecord {
                individual_id: id.clone(),
                timestamp: day,
                features,
                labels,
            });
            truth.push(GroundTruth {
                individual_id: id.clone(),
                timestamp: day,
                true_scores: scores[step].clone(),
                true_changes,
                drifted: drifted[ind],
            });
        }
    }

    let dataset = Dataset::new_with_dim(config.schema(), records, d)?;
    // constructor sorting preserves generation order (ids ascend, days ascend)
    Ok((dataset, truth))
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = math::sqrt(crate::linalg::dot(&v, &v)).max(1e-12);
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn reflect(x: f64) -> f64 {
    let mut v = x;
    loop {
        if v > 1.0 {
            v = 2.0 - v;
        } else if v < -1.0 {
            v = -2.0 - v;
        } else {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> SynthConfig {
        SynthConfig {
            individuals: 4,
            steps: 10,
            step_days: 1,
            feature_dim: 8,
            latent_dim: 3,
            expert_period_days: 21,
            observer_noise_sd: 0.0,
            feature_noise_sd: 0.0,
            drift_fraction: 0.0,
            seed: 77,
        }
    }

    #[test]
    fn record_count_and_expert_cadence() {
        let (ds, _) = generate(&base_config()).unwrap();
        assert_eq!(ds.len(), 40);
        for rec in ds.records() {
            let expected = rec.timestamp % 21 == 0; // here: day 0 only
            assert_eq!(rec.labels.is_present(3), expected, "day {}", rec.timestamp);
            assert_eq!(rec.labels.is_present(4), expected);
            // automated always present, gradients always missing
            for t in 0..3 {
                assert!(rec.labels.is_present(t));
            }
            for t in 5..9 {
                assert!(!rec.labels.is_present(t));
            }
        }
    }

    #[test]
    fn cadence_follows_period_with_multi_day_steps() {
        let mut cfg = base_config();
        cfg.steps = 20;
        cfg.step_days = 7;
        let (ds, _) = generate(&cfg).unwrap();
        for rec in ds.records() {
            assert_eq!(
                rec.labels.is_present(3),
                rec.timestamp % 21 == 0,
                "day {}",
                rec.timestamp
            );
        }
        let observed = ds.records().iter().filter(|r| r.labels.is_present(3)).count();
        assert_eq!(observed, 4 * 7); // days 0,21,...,126 per individual
    }

    #[test]
    fn zero_noise_expert_label_is_quantized_truth() {
        let (ds, truth) = generate(&base_config()).unwrap();
        for (rec, gt) in ds.records().iter().zip(truth.iter()) {
            assert_eq!(rec.individual_id, gt.individual_id);
            assert_eq!(rec.timestamp, gt.timestamp);
            if let Some(label) = rec.labels.get(3) {
                assert_eq!(label, math::quantize(gt.true_scores[0], SCORE_QUANTUM));
            }
        }
    }

    #[test]
    fn deterministic_in_seed_distinct_across_seeds() {
        let cfg = base_config();
        let (a, ta) = generate(&cfg).unwrap();
        let (b, tb) = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let mut other = cfg.clone();
        other.seed = 78;
        let (c, _) = generate(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn drift_fraction_is_exact() {
        let mut cfg = base_config();
        cfg.individuals = 10;
        cfg.drift_fraction = 0.3;
        let (_, truth) = generate(&cfg).unwrap();
        let drifted: alloc::collections::BTreeSet<&str> = truth
            .iter()
            .filter(|g| g.drifted)
            .map(|g| g.individual_id.as_str())
            .collect();
        assert_eq!(drifted.len(), 3);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = base_config();
        cfg.latent_dim = 9;
        assert!(generate(&cfg).is_err());
        let mut cfg = base_config();
        cfg.drift_fraction = 1.5;
        assert!(generate(&cfg).is_err());
        let mut cfg = base_config();
        cfg.individuals = 0;
        assert!(generate(&cfg).is_err());
    }

    /// Least-squares oracle: with zero noise the true score must be an
    /// exact linear function of the features.
    #[test]
    fn zero_noise_score_is_linear_in_features() {
        let mut cfg = base_config();
        cfg.individuals = 12;
        cfg.steps = 8;
        cfg.drift_fraction = 0.25; // drift must not break linearity
        let (ds, truth) = generate(&cfg).unwrap();
        let d = ds.dim();
        let n = ds.len();
        // normal equations (XᵀX)w = Xᵀy solved by Gaussian elimination
        let mut xtx = alloc::vec![0.0f64; d * d];
        let mut xty = alloc::vec![0.0f64; d];
        for (rec, gt) in ds.records().iter().zip(truth.iter()) {
            for i in 0..d {
                xty[i] += rec.features[i] * gt.true_scores[0];
                for j in 0..d {
                    xtx[i * d + j] += rec.features[i] * rec.features[j];
                }
            }
        }
        // ridge epsilon guards the offset null-space (offsets give XᵀX full
        // rank only across individuals)
        for i in 0..d {
            xtx[i * d + i] += 1e-9;
        }
        let w = solve_dense(&mut xtx, &mut xty, d);
        let mut sse = 0.0;
        for (rec, gt) in ds.records().iter().zip(truth.iter()) {
            let pred: f64 = rec.features.iter().zip(w.iter()).map(|(x, wi)| x * wi).sum();
            let e = pred - gt.true_scores[0];
            sse += e * e;
        }
        let msr = sse / n as f64;
        assert!(msr < 1e-10, "mean squared residual {msr}");
    }

    fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
        for col in 0..n {
            let mut pivot = col;
            for row in col + 1..n {
                if a[row * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = row;
                }
            }
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
            let diag = a[col * n + col];
            for row in col + 1..n {
                let f = a[row * n + col] / diag;
                for j in col..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
                b[row] -= f * b[col];
            }
        }
        let mut w = alloc::vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for j in row + 1..n {
                acc -= a[row * n + j] * w[j];
            }
            w[row] = acc / a[row * n + row];
        }
        w
    }
}
