//! Evaluation: KNN retrieval precision, score-head regression, and
//! fine-grained change regression over consecutive same-individual pairs.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::CoreError;
use crate::linalg::dist_sq;
use crate::metric::{embed, MetricParams};
use crate::miner::{self, match_count, MinerConfig};
use crate::rng;
use crate::schema::Schema;
use crate::trainer::TrainConfig;

/// Embeds every record of a dataset.
pub fn embed_dataset(params: &MetricParams, dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset
        .records()
        .iter()
        .map(|r| embed(&params.proj, &r.features))
        .collect()
}

/// Mean fraction of each query's k nearest neighbors (Euclidean distance in
/// embedding space, self excluded, ties broken by record index) that match
/// the query on at least `n` label slots.
pub fn knn_precision(
    embeddings: &[Vec<f64>],
    labels: &[LabelMatrix],
    schema: &Schema,
    k: usize,
    n: usize,
) -> Result<f64, CoreError> {
    let count = embeddings.len();
    if k == 0 || k >= count {
        return Err(CoreError::NotEnoughRecords {
            needed: k + 1,
            got: count,
        });
    }
    assert_eq!(labels.len(), count, "knn_precision: label count");
    let mut total = 0.0;
    for q in 0..count {
        let mut order: Vec<(f64, usize)> = (0..count)
            .filter(|&j| j != q)
            .map(|j| (dist_sq(&embeddings[q], &embeddings[j]), j))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let hits = order
            .iter()
            .take(k)
            .filter(|&&(_, j)| match_count(&labels[q], &labels[j], schema) >= n)
            .count();
        total += hits as f64 / k as f64;
    }
    Ok(total / count as f64)
}

/// Regression quality of one MSE head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadReport {
    pub task: usize,
    pub task_name: String,
    pub dim: usize,
    /// Absent (not zero) when no test record carries the label.
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub count: usize,
}

/// Evaluates every assigned head over records with a present label;
/// prediction for a task is the raw embedding coordinate of its head.
pub fn score_regression_eval(
    params: &MetricParams,
    dataset: &Dataset,
    heads: &alloc::collections::BTreeMap<usize, usize>,
) -> Vec<HeadReport> {
    let embeddings = embed_dataset(params, dataset);
    heads
        .iter()
        .map(|(&task, &dim)| {
            let mut se = 0.0;
            let mut ae = 0.0;
            let mut count = 0usize;
            for (rec, emb) in dataset.records().iter().zip(embeddings.iter()) {
                if let Some(y) = rec.labels.get(task) {
                    let e = emb[dim] - y;
                    se += e * e;
                    ae += crate::math::abs(e);
                    count += 1;
                }
            }
            HeadReport {
                task,
                task_name: dataset.schema().task(task).name.clone(),
                dim,
                mse: (count > 0).then(|| se / count as f64),
                mae: (count > 0).then(|| ae / count as f64),
                count,
            }
        })
        .collect()
}

/// Predicted change along one embedding dimension for every consecutive
/// same-individual record pair (i → j): `embed(x_j)[dim] − embed(x_i)[dim]`.
/// Antisymmetric in pair order by construction.
pub fn change_predictions(
    params: &MetricParams,
    dataset: &Dataset,
    dim: usize,
) -> Vec<(usize, usize, f64)> {
    let embeddings = embed_dataset(params, dataset);
    let mut out = Vec::new();
    for &(_, start, end) in dataset.individuals() {
        for i in start..end.saturating_sub(1) {
            out.push((i, i + 1, embeddings[i + 1][dim] - embeddings[i][dim]));
        }
    }
    out
}

/// Change-regression quality against label deltas of a target task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub mse: f64,
    pub mae: f64,
    pub pairs: usize,
}

/// Compares predicted change (embedding delta on `dim`) with the true label
/// delta of `target_task` over consecutive same-individual pairs.
pub fn change_eval(
    params: &MetricParams,
    dataset: &Dataset,
    dim: usize,
    target_task: usize,
) -> Result<ChangeReport, CoreError> {
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut pairs = 0usize;
    for (i, j, predicted) in change_predictions(params, dataset, dim) {
        let (a, b) = (
            dataset.record(i).labels.get(target_task),
            dataset.record(j).labels.get(target_task),
        );
        if let (Some(a), Some(b)) = (a, b) {
            let e = predicted - (b - a);
            se += e * e;
            ae += crate::math::abs(e);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(CoreError::NotEnoughRecords { needed: 1, got: 0 });
    }
    Ok(ChangeReport {
        mse: se / pairs as f64,
        mae: ae / pairs as f64,
        pairs,
    })
}

/// Full evaluation payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// (k, precision) at the training n; ks not supported by the record
    /// count are omitted.
    pub precision_at_k: Vec<(usize, f64)>,
    pub heads: Vec<HeadReport>,
    /// Change regression on the first expert task's head, when assigned.
    pub change: Option<ChangeReport>,
    /// Fraction of test triplets satisfying the angular constraint.
    pub triplet_satisfaction_rate: Option<f64>,
    pub mean_test_loss: Option<f64>,
    pub test_records: usize,
    pub config: TrainConfig,
}

/// Evaluates trained params on a (standardized) test dataset.
pub fn evaluate(
    params: &MetricParams,
    test: &Dataset,
    config: &TrainConfig,
    ks: &[usize],
) -> Result<EvalReport, CoreError> {
    let embeddings = embed_dataset(params, test);
    let labels: Vec<LabelMatrix> = test.records().iter().map(|r| r.labels.clone()).collect();

    let mut precision_at_k = Vec::new();
    for &k in ks {
        if k >= 1 && k < test.len() {
            precision_at_k.push((
                k,
                knn_precision(&embeddings, &labels, test.schema(), k, config.miner.n)?,
            ));
        }
    }

    let heads = config.loss.resolved_heads(test.schema(), params.embed_dim())?;
    let head_reports = score_regression_eval(params, test, &heads);

    let change = test
        .schema()
        .expert_tasks()
        .first()
        .and_then(|t| heads.get(t).map(|&dim| (*t, dim)))
        .and_then(|(task, dim)| change_eval(params, test, dim, task).ok());

    // test loss over triplets mined from the whole test pool
    let miner_cfg = MinerConfig {
        seed: rng::mix_seed(config.seed, &[rng::SALT_EVAL]),
        batch_size: test.len().max(3),
        ..config.miner.clone()
    };
    let (mean_test_loss, satisfaction) =
        match miner::sample_triplets(test, Some(params), &miner_cfg) {
            Ok(triplets) if !triplets.is_empty() => {
                let samples: Vec<usize> = (0..test.len()).collect();
                let breakdown =
                    crate::metric::total_loss(params, test, &triplets, &samples, &config.loss)?;
                let satisfied = triplets
                    .iter()
                    .filter(|t| {
                        crate::metric::angular_hinge(
                            &params.proj,
                            &test.record(t.anchor).features,
                            &test.record(t.positive).features,
                            &test.record(t.negative).features,
                            config.loss.alpha_deg,
                        ) == 0.0
                    })
                    .count();
                (
                    Some(breakdown.total),
                    Some(satisfied as f64 / triplets.len() as f64),
                )
            }
            Ok(_) => (None, None),
            Err(CoreError::NTooStrict { .. }) => (None, None),
            Err(e) => return Err(e),
        };

    Ok(EvalReport {
        precision_at_k,
        heads: head_reports,
        change,
        triplet_satisfaction_rate: satisfaction,
        mean_test_loss,
        test_records: test.len(),
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ObservationRecord;
    use crate::linalg::Mat;
    use crate::schema::{Schema, TaskKind, TaskSchema};
    use alloc::collections::BTreeMap;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_task_schema() -> Schema {
        Schema::new(alloc::vec![TaskSchema::new("a0", TaskKind::Automated, 0.1)]).unwrap()
    }

    fn labels_of(v: f64) -> LabelMatrix {
        let mut m = LabelMatrix::new_missing(1);
        m.set(0, v);
        m
    }

    #[test]
    fn knn_all_matching_labels_is_one() {
        let schema = one_task_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let embeddings: Vec<Vec<f64>> = (0..10)
            .map(|_| alloc::vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let labels: Vec<LabelMatrix> = (0..10).map(|_| labels_of(3.0)).collect();
        for k in [1, 3, 9] {
            assert_eq!(
                knn_precision(&embeddings, &labels, &schema, k, 1).unwrap(),
                1.0
            );
        }
        assert!(knn_precision(&embeddings, &labels, &schema, 10, 1).is_err());
    }

    #[test]
    fn knn_separated_clusters_scores_one() {
        let schema = one_task_schema();
        let mut embeddings = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            let (center, label) = if i < 4 { (0.0, 1.0) } else { (100.0, 9.0) };
            embeddings.push(alloc::vec![center + 0.1 * i as f64]);
            labels.push(labels_of(label));
        }
        let p = knn_precision(&embeddings, &labels, &schema, 3, 1).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn knn_random_embeddings_near_half_for_balanced_groups() {
        let schema = one_task_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 500;
        let embeddings: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                alloc::vec![
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0)
                ]
            })
            .collect();
        let labels: Vec<LabelMatrix> = (0..n)
            .map(|i| labels_of(if i % 2 == 0 { 1.0 } else { 9.0 }))
            .collect();
        let p = knn_precision(&embeddings, &labels, &schema, 1, 1).unwrap();
        assert!((p - 0.5).abs() < 0.1, "precision {p}");
    }

    #[test]
    fn knn_invariant_under_embedding_rotation() {
        let schema = one_task_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let proj = Mat::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0))
            .thin_qr_q()
            .unwrap();
        let rot = Mat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0))
            .thin_qr_q()
            .unwrap();
        let rotated = proj.mul(&rot);
        let points: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<LabelMatrix> = (0..30)
            .map(|i| labels_of(if i % 3 == 0 { 1.0 } else { 9.0 }))
            .collect();
        let e1: Vec<Vec<f64>> = points.iter().map(|x| embed(&proj, x)).collect();
        let e2: Vec<Vec<f64>> = points.iter().map(|x| embed(&rotated, x)).collect();
        let p1 = knn_precision(&e1, &labels, &schema, 5, 1).unwrap();
        let p2 = knn_precision(&e2, &labels, &schema, 5, 1).unwrap();
        assert_eq!(p1, p2);
    }

    fn linear_dataset() -> Dataset {
        // y = x[0] exactly; x[1] is noise-free distractor
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let records: Vec<ObservationRecord> = (0..20)
            .map(|i| {
                let x0 = rng.gen_range(-2.0..2.0);
                ObservationRecord {
                    individual_id: alloc::format!("ind{:02}", i / 2),
                    timestamp: (i % 2) as i64,
                    features: alloc::vec![x0, rng.gen_range(-2.0..2.0)],
                    labels: labels_of(x0),
                }
            })
            .collect();
        Dataset::new(one_task_schema(), records).unwrap()
    }

    #[test]
    fn score_regression_exact_for_planted_projection() {
        let ds = linear_dataset();
        let params = MetricParams {
            proj: Mat::from_row_major(2, 1, &[1.0, 0.0]),
            weight: Mat::from_row_major(2, 1, &[1.0, 0.0]),
        };
        let mut heads = BTreeMap::new();
        heads.insert(0usize, 0usize);
        let reports = score_regression_eval(&params, &ds, &heads);
        assert_eq!(reports.len(), 1);
        assert!(reports[0].mse.unwrap() < 1e-24);
        assert_eq!(reports[0].count, 20);

        // closed-form residual oracle: with proj = (0,1) the prediction is
        // x[1], so MSE = mean (x1 - x0)^2
        let off = MetricParams {
            proj: Mat::from_row_major(2, 1, &[0.0, 1.0]),
            weight: Mat::from_row_major(2, 1, &[1.0, 0.0]),
        };
        let reports = score_regression_eval(&off, &ds, &heads);
        let expected: f64 = ds
            .records()
            .iter()
            .map(|r| {
                let e = r.features[1] - r.features[0];
                e * e
            })
            .sum::<f64>()
            / 20.0;
        assert_relative_eq!(reports[0].mse.unwrap(), expected, max_relative = 1e-6);
    }

    #[test]
    fn missing_labels_report_absent_not_zero() {
        let ds = linear_dataset();
        let params = MetricParams {
            proj: Mat::from_row_major(2, 1, &[1.0, 0.0]),
            weight: Mat::from_row_major(2, 1, &[1.0, 0.0]),
        };
        // strip all labels
        let stripped: Vec<ObservationRecord> = ds
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.labels.clear(0);
                r
            })
            .collect();
        let empty = Dataset::new(one_task_schema(), stripped).unwrap();
        let mut heads = BTreeMap::new();
        heads.insert(0usize, 0usize);
        let reports = score_regression_eval(&params, &empty, &heads);
        assert_eq!(reports[0].mse, None);
        assert_eq!(reports[0].count, 0);
    }

    #[test]
    fn change_predictions_antisymmetric_and_zero_on_identical() {
        let mut records = Vec::new();
        for (i, x) in [0.5, 0.5, 2.0].iter().enumerate() {
            records.push(ObservationRecord {
                individual_id: "a".into(),
                timestamp: i as i64,
                features: alloc::vec![*x, 1.0],
                labels: labels_of(*x),
            });
        }
        let ds = Dataset::new(one_task_schema(), records).unwrap();
        let params = MetricParams {
            proj: Mat::from_row_major(2, 1, &[1.0, 0.0]),
            weight: Mat::from_row_major(2, 1, &[1.0, 0.0]),
        };
        let preds = change_predictions(&params, &ds, 0);
        assert_eq!(preds.len(), 2);
        assert_eq!(preds[0].2, 0.0); // identical features -> zero change
        // antisymmetry: reversing the pair negates the prediction
        let e = embed_dataset(&params, &ds);
        assert_eq!(preds[1].2, e[2][0] - e[1][0]);
        assert_eq!(-(preds[1].2), e[1][0] - e[2][0]);
        let report = change_eval(&params, &ds, 0, 0).unwrap();
        assert_eq!(report.pairs, 2);
        assert!(report.mse < 1e-24); // labels equal features here
    }

    #[test]
    fn change_eval_requires_pairs() {
        let records = alloc::vec![ObservationRecord {
            individual_id: "a".into(),
            timestamp: 0,
            features: alloc::vec![1.0, 0.0],
            labels: labels_of(1.0),
        }];
        let ds = Dataset::new(one_task_schema(), records).unwrap();
        let params = MetricParams {
            proj: Mat::from_row_major(2, 1, &[1.0, 0.0]),
            weight: Mat::from_row_major(2, 1, &[1.0, 0.0]),
        };
        assert!(change_eval(&params, &ds, 0, 0).is_err());
    }

    #[test]
    fn evaluate_produces_populated_report() {
        let cfg = crate::synth::SynthConfig {
            individuals: 10,
            steps: 8,
            step_days: 1,
            feature_dim: 10,
            latent_dim: 3,
            expert_period_days: 21,
            observer_noise_sd: 0.0,
            feature_noise_sd: 0.0,
            drift_fraction: 0.0,
            seed: 3,
        };
        let (ds, _) = crate::synth::generate(&cfg).unwrap();
        let ds = ds
            .impute_nearest()
            .compute_gradient_labels()
            .with_gradients_in_match(false);
        let train_cfg = TrainConfig {
            embed_dim: 4,
            miner: MinerConfig {
                n: 3,
                batch_size: 16,
                ..MinerConfig::default()
            },
            ..TrainConfig::default()
        };
        let params = MetricParams::init(10, 4, 1).unwrap();
        let report = evaluate(&params, &ds, &train_cfg, &[1, 5, 500]).unwrap();
        assert_eq!(report.precision_at_k.len(), 2); // k = 500 dropped
        for (_, p) in &report.precision_at_k {
            assert!((0.0..=1.0).contains(p));
        }
        assert_eq!(report.heads.len(), 4); // l = 4 caps the default heads
        assert!(report.mean_test_loss.is_some());
        assert!(report.change.is_some());
        assert_eq!(report.test_records, 80);
    }
}
