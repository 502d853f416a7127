//! Triplet mining from the label matrix.
//!
//! A pair is positive when at least `n` of the T label slots agree within
//! each task's resolution; a slot missing on either side never counts as a
//! match. Anchors come from a seeded batch pool; negatives are picked at
//! random, semi-hard (closest negative beyond the positive), or hard
//! (farthest positive, nearest negative).

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::CoreError;
use crate::linalg::dist_sq;
use crate::metric::{embed, MetricParams};
use crate::rng;
use crate::schema::Schema;

/// An (anchor, positive, negative) index triple with the match counts that
/// justified it: `match_pos ≥ n`, `match_neg < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub match_pos: usize,
    pub match_neg: usize,
}

/// Negative-selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningStrategy {
    Random,
    SemiHard,
    Hard,
}

/// Miner parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Required match count for a positive pair.
    pub n: usize,
    #[serde(default = "default_strategy")]
    pub strategy: MiningStrategy,
    /// Pool size sampled per call when the dataset is larger.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Triplets emitted per admissible anchor (hard mining always emits one).
    #[serde(default = "default_tpa")]
    pub triplets_per_anchor: usize,
    #[serde(default)]
    pub seed: u64,
    /// Allow positives drawn from the anchor's own individual at another
    /// timestamp; the change task needs them.
    #[serde(default = "default_true")]
    pub allow_same_individual: bool,
}

fn default_strategy() -> MiningStrategy {
    MiningStrategy::Random
}
fn default_batch_size() -> usize {
    64
}
fn default_tpa() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            n: 5,
            strategy: default_strategy(),
            batch_size: default_batch_size(),
            triplets_per_anchor: default_tpa(),
            seed: 0,
            allow_same_individual: true,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n == 0 {
            return Err(CoreError::InvalidConfig("miner n must be >= 1".into()));
        }
        if self.batch_size < 3 {
            return Err(CoreError::InvalidConfig(
                "miner batch_size must be >= 3".into(),
            ));
        }
        if self.triplets_per_anchor == 0 {
            return Err(CoreError::InvalidConfig(
                "triplets_per_anchor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Number of tasks on which both labels are present and agree within the
/// task resolution. Tasks flagged out of matching are skipped.
pub fn match_count(a: &LabelMatrix, b: &LabelMatrix, schema: &Schema) -> usize {
    debug_assert_eq!(a.len(), schema.len());
    debug_assert_eq!(b.len(), schema.len());
    let mut count = 0;
    for t in 0..schema.len() {
        let task = schema.task(t);
        if !task.include_in_match {
            continue;
        }
        if let (Some(va), Some(vb)) = (a.get(t), b.get(t)) {
            if crate::math::abs(va - vb) <= task.resolution {
                count += 1;
            }
        }
    }
    count
}

/// Positive iff `match_count ≥ n` (boundary inclusive).
pub fn classify_pair(a: &LabelMatrix, b: &LabelMatrix, schema: &Schema, n: usize) -> bool {
    match_count(a, b, schema) >= n
}

/// Exact count of unordered positive pairs at threshold `n`; O(N²) brute
/// force, used as the mining-feasibility diagnostic.
pub fn admissible_pair_count(dataset: &Dataset, n: usize) -> usize {
    let records = dataset.records();
    let mut count = 0;
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if match_count(&records[i].labels, &records[j].labels, dataset.schema()) >= n {
                count += 1;
            }
        }
    }
    count
}

/// Mines triplets from a seeded pool of at most `batch_size` records.
///
/// Every pool record with at least one admissible positive and one negative
/// acts as an anchor, in record order. Returns an empty list when this pool
/// happens to admit no triplet but the dataset does; returns the
/// "n too strict" error when no admissible positive pair exists anywhere.
/// `params` is required for the semi-hard and hard strategies.
pub fn sample_triplets(
    dataset: &Dataset,
    params: Option<&MetricParams>,
    config: &MinerConfig,
) -> Result<Vec<Triplet>, CoreError> {
    config.validate()?;
    if matches!(
        config.strategy,
        MiningStrategy::SemiHard | MiningStrategy::Hard
    ) && params.is_none()
    {
        return Err(CoreError::InvalidConfig(
            "semi_hard/hard mining needs metric params".into(),
        ));
    }
    let n_records = dataset.len();
    let mut rng = rng::stream(config.seed, &[rng::SALT_BATCH]);
    let pool: Vec<usize> = if n_records > config.batch_size {
        let mut idx = rand::seq::index::sample(&mut rng, n_records, config.batch_size).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n_records).collect()
    };

    // pairwise match counts within the pool
    let b = pool.len();
    let mut counts = alloc::vec![0usize; b * b];
    for i in 0..b {
        for j in i + 1..b {
            let c = match_count(
                &dataset.record(pool[i]).labels,
                &dataset.record(pool[j]).labels,
                dataset.schema(),
            );
            counts[i * b + j] = c;
            counts[j * b + i] = c;
        }
    }

    let embeddings: Option<Vec<Vec<f64>>> = params.map(|p| {
        pool.iter()
            .map(|&i| embed(&p.proj, &dataset.record(i).features))
            .collect()
    });

    let mut triplets = Vec::new();
    for ai in 0..b {
        let anchor_rec = dataset.record(pool[ai]);
        let positives: Vec<usize> = (0..b)
            .filter(|&j| {
                j != ai
                    && counts[ai * b + j] >= config.n
                    && (config.allow_same_individual
                        || dataset.record(pool[j]).individual_id != anchor_rec.individual_id)
            })
            .collect();
        let negatives: Vec<usize> = (0..b)
            .filter(|&j| j != ai && counts[ai * b + j] < config.n)
            .collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        match config.strategy {
            MiningStrategy::Random => {
                for _ in 0..config.triplets_per_anchor {
                    let p = positives[rng.gen_range(0..positives.len())];
                    let neg = negatives[rng.gen_range(0..negatives.len())];
                    triplets.push(make_triplet(&pool, &counts, b, ai, p, neg));
                }
            }
            MiningStrategy::SemiHard => {
                let emb = embeddings.as_ref().unwrap();
                let chosen = choose_up_to(&positives, config.triplets_per_anchor, &mut rng);
                for p in chosen {
                    let d_ap = dist_sq(&emb[ai], &emb[p]);
                    // closest negative still farther than the positive;
                    // fall back to the farthest negative
                    let mut semi: Option<(f64, usize)> = None;
                    let mut far: Option<(f64, usize)> = None;
                    for &g in &negatives {
                        let d_an = dist_sq(&emb[ai], &emb[g]);
                        if d_an > d_ap && semi.map_or(true, |(best, _)| d_an < best) {
                            semi = Some((d_an, g));
                        }
                        if far.map_or(true, |(best, _)| d_an > best) {
                            far = Some((d_an, g));
                        }
                    }
                    let neg = semi.or(far).unwrap().1;
                    triplets.push(make_triplet(&pool, &counts, b, ai, p, neg));
                }
            }
            MiningStrategy::Hard => {
                let emb = embeddings.as_ref().unwrap();
                let p = *positives
                    .iter()
                    .max_by(|&&x, &&y| {
                        dist_sq(&emb[ai], &emb[x])
                            .partial_cmp(&dist_sq(&emb[ai], &emb[y]))
                            .unwrap()
                            .then(y.cmp(&x)) // ties: lower index wins
                    })
                    .unwrap();
                let neg = *negatives
                    .iter()
                    .min_by(|&&x, &&y| {
                        dist_sq(&emb[ai], &emb[x])
                            .partial_cmp(&dist_sq(&emb[ai], &emb[y]))
                            .unwrap()
                            .then(x.cmp(&y))
                    })
                    .unwrap();
                triplets.push(make_triplet(&pool, &counts, b, ai, p, neg));
            }
        }
    }

    if triplets.is_empty() {
        let admissible = admissible_pair_count(dataset, config.n);
        if admissible == 0 {
            return Err(CoreError::NTooStrict {
                n: config.n,
                admissible_pairs: 0,
            });
        }
    }
    Ok(triplets)
}

fn make_triplet(
    pool: &[usize],
    counts: &[usize],
    b: usize,
    ai: usize,
    p: usize,
    neg: usize,
) -> Triplet {
    Triplet {
        anchor: pool[ai],
        positive: pool[p],
        negative: pool[neg],
        match_pos: counts[ai * b + p],
        match_neg: counts[ai * b + neg],
    }
}

fn choose_up_to(items: &[usize], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    if items.len() <= k {
        return items.to_vec();
    }
    let mut picked = rand::seq::index::sample(rng, items.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ObservationRecord;
    use crate::linalg::Mat;
    use crate::schema::{default_schema9, Schema, TaskKind, TaskSchema};
    use alloc::string::String;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full_labels(values: &[f64]) -> LabelMatrix {
        let mut m = LabelMatrix::new_missing(values.len());
        for (t, v) in values.iter().enumerate() {
            m.set(t, *v);
        }
        m
    }

    fn one_task_schema() -> Schema {
        Schema::new(alloc::vec![TaskSchema::new("a0", TaskKind::Automated, 0.1)]).unwrap()
    }

    fn dataset_1d(points: &[f64], labels: &[f64]) -> Dataset {
        let records = points
            .iter()
            .zip(labels.iter())
            .enumerate()
            .map(|(i, (&x, &y))| ObservationRecord {
                individual_id: alloc::format!("r{i}"),
                timestamp: i as i64,
                features: alloc::vec![x, 0.0],
                labels: full_labels(&[y]),
            })
            .collect();
        Dataset::new(one_task_schema(), records).unwrap()
    }

    #[test]
    fn match_count_examples() {
        let schema = default_schema9();
        let a = full_labels(&[1.0; 9]);
        assert_eq!(match_count(&a, &a, &schema), 9);

        let two = Schema::new(alloc::vec![
            TaskSchema::new("x", TaskKind::Automated, 0.1),
            TaskSchema::new("y", TaskKind::Automated, 0.1),
        ])
        .unwrap();
        let ya = full_labels(&[3.0, 3.25]);
        let yb = full_labels(&[3.0, 3.75]);
        assert_eq!(match_count(&ya, &yb, &two), 1);
        assert_eq!(match_count(&yb, &ya, &two), 1); // symmetric

        let mut holey = full_labels(&[1.0; 9]);
        holey.clear(4);
        assert_eq!(match_count(&a, &holey, &schema), 8);
    }

    #[test]
    fn match_count_respects_include_flag() {
        let mut schema = default_schema9();
        let a = full_labels(&[1.0; 9]);
        schema.set_gradients_in_match(false);
        assert_eq!(match_count(&a, &a, &schema), 5);
    }

    #[test]
    fn classify_pair_boundary_inclusive() {
        let schema = default_schema9();
        let a = full_labels(&[1.0; 9]);
        let mut b = full_labels(&[1.0; 9]);
        for t in 0..4 {
            b.set(t, 100.0); // break 4 slots -> 5 matches
        }
        assert!(classify_pair(&a, &b, &schema, 5));
        b.set(4, 100.0); // 4 matches
        assert!(!classify_pair(&a, &b, &schema, 5));
        assert!(classify_pair(&a, &a, &schema, 9));
    }

    #[test]
    fn admissible_pairs_combinatorics() {
        let ds = dataset_1d(&[0.0, 1.0, 2.0, 3.0], &[5.0, 5.0, 5.0, 5.0]);
        assert_eq!(admissible_pair_count(&ds, 1), 6); // C(4,2)
        assert_eq!(admissible_pair_count(&ds, 0), 6); // every pair at n = 0
        assert_eq!(admissible_pair_count(&ds, 2), 0); // only one task
    }

    #[test]
    fn admissible_pairs_match_brute_force_and_shrink_with_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let schema = default_schema9();
        for _ in 0..10 {
            let records: Vec<ObservationRecord> = (0..20)
                .map(|i| {
                    let mut labels = LabelMatrix::new_missing(9);
                    for t in 0..9 {
                        if rng.gen_bool(0.8) {
                            labels.set(t, rng.gen_range(0..4) as f64);
                        }
                    }
                    ObservationRecord {
                        individual_id: alloc::format!("r{i}"),
                        timestamp: i,
                        features: alloc::vec![0.0],
                        labels,
                    }
                })
                .collect();
            let ds = Dataset::new(schema.clone(), records).unwrap();
            let mut prev = usize::MAX;
            for n in 1..=9 {
                // independent recount
                let mut brute = 0;
                for i in 0..ds.len() {
                    for j in i + 1..ds.len() {
                        let mut c = 0;
                        for t in 0..9 {
                            if let (Some(a), Some(b)) =
                                (ds.record(i).labels.get(t), ds.record(j).labels.get(t))
                            {
                                if (a - b).abs() <= schema.task(t).resolution {
                                    c += 1;
                                }
                            }
                        }
                        if c >= n {
                            brute += 1;
                        }
                    }
                }
                let got = admissible_pair_count(&ds, n);
                assert_eq!(got, brute);
                assert!(got <= prev, "pair count must not grow with n");
                prev = got;
            }
        }
    }

    #[test]
    fn three_records_give_unique_triplet_up_to_swap() {
        let ds = dataset_1d(&[0.0, 1.0, 5.0], &[2.0, 2.0, 9.0]);
        let cfg = MinerConfig {
            n: 1,
            triplets_per_anchor: 1,
            seed: 7,
            ..MinerConfig::default()
        };
        let mut got = sample_triplets(&ds, None, &cfg).unwrap();
        got.sort_by_key(|t| t.anchor);
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].anchor, got[0].positive, got[0].negative), (0, 1, 2));
        assert_eq!((got[1].anchor, got[1].positive, got[1].negative), (1, 0, 2));
    }

    #[test]
    fn n_too_strict_error() {
        let ds = dataset_1d(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let cfg = MinerConfig {
            n: 2, // T + 1
            ..MinerConfig::default()
        };
        match sample_triplets(&ds, None, &cfg) {
            Err(CoreError::NTooStrict {
                n,
                admissible_pairs,
            }) => {
                assert_eq!(n, 2);
                assert_eq!(admissible_pairs, 0);
            }
            other => panic!("expected NTooStrict, got {other:?}"),
        }
    }

    #[test]
    fn mined_triplets_satisfy_invariants_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let schema = default_schema9();
        let records: Vec<ObservationRecord> = (0..40)
            .map(|i| {
                let mut labels = LabelMatrix::new_missing(9);
                for t in 0..9 {
                    labels.set(t, rng.gen_range(0..3) as f64);
                }
                ObservationRecord {
                    individual_id: alloc::format!("ind{}", i % 8),
                    timestamp: i,
                    features: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    labels,
                }
            })
            .collect();
        let ds = Dataset::new(schema.clone(), records).unwrap();
        let cfg = MinerConfig {
            n: 5,
            batch_size: 24,
            triplets_per_anchor: 2,
            seed: 3,
            ..MinerConfig::default()
        };
        let got = sample_triplets(&ds, None, &cfg).unwrap();
        assert!(!got.is_empty());
        for t in &got {
            assert!(t.anchor != t.positive && t.anchor != t.negative && t.positive != t.negative);
            let mp = match_count(
                &ds.record(t.anchor).labels,
                &ds.record(t.positive).labels,
                &schema,
            );
            let mn = match_count(
                &ds.record(t.anchor).labels,
                &ds.record(t.negative).labels,
                &schema,
            );
            assert_eq!(mp, t.match_pos);
            assert_eq!(mn, t.match_neg);
            assert!(mp >= cfg.n);
            assert!(mn < cfg.n);
        }
        assert_eq!(got, sample_triplets(&ds, None, &cfg).unwrap());
    }

    #[test]
    fn forbidding_same_individual_positives() {
        let mut records = Vec::new();
        for (i, id) in [("a"), ("a"), ("b"), ("b")].iter().enumerate() {
            records.push(ObservationRecord {
                individual_id: String::from(*id),
                timestamp: i as i64,
                features: alloc::vec![i as f64, 0.0],
                labels: full_labels(&[if i < 3 { 1.0 } else { 9.0 }]),
            });
        }
        let ds = Dataset::new(one_task_schema(), records).unwrap();
        let cfg = MinerConfig {
            n: 1,
            triplets_per_anchor: 1,
            allow_same_individual: false,
            seed: 1,
            ..MinerConfig::default()
        };
        let got = sample_triplets(&ds, None, &cfg).unwrap();
        for t in &got {
            assert_ne!(
                ds.record(t.anchor).individual_id,
                ds.record(t.positive).individual_id
            );
        }
    }

    fn planted_params() -> MetricParams {
        MetricParams {
            proj: Mat::from_row_major(2, 1, &[1.0, 0.0]),
            weight: Mat::from_row_major(2, 1, &[1.0, 0.0]),
        }
    }

    #[test]
    fn semi_hard_picks_closest_negative_beyond_positive() {
        // anchor 0 at x=0, positive 1 at x=1 (δ=1); negatives at 1.5 (δ=2.25)
        // and 3.0 (δ=9): semi-hard rule selects x=1.5
        let ds = dataset_1d(&[0.0, 1.0, 1.5, 3.0], &[2.0, 2.0, 9.0, 9.0]);
        let cfg = MinerConfig {
            n: 1,
            strategy: MiningStrategy::SemiHard,
            triplets_per_anchor: 1,
            seed: 5,
            ..MinerConfig::default()
        };
        let got = sample_triplets(&ds, Some(&planted_params()), &cfg).unwrap();
        let anchor0: Vec<&Triplet> = got.iter().filter(|t| t.anchor == 0).collect();
        assert_eq!(anchor0.len(), 1);
        assert_eq!(anchor0[0].positive, 1);
        assert_eq!(anchor0[0].negative, 2);
    }

    #[test]
    fn semi_hard_falls_back_to_farthest_negative() {
        // all negatives closer than the positive: fall back to the farthest
        let ds = dataset_1d(&[0.0, 2.0, 0.5, 0.8], &[2.0, 2.0, 9.0, 9.0]);
        let cfg = MinerConfig {
            n: 1,
            strategy: MiningStrategy::SemiHard,
            triplets_per_anchor: 1,
            seed: 5,
            ..MinerConfig::default()
        };
        let got = sample_triplets(&ds, Some(&planted_params()), &cfg).unwrap();
        let anchor0: Vec<&Triplet> = got.iter().filter(|t| t.anchor == 0).collect();
        assert_eq!(anchor0[0].negative, 3);
    }

    #[test]
    fn hard_picks_farthest_positive_nearest_negative() {
        let ds = dataset_1d(&[0.0, 1.0, 2.5, 4.0, 0.3], &[2.0, 2.0, 2.0, 9.0, 9.0]);
        let cfg = MinerConfig {
            n: 1,
            strategy: MiningStrategy::Hard,
            triplets_per_anchor: 3, // hard still emits one per anchor
            seed: 5,
            ..MinerConfig::default()
        };
        let got = sample_triplets(&ds, Some(&planted_params()), &cfg).unwrap();
        let anchor0: Vec<&Triplet> = got.iter().filter(|t| t.anchor == 0).collect();
        assert_eq!(anchor0.len(), 1);
        assert_eq!(anchor0[0].positive, 2); // δ = 6.25 beats δ = 1
        assert_eq!(anchor0[0].negative, 4); // δ = 0.09 beats δ = 16
    }

    #[test]
    fn strategies_needing_params_reject_none() {
        let ds = dataset_1d(&[0.0, 1.0, 2.0], &[1.0, 1.0, 9.0]);
        let cfg = MinerConfig {
            n: 1,
            strategy: MiningStrategy::Hard,
            ..MinerConfig::default()
        };
        assert!(matches!(
            sample_triplets(&ds, None, &cfg),
            Err(CoreError::InvalidConfig(_))
        ));
    }
}
