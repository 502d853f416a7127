//! Longitudinal dataset: records, label matrices, imputation, gradient
//! labels, standardization and the by-individual split.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::rng;
use crate::schema::Schema;

/// T label slots with a presence mask. Missing slots carry a canonical 0.0
/// so structural equality is meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrix {
    values: Vec<f64>,
    present: Vec<bool>,
}

impl LabelMatrix {
    pub fn new_missing(tasks: usize) -> Self {
        LabelMatrix {
            values: vec![0.0; tasks],
            present: vec![false; tasks],
        }
    }

    pub fn from_options(slots: &[Option<f64>]) -> Self {
        let mut m = LabelMatrix::new_missing(slots.len());
        for (t, slot) in slots.iter().enumerate() {
            if let Some(v) = slot {
                m.set(t, *v);
            }
        }
        m
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn is_present(&self, t: usize) -> bool {
        self.present[t]
    }

    /// Value of a present slot; `None` when missing.
    #[inline]
    pub fn get(&self, t: usize) -> Option<f64> {
        if self.present[t] {
            Some(self.values[t])
        } else {
            None
        }
    }

    pub fn set(&mut self, t: usize, value: f64) {
        self.values[t] = value;
        self.present[t] = true;
    }

    pub fn clear(&mut self, t: usize) {
        self.values[t] = 0.0;
        self.present[t] = false;
    }

    fn normalize(&mut self) {
        for (v, p) in self.values.iter_mut().zip(self.present.iter()) {
            if !*p {
                *v = 0.0;
            }
        }
    }
}

/// One timestamped observation of one individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub individual_id: String,
    /// Days since an arbitrary epoch.
    pub timestamp: i64,
    pub features: Vec<f64>,
    pub labels: LabelMatrix,
}

/// Immutable, validated record collection sorted by (individual, timestamp).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    records: Vec<ObservationRecord>,
    dim: usize,
    /// Half-open record ranges per individual, in sorted-id order.
    individuals: Vec<(String, usize, usize)>,
}

impl Dataset {
    /// Validates and sorts records; the feature dimension is inferred from
    /// the first record.
    pub fn new(schema: Schema, records: Vec<ObservationRecord>) -> Result<Self, CoreError> {
        let dim = records
            .first()
            .map(|r| r.features.len())
            .ok_or_else(|| CoreError::InvalidData("dataset has no records".into()))?;
        Self::new_with_dim(schema, records, dim)
    }

    pub fn new_with_dim(
        schema: Schema,
        mut records: Vec<ObservationRecord>,
        dim: usize,
    ) -> Result<Self, CoreError> {
        let tasks = schema.len();
        for rec in &records {
            if rec.features.len() != dim {
                return Err(CoreError::InvalidData(format!(
                    "record ({}, {}) has {} features, expected {}",
                    rec.individual_id,
                    rec.timestamp,
                    rec.features.len(),
                    dim
                )));
            }
            if let Some(j) = rec.features.iter().position(|v| !v.is_finite()) {
                return Err(CoreError::InvalidData(format!(
                    "record ({}, {}) has non-finite feature f_{j}",
                    rec.individual_id, rec.timestamp
                )));
            }
            if rec.labels.len() != tasks {
                return Err(CoreError::InvalidData(format!(
                    "record ({}, {}) has {} label slots, expected {}",
                    rec.individual_id,
                    rec.timestamp,
                    rec.labels.len(),
                    tasks
                )));
            }
            for t in 0..tasks {
                if let Some(v) = rec.labels.get(t) {
                    if !v.is_finite() {
                        return Err(CoreError::InvalidData(format!(
                            "record ({}, {}) has non-finite label in column {}",
                            rec.individual_id,
                            rec.timestamp,
                            schema.task(t).name
                        )));
                    }
                }
            }
        }
        records.sort_by(|a, b| {
            (a.individual_id.as_str(), a.timestamp).cmp(&(b.individual_id.as_str(), b.timestamp))
        });
        for w in records.windows(2) {
            if w[0].individual_id == w[1].individual_id && w[0].timestamp == w[1].timestamp {
                return Err(CoreError::InvalidData(format!(
                    "duplicate timestamp {} for individual {}",
                    w[0].timestamp, w[0].individual_id
                )));
            }
        }
        for rec in &mut records {
            rec.labels.normalize();
        }
        let individuals = index_individuals(&records);
        Ok(Dataset {
            schema,
            records,
            dim,
            individuals,
        })
    }

    #[inline]
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    #[inline]
    pub fn record(&self, i: usize) -> &ObservationRecord {
        &self.records[i]
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    /// Individuals as (id, start, end) record ranges.
    pub fn individuals(&self) -> &[(String, usize, usize)] {
        &self.individuals
    }

    /// Fills missing expert slots from the temporally nearest observation of
    /// the same individual; ties go to the earlier observation. Individuals
    /// with no observation of a task keep the slot missing.
    pub fn impute_nearest(&self) -> Dataset {
        let mut out = self.clone();
        let expert_tasks = self.schema.expert_tasks();
        for &(_, start, end) in &self.individuals {
            for &t in &expert_tasks {
                let observed: Vec<(i64, f64)> = (start..end)
                    .filter_map(|i| {
                        self.records[i]
                            .labels
                            .get(t)
                            .map(|v| (self.records[i].timestamp, v))
                    })
                    .collect();
                if observed.is_empty() {
                    continue;
                }
                for i in start..end {
                    if out.records[i].labels.is_present(t) {
                        continue;
                    }
                    let ts = out.records[i].timestamp;
                    // earlier observation wins ties: strict < keeps the
                    // first (earliest) closest entry
                    let mut best = observed[0];
                    let mut best_gap = (best.0 - ts).abs();
                    for &(ots, ov) in &observed[1..] {
                        let gap = (ots - ts).abs();
                        if gap < best_gap {
                            best = (ots, ov);
                            best_gap = gap;
                        }
                    }
                    out.records[i].labels.set(t, best.1);
                }
            }
        }
        out
    }

    /// Derives forward/backward finite-difference labels (score per day)
    /// for every gradient column from its source expert column. Boundary
    /// records take 0. Slots whose source is missing stay missing.
    pub fn compute_gradient_labels(&self) -> Dataset {
        let mut out = self.clone();
        for (g, src, forward) in self.schema.gradient_tasks() {
            for &(_, start, end) in &self.individuals {
                for i in start..end {
                    let here = match self.records[i].labels.get(src) {
                        Some(v) => v,
                        None => {
                            out.records[i].labels.clear(g);
                            continue;
                        }
                    };
                    let neighbor = if forward {
                        (i + 1 < end).then(|| &self.records[i + 1])
                    } else {
                        (i > start).then(|| &self.records[i - 1])
                    };
                    let value = match neighbor.and_then(|n| n.labels.get(src).map(|v| (n, v))) {
                        Some((n, there)) => {
                            let dt = (n.timestamp - self.records[i].timestamp) as f64;
                            if forward {
                                (there - here) / dt
                            } else {
                                (here - there) / (-dt)
                            }
                        }
                        None => 0.0,
                    };
                    out.records[i].labels.set(g, value);
                }
            }
        }
        out
    }

    /// Per-individual split of record indices; `fraction` of individuals go
    /// to the first (train) side. Deterministic in `seed`.
    pub fn split_by_individual(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.individuals.len()).collect();
        let mut rng = rng::stream(seed, &[rng::SALT_SPLIT]);
        order.shuffle(&mut rng);
        let n_train = libm::ceil(fraction * self.individuals.len() as f64) as usize;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (rank, &ind) in order.iter().enumerate() {
            let (_, start, end) = self.individuals[ind];
            let side = if rank < n_train { &mut train } else { &mut test };
            side.extend(start..end);
        }
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }

    /// New dataset holding clones of the selected records.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset, CoreError> {
        let records: Vec<ObservationRecord> =
            indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new_with_dim(self.schema.clone(), records, self.dim)
    }

    /// Same records under a schema whose gradient columns do (or do not)
    /// participate in the n-of-T match rule.
    pub fn with_gradients_in_match(&self, include: bool) -> Dataset {
        let mut out = self.clone();
        out.schema.set_gradients_in_match(include);
        out
    }

    /// Applies a feature scaler to every record.
    pub fn apply_scaler(&self, scaler: &FeatureScaler) -> Result<Dataset, CoreError> {
        if scaler.mean.len() != self.dim {
            return Err(CoreError::DimensionMismatch {
                context: "apply_scaler",
                expected: self.dim,
                got: scaler.mean.len(),
            });
        }
        let mut out = self.clone();
        for rec in &mut out.records {
            scaler.apply_in_place(&mut rec.features);
        }
        Ok(out)
    }
}

fn index_individuals(records: &[ObservationRecord]) -> Vec<(String, usize, usize)> {
    let mut out: Vec<(String, usize, usize)> = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        match out.last_mut() {
            Some((id, _, end)) if *id == rec.individual_id => *end = i + 1,
            _ => out.push((rec.individual_id.clone(), i, i + 1)),
        }
    }
    out
}

/// Per-column affine feature normalization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Fits per-column mean and standard deviation over the given records.
    /// Columns with (near-)zero variance keep unit scale.
    pub fn fit(dataset: &Dataset, indices: &[usize]) -> Result<Self, CoreError> {
        if indices.is_empty() {
            return Err(CoreError::InvalidData(
                "cannot fit a scaler on an empty split".into(),
            ));
        }
        let d = dataset.dim();
        let n = indices.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in indices {
            for (m, v) in mean.iter_mut().zip(&dataset.record(i).features) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for &i in indices {
            for j in 0..d {
                let e = dataset.record(i).features[j] - mean[j];
                var[j] += e * e;
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = crate::math::sqrt(v / n);
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(FeatureScaler { mean, std })
    }

    pub fn apply_in_place(&self, features: &mut [f64]) {
        for j in 0..features.len() {
            features[j] = (features[j] - self.mean[j]) / self.std[j];
        }
    }
}
