//! Hyperparameter sweeps over the match threshold n or the angular bound α,
//! one trained model per cell, rendered as CSV tables (one row per loss
//! variant, one column per grid value) plus an admissible-pair diagnostic.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::CoreError;
use crate::eval;
use crate::metric::LossMode;
use crate::miner;
use crate::trainer::{self, CheckpointState, NoopObserver, TrainConfig};

/// The swept hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Required label-match count n.
    MatchCount(Vec<usize>),
    /// Angular bound α in degrees.
    AlphaDeg(Vec<f64>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::MatchCount(v) => v.len(),
            SweepAxis::AlphaDeg(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Table corner label, mirroring the customary "rows \ columns" style.
    pub fn corner(&self) -> &'static str {
        match self {
            SweepAxis::MatchCount(_) => "Network \\ n",
            SweepAxis::AlphaDeg(_) => "loss \\ α",
        }
    }

    pub fn column_labels(&self) -> Vec<String> {
        match self {
            SweepAxis::MatchCount(v) => v.iter().map(|n| format!("{n}")).collect(),
            SweepAxis::AlphaDeg(v) => v.iter().map(|a| format!("{}°", trim_float(*a))).collect(),
        }
    }
}

fn trim_float(v: f64) -> String {
    if v == libm::floor(v) {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// One table row: a loss variant trained across the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub mode: LossMode,
    pub lambda_mse: f64,
}

/// Per-cell result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellResult {
    Trained {
        test_loss: Option<f64>,
        precision_at_5: Option<f64>,
    },
    /// No admissible anchor-positive pair at this cell's n.
    Inadmissible,
}

/// Complete sweep result; cells are indexed `[row][column]`.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<Vec<CellResult>>,
    pub checkpoints: Vec<Vec<Option<CheckpointState>>>,
    /// (n, admissible pairs in the training split); one entry per grid value
    /// on the n axis, a single entry at the base n on the α axis.
    pub pair_counts: Vec<(usize, usize)>,
}

/// The training configuration of one cell.
pub fn cell_config(base: &TrainConfig, row: &SweepRow, axis: &SweepAxis, col: usize) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.loss.mode = row.mode;
    cfg.loss.lambda_mse = row.lambda_mse;
    match axis {
        SweepAxis::MatchCount(values) => cfg.miner.n = values[col],
        SweepAxis::AlphaDeg(values) => cfg.loss.alpha_deg = values[col],
    }
    cfg
}

/// Trains and evaluates one cell; an inadmissible n comes back as a marked
/// cell, not an error.
pub fn run_cell(
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(CellResult, Option<CheckpointState>), CoreError> {
    match trainer::train(dataset, cfg, None, &mut NoopObserver) {
        Ok(out) => {
            let (test_loss, precision) = if out.test_indices.is_empty() {
                (None, None)
            } else {
                let standardized = dataset.apply_scaler(&out.scaler)?;
                let test = standardized.subset(&out.test_indices)?;
                let report = eval::evaluate(&out.params, &test, cfg, &[5])?;
                (
                    report.mean_test_loss,
                    report.precision_at_k.first().map(|&(_, p)| p),
                )
            };
            Ok((
                CellResult::Trained {
                    test_loss,
                    precision_at_5: precision,
                },
                Some(out.final_state),
            ))
        }
        Err(CoreError::NTooStrict { .. }) => Ok((CellResult::Inadmissible, None)),
        Err(e) => Err(e),
    }
}

/// Runs the full grid sequentially in row-major order; every cell shares
/// the base seed. Deterministic in (dataset, base, axis, rows).
pub fn sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    axis: &SweepAxis,
    rows: &[SweepRow],
) -> Result<SweepOutcome, CoreError> {
    if axis.is_empty() || rows.is_empty() {
        return Err(CoreError::InvalidConfig(
            "sweep needs at least one row and one grid value".into(),
        ));
    }
    let mut cells = Vec::with_capacity(rows.len());
    let mut checkpoints = Vec::with_capacity(rows.len());
    for row in rows {
        let mut row_cells = Vec::with_capacity(axis.len());
        let mut row_ckpts = Vec::with_capacity(axis.len());
        for col in 0..axis.len() {
            let cfg = cell_config(base, row, axis, col);
            let (cell, ckpt) = run_cell(dataset, &cfg)?;
            row_cells.push(cell);
            row_ckpts.push(ckpt);
        }
        cells.push(row_cells);
        checkpoints.push(row_ckpts);
    }
    let pair_counts = pair_diagnostics(dataset, base, axis);
    Ok(SweepOutcome {
        axis: axis.clone(),
        rows: rows.to_vec(),
        cells,
        checkpoints,
        pair_counts,
    })
}

/// Admissible-pair counts on the training split for each swept n (or the
/// base n on the α axis).
pub fn pair_diagnostics(
    dataset: &Dataset,
    base: &TrainConfig,
    axis: &SweepAxis,
) -> Vec<(usize, usize)> {
    let (train_idx, _) = dataset.split_by_individual(base.train_fraction, base.seed);
    let train = match dataset.subset(&train_idx) {
        Ok(ds) => ds,
        Err(_) => return Vec::new(),
    };
    let ns: Vec<usize> = match axis {
        SweepAxis::MatchCount(values) => values.clone(),
        SweepAxis::AlphaDeg(_) => alloc::vec![base.miner.n],
    };
    ns.into_iter()
        .map(|n| (n, miner::admissible_pair_count(&train, n)))
        .collect()
}

fn fmt_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => String::from("n/a"),
    }
}

fn render_table(outcome: &SweepOutcome, pick: impl Fn(&CellResult) -> String) -> String {
    let mut out = String::new();
    out.push_str(outcome.axis.corner());
    for label in outcome.axis.column_labels() {
        out.push(',');
        out.push_str(&label);
    }
    out.push('\n');
    for (row, cells) in outcome.rows.iter().zip(outcome.cells.iter()) {
        out.push_str(&row.label);
        for cell in cells {
            out.push(',');
            out.push_str(&pick(cell));
        }
        out.push('\n');
    }
    out
}

/// Mean-test-loss table in the paper-style layout.
pub fn render_loss_csv(outcome: &SweepOutcome) -> String {
    render_table(outcome, |cell| match cell {
        CellResult::Trained { test_loss, .. } => fmt_cell(*test_loss),
        CellResult::Inadmissible => String::from("n too strict"),
    })
}

/// Precision@5 table with the same layout.
pub fn render_precision_csv(outcome: &SweepOutcome) -> String {
    render_table(outcome, |cell| match cell {
        CellResult::Trained { precision_at_5, .. } => fmt_cell(*precision_at_5),
        CellResult::Inadmissible => String::from("n too strict"),
    })
}

/// Admissible-pair diagnostic, one column per n.
pub fn render_pairs_csv(outcome: &SweepOutcome) -> String {
    let mut header = String::from("pairs \\ n");
    let mut row = String::from("admissible");
    for (n, count) in &outcome.pair_counts {
        header.push_str(&format!(",{n}"));
        row.push_str(&format!(",{count}"));
    }
    header.push('\n');
    row.push('\n');
    header + &row
}
