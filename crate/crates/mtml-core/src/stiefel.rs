//! Riemannian optimization on the Stiefel manifold St(d, l): tangent
//! projection, thin-QR retraction, and stochastic gradient / conjugate
//! gradient steps. The retraction re-enters the manifold after every step,
//! keeping `‖LᵀL − I‖_F` at rounding level.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::linalg::Mat;

/// Step rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    /// Riemannian stochastic gradient descent.
    Rsgd,
    /// Riemannian conjugate gradient, Polak-Ribière with non-negative restart.
    Rcg,
}

/// Per-matrix optimizer state. CG memory (previous tangent gradient and
/// direction) is carried transported into the current tangent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub method: OptMethod,
    pub learning_rate: f64,
    pub prev_grad: Option<Mat>,
    pub prev_dir: Option<Mat>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(method: OptMethod, learning_rate: f64) -> Result<Self, CoreError> {
        if !(learning_rate > 0.0) {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(OptimizerState {
            method,
            learning_rate,
            prev_grad: None,
            prev_dir: None,
            step_count: 0,
        })
    }
}

const ORTHO_TOL: f64 = 1e-6;

/// Projects a Euclidean gradient onto the tangent space at `point`:
/// `Ξ = G − L·sym(LᵀG)` with `sym(A) = (A + Aᵀ)/2`.
pub fn tangent_project(point: &Mat, grad: &Mat) -> Result<Mat, CoreError> {
    let residual = point.ortho_residual();
    if residual > ORTHO_TOL {
        return Err(CoreError::NotOrthonormal { residual });
    }
    Ok(project_unchecked(point, grad))
}

fn project_unchecked(point: &Mat, grad: &Mat) -> Mat {
    let ltg = point.transpose_mul(grad);
    let mut sym = Mat::zeros(ltg.rows(), ltg.cols());
    for i in 0..ltg.rows() {
        for j in 0..ltg.cols() {
            sym[(i, j)] = 0.5 * (ltg[(i, j)] + ltg[(j, i)]);
        }
    }
    let mut out = grad.clone();
    out.add_scaled(&point.mul(&sym), -1.0);
    out
}

/// Retraction: Q factor of the thin QR of `point + step`, with the
/// positive-diagonal sign convention. A zero step returns `point`
/// unchanged, bit for bit.
pub fn retract_qr(point: &Mat, step: &Mat) -> Result<Mat, CoreError> {
    let step_norm = step.frob_norm();
    if step_norm == 0.0 {
        return Ok(point.clone());
    }
    let mut moved = point.clone();
    moved.add_scaled(step, 1.0);
    moved.thin_qr_q().map_err(|e| match e {
        CoreError::RankDeficient { column, .. } => CoreError::RankDeficient { column, step_norm },
        other => other,
    })
}

/// One optimizer step from the Euclidean gradient; returns the new point.
///
/// rsgd: `L' = retract(L, −lr·Ξ)`.
/// rcg: Polak-Ribière `β = ⟨Ξ, Ξ − Ξ_prev⟩ / ⟨Ξ_prev, Ξ_prev⟩` clamped at 0,
/// direction `D = −Ξ + β·D_prev`, `L' = retract(L, lr·D)`; the new gradient
/// and direction are transported to `L'` by tangent projection.
pub fn step(state: &mut OptimizerState, point: &Mat, euclid_grad: &Mat) -> Result<Mat, CoreError> {
    let xi = tangent_project(point, euclid_grad)?;
    let new_point = match state.method {
        OptMethod::Rsgd => {
            let mut displacement = xi.clone();
            displacement.scale(-state.learning_rate);
            retract_qr(point, &displacement)?
        }
        OptMethod::Rcg => {
            let beta = match (&state.prev_grad, &state.prev_dir) {
                (Some(pg), Some(_)) => {
                    let denom = frob_inner(pg, pg);
                    if denom > 0.0 {
                        let mut diff = xi.clone();
                        diff.add_scaled(pg, -1.0);
                        (frob_inner(&xi, &diff) / denom).max(0.0)
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            };
            let mut direction = xi.clone();
            direction.scale(-1.0);
            if beta > 0.0 {
                if let Some(pd) = &state.prev_dir {
                    direction.add_scaled(pd, beta);
                }
            }
            let mut displacement = direction.clone();
            displacement.scale(state.learning_rate);
            let new_point = retract_qr(point, &displacement)?;
            state.prev_grad = Some(project_unchecked(&new_point, &xi));
            state.prev_dir = Some(project_unchecked(&new_point, &direction));
            new_point
        }
    };
    state.step_count += 1;
    Ok(new_point)
}

fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum()
}
