//! Finite-difference verification of analytic gradients.
//!
//! The loss closure is re-evaluated with single parameter elements nudged by
//! +/- epsilon, so it must be deterministic: any randomness inside has to be
//! re-seeded identically on every call.

use candle_core::Tensor;

use crate::error::Result;
use crate::nn::{scalar, tensor_from_vec, ParamList};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central difference half-step.
    pub epsilon: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            rel_tol: 1e-3,
            abs_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Scalar elements compared.
    pub checked: usize,
    /// Elements outside both tolerances.
    pub failures: usize,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// Element with the largest relative difference, as "name[i]".
    pub worst: String,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares the backward-pass gradient of `loss_fn` against central finite
/// differences, element by element over every parameter in `params`. An
/// element passes if its absolute or its relative difference is within
/// tolerance. Parameters are restored to their original values afterwards.
pub fn check_gradients(
    params: &ParamList,
    loss_fn: &mut dyn FnMut() -> Result<Tensor>,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let loss = loss_fn()?;
    let grads = loss.backward()?;
    let mut analytic: Vec<Vec<f64>> = Vec::with_capacity(params.0.len());
    for (_, var) in &params.0 {
        let g = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
            None => vec![0.0; var.elem_count()],
        };
        analytic.push(g);
    }

    let mut report = GradCheckReport {
        checked: 0,
        failures: 0,
        max_abs_diff: 0.0,
        max_rel_diff: 0.0,
        worst: String::new(),
    };
    for (pi, (name, var)) in params.0.iter().enumerate() {
        let dims = var.dims().to_vec();
        let original = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        for i in 0..original.len() {
            let mut bumped = original.clone();
            bumped[i] = original[i] + config.epsilon;
            var.set(&tensor_from_vec(bumped, &dims)?)?;
            let plus = scalar(&loss_fn()?)?;

            let mut bumped = original.clone();
            bumped[i] = original[i] - config.epsilon;
            var.set(&tensor_from_vec(bumped, &dims)?)?;
            let minus = scalar(&loss_fn()?)?;

            var.set(&tensor_from_vec(original.clone(), &dims)?)?;

            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let a = analytic[pi][i];
            let abs_diff = (a - numeric).abs();
            let rel_diff = abs_diff / a.abs().max(numeric.abs()).max(1e-12);
            report.checked += 1;
            if abs_diff > report.max_abs_diff {
                report.max_abs_diff = abs_diff;
            }
            if rel_diff > report.max_rel_diff {
                report.max_rel_diff = rel_diff;
                report.worst = format!("{name}[{i}]");
            }
            if abs_diff > config.abs_tol && rel_diff > config.rel_tol {
                report.failures += 1;
            }
        }
    }
    Ok(report)
}
