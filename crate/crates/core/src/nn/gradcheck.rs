//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::nn::tensor::{Parameter, Tensor};

/// A scalar loss over a batch whose parameter gradients can be computed
/// analytically.
pub trait Differentiable {
    /// Parameters in a fixed order.
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;
    /// Loss without touching gradients.
    fn loss(&self, x: &Tensor, labels: &[usize]) -> Result<f64>;
    /// Loss, with every parameter's `grad` overwritten by `∂loss/∂param`.
    fn loss_and_gradients(&mut self, x: &Tensor, labels: &[usize]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.threshold
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every parameter entry's analytic gradient against
/// `(L(θ + h) − L(θ − h)) / 2h`.
pub fn grad_check<M: Differentiable>(
    model: &mut M,
    x: &Tensor,
    labels: &[usize],
    step: f64,
    threshold: f64,
) -> Result<GradCheckReport> {
    model.loss_and_gradients(x, labels)?;
    let analytic: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
        threshold,
    };
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = model.parameters()[pi].value.data()[i];
            model.parameters_mut()[pi].value.data_mut()[i] = orig + step;
            let up = model.loss(x, labels)?;
            model.parameters_mut()[pi].value.data_mut()[i] = orig - step;
            let down = model.loss(x, labels)?;
            model.parameters_mut()[pi].value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = if a.is_finite() && numeric.is_finite() {
                relative_error(a, numeric)
            } else {
                f64::INFINITY
            };
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((model.parameters()[pi].name.clone(), i));
            }
        }
    }
    Ok(report)
}
