use super::config::LossWeights;
use super::loss::Target;
use super::network::{Sample, Tim};
use crate::error::Result;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// Parameters whose perturbation changed a discrete choice.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst: usize,
}

/// Central-difference check of every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`. Perturbations that
/// change the structure signature are counted in `skipped`.
pub fn check_gradients(model: &Tim, sample: &Sample, target: &Target, w: &LossWeights, step: f64, floor: f64) -> Result<GradCheck> {
    let base = model.loss_and_grad(sample, target, w)?;
    let analytic: Vec<f64> = base.grads.flat().collect();
    let mut probe = model.clone();
    let mut out = GradCheck::default();
    for (k, &a) in analytic.iter().enumerate() {
        let orig = probe.params.flat_get(k);
        probe.params.flat_set(k, orig + step);
        let (up, sig_up) = probe.evaluate_loss(sample, target, w)?;
        probe.params.flat_set(k, orig - step);
        let (dn, sig_dn) = probe.evaluate_loss(sample, target, w)?;
        probe.params.flat_set(k, orig);
        if sig_up != base.signature || sig_dn != base.signature {
            out.skipped += 1;
            continue;
        }
        let numeric = (up.total - dn.total) / (2.0 * step);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        out.checked += 1;
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst = k;
        }
    }
    Ok(out)
}
