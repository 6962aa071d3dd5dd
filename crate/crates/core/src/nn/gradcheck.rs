use super::net::{batch_loss, loss_and_grads, Sample};
use super::params::ParamSet;
use super::spec::NetworkSpec;
use crate::Result;

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

/// Worst relative disagreement between `analytic` and central finite
/// differences of the batch loss, over every parameter coordinate.
pub fn compare_with_finite_differences(
    spec: &NetworkSpec,
    params: &ParamSet,
    batch: &[Sample<'_>],
    analytic: &ParamSet,
) -> Result<f64> {
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for ti in 0..probe.tensors.len() {
        for k in 0..probe.tensors[ti].data.len() {
            let orig = probe.tensors[ti].data[k];
            probe.tensors[ti].data[k] = orig + FD_STEP;
            let up = batch_loss(spec, &probe, batch)?;
            probe.tensors[ti].data[k] = orig - FD_STEP;
            let down = batch_loss(spec, &probe, batch)?;
            probe.tensors[ti].data[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.tensors[ti].data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Checks the reverse pass of [`loss_and_grads`] against finite differences.
pub fn finite_diff_check(
    spec: &NetworkSpec,
    params: &ParamSet,
    batch: &[Sample<'_>],
) -> Result<f64> {
    if params.num_params() == 0 {
        return Ok(0.0);
    }
    let (_, grads) = loss_and_grads(spec, params, batch)?;
    compare_with_finite_differences(spec, params, batch, &grads)
}
