use crate::buffers::Record;
use crate::error::{Error, Result};
use crate::nn::{HeadKind, Mlp, Trace};

/// Batch means of the three loss terms and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub fifo: f64,
    pub rehearsal: f64,
    /// Mean of `weight * 0.5 |h(x) - z|^2` over the regularization records.
    pub reg: f64,
    pub total: f64,
}

/// Evaluates the replay objective and writes its gradient w.r.t. the network
/// parameters into `grads` (overwritten).
///
/// `alpha`, `beta` and the per-record `reg_weights` are treated as constants.
/// Empty record sets contribute zero.
#[allow(clippy::too_many_arguments)]
pub fn der_objective(
    model: &Mlp,
    head: HeadKind,
    fifo: &[&Record],
    rehearsal: &[&Record],
    regularization: &[&Record],
    reg_weights: &[f64],
    alpha: f64,
    beta: f64,
    grads: &mut [f64],
    trace: &mut Trace,
) -> Result<LossParts> {
    if reg_weights.len() != regularization.len() {
        return Err(Error::DimensionMismatch {
            expected: regularization.len(),
            got: reg_weights.len(),
        });
    }
    grads.iter_mut().for_each(|g| *g = 0.0);
    let mut out_grad = vec![0.0; model.output_dim()];
    let mut parts = LossParts::default();

    for (records, weight, slot) in [
        (fifo, 1.0 - beta, &mut parts.fifo),
        (rehearsal, beta, &mut parts.rehearsal),
    ] {
        if records.is_empty() {
            continue;
        }
        let scale = weight / records.len() as f64;
        let mut sum = 0.0;
        for rec in records {
            let z = model.forward_trace(&rec.x, trace)?;
            sum += head.nll_grad(z, &rec.y, &mut out_grad)?;
            out_grad.iter_mut().for_each(|g| *g *= scale);
            model.backward(trace, &out_grad, grads);
        }
        *slot = sum / records.len() as f64;
    }

    if !regularization.is_empty() {
        let scale = alpha / regularization.len() as f64;
        let mut sum = 0.0;
        for (rec, &w) in regularization.iter().zip(reg_weights) {
            if rec.z.len() != model.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.output_dim(),
                    got: rec.z.len(),
                });
            }
            let h = model.forward_trace(&rec.x, trace)?;
            let mut sq = 0.0;
            for ((g, hv), zv) in out_grad.iter_mut().zip(h).zip(&rec.z) {
                let d = hv - zv;
                sq += d * d;
                *g = scale * w * d;
            }
            sum += w * 0.5 * sq;
            model.backward(trace, &out_grad, grads);
        }
        parts.reg = sum / regularization.len() as f64;
    }

    parts.total = (1.0 - beta) * parts.fifo + beta * parts.rehearsal + alpha * parts.reg;
    if !parts.total.is_finite() {
        return Err(Error::NonFinite(format!("replay objective ({parts:?})")));
    }
    Ok(parts)
}
