//! The hybrid policy-gradient / cross-entropy update and the baseline MSE.

use ndarray::{Array1, Array2};

use super::rollout::Rollout;
use crate::model::{Model, OutputGrads};
use crate::nn::ParamStore;
use crate::{Error, Result};

/// Characteristic eligibility of the Gaussian mean: (q - mu) / sigma^2.
pub fn eligibility_mu(q: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok((q - mu) / (sigma * sigma))
}

/// Characteristic eligibility of the Gaussian deviation:
/// ((q - mu)^2 - sigma^2) / sigma^3.
pub fn eligibility_sigma(q: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let d = q - mu;
    Ok((d * d - sigma * sigma) / (sigma * sigma * sigma))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "eligibility needs sigma > 0, got {sigma}"
        )))
    }
}

/// Loss gradients to inject at one policy output, for one sampled coordinate.
///
/// The minimized term is -beta * advantage * log N(q; mu, sigma), so the
/// returned pair is (-beta * advantage * zeta_mu, -beta * advantage * zeta_sigma).
pub fn location_injection(
    beta: f64,
    advantage: f64,
    q: f64,
    mu: f64,
    sigma: f64,
) -> Result<(f64, f64)> {
    let scale = -beta * advantage;
    Ok((
        scale * eligibility_mu(q, mu, sigma)?,
        scale * eligibility_sigma(q, mu, sigma)?,
    ))
}

/// Accumulates the hybrid update's gradient for one rollout chunk.
///
/// Cross-entropy reads the final glance (every glance when `ce_all_glances`);
/// REINFORCE terms attach to each sampled glance's policy with the per-step
/// baseline advantage held constant. Everything is scaled by 1/`total_batch`
/// and backpropagated through the whole network, recurrent core included.
pub fn accumulate_hybrid(
    model: &Model,
    params: &ParamStore,
    rollout: &Rollout,
    beta: f64,
    ce_all_glances: bool,
    total_batch: usize,
    grads: &mut ParamStore,
) -> Result<()> {
    let n_glances = rollout.glances.len();
    let batch = rollout.batch();
    let inv_b = 1.0 / total_batch as f64;

    let mut injections = Vec::with_capacity(n_glances);
    for g in 0..n_glances {
        let ctx = &rollout.glances[g];
        let mut inject = OutputGrads::default();

        if ce_all_glances || g + 1 == n_glances {
            let mut dlogits = ctx.dist.clone();
            for (i, &label) in rollout.labels.iter().enumerate() {
                dlogits[[i, label.index()]] -= 1.0;
            }
            inject.dlogits = Some(dlogits * inv_b);
        }

        // The sample drawn from this glance's policy is the next glance's pose.
        if beta != 0.0 && g + 1 < n_glances {
            let sampled = &rollout.glances[g + 1].input.pose;
            let mut dmu = Array2::zeros((batch, 2));
            let mut dsigma = Array2::zeros((batch, 2));
            for i in 0..batch {
                let advantage = rollout.rewards[i] - ctx.baseline[i];
                for k in 0..2 {
                    let (gm, gs) = location_injection(
                        beta,
                        advantage,
                        sampled[[i, k]],
                        ctx.mu[[i, k]],
                        ctx.sigma[[i, k]],
                    )?;
                    dmu[[i, k]] = gm * inv_b;
                    dsigma[[i, k]] = gs * inv_b;
                }
            }
            inject.dmu = Some(dmu);
            inject.dsigma = Some(dsigma);
        }
        injections.push(inject);
    }

    let mut carry = None;
    for (ctx, inject) in rollout.glances.iter().zip(&injections).rev() {
        carry = model.glance_backward(params, grads, ctx, inject, carry);
    }
    Ok(())
}

/// Accumulates the baseline head's MSE gradient for one rollout chunk and
/// returns the chunk's summed loss (caller divides by the full batch).
///
/// Every prefix length contributes a term: L = sum_s (R_s - b_s)^2 with
/// R_s = r * discount^(S-s) collapsing to r at discount 1.
pub fn accumulate_baseline(
    model: &Model,
    params: &ParamStore,
    rollout: &Rollout,
    discount: f64,
    total_batch: usize,
    grads: &mut ParamStore,
) -> f64 {
    let n_glances = rollout.glances.len();
    let batch = rollout.batch();
    let inv_b = 1.0 / total_batch as f64;

    let mut loss = 0.0;
    for (g, ctx) in rollout.glances.iter().enumerate() {
        let horizon = (n_glances - 1 - g) as i32;
        let mut dvalue = Array1::zeros(batch);
        for i in 0..batch {
            let target = rollout.rewards[i] * discount.powi(horizon);
            let diff = ctx.baseline[i] - target;
            loss += diff * diff;
            dvalue[i] = 2.0 * diff * inv_b;
        }
        model.baseline_backward(params, grads, ctx, &dvalue.view());
    }
    loss
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut ParamStore, max_norm: f64) {
    let norm = grads.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.values_mut().iter_mut().for_each(|v| *v *= scale);
    }
}
