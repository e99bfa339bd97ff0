//! Exact backward passes through one glance and the recurrent chain.

use ndarray::{concatenate, s, Array2, ArrayView1, Axis};

use super::{relu_mask, Core, CoreCtx, CombinerMode, GlanceCtx, Model, CORE_WIDTH, FEATURE_WIDTH};
use crate::nn::activation::sigmoid;
use crate::nn::ParamStore;

/// Gradients injected at a glance's outputs.
///
/// `dlogits` sits at the classifier logits (softmax already folded in),
/// `dmu` at the tanh-ed means, `dsigma` at the softplus-ed deviations.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub dlogits: Option<Array2<f64>>,
    pub dmu: Option<Array2<f64>>,
    pub dsigma: Option<Array2<f64>>,
}

impl Model {
    /// Backpropagates one glance. `carry` holds (dh, dc) arriving from the
    /// following step for the recurrent core; the return value is the carry
    /// for the preceding step (`None` for the stateless core).
    ///
    /// Pose and pressure inputs are sampled, not differentiable; their
    /// gradients are discarded by design.
    pub fn glance_backward(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        ctx: &GlanceCtx,
        inject: &OutputGrads,
        carry: Option<(Array2<f64>, Array2<f64>)>,
    ) -> Option<(Array2<f64>, Array2<f64>)> {
        let batch = ctx.batch();
        let mut dcore = Array2::zeros((batch, CORE_WIDTH));

        if let Some(dlogits) = &inject.dlogits {
            dcore += &self
                .classifier
                .backward(params, grads, &ctx.core_out.view(), &dlogits.view());
        }
        if let Some(dmu) = &inject.dmu {
            let dpre = dmu * &ctx.mu.mapv(|m| 1.0 - m * m);
            let dtrunk_out =
                self.mu_head
                    .backward(params, grads, &ctx.mu_trunk_out.view(), &dpre.view());
            let dtrunk_pre = dtrunk_out * relu_mask(&ctx.mu_trunk_out);
            dcore += &self
                .mu_trunk
                .backward(params, grads, &ctx.core_out.view(), &dtrunk_pre.view());
        }
        if let Some(dsigma) = &inject.dsigma {
            let dpre = dsigma * &ctx.sigma_pre.mapv(sigmoid);
            let dtrunk_out =
                self.sigma_head
                    .backward(params, grads, &ctx.sigma_trunk_out.view(), &dpre.view());
            let dtrunk_pre = dtrunk_out * relu_mask(&ctx.sigma_trunk_out);
            dcore += &self
                .sigma_trunk
                .backward(params, grads, &ctx.core_out.view(), &dtrunk_pre.view());
        }

        let (dfeature, next_carry) = match (&self.core, &ctx.core_ctx) {
            (Core::Lstm(lstm), CoreCtx::Lstm(step_ctx)) => {
                let (dh_future, dc_future) = carry.unwrap_or_else(|| {
                    (
                        Array2::zeros((batch, CORE_WIDTH)),
                        Array2::zeros((batch, CORE_WIDTH)),
                    )
                });
                let dh = dcore + dh_future;
                let (dx, dh_prev, dc_prev) =
                    lstm.backward_step(params, grads, step_ctx, &dh.view(), &dc_future.view());
                (dx, Some((dh_prev, dc_prev)))
            }
            (Core::Mlp(dense), CoreCtx::Mlp) => {
                assert!(carry.is_none(), "mlp core has no recurrent carry");
                let dpre = dcore * relu_mask(&ctx.core_out);
                let dx = dense.backward(params, grads, &ctx.feature.view(), &dpre.view());
                (dx, None)
            }
            _ => unreachable!("core and context variants disagree"),
        };

        self.tactile_backward(params, grads, ctx, &dfeature);
        next_carry
    }

    fn tactile_backward(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        ctx: &GlanceCtx,
        dfeature: &Array2<f64>,
    ) {
        let (dp_out, dq_out) = match self.config.combiner {
            CombinerMode::Multiply => (dfeature * &ctx.q_out, dfeature * &ctx.p_out),
            CombinerMode::Add => (dfeature.clone(), dfeature.clone()),
            CombinerMode::Concat1 | CombinerMode::Concat2 => {
                let mut d = dfeature.clone();
                if let (Some(fuse2), Some(c2_out)) = (&self.fuse2, &ctx.c2_out) {
                    let dpre2 = &d * &relu_mask(c2_out);
                    let c1 = ctx.c1_out.as_ref().expect("fuse2 needs the fuse1 output");
                    d = fuse2.backward(params, grads, &c1.view(), &dpre2.view());
                }
                let c1_out = ctx.c1_out.as_ref().expect("concat context");
                let cat = concatenate![Axis(1), ctx.p_out.view(), ctx.q_out.view()];
                let dpre1 = &d * &relu_mask(c1_out);
                let dcat = self
                    .fuse1
                    .as_ref()
                    .expect("concat fuse layer")
                    .backward(params, grads, &cat.view(), &dpre1.view());
                (
                    dcat.slice(s![.., 0..FEATURE_WIDTH]).to_owned(),
                    dcat.slice(s![.., FEATURE_WIDTH..]).to_owned(),
                )
            }
        };

        let dp_pre = &dp_out * &relu_mask(&ctx.p_out);
        let _ = self
            .pressure_branch
            .backward(params, grads, &ctx.input.pressure.view(), &dp_pre.view());
        let dq_pre = &dq_out * &relu_mask(&ctx.q_out);
        let _ = self
            .pose_branch
            .backward(params, grads, &ctx.input.pose.view(), &dq_pre.view());
    }

    /// Accumulates the baseline head's gradient only; the rest of the network
    /// is untouched, matching the separately trained baseline.
    pub fn baseline_backward(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        ctx: &GlanceCtx,
        dvalue: &ArrayView1<f64>,
    ) {
        let dy = dvalue.to_owned().insert_axis(Axis(1));
        let _ = self
            .baseline
            .backward(params, grads, &ctx.core_out.view(), &dy.view());
    }
}
