use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::init::he_normal;
use super::params::{BlockId, Layout, ParamStore};

/// Single-layer LSTM with gate rows packed `[input, forget, cell, output]`.
///
/// Weights: `wx` [4H x In], `wh` [4H x H], `b` [4H]. Step math:
/// `pre = x wx^T + h wh^T + b`, `c' = f*c + i*g`, `h' = o * tanh(c')`.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    wx: BlockId,
    wh: BlockId,
    b: BlockId,
    in_dim: usize,
    hidden: usize,
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }
}

/// Forward context captured for one step's backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCtx {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    ct: Array2<f64>,
}

impl Lstm {
    pub fn new(layout: &mut Layout, name: &str, in_dim: usize, hidden: usize) -> Self {
        let wx = layout.add(&format!("{name}.wx"), &[4 * hidden, in_dim]);
        let wh = layout.add(&format!("{name}.wh"), &[4 * hidden, hidden]);
        let b = layout.add(&format!("{name}.b"), &[4 * hidden]);
        Self {
            wx,
            wh,
            b,
            in_dim,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn init<R: Rng>(&self, params: &mut ParamStore, rng: &mut R) {
        he_normal(params, self.wx, self.in_dim, rng);
        he_normal(params, self.wh, self.hidden, rng);
        params.slice_mut(self.b).iter_mut().for_each(|v| *v = 0.0);
    }

    /// Advances one step, returning the context needed for backprop.
    pub fn forward_step(
        &self,
        params: &ParamStore,
        x: &ArrayView2<f64>,
        state: &LstmState,
    ) -> (LstmStepCtx, LstmState) {
        let h = self.hidden;
        assert_eq!(x.ncols(), self.in_dim, "lstm input width mismatch");
        assert_eq!(state.h.ncols(), h, "lstm state width mismatch");
        assert_eq!(x.nrows(), state.h.nrows(), "lstm batch mismatch");

        let mut pre = Array2::zeros((x.nrows(), 4 * h));
        pre += &params.vec(self.b);
        general_mat_mul(1.0, x, &params.mat(self.wx).t(), 1.0, &mut pre);
        general_mat_mul(1.0, &state.h, &params.mat(self.wh).t(), 1.0, &mut pre);

        let i = pre.slice(s![.., 0..h]).mapv(super::activation::sigmoid);
        let f = pre.slice(s![.., h..2 * h]).mapv(super::activation::sigmoid);
        let g = pre.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
        let o = pre.slice(s![.., 3 * h..4 * h]).mapv(super::activation::sigmoid);

        let c_new = &f * &state.c + &i * &g;
        let ct = c_new.mapv(f64::tanh);
        let h_new = &o * &ct;

        let ctx = LstmStepCtx {
            x: x.to_owned(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            ct,
        };
        let state = LstmState { h: h_new, c: c_new };
        (ctx, state)
    }

    /// One step of backprop through time.
    ///
    /// `dh`/`dc` are gradients w.r.t. this step's outputs; returns
    /// `(dx, dh_prev, dc_prev)` and accumulates weight gradients.
    pub fn backward_step(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        ctx: &LstmStepCtx,
        dh: &ArrayView2<f64>,
        dc: &ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h = self.hidden;
        let batch = ctx.x.nrows();
        assert_eq!(dh.dim(), (batch, h), "lstm dh shape mismatch");
        assert_eq!(dc.dim(), (batch, h), "lstm dc shape mismatch");

        let d_o = dh * &ctx.ct;
        let dc_total = dc + &(dh * &ctx.o * ctx.ct.mapv(super::activation::dtanh_from_y));
        let d_i = &dc_total * &ctx.g;
        let d_g = &dc_total * &ctx.i;
        let d_f = &dc_total * &ctx.c_prev;
        let dc_prev = &dc_total * &ctx.f;

        let mut dpre = Array2::zeros((batch, 4 * h));
        dpre.slice_mut(s![.., 0..h])
            .assign(&(&d_i * &ctx.i.mapv(super::activation::dsigmoid_from_y)));
        dpre.slice_mut(s![.., h..2 * h])
            .assign(&(&d_f * &ctx.f.mapv(super::activation::dsigmoid_from_y)));
        dpre.slice_mut(s![.., 2 * h..3 * h])
            .assign(&(&d_g * &ctx.g.mapv(super::activation::dtanh_from_y)));
        dpre.slice_mut(s![.., 3 * h..4 * h])
            .assign(&(&d_o * &ctx.o.mapv(super::activation::dsigmoid_from_y)));

        general_mat_mul(1.0, &dpre.t(), &ctx.x, 1.0, &mut grads.mat_mut(self.wx));
        general_mat_mul(1.0, &dpre.t(), &ctx.h_prev, 1.0, &mut grads.mat_mut(self.wh));
        {
            let db = dpre.sum_axis(Axis(0));
            let mut gb = grads.vec_mut(self.b);
            gb += &db;
        }

        let mut dx = Array2::zeros((batch, self.in_dim));
        general_mat_mul(1.0, &dpre, &params.mat(self.wx), 0.0, &mut dx);
        let mut dh_prev = Array2::zeros((batch, h));
        general_mat_mul(1.0, &dpre, &params.mat(self.wh), 0.0, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}
