use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::init::he_normal;
use super::params::{BlockId, Layout, ParamStore};

/// Affine layer `y = x W^T + b` over batched rows.
///
/// Activations are applied by the caller so pre-activations stay available
/// for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    w: BlockId,
    b: BlockId,
    in_dim: usize,
    out_dim: usize,
}

impl Dense {
    pub fn new(layout: &mut Layout, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = layout.add(&format!("{name}.w"), &[out_dim, in_dim]);
        let b = layout.add(&format!("{name}.b"), &[out_dim]);
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng>(&self, params: &mut ParamStore, rng: &mut R) {
        he_normal(params, self.w, self.in_dim, rng);
        params.slice_mut(self.b).iter_mut().for_each(|v| *v = 0.0);
    }

    /// `x`: [batch, in] -> [batch, out], always in standard row-major layout.
    pub fn forward(&self, params: &ParamStore, x: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.in_dim, "dense input width mismatch");
        let mut y = Array2::zeros((x.nrows(), self.out_dim));
        y += &params.vec(self.b);
        general_mat_mul(1.0, x, &params.mat(self.w).t(), 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    ///
    /// `x` must be the same batch the forward pass saw; `dy`: [batch, out].
    pub fn backward(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        x: &ArrayView2<f64>,
        dy: &ArrayView2<f64>,
    ) -> Array2<f64> {
        assert_eq!(x.ncols(), self.in_dim, "dense input width mismatch");
        assert_eq!(dy.ncols(), self.out_dim, "dense grad width mismatch");
        assert_eq!(x.nrows(), dy.nrows(), "dense batch mismatch");

        general_mat_mul(1.0, &dy.t(), x, 1.0, &mut grads.mat_mut(self.w));
        let db = dy.sum_axis(Axis(0));
        let mut gb = grads.vec_mut(self.b);
        gb += &db;

        let mut dx = Array2::zeros((dy.nrows(), self.in_dim));
        general_mat_mul(1.0, dy, &params.mat(self.w), 0.0, &mut dx);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    /// Triple-loop affine oracle, independent of ndarray's gemm path.
    fn affine_oracle(x: &Array2<f64>, w: &Array2<f64>, b: &[f64]) -> Array2<f64> {
        let (n, in_dim) = x.dim();
        let out_dim = w.nrows();
        let mut y = Array2::zeros((n, out_dim));
        for i in 0..n {
            for o in 0..out_dim {
                let mut acc = b[o];
                for k in 0..in_dim {
                    acc += x[[i, k]] * w[[o, k]];
                }
                y[[i, o]] = acc;
            }
        }
        y
    }

    fn fixture() -> (Dense, ParamStore) {
        let mut layout = Layout::new();
        let dense = Dense::new(&mut layout, "fc", 3, 2);
        let mut params = ParamStore::zeros(layout);
        params
            .values_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64 * 0.37 - 1.1).sin());
        (dense, params)
    }

    #[test]
    fn forward_matches_triple_loop_oracle() {
        let (dense, params) = fixture();
        let x = array![[0.5, -1.0, 2.0], [1.5, 0.25, -0.75], [0.0, 0.0, 0.0]];
        let got = dense.forward(&params, &x.view());
        let w = params.mat(params.layout().id_by_name("fc.w").unwrap()).to_owned();
        let b = params.slice(params.layout().id_by_name("fc.b").unwrap()).to_vec();
        let want = affine_oracle(&x, &w, &b);
        for (g, w) in got.iter().zip(want.iter()) {
            assert_relative_eq!(g, w, epsilon = 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (dense, mut params) = fixture();
        let x = array![[0.3, -0.8, 1.2], [-0.4, 0.9, 0.1]];
        // Loss = sum of coeff-weighted outputs; dy is the coefficient matrix.
        let coeff = array![[1.0, -2.0], [0.5, 0.25]];
        let loss = |p: &ParamStore| (dense.forward(p, &x.view()) * &coeff).sum();

        let mut grads = params.like();
        let dx = dense.backward(&params, &mut grads, &x.view(), &coeff.view());

        let eps = 1e-6;
        for i in 0..params.len() {
            let orig = params.values()[i];
            params.values_mut()[i] = orig + eps;
            let up = loss(&params);
            params.values_mut()[i] = orig - eps;
            let down = loss(&params);
            params.values_mut()[i] = orig;
            let num = (up - down) / (2.0 * eps);
            assert_relative_eq!(grads.values()[i], num, epsilon = 1e-8);
        }

        // Input gradient via finite differences on x.
        let mut x2 = x.clone();
        for i in 0..x2.nrows() {
            for j in 0..x2.ncols() {
                let orig = x2[[i, j]];
                x2[[i, j]] = orig + eps;
                let up = (dense.forward(&params, &x2.view()) * &coeff).sum();
                x2[[i, j]] = orig - eps;
                let down = (dense.forward(&params, &x2.view()) * &coeff).sum();
                x2[[i, j]] = orig;
                assert_relative_eq!(dx[[i, j]], (up - down) / (2.0 * eps), epsilon = 1e-8);
            }
        }
    }

    #[test]
    #[should_panic(expected = "dense input width mismatch")]
    fn wrong_input_width_panics() {
        let (dense, params) = fixture();
        let x = Array2::<f64>::zeros((1, 4));
        dense.forward(&params, &x.view());
    }
}
