//! The attention network: tactile what-&-where fusion, a recurrent or
//! feedforward core, Gaussian location policy heads, classifier, and a scalar
//! baseline head.

mod backward;

pub use backward::OutputGrads;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use crate::nn::activation::{softmax_row, softplus};
use crate::nn::{Dense, Layout, Lstm, LstmState, ParamStore};
use crate::sim::{GlancePose, PRESSURE_DIM};
use crate::Error;

pub const POSE_DIM: usize = 2;
pub const N_CLASSES: usize = 4;
/// Width of every internal linear layer.
pub const FEATURE_WIDTH: usize = 64;
/// Width of the core output feeding the heads.
pub const CORE_WIDTH: usize = 256;

/// How pressure features and pose features are fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombinerMode {
    Multiply,
    Add,
    Concat1,
    #[default]
    Concat2,
}

impl CombinerMode {
    pub const ALL: [CombinerMode; 4] = [
        CombinerMode::Multiply,
        CombinerMode::Add,
        CombinerMode::Concat1,
        CombinerMode::Concat2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CombinerMode::Multiply => "elementwise-multiply",
            CombinerMode::Add => "elementwise-add",
            CombinerMode::Concat1 => "concat-1-layer",
            CombinerMode::Concat2 => "concat-2-layers",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            CombinerMode::Multiply => "multiply",
            CombinerMode::Add => "add",
            CombinerMode::Concat1 => "concat1",
            CombinerMode::Concat2 => "concat2",
        }
    }
}

impl FromStr for CombinerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "multiply" | "elementwise-multiply" => Ok(CombinerMode::Multiply),
            "add" | "elementwise-add" => Ok(CombinerMode::Add),
            "concat1" | "concat-1-layer" => Ok(CombinerMode::Concat1),
            "concat2" | "concat-2-layers" => Ok(CombinerMode::Concat2),
            other => Err(Error::config(format!("unknown combiner mode `{other}`"))),
        }
    }
}

/// Core architecture: recurrent memory or a stateless layer of equal width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoreVariant {
    #[default]
    Lstm,
    Mlp,
}

impl CoreVariant {
    pub fn key(self) -> &'static str {
        match self {
            CoreVariant::Lstm => "lstm",
            CoreVariant::Mlp => "mlp",
        }
    }
}

impl FromStr for CoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "lstm" => Ok(CoreVariant::Lstm),
            "mlp" => Ok(CoreVariant::Mlp),
            other => Err(Error::config(format!("unknown core variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelConfig {
    pub combiner: CombinerMode,
    pub core: CoreVariant,
}

enum Core {
    Lstm(Lstm),
    Mlp(Dense),
}

/// Layer handles over one flat parameter layout.
pub struct Model {
    config: ModelConfig,
    pressure_branch: Dense,
    pose_branch: Dense,
    fuse1: Option<Dense>,
    fuse2: Option<Dense>,
    core: Core,
    mu_trunk: Dense,
    mu_head: Dense,
    sigma_trunk: Dense,
    sigma_head: Dense,
    classifier: Dense,
    baseline: Dense,
    layout: Layout,
}

/// One glance's network inputs for a batch of episodes.
#[derive(Debug, Clone)]
pub struct GlanceInput {
    /// Normalized pressure vectors, [batch, 256].
    pub pressure: Array2<f64>,
    /// Pose with both coordinates scaled to [-1, 1], [batch, 2].
    pub pose: Array2<f64>,
}

enum CoreCtx {
    Lstm(crate::nn::lstm::LstmStepCtx),
    Mlp,
}

/// Everything one glance's forward pass computed, kept for backprop.
pub struct GlanceCtx {
    /// The network inputs this glance saw.
    pub input: GlanceInput,
    p_out: Array2<f64>,
    q_out: Array2<f64>,
    c1_out: Option<Array2<f64>>,
    c2_out: Option<Array2<f64>>,
    feature: Array2<f64>,
    core_ctx: CoreCtx,
    core_out: Array2<f64>,
    mu_trunk_out: Array2<f64>,
    sigma_trunk_out: Array2<f64>,
    /// Policy means in [-1, 1] per coordinate, [batch, 2].
    pub mu: Array2<f64>,
    sigma_pre: Array2<f64>,
    /// Policy standard deviations, strictly positive, [batch, 2].
    pub sigma: Array2<f64>,
    /// Class distributions, rows sum to 1, [batch, 4].
    pub dist: Array2<f64>,
    /// Baseline values, [batch].
    pub baseline: Array1<f64>,
}

impl GlanceCtx {
    pub fn batch(&self) -> usize {
        self.core_out.nrows()
    }

    pub fn core_out(&self) -> &Array2<f64> {
        &self.core_out
    }
}

/// Draws per coordinate before rejection sampling gives up.
pub const RESAMPLE_CAP: u32 = 1000;

/// Independent Gaussian policy over the normalized pose coordinates.
///
/// Index 0 is position, index 1 is orientation; both live in [-1, 1],
/// with orientation scaled by pi/2 only when a pose is executed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationPolicy {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

impl LocationPolicy {
    pub fn from_ctx(ctx: &GlanceCtx, row: usize) -> Self {
        Self {
            mu: [ctx.mu[[row, 0]], ctx.mu[[row, 1]]],
            sigma: [ctx.sigma[[row, 0]], ctx.sigma[[row, 1]]],
        }
    }

    /// Samples each coordinate from its Gaussian, redrawing until it lands in
    /// [-1, 1]. Returns the executable pose and the normalized draw.
    pub fn sample_pose<R: Rng>(&self, rng: &mut R) -> Result<(GlancePose, [f64; 2]), Error> {
        let qx = sample_coord(self.mu[0], self.sigma[0], rng)?.0;
        let qphi = sample_coord(self.mu[1], self.sigma[1], rng)?.0;
        Ok((GlancePose::new(qx, qphi * FRAC_PI_2), [qx, qphi]))
    }

    /// The deterministic pose at the distribution means.
    pub fn mean_pose(&self) -> (GlancePose, [f64; 2]) {
        (
            GlancePose::new(self.mu[0], self.mu[1] * FRAC_PI_2),
            self.mu,
        )
    }
}

fn sample_coord<R: Rng>(mu: f64, sigma: f64, rng: &mut R) -> Result<(f64, u32), Error> {
    for attempt in 1..=RESAMPLE_CAP {
        let z: f64 = rng.sample(StandardNormal);
        let q = mu + sigma * z;
        if (-1.0..=1.0).contains(&q) {
            return Ok((q, attempt));
        }
    }
    Err(Error::ResampleLimit {
        limit: RESAMPLE_CAP,
        mu,
        sigma,
    })
}

/// Row-wise argmax with ties broken toward the lower index.
pub fn argmax_rows(dist: &Array2<f64>) -> Vec<usize> {
    dist.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn relu_arr(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

fn relu_mask(out: &Array2<f64>) -> Array2<f64> {
    out.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

impl Model {
    pub fn new(config: ModelConfig) -> Self {
        let mut layout = Layout::new();
        let pressure_branch = Dense::new(&mut layout, "tactile.pressure", PRESSURE_DIM, FEATURE_WIDTH);
        let pose_branch = Dense::new(&mut layout, "tactile.pose", POSE_DIM, FEATURE_WIDTH);
        let (fuse1, fuse2) = match config.combiner {
            CombinerMode::Multiply | CombinerMode::Add => (None, None),
            CombinerMode::Concat1 => (
                Some(Dense::new(&mut layout, "tactile.fuse1", 2 * FEATURE_WIDTH, FEATURE_WIDTH)),
                None,
            ),
            CombinerMode::Concat2 => (
                Some(Dense::new(&mut layout, "tactile.fuse1", 2 * FEATURE_WIDTH, FEATURE_WIDTH)),
                Some(Dense::new(&mut layout, "tactile.fuse2", FEATURE_WIDTH, FEATURE_WIDTH)),
            ),
        };
        let core = match config.core {
            CoreVariant::Lstm => Core::Lstm(Lstm::new(&mut layout, "core.lstm", FEATURE_WIDTH, CORE_WIDTH)),
            CoreVariant::Mlp => Core::Mlp(Dense::new(&mut layout, "core.mlp", FEATURE_WIDTH, CORE_WIDTH)),
        };
        let mu_trunk = Dense::new(&mut layout, "loc.mu.trunk", CORE_WIDTH, FEATURE_WIDTH);
        let mu_head = Dense::new(&mut layout, "loc.mu.head", FEATURE_WIDTH, POSE_DIM);
        let sigma_trunk = Dense::new(&mut layout, "loc.sigma.trunk", CORE_WIDTH, FEATURE_WIDTH);
        let sigma_head = Dense::new(&mut layout, "loc.sigma.head", FEATURE_WIDTH, POSE_DIM);
        let classifier = Dense::new(&mut layout, "classifier", CORE_WIDTH, N_CLASSES);
        let baseline = Dense::new(&mut layout, "baseline", CORE_WIDTH, 1);

        Self {
            config,
            pressure_branch,
            pose_branch,
            fuse1,
            fuse2,
            core,
            mu_trunk,
            mu_head,
            sigma_trunk,
            sigma_head,
            classifier,
            baseline,
            layout,
        }
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.total_len()
    }

    /// He-normal weights, zero biases, in fixed block order.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore {
        let mut params = ParamStore::zeros(self.layout.clone());
        self.pressure_branch.init(&mut params, rng);
        self.pose_branch.init(&mut params, rng);
        if let Some(f) = &self.fuse1 {
            f.init(&mut params, rng);
        }
        if let Some(f) = &self.fuse2 {
            f.init(&mut params, rng);
        }
        match &self.core {
            Core::Lstm(l) => l.init(&mut params, rng),
            Core::Mlp(d) => d.init(&mut params, rng),
        }
        self.mu_trunk.init(&mut params, rng);
        self.mu_head.init(&mut params, rng);
        self.sigma_trunk.init(&mut params, rng);
        self.sigma_head.init(&mut params, rng);
        self.classifier.init(&mut params, rng);
        self.baseline.init(&mut params, rng);
        params
    }

    pub fn zero_state(&self, batch: usize) -> LstmState {
        LstmState::zeros(batch, CORE_WIDTH)
    }

    /// Names of the blocks belonging to the location branch.
    pub fn location_block_names(&self) -> Vec<&str> {
        self.layout
            .blocks()
            .iter()
            .map(|b| b.name.as_str())
            .filter(|n| n.starts_with("loc."))
            .collect()
    }

    /// Name prefix of the baseline head block.
    pub fn baseline_block_names(&self) -> Vec<&str> {
        self.layout
            .blocks()
            .iter()
            .map(|b| b.name.as_str())
            .filter(|n| n.starts_with("baseline"))
            .collect()
    }

    fn tactile_forward(
        &self,
        params: &ParamStore,
        pressure: &ArrayView2<f64>,
        pose: &ArrayView2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Option<Array2<f64>>, Option<Array2<f64>>, Array2<f64>) {
        let p_out = relu_arr(self.pressure_branch.forward(params, pressure));
        let q_out = relu_arr(self.pose_branch.forward(params, pose));
        match self.config.combiner {
            CombinerMode::Multiply => {
                let out = &p_out * &q_out;
                (p_out, q_out, None, None, out)
            }
            CombinerMode::Add => {
                let out = &p_out + &q_out;
                (p_out, q_out, None, None, out)
            }
            CombinerMode::Concat1 => {
                let cat = concatenate![Axis(1), p_out.view(), q_out.view()];
                let c1 = relu_arr(self.fuse1.as_ref().expect("concat1 layer").forward(params, &cat.view()));
                let out = c1.clone();
                (p_out, q_out, Some(c1), None, out)
            }
            CombinerMode::Concat2 => {
                let cat = concatenate![Axis(1), p_out.view(), q_out.view()];
                let c1 = relu_arr(self.fuse1.as_ref().expect("concat layer 1").forward(params, &cat.view()));
                let c2 = relu_arr(self.fuse2.as_ref().expect("concat layer 2").forward(params, &c1.view()));
                let out = c2.clone();
                (p_out, q_out, Some(c1), Some(c2), out)
            }
        }
    }

    /// Advances one glance for a batch, returning the full forward context
    /// and the next recurrent state (unchanged for the mlp core).
    pub fn glance_forward(
        &self,
        params: &ParamStore,
        input: GlanceInput,
        state: &LstmState,
    ) -> (GlanceCtx, LstmState) {
        let batch = input.pressure.nrows();
        assert_eq!(input.pressure.ncols(), PRESSURE_DIM, "pressure width mismatch");
        assert_eq!(input.pose.dim(), (batch, POSE_DIM), "pose shape mismatch");

        let (p_out, q_out, c1_out, c2_out, feature) =
            self.tactile_forward(params, &input.pressure.view(), &input.pose.view());

        let (core_ctx, core_out, next_state) = match &self.core {
            Core::Lstm(lstm) => {
                let (ctx, next) = lstm.forward_step(params, &feature.view(), state);
                let out = next.h.clone();
                (CoreCtx::Lstm(ctx), out, next)
            }
            Core::Mlp(dense) => {
                let out = relu_arr(dense.forward(params, &feature.view()));
                (CoreCtx::Mlp, out, state.clone())
            }
        };

        let mu_trunk_out = relu_arr(self.mu_trunk.forward(params, &core_out.view()));
        let mu = self
            .mu_head
            .forward(params, &mu_trunk_out.view())
            .mapv_into(f64::tanh);
        let sigma_trunk_out = relu_arr(self.sigma_trunk.forward(params, &core_out.view()));
        let sigma_pre = self.sigma_head.forward(params, &sigma_trunk_out.view());
        let sigma = sigma_pre.mapv(softplus);

        let mut dist = self.classifier.forward(params, &core_out.view());
        for mut row in dist.rows_mut() {
            softmax_row(row.as_slice_mut().expect("contiguous row"));
        }
        let baseline = self
            .baseline
            .forward(params, &core_out.view())
            .index_axis(Axis(1), 0)
            .to_owned();

        let ctx = GlanceCtx {
            input,
            p_out,
            q_out,
            c1_out,
            c2_out,
            feature,
            core_ctx,
            core_out,
            mu_trunk_out,
            sigma_trunk_out,
            mu,
            sigma_pre,
            sigma,
            dist,
            baseline,
        };
        (ctx, next_state)
    }

    /// Applies just the baseline head to given core features. The head is
    /// trained on detached features, so its loss is a function of these
    /// values, not of the rest of the network.
    pub fn baseline_value(&self, params: &ParamStore, core_out: &ArrayView2<f64>) -> Array1<f64> {
        self.baseline
            .forward(params, core_out)
            .index_axis(Axis(1), 0)
            .to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn random_input(batch: usize, seed: u64) -> GlanceInput {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pressure = Array2::zeros((batch, PRESSURE_DIM));
        pressure.mapv_inplace(|_| rng.random::<f64>());
        for mut row in pressure.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.mapv_inplace(|v| v / norm);
        }
        let mut pose = Array2::zeros((batch, POSE_DIM));
        pose.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        GlanceInput { pressure, pose }
    }

    #[test]
    fn zero_params_give_uniform_distribution_and_default_policy() {
        let model = Model::new(ModelConfig::default());
        let params = ParamStore::zeros(model.layout().clone());
        let (ctx, _) = model.glance_forward(&params, random_input(3, 1), &model.zero_state(3));
        for row in ctx.dist.rows() {
            for &v in row {
                assert_relative_eq!(v, 0.25, epsilon = 1e-15);
            }
        }
        assert_eq!(argmax_rows(&ctx.dist), vec![0, 0, 0]);
        for &m in ctx.mu.iter() {
            assert_eq!(m, 0.0);
        }
        for &s in ctx.sigma.iter() {
            assert_relative_eq!(s, 2.0_f64.ln(), epsilon = 1e-15);
        }
        for &b in ctx.baseline.iter() {
            assert_eq!(b, 0.0);
        }
    }

    #[test]
    fn add_mode_with_dead_pose_branch_passes_pressure_features() {
        let model = Model::new(ModelConfig {
            combiner: CombinerMode::Add,
            core: CoreVariant::Lstm,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = model.init_params(&mut rng);
        for name in ["tactile.pose.w", "tactile.pose.b"] {
            let id = model.layout().id_by_name(name).unwrap();
            params.slice_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let input = random_input(2, 2);
        let (ctx, _) = model.glance_forward(&params, input, &model.zero_state(2));
        assert!(ctx.q_out.iter().all(|&v| v == 0.0));
        assert_eq!(ctx.feature, ctx.p_out);
    }

    #[test]
    fn multiply_mode_with_dead_pose_branch_annihilates_features() {
        let model = Model::new(ModelConfig {
            combiner: CombinerMode::Multiply,
            core: CoreVariant::Lstm,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = model.init_params(&mut rng);
        for name in ["tactile.pose.w", "tactile.pose.b"] {
            let id = model.layout().id_by_name(name).unwrap();
            params.slice_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let (ctx, _) = model.glance_forward(&params, random_input(2, 3), &model.zero_state(2));
        assert!(ctx.feature.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_core_is_stateless_and_lstm_core_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Model::new(ModelConfig {
            combiner: CombinerMode::Concat2,
            core: CoreVariant::Mlp,
        });
        let params = mlp.init_params(&mut rng);
        let input = random_input(2, 4);
        let (c1, s1) = mlp.glance_forward(&params, input.clone(), &mlp.zero_state(2));
        let (c2, _) = mlp.glance_forward(&params, input.clone(), &s1);
        assert_eq!(c1.dist, c2.dist);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lstm = Model::new(ModelConfig::default());
        let params = lstm.init_params(&mut rng);
        let (d1, t1) = lstm.glance_forward(&params, input.clone(), &lstm.zero_state(2));
        let (d2, _) = lstm.glance_forward(&params, input, &t1);
        assert_ne!(d1.dist, d2.dist);
    }

    #[test]
    fn lstm_order_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = Model::new(ModelConfig::default());
        let params = model.init_params(&mut rng);
        let a = random_input(1, 21);
        let b = random_input(1, 22);

        let run = |first: &GlanceInput, second: &GlanceInput| {
            let (_, s1) = model.glance_forward(&params, first.clone(), &model.zero_state(1));
            let (ctx, _) = model.glance_forward(&params, second.clone(), &s1);
            ctx.dist.clone()
        };
        assert_ne!(run(&a, &b), run(&b, &a));
    }

    #[test]
    fn sigma_strictly_positive_and_mu_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = Model::new(ModelConfig::default());
        let params = model.init_params(&mut rng);
        let (ctx, _) = model.glance_forward(&params, random_input(8, 9), &model.zero_state(8));
        assert!(ctx.sigma.iter().all(|&s| s > 0.0));
        assert!(ctx.mu.iter().all(|&m| (-1.0..=1.0).contains(&m)));
        for row in ctx.dist.rows() {
            assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn parameter_counts_per_configuration() {
        let count = |combiner, core| {
            Model::new(ModelConfig { combiner, core }).parameter_count()
        };
        assert_eq!(count(CombinerMode::Concat2, CoreVariant::Lstm), 392_201);
        assert_eq!(count(CombinerMode::Concat1, CoreVariant::Lstm), 388_041);
        assert_eq!(count(CombinerMode::Add, CoreVariant::Lstm), 379_785);
        assert_eq!(count(CombinerMode::Multiply, CoreVariant::Lstm), 379_785);
        assert_eq!(count(CombinerMode::Concat2, CoreVariant::Mlp), 80_137);
    }

    #[test]
    fn argmax_breaks_ties_toward_lower_index() {
        let dist = ndarray::array![[0.25, 0.25, 0.25, 0.25], [0.1, 0.4, 0.4, 0.1]];
        assert_eq!(argmax_rows(&dist), vec![0, 1]);
    }

    #[test]
    fn degenerate_policy_returns_its_mean() {
        let policy = LocationPolicy {
            mu: [0.3, -0.5],
            sigma: [0.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (pose, q) = policy.sample_pose(&mut rng).unwrap();
        assert_eq!(q, [0.3, -0.5]);
        assert_eq!(pose.x(), 0.3);
        assert_relative_eq!(pose.phi(), -0.5 * FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn sampled_poses_stay_in_bounds_with_unit_acceptance_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut draws = 0u64;
        let n = 100_000;
        for _ in 0..n {
            let (q, attempts) = sample_coord(0.0, 1.0, &mut rng).unwrap();
            assert!((-1.0..=1.0).contains(&q));
            draws += attempts as u64;
        }
        // Acceptance per draw is Phi(1) - Phi(-1) = 0.6827.
        let acceptance = n as f64 / draws as f64;
        assert!(
            (acceptance - 0.6827).abs() < 0.01,
            "acceptance {acceptance}"
        );
    }

    #[test]
    fn hopeless_policy_hits_the_resample_cap() {
        let policy = LocationPolicy {
            mu: [5.0, 0.0],
            sigma: [1e-3, 1e-3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match policy.sample_pose(&mut rng) {
            Err(Error::ResampleLimit { limit, .. }) => assert_eq!(limit, RESAMPLE_CAP),
            other => panic!("expected resample-limit error, got {other:?}"),
        }
    }
}
