//! Measurement protocol: repeated training runs, accuracy reports with
//! standard errors, per-glance curves, and pose-visit heat-maps.

mod heatmap;

pub use heatmap::{build_heatmap, HeatmapBundle, HeatmapGrid, HEATMAP_BINS};

use ndarray::Array1;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::str::FromStr;

use crate::model::{argmax_rows, CombinerMode, CoreVariant, Model, ModelConfig};
use crate::nn::ParamStore;
use crate::sim::GlanceSource;
use crate::trainer::{
    self, batch_accuracy, visit_batches, PoseSelection, Rollout, RolloutPlan, StreamKey,
    StreamPurpose, TrainConfig,
};
use crate::{Error, Result};

/// Episodes per evaluation batch.
pub const EVAL_BATCH: usize = 64;
/// Fresh batches per accuracy measurement.
pub const EVAL_BATCHES: usize = 100;

/// Maps completed episodes to final class predictions.
pub trait Scorer {
    fn predict(&self, rollout: &Rollout) -> Vec<usize>;
}

/// The plain protocol: argmax of the last glance's distribution.
pub struct FinalGlance;

impl Scorer for FinalGlance {
    fn predict(&self, rollout: &Rollout) -> Vec<usize> {
        rollout.predictions.clone()
    }
}

/// Argmax of the unweighted mean of all per-glance distributions.
pub struct Averaged;

impl Scorer for Averaged {
    fn predict(&self, rollout: &Rollout) -> Vec<usize> {
        let mut sum = rollout.glances[0].dist.clone();
        for ctx in &rollout.glances[1..] {
            sum += &ctx.dist;
        }
        // argmax(sum) = argmax(sum / S)
        argmax_rows(&sum)
    }
}

/// Averages one episode's per-glance class distributions and takes the argmax.
pub fn averaged_prediction(dists: &[Array1<f64>]) -> Result<usize> {
    if dists.is_empty() {
        return Err(Error::config("no distributions to average"));
    }
    let mut mean = dists[0].clone();
    for d in &dists[1..] {
        mean += d;
    }
    mean /= dists.len() as f64;
    let mut best = 0;
    for (i, &v) in mean.iter().enumerate() {
        if v > mean[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Accuracy of `scorer` over `n_batches` fresh batches.
pub fn scored_accuracy<S: Scorer>(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    plan: RolloutPlan,
    n_batches: usize,
    key: StreamKey,
    scorer: &S,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    visit_batches(model, params, env, plan, n_batches, key, |rollout| {
        for (p, l) in scorer.predict(rollout).iter().zip(&rollout.labels) {
            correct += usize::from(*p == l.index());
        }
        total += rollout.batch();
    })?;
    Ok(correct as f64 / total as f64)
}

/// The reference protocol: 100 batches of 64 fresh episodes, final-glance
/// predictions under the current policy.
pub fn measure_accuracy(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    n_glances: usize,
    selection: PoseSelection,
    key: StreamKey,
) -> Result<f64> {
    batch_accuracy(
        model,
        params,
        env,
        RolloutPlan::new(n_glances, EVAL_BATCH, selection),
        EVAL_BATCHES,
        key,
    )
}

/// Accuracy of the prediction available after each glance, same episodes.
pub fn per_glance_accuracy(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    plan: RolloutPlan,
    n_batches: usize,
    key: StreamKey,
) -> Result<Vec<f64>> {
    let mut correct = vec![0usize; plan.n_glances];
    let mut total = 0usize;
    visit_batches(model, params, env, plan, n_batches, key, |rollout| {
        for (g, ctx) in rollout.glances.iter().enumerate() {
            for (p, l) in argmax_rows(&ctx.dist).iter().zip(&rollout.labels) {
                correct[g] += usize::from(*p == l.index());
            }
        }
        total += rollout.batch();
    })?;
    Ok(correct.iter().map(|&c| c as f64 / total as f64).collect())
}

/// The four evaluated model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Learned location policy, recurrent core.
    Full,
    /// Uniform random poses, classification update only.
    Rloc,
    /// Stateless core, learned policy, final-glance scoring.
    Mlp,
    /// Stateless core scored by the averaged per-glance prediction.
    MlpAveraged,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::Rloc,
        Variant::Mlp,
        Variant::MlpAveraged,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Rloc => "rloc",
            Variant::Mlp => "mlp",
            Variant::MlpAveraged => "mlp-averaged",
        }
    }

    fn core(self) -> CoreVariant {
        match self {
            Variant::Full | Variant::Rloc => CoreVariant::Lstm,
            Variant::Mlp | Variant::MlpAveraged => CoreVariant::Mlp,
        }
    }

    /// The variant's model with an explicit combiner choice.
    pub fn model_config(self, combiner: CombinerMode) -> ModelConfig {
        ModelConfig {
            combiner,
            core: self.core(),
        }
    }

    /// Training-config adjustments the variant mandates.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        if self == Variant::Rloc {
            cfg.uniform_policy = true;
            cfg.location_weight = 0.0;
        }
        cfg
    }

    /// Rejects model configurations the variant cannot score.
    pub fn check_model(self, config: ModelConfig) -> Result<()> {
        match self {
            Variant::Full | Variant::Rloc if config.core != CoreVariant::Lstm => Err(
                Error::config(format!("variant `{}` needs the lstm core", self.key())),
            ),
            Variant::Mlp | Variant::MlpAveraged if config.core != CoreVariant::Mlp => Err(
                Error::config(format!("variant `{}` needs the mlp core", self.key())),
            ),
            _ => Ok(()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "rloc" => Ok(Variant::Rloc),
            "mlp" => Ok(Variant::Mlp),
            "mlp-averaged" | "mlp_averaged" => Ok(Variant::MlpAveraged),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Best-snapshot accuracies over independently seeded repeats.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    pub variant: String,
    pub glances: usize,
    pub repeats: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
    pub config_hash: String,
}

impl AccuracyReport {
    fn from_scores(variant: &str, glances: usize, scores: Vec<f64>, config_hash: String) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let sem = if scores.len() > 1 {
            let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self {
            variant: variant.to_owned(),
            glances,
            repeats: scores,
            mean,
            sem,
            config_hash,
        }
    }
}

/// Content hash of a training configuration, for report provenance.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn repeat_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(repeat as u64)
}

/// Trains `repeats` independently seeded runs of `variant` and reports the
/// per-repeat best snapshot accuracy as mean and standard error.
///
/// `model_config` overrides the combiner (the core must match the variant);
/// repeats share seed derivation across variants so matched comparisons use
/// matched episode streams.
pub fn run_variant(
    variant: Variant,
    model_config: Option<ModelConfig>,
    base: &TrainConfig,
    env: &dyn GlanceSource,
    repeats: usize,
    mut on_repeat: impl FnMut(usize, f64),
) -> Result<AccuracyReport> {
    let config = model_config.unwrap_or_else(|| variant.model_config(Default::default()));
    variant.check_model(config)?;
    let model = Model::new(config);
    let cfg = variant.apply(base);
    let hash = config_hash(&cfg);

    let mut scores = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let run_cfg = TrainConfig {
            seed: repeat_seed(base.seed, r),
            ..cfg.clone()
        };
        let outcome = trainer::train(&model, env, &run_cfg, |_| {})?;
        let score = match variant {
            Variant::MlpAveraged => scored_accuracy(
                &model,
                &outcome.best_params,
                env,
                RolloutPlan::new(run_cfg.glances, run_cfg.batch_size, PoseSelection::Policy),
                run_cfg.snapshot_batches,
                StreamKey {
                    seed: run_cfg.seed,
                    nonce: outcome.best_step as u64,
                    purpose: StreamPurpose::Eval,
                },
                &Averaged,
            )?,
            _ => outcome.best_accuracy,
        };
        on_repeat(r, score);
        scores.push(score);
    }
    Ok(AccuracyReport::from_scores(
        variant.key(),
        base.glances,
        scores,
        hash,
    ))
}

/// Trains the stateless-core runs once and scores them both ways.
///
/// Returns (plain, averaged); the training work is shared, matching the fact
/// that the averaged variant is the same network read differently.
pub fn run_mlp_pair(
    config: ModelConfig,
    base: &TrainConfig,
    env: &dyn GlanceSource,
    repeats: usize,
    mut on_repeat: impl FnMut(usize, f64, f64),
) -> Result<(AccuracyReport, AccuracyReport)> {
    Variant::MlpAveraged.check_model(config)?;
    let model = Model::new(config);
    let hash = config_hash(base);

    let mut plain = Vec::with_capacity(repeats);
    let mut averaged = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let run_cfg = TrainConfig {
            seed: repeat_seed(base.seed, r),
            ..base.clone()
        };
        let outcome = trainer::train(&model, env, &run_cfg, |_| {})?;
        let avg = scored_accuracy(
            &model,
            &outcome.best_params,
            env,
            RolloutPlan::new(run_cfg.glances, run_cfg.batch_size, PoseSelection::Policy),
            run_cfg.snapshot_batches,
            StreamKey {
                seed: run_cfg.seed,
                nonce: outcome.best_step as u64,
                purpose: StreamPurpose::Eval,
            },
            &Averaged,
        )?;
        on_repeat(r, outcome.best_accuracy, avg);
        plain.push(outcome.best_accuracy);
        averaged.push(avg);
    }
    Ok((
        AccuracyReport::from_scores(Variant::Mlp.key(), base.glances, plain, hash.clone()),
        AccuracyReport::from_scores(Variant::MlpAveraged.key(), base.glances, averaged, hash),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::LiveSim;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Oracle;

    impl Scorer for Oracle {
        fn predict(&self, rollout: &Rollout) -> Vec<usize> {
            rollout.labels.iter().map(|l| l.index()).collect()
        }
    }

    fn eval_key(seed: u64) -> StreamKey {
        StreamKey {
            seed,
            nonce: 0,
            purpose: StreamPurpose::Eval,
        }
    }

    fn fresh(seed: u64) -> (Model, ParamStore) {
        let model = Model::new(ModelConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = model.init_params(&mut rng);
        (model, params)
    }

    #[test]
    fn oracle_scorer_reaches_perfect_accuracy() {
        let (model, params) = fresh(1);
        let acc = scored_accuracy(
            &model,
            &params,
            &LiveSim,
            RolloutPlan::new(2, 16, PoseSelection::Policy),
            2,
            eval_key(5),
            &Oracle,
        )
        .unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn final_glance_scorer_matches_batch_accuracy() {
        let (model, params) = fresh(2);
        let plan = RolloutPlan::new(2, 32, PoseSelection::Policy);
        let a = scored_accuracy(&model, &params, &LiveSim, plan, 3, eval_key(6), &FinalGlance)
            .unwrap();
        let b = batch_accuracy(&model, &params, &LiveSim, plan, 3, eval_key(6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn averaged_prediction_hand_example() {
        let dists = [array![0.6, 0.4, 0.0, 0.0], array![0.1, 0.9, 0.0, 0.0]];
        assert_eq!(averaged_prediction(&dists).unwrap(), 1);
        assert_eq!(averaged_prediction(&dists[..1]).unwrap(), 0);
        assert!(averaged_prediction(&[]).is_err());
    }

    #[test]
    fn averaged_scorer_agrees_with_per_episode_averaging() {
        let (model, params) = fresh(3);
        let chunks = trainer::rollout_batch(
            &model,
            &params,
            &LiveSim,
            RolloutPlan::new(3, 8, PoseSelection::Policy),
            eval_key(7),
        )
        .unwrap();
        let rollout = &chunks[0];
        let batch_preds = Averaged.predict(rollout);
        for i in 0..rollout.batch() {
            let dists: Vec<Array1<f64>> = rollout
                .glances
                .iter()
                .map(|g| g.dist.row(i).to_owned())
                .collect();
            assert_eq!(batch_preds[i], averaged_prediction(&dists).unwrap());
        }
    }

    #[test]
    fn per_glance_accuracy_ends_at_the_final_measurement() {
        let (model, params) = fresh(4);
        let plan = RolloutPlan::new(3, 16, PoseSelection::Policy);
        let curve =
            per_glance_accuracy(&model, &params, &LiveSim, plan, 2, eval_key(8)).unwrap();
        assert_eq!(curve.len(), 3);
        let last = batch_accuracy(&model, &params, &LiveSim, plan, 2, eval_key(8)).unwrap();
        assert_eq!(curve[2], last);
        // Fresh model: every glance sits near chance.
        for &a in &curve {
            assert!((0.0..=0.6).contains(&a), "accuracy {a}");
        }
    }

    #[test]
    fn report_statistics_are_mean_and_sample_sem() {
        let report = AccuracyReport::from_scores(
            "full",
            3,
            vec![0.8, 0.9, 0.7, 0.85, 0.75],
            "h".into(),
        );
        assert_relative_eq!(report.mean, 0.8, epsilon = 1e-12);
        // sample std = sqrt(0.025 / 4) = 0.0790569, sem = std / sqrt(5)
        assert_relative_eq!(report.sem, 0.0790569415 / 5f64.sqrt(), epsilon = 1e-9);
        assert_eq!(report.repeats.len(), 5);

        let single = AccuracyReport::from_scores("full", 3, vec![0.5], "h".into());
        assert_eq!(single.sem, 0.0);
    }

    #[test]
    fn variant_model_conflicts_are_rejected() {
        let lstm = ModelConfig::default();
        let mlp = ModelConfig {
            combiner: Default::default(),
            core: CoreVariant::Mlp,
        };
        assert!(Variant::MlpAveraged.check_model(lstm).is_err());
        assert!(Variant::Mlp.check_model(lstm).is_err());
        assert!(Variant::Full.check_model(mlp).is_err());
        assert!(Variant::MlpAveraged.check_model(mlp).is_ok());
        assert!(Variant::Full.check_model(lstm).is_ok());
        let err = run_variant(
            Variant::MlpAveraged,
            Some(lstm),
            &TrainConfig::default(),
            &LiveSim,
            1,
            |_, _| {},
        );
        assert!(err.is_err());
        assert!(run_mlp_pair(lstm, &TrainConfig::default(), &LiveSim, 1, |_, _, _| {}).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.key().parse::<Variant>().unwrap(), v);
        }
        assert!("gru".parse::<Variant>().is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 43;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn tiny_variant_runs_produce_matched_first_glance_rows() {
        // At S = 1 the full and rloc variants are the same computation.
        let base = TrainConfig {
            batch_size: 8,
            glances: 1,
            total_steps: 2,
            snapshot_interval: 1,
            snapshot_batches: 1,
            seed: 11,
            ..TrainConfig::default()
        };
        let full =
            run_variant(Variant::Full, None, &base, &LiveSim, 2, |_, _| {}).unwrap();
        let rloc =
            run_variant(Variant::Rloc, None, &base, &LiveSim, 2, |_, _| {}).unwrap();
        assert_eq!(full.repeats, rloc.repeats);
        assert_eq!(full.mean, rloc.mean);
    }

    #[test]
    fn mlp_pair_shares_training_and_scores_both_ways() {
        let base = TrainConfig {
            batch_size: 8,
            glances: 2,
            total_steps: 2,
            snapshot_interval: 1,
            snapshot_batches: 1,
            seed: 13,
            ..TrainConfig::default()
        };
        let mlp = Variant::Mlp.model_config(CombinerMode::Concat2);
        let mut seen = Vec::new();
        let (plain, avg) = run_mlp_pair(mlp, &base, &LiveSim, 2, |r, p, a| {
            seen.push((r, p, a));
        })
        .unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(plain.variant, "mlp");
        assert_eq!(avg.variant, "mlp-averaged");
        assert_eq!(plain.repeats.len(), 2);
        // The plain column must agree with run_variant on the same base.
        let solo = run_variant(Variant::Mlp, None, &base, &LiveSim, 2, |_, _| {}).unwrap();
        assert_eq!(plain.repeats, solo.repeats);
    }
}
