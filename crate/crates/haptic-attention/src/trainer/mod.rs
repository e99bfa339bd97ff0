//! The training loop: fresh episode batches every step, the hybrid update,
//! the separately supervised baseline, and periodic accuracy snapshots.

pub mod gradient;
pub mod rollout;

pub use gradient::{eligibility_mu, eligibility_sigma, location_injection};
pub use rollout::{
    batch_accuracy, episode_rng, rollout_batch, visit_batches, PoseSelection, Rollout,
    RolloutPlan, StreamKey, StreamPurpose,
};

use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::nn::{LrSchedule, NesterovSgd, ParamStore};
use crate::sim::GlanceSource;
use crate::{Error, Result};

/// Hyperparameters and run controls.
///
/// Defaults are the reference settings; `glances` and `total_steps` vary per
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub glances: usize,
    pub lr_initial: f64,
    pub lr_decay: f64,
    pub lr_period: f64,
    pub lr_min: f64,
    pub momentum: f64,
    /// Location weight beta: share of the update devoted to the pose policy.
    pub location_weight: f64,
    pub discount: f64,
    pub total_steps: usize,
    pub seed: u64,
    /// Steps between accuracy snapshots.
    pub snapshot_interval: usize,
    /// Fresh evaluation batches per snapshot.
    pub snapshot_batches: usize,
    /// Apply the cross-entropy term at every glance instead of the last only.
    pub ce_all_glances: bool,
    /// Train and evaluate with uniformly random poses (no location policy).
    pub uniform_policy: bool,
    /// Optional global-norm gradient clip; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            glances: 3,
            lr_initial: 8e-4,
            lr_decay: 0.97,
            lr_period: 800.0,
            lr_min: 1e-6,
            momentum: 0.9,
            location_weight: 0.4,
            discount: 1.0,
            total_steps: 50_000,
            seed: 42,
            snapshot_interval: 500,
            snapshot_batches: 100,
            ce_all_glances: false,
            uniform_policy: false,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(msg.to_owned()));
        if self.batch_size == 0 || self.glances == 0 || self.total_steps == 0 {
            return bad("batch size, glances, and total steps must be positive");
        }
        if self.snapshot_interval == 0 || self.snapshot_batches == 0 {
            return bad("snapshot interval and batches must be positive");
        }
        if !(self.lr_initial > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_initial) {
            return bad("learning rates must satisfy 0 < min <= initial");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || !(self.lr_period > 0.0) {
            return bad("lr decay must lie in (0, 1] with a positive period");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.location_weight) {
            return bad("location weight must lie in [0, 1]");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if self.uniform_policy && self.location_weight != 0.0 {
            return bad("uniform-policy training requires location weight 0");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("gradient clip must be positive");
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            alpha0: self.lr_initial,
            decay: self.lr_decay,
            period: self.lr_period,
            floor: self.lr_min,
        }
    }

    fn selection(&self) -> PoseSelection {
        if self.uniform_policy {
            PoseSelection::Uniform
        } else {
            PoseSelection::Policy
        }
    }
}

/// One training step's log record; `accuracy` is set on snapshot steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub mean_reward: f64,
    pub baseline_loss: f64,
    pub accuracy: Option<f64>,
}

/// Final state of a completed run.
pub struct TrainOutcome {
    pub final_params: ParamStore,
    pub best_params: ParamStore,
    pub best_accuracy: f64,
    pub best_step: usize,
    pub log: Vec<LogRow>,
}

/// Runs the full training loop. `on_row` observes every step's log record.
pub fn train(
    model: &Model,
    env: &dyn GlanceSource,
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init_rng = episode_rng(
        StreamKey {
            seed: cfg.seed,
            nonce: 0,
            purpose: StreamPurpose::Init,
        },
        0,
    );
    let mut params = model.init_params(&mut init_rng);
    let mut opt = NesterovSgd::new(&params, cfg.momentum);
    let sched = cfg.schedule();
    let selection = cfg.selection();

    let mut log = Vec::with_capacity(cfg.total_steps);
    let mut best_params = params.clone();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_step = 0;

    let plan = RolloutPlan::new(cfg.glances, cfg.batch_size, selection);
    for step in 0..cfg.total_steps {
        let lr = sched.at(step as u64);
        let chunks = rollout_batch(
            model,
            &params,
            env,
            plan,
            StreamKey {
                seed: cfg.seed,
                nonce: step as u64,
                purpose: StreamPurpose::Train,
            },
        )?;

        let mut grads = params.like();
        let mut reward_sum = 0.0;
        let mut baseline_loss = 0.0;
        for chunk in &chunks {
            gradient::accumulate_hybrid(
                model,
                &params,
                chunk,
                cfg.location_weight,
                cfg.ce_all_glances,
                cfg.batch_size,
                &mut grads,
            )?;
            baseline_loss += gradient::accumulate_baseline(
                model,
                &params,
                chunk,
                cfg.discount,
                cfg.batch_size,
                &mut grads,
            );
            reward_sum += chunk.rewards.iter().sum::<f64>();
        }
        baseline_loss /= cfg.batch_size as f64;
        if let Some(max_norm) = cfg.grad_clip {
            gradient::clip_global_norm(&mut grads, max_norm);
        }
        opt.step(&mut params, &grads, lr)?;

        let snapshot = (step + 1) % cfg.snapshot_interval == 0 || step + 1 == cfg.total_steps;
        let accuracy = if snapshot {
            let acc = batch_accuracy(
                model,
                &params,
                env,
                plan,
                cfg.snapshot_batches,
                StreamKey {
                    seed: cfg.seed,
                    nonce: step as u64,
                    purpose: StreamPurpose::Eval,
                },
            )?;
            if acc > best_accuracy {
                best_accuracy = acc;
                best_params = params.clone();
                best_step = step + 1;
            }
            Some(acc)
        } else {
            None
        };

        let row = LogRow {
            step,
            lr,
            mean_reward: reward_sum / cfg.batch_size as f64,
            baseline_loss,
            accuracy,
        };
        on_row(&row);
        log.push(row);
    }

    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_accuracy,
        best_step,
        log,
    })
}
