//! Batched episode rollouts with scheduling-independent randomness.
//!
//! A batch is always split into fixed chunks of [`CHUNK`] episodes. Chunks may
//! run on any number of threads; every random decision comes from a
//! per-episode stream keyed by (seed, nonce, episode, purpose), so results are
//! byte-identical for any worker count.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{argmax_rows, GlanceCtx, GlanceInput, LocationPolicy, Model};
use crate::nn::ParamStore;
use crate::sim::{GlancePose, GlanceSource, ObjectId, PRESSURE_DIM};
use crate::Result;

/// Episodes per rollout chunk, fixed so chunk boundaries never depend on the
/// worker count.
pub const CHUNK: usize = 8;

/// How the pose for glances after the first is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseSelection {
    /// Sample from the location policy (rejection-resampled Gaussian).
    Policy,
    /// Take the policy mean deterministically.
    Mean,
    /// Ignore the policy; draw uniformly like the first glance.
    Uniform,
}

/// Shape of one batch of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutPlan {
    pub n_glances: usize,
    pub batch: usize,
    pub selection: PoseSelection,
    /// Fix every episode to one object instead of drawing labels uniformly.
    pub label: Option<ObjectId>,
}

impl RolloutPlan {
    pub fn new(n_glances: usize, batch: usize, selection: PoseSelection) -> Self {
        Self {
            n_glances,
            batch,
            selection,
            label: None,
        }
    }
}

/// Identifies one family of episode streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub nonce: u64,
    pub purpose: StreamPurpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Train = 0,
    Eval = 1,
    Init = 2,
}

/// Builds the dedicated RNG for one episode of one stream family.
pub fn episode_rng(key: StreamKey, episode: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&key.seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.nonce.to_le_bytes());
    bytes[16..24].copy_from_slice(&episode.to_le_bytes());
    bytes[24..32].copy_from_slice(&(key.purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// One chunk's worth of completed episodes.
pub struct Rollout {
    pub labels: Vec<ObjectId>,
    /// Per-glance forward contexts, glance order, batch = labels.len().
    pub glances: Vec<GlanceCtx>,
    /// Final-glance argmax per episode.
    pub predictions: Vec<usize>,
    /// 1.0 where the final prediction matches the label.
    pub rewards: Vec<f64>,
}

impl Rollout {
    pub fn batch(&self) -> usize {
        self.labels.len()
    }
}

fn uniform_coords<R: Rng>(rng: &mut R) -> [f64; 2] {
    [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
}

fn pose_from_coords(q: [f64; 2]) -> GlancePose {
    GlancePose::new(q[0], q[1] * std::f64::consts::FRAC_PI_2)
}

/// Runs `rngs.len()` episodes to completion, keeping every forward context.
fn rollout_chunk(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    plan: RolloutPlan,
    mut rngs: Vec<ChaCha8Rng>,
) -> Result<Rollout> {
    assert!(plan.n_glances >= 1, "episodes need at least one glance");
    let batch = rngs.len();

    let mut labels = Vec::with_capacity(batch);
    let mut coords = Vec::with_capacity(batch);
    for rng in &mut rngs {
        let label = match plan.label {
            Some(fixed) => fixed,
            None => ObjectId::try_from(rng.random_range(0..4u8)).expect("id in range"),
        };
        labels.push(label);
        coords.push(uniform_coords(rng));
    }

    let mut state = model.zero_state(batch);
    let mut glances = Vec::with_capacity(plan.n_glances);
    for g in 0..plan.n_glances {
        let mut pressure = Array2::zeros((batch, PRESSURE_DIM));
        let mut pose = Array2::zeros((batch, 2));
        for (i, &q) in coords.iter().enumerate() {
            let row = pressure.row_mut(i).into_slice().expect("contiguous row");
            env.glance(labels[i], pose_from_coords(q), row)?;
            pose[[i, 0]] = q[0];
            pose[[i, 1]] = q[1];
        }
        let (ctx, next) = model.glance_forward(params, GlanceInput { pressure, pose }, &state);
        state = next;

        if g + 1 < plan.n_glances {
            for (i, rng) in rngs.iter_mut().enumerate() {
                coords[i] = match plan.selection {
                    PoseSelection::Policy => {
                        LocationPolicy::from_ctx(&ctx, i).sample_pose(rng)?.1
                    }
                    PoseSelection::Mean => LocationPolicy::from_ctx(&ctx, i).mean_pose().1,
                    PoseSelection::Uniform => uniform_coords(rng),
                };
            }
        }
        glances.push(ctx);
    }

    let predictions = argmax_rows(&glances[plan.n_glances - 1].dist);
    let rewards = predictions
        .iter()
        .zip(&labels)
        .map(|(&p, &l)| if p == l.index() { 1.0 } else { 0.0 })
        .collect();
    Ok(Rollout {
        labels,
        glances,
        predictions,
        rewards,
    })
}

/// Rolls out one batch as fixed chunks, in parallel, returned in chunk order.
pub fn rollout_batch(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    plan: RolloutPlan,
    key: StreamKey,
) -> Result<Vec<Rollout>> {
    assert!(plan.batch >= 1, "empty batch");
    let chunk_starts: Vec<usize> = (0..plan.batch).step_by(CHUNK).collect();
    chunk_starts
        .into_par_iter()
        .map(|start| {
            let size = CHUNK.min(plan.batch - start);
            let rngs = (start..start + size)
                .map(|e| episode_rng(key, e as u64))
                .collect();
            rollout_chunk(model, params, env, plan, rngs)
        })
        .collect()
}

/// Feeds `n_batches` fresh batches through `visit`, chunk by chunk.
///
/// Batch `i` uses the stream family (key.seed, key.nonce + i); episodes are
/// generated exactly as in training rollouts. Memory stays bounded by one
/// batch regardless of `n_batches`.
pub fn visit_batches(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    plan: RolloutPlan,
    n_batches: usize,
    key: StreamKey,
    mut visit: impl FnMut(&Rollout),
) -> Result<()> {
    for i in 0..n_batches {
        let batch_key = StreamKey {
            nonce: key.nonce.wrapping_add(i as u64),
            ..key
        };
        for rollout in rollout_batch(model, params, env, plan, batch_key)? {
            visit(&rollout);
        }
    }
    Ok(())
}

/// Fraction of correct final predictions over `n_batches` fresh batches.
pub fn batch_accuracy(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    plan: RolloutPlan,
    n_batches: usize,
    key: StreamKey,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    visit_batches(model, params, env, plan, n_batches, key, |rollout| {
        correct += rollout.rewards.iter().filter(|&&r| r == 1.0).count();
        total += rollout.batch();
    })?;
    Ok(correct as f64 / total as f64)
}
