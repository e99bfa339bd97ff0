//! Weight initialization.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::params::{BlockId, ParamStore};

/// He-normal init: weights ~ N(0, 2 / fan_in), biases left at zero.
///
/// For a `[rows, cols]` matrix applied as `y = x W^T + b`, `fan_in = cols`.
pub fn he_normal<R: Rng>(store: &mut ParamStore, id: BlockId, fan_in: usize, rng: &mut R) {
    assert!(fan_in > 0, "fan_in must be positive");
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("std is finite and positive");
    for w in store.slice_mut(id) {
        *w = dist.sample(rng);
    }
}
