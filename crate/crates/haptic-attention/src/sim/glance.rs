//! Rigid-sensor contact model: descend a tilted 8 cm segment onto the object
//! and read off where it rests.

use std::f64::consts::FRAC_PI_2;

use super::image::{synthesize_image, PressureImage};
use super::shapes::{height_profile, ObjectId};
use crate::{Error, Result};

/// Sensor segment half-length in cm (16 cells at 0.5 cm pitch).
pub const SENSOR_HALF_LEN_CM: f64 = 4.0;
/// Profile sampling resolution along the sensor, 1 mm.
pub const SAMPLE_STEP_CM: f64 = 0.1;
/// Clearance tolerance below which a sample counts as touching, 0.1 mm.
pub const CONTACT_TOLERANCE_CM: f64 = 0.01;
/// Total normal force applied by the glance controller.
pub const TOTAL_FORCE_N: f64 = 2.0;
/// World offset per unit of normalized position: x_w = 4.5 x.
pub const EXPLORATION_HALF_WIDTH_CM: f64 = 4.5;

const N_SAMPLES: usize = 81;

/// Normalized sensor pose: position x in [-1, 1], orientation phi in
/// [-pi/2, pi/2] radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlancePose {
    x: f64,
    phi: f64,
}

impl GlancePose {
    /// Panics when out of bounds; use [`GlancePose::try_new`] for parsed input.
    pub fn new(x: f64, phi: f64) -> Self {
        Self::try_new(x, phi).expect("pose out of bounds")
    }

    pub fn try_new(x: f64, phi: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&x) || !(-FRAC_PI_2..=FRAC_PI_2).contains(&phi) {
            return Err(Error::config(format!(
                "pose ({x}, {phi}) outside [-1,1] x [-pi/2,pi/2]"
            )));
        }
        Ok(Self { x, phi })
    }

    pub fn x(self) -> f64 {
        self.x
    }

    pub fn phi(self) -> f64 {
        self.phi
    }

    /// Both coordinates scaled to [-1, 1], the network's input convention.
    pub fn normalized(self) -> (f64, f64) {
        (self.x, self.phi / FRAC_PI_2)
    }
}

/// One resolved contact along the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    /// Sensor-local coordinate in cm, within [-4, 4].
    pub s_cm: f64,
    /// Assigned normal force in N.
    pub force_n: f64,
}

/// Contact configuration of one glance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMeta {
    /// Height of the sensor center at rest, cm above the table.
    pub rest_height_cm: f64,
    /// One or two contact points; forces sum to [`TOTAL_FORCE_N`].
    pub contacts: Vec<ContactPoint>,
}

/// Sensor-local coordinate of sample `k`, exactly symmetric about 0.
fn sample_s(k: usize) -> f64 {
    (k as f64 - 40.0) / 10.0
}

/// Lowers the tilted sensor onto the object and reports the pressure image
/// plus contact metadata. Every in-bounds pose touches something: off the
/// block the sensor lands on the table.
pub fn execute_glance(object: ObjectId, pose: GlancePose) -> (PressureImage, ContactMeta) {
    let x_w = EXPLORATION_HALF_WIDTH_CM * pose.x;
    let (sin_phi, cos_phi) = (pose.phi.sin(), pose.phi.cos());

    // Sensor point s sits at world height z_c + s sin(phi); the lowest
    // non-penetrating center height is the max of h(u(s)) - s sin(phi).
    let mut support = [0.0f64; N_SAMPLES];
    let mut rest = f64::NEG_INFINITY;
    for (k, sup) in support.iter_mut().enumerate() {
        let s = sample_s(k);
        let u = x_w + s * cos_phi;
        *sup = height_profile(object, u) - s * sin_phi;
        rest = rest.max(*sup);
    }

    let touching: Vec<usize> = (0..N_SAMPLES)
        .filter(|&k| rest - support[k] <= CONTACT_TOLERANCE_CM)
        .collect();
    assert!(!touching.is_empty(), "sensor must rest on at least one sample");

    let contacts = if touching.len() == 1 {
        vec![ContactPoint {
            s_cm: sample_s(touching[0]),
            force_n: TOTAL_FORCE_N,
        }]
    } else {
        let first = *touching.first().expect("non-empty");
        let last = *touching.last().expect("non-empty");
        let half = TOTAL_FORCE_N / 2.0;
        vec![
            ContactPoint {
                s_cm: sample_s(first),
                force_n: half,
            },
            ContactPoint {
                s_cm: sample_s(last),
                force_n: half,
            },
        ]
    };

    let image = synthesize_image(&contacts);
    let meta = ContactMeta {
        rest_height_cm: rest,
        contacts,
    };
    (image, meta)
}
