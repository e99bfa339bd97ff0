//! Analytic tactile environment: four object profiles, a rigid 16x16 sensor,
//! pressure-image synthesis, and the pre-recorded glance dataset.

pub mod dataset;
pub mod glance;
pub mod image;
pub mod shapes;

pub use dataset::{sha256_hex_file, GlanceDataset, GridSpec};
pub use glance::{execute_glance, ContactMeta, ContactPoint, GlancePose};
pub use image::{l2_normalize, synthesize_image, PressureImage, PRESSURE_DIM};
pub use shapes::{height_profile, ObjectId};

use crate::Result;

/// Anything that can turn (object, pose) into a normalized pressure vector.
pub trait GlanceSource: Sync {
    fn glance(&self, object: ObjectId, pose: GlancePose, out: &mut [f64]) -> Result<()>;
}

/// Analytic contact model evaluated on demand.
#[derive(Debug, Clone, Copy, Default)]
pub struct LiveSim;

impl GlanceSource for LiveSim {
    fn glance(&self, object: ObjectId, pose: GlancePose, out: &mut [f64]) -> Result<()> {
        assert_eq!(out.len(), PRESSURE_DIM, "output buffer must hold 256 values");
        let (img, _) = execute_glance(object, pose);
        let normalized = l2_normalize(&img)?;
        out.copy_from_slice(&normalized);
        Ok(())
    }
}

impl GlanceSource for GlanceDataset {
    fn glance(&self, object: ObjectId, pose: GlancePose, out: &mut [f64]) -> Result<()> {
        assert_eq!(out.len(), PRESSURE_DIM, "output buffer must hold 256 values");
        let record = self.lookup_nearest(object, pose);
        out.copy_from_slice(record.pressure);
        Ok(())
    }
}
