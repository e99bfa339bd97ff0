//! Pressure-image synthesis: each contact leaves two Gaussian blobs on the
//! 16x16 cell grid, one per sensing row.

use super::glance::ContactPoint;
use crate::{Error, Result};

pub const GRID_SIDE: usize = 16;
pub const PRESSURE_DIM: usize = GRID_SIDE * GRID_SIDE;

/// Blob spread in cells, fixed to mimic foam deformation.
const BLOB_SIGMA_CELLS: f64 = 1.5;
/// The two rows where the sensor's contact pads sit.
const BLOB_ROWS: [usize; 2] = [4, 11];
/// Cell pitch along the sensor, cm.
const CELL_PITCH_CM: f64 = 0.5;

/// Raw 16x16 non-negative pressure grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureImage {
    raw: [f64; PRESSURE_DIM],
}

impl PressureImage {
    pub fn raw(&self) -> &[f64; PRESSURE_DIM] {
        &self.raw
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.raw[row * GRID_SIDE + col]
    }

    /// Row-major flattened copy.
    pub fn flat(&self) -> [f64; PRESSURE_DIM] {
        self.raw
    }
}

/// Fractional column index of sensor-local coordinate `s` (cm). Cell k covers
/// [0.5k - 4, 0.5k - 3.5], so s = 0 falls between columns 7 and 8.
fn column_of(s_cm: f64) -> f64 {
    s_cm / CELL_PITCH_CM + 7.5
}

/// Sums force-scaled Gaussian blobs for 1-2 contacts into a raw image.
pub fn synthesize_image(contacts: &[ContactPoint]) -> PressureImage {
    assert!(
        !contacts.is_empty() && contacts.len() <= 2,
        "expected 1-2 contacts, got {}",
        contacts.len()
    );
    let inv_two_sigma_sq = 1.0 / (2.0 * BLOB_SIGMA_CELLS * BLOB_SIGMA_CELLS);
    let mut raw = [0.0f64; PRESSURE_DIM];
    for contact in contacts {
        assert!(contact.force_n > 0.0, "contact force must be positive");
        let col_c = column_of(contact.s_cm);
        for &row_c in &BLOB_ROWS {
            for row in 0..GRID_SIDE {
                let dr = row as f64 - row_c as f64;
                for col in 0..GRID_SIDE {
                    let dc = col as f64 - col_c;
                    raw[row * GRID_SIDE + col] +=
                        contact.force_n * (-(dr * dr + dc * dc) * inv_two_sigma_sq).exp();
                }
            }
        }
    }
    PressureImage { raw }
}

/// Flattens and scales to unit L2 norm. All-zero input signals a contact
/// model bug and is rejected.
pub fn l2_normalize(image: &PressureImage) -> Result<[f64; PRESSURE_DIM]> {
    let norm_sq: f64 = image.raw.iter().map(|v| v * v).sum();
    if norm_sq <= 0.0 {
        return Err(Error::ZeroImage);
    }
    let inv = 1.0 / norm_sq.sqrt();
    let mut out = image.raw;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(out)
}
