//! The four height-field objects, each a 9 cm wide block on an infinite table.

use crate::Error;

/// Shared block half-width and maximum height in cm.
pub const BLOCK_HALF_WIDTH_CM: f64 = 4.5;
pub const BLOCK_HEIGHT_CM: f64 = 4.5;

/// The four shape prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectId {
    /// Triangular ridge, 45-degree flanks, apex at the center.
    Ridge,
    /// Plane descending toward +u at pi/8, tallest at the left edge.
    Incline,
    /// Flat top at full height.
    Flat,
    /// Semicylinder of radius 4.5 centered at the origin.
    Convex,
}

impl ObjectId {
    pub const ALL: [ObjectId; 4] = [
        ObjectId::Ridge,
        ObjectId::Incline,
        ObjectId::Flat,
        ObjectId::Convex,
    ];

    pub fn index(self) -> usize {
        match self {
            ObjectId::Ridge => 0,
            ObjectId::Incline => 1,
            ObjectId::Flat => 2,
            ObjectId::Convex => 3,
        }
    }

    /// Whether the height profile is mirror-symmetric about u = 0.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, ObjectId::Incline)
    }
}

impl TryFrom<u8> for ObjectId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self, Error> {
        match v {
            0 => Ok(ObjectId::Ridge),
            1 => Ok(ObjectId::Incline),
            2 => Ok(ObjectId::Flat),
            3 => Ok(ObjectId::Convex),
            other => Err(Error::UnknownObject(other)),
        }
    }
}

impl std::fmt::Display for ObjectId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ObjectId::Ridge => "ridge",
            ObjectId::Incline => "incline",
            ObjectId::Flat => "flat",
            ObjectId::Convex => "convex",
        };
        write!(f, "{name}")
    }
}

/// Height in cm at block coordinate `u` (cm); 0 on the table outside the block.
pub fn height_profile(object: ObjectId, u: f64) -> f64 {
    if u.abs() > BLOCK_HALF_WIDTH_CM {
        return 0.0;
    }
    match object {
        ObjectId::Ridge => BLOCK_HEIGHT_CM - u.abs(),
        ObjectId::Incline => {
            let slope = (std::f64::consts::PI / 8.0).tan();
            (BLOCK_HEIGHT_CM - slope * (u + BLOCK_HALF_WIDTH_CM)).clamp(0.0, BLOCK_HEIGHT_CM)
        }
        ObjectId::Flat => BLOCK_HEIGHT_CM,
        ObjectId::Convex => (BLOCK_HEIGHT_CM * BLOCK_HEIGHT_CM - u * u).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_top_everywhere_on_block() {
        assert_eq!(height_profile(ObjectId::Flat, 1.7), 4.5);
        assert_eq!(height_profile(ObjectId::Flat, -4.5), 4.5);
        assert_eq!(height_profile(ObjectId::Flat, 4.6), 0.0);
    }

    #[test]
    fn ridge_apex_and_feet() {
        assert_eq!(height_profile(ObjectId::Ridge, 0.0), 4.5);
        assert_eq!(height_profile(ObjectId::Ridge, 4.5), 0.0);
        assert_eq!(height_profile(ObjectId::Ridge, -4.5), 0.0);
        assert_relative_eq!(height_profile(ObjectId::Ridge, 1.0), 3.5);
    }

    #[test]
    fn convex_semicircle_profile() {
        assert_eq!(height_profile(ObjectId::Convex, 0.0), 4.5);
        assert_eq!(height_profile(ObjectId::Convex, 4.5), 0.0);
        assert_eq!(height_profile(ObjectId::Convex, -4.5), 0.0);
        let u: f64 = 2.0;
        assert_relative_eq!(
            height_profile(ObjectId::Convex, u),
            (4.5_f64 * 4.5 - u * u).sqrt()
        );
    }

    #[test]
    fn incline_descends_from_full_height() {
        assert_relative_eq!(height_profile(ObjectId::Incline, -4.5), 4.5);
        let slope = (std::f64::consts::PI / 8.0).tan();
        assert_relative_eq!(height_profile(ObjectId::Incline, 0.0), 4.5 - slope * 4.5);
        let h_right = height_profile(ObjectId::Incline, 4.5);
        assert!(h_right > 0.0 && h_right < 1.0);
        assert!(height_profile(ObjectId::Incline, -1.0) > height_profile(ObjectId::Incline, 1.0));
    }

    #[test]
    fn all_objects_share_max_height_and_table_level() {
        for obj in ObjectId::ALL {
            let max = (0..=900)
                .map(|k| height_profile(obj, -4.5 + k as f64 * 0.01))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(max, 4.5, epsilon = 1e-12);
            assert_eq!(height_profile(obj, 100.0), 0.0);
        }
    }

    #[test]
    fn object_id_round_trip_and_bad_id() {
        for obj in ObjectId::ALL {
            assert_eq!(ObjectId::try_from(obj.index() as u8).unwrap(), obj);
        }
        assert!(ObjectId::try_from(4).is_err());
    }
}
