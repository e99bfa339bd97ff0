//! Pre-recorded glance grid with nearest-neighbor lookup and binary io.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::glance::GlancePose;
use super::image::PRESSURE_DIM;
use super::shapes::ObjectId;
use super::{GlanceSource, LiveSim};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HAMDATA1";
const VERSION: u32 = 1;
const N_OBJECTS: usize = 4;

/// Regular pose grid spanning x in [-1, 1] and phi in [-pi/2, pi/2].
///
/// Node coordinates come from exact endpoint formulas, so the corners land on
/// the bounds bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub nx: usize,
    pub nphi: usize,
}

impl GridSpec {
    pub const STANDARD: GridSpec = GridSpec { nx: 201, nphi: 201 };

    pub fn x_at(&self, i: usize) -> f64 {
        let n = (self.nx - 1) as f64;
        (2.0 * i as f64 - n) / n
    }

    pub fn phi_at(&self, j: usize) -> f64 {
        let n = (self.nphi - 1) as f64;
        PI * (2.0 * j as f64 - n) / (2.0 * n)
    }

    pub fn pose_at(&self, i: usize, j: usize) -> GlancePose {
        assert!(i < self.nx && j < self.nphi, "grid index out of range");
        GlancePose::new(self.x_at(i), self.phi_at(j))
    }

    pub fn dx(&self) -> f64 {
        2.0 / (self.nx - 1) as f64
    }

    pub fn dphi(&self) -> f64 {
        PI / (self.nphi - 1) as f64
    }

    pub fn records_per_object(&self) -> usize {
        self.nx * self.nphi
    }

    /// Nearest grid indices; exact halfway queries round to the lower index.
    pub fn nearest(&self, pose: GlancePose) -> (usize, usize) {
        (
            nearest_axis(pose.x(), -1.0, self.dx(), self.nx),
            nearest_axis(pose.phi(), -PI / 2.0, self.dphi(), self.nphi),
        )
    }
}

fn nearest_axis(v: f64, v0: f64, step: f64, n: usize) -> usize {
    let frac = (v - v0) / step;
    let idx = (frac - 0.5).ceil();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(n - 1)
    }
}

/// One stored glance: the grid pose and its normalized pressure vector.
#[derive(Debug, Clone, Copy)]
pub struct GlanceRecord<'a> {
    pub pose: GlancePose,
    pub pressure: &'a [f64],
}

/// Immutable grid of pre-recorded glances for all four objects.
#[derive(Debug, Clone)]
pub struct GlanceDataset {
    spec: GridSpec,
    /// (x, phi) per grid node, i-major; identical for every object.
    poses: Vec<(f64, f64)>,
    /// Normalized pressure vectors, [object][i][j][256] flattened.
    pressures: Vec<f64>,
}

impl GlanceDataset {
    /// Runs the analytic simulator over the whole grid.
    pub fn generate(spec: GridSpec) -> Result<Self> {
        assert!(spec.nx >= 2 && spec.nphi >= 2, "grid needs at least 2x2 nodes");
        let per = spec.records_per_object();
        let poses: Vec<(f64, f64)> = (0..per)
            .map(|k| {
                let pose = spec.pose_at(k / spec.nphi, k % spec.nphi);
                (pose.x(), pose.phi())
            })
            .collect();

        let mut pressures = vec![0.0f64; N_OBJECTS * per * PRESSURE_DIM];
        for (oi, &object) in ObjectId::ALL.iter().enumerate() {
            let slab = &mut pressures[oi * per * PRESSURE_DIM..(oi + 1) * per * PRESSURE_DIM];
            slab.par_chunks_mut(PRESSURE_DIM)
                .enumerate()
                .try_for_each(|(k, out)| {
                    let pose = spec.pose_at(k / spec.nphi, k % spec.nphi);
                    LiveSim.glance(object, pose, out)
                })?;
        }
        Ok(Self {
            spec,
            poses,
            pressures,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn total_records(&self) -> usize {
        N_OBJECTS * self.spec.records_per_object()
    }

    pub fn record_at(&self, object: ObjectId, i: usize, j: usize) -> GlanceRecord<'_> {
        let per = self.spec.records_per_object();
        let k = i * self.spec.nphi + j;
        assert!(i < self.spec.nx && j < self.spec.nphi, "grid index out of range");
        let (x, phi) = self.poses[k];
        let off = (object.index() * per + k) * PRESSURE_DIM;
        GlanceRecord {
            pose: GlancePose::new(x, phi),
            pressure: &self.pressures[off..off + PRESSURE_DIM],
        }
    }

    /// Closest grid record in index-normalized pose space.
    pub fn lookup_nearest(&self, object: ObjectId, pose: GlancePose) -> GlanceRecord<'_> {
        let (i, j) = self.spec.nearest(pose);
        self.record_at(object, i, j)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(N_OBJECTS as u32).to_le_bytes())?;
        w.write_all(&(self.spec.nx as u32).to_le_bytes())?;
        w.write_all(&(self.spec.nphi as u32).to_le_bytes())?;
        for v in [-1.0, self.spec.dx(), -PI / 2.0, self.spec.dphi()] {
            w.write_all(&v.to_le_bytes())?;
        }

        let per = self.spec.records_per_object();
        let mut buf = Vec::with_capacity((2 + PRESSURE_DIM) * 8);
        for oi in 0..N_OBJECTS {
            for k in 0..per {
                buf.clear();
                let (x, phi) = self.poses[k];
                buf.extend_from_slice(&x.to_le_bytes());
                buf.extend_from_slice(&phi.to_le_bytes());
                let off = (oi * per + k) * PRESSURE_DIM;
                for v in &self.pressures[off..off + PRESSURE_DIM] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("dataset", "bad magic"));
        }
        if read_u32(&mut r)? != VERSION {
            return Err(Error::format("dataset", "unsupported version"));
        }
        let n_objects = read_u32(&mut r)? as usize;
        if n_objects != N_OBJECTS {
            return Err(Error::format(
                "dataset",
                format!("expected {N_OBJECTS} objects, found {n_objects}"),
            ));
        }
        let nx = read_u32(&mut r)? as usize;
        let nphi = read_u32(&mut r)? as usize;
        if nx < 2 || nphi < 2 || nx > 100_000 || nphi > 100_000 {
            return Err(Error::format("dataset", format!("bad grid dims {nx}x{nphi}")));
        }
        let spec = GridSpec { nx, nphi };
        let header = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
        let expect = [-1.0, spec.dx(), -PI / 2.0, spec.dphi()];
        for (h, e) in header.iter().zip(expect) {
            if (h - e).abs() > 1e-12 {
                return Err(Error::format(
                    "dataset",
                    format!("grid metadata {h} does not match derived {e}"),
                ));
            }
        }

        let per = spec.records_per_object();
        let mut poses = vec![(0.0, 0.0); per];
        let mut pressures = vec![0.0f64; N_OBJECTS * per * PRESSURE_DIM];
        let mut buf = vec![0u8; (2 + PRESSURE_DIM) * 8];
        for oi in 0..N_OBJECTS {
            for k in 0..per {
                r.read_exact(&mut buf)?;
                let mut vals = buf.chunks_exact(8).map(|c| {
                    f64::from_le_bytes(c.try_into().expect("8-byte chunk"))
                });
                let x = vals.next().expect("x");
                let phi = vals.next().expect("phi");
                if oi == 0 {
                    poses[k] = (x, phi);
                } else if poses[k].0.to_bits() != x.to_bits() || poses[k].1.to_bits() != phi.to_bits()
                {
                    return Err(Error::format(
                        "dataset",
                        format!("pose grid differs between objects at record {k}"),
                    ));
                }
                let off = (oi * per + k) * PRESSURE_DIM;
                for (slot, v) in pressures[off..off + PRESSURE_DIM].iter_mut().zip(vals) {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::format(
                            "dataset",
                            format!("invalid pressure value {v} in record {k}"),
                        ));
                    }
                    *slot = v;
                }
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::format("dataset", "trailing bytes after records"));
        }
        Ok(Self {
            spec,
            poses,
            pressures,
        })
    }

    /// Plain CSV dump (`object,x,phi,p0..p255`), keeping every `stride`-th
    /// record per object.
    pub fn export_csv(&self, path: &Path, stride: usize) -> Result<()> {
        assert!(stride >= 1, "stride must be at least 1");
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "object,x,phi")?;
        for p in 0..PRESSURE_DIM {
            write!(w, ",p{p}")?;
        }
        writeln!(w)?;
        let per = self.spec.records_per_object();
        for oi in 0..N_OBJECTS {
            for k in (0..per).step_by(stride) {
                let (x, phi) = self.poses[k];
                write!(w, "{oi},{x:.6},{phi:.6}")?;
                let off = (oi * per + k) * PRESSURE_DIM;
                for v in &self.pressures[off..off + PRESSURE_DIM] {
                    write!(w, ",{v:.6e}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming SHA-256 of a file, hex-encoded; used as the dataset content hash
/// in run manifests.
pub fn sha256_hex_file(path: &Path) -> Result<String> {
    let mut r = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn standard_grid_corners_are_exact() {
        let g = GridSpec::STANDARD;
        assert_eq!(g.x_at(0), -1.0);
        assert_eq!(g.x_at(200), 1.0);
        assert_eq!(g.x_at(100), 0.0);
        assert_eq!(g.phi_at(0), -FRAC_PI_2);
        assert_eq!(g.phi_at(200), FRAC_PI_2);
        assert_eq!(g.phi_at(100), 0.0);
        assert_eq!(g.records_per_object(), 40401);
    }

    #[test]
    fn nearest_snaps_and_breaks_ties_low() {
        let g = GridSpec::STANDARD;
        let (i, j) = g.nearest(GlancePose::new(0.003, 0.0));
        assert_eq!((i, j), (100, 100));
        assert_eq!(g.x_at(i), 0.0);

        // Exact halfway on a coarse grid: 0.25 sits between nodes 0.0 and 0.5.
        let coarse = GridSpec { nx: 5, nphi: 5 };
        let (i, _) = coarse.nearest(GlancePose::new(0.25, 0.0));
        assert_eq!(i, 2);
        assert_eq!(coarse.x_at(2), 0.0);

        let (i, j) = g.nearest(GlancePose::new(-1.0, -FRAC_PI_2));
        assert_eq!((i, j), (0, 0));
        let (i, j) = g.nearest(GlancePose::new(1.0, FRAC_PI_2));
        assert_eq!((i, j), (200, 200));
    }

    #[test]
    fn small_dataset_round_trips_bit_exactly() {
        let spec = GridSpec { nx: 5, nphi: 4 };
        let ds = GlanceDataset::generate(spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("glances.bin");
        ds.save(&path).unwrap();
        let loaded = GlanceDataset::load(&path).unwrap();
        assert_eq!(loaded.spec(), spec);
        assert_eq!(loaded.total_records(), 4 * 20);

        let path2 = dir.path().join("again.bin");
        loaded.save(&path2).unwrap();
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(&path2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lookup_returns_a_unit_norm_record_near_the_query() {
        let spec = GridSpec { nx: 21, nphi: 21 };
        let ds = GlanceDataset::generate(spec).unwrap();
        let pose = GlancePose::new(0.31, 0.4);
        let rec = ds.lookup_nearest(ObjectId::Convex, pose);
        assert!((rec.pose.x() - pose.x()).abs() <= spec.dx() / 2.0 + 1e-12);
        assert!((rec.pose.phi() - pose.phi()).abs() <= spec.dphi() / 2.0 + 1e-12);
        let norm: f64 = rec.pressure.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"HAMDATA1junkjunkjunk").unwrap();
        assert!(GlanceDataset::load(&path).is_err());

        let spec = GridSpec { nx: 3, nphi: 3 };
        let ds = GlanceDataset::generate(spec).unwrap();
        let good = dir.path().join("good.bin");
        ds.save(&good).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(GlanceDataset::load(&path).is_err());
    }

    #[test]
    fn csv_export_has_header_and_strided_rows() {
        let spec = GridSpec { nx: 3, nphi: 3 };
        let ds = GlanceDataset::generate(spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.csv");
        ds.export_csv(&path, 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("object,x,phi,p0,"));
        assert!(header.ends_with(",p255"));
        // 9 records per object, stride 2 -> 5 rows per object.
        assert_eq!(lines.count(), 4 * 5);
    }

    #[test]
    fn sha256_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            sha256_hex_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
