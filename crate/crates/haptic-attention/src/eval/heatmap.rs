//! Where does a trained policy choose to touch? Binned final-glance poses
//! per object, with CSV and SVG emitters.

use crate::model::Model;
use crate::nn::ParamStore;
use crate::sim::{GlanceSource, ObjectId};
use crate::trainer::{visit_batches, PoseSelection, RolloutPlan, StreamKey};
use crate::Result;
use std::fmt::Write as _;

/// Bins per axis of a pose heat-map.
pub const HEATMAP_BINS: usize = 20;

/// Final-glance pose counts for one object, binned over normalized
/// position × orientation. `counts[ix][iphi]` covers
/// x ∈ [-1 + ix/10, -1 + (ix+1)/10) and the same band in phi / (π/2),
/// with the top edge closed.
#[derive(Debug, Clone)]
pub struct HeatmapGrid {
    pub object: ObjectId,
    pub counts: [[u64; HEATMAP_BINS]; HEATMAP_BINS],
    pub episodes: u64,
}

/// Bin index of a normalized coordinate in [-1, 1].
pub fn bin_of(v: f64) -> usize {
    let raw = ((v + 1.0) / 2.0 * HEATMAP_BINS as f64).floor() as isize;
    raw.clamp(0, HEATMAP_BINS as isize - 1) as usize
}

impl HeatmapGrid {
    fn new(object: ObjectId) -> Self {
        Self {
            object,
            counts: [[0; HEATMAP_BINS]; HEATMAP_BINS],
            episodes: 0,
        }
    }

    fn record(&mut self, x: f64, phi: f64) {
        self.counts[bin_of(x)][bin_of(phi)] += 1;
        self.episodes += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn phi_marginal(&self) -> [u64; HEATMAP_BINS] {
        let mut out = [0u64; HEATMAP_BINS];
        for col in &self.counts {
            for (o, c) in out.iter_mut().zip(col) {
                *o += c;
            }
        }
        out
    }

    /// Most visited orientation bin (lowest index on ties).
    pub fn modal_phi_bin(&self) -> usize {
        let marginal = self.phi_marginal();
        let mut best = 0;
        for (i, &c) in marginal.iter().enumerate() {
            if c > marginal[best] {
                best = i;
            }
        }
        best
    }

    /// Orientation at the center of a phi bin, in radians.
    pub fn phi_bin_center(bin: usize) -> f64 {
        let half = HEATMAP_BINS as f64 / 2.0;
        (bin as f64 + 0.5 - half) / half * std::f64::consts::FRAC_PI_2
    }

    /// `bin_x,bin_phi,count` rows, header first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_x,bin_phi,count\n");
        for (ix, col) in self.counts.iter().enumerate() {
            for (iphi, c) in col.iter().enumerate() {
                writeln!(out, "{ix},{iphi},{c}").expect("string write");
            }
        }
        out
    }

    /// Standalone SVG with rank-normalized shading so sparse structure stays
    /// visible: a cell's intensity is the fraction of cells with a strictly
    /// smaller count. phi increases upward, x to the right.
    pub fn to_svg(&self, title: &str) -> String {
        const CELL: usize = 24;
        const MARGIN: usize = 40;
        let side = HEATMAP_BINS * CELL;
        let width = side + 2 * MARGIN;
        let height = side + 2 * MARGIN + 20;

        let mut sorted: Vec<u64> = self.counts.iter().flatten().copied().collect();
        sorted.sort_unstable();
        let denom = (sorted.len() - 1) as f64;
        let rank = |c: u64| sorted.partition_point(|&v| v < c) as f64 / denom;

        let mut out = String::new();
        write!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             viewBox=\"0 0 {width} {height}\">\n"
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"14\">{title}</text>",
            width / 2
        )
        .unwrap();
        for (ix, col) in self.counts.iter().enumerate() {
            for (iphi, &c) in col.iter().enumerate() {
                let t = rank(c);
                // White to deep blue.
                let r = (247.0 - t * 239.0) as u8;
                let g = (251.0 - t * 203.0) as u8;
                let b = (255.0 - t * 148.0) as u8;
                let px = MARGIN + ix * CELL;
                let py = MARGIN + (HEATMAP_BINS - 1 - iphi) * CELL;
                writeln!(
                    out,
                    "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" \
                     fill=\"rgb({r},{g},{b})\"/>"
                )
                .unwrap();
            }
        }
        let bottom = MARGIN + side;
        writeln!(
            out,
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{side}\" height=\"{side}\" \
             fill=\"none\" stroke=\"#333\"/>"
        )
        .unwrap();
        for (label, x, y, anchor) in [
            ("x = -1", MARGIN, bottom + 16, "start"),
            ("x = 1", MARGIN + side, bottom + 16, "end"),
        ] {
            writeln!(
                out,
                "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" \
                 font-family=\"sans-serif\" font-size=\"11\">{label}</text>"
            )
            .unwrap();
        }
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\" transform=\"rotate(-90 {} {})\">phi: -pi/2 to pi/2</text>",
            MARGIN - 14,
            MARGIN + side / 2,
            MARGIN - 14,
            MARGIN + side / 2
        )
        .unwrap();
        out.push_str("</svg>\n");
        out
    }
}

/// Heat-maps of the same policy under sampled and mean pose selection.
#[derive(Debug, Clone)]
pub struct HeatmapBundle {
    pub sampled: HeatmapGrid,
    pub mean: HeatmapGrid,
}

/// Rolls out `n_batches` batches of episodes forced to `object` and bins the
/// final-glance poses, once sampling from the policy and once following its
/// mean. Both passes share `key`, so they see identical first glances.
pub fn build_heatmap(
    model: &Model,
    params: &ParamStore,
    env: &dyn GlanceSource,
    object: ObjectId,
    n_glances: usize,
    batch: usize,
    n_batches: usize,
    key: StreamKey,
) -> Result<HeatmapBundle> {
    let mut bundle = HeatmapBundle {
        sampled: HeatmapGrid::new(object),
        mean: HeatmapGrid::new(object),
    };
    for (selection, grid) in [
        (PoseSelection::Policy, &mut bundle.sampled),
        (PoseSelection::Mean, &mut bundle.mean),
    ] {
        let plan = RolloutPlan {
            n_glances,
            batch,
            selection,
            label: Some(object),
        };
        visit_batches(model, params, env, plan, n_batches, key, |rollout| {
            let poses = &rollout.glances[n_glances - 1].input.pose;
            for row in poses.rows() {
                grid.record(row[0], row[1]);
            }
        })?;
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};
    use crate::sim::LiveSim;
    use crate::trainer::StreamPurpose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bins_cover_the_closed_square() {
        assert_eq!(bin_of(-1.0), 0);
        assert_eq!(bin_of(1.0), 19);
        assert_eq!(bin_of(0.0), 10);
        assert_eq!(bin_of(-1e-12), 9);
        assert_eq!(bin_of(0.05), 10);
        assert_eq!(bin_of(0.1), 11);
    }

    #[test]
    fn phi_bin_centers_map_back_to_radians() {
        use std::f64::consts::{FRAC_PI_2, PI};
        assert!((HeatmapGrid::phi_bin_center(10) - PI / 40.0).abs() < 1e-12);
        assert!(HeatmapGrid::phi_bin_center(0) > -FRAC_PI_2);
        assert!(HeatmapGrid::phi_bin_center(19) < FRAC_PI_2);
        // The quarter-turn band [pi/8, 3pi/8] is exactly bins 12..=17.
        for bin in 0..HEATMAP_BINS {
            let c = HeatmapGrid::phi_bin_center(bin);
            let inside = (PI / 8.0..=3.0 * PI / 8.0).contains(&c);
            assert_eq!(inside, (12..=17).contains(&bin), "bin {bin}");
        }
    }

    #[test]
    fn heatmap_counts_every_episode() {
        let model = Model::new(ModelConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = model.init_params(&mut rng);
        let key = StreamKey {
            seed: 9,
            nonce: 0,
            purpose: StreamPurpose::Eval,
        };
        let bundle = build_heatmap(
            &model,
            &params,
            &LiveSim,
            ObjectId::Ridge,
            2,
            16,
            3,
            key,
        )
        .unwrap();
        for grid in [&bundle.sampled, &bundle.mean] {
            assert_eq!(grid.episodes, 48);
            assert_eq!(grid.total(), 48);
            assert_eq!(grid.phi_marginal().iter().sum::<u64>(), 48);
            assert_eq!(grid.object, ObjectId::Ridge);
        }
        // Mean selection is deterministic given the first glance; an untrained
        // policy still spreads first glances, so both grids hold mass.
        assert!(bundle.mean.counts.iter().flatten().any(|&c| c > 0));
    }

    #[test]
    fn csv_lists_all_bins_in_order() {
        let mut grid = HeatmapGrid::new(ObjectId::Flat);
        grid.record(1.0, 1.0);
        grid.record(-1.0, -1.0);
        let csv = grid.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 400);
        assert_eq!(lines[0], "bin_x,bin_phi,count");
        assert_eq!(lines[1], "0,0,1");
        assert_eq!(lines[400], "19,19,1");
    }

    #[test]
    fn svg_is_wellformed_enough_to_ship() {
        let mut grid = HeatmapGrid::new(ObjectId::Convex);
        for i in 0..10 {
            grid.record(0.9, 0.5 + 0.01 * i as f64);
        }
        let svg = grid.to_svg("convex / sampled");
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 401);
        assert!(svg.contains("convex / sampled"));
    }

    #[test]
    fn modal_bin_tracks_the_marginal() {
        let mut grid = HeatmapGrid::new(ObjectId::Ridge);
        grid.record(0.0, 0.3);
        grid.record(0.5, 0.32);
        grid.record(-0.5, 0.31);
        grid.record(0.0, -0.8);
        assert_eq!(grid.modal_phi_bin(), bin_of(0.3));
    }
}
