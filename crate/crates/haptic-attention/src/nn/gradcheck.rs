//! Central finite-difference verification of analytic gradients.

use rand::Rng;

use super::params::{Layout, ParamStore};

/// Worst-coordinate summary of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub worst_block: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Relative error with a floor so near-zero pairs compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` gradients against central differences of `loss` at the
/// given coordinates. `loss` must be deterministic; `params` is restored
/// exactly after probing.
pub fn finite_difference_check(
    params: &mut ParamStore,
    analytic: &ParamStore,
    loss: &mut dyn FnMut(&ParamStore) -> f64,
    epsilon: f64,
    coords: &[usize],
) -> GradCheckReport {
    assert!(!coords.is_empty(), "no coordinates to check");
    assert_eq!(params.len(), analytic.len(), "gradient size mismatch");

    let mut report = GradCheckReport {
        checked: coords.len(),
        max_rel_err: 0.0,
        worst_coord: 0,
        worst_block: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for &i in coords {
        let orig = params.values()[i];
        params.values_mut()[i] = orig + epsilon;
        let up = loss(params);
        params.values_mut()[i] = orig - epsilon;
        let down = loss(params);
        params.values_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.values()[i];
        let err = relative_error(a, numeric);
        if err >= report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report.worst_block = params.layout().block_name_at(report.worst_coord).to_owned();
    report
}

/// Uniform sample of `n` distinct coordinates, spread over all blocks.
pub fn sample_coords<R: Rng>(layout: &Layout, n: usize, rng: &mut R) -> Vec<usize> {
    let total = layout.total_len();
    if n >= total {
        return (0..total).collect();
    }
    let mut coords: Vec<usize> = rand::seq::index::sample(rng, total, n).into_vec();
    coords.sort_unstable();
    coords
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_loss_checks_below_1e9() {
        let mut layout = Layout::new();
        layout.add("p", &[10]);
        let mut params = ParamStore::zeros(layout);
        for (i, v) in params.values_mut().iter_mut().enumerate() {
            *v = 0.3 * (i as f64) - 1.2;
        }
        let mut analytic = params.like();
        for i in 0..params.len() {
            analytic.values_mut()[i] = 2.0 * params.values()[i];
        }
        let coords: Vec<usize> = (0..params.len()).collect();
        let report = finite_difference_check(
            &mut params,
            &analytic,
            &mut |p| p.values().iter().map(|v| v * v).sum(),
            1e-5,
            &coords,
        );
        assert!(report.max_rel_err < 1e-9, "err {}", report.max_rel_err);
    }

    #[test]
    fn detects_a_wrong_gradient_and_names_its_block() {
        let mut layout = Layout::new();
        layout.add("good", &[3]);
        layout.add("broken", &[2]);
        let mut params = ParamStore::zeros(layout);
        params.fill(0.5);
        let mut analytic = params.like();
        for i in 0..params.len() {
            analytic.values_mut()[i] = 2.0 * params.values()[i];
        }
        analytic.values_mut()[4] = 123.0;
        let coords: Vec<usize> = (0..params.len()).collect();
        let report = finite_difference_check(
            &mut params,
            &analytic,
            &mut |p| p.values().iter().map(|v| v * v).sum(),
            1e-5,
            &coords,
        );
        assert!(report.max_rel_err > 0.9);
        assert_eq!(report.worst_coord, 4);
        assert_eq!(report.worst_block, "broken");
    }

    #[test]
    fn params_restored_after_probing() {
        let mut layout = Layout::new();
        layout.add("p", &[4]);
        let mut params = ParamStore::zeros(layout);
        params.fill(0.77);
        let before = params.values().to_vec();
        let analytic = params.like();
        let coords = [0, 1, 2, 3];
        finite_difference_check(&mut params, &analytic, &mut |_| 0.0, 1e-5, &coords);
        assert_eq!(params.values(), &before[..]);
    }

    #[test]
    fn sample_coords_distinct_and_in_range() {
        let mut layout = Layout::new();
        layout.add("a", &[50]);
        layout.add("b", &[50]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coords = sample_coords(&layout, 30, &mut rng);
        assert_eq!(coords.len(), 30);
        let mut dedup = coords.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 30);
        assert!(coords.iter().all(|&c| c < 100));
    }
}
