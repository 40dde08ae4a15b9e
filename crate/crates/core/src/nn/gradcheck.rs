use rand::seq::index::sample;

use super::network::Network;
use crate::error::Result;
use crate::rng::seeded;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Which parameters to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// A seeded random subset of the given size.
    Subset { count: usize, seed: u64 },
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare the analytic gradient of `xent + (λ/2)‖W‖²` against central
/// finite differences. With `dropout_seed` the forward runs in train mode and
/// every evaluation redraws the same masks from that seed.
pub fn gradient_check<N: Network>(
    net: &N,
    x: &[f64],
    label: usize,
    lambda: f64,
    dropout_seed: Option<u64>,
    coverage: Coverage,
) -> Result<GradCheckReport> {
    let objective = |n: &N| -> Result<f64> {
        let mut rng = dropout_seed.map(seeded);
        let mut scratch = vec![0.0; n.param_count()];
        let (xent, _) = n.accumulate_gradient(x, label, rng.as_mut(), &mut scratch)?;
        Ok(xent + n.penalty(lambda))
    };
    let mut rng = dropout_seed.map(seeded);
    let mut analytic = vec![0.0; net.param_count()];
    net.accumulate_gradient(x, label, rng.as_mut(), &mut analytic)?;
    net.add_penalty_gradient(lambda, &mut analytic);

    let p = analytic.len();
    let indices: Vec<usize> = match coverage {
        Coverage::All => (0..p).collect(),
        Coverage::Subset { count, seed } => {
            let mut idx = sample(&mut seeded(seed), p, count.min(p)).into_vec();
            idx.sort_unstable();
            idx
        }
    };

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: indices.len(),
    };
    for &i in &indices {
        let original = get(&probe, i);
        set(&mut probe, i, original + FD_STEP);
        let plus = objective(&probe)?;
        set(&mut probe, i, original - FD_STEP);
        let minus = objective(&probe)?;
        set(&mut probe, i, original);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

fn locate<N: Network>(net: &N, mut i: usize) -> (usize, usize) {
    for (t, tensor) in net.tensors().iter().enumerate() {
        if i < tensor.len() {
            return (t, i);
        }
        i -= tensor.len();
    }
    panic!("parameter index out of range");
}

fn get<N: Network>(net: &N, i: usize) -> f64 {
    let (t, j) = locate(net, i);
    net.tensors()[t][j]
}

fn set<N: Network>(net: &mut N, i: usize, v: f64) {
    let (t, j) = locate(net, i);
    net.tensors_mut()[t][j] = v;
}
