//! Central finite-difference verification of analytic gradients.

use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error across all checked elements.
    pub max_rel_err: f64,
    /// (parameter index, flat element index, analytic, numeric, rel err).
    pub entries: Vec<(usize, usize, f64, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs());
    if denom < 1e-7 {
        // both effectively zero: agreement
        0.0
    } else {
        (a - n).abs() / denom
    }
}

/// Compare analytic gradients of `f` (a scalar-valued forward pass that
/// rebuilds its graph on every call) against central differences.
///
/// `max_per_param` caps how many elements of each parameter are probed
/// (deterministically subsampled); `None` checks everything.
pub fn check_gradients<F>(
    mut f: F,
    params: &[Tensor],
    max_per_param: Option<usize>,
    h: f64,
) -> GradCheckReport
where
    F: FnMut() -> Tensor,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f();
    assert_eq!(loss.len(), 1, "gradient check needs a scalar loss");
    loss.backward();
    let analytic: Vec<_> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| ndarray::ArrayD::zeros(p.value().raw_dim())))
        .collect();
    for p in params {
        p.zero_grad();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        entries: Vec::new(),
    };

    for (pi, p) in params.iter().enumerate() {
        let n = p.len();
        let mut idxs: Vec<usize> = (0..n).collect();
        if let Some(cap) = max_per_param {
            idxs.shuffle(&mut rng);
            idxs.truncate(cap);
            idxs.sort_unstable();
        }
        for &i in &idxs {
            p.nudge(i, h);
            let up = f().item();
            p.nudge(i, -2.0 * h);
            let down = f().item();
            p.nudge(i, h);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].as_slice().unwrap()[i];
            let e = rel_err(a, numeric);
            if e > report.max_rel_err {
                report.max_rel_err = e;
            }
            report.entries.push((pi, i, a, numeric, e));
        }
    }
    report
}

/// Spot-check: sample `count` random (parameter, element) pairs across a
/// parameter list instead of sweeping each parameter.
pub fn check_gradients_sampled<F>(
    mut f: F,
    params: &[Tensor],
    count: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut() -> Tensor,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f();
    loss.backward();
    let analytic: Vec<_> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| ndarray::ArrayD::zeros(p.value().raw_dim())))
        .collect();
    for p in params {
        p.zero_grad();
    }

    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in params.iter().enumerate() {
        for i in 0..p.len() {
            pool.push((pi, i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(count);

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        entries: Vec::new(),
    };
    for (pi, i) in pool {
        let p = &params[pi];
        p.nudge(i, h);
        let up = f().item();
        p.nudge(i, -2.0 * h);
        let down = f().item();
        p.nudge(i, h);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[pi].as_slice().unwrap()[i];
        let e = rel_err(a, numeric);
        if e > report.max_rel_err {
            report.max_rel_err = e;
        }
        report.entries.push((pi, i, a, numeric, e));
    }
    report
}
