use crate::numerics::{Cholesky, Matrix};

use super::CenteredStats;

/// Conditional covariance of `(Y, W̄_j...)` given the feedback in `given`.
/// Indices are 0 for the reward residual and `i+1` for feedback `i`.
fn conditional(c: &Matrix, given: &[usize], a: usize, b: usize) -> Option<f64> {
    if given.is_empty() {
        return Some(c.get(a, b));
    }
    let css = c.select(given);
    let chol = Cholesky::factor_with_threshold(
        &css,
        1e-12 * css.diagonal().iter().fold(0.0, |m: f64, v| m.max(*v)) + f64::MIN_POSITIVE,
    )
    .ok()?;
    let ca: Vec<f64> = given.iter().map(|&s| c.get(a, s)).collect();
    let cb: Vec<f64> = given.iter().map(|&s| c.get(s, b)).collect();
    let sol = chol.solve(&cb).ok()?;
    Some(c.get(a, b) - ca.iter().zip(&sol).map(|(x, y)| x * y).sum::<f64>())
}

/// `(1 + k/(t−k−2)) (1 − ρ̂²_S) σ²` for the feedback subset `S` of size `k`;
/// `None` when the subset is too large for `t` or numerically degenerate.
pub fn subset_proxy(stats: &CenteredStats, subset: &[usize], sigma2: f64) -> Option<f64> {
    let k = subset.len();
    if stats.t < k + 3 {
        return None;
    }
    let c = stats.sample_covariance();
    let rho2 = if k == 0 {
        0.0
    } else {
        let idx: Vec<usize> = subset.iter().map(|i| i + 1).collect();
        let explained = c.get(0, 0) - conditional(&c, &idx, 0, 0)?;
        (explained / sigma2).clamp(0.0, 1.0)
    };
    Some((1.0 + k as f64 / (stats.t - k - 2) as f64) * (1.0 - rho2) * sigma2)
}

/// Greedy forward selection of auxiliary feedback by (partial) correlation
/// with the reward residual. Stops as soon as the best remaining candidate
/// fails to lower [`subset_proxy`].
pub fn select_feedback_subset(stats: &CenteredStats, sigma2: f64) -> Vec<usize> {
    let q = stats.num_feedback();
    let c = stats.sample_covariance();
    let mut selected: Vec<usize> = Vec::new();
    let Some(mut current) = subset_proxy(stats, &[], sigma2) else {
        return selected;
    };
    loop {
        let given: Vec<usize> = selected.iter().map(|i| i + 1).collect();
        let Some(vyy) = conditional(&c, &given, 0, 0) else {
            break;
        };
        let mut best: Option<(usize, f64)> = None;
        for j in (0..q).filter(|j| !selected.contains(j)) {
            let (Some(vjj), Some(vyj)) = (
                conditional(&c, &given, j + 1, j + 1),
                conditional(&c, &given, 0, j + 1),
            ) else {
                continue;
            };
            // Candidates already explained by the selection carry no information.
            if vjj <= 1e-10 * c.get(j + 1, j + 1) || vyy <= 0.0 {
                continue;
            }
            let partial = (vyj / (vjj * vyy).sqrt()).abs();
            if best.is_none_or(|(_, p)| partial > p) {
                best = Some((j, partial));
            }
        }
        let Some((j, _)) = best else { break };
        let mut trial = selected.clone();
        trial.push(j);
        match subset_proxy(stats, &trial, sigma2) {
            Some(p) if p < current => {
                selected = trial;
                current = p;
            }
            _ => break,
        }
    }
    selected
}
