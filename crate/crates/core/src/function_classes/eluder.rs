//! Greedy lower bound on the distributional Eluder dimension `DE_1`.
//!
//! Everything works on a table `means[h][p] = E_p h` of expectations of each
//! difference function `h` under each candidate distribution `p`.

use serde::{Deserialize, Serialize};

use crate::sde::ScalarField;

/// One `(distribution, function)` pair of a witness sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessStep {
    pub distribution: usize,
    pub function: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EluderEstimate {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub sequence_length: usize,
    pub witness: Vec<WitnessStep>,
}

impl EluderEstimate {
    /// Recomputes the defining inequalities along the witness: at step `l`,
    /// `|E_{p_l} h_l| > eps` and `sum_{i<l} |E_{p_i} h_l| <= eps'`.
    pub fn replay(&self, means: &[Vec<f64>]) -> bool {
        self.witness.len() == self.sequence_length
            && self.witness.iter().enumerate().all(|(l, step)| {
                let row = &means[step.function];
                let past: f64 = self.witness[..l].iter().map(|s| row[s.distribution].abs()).sum();
                row[step.distribution].abs() > self.epsilon && past <= self.epsilon_prime
            })
    }
}

/// `means[h][p]`: average of `diffs[h]` over the sample points of `pool[p]`.
pub fn distribution_means(diffs: &[ScalarField], pool: &[Vec<(Vec<f64>, Vec<f64>)>]) -> Vec<Vec<f64>> {
    diffs
        .iter()
        .map(|h| {
            pool.iter()
                .map(|points| {
                    points.iter().map(|(x, u)| h.eval(x, u)).sum::<f64>() / points.len().max(1) as f64
                })
                .collect()
        })
        .collect()
}

/// Greedy sequence with `eps' = eps`. Each distribution is used at most
/// once. At every step the feasible distribution that adds the least total
/// `|E_p h|` to the still-unexhausted functions is appended (lowest index on
/// ties), which keeps the running sums small for as long as possible.
pub fn eluder_greedy_estimate(means: &[Vec<f64>], epsilon: f64) -> EluderEstimate {
    let n_h = means.len();
    let n_p = means.first().map_or(0, Vec::len);
    let mut used = vec![false; n_p];
    let mut sums = vec![0.0; n_h];
    let mut witness = Vec::new();
    loop {
        let mut best: Option<(f64, WitnessStep)> = None;
        for p in (0..n_p).filter(|&p| !used[p]) {
            let Some(h) = (0..n_h).find(|&h| sums[h] <= epsilon && means[h][p].abs() > epsilon) else {
                continue;
            };
            let cost: f64 = (0..n_h)
                .filter(|&h| sums[h] <= epsilon)
                .map(|h| means[h][p].abs())
                .sum();
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, WitnessStep { distribution: p, function: h }));
            }
        }
        let Some((_, step)) = best else { break };
        used[step.distribution] = true;
        for (s, row) in sums.iter_mut().zip(means) {
            *s += row[step.distribution].abs();
        }
        witness.push(step);
    }
    EluderEstimate {
        epsilon,
        epsilon_prime: epsilon,
        sequence_length: witness.len(),
        witness,
    }
}

/// Longest valid sequence without repeated distributions, by depth-first
/// search. Exponential; meant for small pools.
pub fn eluder_exhaustive_length(means: &[Vec<f64>], epsilon: f64) -> usize {
    fn search(means: &[Vec<f64>], eps: f64, used: &mut Vec<bool>, sums: &mut Vec<f64>) -> usize {
        let mut best = 0;
        for p in 0..used.len() {
            if used[p] || !means.iter().zip(sums.iter()).any(|(row, s)| *s <= eps && row[p].abs() > eps) {
                continue;
            }
            used[p] = true;
            for (s, row) in sums.iter_mut().zip(means) {
                *s += row[p].abs();
            }
            best = best.max(1 + search(means, eps, used, sums));
            for (s, row) in sums.iter_mut().zip(means) {
                *s -= row[p].abs();
            }
            used[p] = false;
        }
        best
    }
    let n_p = means.first().map_or(0, Vec::len);
    search(means, epsilon, &mut vec![false; n_p], &mut vec![0.0; means.len()])
}
