//! Optimistic planning over finite grids of policies, initial distributions
//! and confidence-set members, and the true-value oracle used to score plans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::FunctionClass;
use crate::sde::{self, DynamicsSpec, InitialDistribution, Policy, ScalarField, VectorField};
use crate::stats::mean_stderr;

/// Default rollouts per planner evaluation.
pub const PLANNING_ROLLOUTS: usize = 32;
/// Default rollouts per true-value evaluation of a stochastic environment.
pub const ORACLE_ROLLOUTS: usize = 10_000;

#[derive(Clone, Debug)]
pub struct CandidateGrid {
    pub policies: Vec<Policy>,
    pub initial_dists: Vec<InitialDistribution>,
}

impl CandidateGrid {
    pub fn new(policies: Vec<Policy>, initial_dists: Vec<InitialDistribution>) -> Result<Self> {
        if policies.is_empty() || initial_dists.is_empty() {
            return Err(Error::InvalidArgument("candidate grid must be non-empty".into()));
        }
        Ok(Self {
            policies,
            initial_dists,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.policies.len() * self.initial_dists.len()
    }
}

/// The selected `(pi, q, f, b)`, by position in the grid and classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimisticChoice {
    pub policy_id: usize,
    pub q_id: usize,
    pub f_index: usize,
    pub b_index: usize,
    pub value: f64,
}

/// `R(pi, q, f, b)` for every combination, estimated with shared random
/// numbers: rollout `r` of every entry starts from the same initial draw and
/// uses the same Wiener increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnTable {
    n_policies: usize,
    n_qs: usize,
    f_indices: Vec<usize>,
    b_indices: Vec<usize>,
    values: Vec<f64>,
}

impl ReturnTable {
    /// Evaluates the members `f_indices` x `b_indices` of the two finite
    /// classes. Each `(pi, q, f)` bundle is simulated once and every reward is
    /// integrated along it.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        env: &DynamicsSpec,
        grid: &CandidateGrid,
        drifts: &[VectorField],
        f_indices: &[usize],
        rewards: &[ScalarField],
        b_indices: &[usize],
        dt: f64,
        n_rollouts: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_rollouts == 0 {
            return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
        }
        let steps = env.steps_for(dt)?;
        let (np, nq) = (grid.policies.len(), grid.initial_dists.len());
        let jobs: Vec<(usize, usize, usize)> = (0..np)
            .flat_map(|p| (0..nq).flat_map(move |q| (0..f_indices.len()).map(move |f| (p, q, f))))
            .collect();
        let rows = jobs
            .par_iter()
            .map(|&(p, q, fi)| {
                let model = env.with_model(drifts[f_indices[fi]].clone(), env.reward.clone());
                let policy = &grid.policies[p];
                let qd = &grid.initial_dists[q];
                let mut totals = vec![0.0; b_indices.len()];
                for r in 0..n_rollouts as u64 {
                    let x0 = sde::initial_state(qd, seed, r);
                    let mut w = sde::wiener_stream(seed, r);
                    sde::rollout(&model, policy, &x0, dt, steps, Some(&mut w), |k, x, u| {
                        if k < steps {
                            for (t, &bi) in totals.iter_mut().zip(b_indices) {
                                *t += rewards[bi].eval(x, u) * dt;
                            }
                        }
                    })?;
                }
                Ok(totals.into_iter().map(|t| t / n_rollouts as f64).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_policies: np,
            n_qs: nq,
            f_indices: f_indices.to_vec(),
            b_indices: b_indices.to_vec(),
            values: rows.concat(),
        })
    }

    /// Table over two whole finite classes.
    pub fn for_classes(
        env: &DynamicsSpec,
        grid: &CandidateGrid,
        drift_class: &FunctionClass,
        reward_class: &FunctionClass,
        dt: f64,
        n_rollouts: usize,
        seed: u64,
    ) -> Result<Self> {
        let (drifts, rewards) = finite_members(drift_class, reward_class)?;
        let fs: Vec<usize> = (0..drifts.len()).collect();
        let bs: Vec<usize> = (0..rewards.len()).collect();
        Self::compute(env, grid, &drifts, &fs, &rewards, &bs, dt, n_rollouts, seed)
    }

    fn slot(&self, list: &[usize], index: usize) -> Option<usize> {
        list.binary_search(&index).ok()
    }

    /// Estimated return of a tabulated combination.
    pub fn get(&self, policy: usize, q: usize, f_index: usize, b_index: usize) -> Option<f64> {
        let fi = self.slot(&self.f_indices, f_index)?;
        let bi = self.slot(&self.b_indices, b_index)?;
        if policy >= self.n_policies || q >= self.n_qs {
            return None;
        }
        let (nf, nb) = (self.f_indices.len(), self.b_indices.len());
        Some(self.values[((policy * self.n_qs + q) * nf + fi) * nb + bi])
    }

    /// Optimistic choice restricted to the given set members (ascending).
    /// Ties go to the lexicographically smallest `(pi, q, f, b)`.
    pub fn argmax(&self, f_set: &[usize], r_set: &[usize]) -> Result<OptimisticChoice> {
        if f_set.is_empty() {
            return Err(Error::PlannerStarvation { which: "drift" });
        }
        if r_set.is_empty() {
            return Err(Error::PlannerStarvation { which: "reward" });
        }
        let mut best: Option<OptimisticChoice> = None;
        for p in 0..self.n_policies {
            for q in 0..self.n_qs {
                for &f in f_set {
                    for &b in r_set {
                        let value = self.get(p, q, f, b).ok_or_else(|| {
                            Error::InvalidArgument(format!("combination (f {f}, b {b}) is not tabulated"))
                        })?;
                        if best.is_none_or(|c| value > c.value) {
                            best = Some(OptimisticChoice {
                                policy_id: p,
                                q_id: q,
                                f_index: f,
                                b_index: b,
                                value,
                            });
                        }
                    }
                }
            }
        }
        Ok(best.expect("non-empty search"))
    }
}

fn finite_members(
    drift_class: &FunctionClass,
    reward_class: &FunctionClass,
) -> Result<(Vec<VectorField>, Vec<ScalarField>)> {
    let need = || Error::InvalidArgument("exhaustive planning needs finite classes".into());
    let drifts = drift_class
        .candidates()
        .ok_or_else(need)?
        .iter()
        .map(|c| c.hypothesis.as_drift().cloned().ok_or_else(need))
        .collect::<Result<Vec<_>>>()?;
    let rewards = reward_class
        .candidates()
        .ok_or_else(need)?
        .iter()
        .map(|c| c.hypothesis.as_reward().cloned().ok_or_else(need))
        .collect::<Result<Vec<_>>>()?;
    Ok((drifts, rewards))
}

/// Joint argmax of `R(pi, q, f, b)` over the grid and the two confidence
/// sets (member indices of finite classes), with shared random numbers.
#[allow(clippy::too_many_arguments)]
pub fn optimistic_plan(
    env: &DynamicsSpec,
    grid: &CandidateGrid,
    drift_class: &FunctionClass,
    f_set: &[usize],
    reward_class: &FunctionClass,
    r_set: &[usize],
    dt: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<OptimisticChoice> {
    if f_set.is_empty() {
        return Err(Error::PlannerStarvation { which: "drift" });
    }
    if r_set.is_empty() {
        return Err(Error::PlannerStarvation { which: "reward" });
    }
    let (drifts, rewards) = finite_members(drift_class, reward_class)?;
    let mut fs = f_set.to_vec();
    let mut bs = r_set.to_vec();
    fs.sort_unstable();
    fs.dedup();
    bs.sort_unstable();
    bs.dedup();
    if fs.iter().any(|&i| i >= drifts.len()) || bs.iter().any(|&i| i >= rewards.len()) {
        return Err(Error::InvalidArgument("confidence set refers to a missing member".into()));
    }
    ReturnTable::compute(env, grid, &drifts, &fs, &rewards, &bs, dt, n_rollouts, seed)?.argmax(&fs, &bs)
}

/// True values `R(pi, q)` under `(f*, b*)` for every grid pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityOracle {
    pub optimal_value: f64,
    pub best_policy: usize,
    pub best_q: usize,
    /// `values[pi][q]`.
    pub values: Vec<Vec<f64>>,
    pub stderrs: Vec<Vec<f64>>,
    pub rollouts: usize,
}

impl OptimalityOracle {
    pub fn value(&self, policy: usize, q: usize) -> f64 {
        self.values[policy][q]
    }

    /// `optimal_value - R(pi, q)`.
    pub fn gap(&self, policy: usize, q: usize) -> f64 {
        self.optimal_value - self.values[policy][q]
    }

    /// Largest standard error over the grid.
    pub fn max_stderr(&self) -> f64 {
        self.stderrs.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }
}

/// True values of every grid pair from `n_rollouts` rollouts each (pass 1
/// for a deterministic environment with point-mass initial states).
pub fn exact_optimal(
    env: &DynamicsSpec,
    grid: &CandidateGrid,
    dt: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<OptimalityOracle> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    let steps = env.steps_for(dt)?;
    let pairs: Vec<(usize, usize)> = (0..grid.policies.len())
        .flat_map(|p| (0..grid.initial_dists.len()).map(move |q| (p, q)))
        .collect();
    let stats = pairs
        .par_iter()
        .map(|&(p, q)| {
            let policy = &grid.policies[p];
            let qd = &grid.initial_dists[q];
            let returns = (0..n_rollouts as u64)
                .map(|r| {
                    let x0 = sde::initial_state(qd, seed, r);
                    let mut w = sde::wiener_stream(seed, r);
                    sde::rollout_return(env, &env.reward, policy, &x0, dt, steps, Some(&mut w))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(mean_stderr(&returns))
        })
        .collect::<Result<Vec<_>>>()?;
    let nq = grid.initial_dists.len();
    let mut values = vec![vec![0.0; nq]; grid.policies.len()];
    let mut stderrs = values.clone();
    let (mut best_policy, mut best_q) = (0, 0);
    for (&(p, q), s) in pairs.iter().zip(&stats) {
        values[p][q] = s.mean;
        stderrs[p][q] = s.stderr;
        if s.mean > values[best_policy][best_q] {
            (best_policy, best_q) = (p, q);
        }
    }
    Ok(OptimalityOracle {
        optimal_value: values[best_policy][best_q],
        best_policy,
        best_q,
        values,
        stderrs,
        rollouts: n_rollouts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_classes::{Candidate, Hypothesis, Target};
    use crate::sde::LipschitzConstants;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn drift_class(cs: &[f64]) -> FunctionClass {
        let c = cs
            .iter()
            .enumerate()
            .map(|(i, &c)| Candidate {
                label: format!("f{i}"),
                params: vec![c],
                hypothesis: Hypothesis::Drift(VectorField::new(1, move |_, u, o| o[0] = c * u[0])),
            })
            .collect();
        FunctionClass::finite(Target::Drift, c).unwrap()
    }

    fn reward_class(fs: Vec<ScalarField>) -> FunctionClass {
        let c = fs
            .into_iter()
            .enumerate()
            .map(|(i, b)| Candidate {
                label: format!("b{i}"),
                params: vec![],
                hypothesis: Hypothesis::Reward(b),
            })
            .collect();
        FunctionClass::finite(Target::Reward, c).unwrap()
    }

    fn env(diffusion: f64) -> DynamicsSpec {
        DynamicsSpec {
            drift: VectorField::new(1, |_, u, o| o[0] = u[0]),
            diffusion: ScalarField::constant(diffusion),
            reward: ScalarField::new(|x, _| x[0].clamp(0.0, 1.0)),
            horizon: 1.0,
            state_dim: 1,
            control_dim: 1,
            lipschitz: LipschitzConstants::new(1.0, 1.0, 0.0, 0.0).unwrap(),
        }
    }

    fn grid() -> CandidateGrid {
        CandidateGrid::new(
            vec![Policy::constant(0, vec![0.2]), Policy::constant(1, vec![0.8])],
            vec![InitialDistribution::point_mass(0, vec![0.0])],
        )
        .unwrap()
    }

    #[test]
    fn singleton_sets_return_the_tuple() {
        let fc = drift_class(&[1.0]);
        let rc = reward_class(vec![ScalarField::new(|x, _| x[0])]);
        let g = CandidateGrid::new(vec![Policy::constant(0, vec![0.5])], grid().initial_dists).unwrap();
        let c = optimistic_plan(&env(0.3), &g, &fc, &[0], &rc, &[0], 1.0 / 64.0, 8, 1).unwrap();
        assert_eq!((c.policy_id, c.q_id, c.f_index, c.b_index), (0, 0, 0, 0));
    }

    #[test]
    fn optimism_picks_dominating_reward() {
        let fc = drift_class(&[1.0]);
        let base = ScalarField::new(|x, _| x[0].clamp(0.0, 1.0) * 0.5);
        let plus = ScalarField::new(|x, _| x[0].clamp(0.0, 1.0) * 0.5 + 0.25);
        let rc = reward_class(vec![base, plus]);
        let c = optimistic_plan(&env(0.3), &grid(), &fc, &[0], &rc, &[0, 1], 1.0 / 64.0, 16, 2).unwrap();
        assert_eq!(c.b_index, 1);
    }

    #[test]
    fn picks_better_policy_on_four_step_grid() {
        // Deterministic x' = u from 0 with b = x on [0, 1], dt = 1/4:
        // left sum = u (0 + 1/4 + 2/4 + 3/4) / 4 = 0.375 u.
        let fc = drift_class(&[1.0]);
        let rc = reward_class(vec![ScalarField::new(|x, _| x[0])]);
        let table = ReturnTable::for_classes(&env(0.0), &grid(), &fc, &rc, 0.25, 1, 0).unwrap();
        assert_abs_diff_eq!(table.get(0, 0, 0, 0).unwrap(), 0.375 * 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(table.get(1, 0, 0, 0).unwrap(), 0.375 * 0.8, epsilon = 1e-15);
        assert_eq!(table.argmax(&[0], &[0]).unwrap().policy_id, 1);
    }

    #[test]
    fn empty_set_starves_the_planner() {
        let fc = drift_class(&[1.0]);
        let rc = reward_class(vec![ScalarField::constant(0.5)]);
        let err = optimistic_plan(&env(0.0), &grid(), &fc, &[], &rc, &[0], 0.25, 1, 0).unwrap_err();
        assert!(matches!(err, Error::PlannerStarvation { which: "drift" }));
        let err = optimistic_plan(&env(0.0), &grid(), &fc, &[0], &rc, &[], 0.25, 1, 0).unwrap_err();
        assert!(matches!(err, Error::PlannerStarvation { which: "reward" }));
    }

    #[test]
    fn constant_reward_oracle() {
        let mut e = env(0.4);
        e.reward = ScalarField::constant(1.0);
        let o = exact_optimal(&e, &grid(), 1.0 / 32.0, 50, 0).unwrap();
        assert!(o.values.iter().flatten().all(|v| (v - 1.0).abs() < 1e-12));
        assert_abs_diff_eq!(o.optimal_value, 1.0, epsilon = 1e-12);
        let single = CandidateGrid::new(vec![grid().policies[0].clone()], grid().initial_dists).unwrap();
        let o = exact_optimal(&env(0.4), &single, 1.0 / 32.0, 50, 0).unwrap();
        assert_eq!(o.optimal_value, o.value(0, 0));
    }

    #[test]
    fn ou_concentration_ordering() {
        // dx = -u x dt + sqrt(2) dw from 0, b = exp(-x^2): a faster rate keeps
        // x nearer 0. Gaussian oracle: E exp(-x^2) = 1 / sqrt(1 + 2 v).
        let e = DynamicsSpec {
            drift: VectorField::new(1, |x, u, o| o[0] = -u[0] * x[0]),
            diffusion: ScalarField::constant(2f64.sqrt()),
            reward: ScalarField::new(|x, _| (-x[0] * x[0]).exp()),
            ..env(0.0)
        };
        let g = CandidateGrid::new(
            vec![Policy::constant(0, vec![0.5]), Policy::constant(1, vec![2.0])],
            vec![InitialDistribution::point_mass(0, vec![0.0])],
        )
        .unwrap();
        let o = exact_optimal(&e, &g, 1.0 / 128.0, 20_000, 5).unwrap();
        assert_eq!(o.best_policy, 1);
        let closed = |u: f64| {
            let n = 2000;
            (0..n)
                .map(|k| {
                    let t = k as f64 / n as f64;
                    let v = (1.0 - (-2.0 * u * t).exp()) / u;
                    1.0 / (1.0 + 2.0 * v).sqrt() / n as f64
                })
                .sum::<f64>()
        };
        for (p, u) in [(0, 0.5), (1, 2.0)] {
            assert!((o.value(p, 0) - closed(u)).abs() < 4.0 * o.stderrs[p][0] + 0.01);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn optimism_dominates_truth_and_is_deterministic(seed in any::<u64>(), bump in 0.0f64..0.3) {
            let fc = drift_class(&[1.0, 0.5, -0.5]);
            let b_true = ScalarField::new(|x, _| x[0].clamp(0.0, 1.0));
            let b_alt = ScalarField::new(move |x, _| (x[0] + bump).clamp(0.0, 1.0));
            let rc = reward_class(vec![b_true, b_alt]);
            let e = env(0.3);
            let dt = 1.0 / 32.0;
            let choice = optimistic_plan(&e, &grid(), &fc, &[0, 1, 2], &rc, &[0, 1], dt, 8, seed).unwrap();
            // f* and b* have index 0; same seed gives the same random numbers.
            let table = ReturnTable::for_classes(&e, &grid(), &fc, &rc, dt, 8, seed).unwrap();
            for p in 0..2 {
                prop_assert!(choice.value >= table.get(p, 0, 0, 0).unwrap());
            }
            let again = optimistic_plan(&e, &grid(), &fc, &[0, 1, 2], &rc, &[0, 1], dt, 8, seed).unwrap();
            prop_assert_eq!(choice, again);
            prop_assert_eq!(choice, table.argmax(&[0, 1, 2], &[0, 1]).unwrap());
        }

        #[test]
        fn removing_unselected_candidates_keeps_the_choice(seed in any::<u64>()) {
            let fc = drift_class(&[1.0, 0.5, -0.5]);
            let rc = reward_class(vec![ScalarField::new(|x, _| x[0].clamp(0.0, 1.0)), ScalarField::constant(0.3)]);
            let e = env(0.3);
            let c = optimistic_plan(&e, &grid(), &fc, &[0, 1, 2], &rc, &[0, 1], 1.0 / 32.0, 8, seed).unwrap();
            let others: Vec<usize> = (0..3).filter(|&f| f != c.f_index).collect();
            let keep = [c.f_index, others[0]];
            let c2 = optimistic_plan(&e, &grid(), &fc, &keep, &rc, &[0, 1], 1.0 / 32.0, 8, seed).unwrap();
            prop_assert_eq!(c, c2);
        }
    }
}
