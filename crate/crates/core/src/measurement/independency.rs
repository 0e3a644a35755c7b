//! Monte-Carlo estimate of the independency coefficient of a sampler: the
//! largest ratio between the expected estimation error of a class member
//! under a uniformly timed measurement and under the `i`-th measurement of
//! an episode, conditioned on the earlier measurements of the same path.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{draw_measurement_times, SamplerSpec};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::sde::{advance, DynamicsSpec, InitialDistribution, Policy, ScalarField};
use crate::stats::{mean_stderr, MeanStderr};

/// Values below this count as zero in the ratios.
const VANISHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependencyConfig {
    /// Samples of the uniformly timed marginal.
    pub marginal_samples: usize,
    /// Sampled conditioning prefixes; the all-zero prefix is added on top.
    pub prefixes: usize,
    /// Continuations per prefix and index.
    pub continuations: usize,
    pub zero_prefix: bool,
    pub dt: f64,
}

impl Default for IndependencyConfig {
    fn default() -> Self {
        Self {
            marginal_samples: 10_000,
            prefixes: 64,
            continuations: 400,
            zero_prefix: true,
            dt: 1.0 / 512.0,
        }
    }
}

/// Where the largest ratio was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependencyArgmax {
    pub class: String,
    pub member: usize,
    pub index: usize,
    pub policy_id: usize,
    pub q_id: usize,
    /// Sampled prefix number, or `None` for the all-zero prefix.
    pub prefix: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependencyEstimate {
    pub value: f64,
    /// Delta-method standard error of the maximising ratio.
    pub stderr: f64,
    /// Largest ratio per measurement index `i`.
    pub per_index: Vec<f64>,
    pub argmax: Option<IndependencyArgmax>,
    pub config: IndependencyConfig,
}

#[derive(Clone, Copy)]
struct Ratio {
    value: f64,
    stderr: f64,
}

fn ratio(num: MeanStderr, den: MeanStderr, index: usize) -> Result<Ratio> {
    if num.mean.abs() < VANISHING && den.mean.abs() < VANISHING {
        return Ok(Ratio { value: 1.0, stderr: 0.0 });
    }
    if den.mean.abs() < VANISHING {
        return Err(Error::DegenerateConditional { index, value: den.mean });
    }
    let value = num.mean / den.mean;
    let rel = (num.stderr / num.mean).powi(2) + (den.stderr / den.mean).powi(2);
    Ok(Ratio {
        value,
        stderr: value.abs() * rel.sqrt(),
    })
}

struct Best {
    ratio: Ratio,
    argmax: IndependencyArgmax,
    per_index: Vec<f64>,
}

/// Estimates `C_{T,m}` for the sampler over the given policy and
/// initial-distribution grids. `drift_diffs` and `reward_diffs` are the
/// estimation-error functions `||f - f*||^2` and `(b - b*)^2` of the finite
/// classes. The supremum over conditioning histories is replaced by a
/// maximum over sampled prefixes, so the value is a lower estimate of it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_independency_coefficient(
    env: &DynamicsSpec,
    policies: &[Policy],
    qs: &[InitialDistribution],
    drift_diffs: &[ScalarField],
    reward_diffs: &[ScalarField],
    sampler: &SamplerSpec,
    config: &IndependencyConfig,
    seed: u64,
) -> Result<IndependencyEstimate> {
    sampler.validate()?;
    if policies.is_empty() || qs.is_empty() {
        return Err(Error::InvalidArgument("empty policy or initial-distribution grid".into()));
    }
    if config.marginal_samples < 2 || config.continuations < 2 {
        return Err(Error::InvalidArgument("need at least two samples per expectation".into()));
    }
    let classes: Vec<(&str, &[ScalarField])> = vec![("drift", drift_diffs), ("reward", reward_diffs)];
    let pairs: Vec<(&Policy, &InitialDistribution)> =
        policies.iter().flat_map(|p| qs.iter().map(move |q| (p, q))).collect();
    let results = pairs
        .par_iter()
        .map(|(p, q)| pair_estimate(env, p, q, &classes, sampler, config, seed))
        .collect::<Result<Vec<_>>>()?;
    let m = sampler.m();
    let mut per_index = vec![0.0f64; m];
    let mut best: Option<Best> = None;
    for b in results {
        for (acc, v) in per_index.iter_mut().zip(&b.per_index) {
            *acc = acc.max(*v);
        }
        if best.as_ref().is_none_or(|cur| b.ratio.value > cur.ratio.value) {
            best = Some(b);
        }
    }
    let best = best.expect("non-empty grid");
    Ok(IndependencyEstimate {
        value: best.ratio.value,
        stderr: best.ratio.stderr,
        per_index,
        argmax: Some(best.argmax),
        config: *config,
    })
}

fn eval_all(hs: &[&ScalarField], x: &[f64], u: &[f64], sums: &mut [Vec<f64>], j: usize) {
    for (h, col) in hs.iter().zip(sums.iter_mut()) {
        col[j] = h.eval(x, u);
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_estimate(
    env: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    classes: &[(&str, &[ScalarField])],
    sampler: &SamplerSpec,
    config: &IndependencyConfig,
    seed: u64,
) -> Result<Best> {
    let horizon = env.horizon;
    let d = env.state_dim;
    let hs: Vec<&ScalarField> = classes.iter().flat_map(|(_, c)| c.iter()).collect();
    let owner: Vec<(usize, usize)> = classes
        .iter()
        .enumerate()
        .flat_map(|(ci, (_, c))| (0..c.len()).map(move |mi| (ci, mi)))
        .collect();
    let ids = [policy.id as u64, q.id as u64];

    // Numerator: t ~ Unif[0, T], x ~ X(t).
    let mut values = vec![vec![0.0; config.marginal_samples]; hs.len()];
    let mut x = vec![0.0; d];
    for j in 0..config.marginal_samples {
        let mut r = rng::stream(seed, &[tag::MARGINAL, ids[0], ids[1], j as u64]);
        let t: f64 = r.random::<f64>() * horizon;
        q.sample_into(&mut r, &mut x);
        advance(env, policy, &mut x, t, config.dt, &mut r)?;
        let u = policy.apply(&x);
        eval_all(&hs, &x, &u, &mut values, j);
    }
    let numerators: Vec<MeanStderr> = values.iter().map(|v| mean_stderr(v)).collect();

    let m = sampler.m();
    let n_prefix = config.prefixes + usize::from(config.zero_prefix);
    let mut per_index = vec![0.0f64; m];
    let mut best: Option<(Ratio, IndependencyArgmax)> = None;
    let mut den_values = vec![vec![0.0; config.continuations]; hs.len()];
    for p in 0..n_prefix {
        let zero = config.zero_prefix && p == config.prefixes;
        let mut times = draw_measurement_times(sampler, horizon, rng::derive_seed(seed, &[tag::PREFIX, p as u64]))?;
        times.sort_by(|a, b| a.total_cmp(b));
        // States of the conditioning path at t_1..t_{m-1}.
        let mut prefix_states = Vec::with_capacity(m);
        let mut r = rng::stream(seed, &[tag::PREFIX, ids[0], ids[1], p as u64]);
        let mut xp = vec![0.0; d];
        q.sample_into(&mut r, &mut xp);
        let mut t_prev = 0.0;
        for &t in &times[..m - 1] {
            advance(env, policy, &mut xp, t - t_prev, config.dt, &mut r)?;
            prefix_states.push(if zero { vec![0.0; d] } else { xp.clone() });
            t_prev = t;
        }
        for i in 0..m {
            let (start_t, start) = if i == 0 { (0.0, None) } else { (times[i - 1], Some(&prefix_states[i - 1])) };
            let mut rc = rng::stream(seed, &[tag::CONTINUATION, ids[0], ids[1], p as u64, i as u64]);
            for k in 0..config.continuations {
                match start {
                    Some(s) => x.copy_from_slice(s),
                    None => q.sample_into(&mut rc, &mut x),
                }
                advance(env, policy, &mut x, times[i] - start_t, config.dt, &mut rc)?;
                let u = policy.apply(&x);
                eval_all(&hs, &x, &u, &mut den_values, k);
            }
            for (h, dv) in den_values.iter().enumerate() {
                let rt = ratio(numerators[h], mean_stderr(dv), i)?;
                per_index[i] = per_index[i].max(rt.value);
                if best.as_ref().is_none_or(|(b, _)| rt.value > b.value) {
                    let (ci, mi) = owner[h];
                    best = Some((
                        rt,
                        IndependencyArgmax {
                            class: classes[ci].0.to_string(),
                            member: mi,
                            index: i,
                            policy_id: policy.id,
                            q_id: q.id,
                            prefix: (!zero).then_some(p),
                        },
                    ));
                }
            }
        }
    }
    let (ratio, argmax) = best.unwrap_or((
        Ratio { value: 1.0, stderr: 0.0 },
        IndependencyArgmax {
            class: String::new(),
            member: 0,
            index: 0,
            policy_id: policy.id,
            q_id: q.id,
            prefix: None,
        },
    ));
    Ok(Best { ratio, argmax, per_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::ou::{ou_closed_form_second_moment, OuMoment};
    use crate::sde::{LipschitzConstants, VectorField};

    fn ou_env() -> DynamicsSpec {
        DynamicsSpec {
            drift: VectorField::new(1, |x, u, o| o[0] = -u[0] * x[0]),
            diffusion: ScalarField::constant(2f64.sqrt()),
            reward: ScalarField::new(|x, _| x[0]),
            horizon: 1.0,
            state_dim: 1,
            control_dim: 1,
            lipschitz: LipschitzConstants::new(1.0, 1.0, 0.0, 0.0).unwrap(),
        }
    }

    fn small() -> IndependencyConfig {
        IndependencyConfig {
            marginal_samples: 4000,
            prefixes: 4,
            continuations: 2000,
            zero_prefix: true,
            dt: 1.0 / 128.0,
        }
    }

    #[test]
    fn singleton_drift_class_has_unit_ratio() {
        let env = ou_env();
        let zero = ScalarField::constant(0.0);
        let est = estimate_independency_coefficient(
            &env,
            &[Policy::constant(0, vec![1.0])],
            &[InitialDistribution::point_mass(0, vec![0.0])],
            &[zero],
            &[],
            &SamplerSpec::Equidistant { m: 2 },
            &small(),
            1,
        )
        .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.per_index, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_prefix_ratio_matches_closed_form() {
        // Reward error (alpha - 1)^2 x^2: the ratio at the zero prefix is the
        // averaged second moment over the one-step conditional moment.
        let env = ou_env();
        let m = 4;
        let h = ScalarField::new(|x, _| 0.25 * x[0] * x[0]);
        let cfg = IndependencyConfig { prefixes: 0, ..small() };
        let est = estimate_independency_coefficient(
            &env,
            &[Policy::constant(0, vec![1.0])],
            &[InitialDistribution::point_mass(0, vec![0.0])],
            &[],
            &[h],
            &SamplerSpec::Equidistant { m },
            &cfg,
            2,
        )
        .unwrap();
        let num = ou_closed_form_second_moment(1.0, 1.0, OuMoment::Averaged).unwrap();
        let den = ou_closed_form_second_moment(1.0, 1.0, OuMoment::Conditional { m, previous: 0.0 }).unwrap();
        let expect = num / den;
        // Indices 2..4 restart from the zero state, index 1 from x(0) = 0.
        assert!((est.value - expect).abs() < 4.0 * est.stderr + 0.02, "{} vs {expect}", est.value);
        assert!(est.per_index.iter().all(|v| (v - expect).abs() < 0.15));
    }

    #[test]
    fn degenerate_conditional_is_an_error() {
        // Frozen dynamics started from a fair coin on {0, 1}: h = |x| has
        // marginal mean 1/2 but vanishes given a prefix at 0.
        let env = DynamicsSpec {
            diffusion: ScalarField::constant(0.0),
            drift: VectorField::zero(1),
            ..ou_env()
        };
        let h = ScalarField::new(|x, _| x[0].abs());
        let q = InitialDistribution::new(0, "coin", 1, |r, out| out[0] = if r.random::<bool>() { 1.0 } else { 0.0 });
        let cfg = IndependencyConfig { prefixes: 8, zero_prefix: true, ..small() };
        let err = estimate_independency_coefficient(
            &env,
            &[Policy::constant(0, vec![0.0])],
            &[q],
            &[],
            &[h],
            &SamplerSpec::Equidistant { m: 2 },
            &cfg,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateConditional { index: 1, .. }));
    }
}
