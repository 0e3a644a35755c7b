//! The measurement oracle: noisy drift and reward observations at chosen
//! times of one simulated path, the per-episode time samplers, and the
//! independency coefficient of a sampler.

mod independency;
mod ou;
mod sampler;

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag, SimRng};
use crate::sde::{self, ControlVec, DynamicsSpec, InitialDistribution, Policy, StateVec};

pub use independency::{
    estimate_independency_coefficient, IndependencyArgmax, IndependencyConfig, IndependencyEstimate,
};
pub use ou::{ou_closed_form_second_moment, OuMoment};
pub use sampler::{draw_measurement_times, SamplerSpec};

/// One observation `(t, x, u, y, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub episode: usize,
    pub t: f64,
    pub x: StateVec,
    pub u: ControlVec,
    /// Noisy drift observation.
    pub y: Vec<f64>,
    /// Noisy reward observation.
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    /// `y ~ N(f*(x,u), g*(x,u)^2 / delta I)`.
    ExactNoise,
    /// `y = (x(t + delta) - x(t)) / delta` along the simulated path.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementOracleConfig {
    pub delta: f64,
    pub mode: MeasurementMode,
    /// Bound `G` on the drift-noise scale, used by the confidence radii.
    pub g_bound: f64,
    /// Test-only: report `r = b*(x,u)` without noise.
    #[serde(default)]
    pub noiseless_reward: bool,
}

impl MeasurementOracleConfig {
    pub fn exact(delta: f64, g_bound: f64) -> Self {
        Self {
            delta,
            mode: MeasurementMode::ExactNoise,
            g_bound,
            noiseless_reward: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("measurement delta must be > 0, got {}", self.delta)));
        }
        if !(self.g_bound > 0.0) {
            return Err(Error::Config(format!("G must be > 0, got {}", self.g_bound)));
        }
        Ok(())
    }
}

/// A single measurement at time `t` of the path identified by `seed`.
pub fn observe(
    env: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    t: f64,
    config: &MeasurementOracleConfig,
    seed: u64,
) -> Result<Measurement> {
    let mut out = observe_path(env, policy, q, &[t], config, env.default_dt(), seed, 0)?;
    Ok(out.remove(0))
}

/// Measurements at every time in `times` of one simulated path.
///
/// The path is the grid trajectory `simulate_trajectory(.., dt, seed)`. States
/// between grid points follow the Brownian bridge of the grid increment, so
/// `x(t) = x_k + f(x_k,u_k) s + g(x_k,u_k) W(s)` with `s = t - t_k` and `W`
/// pinned to the recorded increment at `s = dt`. Times are observed in
/// ascending order; the output keeps that order.
#[allow(clippy::too_many_arguments)]
pub fn observe_path(
    env: &DynamicsSpec,
    policy: &Policy,
    q: &InitialDistribution,
    times: &[f64],
    config: &MeasurementOracleConfig,
    dt: f64,
    seed: u64,
    episode: usize,
) -> Result<Vec<Measurement>> {
    config.validate()?;
    let horizon = env.horizon;
    let total_steps = env.steps_for(dt)?;
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    for &t in &sorted {
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::InvalidArgument(format!("measurement time {t} outside [0, {horizon}]")));
        }
        if config.mode == MeasurementMode::FiniteDifference && t + config.delta > horizon + 1e-12 {
            return Err(Error::OutOfHorizon {
                t,
                delta: config.delta,
                horizon,
            });
        }
    }
    let Some(&last) = sorted.last() else {
        return Ok(Vec::new());
    };

    // Query points on the path: the measurement times and, for finite
    // differences, their look-ahead partners.
    let look_ahead = config.mode == MeasurementMode::FiniteDifference;
    let reach = if look_ahead { (last + config.delta).min(horizon) } else { last };
    let steps = ((reach / dt - 1e-9).ceil().max(0.0) as usize).min(total_steps);
    let x0 = sde::initial_state(q, seed, 0);
    let increments = sde::wiener_increments(&mut sde::wiener_stream(seed, 0), steps, env.state_dim, dt);
    let path = sde::integrate_with_increments(env, policy, &x0, dt, &increments)?;

    let mut queries: Vec<f64> = sorted.clone();
    if look_ahead {
        queries.extend(sorted.iter().map(|t| (t + config.delta).min(horizon)));
    }
    queries.sort_by(|a, b| a.total_cmp(b));
    let states = bridge_states(env, &path, &queries, &mut rng::stream(seed, &[tag::BRIDGE]))?;
    let state_at = |t: f64| -> &Vec<f64> {
        let i = queries.partition_point(|q| *q < t);
        &states[i]
    };

    let mut noise = rng::stream(seed, &[tag::OBSERVATION]);
    let d = env.state_dim;
    sorted
        .iter()
        .map(|&t| {
            let x = state_at(t).clone();
            let u = policy.apply(&x);
            let y = match config.mode {
                MeasurementMode::ExactNoise => {
                    let sd = env.diffusion.eval(&x, &u).abs() / config.delta.sqrt();
                    let mut y = env.drift.eval(&x, &u);
                    for v in y.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut noise);
                        *v += sd * z;
                    }
                    y
                }
                MeasurementMode::FiniteDifference => {
                    let ahead = state_at((t + config.delta).min(horizon));
                    (0..d).map(|i| (ahead[i] - x[i]) / config.delta).collect()
                }
            };
            let mut r = env.reward.eval(&x, &u);
            if !config.noiseless_reward {
                let z: f64 = StandardNormal.sample(&mut noise);
                r += z;
            }
            Ok(Measurement {
                episode,
                t,
                x: StateVec(x),
                u,
                y,
                r,
            })
        })
        .collect()
}

/// States at the ascending `queries`, interpolating each grid interval with
/// a Brownian bridge that is sampled sequentially so several queries in one
/// interval stay jointly consistent.
fn bridge_states(
    env: &DynamicsSpec,
    path: &sde::Trajectory,
    queries: &[f64],
    rng: &mut SimRng,
) -> Result<Vec<Vec<f64>>> {
    let dt = path.dt;
    let d = env.state_dim;
    let last = path.steps();
    let mut out = Vec::with_capacity(queries.len());
    let mut current: Option<usize> = None;
    let (mut s_prev, mut w_prev) = (0.0, vec![0.0; d]);
    let mut f = vec![0.0; d];
    for &t in queries {
        let k = ((t / dt).floor() as usize).min(last);
        let s = t - k as f64 * dt;
        if k == last || s <= 1e-14 * dt.max(1.0) {
            out.push(path.state(k).to_vec());
            continue;
        }
        if current != Some(k) {
            current = Some(k);
            s_prev = 0.0;
            w_prev.fill(0.0);
        }
        let dw = path.increment(k);
        let (xk, uk) = (path.state(k), path.control(k));
        let remaining = dt - s_prev;
        let frac = (s - s_prev) / remaining;
        let sd = ((s - s_prev) * (dt - s) / remaining).max(0.0).sqrt();
        for i in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            w_prev[i] += frac * (dw[i] - w_prev[i]) + sd * z;
        }
        s_prev = s;
        env.drift.eval_into(xk, uk, &mut f);
        let g = env.diffusion.eval(xk, uk);
        let x: Vec<f64> = (0..d).map(|i| xk[i] + f[i] * s + g * w_prev[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationBlowup { index: k + 1, time: t });
        }
        out.push(x);
    }
    Ok(out)
}

/// CSV with columns `episode,t,x_*,u_*,y_*,r`.
pub fn write_measurements_csv<W: Write>(data: &[Measurement], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let (d, m) = data.first().map_or((0, 0), |first| (first.x.len(), first.u.len()));
    let mut header = vec!["episode".to_string(), "t".to_string()];
    header.extend((0..d).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.extend((0..d).map(|i| format!("y_{i}")));
    header.push("r".into());
    wtr.write_record(&header)?;
    for meas in data {
        let mut row = vec![meas.episode.to_string(), meas.t.to_string()];
        row.extend(meas.x.iter().map(f64::to_string));
        row.extend(meas.u.iter().map(f64::to_string));
        row.extend(meas.y.iter().map(f64::to_string));
        row.push(meas.r.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
