use serde::{Deserialize, Serialize};

use super::{AuditBox, EnvCatalogEntry, EnvConfig, OracleId};
use crate::error::{Error, Result};
use crate::function_classes::{Candidate, FunctionClass, Hypothesis, Target};
use crate::measurement::MeasurementOracleConfig;
use crate::planner::CandidateGrid;
use crate::sde::{DynamicsSpec, InitialDistribution, LipschitzConstants, Policy, ScalarField, VectorField};

/// `dx = -u x dt + sqrt(2) dw` with constant controls `u` and reward
/// `b(x, u) = alpha x + kappa u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuParams {
    pub u_min: f64,
    pub u_max: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Controls evenly spaced on `[u_min, u_max]`, unless `controls` is set.
    pub n_policies: usize,
    pub controls: Option<Vec<f64>>,
    /// Reward class `alpha` grid: `alpha_points` values evenly spaced on
    /// `[0, alpha_max]`; it must contain the true `alpha = 1`.
    pub alpha_points: usize,
    pub alpha_max: f64,
    pub x0: f64,
    /// `kappa` in the reward.
    pub control_bonus: f64,
    pub delta: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            u_min: 1.0,
            u_max: 4.0,
            horizon: 1.0,
            seed: 0,
            n_policies: 4,
            controls: None,
            alpha_points: 5,
            alpha_max: 1.0,
            x0: 0.0,
            control_bonus: 0.0,
            delta: 0.1,
        }
    }
}

impl OuParams {
    /// Configuration for the measurements-per-rollout benchmark: start at
    /// `x0 = 1`, reward `alpha x + 0.3 u`, reward candidates `alpha` in
    /// `{0, 0.5, 1, 1.5, 2}`. Under the truth the fastest control wins
    /// through the control bonus; the candidate `alpha = 2` makes the slowest
    /// decay look best, and ruling it out takes a few dozen measurements.
    pub fn low_rollout_benchmark() -> Self {
        Self {
            u_min: 0.5,
            controls: Some(vec![0.5, 1.0, 2.0, 4.0]),
            alpha_max: 2.0,
            x0: 1.0,
            control_bonus: 0.3,
            ..Self::default()
        }
    }
}

/// Half-width of the state audit box.
const STATE_BOX: f64 = 4.0;

pub fn make_ou(params: &OuParams) -> Result<EnvCatalogEntry> {
    if !(params.u_min > 0.0 && params.u_min <= params.u_max) {
        return Err(Error::Config(format!(
            "ou needs 0 < u_min <= u_max, got u_min = {}, u_max = {}",
            params.u_min, params.u_max
        )));
    }
    if !(params.horizon > 0.0 && params.delta > 0.0) {
        return Err(Error::Config("ou needs T > 0 and delta > 0".into()));
    }
    let controls = match &params.controls {
        Some(c) if c.is_empty() => return Err(Error::Config("ou control list is empty".into())),
        Some(c) => {
            if let Some(u) = c.iter().find(|u| !(params.u_min..=params.u_max).contains(*u)) {
                return Err(Error::Config(format!("ou control {u} outside [u_min, u_max]")));
            }
            c.clone()
        }
        None if params.n_policies == 0 => return Err(Error::Config("ou needs n_policies >= 1".into())),
        None if params.n_policies == 1 => vec![params.u_min],
        None => (0..params.n_policies)
            .map(|i| params.u_min + (params.u_max - params.u_min) * i as f64 / (params.n_policies - 1) as f64)
            .collect(),
    };
    if params.alpha_points < 2 || params.alpha_max < 1.0 {
        return Err(Error::Config("ou needs alpha_points >= 2 and alpha_max >= 1".into()));
    }
    let alphas: Vec<f64> = (0..params.alpha_points)
        .map(|i| params.alpha_max * i as f64 / (params.alpha_points - 1) as f64)
        .collect();
    let truth_reward = alphas
        .iter()
        .position(|a| (a - 1.0).abs() < 1e-9)
        .ok_or_else(|| Error::Config("the alpha grid must contain alpha = 1".into()))?;
    let kappa = params.control_bonus;

    let drift = VectorField::new(1, |x, u, o| o[0] = -u[0] * x[0]);
    let reward_fn = |alpha: f64| ScalarField::new(move |x, u| alpha * x[0] + kappa * u[0]);
    let drift_class = FunctionClass::finite(
        Target::Drift,
        vec![Candidate {
            label: "f*".into(),
            params: vec![],
            hypothesis: Hypothesis::Drift(drift.clone()),
        }],
    )?;
    let reward_class = FunctionClass::finite(
        Target::Reward,
        alphas
            .iter()
            .enumerate()
            .map(|(i, &a)| Candidate {
                label: format!("alpha{i}"),
                params: vec![if i == truth_reward { 1.0 } else { a }],
                hypothesis: Hypothesis::Reward(reward_fn(if i == truth_reward { 1.0 } else { a })),
            })
            .collect(),
    )?;
    let policies: Vec<Policy> = controls.iter().enumerate().map(|(i, &u)| Policy::constant(i, vec![u])).collect();
    let grid = CandidateGrid::new(policies, vec![InitialDistribution::point_mass(0, vec![params.x0])])?;
    let x_box = STATE_BOX.max(params.x0.abs() + 1.0);
    let spec = DynamicsSpec {
        drift,
        diffusion: ScalarField::constant(2f64.sqrt()),
        reward: reward_fn(1.0),
        horizon: params.horizon,
        state_dim: 1,
        control_dim: 1,
        // Gradients of -u x and x + kappa u over the audit box.
        lipschitz: LipschitzConstants::new(
            (params.u_max.powi(2) + x_box.powi(2)).sqrt(),
            (1.0 + kappa * kappa).sqrt(),
            0.0,
            0.0,
        )?,
    };
    Ok(EnvCatalogEntry {
        config: EnvConfig::Ou(params.clone()),
        spec,
        drift_class,
        reward_class,
        truth_drift: 0,
        truth_reward,
        grid,
        measurement: MeasurementOracleConfig::exact(params.delta, (2.0 / params.delta).sqrt()),
        deterministic: false,
        bounded: false,
        audit_box: AuditBox {
            state: vec![(-x_box, x_box)],
            control: vec![(params.u_min, params.u_max)],
        },
        oracles: vec![OracleId::OuMoments, OracleId::ConstantDiffusion],
    })
}
