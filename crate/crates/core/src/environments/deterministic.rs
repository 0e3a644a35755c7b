use serde::{Deserialize, Serialize};

use super::{AuditBox, EnvCatalogEntry, EnvConfig, OracleId};
use crate::error::{Error, Result};
use crate::function_classes::{Candidate, FunctionClass, Hypothesis, Target};
use crate::measurement::MeasurementOracleConfig;
use crate::planner::CandidateGrid;
use crate::sde::{DynamicsSpec, InitialDistribution, LipschitzConstants, Policy, ScalarField, VectorField};

/// `dx = tanh(k u - x) dt` with reward `0.5 + w tanh(x) - 0.1 u^2`; no
/// noise. With the true gain the push from `u = 1` does not pay for its
/// cost, but the larger candidate gains say it does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Deterministic1dParams {
    /// Accepted for interface uniformity; the entry does not depend on it.
    pub seed: u64,
    pub horizon: f64,
    pub delta: f64,
}

impl Default for Deterministic1dParams {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 1.0,
            delta: 0.1,
        }
    }
}

/// Control gains of the drift candidates; the truth is 0.5.
const GAINS: [f64; 3] = [0.5, 1.0, 1.5];
/// Reward weights of the reward candidates; the truth is 0.4.
const WEIGHTS: [f64; 3] = [0.1, 0.25, 0.4];
/// Nominal drift-noise bound used for the radii (the true one is 0).
const G_NOMINAL: f64 = 0.05;

fn drift(k: f64) -> VectorField {
    VectorField::new(1, move |x, u, o| o[0] = (k * u[0] - x[0]).tanh())
}

/// Quadratic control cost in the reward.
const COST: f64 = 0.1;

fn reward(w: f64) -> ScalarField {
    ScalarField::new(move |x, u| 0.5 + w * x[0].tanh() - COST * u[0] * u[0])
}

pub fn make_deterministic_1d(params: &Deterministic1dParams) -> Result<EnvCatalogEntry> {
    if !(params.horizon > 0.0 && params.delta > 0.0) {
        return Err(Error::Config("deterministic-1d needs T > 0 and delta > 0".into()));
    }
    let drift_class = FunctionClass::finite(
        Target::Drift,
        GAINS
            .iter()
            .enumerate()
            .map(|(i, &k)| Candidate {
                label: format!("gain{i}"),
                params: vec![k],
                hypothesis: Hypothesis::Drift(drift(k)),
            })
            .collect(),
    )?;
    let reward_class = FunctionClass::finite(
        Target::Reward,
        WEIGHTS
            .iter()
            .enumerate()
            .map(|(i, &w)| Candidate {
                label: format!("weight{i}"),
                params: vec![w],
                hypothesis: Hypothesis::Reward(reward(w)),
            })
            .collect(),
    )?;
    let policies = [-1.0, 0.0, 1.0]
        .iter()
        .enumerate()
        .map(|(i, &u)| Policy::constant(i, vec![u]))
        .collect();
    let grid = CandidateGrid::new(policies, vec![InitialDistribution::point_mass(0, vec![0.0])])?;
    let spec = DynamicsSpec {
        drift: drift(GAINS[0]),
        diffusion: ScalarField::constant(0.0),
        reward: reward(WEIGHTS[2]),
        horizon: params.horizon,
        state_dim: 1,
        control_dim: 1,
        // Drift gradient (1, k) scaled by tanh' <= 1; reward gradient
        // (0.4, 0.2 |u|) with |u| <= 1.
        lipschitz: LipschitzConstants::new((1.0 + GAINS[0] * GAINS[0]).sqrt(), (0.4f64.powi(2) + 0.2f64.powi(2)).sqrt(), 0.0, 0.0)?,
    };
    Ok(EnvCatalogEntry {
        config: EnvConfig::Deterministic1d(params.clone()),
        spec,
        drift_class,
        reward_class,
        truth_drift: 0,
        truth_reward: 2,
        grid,
        measurement: MeasurementOracleConfig::exact(params.delta, G_NOMINAL),
        deterministic: true,
        bounded: true,
        audit_box: AuditBox {
            state: vec![(-3.0, 3.0)],
            control: vec![(-1.0, 1.0)],
        },
        oracles: vec![OracleId::NoiseFree],
    })
}
