use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AuditBox, EnvCatalogEntry, EnvConfig, OracleId};
use crate::error::{Error, Result};
use crate::function_classes::{Candidate, FeatureMap, FunctionClass, Hypothesis, Target};
use crate::measurement::MeasurementOracleConfig;
use crate::planner::CandidateGrid;
use crate::rng;
use crate::sde::{DynamicsSpec, InitialDistribution, LipschitzConstants, Policy, ScalarField, VectorField};

/// How reward candidates differ from the true reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardPerturbation {
    /// Shifts of the constant term: every policy ranks the same under each
    /// candidate.
    Offset,
    /// Shifts of `theta` along random feature directions.
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearGaussianParams {
    pub d: usize,
    /// Feature count: `p = d` uses the identity features and no control,
    /// `p > d` concatenates `p - d` control coordinates.
    pub p: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Frobenius norm of the drift matrix.
    pub drift_norm: f64,
    /// Norm of the reward weights.
    pub reward_norm: f64,
    pub reward_offset: f64,
    /// Size of the drift perturbations.
    pub rho_f: f64,
    /// Size of the reward perturbations.
    pub rho_r: f64,
    pub reward_perturbation: RewardPerturbation,
    /// Constant diffusion `c`.
    pub diffusion: f64,
    /// Measurement time step.
    pub delta: f64,
    /// Constant control levels (every control coordinate set to the level).
    pub controls: Vec<f64>,
    pub x0: f64,
    /// Explicit drift matrix (row-major `d x p`) instead of a seeded draw.
    pub theta_drift: Option<Vec<f64>>,
    pub theta_reward: Option<Vec<f64>>,
}

impl Default for LinearGaussianParams {
    fn default() -> Self {
        Self {
            d: 2,
            p: 3,
            seed: 0,
            horizon: 1.0,
            drift_norm: 0.8,
            reward_norm: 0.25,
            reward_offset: 0.5,
            rho_f: 0.5,
            rho_r: 0.05,
            reward_perturbation: RewardPerturbation::Offset,
            diffusion: 0.005,
            delta: 0.1,
            controls: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            x0: 0.0,
            theta_drift: None,
            theta_reward: None,
        }
    }
}

impl LinearGaussianParams {
    /// Fixed-truth configuration used for the learning benchmarks: the reward
    /// depends on `x_1` only, the true control pushes `x_1` down so `u = 0` is
    /// optimal, and the controls are one-sided so that drift candidates with
    /// the opposite sign lure the optimistic planner into `u = 1`.
    pub fn benchmark() -> Self {
        Self {
            rho_f: 1.0,
            theta_drift: Some(vec![-0.3, 0.0, -0.4, 0.0, -0.3, 0.3]),
            theta_reward: Some(vec![0.5, 0.0, 0.0]),
            controls: vec![0.0, 0.5, 1.0],
            ..Self::default()
        }
    }
}

/// Number of perturbation pairs on each side of the truth.
const PAIRS: usize = 4;

fn unit_direction(n: usize, r: &mut rng::SimRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *r)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn scaled_to(v: Vec<f64>, norm: f64) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|a| a * norm / n).collect()
    }
}

fn drift_field(features: FeatureMap, theta: Vec<f64>, d: usize) -> VectorField {
    VectorField::new(d, move |x, u, out| {
        let p = theta.len() / d;
        let mut phi = [0.0; 32];
        features.eval_into(x, u, &mut phi[..p]);
        for (i, o) in out.iter_mut().enumerate() {
            *o = theta[i * p..(i + 1) * p].iter().zip(&phi[..p]).map(|(a, b)| a * b).sum();
        }
        let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1.0 {
            out.iter_mut().for_each(|v| *v /= n);
        }
    })
}

fn reward_field(features: FeatureMap, theta: Vec<f64>, offset: f64) -> ScalarField {
    ScalarField::new(move |x, u| {
        let p = theta.len();
        let mut phi = [0.0; 32];
        features.eval_into(x, u, &mut phi[..p]);
        let v: f64 = theta.iter().zip(&phi[..p]).map(|(a, b)| a * b).sum();
        (v + offset).clamp(0.0, 1.0)
    })
}

/// Perturbations `truth + s rho D_j`, `s = +-1`, around the truth, which sits
/// at index `PAIRS`. A zero radius leaves only the truth.
fn perturbation_grid(truth: &[f64], rho: f64, dirs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rho == 0.0 {
        return vec![truth.to_vec()];
    }
    let shift = |dir: &[f64], s: f64| -> Vec<f64> { truth.iter().zip(dir).map(|(a, b)| a + s * rho * b).collect() };
    let mut out: Vec<Vec<f64>> = dirs[..PAIRS / 2].iter().flat_map(|d| [shift(d, -1.0), shift(d, 1.0)]).collect();
    out.push(truth.to_vec());
    out.extend(dirs[PAIRS / 2..].iter().flat_map(|d| [shift(d, -1.0), shift(d, 1.0)]));
    out
}

pub fn make_linear_gaussian(params: &LinearGaussianParams) -> Result<EnvCatalogEntry> {
    let LinearGaussianParams { d, p, .. } = *params;
    if d == 0 || p < d {
        return Err(Error::Config(format!("linear-gaussian needs 1 <= d <= p, got d = {d}, p = {p}")));
    }
    if p > 32 {
        return Err(Error::Config("linear-gaussian supports at most 32 features".into()));
    }
    if !(params.horizon > 0.0 && params.delta > 0.0 && params.diffusion >= 0.0) {
        return Err(Error::Config("linear-gaussian needs T > 0, delta > 0, diffusion >= 0".into()));
    }
    if params.rho_f < 0.0 || params.rho_r < 0.0 {
        return Err(Error::Config("perturbation radii must be nonnegative".into()));
    }
    let control_dim = p - d;
    let features = if control_dim == 0 { FeatureMap::Identity } else { FeatureMap::StateControlConcat };

    let mut r = rng::stream(params.seed, &[0x1ea7]);
    let theta_f = match &params.theta_drift {
        Some(t) if t.len() == d * p => t.clone(),
        Some(t) => return Err(Error::Config(format!("theta_drift has {} entries, expected {}", t.len(), d * p))),
        None => scaled_to(unit_direction(d * p, &mut r), params.drift_norm),
    };
    let theta_r = match &params.theta_reward {
        Some(t) if t.len() == p => t.clone(),
        Some(t) => return Err(Error::Config(format!("theta_reward has {} entries, expected {p}", t.len()))),
        None => scaled_to(unit_direction(p, &mut r), params.reward_norm),
    };
    let f_dirs: Vec<Vec<f64>> = (0..PAIRS).map(|_| unit_direction(d * p, &mut r)).collect();
    let r_dirs: Vec<Vec<f64>> = (0..PAIRS).map(|_| unit_direction(p, &mut r)).collect();

    let drift_params = perturbation_grid(&theta_f, params.rho_f, &f_dirs);
    let truth_drift = drift_params.len() / 2;
    let drift_candidates = drift_params
        .iter()
        .enumerate()
        .map(|(i, th)| Candidate {
            label: format!("f{i}"),
            params: th.clone(),
            hypothesis: Hypothesis::Drift(drift_field(features, th.clone(), d)),
        })
        .collect();

    // Reward parameters: `theta` followed by the offset.
    let mut truth_r = theta_r.clone();
    truth_r.push(params.reward_offset);
    let reward_params = match params.reward_perturbation {
        RewardPerturbation::Offset => {
            let mut e = vec![0.0; p + 1];
            e[p] = 1.0;
            let offsets: Vec<Vec<f64>> = (1..=PAIRS).map(|k| e.iter().map(|v| v * k as f64).collect()).collect();
            let mut grid = perturbation_grid(&truth_r, params.rho_r, &offsets);
            // Order by offset so the truth stays in the middle.
            grid.sort_by(|a, b| a[p].total_cmp(&b[p]));
            grid
        }
        RewardPerturbation::Feature => {
            let dirs: Vec<Vec<f64>> = r_dirs
                .iter()
                .map(|d| d.iter().copied().chain([0.0]).collect())
                .collect();
            perturbation_grid(&truth_r, params.rho_r, &dirs)
        }
    };
    let truth_reward = reward_params.len() / 2;
    let reward_candidates = reward_params
        .iter()
        .enumerate()
        .map(|(i, th)| Candidate {
            label: format!("b{i}"),
            params: th.clone(),
            hypothesis: Hypothesis::Reward(reward_field(features, th[..p].to_vec(), th[p])),
        })
        .collect();

    let drift_class = FunctionClass::finite(Target::Drift, drift_candidates)?;
    let reward_class = FunctionClass::finite(Target::Reward, reward_candidates)?;

    let frob = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let spec = DynamicsSpec {
        drift: drift_field(features, theta_f.clone(), d),
        diffusion: ScalarField::constant(params.diffusion),
        reward: reward_field(features, theta_r.clone(), params.reward_offset),
        horizon: params.horizon,
        state_dim: d,
        control_dim,
        lipschitz: LipschitzConstants::new(frob(&theta_f), frob(&theta_r), 0.0, 0.0)?,
    };

    let policies = if control_dim == 0 {
        vec![Policy::new(0, "uncontrolled", 0, |_, _| {})]
    } else {
        if params.controls.is_empty() {
            return Err(Error::Config("linear-gaussian needs at least one control level".into()));
        }
        params
            .controls
            .iter()
            .enumerate()
            .map(|(i, &c)| Policy::constant(i, vec![c; control_dim]))
            .collect()
    };
    let grid = CandidateGrid::new(policies, vec![InitialDistribution::point_mass(0, vec![params.x0; d])])?;
    let umax = params.controls.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let xr = params.x0.abs() + params.horizon + 0.5;
    let g_bound = (params.diffusion / params.delta.sqrt()).max(1e-6);
    Ok(EnvCatalogEntry {
        config: EnvConfig::LinearGaussian(params.clone()),
        spec,
        drift_class,
        reward_class,
        truth_drift,
        truth_reward,
        grid,
        measurement: MeasurementOracleConfig::exact(params.delta, g_bound),
        deterministic: params.diffusion == 0.0,
        bounded: true,
        audit_box: AuditBox {
            state: vec![(-xr, xr); d],
            control: vec![(-umax, umax); control_dim],
        },
        oracles: vec![OracleId::ConstantDiffusion],
    })
}
