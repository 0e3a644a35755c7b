//! Benchmark environments with known truth: each entry bundles the true
//! dynamics, finite drift and reward classes that contain the truth at a
//! known index, the policy and initial-distribution grid, and the default
//! measurement setup.

mod deterministic;
mod linear_gaussian;
mod ou;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_classes::{FunctionClass, Hypothesis};
use crate::measurement::MeasurementOracleConfig;
use crate::planner::{CandidateGrid, ORACLE_ROLLOUTS};
use crate::rng;
use crate::sde::DynamicsSpec;

pub use deterministic::{make_deterministic_1d, Deterministic1dParams};
pub use linear_gaussian::{make_linear_gaussian, LinearGaussianParams, RewardPerturbation};
pub use ou::{make_ou, OuParams};

/// Environment name plus its parameters, as written in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvConfig {
    LinearGaussian(LinearGaussianParams),
    Ou(OuParams),
    #[serde(rename = "deterministic-1d")]
    Deterministic1d(Deterministic1dParams),
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::LinearGaussian(_) => "linear-gaussian",
            EnvConfig::Ou(_) => "ou",
            EnvConfig::Deterministic1d(_) => "deterministic-1d",
        }
    }

    pub fn build(&self) -> Result<EnvCatalogEntry> {
        match self {
            EnvConfig::LinearGaussian(p) => make_linear_gaussian(p),
            EnvConfig::Ou(p) => make_ou(p),
            EnvConfig::Deterministic1d(p) => make_deterministic_1d(p),
        }
    }
}

/// Closed-form facts an entry can be checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleId {
    /// Second moments of the OU process.
    OuMoments,
    /// No noise anywhere: one rollout gives exact values.
    NoiseFree,
    /// Drift noise variance `g^2 / delta` is constant.
    ConstantDiffusion,
}

/// Box from which audit points `(x, u)` are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBox {
    pub state: Vec<(f64, f64)>,
    pub control: Vec<(f64, f64)>,
}

impl AuditBox {
    pub fn sample(&self, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut r = rng::stream(seed, &[0xa0d1]);
        let mut draw = |b: &[(f64, f64)]| -> Vec<f64> {
            b.iter().map(|(lo, hi)| lo + (hi - lo) * r.random::<f64>()).collect()
        };
        (0..n).map(|_| (draw(&self.state), draw(&self.control))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EnvCatalogEntry {
    pub config: EnvConfig,
    pub spec: DynamicsSpec,
    pub drift_class: FunctionClass,
    pub reward_class: FunctionClass,
    pub truth_drift: usize,
    pub truth_reward: usize,
    pub grid: CandidateGrid,
    pub measurement: MeasurementOracleConfig,
    /// No diffusion and point-mass initial states.
    pub deterministic: bool,
    /// Whether `||f|| <= 1` and `b in [0, 1]` are expected to hold.
    pub bounded: bool,
    pub audit_box: AuditBox,
    pub oracles: Vec<OracleId>,
}

impl EnvCatalogEntry {
    pub fn name(&self) -> &'static str {
        self.config.name()
    }

    pub fn dt(&self) -> f64 {
        self.spec.default_dt()
    }

    /// Rollouts needed for exact-enough true values.
    pub fn oracle_rollouts(&self) -> usize {
        if self.deterministic {
            1
        } else {
            ORACLE_ROLLOUTS
        }
    }

    /// Truth membership, boundedness and Lipschitz audits on `n` sampled
    /// points.
    pub fn audit(&self, n: usize, seed: u64) -> Result<AuditReport> {
        let points = self.audit_box.sample(n, seed);
        check_truth(&self.drift_class, self.truth_drift, &Hypothesis::Drift(self.spec.drift.clone()), &points)?;
        check_truth(
            &self.reward_class,
            self.truth_reward,
            &Hypothesis::Reward(self.spec.reward.clone()),
            &points,
        )?;
        if self.bounded {
            self.drift_class.audit_bounds(&points)?;
            self.reward_class.audit_bounds(&points)?;
        }
        let slopes = lipschitz_slopes(self, &points);
        let lc = self.spec.lipschitz;
        for (name, slope, declared) in [
            ("drift", slopes.drift, lc.l_f),
            ("reward", slopes.reward, lc.l_b),
            ("diffusion", slopes.diffusion, lc.l_g),
            ("policy", slopes.policy, lc.l_pi),
        ] {
            if slope > declared * 1.05 + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "{name} slope {slope} exceeds the declared Lipschitz constant {declared}"
                )));
            }
        }
        Ok(AuditReport { points: n, slopes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub drift: f64,
    pub reward: f64,
    pub diffusion: f64,
    pub policy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub points: usize,
    pub slopes: Slopes,
}

fn check_truth(
    class: &FunctionClass,
    index: usize,
    truth: &Hypothesis,
    points: &[(Vec<f64>, Vec<f64>)],
) -> Result<()> {
    let member = class.hypothesis(index).ok_or_else(|| {
        Error::InvalidArgument(format!("truth index {index} is outside the {} class", class.target.name()))
    })?;
    let diff = member.squared_difference(truth)?;
    if points.iter().any(|(x, u)| diff.eval(x, u) != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{} class member {index} differs from the truth",
            class.target.name()
        )));
    }
    Ok(())
}

/// Largest finite-difference slopes over consecutive pairs of nearby points.
fn lipschitz_slopes(entry: &EnvCatalogEntry, points: &[(Vec<f64>, Vec<f64>)]) -> Slopes {
    let spec = &entry.spec;
    let norm = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let mut s = Slopes {
        drift: 0.0,
        reward: 0.0,
        diffusion: 0.0,
        policy: 0.0,
    };
    for (i, (x, u)) in points.iter().enumerate() {
        // Pair each point with a small displacement towards the next one.
        let (x2, u2) = &points[(i + 1) % points.len()];
        let h = 1e-3;
        let xb: Vec<f64> = x.iter().zip(x2).map(|(a, b)| a + h * (b - a)).collect();
        let ub: Vec<f64> = u.iter().zip(u2).map(|(a, b)| a + h * (b - a)).collect();
        let dz = (norm(x, &xb).powi(2) + norm(u, &ub).powi(2)).sqrt();
        if dz == 0.0 {
            continue;
        }
        s.drift = s.drift.max(norm(&spec.drift.eval(x, u), &spec.drift.eval(&xb, &ub)) / dz);
        s.reward = s.reward.max((spec.reward.eval(x, u) - spec.reward.eval(&xb, &ub)).abs() / dz);
        s.diffusion = s.diffusion.max((spec.diffusion.eval(x, u) - spec.diffusion.eval(&xb, &ub)).abs() / dz);
        let dx = norm(x, &xb);
        if dx > 0.0 {
            for p in &entry.grid.policies {
                s.policy = s.policy.max(norm(&p.apply(x), &p.apply(&xb)) / dx);
            }
        }
    }
    s
}

/// One line per catalog entry, for listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub defaults: EnvConfig,
}

pub fn catalog() -> Vec<CatalogInfo> {
    vec![
        CatalogInfo {
            name: "linear-gaussian",
            description: "saturated linear drift over state-control features, constant diffusion, clipped linear reward",
            defaults: EnvConfig::LinearGaussian(LinearGaussianParams::default()),
        },
        CatalogInfo {
            name: "ou",
            description: "Ornstein-Uhlenbeck dx = -u x dt + sqrt(2) dw with reward alpha x (+ bonus u)",
            defaults: EnvConfig::Ou(OuParams::default()),
        },
        CatalogInfo {
            name: "deterministic-1d",
            description: "noise-free tanh drift for exact traces",
            defaults: EnvConfig::Deterministic1d(Deterministic1dParams::default()),
        },
    ]
}

/// Builds a catalog entry from its name and a JSON parameter object.
pub fn lookup(name: &str, params: serde_json::Value) -> Result<EnvCatalogEntry> {
    let mut obj = match params {
        serde_json::Value::Null => serde_json::Map::new(),
        serde_json::Value::Object(m) => m,
        other => return Err(Error::Config(format!("environment parameters must be a table, got {other}"))),
    };
    obj.insert("name".into(), serde_json::Value::String(name.into()));
    let cfg: EnvConfig = serde_json::from_value(serde_json::Value::Object(obj))
        .map_err(|e| Error::Config(format!("environment `{name}`: {e}")))?;
    cfg.build()
}
