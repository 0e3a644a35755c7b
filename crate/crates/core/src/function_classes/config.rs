use serde::{Deserialize, Serialize};

use super::{linear_hypothesis, Candidate, FeatureMap, FunctionClass, Saturation, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    #[serde(default)]
    pub label: Option<String>,
    /// Row-major `out_dim x p` parameter matrix.
    pub params: Vec<f64>,
}

/// A finite class given as explicit parameter vectors over a named feature
/// map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteClassConfig {
    pub target: Target,
    /// Registry name: `identity`, `state-control-concat` or `fourier-k`.
    pub features: String,
    pub state_dim: usize,
    pub control_dim: usize,
    #[serde(default = "default_saturation")]
    pub saturation: Saturation,
    pub candidates: Vec<CandidateSpec>,
}

fn default_saturation() -> Saturation {
    Saturation::None
}

impl FiniteClassConfig {
    pub fn build(&self) -> Result<FunctionClass> {
        let features = FeatureMap::from_name(&self.features)?;
        let p = features.dim(self.state_dim, self.control_dim);
        let out_dim = match self.target {
            Target::Drift => self.state_dim,
            Target::Reward => 1,
        };
        let candidates = self
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if c.params.len() != out_dim * p {
                    return Err(Error::Config(format!(
                        "candidate {i} has {} parameters, expected {}",
                        c.params.len(),
                        out_dim * p
                    )));
                }
                Ok(Candidate {
                    label: c.label.clone().unwrap_or_else(|| format!("{}{i}", self.target.name())),
                    params: c.params.clone(),
                    hypothesis: linear_hypothesis(self.target, features, &c.params, out_dim, self.saturation),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FunctionClass::finite(self.target, candidates).map_err(|e| Error::Config(e.to_string()))
    }
}
