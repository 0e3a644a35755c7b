use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named feature maps `phi(x, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FeatureMap {
    /// `phi(x, u) = x`.
    Identity,
    /// `phi(x, u) = [x, u]`.
    StateControlConcat,
    /// `[sin(j z_i), cos(j z_i)]` for `j = 1..=k` over `z = [x, u]`, scaled to unit norm.
    Fourier { k: usize },
}

impl FeatureMap {
    /// Looks up a registry name such as `identity`, `state-control-concat` or `fourier-3`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "state-control-concat" => Ok(Self::StateControlConcat),
            _ => name
                .strip_prefix("fourier-")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| Self::Fourier { k })
                .ok_or_else(|| Error::Config(format!("unknown feature map `{name}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::StateControlConcat => "state-control-concat".into(),
            Self::Fourier { k } => format!("fourier-{k}"),
        }
    }

    pub fn dim(&self, state_dim: usize, control_dim: usize) -> usize {
        match self {
            Self::Identity => state_dim,
            Self::StateControlConcat => state_dim + control_dim,
            Self::Fourier { k } => 2 * k * (state_dim + control_dim),
        }
    }

    /// A bound on `||phi||` when it holds for every input.
    pub fn universal_bound(&self) -> Option<f64> {
        match self {
            Self::Fourier { .. } => Some(1.0),
            _ => None,
        }
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            Self::Identity => out.copy_from_slice(x),
            Self::StateControlConcat => {
                out[..x.len()].copy_from_slice(x);
                out[x.len()..].copy_from_slice(u);
            }
            Self::Fourier { k } => {
                let n = x.len() + u.len();
                let scale = 1.0 / ((k * n) as f64).sqrt();
                let mut o = 0;
                for z in x.iter().chain(u) {
                    for j in 1..=*k {
                        let (s, c) = (j as f64 * z).sin_cos();
                        out[o] = scale * s;
                        out[o + 1] = scale * c;
                        o += 2;
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim(x.len(), u.len())];
        self.eval_into(x, u, &mut out);
        out
    }
}
