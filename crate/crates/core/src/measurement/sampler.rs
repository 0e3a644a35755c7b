use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Distribution of the measurement times taken within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// A single `Unif[0, T]` time.
    UniformSingle,
    /// `m` independent `Unif[0, T]` times.
    IidUniform { m: usize },
    /// `{i T / m : i = 1..=m}`.
    Equidistant { m: usize },
    /// Each of `m` slots drawn from `{i T / m}` with `P(i T / m) ∝ lambda^i`.
    GeometricGrid { m: usize, lambda: f64 },
}

impl SamplerSpec {
    /// Measurements per episode.
    pub fn m(&self) -> usize {
        match *self {
            SamplerSpec::UniformSingle => 1,
            SamplerSpec::IidUniform { m }
            | SamplerSpec::Equidistant { m }
            | SamplerSpec::GeometricGrid { m, .. } => m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m() == 0 {
            return Err(Error::Config("sampler needs m >= 1".into()));
        }
        if let SamplerSpec::GeometricGrid { lambda, .. } = self {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Config(format!("sampler lambda must be > 0, got {lambda}")));
            }
        }
        Ok(())
    }

    /// Grid probabilities `P(i T / m)`, `i = 1..=m`, for the geometric sampler.
    pub fn grid_weights(m: usize, lambda: f64) -> Vec<f64> {
        // Shift the exponent so the largest weight is 1 and nothing overflows.
        let ln = lambda.ln();
        let raw: Vec<f64> = (1..=m).map(|i| ((i as f64 - m as f64) * ln).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Draws one episode's measurement times, in sampling order.
pub fn draw_measurement_times(sampler: &SamplerSpec, horizon: f64, seed: u64) -> Result<Vec<f64>> {
    sampler.validate()?;
    let mut rng = rng::stream(seed, &[rng::tag::TIMES]);
    let m = sampler.m();
    Ok(match *sampler {
        SamplerSpec::UniformSingle | SamplerSpec::IidUniform { .. } => {
            (0..m).map(|_| rng.random::<f64>() * horizon).collect()
        }
        SamplerSpec::Equidistant { m } => (1..=m).map(|i| (i as f64 / m as f64) * horizon).collect(),
        SamplerSpec::GeometricGrid { m, lambda } => {
            let weights = SamplerSpec::grid_weights(m, lambda);
            (0..m)
                .map(|_| {
                    let v: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut slot = m;
                    for (i, w) in weights.iter().enumerate() {
                        acc += w;
                        if v < acc {
                            slot = i + 1;
                            break;
                        }
                    }
                    (slot as f64 / m as f64) * horizon
                })
                .collect()
        }
    })
}
