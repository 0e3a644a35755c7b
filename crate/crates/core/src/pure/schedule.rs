use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batch sizes, in episodes, between confidence-set rebuilds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    /// `B_1 = first`, `B_{i+1} = round(eta B_i)`; the last batch is cut to
    /// end exactly at the budget.
    Geometric { first: usize, eta: f64 },
    /// Explicit sizes, which must add up to the episode budget.
    Explicit { batches: Vec<usize> },
}

impl Schedule {
    /// Episodes (1-based) after which the sets are rebuilt; the last one is
    /// always `episodes`.
    pub fn boundaries(&self, episodes: usize) -> Result<Vec<usize>> {
        if episodes == 0 {
            return Err(Error::Config("schedule needs at least one episode".into()));
        }
        let mut out = Vec::new();
        match self {
            Schedule::Geometric { first, eta } => {
                if *first == 0 || !(*eta >= 1.0 && eta.is_finite()) {
                    return Err(Error::Config(format!(
                        "geometric schedule needs first >= 1 and eta >= 1, got first = {first}, eta = {eta}"
                    )));
                }
                let (mut size, mut end) = (*first as f64, 0usize);
                while end < episodes {
                    end = (end + size.round().max(1.0) as usize).min(episodes);
                    out.push(end);
                    size *= eta;
                }
            }
            Schedule::Explicit { batches } => {
                if batches.contains(&0) {
                    return Err(Error::Config("schedule batches must be positive".into()));
                }
                let total: usize = batches.iter().sum();
                if total != episodes {
                    return Err(Error::Config(format!(
                        "schedule batches sum to {total} but the budget is {episodes} episodes"
                    )));
                }
                let mut end = 0;
                for b in batches {
                    end += b;
                    out.push(end);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_from_two() {
        let s = Schedule::Geometric { first: 2, eta: 2.0 };
        assert_eq!(s.boundaries(30).unwrap(), vec![2, 6, 14, 30]);
        assert_eq!(s.boundaries(20).unwrap(), vec![2, 6, 14, 20]);
    }

    #[test]
    fn single_batch() {
        let s = Schedule::Explicit { batches: vec![16] };
        assert_eq!(s.boundaries(16).unwrap(), vec![16]);
    }

    #[test]
    fn explicit_batches_must_fill_the_budget() {
        let s = Schedule::Explicit { batches: vec![4, 4] };
        assert!(matches!(s.boundaries(10), Err(Error::Config(_))));
        assert!(Schedule::Geometric { first: 0, eta: 2.0 }.boundaries(4).is_err());
        assert!(Schedule::Geometric { first: 1, eta: 0.5 }.boundaries(4).is_err());
    }
}
