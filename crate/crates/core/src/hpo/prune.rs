use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Successive-halving schedule: rung epochs and reduction factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub rungs: Vec<usize>,
    pub eta: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            rungs: vec![5, 15, 45],
            eta: 3,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta < 2 || self.rungs.is_empty() || self.rungs.windows(2).any(|w| w[0] >= w[1]) || self.rungs[0] == 0 {
            return Err(Error::InvalidInput(format!("invalid pruning schedule {self:?}")));
        }
        Ok(())
    }

    pub fn rung_index(&self, epoch: usize) -> Option<usize> {
        self.rungs.iter().position(|&r| r == epoch)
    }
}

/// Whether `loss` falls outside the best `max(1, n/eta)` of the `n` losses
/// reported at a rung. `reported` must include `loss` itself. Fewer than
/// `eta` reporters never prune.
pub fn should_prune(loss: f64, reported: &[f64], eta: usize) -> bool {
    let n = reported.len();
    if n < eta {
        return false;
    }
    let keep = (n / eta).max(1);
    let better = reported.iter().filter(|&&r| r < loss).count();
    !loss.is_finite() || better >= keep
}
