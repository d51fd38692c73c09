use serde::{Deserialize, Serialize};

use super::config::Scheme;

/// Measurement size and pilot cost of one scheme.
///
/// `pilot_slots` counts pilot slots of length `T_s`; `solve_cost` is the
/// `m^3` proxy for inverting the innovation covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComplexityLedger {
    pub m: u64,
    pub pilot_slots: u64,
    pub solve_cost: u64,
}

impl ComplexityLedger {
    /// Per-frame costs: `(m, slots)`.
    pub fn per_frame(scheme: Scheme, codebook_k: usize) -> (u64, u64) {
        let k2 = (codebook_k * codebook_k) as u64;
        match scheme {
            Scheme::Proposed => (2, 1),
            Scheme::Abp => (2, k2),
            Scheme::Codebook => (2 * k2, k2),
        }
    }

    pub fn new(scheme: Scheme, codebook_k: usize) -> Self {
        Self { m: Self::per_frame(scheme, codebook_k).0, pilot_slots: 0, solve_cost: 0 }
    }

    /// Charges one frame.
    pub fn charge(&mut self, scheme: Scheme, codebook_k: usize) {
        let (m, slots) = Self::per_frame(scheme, codebook_k);
        self.pilot_slots += slots;
        self.solve_cost += m * m * m;
    }

    /// Closed-form totals after `frames` frames.
    pub fn expected(scheme: Scheme, codebook_k: usize, frames: u64) -> Self {
        let (m, slots) = Self::per_frame(scheme, codebook_k);
        Self { m, pilot_slots: frames * slots, solve_cost: frames * m * m * m }
    }
}
