use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capacities and rates of a target FPGA board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    pub bandwidth_gbps: f64,
    pub dsp_total: u64,
    /// On-chip memory blocks (M20K on Stratix V).
    pub bram_blocks: u64,
    pub alm_total: u64,
    pub clock_mhz: f64,
}

impl PlatformSpec {
    /// Stratix V 5SGSD8 with 38 GB/s of off-chip bandwidth at 200 MHz.
    pub const STRATIX_V: PlatformSpec =
        PlatformSpec { bandwidth_gbps: 38.0, dsp_total: 1963, bram_blocks: 2567, alm_total: 262_400, clock_mhz: 200.0 };

    pub fn validate(&self) -> Result<()> {
        let positive = self.bandwidth_gbps > 0.0
            && self.bandwidth_gbps.is_finite()
            && self.clock_mhz > 0.0
            && self.clock_mhz.is_finite()
            && self.dsp_total > 0
            && self.bram_blocks > 0
            && self.alm_total > 0;
        if !positive {
            return Err(Error::InvalidConfig(format!("platform values must all be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn with_bandwidth(self, bandwidth_gbps: f64) -> Self {
        PlatformSpec { bandwidth_gbps, ..self }
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }
}

impl Default for PlatformSpec {
    fn default() -> Self {
        Self::STRATIX_V
    }
}
