use alloc::format;

use serde::{Deserialize, Serialize};

use super::Tensor3;
use crate::error::{Error, Result};

/// Signed two's-complement fixed point with round-half-even and saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub total_bits: u8,
    pub fraction_bits: u8,
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        FixedPointFormat { total_bits: 16, fraction_bits: 8 }
    }
}

impl FixedPointFormat {
    pub fn new(total_bits: u8, fraction_bits: u8) -> Result<Self> {
        if total_bits > 53 || fraction_bits == 0 || fraction_bits >= total_bits {
            return Err(Error::InvalidConfig(format!(
                "fixed-point format needs 1 <= fraction_bits < total_bits <= 53, got ({total_bits}, {fraction_bits})"
            )));
        }
        Ok(FixedPointFormat { total_bits, fraction_bits })
    }

    /// Value of one least significant bit.
    pub fn lsb(&self) -> f64 {
        libm::ldexp(1.0, -(self.fraction_bits as i32))
    }

    pub fn min_value(&self) -> f64 {
        -libm::ldexp(1.0, (self.total_bits - 1 - self.fraction_bits) as i32)
    }

    pub fn max_value(&self) -> f64 {
        self.min_value().abs() - self.lsb()
    }

    pub fn quantize_value(&self, x: f64) -> f64 {
        if x.is_nan() {
            return 0.0;
        }
        let scale = libm::ldexp(1.0, self.fraction_bits as i32);
        let steps = libm::rint(x * scale);
        let lo = -libm::ldexp(1.0, self.total_bits as i32 - 1);
        let hi = -lo - 1.0;
        steps.clamp(lo, hi) / scale
    }
}

/// Rounds every value onto the format's grid.
pub fn quantize(t: &Tensor3, fmt: FixedPointFormat) -> Tensor3 {
    t.map(|v| fmt.quantize_value(v))
}
