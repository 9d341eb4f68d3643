use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Replacement};

/// Accuracy of a (fine-tuned) candidate model.
pub trait AccuracyOracle {
    /// Accuracy in `[0, 1]` after fine-tuning for `budget` steps.
    fn accuracy(&self, model: &ModelSpec, budget: u32) -> Result<f64>;

    /// Short label written into reports.
    fn describe(&self) -> String;

    /// True when accuracies are modeled rather than measured.
    fn is_synthetic(&self) -> bool {
        false
    }
}

/// `O`/`S` string of a replacement vector, bottom position first.
pub fn replacement_key(model: &ModelSpec) -> String {
    model
        .replacement_vector
        .iter()
        .map(|r| match r {
            Replacement::Origin => 'O',
            Replacement::Separable => 'S',
        })
        .collect()
}

/// Modeled accuracy: replacing the top position costs little and earns a
/// bonus, lower positions cost progressively more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub base: f64,
    /// Added once the top position is replaced.
    pub top_bonus: f64,
    pub top_penalty: f64,
    /// Penalty of the position just below the top.
    pub upper_penalty: f64,
    /// Penalty of the bottom position.
    pub bottom_penalty: f64,
    /// Amplitude of deterministic per-candidate jitter.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticOracle {
    /// One replaced position beats zero; every further one loses accuracy.
    fn default() -> Self {
        SyntheticOracle {
            base: 0.905,
            top_bonus: 0.03,
            top_penalty: 0.005,
            upper_penalty: 0.03,
            bottom_penalty: 0.06,
            jitter: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticOracle {
    /// Penalty of replacing position `pos` of `n` (0 = bottom).
    pub fn penalty(&self, pos: usize, n: usize) -> f64 {
        let from_top = n - 1 - pos;
        if from_top == 0 {
            return self.top_penalty;
        }
        let span = n.saturating_sub(2).max(1) as f64;
        self.upper_penalty + (self.bottom_penalty - self.upper_penalty) * (from_top - 1) as f64 / span
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl AccuracyOracle for SyntheticOracle {
    fn accuracy(&self, model: &ModelSpec, budget: u32) -> Result<f64> {
        let n = model.num_positions();
        let mut acc = self.base;
        let mut mask = 0u64;
        for (pos, r) in model.replacement_vector.iter().enumerate() {
            if *r == Replacement::Separable {
                acc -= self.penalty(pos, n);
                if pos + 1 == n {
                    acc += self.top_bonus;
                }
                mask = splitmix(mask ^ pos as u64);
            }
        }
        if self.jitter > 0.0 {
            let h = splitmix(self.seed ^ splitmix(mask ^ ((budget as u64) << 32)));
            let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
            acc += self.jitter * (2.0 * unit - 1.0);
        }
        Ok(acc.clamp(0.0, 1.0))
    }

    fn describe(&self) -> String {
        format!("synthetic (base {}, top bonus {}, seed {})", self.base, self.top_bonus, self.seed)
    }

    fn is_synthetic(&self) -> bool {
        true
    }
}

/// Replays measured accuracies keyed by [`replacement_key`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TableOracle {
    pub entries: BTreeMap<String, f64>,
}

impl TableOracle {
    pub fn new(entries: BTreeMap<String, f64>) -> Result<Self> {
        for (k, v) in &entries {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Oracle(format!("accuracy {v} for `{k}` is outside [0, 1]")));
            }
            if k.chars().any(|c| c != 'O' && c != 'S') {
                return Err(Error::Oracle(format!("key `{k}` must use only O and S")));
            }
        }
        Ok(TableOracle { entries })
    }
}

impl AccuracyOracle for TableOracle {
    fn accuracy(&self, model: &ModelSpec, _budget: u32) -> Result<f64> {
        let key = replacement_key(model);
        self.entries.get(&key).copied().ok_or_else(|| Error::Oracle(format!("no measured accuracy for `{key}`")))
    }

    fn describe(&self) -> String {
        format!("table ({} entries)", self.entries.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{replace_layer, vgg16, TensorShape};

    fn vgg() -> ModelSpec {
        vgg16(TensorShape { height: 224, width: 224, channels: 3 }).unwrap()
    }

    #[test]
    fn one_replacement_peaks() {
        let o = SyntheticOracle::default();
        let m0 = vgg();
        let m1 = replace_layer(&m0, 4).unwrap();
        let m2 = replace_layer(&m1, 3).unwrap();
        let a: alloc::vec::Vec<f64> = [&m0, &m1, &m2].iter().map(|m| o.accuracy(m, 1).unwrap()).collect();
        assert!(a[1] > a[0] && a[0] > a[2]);
    }

    #[test]
    fn top_beats_bottom() {
        let o = SyntheticOracle::default();
        let top = replace_layer(&vgg(), 4).unwrap();
        let bottom = replace_layer(&vgg(), 0).unwrap();
        assert!(o.accuracy(&top, 1).unwrap() > o.accuracy(&bottom, 1).unwrap());
    }

    #[test]
    fn jitter_is_deterministic() {
        let o = SyntheticOracle { jitter: 0.01, seed: 7, ..Default::default() };
        let m = replace_layer(&vgg(), 4).unwrap();
        assert_eq!(o.accuracy(&m, 3).unwrap(), o.accuracy(&m, 3).unwrap());
        assert_ne!(o.accuracy(&m, 3).unwrap(), o.accuracy(&m, 4).unwrap());
    }

    #[test]
    fn table_lookup() {
        let mut e = BTreeMap::new();
        e.insert("OOOOS".into(), 0.9);
        let t = TableOracle::new(e).unwrap();
        assert_eq!(t.accuracy(&replace_layer(&vgg(), 4).unwrap(), 1).unwrap(), 0.9);
        assert!(matches!(t.accuracy(&vgg(), 1), Err(Error::Oracle(_))));
    }
}
