use alloc::format;

use serde::{Deserialize, Serialize};

use super::{Dims, Seq};
use crate::error::{Error, Result};

/// Sizing of the intermediate buffer between layers `i-1` and `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferOption {
    /// Sized like the output buffer of layer `i-1`.
    MatchPrev,
    /// Sized like the input buffer of layer `i`.
    MatchNext,
    Double,
}

impl BufferOption {
    pub const ALL: [BufferOption; 3] = [BufferOption::MatchPrev, BufferOption::MatchNext, BufferOption::Double];
}

/// Words in the buffer feeding layer `i`. `tile` and `parallelism` are layer
/// `i`'s; its channel tile and channel parallelism equal layer `i-1`'s filter
/// tile and filter parallelism.
pub fn buffer_words(prev: Seq, cur: Seq, tile: Dims, parallelism: Dims, option: BufferOption) -> Result<u64> {
    use BufferOption::*;
    use Seq::*;
    let plane = tile.h as u64 * tile.w as u64;
    let chunk = parallelism.c as u64 * plane;
    let full = tile.c as u64 * plane;
    let words = match ((prev, cur), option) {
        ((FilterMajor, ChannelMajor) | (FilterMajor, FilterMajor), MatchPrev) => chunk,
        ((FilterMajor, ChannelMajor) | (FilterMajor, FilterMajor), Double) => 2 * chunk,
        ((ChannelMajor, FilterMajor) | (ChannelMajor, ChannelMajor), MatchPrev) => full,
        ((ChannelMajor, FilterMajor) | (ChannelMajor, ChannelMajor), Double) => 2 * full,
        ((ChannelMajor, ChannelMajor), MatchNext) => {
            return Err(Error::InefficientConfig(format!(
                "(CM, CM) buffer sized to the consumer input holds {full} words but the producer holds a full tile until it finishes"
            )))
        }
        (_, MatchNext) => full,
    };
    Ok(words)
}
