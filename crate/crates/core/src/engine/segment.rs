//! Accounting for oversized files: split into an even number of equal
//! erasure-coded segments, any half of which suffice to recover the file.
//! Only the descriptor arithmetic is modeled; the code itself is not.

use crate::state::{NetworkParams, ProtocolError};
use crate::units::{Bytes, Tokens};

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub size: Bytes,
    pub value: Tokens,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPlan {
    pub segments: Vec<Segment>,
    /// Any this many segments recover the file (half of the total).
    pub recovery_threshold: u32,
}

/// Splits a file larger than `size_limit` into `m = 2 * ceil(size /
/// size_limit)` equal segments, each an independent descriptor worth
/// `2 * value / m` rounded up to a multiple of `min_value`.
pub fn split_large_file(
    size: Bytes,
    value: Tokens,
    params: &NetworkParams,
) -> Result<SegmentPlan, ProtocolError> {
    if size <= params.size_limit {
        return Err(ProtocolError::NotLarge);
    }
    let data_segments = size.div_ceil(params.size_limit);
    let total_segments = 2 * data_segments;
    let segment_size = size.div_ceil(data_segments);
    debug_assert!(segment_size <= params.size_limit);
    // ceil((2 * value / m) / min_value) * min_value, in exact integers.
    let per_segment = (2 * value as u128).div_ceil(total_segments as u128);
    let segment_value =
        per_segment.div_ceil(params.min_value as u128) as Tokens * params.min_value;
    let segments = vec![
        Segment {
            size: segment_size,
            value: segment_value,
        };
        total_segments as usize
    ];
    Ok(SegmentPlan {
        segments,
        recovery_threshold: data_segments as u32,
    })
}
