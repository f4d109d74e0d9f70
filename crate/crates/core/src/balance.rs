//! Sparsity-aware load balancing: the IBD imbalance metric, the per-TB cost
//! model, and repacking of TC blocks into bounded work units.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tile::RowWindowPlan;

/// Balancing triggers only when IBD exceeds this.
pub const IBD_THRESHOLD: f64 = 8.0;
/// Hard cap on TC blocks per work unit.
pub const MAX_BLOCKS_PER_TB: usize = 32;

/// Post-swap sparse-tile dimensions used by the cost model.
const MMA_M: usize = 8;
const MMA_K: usize = 8;

/// TF32 elements are 4 bytes on the wire.
const ELEMENT_BYTES: usize = 4;

/// Theoretical peak numbers of one GPU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardwareProfile {
    pub name: String,
    /// Memory bandwidth in bytes/second.
    pub mem_bandwidth: f64,
    /// Dense TF32 tensor-core throughput in FLOP/s.
    pub tf32_flops: f64,
}

impl HardwareProfile {
    pub fn new(name: impl Into<String>, mem_bandwidth: f64, tf32_flops: f64) -> Self {
        assert!(mem_bandwidth > 0.0 && tf32_flops > 0.0);
        HardwareProfile { name: name.into(), mem_bandwidth, tf32_flops }
    }

    pub fn rtx4090() -> Self {
        Self::new("rtx4090", 1008e9, 82.6e12)
    }

    pub fn a800() -> Self {
        Self::new("a800", 1935e9, 156e12)
    }

    pub fn h100() -> Self {
        Self::new("h100", 3.35e12, 494.7e12)
    }

    pub fn builtin() -> Vec<Self> {
        vec![Self::rtx4090(), Self::a800(), Self::h100()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rtx4090" => Some(Self::rtx4090()),
            "a800" => Some(Self::a800()),
            "h100" => Some(Self::h100()),
            _ => None,
        }
    }
}

/// Mean absolute deviation of TC-block counts per RowWindow.
///
/// Evaluated as `sum |n*c - total| / n^2` in integer arithmetic, which is
/// the same quantity but exact and independent of summation order.
pub fn compute_ibd(blocks_per_window: &[usize]) -> Result<f64> {
    if blocks_per_window.is_empty() {
        return Err(Error::EmptyWindowList);
    }
    let n = blocks_per_window.len() as u128;
    let total: u128 = blocks_per_window.iter().map(|&c| c as u128).sum();
    let dev: u128 =
        blocks_per_window.iter().map(|&c| (n * c as u128).abs_diff(total)).sum();
    Ok(dev as f64 / (n * n) as f64)
}

/// Which write-back expression the cost model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteBackModel {
    /// Write-back billed like the dense load, scaling with the block count.
    AsPrinted,
    /// Write-back billed as one M x FeatureDim output tile per TB.
    OutputScaled,
}

/// The three terms of the per-TB time model, in seconds:
/// `(load_dense, mma, write_back)`.
pub fn tb_time_terms(
    profile: &HardwareProfile,
    feature_dim: usize,
    blocks_in_tb: usize,
    wb_model: WriteBackModel,
) -> (f64, f64, f64) {
    let load =
        (MMA_K * feature_dim * blocks_in_tb * ELEMENT_BYTES) as f64 / profile.mem_bandwidth;
    let mma = (MMA_M * (2 * MMA_K - 1) * feature_dim) as f64 / profile.tf32_flops;
    let wb = match wb_model {
        WriteBackModel::AsPrinted => load,
        WriteBackModel::OutputScaled => {
            (MMA_M * feature_dim * ELEMENT_BYTES) as f64 / profile.mem_bandwidth
        }
    };
    (load, mma, wb)
}

/// Predicted SpMM time for one TB holding `blocks_in_tb` TC blocks.
pub fn predict_tb_time(profile: &HardwareProfile, feature_dim: usize, blocks_in_tb: usize) -> f64 {
    predict_tb_time_with(profile, feature_dim, blocks_in_tb, WriteBackModel::AsPrinted)
}

pub fn predict_tb_time_with(
    profile: &HardwareProfile,
    feature_dim: usize,
    blocks_in_tb: usize,
    wb_model: WriteBackModel,
) -> f64 {
    let (load, mma, wb) = tb_time_terms(profile, feature_dim, blocks_in_tb, wb_model);
    load + mma + wb
}

/// A contiguous run of TC blocks from one RowWindow, processed by one work
/// unit and ending in its own write-back of the window's C rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub window_id: usize,
    /// Global TC block index of the first block in the run.
    pub first_block: usize,
    pub block_count: usize,
    pub writes_back: bool,
}

/// One thread-block work unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorkUnit {
    pub segments: Vec<Segment>,
}

impl WorkUnit {
    pub fn block_count(&self) -> usize {
        self.segments.iter().map(|s| s.block_count).sum()
    }
}

/// Assignment of every TC block to a work unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub units: Vec<WorkUnit>,
    pub balanced: bool,
    pub ibd: f64,
}

impl Schedule {
    pub fn total_blocks(&self) -> usize {
        self.units.iter().map(WorkUnit::block_count).sum()
    }

    /// One write-back per segment.
    pub fn write_back_count(&self) -> usize {
        self.units.iter().map(|u| u.segments.len()).sum()
    }

    pub fn unit_block_counts(&self) -> Vec<usize> {
        self.units.iter().map(WorkUnit::block_count).collect()
    }
}

/// Builds the work-unit assignment for a tiling plan.
pub fn build_schedule<T: Scalar>(
    plan: &RowWindowPlan<T>,
    profile: &HardwareProfile,
    feature_dim: usize,
) -> Result<Schedule> {
    schedule_from_counts(&plan.blocks_per_window(), profile, feature_dim)
}

/// Schedule construction from per-window block counts.
///
/// Balanced windows (IBD <= 8) keep the identity assignment: one work unit
/// per nonempty window, one write-back each. Otherwise windows are split
/// into chunks of at most 32 blocks and packed first-fit-decreasing by
/// predicted time, never exceeding a full 32-block unit's predicted time or
/// the 32-block cap; every segment placed next to another window's blocks
/// carries its own cross-row write-back.
pub fn schedule_from_counts(
    counts: &[usize],
    profile: &HardwareProfile,
    feature_dim: usize,
) -> Result<Schedule> {
    let ibd = compute_ibd(counts)?;
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(counts.iter().scan(0, |acc, &c| {
            *acc += c;
            Some(*acc)
        }))
        .collect();

    if ibd <= IBD_THRESHOLD {
        let units = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(w, &c)| WorkUnit {
                segments: vec![Segment {
                    window_id: w,
                    first_block: offsets[w],
                    block_count: c,
                    writes_back: true,
                }],
            })
            .collect();
        return Ok(Schedule { units, balanced: false, ibd });
    }

    // Oversized windows become chains of <= 32-block chunks.
    let mut items: Vec<Segment> = Vec::new();
    for (w, &c) in counts.iter().enumerate() {
        let mut first = offsets[w];
        let mut left = c;
        while left > 0 {
            let take = left.min(MAX_BLOCKS_PER_TB);
            items.push(Segment {
                window_id: w,
                first_block: first,
                block_count: take,
                writes_back: true,
            });
            first += take;
            left -= take;
        }
    }

    let full_unit_time = predict_tb_time(profile, feature_dim, MAX_BLOCKS_PER_TB);
    items.sort_by(|a, b| {
        predict_tb_time(profile, feature_dim, b.block_count)
            .partial_cmp(&predict_tb_time(profile, feature_dim, a.block_count))
            .expect("times are finite")
            .then((a.window_id, a.first_block).cmp(&(b.window_id, b.first_block)))
    });

    let mut units: Vec<WorkUnit> = Vec::new();
    let mut unit_blocks: Vec<usize> = Vec::new();
    for item in items {
        let slot = (0..units.len()).find(|&i| {
            let merged = unit_blocks[i] + item.block_count;
            merged <= MAX_BLOCKS_PER_TB
                && predict_tb_time(profile, feature_dim, merged) <= full_unit_time
        });
        match slot {
            Some(i) => {
                unit_blocks[i] += item.block_count;
                units[i].segments.push(item);
            }
            None => {
                unit_blocks.push(item.block_count);
                units.push(WorkUnit { segments: vec![item] });
            }
        }
    }

    Ok(Schedule { units, balanced: true, ibd })
}

/// Predicted time of each work unit under the printed cost model.
pub fn unit_predicted_times(
    schedule: &Schedule,
    profile: &HardwareProfile,
    feature_dim: usize,
) -> Vec<f64> {
    schedule
        .units
        .iter()
        .map(|u| predict_tb_time(profile, feature_dim, u.block_count()))
        .collect()
}

/// Max/mean ratio of a positive sample; the report's uniformity measure.
pub fn max_over_mean(times: &[f64]) -> f64 {
    if times.is_empty() {
        return f64::NAN;
    }
    let max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    max / mean
}
