//! Deterministic discrete-event model of the SpMM tile pipeline.
//!
//! Three contended resources: the async copy engine (A tiles and their
//! column maps going to shared memory), the load path (B tiles going to
//! registers) and the tensor core. Two rule sets:
//!
//! * `dtc`: a single B register buffer, so the B load for iteration i may
//!   start only after MMA i-1 has finished; the A copy for i+1 overlaps
//!   MMA i.
//! * `acc`: double buffers for both B and A, so the loads for iteration i+1
//!   are issued when MMA i starts.
//!
//! MMA i starts once its A and B tiles are resident and the previous MMA is
//! done; a single write-back follows the last MMA. The makespan difference
//! between the two rule sets is the GAP.

use serde::Serialize;

use crate::balance::{tb_time_terms, HardwareProfile, WriteBackModel};
use crate::error::{Error, Result};
use crate::tile::WINDOW_HEIGHT;

/// Stage durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageDurations {
    /// One A tile plus its column map, global memory to shared memory.
    pub g_to_shm_a: f64,
    /// One B tile, global memory to registers.
    pub g_to_reg_b: f64,
    /// One tile MMA.
    pub tc_mma: f64,
    /// Final C write-back.
    pub wb: f64,
}

impl StageDurations {
    fn assert_valid(&self) {
        assert!(
            self.g_to_shm_a >= 0.0 && self.g_to_reg_b >= 0.0 && self.tc_mma >= 0.0
                && self.wb >= 0.0,
            "stage durations must be non-negative"
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Resource {
    CopyEngine,
    LoadPath,
    TensorCore,
    WriteBack,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub resource: Resource,
    pub label: String,
    pub start: f64,
    pub end: f64,
}

/// Timed events of one simulated RowWindow stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineTrace {
    pub n_blocks: usize,
    pub events: Vec<TraceEvent>,
    pub makespan: f64,
    /// Total MMA time, `n_blocks * tc_mma`.
    pub tc_busy: f64,
    /// Tensor-core idle time between the first MMA start and the last MMA
    /// end; the sum of inter-MMA gaps, hence never negative.
    pub bubble: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BufferPolicy {
    /// Single B register buffer: B load i waits for MMA i-1 to end.
    SingleB,
    /// Double buffers: loads for i+1 are issued at MMA i start.
    DoubleB,
}

fn run_pipeline(
    stages: &[(f64, f64, f64)], // per stage: (a copy, b load, mma)
    wb: f64,
    policy: BufferPolicy,
    n_blocks: usize,
    tc_mma_per_block: f64,
) -> PipelineTrace {
    let n = stages.len();
    assert!(n >= 1);
    let mut events = Vec::with_capacity(3 * n + 1);
    let mut a_end = 0.0f64;
    let mut b_end = 0.0f64;
    let mut prev_mma_start = 0.0f64;
    let mut prev_mma_end = 0.0f64;
    let mut bubble = 0.0f64;

    for (i, &(da, db, dm)) in stages.iter().enumerate() {
        let a_start = if i == 0 { 0.0 } else { a_end.max(prev_mma_start) };
        let a_done = a_start + da;
        events.push(TraceEvent {
            resource: Resource::CopyEngine,
            label: format!("GToSHM A{i}"),
            start: a_start,
            end: a_done,
        });

        let b_start = if i == 0 {
            0.0
        } else {
            match policy {
                BufferPolicy::SingleB => b_end.max(prev_mma_end),
                BufferPolicy::DoubleB => b_end.max(prev_mma_start),
            }
        };
        let b_done = b_start + db;
        events.push(TraceEvent {
            resource: Resource::LoadPath,
            label: format!("GToReg B{i}"),
            start: b_start,
            end: b_done,
        });

        let mma_start = a_done.max(b_done).max(prev_mma_end);
        let mma_end = mma_start + dm;
        events.push(TraceEvent {
            resource: Resource::TensorCore,
            label: format!("TCMMA {i}"),
            start: mma_start,
            end: mma_end,
        });

        if i > 0 {
            bubble += mma_start - prev_mma_end;
        }
        a_end = a_done;
        b_end = b_done;
        prev_mma_start = mma_start;
        prev_mma_end = mma_end;
    }

    events.push(TraceEvent {
        resource: Resource::WriteBack,
        label: "WB".to_string(),
        start: prev_mma_end,
        end: prev_mma_end + wb,
    });

    PipelineTrace {
        n_blocks,
        events,
        makespan: prev_mma_end + wb,
        tc_busy: n_blocks as f64 * tc_mma_per_block,
        bubble,
    }
}

fn staged(n_blocks: usize, d: &StageDurations, blocks_per_stage: usize) -> Vec<(f64, f64, f64)> {
    assert!(n_blocks >= 1, "need at least one block");
    assert!(blocks_per_stage >= 1);
    let mut stages = Vec::new();
    let mut left = n_blocks;
    while left > 0 {
        let k = left.min(blocks_per_stage) as f64;
        stages.push((d.g_to_shm_a * k, d.g_to_reg_b * k, d.tc_mma * k));
        left -= left.min(blocks_per_stage);
    }
    stages
}

/// Baseline pipeline: single B register buffer.
pub fn simulate_dtc(n_blocks: usize, d: &StageDurations) -> PipelineTrace {
    simulate_dtc_staged(n_blocks, d, 1)
}

pub fn simulate_dtc_staged(
    n_blocks: usize,
    d: &StageDurations,
    blocks_per_stage: usize,
) -> PipelineTrace {
    d.assert_valid();
    run_pipeline(&staged(n_blocks, d, blocks_per_stage), d.wb, BufferPolicy::SingleB, n_blocks, d.tc_mma)
}

/// Prefetching pipeline: double buffers for B and for A.
pub fn simulate_acc(n_blocks: usize, d: &StageDurations) -> PipelineTrace {
    simulate_acc_staged(n_blocks, d, 1)
}

pub fn simulate_acc_staged(
    n_blocks: usize,
    d: &StageDurations,
    blocks_per_stage: usize,
) -> PipelineTrace {
    d.assert_valid();
    run_pipeline(&staged(n_blocks, d, blocks_per_stage), d.wb, BufferPolicy::DoubleB, n_blocks, d.tc_mma)
}

/// Makespan saved by the prefetching pipeline on the same workload.
pub fn gap(dtc: &PipelineTrace, acc: &PipelineTrace) -> Result<f64> {
    if dtc.n_blocks != acc.n_blocks {
        return Err(Error::WorkloadMismatch(dtc.n_blocks, acc.n_blocks));
    }
    Ok(dtc.makespan - acc.makespan)
}

/// Per-block stage durations from a hardware profile and feature dimension.
///
/// B load, MMA and write-back reuse the cost-model terms at one block per
/// TB; the A copy moves one 64-value tile plus its 8-entry column map.
/// Bitmap decompression is folded into the A copy, which overlaps memory
/// access.
pub fn durations_from_profile(profile: &HardwareProfile, feature_dim: usize) -> StageDurations {
    let (load, mma, wb) = tb_time_terms(profile, feature_dim, 1, WriteBackModel::AsPrinted);
    let a_bytes = (64 + WINDOW_HEIGHT) * 4;
    StageDurations {
        g_to_shm_a: a_bytes as f64 / profile.mem_bandwidth,
        g_to_reg_b: load,
        tc_mma: mma,
        wb,
    }
}

/// Chrome trace-event JSON (`chrome://tracing`, Perfetto); timestamps in
/// microseconds on one pid with a tid per resource.
pub fn chrome_trace_json(trace: &PipelineTrace) -> String {
    let tid = |r: Resource| match r {
        Resource::CopyEngine => 0,
        Resource::LoadPath => 1,
        Resource::TensorCore => 2,
        Resource::WriteBack => 3,
    };
    let mut items = Vec::new();
    for (name, id) in [
        ("GToSHM (copy engine)", 0),
        ("GToReg (load path)", 1),
        ("TCMMA (tensor core)", 2),
        ("WB", 3),
    ] {
        items.push(serde_json::json!({
            "ph": "M", "name": "thread_name", "pid": 0, "tid": id,
            "args": {"name": name},
        }));
    }
    for e in &trace.events {
        items.push(serde_json::json!({
            "ph": "X",
            "name": e.label,
            "cat": "pipeline",
            "pid": 0,
            "tid": tid(e.resource),
            "ts": e.start * 1e6,
            "dur": (e.end - e.start) * 1e6,
        }));
    }
    serde_json::to_string_pretty(&items).expect("trace serializes")
}
