//! The single-document JSON report produced by `tcspmm report`.

use serde::Serialize;

use tcspmm::executor::VerifyReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct MatrixStats {
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    /// Average nonzeros per row.
    pub avg_l: f64,
}

#[derive(Serialize)]
pub struct ReorderSection {
    pub applied: bool,
    pub passes: usize,
    pub merges_accepted: usize,
    pub final_modularity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
}

#[derive(Serialize)]
pub struct TilingStats {
    pub windows: usize,
    pub blocks: usize,
    /// Average nonzeros per TC block; null for block-free (empty) matrices.
    pub mean_nnz_tc: Option<f64>,
}

#[derive(Serialize)]
pub struct FormatBytes {
    pub csr: usize,
    pub metcf: usize,
    pub bittcf: usize,
    pub bittcf_over_csr: f64,
    pub bittcf_over_metcf: f64,
}

#[derive(Serialize)]
pub struct BalanceSection {
    pub ibd: f64,
    pub balanced: bool,
    pub units: usize,
    pub segments: usize,
    /// One write-back per segment.
    pub write_backs: usize,
    pub max_predicted_s: f64,
    pub mean_predicted_s: f64,
    pub max_over_mean: f64,
    pub identity_max_over_mean: f64,
}

#[derive(Serialize)]
pub struct PipelineSection {
    pub profile: String,
    pub bandwidth_bytes_per_s: f64,
    pub tf32_flops: f64,
    pub n_blocks: usize,
    pub blocks_per_stage: usize,
    pub dtc_makespan_s: f64,
    pub acc_makespan_s: f64,
    pub gap_s: f64,
    pub dtc_bubble_s: f64,
    pub acc_bubble_s: f64,
}

#[derive(Serialize)]
pub struct Report {
    pub schema: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix_s: Option<u64>,
    pub input: String,
    pub seed: u64,
    pub feature_dim: usize,
    pub reorder_applied: bool,
    pub matrix: MatrixStats,
    pub reorder: ReorderSection,
    pub tiling_before: TilingStats,
    pub tiling_after: TilingStats,
    pub format_bytes: FormatBytes,
    pub balance: BalanceSection,
    pub pipeline: Vec<PipelineSection>,
    pub verify: VerifyReport,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
