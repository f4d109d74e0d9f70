//! Batch front-end wiring the toolkit: ingest -> reorder -> encode ->
//! verify -> balance -> simulate -> report.

mod report;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use anyhow::{bail, Context, Result};
use byteorder::{LittleEndian, WriteBytesExt};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tcspmm::balance::{
    build_schedule, max_over_mean, predict_tb_time_with, HardwareProfile, Schedule,
    WriteBackModel,
};
use tcspmm::bittcf::{
    bittcf_index_bytes, csr_index_bytes, decode, encode, deserialize, metcf_index_bytes,
    serialize,
};
use tcspmm::executor::{spmm_bittcf, verify};
use tcspmm::matrix::{apply_row_permutation, CsrMatrix, DenseMatrix, Permutation};
use tcspmm::mm::{parse_matrix_market, write_matrix_market};
use tcspmm::pipesim::{
    chrome_trace_json, durations_from_profile, gap, simulate_acc_staged, simulate_dtc_staged,
    PipelineTrace,
};
use tcspmm::reorder::{reorder, ReorderStats};
use tcspmm::tile::{plan_tiles, RowWindowPlan};

use report::{
    BalanceSection, FormatBytes, MatrixStats, PipelineSection, Report, ReorderSection,
    TilingStats, SCHEMA_VERSION,
};

/// Verification failures above this relative error flip the exit status.
const VERIFY_REL_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "tcspmm", version, about = "Tensor-core SpMM host toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print matrix statistics (rows, cols, nnz, AvgL).
    Info(CommonArgs),
    /// Compute the data-affinity permutation; write it as newline-separated
    /// integers in old-index order.
    Reorder(CommonArgs),
    /// Convert a matrix into the .btcf container (no reordering).
    Encode(CommonArgs),
    /// Convert a .btcf container back to MatrixMarket.
    Decode(CommonArgs),
    /// Multiply by a seeded random dense matrix; dump C as binary f32.
    Spmm(CommonArgs),
    /// Build the TC-block work-unit schedule and write it as JSON.
    Balance(CommonArgs),
    /// Simulate the baseline and prefetching pipelines.
    Simulate(CommonArgs),
    /// Run the full chain and write a single JSON document.
    Report(CommonArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileName {
    Rtx4090,
    A800,
    H100,
}

#[derive(Args)]
struct CommonArgs {
    /// Input matrix: .mtx (MatrixMarket coordinate) or .btcf.
    #[arg(long)]
    input: PathBuf,

    /// Output artifact; JSON documents go to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,

    /// Columns of the dense operand B.
    #[arg(long, default_value_t = 128)]
    feature_dim: usize,

    /// Hardware profile; `report` covers all three when omitted.
    #[arg(long, value_enum)]
    profile: Option<ProfileName>,

    /// Seed for the dense operand generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Skip the reordering step of the chain.
    #[arg(long)]
    no_reorder: bool,

    /// Machine-readable output for `info` and `reorder`.
    #[arg(long)]
    json: bool,

    /// Omit timestamps and wall-clock timings so identical runs produce
    /// byte-identical output.
    #[arg(long)]
    deterministic: bool,

    /// Override the profile's memory bandwidth, bytes/second.
    #[arg(long)]
    bandwidth: Option<f64>,

    /// Override the profile's TF32 throughput, FLOP/second.
    #[arg(long)]
    flops: Option<f64>,

    /// Bill write-back as one output tile instead of the load expression.
    #[arg(long)]
    corrected_wb: bool,

    /// TC blocks staged per pipeline iteration.
    #[arg(long, default_value_t = 1)]
    blocks_per_stage: usize,

    /// Simulate this many TC blocks instead of the matrix's block count.
    #[arg(long)]
    n_blocks: Option<usize>,

    /// Also write a Chrome-trace JSON of the prefetching pipeline here.
    #[arg(long)]
    chrome_trace: Option<PathBuf>,
}

impl CommonArgs {
    fn resolved_profile(&self) -> HardwareProfile {
        let base = match self.profile.unwrap_or(ProfileName::A800) {
            ProfileName::Rtx4090 => HardwareProfile::rtx4090(),
            ProfileName::A800 => HardwareProfile::a800(),
            ProfileName::H100 => HardwareProfile::h100(),
        };
        self.apply_overrides(base)
    }

    fn apply_overrides(&self, mut p: HardwareProfile) -> HardwareProfile {
        if self.bandwidth.is_some() || self.flops.is_some() {
            p = HardwareProfile::new(
                format!("{}-custom", p.name),
                self.bandwidth.unwrap_or(p.mem_bandwidth),
                self.flops.unwrap_or(p.tf32_flops),
            );
        }
        p
    }

    /// Profiles the report iterates: the explicit/overridden one, or all
    /// built-ins.
    fn report_profiles(&self) -> Vec<HardwareProfile> {
        if self.profile.is_some() || self.bandwidth.is_some() || self.flops.is_some() {
            vec![self.resolved_profile()]
        } else {
            HardwareProfile::builtin()
        }
    }

    fn wb_model(&self) -> WriteBackModel {
        if self.corrected_wb {
            WriteBackModel::OutputScaled
        } else {
            WriteBackModel::AsPrinted
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Info(args) => cmd_info(&args),
        Command::Reorder(args) => cmd_reorder(&args),
        Command::Encode(args) => cmd_encode(&args),
        Command::Decode(args) => cmd_decode(&args),
        Command::Spmm(args) => cmd_spmm(&args),
        Command::Balance(args) => cmd_balance(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn load_matrix(path: &Path) -> Result<CsrMatrix<f64>> {
    let is_btcf = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("btcf"));
    if is_btcf {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let t = deserialize::<f64>(&bytes)?;
        Ok(decode(&t)?)
    } else {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let coo = parse_matrix_market::<f64>(BufReader::new(file))
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(tcspmm::matrix::coo_to_csr(&coo))
    }
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn matrix_stats(a: &CsrMatrix<f64>) -> MatrixStats {
    MatrixStats {
        rows: a.num_rows,
        cols: a.num_cols,
        nnz: a.nnz(),
        avg_l: if a.num_rows == 0 { 0.0 } else { a.nnz() as f64 / a.num_rows as f64 },
    }
}

fn cmd_info(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    let stats = matrix_stats(&a);
    let text = if args.json {
        let mut s = serde_json::to_string(&stats)?;
        s.push('\n');
        s
    } else {
        format!(
            "rows: {}\ncols: {}\nnnz: {}\navg_l: {}\n",
            stats.rows, stats.cols, stats.nnz, stats.avg_l
        )
    };
    emit(&text, args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ReorderSummary {
    passes: usize,
    merges_accepted: usize,
    final_modularity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_s: Option<f64>,
    mean_nnz_tc_before: Option<f64>,
    mean_nnz_tc_after: Option<f64>,
}

fn cmd_reorder(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    let output = args.output.as_deref().context("reorder needs --output for the permutation")?;
    let (reordered, perm, stats) = reorder(&a)?;
    fs::write(output, perm.to_text())
        .with_context(|| format!("writing {}", output.display()))?;

    let summary = ReorderSummary {
        passes: stats.passes,
        merges_accepted: stats.merges_accepted,
        final_modularity: stats.final_modularity,
        elapsed_s: (!args.deterministic).then(|| stats.elapsed.as_secs_f64()),
        mean_nnz_tc_before: tcspmm::tile::mean_nnz_tc(&plan_tiles(&a)).ok(),
        mean_nnz_tc_after: tcspmm::tile::mean_nnz_tc(&plan_tiles(&reordered)).ok(),
    };
    if args.json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!(
            "passes: {}  merges: {}  modularity: {:.6}",
            summary.passes, summary.merges_accepted, summary.final_modularity
        );
        if let (Some(b), Some(aft)) = (summary.mean_nnz_tc_before, summary.mean_nnz_tc_after) {
            println!("mean_nnz_tc: {b:.3} -> {aft:.3}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_encode(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    let output = args.output.as_deref().context("encode needs --output")?;
    let t = encode(&plan_tiles(&a), &a);
    fs::write(output, serialize(&t)).with_context(|| format!("writing {}", output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_decode(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    let output = args.output.as_deref().context("decode needs --output")?;
    fs::write(output, write_matrix_market(&a))
        .with_context(|| format!("writing {}", output.display()))?;
    Ok(ExitCode::SUCCESS)
}

/// C dump header: rows and cols as little-endian u32, then f32 row-major.
fn write_c_dump(path: &Path, c: &DenseMatrix<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * c.data.len());
    bytes.write_u32::<LittleEndian>(c.num_rows as u32)?;
    bytes.write_u32::<LittleEndian>(c.num_cols as u32)?;
    for &v in &c.data {
        bytes.write_f32::<LittleEndian>(v as f32)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reorder unless disabled or impossible (non-square); identity otherwise.
fn active_form(
    a: &CsrMatrix<f64>,
    no_reorder: bool,
) -> Result<(CsrMatrix<f64>, Permutation, Option<ReorderStats>)> {
    if no_reorder || !a.is_square() {
        return Ok((a.clone(), Permutation::identity(a.num_rows), None));
    }
    let (reordered, perm, stats) = reorder(a)?;
    Ok((reordered, perm, Some(stats)))
}

fn cmd_spmm(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    let output = args.output.as_deref().context("spmm needs --output for the C dump")?;
    let b = DenseMatrix::<f64>::random(a.num_cols, args.feature_dim, args.seed);

    let (active, perm, _) = active_form(&a, args.no_reorder)?;
    let t = encode(&plan_tiles(&active), &active);
    let c = if perm.is_identity() {
        spmm_bittcf(&t, &b)?
    } else {
        let bp = apply_row_permutation(&b, &perm)?;
        let cp = spmm_bittcf(&t, &bp)?;
        apply_row_permutation(&cp, &perm.inverse())?
    };
    write_c_dump(output, &c)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ScheduleDoc {
    ibd: f64,
    balanced: bool,
    units: usize,
    segments: usize,
    write_backs: usize,
    max_predicted_s: f64,
    mean_predicted_s: f64,
    max_over_mean: f64,
    schedule: Schedule,
}

fn schedule_times(
    schedule: &Schedule,
    profile: &HardwareProfile,
    feature_dim: usize,
    wb: WriteBackModel,
) -> Vec<f64> {
    schedule
        .units
        .iter()
        .map(|u| predict_tb_time_with(profile, feature_dim, u.block_count(), wb))
        .collect()
}

fn cmd_balance(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    let (active, _, _) = active_form(&a, args.no_reorder)?;
    let plan = plan_tiles(&active);
    let profile = args.resolved_profile();
    let schedule = build_schedule(&plan, &profile, args.feature_dim)?;
    let times = schedule_times(&schedule, &profile, args.feature_dim, args.wb_model());

    let doc = ScheduleDoc {
        ibd: schedule.ibd,
        balanced: schedule.balanced,
        units: schedule.units.len(),
        segments: schedule.write_back_count(),
        write_backs: schedule.write_back_count(),
        max_predicted_s: times.iter().cloned().fold(0.0, f64::max),
        mean_predicted_s: if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        },
        max_over_mean: max_over_mean(&times),
        schedule,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(&text, args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SimulateDoc {
    profile: HardwareProfile,
    feature_dim: usize,
    n_blocks: usize,
    blocks_per_stage: usize,
    gap_s: f64,
    dtc: PipelineTrace,
    acc: PipelineTrace,
}

fn cmd_simulate(args: &CommonArgs) -> Result<ExitCode> {
    let n_blocks = match args.n_blocks {
        Some(n) => n,
        None => {
            let a = load_matrix(&args.input)?;
            let (active, _, _) = active_form(&a, args.no_reorder)?;
            plan_tiles(&active).num_blocks()
        }
    };
    if n_blocks == 0 {
        bail!("nothing to simulate: the workload has no TC blocks");
    }
    let profile = args.resolved_profile();
    let d = durations_from_profile(&profile, args.feature_dim);
    let dtc = simulate_dtc_staged(n_blocks, &d, args.blocks_per_stage);
    let acc = simulate_acc_staged(n_blocks, &d, args.blocks_per_stage);
    let gap_s = gap(&dtc, &acc)?;

    if let Some(path) = &args.chrome_trace {
        fs::write(path, chrome_trace_json(&acc))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let doc = SimulateDoc {
        profile,
        feature_dim: args.feature_dim,
        n_blocks,
        blocks_per_stage: args.blocks_per_stage,
        gap_s,
        dtc,
        acc,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    emit(&text, args.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn tiling_stats(plan: &RowWindowPlan<f64>) -> TilingStats {
    TilingStats {
        windows: plan.num_windows(),
        blocks: plan.num_blocks(),
        mean_nnz_tc: tcspmm::tile::mean_nnz_tc(plan).ok(),
    }
}

fn cmd_report(args: &CommonArgs) -> Result<ExitCode> {
    let a = load_matrix(&args.input)?;
    if a.num_rows == 0 {
        bail!("cannot report on an empty matrix");
    }
    let matrix = matrix_stats(&a);
    let plan_before = plan_tiles(&a);

    let (active, _, stats) = active_form(&a, args.no_reorder)?;
    let plan_after = plan_tiles(&active);
    let applied = stats.is_some();
    let reorder_section = match &stats {
        Some(s) => ReorderSection {
            applied: true,
            passes: s.passes,
            merges_accepted: s.merges_accepted,
            final_modularity: s.final_modularity,
            elapsed_s: (!args.deterministic).then(|| s.elapsed.as_secs_f64()),
        },
        None => ReorderSection {
            applied: false,
            passes: 0,
            merges_accepted: 0,
            final_modularity: 0.0,
            elapsed_s: None,
        },
    };

    let blocks = plan_after.num_blocks();
    let csr = csr_index_bytes(matrix.rows, matrix.nnz);
    let metcf = metcf_index_bytes(matrix.rows, blocks, matrix.nnz);
    let bittcf = bittcf_index_bytes(matrix.rows, blocks);
    let format_bytes = FormatBytes {
        csr,
        metcf,
        bittcf,
        bittcf_over_csr: bittcf as f64 / csr as f64,
        bittcf_over_metcf: bittcf as f64 / metcf as f64,
    };

    let profiles = args.report_profiles();
    let schedule_profile = &profiles[0];
    let schedule = build_schedule(&plan_after, schedule_profile, args.feature_dim)?;
    let times = schedule_times(&schedule, schedule_profile, args.feature_dim, args.wb_model());
    let identity_times: Vec<f64> = plan_after
        .blocks_per_window()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| predict_tb_time_with(schedule_profile, args.feature_dim, c, args.wb_model()))
        .collect();
    let balance = BalanceSection {
        ibd: schedule.ibd,
        balanced: schedule.balanced,
        units: schedule.units.len(),
        segments: schedule.write_back_count(),
        write_backs: schedule.write_back_count(),
        max_predicted_s: times.iter().cloned().fold(0.0, f64::max),
        mean_predicted_s: if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        },
        max_over_mean: max_over_mean(&times),
        identity_max_over_mean: max_over_mean(&identity_times),
    };

    let mut pipeline = Vec::new();
    if blocks > 0 {
        for profile in &profiles {
            let d = durations_from_profile(profile, args.feature_dim);
            let dtc = simulate_dtc_staged(blocks, &d, args.blocks_per_stage);
            let acc = simulate_acc_staged(blocks, &d, args.blocks_per_stage);
            pipeline.push(PipelineSection {
                profile: profile.name.clone(),
                bandwidth_bytes_per_s: profile.mem_bandwidth,
                tf32_flops: profile.tf32_flops,
                n_blocks: blocks,
                blocks_per_stage: args.blocks_per_stage,
                dtc_makespan_s: dtc.makespan,
                acc_makespan_s: acc.makespan,
                gap_s: gap(&dtc, &acc)?,
                dtc_bubble_s: dtc.bubble,
                acc_bubble_s: acc.bubble,
            });
        }
    }

    let b = DenseMatrix::<f64>::random(matrix.cols, args.feature_dim, args.seed);
    let verify_report = verify(&a, &b)?;
    let ok = |e: &tcspmm::executor::PathErrors| e.max_rel <= VERIFY_REL_TOLERANCE;
    let verified =
        ok(&verify_report.direct) && verify_report.reordered.as_ref().map_or(true, ok);

    let report = Report {
        schema: SCHEMA_VERSION,
        generated_at_unix_s: (!args.deterministic).then(|| {
            SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }),
        input: args.input.display().to_string(),
        seed: args.seed,
        feature_dim: args.feature_dim,
        reorder_applied: applied,
        matrix,
        reorder: reorder_section,
        tiling_before: tiling_stats(&plan_before),
        tiling_after: tiling_stats(&plan_after),
        format_bytes,
        balance,
        pipeline,
        verify: verify_report,
    };
    emit(&report.to_json(), args.output.as_deref())?;

    if !verified {
        eprintln!("verification failed: executor deviates beyond {VERIFY_REL_TOLERANCE}");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
