//! Reference SpMM over BitTCF.
//!
//! Replays the kernel's tile dataflow on the CPU: per RowWindow, each 8x8
//! block is expanded from its occupancy mask, the B rows named by its lanes
//! are gathered, and an 8x16 MMA accumulates into the window's C rows, which
//! are written back once per schedule segment. Used to check that format
//! and scheduling transformations preserve the product.

use serde::Serialize;

use crate::balance::Schedule;
use crate::bittcf::BitTcf;
use crate::error::{Error, Result};
use crate::matrix::{
    apply_row_permutation, spmm_oracle, CsrMatrix, DenseMatrix,
};
use crate::reorder::reorder;
use crate::scalar::Scalar;
use crate::tile::{plan_tiles, WINDOW_HEIGHT};

/// Post-swap MMA dimensions: an 8x8 sparse tile against an 8x16 dense slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmaShape {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub const MMA_SHAPE: MmaShape = MmaShape { m: 8, k: 8, n: 16 };

/// One tile MMA: `c_acc += a_tile * b_slice` with f64 accumulation.
///
/// `a_tile` is a dense-expanded 8x8 block (row-major), `b_slice` and `c_acc`
/// are 8xn row-major with `n <= 16`. Zero lanes contribute nothing.
pub fn mma_tile(a_tile: &[f64; 64], b_slice: &[f64], n: usize, c_acc: &mut [f64]) {
    assert!(n <= MMA_SHAPE.n);
    assert_eq!(b_slice.len(), MMA_SHAPE.k * n);
    assert_eq!(c_acc.len(), MMA_SHAPE.m * n);
    for r in 0..MMA_SHAPE.m {
        for l in 0..MMA_SHAPE.k {
            let a = a_tile[r * MMA_SHAPE.k + l];
            if a == 0.0 {
                continue;
            }
            let brow = &b_slice[l * n..(l + 1) * n];
            let crow = &mut c_acc[r * n..(r + 1) * n];
            for j in 0..n {
                crow[j] += a * brow[j];
            }
        }
    }
}

struct ExpandedBlock {
    a_tile: [f64; 64],
    cols: [usize; WINDOW_HEIGHT],
    occupied: [bool; WINDOW_HEIGHT],
}

fn expand_block<T: Scalar>(t: &BitTcf<T>, block: usize) -> ExpandedBlock {
    let mut a_tile = [0f64; 64];
    let mut mask = t.tc_local_bit[block];
    let mut idx = t.tc_offset[block] as usize;
    while mask != 0 {
        let k = mask.trailing_zeros() as usize;
        mask &= mask - 1;
        a_tile[k] = t.values[idx].as_f64();
        idx += 1;
    }
    let mut cols = [0usize; WINDOW_HEIGHT];
    let mut occupied = [false; WINDOW_HEIGHT];
    for lane in 0..WINDOW_HEIGHT {
        cols[lane] = t.block_cols(block)[lane] as usize;
        occupied[lane] = t.tc_local_bit[block] & (0x0101_0101_0101_0101u64 << lane) != 0;
    }
    ExpandedBlock { a_tile, cols, occupied }
}

/// Accumulates blocks `[first, first + count)` of one window into an
/// 8 x feature_dim partial (row-major, f64). The feature dimension runs in
/// strips of 16; padded lanes are skipped when gathering B rows.
fn segment_partial<T: Scalar>(
    t: &BitTcf<T>,
    b: &DenseMatrix<T>,
    first: usize,
    count: usize,
) -> Vec<f64> {
    let f = b.num_cols;
    let mut partial = vec![0f64; WINDOW_HEIGHT * f];
    let blocks: Vec<ExpandedBlock> =
        (first..first + count).map(|blk| expand_block(t, blk)).collect();

    let mut b_slice = [0f64; 8 * 16];
    let mut c_strip = [0f64; 8 * 16];
    let mut strip = 0;
    while strip < f {
        let n = (f - strip).min(MMA_SHAPE.n);
        c_strip[..WINDOW_HEIGHT * n].fill(0.0);
        for block in &blocks {
            for lane in 0..WINDOW_HEIGHT {
                let dst = &mut b_slice[lane * n..(lane + 1) * n];
                if block.occupied[lane] {
                    let src = &b.row(block.cols[lane])[strip..strip + n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s.as_f64();
                    }
                } else {
                    dst.fill(0.0);
                }
            }
            mma_tile(
                &block.a_tile,
                &b_slice[..WINDOW_HEIGHT * n],
                n,
                &mut c_strip[..WINDOW_HEIGHT * n],
            );
        }
        for r in 0..WINDOW_HEIGHT {
            partial[r * f + strip..r * f + strip + n]
                .copy_from_slice(&c_strip[r * n..(r + 1) * n]);
        }
        strip += n;
    }
    partial
}

fn check_dims<T: Scalar>(t: &BitTcf<T>, b: &DenseMatrix<T>) -> Result<()> {
    if t.num_cols != b.num_rows {
        return Err(Error::DimensionMismatch(format!(
            "BitTCF is {}x{} but B has {} rows",
            t.num_rows, t.num_cols, b.num_rows
        )));
    }
    Ok(())
}

/// SpMM over the compressed format: one work unit per window, one
/// write-back each. Equals [`spmm_oracle`] on the decoded matrix up to
/// accumulation order (exactly, for integer-valued inputs).
pub fn spmm_bittcf<T: Scalar>(t: &BitTcf<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_dims(t, b)?;
    let f = b.num_cols;
    let mut c = DenseMatrix::zeros(t.num_rows, f);
    for w in 0..t.num_windows() {
        let (lo, hi) = t.window_blocks(w);
        if lo == hi {
            continue;
        }
        let partial = segment_partial(t, b, lo, hi - lo);
        let height = (t.num_rows - w * WINDOW_HEIGHT).min(WINDOW_HEIGHT);
        for r in 0..height {
            let crow = c.row_mut(w * WINDOW_HEIGHT + r);
            for j in 0..f {
                crow[j] = T::from_f64_lossy(partial[r * f + j]);
            }
        }
    }
    Ok(c)
}

/// SpMM following a work-unit schedule: each segment produces its own
/// partial and write-back. Segment partials combine into C in a fixed
/// (window, first block) order, so the result does not depend on unit
/// processing order; split windows accumulate with commutative adds.
pub fn spmm_bittcf_scheduled<T: Scalar>(
    t: &BitTcf<T>,
    b: &DenseMatrix<T>,
    schedule: &Schedule,
) -> Result<DenseMatrix<T>> {
    check_dims(t, b)?;
    let f = b.num_cols;

    let mut partials: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for unit in &schedule.units {
        for seg in &unit.segments {
            let (lo, hi) = t.window_blocks(seg.window_id);
            if seg.first_block < lo || seg.first_block + seg.block_count > hi {
                return Err(Error::DimensionMismatch(format!(
                    "segment blocks {}..{} outside window {}",
                    seg.first_block,
                    seg.first_block + seg.block_count,
                    seg.window_id
                )));
            }
            partials.push((
                seg.window_id,
                seg.first_block,
                segment_partial(t, b, seg.first_block, seg.block_count),
            ));
        }
    }
    partials.sort_by_key(|&(w, first, _)| (w, first));

    let mut acc = vec![0f64; t.num_rows * f];
    for (w, _, partial) in &partials {
        let height = (t.num_rows - w * WINDOW_HEIGHT).min(WINDOW_HEIGHT);
        for r in 0..height {
            let row = w * WINDOW_HEIGHT + r;
            for j in 0..f {
                acc[row * f + j] += partial[r * f + j];
            }
        }
    }

    let mut c = DenseMatrix::zeros(t.num_rows, f);
    for (dst, &src) in c.data.iter_mut().zip(&acc) {
        *dst = T::from_f64_lossy(src);
    }
    Ok(c)
}

/// Largest absolute and relative per-element deviations of a path against
/// the oracle result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathErrors {
    pub max_abs: f64,
    pub max_rel: f64,
}

fn path_errors<T: Scalar>(got: &DenseMatrix<T>, want: &DenseMatrix<T>) -> PathErrors {
    let mut e = PathErrors { max_abs: 0.0, max_rel: 0.0 };
    for (x, y) in got.data.iter().zip(&want.data) {
        let (x, y) = (x.as_f64(), y.as_f64());
        let d = (x - y).abs();
        if d > e.max_abs {
            e.max_abs = d;
        }
        if d > 0.0 {
            let rel = if y == 0.0 { f64::INFINITY } else { d / y.abs() };
            if rel > e.max_rel {
                e.max_rel = rel;
            }
        }
    }
    e
}

/// Oracle-vs-executor comparison of the direct and the reordered paths.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    /// plan -> encode -> spmm on the matrix as given.
    pub direct: PathErrors,
    /// reorder A, permute B rows, spmm, inverse-permute C rows. `None` for
    /// non-square matrices, which cannot be symmetrically reordered.
    pub reordered: Option<PathErrors>,
}

/// Runs the oracle and both executor paths, reporting deviations instead of
/// raising them.
pub fn verify<T: Scalar>(a: &CsrMatrix<T>, b: &DenseMatrix<T>) -> Result<VerifyReport> {
    let want = spmm_oracle(a, b)?;

    let t = crate::bittcf::encode(&plan_tiles(a), a);
    let direct = path_errors(&spmm_bittcf(&t, b)?, &want);

    let reordered = if a.is_square() {
        let (ar, p, _) = reorder(a)?;
        let br = apply_row_permutation(b, &p)?;
        let tr = crate::bittcf::encode(&plan_tiles(&ar), &ar);
        let cr = spmm_bittcf(&tr, &br)?;
        let c = apply_row_permutation(&cr, &p.inverse())?;
        Some(path_errors(&c, &want))
    } else {
        None
    };

    Ok(VerifyReport { direct, reordered })
}
