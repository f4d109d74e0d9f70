//! RowWindow and TC block partitioning.
//!
//! Rows are grouped into windows of 8; within a window the occupied columns
//! are condensed (collected ascending) and chunked into groups of 8, each
//! chunk forming one 8x8 TC block addressed by a 64-bit occupancy mask.

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::scalar::Scalar;

/// Rows per RowWindow and lanes per TC block.
pub const WINDOW_HEIGHT: usize = 8;

/// One 8x8 tensor-core block: which original columns its 8 lanes map to and
/// which of the 64 cells hold a nonzero.
///
/// Bit `k` of `occupancy` (LSB = bit 0) corresponds to local row `k / 8`,
/// local column `k % 8`. `values` lists the nonzeros in ascending bit order.
#[derive(Debug, Clone, PartialEq)]
pub struct TcBlockDesc<T> {
    pub window_id: usize,
    pub block_col_ordinal: usize,
    /// Original column per lane; unused lanes padded with 0 and never
    /// referenced (no occupied bits).
    pub col_map: [usize; WINDOW_HEIGHT],
    pub occupancy: u64,
    pub values: Vec<T>,
}

impl<T> TcBlockDesc<T> {
    pub fn nnz_count(&self) -> usize {
        self.values.len()
    }

    /// Lanes that own at least one nonzero.
    pub fn lane_occupied(&self, lane: usize) -> bool {
        self.occupancy & (0x0101_0101_0101_0101u64 << lane) != 0
    }
}

/// Blocks and condensed columns of one RowWindow.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan<T> {
    /// Occupied original columns, strictly ascending.
    pub columns: Vec<usize>,
    pub blocks: Vec<TcBlockDesc<T>>,
}

/// Tiling of a whole matrix into RowWindows of height 8.
#[derive(Debug, Clone, PartialEq)]
pub struct RowWindowPlan<T> {
    pub num_rows: usize,
    pub num_cols: usize,
    pub windows: Vec<WindowPlan<T>>,
}

impl<T: Scalar> RowWindowPlan<T> {
    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.windows.iter().map(|w| w.blocks.len()).sum()
    }

    pub fn nnz(&self) -> usize {
        self.windows
            .iter()
            .map(|w| w.blocks.iter().map(|b| b.nnz_count()).sum::<usize>())
            .sum()
    }

    /// TC blocks per window, the input to imbalance measurement.
    pub fn blocks_per_window(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.blocks.len()).collect()
    }
}

/// Partitions a matrix into RowWindows and 8x8 TC blocks.
///
/// Every nonzero `(i, j, v)` lands in the block owning column `j`, at local
/// row `i % 8` and the local column given by `j`'s position within its
/// 8-column chunk. The last window may be ragged; rows past the end simply
/// contribute no bits.
pub fn plan_tiles<T: Scalar>(a: &CsrMatrix<T>) -> RowWindowPlan<T> {
    let num_windows = a.num_rows.div_ceil(WINDOW_HEIGHT);
    let mut windows = Vec::with_capacity(num_windows);

    for w in 0..num_windows {
        let row_lo = w * WINDOW_HEIGHT;
        let row_hi = (row_lo + WINDOW_HEIGHT).min(a.num_rows);

        let mut columns: Vec<usize> = Vec::new();
        for r in row_lo..row_hi {
            columns.extend_from_slice(a.row(r).0);
        }
        columns.sort_unstable();
        columns.dedup();

        let mut blocks: Vec<TcBlockDesc<T>> = columns
            .chunks(WINDOW_HEIGHT)
            .enumerate()
            .map(|(ordinal, chunk)| {
                let mut col_map = [0usize; WINDOW_HEIGHT];
                col_map[..chunk.len()].copy_from_slice(chunk);
                TcBlockDesc {
                    window_id: w,
                    block_col_ordinal: ordinal,
                    col_map,
                    occupancy: 0,
                    values: Vec::new(),
                }
            })
            .collect();

        // Entries in (block, bit) order: row-major traversal emits ascending
        // bit indices within each block because columns ascend per row.
        let mut slots: Vec<(usize, u32, T)> = Vec::new();
        for r in row_lo..row_hi {
            let local_row = r - row_lo;
            let (cols, vals) = a.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                let pos = columns.binary_search(&j).expect("column collected above");
                let block = pos / WINDOW_HEIGHT;
                let lane = pos % WINDOW_HEIGHT;
                let bit = (local_row * WINDOW_HEIGHT + lane) as u32;
                blocks[block].occupancy |= 1u64 << bit;
                slots.push((block, bit, v));
            }
        }
        slots.sort_unstable_by_key(|&(b, bit, _)| (b, bit));
        for (b, _, v) in slots {
            blocks[b].values.push(v);
        }

        windows.push(WindowPlan { columns, blocks });
    }

    RowWindowPlan { num_rows: a.num_rows, num_cols: a.num_cols, windows }
}

/// Average nonzeros per TC block, the density metric reordering drives up.
pub fn mean_nnz_tc<T: Scalar>(plan: &RowWindowPlan<T>) -> Result<f64> {
    let blocks = plan.num_blocks();
    if blocks == 0 {
        return Err(Error::NoBlocks);
    }
    Ok(plan.nnz() as f64 / blocks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{coo_to_csr, csr_to_coo, CooMatrix};
    use crate::sbm::random_csr;

    /// Diagonal of an 8x8 tile: bits k = 9*r.
    pub(crate) const DIAGONAL_MASK: u64 = 0x8040_2010_0804_0201;

    fn reconstruct(plan: &RowWindowPlan<f64>) -> Vec<(usize, usize, f64)> {
        let mut triples = Vec::new();
        for (w, window) in plan.windows.iter().enumerate() {
            for block in &window.blocks {
                let mut idx = 0usize;
                let mut mask = block.occupancy;
                while mask != 0 {
                    let k = mask.trailing_zeros() as usize;
                    mask &= mask - 1;
                    let row = w * WINDOW_HEIGHT + k / WINDOW_HEIGHT;
                    let col = block.col_map[k % WINDOW_HEIGHT];
                    triples.push((row, col, block.values[idx]));
                    idx += 1;
                }
            }
        }
        triples.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        triples
    }

    #[test]
    fn dense_window_is_one_full_block() {
        let entries =
            (0..8).flat_map(|r| (0..8).map(move |c| (r, c, 1.0))).collect::<Vec<_>>();
        let a = coo_to_csr(&CooMatrix::from_entries(8, 8, entries).unwrap());
        let plan = plan_tiles(&a);
        assert_eq!(plan.num_blocks(), 1);
        assert_eq!(plan.windows[0].blocks[0].occupancy, u64::MAX);
        assert_eq!(mean_nnz_tc(&plan).unwrap(), 64.0);
    }

    #[test]
    fn scattered_columns_condense_into_one_block() {
        let a = coo_to_csr(
            &CooMatrix::from_entries(3, 4096, vec![(0, 3, 1.0), (1, 100, 2.0), (2, 4000, 3.0)])
                .unwrap(),
        );
        let plan = plan_tiles(&a);
        assert_eq!(plan.num_blocks(), 1);
        let b = &plan.windows[0].blocks[0];
        assert_eq!(b.col_map, [3, 100, 4000, 0, 0, 0, 0, 0]);
        assert_eq!(b.occupancy.count_ones(), 3);
        // (0,3)->bit 0, (1,100)->bit 9, (2,4000)->bit 18.
        assert_eq!(b.occupancy, 1 | 1 << 9 | 1 << 18);
        assert_eq!(b.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn identity_has_diagonal_masks() {
        let a = CsrMatrix::<f64>::identity(16);
        let plan = plan_tiles(&a);
        assert_eq!(plan.num_windows(), 2);
        assert_eq!(plan.num_blocks(), 2);
        for w in &plan.windows {
            assert_eq!(w.blocks.len(), 1);
            assert_eq!(w.blocks[0].occupancy, DIAGONAL_MASK);
        }
        assert_eq!(mean_nnz_tc(&plan).unwrap(), 8.0);
    }

    #[test]
    fn ragged_last_window() {
        let a = CsrMatrix::<f64>::identity(11);
        let plan = plan_tiles(&a);
        assert_eq!(plan.num_windows(), 2);
        assert_eq!(plan.windows[1].blocks[0].occupancy.count_ones(), 3);
        assert_eq!(plan.nnz(), 11);
    }

    #[test]
    fn empty_windows_have_no_blocks() {
        let a = coo_to_csr(&CooMatrix::<f64>::from_entries(24, 24, vec![(20, 1, 1.0)]).unwrap());
        let plan = plan_tiles(&a);
        assert_eq!(plan.num_windows(), 3);
        assert_eq!(plan.blocks_per_window(), vec![0, 0, 1]);
    }

    #[test]
    fn mean_nnz_tc_needs_blocks() {
        let a = coo_to_csr(&CooMatrix::<f64>::from_entries(8, 8, vec![]).unwrap());
        assert!(matches!(mean_nnz_tc(&plan_tiles(&a)), Err(Error::NoBlocks)));
    }

    #[test]
    fn plan_reconstructs_the_matrix_exactly() {
        for seed in 0..8u64 {
            let a = random_csr::<f64>(70, 90, 0.08, seed);
            let plan = plan_tiles(&a);
            assert_eq!(plan.nnz(), a.nnz());
            assert_eq!(reconstruct(&plan), csr_to_coo(&a).entries);
        }
    }

    #[test]
    fn blocks_never_share_columns_within_a_window() {
        let a = random_csr::<f64>(64, 64, 0.2, 9);
        let plan = plan_tiles(&a);
        for w in &plan.windows {
            let mut seen = std::collections::HashSet::new();
            for b in &w.blocks {
                assert!(b.occupancy.count_ones() >= 1);
                for lane in 0..WINDOW_HEIGHT {
                    if b.lane_occupied(lane) {
                        assert!(seen.insert(b.col_map[lane]));
                    }
                }
            }
        }
    }

    #[test]
    fn padded_lanes_have_no_occupied_bits() {
        let a = random_csr::<f64>(40, 40, 0.05, 13);
        let plan = plan_tiles(&a);
        for w in &plan.windows {
            for b in &w.blocks {
                let lanes = w.columns.len() - b.block_col_ordinal * WINDOW_HEIGHT;
                for lane in lanes.min(WINDOW_HEIGHT)..WINDOW_HEIGHT {
                    assert!(!b.lane_occupied(lane));
                    assert_eq!(b.col_map[lane], 0);
                }
            }
        }
    }

    #[test]
    fn block_count_invariant_under_window_preserving_row_permutation() {
        // Rotating rows inside each window leaves every window's occupied
        // column set unchanged, so the per-window block counts match.
        for seed in [22u64, 23, 24] {
            let a = random_csr::<f64>(24, 40, 0.2, seed);
            let mut triples = Vec::new();
            for (i, j, v) in a.iter() {
                let w = i / WINDOW_HEIGHT;
                let new_i = w * WINDOW_HEIGHT + (i + 5) % WINDOW_HEIGHT;
                triples.push((new_i, j, v));
            }
            let b = CsrMatrix::from_triples(24, 40, triples);
            assert_eq!(plan_tiles(&a).blocks_per_window(), plan_tiles(&b).blocks_per_window());
        }
    }
}
