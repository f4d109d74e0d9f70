//! The BitTCF compressed block format.
//!
//! Four index arrays describe the tiling: `row_window_offset` (first TC
//! block of each RowWindow), `tc_offset` (first nonzero of each block),
//! `sparse_a_to_b` (original column per block lane, 8 per block) and
//! `tc_local_bit` (one 64-bit occupancy mask per block). A values array
//! completes the container. The index structure costs
//! `(ceil(M/8) + 11 * NumTcBlock + 2) * 4` bytes; ME-TCF, which spends one
//! byte per nonzero on in-block positions instead of a fixed mask, is
//! smaller only when blocks average fewer than 8 nonzeros.
//!
//! Decoding is position arithmetic: the value index of bit `k` in block `b`
//! is `tc_offset[b] + popcount(mask & ((1 << k) - 1))`.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;
use crate::scalar::Scalar;
use crate::tile::{RowWindowPlan, WINDOW_HEIGHT};

const MAGIC: &[u8; 4] = b"BTCF";
const VERSION: u32 = 1;
/// Magic + version + five u64 counts.
pub const HEADER_BYTES: usize = 4 + 4 + 5 * 8;

/// Bitmap-compressed tensor-core block format.
#[derive(Debug, Clone, PartialEq)]
pub struct BitTcf<T> {
    pub num_rows: usize,
    pub num_cols: usize,
    pub nnz: usize,
    /// Length `ceil(num_rows / 8) + 1`.
    pub row_window_offset: Vec<u32>,
    /// Length `num_blocks + 1`; consecutive differences are block popcounts.
    pub tc_offset: Vec<u32>,
    /// Length `num_blocks * 8`; padded lanes hold 0.
    pub sparse_a_to_b: Vec<u32>,
    /// One occupancy mask per block; bit k = local (row k/8, col k%8).
    pub tc_local_bit: Vec<u64>,
    pub values: Vec<T>,
}

impl<T: Scalar> BitTcf<T> {
    pub fn num_windows(&self) -> usize {
        self.row_window_offset.len() - 1
    }

    pub fn num_blocks(&self) -> usize {
        self.tc_local_bit.len()
    }

    /// Global block range `[start, end)` of window `w`.
    pub fn window_blocks(&self, w: usize) -> (usize, usize) {
        (self.row_window_offset[w] as usize, self.row_window_offset[w + 1] as usize)
    }

    /// Original columns of the 8 lanes of block `b`.
    pub fn block_cols(&self, b: usize) -> &[u32] {
        &self.sparse_a_to_b[b * WINDOW_HEIGHT..(b + 1) * WINDOW_HEIGHT]
    }

    /// Structural invariants; `decode` and `deserialize` refuse instances
    /// that fail them.
    pub fn validate(&self) -> Result<()> {
        let windows = self.num_rows.div_ceil(WINDOW_HEIGHT);
        let blocks = self.num_blocks();
        if self.row_window_offset.len() != windows + 1 || self.row_window_offset[0] != 0 {
            return Err(Error::Corrupt("row_window_offset has wrong shape".into()));
        }
        if *self.row_window_offset.last().unwrap() as usize != blocks {
            return Err(Error::Corrupt("row_window_offset does not cover all blocks".into()));
        }
        if self.row_window_offset.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Corrupt("row_window_offset decreases".into()));
        }
        if self.tc_offset.len() != blocks + 1 || self.tc_offset[0] != 0 {
            return Err(Error::Corrupt("tc_offset has wrong shape".into()));
        }
        if self.sparse_a_to_b.len() != blocks * WINDOW_HEIGHT {
            return Err(Error::Corrupt("sparse_a_to_b has wrong length".into()));
        }
        for b in 0..blocks {
            let span = self.tc_offset[b + 1].wrapping_sub(self.tc_offset[b]);
            if self.tc_offset[b] > self.tc_offset[b + 1]
                || span != self.tc_local_bit[b].count_ones()
            {
                return Err(Error::Corrupt(format!(
                    "tc_offset span of block {b} does not match its popcount"
                )));
            }
        }
        if *self.tc_offset.last().unwrap() as usize != self.nnz || self.values.len() != self.nnz {
            return Err(Error::Corrupt("value count mismatch".into()));
        }
        // Occupied lanes must name a real column; ragged last window must
        // not set bits below the matrix edge.
        for w in 0..windows {
            let height = (self.num_rows - w * WINDOW_HEIGHT).min(WINDOW_HEIGHT);
            let valid_rows = if height == WINDOW_HEIGHT {
                u64::MAX
            } else {
                (1u64 << (height * WINDOW_HEIGHT)) - 1
            };
            let (lo, hi) = self.window_blocks(w);
            for b in lo..hi {
                let mask = self.tc_local_bit[b];
                if mask & !valid_rows != 0 {
                    return Err(Error::Corrupt(format!("block {b} sets bits past row {}", self.num_rows)));
                }
                if mask == 0 {
                    return Err(Error::Corrupt(format!("block {b} is empty")));
                }
                for lane in 0..WINDOW_HEIGHT {
                    let lane_bits = 0x0101_0101_0101_0101u64 << lane;
                    if mask & lane_bits != 0
                        && self.block_cols(b)[lane] as usize >= self.num_cols
                    {
                        return Err(Error::Corrupt(format!(
                            "block {b} lane {lane} column out of range"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Packs a tiling plan into BitTCF, window-major, block-major, values in
/// ascending bit order within each block.
pub fn encode<T: Scalar>(plan: &RowWindowPlan<T>, a: &CsrMatrix<T>) -> BitTcf<T> {
    debug_assert_eq!(plan.num_rows, a.num_rows);
    debug_assert_eq!(plan.num_cols, a.num_cols);
    debug_assert_eq!(plan.nnz(), a.nnz());

    let num_blocks = plan.num_blocks();
    let mut row_window_offset = Vec::with_capacity(plan.num_windows() + 1);
    let mut tc_offset = Vec::with_capacity(num_blocks + 1);
    let mut sparse_a_to_b = Vec::with_capacity(num_blocks * WINDOW_HEIGHT);
    let mut tc_local_bit = Vec::with_capacity(num_blocks);
    let mut values = Vec::with_capacity(a.nnz());

    row_window_offset.push(0u32);
    tc_offset.push(0u32);
    for window in &plan.windows {
        for block in &window.blocks {
            tc_offset.push(tc_offset.last().unwrap() + block.occupancy.count_ones());
            for &col in &block.col_map {
                sparse_a_to_b.push(u32::try_from(col).expect("column fits the u32 format"));
            }
            tc_local_bit.push(block.occupancy);
            values.extend_from_slice(&block.values);
        }
        row_window_offset.push(tc_local_bit.len() as u32);
    }

    BitTcf {
        num_rows: plan.num_rows,
        num_cols: plan.num_cols,
        nnz: values.len(),
        row_window_offset,
        tc_offset,
        sparse_a_to_b,
        tc_local_bit,
        values,
    }
}

/// Exact inverse of `encode(plan_tiles(a), a)`.
///
/// Runs in O(num_blocks) popcounts plus O(nnz) emitted entries: per block a
/// row-prefix table is popcounted once, then only set bits are walked.
pub fn decode<T: Scalar>(t: &BitTcf<T>) -> Result<CsrMatrix<T>> {
    t.validate()?;

    let mut row_ptr = Vec::with_capacity(t.num_rows + 1);
    let mut col_idx = Vec::with_capacity(t.nnz);
    let mut values = Vec::with_capacity(t.nnz);
    row_ptr.push(0usize);

    #[cfg(debug_assertions)]
    let (mut popcount_ops, mut bit_visits) = (0usize, 0usize);

    let mut prefixes: Vec<[u32; WINDOW_HEIGHT]> = Vec::new();
    for w in 0..t.num_windows() {
        let (lo, hi) = t.window_blocks(w);
        let height = (t.num_rows - w * WINDOW_HEIGHT).min(WINDOW_HEIGHT);

        prefixes.clear();
        for b in lo..hi {
            let mask = t.tc_local_bit[b];
            let mut p = [0u32; WINDOW_HEIGHT];
            for (r, slot) in p.iter_mut().enumerate().skip(1) {
                *slot = (mask & ((1u64 << (r * WINDOW_HEIGHT)) - 1)).count_ones();
                #[cfg(debug_assertions)]
                {
                    popcount_ops += 1;
                }
            }
            prefixes.push(p);
        }

        for r in 0..height {
            for (b, prefix) in (lo..hi).zip(&prefixes) {
                let mut byte = (t.tc_local_bit[b] >> (r * WINDOW_HEIGHT)) as u8;
                let mut rank = t.tc_offset[b] + prefix[r];
                while byte != 0 {
                    let lane = byte.trailing_zeros() as usize;
                    byte &= byte - 1;
                    col_idx.push(t.block_cols(b)[lane] as usize);
                    values.push(t.values[rank as usize]);
                    rank += 1;
                    #[cfg(debug_assertions)]
                    {
                        bit_visits += 1;
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    // Rows past the last populated window.
    while row_ptr.len() < t.num_rows + 1 {
        row_ptr.push(col_idx.len());
    }

    #[cfg(debug_assertions)]
    {
        debug_assert_eq!(bit_visits, t.nnz, "decode visited a bit per nonzero only");
        debug_assert!(
            popcount_ops <= (WINDOW_HEIGHT - 1) * t.num_blocks(),
            "decode popcount budget exceeded"
        );
    }

    Ok(CsrMatrix {
        num_rows: t.num_rows,
        num_cols: t.num_cols,
        row_ptr,
        col_idx,
        values,
    })
}

/// Index-structure bytes of BitTCF: `(ceil(M/8) + 11 * blocks + 2) * 4`.
pub fn bittcf_index_bytes(m_rows: usize, num_blocks: usize) -> usize {
    (m_rows.div_ceil(WINDOW_HEIGHT) + num_blocks * 11 + 2) * 4
}

/// Index-structure bytes of ME-TCF: same skeleton with one int8 position
/// per nonzero in place of the 64-bit masks.
pub fn metcf_index_bytes(m_rows: usize, num_blocks: usize, nnz: usize) -> usize {
    (m_rows.div_ceil(WINDOW_HEIGHT) + 1 + num_blocks + 1 + 8 * num_blocks) * 4 + nnz
}

/// Index-structure bytes of CSR with 4-byte row pointers and column ids.
pub fn csr_index_bytes(m_rows: usize, nnz: usize) -> usize {
    (m_rows + 1 + nnz) * 4
}

/// Little-endian container: magic, version, five u64 counts, then the five
/// arrays in declaration order (offsets and columns as u32, masks as u64,
/// values as f32).
pub fn serialize<T: Scalar>(t: &BitTcf<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        HEADER_BYTES + bittcf_index_bytes(t.num_rows, t.num_blocks()) + 4 * t.nnz,
    );
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    for count in [t.num_rows, t.num_cols, t.nnz, t.num_windows(), t.num_blocks()] {
        out.write_u64::<LittleEndian>(count as u64).unwrap();
    }
    for &x in &t.row_window_offset {
        out.write_u32::<LittleEndian>(x).unwrap();
    }
    for &x in &t.tc_offset {
        out.write_u32::<LittleEndian>(x).unwrap();
    }
    for &x in &t.sparse_a_to_b {
        out.write_u32::<LittleEndian>(x).unwrap();
    }
    for &x in &t.tc_local_bit {
        out.write_u64::<LittleEndian>(x).unwrap();
    }
    for &v in &t.values {
        out.write_f32::<LittleEndian>(v.as_f64() as f32).unwrap();
    }
    out
}

fn read_u32s(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<u32>> {
    let mut v = vec![0u32; n];
    cur.read_u32_into::<LittleEndian>(&mut v).map_err(|_| Error::Truncated)?;
    Ok(v)
}

/// Parses and validates a container produced by [`serialize`]. Values are
/// stored as f32 and widen losslessly into `f64` instances.
pub fn deserialize<T: Scalar>(bytes: &[u8]) -> Result<BitTcf<T>> {
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| Error::Truncated)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = cur.read_u32::<LittleEndian>().map_err(|_| Error::Truncated)?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let mut counts = [0u64; 5];
    cur.read_u64_into::<LittleEndian>(&mut counts).map_err(|_| Error::Truncated)?;
    let [num_rows, num_cols, nnz, num_windows, num_blocks] = counts.map(|x| x as usize);
    if num_windows != num_rows.div_ceil(WINDOW_HEIGHT) {
        return Err(Error::Corrupt(format!(
            "{num_windows} windows inconsistent with {num_rows} rows"
        )));
    }

    let row_window_offset = read_u32s(&mut cur, num_windows + 1)?;
    let tc_offset = read_u32s(&mut cur, num_blocks + 1)?;
    let sparse_a_to_b = read_u32s(&mut cur, num_blocks * WINDOW_HEIGHT)?;
    let mut tc_local_bit = vec![0u64; num_blocks];
    cur.read_u64_into::<LittleEndian>(&mut tc_local_bit).map_err(|_| Error::Truncated)?;
    let mut values = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let v = cur.read_f32::<LittleEndian>().map_err(|_| Error::Truncated)?;
        values.push(T::from_f64_lossy(v as f64));
    }
    if cur.position() != bytes.len() as u64 {
        return Err(Error::Corrupt("trailing bytes after values".into()));
    }

    let t = BitTcf {
        num_rows,
        num_cols,
        nnz,
        row_window_offset,
        tc_offset,
        sparse_a_to_b,
        tc_local_bit,
        values,
    };
    t.validate()?;
    Ok(t)
}
