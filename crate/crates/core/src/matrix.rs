//! Sparse and dense matrix containers, permutations, and the CSR oracle SpMM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coordinate-form sparse matrix; the canonical ingestion type.
///
/// Canonical means: entries sorted by `(row, col)`, duplicates summed,
/// indices in range.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix<T> {
    pub num_rows: usize,
    pub num_cols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> CooMatrix<T> {
    /// Builds a canonical COO matrix from arbitrary triples: validates index
    /// ranges, sorts by `(row, col)` and sums duplicates.
    pub fn from_entries(
        num_rows: usize,
        num_cols: usize,
        entries: Vec<(usize, usize, T)>,
    ) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r >= num_rows || c >= num_cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {num_rows}x{num_cols}"
                )));
            }
        }
        let mut m = CooMatrix { num_rows, num_cols, entries };
        m.canonicalize();
        Ok(m)
    }

    fn canonicalize(&mut self) {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 = last.2 + v,
                _ => merged.push((r, c, v)),
            }
        }
        self.entries = merged;
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Compressed Sparse Row matrix; columns strictly ascending within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub num_rows: usize,
    pub num_cols: usize,
    /// Length `num_rows + 1`; row `i` spans `col_idx[row_ptr[i]..row_ptr[i+1]]`.
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_square(&self) -> bool {
        self.num_rows == self.num_cols
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Iterates entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.num_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            num_rows: n,
            num_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn map_values<F: Fn(T) -> T>(&self, f: F) -> Self {
        CsrMatrix {
            num_rows: self.num_rows,
            num_cols: self.num_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Builds CSR from distinct triples (no duplicate positions).
    pub(crate) fn from_triples(
        num_rows: usize,
        num_cols: usize,
        mut triples: Vec<(usize, usize, T)>,
    ) -> Self {
        triples.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; num_rows + 1];
        for &(r, _, _) in &triples {
            row_ptr[r + 1] += 1;
        }
        for i in 0..num_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let (col_idx, values) = triples.into_iter().map(|(_, c, v)| (c, v)).unzip();
        CsrMatrix { num_rows, num_cols, row_ptr, col_idx, values }
    }

    /// Checks the structural invariants; used by tests and deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.num_rows + 1
            || self.row_ptr.first() != Some(&0)
            || self.row_ptr.last() != Some(&self.col_idx.len())
            || self.col_idx.len() != self.values.len()
        {
            return Err(Error::Corrupt("CSR index arrays are inconsistent".into()));
        }
        for i in 0..self.num_rows {
            if self.row_ptr[i] > self.row_ptr[i + 1] {
                return Err(Error::Corrupt(format!("row_ptr decreases at row {i}")));
            }
            let (cols, _) = self.row(i);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Corrupt(format!("row {i} columns not ascending")));
                }
            }
            if cols.last().is_some_and(|&c| c >= self.num_cols) {
                return Err(Error::Corrupt(format!("row {i} column out of range")));
            }
        }
        Ok(())
    }
}

/// Converts canonical COO to CSR; columns stay sorted, values preserved.
pub fn coo_to_csr<T: Scalar>(m: &CooMatrix<T>) -> CsrMatrix<T> {
    CsrMatrix::from_triples(m.num_rows, m.num_cols, m.entries.clone())
}

/// Inverse of [`coo_to_csr`]; output is canonical by construction.
pub fn csr_to_coo<T: Scalar>(a: &CsrMatrix<T>) -> CooMatrix<T> {
    CooMatrix {
        num_rows: a.num_rows,
        num_cols: a.num_cols,
        entries: a.iter().collect(),
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub num_rows: usize,
    pub num_cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(num_rows: usize, num_cols: usize) -> Self {
        DenseMatrix { num_rows, num_cols, data: vec![T::zero(); num_rows * num_cols] }
    }

    pub fn from_data(num_rows: usize, num_cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != num_rows * num_cols {
            return Err(Error::DimensionMismatch(format!(
                "dense data length {} != {num_rows}x{num_cols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { num_rows, num_cols, data })
    }

    /// Uniform values in `[0, 1)`, deterministic per seed.
    pub fn random(num_rows: usize, num_cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..num_rows * num_cols)
            .map(|_| T::from_f64_lossy(rng.gen::<f64>()))
            .collect();
        DenseMatrix { num_rows, num_cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.num_cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.num_cols..(i + 1) * self.num_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.num_cols..(i + 1) * self.num_cols]
    }
}

/// Bijective vertex relabeling; `old_to_new[i]` is the new index of old `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    old_to_new: Vec<usize>,
}

impl Permutation {
    pub fn new(old_to_new: Vec<usize>) -> Result<Self> {
        let n = old_to_new.len();
        let mut seen = vec![false; n];
        for &t in &old_to_new {
            if t >= n || seen[t] {
                return Err(Error::InvalidPermutation(format!(
                    "target {t} repeated or out of range for n = {n}"
                )));
            }
            seen[t] = true;
        }
        Ok(Permutation { old_to_new })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { old_to_new: (0..n).collect() }
    }

    /// Uniformly random permutation (Fisher-Yates), deterministic per seed.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            v.swap(i, rng.gen_range(0..=i));
        }
        Permutation { old_to_new: v }
    }

    pub fn len(&self) -> usize {
        self.old_to_new.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_to_new.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.old_to_new.iter().enumerate().all(|(i, &t)| i == t)
    }

    #[inline]
    pub fn apply(&self, old: usize) -> usize {
        self.old_to_new[old]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.old_to_new
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0usize; self.len()];
        for (old, &new) in self.old_to_new.iter().enumerate() {
            inv[new] = old;
        }
        Permutation { old_to_new: inv }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "composing permutations of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Permutation {
            old_to_new: other.old_to_new.iter().map(|&q| self.old_to_new[q]).collect(),
        })
    }

    /// Newline-separated new indices in old-index order, for external tooling.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &t in &self.old_to_new {
            s.push_str(&t.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            v.push(line.parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("not an index: {line:?}"),
            })?);
        }
        Permutation::new(v)
    }
}

/// Relabels rows and columns of a square matrix: entry `(i, j, v)` moves to
/// `(p[i], p[j], v)`.
pub fn apply_symmetric_permutation<T: Scalar>(
    a: &CsrMatrix<T>,
    p: &Permutation,
) -> Result<CsrMatrix<T>> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.num_rows, cols: a.num_cols });
    }
    if p.len() != a.num_rows {
        return Err(Error::DimensionMismatch(format!(
            "permutation length {} != matrix order {}",
            p.len(),
            a.num_rows
        )));
    }
    let triples = a.iter().map(|(i, j, v)| (p.apply(i), p.apply(j), v)).collect();
    Ok(CsrMatrix::from_triples(a.num_rows, a.num_cols, triples))
}

/// Moves row `i` of a dense matrix to row `p[i]`.
pub fn apply_row_permutation<T: Scalar>(
    b: &DenseMatrix<T>,
    p: &Permutation,
) -> Result<DenseMatrix<T>> {
    if p.len() != b.num_rows {
        return Err(Error::DimensionMismatch(format!(
            "permutation length {} != dense rows {}",
            p.len(),
            b.num_rows
        )));
    }
    let mut out = DenseMatrix::zeros(b.num_rows, b.num_cols);
    for i in 0..b.num_rows {
        out.row_mut(p.apply(i)).copy_from_slice(b.row(i));
    }
    Ok(out)
}

/// Straightforward row-loop SpMM with `f64` accumulators: `C = A * B`.
pub fn spmm_oracle<T: Scalar>(a: &CsrMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if a.num_cols != b.num_rows {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.num_rows, a.num_cols, b.num_rows
        )));
    }
    let f = b.num_cols;
    let mut out = DenseMatrix::zeros(a.num_rows, f);
    let mut acc = vec![0.0f64; f];
    for i in 0..a.num_rows {
        acc.fill(0.0);
        let (cols, vals) = a.row(i);
        for (&k, &v) in cols.iter().zip(vals) {
            let v = v.as_f64();
            let brow = b.row(k);
            for j in 0..f {
                acc[j] += v * brow[j].as_f64();
            }
        }
        let orow = out.row_mut(i);
        for j in 0..f {
            orow[j] = T::from_f64_lossy(acc[j]);
        }
    }
    Ok(out)
}
