//! Host-side toolkit for tensor-core SpMM experiments.
//!
//! The pipeline mirrors how a TC-based SpMM library prepares work on the
//! host: ingest a sparse matrix, improve its block density with
//! data-affinity reordering, pack it into the bitmap-compressed BitTCF
//! format, schedule TC blocks across thread-block work units, and predict
//! pipeline behaviour with a deterministic discrete-event simulator. A
//! reference executor replays the kernel's tile dataflow on the CPU so every
//! transformation can be checked against a plain CSR oracle.
//!
//! Matrix containers are generic over the scalar type (`f32` or `f64`, see
//! [`Scalar`]); accumulation always happens in `f64`.

pub mod balance;
pub mod bittcf;
pub mod error;
pub mod executor;
pub mod matrix;
pub mod mm;
pub mod pipesim;
pub mod reorder;
pub mod sbm;
pub mod scalar;
pub mod tile;

pub use error::{Error, Result};
pub use matrix::{spmm_oracle, CooMatrix, CsrMatrix, DenseMatrix, Permutation};
pub use scalar::Scalar;

/// `f32`-valued COO matrix.
pub type CooF32 = CooMatrix<f32>;
/// `f64`-valued COO matrix.
pub type CooF64 = CooMatrix<f64>;
/// `f32`-valued CSR matrix.
pub type CsrF32 = CsrMatrix<f32>;
/// `f64`-valued CSR matrix.
pub type CsrF64 = CsrMatrix<f64>;
/// `f32`-valued dense matrix.
pub type DenseF32 = DenseMatrix<f32>;
/// `f64`-valued dense matrix.
pub type DenseF64 = DenseMatrix<f64>;
/// BitTCF with `f32` values, the on-disk value width.
pub type BitTcfF32 = bittcf::BitTcf<f32>;
/// BitTcf with `f64` values.
pub type BitTcfF64 = bittcf::BitTcf<f64>;
