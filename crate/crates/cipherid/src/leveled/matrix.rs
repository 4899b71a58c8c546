//! Matrices of emulated ciphertexts.
//!
//! A `CipherMatrix` is a dense row-major grid of [`CipherScalar`] entries
//! that all sit at the same level; mixed-level inputs are leveled down to the
//! minimum on construction. Matrix operations reduce to scalar operations on
//! entries, so the level rules are inherited: products consume one level
//! (the row-column sums are additive and free), everything else is additive.

use super::{Backend, BackendKind, CipherScalar, DecryptKey};
use crate::{Error, Result};
use nalgebra::DMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Floor on the scalar multiplications a parallel task owns. Entry maps are
/// chunked so each task carries at least this much arithmetic; below it,
/// scheduling overhead outweighs the work and the map runs on one thread.
#[cfg(feature = "parallel")]
const PAR_GRAIN_MULS: usize = 4096;

/// Dense matrix of emulated ciphertexts, row-major, uniform level.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<CipherScalar>,
}

impl CipherMatrix {
    /// Builds a matrix from row-major entries, leveling everything down to
    /// the minimum entry level.
    pub fn from_entries(rows: usize, cols: usize, mut entries: Vec<CipherScalar>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_entries",
                details: format!("{rows}x{cols} with {} entries", entries.len()),
            });
        }
        let backend = entries[0].backend_kind();
        if entries.iter().any(|e| e.backend_kind() != backend) {
            return Err(Error::DimensionMismatch {
                op: "from_entries",
                details: "entries from different backends".to_string(),
            });
        }
        let level = entries.iter().map(CipherScalar::level).min().unwrap();
        for e in &mut entries {
            *e = CipherScalar::from_parts(e.payload(), level, backend);
        }
        Ok(CipherMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Level shared by all entries.
    pub fn level(&self) -> u32 {
        self.entries[0].level()
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.entries[0].backend_kind()
    }

    pub fn entry(&self, i: usize, j: usize) -> &CipherScalar {
        assert!(i < self.rows && j < self.cols, "entry ({i},{j}) out of range");
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[CipherScalar] {
        &self.entries
    }
}

/// Domain constants that keep noise draws from different kernels decorrelated.
const TAG_MAT_MUL: u64 = 0x6d61_745f_6d75_6c00;
const TAG_MAT_SCALE: u64 = 0x6d61_745f_7363_616c;

impl Backend {
    /// Encrypts a plaintext matrix entrywise at `max_level`.
    pub fn encrypt_matrix(&self, m: &DMatrix<f64>) -> CipherMatrix {
        let entries = m
            .row_iter()
            .flat_map(|row| row.iter().map(|&x| self.encrypt(x)).collect::<Vec<_>>())
            .collect();
        CipherMatrix::from_entries(m.nrows(), m.ncols(), entries)
            .expect("plaintext matrix has uniform fresh level")
    }

    /// Matrix product; consumes exactly one level (the additions inside each
    /// row-column sum are free).
    pub fn mat_mul(&self, a: &CipherMatrix, b: &CipherMatrix) -> Result<CipherMatrix> {
        if a.cols != b.rows {
            return Err(Error::DimensionMismatch {
                op: "mat_mul",
                details: format!("{}x{} * {}x{}", a.rows, a.cols, b.rows, b.cols),
            });
        }
        if a.level().min(b.level()) == 0 {
            return Err(Error::DepthExhausted(format!(
                "mat_mul on operands at levels {} and {}",
                a.level(),
                b.level()
            )));
        }
        let inner = a.cols;
        let compute = |idx: usize| -> Result<CipherScalar> {
            let (i, j) = (idx / b.cols, idx % b.cols);
            let mut acc: Option<CipherScalar> = None;
            for k in 0..inner {
                let tag = TAG_MAT_MUL ^ ((idx as u64) << 20) ^ k as u64;
                let term = self.mul_tagged(a.entry(i, k), b.entry(k, j), tag)?;
                acc = Some(match acc {
                    None => term,
                    Some(s) => self.add(&s, &term),
                });
            }
            Ok(acc.expect("inner dimension is nonzero"))
        };
        let entries = self.map_indices(a.rows * b.cols, inner, compute)?;
        CipherMatrix::from_entries(a.rows, b.cols, entries)
    }

    /// Entrywise sum; levels down to the minimum operand level.
    pub fn mat_add(&self, a: &CipherMatrix, b: &CipherMatrix) -> Result<CipherMatrix> {
        self.zip_entries("mat_add", a, b, |x, y| Ok(self.add(x, y)))
    }

    /// Entrywise difference; levels down to the minimum operand level.
    pub fn mat_sub(&self, a: &CipherMatrix, b: &CipherMatrix) -> Result<CipherMatrix> {
        self.zip_entries("mat_sub", a, b, |x, y| Ok(self.sub(x, y)))
    }

    /// Transpose; a pure reshuffle, no level cost.
    pub fn transpose(&self, a: &CipherMatrix) -> CipherMatrix {
        let mut entries = Vec::with_capacity(a.entries.len());
        for j in 0..a.cols {
            for i in 0..a.rows {
                entries.push(a.entry(i, j).clone());
            }
        }
        CipherMatrix::from_entries(a.cols, a.rows, entries).expect("transpose preserves shape")
    }

    /// Entrywise negation; additive, no level cost.
    pub fn mat_neg(&self, a: &CipherMatrix) -> CipherMatrix {
        let entries = a.entries.iter().map(|e| self.neg(e)).collect();
        CipherMatrix::from_entries(a.rows, a.cols, entries).expect("shape unchanged")
    }

    /// Trace of a square matrix; additive, no level cost.
    pub fn trace(&self, a: &CipherMatrix) -> Result<CipherScalar> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch {
                op: "trace",
                details: format!("{}x{}", a.rows, a.cols),
            });
        }
        let mut acc = a.entry(0, 0).clone();
        for i in 1..a.rows {
            acc = self.add(&acc, a.entry(i, i));
        }
        Ok(acc)
    }

    /// Entrywise plaintext scaling; consumes one level.
    pub fn scale_by_plain(&self, a: &CipherMatrix, c: f64) -> Result<CipherMatrix> {
        if a.level() == 0 {
            return Err(Error::DepthExhausted(
                "scale_by_plain on matrix at level 0".to_string(),
            ));
        }
        let entries = a
            .entries
            .iter()
            .map(|e| self.mul_plain(e, c))
            .collect::<Result<Vec<_>>>()?;
        CipherMatrix::from_entries(a.rows, a.cols, entries)
    }

    /// Entrywise product with a ciphertext scalar; consumes one level.
    pub fn mat_scale_cipher(&self, a: &CipherMatrix, s: &CipherScalar) -> Result<CipherMatrix> {
        if a.level().min(s.level()) == 0 {
            return Err(Error::DepthExhausted(format!(
                "mat_scale_cipher on matrix at level {} and scalar at level {}",
                a.level(),
                s.level()
            )));
        }
        let compute = |idx: usize| self.mul_tagged(&a.entries[idx], s, TAG_MAT_SCALE ^ idx as u64);
        let entries = self.map_indices(a.entries.len(), 1, compute)?;
        CipherMatrix::from_entries(a.rows, a.cols, entries)
    }

    fn zip_entries(
        &self,
        op: &'static str,
        a: &CipherMatrix,
        b: &CipherMatrix,
        f: impl Fn(&CipherScalar, &CipherScalar) -> Result<CipherScalar>,
    ) -> Result<CipherMatrix> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Error::DimensionMismatch {
                op,
                details: format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols),
            });
        }
        let entries = a
            .entries
            .iter()
            .zip(&b.entries)
            .map(|(x, y)| f(x, y))
            .collect::<Result<Vec<_>>>()?;
        CipherMatrix::from_entries(a.rows, a.cols, entries)
    }

    /// Maps an entry computation over `0..n`, in parallel when the `parallel`
    /// feature is enabled. `muls_per_item` sizes the chunks: tasks own at
    /// least [`PAR_GRAIN_MULS`] multiplications, so small maps stay on one
    /// thread instead of paying scheduling overhead. Noise draws are keyed by
    /// entry index, so the result does not depend on the execution order.
    #[cfg(feature = "parallel")]
    fn map_indices(
        &self,
        n: usize,
        muls_per_item: usize,
        f: impl Fn(usize) -> Result<CipherScalar> + Sync + Send,
    ) -> Result<Vec<CipherScalar>> {
        let min_len = (PAR_GRAIN_MULS / muls_per_item.max(1)).max(1);
        if n <= min_len {
            // A single chunk gains nothing from the pool but still pays the
            // injection handshake; stay on the calling thread.
            return (0..n).map(f).collect::<Result<Vec<_>>>();
        }
        (0..n)
            .into_par_iter()
            .with_min_len(min_len)
            .map(f)
            .collect::<Result<Vec<_>>>()
    }

    #[cfg(not(feature = "parallel"))]
    fn map_indices(
        &self,
        n: usize,
        _muls_per_item: usize,
        f: impl Fn(usize) -> Result<CipherScalar> + Sync + Send,
    ) -> Result<Vec<CipherScalar>> {
        (0..n).map(f).collect::<Result<Vec<_>>>()
    }
}

impl DecryptKey {
    /// Decrypts every entry into a plaintext matrix.
    pub fn decrypt_matrix(&self, m: &CipherMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(m.rows(), m.cols(), |i, j| self.decrypt(m.entry(i, j)))
    }
}
