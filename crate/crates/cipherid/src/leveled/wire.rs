//! Serialized form of emulated ciphertexts.
//!
//! Every blob carries `"emulated": true`. Readers refuse blobs without the
//! marker: the payload is plaintext, and nothing that parses this format
//! should ever be able to mistake it for real ciphertext.
//!
//! Payload values are written as decimal strings using the shortest
//! representation that round-trips `f64` exactly, so serialization is
//! bit-exact for any value the backends can produce.

use super::{BackendKind, CipherMatrix, CipherScalar};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Wire form of a ciphertext scalar (1x1) or matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CipherBlob {
    pub backend: BackendKind,
    pub scale_bits: u32,
    pub level: u32,
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries as decimal strings.
    pub payload: Vec<String>,
    /// Mandatory honesty marker; always `true`.
    pub emulated: bool,
}

impl CipherBlob {
    pub fn from_matrix(m: &CipherMatrix, scale_bits: u32) -> Self {
        CipherBlob {
            backend: m.backend_kind(),
            scale_bits,
            level: m.level(),
            rows: m.rows(),
            cols: m.cols(),
            payload: m.entries().iter().map(|e| e.payload().to_string()).collect(),
            emulated: true,
        }
    }

    pub fn from_scalar(s: &CipherScalar, scale_bits: u32) -> Self {
        CipherBlob {
            backend: s.backend_kind(),
            scale_bits,
            level: s.level(),
            rows: 1,
            cols: 1,
            payload: vec![s.payload().to_string()],
            emulated: true,
        }
    }

    fn check(&self) -> Result<()> {
        if !self.emulated {
            return Err(Error::InvalidParameter(
                "refusing ciphertext blob without the emulated marker".to_string(),
            ));
        }
        if self.rows == 0 || self.cols == 0 || self.payload.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch {
                op: "cipher_blob",
                details: format!(
                    "{}x{} with {} payload entries",
                    self.rows,
                    self.cols,
                    self.payload.len()
                ),
            });
        }
        Ok(())
    }

    fn parse_entries(&self) -> Result<Vec<f64>> {
        let step = (self.scale_bits as f64).exp2();
        self.payload
            .iter()
            .map(|s| {
                let v: f64 = s.parse().map_err(|_| {
                    Error::InvalidParameter(format!("unparseable payload entry {s:?}"))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "non-finite payload entry {s:?}"
                    )));
                }
                if self.backend == BackendKind::FixedPoint {
                    let scaled = v * step;
                    if scaled.abs() < 2f64.powi(53) && scaled != scaled.round() {
                        return Err(Error::InvalidParameter(format!(
                            "fixed-point payload {s:?} is not a multiple of 2^-{}",
                            self.scale_bits
                        )));
                    }
                }
                Ok(v)
            })
            .collect()
    }

    pub fn to_matrix(&self) -> Result<CipherMatrix> {
        self.check()?;
        let entries = self
            .parse_entries()?
            .into_iter()
            .map(|v| CipherScalar::from_parts(v, self.level, self.backend))
            .collect();
        CipherMatrix::from_entries(self.rows, self.cols, entries)
    }

    pub fn to_scalar(&self) -> Result<CipherScalar> {
        self.check()?;
        if self.rows != 1 || self.cols != 1 {
            return Err(Error::DimensionMismatch {
                op: "cipher_blob_scalar",
                details: format!("{}x{}", self.rows, self.cols),
            });
        }
        let v = self.parse_entries()?[0];
        Ok(CipherScalar::from_parts(v, self.level, self.backend))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leveled::{Backend, DecryptKey, SchemeParams};
    use nalgebra::dmatrix;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let b = Backend::exact(7);
        let m = b.encrypt_matrix(&dmatrix![1.0 / 3.0, -2.75e-13; 1e17, 0.1]);
        let blob = CipherBlob::from_matrix(&m, 30);
        let json = serde_json::to_string(&blob).unwrap();
        let back: CipherBlob = serde_json::from_str(&json).unwrap();
        let m2 = back.to_matrix().unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn scalar_round_trip_preserves_level_and_backend() {
        let params = SchemeParams::with_scale(30, 9);
        let b = Backend::new(BackendKind::FixedPoint, params).unwrap();
        let key = DecryptKey::new(&b);
        let s = b.mul(&b.encrypt(1.0 / 3.0), &b.encrypt(-7.5)).unwrap();
        let blob = CipherBlob::from_scalar(&s, 30);
        assert!(blob.emulated);
        let s2 = blob.to_scalar().unwrap();
        assert_eq!(s2.level(), 8);
        assert_eq!(s2.backend_kind(), BackendKind::FixedPoint);
        assert_eq!(key.decrypt(&s2), key.decrypt(&s));
    }

    #[test]
    fn unmarked_blob_is_refused() {
        let b = Backend::exact(3);
        let mut blob = CipherBlob::from_scalar(&b.encrypt(2.0), 30);
        blob.emulated = false;
        assert!(matches!(
            blob.to_scalar(),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn off_grid_fixed_point_payload_is_refused() {
        let blob = CipherBlob {
            backend: BackendKind::FixedPoint,
            scale_bits: 4,
            level: 2,
            rows: 1,
            cols: 1,
            payload: vec!["0.3".to_string()], // not a multiple of 2^-4
            emulated: true,
        };
        assert!(matches!(blob.to_scalar(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn payload_length_is_checked() {
        let blob = CipherBlob {
            backend: BackendKind::Exact,
            scale_bits: 30,
            level: 1,
            rows: 2,
            cols: 2,
            payload: vec!["1".into(), "2".into(), "3".into()],
            emulated: true,
        };
        assert!(matches!(
            blob.to_matrix(),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
