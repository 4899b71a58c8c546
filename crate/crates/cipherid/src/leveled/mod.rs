//! Leveled homomorphic arithmetic **emulator**.
//!
//! Values of type [`CipherScalar`] / [`CipherMatrix`] model ciphertexts of a
//! leveled scheme: every value carries a level, multiplications consume one
//! level, and additions do not. Two backends share this bookkeeping:
//!
//! * [`BackendKind::Exact`] — plaintext real arithmetic. Used as the oracle
//!   for everything: level accounting is enforced, numeric results are plain
//!   `f64` arithmetic.
//! * [`BackendKind::FixedPoint`] — after every addition and multiplication
//!   the result is rounded to the nearest multiple of `2^-scale_bits`, and an
//!   optional zero-mean noise term is injected per multiplication. This
//!   reproduces the precision floor of an approximate-arithmetic scheme
//!   without any of its algebra.
//!
//! **None of this is encryption.** Payloads are stored in the clear and the
//! serialized form is branded `"emulated": true` so it can never be mistaken
//! for real ciphertext. The emulator exists so that depth budgeting and
//! fixed-point error growth can be tested deterministically.
//!
//! Level rules:
//!
//! * `encrypt` produces a value at `max_level`.
//! * `add` / `sub` and plaintext additions keep the level (result level is
//!   the minimum of the operand levels; mixed operands are leveled down
//!   silently).
//! * `mul` and `mul_plain` consume exactly one level. Plaintext
//!   multiplications pay the same level cost as ciphertext ones so that
//!   depth plans stay uniform.
//! * An operation that would need level `1` on an operand at level `0` fails
//!   with [`Error::DepthExhausted`].
//!
//! Noise model: each multiplication on the fixed-point backend draws a
//! zero-mean Gaussian with standard deviation [`SchemeParams::noise_std`],
//! truncated at three standard deviations so the documented homomorphism
//! error bound is hard rather than probabilistic. Draws are a pure function
//! of (backend seed, operation tag, operand bits, level): results do not
//! depend on evaluation order, which keeps parallel matrix kernels
//! deterministic.

mod matrix;
mod wire;

pub use matrix::CipherMatrix;
pub use wire::CipherBlob;

use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Arithmetic flavour run underneath the level bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Plaintext `f64` arithmetic with level accounting; the oracle backend.
    Exact,
    /// Round-to-nearest at `2^-scale_bits` after every operation, optional
    /// per-multiplication noise, hard depth exhaustion.
    FixedPoint,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Exact => "exact",
            BackendKind::FixedPoint => "fixed_point",
        }
    }
}

/// Emulated scheme parameters.
///
/// `base_modulus_bits` and `ring_dim_log2` are carried as metadata so that a
/// parameter set names a concrete provisioning (`base_modulus_bits +
/// scale_bits * max_level` total modulus bits); they do not influence the
/// emulated arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// log2 of the fixed-point scale; quantization step is `2^-scale_bits`.
    pub scale_bits: u32,
    /// Modulus bits reserved below the working levels (metadata only).
    pub base_modulus_bits: u32,
    /// Multiplicative depth available to a fresh ciphertext.
    pub max_level: u32,
    /// log2 of the emulated ring dimension (metadata only).
    pub ring_dim_log2: u32,
    /// Standard deviation of the per-multiplication noise on the fixed-point
    /// backend. `0` disables noise; the default is `2^-scale_bits`.
    pub noise_std: f64,
}

impl SchemeParams {
    /// Parameters with the conventional defaults for `max_level` levels:
    /// 30-bit scale, 60-bit base modulus, ring dimension `2^15`, noise at one
    /// quantization step.
    pub fn with_depth(max_level: u32) -> Self {
        SchemeParams {
            scale_bits: 30,
            base_modulus_bits: 60,
            max_level,
            ring_dim_log2: 15,
            noise_std: (-30f64).exp2(),
        }
    }

    /// Same defaults at a caller-chosen scale; noise defaults to one
    /// quantization step `2^-scale_bits`.
    pub fn with_scale(scale_bits: u32, max_level: u32) -> Self {
        SchemeParams {
            scale_bits,
            noise_std: (-(scale_bits as f64)).exp2(),
            ..Self::with_depth(max_level)
        }
    }

    /// Total modulus bits implied by the provisioning.
    pub fn ciphertext_modulus_bits(&self) -> u64 {
        self.base_modulus_bits as u64 + self.scale_bits as u64 * self.max_level as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=52).contains(&self.scale_bits) {
            return Err(Error::InvalidParameter(format!(
                "scale_bits must be in 1..=52 (f64 quantization), got {}",
                self.scale_bits
            )));
        }
        if self.max_level == 0 {
            return Err(Error::InvalidParameter(
                "max_level must be at least 1".into(),
            ));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self::with_depth(23)
    }
}

/// An emulated ciphertext holding a single real value.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherScalar {
    payload: f64,
    level: u32,
    backend: BackendKind,
}

impl CipherScalar {
    /// Remaining multiplicative depth.
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend
    }

    /// The stored value. Exposed for serialization and for the decryption
    /// capability; everything else should treat the payload as opaque.
    pub(crate) fn payload(&self) -> f64 {
        self.payload
    }

    pub(crate) fn from_parts(payload: f64, level: u32, backend: BackendKind) -> Self {
        CipherScalar {
            payload,
            level,
            backend,
        }
    }
}

/// Evaluator for one backend under one parameter set.
///
/// The struct holds immutable configuration only; all operations are pure
/// functions of their operands, so values can be shared freely across
/// threads.
#[derive(Debug, Clone)]
pub struct Backend {
    kind: BackendKind,
    params: SchemeParams,
    noise_seed: u64,
}

impl Backend {
    pub fn new(kind: BackendKind, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        Ok(Backend {
            kind,
            params,
            noise_seed: 0,
        })
    }

    /// Exact backend with default parameters at the given depth.
    pub fn exact(max_level: u32) -> Self {
        Backend {
            kind: BackendKind::Exact,
            params: SchemeParams::with_depth(max_level),
            noise_seed: 0,
        }
    }

    /// Replaces the seed that keys per-multiplication noise draws.
    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn max_level(&self) -> u32 {
        self.params.max_level
    }

    fn scale(&self) -> f64 {
        (self.params.scale_bits as f64).exp2()
    }

    /// Round-to-nearest at the backend's quantization step (identity on the
    /// exact backend).
    pub fn quantize(&self, x: f64) -> f64 {
        match self.kind {
            BackendKind::Exact => x,
            BackendKind::FixedPoint => {
                let s = self.scale();
                (x * s).round() / s
            }
        }
    }

    /// Encodes a plaintext as a fresh ciphertext at `max_level`.
    pub fn encrypt(&self, x: f64) -> CipherScalar {
        CipherScalar {
            payload: self.quantize(x),
            level: self.params.max_level,
            backend: self.kind,
        }
    }

    fn check_backend(&self, ct: &CipherScalar, op: &'static str) {
        assert!(
            ct.backend == self.kind,
            "{op}: ciphertext from backend {:?} evaluated on backend {:?}",
            ct.backend,
            self.kind
        );
    }

    fn check_pair(&self, a: &CipherScalar, b: &CipherScalar, op: &'static str) {
        self.check_backend(a, op);
        self.check_backend(b, op);
    }

    /// Addition; keeps the minimum operand level.
    pub fn add(&self, a: &CipherScalar, b: &CipherScalar) -> CipherScalar {
        self.check_pair(a, b, "add");
        CipherScalar {
            payload: self.quantize(a.payload + b.payload),
            level: a.level.min(b.level),
            backend: self.kind,
        }
    }

    /// Subtraction; keeps the minimum operand level.
    pub fn sub(&self, a: &CipherScalar, b: &CipherScalar) -> CipherScalar {
        self.check_pair(a, b, "sub");
        CipherScalar {
            payload: self.quantize(a.payload - b.payload),
            level: a.level.min(b.level),
            backend: self.kind,
        }
    }

    /// Negation; additive, keeps the level.
    pub fn neg(&self, a: &CipherScalar) -> CipherScalar {
        self.check_backend(a, "neg");
        CipherScalar {
            payload: -a.payload,
            level: a.level,
            backend: self.kind,
        }
    }

    /// Plaintext addition; keeps the level.
    pub fn add_plain(&self, a: &CipherScalar, c: f64) -> CipherScalar {
        self.check_backend(a, "add_plain");
        CipherScalar {
            payload: self.quantize(a.payload + c),
            level: a.level,
            backend: self.kind,
        }
    }

    /// `c - a` for plaintext `c`; additive, keeps the level.
    pub fn sub_from_plain(&self, c: f64, a: &CipherScalar) -> CipherScalar {
        self.check_backend(a, "sub_from_plain");
        CipherScalar {
            payload: self.quantize(c - a.payload),
            level: a.level,
            backend: self.kind,
        }
    }

    /// Ciphertext multiplication; consumes one level.
    pub fn mul(&self, a: &CipherScalar, b: &CipherScalar) -> Result<CipherScalar> {
        self.mul_tagged(a, b, 0)
    }

    pub(crate) fn mul_tagged(
        &self,
        a: &CipherScalar,
        b: &CipherScalar,
        tag: u64,
    ) -> Result<CipherScalar> {
        self.check_pair(a, b, "mul");
        let level = a.level.min(b.level);
        if level == 0 {
            return Err(Error::DepthExhausted(
                "mul on operands at level 0".to_string(),
            ));
        }
        let mut value = a.payload * b.payload;
        value += self.noise_draw(tag, a.payload, b.payload, level);
        Ok(CipherScalar {
            payload: self.quantize(value),
            level: level - 1,
            backend: self.kind,
        })
    }

    /// Plaintext multiplication. Consumes one level, exactly like `mul`, so
    /// that every multiplication in a circuit costs the same depth.
    pub fn mul_plain(&self, a: &CipherScalar, c: f64) -> Result<CipherScalar> {
        self.check_backend(a, "mul_plain");
        if a.level == 0 {
            return Err(Error::DepthExhausted(
                "mul_plain on operand at level 0".to_string(),
            ));
        }
        let mut value = a.payload * c;
        value += self.noise_draw(0x706c_61696e, a.payload, c, a.level);
        Ok(CipherScalar {
            payload: self.quantize(value),
            level: a.level - 1,
            backend: self.kind,
        })
    }

    /// Truncated-Gaussian noise keyed by (seed, tag, operands, level); zero
    /// on the exact backend or when `noise_std == 0`.
    fn noise_draw(&self, tag: u64, a: f64, b: f64, level: u32) -> f64 {
        if self.kind == BackendKind::Exact || self.params.noise_std == 0.0 {
            return 0.0;
        }
        let mut h = self.noise_seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in [tag, a.to_bits(), b.to_bits(), level as u64] {
            h = splitmix64(h ^ v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let std = self.params.noise_std;
        let draw = Normal::new(0.0, std)
            .expect("noise_std validated finite and non-negative")
            .sample(&mut rng);
        draw.clamp(-3.0 * std, 3.0 * std)
    }
}

/// Decryption capability.
///
/// The emulator has no real keys; this struct exists so that code paths can
/// be given or denied the ability to read payloads. Server-side code takes
/// only a [`Backend`] and therefore cannot decrypt.
#[derive(Debug, Clone)]
pub struct DecryptKey {
    kind: BackendKind,
}

impl DecryptKey {
    pub fn new(backend: &Backend) -> Self {
        DecryptKey {
            kind: backend.kind(),
        }
    }

    pub fn decrypt(&self, ct: &CipherScalar) -> f64 {
        assert!(
            ct.backend_kind() == self.kind,
            "decrypt: key for backend {:?} applied to ciphertext from {:?}",
            self.kind,
            ct.backend_kind()
        );
        ct.payload()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(scale_bits: u32, max_level: u32, noise_std: f64) -> Backend {
        let params = SchemeParams {
            noise_std,
            ..SchemeParams::with_scale(scale_bits, max_level)
        };
        Backend::new(BackendKind::FixedPoint, params).unwrap()
    }

    #[test]
    fn encrypt_quantizes_to_scale() {
        let b = fixed(30, 4, 0.0);
        let ct = b.encrypt(1.0 / 3.0);
        let s = 30f64.exp2();
        assert_eq!(ct.payload(), (s / 3.0).round() / s);
        assert!((ct.payload() - 1.0 / 3.0).abs() <= (-31f64).exp2());
        assert_eq!(ct.level(), 4);
    }

    #[test]
    fn exact_backend_stores_verbatim() {
        let b = Backend::exact(4);
        let ct = b.encrypt(1.0 / 3.0);
        assert_eq!(ct.payload(), 1.0 / 3.0);
    }

    #[test]
    fn add_keeps_min_level_mul_consumes_one() {
        let b = Backend::exact(5);
        let x = b.encrypt(2.0);
        let y = b.mul(&b.encrypt(3.0), &b.encrypt(1.0)).unwrap(); // level 4
        let s = b.add(&x, &y);
        assert_eq!(s.level(), 4);
        assert_eq!(s.payload(), 5.0);
        let p = b.mul(&x, &y).unwrap();
        assert_eq!(p.level(), 3);
        assert_eq!(p.payload(), 6.0);
    }

    #[test]
    fn mul_at_level_zero_is_depth_exhausted() {
        let b = Backend::exact(1);
        let x = b.encrypt(2.0);
        let y = b.mul(&x, &x).unwrap();
        assert_eq!(y.level(), 0);
        match b.mul(&y, &y) {
            Err(Error::DepthExhausted(_)) => {}
            other => panic!("expected DepthExhausted, got {other:?}"),
        }
        match b.mul_plain(&y, 2.0) {
            Err(Error::DepthExhausted(_)) => {}
            other => panic!("expected DepthExhausted, got {other:?}"),
        }
    }

    #[test]
    fn mul_plain_consumes_exactly_one_level() {
        let b = fixed(30, 3, 0.0);
        let x = b.encrypt(0.5);
        let y = b.mul_plain(&x, 4.0).unwrap();
        assert_eq!(y.level(), 2);
        assert_eq!(y.payload(), 2.0);
    }

    #[test]
    fn additive_ops_cost_no_levels() {
        let b = fixed(20, 2, 0.0);
        let x = b.encrypt(1.25);
        assert_eq!(b.add_plain(&x, 1.0).level(), 2);
        assert_eq!(b.sub_from_plain(2.0, &x).payload(), 0.75);
        assert_eq!(b.neg(&x).payload(), -1.25);
    }

    #[test]
    fn homomorphism_error_bound_holds() {
        // |dec(enc(x) * enc(y)) - x*y| <= 3*noise_std + (|x|+|y|+1) * 2^-scale_bits
        let bits = 30u32;
        let std = (-(bits as f64)).exp2();
        let b = fixed(bits, 8, std).with_noise_seed(7);
        let key = DecryptKey::new(&b);
        let mut state = 0x1234_5678_u64;
        for _ in 0..2000 {
            state = splitmix64(state);
            let x = (state >> 11) as f64 / (1u64 << 53) as f64 * 2000.0 - 1000.0;
            state = splitmix64(state);
            let y = (state >> 11) as f64 / (1u64 << 53) as f64 * 2000.0 - 1000.0;
            let got = key.decrypt(&b.mul(&b.encrypt(x), &b.encrypt(y)).unwrap());
            let bound = 3.0 * std + (x.abs() + y.abs() + 1.0) * (-(bits as f64)).exp2();
            assert!(
                (got - x * y).abs() <= bound,
                "x={x}, y={y}, err={}, bound={bound}",
                (got - x * y).abs()
            );
        }
    }

    #[test]
    fn noise_draws_are_reproducible() {
        let b = fixed(30, 4, 1e-6).with_noise_seed(42);
        let x = b.encrypt(1.5);
        let y = b.encrypt(-2.25);
        let p1 = b.mul(&x, &y).unwrap();
        let p2 = b.mul(&x, &y).unwrap();
        assert_eq!(p1.payload(), p2.payload());
        // A different seed must give a different draw.
        let b2 = fixed(30, 4, 1e-6).with_noise_seed(43);
        let p3 = b2.mul(&b2.encrypt(1.5), &b2.encrypt(-2.25)).unwrap();
        assert_ne!(p1.payload(), p3.payload());
    }

    #[test]
    fn zero_noise_fixed_point_is_pure_quantization() {
        let b = fixed(10, 4, 0.0);
        let x = b.encrypt(0.1); // quantized to nearest 2^-10
        let q = (0.1f64 * 1024.0).round() / 1024.0;
        assert_eq!(b.quantize(0.1), q);
        let p = b.mul(&x, &x).unwrap();
        assert_eq!(p.payload(), (q * q * 1024.0).round() / 1024.0);
    }

    #[test]
    fn params_validation_rejects_bad_values() {
        assert!(SchemeParams::with_scale(0, 4).validate().is_err());
        assert!(SchemeParams::with_scale(53, 4).validate().is_err());
        assert!(SchemeParams::with_depth(0).validate().is_err());
        let p = SchemeParams {
            noise_std: f64::NAN,
            ..SchemeParams::default()
        };
        assert!(p.validate().is_err());
        assert_eq!(SchemeParams::default().ciphertext_modulus_bits(), 60 + 30 * 23);
    }

    #[test]
    #[should_panic(expected = "evaluated on backend")]
    fn backend_mismatch_panics() {
        let exact = Backend::exact(4);
        let fx = fixed(30, 4, 0.0);
        let a = exact.encrypt(1.0);
        let b_ = fx.encrypt(1.0);
        let _ = fx.add(&a, &b_);
    }
}
