//! Iterative kernels evaluated on emulated ciphertexts.
//!
//! Scalar reciprocal: `w_{k+1} = (2 - w_k mu) w_k` converges to `1/mu`
//! quadratically whenever `0 < w_0 < 2/mu`; the error `e_k = 1 - w_k mu`
//! squares each step, and is non-negative with `0 < w_k <= 1/mu` from the
//! first iteration on.
//!
//! Matrix pseudoinverse: `W_{k+1} = (2I - W_k M) W_k` converges to `M^+`
//! when `W_0 = alpha M^T` with `alpha` inside the stability interval. The
//! residual `E_k = I - W_k M` squares each step, and the absolute error
//! obeys `M^+ - W_k = E_k M^+`.
//!
//! Both iterations cost two ciphertext multiplications of depth per step in
//! the naive form. The product variants carry the pair `(F_k, H_k)` with
//! `H_k = W_k M` (scalar: `h_k = w_k mu`) and update both through the shared
//! factor `2I - H_k`, which costs a single level per step while producing
//! the same iterates.
//!
//! [`binary_pow`] and [`laplace_det`] are the small circuit building blocks
//! used by the accuracy certificates.

use crate::leveled::{Backend, CipherMatrix, CipherScalar};
use crate::{Error, Result};
use std::collections::HashMap;

/// Per-iteration diagnostics `(iteration, metric)` captured by a caller that
/// holds a decryption capability. The metric is producer-defined: `|1 - w_k
/// mu|` for scalar runs, a residual or task error for matrix runs. Kernels
/// never fill this themselves — on the fixed-point backend intermediates
/// stay opaque unless a debug key is configured.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterTrace {
    pub samples: Vec<(usize, f64)>,
}

impl IterTrace {
    pub fn push(&mut self, iteration: usize, metric: f64) {
        self.samples.push((iteration, metric));
    }
}

/// `2I - A` for square `A`; additive, no level cost.
fn two_i_minus(b: &Backend, a: &CipherMatrix) -> Result<CipherMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "two_i_minus",
            details: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let e = a.entry(i, j);
            entries.push(if i == j {
                b.sub_from_plain(2.0, e)
            } else {
                b.neg(e)
            });
        }
    }
    CipherMatrix::from_entries(n, n, entries)
}

/// Naive scalar reciprocal iteration; two levels per step.
#[derive(Debug, Clone)]
pub struct ReciprocalIteration {
    mu: CipherScalar,
    w: CipherScalar,
}

impl ReciprocalIteration {
    pub fn new(mu: &CipherScalar, w0: &CipherScalar) -> Self {
        ReciprocalIteration {
            mu: mu.clone(),
            w: w0.clone(),
        }
    }

    pub fn step(&mut self, b: &Backend) -> Result<()> {
        let t = b.mul(&self.w, &self.mu)?;
        let factor = b.sub_from_plain(2.0, &t);
        self.w = b.mul(&factor, &self.w)?;
        Ok(())
    }

    pub fn value(&self) -> &CipherScalar {
        &self.w
    }
}

/// Runs `k_div` naive reciprocal steps from `w0`.
pub fn reciprocal_iter(
    b: &Backend,
    mu: &CipherScalar,
    w0: &CipherScalar,
    k_div: u32,
) -> Result<CipherScalar> {
    let mut it = ReciprocalIteration::new(mu, w0);
    for _ in 0..k_div {
        it.step(b)?;
    }
    Ok(it.w)
}

/// Product-form scalar reciprocal: carries `(f_k, h_k)` with `h_k = w_k mu`
/// and spends one level per step after the one-level initialization.
#[derive(Debug, Clone)]
pub struct GoldschmidtReciprocal {
    f: CipherScalar,
    h: CipherScalar,
}

impl GoldschmidtReciprocal {
    /// `f_0 = w_0`, `h_0 = w_0 * mu` (one level).
    pub fn init(b: &Backend, mu: &CipherScalar, w0: &CipherScalar) -> Result<Self> {
        Ok(GoldschmidtReciprocal {
            f: w0.clone(),
            h: b.mul(w0, mu)?,
        })
    }

    /// One step through the shared factor `2 - h_k`; one level.
    pub fn step(&mut self, b: &Backend) -> Result<()> {
        let factor = b.sub_from_plain(2.0, &self.h);
        self.f = b.mul(&factor, &self.f)?;
        self.h = b.mul(&factor, &self.h)?;
        Ok(())
    }

    /// The reciprocal iterate `f_k` (equal to the naive `w_k`).
    pub fn value(&self) -> &CipherScalar {
        &self.f
    }

    /// The product iterate `h_k = w_k mu`.
    pub fn product(&self) -> &CipherScalar {
        &self.h
    }
}

/// Runs `k_div` product-form steps from `w0`; returns `w_{k_div}`.
pub fn goldschmidt_reciprocal(
    b: &Backend,
    mu: &CipherScalar,
    w0: &CipherScalar,
    k_div: u32,
) -> Result<CipherScalar> {
    let mut it = GoldschmidtReciprocal::init(b, mu, w0)?;
    for _ in 0..k_div {
        it.step(b)?;
    }
    Ok(it.f)
}

/// Naive pseudoinverse iteration `W_{k+1} = (2I - W_k M) W_k`; two levels
/// per step.
#[derive(Debug, Clone)]
pub struct SchulzIteration {
    m: CipherMatrix,
    w: CipherMatrix,
    /// Optional precomputed `W_0 M` (e.g. the alpha-scaled Gram matrix); the
    /// first step consumes it instead of forming the product again.
    first_product: Option<CipherMatrix>,
}

impl SchulzIteration {
    pub fn new(
        m: &CipherMatrix,
        w0: &CipherMatrix,
        first_product: Option<CipherMatrix>,
    ) -> Result<Self> {
        if w0.rows() != m.cols() || w0.cols() != m.rows() {
            return Err(Error::DimensionMismatch {
                op: "schulz_iter",
                details: format!(
                    "W is {}x{}, M is {}x{}",
                    w0.rows(),
                    w0.cols(),
                    m.rows(),
                    m.cols()
                ),
            });
        }
        if let Some(p) = &first_product {
            if p.rows() != m.cols() || p.cols() != m.cols() {
                return Err(Error::DimensionMismatch {
                    op: "schulz_iter",
                    details: format!("precomputed W0*M is {}x{}", p.rows(), p.cols()),
                });
            }
        }
        Ok(SchulzIteration {
            m: m.clone(),
            w: w0.clone(),
            first_product,
        })
    }

    pub fn step(&mut self, b: &Backend) -> Result<()> {
        let wm = match self.first_product.take() {
            Some(p) => p,
            None => b.mat_mul(&self.w, &self.m)?,
        };
        let factor = two_i_minus(b, &wm)?;
        self.w = b.mat_mul(&factor, &self.w)?;
        Ok(())
    }

    pub fn iterate(&self) -> &CipherMatrix {
        &self.w
    }
}

/// Runs `k_inv` naive pseudoinverse steps from `w0`.
///
/// `first_product` may hold a precomputed `W_0 M` (the alpha-scaled Gram
/// matrix); this saves the product in the first step but changes neither
/// values nor levels.
pub fn schulz_iter(
    b: &Backend,
    m: &CipherMatrix,
    w0: &CipherMatrix,
    k_inv: u32,
    first_product: Option<CipherMatrix>,
) -> Result<CipherMatrix> {
    let mut it = SchulzIteration::new(m, w0, first_product)?;
    for _ in 0..k_inv {
        it.step(b)?;
    }
    Ok(it.w)
}

/// Product-form pseudoinverse iteration: carries `(F_k, H_k)` with
/// `H_k = W_k M` and updates both through the shared factor `2I - H_k`, one
/// level per step. `F_k` equals the naive `W_k` for all `k`.
#[derive(Debug, Clone)]
pub struct GoldschmidtMatrix {
    f: CipherMatrix,
    h: CipherMatrix,
}

impl GoldschmidtMatrix {
    /// Starts from `F_0 = W_0` and a separately assembled `H_0 = W_0 M`.
    pub fn new(f0: &CipherMatrix, h0: &CipherMatrix) -> Result<Self> {
        if h0.rows() != h0.cols() || h0.rows() != f0.rows() {
            return Err(Error::DimensionMismatch {
                op: "goldschmidt_matrix",
                details: format!(
                    "F is {}x{}, H is {}x{}",
                    f0.rows(),
                    f0.cols(),
                    h0.rows(),
                    h0.cols()
                ),
            });
        }
        Ok(GoldschmidtMatrix {
            f: f0.clone(),
            h: h0.clone(),
        })
    }

    /// One step; the factor `2I - H_k` feeds both updates, so the pair stays
    /// level-aligned and each step costs exactly one level.
    ///
    /// Under the `parallel` feature the two products run concurrently once
    /// they are large enough to amortize the fork; handing a handful of
    /// microseconds to the thread pool costs more than computing them in
    /// place.
    pub fn step(&mut self, b: &Backend) -> Result<()> {
        let factor = two_i_minus(b, &self.h)?;
        #[cfg(feature = "parallel")]
        let (f, h) = {
            let nu = self.h.rows();
            let muls = nu * nu * (self.f.cols() + self.h.cols());
            if muls >= 1 << 14 {
                let (f, h) = rayon::join(
                    || b.mat_mul(&factor, &self.f),
                    || b.mat_mul(&factor, &self.h),
                );
                (f?, h?)
            } else {
                (b.mat_mul(&factor, &self.f)?, b.mat_mul(&factor, &self.h)?)
            }
        };
        #[cfg(not(feature = "parallel"))]
        let (f, h) = (b.mat_mul(&factor, &self.f)?, b.mat_mul(&factor, &self.h)?);
        self.f = f;
        self.h = h;
        Ok(())
    }

    /// The pseudoinverse iterate `F_k` (equal to the naive `W_k`).
    pub fn iterate(&self) -> &CipherMatrix {
        &self.f
    }

    /// The product iterate `H_k = W_k M`.
    pub fn product(&self) -> &CipherMatrix {
        &self.h
    }
}

/// Runs `k_inv` product-form steps from `(f0, h0)`; returns `F_{k_inv}`.
pub fn goldschmidt_matrix(
    b: &Backend,
    f0: &CipherMatrix,
    h0: &CipherMatrix,
    k_inv: u32,
) -> Result<CipherMatrix> {
    let mut it = GoldschmidtMatrix::new(f0, h0)?;
    for _ in 0..k_inv {
        it.step(b)?;
    }
    Ok(it.f)
}

/// `x^e` for `e >= 1` by a depth-optimal addition chain.
///
/// Consumes exactly `floor(log2 e)` levels when `e` is a power of two and
/// one more otherwise (`ceil(log2 e)` in both cases); intermediate powers
/// are memoized, so the multiplication count stays within the usual
/// square-and-multiply budget.
pub fn binary_pow(b: &Backend, x: &CipherScalar, e: u32) -> Result<CipherScalar> {
    if e == 0 {
        return Err(Error::PreconditionViolated(
            "binary_pow needs exponent >= 1".to_string(),
        ));
    }
    fn go(
        b: &Backend,
        e: u32,
        memo: &mut HashMap<u32, CipherScalar>,
    ) -> Result<CipherScalar> {
        if let Some(v) = memo.get(&e) {
            return Ok(v.clone());
        }
        let v = if e.is_multiple_of(2) {
            let half = go(b, e / 2, memo)?;
            b.mul(&half, &half)?
        } else {
            // Split an odd exponent as floor(e/2) + ceil(e/2) so both halves
            // sit one rung down the chain; this is what keeps the depth at
            // ceil(log2 e) rather than paying one level per set bit.
            let lo = go(b, e / 2, memo)?;
            let hi = go(b, e / 2 + 1, memo)?;
            b.mul(&lo, &hi)?
        };
        memo.insert(e, v.clone());
        Ok(v)
    }
    let mut memo = HashMap::new();
    memo.insert(1, x.clone());
    go(b, e, &mut memo)
}

/// Minimum dimension at which the cofactor expansion splits across threads.
/// Each task then owns a full `(n-1)!`-product sub-expansion; splitting
/// smaller expansions (or recursive levels) floods the scheduler with
/// sub-microsecond jobs that cost more than they compute.
#[cfg(feature = "parallel")]
const PAR_DET_MIN_DIM: usize = 7;

/// Determinant by cofactor expansion along the first row; consumes exactly
/// `nu - 1` levels for a `nu x nu` matrix. Signs enter as plaintext
/// add/sub, so only the entry-times-minor products cost depth.
///
/// The expansion enumerates all `nu!` products, so matrices beyond 10x10
/// are refused. Under the `parallel` feature the top row's cofactors are
/// computed concurrently (one task per column, sequential below); the
/// accumulation order is fixed, so the result matches the sequential build
/// bit for bit.
pub fn laplace_det(b: &Backend, a: &CipherMatrix) -> Result<CipherScalar> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            op: "laplace_det",
            details: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    if a.rows() > 10 {
        return Err(Error::Unsupported(format!(
            "cofactor expansion of a {}x{} matrix ({}! products)",
            a.rows(),
            a.cols(),
            a.rows()
        )));
    }
    #[cfg(feature = "parallel")]
    {
        let n = a.rows();
        if n >= PAR_DET_MIN_DIM {
            use rayon::prelude::*;
            let terms: Vec<CipherScalar> = (0..n)
                .into_par_iter()
                .map(|j| cofactor_term(b, a, j))
                .collect::<Result<_>>()?;
            return Ok(alternating_sum(b, &terms));
        }
    }
    det_rec(b, a)
}

fn cofactor_term(b: &Backend, a: &CipherMatrix, j: usize) -> Result<CipherScalar> {
    let minor = first_row_minor(a, j)?;
    let d = det_rec(b, &minor)?;
    b.mul(a.entry(0, j), &d)
}

fn det_rec(b: &Backend, a: &CipherMatrix) -> Result<CipherScalar> {
    let n = a.rows();
    if n == 1 {
        return Ok(a.entry(0, 0).clone());
    }
    let terms: Vec<CipherScalar> = (0..n)
        .map(|j| cofactor_term(b, a, j))
        .collect::<Result<_>>()?;
    Ok(alternating_sum(b, &terms))
}

fn alternating_sum(b: &Backend, terms: &[CipherScalar]) -> CipherScalar {
    let mut acc = terms[0].clone();
    for (j, t) in terms.iter().enumerate().skip(1) {
        acc = if j % 2 == 0 { b.add(&acc, t) } else { b.sub(&acc, t) };
    }
    acc
}

fn first_row_minor(a: &CipherMatrix, skip_col: usize) -> Result<CipherMatrix> {
    let n = a.rows();
    let mut entries = Vec::with_capacity((n - 1) * (n - 1));
    for i in 1..n {
        for j in 0..n {
            if j != skip_col {
                entries.push(a.entry(i, j).clone());
            }
        }
    }
    CipherMatrix::from_entries(n - 1, n - 1, entries)
}

/// Plaintext counterparts of the kernels, used for diagnostics overlays and
/// as independent oracles in tests.
pub mod plain {
    use nalgebra::DMatrix;

    /// `w_0..w_k` of the scalar reciprocal iteration.
    pub fn reciprocal_iterates(mu: f64, w0: f64, k: u32) -> Vec<f64> {
        let mut out = Vec::with_capacity(k as usize + 1);
        let mut w = w0;
        out.push(w);
        for _ in 0..k {
            w = (2.0 - w * mu) * w;
            out.push(w);
        }
        out
    }

    /// `f_0..f_k` of the product-form scalar iteration.
    pub fn goldschmidt_reciprocal_iterates(mu: f64, w0: f64, k: u32) -> Vec<f64> {
        let mut out = Vec::with_capacity(k as usize + 1);
        let (mut f, mut h) = (w0, w0 * mu);
        out.push(f);
        for _ in 0..k {
            let factor = 2.0 - h;
            f *= factor;
            h *= factor;
            out.push(f);
        }
        out
    }

    /// `W_0..W_k` of the naive pseudoinverse iteration.
    pub fn schulz_iterates(m: &DMatrix<f64>, w0: &DMatrix<f64>, k: u32) -> Vec<DMatrix<f64>> {
        let eye = DMatrix::<f64>::identity(w0.nrows(), w0.nrows());
        let mut out = Vec::with_capacity(k as usize + 1);
        let mut w = w0.clone();
        out.push(w.clone());
        for _ in 0..k {
            w = (2.0 * &eye - &w * m) * &w;
            out.push(w.clone());
        }
        out
    }

    /// `F_0..F_k` of the product-form matrix iteration, from `F_0` and
    /// `H_0 = F_0 M`.
    pub fn goldschmidt_matrix_iterates(
        f0: &DMatrix<f64>,
        h0: &DMatrix<f64>,
        k: u32,
    ) -> Vec<DMatrix<f64>> {
        let eye = DMatrix::<f64>::identity(h0.nrows(), h0.ncols());
        let mut out = Vec::with_capacity(k as usize + 1);
        let mut f = f0.clone();
        let mut h = h0.clone();
        out.push(f.clone());
        for _ in 0..k {
            let factor = 2.0 * &eye - &h;
            f = &factor * f;
            h = &factor * h;
            out.push(f.clone());
        }
        out
    }
}
