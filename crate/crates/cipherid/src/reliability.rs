//! Reliability layer: provable initialization, iteration-count selection,
//! encrypted accuracy certificates, and the multiplicative depth planner.
//!
//! Everything here rests on one magnitude fact the client certifies up
//! front: with `beta` the largest absolute entry of the I/O data, the
//! regressor matrix satisfies `sigma_max^2(M) < ||M||_F^2 <= l nu beta^2`.
//! That chain turns `1/beta^2` — which the client can encrypt without
//! seeing `M` — into a safe starting point for the reciprocal iteration and
//! into computable spectral bounds for the pseudoinverse iteration.

use crate::itersolve::{binary_pow, laplace_det};
use crate::leveled::{Backend, CipherMatrix, CipherScalar};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters the server commits to for one identification run, echoed back
/// to the client so the verdict can be audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPlan {
    /// Target worst-case entry error of the estimate.
    pub epsilon: f64,
    /// Contraction factor certified by the spectral certificate.
    pub p: f64,
    /// Magnitude floor certified by the magnitude certificate.
    pub q: f64,
    /// Reciprocal initialization scale, in (0, 2).
    pub tau: f64,
    /// Reciprocal iteration count.
    pub k_div: u32,
    /// Pseudoinverse iteration count.
    pub k_inv: u32,
    /// Regressor row count.
    pub l: usize,
    /// Regressor column count.
    pub nu: usize,
    /// Target column count.
    pub r: usize,
    /// Total multiplicative depth of the planned pipeline.
    pub depth_total: u32,
}

impl ReliabilityPlan {
    /// Validates the parameter set and fills in the depth total.
    ///
    /// Requires the accuracy condition to hold for `(epsilon, p, q, l, r)`
    /// and `k_inv` to meet the induced iteration bound, so every
    /// constructed plan carries the end-to-end guarantee whenever both
    /// certificates pass.
    pub fn new(
        epsilon: f64,
        p: f64,
        q: f64,
        tau: f64,
        k_div: u32,
        k_inv: u32,
        dims: (usize, usize, usize),
    ) -> Result<Self> {
        let (l, nu, r) = dims;
        if !(tau > 0.0 && tau < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in (0, 2), got {tau}"
            )));
        }
        if k_div == 0 || k_inv == 0 {
            return Err(Error::InvalidParameter(
                "iteration counts must be >= 1".to_string(),
            ));
        }
        if !check_epsilon_condition(epsilon, p, q, l, r) {
            return Err(Error::PreconditionViolated(format!(
                "accuracy condition fails for epsilon = {epsilon}, p = {p}, q = {q}, l = {l}, r = {r}"
            )));
        }
        let bound = k_inv_bound(epsilon, p, q, l, r)?;
        if k_inv < bound {
            return Err(Error::PreconditionViolated(format!(
                "k_inv = {k_inv} below the required iteration bound {bound}"
            )));
        }
        let depth_total = depth_plan(k_div, k_inv, nu)?.total;
        Ok(ReliabilityPlan {
            epsilon,
            p,
            q,
            tau,
            k_div,
            k_inv,
            l,
            nu,
            r,
            depth_total,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.l, self.nu, self.r)
    }
}

/// Multiplicative depth required by each pipeline stage.
///
/// Stage costs are measured in levels consumed: `preprocessing` covers the
/// Gram product and the reciprocal seed, `division` the product-form
/// reciprocal (one level to form `h_0 = w_0 mu`, one per step), `inversion`
/// the alpha scaling plus pseudoinverse run, `least_squares` the final
/// estimate product. `certificates` is the depth of the certificate branch
/// measured from the post-preprocessing level; it runs concurrently with
/// division/inversion/least-squares, so `total` is the maximum of the two
/// branches, not their sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthBudget {
    pub preprocessing: u32,
    pub division: u32,
    pub inversion: u32,
    pub least_squares: u32,
    pub certificates: u32,
    pub total: u32,
}

/// `ceil(log2 x)` for `x >= 1`.
fn ceil_log2(x: u32) -> u32 {
    debug_assert!(x >= 1);
    32 - (x - 1).leading_zeros()
}

/// Plans the per-stage depth budget for iteration counts `(k_div, k_inv)`
/// and regressor width `nu`.
pub fn depth_plan(k_div: u32, k_inv: u32, nu: usize) -> Result<DepthBudget> {
    if k_div == 0 || k_inv == 0 || nu < 2 {
        return Err(Error::InvalidParameter(format!(
            "depth plan needs k_div >= 1, k_inv >= 1, nu >= 2; got ({k_div}, {k_inv}, {nu})"
        )));
    }
    let nu = nu as u32;
    let certificates = (3 + ceil_log2(nu - 1)).max(1 + nu).max(k_div + 2);
    let computation = 1 + (1 + k_div) + (2 + k_inv) + 1;
    Ok(DepthBudget {
        preprocessing: 1,
        division: 1 + k_div,
        inversion: 2 + k_inv,
        least_squares: 1,
        certificates,
        total: computation.max(1 + certificates),
    })
}

/// `ct(mu)` with `mu = trace(M^T M) = ||M||_F^2`; free of depth.
pub fn mu_from_gram(b: &Backend, gram: &CipherMatrix) -> Result<CipherScalar> {
    b.trace(gram)
}

/// Reciprocal seed `w_0 = tau / (l nu) * ct(1/beta^2)`; one level.
///
/// Whenever `||M||_F^2 <= l nu beta^2` holds, the seed lands in
/// `(0, 2/mu)`, the interval on which the reciprocal iteration converges.
pub fn init_w0(
    b: &Backend,
    inv_beta_sq: &CipherScalar,
    tau: f64,
    l: usize,
    nu: usize,
) -> Result<CipherScalar> {
    if !(tau > 0.0 && tau < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, 2), got {tau}"
        )));
    }
    if l == 0 || nu == 0 {
        return Err(Error::InvalidParameter(
            "dimensions must be positive".to_string(),
        ));
    }
    b.mul_plain(inv_beta_sq, tau / (l as f64 * nu as f64))
}

/// Pseudoinverse seed scale `alpha = (1 + p) * ct(w)`; one level.
///
/// With `w` a converged reciprocal of `mu`, the seed `W_0 = alpha M^T`
/// contracts: `||I - W_0 M^T M... ` more precisely `||I - W_0 M||_2 <= p`
/// exactly when the spectral certificate's inequality holds.
pub fn alpha_from_w(b: &Backend, w: &CipherScalar, p: f64) -> Result<CipherScalar> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p must lie in (0, 1), got {p}"
        )));
    }
    b.mul_plain(w, 1.0 + p)
}

/// Accuracy condition: `epsilon < p * sqrt((1+p)/(1-p) * l r / q)`.
///
/// This is the feasibility gate: when it fails, no iteration count can
/// certify the requested accuracy for the given `(p, q)`.
pub fn check_epsilon_condition(epsilon: f64, p: f64, q: f64, l: usize, r: usize) -> bool {
    if !(p > 0.0 && p < 1.0) || q <= 0.0 || epsilon <= 0.0 {
        return false;
    }
    let rhs = p * ((1.0 + p) / (1.0 - p) * (l * r) as f64 / q).sqrt();
    epsilon < rhs
}

/// Smallest pseudoinverse iteration count guaranteeing entrywise error
/// `<= epsilon`: the ceiling of
/// `log2( log2(epsilon * sqrt((1-p)/(1+p) * q/(l r))) / log2(p) )`.
pub fn k_inv_bound(epsilon: f64, p: f64, q: f64, l: usize, r: usize) -> Result<u32> {
    if !check_epsilon_condition(epsilon, p, q, l, r) {
        return Err(Error::PreconditionViolated(format!(
            "accuracy condition fails for epsilon = {epsilon}, p = {p}, q = {q}, l = {l}, r = {r}"
        )));
    }
    let inner = epsilon * ((1.0 - p) / (1.0 + p) * q / (l * r) as f64).sqrt();
    // The condition guarantees 0 < inner < p < 1, so both logs are negative
    // and the ratio exceeds 1.
    let ratio = inner.log2() / p.log2();
    let bound = ratio.log2().ceil();
    Ok(bound.max(1.0) as u32)
}

/// Largest grid value `p in {step, 2 step, ..., 1 - step}` for which the
/// accuracy condition holds *and* the induced iteration bound fits the
/// available `k_inv` budget.
///
/// The accuracy condition alone is monotone in `p` (its right side grows
/// without bound as `p -> 1`), so coupling it to the iteration budget is
/// what makes "largest feasible p" well defined.
pub fn select_p(
    epsilon: f64,
    q: f64,
    l: usize,
    r: usize,
    k_inv: u32,
    grid_step: f64,
) -> Result<f64> {
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step must lie in (0, 1), got {grid_step}"
        )));
    }
    let steps = (1.0 / grid_step).round() as u64;
    for i in (1..steps).rev() {
        let p = i as f64 * grid_step;
        if p <= 0.0 || p >= 1.0 {
            continue;
        }
        if !check_epsilon_condition(epsilon, p, q, l, r) {
            continue;
        }
        if k_inv_bound(epsilon, p, q, l, r)? <= k_inv {
            return Ok(p);
        }
    }
    Err(Error::Infeasible(format!(
        "no p on the grid (step {grid_step}) satisfies the accuracy condition within k_inv = {k_inv}"
    )))
}

/// Which inequality a certificate pair encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// `lhs <= rhs` certifies the pseudoinverse seed contraction
    /// `||I - alpha M^T M||_2 <= p`.
    Spectral,
    /// `lhs >= q` certifies the magnitude floor `mu >= q beta^2`.
    Magnitude,
}

/// An encrypted inequality the client decrypts and checks; passing proves
/// the server's convergence assumptions held (sufficient, not necessary).
#[derive(Debug, Clone)]
pub struct CertificatePair {
    pub lhs: CipherScalar,
    pub rhs: CipherScalar,
    pub kind: CertificateKind,
}

/// Magnitude certificate: `lhs = ct(mu) * ct(1/beta^2)`, one level; the
/// right side is the plaintext floor `q`, carried encoded so the pair is
/// self-contained. Client accepts iff `mu/beta^2 >= q`.
pub fn certificate_magnitude(
    b: &Backend,
    mu: &CipherScalar,
    inv_beta_sq: &CipherScalar,
    q: f64,
) -> Result<CertificatePair> {
    Ok(CertificatePair {
        lhs: b.mul(mu, inv_beta_sq)?,
        rhs: b.encrypt(q),
        kind: CertificateKind::Magnitude,
    })
}

/// Spectral certificate for the seed contraction, evaluated entirely in the
/// normalized domain the client can reach with `ct(1/beta^2)`:
///
/// `lhs = (mu/beta^2 * c)^(nu-1) * 1/beta^2` with the plaintext constant
/// `c = 1/(nu-1) * ((1-p)/(1+p))^(1/(nu-1))`, and
/// `rhs = ct(w) * det(M^T M / beta^2)`.
///
/// `lhs <= rhs` is equivalent to the unnormalized contraction inequality —
/// both sides are the unnormalized ones scaled by `(1/beta^2)^nu` — and
/// implies `||I - (1+p) w M^T M||_2 <= p` when `w <= 1/mu`, which the
/// reciprocal iteration guarantees after its first step.
///
/// Depth from the operands' level: `3 + ceil(log2(nu-1))` on the left
/// branch, `max(1 + nu, k_div + 2)` on the right (the `w` operand arrives
/// `k_div + 1` levels below fresh).
pub fn certificate_spectral(
    b: &Backend,
    gram: &CipherMatrix,
    mu: &CipherScalar,
    inv_beta_sq: &CipherScalar,
    w: &CipherScalar,
    p: f64,
    nu: usize,
) -> Result<CertificatePair> {
    if nu < 2 {
        return Err(Error::InvalidParameter(format!(
            "spectral certificate needs nu >= 2, got {nu}"
        )));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p must lie in (0, 1), got {p}"
        )));
    }
    if gram.rows() != nu || gram.cols() != nu {
        return Err(Error::DimensionMismatch {
            op: "certificate_spectral",
            details: format!("gram is {}x{}, nu = {nu}", gram.rows(), gram.cols()),
        });
    }
    let e = (nu - 1) as u32;
    let c = 1.0 / e as f64 * ((1.0 - p) / (1.0 + p)).powf(1.0 / e as f64);
    let normalized_mu = b.mul(mu, inv_beta_sq)?;
    let scaled = b.mul_plain(&normalized_mu, c)?;
    let powered = binary_pow(b, &scaled, e)?;
    let lhs = b.mul(&powered, inv_beta_sq)?;

    let normalized_gram = b.mat_scale_cipher(gram, inv_beta_sq)?;
    let det = laplace_det(b, &normalized_gram)?;
    let rhs = b.mul(w, &det)?;

    Ok(CertificatePair {
        lhs,
        rhs,
        kind: CertificateKind::Spectral,
    })
}

/// Client-side comparison slack absorbing fixed-point quantization:
/// `1e-9 * max(1, |rhs|)`.
pub fn cert_slack(rhs: f64) -> f64 {
    1e-9 * rhs.abs().max(1.0)
}

/// Eigenvalue floor from trace and determinant:
/// `lambda_min(G) >= ((nu-1)/trace(G))^(nu-1) * det(G)` for positive
/// definite `nu x nu` G with `nu >= 2`. Plaintext oracle helper.
pub fn eig_lower_bound(trace: f64, det: f64, nu: usize) -> f64 {
    let e = (nu - 1) as f64;
    (e / trace).powf(e) * det
}
