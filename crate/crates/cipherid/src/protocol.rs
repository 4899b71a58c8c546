//! Client/server exchange for identification-as-a-service.
//!
//! The client encrypts its I/O records plus the single plaintext-derived
//! scalar `1/beta^2`, ships them with the task description and a target
//! accuracy, and later decrypts the estimate together with two certificate
//! pairs. The server works entirely on ciphertexts: it assembles the
//! regressors, runs the reciprocal and pseudoinverse iterations, forms the
//! estimate, and evaluates the certificates — without ever holding a
//! decryption capability (nothing in this module's server path takes a
//! [`DecryptKey`](crate::leveled::DecryptKey)).
//!
//! Transport is deliberately file-based: requests and responses are JSON
//! documents exchanged through a directory, matching a service that is not
//! real-time critical.

use crate::leveled::{
    Backend, CipherBlob, CipherMatrix, CipherScalar, DecryptKey, SchemeParams,
};
use crate::regressors::{compute_beta, DataRef, IoData, RegressorLayout, SignedRef, TaskSpec};
use crate::reliability::{
    alpha_from_w, cert_slack, certificate_magnitude, certificate_spectral, init_w0, k_inv_bound,
    mu_from_gram, select_p, CertificateKind, CertificatePair, ReliabilityPlan,
};
use crate::{itersolve, Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Everything the client sends: task metadata in plaintext, records and the
/// magnitude scalar as ciphertexts.
#[derive(Debug, Clone)]
pub struct IdentifyRequest {
    pub task: TaskSpec,
    /// Record count `L` (plaintext; the server needs it to shape regressors).
    pub samples: usize,
    /// Target worst-case entry error (plaintext by design).
    pub epsilon: f64,
    pub params: SchemeParams,
    /// `L x` input-width ciphertext of the inputs.
    pub ct_u: CipherMatrix,
    /// `L x` output-width ciphertext of the measured outputs.
    pub ct_y: CipherMatrix,
    /// `ct(1/beta^2)` with `beta` the largest absolute record entry.
    pub ct_inv_beta_sq: CipherScalar,
}

/// Everything the server returns.
#[derive(Debug, Clone)]
pub struct IdentifyResponse {
    /// The encrypted estimate, `nu x r`.
    pub ct_z_hat: CipherMatrix,
    pub cert_spectral: CertificatePair,
    pub cert_magnitude: CertificatePair,
    /// The parameters the server committed to, echoed for auditability.
    pub plan: ReliabilityPlan,
}

/// The client's decrypted view of a response.
#[derive(Debug, Clone)]
pub struct ValidationVerdict {
    pub z_hat: DMatrix<f64>,
    pub cert_spectral_ok: bool,
    pub cert_magnitude_ok: bool,
    /// Both certificates passed: the worst-case entry error of `z_hat`
    /// against the exact least-squares solution is certified to be at most
    /// the requested accuracy.
    pub guaranteed: bool,
}

/// Server-side policy knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    /// Grid resolution for the contraction-factor search.
    pub p_grid_step: f64,
    /// Magnitude floor the magnitude certificate attests.
    pub q: f64,
    /// Reciprocal seed scale, in (0, 2).
    pub tau: f64,
    /// Reciprocal iteration count.
    pub k_div: u32,
    /// Pin the pseudoinverse iteration count. When absent the server derives
    /// the largest count the depth budget allows and then runs the smallest
    /// count the accuracy bound requires.
    pub k_inv: Option<u32>,
    /// Levels deliberately left unused below `params.max_level` when
    /// deriving the iteration budget.
    pub safety_margin: u32,
    /// Seed of the emulator's deterministic noise stream (fixed-point
    /// backend only).
    pub noise_seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            p_grid_step: 1e-3,
            q: 1.0,
            tau: 1.999,
            k_div: 5,
            k_inv: None,
            safety_margin: 1,
            noise_seed: 0,
        }
    }
}

/// Validates the records against the task, computes the magnitude scalar in
/// plaintext, and encrypts everything at the top level.
pub fn client_prepare(
    data: &IoData,
    task: &TaskSpec,
    epsilon: f64,
    backend: &Backend,
) -> Result<IdentifyRequest> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let (in_dim, out_dim) = task.io_dims();
    if data.input_dim() != in_dim || data.output_dim() != out_dim {
        return Err(Error::DimensionMismatch {
            op: "client_prepare",
            details: format!(
                "task expects {}x{} records, data is {}x{}",
                in_dim,
                out_dim,
                data.input_dim(),
                data.output_dim()
            ),
        });
    }
    task.validate(data.samples())?;
    let magnitude = compute_beta(data)?;
    Ok(IdentifyRequest {
        task: *task,
        samples: data.samples(),
        epsilon,
        params: backend.params().clone(),
        ct_u: backend.encrypt_matrix(data.u()),
        ct_y: backend.encrypt_matrix(data.y_hat()),
        ct_inv_beta_sq: backend.encrypt(magnitude.inv_beta_sq),
    })
}

/// Realizes a symbolic regressor layout over the encrypted records. Sign
/// flips are additive, so `M` and `V` come out at the records' level.
pub fn assemble_regressors(
    b: &Backend,
    layout: &RegressorLayout,
    ct_u: &CipherMatrix,
    ct_y: &CipherMatrix,
) -> Result<(CipherMatrix, CipherMatrix)> {
    let fetch = |r: &SignedRef| -> CipherScalar {
        let entry = match r.source {
            DataRef::U { step, comp } => ct_u.entry(step, comp),
            DataRef::Y { step, comp } => ct_y.entry(step, comp),
        };
        if r.negated {
            b.neg(entry)
        } else {
            entry.clone()
        }
    };
    let m = CipherMatrix::from_entries(
        layout.l,
        layout.nu,
        layout.m_refs.iter().map(fetch).collect(),
    )?;
    let v = CipherMatrix::from_entries(
        layout.l,
        layout.r,
        layout.v_refs.iter().map(fetch).collect(),
    )?;
    Ok((m, v))
}

fn request_backend(req: &IdentifyRequest, config: &ServerConfig) -> Result<Backend> {
    let kind = req.ct_u.backend_kind();
    if req.ct_y.backend_kind() != kind || req.ct_inv_beta_sq.backend_kind() != kind {
        return Err(Error::InvalidParameter(
            "request mixes ciphertext backends".to_string(),
        ));
    }
    Ok(Backend::new(kind, req.params.clone())?.with_noise_seed(config.noise_seed))
}

/// Runs the full server pipeline on one request.
///
/// Order of work: regressor assembly, preprocessing (Gram matrix, trace,
/// reciprocal seed), parameter selection from plaintext metadata only,
/// depth check, the reciprocal stage, then — concurrently — the
/// inversion/least-squares branch and the certificate branch, which share
/// only read-only inputs.
pub fn server_identify(
    req: &IdentifyRequest,
    config: &ServerConfig,
) -> Result<IdentifyResponse> {
    if !(req.epsilon.is_finite() && req.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            req.epsilon
        )));
    }
    let backend = request_backend(req, config)?;
    let layout = req.task.layout(req.samples)?;
    let (l, nu, r) = (layout.l, layout.nu, layout.r);
    let (in_dim, out_dim) = req.task.io_dims();
    if req.ct_u.rows() != req.samples
        || req.ct_u.cols() != in_dim
        || req.ct_y.rows() != req.samples
        || req.ct_y.cols() != out_dim
    {
        return Err(Error::DimensionMismatch {
            op: "server_identify",
            details: format!(
                "records claim L = {} with {}x{} layout, ciphertexts are {}x{} and {}x{}",
                req.samples,
                in_dim,
                out_dim,
                req.ct_u.rows(),
                req.ct_u.cols(),
                req.ct_y.rows(),
                req.ct_y.cols()
            ),
        });
    }

    // Even the smallest admissible iteration count must fit the scheme's
    // depth, checked before parameter selection so that budget pressure
    // surfaces as a depth error rather than a spurious infeasibility.
    let depth_floor = crate::reliability::depth_plan(config.k_div, 1, nu)?.total;
    if depth_floor > backend.max_level() {
        return Err(Error::DepthExhausted(format!(
            "pipeline needs at least {} levels for k_div = {}, scheme provides {}",
            depth_floor,
            config.k_div,
            backend.max_level()
        )));
    }

    // Parameter selection uses plaintext metadata only (L, epsilon, task
    // dims); every data-dependent quantity below stays encrypted.
    let budget = match config.k_inv {
        Some(k) => k,
        None => backend
            .max_level()
            .saturating_sub(config.safety_margin + 5 + config.k_div),
    };
    let p = select_p(req.epsilon, config.q, l, r, budget, config.p_grid_step)?;
    let k_inv = match config.k_inv {
        Some(k) => k,
        None => k_inv_bound(req.epsilon, p, config.q, l, r)?,
    };
    let plan = ReliabilityPlan::new(
        req.epsilon,
        p,
        config.q,
        config.tau,
        config.k_div,
        k_inv,
        (l, nu, r),
    )?;
    if plan.depth_total > backend.max_level() {
        return Err(Error::DepthExhausted(format!(
            "pipeline needs {} levels, scheme provides {}",
            plan.depth_total,
            backend.max_level()
        )));
    }

    let (m, v) = assemble_regressors(&backend, &layout, &req.ct_u, &req.ct_y)?;
    let mt = backend.transpose(&m);
    let gram = backend.mat_mul(&mt, &m)?;
    let mu = mu_from_gram(&backend, &gram)?;
    let w0 = init_w0(&backend, &req.ct_inv_beta_sq, config.tau, l, nu)?;
    let w = itersolve::goldschmidt_reciprocal(&backend, &mu, &w0, config.k_div)?;

    let estimate = || -> Result<CipherMatrix> {
        let alpha = alpha_from_w(&backend, &w, p)?;
        let f0 = backend.mat_scale_cipher(&mt, &alpha)?;
        let h0 = backend.mat_scale_cipher(&gram, &alpha)?;
        let f = itersolve::goldschmidt_matrix(&backend, &f0, &h0, k_inv)?;
        backend.mat_mul(&f, &v)
    };
    let certificates = || -> Result<(CertificatePair, CertificatePair)> {
        let spectral =
            certificate_spectral(&backend, &gram, &mu, &req.ct_inv_beta_sq, &w, p, nu)?;
        let magnitude =
            certificate_magnitude(&backend, &mu, &req.ct_inv_beta_sq, config.q)?;
        Ok((spectral, magnitude))
    };

    #[cfg(feature = "parallel")]
    let (ct_z_hat, certs) = {
        let (z, c) = rayon::join(estimate, certificates);
        (z?, c?)
    };
    #[cfg(not(feature = "parallel"))]
    let (ct_z_hat, certs) = (estimate()?, certificates()?);
    let (cert_spectral, cert_magnitude) = certs;

    Ok(IdentifyResponse {
        ct_z_hat,
        cert_spectral,
        cert_magnitude,
        plan,
    })
}

/// Decrypts a response and checks both certificate inequalities with the
/// quantization slack. `q` is the magnitude floor to verify against —
/// normally `resp.plan.q`, or a stricter floor of the client's choosing.
pub fn client_validate(
    resp: &IdentifyResponse,
    key: &DecryptKey,
    q: f64,
) -> ValidationVerdict {
    let z_hat = key.decrypt_matrix(&resp.ct_z_hat);
    let lhs = key.decrypt(&resp.cert_spectral.lhs);
    let rhs = key.decrypt(&resp.cert_spectral.rhs);
    let cert_spectral_ok = lhs <= rhs + cert_slack(rhs);
    let ratio = key.decrypt(&resp.cert_magnitude.lhs);
    let cert_magnitude_ok = ratio >= q - cert_slack(q);
    ValidationVerdict {
        z_hat,
        cert_spectral_ok,
        cert_magnitude_ok,
        guaranteed: cert_spectral_ok && cert_magnitude_ok,
    }
}

// ---------------------------------------------------------------------------
// File transport
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RequestWire {
    task: TaskSpec,
    #[serde(rename = "L")]
    samples: usize,
    epsilon: f64,
    params: SchemeParams,
    ct_u: CipherBlob,
    ct_y: CipherBlob,
    ct_inv_beta_sq: CipherBlob,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpectralWire {
    lhs: CipherBlob,
    rhs: CipherBlob,
}

/// Only the ratio travels; the floor `q` rides in the plan.
#[derive(Debug, Serialize, Deserialize)]
struct MagnitudeWire {
    lhs: CipherBlob,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResponseWire {
    ct_z_hat: CipherBlob,
    cert_spectral: SpectralWire,
    cert_magnitude: MagnitudeWire,
    plan: ReliabilityPlan,
}

fn check_scale(blob: &CipherBlob, params: &SchemeParams) -> Result<()> {
    if blob.scale_bits != params.scale_bits {
        return Err(Error::InvalidParameter(format!(
            "ciphertext scale 2^-{} disagrees with scheme scale 2^-{}",
            blob.scale_bits, params.scale_bits
        )));
    }
    Ok(())
}

/// Serializes a request to pretty JSON at `path`. Output is byte-stable for
/// identical inputs.
pub fn write_request(path: &Path, req: &IdentifyRequest) -> Result<()> {
    let scale = req.params.scale_bits;
    let wire = RequestWire {
        task: req.task,
        samples: req.samples,
        epsilon: req.epsilon,
        params: req.params.clone(),
        ct_u: CipherBlob::from_matrix(&req.ct_u, scale),
        ct_y: CipherBlob::from_matrix(&req.ct_y, scale),
        ct_inv_beta_sq: CipherBlob::from_scalar(&req.ct_inv_beta_sq, scale),
    };
    let mut text = serde_json::to_string_pretty(&wire)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads and validates a request document.
pub fn read_request(path: &Path) -> Result<IdentifyRequest> {
    let wire: RequestWire = serde_json::from_str(&fs::read_to_string(path)?)?;
    wire.params.validate()?;
    for blob in [&wire.ct_u, &wire.ct_y, &wire.ct_inv_beta_sq] {
        check_scale(blob, &wire.params)?;
    }
    Ok(IdentifyRequest {
        task: wire.task,
        samples: wire.samples,
        epsilon: wire.epsilon,
        params: wire.params,
        ct_u: wire.ct_u.to_matrix()?,
        ct_y: wire.ct_y.to_matrix()?,
        ct_inv_beta_sq: wire.ct_inv_beta_sq.to_scalar()?,
    })
}

/// Serializes a response to pretty JSON at `path`.
pub fn write_response(path: &Path, resp: &IdentifyResponse, scale_bits: u32) -> Result<()> {
    let wire = ResponseWire {
        ct_z_hat: CipherBlob::from_matrix(&resp.ct_z_hat, scale_bits),
        cert_spectral: SpectralWire {
            lhs: CipherBlob::from_scalar(&resp.cert_spectral.lhs, scale_bits),
            rhs: CipherBlob::from_scalar(&resp.cert_spectral.rhs, scale_bits),
        },
        cert_magnitude: MagnitudeWire {
            lhs: CipherBlob::from_scalar(&resp.cert_magnitude.lhs, scale_bits),
        },
        plan: resp.plan.clone(),
    };
    let mut text = serde_json::to_string_pretty(&wire)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a response document. The magnitude certificate's right side is
/// rebuilt from the plan's `q` (it never travels encrypted).
pub fn read_response(path: &Path) -> Result<IdentifyResponse> {
    let wire: ResponseWire = serde_json::from_str(&fs::read_to_string(path)?)?;
    let lhs = wire.cert_magnitude.lhs.to_scalar()?;
    let q_encoded = CipherScalar::from_parts(wire.plan.q, lhs.level(), lhs.backend_kind());
    Ok(IdentifyResponse {
        ct_z_hat: wire.ct_z_hat.to_matrix()?,
        cert_spectral: CertificatePair {
            lhs: wire.cert_spectral.lhs.to_scalar()?,
            rhs: wire.cert_spectral.rhs.to_scalar()?,
            kind: CertificateKind::Spectral,
        },
        cert_magnitude: CertificatePair {
            lhs,
            rhs: q_encoded,
            kind: CertificateKind::Magnitude,
        },
        plan: wire.plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leveled::BackendKind;
    use crate::regressors::{build_problem, oracle_solve};
    use nalgebra::dmatrix;

    /// Deterministic second-order SISO records: persistently exciting input
    /// through a stable difference equation.
    fn test_records(samples: usize) -> IoData {
        let mut state = 0x5eed_cafe_u64;
        let mut uniform = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 30) as f64) - 1.0
        };
        let u: Vec<f64> = (0..samples).map(|_| uniform()).collect();
        let mut y = vec![0.0f64; samples];
        for k in 0..samples - 2 {
            y[k + 2] = 0.3 * y[k + 1] - 0.2 * y[k] + u[k + 1] + 0.5 * u[k];
        }
        IoData::new(
            DMatrix::from_column_slice(samples, 1, &u),
            DMatrix::from_column_slice(samples, 1, &y),
        )
        .unwrap()
    }

    fn tf_task() -> TaskSpec {
        TaskSpec::TransferFunction { n: 2, m: 1 }
    }

    #[test]
    fn client_prepare_encrypts_at_top_level() {
        let b = Backend::exact(23);
        let key = DecryptKey::new(&b);
        let data = test_records(20);
        let req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        assert_eq!(req.ct_u.level(), 23);
        assert_eq!(req.ct_y.level(), 23);
        assert_eq!(req.ct_inv_beta_sq.level(), 23);
        let beta = compute_beta(&data).unwrap().beta;
        assert!((key.decrypt(&req.ct_inv_beta_sq) - 1.0 / (beta * beta)).abs() < 1e-15);
        assert_eq!(req.samples, 20);

        let zero = IoData::new(DMatrix::zeros(10, 1), DMatrix::zeros(10, 1)).unwrap();
        assert!(matches!(
            client_prepare(&zero, &tf_task(), 1e-3, &b),
            Err(Error::DegenerateData(_))
        ));
        assert!(client_prepare(&data, &tf_task(), 0.0, &b).is_err());
    }

    #[test]
    fn encrypted_assembly_matches_plaintext_layout() {
        let b = Backend::exact(8);
        let key = DecryptKey::new(&b);
        let data = test_records(15);
        let task = tf_task();
        let layout = task.layout(15).unwrap();
        let (m_plain, v_plain) = layout.realize(&data);
        let (ct_m, ct_v) = assemble_regressors(
            &b,
            &layout,
            &b.encrypt_matrix(data.u()),
            &b.encrypt_matrix(data.y_hat()),
        )
        .unwrap();
        assert_eq!(key.decrypt_matrix(&ct_m), m_plain);
        assert_eq!(key.decrypt_matrix(&ct_v), v_plain);
        assert_eq!(ct_m.level(), 8); // sign flips are free
    }

    #[test]
    fn end_to_end_exact_run_is_certified_and_accurate() {
        let b = Backend::exact(23);
        let key = DecryptKey::new(&b);
        let data = test_records(20);
        let task = tf_task();
        let req = client_prepare(&data, &task, 1e-3, &b).unwrap();
        let resp = server_identify(&req, &ServerConfig::default()).unwrap();
        assert_eq!(resp.plan.k_div, 5);
        assert_eq!(resp.plan.k_inv, 12);
        assert!((resp.plan.p - 0.997).abs() < 1e-12);
        assert_eq!(resp.ct_z_hat.rows(), 4);
        assert_eq!(resp.ct_z_hat.cols(), 1);

        let verdict = client_validate(&resp, &key, resp.plan.q);
        let oracle = oracle_solve(&build_problem(&data, &task).unwrap()).unwrap();
        let err = (&verdict.z_hat - &oracle.z).amax();
        assert!(err <= 1e-3, "entry error {err} exceeds the target");
        assert!(verdict.cert_magnitude_ok);
        assert!(verdict.cert_spectral_ok, "spectral certificate failed");
        assert!(verdict.guaranteed);
        // Noiseless records: the estimate recovers the plant coefficients.
        // Rows are (-y(i), -y(i+1), u(i), u(i+1)) against target y(i+2), so
        // y(k+2) = 0.3 y(k+1) - 0.2 y(k) + u(k+1) + 0.5 u(k) solves as
        // (0.2, -0.3, 0.5, 1.0).
        let truth = dmatrix![0.2; -0.3; 0.5; 1.0];
        assert!((&verdict.z_hat - &truth).amax() < 1e-6);
    }

    #[test]
    fn depth_budget_is_checked_before_any_computation() {
        let b = Backend::new(BackendKind::Exact, SchemeParams::with_depth(10)).unwrap();
        let data = test_records(20);
        let req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        let err = server_identify(&req, &ServerConfig::default()).unwrap_err();
        match err {
            Error::DepthExhausted(msg) => {
                assert!(msg.contains("10"), "message: {msg}")
            }
            other => panic!("expected DepthExhausted, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_iteration_budget_surfaces() {
        // A single pseudoinverse iteration cannot certify 1e-9 accuracy for
        // any contraction factor on the grid.
        let b = Backend::exact(23);
        let data = test_records(20);
        let req = client_prepare(&data, &tf_task(), 1e-9, &b).unwrap();
        let config = ServerConfig {
            k_inv: Some(1),
            ..ServerConfig::default()
        };
        assert!(matches!(
            server_identify(&req, &config),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn tampered_dimensions_are_rejected() {
        let b = Backend::exact(23);
        let data = test_records(20);
        let mut req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        req.samples = 19;
        assert!(matches!(
            server_identify(&req, &ServerConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn estimate_consumes_exactly_the_planned_depth() {
        let b = Backend::exact(22);
        let data = test_records(21); // l = 19, nu = 4: same (k_div, k_inv)
        let req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        let config = ServerConfig {
            k_inv: Some(12),
            safety_margin: 0,
            ..ServerConfig::default()
        };
        let resp = server_identify(&req, &config).unwrap();
        assert_eq!(resp.plan.depth_total, 22);
        assert_eq!(resp.ct_z_hat.level(), 0);
    }

    #[test]
    fn responses_are_deterministic_across_runs_and_branch_schedules() {
        let params = SchemeParams::with_depth(23);
        let b = Backend::new(BackendKind::FixedPoint, params).unwrap().with_noise_seed(7);
        let data = test_records(20);
        let req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        let config = ServerConfig {
            noise_seed: 7,
            ..ServerConfig::default()
        };
        let r1 = server_identify(&req, &config).unwrap();
        let r2 = server_identify(&req, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("r1.json");
        let p2 = dir.path().join("r2.json");
        write_response(&p1, &r1, 30).unwrap();
        write_response(&p2, &r2, 30).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn request_and_response_round_trip_through_files() {
        let b = Backend::exact(23);
        let data = test_records(20);
        let req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        let resp = server_identify(&req, &ServerConfig::default()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let req_path = dir.path().join("request.json");
        let resp_path = dir.path().join("response.json");
        write_request(&req_path, &req).unwrap();
        write_response(&resp_path, &resp, req.params.scale_bits).unwrap();

        let req2 = read_request(&req_path).unwrap();
        assert_eq!(req2.task, req.task);
        assert_eq!(req2.samples, req.samples);
        assert_eq!(req2.epsilon, req.epsilon);
        assert_eq!(req2.params, req.params);
        let key = DecryptKey::new(&b);
        assert_eq!(
            key.decrypt_matrix(&req2.ct_u),
            key.decrypt_matrix(&req.ct_u)
        );
        assert_eq!(req2.ct_u.level(), req.ct_u.level());

        let resp2 = read_response(&resp_path).unwrap();
        assert_eq!(resp2.plan, resp.plan);
        assert_eq!(
            key.decrypt_matrix(&resp2.ct_z_hat),
            key.decrypt_matrix(&resp.ct_z_hat)
        );
        assert_eq!(resp2.ct_z_hat.level(), resp.ct_z_hat.level());
        assert_eq!(
            key.decrypt(&resp2.cert_spectral.lhs),
            key.decrypt(&resp.cert_spectral.lhs)
        );
        assert_eq!(
            key.decrypt(&resp2.cert_spectral.rhs),
            key.decrypt(&resp.cert_spectral.rhs)
        );
        assert_eq!(key.decrypt(&resp2.cert_magnitude.rhs), resp.plan.q);
        // A second serialization of the reread document is byte-identical.
        let resp_path2 = dir.path().join("response2.json");
        write_response(&resp_path2, &resp2, req.params.scale_bits).unwrap();
        assert_eq!(
            fs::read(&resp_path).unwrap(),
            fs::read(&resp_path2).unwrap()
        );
    }

    #[test]
    fn wire_schema_matches_the_documented_shapes() {
        let b = Backend::exact(23);
        let data = test_records(20);
        let req = client_prepare(&data, &tf_task(), 1e-3, &b).unwrap();
        let resp = server_identify(&req, &ServerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let req_path = dir.path().join("request.json");
        let resp_path = dir.path().join("response.json");
        write_request(&req_path, &req).unwrap();
        write_response(&resp_path, &resp, 30).unwrap();

        let req_json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&req_path).unwrap()).unwrap();
        for field in ["task", "L", "epsilon", "params", "ct_u", "ct_y", "ct_inv_beta_sq"] {
            assert!(req_json.get(field).is_some(), "request missing {field}");
        }
        assert_eq!(req_json["task"]["kind"], "transfer_function");
        assert_eq!(req_json["ct_u"]["emulated"], true);

        let resp_json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&resp_path).unwrap()).unwrap();
        for field in ["ct_z_hat", "cert_spectral", "cert_magnitude", "plan"] {
            assert!(resp_json.get(field).is_some(), "response missing {field}");
        }
        assert!(resp_json["cert_spectral"].get("lhs").is_some());
        assert!(resp_json["cert_spectral"].get("rhs").is_some());
        assert!(resp_json["cert_magnitude"].get("lhs").is_some());
        assert!(
            resp_json["cert_magnitude"].get("rhs").is_none(),
            "magnitude floor must ride in the plan, not the wire"
        );
    }
}
