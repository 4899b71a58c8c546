//! One full identification run on disk: synthesizes or loads records, plays
//! both protocol roles through `request.json` / `response.json`, decrypts and
//! validates, and leaves a machine-readable `verdict.json` plus optional
//! per-iteration diagnostics.
//!
//! Everything except `timing.txt` is deterministic in the run configuration,
//! so repeated runs leave byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cipherid::itersolve::{self, GoldschmidtMatrix};
use cipherid::leveled::{Backend, BackendKind, CipherMatrix, DecryptKey, SchemeParams};
use cipherid::protocol::{
    assemble_regressors, client_prepare, client_validate, read_request, read_response,
    server_identify, write_request, write_response, IdentifyRequest, ServerConfig,
};
use cipherid::regressors::{
    build_problem, compute_beta, oracle_solve, read_io_csv, write_io_csv, IoData, TaskSpec,
};
use cipherid::reliability::{alpha_from_w, init_w0, mu_from_gram, select_p, ReliabilityPlan};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_io, substream, z_true, STREAM_EMULATOR};

/// Environment variable that unlocks decrypting diagnostics on the noisy
/// backend. The exact backend always allows them: it models a debugging
/// oracle, not a deployment.
pub const DEBUG_KEY_ENV: &str = "CIPHERID_DEBUG_KEY";

/// Everything one run needs, resolved from CLI flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub samples: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub backend: BackendKind,
    pub scale_bits: u32,
    pub max_level: u32,
    /// Division iteration count; `None` uses the server default.
    pub k_div: Option<u32>,
    /// Inversion iteration count; `None` lets the server derive it, `Some(0)`
    /// switches to initialization diagnostics (no server exchange).
    pub k_inv: Option<u32>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn scheme_params(&self) -> SchemeParams {
        SchemeParams::with_scale(self.scale_bits, self.max_level)
    }

    /// The emulator backend, noise-seeded from a substream of the run seed so
    /// data generation and arithmetic noise stay independent.
    pub fn backend(&self) -> Result<Backend> {
        Ok(Backend::new(self.backend, self.scheme_params())?
            .with_noise_seed(substream(self.seed, STREAM_EMULATOR)))
    }

    fn server_config(&self) -> ServerConfig {
        let defaults = ServerConfig::default();
        ServerConfig {
            k_div: self.k_div.unwrap_or(defaults.k_div),
            k_inv: self.k_inv,
            noise_seed: substream(self.seed, STREAM_EMULATOR),
            ..defaults
        }
    }
}

/// What kind of run produced a verdict file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Full exchange: prepare, identify, validate.
    Identify,
    /// Initialization probe only (`k_inv = 0`); nothing is guaranteed.
    Diagnostic,
    /// Re-validation of artifacts already on disk.
    Validate,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Identify => "identify",
            RunMode::Diagnostic => "diagnostic",
            RunMode::Validate => "validate",
        }
    }
}

/// The run summary written to `verdict.json` and consumed by reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictFile {
    pub mode: RunMode,
    pub task: TaskSpec,
    pub samples: usize,
    pub backend: BackendKind,
    /// Data seed; absent when the run only revalidated disk artifacts.
    pub seed: Option<u64>,
    pub epsilon: f64,
    pub guaranteed: bool,
    pub cert_spectral_ok: Option<bool>,
    pub cert_magnitude_ok: Option<bool>,
    /// Max-norm distance between the decrypted estimate and the exact
    /// plaintext least-squares solution on the same records.
    pub final_error: Option<f64>,
    /// Max-norm distance to the generating plant's parameters, when known.
    pub error_vs_true: Option<f64>,
    /// Depth the committed plan budgets end to end.
    pub depth_used: Option<u32>,
    /// Levels the estimate branch actually consumed.
    pub computation_levels_used: Option<u32>,
    pub plan: Option<ReliabilityPlan>,
    pub z_hat: Vec<Vec<f64>>,
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub k: u32,
    pub plain_error: f64,
    pub encrypted_error: f64,
}

/// Whether intermediate ciphertexts may be decrypted for diagnostics.
pub fn diagnostics_enabled(kind: BackendKind) -> bool {
    kind == BackendKind::Exact || std::env::var_os(DEBUG_KEY_ENV).is_some()
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Reuses `data.csv` when the directory already holds one (so `gen-data`
/// followed by `identify` operates on the same records); otherwise
/// synthesizes and writes it.
fn load_or_generate(config: &RunConfig) -> Result<IoData> {
    let path = config.out_dir.join("data.csv");
    if path.exists() {
        let data = read_io_csv(&path)
            .with_context(|| format!("reading records from {}", path.display()))?;
        return Ok(data);
    }
    let data = gen_io(&config.task, config.samples, config.noise_std, config.seed)?;
    write_io_csv(&path, &data)?;
    Ok(data)
}

/// Replays the pipeline with per-iteration probes: at every `k` it forms
/// `F_k V` (one extra multiplication off the main line — noise is keyed by
/// operands alone, so probes never perturb later iterates), decrypts it, and
/// records the max-norm error against the exact solution, next to the same
/// iteration replayed in plaintext. Returns the rows and the last probe.
#[allow(clippy::too_many_arguments)]
fn trace_errors(
    backend: &Backend,
    req: &IdentifyRequest,
    data: &IoData,
    p: f64,
    tau: f64,
    k_div: u32,
    k_inv: u32,
    z_star: &DMatrix<f64>,
) -> Result<(Vec<TraceRow>, DMatrix<f64>)> {
    let layout = req.task.layout(req.samples)?;
    let (l, nu) = (layout.l, layout.nu);

    // Plaintext replay of the identical arithmetic.
    let (m_p, v_p) = layout.realize(data);
    let magnitude = compute_beta(data)?;
    let w0_p = tau / (l as f64 * nu as f64) * magnitude.inv_beta_sq;
    let gram_p = m_p.transpose() * &m_p;
    let w_p = *itersolve::plain::goldschmidt_reciprocal_iterates(gram_p.trace(), w0_p, k_div)
        .last()
        .expect("iterate list is never empty");
    let alpha_p = (1.0 + p) * w_p;
    let f0_p = alpha_p * m_p.transpose();
    let h0_p = alpha_p * &gram_p;
    let plain_iterates = itersolve::plain::goldschmidt_matrix_iterates(&f0_p, &h0_p, k_inv);

    // Encrypted replay; identical operands and levels reproduce the server's
    // ciphertexts bit for bit.
    let (m_c, v_c) = assemble_regressors(backend, &layout, &req.ct_u, &req.ct_y)?;
    let mt = backend.transpose(&m_c);
    let gram = backend.mat_mul(&mt, &m_c)?;
    let mu = mu_from_gram(backend, &gram)?;
    let w0 = init_w0(backend, &req.ct_inv_beta_sq, tau, l, nu)?;
    let w = itersolve::goldschmidt_reciprocal(backend, &mu, &w0, k_div)?;
    let alpha = alpha_from_w(backend, &w, p)?;
    let f0 = backend.mat_scale_cipher(&mt, &alpha)?;
    let h0 = backend.mat_scale_cipher(&gram, &alpha)?;
    let mut iter = GoldschmidtMatrix::new(&f0, &h0)?;

    let key = DecryptKey::new(backend);
    let mut rows = Vec::with_capacity(k_inv as usize + 1);
    let mut last_probe = DMatrix::<f64>::zeros(0, 0);
    for k in 0..=k_inv {
        let probe: CipherMatrix = backend.mat_mul(iter.iterate(), &v_c)?;
        let z_k = key.decrypt_matrix(&probe);
        let encrypted_error = (&z_k - z_star).amax();
        let plain_error = (&plain_iterates[k as usize] * &v_p - z_star).amax();
        rows.push(TraceRow {
            k,
            plain_error,
            encrypted_error,
        });
        last_probe = z_k;
        if k < k_inv {
            iter.step(backend)?;
        }
    }
    Ok((rows, last_probe))
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("k,plain_error,encrypted_error\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.k, row.plain_error, row.encrypted_error
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes `verdict.json` (pretty, newline-terminated, deterministic).
pub fn write_verdict(path: &Path, verdict: &VerdictFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(verdict)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a `verdict.json`.
pub fn read_verdict(path: &Path) -> Result<VerdictFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("no verdict at {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_timing(path: &Path, entries: &[(&str, f64)]) -> Result<()> {
    let mut out = String::new();
    for (name, value) in entries {
        out.push_str(&format!("{name}: {value:.3}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs one identification end to end in `config.out_dir`, leaving
/// `data.csv`, `request.json`, `response.json`, `verdict.json`, `timing.txt`,
/// and — when diagnostics are allowed — `trace.csv`.
pub fn run_identify(config: &RunConfig) -> Result<VerdictFile> {
    fs::create_dir_all(&config.out_dir)?;
    let total_t = Instant::now();
    let data = load_or_generate(config)?;
    let backend = config.backend()?;

    let t = Instant::now();
    let req = client_prepare(&data, &config.task, config.epsilon, &backend)?;
    let request_path = config.out_dir.join("request.json");
    write_request(&request_path, &req)?;
    let prepare_ms = ms(t);

    // Exact plaintext solution on the same records, for error reporting.
    let prob = build_problem(&data, &config.task)?;
    let oracle = oracle_solve(&prob)?;

    if config.k_inv == Some(0) {
        return run_diagnostic(config, &req, &data, &oracle.z, total_t, prepare_ms);
    }

    let server_config = config.server_config();
    let t = Instant::now();
    let req_read = read_request(&request_path)?;
    let resp = server_identify(&req_read, &server_config)?;
    write_response(&config.out_dir.join("response.json"), &resp, config.scale_bits)?;
    let server_ms = ms(t);

    let t = Instant::now();
    let resp_read = read_response(&config.out_dir.join("response.json"))?;
    let key = DecryptKey::new(&backend);
    let verdict = client_validate(&resp_read, &key, resp_read.plan.q);
    let validate_ms = ms(t);

    let final_error = (&verdict.z_hat - &oracle.z).amax();
    let error_vs_true = z_true(&config.task)
        .ok()
        .map(|zt| (&verdict.z_hat - zt).amax());

    let mut diagnostics_ms = 0.0;
    if diagnostics_enabled(config.backend) {
        let t = Instant::now();
        let (rows, _) = trace_errors(
            &backend,
            &req,
            &data,
            resp_read.plan.p,
            resp_read.plan.tau,
            resp_read.plan.k_div,
            resp_read.plan.k_inv,
            &oracle.z,
        )?;
        write_trace(&config.out_dir.join("trace.csv"), &rows)?;
        diagnostics_ms = ms(t);
    }

    let file = VerdictFile {
        mode: RunMode::Identify,
        task: config.task,
        samples: config.samples,
        backend: config.backend,
        seed: Some(config.seed),
        epsilon: config.epsilon,
        guaranteed: verdict.guaranteed,
        cert_spectral_ok: Some(verdict.cert_spectral_ok),
        cert_magnitude_ok: Some(verdict.cert_magnitude_ok),
        final_error: Some(final_error),
        error_vs_true,
        depth_used: Some(resp_read.plan.depth_total),
        computation_levels_used: Some(config.max_level - resp_read.ct_z_hat.level()),
        plan: Some(resp_read.plan.clone()),
        z_hat: matrix_rows(&verdict.z_hat),
    };
    write_verdict(&config.out_dir.join("verdict.json"), &file)?;
    write_timing(
        &config.out_dir.join("timing.txt"),
        &[
            ("prepare_ms", prepare_ms),
            ("server_ms", server_ms),
            ("validate_ms", validate_ms),
            ("diagnostics_ms", diagnostics_ms),
            ("total_ms", ms(total_t)),
        ],
    )?;
    Ok(file)
}

/// `k_inv = 0`: probe the initialization `alpha M^T V` without any server
/// exchange; the reported error is the initialization error, nothing is
/// certified, and the probe requires diagnostics access.
fn run_diagnostic(
    config: &RunConfig,
    req: &IdentifyRequest,
    data: &IoData,
    z_star: &DMatrix<f64>,
    total_t: Instant,
    prepare_ms: f64,
) -> Result<VerdictFile> {
    if !diagnostics_enabled(config.backend) {
        bail!(
            "initialization diagnostics decrypt intermediate ciphertexts; \
             use the exact backend or set {DEBUG_KEY_ENV}"
        );
    }
    let backend = config.backend()?;
    let defaults = ServerConfig::default();
    let k_div = config.k_div.unwrap_or(defaults.k_div);
    let (l, _, r) = config.task.dims(config.samples);
    let budget = config
        .max_level
        .saturating_sub(defaults.safety_margin + 5 + k_div);
    let p = select_p(
        config.epsilon,
        defaults.q,
        l,
        r,
        budget,
        defaults.p_grid_step,
    )?;

    let t = Instant::now();
    let (rows, probe) = trace_errors(&backend, req, data, p, defaults.tau, k_div, 0, z_star)?;
    write_trace(&config.out_dir.join("trace.csv"), &rows)?;
    let diagnostics_ms = ms(t);

    let file = VerdictFile {
        mode: RunMode::Diagnostic,
        task: config.task,
        samples: config.samples,
        backend: config.backend,
        seed: Some(config.seed),
        epsilon: config.epsilon,
        guaranteed: false,
        cert_spectral_ok: None,
        cert_magnitude_ok: None,
        final_error: Some(rows[0].encrypted_error),
        error_vs_true: z_true(&config.task).ok().map(|zt| (&probe - zt).amax()),
        depth_used: None,
        computation_levels_used: Some(config.max_level - probe_level(config, k_div)),
        plan: None,
        z_hat: matrix_rows(&probe),
    };
    write_verdict(&config.out_dir.join("verdict.json"), &file)?;
    write_timing(
        &config.out_dir.join("timing.txt"),
        &[
            ("prepare_ms", prepare_ms),
            ("diagnostics_ms", diagnostics_ms),
            ("total_ms", ms(total_t)),
        ],
    )?;
    Ok(file)
}

/// Remaining level of the `k = 0` probe: preprocessing and division consume
/// `5 + k_div`, the probe product one more.
fn probe_level(config: &RunConfig, k_div: u32) -> u32 {
    config.max_level.saturating_sub(5 + k_div + 1)
}

/// Re-validates artifacts already in `dir`: reads `request.json` and
/// `response.json`, decrypts, checks certificates (against `q_override` if
/// given, else the plan's floor), recomputes errors when `data.csv` is
/// present, and rewrites `verdict.json`.
pub fn validate_run(dir: &Path, q_override: Option<f64>) -> Result<VerdictFile> {
    let req = read_request(&dir.join("request.json"))?;
    let resp = read_response(&dir.join("response.json"))?;
    let kind = resp.ct_z_hat.backend_kind();
    let backend = Backend::new(kind, req.params.clone())?;
    let key = DecryptKey::new(&backend);
    let q = q_override.unwrap_or(resp.plan.q);
    let verdict = client_validate(&resp, &key, q);

    let data_path = dir.join("data.csv");
    let (final_error, error_vs_true) = if data_path.exists() {
        let data = read_io_csv(&data_path)?;
        let prob = build_problem(&data, &req.task)?;
        let oracle = oracle_solve(&prob)?;
        (
            Some((&verdict.z_hat - &oracle.z).amax()),
            z_true(&req.task).ok().map(|zt| (&verdict.z_hat - zt).amax()),
        )
    } else {
        (None, None)
    };

    let file = VerdictFile {
        mode: RunMode::Validate,
        task: req.task,
        samples: req.samples,
        backend: kind,
        seed: None,
        epsilon: req.epsilon,
        guaranteed: verdict.guaranteed,
        cert_spectral_ok: Some(verdict.cert_spectral_ok),
        cert_magnitude_ok: Some(verdict.cert_magnitude_ok),
        final_error,
        error_vs_true,
        depth_used: Some(resp.plan.depth_total),
        computation_levels_used: Some(req.params.max_level - resp.ct_z_hat.level()),
        plan: Some(resp.plan.clone()),
        z_hat: matrix_rows(&verdict.z_hat),
    };
    write_verdict(&dir.join("verdict.json"), &file)?;
    Ok(file)
}
