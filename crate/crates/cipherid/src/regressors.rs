//! Least-squares problem builders for three linear model structures.
//!
//! Given input/output records `u(0..L-1)`, `y(0..L-1)`, each builder lays out
//! a regressor matrix `M` and target `V` such that the model parameters are
//! the minimizer of `||M Z - V||_F`:
//!
//! * **Transfer function** of order `n` with numerator order `m < n`:
//!   row `i` is `(-y(i), ..., -y(i+n-1), u(i), ..., u(i+m))`, target
//!   `y(i+n)`; `Z` stacks the denominator then numerator coefficients.
//! * **State space** with full state measurement (`C = I`, `D = 0`): row `k`
//!   is `(y(k)^T, u(k)^T)`, target row `y(k+1)^T`; `Z = (A, B)^T`.
//! * **Multi-step predictor** over horizon `N`: row `k` is the regressor
//!   state `(u(k-1..k-n), y(k-1..k-n))` followed by `(u(k), ..., u(k+N-1))`,
//!   target `(y(k), ..., y(k+N-1))`.
//!
//! Every entry of `M` and `V` is `±(one sample entry)`. The builders first
//! produce a symbolic [`RegressorLayout`] of signed sample references; the
//! same layout is applied to plaintext records here and to encrypted records
//! by the server, which keeps the two assembly paths structurally identical.
//!
//! [`oracle_solve`] computes the exact minimizer `Z* = M^+ V` through an SVD
//! and exposes the spectral data used by the reliability layer's property
//! checks. Everything in this module is plaintext; it performs no
//! randomness and no emulated arithmetic.

use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Relative singular-value cutoff below which a regressor is treated as rank
/// deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Input/output records: `u` is `L x n_u`, `y_hat` is `L x n_y`, row `k` is
/// the sample at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IoData {
    u: DMatrix<f64>,
    y_hat: DMatrix<f64>,
}

impl IoData {
    pub fn new(u: DMatrix<f64>, y_hat: DMatrix<f64>) -> Result<Self> {
        if u.nrows() != y_hat.nrows() {
            return Err(Error::DimensionMismatch {
                op: "io_data",
                details: format!("{} input rows vs {} output rows", u.nrows(), y_hat.nrows()),
            });
        }
        if u.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 samples, got {}",
                u.nrows()
            )));
        }
        if u.ncols() == 0 || y_hat.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                op: "io_data",
                details: "zero-width input or output records".to_string(),
            });
        }
        Ok(IoData { u, y_hat })
    }

    pub fn samples(&self) -> usize {
        self.u.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.y_hat.ncols()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn y_hat(&self) -> &DMatrix<f64> {
        &self.y_hat
    }
}

/// Model structure to identify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    /// SISO transfer function: denominator order `n`, numerator order `m`.
    TransferFunction { n: usize, m: usize },
    /// State-space model with measured state: order `n`, `n_u` inputs.
    StateSpace { n: usize, n_u: usize },
    /// SISO multi-step predictor: regressor memory `n`, horizon `horizon`.
    MultiStep { n: usize, horizon: usize },
}

impl TaskSpec {
    /// Expected input/output widths of the records.
    pub fn io_dims(&self) -> (usize, usize) {
        match *self {
            TaskSpec::TransferFunction { .. } => (1, 1),
            TaskSpec::StateSpace { n, n_u } => (n_u, n),
            TaskSpec::MultiStep { .. } => (1, 1),
        }
    }

    /// Problem dimensions `(l, nu, r)`: `M` is `l x nu`, `V` is `l x r`.
    pub fn dims(&self, samples: usize) -> (usize, usize, usize) {
        match *self {
            TaskSpec::TransferFunction { n, m } => (samples - n, n + m + 1, 1),
            TaskSpec::StateSpace { n, n_u } => (samples - 1, n + n_u, n),
            TaskSpec::MultiStep { n, horizon } => {
                (samples + 1 - horizon - n, 2 * n + horizon, horizon)
            }
        }
    }

    pub fn validate(&self, samples: usize) -> Result<()> {
        match *self {
            TaskSpec::TransferFunction { n, m } => {
                if n == 0 || m >= n {
                    return Err(Error::PreconditionViolated(format!(
                        "transfer function needs 0 <= m < n, got n={n}, m={m}"
                    )));
                }
                if samples <= n + m {
                    return Err(Error::InsufficientData(format!(
                        "transfer function of order n={n}, m={m} needs more than {} samples, got {samples}",
                        n + m
                    )));
                }
            }
            TaskSpec::StateSpace { n, n_u } => {
                if n == 0 || n_u == 0 {
                    return Err(Error::PreconditionViolated(format!(
                        "state space needs n >= 1 and n_u >= 1, got n={n}, n_u={n_u}"
                    )));
                }
                if samples < 2 {
                    return Err(Error::InsufficientData(format!(
                        "state space needs at least 2 samples, got {samples}"
                    )));
                }
            }
            TaskSpec::MultiStep { n, horizon } => {
                if n == 0 || horizon == 0 {
                    return Err(Error::PreconditionViolated(format!(
                        "multi-step predictor needs n >= 1 and horizon >= 1, got n={n}, horizon={horizon}"
                    )));
                }
                if samples < n + horizon {
                    return Err(Error::InsufficientData(format!(
                        "multi-step predictor with n={n}, horizon={horizon} needs at least {} samples, got {samples}",
                        n + horizon
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which sample entry a regressor entry reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataRef {
    U { step: usize, comp: usize },
    Y { step: usize, comp: usize },
}

/// One regressor entry: a sample entry and its sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedRef {
    pub source: DataRef,
    pub negated: bool,
}

impl SignedRef {
    fn plus(source: DataRef) -> Self {
        SignedRef {
            source,
            negated: false,
        }
    }

    fn minus(source: DataRef) -> Self {
        SignedRef {
            source,
            negated: true,
        }
    }
}

/// Symbolic layout of `M` (`l x nu`) and `V` (`l x r`) as signed references
/// into the records.
#[derive(Debug, Clone)]
pub struct RegressorLayout {
    pub l: usize,
    pub nu: usize,
    pub r: usize,
    /// Row-major, `l * nu` entries.
    pub m_refs: Vec<SignedRef>,
    /// Row-major, `l * r` entries.
    pub v_refs: Vec<SignedRef>,
}

impl TaskSpec {
    /// Builds the symbolic layout for `samples` records.
    pub fn layout(&self, samples: usize) -> Result<RegressorLayout> {
        self.validate(samples)?;
        let (l, nu, r) = self.dims(samples);
        let mut m_refs = Vec::with_capacity(l * nu);
        let mut v_refs = Vec::with_capacity(l * r);
        match *self {
            TaskSpec::TransferFunction { n, m } => {
                for i in 0..l {
                    for j in 0..n {
                        m_refs.push(SignedRef::minus(DataRef::Y {
                            step: i + j,
                            comp: 0,
                        }));
                    }
                    for j in 0..=m {
                        m_refs.push(SignedRef::plus(DataRef::U {
                            step: i + j,
                            comp: 0,
                        }));
                    }
                    v_refs.push(SignedRef::plus(DataRef::Y {
                        step: i + n,
                        comp: 0,
                    }));
                }
            }
            TaskSpec::StateSpace { n, n_u } => {
                for k in 0..l {
                    for j in 0..n {
                        m_refs.push(SignedRef::plus(DataRef::Y { step: k, comp: j }));
                    }
                    for j in 0..n_u {
                        m_refs.push(SignedRef::plus(DataRef::U { step: k, comp: j }));
                    }
                    for j in 0..n {
                        v_refs.push(SignedRef::plus(DataRef::Y {
                            step: k + 1,
                            comp: j,
                        }));
                    }
                }
            }
            TaskSpec::MultiStep { n, horizon } => {
                for i in 0..l {
                    let k = i + n; // first predicted step of this row
                    for j in 1..=n {
                        m_refs.push(SignedRef::plus(DataRef::U {
                            step: k - j,
                            comp: 0,
                        }));
                    }
                    for j in 1..=n {
                        m_refs.push(SignedRef::plus(DataRef::Y {
                            step: k - j,
                            comp: 0,
                        }));
                    }
                    for j in 0..horizon {
                        m_refs.push(SignedRef::plus(DataRef::U {
                            step: k + j,
                            comp: 0,
                        }));
                    }
                    for j in 0..horizon {
                        v_refs.push(SignedRef::plus(DataRef::Y {
                            step: k + j,
                            comp: 0,
                        }));
                    }
                }
            }
        }
        debug_assert_eq!(m_refs.len(), l * nu);
        debug_assert_eq!(v_refs.len(), l * r);
        Ok(RegressorLayout {
            l,
            nu,
            r,
            m_refs,
            v_refs,
        })
    }
}

impl RegressorLayout {
    /// Applies the layout to plaintext records.
    pub fn realize(&self, data: &IoData) -> (DMatrix<f64>, DMatrix<f64>) {
        let fetch = |r: &SignedRef| -> f64 {
            let v = match r.source {
                DataRef::U { step, comp } => data.u()[(step, comp)],
                DataRef::Y { step, comp } => data.y_hat()[(step, comp)],
            };
            if r.negated {
                -v
            } else {
                v
            }
        };
        let m = DMatrix::from_fn(self.l, self.nu, |i, j| fetch(&self.m_refs[i * self.nu + j]));
        let v = DMatrix::from_fn(self.l, self.r, |i, j| fetch(&self.v_refs[i * self.r + j]));
        (m, v)
    }
}

/// The canonical least-squares problem `M Z = V` plus the scaling bound of
/// the records it came from.
#[derive(Debug, Clone)]
pub struct LsqProblem {
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// `beta = max |entry|` over all of `u` and `y_hat`.
    pub beta: f64,
}

impl LsqProblem {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m.nrows(), self.m.ncols(), self.v.ncols())
    }

    pub fn inv_beta_sq(&self) -> f64 {
        1.0 / (self.beta * self.beta)
    }
}

/// `beta = max |entry|` over all records, together with `1/beta^2` as the
/// client supplies it to the server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataMagnitude {
    pub beta: f64,
    pub inv_beta_sq: f64,
}

/// Largest sample magnitude across inputs and outputs.
pub fn compute_beta(data: &IoData) -> Result<DataMagnitude> {
    let beta = data
        .u()
        .iter()
        .chain(data.y_hat().iter())
        .fold(0f64, |acc, &x| acc.max(x.abs()));
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::DegenerateData(format!(
            "cannot scale records with max magnitude {beta}"
        )));
    }
    Ok(DataMagnitude {
        beta,
        inv_beta_sq: 1.0 / (beta * beta),
    })
}

fn check_io_dims(data: &IoData, task: &TaskSpec) -> Result<()> {
    let (n_u, n_y) = task.io_dims();
    if data.input_dim() != n_u || data.output_dim() != n_y {
        return Err(Error::DimensionMismatch {
            op: "build_regressor",
            details: format!(
                "task expects {}x{} records per step, got {}x{}",
                n_u,
                n_y,
                data.input_dim(),
                data.output_dim()
            ),
        });
    }
    Ok(())
}

/// Builds the least-squares problem for `task` from plaintext records.
pub fn build_problem(data: &IoData, task: &TaskSpec) -> Result<LsqProblem> {
    check_io_dims(data, task)?;
    let layout = task.layout(data.samples())?;
    let (m, v) = layout.realize(data);
    let beta = compute_beta(data)?.beta;
    Ok(LsqProblem { m, v, beta })
}

/// Transfer-function builder; see the module docs for the row layout.
pub fn build_tf(data: &IoData, n: usize, m: usize) -> Result<LsqProblem> {
    build_problem(data, &TaskSpec::TransferFunction { n, m })
}

/// State-space builder (`C = I`, `D = 0`).
pub fn build_ssm(data: &IoData, n: usize, n_u: usize) -> Result<LsqProblem> {
    build_problem(data, &TaskSpec::StateSpace { n, n_u })
}

/// Multi-step predictor builder.
pub fn build_msp(data: &IoData, n: usize, horizon: usize) -> Result<LsqProblem> {
    build_problem(data, &TaskSpec::MultiStep { n, horizon })
}

/// Exact minimizer and the spectral data of the regressor.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// `Z* = M^+ V`, the least-squares minimizer.
    pub z: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Eigenvalue range of the Gram matrix `M^T M` (`sigma^2`).
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `||M^+||_2 = 1/sigma_min`.
    pub pseudo_inverse_norm: f64,
    pub pseudo_inverse: DMatrix<f64>,
}

/// Solves `min ||M Z - V||_F` exactly via SVD.
///
/// Fails with [`Error::RankDeficient`] when `sigma_min / sigma_max` falls
/// below [`RANK_TOL`]; the iterative pipeline has no meaning for rank
/// deficient regressors.
pub fn oracle_solve(prob: &LsqProblem) -> Result<OracleSolution> {
    let (l, nu, _) = prob.dims();
    if l < nu {
        return Err(Error::InsufficientData(format!(
            "regressor has more columns ({nu}) than rows ({l})"
        )));
    }
    let svd = prob.m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0f64, |a, &s| a.max(s));
    let sigma_min = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &s| a.min(s));
    let well_conditioned = sigma_max > 0.0 && sigma_min / sigma_max >= RANK_TOL;
    if !well_conditioned {
        return Err(Error::RankDeficient {
            ratio: if sigma_max > 0.0 {
                sigma_min / sigma_max
            } else {
                0.0
            },
        });
    }
    let z = svd
        .solve(&prob.v, 0.0)
        .map_err(|e| Error::PreconditionViolated(format!("svd solve failed: {e}")))?;
    let pseudo_inverse = svd
        .pseudo_inverse(0.0)
        .map_err(|e| Error::PreconditionViolated(format!("svd pseudo-inverse failed: {e}")))?;
    Ok(OracleSolution {
        z,
        sigma_min,
        sigma_max,
        lambda_min: sigma_min * sigma_min,
        lambda_max: sigma_max * sigma_max,
        pseudo_inverse_norm: 1.0 / sigma_min,
        pseudo_inverse,
    })
}

/// Reads records from CSV with header `k,u_1..u_nu,y_1..y_ny`.
pub fn read_io_csv(path: &Path) -> Result<IoData> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidParameter("empty records file".to_string()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let n_u = cols.iter().filter(|c| c.starts_with("u_")).count();
    let n_y = cols.iter().filter(|c| c.starts_with("y_")).count();
    if cols.first() != Some(&"k") || n_u == 0 || n_y == 0 || cols.len() != 1 + n_u + n_y {
        return Err(Error::InvalidParameter(format!(
            "expected header k,u_1..u_{{nu}},y_1..y_{{ny}}, got {header:?}"
        )));
    }
    let mut u_rows: Vec<f64> = Vec::new();
    let mut y_rows: Vec<f64> = Vec::new();
    let mut samples = 0usize;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::InvalidParameter(format!(
                "row {samples} has {} fields, expected {}",
                fields.len(),
                cols.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("unparseable field {s:?}")))
        };
        for f in &fields[1..1 + n_u] {
            u_rows.push(parse(f)?);
        }
        for f in &fields[1 + n_u..] {
            y_rows.push(parse(f)?);
        }
        samples += 1;
    }
    if samples < 2 {
        return Err(Error::InsufficientData(format!(
            "records file holds {samples} samples"
        )));
    }
    IoData::new(
        DMatrix::from_row_slice(samples, n_u, &u_rows),
        DMatrix::from_row_slice(samples, n_y, &y_rows),
    )
}

/// Writes records as CSV with header `k,u_1..u_nu,y_1..y_ny`. Values use the
/// shortest decimal form that round-trips `f64`, so write/read is lossless.
pub fn write_io_csv(path: &Path, data: &IoData) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = String::from("k");
    for j in 0..data.input_dim() {
        header.push_str(&format!(",u_{}", j + 1));
    }
    for j in 0..data.output_dim() {
        header.push_str(&format!(",y_{}", j + 1));
    }
    writeln!(out, "{header}")?;
    for k in 0..data.samples() {
        let mut row = k.to_string();
        for j in 0..data.input_dim() {
            row.push(',');
            row.push_str(&data.u()[(k, j)].to_string());
        }
        for j in 0..data.output_dim() {
            row.push(',');
            row.push_str(&data.y_hat()[(k, j)].to_string());
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DVector};

    /// Simple second-order SISO recursion used as a known system:
    /// y(k+2) = -0.3 y(k+1) - 0.1 y(k) + u(k+1) + 0.5 u(k).
    fn recursion_data(samples: usize) -> IoData {
        let mut u = Vec::with_capacity(samples);
        let mut state = 1u64;
        for _ in 0..samples {
            // Tiny deterministic generator; statistical quality is irrelevant.
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            u.push(((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5);
        }
        let mut y = vec![0.0f64; samples];
        for k in 0..samples.saturating_sub(2) {
            y[k + 2] = -0.3 * y[k + 1] - 0.1 * y[k] + u[k + 1] + 0.5 * u[k];
        }
        IoData::new(
            DMatrix::from_column_slice(samples, 1, &u),
            DMatrix::from_column_slice(samples, 1, &y),
        )
        .unwrap()
    }

    #[test]
    fn tf_dims_and_membership() {
        let data = recursion_data(20);
        let prob = build_tf(&data, 3, 2).unwrap();
        assert_eq!(prob.dims(), (17, 6, 1));
        // Every entry of M and V is +- some sample entry.
        let mut pool: Vec<f64> = data.u().iter().copied().collect();
        pool.extend(data.y_hat().iter().copied());
        for &x in prob.m.iter().chain(prob.v.iter()) {
            assert!(
                pool.iter().any(|&p| p == x || p == -x),
                "entry {x} not a signed sample"
            );
        }
    }

    #[test]
    fn tf_rows_follow_the_difference_recursion() {
        let data = recursion_data(16);
        let prob = build_tf(&data, 2, 1).unwrap();
        let (l, nu, _) = prob.dims();
        assert_eq!((l, nu), (14, 4));
        let y = data.y_hat();
        let u = data.u();
        // Row i: (-y(i), -y(i+1), u(i), u(i+1)) target y(i+2).
        for i in 0..l {
            assert_eq!(prob.m[(i, 0)], -y[(i, 0)]);
            assert_eq!(prob.m[(i, 1)], -y[(i + 1, 0)]);
            assert_eq!(prob.m[(i, 2)], u[(i, 0)]);
            assert_eq!(prob.m[(i, 3)], u[(i + 1, 0)]);
            assert_eq!(prob.v[(i, 0)], y[(i + 2, 0)]);
        }
        // The generating coefficients solve the noiseless problem exactly.
        let z = oracle_solve(&prob).unwrap().z;
        let truth = DVector::from_row_slice(&[0.1, 0.3, 0.5, 1.0]);
        assert!((z.column(0) - truth).amax() < 1e-9);
    }

    #[test]
    fn ssm_rows_pair_state_with_successor() {
        let u = dmatrix![1.0; 2.0; 3.0];
        let y = dmatrix![1.0, 10.0; 2.0, 20.0; 3.0, 30.0];
        let data = IoData::new(u, y).unwrap();
        let prob = build_ssm(&data, 2, 1).unwrap();
        assert_eq!(prob.dims(), (2, 3, 2));
        assert_eq!(prob.m, dmatrix![1.0, 10.0, 1.0; 2.0, 20.0, 2.0]);
        assert_eq!(prob.v, dmatrix![2.0, 20.0; 3.0, 30.0]);
    }

    #[test]
    fn msp_rows_stack_past_window_and_future_inputs() {
        let samples = 8;
        let u = DMatrix::from_fn(samples, 1, |k, _| (k + 1) as f64);
        let y = DMatrix::from_fn(samples, 1, |k, _| ((k + 1) * 100) as f64);
        let data = IoData::new(u, y).unwrap();
        let prob = build_msp(&data, 2, 2).unwrap();
        assert_eq!(prob.dims(), (5, 6, 2));
        // Row for k = 2: (u(1), u(0), y(1), y(0), u(2), u(3)) target (y(2), y(3)).
        assert_eq!(
            prob.m.row(0).transpose().as_slice(),
            &[2.0, 1.0, 200.0, 100.0, 3.0, 4.0]
        );
        assert_eq!(prob.v.row(0).transpose().as_slice(), &[300.0, 400.0]);
        // Last row k = 6 reaches y(7) and u(7) but no further.
        assert_eq!(
            prob.m.row(4).transpose().as_slice(),
            &[6.0, 5.0, 600.0, 500.0, 7.0, 8.0]
        );
        assert_eq!(prob.v.row(4).transpose().as_slice(), &[700.0, 800.0]);
    }

    #[test]
    fn dims_match_for_case_study_sizes() {
        assert_eq!(
            TaskSpec::TransferFunction { n: 3, m: 2 }.dims(20),
            (17, 6, 1)
        );
        assert_eq!(TaskSpec::StateSpace { n: 3, n_u: 1 }.dims(20), (19, 4, 3));
        assert_eq!(TaskSpec::MultiStep { n: 3, horizon: 2 }.dims(20), (16, 8, 2));
    }

    #[test]
    fn too_few_samples_is_insufficient_data() {
        let data = recursion_data(5);
        match build_tf(&data, 3, 2) {
            Err(Error::InsufficientData(_)) => {}
            other => panic!("expected InsufficientData, got {other:?}"),
        }
        match (TaskSpec::MultiStep { n: 3, horizon: 4 }).validate(6) {
            Err(Error::InsufficientData(_)) => {}
            other => panic!("expected InsufficientData, got {other:?}"),
        }
    }

    #[test]
    fn bad_orders_are_precondition_violations() {
        let data = recursion_data(20);
        assert!(matches!(
            build_tf(&data, 3, 3),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(matches!(
            build_tf(&data, 0, 0),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn beta_is_the_max_record_magnitude() {
        let u = dmatrix![1.0; -7.5; 2.0];
        let y = dmatrix![0.5; 3.0; -2.0];
        let data = IoData::new(u, y).unwrap();
        let mag = compute_beta(&data).unwrap();
        assert_eq!(mag.beta, 7.5);
        assert_eq!(mag.inv_beta_sq, 1.0 / 56.25);
    }

    #[test]
    fn zero_records_are_degenerate() {
        let data = IoData::new(DMatrix::zeros(4, 1), DMatrix::zeros(4, 1)).unwrap();
        assert!(matches!(
            compute_beta(&data),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn oracle_satisfies_normal_equations() {
        let data = recursion_data(30);
        let prob = build_tf(&data, 2, 1).unwrap();
        let sol = oracle_solve(&prob).unwrap();
        let residual = &prob.m.transpose() * (&prob.m * &sol.z - &prob.v);
        assert!(residual.amax() < 1e-10, "normal equations violated");
        assert!(sol.sigma_min > 0.0 && sol.sigma_max >= sol.sigma_min);
        assert!((sol.pseudo_inverse_norm - 1.0 / sol.sigma_min).abs() < 1e-12);
        // M^+ M = I for full column rank.
        let eye = DMatrix::<f64>::identity(prob.m.ncols(), prob.m.ncols());
        assert!((&sol.pseudo_inverse * &prob.m - eye).amax() < 1e-8);
    }

    #[test]
    fn rank_deficient_regressor_is_rejected() {
        // Duplicate columns: u(k) appears twice because m = 1 with a
        // constant-zero second input would collide; construct directly.
        let m = dmatrix![1.0, 1.0; 2.0, 2.0; 3.0, 3.0];
        let v = dmatrix![1.0; 2.0; 3.0];
        let prob = LsqProblem { m, v, beta: 3.0 };
        assert!(matches!(
            oracle_solve(&prob),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let u = dmatrix![0.1; -2.0 / 3.0; 1e-17];
        let y = dmatrix![1.5, 2.5; -0.25, 1.0 / 7.0; 0.0, 4.0];
        let data = IoData::new(u, y).unwrap();
        write_io_csv(&path, &data).unwrap();
        let back = read_io_csv(&path).unwrap();
        assert_eq!(data, back);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("k,u_1,y_1,y_2\n"));
    }

    #[test]
    fn csv_rejects_malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "time,u_1,y_1\n0,1,2\n").unwrap();
        assert!(matches!(
            read_io_csv(&path),
            Err(Error::InvalidParameter(_))
        ));
    }
}
