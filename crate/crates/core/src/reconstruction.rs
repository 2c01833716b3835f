//! Measurement records and initial-state reconstruction.
//!
//! Three independent routes recover `rho(0)`:
//! * [`reconstruct_alpha`] solves, per observable, the `mu x mu` system in the
//!   semigroup coefficients `alpha_k(t_j)` for the projections
//!   `<(L*)^k Q_i | rho(0)>` and then assembles the state from them;
//! * [`reconstruct_direct`] treats every sample `m_i(t_j) = <exp(L* t_j) Q_i | rho(0)>`
//!   as one linear constraint;
//! * [`dephasing_closed_form`] evaluates the explicit qubit dephasing formula.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::algebra::{
    condition_number, hermitian_basis, hs_inner, identity, matrix_exp, matrix_rank, pauli, unvec,
    vec, CMatrix, HermitianOperator, Tolerances, C64,
};
use crate::error::{Error, Result};
use crate::generators::Superoperator;
use crate::observability::{certify_grid, is_reconstructible, AlphaFunctions, ObservableSet};

const TOL_TRACE: f64 = 1e-12;
const TOL_PSD: f64 = 1e-10;

/// A unit-trace positive semidefinite Hermitian operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "HermitianOperator")]
pub struct DensityMatrix(HermitianOperator);

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - 1.0).abs() > TOL_TRACE {
            return Err(Error::NotDensityMatrix(format!(
                "trace is {tr}, expected 1"
            )));
        }
        let min = op.eigenvalues()[0];
        if min < -TOL_PSD {
            return Err(Error::NotDensityMatrix(format!(
                "smallest eigenvalue is {min:.3e}"
            )));
        }
        Ok(DensityMatrix(op))
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(m)?)
    }

    /// Qubit state `(I + x sigma_1 + y sigma_2 + z sigma_3) / 2`.
    pub fn from_bloch(s: [f64; 3]) -> Result<Self> {
        let m = (pauli(0)
            + pauli(1) * C64::from(s[0])
            + pauli(2) * C64::from(s[1])
            + pauli(3) * C64::from(s[2]))
        .scale(0.5);
        Self::from_matrix(m)
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix(HermitianOperator::hermitize(
            &identity(n).scale(1.0 / n as f64),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn matrix(&self) -> &CMatrix {
        self.0.matrix()
    }

    /// `(Tr(sigma_1 rho), Tr(sigma_2 rho), Tr(sigma_3 rho))` for a qubit.
    pub fn bloch(&self) -> Option<[f64; 3]> {
        (self.dim() == 2)
            .then(|| [1, 2, 3].map(|k| hs_inner(&pauli(k), self.matrix()).expect("2x2").re))
    }
}

impl From<DensityMatrix> for HermitianOperator {
    fn from(d: DensityMatrix) -> Self {
        d.0
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let op = HermitianOperator::deserialize(d)?;
        DensityMatrix::new(op).map_err(serde::de::Error::custom)
    }
}

/// Outcomes `values[i][j] = Tr(Q_i rho(t_j))`, possibly with additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub observables: ObservableSet,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub noise_sigma: f64,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        let (r, p) = (self.observables.len(), self.times.len());
        if self.values.len() != r || self.values.iter().any(|row| row.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: format!("{r}x{p} value table"),
                found: format!(
                    "{} rows of lengths {:?}",
                    self.values.len(),
                    self.values.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        let finite = self
            .values
            .iter()
            .flatten()
            .chain(&self.times)
            .all(|x| x.is_finite());
        if !finite || !(self.noise_sigma >= 0.0) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AlphaPipeline,
    DirectStacked,
    DephasingClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub rho0: DensityMatrix,
    /// Linear estimate before projection onto the state space.
    pub raw_estimate: HermitianOperator,
    /// Euclidean misfit between the record and the raw estimate's predictions.
    pub residual: f64,
    pub condition: f64,
    pub method: Method,
}

fn check_dims(l: &Superoperator, n: usize) -> Result<()> {
    if l.hilbert_dim() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0} operators", l.hilbert_dim()),
            found: format!("{n}x{n}"),
        });
    }
    Ok(())
}

pub fn simulate_measurements(
    l: &Superoperator,
    rho0: &DensityMatrix,
    qs: &ObservableSet,
    times: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<MeasurementRecord> {
    check_dims(l, rho0.dim())?;
    check_dims(l, qs.dim())?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "measurement time {t} must be >= 0"
        )));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let states = times
        .iter()
        .map(|&t| unvec(&(matrix_exp(l.matrix(), t)? * vec(rho0.matrix()))))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("sigma checked");
    let values = qs
        .iter()
        .map(|q| {
            states
                .iter()
                .map(|rho_t| {
                    let exact = hs_inner(q.matrix(), rho_t).expect("dims checked").re;
                    if noise_sigma > 0.0 {
                        exact + noise.sample(&mut rng)
                    } else {
                        exact
                    }
                })
                .collect()
        })
        .collect();
    Ok(MeasurementRecord {
        observables: qs.clone(),
        times: times.to_vec(),
        values,
        noise_sigma,
    })
}

/// Least-squares estimate of the state's real coordinates from stacked
/// constraints `rows . x = rhs`, plus the trace row `<I|rho> = 1`.
struct StackedSolve {
    raw: HermitianOperator,
    condition: f64,
}

fn solve_stacked(
    n: usize,
    mut rows: Vec<DVector<f64>>,
    mut rhs: Vec<f64>,
    tol: &Tolerances,
) -> Result<StackedSolve> {
    let basis = hermitian_basis(n)?;
    rows.push(basis.to_coords(&identity(n))?);
    rhs.push(1.0);
    let a = DMatrix::from_fn(rows.len(), n * n, |i, j| rows[i][j]);
    let rank = matrix_rank(&a, tol.rank);
    if rank < n * n {
        return Err(Error::RankDeficient {
            rank,
            required: n * n,
        });
    }
    let b = DVector::from_vec(rhs);
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 0.0)
        .map_err(|e| Error::InconsistentSpectrum(e.to_string()))?;
    Ok(StackedSolve {
        raw: basis.from_coords(&x)?,
        condition: condition_number(&a),
    })
}

fn record_residual(
    l: &Superoperator,
    raw: &HermitianOperator,
    record: &MeasurementRecord,
) -> Result<f64> {
    let mut sq = 0.0;
    for (j, &t) in record.times.iter().enumerate() {
        let rho_t = unvec(&(matrix_exp(l.matrix(), t)? * vec(raw.matrix())))?;
        for (i, q) in record.observables.iter().enumerate() {
            let predicted = hs_inner(q.matrix(), &rho_t)?.re;
            sq += (predicted - record.values[i][j]).powi(2);
        }
    }
    Ok(sq.sqrt())
}

fn ensure_record_matches(qs: &ObservableSet, record: &MeasurementRecord) -> Result<()> {
    record.validate()?;
    if qs.len() != record.observables.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} observables", qs.len()),
            found: format!("{} in record", record.observables.len()),
        });
    }
    Ok(())
}

/// Projection route: per observable solve `[alpha_k(t_j)] c_i = m_i`, then fit
/// the state to the projections `c_ik = <(L*)^k Q_i | rho(0)>`.
pub fn reconstruct_alpha(
    l: &Superoperator,
    qs: &ObservableSet,
    record: &MeasurementRecord,
    tol: &Tolerances,
) -> Result<ReconstructionResult> {
    ensure_record_matches(qs, record)?;
    let n = l.hilbert_dim();
    check_dims(l, qs.dim())?;
    let check = is_reconstructible(l, qs, tol)?;
    if !check.ok {
        return Err(Error::NotReconstructible {
            achieved: check.achieved_dim,
            required: check.required_dim,
        });
    }
    let alpha = AlphaFunctions::new(l, tol)?;
    let cert = certify_grid(&alpha, &record.times, tol)?;
    if !cert.valid {
        return Err(Error::SingularTimeGrid {
            determinant: cert.determinant,
        });
    }
    let a = cert.alpha_dmatrix();
    let a_svd = a.clone().svd(true, true);
    let basis = hermitian_basis(n)?;
    let dual = l.dual();
    let mu = alpha.mu();

    let mut rows = Vec::with_capacity(qs.len() * mu);
    let mut rhs = Vec::with_capacity(qs.len() * mu);
    for (i, q) in qs.iter().enumerate() {
        let m_i = DVector::from_vec(record.values[i].clone());
        let projections = a_svd
            .solve(&m_i, 0.0)
            .map_err(|e| Error::InconsistentSpectrum(e.to_string()))?;
        let mut op = q.matrix().clone();
        for k in 0..mu {
            rows.push(basis.to_coords(&op)?);
            rhs.push(projections[k]);
            op = dual.apply(&op)?;
        }
    }
    let solved = solve_stacked(n, rows, rhs, tol)?;
    finish(
        l,
        record,
        solved,
        condition_number(&a),
        Method::AlphaPipeline,
    )
}

/// Direct route: one constraint `<exp(L* t_j) Q_i | rho(0)> = m_i(t_j)` per sample.
pub fn reconstruct_direct(
    l: &Superoperator,
    qs: &ObservableSet,
    record: &MeasurementRecord,
    tol: &Tolerances,
) -> Result<ReconstructionResult> {
    ensure_record_matches(qs, record)?;
    let n = l.hilbert_dim();
    check_dims(l, qs.dim())?;
    let basis = hermitian_basis(n)?;
    let dual = l.dual();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (j, &t) in record.times.iter().enumerate() {
        let heisenberg = matrix_exp(dual.matrix(), t)?;
        for (i, q) in qs.iter().enumerate() {
            let evolved = unvec(&(&heisenberg * vec(q.matrix())))?;
            rows.push(basis.to_coords(&evolved)?);
            rhs.push(record.values[i][j]);
        }
    }
    let solved = solve_stacked(n, rows, rhs, tol)?;
    finish(l, record, solved, 1.0, Method::DirectStacked)
}

fn finish(
    l: &Superoperator,
    record: &MeasurementRecord,
    solved: StackedSolve,
    extra_condition: f64,
    method: Method,
) -> Result<ReconstructionResult> {
    let residual = record_residual(l, &solved.raw, record)?;
    let rho0 = project_to_physical(&solved.raw)?;
    Ok(ReconstructionResult {
        rho0,
        raw_estimate: solved.raw,
        residual,
        condition: solved.condition * extra_condition,
        method,
    })
}

/// Explicit qubit dephasing reconstruction from `Q_1 = sigma_1` measured at
/// `t1` and `Q_2 = sigma_2 + sigma_3` measured at `t1` and `t2`.
pub fn dephasing_closed_form(
    gamma: f64,
    t1: f64,
    t2: f64,
    m1_t1: f64,
    m2_t1: f64,
    m2_t2: f64,
) -> Result<ReconstructionResult> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(t1 >= 0.0 && t2 >= 0.0) || !t1.is_finite() || !t2.is_finite() {
        return Err(Error::InvalidParameter(
            "times must be finite and >= 0".into(),
        ));
    }
    let (k1, k2) = ((-gamma * t1).exp(), (-gamma * t2).exp());
    let denom = k1 - k2;
    if t1 == t2 || denom == 0.0 {
        return Err(Error::SingularTimeGrid {
            determinant: denom / gamma,
        });
    }
    let s1 = m1_t1 * (gamma * t1).exp();
    let s2 = (m2_t1 - m2_t2) / denom;
    let s3 = (m2_t2 * k1 - m2_t1 * k2) / denom;
    let raw = HermitianOperator::hermitize(
        &(pauli(0)
            + pauli(1) * C64::from(s1)
            + pauli(2) * C64::from(s2)
            + pauli(3) * C64::from(s3))
        .scale(0.5),
    );
    // misfit against the three samples the formula consumes
    let p1 = (gamma * t1).exp().recip() * s1;
    let p2 = |k: f64| k * s2 + s3;
    let residual =
        ((p1 - m1_t1).powi(2) + (p2(k1) - m2_t1).powi(2) + (p2(k2) - m2_t2).powi(2)).sqrt();
    let alpha = DMatrix::from_row_slice(2, 2, &[1.0, (1.0 - k1) / gamma, 1.0, (1.0 - k2) / gamma]);
    Ok(ReconstructionResult {
        rho0: project_to_physical(&raw)?,
        raw_estimate: raw,
        residual,
        condition: condition_number(&alpha),
        method: Method::DephasingClosedForm,
    })
}

/// Nearest density matrix in Frobenius norm: eigenvalues are projected onto
/// the probability simplex. Already-physical input is only hermitized.
pub fn project_to_physical(raw: &HermitianOperator) -> Result<DensityMatrix> {
    let n = raw.dim();
    let herm = HermitianOperator::hermitize(raw.matrix());
    let eig = herm.matrix().clone().symmetric_eigen();
    let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if lambdas.iter().all(|&x| x <= 0.0) {
        return Err(Error::ZeroTraceAfterClipping);
    }
    let tr: f64 = lambdas.iter().sum();
    if lambdas.iter().all(|&x| x >= 0.0) && (tr - 1.0).abs() <= TOL_TRACE {
        return Ok(DensityMatrix(herm));
    }
    let projected = project_simplex(&lambdas);
    let v = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&DVector::from_iterator(
        n,
        projected.iter().map(|&x| C64::from(x)),
    ));
    let m = v * d * v.adjoint();
    Ok(DensityMatrix(HermitianOperator::hermitize(&m)))
}

/// Euclidean projection of `x` onto `{p : p >= 0, sum p = 1}`.
fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{c, max_abs_diff};
    use crate::channels::{DecoherenceModel, KrausFamilySpec};
    use crate::generators::model_generator;
    use crate::observability::ObservableSet;

    fn dephasing(g: f64) -> Superoperator {
        model_generator(&KrausFamilySpec::new(DecoherenceModel::Dephasing, g).unwrap()).unwrap()
    }
    fn obs(ms: Vec<CMatrix>) -> ObservableSet {
        ObservableSet::new(
            ms.into_iter()
                .map(|m| HermitianOperator::new(m).unwrap())
                .collect(),
        )
        .unwrap()
    }
    fn paper_pair() -> ObservableSet {
        obs(vec![pauli(1), pauli(2) + pauli(3)])
    }
    fn rho0() -> DensityMatrix {
        DensityMatrix::from_bloch([0.3, 0.4, 0.5]).unwrap()
    }
    fn frob(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm()
    }
    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::from_bloch([0.0, 0.0, 1.0]).is_ok());
        assert!(matches!(
            DensityMatrix::from_bloch([0.0, 0.0, 1.2]),
            Err(Error::NotDensityMatrix(_))
        ));
        assert!(DensityMatrix::from_matrix(identity(2)).is_err());
        let b = rho0().bloch().unwrap();
        assert!(
            (b[0] - 0.3).abs() < 1e-15 && (b[1] - 0.4).abs() < 1e-15 && (b[2] - 0.5).abs() < 1e-15
        );
    }

    #[test]
    fn simulate_examples() {
        let l = dephasing(1.0);
        let rho = DensityMatrix::from_bloch([0.1, 0.2, 0.5]).unwrap();
        let z = obs(vec![pauli(3)]);
        let rec = simulate_measurements(&l, &rho, &z, &[0.0], 0.0, 0).unwrap();
        assert!((rec.values[0][0] - 0.5).abs() < 1e-15);

        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &[1.0, 0.3], 0.0, 0).unwrap();
        let e = (-1.0f64).exp();
        assert!((rec.values[0][0] - 0.3 * e).abs() < 1e-14);
        for (j, &t) in [1.0f64, 0.3].iter().enumerate() {
            assert!((rec.values[1][j] - (0.4 * (-t).exp() + 0.5)).abs() < 1e-14);
        }
        assert!(simulate_measurements(&l, &rho0(), &z, &[-1.0], 0.0, 0).is_err());
        assert!(simulate_measurements(&l, &rho0(), &z, &[1.0], -0.1, 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let l = dephasing(1.0);
        let a =
            simulate_measurements(&l, &rho0(), &paper_pair(), &[0.1, 0.2, 0.3], 0.01, 42).unwrap();
        let b =
            simulate_measurements(&l, &rho0(), &paper_pair(), &[0.1, 0.2, 0.3], 0.01, 42).unwrap();
        let c =
            simulate_measurements(&l, &rho0(), &paper_pair(), &[0.1, 0.2, 0.3], 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn alpha_pipeline_recovers_state_and_projections() {
        let g = 1.0;
        let (t1, t2) = (0.5, 1.0);
        let l = dephasing(g);
        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &[t1, t2], 0.0, 0).unwrap();
        let res = reconstruct_alpha(&l, &paper_pair(), &rec, &tol()).unwrap();
        assert!(frob(res.rho0.matrix(), rho0().matrix()) < 1e-9);
        assert_eq!(res.method, Method::AlphaPipeline);
        assert!(res.residual < 1e-12);

        // explicit projection formulas for the second observable
        let (m21, m22) = (rec.values[1][0], rec.values[1][1]);
        let (k1, k2) = ((-g * t1).exp(), (-g * t2).exp());
        let q2_proj = (m21 * (1.0 - k2) - m22 * (1.0 - k1)) / (k1 - k2);
        let lq2_proj = g * (m22 - m21) / (k1 - k2);
        let q2 = pauli(2) + pauli(3);
        let truth = hs_inner(&q2, rho0().matrix()).unwrap().re;
        let truth_l = hs_inner(&l.dual().apply(&q2).unwrap(), rho0().matrix())
            .unwrap()
            .re;
        assert!((q2_proj - truth).abs() < 1e-12);
        assert!((lq2_proj - truth_l).abs() < 1e-12);
        // first observable collapses to a single exponential
        let m11 = rec.values[0][0];
        assert!((m11 - k1 * hs_inner(&pauli(1), rho0().matrix()).unwrap().re).abs() < 1e-14);
    }

    #[test]
    fn direct_agrees_with_alpha() {
        let l = dephasing(1.0);
        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &[0.5, 1.0], 0.0, 0).unwrap();
        let a = reconstruct_alpha(&l, &paper_pair(), &rec, &tol()).unwrap();
        let d = reconstruct_direct(&l, &paper_pair(), &rec, &tol()).unwrap();
        assert!(frob(a.rho0.matrix(), d.rho0.matrix()) < 1e-9);
        assert_eq!(d.method, Method::DirectStacked);
    }

    #[test]
    fn insufficient_observables_fail() {
        let l = dephasing(1.0);
        let qs = obs(vec![pauli(1), pauli(2)]);
        let rec = simulate_measurements(&l, &rho0(), &qs, &[0.5, 1.0], 0.0, 0).unwrap();
        assert!(matches!(
            reconstruct_alpha(&l, &qs, &rec, &tol()),
            Err(Error::NotReconstructible {
                achieved: 3,
                required: 4
            })
        ));
        assert!(matches!(
            reconstruct_direct(&l, &qs, &rec, &tol()),
            Err(Error::RankDeficient {
                rank: 3,
                required: 4
            })
        ));
    }

    #[test]
    fn singular_grid_fails() {
        let l = dephasing(1.0);
        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &[0.7, 0.7], 0.0, 0).unwrap();
        assert!(matches!(
            reconstruct_alpha(&l, &paper_pair(), &rec, &tol()),
            Err(Error::SingularTimeGrid { .. })
        ));
        assert!(matches!(
            reconstruct_direct(&l, &paper_pair(), &rec, &tol()),
            Err(Error::RankDeficient { .. })
        ));
        assert!(dephasing_closed_form(1.0, 0.7, 0.7, 0.1, 0.2, 0.2).is_err());
    }

    #[test]
    fn noisy_direct_reconstruction_is_close() {
        let l = dephasing(1.0);
        let times: Vec<f64> = (0..20).map(|j| 0.15 * j as f64).collect();
        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &times, 1e-3, 5).unwrap();
        let res = reconstruct_direct(&l, &paper_pair(), &rec, &tol()).unwrap();
        assert!(frob(res.rho0.matrix(), rho0().matrix()) < 1e-2);
    }

    #[test]
    fn closed_form_examples() {
        let g = 1.0;
        let (t1, t2) = (0.5, 1.0);
        let l = dephasing(g);
        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &[t1, t2], 0.0, 0).unwrap();
        let cf = dephasing_closed_form(
            g,
            t1,
            t2,
            rec.values[0][0],
            rec.values[1][0],
            rec.values[1][1],
        )
        .unwrap();
        assert!(frob(cf.rho0.matrix(), rho0().matrix()) < 1e-12);
        let alpha = reconstruct_alpha(&l, &paper_pair(), &rec, &tol()).unwrap();
        assert!(frob(cf.rho0.matrix(), alpha.rho0.matrix()) < 1e-10);

        let mixed = dephasing_closed_form(g, t1, t2, 0.0, 0.0, 0.0).unwrap();
        assert!(max_abs_diff(mixed.rho0.matrix(), &identity(2).scale(0.5)) < 1e-15);
        assert!(dephasing_closed_form(0.0, t1, t2, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let rho = rho0();
        let out = project_to_physical(rho.operator()).unwrap();
        assert!(max_abs_diff(out.matrix(), rho.matrix()) <= 1e-14);

        let raw = HermitianOperator::new(CMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1.1, 0.),
            c(-0.1, 0.),
        ])))
        .unwrap();
        let out = project_to_physical(&raw).unwrap();
        let want = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.), c(0.0, 0.)]));
        assert!(max_abs_diff(out.matrix(), &want) < 1e-14);

        // same spectrum in a rotated basis
        let raw2 = HermitianOperator::new(identity(2).scale(0.5) + pauli(3).scale(0.6)).unwrap();
        assert!(max_abs_diff(project_to_physical(&raw2).unwrap().matrix(), &want) < 1e-14);
        let raw3 = HermitianOperator::new(identity(2).scale(0.5) + pauli(1).scale(0.6)).unwrap();
        let out3 = project_to_physical(&raw3).unwrap();
        let want3 = (identity(2) + pauli(1)).scale(0.5);
        assert!(max_abs_diff(out3.matrix(), &want3) < 1e-14);

        let neg = HermitianOperator::new(identity(2).scale(-1.0)).unwrap();
        assert!(matches!(
            project_to_physical(&neg),
            Err(Error::ZeroTraceAfterClipping)
        ));
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        let p = project_simplex(&[2.0, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let p = project_simplex(&[0.2, 0.2, 0.2]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn record_json_round_trip() {
        let l = dephasing(1.0);
        let rec = simulate_measurements(&l, &rho0(), &paper_pair(), &[0.1, 0.7], 1e-3, 1).unwrap();
        let json = serde_json::to_string(&rec).unwrap();
        let back: MeasurementRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["observables", "times", "values", "noise_sigma"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn record_shape_validation() {
        let l = dephasing(1.0);
        let mut rec =
            simulate_measurements(&l, &rho0(), &paper_pair(), &[0.1, 0.7], 0.0, 1).unwrap();
        rec.values[1].pop();
        assert!(reconstruct_direct(&l, &paper_pair(), &rec, &tol()).is_err());
    }
}
