//! Which observables, measured at which instants, determine the initial state.
//!
//! Measuring `Q` along the trajectory gives access to the projections of
//! `rho(0)` onto the Krylov space `span{Q, L*Q, ..., (L*)^(mu-1) Q}`. A set of
//! observables is reconstructible when those spaces, together with the
//! identity, span all Hermitian operators. The semigroup is expanded as
//! `exp(L t) = sum_k alpha_k(t) L^k`; a grid of `mu` instants is usable when
//! the matrix `[alpha_k(t_j)]` is nonsingular.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    condition_number, eig_clustered, hermitian_basis, identity, minimal_polynomial, null_space,
    numerical_rank, spectral_radius, unvec, CMatrix, HermitianBasis, HermitianOperator, Tolerances,
    C64,
};
use crate::error::{Error, Result};
use crate::generators::{spectrum_report, Superoperator};

/// Observables `Q_1..Q_r`; the identity is always implicitly measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HermitianOperator>", into = "Vec<HermitianOperator>")]
pub struct ObservableSet {
    observables: Vec<HermitianOperator>,
}

impl ObservableSet {
    pub fn new(observables: Vec<HermitianOperator>) -> Result<Self> {
        let first = observables.first().ok_or(Error::EmptyObservableSet)?;
        let n = first.dim();
        if let Some(bad) = observables.iter().find(|q| q.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n} observable"),
                found: format!("{0}x{0}", bad.dim()),
            });
        }
        Ok(ObservableSet { observables })
    }

    pub fn dim(&self) -> usize {
        self.observables[0].dim()
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn observables(&self) -> &[HermitianOperator] {
        &self.observables
    }

    pub fn iter(&self) -> impl Iterator<Item = &HermitianOperator> {
        self.observables.iter()
    }
}

impl TryFrom<Vec<HermitianOperator>> for ObservableSet {
    type Error = Error;
    fn try_from(v: Vec<HermitianOperator>) -> Result<Self> {
        ObservableSet::new(v)
    }
}

impl From<ObservableSet> for Vec<HermitianOperator> {
    fn from(s: ObservableSet) -> Self {
        s.observables
    }
}

fn check_dim(l: &Superoperator, q: &HermitianOperator) -> Result<()> {
    if q.dim() != l.hilbert_dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0} observable", l.hilbert_dim()),
            found: format!("{0}x{0}", q.dim()),
        });
    }
    Ok(())
}

fn krylov_sequence(dual: &Superoperator, q: &CMatrix, mu: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(mu);
    let mut cur = q.clone();
    for _ in 0..mu {
        let next = dual.apply(&cur).expect("dimension checked by caller");
        out.push(cur);
        cur = next;
    }
    out
}

/// `{Q, L*Q, ..., (L*)^(mu-1) Q}` as a spanning list (not reduced to a basis).
pub fn krylov_subspace(
    l: &Superoperator,
    q: &HermitianOperator,
    tol: &Tolerances,
) -> Result<Vec<HermitianOperator>> {
    check_dim(l, q)?;
    let mu = minimal_polynomial(l.matrix(), tol.rank)?.degree;
    Ok(krylov_sequence(&l.dual(), q.matrix(), mu)
        .iter()
        .map(HermitianOperator::hermitize)
        .collect())
}

/// Real coordinates of the Krylov spanning list of each observable.
struct KrylovCoords {
    basis: HermitianBasis,
    identity: DVector<f64>,
}

impl KrylovCoords {
    fn new(n: usize) -> Result<Self> {
        let basis = hermitian_basis(n.max(2))?;
        let identity = basis.to_coords(&identity(n))?;
        Ok(KrylovCoords { basis, identity })
    }

    fn of(&self, dual: &Superoperator, q: &CMatrix, mu: usize) -> Result<Vec<DVector<f64>>> {
        krylov_sequence(dual, q, mu)
            .iter()
            .map(|m| self.basis.to_coords(m))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstructibility {
    pub ok: bool,
    pub achieved_dim: usize,
    pub required_dim: usize,
    /// Dimension of each observable's own Krylov space: the number of
    /// distinct instants at which it must be measured in the minimal scheme.
    pub krylov_dims: Vec<usize>,
}

pub fn is_reconstructible(
    l: &Superoperator,
    qs: &ObservableSet,
    tol: &Tolerances,
) -> Result<Reconstructibility> {
    if qs.is_empty() {
        return Err(Error::EmptyObservableSet);
    }
    for q in qs.iter() {
        check_dim(l, q)?;
    }
    let n = l.hilbert_dim();
    if n < 2 {
        return Ok(Reconstructibility {
            ok: true,
            achieved_dim: 1,
            required_dim: 1,
            krylov_dims: vec![1; qs.len()],
        });
    }
    let mu = minimal_polynomial(l.matrix(), tol.rank)?.degree;
    let coords = KrylovCoords::new(n)?;
    let dual = l.dual();
    let mut all = vec![coords.identity.clone()];
    let mut krylov_dims = Vec::with_capacity(qs.len());
    for q in qs.iter() {
        let vs = coords.of(&dual, q.matrix(), mu)?;
        krylov_dims.push(numerical_rank(&vs, tol.rank));
        all.extend(vs);
    }
    let achieved_dim = numerical_rank(&all, tol.rank);
    Ok(Reconstructibility {
        ok: achieved_dim == n * n,
        achieved_dim,
        required_dim: n * n,
        krylov_dims,
    })
}

/// The coefficient functions of `exp(L t) = sum_{k < mu} alpha_k(t) L^k`,
/// obtained by Hermite interpolation of `exp(lambda t)` at the roots of the
/// minimal polynomial (confluent Vandermonde system).
#[derive(Debug, Clone)]
pub struct AlphaFunctions {
    /// Distinct roots with their multiplicity in the minimal polynomial.
    roots: Vec<(C64, usize)>,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl AlphaFunctions {
    const MAX_CONDITION: f64 = 1e12;

    pub fn new(l: &Superoperator, tol: &Tolerances) -> Result<Self> {
        let m = l.matrix();
        let mu = minimal_polynomial(m, tol.rank)?.degree;
        let clusters = eig_clustered(m, tol.cluster_abs(spectral_radius(m)?), tol.rank)?;
        let roots: Vec<(C64, usize)> = clusters.iter().map(|c| (c.value, c.index)).collect();
        let total: usize = roots.iter().map(|r| r.1).sum();
        if total != mu {
            return Err(Error::InconsistentSpectrum(format!(
                "Jordan indices sum to {total} but the minimal polynomial has degree {mu}"
            )));
        }
        let mut w = DMatrix::<C64>::zeros(mu, mu);
        let mut row = 0;
        for &(lambda, mult) in &roots {
            for j in 0..mult {
                for k in j..mu {
                    // d^j/d lambda^j of lambda^k
                    let falling: f64 = ((k - j + 1)..=k).map(|x| x as f64).product();
                    w[(row, k)] = lambda.powi((k - j) as i32) * falling;
                }
                row += 1;
            }
        }
        let condition = condition_number(&w);
        if !(condition <= Self::MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(AlphaFunctions {
            roots,
            lu: w.lu(),
            condition,
        })
    }

    pub fn mu(&self) -> usize {
        self.roots.iter().map(|r| r.1).sum()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `(alpha_0(t), ..., alpha_{mu-1}(t))`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut rhs = DVector::<C64>::zeros(self.mu());
        let mut row = 0;
        for &(lambda, mult) in &self.roots {
            let e = (lambda * t).exp();
            for j in 0..mult {
                rhs[row] = e * t.powi(j as i32);
                row += 1;
            }
        }
        let sol = self
            .lu
            .solve(&rhs)
            .expect("interpolation matrix checked nonsingular");
        sol.iter().map(|z| z.re).collect()
    }
}

pub fn alpha_at(l: &Superoperator, t: f64, tol: &Tolerances) -> Result<Vec<f64>> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be finite, got {t}"
        )));
    }
    Ok(AlphaFunctions::new(l, tol)?.eval(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGridCertificate {
    pub times: Vec<f64>,
    /// Row `j` holds `alpha_k(t_j)` for `k = 0..mu`.
    pub alpha_matrix: Vec<Vec<f64>>,
    pub determinant: f64,
    pub valid: bool,
}

impl TimeGridCertificate {
    pub fn alpha_dmatrix(&self) -> DMatrix<f64> {
        let mu = self.times.len();
        DMatrix::from_fn(mu, mu, |j, k| self.alpha_matrix[j][k])
    }
}

pub fn validate_time_grid(
    l: &Superoperator,
    times: &[f64],
    tol: &Tolerances,
) -> Result<TimeGridCertificate> {
    certify_grid(&AlphaFunctions::new(l, tol)?, times, tol)
}

pub(crate) fn certify_grid(
    alpha: &AlphaFunctions,
    times: &[f64],
    tol: &Tolerances,
) -> Result<TimeGridCertificate> {
    let mu = alpha.mu();
    if times.len() != mu {
        return Err(Error::WrongGridSize {
            expected: mu,
            found: times.len(),
        });
    }
    if let Some(bad) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time must be finite, got {bad}"
        )));
    }
    let alpha_matrix: Vec<Vec<f64>> = times.iter().map(|&t| alpha.eval(t)).collect();
    let a = DMatrix::from_fn(mu, mu, |j, k| alpha_matrix[j][k]);
    let determinant = a.clone().lu().determinant();
    let scale: f64 = a.row_iter().map(|r| r.norm()).product();
    let has_duplicates = times.iter().tuple_combinations().any(|(x, y)| x == y);
    let valid = !has_duplicates && scale > 0.0 && determinant.abs() > tol.det * scale;
    Ok(TimeGridCertificate {
        times: times.to_vec(),
        alpha_matrix,
        determinant,
        valid,
    })
}

/// A set of `eta` observables that passes [`is_reconstructible`].
///
/// Candidates are tried in order: sparse combinations of the traceless
/// orthonormal basis (unit norm, fewest basis elements first), Hermitian parts
/// of combined eigenvectors of `L*`, a greedy rank-growing selection, and
/// finally seeded random observables. Every answer is verified.
pub fn suggest_observables(
    l: &Superoperator,
    tol: &Tolerances,
    seed: u64,
) -> Result<ObservableSet> {
    const MAX_COMBINATIONS: usize = 20_000;
    const RANDOM_ATTEMPTS: usize = 200;

    let n = l.hilbert_dim();
    if n < 2 {
        return ObservableSet::new(vec![HermitianOperator::identity(n)]);
    }
    let report = spectrum_report(l, tol)?;
    let eta = report.eta.max(1);
    let mu = report.mu;
    let coords = KrylovCoords::new(n)?;
    let dual = l.dual();
    let required = n * n;

    let span_of = |cands: &[&(HermitianOperator, Vec<DVector<f64>>)]| -> usize {
        let mut all = vec![coords.identity.clone()];
        for c in cands {
            all.extend(c.1.iter().cloned());
        }
        numerical_rank(&all, tol.rank)
    };
    let with_coords =
        |ops: Vec<HermitianOperator>| -> Result<Vec<(HermitianOperator, Vec<DVector<f64>>)>> {
            ops.into_iter()
                .map(|q| {
                    let vs = coords.of(&dual, q.matrix(), mu)?;
                    Ok((q, vs))
                })
                .collect()
        };
    let finish = |chosen: &[&(HermitianOperator, Vec<DVector<f64>>)]| -> Result<ObservableSet> {
        ObservableSet::new(chosen.iter().map(|c| c.0.clone()).collect())
    };
    let mut attempts = 0;

    // sparse basis combinations
    let pool = with_coords(sparse_candidates(&coords.basis))?;
    if binomial(pool.len(), eta) <= MAX_COMBINATIONS {
        for combo in pool.iter().combinations(eta) {
            attempts += 1;
            if span_of(&combo) == required {
                return finish(&combo);
            }
        }
    }

    // eigenvector seeds
    let seeds = with_coords(eigenvector_candidates(&dual, eta, tol)?)?;
    if binomial(seeds.len(), eta) <= MAX_COMBINATIONS {
        for combo in seeds.iter().combinations(eta) {
            attempts += 1;
            if span_of(&combo) == required {
                return finish(&combo);
            }
        }
    }

    // greedy over everything collected so far
    let everything: Vec<_> = pool.iter().chain(seeds.iter()).collect();
    let mut chosen: Vec<&(HermitianOperator, Vec<DVector<f64>>)> = Vec::new();
    while chosen.len() < eta {
        attempts += 1;
        let best = everything
            .iter()
            .copied()
            .max_by_key(|c| {
                let mut trial = chosen.clone();
                trial.push(c);
                span_of(&trial)
            })
            .expect("candidate pool is non-empty");
        chosen.push(best);
    }
    if span_of(&chosen) == required {
        return finish(&chosen);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_ATTEMPTS {
        attempts += 1;
        let ops = (0..eta).map(|_| random_traceless(&mut rng, n)).collect();
        let cands = with_coords(ops)?;
        let refs: Vec<_> = cands.iter().collect();
        if span_of(&refs) == required {
            return finish(&refs);
        }
    }
    Err(Error::SearchFailed { attempts })
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn normalized(m: CMatrix) -> Option<HermitianOperator> {
    let norm = m.norm();
    (norm > 1e-12).then(|| HermitianOperator::hermitize(&(m / C64::from(norm))))
}

/// Traceless basis elements, then pairwise sums, then the sum of all, each
/// scaled to unit Hilbert-Schmidt norm.
fn sparse_candidates(basis: &HermitianBasis) -> Vec<HermitianOperator> {
    let traceless: Vec<&CMatrix> = basis.elements()[1..].iter().map(|b| b.matrix()).collect();
    let mut out: Vec<HermitianOperator> = traceless
        .iter()
        .filter_map(|&b| normalized(b.clone()))
        .collect();
    for (a, b) in traceless.iter().tuple_combinations() {
        out.extend(normalized(*a + *b));
    }
    if traceless.len() > 2 {
        let total = traceless
            .iter()
            .fold(CMatrix::zeros(basis.dim(), basis.dim()), |acc, b| acc + *b);
        out.extend(normalized(total));
    }
    out
}

/// For `j < eta`, sum the `j`-th eigenvector of every eigenspace of `L*` and
/// take the Hermitian and anti-Hermitian parts as candidate observables.
fn eigenvector_candidates(
    dual: &Superoperator,
    eta: usize,
    tol: &Tolerances,
) -> Result<Vec<HermitianOperator>> {
    let m = dual.matrix();
    let n = dual.hilbert_dim();
    let n2 = n * n;
    let clusters = eig_clustered(m, tol.cluster_abs(spectral_radius(m)?), tol.rank)?;
    let kernels: Vec<CMatrix> = clusters
        .iter()
        .map(|c| null_space(&(m - CMatrix::identity(n2, n2) * c.value), tol.rank))
        .collect();
    let id = identity(n);
    let mut out = Vec::new();
    for j in 0..eta {
        let mut x = nalgebra::DVector::<C64>::zeros(n2);
        for k in &kernels {
            if j < k.ncols() {
                x += k.column(j);
            }
        }
        let op = unvec(&x)?;
        for part in [
            (&op + op.adjoint()).scale(0.5),
            (&op - op.adjoint()) * C64::new(0.0, 0.5),
        ] {
            // drop the identity component; it is measured anyway
            let traceless = &part - &id * (part.trace() / n as f64);
            out.extend(normalized(traceless));
        }
    }
    Ok(out)
}

fn random_traceless<R: Rng>(rng: &mut R, n: usize) -> HermitianOperator {
    let g = CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let h = (&g + g.adjoint()).scale(0.5);
    let traceless = &h - identity(n) * (h.trace() / n as f64);
    normalized(traceless).unwrap_or_else(|| HermitianOperator::identity(n))
}
