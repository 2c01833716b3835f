//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Operators on an `N`-level system are `N x N` complex matrices; superoperators
//! act on their column-stacked vectorizations and are `N^2 x N^2`. Everything
//! here is sized for `N <= 4`, so plain dense decompositions from `nalgebra`
//! are used throughout.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::Superoperator;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Maximum entrywise asymmetry accepted for a Hermitian operator.
pub const TOL_HERMITIAN: f64 = 1e-12;

/// Numerical thresholds shared by the spectral and observability routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Eigenvalue clustering radius, relative to `max(1, spectral radius)`.
    pub cluster: f64,
    /// Singular values below `rank * sigma_max` count as zero.
    pub rank: f64,
    /// Time-grid determinant threshold, relative to the product of row norms.
    pub det: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cluster: 1e-8,
            rank: 1e-10,
            det: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn cluster_abs(&self, spectral_radius: f64) -> f64 {
        self.cluster * spectral_radius.max(1.0)
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli matrix `sigma_k` for `k = 1, 2, 3`; `k = 0` gives the identity.
pub fn pauli(k: usize) -> CMatrix {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => CMatrix::from_row_slice(2, 2, &[one, z, z, one]),
        1 => CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        2 => CMatrix::from_row_slice(2, 2, &[z, C64::new(0.0, -1.0), i, z]),
        3 => CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
        _ => panic!("pauli index must be in 0..=3, got {k}"),
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest absolute entry; the `max` norm used for all tolerance checks.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn ensure_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: "non-empty square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_same_shape(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            found: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    Ok(())
}

/// Hermitian asymmetry `max |a - a^dagger|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// A self-adjoint operator: an observable or a density-matrix candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    /// Accepts `m` if it is square, finite and Hermitian within [`TOL_HERMITIAN`].
    pub fn new(m: CMatrix) -> Result<Self> {
        ensure_square(&m)?;
        if !is_finite(&m) {
            return Err(Error::NonFinite);
        }
        let defect = hermitian_defect(&m);
        if defect > TOL_HERMITIAN {
            return Err(Error::NotHermitian { defect });
        }
        Ok(HermitianOperator(m))
    }

    /// Replaces `m` by its Hermitian part `(m + m^dagger) / 2`.
    pub fn hermitize(m: &CMatrix) -> Self {
        HermitianOperator((m + m.adjoint()).scale(0.5))
    }

    pub fn identity(n: usize) -> Self {
        HermitianOperator(identity(n))
    }

    pub fn pauli(k: usize) -> Self {
        HermitianOperator(pauli(k))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }
}

impl std::ops::Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator(&self.0 + &rhs.0)
    }
}

impl std::ops::Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        HermitianOperator(self.0.scale(rhs))
    }
}

/// Hilbert-Schmidt inner product `<a|b> = Tr(a^dagger b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    ensure_same_shape(a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(a: &CMatrix) -> CVector {
    // nalgebra storage is column-major, so the raw slice is already stacked
    CVector::from_column_slice(a.as_slice())
}

pub fn unvec(v: &CVector) -> Result<CMatrix> {
    let len = v.len();
    let n = (len as f64).sqrt().round() as usize;
    if n == 0 || n * n != len {
        return Err(Error::NotSquareLength(len));
    }
    Ok(CMatrix::from_column_slice(n, n, v.as_slice()))
}

/// The superoperator `X -> a X c`, i.e. `kron(c^T, a)`.
pub fn sandwich_superop(a: &CMatrix, c: &CMatrix) -> Result<Superoperator> {
    let n = ensure_square(a)?;
    ensure_same_shape(a, c)?;
    Superoperator::new(n, kron(&c.transpose(), a))
}

/// Numerical rank of a family of vectors: the number of singular values of
/// the column matrix above `tol_rank * sigma_max`.
pub fn numerical_rank<T>(vectors: &[DVector<T>], tol_rank: f64) -> usize
where
    T: ComplexField<RealField = f64>,
{
    if vectors.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(vectors);
    matrix_rank(&m, tol_rank)
}

pub fn matrix_rank<T>(m: &DMatrix<T>, tol_rank: f64) -> usize
where
    T: ComplexField<RealField = f64>,
{
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol_rank * smax).count()
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number<T>(m: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Orthonormal basis (columns) of the numerical kernel of `m`.
pub(crate) fn null_space(m: &CMatrix, tol_rank: f64) -> CMatrix {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let rank = if smax == 0.0 {
        0
    } else {
        order
            .iter()
            .filter(|&&i| svd.singular_values[i] > tol_rank * smax)
            .count()
    };
    // rows of v_t past the rank span the kernel
    let kernel_rows: Vec<usize> = order[rank..].to_vec();
    let mut basis = CMatrix::zeros(n, kernel_rows.len());
    for (col, &r) in kernel_rows.iter().enumerate() {
        for i in 0..n {
            basis[(i, col)] = v_t[(r, i)].conj();
        }
    }
    basis
}

/// One group of numerically coincident eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenCluster {
    #[serde(with = "crate::io::complex")]
    pub value: C64,
    pub algebraic: usize,
    pub geometric: usize,
    /// Size of the largest Jordan block for this eigenvalue.
    pub index: usize,
}

pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    ensure_square(m)?;
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    if max_abs(m) == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); m.nrows()]);
    }
    let schur =
        nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().fold(0.0, |acc, z| acc.max(z.norm())))
}

/// Eigenvalues grouped into clusters of mutual distance at most `tol_cluster`,
/// with algebraic, geometric multiplicity and Jordan index per cluster.
/// Clusters are ordered by decreasing real part, then decreasing imaginary part.
pub fn eig_clustered(m: &CMatrix, tol_cluster: f64, tol_rank: f64) -> Result<Vec<EigenCluster>> {
    if tol_cluster <= 0.0 {
        return Err(Error::InvalidParameter(
            "tol_cluster must be positive".into(),
        ));
    }
    let n = ensure_square(m)?;
    let evs = eigenvalues(m)?;

    let mut groups: Vec<Vec<C64>> = Vec::new();
    for z in evs {
        match groups
            .iter_mut()
            .find(|g| g.iter().all(|w| (w - z).norm() <= tol_cluster))
        {
            Some(g) => g.push(z),
            None => groups.push(vec![z]),
        }
    }

    let mut clusters = Vec::with_capacity(groups.len());
    for g in groups {
        let alg = g.len();
        let centroid = g.iter().sum::<C64>() / alg as f64;
        let shifted = m - CMatrix::identity(n, n) * centroid;
        let geo = (n - matrix_rank(&shifted, tol_rank)).clamp(1, alg);
        let mut index = alg;
        let mut power = shifted.clone();
        for k in 1..=alg {
            if n - matrix_rank(&power, tol_rank) >= alg {
                index = k;
                break;
            }
            power = &power * &shifted;
        }
        clusters.push(EigenCluster {
            value: centroid,
            algebraic: alg,
            geometric: geo,
            index: index.max(1),
        });
    }
    clusters.sort_by(|a, b| {
        b.value
            .re
            .total_cmp(&a.value.re)
            .then(b.value.im.total_cmp(&a.value.im))
    });
    Ok(clusters)
}

/// Monic minimal polynomial `sum_k coefficients[k] x^k` with `coefficients[degree] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalPolynomial {
    pub degree: usize,
    pub coefficients: Vec<C64>,
}

impl MinimalPolynomial {
    pub fn evaluate_at(&self, m: &CMatrix) -> CMatrix {
        let n = m.nrows();
        // Horner
        let mut acc = CMatrix::zeros(n, n);
        for &ck in self.coefficients.iter().rev() {
            acc = &acc * m + CMatrix::identity(n, n) * ck;
        }
        acc
    }
}

/// Minimal polynomial by rank growth of the vectorized powers `I, m, m^2, ...`.
pub fn minimal_polynomial(m: &CMatrix, tol_rank: f64) -> Result<MinimalPolynomial> {
    let n = ensure_square(m)?;
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    let mut powers = vec![CMatrix::identity(n, n)];
    let mut normalized = vec![vec(&powers[0]).normalize()];
    for k in 1..=n * n {
        let next = &powers[k - 1] * m;
        let v = vec(&next);
        let nv = v.norm();
        let candidate = if nv > 0.0 { v / C64::from(nv) } else { v };
        normalized.push(candidate);
        powers.push(next);
        // a zero power is trivially dependent
        if nv == 0.0 || numerical_rank(&normalized, tol_rank) < k + 1 {
            let lhs = DMatrix::from_columns(&powers[..k].iter().map(vec).collect::<Vec<_>>());
            let rhs = -vec(&powers[k]);
            let sol = lhs
                .svd(true, true)
                .solve(&rhs, 0.0)
                .map_err(|e| Error::InconsistentSpectrum(e.to_string()))?;
            let mut coefficients: Vec<C64> = sol.iter().copied().collect();
            coefficients.push(C64::new(1.0, 0.0));
            return Ok(MinimalPolynomial {
                degree: k,
                coefficients,
            });
        }
    }
    Err(Error::InconsistentSpectrum(
        "powers never became linearly dependent".into(),
    ))
}

/// `exp(m t)`. Uses the eigendecomposition when `m` is numerically
/// diagonalizable with a well-conditioned eigenbasis, otherwise Padé
/// scaling and squaring.
pub fn matrix_exp(m: &CMatrix, t: f64) -> Result<CMatrix> {
    let n = ensure_square(m)?;
    if !is_finite(m) || !t.is_finite() {
        return Err(Error::NonFinite);
    }
    if t == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    let out = match exp_by_eigenbasis(m, t)? {
        Some(e) => e,
        None => exp_pade(&(m * C64::from(t))),
    };
    if !is_finite(&out) {
        return Err(Error::ExpOverflow { t });
    }
    Ok(out)
}

fn exp_by_eigenbasis(m: &CMatrix, t: f64) -> Result<Option<CMatrix>> {
    const MAX_BASIS_CONDITION: f64 = 1e8;
    let n = m.nrows();
    let tol = Tolerances::default();
    let clusters = eig_clustered(m, tol.cluster_abs(spectral_radius(m)?), tol.rank)?;
    if clusters.iter().any(|c| c.geometric != c.algebraic) {
        return Ok(None);
    }
    let mut basis = CMatrix::zeros(n, n);
    let mut exps = Vec::with_capacity(n);
    let mut col = 0;
    for cl in &clusters {
        let shifted = m - CMatrix::identity(n, n) * cl.value;
        let kernel = null_space(&shifted, tol.rank);
        if kernel.ncols() != cl.algebraic {
            return Ok(None);
        }
        for j in 0..kernel.ncols() {
            basis.set_column(col, &kernel.column(j));
            exps.push((cl.value * t).exp());
            col += 1;
        }
    }
    if col != n || condition_number(&basis) > MAX_BASIS_CONDITION {
        return Ok(None);
    }
    let Some(inv) = basis.clone().try_inverse() else {
        return Ok(None);
    };
    let diag = CMatrix::from_diagonal(&CVector::from_vec(exps));
    Ok(Some(basis * diag * inv))
}

/// Degree-13 Padé approximant with scaling and squaring (Higham 2005).
pub(crate) fn exp_pade(a: &CMatrix) -> CMatrix {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * C64::from(2f64.powi(-s));
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let r = |x: f64| C64::from(x);
    let u_inner = &a6 * (&a6 * r(B[13]) + &a4 * r(B[11]) + &a2 * r(B[9]))
        + &a6 * r(B[7])
        + &a4 * r(B[5])
        + &a2 * r(B[3])
        + &id * r(B[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * r(B[12]) + &a4 * r(B[10]) + &a2 * r(B[8]))
        + &a6 * r(B[6])
        + &a4 * r(B[4])
        + &a2 * r(B[2])
        + &id * r(B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut x = q
        .lu()
        .solve(&p)
        .unwrap_or_else(|| CMatrix::from_element(n, n, C64::new(f64::NAN, 0.0)));
    for _ in 0..s {
        x = &x * &x;
    }
    x
}

/// Orthonormal basis of the Hermitian operators on `C^n`: `I / sqrt(n)` then
/// generalized Gell-Mann matrices with unit Hilbert-Schmidt norm.
#[derive(Debug, Clone)]
pub struct HermitianBasis {
    dim: usize,
    elements: Vec<HermitianOperator>,
}

pub fn hermitian_basis(n: usize) -> Result<HermitianBasis> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "hermitian basis needs dimension >= 2, got {n}"
        )));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut elements = Vec::with_capacity(n * n);
    elements.push(HermitianOperator(
        identity(n) * C64::from(1.0 / (n as f64).sqrt()),
    ));
    for j in 0..n {
        for k in (j + 1)..n {
            let mut sym = CMatrix::zeros(n, n);
            sym[(j, k)] = C64::from(s);
            sym[(k, j)] = C64::from(s);
            elements.push(HermitianOperator(sym));
            let mut anti = CMatrix::zeros(n, n);
            anti[(j, k)] = C64::new(0.0, -s);
            anti[(k, j)] = C64::new(0.0, s);
            elements.push(HermitianOperator(anti));
        }
    }
    for l in 1..n {
        let scale = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut d = CMatrix::zeros(n, n);
        for j in 0..l {
            d[(j, j)] = C64::from(scale);
        }
        d[(l, l)] = C64::from(-(l as f64) * scale);
        elements.push(HermitianOperator(d));
    }
    Ok(HermitianBasis { dim: n, elements })
}

impl HermitianBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    /// Real coordinates `Re <B_a|q>`. For non-Hermitian `q` these are the
    /// coordinates of its Hermitian part.
    pub fn to_coords(&self, q: &CMatrix) -> Result<DVector<f64>> {
        if q.shape() != (self.dim, self.dim) {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0}", self.dim),
                found: format!("{}x{}", q.nrows(), q.ncols()),
            });
        }
        let coords = self
            .elements
            .iter()
            .map(|b| hs_inner(b.matrix(), q).map(|z| z.re))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(coords))
    }

    pub fn from_coords(&self, v: &DVector<f64>) -> Result<HermitianOperator> {
        if v.len() != self.elements.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} coordinates", self.elements.len()),
                found: v.len().to_string(),
            });
        }
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (b, &x) in self.elements.iter().zip(v.iter()) {
            m += b.matrix() * C64::from(x);
        }
        Ok(HermitianOperator(m))
    }
}
