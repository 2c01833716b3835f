//! Evolution generators as superoperators, and their spectral structure.
//!
//! A generator `L` of `d rho / dt = L rho` is stored as the `N^2 x N^2`
//! matrix acting on column-stacked density matrices. The spectral report
//! carries the index of cyclicity `eta` (largest geometric multiplicity),
//! which is the minimal number of observables needed to reconstruct a state,
//! and the minimal polynomial degree `mu`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    self, eig_clustered, hermitian_defect, identity, kron, minimal_polynomial, pauli,
    spectral_radius, unvec, vec, CMatrix, EigenCluster, HermitianOperator, Tolerances, C64,
};
use crate::channels::{DecoherenceModel, KrausFamilySpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    hilbert_dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn new(hilbert_dim: usize, matrix: CMatrix) -> Result<Self> {
        let n2 = hilbert_dim * hilbert_dim;
        if hilbert_dim == 0 || matrix.shape() != (n2, n2) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n2}x{n2} superoperator"),
                found: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        if !algebra::is_finite(&matrix) {
            return Err(Error::NonFinite);
        }
        Ok(Superoperator {
            hilbert_dim,
            matrix,
        })
    }

    /// Infers the Hilbert-space dimension from a square `N^2 x N^2` matrix.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let n2 = matrix.nrows();
        let n = (n2 as f64).sqrt().round() as usize;
        if n * n != n2 {
            return Err(Error::NotSquareLength(n2));
        }
        Self::new(n, matrix)
    }

    pub fn zero(hilbert_dim: usize) -> Self {
        let n2 = hilbert_dim * hilbert_dim;
        Superoperator {
            hilbert_dim,
            matrix: CMatrix::zeros(n2, n2),
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Applies the superoperator to an operator `x`.
    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.shape() != (self.hilbert_dim, self.hilbert_dim) {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0}", self.hilbert_dim),
                found: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        unvec(&(&self.matrix * vec(x)))
    }

    /// Adjoint with respect to the Hilbert-Schmidt product (Heisenberg picture).
    pub fn dual(&self) -> Superoperator {
        Superoperator {
            hilbert_dim: self.hilbert_dim,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Superoperator {
        Superoperator {
            hilbert_dim: self.hilbert_dim,
            matrix: self.matrix.scale(factor),
        }
    }

    /// `max |vec(I)^dagger L|`; zero for trace-preserving generators.
    pub fn trace_preservation_defect(&self) -> f64 {
        let row = vec(&identity(self.hilbert_dim)).adjoint() * &self.matrix;
        row.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Largest asymmetry of `L(Q)` over `samples` random Hermitian `Q` with
    /// entries of order one.
    pub fn hermiticity_preservation_defect(&self, samples: usize, seed: u64) -> f64 {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let n = self.hilbert_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let g = CMatrix::from_fn(n, n, |_, _| {
                    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                });
                let q = (&g + g.adjoint()).scale(0.5);
                let out = self.apply(&q).expect("dimensions match by construction");
                hermitian_defect(&out)
            })
            .fold(0.0, f64::max)
    }
}

pub fn dual_generator(l: &Superoperator) -> Superoperator {
    l.dual()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub operator: CMatrix,
    pub rate: f64,
}

/// Hamiltonian plus weighted jump operators of a GKSL master equation.
#[derive(Debug, Clone, PartialEq)]
pub struct GkslComponents {
    pub hamiltonian: HermitianOperator,
    pub jumps: Vec<JumpOperator>,
}

impl GkslComponents {
    pub fn new(hamiltonian: HermitianOperator, jumps: Vec<JumpOperator>) -> Result<Self> {
        let n = hamiltonian.dim();
        for (index, j) in jumps.iter().enumerate() {
            if j.operator.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{n}x{n} jump operator"),
                    found: format!("{}x{}", j.operator.nrows(), j.operator.ncols()),
                });
            }
            if !(j.rate >= 0.0) || !j.rate.is_finite() {
                return Err(Error::NegativeRate {
                    index,
                    rate: j.rate,
                });
            }
        }
        Ok(GkslComponents { hamiltonian, jumps })
    }

    /// Zero Hamiltonian on an `n`-level system.
    pub fn dissipative(n: usize, jumps: Vec<JumpOperator>) -> Result<Self> {
        Self::new(HermitianOperator::new(CMatrix::zeros(n, n))?, jumps)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
}

/// `L = -i(I (x) H - H^T (x) I) + sum_k r_k (conj(V) (x) V - 1/2 I (x) V^dag V - 1/2 (V^dag V)^T (x) I)`.
pub fn gksl_generator(c: &GkslComponents) -> Result<Superoperator> {
    let n = c.dim();
    let id = identity(n);
    let h = c.hamiltonian.matrix();
    let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * C64::new(0.0, -1.0);
    for (index, j) in c.jumps.iter().enumerate() {
        if j.operator.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n} jump operator"),
                found: format!("{}x{}", j.operator.nrows(), j.operator.ncols()),
            });
        }
        if !(j.rate >= 0.0) {
            return Err(Error::NegativeRate {
                index,
                rate: j.rate,
            });
        }
        let v = &j.operator;
        let vdv = v.adjoint() * v;
        let term = kron(&v.conjugate(), v)
            - kron(&id, &vdv).scale(0.5)
            - kron(&vdv.transpose(), &id).scale(0.5);
        l += term.scale(j.rate);
    }
    Superoperator::new(n, l)
}

impl KrausFamilySpec {
    /// Jump description whose GKSL generator equals [`model_generator`].
    pub fn gksl_components(&self) -> Result<GkslComponents> {
        self.validate()?;
        let g = self.gamma;
        let jumps = match self.model {
            DecoherenceModel::Dephasing => vec![JumpOperator {
                operator: pauli(3),
                rate: g / 2.0,
            }],
            DecoherenceModel::Depolarizing => (1..=3)
                .map(|k| JumpOperator {
                    operator: pauli(k),
                    rate: g / 4.0,
                })
                .collect(),
            DecoherenceModel::OneParametric { a } => vec![
                JumpOperator {
                    operator: pauli(1),
                    rate: a * g / 3.0,
                },
                JumpOperator {
                    operator: pauli(2),
                    rate: (2.0 - a) * g / 3.0,
                },
            ],
        };
        GkslComponents::dissipative(2, jumps)
    }
}

/// Closed-form generator of a built-in decoherence model.
pub fn model_generator(spec: &KrausFamilySpec) -> Result<Superoperator> {
    spec.validate()?;
    let g = spec.gamma;
    let id4 = identity(4);
    let s = |k| pauli(k);
    let m = match spec.model {
        DecoherenceModel::Dephasing => {
            let mut d = CMatrix::zeros(4, 4);
            d[(1, 1)] = C64::from(-g);
            d[(2, 2)] = C64::from(-g);
            d
        }
        DecoherenceModel::Depolarizing => {
            (kron(&s(1), &s(1)) + kron(&s(2).transpose(), &s(2)) + kron(&s(3), &s(3))
                - id4.scale(3.0))
            .scale(g / 4.0)
        }
        DecoherenceModel::OneParametric { a } => (-id4.scale(2.0)
            + kron(&s(1), &s(1)).scale(a)
            + kron(&s(2).transpose(), &s(2)).scale(2.0 - a))
        .scale(g / 3.0),
    };
    Superoperator::new(2, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub clusters: Vec<EigenCluster>,
    /// Index of cyclicity: the largest geometric multiplicity.
    pub eta: usize,
    /// Degree of the minimal polynomial.
    pub mu: usize,
    pub degenerate: bool,
}

impl SpectrumReport {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.clusters
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.value, c.algebraic))
            .collect()
    }
}

pub fn spectrum_report(l: &Superoperator, tol: &Tolerances) -> Result<SpectrumReport> {
    let m = l.matrix();
    let tol_cluster = tol.cluster_abs(spectral_radius(m)?);
    let clusters = eig_clustered(m, tol_cluster, tol.rank)?;
    let eta = clusters.iter().map(|c| c.geometric).max().unwrap_or(0);
    let mu = minimal_polynomial(m, tol.rank)?.degree;
    Ok(SpectrumReport {
        clusters,
        eta,
        mu,
        degenerate: eta > 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub a: f64,
    pub report: SpectrumReport,
}

/// Spectrum of the one-parametric family generator at each `a`.
pub fn parameter_sweep(gamma: f64, a_values: &[f64], tol: &Tolerances) -> Result<Vec<SweepPoint>> {
    a_values
        .iter()
        .map(|&a| {
            let spec = KrausFamilySpec::new(DecoherenceModel::OneParametric { a }, gamma)?;
            let report = spectrum_report(&model_generator(&spec)?, tol)?;
            Ok(SweepPoint { a, report })
        })
        .collect()
}
