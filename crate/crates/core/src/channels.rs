//! Kraus channels: collections, the built-in qubit decoherence families,
//! trace-preservation checks and conversion to superoperators.

use serde::{Deserialize, Serialize};

use crate::algebra::{
    ensure_square, identity, kron, max_abs, pauli, CMatrix, HermitianOperator, C64,
};
use crate::error::{Error, Result};
use crate::generators::Superoperator;

/// Tolerance for `sum_i K_i^dagger K_i = I`.
pub const TOL_TP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DecoherenceModel {
    Dephasing,
    Depolarizing,
    /// Weights `a` and `2 - a` on the `sigma_1` and `sigma_2` channels.
    OneParametric {
        a: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausFamilySpec {
    pub model: DecoherenceModel,
    /// Decoherence rate, `kappa(t) = exp(-gamma t)`.
    pub gamma: f64,
}

impl KrausFamilySpec {
    pub fn new(model: DecoherenceModel, gamma: f64) -> Result<Self> {
        let spec = KrausFamilySpec { model, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if let DecoherenceModel::OneParametric { a } = self.model {
            if !(0.0..=2.0).contains(&a) {
                return Err(Error::InvalidParameter(format!(
                    "family parameter a must lie in [0, 2], got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Whether `a` sits where the family spectrum collides (`a` in {0, 1, 2}).
    /// Such points are valid channels but degenerate generators.
    pub fn is_boundary_or_collision(&self) -> bool {
        matches!(self.model, DecoherenceModel::OneParametric { a } if a == 0.0 || a == 1.0 || a == 2.0)
    }
}

/// A finite set of Kraus operators on an `N`-level system.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausCollection {
    dim: usize,
    operators: Vec<CMatrix>,
}

impl KrausCollection {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::InvalidParameter("Kraus collection must not be empty".into()))?;
        let dim = ensure_square(first)?;
        for k in &operators {
            if k.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{dim}x{dim}"),
                    found: format!("{}x{}", k.nrows(), k.ncols()),
                });
            }
            if !crate::algebra::is_finite(k) {
                return Err(Error::NonFinite);
            }
        }
        Ok(KrausCollection { dim, operators })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }
}

/// The built-in family evaluated at time `t`. Zero-weight operators are kept
/// so the collection has the same shape for every `t`.
pub fn kraus_at(spec: &KrausFamilySpec, t: f64) -> Result<KrausCollection> {
    spec.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and non-negative, got {t}"
        )));
    }
    let kappa = (-spec.gamma * t).exp();
    let w = |x: f64| C64::from(x.max(0.0).sqrt());
    let ops = match spec.model {
        DecoherenceModel::Dephasing => vec![
            identity(2) * w((1.0 + kappa) / 2.0),
            pauli(3) * w((1.0 - kappa) / 2.0),
        ],
        DecoherenceModel::Depolarizing => {
            let mut ops = vec![identity(2) * w((1.0 + 3.0 * kappa) / 4.0)];
            ops.extend((1..=3).map(|k| pauli(k) * w((1.0 - kappa) / 4.0)));
            ops
        }
        DecoherenceModel::OneParametric { a } => vec![
            identity(2) * w((1.0 + 2.0 * kappa) / 3.0),
            pauli(1) * w(a * (1.0 - kappa) / 3.0),
            pauli(2) * w((2.0 - a) * (1.0 - kappa) / 3.0),
        ],
    };
    let k = KrausCollection::new(ops)?;
    let check = check_trace_preserving(&k);
    debug_assert!(
        check.ok,
        "built-in family lost trace preservation: {check:?}"
    );
    Ok(k)
}

/// `sum_i K_i X K_i^dagger`.
pub fn apply_channel(k: &KrausCollection, x: &HermitianOperator) -> Result<HermitianOperator> {
    let out = apply_channel_matrix(k, x.matrix())?;
    // exact Hermitian symmetry is lost only to rounding
    Ok(HermitianOperator::hermitize(&out))
}

pub fn apply_channel_matrix(k: &KrausCollection, x: &CMatrix) -> Result<CMatrix> {
    if x.shape() != (k.dim, k.dim) {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", k.dim),
            found: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    Ok(k.operators
        .iter()
        .fold(CMatrix::zeros(k.dim, k.dim), |acc, op| {
            acc + op * x * op.adjoint()
        }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    pub ok: bool,
    pub defect: f64,
}

pub fn check_trace_preserving(k: &KrausCollection) -> TraceCheck {
    let sum = k
        .operators
        .iter()
        .fold(CMatrix::zeros(k.dim, k.dim), |acc, op| {
            acc + op.adjoint() * op
        });
    let defect = max_abs(&(sum - identity(k.dim)));
    TraceCheck {
        ok: defect <= TOL_TP,
        defect,
    }
}

/// `sum_i conj(K_i) (x) K_i`, the channel acting on column-stacked operators.
pub fn channel_superoperator(k: &KrausCollection) -> Superoperator {
    let n2 = k.dim * k.dim;
    let m = k.operators.iter().fold(CMatrix::zeros(n2, n2), |acc, op| {
        acc + kron(&op.conjugate(), op)
    });
    Superoperator::new(k.dim, m).expect("Kraus collection dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::testing::{bloch_state, random_hermitian, random_matrix};
    use crate::algebra::{c, hermitian_defect, matrix_exp, max_abs_diff, unvec, vec};
    use crate::generators::model_generator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_specs(gamma: f64) -> Vec<KrausFamilySpec> {
        let mut v = vec![
            KrausFamilySpec::new(DecoherenceModel::Dephasing, gamma).unwrap(),
            KrausFamilySpec::new(DecoherenceModel::Depolarizing, gamma).unwrap(),
        ];
        for a in [0.0, 0.5, 1.0, 1.5, 2.0] {
            v.push(KrausFamilySpec::new(DecoherenceModel::OneParametric { a }, gamma).unwrap());
        }
        v
    }

    #[test]
    fn spec_validation() {
        assert!(KrausFamilySpec::new(DecoherenceModel::Dephasing, 0.0).is_err());
        assert!(KrausFamilySpec::new(DecoherenceModel::Dephasing, -1.0).is_err());
        assert!(KrausFamilySpec::new(DecoherenceModel::OneParametric { a: 2.01 }, 1.0).is_err());
        assert!(KrausFamilySpec::new(DecoherenceModel::OneParametric { a: -0.1 }, 1.0).is_err());
        let edge = KrausFamilySpec::new(DecoherenceModel::OneParametric { a: 2.0 }, 1.0).unwrap();
        assert!(edge.is_boundary_or_collision());
        let spec = KrausFamilySpec::new(DecoherenceModel::Dephasing, 1.0).unwrap();
        assert!(kraus_at(&spec, -0.1).is_err());
    }

    #[test]
    fn kraus_examples() {
        let deph = KrausFamilySpec::new(DecoherenceModel::Dephasing, 3.0).unwrap();
        let k = kraus_at(&deph, 0.0).unwrap();
        assert_eq!(k.operators().len(), 2);
        assert_eq!(k.operators()[0], identity(2));
        assert_eq!(max_abs(&k.operators()[1]), 0.0);

        let fam = KrausFamilySpec::new(DecoherenceModel::OneParametric { a: 1.0 }, 1.0).unwrap();
        let k = kraus_at(&fam, 2f64.ln()).unwrap();
        let want = [
            identity(2) * c((2.0f64 / 3.0).sqrt(), 0.),
            pauli(1) * c((1.0f64 / 6.0).sqrt(), 0.),
            pauli(2) * c((1.0f64 / 6.0).sqrt(), 0.),
        ];
        for (got, want) in k.operators().iter().zip(&want) {
            assert!(max_abs_diff(got, want) < 1e-15);
        }

        let dep = KrausFamilySpec::new(DecoherenceModel::Depolarizing, 1.0).unwrap();
        let k = kraus_at(&dep, 60.0).unwrap();
        for (i, op) in k.operators().iter().enumerate() {
            assert!(max_abs_diff(op, &(pauli(i) * c(0.5, 0.))) < 1e-12);
        }
    }

    #[test]
    fn trace_preservation() {
        let id = KrausCollection::new(vec![identity(2)]).unwrap();
        assert_eq!(
            check_trace_preserving(&id),
            TraceCheck {
                ok: true,
                defect: 0.0
            }
        );
        let half = KrausCollection::new(vec![identity(2) * c(0.5, 0.)]).unwrap();
        let chk = check_trace_preserving(&half);
        assert!(!chk.ok);
        assert!((chk.defect - 0.75).abs() < 1e-15);
        for g in [0.5, 1.0, 3.0] {
            for spec in all_specs(g) {
                for t in [0.0, 0.1, 0.5, 1.0, 5.0, 40.0] {
                    let chk = check_trace_preserving(&kraus_at(&spec, t).unwrap());
                    assert!(chk.ok && chk.defect <= 1e-12, "{spec:?} t={t} {chk:?}");
                }
            }
        }
    }

    #[test]
    fn collection_validation() {
        assert!(KrausCollection::new(vec![]).is_err());
        assert!(KrausCollection::new(vec![identity(2), identity(3)]).is_err());
    }

    #[test]
    fn apply_examples() {
        let rho = HermitianOperator::new(bloch_state(0.3, 0.4, 0.5)).unwrap();
        let id = KrausCollection::new(vec![identity(2)]).unwrap();
        assert_eq!(apply_channel(&id, &rho).unwrap(), rho);

        let spec = KrausFamilySpec::new(DecoherenceModel::Dephasing, 1.0).unwrap();
        let t: f64 = 1.0;
        let kappa = (-t).exp();
        let out = apply_channel(&kraus_at(&spec, t).unwrap(), &rho).unwrap();
        let map = rho.matrix() * c((1.0 + kappa) / 2.0, 0.)
            + pauli(3) * rho.matrix() * pauli(3) * c((1.0 - kappa) / 2.0, 0.);
        assert!(max_abs_diff(out.matrix(), &map) < 1e-15);
        let want = bloch_state(0.3 * kappa, 0.4 * kappa, 0.5);
        assert!(max_abs_diff(out.matrix(), &want) < 1e-15);

        assert!(apply_channel(&id, &HermitianOperator::identity(3)).is_err());
    }

    #[test]
    fn superoperator_examples() {
        let id = KrausCollection::new(vec![identity(2)]).unwrap();
        assert_eq!(channel_superoperator(&id).matrix(), &identity(4));
        let spec = KrausFamilySpec::new(DecoherenceModel::Dephasing, 1.0).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let s = channel_superoperator(&kraus_at(&spec, t).unwrap());
            let k = (-t).exp();
            let mut want = identity(4);
            want[(1, 1)] = c(k, 0.);
            want[(2, 2)] = c(k, 0.);
            assert!(max_abs_diff(s.matrix(), &want) < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ops = (0..3).map(|_| random_matrix(&mut rng, 3)).collect();
        let k = KrausCollection::new(ops).unwrap();
        let s = channel_superoperator(&k);
        for _ in 0..10 {
            let x = random_matrix(&mut rng, 3);
            let lhs = unvec(&(s.matrix() * vec(&x))).unwrap();
            let rhs = apply_channel_matrix(&k, &x).unwrap();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-13);
        }
    }

    #[test]
    fn output_is_hermitian_with_same_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for spec in all_specs(1.0) {
            let k = kraus_at(&spec, 0.7).unwrap();
            for _ in 0..20 {
                let x = random_hermitian(&mut rng, 2);
                let raw = apply_channel_matrix(&k, &x).unwrap();
                assert!(hermitian_defect(&raw) <= 1e-12);
                assert!((raw.trace() - x.trace()).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn positivity_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for spec in all_specs(1.0) {
            let k = kraus_at(&spec, 0.4).unwrap();
            for _ in 0..100 {
                let g = random_matrix(&mut rng, 2);
                let rho = &g * g.adjoint();
                let rho = &rho / rho.trace();
                let out = apply_channel(&k, &HermitianOperator::hermitize(&rho)).unwrap();
                assert!(out.eigenvalues()[0] >= -1e-10);
            }
        }
    }

    #[test]
    fn dephasing_and_depolarizing_are_semigroups() {
        for model in [DecoherenceModel::Dephasing, DecoherenceModel::Depolarizing] {
            let spec = KrausFamilySpec::new(model, 0.8).unwrap();
            let l = model_generator(&spec).unwrap();
            for t in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let s = channel_superoperator(&kraus_at(&spec, t).unwrap());
                let e = matrix_exp(l.matrix(), t).unwrap();
                assert!(max_abs_diff(s.matrix(), &e) <= 1e-9, "{model:?} t={t}");
            }
        }
    }

    #[test]
    fn family_generator_is_the_derivative_at_zero() {
        // The family's Kraus map is not exp(L t) for t > 0, but L is its
        // derivative at t = 0.
        for a in [0.0, 0.5, 1.0, 2.0] {
            let spec = KrausFamilySpec::new(DecoherenceModel::OneParametric { a }, 1.0).unwrap();
            let l = model_generator(&spec).unwrap();
            let h = 1e-6;
            let plus = channel_superoperator(&kraus_at(&spec, h).unwrap());
            let fd = (plus.matrix() - identity(4)).scale(1.0 / h);
            assert!(max_abs_diff(&fd, l.matrix()) < 1e-5);
        }
    }

    #[test]
    fn family_channel_departs_from_semigroup() {
        // sigma_3 component: Kraus map gives (4 kappa - 1) / 3, exp(L t) gives exp(-4 gamma t / 3)
        let spec = KrausFamilySpec::new(DecoherenceModel::OneParametric { a: 0.5 }, 1.0).unwrap();
        let t = 1.0;
        let k = kraus_at(&spec, t).unwrap();
        let out = apply_channel_matrix(&k, &pauli(3)).unwrap();
        let kraus_factor = out[(0, 0)].re;
        assert!((kraus_factor - (4.0 * (-t).exp() - 1.0) / 3.0).abs() < 1e-14);
        let l = model_generator(&spec).unwrap();
        let evolved = unvec(&(matrix_exp(l.matrix(), t).unwrap() * vec(&pauli(3)))).unwrap();
        assert!((evolved[(0, 0)].re - (-4.0 * t / 3.0).exp()).abs() < 1e-12);
        assert!((kraus_factor - evolved[(0, 0)].re).abs() > 1e-2);
    }
}
