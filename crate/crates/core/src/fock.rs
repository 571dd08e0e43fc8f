//! Truncated Fock-space algebra for a single bosonic mode.
//!
//! Everything here is dense. Matrices are stored column-major by nalgebra, so
//! column-stacking vectorization is a copy of the underlying slice: entry
//! `(m, n)` lands at index `n * dim + m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Tolerances enforced by [`validate_density`].
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const NEGATIVITY_TOL: f64 = 1e-10;

/// Size of the truncated field space and the guard band used to certify it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    dim: usize,
    guard: usize,
    tail_tol: f64,
}

impl TruncationPolicy {
    pub fn new(dim: usize, guard: usize, tail_tol: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("dim = {dim} must be at least 2")));
        }
        if guard >= dim {
            return Err(Error::InvalidParameter(format!(
                "guard = {guard} must be smaller than dim = {dim}"
            )));
        }
        if !(0.0..1.0).contains(&tail_tol) {
            return Err(Error::InvalidParameter(format!("tail_tol = {tail_tol} outside [0, 1)")));
        }
        Ok(Self { dim, guard, tail_tol })
    }

    /// Policy with a three-level guard band (or smaller for tiny spaces) and
    /// a tail tolerance of `1e-10`.
    pub fn with_dim(dim: usize) -> Result<Self> {
        Self::new(dim, 3.min(dim.saturating_sub(1)), 1e-10)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    /// Highest photon number represented.
    pub fn n_max(&self) -> usize {
        self.dim - 1
    }

    /// Total population held in the guard band.
    pub fn tail_mass(&self, diagonal: impl Iterator<Item = f64>) -> f64 {
        diagonal.skip(self.dim - self.guard).sum()
    }
}

/// An operator on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator(CMatrix);

impl FockOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", entries.nrows(), entries.ncols()),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("operator has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }
}

/// Annihilation and creation operators, `a[n-1, n] = sqrt(n)`.
pub fn ladder_ops(policy: &TruncationPolicy) -> (FockOperator, FockOperator) {
    let dim = policy.dim();
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    let a_dag = a.adjoint();
    (FockOperator(a), FockOperator(a_dag))
}

/// Whether a number-function is evaluated on `a^dag a` or on `a a^dag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// `f(sqrt(a^dag a))`: diagonal entries `f(sqrt(n))`.
    Number,
    /// `f(sqrt(a a^dag))`: diagonal entries `f(sqrt(n + 1))`.
    NumberPlusOne,
}

impl Shift {
    fn offset(self) -> usize {
        match self {
            Shift::Number => 0,
            Shift::NumberPlusOne => 1,
        }
    }
}

/// Diagonal operator `f(sqrt(n + shift))`, evaluated from the analytic
/// spectrum rather than from products of truncated ladder matrices.
pub fn number_function(
    f: impl Fn(f64) -> f64,
    shift: Shift,
    policy: &TruncationPolicy,
) -> FockOperator {
    FockOperator(CMatrix::from_diagonal(&real_diagonal(f, shift, policy.dim()).map(C64::from)))
}

pub(crate) fn real_diagonal(f: impl Fn(f64) -> f64, shift: Shift, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|n| f(((n + shift.offset()) as f64).sqrt())))
}

/// `sin(gt x) / x`, continued to `gt` at `x = 0`.
pub fn sinc_branch(gtau: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| if x == 0.0 { gtau } else { (gtau * x).sin() / x }
}

/// A validated field state: Hermitian, unit trace, positive, and with a
/// guard-band tail inside the truncation tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    #[cfg(test)]
    pub(crate) fn new_unchecked(entries: CMatrix) -> Self {
        Self(entries)
    }

    pub fn vacuum(policy: &TruncationPolicy) -> Self {
        Self::fock(0, policy).expect("vacuum is always representable")
    }

    pub fn fock(n: usize, policy: &TruncationPolicy) -> Result<Self> {
        if n >= policy.dim() {
            return Err(Error::InvalidParameter(format!(
                "Fock state |{n}> outside dim = {}",
                policy.dim()
            )));
        }
        let mut m = CMatrix::zeros(policy.dim(), policy.dim());
        m[(n, n)] = ONE;
        validate_density(m, policy)
    }

    /// Diagonal state with the given populations.
    pub fn from_populations(p: &[f64], policy: &TruncationPolicy) -> Result<Self> {
        if p.len() != policy.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} populations", policy.dim()),
                got: format!("{}", p.len()),
            });
        }
        let diag = DVector::from_iterator(p.len(), p.iter().map(|&x| C64::from(x)));
        validate_density(CMatrix::from_diagonal(&diag), policy)
    }

    /// Thermal state with mean occupation `n_bar`, restricted to the
    /// truncated space and renormalized there.
    pub fn thermal(n_bar: f64, policy: &TruncationPolicy) -> Result<Self> {
        if !(n_bar >= 0.0) || !n_bar.is_finite() {
            return Err(Error::InvalidParameter(format!("n_bar = {n_bar}")));
        }
        let q = n_bar / (n_bar + 1.0);
        let mut p: Vec<f64> = (0..policy.dim()).map(|n| q.powi(n as i32)).collect();
        let norm: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= norm);
        Self::from_populations(&p, policy)
    }

    /// Projector onto the truncated, renormalized coherent state `|alpha>`.
    pub fn coherent(alpha: C64, policy: &TruncationPolicy) -> Result<Self> {
        let dim = policy.dim();
        let mut amp = CVector::zeros(dim);
        let mut c = ONE;
        for n in 0..dim {
            if n > 0 {
                c *= alpha / (n as f64).sqrt();
            }
            amp[n] = c;
        }
        let norm = amp.norm();
        amp /= C64::from(norm);
        validate_density(&amp * amp.adjoint(), policy)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.0[(n, n)].re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_hermitian_eigenvalue(&self.0)
    }

    /// Trace distance `||a - b||_1 / 2`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = hermitian_part(&(&self.0 - &other.0));
        0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    }
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::from(0.5)
}

pub(crate) fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_part(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest elementwise deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows() - 1) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Checks a candidate field state against every [`DensityMatrix`] invariant
/// and the guard band of `policy`.
pub fn validate_density(rho: CMatrix, policy: &TruncationPolicy) -> Result<DensityMatrix> {
    let dim = policy.dim();
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("{dim}x{dim}"),
            got: format!("{}x{}", rho.nrows(), rho.ncols()),
        });
    }
    let herm = hermiticity_defect(&rho);
    if !(herm <= HERMITICITY_TOL) {
        return Err(Error::HermiticityViolation(herm));
    }
    let tail = policy.tail_mass((0..dim).map(|n| rho[(n, n)].re));
    if tail > policy.tail_tol() {
        return Err(Error::TruncationOverflow(tail));
    }
    let trace_err = (rho.trace().re - 1.0).abs();
    if !(trace_err <= TRACE_TOL) {
        return Err(Error::TraceViolation(trace_err));
    }
    let min_eig = min_hermitian_eigenvalue(&rho);
    if min_eig < -NEGATIVITY_TOL {
        return Err(Error::NegativityViolation(min_eig));
    }
    Ok(DensityMatrix(rho))
}

/// `Tr(a^dag a rho)` read off the diagonal.
pub fn mean_photon_number(rho: &CMatrix) -> f64 {
    (0..rho.nrows()).map(|n| n as f64 * rho[(n, n)].re).sum()
}

/// Column-stacked vector of a square matrix.
pub fn vectorize(rho: &CMatrix) -> CVector {
    CVector::from_column_slice(rho.as_slice())
}

pub fn unvectorize(col: &CVector, dim: usize) -> Result<CMatrix> {
    if col.len() != dim * dim {
        return Err(Error::ShapeMismatch {
            expected: format!("length {}", dim * dim),
            got: format!("length {}", col.len()),
        });
    }
    Ok(CMatrix::from_column_slice(dim, dim, col.as_slice()))
}

/// Superoperator of `X -> A X B` in column-stacked form, `B^T (x) A`.
pub fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    b.transpose().kronecker(a)
}

/// Index of the diagonal element `(n, n)` in a vectorized matrix.
pub(crate) fn diag_index(n: usize, dim: usize) -> usize {
    n * dim + n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(dim: usize) -> TruncationPolicy {
        TruncationPolicy::with_dim(dim).unwrap()
    }

    #[test]
    fn policy_invariants() {
        assert!(TruncationPolicy::new(1, 0, 0.0).is_err());
        assert!(TruncationPolicy::new(4, 4, 0.0).is_err());
        assert!(TruncationPolicy::new(4, 1, 1.0).is_err());
        assert!(TruncationPolicy::new(4, 3, 0.5).is_ok());
    }

    #[test]
    fn ladder_dim_two() {
        let (a, a_dag) = ladder_ops(&policy(2));
        assert_eq!(a.matrix()[(0, 1)], ONE);
        assert_eq!(a.matrix().iter().filter(|z| **z != ZERO).count(), 1);
        assert_eq!(a_dag.matrix(), &a.matrix().adjoint());
    }

    #[test]
    fn ladder_annihilates_vacuum() {
        for dim in [2, 5, 17] {
            let (a, _) = ladder_ops(&policy(dim));
            let mut vac = CVector::zeros(dim);
            vac[0] = ONE;
            assert!((a.matrix() * vac).iter().all(|z| *z == ZERO));
        }
    }

    #[test]
    fn commutator_defect_sits_on_the_edge_row() {
        let (a, a_dag) = ladder_ops(&policy(11));
        let comm = a.matrix() * a_dag.matrix() - a_dag.matrix() * a.matrix();
        let defect = comm - CMatrix::identity(11, 11);
        for i in 0..10 {
            for j in 0..11 {
                assert!(defect[(i, j)].norm() < 1e-14, "({i},{j})");
            }
        }
        assert!((defect[(10, 10)].re + 11.0).abs() < 1e-12);
    }

    #[test]
    fn ladder_matrix_elements_exact() {
        let (a, _) = ladder_ops(&policy(30));
        for n in 0..29 {
            assert_eq!(a.matrix()[(n, n + 1)].re, ((n + 1) as f64).sqrt());
        }
    }

    #[test]
    fn number_function_cases() {
        let p = policy(8);
        for shift in [Shift::Number, Shift::NumberPlusOne] {
            let c = number_function(|x| (0.0 * x).cos(), shift, &p);
            assert_eq!(c.matrix(), &CMatrix::identity(8, 8));
        }
        let s = number_function(sinc_branch(0.3), Shift::Number, &p);
        assert_eq!(s.matrix()[(0, 0)].re, 0.3);
        let c = number_function(|x| (0.05 * x).cos(), Shift::NumberPlusOne, &p);
        assert!((c.matrix()[(3, 3)].re - 0.1f64.cos()).abs() < 1e-15);
        assert!((c.matrix()[(3, 3)].re - 0.9950042).abs() < 1e-7);
    }

    #[test]
    fn squared_number_function_is_number_operator() {
        let p = policy(9);
        let (a, a_dag) = ladder_ops(&p);
        let n_op = a_dag.matrix() * a.matrix();
        let f = number_function(|x| x * x, Shift::Number, &p);
        assert!((f.matrix() - n_op).camax() < 1e-14);
    }

    #[test]
    fn validation_accepts_and_rejects() {
        let p = policy(6);
        assert!(DensityMatrix::vacuum(&p).trace() == 1.0);

        let mut m = CMatrix::zeros(6, 6);
        m[(0, 0)] = C64::from(0.9);
        match validate_density(m, &p) {
            Err(Error::TraceViolation(x)) => assert!((x - 0.1).abs() < 1e-15),
            other => panic!("{other:?}"),
        }

        let mut m = CMatrix::zeros(6, 6);
        m[(0, 0)] = ONE;
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(matches!(validate_density(m, &p), Err(Error::HermiticityViolation(_))));

        let mut m = CMatrix::zeros(6, 6);
        m[(0, 0)] = C64::from(1.5);
        m[(1, 1)] = C64::from(-0.5);
        match validate_density(m, &p) {
            Err(Error::NegativityViolation(x)) => assert!((x + 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }

        let strict = TruncationPolicy::new(6, 2, 1e-6).unwrap();
        assert!(matches!(
            DensityMatrix::fock(5, &strict),
            Err(Error::TruncationOverflow(x)) if x == 1.0
        ));
        assert!(matches!(validate_density(CMatrix::identity(5, 5), &p), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn cold_thermal_state_passes_a_tight_guard() {
        let p = TruncationPolicy::new(30, 5, 1e-12).unwrap();
        let rho = DensityMatrix::thermal(0.008, &p).unwrap();
        let q: f64 = 0.008 / 1.008;
        let tail = p.tail_mass(rho.diagonal().into_iter());
        assert!(tail < 2.0 * q.powi(25));
        assert!(tail < 1e-50);
    }

    #[test]
    fn vectorize_convention() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, C64::from(2.0), C64::from(3.0), C64::from(4.0)]);
        let v = vectorize(&m);
        let expect: Vec<f64> = vec![1.0, 3.0, 2.0, 4.0];
        assert_eq!(v.iter().map(|z| z.re).collect::<Vec<_>>(), expect);
        assert_eq!(unvectorize(&v, 2).unwrap(), m);
        assert!(unvectorize(&v, 3).is_err());
    }

    #[test]
    fn sandwich_matches_direct_product() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for dim in [3, 5] {
            let mut rnd = || CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let (a, b, rho) = (rnd(), rnd(), rnd());
            let lhs = vectorize(&(&a * &rho * &b));
            let rhs = sandwich(&a, &b) * vectorize(&rho);
            assert!((lhs - rhs).camax() < 1e-13);
        }
    }
}
