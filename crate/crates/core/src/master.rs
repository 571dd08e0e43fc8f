//! Coarse-grained field dynamics `d rho/dt = r (M - 1) rho + L rho`.
//!
//! Generators are assembled as sparse matrices on column-stacked states; a
//! dense copy is available for small spaces and for cross-checks.

use log::warn;
use nalgebra::linalg::LU;

use crate::diagonal::PopulationVector;
use crate::error::{Error, Result, Warning};
use crate::fock::{
    diag_index, ladder_ops, mean_photon_number, min_hermitian_eigenvalue, unvectorize,
    validate_density, vectorize, CMatrix, CVector, DensityMatrix, TruncationPolicy, C64, ONE,
    ZERO,
};
use crate::injection::InjectionMap;
use crate::reservoir::{AtomState, BathParams};
use crate::sparse::{nonzeros, push_sandwich, BandedLu, SparseMatrix, Triplet};

/// Model parameters in units where the cavity frequency sets the scale.
///
/// Only the product `g tau` enters the field dynamics. `tau` on its own is
/// optional and used only to check that transits are short compared with
/// the mean spacing `1/r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaserParams {
    omega: f64,
    g_tau: f64,
    tau: Option<f64>,
    r: f64,
    bath: BathParams,
}

impl MaserParams {
    pub fn new(omega: f64, g_tau: f64, r: f64, bath: BathParams) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega = {omega}")));
        }
        if !(g_tau >= 0.0 && g_tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("g tau = {g_tau}")));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("r = {r}")));
        }
        let params = Self { omega, g_tau, tau: None, r, bath };
        Ok(params)
    }

    /// Parameters from a separate coupling `g` and transit time `tau`.
    pub fn with_coupling(omega: f64, g: f64, tau: f64, r: f64, bath: BathParams) -> Result<Self> {
        if !(g >= 0.0 && tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("g = {g}, tau = {tau}")));
        }
        let mut params = Self::new(omega, g * tau, r, bath)?;
        params.tau = Some(tau);
        for w in params.warnings() {
            warn!("{w:?}");
        }
        Ok(params)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn g_tau(&self) -> f64 {
        self.g_tau
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn bath(&self) -> &BathParams {
        &self.bath
    }

    pub fn kappa(&self) -> f64 {
        self.bath.kappa()
    }

    pub fn n_th(&self) -> f64 {
        self.bath.n_th()
    }

    /// Small-transit injection rate `alpha = r (g tau)^2`.
    pub fn alpha(&self) -> f64 {
        self.r * self.g_tau * self.g_tau
    }

    pub fn with_g_tau(&self, g_tau: f64) -> Result<Self> {
        let mut p = Self::new(self.omega, g_tau, self.r, self.bath)?;
        p.tau = self.tau;
        Ok(p)
    }

    pub fn with_r(&self, r: f64) -> Result<Self> {
        let mut p = Self::new(self.omega, self.g_tau, r, self.bath)?;
        p.tau = self.tau;
        Ok(p)
    }

    pub fn with_bath(&self, bath: BathParams) -> Result<Self> {
        let mut p = Self::new(self.omega, self.g_tau, self.r, bath)?;
        p.tau = self.tau;
        Ok(p)
    }

    pub fn warnings(&self) -> Vec<Warning> {
        match self.tau {
            Some(tau) if self.r * tau > 0.1 => vec![Warning::CoarseGraining { r_tau: self.r * tau }],
            _ => Vec::new(),
        }
    }
}

/// Vectorized Liouvillian acting on column-stacked field states.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    dim: usize,
    matrix: SparseMatrix,
}

impl GeneratorMatrix {
    pub fn from_sparse(dim: usize, matrix: SparseMatrix) -> Result<Self> {
        if matrix.size() != dim * dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0}", dim * dim),
                got: format!("{0}x{0}", matrix.size()),
            });
        }
        Ok(Self { dim, matrix })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: SparseMatrix::from_triplets(dim * dim, Vec::new()) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sparse(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> CMatrix {
        self.matrix.to_dense()
    }

    pub fn norm_inf(&self) -> f64 {
        self.matrix.norm_inf()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.nnz() == 0
    }

    /// `G rho` for a matrix `rho`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let out = self.matrix.mul_vec(&vectorize(rho));
        unvectorize(&out, self.dim).expect("generator and state sizes agree")
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, matrix: self.matrix.add(&other.matrix) }
    }

    /// `(vec I)^T G`: zero wherever the flow conserves trace.
    pub fn trace_row(&self) -> CVector {
        let dim = self.dim;
        let mut row = CVector::zeros(dim * dim);
        for n in 0..dim {
            for (j, v) in self.matrix.row(diag_index(n, dim)) {
                row[j] += v;
            }
        }
        row
    }
}

/// Two-rate Lindblad generator
/// `down/2 (2 a rho a^dag - a^dag a rho - rho a^dag a)
///  + up/2 (2 a^dag rho a - a a^dag rho - rho a a^dag)`,
/// built from the truncated ladder matrices so it conserves trace exactly.
pub fn two_rate_dissipator(down: f64, up: f64, policy: &TruncationPolicy) -> GeneratorMatrix {
    let dim = policy.dim();
    let mut t = Vec::new();
    push_two_rate(&mut t, down, up, policy);
    GeneratorMatrix { dim, matrix: SparseMatrix::from_triplets(dim * dim, t) }
}

fn push_two_rate(t: &mut Vec<Triplet>, down: f64, up: f64, policy: &TruncationPolicy) {
    let dim = policy.dim();
    let (a, a_dag) = ladder_ops(policy);
    let (a, a_dag) = (a.into_matrix(), a_dag.into_matrix());
    let id = nonzeros(&CMatrix::identity(dim, dim));
    let n_op = nonzeros(&(&a_dag * &a));
    let n_op1 = nonzeros(&(&a * &a_dag));
    let (a, a_dag) = (nonzeros(&a), nonzeros(&a_dag));
    let half = |x: f64| C64::from(-0.5 * x);
    if down != 0.0 {
        push_sandwich(t, C64::from(down), &a, &a_dag, dim);
        push_sandwich(t, half(down), &n_op, &id, dim);
        push_sandwich(t, half(down), &id, &n_op, dim);
    }
    if up != 0.0 {
        push_sandwich(t, C64::from(up), &a_dag, &a, dim);
        push_sandwich(t, half(up), &n_op1, &id, dim);
        push_sandwich(t, half(up), &id, &n_op1, dim);
    }
}

/// Direct action of the two-rate dissipator.
pub fn two_rate_apply(rho: &CMatrix, down: f64, up: f64) -> CMatrix {
    let dim = rho.nrows();
    let policy = TruncationPolicy::new(dim, 0, 0.0).expect("dim >= 2");
    let (a, a_dag) = ladder_ops(&policy);
    let (a, a_dag) = (a.matrix(), a_dag.matrix());
    let n_op = a_dag * a;
    let n_op1 = a * a_dag;
    let lower = (a * rho * a_dag) * C64::from(2.0) - &n_op * rho - rho * &n_op;
    let raise = (a_dag * rho * a) * C64::from(2.0) - &n_op1 * rho - rho * &n_op1;
    lower * C64::from(0.5 * down) + raise * C64::from(0.5 * up)
}

/// Cavity loss into its thermal bath.
pub fn dissipator_apply(rho: &CMatrix, bath: &BathParams) -> CMatrix {
    two_rate_apply(rho, bath.kappa() * (bath.n_th() + 1.0), bath.kappa() * bath.n_th())
}

pub fn dissipator_generator(bath: &BathParams, policy: &TruncationPolicy) -> GeneratorMatrix {
    two_rate_dissipator(bath.kappa() * (bath.n_th() + 1.0), bath.kappa() * bath.n_th(), policy)
}

/// `r (M - 1) + L`.
pub fn build_generator(params: &MaserParams, atom: &AtomState, policy: &TruncationPolicy) -> Result<GeneratorMatrix> {
    let dim = policy.dim();
    let mut t = Vec::new();
    let r = params.r();
    if r != 0.0 {
        let map = InjectionMap::new(*atom, params.g_tau(), policy)?;
        for (coef, left, right) in map.terms() {
            if coef != ZERO {
                push_sandwich(&mut t, coef * r, &nonzeros(left), &nonzeros(right), dim);
            }
        }
        t.extend((0..dim * dim).map(|i| (i, i, C64::from(-r))));
    }
    let bath = params.bath();
    push_two_rate(&mut t, bath.kappa() * (bath.n_th() + 1.0), bath.kappa() * bath.n_th(), policy);
    Ok(GeneratorMatrix { dim, matrix: SparseMatrix::from_triplets(dim * dim, t) })
}

/// Linear solver used by [`steady_state_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverBackend {
    /// Dense LU with the trace functional in place of the first row, and a
    /// full singular-value check of the kernel. Cost grows as `dim^6`.
    Dense,
    /// Banded LU on the sparse generator with one population pinned; the
    /// kernel check uses singular-value estimates. Cost grows as `dim^4`.
    #[default]
    Banded,
}

/// Relative size below which the second singular direction counts as a
/// second steady state.
pub const KERNEL_GAP_TOL: f64 = 1e-8;
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;

/// `sigma_{n-1} / sigma_max` of a dense generator.
pub fn kernel_gap(generator: &GeneratorMatrix) -> f64 {
    let mut sv: Vec<f64> = generator.to_dense().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv.len() < 2 || sv[0] == 0.0 {
        return 0.0;
    }
    sv[sv.len() - 2] / sv[0]
}

pub fn steady_state(generator: &GeneratorMatrix, policy: &TruncationPolicy) -> Result<DensityMatrix> {
    steady_state_with(generator, policy, SolverBackend::default())
}

/// Unique trace-one solution of `G x = 0`.
pub fn steady_state_with(
    generator: &GeneratorMatrix,
    policy: &TruncationPolicy,
    backend: SolverBackend,
) -> Result<DensityMatrix> {
    let dim = generator.dim();
    if dim != policy.dim() {
        return Err(Error::ShapeMismatch { expected: format!("dim {}", policy.dim()), got: format!("dim {dim}") });
    }
    let x = match backend {
        SolverBackend::Dense => solve_dense(generator)?,
        SolverBackend::Banded => solve_banded(generator)?,
    };
    let rho = unvectorize(&x, dim)?;
    let trace = rho.trace();
    let rho = rho / trace;

    let residual = generator.sparse().mul_vec(&vectorize(&rho)).camax();
    let scale = generator.norm_inf();
    if residual > STEADY_RESIDUAL_TOL * scale {
        return Err(Error::NonConvergence(residual / scale));
    }
    let rho = crate::fock::hermitian_part(&rho);
    validate_density(rho, policy)
}

fn solve_dense(generator: &GeneratorMatrix) -> Result<CVector> {
    let dim = generator.dim();
    let gap = kernel_gap(generator);
    if gap < KERNEL_GAP_TOL {
        return Err(Error::DegenerateKernel(gap));
    }
    let mut m = generator.to_dense();
    let mut row = CVector::zeros(dim * dim);
    for n in 0..dim {
        row[diag_index(n, dim)] = ONE;
    }
    m.set_row(0, &row.transpose());
    let mut b = CVector::zeros(dim * dim);
    b[0] = ONE;
    LU::new(m).solve(&b).ok_or(Error::DegenerateKernel(0.0))
}

fn solve_banded(generator: &GeneratorMatrix) -> Result<CVector> {
    let dim = generator.dim();
    let sigma_max = generator.sparse().norm2_estimate(30);
    if sigma_max == 0.0 {
        return Err(Error::DegenerateKernel(0.0));
    }
    let pinned = |n: usize| -> Result<(CVector, f64)> {
        let idx = diag_index(n, dim);
        let m = generator.sparse().with_row(idx, &[(idx, ONE)]);
        let lu = BandedLu::factor(&m);
        let sigma_min = lu.min_singular_estimate(8);
        let gap = sigma_min / sigma_max;
        if !(gap >= KERNEL_GAP_TOL) {
            return Err(Error::DegenerateKernel(gap));
        }
        let mut b = CVector::zeros(dim * dim);
        b[idx] = ONE;
        Ok((lu.solve(&b), gap))
    };
    // Pin the vacuum first; if it is nearly empty, re-pin the fullest level.
    let (x, _) = match pinned(0) {
        Ok(sol) => sol,
        Err(Error::DegenerateKernel(_)) => return retry_pinned(generator, &pinned),
        Err(e) => return Err(e),
    };
    let diag: Vec<f64> = (0..dim).map(|n| x[diag_index(n, dim)].re).collect();
    let total: f64 = diag.iter().sum();
    if !(total.is_finite()) || diag[0] < 1e-3 * total {
        let best = argmax(&diag);
        if best != 0 {
            return pinned(best).map(|s| s.0);
        }
    }
    Ok(x)
}

fn retry_pinned(
    generator: &GeneratorMatrix,
    pinned: &dyn Fn(usize) -> Result<(CVector, f64)>,
) -> Result<CVector> {
    // The vacuum may be empty in the steady state; try the other levels.
    let dim = generator.dim();
    let mut last = Error::DegenerateKernel(0.0);
    for n in [dim / 2, dim / 4, 3 * dim / 4] {
        match pinned(n) {
            Ok((x, _)) => {
                let diag: Vec<f64> = (0..dim).map(|k| x[diag_index(k, dim)].re).collect();
                let best = argmax(&diag);
                return if best == n { Ok(x) } else { pinned(best).map(|s| s.0) };
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc }).0
}

pub fn mean_photon(rho: &DensityMatrix) -> f64 {
    mean_photon_number(rho.matrix())
}

pub fn populations(rho: &DensityMatrix) -> Result<PopulationVector> {
    PopulationVector::new(rho.diagonal())
}

/// `Tr(a rho)`.
pub fn mean_field(rho: &CMatrix) -> C64 {
    (1..rho.nrows()).map(|n| rho[(n, n - 1)] * (n as f64).sqrt()).sum()
}

/// Linear fit of `-ln P_n` against `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaFit {
    pub beta_eff: f64,
    /// Largest deviation of `-ln P_n` from the fitted line.
    pub residual: f64,
    pub n_min: usize,
    pub n_max: usize,
}

/// Smallest population included by the default fit window.
pub const FIT_FLOOR: f64 = 1e-12;

/// Default window `[0, n_max]`, `n_max` the largest `n` with `P_n >= 1e-12`.
pub fn default_fit_window(p: &PopulationVector) -> (usize, usize) {
    let n_max = p.as_slice().iter().rposition(|&x| x >= FIT_FLOOR).unwrap_or(0);
    (0, n_max)
}

pub fn effective_beta_fit(p: &PopulationVector, omega: f64, window: Option<(usize, usize)>) -> Result<BetaFit> {
    let (n_min, n_max) = window.unwrap_or_else(|| default_fit_window(p));
    if n_max <= n_min || n_max >= p.len() {
        return Err(Error::InvalidParameter(format!("fit window [{n_min}, {n_max}] for {} levels", p.len())));
    }
    let mut pts = Vec::with_capacity(n_max - n_min + 1);
    for n in n_min..=n_max {
        let v = p.as_slice()[n];
        if !(v > 0.0) {
            return Err(Error::NonPositivePopulation { index: n, value: v });
        }
        pts.push((n as f64, -v.ln()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(BetaFit { beta_eff: slope / omega, residual, n_min, n_max })
}

/// Integration controls for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvolveOptions {
    /// Defaults to `20 / gap`, the gap estimated from the generator.
    pub t_final: Option<f64>,
    /// Defaults to `0.02 / ||G||_inf`.
    pub dt: Option<f64>,
    /// Number of recorded samples including both endpoints (at least 2).
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveSample {
    pub time: f64,
    pub mean_photon: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub state: DensityMatrix,
    pub samples: Vec<EvolveSample>,
    pub warnings: Vec<Warning>,
}

pub const TRACE_DRIFT_TOL: f64 = 1e-8;

/// Relaxation rate estimate: the smallest singular value of the generator
/// with one population pinned. It never exceeds the second singular value
/// of the generator itself, so times derived from it are conservative.
pub fn relaxation_gap(generator: &GeneratorMatrix) -> f64 {
    let idx = 0;
    let m = generator.sparse().with_row(idx, &[(idx, ONE)]);
    BandedLu::factor(&m).min_singular_estimate(12)
}

pub fn evolve(
    rho0: &DensityMatrix,
    params: &MaserParams,
    atom: &AtomState,
    options: EvolveOptions,
    policy: &TruncationPolicy,
) -> Result<Evolution> {
    let g = build_generator(params, atom, policy)?;
    evolve_with(rho0, &g, options, policy)
}

/// Fixed-step classical Runge-Kutta integration of `d rho/dt = G rho`.
pub fn evolve_with(
    rho0: &DensityMatrix,
    generator: &GeneratorMatrix,
    options: EvolveOptions,
    policy: &TruncationPolicy,
) -> Result<Evolution> {
    let dim = generator.dim();
    let norm = generator.norm_inf();
    let mut warnings = Vec::new();
    let t_final = match options.t_final {
        Some(t) if t >= 0.0 => t,
        Some(t) => return Err(Error::InvalidParameter(format!("t_final = {t}"))),
        None if norm == 0.0 => 0.0,
        None => 20.0 / relaxation_gap(generator),
    };
    let dt = match options.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidParameter(format!("dt = {dt}"))),
        None if norm == 0.0 => t_final.max(1.0),
        None => 0.02 / norm,
    };
    if norm > 0.0 && dt > 0.1 / norm {
        let w = Warning::StepTooLarge { dt, limit: 0.1 / norm };
        warn!("{w:?}");
        warnings.push(w);
    }
    let steps = (t_final / dt).ceil().max(if t_final > 0.0 { 1.0 } else { 0.0 }) as usize;
    let h = if steps > 0 { t_final / steps as f64 } else { 0.0 };
    let samples = options.samples.max(2);
    let record_at: Vec<usize> = (0..samples).map(|k| (k * steps + samples / 2) / (samples - 1)).collect();

    let g = generator.sparse();
    let n = dim * dim;
    let mut x = vectorize(rho0.matrix());
    let (mut k1, mut k2, mut k3, mut k4) = (CVector::zeros(n), CVector::zeros(n), CVector::zeros(n), CVector::zeros(n));
    let mut tmp = CVector::zeros(n);
    let mut out = Vec::with_capacity(samples);
    let mut next = 0;
    let hc = C64::from(h);
    for step in 0..=steps {
        while next < record_at.len() && record_at[next] <= step {
            let rho = unvectorize(&x, dim)?;
            let sample = EvolveSample {
                time: step as f64 * h,
                mean_photon: mean_photon_number(&rho),
                trace: rho.trace().re,
                min_eigenvalue: min_hermitian_eigenvalue(&rho),
            };
            if (sample.trace - 1.0).abs() > TRACE_DRIFT_TOL {
                return Err(Error::NonConvergence((sample.trace - 1.0).abs()));
            }
            if sample.min_eigenvalue < -TRACE_DRIFT_TOL {
                return Err(Error::NegativityViolation(sample.min_eigenvalue));
            }
            out.push(sample);
            next += 1;
        }
        if step == steps {
            break;
        }
        g.mul_vec_into(x.as_slice(), k1.as_mut_slice());
        tmp.copy_from(&x);
        tmp.axpy(hc * 0.5, &k1, ONE);
        g.mul_vec_into(tmp.as_slice(), k2.as_mut_slice());
        tmp.copy_from(&x);
        tmp.axpy(hc * 0.5, &k2, ONE);
        g.mul_vec_into(tmp.as_slice(), k3.as_mut_slice());
        tmp.copy_from(&x);
        tmp.axpy(hc, &k3, ONE);
        g.mul_vec_into(tmp.as_slice(), k4.as_mut_slice());
        k1.axpy(C64::from(2.0), &k2, ONE);
        k1.axpy(C64::from(2.0), &k3, ONE);
        k1 += &k4;
        x.axpy(hc / 6.0, &k1, ONE);
    }
    let rho = crate::fock::hermitian_part(&unvectorize(&x, dim)?);
    let state = validate_density(rho, policy)?;
    Ok(Evolution { state, samples: out, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{CMatrix, I};
    use crate::reservoir::{bose_occupation, thermal_atom};
    use rand::{Rng, SeedableRng};

    fn policy(dim: usize) -> TruncationPolicy {
        TruncationPolicy::with_dim(dim).unwrap()
    }

    fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(dim, dim, |i, j| {
            let decay = (-0.8 * (i + j) as f64).exp();
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * decay
        });
        crate::fock::hermitian_part(&m)
    }

    fn fig2(g_tau: f64) -> MaserParams {
        let bath = BathParams::from_beta(1e-4, 4.797, 1.0).unwrap();
        MaserParams::new(1.0, g_tau, 2e-4, bath).unwrap()
    }

    #[test]
    fn thermal_state_is_bath_fixed_point() {
        let p = policy(30);
        let bath = BathParams::new(0.7, 0.4).unwrap();
        let rho = DensityMatrix::thermal(0.4, &p).unwrap();
        assert!(dissipator_apply(rho.matrix(), &bath).camax() < 1e-12);
    }

    #[test]
    fn dissipator_is_traceless() {
        let bath = BathParams::new(1.3, 0.25).unwrap();
        for seed in 0..5 {
            let rho = random_hermitian(20, seed);
            assert!(dissipator_apply(&rho, &bath).trace().norm() < 1e-13);
        }
    }

    #[test]
    fn single_photon_decay_by_hand() {
        let p = policy(6);
        let bath = BathParams::new(2.0, 0.0).unwrap();
        let out = dissipator_apply(DensityMatrix::fock(1, &p).unwrap().matrix(), &bath);
        let mut expect = CMatrix::zeros(6, 6);
        expect[(0, 0)] = C64::from(2.0);
        expect[(1, 1)] = C64::from(-2.0);
        assert!((out - expect).camax() < 1e-15);
    }

    #[test]
    fn generator_matches_direct_action() {
        let p = policy(9);
        let atom = AtomState::new(0.3, 0.7, C64::new(0.2, -0.1)).unwrap();
        let params = MaserParams::new(1.0, 0.4, 0.8, BathParams::new(0.3, 0.2).unwrap()).unwrap();
        let g = build_generator(&params, &atom, &p).unwrap();
        let map = InjectionMap::new(atom, 0.4, &p).unwrap();
        let rho = random_hermitian(9, 3) + CMatrix::from_fn(9, 9, |i, j| I * (i as f64 - j as f64) * 0.01);
        let expect = (map.act(&rho) - &rho) * C64::from(0.8) + dissipator_apply(&rho, params.bath());
        assert!((g.apply(&rho) - expect).camax() < 1e-12);
    }

    #[test]
    fn generator_limits() {
        let p = policy(7);
        let atom = thermal_atom(1.0, 1.0).unwrap();
        let bath = BathParams::new(0.5, 0.1).unwrap();
        let no_atoms = MaserParams::new(1.0, 0.3, 0.0, bath).unwrap();
        let g = build_generator(&no_atoms, &atom, &p).unwrap();
        assert!((g.to_dense() - dissipator_generator(&bath, &p).to_dense()).camax() < 1e-15);

        let frozen = MaserParams::new(1.0, 0.0, 0.5, BathParams::new(0.0, 0.1).unwrap()).unwrap();
        assert!(build_generator(&frozen, &atom, &p).unwrap().is_zero());
    }

    #[test]
    fn trace_row_vanishes_off_the_edge() {
        let dim = 8;
        let p = policy(dim);
        let atom = AtomState::new(0.4, 0.6, C64::new(0.1, 0.2)).unwrap();
        let params = MaserParams::new(1.0, 0.3, 1.0, BathParams::new(0.2, 0.3).unwrap()).unwrap();
        let row = build_generator(&params, &atom, &p).unwrap().trace_row();
        for col in 0..dim * dim {
            let (m, n) = (col % dim, col / dim);
            if m < dim - 1 && n < dim - 1 {
                assert!(row[col].norm() < 1e-14);
            }
        }
    }

    #[test]
    fn steady_state_without_atoms_is_the_bath() {
        let p = policy(20);
        let params = MaserParams::new(1.0, 0.2, 0.0, BathParams::new(1e-3, 0.3).unwrap()).unwrap();
        let g = build_generator(&params, &thermal_atom(2.0, 1.0).unwrap(), &p).unwrap();
        for backend in [SolverBackend::Banded, SolverBackend::Dense] {
            let rho = steady_state_with(&g, &p, backend).unwrap();
            let thermal = DensityMatrix::thermal(0.3, &p).unwrap();
            assert!((rho.matrix() - thermal.matrix()).camax() < 1e-12, "{backend:?}");
            assert!((mean_photon(&rho) - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn backends_agree_with_coherent_atoms() {
        let p = policy(20);
        let atom = AtomState::new(0.2, 0.8, C64::new(0.25, 0.1)).unwrap();
        let params = MaserParams::new(1.0, 0.3, 1.0, BathParams::new(0.5, 0.1).unwrap()).unwrap();
        let g = build_generator(&params, &atom, &p).unwrap();
        let a = steady_state_with(&g, &p, SolverBackend::Banded).unwrap();
        let b = steady_state_with(&g, &p, SolverBackend::Dense).unwrap();
        assert!((a.matrix() - b.matrix()).camax() < 1e-11);
        assert!(mean_field(a.matrix()).norm() > 1e-3);
    }

    #[test]
    fn degenerate_kernels_are_reported() {
        let p = policy(8);
        let zero = GeneratorMatrix::zero(8);
        assert!(matches!(steady_state(&zero, &p), Err(Error::DegenerateKernel(_))));
        assert!(matches!(steady_state_with(&zero, &p, SolverBackend::Dense), Err(Error::DegenerateKernel(_))));
        // g tau = pi makes sin(g tau sqrt(1)) vanish: |0> and |1> stop talking.
        let trap = MaserParams::new(1.0, std::f64::consts::PI, 1.0, BathParams::new(0.0, 0.0).unwrap()).unwrap();
        let g = build_generator(&trap, &thermal_atom(1.0, 1.0).unwrap(), &p).unwrap();
        assert!(kernel_gap(&g) < KERNEL_GAP_TOL);
        assert!(matches!(steady_state(&g, &p), Err(Error::DegenerateKernel(_))));
        assert!(matches!(steady_state_with(&g, &p, SolverBackend::Dense), Err(Error::DegenerateKernel(_))));
    }

    #[test]
    fn fit_recovers_boltzmann() {
        let beta = 1.7;
        let raw: Vec<f64> = (0..12).map(|n| (-beta * n as f64).exp()).collect();
        let z: f64 = raw.iter().sum();
        let p = PopulationVector::new(raw.iter().map(|x| x / z).collect()).unwrap();
        let fit = effective_beta_fit(&p, 1.0, None).unwrap();
        assert!((fit.beta_eff - beta).abs() < 1e-12);
        assert!(fit.residual <= 1e-12);

        let flat = PopulationVector::new(vec![0.25; 4]).unwrap();
        assert_eq!(effective_beta_fit(&flat, 1.0, None).unwrap().beta_eff, 0.0);

        let holes = PopulationVector::new(vec![0.5, 0.0, 0.5]).unwrap();
        assert!(matches!(
            effective_beta_fit(&holes, 1.0, Some((0, 2))),
            Err(Error::NonPositivePopulation { index: 1, .. })
        ));
    }

    #[test]
    fn evolve_with_zero_generator_is_static() {
        let p = policy(14);
        let rho = DensityMatrix::coherent(C64::new(0.3, 0.2), &p).unwrap();
        let ev = evolve_with(&rho, &GeneratorMatrix::zero(14), EvolveOptions { t_final: Some(5.0), dt: Some(0.5), samples: 4 }, &p).unwrap();
        assert_eq!(ev.state, rho);
        assert_eq!(ev.samples.len(), 4);
    }

    #[test]
    fn amplitude_damping_law() {
        let p = policy(8);
        let kappa = 0.5;
        let params = MaserParams::new(1.0, 0.1, 0.0, BathParams::new(kappa, 0.0).unwrap()).unwrap();
        let rho0 = DensityMatrix::fock(2, &p).unwrap();
        let ev = evolve(&rho0, &params, &thermal_atom(1.0, 1.0).unwrap(), EvolveOptions { t_final: Some(6.0), dt: None, samples: 13 }, &p).unwrap();
        for s in &ev.samples {
            assert!((s.mean_photon - 2.0 * (-kappa * s.time).exp()).abs() < 1e-6, "{s:?}");
        }
        assert!((ev.samples.last().unwrap().time - 6.0).abs() < 1e-12);
    }

    #[test]
    fn long_evolution_reaches_the_steady_state() {
        let p = policy(24);
        let params = fig2(0.05);
        let atom = thermal_atom(2.898, 1.0).unwrap();
        let g = build_generator(&params, &atom, &p).unwrap();
        let ss = steady_state(&g, &p).unwrap();
        let rho0 = DensityMatrix::thermal(0.3, &p).unwrap();
        let ev = evolve_with(&rho0, &g, EvolveOptions { samples: 50, ..Default::default() }, &p).unwrap();
        assert!(ev.state.trace_distance(&ss) < 1e-8, "{}", ev.state.trace_distance(&ss));
        for s in &ev.samples {
            assert!((s.trace - 1.0).abs() <= 1e-8);
            assert!(s.min_eigenvalue >= -1e-8);
        }
    }

    #[test]
    fn relaxation_is_monotone_for_diagonal_states() {
        let p = policy(24);
        let params = MaserParams::new(1.0, 0.3, 1.0, BathParams::new(0.2, 0.1).unwrap()).unwrap();
        let atom = thermal_atom(1.5, 1.0).unwrap();
        let g = build_generator(&params, &atom, &p).unwrap();
        let ss = steady_state(&g, &p).unwrap();
        let mut rho = DensityMatrix::fock(3, &p).unwrap();
        let mut last = rho.trace_distance(&ss);
        for _ in 0..20 {
            rho = evolve_with(&rho, &g, EvolveOptions { t_final: Some(0.5), dt: Some(0.01), samples: 2 }, &p).unwrap().state;
            let off = rho.matrix().iter().enumerate().filter(|(k, _)| k % 25 != 0).map(|(_, z)| z.norm()).fold(0.0, f64::max);
            assert!(off <= 1e-12);
            let d = rho.trace_distance(&ss);
            assert!(d <= last + 1e-14);
            last = d;
        }
    }

    #[test]
    fn steady_state_survives_one_cycle() {
        // One transit followed by 1/r of bath-only evolution.
        let p = policy(14);
        let bath = BathParams::new(1e-6, bose_occupation(4.797, 1.0)).unwrap();
        let params = MaserParams::new(1.0, 0.05, 2e-4, bath).unwrap();
        let atom = thermal_atom(2.898, 1.0).unwrap();
        let ss = steady_state(&build_generator(&params, &atom, &p).unwrap(), &p).unwrap();
        let kicked = InjectionMap::new(atom, 0.05, &p).unwrap().apply(&ss).unwrap();
        let relaxed = evolve_with(
            &kicked,
            &dissipator_generator(&bath, &p),
            EvolveOptions { t_final: Some(1.0 / params.r()), dt: Some(10.0), samples: 2 },
            &p,
        )
        .unwrap()
        .state;
        assert!(relaxed.trace_distance(&ss) < 1e-6);
    }

    #[test]
    fn coarse_graining_warning() {
        let bath = BathParams::new(0.1, 0.0).unwrap();
        assert!(MaserParams::with_coupling(1.0, 0.05, 1.0, 0.01, bath).unwrap().warnings().is_empty());
        assert_eq!(MaserParams::with_coupling(1.0, 0.05, 1.0, 0.5, bath).unwrap().warnings().len(), 1);
    }
}
