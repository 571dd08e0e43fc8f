//! Short-transit dynamics with coherent atoms: a weak classical drive on
//! top of the effective two-rate bath.

use log::warn;

use crate::error::{Error, Result, Warning};
use crate::fock::{ladder_ops, CMatrix, TruncationPolicy, C64, I};
use crate::master::{two_rate_dissipator, GeneratorMatrix, MaserParams};
use crate::reservoir::AtomState;
use crate::sparse::{nonzeros, push_sandwich, SparseMatrix};

/// Drive amplitude and the two incoherent rates of the reduced dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentRates {
    /// `xi = r g tau lambda`.
    pub xi: C64,
    /// Rate of excitation into the cavity, `alpha p_e + kappa n_th`.
    pub gamma1: f64,
    /// Rate of loss from the cavity, `alpha p_g + kappa (n_th + 1)`.
    pub gamma2: f64,
}

impl CoherentRates {
    /// `gamma2 - gamma1`, the decay rate of the mean field times two.
    pub fn damping(&self) -> f64 {
        self.gamma2 - self.gamma1
    }

    pub fn is_stable(&self) -> bool {
        self.gamma2 > self.gamma1
    }
}

pub fn coherent_rates(params: &MaserParams, atom: &AtomState) -> CoherentRates {
    let alpha = params.alpha();
    let (kappa, nth) = (params.kappa(), params.n_th());
    CoherentRates {
        xi: atom.lambda() * (params.r() * params.g_tau()),
        gamma1: alpha * atom.p_e() + kappa * nth,
        gamma2: alpha * atom.p_g() + kappa * (nth + 1.0),
    }
}

/// `g tau sqrt(dim)` above which the reduced generator is flagged.
pub const SHORT_TIME_LIMIT: f64 = 0.5;

/// Generator of `d rho/dt = i [rho, H] + J rho` with `H = xi a^dag + xi* a`
/// and `J` the two-rate dissipator with rates `gamma2` (down), `gamma1` (up).
pub fn reduced_generator(
    params: &MaserParams,
    atom: &AtomState,
    policy: &TruncationPolicy,
) -> (GeneratorMatrix, Vec<Warning>) {
    let dim = policy.dim();
    let mut warnings = Vec::new();
    let stretch = params.g_tau() * (dim as f64).sqrt();
    if stretch > SHORT_TIME_LIMIT {
        let w = Warning::ShortTime { g_tau_sqrt_dim: stretch };
        warn!("{w:?}");
        warnings.push(w);
    }
    let rates = coherent_rates(params, atom);
    let dissipator = two_rate_dissipator(rates.gamma2, rates.gamma1, policy);
    if rates.xi == C64::new(0.0, 0.0) {
        return (dissipator, warnings);
    }
    let (a, a_dag) = ladder_ops(policy);
    let h: CMatrix = a_dag.matrix() * rates.xi + a.matrix() * rates.xi.conj();
    let h = nonzeros(&h);
    let id = nonzeros(&CMatrix::identity(dim, dim));
    let mut t = Vec::new();
    // i (rho H - H rho)
    push_sandwich(&mut t, I, &id, &h, dim);
    push_sandwich(&mut t, -I, &h, &id, dim);
    let drive = GeneratorMatrix::from_sparse(dim, SparseMatrix::from_triplets(dim * dim, t))
        .expect("drive has the generator size");
    (drive.add(&dissipator), warnings)
}

/// Right-hand side of the closed equations for `<a>` and `<n>`.
pub fn moment_rhs(a_mean: C64, n_mean: f64, rates: &CoherentRates) -> (C64, f64) {
    let d = rates.damping();
    let xi = rates.xi;
    let da = -0.5 * d * a_mean - I * xi;
    let dn = -d * n_mean + (-I * xi * a_mean.conj() + I * xi.conj() * a_mean).re + rates.gamma1;
    (da, dn)
}

/// Fixed point `(<a>, <n>)` of [`moment_rhs`].
pub fn steady_moments(rates: &CoherentRates) -> Result<(C64, f64)> {
    let d = rates.damping();
    if !(d > 0.0) {
        return Err(Error::UnstableDynamics(d));
    }
    let a = -2.0 * I * rates.xi / d;
    let n = 4.0 * rates.xi.norm_sqr() / (d * d) + rates.gamma1 / d;
    Ok((a, n))
}

/// Exact solution of the moment equations from `(a0, n0)` at time `t`.
pub fn moments_at(a0: C64, n0: f64, rates: &CoherentRates, t: f64) -> Result<(C64, f64)> {
    let d = rates.damping();
    let (a_ss, n_ss) = steady_moments(rates)?;
    let half = (-0.5 * d * t).exp();
    let a = a_ss + (a0 - a_ss) * half;
    // <n> relaxes at rate d, driven by the field terms decaying at d/2.
    let xi = rates.xi;
    let f1 = 2.0 * (I * xi.conj() * (a0 - a_ss)).re;
    let c = 2.0 * f1 / d;
    let b = n0 - n_ss - c;
    let n = n_ss + b * (-d * t).exp() + c * half;
    Ok((a, n))
}
