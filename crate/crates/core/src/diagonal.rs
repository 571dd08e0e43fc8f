//! Photon-number dynamics for atoms without coherence.

use crate::error::{Error, Result};
use crate::fock::TruncationPolicy;
use crate::master::{two_rate_dissipator, GeneratorMatrix, MaserParams};

const POPULATION_TOL: f64 = 1e-10;

/// Diagonal `P_n = <n|rho|n>` of a field state.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationVector(Vec<f64>);

impl PopulationVector {
    /// Accepts entries down to `-1e-10` (solver noise) and clamps them to zero.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("empty population vector".into()));
        }
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, &x)| !(x >= -POPULATION_TOL)) {
            return Err(Error::NonPositivePopulation { index, value });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > POPULATION_TOL {
            return Err(Error::TraceViolation((sum - 1.0).abs()));
        }
        Ok(Self(p.into_iter().map(|x| x.max(0.0)).collect()))
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}")));
        }
        Self::new(w.iter().map(|x| x / sum).collect())
    }

    /// Boltzmann distribution `P_n ~ e^{-beta omega n}` on `dim` levels.
    pub fn boltzmann(beta: f64, omega: f64, dim: usize) -> Result<Self> {
        let log_w: Vec<f64> = (0..dim).map(|n| -beta * omega * n as f64).collect();
        Self::from_log_weights(&log_w)
    }

    fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + log_w.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Self::new(log_w.iter().map(|l| (l - lse).exp()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn sin2(g_tau: f64, n: usize) -> f64 {
    (g_tau * (n as f64).sqrt()).sin().powi(2)
}

/// Time derivative of the populations under injection and cavity loss.
///
/// Matches the truncated generator: no bath excitation out of the top level,
/// while an atom can still deposit a quantum there (that probability leaks).
pub fn diagonal_rhs(p: &PopulationVector, params: &MaserParams, p_e: f64, p_g: f64) -> Vec<f64> {
    let p = p.as_slice();
    let dim = p.len();
    let (r, kappa, nth, gt) = (params.r(), params.kappa(), params.n_th(), params.g_tau());
    (0..dim)
        .map(|n| {
            let nf = n as f64;
            let s_n = sin2(gt, n);
            let s_up = sin2(gt, n + 1);
            let mut d = -r * (p_e * s_up + p_g * s_n) * p[n];
            d -= kappa * (nth + 1.0) * nf * p[n];
            if n + 1 < dim {
                d -= kappa * nth * (nf + 1.0) * p[n];
                d += r * p_g * s_up * p[n + 1] + kappa * (nth + 1.0) * (nf + 1.0) * p[n + 1];
            }
            if n > 0 {
                d += r * p_e * s_n * p[n - 1] + kappa * nth * nf * p[n - 1];
            }
            d
        })
        .collect()
}

/// `R_n = P_n / P_{n-1}` in the steady state.
pub fn ratio_rn(n: usize, params: &MaserParams, p_e: f64, p_g: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("R_n needs n >= 1".into()));
    }
    let s = sin2(params.g_tau(), n);
    let (r, kappa, nth) = (params.r(), params.kappa(), params.n_th());
    let nf = n as f64;
    let num = r * p_e * s + kappa * nth * nf;
    let den = r * p_g * s + kappa * (nth + 1.0) * nf;
    if den == 0.0 {
        return Err(Error::DivisionByZero("R_n denominator"));
    }
    Ok(num / den)
}

/// Steady populations from `P_n = P_0 prod_{l<=n} R_l`, accumulated in logs.
pub fn steady_populations_detailed_balance(
    params: &MaserParams,
    p_e: f64,
    p_g: f64,
    policy: &TruncationPolicy,
) -> Result<PopulationVector> {
    let dim = policy.dim();
    let ratios: Vec<f64> = (1..dim).map(|n| ratio_rn(n, params, p_e, p_g)).collect::<Result<_>>()?;
    let quartile = &ratios[(3 * (dim - 1)) / 4..];
    if !quartile.is_empty() && quartile.iter().all(|&x| x > 1.0) {
        return Err(Error::DivergentDistribution(*ratios.last().unwrap()));
    }
    let mut log_w = Vec::with_capacity(dim);
    log_w.push(0.0);
    for r in &ratios {
        log_w.push(log_w.last().unwrap() + r.ln());
    }
    let p = PopulationVector::from_log_weights(&log_w)?;
    let tail = policy.tail_mass(p.as_slice().iter().copied());
    if tail > policy.tail_tol() {
        return Err(Error::TruncationOverflow(tail));
    }
    Ok(p)
}

/// Index-independent ratio `(alpha p_e + kappa n) / (alpha p_g + kappa (n + 1))`
/// that the `R_n` approach for short transits.
pub fn smalltau_ratio(params: &MaserParams, p_e: f64, p_g: f64) -> Result<f64> {
    let alpha = params.alpha();
    let (kappa, nth) = (params.kappa(), params.n_th());
    let den = alpha * p_g + kappa * (nth + 1.0);
    if !(den > 0.0) {
        return Err(Error::DivisionByZero("short-transit ratio denominator"));
    }
    Ok((alpha * p_e + kappa * nth) / den)
}

/// `-(1/omega) ln R` for the short-transit ratio.
pub fn beta_eff_smalltau(params: &MaserParams, p_e: f64, p_g: f64) -> Result<f64> {
    Ok(-smalltau_ratio(params, p_e, p_g)?.ln() / params.omega())
}

/// Strict betweenness `min(beta, beta_b) < beta_eff < max(beta, beta_b)`.
pub fn beta_bound_check(beta_eff: f64, beta: f64, beta_b: f64) -> bool {
    beta.min(beta_b) < beta_eff && beta_eff < beta.max(beta_b)
}

/// Rates of the short-transit lossless generator: atoms emit into the cavity
/// at `alpha p_e` and absorb at `alpha p_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallTauRates {
    pub up: f64,
    pub down: f64,
}

impl SmallTauRates {
    pub fn generator(&self, policy: &TruncationPolicy) -> GeneratorMatrix {
        two_rate_dissipator(self.down, self.up, policy)
    }
}

pub fn smalltau_generator_kappa0(params: &MaserParams, p_e: f64, p_g: f64) -> SmallTauRates {
    let alpha = params.alpha();
    SmallTauRates { up: alpha * p_e, down: alpha * p_g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{DensityMatrix, C64};
    use crate::master::{build_generator, steady_state};
    use crate::reservoir::{bose_occupation, thermal_atom, AtomState, BathParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn params(g_tau: f64, r: f64, kappa: f64, nth: f64) -> MaserParams {
        MaserParams::new(1.0, g_tau, r, BathParams::new(kappa, nth).unwrap()).unwrap()
    }

    fn fig2(g_tau: f64) -> MaserParams {
        params(g_tau, 2e-4, 1e-4, bose_occupation(4.797, 1.0))
    }

    fn policy(dim: usize) -> TruncationPolicy {
        TruncationPolicy::with_dim(dim).unwrap()
    }

    fn lossless_birth_death(p_e: f64, p_g: f64, dim: usize) -> f64 {
        // Sum of d/dt P_n for a lossless birth-death chain with edge leak.
        let prm = params(0.4, 1.0, 0.0, 0.0);
        let flat = PopulationVector::new(vec![1.0 / dim as f64; dim]).unwrap();
        diagonal_rhs(&flat, &prm, p_e, p_g).iter().sum()
    }

    #[test]
    fn rhs_conserves_probability_off_the_edge() {
        let prm = params(0.3, 0.7, 0.2, 0.3);
        let mut w: Vec<f64> = (0..20).map(|n| (-0.9 * n as f64).exp()).collect();
        w[19] = 0.0;
        let p = PopulationVector::from_weights(&w).unwrap();
        let total: f64 = diagonal_rhs(&p, &prm, 0.3, 0.7).iter().sum();
        // Only the atom leak out of level 18 -> 19 is nonzero here, and it is internal.
        assert!(total.abs() < 1e-13, "{total}");
        // A flat distribution leaks at the top through the atoms.
        let leak = lossless_birth_death(0.3, 0.7, 10);
        assert!((leak + 0.3 * (0.4f64 * 10f64.sqrt()).sin().powi(2) / 10.0).abs() < 1e-14);
    }

    #[test]
    fn detailed_balance_is_a_fixed_point() {
        let atom = thermal_atom(2.898, 1.0).unwrap();
        for (prm, dim) in [(fig2(0.05), 30), (fig2(0.3), 30), (params(0.7, 1.0, 0.5, 0.4), 40)] {
            let p = steady_populations_detailed_balance(&prm, atom.p_e(), atom.p_g(), &policy(dim)).unwrap();
            let rhs = diagonal_rhs(&p, &prm, atom.p_e(), atom.p_g());
            assert!(rhs.iter().all(|x| x.abs() < 1e-12), "{rhs:?}");
        }
    }

    #[test]
    fn bath_alone_keeps_boltzmann() {
        let prm = params(0.2, 0.0, 0.3, bose_occupation(1.2, 1.0));
        let p = PopulationVector::boltzmann(1.2, 1.0, 30).unwrap();
        assert!(diagonal_rhs(&p, &prm, 0.1, 0.9).iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn rhs_is_the_generator_diagonal() {
        let dim = 25;
        let prm = params(0.35, 0.8, 0.3, 0.2);
        let atom = AtomState::new(0.35, 0.65, C64::new(0.0, 0.0)).unwrap();
        let g = build_generator(&prm, &atom, &policy(dim)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let w: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let p = PopulationVector::from_weights(&w).unwrap();
        let rho = DensityMatrix::from_populations(p.as_slice(), &TruncationPolicy::new(dim, 0, 0.5).unwrap()).unwrap();
        let full = g.apply(rho.matrix());
        let rhs = diagonal_rhs(&p, &prm, atom.p_e(), atom.p_g());
        for n in 0..dim {
            assert!((full[(n, n)].re - rhs[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn lossless_ratio_is_the_atom_ratio() {
        let prm = params(0.37, 1.0, 0.0, 0.0);
        let atom = thermal_atom(1.3, 1.0).unwrap();
        for n in 1..30 {
            let r = ratio_rn(n, &prm, atom.p_e(), atom.p_g()).unwrap();
            assert!((r - (-1.3f64).exp()).abs() < 1e-14);
        }
        assert!(matches!(ratio_rn(3, &prm, 1.0, 0.0), Err(Error::DivisionByZero(_))));
        assert!(ratio_rn(0, &prm, 0.5, 0.5).is_err());
    }

    #[test]
    fn fig2_ratios_are_flat_for_short_transits() {
        let atom = thermal_atom(2.898, 1.0).unwrap();
        let prm = fig2(0.05);
        let rs = smalltau_ratio(&prm, atom.p_e(), atom.p_g()).unwrap();
        for n in 1..=20 {
            let r = ratio_rn(n, &prm, atom.p_e(), atom.p_g()).unwrap();
            assert!((r - rs).abs() / rs <= 0.02, "n = {n}: {r} vs {rs}");
        }
    }

    #[test]
    fn short_transit_limit_is_monotone() {
        let atom = thermal_atom(2.898, 1.0).unwrap();
        let dev = |gt: f64| {
            let prm = fig2(gt);
            let rs = smalltau_ratio(&prm, atom.p_e(), atom.p_g()).unwrap();
            (1..=20).map(|n| (ratio_rn(n, &prm, atom.p_e(), atom.p_g()).unwrap() / rs - 1.0).abs()).fold(0.0, f64::max)
        };
        let d: Vec<f64> = [0.05, 0.02, 0.01].iter().map(|&g| dev(g)).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn cooling_and_maser_products() {
        let dim = 30;
        let (gt, r, kappa, nth) = (0.4, 0.5, 0.2, 0.3);
        let prm = params(gt, r, kappa, nth);
        let s = |l: usize| (gt * (l as f64).sqrt()).sin().powi(2);

        let cool = steady_populations_detailed_balance(&prm, 0.0, 1.0, &policy(dim)).unwrap();
        let mut w = vec![1.0];
        for l in 1..dim {
            let lf = l as f64;
            w.push(w[l - 1] * nth * lf / ((nth + 1.0) * lf + s(l) * r / kappa));
        }
        let expect = PopulationVector::from_weights(&w).unwrap();
        for n in 0..dim {
            assert!((cool.as_slice()[n] - expect.as_slice()[n]).abs() <= 1e-12 * expect.as_slice()[n].max(1e-300));
        }
        assert!(cool.mean() < nth);

        let maser_prm = params(gt, 0.05, kappa, nth);
        let maser = steady_populations_detailed_balance(&maser_prm, 1.0, 0.0, &policy(dim)).unwrap();
        let mut w = vec![1.0];
        for l in 1..dim {
            let lf = l as f64;
            w.push(w[l - 1] * (s(l) * 0.05 / kappa + nth * lf) / ((nth + 1.0) * lf));
        }
        let expect = PopulationVector::from_weights(&w).unwrap();
        for n in 0..dim {
            assert!((maser.as_slice()[n] - expect.as_slice()[n]).abs() <= 1e-12 * expect.as_slice()[n].max(1e-300));
        }
        assert!(maser.mean() > nth);
    }

    #[test]
    fn overflow_and_divergence() {
        // Lossless excited atoms: R_n = infinity-like growth is reported.
        let strong = params(0.3, 10.0, 1e-3, 0.0);
        assert!(matches!(
            steady_populations_detailed_balance(&strong, 1.0, 0.0, &policy(20)),
            Err(Error::DivergentDistribution(_))
        ));
        // A hot bath pushes mass into the guard band.
        let hot = params(0.3, 0.0, 1.0, 5.0);
        assert!(matches!(
            steady_populations_detailed_balance(&hot, 0.1, 0.9, &policy(20)),
            Err(Error::TruncationOverflow(_))
        ));
    }

    #[test]
    fn matches_null_space_diagonal() {
        let dim = 30;
        let p = policy(dim);
        let atom = thermal_atom(2.898, 1.0).unwrap();
        for gt in [0.05, 0.3] {
            let prm = fig2(gt);
            let db = steady_populations_detailed_balance(&prm, atom.p_e(), atom.p_g(), &p).unwrap();
            let ss = steady_state(&build_generator(&prm, &atom, &p).unwrap(), &p).unwrap();
            for (a, b) in db.as_slice().iter().zip(ss.diagonal()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn effective_temperature_at_reference_parameters() {
        let atom = thermal_atom(2.898, 1.0).unwrap();
        let beta = beta_eff_smalltau(&fig2(0.05), atom.p_e(), atom.p_g()).unwrap();
        assert!((4.76..=4.79).contains(&beta), "{beta}");
        assert!(beta_bound_check(beta, 2.898, 4.797));
        assert!(beta_bound_check(4.77, 2.898, 4.797));
        assert!(!beta_bound_check(5.0, 2.898, 4.797));
    }

    #[test]
    fn effective_temperature_limits() {
        let atom = thermal_atom(2.0, 1.0).unwrap();
        let lossless = params(0.05, 2e-4, 0.0, 0.0);
        assert!((beta_eff_smalltau(&lossless, atom.p_e(), atom.p_g()).unwrap() - 2.0).abs() < 1e-12);
        let no_atoms = params(0.05, 0.0, 1e-4, bose_occupation(3.5, 1.0));
        assert!((beta_eff_smalltau(&no_atoms, atom.p_e(), atom.p_g()).unwrap() - 3.5).abs() < 1e-12);
        // Atoms at the bath temperature leave it unchanged.
        let same = params(0.05, 2e-4, 1e-4, bose_occupation(2.0, 1.0));
        assert!((beta_eff_smalltau(&same, atom.p_e(), atom.p_g()).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn lossless_short_transit_generator() {
        let prm = fig2(0.05);
        let rates = smalltau_generator_kappa0(&prm, 0.2, 0.8);
        assert!((rates.up + rates.down - 5e-7).abs() < 1e-20);
        let atom = thermal_atom(2.898, 1.0).unwrap();
        let rates = smalltau_generator_kappa0(&prm, atom.p_e(), atom.p_g());
        assert!((rates.up / rates.down - (-2.898f64).exp()).abs() < 1e-14);
        let p = policy(30);
        let ss = steady_state(&rates.generator(&p), &p).unwrap();
        let boltz = PopulationVector::boltzmann(2.898, 1.0, 30).unwrap();
        for (a, b) in ss.diagonal().iter().zip(boltz.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bound_holds_for_thermal_atoms(beta in 0.3f64..6.0, beta_b in 0.3f64..6.0, r in 1e-5f64..1e-2, kappa in 1e-5f64..1e-2) {
            prop_assume!((beta - beta_b).abs() > 1e-3);
            let atom = thermal_atom(beta, 1.0).unwrap();
            let prm = params(0.05, r, kappa, bose_occupation(beta_b, 1.0));
            let b = beta_eff_smalltau(&prm, atom.p_e(), atom.p_g()).unwrap();
            prop_assert!(beta_bound_check(b, beta, beta_b));
        }

        #[test]
        fn atoms_heat_or_cool_towards_their_temperature(r in 1e-3f64..1.0, gt in 0.05f64..1.0) {
            let kappa = 0.1;
            let nth = 0.2;
            let cool = steady_populations_detailed_balance(&params(gt, r, kappa, nth), 0.0, 1.0, &policy(40)).unwrap();
            prop_assert!(cool.mean() < nth);
            let warm = steady_populations_detailed_balance(&params(gt, r.min(0.01), kappa, nth), 1.0, 0.0, &policy(40)).unwrap();
            prop_assert!(warm.mean() > nth);
        }
    }
}
