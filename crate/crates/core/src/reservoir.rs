//! Prepared two-level systems and the thermal bath of the cavity.

use log::warn;
use nalgebra::Matrix2;

use crate::error::{Error, Result, Warning};
use crate::fock::C64;

const POPULATION_TOL: f64 = 1e-12;

/// State `p_e |e><e| + p_g |g><g| + lambda |e><g| + lambda* |g><e|` of each
/// injected two-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    p_e: f64,
    p_g: f64,
    lambda: C64,
}

impl AtomState {
    pub fn new(p_e: f64, p_g: f64, lambda: C64) -> Result<Self> {
        for (name, p) in [("p_e", p_e), ("p_g", p_g)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if (p_e + p_g - 1.0).abs() > POPULATION_TOL {
            return Err(Error::InvalidParameter(format!("p_e + p_g = {} != 1", p_e + p_g)));
        }
        if !lambda.re.is_finite() || !lambda.im.is_finite() || lambda.norm_sqr() > p_e * p_g + POPULATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "|lambda|^2 = {} exceeds p_e p_g = {}",
                lambda.norm_sqr(),
                p_e * p_g
            )));
        }
        let atom = Self { p_e, p_g, lambda };
        if let Some(w) = atom.inversion() {
            warn!("{w:?}");
        }
        Ok(atom)
    }

    /// Atom with populations `(p_e, 1 - p_e)` and coherence `lambda`.
    pub fn with_excitation(p_e: f64, lambda: C64) -> Result<Self> {
        Self::new(p_e, 1.0 - p_e, lambda)
    }

    pub fn p_e(&self) -> f64 {
        self.p_e
    }

    pub fn p_g(&self) -> f64 {
        self.p_g
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    /// Same populations with a different coherence.
    pub fn with_lambda(&self, lambda: C64) -> Result<Self> {
        Self::new(self.p_e, self.p_g, lambda)
    }

    pub fn is_incoherent(&self) -> bool {
        self.lambda == C64::new(0.0, 0.0)
    }

    pub fn inversion(&self) -> Option<Warning> {
        (self.p_e > self.p_g).then_some(Warning::PopulationInversion { p_e: self.p_e, p_g: self.p_g })
    }

    /// The 2x2 density matrix in the basis `{|e>, |g>}`.
    pub fn matrix(&self) -> Matrix2<C64> {
        Matrix2::new(C64::from(self.p_e), self.lambda, self.lambda.conj(), C64::from(self.p_g))
    }
}

/// Thermal two-level system at inverse temperature `beta` and splitting
/// `omega`: `p_e = 1 / (e^{beta omega} + 1)`.
pub fn thermal_atom(beta: f64, omega: f64) -> Result<AtomState> {
    if !(beta > 0.0 && beta.is_finite() && omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta = {beta}, omega = {omega}")));
    }
    let x = beta * omega;
    // exp(-x) / (1 + exp(-x)) keeps p_e accurate when it is tiny.
    let p_e = (-x).exp() / (1.0 + (-x).exp());
    let p_g = 1.0 / (1.0 + (-x).exp());
    AtomState::new(p_e, p_g, C64::new(0.0, 0.0))
}

pub fn ground_atom() -> AtomState {
    AtomState { p_e: 0.0, p_g: 1.0, lambda: C64::new(0.0, 0.0) }
}

pub fn excited_atom() -> AtomState {
    AtomState { p_e: 1.0, p_g: 0.0, lambda: C64::new(0.0, 0.0) }
}

/// Inverse temperature encoded by the atom populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomTemperature {
    pub beta: f64,
    /// `p_e > p_g`: the temperature is negative.
    pub inverted: bool,
}

/// `-(1/omega) ln(p_e / p_g)`.
pub fn atom_inverse_temperature(atom: &AtomState, omega: f64) -> Result<AtomTemperature> {
    if atom.p_e <= 0.0 || atom.p_g <= 0.0 {
        return Err(Error::DegeneratePopulation { p_e: atom.p_e, p_g: atom.p_g });
    }
    let beta = -(atom.p_e.ln() - atom.p_g.ln()) / omega;
    let inverted = atom.p_e > atom.p_g;
    if inverted {
        warn!("population-inverted atom, beta = {beta}");
    }
    Ok(AtomTemperature { beta, inverted })
}

/// Bose occupation `1 / (e^{beta omega} - 1)`.
pub fn bose_occupation(beta: f64, omega: f64) -> f64 {
    1.0 / (beta * omega).exp_m1()
}

/// Cavity loss channel: decay rate and thermal occupation of the bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    kappa: f64,
    n_th: f64,
    beta_b: Option<f64>,
}

impl BathParams {
    pub fn new(kappa: f64, n_th: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa = {kappa}")));
        }
        if !(n_th >= 0.0 && n_th.is_finite()) {
            return Err(Error::InvalidParameter(format!("n_th = {n_th}")));
        }
        Ok(Self { kappa, n_th, beta_b: None })
    }

    /// Bath at inverse temperature `beta_b`; the occupation is derived.
    pub fn from_beta(kappa: f64, beta_b: f64, omega: f64) -> Result<Self> {
        if !(beta_b > 0.0) {
            return Err(Error::InvalidParameter(format!("beta_b = {beta_b}")));
        }
        Self::with_beta(kappa, bose_occupation(beta_b, omega), beta_b, omega)
    }

    /// Bath carrying both an occupation and an inverse temperature, which must
    /// agree to `1e-6` relative.
    pub fn with_beta(kappa: f64, n_th: f64, beta_b: f64, omega: f64) -> Result<Self> {
        let bath = Self::new(kappa, n_th)?;
        let expected = bose_occupation(beta_b, omega);
        if (n_th - expected).abs() > 1e-6 * n_th {
            return Err(Error::InvalidParameter(format!(
                "n_th = {n_th} inconsistent with beta_b = {beta_b} (expected {expected})"
            )));
        }
        Ok(Self { beta_b: Some(beta_b), ..bath })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn n_th(&self) -> f64 {
        self.n_th
    }

    pub fn beta_b(&self) -> Option<f64> {
        self.beta_b
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        let mut b = Self::new(kappa, self.n_th)?;
        b.beta_b = self.beta_b;
        Ok(b)
    }
}
