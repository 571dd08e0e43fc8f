//! Charge qubit coupled to a transmission-line resonator, reduced to the
//! resonant two-level model. Device quantities go in as SI and come out in
//! angular frequency; nothing else in the crate sees SI units.

use std::f64::consts::PI;

use log::warn;

use crate::error::{Error, Result, Warning};
use crate::fock::{validate_density, CMatrix, DensityMatrix, TruncationPolicy};
use crate::injection::trace_out_atom;

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Superconducting flux quantum `h / 2e`, Wb.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Device description. `e_j` and `omega_res` are angular frequencies
/// (rad/s), capacitances in farads, lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    pub e_j: f64,
    pub c_g: f64,
    pub c_sigma: f64,
    pub length: f64,
    pub c_per_len: f64,
    pub phi0: f64,
    pub omega_res: f64,
}

impl DeviceParams {
    pub fn new(e_j: f64, c_g: f64, c_sigma: f64, length: f64, c_per_len: f64, omega_res: f64) -> Result<Self> {
        let d = Self { e_j, c_g, c_sigma, length, c_per_len, phi0: FLUX_QUANTUM, omega_res };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("E_J", self.e_j),
            ("C_g", self.c_g),
            ("C_sigma", self.c_sigma),
            ("length", self.length),
            ("c_per_len", self.c_per_len),
            ("phi0", self.phi0),
            ("omega_res", self.omega_res),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v}")));
            }
        }
        if self.c_g > self.c_sigma {
            return Err(Error::InvalidParameter(format!("C_g = {} exceeds C_sigma = {}", self.c_g, self.c_sigma)));
        }
        Ok(())
    }

    /// Total resonator capacitance `L c`.
    pub fn resonator_capacitance(&self) -> f64 {
        self.length * self.c_per_len
    }
}

/// `omega_0 = 2 E_J cos(pi Phi / Phi0)`; negative splittings are flagged.
pub fn qubit_splitting(e_j: f64, phi: f64, phi0: f64) -> (f64, Option<Warning>) {
    let omega0 = 2.0 * e_j * (PI * phi / phi0).cos();
    let warning = (omega0 < 0.0).then(|| {
        let w = Warning::NegativeSplitting { omega0 };
        warn!("{w:?}");
        w
    });
    (omega0, warning)
}

/// `g = (e / hbar) (C_g / C_sigma) sqrt(hbar omega / (L c))`, the vacuum
/// charge fluctuation of the resonator times the gate lever arm, in rad/s.
pub fn coupling_strength(device: &DeviceParams) -> f64 {
    let v_rms = (HBAR * device.omega_res / device.resonator_capacitance()).sqrt();
    ELEMENTARY_CHARGE / HBAR * (device.c_g / device.c_sigma) * v_rms
}

/// Flux on `[0, Phi0/2]` that tunes the qubit onto the resonator.
pub fn resonance_flux(e_j: f64, omega_res: f64, phi0: f64) -> Result<f64> {
    if omega_res > 2.0 * e_j {
        return Err(Error::Unreachable { omega_res, max: 2.0 * e_j });
    }
    if omega_res < 0.0 {
        return Err(Error::InvalidParameter(format!("omega_res = {omega_res}")));
    }
    Ok(phi0 / PI * (omega_res / (2.0 * e_j)).acos())
}

/// Coupling switched on at `on_times` for `tau`, followed by a qubit reset
/// window `tau_r` and a preparation window `tau_p`. Seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    on_times: Vec<f64>,
    pub tau: f64,
    pub tau_r: f64,
    pub tau_p: f64,
}

impl PulseSchedule {
    pub fn new(on_times: Vec<f64>, tau: f64, tau_r: f64, tau_p: f64) -> Result<Self> {
        if on_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("switch-on times must increase strictly".into()));
        }
        for (name, v) in [("tau", tau), ("tau_r", tau_r), ("tau_p", tau_p)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v}")));
            }
        }
        Ok(Self { on_times, tau, tau_r, tau_p })
    }

    pub fn on_times(&self) -> &[f64] {
        &self.on_times
    }

    /// Time each cycle occupies before the next can start.
    pub fn cycle_length(&self) -> f64 {
        self.tau + self.tau_r + self.tau_p
    }
}

/// Reset window should exceed the coupling window by this factor.
pub const RELAXATION_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    /// `(gap, fits)` for each consecutive pair of switch-on times.
    pub gaps: Vec<(f64, bool)>,
    pub min_gap: Option<f64>,
    /// Every gap accommodates a full cycle.
    pub gaps_ok: bool,
    pub ratio: f64,
    pub warnings: Vec<Warning>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.gaps_ok
    }
}

pub fn validate_schedule(schedule: &PulseSchedule) -> ScheduleReport {
    let need = schedule.cycle_length();
    let gaps: Vec<(f64, bool)> = schedule.on_times.windows(2).map(|w| (w[1] - w[0], w[1] - w[0] >= need)).collect();
    let min_gap = gaps.iter().map(|g| g.0).reduce(f64::min);
    let gaps_ok = gaps.iter().all(|g| g.1);
    let ratio = schedule.tau_r / schedule.tau;
    let mut warnings = Vec::new();
    if !(ratio >= RELAXATION_RATIO) {
        let w = Warning::RelaxationRatio { ratio };
        warn!("{w:?}");
        warnings.push(w);
    }
    ScheduleReport { gaps, min_gap, gaps_ok, ratio, warnings }
}

/// Qubit relaxation after a coupling window: the qubit ends in `|g>` and the
/// field keeps its marginal. Returns the field state and the qubit projector
/// `|g><g|` in the `{|e>, |g>}` basis.
pub fn reset_channel(joint: &CMatrix, policy: &TruncationPolicy) -> Result<(DensityMatrix, CMatrix)> {
    if joint.nrows() != 2 * policy.dim() || joint.ncols() != 2 * policy.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0}", 2 * policy.dim()),
            got: format!("{}x{}", joint.nrows(), joint.ncols()),
        });
    }
    let field = validate_density(trace_out_atom(joint)?, policy)?;
    let mut ground = CMatrix::zeros(2, 2);
    ground[(1, 1)] = crate::fock::ONE;
    Ok((field, ground))
}

/// Dimensionless `beta omega = h f / (k_B T)` for a mode at `f_ghz` GHz and
/// a temperature of `t_mk` mK.
pub fn si_temperature_to_beta(t_mk: f64, f_ghz: f64) -> Result<f64> {
    if !(t_mk > 0.0 && f_ghz > 0.0) {
        return Err(Error::InvalidParameter(format!("T = {t_mk} mK, f = {f_ghz} GHz")));
    }
    Ok(PLANCK * f_ghz * 1e9 / (BOLTZMANN * t_mk * 1e-3))
}
