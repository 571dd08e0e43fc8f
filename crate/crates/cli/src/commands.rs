//! One function per subcommand, each turning a [`Config`] into a table.

use std::fmt;

use rayon::prelude::*;

use thermalizer::circuit::{
    coupling_strength, qubit_splitting, resonance_flux, si_temperature_to_beta, validate_schedule, DeviceParams,
    PulseSchedule,
};
use thermalizer::coherent::{coherent_rates, moments_at, steady_moments};
use thermalizer::diagonal::{beta_eff_smalltau, ratio_rn, smalltau_ratio};
use thermalizer::master::{
    build_generator, effective_beta_fit, evolve_with, mean_field, mean_photon, populations, relaxation_gap,
    steady_state_with, EvolveOptions, SolverBackend,
};
use thermalizer::reservoir::thermal_atom;
use thermalizer::trajectory::{ensemble_statistics, run_ensemble, TrajectoryConfig};
use thermalizer::{AtomState, BathParams, DensityMatrix, Error, MaserParams, TruncationPolicy, C64};

use crate::config::{Config, ConfigError};
use crate::table::{real, Cell, ResultTable};

#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent input; exit status 2.
    Config(String),
    /// A computation failed validation; exit status 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::ShapeMismatch { .. } | Error::Unreachable { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type Outcome = Result<ResultTable, CliError>;

/// Table plus a flag for partial failures (sweep points that errored).
pub struct Report {
    pub table: ResultTable,
    pub failed_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Steady,
    Evolve,
    Trajectory,
    Ratio,
    Coherent,
    Circuit,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Evolve => "evolve",
            Command::Trajectory => "trajectory",
            Command::Ratio => "ratio",
            Command::Coherent => "coherent",
            Command::Circuit => "circuit",
            Command::Sweep => "sweep",
        }
    }
}

pub fn run(command: Command, config: &Config) -> Result<Report, CliError> {
    let (mut table, failed_points) = match command {
        Command::Steady => (cmd_steady(config)?, 0),
        Command::Evolve => (cmd_evolve(config)?, 0),
        Command::Trajectory => (cmd_trajectory(config)?, 0),
        Command::Ratio => (cmd_ratio(config)?, 0),
        Command::Coherent => (cmd_coherent(config)?, 0),
        Command::Circuit => (cmd_circuit(config)?, 0),
        Command::Sweep => cmd_sweep(config)?,
    };
    let mut header = ResultTable::new(&[]);
    header.meta("meta.command", command.name());
    header.meta("meta.version", env!("CARGO_PKG_VERSION"));
    for (k, v) in config.entries() {
        header.meta(k, v);
    }
    table.prepend_metadata(header);
    Ok(Report { table, failed_points })
}

/// Everything derived from the shared `params.*`, `atom.*`, `trunc.*` keys.
struct Model {
    params: MaserParams,
    atom: AtomState,
    policy: TruncationPolicy,
}

impl Model {
    fn from_config(c: &Config) -> Result<Self, CliError> {
        let omega = c.get_or("params.omega", 1.0)?;
        let r = c.get_or("params.r", 2e-4)?;
        let kappa = c.get_or("params.kappa", 1e-4)?;
        let bath = match (c.get::<f64>("params.n_th")?, c.get::<f64>("params.beta_b")?) {
            (Some(n), Some(b)) => BathParams::with_beta(kappa, n, b, omega)?,
            (Some(n), None) => BathParams::new(kappa, n)?,
            (None, b) => BathParams::from_beta(kappa, b.unwrap_or(4.797), omega)?,
        };
        let params = match (c.get::<f64>("params.g")?, c.get::<f64>("params.tau")?) {
            (Some(g), Some(tau)) => {
                if c.contains("params.g_tau") {
                    return Err(CliError::Config("give either params.g_tau or params.g with params.tau".into()));
                }
                MaserParams::with_coupling(omega, g, tau, r, bath)?
            }
            (None, None) => MaserParams::new(omega, c.get_or("params.g_tau", 0.05)?, r, bath)?,
            _ => return Err(CliError::Config("params.g and params.tau go together".into())),
        };
        let lambda = C64::new(c.get_or("atom.lambda_re", 0.0)?, c.get_or("atom.lambda_im", 0.0)?);
        let atom = match c.get::<f64>("atom.p_e")? {
            Some(p_e) => {
                if c.contains("atom.beta") {
                    return Err(CliError::Config("give either atom.p_e or atom.beta".into()));
                }
                AtomState::with_excitation(p_e, lambda)?
            }
            None => thermal_atom(c.get_or("atom.beta", 2.898)?, omega)?.with_lambda(lambda)?,
        };
        let dim = c.get_or("trunc.dim", 40usize)?;
        let policy = TruncationPolicy::with_dim(dim)?;
        let policy = TruncationPolicy::new(
            dim,
            c.get_or("trunc.guard", policy.guard())?,
            c.get_or("trunc.tail_tol", policy.tail_tol())?,
        )?;
        Ok(Self { params, atom, policy })
    }

    fn describe(&self, t: &mut ResultTable) {
        let p = &self.params;
        for (k, v) in [
            ("omega", p.omega()),
            ("g_tau", p.g_tau()),
            ("r", p.r()),
            ("kappa", p.kappa()),
            ("n_th", p.n_th()),
            ("p_e", self.atom.p_e()),
            ("p_g", self.atom.p_g()),
            ("lambda_re", self.atom.lambda().re),
            ("lambda_im", self.atom.lambda().im),
        ] {
            t.meta(format!("derived.{k}"), real(v));
        }
        t.meta("derived.dim", self.policy.dim().to_string());
    }

    fn backend(c: &Config) -> Result<SolverBackend, CliError> {
        match c.raw("solver.backend").unwrap_or("banded") {
            "banded" => Ok(SolverBackend::Banded),
            "dense" => Ok(SolverBackend::Dense),
            other => Err(CliError::Config(format!("solver.backend = {other}: expected banded or dense"))),
        }
    }

    fn steady(&self, c: &Config) -> Result<DensityMatrix, CliError> {
        let g = build_generator(&self.params, &self.atom, &self.policy)?;
        Ok(steady_state_with(&g, &self.policy, Self::backend(c)?)?)
    }

    fn initial_state(&self, c: &Config) -> Result<DensityMatrix, CliError> {
        let p = &self.policy;
        Ok(match c.raw("init.state").unwrap_or("vacuum") {
            "vacuum" => DensityMatrix::vacuum(p),
            "thermal" => DensityMatrix::thermal(c.get_or("init.n_bar", self.params.n_th())?, p)?,
            "fock" => DensityMatrix::fock(c.get_or("init.n", 1usize)?, p)?,
            "coherent" => {
                DensityMatrix::coherent(C64::new(c.get_or("init.alpha_re", 0.0)?, c.get_or("init.alpha_im", 0.0)?), p)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "init.state = {other}: expected vacuum, thermal, fock or coherent"
                )))
            }
        })
    }
}

fn fit_window(c: &Config) -> Result<Option<(usize, usize)>, CliError> {
    match (c.get::<usize>("fit.n_min")?, c.get::<usize>("fit.n_max")?) {
        (None, None) => Ok(None),
        (a, Some(b)) => Ok(Some((a.unwrap_or(0), b))),
        (Some(_), None) => Err(CliError::Config("fit.n_min needs fit.n_max".into())),
    }
}

pub fn cmd_steady(c: &Config) -> Outcome {
    let m = Model::from_config(c)?;
    let ss = m.steady(c)?;
    let pops = populations(&ss)?;
    let fit = effective_beta_fit(&pops, m.params.omega(), fit_window(c)?)?;
    let mut t = ResultTable::new(&["n", "P_n", "minus_ln_P_over_omega", "R_n", "R_n_analytic"]);
    m.describe(&mut t);
    t.result("mean_n", mean_photon(&ss));
    let a = mean_field(ss.matrix());
    t.result("a_re", a.re);
    t.result("a_im", a.im);
    t.result("beta_eff", fit.beta_eff);
    t.result("fit_residual", fit.residual);
    t.meta("result.fit_window", format!("{}..{}", fit.n_min, fit.n_max));
    let p = pops.as_slice();
    for (n, &pn) in p.iter().enumerate() {
        let (empirical, analytic) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (pn / p[n - 1], ratio_rn(n, &m.params, m.atom.p_e(), m.atom.p_g()).unwrap_or(f64::NAN))
        };
        t.push(vec![
            Cell::Int(n as i64),
            Cell::Real(pn),
            Cell::Real(-pn.ln() / m.params.omega()),
            Cell::Real(empirical),
            Cell::Real(analytic),
        ]);
    }
    Ok(t)
}

pub fn cmd_evolve(c: &Config) -> Outcome {
    let m = Model::from_config(c)?;
    let rho0 = m.initial_state(c)?;
    let g = build_generator(&m.params, &m.atom, &m.policy)?;
    let options = EvolveOptions {
        t_final: c.get("evolve.t_final")?,
        dt: c.get("evolve.dt")?,
        samples: c.get_or("evolve.samples", 101usize)?,
    };
    let ev = evolve_with(&rho0, &g, options, &m.policy)?;
    let mut t = ResultTable::new(&["t", "mean_n", "trace", "min_eigenvalue"]);
    m.describe(&mut t);
    t.result("final_mean_n", mean_photon(&ev.state));
    for s in &ev.samples {
        t.push(vec![Cell::Real(s.time), Cell::Real(s.mean_photon), Cell::Real(s.trace), Cell::Real(s.min_eigenvalue)]);
    }
    Ok(t)
}

pub fn cmd_trajectory(c: &Config) -> Outcome {
    let m = Model::from_config(c)?;
    let rho0 = m.initial_state(c)?;
    let g = build_generator(&m.params, &m.atom, &m.policy)?;
    let horizon = match c.get::<f64>("trajectory.horizon")? {
        Some(h) => h,
        None => 20.0 / relaxation_gap(&g),
    };
    let sample_dt = c.get_or("trajectory.sample_dt", 0.1 / m.params.r())?;
    let config = TrajectoryConfig::with_sample_dt(
        c.get_or("trajectory.seed", 1u64)?,
        horizon,
        sample_dt,
        c.get_or("trajectory.count", 100usize)?,
    )?;
    let records = run_ensemble(&rho0, &m.params, &m.atom, &config, &m.policy)?;
    let stats = ensemble_statistics(&records)?;
    let ss = steady_state_with(&g, &m.policy, Model::backend(c)?)?;
    let mut t = ResultTable::new(&["t", "mean_n", "stderr_n"]);
    m.describe(&mut t);
    t.meta("derived.horizon", real(horizon));
    t.meta("derived.sample_dt", real(sample_dt));
    t.result("final_mean_n", stats.final_mean);
    t.result("final_stderr_n", stats.final_stderr);
    t.result("steady_mean_n", mean_photon(&ss));
    t.result("arrivals", records.iter().map(|r| r.injection_times.len()).sum::<usize>() as f64);
    for (n, p) in stats.pooled_final.as_slice().iter().enumerate().take(6) {
        t.result(&format!("pooled_P_{n}"), *p);
    }
    for j in 0..stats.times.len() {
        t.push(vec![Cell::Real(stats.times[j]), Cell::Real(stats.mean[j]), Cell::Real(stats.stderr[j])]);
    }
    Ok(t)
}

pub fn cmd_ratio(c: &Config) -> Outcome {
    let m = Model::from_config(c)?;
    let (p_e, p_g) = (m.atom.p_e(), m.atom.p_g());
    let flat = smalltau_ratio(&m.params, p_e, p_g)?;
    let mut t = ResultTable::new(&["n", "R_n", "R_smalltau", "rel_dev"]);
    m.describe(&mut t);
    t.result("beta_eff_smalltau", beta_eff_smalltau(&m.params, p_e, p_g)?);
    for n in 1..=c.get_or("ratio.n_max", 20usize)? {
        let r = ratio_rn(n, &m.params, p_e, p_g)?;
        t.push(vec![Cell::Int(n as i64), Cell::Real(r), Cell::Real(flat), Cell::Real((r - flat) / flat)]);
    }
    Ok(t)
}

pub fn cmd_coherent(c: &Config) -> Outcome {
    let m = Model::from_config(c)?;
    let rates = coherent_rates(&m.params, &m.atom);
    let (a_ss, n_ss) = steady_moments(&rates)?;
    let rho0 = m.initial_state(c)?;
    let (a0, n0) = (mean_field(rho0.matrix()), mean_photon(&rho0));
    let t_final = c.get_or("coherent.t_final", 20.0 / rates.damping())?;
    let samples = c.get_or("coherent.samples", 101usize)?.max(2);
    let mut t = ResultTable::new(&["t", "a_re", "a_im", "mean_n"]);
    m.describe(&mut t);
    t.result("xi_re", rates.xi.re);
    t.result("xi_im", rates.xi.im);
    t.result("gamma1", rates.gamma1);
    t.result("gamma2", rates.gamma2);
    t.result("a_ss_re", a_ss.re);
    t.result("a_ss_im", a_ss.im);
    t.result("n_ss", n_ss);
    t.result("n_ss_coherent_part", 4.0 * rates.xi.norm_sqr() / rates.damping().powi(2));
    for k in 0..samples {
        let time = t_final * k as f64 / (samples - 1) as f64;
        let (a, n) = moments_at(a0, n0, &rates, time)?;
        t.push(vec![Cell::Real(time), Cell::Real(a.re), Cell::Real(a.im), Cell::Real(n)]);
    }
    Ok(t)
}

pub fn cmd_circuit(c: &Config) -> Outcome {
    use std::f64::consts::PI;
    let device = DeviceParams::new(
        c.get_or("device.e_j", 2.0 * PI * 8e9)?,
        c.get_or("device.c_g", 0.1e-12)?,
        c.get_or("device.c_sigma", 1e-12)?,
        c.get_or("device.length", 9.68e-3)?,
        c.get_or("device.c_per_len", 1.6e-10)?,
        c.get_or("device.omega_res", 2.0 * PI * 10e9)?,
    )?;
    let on_times = match c.list("schedule.on_times")? {
        Some(times) => times,
        None => {
            let period = c.get_or("schedule.period", 1e-7)?;
            (0..c.get_or("schedule.count", 10usize)?).map(|i| i as f64 * period).collect()
        }
    };
    let schedule = PulseSchedule::new(
        on_times,
        c.get_or("schedule.tau", 1e-9)?,
        c.get_or("schedule.tau_r", 1e-8)?,
        c.get_or("schedule.tau_p", 0.0)?,
    )?;
    let report = validate_schedule(&schedule);
    let g = coupling_strength(&device);
    let flux = resonance_flux(device.e_j, device.omega_res, device.phi0)?;
    let (omega0, _) = qubit_splitting(device.e_j, flux, device.phi0);
    let beta_omega = si_temperature_to_beta(c.get_or("circuit.t_mk", 200.0)?, c.get_or("circuit.f_ghz", 10.0)?)?;

    let mut t = ResultTable::new(&["gap_index", "gap", "fits"]);
    t.result("g", g);
    t.result("g_over_2pi", g / (2.0 * PI));
    t.result("resonance_flux", flux);
    t.result("resonance_flux_over_phi0", flux / device.phi0);
    t.result("omega0_at_resonance", omega0);
    t.result("g_tau", g * schedule.tau);
    t.result("beta_omega", beta_omega);
    t.result("relaxation_ratio", report.ratio);
    t.meta("result.schedule", if report.passed() { "pass" } else { "fail" });
    t.meta("result.relaxation_warning", if report.warnings.is_empty() { "no" } else { "yes" });
    for (i, (gap, fits)) in report.gaps.iter().enumerate() {
        t.push(vec![Cell::Int(i as i64), Cell::Real(*gap), Cell::Int(*fits as i64)]);
    }
    if !report.passed() {
        let bad = report.gaps.iter().filter(|g| !g.1).count();
        return Err(CliError::Numerical(format!("{bad} pulse gaps are shorter than tau + tau_r + tau_p")));
    }
    Ok(t)
}

pub fn cmd_sweep(c: &Config) -> Result<(ResultTable, usize), CliError> {
    let key = c.raw("sweep.param").ok_or_else(|| CliError::Config("sweep.param is required".into()))?;
    if key.starts_with("sweep.") || !crate::config::KEYS.contains(&key) {
        return Err(CliError::Config(format!("cannot sweep `{key}`")));
    }
    let values = c.list("sweep.values")?.ok_or_else(|| CliError::Config("sweep.values is required".into()))?;
    // Set each point from its own text so integer keys such as trunc.dim stay parseable.
    let tokens: Vec<&str> = c.raw("sweep.values").unwrap_or_default().split(',').map(str::trim).collect();
    let points: Vec<Result<(f64, f64, f64), CliError>> = tokens
        .par_iter()
        .map(|v| {
            let mut point = c.clone();
            point.set(key, v)?;
            let m = Model::from_config(&point)?;
            let small = beta_eff_smalltau(&m.params, m.atom.p_e(), m.atom.p_g())?;
            let ss = m.steady(&point)?;
            let fit = effective_beta_fit(&populations(&ss)?, m.params.omega(), fit_window(&point)?)?;
            Ok((small, fit.beta_eff, mean_photon(&ss)))
        })
        .collect();
    let mut t = ResultTable::new(&["value", "beta_eff_smalltau", "beta_eff_fit", "mean_n", "error"]);
    t.meta("derived.sweep_param", key);
    let mut failed = 0;
    for (v, point) in values.iter().zip(points) {
        match point {
            Ok((small, fit, n)) => t.push(vec![
                Cell::Real(*v),
                Cell::Real(small),
                Cell::Real(fit),
                Cell::Real(n),
                Cell::Text(String::new()),
            ]),
            Err(e) => {
                failed += 1;
                let nan = Cell::Real(f64::NAN);
                t.push(vec![Cell::Real(*v), nan.clone(), nan.clone(), nan, Cell::Text(e.to_string())]);
            }
        }
    }
    Ok((t, failed))
}
