//! Flat `dotted.key = value` configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. A CSV written by
//! this program is also a valid config: its `# key = value` header lines are
//! read back and everything else is skipped.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Every key the program understands.
pub const KEYS: &[&str] = &[
    "params.omega",
    "params.g_tau",
    "params.g",
    "params.tau",
    "params.r",
    "params.kappa",
    "params.n_th",
    "params.beta_b",
    "atom.beta",
    "atom.p_e",
    "atom.lambda_re",
    "atom.lambda_im",
    "trunc.dim",
    "trunc.guard",
    "trunc.tail_tol",
    "solver.backend",
    "init.state",
    "init.n",
    "init.n_bar",
    "init.alpha_re",
    "init.alpha_im",
    "fit.n_min",
    "fit.n_max",
    "ratio.n_max",
    "evolve.t_final",
    "evolve.dt",
    "evolve.samples",
    "trajectory.seed",
    "trajectory.horizon",
    "trajectory.sample_dt",
    "trajectory.count",
    "coherent.t_final",
    "coherent.samples",
    "device.e_j",
    "device.c_g",
    "device.c_sigma",
    "device.length",
    "device.c_per_len",
    "device.omega_res",
    "schedule.on_times",
    "schedule.period",
    "schedule.count",
    "schedule.tau",
    "schedule.tau_r",
    "schedule.tau_p",
    "circuit.t_mk",
    "circuit.f_ghz",
    "sweep.param",
    "sweep.values",
];

/// Prefixes written into result headers. They are accepted on input and
/// ignored, so a result file can be fed back as a config.
const OUTPUT_PREFIXES: &[&str] = &["meta.", "derived.", "result."];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Assignments given explicitly by the user; defaults live with the code
/// that reads each key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let csv = text.lines().next().is_some_and(|l| l.starts_with("# meta."));
        let mut config = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = if csv {
                match line.strip_prefix('#') {
                    Some(rest) => rest,
                    None => continue,
                }
            } else {
                line.split('#').next().unwrap_or("")
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if OUTPUT_PREFIXES.iter().any(|p| key.starts_with(p)) {
                continue;
            }
            config.set(key, value).map_err(|e| ConfigError(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(ConfigError(format!("empty value for `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError(format!("`{key} = {v}`: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| ConfigError(format!("`{key}` entry `{x}`: {e}"))))
                    .collect()
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_whitespace() {
        let c = Config::parse("# header\nparams.r = 2e-4   # rate\n\n  trunc.dim=12\n").unwrap();
        assert_eq!(c.get::<f64>("params.r").unwrap(), Some(2e-4));
        assert_eq!(c.get::<usize>("trunc.dim").unwrap(), Some(12));
        assert_eq!(c.get::<f64>("params.kappa").unwrap(), None);
    }

    #[test]
    fn unknown_and_malformed() {
        assert!(Config::parse("params.rate = 1").is_err());
        assert!(Config::parse("params.r 1").is_err());
        assert!(Config::parse("params.r =").is_err());
        let c = Config::parse("trunc.dim = twelve").unwrap();
        assert!(c.get::<usize>("trunc.dim").is_err());
    }

    #[test]
    fn result_headers_read_back() {
        let text = "# meta.command = steady\n# params.g_tau = 0.3\n# result.mean_n = 1e-2\nn,P_n\n0,1e0\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.entries().collect::<Vec<_>>(), vec![("params.g_tau", "0.3")]);
    }

    #[test]
    fn lists() {
        let c = Config::parse("sweep.values = 2.0, 2.898,4").unwrap();
        assert_eq!(c.list("sweep.values").unwrap(), Some(vec![2.0, 2.898, 4.0]));
    }
}
