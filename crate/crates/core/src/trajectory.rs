//! Poisson-injection realizations of the cavity dynamics.
//!
//! Each trajectory is a density-matrix path: the field decays under the bath
//! between arrivals and every arrival applies the full transit map. Only the
//! arrival times are random.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::diagonal::PopulationVector;
use crate::error::{Error, Result};
use crate::fock::{mean_photon_number, min_hermitian_eigenvalue, validate_density, CMatrix, DensityMatrix, TruncationPolicy, C64, ZERO};
use crate::injection::InjectionMap;
use crate::master::{dissipator_generator, MaserParams};
use crate::reservoir::{AtomState, BathParams};

const STATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub horizon: f64,
    pub sample_dt: f64,
    pub n_trajectories: usize,
}

impl TrajectoryConfig {
    /// Samples every `1 / (10 r)`.
    pub fn new(seed: u64, horizon: f64, n_trajectories: usize, r: f64) -> Result<Self> {
        Self::with_sample_dt(seed, horizon, 0.1 / r, n_trajectories)
    }

    pub fn with_sample_dt(seed: u64, horizon: f64, sample_dt: f64, n_trajectories: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon = {horizon}")));
        }
        if !(sample_dt > 0.0 && sample_dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample_dt = {sample_dt}")));
        }
        if n_trajectories == 0 {
            return Err(Error::InvalidParameter("n_trajectories = 0".into()));
        }
        Ok(Self { seed, horizon, sample_dt, n_trajectories })
    }

    /// Sampling instants `0, dt, 2 dt, ...` up to the horizon.
    pub fn sample_times(&self) -> Vec<f64> {
        let steps = (self.horizon / self.sample_dt * (1.0 + 1e-12)).floor() as usize;
        (0..=steps).map(|j| j as f64 * self.sample_dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub n_mean: Vec<f64>,
    pub injection_times: Vec<f64>,
    pub final_state: DensityMatrix,
}

/// Generator for trajectory `index` of an ensemble: ChaCha8 keyed by the
/// master seed, one stream per trajectory.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Arrival times in `(0, horizon]` with exponential gaps of mean `1 / r`.
pub fn sample_injection_times(r: f64, horizon: f64, seed: u64) -> Result<Vec<f64>> {
    injection_times_with(r, horizon, &mut trajectory_rng(seed, 0))
}

fn injection_times_with(r: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("r = {r}")));
    }
    let gaps = Exp::new(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            return Ok(times);
        }
        times.push(t);
    }
}

/// Exact bath-only evolution. The dissipator never mixes matrix elements of
/// different offset `m - n`, so it is exponentiated block by block.
#[derive(Debug, Clone)]
pub struct BathPropagator {
    dim: usize,
    /// Generator restricted to offset `k`, indexed `k + dim - 1`.
    blocks: Vec<CMatrix>,
    /// `exp(block * step)` for the sampling step.
    cached_step: f64,
    cached: Vec<CMatrix>,
}

impl BathPropagator {
    pub fn new(bath: &BathParams, policy: &TruncationPolicy, step: f64) -> Self {
        let dim = policy.dim();
        let full = dissipator_generator(bath, policy);
        let offsets: Vec<isize> = (-(dim as isize - 1)..dim as isize).collect();
        let blocks: Vec<CMatrix> = offsets
            .iter()
            .map(|&k| {
                let idx = block_indices(k, dim);
                let mut b = CMatrix::zeros(idx.len(), idx.len());
                for (i, &row) in idx.iter().enumerate() {
                    for (col, v) in full.sparse().row(row) {
                        let j = idx.iter().position(|&c| c == col).expect("dissipator keeps the offset");
                        b[(i, j)] = v;
                    }
                }
                b
            })
            .collect();
        let cached = blocks.iter().map(|b| (b * C64::from(step)).exp()).collect();
        Self { dim, blocks, cached_step: step, cached }
    }

    /// Evolve `rho` for time `t` in place.
    pub fn advance(&self, rho: &mut CMatrix, t: f64) {
        if t == 0.0 {
            return;
        }
        let dim = self.dim;
        for (slot, k) in (-(dim as isize - 1)..dim as isize).enumerate() {
            let idx = block_indices(k, dim);
            let v = nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&i| rho[(i % dim, i / dim)]));
            if v.iter().all(|z| *z == ZERO) {
                continue;
            }
            let out = if t == self.cached_step {
                &self.cached[slot] * v
            } else {
                (&self.blocks[slot] * C64::from(t)).exp() * v
            };
            for (&i, z) in idx.iter().zip(out.iter()) {
                rho[(i % dim, i / dim)] = *z;
            }
        }
    }
}

/// Column-stacked indices of the elements `(m, n)` with `m - n = k`.
fn block_indices(k: isize, dim: usize) -> Vec<usize> {
    (0..dim)
        .filter_map(|n| {
            let m = n as isize + k;
            (0..dim as isize).contains(&m).then(|| n * dim + m as usize)
        })
        .collect()
}

fn is_diagonal(rho: &CMatrix) -> bool {
    rho.iter().enumerate().all(|(i, z)| i % (rho.nrows() + 1) == 0 || *z == ZERO)
}

fn check_state(rho: &CMatrix, policy: &TruncationPolicy) -> Result<()> {
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > STATE_TOL {
        return Err(Error::TraceViolation((trace - 1.0).abs()));
    }
    let tail = policy.tail_mass(rho.diagonal().iter().map(|z| z.re));
    if tail > policy.tail_tol() {
        return Err(Error::TruncationOverflow(tail));
    }
    let min = if is_diagonal(rho) {
        rho.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    } else {
        min_hermitian_eigenvalue(rho)
    };
    if min < -STATE_TOL {
        return Err(Error::NegativityViolation(min));
    }
    Ok(())
}

/// Everything a trajectory needs that does not depend on its random draws.
#[derive(Debug)]
pub struct TrajectoryModel {
    map: InjectionMap,
    bath: BathPropagator,
    r: f64,
    policy: TruncationPolicy,
}

impl TrajectoryModel {
    pub fn new(params: &MaserParams, atom: &AtomState, config: &TrajectoryConfig, policy: &TruncationPolicy) -> Result<Self> {
        Ok(Self {
            map: InjectionMap::new(*atom, params.g_tau(), policy)?,
            bath: BathPropagator::new(params.bath(), policy, config.sample_dt),
            r: params.r(),
            policy: *policy,
        })
    }

    /// Path driven by the given arrival times.
    pub fn run_with_times(
        &self,
        rho0: &DensityMatrix,
        config: &TrajectoryConfig,
        injection_times: Vec<f64>,
    ) -> Result<TrajectoryRecord> {
        let times = config.sample_times();
        let mut n_mean = Vec::with_capacity(times.len());
        let mut rho = rho0.matrix().clone();
        let mut now = 0.0;
        let mut events = injection_times.iter().peekable();
        for (j, &ts) in times.iter().enumerate() {
            let mut quiet = j > 0;
            while let Some(&&te) = events.peek() {
                if te > ts {
                    break;
                }
                self.bath.advance(&mut rho, te - now);
                rho = self.map.act(&rho);
                now = te;
                quiet = false;
                events.next();
            }
            // A full sampling interval without arrivals uses the cached step.
            let step = if quiet { config.sample_dt } else { ts - now };
            self.bath.advance(&mut rho, step);
            now = ts;
            check_state(&rho, &self.policy)?;
            n_mean.push(mean_photon_number(&rho));
        }
        for &te in events {
            self.bath.advance(&mut rho, te - now);
            rho = self.map.act(&rho);
            now = te;
        }
        self.bath.advance(&mut rho, config.horizon - now);
        let final_state = validate_density(crate::fock::hermitian_part(&rho), &self.policy)?;
        Ok(TrajectoryRecord { times, n_mean, injection_times, final_state })
    }

    /// Trajectory `index` of the ensemble keyed by `config.seed`.
    pub fn run(&self, rho0: &DensityMatrix, config: &TrajectoryConfig, index: u64) -> Result<TrajectoryRecord> {
        let events = if self.r > 0.0 {
            injection_times_with(self.r, config.horizon, &mut trajectory_rng(config.seed, index))?
        } else {
            Vec::new()
        };
        self.run_with_times(rho0, config, events)
    }
}

/// First trajectory of the ensemble keyed by `config.seed`.
pub fn run_trajectory(
    rho0: &DensityMatrix,
    params: &MaserParams,
    atom: &AtomState,
    config: &TrajectoryConfig,
    policy: &TruncationPolicy,
) -> Result<TrajectoryRecord> {
    TrajectoryModel::new(params, atom, config, policy)?.run(rho0, config, 0)
}

/// All `config.n_trajectories` trajectories, in index order, run in parallel.
pub fn run_ensemble(
    rho0: &DensityMatrix,
    params: &MaserParams,
    atom: &AtomState,
    config: &TrajectoryConfig,
    policy: &TruncationPolicy,
) -> Result<Vec<TrajectoryRecord>> {
    let model = TrajectoryModel::new(params, atom, config, policy)?;
    (0..config.n_trajectories as u64).into_par_iter().map(|k| model.run(rho0, config, k)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of the mean; zero for a single record.
    pub stderr: Vec<f64>,
    /// Average of the final photon-number distributions.
    pub pooled_final: PopulationVector,
    /// Mean and standard error of the final `<n>` over records.
    pub final_mean: f64,
    pub final_stderr: f64,
}

pub fn ensemble_statistics(records: &[TrajectoryRecord]) -> Result<EnsembleStats> {
    let first = records.first().ok_or_else(|| Error::InvalidParameter("no records".into()))?;
    if records.iter().any(|r| r.times != first.times || r.n_mean.len() != first.times.len()) {
        return Err(Error::GridMismatch);
    }
    let dim = first.final_state.dim();
    if records.iter().any(|r| r.final_state.dim() != dim) {
        return Err(Error::GridMismatch);
    }
    let count = records.len() as f64;
    let columns = first.times.len();
    let mut mean = vec![0.0; columns];
    let mut stderr = vec![0.0; columns];
    for j in 0..columns {
        let (m, s) = mean_and_stderr(records.iter().map(|r| r.n_mean[j]), count);
        mean[j] = m;
        stderr[j] = s;
    }
    let finals: Vec<f64> = records.iter().map(|r| mean_photon_number(r.final_state.matrix())).collect();
    let (final_mean, final_stderr) = mean_and_stderr(finals.iter().copied(), count);
    let mut pooled = vec![0.0; dim];
    for r in records {
        for (p, x) in pooled.iter_mut().zip(r.final_state.diagonal()) {
            *p += x / count;
        }
    }
    Ok(EnsembleStats {
        times: first.times.clone(),
        mean,
        stderr,
        pooled_final: PopulationVector::from_weights(&pooled)?,
        final_mean,
        final_stderr,
    })
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, count: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / count;
    if count < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
    (mean, (var / count).sqrt())
}

/// Time average of `<n>` over samples with `t >= from`, with a batch-means
/// standard error over `batches` contiguous blocks.
pub fn time_average(record: &TrajectoryRecord, from: f64, batches: usize) -> Result<(f64, f64)> {
    let tail: Vec<f64> = record.times.iter().zip(&record.n_mean).filter(|(t, _)| **t >= from).map(|(_, n)| *n).collect();
    if batches < 2 || tail.len() < batches {
        return Err(Error::InvalidParameter(format!("{} samples for {batches} batches", tail.len())));
    }
    let size = tail.len() / batches;
    let means: Vec<f64> = tail.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    Ok(mean_and_stderr(means.iter().copied(), batches as f64))
}

/// Hotelling test of the final populations against a reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTest {
    /// Levels compared (level 0 is implied by normalization).
    pub levels: Vec<usize>,
    pub t_squared: f64,
    /// `T^2 (N - K) / (K (N - 1))`, F-distributed with `(K, N - K)` degrees
    /// of freedom when the reference is correct.
    pub f_statistic: f64,
    pub dof: (usize, usize),
}

/// Compares the mean final populations of levels `1..` whose reference
/// probability is at least `min_prob`.
pub fn population_test(records: &[TrajectoryRecord], reference: &PopulationVector, min_prob: f64) -> Result<PopulationTest> {
    let levels: Vec<usize> = (1..reference.len()).filter(|&n| reference.as_slice()[n] >= min_prob).collect();
    let k = levels.len();
    let n = records.len();
    if k == 0 || n <= k + 1 {
        return Err(Error::InvalidParameter(format!("{n} records for {k} levels")));
    }
    let samples: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let d = r.final_state.diagonal();
            levels.iter().map(|&l| d[l]).collect()
        })
        .collect();
    let mean: Vec<f64> = (0..k).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n as f64).collect();
    let cov = DMatrix::from_fn(k, k, |i, j| {
        samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])).sum::<f64>() / (n as f64 - 1.0)
    });
    let diff = nalgebra::DVector::from_iterator(k, levels.iter().zip(&mean).map(|(&l, m)| m - reference.as_slice()[l]));
    let solved = cov
        .clone()
        .cholesky()
        .ok_or(Error::DegenerateKernel(0.0))?
        .solve(&diff);
    let t_squared = n as f64 * diff.dot(&solved);
    let f_statistic = t_squared * (n - k) as f64 / (k as f64 * (n as f64 - 1.0));
    Ok(PopulationTest { levels, t_squared, f_statistic, dof: (k, n - k) })
}
