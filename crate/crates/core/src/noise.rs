//! Classical noise on the drive amplitude: trajectories with a
//! piecewise-constant, randomly resampled `λ(t)`, and the noisy-Rabi
//! benchmark they are compared against.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, RwLock};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{ness, sample_index, SpectralNess};
use crate::rng::{map_indices, StreamId};
use crate::spin::{build_operators, ClockParams};
use crate::ticks::{accumulate, grouped_waits, merit_grouped, CountStop, CountingObservable, MeritSummary};
use crate::trajectory::{integrate, Marker, NoJumpPropagator, TrajectoryRecord};

/// Drive amplitude `λ ~ Normal(mean, sigma)` truncated at zero, redrawn
/// every `dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mean: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl NoiseModel {
    pub fn new(mean: f64, sigma: f64, dt: f64) -> Result<Self> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::InvalidParams(format!("mean drive {mean} must be >= 0")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("noise sigma {sigma} must be >= 0")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("noise interval {dt} must be > 0")));
        }
        Ok(NoiseModel { mean, sigma, dt })
    }

    /// Noise given as `σ/⟨λ⟩`.
    pub fn relative(mean: f64, sigma_rel: f64, dt: f64) -> Result<Self> {
        NoiseModel::new(mean, sigma_rel * mean, dt)
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn sigma_rel(&self) -> f64 {
        self.sigma / self.mean
    }

    /// One draw and whether it was truncated at zero.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, bool) {
        if self.sigma == 0.0 {
            return (self.mean, false);
        }
        let x = Normal::new(self.mean, self.sigma).expect("validated").sample(rng);
        if x < 0.0 {
            (0.0, true)
        } else {
            (x, false)
        }
    }
}

/// `1/(10·γ0λ²S)`, an order below the fastest jump time scale. Below
/// `λ = 1` the drive term is replaced by 1.
pub fn default_noise_dt(params: &ClockParams) -> f64 {
    1.0 / (10.0 * params.gamma0 * (params.lambda * params.lambda).max(1.0) * params.spin())
}

/// Figures of merit of the noisy drive itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiBenchmark {
    pub resolution: f64,
    /// Infinite for a noiseless drive.
    pub accuracy: f64,
    pub fano: f64,
}

pub fn rabi_benchmark(noise: &NoiseModel, gamma0: f64) -> RabiBenchmark {
    let resolution = gamma0 * noise.mean / (2.0 * PI);
    let var = noise.variance();
    if var == 0.0 {
        return RabiBenchmark { resolution, accuracy: f64::INFINITY, fano: 0.0 };
    }
    let accuracy = noise.mean * noise.mean / var;
    RabiBenchmark { resolution, accuracy, fano: 1.0 / (resolution * accuracy) }
}

#[derive(Default)]
struct CacheEntry {
    propagator: OnceLock<Arc<NoJumpPropagator>>,
    ness: OnceLock<Arc<SpectralNess>>,
}

/// A noisy run together with the drive values that produced it.
#[derive(Clone, Debug)]
pub struct NoisyRecord {
    pub record: TrajectoryRecord,
    /// Drive used for the initial steady state and the first segment.
    pub lambda0: f64,
    pub draws: u64,
    pub truncated: u64,
}

/// Trajectory engine with a resampled drive. Steady states and propagators
/// are cached per drive value rounded to `1e-3`; a noiseless model uses the
/// mean exactly and reproduces the plain engine.
pub struct NoisyEngine {
    pub params: ClockParams,
    pub noise: NoiseModel,
    cache: RwLock<HashMap<i64, Arc<CacheEntry>>>,
    draws: AtomicU64,
    truncated: AtomicU64,
}

const QUANTUM: f64 = 1e-3;

impl NoisyEngine {
    pub fn new(params: ClockParams, noise: NoiseModel) -> Result<Self> {
        params.validate()?;
        Ok(NoisyEngine { params, noise, cache: RwLock::new(HashMap::new()), draws: AtomicU64::new(0), truncated: AtomicU64::new(0) })
    }

    fn key(&self, lambda: f64) -> (i64, f64) {
        if self.noise.sigma == 0.0 {
            return (i64::MIN, self.noise.mean);
        }
        let k = (lambda / QUANTUM).round() as i64;
        (k, k as f64 * QUANTUM)
    }

    fn entry(&self, key: i64) -> Arc<CacheEntry> {
        if let Some(e) = self.cache.read().unwrap().get(&key) {
            return e.clone();
        }
        self.cache.write().unwrap().entry(key).or_default().clone()
    }

    fn params_for(&self, lambda: f64) -> ClockParams {
        self.params.with_lambda(lambda)
    }

    pub fn propagator(&self, lambda: f64) -> Result<Arc<NoJumpPropagator>> {
        let (key, value) = self.key(lambda);
        let e = self.entry(key);
        if let Some(p) = e.propagator.get() {
            return Ok(p.clone());
        }
        let ops = build_operators(&self.params_for(value))?;
        Ok(e.propagator.get_or_init(|| Arc::new(NoJumpPropagator::new(&ops))).clone())
    }

    pub fn steady_state(&self, lambda: f64) -> Result<Arc<SpectralNess>> {
        let (key, value) = self.key(lambda);
        let e = self.entry(key);
        if let Some(p) = e.ness.get() {
            return Ok(p.clone());
        }
        let pi = ness(&build_operators(&self.params_for(value))?)?;
        Ok(e.ness.get_or_init(|| Arc::new(pi)).clone())
    }

    /// Number of distinct cached drive values.
    pub fn cached_values(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// Fraction of drive draws truncated at zero so far.
    pub fn truncation_fraction(&self) -> f64 {
        let d = self.draws.load(Ordering::Relaxed);
        if d == 0 {
            0.0
        } else {
            self.truncated.load(Ordering::Relaxed) as f64 / d as f64
        }
    }

    pub fn run<M: Marker + ?Sized>(&self, horizon: f64, marker: &mut M, stream: StreamId) -> Result<NoisyRecord> {
        let mut rng = stream.rng();
        let mut noise_rng = stream.noise_rng();
        let mut draws = 0u64;
        let mut truncated = 0u64;
        let mut draw = |r: &mut rand_chacha::ChaCha8Rng| {
            let (x, t) = self.noise.draw(r);
            draws += 1;
            truncated += t as u64;
            x
        };
        let lambda0 = draw(&mut noise_rng);
        let pi = self.steady_state(lambda0)?;
        let n0 = sample_index(&pi, &mut rng);
        let initial = pi.eigenstate(n0);
        let first = self.propagator(lambda0)?;
        let segment = if self.noise.sigma == 0.0 { f64::INFINITY } else { self.noise.dt };
        let mut models = |_: usize| self.propagator(draw(&mut noise_rng));
        let raw = integrate(first, &mut models, segment, &initial, horizon, &[], marker, &mut rng)?;
        drop(models);
        self.draws.fetch_add(draws, Ordering::Relaxed);
        self.truncated.fetch_add(truncated, Ordering::Relaxed);
        Ok(NoisyRecord {
            record: TrajectoryRecord {
                stream,
                params: self.params_for(self.key(lambda0).1),
                initial_index: Some(n0),
                initial_state: initial,
                horizon: raw.horizon,
                events: raw.events,
                snapshots: raw.snapshots,
                final_state: raw.final_state,
            },
            lambda0,
            draws,
            truncated,
        })
    }

    pub fn run_ensemble<M, F>(&self, n: u64, seed: u64, horizon: f64, make_marker: F) -> Result<Vec<NoisyRecord>>
    where
        M: Marker,
        F: Fn(u64) -> M + Sync + Send,
    {
        map_indices(n, |i| self.run(horizon, &mut make_marker(i), StreamId::new(seed, i))).into_iter().collect()
    }
}

/// One trajectory with a noisy drive; builds a fresh engine, so use
/// [`NoisyEngine`] directly for ensembles.
pub fn run_noisy_trajectory<M: Marker + ?Sized>(
    params: &ClockParams,
    noise: &NoiseModel,
    horizon: f64,
    marker: &mut M,
    stream: StreamId,
) -> Result<NoisyRecord> {
    NoisyEngine::new(*params, *noise)?.run(horizon, marker, stream)
}

/// Clock performance of one observable at one noise level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservablePoint {
    pub observable: CountingObservable,
    pub threshold: u64,
    pub merit: MeritSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub sigma_rel: f64,
    pub rabi: RabiBenchmark,
    pub points: Vec<ObservablePoint>,
    pub truncation_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub observable: CountingObservable,
    /// First noise level where the clock Fano factor is below the Rabi one;
    /// `None` if it never happens on the grid.
    pub sigma_rel: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverTable {
    pub rows: Vec<CrossoverRow>,
    pub crossovers: Vec<Crossover>,
    pub noise_dt: f64,
    pub trajectories: u64,
}

/// Settings for [`crossover_scan`].
#[derive(Clone, Debug)]
pub struct ScanSettings {
    /// Observables with the threshold each is evaluated at.
    pub thresholds: Vec<(CountingObservable, u64)>,
    pub trajectories: u64,
    pub seed: u64,
    /// Waits required per trajectory (one more tick is collected).
    pub min_ticks: usize,
    /// `None` selects [`default_noise_dt`].
    pub noise_dt: Option<f64>,
}

/// Clock Fano factors per observable across a grid of relative noise
/// levels, next to the Rabi benchmark at each level.
pub fn crossover_scan(params: &ClockParams, sigma_grid: &[f64], settings: &ScanSettings) -> Result<CrossoverTable> {
    if sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("noise grid must be strictly ascending".into()));
    }
    if settings.thresholds.is_empty() {
        return Err(Error::InvalidParams("no observables to scan".into()));
    }
    let dt = settings.noise_dt.unwrap_or_else(|| default_noise_dt(params));
    let base = NoisyEngine::new(*params, NoiseModel::new(params.lambda, 0.0, dt)?)?;
    let pi = base.steady_state(params.lambda)?;
    let (jm, jp) = pi.jump_rates(&build_operators(params)?);
    let targets: Vec<(CountingObservable, i64)> =
        settings.thresholds.iter().map(|&(o, m)| (o, (settings.min_ticks as i64 + 1) * m as i64)).collect();
    // generous cap: ten times the slowest expected fill time
    let horizon = 10.0
        * targets
            .iter()
            .map(|(o, n)| *n as f64 / o.rate(jm, jp).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);

    let mut rows = Vec::with_capacity(sigma_grid.len());
    for &s in sigma_grid {
        let noise = NoiseModel::relative(params.lambda, s, dt)?;
        let engine = NoisyEngine::new(*params, noise)?;
        let recs = engine.run_ensemble(settings.trajectories, settings.seed, horizon, |_| CountStop::new(targets.clone()))?;
        let mut points = Vec::new();
        for &(obs, m) in &settings.thresholds {
            let paths: Vec<_> = recs.iter().map(|r| accumulate(&r.record, obs)).collect();
            let (groups, _) = grouped_waits(&paths, m)?;
            points.push(ObservablePoint { observable: obs, threshold: m, merit: merit_grouped(&groups)? });
        }
        rows.push(CrossoverRow {
            sigma_rel: s,
            rabi: rabi_benchmark(&noise, params.gamma0),
            points,
            truncation_fraction: engine.truncation_fraction(),
        });
    }
    let crossovers = settings
        .thresholds
        .iter()
        .enumerate()
        .map(|(k, &(obs, _))| Crossover {
            observable: obs,
            sigma_rel: rows.iter().find(|r| r.points[k].merit.fano < r.rabi.fano).map(|r| r.sigma_rel),
        })
        .collect();
    Ok(CrossoverTable { rows, crossovers, noise_dt: dt, trajectories: settings.trajectories })
}

impl CrossoverTable {
    /// Columns `sigma_rel, F_<obs>..., F_rabi, dF_<obs>...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let names: Vec<String> = self.rows.first().map(|r| r.points.iter().map(|p| p.observable.name()).collect()).unwrap_or_default();
        let mut header = vec!["sigma_rel".to_string()];
        header.extend(names.iter().map(|n| format!("F_{n}")));
        header.push("F_rabi".into());
        header.extend(names.iter().map(|n| format!("dF_{n}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![format!("{}", r.sigma_rel)];
            row.extend(r.points.iter().map(|p| format!("{:.10e}", p.merit.fano)));
            row.push(format!("{:.10e}", r.rabi.fano));
            row.extend(r.points.iter().map(|p| format!("{:.10e}", p.merit.fano_err)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
