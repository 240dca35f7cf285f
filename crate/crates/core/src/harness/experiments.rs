//! Ensemble experiments behind the run modes. Each returns plain data; file
//! output lives in `run`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{crossover_scan, CrossoverTable, ScanSettings};
use crate::rng::map_slice;
use crate::spin::ClockParams;
use crate::thermo::{ft_estimator, stopping_entropies, tick_ledgers, tur_kur_report, FtEstimate, TickLedger, TurKurReport};
use crate::ticks::{
    accumulate, count_spectrum, default_m_grid, extract_ticks, grouped_waits, merit_grouped, optimal_threshold,
    sweep_thresholds, CountPath, CountStop, CountingObservable, MeritSummary, OptimalThreshold, TickMarker, TradeoffPoint,
};
use crate::trajectory::{RunOptions, Simulator, TrajectoryRecord};

use super::fit::{fit_power_law, fit_resolution, fit_threshold_scaling, tc_frequency, FitResult};

/// Budget shared by the ensemble experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub trajectories: u64,
    pub seed: u64,
    /// Waiting times wanted per trajectory at the largest threshold.
    pub min_ticks: usize,
}

/// Safety cap on run length: ten times the expected time to reach `count`.
pub fn horizon_cap(count: f64, rate: f64) -> f64 {
    10.0 * count / rate.max(f64::MIN_POSITIVE)
}

fn counting_rate(sim: &Simulator, obs: CountingObservable) -> Result<f64> {
    let (jm, jp) = sim.jump_rates();
    let r = obs.rate(jm, jp);
    if !(r > 0.0) {
        return Err(Error::InsufficientStatistics(format!("mean rate of {} is {r:.3e}; it never ticks", obs.name())));
    }
    Ok(r)
}

/// Records long enough for `min_ticks` waits at threshold `max_m`.
pub fn count_ensemble(sim: &Simulator, obs: CountingObservable, max_m: u64, budget: &Budget) -> Result<Vec<TrajectoryRecord>> {
    let target = (budget.min_ticks as i64 + 1) * max_m as i64;
    let horizon = horizon_cap(target as f64, counting_rate(sim, obs)?);
    sim.run_ensemble(budget.trajectories, budget.seed, &RunOptions::horizon(horizon), |_| CountStop::new(vec![(obs, target)]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffResult {
    pub observable: CountingObservable,
    pub curve: Vec<TradeoffPoint>,
    pub optimal: OptimalThreshold,
    /// Points on a linear grid between the neighbours of the coarse choice.
    pub refined: Vec<TradeoffPoint>,
    /// Threshold of highest accuracy on the refined grid.
    pub threshold: u64,
    pub merit: MeritSummary,
    pub trajectories: u64,
}

fn refine(paths: &[CountPath], grid: &[u64], index: usize) -> Result<Vec<TradeoffPoint>> {
    let lo = grid[index.saturating_sub(1)];
    let hi = grid[(index + 1).min(grid.len() - 1)];
    let mut fine: Vec<u64> = (0..=16).map(|k| lo + ((hi - lo) as f64 * k as f64 / 16.0).round() as u64).collect();
    fine.dedup();
    sweep_thresholds(paths, &fine)
}

/// Accuracy and resolution across a threshold grid, with `M*` refined
/// around the first significant accuracy peak.
pub fn tradeoff(sim: &Simulator, obs: CountingObservable, grid: &[u64], budget: &Budget) -> Result<TradeoffResult> {
    let max_m = *grid.iter().max().ok_or_else(|| Error::Config("empty threshold grid".into()))?;
    let records = count_ensemble(sim, obs, max_m, budget)?;
    let paths: Vec<CountPath> = records.iter().map(|r| accumulate(r, obs)).collect();
    drop(records);
    tradeoff_from_paths(&paths, obs, grid, budget.trajectories)
}

pub fn tradeoff_from_paths(paths: &[CountPath], obs: CountingObservable, grid: &[u64], trajectories: u64) -> Result<TradeoffResult> {
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let curve = sweep_thresholds(paths, &grid)?;
    let optimal = optimal_threshold(&curve)?;
    let usable: Vec<u64> = curve.iter().filter(|p| p.merit.is_some()).map(|p| p.threshold).collect();
    let at = usable.iter().position(|&m| m == optimal.threshold).unwrap_or(0);
    let (refined, threshold, merit) = if optimal.has_peak && usable.len() > 2 {
        let refined = refine(paths, &usable, at)?;
        let best = refined
            .iter()
            .filter_map(|p| p.merit.map(|m| (p.threshold, m)))
            .max_by(|a, b| a.1.accuracy.total_cmp(&b.1.accuracy))
            .ok_or_else(|| Error::InsufficientStatistics("no usable point near the accuracy peak".into()))?;
        (refined, best.0, best.1)
    } else {
        (Vec::new(), optimal.threshold, curve.iter().find(|p| p.threshold == optimal.threshold).and_then(|p| p.merit).unwrap())
    };
    Ok(TradeoffResult { observable: obs, curve, optimal, refined, threshold, merit, trajectories })
}

/// Ticks, waiting times and per-tick thermodynamic ledgers at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoResult {
    pub observable: CountingObservable,
    pub threshold: u64,
    pub merit: MeritSummary,
    pub report: TurKurReport,
    /// Ledgers grouped per trajectory.
    pub ledgers: Vec<Vec<TickLedger>>,
}

pub fn thermo_ensemble(sim: &Simulator, obs: CountingObservable, threshold: u64, budget: &Budget) -> Result<ThermoResult> {
    let beta = sim.ops.params.beta;
    let ticks_wanted = budget.min_ticks + 1;
    let horizon = horizon_cap((ticks_wanted as u64 * threshold) as f64, counting_rate(sim, obs)?);
    let records = sim.run_ensemble(budget.trajectories, budget.seed, &RunOptions::horizon(horizon), |_| {
        let mut m = TickMarker::new(obs, threshold);
        m.stop_after_ticks = Some(ticks_wanted);
        m
    })?;
    let per: Vec<Result<(Vec<f64>, Vec<TickLedger>)>> = map_slice(&records, |r| {
        let ticks = extract_ticks(&accumulate(r, obs), threshold)?;
        Ok((ticks.waits(), tick_ledgers(r, &ticks, &sim.ness, beta)?))
    });
    let (waits, ledgers): (Vec<Vec<f64>>, Vec<Vec<TickLedger>>) = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let merit = merit_grouped(&waits)?;
    let report = tur_kur_report(&merit, &ledgers)?;
    Ok(ThermoResult { observable: obs, threshold, merit, report, ledgers })
}

/// Stopping-time fluctuation theorem estimates for one observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtCheck {
    pub observable: CountingObservable,
    pub threshold: u64,
    /// `⟨e^{-S_mar(T₁)}⟩`.
    pub first_tick: FtEstimate,
    /// `⟨e^{-S_tick}⟩` over the first tick interval.
    pub tick: FtEstimate,
    /// Trajectories that reached both ticks before the horizon.
    pub complete: usize,
}

pub fn ft_check(sim: &Simulator, obs: CountingObservable, threshold: u64, samples: u64, seed: u64) -> Result<FtCheck> {
    let beta = sim.ops.params.beta;
    let horizon = horizon_cap((2 * threshold) as f64, counting_rate(sim, obs)?);
    let records = sim.run_ensemble(samples, seed, &RunOptions::horizon(horizon), |_| {
        let mut m = TickMarker::new(obs, threshold);
        m.stop_after_ticks = Some(2);
        m
    })?;
    let per = map_slice(&records, |r| stopping_entropies(r, &extract_ticks(&accumulate(r, obs), threshold)?, &sim.ness, beta));
    let s = per.into_iter().collect::<Result<Vec<_>>>()?;
    let first: Vec<f64> = s.iter().map(|x| x.s_mar_first).collect();
    let tick: Vec<f64> = s.iter().map(|x| x.s_tick).collect();
    Ok(FtCheck {
        observable: obs,
        threshold,
        first_tick: ft_estimator(&first),
        tick: ft_estimator(&tick),
        complete: s.iter().filter(|x| x.ticks >= 2).count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub nu: f64,
    pub threshold: u64,
    pub has_peak: bool,
    pub merit: MeritSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub observable: CountingObservable,
    pub rows: Vec<LambdaRow>,
    pub resolution_fit: Option<FitResult>,
    pub threshold_fit: Option<FitResult>,
}

/// Optimal-threshold merit across drive strengths, with the frequency-lock
/// and threshold-scaling fits where enough points qualify.
pub fn lambda_sweep(
    params: &ClockParams,
    lambdas: &[f64],
    obs: CountingObservable,
    grid: Option<&[u64]>,
    budget: &Budget,
) -> Result<LambdaSweep> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let p = params.with_lambda(l);
        let sim = Simulator::from_params(&p)?;
        let g = grid.map(|g| g.to_vec()).unwrap_or_else(|| default_m_grid(p.spin(), l));
        let t = tradeoff(&sim, obs, &g, budget)?;
        rows.push(LambdaRow { lambda: l, nu: tc_frequency(p.gamma0, l), threshold: t.threshold, has_peak: t.optimal.has_peak, merit: t.merit });
    }
    let ls: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let rs: Vec<f64> = rows.iter().map(|r| r.merit.resolution).collect();
    let ms: Vec<f64> = rows.iter().map(|r| r.threshold as f64).collect();
    let peaks: Vec<bool> = rows.iter().map(|r| r.has_peak).collect();
    Ok(LambdaSweep {
        observable: obs,
        resolution_fit: fit_resolution(params.gamma0, &ls, &rs).ok(),
        threshold_fit: fit_threshold_scaling(params.spin(), &ls, &ms, &peaks).ok(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinRow {
    pub spin2: u32,
    pub threshold: u64,
    pub merit: MeritSummary,
    pub report: TurKurReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSweep {
    pub observable: CountingObservable,
    pub rows: Vec<SpinRow>,
    /// `ln A` against `ln S`.
    pub accuracy_fit: Option<FitResult>,
    /// `ln ⟨S_tick⟩` against `ln S`.
    pub entropy_fit: Option<FitResult>,
    /// `ln ⟨K_tick⟩` against `ln S`.
    pub activity_fit: Option<FitResult>,
}

/// For each spin size: locate `M*`, then measure accuracy and per-tick
/// entropy there on a fresh ensemble.
pub fn spin_sweep(params: &ClockParams, spins2: &[u32], obs: CountingObservable, budget: &Budget) -> Result<SpinSweep> {
    let mut rows = Vec::with_capacity(spins2.len());
    for &n in spins2 {
        let p = ClockParams { spin2: n, ..*params };
        let sim = Simulator::from_params(&p)?;
        let t = tradeoff(&sim, obs, &default_m_grid(p.spin(), p.lambda), budget)?;
        let th = thermo_ensemble(&sim, obs, t.threshold, &Budget { seed: budget.seed.wrapping_add(1), ..*budget })?;
        rows.push(SpinRow { spin2: n, threshold: t.threshold, merit: th.merit, report: th.report });
    }
    let s: Vec<f64> = rows.iter().map(|r| 0.5 * r.spin2 as f64).collect();
    let col = |f: fn(&SpinRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    Ok(SpinSweep {
        observable: obs,
        accuracy_fit: fit_power_law(&s, &col(|r| r.merit.accuracy)).ok(),
        entropy_fit: fit_power_law(&s, &col(|r| r.report.mean_s_tick)).ok(),
        activity_fit: fit_power_law(&s, &col(|r| r.report.mean_k_tick)).ok(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseResult {
    /// Noiseless optimum per observable.
    pub noiseless: Vec<(CountingObservable, u64, MeritSummary)>,
    pub table: CrossoverTable,
}

/// Locate each observable's noiseless `M*`, then scan noise levels at it.
pub fn noise_scan(
    params: &ClockParams,
    observables: &[CountingObservable],
    sigma_grid: &[f64],
    noise_dt: Option<f64>,
    budget: &Budget,
) -> Result<NoiseResult> {
    let sim = Simulator::from_params(params)?;
    let grid = default_m_grid(params.spin(), params.lambda);
    let mut noiseless = Vec::new();
    for &o in observables {
        let t = tradeoff(&sim, o, &grid, budget)?;
        noiseless.push((o, t.threshold, t.merit));
    }
    let settings = ScanSettings {
        thresholds: noiseless.iter().map(|(o, m, _)| (*o, *m)).collect(),
        trajectories: budget.trajectories,
        seed: budget.seed.wrapping_add(2),
        min_ticks: budget.min_ticks,
        noise_dt,
    };
    Ok(NoiseResult { table: crossover_scan(params, sigma_grid, &settings)?, noiseless })
}

/// Frequency grid covering a few multiples of the mean-field frequency.
pub fn default_omegas(params: &ClockParams, horizon: f64) -> Vec<f64> {
    let top = 4.0 * params.gamma0 * params.lambda.max(1.0);
    let n = 400;
    let step = (top / n as f64).max(std::f64::consts::PI / horizon);
    (0..=n).map(|k| k as f64 * step).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub observable: CountingObservable,
    pub horizon: f64,
    pub omegas: Vec<f64>,
    /// Trajectory-averaged `|Ñ(ω)|`.
    pub magnitude: Vec<f64>,
}

/// Mean detrended count spectrum over fixed-length records.
pub fn spectrum(sim: &Simulator, obs: CountingObservable, horizon: f64, omegas: &[f64], budget: &Budget) -> Result<SpectrumResult> {
    let records = sim.run_ensemble(budget.trajectories, budget.seed, &RunOptions::horizon(horizon), |_| crate::trajectory::NoMarkers)?;
    let specs: Vec<Vec<f64>> = map_slice(&records, |r| count_spectrum(&accumulate(r, obs), omegas));
    let n = specs.len() as f64;
    let magnitude = (0..omegas.len()).map(|k| specs.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    Ok(SpectrumResult { observable: obs, horizon, omegas: omegas.to_vec(), magnitude })
}

/// Pooled waits of an ensemble at one threshold.
pub fn waits_at(paths: &[CountPath], threshold: u64) -> Result<Vec<f64>> {
    Ok(grouped_waits(paths, threshold)?.0.into_iter().flatten().collect())
}
