//! Clock ticks from counting records: first-passage thresholds, waiting-time
//! statistics, accuracy/resolution tradeoff curves and count spectra.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::map_slice;
use crate::spin::{JumpKind, C64};
use crate::trajectory::{JumpContext, JumpEvent, Marker, MarkerAction, TrajectoryRecord};

/// `N(t) = a₋ N₋(t) + a₊ N₊(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountingObservable {
    pub a_minus: i64,
    pub a_plus: i64,
}

impl CountingObservable {
    pub const EMISSIONS: Self = CountingObservable { a_minus: 1, a_plus: 0 };
    pub const ACTIVITY: Self = CountingObservable { a_minus: 1, a_plus: 1 };
    pub const HEAT: Self = CountingObservable { a_minus: 1, a_plus: -1 };
    pub const PRESETS: [Self; 3] = [Self::EMISSIONS, Self::ACTIVITY, Self::HEAT];

    pub fn new(a_minus: i64, a_plus: i64) -> Result<Self> {
        if a_minus == 0 && a_plus == 0 {
            return Err(Error::InvalidParams("counting weights (0, 0) never tick".into()));
        }
        Ok(CountingObservable { a_minus, a_plus })
    }

    pub fn weight(&self, kind: JumpKind) -> i64 {
        match kind {
            JumpKind::Emission => self.a_minus,
            JumpKind::Absorption => self.a_plus,
        }
    }

    /// Increments of magnitude at most one cannot skip a level.
    pub fn is_unit(&self) -> bool {
        self.a_minus.abs() <= 1 && self.a_plus.abs() <= 1
    }

    /// Mean counting rate given per-channel jump rates.
    pub fn rate(&self, j_minus: f64, j_plus: f64) -> f64 {
        self.a_minus as f64 * j_minus + self.a_plus as f64 * j_plus
    }

    pub fn name(&self) -> String {
        match *self {
            Self::EMISSIONS => "emissions".into(),
            Self::ACTIVITY => "activity".into(),
            Self::HEAT => "heat".into(),
            CountingObservable { a_minus, a_plus } => format!("{a_minus},{a_plus}"),
        }
    }
}

impl fmt::Display for CountingObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for CountingObservable {
    type Err = Error;

    /// Preset name or `a_minus,a_plus`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "emissions" => Ok(Self::EMISSIONS),
            "activity" => Ok(Self::ACTIVITY),
            "heat" => Ok(Self::HEAT),
            other => {
                let parts: Vec<&str> = other.split(',').collect();
                let bad = || Error::Config(format!("unknown observable '{s}'"));
                if parts.len() != 2 {
                    return Err(bad());
                }
                let a = parts[0].trim().parse().map_err(|_| bad())?;
                let b = parts[1].trim().parse().map_err(|_| bad())?;
                CountingObservable::new(a, b)
            }
        }
    }
}

/// Piecewise-constant counting path: `values[k]` holds on
/// `[times[k], times[k+1])`, starting from `N = 0` at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CountPath {
    pub observable: CountingObservable,
    pub times: Vec<f64>,
    pub kinds: Vec<JumpKind>,
    pub values: Vec<i64>,
    pub horizon: f64,
}

impl CountPath {
    pub fn from_events(events: &[JumpEvent], horizon: f64, obs: CountingObservable) -> Self {
        let mut n = 0i64;
        let mut values = Vec::with_capacity(events.len());
        for e in events {
            n += obs.weight(e.kind);
            values.push(n);
        }
        CountPath {
            observable: obs,
            times: events.iter().map(|e| e.time).collect(),
            kinds: events.iter().map(|e| e.kind).collect(),
            values,
            horizon,
        }
    }

    pub fn value_at(&self, t: f64) -> i64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            0
        } else {
            self.values[k - 1]
        }
    }

    pub fn final_value(&self) -> i64 {
        self.values.last().copied().unwrap_or(0)
    }
}

pub fn accumulate(record: &TrajectoryRecord, obs: CountingObservable) -> CountPath {
    CountPath::from_events(&record.events, record.horizon, obs)
}

/// Ticks of one path at threshold `M`. Interval `i` runs from tick `i-1`
/// (or `t = 0` for `i = 0`) to tick `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TickSeries {
    pub threshold: u64,
    pub tick_times: Vec<f64>,
    /// Number of events up to and including the tick-triggering jump.
    pub tick_events: Vec<usize>,
    pub dn_minus: Vec<u64>,
    pub dn_plus: Vec<u64>,
    pub horizon: f64,
}

impl TickSeries {
    pub fn len(&self) -> usize {
        self.tick_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tick_times.is_empty()
    }

    /// Waiting times between consecutive ticks; the interval `[0, T₁]` is
    /// not included.
    pub fn waits(&self) -> Vec<f64> {
        self.tick_times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// First-passage ticks: `T_i` is the first time `N(t) = iM`. Observables
/// with weights larger than one use `N(t) ≥ iM`, one tick per event.
pub fn extract_ticks(path: &CountPath, threshold: u64) -> Result<TickSeries> {
    if threshold == 0 {
        return Err(Error::InvalidParams("threshold M must be >= 1".into()));
    }
    let m = threshold as i64;
    let exact = path.observable.is_unit();
    let mut s = TickSeries {
        threshold,
        tick_times: Vec::new(),
        tick_events: Vec::new(),
        dn_minus: Vec::new(),
        dn_plus: Vec::new(),
        horizon: path.horizon,
    };
    let mut level = m;
    let (mut dm, mut dp) = (0u64, 0u64);
    for (k, (&t, &n)) in path.times.iter().zip(&path.values).enumerate() {
        if t > path.horizon {
            break;
        }
        match path.kinds[k] {
            JumpKind::Emission => dm += 1,
            JumpKind::Absorption => dp += 1,
        }
        let hit = if exact { n == level } else { n >= level };
        if hit {
            s.tick_times.push(t);
            s.tick_events.push(k + 1);
            s.dn_minus.push(dm);
            s.dn_plus.push(dp);
            dm = 0;
            dp = 0;
            level += m;
        }
    }
    Ok(s)
}

/// Snapshots the state at every tick of one observable and threshold, and
/// optionally ends the run after a number of ticks or once `N` reaches a
/// count.
#[derive(Clone, Debug)]
pub struct TickMarker {
    observable: CountingObservable,
    threshold: i64,
    level: i64,
    count: i64,
    pub ticks: usize,
    pub snapshots: bool,
    pub stop_after_ticks: Option<usize>,
    pub stop_at_count: Option<i64>,
}

impl TickMarker {
    pub fn new(observable: CountingObservable, threshold: u64) -> Self {
        TickMarker {
            observable,
            threshold: threshold as i64,
            level: threshold as i64,
            count: 0,
            ticks: 0,
            snapshots: true,
            stop_after_ticks: None,
            stop_at_count: None,
        }
    }

    /// Stop once `N` first reaches `count`, without snapshots.
    pub fn until_count(observable: CountingObservable, count: i64) -> Self {
        TickMarker { snapshots: false, stop_at_count: Some(count), ..TickMarker::new(observable, count.max(1) as u64) }
    }
}

impl Marker for TickMarker {
    fn on_jump(&mut self, ctx: &JumpContext) -> MarkerAction {
        self.count += self.observable.weight(ctx.kind);
        let hit = if self.observable.is_unit() { self.count == self.level } else { self.count >= self.level };
        if hit {
            self.ticks += 1;
            self.level += self.threshold;
        }
        let stop = self.stop_after_ticks.is_some_and(|k| self.ticks >= k) || self.stop_at_count.is_some_and(|c| self.count >= c);
        MarkerAction { snapshot: hit && self.snapshots, stop }
    }
}

/// Ends a run once every listed observable has reached its target count.
#[derive(Clone, Debug)]
pub struct CountStop {
    targets: Vec<(CountingObservable, i64)>,
    counts: Vec<i64>,
}

impl CountStop {
    pub fn new(targets: Vec<(CountingObservable, i64)>) -> Self {
        let counts = vec![0; targets.len()];
        CountStop { targets, counts }
    }
}

impl Marker for CountStop {
    fn on_jump(&mut self, ctx: &JumpContext) -> MarkerAction {
        let mut done = true;
        for ((obs, target), n) in self.targets.iter().zip(self.counts.iter_mut()) {
            *n += obs.weight(ctx.kind);
            done &= *n >= *target;
        }
        MarkerAction { snapshot: false, stop: done }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeritSummary {
    pub samples: usize,
    /// Number of jackknife groups (trajectories, or samples if ungrouped).
    pub groups: usize,
    pub mean_wait: f64,
    pub var_wait: f64,
    pub resolution: f64,
    /// `f64::INFINITY` when all waits coincide.
    pub accuracy: f64,
    pub fano: f64,
    pub resolution_err: f64,
    pub accuracy_err: f64,
    pub fano_err: f64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Moments {
    fn minus(&self, o: &Moments) -> Moments {
        Moments { n: self.n - o.n, s1: self.s1 - o.s1, s2: self.s2 - o.s2 }
    }

    /// (mean, unbiased variance) of the shifted sample; `None` below two points.
    fn stats(&self, shift: f64) -> Option<(f64, f64)> {
        if self.n < 2.0 {
            return None;
        }
        let m = self.s1 / self.n;
        let var = ((self.s2 - self.n * m * m) / (self.n - 1.0)).max(0.0);
        Some((m + shift, var))
    }
}

fn figures(mean: f64, var: f64) -> (f64, f64, f64) {
    let r = 1.0 / mean;
    if var == 0.0 {
        (r, f64::INFINITY, 0.0)
    } else {
        (r, mean * mean / var, var / mean)
    }
}

fn jackknife(estimates: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let g = estimates.len() as f64;
    if g < 2.0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let se = |f: fn(&(f64, f64, f64)) -> f64| {
        let vals: Vec<f64> = estimates.iter().map(f).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let m = vals.iter().sum::<f64>() / g;
        ((g - 1.0) / g * vals.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
    };
    (se(|e| e.0), se(|e| e.1), se(|e| e.2))
}

/// Figures of merit with leave-one-out jackknife errors over single waits.
pub fn merit(waits: &[f64]) -> Result<MeritSummary> {
    let groups: Vec<&[f64]> = waits.chunks(1).collect();
    merit_groups(&groups)
}

/// Pooled figures of merit; errors by leave-one-group-out jackknife, where a
/// group is the set of waits from one trajectory.
pub fn merit_grouped(groups: &[Vec<f64>]) -> Result<MeritSummary> {
    let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
    merit_groups(&refs)
}

fn merit_groups(groups: &[&[f64]]) -> Result<MeritSummary> {
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if n < 2 {
        return Err(Error::InsufficientStatistics(format!("{n} waiting times; need at least 2")));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParams("waiting times must be finite and positive".into()));
    }
    let shift = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let parts: Vec<Moments> = groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let mut m = Moments::default();
            for &w in g.iter() {
                let x = w - shift;
                m.n += 1.0;
                m.s1 += x;
                m.s2 += x * x;
            }
            m
        })
        .collect();
    let total = parts.iter().fold(Moments::default(), |a, p| Moments { n: a.n + p.n, s1: a.s1 + p.s1, s2: a.s2 + p.s2 });
    let (mean, var) = total.stats(shift).expect("n >= 2");
    let (r, a, f) = figures(mean, var);
    let leave_out: Vec<(f64, f64, f64)> = parts
        .iter()
        .filter_map(|p| total.minus(p).stats(shift))
        .map(|(m, v)| figures(m, v))
        .collect();
    let (dr, da, df) = jackknife(&leave_out);
    Ok(MeritSummary {
        samples: n,
        groups: parts.len(),
        mean_wait: mean,
        var_wait: var,
        resolution: r,
        accuracy: a,
        fano: f,
        resolution_err: dr,
        accuracy_err: da,
        fano_err: df,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub threshold: u64,
    pub ticks: usize,
    /// `None` when fewer than two waits were recorded.
    pub merit: Option<MeritSummary>,
}

/// Waits at threshold `M` grouped per path.
pub fn grouped_waits(paths: &[CountPath], threshold: u64) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut ticks = 0;
    let mut groups = Vec::with_capacity(paths.len());
    for p in paths {
        let s = extract_ticks(p, threshold)?;
        ticks += s.len();
        groups.push(s.waits());
    }
    Ok((groups, ticks))
}

/// One merit summary per threshold, thresholds processed in parallel.
pub fn sweep_thresholds(paths: &[CountPath], grid: &[u64]) -> Result<Vec<TradeoffPoint>> {
    map_slice(grid, |&m| {
        let (groups, ticks) = grouped_waits(paths, m)?;
        let merit = match merit_grouped(&groups) {
            Ok(s) => Some(s),
            Err(Error::InsufficientStatistics(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(TradeoffPoint { threshold: m, ticks, merit })
    })
    .into_iter()
    .collect()
}

/// `R(M)` non-increasing along the curve up to two combined standard errors.
pub fn resolution_decreasing(curve: &[TradeoffPoint]) -> bool {
    let pts: Vec<&MeritSummary> = curve.iter().filter_map(|p| p.merit.as_ref()).collect();
    pts.windows(2).all(|w| {
        let tol = 2.0 * (w[0].resolution_err.powi(2) + w[1].resolution_err.powi(2)).sqrt();
        w[1].resolution <= w[0].resolution + if tol.is_finite() { tol } else { 0.0 }
    })
}

/// 40 log-spaced thresholds over `[S/2, 40S]` in the oscillating phase and
/// over `[1, 100]` below it.
pub fn default_m_grid(spin: f64, lambda: f64) -> Vec<u64> {
    let (lo, hi) = if lambda > 1.0 { ((spin / 2.0).max(1.0), 40.0 * spin) } else { (1.0, 100.0) };
    log_grid(lo, hi, 40)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<u64> {
    let mut g: Vec<u64> = (0..points)
        .map(|i| {
            let f = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            (lo * (hi / lo).powf(f)).round().max(1.0) as u64
        })
        .collect();
    g.dedup();
    g
}

pub fn moving_median(xs: &[f64], window: usize) -> Vec<f64> {
    let h = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(xs.len());
            let mut w: Vec<f64> = xs[lo..hi].to_vec();
            w.sort_by(|a, b| a.total_cmp(b));
            let k = w.len();
            if k % 2 == 1 {
                w[k / 2]
            } else {
                0.5 * (w[k / 2 - 1] + w[k / 2])
            }
        })
        .collect()
}

/// Interior local maxima of `ys`, plateaus reported at their first index.
pub fn local_maxima(ys: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < ys.len() {
        let mut j = i;
        while j + 1 < ys.len() && ys[j + 1] == ys[i] {
            j += 1;
        }
        if j + 1 < ys.len() && ys[i - 1] < ys[i] && ys[j + 1] < ys[i] {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Height of peak `i` above the higher of its two bases.
fn prominence(ys: &[f64], i: usize) -> f64 {
    let base = |range: &mut dyn Iterator<Item = usize>| {
        let mut lo = ys[i];
        for k in range {
            if ys[k] > ys[i] {
                break;
            }
            lo = lo.min(ys[k]);
        }
        lo
    };
    let left = base(&mut (0..i).rev());
    let right = base(&mut (i + 1..ys.len()));
    ys[i] - left.max(right)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalThreshold {
    pub threshold: u64,
    pub index: usize,
    /// False when no significant accuracy peak exists; `threshold` is then
    /// the global Fano minimizer.
    pub has_peak: bool,
    /// Whether the chosen peak also has the lowest Fano factor among peaks.
    pub fano_minimal: bool,
    pub peaks: Vec<u64>,
    /// Choice made with a window-5 median instead, for sensitivity.
    pub threshold_window5: Option<u64>,
}

fn pick_peak(ms: &[&TradeoffPoint], window: usize) -> Vec<usize> {
    let a: Vec<f64> = ms.iter().map(|p| p.merit.unwrap().accuracy.min(f64::MAX)).collect();
    let smooth = moving_median(&a, window);
    local_maxima(&smooth)
        .into_iter()
        .filter(|&i| {
            let err = ms[i].merit.unwrap().accuracy_err;
            let err = if err.is_finite() { err } else { 0.0 };
            prominence(&smooth, i) > 2.0 * err
        })
        .map(|i| {
            // raw maximum within the smoothed plateau
            let mut j = i;
            while j + 1 < smooth.len() && smooth[j + 1] == smooth[i] {
                j += 1;
            }
            (i..=j).max_by(|&x, &y| a[x].total_cmp(&a[y])).unwrap()
        })
        .collect()
}

/// `M*`: the smallest-threshold significant accuracy peak after window-3
/// median smoothing.
pub fn optimal_threshold(curve: &[TradeoffPoint]) -> Result<OptimalThreshold> {
    let ms: Vec<&TradeoffPoint> = curve.iter().filter(|p| p.merit.is_some()).collect();
    if ms.len() < 3 {
        return Err(Error::InsufficientStatistics(format!("{} usable tradeoff points; need 3", ms.len())));
    }
    let fano = |i: usize| ms[i].merit.unwrap().fano;
    let peaks = pick_peak(&ms, 3);
    let peaks5 = pick_peak(&ms, 5);
    let (index, has_peak) = match peaks.first() {
        Some(&i) => (i, true),
        None => {
            let i = (0..ms.len()).min_by(|&a, &b| fano(a).total_cmp(&fano(b))).unwrap();
            (i, false)
        }
    };
    let fano_minimal = has_peak && peaks.iter().all(|&j| fano(index) <= fano(j));
    let original = curve.iter().position(|p| p.threshold == ms[index].threshold).unwrap();
    Ok(OptimalThreshold {
        threshold: ms[index].threshold,
        index: original,
        has_peak,
        fano_minimal,
        peaks: peaks.iter().map(|&i| ms[i].threshold).collect(),
        threshold_window5: peaks5.first().map(|&i| ms[i].threshold),
    })
}

pub fn write_tradeoff_csv(path: &Path, curve: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["M", "R", "A", "F", "dR", "dA", "dF"])?;
    for p in curve {
        if let Some(m) = &p.merit {
            w.write_record(
                [m.resolution, m.accuracy, m.fano, m.resolution_err, m.accuracy_err, m.fano_err]
                    .iter()
                    .map(|x| format!("{x:.10e}"))
                    .fold(vec![p.threshold.to_string()], |mut v, s| {
                        v.push(s);
                        v
                    }),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `|Ñ(ω)|` of the detrended path `N(t) - N(τ) t/τ` on `[0, τ]`, with the
/// Fourier integral of the step function evaluated exactly.
pub fn count_spectrum(path: &CountPath, omegas: &[f64]) -> Vec<f64> {
    let tau = path.horizon;
    let jumps: Vec<(f64, f64)> = {
        let mut prev = 0i64;
        path.times
            .iter()
            .zip(&path.values)
            .filter(|(t, _)| **t <= tau)
            .map(|(&t, &v)| {
                let d = (v - prev) as f64;
                prev = v;
                (t, d)
            })
            .collect()
    };
    let n_tau = path.value_at(tau) as f64;
    map_slice(omegas, |&w| {
        if w == 0.0 {
            let area: f64 = jumps.iter().map(|(t, d)| d * (tau - t)).sum();
            return (area - 0.5 * n_tau * tau).abs();
        }
        // ∫ N e^{-iωt} = [Σ_k Δ_k e^{-iωt_k} - N(τ) e^{-iωτ}] / (iω)
        let mut acc = C64::new(0.0, 0.0);
        for &(t, d) in &jumps {
            acc += C64::new(0.0, -w * t).exp() * d;
        }
        let e_tau = C64::new(0.0, -w * tau).exp();
        acc -= e_tau * n_tau;
        let step = acc / C64::new(0.0, w);
        let ramp = (e_tau * C64::new(1.0, w * tau) - 1.0) / (w * w);
        (step - ramp * (n_tau / tau)).norm()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPeak {
    pub omega: f64,
    pub magnitude: f64,
    /// Peak magnitude over the median magnitude in the searched band.
    pub contrast: f64,
}

/// Highest interior local maximum with `ω ≥ omega_min`.
pub fn dominant_peak(omegas: &[f64], mags: &[f64], omega_min: f64) -> Option<SpectrumPeak> {
    let start = omegas.partition_point(|&w| w < omega_min);
    let band = &mags[start..];
    let best = local_maxima(band).into_iter().max_by(|&a, &b| band[a].total_cmp(&band[b]))?;
    let med = moving_median(band, 2 * band.len() + 1)[0];
    Some(SpectrumPeak {
        omega: omegas[start + best],
        magnitude: band[best],
        contrast: if med > 0.0 { band[best] / med } else { f64::INFINITY },
    })
}

pub fn write_spectrum_csv(path: &Path, omegas: &[f64], mags: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega", "magnitude"])?;
    for (o, m) in omegas.iter().zip(mags) {
        w.write_record([format!("{o:.10e}"), format!("{m:.10e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Binning rule used.
    pub rule: String,
    pub bin_width: f64,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Normalized waiting-time histogram with Freedman–Diaconis bins.
pub fn wtd_histogram(waits: &[f64]) -> Result<Histogram> {
    if waits.len() < 2 {
        return Err(Error::InsufficientStatistics("histogram needs at least 2 waits".into()));
    }
    let mut s = waits.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let (min, max) = (s[0], s[s.len() - 1]);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let n = s.len() as f64;
    let mut width = 2.0 * iqr / n.cbrt();
    let span = max - min;
    let bins = if width > 0.0 && span > 0.0 { ((span / width).ceil() as usize).clamp(1, 10_000) } else { 1 };
    if span > 0.0 {
        width = span / bins as f64;
    } else {
        width = 1.0;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| min + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &x in &s {
        let k = (((x - min) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram {
        rule: "freedman-diaconis".into(),
        bin_width: width,
        edges,
        density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
    })
}

impl Histogram {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bin_lo", "bin_hi", "density"])?;
        for (i, d) in self.density.iter().enumerate() {
            w.write_record([format!("{:.10e}", self.edges[i]), format!("{:.10e}", self.edges[i + 1]), format!("{d:.10e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn ev(t: f64, k: JumpKind) -> JumpEvent {
        JumpEvent { time: t, kind: k }
    }

    fn mixed() -> Vec<JumpEvent> {
        use JumpKind::*;
        vec![ev(1.0, Emission), ev(2.0, Absorption), ev(3.0, Emission), ev(4.0, Absorption), ev(5.0, Emission)]
    }

    #[test]
    fn presets_accumulate() {
        let e = mixed();
        assert_eq!(CountPath::from_events(&e, 10.0, CountingObservable::EMISSIONS).final_value(), 3);
        assert_eq!(CountPath::from_events(&e, 10.0, CountingObservable::ACTIVITY).final_value(), 5);
        assert_eq!(CountPath::from_events(&e, 10.0, CountingObservable::HEAT).final_value(), 1);
        let p = CountPath::from_events(&e, 10.0, CountingObservable::ACTIVITY);
        assert_eq!(p.value_at(0.5), 0);
        assert_eq!(p.value_at(2.0), 2);
        assert_eq!(p.value_at(4.5), 4);
    }

    #[test]
    fn observable_parsing() {
        assert_eq!("Heat".parse::<CountingObservable>().unwrap(), CountingObservable::HEAT);
        assert_eq!("2, 1".parse::<CountingObservable>().unwrap(), CountingObservable { a_minus: 2, a_plus: 1 });
        assert!("0,0".parse::<CountingObservable>().is_err());
        assert!("photons".parse::<CountingObservable>().is_err());
    }

    #[test]
    fn emission_ticks_hand_counted() {
        let e: Vec<_> = (1..=3).map(|i| ev(i as f64, JumpKind::Emission)).collect();
        let s = extract_ticks(&CountPath::from_events(&e, 10.0, CountingObservable::EMISSIONS), 2).unwrap();
        assert_eq!(s.tick_times, vec![2.0]);
        assert_eq!(s.tick_events, vec![2]);
    }

    #[test]
    fn heat_tick_after_dip() {
        use JumpKind::*;
        let e = vec![ev(1.0, Emission), ev(2.0, Emission), ev(3.0, Absorption), ev(4.0, Emission), ev(5.0, Emission)];
        let p = CountPath::from_events(&e, 10.0, CountingObservable::HEAT);
        let s = extract_ticks(&p, 3).unwrap();
        assert_eq!(s.tick_times, vec![5.0]);
        assert_eq!((s.dn_minus[0], s.dn_plus[0]), (4, 1));
    }

    #[test]
    fn ticks_land_exactly_on_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e: Vec<JumpEvent> = (0..5000)
            .map(|i| {
                let k = if rand::Rng::random_bool(&mut rng, 0.3) { JumpKind::Absorption } else { JumpKind::Emission };
                ev(i as f64 + 1.0, k)
            })
            .collect();
        for obs in CountingObservable::PRESETS {
            let p = CountPath::from_events(&e, 1e9, obs);
            for m in [1, 3, 17] {
                let s = extract_ticks(&p, m).unwrap();
                assert!(!s.is_empty());
                for (i, t) in s.tick_times.iter().enumerate() {
                    assert_eq!(p.value_at(*t), (i as i64 + 1) * m as i64);
                }
                let total: u64 = s.dn_minus.iter().chain(&s.dn_plus).sum();
                assert_eq!(total as usize, *s.tick_events.last().unwrap());
            }
        }
    }

    #[test]
    fn wide_weights_tick_once_per_event() {
        let e: Vec<_> = (1..=4).map(|i| ev(i as f64, JumpKind::Emission)).collect();
        let p = CountPath::from_events(&e, 10.0, CountingObservable::new(3, 0).unwrap());
        // N = 3, 6, 9, 12 against levels 2, 4, 6, 8
        assert_eq!(extract_ticks(&p, 2).unwrap().tick_times, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn horizon_truncates_and_empty_flagged() {
        let e: Vec<_> = (1..=10).map(|i| ev(i as f64, JumpKind::Emission)).collect();
        let p = CountPath::from_events(&e, 5.5, CountingObservable::EMISSIONS);
        assert_eq!(extract_ticks(&p, 2).unwrap().len(), 2);
        assert!(extract_ticks(&p, 6).unwrap().is_empty());
        assert!(extract_ticks(&p, 0).is_err());
    }

    #[test]
    fn merit_identities() {
        let w = [1.0, 2.0, 4.0, 3.5, 2.5];
        let m = merit(&w).unwrap();
        let mean = w.iter().sum::<f64>() / 5.0;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean_wait - mean).abs() < 1e-14);
        assert!((m.var_wait - var).abs() < 1e-13);
        assert!((m.accuracy - mean * mean / var).abs() < 1e-12);
        assert!((m.fano * m.resolution * m.accuracy - 1.0).abs() < 1e-12);
        assert!((m.fano - var / mean).abs() < 1e-12);
        assert!(m.accuracy_err > 0.0);
    }

    #[test]
    fn jackknife_mean_error_matches_textbook() {
        // For the mean, the delete-one jackknife error equals s/√n; check via 1/R.
        let w: Vec<f64> = (0..400).map(|i| 1.0 + (i as f64 * 0.618_034).fract()).collect();
        let m = merit(&w).unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let s = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // delta method on R = 1/mean agrees to leading order
        let approx = s / n.sqrt() / (mean * mean);
        assert!((m.resolution_err / approx - 1.0).abs() < 0.02);
    }

    #[test]
    fn constant_waits_give_infinite_accuracy() {
        let m = merit(&[2.0; 10]).unwrap();
        assert_eq!(m.accuracy, f64::INFINITY);
        assert_eq!(m.fano, 0.0);
        assert!(matches!(merit(&[1.0]), Err(Error::InsufficientStatistics(_))));
    }

    #[test]
    fn grouped_merit_equals_pooled_point_estimate() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![2.5, 1.5], vec![4.0, 1.0, 2.0, 2.2]];
        let flat: Vec<f64> = g.iter().flatten().copied().collect();
        let a = merit_grouped(&g).unwrap();
        let b = merit(&flat).unwrap();
        assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        assert_eq!(a.groups, 3);
        assert_eq!(b.groups, flat.len());
    }

    fn poisson_path(rate: f64, n: usize, seed: u64) -> CountPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = Exp::new(rate).unwrap();
        let mut t = 0.0;
        let e: Vec<JumpEvent> = (0..n)
            .map(|_| {
                t += exp.sample(&mut rng);
                ev(t, JumpKind::Emission)
            })
            .collect();
        CountPath::from_events(&e, t, CountingObservable::EMISSIONS)
    }

    #[test]
    fn poisson_threshold_grouping() {
        let rate = 3.0;
        for m in [1u64, 10] {
            let p = poisson_path(rate, 20_000 * m as usize, m);
            let s = merit(&extract_ticks(&p, m).unwrap().waits()).unwrap();
            assert!((s.accuracy / m as f64 - 1.0).abs() < 0.05, "M = {m}: A = {}", s.accuracy);
            assert!((s.resolution * m as f64 / rate - 1.0).abs() < 0.02);
            assert!((s.accuracy - m as f64).abs() < 3.0 * s.accuracy_err + 1e-9);
        }
    }

    #[test]
    fn poisson_sweep_is_monotone() {
        let p = poisson_path(1.0, 50_000, 5);
        let curve = sweep_thresholds(&[p], &[1, 2, 4, 8, 16]).unwrap();
        assert!(resolution_decreasing(&curve));
        let means: Vec<f64> = curve.iter().map(|c| c.merit.unwrap().mean_wait).collect();
        assert!(means.windows(2).all(|w| w[1] > w[0]));
        // no peak for a Poisson stream: accuracy rises monotonically
        let opt = optimal_threshold(&curve).unwrap();
        assert!(!opt.has_peak);
    }

    #[test]
    fn median_and_maxima() {
        assert_eq!(moving_median(&[1.0, 5.0, 2.0, 8.0, 3.0], 3), vec![3.0, 2.0, 5.0, 3.0, 5.5]);
        assert_eq!(local_maxima(&[0.0, 2.0, 1.0, 3.0, 3.0, 1.0, 4.0]), vec![1, 3]);
        assert!(local_maxima(&[1.0, 2.0, 3.0]).is_empty());
    }

    fn synthetic_curve(acc: &[f64]) -> Vec<TradeoffPoint> {
        acc.iter()
            .enumerate()
            .map(|(i, &a)| {
                let m = (i + 1) as u64 * 10;
                let r = 1.0 / m as f64;
                TradeoffPoint {
                    threshold: m,
                    ticks: 100,
                    merit: Some(MeritSummary {
                        samples: 100,
                        groups: 10,
                        mean_wait: 1.0 / r,
                        var_wait: 1.0 / (r * r * a),
                        resolution: r,
                        accuracy: a,
                        fano: 1.0 / (r * a),
                        resolution_err: 0.0,
                        accuracy_err: 0.1,
                        fano_err: 0.0,
                    }),
                }
            })
            .collect()
    }

    #[test]
    fn optimal_threshold_picks_first_peak() {
        let curve = synthetic_curve(&[1.0, 3.0, 6.0, 9.0, 10.0, 9.0, 7.0, 6.0, 8.0, 12.0, 14.0, 13.0, 10.0, 8.0]);
        let opt = optimal_threshold(&curve).unwrap();
        assert!(opt.has_peak);
        assert_eq!(opt.threshold, 50);
        assert_eq!(opt.peaks, vec![50, 110]);
        assert_eq!(opt.threshold_window5, Some(50));
        // F = M/A: 50/10 < 110/14
        assert!(opt.fano_minimal);
    }

    #[test]
    fn insignificant_bump_is_not_a_peak() {
        let curve = synthetic_curve(&[1.0, 2.0, 3.0, 3.05, 3.0, 3.1, 4.0, 5.0]);
        let opt = optimal_threshold(&curve).unwrap();
        assert!(!opt.has_peak);
        assert!(optimal_threshold(&curve[..2]).is_err());
    }

    #[test]
    fn impulse_train_spectrum_peaks_at_train_frequency() {
        let period = 7.0;
        let e: Vec<_> = (1..=200).map(|i| ev(i as f64 * period, JumpKind::Emission)).collect();
        let p = CountPath::from_events(&e, 200.0 * period + 1e-9, CountingObservable::EMISSIONS);
        let w0 = 2.0 * std::f64::consts::PI / period;
        let omegas: Vec<f64> = (1..=600).map(|i| i as f64 * 0.005 * w0).collect();
        let mags = count_spectrum(&p, &omegas);
        let peak = dominant_peak(&omegas, &mags, 0.3 * w0).unwrap();
        assert!((peak.omega / w0 - 1.0).abs() < 0.01, "{}", peak.omega / w0);
        assert!(peak.contrast > 10.0);
    }

    #[test]
    fn spectrum_matches_quadrature() {
        let e = mixed();
        let p = CountPath::from_events(&e, 6.0, CountingObservable::HEAT);
        let w = 1.3;
        let exact = count_spectrum(&p, &[w, 0.0]);
        let n = 600_000;
        let h = 6.0 / n as f64;
        let mut acc = C64::new(0.0, 0.0);
        let mut area = 0.0;
        for k in 0..n {
            let t = (k as f64 + 0.5) * h;
            let f = p.value_at(t) as f64 - p.value_at(6.0) as f64 * t / 6.0;
            acc += C64::new(0.0, -w * t).exp() * f * h;
            area += f * h;
        }
        assert!((exact[0] - acc.norm()).abs() < 1e-5);
        assert!((exact[1] - area.abs()).abs() < 1e-5);
    }

    #[test]
    fn histogram_normalized() {
        let p = poisson_path(2.0, 5000, 9);
        let waits = extract_ticks(&p, 1).unwrap().waits();
        let h = wtd_histogram(&waits).unwrap();
        let total: f64 = h.density.iter().map(|d| d * h.bin_width).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(h.rule, "freedman-diaconis");
        let single = wtd_histogram(&[1.0, 1.0]).unwrap();
        assert_eq!(single.density.len(), 1);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(12.5, 1000.0, 40);
        assert_eq!(*g.first().unwrap(), 13);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(default_m_grid(25.0, 0.7).last(), Some(&100));
    }
}
