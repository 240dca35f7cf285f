//! Stochastic thermodynamics along monitored trajectories: heat, work,
//! entropy production between ticks, fluctuation-theorem estimators and
//! uncertainty-relation checks.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::SpectralNess;
use crate::spin::OMEGA_C;
use crate::ticks::{MeritSummary, TickSeries};
use crate::trajectory::{DickeState, TrajectoryRecord};

/// Fidelities below this are treated as numerical underflow.
pub const FIDELITY_FLOOR: f64 = 1e-300;

fn checked_fidelity(ness: &SpectralNess, psi: &DickeState, time: f64) -> Result<f64> {
    if psi.dim() != ness.dim() {
        return Err(Error::DimensionMismatch { expected: ness.dim(), got: psi.dim() });
    }
    let f = ness.fidelity(psi);
    if !(f >= FIDELITY_FLOOR) {
        return Err(Error::FidelityUnderflow { fidelity: f, time });
    }
    Ok(f)
}

fn finite_beta(beta: f64) -> Result<f64> {
    if beta.is_finite() && beta > 0.0 {
        Ok(beta)
    } else {
        Err(Error::ZeroTemperature)
    }
}

/// `ΔS_ψ = -ln⟨ψ₂|π|ψ₂⟩ + ln⟨ψ₁|π|ψ₁⟩`.
pub fn delta_s_psi(psi1: &DickeState, psi2: &DickeState, ness: &SpectralNess) -> Result<f64> {
    let f1 = checked_fidelity(ness, psi1, f64::NAN)?;
    let f2 = checked_fidelity(ness, psi2, f64::NAN)?;
    Ok(f1.ln() - f2.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatWork {
    pub heat: f64,
    pub delta_e: f64,
    pub work: f64,
}

/// Heat from the jump counts, energy change from `H_C`, and `W = ΔE + Q`.
pub fn heat_work(dn_minus: u64, dn_plus: u64, psi1: &DickeState, psi2: &DickeState) -> HeatWork {
    let heat = OMEGA_C * (dn_minus as f64 - dn_plus as f64);
    let delta_e = psi2.energy() - psi1.energy();
    HeatWork { heat, delta_e, work: delta_e + heat }
}

/// Bookkeeping for one interval between stopping times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickLedger {
    pub t_start: f64,
    pub t_end: f64,
    pub dn_minus: u64,
    pub dn_plus: u64,
    pub heat: f64,
    pub activity: u64,
    pub fidelity_start: f64,
    pub fidelity_end: f64,
    pub ds_psi: f64,
    pub s_tick: f64,
    pub delta_e: f64,
    pub work: f64,
}

impl TickLedger {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Ledger of the segment `[t1, t2]` given its boundary states and counts.
#[allow(clippy::too_many_arguments)]
pub fn segment_ledger(
    t1: f64,
    t2: f64,
    psi1: &DickeState,
    psi2: &DickeState,
    dn_minus: u64,
    dn_plus: u64,
    ness: &SpectralNess,
    beta: f64,
) -> Result<TickLedger> {
    let beta = finite_beta(beta)?;
    let f1 = checked_fidelity(ness, psi1, t1)?;
    let f2 = checked_fidelity(ness, psi2, t2)?;
    let hw = heat_work(dn_minus, dn_plus, psi1, psi2);
    let ds_psi = f1.ln() - f2.ln();
    Ok(TickLedger {
        t_start: t1,
        t_end: t2,
        dn_minus,
        dn_plus,
        heat: hw.heat,
        activity: dn_minus + dn_plus,
        fidelity_start: f1,
        fidelity_end: f2,
        ds_psi,
        s_tick: ds_psi + beta * hw.heat,
        delta_e: hw.delta_e,
        work: hw.work,
    })
}

fn tick_state<'a>(record: &'a TrajectoryRecord, ticks: &TickSeries, i: usize) -> Result<&'a DickeState> {
    record
        .snapshot_after_events(ticks.tick_events[i])
        .map(|s| &s.state)
        .ok_or(Error::MissingSnapshot(ticks.tick_times[i]))
}

/// `S_tick` and companions for the interval between ticks `i` and `i+1`.
pub fn tick_entropy(record: &TrajectoryRecord, ticks: &TickSeries, i: usize, ness: &SpectralNess, beta: f64) -> Result<TickLedger> {
    if i + 1 >= ticks.len() {
        return Err(Error::InvalidParams(format!("tick interval {i} needs ticks {i} and {}", i + 1)));
    }
    let psi1 = tick_state(record, ticks, i)?;
    let psi2 = tick_state(record, ticks, i + 1)?;
    segment_ledger(
        ticks.tick_times[i],
        ticks.tick_times[i + 1],
        psi1,
        psi2,
        ticks.dn_minus[i + 1],
        ticks.dn_plus[i + 1],
        ness,
        beta,
    )
}

/// One ledger per waiting time of the series, in the same order as
/// [`TickSeries::waits`].
pub fn tick_ledgers(record: &TrajectoryRecord, ticks: &TickSeries, ness: &SpectralNess, beta: f64) -> Result<Vec<TickLedger>> {
    (0..ticks.len().saturating_sub(1)).map(|i| tick_entropy(record, ticks, i, ness, beta)).collect()
}

pub fn write_ledger_csv(path: &Path, ledgers: &[TickLedger]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["T", "Q", "K_tick", "dS_psi", "S_tick"])?;
    for l in ledgers {
        w.write_record([
            format!("{:.10e}", l.duration()),
            format!("{}", l.heat),
            l.activity.to_string(),
            format!("{:.10e}", l.ds_psi),
            format!("{:.10e}", l.s_tick),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Entropies at bounded stopping times for one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingSample {
    /// Ticks observed before the horizon.
    pub ticks: usize,
    /// `S_mar` at `min(T₁, τ)`.
    pub s_mar_first: f64,
    /// `S_tick` under the horizon rule: `T₁→T₂` with two ticks, `T₁→τ`
    /// with one, zero without ticks.
    pub s_tick: f64,
}

/// Martingale entropy at the first tick and over the first tick interval,
/// with every stopping time capped at the record horizon. The record needs
/// snapshots at the first two ticks.
pub fn stopping_entropies(record: &TrajectoryRecord, ticks: &TickSeries, ness: &SpectralNess, beta: f64) -> Result<StoppingSample> {
    let (total_minus, total_plus) = record.counts();
    let tau = record.horizon;
    let j = ticks.len();
    let s_mar_first = if j >= 1 {
        let psi1 = tick_state(record, ticks, 0)?;
        segment_ledger(0.0, ticks.tick_times[0], &record.initial_state, psi1, ticks.dn_minus[0], ticks.dn_plus[0], ness, beta)?
            .s_tick
    } else {
        segment_ledger(0.0, tau, &record.initial_state, &record.final_state, total_minus, total_plus, ness, beta)?.s_tick
    };
    let s_tick = match j {
        0 => 0.0,
        1 => {
            let psi1 = tick_state(record, ticks, 0)?;
            segment_ledger(
                ticks.tick_times[0],
                tau,
                psi1,
                &record.final_state,
                total_minus - ticks.dn_minus[0],
                total_plus - ticks.dn_plus[0],
                ness,
                beta,
            )?
            .s_tick
        }
        _ => tick_entropy(record, ticks, 0, ness, beta)?.s_tick,
    };
    Ok(StoppingSample { ticks: j, s_mar_first, s_tick })
}

/// `S_unc = -ln π_i + ln⟨ψ|π|ψ⟩` with `i` drawn from `|⟨i|ψ⟩|²` over the
/// eigenbasis of `π`. Returns `(i, S_unc)`.
pub fn uncertainty_entropy<R: Rng + ?Sized>(psi: &DickeState, ness: &SpectralNess, rng: &mut R) -> Result<(usize, f64)> {
    let fid = checked_fidelity(ness, psi, f64::NAN)?;
    let overlaps = ness.eigenvectors.adjoint() * &psi.amps;
    let probs: Vec<f64> = overlaps.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = i;
            break;
        }
    }
    let pi = ness.populations[pick];
    if !(pi >= FIDELITY_FLOOR) {
        return Err(Error::FidelityUnderflow { fidelity: pi, time: f64::NAN });
    }
    Ok((pick, fid.ln() - pi.ln()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtCheckpoint {
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Running estimate of `⟨e^{-S}⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtEstimate {
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub trace: Vec<FtCheckpoint>,
}

impl FtEstimate {
    /// `|mean - 1|` in units of the standard error.
    pub fn deviation_sigmas(&self) -> f64 {
        let d = (self.mean - 1.0).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Sample mean of `e^{-S}` with its standard error, plus the running
/// estimate at log-spaced sample counts.
pub fn ft_estimator(entropies: &[f64]) -> FtEstimate {
    let n = entropies.len();
    let mut checks: Vec<usize> = (0..=40).map(|k| (10f64.powf(k as f64 / 40.0 * (n.max(1) as f64).log10())).round() as usize).collect();
    checks.push(n);
    checks.dedup();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    let mut trace = Vec::new();
    let mut next = 0;
    let summary = |k: usize, s1: f64, s2: f64| {
        let kf = k as f64;
        let mean = s1 / kf;
        let var = if k > 1 { ((s2 - kf * mean * mean) / (kf - 1.0)).max(0.0) } else { f64::NAN };
        FtCheckpoint { samples: k, mean, stderr: (var / kf).sqrt() }
    };
    for (i, s) in entropies.iter().enumerate() {
        let x = (-s).exp();
        s1 += x;
        s2 += x * x;
        while next < checks.len() && checks[next] == i + 1 {
            trace.push(summary(i + 1, s1, s2));
            next += 1;
        }
    }
    if n == 0 {
        return FtEstimate { samples: 0, mean: f64::NAN, stderr: f64::NAN, trace };
    }
    let last = summary(n, s1, s2);
    FtEstimate { samples: n, mean: last.mean, stderr: last.stderr, trace }
}

/// Mean and leave-one-group-out jackknife error of pooled values.
pub fn grouped_mean(groups: &[Vec<f64>]) -> Result<(f64, f64)> {
    let sums: Vec<(f64, f64)> = groups.iter().filter(|g| !g.is_empty()).map(|g| (g.iter().sum(), g.len() as f64)).collect();
    let (tot, n) = sums.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0, a.1 + s.1));
    if n < 2.0 {
        return Err(Error::InsufficientStatistics("fewer than 2 values to average".into()));
    }
    let mean = tot / n;
    if sums.len() < 2 {
        return Ok((mean, f64::NAN));
    }
    let loo: Vec<f64> = sums.iter().map(|(s, k)| (tot - s) / (n - k)).collect();
    let g = loo.len() as f64;
    let m = loo.iter().sum::<f64>() / g;
    let err = ((g - 1.0) / g * loo.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt();
    Ok((mean, err))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub accuracy: f64,
    pub bound: f64,
    /// Combined one-sigma uncertainty of `accuracy - bound`.
    pub sigma: f64,
    /// `A ≤ bound + 2σ`.
    pub holds: bool,
    /// `A > bound + 2σ`.
    pub violated: bool,
}

impl BoundCheck {
    fn new(accuracy: f64, accuracy_err: f64, bound: f64, bound_err: f64) -> Self {
        let sigma = (accuracy_err.powi(2) + bound_err.powi(2)).sqrt();
        let sigma = if sigma.is_finite() { sigma } else { 0.0 };
        let violated = accuracy > bound + 2.0 * sigma;
        BoundCheck { accuracy, bound, sigma, holds: !violated, violated }
    }

    /// How many sigmas `A` sits above the bound (negative when below).
    pub fn excess_sigmas(&self) -> f64 {
        (self.accuracy - self.bound) / self.sigma
    }
}

/// Accuracy against `⟨S_tick⟩/2` (TUR) and `⟨K_tick⟩` (KUR).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurKurReport {
    pub accuracy: f64,
    pub accuracy_err: f64,
    pub mean_s_tick: f64,
    pub s_tick_err: f64,
    pub mean_k_tick: f64,
    pub k_tick_err: f64,
    pub mean_heat: f64,
    pub tur: BoundCheck,
    pub kur: BoundCheck,
}

/// Bound comparison for one tick ensemble; `ledgers` are grouped per
/// trajectory, matching the waits that produced `merit`.
pub fn tur_kur_report(merit: &MeritSummary, ledgers: &[Vec<TickLedger>]) -> Result<TurKurReport> {
    let n: usize = ledgers.iter().map(|g| g.len()).sum();
    if n != merit.samples {
        return Err(Error::InvalidParams(format!("{n} ledgers for {} waiting times", merit.samples)));
    }
    let pick = |f: fn(&TickLedger) -> f64| -> Vec<Vec<f64>> { ledgers.iter().map(|g| g.iter().map(f).collect()).collect() };
    let (s, ds) = grouped_mean(&pick(|l| l.s_tick))?;
    let (k, dk) = grouped_mean(&pick(|l| l.activity as f64))?;
    let (q, _) = grouped_mean(&pick(|l| l.heat))?;
    Ok(TurKurReport {
        accuracy: merit.accuracy,
        accuracy_err: merit.accuracy_err,
        mean_s_tick: s,
        s_tick_err: ds,
        mean_k_tick: k,
        k_tick_err: dk,
        mean_heat: q,
        tur: BoundCheck::new(merit.accuracy, merit.accuracy_err, 0.5 * s, 0.5 * ds),
        kur: BoundCheck::new(merit.accuracy, merit.accuracy_err, k, dk),
    })
}
