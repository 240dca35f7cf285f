//! Quantum-jump unraveling of the master equation under continuous
//! monitoring of emissions and absorptions.
//!
//! Between jumps the unnormalized state evolves under `-K/2` with
//! `K = Σ_k (γ_k/S) L_k†L_k`. `K` is Hermitian and time independent, so the
//! engine works in its eigenbasis: the squared norm after a delay `t` is
//! `Σ_j |c_j|² e^{-κ_j t}`, and the jump time is the exact root of that sum
//! against a uniform target. A jump then applies `L_k` (pre-rotated into the
//! same basis) with probability proportional to `(γ_k/S)‖L_k ψ‖²`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouville::{sample_index, SpectralNess};
use crate::rng::StreamId;
use crate::spin::{ClockParams, CollectiveOps, JumpKind, C64};

/// Normalized pure state over the Dicke basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DickeState {
    pub amps: DVector<C64>,
}

impl DickeState {
    /// Wraps and normalizes.
    pub fn new(amps: DVector<C64>) -> Self {
        let n = amps.norm();
        DickeState { amps: amps / C64::new(n, 0.0) }
    }

    pub fn basis(dim: usize, j: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[j] = C64::new(1.0, 0.0);
        DickeState { amps: v }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `⟨ψ|H_C|ψ⟩` with `H_C = ωC (Sz + S)`.
    pub fn energy(&self) -> f64 {
        self.amps.iter().enumerate().map(|(j, c)| j as f64 * c.norm_sqr()).sum::<f64>() * crate::spin::OMEGA_C
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub kind: JumpKind,
}

/// State captured at a requested time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// Number of events in the record at or before `time`.
    pub events_before: usize,
    pub state: DickeState,
}

/// Outcome of one monitored run.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub stream: StreamId,
    pub params: ClockParams,
    /// Index `n₀` of the initial steady-state eigenvector, if sampled.
    pub initial_index: Option<usize>,
    pub initial_state: DickeState,
    pub horizon: f64,
    pub events: Vec<JumpEvent>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: DickeState,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    stream: u64,
    params: &'a ClockParams,
    initial_index: Option<usize>,
    horizon: f64,
    events: usize,
    snapshot_times: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn counts(&self) -> (u64, u64) {
        let em = self.events.iter().filter(|e| e.kind == JumpKind::Emission).count() as u64;
        (em, self.events.len() as u64 - em)
    }

    /// Snapshot taken right after event number `events_before - 1`.
    pub fn snapshot_after_events(&self, events_before: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.events_before == events_before)
    }

    /// One row per event: `t, kind`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "kind"])?;
        for e in &self.events {
            w.write_record([format!("{:.17e}", e.time), e.kind.as_str().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let side = Sidecar {
            seed: self.stream.seed,
            stream: self.stream.index,
            params: &self.params,
            initial_index: self.initial_index,
            horizon: self.horizon,
            events: self.events.len(),
            snapshot_times: self.snapshots.iter().map(|s| s.time).collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

/// Information handed to a [`Marker`] after every jump.
#[derive(Clone, Copy, Debug)]
pub struct JumpContext {
    pub time: f64,
    pub kind: JumpKind,
    pub n_minus: u64,
    pub n_plus: u64,
    pub event_index: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MarkerAction {
    pub snapshot: bool,
    pub stop: bool,
}

/// Per-jump callback deciding whether to keep the post-jump state and
/// whether to end the run there.
pub trait Marker {
    fn on_jump(&mut self, ctx: &JumpContext) -> MarkerAction;
}

impl<F: FnMut(&JumpContext) -> MarkerAction> Marker for F {
    fn on_jump(&mut self, ctx: &JumpContext) -> MarkerAction {
        self(ctx)
    }
}

pub struct NoMarkers;

impl Marker for NoMarkers {
    fn on_jump(&mut self, _: &JumpContext) -> MarkerAction {
        MarkerAction::default()
    }
}

/// No-jump evolution and jump maps expressed in the eigenbasis of `K`.
#[derive(Clone, Debug)]
pub struct NoJumpPropagator {
    /// Eigenvalues `κ_j ≥ 0` of `K`.
    pub decay_rates: Vec<f64>,
    /// `K` is Hermitian tridiagonal, so `K = D T D†` with `D` a diagonal
    /// phase and `T` real symmetric; the eigenbasis is `D·O` with `O` real.
    twist: Vec<C64>,
    real_basis: DMatrix<f64>,
    basis: DMatrix<C64>,
    basis_adj: DMatrix<C64>,
    l_minus: DMatrix<C64>,
    l_plus: DMatrix<C64>,
    rate_minus: f64,
    rate_plus: f64,
}

impl NoJumpPropagator {
    pub fn new(ops: &CollectiveOps) -> Self {
        let k = ops.decay_operator();
        let d = k.dim();
        let mut twist = vec![C64::new(1.0, 0.0); d];
        for j in 1..d {
            let u = k.upper[j - 1];
            let n = u.norm();
            twist[j] = if n > 0.0 { twist[j - 1] * u.conj() / n } else { twist[j - 1] };
        }
        let t = DMatrix::<f64>::from_fn(d, d, |i, j| match i.abs_diff(j) {
            0 => k.diag[i].re,
            1 => k.upper[i.min(j)].norm(),
            _ => 0.0,
        });
        let eig = t.symmetric_eigen();
        let real_basis = eig.eigenvectors;
        let basis = DMatrix::from_fn(d, d, |i, j| twist[i] * real_basis[(i, j)]);
        let basis_adj = basis.adjoint();
        // `basis† L basis = Oᵀ (D† L D) O`, split into real and imaginary parts
        let ot = real_basis.transpose();
        let rot = |kind: JumpKind| {
            let l = ops.jump_operator(kind);
            let (mut re, mut im) = (DMatrix::<f64>::zeros(d, d), DMatrix::<f64>::zeros(d, d));
            for j in 0..d {
                for i in j.saturating_sub(1)..=(j + 1).min(d - 1) {
                    let z = twist[i].conj() * l.get(i, j) * twist[j];
                    re[(i, j)] = z.re;
                    im[(i, j)] = z.im;
                }
            }
            let (a, b) = (&ot * (re * &real_basis), &ot * (im * &real_basis));
            a.zip_map(&b, C64::new)
        };
        NoJumpPropagator {
            decay_rates: eig.eigenvalues.iter().map(|x| x.max(0.0)).collect(),
            l_minus: rot(JumpKind::Emission),
            l_plus: rot(JumpKind::Absorption),
            twist,
            real_basis,
            basis,
            basis_adj,
            rate_minus: ops.channel_rate(JumpKind::Emission),
            rate_plus: ops.channel_rate(JumpKind::Absorption),
        }
    }

    /// Coefficients in `next`'s eigenbasis of the state with coefficients
    /// `c` in this one: `O_nextᵀ D_next† D O c`, all real but the phases.
    pub fn rebase(&self, next: &NoJumpPropagator, c: &DVector<C64>) -> DVector<C64> {
        let d = self.dim();
        let (mut re, mut im) = (vec![0.0; d], vec![0.0; d]);
        for (j, col) in self.real_basis.as_slice().chunks_exact(d).enumerate() {
            let (cr, ci) = (c[j].re, c[j].im);
            for ((r, i), o) in re.iter_mut().zip(im.iter_mut()).zip(col) {
                *r += o * cr;
                *i += o * ci;
            }
        }
        if self.twist != next.twist {
            for k in 0..d {
                let z = C64::new(re[k], im[k]) * self.twist[k] * next.twist[k].conj();
                (re[k], im[k]) = (z.re, z.im);
            }
        }
        DVector::from_iterator(
            d,
            next.real_basis.as_slice().chunks_exact(d).map(|col| {
                let (mut r, mut i) = (0.0, 0.0);
                for ((o, a), b) in col.iter().zip(&re).zip(&im) {
                    r += o * a;
                    i += o * b;
                }
                C64::new(r, i)
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.decay_rates.len()
    }

    pub fn to_eigen(&self, state: &DickeState) -> DVector<C64> {
        &self.basis_adj * &state.amps
    }

    pub fn from_eigen(&self, coeffs: &DVector<C64>) -> DickeState {
        DickeState::new(&self.basis * coeffs)
    }

    /// Squared norm after a no-jump delay `t`, starting from unit norm.
    pub fn survival(&self, weights: &[f64], t: f64) -> f64 {
        weights.iter().zip(&self.decay_rates).map(|(w, k)| w * (-k * t).exp()).sum()
    }

    /// Evolve the (normalized) coefficients by `t` without jumping and renormalize.
    fn drift(&self, coeffs: &mut DVector<C64>, t: f64) -> f64 {
        for (c, k) in coeffs.iter_mut().zip(&self.decay_rates) {
            *c *= (-0.5 * k * t).exp();
        }
        let n2 = coeffs.norm_squared();
        *coeffs /= C64::new(n2.sqrt(), 0.0);
        n2
    }

    /// Total jump rate `⟨K⟩` of normalized coefficients.
    pub fn total_rate(&self, coeffs: &DVector<C64>) -> f64 {
        coeffs.iter().zip(&self.decay_rates).map(|(c, k)| k * c.norm_sqr()).sum()
    }

    /// Emission probability at the jump, `(γ-/S)‖L- ψ‖² / ⟨K⟩`, with the
    /// image `L- ψ`.
    fn emission_split(&self, coeffs: &DVector<C64>) -> (f64, DVector<C64>) {
        let phi = &self.l_minus * coeffs;
        if self.rate_plus == 0.0 {
            return (1.0, phi);
        }
        let w = self.rate_minus * phi.norm_squared();
        let total = self.total_rate(coeffs);
        let p = if total > 0.0 { (w / total).clamp(0.0, 1.0) } else { 0.5 };
        (p, phi)
    }

    /// Channel probabilities `(p-, p+)` for a normalized Dicke state.
    pub fn channel_probabilities(&self, state: &DickeState) -> (f64, f64) {
        let c = self.to_eigen(state);
        let (p, _) = self.emission_split(&c);
        (p, 1.0 - p)
    }

    /// Apply a jump drawn with `u ∈ [0,1)`; coefficients are replaced by the
    /// normalized post-jump state.
    fn jump(&self, coeffs: &mut DVector<C64>, u: f64, time: f64) -> Result<JumpKind> {
        let (p_minus, phi_minus) = self.emission_split(coeffs);
        let (kind, mut phi) = if u < p_minus {
            (JumpKind::Emission, phi_minus)
        } else {
            (JumpKind::Absorption, &self.l_plus * &*coeffs)
        };
        let n = phi.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Integration { time, reason: format!("post-jump norm {n} after {kind:?}") });
        }
        phi /= C64::new(n, 0.0);
        *coeffs = phi;
        Ok(kind)
    }
}

/// Exact root of `Σ w_j e^{-κ_j t} = target` on `(0, t_max]`, or `None` if
/// the norm stays above the target up to `t_max`. The left side is convex
/// and decreasing, so Newton iterates from `t = 0` increase monotonically
/// toward the root.
pub fn crossing_time(weights: &[f64], rates: &[f64], target: f64, t_max: f64) -> Option<f64> {
    let f_at = |t: f64| -> (f64, f64) {
        let mut f = -target;
        let mut df = 0.0;
        for (w, k) in weights.iter().zip(rates) {
            let e = w * (-k * t).exp();
            f += e;
            df -= k * e;
        }
        (f, df)
    };
    let (f_end, _) = if t_max.is_finite() {
        f_at(t_max)
    } else {
        (weights.iter().zip(rates).filter(|(_, k)| **k == 0.0).map(|(w, _)| *w).sum::<f64>() - target, 0.0)
    };
    if f_end > 0.0 {
        return None;
    }
    let mut t = 0.0f64;
    let mut lo = 0.0f64;
    let mut hi = t_max;
    for _ in 0..400 {
        let (f, df) = f_at(t);
        if f.abs() <= 1e-14 * target {
            return Some(t);
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = if df < 0.0 { t - f / df } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            (2.0 * lo).max(1.0 / rates.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE))
        };
        if (next - t).abs() <= 1e-15 * next.abs() {
            return Some(next);
        }
        t = next;
    }
    Some(t)
}

/// Draw a norm target strictly inside `(0, 1)`.
fn draw_target<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

/// Result of [`waiting_time_step`].
#[derive(Clone, Debug)]
pub enum WaitingStep {
    Jump { delay: f64, kind: JumpKind, state: DickeState },
    /// No jump before the remaining horizon; the state at the horizon.
    NoJump { delay: f64, state: DickeState },
}

/// One waiting-time step from a normalized state: the no-jump drift up to
/// the norm crossing, then the jump.
pub fn waiting_time_step<R: Rng + ?Sized>(
    psi: &DickeState,
    prop: &NoJumpPropagator,
    remaining: f64,
    rng: &mut R,
) -> Result<WaitingStep> {
    let mut c = prop.to_eigen(psi);
    let weights: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let target = draw_target(rng);
    match crossing_time(&weights, &prop.decay_rates, target, remaining) {
        Some(dt) => {
            prop.drift(&mut c, dt);
            let kind = prop.jump(&mut c, rng.random(), dt)?;
            Ok(WaitingStep::Jump { delay: dt, kind, state: prop.from_eigen(&c) })
        }
        None => {
            prop.drift(&mut c, remaining);
            Ok(WaitingStep::NoJump { delay: remaining, state: prop.from_eigen(&c) })
        }
    }
}

/// Where a run starts.
#[derive(Clone, Debug)]
pub enum InitialState {
    /// Eigenstate of the steady state drawn with probability `π_n`.
    SteadyState,
    Fixed(DickeState),
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub horizon: f64,
    pub initial: InitialState,
    /// Extra times (ascending) at which the state is captured.
    pub checkpoints: Vec<f64>,
}

impl RunOptions {
    pub fn horizon(horizon: f64) -> Self {
        RunOptions { horizon, initial: InitialState::SteadyState, checkpoints: Vec::new() }
    }
}

pub(crate) struct RawRun {
    pub events: Vec<JumpEvent>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: DickeState,
    pub horizon: f64,
}

/// Drift/jump loop with a piecewise-constant generator. `models(i)` supplies
/// the propagator for segment `i` (`[i·segment, (i+1)·segment)`); segment
/// boundaries where the propagator does not change are skipped entirely.
pub(crate) fn integrate<M, R>(
    mut model: Arc<NoJumpPropagator>,
    models: &mut dyn FnMut(usize) -> Result<Arc<NoJumpPropagator>>,
    segment: f64,
    initial: &DickeState,
    horizon: f64,
    checkpoints: &[f64],
    marker: &mut M,
    rng: &mut R,
) -> Result<RawRun>
where
    M: Marker + ?Sized,
    R: Rng + ?Sized,
{
    if !(horizon > 0.0) {
        return Err(Error::InvalidParams(format!("horizon {horizon} must be > 0")));
    }
    if initial.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: initial.dim() });
    }
    let mut c = model.to_eigen(initial);
    let mut t = 0.0f64;
    let mut target = draw_target(rng);
    let mut seg_index = 0usize;
    let mut seg_end = if segment.is_finite() { segment } else { f64::INFINITY };
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_check = 0usize;
    let (mut n_minus, mut n_plus) = (0u64, 0u64);
    let mut weights = vec![0.0; model.dim()];
    let mut end = horizon;

    let capture = |model: &NoJumpPropagator, c: &DVector<C64>, t0: f64, upto: f64, inclusive: bool,
                   next_check: &mut usize, snapshots: &mut Vec<Snapshot>, n_events: usize| {
        while *next_check < checkpoints.len() {
            let tc = checkpoints[*next_check];
            let inside = if inclusive { tc <= upto } else { tc < upto };
            if !inside {
                break;
            }
            let mut cc = c.clone();
            model.drift(&mut cc, (tc - t0).max(0.0));
            snapshots.push(Snapshot { time: tc, events_before: n_events, state: model.from_eigen(&cc) });
            *next_check += 1;
        }
    };

    loop {
        let limit = seg_end.min(horizon);
        for (w, z) in weights.iter_mut().zip(c.iter()) {
            *w = z.norm_sqr();
        }
        match crossing_time(&weights, &model.decay_rates, target, limit - t) {
            Some(dt) => {
                capture(&model, &c, t, t + dt, false, &mut next_check, &mut snapshots, events.len());
                model.drift(&mut c, dt);
                t += dt;
                let kind = model.jump(&mut c, rng.random(), t)?;
                if events.last().map_or(false, |e: &JumpEvent| e.time >= t) {
                    return Err(Error::Integration { time: t, reason: "jump times not increasing".into() });
                }
                events.push(JumpEvent { time: t, kind });
                match kind {
                    JumpKind::Emission => n_minus += 1,
                    JumpKind::Absorption => n_plus += 1,
                }
                let action = marker.on_jump(&JumpContext {
                    time: t,
                    kind,
                    n_minus,
                    n_plus,
                    event_index: events.len() - 1,
                });
                if action.snapshot {
                    snapshots.push(Snapshot { time: t, events_before: events.len(), state: model.from_eigen(&c) });
                }
                target = draw_target(rng);
                if action.stop {
                    end = t;
                    break;
                }
            }
            None => {
                capture(&model, &c, t, limit, true, &mut next_check, &mut snapshots, events.len());
                let n2 = model.drift(&mut c, limit - t);
                if !(n2.is_finite() && n2 > 0.0) {
                    return Err(Error::Integration { time: t, reason: format!("no-jump norm {n2}") });
                }
                target /= n2;
                t = limit;
                if t >= horizon {
                    break;
                }
                seg_index += 1;
                seg_end += segment;
                let next = models(seg_index)?;
                if !Arc::ptr_eq(&next, &model) {
                    c = model.rebase(&next, &c);
                    model = next;
                }
            }
        }
    }
    Ok(RawRun { events, snapshots, final_state: model.from_eigen(&c), horizon: end })
}

/// Trajectory engine for one fixed parameter set.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub ops: Arc<CollectiveOps>,
    pub ness: Arc<SpectralNess>,
    pub propagator: Arc<NoJumpPropagator>,
}

impl Simulator {
    pub fn new(ops: CollectiveOps, ness: SpectralNess) -> Result<Self> {
        if ops.dim() != ness.dim() {
            return Err(Error::DimensionMismatch { expected: ops.dim(), got: ness.dim() });
        }
        let propagator = Arc::new(NoJumpPropagator::new(&ops));
        Ok(Simulator { ops: Arc::new(ops), ness: Arc::new(ness), propagator })
    }

    /// Build operators and steady state from parameters.
    pub fn from_params(params: &ClockParams) -> Result<Self> {
        let ops = crate::spin::build_operators(params)?;
        let ness = crate::liouville::ness(&ops)?;
        Simulator::new(ops, ness)
    }

    pub fn run<M: Marker + ?Sized>(&self, opts: &RunOptions, marker: &mut M, stream: StreamId) -> Result<TrajectoryRecord> {
        let mut rng = stream.rng();
        let (initial_index, initial_state) = match &opts.initial {
            InitialState::SteadyState => {
                let n = sample_index(&self.ness, &mut rng);
                (Some(n), self.ness.eigenstate(n))
            }
            InitialState::Fixed(s) => (None, s.clone()),
        };
        let fixed = self.propagator.clone();
        let raw = integrate(
            self.propagator.clone(),
            &mut |_| Ok(fixed.clone()),
            f64::INFINITY,
            &initial_state,
            opts.horizon,
            &opts.checkpoints,
            marker,
            &mut rng,
        )?;
        Ok(TrajectoryRecord {
            stream,
            params: self.ops.params,
            initial_index,
            initial_state,
            horizon: raw.horizon,
            events: raw.events,
            snapshots: raw.snapshots,
            final_state: raw.final_state,
        })
    }
}

impl Simulator {
    /// `n` independent runs with streams `(seed, 0..n)`, in index order.
    pub fn run_ensemble<M, F>(&self, n: u64, seed: u64, opts: &RunOptions, make_marker: F) -> Result<Vec<TrajectoryRecord>>
    where
        M: Marker,
        F: Fn(u64) -> M + Sync + Send,
    {
        crate::rng::map_indices(n, |i| self.run(opts, &mut make_marker(i), StreamId::new(seed, i))).into_iter().collect()
    }

    /// Mean jump rates `(J₋, J₊)` in the steady state.
    pub fn jump_rates(&self) -> (f64, f64) {
        self.ness.jump_rates(&self.ops)
    }
}

/// One trajectory from the steady state up to `horizon`. Builds the
/// propagator on every call; use [`Simulator`] for ensembles.
pub fn run_trajectory<M: Marker + ?Sized>(
    ops: &CollectiveOps,
    ness: &SpectralNess,
    horizon: f64,
    marker: &mut M,
    stream: StreamId,
) -> Result<TrajectoryRecord> {
    let sim = Simulator::new(ops.clone(), ness.clone())?;
    sim.run(&RunOptions::horizon(horizon), marker, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::ness;
    use crate::spin::build_operators;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sim(spin2: u32, lambda: f64, beta: f64) -> Simulator {
        Simulator::from_params(&ClockParams::new(spin2, lambda, 1e-3, beta).unwrap()).unwrap()
    }

    #[test]
    fn rebase_matches_dicke_round_trip() {
        let prop = |l: f64| NoJumpPropagator::new(&build_operators(&ClockParams::new(9, l, 1e-3, 1.5).unwrap()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = DVector::from_fn(10, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).normalize();
        for (a, b) in [(1.7, 2.3), (2.0, 0.0), (0.0, 0.4)] {
            let (pa, pb) = (prop(a), prop(b));
            let direct = pb.to_eigen(&pa.from_eigen(&c));
            assert!((pa.rebase(&pb, &c) - direct).norm() < 1e-12, "{a} -> {b}");
        }
        // the phase-twisted basis diagonalizes K
        let ops = build_operators(&ClockParams::new(9, 1.3, 1e-3, 1.5).unwrap()).unwrap();
        let p = NoJumpPropagator::new(&ops);
        let k = ops.decay_operator().to_dense();
        let diag = &p.basis_adj * k * &p.basis;
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { p.decay_rates[i] } else { 0.0 };
                assert!((diag[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn crossing_time_single_exponential() {
        let t = crossing_time(&[1.0], &[2.0], 0.25, f64::INFINITY).unwrap();
        assert!((t - 0.25f64.ln() / -2.0).abs() < 1e-14);
        assert!(crossing_time(&[1.0], &[2.0], 0.25, 0.1).is_none());
        // a conserved component above target never crosses
        assert!(crossing_time(&[0.5, 0.5], &[0.0, 3.0], 0.4, f64::INFINITY).is_none());
    }

    #[test]
    fn crossing_time_mixture_matches_bisection() {
        let w = [0.2, 0.5, 0.3];
        let k = [0.01, 1.0, 40.0];
        let target = 0.37;
        let t = crossing_time(&w, &k, target, f64::INFINITY).unwrap();
        let f = |t: f64| w.iter().zip(&k).map(|(w, k)| w * (-k * t).exp()).sum::<f64>() - target;
        let (mut lo, mut hi) = (0.0, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((t - lo).abs() < 1e-12 * lo.max(1.0));
    }

    #[test]
    fn zero_temperature_always_emits() {
        let s = sim(6, 1.5, f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut psi = s.ness.eigenstate(0);
        for _ in 0..200 {
            let (p, q) = s.propagator.channel_probabilities(&psi);
            assert_eq!((p, q), (1.0, 0.0));
            match waiting_time_step(&psi, &s.propagator, f64::INFINITY, &mut rng).unwrap() {
                WaitingStep::Jump { kind, state, .. } => {
                    assert_eq!(kind, JumpKind::Emission);
                    psi = state;
                }
                WaitingStep::NoJump { .. } => panic!("no jump"),
            }
        }
    }

    #[test]
    fn channel_probabilities_sum_to_one() {
        let s = sim(8, 1.2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut psi = s.ness.eigenstate(2);
        for _ in 0..100 {
            let (p, q) = s.propagator.channel_probabilities(&psi);
            assert!((p + q - 1.0).abs() < 1e-15 && p >= 0.0 && q >= 0.0);
            if let WaitingStep::Jump { state, .. } = waiting_time_step(&psi, &s.propagator, 1e9, &mut rng).unwrap() {
                psi = state;
            }
        }
    }

    #[test]
    fn excited_spin_waiting_time_is_exponential() {
        // S = 1/2, λ = 0, β = ∞: decay rate γ-/S = 2γ0 from the excited state.
        let gamma0 = 0.5;
        let p = ClockParams::new(1, 0.0, gamma0, f64::INFINITY).unwrap();
        let ops = build_operators(&p).unwrap();
        let prop = NoJumpPropagator::new(&ops);
        let excited = DickeState::basis(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut waits: Vec<f64> = (0..n)
            .map(|_| match waiting_time_step(&excited, &prop, f64::INFINITY, &mut rng).unwrap() {
                WaitingStep::Jump { delay, .. } => delay,
                WaitingStep::NoJump { .. } => panic!(),
            })
            .collect();
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rate = 2.0 * gamma0;
        let ks = waits
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-rate * x).exp();
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov critical value for p = 0.01
        assert!(ks < 1.628 / (n as f64).sqrt(), "KS = {ks}");
    }

    #[test]
    fn no_jump_tail_when_horizon_short() {
        let s = sim(2, 0.0, f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // ground state never decays
        match waiting_time_step(&DickeState::basis(3, 0), &s.propagator, 10.0, &mut rng).unwrap() {
            WaitingStep::NoJump { delay, state } => {
                assert_eq!(delay, 10.0);
                assert!((state.norm() - 1.0).abs() < 1e-14);
            }
            _ => panic!("ground state jumped"),
        }
    }

    #[test]
    fn zero_jump_run_keeps_unit_norm() {
        let s = sim(4, 0.0, f64::INFINITY);
        let opts = RunOptions {
            horizon: 100.0,
            initial: InitialState::Fixed(DickeState::basis(5, 0)),
            checkpoints: vec![1.0, 10.0, 50.0],
        };
        let rec = s.run(&opts, &mut NoMarkers, StreamId::new(1, 0)).unwrap();
        assert!(rec.events.is_empty());
        assert_eq!(rec.snapshots.len(), 3);
        for snap in &rec.snapshots {
            assert!((snap.state.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_streams_give_identical_records() {
        let s = sim(10, 1.5, 2.0);
        let opts = RunOptions::horizon(2e4);
        let a = s.run(&opts, &mut NoMarkers, StreamId::new(42, 3)).unwrap();
        let b = s.run(&opts, &mut NoMarkers, StreamId::new(42, 3)).unwrap();
        let c = s.run(&opts, &mut NoMarkers, StreamId::new(42, 4)).unwrap();
        assert!(!a.events.is_empty());
        assert_eq!(a.events, b.events);
        assert_ne!(a.events, c.events);
        assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.events.iter().all(|e| e.time <= a.horizon));
    }

    #[test]
    fn marker_snapshots_and_stop() {
        let s = sim(6, 1.5, 2.0);
        let mut marker = |ctx: &JumpContext| MarkerAction { snapshot: ctx.n_minus % 5 == 0 && ctx.kind == JumpKind::Emission, stop: ctx.n_minus == 20 };
        let rec = s.run(&RunOptions::horizon(1e9), &mut marker, StreamId::new(1, 1)).unwrap();
        assert_eq!(rec.counts().0, 20);
        assert_eq!(rec.horizon, rec.events.last().unwrap().time);
        assert_eq!(rec.snapshots.len(), 4);
        for snap in &rec.snapshots {
            assert!((snap.state.norm() - 1.0).abs() < 1e-10);
            assert_eq!(snap.time, rec.events[snap.events_before - 1].time);
        }
    }

    #[test]
    fn run_trajectory_matches_simulator() {
        let p = ClockParams::new(3, 1.1, 1e-3, 1.0).unwrap();
        let ops = build_operators(&p).unwrap();
        let pi = ness(&ops).unwrap();
        let a = run_trajectory(&ops, &pi, 500.0, &mut NoMarkers, StreamId::new(5, 0)).unwrap();
        let b = Simulator::new(ops, pi).unwrap().run(&RunOptions::horizon(500.0), &mut NoMarkers, StreamId::new(5, 0)).unwrap();
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn record_csv_export() {
        let s = sim(4, 1.5, 2.0);
        let rec = s.run(&RunOptions::horizon(300.0), &mut NoMarkers, StreamId::new(1, 0)).unwrap();
        let dir = std::env::temp_dir().join(format!("tcclock-rec-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        rec.write_csv(&dir.join("r.csv")).unwrap();
        rec.write_sidecar(&dir.join("r.json")).unwrap();
        let text = std::fs::read_to_string(dir.join("r.csv")).unwrap();
        assert_eq!(text.lines().next(), Some("t,kind"));
        assert_eq!(text.lines().count(), rec.events.len() + 1);
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
        assert_eq!(side["seed"], 1);
        std::fs::remove_dir_all(dir).ok();
    }
}
