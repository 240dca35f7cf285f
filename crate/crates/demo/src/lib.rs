//! Browser bindings: a single trajectory with its count spectrum, the
//! threshold tradeoff curve, and the Rabi benchmark of a noisy drive.
//!
//! Results come back as flat `Float64Array`s with a fixed stride so the page
//! needs no serialization layer.

use tcclock::harness::experiments::{default_omegas, tradeoff_from_paths};
use tcclock::noise::{rabi_benchmark, NoiseModel};
use tcclock::ticks::{accumulate, count_spectrum, default_m_grid, CountStop, CountingObservable};
use tcclock::trajectory::{NoMarkers, RunOptions};
use tcclock::{ClockParams, Simulator, StreamId};
use wasm_bindgen::prelude::*;

const GAMMA0: f64 = 1e-3;

fn err(e: tcclock::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn simulator(spin2: u32, lambda: f64, beta: f64) -> Result<Simulator, JsError> {
    Simulator::from_params(&ClockParams::new(spin2, lambda, GAMMA0, beta).map_err(err)?).map_err(err)
}

fn observable(name: &str) -> Result<CountingObservable, JsError> {
    name.parse().map_err(err)
}

/// Horizon covering `periods` mean-field periods (or `periods·2π/γ0` below
/// the transition).
fn horizon(lambda: f64, periods: f64) -> f64 {
    let w = GAMMA0 * (lambda * lambda - 1.0).max(0.0).sqrt();
    periods * 2.0 * std::f64::consts::PI / if w > 0.0 { w } else { GAMMA0 }
}

/// One steady-state trajectory. Returns `[t, N]` pairs at every jump of the
/// chosen observable, starting at `(0, 0)` and closed at the horizon.
#[wasm_bindgen]
pub fn count_path(spin2: u32, lambda: f64, beta: f64, obs: &str, periods: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let sim = simulator(spin2, lambda, beta)?;
    let o = observable(obs)?;
    let rec = sim.run(&RunOptions::horizon(horizon(lambda, periods)), &mut NoMarkers, StreamId::new(seed, 0)).map_err(err)?;
    let path = accumulate(&rec, o);
    let mut out = vec![0.0, 0.0];
    for (t, v) in path.times.iter().zip(&path.values) {
        out.extend([*t, *v as f64]);
    }
    out.extend([path.horizon, path.final_value() as f64]);
    Ok(out)
}

/// `[ω, |Ñ(ω)|]` pairs of the detrended count path of one trajectory.
#[wasm_bindgen]
pub fn spectrum(spin2: u32, lambda: f64, beta: f64, obs: &str, periods: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let sim = simulator(spin2, lambda, beta)?;
    let o = observable(obs)?;
    let h = horizon(lambda, periods);
    let rec = sim.run(&RunOptions::horizon(h), &mut NoMarkers, StreamId::new(seed, 0)).map_err(err)?;
    let om = default_omegas(&sim.ops.params, h);
    let mag = count_spectrum(&accumulate(&rec, o), &om);
    Ok(om.iter().zip(&mag).flat_map(|(w, m)| [*w, *m]).collect())
}

/// Tradeoff curve over the default threshold grid. Rows of five:
/// `[M, R, A, γ0/R, is_optimal]`, where `γ0/R` is the Poisson benchmark.
#[wasm_bindgen]
pub fn tradeoff(spin2: u32, lambda: f64, beta: f64, obs: &str, trajectories: u32, seed: u64) -> Result<Vec<f64>, JsError> {
    let sim = simulator(spin2, lambda, beta)?;
    let o = observable(obs)?;
    let p = sim.ops.params;
    let grid = default_m_grid(p.spin(), lambda);
    let max_m = *grid.last().unwrap() as i64;
    let (jm, jp) = sim.jump_rates();
    let target = 21 * max_m;
    let h = 10.0 * target as f64 / o.rate(jm, jp).max(f64::MIN_POSITIVE);
    let recs = sim
        .run_ensemble(trajectories as u64, seed, &RunOptions::horizon(h), |_| CountStop::new(vec![(o, target)]))
        .map_err(err)?;
    let paths: Vec<_> = recs.iter().map(|r| accumulate(r, o)).collect();
    let t = tradeoff_from_paths(&paths, o, &grid, trajectories as u64).map_err(err)?;
    let mut out = Vec::new();
    for pt in &t.curve {
        if let Some(m) = pt.merit {
            let star = if pt.threshold == t.optimal.threshold { 1.0 } else { 0.0 };
            out.extend([pt.threshold as f64, m.resolution, m.accuracy.min(f64::MAX), GAMMA0 / m.resolution, star]);
        }
    }
    Ok(out)
}

/// `[R, A, F]` of a drive with mean `lambda` and relative spread `sigma_rel`.
#[wasm_bindgen]
pub fn rabi(lambda: f64, sigma_rel: f64) -> Result<Vec<f64>, JsError> {
    let n = NoiseModel::relative(lambda, sigma_rel, 1.0).map_err(err)?;
    let b = rabi_benchmark(&n, GAMMA0);
    Ok(vec![b.resolution, b.accuracy, b.fano])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_path_is_monotone_for_emissions() {
        let v = count_path(6, 2.0, 2.0, "emissions", 3.0, 1).unwrap();
        assert_eq!(v.len() % 2, 0);
        assert!(v.len() > 4);
        let n: Vec<f64> = v.iter().skip(1).step_by(2).copied().collect();
        assert!(n.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn spectrum_pairs() {
        let v = spectrum(6, 2.0, 2.0, "activity", 5.0, 2).unwrap();
        assert_eq!(v.len(), 2 * 401);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn tradeoff_rows_mark_one_optimum() {
        let v = tradeoff(6, 2.0, 2.0, "emissions", 8, 3).unwrap();
        assert_eq!(v.len() % 5, 0);
        let stars = v.chunks(5).filter(|r| r[4] == 1.0).count();
        assert_eq!(stars, 1);
    }

    #[test]
    fn rabi_product_is_one() {
        let v = rabi(2.0, 0.05).unwrap();
        assert!((v[0] * v[1] * v[2] - 1.0).abs() < 1e-12);
    }
}
