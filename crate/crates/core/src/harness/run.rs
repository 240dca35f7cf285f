//! Mode dispatch, file emission and the checksum manifest.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::with_workers;
use crate::spin::ClockParams;
use crate::ticks::{accumulate, default_m_grid, dominant_peak, write_spectrum_csv, write_tradeoff_csv, wtd_histogram, CountingObservable, TradeoffPoint};
use crate::thermo::{write_ledger_csv, FtEstimate};
use crate::trajectory::{NoMarkers, RunOptions, Simulator};

use super::config::{Mode, RunConfig};
use super::experiments::{
    count_ensemble, default_omegas, ft_check, lambda_sweep, noise_scan, spectrum, spin_sweep, thermo_ensemble,
    tradeoff_from_paths, waits_at, Budget,
};

pub const MANIFEST: &str = "manifest.json";
const MAX_TRAJECTORY_FILES: u64 = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub trajectories: u64,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let data = fs::read(path)?;
    let digest = Sha256::digest(&data);
    Ok((digest.iter().map(|b| format!("{b:02x}")).collect(), data.len() as u64))
}

/// Files whose content no longer matches the manifest (missing files
/// included).
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let mut bad = Vec::new();
    for f in &m.files {
        match sha256_file(&dir.join(&f.name)) {
            Ok((h, n)) if h == f.sha256 && n == f.bytes => {}
            _ => bad.push(f.name.clone()),
        }
    }
    Ok(bad)
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> std::path::PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn e(x: f64) -> String {
    format!("{x:.10e}")
}

fn budget(cfg: &RunConfig) -> Budget {
    Budget { trajectories: cfg.trajectories, seed: cfg.seed, min_ticks: cfg.horizon_min_ticks }
}

fn grid(cfg: &RunConfig) -> Vec<u64> {
    if let Some(m) = cfg.threshold {
        vec![m]
    } else if let Some(g) = &cfg.m_grid {
        g.clone()
    } else {
        default_m_grid(cfg.params.spin(), cfg.params.lambda)
    }
}

/// Default record length: twenty mean-field periods, or `200/γ0` below the
/// oscillating phase.
pub fn default_horizon(p: &ClockParams) -> f64 {
    if p.lambda > 1.0 {
        20.0 * 2.0 * std::f64::consts::PI / (p.gamma0 * (p.lambda * p.lambda - 1.0).sqrt())
    } else {
        200.0 / p.gamma0
    }
}

/// Run one configuration and write its outputs plus `manifest.json` into
/// `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let start = Instant::now();
    fs::create_dir_all(&cfg.out)?;
    let mut out = Out { dir: &cfg.out, files: Vec::new() };
    with_workers(cfg.workers, || dispatch(cfg, &mut out))?;
    let mut files = Vec::with_capacity(out.files.len());
    for name in &out.files {
        let (sha256, bytes) = sha256_file(&cfg.out.join(name))?;
        files.push(FileEntry { name: name.clone(), sha256, bytes });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        trajectories: cfg.trajectories,
        wall_time_s: start.elapsed().as_secs_f64(),
        files,
    };
    fs::write(cfg.out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn tradeoff_rows(curve: &[TradeoffPoint]) -> Vec<Vec<String>> {
    curve
        .iter()
        .filter_map(|p| {
            p.merit.map(|m| {
                vec![
                    p.threshold.to_string(),
                    e(m.resolution),
                    e(m.accuracy),
                    e(m.fano),
                    e(m.resolution_err),
                    e(m.accuracy_err),
                    e(m.fano_err),
                ]
            })
        })
        .collect()
}

fn ft_rows(name: &str, est: &FtEstimate) -> Vec<Vec<String>> {
    est.trace.iter().map(|c| vec![name.to_string(), c.samples.to_string(), e(c.mean), e(c.stderr)]).collect()
}

fn dispatch(cfg: &RunConfig, out: &mut Out) -> Result<()> {
    let p = cfg.params;
    let obs = cfg.observable()?;
    let b = budget(cfg);
    match cfg.mode {
        Mode::Simulate => {
            let sim = Simulator::from_params(&p)?;
            let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&p));
            let recs = sim.run_ensemble(cfg.trajectories, cfg.seed, &RunOptions::horizon(horizon), |_| NoMarkers)?;
            for r in recs.iter().take(MAX_TRAJECTORY_FILES as usize) {
                r.write_csv(&out.path(&format!("trajectory_{:04}.csv", r.stream.index)))?;
                r.write_sidecar(&out.path(&format!("trajectory_{:04}.json", r.stream.index)))?;
            }
            let paths: Vec<Vec<_>> = CountingObservable::PRESETS.iter().map(|&o| recs.iter().map(|r| accumulate(r, o)).collect()).collect();
            let n = recs.len() as f64;
            let rows = (0..=400).map(|k| {
                let t = horizon * k as f64 / 400.0;
                let mut row = vec![e(t)];
                for ps in &paths {
                    row.push(e(ps.iter().map(|q| q.value_at(t) as f64).sum::<f64>() / n));
                }
                row.push(paths[0][0].value_at(t).to_string());
                row
            });
            out.csv("counts.csv", &["t", "mean_emissions", "mean_activity", "mean_heat", "emissions_0"], rows)?;
            let om = default_omegas(&p, horizon);
            let specs: Vec<Vec<f64>> = paths[0].iter().map(|q| crate::ticks::count_spectrum(q, &om)).collect();
            let mag: Vec<f64> = (0..om.len()).map(|k| specs.iter().map(|s| s[k]).sum::<f64>() / n).collect();
            write_spectrum_csv(&out.path("spectrum.csv"), &om, &mag)?;
            sim.ness.write_spectrum_csv(&out.path("ness_spectrum.csv"))?;
            let (jm, jp) = sim.jump_rates();
            out.json("rates.json", &serde_json::json!({ "j_minus": jm, "j_plus": jp, "horizon": horizon }))?;
        }
        Mode::Spectrum => {
            let sim = Simulator::from_params(&p)?;
            let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&p));
            let om = default_omegas(&p, horizon);
            let s = spectrum(&sim, obs, horizon, &om, &b)?;
            write_spectrum_csv(&out.path("spectrum.csv"), &s.omegas, &s.magnitude)?;
            // skip the low-frequency band dominated by slow drift
            let peak = dominant_peak(&s.omegas, &s.magnitude, 0.1 * p.gamma0);
            let nu = super::fit::tc_frequency(p.gamma0, p.lambda);
            out.json("peak.json", &serde_json::json!({ "peak": peak, "omega_mean_field": 2.0 * std::f64::consts::PI * nu }))?;
        }
        Mode::SweepThreshold => {
            let sim = Simulator::from_params(&p)?;
            let g = grid(cfg);
            let recs = count_ensemble(&sim, obs, *g.iter().max().unwrap(), &b)?;
            let paths: Vec<_> = recs.iter().map(|r| accumulate(r, obs)).collect();
            drop(recs);
            if g.len() < 3 {
                let curve = crate::ticks::sweep_thresholds(&paths, &g)?;
                write_tradeoff_csv(&out.path("tradeoff.csv"), &curve)?;
                if let Some(m) = g.first() {
                    wtd_histogram(&waits_at(&paths, *m)?)?.write_csv(&out.path("wtd.csv"))?;
                }
                return Ok(());
            }
            let t = tradeoff_from_paths(&paths, obs, &g, cfg.trajectories)?;
            write_tradeoff_csv(&out.path("tradeoff.csv"), &t.curve)?;
            out.csv("tradeoff_refined.csv", &["M", "R", "A", "F", "dR", "dA", "dF"], tradeoff_rows(&t.refined))?;
            let (jm, jp) = sim.jump_rates();
            out.json(
                "optimal.json",
                &serde_json::json!({
                    "observable": obs.name(),
                    "threshold": t.threshold,
                    "coarse": t.optimal,
                    "merit": t.merit,
                    "poisson_accuracy_at_R": p.gamma0 / t.merit.resolution,
                    "counting_rate": obs.rate(jm, jp),
                }),
            )?;
            wtd_histogram(&waits_at(&paths, t.threshold)?)?.write_csv(&out.path("wtd.csv"))?;
        }
        Mode::SweepLambda => {
            let ls = cfg.lambdas.clone().unwrap_or_else(|| vec![1.1, 1.3, 1.5, 1.7, 2.0]);
            let g = cfg.m_grid.clone().or(cfg.threshold.map(|m| vec![m]));
            let s = lambda_sweep(&p, &ls, obs, g.as_deref(), &b)?;
            let rows = s.rows.iter().map(|r| {
                vec![
                    r.lambda.to_string(),
                    e(r.nu),
                    r.threshold.to_string(),
                    r.has_peak.to_string(),
                    e(r.merit.resolution),
                    e(r.merit.accuracy),
                    e(r.merit.fano),
                    e(r.merit.resolution_err),
                    e(r.merit.accuracy_err),
                    e(r.merit.fano_err),
                ]
            });
            out.csv("lambda_sweep.csv", &["lambda", "nu", "M", "has_peak", "R", "A", "F", "dR", "dA", "dF"], rows)?;
            out.json("fits.json", &serde_json::json!({ "resolution": s.resolution_fit, "threshold": s.threshold_fit }))?;
        }
        Mode::SweepSpin => {
            let ss = cfg.spins2.clone().unwrap_or_else(|| vec![20, 30, 40, 50, 60]);
            let s = spin_sweep(&p, &ss, obs, &b)?;
            let rows = s.rows.iter().map(|r| {
                vec![
                    r.spin2.to_string(),
                    r.threshold.to_string(),
                    e(r.merit.resolution),
                    e(r.merit.accuracy),
                    e(r.merit.accuracy_err),
                    e(r.report.mean_s_tick),
                    e(r.report.s_tick_err),
                    e(r.report.mean_k_tick),
                    e(r.report.k_tick_err),
                ]
            });
            out.csv("spin_sweep.csv", &["spin2", "M", "R", "A", "dA", "S_tick", "dS_tick", "K_tick", "dK_tick"], rows)?;
            out.json(
                "fits.json",
                &serde_json::json!({ "accuracy": s.accuracy_fit, "s_tick": s.entropy_fit, "k_tick": s.activity_fit }),
            )?;
        }
        Mode::FtCheck => {
            let sim = Simulator::from_params(&p)?;
            let m = cfg.threshold.unwrap_or(5);
            let f = ft_check(&sim, obs, m, cfg.trajectories, cfg.seed)?;
            let rows = ft_rows("s_mar_first", &f.first_tick).into_iter().chain(ft_rows("s_tick", &f.tick));
            out.csv("ft_trace.csv", &["quantity", "samples", "mean", "stderr"], rows)?;
            out.json("ft_check.json", &f)?;
        }
        Mode::Turkur => {
            let sim = Simulator::from_params(&p)?;
            let m = match cfg.threshold {
                Some(m) => m,
                None => {
                    let g = cfg.m_grid.clone().unwrap_or_else(|| default_m_grid(p.spin(), p.lambda));
                    super::experiments::tradeoff(&sim, obs, &g, &b)?.threshold
                }
            };
            let t = thermo_ensemble(&sim, obs, m, &Budget { seed: cfg.seed.wrapping_add(1), ..b })?;
            let pooled: Vec<_> = t.ledgers.iter().flatten().copied().collect();
            write_ledger_csv(&out.path("ledger.csv"), &pooled)?;
            out.json(
                "turkur.json",
                &serde_json::json!({ "observable": obs.name(), "threshold": m, "merit": t.merit, "report": t.report }),
            )?;
        }
        Mode::Noise => {
            let sigmas = cfg.noise_sigma_rel.clone().unwrap_or_else(|| vec![0.02, 0.03, 0.05, 0.07, 0.1, 0.12, 0.15]);
            let r = noise_scan(&p, &CountingObservable::PRESETS, &sigmas, cfg.noise_dt, &b)?;
            r.table.write_csv(&out.path("crossover.csv"))?;
            out.json("crossover.json", &r)?;
        }
    }
    if out.files.is_empty() {
        return Err(Error::InsufficientStatistics("run produced no output".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("tcclock-run-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn manifest_lists_files_and_detects_tampering() {
        let mut cfg = RunConfig::new(Mode::SweepThreshold, ClockParams::new(6, 2.0, 1e-3, 2.0).unwrap());
        cfg.trajectories = 8;
        cfg.m_grid = Some(vec![3, 6, 10, 15, 20, 30]);
        cfg.out = tmp("manifest");
        let m = run(&cfg).unwrap();
        assert!(m.files.iter().any(|f| f.name == "tradeoff.csv"));
        assert!(verify_manifest(&cfg.out).unwrap().is_empty());
        fs::write(cfg.out.join("tradeoff.csv"), "M\n").unwrap();
        assert_eq!(verify_manifest(&cfg.out).unwrap(), vec!["tradeoff.csv".to_string()]);
        fs::remove_dir_all(&cfg.out).unwrap();
    }

    #[test]
    fn checksums_independent_of_workers() {
        let mut cfg = RunConfig::new(Mode::Simulate, ClockParams::new(4, 1.5, 1e-3, 2.0).unwrap());
        cfg.trajectories = 4;
        cfg.horizon = Some(5e3);
        let (d1, d3) = (tmp("w1"), tmp("w3"));
        cfg.out = d1.clone();
        cfg.workers = Some(1);
        let a = run(&cfg).unwrap();
        cfg.out = d3.clone();
        cfg.workers = Some(3);
        let b = run(&cfg).unwrap();
        assert_eq!(a.files, b.files);
        fs::remove_dir_all(d1).unwrap();
        fs::remove_dir_all(d3).unwrap();
    }
}
