//! Unmonitored dynamics: the Lindblad generator, its nonequilibrium steady
//! state, and sampling of initial pure states from that steady state.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::{dopri5, Tolerances};
use crate::spin::{CollectiveOps, JumpKind, Tridiagonal, C64};
use crate::trajectory::DickeState;

/// Entries of the steady-state spectrum below this are treated as zero;
/// anything more negative is a failed solve.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
/// Target Frobenius norm of the generator applied to the steady state.
pub const RESIDUAL_TARGET: f64 = 1e-10;

/// A density matrix in the Dicke basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub DMatrix<C64>);

impl DensityMatrix {
    pub fn from_pure(state: &DickeState) -> Self {
        let v = &state.amps;
        DensityMatrix(v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `ρ ← (ρ + ρ†)/2`, then unit trace.
    pub fn hermitize_normalize(&mut self) {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let tr = h.trace().re;
        self.0 = h / C64::new(tr, 0.0);
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `½‖ρ - σ‖₁` for Hermitian arguments.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.0 - &other.0;
        let h = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
        0.5 * h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation(&self, state: &DickeState) -> f64 {
        let v = &state.amps;
        (v.adjoint() * &self.0 * v)[(0, 0)].re
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (&self.0 - &other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Lindblad generator with cached structured operators.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dim: usize,
    channels: Vec<Channel>,
}

#[derive(Clone, Debug)]
struct Channel {
    rate: f64,
    jump: Tridiagonal,
    jump_adj: Tridiagonal,
    intensity: Tridiagonal,
}

impl Liouvillian {
    pub fn new(ops: &CollectiveOps) -> Self {
        let channels = JumpKind::ALL
            .iter()
            .filter(|k| ops.channel_rate(**k) > 0.0)
            .map(|&k| {
                let jump = ops.jump_operator(k).clone();
                Channel { rate: ops.channel_rate(k), jump_adj: jump.adjoint(), intensity: ops.jump_intensity(k), jump }
            })
            .collect();
        Liouvillian { dim: ops.dim(), channels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Σ_k (γ_k/S)(L_k ρ L_k† - ½{L_k†L_k, ρ})`
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for ch in &self.channels {
            let sandwich = ch.jump_adj.right_mul(&ch.jump.left_mul(rho));
            let anti = ch.intensity.left_mul(rho) + ch.intensity.right_mul(rho);
            out += (sandwich - anti * C64::new(0.5, 0.0)) * C64::new(ch.rate, 0.0);
        }
        out
    }

    /// Banded superoperator in column-stacked convention, `vec(ρ)[i + d·j] = ρ_ij`.
    /// Half-bandwidth is `d + 1` on both sides.
    fn banded(&self, shift: f64) -> BandMatrix {
        let d = self.dim;
        let n = d * d;
        let mut band = BandMatrix::zeros(n, d + 1, d + 1);
        let near = |a: usize| a.saturating_sub(1)..(a + 2).min(d);
        for ch in &self.channels {
            let r = ch.rate;
            for j in 0..d {
                for i in 0..d {
                    let row = i + d * j;
                    // L ρ L†: conj(L[j,j']) L[i,i']
                    for jp in near(j) {
                        let lj = ch.jump.get(j, jp).conj();
                        if lj == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for ip in near(i) {
                            let li = ch.jump.get(i, ip);
                            if li != C64::new(0.0, 0.0) {
                                band.add(row, ip + d * jp, lj * li * r);
                            }
                        }
                    }
                    // -½ K ρ: δ_{jj'} K[i,i']
                    for ip in near(i) {
                        let k = ch.intensity.get(i, ip);
                        if k != C64::new(0.0, 0.0) {
                            band.add(row, ip + d * j, -0.5 * r * k);
                        }
                    }
                    // -½ ρ K: K[j',j] δ_{ii'}
                    for jp in near(j) {
                        let k = ch.intensity.get(jp, j);
                        if k != C64::new(0.0, 0.0) {
                            band.add(row, i + d * jp, -0.5 * r * k);
                        }
                    }
                }
            }
        }
        if shift != 0.0 {
            for idx in 0..n {
                band.add(idx, idx, C64::new(-shift, 0.0));
            }
        }
        band
    }

    fn scale(&self) -> f64 {
        self.channels
            .iter()
            .map(|ch| {
                let m = ch.intensity.diag.iter().chain(&ch.intensity.lower).map(|z| z.norm()).fold(0.0, f64::max);
                ch.rate * m
            })
            .sum::<f64>()
            .max(f64::MIN_POSITIVE)
    }
}

pub fn lindblad_rhs(rho: &DensityMatrix, ops: &CollectiveOps) -> Result<DMatrix<C64>> {
    if rho.dim() != ops.dim() || rho.0.ncols() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), got: rho.dim() });
    }
    Ok(Liouvillian::new(ops).apply(&rho.0))
}

/// Integrate the master equation, returning `ρ(t)` at each requested time.
pub fn propagate(rho0: &DensityMatrix, ops: &CollectiveOps, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    propagate_with(rho0, ops, times, Tolerances::default())
}

pub fn propagate_with(
    rho0: &DensityMatrix,
    ops: &CollectiveOps,
    times: &[f64],
    tol: Tolerances,
) -> Result<Vec<DensityMatrix>> {
    if rho0.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), got: rho0.dim() });
    }
    let gen = Liouvillian::new(ops);
    let out = dopri5(|r| gen.apply(r), &rho0.0, 0.0, times, tol)?;
    Ok(out.into_iter().map(DensityMatrix).collect())
}

/// Complex band matrix with room for LU fill-in (LAPACK `gbtrf` layout).
struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    pivots: Vec<usize>,
}

impl BandMatrix {
    fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, ab: vec![C64::new(0.0, 0.0); ldab * n], pivots: Vec::new() }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // row kl + ku + i - j of column j
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    fn add(&mut self, i: usize, j: usize, v: C64) {
        debug_assert!(i + self.ku >= j && j + self.kl >= i);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// In-place LU with partial pivoting. Returns false on an exact zero pivot.
    fn factorize(&mut self) -> bool {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        self.pivots = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = -1.0;
            for r in 0..=km {
                let v = self.ab[self.idx(j + r, j)].norm();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            self.pivots[j] = j + jp;
            if best == 0.0 {
                return false;
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[self.idx(j, j)];
            let inv = C64::new(1.0, 0.0) / piv;
            let col = j * self.ldab + kv;
            for r in 1..=km {
                self.ab[col + r] *= inv;
            }
            for c in j + 1..=ju {
                let u = self.ab[self.idx(j, c)];
                if u == C64::new(0.0, 0.0) {
                    continue;
                }
                let base_c = c * self.ldab + kv + j - c;
                for r in 1..=km {
                    let l = self.ab[col + r];
                    self.ab[base_c + r] -= l * u;
                }
            }
        }
        true
    }

    fn solve(&self, b: &mut [C64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            let col = j * self.ldab + kv;
            for r in 1..=km {
                b[j + r] -= self.ab[col + r] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                b[i] -= self.ab[self.idx(i, j)] * bj;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NessMethod {
    /// Exact pure fixed point (no drive, zero temperature).
    PureDecay,
    InverseIteration,
    Propagation,
}

/// The steady state and its spectral decomposition.
#[derive(Clone, Debug)]
pub struct SpectralNess {
    pub rho: DensityMatrix,
    /// Eigenvalues `π_n`, descending, clipped at zero and summing to one.
    pub populations: Vec<f64>,
    /// Column `n` is the eigenvector `|n⟩`.
    pub eigenvectors: DMatrix<C64>,
    pub residual: f64,
    pub method: NessMethod,
    cumulative: Vec<f64>,
}

impl SpectralNess {
    /// Spectrally decompose a given density matrix. The residual is supplied
    /// by the caller since it depends on the generator.
    pub fn from_density(mut rho: DensityMatrix, residual: f64, method: NessMethod) -> Result<Self> {
        rho.hermitize_normalize();
        let eig = rho.0.clone().symmetric_eigen();
        let d = rho.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < EIGENVALUE_FLOOR {
            return Err(Error::SteadyState {
                residual,
                reason: format!("steady state has eigenvalue {min:.3e} below {EIGENVALUE_FLOOR:e}"),
            });
        }
        let mut populations: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let total: f64 = populations.iter().sum();
        populations.iter_mut().for_each(|p| *p /= total);
        let eigenvectors = DMatrix::from_fn(d, d, |i, n| eig.eigenvectors[(i, order[n])]);
        let mut acc = 0.0;
        let cumulative = populations
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(SpectralNess { rho, populations, eigenvectors, residual, method, cumulative })
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn eigenstate(&self, n: usize) -> DickeState {
        DickeState::new(self.eigenvectors.column(n).into_owned())
    }

    /// `⟨ψ|π|ψ⟩`
    pub fn fidelity(&self, state: &DickeState) -> f64 {
        self.rho.expectation(state)
    }

    /// Mean jump rates `(γ_k/S) Tr[L_k† L_k π]` for (emission, absorption).
    pub fn jump_rates(&self, ops: &CollectiveOps) -> (f64, f64) {
        let rate = |k: JumpKind| {
            let lk = ops.jump_intensity(k).to_dense();
            ops.channel_rate(k) * (lk * &self.rho.0).trace().re
        };
        (rate(JumpKind::Emission), rate(JumpKind::Absorption))
    }

    /// Write `n, pi_n` rows.
    pub fn write_spectrum_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "pi_n"])?;
        for (n, p) in self.populations.iter().enumerate() {
            w.write_record([n.to_string(), format!("{p:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draw an eigenstate `|n⟩` of the steady state with probability `π_n`.
pub fn sample_initial<R: Rng + ?Sized>(ness: &SpectralNess, rng: &mut R) -> (usize, DickeState) {
    let n = sample_index(ness, rng);
    (n, ness.eigenstate(n))
}

pub(crate) fn sample_index<R: Rng + ?Sized>(ness: &SpectralNess, rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * ness.cumulative.last().copied().unwrap_or(1.0);
    ness.cumulative.iter().position(|&c| u < c).unwrap_or_else(|| {
        // u landed on the rounding tail; take the last populated state
        ness.populations.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    })
}

fn residual_of(gen: &Liouvillian, rho: &DensityMatrix) -> f64 {
    gen.apply(&rho.0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn vec_to_density(x: &[C64], d: usize) -> Option<DensityMatrix> {
    let m = DMatrix::from_column_slice(d, d, x);
    let tr = m.trace();
    if tr.norm() == 0.0 || !tr.norm().is_finite() {
        return None;
    }
    let mut rho = DensityMatrix(m / tr);
    rho.hermitize_normalize();
    Some(rho)
}

fn inverse_iteration(gen: &Liouvillian) -> Option<(DensityMatrix, f64)> {
    let d = gen.dim();
    let n = d * d;
    let shift = 1e-9 * gen.scale();
    let mut band = gen.banded(shift);
    if !band.factorize() {
        return None;
    }
    let mut x: Vec<C64> = vec![C64::new(0.0, 0.0); n];
    for i in 0..d {
        x[i + d * i] = C64::new(1.0 / d as f64, 0.0);
    }
    let mut best: Option<(DensityMatrix, f64)> = None;
    for _ in 0..8 {
        band.solve(&mut x);
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        x.iter_mut().for_each(|z| *z /= norm);
        if let Some(rho) = vec_to_density(&x, d) {
            let res = residual_of(gen, &rho);
            let improved = best.as_ref().map_or(true, |(_, r)| res < *r);
            if improved {
                best = Some((rho, res));
            }
            if res <= 0.01 * RESIDUAL_TARGET {
                break;
            }
        }
    }
    best
}

fn long_time_propagation(gen: &Liouvillian, ops: &CollectiveOps) -> Result<(DensityMatrix, f64)> {
    let d = gen.dim();
    let mut rho = DensityMatrix::maximally_mixed(d);
    let chunk = 1e3 / ops.params.gamma0;
    let mut res = residual_of(gen, &rho);
    for _ in 0..4 {
        let out = dopri5(|r| gen.apply(r), &rho.0, 0.0, &[chunk], Tolerances { rtol: 1e-12, atol: 1e-15, ..Default::default() })?;
        rho = DensityMatrix(out.into_iter().next().unwrap());
        rho.hermitize_normalize();
        res = residual_of(gen, &rho);
        if res <= RESIDUAL_TARGET {
            break;
        }
    }
    Ok((rho, res))
}

/// Steady state of the master equation by shifted inverse iteration on the
/// banded superoperator, falling back to long-time propagation.
pub fn ness(ops: &CollectiveOps) -> Result<SpectralNess> {
    let d = ops.dim();
    let gen = Liouvillian::new(ops);
    if ops.gamma_plus == 0.0 && ops.alpha == 0.0 {
        let mut m = DMatrix::zeros(d, d);
        m[(0, 0)] = C64::new(1.0, 0.0);
        let rho = DensityMatrix(m);
        let res = residual_of(&gen, &rho);
        return SpectralNess::from_density(rho, res, NessMethod::PureDecay);
    }
    let mut last_residual = f64::INFINITY;
    if let Some((rho, res)) = inverse_iteration(&gen) {
        last_residual = res;
        if res <= RESIDUAL_TARGET && rho.min_eigenvalue() >= EIGENVALUE_FLOOR {
            return SpectralNess::from_density(rho, res, NessMethod::InverseIteration);
        }
    }
    let (rho, res) = long_time_propagation(&gen, ops)?;
    if res <= RESIDUAL_TARGET {
        return SpectralNess::from_density(rho, res, NessMethod::Propagation);
    }
    Err(Error::SteadyState {
        residual: res.min(last_residual),
        reason: "inverse iteration and long-time propagation both failed to converge".into(),
    })
}

/// Steady state by long-time propagation only. Independent route used to
/// cross-check [`ness`].
pub fn ness_by_propagation(ops: &CollectiveOps) -> Result<SpectralNess> {
    let gen = Liouvillian::new(ops);
    let (rho, res) = long_time_propagation(&gen, ops)?;
    SpectralNess::from_density(rho, res, NessMethod::Propagation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_operators, ClockParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ops(spin2: u32, lambda: f64, beta: f64) -> CollectiveOps {
        build_operators(&ClockParams::new(spin2, lambda, 1e-3, beta).unwrap()).unwrap()
    }

    fn random_hermitian(d: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let mut rho = DensityMatrix(&a * a.adjoint());
        rho.hermitize_normalize();
        rho
    }

    #[test]
    fn structured_generator_matches_dense_formula() {
        let o = ops(4, 1.2, 2.0);
        let rho = random_hermitian(5, 3);
        let fast = lindblad_rhs(&rho, &o).unwrap();
        let mut dense = DMatrix::zeros(5, 5);
        for k in JumpKind::ALL {
            let l = o.jump_operator(k).to_dense();
            let ld = l.adjoint();
            let kk = &ld * &l;
            dense += (&l * &rho.0 * &ld - (&kk * &rho.0 + &rho.0 * &kk) * C64::new(0.5, 0.0))
                * C64::new(o.channel_rate(k), 0.0);
        }
        assert!((fast - dense).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn banded_superoperator_matches_apply() {
        let o = ops(3, 0.9, 0.7);
        let gen = Liouvillian::new(&o);
        let band = gen.banded(0.0);
        let rho = random_hermitian(4, 11);
        let d = 4;
        let x: Vec<C64> = rho.0.as_slice().to_vec();
        let mut y = vec![C64::new(0.0, 0.0); d * d];
        for row in 0..d * d {
            for col in 0..d * d {
                if row + band.ku >= col && col + band.kl >= row {
                    y[row] += band.ab[band.idx(row, col)] * x[col];
                }
            }
        }
        let expect = gen.apply(&rho.0);
        for (a, b) in y.iter().zip(expect.as_slice()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn output_is_traceless() {
        for (spin2, lambda, beta) in [(1, 0.0, 2.0), (2, 1.5, 2.0), (7, 0.7, 0.1), (10, 2.0, f64::INFINITY)] {
            let o = ops(spin2, lambda, beta);
            let rho = random_hermitian(spin2 as usize + 1, spin2 as u64);
            let out = lindblad_rhs(&rho, &o).unwrap();
            assert!(out.trace().norm() < 1e-12);
            assert!((&out - out.adjoint()).iter().all(|z| z.norm() < 1e-15));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let o = ops(2, 1.0, 1.0);
        assert!(matches!(
            lindblad_rhs(&DensityMatrix::maximally_mixed(4), &o),
            Err(Error::DimensionMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn amplitude_damping_single_spin() {
        // S = 1/2, no drive, zero temperature: ρ_ee decays at γ-/S = 2γ0.
        let p = ClockParams::new(1, 0.0, 0.3, f64::INFINITY).unwrap();
        let o = build_operators(&p).unwrap();
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 1)] = C64::new(1.0, 0.0);
        let out = lindblad_rhs(&DensityMatrix(m), &o).unwrap();
        assert!((out[(1, 1)].re - (-2.0 * 0.3)).abs() < 1e-15);
        assert!((out[(0, 0)].re - 0.6).abs() < 1e-15);
    }

    #[test]
    fn steady_state_is_stationary() {
        let o = ops(6, 1.5, 2.0);
        let pi = ness(&o).unwrap();
        assert_eq!(pi.method, NessMethod::InverseIteration);
        let out = lindblad_rhs(&pi.rho, &o).unwrap();
        let fro = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(fro <= RESIDUAL_TARGET);
        assert!((pi.rho.trace().re - 1.0).abs() < 1e-12);
        assert!(pi.rho.min_eigenvalue() >= EIGENVALUE_FLOOR);
        assert!((pi.populations.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pi.populations.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pure_decay_fixed_point() {
        let o = ops(10, 0.0, f64::INFINITY);
        let pi = ness(&o).unwrap();
        assert_eq!(pi.rho.0[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(pi.rho.0.iter().filter(|z| z.norm() != 0.0).count(), 1);
        assert_eq!(pi.populations[0], 1.0);
    }

    #[test]
    fn null_space_agrees_with_propagation() {
        let o = ops(1, 1.5, 2.0);
        let a = ness(&o).unwrap();
        let b = ness_by_propagation(&o).unwrap();
        assert!(a.rho.max_abs_diff(&b.rho) < 1e-8, "{}", a.rho.max_abs_diff(&b.rho));
    }

    #[test]
    fn relaxes_to_unique_steady_state() {
        let o = ops(4, 0.7, 0.5);
        let pi = ness(&o).unwrap();
        let start = DensityMatrix::from_pure(&DickeState::basis(5, 4));
        let t = 2e3 / o.params.gamma0;
        let out = propagate(&start, &o, &[0.1 / o.params.gamma0, t]).unwrap();
        assert!(out[0].min_eigenvalue() >= -1e-8);
        assert!(out[1].trace_distance(&pi.rho) <= 1e-6);
    }

    #[test]
    fn sampling_pure_state_is_deterministic() {
        let o = ops(4, 0.0, f64::INFINITY);
        let pi = ness(&o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(sample_initial(&pi, &mut rng).0, 0);
        }
    }

    #[test]
    fn sampling_uniform_mixture() {
        let d = 8;
        let pi = SpectralNess::from_density(DensityMatrix::maximally_mixed(d), 0.0, NessMethod::PureDecay).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let mut counts = vec![0usize; d];
        for _ in 0..draws {
            counts[sample_index(&pi, &mut rng)] += 1;
        }
        let p = 1.0 / d as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "{c}");
        }
    }

    #[test]
    fn sampling_repeats_with_seed() {
        let o = ops(6, 1.5, 2.0);
        let pi = ness(&o).unwrap();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_index(&pi, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(seq(7), seq(7));
    }
}
