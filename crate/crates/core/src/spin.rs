//! Collective-spin algebra on a single Dicke manifold and the rate structure
//! of the thermal reservoir.
//!
//! Basis convention: index `j = 0..d` labels `|S, m⟩` with `m = -S + j`, so
//! index 0 is the all-spins-down state. Times are in units of `1/ωC` and
//! rates in units of `ωC`, with `ωC = 1`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Reference frequency of the spins. Everything is expressed in its units.
pub const OMEGA_C: f64 = 1.0;

/// Physical configuration of the clock.
///
/// `beta = f64::INFINITY` is the explicit zero-temperature flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    /// Twice the total spin, `n_s = 2S`.
    pub spin2: u32,
    pub lambda: f64,
    pub gamma0: f64,
    pub beta: f64,
}

impl ClockParams {
    pub fn new(spin2: u32, lambda: f64, gamma0: f64, beta: f64) -> Result<Self> {
        let p = ClockParams { spin2, lambda, gamma0, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spin2 < 1 {
            return Err(Error::InvalidParams("2S must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParams(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::InvalidParams(format!("gamma0 = {} must be finite and > 0", self.gamma0)));
        }
        if !(self.beta > 0.0) || self.beta.is_nan() {
            return Err(Error::InvalidParams(format!(
                "beta = {} must be > 0 (use infinity for zero temperature)",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn spin(&self) -> f64 {
        0.5 * self.spin2 as f64
    }

    pub fn dim(&self) -> usize {
        self.spin2 as usize + 1
    }

    /// Coherent displacement `α = λS`.
    pub fn alpha(&self) -> f64 {
        self.lambda * self.spin()
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Same configuration with a different drive parameter.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        ClockParams { lambda, ..*self }
    }
}

/// Bose occupation `n̄ = 1/(e^{βωC} - 1)`; exactly zero at the zero-temperature flag.
pub fn mean_occupation(beta: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / (beta * OMEGA_C).exp_m1()
    }
}

/// Absorption and emission rates `(γ+, γ-)`.
pub fn thermal_rates(params: &ClockParams) -> (f64, f64) {
    let nbar = mean_occupation(params.beta);
    (params.gamma0 * nbar, params.gamma0 * (nbar + 1.0))
}

/// A tridiagonal operator stored by diagonals. `lower[j]` sits at
/// `(j+1, j)`, `upper[j]` at `(j, j+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<C64>,
    pub diag: Vec<C64>,
    pub upper: Vec<C64>,
}

impl Tridiagonal {
    pub fn zeros(dim: usize) -> Self {
        let off = dim.saturating_sub(1);
        Tridiagonal {
            lower: vec![C64::new(0.0, 0.0); off],
            diag: vec![C64::new(0.0, 0.0); dim],
            upper: vec![C64::new(0.0, 0.0); off],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn adjoint(&self) -> Self {
        Tridiagonal {
            lower: self.upper.iter().map(|z| z.conj()).collect(),
            diag: self.diag.iter().map(|z| z.conj()).collect(),
            upper: self.lower.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.lower[j]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.get(i, j))
    }

    /// `out = self · v`
    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        let d = self.dim();
        debug_assert_eq!(v.len(), d);
        for i in 0..d {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.lower[i - 1] * v[i - 1];
            }
            if i + 1 < d {
                acc += self.upper[i] * v[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn mul_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(v.len());
        self.apply(v.as_slice(), out.as_mut_slice());
        out
    }

    /// `self · m` for a dense square matrix, in O(d²).
    pub fn left_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            let mut acc = self.diag[i] * m[(i, j)];
            if i > 0 {
                acc += self.lower[i - 1] * m[(i - 1, j)];
            }
            if i + 1 < d {
                acc += self.upper[i] * m[(i + 1, j)];
            }
            acc
        })
    }

    /// `m · self` for a dense square matrix, in O(d²).
    pub fn right_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            let mut acc = m[(i, j)] * self.diag[j];
            if j > 0 {
                acc += m[(i, j - 1)] * self.upper[j - 1];
            }
            if j + 1 < d {
                acc += m[(i, j + 1)] * self.lower[j];
            }
            acc
        })
    }

    /// Product of two tridiagonal operators whose result is known to stay
    /// tridiagonal (true when one factor is bidiagonal plus diagonal).
    pub fn compose_tridiagonal(&self, rhs: &Tridiagonal) -> Tridiagonal {
        let d = self.dim();
        let entry = |i: usize, j: usize| {
            let lo = i.max(j).saturating_sub(1);
            let hi = (i.min(j) + 1).min(d - 1);
            (lo..=hi).map(|k| self.get(i, k) * rhs.get(k, j)).sum::<C64>()
        };
        let mut out = Tridiagonal::zeros(d);
        for i in 0..d {
            out.diag[i] = entry(i, i);
            if i + 1 < d {
                out.lower[i] = entry(i + 1, i);
                out.upper[i] = entry(i, i + 1);
            }
        }
        out
    }

    /// `⟨v|self|v⟩`
    pub fn expectation(&self, v: &[C64]) -> C64 {
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            let mut row = self.diag[i] * v[i];
            if i > 0 {
                row += self.lower[i - 1] * v[i - 1];
            }
            if i + 1 < d {
                row += self.upper[i] * v[i + 1];
            }
            acc += v[i].conj() * row;
        }
        acc
    }
}

/// Ladder coefficient `√(S(S+1) - m(m+1))` linking `m` and `m + 1`, with
/// `m = -S + j`. Computed in half-integer units to stay exact.
fn ladder_coefficient(spin2: u32, j: usize) -> f64 {
    // With n = 2S and 2m = 2j - n: S(S+1) - m(m+1) = (j+1)(n-j).
    let n = spin2 as f64;
    let j = j as f64;
    ((j + 1.0) * (n - j)).sqrt()
}

/// Collective operators and rates for one parameter set. Immutable after
/// construction and shared freely between trajectory workers.
#[derive(Clone, Debug)]
pub struct CollectiveOps {
    pub params: ClockParams,
    pub alpha: f64,
    pub mean_occupation: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// `ladder[j]` couples basis states `j` and `j + 1`.
    pub ladder: Vec<f64>,
    pub s_plus: Tridiagonal,
    pub s_minus: Tridiagonal,
    pub s_z: Tridiagonal,
    pub l_minus: Tridiagonal,
    pub l_plus: Tridiagonal,
}

pub fn build_operators(params: &ClockParams) -> Result<CollectiveOps> {
    params.validate()?;
    let d = params.dim();
    let s = params.spin();
    let alpha = params.alpha();
    let ladder: Vec<f64> = (0..d - 1).map(|j| ladder_coefficient(params.spin2, j)).collect();

    let mut s_plus = Tridiagonal::zeros(d);
    let mut s_minus = Tridiagonal::zeros(d);
    let mut s_z = Tridiagonal::zeros(d);
    for (j, &c) in ladder.iter().enumerate() {
        s_plus.lower[j] = C64::new(c, 0.0);
        s_minus.upper[j] = C64::new(c, 0.0);
    }
    for j in 0..d {
        s_z.diag[j] = C64::new(-s + j as f64, 0.0);
    }

    // L- = S- + iα, L+ = S+ - iα
    let mut l_minus = s_minus.clone();
    let mut l_plus = s_plus.clone();
    for j in 0..d {
        l_minus.diag[j] = C64::new(0.0, alpha);
        l_plus.diag[j] = C64::new(0.0, -alpha);
    }

    let (gamma_plus, gamma_minus) = thermal_rates(params);
    Ok(CollectiveOps {
        params: *params,
        alpha,
        mean_occupation: mean_occupation(params.beta),
        gamma_plus,
        gamma_minus,
        ladder,
        s_plus,
        s_minus,
        s_z,
        l_minus,
        l_plus,
    })
}

/// Jump channel of the monitored reservoir.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpKind {
    /// Collective emission, operator `L-`.
    Emission,
    /// Collective absorption, operator `L+`.
    Absorption,
}

impl JumpKind {
    pub const ALL: [JumpKind; 2] = [JumpKind::Emission, JumpKind::Absorption];

    pub fn as_str(&self) -> &'static str {
        match self {
            JumpKind::Emission => "emission",
            JumpKind::Absorption => "absorption",
        }
    }
}

impl CollectiveOps {
    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn spin(&self) -> f64 {
        self.params.spin()
    }

    pub fn jump_operator(&self, kind: JumpKind) -> &Tridiagonal {
        match kind {
            JumpKind::Emission => &self.l_minus,
            JumpKind::Absorption => &self.l_plus,
        }
    }

    /// Channel rate prefactor `γ_k / S`.
    pub fn channel_rate(&self, kind: JumpKind) -> f64 {
        let g = match kind {
            JumpKind::Emission => self.gamma_minus,
            JumpKind::Absorption => self.gamma_plus,
        };
        g / self.spin()
    }

    /// `L_k† L_k`, tridiagonal.
    pub fn jump_intensity(&self, kind: JumpKind) -> Tridiagonal {
        let l = self.jump_operator(kind);
        l.adjoint().compose_tridiagonal(l)
    }

    /// Hermitian no-jump rate operator `K = Σ_k (γ_k/S) L_k† L_k`. The
    /// conditional drift between jumps is `-K/2`.
    pub fn decay_operator(&self) -> Tridiagonal {
        let mut k = Tridiagonal::zeros(self.dim());
        for kind in JumpKind::ALL {
            let rate = self.channel_rate(kind);
            if rate == 0.0 {
                continue;
            }
            let lk = self.jump_intensity(kind);
            for (a, b) in k.diag.iter_mut().zip(&lk.diag) {
                *a += b * rate;
            }
            for (a, b) in k.lower.iter_mut().zip(&lk.lower) {
                *a += b * rate;
            }
            for (a, b) in k.upper.iter_mut().zip(&lk.upper) {
                *a += b * rate;
            }
        }
        k
    }

    /// Clock Hamiltonian `H_C = ωC Σ σ+σ- = ωC (Sz + S)`, diagonal.
    pub fn clock_energy(&self, j: usize) -> f64 {
        OMEGA_C * j as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_half_lowering_ladder() {
        let p = ClockParams::new(1, 0.0, 1.0, 2.0).unwrap();
        let ops = build_operators(&p).unwrap();
        let l = ops.l_minus.to_dense();
        assert_eq!(l[(0, 1)], C64::new(1.0, 0.0));
        assert_eq!(l[(1, 0)], C64::new(0.0, 0.0));
        assert_eq!(l[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(l[(1, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn spin_one_ladder_entries() {
        let p = ClockParams::new(2, 0.0, 1.0, 2.0).unwrap();
        let ops = build_operators(&p).unwrap();
        // oracle: √(S(S+1) - m(m-1)) for m = 0, 1 with S = 1
        let s = 1.0_f64;
        let expect = |m: f64| (s * (s + 1.0) - m * (m - 1.0)).sqrt();
        let sm = ops.s_minus.to_dense();
        assert!((sm[(0, 1)].re - expect(0.0)).abs() < 1e-15);
        assert!((sm[(1, 2)].re - expect(1.0)).abs() < 1e-15);
        assert!((sm[(0, 1)].re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn large_spin_displacement() {
        let p = ClockParams::new(100, 2.0, 1e-3, 2.0).unwrap();
        let ops = build_operators(&p).unwrap();
        assert_eq!(ops.alpha, 100.0);
        assert!(ops.l_minus.diag.iter().all(|z| *z == C64::new(0.0, 100.0)));
        assert_eq!(ops.l_minus.upper, ops.s_minus.upper);
    }

    #[test]
    fn rejects_zero_spin() {
        let p = ClockParams { spin2: 0, lambda: 1.0, gamma0: 1.0, beta: 1.0 };
        assert!(build_operators(&p).is_err());
        assert!(ClockParams::new(1, -0.1, 1.0, 1.0).is_err());
        assert!(ClockParams::new(1, 0.1, 0.0, 1.0).is_err());
        assert!(ClockParams::new(1, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn adjointness_is_exact() {
        for spin2 in [1, 2, 7, 50] {
            let p = ClockParams::new(spin2, 1.3, 1e-3, 2.0).unwrap();
            let ops = build_operators(&p).unwrap();
            let diff = ops.l_plus.to_dense() - ops.l_minus.to_dense().adjoint();
            assert_eq!(max_abs(&diff), 0.0);
        }
    }

    #[test]
    fn commutator_gives_twice_sz() {
        for spin2 in [1, 2, 3, 20, 101, 200] {
            let p = ClockParams::new(spin2, 0.0, 1.0, 1.0).unwrap();
            let ops = build_operators(&p).unwrap();
            let sp = ops.s_plus.to_dense();
            let sm = ops.s_minus.to_dense();
            let comm = &sp * &sm - &sm * &sp;
            let diff = comm - ops.s_z.to_dense() * C64::new(2.0, 0.0);
            let scale = (spin2 * spin2) as f64;
            assert!(max_abs(&diff) < 1e-14 * scale.max(1.0), "2S = {spin2}: {}", max_abs(&diff));
        }
    }

    #[test]
    fn zero_temperature_rates() {
        let p = ClockParams::new(1, 0.0, 0.37, f64::INFINITY).unwrap();
        assert_eq!(thermal_rates(&p), (0.0, 0.37));
    }

    #[test]
    fn occupation_at_beta_two() {
        let nbar = mean_occupation(2.0);
        assert!((nbar - 1.0 / (2f64.exp() - 1.0)).abs() < 1e-15);
        assert!((nbar - 0.156518).abs() < 1e-6);
        let p = ClockParams::new(1, 0.0, 1.0, 2.0).unwrap();
        let (gp, gm) = thermal_rates(&p);
        assert!(((gm / gp) - 2f64.exp()).abs() / 2f64.exp() < 1e-12);
    }

    #[test]
    fn detailed_balance_across_temperatures() {
        for beta in [1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 30.0] {
            let p = ClockParams::new(3, 1.0, 1e-3, beta).unwrap();
            let (gp, gm) = thermal_rates(&p);
            let rel = ((gm / gp) - beta.exp()).abs() / beta.exp();
            assert!(rel <= 1e-12, "beta = {beta}: rel err {rel}");
        }
    }

    #[test]
    fn decay_operator_is_hermitian_and_matches_dense() {
        let p = ClockParams::new(6, 1.5, 1e-3, 2.0).unwrap();
        let ops = build_operators(&p).unwrap();
        let k = ops.decay_operator().to_dense();
        assert!(max_abs(&(k.clone() - k.adjoint())) < 1e-15);
        let lm = ops.l_minus.to_dense();
        let lp = ops.l_plus.to_dense();
        let dense = lm.adjoint() * &lm * C64::new(ops.channel_rate(JumpKind::Emission), 0.0)
            + lp.adjoint() * &lp * C64::new(ops.channel_rate(JumpKind::Absorption), 0.0);
        assert!(max_abs(&(k - dense)) < 1e-15);
    }

    #[test]
    fn tridiagonal_products_match_dense() {
        let p = ClockParams::new(5, 0.8, 1.0, 1.0).unwrap();
        let ops = build_operators(&p).unwrap();
        let m = DMatrix::from_fn(6, 6, |i, j| C64::new((i * 7 + j) as f64 * 0.1, (i as f64) - (j as f64)));
        let l = &ops.l_minus;
        let ld = l.to_dense();
        assert!(max_abs(&(l.left_mul(&m) - &ld * &m)) < 1e-12);
        assert!(max_abs(&(l.right_mul(&m) - &m * &ld)) < 1e-12);
    }
}
