//! Adaptive Dormand–Prince 5(4) stepping for linear matrix ODEs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spin::C64;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-10, atol: 1e-13, max_steps: 5_000_000 }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// error weights: b - b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(acc: &mut DMatrix<C64>, terms: &[(f64, &DMatrix<C64>)], base: &DMatrix<C64>, h: f64) {
    acc.copy_from(base);
    for (c, k) in terms {
        if *c != 0.0 {
            acc.zip_apply(*k, |a, b| *a += b * (c * h));
        }
    }
}

/// Integrate `dy/dt = f(y)` from `t0` to each time in `outputs` (ascending,
/// all `>= t0`), returning the state at each output time.
pub fn dopri5<F>(
    mut f: F,
    y0: &DMatrix<C64>,
    t0: f64,
    outputs: &[f64],
    tol: Tolerances,
) -> Result<Vec<DMatrix<C64>>>
where
    F: FnMut(&DMatrix<C64>) -> DMatrix<C64>,
{
    let mut y = y0.clone();
    let mut t = t0;
    let mut out = Vec::with_capacity(outputs.len());
    let (r, c) = y.shape();
    let mut tmp = DMatrix::zeros(r, c);
    let mut k1 = f(&y);

    // initial step from the derivative scale
    let scale = y.iter().map(|z| z.norm()).fold(0.0, f64::max).max(tol.atol);
    let dscale = k1.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut h = if dscale > 0.0 { 0.01 * scale / dscale } else { 1.0 };
    let mut steps = 0usize;

    for &t_out in outputs {
        if t_out < t {
            return Err(Error::Integration { time: t, reason: "output times must be ascending".into() });
        }
        while t < t_out {
            if steps >= tol.max_steps {
                return Err(Error::Integration { time: t, reason: "step budget exhausted".into() });
            }
            let last = t + h >= t_out;
            let hs = if last { t_out - t } else { h };

            axpy(&mut tmp, &[(A21, &k1)], &y, hs);
            let k2 = f(&tmp);
            axpy(&mut tmp, &[(A31, &k1), (A32, &k2)], &y, hs);
            let k3 = f(&tmp);
            axpy(&mut tmp, &[(A41, &k1), (A42, &k2), (A43, &k3)], &y, hs);
            let k4 = f(&tmp);
            axpy(&mut tmp, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &y, hs);
            let k5 = f(&tmp);
            axpy(&mut tmp, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], &y, hs);
            let k6 = f(&tmp);
            let mut y_new = DMatrix::zeros(r, c);
            axpy(&mut y_new, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], &y, hs);
            let k7 = f(&y_new);

            let mut err = 0.0f64;
            for idx in 0..y.len() {
                let e = (k1[idx] * E1 + k3[idx] * E3 + k4[idx] * E4 + k5[idx] * E5 + k6[idx] * E6 + k7[idx] * E7)
                    * hs;
                let sc = tol.atol + tol.rtol * y[idx].norm().max(y_new[idx].norm());
                err = err.max(e.norm() / sc);
            }
            steps += 1;
            if !err.is_finite() {
                return Err(Error::Integration { time: t, reason: "non-finite state".into() });
            }
            if err <= 1.0 {
                t = if last { t_out } else { t + hs };
                y = y_new;
                k1 = k7;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(last && err <= 1.0) {
                h = hs * factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Integration { time: t, reason: "step size underflow".into() });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rotation() {
        // dy/dt = -i ω y, y(t) = e^{-iωt}
        let w = 3.0;
        let y0 = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let times = [0.5, 1.0, 7.25];
        let ys = dopri5(|y| y * C64::new(0.0, -w), &y0, 0.0, &times, Tolerances::default()).unwrap();
        for (t, y) in times.iter().zip(ys) {
            let exact = C64::new(0.0, -w * t).exp();
            assert!((y[(0, 0)] - exact).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn exponential_decay() {
        let y0 = DMatrix::from_element(2, 1, C64::new(2.0, 0.0));
        let ys = dopri5(|y| y * C64::new(-0.7, 0.0), &y0, 0.0, &[10.0], Tolerances::default()).unwrap();
        assert!((ys[0][(1, 0)].re - 2.0 * (-7.0f64).exp()).abs() < 1e-11);
    }
}
