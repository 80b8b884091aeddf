//! Explicit Runge–Kutta steppers for autonomous systems on `C^N`.

use crate::{Result, C64};

fn axpy<const N: usize>(y: &[C64; N], h: f64, terms: &[(f64, &[C64; N])]) -> [C64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += k[i] * (h * c);
        }
    }
    out
}

/// Classical fourth-order step.
pub fn rk4_step<const N: usize, F>(f: &mut F, y: &[C64; N], h: f64) -> Result<[C64; N]>
where
    F: FnMut(&[C64; N]) -> Result<[C64; N]> + ?Sized,
{
    let k1 = f(y)?;
    let k2 = f(&axpy(y, h, &[(0.5, &k1)]))?;
    let k3 = f(&axpy(y, h, &[(0.5, &k2)]))?;
    let k4 = f(&axpy(y, h, &[(1.0, &k3)]))?;
    Ok(axpy(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]))
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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// One Dormand–Prince 5(4) trial step: `(y5, scaled error norm)`.
pub fn dopri5_step<const N: usize, F>(f: &mut F, y: &[C64; N], k1: &[C64; N], h: f64, tol: Tolerances) -> Result<([C64; N], f64)>
where
    F: FnMut(&[C64; N]) -> Result<[C64; N]> + ?Sized,
{
    let k2 = f(&axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y5 = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(&y5)?;
    let mut err = 0.0f64;
    for i in 0..N {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let sc = tol.atol + tol.rtol * y[i].norm().max(y5[i].norm());
        err = err.max(e.norm() / sc);
    }
    Ok((y5, err))
}

/// Step-size update factor for an order-5 pair.
pub fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_order() {
        let mut f = |y: &[C64; 1]| Ok([y[0] * C64::new(0.0, 1.0)]);
        let exact = C64::new(0.0, 1.0).exp();
        let run = |n: usize, f: &mut dyn FnMut(&[C64; 1]) -> Result<[C64; 1]>| {
            let mut y = [C64::new(1.0, 0.0)];
            for _ in 0..n {
                y = rk4_step(f, &y, 1.0 / n as f64).unwrap();
            }
            (y[0] - exact).norm()
        };
        let (e1, e2) = (run(10, &mut f), run(20, &mut f));
        assert!((e1 / e2).log2() > 3.8);
    }

    #[test]
    fn dopri_error_estimate_small_for_small_steps() {
        let mut f = |y: &[C64; 2]| Ok([y[1], -y[0]]);
        let y = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let k1 = f(&y).unwrap();
        let tol = Tolerances { rtol: 1e-9, atol: 1e-12 };
        let (y5, e) = dopri5_step(&mut f, &y, &k1, 0.01, tol).unwrap();
        assert!(e < 1.0);
        assert!((y5[0].re - 0.01f64.cos()).abs() < 1e-13);
    }
}
