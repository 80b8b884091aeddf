//! Model leaves of `z dw - lambda w dz` near a hyperbolic point.
//!
//! The leaf with transversal parameter `alpha` is parametrized by the sector
//! coordinate `zeta = u + i v` through
//! `z = exp(i (zeta + ln|alpha| / b))`, `w = alpha exp(i lambda (zeta + ln|alpha| / b))`,
//! so that `|z| = exp(-v)` and `|w| = exp(-b u - a v)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Sector data for one normalized invariant `lambda = a + i b`, `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorChart {
    pub lambda: C64,
    pub theta_max: f64,
    pub gamma: f64,
}

impl SectorChart {
    pub fn a(&self) -> f64 {
        self.lambda.re
    }

    pub fn b(&self) -> f64 {
        self.lambda.im
    }

    /// Modulus range `[exp(-2 pi b), 1)` of the fundamental transversal annulus.
    pub fn alpha_range(&self) -> (f64, f64) {
        ((-2.0 * PI * self.b()).exp(), 1.0)
    }
}

pub fn sector_of(lambda: C64) -> Result<SectorChart> {
    if !(lambda.im > 0.0) || !lambda.re.is_finite() {
        return Err(Error::NotNormalized(lambda.im));
    }
    let theta_max = if lambda.re == 0.0 { PI / 2.0 } else { lambda.im.atan2(-lambda.re) };
    Ok(SectorChart { lambda, theta_max, gamma: PI / theta_max })
}

/// A point of a model leaf; `(alpha, zeta)` is authoritative, `(z, w)` derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafPoint {
    pub alpha: C64,
    pub zeta: C64,
    pub z: C64,
    pub w: C64,
    pub plaque_n: i64,
}

/// Plaque index of a sector coordinate (half-open `[2n pi, 2(n+1) pi)`).
pub fn plaque_index(u: f64) -> i64 {
    (u / (2.0 * PI)).floor() as i64
}

pub fn psi_param(chart: &SectorChart, alpha: C64, zeta: C64) -> LeafPoint {
    let s = zeta + alpha.norm().ln() / chart.b();
    LeafPoint { alpha, zeta, z: (I * s).exp(), w: alpha * (I * chart.lambda * s).exp(), plaque_n: plaque_index(zeta.re) }
}

/// `|z dw - lambda w dz| / (|z| |w| (1 + |lambda|))`.
pub fn tangency_residual_of(lambda: C64, z: C64, dz: C64, w: C64, dw: C64) -> f64 {
    (z * dw - lambda * w * dz).norm() / (z.norm() * w.norm() * (1.0 + lambda.norm()))
}

/// Tangency defect of `psi_param` using its exact derivative in `zeta`.
pub fn tangency_residual(chart: &SectorChart, alpha: C64, zeta: C64) -> f64 {
    let p = psi_param(chart, alpha, zeta);
    tangency_residual_of(chart.lambda, p.z, I * p.z, p.w, I * chart.lambda * p.w)
}

/// Edge tolerance in angle for the closed sector.
const EDGE_TOL: f64 = 1e-14;

/// `zeta^gamma` in polar form; sector edges land exactly on `V = 0`.
pub fn to_halfplane(chart: &SectorChart, zeta: C64) -> Result<(f64, f64)> {
    if zeta.norm() == 0.0 {
        return Err(Error::OutsideSector);
    }
    let mut th = zeta.arg();
    if th.abs() <= EDGE_TOL {
        th = 0.0;
    }
    if (th - chart.theta_max).abs() <= EDGE_TOL {
        th = chart.theta_max;
    }
    if th < 0.0 || th > chart.theta_max {
        return Err(Error::OutsideSector);
    }
    let r = zeta.norm().powf(chart.gamma);
    if th == 0.0 {
        return Ok((r, 0.0));
    }
    if th == chart.theta_max {
        return Ok((-r, 0.0));
    }
    let phi = chart.gamma * th;
    Ok((r * phi.cos(), r * phi.sin()))
}

/// Inverse of [`to_halfplane`] on the closed upper half-plane.
pub fn from_halfplane(chart: &SectorChart, u: f64, v: f64) -> C64 {
    let z = C64::new(u, v);
    C64::from_polar(z.norm().powf(1.0 / chart.gamma), z.arg().max(0.0) / chart.gamma)
}

/// Holonomy around the separatrix `z = 0` on the transversal `|z| = 1`:
/// `w -> w exp(2 pi i lambda)`.
pub fn holonomy_step(chart: &SectorChart, w: C64) -> C64 {
    if w.norm() == 0.0 {
        return w;
    }
    w * (2.0 * PI * I * chart.lambda).exp()
}

/// Rectangle `[u_lo, u_hi) x (v_lo, v_hi)` of one plaque inside the unit bidisc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaqueRect {
    pub n: i64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

/// The unit-bidisc part of a model leaf: `v > 0`, `b u + a v > 0` (any alpha).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidiscWindow {
    pub a: f64,
    pub b: f64,
}

pub fn bidisc_window(chart: &SectorChart) -> BidiscWindow {
    BidiscWindow { a: chart.a(), b: chart.b() }
}

impl BidiscWindow {
    pub fn contains(&self, zeta: C64) -> bool {
        zeta.im > 0.0 && self.b * zeta.re + self.a * zeta.im > 0.0
    }

    /// Bounding rectangle of plaque `n` within the window (`v_hi` may be infinite).
    pub fn plaque_rect(&self, n: i64) -> Option<PlaqueRect> {
        let u_lo = 2.0 * PI * n as f64;
        let u_hi = u_lo + 2.0 * PI;
        // v ranges over v > 0 and a v > -b u for some u in the strip
        let (v_lo, v_hi) = if self.a < 0.0 {
            (0.0, self.b * u_hi / -self.a)
        } else if self.a == 0.0 {
            (0.0, if u_hi > 0.0 { f64::INFINITY } else { 0.0 })
        } else {
            ((-self.b * u_hi / self.a).max(0.0), f64::INFINITY)
        };
        if v_hi <= v_lo {
            return None;
        }
        Some(PlaqueRect { n, u_lo, u_hi, v_lo, v_hi })
    }

    pub fn describe(&self) -> String {
        format!("v > 0 and {} u + {} v > 0 (|z| = exp(-v) < 1, |w| = exp(-b u - a v) < 1)", self.b, self.a)
    }
}

/// `w` on plaque `n` of the leaf `alpha` above `z`.
pub fn plaque_graph(chart: &SectorChart, alpha: C64, n: i64, z: C64) -> Result<C64> {
    if z.norm() == 0.0 || z.norm() > 1.0 + 1e-12 {
        return Err(Error::OffPlaque);
    }
    let lb = alpha.norm().ln() / chart.b();
    let v = -z.norm().ln();
    let u0 = z.arg() - lb;
    let lo = 2.0 * PI * n as f64;
    let k = ((lo - u0) / (2.0 * PI)).ceil();
    let mut u = u0 + 2.0 * PI * k;
    if u >= lo + 2.0 * PI {
        u -= 2.0 * PI;
    }
    let s = C64::new(u + lb, v);
    let w = alpha * (I * chart.lambda * s).exp();
    if w.norm() > 1.0 + 1e-12 {
        return Err(Error::OffPlaque);
    }
    Ok(w)
}

/// Leaf label and sector coordinate of a point with `z, w != 0`, with
/// `|alpha|` normalized into the fundamental annulus.
pub fn leaf_through(chart: &SectorChart, z: C64, w: C64) -> Result<(C64, C64)> {
    if z.norm() == 0.0 || w.norm() == 0.0 {
        return Err(Error::OffPlaque);
    }
    let s0 = -I * z.ln();
    let a0 = w * (-I * chart.lambda * s0).exp();
    let t = a0.norm().ln() / (2.0 * PI * chart.b());
    let k = -t.floor() - 1.0;
    let s = s0 + 2.0 * PI * k;
    let alpha = w * (-I * chart.lambda * s).exp();
    let zeta = s - alpha.norm().ln() / chart.b();
    Ok((alpha, zeta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn psi_examples() {
        let ch = sector_of(c(0.0, 1.0)).unwrap();
        let p = psi_param(&ch, c(1.0, 0.0), c(0.0, 0.0));
        assert_eq!((p.z, p.w), (c(1.0, 0.0), c(1.0, 0.0)));
        let p = psi_param(&ch, c(1.0, 0.0), c(2.0 * PI, 0.0));
        assert!((p.z - c(1.0, 0.0)).norm() < 1e-15);
        assert!((p.w.norm() - 1.8674427317079888e-3).abs() < 1e-15);
        let p = psi_param(&ch, c((-PI).exp(), 0.0), c(0.0, 0.0));
        assert!((p.z - c(-1.0, 0.0)).norm() < 1e-15 && (p.w - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn sector_examples() {
        assert_eq!(sector_of(c(0.0, 1.0)).unwrap().gamma, 2.0);
        let s = sector_of(c(-1.0, 1.0)).unwrap();
        assert!((s.theta_max - PI / 4.0).abs() < 1e-15 && (s.gamma - 4.0).abs() < 1e-12);
        let s = sector_of(c(1.0, 2.0)).unwrap();
        assert!((s.theta_max - 2.0344439357957027).abs() < 1e-14);
        assert!((s.gamma - 1.5442021273302218).abs() < 1e-12);
        assert!(matches!(sector_of(c(1.0, -1.0)), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn halfplane_examples() {
        let s2 = sector_of(c(0.0, 1.0)).unwrap();
        let (u, v) = to_halfplane(&s2, C64::from_polar(1.0, PI / 4.0)).unwrap();
        assert!(u.abs() < 1e-15 && (v - 1.0).abs() < 1e-15);
        assert_eq!(to_halfplane(&s2, c(0.0, 1.0)).unwrap(), (-1.0, 0.0));
        let s4 = sector_of(c(-1.0, 1.0)).unwrap();
        let (u, v) = to_halfplane(&s4, C64::from_polar(2.0, PI / 8.0)).unwrap();
        assert!(u.abs() < 1e-13 && (v - 16.0).abs() < 1e-13);
        assert_eq!(to_halfplane(&s2, c(1.0, -1.0)), Err(Error::OutsideSector));
    }

    #[test]
    fn holonomy_examples() {
        let ch = sector_of(c(0.3, 1.0)).unwrap();
        let w = c(0.999999, 0.0);
        let w1 = holonomy_step(&ch, w);
        assert!((w1.norm() / w.norm() - (-2.0 * PI).exp()).abs() < 1e-12 * (-2.0 * PI).exp());
        assert_eq!(holonomy_step(&ch, c(0.0, 0.0)), c(0.0, 0.0));
        let w2 = holonomy_step(&ch, w1);
        assert!((w2.norm() / (w.norm() * (-4.0 * PI).exp()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_examples() {
        let wi = bidisc_window(&sector_of(c(0.0, 1.0)).unwrap());
        assert!(wi.contains(c(1.0, 1.0)) && !wi.contains(c(1.0, -1.0)));
        let wm = bidisc_window(&sector_of(c(-1.0, 1.0)).unwrap());
        assert!(!wm.contains(c(-0.5, 1.0)));
    }

    #[test]
    fn plaque_graph_examples() {
        let ch = sector_of(c(0.0, 1.0)).unwrap();
        assert!((plaque_graph(&ch, c(1.0, 0.0), 0, c(1.0, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let w = plaque_graph(&ch, c(1.0, 0.0), 0, c((-1.0f64).exp(), 0.0)).unwrap();
        assert!((w - (-I).exp()).norm() < 1e-15);
        let w = plaque_graph(&ch, c(1.0, 0.0), 1, c(1.0, 0.0)).unwrap();
        assert!((w - c((-2.0 * PI).exp(), 0.0)).norm() < 1e-15);
        assert_eq!(plaque_graph(&ch, c(1.0, 0.0), 0, c(0.0, 0.0)), Err(Error::OffPlaque));
    }

    #[test]
    fn leaf_through_inverts_psi() {
        let ch = sector_of(c(-1.0, 1.0)).unwrap();
        let alpha = C64::from_polar(0.2, 1.1);
        let zeta = c(9.0, 2.5);
        let p = psi_param(&ch, alpha, zeta);
        let (a2, z2) = leaf_through(&ch, p.z, p.w).unwrap();
        let q = psi_param(&ch, a2, z2);
        assert!((q.z - p.z).norm() < 1e-12 && (q.w - p.w).norm() < 1e-12 * p.w.norm());
        let (lo, hi) = ch.alpha_range();
        assert!(a2.norm() >= lo && a2.norm() < hi);
    }
}
