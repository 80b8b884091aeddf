//! Poisson extension to the upper half-plane, weighted boundary norms and
//! harmonic values in sector coordinates.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::leafgeom::{to_halfplane, SectorChart};
use crate::quad::{integrate, QuadOptions};
use crate::{Error, Result, C64};

/// Behaviour of the boundary data outside the sampled range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailModel {
    /// Zero outside `[x_first, x_last]`.
    ZeroBeyond,
    /// `H(x_end) (|x_end| / |x|)^p` beyond each end, `p >= 0`.
    PowerDecay(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    Linear,
    /// Value `v_i` on `[x_i, x_{i+1})`.
    Step,
}

/// One Cauchy bump `mass * scale / (pi (scale^2 + (x - center)^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyAtom {
    pub center: f64,
    pub scale: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Sampled { xs: Vec<f64>, values: Vec<f64>, interp: Interp },
    Cauchy(Vec<CauchyAtom>),
}

/// Nonnegative boundary data on the real axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunction {
    pub profile: Profile,
    pub tail: TailModel,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub u: f64,
    pub v: f64,
}

impl HalfPlanePoint {
    pub fn new(u: f64, v: f64) -> Self {
        HalfPlanePoint { u, v }
    }

    pub fn z(&self) -> C64 {
        C64::new(self.u, self.v)
    }

    /// Hyperbolic distance in the upper half-plane.
    pub fn hyperbolic_distance(&self, o: &HalfPlanePoint) -> f64 {
        let d2 = (self.u - o.u).powi(2) + (self.v - o.v).powi(2);
        (1.0 + d2 / (2.0 * self.v * o.v)).acosh()
    }
}

/// Value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_err: f64,
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_panels: 4000 }
}

impl BoundaryFunction {
    pub fn sampled(xs: Vec<f64>, values: Vec<f64>, interp: Interp, tail: TailModel, description: &str) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::InvalidArgument("need at least two samples of equal length".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("sample abscissae must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("boundary values must be finite and nonnegative".into()));
        }
        if let TailModel::PowerDecay(p) = tail {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::DivergentBoundaryData(format!("tail exponent {p} is not a decay")));
            }
            if p > 0.0 && !(xs[0] < 0.0 && *xs.last().unwrap() > 0.0) {
                return Err(Error::InvalidArgument("power-decay tails need samples on both sides of 0".into()));
            }
        }
        Ok(BoundaryFunction { profile: Profile::Sampled { xs, values, interp }, tail, description: description.into() })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::sampled(vec![-1.0, 1.0], vec![c, c], Interp::Linear, TailModel::PowerDecay(0.0), &format!("constant {c}"))
    }

    /// Indicator of `[a, b]`; `b = +inf` gives a half-line.
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        if b.is_infinite() && b > 0.0 {
            return Self::sampled(
                vec![a - 1.0, a, a + 1.0],
                vec![0.0, 1.0, 1.0],
                Interp::Step,
                TailModel::PowerDecay(0.0),
                &format!("indicator [{a}, inf)"),
            );
        }
        Self::sampled(vec![a, b], vec![1.0, 0.0], Interp::Step, TailModel::ZeroBeyond, &format!("indicator [{a}, {b}]"))
    }

    pub fn cauchy(atoms: Vec<CauchyAtom>) -> Result<Self> {
        if atoms.iter().any(|a| !(a.scale > 0.0 && a.mass >= 0.0 && a.center.is_finite() && a.mass.is_finite())) {
            return Err(Error::InvalidArgument("Cauchy atoms need positive scale and nonnegative mass".into()));
        }
        Ok(BoundaryFunction { profile: Profile::Cauchy(atoms), tail: TailModel::PowerDecay(2.0), description: "cauchy mixture".into() })
    }

    /// Decay exponent at infinity (`None` for compact support).
    pub fn decay(&self) -> Option<f64> {
        match (&self.profile, self.tail) {
            (Profile::Cauchy(_), _) => Some(2.0),
            (_, TailModel::ZeroBeyond) => None,
            (Profile::Sampled { values, .. }, TailModel::PowerDecay(p)) => {
                if values[0] == 0.0 && *values.last().unwrap() == 0.0 {
                    None
                } else {
                    Some(p)
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.profile {
            Profile::Cauchy(atoms) => {
                atoms.iter().map(|a| a.mass * a.scale / (PI * (a.scale * a.scale + (x - a.center).powi(2)))).sum()
            }
            Profile::Sampled { xs, values, interp } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] || (x == xs[n - 1] && *interp == Interp::Step) {
                    return match self.tail {
                        TailModel::ZeroBeyond => 0.0,
                        TailModel::PowerDecay(p) => {
                            let (xe, ve) = if x < xs[0] { (xs[0], values[0]) } else { (xs[n - 1], values[n - 1]) };
                            if p == 0.0 {
                                ve
                            } else {
                                ve * (xe.abs() / x.abs()).powf(p)
                            }
                        }
                    };
                }
                let i = xs.partition_point(|t| *t <= x).saturating_sub(1).min(n - 2);
                match interp {
                    Interp::Step => values[i],
                    Interp::Linear => {
                        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                        values[i] + t * (values[i + 1] - values[i])
                    }
                }
            }
        }
    }

    fn tail_coefficients(&self) -> Option<(f64, f64, f64, f64, f64)> {
        match (&self.profile, self.tail) {
            (Profile::Sampled { xs, values, .. }, TailModel::PowerDecay(p)) => {
                Some((xs[0], values[0], *xs.last().unwrap(), *values.last().unwrap(), p))
            }
            _ => None,
        }
    }
}

fn check_point(p: HalfPlanePoint) -> Result<()> {
    if !(p.v > 0.0) || !p.u.is_finite() || !p.v.is_finite() {
        return Err(Error::OnBoundary);
    }
    Ok(())
}

/// `(1/pi) int_{s0}^{s1} g(U + V tan s) ds` with `g` the tail profile.
fn tail_poisson(p: HalfPlanePoint, s0: f64, s1: f64, xe: f64, ve: f64, dec: f64) -> Estimate {
    if ve == 0.0 || s1 <= s0 {
        return Estimate { value: 0.0, abs_err: 0.0 };
    }
    if dec == 0.0 {
        return Estimate { value: ve * (s1 - s0) / PI, abs_err: 1e-16 * ve };
    }
    let r = integrate(|s| ve * (xe.abs() / (p.u + p.v * s.tan()).abs()).powf(dec), s0, s1, &[], quad_opts());
    Estimate { value: r.value / PI, abs_err: r.abs_err / PI }
}

/// Poisson integral `(1/pi) int H(x) V / (V^2 + (x - U)^2) dx` with an error estimate.
pub fn poisson_extend_est(h: &BoundaryFunction, p: HalfPlanePoint) -> Result<Estimate> {
    check_point(p)?;
    let mut est = match &h.profile {
        Profile::Cauchy(atoms) => {
            let v: f64 = atoms
                .iter()
                .map(|a| {
                    let y = p.v + a.scale;
                    a.mass * y / (PI * (y * y + (p.u - a.center).powi(2)))
                })
                .sum();
            Estimate { value: v, abs_err: 1e-15 * (1.0 + v) }
        }
        Profile::Sampled { xs, values, interp } => {
            let th: Vec<f64> = xs.iter().map(|x| ((x - p.u) / p.v).atan()).collect();
            let (mut sum, mut mag) = (0.0, 0.0);
            for i in 0..xs.len() - 1 {
                // angle difference without cancellation between nearby arctangents
                let dth = (p.v * (xs[i + 1] - xs[i])).atan2(p.v * p.v + (xs[i] - p.u) * (xs[i + 1] - p.u));
                let term = match interp {
                    Interp::Step => values[i] * dth,
                    Interp::Linear => {
                        let m = (values[i + 1] - values[i]) / (xs[i + 1] - xs[i]);
                        let c0 = values[i] + m * (p.u - xs[i]);
                        let l = ((p.v * p.v + (xs[i + 1] - p.u).powi(2)) / (p.v * p.v + (xs[i] - p.u).powi(2))).ln();
                        c0 * dth + 0.5 * m * p.v * l
                    }
                };
                sum += term;
                mag += term.abs();
            }
            let mut e = Estimate { value: sum / PI, abs_err: 4e-16 * (mag / PI + 1.0) * xs.len() as f64 };
            if let Some((x0, v0, x1, v1, dec)) = h.tail_coefficients() {
                let l = tail_poisson(p, -FRAC_PI_2, th[0], x0, v0, dec);
                let r = tail_poisson(p, *th.last().unwrap(), FRAC_PI_2, x1, v1, dec);
                e.value += l.value + r.value;
                e.abs_err += l.abs_err + r.abs_err;
            }
            e
        }
    };
    debug_assert!(est.value > -1e-12, "negative Poisson extension {}", est.value);
    est.value = est.value.max(0.0);
    Ok(est)
}

pub fn poisson_extend(h: &BoundaryFunction, p: HalfPlanePoint) -> Result<f64> {
    poisson_extend_est(h, p).map(|e| e.value)
}

/// `(P_U, P_V)` of the Poisson extension.
pub fn poisson_gradient(h: &BoundaryFunction, p: HalfPlanePoint) -> Result<(f64, f64)> {
    check_point(p)?;
    match &h.profile {
        Profile::Cauchy(_) => {
            let g = cauchy_holomorphic_derivative(h, p.z()).unwrap();
            // P = Im F with F holomorphic, so P_U - i P_V = -i F'
            let d = -C64::i() * g;
            Ok((d.re, -d.im))
        }
        Profile::Sampled { xs, values, interp } => {
            // F(Z) = (1/pi) int H(x) / (x - Z) dx has Im F = P, so P_U = Im F', P_V = Re F'
            let z = p.z();
            let mut d = C64::new(0.0, 0.0);
            for i in 0..xs.len() - 1 {
                let (a, b) = (C64::new(xs[i], 0.0) - z, C64::new(xs[i + 1], 0.0) - z);
                let m = match interp {
                    Interp::Step => 0.0,
                    Interp::Linear => (values[i + 1] - values[i]) / (xs[i + 1] - xs[i]),
                };
                let h_at_z = values[i] + m * (z - xs[i]);
                d += h_at_z * (xs[i + 1] - xs[i]) / (a * b) + m * (b / a).ln();
            }
            let (mut gu, mut gv) = (d.im / PI, d.re / PI);
            if let Some((x0, _, x1, _, _)) = h.tail_coefficients() {
                let th0 = ((x0 - p.u) / p.v).atan();
                let th1 = ((x1 - p.u) / p.v).atan();
                for (lo, hi) in [(-FRAC_PI_2, th0), (th1, FRAC_PI_2)] {
                    let tu = integrate(|s| h.eval(p.u + p.v * s.tan()) * (2.0 * s).sin(), lo, hi, &[], quad_opts());
                    let tv = integrate(|s| h.eval(p.u + p.v * s.tan()) * (2.0 * s).cos(), lo, hi, &[], quad_opts());
                    gu += tu.value / (PI * p.v);
                    gv -= tv.value / (PI * p.v);
                }
            }
            Ok((gu, gv))
        }
    }
}

/// `F'(Z)` where the extension of a Cauchy mixture is `Im F`,
/// `F(Z) = -sum (m / pi) / (Z - c + i s)`.
pub fn cauchy_holomorphic_derivative(h: &BoundaryFunction, z: C64) -> Option<C64> {
    match &h.profile {
        Profile::Cauchy(atoms) => Some(
            atoms
                .iter()
                .map(|a| {
                    let d = z - a.center + C64::new(0.0, a.scale);
                    a.mass / PI / (d * d)
                })
                .sum(),
        ),
        _ => None,
    }
}

/// `int H(x) (|x| + 1)^{1/gamma - 1} dx`.
pub fn weighted_norm(h: &BoundaryFunction, gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must exceed 1, got {gamma}")));
    }
    let q = 1.0 / gamma - 1.0;
    let weight = |x: f64| (x.abs() + 1.0).powf(q);
    if let Some(p) = h.decay() {
        if p <= 1.0 / gamma {
            return Err(Error::DivergentBoundaryData(format!("decay exponent {p} does not exceed 1/gamma = {}", 1.0 / gamma)));
        }
    }
    let total = match &h.profile {
        Profile::Cauchy(atoms) => atoms
            .iter()
            .map(|a| {
                let b0 = ((0.0 - a.center) / a.scale).atan();
                let r = integrate(|t| weight(a.center + a.scale * t.tan()), -FRAC_PI_2, FRAC_PI_2, &[b0], quad_opts());
                a.mass * r.value / PI
            })
            .sum(),
        Profile::Sampled { xs, .. } => {
            let (x0, x1) = (xs[0], *xs.last().unwrap());
            let mut breaks = xs.clone();
            breaks.push(0.0);
            let mut s = integrate(|x| h.eval(x) * weight(x), x0, x1, &breaks, quad_opts()).value;
            if let Some((x0, v0, x1, v1, dec)) = h.tail_coefficients() {
                s += tail_norm(x0, v0, dec, q) + tail_norm(x1, v1, dec, q);
            }
            s
        }
    };
    Ok(total)
}

/// `int_{|x| > |xe|} ve (|xe|/|x|)^p (|x| + 1)^q dx` via `|x| = |xe| e^y`.
fn tail_norm(xe: f64, ve: f64, p: f64, q: f64) -> f64 {
    if ve == 0.0 {
        return 0.0;
    }
    let a = xe.abs();
    let rate = p - 1.0 - q;
    let y_max = (40.0 / rate).min(700.0);
    let r = integrate(|y| ve * a * (y * (1.0 - p)).exp() * (a * y.exp() + 1.0).powf(q), 0.0, y_max, &[], quad_opts());
    r.value
}

/// Extension evaluated at `zeta^gamma`; edges and exterior are rejected.
pub fn sector_harmonic_value(h: &BoundaryFunction, chart: &SectorChart, zeta: C64) -> Result<f64> {
    let (u, v) = to_halfplane(chart, zeta)?;
    if v == 0.0 {
        return Err(Error::OnBoundary);
    }
    poisson_extend(h, HalfPlanePoint::new(u, v))
}

/// Wirtinger derivative `dH/dzeta` of the sector harmonic function.
pub fn sector_harmonic_dzeta(h: &BoundaryFunction, chart: &SectorChart, zeta: C64) -> Result<C64> {
    let (u, v) = to_halfplane(chart, zeta)?;
    if v == 0.0 {
        return Err(Error::OnBoundary);
    }
    let (pu, pv) = poisson_gradient(h, HalfPlanePoint::new(u, v))?;
    let pz = C64::new(pu, -pv) * 0.5;
    Ok(pz * chart.gamma * zeta.powf(chart.gamma - 1.0))
}

/// `|F(p) - mean of the four neighbours| / h^2`.
pub fn harmonic_residual<F, D>(f: F, in_domain: D, p: (f64, f64), h: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    D: Fn(f64, f64) -> bool,
{
    let nb = [(p.0 + h, p.1), (p.0 - h, p.1), (p.0, p.1 + h), (p.0, p.1 - h)];
    if !in_domain(p.0, p.1) || nb.iter().any(|q| !in_domain(q.0, q.1)) {
        return Err(Error::StencilOutside);
    }
    let mean = nb.iter().map(|q| f(q.0, q.1)).sum::<f64>() / 4.0;
    Ok((f(p.0, p.1) - mean).abs() / (h * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafgeom::sector_of;

    fn hp(u: f64, v: f64) -> HalfPlanePoint {
        HalfPlanePoint::new(u, v)
    }

    #[test]
    fn constant_extends_to_itself() {
        let h = BoundaryFunction::constant(1.0).unwrap();
        for (u, v) in [(0.0, 1.0), (3.0, 1e-6), (-50.0, 40.0)] {
            assert!((poisson_extend(&h, hp(u, v)).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn half_line_indicator() {
        let h = BoundaryFunction::indicator(0.0, f64::INFINITY).unwrap();
        assert!((poisson_extend(&h, hp(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cauchy_kernel_extension() {
        let h = BoundaryFunction::cauchy(vec![CauchyAtom { center: 0.0, scale: 1.0, mass: PI }]).unwrap();
        assert!((h.eval(2.0) - 0.2).abs() < 1e-15);
        for v in [0.1, 1.0, 7.0] {
            assert!((poisson_extend(&h, hp(0.0, v)).unwrap() - 1.0 / (1.0 + v)).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let h = BoundaryFunction::indicator(-1.0, 1.0).unwrap();
        assert!((weighted_norm(&h, 2.0).unwrap() - 4.0 * (2f64.sqrt() - 1.0)).abs() < 1e-10);
        assert!((weighted_norm(&h, 1.0 + 1e-9).unwrap() - 2.0).abs() < 1e-8);
        assert_eq!(weighted_norm(&BoundaryFunction::constant(0.0).unwrap(), 2.0).unwrap(), 0.0);
        assert!(matches!(weighted_norm(&BoundaryFunction::constant(1.0).unwrap(), 2.0), Err(Error::DivergentBoundaryData(_))));
    }

    #[test]
    fn sector_values() {
        let ch = sector_of(C64::new(0.0, 1.0)).unwrap();
        let h = BoundaryFunction::cauchy(vec![CauchyAtom { center: 0.0, scale: 1.0, mass: PI }]).unwrap();
        let v = sector_harmonic_value(&h, &ch, C64::from_polar(1.0, PI / 4.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        assert_eq!(sector_harmonic_value(&h, &ch, C64::new(0.0, 1.0)), Err(Error::OnBoundary));
    }

    #[test]
    fn residual_examples() {
        let all = |_: f64, _: f64| true;
        assert!(harmonic_residual(|x, _| x, all, (0.3, 0.2), 1e-2).unwrap() < 1e-10);
        assert!((harmonic_residual(|x, _| x * x, all, (0.3, 0.2), 1e-2).unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(harmonic_residual(|x, _| x, |_, y| y > 0.0, (0.0, 0.001), 1e-2), Err(Error::StencilOutside));
    }

    #[test]
    fn cauchy_gradient_matches_sampled_path() {
        let h = BoundaryFunction::cauchy(vec![CauchyAtom { center: 0.4, scale: 0.7, mass: 2.0 }]).unwrap();
        let p = hp(0.3, 0.9);
        let (gu, gv) = poisson_gradient(&h, p).unwrap();
        let e = 1e-5;
        let fu = (poisson_extend(&h, hp(p.u + e, p.v)).unwrap() - poisson_extend(&h, hp(p.u - e, p.v)).unwrap()) / (2.0 * e);
        let fv = (poisson_extend(&h, hp(p.u, p.v + e)).unwrap() - poisson_extend(&h, hp(p.u, p.v - e)).unwrap()) / (2.0 * e);
        assert!((gu - fu).abs() < 1e-8 && (gv - fv).abs() < 1e-8, "{gu} {fu} {gv} {fv}");
    }
}
