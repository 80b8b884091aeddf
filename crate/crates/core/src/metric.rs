//! The leafwise conformal metric `rho_T |dz|^2` with `rho_T = 4 |h_z|^2 / h^2`
//! built from a positive harmonic function `h`, its curvature, the measure
//! density `|h_z|^2 / h`, the unit gradient-direction field and its flow.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::harmonic::{poisson_extend, poisson_gradient, sector_harmonic_dzeta, sector_harmonic_value, BoundaryFunction, HalfPlanePoint};
use crate::leafgeom::{to_halfplane, SectorChart};
use crate::quad::gauss_legendre;
use crate::{Error, Result, C64};

/// Critical-set tolerance on `|h_z|`.
pub const TOL_CRIT: f64 = 1e-8;

type Eval = Arc<dyn Fn(f64, f64) -> Result<f64> + Send + Sync>;
type Dz = Arc<dyn Fn(f64, f64) -> Result<C64> + Send + Sync>;
type Domain = Arc<dyn Fn(f64, f64) -> bool + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    Exact,
    /// Central differences with one Richardson extrapolation.
    CentralDifference { h_fd: f64 },
}

/// A real function on a planar domain, positive harmonic in the intended use.
#[derive(Clone)]
pub struct HarmonicLeafFunction {
    pub description: String,
    eval: Eval,
    dz: Option<Dz>,
    domain: Domain,
    pub gradient: GradientMethod,
}

impl std::fmt::Debug for HarmonicLeafFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HarmonicLeafFunction").field("description", &self.description).field("gradient", &self.gradient).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub point: (f64, f64),
    pub tau: C64,
    pub rho_t: f64,
    pub kappa: f64,
    pub is_critical: bool,
}

fn richardson<F: Fn(f64) -> C64>(d: F, h: f64) -> C64 {
    let (a, b) = (d(h), d(h / 2.0));
    (b * 4.0 - a) / 3.0
}

impl HarmonicLeafFunction {
    pub fn closed<F, D>(description: &str, f: F, domain: D) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> bool + Send + Sync + 'static,
    {
        HarmonicLeafFunction {
            description: description.into(),
            eval: Arc::new(move |x, y| Ok(f(x, y))),
            dz: None,
            domain: Arc::new(domain),
            gradient: GradientMethod::CentralDifference { h_fd: 1e-3 },
        }
    }

    pub fn with_exact_dz<G>(mut self, g: G) -> Self
    where
        G: Fn(f64, f64) -> C64 + Send + Sync + 'static,
    {
        self.dz = Some(Arc::new(move |x, y| Ok(g(x, y))));
        self.gradient = GradientMethod::Exact;
        self
    }

    pub fn with_gradient(mut self, m: GradientMethod) -> Self {
        self.gradient = m;
        self
    }

    /// `h = Re z` on the right half-plane.
    pub fn real_part() -> Self {
        Self::closed("Re z", |x, _| x, |x, _| x > 0.0).with_exact_dz(|_, _| C64::new(0.5, 0.0))
    }

    /// Poisson extension on the upper half-plane `{(U, V) : V > 0}`.
    pub fn half_plane(h: BoundaryFunction) -> Self {
        let hb = Arc::new(h);
        let (h1, h2) = (hb.clone(), hb.clone());
        HarmonicLeafFunction {
            description: format!("Poisson extension of {}", hb.description),
            eval: Arc::new(move |u, v| poisson_extend(&h1, HalfPlanePoint::new(u, v))),
            dz: Some(Arc::new(move |u, v| {
                let (pu, pv) = poisson_gradient(&h2, HalfPlanePoint::new(u, v))?;
                Ok(C64::new(pu, -pv) * 0.5)
            })),
            domain: Arc::new(|_, v| v > 0.0),
            gradient: GradientMethod::Exact,
        }
    }

    /// `h(zeta) = P[H](zeta^gamma)` on the open sector.
    pub fn sector(h: BoundaryFunction, chart: SectorChart) -> Self {
        let hb = Arc::new(h);
        let (h1, h2) = (hb.clone(), hb.clone());
        HarmonicLeafFunction {
            description: format!("sector extension of {}", hb.description),
            eval: Arc::new(move |u, v| sector_harmonic_value(&h1, &chart, C64::new(u, v))),
            dz: Some(Arc::new(move |u, v| sector_harmonic_dzeta(&h2, &chart, C64::new(u, v)))),
            domain: Arc::new(move |u, v| v > 0.0 && chart.b() * u + chart.a() * v > 0.0),
            gradient: GradientMethod::Exact,
        }
    }

    pub fn in_domain(&self, p: (f64, f64)) -> bool {
        (self.domain)(p.0, p.1)
    }

    pub fn value(&self, p: (f64, f64)) -> Result<f64> {
        if !self.in_domain(p) {
            return Err(Error::OutsideSector);
        }
        (self.eval)(p.0, p.1)
    }

    fn fd_step(&self) -> f64 {
        match self.gradient {
            GradientMethod::Exact => 1e-3,
            GradientMethod::CentralDifference { h_fd } => h_fd,
        }
    }

    /// `dh/dz = (h_x - i h_y) / 2`.
    pub fn dz(&self, p: (f64, f64)) -> Result<C64> {
        if let (GradientMethod::Exact, Some(g)) = (self.gradient, &self.dz) {
            return g(p.0, p.1);
        }
        let h = self.fd_step();
        let (x, y) = p;
        for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            if !self.in_domain((x + dx, y + dy)) {
                return Err(Error::StencilOutside);
            }
        }
        let f = |a: f64, b: f64| (self.eval)(a, b).unwrap_or(f64::NAN);
        let d = |s: f64| {
            let hx = (f(x + s, y) - f(x - s, y)) / (2.0 * s);
            let hy = (f(x, y + s) - f(x, y - s)) / (2.0 * s);
            C64::new(hx, -hy) * 0.5
        };
        let r = richardson(d, h);
        if !(r.re.is_finite() && r.im.is_finite()) {
            return Err(Error::StencilOutside);
        }
        Ok(r)
    }
}

fn positive(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<f64> {
    let v = h.value(p)?;
    if !(v > 0.0) {
        return Err(Error::InvalidArgument(format!("h = {v} is not positive at {p:?}")));
    }
    Ok(v)
}

/// `tau = h_z / h`.
pub fn tau_at(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<C64> {
    let v = positive(h, p)?;
    Ok(h.dz(p)? / v)
}

pub fn rho_t(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<f64> {
    Ok(4.0 * tau_at(h, p)?.norm_sqr())
}

/// Curvature `(h^2 / |h_z|^2) d/dzbar (h_z / h)`: `(real part, imaginary part)`.
pub fn curvature_parts(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<(f64, f64)> {
    let v = positive(h, p)?;
    let hz = h.dz(p)?;
    if hz.norm() < TOL_CRIT {
        return Err(Error::MetricDegenerate);
    }
    let s = h.fd_step();
    let (x, y) = p;
    for (dx, dy) in [(s, 0.0), (-s, 0.0), (0.0, s), (0.0, -s)] {
        if !h.in_domain((x + dx, y + dy)) {
            return Err(Error::StencilOutside);
        }
    }
    let g = |a: f64, b: f64| -> C64 { tau_at(h, (a, b)).unwrap_or(C64::new(f64::NAN, f64::NAN)) };
    // d/dzbar = (d/dx + i d/dy) / 2
    let d = |e: f64| {
        let gx = (g(x + e, y) - g(x - e, y)) / (2.0 * e);
        let gy = (g(x, y + e) - g(x, y - e)) / (2.0 * e);
        (gx + C64::i() * gy) * 0.5
    };
    let k = richardson(d, s) * (v * v / hz.norm_sqr());
    if !(k.re.is_finite() && k.im.is_finite()) {
        return Err(Error::StencilOutside);
    }
    Ok((k.re, k.im))
}

/// Real curvature; the imaginary part must vanish to `1e-6`.
pub fn curvature_at(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<f64> {
    let (re, im) = curvature_parts(h, p)?;
    if im.abs() >= 1e-6 {
        return Err(Error::InvalidArgument(format!("curvature has imaginary part {im:.3e}")));
    }
    Ok(re)
}

pub fn metric_sample(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<MetricSample> {
    let tau = tau_at(h, p)?;
    let hz = h.dz(p)?;
    let is_critical = hz.norm() < TOL_CRIT;
    let kappa = if is_critical { f64::NAN } else { curvature_parts(h, p)?.0 };
    Ok(MetricSample { point: p, tau, rho_t: 4.0 * tau.norm_sqr(), kappa, is_critical })
}

/// `|h_z|^2 / h`.
pub fn mu_density(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<f64> {
    let v = positive(h, p)?;
    Ok(h.dz(p)?.norm_sqr() / v)
}

/// `chi = c (h / |h_z|^2) (h_x, h_y)` with `c` fixed by `rho_T |chi|^2 = 1`.
pub fn chi_at(h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<([f64; 2], f64)> {
    let v = positive(h, p)?;
    let hz = h.dz(p)?;
    if hz.norm() < TOL_CRIT {
        return Err(Error::MetricDegenerate);
    }
    let grad = [2.0 * hz.re, -2.0 * hz.im];
    let base = [v / hz.norm_sqr() * grad[0], v / hz.norm_sqr() * grad[1]];
    let rho = 4.0 * hz.norm_sqr() / (v * v);
    let c = 1.0 / (rho * (base[0] * base[0] + base[1] * base[1])).sqrt();
    Ok(([c * base[0], c * base[1]], c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub point: (f64, f64),
    /// Change of the harmonic conjugate across the step.
    pub conjugate_change: f64,
}

/// Conjugate increment `int -h_y dx + h_x dy` along the chord `a -> b`.
pub fn conjugate_increment(h: &HarmonicLeafFunction, a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    let (xs, ws) = gauss_legendre(8);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut s = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let t = 0.5 * (x + 1.0);
        let hz = h.dz((a.0 + t * dx, a.1 + t * dy))?;
        let (hx, hy) = (2.0 * hz.re, -2.0 * hz.im);
        s += 0.5 * w * (-hy * dx + hx * dy);
    }
    Ok(s)
}

/// One RK4 step of `chi`.
pub fn flow_step(h: &HarmonicLeafFunction, p: (f64, f64), dt: f64) -> Result<FlowStep> {
    let f = |q: (f64, f64)| -> Result<[f64; 2]> {
        chi_at(h, q).map(|r| r.0).map_err(|e| if e == Error::MetricDegenerate { Error::HitCriticalSet } else { e })
    };
    let k1 = f(p)?;
    let k2 = f((p.0 + 0.5 * dt * k1[0], p.1 + 0.5 * dt * k1[1]))?;
    let k3 = f((p.0 + 0.5 * dt * k2[0], p.1 + 0.5 * dt * k2[1]))?;
    let k4 = f((p.0 + dt * k3[0], p.1 + dt * k3[1]))?;
    let q = (
        p.0 + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        p.1 + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    );
    if !h.in_domain(q) {
        return Err(Error::OutsideSector);
    }
    Ok(FlowStep { point: q, conjugate_change: conjugate_increment(h, p, q)? })
}

/// Conformal map of a planar domain onto the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HalfPlaneMap {
    Sector(SectorChart),
    /// `Z = i zeta` on `{Re zeta > 0}`.
    RightHalfPlane,
    Identity,
}

impl HalfPlaneMap {
    /// `(Z, dZ/dzeta)`.
    pub fn apply(&self, zeta: C64) -> Result<(C64, C64)> {
        match self {
            HalfPlaneMap::Sector(ch) => {
                let (u, v) = to_halfplane(ch, zeta)?;
                Ok((C64::new(u, v), zeta.powf(ch.gamma - 1.0) * ch.gamma))
            }
            HalfPlaneMap::RightHalfPlane => Ok((C64::i() * zeta, C64::i())),
            HalfPlaneMap::Identity => Ok((zeta, C64::new(1.0, 0.0))),
        }
    }
}

/// Density of the pulled-back curvature `-1` metric `|dZ|^2 / V^2`.
pub fn rho_p(map: &HalfPlaneMap, zeta: C64) -> Result<f64> {
    let (z, dz) = map.apply(zeta)?;
    if !(z.im > 0.0) {
        return Err(Error::OnBoundary);
    }
    Ok(dz.norm_sqr() / (z.im * z.im))
}

/// `rho_P - rho_T` at `p`.
pub fn ahlfors_schwarz_gap(map: &HalfPlaneMap, h: &HarmonicLeafFunction, p: (f64, f64)) -> Result<f64> {
    Ok(rho_p(map, C64::new(p.0, p.1))? - rho_t(h, p)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassResolution {
    pub n_radial: usize,
    pub n_angular: usize,
    pub n_alpha_modulus: usize,
    pub n_alpha_arg: usize,
}

impl Default for MassResolution {
    fn default() -> Self {
        MassResolution { n_radial: 64, n_angular: 48, n_alpha_modulus: 2, n_alpha_arg: 4 }
    }
}

impl MassResolution {
    pub fn doubled(&self) -> Self {
        MassResolution { n_radial: 2 * self.n_radial, n_angular: 2 * self.n_angular, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub mass: f64,
    /// Difference against the doubled mesh.
    pub abs_err: f64,
}

/// `int dmu(alpha) int |h_zeta|^2 / h  (i dzeta ^ dzeta-bar)` over the part of
/// the model leaves inside the polydisc `|z|, |w| < r`, with `mu` uniform on
/// `(ln|alpha|, arg alpha)` over the fundamental annulus.
pub fn mu_mass_once<F>(chart: &SectorChart, family: &F, r: f64, res: MassResolution) -> Result<f64>
where
    F: Fn(C64) -> BoundaryFunction,
{
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("polydisc radius must lie in (0, 1], got {r}")));
    }
    let l = -r.ln();
    // {v > L, b u + a v > L} is the sector translated to its corner
    let corner = C64::new(l * (1.0 - chart.a()) / chart.b(), l);
    let (tx, tw) = gauss_legendre(res.n_radial);
    let (ax, aw) = gauss_legendre(res.n_angular);
    let (mx, mw) = gauss_legendre(res.n_alpha_modulus);
    let lo = -2.0 * PI * chart.b();
    let mut total = 0.0;
    for (xm, wm) in mx.iter().zip(&mw) {
        let lnmod = lo * 0.5 * (1.0 - xm);
        for j in 0..res.n_alpha_arg {
            let alpha = C64::from_polar(lnmod.exp(), 2.0 * PI * (j as f64 + 0.5) / res.n_alpha_arg as f64);
            let walpha = 0.5 * wm / res.n_alpha_arg as f64;
            let bf = family(alpha);
            let mut inner = 0.0;
            for (xt, wt) in tx.iter().zip(&tw) {
                let t = 0.5 * (xt + 1.0);
                let rho = t / (1.0 - t);
                let jac = 0.5 / ((1.0 - t) * (1.0 - t));
                for (xa, wa) in ax.iter().zip(&aw) {
                    let th = 0.5 * chart.theta_max * (xa + 1.0);
                    let zeta = corner + C64::from_polar(rho, th);
                    let h = sector_harmonic_value(&bf, chart, zeta)?;
                    let hz = sector_harmonic_dzeta(&bf, chart, zeta)?;
                    if h > 0.0 {
                        inner += wt * jac * 0.5 * chart.theta_max * wa * rho * hz.norm_sqr() / h;
                    }
                }
            }
            total += walpha * 2.0 * inner;
        }
    }
    Ok(total)
}

/// [`mu_mass_once`] with a mesh-halving error estimate.
pub fn mu_mass<F>(chart: &SectorChart, family: &F, r: f64, res: MassResolution) -> Result<MassEstimate>
where
    F: Fn(C64) -> BoundaryFunction,
{
    let a = mu_mass_once(chart, family, r, res)?;
    let b = mu_mass_once(chart, family, r, res.doubled())?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::DivergentBoundaryData("mass quadrature diverged".into()));
    }
    Ok(MassEstimate { mass: b, abs_err: (a - b).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::CauchyAtom;
    use crate::leafgeom::sector_of;

    #[test]
    fn real_part_examples() {
        let h = HarmonicLeafFunction::real_part();
        assert!((tau_at(&h, (2.0, 0.3)).unwrap() - C64::new(0.25, 0.0)).norm() < 1e-15);
        assert!((curvature_at(&h.clone().with_gradient(GradientMethod::CentralDifference { h_fd: 1e-3 }), (2.0, 0.3)).unwrap() + 1.0).abs() < 1e-8);
        assert!((mu_density(&h, (2.0, 0.0)).unwrap() - 0.125).abs() < 1e-15);
        let (chi, c) = chi_at(&h, (2.0, 0.0)).unwrap();
        assert!((c - 0.25).abs() < 1e-15 && chi[1] == 0.0 && chi[0] > 0.0);
    }

    #[test]
    fn constant_is_critical() {
        let h = HarmonicLeafFunction::closed("1", |_, _| 1.0, |_, _| true).with_exact_dz(|_, _| C64::new(0.0, 0.0));
        assert_eq!(tau_at(&h, (0.0, 0.0)).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(chi_at(&h, (0.0, 0.0)).unwrap_err(), Error::MetricDegenerate);
        assert_eq!(mu_density(&h, (0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn square_is_rejected() {
        let h = HarmonicLeafFunction::closed("x^2", |x, _| x * x, |x, _| x > 0.0);
        let k = curvature_at(&h, (1.0, 0.0)).unwrap();
        assert!((k + 1.0).abs() > 0.1);
    }

    #[test]
    fn flow_moves_along_gradient() {
        let h = HarmonicLeafFunction::real_part();
        let s = flow_step(&h, (1.0, 0.5), 0.1).unwrap();
        assert!(s.point.0 > 1.0 && (s.point.1 - 0.5).abs() < 1e-15 && s.conjugate_change.abs() < 1e-15);
    }

    #[test]
    fn schwarz_equality_case() {
        let h = HarmonicLeafFunction::real_part();
        let g = ahlfors_schwarz_gap(&HalfPlaneMap::RightHalfPlane, &h, (0.7, -2.0)).unwrap();
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn mass_decreases_with_radius() {
        let ch = sector_of(C64::new(-1.0, 1.0)).unwrap();
        let fam = |_a: C64| BoundaryFunction::cauchy(vec![CauchyAtom { center: 0.0, scale: 1.0, mass: 1.0 }]).unwrap();
        let res = MassResolution { n_radial: 24, n_angular: 16, n_alpha_modulus: 1, n_alpha_arg: 1 };
        let m1 = mu_mass_once(&ch, &fam, 0.2, res).unwrap();
        let m2 = mu_mass_once(&ch, &fam, 0.1, res).unwrap();
        assert!(m1 > m2 && m2 > 0.0);
    }
}
