//! Degree-d foliations of the projective plane given by homogeneous 1-forms
//! `a1 dx1 + a2 dx2 + a3 dx3` with `x1 a1 + x2 a2 + x3 a3 = 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{newton_polish, resultant_eliminate, univariate_roots, ComplexPoint, Poly};
use crate::{rng_for, Error, Result, C64};

pub const HOM_VARS: [&str; 3] = ["x1", "x2", "x3"];
pub const CHART_VARS: [&str; 2] = ["z", "w"];

/// One of the three standard affine charts. Chart `k` sets `x_{k+1} = 1`
/// (1-based) and uses the next two coordinates cyclically as `(z, w)`.
pub type ChartId = usize;

/// Restriction `alpha dz + beta dw` of the form to an affine chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartForm {
    pub alpha: Poly,
    pub beta: Poly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationForm {
    pub a: [Poly; 3],
    pub delta: u32,
    pub degree_d: u32,
    pub charts: [ChartForm; 3],
}

/// Presets for [`preset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Preset {
    Linear(C64),
    Jouanolou(u32),
    Random(u32, u64),
}

impl std::str::FromStr for Preset {
    type Err = Error;
    /// Accepts `linear:RE,IM`, `jouanolou:D`, `random:D:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown preset `{s}` (linear:RE,IM | jouanolou:D | random:D:SEED)"));
        let mut parts = s.splitn(2, ':');
        let name = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("");
        match name {
            "linear" => {
                let v: Vec<f64> = rest.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                match v.as_slice() {
                    [re] => Ok(Preset::Linear(C64::new(*re, 0.0))),
                    [re, im] => Ok(Preset::Linear(C64::new(*re, *im))),
                    _ => Err(bad()),
                }
            }
            "jouanolou" => rest.trim().parse().map(Preset::Jouanolou).map_err(|_| bad()),
            "random" => {
                let v: Vec<&str> = rest.split(':').collect();
                if v.len() != 2 {
                    return Err(bad());
                }
                Ok(Preset::Random(v[0].trim().parse().map_err(|_| bad())?, v[1].trim().parse().map_err(|_| bad())?))
            }
            _ => Err(bad()),
        }
    }
}

fn c1() -> C64 {
    C64::new(1.0, 0.0)
}

fn cz(a: u32, b: u32, c: C64) -> (Vec<u32>, C64) {
    (vec![a, b], c)
}

/// Restrict a homogeneous polynomial to chart `k`.
pub fn restrict(p: &Poly, k: ChartId) -> Poly {
    Poly::from_terms(&CHART_VARS, p.terms().map(|(e, c)| (vec![e[(k + 1) % 3], e[(k + 2) % 3]], *c)))
}

/// Chart-`k` coordinates of a homogeneous point (`None` on the chart's line at infinity).
pub fn to_chart(x: &[C64; 3], k: ChartId) -> Option<[C64; 2]> {
    if x[k].norm() == 0.0 {
        return None;
    }
    Some([x[(k + 1) % 3] / x[k], x[(k + 2) % 3] / x[k]])
}

/// Homogeneous representative of a chart point.
pub fn from_chart(p: &[C64; 2], k: ChartId) -> [C64; 3] {
    let mut x = [c1(); 3];
    x[(k + 1) % 3] = p[0];
    x[(k + 2) % 3] = p[1];
    x
}

/// Chart change of a point and a tangent vector from chart `from` to chart `to`.
pub fn transition(p: &[C64; 2], v: &[C64; 2], from: ChartId, to: ChartId) -> Option<([C64; 2], [C64; 2])> {
    let x = from_chart(p, from);
    let mut dx = [C64::new(0.0, 0.0); 3];
    dx[(from + 1) % 3] = v[0];
    dx[(from + 2) % 3] = v[1];
    let d = x[to];
    if d.norm() == 0.0 {
        return None;
    }
    let q = [x[(to + 1) % 3] / d, x[(to + 2) % 3] / d];
    let dd = dx[to];
    let dq = [
        (dx[(to + 1) % 3] * d - x[(to + 1) % 3] * dd) / (d * d),
        (dx[(to + 2) % 3] * d - x[(to + 2) % 3] * dd) / (d * d),
    ];
    Some((q, dq))
}

/// Homogenize a chart-0 form: returns `(a1, a2, a3)` of common degree.
pub fn homogenize_chart0(alpha: &Poly, beta: &Poly) -> Result<[Poly; 3]> {
    let mut delta = alpha.degree().max(beta.degree());
    let top = |p: &Poly| p.homogeneous_part(delta);
    let z = Poly::var(&CHART_VARS, "z")?;
    let w = Poly::var(&CHART_VARS, "w")?;
    let radial = &(&z * &top(alpha)) + &(&w * &top(beta));
    if radial.max_coeff() > 1e-14 * alpha.max_coeff().max(beta.max_coeff()) {
        delta += 1;
    }
    let lift = |p: &Poly| {
        Poly::from_terms(&HOM_VARS, p.terms().map(|(e, c)| (vec![delta - e[0] - e[1], e[0], e[1]], *c)))
    };
    let a2 = lift(alpha);
    let a3 = lift(beta);
    let x2 = Poly::var(&HOM_VARS, "x2")?;
    let x3 = Poly::var(&HOM_VARS, "x3")?;
    let s = &(&x2 * &a2) + &(&x3 * &a3);
    let mut a1 = Poly::zero(&HOM_VARS);
    let scale = s.max_coeff().max(1e-300);
    for (e, c) in s.terms() {
        if e[0] == 0 {
            if c.norm() > 1e-12 * scale {
                return Err(Error::NotProjectiveForm(c.norm()));
            }
            continue;
        }
        a1 = &a1 + &Poly::monomial(&HOM_VARS, vec![e[0] - 1, e[1], e[2]], -c);
    }
    Ok([a1, a2, a3])
}

/// Fixed sample of points used by the Euler and factor checks.
fn probe_points(n: usize, seed: u64) -> Vec<[C64; 3]> {
    let mut rng = rng_for(seed, 0);
    (0..n)
        .map(|_| {
            let mut g = || C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
            [g(), g(), g()]
        })
        .collect()
}

fn hom_degree(p: &Poly) -> Option<u32> {
    let mut d = None;
    for (e, _) in p.terms() {
        let s: u32 = e.iter().sum();
        match d {
            None => d = Some(s),
            Some(t) if t != s => return None,
            _ => {}
        }
    }
    d
}

/// `|sum x_i a_i(x)| / |x|^(delta+1)`.
pub fn euler_residual_of(a: &[Poly; 3], delta: u32, x: &[C64]) -> Result<f64> {
    if x.len() != 3 {
        return Err(Error::Arity { expected: 3, got: x.len() });
    }
    let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let mut s = C64::new(0.0, 0.0);
    for i in 0..3 {
        s += x[i] * a[i].eval_unchecked(x);
    }
    Ok(s.norm() / norm.powi(delta as i32 + 1))
}

pub fn euler_residual(f: &FoliationForm, x: &ComplexPoint) -> Result<f64> {
    euler_residual_of(&f.a, f.delta, x)
}

/// True when the three coefficients share a curve: checked by restricting to
/// random projective lines and testing whether a root of one restriction is
/// a root of all three.
fn has_common_factor(a: &[Poly; 3]) -> bool {
    let nonzero: Vec<&Poly> = a.iter().filter(|p| !p.is_zero()).collect();
    if nonzero.len() <= 1 {
        return true;
    }
    let pts = probe_points(4, 0x11ee);
    let mut hits = 0;
    for t in 0..2 {
        let p = pts[2 * t];
        let q = pts[2 * t + 1];
        let line = |s: C64| [p[0] + s * q[0], p[1] + s * q[1], p[2] + s * q[2]];
        // sample each restriction on a circle and interpolate its coefficients
        let deg = nonzero[0].degree() as usize;
        let npts = deg + 1;
        let restr: Vec<Vec<C64>> = nonzero
            .iter()
            .map(|poly| {
                let vals: Vec<C64> = (0..npts)
                    .map(|j| poly.eval_unchecked(&line(C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / npts as f64))))
                    .collect();
                (0..npts)
                    .map(|d| {
                        let mut acc = C64::new(0.0, 0.0);
                        for (j, v) in vals.iter().enumerate() {
                            acc += v * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * ((d * j) % npts) as f64 / npts as f64);
                        }
                        acc / npts as f64
                    })
                    .collect()
            })
            .collect();
        let roots = univariate_roots(&restr[0]);
        let common = roots.iter().any(|&s| {
            let x = line(s);
            let xn = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            nonzero.iter().all(|poly| {
                let scale = poly.max_coeff() * xn.powi(deg as i32);
                poly.eval_unchecked(&x).norm() < 1e-7 * scale
            })
        });
        if common {
            hits += 1;
        }
    }
    hits == 2
}

/// Validate `(a1, a2, a3)` and build the form with its chart restrictions.
pub fn make_foliation(a1: Poly, a2: Poly, a3: Poly) -> Result<FoliationForm> {
    for p in [&a1, &a2, &a3] {
        if p.n_vars() != 3 {
            return Err(Error::Arity { expected: 3, got: p.n_vars() });
        }
    }
    let degs: Vec<u32> = [&a1, &a2, &a3].iter().filter(|p| !p.is_zero()).map(|p| hom_degree(p)).collect::<Option<Vec<_>>>().ok_or_else(|| Error::InvalidArgument("coefficients must be homogeneous".into()))?;
    let delta = *degs.first().ok_or_else(|| Error::Degenerate("zero form".into()))?;
    if degs.iter().any(|&d| d != delta) {
        return Err(Error::InvalidArgument("coefficients must share one degree".into()));
    }
    if delta < 2 {
        return Err(Error::InvalidArgument(format!("homogeneous degree {delta} < 2")));
    }
    let a = [a1, a2, a3];
    let worst = probe_points(200, 0xe1e7).iter().map(|x| euler_residual_of(&a, delta, x).unwrap()).fold(0.0, f64::max);
    if !(worst < 1e-10) {
        return Err(Error::NotProjectiveForm(worst));
    }
    if has_common_factor(&a) {
        return Err(Error::NonReduced);
    }
    let charts = [0, 1, 2].map(|k| ChartForm { alpha: restrict(&a[(k + 1) % 3], k), beta: restrict(&a[(k + 2) % 3], k) });
    Ok(FoliationForm { a, delta, degree_d: delta - 1, charts })
}

/// Form from a chart-0 pair `alpha dz + beta dw`.
pub fn from_chart0(alpha: &Poly, beta: &Poly) -> Result<FoliationForm> {
    let [a1, a2, a3] = homogenize_chart0(alpha, beta)?;
    make_foliation(a1, a2, a3)
}

pub fn preset(p: Preset) -> Result<FoliationForm> {
    match p {
        Preset::Linear(lambda) => {
            let alpha = Poly::from_terms(&CHART_VARS, [cz(0, 1, -lambda)]);
            let beta = Poly::from_terms(&CHART_VARS, [cz(1, 0, c1())]);
            from_chart0(&alpha, &beta)
        }
        Preset::Jouanolou(d) => {
            if d < 2 {
                return Err(Error::InvalidArgument(format!("jouanolou degree {d} < 2")));
            }
            let alpha = Poly::from_terms(&CHART_VARS, [cz(d, 1, c1()), cz(0, 0, -c1())]);
            let beta = Poly::from_terms(&CHART_VARS, [cz(0, d, c1()), cz(d + 1, 0, -c1())]);
            from_chart0(&alpha, &beta)
        }
        Preset::Random(d, seed) => random_form(d, seed),
    }
}

fn monomials(deg: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for i in (0..=deg).rev() {
        for j in (0..=deg - i).rev() {
            out.push([i, j, deg - i - j]);
        }
    }
    out
}

/// Gaussian coefficients projected orthogonally onto the Euler subspace.
fn random_form(d: u32, seed: u64) -> Result<FoliationForm> {
    if d < 1 {
        return Err(Error::InvalidArgument("random form needs degree >= 1".into()));
    }
    let delta = d + 1;
    let mons = monomials(delta);
    let targets = monomials(delta + 1);
    let n = 3 * mons.len();
    let mut rng = rng_for(seed, 0);
    let a = DVector::<C64>::from_iterator(
        n,
        (0..n).map(|_| C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) / 2f64.sqrt()),
    );
    let mut cm = DMatrix::<C64>::zeros(targets.len(), n);
    for i in 0..3 {
        for (j, m) in mons.iter().enumerate() {
            let mut e = *m;
            e[i] += 1;
            let row = targets.iter().position(|t| *t == e).expect("target monomial");
            cm[(row, i * mons.len() + j)] = c1();
        }
    }
    let cc = &cm * cm.adjoint();
    let y = cc.lu().solve(&(&cm * &a)).ok_or_else(|| Error::Degenerate("Euler map not surjective".into()))?;
    let proj = &a - cm.adjoint() * y;
    let coeffs: Vec<Poly> = (0..3)
        .map(|i| Poly::from_terms(&HOM_VARS, mons.iter().enumerate().map(|(j, m)| (m.to_vec(), proj[i * mons.len() + j]))))
        .collect();
    let [a1, a2, a3]: [Poly; 3] = coeffs.try_into().expect("three coefficients");
    make_foliation(a1, a2, a3)
}

pub fn degree_of(f: &FoliationForm) -> u32 {
    f.delta - 1
}

/// Simple or degenerate (zero Jacobian determinant) singular point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    Simple,
    Degenerate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularPoint {
    pub z: C64,
    pub w: C64,
    pub residual: f64,
    pub flag: Multiplicity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularPointSet {
    pub chart: ChartId,
    pub points: Vec<SingularPoint>,
}

/// Search-box radius for chart roots.
pub const SEARCH_RADIUS: f64 = 10.0;

pub fn singular_points(f: &FoliationForm, chart: ChartId) -> Result<SingularPointSet> {
    if chart > 2 {
        return Err(Error::InvalidArgument(format!("chart {chart} not in 0..=2")));
    }
    chart_zeros(&f.charts[chart].alpha, &f.charts[chart].beta, SEARCH_RADIUS).map(|points| SingularPointSet { chart, points })
}

/// Isolated common zeros of `(alpha, beta)` in `max(|z|,|w|) <= radius`.
pub fn chart_zeros(alpha: &Poly, beta: &Poly, radius: f64) -> Result<Vec<SingularPoint>> {
    let (zi, wi) = (0usize, 1usize);
    let elim = if alpha.degree_in(wi) + beta.degree_in(wi) > 0 { "w" } else { "z" };
    let (ev, kv) = if elim == "w" { (wi, zi) } else { (zi, wi) };
    let res = resultant_eliminate(alpha, beta, elim)?;
    let coeffs = res.univariate();
    let scale = alpha.max_coeff().powi(beta.degree_in(ev) as i32) * beta.max_coeff().powi(alpha.degree_in(ev) as i32);
    if coeffs.iter().all(|c| c.norm() <= 1e-9 * scale) {
        return Err(Error::PositiveDimensionalSingularity);
    }
    let jac_scale = alpha.max_coeff().max(beta.max_coeff());
    let mut pts: Vec<SingularPoint> = Vec::new();
    for r in univariate_roots(&coeffs) {
        if r.norm() > radius * 1.01 {
            continue;
        }
        // back-substitute into whichever equation is nonzero at this coordinate
        let mut cands = Vec::new();
        for p in [alpha, beta] {
            let uni: Vec<C64> = p
                .coefficients_in(ev)
                .iter()
                .map(|c| {
                    let mut x = [C64::new(0.0, 0.0); 2];
                    x[kv] = r;
                    c.eval_unchecked(&x)
                })
                .collect();
            if uni.iter().skip(1).any(|c| c.norm() > 1e-12 * jac_scale) {
                cands = univariate_roots(&uni);
                break;
            }
        }
        for s in cands {
            let mut g = [C64::new(0.0, 0.0); 2];
            g[kv] = r;
            g[ev] = s;
            let x = match newton_polish((alpha, beta), &g, 1e-12) {
                Ok(x) => x,
                Err(_) => continue,
            };
            let resid = alpha.eval_unchecked(&x).norm().max(beta.eval_unchecked(&x).norm());
            if resid >= 1e-8 || x[0].norm().max(x[1].norm()) > radius {
                continue;
            }
            if pts.iter().any(|p| ((p.z - x[0]).norm_sqr() + (p.w - x[1]).norm_sqr()).sqrt() < 1e-7) {
                continue;
            }
            let jz = [alpha.partial_index(0).eval_unchecked(&x), alpha.partial_index(1).eval_unchecked(&x)];
            let jw = [beta.partial_index(0).eval_unchecked(&x), beta.partial_index(1).eval_unchecked(&x)];
            let det = jz[0] * jw[1] - jz[1] * jw[0];
            let flag = if det.norm() > 1e-8 * jac_scale * jac_scale { Multiplicity::Simple } else { Multiplicity::Degenerate };
            pts.push(SingularPoint { z: x[0], w: x[1], residual: resid, flag });
        }
    }
    Ok(pts)
}

/// Dense bivariate polynomial evaluated by nested Horner.
#[derive(Debug, Clone)]
pub struct DensePoly {
    // coef[i][j] of z^i w^j
    coef: Vec<Vec<C64>>,
}

impl DensePoly {
    pub fn new(p: &Poly) -> Self {
        let dz = p.degree_in(0) as usize;
        let dw = p.degree_in(1) as usize;
        let mut coef = vec![vec![C64::new(0.0, 0.0); dw + 1]; dz + 1];
        for (e, c) in p.terms() {
            coef[e[0] as usize][e[1] as usize] = *c;
        }
        DensePoly { coef }
    }

    #[inline]
    pub fn eval(&self, z: C64, w: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for row in self.coef.iter().rev() {
            let mut r = C64::new(0.0, 0.0);
            for c in row.iter().rev() {
                r = r * w + c;
            }
            acc = acc * z + r;
        }
        acc
    }
}

/// Fast evaluator of the directing field `X = (beta, -alpha)` of one chart.
#[derive(Debug, Clone)]
pub struct ChartField {
    pub chart: ChartId,
    alpha: DensePoly,
    beta: DensePoly,
    d_alpha: [DensePoly; 2],
    d_beta: [DensePoly; 2],
}

impl ChartField {
    pub fn new(form: &ChartForm, chart: ChartId) -> Self {
        ChartField {
            chart,
            alpha: DensePoly::new(&form.alpha),
            beta: DensePoly::new(&form.beta),
            d_alpha: [DensePoly::new(&form.alpha.partial_index(0)), DensePoly::new(&form.alpha.partial_index(1))],
            d_beta: [DensePoly::new(&form.beta.partial_index(0)), DensePoly::new(&form.beta.partial_index(1))],
        }
    }

    #[inline]
    pub fn form(&self, p: &[C64; 2]) -> (C64, C64) {
        (self.alpha.eval(p[0], p[1]), self.beta.eval(p[0], p[1]))
    }

    /// Directing vector field; `alpha X_z + beta X_w = 0`.
    #[inline]
    pub fn field(&self, p: &[C64; 2]) -> [C64; 2] {
        let (a, b) = self.form(p);
        [b, -a]
    }

    /// Jacobian of the directing field.
    pub fn jacobian(&self, p: &[C64; 2]) -> [[C64; 2]; 2] {
        let (z, w) = (p[0], p[1]);
        [
            [self.d_beta[0].eval(z, w), self.d_beta[1].eval(z, w)],
            [-self.d_alpha[0].eval(z, w), -self.d_alpha[1].eval(z, w)],
        ]
    }
}

impl FoliationForm {
    pub fn chart_field(&self, k: ChartId) -> ChartField {
        ChartField::new(&self.charts[k], k)
    }

    pub fn fields(&self) -> [ChartField; 3] {
        [0, 1, 2].map(|k| self.chart_field(k))
    }
}
