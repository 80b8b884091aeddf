//! Empirical directed harmonic currents: leafwise diffusion on the global
//! foliation and Ahlfors averages on model leaves.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::foliation::{preset, singular_points, ChartField, ChartId, FoliationForm, Preset};
use crate::leafgeom::{psi_param, SectorChart};
use crate::ode::rk4_step;
use crate::quad::gauss_legendre;
use crate::tracer::{best_chart, newton_distance, FlowBoxGrid, Point};
use crate::{rng_for, Error, Result, Rng, C64};

/// Leafwise conformal metric driving the diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMetric {
    /// Euclidean metric of the current chart.
    Euclidean,
    /// Fubini–Study metric of the projective plane.
    FubiniStudy,
    /// `|dz| / |z|`, flat in the sector coordinate of a linear model leaf.
    ZetaFlat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkEnsemble {
    pub start_chart: ChartId,
    pub start: Point,
    pub n_paths: usize,
    pub h_walk: f64,
    pub horizon_steps: usize,
    pub seed: u64,
}

impl WalkEnsemble {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || !(self.h_walk > 0.0) || self.start_chart > 2 {
            return Err(Error::InvalidArgument("ensemble needs n_paths >= 1, h_walk > 0 and a chart in 0..=2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkOptions {
    pub metric: WalkMetric,
    /// Largest substep length in units of the local `|X| / |DX|`.
    pub substep_rate: f64,
    pub max_substeps: usize,
    pub switch_radius: f64,
    /// Largest diffusion substep length in units of the local scale.
    pub kappa: f64,
    /// Radius of the balls around singular points inside which the walk
    /// continues on the linearized model; 0 disables.
    pub r_stop: f64,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions { metric: WalkMetric::FubiniStudy, substep_rate: 0.05, max_substeps: 4096, switch_radius: 1.5, kappa: 0.25, r_stop: 0.02 }
    }
}

/// One leafwise diffusion step engine.
#[derive(Debug, Clone)]
pub struct Walker {
    pub fields: [ChartField; 3],
    pub models: [Vec<LinearModel>; 3],
    pub h: f64,
    pub opts: WalkOptions,
}

/// Linear part of the field at a singular point in eigen-coordinates:
/// `p = p0 + V e`, `de/dt = (mu0 e0, mu1 e1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub p0: Point,
    pub v: [[C64; 2]; 2],
    pub v_inv: [[C64; 2]; 2],
    pub mu: [C64; 2],
}

impl LinearModel {
    /// `None` when the linear part is not diagonalizable with nonzero eigenvalues.
    pub fn at(field: &ChartField, p0: Point) -> Option<Self> {
        let a = field.jacobian(&p0);
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = (tr * tr - det * 4.0).sqrt();
        let mu = [(tr + disc) * 0.5, (tr - disc) * 0.5];
        let scale = a.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
        if mu.iter().any(|m| m.norm() <= 1e-9 * scale) || disc.norm() <= 1e-9 * scale {
            return None;
        }
        let vec_for = |m: C64| {
            let (c1, c2) = ([a[0][1], m - a[0][0]], [m - a[1][1], a[1][0]]);
            let n1 = c1[0].norm() + c1[1].norm();
            let n2 = c2[0].norm() + c2[1].norm();
            let c = if n1 >= n2 { c1 } else { c2 };
            let n = (c[0].norm_sqr() + c[1].norm_sqr()).sqrt();
            [c[0] / n, c[1] / n]
        };
        let (e0, e1) = (vec_for(mu[0]), vec_for(mu[1]));
        let v = [[e0[0], e1[0]], [e0[1], e1[1]]];
        let d = v[0][0] * v[1][1] - v[0][1] * v[1][0];
        if d.norm() < 1e-9 {
            return None;
        }
        let v_inv = [[v[1][1] / d, -v[0][1] / d], [-v[1][0] / d, v[0][0] / d]];
        Some(LinearModel { p0, v, v_inv, mu })
    }

    fn offset(&self, e: &Point) -> Point {
        [self.v[0][0] * e[0] + self.v[0][1] * e[1], self.v[1][0] * e[0] + self.v[1][1] * e[1]]
    }

    fn to_chart(&self, e: &Point) -> Point {
        let d = self.offset(e);
        [self.p0[0] + d[0], self.p0[1] + d[1]]
    }

    fn to_model(&self, p: &Point) -> Point {
        let d = [p[0] - self.p0[0], p[1] - self.p0[1]];
        [self.v_inv[0][0] * d[0] + self.v_inv[0][1] * d[1], self.v_inv[1][0] * d[0] + self.v_inv[1][1] * d[1]]
    }
}

fn euclid(p: &Point) -> f64 {
    (p[0].norm_sqr() + p[1].norm_sqr()).sqrt()
}

/// Cap on model-coordinate steps of one excursion.
const MAX_EXCURSION_STEPS: usize = 1 << 20;

fn metric_speed(metric: WalkMetric, p: &Point, x: &Point) -> f64 {
    match metric {
        WalkMetric::Euclidean => (x[0].norm_sqr() + x[1].norm_sqr()).sqrt(),
        WalkMetric::FubiniStudy => {
            let n = 1.0 + p[0].norm_sqr() + p[1].norm_sqr();
            let v2 = x[0].norm_sqr() + x[1].norm_sqr();
            let ip = x[0] * p[0].conj() + x[1] * p[1].conj();
            ((v2 * n - ip.norm_sqr()) / (n * n)).max(0.0).sqrt()
        }
        WalkMetric::ZetaFlat => x[0].norm() / p[0].norm(),
    }
}

impl Walker {
    pub fn new(f: &FoliationForm, h: f64, opts: WalkOptions) -> Result<Self> {
        let fields = f.fields();
        let mut models: [Vec<LinearModel>; 3] = Default::default();
        if opts.r_stop > 0.0 {
            for (k, m) in models.iter_mut().enumerate() {
                *m = singular_points(f, k)?.points.iter().filter_map(|s| LinearModel::at(&fields[k], [s.z, s.w])).collect();
            }
        }
        Ok(Walker { fields, models, h, opts })
    }

    /// Walk on the linear model from `p` (inside the `r_stop` ball of `m`)
    /// until it leaves the ball, in the complex flow time `tau` with
    /// `e(tau) = (e0 exp(mu0 tau), e1 exp(mu1 tau))`. Deep inside, the walk
    /// jumps to a uniform point on the largest disc inside the wedge
    /// `|V| |e| < r_stop`; near its edge it takes Gaussian steps. Returns the
    /// leafwise time spent (disc jumps use the mean exit time at the centre).
    fn excursion(&self, m: &LinearModel, p: &mut Point, rng: &mut Rng) -> Result<f64> {
        let e0 = m.to_model(p);
        let dtau = (self.opts.kappa / m.mu[0].norm().max(m.mu[1].norm())).powi(2);
        let vn = m.v.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let c = [0, 1].map(|i| (self.opts.r_stop / (std::f64::consts::SQRT_2 * vn * e0[i].norm().max(1e-300))).ln());
        let mut tau = C64::new(0.0, 0.0);
        let mut spent = 0.0;
        for _ in 0..MAX_EXCURSION_STEPS {
            let e = [e0[0] * (m.mu[0] * tau).exp(), e0[1] * (m.mu[1] * tau).exp()];
            let off = m.offset(&e);
            if euclid(&off) >= self.opts.r_stop {
                *p = m.to_chart(&e);
                return Ok(spent);
            }
            if e.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::StiffFailure(0.0));
            }
            let q = m.to_chart(&e);
            let vel = m.offset(&[m.mu[0] * e[0], m.mu[1] * e[1]]);
            let speed = metric_speed(self.opts.metric, &q, &vel);
            let d = [0, 1].map(|i| (c[i] - (m.mu[i] * tau).re) / m.mu[i].norm()).into_iter().fold(f64::INFINITY, f64::min);
            if d > 2.0 * dtau.sqrt() {
                let th: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                spent += 0.5 * d * d * speed * speed;
                tau += C64::from_polar(d, th);
            } else {
                let xi = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                spent += dtau * speed * speed;
                tau += xi * dtau.sqrt();
            }
        }
        Err(Error::StiffFailure(0.0))
    }

    /// One diffusion step of leafwise time `h`. The time is split into
    /// substeps of at most `(kappa L)^2`, `L = |X| / |DX|` the local scale, so
    /// near a singularity the walk follows the leaf's sector geometry instead
    /// of jumping across the puncture.
    pub fn step(&self, chart: &mut ChartId, p: &mut Point, rng: &mut Rng) -> Result<()> {
        let mut rem = self.h;
        let mut pieces = 0;
        while rem > 0.0 {
            pieces += 1;
            if pieces > self.opts.max_substeps {
                return Err(Error::StiffFailure(rem));
            }
            if let Some(m) = self.models[*chart].iter().find(|m| euclid(&[p[0] - m.p0[0], p[1] - m.p0[1]]) < self.opts.r_stop) {
                rem -= self.excursion(m, p, rng)?;
                continue;
            }
            let scale = self.local_scale(*chart, p)?;
            let dt = rem.min((self.opts.kappa * scale).powi(2));
            let xi = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            self.transport(chart, p, xi * dt.sqrt())?;
            rem -= dt;
        }
        Ok(())
    }

    /// `|X| / |DX|` in the walk metric at `p`.
    pub fn local_scale(&self, chart: ChartId, p: &Point) -> Result<f64> {
        let field = &self.fields[chart];
        let x = field.field(p);
        let speed = metric_speed(self.opts.metric, p, &x);
        let jn = field.jacobian(p).iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(speed > 0.0) || newton_distance(field, p) < 1e-9 {
            return Err(Error::AtSingularity);
        }
        Ok(speed / jn.max(1e-300))
    }

    /// Move along the leaf a metric distance `|d|` in the direction `d / |d|`
    /// by integrating the unit-speed field `u X / |X|`, with chart changes
    /// past `switch_radius`.
    pub fn transport(&self, chart: &mut ChartId, p: &mut Point, d: C64) -> Result<()> {
        let len = d.norm();
        if len == 0.0 {
            return Ok(());
        }
        let metric = self.opts.metric;
        let unit = |field: &ChartField, u: C64, y: &Point| -> Result<(Point, f64)> {
            let x = field.field(y);
            let speed = metric_speed(metric, y, &x);
            if !(speed > 0.0) {
                return Err(Error::AtSingularity);
            }
            let c = u / speed;
            Ok(([x[0] * c, x[1] * c], speed))
        };
        let (mut k, mut y, mut u) = (*chart, *p, d / len);
        let mut rem = len;
        let mut taken = 0;
        while rem > 0.0 {
            taken += 1;
            if taken > self.opts.max_substeps {
                return Err(Error::StiffFailure(rem));
            }
            let field = &self.fields[k];
            let (_, speed) = unit(field, u, &y)?;
            let jn = field.jacobian(&y).iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let ds = rem.min(self.opts.substep_rate * speed / jn.max(1e-300));
            let mut rhs = |q: &Point| -> Result<Point> { Ok(unit(field, u, q)?.0) };
            y = rk4_step(&mut rhs, &y, ds)?;
            rem -= ds;
            if !y.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::StiffFailure(rem));
            }
            if y[0].norm().max(y[1].norm()) > self.opts.switch_radius {
                let k2 = best_chart(&y, k);
                let (v, _) = unit(field, u, &y)?;
                if let Some((q, dq)) = crate::foliation::transition(&y, &v, k, k2) {
                    // same real direction, expressed through the new chart's field
                    let x2 = self.fields[k2].field(&q);
                    let i = if x2[0].norm() >= x2[1].norm() { 0 } else { 1 };
                    let r = dq[i] / x2[i];
                    if r.norm() > 0.0 && r.norm().is_finite() {
                        u = r / r.norm();
                        k = k2;
                        y = q;
                    }
                }
            }
        }
        *chart = k;
        *p = y;
        Ok(())
    }
}

fn check_start(w: &Walker, chart: ChartId, p: &Point) -> Result<()> {
    let f = &w.fields[chart];
    let x = f.field(p);
    if x[0].norm() + x[1].norm() == 0.0 || newton_distance(f, p) < 1e-9 {
        return Err(Error::AtSingularity);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub points: Vec<(ChartId, Point)>,
    pub multiplicity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkOutput {
    pub paths: Vec<WalkPath>,
    pub discarded: usize,
}

/// Full paths (every `record_every`-th position, start excluded).
pub fn leafwise_walk(f: &FoliationForm, ens: &WalkEnsemble, opts: WalkOptions, record_every: usize) -> Result<WalkOutput> {
    ens.validate()?;
    let walker = Walker::new(f, ens.h_walk, opts)?;
    check_start(&walker, ens.start_chart, &ens.start)?;
    let every = record_every.max(1);
    let results: Vec<Option<WalkPath>> = (0..ens.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(ens.seed, i as u64);
            let (mut k, mut p) = (ens.start_chart, ens.start);
            let mut pts = Vec::with_capacity(ens.horizon_steps / every + 1);
            for step in 1..=ens.horizon_steps {
                walker.step(&mut k, &mut p, &mut rng).ok()?;
                if step % every == 0 {
                    pts.push((k, p));
                }
            }
            Some(WalkPath { points: pts, multiplicity: 1.0 })
        })
        .collect();
    let discarded = results.iter().filter(|r| r.is_none()).count();
    Ok(WalkOutput { paths: results.into_iter().flatten().collect(), discarded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: String,
    pub seed: u64,
    pub horizon: usize,
    pub start: String,
}

/// Normalized cell masses with mean leaf-coordinate profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCurrent {
    pub grid_signature: String,
    pub masses: Vec<f64>,
    /// Mean leaf coordinate `s` of the visits in each cell.
    pub profiles: Vec<[f64; 2]>,
    pub total_mass: f64,
    /// Mass before normalization.
    pub raw_mass: f64,
    pub provenance: Provenance,
}

impl EmpiricalCurrent {
    fn from_raw(signature: String, raw: &[f64], prof: &[[f64; 2]], provenance: Provenance) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty);
        }
        let masses: Vec<f64> = raw.iter().map(|m| m / total).collect();
        let profiles = raw.iter().zip(prof).map(|(m, s)| if *m > 0.0 { [s[0] / m, s[1] / m] } else { [0.0, 0.0] }).collect();
        let total_mass = masses.iter().sum();
        Ok(EmpiricalCurrent { grid_signature: signature, masses, profiles, total_mass, raw_mass: total, provenance })
    }

    /// Mass per box (sums over the box's bins).
    pub fn box_masses(&self, bins_per_box: usize) -> Vec<f64> {
        self.masses.chunks(bins_per_box).map(|c| c.iter().sum()).collect()
    }
}

fn start_label(chart: ChartId, p: &Point) -> String {
    format!("chart {chart}: ({:?}, {:?})", (p[0].re, p[0].im), (p[1].re, p[1].im))
}

/// Occupation measure of stored paths on the flow-box grid.
pub fn accumulate_current(out: &WalkOutput, grid: &FlowBoxGrid, seed: u64) -> Result<EmpiricalCurrent> {
    if out.paths.is_empty() {
        return Err(Error::Empty);
    }
    let n = grid.n_cells();
    let (mut raw, mut prof) = (vec![0.0; n], vec![[0.0; 2]; n]);
    let mut cells = Vec::new();
    let mut horizon = 0;
    for path in &out.paths {
        horizon = horizon.max(path.points.len());
        for (k, p) in &path.points {
            grid.cells_of(*k, p, &mut cells);
            for (c, s) in &cells {
                raw[*c] += path.multiplicity;
                prof[*c][0] += path.multiplicity * s.re;
                prof[*c][1] += path.multiplicity * s.im;
            }
        }
    }
    let start = out.paths[0].points.first().map(|(k, p)| start_label(*k, p)).unwrap_or_default();
    EmpiricalCurrent::from_raw(grid.signature(), &raw, &prof, Provenance { kind: "walk".into(), seed, horizon, start })
}

/// Mass-weighted average of currents on a common grid.
pub fn merge_currents(parts: &[EmpiricalCurrent]) -> Result<EmpiricalCurrent> {
    let first = parts.first().ok_or(Error::Empty)?;
    let n = first.masses.len();
    let (mut raw, mut prof) = (vec![0.0; n], vec![[0.0; 2]; n]);
    for c in parts {
        if c.grid_signature != first.grid_signature || c.masses.len() != n {
            return Err(Error::GridMismatch);
        }
        for i in 0..n {
            let m = c.masses[i] * c.raw_mass;
            raw[i] += m;
            prof[i][0] += m * c.profiles[i][0];
            prof[i][1] += m * c.profiles[i][1];
        }
    }
    EmpiricalCurrent::from_raw(first.grid_signature.clone(), &raw, &prof, Provenance { kind: "merge".into(), ..first.provenance.clone() })
}

/// L1 distance of normalized masses, in `[0, 2]`.
pub fn current_distance(a: &EmpiricalCurrent, b: &EmpiricalCurrent) -> Result<f64> {
    if a.grid_signature != b.grid_signature || a.masses.len() != b.masses.len() {
        return Err(Error::GridMismatch);
    }
    Ok(a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum())
}

/// Paths per accumulation chunk; fixes the summation order independently of threads.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub completed: usize,
    pub discarded: usize,
}

/// Streaming occupation currents at each horizon in `horizons` (ascending).
pub fn walk_currents(
    f: &FoliationForm,
    ens: &WalkEnsemble,
    grid: &FlowBoxGrid,
    opts: WalkOptions,
    horizons: &[usize],
) -> Result<(Vec<EmpiricalCurrent>, WalkStats)> {
    ens.validate()?;
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be nonempty and strictly increasing".into()));
    }
    let walker = Walker::new(f, ens.h_walk, opts)?;
    check_start(&walker, ens.start_chart, &ens.start)?;
    let n = grid.n_cells();
    let nh = horizons.len();
    let last = *horizons.last().unwrap();
    let n_chunks = ens.n_paths.div_ceil(CHUNK);
    let chunks: Vec<(Vec<Vec<f64>>, Vec<Vec<[f64; 2]>>, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut raw = vec![vec![0.0; n]; nh];
            let mut prof = vec![vec![[0.0; 2]; n]; nh];
            let mut discarded = 0;
            let mut visits: Vec<(usize, usize, C64)> = Vec::new();
            let mut cells = Vec::new();
            for i in ci * CHUNK..((ci + 1) * CHUNK).min(ens.n_paths) {
                let mut rng = rng_for(ens.seed, i as u64);
                let (mut k, mut p) = (ens.start_chart, ens.start);
                visits.clear();
                let mut hi = 0;
                let mut ok = true;
                for step in 1..=last {
                    if walker.step(&mut k, &mut p, &mut rng).is_err() {
                        ok = false;
                        break;
                    }
                    while step > horizons[hi] {
                        hi += 1;
                    }
                    grid.cells_of(k, &p, &mut cells);
                    visits.extend(cells.iter().map(|(c, s)| (hi, *c, *s)));
                }
                if !ok {
                    discarded += 1;
                    continue;
                }
                for (h, c, s) in &visits {
                    raw[*h][*c] += 1.0;
                    prof[*h][*c][0] += s.re;
                    prof[*h][*c][1] += s.im;
                }
            }
            (raw, prof, discarded)
        })
        .collect();
    let mut raw = vec![vec![0.0; n]; nh];
    let mut prof = vec![vec![[0.0; 2]; n]; nh];
    let mut discarded = 0;
    for (r, p, d) in chunks {
        discarded += d;
        for h in 0..nh {
            for i in 0..n {
                raw[h][i] += r[h][i];
                prof[h][i][0] += p[h][i][0];
                prof[h][i][1] += p[h][i][1];
            }
        }
    }
    for h in 1..nh {
        for i in 0..n {
            raw[h][i] += raw[h - 1][i];
            prof[h][i][0] += prof[h - 1][i][0];
            prof[h][i][1] += prof[h - 1][i][1];
        }
    }
    let sig = grid.signature();
    let label = start_label(ens.start_chart, &ens.start);
    let out = (0..nh)
        .map(|h| {
            let prov = Provenance { kind: "walk".into(), seed: ens.seed, horizon: horizons[h], start: label.clone() };
            EmpiricalCurrent::from_raw(sig.clone(), &raw[h], &prof[h], prov)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, WalkStats { completed: ens.n_paths - discarded, discarded }))
}

/// Exit points of leafwise diffusion on the linear model leaf through
/// `psi(1, zeta0)`, stopped on leaving `{zeta in sector, |zeta| < radius}`.
/// The walk runs in `(z, w)`; `zeta` is tracked through `-i log z`.
pub fn model_exit_points(chart: &SectorChart, zeta0: C64, radius: f64, n: usize, h: f64, seed: u64, max_steps: usize) -> Result<(Vec<C64>, usize)> {
    let inside = |q: C64| q.im > 0.0 && chart.b() * q.re + chart.a() * q.im > 0.0 && q.norm() < radius;
    if !inside(zeta0) {
        return Err(Error::OutsideSector);
    }
    let form = preset(Preset::Linear(chart.lambda))?;
    let walker = Walker::new(&form, h, WalkOptions { metric: WalkMetric::ZetaFlat, switch_radius: f64::INFINITY, r_stop: 0.0, ..Default::default() })?;
    let p0 = psi_param(chart, C64::new(1.0, 0.0), zeta0);
    let res: Vec<Option<C64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i as u64);
            let (mut k, mut p) = (0usize, [p0.z, p0.w]);
            let mut zeta = zeta0;
            for _ in 0..max_steps {
                let z_old = p[0];
                walker.step(&mut k, &mut p, &mut rng).ok()?;
                let next = zeta - C64::i() * (p[0] / z_old).ln();
                if !inside(next) {
                    return Some(boundary_crossing(chart, radius, zeta, next));
                }
                zeta = next;
            }
            None
        })
        .collect();
    let lost = res.iter().filter(|r| r.is_none()).count();
    Ok((res.into_iter().flatten().collect(), lost))
}

/// First crossing of the segment `a -> b` with the truncated sector boundary.
fn boundary_crossing(chart: &SectorChart, radius: f64, a: C64, b: C64) -> C64 {
    let d = b - a;
    let mut t_best = 1.0f64;
    // edge Im = 0 and edge b u + a v = 0
    for (nu, nv) in [(0.0, 1.0), (chart.b(), chart.a())] {
        let fa = nu * a.re + nv * a.im;
        let fd = nu * d.re + nv * d.im;
        if fd < 0.0 {
            let t = -fa / fd;
            if (0.0..=1.0).contains(&t) {
                t_best = t_best.min(t);
            }
        }
    }
    // circle |a + t d| = radius
    let (qa, qb, qc) = (d.norm_sqr(), 2.0 * (a.re * d.re + a.im * d.im), a.norm_sqr() - radius * radius);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc >= 0.0 && qa > 0.0 {
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if (0.0..=1.0).contains(&t) {
            t_best = t_best.min(t);
        }
    }
    let mut e = a + d * t_best;
    // land exactly on the boundary piece
    if e.im <= 1e-15 {
        e.im = 0.0;
    }
    if e.norm() > radius {
        e *= radius / e.norm();
    }
    e
}

/// Log-polar binning of the unit bidisc: `k` bins each for `-ln|z|`,
/// `arg z`, `-ln|w|`, `arg w` (depth `depth`), plus one overflow cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub depth: f64,
    pub bins: usize,
}

impl ModelGrid {
    pub fn n_cells(&self) -> usize {
        self.bins.pow(4) + 1
    }

    pub fn signature(&self) -> String {
        format!("model:{}:{}", self.depth, self.bins)
    }

    pub fn cell(&self, z: C64, w: C64) -> usize {
        let k = self.bins;
        let (lz, lw) = (-z.norm().ln(), -w.norm().ln());
        if !(lz >= 0.0 && lz < self.depth && lw >= 0.0 && lw < self.depth) {
            return k.pow(4);
        }
        let lin = |x: f64, span: f64| ((x / span * k as f64) as usize).min(k - 1);
        let ang = |c: C64| c.arg().rem_euclid(2.0 * std::f64::consts::PI);
        let idx = [lin(lz, self.depth), lin(ang(z), 2.0 * std::f64::consts::PI), lin(lw, self.depth), lin(ang(w), 2.0 * std::f64::consts::PI)];
        ((idx[0] * k + idx[1]) * k + idx[2]) * k + idx[3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhlforsResolution {
    pub n_radial: usize,
    pub n_angular: usize,
}

impl Default for AhlforsResolution {
    fn default() -> Self {
        AhlforsResolution { n_radial: 192, n_angular: 2048 }
    }
}

/// Normalized pushforward of `log(r/|t|) dA(t)` on `|t| < r` through the
/// covering `t -> Z = i (1+t)/(1-t) -> zeta = Z^{1/gamma} -> psi_alpha(zeta)`,
/// measured with the Euclidean area of the image.
pub fn ahlfors_average_model(chart: &SectorChart, alpha: C64, r: f64, grid: &ModelGrid, res: AhlforsResolution) -> Result<EmpiricalCurrent> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("radius must lie in (0, 1), got {r}")));
    }
    let (xs, ws) = gauss_legendre(res.n_radial);
    let g = chart.gamma;
    let lam2 = chart.lambda.norm_sqr();
    let n = grid.n_cells();
    let rows: Vec<Vec<(usize, f64)>> = (0..res.n_radial)
        .into_par_iter()
        .map(|i| {
            let rho = 0.5 * r * (xs[i] + 1.0);
            let wr = 0.5 * r * ws[i] * rho * (r / rho).ln() * 2.0 * std::f64::consts::PI / res.n_angular as f64;
            (0..res.n_angular)
                .map(|j| {
                    let t = C64::from_polar(rho, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / res.n_angular as f64);
                    let zz = C64::i() * (1.0 + t) / (1.0 - t);
                    let zeta = C64::from_polar(zz.norm().powf(1.0 / g), zz.arg().clamp(0.0, std::f64::consts::PI) / g);
                    let dzeta = zeta / (g * zz) * (2.0 * C64::i() / ((1.0 - t) * (1.0 - t)));
                    let p = psi_param(chart, alpha, zeta);
                    let dens = (p.z.norm_sqr() + lam2 * p.w.norm_sqr()) * dzeta.norm_sqr();
                    (grid.cell(p.z, p.w), wr * dens)
                })
                .collect()
        })
        .collect();
    let mut raw = vec![0.0; n];
    for row in rows {
        for (c, m) in row {
            raw[c] += m;
        }
    }
    let prof = vec![[0.0; 2]; n];
    let prov = Provenance { kind: format!("ahlfors r={r}"), seed: 0, horizon: 0, start: format!("alpha = {alpha}") };
    EmpiricalCurrent::from_raw(grid.signature(), &raw, &prof, prov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafgeom::sector_of;

    fn dummy(masses: Vec<f64>, sig: &str) -> EmpiricalCurrent {
        let p = vec![[0.0; 2]; masses.len()];
        EmpiricalCurrent::from_raw(sig.into(), &masses, &p, Provenance { kind: "t".into(), seed: 0, horizon: 0, start: String::new() }).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = dummy(vec![1.0, 0.0], "g");
        let b = dummy(vec![0.0, 1.0], "g");
        assert_eq!(current_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(current_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(current_distance(&a, &dummy(vec![1.0, 0.0], "h")), Err(Error::GridMismatch));
        let m = merge_currents(&[a.clone(), b.clone()]).unwrap();
        assert!(current_distance(&m, &a).unwrap() <= 2.0);
        assert!((m.masses[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_occupancy_is_an_error() {
        let p = vec![[0.0; 2]; 3];
        let prov = Provenance { kind: "t".into(), seed: 0, horizon: 0, start: String::new() };
        assert_eq!(EmpiricalCurrent::from_raw("g".into(), &[0.0; 3], &p, prov), Err(Error::Empty));
    }

    #[test]
    fn walk_stays_on_model_leaf() {
        let lam = C64::new(-1.0, 1.0);
        let f = preset(Preset::Linear(lam)).unwrap();
        let p0 = psi_param(&sector_of(lam).unwrap(), C64::new(0.5, 0.2), C64::new(3.0, 0.5));
        let ens = WalkEnsemble { start_chart: 0, start: [p0.z, p0.w], n_paths: 4, h_walk: 1e-3, horizon_steps: 400, seed: 3 };
        let out = leafwise_walk(&f, &ens, WalkOptions { metric: WalkMetric::Euclidean, switch_radius: f64::INFINITY, ..Default::default() }, 1).unwrap();
        assert_eq!(out.paths.len() + out.discarded, 4);
        // first integral w z^{-lambda} along a continuous branch of log z
        for path in &out.paths {
            let (mut lz, mut zprev) = (p0.z.ln(), p0.z);
            let c0 = p0.w * (-lam * lz).exp();
            for (k, p) in &path.points {
                assert_eq!(*k, 0);
                lz += (p[0] / zprev).ln();
                zprev = p[0];
                let c = p[1] * (-lam * lz).exp();
                assert!((c - c0).norm() < 1e-7 * c0.norm(), "{c} vs {c0}");
            }
        }
    }

    #[test]
    fn walk_from_singularity_fails() {
        let f = preset(Preset::Linear(C64::new(0.0, 1.0))).unwrap();
        let ens = WalkEnsemble { start_chart: 0, start: [C64::new(0.0, 0.0); 2], n_paths: 1, h_walk: 1e-3, horizon_steps: 10, seed: 1 };
        assert_eq!(leafwise_walk(&f, &ens, WalkOptions::default(), 1).unwrap_err(), Error::AtSingularity);
    }

    #[test]
    fn ahlfors_small_radius_concentrates() {
        let ch = sector_of(C64::new(0.0, 1.0)).unwrap();
        let grid = ModelGrid { depth: 8.0, bins: 8 };
        let t = ahlfors_average_model(&ch, C64::new(1.0, 0.0), 0.01, &grid, AhlforsResolution { n_radial: 16, n_angular: 64 }).unwrap();
        let max = t.masses.iter().cloned().fold(0.0, f64::max);
        assert!(max >= 0.99);
        assert!((t.total_mass - 1.0).abs() < 1e-12);
    }
}
