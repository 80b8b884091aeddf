//! Leaf tracing across the three affine charts and flow-box plaque extraction.

use serde::{Deserialize, Serialize};

use crate::foliation::{singular_points, transition, ChartField, ChartId, FoliationForm};
use crate::ode::{dopri5_step, step_factor, Tolerances};
use crate::{Error, Result, C64};

pub type Point = [C64; 2];

fn norm2(v: &Point) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).norm_sqr() + (a[1] - b[1]).norm_sqr()).sqrt()
}

/// Hermitian product `sum a_i conj(b_i)`.
fn herm(a: &Point, b: &Point) -> C64 {
    a[0] * b[0].conj() + a[1] * b[1].conj()
}

/// Length of the Newton step towards a zero of the field; a local distance
/// estimate to the nearest singular point.
pub fn newton_distance(field: &ChartField, p: &Point) -> f64 {
    let x = field.field(p);
    let j = field.jacobian(p);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let jn = j.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if det.norm() <= 1e-14 * jn * jn.max(1.0) {
        return norm2(&x) / jn.max(1e-300);
    }
    let d = [(j[1][1] * x[0] - j[0][1] * x[1]) / det, (j[0][0] * x[1] - j[1][0] * x[0]) / det];
    norm2(&d)
}

fn unit_field(field: &ChartField, p: &Point) -> Result<Point> {
    let x = field.field(p);
    let n = norm2(&x);
    if n == 0.0 || !n.is_finite() || newton_distance(field, p) < 1e-9 {
        return Err(Error::AtSingularity);
    }
    Ok([x[0] / n, x[1] / n])
}

/// Unit directing vector `X / |X|` with `X = (beta, -alpha)`.
pub fn line_field_at(f: &FoliationForm, chart: ChartId, p: &Point) -> Result<Point> {
    unit_field(&f.chart_field(chart), p)
}

/// `|omega(v)| / (|omega| |v|)` in chart coordinates.
pub fn tangency_residual(field: &ChartField, p: &Point, v: &Point) -> f64 {
    let (a, b) = field.form(p);
    let on = (a.norm_sqr() + b.norm_sqr()).sqrt();
    (a * v[0] + b * v[1]).norm() / (on * norm2(v)).max(1e-300)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub rtol: f64,
    pub atol: f64,
    pub r_stop: f64,
    pub switch_radius: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { rtol: 1e-9, atol: 1e-12, r_stop: 1e-4, switch_radius: 1.5, h_init: 1e-2, h_min: 1e-13, h_max: 0.05, max_steps: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    NearSingularity { chart: ChartId, point: Point, distance: f64 },
    LeftAllCharts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub chart: ChartId,
    pub points: Vec<Point>,
    /// Unit tangents at `points`.
    pub dirs: Vec<Point>,
    /// Signed arc-length stamps.
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafTrace {
    pub start_chart: ChartId,
    pub start: Point,
    pub segments: Vec<TraceSegment>,
    pub termination: Termination,
}

impl LeafTrace {
    pub fn end(&self) -> (ChartId, Point, Point) {
        let seg = self.segments.last().unwrap();
        (seg.chart, *seg.points.last().unwrap(), *seg.dirs.last().unwrap())
    }

    pub fn n_points(&self) -> usize {
        self.segments.iter().map(|s| s.points.len()).sum()
    }
}

/// Chart in which the homogeneous point has largest normalizing coordinate.
pub fn best_chart(p: &Point, chart: ChartId) -> ChartId {
    let x = crate::foliation::from_chart(p, chart);
    (0..3).max_by(|a, b| x[*a].norm().total_cmp(&x[*b].norm())).unwrap()
}

/// Reusable tracing context: chart fields and singular points of one form.
#[derive(Debug, Clone)]
pub struct Tracer {
    pub fields: [ChartField; 3],
    pub singular: [Vec<Point>; 3],
    pub opts: TraceOptions,
}

impl Tracer {
    pub fn new(f: &FoliationForm, opts: TraceOptions) -> Result<Self> {
        let mut singular: [Vec<Point>; 3] = Default::default();
        for (k, s) in singular.iter_mut().enumerate() {
            *s = singular_points(f, k)?.points.iter().map(|p| [p.z, p.w]).collect();
        }
        Ok(Tracer { fields: f.fields(), singular, opts })
    }

    /// Chart-0 field at `p`, in chart-`k` coordinates, with unit Fubini–Study length.
    pub fn reference_direction(&self, k: ChartId, p: &Point) -> Result<Point> {
        if newton_distance(&self.fields[k], p) < 1e-9 {
            return Err(Error::AtSingularity);
        }
        let v = if k == 0 {
            self.fields[0].field(p)
        } else {
            // on the line at infinity of chart 0 the reference field has no direction
            let (q, _) = transition(p, &[C64::new(0.0, 0.0); 2], k, 0).ok_or(Error::AtSingularity)?;
            transition(&q, &self.fields[0].field(&q), 0, k).ok_or(Error::AtSingularity)?.1
        };
        let n = fs_norm(k, p, &v);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::AtSingularity);
        }
        Ok([v[0] / n, v[1] / n])
    }

    pub fn nearest_singularity(&self, chart: ChartId, p: &Point) -> Option<(Point, f64)> {
        self.singular[chart].iter().map(|s| (*s, dist(s, p))).min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Trace over signed Fubini–Study arc length `arc`; `start_dir` fixes the
    /// phase of the direction (default: the chart-0 field).
    ///
    /// The trace is the real flow of `phase * X_0`, where `X_0` is the chart-0
    /// field carried into whichever chart is in use, so chart switches change
    /// coordinates only and a backward trace retraces the forward one.
    pub fn trace(&self, chart: ChartId, start: Point, arc: f64, start_dir: Option<Point>) -> Result<LeafTrace> {
        let o = self.opts;
        let tol = Tolerances { rtol: o.rtol, atol: o.atol };
        let mut k = chart;
        let mut p = start;
        let d0 = unit(&self.reference_direction(k, &p)?);
        let phase = match start_dir {
            Some(d) => phase_towards(&d0, &d),
            None => C64::new(1.0, 0.0),
        };
        let sign = if arc < 0.0 { -1.0 } else { 1.0 };
        let total = arc.abs();
        let mut s = 0.0f64;
        let mut h = o.h_init.min(o.h_max);
        let mut seg = TraceSegment { chart: k, points: vec![p], dirs: vec![mul(&d0, phase)], s: vec![0.0] };
        let mut segments = Vec::new();
        let mut termination = Termination::Horizon;
        if let Some((q, d)) = self.nearest_singularity(k, &p) {
            if d < o.r_stop {
                termination = Termination::NearSingularity { chart: k, point: q, distance: d };
            }
        }
        let mut steps = 0usize;
        while termination == Termination::Horizon && s < total {
            steps += 1;
            if steps > o.max_steps {
                return Err(Error::StiffFailure(h));
            }
            let mut rhs = |y: &Point| -> Result<Point> {
                let u = self.reference_direction(k, y)?;
                Ok([u[0] * phase * sign, u[1] * phase * sign])
            };
            let hh = h.min(total - s);
            let k1 = rhs(&p)?;
            let (y, err) = match dopri5_step(&mut rhs, &p, &k1, hh, tol) {
                Ok(r) => r,
                Err(Error::AtSingularity) => (p, f64::INFINITY),
                Err(e) => return Err(e),
            };
            if err > 1.0 || !y.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                h = hh * if err.is_finite() { step_factor(err) } else { 0.25 };
                if h < o.h_min {
                    return Err(Error::StiffFailure(h));
                }
                continue;
            }
            s += hh;
            p = y;
            h = (hh * step_factor(err)).min(o.h_max);
            let dir = mul(&unit(&self.reference_direction(k, &p)?), phase);
            seg.points.push(p);
            seg.dirs.push(dir);
            seg.s.push(sign * s);
            if let Some((q, d)) = self.nearest_singularity(k, &p) {
                if d < o.r_stop {
                    termination = Termination::NearSingularity { chart: k, point: q, distance: d };
                    break;
                }
            }
            if p[0].norm().max(p[1].norm()) > o.switch_radius {
                let k2 = best_chart(&p, k);
                let Some((q, v)) = transition(&p, &dir, k, k2) else {
                    termination = Termination::LeftAllCharts;
                    break;
                };
                segments.push(std::mem::replace(
                    &mut seg,
                    TraceSegment { chart: k2, points: vec![q], dirs: vec![unit(&v)], s: vec![sign * s] },
                ));
                k = k2;
                p = q;
            }
        }
        segments.push(seg);
        Ok(LeafTrace { start_chart: chart, start, segments, termination })
    }
}

fn unit(v: &Point) -> Point {
    let n = norm2(v);
    [v[0] / n, v[1] / n]
}

/// Fubini–Study length of the tangent vector `v` at the chart-`k` point `p`.
pub fn fs_norm(k: ChartId, p: &Point, v: &Point) -> f64 {
    let x = crate::foliation::from_chart(p, k);
    let mut dx = [C64::new(0.0, 0.0); 3];
    dx[(k + 1) % 3] = v[0];
    dx[(k + 2) % 3] = v[1];
    let xx: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    let dd: f64 = dx.iter().map(|c| c.norm_sqr()).sum();
    let xd: C64 = x.iter().zip(&dx).map(|(a, b)| a.conj() * b).sum();
    ((xx * dd - xd.norm_sqr()).max(0.0)).sqrt() / xx
}

fn mul(v: &Point, c: C64) -> Point {
    [v[0] * c, v[1] * c]
}

/// Unit `c` with `c * d0` as close as possible to `d`.
fn phase_towards(d0: &Point, d: &Point) -> C64 {
    let a = herm(d, d0);
    if a.norm() == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        a / a.norm()
    }
}

pub fn trace_leaf(f: &FoliationForm, chart: ChartId, start: Point, arc: f64, opts: TraceOptions) -> Result<LeafTrace> {
    Tracer::new(f, opts)?.trace(chart, start, arc, None)
}

/// Polydisc `{center + s e_leaf + t e_trans : |s| < radius_leaf, |t| < radius_trans}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowBox {
    pub chart: ChartId,
    pub center: Point,
    pub e_leaf: Point,
    pub e_trans: Point,
    pub radius_leaf: f64,
    pub radius_trans: f64,
}

impl FlowBox {
    /// Box aligned with the foliation at `center`.
    pub fn aligned(field: &ChartField, center: Point, radius_leaf: f64, radius_trans: f64) -> Result<Self> {
        let e = unit_field(field, &center)?;
        let t = [-e[1].conj(), e[0].conj()];
        Ok(FlowBox { chart: field.chart, center, e_leaf: e, e_trans: t, radius_leaf, radius_trans })
    }

    /// Box coordinates `(s, t)` of a chart point.
    pub fn coords(&self, p: &Point) -> (C64, C64) {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let (a, b) = (self.e_leaf, self.e_trans);
        let det = a[0] * b[1] - a[1] * b[0];
        ((d[0] * b[1] - d[1] * b[0]) / det, (a[0] * d[1] - a[1] * d[0]) / det)
    }

    pub fn contains(&self, p: &Point) -> bool {
        let (s, t) = self.coords(p);
        s.norm() < self.radius_leaf && t.norm() < self.radius_trans
    }

    /// Components `(ds, dt)` of a tangent vector.
    pub fn tangent_coords(&self, v: &Point) -> (C64, C64) {
        let (a, b) = (self.e_leaf, self.e_trans);
        let det = a[0] * b[1] - a[1] * b[0];
        ((v[0] * b[1] - v[1] * b[0]) / det, (a[0] * v[1] - a[1] * v[0]) / det)
    }

    /// Transversal bin of `t` on an `n x n` grid over `[-r, r]^2`.
    pub fn bin(&self, t: C64, n: usize) -> usize {
        let q = |x: f64| (((x / self.radius_trans + 1.0) * 0.5 * n as f64).floor().max(0.0) as usize).min(n - 1);
        q(t.re) * n + q(t.im)
    }

    /// Largest `|dt/ds|` of the foliation over a sample grid of the box.
    pub fn max_slope(&self, field: &ChartField, m: usize) -> f64 {
        let mut worst = 0.0f64;
        let g: Vec<f64> = (0..m).map(|i| if m == 1 { 0.0 } else { -0.95 + 1.9 * i as f64 / (m - 1) as f64 }).collect();
        for sr in &g {
            for si in &g {
                for tr in &g {
                    for ti in &g {
                        let s = C64::new(*sr, *si) * self.radius_leaf / std::f64::consts::SQRT_2;
                        let t = C64::new(*tr, *ti) * self.radius_trans / std::f64::consts::SQRT_2;
                        let p = [
                            self.center[0] + self.e_leaf[0] * s + self.e_trans[0] * t,
                            self.center[1] + self.e_leaf[1] * s + self.e_trans[1] * t,
                        ];
                        let x = field.field(&p);
                        let (ds, dt) = self.tangent_coords(&x);
                        worst = worst.max(if ds.norm() == 0.0 { f64::INFINITY } else { dt.norm() / ds.norm() });
                    }
                }
            }
        }
        worst
    }
}

/// Admissible slope `|dt/ds|` inside a flow box.
pub const MAX_BOX_SLOPE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBoxGrid {
    pub boxes: Vec<FlowBox>,
    pub r_sing: f64,
    pub bins_per_side: usize,
}

impl FlowBoxGrid {
    /// Aligned boxes at the given chart centers, dropping those within
    /// `r_sing` of a singular point or failing the transversality check.
    pub fn build(tracer: &Tracer, chart: ChartId, centers: &[Point], radius: f64, r_sing: f64, bins_per_side: usize) -> FlowBoxGrid {
        let field = &tracer.fields[chart];
        let mut boxes = Vec::new();
        for c in centers {
            let reach = std::f64::consts::SQRT_2 * radius;
            if let Some((_, d)) = tracer.nearest_singularity(chart, c) {
                if d < reach + r_sing {
                    continue;
                }
            }
            let Ok(b) = FlowBox::aligned(field, *c, radius, radius) else { continue };
            if b.max_slope(field, 3) <= MAX_BOX_SLOPE {
                boxes.push(b);
            }
        }
        FlowBoxGrid { boxes, r_sing, bins_per_side }
    }

    /// Centers on the lattice `{-h, .., h}^4` (real and imaginary parts of `z, w`).
    pub fn lattice(tracer: &Tracer, chart: ChartId, half_width: f64, per_axis: usize, radius: f64, r_sing: f64) -> FlowBoxGrid {
        let g: Vec<f64> =
            (0..per_axis).map(|i| if per_axis == 1 { 0.0 } else { -half_width + 2.0 * half_width * i as f64 / (per_axis - 1) as f64 }).collect();
        let mut centers = Vec::new();
        for a in &g {
            for b in &g {
                for c in &g {
                    for d in &g {
                        centers.push([C64::new(*a, *b), C64::new(*c, *d)]);
                    }
                }
            }
        }
        Self::build(tracer, chart, &centers, radius, r_sing, 8)
    }

    pub fn n_bins(&self) -> usize {
        self.bins_per_side * self.bins_per_side
    }

    pub fn n_cells(&self) -> usize {
        self.boxes.len() * self.n_bins()
    }

    /// Stable fingerprint for compatibility checks.
    pub fn signature(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for b in &self.boxes {
            eat(b.chart as f64);
            for c in b.center.iter().chain(&b.e_leaf) {
                eat(c.re);
                eat(c.im);
            }
            eat(b.radius_leaf);
        }
        format!("flowbox:{}x{}:{:016x}", self.boxes.len(), self.n_bins(), h)
    }

    /// Cells `(box * n_bins + bin, s)` containing a chart point (any chart).
    pub fn cells_of(&self, chart: ChartId, p: &Point, out: &mut Vec<(usize, C64)>) {
        out.clear();
        let mut cache: [Option<Point>; 3] = [None, None, None];
        cache[chart] = Some(*p);
        for (i, b) in self.boxes.iter().enumerate() {
            let q = match cache[b.chart] {
                Some(q) => q,
                None => match transition(p, &[C64::new(0.0, 0.0); 2], chart, b.chart) {
                    Some((q, _)) => {
                        cache[b.chart] = Some(q);
                        q
                    }
                    None => continue,
                },
            };
            let (s, t) = b.coords(&q);
            if s.norm() < b.radius_leaf && t.norm() < b.radius_trans {
                out.push((i * self.n_bins() + b.bin(t, self.bins_per_side), s));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plaque {
    pub box_id: usize,
    /// Box coordinates `(s, t)` along the plaque.
    pub coords: Vec<(C64, C64)>,
    /// Transversal coordinate where the plaque meets `s = 0`.
    pub alpha: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaqueExtraction {
    pub plaques: Vec<Plaque>,
    pub bad_axis: Vec<usize>,
}

/// Maximal runs of the trace inside each box, as graphs `t(s)`.
pub fn extract_plaques(trace: &LeafTrace, grid: &FlowBoxGrid) -> PlaqueExtraction {
    let mut out = PlaqueExtraction { plaques: Vec::new(), bad_axis: Vec::new() };
    for (bid, b) in grid.boxes.iter().enumerate() {
        let mut bad = false;
        for seg in &trace.segments {
            let mut run: Vec<(C64, C64, C64)> = Vec::new();
            let flush = |run: &mut Vec<(C64, C64, C64)>, out: &mut PlaqueExtraction| {
                if run.is_empty() {
                    return;
                }
                let (s, t, slope) = *run.iter().min_by(|a, b| a.0.norm().total_cmp(&b.0.norm())).unwrap();
                out.plaques.push(Plaque { box_id: bid, coords: run.iter().map(|r| (r.0, r.1)).collect(), alpha: t - s * slope });
                run.clear();
            };
            for (i, p) in seg.points.iter().enumerate() {
                let q = if seg.chart == b.chart {
                    Some((*p, seg.dirs[i]))
                } else {
                    transition(p, &seg.dirs[i], seg.chart, b.chart)
                };
                let inside = q.map(|(q, v)| {
                    let (s, t) = b.coords(&q);
                    (s.norm() < b.radius_leaf && t.norm() < b.radius_trans, s, t, v)
                });
                match inside {
                    Some((true, s, t, v)) => {
                        let (ds, dt) = b.tangent_coords(&v);
                        if ds.norm() <= dt.norm() / MAX_BOX_SLOPE.max(1e-300) * 0.5 || ds.norm() == 0.0 {
                            bad = true;
                        }
                        let slope = if ds.norm() == 0.0 { C64::new(0.0, 0.0) } else { dt / ds };
                        run.push((s, t, slope));
                    }
                    _ => flush(&mut run, &mut out),
                }
            }
            flush(&mut run, &mut out);
        }
        if bad {
            out.bad_axis.push(bid);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::{preset, Preset};

    #[test]
    fn line_field_examples() {
        let f = preset(Preset::Linear(C64::new(0.0, 1.0))).unwrap();
        let d = line_field_at(&f, 0, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d[0] - C64::new(s, 0.0)).norm() < 1e-15 && (d[1] - C64::new(0.0, s)).norm() < 1e-15);
        let j = preset(Preset::Jouanolou(2)).unwrap();
        let d = line_field_at(&j, 0, &[C64::new(0.0, 0.0); 2]).unwrap();
        assert!(d[0].norm() < 1e-15 && (d[1].norm() - 1.0).abs() < 1e-15);
        assert_eq!(line_field_at(&f, 0, &[C64::new(0.0, 0.0); 2]), Err(Error::AtSingularity));
    }

    #[test]
    fn linear_trace_follows_real_flow() {
        let f = preset(Preset::Linear(C64::new(0.0, 1.0))).unwrap();
        let tr = trace_leaf(&f, 0, [C64::new(1.0, 0.0), C64::new(1.0, 0.0)], -1.0, TraceOptions::default()).unwrap();
        let (_, p, _) = tr.end();
        // real flow of (z, i w): z = e^t, w = e^{i t}
        let t = p[0].re.ln();
        assert!(p[0].im.abs() < 1e-9);
        assert!((p[1] - C64::new(0.0, t).exp()).norm() < 1e-8);
        assert!(t < 0.0);
    }

    #[test]
    fn starting_at_singularity_fails() {
        let f = preset(Preset::Jouanolou(2)).unwrap();
        let z = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 7.0);
        let r = trace_leaf(&f, 0, [z, z.powu(5)], 1.0, TraceOptions::default());
        assert_eq!(r.unwrap_err(), Error::AtSingularity);
    }
}
