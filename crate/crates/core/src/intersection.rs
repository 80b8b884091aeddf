//! Plaques of the linear model against plaques of its translate
//! `Phi_eps(z, w) = (z + eps a1, w + eps b1)`: region bookkeeping near the
//! singular point, certified intersection finding, the counting and
//! closeness lemmas, and the weighted wedge sum.
//!
//! A point of `L_{alpha,n}` is parametrized by its sector coordinate
//! `zeta = u + i v`. It lies on `L^eps_{beta,m}` iff
//! `G_j(zeta) = w - eps b1 - beta exp(lambda (log z' + 2 pi i j)) = 0`
//! with `z' = z - eps a1` for the branch `j` that puts `u'` into the strip of
//! plaque `m`. Roots of `G_j` are isolated on rectangles by the argument
//! principle and polished by Newton's method.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harmonic::{sector_harmonic_value, BoundaryFunction, CauchyAtom};
use crate::leafgeom::{leaf_through, plaque_index, psi_param, SectorChart};
use crate::{rng_for, Error, Result, C64};

pub use crate::leafgeom::plaque_graph;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const TAU: f64 = 2.0 * PI;

/// Translation family `Phi_eps(z, w) = (z + eps a1, w + eps b1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub a1: C64,
    pub b1: C64,
}

impl PerturbationFamily {
    pub fn new(a1: C64, b1: C64) -> Result<Self> {
        if a1.norm() == 0.0 || b1.norm() == 0.0 {
            return Err(Error::InvalidArgument("a1 and b1 must be nonzero".into()));
        }
        Ok(Self { a1, b1 })
    }

    /// Rejects `lambda = b1 / a1`, where the perturbed leaves near the
    /// origin are tangent to the separatrix direction of the model.
    pub fn check_against(&self, lambda: C64) -> Result<()> {
        let q = self.b1 / self.a1;
        if (q - lambda).norm() <= 1e-12 * lambda.norm().max(1.0) {
            return Err(Error::InvalidArgument(format!("lambda equals b1/a1 = {q}")));
        }
        Ok(())
    }

    pub fn apply(&self, p: (C64, C64), eps: f64) -> (C64, C64) {
        (p.0 + self.a1 * eps, p.1 + self.b1 * eps)
    }

    pub fn pull_back(&self, p: (C64, C64), eps: f64) -> (C64, C64) {
        (p.0 - self.a1 * eps, p.1 - self.b1 * eps)
    }
}

/// Constants of the region decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConstants {
    pub c: f64,
    pub big_c: f64,
    pub delta: f64,
    pub c1: f64,
    pub r: f64,
    pub s: f64,
    pub d: f64,
}

impl RegionConstants {
    pub fn defaults(chart: &SectorChart, fam: &PerturbationFamily) -> Self {
        let (a, b) = (chart.a(), chart.b());
        let s = if a == 0.0 { 0.5 } else { (a.abs() / (8.0 * PI * b)).min(0.5) };
        Self {
            c: 0.1,
            big_c: 3.0 * fam.a1.norm().max(fam.b1.norm()),
            delta: 0.3,
            c1: 4.0,
            r: 0.05,
            s,
            d: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.c < self.big_c
            && self.delta > 0.0
            && self.delta < 1.0
            && self.c1 >= 1.0
            && self.r > 0.0
            && self.r < self.c
            && self.s > 0.0
            && self.s < 1.0
            && self.d > 0.0
            && self.d < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("inconsistent region constants {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Major {
    D1,
    D2,
    D3,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sub {
    A,
    B,
    R1A,
    R1B,
    R1C,
    R2A,
    R2B,
    R3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionLabel {
    pub major: Major,
    pub sub: Option<Sub>,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.major {
            Major::D1 => "D1",
            Major::D2 => "D2",
            Major::D3 => "D3",
            Major::Outside => "outside",
        };
        match self.sub {
            None => write!(f, "{m}"),
            Some(s) => write!(f, "{m}/{s:?}"),
        }
    }
}

/// Label of a point for the translation family at scale `eps`. Every point
/// receives exactly one label.
pub fn classify_region(p: (C64, C64), eps: f64, k: &RegionConstants, fam: &PerturbationFamily) -> RegionLabel {
    let (az, aw) = (p.0.norm(), p.1.norm());
    let (small, mid) = (k.c * eps, k.big_c * eps);
    let label = |major, sub| RegionLabel { major, sub };
    if az.max(aw) > k.delta {
        return label(Major::Outside, None);
    }
    if az <= small && aw <= small {
        return label(Major::D1, None);
    }
    if az <= mid && aw <= mid {
        let sub = if az > small && aw < k.r * eps { Sub::A } else { Sub::B };
        return label(Major::D2, Some(sub));
    }
    let sub = if az > mid && aw > mid {
        if k.c1 * aw <= az {
            Sub::R1A
        } else if k.c1 * az <= aw {
            Sub::R1B
        } else {
            Sub::R1C
        }
    } else if az > mid {
        if aw < k.s * eps || (p.1 - fam.b1 * eps).norm() < k.s * eps {
            Sub::R2A
        } else {
            Sub::R2B
        }
    } else {
        Sub::R3
    };
    label(Major::D3, Some(sub))
}

/// Region selector used to restrict searches and batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionSel {
    D1,
    D2,
    A,
    B,
    D3,
    R1,
    R1A,
    R1B,
    R1C,
    R2,
    R2A,
    R2B,
    R3,
}

impl RegionSel {
    pub const ALL: [RegionSel; 13] = [
        RegionSel::D1,
        RegionSel::D2,
        RegionSel::A,
        RegionSel::B,
        RegionSel::D3,
        RegionSel::R1,
        RegionSel::R1A,
        RegionSel::R1B,
        RegionSel::R1C,
        RegionSel::R2,
        RegionSel::R2A,
        RegionSel::R2B,
        RegionSel::R3,
    ];

    pub fn matches(&self, l: &RegionLabel) -> bool {
        use RegionSel as R;
        match self {
            R::D1 => l.major == Major::D1,
            R::D2 => l.major == Major::D2,
            R::D3 => l.major == Major::D3,
            R::A => l.sub == Some(Sub::A),
            R::B => l.sub == Some(Sub::B),
            R::R1 => matches!(l.sub, Some(Sub::R1A | Sub::R1B | Sub::R1C)),
            R::R1A => l.sub == Some(Sub::R1A),
            R::R1B => l.sub == Some(Sub::R1B),
            R::R1C => l.sub == Some(Sub::R1C),
            R::R2 => matches!(l.sub, Some(Sub::R2A | Sub::R2B)),
            R::R2A => l.sub == Some(Sub::R2A),
            R::R2B => l.sub == Some(Sub::R2B),
            R::R3 => l.sub == Some(Sub::R3),
        }
    }

    /// Necessary bounds `(v_lo, v_hi, t_lo, t_hi)` on `v = -ln|z|` and
    /// `t = -ln|w| = b u + a v` for points of the region.
    fn clip(&self, eps: f64, k: &RegionConstants) -> [f64; 4] {
        use RegionSel as R;
        let ld = (1.0 / k.delta).ln();
        let lbig = (1.0 / (k.big_c * eps)).ln();
        let lsmall = (1.0 / (k.c * eps)).ln();
        let lr = (1.0 / (k.r * eps)).ln();
        let inf = f64::INFINITY;
        match self {
            R::D1 => [lsmall, inf, lsmall, inf],
            R::D2 | R::B => [lbig, inf, lbig, inf],
            R::A => [lbig, lsmall, lr, inf],
            R::D3 => [ld, inf, ld, inf],
            R::R1 | R::R1A | R::R1B | R::R1C => [ld, lbig, ld, lbig],
            R::R2 | R::R2A | R::R2B => [ld, lbig, lbig, inf],
            R::R3 => [lbig, inf, ld, lbig],
        }
    }
}

impl std::str::FromStr for RegionSel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RegionSel::ALL
            .iter()
            .copied()
            .find(|r| format!("{r:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown region `{s}`")))
    }
}

/// Slope `dw/dz` of the perturbed leaf through `p`.
pub fn perturbed_slope(fam: &PerturbationFamily, lambda: C64, p: (C64, C64), eps: f64) -> Result<C64> {
    let den = p.0 - fam.a1 * eps;
    let num = p.1 - fam.b1 * eps;
    if den.norm() <= 1e-14 * (eps * fam.a1.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::PerturbedSingularity);
    }
    Ok(lambda * num / den)
}

/// Where to look for intersection points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow {
    /// Keep points with `|z|, |w| < radius`.
    pub polydisc: Option<f64>,
    pub region: Option<RegionSel>,
    /// Keep points with `|z - center| < radius`.
    pub z_disc: Option<(C64, f64)>,
}

impl SearchWindow {
    pub fn everywhere() -> Self {
        Self { polydisc: None, region: None, z_disc: None }
    }
    pub fn polydisc(delta: f64) -> Self {
        Self { polydisc: Some(delta), ..Self::everywhere() }
    }
    pub fn region(r: RegionSel) -> Self {
        Self { region: Some(r), ..Self::everywhere() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Boxes larger than this are split before any winding count.
    pub max_box: f64,
    /// Boxes are not split below this size.
    pub min_box: f64,
    /// Depth limit of the adaptive edge sampler.
    pub max_edge_depth: u32,
    /// Extra room in `v` past the perturbed singular point when the plaque
    /// strip is unbounded.
    pub v_cap_extra: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { max_box: 1.0, min_box: 1e-6, max_edge_depth: 34, v_cap_extra: 30.0 }
    }
}

/// Axis-parallel rectangle in the sector coordinate of the `alpha` plaque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Rect {
    fn diam(&self) -> f64 {
        (self.u1 - self.u0).hypot(self.v1 - self.v0)
    }
    fn center(&self) -> C64 {
        C64::new(0.5 * (self.u0 + self.u1), 0.5 * (self.v0 + self.v1))
    }
    pub fn contains(&self, z: C64, slack: f64) -> bool {
        z.re >= self.u0 - slack && z.re <= self.u1 + slack && z.im >= self.v0 - slack && z.im <= self.v1 + slack
    }
    fn split(&self) -> [Rect; 2] {
        // off-centre cut keeps roots of symmetric data away from new edges
        let f = 0.5 + 0.0123;
        if self.u1 - self.u0 >= self.v1 - self.v0 {
            let m = self.u0 + f * (self.u1 - self.u0);
            [Rect { u1: m, ..*self }, Rect { u0: m, ..*self }]
        } else {
            let m = self.v0 + f * (self.v1 - self.v0);
            [Rect { v1: m, ..*self }, Rect { v0: m, ..*self }]
        }
    }
    fn quarter(&self) -> [Rect; 4] {
        let [a, b] = self.split();
        let [a1, a2] = a.split();
        let [b1, b2] = b.split();
        [a1, a2, b1, b2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    pub z: C64,
    pub w: C64,
    /// Sector coordinate on `L_{alpha,n}`.
    pub zeta: C64,
    /// Sector coordinate of `Phi_eps^{-1}(z, w)` on `L_{beta,m}`.
    pub zeta_prime: C64,
    /// Relative residual of the `alpha` plaque equation.
    pub residual_alpha: f64,
    /// Relative residual of the perturbed `beta` plaque equation.
    pub residual_beta: f64,
    pub label: RegionLabel,
    pub multiplicity: u32,
    /// False when the point is the centre of a minimal box rather than a
    /// Newton limit.
    pub polished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionRecord {
    pub alpha: C64,
    pub n: i64,
    pub beta: C64,
    pub m: i64,
    pub eps: f64,
    pub points: Vec<IntersectionPoint>,
    /// Boxes where no winding count could be certified.
    pub unresolved: Vec<Rect>,
    pub boxes: usize,
}

impl IntersectionRecord {
    pub fn count(&self) -> u32 {
        self.points.iter().map(|p| p.multiplicity).sum()
    }
}

#[derive(Clone, Copy)]
enum Branch {
    /// `log z' = i s + Log(1 - eps a1 / z)`, valid while `|eps a1 / z| <= 1/2`.
    Far,
    /// `log z' = log_c + Log(z' / zc)`, valid on boxes where `z'` stays in
    /// the disc of radius `|zc| / 2` about `zc`.
    Near { zc: C64, log_c: C64 },
}

struct Pair<'a> {
    chart: &'a SectorChart,
    lam: C64,
    a: f64,
    b: f64,
    alpha: C64,
    la: f64,
    beta: C64,
    lb: f64,
    ea1: C64,
    eb1: C64,
    n: i64,
    m: i64,
    eps: f64,
    consts: RegionConstants,
    fam: PerturbationFamily,
    window: SearchWindow,
    opts: SearchOptions,
    clip: [f64; 4],
    /// Roles of the two plaques exchanged: the search runs on the perturbed
    /// plaque's coordinate and covers only `|z - eps a1| < rho`.
    swapped: bool,
    rho: f64,
}

struct Found {
    zeta: C64,
    br: Branch,
    j: i64,
    mult: u32,
    polished: bool,
}

#[derive(Default)]
struct Work {
    roots: Vec<Found>,
    unresolved: Vec<Rect>,
    boxes: usize,
}

impl<'a> Pair<'a> {
    fn s_of(&self, zeta: C64) -> C64 {
        zeta + self.la
    }

    fn zw(&self, zeta: C64) -> (C64, C64) {
        let s = self.s_of(zeta);
        ((I * s).exp(), self.alpha * (I * self.lam * s).exp())
    }

    fn log_zp(&self, br: &Branch, zeta: C64) -> Option<(C64, C64, C64, C64)> {
        let s = self.s_of(zeta);
        let z = (I * s).exp();
        let w = self.alpha * (I * self.lam * s).exp();
        let zp = z - self.ea1;
        if zp.norm() == 0.0 {
            return None;
        }
        let l = match br {
            Branch::Far => {
                if self.ea1.norm() == 0.0 {
                    I * s
                } else {
                    I * s + (1.0 - self.ea1 / z).ln()
                }
            }
            Branch::Near { zc, log_c } => *log_c + (zp / *zc).ln(),
        };
        Some((l, z, w, zp))
    }

    fn g(&self, br: &Branch, j: i64, zeta: C64) -> Option<C64> {
        let (l, _, w, _) = self.log_zp(br, zeta)?;
        let e = (self.lam * (l + I * (TAU * j as f64))).exp();
        let v = w - self.eb1 - self.beta * e;
        v.is_finite().then_some(v)
    }

    fn g_dg(&self, br: &Branch, j: i64, zeta: C64) -> Option<(C64, C64)> {
        let (l, z, w, zp) = self.log_zp(br, zeta)?;
        let e = self.beta * (self.lam * (l + I * (TAU * j as f64))).exp();
        let g = w - self.eb1 - e;
        let dg = I * self.lam * w - e * self.lam * (I * z / zp);
        (g.is_finite() && dg.is_finite()).then_some((g, dg))
    }

    /// Whether the rectangle cannot contain a point satisfying the window,
    /// bidisc and modulus constraints.
    fn prunable(&self, r: &Rect) -> bool {
        let (a, b) = (self.a, self.b);
        let [cv0, cv1, ct0, ct1] = self.clip;
        let sl = 1e-9;
        if r.v1 < cv0 - sl || r.v0 > cv1 + sl {
            return true;
        }
        let ts = [b * r.u0 + a * r.v0, b * r.u1 + a * r.v0, b * r.u0 + a * r.v1, b * r.u1 + a * r.v1];
        let tmin = ts.iter().cloned().fold(f64::INFINITY, f64::min);
        let tmax = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if tmax < ct0.max(0.0) - sl || tmin > ct1 + sl || r.v1 <= 0.0 {
            return true;
        }
        let (zmin, zmax) = ((-r.v1).exp(), (-r.v0.max(0.0)).exp());
        let (wmin, wmax) = ((-tmax).exp(), (-tmin.max(0.0)).exp());
        if self.swapped && zmin >= self.rho {
            return true;
        }
        if let Some((center, rad)) = self.window.z_disc {
            let center = if self.swapped { center + self.ea1 } else { center };
            let c = center.norm();
            if zmax < c - rad || zmin > c + rad {
                return true;
            }
            if r.u1 - r.u0 < PI && rad < c {
                let half = (rad / c).asin();
                let mid = 0.5 * (r.u0 + r.u1) + self.la;
                let width = 0.5 * (r.u1 - r.u0);
                let d = (mid - center.arg()).rem_euclid(TAU);
                let d = d.min(TAU - d);
                if d > width + half + sl {
                    return true;
                }
            }
        }
        let interval = |lo: f64, hi: f64, c: f64| {
            let l = if c < lo { lo - c } else if c > hi { c - hi } else { 0.0 };
            (l, hi + c)
        };
        let (mut zp_lo, mut zp_hi) = interval(zmin, zmax, self.ea1.norm());
        let (mut wp_lo, mut wp_hi) = interval(wmin, wmax, self.eb1.norm());
        // Lipschitz bounds about the centre: |dz/dzeta| = |z|, |dw/dzeta| = |lambda||w|
        if r.diam() < 1.0 {
            let (zc, wc) = self.zw(r.center());
            let half = 0.5 * r.diam();
            let (dz, dw) = (zmax * half, self.lam.norm() * wmax * half);
            let (zpc, wpc) = ((zc - self.ea1).norm(), (wc - self.eb1).norm());
            zp_lo = zp_lo.max(zpc - dz);
            zp_hi = zp_hi.min(zpc + dz);
            wp_lo = wp_lo.max(wpc - dw);
            wp_hi = wp_hi.min(wpc + dw);
        }
        if zp_lo >= 1.0 || wp_lo >= 1.0 || (!self.swapped && zp_hi < self.rho) {
            return true;
        }
        // ln|w'| = -b u' - a v' with u' in the m-strip and v' = -ln|z'|
        let vp_lo = -zp_hi.ln();
        let vp_hi = if zp_lo > 0.0 { -zp_lo.ln() } else { f64::INFINITY };
        let u_lo = TAU * self.m as f64;
        let u_hi = u_lo + TAU;
        let (av_lo, av_hi) = if a > 0.0 {
            (a * vp_lo, a * vp_hi)
        } else if a < 0.0 {
            (a * vp_hi, a * vp_lo)
        } else {
            (0.0, 0.0)
        };
        let need_lo = -b * u_hi - av_hi;
        let need_hi = -b * u_lo - av_lo;
        let have_lo = if wp_lo > 0.0 { wp_lo.ln() } else { f64::NEG_INFINITY };
        let have_hi = wp_hi.ln();
        need_hi < have_lo - sl || need_lo > have_hi + sl
    }

    /// Branch valid on the whole rectangle, if one exists.
    fn branch_for(&self, r: &Rect) -> Option<Branch> {
        let ea = self.ea1.norm();
        if ea == 0.0 || r.v1 <= (1.0 / (2.0 * ea)).ln() {
            return Some(Branch::Far);
        }
        let (z, _) = self.zw(r.center());
        let zc = z - self.ea1;
        // |dz/dzeta| = |z| <= exp(-v0) on the box
        let reach = (-r.v0).exp() * 0.5 * r.diam() * 1.1;
        (zc.norm() > 0.0 && reach <= 0.5 * zc.norm()).then(|| Branch::Near { zc, log_c: zc.ln() })
    }

    /// Candidate branch indices `j` on a rectangle.
    fn branches(&self, br: &Branch, r: &Rect) -> Vec<i64> {
        let c = r.center();
        let Some((l, ..)) = self.log_zp(br, c) else { return vec![] };
        let half = 0.5 * r.diam();
        let zmax = (-r.v0).exp();
        let lmax = match br {
            Branch::Far => 2.0,
            Branch::Near { zc, .. } => zmax / (0.5 * zc.norm()),
        };
        let spread = lmax * half * 1.05 + 1e-9;
        let base = l.im - self.lb;
        let u_lo = TAU * self.m as f64;
        let u_hi = u_lo + TAU;
        let j0 = ((u_lo - (base + spread)) / TAU).ceil() as i64;
        let j1 = ((u_hi - (base - spread)) / TAU).floor() as i64;
        (j0..=j1).collect()
    }

    fn edge_arg(&self, br: &Branch, j: i64, p: C64, gp: C64, q: C64, gq: C64, depth: u32) -> Option<f64> {
        let mid = 0.5 * (p + q);
        let gm = self.g(br, j, mid)?;
        let scale = gp.norm().min(gq.norm()).min(gm.norm());
        if scale == 0.0 {
            return None;
        }
        if (gq - gp).norm() <= 0.3 * scale && (gm - 0.5 * (gp + gq)).norm() <= 0.05 * scale {
            return Some((gm / gp).arg() + (gq / gm).arg());
        }
        if depth >= self.opts.max_edge_depth {
            return None;
        }
        Some(self.edge_arg(br, j, p, gp, mid, gm, depth + 1)? + self.edge_arg(br, j, mid, gm, q, gq, depth + 1)?)
    }

    fn winding(&self, br: &Branch, j: i64, r: &Rect) -> Option<i64> {
        let c = [C64::new(r.u0, r.v0), C64::new(r.u1, r.v0), C64::new(r.u1, r.v1), C64::new(r.u0, r.v1)];
        let mut total = 0.0;
        for e in 0..4 {
            let (p, q) = (c[e], c[(e + 1) % 4]);
            let k = 4;
            let mut prev = (p, self.g(br, j, p)?);
            for i in 1..=k {
                let x = p + (q - p) * (i as f64 / k as f64);
                let gx = self.g(br, j, x)?;
                total += self.edge_arg(br, j, prev.0, prev.1, x, gx, 0)?;
                prev = (x, gx);
            }
        }
        let wn = total / TAU;
        let k = wn.round();
        ((wn - k).abs() < 0.05 && k >= 0.0).then_some(k as i64)
    }

    fn newton(&self, br: &Branch, j: i64, start: C64, r: &Rect) -> Option<C64> {
        let mut z = start;
        let slack = 1e-9 * r.diam();
        for _ in 0..80 {
            let (g, dg) = self.g_dg(br, j, z)?;
            if dg.norm() == 0.0 {
                return None;
            }
            let step = g / dg;
            z -= step;
            if !r.contains(z, r.diam()) {
                return None;
            }
            if step.norm() <= 1e-15 * (1.0 + z.norm()) {
                break;
            }
        }
        let (g, dg) = self.g_dg(br, j, z)?;
        let settled = (g / dg).norm() <= 1e-12 * (1.0 + z.norm());
        (settled && r.contains(z, slack)).then_some(z)
    }

    fn count_j(&self, br: &Branch, j: i64, r: Rect, work: &mut Work) {
        if self.prunable(&r) {
            return;
        }
        work.boxes += 1;
        let small = r.diam() <= self.opts.min_box * (1.0 + r.center().norm());
        match self.winding(br, j, &r) {
            Some(0) => {}
            Some(1) => {
                if let Some(z) = self.newton(br, j, r.center(), &r) {
                    work.roots.push(Found { zeta: z, br: *br, j, mult: 1, polished: true });
                } else if small {
                    work.roots.push(Found { zeta: r.center(), br: *br, j, mult: 1, polished: false });
                } else {
                    for q in r.quarter() {
                        self.count_j(br, j, q, work);
                    }
                }
            }
            Some(k) => {
                if small {
                    let z = self.newton(br, j, r.center(), &r);
                    work.roots.push(Found { zeta: z.unwrap_or(r.center()), br: *br, j, mult: k as u32, polished: z.is_some() });
                } else {
                    for q in r.quarter() {
                        self.count_j(br, j, q, work);
                    }
                }
            }
            None if small => work.unresolved.push(r),
            None => {
                for q in r.quarter() {
                    self.count_j(br, j, q, work);
                }
            }
        }
    }

    fn process(&self, r: Rect, work: &mut Work) {
        if r.u1 <= r.u0 || r.v1 <= r.v0 || self.prunable(&r) {
            return;
        }
        if r.diam() > self.opts.max_box {
            for q in r.split() {
                self.process(q, work);
            }
            return;
        }
        match self.branch_for(&r) {
            Some(br) => {
                for j in self.branches(&br, &r) {
                    self.count_j(&br, j, r, work);
                }
            }
            None if r.diam() > self.opts.min_box => {
                for q in r.quarter() {
                    self.process(q, work);
                }
            }
            None => work.unresolved.push(r),
        }
    }

    fn initial_rect(&self) -> Option<Rect> {
        let (a, b) = (self.a, self.b);
        let u0 = TAU * self.n as f64;
        let u1 = u0 + TAU;
        let [cv0, cv1, ct0, ct1] = self.clip;
        let mut v0 = cv0.max(0.0);
        let mut v1 = cv1;
        // t = b u + a v constrains v across the strip
        let t0 = ct0.max(0.0);
        if a > 0.0 {
            v0 = v0.max((t0 - b * u1) / a);
            if ct1.is_finite() {
                v1 = v1.min((ct1 - b * u0) / a);
            }
        } else if a < 0.0 {
            v1 = v1.min((b * u1 - t0) / -a);
            if ct1.is_finite() {
                v0 = v0.max((b * u0 - ct1) / -a);
            }
        } else if b * u1 <= t0 || (ct1.is_finite() && b * u0 >= ct1) {
            return None;
        }
        if self.swapped {
            v0 = v0.max((1.0 / self.rho).ln());
        } else if let Some(d) = self.window.polydisc {
            v0 = v0.max((1.0 / d).ln());
        }
        if let Some((c, rad)) = self.window.z_disc {
            let c = if self.swapped { c + self.ea1 } else { c };
            let outer = c.norm() + rad;
            v0 = v0.max(-outer.ln());
            let inner = c.norm() - rad;
            if inner > 0.0 {
                v1 = v1.min(-inner.ln());
            }
        }
        if !v1.is_finite() {
            let ea = self.ea1.norm();
            let anchor = if ea > 0.0 { (1.0 / ea).ln() } else { 0.0 };
            v1 = anchor.max(v0) + self.opts.v_cap_extra;
        }
        (v1 > v0).then_some(Rect { u0, u1, v0, v1 })
    }

    fn finish(&self, f: &Found) -> Option<IntersectionPoint> {
        let (z, w) = self.zw(f.zeta);
        let zp = z - self.ea1;
        let wp = w - self.eb1;
        if zp.norm() == 0.0 || wp.norm() == 0.0 {
            return None;
        }
        let u = f.zeta.re;
        let n0 = TAU * self.n as f64;
        if !(u >= n0 && u < n0 + TAU) || f.zeta.im <= 0.0 {
            return None;
        }
        if z.norm() >= 1.0 || w.norm() >= 1.0 || zp.norm() >= 1.0 || wp.norm() >= 1.0 {
            return None;
        }
        let (l, ..) = self.log_zp(&f.br, f.zeta)?;
        // an unpolished centre may sit closer to a neighbouring sheet
        let mut best: Option<(f64, C64)> = None;
        for dj in -1..=1 {
            let lj = l + I * (TAU * (f.j + dj) as f64);
            let e = self.beta * (self.lam * lj).exp();
            let res = (wp - e).norm();
            if best.is_none_or(|(r, _)| res < r) {
                best = Some((res, lj));
            }
        }
        let (_, lj) = best?;
        let sp = -I * lj;
        let zeta_prime = sp - self.lb;
        let m0 = TAU * self.m as f64;
        if !(zeta_prime.re >= m0 && zeta_prime.re < m0 + TAU) {
            return None;
        }
        // back to the original roles
        let (z, w, zp, wp, zeta, zeta_prime) =
            if self.swapped { (zp, wp, z, w, zeta_prime, f.zeta) } else { (z, w, zp, wp, f.zeta, zeta_prime) };
        let (alpha, n, beta, m) =
            if self.swapped { (self.beta, self.m, self.alpha, self.n) } else { (self.alpha, self.n, self.beta, self.m) };
        if self.rho > 0.0 && (zp.norm() < self.rho) != self.swapped {
            return None;
        }
        let label = classify_region((z, w), self.eps, &self.consts, &self.fam);
        if let Some(d) = self.window.polydisc {
            if z.norm() >= d || w.norm() >= d {
                return None;
            }
        }
        if let Some(sel) = self.window.region {
            if !sel.matches(&label) {
                return None;
            }
        }
        if let Some((c, rad)) = self.window.z_disc {
            if (z - c).norm() >= rad {
                return None;
            }
        }
        let rel = |x: C64, y: C64| (x - y).norm() / x.norm().max(y.norm()).max(f64::MIN_POSITIVE);
        let residual_alpha = plaque_graph(self.chart, alpha, n, z).map(|g| rel(w, g)).unwrap_or(f64::INFINITY);
        let residual_beta = plaque_graph(self.chart, beta, m, zp).map(|g| rel(wp, g)).unwrap_or(f64::INFINITY);
        Some(IntersectionPoint {
            z,
            w,
            zeta,
            zeta_prime,
            residual_alpha,
            residual_beta,
            label,
            multiplicity: f.mult,
            polished: f.polished,
        })
    }
}

/// All points of `L_{alpha,n} ∩ L^eps_{beta,m}` inside the window.
#[allow(clippy::too_many_arguments)]
pub fn find_intersections(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    alpha: C64,
    n: i64,
    beta: C64,
    m: i64,
    eps: f64,
    window: &SearchWindow,
    consts: &RegionConstants,
    opts: &SearchOptions,
) -> Result<IntersectionRecord> {
    if alpha.norm() == 0.0 || beta.norm() == 0.0 || !(eps >= 0.0) {
        return Err(Error::InvalidArgument("alpha, beta must be nonzero and eps >= 0".into()));
    }
    if eps == 0.0 && n == m && (alpha - beta).norm() <= 1e-15 * alpha.norm() {
        return Err(Error::IdenticalPlaques);
    }
    let clip = match window.region {
        Some(sel) if eps > 0.0 => sel.clip(eps, consts),
        _ => [0.0, f64::INFINITY, 0.0, f64::INFINITY],
    };
    let b = chart.b();
    let rho = 1e-3 * eps * fam.a1.norm();
    let direct = Pair {
        chart,
        lam: chart.lambda,
        a: chart.a(),
        b,
        alpha,
        la: alpha.norm().ln() / b,
        beta,
        lb: beta.norm().ln() / b,
        ea1: fam.a1 * eps,
        eb1: fam.b1 * eps,
        n,
        m,
        eps,
        consts: *consts,
        fam: *fam,
        window: *window,
        opts: *opts,
        clip,
        swapped: false,
        rho,
    };
    // near z' = 0 the perturbed plaque's own coordinate is the regular one
    let flipped = Pair {
        alpha: beta,
        la: direct.lb,
        beta: alpha,
        lb: direct.la,
        ea1: -direct.ea1,
        eb1: -direct.eb1,
        n: m,
        m: n,
        clip: [0.0, f64::INFINITY, 0.0, f64::INFINITY],
        swapped: true,
        ..direct
    };
    let mut points: Vec<IntersectionPoint> = Vec::new();
    let mut unresolved = Vec::new();
    let mut boxes = 0;
    for pair in [&direct, &flipped] {
        if pair.swapped && rho == 0.0 {
            continue;
        }
        let mut work = Work::default();
        if let Some(r) = pair.initial_rect() {
            pair.process(r, &mut work);
        }
        for f in &work.roots {
            if let Some(p) = pair.finish(f) {
                let dup = points.iter().any(|q| (q.zeta - p.zeta).norm() <= 1e-9 * (1.0 + p.zeta.norm()));
                if !dup {
                    points.push(p);
                }
            }
        }
        unresolved.extend(work.unresolved);
        boxes += work.boxes;
    }
    points.sort_by(|x, y| x.zeta.re.total_cmp(&y.zeta.re).then(x.zeta.im.total_cmp(&y.zeta.im)));
    Ok(IntersectionRecord { alpha, n, beta, m, eps, points, unresolved, boxes })
}

/// Plaque labels `(alpha, n, beta, m)` of the model plaque through `p` and
/// of the perturbed plaque through `p`.
pub fn plaques_through(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    p: (C64, C64),
    eps: f64,
) -> Result<(C64, i64, C64, i64)> {
    let (alpha, zeta) = leaf_through(chart, p.0, p.1)?;
    let q = fam.pull_back(p, eps);
    let (beta, zeta_p) = leaf_through(chart, q.0, q.1)?;
    Ok((alpha, plaque_index(zeta.re), beta, plaque_index(zeta_p.re)))
}

/// A point drawn log-uniformly in `|z|, |w|` and uniformly in angle,
/// rejected until it carries a label matching `sel` and avoids both axes of
/// the model and of the perturbed chart.
pub fn sample_point_in(
    sel: RegionSel,
    eps: f64,
    consts: &RegionConstants,
    fam: &PerturbationFamily,
    rng: &mut crate::Rng,
) -> Result<(C64, C64)> {
    let [v0, v1, t0, t1] = sel.clip(eps, consts);
    let cap = (1.0 / (consts.c * eps)).ln() + 4.0;
    let (v1, t1) = (v1.min(cap), t1.min(cap));
    for _ in 0..100_000 {
        let v = rng.random_range(v0..v1);
        let t = rng.random_range(t0..t1);
        let z = C64::from_polar((-v).exp(), rng.random_range(-PI..PI));
        let w = C64::from_polar((-t).exp(), rng.random_range(-PI..PI));
        let q = fam.pull_back((z, w), eps);
        if q.0.norm() == 0.0 || q.1.norm() == 0.0 || q.0.norm() >= 1.0 || q.1.norm() >= 1.0 {
            continue;
        }
        if sel.matches(&classify_region((z, w), eps, consts, fam)) {
            return Ok((z, w));
        }
    }
    Err(Error::NoConvergence(100_000))
}

/// Tangency between `L_alpha` and the perturbed leaf at a point of the line
/// `w = (b1 / a1) z`, where the two slopes agree. Returns `(point, alpha, n,
/// beta, m)`.
pub fn tangency_configuration(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    z: C64,
    eps: f64,
) -> Result<((C64, C64), C64, i64, C64, i64)> {
    let p = (z, fam.b1 / fam.a1 * z);
    let (alpha, n, beta, m) = plaques_through(chart, fam, p, eps)?;
    Ok((p, alpha, n, beta, m))
}

/// A configuration of the near-separatrix case: the perturbed plaque
/// through `(eta, 0)` with `|eta| < rho`, and a model plaque meeting it at a
/// point with `|z - eta| < d |eta|`. Returns `(eta, alpha, n, beta, m)`.
pub fn case1_configuration(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    eps: f64,
    consts: &RegionConstants,
    rng: &mut crate::Rng,
) -> Result<(C64, C64, i64, C64, i64)> {
    let rho = 0.5 * consts.c * eps;
    for _ in 0..10_000 {
        let eta = C64::from_polar(rho * rng.random_range(0.05f64..1.0), rng.random_range(-PI..PI));
        let zp = eta - fam.a1 * eps;
        let wp = -fam.b1 * eps;
        let Ok((beta, zeta_p)) = leaf_through(chart, zp, wp) else { continue };
        let m = plaque_index(zeta_p.re);
        // move along L_beta by roughly dz in z so the meeting point stays inside the disc
        let dz = C64::from_polar(consts.d * eta.norm() * rng.random_range(0.0..0.8), rng.random_range(-PI..PI));
        let zeta_q = zeta_p + dz / (I * zp);
        if plaque_index(zeta_q.re) != m {
            continue;
        }
        let q = psi_param(chart, beta, zeta_q);
        let Ok((alpha, zeta)) = leaf_through(chart, q.z + fam.a1 * eps, q.w + fam.b1 * eps) else { continue };
        return Ok((eta, alpha, plaque_index(zeta.re), beta, m));
    }
    Err(Error::NoConvergence(10_000))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: usize,
    pub violations: usize,
    pub witnesses: Vec<String>,
}

impl Tally {
    fn record(&mut self, ok: bool, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            if self.witnesses.len() < 8 {
                self.witnesses.push(witness());
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Region that a batch of records is claimed to come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Claim {
    /// Points in the region where both coordinates exceed `C eps`.
    R1,
    /// Near-separatrix disc `|z - eta| < d |eta|` inside `D1`.
    Case1,
    /// No structural claim beyond the square bound.
    Any,
}

/// Additive constants of the window lemmas, fitted on a batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedWindows {
    /// `max(((1 - a)/b) ln(1/eps) - u')` over `D1` points.
    pub c_u_prime: Option<f64>,
    /// `max(|1 - a| ln(1/eps) / (2 pi b) - |n|)` over `D1` points.
    pub c_n: Option<f64>,
    /// `max(-2 n b pi / a + ln(1/eps) / a - min(v, v'))` over `R2B` points.
    pub c_v: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub index_gap: Tally,
    pub single_point: Tally,
    pub per_square: Tally,
    /// Side of the squares used for the per-square bound.
    pub square_side: f64,
    pub fitted: FittedWindows,
    pub unresolved_boxes: usize,
}

impl CountReport {
    pub fn pass(&self) -> bool {
        self.index_gap.pass() && self.single_point.pass() && self.per_square.pass()
    }
}

/// Side of the squares on which the slope `C e^{i(lambda-1) zeta}` of a
/// plaque turns by at most half a radian in argument.
pub fn square_side(chart: &SectorChart) -> f64 {
    (0.5 / (chart.lambda - 1.0).norm()).min(1.0)
}

/// Structural counting claims on a batch of records. The claim is taken on
/// trust, so a mislabeled batch shows up as violations.
pub fn check_count_bounds(records: &[IntersectionRecord], claim: Claim, chart: &SectorChart) -> CountReport {
    let (a, b) = (chart.a(), chart.b());
    let side = square_side(chart);
    let mut rep = CountReport { square_side: side, ..Default::default() };
    let fit = |slot: &mut Option<f64>, x: f64| *slot = Some(slot.map_or(x, |y: f64| y.max(x)));
    for rec in records {
        rep.unresolved_boxes += rec.unresolved.len();
        if rec.points.is_empty() {
            continue;
        }
        match claim {
            Claim::R1 => {
                rep.index_gap.record((rec.m - rec.n).abs() <= 1, || {
                    format!("alpha={} n={} beta={} m={} eps={}", rec.alpha, rec.n, rec.beta, rec.m, rec.eps)
                });
            }
            Claim::Case1 => {
                rep.single_point.record(rec.count() <= 1, || {
                    format!("{} points for alpha={} n={} beta={} m={}", rec.count(), rec.alpha, rec.n, rec.beta, rec.m)
                });
            }
            Claim::Any => {}
        }
        let mut cells: Vec<((i64, i64), u32)> = Vec::new();
        for p in &rec.points {
            let key = ((p.zeta.re / side).floor() as i64, (p.zeta.im / side).floor() as i64);
            match cells.iter_mut().find(|(k, _)| *k == key) {
                Some((_, c)) => *c += p.multiplicity,
                None => cells.push((key, p.multiplicity)),
            }
            let l = (1.0 / rec.eps).ln();
            if p.label.major == Major::D1 {
                fit(&mut rep.fitted.c_u_prime, (1.0 - a) / b * l - p.zeta_prime.re);
                fit(&mut rep.fitted.c_n, (1.0 - a).abs() * l / (TAU * b) - rec.n.abs() as f64);
            }
            if p.label.sub == Some(Sub::R2B) && a != 0.0 {
                let v = p.zeta.im.min(p.zeta_prime.im);
                fit(&mut rep.fitted.c_v, -2.0 * rec.n as f64 * b * PI / a + l / a - v);
            }
        }
        for (key, c) in cells {
            rep.per_square.record(c <= 2, || format!("{c} points in square {key:?} for alpha={} n={}", rec.alpha, rec.n));
        }
    }
    rep
}

/// Both sides of the modulus and argument closeness bounds at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessRow {
    pub zeta: C64,
    pub log_ratio: f64,
    pub log_ratio_bound: f64,
    pub angle: f64,
    pub angle_bound: f64,
}

impl ClosenessRow {
    pub fn modulus_margin(&self) -> f64 {
        self.log_ratio_bound - self.log_ratio
    }
    pub fn angle_margin(&self) -> f64 {
        self.angle_bound - self.angle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    /// Smallest `S` with `1/S <= |a1|, |b1|` and `|a1|, |b1| <= S`.
    pub s_fit: f64,
    pub rows: Vec<ClosenessRow>,
}

impl ClosenessReport {
    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.modulus_margin().min(r.angle_margin())).fold(f64::INFINITY, f64::min)
    }
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.modulus_margin() < 0.0 || r.angle_margin() < 0.0).count()
    }
}

pub fn fit_s(fam: &PerturbationFamily) -> f64 {
    let (x, y) = (fam.a1.norm(), fam.b1.norm());
    x.max(y).max(1.0 / x).max(1.0 / y)
}

/// Evaluates the closeness bounds on every point of a record. `beta` is
/// renormalized by holonomy powers `e^{-2 pi i lambda j}`, `|j| <= 1`, to
/// the representative closest to `alpha` in modulus.
pub fn closeness_checks(record: &IntersectionRecord, chart: &SectorChart, fam: &PerturbationFamily) -> ClosenessReport {
    let (a, b) = (chart.a(), chart.b());
    let s = fit_s(fam);
    let eps = record.eps;
    let mut best = record.beta;
    for j in -1..=1 {
        let bj = record.beta * (-I * chart.lambda * (TAU * j as f64)).exp();
        if (bj.norm() / record.alpha.norm()).ln().abs() < (best.norm() / record.alpha.norm()).ln().abs() {
            best = bj;
        }
    }
    let lr = (best.norm() / record.alpha.norm()).ln().abs();
    let th = (best / record.alpha).arg().abs();
    let rows = record
        .points
        .iter()
        .map(|p| {
            let (u, v) = (p.zeta.re, p.zeta.im);
            let et = (b * u + a * v).exp();
            let ev = v.exp();
            let a2 = a * a;
            ClosenessRow {
                zeta: p.zeta,
                log_ratio: lr,
                log_ratio_bound: 2.0 * s * eps * (ev * (b + a.abs()) + et),
                angle: th,
                angle_bound: 2.0 * s * et * eps * (2.0 * a.abs() / b + 1.0) + 2.0 * s * eps * ev * (a2 / b + b + a.abs() + a2 / b),
            }
        })
        .collect();
    ClosenessReport { s_fit: s, rows }
}

/// Parameters of the Monte Carlo estimate of the weighted wedge sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeConfig {
    pub eps: Vec<f64>,
    pub delta: f64,
    pub pairs: usize,
    pub seed: u64,
    /// Plaque indices range over `0..=n_max`, or `-n_max..=n_max` when `a > 0`.
    pub n_max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeRow {
    pub eps: f64,
    pub j: f64,
    pub stderr: f64,
    /// Fraction of pairs with at least one unresolved box.
    pub unresolved_frac: f64,
    pub points: usize,
}

/// Kernel family `alpha -> H_alpha`: a unit Cauchy bump whose centre moves
/// with `arg alpha`.
pub fn default_kernel(alpha: C64) -> BoundaryFunction {
    let atom = CauchyAtom { center: 2.0 * alpha.arg().cos(), scale: 1.0, mass: 1.0 };
    BoundaryFunction::cauchy(vec![atom]).expect("valid atom")
}

/// Draw from the uniform measure in `(ln|alpha|, arg alpha)` on the
/// fundamental annulus.
pub fn sample_transversal(chart: &SectorChart, rng: &mut crate::Rng) -> C64 {
    let r = rng.random_range(-TAU * chart.b()..0.0);
    C64::from_polar(r.exp(), rng.random_range(-PI..PI))
}

fn index_range(chart: &SectorChart, n_max: i64) -> std::ops::RangeInclusive<i64> {
    if chart.a() > 0.0 {
        -n_max..=n_max
    } else {
        0..=n_max
    }
}

/// Weighted intersection sum for one pair of transversal parameters.
/// Returns `(sum, points, any unresolved)`.
#[allow(clippy::too_many_arguments)]
pub fn wedge_pair_sum<K: Fn(C64) -> BoundaryFunction>(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    alpha: C64,
    beta: C64,
    eps: f64,
    delta: f64,
    n_max: i64,
    kernel: &K,
    consts: &RegionConstants,
) -> Result<(f64, usize, bool)> {
    let opts = SearchOptions::default();
    let window = SearchWindow::polydisc(delta);
    let (ha, hb) = (kernel(alpha), kernel(beta));
    let mut sum = 0.0;
    let mut count = 0;
    let mut unresolved = false;
    for n in index_range(chart, n_max) {
        for m in index_range(chart, n_max) {
            let rec = find_intersections(chart, fam, alpha, n, beta, m, eps, &window, consts, &opts)?;
            unresolved |= !rec.unresolved.is_empty();
            for p in &rec.points {
                let x = sector_harmonic_value(&ha, chart, p.zeta)?;
                let y = sector_harmonic_value(&hb, chart, p.zeta_prime)?;
                sum += p.multiplicity as f64 * x * y;
                count += p.multiplicity as usize;
            }
        }
    }
    Ok((sum, count, unresolved))
}

/// One row per `eps`. Every level uses the same transversal draws.
pub fn wedge_sum_experiment<K: Fn(C64) -> BoundaryFunction + Sync>(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    cfg: &WedgeConfig,
    kernel: &K,
) -> Result<Vec<WedgeRow>> {
    fam.check_against(chart.lambda)?;
    if cfg.pairs < 2 || !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::InvalidArgument("need pairs >= 2 and 0 < delta < 1".into()));
    }
    let consts = RegionConstants::defaults(chart, fam);
    let draws: Vec<(C64, C64)> = (0..cfg.pairs)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i as u64);
            (sample_transversal(chart, &mut rng), sample_transversal(chart, &mut rng))
        })
        .collect();
    let mut rows = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        let sums: Vec<Result<(f64, usize, bool)>> = draws
            .par_iter()
            .map(|&(a, b)| wedge_pair_sum(chart, fam, a, b, eps, cfg.delta, cfg.n_max, kernel, &consts))
            .collect();
        let sums: Vec<(f64, usize, bool)> = sums.into_iter().collect::<Result<_>>()?;
        let k = sums.len() as f64;
        let mean = sums.iter().map(|s| s.0).sum::<f64>() / k;
        let var = sums.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (k - 1.0);
        rows.push(WedgeRow {
            eps,
            j: mean,
            stderr: (var / k).sqrt(),
            unresolved_frac: sums.iter().filter(|s| s.2).count() as f64 / k,
            points: sums.iter().map(|s| s.1).sum(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafgeom::sector_of;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn setup() -> (SectorChart, PerturbationFamily, RegionConstants) {
        let chart = sector_of(c(-1.0, 1.0)).unwrap();
        let fam = PerturbationFamily::new(c(1.0, 0.0), c(0.3, 0.0)).unwrap();
        let k = RegionConstants::defaults(&chart, &fam);
        (chart, fam, k)
    }

    #[test]
    fn slope_examples() {
        let fam = PerturbationFamily::new(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        let s = perturbed_slope(&fam, I, (c(1e-4, 0.0), c(1e-4, 0.0)), 1e-3).unwrap();
        assert!((s - I).norm() < 1e-15);
        let p = (c(0.2, 0.1), c(0.05, -0.3));
        let s0 = perturbed_slope(&fam, I, p, 0.0).unwrap();
        assert!((s0 - I * p.1 / p.0).norm() < 1e-15);
        assert_eq!(perturbed_slope(&fam, I, (c(1e-3, 0.0), c(1e-3, 0.0)), 1e-3), Err(Error::PerturbedSingularity));
    }

    #[test]
    fn region_examples() {
        let fam = PerturbationFamily::new(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        let k = RegionConstants { c: 0.1, big_c: 3.0, delta: 0.3, c1: 4.0, r: 0.05, s: 0.04, d: 0.1 };
        let l = |z: f64, w: f64| classify_region((c(z, 0.0), c(w, 0.0)), 1e-2, &k, &fam);
        assert_eq!(l(5e-4, 5e-4).major, Major::D1);
        assert_eq!(l(2e-2, 1e-2).major, Major::D2);
        let r2 = l(0.2, 0.01);
        assert_eq!(r2.major, Major::D3);
        assert!(RegionSel::R2.matches(&r2));
        assert_eq!(l(0.5, 0.01).major, Major::Outside);
        assert_eq!(l(0.2, 0.04).sub, Some(Sub::R1A));
        assert_eq!(l(0.05, 0.25).sub, Some(Sub::R1B));
        assert_eq!(l(0.01, 0.2).sub, Some(Sub::R3));
        assert_eq!(l(0.02, 1e-4).sub, Some(Sub::A));
    }

    #[test]
    fn unperturbed_distinct_leaves_are_disjoint() {
        let (chart, fam, k) = setup();
        let opts = SearchOptions::default();
        let w = SearchWindow::everywhere();
        for (a, bb) in [(c(0.5, 0.1), c(0.3, -0.2)), (c(0.01, 0.002), c(0.2, 0.0))] {
            for n in 0..3 {
                for m in 0..3 {
                    let rec = find_intersections(&chart, &fam, a, n, bb, m, 0.0, &w, &k, &opts).unwrap();
                    assert!(rec.points.is_empty(), "{rec:?}");
                }
            }
        }
        let a = c(0.5, 0.1);
        assert_eq!(find_intersections(&chart, &fam, a, 1, a, 1, 0.0, &w, &k, &opts).unwrap_err(), Error::IdenticalPlaques);
    }

    #[test]
    fn finds_the_point_it_was_built_from() {
        let (chart, fam, k) = setup();
        let opts = SearchOptions::default();
        let mut rng = rng_for(3, 0);
        for sel in [RegionSel::R1, RegionSel::D1, RegionSel::D2, RegionSel::R2, RegionSel::R3] {
            for eps in [1e-2, 1e-3] {
                for _ in 0..5 {
                    let p = sample_point_in(sel, eps, &k, &fam, &mut rng).unwrap();
                    let (a, n, b, m) = plaques_through(&chart, &fam, p, eps).unwrap();
                    let rec = find_intersections(&chart, &fam, a, n, b, m, eps, &SearchWindow::region(sel), &k, &opts).unwrap();
                    assert!(rec.unresolved.is_empty(), "{sel:?} {eps}: {:?}", rec.unresolved);
                    let hit = rec.points.iter().any(|q| (q.z - p.0).norm() < 1e-9 * p.0.norm() && (q.w - p.1).norm() < 1e-9 * p.1.norm());
                    assert!(hit, "{sel:?} eps={eps} p={p:?} rec={rec:?}");
                    for q in &rec.points {
                        assert!(q.residual_alpha < 1e-9 && q.residual_beta < 1e-9, "{q:?}");
                        assert_eq!(classify_region((q.z, q.w), eps, &k, &fam), q.label);
                    }
                }
            }
        }
    }

    #[test]
    fn tangency_counts_twice() {
        let (chart, fam, k) = setup();
        let eps = 1e-3;
        let z = C64::from_polar(5.0 * eps, 0.7);
        let (p, a, n, b, m) = tangency_configuration(&chart, &fam, z, eps).unwrap();
        let w = SearchWindow { z_disc: Some((p.0, 1e-3 * p.0.norm())), ..SearchWindow::everywhere() };
        let rec = find_intersections(&chart, &fam, a, n, b, m, eps, &w, &k, &SearchOptions::default()).unwrap();
        assert_eq!(rec.count(), 2, "{rec:?}");
    }

    #[test]
    fn slope_rotation_rate() {
        // along a plaque dw/dz = lambda w / z = C e^{i(lambda-1) zeta}
        let (chart, ..) = setup();
        let lam = chart.lambda;
        let alpha = c(0.3, 0.4);
        let slope = |zeta: C64| {
            let p = crate::leafgeom::psi_param(&chart, alpha, zeta);
            lam * p.w / p.z
        };
        let zeta = c(1.3, 0.7);
        let h = 1e-4;
        let d = (slope(zeta + h) - slope(zeta - h)) / (2.0 * h);
        let want = I * (lam - 1.0) * slope(zeta);
        assert!((d - want).norm() < 1e-8 * want.norm());
    }

    #[test]
    fn closeness_margins() {
        let (chart, fam, k) = setup();
        let opts = SearchOptions::default();
        let mut rng = rng_for(5, 0);
        let eps = 1e-3;
        for _ in 0..10 {
            let p = sample_point_in(RegionSel::R1, eps, &k, &fam, &mut rng).unwrap();
            let (a, n, b, m) = plaques_through(&chart, &fam, p, eps).unwrap();
            let rec = find_intersections(&chart, &fam, a, n, b, m, eps, &SearchWindow::region(RegionSel::R1), &k, &opts).unwrap();
            let rep = closeness_checks(&rec, &chart, &fam);
            assert!(rep.min_margin() >= 0.0, "{rep:?}");
        }
        // far from the inner edge the bounds are tight enough to catch a factor 2
        let p = (C64::from_polar(0.2, 0.4), C64::from_polar(0.15, -1.0));
        let (a, n, b, m) = plaques_through(&chart, &fam, p, eps).unwrap();
        let mut rec = find_intersections(&chart, &fam, a, n, b, m, eps, &SearchWindow::region(RegionSel::R1), &k, &opts).unwrap();
        assert!(closeness_checks(&rec, &chart, &fam).min_margin() >= 0.0);
        rec.beta *= 2.0;
        assert!(closeness_checks(&rec, &chart, &fam).violations() > 0);
    }
}
