//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use foliation_lab::intersection::{
    classify_region, plaque_graph, IntersectionRecord, PerturbationFamily, RegionConstants, RegionSel,
};
use foliation_lab::leafgeom::SectorChart;
use foliation_lab::C64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Outcome of comparing a certified record with the grid count.
#[derive(Debug, Default, Clone)]
pub struct GridComparison {
    pub oracle_count: i64,
    pub certified_count: i64,
    pub unmatched_oracle: usize,
    pub unmatched_certified: usize,
    pub cells: usize,
    /// Cell centres of unmatched oracle roots and unmatched certified points.
    pub witnesses: Vec<C64>,
}

impl GridComparison {
    pub fn agrees(&self) -> bool {
        self.oracle_count == self.certified_count && self.unmatched_oracle == 0 && self.unmatched_certified == 0
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Cell {
    /// Every sample of the cell is inside the region and on both plaques.
    Inside,
    /// Partly outside, across a strip cut, or undefined somewhere.
    Edge,
    Outside,
}

/// Brute-force count of `F(zeta) = w - eps b1 - plaque_graph(beta, m, z - eps a1)`
/// over a uniform grid on the plaque strip of `alpha`, by the discrete winding
/// of `F` around each cell. Cells touching the region boundary, a strip cut of
/// either plaque, or an undefined value are excluded, and so are certified
/// points near them.
#[allow(clippy::too_many_arguments)]
pub fn grid_oracle(
    chart: &SectorChart,
    fam: &PerturbationFamily,
    rec: &IntersectionRecord,
    sel: RegionSel,
    consts: &RegionConstants,
    v_range: (f64, f64),
    h: f64,
) -> GridComparison {
    let (alpha, n, beta, m, eps) = (rec.alpha, rec.n, rec.beta, rec.m, rec.eps);
    let (lam, b) = (chart.lambda, chart.b());
    let la = alpha.norm().ln() / b;
    let lb = beta.norm().ln() / b;
    let u0 = 2.0 * PI * n as f64;
    let nu = (2.0 * PI / h).ceil() as usize;
    let hu = 2.0 * PI / nu as f64;
    let nv = ((v_range.1 - v_range.0) / h).ceil().max(1.0) as usize;
    let hv = (v_range.1 - v_range.0) / nv as f64;
    let ea = fam.a1 * eps;
    let eb = fam.b1 * eps;
    // node values: F and the strip coordinate u' of the perturbed plaque
    let node = |i: usize, k: usize| -> Option<(C64, f64, bool)> {
        let zeta = C64::new(u0 + i as f64 * hu, v_range.0 + k as f64 * hv);
        let s = zeta + la;
        let z = (I * s).exp();
        let w = alpha * (I * lam * s).exp();
        let zp = z - ea;
        let wp_graph = plaque_graph(chart, beta, m, zp).ok()?;
        let f = w - eb - wp_graph;
        let raw = zp.arg() - lb;
        let up = raw - 2.0 * PI * ((raw - 2.0 * PI * m as f64) / (2.0 * PI)).floor();
        let zeta_ok = zeta.re < u0 + 2.0 * PI && zeta.im > 0.0;
        let q = (z, w);
        let inside = zeta_ok
            && z.norm() < 1.0
            && w.norm() < 1.0
            && zp.norm() < 1.0
            && (w - eb).norm() < 1.0
            && sel.matches(&classify_region(q, eps, consts, fam));
        Some((f, up, inside))
    };
    let f_at = |zeta: C64| -> Option<C64> {
        let s = zeta + la;
        let z = (I * s).exp();
        let w = alpha * (I * lam * s).exp();
        Some(w - eb - plaque_graph(chart, beta, m, z - ea).ok()?)
    };
    let mut vals = vec![None; (nu + 1) * (nv + 1)];
    for k in 0..=nv {
        for i in 0..=nu {
            vals[k * (nu + 1) + i] = node(i, k);
        }
    }
    let at = |i: usize, k: usize| vals[k * (nu + 1) + i];
    let mut kind = vec![Cell::Outside; nu * nv];
    let mut wind = vec![0i64; nu * nv];
    for k in 0..nv {
        for i in 0..nu {
            let cs = [at(i, k), at(i + 1, k), at(i + 1, k + 1), at(i, k + 1)];
            if cs.iter().any(|c| c.is_none()) {
                kind[k * nu + i] = Cell::Edge;
                continue;
            }
            let cs: Vec<(C64, f64, bool)> = cs.iter().map(|c| c.unwrap()).collect();
            let ins = cs.iter().filter(|c| c.2).count();
            let umin = cs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let umax = cs.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            kind[k * nu + i] = if ins == 4 && umax - umin < PI {
                Cell::Inside
            } else if ins == 0 && umax - umin < PI {
                Cell::Outside
            } else {
                Cell::Edge
            };
            let pos = [
                C64::new(u0 + i as f64 * hu, v_range.0 + k as f64 * hv),
                C64::new(u0 + (i + 1) as f64 * hu, v_range.0 + k as f64 * hv),
                C64::new(u0 + (i + 1) as f64 * hu, v_range.0 + (k + 1) as f64 * hv),
                C64::new(u0 + i as f64 * hu, v_range.0 + (k + 1) as f64 * hv),
            ];
            let mut t = 0.0;
            let mut ok = true;
            for e in 0..4 {
                match refine(&f_at, pos[e], cs[e].0, pos[(e + 1) % 4], cs[(e + 1) % 4].0, 0) {
                    Some(d) => t += d,
                    None => ok = false,
                }
            }
            if !ok {
                kind[k * nu + i] = Cell::Edge;
            }
            wind[k * nu + i] = (t / (2.0 * PI)).round() as i64;
        }
    }
    let nb_clean = |i: usize, k: usize| -> bool {
        for dk in -1i64..=1 {
            for di in -1i64..=1 {
                let (ii, kk) = (i as i64 + di, k as i64 + dk);
                if ii < 0 || kk < 0 || ii >= nu as i64 || kk >= nv as i64 {
                    continue;
                }
                if kind[kk as usize * nu + ii as usize] == Cell::Edge {
                    return false;
                }
            }
        }
        true
    };
    let cell_of = |z: C64| -> Option<(usize, usize)> {
        let i = ((z.re - u0) / hu).floor();
        let k = ((z.im - v_range.0) / hv).floor();
        (i >= 0.0 && k >= 0.0 && (i as usize) < nu && (k as usize) < nv).then_some((i as usize, k as usize))
    };
    let mut cmp = GridComparison { cells: nu * nv, ..Default::default() };
    let near = |i: usize, k: usize, pi: usize, pk: usize| (i as i64 - pi as i64).abs() <= 1 && (k as i64 - pk as i64).abs() <= 1;
    let cert: Vec<((usize, usize), u32)> = rec
        .points
        .iter()
        .filter_map(|p| cell_of(p.zeta).map(|c| (c, p.multiplicity)))
        .filter(|((i, k), _)| nb_clean(*i, *k) && kind[k * nu + i] == Cell::Inside)
        .collect();
    let mut oracle = Vec::new();
    for k in 0..nv {
        for i in 0..nu {
            if kind[k * nu + i] == Cell::Inside && wind[k * nu + i] != 0 && nb_clean(i, k) {
                oracle.push(((i, k), wind[k * nu + i]));
            }
        }
    }
    cmp.certified_count = cert.iter().map(|c| c.1 as i64).sum();
    cmp.oracle_count = oracle.iter().map(|c| c.1).sum();
    let centre = |i: usize, k: usize| C64::new(u0 + (i as f64 + 0.5) * hu, v_range.0 + (k as f64 + 0.5) * hv);
    for ((i, k), _) in &oracle {
        if !cert.iter().any(|((pi, pk), _)| near(*i, *k, *pi, *pk)) {
            cmp.unmatched_oracle += 1;
            cmp.witnesses.push(centre(*i, *k));
        }
    }
    for ((i, k), _) in &cert {
        if !oracle.iter().any(|((pi, pk), _)| near(*i, *k, *pi, *pk)) {
            cmp.unmatched_certified += 1;
            cmp.witnesses.push(centre(*i, *k));
        }
    }
    // certified points whose cell is clean but whose neighbour hosts the oracle root are matched above;
    // counts are compared on the clean interior only
    cmp
}

/// Argument increment of `f` from `p` to `q`, bisecting while a single step
/// turns by more than an eighth of a circle.
fn refine<F: Fn(C64) -> Option<C64>>(f: &F, p: C64, fp: C64, q: C64, fq: C64, depth: u32) -> Option<f64> {
    let d = (fq / fp).arg();
    if d.abs() <= PI / 4.0 {
        return Some(d);
    }
    if depth >= 12 {
        return None;
    }
    let mid = 0.5 * (p + q);
    let fm = f(mid)?;
    Some(refine(f, p, fp, mid, fm, depth + 1)? + refine(f, mid, fm, q, fq, depth + 1)?)
}

/// `v`-interval of plaque `n` within a region, written out directly from
/// the region's modulus bounds `|z| = e^{-v}`, `|w| = e^{-b u - a v}`.
pub fn region_v_range(chart: &SectorChart, n: i64, sel: RegionSel, eps: f64, k: &RegionConstants) -> (f64, f64) {
    let (a, b) = (chart.a(), chart.b());
    let ld = (1.0 / k.delta).ln();
    let lbig = (1.0 / (k.big_c * eps)).ln();
    let lsmall = (1.0 / (k.c * eps)).ln();
    // (|z| lower/upper as v bounds, |w| bounds as t bounds)
    let (vlo, vhi, tlo, thi) = match sel {
        RegionSel::D1 => (lsmall, f64::INFINITY, lsmall, f64::INFINITY),
        RegionSel::D2 | RegionSel::A | RegionSel::B => (lbig, f64::INFINITY, lbig, f64::INFINITY),
        RegionSel::R1 | RegionSel::R1A | RegionSel::R1B | RegionSel::R1C => (ld, lbig, ld, lbig),
        RegionSel::R2 | RegionSel::R2A | RegionSel::R2B => (ld, lbig, lbig, f64::INFINITY),
        RegionSel::R3 => (lbig, f64::INFINITY, ld, lbig),
        RegionSel::D3 => (ld, f64::INFINITY, ld, f64::INFINITY),
    };
    let u = [2.0 * PI * n as f64, 2.0 * PI * (n + 1) as f64];
    // t = b u + a v, so v = (t - b u) / a
    let (mut lo, mut hi) = (vlo, vhi);
    if a < 0.0 {
        hi = hi.min((b * u[1] - tlo) / -a);
        if thi.is_finite() {
            lo = lo.max((b * u[0] - thi) / -a);
        }
    } else if a > 0.0 {
        lo = lo.max((tlo - b * u[1]) / a);
        if thi.is_finite() {
            hi = hi.min((thi - b * u[0]) / a);
        }
    }
    if !hi.is_finite() {
        hi = lo + 8.0;
    }
    (lo - 0.05, hi + 0.05)
}
