//! Linear part, eigenvalue ratio, normalization and Poincaré linearization
//! at singular points of a chart form.

use serde::{Deserialize, Serialize};

use crate::algebra::Poly;
use crate::foliation::{singular_points, ChartId, FoliationForm, CHART_VARS};
use crate::{Error, Result, C64};

pub type Mat2 = [[C64; 2]; 2];

fn cz() -> C64 {
    C64::new(0.0, 0.0)
}

fn mat_norm(m: &Mat2) -> f64 {
    m.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Jacobian of the directing field `X = (beta, -alpha)` at a singular point.
pub fn linear_part(f: &FoliationForm, chart: ChartId, p: &[C64; 2]) -> Result<Mat2> {
    let form = &f.charts[chart];
    let resid = form.alpha.eval_unchecked(p).norm().max(form.beta.eval_unchecked(p).norm());
    if !(resid < 1e-6) {
        return Err(Error::NotSingular(resid));
    }
    let d = |q: &Poly, k: usize| q.partial_index(k).eval_unchecked(p);
    Ok([[d(&form.beta, 0), d(&form.beta, 1)], [-d(&form.alpha, 0), -d(&form.alpha, 1)]])
}

/// Eigenvalue ratio with the eigenvalues it came from (`lambda = mu2 / mu1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaInfo {
    pub lambda: C64,
    pub mu1: C64,
    pub mu2: C64,
}

/// Ratio of eigenvalues, ordered so that `Im >= 0`; a real ratio is reported
/// with modulus at least one.
pub fn lambda_of(m: &Mat2) -> Result<LambdaInfo> {
    let scale = mat_norm(m);
    if scale == 0.0 {
        return Err(Error::DegenerateSingularity);
    }
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr / 4.0 - det).sqrt();
    let (mut mu1, mut mu2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    // recompute the smaller root from the product to avoid cancellation
    if mu1.norm() < mu2.norm() {
        std::mem::swap(&mut mu1, &mut mu2);
    }
    if mu1.norm() > 0.0 {
        mu2 = det / mu1;
    }
    if mu2.norm() < 1e-12 * scale || mu1.norm() < 1e-12 * scale {
        return Err(Error::DegenerateSingularity);
    }
    if (mu1 - mu2).norm() < 1e-8 * scale {
        let mu = tr / 2.0;
        let off = [[m[0][0] - mu, m[0][1]], [m[1][0], m[1][1] - mu]];
        if mat_norm(&off) > 1e-8 * scale {
            return Err(Error::NonSemisimple);
        }
    }
    let mut r = mu2 / mu1;
    if r.im < 0.0 || (r.im == 0.0 && r.norm() < 1.0) {
        std::mem::swap(&mut mu1, &mut mu2);
        r = mu2 / mu1;
    }
    Ok(LambdaInfo { lambda: r, mu1, mu2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperbolicClass {
    Hyperbolic,
    ResonantReal,
    Degenerate,
}

pub const TOL_IM: f64 = 1e-9;

pub fn classify_hyperbolic(lambda: C64) -> HyperbolicClass {
    if !lambda.is_finite() || lambda.norm() == 0.0 {
        HyperbolicClass::Degenerate
    } else if lambda.im.abs() > TOL_IM {
        HyperbolicClass::Hyperbolic
    } else {
        HyperbolicClass::ResonantReal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Move {
    /// Exchange the axes: lambda -> 1/lambda.
    SwapAxes,
    /// Reverse orientation: lambda -> conj(lambda).
    ConjugateOrientation,
}

/// Width of the band around `Re lambda = 1` that forces an axis swap.
pub const A_GUARD: f64 = 0.05;

/// Swap axes out of the `a = 1` band first, then swap again for `b > 0` when
/// that does not reenter the band.
pub fn normalize_lambda(lambda: C64) -> (C64, Vec<Move>) {
    let mut l = lambda;
    let mut moves = Vec::new();
    if (l.re - 1.0).abs() < A_GUARD {
        l = l.inv();
        moves.push(Move::SwapAxes);
    }
    if l.im < 0.0 {
        let s = l.inv();
        if (s.re - 1.0).abs() >= A_GUARD {
            l = s;
            moves.push(Move::SwapAxes);
        }
    }
    (l, moves)
}

/// [`normalize_lambda`] followed by an orientation reversal when `b < 0`
/// survives, so that a sector chart exists.
pub fn orient_lambda(lambda: C64) -> (C64, Vec<Move>) {
    let (mut l, mut moves) = normalize_lambda(lambda);
    if l.im < 0.0 {
        l = l.conj();
        moves.push(Move::ConjugateOrientation);
    }
    (l, moves)
}

/// Truncated coordinate change to the linear model near a singular point.
///
/// `forward` maps linearizing coordinates `y` to chart offsets `x - p`;
/// `inverse` maps chart offsets back to `y`. In `y` the field, divided by
/// `mu1`, is `(y1, lambda y2)` through degree `order`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizingJet {
    pub order: u32,
    pub lambda: C64,
    pub mu1: C64,
    pub location: [C64; 2],
    pub forward: [Poly; 2],
    pub inverse: [Poly; 2],
}

fn shifted_field(f: &FoliationForm, chart: ChartId, p: &[C64; 2], subs: &[Poly; 2]) -> [Poly; 2] {
    let form = &f.charts[chart];
    let zc = Poly::constant(&CHART_VARS, p[0]);
    let wc = Poly::constant(&CHART_VARS, p[1]);
    let s = [&zc + &subs[0], &wc + &subs[1]];
    [form.beta.compose(&s, None), -&form.alpha.compose(&s, None)]
}

fn lin(m: &Mat2, y: &[Poly; 2]) -> [Poly; 2] {
    [&y[0].scale(m[0][0]) + &y[1].scale(m[0][1]), &y[0].scale(m[1][0]) + &y[1].scale(m[1][1])]
}

fn max_coeff_upto(p: &Poly, k: u32) -> f64 {
    p.truncate(k).max_coeff()
}

pub fn linearize_jet(f: &FoliationForm, chart: ChartId, p: &[C64; 2], order: u32) -> Result<LinearizingJet> {
    let m = linear_part(f, chart, p)?;
    let info = lambda_of(&m)?;
    if classify_hyperbolic(info.lambda) != HyperbolicClass::Hyperbolic {
        return Err(Error::InvalidArgument("linearization needs a hyperbolic singularity".into()));
    }
    let (mu1, mu2) = (info.mu1, info.mu2);
    let mus = [C64::new(1.0, 0.0), info.lambda];
    // eigenvector columns
    let eig = |mu: C64| -> [C64; 2] {
        let r0 = [m[0][0] - mu, m[0][1]];
        let r1 = [m[1][0], m[1][1] - mu];
        let v = if r0[0].norm() + r0[1].norm() >= r1[0].norm() + r1[1].norm() { [-r0[1], r0[0]] } else { [-r1[1], r1[0]] };
        // scale so the dominant component is 1
        let d = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
        if d.norm() == 0.0 {
            [C64::new(1.0, 0.0), cz()]
        } else {
            [v[0] / d, v[1] / d]
        }
    };
    let (v1, v2) = if mat_norm(&[[m[0][0] - mu1, m[0][1]], [m[1][0], m[1][1] - mu1]]) == 0.0 {
        ([C64::new(1.0, 0.0), cz()], [cz(), C64::new(1.0, 0.0)])
    } else {
        (eig(mu1), eig(mu2))
    };
    let pm: Mat2 = [[v1[0], v2[0]], [v1[1], v2[1]]];
    let det = pm[0][0] * pm[1][1] - pm[0][1] * pm[1][0];
    let pinv: Mat2 = [[pm[1][1] / det, -pm[0][1] / det], [-pm[1][0] / det, pm[0][0] / det]];
    let y = [Poly::var(&CHART_VARS, "z")?, Poly::var(&CHART_VARS, "w")?];
    let k = order.max(1);
    let zero = Poly::zero(&CHART_VARS);
    // field in eigen coordinates divided by mu1, nonlinear part only
    let g_of = |xi: &[Poly; 2]| -> [Poly; 2] {
        let x = shifted_field(f, chart, p, &lin(&pm, xi));
        let e = lin(&pinv, &[x[0].truncate(k), x[1].truncate(k)]);
        [e[0].scale(mu1.inv()).truncate(k), e[1].scale(mu1.inv()).truncate(k)]
    };
    let mut h = [zero.clone(), zero.clone()];
    for deg in 2..=k {
        let xi = [&y[0] + &h[0], &y[1] + &h[1]];
        let g = g_of(&xi);
        for j in 0..2 {
            let part = g[j].homogeneous_part(deg);
            let mut add = Poly::zero(&CHART_VARS);
            for (e, c) in part.terms() {
                let div = mus[0] * e[0] as f64 + mus[1] * e[1] as f64 - mus[j];
                if div.norm() < 1e-9 {
                    return Err(Error::Resonance(div.norm()));
                }
                add = &add + &Poly::monomial(&CHART_VARS, e.clone(), c / div);
            }
            h[j] = &h[j] + &add;
        }
    }
    let forward = lin(&pm, &[&y[0] + &h[0], &y[1] + &h[1]]).map(|q| q.chop(1e-300));
    // inverse: y = xi - h(y) by fixed-point iteration, then xi = P^{-1} q
    let mut yi = y.clone();
    for _ in 0..k {
        let hy = [h[0].compose(&yi, Some(k)), h[1].compose(&yi, Some(k))];
        yi = [&y[0] - &hy[0], &y[1] - &hy[1]];
    }
    let xi_of_q = lin(&pinv, &y);
    let inverse = [yi[0].compose(&xi_of_q, Some(k)), yi[1].compose(&xi_of_q, Some(k))];
    Ok(LinearizingJet { order: k, lambda: info.lambda, mu1, location: *p, forward, inverse })
}

impl LinearizingJet {
    /// Largest coefficient through degree `order` of `Dphi(y) L y - X(p + phi(y)) / mu1`.
    pub fn conjugation_residual(&self, f: &FoliationForm, chart: ChartId) -> f64 {
        let k = self.order;
        let y = [Poly::var(&CHART_VARS, "z").unwrap(), Poly::var(&CHART_VARS, "w").unwrap()];
        let ly = [y[0].clone(), y[1].scale(self.lambda)];
        let x = shifted_field(f, chart, &self.location, &self.forward);
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            let d0 = self.forward[i].partial_index(0);
            let d1 = self.forward[i].partial_index(1);
            let lhs = &(&d0 * &ly[0]) + &(&d1 * &ly[1]);
            let r = &lhs - &x[i].truncate(k + 1).scale(self.mu1.inv());
            worst = worst.max(max_coeff_upto(&r, k));
        }
        worst
    }

    /// Largest coefficient through degree `order` of `forward(inverse(q)) - q`.
    pub fn roundtrip_residual(&self) -> f64 {
        let k = self.order;
        let q = [Poly::var(&CHART_VARS, "z").unwrap(), Poly::var(&CHART_VARS, "w").unwrap()];
        (0..2)
            .map(|i| max_coeff_upto(&(&self.forward[i].compose(&self.inverse, Some(k)) - &q[i]), k))
            .fold(0.0, f64::max)
    }

    /// Chart point for linearizing coordinates `y`.
    pub fn to_chart(&self, y: &[C64; 2]) -> [C64; 2] {
        [self.location[0] + self.forward[0].eval_unchecked(y), self.location[1] + self.forward[1].eval_unchecked(y)]
    }

    /// Linearizing coordinates of a chart point.
    pub fn to_linear(&self, x: &[C64; 2]) -> [C64; 2] {
        let q = [x[0] - self.location[0], x[1] - self.location[1]];
        [self.inverse[0].eval_unchecked(&q), self.inverse[1].eval_unchecked(&q)]
    }
}

/// A singular point with its invariant, class, normalization and jet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperbolicSingularity {
    pub chart: ChartId,
    pub location: [C64; 2],
    pub linear_part: Mat2,
    pub raw: LambdaInfo,
    pub lambda: C64,
    pub class: HyperbolicClass,
    pub normalization_log: Vec<Move>,
    pub jet: Option<LinearizingJet>,
}

pub const DEFAULT_JET_ORDER: u32 = 6;

/// Analyze one singular point. The jet is computed for hyperbolic points only.
pub fn analyze(f: &FoliationForm, chart: ChartId, p: &[C64; 2], jet_order: u32) -> Result<HyperbolicSingularity> {
    let m = linear_part(f, chart, p)?;
    let raw = lambda_of(&m)?;
    let class = classify_hyperbolic(raw.lambda);
    let (lambda, moves) = normalize_lambda(raw.lambda);
    let jet = if class == HyperbolicClass::Hyperbolic { Some(linearize_jet(f, chart, p, jet_order)?) } else { None };
    Ok(HyperbolicSingularity { chart, location: *p, linear_part: m, raw, lambda, class, normalization_log: moves, jet })
}

/// Analyze every singular point found in `chart`. Points whose linear part
/// is degenerate are reported as errors in place.
pub fn analyze_chart(f: &FoliationForm, chart: ChartId, jet_order: u32) -> Result<Vec<std::result::Result<HyperbolicSingularity, (C64, C64, Error)>>> {
    let set = singular_points(f, chart)?;
    Ok(set
        .points
        .iter()
        .map(|sp| analyze(f, chart, &[sp.z, sp.w], jet_order).map_err(|e| (sp.z, sp.w, e)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::{from_chart0, preset, Preset};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn linear_part_examples() {
        let f = preset(Preset::Linear(c(0.0, 1.0))).unwrap();
        let m = linear_part(&f, 0, &[c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(m, [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]]);
        let j = preset(Preset::Jouanolou(2)).unwrap();
        let m = linear_part(&j, 0, &[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(m, [[c(-3.0, 0.0), c(2.0, 0.0)], [c(-2.0, 0.0), c(-1.0, 0.0)]]);
        assert!(matches!(linear_part(&j, 0, &[c(0.0, 0.0), c(0.0, 0.0)]), Err(Error::NotSingular(_))));
    }

    #[test]
    fn lambda_examples() {
        let d = |a: C64, b: C64| [[a, c(0.0, 0.0)], [c(0.0, 0.0), b]];
        assert!((lambda_of(&d(c(1.0, 0.0), c(0.0, 1.0))).unwrap().lambda - c(0.0, 1.0)).norm() < 1e-15);
        assert!((lambda_of(&d(c(1.0, 0.0), c(2.0, 0.0))).unwrap().lambda - c(2.0, 0.0)).norm() < 1e-15);
        let l = lambda_of(&[[c(-3.0, 0.0), c(2.0, 0.0)], [c(-2.0, 0.0), c(-1.0, 0.0)]]).unwrap().lambda;
        assert!((l - c(1.0 / 7.0, 4.0 * 3f64.sqrt() / 7.0)).norm() < 1e-14);
        assert_eq!(lambda_of(&d(c(1.0, 0.0), c(0.0, 0.0))).unwrap_err(), Error::DegenerateSingularity);
        assert_eq!(lambda_of(&[[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]).unwrap_err(), Error::NonSemisimple);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_hyperbolic(c(0.0, 1.0)), HyperbolicClass::Hyperbolic);
        assert_eq!(classify_hyperbolic(c(2.0, 0.0)), HyperbolicClass::ResonantReal);
        assert_eq!(classify_hyperbolic(c(1.0 / 7.0, 4.0 * 3f64.sqrt() / 7.0)), HyperbolicClass::Hyperbolic);
    }

    #[test]
    fn normalize_examples() {
        let (l, mv) = normalize_lambda(c(1.0, 1.0));
        assert!((l - c(0.5, -0.5)).norm() < 1e-15);
        assert_eq!(mv, vec![Move::SwapAxes]);
        assert_eq!(normalize_lambda(c(0.0, 1.0)), (c(0.0, 1.0), vec![]));
        let s = 4.0 * 3f64.sqrt() / 7.0;
        let (l, mv) = normalize_lambda(c(1.0 / 7.0, -s));
        assert!((l - c(1.0 / 7.0, s)).norm() < 1e-14);
        assert_eq!(mv, vec![Move::SwapAxes]);
        let (l, mv) = orient_lambda(c(0.5, -0.5));
        assert!((l - c(0.5, 0.5)).norm() < 1e-15);
        assert_eq!(mv, vec![Move::ConjugateOrientation]);
    }

    #[test]
    fn jet_of_linear_is_identity() {
        let f = preset(Preset::Linear(c(0.0, 1.0))).unwrap();
        for k in [1, 4] {
            let jet = linearize_jet(&f, 0, &[c(0.0, 0.0), c(0.0, 0.0)], k).unwrap();
            let y = [c(0.2, 0.1), c(-0.1, 0.3)];
            let x = jet.to_chart(&y);
            assert!((x[0] - y[0]).norm() < 1e-14 && (x[1] - y[1]).norm() < 1e-14);
            assert!(jet.conjugation_residual(&f, 0) < 1e-12);
        }
    }

    #[test]
    fn jet_of_perturbed_model() {
        let alpha = Poly::from_terms(&CHART_VARS, [(vec![0, 1], c(0.0, -1.0))]);
        let beta = Poly::from_terms(&CHART_VARS, [(vec![1, 0], c(1.0, 0.0)), (vec![2, 0], c(1e-3, 0.0))]);
        let f = from_chart0(&alpha, &beta).unwrap();
        let jet = linearize_jet(&f, 0, &[c(0.0, 0.0), c(0.0, 0.0)], 6).unwrap();
        assert!(jet.conjugation_residual(&f, 0) < 1e-9);
        assert!(jet.roundtrip_residual() < 1e-10);
    }

    #[test]
    fn jouanolou_jet_residuals() {
        let f = preset(Preset::Jouanolou(2)).unwrap();
        let jet = linearize_jet(&f, 0, &[c(1.0, 0.0), c(1.0, 0.0)], 6).unwrap();
        assert!(jet.conjugation_residual(&f, 0) < 1e-9, "{}", jet.conjugation_residual(&f, 0));
        assert!(jet.roundtrip_residual() < 1e-10);
    }
}
