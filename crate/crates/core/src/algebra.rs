//! Complex multivariate polynomials, elimination and local root refinement.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// A point of C^n.
pub type ComplexPoint = Vec<C64>;

/// Polynomial with complex coefficients in named variables.
///
/// Terms are keyed by exponent vectors; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, C64>,
}

impl Poly {
    pub fn zero(vars: &[&str]) -> Self {
        Poly { vars: vars.iter().map(|s| s.to_string()).collect(), terms: BTreeMap::new() }
    }

    fn zero_like(&self) -> Self {
        Poly { vars: self.vars.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &[&str], c: C64) -> Self {
        let mut p = Self::zero(vars);
        p.insert(vec![0; vars.len()], c);
        p
    }

    /// The coordinate function `name`.
    pub fn var(vars: &[&str], name: &str) -> Result<Self> {
        let k = vars.iter().position(|v| *v == name).ok_or_else(|| Error::UnknownVariable(name.into()))?;
        let mut e = vec![0; vars.len()];
        e[k] = 1;
        Ok(Self::monomial(vars, e, C64::new(1.0, 0.0)))
    }

    pub fn monomial(vars: &[&str], exp: Vec<u32>, c: C64) -> Self {
        assert_eq!(exp.len(), vars.len(), "exponent length must match variable count");
        let mut p = Self::zero(vars);
        p.insert(exp, c);
        p
    }

    /// Build from `(exponents, coefficient)` pairs; repeated exponents add up.
    pub fn from_terms(vars: &[&str], terms: impl IntoIterator<Item = (Vec<u32>, C64)>) -> Self {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            assert_eq!(e.len(), vars.len(), "exponent length must match variable count");
            p.add_term(e, c);
        }
        p
    }

    fn insert(&mut self, e: Vec<u32>, c: C64) {
        if c != C64::new(0.0, 0.0) {
            self.terms.insert(e, c);
        } else {
            self.terms.remove(&e);
        }
    }

    fn add_term(&mut self, e: Vec<u32>, c: C64) {
        let v = self.terms.get(&e).copied().unwrap_or_default() + c;
        self.insert(e, v);
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars.iter().position(|v| v == name).ok_or_else(|| Error::UnknownVariable(name.into()))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C64)> {
        self.terms.iter()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exp: &[u32]) -> C64 {
        self.terms.get(exp).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial reports 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, k: usize) -> u32 {
        self.terms.keys().map(|e| e[k]).max().unwrap_or(0)
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut p = self.zero_like();
        for (e, v) in &self.terms {
            p.insert(e.clone(), v * c);
        }
        p
    }

    /// Drop coefficients below `tol` in modulus.
    pub fn chop(&self, tol: f64) -> Self {
        let mut p = self.zero_like();
        for (e, v) in &self.terms {
            if v.norm() >= tol {
                p.insert(e.clone(), *v);
            }
        }
        p
    }

    /// Keep terms of total degree at most `max_deg`.
    pub fn truncate(&self, max_deg: u32) -> Self {
        let mut p = self.zero_like();
        for (e, v) in &self.terms {
            if e.iter().sum::<u32>() <= max_deg {
                p.insert(e.clone(), *v);
            }
        }
        p
    }

    /// Terms of total degree exactly `k`.
    pub fn homogeneous_part(&self, k: u32) -> Self {
        let mut p = self.zero_like();
        for (e, v) in &self.terms {
            if e.iter().sum::<u32>() == k {
                p.insert(e.clone(), *v);
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Poly { vars: self.vars.clone(), terms: BTreeMap::from([(vec![0; self.n_vars()], C64::new(1.0, 0.0))]) };
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Evaluate at `x`, one power table per variable.
    pub fn eval(&self, x: &[C64]) -> Result<C64> {
        if x.len() != self.n_vars() {
            return Err(Error::Arity { expected: self.n_vars(), got: x.len() });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[C64]) -> C64 {
        let n = self.n_vars();
        let mut tables: Vec<Vec<C64>> = Vec::with_capacity(n);
        for k in 0..n {
            let d = self.degree_in(k) as usize;
            let mut t = Vec::with_capacity(d + 1);
            t.push(C64::new(1.0, 0.0));
            for j in 1..=d {
                t.push(t[j - 1] * x[k]);
            }
            tables.push(t);
        }
        let mut acc = C64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut m = *c;
            for k in 0..n {
                m *= tables[k][e[k] as usize];
            }
            acc += m;
        }
        acc
    }

    pub fn partial_derivative(&self, var: &str) -> Result<Self> {
        let k = self.var_index(var)?;
        Ok(self.partial_index(k))
    }

    pub fn partial_index(&self, k: usize) -> Self {
        let mut p = self.zero_like();
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut f = e.clone();
                f[k] -= 1;
                p.add_term(f, c * e[k] as f64);
            }
        }
        p
    }

    /// Substitute `subs[k]` for variable `k`. All substitutes must share variables;
    /// the result lives in those variables. Terms of total degree above
    /// `max_deg` are discarded along the way when it is given.
    pub fn compose(&self, subs: &[Poly], max_deg: Option<u32>) -> Self {
        assert_eq!(subs.len(), self.n_vars(), "one substitute per variable");
        let names: Vec<&str> = subs[0].vars.iter().map(|s| s.as_str()).collect();
        let trunc = |p: Poly| match max_deg {
            Some(d) => p.truncate(d),
            None => p,
        };
        let mut powers: Vec<Vec<Poly>> = Vec::with_capacity(subs.len());
        for (k, s) in subs.iter().enumerate() {
            let d = self.degree_in(k) as usize;
            let mut t = vec![Poly::constant(&names, C64::new(1.0, 0.0))];
            for j in 1..=d {
                let next = trunc(&t[j - 1] * s);
                t.push(next);
            }
            powers.push(t);
        }
        let mut out = Poly::zero(&names);
        for (e, c) in &self.terms {
            let mut m = Poly::constant(&names, *c);
            for k in 0..e.len() {
                if e[k] > 0 {
                    m = trunc(&m * &powers[k][e[k] as usize]);
                }
            }
            out = &out + &m;
        }
        out
    }

    /// Coefficients of `self` as a polynomial in variable `k`, each a
    /// polynomial in the remaining variables (index = power of variable `k`).
    pub fn coefficients_in(&self, k: usize) -> Vec<Poly> {
        let d = self.degree_in(k) as usize;
        let mut out = vec![self.zero_like(); d + 1];
        for (e, c) in &self.terms {
            let mut f = e.clone();
            let j = f[k] as usize;
            f[k] = 0;
            out[j].add_term(f, *c);
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PolyJson::from(self)).expect("polynomial serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let pj: PolyJson = serde_json::from_value(v.clone()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Poly::try_from(pj)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    exp: Vec<u32>,
    re: f64,
    im: f64,
}

/// Wire format `{"vars":[..],"terms":[{"exp":[..],"re":..,"im":..}]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyJson {
    vars: Vec<String>,
    terms: Vec<TermJson>,
}

impl From<&Poly> for PolyJson {
    fn from(p: &Poly) -> Self {
        PolyJson {
            vars: p.vars.clone(),
            terms: p.terms.iter().map(|(e, c)| TermJson { exp: e.clone(), re: c.re, im: c.im }).collect(),
        }
    }
}

impl TryFrom<PolyJson> for Poly {
    type Error = Error;
    fn try_from(pj: PolyJson) -> Result<Self> {
        let names: Vec<&str> = pj.vars.iter().map(|s| s.as_str()).collect();
        let mut p = Poly::zero(&names);
        for t in pj.terms {
            if t.exp.len() != names.len() {
                return Err(Error::Arity { expected: names.len(), got: t.exp.len() });
            }
            if !(t.re.is_finite() && t.im.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
            p.add_term(t.exp, C64::new(t.re, t.im));
        }
        Ok(p)
    }
}

impl Serialize for Poly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Poly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pj = PolyJson::deserialize(d)?;
        Poly::try_from(pj).map_err(serde::de::Error::custom)
    }
}

fn check_vars(a: &Poly, b: &Poly) {
    assert_eq!(a.vars, b.vars, "polynomials live in different variables");
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        check_vars(self, o);
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        check_vars(self, o);
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(e.clone(), -c);
        }
        p
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        check_vars(self, o);
        let mut p = self.zero_like();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                p.add_term(e, c1 * c2);
            }
        }
        p
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, o: Poly) -> Poly {
        &self + &o
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, o: Poly) -> Poly {
        &self - &o
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, o: Poly) -> Poly {
        &self * &o
    }
}

/// Determinant by fraction-free (Bareiss) elimination with partial pivoting.
pub fn bareiss_det(mut a: Vec<Vec<C64>>) -> C64 {
    let n = a.len();
    if n == 0 {
        return C64::new(1.0, 0.0);
    }
    let mut sign = 1.0;
    let mut prev = C64::new(1.0, 0.0);
    for k in 0..n - 1 {
        let piv = (k..n).max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm())).unwrap();
        if a[piv][k].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != k {
            a.swap(piv, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    a[n - 1][n - 1] * sign
}

/// Sylvester matrix of two univariate coefficient lists (index = power).
pub fn sylvester_matrix(p: &[C64], q: &[C64]) -> Vec<Vec<C64>> {
    let m = p.len() - 1;
    let n = q.len() - 1;
    let size = m + n;
    let mut s = vec![vec![C64::new(0.0, 0.0); size]; size];
    for i in 0..n {
        for (j, c) in p.iter().rev().enumerate() {
            s[i][i + j] = *c;
        }
    }
    for i in 0..m {
        for (j, c) in q.iter().rev().enumerate() {
            s[n + i][i + j] = *c;
        }
    }
    s
}

/// Result of eliminating one variable of a bivariate pair.
#[derive(Debug, Clone)]
pub struct Resultant {
    /// Resultant as a polynomial in the remaining variable (same variable
    /// list as the inputs; the eliminated variable has exponent 0).
    pub poly: Poly,
    /// Leading coefficients in the eliminated variable.
    pub lead_p: Poly,
    pub lead_q: Poly,
    /// Index of the remaining variable.
    pub other: usize,
}

impl Resultant {
    /// True where both leading coefficients vanish (magnitude below 1e-12),
    /// so that a zero of the resultant need not come from a finite common root.
    pub fn leading_degenerate_at(&self, x: C64) -> bool {
        let pt = |x: C64| {
            let mut v = vec![C64::new(0.0, 0.0); self.poly.n_vars()];
            v[self.other] = x;
            v
        };
        self.lead_p.eval_unchecked(&pt(x)).norm() < 1e-12 && self.lead_q.eval_unchecked(&pt(x)).norm() < 1e-12
    }

    /// Coefficients in the remaining variable (index = power).
    pub fn univariate(&self) -> Vec<C64> {
        let d = self.poly.degree_in(self.other) as usize;
        let mut c = vec![C64::new(0.0, 0.0); d + 1];
        for (e, v) in self.poly.terms() {
            c[e[self.other] as usize] += v;
        }
        c
    }
}

/// Sylvester resultant of bivariate `p`, `q` with respect to `var`.
///
/// The determinant is sampled at roots of unity in the other variable and
/// interpolated by an inverse discrete Fourier transform.
pub fn resultant_eliminate(p: &Poly, q: &Poly, var: &str) -> Result<Resultant> {
    if p.is_zero() || q.is_zero() {
        return Err(Error::Degenerate("zero polynomial".into()));
    }
    if p.n_vars() != 2 || p.vars != q.vars {
        return Err(Error::InvalidArgument("resultant needs two bivariate polynomials in the same variables".into()));
    }
    let k = p.var_index(var)?;
    let other = 1 - k;
    let m = p.degree_in(k);
    let n = q.degree_in(k);
    if m == 0 && n == 0 {
        return Err(Error::Degenerate(format!("neither polynomial involves `{var}`")));
    }
    let cp = p.coefficients_in(k);
    let cq = q.coefficients_in(k);
    let bound_a = m * q.degree_in(other) + n * p.degree_in(other);
    let bound_b = p.degree() * q.degree();
    let dmax = bound_a.min(bound_b) as usize;
    let npts = dmax + 1;
    let mut samples = Vec::with_capacity(npts);
    let scale = p.max_coeff().powi(n as i32) * q.max_coeff().powi(m as i32);
    let mut pt = vec![C64::new(0.0, 0.0); 2];
    for j in 0..npts {
        let x = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / npts as f64);
        pt[other] = x;
        let pv: Vec<C64> = cp.iter().map(|c| c.eval_unchecked(&pt)).collect();
        let qv: Vec<C64> = cq.iter().map(|c| c.eval_unchecked(&pt)).collect();
        samples.push(bareiss_det(sylvester_matrix(&pv, &qv)));
    }
    let names: Vec<&str> = p.vars.iter().map(|s| s.as_str()).collect();
    let mut res = Poly::zero(&names);
    for d in 0..npts {
        let mut acc = C64::new(0.0, 0.0);
        for (j, s) in samples.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * ((d * j) % npts) as f64 / npts as f64;
            acc += s * C64::from_polar(1.0, ang);
        }
        acc /= npts as f64;
        if acc.norm() > 1e-13 * scale.max(1e-300) {
            let mut e = vec![0; 2];
            e[other] = d as u32;
            res.add_term(e, acc);
        }
    }
    Ok(Resultant { poly: res, lead_p: cp[m as usize].clone(), lead_q: cq[n as usize].clone(), other })
}

/// Roots of the univariate polynomial with coefficients `c` (index = power),
/// via companion-matrix eigenvalues followed by Newton refinement.
/// Leading coefficients below `1e-14` relative to the largest are dropped
/// (roots at infinity).
pub fn univariate_roots(c: &[C64]) -> Vec<C64> {
    let big = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if big == 0.0 {
        return vec![];
    }
    let mut hi = c.len() - 1;
    while hi > 0 && c[hi].norm() <= 1e-14 * big {
        hi -= 1;
    }
    let mut lo = 0;
    let mut roots = Vec::new();
    while lo < hi && c[lo].norm() == 0.0 {
        roots.push(C64::new(0.0, 0.0));
        lo += 1;
    }
    let coeffs = &c[lo..=hi];
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return roots;
    }
    let lead = coeffs[deg];
    let mut comp = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let eig = nalgebra::Schur::new(comp).eigenvalues().expect("complex Schur form is triangular");
    for r in eig.iter() {
        roots.push(polish_univariate(coeffs, *r));
    }
    roots
}

fn horner_with_derivative(c: &[C64], x: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for a in c.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

fn polish_univariate(c: &[C64], mut x: C64) -> C64 {
    let mut best = horner_with_derivative(c, x).0.norm();
    for _ in 0..20 {
        let (p, dp) = horner_with_derivative(c, x);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let nx = x - p / dp;
        let r = horner_with_derivative(c, nx).0.norm();
        if !(r < best) {
            break;
        }
        best = r;
        x = nx;
    }
    x
}

/// Configuration of [`newton_polish`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub cond_cap: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 50, cond_cap: 1e12 }
    }
}

/// Newton refinement of a common zero of two bivariate polynomials.
///
/// Iteration continues past `tol` while the residual still drops by more than
/// a factor 0.3 per step, so quadratic convergence runs to machine precision
/// while the linear convergence of a multiple root keeps going until the
/// Jacobian condition cap trips.
pub fn newton_polish(system: (&Poly, &Poly), guess: &[C64], tol: f64) -> Result<ComplexPoint> {
    newton_polish_with(system, guess, tol, NewtonOptions::default())
}

pub fn newton_polish_with(system: (&Poly, &Poly), guess: &[C64], tol: f64, opts: NewtonOptions) -> Result<ComplexPoint> {
    let (f, g) = system;
    if f.n_vars() != 2 || g.n_vars() != 2 {
        return Err(Error::Arity { expected: 2, got: f.n_vars().max(g.n_vars()) });
    }
    if guess.len() != 2 {
        return Err(Error::Arity { expected: 2, got: guess.len() });
    }
    let fz = f.partial_index(0);
    let fw = f.partial_index(1);
    let gz = g.partial_index(0);
    let gw = g.partial_index(1);
    let mut x = [guess[0], guess[1]];
    let resid = |x: &[C64; 2]| -> (C64, C64, f64) {
        let a = f.eval_unchecked(x);
        let b = g.eval_unchecked(x);
        (a, b, a.norm().max(b.norm()))
    };
    let (mut a, mut b, mut r) = resid(&x);
    for _ in 0..opts.max_iter {
        if r == 0.0 {
            return Ok(x.to_vec());
        }
        let j = [[fz.eval_unchecked(&x), fw.eval_unchecked(&x)], [gz.eval_unchecked(&x), gw.eval_unchecked(&x)]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let nrm = (j[0][0].norm_sqr() + j[0][1].norm_sqr() + j[1][0].norm_sqr() + j[1][1].norm_sqr()).sqrt();
        let cond = if det.norm() == 0.0 { f64::INFINITY } else { nrm * nrm / det.norm() };
        if !(cond <= opts.cond_cap) {
            return Err(Error::JacobianSingular(cond));
        }
        let dz = (j[1][1] * a - j[0][1] * b) / det;
        let dw = (j[0][0] * b - j[1][0] * a) / det;
        let nx = [x[0] - dz, x[1] - dw];
        if !(nx[0].is_finite() && nx[1].is_finite()) {
            return Err(Error::NoConvergence(opts.max_iter));
        }
        let (na, nb, nr) = resid(&nx);
        if nr < tol && nr > 0.3 * r {
            return Ok(if nr <= r { nx.to_vec() } else { x.to_vec() });
        }
        if r < tol && nr >= r {
            return Ok(x.to_vec());
        }
        x = nx;
        a = na;
        b = nb;
        r = nr;
    }
    if r < tol {
        Ok(x.to_vec())
    } else {
        Err(Error::NoConvergence(opts.max_iter))
    }
}
