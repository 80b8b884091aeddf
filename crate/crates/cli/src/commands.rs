//! Command implementations: each turns a resolved config into a report.

use std::f64::consts::PI;
use std::path::Path;

use foliation_lab::current::{ahlfors_average_model, current_distance, walk_currents, AhlforsResolution, ModelGrid, WalkEnsemble, WalkOptions};
use foliation_lab::foliation::{from_chart0, preset, singular_points, FoliationForm, Preset};
use foliation_lab::harmonic::{
    poisson_extend_est, poisson_gradient, weighted_norm, BoundaryFunction, CauchyAtom, HalfPlanePoint, Interp, TailModel,
};
use foliation_lab::intersection::{default_kernel, wedge_sum_experiment, PerturbationFamily, WedgeConfig};
use foliation_lab::leafgeom::{bidisc_window, psi_param, sector_of, tangency_residual as model_tangency};
use foliation_lab::metric::{
    ahlfors_schwarz_gap, curvature_at, mu_mass, rho_p, rho_t, GradientMethod, HalfPlaneMap, HarmonicLeafFunction, MassResolution,
};
use foliation_lab::singularity::{analyze_chart, orient_lambda};
use foliation_lab::tracer::{tangency_residual, FlowBoxGrid, TraceOptions, Tracer};
use foliation_lab::{rng_for, C64};
use rand::Rng as _;
use serde_json::json;

use crate::config::{Command, MetricCheck, RunConfig};
use crate::report::{fmt_f64, Artifact, Cell, Check, Report, Table};

pub type CmdResult<T> = Result<T, String>;

fn ctx<T, E: std::fmt::Display>(what: &str, r: Result<T, E>) -> CmdResult<T> {
    r.map_err(|e| format!("{what}: {e}"))
}

fn c(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

fn cj(z: C64) -> serde_json::Value {
    json!([z.re, z.im])
}

fn fe(x: f64) -> String {
    format!("{x:.3e}")
}

pub fn run_command(cfg: &RunConfig) -> CmdResult<Report> {
    let cmd = cfg.command.ok_or("no command")?;
    let mut rep = Report::new(cmd.name(), cfg.clone());
    match cmd {
        Command::Singularities => singularities(cfg, &mut rep)?,
        Command::Classify => classify(cfg, &mut rep)?,
        Command::Sector => sector(cfg, &mut rep)?,
        Command::Trace => trace(cfg, &mut rep)?,
        Command::Poisson => poisson(cfg, &mut rep)?,
        Command::Wedge => wedge(cfg, &mut rep)?,
        Command::Ergodic => ergodic(cfg, &mut rep)?,
        Command::Metric => metric(cfg, &mut rep)?,
        Command::FamilySweep => family_sweep(cfg, &mut rep)?,
    }
    Ok(rep)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FormFile {
    alpha: foliation_lab::algebra::Poly,
    beta: foliation_lab::algebra::Poly,
}

fn load_form(cfg: &RunConfig) -> CmdResult<FoliationForm> {
    if let Some(p) = &cfg.preset {
        let pr: Preset = ctx("preset", p.parse())?;
        return ctx("preset", preset(pr));
    }
    let path = cfg.form.as_ref().ok_or("no preset or form")?;
    let text = ctx(&format!("form {}", path.display()), std::fs::read_to_string(path))?;
    let ff: FormFile = ctx(&format!("form {}", path.display()), serde_json::from_str(&text))?;
    ctx("form", from_chart0(&ff.alpha, &ff.beta))
}

fn singularities(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let f = load_form(cfg)?;
    let chart = cfg.chart.unwrap_or(0);
    let tol = cfg.tol.unwrap_or(1e-9);
    let set = ctx("singular points", singular_points(&f, chart))?;
    let mut t = Table::new("points", &["re_z", "im_z", "re_w", "im_w", "residual", "flag"]);
    let mut pts = Vec::new();
    for p in &set.points {
        let flag = serde_json::to_value(p.flag).unwrap_or_default();
        t.push(vec![p.z.re.into(), p.z.im.into(), p.w.re.into(), p.w.im.into(), p.residual.into(), Cell::Text(flag.as_str().unwrap_or("").into())]);
        pts.push(json!({"z": cj(p.z), "w": cj(p.w), "residual": p.residual, "flag": flag}));
    }
    let worst = set.points.iter().max_by(|a, b| a.residual.total_cmp(&b.residual));
    let max_res = worst.map_or(0.0, |p| p.residual);
    rep.line(format!("{} singular points in chart {chart}", set.points.len()));
    rep.check(Check::new("residuals", max_res <= tol, format!("max residual {} <= {}", fe(max_res), fe(tol)), || {
        let p = worst.unwrap();
        format!("point z = {}, w = {} residual {}", p.z, p.w, fmt_f64(p.residual))
    }));
    let data = json!({"chart": chart, "points": pts});
    rep.data = data.clone();
    rep.add_table(t);
    rep.set_artifact(Artifact::Json(data));
    Ok(())
}

fn classify(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let f = load_form(cfg)?;
    let chart = cfg.chart.unwrap_or(0);
    let results = ctx("classify", analyze_chart(&f, chart, cfg.jet_order.unwrap_or(6)))?;
    let mut out = Vec::new();
    let mut t = Table::new("singularities", &["re_z", "im_z", "re_w", "im_w", "re_lambda", "im_lambda", "class"]);
    let mut failures = Vec::new();
    for r in &results {
        match r {
            Ok(s) => {
                let class = serde_json::to_value(s.class).unwrap_or_default();
                t.push(vec![
                    s.location[0].re.into(),
                    s.location[0].im.into(),
                    s.location[1].re.into(),
                    s.location[1].im.into(),
                    s.lambda.re.into(),
                    s.lambda.im.into(),
                    Cell::Text(class.as_str().unwrap_or("").into()),
                ]);
                out.push(json!({
                    "location": [cj(s.location[0]), cj(s.location[1])],
                    "lambda_raw": cj(s.raw.lambda),
                    "lambda": cj(s.lambda),
                    "class": class,
                    "moves": serde_json::to_value(&s.normalization_log).unwrap_or_default(),
                    "jet_conjugation_residual": s.jet.as_ref().map(|j| j.conjugation_residual(&f, chart)),
                }));
            }
            Err((z, w, e)) => {
                failures.push(format!("z = {z}, w = {w}: {e}"));
                out.push(json!({"location": [cj(*z), cj(*w)], "error": e.to_string()}));
            }
        }
    }
    rep.line(format!("{} singular points in chart {chart}", results.len()));
    rep.check(Check::new("analysis", failures.is_empty(), format!("{} of {} points analyzed", results.len() - failures.len(), results.len()), || failures.join("; ")));
    let data = json!({"chart": chart, "singularities": out});
    rep.data = data.clone();
    rep.add_table(t);
    rep.set_artifact(Artifact::Json(data));
    Ok(())
}

fn sector(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let raw = c(cfg.lambda.ok_or("lambda")?);
    let (lam, moves) = orient_lambda(raw);
    let chart = ctx("sector", sector_of(lam))?;
    let win = bidisc_window(&chart);
    rep.line(format!("lambda {raw} -> {lam} (moves {moves:?})"));
    rep.line(format!("theta_max {}", fmt_f64(chart.theta_max)));
    rep.line(format!("gamma {}", fmt_f64(chart.gamma)));
    rep.line(format!("window {}", win.describe()));
    rep.check(Check::new("hyperbolic", chart.gamma > 1.0, format!("gamma {} > 1", fmt_f64(chart.gamma)), || format!("lambda {lam}")));
    let mut data = json!({
        "lambda_raw": cj(raw), "lambda": cj(lam), "moves": serde_json::to_value(&moves).unwrap_or_default(),
        "theta_max": chart.theta_max, "gamma": chart.gamma, "window": win.describe(),
    });
    if cfg.trace_model == Some(true) {
        let alpha = cfg.alpha.map(c).unwrap_or_else(|| C64::new((-PI * chart.b()).exp(), 0.0));
        let k = cfg.grid.unwrap_or(24);
        let tol = cfg.tol.unwrap_or(1e-12);
        let mut t = Table::new("model", &["ray", "re_zeta", "im_zeta", "re_z", "im_z", "re_w", "im_w", "tangency"]);
        let mut worst = (0.0f64, C64::new(0.0, 0.0));
        let mut worst_mod = 0.0f64;
        for j in 0..k {
            let th = chart.theta_max * (j as f64 + 0.5) / k as f64;
            for i in 0..k {
                let zeta = C64::from_polar(4.0 * PI * (i as f64 + 1.0) / k as f64, th);
                let p = psi_param(&chart, alpha, zeta);
                let r = model_tangency(&chart, alpha, zeta);
                if r > worst.0 {
                    worst = (r, zeta);
                }
                worst_mod = worst_mod.max((p.z.norm().ln() + zeta.im).abs());
                t.push(vec![Cell::Int(j as i64), zeta.re.into(), zeta.im.into(), p.z.re.into(), p.z.im.into(), p.w.re.into(), p.w.im.into(), r.into()]);
            }
        }
        rep.check(Check::new("model-tangency", worst.0 < tol, format!("max tangency residual {} < {}", fe(worst.0), fe(tol)), || format!("zeta = {}", worst.1)));
        rep.check(Check::new("model-modulus", worst_mod < 1e-12, format!("max | ln|z| + v | {}", fe(worst_mod)), || "ln|z| != -v".into()));
        data["alpha"] = cj(alpha);
        let i = rep.add_table(t);
        rep.set_artifact(Artifact::Csv(i));
    } else {
        rep.set_artifact(Artifact::Json(data.clone()));
    }
    rep.data = data;
    Ok(())
}

fn trace(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let f = load_form(cfg)?;
    let chart = cfg.chart.unwrap_or(0);
    let s = cfg.start.ok_or("start")?;
    let start = [C64::new(s[0], s[1]), C64::new(s[2], s[3])];
    let tracer = ctx("tracer", Tracer::new(&f, TraceOptions::default()))?;
    let tr = ctx("trace", tracer.trace(chart, start, cfg.arc.unwrap_or(50.0), None))?;
    let tol = cfg.tol.unwrap_or(1e-6);
    let mut t = Table::new("trace", &["chart", "re_z", "im_z", "re_w", "im_w", "s"]);
    let mut worst = (0.0f64, 0.0f64);
    for seg in &tr.segments {
        let field = f.chart_field(seg.chart);
        for ((p, d), s) in seg.points.iter().zip(&seg.dirs).zip(&seg.s) {
            let r = tangency_residual(&field, p, d);
            if r > worst.0 {
                worst = (r, *s);
            }
            t.push(vec![Cell::Int(seg.chart as i64), p[0].re.into(), p[0].im.into(), p[1].re.into(), p[1].im.into(), (*s).into()]);
        }
    }
    let term = serde_json::to_value(&tr.termination).unwrap_or_default();
    rep.line(format!("{} points in {} segments, termination {}", tr.n_points(), tr.segments.len(), term));
    rep.check(Check::new("tangency", worst.0 <= tol, format!("max tangency residual {} <= {}", fe(worst.0), fe(tol)), || format!("at arc length {}", fmt_f64(worst.1))));
    rep.data = json!({"points": tr.n_points(), "segments": tr.segments.len(), "termination": term});
    let i = rep.add_table(t);
    rep.set_artifact(Artifact::Csv(i));
    Ok(())
}

fn parse_tail(s: &str) -> CmdResult<TailModel> {
    let s = s.trim();
    if s == "zero" {
        return Ok(TailModel::ZeroBeyond);
    }
    match s.strip_prefix("power:").map(|p| p.trim().parse::<f64>()) {
        Some(Ok(p)) if p >= 0.0 => Ok(TailModel::PowerDecay(p)),
        _ => Err(format!("tail must be `zero` or `power:P` with P >= 0, got `{s}`")),
    }
}

fn read_boundary(path: &Path, tail: TailModel) -> CmdResult<BoundaryFunction> {
    let mut r = ctx(&format!("data {}", path.display()), csv::Reader::from_path(path))?;
    let headers = ctx("data headers", r.headers())?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or(format!("data: missing column `{name}`"));
    let (ix, iv) = (col("x")?, col("value")?);
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = ctx("data row", rec)?;
        let get = |i: usize| rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|_| format!("data: bad number in row {:?}", rec));
        xs.push(get(ix)?);
        vs.push(get(iv)?);
    }
    ctx("boundary data", BoundaryFunction::sampled(xs, vs, Interp::Linear, tail, &path.display().to_string()))
}

fn poisson(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let tail = parse_tail(cfg.tail.as_deref().unwrap_or("zero"))?;
    let bf = read_boundary(cfg.data.as_ref().ok_or("data")?, tail)?;
    let gamma = cfg.gamma.unwrap_or(2.0);
    let at = cfg.at.unwrap_or([0.0, 1.0]);
    let p = HalfPlanePoint::new(at[0], at[1]);
    let est = ctx("poisson", poisson_extend_est(&bf, p))?;
    let (du, dv) = ctx("gradient", poisson_gradient(&bf, p))?;
    let norm = weighted_norm(&bf, gamma);
    let mut t = Table::new("poisson", &["u", "v", "value", "abs_err", "du", "dv", "weighted_norm"]);
    t.push(vec![at[0].into(), at[1].into(), est.value.into(), est.abs_err.into(), du.into(), dv.into(), norm.as_ref().copied().unwrap_or(f64::NAN).into()]);
    rep.line(format!("P[H]({}, {}) = {} +- {}", at[0], at[1], fmt_f64(est.value), fe(est.abs_err)));
    rep.check(Check::new("nonnegative", est.value >= -est.abs_err, format!("value {}", fmt_f64(est.value)), || format!("at ({}, {})", at[0], at[1])));
    rep.check(Check::new(
        "weighted-norm",
        norm.as_ref().is_ok_and(|n| n.is_finite()),
        match &norm {
            Ok(n) => format!("int H (|x|+1)^(1/gamma-1) = {} (gamma {})", fmt_f64(*n), gamma),
            Err(e) => e.to_string(),
        },
        || format!("tail {:?} with gamma {gamma}", tail),
    ));
    rep.data = json!({"value": est.value, "abs_err": est.abs_err, "gradient": [du, dv], "weighted_norm": norm.ok()});
    let i = rep.add_table(t);
    rep.set_artifact(Artifact::Csv(i));
    Ok(())
}

fn wedge(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let chart = ctx("lambda", sector_of(c(cfg.lambda.ok_or("lambda")?)))?;
    let fam = ctx("perturbation", PerturbationFamily::new(c(cfg.a1.ok_or("a1")?), c(cfg.b1.ok_or("b1")?)))?;
    let wc = WedgeConfig {
        eps: cfg.eps.clone().ok_or("eps")?,
        delta: cfg.delta.ok_or("delta")?,
        pairs: cfg.pairs.ok_or("pairs")?,
        seed: cfg.seed.ok_or("seed")?,
        n_max: cfg.n_max.ok_or("n-max")?,
    };
    let rows = ctx("wedge", wedge_sum_experiment(&chart, &fam, &wc, &default_kernel))?;
    let slack = cfg.slack.unwrap_or(1.05);
    let mut t = Table::new("wedge", &["eps", "J", "stderr", "unresolved_frac"]);
    for r in &rows {
        t.push(vec![r.eps.into(), r.j.into(), r.stderr.into(), r.unresolved_frac.into()]);
        rep.line(format!("eps {}  J {}  stderr {}  unresolved {}  points {}", fe(r.eps), fmt_f64(r.j), fe(r.stderr), r.unresolved_frac, r.points));
    }
    let bad: Vec<_> = rows.windows(2).filter(|w| !(w[1].j <= slack * w[0].j)).collect();
    rep.check(Check::new("trend", bad.is_empty(), format!("J at each level <= {slack} x J at the previous level"), || {
        bad.iter().map(|w| format!("J({}) = {} > {slack} x J({}) = {}", fe(w[1].eps), fmt_f64(w[1].j), fe(w[0].eps), fmt_f64(w[0].j))).collect::<Vec<_>>().join("; ")
    }));
    let worst = rows.iter().map(|r| r.unresolved_frac).fold(0.0, f64::max);
    rep.check(Check::new("resolved", worst <= 0.01, format!("largest unresolved fraction {worst} <= 0.01"), || {
        rows.iter().filter(|r| r.unresolved_frac > 0.01).map(|r| format!("eps {}: {}", fe(r.eps), r.unresolved_frac)).collect::<Vec<_>>().join("; ")
    }));
    rep.data = serde_json::to_value(&rows).unwrap_or_default();
    let i = rep.add_table(t);
    rep.set_artifact(Artifact::Csv(i));
    Ok(())
}

fn ergodic(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let f = load_form(cfg)?;
    let tracer = ctx("tracer", Tracer::new(&f, TraceOptions::default()))?;
    let grid = FlowBoxGrid::lattice(&tracer, 0, 1.0, cfg.boxes_per_axis.unwrap_or(3), 0.3, 0.1);
    if grid.boxes.is_empty() {
        return Err("ergodic: no flow boxes away from the singular set".into());
    }
    let h = cfg.horizon.ok_or("horizon")?;
    let horizons = [h / 8, h / 4, h / 2, h];
    let starts = cfg.starts.clone().ok_or("starts")?;
    if starts.len() != 2 {
        return Err(format!("ergodic: need exactly two starts, got {}", starts.len()));
    }
    let seed = cfg.seed.ok_or("seed")?;
    let mut currents = Vec::new();
    for (k, s) in starts.iter().enumerate() {
        let ens = WalkEnsemble {
            start_chart: 0,
            start: [C64::new(s[0], s[1]), C64::new(s[2], s[3])],
            n_paths: cfg.n.ok_or("n")?,
            h_walk: cfg.h_walk.ok_or("h-walk")?,
            horizon_steps: h,
            seed: seed.wrapping_add(k as u64),
        };
        let (cur, stats) = ctx(&format!("walk from start {k}"), walk_currents(&f, &ens, &grid, WalkOptions::default(), &horizons))?;
        rep.line(format!("start {k}: {} paths completed, {} discarded", stats.completed, stats.discarded));
        currents.push(cur);
    }
    let mut t = Table::new("distance", &["horizon", "distance"]);
    let mut d = Vec::new();
    for (i, hz) in horizons.iter().enumerate() {
        let x = ctx("distance", current_distance(&currents[0][i], &currents[1][i]))?;
        t.push(vec![Cell::Int(*hz as i64), x.into()]);
        d.push(x);
    }
    let slack = cfg.slack.unwrap_or(1.05);
    let bad: Vec<usize> = (1..d.len()).filter(|&i| !(d[i] <= slack * d[i - 1])).collect();
    rep.check(Check::new("decreasing", bad.is_empty(), format!("distance at each doubling <= {slack} x previous: {}", d.iter().map(|x| fe(*x)).collect::<Vec<_>>().join(" -> ")), || {
        bad.iter().map(|&i| format!("horizon {}: {} > {slack} x {}", horizons[i], fmt_f64(d[i]), fmt_f64(d[i - 1]))).collect::<Vec<_>>().join("; ")
    }));
    rep.data = json!({"horizons": horizons, "distances": d, "cells": grid.n_cells()});
    let i = rep.add_table(t);
    rep.set_artifact(Artifact::Csv(i));
    Ok(())
}

/// Positive data: one to three Cauchy bumps.
fn random_cauchy(rng: &mut foliation_lab::Rng) -> BoundaryFunction {
    let k = rng.random_range(1..=3);
    let atoms = (0..k)
        .map(|_| CauchyAtom { center: rng.random_range(-3.0..3.0), scale: rng.random_range(0.2..2.0), mass: rng.random_range(0.5..2.0) })
        .collect();
    BoundaryFunction::cauchy(atoms).expect("positive atoms")
}

/// Compactly supported tent data.
fn random_tent(rng: &mut foliation_lab::Rng) -> BoundaryFunction {
    let c0 = rng.random_range(-2.0..2.0);
    let w = rng.random_range(0.2..2.0);
    let hgt = rng.random_range(0.5..2.0);
    BoundaryFunction::sampled(vec![c0 - w, c0, c0 + w], vec![0.0, hgt, 0.0], Interp::Linear, TailModel::ZeroBeyond, "tent").expect("valid tent")
}

fn metric(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let samples = cfg.samples.unwrap_or(1000);
    let tol = cfg.tol.ok_or("tol")?;
    match cfg.check.ok_or("check")? {
        MetricCheck::Curvature => {
            let mut rng = rng_for(cfg.seed.ok_or("seed")?, 0);
            let mut t = Table::new("curvature", &["function", "u", "v", "kappa"]);
            let mut worst = (0.0f64, String::new());
            let mut h = None;
            for i in 0..samples {
                if i % 10 == 0 {
                    h = Some(HarmonicLeafFunction::half_plane(random_cauchy(&mut rng)).with_gradient(GradientMethod::CentralDifference { h_fd: 1e-3 }));
                }
                let u = rng.random_range(-3.0..3.0);
                let v = (rng.random_range(0.1f64.ln()..3.0f64.ln())).exp();
                let k = ctx("curvature", curvature_at(h.as_ref().unwrap(), (u, v)))?;
                if (k + 1.0).abs() >= worst.0 {
                    worst = ((k + 1.0).abs(), format!("function {} at ({u}, {v}): kappa {}", i / 10, fmt_f64(k)));
                }
                t.push(vec![Cell::Int((i / 10) as i64), u.into(), v.into(), k.into()]);
            }
            rep.check(Check::new("curvature", worst.0 <= tol, format!("max |kappa + 1| {} <= {}", fe(worst.0), fe(tol)), || worst.1.clone()));
            let sq = HarmonicLeafFunction::closed("x^2", |x, _| x * x, |x, _| x > 0.0);
            let k = curvature_at(&sq, (1.0, 0.5));
            let rejected = k.as_ref().map_or(true, |k| (k + 1.0).abs() > tol);
            rep.check(Check::new("negative-control", rejected, format!("h = x^2 at (1, 0.5): {:?}", k.as_ref().map(|k| fmt_f64(*k))), || "non-harmonic h passed".into()));
            rep.data = json!({"max_deviation": worst.0});
            let i = rep.add_table(t);
            rep.set_artifact(Artifact::Csv(i));
        }
        MetricCheck::Schwarz => {
            let mut rng = rng_for(cfg.seed.ok_or("seed")?, 0);
            let chart = ctx("sector", sector_of(C64::new(0.0, 1.0)))?;
            let map = HalfPlaneMap::Sector(chart);
            let mut t = Table::new("schwarz", &["function", "u", "v", "rho_t", "rho_p", "gap"]);
            let mut worst = (f64::INFINITY, String::new());
            let mut h = None;
            let mut skipped = 0;
            for i in 0..samples {
                if i % 10 == 0 {
                    h = Some(HarmonicLeafFunction::sector(random_tent(&mut rng), chart));
                }
                let th = chart.theta_max * rng.random_range(0.02..0.98);
                let r = (rng.random_range(0.05f64.ln()..3.0f64.ln())).exp();
                let z = C64::from_polar(r, th);
                let hf = h.as_ref().unwrap();
                let (Ok(rt), Ok(rp), Ok(gap)) = (rho_t(hf, (z.re, z.im)), rho_p(&map, z), ahlfors_schwarz_gap(&map, hf, (z.re, z.im))) else {
                    skipped += 1;
                    continue;
                };
                if gap < worst.0 {
                    worst = (gap, format!("function {} at zeta = {z}: gap {}", i / 10, fmt_f64(gap)));
                }
                t.push(vec![Cell::Int((i / 10) as i64), z.re.into(), z.im.into(), rt.into(), rp.into(), gap.into()]);
            }
            rep.line(format!("{skipped} samples skipped (h not positive or point critical)"));
            rep.check(Check::new("domination", worst.0 >= -tol, format!("min rho_P - rho_T {} >= -{}", fe(worst.0), fe(tol)), || worst.1.clone()));
            rep.data = json!({"min_gap": worst.0, "skipped": skipped});
            let i = rep.add_table(t);
            rep.set_artifact(Artifact::Csv(i));
        }
        MetricCheck::Mass => {
            let chart = ctx("sector", sector_of(c(cfg.lambda.ok_or("lambda")?)))?;
            let radii = [0.2, 0.1, 0.05];
            let mut t = Table::new("mass", &["r", "mass", "abs_err"]);
            let mut est = Vec::new();
            for r in radii {
                let e = ctx("mass", mu_mass(&chart, &default_kernel, r, MassResolution::default()))?;
                t.push(vec![r.into(), e.mass.into(), e.abs_err.into()]);
                rep.line(format!("r {r}: mass {} (mesh change {})", fmt_f64(e.mass), fe(e.abs_err)));
                est.push(e);
            }
            let unstable: Vec<usize> = (0..3).filter(|&i| !(est[i].abs_err <= tol * est[i].mass)).collect();
            rep.check(Check::new("finite", est.iter().all(|e| e.mass.is_finite() && e.mass > 0.0), "masses finite and positive".into(), || "non-finite mass".into()));
            rep.check(Check::new("mesh-stable", unstable.is_empty(), format!("relative mesh change <= {tol}"), || {
                unstable.iter().map(|&i| format!("r {}: {} vs {}", radii[i], fe(est[i].abs_err), fe(est[i].mass))).collect::<Vec<_>>().join("; ")
            }));
            let dec = est.windows(2).all(|w| w[1].mass < w[0].mass);
            rep.check(Check::new("decreasing", dec, "mass strictly decreasing in r".into(), || est.iter().map(|e| fmt_f64(e.mass)).collect::<Vec<_>>().join(", ")));
            rep.data = json!({"radii": radii, "masses": est.iter().map(|e| e.mass).collect::<Vec<_>>()});
            let i = rep.add_table(t);
            rep.set_artifact(Artifact::Csv(i));
        }
    }
    Ok(())
}

fn family_sweep(cfg: &RunConfig, rep: &mut Report) -> CmdResult<()> {
    let [l0, l1] = cfg.lambda_path.ok_or("lambda-path")?;
    let (l0, l1) = (c(l0), c(l1));
    let steps = cfg.steps.ok_or("steps")?;
    let r = cfg.radius.ok_or("radius")?;
    let grid = ModelGrid { depth: 8.0, bins: 8 };
    let mut currents = Vec::new();
    let mut lams = Vec::new();
    for i in 0..steps {
        let lam = l0 + (l1 - l0) * (i as f64 / (steps - 1) as f64);
        let chart = ctx(&format!("lambda {lam}"), sector_of(lam))?;
        let alpha = C64::new((-PI * chart.b()).exp(), 0.0);
        currents.push(ctx(&format!("Ahlfors average at lambda {lam}"), ahlfors_average_model(&chart, alpha, r, &grid, AhlforsResolution::default()))?);
        lams.push(lam);
    }
    let mut t = Table::new("sweep", &["step", "re_lambda", "im_lambda", "re_next", "im_next", "distance"]);
    let mut d = Vec::new();
    for i in 0..steps - 1 {
        let x = ctx("distance", current_distance(&currents[i], &currents[i + 1]))?;
        t.push(vec![Cell::Int(i as i64), lams[i].re.into(), lams[i].im.into(), lams[i + 1].re.into(), lams[i + 1].im.into(), x.into()]);
        d.push(x);
    }
    let bad: Vec<usize> = (0..d.len()).filter(|&i| !d[i].is_finite()).collect();
    rep.check(Check::new("finite", bad.is_empty(), format!("{} neighbour distances finite", d.len()), || format!("steps {bad:?}")));
    rep.data = json!({"lambdas": lams.iter().map(|l| cj(*l)).collect::<Vec<_>>(), "distances": d});
    let i = rep.add_table(t);
    rep.set_artifact(Artifact::Csv(i));
    Ok(())
}
