use foliation_lab::current::{walk_currents, WalkEnsemble, WalkOptions};
use foliation_lab::foliation::{preset, transition, FoliationForm, Preset};
use foliation_lab::intersection::{
    classify_region, find_intersections, plaques_through, sample_point_in, PerturbationFamily, RegionConstants, RegionSel, SearchOptions,
    SearchWindow,
};
use foliation_lab::leafgeom::{psi_param, sector_of};
use foliation_lab::tracer::{line_field_at, tangency_residual, FlowBoxGrid, Termination, TraceOptions, Tracer};
use foliation_lab::{rng_for, Error, C64};
use proptest::prelude::*;
use std::sync::OnceLock;

fn jouanolou() -> &'static (FoliationForm, Tracer) {
    static J: OnceLock<(FoliationForm, Tracer)> = OnceLock::new();
    J.get_or_init(|| {
        let f = preset(Preset::Jouanolou(2)).unwrap();
        let t = Tracer::new(&f, TraceOptions::default()).unwrap();
        (f, t)
    })
}

fn c64(r: f64) -> impl Strategy<Value = C64> {
    (-r..r, -r..r).prop_map(|(a, b)| C64::new(a, b))
}

fn dist(a: &[C64; 2], b: &[C64; 2]) -> f64 {
    ((a[0] - b[0]).norm_sqr() + (a[1] - b[1]).norm_sqr()).sqrt()
}

/// Forward then backward trace from a start away from the singular set: returns the
/// return error and the gain of the backward trace, measured by perturbing its start.
fn round_trip(start: [C64; 2], arc: f64) -> Option<(f64, f64)> {
    let (_, tracer) = jouanolou();
    if tracer.nearest_singularity(0, &start).is_some_and(|(_, d)| d <= 0.1) {
        return None;
    }
    let fwd = tracer.trace(0, start, arc, None).unwrap();
    if fwd.termination != Termination::Horizon {
        return None;
    }
    let (k, end, dir) = fwd.end();
    let back = |p: [C64; 2]| {
        let tr = tracer.trace(k, p, -arc, Some(dir)).unwrap();
        let (k0, p0, _) = tr.end();
        let p0 = if k0 == 0 { p0 } else { transition(&p0, &[C64::new(0.0, 0.0); 2], k0, 0).unwrap().0 };
        (tr.termination == Termination::Horizon).then_some(p0)
    };
    let p0 = back(end)?;
    let d = 1e-7;
    let p1 = back([end[0] + C64::new(0.6 * d, 0.3 * d), end[1] + C64::new(-0.5 * d, 0.55 * d)])?;
    Some((dist(&p0, &start), dist(&p1, &p0) / d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traces_are_reversible(z in c64(1.5), w in c64(1.5), arc in 0.2..2.0f64) {
        let start = [z, w];
        let Some((err, gain)) = round_trip(start, arc) else { return Ok(()) };
        prop_assert!(err < 1e-7 * gain.max(1.0) * (1.0 + z.norm() + w.norm()), "error {err:e}, gain {gain:e}");
    }

    #[test]
    fn unit_horizon_round_trip_of_a_well_conditioned_start(z in c64(1.5), w in c64(1.5)) {
        let Some((err, gain)) = round_trip([z, w], 1.0) else { return Ok(()) };
        prop_assume!(gain <= 1e3);
        prop_assert!(err < 1e-6, "error {err:e}");
    }

    #[test]
    fn chart_changes_preserve_tangency(z in c64(2.0), w in c64(2.0)) {
        let (f, tracer) = jouanolou();
        prop_assume!(z.norm() > 0.1 && w.norm() > 0.1);
        let p = [z, w];
        let Ok(v) = line_field_at(f, 0, &p) else { return Ok(()) };
        for to in 1..3 {
            let (q, dq) = transition(&p, &v, 0, to).unwrap();
            prop_assert!(tangency_residual(&tracer.fields[to], &q, &dq) < 1e-10);
            let (p1, v1) = transition(&q, &dq, to, 0).unwrap();
            prop_assert!(dist(&p1, &p) < 1e-12 * (1.0 + z.norm() + w.norm()));
            prop_assert!(dist(&v1, &v) < 1e-10);
        }
    }

    #[test]
    fn plaque_slope_rotates_at_rate_lambda_minus_one(a in -2.0..2.0f64, b in 0.1..2.0f64, alpha in c64(1.0), zeta in c64(3.0)) {
        prop_assume!(alpha.norm() > 0.05);
        let ch = sector_of(C64::new(a, b)).unwrap();
        let slope = |s: C64| {
            let p = psi_param(&ch, alpha, s);
            ch.lambda * p.w / p.z
        };
        let h = 1e-5;
        let d = (slope(zeta + h) - slope(zeta - h)) / (2.0 * h);
        let want = C64::i() * (ch.lambda - 1.0) * slope(zeta);
        prop_assert!((d - want).norm() <= 1e-6 * want.norm());
    }

    #[test]
    fn intersection_points_solve_both_plaque_equations(seed in 0u64..10_000, sel in prop::sample::select(vec![RegionSel::R1, RegionSel::R2, RegionSel::D1, RegionSel::D2])) {
        let ch = sector_of(C64::new(-1.0, 1.0)).unwrap();
        let fam = PerturbationFamily::new(C64::new(1.0, 0.0), C64::new(0.3, 0.0)).unwrap();
        let k = RegionConstants::defaults(&ch, &fam);
        let eps = 1e-2;
        let mut rng = rng_for(seed, 0);
        let p = sample_point_in(sel, eps, &k, &fam, &mut rng).unwrap();
        let (a, n, b, m) = plaques_through(&ch, &fam, p, eps).unwrap();
        let rec = find_intersections(&ch, &fam, a, n, b, m, eps, &SearchWindow::region(sel), &k, &SearchOptions::default()).unwrap();
        prop_assert!(rec.count() >= 1 || !rec.unresolved.is_empty());
        for q in rec.points.iter().filter(|q| q.polished) {
            prop_assert!(q.residual_alpha < 1e-10 && q.residual_beta < 1e-10, "{q:?}");
            prop_assert_eq!(q.label, classify_region((q.z, q.w), eps, &k, &fam));
            let (a2, n2, b2, m2) = plaques_through(&ch, &fam, (q.z, q.w), eps).unwrap();
            prop_assert!((n2, m2) == (n, m) && (a2 - a).norm() < 1e-8 * a.norm() && (b2 - b).norm() < 1e-8 * b.norm());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn walk_currents_are_seeded_and_normalized(seed in 0u64..1000, z in c64(0.8), w in c64(0.8)) {
        let (f, tracer) = jouanolou();
        let grid = FlowBoxGrid::lattice(tracer, 0, 1.0, 3, 0.3, 0.1);
        let ens = WalkEnsemble { start_chart: 0, start: [z, w], n_paths: 6, h_walk: 0.05, horizon_steps: 60, seed };
        let run = || walk_currents(f, &ens, &grid, WalkOptions::default(), &[30, 60]);
        let first = match run() {
            Ok(r) => r,
            Err(Error::AtSingularity | Error::Empty) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(&first, &run().unwrap());
        for c in &first.0 {
            prop_assert!((c.total_mass - 1.0).abs() < 1e-12);
            prop_assert!(c.masses.iter().all(|m| *m >= 0.0));
        }
    }
}
