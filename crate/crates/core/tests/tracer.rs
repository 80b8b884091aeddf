use foliation_lab::foliation::{preset, Preset};
use foliation_lab::tracer::{extract_plaques, fs_norm, trace_leaf, FlowBox, FlowBoxGrid, Termination, TraceOptions, Tracer};
use foliation_lab::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn endpoint_matches_tight_tolerance_trace() {
    let f = preset(Preset::Jouanolou(2)).unwrap();
    let start = [c(0.0, 0.0), c(0.0, 0.0)];
    let coarse = trace_leaf(&f, 0, start, 0.5, TraceOptions::default()).unwrap();
    let fine = trace_leaf(&f, 0, start, 0.5, TraceOptions { rtol: 1e-13, atol: 1e-15, h_max: 0.01, ..Default::default() }).unwrap();
    assert_eq!(coarse.termination, Termination::Horizon);
    let ((ka, a, _), (kb, b, _)) = (coarse.end(), fine.end());
    assert_eq!(ka, kb);
    let d = ((a[0] - b[0]).norm_sqr() + (a[1] - b[1]).norm_sqr()).sqrt();
    assert!(d < 1e-7, "{d:e}");
}

#[test]
fn linear_trace_passes_through_the_closed_form_flow() {
    // z dw - i w dz: real flow z = e^t, w = e^{i t} from (1, 1)
    let f = preset(Preset::Linear(c(0.0, 1.0))).unwrap();
    let tr = trace_leaf(&f, 0, [c(1.0, 0.0), c(1.0, 0.0)], -2.0, TraceOptions::default()).unwrap();
    let pts: Vec<_> = tr.segments.iter().filter(|s| s.chart == 0).flat_map(|s| s.points.iter().copied()).collect();
    let target = (-1.0f64).exp();
    let i = pts.windows(2).position(|w| w[0][0].norm() >= target && w[1][0].norm() < target).expect("crosses |z| = 1/e");
    let (p, q) = (pts[i], pts[i + 1]);
    let s = (p[0].norm() - target) / (p[0].norm() - q[0].norm());
    let w = p[1] + (q[1] - p[1]) * s;
    assert!((w - c(0.0, -1.0).exp()).norm() < 2e-3, "{w}");
    for p in &pts {
        assert!(p[0].im.abs() < 1e-9 && (p[1] - c(0.0, p[0].re.ln()).exp()).norm() < 1e-8);
    }
    // stored directions are unit vectors of the chart
    for seg in &tr.segments {
        for (p, d) in seg.points.iter().zip(&seg.dirs) {
            assert!((d[0].norm_sqr() + d[1].norm_sqr() - 1.0).abs() < 1e-12);
            assert!(fs_norm(seg.chart, p, d) > 0.0);
        }
    }
}

#[test]
fn plaques_of_a_trace_through_a_flow_box() {
    let f = preset(Preset::Linear(c(0.0, 1.0))).unwrap();
    let tracer = Tracer::new(&f, TraceOptions::default()).unwrap();
    let center = [c(0.7, 0.0), c(0.7, 0.0)];
    let grid = FlowBoxGrid::build(&tracer, 0, &[center], 0.1, 0.05, 4);
    assert_eq!(grid.boxes.len(), 1);
    let tr = tracer.trace(0, center, 0.3, None).unwrap();
    let ex = extract_plaques(&tr, &grid);
    assert!(ex.bad_axis.is_empty());
    assert_eq!(ex.plaques.len(), 1);
    let pl = &ex.plaques[0];
    assert!(pl.alpha.norm() < 1e-3, "{}", pl.alpha);
    assert!(pl.coords.iter().all(|(s, t)| s.norm() < 0.1 && t.norm() < 0.1));

    // a trace far away meets no box
    let far = tracer.trace(0, [c(-0.3, 0.4), c(0.2, -0.6)], 0.2, None).unwrap();
    assert!(extract_plaques(&far, &grid).plaques.is_empty());

    // axes exchanged: the leaf runs along the transversal direction
    let b = grid.boxes[0];
    let folded = FlowBoxGrid { boxes: vec![FlowBox { e_leaf: b.e_trans, e_trans: b.e_leaf, ..b }], ..grid.clone() };
    assert_eq!(extract_plaques(&tr, &folded).bad_axis, vec![0]);
}
