use fw_merge::fw::{
    fw_gap, inner_optimize_lambda, lmo_hard, merge_soft, read_trace, reconstruct, run_fw, soft_combination,
    FWConfig, LambdaGranularity, LambdaWeights, LmoGranularity, MergeFnKind, Selection, StopReason, Variant,
};
use fw_merge::simplex::{SimplexMode, SimplexWeights};
use fw_merge::{CheckpointPool, Error, Objective, ParamSet, QuadraticObjective};
use proptest::prelude::*;

fn p2(x: f64, y: f64) -> ParamSet {
    ParamSet::vector("x", vec![x, y])
}

fn triangle() -> (CheckpointPool, [ParamSet; 3]) {
    let verts = [p2(0.0, 0.0), p2(1.0, 0.0), p2(0.0, 1.0)];
    let mut pool = CheckpointPool::new();
    for (i, v) in verts.iter().enumerate() {
        pool.push_memory(format!("v{i}"), v.clone()).unwrap();
    }
    (pool, verts)
}

/// Brute-force minimum of `obj` over convex combinations of `verts`, grid step `h`.
fn simplex_grid_min(obj: &impl Objective, verts: &[ParamSet; 3], h: f64) -> f64 {
    let n = (1.0 / h).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let (a, b) = (i as f64 * h, j as f64 * h);
            let c = 1.0 - a - b;
            let mut p = verts[0].scale(a).unwrap();
            p.axpy_inplace(b, &verts[1]).unwrap();
            p.axpy_inplace(c, &verts[2]).unwrap();
            best = best.min(obj.loss(&p).unwrap());
        }
    }
    best
}

#[test]
fn pool_of_only_the_initial_model_stops_immediately() {
    let theta0 = p2(0.3, 0.4);
    let mut pool = CheckpointPool::new();
    pool.push_memory("base", theta0.clone()).unwrap();
    let obj = QuadraticObjective::new(p2(1.0, 1.0));
    for cfg in [FWConfig::hard(), FWConfig::soft()] {
        let res = run_fw(&cfg, &pool, &obj, &theta0).unwrap();
        assert_eq!(res.merged, theta0);
        assert_eq!(res.stop_reason, StopReason::GapBelowEpsilon);
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.trace[0].gap, 0.0);
        assert!(!res.header.initial_added);
        assert_eq!(res.header.initial_vertex, "base");
    }
}

#[test]
fn hard_fw_converges_on_planted_quadratic() {
    let (pool, verts) = triangle();
    let target = p2(0.3, 0.4); // 0.3 v0 + 0.3 v1 + 0.4 v2
    let obj = QuadraticObjective::new(target);
    let cfg = FWConfig { budget: 100, epsilon: 0.0, ..FWConfig::hard() };
    let res = run_fw(&cfg, &pool, &obj, &verts[0]).unwrap();
    let oracle = simplex_grid_min(&obj, &verts, 1e-3);
    let final_loss = obj.loss(&res.merged).unwrap();
    assert!(final_loss <= oracle + 1e-3, "{final_loss} vs {oracle}");
    let subopt = obj.loss(&verts[0]).unwrap() - oracle;
    let diam = 2f64.sqrt();
    assert!(res.min_gap() <= subopt / 100.0 + obj.smoothness() * diam * diam / 2.0);
}

#[test]
fn gap_vanishes_at_interior_optimum() {
    let (pool, verts) = triangle();
    let target = p2(0.25, 0.25);
    let obj = QuadraticObjective::new(target.clone());
    let (_, grad) = obj.loss_and_grad(&target).unwrap();
    let s = lmo_hard(&pool, &grad, LmoGranularity::Task).unwrap();
    let Selection::Vertex(i) = s else { panic!() };
    assert!(fw_gap(&grad, &target, &verts[i]).unwrap().abs() <= 1e-6);
    // and the iterates approach it
    let cfg = FWConfig { budget: 300, epsilon: 0.0, line_search_points: 2001, ..FWConfig::hard() };
    let res = run_fw(&cfg, &pool, &obj, &verts[1]).unwrap();
    assert!(res.min_gap() <= 1e-2, "{}", res.min_gap());
}

#[test]
fn single_step_with_two_point_grid_lands_on_vertex() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(1.2, 0.0));
    let cfg = FWConfig { budget: 1, epsilon: 0.0, line_search_points: 2, ..FWConfig::hard() };
    let res = run_fw(&cfg, &pool, &obj, &verts[0]).unwrap();
    assert_eq!(res.trace[0].gamma, Some(1.0));
    assert_eq!(res.trace[0].selected, vec!["v1".to_string()]);
    assert_eq!(res.merged, verts[1]);
}

#[test]
fn hard_loss_is_monotone_and_coordinates_reconstruct() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.6, 0.3));
    let theta0 = p2(0.1, 0.1);
    let cfg = FWConfig { budget: 30, epsilon: 0.0, ..FWConfig::hard() };
    let res = run_fw(&cfg, &pool, &obj, &theta0).unwrap();
    assert!(res.header.initial_added);
    assert_eq!(res.vertices.len(), 4);
    for r in &res.trace {
        assert!(r.loss_after <= r.loss_before + 1e-12);
        assert!(r.gap >= -1e-9);
        assert!(r.barycentric.as_ref().unwrap().is_valid(1e-9));
    }
    let coords = res.trace.last().unwrap().barycentric.as_ref().unwrap();
    let rebuilt = reconstruct(coords, &res.vertices, &theta0).unwrap();
    assert!(rebuilt.max_abs_diff(&res.merged).unwrap() <= 1e-6);
    let _ = verts;
}

#[test]
fn initial_model_matched_by_content_not_id() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.5, 0.5));
    let res = run_fw(&FWConfig::hard(), &pool, &obj, &verts[2].clone()).unwrap();
    assert!(!res.header.initial_added);
    assert_eq!(res.header.initial_vertex, "v2");
}

fn layered(a: f64, b: f64) -> ParamSet {
    ParamSet::from_layers([("p", vec![1], vec![a]), ("q", vec![1], vec![b])]).unwrap()
}

#[test]
fn layerwise_hard_fw_mixes_vertices_per_layer() {
    let mut pool = CheckpointPool::new();
    pool.push_memory("A", layered(1.0, 0.0)).unwrap();
    pool.push_memory("B", layered(0.0, 1.0)).unwrap();
    let obj = QuadraticObjective::new(layered(1.0, 1.0));
    let theta0 = layered(0.0, 0.0);
    let cfg = FWConfig { budget: 5, epsilon: 0.0, lmo: LmoGranularity::Layer, ..FWConfig::hard() };
    let res = run_fw(&cfg, &pool, &obj, &theta0).unwrap();
    // the per-layer hull contains the target, a whole-model hull does not
    assert!(obj.loss(&res.merged).unwrap() < 1e-12);
    let first = &res.trace[0];
    let sel = first.selected_per_layer.as_ref().unwrap();
    assert_eq!(sel["p"], vec!["A".to_string()]);
    assert_eq!(sel["q"], vec!["B".to_string()]);
    let coords = res.trace.last().unwrap().barycentric.as_ref().unwrap();
    assert!(coords.is_valid(1e-9));
    let rebuilt = reconstruct(coords, &res.vertices, &theta0).unwrap();
    assert!(rebuilt.max_abs_diff(&res.merged).unwrap() <= 1e-12);
}

#[test]
fn soft_variants_stay_feasible() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.45, 0.35));
    for mode in [SimplexMode::Unit, SimplexMode::Capped] {
        for lg in [LambdaGranularity::Scalar, LambdaGranularity::Layer] {
            for lmo in [LmoGranularity::Task, LmoGranularity::Layer] {
                let cfg = FWConfig {
                    variant: Variant::Soft,
                    budget: 8,
                    k: Some(2),
                    simplex_mode: mode,
                    lambda_granularity: lg,
                    lmo,
                    ..FWConfig::default()
                };
                let res = run_fw(&cfg, &pool, &obj, &verts[0]).unwrap();
                for r in &res.trace {
                    let c = r.barycentric.as_ref().unwrap();
                    assert!(c.is_valid(1e-9), "{cfg:?}");
                }
                let c = res.trace.last().unwrap().barycentric.as_ref().unwrap();
                let rebuilt = reconstruct(c, &res.vertices, &verts[0]).unwrap();
                assert!(rebuilt.max_abs_diff(&res.merged).unwrap() <= 1e-6);
            }
        }
    }
}

#[test]
fn external_merger_disables_hull_tracking() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.45, 0.35));
    let cfg = FWConfig {
        merge_fn: MergeFnKind::External,
        external_merger: Some("ties".into()),
        budget: 4,
        ..FWConfig::soft()
    };
    let res = run_fw(&cfg, &pool, &obj, &verts[0]).unwrap();
    assert!(res.header.feasibility_unverified);
    assert!(res.trace.iter().all(|r| r.barycentric.is_none()));
    let unknown = FWConfig { external_merger: Some("dare".into()), ..cfg };
    assert!(matches!(run_fw(&unknown, &pool, &obj, &verts[0]), Err(Error::Config(_))));
}

#[test]
fn config_errors_surface() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.5, 0.5));
    let zero_budget = FWConfig { budget: 0, ..FWConfig::hard() };
    assert!(matches!(run_fw(&zero_budget, &pool, &obj, &verts[0]), Err(Error::Config(_))));
    let big_k = FWConfig { k: Some(9), ..FWConfig::soft() };
    assert!(matches!(run_fw(&big_k, &pool, &obj, &verts[0]), Err(Error::Config(_))));
    let wrong = ParamSet::vector("y", vec![0.0, 0.0]);
    assert!(matches!(run_fw(&FWConfig::hard(), &pool, &obj, &wrong), Err(Error::Schema(_))));
}

#[test]
fn trace_round_trips_with_defaults_in_header() {
    let (pool, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.45, 0.35));
    let res = run_fw(&FWConfig { budget: 3, ..FWConfig::soft() }, &pool, &obj, &verts[0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    res.write_trace(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "header");
    assert_eq!(first["config"]["inner_steps"], 50);
    assert_eq!(first["config"]["line_search_points"], 21);
    assert_eq!(first["resolved_k"], 3);
    assert_eq!(text.lines().count(), 1 + res.trace.len());
    let (header, records) = read_trace(&path).unwrap();
    assert_eq!(header, res.header);
    assert_eq!(records, res.trace);
}

#[test]
fn file_backed_pool_streams_one_checkpoint_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..6 {
        let v = p2(i as f64, (i * i) as f64 * 0.1);
        fw_merge::checkpoint::save_checkpoint(&v, dir.path().join(format!("c{i}.fwck"))).unwrap();
    }
    let pool = CheckpointPool::from_dir(dir.path()).unwrap();
    pool.stats().reset();
    let scores = fw_merge::fw::linear_scores(&pool, &p2(1.0, -1.0)).unwrap();
    assert_eq!(scores.len(), 6);
    assert_eq!(pool.stats().loads(), 6);
    assert_eq!(pool.stats().peak(), 1);
}

#[test]
fn two_formulations_agree() {
    // min over the coefficient grid == min over points of the hull, up to resolution
    let (_, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.8, 0.7));
    let coeff = simplex_grid_min(&obj, &verts, 1e-2);
    let h = 1e-2;
    let mut hull_min = f64::INFINITY;
    for i in 0..=100 {
        for j in 0..=100 {
            let (x, y) = (i as f64 * h, j as f64 * h);
            if x + y <= 1.0 + 1e-12 {
                hull_min = hull_min.min(obj.loss(&p2(x, y)).unwrap());
            }
        }
    }
    assert!((coeff - hull_min).abs() <= 2.0 * h, "{coeff} vs {hull_min}");
    assert!((hull_min - 0.125).abs() <= 2.0 * h); // squared distance to the edge x + y = 1
}

#[test]
fn soft_inner_beats_best_vertex_on_quadratics() {
    let (_, verts) = triangle();
    let obj = QuadraticObjective::new(p2(0.9, 0.05));
    let theta = p2(0.2, 0.2);
    let refs: Vec<&ParamSet> = vec![&verts[1], &verts[0], &verts[2]];
    let sol = inner_optimize_lambda(&obj, &theta, &refs, &FWConfig::soft()).unwrap();
    let e_best = LambdaWeights::Scalar(SimplexWeights::vertex(3, 0, SimplexMode::Unit).unwrap());
    let phi_best = obj.loss(&soft_combination(&theta, &refs, &e_best).unwrap()).unwrap();
    assert!(sol.objective <= phi_best + 1e-9);
    let merged = merge_soft(&theta, &refs, &sol.weights).unwrap();
    assert_eq!(obj.loss(&merged).unwrap(), sol.objective);
}

proptest! {
    #[test]
    fn lmo_selection_is_scale_invariant(
        vs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..6),
        g in prop::collection::vec(-3.0f64..3.0, 3),
        c in 0.01f64..100.0,
    ) {
        let mut pool = CheckpointPool::new();
        for (i, v) in vs.iter().enumerate() {
            pool.push_memory(format!("v{i}"), ParamSet::vector("x", v.clone())).unwrap();
        }
        let grad = ParamSet::vector("x", g.clone());
        let scores = fw_merge::fw::linear_scores(&pool, &grad).unwrap();
        let mut sorted: Vec<f64> = scores.iter().map(|s| s.1).collect();
        sorted.sort_by(f64::total_cmp);
        // a strict minimum keeps its identity under positive scaling
        prop_assume!(sorted[1] - sorted[0] > 1e-9 * sorted[0].abs().max(1.0));
        let a = lmo_hard(&pool, &grad, LmoGranularity::Task).unwrap();
        let b = lmo_hard(&pool, &grad.scale(c).unwrap(), LmoGranularity::Task).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn soft_merge_identity(
        theta in prop::collection::vec(-5.0f64..5.0, 4),
        vs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..5),
        raw in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let k = vs.len();
        let lam = fw_merge::project_simplex(&raw[..k], SimplexMode::Capped).unwrap();
        let theta = ParamSet::vector("x", theta);
        let verts: Vec<ParamSet> = vs.into_iter().map(|v| ParamSet::vector("x", v)).collect();
        let refs: Vec<&ParamSet> = verts.iter().collect();
        let w = LambdaWeights::Scalar(lam.clone());
        let lhs = merge_soft(&theta, &refs, &w).unwrap();
        let mut rhs = theta.scale(1.0 - lam.sum()).unwrap();
        for (v, &l) in verts.iter().zip(lam.values()) {
            rhs.axpy_inplace(l, v).unwrap();
        }
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
    }
}
