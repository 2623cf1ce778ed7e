use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbandrive_core::map::{GoalPoint, Road, Route, StartPose, WorldMap};
use urbandrive_core::prediction::{
    predict_all, pure_pursuit_rollout, ObstacleKind, ObstacleState, PredictionParams, RoadGraph,
};

fn road(id: u32, pts: &[[f64; 2]], successors: &[u32]) -> Road {
    Road { id, waypoints: pts.to_vec(), lane_width: 3.5, successors: successors.to_vec() }
}

fn town() -> WorldMap {
    WorldMap {
        roads: vec![
            road(1, &[[0.0, 0.0], [40.0, 0.0], [80.0, 5.0]], &[2, 3]),
            road(2, &[[80.0, 5.0], [120.0, 30.0]], &[4]),
            road(3, &[[80.0, 5.0], [130.0, 0.0]], &[]),
            road(4, &[[120.0, 30.0], [120.0, 80.0], [60.0, 90.0]], &[]),
            road(5, &[[0.0, 20.0], [60.0, 60.0]], &[]),
        ],
        traffic_controls: vec![],
        route: Route { roads: vec![1], start: StartPose { x: 0.0, y: 0.0, yaw: 0.0 }, goal: GoalPoint { x: 80.0, y: 5.0 } },
    }
}

fn brute_nearest(g: &RoadGraph, x: f64, y: f64) -> usize {
    g.nodes()
        .iter()
        .map(|n| ((n.x - x).powi(2) + (n.y - y).powi(2), n.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .unwrap()
        .1
}

#[test]
fn spatial_query_matches_brute_force() {
    let g = RoadGraph::build(&town(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (x, y) = (rng.random_range(-20.0..150.0), rng.random_range(-20.0..100.0));
        assert_eq!(g.nearest(x, y), Some(brute_nearest(&g, x, y)), "query ({x}, {y})");
    }
    for n in g.nodes() {
        assert_eq!(g.nearest(n.x, n.y), Some(brute_nearest(&g, n.x, n.y)));
    }
}

#[test]
fn extracted_paths_are_simple_and_directed() {
    let g = RoadGraph::build(&town(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let start = rng.random_range(0..g.nodes().len());
        let desired = rng.random_range(1.0..120.0);
        for p in g.extract_paths(start, desired, 1.0) {
            let mut seen = std::collections::HashSet::new();
            assert!(p.nodes.iter().all(|n| seen.insert(*n)), "repeated node");
            let mut len = 0.0;
            for w in p.nodes.windows(2) {
                let e = g.out_edges(w[0]).iter().find(|e| e.to == w[1]).expect("edge follows direction");
                len += e.length;
            }
            assert!((len - p.length).abs() < 1e-9);
            assert!(p.truncated || (p.length - desired).abs() <= 1.0);
        }
    }
}

fn vehicle(y: f64, speed: f64) -> ObstacleState {
    ObstacleState { id: 3, kind: ObstacleKind::Vehicle, x: 0.0, y, yaw: 0.0, speed, accel: 0.0, width: 2.0, length: 4.5 }
}

#[test]
fn offset_start_converges() {
    let path: Vec<(f64, f64)> = (0..=80).map(|i| (i as f64, 0.0)).collect();
    let params = PredictionParams::default();
    for dt in [0.1, 0.01] {
        let pts = pure_pursuit_rollout(&vehicle(1.0, 5.0), &path, 0.0, 5.0, dt, &params);
        let err: Vec<f64> = pts.iter().map(|p| p.y.abs()).collect();
        let below = err.iter().position(|e| *e < 0.1).expect("cross-track error falls below 0.1 m");
        for w in err[..=below].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "error grew before converging");
        }
        assert!(err[below..].iter().all(|e| *e < 0.1), "dt {dt}: error left the 0.1 m band");
    }
    // The coarse rollout stays close to a fine-step reference.
    let coarse = pure_pursuit_rollout(&vehicle(1.0, 5.0), &path, 0.0, 5.0, 0.1, &params);
    let fine = pure_pursuit_rollout(&vehicle(1.0, 5.0), &path, 0.0, 5.0, 0.01, &params);
    for (k, p) in coarse.iter().enumerate() {
        let q = fine[k * 10];
        assert!((p.x - q.x).hypot(p.y - q.y) < 0.1, "t {}: coarse/fine gap", p.t);
    }
}

#[test]
fn rollouts_stay_in_corridor_after_convergence() {
    let map = WorldMap {
        roads: vec![road(1, &[[0.0, 0.0], [300.0, 0.0]], &[])],
        traffic_controls: vec![],
        route: Route { roads: vec![1], start: StartPose { x: 0.0, y: 0.0, yaw: 0.0 }, goal: GoalPoint { x: 300.0, y: 0.0 } },
    };
    let g = RoadGraph::build(&map, 1.0).unwrap();
    let params = PredictionParams::default();
    for (y, v) in [(0.0, 10.0), (0.8, 4.0), (-1.5, 12.0)] {
        for p in predict_all(&[vehicle(y, v)], &g, &params) {
            for q in p.points.iter().filter(|q| q.t >= 2.0) {
                assert!(q.y.abs() <= 2.0 * g.spacing().max(0.5), "y {} at t {}", q.y, q.t);
            }
        }
    }
}

#[test]
fn prediction_is_deterministic_and_ordered() {
    let g = RoadGraph::build(&town(), 1.0).unwrap();
    let mut obs = vec![vehicle(0.0, 8.0), ObstacleState { id: 1, x: 60.0, y: 3.0, ..vehicle(0.0, 6.0) }];
    obs[0].x = 70.0;
    obs[0].y = 4.0;
    let a = predict_all(&obs, &g, &PredictionParams::default());
    obs.reverse();
    let b = predict_all(&obs, &g, &PredictionParams::default());
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].obstacle <= w[1].obstacle));
    assert!(a.iter().all(|p| p.points.windows(2).all(|w| w[1].t > w[0].t)));
}
