mod common;

use common::*;
use proptest::prelude::*;
use transship_core::embedding::DijkstraOracle;
use transship_core::gen;
use transship_core::graph::{dijkstra, flow_cost, minimum_spanning_tree, route_on_tree, validate_potential, Graph};
use transship_core::oracles::exact_transshipment;
use transship_core::pipeline::{build_preconditioner, transship, PipelineConfig, Preconditioner};
use transship_core::solver::*;

fn precondition(g: &Graph, seed: u64) -> Preconditioner {
    let cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    build_preconditioner(g, &DijkstraOracle, &cfg).unwrap()
}

fn opt(g: &Graph, b: &[f64]) -> f64 {
    exact_transshipment(g, b).unwrap().opt_cost
}

fn residual_norm(g: &Graph, f: &[f64], b: &[f64]) -> f64 {
    divergence_by_scan(g, f).iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn zero_demand_is_a_zero_flow() {
    let g = gen::random_connected(10, 20, 5, 1);
    let p = precondition(&g, 0);
    let cfg = SolverConfig::default();
    for t in [1e-3, 1.0, 1e4] {
        match mwu_round(&p.matrix, &g, &[0.0; 10], t, 0.1, p.kappa, &cfg).unwrap() {
            MwuOutcome::Flow { flow, residual, rounds } => {
                assert_eq!(rounds, 1);
                assert_eq!(residual, 0.0);
                assert!(flow.iter().all(|&x| x == 0.0));
            }
            other => panic!("expected a flow, got {other:?}"),
        }
    }
    let r = solve_transshipment(&g, &[0.0; 10], 0.1, &p.matrix, p.kappa, &cfg).unwrap();
    assert_eq!(r.primal_cost, 0.0);
    assert_eq!(r.dual_value, 0.0);
}

#[test]
fn single_edge_flow_branch() {
    let g = Graph::new(2, vec![(0, 1, 1.0)]).unwrap();
    let b = [-1.0, 1.0];
    let eps = 0.1;
    for seed in 0..10 {
        let p = precondition(&g, seed);
        let cfg = SolverConfig { seed, ..SolverConfig::default() };
        match mwu_round(&p.matrix, &g, &b, 2.0, eps, p.kappa, &cfg).unwrap() {
            MwuOutcome::Flow { flow, .. } => {
                assert!(flow_cost(&g, &flow) <= 2.0 + 1e-12);
                let div = divergence_by_scan(&g, &flow);
                let r: Vec<f64> = div.iter().zip(&b).map(|(x, y)| x - y).collect();
                assert!(p.matrix.estimate_cost(&r) < 2.0 * eps);
            }
            other => panic!("seed {seed}: expected a flow, got {other:?}"),
        }
    }
}

#[test]
fn potential_branch_far_below_opt() {
    let mut hits = 0;
    for seed in 0..10 {
        let g = gen::random_connected(16, 40, 10, seed);
        let b = gen::random_demands(16, 15, seed);
        let o = opt(&g, &b);
        let p = precondition(&g, seed);
        let out = mwu_round(&p.matrix, &g, &b, o / 100.0, 0.1, p.kappa, &SolverConfig::default()).unwrap();
        if let MwuOutcome::Potential { phi, .. } = out {
            assert!(g.edges().iter().all(|e| (phi[e.u] - phi[e.v]).abs() <= e.w * (1.0 + 1e-9)));
            let v: f64 = phi.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!(rel_close(v, o / 100.0, 1e-9));
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits} of 10");
}

#[test]
fn mwu_rejects_bad_parameters() {
    let g = Graph::new(2, vec![(0, 1, 1.0)]).unwrap();
    let p = precondition(&g, 0);
    let cfg = SolverConfig::default();
    let b = [-1.0, 1.0];
    assert!(mwu_round(&p.matrix, &g, &b, 1.0, 0.1, 0.0, &cfg).is_err());
    assert!(mwu_round(&p.matrix, &g, &b, 1.0, 0.0, 1.0, &cfg).is_err());
    assert!(mwu_round(&p.matrix, &g, &b, 1.0, 1.5, 1.0, &cfg).is_err());
    assert!(mwu_round(&p.matrix, &g, &b, 0.0, 0.1, 1.0, &cfg).is_err());
    assert!(mwu_round(&p.matrix, &g, &b, -1.0, 0.1, 1.0, &cfg).is_err());
}

#[test]
fn solve_rejects_bad_inputs() {
    let g = Graph::new(4, vec![(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
    let h = gen::path(4, 1.0);
    let p = precondition(&h, 0);
    let cfg = SolverConfig::default();
    assert!(solve_transshipment(&g, &[-1.0, 1.0, 0.0, 0.0], 0.1, &p.matrix, p.kappa, &cfg).is_err());
    assert!(solve_transshipment(&h, &[-1.0, 2.0, 0.0, 0.0], 0.1, &p.matrix, p.kappa, &cfg).is_err());
}

#[test]
fn three_vertex_path() {
    // s - a - b with unit weights, two units leaving s.
    let g = gen::path(3, 1.0);
    let b = [-2.0, 1.0, 1.0];
    let p = precondition(&g, 0);
    let r = solve_transshipment(&g, &b, 0.1, &p.matrix, p.kappa, &SolverConfig::default()).unwrap();
    assert!(r.primal_cost >= 3.0 - 1e-9 && r.primal_cost <= 3.3, "{}", r.primal_cost);
    assert!(residual_norm(&g, &r.flow, &b) <= 1e-9 * 4.0);
    assert!(r.dual_value <= 3.0 + 1e-9);
}

#[test]
fn tiny_epsilon_falls_back_to_exact() {
    let g = gen::random_connected(12, 30, 9, 4);
    let b = gen::random_demands(12, 11, 4);
    let p = precondition(&g, 0);
    let r = solve_transshipment(&g, &b, 1e-3, &p.matrix, p.kappa, &SolverConfig::default()).unwrap();
    assert!(r.used_exact);
    assert!(certifies_optimum(&g, &b, &r.flow, &r.potential, 1e-9));
}

#[test]
fn sixty_four_vertex_instances_within_one_point_one() {
    let mut good = 0;
    for seed in 0..20 {
        let g = gen::random_connected(64, 256, 20, seed);
        let b = gen::random_demands(64, 63, seed);
        let o = opt(&g, &b);
        let cfg = PipelineConfig { seed, epsilon: 0.1, ..PipelineConfig::default() };
        let r = transship(&g, &b, &DijkstraOracle, &cfg).unwrap();
        assert!(r.dual_value <= o * (1.0 + 1e-9) && o <= r.primal_cost * (1.0 + 1e-9));
        if r.primal_cost <= 1.1 * o {
            good += 1;
        }
    }
    assert!(good >= 19, "{good} of 20");
}

#[test]
fn repair_of_exact_flow_is_identity() {
    let g = gen::random_connected(12, 24, 7, 2);
    let b = gen::random_demands(12, 5, 2);
    let f = exact_transshipment(&g, &b).unwrap().witness_flow.unwrap();
    let (out, used) = repair_residual(&g, &f, &b, 3, |_| panic!("no residual to repair")).unwrap();
    assert_eq!(used, 0);
    assert_eq!(out, f);
}

#[test]
fn repair_of_zero_flow_is_tree_routing() {
    for seed in 0..10 {
        let g = gen::random_connected(20, 60, 15, seed);
        let b = gen::random_demands(20, 9, seed);
        let (f, used) = repair_residual(&g, &vec![0.0; g.m()], &b, 0, |_| unreachable!()).unwrap();
        assert_eq!(used, 0);
        let tree = minimum_spanning_tree(&g).unwrap();
        assert_eq!(f, route_on_tree(&g, &tree, &b).unwrap());
        assert!(residual_norm(&g, &f, &b) <= 1e-9 * 100.0);
        assert!(flow_cost(&g, &f) <= 19.0 * opt(&g, &b) * (1.0 + 1e-9));
    }
}

#[test]
fn repair_rounds_halve_the_residual() {
    let mut good = 0;
    let seeds = 10;
    for seed in 0..seeds {
        let g = gen::random_connected(24, 72, 12, seed);
        let b = gen::random_demands(24, 23, seed);
        let p = precondition(&g, seed);
        let cfg = SolverConfig::default();
        let mut costs = vec![opt(&g, &b)];
        let f0 = vec![0.0; g.m()];
        repair_residual(&g, &f0, &b, 3, |r| {
            let o = opt(&g, r);
            costs.push(o);
            approximate_flow(&g, r, &p.matrix, 0.1, p.kappa, &cfg)
        })
        .unwrap();
        // costs[0] is opt(b) and costs[1] is the same demand seen by the first round.
        let shrinks = costs[1..].windows(2).all(|w| w[1] <= 0.5 * w[0] + 1e-9 * costs[0]);
        if shrinks {
            good += 1;
        }
    }
    assert!(good * 10 >= seeds * 9, "{good} of {seeds}");
}

#[test]
fn cancel_cycles_on_a_triangle() {
    let g = Graph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
    let f = cancel_cycles(&g, &[2.0, 1.0, 1.0]);
    assert_eq!(f, vec![1.0, 0.0, 0.0]);
}

fn instance() -> impl Strategy<Value = (Graph, Vec<f64>, u64)> {
    (6usize..14, 0u64..1000).prop_map(|(n, seed)| {
        let g = gen::random_connected(n, 3 * n, 9, seed);
        let b = gen::random_demands(n, n as i64 - 1, seed);
        (g, b, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mwu_flow_support_is_acyclic((g, b, seed) in instance(), ratio in 1.0f64..4.0) {
        let p = precondition(&g, seed);
        let t = ratio * opt(&g, &b).max(1.0);
        if let MwuOutcome::Flow { flow, .. } = mwu_round(&p.matrix, &g, &b, t, 0.1, p.kappa, &SolverConfig::default()).unwrap() {
            prop_assert!(flow_support_acyclic(&g, &flow));
            prop_assert!(flow_cost(&g, &flow) <= t * (1.0 + 1e-9));
        }
    }

    #[test]
    fn branch_types_bracket_opt((g, b, seed) in instance(), ratio in 0.2f64..2.0) {
        let p = precondition(&g, seed);
        let o = opt(&g, &b);
        let t = ratio * o.max(1.0);
        match mwu_round(&p.matrix, &g, &b, t, 0.1, p.kappa, &SolverConfig::default()).unwrap() {
            MwuOutcome::Potential { .. } => prop_assert!(t <= o * (1.0 + 1e-9)),
            MwuOutcome::Stalled { value, .. } => prop_assert!(value <= o * (1.0 + 1e-9)),
            MwuOutcome::Flow { flow, .. } => prop_assert!(flow_cost(&g, &flow) <= t * (1.0 + 1e-9)),
        }
    }

    #[test]
    fn solve_reports_sandwich_and_exact_flow((g, b, seed) in instance()) {
        let p = precondition(&g, seed);
        let eps = 0.1;
        let r = solve_transshipment(&g, &b, eps, &p.matrix, p.kappa, &SolverConfig::default()).unwrap();
        let o = opt(&g, &b);
        let norm: f64 = b.iter().map(|x| x.abs()).sum();
        prop_assert!(residual_norm(&g, &r.flow, &b) <= 1e-9 * norm);
        prop_assert!(r.dual_value <= o * (1.0 + 1e-9));
        prop_assert!(o <= r.primal_cost * (1.0 + 1e-9));
        prop_assert!(r.primal_cost <= (1.0 + eps) * r.dual_value * (1.0 + 1e-9), "cost {} dual {}", r.primal_cost, r.dual_value);
        prop_assert!(g.edges().iter().all(|e| (r.potential[e.u] - r.potential[e.v]).abs() <= e.w * (1.0 + 1e-9)));
        prop_assert!(flow_support_acyclic(&g, &r.flow));
    }

    #[test]
    fn cancel_cycles_keeps_divergence((g, _b, seed) in instance()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..g.m()).map(|_| rng.gen_range(-5i32..=5) as f64).collect();
        let c = cancel_cycles(&g, &f);
        let d0 = divergence_by_scan(&g, &f);
        let d1 = divergence_by_scan(&g, &c);
        prop_assert!(d0.iter().zip(&d1).all(|(x, y)| (x - y).abs() <= 1e-9));
        prop_assert!(flow_cost(&g, &c) <= flow_cost(&g, &f) + 1e-9);
        prop_assert!(flow_support_acyclic(&g, &c));
    }

    #[test]
    fn polish_keeps_feasibility_and_objective((g, b, seed) in instance(), shrink in 0.0f64..1.0) {
        let (d, _) = dijkstra(&g, &[(seed as usize) % g.n()]).unwrap();
        let mut phi: Vec<f64> = d.iter().map(|x| shrink * x).collect();
        let before = b.iter().zip(&phi).map(|(x, y)| x * y).sum::<f64>();
        let after = polish_potential(&g, &b, &mut phi, g.n());
        prop_assert!(validate_potential(&g, &phi));
        prop_assert!(after >= before - 1e-9 * before.abs().max(1.0));
        prop_assert!(after <= opt(&g, &b) * (1.0 + 1e-9));
    }
}
