use driftstop_core::integral::{residual, Engine, McConfig, ResidualOptions};
use driftstop_core::io::{read_boundary_csv, write_boundary_csv};
use driftstop_core::pde::solve_value;
use driftstop_core::sim::simulate_value;
use driftstop_core::{Boundary, FilterModel, GridSpec, Measure, Prior, SimConfig, StoppingRule};

fn normal() -> FilterModel {
    FilterModel::new(Prior::normal(0.0, 0.5), 0.2).unwrap()
}

fn coarse_boundary(m: &FilterModel) -> Boundary {
    let grid = GridSpec::for_model(m, 1.0, 400, 200).unwrap();
    solve_value(m, &grid).unwrap().1
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn boundary_survives_a_csv_round_trip() {
    let b = coarse_boundary(&normal());
    let mut buf = Vec::new();
    write_boundary_csv(&mut buf, &b).unwrap();
    let back = read_boundary_csv(buf.as_slice()).unwrap();
    assert_eq!(back, b);
}

#[test]
fn residual_is_identical_across_thread_pools() {
    let m = normal();
    let b = coarse_boundary(&m);
    let opts = ResidualOptions { engine: Engine::Gauss { nodes: 32 }, stride: 20 };
    let one = in_pool(1, || residual(&m, &b, &opts).unwrap());
    let three = in_pool(3, || residual(&m, &b, &opts).unwrap());
    assert_eq!(one, three);
}

#[test]
fn monte_carlo_residual_agrees_with_quadrature() {
    let m = normal();
    let b = coarse_boundary(&m);
    let gauss = residual(&m, &b, &ResidualOptions { engine: Engine::Gauss { nodes: 48 }, stride: 50 }).unwrap();
    let mc_cfg = McConfig { n_paths: 4_000, n_steps: 400, seed: 5 };
    let mc = residual(&m, &b, &ResidualOptions { engine: Engine::MonteCarlo(mc_cfg), stride: 50 }).unwrap();
    let se = mc.stderr.as_ref().unwrap();
    assert_eq!(gauss.t_nodes, mc.t_nodes);
    for (((t, g), r), se) in mc.t_nodes.iter().zip(&gauss.residuals).zip(&mc.residuals).zip(se) {
        let gap = (g - r).abs();
        assert!(gap <= 5.0 * se + 5e-3, "t = {t}: {gap} vs se {se}");
    }
}

#[test]
fn simulation_is_identical_across_thread_pools() {
    let m = normal();
    let rule = StoppingRule::BoundaryRule { boundary: coarse_boundary(&m) };
    for measure in [Measure::P, Measure::Q] {
        let cfg = SimConfig { n_paths: 2_000, n_steps: 400, seed: 11, measure };
        let one = in_pool(1, || simulate_value(&m, 1.0, &rule, &cfg).unwrap());
        let four = in_pool(4, || simulate_value(&m, 1.0, &rule, &cfg).unwrap());
        assert_eq!(one, four);
    }
}

#[test]
fn solved_value_agrees_with_simulation() {
    let m = normal();
    let grid = GridSpec::for_model(&m, 1.0, 1000, 200).unwrap();
    let (s, b) = solve_value(&m, &grid).unwrap();
    let v0 = s.value_at(0.0, 0.0).unwrap();
    let cfg = SimConfig { n_paths: 20_000, n_steps: 1000, seed: 3, measure: Measure::P };
    let est = simulate_value(&m, 1.0, &StoppingRule::BoundaryRule { boundary: b }, &cfg).unwrap();
    // Discrete monitoring can only lose value.
    assert!(est.mean <= v0 + 4.0 * est.stderr, "{} vs {v0}", est.mean);
    assert!(est.mean >= v0 - 4.0 * est.stderr - 5e-3, "{} vs {v0}", est.mean);
}

#[test]
fn discounting_is_a_drift_shift() {
    let r = 0.05;
    let shifted = FilterModel::new(Prior::normal(0.1, 0.5).shift(r).unwrap(), 0.3).unwrap();
    let direct = FilterModel::new(Prior::normal(0.1 - r, 0.5), 0.3).unwrap();
    let grid = GridSpec::for_model(&direct, 1.0, 400, 200).unwrap();
    let (a, _) = solve_value(&shifted, &grid).unwrap();
    let (b, _) = solve_value(&direct, &grid).unwrap();
    for (ra, rb) in a.v.iter().zip(&b.v) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }
}
