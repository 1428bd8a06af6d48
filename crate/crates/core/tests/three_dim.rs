//! Three-dimensional exercises of the dimension-generic machinery: ball and
//! shell quadrature, the solver, densities, symmetry orders up to n, and a
//! covering run with a planar witness.

use onephase::corona::{key_packing_cover, FnOracle, ProbeCache, TreeConfig};
use onephase::field::{
    ball_integral, free_boundary_points, sphere_integral_sq, GridSpec, QField, ScalarField,
};
use onephase::geom::unit_ball_volume;
use onephase::solver::{minimize, Problem, Seed};
use onephase::strata::{symmetry_distance, SymmetryQuery};
use onephase::weiss::weiss_density;
use std::f64::consts::PI;

fn cube_grid(half: f64, cells: usize) -> GridSpec {
    GridSpec::new(
        vec![-half, -half, -half],
        vec![2.0 * half; 3],
        vec![cells; 3],
    )
    .unwrap()
}

#[test]
fn ball_and_sphere_quadrature_3d() {
    let spec = cube_grid(1.5, 96); // h = 1/32
    let ones = vec![1.0; spec.node_count()];
    let vol = ball_integral(&spec, &ones, &[0.0, 0.0, 0.0], 1.0).unwrap();
    let rel = (vol - unit_ball_volume(3)).abs() / unit_ball_volume(3);
    assert!(rel < 2.0 * spec.h, "ball volume rel err {rel}");

    let one = ScalarField::from_fn(spec.clone(), |_| 1.0);
    let area = sphere_integral_sq(&one, &[0.0, 0.0, 0.0], 1.0).unwrap();
    let rel = (area - 4.0 * PI).abs() / (4.0 * PI);
    assert!(rel < 4.0 * spec.h, "sphere area rel err {rel}");
}

#[test]
fn half_plane_density_3d() {
    // W of the half-plane model is omega_3 / 2 = 2 pi / 3 at every radius
    let spec = cube_grid(1.5, 96);
    let u = ScalarField::from_fn(spec.clone(), |x| x[0].max(0.0));
    let q = QField::constant(spec.clone(), 1.0).unwrap();
    let y = [0.5 * spec.h, 0.0, 0.0];
    let target = unit_ball_volume(3) / 2.0;
    for r in [0.5, 1.0] {
        let w = weiss_density(&u, &q, &y, r).unwrap();
        let rel = (w - target).abs() / target;
        assert!(rel < 0.05, "r = {r}: W = {w}, rel err {rel}");
    }
}

#[test]
fn solver_recovers_half_plane_3d() {
    let spec = cube_grid(1.0, 24); // h = 1/12, small but honest
    let data = ScalarField::from_fn(spec.clone(), |x| x[0].max(0.0));
    let p = Problem {
        spec: spec.clone(),
        q: QField::constant(spec.clone(), 1.0).unwrap(),
        boundary_data: data,
        max_sweeps: 2000,
        energy_tol: 1e-12,
    };
    let (u, report) = minimize(&p, Seed::HarmonicExtension).unwrap();
    assert!(report.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let sup = (0..spec.node_count())
        .map(|i| {
            let x = spec.node_coord(i);
            (u.values[i] - x[0].max(0.0)).abs()
        })
        .fold(0.0f64, f64::max);
    assert!(sup <= 5.0 * spec.h, "sup err {sup}");
    assert!(!free_boundary_points(&u).is_empty());
}

#[test]
fn symmetry_orders_3d() {
    // the half-plane is invariant along the 2-plane spanned by e2, e3 and
    // 1-homogeneous about any interface point: (2, eps)-symmetric, and at
    // order 3 only the zero model competes, which nondegeneracy rules out
    let spec = cube_grid(1.0, 48); // h = 1/24
    let u = ScalarField::from_fn(spec.clone(), |x| x[0].max(0.0));
    let center = vec![0.5 * spec.h, 0.0, 0.0];
    let d2 = symmetry_distance(
        &u,
        &SymmetryQuery { center: center.clone(), r: 0.5, k: 2, eps: 0.05, plane_samples: 4 },
    )
    .unwrap();
    assert!(d2.distance < 0.01, "order-2 distance {}", d2.distance);
    // best plane is orthogonal to e1
    assert!(d2.best_plane.basis.iter().all(|v| v[0].abs() < 0.05), "{:?}", d2.best_plane);

    let d3 = symmetry_distance(
        &u,
        &SymmetryQuery { center, r: 0.5, k: 3, eps: 0.05, plane_samples: 1 },
    )
    .unwrap();
    assert!(d3.distance > 10.0 * d2.distance, "order-3 {} vs order-2 {}", d3.distance, d2.distance);
}

#[test]
fn covering_run_with_planar_witness_3d() {
    // stratum on a 2-plane in R^3, density E on a line inside it and lower
    // elsewhere: the root is Bad with a 1-dimensional witness (k - 1 = 1)
    let mut points: Vec<Vec<f64>> = Vec::new();
    for i in 0..13 {
        for j in 0..13 {
            points.push(vec![-0.48 + 0.08 * i as f64, -0.48 + 0.08 * j as f64, 0.0]);
        }
    }
    let e = 1.5;
    let cfg = TreeConfig {
        rho: 0.1,
        eta: 0.04,
        gamma: 1.0,
        eta_prime: 0.2,
        e_density: Some(e),
        stop_scale: 0.05,
        k: 2,
        eps: 0.05,
        c_packing_budget: 100.0,
        probe_tol: 0.0,
    };
    // high density within a narrow band around the x-axis line
    let oracle = FnOracle(move |p: &[f64], _r: f64| if p[1].abs() <= 0.05 { e } else { e - 0.3 });
    let cache = ProbeCache::new(&oracle, &points);
    let all: Vec<usize> = (0..points.len()).collect();
    let (cover, report) =
        key_packing_cover(&cache, &all, &[0.0, 0.0, 0.0], 0.7, &cfg).unwrap();
    assert!(report.covering_ok);
    assert!(report.packing_ok, "packing {}", report.packing_sum);
    assert!(report.drop_ok);
    assert!(!cover.balls.is_empty());
    // the alternation saw at least one genuine bad phase
    assert!(
        report.ledger.generations.iter().any(|g| g.leaf_kind == "Bad"),
        "{:?}",
        report.ledger.generations
    );
}
