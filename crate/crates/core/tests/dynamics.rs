use rand::{Rng, SeedableRng};
use rd_optctl::dynamics::*;
use rd_optctl::fem::{DiffusionField, FeField};
use rd_optctl::mesh::{build_interval_mesh, triangulate_grid, GridImage, Mesh};
use rd_optctl::optimize::coupling;
use rd_optctl::presets::default_benchmark;

fn logistic(t: f64) -> f64 {
    let (rho, u0, r) = (1.0, 0.5, 0.7);
    r * u0 / (rho * u0 + (r - rho * u0) * (-r * t).exp())
}

fn problem(mesh: Mesh, rho: f64, d: f64, t: f64, n: usize, u0: f64) -> Problem {
    let params = ModelParams::new(rho, DiffusionField::uniform(d).unwrap()).unwrap();
    let u0 = FeField::constant(mesh.n_nodes(), u0);
    Problem::new(mesh, params, TimeGrid::new(t, n).unwrap(), u0).unwrap()
}

fn logistic_max_error(n_steps: usize) -> f64 {
    let p = problem(build_interval_mesh(4, 0.0, 1.0).unwrap(), 1.0, 0.1, 1.0, n_steps, 0.5);
    let c = ControlTrajectory::constant(p.grid(), 0.3).unwrap();
    let s = solve_state(&p, &c).unwrap();
    (0..=n_steps)
        .map(|k| {
            let exact = logistic(p.grid().time(k));
            s.field(k).values().iter().map(|u| (u - exact).abs() / exact).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[test]
fn logistic_oracle_and_first_order_rate() {
    let e1 = logistic_max_error(1000);
    let e2 = logistic_max_error(2000);
    assert!(e1 < 1e-4, "{e1}");
    let ratio = e1 / e2;
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
}

#[test]
fn uniform_state_stays_uniform_in_2d() {
    let mesh = triangulate_grid(&GridImage::new(7, 5, vec![1.0; 35]).unwrap(), 0.0).unwrap();
    let p = problem(mesh, 0.8, 0.5, 2.0, 40, 0.3);
    let c: Vec<f64> = p.grid().times().map(|t| 0.2 * (1.0 + t.sin())).collect();
    let s = solve_state(&p, &ControlTrajectory::new(c).unwrap()).unwrap();
    for f in s.fields() {
        assert!(f.max() - f.min() <= 1e-10);
    }
}

/// Backward RK4 for `w' = 1 - a w`, `w(T) = 0`.
fn scalar_adjoint_rk4(a: f64, t: f64, n: usize) -> f64 {
    let h = -t / n as f64;
    let f = |w: f64| 1.0 - a * w;
    let mut w = 0.0;
    for _ in 0..n {
        let k1 = f(w);
        let k2 = f(w + 0.5 * h * k1);
        let k3 = f(w + 0.5 * h * k2);
        let k4 = f(w + h * k3);
        w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    w
}

fn frozen_adjoint_w0(t: f64, n_steps: usize) -> (Vec<f64>, f64) {
    let (rho, u, c) = (0.5, 0.8, 0.1);
    let p = problem(build_interval_mesh(6, 0.0, 1.0).unwrap(), rho, 0.2, t, n_steps, u);
    let control = ControlTrajectory::constant(p.grid(), c).unwrap();
    let state = SpaceTimeTrajectory::frozen(*p.grid(), FeField::constant(7, u));
    let w = solve_adjoint(&p, &control, &state).unwrap();
    assert!(w.last().values().iter().all(|&v| v == 0.0));
    let oracle = scalar_adjoint_rk4(rho - 2.0 * rho * u - c, t, 100_000);
    (w.field(0).values().to_vec(), oracle)
}

#[test]
fn adjoint_against_scalar_oracle() {
    let (w0, oracle) = frozen_adjoint_w0(10.0, 10_000);
    for v in w0 {
        assert!((v - oracle).abs() / oracle.abs() < 1e-4, "{v} vs {oracle}");
    }
}

#[test]
fn adjoint_error_is_first_order_over_short_horizons() {
    let err = |n| {
        let (w0, oracle) = frozen_adjoint_w0(1.0, n);
        (w0[3] - oracle).abs()
    };
    let ratio = err(1000) / err(2000);
    assert!((1.9..=2.1).contains(&ratio), "{ratio}");
}

#[test]
fn adjoint_with_vanishing_coefficient() {
    // rho - 2 rho u - C = 0.5 - 0.4 - 0.1 = 0
    let p = problem(build_interval_mesh(6, 0.0, 1.0).unwrap(), 0.5, 0.2, 3.0, 300, 0.4);
    let control = ControlTrajectory::constant(p.grid(), 0.1).unwrap();
    let state = SpaceTimeTrajectory::frozen(*p.grid(), FeField::constant(7, 0.4));
    let w = solve_adjoint(&p, &control, &state).unwrap();
    for v in w.field(0).values() {
        assert!((v + 3.0).abs() < 1e-6, "{v}");
    }
}

#[test]
fn sensitivity_matches_difference_quotients_to_first_order() {
    let p = problem(build_interval_mesh(4, 0.0, 1.0).unwrap(), 1.0, 0.1, 1.0, 1000, 0.5);
    let base: Vec<f64> = vec![0.3; 1001];
    let eta: Vec<f64> = p.grid().times().map(|t| (3.0 * t).sin() + 0.5).collect();
    let control = ControlTrajectory::new(base.clone()).unwrap();
    let state = solve_state(&p, &control).unwrap();
    let psi = solve_sensitivity(&p, &control, &state, &eta).unwrap();
    let psi_t = psi.last().values()[2];
    let err = |eps: f64| {
        let c = ControlTrajectory::new(base.iter().zip(&eta).map(|(c, e)| c + eps * e).collect()).unwrap();
        let up = solve_state(&p, &c).unwrap();
        let fd = (up.last().values()[2] - state.last().values()[2]) / eps;
        (fd - psi_t).abs()
    };
    let (e2, e3) = (err(1e-2), err(1e-3));
    assert!(e3 < 1e-3 * psi_t.abs(), "{e3}");
    let rate = (e2 / e3).log10();
    assert!((0.9..=1.1).contains(&rate), "rate {rate}");
}

#[test]
fn sensitivity_adjoint_duality() {
    let p = default_benchmark().unwrap();
    let disc = p.discretization();
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let control: Vec<f64> = p.grid().times().map(|t| 0.02 + 0.01 * (t / 3.0).cos()).collect();
    let control = ControlTrajectory::new(control).unwrap();
    let state = solve_state(&p, &control).unwrap();
    let adjoint = solve_adjoint(&p, &control, &state).unwrap();
    let uw = coupling(&p, &state, &adjoint).unwrap();
    for _ in 0..5 {
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let eta: Vec<f64> = p
            .grid()
            .times()
            .map(|t| a[0] + a[1] * (t * a[2]).sin().abs() + a[3] * t / 10.0)
            .collect();
        let psi = solve_sensitivity(&p, &control, &state, &eta).unwrap();
        let lhs = p.grid().integrate(&psi.spatial_integrals(disc));
        let rhs_terms: Vec<f64> = eta.iter().zip(&uw).map(|(e, g)| e * g).collect();
        let rhs = p.grid().integrate(&rhs_terms);
        assert!((lhs - rhs).abs() / rhs.abs() < 1e-3, "{lhs} vs {rhs}");
    }
}

#[test]
fn sensitivity_vanishes_on_zero_state() {
    let p = problem(build_interval_mesh(5, 0.0, 1.0).unwrap(), 0.7, 0.1, 1.0, 20, 0.0);
    let control = ControlTrajectory::constant(p.grid(), 0.1).unwrap();
    let state = solve_state(&p, &control).unwrap();
    let eta: Vec<f64> = (0..21).map(|k| k as f64 - 7.0).collect();
    let psi = solve_sensitivity(&p, &control, &state, &eta).unwrap();
    assert!(psi.fields().iter().all(|f| f.values().iter().all(|&v| v == 0.0)));
}

#[test]
fn signs_on_a_2d_blob() {
    let n = 12;
    let px: Vec<f64> = (0..n * n)
        .map(|p| {
            let (x, y) = ((p % n) as f64 - 5.5, (p / n) as f64 - 5.5);
            (1.0 - (x * x + y * y) / 40.0).max(0.0)
        })
        .collect();
    let img = GridImage::new(n, n, px).unwrap();
    let mesh = triangulate_grid(&img, 0.0).unwrap();
    let params = ModelParams::new(0.5, DiffusionField::uniform(0.3).unwrap()).unwrap();
    // rough data: nodal values jump between 0 and 1
    let u0 = FeField::new((0..mesh.n_nodes()).map(|i| ((i * 37) % 11) as f64 / 10.0).collect()).unwrap();
    let p = Problem::new(mesh, params, TimeGrid::new(4.0, 40).unwrap(), u0).unwrap();
    let control = ControlTrajectory::new(p.grid().times().map(|t| if t < 2.0 { 0.4 } else { 0.0 }).collect()).unwrap();
    let state = solve_state(&p, &control).unwrap();
    let (lo, hi) = state.bounds();
    assert!(lo >= -1e-10 && hi <= 1.0 + 1e-10, "{lo} {hi}");
    let adjoint = solve_adjoint(&p, &control, &state).unwrap();
    assert!(adjoint.bounds().1 <= 1e-10);
}
