use std::f64::consts::PI;

use multisym::dedonder_weyl::integrate_hamiltonian_curve;
use multisym::field_solver::{euler_lagrange_oracle, evolve, plane_wave, standing_wave, FieldState, GridSpec};
use multisym::phase_space::ChartPoint;
use multisym::theory::{DwHamiltonian, ScalarTheory};
use multisym::Error;

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

#[test]
fn sine_gordon_agrees_with_the_oracle() {
    let th = ScalarTheory::sine_gordon();
    let grid = GridSpec::periodic(256, 2.0 * PI, 0.5, 5.0).with_sample_every(10);
    let s0 = plane_wave(&grid, 0.5, 1.0, 1.0, 0.0);
    let dw = evolve(&th, &s0, &grid).unwrap();
    let el = euler_lagrange_oracle(&th, &s0, &grid).unwrap();
    assert_eq!(dw.samples.len(), el.samples.len());
    let d = dw.max_phi_difference(&el);
    assert!(d < 1e-3, "{d:e}");

    // π^0 = ∂𝓛/∂φ_t of the oracle field
    for (a, b) in dw.samples.iter().zip(&el.samples) {
        assert_eq!(a.state.t, b.state.t);
        let e = linf(&a.state.pi0, &b.state.pi0);
        assert!(e < 2e-3, "t = {}: {e:e}", a.state.t);
    }
}

#[test]
fn standing_wave_tracks_the_exact_solution() {
    let th = ScalarTheory::free_scalar(1.0);
    let grid = GridSpec::periodic(256, 2.0 * PI, 0.5, 5.0).with_sample_every(25);
    let k = grid.wavenumber(1);
    let s0 = standing_wave(&grid, 1.0, k, 1.0, 0.0);
    let el = euler_lagrange_oracle(&th, &s0, &grid).unwrap();
    let dw = evolve(&th, &s0, &grid).unwrap();
    for (a, b) in el.samples.iter().zip(&dw.samples) {
        let exact = standing_wave(&grid, 1.0, k, 1.0, a.state.t);
        assert!(linf(&a.state.phi, &exact.phi) < 1e-3);
        assert!(linf(&b.state.phi, &exact.phi) < 1e-3);
        // π^1 = −∂_xφ for the (+,−) free scalar
        let exact_pi1: Vec<f64> = (0..grid.nx)
            .map(|j| k * (k * grid.node(j)).sin() * ((k * k + 1.0f64).sqrt() * b.state.t).cos())
            .collect();
        assert!(linf(&b.pi1, &exact_pi1) < 5e-3);
    }
}

#[test]
fn self_convergence_is_second_order() {
    let th = ScalarTheory::sine_gordon();
    let finals: Vec<FieldState> = [64, 128, 256]
        .iter()
        .map(|&nx| {
            let g = GridSpec::periodic(nx, 2.0 * PI, 0.5, 2.0).with_sample_every(usize::MAX);
            let s0 = FieldState::from_fn(&g, 0.0, |x| (0.8 * x.sin(), 0.3 * (2.0 * x).cos()));
            evolve(&th, &s0, &g).unwrap().last().state.clone()
        })
        .collect();
    // compare on the coarse nodes
    let coarse = |s: &FieldState, stride: usize| s.phi.iter().step_by(stride).copied().collect::<Vec<_>>();
    let e1 = linf(&finals[0].phi, &coarse(&finals[1], 2));
    let e2 = linf(&coarse(&finals[1], 2), &coarse(&finals[2], 4));
    let order = (e1 / e2).log2();
    assert!(order >= 1.9, "order {order}");
}

#[test]
fn energy_is_conserved() {
    let grid = GridSpec::periodic(128, 2.0 * PI, 0.5, 10.0).with_sample_every(40);
    let th = ScalarTheory::free_scalar(0.5);
    let s0 = FieldState::from_fn(&grid, 0.0, |x| ((-2.0 * (x - PI).powi(2)).exp(), 0.0));
    let tr = evolve(&th, &s0, &grid).unwrap();
    assert!(tr.energy_drift() < 1e-6, "{:e}", tr.energy_drift());
    assert!(tr.energies().iter().all(|e| *e > 0.0));
}

#[test]
fn mechanics_mode_follows_the_hamiltonian_curve() {
    let th = ScalarTheory::oscillator(2.0);
    let grid = GridSpec::mechanics(1e-3, 2.0).with_sample_every(100);
    let s0 = FieldState {
        t: 0.0,
        phi: vec![0.5],
        pi0: vec![1.0],
    };
    let tr = evolve(&th, &s0, &grid).unwrap();
    let spec = DwHamiltonian::chart(&th).clone();
    let start = ChartPoint::new(&spec, vec![0.0], vec![0.5], vec![1.0], -2.5).unwrap();
    let curve = integrate_hamiltonian_curve(&th, &start, 1e-3, 2000).unwrap();
    for s in &tr.samples {
        let k = (s.state.t / 1e-3).round() as usize;
        assert!((curve[k].q[0] - s.state.phi[0]).abs() < 1e-12);
        assert!((curve[k].pmom[0] - s.state.pi0[0]).abs() < 1e-12);
    }
}

#[test]
fn cfl_violations() {
    let th = ScalarTheory::free_scalar(1.0);
    let checked = GridSpec::periodic(32, 2.0 * PI, 4.0, 50.0);
    let s0 = plane_wave(&checked, 1.0, 1.0, 1.0, 0.0);
    assert!(matches!(evolve(&th, &s0, &checked), Err(Error::InvalidGrid(_))));

    let unchecked = checked.with_cfl(None);
    let mut noisy = s0.clone();
    noisy.phi[3] += 1e-8;
    match evolve(&th, &noisy, &unchecked) {
        Err(Error::Divergence { t }) => assert!(t > 0.0 && t <= 50.0),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn oracle_and_solver_share_the_schedule() {
    let th = ScalarTheory::free_scalar(1.0);
    // 1.0 / 0.3 is not an integer number of steps
    let grid = GridSpec::new(16, 2.0 * PI / 16.0, 0.3, 1.0).with_sample_every(1);
    let s0 = plane_wave(&grid, 1.0, 1.0, 1.0, 0.0);
    let a = evolve(&th, &s0, &grid).unwrap();
    let b = euler_lagrange_oracle(&th, &s0, &grid).unwrap();
    assert_eq!(a.last().state.t, 1.0);
    assert_eq!(b.last().state.t, 1.0);
    assert_eq!(a.samples.len(), b.samples.len());
    assert!(a.grid.dt <= 0.3);
}
