use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multisym::dedonder_weyl::{build_hamiltonian_nvector, dw_rhs, h_value, verify_defining_relation, Gauge};
use multisym::phase_space::ChartPoint;
use multisym::theory::{
    invert_polymomenta, legendre_transform, DwHamiltonian, JetPoint, LagrangianDensity, ScalarTheory,
};

fn theories() -> Vec<ScalarTheory> {
    vec![
        ScalarTheory::oscillator(1.3),
        ScalarTheory::free_scalar(1.0),
        ScalarTheory::free_scalar(0.0),
        ScalarTheory::sine_gordon(),
    ]
}

fn random_jet(th: &ScalarTheory, rng: &mut ChaCha8Rng) -> JetPoint {
    let spec = LagrangianDensity::chart(th);
    let pt = ChartPoint::random(spec, rng, 2.0);
    JetPoint::new(spec, pt.x, pt.q, pt.pmom).unwrap()
}

#[test]
fn legendre_round_trip_and_vanishing_h() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for th in theories() {
        for _ in 0..100 {
            let j = random_jet(&th, &mut rng);
            let pt = legendre_transform(&th, &j).unwrap();
            let back = invert_polymomenta(&th, &pt.x, &pt.q, &pt.pmom, None).unwrap();
            let err = back.v.iter().zip(&j.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{}: {err:e}", th.name());
            let h = DwHamiltonian::value(&th, &pt.x, &pt.q, &pt.pmom).unwrap();
            assert!((pt.p + h).abs() < 1e-10);
            assert!(h_value(&th, &pt).unwrap().abs() < 1e-10);
        }
    }
}

#[test]
fn mechanics_vector_field_is_hamiltons() {
    let w = 1.3;
    let th = ScalarTheory::oscillator(w);
    let spec = DwHamiltonian::chart(&th).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let at = ChartPoint::random(&spec, &mut rng, 2.0);
        let x = build_hamiltonian_nvector(&th, &at, &Gauge::Zero).unwrap();
        // q̇ = ∂H/∂p, ṗ = −∂H/∂q, Ė = 0
        assert_eq!(x.velocity(0, 0), at.pmom[0]);
        assert!((x.momentum_rate(0, 0, 0) + w * w * at.q[0]).abs() < 1e-12);
        assert!(x.translation_rate(0).abs() < 1e-12);
        assert_eq!(x.assembled.coeff(&[spec.x(0)]), x.orientation);
        assert_eq!(x.orientation, -1.0);
    }
}

/// For arbitrary smooth φ (not a solution), the DW residual with Legendre
/// momenta equals the Euler–Lagrange residual `φ_tt − φ_xx + V′(φ)`.
#[test]
fn dw_reduces_to_euler_lagrange() {
    let th = ScalarTheory::sine_gordon();
    let spec = LagrangianDensity::chart(&th).clone();
    let phi = |t: f64, x: f64| (0.7 * t + 0.3 * x).sin() + 0.2 * (t * x).cos();
    let grad = |t: f64, x: f64| {
        let c = (0.7 * t + 0.3 * x).cos();
        let s = (t * x).sin();
        [0.7 * c - 0.2 * x * s, 0.3 * c - 0.2 * t * s]
    };
    let momenta = |t: f64, x: f64| {
        let j = JetPoint::new(&spec, vec![t, x], vec![phi(t, x)], grad(t, x).to_vec()).unwrap();
        legendre_transform(&th, &j).unwrap().pmom
    };
    let h = 1e-4;
    for &(t, x) in &[(0.1, 0.2), (-0.7, 1.1), (1.3, -0.4)] {
        let div = (momenta(t + h, x)[0] - momenta(t - h, x)[0]) / (2.0 * h)
            + (momenta(t, x + h)[1] - momenta(t, x - h)[1]) / (2.0 * h);
        let rhs = dw_rhs(&th, &[t, x], &[phi(t, x)], &momenta(t, x)).unwrap();
        let dw_residual = div - rhs.div_p[0];

        let f = |t: f64, x: f64| phi(t, x);
        let phi_tt = (f(t + h, x) - 2.0 * f(t, x) + f(t - h, x)) / (h * h);
        let phi_xx = (f(t, x + h) - 2.0 * f(t, x) + f(t, x - h)) / (h * h);
        let el_residual = phi_tt - phi_xx + phi(t, x).sin();
        assert!((dw_residual - el_residual).abs() < 1e-6, "{dw_residual} vs {el_residual}");

        // the other half of the DW system is ∂_μφ = ∂𝓗/∂p^μ
        let g = grad(t, x);
        assert!((rhs.dq_dx[0] - g[0]).abs() < 1e-12 && (rhs.dq_dx[1] - g[1]).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn velocities_do_not_depend_on_the_gauge(seed in any::<u64>(), scale in 0.1..10.0f64, which in 0..4usize) {
        let th = &theories()[which];
        let spec = DwHamiltonian::chart(th).clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let at = ChartPoint::random(&spec, &mut rng, 2.0);
        let base = build_hamiltonian_nvector(th, &at, &Gauge::Zero).unwrap();
        let gauge = Gauge::random(&spec, &mut rng, scale);
        let x = build_hamiltonian_nvector(th, &at, &gauge).unwrap();
        for mu in 0..spec.n() {
            for i in 0..spec.fields() {
                prop_assert_eq!(x.velocity(mu, i), base.velocity(mu, i));
                let div: f64 = (0..spec.n()).map(|nu| x.momentum_rate(nu, nu, i)).sum();
                let div0: f64 = (0..spec.n()).map(|nu| base.momentum_rate(nu, nu, i)).sum();
                prop_assert!((div - div0).abs() < 1e-12 * scale.max(1.0));
            }
        }
        let r = verify_defining_relation(th, &x, &at).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn traceful_gauges_are_rejected(seed in any::<u64>(), bump in 0.1..1.0f64) {
        let th = ScalarTheory::free_scalar(1.0);
        let spec = DwHamiltonian::chart(&th).clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Gauge::TraceFree(mut g) = Gauge::random(&spec, &mut rng, 1.0) else {
            unreachable!("random gauges are trace-free")
        };
        g[0] += bump;
        let at = ChartPoint::random(&spec, &mut rng, 1.0);
        prop_assert!(build_hamiltonian_nvector(&th, &at, &Gauge::TraceFree(g)).is_err());
    }
}
