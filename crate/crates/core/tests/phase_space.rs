use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multisym::algebra::{contract, exterior_derivative_numeric, ChartSpec, FormField, Multivector};
use multisym::phase_space::{build_omega, build_theta, nondegeneracy_check, project_to_e, ChartPoint};
use multisym::theory::{legendre_transform, JetPoint, LagrangianDensity, ScalarTheory};

fn chart() -> impl Strategy<Value = ChartSpec> {
    (1..=3usize, 1..=2usize).prop_map(|(n, nf)| ChartSpec::new(n, nf).unwrap())
}

fn point(spec: ChartSpec) -> impl Strategy<Value = (ChartSpec, Vec<f64>)> {
    let dim = spec.dim();
    (Just(spec), prop::collection::vec(-3.0..3.0f64, dim))
}

proptest! {
    #[test]
    fn omega_is_constant_and_closed((spec, a) in chart().prop_flat_map(point), seed in any::<u64>()) {
        let omega = build_omega(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = ChartPoint::random(&spec, &mut rng, 3.0).coords();
        prop_assert_eq!(omega.eval(&a).unwrap(), omega.eval(&b).unwrap());
        let d = exterior_derivative_numeric(&omega, &a, 1e-5).unwrap();
        prop_assert!(d.max_abs() < 1e-8);
    }

    #[test]
    fn theta_is_linear_in_momenta((spec, a) in chart().prop_flat_map(point), s in -2.0..2.0f64) {
        let pt = ChartPoint::from_coords(&spec, &a).unwrap();
        let mut scaled = pt.clone();
        scaled.pmom.iter_mut().for_each(|p| *p *= s);
        scaled.p *= s;
        let lhs = build_theta(&spec, &scaled).unwrap();
        let rhs = build_theta(&spec, &pt).unwrap().scale(s);
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-14);
        // Θ(∂_{q^i}, …) only sees the momenta conjugate to q^i
        let dq = Multivector::basis(spec.dim(), &[spec.q(0)]).unwrap();
        let inner = contract(&dq, &build_theta(&spec, &pt).unwrap()).unwrap();
        let expected = (0..spec.n()).map(|mu| pt.pmom[mu * spec.fields()].abs()).fold(0.0, f64::max);
        prop_assert!((inner.max_abs() - expected).abs() < 1e-14);
    }

    #[test]
    fn projection_keeps_the_jet_base(x in prop::collection::vec(-2.0..2.0f64, 2), q in -2.0..2.0f64,
                                     v in prop::collection::vec(-2.0..2.0f64, 2)) {
        let th = ScalarTheory::sine_gordon();
        let spec = LagrangianDensity::chart(&th).clone();
        let j = JetPoint::new(&spec, x.clone(), vec![q], v).unwrap();
        let e = project_to_e(&legendre_transform(&th, &j).unwrap());
        prop_assert_eq!(&e.x, &x);
        prop_assert_eq!(&e.q, &vec![q]);
        let again = project_to_e(&e.embed());
        prop_assert_eq!(again.coords(), e.coords());
    }
}

#[test]
fn nondegenerate_on_every_small_chart() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=3 {
        for nf in 1..=2 {
            let spec = ChartSpec::new(n, nf).unwrap();
            let r = nondegeneracy_check(&spec, 50, &mut rng).unwrap();
            assert!(r.passed, "n = {n}, N = {nf}: {r:?}");
            assert!(r.min_sample_ratio > 0.0);
        }
    }
}
