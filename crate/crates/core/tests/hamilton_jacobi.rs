use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multisym::dedonder_weyl::Gauge;
use multisym::hamilton_jacobi::{
    check_theorem2_conditions, hj_residual, project_distribution, random_section, section_from_potential, Domain,
    EFn, HJPotential,
};
use multisym::phase_space::ConfigPoint;
use multisym::theory::{DwHamiltonian, ScalarTheory};

fn at(x: &[f64], q: &[f64]) -> ConfigPoint {
    ConfigPoint {
        x: x.to_vec(),
        q: q.to_vec(),
    }
}

/// A generic smooth function on E with closed-form partials.
fn smooth(n: usize, coeffs: Vec<f64>) -> EFn {
    let dim = n + 1;
    let c = coeffs.clone();
    EFn::new(n, 1, move |x, q| {
        let e: Vec<f64> = x.iter().chain(q).copied().collect();
        let lin: f64 = e.iter().zip(&c).map(|(a, b)| a * b).sum();
        Ok(lin.sin() + c[dim] * e[dim - 1] * e[dim - 1] * e[0])
    })
    .with_partials(move |x, q| {
        let e: Vec<f64> = x.iter().chain(q).copied().collect();
        let lin: f64 = e.iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        let mut g: Vec<f64> = coeffs[..dim].iter().map(|b| b * lin.cos()).collect();
        let qq = e[dim - 1];
        g[0] += coeffs[dim] * qq * qq;
        g[dim - 1] += 2.0 * coeffs[dim] * qq * e[0];
        Ok(g)
    })
}

proptest! {
    /// (T3) is the symmetry of mixed partials of S, so it holds for any
    /// potential whether or not the HJ equation does.
    #[test]
    fn t3_holds_for_every_potential(
        c0 in prop::collection::vec(-1.0..1.0f64, 4),
        c1 in prop::collection::vec(-1.0..1.0f64, 4),
        seed in any::<u64>(),
    ) {
        let th = ScalarTheory::sine_gordon();
        let pot = HJPotential::new(2, 1, vec![smooth(2, c0), smooth(2, c1)]).unwrap();
        let t = section_from_potential(&pot);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = Domain::new(vec![-1.0; 3], vec![1.0; 3]).unwrap();
        let r = check_theorem2_conditions(&th, &t, &dom.random(2, 5, &mut rng)).unwrap();
        prop_assert!(r.t3 < 1e-6, "{}", r.t3);
    }

    #[test]
    fn projection_is_gauge_independent(seed in any::<u64>(), scale in 0.1..5.0f64, which in 0..3usize) {
        let th = vec![ScalarTheory::oscillator(1.0), ScalarTheory::free_scalar(1.0), ScalarTheory::sine_gordon()]
            .swap_remove(which);
        let spec = DwHamiltonian::chart(&th).clone();
        let n = spec.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_section(n, 1, &mut rng, 1.0);
        let dom = Domain::new(vec![-1.0; n + 1], vec![1.0; n + 1]).unwrap();
        for p in dom.random(n, 3, &mut rng) {
            let base = project_distribution(&th, &t, &p, &Gauge::Zero).unwrap();
            let other = project_distribution(&th, &t, &p, &Gauge::random(&spec, &mut rng, scale)).unwrap();
            prop_assert_eq!(base, other);
        }
    }

    /// For n = 1 the covariant residual is the classical `∂_t S + H(q, ∂_q S)`.
    #[test]
    fn mechanics_reduction(c in prop::collection::vec(-1.0..1.0f64, 3), t in 0.1..2.0f64, q in -2.0..2.0f64) {
        let w = 1.7;
        let th = ScalarTheory::oscillator(w);
        let s = smooth(1, c);
        let g = s.partials(&[t], &[q]).unwrap();
        let classical = g[0] + 0.5 * g[1] * g[1] + 0.5 * w * w * q * q;
        let pot = HJPotential::new(1, 1, vec![s]).unwrap();
        let covariant = hj_residual(&th, &pot, &at(&[t], &[q])).unwrap();
        prop_assert!((covariant - classical).abs() <= 1e-14 * classical.abs().max(1.0));
    }
}

/// Solutions of the HJ equation give sections passing (T1)-(T3).
#[test]
fn potentials_solving_hj_pass_t1_to_t3() {
    let osc = ScalarTheory::oscillator(1.0);
    let s = EFn::new(1, 1, |x, q| Ok(-0.5 * q[0] * q[0] * x[0].tan() + q[0] / x[0].cos() - 0.5 * x[0].tan())).with_partials(|x, q| {
        let (c, tn) = (x[0].cos(), x[0].tan());
        Ok(vec![
            -0.5 * (q[0] * q[0] + 1.0) / (c * c) + q[0] * tn / c,
            -q[0] * tn + 1.0 / c,
        ])
    });
    let pot = HJPotential::new(1, 1, vec![s]).unwrap();
    let dom = Domain::new(vec![-1.0, -2.0], vec![1.0, 2.0]).unwrap();
    let samples = dom.lattice(1, 9);
    for p in &samples {
        let r = hj_residual(&osc, &pot, p).unwrap();
        assert!(r.abs() < 1e-10, "{r:e}");
    }
    let r = check_theorem2_conditions(&osc, &section_from_potential(&pot), &samples).unwrap();
    assert!(r.passes_t1_t3(1e-6), "{r:?}");
    assert!(!r.passes_all(1e-6));

    // massless plane-wave potential S^μ = k^μ q with k null
    let th = ScalarTheory::free_scalar(0.0);
    let pot = HJPotential::new(
        2,
        1,
        vec![
            EFn::new(2, 1, |_, q| Ok(0.6 * q[0])),
            EFn::new(2, 1, |_, q| Ok(0.6 * q[0])),
        ],
    )
    .unwrap();
    let cube = Domain::new(vec![-1.0; 3], vec![1.0; 3]).unwrap().lattice(2, 3);
    for p in &cube {
        assert!(hj_residual(&th, &pot, p).unwrap().abs() < 1e-10);
    }
    let r = check_theorem2_conditions(&th, &section_from_potential(&pot), &cube).unwrap();
    assert!(r.passes_t1_t3(1e-6), "{r:?}");
}

#[test]
fn residual_table_csv() {
    let th = ScalarTheory::free_scalar(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_section(2, 1, &mut rng, 1.0);
    let samples = Domain::new(vec![-1.0; 3], vec![1.0; 3]).unwrap().lattice(2, 2);
    let r = check_theorem2_conditions(&th, &t, &samples).unwrap();
    let mut buf = Vec::new();
    r.table.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("condition,x1,x2,q1,residual"));
    assert_eq!(lines.count(), 5 * samples.len());
}
