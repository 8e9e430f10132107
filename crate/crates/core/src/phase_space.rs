//! Multisymplectic phase space `P` in coordinates `(x^μ, q^i, p^μ_i, p)`, its
//! canonical forms and the projection to the configuration bundle `E`.
//!
//! The canonical n-form is `Θ = p^μ_i dq^i ∧ dⁿx_μ + p dⁿx` and the
//! multisymplectic form is `ω = −dΘ = dq^i ∧ dp^μ_i ∧ dⁿx_μ − dp ∧ dⁿx`, with
//! `dⁿx_μ = i_{∂_μ} dⁿx`. For `n = 1` this is `Θ = p_q dq − E dt`,
//! `ω = dq ∧ dp_q + dE ∧ dt` under `E = −p`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::algebra::{contract, ChartSpec, FnFormField, Form, Multivector};
use crate::error::{Error, Result};

/// A point of `P`. Polymomenta are stored μ-major: `pmom[μ * N + i] = p^μ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub pmom: Vec<f64>,
    pub p: f64,
}

/// A point of the configuration bundle `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigPoint {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
}

impl ChartPoint {
    pub fn new(spec: &ChartSpec, x: Vec<f64>, q: Vec<f64>, pmom: Vec<f64>, p: f64) -> Result<Self> {
        let pt = Self { x, q, pmom, p };
        pt.check(spec)?;
        Ok(pt)
    }

    pub fn check(&self, spec: &ChartSpec) -> Result<()> {
        let (n, nf) = (spec.n(), spec.fields());
        if self.x.len() != n || self.q.len() != nf || self.pmom.len() != n * nf {
            return Err(Error::Shape(format!(
                "chart point shapes (x {}, q {}, pmom {}) do not match n = {n}, N = {nf}",
                self.x.len(),
                self.q.len(),
                self.pmom.len()
            )));
        }
        Ok(())
    }

    pub fn from_coords(spec: &ChartSpec, coords: &[f64]) -> Result<Self> {
        if coords.len() != spec.dim() {
            return Err(Error::Shape(format!(
                "expected {} coordinates, got {}",
                spec.dim(),
                coords.len()
            )));
        }
        let (n, nf) = (spec.n(), spec.fields());
        Ok(Self {
            x: coords[..n].to_vec(),
            q: coords[n..n + nf].to_vec(),
            pmom: coords[n + nf..n + nf + n * nf].to_vec(),
            p: coords[spec.p()],
        })
    }

    /// Flat coordinates in chart order.
    pub fn coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + self.q.len() + self.pmom.len() + 1);
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.pmom);
        out.push(self.p);
        out
    }

    /// Mechanics energy `E = −p`.
    pub fn energy(&self) -> f64 {
        -self.p
    }

    pub fn random<R: Rng + ?Sized>(spec: &ChartSpec, rng: &mut R, scale: f64) -> Self {
        let mut draw = |k: usize| (0..k).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>();
        let (n, nf) = (spec.n(), spec.fields());
        let x = draw(n);
        let q = draw(nf);
        let pmom = draw(n * nf);
        let p = draw(1)[0];
        Self { x, q, pmom, p }
    }
}

impl ConfigPoint {
    pub fn new(spec: &ChartSpec, x: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if x.len() != spec.n() || q.len() != spec.fields() {
            return Err(Error::Shape(format!(
                "config point shapes (x {}, q {}) do not match n = {}, N = {}",
                x.len(),
                q.len(),
                spec.n(),
                spec.fields()
            )));
        }
        Ok(Self { x, q })
    }

    /// Coordinates on `E`: `x` block then `q` block.
    pub fn coords(&self) -> Vec<f64> {
        let mut out = self.x.clone();
        out.extend_from_slice(&self.q);
        out
    }

    pub fn from_coords(n: usize, coords: &[f64]) -> Self {
        Self {
            x: coords[..n].to_vec(),
            q: coords[n..].to_vec(),
        }
    }

    /// Re-embed into `P` with zero momenta and `p = 0`.
    pub fn embed(&self) -> ChartPoint {
        ChartPoint {
            x: self.x.clone(),
            q: self.q.clone(),
            pmom: vec![0.0; self.x.len() * self.q.len()],
            p: 0.0,
        }
    }
}

/// `π_{EP}`: forget momenta and `p`.
pub fn project_to_e(pt: &ChartPoint) -> ConfigPoint {
    ConfigPoint {
        x: pt.x.clone(),
        q: pt.q.clone(),
    }
}

/// `dⁿx = dx^1 ∧ … ∧ dx^n` on a chart of dimension `dim`.
pub fn volume_form(dim: usize, n: usize) -> Result<Form> {
    Form::basis(dim, &(0..n).collect::<Vec<_>>())
}

/// `dⁿx_μ = i_{∂_μ} dⁿx`.
pub fn volume_minor(dim: usize, n: usize, mu: usize) -> Result<Form> {
    let e = Multivector::basis(dim, &[mu])?;
    contract(&e, &volume_form(dim, n)?)
}

/// Poincaré–Cartan form at a point.
pub fn build_theta(spec: &ChartSpec, at: &ChartPoint) -> Result<Form> {
    at.check(spec)?;
    let dim = spec.dim();
    let nf = spec.fields();
    let mut theta = volume_form(dim, spec.n())?.scale(at.p);
    for mu in 0..spec.n() {
        let minor = volume_minor(dim, spec.n(), mu)?;
        for i in 0..nf {
            let c = at.pmom[mu * nf + i];
            if c == 0.0 {
                continue;
            }
            let term = Form::basis(dim, &[spec.q(i)])?.wedge(&minor)?;
            theta = theta.add(&term.scale(c))?;
        }
    }
    Ok(theta)
}

/// Θ as a field on `P`, with closed-form partials (Θ is linear in the momenta).
pub fn theta_field(spec: &ChartSpec) -> FnFormField {
    let eval_spec = spec.clone();
    let partial_spec = spec.clone();
    FnFormField::new(spec.dim(), spec.n(), move |coords| {
        let pt = ChartPoint::from_coords(&eval_spec, coords)?;
        build_theta(&eval_spec, &pt)
    })
    .with_partials(move |_coords, k| {
        let s = &partial_spec;
        let dim = s.dim();
        if k == s.p() {
            return volume_form(dim, s.n());
        }
        let first_mom = s.n() + s.fields();
        if k >= first_mom && k < s.p() {
            let mu = (k - first_mom) / s.fields();
            let i = (k - first_mom) % s.fields();
            return Form::basis(dim, &[s.q(i)])?.wedge(&volume_minor(dim, s.n(), mu)?);
        }
        Form::zero(dim, s.n())
    })
}

/// The multisymplectic form as a constant-coefficient form.
pub fn omega_form(spec: &ChartSpec) -> Result<Form> {
    let dim = spec.dim();
    let mut omega = Form::basis(dim, &[spec.p()])?
        .wedge(&volume_form(dim, spec.n())?)?
        .scale(-1.0);
    for mu in 0..spec.n() {
        let minor = volume_minor(dim, spec.n(), mu)?;
        for i in 0..spec.fields() {
            let term = Form::basis(dim, &[spec.q(i), spec.pmom(mu, i)])?.wedge(&minor)?;
            omega = omega.add(&term)?;
        }
    }
    Ok(omega)
}

/// ω as a constant [`FormField`](crate::algebra::FormField) of degree `n + 1`.
pub fn build_omega(spec: &ChartSpec) -> Result<crate::algebra::ConstantField> {
    Ok(crate::algebra::ConstantField(omega_form(spec)?))
}

/// Outcome of [`nondegeneracy_check`].
#[derive(Debug, Clone)]
pub struct NondegeneracyReport {
    pub dim: usize,
    pub rank: usize,
    /// Smallest singular value of the map `v ↦ i_v ω`.
    pub min_singular_value: f64,
    /// Smallest `|i_v ω| / |v|` seen over the random samples.
    pub min_sample_ratio: f64,
    /// A unit kernel vector when the check fails.
    pub kernel_vector: Option<Vec<f64>>,
    pub passed: bool,
}

const RANK_TOL: f64 = 1e-10;

/// Verify that `v ↦ i_v ω` is injective on vectors for the given form.
pub fn nondegeneracy_check_form<R: Rng + ?Sized>(
    omega: &Form,
    samples: usize,
    rng: &mut R,
) -> Result<NondegeneracyReport> {
    if samples == 0 {
        return Err(Error::Shape("nondegeneracy check needs at least one sample".into()));
    }
    let dim = omega.dim();
    if omega.degree() == 0 {
        return Err(Error::DegreeMismatch {
            expected: 1,
            actual: 0,
        });
    }
    // rows: every (degree − 1)-blade reachable from ω's support
    let images = (0..dim)
        .map(|k| contract(&Multivector::basis(dim, &[k])?, omega))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<_> = images.iter().flat_map(|f| f.iter().map(|(b, _)| b)).collect();
    rows.sort();
    rows.dedup();
    let nrows = rows.len().max(dim);
    let mut m = DMatrix::<f64>::zeros(nrows, dim);
    for (col, img) in images.iter().enumerate() {
        for (b, c) in img.iter() {
            let row = rows.binary_search(&b).expect("row blade collected above");
            m[(row, col)] = c;
        }
    }
    let svd = m.clone().svd(false, true);
    let sv = &svd.singular_values;
    let rank = sv.iter().filter(|&&s| s > RANK_TOL).count();
    let (min_idx, min_sv) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });

    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let image = contract(&Multivector::from_components(&v)?, omega)?;
        let img_norm = image.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
        min_ratio = min_ratio.min(img_norm / norm);
    }

    let passed = rank == dim;
    let kernel_vector = if passed {
        None
    } else {
        let vt = svd.v_t.as_ref().expect("v_t requested");
        Some(vt.row(min_idx).iter().copied().collect())
    };
    Ok(NondegeneracyReport {
        dim,
        rank,
        min_singular_value: min_sv,
        min_sample_ratio: min_ratio,
        kernel_vector,
        passed,
    })
}

/// Nondegeneracy of the canonical ω on vectors.
pub fn nondegeneracy_check<R: Rng + ?Sized>(
    spec: &ChartSpec,
    samples: usize,
    rng: &mut R,
) -> Result<NondegeneracyReport> {
    nondegeneracy_check_form(&omega_form(spec)?, samples, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{exterior_derivative, exterior_derivative_numeric, DEFAULT_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_reduces_to_mechanics() {
        let spec = ChartSpec::new(1, 1).unwrap();
        let (pq, energy) = (0.7, 2.5);
        let pt = ChartPoint::new(&spec, vec![0.3], vec![1.1], vec![pq], -energy).unwrap();
        let theta = build_theta(&spec, &pt).unwrap();
        // p_q dq − E dt
        let expected = Form::from_terms(4, 1, [(vec![1], pq), (vec![0], -energy)]).unwrap();
        assert_eq!(theta, expected);
    }

    #[test]
    fn theta_vanishes_without_momenta() {
        let spec = ChartSpec::new(2, 2).unwrap();
        let pt = ChartPoint::new(&spec, vec![1.0, 2.0], vec![3.0, 4.0], vec![0.0; 4], 0.0).unwrap();
        assert!(build_theta(&spec, &pt).unwrap().is_zero());
    }

    #[test]
    fn theta_single_momentum_in_two_dimensions() {
        let spec = ChartSpec::new(2, 1).unwrap();
        let pt = ChartPoint::new(&spec, vec![0.0, 0.0], vec![0.0], vec![3.0, 0.0], 0.0).unwrap();
        let theta = build_theta(&spec, &pt).unwrap();
        // d²x_1 = dx^2, so Θ = 3 dq ∧ dx^2 = −3 dx^2 ∧ dq
        assert_eq!(theta.nnz(), 1);
        assert_eq!(theta.coeff(&[spec.q(0), spec.x(1)]), 3.0);
        assert_eq!(theta.coeff(&[spec.x(1), spec.q(0)]), -3.0);
    }

    #[test]
    fn omega_mechanics_row() {
        let spec = ChartSpec::new(1, 1).unwrap();
        let omega = omega_form(&spec).unwrap();
        // dq ∧ dp_q − dp ∧ dt, i.e. dq ∧ dp_q + dE ∧ dt with E = −p
        let expected =
            Form::from_terms(4, 2, [(vec![1, 2], 1.0), (vec![3, 0], -1.0)]).unwrap();
        assert_eq!(omega, expected);
    }

    #[test]
    fn omega_coefficient_count() {
        for n in 1..=3 {
            for nf in 1..=2 {
                let spec = ChartSpec::new(n, nf).unwrap();
                assert_eq!(omega_form(&spec).unwrap().nnz(), n * nf + 1);
            }
        }
    }

    #[test]
    fn omega_is_minus_d_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ChartSpec::new(2, 1).unwrap();
        let theta = theta_field(&spec);
        let omega = omega_form(&spec).unwrap();
        for _ in 0..20 {
            let pt = ChartPoint::random(&spec, &mut rng, 2.0).coords();
            let exact = exterior_derivative(&theta, &pt, DEFAULT_STEP).unwrap().scale(-1.0);
            assert_eq!(exact, omega);
            let fd = exterior_derivative_numeric(&theta, &pt, DEFAULT_STEP).unwrap().scale(-1.0);
            assert!(fd.max_abs_diff(&omega).unwrap() < 1e-8);
        }
    }

    #[test]
    fn mechanics_nondegenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ChartSpec::new(1, 1).unwrap();
        let r = nondegeneracy_check(&spec, 10, &mut rng).unwrap();
        assert!(r.passed);
        assert_eq!(r.rank, 4);
        assert!((r.min_singular_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropping_translation_term_breaks_nondegeneracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ChartSpec::new(2, 1).unwrap();
        let full = omega_form(&spec).unwrap();
        let dp_term = Form::basis(spec.dim(), &[spec.p()])
            .unwrap()
            .wedge(&volume_form(spec.dim(), 2).unwrap())
            .unwrap()
            .scale(-1.0);
        let truncated = full.sub(&dp_term).unwrap();
        let r = nondegeneracy_check_form(&truncated, 5, &mut rng).unwrap();
        assert!(!r.passed);
        let k = r.kernel_vector.unwrap();
        assert!((k[spec.p()].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn projection_drops_momenta() {
        let spec = ChartSpec::new(2, 1).unwrap();
        let pt = ChartPoint::new(&spec, vec![1.0, 2.0], vec![3.0], vec![4.0, 5.0], 6.0).unwrap();
        let e = project_to_e(&pt);
        assert_eq!(e, ConfigPoint { x: vec![1.0, 2.0], q: vec![3.0] });
        assert_eq!(project_to_e(&e.embed()), e);
    }

    #[test]
    fn shape_validation() {
        let spec = ChartSpec::new(2, 1).unwrap();
        assert!(ChartPoint::new(&spec, vec![1.0], vec![3.0], vec![4.0, 5.0], 6.0).is_err());
        assert!(ChartPoint::from_coords(&spec, &[0.0; 5]).is_err());
        assert!(ConfigPoint::new(&spec, vec![0.0; 2], vec![0.0; 2]).is_err());
    }
}
