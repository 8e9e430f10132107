//! De Donder–Weyl field equations and separable Hamiltonian n-vectorfields.
//!
//! For `h = −𝓗 − p` the n-vector `X_h = (−1)^n Z_1 ∧ … ∧ Z_n` with
//!
//! ```text
//! Z_μ = ∂_{x^μ} + (∂𝓗/∂p^μ_i) ∂_{q^i}
//!       + (−(1/n) δ^ν_μ ∂𝓗/∂q^i + Z′^ν_{μ i}) ∂_{p^ν_i}
//!       + (Z_μ)_0 ∂_p,
//! (Z_μ)_0 = ∂h/∂x^μ + (Z_μ)^i ∂h/∂q^i + (Z_μ)^ν_i ∂h/∂p^ν_i
//! ```
//!
//! satisfies `i_{X_h} ω = dh` for every trace-free gauge `Z′` (`Σ_μ Z′^μ_{μ i} = 0`).
//! The sign `(−1)^n` is the orientation that makes the `Z_μ` follow the field
//! equations `∂_μ q^i = ∂𝓗/∂p^μ_i`, `∂_μ p^μ_i = −∂𝓗/∂q^i`.

use rand::Rng;

use crate::algebra::{contract, wedge_all, ChartSpec, Form, Multivector};
use crate::error::{Error, Result};
use crate::phase_space::{omega_form, ChartPoint};
use crate::theory::DwHamiltonian;

/// Tolerance for [`verify_defining_relation`].
pub const DEFINING_RELATION_TOL: f64 = 1e-8;

/// Right-hand sides of the De Donder–Weyl equations at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct DwRhs {
    /// `∂_μ q^i = ∂𝓗/∂p^μ_i`, μ-major.
    pub dq_dx: Vec<f64>,
    /// `∂_μ p^μ_i = −∂𝓗/∂q^i`.
    pub div_p: Vec<f64>,
}

pub fn dw_rhs<H: DwHamiltonian + ?Sized>(h: &H, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<DwRhs> {
    Ok(DwRhs {
        dq_dx: h.grad_pmom(x, q, pmom)?,
        div_p: h.grad_q(x, q, pmom)?.into_iter().map(|g| -g).collect(),
    })
}

/// Trace-free part `Z′` of the momentum components, or none.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Gauge {
    #[default]
    Zero,
    /// `values[(μ * n + ν) * N + i] = Z′^ν_{μ i}`, the `∂_{p^ν_i}` component of `Z_μ`.
    TraceFree(Vec<f64>),
}

impl Gauge {
    /// Dense gauge array for the chart, validating shape and the trace condition.
    pub fn values(&self, spec: &ChartSpec) -> Result<Vec<f64>> {
        let (n, nf) = (spec.n(), spec.fields());
        let len = n * n * nf;
        let values = match self {
            Gauge::Zero => return Ok(vec![0.0; len]),
            Gauge::TraceFree(v) => v,
        };
        if values.len() != len {
            return Err(Error::Shape(format!("gauge needs {len} entries, got {}", values.len())));
        }
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..nf {
            let trace: f64 = (0..n).map(|mu| values[(mu * n + mu) * nf + i]).sum();
            if trace.abs() > 1e-12 * scale * n as f64 {
                return Err(Error::GaugeTrace { component: i, trace });
            }
        }
        Ok(values.clone())
    }

    /// Random trace-free gauge with entries of order `scale`.
    pub fn random<R: Rng + ?Sized>(spec: &ChartSpec, rng: &mut R, scale: f64) -> Gauge {
        let (n, nf) = (spec.n(), spec.fields());
        let mut values: Vec<f64> = (0..n * n * nf).map(|_| rng.random_range(-scale..scale)).collect();
        for i in 0..nf {
            let trace: f64 = (0..n).map(|mu| values[(mu * n + mu) * nf + i]).sum();
            for mu in 0..n {
                values[(mu * n + mu) * nf + i] -= trace / n as f64;
            }
        }
        // exact zero trace: put the rounding residue on the last diagonal entry
        for i in 0..nf {
            let rest: f64 = (0..n - 1).map(|mu| values[(mu * n + mu) * nf + i]).sum();
            values[((n - 1) * n + (n - 1)) * nf + i] = -rest;
        }
        Gauge::TraceFree(values)
    }
}

/// A separable Hamiltonian n-vector together with its factors.
#[derive(Debug, Clone)]
pub struct HamiltonianMultivector {
    pub spec: ChartSpec,
    /// `Z_1, …, Z_n`, each normalized to `∂_{x^μ}` in the base directions.
    pub components: Vec<Multivector>,
    pub gauge: Vec<f64>,
    /// `(−1)^n`.
    pub orientation: f64,
    /// `orientation · Z_1 ∧ … ∧ Z_n`.
    pub assembled: Multivector,
}

impl HamiltonianMultivector {
    /// Assemble from explicit factor vectors (dense components in chart order).
    pub fn from_factors(spec: &ChartSpec, factors: &[Vec<f64>], gauge: Vec<f64>) -> Result<Self> {
        if factors.len() != spec.n() {
            return Err(Error::Shape(format!(
                "need {} factor vectors, got {}",
                spec.n(),
                factors.len()
            )));
        }
        let components = factors
            .iter()
            .map(|f| {
                if f.len() != spec.dim() {
                    return Err(Error::Shape(format!(
                        "factor has {} components, chart has {}",
                        f.len(),
                        spec.dim()
                    )));
                }
                Multivector::from_components(f)
            })
            .collect::<Result<Vec<_>>>()?;
        let orientation = if spec.n().is_multiple_of(2) { 1.0 } else { -1.0 };
        let assembled = wedge_all(&components)?.scale(orientation);
        Ok(Self {
            spec: spec.clone(),
            components,
            gauge,
            orientation,
            assembled,
        })
    }

    /// `(Z_μ)^i`.
    pub fn velocity(&self, mu: usize, i: usize) -> f64 {
        self.components[mu].coeff(&[self.spec.q(i)])
    }

    /// `(Z_μ)^ν_i`.
    pub fn momentum_rate(&self, mu: usize, nu: usize, i: usize) -> f64 {
        self.components[mu].coeff(&[self.spec.pmom(nu, i)])
    }

    /// `(Z_μ)_0`.
    pub fn translation_rate(&self, mu: usize) -> f64 {
        self.components[mu].coeff(&[self.spec.p()])
    }
}

/// Build `X_h` for `h = −𝓗 − p` at a point of `P`.
pub fn build_hamiltonian_nvector<H: DwHamiltonian + ?Sized>(
    ham: &H,
    at: &ChartPoint,
    gauge: &Gauge,
) -> Result<HamiltonianMultivector> {
    let spec = ham.chart().clone();
    at.check(&spec)?;
    let gauge = gauge.values(&spec)?;
    let (n, nf) = (spec.n(), spec.fields());
    let hx = ham.grad_x(&at.x, &at.q, &at.pmom)?;
    let hq = ham.grad_q(&at.x, &at.q, &at.pmom)?;
    let hp = ham.grad_pmom(&at.x, &at.q, &at.pmom)?;

    let mut factors = Vec::with_capacity(n);
    for mu in 0..n {
        let mut z = vec![0.0; spec.dim()];
        z[spec.x(mu)] = 1.0;
        let mut translation = -hx[mu];
        for i in 0..nf {
            let velocity = hp[mu * nf + i];
            z[spec.q(i)] = velocity;
            translation -= velocity * hq[i];
            for nu in 0..n {
                let diag = if nu == mu { -hq[i] / n as f64 } else { 0.0 };
                let rate = diag + gauge[(mu * n + nu) * nf + i];
                z[spec.pmom(nu, i)] = rate;
                translation -= rate * hp[nu * nf + i];
            }
        }
        z[spec.p()] = translation;
        factors.push(z);
    }
    HamiltonianMultivector::from_factors(&spec, &factors, gauge)
}

/// `h = −𝓗 − p`.
pub fn h_value<H: DwHamiltonian + ?Sized>(ham: &H, at: &ChartPoint) -> Result<f64> {
    Ok(-ham.value(&at.x, &at.q, &at.pmom)? - at.p)
}

/// `dh` for `h = −𝓗 − p`; with `include_translation = false` the `−p` term is
/// left out (which is not an admissible Hamiltonian).
pub fn differential_of_h<H: DwHamiltonian + ?Sized>(
    ham: &H,
    at: &ChartPoint,
    include_translation: bool,
) -> Result<Form> {
    let spec = ham.chart();
    at.check(spec)?;
    let (n, nf) = (spec.n(), spec.fields());
    let mut comps = vec![0.0; spec.dim()];
    let hx = ham.grad_x(&at.x, &at.q, &at.pmom)?;
    let hq = ham.grad_q(&at.x, &at.q, &at.pmom)?;
    let hp = ham.grad_pmom(&at.x, &at.q, &at.pmom)?;
    for mu in 0..n {
        comps[spec.x(mu)] = -hx[mu];
        for i in 0..nf {
            comps[spec.pmom(mu, i)] = -hp[mu * nf + i];
        }
    }
    for i in 0..nf {
        comps[spec.q(i)] = -hq[i];
    }
    if include_translation {
        comps[spec.p()] = -1.0;
    }
    Form::from_components(&comps)
}

#[derive(Debug, Clone)]
pub struct DefiningRelationReport {
    /// `max |i_X ω − dh|` over coefficients.
    pub residual: f64,
    /// Chart coordinate carrying the largest mismatch.
    pub worst_coordinate: Option<String>,
    pub passed: bool,
}

/// Compare `i_X ω` with a given 1-form.
pub fn defining_relation_residual(spec: &ChartSpec, x: &Multivector, dh: &Form) -> Result<DefiningRelationReport> {
    let lhs = contract(x, &omega_form(spec)?)?;
    let diff = lhs.sub(dh)?;
    let worst = diff
        .iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(b, _)| spec.names()[b.indices()[0]].clone());
    let residual = diff.max_abs();
    Ok(DefiningRelationReport {
        residual,
        worst_coordinate: worst,
        passed: residual < DEFINING_RELATION_TOL,
    })
}

/// Check `i_{X_h} ω = dh` at a point.
pub fn verify_defining_relation<H: DwHamiltonian + ?Sized>(
    ham: &H,
    x: &HamiltonianMultivector,
    at: &ChartPoint,
) -> Result<DefiningRelationReport> {
    let dh = differential_of_h(ham, at, true)?;
    defining_relation_residual(ham.chart(), &x.assembled, &dh)
}

/// Integral curve of the `n = 1` Hamiltonian vector field by classical RK4,
/// parametrized by the base coordinate `t`. Returns `steps + 1` points.
pub fn integrate_hamiltonian_curve<H: DwHamiltonian + ?Sized>(
    ham: &H,
    start: &ChartPoint,
    dt: f64,
    steps: usize,
) -> Result<Vec<ChartPoint>> {
    let spec = ham.chart().clone();
    if spec.n() != 1 {
        return Err(Error::Shape(format!(
            "integral curves need n = 1, chart has n = {}",
            spec.n()
        )));
    }
    let field = |y: &[f64]| -> Result<Vec<f64>> {
        let pt = ChartPoint::from_coords(&spec, y)?;
        let x = build_hamiltonian_nvector(ham, &pt, &Gauge::Zero)?;
        Ok(x.components[0].components())
    };
    let mut y = start.coords();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    let axpy = |y: &[f64], k: &[f64], s: f64| y.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = field(&y)?;
        let k2 = field(&axpy(&y, &k1, 0.5 * dt))?;
        let k3 = field(&axpy(&y, &k2, 0.5 * dt))?;
        let k4 = field(&axpy(&y, &k3, dt))?;
        for j in 0..y.len() {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: y[0] });
        }
        out.push(ChartPoint::from_coords(&spec, &y)?);
    }
    Ok(out)
}

/// Field values on a small rectangular space-time grid.
///
/// Nodes are stored row-major with axis 0 slowest; `phi[node * N + i]` and
/// `pmom[node * n * N + μ * N + i]`.
#[derive(Debug, Clone)]
pub struct SolutionPatch {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub fields: usize,
    pub phi: Vec<f64>,
    pub pmom: Vec<f64>,
}

impl SolutionPatch {
    /// Sample `phi` and `pmom` functions of the base point.
    pub fn sample<F>(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>, fields: usize, mut f: F) -> Self
    where
        F: FnMut(&[f64]) -> (Vec<f64>, Vec<f64>),
    {
        let n = shape.len();
        let total: usize = shape.iter().product();
        let mut phi = Vec::with_capacity(total * fields);
        let mut pmom = Vec::with_capacity(total * fields * n);
        for node in 0..total {
            let idx = unflatten(node, &shape);
            let x: Vec<f64> = (0..n).map(|a| origin[a] + spacing[a] * idx[a] as f64).collect();
            let (ph, pm) = f(&x);
            phi.extend(ph);
            pmom.extend(pm);
        }
        Self { origin, spacing, shape, fields, phi, pmom }
    }

    fn n(&self) -> usize {
        self.shape.len()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    fn base_point(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.n()).map(|a| self.origin[a] + self.spacing[a] * idx[a] as f64).collect()
    }

    fn node_values(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let (n, nf) = (self.n(), self.fields);
        let k = self.flat(idx);
        (
            self.phi[k * nf..(k + 1) * nf].to_vec(),
            self.pmom[k * n * nf..(k + 1) * n * nf].to_vec(),
        )
    }
}

fn unflatten(mut k: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = k % shape[a];
        k /= shape[a];
    }
    idx
}

#[derive(Debug, Clone)]
pub struct TangentLiftReport {
    /// `max |∂_μ φ^i − ∂𝓗/∂p^μ_i|`.
    pub velocity_residual: f64,
    /// `max |∂_μ π^μ_i + ∂𝓗/∂q^i|`.
    pub divergence_residual: f64,
    /// `max |i_X ω − dh|` for the lifted tangent n-vector.
    pub defining_relation_residual: f64,
    pub lift: HamiltonianMultivector,
}

impl TangentLiftReport {
    pub fn max_residual(&self) -> f64 {
        self.velocity_residual
            .max(self.divergence_residual)
            .max(self.defining_relation_residual)
    }
}

/// Lift a discrete solution to `P` (with `p = −𝓗` along it) and compare its
/// tangent n-plane at an interior node with a Hamiltonian n-vector.
pub fn lift_solution_tangent<H: DwHamiltonian + ?Sized>(
    ham: &H,
    patch: &SolutionPatch,
    node: &[usize],
) -> Result<TangentLiftReport> {
    let spec = ham.chart().clone();
    let (n, nf) = (spec.n(), spec.fields());
    if patch.n() != n || patch.fields != nf || node.len() != n {
        return Err(Error::Shape(format!(
            "patch (n {}, N {}) does not match the chart (n {n}, N {nf})",
            patch.n(),
            patch.fields
        )));
    }
    let total: usize = patch.shape.iter().product();
    if patch.phi.len() != total * nf || patch.pmom.len() != total * n * nf {
        return Err(Error::Shape("patch arrays do not match its shape".into()));
    }
    if node.iter().zip(&patch.shape).any(|(&i, &s)| i == 0 || i + 1 >= s) {
        return Err(Error::BoundaryNode(node.to_vec()));
    }

    let lifted = |idx: &[usize]| -> Result<Vec<f64>> {
        let x = patch.base_point(idx);
        let (phi, pmom) = patch.node_values(idx);
        let p = -ham.value(&x, &phi, &pmom)?;
        Ok(ChartPoint { x, q: phi, pmom, p }.coords())
    };

    let centre = lifted(node)?;
    let at = ChartPoint::from_coords(&spec, &centre)?;
    let mut factors = Vec::with_capacity(n);
    for mu in 0..n {
        let mut up = node.to_vec();
        let mut down = node.to_vec();
        up[mu] += 1;
        down[mu] -= 1;
        let (a, b) = (lifted(&up)?, lifted(&down)?);
        let h = 2.0 * patch.spacing[mu];
        let mut z: Vec<f64> = a.iter().zip(&b).map(|(u, d)| (u - d) / h).collect();
        // base directions are exact
        for (nu, zc) in z.iter_mut().take(n).enumerate() {
            *zc = if nu == mu { 1.0 } else { 0.0 };
        }
        factors.push(z);
    }

    let hq = ham.grad_q(&at.x, &at.q, &at.pmom)?;
    let hp = ham.grad_pmom(&at.x, &at.q, &at.pmom)?;
    let mut velocity_residual = 0.0f64;
    let mut divergence_residual = 0.0f64;
    for i in 0..nf {
        let mut div = 0.0;
        for mu in 0..n {
            velocity_residual = velocity_residual.max((factors[mu][spec.q(i)] - hp[mu * nf + i]).abs());
            div += factors[mu][spec.pmom(mu, i)];
        }
        divergence_residual = divergence_residual.max((div + hq[i]).abs());
    }

    let mut gauge = vec![0.0; n * n * nf];
    for mu in 0..n {
        for nu in 0..n {
            for i in 0..nf {
                let diag = if nu == mu { -hq[i] / n as f64 } else { 0.0 };
                gauge[(mu * n + nu) * nf + i] = factors[mu][spec.pmom(nu, i)] - diag;
            }
        }
    }
    let lift = HamiltonianMultivector::from_factors(&spec, &factors, gauge)?;
    let dh = differential_of_h(ham, &at, true)?;
    let relation = defining_relation_residual(&spec, &lift.assembled, &dh)?;

    Ok(TangentLiftReport {
        velocity_residual,
        divergence_residual,
        defining_relation_residual: relation.residual,
        lift,
    })
}
