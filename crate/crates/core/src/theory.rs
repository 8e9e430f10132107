//! Lagrangian densities, De Donder–Weyl Hamiltonians and the covariant
//! Legendre transform between them.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::algebra::ChartSpec;
use crate::error::{Error, Result};
use crate::expr::{PotentialExpr, Scope, Var};
use crate::phase_space::ChartPoint;

const FD_STEP: f64 = 1e-6;

/// A point of the first jet bundle: `(x^μ, q^i, q^i_μ)`, with
/// `v[μ * N + i] = q^i_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoint {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl JetPoint {
    pub fn new(spec: &ChartSpec, x: Vec<f64>, q: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let (n, nf) = (spec.n(), spec.fields());
        if x.len() != n || q.len() != nf || v.len() != n * nf {
            return Err(Error::Shape(format!(
                "jet shapes (x {}, q {}, v {}) do not match n = {n}, N = {nf}",
                x.len(),
                q.len(),
                v.len()
            )));
        }
        Ok(Self { x, q, v })
    }
}

fn central_gradient<F>(at: &[f64], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for k in 0..at.len() {
        let h = FD_STEP * at[k].abs().max(1.0);
        probe[k] = at[k] + h;
        let fp = f(&probe)?;
        probe[k] = at[k] - h;
        let fm = f(&probe)?;
        probe[k] = at[k];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// `𝓛(x^μ, q^i, q^i_μ)` with first derivatives.
///
/// Derivatives default to central differences; implementors with closed forms
/// should override them.
pub trait LagrangianDensity: Send + Sync {
    fn chart(&self) -> &ChartSpec;

    fn value(&self, j: &JetPoint) -> Result<f64>;

    fn grad_x(&self, j: &JetPoint) -> Result<Vec<f64>> {
        central_gradient(&j.x, |x| {
            self.value(&JetPoint { x: x.to_vec(), q: j.q.clone(), v: j.v.clone() })
        })
    }

    fn grad_q(&self, j: &JetPoint) -> Result<Vec<f64>> {
        central_gradient(&j.q, |q| {
            self.value(&JetPoint { x: j.x.clone(), q: q.to_vec(), v: j.v.clone() })
        })
    }

    /// `∂𝓛/∂q^i_μ`, laid out like `v`.
    fn grad_v(&self, j: &JetPoint) -> Result<Vec<f64>> {
        central_gradient(&j.v, |v| {
            self.value(&JetPoint { x: j.x.clone(), q: j.q.clone(), v: v.to_vec() })
        })
    }

    /// `∂²𝓛/∂q^i_μ ∂q^j_ν`.
    fn hessian_vv(&self, j: &JetPoint) -> Result<DMatrix<f64>> {
        let m = j.v.len();
        let mut out = DMatrix::zeros(m, m);
        let mut probe = j.clone();
        for k in 0..m {
            let h = FD_STEP * j.v[k].abs().max(1.0);
            probe.v[k] = j.v[k] + h;
            let gp = self.grad_v(&probe)?;
            probe.v[k] = j.v[k] - h;
            let gm = self.grad_v(&probe)?;
            probe.v[k] = j.v[k];
            for r in 0..m {
                out[(r, k)] = (gp[r] - gm[r]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    /// Whether the theory declares its velocity Hessian invertible on the
    /// working domain.
    fn is_regular(&self) -> bool {
        true
    }
}

/// De Donder–Weyl Hamiltonian `𝓗(x^μ, q^i, p^μ_i)`. It never depends on the
/// translation coordinate `p`.
pub trait DwHamiltonian: Send + Sync {
    fn chart(&self) -> &ChartSpec;

    fn value(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<f64>;

    fn grad_x(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        central_gradient(x, |x| self.value(x, q, pmom))
    }

    fn grad_q(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        central_gradient(q, |q| self.value(x, q, pmom))
    }

    /// `∂𝓗/∂p^μ_i`, laid out like `pmom`.
    fn grad_pmom(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        central_gradient(pmom, |p| self.value(x, q, p))
    }
}

impl<T: LagrangianDensity + ?Sized> LagrangianDensity for &T {
    fn chart(&self) -> &ChartSpec {
        (**self).chart()
    }
    fn value(&self, j: &JetPoint) -> Result<f64> {
        (**self).value(j)
    }
    fn grad_x(&self, j: &JetPoint) -> Result<Vec<f64>> {
        (**self).grad_x(j)
    }
    fn grad_q(&self, j: &JetPoint) -> Result<Vec<f64>> {
        (**self).grad_q(j)
    }
    fn grad_v(&self, j: &JetPoint) -> Result<Vec<f64>> {
        (**self).grad_v(j)
    }
    fn hessian_vv(&self, j: &JetPoint) -> Result<DMatrix<f64>> {
        (**self).hessian_vv(j)
    }
    fn is_regular(&self) -> bool {
        (**self).is_regular()
    }
}

impl<T: DwHamiltonian + ?Sized> DwHamiltonian for &T {
    fn chart(&self) -> &ChartSpec {
        (**self).chart()
    }
    fn value(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<f64> {
        (**self).value(x, q, pmom)
    }
    fn grad_x(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        (**self).grad_x(x, q, pmom)
    }
    fn grad_q(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        (**self).grad_q(x, q, pmom)
    }
    fn grad_pmom(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        (**self).grad_pmom(x, q, pmom)
    }
}

/// Metric signature of the kinetic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Signature {
    /// `(+, −, …, −)`
    #[default]
    MostlyMinus,
    /// `(−, +, …, +)`
    MostlyPlus,
}

impl Signature {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+-" => Some(Signature::MostlyMinus),
            "-+" => Some(Signature::MostlyPlus),
            _ => None,
        }
    }

    pub fn diagonal(self, n: usize) -> Vec<f64> {
        let (first, rest) = match self {
            Signature::MostlyMinus => (1.0, -1.0),
            Signature::MostlyPlus => (-1.0, 1.0),
        };
        (0..n).map(|mu| if mu == 0 { first } else { rest }).collect()
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signature::MostlyMinus => "+-",
            Signature::MostlyPlus => "-+",
        })
    }
}

/// Self-interaction `V(x, q)` of a scalar multiplet.
#[derive(Debug, Clone)]
pub enum Potential {
    /// `½ m² Σ q_i²`
    Quadratic { mass: f64 },
    /// `Σ (1 − cos q_i)`
    SineGordon,
    Expr {
        expr: PotentialExpr,
        grad_x: Vec<PotentialExpr>,
        grad_q: Vec<PotentialExpr>,
    },
}

impl Potential {
    pub fn from_expr(expr: PotentialExpr) -> Self {
        let Scope { n, fields } = expr.scope();
        let grad_x = (0..n).map(|mu| expr.derivative(Var::X(mu))).collect();
        let grad_q = (0..fields).map(|i| expr.derivative(Var::Q(i))).collect();
        Potential::Expr { expr, grad_x, grad_q }
    }

    pub fn value(&self, x: &[f64], q: &[f64]) -> Result<f64> {
        Ok(match self {
            Potential::Quadratic { mass } => 0.5 * mass * mass * q.iter().map(|v| v * v).sum::<f64>(),
            Potential::SineGordon => q.iter().map(|v| 1.0 - v.cos()).sum(),
            Potential::Expr { expr, .. } => expr.eval(x, q).map_err(|e| Error::Eval(e.to_string()))?,
        })
    }

    pub fn grad_q(&self, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Potential::Quadratic { mass } => q.iter().map(|v| mass * mass * v).collect(),
            Potential::SineGordon => q.iter().map(|v| v.sin()).collect(),
            Potential::Expr { grad_q, .. } => grad_q
                .iter()
                .map(|g| g.eval(x, q).map_err(|e| Error::Eval(e.to_string())))
                .collect::<Result<_>>()?,
        })
    }

    pub fn grad_x(&self, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            Potential::Quadratic { .. } | Potential::SineGordon => vec![0.0; x.len()],
            Potential::Expr { grad_x, .. } => grad_x
                .iter()
                .map(|g| g.eval(x, q).map_err(|e| Error::Eval(e.to_string())))
                .collect::<Result<_>>()?,
        })
    }
}

/// Scalar multiplet with a diagonal kinetic term,
/// `𝓛 = ½ Σ_{μ,i} η_μ (q^i_μ)² − V(x, q)` and
/// `𝓗 = ½ Σ_{μ,i} η_μ (p^μ_i)² + V(x, q)`.
///
/// Implements both [`LagrangianDensity`] and [`DwHamiltonian`] in closed form.
#[derive(Debug, Clone)]
pub struct ScalarTheory {
    name: String,
    chart: ChartSpec,
    signature: Signature,
    eta: Vec<f64>,
    potential: Potential,
}

impl ScalarTheory {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        fields: usize,
        signature: Signature,
        potential: Potential,
    ) -> Result<Self> {
        let chart = ChartSpec::new(n, fields)?;
        if let Potential::Expr { expr, .. } = &potential {
            let scope = expr.scope();
            if scope.n > n || scope.fields > fields {
                return Err(Error::Shape(format!(
                    "potential scope (n {}, N {}) exceeds theory (n {n}, N {fields})",
                    scope.n, scope.fields
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            eta: signature.diagonal(n),
            chart,
            signature,
            potential,
        })
    }

    /// `H = ½p² + ½ω²q²` in mechanics form (`n = 1`).
    pub fn oscillator(omega: f64) -> Self {
        Self::new("oscillator", 1, 1, Signature::MostlyMinus, Potential::Quadratic { mass: omega })
            .expect("valid built-in chart")
    }

    /// Klein–Gordon field in 1+1 dimensions; `mass = 0` gives the massless field.
    pub fn free_scalar(mass: f64) -> Self {
        Self::new("free-scalar", 2, 1, Signature::MostlyMinus, Potential::Quadratic { mass })
            .expect("valid built-in chart")
    }

    pub fn sine_gordon() -> Self {
        Self::new("sine-gordon", 2, 1, Signature::MostlyMinus, Potential::SineGordon)
            .expect("valid built-in chart")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    fn kinetic(&self, comps: &[f64]) -> f64 {
        let nf = self.chart.fields();
        comps
            .iter()
            .enumerate()
            .map(|(k, c)| 0.5 * self.eta[k / nf] * c * c)
            .sum()
    }

    fn kinetic_grad(&self, comps: &[f64]) -> Vec<f64> {
        let nf = self.chart.fields();
        comps.iter().enumerate().map(|(k, c)| self.eta[k / nf] * c).collect()
    }
}

impl LagrangianDensity for ScalarTheory {
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    fn value(&self, j: &JetPoint) -> Result<f64> {
        Ok(self.kinetic(&j.v) - self.potential.value(&j.x, &j.q)?)
    }

    fn grad_x(&self, j: &JetPoint) -> Result<Vec<f64>> {
        Ok(self.potential.grad_x(&j.x, &j.q)?.into_iter().map(|g| -g).collect())
    }

    fn grad_q(&self, j: &JetPoint) -> Result<Vec<f64>> {
        Ok(self.potential.grad_q(&j.x, &j.q)?.into_iter().map(|g| -g).collect())
    }

    fn grad_v(&self, j: &JetPoint) -> Result<Vec<f64>> {
        Ok(self.kinetic_grad(&j.v))
    }

    fn hessian_vv(&self, j: &JetPoint) -> Result<DMatrix<f64>> {
        let nf = self.chart.fields();
        Ok(DMatrix::from_fn(j.v.len(), j.v.len(), |r, c| {
            if r == c {
                self.eta[r / nf]
            } else {
                0.0
            }
        }))
    }
}

impl DwHamiltonian for ScalarTheory {
    fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    fn value(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<f64> {
        Ok(self.kinetic(pmom) + self.potential.value(x, q)?)
    }

    fn grad_x(&self, x: &[f64], q: &[f64], _pmom: &[f64]) -> Result<Vec<f64>> {
        self.potential.grad_x(x, q)
    }

    fn grad_q(&self, x: &[f64], q: &[f64], _pmom: &[f64]) -> Result<Vec<f64>> {
        self.potential.grad_q(x, q)
    }

    fn grad_pmom(&self, _x: &[f64], _q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        Ok(self.kinetic_grad(pmom))
    }
}

/// Covariant Legendre transform `𝔽𝓛`:
/// `p^μ_i = ∂𝓛/∂q^i_μ`, `p = 𝓛 − p^μ_i q^i_μ`.
pub fn legendre_transform<L: LagrangianDensity + ?Sized>(lagrangian: &L, j: &JetPoint) -> Result<ChartPoint> {
    let pmom = lagrangian.grad_v(j)?;
    let value = lagrangian.value(j)?;
    let pairing: f64 = pmom.iter().zip(&j.v).map(|(p, v)| p * v).sum();
    Ok(ChartPoint {
        x: j.x.clone(),
        q: j.q.clone(),
        pmom,
        p: value - pairing,
    })
}

pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_TOL: f64 = 1e-12;

/// Solve `∂𝓛/∂q^i_μ(x, q, v) = p^μ_i` for the jet velocities by Newton's method.
///
/// Starts from `seed` when given, otherwise from `v = pmom`.
pub fn invert_polymomenta<L: LagrangianDensity + ?Sized>(
    lagrangian: &L,
    x: &[f64],
    q: &[f64],
    pmom: &[f64],
    seed: Option<&[f64]>,
) -> Result<JetPoint> {
    let mut jet = JetPoint::new(
        lagrangian.chart(),
        x.to_vec(),
        q.to_vec(),
        seed.unwrap_or(pmom).to_vec(),
    )?;
    let scale = pmom.iter().fold(1.0f64, |m, p| m.max(p.abs()));
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let g = lagrangian.grad_v(&jet)?;
        let r = DVector::from_iterator(g.len(), g.iter().zip(pmom).map(|(g, p)| g - p));
        residual = r.amax();
        if !residual.is_finite() {
            break;
        }
        if residual < NEWTON_TOL * scale {
            return Ok(jet);
        }
        let hess = lagrangian.hessian_vv(&jet)?;
        let Some(step) = hess.lu().solve(&r) else {
            break;
        };
        for (v, s) in jet.v.iter_mut().zip(step.iter()) {
            *v -= s;
        }
    }
    Err(Error::Singular {
        iterations: NEWTON_MAX_ITER,
        residual,
    })
}

/// `𝓗 = p^μ_i q^i_μ − 𝓛` obtained by inverting the Legendre map numerically.
///
/// Partials follow from the envelope identities `∂𝓗/∂p^μ_i = q^i_μ`,
/// `∂𝓗/∂q^i = −∂𝓛/∂q^i` and `∂𝓗/∂x^μ = −∂𝓛/∂x^μ`.
pub struct LegendreHamiltonian<L> {
    lagrangian: L,
}

pub fn hamiltonian_from_lagrangian<L: LagrangianDensity>(lagrangian: L) -> Result<LegendreHamiltonian<L>> {
    if !lagrangian.is_regular() {
        return Err(Error::Singular {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    Ok(LegendreHamiltonian { lagrangian })
}

impl<L: LagrangianDensity> LegendreHamiltonian<L> {
    pub fn lagrangian(&self) -> &L {
        &self.lagrangian
    }

    fn jet(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<JetPoint> {
        invert_polymomenta(&self.lagrangian, x, q, pmom, None)
    }
}

impl<L: LagrangianDensity> DwHamiltonian for LegendreHamiltonian<L> {
    fn chart(&self) -> &ChartSpec {
        self.lagrangian.chart()
    }

    fn value(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<f64> {
        let jet = self.jet(x, q, pmom)?;
        let pairing: f64 = pmom.iter().zip(&jet.v).map(|(p, v)| p * v).sum();
        Ok(pairing - self.lagrangian.value(&jet)?)
    }

    fn grad_x(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        let jet = self.jet(x, q, pmom)?;
        Ok(self.lagrangian.grad_x(&jet)?.into_iter().map(|g| -g).collect())
    }

    fn grad_q(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        let jet = self.jet(x, q, pmom)?;
        Ok(self.lagrangian.grad_q(&jet)?.into_iter().map(|g| -g).collect())
    }

    fn grad_pmom(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, q, pmom)?.v)
    }
}
