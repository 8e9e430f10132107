//! Covariant Hamilton–Jacobi theory: sections `T: E → P`, HJ potentials
//! `S = S^μ dⁿx_μ`, the foliation conditions (T1)–(T4), the projected
//! distribution on `E` and the geometric form `dT = 0`, `d(h∘T) = 0`.
//!
//! Coordinates on `E` are `(x^1 … x^n, q^1 … q^N)`. Partials of the composite
//! `𝓗∘T` are total derivatives on `E`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::algebra::{contract, exterior_derivative_numeric, wedge_all, ChartSpec, FnFormField, Form, Multivector};
use crate::dedonder_weyl::{build_hamiltonian_nvector, Gauge};
use crate::error::{Error, Result};
use crate::expr::{PotentialExpr, Var};
use crate::phase_space::{build_theta, volume_form, volume_minor, ChartPoint, ConfigPoint};
use crate::theory::DwHamiltonian;

/// Finite-difference step on `E`.
pub const FD_STEP: f64 = 1e-5;

type ValueFn = dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync;

#[derive(Clone)]
enum Repr {
    Expr { expr: PotentialExpr, grad: Vec<PotentialExpr> },
    Closure { value: Arc<ValueFn>, partials: Option<Arc<GradFn>> },
    Sum(Vec<EFn>),
}

/// A smooth function on a chart of `E`, with optional analytic partials.
#[derive(Clone)]
pub struct EFn {
    n: usize,
    fields: usize,
    repr: Repr,
}

impl fmt::Debug for EFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Expr { expr, .. } => write!(f, "EFn({expr})"),
            Repr::Closure { partials, .. } => {
                write!(f, "EFn(<closure>, analytic partials: {})", partials.is_some())
            }
            Repr::Sum(terms) => f.debug_tuple("EFn::Sum").field(terms).finish(),
        }
    }
}

impl EFn {
    pub fn new<F>(n: usize, fields: usize, value: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            fields,
            repr: Repr::Closure {
                value: Arc::new(value),
                partials: None,
            },
        }
    }

    /// Attach analytic partials, ordered `x` block then `q` block.
    pub fn with_partials<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        if let Repr::Closure { partials, .. } = &mut self.repr {
            *partials = Some(Arc::new(g));
        }
        self
    }

    pub fn constant(n: usize, fields: usize, c: f64) -> Self {
        Self::new(n, fields, move |_, _| Ok(c)).with_partials(move |_, _| Ok(vec![0.0; n + fields]))
    }

    /// Symbolic function; partials come from expression differentiation.
    pub fn from_expr(expr: PotentialExpr, n: usize, fields: usize) -> Result<Self> {
        let scope = expr.scope();
        if scope.n > n || scope.fields > fields {
            return Err(Error::Shape(format!(
                "expression scope (n {}, N {}) exceeds (n {n}, N {fields})",
                scope.n, scope.fields
            )));
        }
        let grad = (0..n)
            .map(Var::X)
            .chain((0..fields).map(Var::Q))
            .map(|v| expr.derivative(v))
            .collect();
        Ok(Self {
            n,
            fields,
            repr: Repr::Expr { expr, grad },
        })
    }

    pub fn sum(n: usize, fields: usize, terms: Vec<EFn>) -> Self {
        Self {
            n,
            fields,
            repr: Repr::Sum(terms),
        }
    }

    pub fn has_analytic_partials(&self) -> bool {
        match &self.repr {
            Repr::Expr { .. } => true,
            Repr::Closure { partials, .. } => partials.is_some(),
            Repr::Sum(terms) => terms.iter().all(EFn::has_analytic_partials),
        }
    }

    pub fn eval(&self, x: &[f64], q: &[f64]) -> Result<f64> {
        match &self.repr {
            Repr::Expr { expr, .. } => expr.eval(x, q).map_err(|e| Error::Eval(e.to_string())),
            Repr::Closure { value, .. } => value(x, q),
            Repr::Sum(terms) => terms.iter().map(|t| t.eval(x, q)).sum(),
        }
    }

    /// Partials in `E` coordinates, analytic when available and central
    /// differences (step [`FD_STEP`]) otherwise.
    pub fn partials(&self, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        match &self.repr {
            Repr::Expr { grad, .. } => grad
                .iter()
                .map(|g| g.eval(x, q).map_err(|e| Error::Eval(e.to_string())))
                .collect(),
            Repr::Closure { partials: Some(g), .. } => g(x, q),
            Repr::Closure { .. } => self.numeric_partials(x, q),
            Repr::Sum(terms) => {
                let mut out = vec![0.0; self.n + self.fields];
                for t in terms {
                    for (o, v) in out.iter_mut().zip(t.partials(x, q)?) {
                        *o += v;
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn numeric_partials(&self, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let mut coords: Vec<f64> = x.iter().chain(q).copied().collect();
        let mut out = Vec::with_capacity(coords.len());
        for k in 0..coords.len() {
            let saved = coords[k];
            coords[k] = saved + FD_STEP;
            let up = self.eval(&coords[..self.n], &coords[self.n..])?;
            coords[k] = saved - FD_STEP;
            let down = self.eval(&coords[..self.n], &coords[self.n..])?;
            coords[k] = saved;
            out.push((up - down) / (2.0 * FD_STEP));
        }
        Ok(out)
    }

    /// `∂f/∂e^k` as a new function.
    pub fn derivative(&self, k: usize) -> EFn {
        match &self.repr {
            Repr::Expr { grad, .. } => EFn::from_expr(grad[k].clone(), self.n, self.fields)
                .expect("derivative keeps the scope"),
            Repr::Sum(terms) => EFn::sum(self.n, self.fields, terms.iter().map(|t| t.derivative(k)).collect()),
            Repr::Closure { .. } => {
                let base = self.clone();
                EFn::new(self.n, self.fields, move |x, q| Ok(base.partials(x, q)?[k]))
            }
        }
    }
}

/// `S = S^μ dⁿx_μ`.
#[derive(Debug, Clone)]
pub struct HJPotential {
    n: usize,
    fields: usize,
    components: Vec<EFn>,
}

impl HJPotential {
    pub fn new(n: usize, fields: usize, components: Vec<EFn>) -> Result<Self> {
        if components.len() != n {
            return Err(Error::Shape(format!("need {n} potential components, got {}", components.len())));
        }
        Ok(Self { n, fields, components })
    }

    pub fn zero(n: usize, fields: usize) -> Self {
        Self {
            n,
            fields,
            components: (0..n).map(|_| EFn::constant(n, fields, 0.0)).collect(),
        }
    }

    pub fn from_exprs(n: usize, fields: usize, exprs: Vec<PotentialExpr>) -> Result<Self> {
        let components = exprs
            .into_iter()
            .map(|e| EFn::from_expr(e, n, fields))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, fields, components)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn components(&self) -> &[EFn] {
        &self.components
    }

    /// `max |∂²S^μ/∂q^i∂x^ν − ∂²S^μ/∂x^ν∂q^i|` at a point, both orders by finite
    /// differences of the first partials.
    pub fn mixed_partial_asymmetry(&self, at: &ConfigPoint) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in &self.components {
            let rows: Vec<Vec<f64>> = (0..self.n + self.fields)
                .map(|k| s.derivative(k).numeric_partials(&at.x, &at.q))
                .collect::<Result<_>>()?;
            for nu in 0..self.n {
                for i in 0..self.fields {
                    worst = worst.max((rows[self.n + i][nu] - rows[nu][self.n + i]).abs());
                }
            }
        }
        Ok(worst)
    }

    /// The horizontal `(n−1)`-form `S^μ dⁿx_μ` on `E`.
    pub fn form(&self, at: &ConfigPoint) -> Result<Form> {
        let dim = self.n + self.fields;
        let mut out = Form::zero(dim, self.n - 1)?;
        for (mu, s) in self.components.iter().enumerate() {
            out = out.add(&volume_minor(dim, self.n, mu)?.scale(s.eval(&at.x, &at.q)?))?;
        }
        Ok(out)
    }
}

/// Components `(T^μ_i, T_0)` of a section of `P → E`.
#[derive(Debug, Clone)]
pub struct PhaseSection {
    n: usize,
    fields: usize,
    /// μ-major.
    tmom: Vec<EFn>,
    t0: EFn,
}

/// Values and first partials of a section at one point.
#[derive(Debug, Clone)]
pub struct SectionJet {
    pub tmom: Vec<f64>,
    pub t0: f64,
    /// `d_tmom[c][k] = ∂T^c/∂e^k`.
    pub d_tmom: Vec<Vec<f64>>,
    pub d_t0: Vec<f64>,
}

impl PhaseSection {
    pub fn new(n: usize, fields: usize, tmom: Vec<EFn>, t0: EFn) -> Result<Self> {
        if tmom.len() != n * fields {
            return Err(Error::Shape(format!(
                "section needs {} momentum components, got {}",
                n * fields,
                tmom.len()
            )));
        }
        Ok(Self { n, fields, tmom, t0 })
    }

    pub fn zero(n: usize, fields: usize) -> Self {
        Self {
            n,
            fields,
            tmom: (0..n * fields).map(|_| EFn::constant(n, fields, 0.0)).collect(),
            t0: EFn::constant(n, fields, 0.0),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn tmom(&self) -> &[EFn] {
        &self.tmom
    }

    pub fn t0(&self) -> &EFn {
        &self.t0
    }

    pub fn eval(&self, at: &ConfigPoint) -> Result<(Vec<f64>, f64)> {
        let tmom = self.tmom.iter().map(|f| f.eval(&at.x, &at.q)).collect::<Result<_>>()?;
        Ok((tmom, self.t0.eval(&at.x, &at.q)?))
    }

    pub fn jet(&self, at: &ConfigPoint) -> Result<SectionJet> {
        let (tmom, t0) = self.eval(at)?;
        Ok(SectionJet {
            tmom,
            t0,
            d_tmom: self.tmom.iter().map(|f| f.partials(&at.x, &at.q)).collect::<Result<_>>()?,
            d_t0: self.t0.partials(&at.x, &at.q)?,
        })
    }

    /// `T(e)` as a point of `P`.
    pub fn lift(&self, at: &ConfigPoint) -> Result<ChartPoint> {
        let (pmom, p) = self.eval(at)?;
        Ok(ChartPoint {
            x: at.x.clone(),
            q: at.q.clone(),
            pmom,
            p,
        })
    }

    /// `T = T^μ_i dq^i ∧ dⁿx_μ + T_0 dⁿx` on `E`.
    pub fn form(&self, at: &ConfigPoint) -> Result<Form> {
        let (tmom, t0) = self.eval(at)?;
        section_form(self.n, self.fields, &tmom, t0)
    }

    fn check(&self, spec: &ChartSpec) -> Result<()> {
        if spec.n() != self.n || spec.fields() != self.fields {
            return Err(Error::Shape(format!(
                "section (n {}, N {}) does not match the theory (n {}, N {})",
                self.n,
                self.fields,
                spec.n(),
                spec.fields()
            )));
        }
        Ok(())
    }
}

fn section_form(n: usize, nf: usize, tmom: &[f64], t0: f64) -> Result<Form> {
    let dim = n + nf;
    let mut out = volume_form(dim, n)?.scale(t0);
    for mu in 0..n {
        let minor = volume_minor(dim, n, mu)?;
        for i in 0..nf {
            let term = Form::basis(dim, &[n + i])?.wedge(&minor)?;
            out = out.add(&term.scale(tmom[mu * nf + i]))?;
        }
    }
    Ok(out)
}

/// `T^μ_i = ∂S^μ/∂q^i`, `T_0 = Σ_μ ∂S^μ/∂x^μ`.
pub fn section_from_potential(s: &HJPotential) -> PhaseSection {
    let (n, nf) = (s.n, s.fields);
    let mut tmom = Vec::with_capacity(n * nf);
    for comp in &s.components {
        for i in 0..nf {
            tmom.push(comp.derivative(n + i));
        }
    }
    let t0 = EFn::sum(n, nf, s.components.iter().enumerate().map(|(mu, c)| c.derivative(mu)).collect());
    PhaseSection { n, fields: nf, tmom, t0 }
}

/// `Σ_μ ∂S^μ/∂x^μ + 𝓗(x, q, ∂S^μ/∂q^i)`.
pub fn hj_residual<H: DwHamiltonian + ?Sized>(ham: &H, s: &HJPotential, at: &ConfigPoint) -> Result<f64> {
    let (n, nf) = (s.n, s.fields);
    let mut div = 0.0;
    let mut pmom = Vec::with_capacity(n * nf);
    for (mu, comp) in s.components.iter().enumerate() {
        let d = comp.partials(&at.x, &at.q)?;
        div += d[mu];
        pmom.extend_from_slice(&d[n..n + nf]);
    }
    Ok(div + ham.value(&at.x, &at.q, &pmom)?)
}

/// Axis-aligned box in `E` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::Shape("domain bounds must pair up with lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Uniform lattice with `per_axis` points along every axis (endpoints included).
    pub fn lattice(&self, n: usize, per_axis: usize) -> Vec<ConfigPoint> {
        let dim = self.lower.len();
        let per_axis = per_axis.max(1);
        let total = per_axis.pow(dim as u32);
        (0..total)
            .map(|mut k| {
                let mut coords = vec![0.0; dim];
                for a in (0..dim).rev() {
                    let idx = k % per_axis;
                    k /= per_axis;
                    let frac = if per_axis == 1 { 0.5 } else { idx as f64 / (per_axis - 1) as f64 };
                    coords[a] = self.lower[a] + frac * (self.upper[a] - self.lower[a]);
                }
                ConfigPoint::from_coords(n, &coords)
            })
            .collect()
    }

    pub fn random<R: Rng + ?Sized>(&self, n: usize, count: usize, rng: &mut R) -> Vec<ConfigPoint> {
        (0..count)
            .map(|_| {
                let coords: Vec<f64> = self
                    .lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(&a, &b)| if a == b { a } else { rng.random_range(a..b) })
                    .collect();
                ConfigPoint::from_coords(n, &coords)
            })
            .collect()
    }
}

/// Condition identifiers used in residual reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    T1,
    T2,
    T3,
    /// `∂𝓗/∂p^μ_i ∘ T`.
    T4,
    /// `∂𝓗/∂q^i ∘ T`, the condition as printed.
    T4Literal,
    /// Coefficients of `dT` on `dq ∧ dⁿx`.
    DT,
    /// Coefficients of `dT` on `dq^i ∧ dq^j ∧ dⁿ⁻¹x` (only for `N ≥ 2`).
    DTSymmetry,
    DhT,
    ThetaPullback,
    DS,
    Frobenius,
}

impl Condition {
    pub fn id(self) -> &'static str {
        match self {
            Condition::T1 => "T1",
            Condition::T2 => "T2",
            Condition::T3 => "T3",
            Condition::T4 => "T4",
            Condition::T4Literal => "T4-literal",
            Condition::DT => "dT",
            Condition::DTSymmetry => "dT-symmetry",
            Condition::DhT => "d(h.T)",
            Condition::ThetaPullback => "theta-pullback",
            Condition::DS => "dS",
            Condition::Frobenius => "frobenius",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub condition: Condition,
    /// `E` coordinates of the sample.
    pub at: Vec<f64>,
    pub residual: f64,
}

/// Per-condition residual rows.
#[derive(Debug, Clone, Default)]
pub struct ResidualTable {
    pub n: usize,
    pub fields: usize,
    pub rows: Vec<ResidualRow>,
}

impl ResidualTable {
    fn new(n: usize, fields: usize) -> Self {
        Self {
            n,
            fields,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, condition: Condition, at: &ConfigPoint, residual: f64) {
        self.rows.push(ResidualRow {
            condition,
            at: at.coords(),
            residual,
        });
    }

    /// Largest residual of a condition; 0 if absent.
    pub fn max(&self, condition: Condition) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.condition == condition)
            .map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    /// Columns `condition,x1..xn,q1..qN,residual`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "condition")?;
        for mu in 1..=self.n {
            write!(out, ",x{mu}")?;
        }
        for i in 1..=self.fields {
            write!(out, ",q{i}")?;
        }
        writeln!(out, ",residual")?;
        for r in &self.rows {
            write!(out, "{}", r.condition)?;
            for c in &r.at {
                write!(out, ",{c:.16e}")?;
            }
            writeln!(out, ",{:.16e}", r.residual)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Theorem2Report {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t4_literal: f64,
    pub table: ResidualTable,
}

impl Theorem2Report {
    pub fn passes_t1_t3(&self, tol: f64) -> bool {
        self.t1 < tol && self.t2 < tol && self.t3 < tol
    }

    pub fn passes_all(&self, tol: f64) -> bool {
        self.passes_t1_t3(tol) && self.t4 < tol
    }
}

/// Signed residual vectors of (T1)–(T3) at one point.
#[derive(Debug, Clone)]
pub struct PointResiduals {
    /// Per field `i`.
    pub t1: Vec<f64>,
    /// Per base direction `μ`.
    pub t2: Vec<f64>,
    /// Per field `i`.
    pub t3: Vec<f64>,
    /// μ-major.
    pub t4: Vec<f64>,
    pub t4_literal: Vec<f64>,
}

/// (T1) `Σ_μ ∂_μT^μ_i + ∂_i(𝓗∘T)`, (T2) `∂_μT_0 + ∂_μ(𝓗∘T)`,
/// (T3) `Σ_μ ∂_μT^μ_i − ∂_iT_0`, (T4) `∂𝓗/∂p^μ_i ∘ T` at one point.
pub fn theorem2_residuals<H: DwHamiltonian + ?Sized>(
    ham: &H,
    t: &PhaseSection,
    at: &ConfigPoint,
) -> Result<PointResiduals> {
    t.check(ham.chart())?;
    let (n, nf) = (t.n, t.fields);
    let jet = t.jet(at)?;
    let hx = ham.grad_x(&at.x, &at.q, &jet.tmom)?;
    let hq = ham.grad_q(&at.x, &at.q, &jet.tmom)?;
    let hp = ham.grad_pmom(&at.x, &at.q, &jet.tmom)?;
    // total derivative of 𝓗∘T along e^k
    let total = |k: usize, explicit: f64| -> f64 {
        explicit + (0..n * nf).map(|c| hp[c] * jet.d_tmom[c][k]).sum::<f64>()
    };
    let div = |i: usize| -> f64 { (0..n).map(|mu| jet.d_tmom[mu * nf + i][mu]).sum() };
    Ok(PointResiduals {
        t1: (0..nf).map(|i| div(i) + total(n + i, hq[i])).collect(),
        t2: (0..n).map(|mu| jet.d_t0[mu] + total(mu, hx[mu])).collect(),
        t3: (0..nf).map(|i| div(i) - jet.d_t0[n + i]).collect(),
        t4: hp,
        t4_literal: hq,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Evaluate (T1)–(T4) and the literal (T4) on a sample set.
pub fn check_theorem2_conditions<H: DwHamiltonian + ?Sized>(
    ham: &H,
    t: &PhaseSection,
    samples: &[ConfigPoint],
) -> Result<Theorem2Report> {
    let mut table = ResidualTable::new(t.n, t.fields);
    for at in samples {
        let r = theorem2_residuals(ham, t, at)?;
        table.push(Condition::T1, at, max_abs(&r.t1));
        table.push(Condition::T2, at, max_abs(&r.t2));
        table.push(Condition::T3, at, max_abs(&r.t3));
        table.push(Condition::T4, at, max_abs(&r.t4));
        table.push(Condition::T4Literal, at, max_abs(&r.t4_literal));
    }
    Ok(Theorem2Report {
        t1: table.max(Condition::T1),
        t2: table.max(Condition::T2),
        t3: table.max(Condition::T3),
        t4: table.max(Condition::T4),
        t4_literal: table.max(Condition::T4Literal),
        table,
    })
}

/// `Z̃_μ = Tπ_{EP} Z_μ(T(e))`, as component vectors on `E`.
pub fn project_distribution<H: DwHamiltonian + ?Sized>(
    ham: &H,
    t: &PhaseSection,
    at: &ConfigPoint,
    gauge: &Gauge,
) -> Result<Vec<Vec<f64>>> {
    let spec = ham.chart();
    t.check(spec)?;
    let x = build_hamiltonian_nvector(ham, &t.lift(at)?, gauge)?;
    Ok(x.components
        .iter()
        .map(|z| {
            (0..spec.n())
                .map(|mu| z.coeff(&[spec.x(mu)]))
                .chain((0..spec.fields()).map(|i| z.coeff(&[spec.q(i)])))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct FoliationReport {
    /// Largest component of `[Z̃_μ, Z̃_ν]` outside `span{Z̃_λ}`.
    pub max_out_of_span: f64,
    pub table: ResidualTable,
}

/// Frobenius check of the projected distribution, with commutators from
/// central differences of the `Z̃` components.
pub fn foliation_integrability_check<H: DwHamiltonian + ?Sized>(
    ham: &H,
    t: &PhaseSection,
    samples: &[ConfigPoint],
) -> Result<FoliationReport> {
    let spec = ham.chart();
    t.check(spec)?;
    let (n, nf) = (spec.n(), spec.fields());
    let dim = n + nf;
    let mut table = ResidualTable::new(n, nf);
    for at in samples {
        if n == 1 {
            table.push(Condition::Frobenius, at, 0.0);
            continue;
        }
        let z = project_distribution(ham, t, at, &Gauge::Zero)?;
        // dz[k][μ][c] = ∂Z̃_μ^c/∂e^k
        let mut dz = Vec::with_capacity(dim);
        let coords = at.coords();
        for k in 0..dim {
            let mut up = coords.clone();
            let mut down = coords.clone();
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            let zu = project_distribution(ham, t, &ConfigPoint::from_coords(n, &up), &Gauge::Zero)?;
            let zd = project_distribution(ham, t, &ConfigPoint::from_coords(n, &down), &Gauge::Zero)?;
            dz.push(
                (0..n)
                    .map(|mu| (0..dim).map(|c| (zu[mu][c] - zd[mu][c]) / (2.0 * FD_STEP)).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            );
        }
        let mut worst = 0.0f64;
        for mu in 0..n {
            for nu in mu + 1..n {
                let bracket: Vec<f64> = (0..dim)
                    .map(|c| {
                        (0..dim)
                            .map(|k| z[mu][k] * dz[k][nu][c] - z[nu][k] * dz[k][mu][c])
                            .sum::<f64>()
                    })
                    .collect();
                // the Z̃_λ are normalized to ∂_λ, so the x-part fixes the span coefficients
                let out: Vec<f64> = (0..dim)
                    .map(|c| bracket[c] - (0..n).map(|l| bracket[l] * z[l][c]).sum::<f64>())
                    .collect();
                worst = worst.max(max_abs(&out));
            }
        }
        table.push(Condition::Frobenius, at, worst);
    }
    Ok(FoliationReport {
        max_out_of_span: table.max(Condition::Frobenius),
        table,
    })
}

#[derive(Debug, Clone)]
pub struct GeometricReport {
    /// `dT` on the `dq ∧ dⁿx` blades.
    pub dt: f64,
    /// `dT` on blades with two `dq` factors; (T1)–(T3) do not control these.
    pub dt_symmetry: f64,
    pub dh_t: f64,
    /// `|T^*Θ − T|`.
    pub theta_pullback: f64,
    /// `|dS − T|` when the section comes from a potential.
    pub ds: Option<f64>,
    /// Largest mismatch between the `dT`, `d(h∘T)` coefficients and the
    /// values predicted from the (T1)–(T3) residuals.
    pub coordinate_mismatch: f64,
    pub table: ResidualTable,
}

impl GeometricReport {
    pub fn vanishes(&self, tol: f64) -> bool {
        self.dt < tol && self.dh_t < tol
    }
}

fn subsets(dim: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, dim: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for a in start..dim {
            cur.push(a);
            go(a + 1, dim, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, dim, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Pull back `Θ` along the section at a point.
pub fn theta_pullback(spec: &ChartSpec, t: &PhaseSection, at: &ConfigPoint) -> Result<Form> {
    t.check(spec)?;
    let (n, nf) = (spec.n(), spec.fields());
    let dim = n + nf;
    let jet = t.jet(at)?;
    let theta = build_theta(spec, &t.lift(at)?)?;
    let pushed: Vec<Multivector> = (0..dim)
        .map(|k| {
            let mut v = vec![0.0; spec.dim()];
            v[if k < n { spec.x(k) } else { spec.q(k - n) }] = 1.0;
            for c in 0..n * nf {
                v[spec.pmom(c / nf, c % nf)] = jet.d_tmom[c][k];
            }
            v[spec.p()] = jet.d_t0[k];
            Multivector::from_components(&v)
        })
        .collect::<Result<_>>()?;
    let mut terms = Vec::new();
    for blade in subsets(dim, n) {
        let vecs: Vec<Multivector> = blade.iter().map(|&k| pushed[k].clone()).collect();
        let value = contract(&wedge_all(&vecs)?, &theta)?.coeff(&[]);
        terms.push((blade, value));
    }
    Form::from_terms(dim, n, terms)
}

/// `dT = 0`, `d(h∘T) = 0` by finite-difference exterior derivatives on `E`,
/// plus `T^*Θ = T` and (for potentials) `dS = T`.
pub fn geometric_form_check<H: DwHamiltonian + ?Sized>(
    ham: &H,
    t: &PhaseSection,
    potential: Option<&HJPotential>,
    samples: &[ConfigPoint],
) -> Result<GeometricReport> {
    let spec = ham.chart();
    t.check(spec)?;
    let (n, nf) = (spec.n(), spec.fields());
    let dim = n + nf;

    let tf = t.clone();
    let t_field = FnFormField::new(dim, n, move |e| tf.form(&ConfigPoint::from_coords(n, e)));
    let h_of_t = |e: &[f64]| -> Result<f64> {
        let at = ConfigPoint::from_coords(n, e);
        let (pmom, t0) = t.eval(&at)?;
        Ok(-ham.value(&at.x, &at.q, &pmom)? - t0)
    };

    let mut table = ResidualTable::new(n, nf);
    let mut ds_max: Option<f64> = potential.map(|_| 0.0);
    let mut mismatch = 0.0f64;
    let minor_blade = |mu_skip: Option<usize>| -> Vec<usize> { (0..n).filter(|&m| Some(m) != mu_skip).collect() };

    for at in samples {
        let e = at.coords();
        let dt_form = exterior_derivative_numeric(&t_field, &e, FD_STEP)?;
        let mut dh = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut up = e.clone();
            let mut down = e.clone();
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            dh.push((h_of_t(&up)? - h_of_t(&down)?) / (2.0 * FD_STEP));
        }

        let mut dt_main = 0.0f64;
        let mut dt_sym = 0.0f64;
        for (blade, c) in dt_form.iter() {
            let qs = blade.indices().iter().filter(|&&a| a >= n).count();
            if qs >= 2 {
                dt_sym = dt_sym.max(c.abs());
            } else {
                dt_main = dt_main.max(c.abs());
            }
        }
        table.push(Condition::DT, at, dt_main);
        if nf >= 2 {
            table.push(Condition::DTSymmetry, at, dt_sym);
        }
        table.push(Condition::DhT, at, max_abs(&dh));

        let pull = theta_pullback(spec, t, at)?;
        table.push(Condition::ThetaPullback, at, pull.max_abs_diff(&t.form(at)?)?);

        if let (Some(s), Some(worst)) = (potential, ds_max.as_mut()) {
            let sc = s.clone();
            let s_field = FnFormField::new(dim, n - 1, move |e| sc.form(&ConfigPoint::from_coords(n, e)));
            let r = exterior_derivative_numeric(&s_field, &e, FD_STEP)?.max_abs_diff(&t.form(at)?)?;
            table.push(Condition::DS, at, r);
            *worst = worst.max(r);
        }

        // coefficient oracle: dT|_{dq^i∧dⁿx} = −T3_i, d(h∘T) = −T2_μ dx^μ − (T1_i − T3_i) dq^i
        let r = theorem2_residuals(ham, t, at)?;
        let volume_with_q = |i: usize| -> Vec<usize> {
            let mut b = vec![n + i];
            b.extend(minor_blade(None));
            b
        };
        for i in 0..nf {
            mismatch = mismatch.max((dt_form.coeff(&volume_with_q(i)) + r.t3[i]).abs());
            mismatch = mismatch.max((dh[n + i] + r.t1[i] - r.t3[i]).abs());
        }
        for mu in 0..n {
            mismatch = mismatch.max((dh[mu] + r.t2[mu]).abs());
        }
    }

    Ok(GeometricReport {
        dt: table.max(Condition::DT),
        dt_symmetry: table.max(Condition::DTSymmetry),
        dh_t: table.max(Condition::DhT),
        theta_pullback: table.max(Condition::ThetaPullback),
        ds: ds_max,
        coordinate_mismatch: mismatch,
        table,
    })
}

/// `𝓗` in fiber coordinates `q′ = q − f(x)`:
/// `𝓗′(x, q′, P) = 𝓗(x, q′ + f(x), P) − P^μ_i ∂_μ f^i`.
#[derive(Debug, Clone)]
pub struct TranslatedHamiltonian<H> {
    inner: H,
    shift: Vec<EFn>,
}

impl<H: DwHamiltonian> TranslatedHamiltonian<H> {
    /// `shift[i] = f^i`, functions of `x` only.
    pub fn new(inner: H, shift: Vec<EFn>) -> Result<Self> {
        if shift.len() != inner.chart().fields() {
            return Err(Error::Shape(format!(
                "need {} shift functions, got {}",
                inner.chart().fields(),
                shift.len()
            )));
        }
        Ok(Self { inner, shift })
    }

    fn original_q(&self, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        self.shift.iter().zip(q).map(|(f, qi)| Ok(qi + f.eval(x, q)?)).collect()
    }

    /// `∂_μ f^i`, μ-major.
    fn shift_gradient(&self, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let (n, nf) = (x.len(), q.len());
        let grads: Vec<Vec<f64>> = self.shift.iter().map(|f| f.partials(x, q)).collect::<Result<_>>()?;
        Ok((0..n * nf).map(|c| grads[c % nf][c / nf]).collect())
    }
}

impl<H: DwHamiltonian> DwHamiltonian for TranslatedHamiltonian<H> {
    fn chart(&self) -> &ChartSpec {
        self.inner.chart()
    }

    fn value(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<f64> {
        let df = self.shift_gradient(x, q)?;
        let shift: f64 = pmom.iter().zip(&df).map(|(p, d)| p * d).sum();
        Ok(self.inner.value(x, &self.original_q(x, q)?, pmom)? - shift)
    }

    fn grad_q(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        self.inner.grad_q(x, &self.original_q(x, q)?, pmom)
    }

    fn grad_pmom(&self, x: &[f64], q: &[f64], pmom: &[f64]) -> Result<Vec<f64>> {
        let df = self.shift_gradient(x, q)?;
        let g = self.inner.grad_pmom(x, &self.original_q(x, q)?, pmom)?;
        Ok(g.iter().zip(&df).map(|(a, b)| a - b).collect())
    }
}

/// The same section in coordinates `q′ = q − f(x)`:
/// `T′(x, q′) = T(x, q′ + f)` and `T′_0 = T_0 + T^μ_i ∂_μ f^i`.
pub fn translate_section(t: &PhaseSection, shift: &[EFn]) -> Result<PhaseSection> {
    let (n, nf) = (t.n, t.fields);
    if shift.len() != nf {
        return Err(Error::Shape(format!("need {nf} shift functions, got {}", shift.len())));
    }
    let shift: Arc<Vec<EFn>> = Arc::new(shift.to_vec());
    let original = {
        let shift = shift.clone();
        move |x: &[f64], q: &[f64]| -> Result<Vec<f64>> {
            shift.iter().zip(q).map(|(f, qi)| Ok(qi + f.eval(x, q)?)).collect()
        }
    };
    let original = Arc::new(original);
    let tmom = t
        .tmom
        .iter()
        .map(|f| {
            let (f, original) = (f.clone(), original.clone());
            EFn::new(n, nf, move |x, q| f.eval(x, &original(x, q)?))
        })
        .collect();
    let t0 = {
        let (section, original, shift) = (t.clone(), original.clone(), shift.clone());
        EFn::new(n, nf, move |x, q| {
            let oq = original(x, q)?;
            let at = ConfigPoint { x: x.to_vec(), q: oq };
            let (tm, t0) = section.eval(&at)?;
            let mut extra = 0.0;
            for (i, f) in shift.iter().enumerate() {
                let d = f.partials(x, q)?;
                for mu in 0..n {
                    extra += tm[mu * nf + i] * d[mu];
                }
            }
            Ok(t0 + extra)
        })
    };
    PhaseSection::new(n, nf, tmom, t0)
}

/// A random polynomial-plus-trigonometric section of order one; generically
/// fails (T1)–(T3).
pub fn random_section<R: Rng + ?Sized>(n: usize, fields: usize, rng: &mut R, scale: f64) -> PhaseSection {
    let component = |rng: &mut R| {
        let dim = n + fields;
        let lin: Vec<f64> = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
        let freq: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (c, amp) = (rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        let (lin2, freq2) = (lin.clone(), freq.clone());
        EFn::new(n, fields, move |x, q| {
            let e = x.iter().chain(q);
            let phase: f64 = e.clone().zip(&freq).map(|(a, b)| a * b).sum();
            Ok(c + e.zip(&lin).map(|(a, b)| a * b).sum::<f64>() + amp * phase.sin())
        })
        .with_partials(move |x, q| {
            let phase: f64 = x.iter().chain(q).zip(&freq2).map(|(a, b)| a * b).sum();
            Ok(lin2.iter().zip(&freq2).map(|(l, f)| l + amp * f * phase.cos()).collect())
        })
    };
    let tmom = (0..n * fields).map(|_| component(rng)).collect();
    let t0 = component(rng);
    PhaseSection::new(n, fields, tmom, t0).expect("shapes match")
}
