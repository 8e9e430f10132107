//! Exterior algebra over a single coordinate chart.
//!
//! Multivectors and forms share one sparse representation, [`Alternating`],
//! keyed by [`Blade`]s (sets of basis indices stored as bitmasks). The kind
//! marker keeps vectors and covectors apart at the type level so that only
//! `contract(multivector, form)` type-checks.

use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;

use crate::error::{Error, Result};

/// Largest chart dimension a [`Blade`] can index.
pub const MAX_DIM: usize = 64;

/// Coefficients below this magnitude are dropped after every operation.
pub const ZERO_TOL: f64 = 1e-15;

/// Default finite-difference step for [`exterior_derivative`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// Coordinate chart of the multisymplectic phase space.
///
/// Coordinates are ordered `x^1..x^n`, `q^1..q^N`, `p^1_1..p^n_N` (μ-major), `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartSpec {
    n: usize,
    fields: usize,
    names: Vec<String>,
}

impl ChartSpec {
    pub fn new(n: usize, fields: usize) -> Result<Self> {
        if n == 0 || fields == 0 {
            return Err(Error::InvalidChart(format!(
                "need n >= 1 and N >= 1, got n = {n}, N = {fields}"
            )));
        }
        let dim = (fields + 1) * (n + 1);
        if dim > MAX_DIM {
            return Err(Error::InvalidChart(format!(
                "dimension {dim} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        let mut names = Vec::with_capacity(dim);
        names.extend((1..=n).map(|mu| format!("x{mu}")));
        names.extend((1..=fields).map(|i| format!("q{i}")));
        for mu in 1..=n {
            names.extend((1..=fields).map(|i| format!("p{mu}_{i}")));
        }
        names.push("p".to_string());
        Ok(Self { n, fields, names })
    }

    /// Space-time dimension n.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Fiber dimension N.
    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn dim(&self) -> usize {
        (self.fields + 1) * (self.n + 1)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self, mu: usize) -> usize {
        debug_assert!(mu < self.n);
        mu
    }

    pub fn q(&self, i: usize) -> usize {
        debug_assert!(i < self.fields);
        self.n + i
    }

    /// Index of the polymomentum `p^μ_i`.
    pub fn pmom(&self, mu: usize, i: usize) -> usize {
        debug_assert!(mu < self.n && i < self.fields);
        self.n + self.fields + mu * self.fields + i
    }

    /// Index of the translation coordinate `p`.
    pub fn p(&self) -> usize {
        self.dim() - 1
    }
}

/// A set of strictly increasing basis indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Blade(u64);

impl Blade {
    pub const EMPTY: Blade = Blade(0);

    pub fn from_bits(bits: u64) -> Self {
        Blade(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn grade(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_DIM && self.0 & (1 << index) != 0
    }

    pub fn indices(self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.grade());
        let mut bits = self.0;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            out.push(i);
            bits &= bits - 1;
        }
        out
    }

    /// Sorts `indices` into a blade, returning the permutation sign.
    /// Repeated indices give `None`.
    pub fn sorted(indices: &[usize]) -> Option<(f64, Blade)> {
        let mut acc = Blade::EMPTY;
        let mut sign = 1.0;
        for &i in indices {
            let (s, b) = wedge_blades(acc, Blade(1 << i))?;
            sign *= s;
            acc = b;
        }
        Some((sign, acc))
    }
}

/// Sign and blade of `e_a ∧ e_b`, or `None` when they share an index.
fn wedge_blades(a: Blade, b: Blade) -> Option<(f64, Blade)> {
    if a.0 & b.0 != 0 {
        return None;
    }
    // inversions: pairs (i in a, j in b) with i > j
    let mut inversions = 0u32;
    let mut bits = b.0;
    while bits != 0 {
        let j = bits.trailing_zeros();
        inversions += (a.0 >> j).count_ones();
        bits &= bits - 1;
    }
    let sign = if inversions.is_multiple_of(2) { 1.0 } else { -1.0 };
    Some((sign, Blade(a.0 | b.0)))
}

/// Marker for tangent multivectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vectors {}

/// Marker for differential forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covectors {}

pub trait Kind: Clone + fmt::Debug + Send + Sync + 'static {
    const SYMBOL: &'static str;
}

impl Kind for Vectors {
    const SYMBOL: &'static str = "∂";
}

impl Kind for Covectors {
    const SYMBOL: &'static str = "d";
}

/// Homogeneous element of the exterior algebra of a `dim`-dimensional space.
#[derive(Clone, PartialEq)]
pub struct Alternating<K: Kind> {
    dim: usize,
    degree: usize,
    terms: BTreeMap<Blade, f64>,
    kind: PhantomData<K>,
}

pub type Multivector = Alternating<Vectors>;
pub type Form = Alternating<Covectors>;

impl<K: Kind> Alternating<K> {
    pub fn zero(dim: usize, degree: usize) -> Result<Self> {
        if dim > MAX_DIM {
            return Err(Error::InvalidChart(format!(
                "dimension {dim} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        if degree > dim {
            return Err(Error::DegreeOverflow {
                left: degree,
                right: 0,
                dim,
            });
        }
        Ok(Self {
            dim,
            degree,
            terms: BTreeMap::new(),
            kind: PhantomData,
        })
    }

    pub fn scalar(dim: usize, value: f64) -> Result<Self> {
        let mut out = Self::zero(dim, 0)?;
        out.accumulate(Blade::EMPTY, value);
        Ok(out)
    }

    /// Wedge of basis elements in the given (not necessarily sorted) order.
    pub fn basis(dim: usize, indices: &[usize]) -> Result<Self> {
        Self::from_terms(dim, indices.len(), [(indices.to_vec(), 1.0)])
    }

    pub fn from_terms<I>(dim: usize, degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let mut out = Self::zero(dim, degree)?;
        for (indices, c) in terms {
            if indices.len() != degree {
                return Err(Error::DegreeMismatch {
                    expected: degree,
                    actual: indices.len(),
                });
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
                return Err(Error::Shape(format!(
                    "basis index {bad} out of range for dimension {dim}"
                )));
            }
            if let Some((sign, blade)) = Blade::sorted(&indices) {
                out.accumulate(blade, sign * c);
            }
        }
        Ok(out)
    }

    /// Degree-1 element from a dense component array.
    pub fn from_components(components: &[f64]) -> Result<Self> {
        let dim = components.len();
        let mut out = Self::zero(dim, 1.min(dim))?;
        for (i, &c) in components.iter().enumerate() {
            out.accumulate(Blade(1 << i), c);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient on the given index tuple, signed if the tuple is unsorted.
    pub fn coeff(&self, indices: &[usize]) -> f64 {
        match Blade::sorted(indices) {
            Some((sign, blade)) => sign * self.terms.get(&blade).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn coeff_blade(&self, blade: Blade) -> f64 {
        self.terms.get(&blade).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Blade, f64)> + '_ {
        self.terms.iter().map(|(&b, &c)| (b, c))
    }

    /// Number of stored (nonzero) coefficients.
    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Dense components of a degree-1 element.
    pub fn components(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if self.degree == 1 {
            for (b, c) in self.iter() {
                out[b.0.trailing_zeros() as usize] = c;
            }
        }
        out
    }

    fn accumulate(&mut self, blade: Blade, value: f64) {
        let entry = self.terms.entry(blade).or_insert(0.0);
        *entry += value;
        if entry.abs() < ZERO_TOL {
            self.terms.remove(&blade);
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::ChartMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                actual: other.degree,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (b, c) in other.iter() {
            out.accumulate(b, c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = Self {
            dim: self.dim,
            degree: self.degree,
            terms: BTreeMap::new(),
            kind: PhantomData,
        };
        for (b, c) in self.iter() {
            out.accumulate(b, factor * c);
        }
        out
    }

    /// Largest coefficient-wise difference `max |self − other|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::ChartMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let degree = self.degree + other.degree;
        if degree > self.dim {
            return Err(Error::DegreeOverflow {
                left: self.degree,
                right: other.degree,
                dim: self.dim,
            });
        }
        let mut out = Self::zero(self.dim, degree)?;
        for (a, ca) in self.iter() {
            for (b, cb) in other.iter() {
                if let Some((sign, blade)) = wedge_blades(a, b) {
                    out.accumulate(blade, sign * ca * cb);
                }
            }
        }
        Ok(out)
    }
}

impl<K: Kind> fmt::Debug for Alternating<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alternating<{}>[dim {}, degree {}]{{", K::SYMBOL, self.dim, self.degree)?;
        for (i, (b, c)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{:?}: {c}", b.indices())?;
        }
        f.write_str("}")
    }
}

/// Wedge of a list of vectors. A zero result signals linear dependence.
pub fn wedge_all(vectors: &[Multivector]) -> Result<Multivector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Shape("wedge of an empty list".into()))?;
    let mut acc = Multivector::scalar(first.dim(), 1.0)?;
    for v in vectors {
        if v.degree() != 1 {
            return Err(Error::DegreeMismatch {
                expected: 1,
                actual: v.degree(),
            });
        }
        acc = acc.wedge(v)?;
    }
    Ok(acc)
}

/// Interior product `i_X α`.
///
/// For `X = Z_1 ∧ … ∧ Z_r` the result is `α(Z_1, …, Z_r, ·, …, ·)`, which is
/// the operator composition `i_{Z_r} ∘ … ∘ i_{Z_1}`.
pub fn contract(x: &Multivector, alpha: &Form) -> Result<Form> {
    if x.dim() != alpha.dim() {
        return Err(Error::ChartMismatch {
            left: x.dim(),
            right: alpha.dim(),
        });
    }
    if x.degree() > alpha.degree() {
        return Err(Error::ContractionDegree {
            vector: x.degree(),
            form: alpha.degree(),
        });
    }
    let mut out = Form::zero(alpha.dim(), alpha.degree() - x.degree())?;
    for (j, cx) in x.iter() {
        for (k, ca) in alpha.iter() {
            if j.0 & k.0 != j.0 {
                continue;
            }
            let rest = k.0 & !j.0;
            // moving each inserted index to the front passes the smaller
            // remaining indices
            let mut passes = 0u32;
            let mut bits = j.0;
            while bits != 0 {
                let i = bits.trailing_zeros();
                passes += (rest & ((1u64 << i) - 1)).count_ones();
                bits &= bits - 1;
            }
            let sign = if passes.is_multiple_of(2) { 1.0 } else { -1.0 };
            out.accumulate(Blade(rest), sign * cx * ca);
        }
    }
    Ok(out)
}

/// A point-dependent form.
pub trait FormField: Send + Sync {
    fn dim(&self) -> usize;

    fn degree(&self) -> usize;

    fn eval(&self, at: &[f64]) -> Result<Form>;

    /// Partial derivative of every coefficient with respect to coordinate `coord`,
    /// when known in closed form.
    fn partial(&self, _at: &[f64], _coord: usize) -> Option<Result<Form>> {
        None
    }
}

type EvalFn = dyn Fn(&[f64]) -> Result<Form> + Send + Sync;
type PartialFn = dyn Fn(&[f64], usize) -> Result<Form> + Send + Sync;

/// [`FormField`] backed by closures.
pub struct FnFormField {
    dim: usize,
    degree: usize,
    eval: Box<EvalFn>,
    partial: Option<Box<PartialFn>>,
}

impl FnFormField {
    pub fn new<F>(dim: usize, degree: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Form> + Send + Sync + 'static,
    {
        Self {
            dim,
            degree,
            eval: Box::new(eval),
            partial: None,
        }
    }

    pub fn with_partials<G>(mut self, partial: G) -> Self
    where
        G: Fn(&[f64], usize) -> Result<Form> + Send + Sync + 'static,
    {
        self.partial = Some(Box::new(partial));
        self
    }
}

impl FormField for FnFormField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn degree(&self) -> usize {
        self.degree
    }

    fn eval(&self, at: &[f64]) -> Result<Form> {
        (self.eval)(at)
    }

    fn partial(&self, at: &[f64], coord: usize) -> Option<Result<Form>> {
        self.partial.as_ref().map(|p| p(at, coord))
    }
}

/// A form with constant coefficients, viewed as a field.
#[derive(Debug, Clone)]
pub struct ConstantField(pub Form);

impl FormField for ConstantField {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn degree(&self) -> usize {
        self.0.degree()
    }

    fn eval(&self, _at: &[f64]) -> Result<Form> {
        Ok(self.0.clone())
    }

    fn partial(&self, _at: &[f64], _coord: usize) -> Option<Result<Form>> {
        Some(Form::zero(self.0.dim(), self.0.degree()))
    }
}

fn checked_eval(f: &dyn FormField, at: &[f64]) -> Result<Form> {
    let value = f.eval(at)?;
    if value.degree() != f.degree() {
        return Err(Error::DegreeMismatch {
            expected: f.degree(),
            actual: value.degree(),
        });
    }
    if value.dim() != f.dim() {
        return Err(Error::ChartMismatch {
            left: f.dim(),
            right: value.dim(),
        });
    }
    Ok(value)
}

/// Central difference of the form field along one coordinate.
pub fn numeric_partial(f: &dyn FormField, at: &[f64], coord: usize, step: f64) -> Result<Form> {
    let h = step * at[coord].abs().max(1.0);
    let mut plus = at.to_vec();
    let mut minus = at.to_vec();
    plus[coord] += h;
    minus[coord] -= h;
    let fp = checked_eval(f, &plus)?;
    let fm = checked_eval(f, &minus)?;
    Ok(fp.sub(&fm)?.scale(0.5 / h))
}

fn derivative_impl(f: &dyn FormField, at: &[f64], step: f64, analytic: bool) -> Result<Form> {
    if at.len() != f.dim() {
        return Err(Error::Shape(format!(
            "point has {} coordinates, field lives on a {}-dimensional chart",
            at.len(),
            f.dim()
        )));
    }
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Shape(format!("step must be positive, got {step}")));
    }
    let mut out = Form::zero(f.dim(), f.degree() + 1)?;
    for k in 0..f.dim() {
        let partial = match (analytic, f.partial(at, k)) {
            (true, Some(p)) => p?,
            _ => numeric_partial(f, at, k, step)?,
        };
        let dk = Form::basis(f.dim(), &[k])?;
        out = out.add(&dk.wedge(&partial)?)?;
    }
    Ok(out)
}

/// `d f = Σ_k dx^k ∧ ∂_k f`, using closed-form partials when the field has them
/// and central differences (step scaled by `max(1, |x_k|)`) otherwise.
pub fn exterior_derivative(f: &dyn FormField, at: &[f64], step: f64) -> Result<Form> {
    derivative_impl(f, at, step, true)
}

/// Like [`exterior_derivative`] but always by central differences.
pub fn exterior_derivative_numeric(f: &dyn FormField, at: &[f64], step: f64) -> Result<Form> {
    derivative_impl(f, at, step, false)
}
