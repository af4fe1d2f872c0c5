use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::domain::CoordDomain;
use super::dual::Dual;
use crate::error::{Error, Result};

pub type DualFn = dyn Fn(&[Dual]) -> Dual + Send + Sync;
pub type RealFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// How a [`ScalarField`] produces first derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativeMode {
    /// Gradient supplied alongside the value.
    Analytic,
    /// Forward-mode dual numbers, exact for expression-defined fields.
    Dual,
    /// Central differences; `None` selects `1e-6·max(1, |x|)` per axis.
    CentralDifference { step: Option<f64> },
}

#[derive(Clone)]
enum Kind {
    Dual(Arc<DualFn>),
    Analytic { value: Arc<RealFn>, gradient: Arc<GradientFn> },
    Opaque { value: Arc<RealFn>, step: Option<f64> },
}

/// Smooth real function on a coordinate box.
///
/// Fields are immutable and cheap to clone; closures are shared behind `Arc`.
#[derive(Clone)]
pub struct ScalarField {
    domain: CoordDomain,
    kind: Kind,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("domain", &self.domain).field("mode", &self.mode()).finish()
    }
}

fn default_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

impl ScalarField {
    pub fn from_dual_fn<F>(domain: CoordDomain, f: F) -> Self
    where
        F: Fn(&[Dual]) -> Dual + Send + Sync + 'static,
    {
        Self { domain, kind: Kind::Dual(Arc::new(f)) }
    }

    /// Opaque callable differentiated by central differences with the default step.
    pub fn from_fn<F>(domain: CoordDomain, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { domain, kind: Kind::Opaque { value: Arc::new(f), step: None } }
    }

    /// Opaque callable differentiated by central differences with a fixed step.
    pub fn from_fn_with_step<F>(domain: CoordDomain, f: F, step: f64) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { domain, kind: Kind::Opaque { value: Arc::new(f), step: Some(step) } }
    }

    pub fn analytic<F, G>(domain: CoordDomain, value: F, gradient: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { domain, kind: Kind::Analytic { value: Arc::new(value), gradient: Arc::new(gradient) } }
    }

    pub fn constant(domain: CoordDomain, c: f64) -> Self {
        Self::from_dual_fn(domain, move |_| Dual::constant(c))
    }

    pub fn zero(domain: CoordDomain) -> Self {
        Self::constant(domain, 0.0)
    }

    /// The coordinate function `x ↦ x^axis`.
    pub fn coordinate(domain: CoordDomain, axis: usize) -> Self {
        assert!(axis < domain.dim(), "coordinate axis out of range");
        Self::from_dual_fn(domain, move |x| x[axis])
    }

    pub fn domain(&self) -> &CoordDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn mode(&self) -> DerivativeMode {
        match &self.kind {
            Kind::Dual(_) => DerivativeMode::Dual,
            Kind::Analytic { .. } => DerivativeMode::Analytic,
            Kind::Opaque { step, .. } => DerivativeMode::CentralDifference { step: *step },
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check(x)?;
        let v = self.raw_eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: "scalar field", point: x.to_vec() })
        }
    }

    /// `∂f/∂x^axis` at `x`, using the field's derivative mode.
    pub fn partial(&self, x: &[f64], axis: usize) -> Result<f64> {
        self.domain.check(x)?;
        if axis >= self.dim() {
            return Err(Error::Shape(format!("axis {axis} out of range for dimension {}", self.dim())));
        }
        let d = match &self.kind {
            Kind::Dual(f) => {
                let seeded: Vec<Dual> =
                    x.iter().enumerate().map(|(i, &v)| if i == axis { Dual::variable(v) } else { Dual::constant(v) }).collect();
                f(&seeded).eps
            }
            Kind::Analytic { gradient, .. } => gradient(x).get(axis).copied().unwrap_or(f64::NAN),
            Kind::Opaque { value, step } => {
                let h = step.unwrap_or_else(|| default_step(x[axis]));
                let (lo, hi) = (self.domain.lower()[axis], self.domain.upper()[axis]);
                if x[axis] - h < lo || x[axis] + h > hi {
                    return Err(Error::NotInterior { point: x.to_vec(), axis, step: h });
                }
                central_difference(value.as_ref(), x, axis, h)
            }
        };
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NonFinite { what: "derivative", point: x.to_vec() })
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Analytic { gradient, .. } => {
                self.domain.check(x)?;
                let g = gradient(x);
                if g.len() != self.dim() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "gradient", point: x.to_vec() });
                }
                Ok(g)
            }
            _ => (0..self.dim()).map(|axis| self.partial(x, axis)).collect(),
        }
    }

    /// Largest gap between the derivative this field reports and a central
    /// difference with step `step`, over `points`.
    pub fn derivative_mismatch(&self, points: &[Vec<f64>], step: f64) -> Result<f64> {
        let mut worst = 0.0_f64;
        for p in points {
            let g = self.gradient(p)?;
            for (axis, gi) in g.iter().enumerate() {
                let fd = central_difference(&|q: &[f64]| self.raw_eval(q), p, axis, step);
                worst = worst.max((gi - fd).abs());
            }
        }
        Ok(worst)
    }

    fn raw_eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Dual(f) => {
                let d: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
                f(&d).re
            }
            Kind::Analytic { value, .. } | Kind::Opaque { value, .. } => value(x),
        }
    }

    fn raw_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Analytic { gradient, .. } => gradient(x),
            _ => (0..self.dim()).map(|axis| self.partial(x, axis).unwrap_or(f64::NAN)).collect(),
        }
    }

    /// The same function viewed on a larger box whose leading axes are this
    /// field's axes; the extra coordinates are ignored.
    pub fn extend(&self, domain: &CoordDomain) -> Self {
        let n = self.dim();
        assert!(domain.dim() >= n, "cannot extend a field to a lower-dimensional box");
        match &self.kind {
            Kind::Dual(f) => {
                let f = Arc::clone(f);
                Self::from_dual_fn(domain.clone(), move |x| f(&x[..n]))
            }
            _ => {
                let inner = self.clone();
                let inner_g = self.clone();
                let total = domain.dim();
                Self::analytic(
                    domain.clone(),
                    move |x| inner.raw_eval(&x[..n]),
                    move |x| {
                        let mut g = inner_g.raw_gradient(&x[..n]);
                        g.resize(total, 0.0);
                        g
                    },
                )
            }
        }
    }

    fn binary(a: &Self, b: &Self, dual: fn(Dual, Dual) -> Dual, real: fn(f64, f64) -> f64, grad: fn(f64, f64, f64, f64) -> f64) -> Self {
        assert_eq!(a.dim(), b.dim(), "fields live on boxes of different dimension");
        match (&a.kind, &b.kind) {
            (Kind::Dual(f), Kind::Dual(g)) => {
                let (f, g) = (Arc::clone(f), Arc::clone(g));
                Self::from_dual_fn(a.domain.clone(), move |x| dual(f(x), g(x)))
            }
            _ => {
                let (a1, b1, a2, b2) = (a.clone(), b.clone(), a.clone(), b.clone());
                Self::analytic(
                    a.domain.clone(),
                    move |x| real(a1.raw_eval(x), b1.raw_eval(x)),
                    move |x| {
                        let (va, vb) = (a2.raw_eval(x), b2.raw_eval(x));
                        a2.raw_gradient(x).into_iter().zip(b2.raw_gradient(x)).map(|(ga, gb)| grad(va, vb, ga, gb)).collect()
                    },
                )
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self * &ScalarField::constant(self.domain.clone(), c)
    }
}

fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], axis: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[axis] = x[axis] + h;
    let fp = f(&p);
    p[axis] = x[axis] - h;
    let fm = f(&p);
    (fp - fm) / (2.0 * h)
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        ScalarField::binary(self, rhs, |a, b| a + b, |a, b| a + b, |_, _, ga, gb| ga + gb)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        ScalarField::binary(self, rhs, |a, b| a - b, |a, b| a - b, |_, _, ga, gb| ga - gb)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        ScalarField::binary(self, rhs, |a, b| a * b, |a, b| a * b, |va, vb, ga, gb| ga * vb + va * gb)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scaled(-1.0)
    }
}

/// Dense `rows × cols` grid of scalar fields on a common box (row-major).
#[derive(Clone, Debug)]
pub struct MatrixField {
    domain: CoordDomain,
    rows: usize,
    cols: usize,
    entries: Vec<ScalarField>,
}

impl MatrixField {
    pub fn new(domain: CoordDomain, rows: usize, cols: usize, entries: Vec<ScalarField>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries supplied for a {rows}×{cols} matrix field", entries.len())));
        }
        if let Some(bad) = entries.iter().position(|e| e.domain() != &domain) {
            return Err(Error::Shape(format!("entry {bad} lives on a different box")));
        }
        Ok(Self { domain, rows, cols, entries })
    }

    pub fn from_fn(domain: CoordDomain, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> ScalarField) -> Result<Self> {
        let entries = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self::new(domain, rows, cols, entries)
    }

    pub fn constant(domain: CoordDomain, m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let entries =
            (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| ScalarField::constant(domain.clone(), m[(i, j)])).collect();
        Self { domain, rows, cols, entries }
    }

    pub fn zeros(domain: CoordDomain, rows: usize, cols: usize) -> Self {
        Self::constant(domain, &DMatrix::zeros(rows, cols))
    }

    pub fn identity(domain: CoordDomain, n: usize) -> Self {
        Self::constant(domain, &DMatrix::identity(n, n))
    }

    pub fn domain(&self) -> &CoordDomain {
        &self.domain
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[ScalarField] {
        &self.entries
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        self.domain.check(x)?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.entry(i, j).eval(x)?;
            }
        }
        Ok(m)
    }

    pub fn partial(&self, x: &[f64], axis: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        self.domain.check(x)?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.entry(i, j).partial(x, axis)?;
            }
        }
        Ok(m)
    }

    pub fn column(&self, j: usize) -> VectorField {
        VectorField { domain: self.domain.clone(), components: (0..self.rows).map(|i| self.entry(i, j).clone()).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.domain.clone(), self.cols, self.rows, |i, j| self.entry(j, i).clone()).expect("transpose preserves shape")
    }

    pub fn extend(&self, domain: &CoordDomain) -> Self {
        Self { domain: domain.clone(), rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|e| e.extend(domain)).collect() }
    }

    /// Pointwise product `self(x)·other(x)` as a field.
    pub fn mul(&self, other: &MatrixField) -> Result<MatrixField> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!("cannot multiply {}×{} by {}×{}", self.rows, self.cols, other.rows, other.cols)));
        }
        Self::from_fn(self.domain.clone(), self.rows, other.cols, |i, j| {
            sum_fields(&self.domain, (0..self.cols).map(|c| self.entry(i, c) * other.entry(c, j)))
        })
    }

    /// Pointwise `self(x)·v(x)`.
    pub fn apply(&self, v: &VectorField) -> Result<VectorField> {
        if self.cols != v.len() {
            return Err(Error::Shape(format!("cannot apply a {}×{} matrix field to a {}-vector field", self.rows, self.cols, v.len())));
        }
        let components =
            (0..self.rows).map(|i| sum_fields(&self.domain, (0..self.cols).map(|c| self.entry(i, c) * v.component(c)))).collect();
        Ok(VectorField { domain: self.domain.clone(), components })
    }
}

pub(crate) fn sum_fields(domain: &CoordDomain, terms: impl IntoIterator<Item = ScalarField>) -> ScalarField {
    terms.into_iter().reduce(|acc, t| &acc + &t).unwrap_or_else(|| ScalarField::zero(domain.clone()))
}

/// A vector-valued field on a box: vector fields on `M`, or local sections of
/// a trivialised bundle, depending on context.
#[derive(Clone, Debug)]
pub struct VectorField {
    domain: CoordDomain,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(domain: CoordDomain, components: Vec<ScalarField>) -> Result<Self> {
        if let Some(bad) = components.iter().position(|c| c.domain() != &domain) {
            return Err(Error::Shape(format!("component {bad} lives on a different box")));
        }
        Ok(Self { domain, components })
    }

    pub fn constant(domain: CoordDomain, values: &[f64]) -> Self {
        let components = values.iter().map(|&v| ScalarField::constant(domain.clone(), v)).collect();
        Self { domain, components }
    }

    pub fn zeros(domain: CoordDomain, len: usize) -> Self {
        Self::constant(domain, &vec![0.0; len])
    }

    /// The constant `index`-th standard basis section of a rank-`len` bundle.
    pub fn basis(domain: CoordDomain, len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self::constant(domain, &v)
    }

    /// Coordinate vector field `∂/∂x^axis`.
    pub fn coordinate(domain: CoordDomain, axis: usize) -> Self {
        let n = domain.dim();
        Self::basis(domain, n, axis)
    }

    pub fn domain(&self) -> &CoordDomain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.domain.check(x)?;
        let values = self.components.iter().map(|c| c.eval(x)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(values))
    }

    /// `len × dim` matrix of partial derivatives.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.len(), self.domain.dim());
        for (i, c) in self.components.iter().enumerate() {
            for (axis, g) in c.gradient(x)?.into_iter().enumerate() {
                j[(i, axis)] = g;
            }
        }
        Ok(j)
    }

    pub fn scaled(&self, f: &ScalarField) -> Self {
        Self { domain: self.domain.clone(), components: self.components.iter().map(|c| f * c).collect() }
    }

    pub fn scaled_by(&self, c: f64) -> Self {
        Self { domain: self.domain.clone(), components: self.components.iter().map(|f| f.scaled(c)).collect() }
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &VectorField, op: impl Fn(&ScalarField, &ScalarField) -> ScalarField) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!("cannot combine {}- and {}-vectors", self.len(), other.len())));
        }
        Ok(Self { domain: self.domain.clone(), components: self.components.iter().zip(&other.components).map(|(a, b)| op(a, b)).collect() })
    }

    /// Pointwise pairing `Σ_i self_i·other_i`.
    pub fn dot(&self, other: &VectorField) -> Result<ScalarField> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!("cannot pair {}- and {}-vectors", self.len(), other.len())));
        }
        Ok(sum_fields(&self.domain, self.components.iter().zip(&other.components).map(|(a, b)| a * b)))
    }

    pub fn extend(&self, domain: &CoordDomain) -> Self {
        Self { domain: domain.clone(), components: self.components.iter().map(|c| c.extend(domain)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> CoordDomain {
        CoordDomain::cube(2, -2.0, 2.0).unwrap()
    }

    #[test]
    fn modes_agree_on_a_product() {
        let d = plane();
        let dual = ScalarField::from_dual_fn(d.clone(), |x| x[0].sin() * x[1]);
        let opaque = ScalarField::from_fn(d.clone(), |x| x[0].sin() * x[1]);
        let analytic = ScalarField::analytic(d, |x| x[0].sin() * x[1], |x| vec![x[0].cos() * x[1], x[0].sin()]);
        let p = [0.3, -0.7];
        for axis in 0..2 {
            let a = dual.partial(&p, axis).unwrap();
            assert!((a - opaque.partial(&p, axis).unwrap()).abs() < 1e-8);
            assert!((a - analytic.partial(&p, axis).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_mode_product_rule() {
        let d = plane();
        let f = ScalarField::coordinate(d.clone(), 0);
        let g = ScalarField::from_fn(d, |x| x[1] * x[1]);
        let h = &f * &g;
        assert_eq!(h.mode(), DerivativeMode::Analytic);
        let p = [1.5, 0.5];
        assert!((h.partial(&p, 0).unwrap() - 0.25).abs() < 1e-9);
        assert!((h.partial(&p, 1).unwrap() - 1.5).abs() < 1e-8);
    }

    #[test]
    fn opaque_near_boundary_is_rejected() {
        let d = plane();
        let f = ScalarField::from_fn(d, |x| x[0]);
        assert!(matches!(f.partial(&[2.0, 0.0], 0), Err(Error::NotInterior { axis: 0, .. })));
        assert!(matches!(f.partial(&[3.0, 0.0], 0), Err(Error::Domain { .. })));
    }

    #[test]
    fn non_finite_values_are_reported() {
        let d = plane();
        let f = ScalarField::from_dual_fn(d, |x| Dual::constant(1.0) / x[0]);
        assert!(matches!(f.eval(&[0.0, 0.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn extension_ignores_trailing_axes() {
        let d = plane();
        let big = d.product(&CoordDomain::cube(1, -1.0, 1.0).unwrap());
        let f = ScalarField::from_fn(d, |x| x[0] * x[1]).extend(&big);
        let p = [1.0, 0.5, 0.25];
        assert!((f.eval(&p).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.partial(&p, 0).unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(f.partial(&p, 2).unwrap(), 0.0);
    }

    #[test]
    fn matrix_field_shape_checks() {
        let d = plane();
        assert!(MatrixField::new(d.clone(), 2, 2, vec![ScalarField::zero(d.clone())]).is_err());
        let a = MatrixField::identity(d.clone(), 2);
        let b = MatrixField::zeros(d, 3, 1);
        assert!(a.mul(&b).is_err());
    }
}
