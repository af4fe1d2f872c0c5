//! Anchored vector bundles `(N, ν, ρ)` in a trivialising chart.
//!
//! In bundle coordinates `(x^i, u^α)` the anchor is `ρ(x, u) = (x, γ(x)·u)` for
//! an `n × k` matrix field `γ`. A curve `t ↦ (x(t), u(t))` in `N` is
//! admissible when `ẋ(t) = γ(x(t))·u(t)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chart::{CoordDomain, Dual, MatrixField, VectorField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{rank_kernel, RankKernel, RANK_RELATIVE_TOLERANCE};
use crate::section::SectionNu;
use crate::transport::rk4_step;

/// Admissibility tolerance for curves given in closed form.
pub const ANALYTIC_ADMISSIBILITY_TOLERANCE: f64 = 1e-6;
/// Admissibility tolerance for curves produced by an integrator.
pub const INTEGRATED_ADMISSIBILITY_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct AnchorBundle {
    gamma: MatrixField,
}

impl AnchorBundle {
    /// Anchor with coefficient matrix `gamma` (`n × k`, `n` = box dimension).
    pub fn new(gamma: MatrixField) -> Result<Self> {
        if gamma.rows() != gamma.domain().dim() {
            return Err(Error::Shape(format!("anchor has {} rows but the base has dimension {}", gamma.rows(), gamma.domain().dim())));
        }
        Ok(Self { gamma })
    }

    /// `N = TM`, `ρ = id`.
    pub fn identity(base: CoordDomain) -> Self {
        let n = base.dim();
        Self { gamma: MatrixField::identity(base, n) }
    }

    pub fn zero(base: CoordDomain, k: usize) -> Self {
        let n = base.dim();
        Self { gamma: MatrixField::zeros(base, n, k) }
    }

    pub fn constant(base: CoordDomain, gamma: &DMatrix<f64>) -> Result<Self> {
        Self::new(MatrixField::constant(base, gamma))
    }

    pub fn base(&self) -> &CoordDomain {
        self.gamma.domain()
    }

    /// Base dimension `n`.
    pub fn n(&self) -> usize {
        self.gamma.rows()
    }

    /// Fiber rank `k` of `N`.
    pub fn k(&self) -> usize {
        self.gamma.cols()
    }

    pub fn gamma(&self) -> &MatrixField {
        &self.gamma
    }

    pub fn gamma_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.gamma.eval(x)
    }

    /// `ρ(n) = γ(x)·u`.
    pub fn apply_anchor(&self, p: &FiberPoint) -> Result<DVector<f64>> {
        self.anchor(&p.x, &p.u)
    }

    pub fn anchor(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        if u.len() != self.k() {
            return Err(Error::Shape(format!("fiber vector has {} entries, expected {}", u.len(), self.k())));
        }
        Ok(self.gamma_at(x)? * DVector::from_column_slice(u))
    }

    /// The vector field `ρ ∘ s` on the base.
    pub fn anchor_field(&self, s: &SectionNu) -> Result<VectorField> {
        self.gamma.apply(s)
    }

    /// Column `α` of `γ`: the vector field `ρ(σ_α)` of the `α`-th frame section.
    pub fn frame_field(&self, alpha: usize) -> VectorField {
        self.gamma.column(alpha)
    }

    /// Numerical rank and kernel of `ρ_x`, with the pivot threshold used.
    pub fn fiber_rank_kernel(&self, x: &[f64]) -> Result<RankKernel> {
        Ok(rank_kernel(&self.gamma_at(x)?, RANK_RELATIVE_TOLERANCE))
    }

    /// Largest `‖ẋ(t) − γ(x(t))u(t)‖∞` over `grid`.
    pub fn admissibility_residual(&self, curve: &AdmissibleCurve, grid: &[f64]) -> Result<f64> {
        let (t0, t1) = curve.t_range();
        let slack = 1e-12 * (t1 - t0).abs().max(1.0);
        let mut worst = 0.0_f64;
        for &t in grid {
            if t < t0 - slack || t > t1 + slack {
                return Err(Error::Domain { point: vec![t] });
            }
            let xdot = DVector::from_vec(curve.velocity(t));
            let rho = self.anchor(&curve.position(t), &curve.control(t))?;
            if xdot.len() != rho.len() {
                return Err(Error::Shape(format!("curve lives in dimension {}, base has {}", xdot.len(), rho.len())));
            }
            let r = (xdot - rho).amax();
            if !r.is_finite() {
                return Err(Error::NonFinite { what: "admissibility residual", point: vec![t] });
            }
            worst = worst.max(r);
        }
        Ok(worst)
    }

    /// Fails with [`Error::NotAdmissible`] unless the residual on `grid` is
    /// within the curve's tolerance.
    pub fn ensure_admissible(&self, curve: &AdmissibleCurve, grid: &[f64]) -> Result<f64> {
        let residual = self.admissibility_residual(curve, grid)?;
        if residual > curve.tolerance() {
            return Err(Error::NotAdmissible { residual, tolerance: curve.tolerance() });
        }
        Ok(residual)
    }

    /// Integral curve of `ρ ∘ s` through `x0`, lifted to the admissible curve
    /// `t ↦ (x(t), s(x(t)))`. Integration stops early, with
    /// [`IntegralCurve::truncated`] set, if the curve leaves the box.
    pub fn integral_curve_of_section(&self, s: &SectionNu, x0: &[f64], t_range: (f64, f64), steps: usize) -> Result<IntegralCurve> {
        if s.len() != self.k() {
            return Err(Error::Shape(format!("section has {} components, expected {}", s.len(), self.k())));
        }
        if steps == 0 {
            return Err(Error::Rejected("at least one step is required".into()));
        }
        self.base().check(x0)?;
        let field = self.anchor_field(s)?;
        let rhs = |_t: f64, x: &DVector<f64>| field.eval(x.as_slice());
        let (t0, t1) = t_range;
        let h = (t1 - t0) / steps as f64;

        let mut ts = vec![t0];
        let mut xs = vec![DVector::from_column_slice(x0)];
        let mut vs = vec![rhs(t0, &xs[0])?];
        let mut truncated = false;
        for i in 0..steps {
            let t = t0 + h * i as f64;
            let x = xs.last().expect("nonempty");
            let next = match rk4_step(&rhs, t, x, h) {
                Ok(next) => next,
                Err(Error::Domain { .. }) => {
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let v = match rhs(t + h, &next) {
                Ok(v) => v,
                Err(Error::Domain { .. }) => {
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            ts.push(t0 + h * (i + 1) as f64);
            xs.push(next);
            vs.push(v);
        }
        if ts.len() < 2 {
            return Err(Error::Rejected("integral curve leaves the box immediately".into()));
        }

        let samples = Arc::new(HermiteSamples { ts, xs, vs });
        let (pos, vel) = (Arc::clone(&samples), Arc::clone(&samples));
        let section = s.clone();
        let base = self.base().clone();
        let curve = AdmissibleCurve::new(
            samples.ts[0],
            *samples.ts.last().expect("nonempty"),
            move |t| pos.position(t),
            move |t| vel.velocity(t),
            move |t| {
                let x = samples.position(t);
                if base.contains(&x) {
                    section.eval(&x).map(|v| v.as_slice().to_vec()).unwrap_or_else(|_| vec![f64::NAN; section.len()])
                } else {
                    vec![f64::NAN; section.len()]
                }
            },
        )
        .with_tolerance(INTEGRATED_ADMISSIBILITY_TOLERANCE);
        Ok(IntegralCurve { curve, truncated })
    }
}

/// A point `n ∈ N` in bundle coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl FiberPoint {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Self {
        Self { x, u }
    }
}

pub type CurveFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;

/// Curve `t ↦ (x(t), u(t))` in `N` on a closed parameter interval, with its
/// base velocity `ẋ(t)`.
#[derive(Clone)]
pub struct AdmissibleCurve {
    t0: f64,
    t1: f64,
    position: Arc<CurveFn>,
    velocity: Arc<CurveFn>,
    control: Arc<CurveFn>,
    tolerance: f64,
}

impl fmt::Debug for AdmissibleCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdmissibleCurve").field("t_range", &(self.t0, self.t1)).field("tolerance", &self.tolerance).finish()
    }
}

impl AdmissibleCurve {
    pub fn new<P, V, U>(t0: f64, t1: f64, position: P, velocity: V, control: U) -> Self
    where
        P: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        V: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        U: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            t0,
            t1,
            position: Arc::new(position),
            velocity: Arc::new(velocity),
            control: Arc::new(control),
            tolerance: ANALYTIC_ADMISSIBILITY_TOLERANCE,
        }
    }

    /// Base curve given over dual numbers, so `ẋ` is exact.
    pub fn from_dual<P, U>(t0: f64, t1: f64, position: P, control: U) -> Self
    where
        P: Fn(Dual) -> Vec<Dual> + Send + Sync + 'static,
        U: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        let position = Arc::new(position);
        let p2 = Arc::clone(&position);
        Self::new(
            t0,
            t1,
            move |t| position(Dual::constant(t)).into_iter().map(|d| d.re).collect(),
            move |t| p2(Dual::variable(t)).into_iter().map(|d| d.eps).collect(),
            control,
        )
    }

    /// Base curve as an opaque callable; `ẋ` by central differences.
    pub fn from_fns<P, U>(t0: f64, t1: f64, position: P, control: U) -> Self
    where
        P: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
        U: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        let position = Arc::new(position);
        let p2 = Arc::clone(&position);
        Self::new(
            t0,
            t1,
            move |t| position(t),
            move |t| {
                let h = 1e-6 * t.abs().max(1.0);
                let (a, b) = (p2(t + h), p2(t - h));
                a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            },
            control,
        )
    }

    /// Curve from expressions in `t` for each base coordinate and each fiber
    /// coordinate.
    pub fn from_exprs(t0: f64, t1: f64, x: Vec<Expr>, u: Vec<Expr>) -> Self {
        Self::from_dual(
            t0,
            t1,
            move |t| x.iter().map(|e| e.eval(&[], &[], t)).collect(),
            move |t| u.iter().map(|e| e.eval::<f64>(&[], &[], t)).collect(),
        )
    }

    /// Curve sitting over the fixed base point `x0`.
    pub fn fiber_curve<U>(t0: f64, t1: f64, x0: Vec<f64>, control: U) -> Self
    where
        U: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        let n = x0.len();
        Self::new(t0, t1, move |_| x0.clone(), move |_| vec![0.0; n], control)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        (self.position)(t)
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        (self.velocity)(t)
    }

    pub fn control(&self, t: f64) -> Vec<f64> {
        (self.control)(t)
    }

    pub fn point(&self, t: f64) -> FiberPoint {
        FiberPoint { x: self.position(t), u: self.control(t) }
    }

    /// The same curve traversed backwards: `x(t0 + t1 − t)`, `−u(t0 + t1 − t)`.
    pub fn reversed(&self) -> Self {
        let (t0, t1) = (self.t0, self.t1);
        let (p, v, u) = (Arc::clone(&self.position), Arc::clone(&self.velocity), Arc::clone(&self.control));
        Self {
            t0,
            t1,
            position: Arc::new(move |t| p(t0 + t1 - t)),
            velocity: Arc::new(move |t| v(t0 + t1 - t).into_iter().map(|c| -c).collect()),
            control: Arc::new(move |t| u(t0 + t1 - t).into_iter().map(|c| -c).collect()),
            tolerance: self.tolerance,
        }
    }
}

/// `count + 1` equally spaced times covering `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count).map(|i| t0 + (t1 - t0) * i as f64 / count as f64).collect()
}

#[derive(Clone, Debug)]
pub struct IntegralCurve {
    pub curve: AdmissibleCurve,
    /// The integration left the box before reaching the end of the interval.
    pub truncated: bool,
}

/// Piecewise cubic Hermite interpolant through integrator nodes.
struct HermiteSamples {
    ts: Vec<f64>,
    xs: Vec<DVector<f64>>,
    vs: Vec<DVector<f64>>,
}

impl HermiteSamples {
    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let last = self.ts.len() - 2;
        let i = match self.ts.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        };
        let h = self.ts[i + 1] - self.ts[i];
        (i, (t - self.ts[i]) / h, h)
    }

    fn position(&self, t: f64) -> Vec<f64> {
        let (i, s, h) = self.locate(t);
        let (h00, h10, h01, h11) =
            (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s, -2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        let x = &self.xs[i] * h00 + &self.vs[i] * (h10 * h) + &self.xs[i + 1] * h01 + &self.vs[i + 1] * (h11 * h);
        x.as_slice().to_vec()
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        let (i, s, h) = self.locate(t);
        let (d00, d10, d01, d11) = (6.0 * s * s - 6.0 * s, 3.0 * s * s - 4.0 * s + 1.0, -6.0 * s * s + 6.0 * s, 3.0 * s * s - 2.0 * s);
        let v = (&self.xs[i] * d00 + &self.xs[i + 1] * d01) / h + &self.vs[i] * d10 + &self.vs[i + 1] * d11;
        v.as_slice().to_vec()
    }
}
