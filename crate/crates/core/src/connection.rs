//! ρ-connections in local form.
//!
//! In bundle coordinates `(x, y)` on `E` and `(x, u)` on `N`, a ρ-connection
//! is `h(x, y, u) = (x, y, γ(x)u, Γ(x, y)u)` for an `ℓ × k` coefficient matrix
//! `Γ(x, y)`. It is linear when `Γ^A_α(x, y) = Γ^A_{αB}(x) y^B`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bundle::{AnchorBundle, ANALYTIC_ADMISSIBILITY_TOLERANCE};
use crate::chart::{sum_fields, CoordDomain, MatrixField, ScalarField, TangentField, VectorField};
use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, columns, orthonormal_basis, rank_kernel, span_dim, RANK_RELATIVE_TOLERANCE};
use crate::sampling::{seeded_rng, uniform_vector};
use crate::section::SectionNu;

/// Tangent vector to `E` at some `e = (x, y)`, split into base and fiber parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
}

impl Tangent {
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dx.len() + self.dy.len());
        v.rows_mut(0, self.dx.len()).copy_from(&self.dx);
        v.rows_mut(self.dx.len(), self.dy.len()).copy_from(&self.dy);
        v
    }
}

/// Coefficient access shared by general and linear ρ-connections.
pub trait RhoConnection {
    fn bundle(&self) -> &AnchorBundle;

    /// Fiber dimension `ℓ` of `E`.
    fn fiber_dim(&self) -> usize;

    /// `Γ^A_α(x, y)` as an `ℓ × k` matrix.
    fn coefficients(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>>;

    /// Partial of [`Self::coefficients`] along total-space axis `axis`
    /// (`0..n` are base coordinates, `n..n+ℓ` fiber coordinates).
    fn coefficients_partial(&self, x: &[f64], y: &[f64], axis: usize) -> Result<DMatrix<f64>>;

    /// `h(e, n) = (γ(x)n, Γ(x, y)n)`.
    fn h_apply(&self, x: &[f64], y: &[f64], nvec: &[f64]) -> Result<Tangent> {
        let k = self.bundle().k();
        if nvec.len() != k || y.len() != self.fiber_dim() {
            return Err(Error::Shape(format!(
                "expected fiber vectors of length ({k}, {}), got ({}, {})",
                self.fiber_dim(),
                nvec.len(),
                y.len()
            )));
        }
        let n = DVector::from_column_slice(nvec);
        Ok(Tangent { dx: self.bundle().gamma_at(x)? * &n, dy: self.coefficients(x, y)? * n })
    }

    /// The linear map `h_e: N_x → T_eE` as an `(n + ℓ) × k` matrix.
    fn h_matrix(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let gamma = self.bundle().gamma_at(x)?;
        let coeffs = self.coefficients(x, y)?;
        let (n, l, k) = (gamma.nrows(), coeffs.nrows(), gamma.ncols());
        let mut h = DMatrix::zeros(n + l, k);
        h.rows_mut(0, n).copy_from(&gamma);
        h.rows_mut(n, l).copy_from(&coeffs);
        Ok(h)
    }
}

/// `V(n, w) = w − h(e, n)`. Fails unless `(n, w)` lies in the pullback
/// bundle, i.e. `π_*(w) = ρ(n)` within [`ANALYTIC_ADMISSIBILITY_TOLERANCE`].
pub fn vertical_defect_v<C: RhoConnection + ?Sized>(conn: &C, x: &[f64], y: &[f64], nvec: &[f64], w: &Tangent) -> Result<Tangent> {
    let h = conn.h_apply(x, y, nvec)?;
    if w.dx.len() != h.dx.len() || w.dy.len() != h.dy.len() {
        return Err(Error::Shape("tangent vector has the wrong dimensions".into()));
    }
    let residual = (&w.dx - &h.dx).amax();
    if residual > ANALYTIC_ADMISSIBILITY_TOLERANCE {
        return Err(Error::NotInPullback { residual, tolerance: ANALYTIC_ADMISSIBILITY_TOLERANCE });
    }
    Ok(Tangent { dx: &w.dx - h.dx, dy: &w.dy - h.dy })
}

/// Connection map `K(n, w) = w^A − Γ^A_α(x, y)n^α`, the fiber part of `V`.
pub fn connection_map_k<C: RhoConnection + ?Sized>(conn: &C, x: &[f64], y: &[f64], nvec: &[f64], w: &Tangent) -> Result<DVector<f64>> {
    Ok(vertical_defect_v(conn, x, y, nvec, w)?.dy)
}

/// ρ-connection with coefficients `Γ^A_α(x, y)` given as a matrix field on
/// the total-space box `base × fiber_box`.
#[derive(Clone, Debug)]
pub struct GeneralConnection {
    bundle: AnchorBundle,
    coeffs: MatrixField,
}

impl GeneralConnection {
    pub fn new(bundle: AnchorBundle, coeffs: MatrixField) -> Result<Self> {
        let n = bundle.n();
        let dim = coeffs.domain().dim();
        if dim <= n
            || coeffs.domain().lower()[..n] != bundle.base().lower()[..]
            || coeffs.domain().upper()[..n] != bundle.base().upper()[..]
        {
            return Err(Error::Shape("coefficients must live on base × fiber box".into()));
        }
        if coeffs.rows() != dim - n || coeffs.cols() != bundle.k() {
            return Err(Error::Shape(format!("coefficients are {}×{}, expected {}×{}", coeffs.rows(), coeffs.cols(), dim - n, bundle.k())));
        }
        Ok(Self { bundle, coeffs })
    }

    pub fn coefficient_field(&self) -> &MatrixField {
        &self.coeffs
    }

    pub fn total_domain(&self) -> &CoordDomain {
        self.coeffs.domain()
    }

    fn point(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        p.extend_from_slice(y);
        p
    }
}

impl RhoConnection for GeneralConnection {
    fn bundle(&self) -> &AnchorBundle {
        &self.bundle
    }

    fn fiber_dim(&self) -> usize {
        self.coeffs.rows()
    }

    fn coefficients(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        self.coeffs.eval(&self.point(x, y))
    }

    fn coefficients_partial(&self, x: &[f64], y: &[f64], axis: usize) -> Result<DMatrix<f64>> {
        self.coeffs.partial(&self.point(x, y), axis)
    }
}

/// Linear ρ-connection with coefficients `Γ^A_{αB}(x)`, stored as one `ℓ × ℓ`
/// matrix field `G_α` per frame index `α` (row `A`, column `B`).
///
/// These are the h-lift coefficients: `h(x, y, u) = (γu, Σ_α u^α G_α(x) y)`.
/// The frame coefficients of the derivative operator,
/// `∇_{σ_α} p_A = Ĝ^B_{αA} p_B`, are their negatives (see
/// [`LinearConnection::frame_matrix`]).
#[derive(Clone, Debug)]
pub struct LinearConnection {
    bundle: AnchorBundle,
    ell: usize,
    coeffs: Vec<MatrixField>,
}

impl LinearConnection {
    pub fn new(bundle: AnchorBundle, ell: usize, coeffs: Vec<MatrixField>) -> Result<Self> {
        if coeffs.len() != bundle.k() {
            return Err(Error::Shape(format!("{} coefficient matrices for fiber rank {}", coeffs.len(), bundle.k())));
        }
        for (alpha, g) in coeffs.iter().enumerate() {
            if g.rows() != ell || g.cols() != ell {
                return Err(Error::Shape(format!("coefficient matrix {alpha} is {}×{}, expected {ell}×{ell}", g.rows(), g.cols())));
            }
            if g.domain() != bundle.base() {
                return Err(Error::Shape(format!("coefficient matrix {alpha} lives on a different box")));
            }
        }
        Ok(Self { bundle, ell, coeffs })
    }

    /// Build from a function returning the field `Γ^A_{αB}` for `(A, α, B)`.
    pub fn from_fn(bundle: AnchorBundle, ell: usize, mut f: impl FnMut(usize, usize, usize) -> ScalarField) -> Result<Self> {
        let base = bundle.base().clone();
        let coeffs =
            (0..bundle.k()).map(|alpha| MatrixField::from_fn(base.clone(), ell, ell, |a, b| f(a, alpha, b))).collect::<Result<Vec<_>>>()?;
        Self::new(bundle, ell, coeffs)
    }

    pub fn zero(bundle: AnchorBundle, ell: usize) -> Self {
        let base = bundle.base().clone();
        let coeffs = (0..bundle.k()).map(|_| MatrixField::zeros(base.clone(), ell, ell)).collect();
        Self { bundle, ell, coeffs }
    }

    /// Constant coefficients, one `ℓ × ℓ` matrix per `α`.
    pub fn constant(bundle: AnchorBundle, matrices: &[DMatrix<f64>]) -> Result<Self> {
        let ell = matrices.first().map_or(0, |m| m.nrows());
        let base = bundle.base().clone();
        let coeffs = matrices.iter().map(|m| MatrixField::constant(base.clone(), m)).collect();
        Self::new(bundle, ell, coeffs)
    }

    pub fn k(&self) -> usize {
        self.bundle.k()
    }

    pub fn matrix_field(&self, alpha: usize) -> &MatrixField {
        &self.coeffs[alpha]
    }

    pub fn field(&self, a: usize, alpha: usize, b: usize) -> &ScalarField {
        self.coeffs[alpha].entry(a, b)
    }

    /// `G_α(x)`, entries `Γ^A_{αB}(x)`.
    pub fn matrix(&self, alpha: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.coeffs[alpha].eval(x)
    }

    pub fn matrix_partial(&self, alpha: usize, x: &[f64], axis: usize) -> Result<DMatrix<f64>> {
        self.coeffs[alpha].partial(x, axis)
    }

    /// All `G_α(x)`.
    pub fn matrices(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        (0..self.k()).map(|alpha| self.matrix(alpha, x)).collect()
    }

    /// Frame coefficients `Ĝ_α = −G_α` of the derivative operator:
    /// `∇_{σ_α} p_A = Σ_B Ĝ_α[B, A] p_B`.
    pub fn frame_matrix(&self, alpha: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(-self.matrix(alpha, x)?)
    }

    /// `Σ_α u^α G_α(x)`.
    pub fn contracted(&self, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        if u.len() != self.k() {
            return Err(Error::Shape(format!("fiber vector has {} entries, expected {}", u.len(), self.k())));
        }
        let mut m = DMatrix::zeros(self.ell, self.ell);
        for (alpha, &ua) in u.iter().enumerate() {
            if ua != 0.0 {
                m += self.matrix(alpha, x)? * ua;
            }
        }
        Ok(m)
    }

    /// The same connection as a general one on `base × fiber_box`.
    pub fn to_general(&self, fiber_box: &CoordDomain) -> Result<GeneralConnection> {
        if fiber_box.dim() != self.ell {
            return Err(Error::Shape("fiber box dimension must equal ℓ".into()));
        }
        let n = self.bundle.n();
        let total = self.bundle.base().product(fiber_box);
        let coeffs = MatrixField::from_fn(total.clone(), self.ell, self.k(), |a, alpha| {
            sum_fields(
                &total,
                (0..self.ell).map(|b| &self.field(a, alpha, b).extend(&total) * &ScalarField::coordinate(total.clone(), n + b)),
            )
        })?;
        GeneralConnection::new(self.bundle.clone(), coeffs)
    }
}

impl RhoConnection for LinearConnection {
    fn bundle(&self) -> &AnchorBundle {
        &self.bundle
    }

    fn fiber_dim(&self) -> usize {
        self.ell
    }

    fn coefficients(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        let yv = DVector::from_column_slice(y);
        let mut m = DMatrix::zeros(self.ell, self.k());
        for alpha in 0..self.k() {
            m.set_column(alpha, &(self.matrix(alpha, x)? * &yv));
        }
        Ok(m)
    }

    fn coefficients_partial(&self, x: &[f64], y: &[f64], axis: usize) -> Result<DMatrix<f64>> {
        let n = self.bundle.n();
        let mut m = DMatrix::zeros(self.ell, self.k());
        if axis < n {
            let yv = DVector::from_column_slice(y);
            for alpha in 0..self.k() {
                m.set_column(alpha, &(self.matrix_partial(alpha, x, axis)? * &yv));
            }
        } else if axis < n + self.ell {
            for alpha in 0..self.k() {
                m.set_column(alpha, &self.matrix(alpha, x)?.column(axis - n));
            }
        } else {
            return Err(Error::Shape(format!("axis {axis} out of range")));
        }
        Ok(m)
    }
}

/// The h-lift `s^h(e) = h(e, s(π(e)))` of a section, as a vector field on
/// the total space (coordinates `x` then `y`).
pub struct LiftedSection<'a, C: RhoConnection + ?Sized> {
    conn: &'a C,
    section: SectionNu,
}

pub fn h_lift_section<'a, C: RhoConnection + ?Sized>(conn: &'a C, s: &SectionNu) -> Result<LiftedSection<'a, C>> {
    if s.len() != conn.bundle().k() {
        return Err(Error::Shape(format!("section has {} components, expected {}", s.len(), conn.bundle().k())));
    }
    Ok(LiftedSection { conn, section: s.clone() })
}

impl<C: RhoConnection + ?Sized> LiftedSection<'_, C> {
    fn split<'p>(&self, p: &'p [f64]) -> Result<(&'p [f64], &'p [f64])> {
        let n = self.conn.bundle().n();
        if p.len() != n + self.conn.fiber_dim() {
            return Err(Error::Shape(format!("point has {} coordinates, expected {}", p.len(), n + self.conn.fiber_dim())));
        }
        Ok(p.split_at(n))
    }
}

impl<C: RhoConnection + ?Sized> TangentField for LiftedSection<'_, C> {
    fn dim(&self) -> usize {
        self.conn.bundle().n() + self.conn.fiber_dim()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        let (x, y) = self.split(p)?;
        let s = self.section.eval(x)?;
        Ok(self.conn.h_apply(x, y, s.as_slice())?.stacked())
    }

    fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let (x, y) = self.split(p)?;
        let n = x.len();
        let dim = self.dim();
        let gamma = self.conn.bundle().gamma_at(x)?;
        let coeffs = self.conn.coefficients(x, y)?;
        let s = self.section.eval(x)?;
        let ds = self.section.jacobian(x)?;
        let mut jac = DMatrix::zeros(dim, dim);
        for axis in 0..dim {
            let ds_axis = if axis < n { ds.column(axis).into_owned() } else { DVector::zeros(s.len()) };
            let (dgamma, dcoeffs) = if axis < n {
                (self.conn.bundle().gamma().partial(x, axis)?, self.conn.coefficients_partial(x, y, axis)?)
            } else {
                (DMatrix::zeros(gamma.nrows(), gamma.ncols()), self.conn.coefficients_partial(x, y, axis)?)
            };
            let base = &dgamma * &s + &gamma * &ds_axis;
            let fiber = &dcoeffs * &s + &coeffs * &ds_axis;
            jac.view_mut((0, axis), (n, 1)).copy_from(&base);
            jac.view_mut((n, axis), (fiber.len(), 1)).copy_from(&fiber);
        }
        Ok(jac)
    }
}

type InverseMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Change of bundle coordinates `x̄ = x̄(x)`, `ȳ = Ξ(x)y`, `ū = Λ(x)u`.
#[derive(Clone)]
pub struct BundleChange {
    new_base: CoordDomain,
    forward: VectorField,
    inverse: InverseMap,
    xi: MatrixField,
    lambda: MatrixField,
}

impl std::fmt::Debug for BundleChange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BundleChange").field("old_base", self.forward.domain()).field("new_base", &self.new_base).finish()
    }
}

impl BundleChange {
    /// `forward` maps the old box into `new_base`; `inverse` undoes it.
    pub fn new<F>(forward: VectorField, inverse: F, new_base: CoordDomain, xi: MatrixField, lambda: MatrixField) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let old = forward.domain();
        if forward.len() != old.dim() || new_base.dim() != old.dim() {
            return Err(Error::Shape("coordinate change must preserve the base dimension".into()));
        }
        if xi.domain() != old || lambda.domain() != old || xi.rows() != xi.cols() || lambda.rows() != lambda.cols() {
            return Err(Error::Shape("Ξ and Λ must be square fields on the old box".into()));
        }
        Ok(Self { new_base, forward, inverse: Arc::new(inverse), xi, lambda })
    }

    pub fn identity(base: CoordDomain, ell: usize, k: usize) -> Self {
        let n = base.dim();
        let forward = VectorField::new(base.clone(), (0..n).map(|i| ScalarField::coordinate(base.clone(), i)).collect()).expect("same box");
        Self {
            new_base: base.clone(),
            forward,
            inverse: Arc::new(|x: &[f64]| x.to_vec()),
            xi: MatrixField::identity(base.clone(), ell),
            lambda: MatrixField::identity(base, k),
        }
    }

    pub fn old_base(&self) -> &CoordDomain {
        self.forward.domain()
    }

    pub fn new_base(&self) -> &CoordDomain {
        &self.new_base
    }

    pub fn forward_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward.eval(x)?.as_slice().to_vec())
    }

    pub fn inverse_point(&self, xbar: &[f64]) -> Vec<f64> {
        (self.inverse)(xbar)
    }

    pub fn xi(&self) -> &MatrixField {
        &self.xi
    }

    pub fn lambda(&self) -> &MatrixField {
        &self.lambda
    }

    /// The reverse change, from the new coordinates back to the old ones. Its
    /// fields are opaque callables differentiated by central differences.
    pub fn inverse(&self) -> Self {
        let new_base = self.new_base.clone();
        let n = new_base.dim();
        let inv = Arc::clone(&self.inverse);
        let forward = VectorField::new(
            new_base.clone(),
            (0..n)
                .map(|i| {
                    let inv = Arc::clone(&inv);
                    ScalarField::from_fn(new_base.clone(), move |xb| inv(xb)[i])
                })
                .collect(),
        )
        .expect("same box");
        let inverted = |m: &MatrixField| {
            let m = m.clone();
            let inv = Arc::clone(&inv);
            let size = m.rows();
            MatrixField::from_fn(new_base.clone(), size, size, |i, j| {
                let (m, inv) = (m.clone(), Arc::clone(&inv));
                ScalarField::from_fn(new_base.clone(), move |xb| {
                    m.eval(&inv(xb)).ok().and_then(|v| checked_inverse(&v)).map_or(f64::NAN, |v| v[(i, j)])
                })
            })
            .expect("square")
        };
        let old_forward = self.forward.clone();
        Self {
            new_base: self.old_base().clone(),
            forward,
            inverse: Arc::new(move |x: &[f64]| {
                old_forward.eval(x).map(|v| v.as_slice().to_vec()).unwrap_or_else(|_| vec![f64::NAN; x.len()])
            }),
            xi: inverted(&self.xi),
            lambda: inverted(&self.lambda),
        }
    }

    fn check_regular(&self) -> Result<()> {
        for x in self.old_base().shrunk(0.01).grid(3) {
            if checked_inverse(&self.xi.eval(&x)?).is_none() {
                return Err(Error::Singular { what: "Ξ", point: x });
            }
            if checked_inverse(&self.lambda.eval(&x)?).is_none() {
                return Err(Error::Singular { what: "Λ", point: x });
            }
            if checked_inverse(&self.forward.jacobian(&x)?).is_none() {
                return Err(Error::Singular { what: "∂x̄/∂x", point: x });
            }
        }
        Ok(())
    }
}

/// Coefficients of `conn` in the coordinates of `change`:
///
/// `γ̄(x̄) = (∂x̄/∂x) γ Λ⁻¹`,
/// `Ḡ_α(x̄) = Σ_β (γ^k_β ∂_k Ξ + Ξ G_β) Ξ⁻¹ (Λ⁻¹)^β_α`,
///
/// everything on the right evaluated at `x = x(x̄)`. The result's fields are
/// opaque callables on the new box, differentiated by central differences.
pub fn transform_connection(conn: &LinearConnection, change: &BundleChange) -> Result<LinearConnection> {
    let bundle = conn.bundle();
    if change.old_base() != bundle.base() || change.xi.rows() != conn.fiber_dim() || change.lambda.rows() != bundle.k() {
        return Err(Error::Shape("coordinate change does not match the connection".into()));
    }
    change.check_regular()?;
    let (n, k, ell) = (bundle.n(), bundle.k(), conn.fiber_dim());
    let new_base = change.new_base.clone();

    let shared = Arc::new((conn.clone(), change.clone()));
    let gamma_bar = {
        let shared = Arc::clone(&shared);
        move |xbar: &[f64]| -> Result<DMatrix<f64>> {
            let (conn, change) = &*shared;
            let x = change.inverse_point(xbar);
            let lambda_inv = checked_inverse(&change.lambda.eval(&x)?).ok_or(Error::Singular { what: "Λ", point: x.clone() })?;
            Ok(change.forward.jacobian(&x)? * conn.bundle().gamma_at(&x)? * lambda_inv)
        }
    };
    let coeffs_bar = {
        let shared = Arc::clone(&shared);
        move |xbar: &[f64]| -> Result<Vec<DMatrix<f64>>> {
            let (conn, change) = &*shared;
            let x = change.inverse_point(xbar);
            let gamma = conn.bundle().gamma_at(&x)?;
            let xi = change.xi.eval(&x)?;
            let xi_inv = checked_inverse(&xi).ok_or(Error::Singular { what: "Ξ", point: x.clone() })?;
            let lambda_inv = checked_inverse(&change.lambda.eval(&x)?).ok_or(Error::Singular { what: "Λ", point: x.clone() })?;
            let dxi = (0..n).map(|axis| change.xi.partial(&x, axis)).collect::<Result<Vec<_>>>()?;
            let m: Vec<DMatrix<f64>> = (0..k)
                .map(|beta| {
                    let mut along = DMatrix::zeros(ell, ell);
                    for (axis, d) in dxi.iter().enumerate() {
                        along += d * gamma[(axis, beta)];
                    }
                    Ok((along + &xi * conn.matrix(beta, &x)?) * &xi_inv)
                })
                .collect::<Result<_>>()?;
            Ok((0..k)
                .map(|alpha| {
                    let mut g = DMatrix::zeros(ell, ell);
                    for (beta, mb) in m.iter().enumerate() {
                        g += mb * lambda_inv[(beta, alpha)];
                    }
                    g
                })
                .collect())
        }
    };

    let gamma_bar = Arc::new(gamma_bar);
    let gamma_field = MatrixField::from_fn(new_base.clone(), n, k, |i, alpha| {
        let g = Arc::clone(&gamma_bar);
        ScalarField::from_fn(new_base.clone(), move |xb| g(xb).map_or(f64::NAN, |m| m[(i, alpha)]))
    })?;
    let coeffs_bar = Arc::new(coeffs_bar);
    let new_bundle = AnchorBundle::new(gamma_field)?;
    LinearConnection::from_fn(new_bundle, ell, |a, alpha, b| {
        let c = Arc::clone(&coeffs_bar);
        ScalarField::from_fn(new_base.clone(), move |xb| c(xb).map_or(f64::NAN, |m| m[alpha][(a, b)]))
    })
}

/// Deterministic fiber samples: the corners and center of `[-1, 1]^ℓ` plus
/// `random` seeded points in `[-2, 2]^ℓ`.
pub fn fiber_samples(ell: usize, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; ell]];
    if ell <= 4 {
        out.extend(CoordDomain::cube(ell.max(1), -1.0, 1.0).expect("valid").grid(2).into_iter().map(|mut p| {
            p.truncate(ell);
            p
        }));
    }
    let mut rng = seeded_rng(seed);
    out.extend((0..random).map(|_| uniform_vector(ell, 2.0, &mut rng)));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSample {
    pub y: Vec<f64>,
    pub ker_h_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartialConnectionReport {
    pub passed: bool,
    pub ker_rho_dim: usize,
    pub samples: Vec<KernelSample>,
    /// First fiber point where `dim ker h_e ≠ dim ker ρ_x`.
    pub witness: Option<Vec<f64>>,
}

/// Checks `ker(h_e) = ker(ρ_x)` (equivalently `Q_e ∩ V_eE = 0`) at every
/// `e = (x, y)` with `y` from `y_samples`. Since `ker h_e ⊂ ker ρ_x`, equal
/// dimensions suffice.
pub fn partial_connection_test<C: RhoConnection + ?Sized>(conn: &C, x: &[f64], y_samples: &[Vec<f64>]) -> Result<PartialConnectionReport> {
    let ker_rho_dim = conn.bundle().fiber_rank_kernel(x)?.kernel.len();
    let mut samples = Vec::with_capacity(y_samples.len());
    let mut witness = None;
    for y in y_samples {
        let ker_h_dim = rank_kernel(&conn.h_matrix(x, y)?, RANK_RELATIVE_TOLERANCE).kernel.len();
        if ker_h_dim != ker_rho_dim && witness.is_none() {
            witness = Some(y.clone());
        }
        samples.push(KernelSample { y: y.clone(), ker_h_dim });
    }
    Ok(PartialConnectionReport { passed: witness.is_none(), ker_rho_dim, samples, witness })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionReport {
    /// `dim(Q_e ∩ V_eE)` by subspace arithmetic on orthonormalised spanning sets.
    pub intersection_dim: usize,
    /// `dim ker ρ_x − dim ker h_e`.
    pub kernel_difference: usize,
    /// `Q_e + V_eE = T_eE`, by subspace arithmetic.
    pub sum_is_full: bool,
    /// `rank γ(x) = n`.
    pub anchor_surjective: bool,
}

impl IntersectionReport {
    pub fn consistent(&self) -> bool {
        self.intersection_dim == self.kernel_difference && self.sum_is_full == self.anchor_surjective
    }
}

pub fn intersection_sum_dims<C: RhoConnection + ?Sized>(conn: &C, x: &[f64], y: &[f64]) -> Result<IntersectionReport> {
    let h = conn.h_matrix(x, y)?;
    let (n, l) = (conn.bundle().n(), conn.fiber_dim());
    let q = orthonormal_basis(&columns(&h), RANK_RELATIVE_TOLERANCE);
    let vertical: Vec<DVector<f64>> = (0..l)
        .map(|a| {
            let mut v = DVector::zeros(n + l);
            v[n + a] = 1.0;
            v
        })
        .collect();
    let mut union = q.clone();
    union.extend(vertical);
    let sum_dim = span_dim(&union);
    let intersection_dim = q.len() + l - sum_dim;

    let rho = conn.bundle().fiber_rank_kernel(x)?;
    let ker_h = rank_kernel(&h, RANK_RELATIVE_TOLERANCE).kernel.len();
    Ok(IntersectionReport {
        intersection_dim,
        kernel_difference: rho.kernel.len().saturating_sub(ker_h),
        sum_is_full: sum_dim == n + l,
        anchor_surjective: rho.rank == n,
    })
}

fn check_identity_anchor(ordinary: &AnchorBundle, bundle: &AnchorBundle) -> Result<()> {
    if ordinary.k() != ordinary.n() || ordinary.base() != bundle.base() {
        return Err(Error::Shape("ordinary connection must be defined over id: TM → TM on the same box".into()));
    }
    for x in ordinary.base().grid(2) {
        if (ordinary.gamma_at(&x)? - DMatrix::identity(ordinary.n(), ordinary.n())).amax() > 0.0 {
            return Err(Error::Rejected("ordinary connection must have the identity anchor".into()));
        }
    }
    Ok(())
}

/// `h(e, n) := h₀(e, ρ(n))` for an Ehresmann connection `h₀`, i.e.
/// `Γ(x, y) = Γ₀(x, y)·γ(x)`.
pub fn restrict_ordinary_connection(ordinary: &GeneralConnection, bundle: &AnchorBundle) -> Result<GeneralConnection> {
    check_identity_anchor(ordinary.bundle(), bundle)?;
    let total = ordinary.total_domain();
    let coeffs = ordinary.coefficient_field().mul(&bundle.gamma().extend(total))?;
    GeneralConnection::new(bundle.clone(), coeffs)
}

/// Linear version of [`restrict_ordinary_connection`]: `G_α = Σ_j γ^j_α G₀_j`.
pub fn restrict_linear_connection(ordinary: &LinearConnection, bundle: &AnchorBundle) -> Result<LinearConnection> {
    check_identity_anchor(ordinary.bundle(), bundle)?;
    let base = bundle.base().clone();
    LinearConnection::from_fn(bundle.clone(), ordinary.fiber_dim(), |a, alpha, b| {
        sum_fields(&base, (0..bundle.n()).map(|j| ordinary.field(a, j, b) * bundle.gamma().entry(j, alpha)))
    })
}
