//! Pre-Lie structures on the sections of an anchored bundle, and the
//! curvature and torsion they determine.
//!
//! A product `*` on sections is fixed by structure functions on the frame,
//! `σ_α * σ_β = c^λ_{αβ} σ_λ`, extended by skew-symmetry and the Leibniz rule
//! `s₁ * (f s₂) = f (s₁ * s₂) + ρ(s₁)(f) s₂`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bundle::AnchorBundle;
use crate::chart::{lie_bracket, DerivativeMode, MatrixField, ScalarField, VectorField};
use crate::connection::{h_lift_section, LinearConnection, RhoConnection};
use crate::derivative::{nabla, nabla_section, NESTED_DIFFERENCE_STEP};
use crate::error::{Error, Result};
use crate::section::{SectionNu, SectionPi};

/// Anchor-homomorphism tolerance when every field has exact derivatives.
pub const TAU_HOM_EXACT: f64 = 1e-8;
/// Anchor-homomorphism tolerance when some field is differenced.
pub const TAU_HOM_DIFFERENCED: f64 = 1e-4;

/// Skew structure functions `c^λ_{αβ}`. Only `α < β` is stored, so
/// skew-symmetry holds exactly.
#[derive(Clone, Debug)]
pub struct PreLieStructure {
    bundle: AnchorBundle,
    /// `upper[pair_index(α, β)][λ]` for `α < β`.
    upper: Vec<Vec<ScalarField>>,
}

fn pair_index(k: usize, alpha: usize, beta: usize) -> usize {
    debug_assert!(alpha < beta && beta < k);
    alpha * (2 * k - alpha - 1) / 2 + (beta - alpha - 1)
}

impl PreLieStructure {
    /// Build from `f(λ, α, β)`, called only for `α < β`.
    pub fn from_upper(bundle: AnchorBundle, mut f: impl FnMut(usize, usize, usize) -> ScalarField) -> Result<Self> {
        let k = bundle.k();
        let mut upper = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for alpha in 0..k {
            for beta in alpha + 1..k {
                let fields: Vec<ScalarField> = (0..k).map(|lambda| f(lambda, alpha, beta)).collect();
                if fields.iter().any(|c| c.domain() != bundle.base()) {
                    return Err(Error::Shape("structure functions must live on the base box".into()));
                }
                upper.push(fields);
            }
        }
        Ok(Self { bundle, upper })
    }

    pub fn zero(bundle: AnchorBundle) -> Self {
        let base = bundle.base().clone();
        Self::from_upper(bundle, |_, _, _| ScalarField::zero(base.clone())).expect("same box")
    }

    /// Constant structure functions `c[λ][(α, β)]`, checked for exact skew-symmetry.
    pub fn constant(bundle: AnchorBundle, c: &[DMatrix<f64>]) -> Result<Self> {
        let k = bundle.k();
        if c.len() != k || c.iter().any(|m| m.nrows() != k || m.ncols() != k) {
            return Err(Error::Shape(format!("expected {k} structure matrices of size {k}×{k}")));
        }
        for (lambda, m) in c.iter().enumerate() {
            if (m + m.transpose()).amax() != 0.0 {
                return Err(Error::Rejected(format!("structure matrix {lambda} is not skew")));
            }
        }
        let base = bundle.base().clone();
        Self::from_upper(bundle, |lambda, alpha, beta| ScalarField::constant(base.clone(), c[lambda][(alpha, beta)]))
    }

    /// From a full table `c[λ][α][β]`; skew-symmetry is checked on a grid of
    /// the box (to `1e-12`), and the upper triangle is kept.
    pub fn from_full(bundle: AnchorBundle, c: Vec<Vec<Vec<ScalarField>>>) -> Result<Self> {
        let k = bundle.k();
        if c.len() != k || c.iter().any(|m| m.len() != k || m.iter().any(|row| row.len() != k)) {
            return Err(Error::Shape(format!("expected a {k}×{k}×{k} table of structure functions")));
        }
        for x in bundle.base().grid(3) {
            #[allow(clippy::needless_range_loop)]
            for (lambda, m) in c.iter().enumerate() {
                for alpha in 0..k {
                    for beta in alpha..k {
                        let sum = m[alpha][beta].eval(&x)? + m[beta][alpha].eval(&x)?;
                        if sum.abs() > 1e-12 {
                            return Err(Error::Rejected(format!(
                                "structure functions are not skew: c^{lambda}_{{{alpha}{beta}}} + c^{lambda}_{{{beta}{alpha}}} = {sum:e} at {x:?}"
                            )));
                        }
                    }
                }
            }
        }
        Self::from_upper(bundle, |lambda, alpha, beta| c[lambda][alpha][beta].clone())
    }

    pub fn bundle(&self) -> &AnchorBundle {
        &self.bundle
    }

    /// `c^λ_{αβ}` as a field.
    pub fn field(&self, lambda: usize, alpha: usize, beta: usize) -> ScalarField {
        let k = self.bundle.k();
        match alpha.cmp(&beta) {
            std::cmp::Ordering::Less => self.upper[pair_index(k, alpha, beta)][lambda].clone(),
            std::cmp::Ordering::Greater => -&self.upper[pair_index(k, beta, alpha)][lambda],
            std::cmp::Ordering::Equal => ScalarField::zero(self.bundle.base().clone()),
        }
    }

    /// `c^λ_{αβ}(x)`, one `k × k` matrix (rows `α`, columns `β`) per `λ`.
    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let k = self.bundle.k();
        let mut out = vec![DMatrix::zeros(k, k); k];
        for alpha in 0..k {
            for beta in alpha + 1..k {
                for (lambda, c) in self.upper[pair_index(k, alpha, beta)].iter().enumerate() {
                    let v = c.eval(x)?;
                    out[lambda][(alpha, beta)] = v;
                    out[lambda][(beta, alpha)] = -v;
                }
            }
        }
        Ok(out)
    }

    /// Whether any anchor entry or structure function is differenced.
    pub fn uses_differencing(&self) -> bool {
        let differenced = |f: &ScalarField| matches!(f.mode(), DerivativeMode::CentralDifference { .. });
        self.bundle.gamma().entries().iter().any(differenced) || self.upper.iter().flatten().any(differenced)
    }

    /// `τ_hom` appropriate to this structure's derivative modes.
    pub fn tau_hom(&self) -> f64 {
        if self.uses_differencing() {
            TAU_HOM_DIFFERENCED
        } else {
            TAU_HOM_EXACT
        }
    }
}

fn check_section(st: &PreLieStructure, s: &SectionNu) -> Result<()> {
    if s.len() != st.bundle.k() {
        return Err(Error::Shape(format!("section has {} components, expected {}", s.len(), st.bundle.k())));
    }
    Ok(())
}

/// `(s₁ * s₂)^λ = c^λ_{αβ} s₁^α s₂^β + ρ(s₁)(s₂^λ) − ρ(s₂)(s₁^λ)` at `x`.
pub fn star_product(st: &PreLieStructure, s1: &SectionNu, s2: &SectionNu, x: &[f64]) -> Result<DVector<f64>> {
    check_section(st, s1)?;
    check_section(st, s2)?;
    let (v1, v2) = (s1.eval(x)?, s2.eval(x)?);
    let gamma = st.bundle.gamma_at(x)?;
    let mut out = s2.jacobian(x)? * (&gamma * &v1) - s1.jacobian(x)? * (&gamma * &v2);
    for (lambda, c) in st.coefficients(x)?.iter().enumerate() {
        out[lambda] += v1.dot(&(c * &v2));
    }
    Ok(out)
}

/// `s₁ * s₂` as a section, differenced with [`NESTED_DIFFERENCE_STEP`].
pub fn star_section(st: &PreLieStructure, s1: &SectionNu, s2: &SectionNu) -> Result<SectionNu> {
    check_section(st, s1)?;
    check_section(st, s2)?;
    let shared = Arc::new((st.clone(), s1.clone(), s2.clone()));
    let domain = st.bundle.base().clone();
    let components = (0..st.bundle.k())
        .map(|lambda| {
            let shared = Arc::clone(&shared);
            ScalarField::from_fn_with_step(
                domain.clone(),
                move |x| {
                    let (st, s1, s2) = &*shared;
                    star_product(st, s1, s2, x).map_or(f64::NAN, |v| v[lambda])
                },
                NESTED_DIFFERENCE_STEP,
            )
        })
        .collect();
    VectorField::new(domain, components)
}

/// `max |c^λ_{αβ} γ^i_λ − [X_α, X_β]^i|` over `α, β, i`, where `X_α` are the
/// anchor columns. Zero exactly when `ρ(s₁ * s₂) = [ρ(s₁), ρ(s₂)]` at `x`.
pub fn anchor_hom_residual(st: &PreLieStructure, x: &[f64]) -> Result<f64> {
    let k = st.bundle.k();
    let gamma = st.bundle.gamma_at(x)?;
    let c = st.coefficients(x)?;
    let frames: Vec<VectorField> = (0..k).map(|a| st.bundle.frame_field(a)).collect();
    let mut worst = 0.0_f64;
    for alpha in 0..k {
        for beta in alpha + 1..k {
            let bracket = lie_bracket(&frames[alpha], &frames[beta], x)?;
            let mut image = DVector::zeros(gamma.nrows());
            for (lambda, cl) in c.iter().enumerate() {
                image += gamma.column(lambda) * cl[(alpha, beta)];
            }
            worst = worst.max((image - bracket).amax());
        }
    }
    Ok(worst)
}

/// `s₁ * (s₂ * s₃) + s₂ * (s₃ * s₁) + s₃ * (s₁ * s₂)` at `x`.
pub fn jacobiator(st: &PreLieStructure, s1: &SectionNu, s2: &SectionNu, s3: &SectionNu, x: &[f64]) -> Result<DVector<f64>> {
    Ok(star_product(st, s1, &star_section(st, s2, s3)?, x)?
        + star_product(st, s2, &star_section(st, s3, s1)?, x)?
        + star_product(st, s3, &star_section(st, s1, s2)?, x)?)
}

fn check_pair(conn: &LinearConnection, st: &PreLieStructure) -> Result<()> {
    let (a, b) = (conn.bundle(), st.bundle());
    if a.base() != b.base() || a.k() != b.k() || a.n() != b.n() {
        return Err(Error::Shape("connection and structure live on different anchored bundles".into()));
    }
    Ok(())
}

/// `R(s₁, s₂; ψ) = ∇_{s₁}∇_{s₂}ψ − ∇_{s₂}∇_{s₁}ψ − ∇_{s₁*s₂}ψ` at `x`, with the
/// outer derivatives taken by differencing the inner ones.
pub fn curvature(
    conn: &LinearConnection,
    st: &PreLieStructure,
    s1: &SectionNu,
    s2: &SectionNu,
    psi: &SectionPi,
    x: &[f64],
) -> Result<DVector<f64>> {
    check_pair(conn, st)?;
    let inner2 = nabla_section(conn, s2, psi)?;
    let inner1 = nabla_section(conn, s1, psi)?;
    let star = star_section(st, s1, s2)?;
    Ok(nabla(conn, s1, &inner2, x)? - nabla(conn, s2, &inner1, x)? - nabla(conn, &star, psi, x)?)
}

/// `R^B_{αβA}(x)`, stored as `ℓ × ℓ` matrices `R_{αβ}` with row `B`, column `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureTensor {
    pub k: usize,
    pub ell: usize,
    /// `matrices[α * k + β]`.
    pub matrices: Vec<DMatrix<f64>>,
}

impl CurvatureTensor {
    pub fn matrix(&self, alpha: usize, beta: usize) -> &DMatrix<f64> {
        &self.matrices[alpha * self.k + beta]
    }

    pub fn component(&self, b: usize, alpha: usize, beta: usize, a: usize) -> f64 {
        self.matrix(alpha, beta)[(b, a)]
    }

    /// `R^B_{αβA} s₁^α s₂^β ψ^A`.
    pub fn contract(&self, s1: &[f64], s2: &[f64], psi: &[f64]) -> DVector<f64> {
        let psi = DVector::from_column_slice(psi);
        let mut out = DVector::zeros(self.ell);
        for (alpha, &a) in s1.iter().enumerate() {
            for (beta, &b) in s2.iter().enumerate() {
                if a * b != 0.0 {
                    out += self.matrix(alpha, beta) * &psi * (a * b);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.matrices.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

/// Curvature components in the frame convention `∇_{σ_α} p_A = Ĝ^B_{αA} p_B`,
/// `Ĝ_α = −G_α`:
///
/// `R_{αβ} = X_α(Ĝ_β) − X_β(Ĝ_α) + Ĝ_α Ĝ_β − Ĝ_β Ĝ_α − c^λ_{αβ} Ĝ_λ`,
///
/// where `X_α = γ^i_α ∂_i`. These agree with [`curvature`] on frame sections.
pub fn curvature_components(conn: &LinearConnection, st: &PreLieStructure, x: &[f64]) -> Result<CurvatureTensor> {
    check_pair(conn, st)?;
    let (n, k, ell) = (conn.bundle().n(), conn.k(), conn.fiber_dim());
    let gamma = conn.bundle().gamma_at(x)?;
    let g_hat: Vec<DMatrix<f64>> = (0..k).map(|a| conn.frame_matrix(a, x)).collect::<Result<_>>()?;
    let partials: Vec<Vec<DMatrix<f64>>> =
        (0..k).map(|a| (0..n).map(|i| conn.matrix_partial(a, x, i).map(|m| -m)).collect::<Result<_>>()).collect::<Result<_>>()?;
    let along = |alpha: usize, beta: usize| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(ell, ell);
        for (i, d) in partials[beta].iter().enumerate() {
            m += d * gamma[(i, alpha)];
        }
        m
    };
    let c = st.coefficients(x)?;
    let mut matrices = Vec::with_capacity(k * k);
    for alpha in 0..k {
        for beta in 0..k {
            let mut r = along(alpha, beta) - along(beta, alpha) + &g_hat[alpha] * &g_hat[beta] - &g_hat[beta] * &g_hat[alpha];
            for (lambda, cl) in c.iter().enumerate() {
                r -= &g_hat[lambda] * cl[(alpha, beta)];
            }
            matrices.push(r);
        }
    }
    Ok(CurvatureTensor { k, ell, matrices })
}

/// `(ρ(s₁)ρ(s₂) − ρ(s₂)ρ(s₁) − ρ(s₁ * s₂))(f) · ψ` at `x`: the amount by which
/// `R(s₁, s₂; fψ) − f R(s₁, s₂; ψ)` fails to vanish.
pub fn non_tensorial_term(
    st: &PreLieStructure,
    s1: &SectionNu,
    s2: &SectionNu,
    f: &ScalarField,
    psi: &SectionPi,
    x: &[f64],
) -> Result<DVector<f64>> {
    let (r1, r2) = (st.bundle.anchor_field(s1)?, st.bundle.anchor_field(s2)?);
    let defect = lie_bracket(&r1, &r2, x)? - st.bundle.anchor(x, star_product(st, s1, s2, x)?.as_slice())?;
    let df = DVector::from_vec(f.gradient(x)?);
    Ok(psi.eval(x)? * df.dot(&defect))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvolutivityDefect {
    /// Base part of `[s₁^h, s₂^h](e) − (s₁ * s₂)^h(e)`; vanishes under the
    /// anchor-homomorphism condition.
    pub base: DVector<f64>,
    /// Fiber part, equal to `−R^B_{αβA}(x) s₁^α s₂^β y^A` in the frame convention
    /// of [`curvature_components`].
    pub fiber: DVector<f64>,
    /// Anchor-homomorphism residual at `x`.
    pub hom_residual: f64,
}

/// `[s₁^h, s₂^h](e) − (s₁ * s₂)^h(e)` at `e = (x, y)`. Rejected unless the
/// anchor-homomorphism residual at `x` is within `τ_hom`.
pub fn involutivity_defect(
    conn: &LinearConnection,
    st: &PreLieStructure,
    s1: &SectionNu,
    s2: &SectionNu,
    x: &[f64],
    y: &[f64],
) -> Result<InvolutivityDefect> {
    check_pair(conn, st)?;
    let hom_residual = anchor_hom_residual(st, x)?;
    if hom_residual > st.tau_hom() {
        return Err(Error::Rejected(format!("anchor-homomorphism residual {hom_residual:e} exceeds {:e} at {x:?}", st.tau_hom())));
    }
    let (l1, l2) = (h_lift_section(conn, s1)?, h_lift_section(conn, s2)?);
    let mut e = x.to_vec();
    e.extend_from_slice(y);
    let bracket = lie_bracket(&l1, &l2, &e)?;
    let star = conn.h_apply(x, y, star_product(st, s1, s2, x)?.as_slice())?.stacked();
    let defect = bracket - star;
    let n = x.len();
    Ok(InvolutivityDefect { base: defect.rows(0, n).into_owned(), fiber: defect.rows(n, y.len()).into_owned(), hom_residual })
}

fn check_torsion_shapes(conn: &LinearConnection, st: &PreLieStructure) -> Result<()> {
    check_pair(conn, st)?;
    if conn.fiber_dim() != conn.k() {
        return Err(Error::Shape(format!("torsion needs a connection on N itself (ℓ = {} ≠ k = {})", conn.fiber_dim(), conn.k())));
    }
    Ok(())
}

/// `T(s₁, s₂) = ∇_{s₁}s₂ − ∇_{s₂}s₁ − s₁ * s₂` at `x`, for a connection on `N`.
pub fn torsion(conn: &LinearConnection, st: &PreLieStructure, s1: &SectionNu, s2: &SectionNu, x: &[f64]) -> Result<DVector<f64>> {
    check_torsion_shapes(conn, st)?;
    Ok(nabla(conn, s1, s2, x)? - nabla(conn, s2, s1, x)? - star_product(st, s1, s2, x)?)
}

/// `T^λ_{αβ}`, one `k × k` matrix (rows `α`, columns `β`) per `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorsionTensor {
    pub matrices: Vec<DMatrix<f64>>,
}

impl TorsionTensor {
    pub fn component(&self, lambda: usize, alpha: usize, beta: usize) -> f64 {
        self.matrices[lambda][(alpha, beta)]
    }

    pub fn max_abs(&self) -> f64 {
        self.matrices.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

/// `T^λ_{αβ} = Ĝ^λ_{αβ} − Ĝ^λ_{βα} − c^λ_{αβ}` with frame coefficients
/// `∇_{σ_α}σ_β = Ĝ^λ_{αβ}σ_λ`, i.e. `Ĝ^λ_{αβ} = −Γ^λ_{αβ}` in the h-lift
/// convention of [`LinearConnection`].
pub fn torsion_components(conn: &LinearConnection, st: &PreLieStructure, x: &[f64]) -> Result<TorsionTensor> {
    check_torsion_shapes(conn, st)?;
    let k = conn.k();
    let g_hat: Vec<DMatrix<f64>> = (0..k).map(|a| conn.frame_matrix(a, x)).collect::<Result<_>>()?;
    let c = st.coefficients(x)?;
    let matrices = (0..k)
        .map(|lambda| {
            DMatrix::from_fn(k, k, |alpha, beta| g_hat[alpha][(lambda, beta)] - g_hat[beta][(lambda, alpha)] - c[lambda][(alpha, beta)])
        })
        .collect();
    Ok(TorsionTensor { matrices })
}

/// `[X, Y]_A = [AX, Y] + [X, AY] − A[X, Y]` at `x`.
pub fn nijenhuis_bracket(a: &MatrixField, xf: &VectorField, yf: &VectorField, x: &[f64]) -> Result<DVector<f64>> {
    let (ax, ay) = (a.apply(xf)?, a.apply(yf)?);
    Ok(lie_bracket(&ax, yf, x)? + lie_bracket(xf, &ay, x)? - a.eval(x)? * lie_bracket(xf, yf, x)?)
}

/// Structure functions of `[·,·]_A` on the coordinate frame,
/// `c^λ_{αβ} = ∂_α A^λ_β − ∂_β A^λ_α`, on the anchored bundle `γ = A`.
pub fn nijenhuis_structure(a: &MatrixField) -> Result<PreLieStructure> {
    let n = a.domain().dim();
    if a.rows() != n || a.cols() != n {
        return Err(Error::Shape("the fundamental tensor must be square of the base dimension".into()));
    }
    let bundle = AnchorBundle::new(a.clone())?;
    let base = a.domain().clone();
    let derivative = |entry: &ScalarField, axis: usize| {
        let entry = entry.clone();
        ScalarField::from_fn(base.clone(), move |x| entry.partial(x, axis).unwrap_or(f64::NAN))
    };
    PreLieStructure::from_upper(bundle, |lambda, alpha, beta| {
        &derivative(a.entry(lambda, beta), alpha) - &derivative(a.entry(lambda, alpha), beta)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::CoordDomain;
    use crate::expr::parse_field;
    use crate::sampling::{random_polynomial, random_section, seeded_rng, uniform_point};

    fn plane() -> CoordDomain {
        CoordDomain::cube(2, -1.0, 1.0).unwrap()
    }

    fn heisenberg() -> PreLieStructure {
        let d = CoordDomain::cube(3, -1.0, 1.0).unwrap();
        let entries = ["1", "0", "0", "0", "1", "0", "-x1/2", "x0/2", "1"].iter().map(|s| parse_field(s, &d).unwrap()).collect();
        let bundle = AnchorBundle::new(MatrixField::new(d.clone(), 3, 3, entries).unwrap()).unwrap();
        PreLieStructure::from_upper(bundle, |l, a, b| ScalarField::constant(d.clone(), if (l, a, b) == (2, 0, 1) { 1.0 } else { 0.0 }))
            .unwrap()
    }

    fn random_structure(seed: u64) -> PreLieStructure {
        let d = plane();
        let mut rng = seeded_rng(seed);
        let bundle =
            AnchorBundle::new(MatrixField::from_fn(d.clone(), 2, 3, |_, _| random_polynomial(&d, &mut rng, 2, 1.0)).unwrap()).unwrap();
        PreLieStructure::from_upper(bundle, |_, _, _| random_polynomial(&d, &mut rng, 1, 1.0)).unwrap()
    }

    #[test]
    fn pair_indices_are_dense() {
        let k = 5;
        let mut seen = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                seen.push(pair_index(k, a, b));
            }
        }
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn skew_symmetry_is_exact() {
        let st = random_structure(1);
        let c = st.coefficients(&[0.3, -0.2]).unwrap();
        for m in &c {
            assert_eq!(m + m.transpose(), DMatrix::zeros(3, 3));
        }
        let d = plane();
        let bad = vec![vec![vec![ScalarField::constant(d.clone(), 1.0); 3]; 3]; 3];
        assert!(PreLieStructure::from_full(st.bundle().clone(), bad).is_err());
    }

    #[test]
    fn star_product_basics() {
        let st = PreLieStructure::zero(AnchorBundle::identity(plane()));
        let (a, b) = (VectorField::constant(plane(), &[1.0, 2.0]), VectorField::constant(plane(), &[-3.0, 0.5]));
        assert_eq!(star_product(&st, &a, &b, &[0.1, 0.2]).unwrap(), DVector::zeros(2));

        let st = random_structure(2);
        let d = plane();
        let mut rng = seeded_rng(3);
        for _ in 0..100 {
            let s1 = random_section(&d, &mut rng, 3, 2, 1.0);
            let s2 = random_section(&d, &mut rng, 3, 2, 1.0);
            let f = random_polynomial(&d, &mut rng, 2, 1.0);
            let x = uniform_point(&d, &mut rng);
            assert!(star_product(&st, &s1, &s1, &x).unwrap().amax() < 1e-12);
            let skew = star_product(&st, &s1, &s2, &x).unwrap() + star_product(&st, &s2, &s1, &x).unwrap();
            assert!(skew.amax() < 1e-12);
            let lhs = star_product(&st, &s1, &s2.scaled(&f), &x).unwrap();
            let rho_f = DVector::from_vec(f.gradient(&x).unwrap()).dot(&st.bundle().anchor(&x, s1.eval(&x).unwrap().as_slice()).unwrap());
            let rhs = star_product(&st, &s1, &s2, &x).unwrap() * f.eval(&x).unwrap() + s2.eval(&x).unwrap() * rho_f;
            assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn anchor_homomorphism_examples() {
        assert_eq!(anchor_hom_residual(&PreLieStructure::zero(AnchorBundle::identity(plane())), &[0.2, 0.4]).unwrap(), 0.0);
        let constant = AnchorBundle::constant(plane(), &DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0])).unwrap();
        assert_eq!(anchor_hom_residual(&PreLieStructure::zero(constant), &[0.2, 0.4]).unwrap(), 0.0);
        let h = heisenberg();
        for x in h.bundle().base().grid(3) {
            assert!(anchor_hom_residual(&h, &x).unwrap() < 1e-9);
        }
        assert_eq!(h.tau_hom(), TAU_HOM_EXACT);
    }

    #[test]
    fn jacobiator_of_a_lie_algebroid_vanishes() {
        let h = heisenberg();
        let d = h.bundle().base().clone();
        let mut rng = seeded_rng(5);
        for _ in 0..10 {
            let s: Vec<_> = (0..3).map(|_| random_section(&d, &mut rng, 3, 2, 1.0)).collect();
            let x = uniform_point(&d.shrunk(0.2), &mut rng);
            assert!(jacobiator(&h, &s[0], &s[1], &s[2], &x).unwrap().amax() < 1e-8);
        }
    }

    fn constant_case() -> (LinearConnection, PreLieStructure) {
        let d = plane();
        let bundle = AnchorBundle::constant(d, &DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let g = [
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.3, 0.1]),
        ];
        let conn = LinearConnection::constant(bundle.clone(), &g).unwrap();
        let mut c = vec![DMatrix::zeros(3, 3); 3];
        c[2][(0, 1)] = 1.0;
        c[2][(1, 0)] = -1.0;
        (conn, PreLieStructure::constant(bundle, &c).unwrap())
    }

    #[test]
    fn constant_coefficient_curvature_closed_form() {
        let (conn, st) = constant_case();
        let x = [0.1, 0.2];
        let r = curvature_components(&conn, &st, &x).unwrap();
        // Closed form in the frame convention Γ̂ = −G:
        // R_{αβ} = Γ̂_αΓ̂_β − Γ̂_βΓ̂_α − c^λ_{αβ}Γ̂_λ.
        let gh: Vec<_> = (0..3).map(|a| -conn.matrix(a, &x).unwrap()).collect();
        let c = st.coefficients(&x).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let mut expected = &gh[a] * &gh[b] - &gh[b] * &gh[a];
                for l in 0..3 {
                    expected -= &gh[l] * c[l][(a, b)];
                }
                assert!((r.matrix(a, b) - expected).amax() < 1e-14);
            }
        }
        let d = plane();
        let psi = VectorField::new(d.clone(), vec![parse_field("x0*x1 + 1", &d).unwrap(), parse_field("x1^2", &d).unwrap()]).unwrap();
        let s1 = VectorField::new(
            d.clone(),
            vec![parse_field("x0", &d).unwrap(), parse_field("1", &d).unwrap(), parse_field("x1", &d).unwrap()],
        )
        .unwrap();
        let s2 = VectorField::constant(d.clone(), &[0.5, -1.0, 2.0]);
        let direct = curvature(&conn, &st, &s1, &s2, &psi, &x).unwrap();
        let contracted = r.contract(s1.eval(&x).unwrap().as_slice(), s2.eval(&x).unwrap().as_slice(), psi.eval(&x).unwrap().as_slice());
        assert!((direct - contracted).amax() < 1e-5);
    }

    #[test]
    fn flat_curvature_vanishes() {
        let d = plane();
        let bundle = AnchorBundle::identity(d.clone());
        let conn = LinearConnection::zero(bundle.clone(), 2);
        let st = PreLieStructure::zero(bundle);
        assert_eq!(curvature_components(&conn, &st, &[0.0, 0.5]).unwrap().max_abs(), 0.0);
        let mut rng = seeded_rng(8);
        let (s1, s2, psi) =
            (random_section(&d, &mut rng, 2, 2, 1.0), random_section(&d, &mut rng, 2, 2, 1.0), random_section(&d, &mut rng, 2, 2, 1.0));
        assert!(curvature(&conn, &st, &s1, &s2, &psi, &[0.1, -0.3]).unwrap().amax() < 1e-6);
    }

    #[test]
    fn curvature_is_tensorial_for_lie_algebroids() {
        let h = heisenberg();
        let d = h.bundle().base().clone();
        let mut rng = seeded_rng(11);
        let conn = LinearConnection::from_fn(h.bundle().clone(), 2, |_, _, _| random_polynomial(&d, &mut rng, 2, 1.0)).unwrap();
        for _ in 0..5 {
            let (s1, s2, psi) =
                (random_section(&d, &mut rng, 3, 2, 1.0), random_section(&d, &mut rng, 3, 2, 1.0), random_section(&d, &mut rng, 2, 2, 1.0));
            let x = uniform_point(&d.shrunk(0.2), &mut rng);
            let direct = curvature(&conn, &h, &s1, &s2, &psi, &x).unwrap();
            let reverse = curvature(&conn, &h, &s2, &s1, &psi, &x).unwrap();
            assert!((&direct + reverse).amax() < 1e-6);
            let r = curvature_components(&conn, &h, &x).unwrap();
            let contracted = r.contract(s1.eval(&x).unwrap().as_slice(), s2.eval(&x).unwrap().as_slice(), psi.eval(&x).unwrap().as_slice());
            assert!((direct - contracted).amax() < 1e-5);

            let y = crate::sampling::uniform_vector(2, 1.0, &mut rng);
            let defect = involutivity_defect(&conn, &h, &s1, &s2, &x, &y).unwrap();
            assert!(defect.base.amax() < 1e-6);
            let r_y = r.contract(s1.eval(&x).unwrap().as_slice(), s2.eval(&x).unwrap().as_slice(), &y);
            assert!((defect.fiber + r_y).amax() < 1e-5);
        }
    }

    #[test]
    fn non_tensorial_term_accounts_for_the_failure() {
        let st = random_structure(13);
        let d = plane();
        let mut rng = seeded_rng(14);
        let conn = LinearConnection::from_fn(st.bundle().clone(), 2, |_, _, _| random_polynomial(&d, &mut rng, 2, 1.0)).unwrap();
        for _ in 0..5 {
            let (s1, s2, psi) =
                (random_section(&d, &mut rng, 3, 2, 1.0), random_section(&d, &mut rng, 3, 2, 1.0), random_section(&d, &mut rng, 2, 2, 1.0));
            let f = random_polynomial(&d, &mut rng, 2, 1.0);
            let x = uniform_point(&d.shrunk(0.2), &mut rng);
            assert!(anchor_hom_residual(&st, &x).unwrap() > st.tau_hom());
            let lhs = curvature(&conn, &st, &s1, &s2, &psi.scaled(&f), &x).unwrap()
                - curvature(&conn, &st, &s1, &s2, &psi, &x).unwrap() * f.eval(&x).unwrap();
            let rhs = non_tensorial_term(&st, &s1, &s2, &f, &psi, &x).unwrap();
            assert!((lhs - &rhs).amax() < 1e-5);
            assert!(rhs.amax() > 1e-3);
            assert!(matches!(involutivity_defect(&conn, &st, &s1, &s2, &x, &[1.0, 0.0]), Err(Error::Rejected(_))));
        }
    }

    #[test]
    fn torsion_examples() {
        let d = plane();
        let bundle = AnchorBundle::identity(d.clone());
        let st = PreLieStructure::zero(bundle.clone());
        // Frame coefficient Γ̂^0_{01} = 1 is stored as G_0[0, 1] = −1.
        let mut g0 = DMatrix::zeros(2, 2);
        g0[(0, 1)] = -1.0;
        let conn = LinearConnection::constant(bundle.clone(), &[g0, DMatrix::zeros(2, 2)]).unwrap();
        let t = torsion_components(&conn, &st, &[0.0, 0.0]).unwrap();
        assert_eq!((t.component(0, 0, 1), t.component(0, 1, 0)), (1.0, -1.0));
        assert_eq!(t.component(1, 0, 1), 0.0);

        let symmetric = LinearConnection::from_fn(bundle.clone(), 2, |l, a, b| {
            parse_field(if a == b { "x0" } else { "x1 + 2" }, &d).map(|f| f.scaled((l + 1) as f64)).unwrap()
        })
        .unwrap();
        assert_eq!(torsion_components(&symmetric, &st, &[0.3, 0.1]).unwrap().max_abs(), 0.0);

        // Component formula agrees with the operator on frame sections, and
        // the operator is C∞-bilinear.
        let st = random_structure(20);
        let mut rng = seeded_rng(21);
        let conn = LinearConnection::from_fn(st.bundle().clone(), 3, |_, _, _| random_polynomial(&d, &mut rng, 2, 1.0)).unwrap();
        let x = [0.2, -0.4];
        let t = torsion_components(&conn, &st, &x).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let v = torsion(&conn, &st, &VectorField::basis(d.clone(), 3, a), &VectorField::basis(d.clone(), 3, b), &x).unwrap();
                for l in 0..3 {
                    assert!((v[l] - t.component(l, a, b)).abs() < 1e-8);
                }
            }
        }
        for _ in 0..100 {
            let (s1, s2) = (random_section(&d, &mut rng, 3, 2, 1.0), random_section(&d, &mut rng, 3, 2, 1.0));
            let f = random_polynomial(&d, &mut rng, 2, 1.0);
            let x = uniform_point(&d, &mut rng);
            let lhs = torsion(&conn, &st, &s1.scaled(&f), &s2, &x).unwrap();
            let rhs = torsion(&conn, &st, &s1, &s2, &x).unwrap() * f.eval(&x).unwrap();
            assert!((lhs - rhs).amax() < 1e-6);
        }
        assert!(torsion(
            &LinearConnection::zero(st.bundle().clone(), 2),
            &st,
            &VectorField::zeros(d.clone(), 3),
            &VectorField::zeros(d, 3),
            &x
        )
        .is_err());
    }

    #[test]
    fn nijenhuis_examples() {
        let d = CoordDomain::cube(2, -3.0, 3.0).unwrap();
        let e0 = VectorField::basis(d.clone(), 2, 0);
        let e1 = VectorField::basis(d.clone(), 2, 1);
        let diag = MatrixField::new(d.clone(), 2, 2, ["x1", "0", "0", "x0"].iter().map(|s| parse_field(s, &d).unwrap()).collect()).unwrap();
        let v = nijenhuis_bracket(&diag, &e0, &e1, &[1.0, 2.0]).unwrap();
        assert_eq!(v.as_slice(), &[-1.0, 1.0]);
        let st = nijenhuis_structure(&diag).unwrap();
        let c = st.coefficients(&[0.3, 0.4]).unwrap();
        assert!((c[0][(0, 1)] + 1.0).abs() < 1e-9 && (c[1][(0, 1)] - 1.0).abs() < 1e-9);

        let constant = MatrixField::constant(d.clone(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(nijenhuis_bracket(&constant, &e0, &e1, &[0.1, 0.2]).unwrap(), DVector::zeros(2));
        assert!(nijenhuis_structure(&constant).unwrap().coefficients(&[0.0, 0.0]).unwrap().iter().all(|m| m.amax() == 0.0));

        let mut rng = seeded_rng(30);
        for _ in 0..20 {
            let (x1, y1) = (random_section(&d, &mut rng, 2, 2, 1.0), random_section(&d, &mut rng, 2, 2, 1.0));
            let p = uniform_point(&d, &mut rng);
            let plain = nijenhuis_bracket(&MatrixField::identity(d.clone(), 2), &x1, &y1, &p).unwrap();
            assert!((plain - lie_bracket(&x1, &y1, &p).unwrap()).amax() < 1e-12);
            let f = random_polynomial(&d, &mut rng, 2, 1.0);
            let lhs = nijenhuis_bracket(&diag, &x1, &y1.scaled(&f), &p).unwrap();
            let ax_f = DVector::from_vec(f.gradient(&p).unwrap()).dot(&(diag.eval(&p).unwrap() * x1.eval(&p).unwrap()));
            let rhs = nijenhuis_bracket(&diag, &x1, &y1, &p).unwrap() * f.eval(&p).unwrap() + y1.eval(&p).unwrap() * ax_f;
            assert!((lhs - rhs).amax() < 1e-6);
        }
    }
}
