//! Ready-made anchored bundles, connections and pre-Lie structures.
//!
//! Each constructor returns a [`GalleryCase`] whose expected flags have
//! already been verified on a grid of sample points; construction fails if
//! any of them does not hold.

use nalgebra::DMatrix;

use crate::bundle::AnchorBundle;
use crate::chart::{CoordDomain, MatrixField};
use crate::connection::{fiber_samples, partial_connection_test, restrict_linear_connection, LinearConnection, RhoConnection};
use crate::error::{Error, Result};
use crate::expr::parse_field;
use crate::linalg::{rank_kernel, RANK_RELATIVE_TOLERANCE};
use crate::prelie::{anchor_hom_residual, nijenhuis_structure, PreLieStructure};
use crate::sampling::{random_polynomial, seeded_rng};

/// Names accepted by [`by_name`].
pub const CASE_NAMES: [&str; 7] = ["ehresmann", "subbundle", "poisson", "nijenhuis", "heisenberg-sr", "heisenberg-algebroid", "constant"];

/// Fiber dimension of the sample connections attached by [`by_name`].
pub const SAMPLE_FIBER_DIM: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExpectedFlags {
    pub partial: Option<bool>,
    pub anchor_hom: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct GalleryCase {
    pub name: String,
    pub bundle: AnchorBundle,
    pub connection: Option<LinearConnection>,
    pub structure: Option<PreLieStructure>,
    pub expected: ExpectedFlags,
}

impl GalleryCase {
    /// Interior grid used for construction-time checks: 3 points per axis on
    /// the box shrunk by 10%.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        self.bundle.base().shrunk(0.1).grid(3)
    }

    fn verified(self) -> Result<Self> {
        let points = self.sample_points();
        if let Some(expected) = self.expected.partial {
            let conn =
                self.connection.as_ref().ok_or_else(|| Error::Rejected(format!("{}: partial flag needs a connection", self.name)))?;
            let ys = fiber_samples(conn.fiber_dim(), 4, 0);
            let mut all = true;
            for x in &points {
                all &= partial_connection_test(conn, x, &ys)?.passed;
            }
            if all != expected {
                return Err(Error::Rejected(format!("{}: expected partial = {expected}, found {all}", self.name)));
            }
        }
        if let Some(expected) = self.expected.anchor_hom {
            let st = self.structure.as_ref().ok_or_else(|| Error::Rejected(format!("{}: anchor_hom flag needs a structure", self.name)))?;
            let worst = max_hom_residual(st, &points)?;
            let holds = worst <= st.tau_hom();
            if holds != expected {
                return Err(Error::Rejected(format!("{}: expected anchor_hom = {expected}, residual {worst:e}", self.name)));
            }
        }
        Ok(self)
    }
}

pub fn max_hom_residual(st: &PreLieStructure, points: &[Vec<f64>]) -> Result<f64> {
    points.iter().try_fold(0.0_f64, |worst, x| Ok(worst.max(anchor_hom_residual(st, x)?)))
}

fn attach(bundle: &AnchorBundle, coeffs: Option<Vec<MatrixField>>) -> Result<Option<LinearConnection>> {
    coeffs
        .map(|c| {
            let ell = c.first().map_or(0, MatrixField::rows);
            LinearConnection::new(bundle.clone(), ell, c)
        })
        .transpose()
}

fn fields(domain: &CoordDomain, rows: usize, cols: usize, src: &[&str]) -> Result<MatrixField> {
    let entries = src.iter().map(|s| parse_field(s, domain)).collect::<Result<_>>()?;
    MatrixField::new(domain.clone(), rows, cols, entries)
}

/// Ordinary connection: identity anchor on `TM`, zero structure functions.
pub fn make_ehresmann(base: CoordDomain, coeffs: Option<Vec<MatrixField>>) -> Result<GalleryCase> {
    let bundle = AnchorBundle::identity(base);
    let connection = attach(&bundle, coeffs)?;
    GalleryCase {
        name: "ehresmann".into(),
        structure: Some(PreLieStructure::zero(bundle.clone())),
        expected: ExpectedFlags { partial: connection.as_ref().map(|_| true), anchor_hom: Some(true) },
        bundle,
        connection,
    }
    .verified()
}

/// Injective anchor given by a frame of full column rank. Every ρ-connection
/// is then partial. The attached structure is zero, which is an anchor
/// homomorphism only if the frame commutes.
pub fn make_subbundle_injection(frame: MatrixField, coeffs: Option<Vec<MatrixField>>) -> Result<GalleryCase> {
    let bundle = AnchorBundle::new(frame)?;
    for x in bundle.base().grid(3) {
        let rank = bundle.fiber_rank_kernel(&x)?.rank;
        if rank < bundle.k() {
            return Err(Error::Rejected(format!("frame has rank {rank} < {} at {x:?}", bundle.k())));
        }
    }
    let connection = attach(&bundle, coeffs)?;
    GalleryCase {
        name: "subbundle".into(),
        structure: None,
        expected: ExpectedFlags { partial: connection.as_ref().map(|_| true), anchor_hom: None },
        bundle,
        connection,
    }
    .verified()
}

/// Contravariant connections: `N = T*M`, `γ^i_α = Λ^{αi}`. For constant `Λ`
/// the structure functions of the Koszul bracket vanish and are attached;
/// otherwise no structure is attached.
pub fn make_poisson(lambda: MatrixField, coeffs: Option<Vec<MatrixField>>) -> Result<GalleryCase> {
    let n = lambda.domain().dim();
    if lambda.rows() != n || lambda.cols() != n {
        return Err(Error::Shape("the bivector must be an n×n matrix field".into()));
    }
    let base = lambda.domain().clone();
    let mut constant = true;
    for x in base.grid(3) {
        let m = lambda.eval(&x)?;
        if (&m + m.transpose()).amax() > 1e-12 {
            return Err(Error::Rejected(format!("bivector is not skew at {x:?}")));
        }
        for axis in 0..n {
            constant &= lambda.partial(&x, axis)?.amax() == 0.0;
        }
    }
    let bundle = AnchorBundle::new(lambda.transpose())?;
    let connection = attach(&bundle, coeffs)?;
    let structure = constant.then(|| PreLieStructure::zero(bundle.clone()));
    GalleryCase {
        name: "poisson".into(),
        expected: ExpectedFlags { partial: None, anchor_hom: structure.as_ref().map(|_| true) },
        structure,
        bundle,
        connection,
    }
    .verified()
}

/// Pseudo-connections with fundamental tensor `A`: `N = TM`, `γ = A`, and the
/// bracket `[·,·]_A` as structure. The anchor-homomorphism condition is
/// reported, not required.
pub fn make_nijenhuis(a: MatrixField, coeffs: Option<Vec<MatrixField>>) -> Result<GalleryCase> {
    let structure = nijenhuis_structure(&a)?;
    let bundle = structure.bundle().clone();
    let connection = attach(&bundle, coeffs)?;
    GalleryCase { name: "nijenhuis".into(), bundle, connection, structure: Some(structure), expected: ExpectedFlags::default() }.verified()
}

/// Columns `X₁ = (1, 0, −x₁/2)`, `X₂ = (0, 1, x₀/2)` of the Heisenberg
/// distribution on a box in `R³`.
pub fn heisenberg_frame(base: &CoordDomain) -> Result<MatrixField> {
    fields(base, 3, 2, &["1", "0", "0", "1", "-x1/2", "x0/2"])
}

/// `♯g = X₁X₁ᵀ + X₂X₂ᵀ` for the metric making `X₁, X₂` orthonormal on the
/// Heisenberg distribution, as an anchor on `T*M`.
pub fn heisenberg_sharp_g(base: &CoordDomain) -> Result<AnchorBundle> {
    let frame = heisenberg_frame(base)?;
    AnchorBundle::new(frame.mul(&frame.transpose())?)
}

/// The annihilator covector `η = (x₁/2, −x₀/2, 1)` of the Heisenberg distribution.
pub fn heisenberg_annihilator(x: &[f64]) -> Vec<f64> {
    vec![0.5 * x[1], -0.5 * x[0], 1.0]
}

/// Sub-Riemannian Heisenberg structure on `[-1, 1]³`: `N = T*M`, `γ = ♯g`
/// (rank 2, kernel spanned by the annihilator of the distribution). The
/// connection is the restriction of an ordinary connection along `♯g`, hence
/// partial.
pub fn make_subriemannian_heisenberg() -> Result<GalleryCase> {
    let base = CoordDomain::cube(3, -1.0, 1.0)?;
    let bundle = heisenberg_sharp_g(&base)?;
    for x in base.grid(3) {
        if bundle.fiber_rank_kernel(&x)?.rank != 2 {
            return Err(Error::Rejected(format!("♯g does not have rank 2 at {x:?}")));
        }
    }
    let ordinary =
        LinearConnection::new(AnchorBundle::identity(base.clone()), SAMPLE_FIBER_DIM, sample_coefficients(&base, 3, SAMPLE_FIBER_DIM, 50))?;
    let connection = restrict_linear_connection(&ordinary, &bundle)?;
    GalleryCase {
        name: "heisenberg-sr".into(),
        bundle,
        connection: Some(connection),
        structure: None,
        expected: ExpectedFlags { partial: Some(true), anchor_hom: None },
    }
    .verified()
}

/// The Heisenberg Lie algebroid on `[-1, 1]³`: anchor columns `X₁, X₂` and
/// `X₃ = ∂₂`, with `[X₁, X₂] = X₃`, i.e. `c^3_{12} = 1`.
pub fn make_heisenberg_algebroid(coeffs: Option<Vec<MatrixField>>) -> Result<GalleryCase> {
    let base = CoordDomain::cube(3, -1.0, 1.0)?;
    let bundle = AnchorBundle::new(fields(&base, 3, 3, &["1", "0", "0", "0", "1", "0", "-x1/2", "x0/2", "1"])?)?;
    let mut c = vec![DMatrix::zeros(3, 3); 3];
    c[2][(0, 1)] = 1.0;
    c[2][(1, 0)] = -1.0;
    let structure = PreLieStructure::constant(bundle.clone(), &c)?;
    let connection = attach(&bundle, coeffs)?;
    GalleryCase {
        name: "heisenberg-algebroid".into(),
        expected: ExpectedFlags { partial: connection.as_ref().map(|_| true), anchor_hom: Some(true) },
        bundle,
        connection,
        structure: Some(structure),
    }
    .verified()
}

/// Constant coefficients on `[-1, 1]²` with `k = 3`: `γ = [I₂ | 0]`,
/// `c^3_{12} = 1`, and constant `G_α`. The anchor has a kernel that `G_3` does
/// not annihilate, so the connection is not partial.
pub fn make_constant_coefficient() -> Result<GalleryCase> {
    let base = CoordDomain::cube(2, -1.0, 1.0)?;
    let bundle = AnchorBundle::constant(base, &DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]))?;
    let g = [
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.3, 0.1]),
    ];
    let connection = LinearConnection::constant(bundle.clone(), &g)?;
    let mut c = vec![DMatrix::zeros(3, 3); 3];
    c[2][(0, 1)] = 1.0;
    c[2][(1, 0)] = -1.0;
    let structure = PreLieStructure::constant(bundle.clone(), &c)?;
    GalleryCase {
        name: "constant".into(),
        bundle,
        connection: Some(connection),
        structure: Some(structure),
        expected: ExpectedFlags { partial: Some(false), anchor_hom: Some(true) },
    }
    .verified()
}

/// Deterministic quadratic polynomial coefficients `G_α` (`k` matrices of
/// size `ell × ell`) seeded by `seed`.
pub fn sample_coefficients(base: &CoordDomain, k: usize, ell: usize, seed: u64) -> Vec<MatrixField> {
    let mut rng = seeded_rng(seed);
    (0..k)
        .map(|_| MatrixField::from_fn(base.clone(), ell, ell, |_, _| random_polynomial(base, &mut rng, 2, 0.5)).expect("sizes match"))
        .collect()
}

/// The standard cases, with sample connections of fiber dimension
/// [`SAMPLE_FIBER_DIM`].
pub fn by_name(name: &str) -> Result<GalleryCase> {
    let plane = CoordDomain::cube(2, -1.0, 1.0)?;
    let space = CoordDomain::cube(3, -1.0, 1.0)?;
    let l = SAMPLE_FIBER_DIM;
    match name {
        "ehresmann" => make_ehresmann(plane.clone(), Some(sample_coefficients(&plane, 2, l, 10))),
        "subbundle" => make_subbundle_injection(heisenberg_frame(&space)?, Some(sample_coefficients(&space, 2, l, 20))),
        "poisson" => make_poisson(
            MatrixField::constant(plane.clone(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
            Some(sample_coefficients(&plane, 2, l, 30)),
        ),
        "nijenhuis" => make_nijenhuis(fields(&plane, 2, 2, &["x1", "0", "0", "x0"])?, Some(sample_coefficients(&plane, 2, l, 40))),
        "heisenberg-sr" => make_subriemannian_heisenberg(),
        "heisenberg-algebroid" => make_heisenberg_algebroid(Some(sample_coefficients(&space, 3, l, 60))),
        "constant" => make_constant_coefficient(),
        other => Err(Error::Rejected(format!("unknown gallery case {other:?}; expected one of {}", CASE_NAMES.join(", ")))),
    }
}

pub fn standard_cases() -> Result<Vec<GalleryCase>> {
    CASE_NAMES.iter().map(|name| by_name(name)).collect()
}

/// Anchor of the identity-tensor pseudo-connection; same as the Ehresmann one.
pub fn identity_tensor(base: &CoordDomain) -> MatrixField {
    MatrixField::identity(base.clone(), base.dim())
}

/// Bivector `Λ^{01} = 1 = −Λ^{10}` on a box in `R²`.
pub fn symplectic_plane(base: &CoordDomain) -> MatrixField {
    MatrixField::constant(base.clone(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
}

/// Numerical rank of the anchor at `x`.
pub fn anchor_rank(bundle: &AnchorBundle, x: &[f64]) -> Result<usize> {
    Ok(rank_kernel(&bundle.gamma_at(x)?, RANK_RELATIVE_TOLERANCE).rank)
}
