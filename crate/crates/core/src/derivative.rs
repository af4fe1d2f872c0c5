//! The derivative operator `∇` of a linear ρ-connection.
//!
//! In components, `(∇_sψ)^A = (∂_jψ^A) γ^j_α s^α − Γ^A_{αB} s^α ψ^B`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bundle::{AdmissibleCurve, AnchorBundle, FiberPoint};
use crate::chart::{MatrixField, ScalarField, VectorField};
use crate::connection::{connection_map_k, LinearConnection, RhoConnection, Tangent};
use crate::error::{Error, Result};
use crate::section::{DualSectionPi, SectionNu, SectionPi};
use crate::transport::TransportResult;

/// Step used when a `∇`-field is differentiated again.
pub const NESTED_DIFFERENCE_STEP: f64 = 1e-5;

/// Relative tolerance for the C∞-linearity spot check in
/// [`reconstruct_connection`].
pub const LINEARITY_TOLERANCE: f64 = 1e-6;

fn check_shapes(conn: &LinearConnection, s: &SectionNu, psi: &VectorField) -> Result<()> {
    if s.len() != conn.k() || psi.len() != conn.fiber_dim() {
        return Err(Error::Shape(format!(
            "sections have ({}, {}) components, expected ({}, {})",
            s.len(),
            psi.len(),
            conn.k(),
            conn.fiber_dim()
        )));
    }
    Ok(())
}

/// `∇_sψ` at `x`.
pub fn nabla(conn: &LinearConnection, s: &SectionNu, psi: &SectionPi, x: &[f64]) -> Result<DVector<f64>> {
    check_shapes(conn, s, psi)?;
    let sv = s.eval(x)?;
    let along = conn.bundle().gamma_at(x)? * &sv;
    Ok(psi.jacobian(x)? * along - conn.contracted(x, sv.as_slice())? * psi.eval(x)?)
}

/// `∇_nψ = K(n, ψ_*(ρ(n)))`, which only depends on the value `n ∈ N_x`.
pub fn nabla_point(conn: &LinearConnection, nvec: &FiberPoint, psi: &SectionPi) -> Result<DVector<f64>> {
    if psi.len() != conn.fiber_dim() {
        return Err(Error::Shape(format!("section has {} components, expected {}", psi.len(), conn.fiber_dim())));
    }
    let x = &nvec.x;
    let rho = conn.bundle().anchor(x, &nvec.u)?;
    let w = Tangent { dy: psi.jacobian(x)? * &rho, dx: rho };
    connection_map_k(conn, x, psi.eval(x)?.as_slice(), &nvec.u, &w)
}

/// `∇_sψ` as a section of `E`. Its components are opaque and differentiated
/// with step [`NESTED_DIFFERENCE_STEP`].
pub fn nabla_section(conn: &LinearConnection, s: &SectionNu, psi: &SectionPi) -> Result<SectionPi> {
    check_shapes(conn, s, psi)?;
    let shared = Arc::new((conn.clone(), s.clone(), psi.clone()));
    let domain = conn.bundle().base().clone();
    let components = (0..conn.fiber_dim())
        .map(|a| {
            let shared = Arc::clone(&shared);
            ScalarField::from_fn_with_step(
                domain.clone(),
                move |x| {
                    let (conn, s, psi) = &*shared;
                    nabla(conn, s, psi, x).map_or(f64::NAN, |v| v[a])
                },
                NESTED_DIFFERENCE_STEP,
            )
        })
        .collect();
    VectorField::new(domain, components)
}

/// `∇_s𝔣` on a dual section: `(∂_j𝔣_A) γ^j_α s^α + Γ^B_{αA} s^α 𝔣_B`.
pub fn nabla_dual(conn: &LinearConnection, s: &SectionNu, f: &DualSectionPi, x: &[f64]) -> Result<DVector<f64>> {
    check_shapes(conn, s, f)?;
    let sv = s.eval(x)?;
    let along = conn.bundle().gamma_at(x)? * &sv;
    Ok(f.jacobian(x)? * along + conn.contracted(x, sv.as_slice())?.transpose() * f.eval(x)?)
}

/// Derivative of `t ↦ (d/dt) values` from equally spaced samples: central
/// differences inside, second-order one-sided differences at the ends.
fn sampled_derivative(ts: &[f64], values: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let m = values.len();
    if m < 3 {
        return Err(Error::Rejected("need at least three samples to differentiate".into()));
    }
    let h = (ts[m - 1] - ts[0]) / (m - 1) as f64;
    Ok((0..m)
        .map(|i| {
            if i == 0 {
                (&values[0] * -3.0 + &values[1] * 4.0 - &values[2]) / (2.0 * h)
            } else if i == m - 1 {
                (&values[m - 1] * 3.0 - &values[m - 2] * 4.0 + &values[m - 3]) / (2.0 * h)
            } else {
                (&values[i + 1] - &values[i - 1]) / (2.0 * h)
            }
        })
        .collect())
}

/// `dψ̃^A/dt − Γ^A_{αB}(x(t)) u^α(t) ψ̃^B(t)` on `grid`, with `dψ̃/dt` by
/// central differences of step `NESTED_DIFFERENCE_STEP` (one-sided at the
/// ends of the parameter range).
pub fn nabla_along_curve<F>(
    conn: &LinearConnection,
    curve: &AdmissibleCurve,
    psi_tilde: F,
    grid: &[f64],
) -> Result<Vec<(f64, DVector<f64>)>>
where
    F: Fn(f64) -> Vec<f64>,
{
    let (t0, t1) = curve.t_range();
    let h = NESTED_DIFFERENCE_STEP;
    let at = |t: f64| DVector::from_vec(psi_tilde(t));
    grid.iter()
        .map(|&t| {
            let dpsi = if t - h < t0 {
                (at(t) * -3.0 + at(t + h) * 4.0 - at(t + 2.0 * h)) / (2.0 * h)
            } else if t + h > t1 {
                (at(t) * 3.0 - at(t - h) * 4.0 + at(t - 2.0 * h)) / (2.0 * h)
            } else {
                (at(t + h) - at(t - h)) / (2.0 * h)
            };
            let value = at(t);
            if value.len() != conn.fiber_dim() {
                return Err(Error::Shape(format!("curve in E has {} fiber coordinates, expected {}", value.len(), conn.fiber_dim())));
            }
            Ok((t, dpsi - conn.contracted(&curve.position(t), &curve.control(t))? * value))
        })
        .collect()
}

/// [`nabla_along_curve`] applied to a sampled lift, differentiating the
/// samples themselves.
pub fn nabla_along_lift(conn: &LinearConnection, curve: &AdmissibleCurve, lift: &TransportResult) -> Result<Vec<(f64, DVector<f64>)>> {
    let ts: Vec<f64> = lift.samples.iter().map(|s| s.t).collect();
    let ys: Vec<DVector<f64>> = lift.samples.iter().map(|s| DVector::from_column_slice(&s.y)).collect();
    let dys = sampled_derivative(&ts, &ys)?;
    ts.iter()
        .zip(ys.iter().zip(dys))
        .map(|(&t, (y, dy))| Ok((t, dy - conn.contracted(&curve.position(t), &curve.control(t))? * y)))
        .collect()
}

/// Any implementation of `(s, ψ, x) ↦ (∇_sψ)(x)`.
pub trait NablaOracle: Send + Sync {
    fn apply(&self, s: &SectionNu, psi: &SectionPi, x: &[f64]) -> Result<DVector<f64>>;
}

impl<F> NablaOracle for F
where
    F: Fn(&SectionNu, &SectionPi, &[f64]) -> Result<DVector<f64>> + Send + Sync,
{
    fn apply(&self, s: &SectionNu, psi: &SectionPi, x: &[f64]) -> Result<DVector<f64>> {
        self(s, psi, x)
    }
}

/// The oracle `∇` of a linear connection.
pub struct ConnectionNabla(pub LinearConnection);

impl NablaOracle for ConnectionNabla {
    fn apply(&self, s: &SectionNu, psi: &SectionPi, x: &[f64]) -> Result<DVector<f64>> {
        nabla(&self.0, s, psi, x)
    }
}

/// The unique linear ρ-connection whose derivative operator is `oracle`.
///
/// With constant basis sections `σ_α` of `N` and `p_B` of `E` the derivative
/// term vanishes, so `Γ^A_{αB}(x) = −oracle(σ_α, p_B, x)^A`. The oracle is
/// first spot-checked for C∞-linearity in `s` at the corners and center of
/// the box.
pub fn reconstruct_connection<O>(oracle: O, bundle: &AnchorBundle, ell: usize) -> Result<LinearConnection>
where
    O: NablaOracle + 'static,
{
    let base = bundle.base().clone();
    let k = bundle.k();
    let sigma: Vec<SectionNu> = (0..k).map(|a| VectorField::basis(base.clone(), k, a)).collect();
    let p: Vec<SectionPi> = (0..ell).map(|b| VectorField::basis(base.clone(), ell, b)).collect();

    let weight = &ScalarField::constant(base.clone(), 1.0)
        + &(0..base.dim()).fold(ScalarField::zero(base.clone()), |acc, i| {
            let xi = ScalarField::coordinate(base.clone(), i);
            &acc + &(&xi * &xi).scaled(0.5)
        });
    let mut probes = base.shrunk(0.1).grid(2);
    probes.push(base.center());
    for x in &probes {
        let f = weight.eval(x)?;
        for (alpha, s) in sigma.iter().enumerate() {
            for psi in &p {
                let plain = oracle.apply(s, psi, x)?;
                let scaled = oracle.apply(&s.scaled(&weight), psi, x)?;
                let residual = (&scaled - &plain * f).amax();
                if residual > LINEARITY_TOLERANCE * plain.amax().max(1.0) {
                    return Err(Error::Rejected(format!(
                        "oracle is not C∞-linear in its first argument: residual {residual:e} at {x:?}, frame index {alpha}"
                    )));
                }
            }
        }
    }

    let shared = Arc::new((oracle, sigma, p));
    let coeffs = (0..k)
        .map(|alpha| {
            MatrixField::from_fn(base.clone(), ell, ell, |a, b| {
                let shared = Arc::clone(&shared);
                ScalarField::from_fn(base.clone(), move |x| {
                    let (oracle, sigma, p) = &*shared;
                    oracle.apply(&sigma[alpha], &p[b], x).map_or(f64::NAN, |v| -v[a])
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LinearConnection::new(bundle.clone(), ell, coeffs)
}

/// `S^A_{αB} = Γ^A_{αB} − Γ̄^A_{αB}`, a section of `N* ⊗ E* ⊗ E`.
///
/// With `∇` as in [`nabla`], the contraction `S(s, ψ)` equals `∇̄_sψ − ∇_sψ`.
#[derive(Clone, Debug)]
pub struct DifferenceTensor {
    components: Vec<MatrixField>,
}

impl DifferenceTensor {
    /// `S_α(x)` with row `A`, column `B`.
    pub fn matrix(&self, alpha: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.components[alpha].eval(x)
    }

    /// `S(s, ψ)^A = S^A_{αB} s^α ψ^B` at `x`.
    pub fn apply(&self, s: &[f64], psi: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        let psi = DVector::from_column_slice(psi);
        let mut out = DVector::zeros(psi.len());
        for (alpha, &sa) in s.iter().enumerate() {
            out += self.matrix(alpha, x)? * &psi * sa;
        }
        Ok(out)
    }
}

fn same_anchor(a: &AnchorBundle, b: &AnchorBundle) -> Result<()> {
    if a.base() != b.base() || a.k() != b.k() {
        return Err(Error::Shape("connections live on different anchored bundles".into()));
    }
    for x in a.base().grid(2) {
        if (a.gamma_at(&x)? - b.gamma_at(&x)?).amax() > 0.0 {
            return Err(Error::Shape("connections have different anchors".into()));
        }
    }
    Ok(())
}

/// `S = G_a − G_b` on the stored lift coefficients, so that
/// `∇^a_sψ − ∇^b_sψ = −S(s, ψ)`. Both connections must share the anchor.
pub fn difference_tensor(a: &LinearConnection, b: &LinearConnection) -> Result<DifferenceTensor> {
    same_anchor(a.bundle(), b.bundle())?;
    if a.fiber_dim() != b.fiber_dim() {
        return Err(Error::Shape("connections act on bundles of different rank".into()));
    }
    let base = a.bundle().base().clone();
    let ell = a.fiber_dim();
    let components = (0..a.k())
        .map(|alpha| MatrixField::from_fn(base.clone(), ell, ell, |r, c| a.field(r, alpha, c) - b.field(r, alpha, c)))
        .collect::<Result<_>>()?;
    Ok(DifferenceTensor { components })
}

/// `Γ + S`, the connection whose difference with `conn` is `s`.
pub fn add_difference(conn: &LinearConnection, s: &DifferenceTensor) -> Result<LinearConnection> {
    if s.components.len() != conn.k() || s.components.iter().any(|m| m.rows() != conn.fiber_dim() || m.domain() != conn.bundle().base()) {
        return Err(Error::Shape("difference tensor does not match the connection".into()));
    }
    LinearConnection::from_fn(conn.bundle().clone(), conn.fiber_dim(), |a, alpha, b| {
        conn.field(a, alpha, b) + s.components[alpha].entry(a, b)
    })
}
