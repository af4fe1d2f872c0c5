//! Parallel transport of linear ρ-connections.
//!
//! Along an admissible curve `t ↦ (x(t), u(t))` the h-lift through `y₀`
//! solves the linear system `ẏ = (Σ_α u^α(t) G_α(x(t))) y`, integrated here
//! with the classical fixed-step RK4 scheme.

use nalgebra::{DMatrix, DVector};

use crate::bundle::{uniform_grid, AdmissibleCurve};
use crate::connection::{LinearConnection, RhoConnection};
use crate::error::{Error, Result};

pub const DEFAULT_STEPS_PER_UNIT: usize = 1000;

/// Largest allowed gap between consecutive segment endpoints of a piecewise curve.
pub const BASE_CONTINUITY_TOLERANCE: f64 = 1e-9;

/// One classical Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(f: &F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Step count for a parameter interval at [`DEFAULT_STEPS_PER_UNIT`].
pub fn default_steps(curve: &AdmissibleCurve) -> usize {
    let (t0, t1) = curve.t_range();
    ((t1 - t0).abs() * DEFAULT_STEPS_PER_UNIT as f64).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TransportResult {
    /// The lift through the requested initial value, one sample per step.
    pub samples: Vec<LiftSample>,
    pub transport_matrix: DMatrix<f64>,
    pub step_count: usize,
    pub max_admissibility_residual: f64,
}

impl TransportResult {
    pub fn final_value(&self) -> &[f64] {
        &self.samples.last().expect("at least the initial sample").y
    }
}

fn check_curve(conn: &LinearConnection, curve: &AdmissibleCurve, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(Error::Rejected("at least one step is required".into()));
    }
    let (t0, t1) = curve.t_range();
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::Rejected("curve parameter range must be finite".into()));
    }
    conn.bundle().ensure_admissible(curve, &uniform_grid(t0, t1, steps.min(256)))
}

/// Integrates the lift ODE from `y0`, returning every step.
fn integrate(conn: &LinearConnection, curve: &AdmissibleCurve, y0: &[f64], steps: usize) -> Result<Vec<LiftSample>> {
    let ell = conn.fiber_dim();
    if y0.len() != ell {
        return Err(Error::Shape(format!("initial value has {} entries, expected {ell}", y0.len())));
    }
    let rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> { Ok(conn.contracted(&curve.position(t), &curve.control(t))? * y) };
    let (t0, t1) = curve.t_range();
    let h = (t1 - t0) / steps as f64;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(LiftSample { t: t0, x: curve.position(t0), y: y0.to_vec() });
    let mut y = DVector::from_column_slice(y0);
    for i in 0..steps {
        let t = t0 + h * i as f64;
        y = rk4_step(&rhs, t, &y, h)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { last_good_t: t });
        }
        let t_next = if i + 1 == steps { t1 } else { t0 + h * (i + 1) as f64 };
        samples.push(LiftSample { t: t_next, x: curve.position(t_next), y: y.as_slice().to_vec() });
    }
    Ok(samples)
}

fn basis_transport(conn: &LinearConnection, curve: &AdmissibleCurve, steps: usize) -> Result<DMatrix<f64>> {
    let ell = conn.fiber_dim();
    let mut m = DMatrix::zeros(ell, ell);
    for b in 0..ell {
        let mut e = vec![0.0; ell];
        e[b] = 1.0;
        let lifted = integrate(conn, curve, &e, steps)?;
        m.set_column(b, &DVector::from_column_slice(&lifted.last().expect("nonempty").y));
    }
    Ok(m)
}

/// The h-lift of `curve` through `y0` and the transport matrix of the curve.
pub fn h_lift_curve(conn: &LinearConnection, curve: &AdmissibleCurve, y0: &[f64], steps: usize) -> Result<TransportResult> {
    let max_admissibility_residual = check_curve(conn, curve, steps)?;
    let samples = integrate(conn, curve, y0, steps)?;
    let transport_matrix = basis_transport(conn, curve, steps)?;
    Ok(TransportResult { samples, transport_matrix, step_count: steps, max_admissibility_residual })
}

/// The transport operator `τ_c` as an `ℓ × ℓ` matrix.
pub fn parallel_transport(conn: &LinearConnection, curve: &AdmissibleCurve, steps: usize) -> Result<DMatrix<f64>> {
    check_curve(conn, curve, steps)?;
    basis_transport(conn, curve, steps)
}

/// Admissible segments traversed in order. Base points must match at the
/// joints; the fiber part `u` may jump.
#[derive(Clone, Debug)]
pub struct PiecewiseCurve {
    segments: Vec<AdmissibleCurve>,
}

impl PiecewiseCurve {
    pub fn new(segments: Vec<AdmissibleCurve>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Rejected("a piecewise curve needs at least one segment".into()));
        }
        for (i, pair) in segments.windows(2).enumerate() {
            let end = pair[0].position(pair[0].t_range().1);
            let start = pair[1].position(pair[1].t_range().0);
            let gap = end.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if end.len() != start.len() || gap > BASE_CONTINUITY_TOLERANCE {
                return Err(Error::Rejected(format!("base curve jumps by {gap:e} between segments {i} and {}", i + 1)));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[AdmissibleCurve] {
        &self.segments
    }

    /// The reverse traversal: segments in reverse order, each reversed.
    pub fn reversed(&self) -> Self {
        Self { segments: self.segments.iter().rev().map(AdmissibleCurve::reversed).collect() }
    }
}

/// Composite transport `τ_{c_m} ∘ ⋯ ∘ τ_{c_1}` with `steps_per_unit` steps per
/// unit of parameter on each segment.
pub fn parallel_transport_piecewise(conn: &LinearConnection, curve: &PiecewiseCurve, steps_per_unit: usize) -> Result<DMatrix<f64>> {
    let ell = conn.fiber_dim();
    let mut total = DMatrix::identity(ell, ell);
    for segment in &curve.segments {
        let (t0, t1) = segment.t_range();
        let steps = ((t1 - t0).abs() * steps_per_unit as f64).ceil().max(1.0) as usize;
        total = parallel_transport(conn, segment, steps)? * total;
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct FiberTransport {
    pub result: TransportResult,
    /// `(t, −Σ_α u^α(t) G_α(x₀))`, the linear map sending `y₀` to the
    /// derivative of the constant curve `t ↦ (x₀, y₀)` along the fiber curve,
    /// sampled at the lift's times.
    pub derivative_maps: Vec<(f64, DMatrix<f64>)>,
}

/// Tolerance on `ẋ` and on `γ(x₀)u(t)` when checking that a curve stays in
/// one fiber over `ker ρ`.
pub const FIBER_CURVE_TOLERANCE: f64 = 1e-12;

/// Transport along a curve over a fixed base point whose values lie in
/// `ker ρ_{x₀}`.
pub fn transport_fiber_curve(conn: &LinearConnection, curve: &AdmissibleCurve, y0: &[f64], steps: usize) -> Result<FiberTransport> {
    let (t0, t1) = curve.t_range();
    let grid = uniform_grid(t0, t1, steps.clamp(1, 256));
    let x0 = curve.position(t0);
    for &t in &grid {
        let x = curve.position(t);
        let moved = x.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let speed = curve.velocity(t).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if moved > FIBER_CURVE_TOLERANCE || speed > FIBER_CURVE_TOLERANCE {
            return Err(Error::Rejected(format!("base point moves at t = {t}")));
        }
        let residual = conn.bundle().anchor(&x0, &curve.control(t))?.amax();
        if residual > FIBER_CURVE_TOLERANCE {
            return Err(Error::NotAdmissible { residual, tolerance: FIBER_CURVE_TOLERANCE });
        }
    }
    let result = h_lift_curve(conn, curve, y0, steps)?;
    let derivative_maps = result.samples.iter().map(|s| Ok((s.t, -conn.contracted(&x0, &curve.control(s.t))?))).collect::<Result<_>>()?;
    Ok(FiberTransport { result, derivative_maps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::AnchorBundle;
    use crate::chart::{CoordDomain, MatrixField};
    use crate::expr::parse_field;

    fn line() -> CoordDomain {
        CoordDomain::cube(1, -3.0, 3.0).unwrap()
    }

    fn scalar(c: f64) -> LinearConnection {
        LinearConnection::constant(AnchorBundle::identity(line()), &[DMatrix::from_element(1, 1, c)]).unwrap()
    }

    fn unit_line() -> AdmissibleCurve {
        AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![t], |_| vec![1.0])
    }

    /// `exp(A)` by scaling and squaring a truncated Taylor series.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let norm = a.abs().row_sum().max();
        let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
        let scaled = a / 2f64.powi(squarings);
        let n = a.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn rk4_integrates_polynomials_of_degree_four_exactly() {
        let f = |t: f64, _y: &DVector<f64>| Ok(DVector::from_element(1, 4.0 * t.powi(3)));
        let y = rk4_step(&f, 0.0, &DVector::from_element(1, 0.0), 1.0).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_connection_transports_trivially() {
        let flat = LinearConnection::zero(AnchorBundle::identity(line()), 2);
        let r = h_lift_curve(&flat, &unit_line(), &[1.0, -2.0], 100).unwrap();
        assert!(r.samples.iter().all(|s| s.y == vec![1.0, -2.0]));
        assert_eq!(r.transport_matrix, DMatrix::identity(2, 2));
        assert_eq!(r.samples[0].t, 0.0);
        assert_eq!(r.samples.len(), 101);
    }

    #[test]
    fn scalar_growth_matches_closed_form() {
        for c in [-1.3, 0.5, 2.0] {
            let r = h_lift_curve(&scalar(c), &unit_line(), &[1.7], 1000).unwrap();
            assert!((r.final_value()[0] - 1.7 * c.exp()).abs() < 1e-8);
            assert!((r.transport_matrix[(0, 0)] - c.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_matrix_transport_is_the_exponential() {
        let g = DMatrix::from_row_slice(3, 3, &[0.2, -1.0, 0.3, 0.9, 0.1, -0.4, 0.0, 0.5, -0.7]);
        let conn = LinearConnection::constant(AnchorBundle::identity(line()), std::slice::from_ref(&g)).unwrap();
        let m = parallel_transport(&conn, &unit_line(), 1000).unwrap();
        assert!((m - expm(&g)).amax() < 1e-7);
    }

    #[test]
    fn expm_oracle_agrees_with_scalar_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -2.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - 3f64.exp()).abs() < 1e-12 * 3f64.exp());
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-14);
    }

    fn variable_scalar() -> (LinearConnection, AdmissibleCurve) {
        let d = line();
        let g = MatrixField::new(d.clone(), 1, 1, vec![parse_field("1 + x0 + x0^2", &d).unwrap()]).unwrap();
        let conn = LinearConnection::new(AnchorBundle::identity(d), 1, vec![g]).unwrap();
        let curve = AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![t], |_| vec![1.0]);
        (conn, curve)
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let (conn, curve) = variable_scalar();
        let y = |steps| h_lift_curve(&conn, &curve, &[1.0], steps).unwrap().final_value()[0];
        let (a, b, c) = (y(20), y(40), y(80));
        let ratio = (a - b) / (b - c);
        assert!((10.0..=22.0).contains(&ratio), "{ratio}");

        let conn = scalar(1.5);
        let y = |steps| h_lift_curve(&conn, &unit_line(), &[1.0], steps).unwrap().final_value()[0];
        let exact = 1.5f64.exp();
        let ratio = (y(10) - exact) / (y(20) - exact);
        assert!((10.0..=22.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn transport_is_linear_and_invertible() {
        let d = CoordDomain::cube(2, -2.0, 2.0).unwrap();
        let conn = LinearConnection::from_fn(AnchorBundle::identity(d.clone()), 2, |a, alpha, b| {
            parse_field(["x0", "x1*x0", "1 - x1", "sin(x0)"][(a + 2 * b + alpha) % 4], &d).unwrap()
        })
        .unwrap();
        let curve = AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![t.cos(), t.sin()], |t| vec![-t.sin(), t.cos()]);
        let (y1, y2) = ([1.0, 0.5], [-0.3, 2.0]);
        let (a, b) = (1.5, -0.7);
        let lift = |y: &[f64]| DVector::from_column_slice(h_lift_curve(&conn, &curve, y, 1000).unwrap().final_value());
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
        assert!((lift(&combo) - (lift(&y1) * a + lift(&y2) * b)).amax() < 1e-9);

        let m = parallel_transport(&conn, &curve, 1000).unwrap();
        assert!(m.determinant().abs() > 1e-12 * m.norm().powi(2));
        let back = parallel_transport(&conn, &curve.reversed(), 1000).unwrap();
        assert!((back * m - DMatrix::identity(2, 2)).amax() < 2e-6);
    }

    #[test]
    fn piecewise_curves_compose_and_reverse() {
        let (conn, _) = variable_scalar();
        let first = AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![t], |_| vec![1.0]);
        let second = AdmissibleCurve::from_fns(0.0, 0.5, |t| vec![1.0 - 2.0 * t], |_| vec![-2.0]);
        let path = PiecewiseCurve::new(vec![first.clone(), second.clone()]).unwrap();
        let m = parallel_transport_piecewise(&conn, &path, 1000).unwrap();
        let expected = parallel_transport(&conn, &second, 500).unwrap() * parallel_transport(&conn, &first, 1000).unwrap();
        assert!((m.clone() - expected).amax() < 1e-14);
        let back = parallel_transport_piecewise(&conn, &path.reversed(), 1000).unwrap();
        assert!((back * m)[(0, 0)] - 1.0 < 2e-6);

        let gap = AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![0.5 + t], |_| vec![1.0]);
        assert!(PiecewiseCurve::new(vec![first, gap]).is_err());
    }

    #[test]
    fn non_admissible_curves_are_rejected() {
        let curve = AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![t], |_| vec![2.0]);
        assert!(matches!(h_lift_curve(&scalar(1.0), &curve, &[1.0], 10), Err(Error::NotAdmissible { .. })));
        assert!(h_lift_curve(&scalar(1.0), &unit_line(), &[1.0], 0).is_err());
    }

    #[test]
    fn blow_up_reports_last_good_time() {
        let d = line();
        let g = MatrixField::new(d.clone(), 1, 1, vec![parse_field("1e200", &d).unwrap()]).unwrap();
        let conn = LinearConnection::new(AnchorBundle::identity(d), 1, vec![g]).unwrap();
        match h_lift_curve(&conn, &unit_line(), &[1.0], 10) {
            Err(Error::BlowUp { last_good_t }) => assert!((0.0..1.0).contains(&last_good_t)),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    fn zero_anchor(ell: usize, k: usize, matrices: &[DMatrix<f64>]) -> LinearConnection {
        assert_eq!(matrices.len(), k);
        let _ = ell;
        LinearConnection::constant(AnchorBundle::zero(line(), k), matrices).unwrap()
    }

    #[test]
    fn fiber_curves() {
        let flat = LinearConnection::zero(AnchorBundle::zero(line(), 1), 1);
        let curve = AdmissibleCurve::fiber_curve(0.0, 1.0, vec![0.4], |_| vec![1.0]);
        assert_eq!(transport_fiber_curve(&flat, &curve, &[1.0], 100).unwrap().result.transport_matrix, DMatrix::identity(1, 1));

        let one = zero_anchor(1, 1, &[DMatrix::from_element(1, 1, 1.0)]);
        let r = transport_fiber_curve(&one, &curve, &[2.0], 1000).unwrap();
        assert!((r.result.final_value()[0] - 2.0 * 1f64.exp()).abs() < 1e-8);

        let ramp = AdmissibleCurve::fiber_curve(0.0, 1.0, vec![0.4], |t| vec![t]);
        let r = transport_fiber_curve(&one, &ramp, &[2.0], 10).unwrap();
        for (t, m) in &r.derivative_maps {
            assert!((m[(0, 0)] * 2.0 - (-2.0 * t)).abs() < 1e-15);
        }

        let moving = AdmissibleCurve::from_fns(0.0, 1.0, |t| vec![t], |_| vec![1.0]);
        assert!(transport_fiber_curve(&scalar(1.0), &moving, &[1.0], 10).is_err());
        let outside_kernel = AdmissibleCurve::fiber_curve(0.0, 1.0, vec![0.0], |_| vec![1.0]).with_tolerance(10.0);
        assert!(transport_fiber_curve(&scalar(1.0), &outside_kernel, &[1.0], 10).is_err());
    }

    #[test]
    fn different_controls_over_one_point_transport_differently() {
        let g1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let g2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let conn = zero_anchor(2, 2, &[g1, g2]);
        let a = AdmissibleCurve::fiber_curve(0.0, 1.0, vec![0.0], |_| vec![1.0, 0.0]);
        let b = AdmissibleCurve::fiber_curve(0.0, 1.0, vec![0.0], |t| vec![0.0, 2.0 * t]);
        let ma = transport_fiber_curve(&conn, &a, &[1.0, 0.0], 1000).unwrap().result.transport_matrix;
        let mb = transport_fiber_curve(&conn, &b, &[1.0, 0.0], 1000).unwrap().result.transport_matrix;
        assert!((ma - mb).norm() >= 0.1);
    }
}
