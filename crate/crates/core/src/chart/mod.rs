//! Coordinate boxes and the fields that live on them.
//!
//! Every coefficient in the library (anchor matrices, connection coefficients,
//! structure functions, section components) is a [`ScalarField`] or a grid of
//! them. Derivatives always come from here.

mod domain;
mod dual;
mod field;

pub use domain::CoordDomain;
pub use dual::{Dual, Scalar};
pub(crate) use field::sum_fields;
pub use field::{DerivativeMode, DualFn, GradientFn, MatrixField, RealFn, ScalarField, VectorField};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Anything that can be evaluated and differentiated as a vector field on a box.
pub trait TangentField {
    /// Dimension of the ambient coordinate space.
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> Result<DVector<f64>>;
    /// Square `dim × dim` matrix of partials `∂V^i/∂p^j`.
    fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>>;
}

impl TangentField for VectorField {
    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.eval(p)
    }

    fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        VectorField::jacobian(self, p)
    }
}

pub fn differentiate(f: &ScalarField, point: &[f64], axis: usize) -> Result<f64> {
    f.partial(point, axis)
}

pub fn jacobian<F: TangentField + ?Sized>(field: &F, point: &[f64]) -> Result<DMatrix<f64>> {
    field.jacobian(point)
}

/// `[X, Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i`.
pub fn lie_bracket<X, Y>(x: &X, y: &Y, point: &[f64]) -> Result<DVector<f64>>
where
    X: TangentField + ?Sized,
    Y: TangentField + ?Sized,
{
    let (xv, yv) = (x.value(point)?, y.value(point)?);
    Ok(y.jacobian(point)? * xv - x.jacobian(point)? * yv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_polynomial, seeded_rng, uniform_point};

    fn plane() -> CoordDomain {
        CoordDomain::cube(2, -3.0, 3.0).unwrap()
    }

    #[test]
    fn differentiate_polynomial_and_constant() {
        let line = CoordDomain::cube(1, -5.0, 5.0).unwrap();
        let sq = ScalarField::from_dual_fn(line.clone(), |x| x[0] * x[0]);
        assert!((differentiate(&sq, &[3.0], 0).unwrap() - 6.0).abs() < 1e-6);
        let c = ScalarField::constant(plane(), 5.0);
        assert_eq!(differentiate(&c, &[0.4, -1.0], 0).unwrap(), 0.0);
        assert_eq!(differentiate(&c, &[0.4, -1.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn differentiate_matches_richardson_oracle() {
        let f = |x: &[f64]| x[0].sin() * x[1];
        // Oracle: two central differences combined by Richardson extrapolation.
        let cd = |h: f64| (f(&[h, 2.0]) - f(&[-h, 2.0])) / (2.0 * h);
        let (d1, d2) = (cd(1e-4), cd(1e-5));
        assert!((d1 - d2).abs() < 1e-7, "oracle steps disagree");
        let oracle = d2 + (d2 - d1) / 99.0;
        let field = ScalarField::from_dual_fn(plane(), |x| x[0].sin() * x[1]);
        let got = differentiate(&field, &[0.0, 2.0], 0).unwrap();
        assert!((got - oracle).abs() < 1e-6);
        assert!((got - 2.0).abs() < 1e-6);
    }

    #[test]
    fn jacobian_examples() {
        let d = plane();
        let swap = VectorField::new(d.clone(), vec![ScalarField::coordinate(d.clone(), 1), ScalarField::coordinate(d.clone(), 0)]).unwrap();
        assert_eq!(jacobian(&swap, &[0.5, 0.25]).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let id = VectorField::new(d.clone(), vec![ScalarField::coordinate(d.clone(), 0), ScalarField::coordinate(d.clone(), 1)]).unwrap();
        assert_eq!(jacobian(&id, &[0.5, 0.25]).unwrap(), DMatrix::identity(2, 2));

        let f = VectorField::new(
            d.clone(),
            vec![ScalarField::from_dual_fn(d.clone(), |x| x[0] * x[1]), ScalarField::from_dual_fn(d, |x| x[0] * x[0])],
        )
        .unwrap();
        let j = jacobian(&f, &[1.0, 2.0]).unwrap();
        // Finite-difference cross-check of the hand derivative [[x1, x0], [2x0, 0]].
        let g = |p: [f64; 2]| [p[0] * p[1], p[0] * p[0]];
        let h = 1e-5;
        for c in 0..2 {
            let mut plus = [1.0, 2.0];
            let mut minus = [1.0, 2.0];
            plus[c] += h;
            minus[c] -= h;
            for r in 0..2 {
                let fd = (g(plus)[r] - g(minus)[r]) / (2.0 * h);
                assert!((j[(r, c)] - fd).abs() < 1e-6);
            }
        }
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 2.0, 0.0]);
        assert!((j - expected).amax() < 1e-6);
    }

    #[test]
    fn lie_bracket_examples() {
        let d = plane();
        let e0 = VectorField::coordinate(d.clone(), 0);
        let e1 = VectorField::coordinate(d.clone(), 1);
        assert_eq!(lie_bracket(&e0, &e1, &[0.3, 0.1]).unwrap(), DVector::zeros(2));

        let x = VectorField::new(d.clone(), vec![ScalarField::coordinate(d.clone(), 1), ScalarField::zero(d.clone())]).unwrap();
        let y = VectorField::new(d.clone(), vec![ScalarField::zero(d.clone()), ScalarField::coordinate(d.clone(), 0)]).unwrap();
        assert_eq!(lie_bracket(&x, &x, &[1.0, 1.0]).unwrap(), DVector::zeros(2));
        // Component expansion: X = x1 ∂0, Y = x0 ∂1, so X(Y^1) = x1, Y(X^0) = x0,
        // [X,Y] = -x0 ∂0 + x1 ∂1.
        let oracle = |p: [f64; 2]| DVector::from_vec(vec![-p[0], p[1]]);
        let got = lie_bracket(&x, &y, &[1.0, 1.0]).unwrap();
        assert_eq!(got, oracle([1.0, 1.0]));
        assert_eq!(got, DVector::from_vec(vec![-1.0, 1.0]));
    }

    #[test]
    fn dual_and_central_difference_agree_on_random_points() {
        let d = plane();
        let mut rng = seeded_rng(11);
        for _ in 0..20 {
            let dual = random_polynomial(&d, &mut rng, 3, 1.0);
            let p0 = uniform_point(&d.shrunk(0.1), &mut rng);
            let opaque = {
                let f = dual.clone();
                ScalarField::from_fn(d.clone(), move |x| f.eval(x).unwrap())
            };
            assert!(dual.derivative_mismatch(std::slice::from_ref(&p0), 1e-5).unwrap() < 1e-5);
            for _ in 0..5 {
                let p = uniform_point(&d.shrunk(0.1), &mut rng);
                for axis in 0..2 {
                    let a = dual.partial(&p, axis).unwrap();
                    let b = opaque.partial(&p, axis).unwrap();
                    assert!((a - b).abs() < 1e-5, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn lie_bracket_is_bilinear_and_antisymmetric() {
        let d = plane();
        let mut rng = seeded_rng(5);
        let field = |rng: &mut _| VectorField::new(d.clone(), (0..2).map(|_| random_polynomial(&d, rng, 2, 1.0)).collect()).unwrap();
        for _ in 0..20 {
            let (x, y, z) = (field(&mut rng), field(&mut rng), field(&mut rng));
            let p = uniform_point(&d, &mut rng);
            let xy = lie_bracket(&x, &y, &p).unwrap();
            let yx = lie_bracket(&y, &x, &p).unwrap();
            assert!((&xy + &yx).amax() < 1e-9);
            let combo = x.scaled_by(2.0).add(&z.scaled_by(-0.5)).unwrap();
            let lhs = lie_bracket(&combo, &y, &p).unwrap();
            let rhs = 2.0 * xy - 0.5 * lie_bracket(&z, &y, &p).unwrap();
            assert!((lhs - rhs).amax() < 1e-9);
        }
    }

    #[test]
    fn jacobian_chain_rule() {
        let d = plane();
        let mut rng = seeded_rng(7);
        // F(u) = (sin u0 · u1, u0² − u1), G(x) = (x0 x1 / 3, x0 + 0.5 cos x1)
        let f_dual = |u: &[Dual]| [u[0].sin() * u[1], u[0] * u[0] - u[1]];
        let g_dual = |x: &[Dual]| [x[0] * x[1] / 3.0, x[0] + 0.5 * x[1].cos()];
        let component = |i: usize, which: u8| {
            ScalarField::from_dual_fn(d.clone(), move |x: &[Dual]| match which {
                0 => f_dual(x)[i],
                1 => g_dual(x)[i],
                _ => f_dual(&g_dual(x))[i],
            })
        };
        let field = |which| VectorField::new(d.clone(), (0..2).map(|i| component(i, which)).collect()).unwrap();
        let (f, g, fg) = (field(0), field(1), field(2));
        for _ in 0..50 {
            let p = uniform_point(&d.shrunk(0.25), &mut rng);
            let gp: Vec<f64> = g.eval(&p).unwrap().iter().copied().collect();
            let lhs = jacobian(&fg, &p).unwrap();
            let rhs = jacobian(&f, &gp).unwrap() * jacobian(&g, &p).unwrap();
            assert!((lhs - rhs).amax() < 1e-5);
        }
    }
}
