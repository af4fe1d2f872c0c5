use crate::error::{Error, Result};

/// Axis-aligned closed box in `R^n` hosting the chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl CoordDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!("{} lower bounds but {} upper bounds", lower.len(), upper.len())));
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!("axis {axis}: [{lo}, {hi}] is not a nonempty finite interval")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim() && point.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub fn check(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::Shape(format!("point has {} coordinates, domain has dimension {}", point.len(), self.dim())));
        }
        if self.contains(point) {
            Ok(())
        } else {
            Err(Error::Domain { point: point.to_vec() })
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Cartesian product `self × other`, with `self`'s axes first.
    pub fn product(&self, other: &CoordDomain) -> CoordDomain {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        CoordDomain { lower, upper }
    }

    /// The box shrunk towards its center by `fraction` of each side on both ends.
    pub fn shrunk(&self, fraction: f64) -> CoordDomain {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| {
                let pad = fraction * (hi - lo);
                (lo + pad, hi - pad)
            })
            .unzip();
        CoordDomain { lower, upper }
    }

    /// Tensor grid with `per_axis` points per axis, including both endpoints
    /// (a single point per axis gives the center). Ordered with the last axis
    /// varying fastest.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| {
                if per_axis <= 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..per_axis).map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64).collect()
                }
            })
            .collect();
        let mut points = vec![Vec::with_capacity(self.dim())];
        for axis in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_intervals() {
        assert!(CoordDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(CoordDomain::new(vec![], vec![]).is_err());
        assert!(CoordDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(CoordDomain::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn grid_covers_corners() {
        let d = CoordDomain::cube(2, -1.0, 1.0).unwrap();
        let g = d.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[1], vec![-1.0, 0.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }

    #[test]
    fn membership() {
        let d = CoordDomain::cube(2, 0.0, 1.0).unwrap();
        assert!(d.check(&[0.0, 1.0]).is_ok());
        assert!(matches!(d.check(&[1.5, 0.0]), Err(Error::Domain { .. })));
        assert!(matches!(d.check(&[0.5]), Err(Error::Shape(_))));
    }
}
