//! Volatility uncertainty: the squared-volatility band and the generator it
//! induces, plus the finite grids the tree engine draws its scenarios from.

use crate::error::{Error, Result};

/// The squared-volatility band `[sigma_low_sq, sigma_high_sq]`.
///
/// The band induces the one-dimensional generator
///
/// ```text
/// g(a) = (sigma_high_sq * a+  -  sigma_low_sq * a-) / 2
/// ```
///
/// which is the worst-case half-curvature term over all volatilities in the
/// band: `g(a) = sup { s * a / 2 : s in [sigma_low_sq, sigma_high_sq] }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GCoefficients {
    sigma_low_sq: f64,
    sigma_high_sq: f64,
}

impl GCoefficients {
    /// Validates `0 <= sigma_low_sq <= sigma_high_sq < inf`.
    pub fn new(sigma_low_sq: f64, sigma_high_sq: f64) -> Result<Self> {
        if !(sigma_low_sq.is_finite() && sigma_high_sq.is_finite()) {
            return Err(Error::InvalidCoefficients(
                "coefficients must be finite".into(),
            ));
        }
        if sigma_low_sq < 0.0 || sigma_low_sq > sigma_high_sq {
            return Err(Error::InvalidCoefficients(format!(
                "need 0 <= sigma_low_sq <= sigma_high_sq, got [{sigma_low_sq}, {sigma_high_sq}]"
            )));
        }
        Ok(Self {
            sigma_low_sq,
            sigma_high_sq,
        })
    }

    pub fn sigma_low_sq(&self) -> f64 {
        self.sigma_low_sq
    }

    pub fn sigma_high_sq(&self) -> f64 {
        self.sigma_high_sq
    }

    pub fn sigma_low(&self) -> f64 {
        self.sigma_low_sq.sqrt()
    }

    pub fn sigma_high(&self) -> f64 {
        self.sigma_high_sq.sqrt()
    }

    /// True when the band is a single point and the model is classical.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_low_sq == self.sigma_high_sq
    }

    /// Generator value `g(a) = (sigma_high_sq * a+ - sigma_low_sq * a-) / 2`.
    ///
    /// Sublinear in `a`: subadditive, positively homogeneous, monotone, and it
    /// dominates the linear generator of the lower volatility,
    /// `g(a) - g(b) >= sigma_low_sq * (a - b) / 2` for `a >= b`.
    pub fn g(&self, a: f64) -> f64 {
        0.5 * (self.sigma_high_sq * a.max(0.0) - self.sigma_low_sq * (-a).max(0.0))
    }
}

/// A finite, strictly increasing set of volatilities spanning the band.
///
/// The first entry is `sqrt(sigma_low_sq)` and the last is
/// `sqrt(sigma_high_sq)`, so the grid always realizes both band edges; a
/// degenerate band forces a single-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityGrid {
    sigmas: Vec<f64>,
}

impl VolatilityGrid {
    /// Validates a grid against the band it is meant to discretize.
    pub fn new(coef: GCoefficients, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidGrid("grid must be nonempty".into()));
        }
        if sigmas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid(
                "grid values must be strictly increasing".into(),
            ));
        }
        let tol = 1e-12 * (1.0 + coef.sigma_high());
        let first = sigmas[0];
        let last = *sigmas.last().unwrap();
        if (first - coef.sigma_low()).abs() > tol || (last - coef.sigma_high()).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "grid must span [{}, {}], got [{first}, {last}]",
                coef.sigma_low(),
                coef.sigma_high()
            )));
        }
        Ok(Self { sigmas })
    }

    /// Uniform grid of `count` volatilities between the band edges.
    ///
    /// A degenerate band collapses to the single admissible volatility
    /// regardless of `count`.
    pub fn uniform(coef: GCoefficients, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidGrid("grid must be nonempty".into()));
        }
        if coef.is_degenerate() {
            return Ok(Self {
                sigmas: vec![coef.sigma_high()],
            });
        }
        if count == 1 {
            return Err(Error::InvalidGrid(
                "a non-degenerate band needs at least two grid points".into(),
            ));
        }
        let lo = coef.sigma_low();
        let hi = coef.sigma_high();
        let sigmas = (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect();
        Self::new(coef, sigmas)
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigmas[i]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Index of a grid value whose square lies strictly inside `(lo, hi)`.
    pub fn band_point(&self, lo: f64, hi: f64) -> Option<usize> {
        self.sigmas
            .iter()
            .position(|s| s * s > lo && s * s < hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_bands() {
        assert!(GCoefficients::new(-0.1, 1.0).is_err());
        assert!(GCoefficients::new(1.0, 0.5).is_err());
        assert!(GCoefficients::new(0.0, f64::INFINITY).is_err());
        assert!(GCoefficients::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn generator_values() {
        let c = GCoefficients::new(0.25, 1.0).unwrap();
        assert_abs_diff_eq!(c.g(1.0), 0.5);
        assert_abs_diff_eq!(c.g(0.0), 0.0);
        assert_abs_diff_eq!(c.g(-1.0), -0.125);
    }

    #[test]
    fn generator_degenerate_is_linear() {
        let c = GCoefficients::new(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(c.g(2.0), 1.0);
        assert_abs_diff_eq!(c.g(-2.0), -1.0);
    }

    #[test]
    fn grid_must_span_band() {
        let c = GCoefficients::new(0.25, 1.0).unwrap();
        assert!(VolatilityGrid::new(c, vec![0.5, 0.75, 1.0]).is_ok());
        assert!(VolatilityGrid::new(c, vec![0.5, 0.9]).is_err());
        assert!(VolatilityGrid::new(c, vec![0.6, 1.0]).is_err());
        assert!(VolatilityGrid::new(c, vec![0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn uniform_grid_spans_and_collapses() {
        let c = GCoefficients::new(0.25, 1.0).unwrap();
        let g = VolatilityGrid::uniform(c, 3).unwrap();
        assert_eq!(g.sigmas(), &[0.5, 0.75, 1.0]);

        let d = GCoefficients::new(1.0, 1.0).unwrap();
        let g = VolatilityGrid::uniform(d, 5).unwrap();
        assert_eq!(g.sigmas(), &[1.0]);
    }

    #[test]
    fn band_point_lookup() {
        let c = GCoefficients::new(0.25, 1.0).unwrap();
        let g = VolatilityGrid::new(c, vec![0.5, 0.9375f64.sqrt(), 1.0]).unwrap();
        assert_eq!(g.band_point(0.75, 1.0), Some(1));
        assert_eq!(g.band_point(0.95, 1.0), None);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn band() -> impl Strategy<Value = GCoefficients> {
        (0.0f64..2.0, 0.0f64..2.0).prop_map(|(a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            GCoefficients::new(lo, hi).unwrap()
        })
    }

    proptest! {
        #[test]
        fn g_is_subadditive(c in band(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assert!(c.g(a + b) <= c.g(a) + c.g(b) + 1e-12);
        }

        #[test]
        fn g_is_positively_homogeneous(c in band(), a in -10.0f64..10.0, lam in 0.0f64..4.0) {
            prop_assert!((c.g(lam * a) - lam * c.g(a)).abs() <= 1e-12);
        }

        #[test]
        fn g_is_monotone(c in band(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.g(lo) <= c.g(hi) + 1e-12);
        }

        #[test]
        fn g_dominates_lower_linear_generator(c in band(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.g(hi) - c.g(lo) >= 0.5 * c.sigma_low_sq() * (hi - lo) - 1e-12);
        }
    }
}
