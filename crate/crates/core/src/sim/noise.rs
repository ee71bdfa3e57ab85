use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Independent Gaussian process noise, `σ` per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
    sub_gaussian: f64,
}

impl NoiseModel {
    /// Requires `L ≥ σ`, since a Gaussian is sub-Gaussian with constant `σ`
    /// and no smaller.
    pub fn new(sigma: f64, sub_gaussian: f64) -> Result<Self> {
        if sub_gaussian < sigma {
            return Err(Error::InvalidArgument {
                name: "sub_gaussian",
                reason: format!("L = {sub_gaussian} is below sigma = {sigma}"),
            });
        }
        Self::unchecked(sigma, sub_gaussian)
    }

    /// Skips the `L ≥ σ` check.
    pub fn unchecked(sigma: f64, sub_gaussian: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument {
                name: "sigma",
                reason: "must be finite and nonnegative".into(),
            });
        }
        if !(sub_gaussian > 0.0) || !sub_gaussian.is_finite() {
            return Err(Error::InvalidArgument {
                name: "sub_gaussian",
                reason: "must be finite and positive".into(),
            });
        }
        Ok(Self { sigma, sub_gaussian })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sub_gaussian(&self) -> f64 {
        self.sub_gaussian
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DVector<f64> {
        if self.sigma == 0.0 {
            return DVector::zeros(n);
        }
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        DVector::from_fn(n, |_, _| normal.sample(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l_must_dominate_sigma() {
        assert!(NoiseModel::new(0.1, 0.1).is_ok());
        assert!(NoiseModel::new(1.0, 0.1).is_err());
        assert!(NoiseModel::unchecked(1.0, 0.1).is_ok());
        assert!(NoiseModel::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn zero_sigma_is_silent_and_seed_reproduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(NoiseModel::new(0.0, 0.1).unwrap().sample(3, &mut rng), DVector::zeros(3));
        let m = NoiseModel::new(0.1, 0.1).unwrap();
        let a = m.sample(4, &mut ChaCha8Rng::seed_from_u64(5));
        let b = m.sample(4, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
