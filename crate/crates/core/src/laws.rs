//! Probability laws for inter-collision times and collision inputs.
//!
//! Every sampler draws in `f64` from the caller's generator and narrows to
//! the working scalar.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, StandardNormal, Uniform};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Law of the waiting time `τ` between collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauLaw<T: Scalar> {
    Exponential { rate: T },
    Gamma { shape: T, rate: T },
    /// Uniform on `[low, high]`, `0 ≤ low < high`.
    UniformPositive { low: T, high: T },
}

impl<T: Scalar> TauLaw<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TauLaw::Exponential { rate } => rate > T::zero() && rate.is_finite(),
            TauLaw::Gamma { shape, rate } => {
                shape > T::zero() && rate > T::zero() && shape.is_finite() && rate.is_finite()
            }
            TauLaw::UniformPositive { low, high } => low >= T::zero() && high > low && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid waiting-time law {self:?}")))
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            TauLaw::Exponential { rate } => T::one() / rate,
            TauLaw::Gamma { shape, rate } => shape / rate,
            TauLaw::UniformPositive { low, high } => (low + high) * T::lit(0.5),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let x: f64 = match *self {
            TauLaw::Exponential { rate } => Exp::new(rate.as_f64()).expect("validated").sample(rng),
            TauLaw::Gamma { shape, rate } => Gamma::new(shape.as_f64(), 1.0 / rate.as_f64())
                .expect("validated")
                .sample(rng),
            TauLaw::UniformPositive { low, high } => Uniform::new_inclusive(low.as_f64(), high.as_f64())
                .expect("validated")
                .sample(rng),
        };
        T::lit(x)
    }
}

/// Zero-mean law of an external particle's velocity component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityLaw<T: Scalar> {
    Gaussian { sigma2: T },
    /// Uniform on `[−a, a]`, variance `a²/3`.
    UniformSymmetric { half_width: T },
    /// `±a` with probability ½ each, variance `a²`.
    TwoPoint { a: T },
}

impl<T: Scalar> VelocityLaw<T> {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            VelocityLaw::Gaussian { sigma2 } => sigma2,
            VelocityLaw::UniformSymmetric { half_width } => half_width,
            VelocityLaw::TwoPoint { a } => a,
        };
        if v >= T::zero() && v.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("invalid velocity law {self:?}")))
        }
    }

    /// Standard normal law.
    pub fn standard() -> Self {
        VelocityLaw::Gaussian { sigma2: T::one() }
    }

    /// Gaussian, uniform and two-point laws sharing the variance `sigma2`.
    pub fn with_variance(kind: VelocityKind, sigma2: T) -> Self {
        match kind {
            VelocityKind::Gaussian => VelocityLaw::Gaussian { sigma2 },
            VelocityKind::UniformSymmetric => VelocityLaw::UniformSymmetric {
                half_width: (sigma2 * T::lit(3.0)).sqrt(),
            },
            VelocityKind::TwoPoint => VelocityLaw::TwoPoint { a: sigma2.sqrt() },
        }
    }

    pub fn variance(&self) -> T {
        match *self {
            VelocityLaw::Gaussian { sigma2 } => sigma2,
            VelocityLaw::UniformSymmetric { half_width } => half_width * half_width / T::lit(3.0),
            VelocityLaw::TwoPoint { a } => a * a,
        }
    }

    pub fn fourth_moment(&self) -> T {
        match *self {
            VelocityLaw::Gaussian { sigma2 } => T::lit(3.0) * sigma2 * sigma2,
            VelocityLaw::UniformSymmetric { half_width } => half_width.powi(4) / T::lit(5.0),
            VelocityLaw::TwoPoint { a } => a.powi(4),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let x: f64 = match *self {
            VelocityLaw::Gaussian { sigma2 } => {
                let z: f64 = StandardNormal.sample(rng);
                z * sigma2.as_f64().sqrt()
            }
            VelocityLaw::UniformSymmetric { half_width } => {
                let a = half_width.as_f64();
                if a == 0.0 {
                    0.0
                } else {
                    rng.random_range(-a..a)
                }
            }
            VelocityLaw::TwoPoint { a } => {
                if rng.random::<bool>() {
                    a.as_f64()
                } else {
                    -a.as_f64()
                }
            }
        };
        T::lit(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityKind {
    Gaussian,
    UniformSymmetric,
    TwoPoint,
}

/// Law of the impact angle `φ` of a two-dimensional collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleLaw<T: Scalar> {
    Uniform,
    /// Normal with the given mean and standard deviation, wrapped onto the
    /// circle.
    WrappedNormal { mean: T, sigma: T },
}

impl<T: Scalar> AngleLaw<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AngleLaw::Uniform => Ok(()),
            AngleLaw::WrappedNormal { mean, sigma } if sigma > T::zero() && mean.is_finite() => Ok(()),
            _ => Err(invalid(format!("invalid angle law {self:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let tau = std::f64::consts::TAU;
        let x: f64 = match *self {
            AngleLaw::Uniform => rng.random_range(0.0..tau),
            AngleLaw::WrappedNormal { mean, sigma } => {
                let x = Normal::new(mean.as_f64(), sigma.as_f64()).expect("validated").sample(rng);
                x.rem_euclid(tau)
            }
        };
        T::lit(x)
    }

    /// `(E cos 2φ, E sin 2φ)`.
    pub fn double_angle_moments(&self) -> (T, T) {
        match *self {
            AngleLaw::Uniform => (T::zero(), T::zero()),
            AngleLaw::WrappedNormal { mean, sigma } => {
                let damp = (T::lit(-2.0) * sigma * sigma).exp();
                let two_mu = T::lit(2.0) * mean;
                (damp * two_mu.cos(), damp * two_mu.sin())
            }
        }
    }

    /// `F = E[R(φ) R(φ)ᵀ]` with `R(φ) = (cos φ, sin φ)`.
    pub fn moment_matrix(&self) -> Matrix2<T> {
        let (c2, s2) = self.double_angle_moments();
        let half = T::lit(0.5);
        Matrix2::new(half * (T::one() + c2), half * s2, half * s2, half * (T::one() - c2))
    }
}

/// Laws of every component a collision input may need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputLaw<T: Scalar> {
    /// Law of each external velocity component (or of each noise component
    /// for the contractive affine model).
    pub velocity: VelocityLaw<T>,
    pub angle: AngleLaw<T>,
}

impl<T: Scalar> InputLaw<T> {
    pub fn new(velocity: VelocityLaw<T>) -> Self {
        Self {
            velocity,
            angle: AngleLaw::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.velocity.validate()?;
        self.angle.validate()
    }
}

impl<T: Scalar> Default for InputLaw<T> {
    fn default() -> Self {
        Self::new(VelocityLaw::standard())
    }
}
