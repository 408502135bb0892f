//! Collision jump maps `p₁ ↦ J(ξ; p₁)` acting on the momentum of particle 1.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::laws::{AngleLaw, InputLaw};
use crate::scalar::Scalar;

/// Margin by which a contractive affine map must stay below unit norm.
pub const CONTRACTION_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum CollisionModel<T: Scalar> {
    /// Central elastic collision in one dimension with restitution-like
    /// coefficient `α = (M − m)/(M + m)`.
    OneDimElastic { alpha: T },
    /// `v ↦ R v + w` on the velocity of particle 1, `‖R‖₂ < 1`.
    ContractiveAffine { r: DMatrix<T> },
    /// Smooth elastic disc collision in the plane with random impact angle.
    TwoDimBall { alpha: T },
}

impl<T: Scalar> CollisionModel<T> {
    /// Elastic model from the internal mass `M` and external mass `m ≤ M`.
    pub fn one_dim_elastic(mass: T, external_mass: T) -> Result<Self> {
        Self::one_dim_elastic_alpha(mass_ratio_alpha(mass, external_mass)?)
    }

    pub fn one_dim_elastic_alpha(alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(CollisionModel::OneDimElastic { alpha })
    }

    pub fn two_dim_ball(mass: T, external_mass: T) -> Result<Self> {
        Self::two_dim_ball_alpha(mass_ratio_alpha(mass, external_mass)?)
    }

    pub fn two_dim_ball_alpha(alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(CollisionModel::TwoDimBall { alpha })
    }

    pub fn contractive_affine(r: DMatrix<T>) -> Result<Self> {
        if r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(invalid("contraction matrix must be square and non-empty"));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(invalid("contraction matrix has non-finite entries"));
        }
        let norm = spectral_norm(&r);
        if !(norm <= T::one() - T::lit(CONTRACTION_MARGIN)) {
            return Err(invalid(format!("contraction matrix has spectral norm {norm} ≥ 1")));
        }
        Ok(CollisionModel::ContractiveAffine { r })
    }

    pub fn alpha(&self) -> Option<T> {
        match self {
            CollisionModel::OneDimElastic { alpha } | CollisionModel::TwoDimBall { alpha } => Some(*alpha),
            CollisionModel::ContractiveAffine { .. } => None,
        }
    }

    /// External mass implied by `α` for internal mass `M`.
    pub fn external_mass(&self, mass: T) -> Option<T> {
        self.alpha().map(|a| mass * (T::one() - a) / (T::one() + a))
    }

    /// Checks the model is usable for particles living in `dim` dimensions.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let ok = match self {
            CollisionModel::OneDimElastic { .. } => dim == 1,
            CollisionModel::ContractiveAffine { r } => r.nrows() == dim,
            CollisionModel::TwoDimBall { .. } => dim == 2,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("collision model {} does not act in dimension {dim}", self.name())))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CollisionModel::OneDimElastic { .. } => "one_dim_elastic",
            CollisionModel::ContractiveAffine { .. } => "contractive_affine",
            CollisionModel::TwoDimBall { .. } => "two_dim_ball",
        }
    }

    /// Length of the flattened collision input `ξ`.
    pub fn input_dim(&self) -> usize {
        match self {
            CollisionModel::OneDimElastic { .. } => 1,
            CollisionModel::ContractiveAffine { r } => r.nrows(),
            CollisionModel::TwoDimBall { .. } => 3,
        }
    }

    pub fn sample_input<R: Rng + ?Sized>(&self, law: &InputLaw<T>, rng: &mut R) -> CollisionInput<T> {
        match self {
            CollisionModel::OneDimElastic { .. } => CollisionInput::Velocity(law.velocity.sample(rng)),
            CollisionModel::ContractiveAffine { r } => {
                CollisionInput::Noise(DVector::from_fn(r.nrows(), |_, _| law.velocity.sample(rng)))
            }
            CollisionModel::TwoDimBall { .. } => {
                let angle = law.angle.sample(rng);
                let vx = law.velocity.sample(rng);
                let vy = law.velocity.sample(rng);
                CollisionInput::Ball {
                    angle,
                    velocity: Vector2::new(vx, vy),
                }
            }
        }
    }
}

fn mass_ratio_alpha<T: Scalar>(mass: T, external_mass: T) -> Result<T> {
    if !(mass > T::zero()) || !(external_mass > T::zero()) {
        return Err(invalid("masses must be positive"));
    }
    if external_mass > mass {
        return Err(invalid("external mass must not exceed the internal mass"));
    }
    Ok((mass - external_mass) / (mass + external_mass))
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha >= T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")))
    }
}

fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Random input `ξ` of one collision.
#[derive(Debug, Clone, PartialEq)]
pub enum CollisionInput<T: Scalar> {
    /// External particle velocity `u` (one-dimensional elastic model).
    Velocity(T),
    /// Additive velocity noise `w` (contractive affine model).
    Noise(DVector<T>),
    /// Impact angle and external particle velocity (two-dimensional model).
    Ball { angle: T, velocity: Vector2<T> },
}

impl<T: Scalar> CollisionInput<T> {
    pub fn to_flat(&self) -> Vec<T> {
        match self {
            CollisionInput::Velocity(u) => vec![*u],
            CollisionInput::Noise(w) => w.iter().copied().collect(),
            CollisionInput::Ball { angle, velocity } => vec![*angle, velocity.x, velocity.y],
        }
    }

    /// Rebuilds the input of `model` from its flattened coordinates.
    pub fn from_flat(model: &CollisionModel<T>, xs: &[T]) -> Result<Self> {
        if xs.len() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: xs.len(),
            });
        }
        Ok(match model {
            CollisionModel::OneDimElastic { .. } => CollisionInput::Velocity(xs[0]),
            CollisionModel::ContractiveAffine { .. } => CollisionInput::Noise(DVector::from_column_slice(xs)),
            CollisionModel::TwoDimBall { .. } => CollisionInput::Ball {
                angle: xs[0],
                velocity: Vector2::new(xs[1], xs[2]),
            },
        })
    }
}

/// `R(φ) = (cos φ, sin φ)`.
pub fn contact_direction<T: Scalar>(phi: T) -> Vector2<T> {
    let (s, c) = phi.sin_cos();
    Vector2::new(c, s)
}

/// Velocity gain `G_α(φ)` of the two-dimensional collision: scales the
/// normal component along `R(φ)` by `α`, keeps the tangential one.
pub fn ball_gain_matrix<T: Scalar>(alpha: T, phi: T) -> Matrix2<T> {
    let (s, c) = phi.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let off = -(T::one() - alpha) * T::lit(0.5) * (T::lit(2.0) * phi).sin();
    Matrix2::new(alpha * c2 + s2, off, off, alpha * s2 + c2)
}

/// `c_α(φ, v) = (1 − α) (v · R(φ))`.
pub fn ball_transfer<T: Scalar>(alpha: T, phi: T, v: &Vector2<T>) -> T {
    (T::one() - alpha) * v.dot(&contact_direction(phi))
}

/// Post-collision momentum of particle 1.
pub fn apply_jump<T: Scalar>(
    model: &CollisionModel<T>,
    xi: &CollisionInput<T>,
    p1: &DVector<T>,
    mass: T,
) -> Result<DVector<T>> {
    match (model, xi) {
        (CollisionModel::OneDimElastic { alpha }, CollisionInput::Velocity(u)) => {
            if p1.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: p1.len() });
            }
            Ok(DVector::from_element(1, *alpha * p1[0] + (T::one() - *alpha) * mass * *u))
        }
        (CollisionModel::ContractiveAffine { r }, CollisionInput::Noise(w)) => {
            let d = r.nrows();
            if p1.len() != d || w.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: if p1.len() != d { p1.len() } else { w.len() },
                });
            }
            let v = p1 / mass;
            Ok((r * v + w) * mass)
        }
        (CollisionModel::TwoDimBall { alpha }, CollisionInput::Ball { angle, velocity }) => {
            if p1.len() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: p1.len() });
            }
            let p = Vector2::new(p1[0], p1[1]);
            let out = ball_gain_matrix(*alpha, *angle) * p
                + contact_direction(*angle) * (mass * ball_transfer(*alpha, *angle, velocity));
            Ok(DVector::from_column_slice(out.as_slice()))
        }
        _ => Err(invalid(format!("collision input {xi:?} does not match model {}", model.name()))),
    }
}

/// Post-collision velocities of a one-dimensional elastic pair.
pub fn one_dim_pair_update<T: Scalar>(m1: T, m2: T, v1: T, v2: T) -> (T, T) {
    let alpha = (m1 - m2) / (m1 + m2);
    let v1_new = alpha * v1 + (T::one() - alpha) * v2;
    // exchanging the roles of the balls flips the sign of α
    let v2_new = -alpha * v2 + (T::one() + alpha) * v1;
    (v1_new, v2_new)
}

/// Smooth elastic collision of two discs whose centres are aligned with
/// `R(φ)` at impact: normal components follow the one-dimensional rule,
/// tangential components are untouched.
pub fn two_ball_pair_update<T: Scalar>(
    m1: T,
    m2: T,
    v1: &Vector2<T>,
    v2: &Vector2<T>,
    phi: T,
) -> Result<(Vector2<T>, Vector2<T>)> {
    if !(m1 > T::zero()) || !(m2 > T::zero()) {
        return Err(invalid("masses must be positive"));
    }
    let n = contact_direction(phi);
    let t = Vector2::new(-n.y, n.x);
    let (v1n, v1t) = (v1.dot(&n), v1.dot(&t));
    let (v2n, v2t) = (v2.dot(&n), v2.dot(&t));
    let (v1n_new, v2n_new) = one_dim_pair_update(m1, m2, v1n, v2n);
    Ok((n * v1n_new + t * v1t, n * v2n_new + t * v2t))
}

/// Contraction bound `1 − λ_F (1 − α²)` for the two-dimensional model,
/// with `λ_F` the smallest eigenvalue of the angle moment matrix.
pub fn two_dim_contraction_bound<T: Scalar>(alpha: T, angle: &AngleLaw<T>) -> T {
    let f = angle.moment_matrix();
    let lambda = f.symmetric_eigen().eigenvalues.min();
    T::one() - lambda * (T::one() - alpha * alpha)
}

/// Monte Carlo estimate of `E|J(ξ; p)|² / |p|²` on spheres `|p| = r`.
#[derive(Debug, Clone)]
pub struct ContractionReport<T: Scalar> {
    pub radii: Vec<T>,
    pub ratios: Vec<T>,
    /// Intercept of the least-squares fit `ratio ≈ a + b / r²`.
    pub asymptote: T,
}

impl<T: Scalar> ContractionReport<T> {
    pub fn is_contractive(&self) -> bool {
        self.asymptote < T::one()
    }
}

/// Estimates how collisions shrink large momenta. Each radius reuses the
/// same random stream so the ratios vary smoothly with `r`.
pub fn verify_contraction<T: Scalar>(
    model: &CollisionModel<T>,
    mass: T,
    law: &InputLaw<T>,
    radii: &[T],
    n_mc: usize,
    seed: u64,
) -> Result<ContractionReport<T>> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > T::zero())) {
        return Err(invalid("radii must be positive"));
    }
    if radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("radii must be strictly ascending"));
    }
    if n_mc < 1000 {
        return Err(invalid("need at least 1000 Monte Carlo draws"));
    }
    law.validate()?;
    let d = match model {
        CollisionModel::OneDimElastic { .. } => 1,
        CollisionModel::ContractiveAffine { r } => r.nrows(),
        CollisionModel::TwoDimBall { .. } => 2,
    };
    let mut ratios = Vec::with_capacity(radii.len());
    for &radius in radii {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0f64;
        for _ in 0..n_mc {
            let dir = random_direction::<T, _>(d, &mut rng);
            let p = dir * radius;
            let xi = model.sample_input(law, &mut rng);
            acc += apply_jump(model, &xi, &p, mass)?.norm_squared().as_f64();
        }
        let mean = acc / n_mc as f64;
        ratios.push(T::lit(mean) / (radius * radius));
    }
    let asymptote = fit_intercept(radii, &ratios);
    Ok(ContractionReport {
        radii: radii.to_vec(),
        ratios,
        asymptote,
    })
}

fn random_direction<T: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<T> {
    if d == 1 {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return DVector::from_element(1, T::lit(s));
    }
    loop {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return DVector::from_iterator(d, z.into_iter().map(|x| T::lit(x / n)));
        }
    }
}

fn fit_intercept<T: Scalar>(radii: &[T], ratios: &[T]) -> T {
    if radii.len() < 2 {
        return ratios[0];
    }
    // least squares y = a + b x with x = 1/r²
    let xs: Vec<f64> = radii.iter().map(|r| 1.0 / (r.as_f64() * r.as_f64())).collect();
    let ys: Vec<f64> = ratios.iter().map(|y| y.as_f64()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    T::lit(my - b * mx)
}
