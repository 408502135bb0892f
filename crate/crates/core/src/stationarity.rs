//! Invariance of the Gibbs measure `∝ exp(−βH)` under collisions.
//!
//! For the one-dimensional elastic model the Gibbs density is preserved iff
//! for every `p`, with `γ = 1/α`,
//!
//! ```text
//! γ E_v exp(−β/(2M) (γp − (1−γ)Mv)²) = exp(−βp²/(2M)),
//! ```
//!
//! which holds exactly when `v` is centred Gaussian with the matching
//! temperature.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::collisions::CollisionModel;
use crate::error::{invalid, Result};
use crate::hamiltonian::{OscillatorNetwork, PhaseState};
use crate::quadrature::{adaptive_hermite, gauss_hermite, gauss_legendre, GaussRule};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::stats::mean_and_std_error;

pub use crate::laws::{VelocityKind, VelocityLaw};

/// Nodes used for the Gaussian expectation.
pub const HERMITE_NODES: usize = 64;
/// Nodes used for the uniform expectation.
pub const LEGENDRE_NODES: usize = 64;

/// A network together with the inverse temperature of its Gibbs measure.
#[derive(Debug, Clone)]
pub struct GibbsSpec<T: Scalar> {
    pub net: OscillatorNetwork<T>,
    pub beta: T,
}

impl<T: Scalar> GibbsSpec<T> {
    pub fn new(net: OscillatorNetwork<T>, beta: T) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(invalid("beta must be positive"));
        }
        Ok(Self { net, beta })
    }
}

fn check_residual_args<T: Scalar>(beta: T, alpha: T, mass: T, law: &VelocityLaw<T>, grid: &[T]) -> Result<()> {
    if !(beta > T::zero()) || !(mass > T::zero()) {
        return Err(invalid("beta and mass must be positive"));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    law.validate()?;
    if grid.iter().any(|p| !p.is_finite()) {
        return Err(invalid("momentum grid must be finite"));
    }
    Ok(())
}

/// Left-hand side of the invariance identity at momentum `p`.
pub fn invariance_lhs<T: Scalar>(beta: T, alpha: T, mass: T, law: &VelocityLaw<T>, p: T, rule: &GaussRule<T>) -> T {
    let gamma = T::one() / alpha;
    let c = beta / (T::lit(2.0) * mass);
    let a = (T::one() - gamma) * mass;
    let log_f = |v: T| {
        let r = gamma * p - a * v;
        -c * r * r
    };
    let expectation = match *law {
        VelocityLaw::Gaussian { sigma2 } => {
            if sigma2 == T::zero() {
                log_f(T::zero()).exp()
            } else {
                let norm = -T::lit(0.5) * (T::two_pi() * sigma2).ln();
                let precision = T::one() / sigma2 + T::lit(2.0) * c * a * a;
                let centre = T::lit(2.0) * c * a * gamma * p / precision;
                adaptive_hermite(
                    rule,
                    |v| norm - v * v / (T::lit(2.0) * sigma2) + log_f(v),
                    centre,
                    precision,
                )
            }
        }
        VelocityLaw::TwoPoint { a: half } => (log_f(half).exp() + log_f(-half).exp()) * T::lit(0.5),
        VelocityLaw::UniformSymmetric { half_width } => {
            if half_width == T::zero() {
                log_f(T::zero()).exp()
            } else {
                let legendre = gauss_legendre::<T>(LEGENDRE_NODES).expect("positive node count");
                legendre.integrate(|x| log_f(half_width * x).exp()) * T::lit(0.5)
            }
        }
    };
    gamma * expectation
}

/// `max_p |LHS(p) − exp(−βp²/(2M))|` over the grid.
pub fn stationarity_residual<T: Scalar>(beta: T, alpha: T, mass: T, law: &VelocityLaw<T>, p_grid: &[T]) -> Result<T> {
    stationarity_residual_with_nodes(beta, alpha, mass, law, p_grid, HERMITE_NODES)
}

pub fn stationarity_residual_with_nodes<T: Scalar>(
    beta: T,
    alpha: T,
    mass: T,
    law: &VelocityLaw<T>,
    p_grid: &[T],
    hermite_nodes: usize,
) -> Result<T> {
    check_residual_args(beta, alpha, mass, law, p_grid)?;
    let rule = gauss_hermite(hermite_nodes)?;
    let c = beta / (T::lit(2.0) * mass);
    Ok(p_grid.iter().fold(T::zero(), |worst, &p| {
        let r = (invariance_lhs(beta, alpha, mass, law, p, &rule) - (-c * p * p).exp()).abs();
        if r > worst {
            r
        } else {
            worst
        }
    }))
}

/// `n + 1` equally spaced points covering `[lo, hi]`.
pub fn uniform_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    (0..=n)
        .map(|k| lo + (hi - lo) * T::from_usize_lossy(k) / T::from_usize_lossy(n.max(1)))
        .collect()
}

/// Independent draws from the Gibbs measure.
pub fn gibbs_sampler<T: Scalar>(spec: &GibbsSpec<T>, n: usize, seed: u64) -> Result<Vec<PhaseState<T>>> {
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    let net = &spec.net;
    let order = net.order();
    let spectrum = net.spectrum();
    let q_scale = spectrum.eigenvalues.map(|l| T::one() / (spec.beta * l).sqrt());
    let p_scale = (net.mass() / spec.beta).sqrt();
    let mut rng = rng_for(seed, 0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let zq = DVector::from_fn(order, |k, _| q_scale[k] * T::lit(StandardNormal.sample(&mut rng)));
        let p = DVector::from_fn(order, |_, _| p_scale * T::lit(StandardNormal.sample(&mut rng)));
        out.push(PhaseState::new(&spectrum.eigenvectors * zq, p)?);
    }
    Ok(out)
}

/// Second and fourth moments of `p₁` before and after one collision,
/// starting from the Gibbs marginal `N(0, M/β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentShift {
    pub m2_before: f64,
    pub m2_after: f64,
    pub m4_before: f64,
    pub m4_after: f64,
    /// Standard errors of the paired differences `after − before`.
    pub m2_shift_std_error: f64,
    pub m4_shift_std_error: f64,
}

impl MomentShift {
    pub fn m2_shift(&self) -> f64 {
        self.m2_after - self.m2_before
    }

    pub fn m4_shift(&self) -> f64 {
        self.m4_after - self.m4_before
    }

    /// Shift of the second moment in standard errors.
    pub fn m2_z(&self) -> f64 {
        self.m2_shift().abs() / self.m2_shift_std_error
    }

    pub fn m4_z(&self) -> f64 {
        self.m4_shift().abs() / self.m4_shift_std_error
    }
}

pub fn one_step_moment_shift<T: Scalar>(
    spec: &GibbsSpec<T>,
    model: &CollisionModel<T>,
    law: &VelocityLaw<T>,
    n: usize,
    seed: u64,
) -> Result<MomentShift> {
    let alpha = match model {
        CollisionModel::OneDimElastic { alpha } => alpha.as_f64(),
        _ => return Err(invalid("moment shift needs the one-dimensional elastic model")),
    };
    law.validate()?;
    if n < 2 {
        return Err(invalid("need at least two samples"));
    }
    let mass = spec.net.mass().as_f64();
    let sd = (mass / spec.beta.as_f64()).sqrt();
    let mut rng = rng_for(seed, 0);
    let (mut b2, mut a2, mut b4, mut a4) = (0.0, 0.0, 0.0, 0.0);
    let mut d2 = Vec::with_capacity(n);
    let mut d4 = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let p = sd * z;
        let u = law.sample(&mut rng).as_f64();
        let q = alpha * p + (1.0 - alpha) * mass * u;
        let (p2, q2) = (p * p, q * q);
        b2 += p2;
        a2 += q2;
        b4 += p2 * p2;
        a4 += q2 * q2;
        d2.push(q2 - p2);
        d4.push(q2 * q2 - p2 * p2);
    }
    let nf = n as f64;
    Ok(MomentShift {
        m2_before: b2 / nf,
        m2_after: a2 / nf,
        m4_before: b4 / nf,
        m4_after: a4 / nf,
        m2_shift_std_error: mean_and_std_error(&d2).1,
        m4_shift_std_error: mean_and_std_error(&d4).1,
    })
}

/// `E p'⁴` after one collision from `p ~ N(0, s)`, `s = M/β`:
/// `3α⁴s² + 6α²(1−α)²M²sσ² + (1−α)⁴M⁴ E u⁴`.
pub fn expected_fourth_moment_after<T: Scalar>(alpha: T, mass: T, beta: T, law: &VelocityLaw<T>) -> T {
    let s = mass / beta;
    let k = T::one() - alpha;
    let a2 = alpha * alpha;
    T::lit(3.0) * a2 * a2 * s * s
        + T::lit(6.0) * a2 * k * k * mass * mass * s * law.variance()
        + k.powi(4) * mass.powi(4) * law.fourth_moment()
}
