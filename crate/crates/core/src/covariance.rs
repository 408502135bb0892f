//! First and second moment equations of the elastic one-dimensional model
//! with Poisson collisions.
//!
//! With `g` the unit vector of the first momentum slot of particle 1 and
//! `Γ = g gᵀ`, the mean obeys `ṁ = (A − λ(1−α)Γ) m` and the second moment
//! matrix `C = E ψψᵀ` obeys
//!
//! ```text
//! Ċ = AC + CAᵀ − λ(1−α)(ΓC + CΓ − (1−α)ΓCΓ) + λ(1−α)²M²σ² Γ.
//! ```
//!
//! Its fixed point is `β⁻¹ diag(V⁻¹, M·I)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{generator_matrix, OscillatorNetwork, PhaseState};
use crate::linalg::{eigh, max_abs, SymmetricMatrix};
use crate::scalar::Scalar;

/// Slack below zero tolerated in the smallest eigenvalue, relative to `‖C‖`.
pub const PSD_TOL: f64 = 1e-10;

/// Collision rate, restitution coefficient, external velocity variance and
/// internal mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParams<T: Scalar> {
    pub lambda: T,
    pub alpha: T,
    pub sigma2: T,
    pub mass: T,
}

impl<T: Scalar> MomentParams<T> {
    /// `λ = 0` (no collisions) and `σ² = 0` (homogeneous equation) are
    /// accepted as limiting cases.
    pub fn new(lambda: T, alpha: T, sigma2: T, mass: T) -> Result<Self> {
        let p = Self {
            lambda,
            alpha,
            sigma2,
            mass,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda, self.alpha, self.sigma2, self.mass].iter().all(|x| x.is_finite());
        if !finite {
            return Err(invalid("moment parameters must be finite"));
        }
        if self.lambda < T::zero() {
            return Err(invalid("collision rate must be non-negative"));
        }
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return Err(invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.sigma2 < T::zero() {
            return Err(invalid("velocity variance must be non-negative"));
        }
        if !(self.mass > T::zero()) {
            return Err(invalid("mass must be positive"));
        }
        Ok(())
    }

    /// Same parameters without the noise source.
    pub fn homogeneous(&self) -> Self {
        Self {
            sigma2: T::zero(),
            ..*self
        }
    }

    /// `λ(1−α)`.
    pub fn damping(&self) -> T {
        self.lambda * (T::one() - self.alpha)
    }

    /// `λ(1−α)²M²σ²`.
    pub fn source(&self) -> T {
        let a = T::one() - self.alpha;
        self.lambda * a * a * self.mass * self.mass * self.sigma2
    }
}

/// `β = (1+α) / (M(1−α)σ²)`, equal to `1/(mσ²)` for the external mass `m`.
pub fn beta_from_params<T: Scalar>(p: &MomentParams<T>) -> Result<T> {
    p.validate()?;
    if !(p.sigma2 > T::zero()) {
        return Err(invalid("inverse temperature needs a positive velocity variance"));
    }
    Ok((T::one() + p.alpha) / (p.mass * (T::one() - p.alpha) * p.sigma2))
}

/// Index of the first momentum slot of particle 1 in phase-state ordering
/// (0-based).
pub fn selector_index<T: Scalar>(net: &OscillatorNetwork<T>) -> usize {
    net.order()
}

/// `V⁻¹` from the eigendecomposition held by the network.
pub fn stiffness_inverse<T: Scalar>(net: &OscillatorNetwork<T>) -> DMatrix<T> {
    let s = net.spectrum();
    let inv = s.eigenvalues.map(|l| T::one() / l);
    &s.eigenvectors * DMatrix::from_diagonal(&inv) * s.eigenvectors.transpose()
}

/// `β⁻¹ diag(V⁻¹, M·I)`.
pub fn gibbs_covariance<T: Scalar>(net: &OscillatorNetwork<T>, beta: T) -> Result<SymmetricMatrix<T>> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(invalid("beta must be positive"));
    }
    let n = net.order();
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(&(stiffness_inverse(net) / beta));
    for i in 0..n {
        c[(n + i, n + i)] = net.mass() / beta;
    }
    SymmetricMatrix::new(c)
}

fn check_square<T: Scalar>(net: &OscillatorNetwork<T>, c: &DMatrix<T>) -> Result<()> {
    let dim = net.phase_dim();
    if c.nrows() != dim || c.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: c.nrows().max(c.ncols()),
        });
    }
    Ok(())
}

fn check_mass<T: Scalar>(net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> Result<()> {
    p.validate()?;
    if (p.mass - net.mass()).abs() > T::lit(1e-12) * net.mass() {
        return Err(invalid(format!(
            "moment parameters use mass {} but the network has mass {}",
            p.mass,
            net.mass()
        )));
    }
    Ok(())
}

fn rhs_with<T: Scalar>(a: &DMatrix<T>, g: usize, p: &MomentParams<T>, c: &DMatrix<T>) -> DMatrix<T> {
    let mut out = a * c + c * a.transpose();
    let damp = p.damping();
    let keep = T::one() - p.alpha;
    // ΓC has only row g, CΓ only column g
    for j in 0..c.ncols() {
        out[(g, j)] -= damp * c[(g, j)];
        out[(j, g)] -= damp * c[(j, g)];
    }
    out[(g, g)] += damp * keep * c[(g, g)] + p.source();
    (&out + out.transpose()) * T::lit(0.5)
}

pub fn covariance_rhs<T: Scalar>(c: &DMatrix<T>, net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> Result<DMatrix<T>> {
    check_square(net, c)?;
    check_mass(net, p)?;
    Ok(rhs_with(&generator_matrix(net), selector_index(net), p, c))
}

/// Largest entry of the right-hand side at `β⁻¹C_G`.
pub fn fixed_point_residual<T: Scalar>(net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> Result<T> {
    let beta = beta_from_params(p)?;
    let c = gibbs_covariance(net, beta)?;
    Ok(max_abs(&covariance_rhs(c.as_matrix(), net, p)?))
}

/// One classical Runge–Kutta step of `ẏ = f(y)`.
pub fn rk4_step<T: Scalar, F>(y: &DMatrix<T>, dt: T, f: F) -> DMatrix<T>
where
    F: Fn(&DMatrix<T>) -> DMatrix<T>,
{
    let half = T::lit(0.5);
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (dt * half)));
    let k3 = f(&(y + &k2 * (dt * half)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt / T::lit(6.0))
}

/// `min(1e-2, 0.1 / (λ + ω_max))`.
pub fn default_ode_dt<T: Scalar>(net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> T {
    let bound = T::lit(0.1) / (p.lambda + net.max_frequency());
    if bound < T::lit(1e-2) {
        bound
    } else {
        T::lit(1e-2)
    }
}

fn step_count<T: Scalar>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(invalid(format!("need dt > 0 and t_end ≥ 0, got dt={dt}, t_end={t_end}")));
    }
    Ok((t_end / dt - T::lit(1e-9)).ceil().as_f64().max(0.0) as usize)
}

/// Step sizes covering `[0, t_end]`: uniform `dt`, the last one shortened.
fn steps<T: Scalar>(t_end: T, dt: T) -> Result<Vec<(T, T)>> {
    let n = step_count(t_end, dt)?;
    Ok((0..n)
        .map(|k| {
            let t0 = T::from_usize_lossy(k) * dt;
            let t1 = if k + 1 == n { t_end } else { T::from_usize_lossy(k + 1) * dt };
            (t1, t1 - t0)
        })
        .collect())
}

/// Second moment matrices sampled after every step, starting at `t = 0`.
#[derive(Debug, Clone)]
pub struct CovarianceTrajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<DMatrix<T>>,
}

impl<T: Scalar> CovarianceTrajectory<T> {
    pub fn last(&self) -> &DMatrix<T> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

fn min_eigenvalue<T: Scalar>(c: &DMatrix<T>) -> Result<T> {
    Ok(eigh(&SymmetricMatrix::new(c.clone())?)?.min_eigenvalue())
}

/// `scale` is the larger of `‖C‖` and the reference size of the problem, so
/// that truncation noise on a nearly vanishing `C` is not mistaken for loss
/// of definiteness.
fn check_psd<T: Scalar>(c: &DMatrix<T>, time: T, reference: T) -> Result<()> {
    let own = max_abs(c);
    let scale = if own > reference { own } else { reference };
    if scale == T::zero() {
        return Ok(());
    }
    let lo = min_eigenvalue(c)?;
    if lo < -T::lit(PSD_TOL) * scale {
        return Err(Error::NotPositiveSemidefinite {
            time: time.as_f64(),
            min_eigenvalue: lo.as_f64(),
        });
    }
    Ok(())
}

/// Integrates the second moment equation by RK4, symmetrizing after each
/// step and aborting if `C` stops being positive semidefinite.
pub fn integrate_covariance<T: Scalar>(
    c0: &DMatrix<T>,
    net: &OscillatorNetwork<T>,
    p: &MomentParams<T>,
    t_end: T,
    dt: T,
) -> Result<CovarianceTrajectory<T>> {
    check_square(net, c0)?;
    check_mass(net, p)?;
    let c0 = (c0 + c0.transpose()) * T::lit(0.5);
    check_psd(&c0, T::zero(), T::zero())?;
    let star = max_abs(&fixed_point(net, p)?);
    let start = max_abs(&c0);
    let reference = if star > start { star } else { start };
    let a = generator_matrix(net);
    let g = selector_index(net);
    let mut times = vec![T::zero()];
    let mut states = vec![c0.clone()];
    let mut c = c0;
    for (t, h) in steps(t_end, dt)? {
        let next = rk4_step(&c, h, |y| rhs_with(&a, g, p, y));
        c = (&next + next.transpose()) * T::lit(0.5);
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: times.len() });
        }
        check_psd(&c, t, reference)?;
        times.push(t);
        states.push(c.clone());
    }
    Ok(CovarianceTrajectory { times, states })
}

/// `F(C) = Tr(C_G⁻¹ C)` with `C_G⁻¹ = diag(V, I/M)`.
pub fn lyapunov_functional<T: Scalar>(c: &DMatrix<T>, net: &OscillatorNetwork<T>) -> Result<T> {
    check_square(net, c)?;
    let n = net.order();
    let mut f = T::zero();
    for i in 0..n {
        for j in 0..n {
            f += net.stiffness().get(i, j) * c[(j, i)];
        }
        f += c[(n + i, n + i)] / net.mass();
    }
    Ok(f)
}

/// `dF/dt = −λ(1−α²)/M · C_{p₁p₁}` along the homogeneous equation.
pub fn lyapunov_derivative<T: Scalar>(c: &DMatrix<T>, net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> T {
    let g = selector_index(net);
    -p.lambda * (T::one() - p.alpha * p.alpha) / p.mass * c[(g, g)]
}

/// Fixed point of the second moment equation: `β⁻¹C_G` with noise, zero
/// without.
pub fn fixed_point<T: Scalar>(net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> Result<DMatrix<T>> {
    if p.sigma2 > T::zero() {
        Ok(gibbs_covariance(net, beta_from_params(p)?)?.into_matrix())
    } else {
        let d = net.phase_dim();
        Ok(DMatrix::zeros(d, d))
    }
}

/// `F(C* − C(t))` along a trajectory; the deviation from the fixed point
/// solves the homogeneous equation, so this never increases.
pub fn deviation_functional<T: Scalar>(
    traj: &CovarianceTrajectory<T>,
    net: &OscillatorNetwork<T>,
    p: &MomentParams<T>,
) -> Result<Vec<T>> {
    let star = fixed_point(net, p)?;
    traj.states.iter().map(|c| lyapunov_functional(&(&star - c), net)).collect()
}

/// True when no value exceeds its predecessor by more than `slack`.
pub fn is_nonincreasing<T: Scalar>(values: &[T], slack: T) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// First sample time after which `‖C − target‖_max ≤ tol` holds for good.
pub fn convergence_time<T: Scalar>(traj: &CovarianceTrajectory<T>, target: &DMatrix<T>, tol: T) -> Option<T> {
    let mut hit = None;
    for (t, c) in traj.times.iter().zip(&traj.states) {
        if max_abs(&(c - target)) <= tol {
            hit.get_or_insert(*t);
        } else {
            hit = None;
        }
    }
    hit
}

/// CSV with header `t,F,C_q11,C_p11,C_q11_p11`.
pub fn write_lyapunov_csv<T: Scalar, W: Write>(
    mut w: W,
    traj: &CovarianceTrajectory<T>,
    functional: &[T],
    net: &OscillatorNetwork<T>,
) -> Result<()> {
    let g = selector_index(net);
    writeln!(w, "t,F,C_q11,C_p11,C_q11_p11")?;
    for ((t, c), f) in traj.times.iter().zip(&traj.states).zip(functional) {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t.as_f64(),
            f.as_f64(),
            c[(0, 0)].as_f64(),
            c[(g, g)].as_f64(),
            c[(0, g)].as_f64()
        )?;
    }
    Ok(())
}

/// Damped generator `A_D = A − λ(1−α)Γ` of the mean.
pub fn damped_generator<T: Scalar>(net: &OscillatorNetwork<T>, p: &MomentParams<T>) -> DMatrix<T> {
    let mut a = generator_matrix(net);
    let g = selector_index(net);
    a[(g, g)] -= p.damping();
    a
}

/// Mean `(Q, P)(t)` sampled after every RK4 step.
#[derive(Debug, Clone)]
pub struct MeanTrajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<PhaseState<T>>,
}

pub fn mean_dynamics<T: Scalar>(
    net: &OscillatorNetwork<T>,
    p: &MomentParams<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    dt: T,
) -> Result<MeanTrajectory<T>> {
    check_mass(net, p)?;
    if psi0.order() != net.order() {
        return Err(Error::DimensionMismatch {
            expected: net.order(),
            got: psi0.order(),
        });
    }
    let a = damped_generator(net, p);
    let v0 = psi0.to_vector();
    let mut y = DMatrix::from_column_slice(v0.len(), 1, v0.as_slice());
    let mut times = vec![T::zero()];
    let mut states = vec![psi0.clone()];
    for (t, h) in steps(t_end, dt)? {
        y = rk4_step(&y, h, |v| &a * v);
        let v: DVector<T> = y.column(0).into_owned();
        times.push(t);
        states.push(PhaseState::from_vector(&v).map_err(|_| Error::NonFinite { step: times.len() - 1 })?);
    }
    Ok(MeanTrajectory { times, states })
}

/// `√(qᵀVq + |p|²/M) = √(2H)`, the norm preserved by the free flow.
pub fn energy_norm<T: Scalar>(net: &OscillatorNetwork<T>, psi: &PhaseState<T>) -> T {
    let vq = net.stiffness().as_matrix() * &psi.q;
    (psi.q.dot(&vq) + psi.p.norm_squared() / net.mass()).sqrt()
}
