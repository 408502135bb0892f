//! Linear Hamiltonian oscillator network and its exact free flow.
//!
//! The network has `N` particles in `d` dimensions, common mass `M` and a
//! positive definite stiffness matrix `V` of order `dN`:
//!
//! ```text
//! H(q, p) = |p|² / (2M) + ½ qᵀ V q,      q̇ = p / M,   ṗ = −V q.
//! ```
//!
//! Coordinates are ordered particle-major: `(q_{1,1} .. q_{1,d}, q_{2,1} ..)`
//! and the same for `p`. The flow is evaluated mode by mode in the
//! eigenbasis of `V`, so it is exact for any time step.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh, SpectralDecomposition, SymmetricMatrix};
use crate::scalar::Scalar;

/// Smallest admissible ratio of the smallest to the largest eigenvalue of `V`.
const MIN_EIGEN_RATIO: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OscillatorNetwork<T: Scalar> {
    n_particles: usize,
    dim: usize,
    mass: T,
    stiffness: SymmetricMatrix<T>,
    spectrum: SpectralDecomposition<T>,
    /// `ω_k = √(λ_k / M)`, ascending.
    frequencies: DVector<T>,
}

impl<T: Scalar> OscillatorNetwork<T> {
    pub fn new(n_particles: usize, dim: usize, mass: T, stiffness: SymmetricMatrix<T>) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return Err(invalid("need at least one particle and one dimension"));
        }
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(invalid("mass must be positive"));
        }
        if stiffness.order() != n_particles * dim {
            return Err(Error::DimensionMismatch {
                expected: n_particles * dim,
                got: stiffness.order(),
            });
        }
        let spectrum = eigh(&stiffness)?;
        let (lo, hi) = (spectrum.min_eigenvalue(), spectrum.max_eigenvalue());
        if !(hi > T::zero()) || !(lo > T::lit(MIN_EIGEN_RATIO) * hi) {
            return Err(invalid(format!(
                "stiffness matrix must be positive definite (eigenvalues {lo} .. {hi})"
            )));
        }
        let frequencies = spectrum.eigenvalues.map(|l| (l / mass).sqrt());
        Ok(Self {
            n_particles,
            dim,
            mass,
            stiffness,
            spectrum,
            frequencies,
        })
    }

    /// Nearest-neighbour chain with free ends and on-site pinning:
    /// `V_ii = pinning + spring · (#neighbours)`, `V_{i,i±1} = −spring`,
    /// repeated independently in each of the `dim` directions.
    pub fn chain(n_particles: usize, dim: usize, mass: T, spring: T, pinning: T) -> Result<Self> {
        if !(pinning > T::zero()) || spring < T::zero() {
            return Err(invalid("chain needs positive pinning and non-negative spring"));
        }
        if n_particles == 0 || dim == 0 {
            return Err(invalid("need at least one particle and one dimension"));
        }
        let n = n_particles * dim;
        let mut v = DMatrix::<T>::zeros(n, n);
        for i in 0..n_particles {
            let neighbours = usize::from(i > 0) + usize::from(i + 1 < n_particles);
            for a in 0..dim {
                let r = i * dim + a;
                v[(r, r)] = pinning + spring * T::from_usize_lossy(neighbours);
                if i + 1 < n_particles {
                    let s = (i + 1) * dim + a;
                    v[(r, s)] = -spring;
                    v[(s, r)] = -spring;
                }
            }
        }
        Self::new(n_particles, dim, mass, SymmetricMatrix::new(v)?)
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `dN`, the length of `q` and of `p`.
    pub fn order(&self) -> usize {
        self.n_particles * self.dim
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.order()
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn stiffness(&self) -> &SymmetricMatrix<T> {
        &self.stiffness
    }

    pub fn spectrum(&self) -> &SpectralDecomposition<T> {
        &self.spectrum
    }

    pub fn frequencies(&self) -> &DVector<T> {
        &self.frequencies
    }

    pub fn max_frequency(&self) -> T {
        self.frequencies[self.frequencies.len() - 1]
    }

    /// An eighth of the shortest modal period.
    pub fn default_sample_dt(&self) -> T {
        T::two_pi() / self.max_frequency() / T::lit(8.0)
    }

    fn check(&self, psi: &PhaseState<T>) -> Result<()> {
        if psi.q.len() != self.order() {
            return Err(Error::DimensionMismatch {
                expected: self.order(),
                got: psi.q.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn to_modal(&self, psi: &PhaseState<T>) -> ModalState<T> {
        let qt = self.spectrum.eigenvectors.transpose();
        ModalState {
            q: &qt * &psi.q,
            p: &qt * &psi.p,
        }
    }

    /// Flows a modal state by `t` and maps it back to particle coordinates.
    pub(crate) fn flow_modal(&self, modal: &ModalState<T>, t: T) -> PhaseState<T> {
        let n = self.order();
        let m = self.mass;
        let mut q = DVector::zeros(n);
        let mut p = DVector::zeros(n);
        for k in 0..n {
            let w = self.frequencies[k];
            let (s, c) = (w * t).sin_cos();
            q[k] = c * modal.q[k] + s / (m * w) * modal.p[k];
            p[k] = -m * w * s * modal.q[k] + c * modal.p[k];
        }
        let u = &self.spectrum.eigenvectors;
        PhaseState { q: u * q, p: u * p }
    }
}

/// Phase-space coordinates in the eigenbasis of `V`.
#[derive(Debug, Clone)]
pub(crate) struct ModalState<T: Scalar> {
    q: DVector<T>,
    p: DVector<T>,
}

/// A point `ψ = (q, p)` of phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState<T: Scalar> {
    pub q: DVector<T>,
    pub p: DVector<T>,
}

impl<T: Scalar> PhaseState<T> {
    pub fn new(q: DVector<T>, p: DVector<T>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        let s = Self { q, p };
        if !s.is_finite() {
            return Err(invalid("phase state has non-finite entries"));
        }
        Ok(s)
    }

    pub fn from_slices(q: &[T], p: &[T]) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(p))
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            q: DVector::zeros(order),
            p: DVector::zeros(order),
        }
    }

    /// Splits a `2·order` vector into its `q` and `p` halves.
    pub fn from_vector(v: &DVector<T>) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(invalid("phase vector must have even length"));
        }
        let n = v.len() / 2;
        Self::new(v.rows(0, n).into_owned(), v.rows(n, n).into_owned())
    }

    pub fn to_vector(&self) -> DVector<T> {
        let n = self.q.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.p[i - n] })
    }

    pub fn order(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> T {
        (self.q.norm_squared() + self.p.norm_squared()).sqrt()
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            q: &self.q * a,
            p: &self.p * a,
        }
    }

    /// Momentum block of particle 1 (the first `dim` momentum slots).
    pub fn contact_momentum(&self, dim: usize) -> DVector<T> {
        self.p.rows(0, dim).into_owned()
    }

    pub fn set_contact_momentum(&mut self, p1: &DVector<T>) {
        let d = p1.len();
        self.p.rows_mut(0, d).copy_from(p1);
    }
}

/// `H = Σ |p_k|² / (2M) + ½ qᵀ V q`.
pub fn energy<T: Scalar>(net: &OscillatorNetwork<T>, psi: &PhaseState<T>) -> Result<T> {
    net.check(psi)?;
    let kinetic = psi.p.norm_squared() / (T::lit(2.0) * net.mass);
    let potential = psi.q.dot(&(net.stiffness.as_matrix() * &psi.q)) * T::lit(0.5);
    Ok(kinetic + potential)
}

/// Exact solution `e^{tA} ψ` of the free equations of motion. Negative `t`
/// runs the flow backwards.
pub fn propagate<T: Scalar>(net: &OscillatorNetwork<T>, psi: &PhaseState<T>, t: T) -> Result<PhaseState<T>> {
    net.check(psi)?;
    Ok(net.flow_modal(&net.to_modal(psi), t))
}

/// `A = [[0, I/M], [−V, 0]]` in phase-state ordering.
pub fn generator_matrix<T: Scalar>(net: &OscillatorNetwork<T>) -> DMatrix<T> {
    let n = net.order();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let inv_m = T::one() / net.mass;
    for i in 0..n {
        a[(i, n + i)] = inv_m;
        for j in 0..n {
            a[(n + i, j)] = -net.stiffness.get(i, j);
        }
    }
    a
}

/// Matrix `Φ(t) = e^{tA}` of the flow, built column by column.
pub fn flow_matrix<T: Scalar>(net: &OscillatorNetwork<T>, t: T) -> DMatrix<T> {
    let dim = net.phase_dim();
    let mut phi = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = DVector::zeros(dim);
        e[j] = T::one();
        let psi = PhaseState::from_vector(&e).expect("unit vector is a valid phase state");
        let out = net.flow_modal(&net.to_modal(&psi), t).to_vector();
        phi.set_column(j, &out);
    }
    phi
}

/// Canonical symplectic form `[[0, I], [−I, 0]]` of order `2n`.
pub fn symplectic_form<T: Scalar>(order: usize) -> DMatrix<T> {
    let mut s = DMatrix::zeros(2 * order, 2 * order);
    for i in 0..order {
        s[(i, order + i)] = T::one();
        s[(order + i, i)] = -T::one();
    }
    s
}
