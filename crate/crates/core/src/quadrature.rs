//! Gauss rules from the eigenvalues of the Jacobi matrix (Golub–Welsch).

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::{eigh, SymmetricMatrix};
use crate::scalar::Scalar;

/// Nodes and weights of an `n`-point Gauss rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule<T: Scalar> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(T) -> T>(&self, f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (x, w)| acc + *w * f(*x))
    }
}

fn golub_welsch<T: Scalar>(n: usize, off_diag: impl Fn(usize) -> T, mu0: T) -> Result<GaussRule<T>> {
    if n == 0 {
        return Err(invalid("a Gauss rule needs at least one node"));
    }
    let mut j = DMatrix::<T>::zeros(n, n);
    for k in 1..n {
        let b = off_diag(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = eigh(&SymmetricMatrix::new(j)?)?;
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            mu0 * v * v
        })
        .collect();
    Ok(GaussRule { nodes, weights })
}

/// Rule for `∫ e^{−x²} f(x) dx` over the real line.
pub fn gauss_hermite<T: Scalar>(n: usize) -> Result<GaussRule<T>> {
    golub_welsch(n, |k| (T::from_usize_lossy(k) * T::lit(0.5)).sqrt(), T::pi().sqrt())
}

/// Rule for `∫ f(x) dx` over `[−1, 1]`.
pub fn gauss_legendre<T: Scalar>(n: usize) -> Result<GaussRule<T>> {
    golub_welsch(
        n,
        |k| {
            let k = T::from_usize_lossy(k);
            k / (T::lit(4.0) * k * k - T::one()).sqrt()
        },
        T::lit(2.0),
    )
}

/// `∫ exp(L(v)) dv` for a log-integrand close to a Gaussian with centre
/// `centre` and precision `precision`, by Gauss–Hermite after the change of
/// variables `v = centre + x √(2/precision)`. The weight `e^{−x²}` is
/// divided out in log space so tiny outer weights stay harmless.
pub fn adaptive_hermite<T: Scalar, F: Fn(T) -> T>(rule: &GaussRule<T>, log_integrand: F, centre: T, precision: T) -> T {
    let s = (T::lit(2.0) / precision).sqrt();
    s * rule.integrate(|x| (log_integrand(centre + s * x) + x * x).exp())
}
