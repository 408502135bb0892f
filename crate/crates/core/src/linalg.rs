//! Dense symmetric linear algebra shared by the rest of the crate:
//! eigendecomposition, Krylov bases, a positive definite random ensemble,
//! numerical rank and a bounded search for integer frequency relations.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Default drop tolerance for Krylov basis construction.
pub const DEFAULT_KRYLOV_TOL: f64 = 1e-8;

/// Largest number of integer vectors [`rational_independence_heuristic`]
/// is willing to enumerate.
pub const MAX_RELATION_SEARCH: f64 = 5.0e7;

const EIGH_MAX_ITER: usize = 10_000;
const RANDOM_PD_SHIFT: f64 = 1e-6;

/// Square matrix that is symmetric bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix<T: Scalar> {
    entries: DMatrix<T>,
}

impl<T: Scalar> SymmetricMatrix<T> {
    /// Symmetrizes `m` as `(m + mᵀ) / 2`.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(invalid("matrix order must be at least 1"));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        let half = T::lit(0.5);
        let n = m.nrows();
        let entries = DMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)]) * half);
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("rows must form a square matrix"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_diagonal(diag: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(order: usize) -> Result<Self> {
        Self::new(DMatrix::identity(order, order))
    }

    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[(i, j)]
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.entries)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.order())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T: Scalar> {
    pub eigenvalues: DVector<T>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<T>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn reconstruct(&self) -> DMatrix<T> {
        let q = &self.eigenvectors;
        q * DMatrix::from_diagonal(&self.eigenvalues) * q.transpose()
    }

    /// `‖QᵀQ − I‖_max`.
    pub fn orthogonality_error(&self) -> T {
        let n = self.eigenvectors.ncols();
        max_abs(&(self.eigenvectors.transpose() * &self.eigenvectors - DMatrix::identity(n, n)))
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn eigh<T: Scalar>(m: &SymmetricMatrix<T>) -> Result<SpectralDecomposition<T>> {
    let eig = SymmetricEigen::try_new(m.entries.clone(), T::default_epsilon(), EIGH_MAX_ITER)
        .ok_or_else(|| Error::NonConvergence {
            matrix: format!("{:?}", m.to_rows()),
        })?;
    let n = m.order();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalues of a finite matrix are ordered")
    });
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Orthonormal basis of `span{Vᵏ e_n : n ∈ seeds, k = 0..order-1}`.
#[derive(Debug, Clone)]
pub struct KrylovBasis<T: Scalar> {
    /// `order × rank`, orthonormal columns.
    pub basis: DMatrix<T>,
    pub rank: usize,
}

/// Builds the Krylov space of `v` seeded by the (0-based) coordinate
/// vectors in `seeds`.
///
/// Each seed starts an Arnoldi chain: the next candidate is `V` applied to
/// the newest basis vector, orthogonalized twice by modified Gram–Schmidt
/// against everything kept so far. A candidate whose residual norm falls
/// below `tol` times the largest retained candidate norm ends the chain.
/// Chains stop after `order` vectors (Hamilton–Cayley).
pub fn krylov_basis<T: Scalar>(
    v: &SymmetricMatrix<T>,
    seeds: &[usize],
    tol: T,
) -> Result<KrylovBasis<T>> {
    let n = v.order();
    if seeds.is_empty() {
        return Err(invalid("seed index set must not be empty"));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
        return Err(invalid(format!("seed index {bad} out of range for order {n}")));
    }
    if tol <= T::zero() {
        return Err(invalid("drop tolerance must be positive"));
    }

    let mut cols: Vec<DVector<T>> = Vec::with_capacity(n);
    let mut scale = T::zero();
    'seeds: for &s in seeds {
        let mut candidate = DVector::from_fn(n, |i, _| if i == s { T::one() } else { T::zero() });
        for _ in 0..n {
            if cols.len() == n {
                break 'seeds;
            }
            let cand_norm = candidate.norm();
            let mut r = candidate;
            for _pass in 0..2 {
                for q in &cols {
                    let c = q.dot(&r);
                    r.axpy(-c, q, T::one());
                }
            }
            let rn = r.norm();
            let reference = if cand_norm > scale { cand_norm } else { scale };
            if !(rn > tol * reference) {
                break;
            }
            scale = reference;
            let q = r / rn;
            candidate = v.as_matrix() * &q;
            cols.push(q);
        }
    }
    let rank = cols.len();
    let basis = if rank == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(KrylovBasis { basis, rank })
}

/// `G Gᵀ + 1e-6 I` with standard normal `G`, reproducible per seed.
pub fn random_pd_matrix<T: Scalar>(order: usize, seed: u64) -> Result<SymmetricMatrix<T>> {
    if order == 0 {
        return Err(invalid("order must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DMatrix::<T>::zeros(order, order);
    for i in 0..order {
        for j in 0..order {
            let z: f64 = StandardNormal.sample(&mut rng);
            g[(i, j)] = T::lit(z);
        }
    }
    let m = &g * g.transpose() + DMatrix::identity(order, order) * T::lit(RANDOM_PD_SHIFT);
    SymmetricMatrix::new(m)
}

/// `Q diag(μ) Qᵀ` with `Q` a random orthogonal matrix and eigenvalues `μ`
/// uniform in `[low, high]`, reproducible per seed.
pub fn random_pd_with_spectrum<T: Scalar>(order: usize, low: T, high: T, seed: u64) -> Result<SymmetricMatrix<T>> {
    if order == 0 {
        return Err(invalid("order must be at least 1"));
    }
    if !(low > T::zero()) || !(high >= low) || !high.is_finite() {
        return Err(invalid("spectrum bounds must satisfy 0 < low ≤ high"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(order, order, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // sign fix makes Q Haar distributed
    for j in 0..order {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mu = DVector::from_fn(order, |_, _| rng.random_range(low.as_f64()..=high.as_f64()));
    let m = &q * DMatrix::from_diagonal(&mu) * q.transpose();
    SymmetricMatrix::new(m.map(T::lit))
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let largest = sv.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
    if largest <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * largest).count()
}

/// Outcome of [`rational_independence_heuristic`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndependenceCheck {
    /// No small integer relation was found. This is evidence, not proof.
    pub independent: bool,
    /// Smallest-norm relation found, first nonzero entry positive.
    pub witness: Option<Vec<i64>>,
}

/// Looks for a nonzero integer vector `a` with `‖a‖_∞ ≤ max_coeff` and
/// `|Σ a_k ω_k| ≤ tol`, scanning shells of increasing `‖a‖_∞`.
///
/// Floating point cannot certify rational independence; a `true` result
/// only says no relation exists within the searched box.
pub fn rational_independence_heuristic<T: Scalar>(
    omegas: &[T],
    max_coeff: u32,
    tol: T,
) -> Result<IndependenceCheck> {
    if omegas.is_empty() {
        return Err(invalid("need at least one frequency"));
    }
    if omegas.iter().any(|w| !(*w > T::zero()) || !w.is_finite()) {
        return Err(invalid("frequencies must be positive and finite"));
    }
    if max_coeff == 0 {
        return Err(invalid("max_coeff must be at least 1"));
    }
    let size = (2.0 * max_coeff as f64 + 1.0).powi(omegas.len() as i32);
    if size > MAX_RELATION_SEARCH {
        return Err(Error::SearchTooLarge {
            size,
            cap: MAX_RELATION_SEARCH,
        });
    }
    let w: Vec<f64> = omegas.iter().map(|x| x.as_f64()).collect();
    let tol = tol.as_f64();
    let mut coeffs = vec![0i64; w.len()];
    for shell in 1..=max_coeff as i64 {
        if search_shell(&w, tol, shell, 0, 0.0, false, false, &mut coeffs) {
            return Ok(IndependenceCheck {
                independent: false,
                witness: Some(coeffs),
            });
        }
    }
    Ok(IndependenceCheck {
        independent: true,
        witness: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn search_shell(
    w: &[f64],
    tol: f64,
    shell: i64,
    depth: usize,
    partial: f64,
    seen_nonzero: bool,
    hit_shell: bool,
    coeffs: &mut [i64],
) -> bool {
    if depth == w.len() {
        return seen_nonzero && hit_shell && partial.abs() <= tol;
    }
    for a in -shell..=shell {
        // canonical sign: first nonzero coefficient positive
        if !seen_nonzero && a < 0 {
            continue;
        }
        coeffs[depth] = a;
        if search_shell(
            w,
            tol,
            shell,
            depth + 1,
            partial + a as f64 * w[depth],
            seen_nonzero || a != 0,
            hit_shell || a.abs() == shell,
            coeffs,
        ) {
            return true;
        }
    }
    coeffs[depth] = 0;
    false
}

pub(crate) fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter()
        .map(|x| x.abs())
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[&[f64]]) -> SymmetricMatrix<f64> {
        SymmetricMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn construction_symmetrizes_exactly() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 0.3, 0.1 + 0.2, 2.0]);
        let s = SymmetricMatrix::new(m).unwrap();
        assert_eq!(s.get(0, 1).to_bits(), s.get(1, 0).to_bits());
    }

    #[test]
    fn rejects_non_square_and_empty() {
        assert!(SymmetricMatrix::<f64>::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymmetricMatrix::<f64>::new(DMatrix::zeros(0, 0)).is_err());
        assert!(SymmetricMatrix::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn eigh_of_diagonal_is_trivial() {
        let d = eigh(&sym(&[&[1.0, 0.0], &[0.0, 4.0]])).unwrap();
        assert_eq!(d.eigenvalues.as_slice(), &[1.0, 4.0]);
        for i in 0..2 {
            assert!((d.eigenvectors[(i, i)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn eigh_two_by_two() {
        // λ² − 4λ + 3 = 0
        let d = eigh(&sym(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((d.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((d.eigenvalues[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = DMatrix::<f64>::from_fn(5, 5, |_, _| StandardNormal.sample(&mut rng));
        let s = SymmetricMatrix::new(g).unwrap();
        let d = eigh(&s).unwrap();
        let resid = max_abs(&(d.reconstruct() - s.as_matrix()));
        assert!(resid <= 1e-10 * s.max_abs());
        assert!(d.orthogonality_error() <= 1e-10);
        assert!(d.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn krylov_examples() {
        let diag = sym(&[&[1.0, 0.0], &[0.0, 4.0]]);
        let k = krylov_basis(&diag, &[0], 1e-8).unwrap();
        assert_eq!(k.rank, 1);
        assert!((k.basis[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert_eq!(krylov_basis(&diag, &[0, 1], 1e-8).unwrap().rank, 2);
        let full = sym(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert_eq!(krylov_basis(&full, &[0], 1e-8).unwrap().rank, 2);
    }

    #[test]
    fn krylov_errors() {
        let v = SymmetricMatrix::<f64>::identity(3).unwrap();
        assert!(krylov_basis(&v, &[], 1e-8).is_err());
        assert!(krylov_basis(&v, &[3], 1e-8).is_err());
        assert!(krylov_basis(&v, &[0], 0.0).is_err());
    }

    #[test]
    fn krylov_identity_is_rank_one() {
        let v = SymmetricMatrix::<f64>::identity(4).unwrap();
        assert_eq!(krylov_basis(&v, &[2], 1e-8).unwrap().rank, 1);
    }

    #[test]
    fn bounded_spectrum_matrix() {
        let m: SymmetricMatrix<f64> = random_pd_with_spectrum(6, 0.5, 5.0, 3).unwrap();
        let e = eigh(&m).unwrap();
        assert!(e.min_eigenvalue() >= 0.5 - 1e-12 && e.max_eigenvalue() <= 5.0 + 1e-12);
        assert_eq!(m, random_pd_with_spectrum(6, 0.5, 5.0, 3).unwrap());
        assert!(random_pd_with_spectrum::<f64>(3, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn random_pd_is_deterministic_and_positive() {
        let a: SymmetricMatrix<f64> = random_pd_matrix(3, 7).unwrap();
        let b: SymmetricMatrix<f64> = random_pd_matrix(3, 7).unwrap();
        assert_eq!(a, b);
        let one: SymmetricMatrix<f64> = random_pd_matrix(1, 99).unwrap();
        assert!(one.get(0, 0) > 0.0);
        for seed in 0..100 {
            let m: SymmetricMatrix<f64> = random_pd_matrix(4, seed).unwrap();
            assert!(eigh(&m).unwrap().min_eigenvalue() > 0.0);
        }
    }

    #[test]
    fn numerical_rank_basic() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 1);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(3, 3), 1e-10), 0);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(3, 3), 1e-10), 3);
    }

    #[test]
    fn relation_found_for_commensurate_pair() {
        let r = rational_independence_heuristic(&[1.0, 2.0], 3, 1e-12).unwrap();
        assert!(!r.independent);
        assert_eq!(r.witness, Some(vec![2, -1]));
    }

    #[test]
    fn sqrt_two_has_no_small_relation() {
        // brute force over the same box, independently of the shell search
        let w = [1.0f64, 2f64.sqrt()];
        let mut found = false;
        for a in -10i64..=10 {
            for b in -10i64..=10 {
                if (a, b) != (0, 0) && (a as f64 * w[0] + b as f64 * w[1]).abs() <= 1e-9 {
                    found = true;
                }
            }
        }
        assert!(!found);
        let r = rational_independence_heuristic(&w, 10, 1e-9).unwrap();
        assert!(r.independent);
        assert!(r.witness.is_none());
    }

    #[test]
    fn single_frequency_is_independent() {
        assert!(rational_independence_heuristic(&[3.7], 5, 1e-9).unwrap().independent);
    }

    #[test]
    fn relation_search_refuses_huge_boxes() {
        let w = vec![1.0f64; 12];
        assert!(matches!(
            rational_independence_heuristic(&w, 10, 1e-9),
            Err(Error::SearchTooLarge { .. })
        ));
        assert!(rational_independence_heuristic(&[0.0, 1.0], 2, 1e-9).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let s = SymmetricMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let d = eigh(&s).unwrap();
        assert!((d.eigenvalues[1] - 3.0).abs() < 1e-5);
        assert_eq!(krylov_basis(&s, &[0], 1e-4).unwrap().rank, 2);
    }
}
