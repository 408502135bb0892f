//! Dissipative and neutral subspaces of an oscillator network.
//!
//! Collisions damp the momenta at the coordinates in `Λ′`. The damping
//! reaches `l_V = span{Vᵏ e_n : n ∈ Λ′, k ≥ 0}`; the network is complete
//! when `l_V` is the whole configuration space. The neutral subspace
//! `L₀ = l_V^⊥ × l_V^⊥` is invariant under the free flow and the momenta at
//! `Λ′` vanish on it for all time.
//!
//! Coordinate indices in this module are 0-based.

use nalgebra::{DMatrix, DVector, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hamiltonian::{propagate, OscillatorNetwork, PhaseState};
use crate::linalg::{eigh, krylov_basis, random_pd_with_spectrum, rational_independence_heuristic, SymmetricMatrix};
use crate::scalar::Scalar;

/// Default eigenvalue clustering and Krylov drop tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Largest integer-relation search box explored for the frequencies.
pub const INDEPENDENCE_SEARCH_BUDGET: f64 = 2e6;
/// Coefficient bound of the relation search for small orders.
pub const MAX_RELATION_COEFF: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativeReport {
    pub order: usize,
    pub lambda_prime: Vec<usize>,
    pub krylov_rank: usize,
    pub complete: bool,
    pub dim_l0: usize,
    /// Eigenvalues of `V`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Mean eigenvalue of each cluster.
    pub cluster_values: Vec<f64>,
    pub eigen_multiplicities: Vec<usize>,
    /// `dim P_λ span{e_n : n ∈ Λ′}` for each cluster.
    pub spectral_projections: Vec<usize>,
    pub simple_spectrum: bool,
    /// `2·#{k : v_k ⊥ e_n for all n ∈ Λ′}`, only for a simple spectrum.
    pub eigenvector_count_dim_l0: Option<usize>,
    /// Some cluster boundary has a gap below ten times the clustering
    /// threshold.
    pub ambiguous_clustering: bool,
    /// Krylov rank, eigenvector count and summed projections agree.
    pub consistent: bool,
    pub rationally_independent_heuristic: bool,
    pub independence_max_coeff: u32,
}

impl DissipativeReport {
    pub fn max_multiplicity(&self) -> usize {
        self.eigen_multiplicities.iter().copied().max().unwrap_or(0)
    }

    pub fn projection_dim_sum(&self) -> usize {
        self.spectral_projections.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check_lambda_prime(order: usize, lambda_prime: &[usize]) -> Result<()> {
    if lambda_prime.is_empty() {
        return Err(invalid("contact index set must not be empty"));
    }
    if let Some(&bad) = lambda_prime.iter().find(|&&n| n >= order) {
        return Err(invalid(format!("contact index {bad} out of range for order {order}")));
    }
    let mut sorted = lambda_prime.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != lambda_prime.len() {
        return Err(invalid("contact indices must be distinct"));
    }
    Ok(())
}

/// Coefficient bound such that the relation search stays within budget.
pub fn relation_coeff_bound(n: usize) -> u32 {
    let mut k = MAX_RELATION_COEFF;
    while k > 1 && (2.0 * k as f64 + 1.0).powi(n as i32) > INDEPENDENCE_SEARCH_BUDGET {
        k -= 1;
    }
    k
}

pub fn analyze<T: Scalar>(v: &SymmetricMatrix<T>, lambda_prime: &[usize], tol: T) -> Result<DissipativeReport> {
    let n = v.order();
    check_lambda_prime(n, lambda_prime)?;
    if !(tol > T::zero()) {
        return Err(invalid("tolerance must be positive"));
    }
    let krylov = krylov_basis(v, lambda_prime, tol)?;
    let spectrum = eigh(v)?;
    let eig: Vec<T> = spectrum.eigenvalues.iter().copied().collect();
    let scale = eig.iter().fold(T::zero(), |a, x| if x.abs() > a { x.abs() } else { a });
    let gap_tol = tol * scale;

    let mut clusters: Vec<Vec<usize>> = vec![vec![0]];
    let mut ambiguous = false;
    for k in 1..n {
        let gap = eig[k] - eig[k - 1];
        if gap > gap_tol {
            if gap < T::lit(10.0) * gap_tol {
                ambiguous = true;
            }
            clusters.push(vec![k]);
        } else {
            clusters.last_mut().expect("non-empty").push(k);
        }
    }

    let zero_tol = tol.sqrt();
    let mut projections = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let b = DMatrix::from_fn(c.len(), lambda_prime.len(), |i, j| spectrum.eigenvectors[(lambda_prime[j], c[i])]);
        let sv = SVD::new(b, false, false).singular_values;
        projections.push(sv.iter().filter(|s| **s > zero_tol).count());
    }

    let simple = clusters.iter().all(|c| c.len() == 1);
    let eigen_count = simple.then(|| {
        2 * (0..n)
            .filter(|&k| lambda_prime.iter().all(|&i| spectrum.eigenvectors[(i, k)].abs() <= zero_tol))
            .count()
    });

    let rank = krylov.rank;
    let dim_l0 = 2 * (n - rank);
    let consistent = projections.iter().sum::<usize>() == rank && eigen_count.is_none_or(|d| d == dim_l0);

    let (independent, max_coeff) = if eig[0] > T::zero() {
        let omegas: Vec<T> = eig.iter().map(|l| l.sqrt()).collect();
        let k = relation_coeff_bound(n);
        let top = omegas[n - 1];
        let check = rational_independence_heuristic(&omegas, k, T::lit(1e-9) * top)?;
        (check.independent, k)
    } else {
        (false, 0)
    };

    Ok(DissipativeReport {
        order: n,
        lambda_prime: lambda_prime.to_vec(),
        krylov_rank: rank,
        complete: rank == n,
        dim_l0,
        eigenvalues: eig.iter().map(|x| x.as_f64()).collect(),
        cluster_values: clusters
            .iter()
            .map(|c| c.iter().map(|&k| eig[k].as_f64()).sum::<f64>() / c.len() as f64)
            .collect(),
        eigen_multiplicities: clusters.iter().map(Vec::len).collect(),
        spectral_projections: projections,
        simple_spectrum: simple,
        eigenvector_count_dim_l0: eigen_count,
        ambiguous_clustering: ambiguous,
        consistent,
        rationally_independent_heuristic: independent,
        independence_max_coeff: max_coeff,
    })
}

/// A complete network has no eigenvalue of multiplicity above `|Λ′|`.
pub fn multiplicity_bound_check(report: &DissipativeReport, lambda_prime: &[usize]) -> bool {
    !report.complete || report.max_multiplicity() <= lambda_prime.len()
}

/// Orthonormal basis (`order × (order − rank)`) of `l_V^⊥`.
pub fn l0_basis<T: Scalar>(v: &SymmetricMatrix<T>, lambda_prime: &[usize], tol: T) -> Result<DMatrix<T>> {
    check_lambda_prime(v.order(), lambda_prime)?;
    let n = v.order();
    let k = krylov_basis(v, lambda_prime, tol)?;
    if k.rank == n {
        return Ok(DMatrix::zeros(n, 0));
    }
    let complement = DMatrix::identity(n, n) - &k.basis * k.basis.transpose();
    let eig = eigh(&SymmetricMatrix::new(complement)?)?;
    let cols: Vec<DVector<T>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > T::lit(0.5))
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

/// Outcome of [`l0_invariance_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0InvarianceReport {
    pub dim_l0: usize,
    /// Largest `|p_n(t)| / ‖ψ‖` over probes in `L₀`, times and `n ∈ Λ′`.
    pub max_contact_momentum: f64,
    /// Largest component of `ψ(t)` along `L₋`, relative to `‖ψ‖`.
    pub max_leak: f64,
    /// The same bounds hold for the probes scaled by ten.
    pub scaling_consistent: bool,
    /// A generic state outside `L₀` shows a contact momentum above `tol`.
    pub outside_probe_violates: bool,
    pub holds: bool,
}

/// Propagates random states of `L₀` over `t_grid` and checks that the
/// contact momenta stay at zero and the states stay in `L₀`.
pub fn l0_invariance_check<T: Scalar>(
    net: &OscillatorNetwork<T>,
    lambda_prime: &[usize],
    n_probes: usize,
    t_grid: &[T],
    tol: T,
    seed: u64,
) -> Result<L0InvarianceReport> {
    let n = net.order();
    check_lambda_prime(n, lambda_prime)?;
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time grid must be finite"));
    }
    let v = net.stiffness();
    let basis = l0_basis(v, lambda_prime, T::lit(DEFAULT_TOL))?;
    let krylov = krylov_basis(v, lambda_prime, T::lit(DEFAULT_TOL))?.basis;
    let dim = basis.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |len: usize| DVector::<T>::from_fn(len, |_, _| T::lit(StandardNormal.sample(&mut rng)));

    let measure = |psi: &PhaseState<T>| -> Result<(T, T)> {
        let norm = psi.norm();
        let mut contact = T::zero();
        let mut leak = T::zero();
        for &t in t_grid {
            let s = propagate(net, psi, t)?;
            for &i in lambda_prime {
                let r = s.p[i].abs() / norm;
                if r > contact {
                    contact = r;
                }
            }
            let l = ((krylov.transpose() * &s.q).norm_squared() + (krylov.transpose() * &s.p).norm_squared()).sqrt() / norm;
            if l > leak {
                leak = l;
            }
        }
        Ok((contact, leak))
    };

    let (mut contact, mut leak) = (T::zero(), T::zero());
    let mut scaling_consistent = true;
    if dim > 0 {
        for _ in 0..n_probes {
            let psi = PhaseState::new(&basis * gauss(dim), &basis * gauss(dim))?;
            let (c, l) = measure(&psi)?;
            let (c10, l10) = measure(&psi.scale(T::lit(10.0)))?;
            scaling_consistent &= (c10 <= tol) == (c <= tol) && (l10 - l).abs() <= T::lit(1e-12) + tol;
            if c > contact {
                contact = c;
            }
            if l > leak {
                leak = l;
            }
        }
    }

    let outside = PhaseState::new(gauss(n), gauss(n))?;
    let (outside_contact, _) = measure(&outside)?;
    let outside_probe_violates = outside_contact > tol;
    Ok(L0InvarianceReport {
        dim_l0: 2 * dim,
        max_contact_momentum: contact.as_f64(),
        max_leak: leak.as_f64(),
        scaling_consistent,
        outside_probe_violates,
        holds: contact <= tol && leak <= tol && scaling_consistent && outside_probe_violates,
    })
}

/// A test case with known structure: a block-diagonal `V` with random
/// orthogonal blocks, coordinates shuffled, and a random contact set.
#[derive(Debug, Clone)]
pub struct StructuredCase {
    pub v: SymmetricMatrix<f64>,
    pub lambda_prime: Vec<usize>,
    /// `order − rank` from the construction.
    pub expected_dim_neutral: usize,
}

/// Builds a structured case of the given order. Blocks without a contact
/// coordinate are invisible to the damping; blocks share an eigenvalue
/// with probability ¼, which makes the spectrum degenerate.
pub fn structured_case(order: usize, seed: u64) -> Result<StructuredCase> {
    if order < 2 {
        return Err(invalid("structured cases need order at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = Vec::new();
    let mut left = order;
    while left > 0 {
        let s = rng.random_range(1..=left.min(3));
        sizes.push(s);
        left -= s;
    }
    let shared = rng.random_range(0.0..1.0) < 0.25 && sizes.len() >= 2;
    let mut perm: Vec<usize> = (0..order).collect();
    for i in (1..order).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut v = DMatrix::<f64>::zeros(order, order);
    let mut lambda_prime = Vec::new();
    let mut expected_rank = 0;
    let mut start = 0;
    let mut used: Vec<f64> = Vec::new();
    for (b, &s) in sizes.iter().enumerate() {
        // well separated eigenvalues, optionally repeating one from block 0
        let mut eig: Vec<f64> = Vec::new();
        while eig.len() < s {
            let x: f64 = if shared && b == 1 && eig.is_empty() {
                used[0]
            } else {
                rng.random_range(1.0..20.0)
            };
            let clash = used.iter().chain(eig.iter()).any(|u| (u - x).abs() < 0.5);
            if !clash || (shared && b == 1 && eig.is_empty()) {
                eig.push(x);
            }
        }
        used.extend(&eig);
        let q = random_pd_with_spectrum::<f64>(s, 1.0, 2.0, rng.random())?;
        let basis = eigh(&q)?.eigenvectors;
        let block = &basis * DMatrix::from_diagonal(&DVector::from_vec(eig.clone())) * basis.transpose();
        for i in 0..s {
            for j in 0..s {
                v[(perm[start + i], perm[start + j])] = block[(i, j)];
            }
        }
        // touch the block at one coordinate, or leave it neutral
        if rng.random_range(0.0..1.0) < 0.6 || b == 0 {
            let local = rng.random_range(0..s);
            lambda_prime.push(perm[start + local]);
            expected_rank += s;
        }
        start += s;
    }
    lambda_prime.sort_unstable();
    Ok(StructuredCase {
        v: SymmetricMatrix::new(v)?,
        lambda_prime,
        expected_dim_neutral: order - expected_rank,
    })
}
