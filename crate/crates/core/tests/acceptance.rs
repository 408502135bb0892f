//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oscillator_pdmp::collisions::{ball_gain_matrix, contact_direction, one_dim_pair_update, two_ball_pair_update, CollisionModel};
use oscillator_pdmp::covariance::{
    damped_generator, default_ode_dt, deviation_functional, fixed_point_residual, gibbs_covariance, integrate_covariance, is_nonincreasing,
    mean_dynamics, energy_norm, MomentParams,
};
use oscillator_pdmp::dissipative::{analyze, structured_case, DEFAULT_TOL};
use oscillator_pdmp::hamiltonian::{energy, flow_matrix, propagate, symplectic_form, OscillatorNetwork, PhaseState};
use oscillator_pdmp::laws::{InputLaw, VelocityKind, VelocityLaw};
use oscillator_pdmp::linalg::{krylov_basis, random_pd_matrix, random_pd_with_spectrum, SymmetricMatrix};
use oscillator_pdmp::pdmp::{drift_check, pooled_covariance, simulate_continuous, EventSchedule};
use oscillator_pdmp::stationarity::{one_step_moment_shift, stationarity_residual, uniform_grid, GibbsSpec};

const ALPHA: f64 = 1.0 / 3.0;
const BETA: f64 = 2.0;
const FUZZ_CASES: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn chain3() -> OscillatorNetwork<f64> {
    OscillatorNetwork::chain(3, 1, 1.0, 1.0, 1.0).unwrap()
}

fn schedule(kind: VelocityKind) -> EventSchedule<f64> {
    EventSchedule::poisson(1.0, InputLaw::new(VelocityLaw::with_variance(kind, 1.0))).unwrap()
}

fn covariance_run(kind: VelocityKind) -> (f64, f64, usize) {
    let net = chain3();
    let model = CollisionModel::one_dim_elastic_alpha(ALPHA).unwrap();
    let seeds: Vec<u64> = (0..32).collect();
    let t_end = 2e4;
    let run = pooled_covariance(&net, &model, &schedule(kind), &PhaseState::zeros(3), t_end, 0.25, 0.1 * t_end, &seeds).unwrap();
    let target = gibbs_covariance(&net, BETA).unwrap().into_matrix();
    let events = run.per_seed.iter().map(|(_, _, e)| e).sum();
    (run.pooled.max_z_score(&target), run.pooled.max_diagonal_rel_error(&target), events)
}

fn gibbs_reproduction() -> Outcome {
    let (z, rel, events) = covariance_run(VelocityKind::Gaussian);
    Outcome {
        pass: z <= 5.0 && rel <= 0.05,
        detail: format!("max |z| = {z:.2} (≤ 5), max diagonal rel err = {rel:.4} (≤ 0.05), {events} collisions"),
    }
}

fn non_gaussian_universality() -> Outcome {
    let (z, rel, _) = covariance_run(VelocityKind::TwoPoint);
    let spec = GibbsSpec::new(chain3(), BETA).unwrap();
    let model = CollisionModel::one_dim_elastic_alpha(ALPHA).unwrap();
    let law = VelocityLaw::with_variance(VelocityKind::TwoPoint, 1.0);
    let shift = one_step_moment_shift(&spec, &model, &law, 1_000_000, 7).unwrap();
    Outcome {
        pass: z <= 5.0 && rel <= 0.05 && shift.m4_z() >= 4.0,
        detail: format!(
            "max |z| = {z:.2}, max diagonal rel err = {rel:.4}, fourth-moment shift {:.4} at {:.1} SE (≥ 4)",
            shift.m4_shift(),
            shift.m4_z()
        ),
    }
}

fn covariance_fixed_point() -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut monotone = true;
    let mut complete = true;
    let mut slowest = f64::INFINITY;
    for k in 0..20u64 {
        let order = 1 + (k as usize % 8);
        let v = random_pd_with_spectrum::<f64>(order, 0.5, 5.0, 1000 + k).unwrap();
        complete &= krylov_basis(&v, &[0], 1e-8).unwrap().rank == order;
        let net = OscillatorNetwork::new(order, 1, 1.0, v).unwrap();
        let p = MomentParams::new(1.0, ALPHA, 1.0, 1.0).unwrap();
        let r = fixed_point_residual(&net, &p).unwrap();
        worst_ratio = worst_ratio.max(r / 1e-12);
        let abscissa = damped_generator(&net, &p).complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        slowest = slowest.min(-abscissa);
        let traj = integrate_covariance(&DMatrix::zeros(2 * order, 2 * order), &net, &p, 100.0, default_ode_dt(&net, &p)).unwrap();
        monotone &= is_nonincreasing(&deviation_functional(&traj, &net, &p).unwrap(), 1e-10);
    }
    let net = chain3();
    let p = MomentParams::new(1.0, ALPHA, 1.0, 1.0).unwrap();
    let traj = integrate_covariance(&DMatrix::zeros(6, 6), &net, &p, 400.0, 0.01).unwrap();
    let target = gibbs_covariance(&net, BETA).unwrap().into_matrix();
    let chain_conv = (traj.last() - &target).amax();
    monotone &= is_nonincreasing(&deviation_functional(&traj, &net, &p).unwrap(), 1e-10);
    Outcome {
        pass: complete && worst_ratio <= 1.0 && chain_conv <= 1e-6 && monotone,
        detail: format!(
            "worst residual = {:.2e} (≤ 1e-12), chain ODE gap at t = 400: {chain_conv:.2e} (≤ 1e-6), F nonincreasing: {monotone}, slowest ensemble mean decay rate {slowest:.1e}",
            worst_ratio * 1e-12
        ),
    }
}

fn mean_decay() -> Outcome {
    let p = MomentParams::new(1.0, ALPHA, 1.0, 1.0).unwrap();
    let psi0 = PhaseState::from_slices(&[1.0, 2.0, -1.0], &[0.5, 0.0, 1.0]).unwrap();
    let traj = mean_dynamics(&chain3(), &p, &psi0, 200.0, 0.01).unwrap();
    let ratio = traj.states.last().unwrap().norm() / psi0.norm();

    let diag = OscillatorNetwork::new(2, 1, 1.0, SymmetricMatrix::from_diagonal(&[1.0, 4.0]).unwrap()).unwrap();
    let neutral = PhaseState::from_slices(&[0.0, 1.0], &[0.0, 0.5]).unwrap();
    let traj = mean_dynamics(&diag, &p, &neutral, 200.0, 0.01).unwrap();
    let n0 = energy_norm(&diag, &neutral);
    let drift = traj.states.iter().map(|s| (energy_norm(&diag, s) - n0).abs() / n0).fold(0.0, f64::max);
    Outcome {
        pass: ratio <= 1e-3 && drift <= 1e-6,
        detail: format!("complete chain |ψ(200)|/|ψ(0)| = {ratio:.2e} (≤ 1e-3), neutral norm drift = {drift:.2e} (≤ 1e-6)"),
    }
}

fn stationarity_identity() -> Outcome {
    let grid = uniform_grid(-5.0, 5.0, 200);
    let law = VelocityLaw::with_variance(VelocityKind::Gaussian, 1.0);
    let r = stationarity_residual(BETA, ALPHA, 1.0, &law, &grid).unwrap();
    let wrong = stationarity_residual(2.0 * BETA, ALPHA, 1.0, &law, &grid).unwrap();
    Outcome {
        pass: r <= 1e-10 && wrong >= 1e-2,
        detail: format!("Gaussian residual = {r:.2e} (≤ 1e-10), doubled β residual = {wrong:.3} (≥ 1e-2)"),
    }
}

fn drift_condition() -> Outcome {
    let net = OscillatorNetwork::chain(1, 1, 1.0, 0.0, 1.0).unwrap();
    let model = CollisionModel::one_dim_elastic_alpha(ALPHA).unwrap();
    let est = drift_check(&net, &model, &schedule(VelocityKind::Gaussian), 20, (1e3, 1e4), 10_000, 11).unwrap();
    let worst = est.iter().map(|e| e.relative_change).fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: est.len() == 20 && worst <= -0.05,
        detail: format!("worst relative one-step change over 20 probes = {worst:.4} (≤ -0.05)"),
    }
}

fn dissipative_genericity() -> Outcome {
    let mut complete = 0;
    let mut independent = 0;
    for seed in 0..100 {
        let r = analyze(&random_pd_matrix::<f64>(4, seed).unwrap(), &[0], DEFAULT_TOL).unwrap();
        complete += usize::from(r.complete);
        independent += usize::from(r.rationally_independent_heuristic);
    }
    let mut consistent = 0;
    for k in 0..50u64 {
        let case = structured_case(2 + (k as usize % 7), 500 + k).unwrap();
        let r = analyze(&case.v, &case.lambda_prime, DEFAULT_TOL).unwrap();
        consistent += usize::from(r.consistent && r.dim_l0 == 2 * case.expected_dim_neutral);
    }
    Outcome {
        pass: complete == 100 && consistent == 50,
        detail: format!(
            "{complete}/100 random order-4 complete ({independent}/100 frequency-independent), {consistent}/50 structured cases consistent"
        ),
    }
}

fn random_network(rng: &mut ChaCha8Rng) -> OscillatorNetwork<f64> {
    let order = rng.random_range(1..=6);
    let v = random_pd_with_spectrum::<f64>(order, 0.2, 5.0, rng.random()).unwrap();
    OscillatorNetwork::new(order, 1, rng.random_range(0.5..2.0), v).unwrap()
}

fn random_state(order: usize, rng: &mut ChaCha8Rng) -> PhaseState<f64> {
    let q = DVector::from_fn(order, |_, _| rng.random_range(-3.0..3.0));
    let p = DVector::from_fn(order, |_, _| rng.random_range(-3.0..3.0));
    PhaseState::new(q, p).unwrap()
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures: Vec<(&str, usize)> = Vec::new();
    let mut count = |name: &'static str, ok: bool| {
        if !ok {
            match failures.iter_mut().find(|(n, _)| *n == name) {
                Some(f) => f.1 += 1,
                None => failures.push((name, 1)),
            }
        }
    };

    for _ in 0..FUZZ_CASES {
        let net = random_network(&mut rng);
        let n = net.order();
        let psi = random_state(n, &mut rng);
        let t: f64 = rng.random_range(0.0..100.0);
        let s = rng.random_range(0.0..100.0);

        let h0 = energy(&net, &psi).unwrap();
        let h1 = energy(&net, &propagate(&net, &psi, t).unwrap()).unwrap();
        count("energy conservation", (h1 - h0).abs() <= 1e-10 * h0.max(1.0));

        let phi = flow_matrix(&net, t);
        let j = symplectic_form::<f64>(n);
        count("symplecticity", (phi.transpose() * &j * &phi - &j).amax() <= 1e-9);

        let lhs = flow_matrix(&net, t + s);
        let rhs = &phi * flow_matrix(&net, s);
        count("group law", (lhs - rhs).amax() <= 1e-9);

        let (m1, m2): (f64, f64) = (rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
        let (v1, v2): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (w1, w2) = one_dim_pair_update(m1, m2, v1, v2);
        let (mom, e) = (m1 * v1 + m2 * v2, m1 * v1 * v1 + m2 * v2 * v2);
        let ok1 = (m1 * w1 + m2 * w2 - mom).abs() <= 1e-12 * (m1 * v1.abs() + m2 * v2.abs()).max(1.0)
            && (m1 * w1 * w1 + m2 * w2 * w2 - e).abs() <= 1e-12 * e.max(1.0);
        let phi_c = rng.random_range(0.0..std::f64::consts::TAU);
        let a = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let b = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (a1, b1) = two_ball_pair_update(m1, m2, &a, &b, phi_c).unwrap();
        let mom2 = a * m1 + b * m2;
        let e2 = m1 * a.norm_squared() + m2 * b.norm_squared();
        let ok2 = (a1 * m1 + b1 * m2 - mom2).amax() <= 1e-12 * (m1 + m2) * 5.0
            && (m1 * a1.norm_squared() + m2 * b1.norm_squared() - e2).abs() <= 1e-12 * e2.max(1.0);
        count("collision conservation", ok1 && ok2);

        let alpha: f64 = rng.random_range(0.0..1.0);
        let g = ball_gain_matrix(alpha, phi_c);
        let mut eig: Vec<f64> = g.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let normal = g * contact_direction(phi_c) - contact_direction(phi_c) * alpha;
        count(
            "gain spectrum",
            (eig[0] - alpha).abs() <= 1e-14 && (eig[1] - 1.0).abs() <= 1e-14 && normal.amax() <= 1e-14,
        );

        let model = CollisionModel::one_dim_elastic_alpha(rng.random_range(0.0..0.9)).unwrap();
        let seed: u64 = rng.random();
        let sched = schedule(VelocityKind::Gaussian);
        let x = simulate_continuous(&net, &model, &sched, &psi, 5.0, 0.5, seed).unwrap();
        let y = simulate_continuous(&net, &model, &sched, &psi, 5.0, 0.5, seed).unwrap();
        count("determinism", x.states == y.states && x.event_times == y.event_times);
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("6 suites × {FUZZ_CASES} cases, 0 failures")
    } else {
        format!("failures: {failures:?}")
    };
    Outcome { pass, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    // `cargo test` passes harness flags; only `--list` needs an answer
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 8] = [
        ("gibbs covariance reproduction", gibbs_reproduction),
        ("non-Gaussian universality", non_gaussian_universality),
        ("covariance ODE fixed point", covariance_fixed_point),
        ("mean decay", mean_decay),
        ("stationarity identity", stationarity_identity),
        ("drift condition", drift_condition),
        ("dissipative genericity", dissipative_genericity),
        ("property suites", property_suites),
    ];
    let mut all = true;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        all &= out.pass;
        println!(
            "{} {}. {name}: {} [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            k + 1,
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
