//! Free flow interrupted by collisions at random times.
//!
//! Between collisions the state follows the exact Hamiltonian flow; at a
//! collision only the momentum of particle 1 jumps. Waiting times and
//! collision inputs come from one seeded stream, drawn in the order
//! `τ₁, ξ₁, τ₂, ξ₂, …`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::collisions::{apply_jump, CollisionInput, CollisionModel};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{energy, propagate, OscillatorNetwork, PhaseState};
use crate::laws::{InputLaw, TauLaw};
use crate::linalg::numerical_rank;
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::stats::{pool_replicates, MomentAccumulator, PooledEstimate};

/// Relative finite-difference step of the Jacobian probe.
pub const DEFAULT_PROBE_STEP: f64 = 1e-5;
/// Singular values below this fraction of the largest do not count towards
/// the Jacobian rank.
pub const RANK_REL_TOL: f64 = 1e-6;

/// Laws of the waiting times and of the collision inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSchedule<T: Scalar> {
    pub tau: TauLaw<T>,
    pub inputs: InputLaw<T>,
}

impl<T: Scalar> EventSchedule<T> {
    pub fn new(tau: TauLaw<T>, inputs: InputLaw<T>) -> Result<Self> {
        tau.validate()?;
        inputs.validate()?;
        if !tau.mean().is_finite() {
            return Err(invalid("waiting-time law must have a finite mean"));
        }
        Ok(Self { tau, inputs })
    }

    /// Exponential waiting times with the given rate.
    pub fn poisson(rate: T, inputs: InputLaw<T>) -> Result<Self> {
        Self::new(TauLaw::Exponential { rate }, inputs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, model: &CollisionModel<T>, rng: &mut R) -> Collision<T> {
        let wait = self.tau.sample(rng);
        let input = model.sample_input(&self.inputs, rng);
        Collision { wait, input }
    }

    /// Endless stream of collisions for `seed`.
    pub fn events<'a>(&'a self, model: &'a CollisionModel<T>, seed: u64) -> EventStream<'a, T> {
        EventStream {
            schedule: self,
            model,
            rng: rng_for(seed, 0),
        }
    }
}

/// One collision: the flow time since the previous one and its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Collision<T: Scalar> {
    pub wait: T,
    pub input: CollisionInput<T>,
}

pub struct EventStream<'a, T: Scalar> {
    schedule: &'a EventSchedule<T>,
    model: &'a CollisionModel<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Iterator for EventStream<'_, T> {
    type Item = Collision<T>;

    fn next(&mut self) -> Option<Collision<T>> {
        Some(self.schedule.sample(self.model, &mut self.rng))
    }
}

/// States right after each collision, starting with `ψ₀`.
#[derive(Debug, Clone)]
pub struct EmbeddedChain<T: Scalar> {
    pub states: Vec<PhaseState<T>>,
    /// `t₁ < t₂ < …` (ties allowed for zero waits); one fewer than `states`.
    pub jump_times: Vec<T>,
    pub seed: Option<u64>,
}

fn check_setup<T: Scalar>(net: &OscillatorNetwork<T>, model: &CollisionModel<T>, psi0: &PhaseState<T>) -> Result<()> {
    model.check_dim(net.dim())?;
    if psi0.order() != net.order() {
        return Err(Error::DimensionMismatch {
            expected: net.order(),
            got: psi0.order(),
        });
    }
    if !psi0.is_finite() {
        return Err(invalid("initial state has non-finite entries"));
    }
    Ok(())
}

/// Applies one collision to a state that has already been flowed to the
/// collision instant.
pub fn collide<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    state: &mut PhaseState<T>,
    input: &CollisionInput<T>,
    step: usize,
) -> Result<()> {
    let p1 = state.contact_momentum(net.dim());
    let j = apply_jump(model, input, &p1, net.mass())?;
    state.set_contact_momentum(&j);
    if !state.is_finite() {
        return Err(Error::NonFinite { step });
    }
    Ok(())
}

/// Embedded chain driven by an explicit list of collisions.
pub fn embedded_from_events<T: Scalar, I>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    psi0: &PhaseState<T>,
    events: I,
) -> Result<EmbeddedChain<T>>
where
    I: IntoIterator<Item = Collision<T>>,
{
    check_setup(net, model, psi0)?;
    let mut states = vec![psi0.clone()];
    let mut jump_times = Vec::new();
    let mut t = T::zero();
    let mut state = psi0.clone();
    for (i, ev) in events.into_iter().enumerate() {
        if !(ev.wait >= T::zero()) {
            return Err(invalid(format!("negative waiting time {}", ev.wait)));
        }
        state = propagate(net, &state, ev.wait)?;
        if !state.is_finite() {
            return Err(Error::NonFinite { step: i + 1 });
        }
        collide(net, model, &mut state, &ev.input, i + 1)?;
        t += ev.wait;
        jump_times.push(t);
        states.push(state.clone());
    }
    Ok(EmbeddedChain {
        states,
        jump_times,
        seed: None,
    })
}

pub fn simulate_embedded<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    psi0: &PhaseState<T>,
    n_steps: usize,
    seed: u64,
) -> Result<EmbeddedChain<T>> {
    if n_steps == 0 {
        return Err(invalid("n_steps must be at least 1"));
    }
    let mut chain = embedded_from_events(net, model, psi0, sched.events(model, seed).take(n_steps))?;
    chain.seed = Some(seed);
    Ok(chain)
}

/// Energy added by replacing the contact momentum `p` with `j`.
pub fn jump_energy_change<T: Scalar>(p: &DVector<T>, j: &DVector<T>, mass: T) -> T {
    (j.norm_squared() - p.norm_squared()) / (T::lit(2.0) * mass)
}

/// Uniformly sampled path of the process.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Scalar> {
    pub sample_times: Vec<T>,
    pub states: Vec<PhaseState<T>>,
    /// Collisions that happened up to the last sample time.
    pub events: usize,
    pub event_times: Vec<T>,
    pub seed: Option<u64>,
}

impl<T: Scalar> Trajectory<T> {
    /// CSV with header `t,q_1..q_n,p_1..p_n`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.order());
        writeln!(w, "{}", trajectory_csv_header(n))?;
        for (t, s) in self.sample_times.iter().zip(&self.states) {
            write_csv_row(&mut w, *t, s)?;
        }
        Ok(())
    }
}

pub fn trajectory_csv_header(order: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=order).map(|i| format!("q_{i}")));
    cols.extend((1..=order).map(|i| format!("p_{i}")));
    cols.join(",")
}

pub fn write_csv_row<T: Scalar, W: Write>(w: &mut W, t: T, s: &PhaseState<T>) -> Result<()> {
    write!(w, "{:.16e}", t.as_f64())?;
    for x in s.q.iter().chain(s.p.iter()) {
        write!(w, ",{:.16e}", x.as_f64())?;
    }
    writeln!(w)?;
    Ok(())
}

fn sample_count<T: Scalar>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !(dt <= t_end) || !t_end.is_finite() {
        return Err(invalid(format!("need 0 < sample_dt ≤ t_end, got dt={dt}, t_end={t_end}")));
    }
    Ok((t_end / dt + T::lit(1e-9)).floor().as_f64() as usize + 1)
}

/// Walks the path sampled at `k·dt`, calling `visit(t, ψ(t))` for every
/// sample. A collision at exactly a sample time is included in that sample.
/// Returns the times of the collisions that were applied.
pub fn sample_path_from_events<T: Scalar, I, F>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    dt: T,
    events: I,
    mut visit: F,
) -> Result<Vec<T>>
where
    I: IntoIterator<Item = Collision<T>>,
    F: FnMut(T, &PhaseState<T>) -> Result<()>,
{
    check_setup(net, model, psi0)?;
    let n_samples = sample_count(t_end, dt)?;
    let mut events = events.into_iter();
    let mut anchor_time = T::zero();
    let mut modal = net.to_modal(psi0);
    let mut pending = events.next();
    let mut next_time = match &pending {
        Some(ev) => ev.wait,
        None => T::lit(f64::INFINITY),
    };
    let mut event_times = Vec::new();
    for k in 0..n_samples {
        let s = T::from_usize_lossy(k) * dt;
        while next_time <= s {
            let ev = pending.take().expect("finite event time has an event");
            if !(ev.wait >= T::zero()) {
                return Err(invalid(format!("negative waiting time {}", ev.wait)));
            }
            let mut state = net.flow_modal(&modal, next_time - anchor_time);
            collide(net, model, &mut state, &ev.input, event_times.len() + 1)?;
            anchor_time = next_time;
            modal = net.to_modal(&state);
            event_times.push(anchor_time);
            pending = events.next();
            next_time = match &pending {
                Some(ev) => anchor_time + ev.wait,
                None => T::lit(f64::INFINITY),
            };
        }
        let state = net.flow_modal(&modal, s - anchor_time);
        if !state.is_finite() {
            return Err(Error::NonFinite { step: event_times.len() });
        }
        visit(s, &state)?;
    }
    Ok(event_times)
}

/// Streams the sampled path of a seeded run to `visit`; returns the number
/// of collisions.
#[allow(clippy::too_many_arguments)]
pub fn simulate_streaming<T: Scalar, F>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    sample_dt: T,
    seed: u64,
    visit: F,
) -> Result<usize>
where
    F: FnMut(T, &PhaseState<T>) -> Result<()>,
{
    let times = sample_path_from_events(net, model, psi0, t_end, sample_dt, sched.events(model, seed), visit)?;
    Ok(times.len())
}

pub fn simulate_continuous<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    sample_dt: T,
    seed: u64,
) -> Result<Trajectory<T>> {
    let mut traj = trajectory_from_events(net, model, psi0, t_end, sample_dt, sched.events(model, seed))?;
    traj.seed = Some(seed);
    Ok(traj)
}

pub fn trajectory_from_events<T: Scalar, I>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    sample_dt: T,
    events: I,
) -> Result<Trajectory<T>>
where
    I: IntoIterator<Item = Collision<T>>,
{
    let mut sample_times = Vec::new();
    let mut states = Vec::new();
    let event_times = sample_path_from_events(net, model, psi0, t_end, sample_dt, events, |t, s| {
        sample_times.push(t);
        states.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        sample_times,
        states,
        events: event_times.len(),
        event_times,
        seed: None,
    })
}

/// Trapezoidal time average of `f` over the samples at or after `burn_in`.
pub fn time_average<T: Scalar, F>(traj: &Trajectory<T>, f: F, burn_in: T) -> Result<T>
where
    F: Fn(&PhaseState<T>) -> T,
{
    let start = traj.sample_times.partition_point(|t| *t < burn_in);
    let times = &traj.sample_times[start..];
    if times.len() < 2 {
        return Err(invalid("averaging window holds fewer than two samples"));
    }
    let values: Vec<T> = traj.states[start..].iter().map(f).collect();
    let mut integral = T::zero();
    for i in 1..times.len() {
        integral += (values[i] + values[i - 1]) * (times[i] - times[i - 1]) * T::lit(0.5);
    }
    Ok(integral / (times[times.len() - 1] - times[0]))
}

/// Numerical rank of the Jacobian of `(t₁, ξ₁, …, t_m, ξ_m) ↦ ψ_m` at
/// `point`, by forward differences with steps `h·(1 + |x_i|)`.
pub fn jacobian_rank_probe<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    psi0: &PhaseState<T>,
    m: usize,
    point: &[T],
    h: T,
) -> Result<usize> {
    if matches!(model, CollisionModel::ContractiveAffine { .. }) {
        return Err(invalid("rank probe needs the one- or two-dimensional elastic model"));
    }
    if !(h > T::zero()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    check_setup(net, model, psi0)?;
    let block = model.input_dim() + 1;
    if point.len() != m * block {
        return Err(Error::DimensionMismatch {
            expected: m * block,
            got: point.len(),
        });
    }
    if m == 0 {
        return Ok(0);
    }
    let end_state = |x: &[T]| -> Result<DVector<T>> {
        let events = x
            .chunks(block)
            .map(|c| {
                Ok(Collision {
                    wait: c[0],
                    input: CollisionInput::from_flat(model, &c[1..])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut state = psi0.clone();
        for (i, ev) in events.iter().enumerate() {
            state = propagate(net, &state, ev.wait)?;
            collide(net, model, &mut state, &ev.input, i + 1)?;
        }
        Ok(state.to_vector())
    };
    let base = end_state(point)?;
    let mut jac = DMatrix::zeros(base.len(), point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        let step = h * (T::one() + point[i].abs());
        x[i] = point[i] + step;
        let col = (end_state(&x)? - &base) / step;
        jac.set_column(i, &col);
        x[i] = point[i];
    }
    Ok(numerical_rank(&jac, T::lit(RANK_REL_TOL)))
}

/// Monte Carlo estimate of `E H(ψ₁) − H(ψ)` for one starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub energy: f64,
    pub mean_change: f64,
    pub std_error: f64,
    /// `mean_change / energy`.
    pub relative_change: f64,
}

pub fn one_step_energy_change<T: Scalar, R: Rng + ?Sized>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    psi: &PhaseState<T>,
    n_draws: usize,
    rng: &mut R,
) -> Result<DriftEstimate> {
    check_setup(net, model, psi)?;
    if n_draws < 2 {
        return Err(invalid("need at least two draws"));
    }
    let h0 = energy(net, psi)?.as_f64();
    let mut changes = Vec::with_capacity(n_draws);
    for i in 0..n_draws {
        let ev = sched.sample(model, rng);
        let mut state = propagate(net, psi, ev.wait)?;
        collide(net, model, &mut state, &ev.input, i + 1)?;
        changes.push(energy(net, &state)?.as_f64() - h0);
    }
    let (mean, se) = crate::stats::mean_and_std_error(&changes);
    Ok(DriftEstimate {
        energy: h0,
        mean_change: mean,
        std_error: se,
        relative_change: mean / h0,
    })
}

/// Random state with energy exactly `target`.
pub fn random_state_with_energy<T: Scalar, R: Rng + ?Sized>(
    net: &OscillatorNetwork<T>,
    target: T,
    rng: &mut R,
) -> Result<PhaseState<T>> {
    let n = net.order();
    loop {
        let mut draw = || T::lit(StandardNormal.sample(rng));
        let q = DVector::from_fn(n, |_, _| draw());
        let p = DVector::from_fn(n, |_, _| draw());
        let psi = PhaseState::new(q, p)?;
        let h = energy(net, &psi)?;
        if h > T::lit(1e-12) {
            return Ok(psi.scale((target / h).sqrt()));
        }
    }
}

/// One-step drift at `n_probes` random states with energies uniform in
/// `energy_range`.
pub fn drift_check<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    n_probes: usize,
    energy_range: (T, T),
    n_draws: usize,
    seed: u64,
) -> Result<Vec<DriftEstimate>> {
    let (lo, hi) = energy_range;
    if !(lo > T::zero()) || !(hi >= lo) || !hi.is_finite() {
        return Err(invalid("energy range must satisfy 0 < low ≤ high"));
    }
    let mut probe_rng = rng_for(seed, 1);
    let mut draw_rng = rng_for(seed, 2);
    (0..n_probes)
        .map(|_| {
            let e = T::lit(probe_rng.random_range(lo.as_f64()..=hi.as_f64()));
            let psi = random_state_with_energy(net, e, &mut probe_rng)?;
            one_step_energy_change(net, model, sched, &psi, n_draws, &mut draw_rng)
        })
        .collect()
}

/// Sample covariance of `ψ` on the grid after `burn_in`, for one seed.
#[allow(clippy::too_many_arguments)]
pub fn empirical_moments<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    sample_dt: T,
    burn_in: T,
    seed: u64,
) -> Result<(MomentAccumulator<T>, usize)> {
    if !(burn_in >= T::zero()) || !(burn_in < t_end) {
        return Err(invalid("burn-in must lie in [0, t_end)"));
    }
    let mut acc = MomentAccumulator::new(net.phase_dim());
    let events = simulate_streaming(net, model, sched, psi0, t_end, sample_dt, seed, |t, s| {
        if t >= burn_in {
            acc.push(&s.to_vector());
        }
        Ok(())
    })?;
    Ok((acc, events))
}

/// Per-seed accumulators and the pooled covariance across seeds, run in
/// parallel.
pub struct PooledRun<T: Scalar> {
    pub per_seed: Vec<(u64, MomentAccumulator<T>, usize)>,
    pub pooled: PooledEstimate<T>,
}

#[allow(clippy::too_many_arguments)]
pub fn pooled_covariance<T: Scalar>(
    net: &OscillatorNetwork<T>,
    model: &CollisionModel<T>,
    sched: &EventSchedule<T>,
    psi0: &PhaseState<T>,
    t_end: T,
    sample_dt: T,
    burn_in: T,
    seeds: &[u64],
) -> Result<PooledRun<T>> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            empirical_moments(net, model, sched, psi0, t_end, sample_dt, burn_in, seed).map(|(a, e)| (seed, a, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let covs = per_seed
        .iter()
        .map(|(_, a, _)| a.covariance())
        .collect::<Result<Vec<_>>>()?;
    let pooled = pool_replicates(&covs)?;
    Ok(PooledRun { per_seed, pooled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::VelocityLaw;
    use crate::linalg::SymmetricMatrix;
    use proptest::prelude::*;

    fn single() -> OscillatorNetwork<f64> {
        OscillatorNetwork::new(1, 1, 1.0, SymmetricMatrix::identity(1).unwrap()).unwrap()
    }

    fn chain3() -> OscillatorNetwork<f64> {
        OscillatorNetwork::chain(3, 1, 1.0, 1.0, 1.0).unwrap()
    }

    fn sched() -> EventSchedule<f64> {
        EventSchedule::poisson(1.0, InputLaw::default()).unwrap()
    }

    fn elastic() -> CollisionModel<f64> {
        CollisionModel::one_dim_elastic_alpha(1.0 / 3.0).unwrap()
    }

    #[test]
    fn zero_wait_full_transfer() {
        let net = single();
        let model = CollisionModel::one_dim_elastic_alpha(0.0).unwrap();
        let psi0 = PhaseState::from_slices(&[0.7], &[-2.0]).unwrap();
        let ev = Collision {
            wait: 0.0,
            input: CollisionInput::Velocity(1.5),
        };
        let chain = embedded_from_events(&net, &model, &psi0, vec![ev]).unwrap();
        assert_eq!(chain.states[1].p[0], 1.5);
        assert_eq!(chain.states[1].q[0], 0.7);
        assert_eq!(chain.jump_times, vec![0.0]);
    }

    #[test]
    fn per_step_energy_identity() {
        let net = chain3();
        let model = elastic();
        let psi0 = PhaseState::from_slices(&[1.0, -0.5, 0.2], &[0.3, 0.0, -1.0]).unwrap();
        let events: Vec<_> = sched().events(&model, 11).take(50).collect();
        let chain = embedded_from_events(&net, &model, &psi0, events.clone()).unwrap();
        for (m, ev) in events.iter().enumerate() {
            let flowed = propagate(&net, &chain.states[m], ev.wait).unwrap();
            let next = &chain.states[m + 1];
            let dh = energy(&net, next).unwrap() - energy(&net, &flowed).unwrap();
            let expect = jump_energy_change(&flowed.contact_momentum(1), &next.contact_momentum(1), 1.0);
            assert!((dh - expect).abs() < 1e-12 * (1.0 + dh.abs()));
            assert_eq!(flowed.q, next.q);
            assert_eq!(flowed.p.rows(1, 2), next.p.rows(1, 2));
        }
        let sum: f64 = events.iter().map(|e| e.wait).sum();
        assert!((chain.jump_times[49] - sum).abs() < 1e-12 * sum);
    }

    #[test]
    fn seeded_runs_repeat() {
        let net = chain3();
        let psi0 = PhaseState::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        let a = simulate_embedded(&net, &elastic(), &sched(), &psi0, 100, 5).unwrap();
        let b = simulate_embedded(&net, &elastic(), &sched(), &psi0, 100, 5).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.jump_times, b.jump_times);
        let c = simulate_embedded(&net, &elastic(), &sched(), &psi0, 100, 6).unwrap();
        assert_ne!(a.jump_times, c.jump_times);
        assert!(simulate_embedded(&net, &elastic(), &sched(), &psi0, 0, 5).is_err());
    }

    #[test]
    fn overflow_is_reported_with_step() {
        let net = single();
        let model = elastic();
        let psi0 = PhaseState::zeros(1);
        let events = vec![
            Collision { wait: 0.1, input: CollisionInput::Velocity(1.0) },
            Collision { wait: 0.1, input: CollisionInput::Velocity(f64::INFINITY) },
            Collision { wait: 0.1, input: CollisionInput::Velocity(1.0) },
        ];
        match embedded_from_events(&net, &model, &psi0, events) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_events_is_free_flow() {
        let net = chain3();
        let psi0 = PhaseState::from_slices(&[1.0, 0.0, -1.0], &[0.0, 0.5, 0.0]).unwrap();
        let traj = trajectory_from_events(&net, &elastic(), &psi0, 10.0, 0.5, Vec::new()).unwrap();
        assert_eq!(traj.sample_times.len(), 21);
        assert_eq!(traj.events, 0);
        for (t, s) in traj.sample_times.iter().zip(&traj.states) {
            let exact = propagate(&net, &psi0, *t).unwrap();
            assert!((s.to_vector() - exact.to_vector()).amax() < 1e-12);
        }
    }

    #[test]
    fn sample_at_jump_includes_jump() {
        let net = single();
        let model = CollisionModel::one_dim_elastic_alpha(0.0).unwrap();
        let psi0 = PhaseState::from_slices(&[1.0], &[0.0]).unwrap();
        let events = vec![Collision { wait: 0.5, input: CollisionInput::Velocity(3.0) }];
        let traj = trajectory_from_events(&net, &model, &psi0, 1.0, 0.25, events).unwrap();
        assert_eq!(traj.sample_times[2], 0.5);
        assert_eq!(traj.states[2].p[0], 3.0);
        assert_eq!(traj.states[2].q[0], 0.5f64.cos());
        assert_eq!(traj.events, 1);
    }

    #[test]
    fn consecutive_zero_waits() {
        let net = single();
        let model = CollisionModel::one_dim_elastic_alpha(0.0).unwrap();
        let psi0 = PhaseState::from_slices(&[1.0], &[0.0]).unwrap();
        let events = vec![
            Collision { wait: 0.3, input: CollisionInput::Velocity(1.0) },
            Collision { wait: 0.0, input: CollisionInput::Velocity(2.0) },
        ];
        let traj = trajectory_from_events(&net, &model, &psi0, 0.5, 0.5, events).unwrap();
        assert_eq!(traj.event_times, vec![0.3, 0.3]);
        let expect = propagate(&net, &PhaseState::from_slices(&[0.3f64.cos()], &[2.0]).unwrap(), 0.2).unwrap();
        assert!((traj.states[1].to_vector() - expect.to_vector()).amax() < 1e-14);
    }

    #[test]
    fn bad_sampling_arguments() {
        let net = single();
        let psi0 = PhaseState::zeros(1);
        assert!(simulate_continuous(&net, &elastic(), &sched(), &psi0, 1.0, 0.0, 1).is_err());
        assert!(simulate_continuous(&net, &elastic(), &sched(), &psi0, 1.0, 2.0, 1).is_err());
        assert!(simulate_continuous(&net, &elastic(), &sched(), &PhaseState::zeros(2), 1.0, 0.1, 1).is_err());
    }

    #[test]
    fn poisson_event_counts() {
        let net = single();
        let psi0 = PhaseState::zeros(1);
        let (rate, horizon) = (2.0, 50.0);
        let schedule = EventSchedule::poisson(rate, InputLaw::default()).unwrap();
        let counts: Vec<f64> = (0..50)
            .map(|seed| {
                simulate_continuous(&net, &elastic(), &schedule, &psi0, horizon, 1.0, seed)
                    .unwrap()
                    .events as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let lt = rate * horizon;
        assert!((mean - lt).abs() <= 3.0 * lt.sqrt(), "mean count {mean}");
    }

    #[test]
    fn time_average_of_constant_and_errors() {
        let traj = simulate_continuous(&chain3(), &elastic(), &sched(), &PhaseState::zeros(3), 10.0, 0.1, 3).unwrap();
        let avg = time_average(&traj, |_| 2.5, 1.0).unwrap();
        assert!((avg - 2.5).abs() < 1e-12);
        assert!(time_average(&traj, |_| 1.0, 10.0).is_err());
    }

    #[test]
    fn equipartition_and_centred_momentum() {
        // α = 1/3, σ² = 1, M = 1 gives β = 2
        let net = single();
        let traj = simulate_continuous(&net, &elastic(), &sched(), &PhaseState::zeros(1), 20_000.0, 0.25, 17).unwrap();
        let h = time_average(&traj, |s| energy(&net, s).unwrap(), 2000.0).unwrap();
        assert!((h - 0.5).abs() < 0.05, "mean energy {h}");
        let p = time_average(&traj, |s| s.p[0], 2000.0).unwrap();
        assert!(p.abs() < 0.05, "mean momentum {p}");
    }

    #[test]
    fn rank_probe_single_oscillator() {
        let net = single();
        let psi0 = PhaseState::from_slices(&[1.0], &[0.5]).unwrap();
        let rank = jacobian_rank_probe(&net, &elastic(), &psi0, 1, &[0.7, 0.3], DEFAULT_PROBE_STEP).unwrap();
        assert_eq!(rank, 2);
        assert_eq!(jacobian_rank_probe(&net, &elastic(), &psi0, 0, &[], DEFAULT_PROBE_STEP).unwrap(), 0);
        assert!(jacobian_rank_probe(&net, &elastic(), &psi0, 1, &[0.7], DEFAULT_PROBE_STEP).is_err());
        let affine = CollisionModel::contractive_affine(DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!(jacobian_rank_probe(&net, &affine, &psi0, 1, &[0.7, 0.3], DEFAULT_PROBE_STEP).is_err());
    }

    #[test]
    fn rank_probe_chain_reaches_full_rank() {
        let net = chain3();
        let psi0 = PhaseState::from_slices(&[0.3, -0.2, 0.5], &[0.1, 0.4, -0.3]).unwrap();
        let point: Vec<f64> = (0..12).map(|i| 0.4 + 0.37 * i as f64 % 1.3).collect();
        let rank = jacobian_rank_probe(&net, &elastic(), &psi0, 6, &point, DEFAULT_PROBE_STEP).unwrap();
        assert_eq!(rank, 6);
    }

    #[test]
    fn rank_probe_two_dim_ball() {
        let net = OscillatorNetwork::chain(1, 2, 1.0, 0.0, 1.0).unwrap();
        let model = CollisionModel::two_dim_ball_alpha(0.2).unwrap();
        let psi0 = PhaseState::from_slices(&[0.3, -0.2], &[0.1, 0.4]).unwrap();
        let point = [0.5, 0.3, 0.2, -0.1, 0.9, 1.1, -0.4, 0.6];
        let rank = jacobian_rank_probe(&net, &model, &psi0, 2, &point, DEFAULT_PROBE_STEP).unwrap();
        assert_eq!(rank, 4);
    }

    #[test]
    fn drift_negative_on_chain() {
        let net = chain3();
        let est = drift_check(&net, &elastic(), &sched(), 5, (1e3, 1e4), 10_000, 9).unwrap();
        for e in est {
            assert!(e.energy >= 1e3 && e.energy <= 1e4);
            assert!(e.mean_change + 4.0 * e.std_error < 0.0, "{e:?}");
        }
    }

    #[test]
    fn random_state_has_target_energy() {
        let net = chain3();
        let mut rng = rng_for(1, 0);
        let psi = random_state_with_energy(&net, 123.0, &mut rng).unwrap();
        assert!((energy(&net, &psi).unwrap() - 123.0).abs() < 1e-10);
    }

    #[test]
    fn csv_layout() {
        let traj = simulate_continuous(&chain3(), &elastic(), &sched(), &PhaseState::zeros(3), 1.0, 0.5, 3).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,q_1,q_2,q_3,p_1,p_2,p_3");
        let row: Vec<f64> = lines.nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], 0.5);
        assert_eq!(row[1..4], traj.states[1].q.as_slice()[..]);
    }

    #[test]
    fn empirical_moments_validate_burn_in() {
        let net = single();
        let r = empirical_moments(&net, &elastic(), &sched(), &PhaseState::zeros(1), 10.0, 0.5, 10.0, 1);
        assert!(r.is_err());
    }

    #[test]
    fn f32_path_runs() {
        let net = OscillatorNetwork::<f32>::chain(2, 1, 1.0, 1.0, 1.0).unwrap();
        let model = CollisionModel::<f32>::one_dim_elastic_alpha(0.5).unwrap();
        let s = EventSchedule::<f32>::poisson(1.0, InputLaw::new(VelocityLaw::standard())).unwrap();
        let traj = simulate_continuous(&net, &model, &s, &PhaseState::zeros(2), 5.0, 0.5, 2).unwrap();
        assert_eq!(traj.states.len(), 11);
        assert!(traj.states.iter().all(|s| s.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn energy_constant_between_events(seed in 0u64..10_000) {
            let net = chain3();
            let psi0 = PhaseState::from_slices(&[1.0, 0.0, 0.5], &[0.0, -1.0, 0.0]).unwrap();
            let traj = simulate_continuous(&net, &elastic(), &sched(), &psi0, 20.0, 0.1, seed).unwrap();
            let mut ev = 0;
            for i in 1..traj.states.len() {
                let t1 = traj.sample_times[i];
                let crossed = traj.event_times[ev..].iter().take_while(|&&e| e <= t1).count();
                if crossed == 0 {
                    let h0 = energy(&net, &traj.states[i - 1]).unwrap();
                    let h1 = energy(&net, &traj.states[i]).unwrap();
                    prop_assert!((h1 - h0).abs() <= 1e-9 * h0.max(1e-300) + 1e-15);
                }
                ev += crossed;
            }
        }

        #[test]
        fn jumps_touch_only_contact_momentum(seed in 0u64..10_000) {
            let net = OscillatorNetwork::chain(2, 2, 1.5, 1.0, 0.5).unwrap();
            let model = CollisionModel::two_dim_ball_alpha(0.4).unwrap();
            let psi0 = PhaseState::from_slices(&[1.0, 0.0, 0.5, 0.1], &[0.0, -1.0, 0.0, 0.2]).unwrap();
            let events: Vec<_> = sched().events(&model, seed).take(20).collect();
            let chain = embedded_from_events(&net, &model, &psi0, events.clone()).unwrap();
            for (m, ev) in events.iter().enumerate() {
                let flowed = propagate(&net, &chain.states[m], ev.wait).unwrap();
                prop_assert_eq!(&flowed.q, &chain.states[m + 1].q);
                prop_assert_eq!(flowed.p.rows(2, 2), chain.states[m + 1].p.rows(2, 2));
            }
        }
    }
}
