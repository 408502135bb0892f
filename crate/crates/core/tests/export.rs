use std::fs;

use oscillator_pdmp::collisions::CollisionModel;
use oscillator_pdmp::covariance::{deviation_functional, integrate_covariance, write_lyapunov_csv, MomentParams};
use oscillator_pdmp::hamiltonian::{OscillatorNetwork, PhaseState};
use oscillator_pdmp::laws::{InputLaw, VelocityLaw};
use oscillator_pdmp::pdmp::{simulate_continuous, EventSchedule};

#[test]
fn trajectory_csv_round_trips_exactly() {
    let net = OscillatorNetwork::chain(2, 2, 1.0, 1.0, 0.5).unwrap();
    let model = CollisionModel::two_dim_ball_alpha(0.3).unwrap();
    let sched = EventSchedule::poisson(2.0, InputLaw::new(VelocityLaw::standard())).unwrap();
    let psi0 = PhaseState::from_slices(&[0.1, 0.2, -0.3, 0.4], &[1.0, -1.0, 0.5, 0.0]).unwrap();
    let traj = simulate_continuous(&net, &model, &sched, &psi0, 10.0, 0.1, 42).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectory.csv");
    traj.write_csv(fs::File::create(&path).unwrap()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,q_1,q_2,q_3,q_4,p_1,p_2,p_3,p_4");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), traj.states.len());
    for ((row, t), s) in rows.iter().zip(&traj.sample_times).zip(&traj.states) {
        assert_eq!(row[0], *t);
        assert_eq!(&row[1..5], s.q.as_slice());
        assert_eq!(&row[5..], s.p.as_slice());
    }
}

#[test]
fn lyapunov_csv_has_one_row_per_step() {
    let net = OscillatorNetwork::chain(3, 1, 1.0, 1.0, 1.0).unwrap();
    let p = MomentParams::new(1.0, 1.0 / 3.0, 1.0, 1.0).unwrap();
    let traj = integrate_covariance(&nalgebra::DMatrix::zeros(6, 6), &net, &p, 1.0, 0.01).unwrap();
    let f = deviation_functional(&traj, &net, &p).unwrap();
    let mut buf = Vec::new();
    write_lyapunov_csv(&mut buf, &traj, &f, &net).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), traj.times.len() + 1);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert_eq!(last[1], *f.last().unwrap());
}
