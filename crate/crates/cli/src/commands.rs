use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use oscillator_pdmp::collisions::CollisionModel;
use oscillator_pdmp::covariance::{
    beta_from_params, default_ode_dt, deviation_functional, fixed_point_residual, gibbs_covariance, integrate_covariance,
    is_nonincreasing, convergence_time, fixed_point, write_lyapunov_csv, MomentParams,
};
use oscillator_pdmp::dissipative::{analyze, l0_invariance_check, multiplicity_bound_check};
use oscillator_pdmp::hamiltonian::energy;
use oscillator_pdmp::pdmp::{drift_check, jacobian_rank_probe, simulate_streaming, trajectory_csv_header, write_csv_row};
use oscillator_pdmp::stationarity::{
    expected_fourth_moment_after, one_step_moment_shift, stationarity_residual, uniform_grid, GibbsSpec,
};
use oscillator_pdmp::stats::{pool_replicates, MomentAccumulator};

use crate::config::{
    CovarianceOdeConfig, DissipativeConfig, DriftConfig, Experiment, ExperimentConfig, InitialCovariance, RankProbeConfig,
    StationarityConfig,
};
use crate::error::{CliError, CliResult, ErrorKind};

/// Thresholds applied under `--check`.
pub const MAX_Z_SCORE: f64 = 5.0;
pub const MAX_REL_COV_ERROR: f64 = 0.05;
pub const GAUSSIAN_RESIDUAL_TOL: f64 = 1e-10;
pub const MIN_SHIFT_Z: f64 = 4.0;
pub const FIXED_POINT_REL_TOL: f64 = 1e-12;
pub const MONOTONE_SLACK: f64 = 1e-10;
pub const INVARIANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Covariance,
    Stationarity,
    Dissipative,
    DriftCheck,
    RankProbe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Covariance => "covariance",
            Command::Stationarity => "stationarity",
            Command::Dissipative => "dissipative",
            Command::DriftCheck => "drift-check",
            Command::RankProbe => "rank-probe",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

fn check(name: &str, value: f64, threshold: f64, passed: bool) -> Check {
    Check {
        name: name.to_string(),
        passed,
        value,
        threshold,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub events: usize,
    pub samples: u64,
    pub mean_energy: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub samples: u64,
    pub events: usize,
    pub mean_energy: f64,
    /// Covariance of all post-burn-in samples, merged across seeds.
    pub merged_covariance: Vec<Vec<f64>>,
    /// Mean of the per-seed covariances and its standard error.
    pub pooled_covariance: Option<Vec<Vec<f64>>>,
    pub std_error: Option<Vec<Vec<f64>>>,
    pub gibbs_target: Option<Vec<Vec<f64>>>,
    pub beta: Option<f64>,
    pub max_z_score: Option<f64>,
    pub max_rel_cov_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub command: &'static str,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<SeedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    pub reports: Map<String, Value>,
    pub checks: Vec<Check>,
}

impl ResultBundle {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("report serializes")
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

struct Section {
    report: Value,
    checks: Vec<Check>,
}

/// Runs `command` and writes its outputs into `out`.
pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path) -> CliResult<ResultBundle> {
    let exp = cfg.build()?;
    fs::create_dir_all(out)?;
    let mut bundle = ResultBundle {
        command: command.name(),
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION"),
            config_hash: cfg.hash(),
            seeds: cfg.run.seeds.clone(),
            config: cfg.clone(),
        },
        per_seed: Vec::new(),
        aggregate: None,
        reports: Map::new(),
        checks: Vec::new(),
    };
    let a = &cfg.analysis;
    let mut sections: Vec<(&str, Section)> = Vec::new();
    match command {
        Command::Simulate => {
            let (per_seed, aggregate, checks) = simulate(cfg, &exp, out)?;
            bundle.per_seed = per_seed;
            bundle.aggregate = Some(aggregate);
            bundle.checks.extend(checks);
            if let Some(c) = &a.covariance_ode {
                sections.push(("covariance", covariance(cfg, &exp, c, out)?));
            }
            if let Some(s) = &a.stationarity {
                sections.push(("stationarity", stationarity(cfg, &exp, s)?));
            }
            if let Some(d) = &a.dissipative {
                sections.push(("dissipative", dissipative(cfg, &exp, d)?));
            }
            if let Some(d) = &a.drift_check {
                sections.push(("drift_check", drift(cfg, &exp, d)?));
            }
            if let Some(r) = &a.rank_probe {
                sections.push(("rank_probe", rank_probe(cfg, &exp, r)?));
            }
        }
        Command::Covariance => {
            let c = a.covariance_ode.clone().unwrap_or_default();
            sections.push(("covariance", covariance(cfg, &exp, &c, out)?));
        }
        Command::Stationarity => {
            let s = a.stationarity.clone().unwrap_or_default();
            sections.push(("stationarity", stationarity(cfg, &exp, &s)?));
        }
        Command::Dissipative => {
            let d = a.dissipative.clone().unwrap_or_default();
            sections.push(("dissipative", dissipative(cfg, &exp, &d)?));
        }
        Command::DriftCheck => {
            let d = a.drift_check.clone().unwrap_or_default();
            sections.push(("drift_check", drift(cfg, &exp, &d)?));
        }
        Command::RankProbe => {
            let r = a.rank_probe.clone().unwrap_or_default();
            sections.push(("rank_probe", rank_probe(cfg, &exp, &r)?));
        }
    }
    for (name, s) in sections {
        bundle.reports.insert(name.to_string(), s.report);
        bundle.checks.extend(s.checks);
    }
    if command != Command::Simulate {
        let report = bundle.reports.values().next().cloned().unwrap_or(Value::Null);
        write_json(&out.join("report.json"), &report)?;
    }
    write_json(&out.join("summary.json"), &bundle)?;
    Ok(bundle)
}

/// Error for a failed `--check`.
pub fn check_failure(bundle: &ResultBundle) -> CliError {
    let failed: Vec<&Check> = bundle.checks.iter().filter(|c| !c.passed).collect();
    CliError::new(ErrorKind::CheckFailed, format!("{} acceptance check(s) failed", failed.len())).with_details(to_value(&failed))
}

struct SeedRun {
    acc: MomentAccumulator<f64>,
    events: usize,
    energy_sum: f64,
}

fn gibbs_target(cfg: &ExperimentConfig, exp: &Experiment) -> CliResult<Option<(f64, DMatrix<f64>)>> {
    let alpha = match exp.model {
        CollisionModel::OneDimElastic { alpha } => alpha,
        _ => return Ok(None),
    };
    if !cfg.is_gaussian() || !(cfg.sigma2() > 0.0) {
        return Ok(None);
    }
    let lambda = 1.0 / exp.schedule.tau.mean();
    let p = MomentParams::new(lambda, alpha, cfg.sigma2(), cfg.network.mass)?;
    let beta = beta_from_params(&p)?;
    Ok(Some((beta, gibbs_covariance(&exp.net, beta)?.into_matrix())))
}

fn simulate(cfg: &ExperimentConfig, exp: &Experiment, out: &Path) -> CliResult<(Vec<SeedSummary>, Aggregate, Vec<Check>)> {
    let run = &cfg.run;
    let first = run.seeds[0];
    let order = exp.net.order();
    let runs: Vec<SeedRun> = run
        .seeds
        .par_iter()
        .map(|&seed| -> CliResult<SeedRun> {
            let mut csv = if seed == first {
                let mut w = BufWriter::new(File::create(out.join("trajectory.csv"))?);
                writeln!(w, "{}", trajectory_csv_header(order))?;
                Some(w)
            } else {
                None
            };
            let mut acc = MomentAccumulator::new(exp.net.phase_dim());
            let mut energy_sum = 0.0;
            let events = simulate_streaming(&exp.net, &exp.model, &exp.schedule, &exp.psi0, run.t_end, run.sample_dt, seed, |t, s| {
                if let Some(w) = csv.as_mut() {
                    write_csv_row(w, t, s)?;
                }
                if t >= run.burn_in {
                    acc.push(&s.to_vector());
                    energy_sum += energy(&exp.net, s)?;
                }
                Ok(())
            })?;
            if let Some(mut w) = csv {
                w.flush()?;
            }
            Ok(SeedRun { acc, events, energy_sum })
        })
        .collect::<CliResult<_>>()?;

    let mut per_seed = Vec::with_capacity(runs.len());
    let mut merged = MomentAccumulator::new(exp.net.phase_dim());
    let mut covs = Vec::with_capacity(runs.len());
    let (mut events, mut energy_sum) = (0, 0.0);
    for (&seed, r) in run.seeds.iter().zip(&runs) {
        let cov = r.acc.covariance()?;
        per_seed.push(SeedSummary {
            seed,
            events: r.events,
            samples: r.acc.count(),
            mean_energy: r.energy_sum / r.acc.count() as f64,
            mean: r.acc.mean().iter().copied().collect(),
            covariance: rows(&cov),
        });
        merged.merge(&r.acc)?;
        covs.push(cov);
        events += r.events;
        energy_sum += r.energy_sum;
    }
    let merged_cov = merged.covariance()?;
    let pooled = if covs.len() >= 2 { Some(pool_replicates(&covs)?) } else { None };
    let target = gibbs_target(cfg, exp)?;

    let mut checks = Vec::new();
    let (mut max_z, mut max_rel) = (None, None);
    if let Some((_, t)) = &target {
        let rel = match &pooled {
            Some(p) => p.max_diagonal_rel_error(t),
            None => (0..t.nrows()).map(|i| ((merged_cov[(i, i)] - t[(i, i)]) / t[(i, i)]).abs()).fold(0.0, f64::max),
        };
        checks.push(check("max_rel_cov_error", rel, MAX_REL_COV_ERROR, rel <= MAX_REL_COV_ERROR));
        max_rel = Some(rel);
        if let Some(p) = &pooled {
            let z = p.max_z_score(t);
            checks.push(check("max_z_score", z, MAX_Z_SCORE, z <= MAX_Z_SCORE));
            max_z = Some(z);
        }
    }
    let aggregate = Aggregate {
        samples: merged.count(),
        events,
        mean_energy: energy_sum / merged.count() as f64,
        merged_covariance: rows(&merged_cov),
        pooled_covariance: pooled.as_ref().map(|p| rows(&p.mean)),
        std_error: pooled.as_ref().map(|p| rows(&p.std_error)),
        gibbs_target: target.as_ref().map(|(_, t)| rows(t)),
        beta: target.as_ref().map(|(b, _)| *b),
        max_z_score: max_z,
        max_rel_cov_error: max_rel,
    };
    Ok((per_seed, aggregate, checks))
}

fn covariance(cfg: &ExperimentConfig, exp: &Experiment, c: &CovarianceOdeConfig, out: &Path) -> CliResult<Section> {
    let p = cfg.moment_params(c.lambda)?;
    let net = &exp.net;
    let dim = net.phase_dim();
    let c0 = match c.initial {
        InitialCovariance::Zero => DMatrix::zeros(dim, dim),
        InitialCovariance::Identity => DMatrix::identity(dim, dim),
        InitialCovariance::Gibbs => fixed_point(net, &p)?,
        InitialCovariance::State => {
            let v = exp.psi0.to_vector();
            &v * v.transpose()
        }
    };
    let dt = c.dt.unwrap_or_else(|| default_ode_dt(net, &p));
    let traj = integrate_covariance(&c0, net, &p, c.t_end, dt)?;
    let f = deviation_functional(&traj, net, &p)?;
    write_lyapunov_csv(BufWriter::new(File::create(out.join("lyapunov.csv"))?), &traj, &f, net)?;

    let target = fixed_point(net, &p)?;
    let residual = fixed_point_residual(net, &p)?;
    let bound = FIXED_POINT_REL_TOL * p.lambda * p.mass * p.mass * p.sigma2;
    let residual_checked = bound > 0.0;
    let monotone = is_nonincreasing(&f, MONOTONE_SLACK);
    let final_gap = (traj.last() - &target).amax();
    let conv = convergence_time(&traj, &target, c.convergence_tol);
    let beta = beta_from_params(&p).ok();
    let mut checks = vec![check("lyapunov_nonincreasing", f64::from(u8::from(monotone)), 1.0, monotone)];
    if residual_checked {
        checks.push(check("fixed_point_residual", residual, bound, residual <= bound));
    }
    let report = json!({
        "lambda": p.lambda,
        "alpha": p.alpha,
        "sigma2": p.sigma2,
        "mass": p.mass,
        "beta": beta,
        "t_end": c.t_end,
        "dt": dt,
        "steps": traj.times.len() - 1,
        "initial": c.initial,
        "fixed_point_residual": residual,
        "residual_bound": bound,
        "residual_checked": residual_checked,
        "lyapunov_nonincreasing": monotone,
        "lyapunov_initial": f[0],
        "lyapunov_final": f[f.len() - 1],
        "final_max_gap": final_gap,
        "convergence_tol": c.convergence_tol,
        "convergence_time": conv,
    });
    Ok(Section { report, checks })
}

fn stationarity(cfg: &ExperimentConfig, exp: &Experiment, s: &StationarityConfig) -> CliResult<Section> {
    let alpha = match exp.model {
        CollisionModel::OneDimElastic { alpha } => alpha,
        _ => return Err(CliError::validation("stationarity needs the one_dim_elastic model")),
    };
    let mass = cfg.network.mass;
    let law = cfg.velocity_law();
    let p = MomentParams::new(1.0 / exp.schedule.tau.mean(), alpha, cfg.sigma2(), mass)?;
    let model_beta = beta_from_params(&p)?;
    let beta = s.beta.unwrap_or(model_beta);
    let grid = uniform_grid(s.p_min, s.p_max, s.n_grid);
    let residual = stationarity_residual(beta, alpha, mass, &law, &grid)?;
    let spec = GibbsSpec::new(exp.net.clone(), beta)?;
    let shift = one_step_moment_shift(&spec, &exp.model, &law, s.shift_samples, cfg.run.seeds[0])?;
    let expected_m4 = expected_fourth_moment_after(alpha, mass, beta, &law);

    let mut checks = Vec::new();
    if s.beta.is_none() {
        if cfg.is_gaussian() {
            checks.push(check("stationarity_residual", residual, GAUSSIAN_RESIDUAL_TOL, residual <= GAUSSIAN_RESIDUAL_TOL));
        } else {
            checks.push(check("fourth_moment_shift_z", shift.m4_z(), MIN_SHIFT_Z, shift.m4_z() >= MIN_SHIFT_Z));
        }
    }
    let report = json!({
        "alpha": alpha,
        "mass": mass,
        "velocity_law": cfg.schedule.velocity,
        "beta": beta,
        "model_beta": model_beta,
        "p_min": s.p_min,
        "p_max": s.p_max,
        "n_grid": s.n_grid,
        "residual": residual,
        "moment_shift": {
            "samples": s.shift_samples,
            "m2_before": shift.m2_before,
            "m2_after": shift.m2_after,
            "m2_shift": shift.m2_shift(),
            "m2_z": shift.m2_z(),
            "m4_before": shift.m4_before,
            "m4_after": shift.m4_after,
            "m4_shift": shift.m4_shift(),
            "m4_z": shift.m4_z(),
            "m4_after_expected": expected_m4,
            "m4_before_expected": 3.0 * (mass / beta).powi(2),
        },
    });
    Ok(Section { report, checks })
}

fn dissipative(cfg: &ExperimentConfig, exp: &Experiment, d: &DissipativeConfig) -> CliResult<Section> {
    let lp = cfg.contact_indices(d)?;
    let mut report = analyze(exp.net.stiffness(), &lp, d.tol)?;
    let bound_ok = multiplicity_bound_check(&report, &lp);
    let grid = uniform_grid(0.0, d.invariance_horizon, 200);
    let inv = l0_invariance_check(&exp.net, &lp, d.invariance_probes, &grid, INVARIANCE_TOL, cfg.run.seeds[0])?;
    report.lambda_prime.iter_mut().for_each(|i| *i += 1);
    let mut value = to_value(&report);
    value["multiplicity_bound_holds"] = json!(bound_ok);
    value["l0_invariance"] = to_value(&inv);
    let flag = |b: bool| f64::from(u8::from(b));
    let checks = vec![
        check("dissipative_consistent", flag(report.consistent), 1.0, report.consistent),
        check("multiplicity_bound", flag(bound_ok), 1.0, bound_ok),
        check("l0_invariance", inv.max_contact_momentum, INVARIANCE_TOL, inv.holds),
    ];
    Ok(Section { report: value, checks })
}

fn drift(cfg: &ExperimentConfig, exp: &Experiment, d: &DriftConfig) -> CliResult<Section> {
    let est = drift_check(
        &exp.net,
        &exp.model,
        &exp.schedule,
        d.n_probes,
        (d.energy_min, d.energy_max),
        d.n_draws,
        cfg.run.seeds[0],
    )?;
    let worst = est.iter().map(|e| e.relative_change).fold(f64::NEG_INFINITY, f64::max);
    let threshold = -d.min_relative_decrease;
    let probes: Vec<Value> = est
        .iter()
        .map(|e| {
            json!({
                "energy": e.energy,
                "mean_change": e.mean_change,
                "std_error": e.std_error,
                "relative_change": e.relative_change,
            })
        })
        .collect();
    let report = json!({
        "n_probes": d.n_probes,
        "n_draws": d.n_draws,
        "energy_range": [d.energy_min, d.energy_max],
        "worst_relative_change": worst,
        "threshold": threshold,
        "probes": probes,
    });
    Ok(Section {
        report,
        checks: vec![check("drift_relative_change", worst, threshold, worst <= threshold)],
    })
}

fn rank_probe(cfg: &ExperimentConfig, exp: &Experiment, r: &RankProbeConfig) -> CliResult<Section> {
    let m = r.m.unwrap_or(cfg.run.n_steps);
    let width = 1 + exp.model.input_dim();
    let point = match &r.point {
        Some(p) => {
            if p.len() != m * width {
                return Err(CliError::validation(format!("rank_probe.point needs {} entries, got {}", m * width, p.len())));
            }
            p.clone()
        }
        None => exp
            .schedule
            .events(&exp.model, cfg.run.seeds[0])
            .take(m)
            .flat_map(|ev| std::iter::once(ev.wait).chain(ev.input.to_flat()))
            .collect(),
    };
    let rank = jacobian_rank_probe(&exp.net, &exp.model, &exp.psi0, m, &point, r.h)?;
    let phase_dim = exp.net.phase_dim();
    let report = json!({
        "m": m,
        "rank": rank,
        "phase_dim": phase_dim,
        "full_rank": rank == phase_dim,
        "h": r.h,
        "point": point,
    });
    Ok(Section {
        report,
        checks: vec![check("rank_probe_full_rank", rank as f64, phase_dim as f64, rank == phase_dim)],
    })
}
