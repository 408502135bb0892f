//! JSON experiment configuration.
//!
//! Units: time in the same unit as `1/ω`, masses in units of the particle
//! mass scale, velocity laws by their variance `σ²`. Matrices are row-major
//! arrays of rows. Coordinate indices (`lambda_prime`) are 1-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use oscillator_pdmp::collisions::CollisionModel;
use oscillator_pdmp::covariance::MomentParams;
use oscillator_pdmp::hamiltonian::{OscillatorNetwork, PhaseState};
use oscillator_pdmp::laws::{AngleLaw, InputLaw, TauLaw, VelocityKind, VelocityLaw};
use oscillator_pdmp::linalg::{random_pd_matrix, SymmetricMatrix};
use oscillator_pdmp::pdmp::EventSchedule;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_particles: usize,
    #[serde(default = "one")]
    pub dim: usize,
    pub mass: f64,
    pub stiffness: StiffnessSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StiffnessSource {
    /// Full `dN × dN` matrix.
    Explicit { rows: Vec<Vec<f64>> },
    /// `G Gᵀ + 1e-6 I` with a seeded Gaussian `G`.
    Random { seed: u64 },
    /// Nearest-neighbour chain with on-site pinning.
    Chain { spring: f64, pinning: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Give exactly one of `alpha` or `external_mass`.
    OneDimElastic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        external_mass: Option<f64>,
    },
    TwoDimBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        external_mass: Option<f64>,
    },
    /// Velocity map `v ↦ R v + w`, `‖R‖₂ < 1`.
    ContractiveAffine { r: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tau: TauConfig,
    pub velocity: VelocityConfig,
    #[serde(default)]
    pub angle: AngleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauConfig {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { low: f64, high: f64 },
}

/// External velocity law, parametrised by its variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityConfig {
    Gaussian { sigma2: f64 },
    Uniform { sigma2: f64 },
    TwoPoint { sigma2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AngleConfig {
    #[default]
    Uniform,
    WrappedNormal { mean: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    pub sample_dt: f64,
    pub burn_in: f64,
    /// Collisions per rank probe.
    pub n_steps: usize,
    pub seeds: Vec<u64>,
    /// Defaults to the zero state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<StateConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            sample_dt: 0.25,
            burn_in: 0.0,
            n_steps: 4,
            seeds: vec![0],
            initial_state: None,
        }
    }
}

/// Analyses attached to `simulate` when present; the dedicated
/// subcommands fall back to the defaults when a section is missing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance_ode: Option<CovarianceOdeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<StationarityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipative: Option<DissipativeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_check: Option<DriftConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_probe: Option<RankProbeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCovariance {
    #[default]
    Zero,
    Identity,
    Gibbs,
    /// `ψ₀ψ₀ᵀ` of `run.initial_state`.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceOdeConfig {
    pub t_end: f64,
    /// RK4 step; chosen from the spectrum when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub initial: InitialCovariance,
    pub convergence_tol: f64,
    /// Collision rate used by the moment equation; the schedule rate when
    /// absent. Zero switches the collisions off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Default for CovarianceOdeConfig {
    fn default() -> Self {
        Self {
            t_end: 400.0,
            dt: None,
            initial: InitialCovariance::Zero,
            convergence_tol: 1e-6,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarityConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub n_grid: usize,
    /// Inverse temperature to test; the model's own `β` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub shift_samples: usize,
}

impl Default for StationarityConfig {
    fn default() -> Self {
        Self {
            p_min: -5.0,
            p_max: 5.0,
            n_grid: 200,
            beta: None,
            shift_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipativeConfig {
    /// 1-based contact coordinates; the coordinates of particle 1 when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<Vec<usize>>,
    pub tol: f64,
    pub invariance_probes: usize,
    pub invariance_horizon: f64,
}

impl Default for DissipativeConfig {
    fn default() -> Self {
        Self {
            lambda_prime: None,
            tol: 1e-8,
            invariance_probes: 10,
            invariance_horizon: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub n_probes: usize,
    pub energy_min: f64,
    pub energy_max: f64,
    pub n_draws: usize,
    /// Required relative decrease for `--check`.
    pub min_relative_decrease: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            n_probes: 20,
            energy_min: 1e3,
            energy_max: 1e4,
            n_draws: 10_000,
            min_relative_decrease: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankProbeConfig {
    /// Number of collisions; `run.n_steps` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// `(t₁, ξ₁, …, t_m, ξ_m)`; drawn from the schedule when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    pub h: f64,
}

impl Default for RankProbeConfig {
    fn default() -> Self {
        Self {
            m: None,
            point: None,
            h: oscillator_pdmp::pdmp::DEFAULT_PROBE_STEP,
        }
    }
}

fn one() -> usize {
    1
}

/// Validated objects built from a configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub net: OscillatorNetwork<f64>,
    pub model: CollisionModel<f64>,
    pub schedule: EventSchedule<f64>,
    pub psi0: PhaseState<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(CliError::validation(format!("{what} must be a non-empty rectangular array of rows")));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

fn alpha_from(alpha: Option<f64>, external_mass: Option<f64>, mass: f64) -> CliResult<f64> {
    match (alpha, external_mass) {
        (Some(a), None) => Ok(a),
        (None, Some(m)) => {
            if !(m > 0.0 && m <= mass) {
                return Err(CliError::validation("external_mass must lie in (0, mass]"));
            }
            Ok((mass - m) / (mass + m))
        }
        _ => Err(CliError::validation("give exactly one of alpha or external_mass")),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn order(&self) -> usize {
        self.network.n_particles * self.network.dim
    }

    pub fn velocity_law(&self) -> VelocityLaw<f64> {
        match self.schedule.velocity {
            VelocityConfig::Gaussian { sigma2 } => VelocityLaw::with_variance(VelocityKind::Gaussian, sigma2),
            VelocityConfig::Uniform { sigma2 } => VelocityLaw::with_variance(VelocityKind::UniformSymmetric, sigma2),
            VelocityConfig::TwoPoint { sigma2 } => VelocityLaw::with_variance(VelocityKind::TwoPoint, sigma2),
        }
    }

    pub fn sigma2(&self) -> f64 {
        match self.schedule.velocity {
            VelocityConfig::Gaussian { sigma2 } | VelocityConfig::Uniform { sigma2 } | VelocityConfig::TwoPoint { sigma2 } => sigma2,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.schedule.velocity, VelocityConfig::Gaussian { .. })
    }

    fn network(&self) -> CliResult<OscillatorNetwork<f64>> {
        let n = &self.network;
        if n.n_particles == 0 || n.dim == 0 {
            return Err(CliError::validation("network needs at least one particle and one dimension"));
        }
        let order = self.order();
        let net = match &n.stiffness {
            StiffnessSource::Chain { spring, pinning } => OscillatorNetwork::chain(n.n_particles, n.dim, n.mass, *spring, *pinning)?,
            StiffnessSource::Random { seed } => OscillatorNetwork::new(n.n_particles, n.dim, n.mass, random_pd_matrix(order, *seed)?)?,
            StiffnessSource::Explicit { rows } => {
                let m = matrix_from_rows(rows, "stiffness")?;
                if m.nrows() != order || m.ncols() != order {
                    return Err(CliError::validation(format!(
                        "stiffness is {}×{}, expected {order}×{order}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                OscillatorNetwork::new(n.n_particles, n.dim, n.mass, SymmetricMatrix::new(m)?)?
            }
        };
        Ok(net)
    }

    fn model(&self) -> CliResult<CollisionModel<f64>> {
        let mass = self.network.mass;
        let model = match &self.model {
            ModelConfig::OneDimElastic { alpha, external_mass } => {
                CollisionModel::one_dim_elastic_alpha(alpha_from(*alpha, *external_mass, mass)?)?
            }
            ModelConfig::TwoDimBall { alpha, external_mass } => {
                CollisionModel::two_dim_ball_alpha(alpha_from(*alpha, *external_mass, mass)?)?
            }
            ModelConfig::ContractiveAffine { r } => CollisionModel::contractive_affine(matrix_from_rows(r, "r")?)?,
        };
        model.check_dim(self.network.dim)?;
        Ok(model)
    }

    fn schedule_law(&self) -> CliResult<EventSchedule<f64>> {
        let tau = match self.schedule.tau {
            TauConfig::Exponential { rate } => TauLaw::Exponential { rate },
            TauConfig::Gamma { shape, rate } => TauLaw::Gamma { shape, rate },
            TauConfig::Uniform { low, high } => TauLaw::UniformPositive { low, high },
        };
        let angle = match self.schedule.angle {
            AngleConfig::Uniform => AngleLaw::Uniform,
            AngleConfig::WrappedNormal { mean, sigma } => AngleLaw::WrappedNormal { mean, sigma },
        };
        if !(self.sigma2() >= 0.0) || !self.sigma2().is_finite() {
            return Err(CliError::validation("velocity variance must be finite and non-negative"));
        }
        let inputs = InputLaw {
            velocity: self.velocity_law(),
            angle,
        };
        Ok(EventSchedule::new(tau, inputs)?)
    }

    fn initial_state(&self) -> CliResult<PhaseState<f64>> {
        let order = self.order();
        match &self.run.initial_state {
            None => Ok(PhaseState::zeros(order)),
            Some(s) => {
                if s.q.len() != order || s.p.len() != order {
                    return Err(CliError::validation(format!("initial_state needs q and p of length {order}")));
                }
                let psi = PhaseState::from_slices(&s.q, &s.p)?;
                if !psi.is_finite() {
                    return Err(CliError::validation("initial_state must be finite"));
                }
                Ok(psi)
            }
        }
    }

    fn validate_run(&self) -> CliResult<()> {
        let r = &self.run;
        if r.seeds.is_empty() {
            return Err(CliError::validation("seed list must not be empty"));
        }
        if !(r.t_end > 0.0) || !r.t_end.is_finite() {
            return Err(CliError::validation("run.t_end must be positive and finite"));
        }
        if !(r.sample_dt > 0.0 && r.sample_dt <= r.t_end) {
            return Err(CliError::validation("run.sample_dt must lie in (0, t_end]"));
        }
        if !(r.burn_in >= 0.0 && r.burn_in < r.t_end) {
            return Err(CliError::validation("run.burn_in must lie in [0, t_end)"));
        }
        let mut sorted = r.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != r.seeds.len() {
            return Err(CliError::validation("seeds must be distinct"));
        }
        Ok(())
    }

    fn validate_analysis(&self) -> CliResult<()> {
        let a = &self.analysis;
        if let Some(c) = &a.covariance_ode {
            if !(c.t_end > 0.0) || !c.t_end.is_finite() || c.dt.is_some_and(|dt| !(dt > 0.0)) || !(c.convergence_tol > 0.0) {
                return Err(CliError::validation("covariance_ode needs positive t_end, dt and convergence_tol"));
            }
            if c.initial == InitialCovariance::State && self.run.initial_state.is_none() {
                return Err(CliError::validation("covariance_ode.initial = state needs run.initial_state"));
            }
        }
        if let Some(s) = &a.stationarity {
            if !(s.p_min < s.p_max) || s.n_grid == 0 || s.beta.is_some_and(|b| !(b > 0.0)) || s.shift_samples < 2 {
                return Err(CliError::validation("stationarity needs p_min < p_max, n_grid ≥ 1, beta > 0, shift_samples ≥ 2"));
            }
        }
        if let Some(d) = &a.dissipative {
            self.contact_indices(d)?;
            if !(d.tol > 0.0) || !(d.invariance_horizon > 0.0) {
                return Err(CliError::validation("dissipative needs positive tol and invariance_horizon"));
            }
        }
        if let Some(d) = &a.drift_check {
            if d.n_probes == 0 || d.n_draws < 2 || !(d.energy_min > 0.0 && d.energy_max >= d.energy_min) {
                return Err(CliError::validation("drift_check needs n_probes ≥ 1, n_draws ≥ 2, 0 < energy_min ≤ energy_max"));
            }
        }
        if let Some(r) = &a.rank_probe {
            if !(r.h > 0.0) {
                return Err(CliError::validation("rank_probe.h must be positive"));
            }
        }
        Ok(())
    }

    /// 0-based contact coordinates.
    pub fn contact_indices(&self, d: &DissipativeConfig) -> CliResult<Vec<usize>> {
        let order = self.order();
        match &d.lambda_prime {
            None => Ok((0..self.network.dim).collect()),
            Some(list) => {
                if list.is_empty() {
                    return Err(CliError::validation("lambda_prime must not be empty"));
                }
                let mut out = Vec::with_capacity(list.len());
                for &i in list {
                    if i == 0 || i > order {
                        return Err(CliError::validation(format!("lambda_prime entry {i} outside 1..={order}")));
                    }
                    if out.contains(&(i - 1)) {
                        return Err(CliError::validation(format!("lambda_prime entry {i} repeated")));
                    }
                    out.push(i - 1);
                }
                Ok(out)
            }
        }
    }

    /// Parameters of the second-moment equation; needs the one-dimensional
    /// elastic model with exponential waiting times.
    pub fn moment_params(&self, lambda_override: Option<f64>) -> CliResult<MomentParams<f64>> {
        let lambda = match (lambda_override, self.schedule.tau) {
            (Some(l), _) => l,
            (None, TauConfig::Exponential { rate }) => rate,
            _ => return Err(CliError::validation("moment equations need exponential waiting times")),
        };
        let alpha = match self.model()? {
            CollisionModel::OneDimElastic { alpha } => alpha,
            _ => return Err(CliError::validation("moment equations need the one_dim_elastic model")),
        };
        Ok(MomentParams::new(lambda, alpha, self.sigma2(), self.network.mass)?)
    }

    pub fn build(&self) -> CliResult<Experiment> {
        self.validate_run()?;
        let net = self.network()?;
        let model = self.model()?;
        let schedule = self.schedule_law()?;
        let psi0 = self.initial_state()?;
        self.validate_analysis()?;
        Ok(Experiment {
            net,
            model,
            schedule,
            psi0,
        })
    }
}

/// Parses `a..b` (exclusive), `a..=b` or a single seed.
pub fn parse_seed_range(text: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::validation(format!("invalid seed range {text:?}; expected a..b, a..=b or a"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        vec![num(text)?]
    };
    if seeds.is_empty() {
        return Err(CliError::validation(format!("seed range {text:?} is empty")));
    }
    Ok(seeds)
}
