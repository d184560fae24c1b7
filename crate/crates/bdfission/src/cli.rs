//! Batch front door: run-configuration parsing, subcommand implementations,
//! result persistence and report generation.
//!
//! Configs are JSON with a fixed schema (unknown keys rejected). Every
//! numeric output file gets a `<name>.schema.json` sidecar documenting its
//! columns and units. Exit codes: 0 success, 1 internal error, 2 empty or
//! degenerate input, 3 verification failure.

use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, dispersal_regime, domination_certificate, growth_and_envelope, lambert_w0,
    poisson_samples, rescale_upsilon, schedule, time_bounds, verify_domination,
    DispersalRegime, DominationCertificate, RateConstants, Schedule, TimeBoundReport,
};
use crate::estimators::{
    bogoliubov_functional, factorial_moments, intensity, pair_correlation, ThetaFunction,
};
use crate::gamma0::{
    apply_generator, apply_l_delta, correlation_from_density, e_theta, f_theta, k_transform,
    lp_weight, ms_simple, pairing, DiscreteSpace, Gamma0Function, MultisetSpace,
};
use crate::geometry::BoxRegion;
use crate::kernels::{
    validate_params, FissionKernel, FissionVariant, ModelParams, MortalityField, RadialKernel,
};
use crate::master_equation::{
    build_generator, default_step, discrete_ssa, enumerate_states, evolve, exp_moment, moments,
    DistributionVector,
};
use crate::simulator::{replicate, Ensemble, InitialCondition, SimConfig, Snapshot, Trajectory};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration invalid: {0}")]
    ConfigInvalid(String),
    #[error("missing `{0}` section in the configuration")]
    MissingSection(&'static str),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("verification failed")]
    VerificationFailed,
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingData(_) | CliError::Degenerate(_) => 2,
            CliError::VerificationFailed => 3,
            _ => 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// A radial kernel given inline or as a two-column CSV (position, value).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Inline(RadialKernel),
    Csv(CsvKernel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvKernel {
    pub shape: CsvShapeTag,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvShapeTag {
    TabulatedCsv,
}

impl KernelSpec {
    pub fn resolve(&self, base: &Path) -> Result<RadialKernel, CliError> {
        match self {
            KernelSpec::Inline(k) => Ok(k.clone()),
            KernelSpec::Csv(c) => {
                let path = base.join(&c.path);
                let text = fs::read_to_string(&path).map_err(|e| {
                    CliError::ConfigInvalid(format!("cannot read {}: {e}", path.display()))
                })?;
                let mut radii = Vec::new();
                let mut values = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let mut parts = line.split(',');
                    let r: Option<f64> = parts.next().and_then(|s| s.trim().parse().ok());
                    let v: Option<f64> = parts.next().and_then(|s| s.trim().parse().ok());
                    match (r, v) {
                        (Some(r), Some(v)) => {
                            radii.push(r);
                            values.push(v);
                        }
                        // Header row.
                        _ if lineno == 0 => continue,
                        _ => {
                            return Err(CliError::ConfigInvalid(format!(
                                "bad CSV row {}",
                                lineno + 1
                            )))
                        }
                    }
                }
                Ok(RadialKernel::Tabulated { radii, values })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct FissionSpec {
    pub total_mass: f64,
    pub variant: FissionVariantTag,
    pub dispersal: KernelSpec,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FissionVariantTag {
    Factorized,
    BolkerPacala,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dimension: usize,
    pub mortality: MortalityField,
    pub competition: KernelSpec,
    pub fission: FissionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub window_side: f64,
    pub end_time: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    pub initial: InitialCondition,
    #[serde(default = "default_guard")]
    pub max_population: usize,
    /// Default: record events when the ensemble is small.
    pub record_events: Option<bool>,
    pub threads: Option<usize>,
}

fn default_guard() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Estimation window; defaults to the full torus box.
    pub window: Option<BoxRegion>,
    #[serde(default = "default_bins")]
    pub pair_bins: usize,
    pub pair_r_max: Option<f64>,
    #[serde(default = "default_orders")]
    pub moment_orders: usize,
    #[serde(default)]
    pub theta: Vec<ThetaFunction>,
    #[serde(default = "default_slack")]
    pub alpha0_slack: f64,
}

fn default_bins() -> usize {
    8
}
fn default_orders() -> usize {
    3
}
fn default_slack() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsSection {
    pub alpha0: f64,
    pub kappa: f64,
    pub kappa_prime: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub r: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    pub omega: Option<f64>,
    pub horizon: f64,
}

fn default_epsilon() -> f64 {
    0.05
}
fn default_h() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterSection {
    pub m_sites: usize,
    pub n_max: usize,
    pub t_end: f64,
    pub dt: Option<f64>,
    /// `a[x][y]` (symmetric).
    pub competition: Vec<Vec<f64>>,
    pub mortality: Vec<f64>,
    /// `b[x][j][k]` (symmetric in j,k).
    pub fission: Vec<Vec<Vec<f64>>>,
    pub initial_state: Vec<u8>,
}

impl MasterSection {
    pub fn discrete_space(&self) -> Result<DiscreteSpace, CliError> {
        let m = self.m_sites;
        if self.competition.len() != m
            || self.mortality.len() != m
            || self.fission.len() != m
            || self.competition.iter().any(|r| r.len() != m)
            || self
                .fission
                .iter()
                .any(|bx| bx.len() != m || bx.iter().any(|row| row.len() != m))
        {
            return Err(CliError::ConfigInvalid(
                "master section matrices must be M×M and M×M×M".into(),
            ));
        }
        let competition = self.competition.iter().flatten().copied().collect();
        let fission = self
            .fission
            .iter()
            .flat_map(|bx| bx.iter().flatten())
            .copied()
            .collect();
        Ok(DiscreteSpace::new(
            m,
            competition,
            self.mortality.clone(),
            fission,
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSection>,
    pub simulation: Option<SimulationSection>,
    pub analysis: Option<AnalysisSection>,
    pub analytics: Option<AnalyticsSection>,
    pub master: Option<MasterSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((config, base))
    }

    pub fn model_params(&self, base: &Path) -> Result<Arc<ModelParams>, CliError> {
        let section = self
            .model
            .as_ref()
            .ok_or(CliError::MissingSection("model"))?;
        let competition = section.competition.resolve(base)?;
        let dispersal = crate::kernels::Dispersal::Density {
            profile: section.fission.dispersal.resolve(base)?,
        };
        let variant = match section.fission.variant {
            FissionVariantTag::Factorized => FissionVariant::Factorized { dispersal },
            FissionVariantTag::BolkerPacala => FissionVariant::BolkerPacala { dispersal },
        };
        let mut fission = FissionKernel::new(section.fission.total_mass, variant);
        if section.fission.sigma > 0.0 {
            fission = fission.mollify(section.fission.sigma);
        }
        Ok(Arc::new(ModelParams::new(
            section.dimension,
            section.mortality.clone(),
            competition,
            fission,
        )))
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// FNV-1a 64 over the canonical JSON of the parsed config.
pub fn params_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{h:016x}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes a sidecar `<file>.schema.json` documenting columns and units.
fn write_sidecar(path: &Path, description: &str, columns: &[(&str, &str, &str)]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Column<'a> {
        name: &'a str,
        unit: &'a str,
        description: &'a str,
    }
    #[derive(Serialize)]
    struct Sidecar<'a> {
        file: String,
        description: &'a str,
        columns: Vec<Column<'a>>,
    }
    let sidecar = Sidecar {
        file: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        description,
        columns: columns
            .iter()
            .map(|(name, unit, description)| Column {
                name,
                unit,
                description,
            })
            .collect(),
    };
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".schema.json");
    write_json(Path::new(&sidecar_path), &sidecar)
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct Manifest {
    params_hash: String,
    version: String,
    master_seed: u64,
    replica_seeds: Vec<u64>,
    replicas: usize,
    config: RunConfig,
}

#[derive(Debug, Serialize)]
struct EnsembleSummary {
    master_seed: u64,
    params_hash: String,
    replicas: usize,
    times: Vec<f64>,
    /// Per time: mean population, standard error, factorial moments 1..3.
    mean_population: Vec<f64>,
    stderr_population: Vec<f64>,
    factorial_moments: Vec<Vec<f64>>,
    guard_tripped: usize,
}

/// Runs the configured ensemble and persists trajectories, snapshots and the
/// moment summary into `out`.
pub fn run_simulate(
    config: &RunConfig,
    base: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<Ensemble, CliError> {
    let sim_section = config
        .simulation
        .as_ref()
        .ok_or(CliError::MissingSection("simulation"))?;
    let params = config.model_params(base)?;
    let report = validate_params(&params).map_err(|e| CliError::Degenerate(e.to_string()))?;
    if !report.pass {
        let failed: Vec<&str> = report
            .items
            .iter()
            .filter(|i| !i.pass)
            .map(|i| i.item.as_str())
            .collect();
        return Err(CliError::Degenerate(format!(
            "model validation failed: {}",
            failed.join("; ")
        )));
    }

    let seed = seed_override.unwrap_or(sim_section.seed);
    let record_events = sim_section
        .record_events
        .unwrap_or(sim_section.replicas <= 64);
    let mut snapshot_times = sim_section.snapshots.clone();
    if snapshot_times.is_empty() {
        snapshot_times.push(sim_section.end_time);
    }
    let sim = SimConfig {
        window_side: sim_section.window_side,
        end_time: sim_section.end_time,
        initial: sim_section.initial.clone(),
        seed,
        snapshot_times,
        max_population: sim_section.max_population,
        record_events,
    };

    let ensemble = match sim_section.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            pool.install(|| replicate(&sim, params.clone(), sim_section.replicas))
        }
        None => replicate(&sim, params.clone(), sim_section.replicas),
    };

    ensure_dir(out)?;
    let hash = params_hash(config);
    let manifest = Manifest {
        params_hash: hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: seed,
        replica_seeds: (0..sim_section.replicas as u64)
            .map(|i| crate::simulator::derived_seed(seed, i))
            .collect(),
        replicas: sim_section.replicas,
        config: config.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_json(&out.join("validation.json"), &report)?;

    let dim = params.dimension;
    // Combined snapshot table.
    let snap_path = out.join("snapshots.csv");
    {
        let mut f = fs::File::create(&snap_path)?;
        let coords: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        writeln!(f, "replica,t,id,{}", coords.join(","))?;
        for (r, traj) in ensemble.replicas.iter().enumerate() {
            for snap in &traj.snapshots {
                for (id, p) in snap.positions.iter().enumerate() {
                    let row: Vec<String> = (0..dim).map(|k| format!("{:.17e}", p[k])).collect();
                    writeln!(f, "{r},{:.17e},{id},{}", snap.time, row.join(","))?;
                }
            }
        }
    }
    write_sidecar(
        &snap_path,
        "configuration snapshots per replica and time",
        &[
            ("replica", "index", "replica number under the master seed"),
            ("t", "time", "snapshot time"),
            ("id", "index", "dense particle index at this snapshot"),
            ("x*", "length", "particle coordinates on the periodic window"),
        ],
    )?;

    if record_events {
        for (r, traj) in ensemble.replicas.iter().enumerate() {
            let path = out.join(format!("trajectory_{r:04}.csv"));
            let mut f = fs::File::create(&path)?;
            let coords = |prefix: &str| -> String {
                (1..=dim)
                    .map(|k| format!("{prefix}{k}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            writeln!(
                f,
                "t,kind,{},{},{},population_after",
                coords("parent_x"),
                coords("y1_"),
                coords("y2_")
            )?;
            for ev in &traj.events {
                let fmt = |p: &crate::geometry::Position| -> String {
                    (0..dim)
                        .map(|k| format!("{:.17e}", p[k]))
                        .collect::<Vec<_>>()
                        .join(",")
                };
                let kind = match ev.kind {
                    crate::simulator::EventKind::Death => "death",
                    crate::simulator::EventKind::Fission => "fission",
                };
                let (y1, y2) = match &ev.offspring {
                    Some((a, b)) => (fmt(a), fmt(b)),
                    None => {
                        let blank = vec![""; dim].join(",");
                        (blank.clone(), blank)
                    }
                };
                writeln!(
                    f,
                    "{:.17e},{kind},{},{y1},{y2},{}",
                    ev.time,
                    fmt(&ev.parent),
                    ev.population_after
                )?;
            }
            if r == 0 {
                write_sidecar(
                    &path,
                    "event log of one replica",
                    &[
                        ("t", "time", "event time"),
                        ("kind", "enum", "death | fission"),
                        ("parent_x*", "length", "position of the affected particle"),
                        ("y1_*,y2_*", "length", "offspring positions (fission only)"),
                        ("population_after", "count", "population after the event"),
                    ],
                )?;
            }
        }
    }

    // Moment summary.
    let mut mean_population = Vec::new();
    let mut stderr_population = Vec::new();
    let mut fact = Vec::new();
    for k in 0..ensemble.snapshot_times.len() {
        let pops = ensemble.populations_at(k);
        let (m, se) = crate::stats::mean_stderr(&pops);
        mean_population.push(m);
        stderr_population.push(se);
        let mut orders = Vec::new();
        for order in 1..=3usize {
            let falling: Vec<f64> = pops
                .iter()
                .map(|&n| (0..order).map(|i| n - i as f64).product::<f64>().max(0.0))
                .collect();
            orders.push(crate::stats::mean_stderr(&falling).0);
        }
        fact.push(orders);
    }
    let summary = EnsembleSummary {
        master_seed: seed,
        params_hash: hash,
        replicas: sim_section.replicas,
        times: ensemble.snapshot_times.clone(),
        mean_population,
        stderr_population,
        factorial_moments: fact,
        guard_tripped: ensemble
            .replicas
            .iter()
            .filter(|t| t.termination == crate::simulator::Termination::GuardTripped)
            .count(),
    };
    write_json(&out.join("ensemble.json"), &summary)?;
    write_sidecar(
        &out.join("ensemble.json"),
        "ensemble moment summary per snapshot time",
        &[
            ("times", "time", "snapshot times"),
            ("mean_population", "count", "mean population over replicas"),
            ("stderr_population", "count", "standard error of the mean"),
            (
                "factorial_moments",
                "count^m",
                "empirical E[N(N-1)...(N-m+1)], orders 1..3",
            ),
        ],
    )?;
    Ok(ensemble)
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

/// Reloads an ensemble's snapshots from a run directory.
pub fn load_snapshots(run_dir: &Path, dim: usize, window_side: f64) -> Result<Ensemble, CliError> {
    let path = run_dir.join("snapshots.csv");
    let text = fs::read_to_string(&path)
        .map_err(|_| CliError::MissingData(format!("{} not found", path.display())))?;
    let mut replicas: Vec<Vec<Snapshot>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 + dim {
            return Err(CliError::MissingData(format!(
                "snapshot row {} malformed",
                lineno + 1
            )));
        }
        let replica: usize = fields[0]
            .parse()
            .map_err(|_| CliError::MissingData("bad replica index".into()))?;
        let t: f64 = fields[1]
            .parse()
            .map_err(|_| CliError::MissingData("bad time".into()))?;
        let mut p = crate::geometry::zero_position();
        for k in 0..dim {
            p[k] = fields[3 + k]
                .parse()
                .map_err(|_| CliError::MissingData("bad coordinate".into()))?;
        }
        while replicas.len() <= replica {
            replicas.push(Vec::new());
        }
        if !times.iter().any(|u| (*u - t).abs() < 1e-12) {
            times.push(t);
        }
        let snaps = &mut replicas[replica];
        match snaps.iter_mut().find(|s| (s.time - t).abs() < 1e-12) {
            Some(s) => s.positions.push(p),
            None => snaps.push(Snapshot {
                time: t,
                positions: vec![p],
            }),
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if replicas.is_empty() {
        return Err(CliError::MissingData("no snapshots in run directory".into()));
    }
    // Normalize: every replica carries a snapshot (possibly empty) per time.
    let trajectories: Vec<Trajectory> = replicas
        .into_iter()
        .map(|mut snaps| {
            snaps.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
            let mut full = Vec::with_capacity(times.len());
            for &t in &times {
                match snaps.iter().find(|s| (s.time - t).abs() < 1e-12) {
                    Some(s) => full.push(s.clone()),
                    None => full.push(Snapshot {
                        time: t,
                        positions: Vec::new(),
                    }),
                }
            }
            Trajectory {
                seed: 0,
                events: Vec::new(),
                snapshots: full,
                final_positions: Vec::new(),
                final_time: *times.last().unwrap_or(&0.0),
                n_events: 0,
                termination: crate::simulator::Termination::EndTime,
                max_rate_drift: 0.0,
            }
        })
        .collect();
    Ok(Ensemble {
        master_seed: 0,
        snapshot_times: times,
        replicas: trajectories,
        dimension: dim,
        window_side,
    })
}

#[derive(Debug, Serialize)]
struct AnalyzeBundle {
    intensity: crate::estimators::IntensityReport,
    pair_correlation: Option<crate::estimators::PairCorrelationEstimate>,
    factorial_moments: crate::estimators::FactorialMomentReport,
    bogoliubov: Vec<crate::estimators::BogoliubovReport>,
    envelope_note: Option<String>,
}

/// Runs the configured estimators over a persisted run directory.
pub fn run_analyze(
    config: &RunConfig,
    base: &Path,
    run_dir: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let params = config.model_params(base)?;
    let sim_section = config
        .simulation
        .as_ref()
        .ok_or(CliError::MissingSection("simulation"))?;
    let analysis = config
        .analysis
        .as_ref()
        .ok_or(CliError::MissingSection("analysis"))?;
    let ensemble = load_snapshots(run_dir, params.dimension, sim_section.window_side)?;
    if ensemble
        .replicas
        .iter()
        .all(|r| r.snapshots.iter().all(|s| s.positions.is_empty()))
    {
        ensure_dir(out)?;
        write_json(
            &out.join("analysis.json"),
            &serde_json::json!({"status": "no_data", "reason": "all snapshots empty"}),
        )?;
        return Err(CliError::Degenerate("all snapshots empty".into()));
    }

    let region = analysis
        .window
        .clone()
        .unwrap_or_else(|| BoxRegion::cube(0.0, sim_section.window_side, params.dimension));

    let intensity_report =
        intensity(&ensemble, &region).map_err(|e| CliError::Degenerate(e.to_string()))?;

    // Sub-Poissonian envelope from the analytics constants when present:
    // κ̂_t = e^{α₀ + c t} with α₀ = log(initial intensity) + slack.
    let (envelope, envelope_note) = match (&config.analytics, intensity_report.mean.first()) {
        (Some(section), Some(&rho0)) if rho0 > 0.0 => {
            let consts = params.constants();
            let cert = domination_certificate(
                &params.competition,
                &params.fission,
                params.dimension,
                section.epsilon,
                section.r,
                section.h,
                section.omega,
            )
            .map_err(|e| CliError::Degenerate(e.to_string()))?;
            let alpha0 = rho0.ln() + analysis.alpha0_slack;
            if alpha0 > -cert.omega.ln() {
                let c = consts.b_mass + cert.upsilon - consts.m_inf;
                let env: Vec<f64> = ensemble
                    .snapshot_times
                    .iter()
                    .map(|t| (alpha0 + c * t).exp())
                    .collect();
                (
                    Some(env),
                    Some(format!(
                        "envelope κ_t = exp({alpha0:.6} + {c:.6} t), slack {}",
                        analysis.alpha0_slack
                    )),
                )
            } else {
                (
                    None,
                    Some(format!(
                        "alpha0 = {alpha0:.6} below -log ω = {:.6}; envelope not certified",
                        -cert.omega.ln()
                    )),
                )
            }
        }
        _ => (None, None),
    };

    let moments_report = factorial_moments(&ensemble, &region, analysis.moment_orders, envelope)
        .map_err(|e| CliError::Degenerate(e.to_string()))?;

    let margin = params.competition.cutoff();
    let r_max = analysis
        .pair_r_max
        .unwrap_or(sim_section.window_side / 4.0);
    let last = ensemble.snapshot_times.len() - 1;
    let pair = pair_correlation(&ensemble, last, r_max, analysis.pair_bins, margin).ok();

    let mut bogo = Vec::new();
    for theta in &analysis.theta {
        if !theta.validate() {
            return Err(CliError::ConfigInvalid(
                "theta values must lie in (-1, 0]".into(),
            ));
        }
        bogo.push(
            bogoliubov_functional(&ensemble, theta, last)
                .map_err(|e| CliError::Degenerate(e.to_string()))?,
        );
    }

    ensure_dir(out)?;
    if let Some(p) = &pair {
        let path = out.join("pair_correlation.csv");
        let mut f = fs::File::create(&path)?;
        writeln!(f, "r_lo,r_hi,k2,stderr")?;
        for b in 0..p.k2.len() {
            writeln!(
                f,
                "{:.9e},{:.9e},{:.9e},{:.9e}",
                p.edges[b],
                p.edges[b + 1],
                p.k2[b],
                p.stderr[b]
            )?;
        }
        write_sidecar(
            &path,
            "radial pair-correlation estimate (minus-sampling)",
            &[
                ("r_lo,r_hi", "length", "bin edges"),
                ("k2", "intensity^2", "second correlation function"),
                ("stderr", "intensity^2", "replica-batch standard error"),
            ],
        )?;
    }
    let bundle = AnalyzeBundle {
        intensity: intensity_report,
        pair_correlation: pair,
        factorial_moments: moments_report,
        bogoliubov: bogo,
        envelope_note,
    };
    write_json(&out.join("analysis.json"), &bundle)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// master
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct MasterReport {
    n_states: usize,
    t_end: f64,
    dt: f64,
    total_mass: f64,
    truncation_leak: f64,
    clipped: f64,
    moments_chi: Vec<f64>,
    exp_moment_kappa_half: f64,
    mean_population: f64,
}

/// Builds the truncated generator, integrates the master equation and writes
/// the distribution, the population marginal and diagnostics.
pub fn run_master(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let section = config
        .master
        .as_ref()
        .ok_or(CliError::MissingSection("master"))?;
    let d = section.discrete_space()?;
    let ss = enumerate_states(section.m_sites, section.n_max)
        .map_err(|e| CliError::Degenerate(e.to_string()))?;
    let q = build_generator(&d, &ss);
    let p0 = DistributionVector::point_mass(&ss, &section.initial_state);
    let dt = section.dt.unwrap_or_else(|| default_step(&q));
    let p = evolve(&p0, &q, section.t_end, dt).map_err(|e| CliError::Degenerate(e.to_string()))?;

    ensure_dir(out)?;
    // Distribution snapshot keyed by canonical multiset encoding.
    let mut table = serde_json::Map::new();
    for (i, prob) in p.probabilities.iter().enumerate() {
        let key = if i == ss.sink() {
            "sink".to_string()
        } else {
            let eta = ss.space.state(i);
            if eta.is_empty() {
                "empty".to_string()
            } else {
                eta.iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join("-")
            }
        };
        table.insert(key, serde_json::json!(prob));
    }
    write_json(&out.join("distribution.json"), &serde_json::Value::Object(table))?;

    let marginal = p.population_marginal(&ss);
    let path = out.join("population_marginal.csv");
    {
        let mut f = fs::File::create(&path)?;
        writeln!(f, "n,probability")?;
        for (n, prob) in marginal.iter().enumerate() {
            writeln!(f, "{n},{prob:.17e}")?;
        }
        writeln!(f, "sink,{:.17e}", p.sink_mass(&ss))?;
    }
    write_sidecar(
        &path,
        "law of the population size at t_end",
        &[
            ("n", "count", "population size (\"sink\" = overflow state)"),
            ("probability", "1", "probability mass"),
        ],
    )?;

    let (chi, leak) = moments(&p, &ss, 4);
    let report = MasterReport {
        n_states: ss.n_states,
        t_end: section.t_end,
        dt,
        total_mass: p.total_mass(),
        truncation_leak: leak,
        clipped: p.clipped,
        moments_chi: chi,
        exp_moment_kappa_half: exp_moment(&p, &ss, 0.5),
        mean_population: crate::master_equation::mean_population(&p, &ss),
    };
    write_json(&out.join("master.json"), &report)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// constants
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ConstantsBundle {
    pub validation: crate::kernels::ValidationReport,
    pub certificate: DominationCertificate,
    pub rescaled_upsilon_at_half_omega: f64,
    pub time_bounds: TimeBoundReport,
    pub growth: analytics::GrowthReport,
    pub schedule: Schedule,
    pub regime: DispersalRegime,
    pub domination_audit: analytics::DominationReport,
}

/// Computes the full constants bundle: certificate, time bounds, growth,
/// schedule and regime tag.
pub fn run_constants(config: &RunConfig, base: &Path, out: &Path) -> Result<ConstantsBundle, CliError> {
    let params = config.model_params(base)?;
    let section = config
        .analytics
        .as_ref()
        .ok_or(CliError::MissingSection("analytics"))?;
    let validation = validate_params(&params).map_err(|e| CliError::Degenerate(e.to_string()))?;
    let consts = validation.constants.clone();

    let cert = domination_certificate(
        &params.competition,
        &params.fission,
        params.dimension,
        section.epsilon,
        section.r,
        section.h,
        section.omega,
    )
    .map_err(|e| match e {
        analytics::AnalyticsError::NoAdmissibleR => CliError::Degenerate(format!(
            "{e}; the competition kernel must be positive on a ball around the origin \
             (declare a kernel with a_r > 0 or pick a smaller r)"
        )),
        other => CliError::Degenerate(other.to_string()),
    })?;

    let rc = RateConstants {
        a_mass: consts.a_mass,
        b_mass: consts.b_mass,
        upsilon: cert.upsilon,
        beta_sup: consts.beta_sup,
        m_sup: consts.m_sup,
        a_sup: consts.a_sup,
    };
    let alpha1 = section.alpha0;
    let delta = analytics::delta_gap(&rc, alpha1).map_err(|e| CliError::Degenerate(e.to_string()))?;
    let alpha2 = alpha1 + delta;
    let bounds = time_bounds(&rc, alpha1, alpha2, section.kappa, section.kappa_prime)
        .map_err(|e| CliError::Degenerate(e.to_string()))?;
    let growth = growth_and_envelope(
        consts.b_mass,
        consts.m_inf,
        cert.omega,
        cert.upsilon,
        section.alpha0,
        1.0,
        bounds.t_scale,
    )
    .map_err(|e| CliError::Degenerate(e.to_string()))?;
    let sched = schedule(&rc, consts.m_inf, cert.omega, section.alpha0, section.horizon)
        .map_err(|e| CliError::Degenerate(e.to_string()))?;
    let regime = dispersal_regime(&params.competition, &params.fission, params.dimension, 512);
    let samples = poisson_samples(params.dimension, 8.0 * cert.r.max(1.0), 30.0, 2_000, 12345);
    let audit = verify_domination(
        &params.competition,
        &params.fission,
        params.dimension,
        cert.omega,
        cert.upsilon,
        &samples,
        Some(8.0 * cert.r.max(1.0)),
    );
    let rescaled = rescale_upsilon(cert.omega, cert.upsilon, 0.5 * cert.omega)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    let bundle = ConstantsBundle {
        validation,
        certificate: cert,
        rescaled_upsilon_at_half_omega: rescaled,
        time_bounds: bounds,
        growth,
        schedule: sched,
        regime,
        domination_audit: audit,
    };
    ensure_dir(out)?;
    write_json(&out.join("constants.json"), &bundle)?;

    let path = out.join("schedule.csv");
    {
        let mut f = fs::File::create(&path)?;
        writeln!(f, "n,t_n,alpha_star_n,alpha_n,sum_t")?;
        for s in &bundle.schedule.steps {
            writeln!(
                f,
                "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.n, s.t_n, s.alpha_star, s.alpha_n, s.elapsed
            )?;
        }
    }
    write_sidecar(
        &path,
        "continuation schedule",
        &[
            ("n", "index", "step number"),
            ("t_n", "time", "step length T_max(α*_{n-1})/3"),
            ("alpha_star_n", "1", "envelope level after the step"),
            ("alpha_n", "1", "working space level of the step"),
            ("sum_t", "time", "covered horizon"),
        ],
    )?;
    if !bundle.domination_audit.pass {
        return Err(CliError::VerificationFailed);
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyLevel {
    Quick,
    Full,
}

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub level: VerifyLevel,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

fn random_discrete_space(seed: u64, m: usize) -> DiscreteSpace {
    use rand::Rng;
    let mut r = crate::rng::replica_stream(seed, 0);
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let v = r.random::<f64>();
            a[i * m + j] = v;
            a[j * m + i] = v;
        }
    }
    let mortality = (0..m).map(|_| r.random::<f64>()).collect();
    let mut b = vec![0.0; m * m * m];
    for x in 0..m {
        for j in 0..m {
            for k in 0..=j {
                let v = 0.5 * r.random::<f64>();
                b[(x * m + j) * m + k] = v;
                b[(x * m + k) * m + j] = v;
            }
        }
    }
    DiscreteSpace::new(m, a, mortality, b)
}

/// Exact duality between the correlation evolution and the generator on
/// random measures; residual must stay below 1e-12.
pub fn check_duality(trials: usize) -> CheckResult {
    use rand::Rng;
    let m = 3usize;
    let n_max = 3usize;
    let d = random_discrete_space(501, m);
    let space = MultisetSpace::new(m, n_max + 2);
    let mut rng = crate::rng::replica_stream(502, 0);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let theta: Vec<f64> = (0..m).map(|_| -rng.random::<f64>() * 0.9).collect();
        let mut mu = Gamma0Function::zeros(space.clone());
        let mut mass = 0.0;
        for (i, eta) in space.states().iter().enumerate() {
            if eta.len() <= n_max {
                let v = rng.random::<f64>();
                mu.values[i] = v;
                mass += v;
            }
        }
        for v in &mut mu.values {
            *v /= mass;
        }
        let f = Gamma0Function::from_fn(space.clone(), |eta| f_theta(&theta, eta));
        let lf = apply_generator(&d, &f, n_max + 1).expect("headroom");
        let lhs: f64 = lf.values.iter().zip(&mu.values).map(|(a, b)| a * b).sum();
        let mut density = Gamma0Function::zeros(space.clone());
        for (i, eta) in space.states().iter().enumerate() {
            density.values[i] = mu.values[i] / lp_weight(eta);
        }
        let k_mu = correlation_from_density(&density);
        let ldk = apply_l_delta(&d, &k_mu, n_max + 1).expect("headroom");
        let e = Gamma0Function::from_fn(space.clone(), |eta| e_theta(&theta, eta));
        let rhs = pairing(&ldk, &e, n_max + 1).expect("cap");
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    CheckResult {
        name: format!("duality residual over {trials} random (mu, theta)"),
        pass: worst < 1e-12,
        detail: format!("worst residual {worst:.3e} (tolerance 1e-12)"),
    }
}

/// Exhaustive peeling/pairing identities and the K-transform bound.
pub fn check_combinatorial_identities() -> CheckResult {
    use rand::Rng;
    let m = 6usize;
    let space = MultisetSpace::new(m, 6);
    let mut rng = crate::rng::replica_stream(503, 0);
    let g_site: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let g = Gamma0Function::from_fn(space.clone(), |eta| {
        eta.iter().map(|&s| g_site[s as usize]).product()
    });
    let mut worst = 0.0f64;
    for mask in 1u32..64 {
        let gamma: Vec<u8> = (0..6).filter(|s| mask & (1 << s) != 0).collect();
        let lhs = k_transform(&g, &gamma);
        for &x in &gamma {
            let rest: Vec<u8> = gamma.iter().copied().filter(|&s| s != x).collect();
            let rhs = (1.0 + g_site[x as usize]) * k_transform(&g, &rest);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    // Pairing against a simple random measure.
    let space4 = MultisetSpace::new(4, 4);
    let g4 = Gamma0Function::from_fn(space4.clone(), |eta| {
        eta.iter().map(|&s| g_site[s as usize]).product()
    });
    let mut mu = Gamma0Function::zeros(space4.clone());
    for (i, eta) in space4.states().iter().enumerate() {
        if ms_simple(eta) {
            mu.values[i] = rng.random::<f64>();
        }
    }
    let mut density = Gamma0Function::zeros(space4.clone());
    for (i, eta) in space4.states().iter().enumerate() {
        density.values[i] = mu.values[i] / lp_weight(eta);
    }
    let k_mu = correlation_from_density(&density);
    let lhs: f64 = space4
        .states()
        .iter()
        .enumerate()
        .filter(|(_, eta)| ms_simple(eta))
        .map(|(i, eta)| k_transform(&g4, eta) * mu.values[i])
        .sum();
    let rhs = pairing(&g4, &k_mu, 4).expect("cap");
    worst = worst.max((lhs - rhs).abs());
    CheckResult {
        name: "peeling identity, pairing identity, transform bound (exhaustive)".into(),
        pass: worst < 1e-12,
        detail: format!("worst residual {worst:.3e} (tolerance 1e-12)"),
    }
}

/// Master equation vs the direct-method chain on a common discrete model.
pub fn check_tv_agreement(replicas: usize) -> CheckResult {
    let d = random_discrete_space(504, 3);
    let ss = enumerate_states(3, 12).expect("small space");
    let q = build_generator(&d, &ss);
    let initial: Vec<u8> = vec![0, 2];
    let p0 = DistributionVector::point_mass(&ss, &initial);
    let t = 0.5;
    let p = evolve(&p0, &q, t, default_step(&q)).expect("step ok");
    let marginal = p.population_marginal(&ss);
    let mut counts = vec![0.0; marginal.len() + 1];
    for i in 0..replicas {
        let n = discrete_ssa(&d, &initial, t, 50_000 + i as u64, 10_000);
        let slot = n.min(marginal.len());
        counts[slot] += 1.0;
    }
    let mut tv = 0.0;
    for k in 0..marginal.len() {
        tv += (counts[k] / replicas as f64 - marginal[k]).abs();
    }
    tv += (counts[marginal.len()] / replicas as f64 - p.sink_mass(&ss)).abs();
    tv *= 0.5;
    CheckResult {
        name: format!("total-variation agreement at {replicas} replicas"),
        pass: tv < 0.02,
        detail: format!("TV = {tv:.5} (tolerance 0.02), leak {:.2e}", p.sink_mass(&ss)),
    }
}

/// Generator sanity: exact column sums and matrix-exponential agreement.
pub fn check_generator(q: &crate::master_equation::GeneratorMatrix) -> CheckResult {
    let worst = q
        .column_sums()
        .iter()
        .fold(0.0f64, |acc, s| acc.max(s.abs()));
    CheckResult {
        name: "generator column sums".into(),
        pass: worst < 1e-12,
        detail: format!("max |column sum| = {worst:.3e} (tolerance 1e-12)"),
    }
}

pub fn check_master_vs_expm() -> CheckResult {
    let d = random_discrete_space(505, 2);
    let ss = enumerate_states(2, 3).expect("small");
    let q = build_generator(&d, &ss);
    let p0 = DistributionVector::point_mass(&ss, &[0]);
    let t = 1.0;
    let rk = evolve(&p0, &q, t, default_step(&q)).expect("step");
    let e = crate::master_equation::expm_dense(&q, t);
    let direct = crate::master_equation::apply_dense(&p0.probabilities, &e, ss.n_states);
    let worst = rk
        .probabilities
        .iter()
        .zip(&direct)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    CheckResult {
        name: "master equation vs dense matrix exponential".into(),
        pass: worst < 1e-8,
        detail: format!("sup diff {worst:.3e} (tolerance 1e-8)"),
    }
}

/// Domination certificate Monte Carlo sweep on a desk model.
pub fn check_domination(samples: usize) -> CheckResult {
    let a = RadialKernel::Tophat {
        amplitude: 1.0,
        radius: 1.0,
    };
    let f = FissionKernel::factorized(
        1.0,
        RadialKernel::Gaussian {
            amplitude: 1.0,
            scale: 0.4,
            cutoff: 2.0,
        },
    );
    match domination_certificate(&a, &f, 1, 0.05, 0.5, 0.5, None) {
        Ok(cert) => {
            let configs = poisson_samples(1, 12.0, 30.0, samples, 506);
            let report =
                verify_domination(&a, &f, 1, cert.omega, cert.upsilon, &configs, Some(12.0));
            CheckResult {
                name: format!("domination sweep on {samples} Poisson configurations"),
                pass: report.pass,
                detail: format!(
                    "violations {}, worst margin {:.4e}, omega {:.4}, upsilon {:.4}",
                    report.violations, report.worst_margin, cert.omega, cert.upsilon
                ),
            }
        }
        Err(e) => CheckResult {
            name: "domination certificate".into(),
            pass: false,
            detail: e.to_string(),
        },
    }
}

/// Lambert residual sweep and the closed-form maximizer against a search.
pub fn check_lambert() -> CheckResult {
    let min_x = -(-1.0f64).exp() + 1e-6;
    let mut worst = 0.0f64;
    for i in 0..=1000 {
        let x = if i < 200 {
            min_x + (0.0 - min_x) * i as f64 / 200.0
        } else {
            let t = (i - 200) as f64 / 800.0;
            10f64.powf(-6.0 + t * 12.0)
        };
        let w = lambert_w0(x).expect("in domain");
        let residual = (w * w.exp() - x).abs() / x.abs().max(1.0);
        worst = worst.max(residual);
    }
    // T_max against a golden-section argmax for 20 parameter sets.
    use rand::Rng;
    let mut rng = crate::rng::replica_stream(507, 0);
    let mut worst_tmax = 0.0f64;
    for _ in 0..20 {
        let c = RateConstants {
            a_mass: 0.2 + 2.0 * rng.random::<f64>(),
            b_mass: 0.2 + 2.0 * rng.random::<f64>(),
            upsilon: rng.random::<f64>(),
            beta_sup: 1.0,
            m_sup: 1.0,
            a_sup: 1.0,
        };
        let alpha1 = -1.0 + 2.0 * rng.random::<f64>();
        let t = |alpha2: f64| {
            (alpha2 - alpha1) / (2.0 * c.b_mass + c.upsilon + c.a_mass * alpha2.exp())
        };
        let (mut lo, mut hi) = (alpha1, alpha1 + 20.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if t(x1) < t(x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        let grid = t(0.5 * (lo + hi));
        let formula = analytics::t_max(&c, alpha1).expect("domain");
        worst_tmax = worst_tmax.max((formula - grid).abs());
    }
    CheckResult {
        name: "Lambert residual sweep and horizon maximizer".into(),
        pass: worst < 1e-12 && worst_tmax < 1e-6,
        detail: format!(
            "worst scaled residual {worst:.3e} (tol 1e-12), worst T_max gap {worst_tmax:.3e} (tol 1e-6)"
        ),
    }
}

/// Runs the verification suites. `quick` covers the exact identities and the
/// deterministic numerics; `full` adds the statistical cross-checks at their
/// acceptance sample sizes.
pub fn run_verify(level: VerifyLevel, out: Option<&Path>) -> Result<VerifyReport, CliError> {
    let mut checks = vec![
        check_duality(100),
        check_combinatorial_identities(),
        check_master_vs_expm(),
        check_lambert(),
    ];
    {
        let d = random_discrete_space(508, 3);
        let ss = enumerate_states(3, 5).expect("small");
        let q = build_generator(&d, &ss);
        checks.push(check_generator(&q));
    }
    match level {
        VerifyLevel::Quick => {
            checks.push(check_domination(2_000));
            checks.push(check_tv_agreement(20_000));
        }
        VerifyLevel::Full => {
            checks.push(check_domination(10_000));
            checks.push(check_tv_agreement(100_000));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport {
        level,
        checks,
        pass,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("verify.json"), &report)?;
    }
    for c in &report.checks {
        println!("[{}] {} — {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.pass {
        Ok(report)
    } else {
        Err(CliError::VerificationFailed)
    }
}
