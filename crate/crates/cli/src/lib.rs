//! Commands behind the `urbandrive` binary: run one scenario, emit candidate
//! fans as tidy CSV, and run a suite of routes into an aggregate table.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use urbandrive_core::planner::{gen_lateral, gen_velocity_keeping, Candidate, PlanError, Target};
use urbandrive_core::polynomial::BoundaryState;
use urbandrive_sim::{aggregate, write_log, AggregateReport, MetricsReport, RunConfig, Scenario, SimError, Termination};

pub const FAN_DT: f64 = 0.02;
pub const FAN_HEADER: [&str; 5] = ["candidate_id", "t", "value", "velocity", "target"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Process exit code for a finished run.
pub fn exit_code(termination: Termination) -> u8 {
    if termination.is_infraction() {
        2
    } else {
        0
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs one scenario and writes `metrics.json` and `trajectory.csv` into `out`.
pub fn cmd_run(scenario: &Path, config: Option<&Path>, seed: u64, out: &Path) -> Result<MetricsReport, CliError> {
    let (scenario, map) = Scenario::load(scenario)?;
    let config = load_config(config)?;
    let result = urbandrive_sim::run_scenario(scenario, map, config, seed)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let json = serde_json::to_vec_pretty(&result.report).expect("report serializes");
    write_file(&out.join("metrics.json"), &json)?;
    let mut csv = Vec::new();
    write_log(&result.rows, &mut csv)?;
    write_file(&out.join("trajectory.csv"), &csv)?;
    Ok(result.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FanMode {
    Lateral,
    Velocity,
}

/// Start state of a fan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanStart {
    /// Lateral offset for the lateral fan, speed for the velocity fan.
    pub value: f64,
    pub rate: f64,
    /// Desired speed around which velocity targets are spread.
    pub target_speed: f64,
}

impl Default for FanStart {
    fn default() -> Self {
        Self {
            value: 0.0,
            rate: 0.0,
            target_speed: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanRow {
    pub candidate_id: usize,
    pub t: f64,
    /// Lateral offset, or distance travelled for the velocity fan.
    pub value: f64,
    pub velocity: f64,
    /// Terminal offset (lateral) or terminal speed (velocity).
    pub target: f64,
}

/// Candidates of one fan, generation order.
pub fn fan_candidates(mode: FanMode, start: FanStart, config: &RunConfig) -> Result<Vec<Candidate>, CliError> {
    let grid = &config.planner.grid;
    let weights = &config.planner.weights;
    Ok(match mode {
        FanMode::Lateral => gen_lateral(BoundaryState::new(start.value, start.rate, 0.0), grid, weights)?,
        FanMode::Velocity => gen_velocity_keeping(
            BoundaryState::new(0.0, start.value, start.rate),
            start.target_speed,
            grid,
            weights,
        )?,
    })
}

/// Samples every candidate at `FAN_DT`, always including `t = T`.
pub fn fan_rows(candidates: &[Candidate]) -> Vec<FanRow> {
    let mut rows = Vec::new();
    for (id, c) in candidates.iter().enumerate() {
        let horizon = c.terminal.horizon;
        let target = match c.terminal.target {
            Target::Position { pos, .. } => pos,
            Target::Velocity { vel, .. } => vel,
        };
        let n = (horizon / FAN_DT).round() as usize;
        for k in 0..=n {
            let t = if k == n { horizon } else { k as f64 * FAN_DT };
            let e = c.poly.eval_held(t);
            rows.push(FanRow {
                candidate_id: id,
                t,
                value: e.pos,
                velocity: e.vel,
                target,
            });
        }
    }
    rows
}

pub fn write_fan<W: std::io::Write>(rows: &[FanRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FAN_HEADER)?;
    for r in rows {
        w.write_record([
            r.candidate_id.to_string(),
            format!("{:.6}", r.t),
            format!("{:.9}", r.value),
            format!("{:.9}", r.velocity),
            format!("{:.9}", r.target),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the fan CSV and returns the number of candidates.
pub fn cmd_fan(mode: FanMode, start: FanStart, config: Option<&Path>, out: &Path) -> Result<usize, CliError> {
    let config = load_config(config)?;
    let candidates = fan_candidates(mode, start, &config)?;
    let rows = fan_rows(&candidates);
    let mut buf = Vec::new();
    write_fan(&rows, &mut buf).map_err(|e| CliError::io(out, e))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_file(out, &buf)?;
    Ok(candidates.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteRoute {
    pub scenario: PathBuf,
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub routes: Vec<SuiteRoute>,
}

/// Runs every route of the manifest; paths resolve against the manifest's
/// directory. Writes `route_NN/` outputs, `aggregate.json` and `aggregate.csv`.
pub fn cmd_suite(manifest: &Path, out: &Path) -> Result<AggregateReport, CliError> {
    let text = fs::read_to_string(manifest).map_err(|e| CliError::io(manifest, e))?;
    let parsed: SuiteManifest = serde_json::from_str(&text).map_err(|e| SimError::Parse {
        path: manifest.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if parsed.routes.is_empty() {
        return Err(CliError::Usage(format!("{}: manifest lists no routes", manifest.display())));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reports = Vec::new();
    for (i, route) in parsed.routes.iter().enumerate() {
        let dir = out.join(format!("route_{i:02}"));
        let config = route.config.as_ref().map(|c| base.join(c));
        let report = cmd_run(&base.join(&route.scenario), config.as_deref(), route.seed, &dir)?;
        reports.push(report);
    }
    let agg = aggregate(&reports).expect("non-empty");
    let json = serde_json::to_vec_pretty(&agg).expect("aggregate serializes");
    write_file(&out.join("aggregate.json"), &json)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["driving_score".to_string(), "route_completion".into(), "infraction_penalty".into()];
    header.extend(agg.infractions_per_km.keys().map(|k| format!("{k}_per_km")));
    let mut row = vec![
        format!("{:.6}", agg.driving_score),
        format!("{:.6}", agg.route_completion),
        format!("{:.6}", agg.infraction_penalty),
    ];
    row.extend(agg.infractions_per_km.values().map(|v| format!("{v:.6}")));
    let csv_err = |e: csv::Error| CliError::io(&out.join("aggregate.csv"), e);
    w.write_record(&header).map_err(csv_err)?;
    w.write_record(&row).map_err(csv_err)?;
    let bytes = w.into_inner().map_err(|e| CliError::io(&out.join("aggregate.csv"), e))?;
    write_file(&out.join("aggregate.csv"), &bytes)?;
    Ok(agg)
}
