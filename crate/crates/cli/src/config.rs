//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mfctrl::{io, ControlSchedule, Density, Error, Graph, Result};

pub const DEFAULT_DT: f64 = mfctrl::simulate::DEFAULT_DT;
pub const DEFAULT_SCALE: f64 = 20.0;
pub const DEFAULT_RUNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    #[default]
    Positive,
    Decentralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", deny_unknown_fields)]
pub enum Controller {
    #[serde(rename = "case1-laplacian")]
    Laplacian,
    #[serde(rename = "case2-lemma1")]
    Lemma1 {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    #[serde(rename = "case3-lmi")]
    Lmi {
        epsilon: f64,
        tol_margin: f64,
        #[serde(default)]
        structure: Structure,
    },
    #[serde(rename = "custom-schedule")]
    Schedule { schedule: PathBuf },
}

fn default_scale() -> f64 {
    DEFAULT_SCALE
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Laplacian => "case1-laplacian",
            Controller::Lemma1 { .. } => "case2-lemma1",
            Controller::Lmi { .. } => "case3-lmi",
            Controller::Schedule { .. } => "custom-schedule",
        }
    }
}

/// On-disk form; relative paths are resolved against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub graph: PathBuf,
    pub x0: Vec<f64>,
    pub xeq: Vec<f64>,
    pub controller: Controller,
    pub horizon: f64,
    pub agents: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Explicit seeds; overrides `seed` and `runs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Start of the switch-count window; defaults to 80% of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub graph: Graph,
    pub graph_path: PathBuf,
    pub x0: Density,
    pub xeq: Density,
    pub controller: Controller,
    pub schedule: Option<ControlSchedule>,
    pub horizon: f64,
    pub agents: usize,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub window_start: f64,
    pub output: PathBuf,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn density(name: &str, v: &[f64], m: usize) -> Result<Density> {
    let d = Density::new(v.to_vec()).map_err(|e| Error::Precondition(format!("{name}: {e}")))?;
    d.require_len(m)?;
    Ok(d)
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Precondition(format!("cannot read config {}: {e}", path.display())))?;
        let file: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| Error::Precondition(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_file(file, base, overrides)
    }

    pub fn from_file(file: ConfigFile, base: &Path, overrides: &Overrides) -> Result<Self> {
        let graph_path = resolve(base, &file.graph);
        let graph = io::read_graph(&graph_path)
            .map_err(|e| Error::Precondition(format!("graph {}: {e}", graph_path.display())))?;
        let m = graph.vertex_count();
        let x0 = density("x0", &file.x0, m)?;
        let xeq = density("xeq", &file.xeq, m)?;
        if !(file.horizon > 0.0 && file.horizon.is_finite()) {
            return Err(Error::Precondition(format!("horizon must be positive, got {}", file.horizon)));
        }
        if !(file.dt > 0.0 && file.dt.is_finite()) {
            return Err(Error::Precondition(format!("dt must be positive, got {}", file.dt)));
        }
        if file.agents == 0 {
            return Err(Error::Precondition("agents must be positive".into()));
        }
        let schedule = match &file.controller {
            Controller::Schedule { schedule } => {
                let p = resolve(base, schedule);
                Some(
                    io::read_schedule(&p, graph.edge_count())
                        .map_err(|e| Error::Precondition(format!("schedule {}: {e}", p.display())))?,
                )
            }
            Controller::Lmi { epsilon, tol_margin, .. } => {
                if !(*epsilon > 0.0 && *tol_margin >= 0.0) {
                    return Err(Error::Precondition(format!(
                        "case3-lmi needs epsilon > 0 and tol_margin >= 0, got {epsilon} and {tol_margin}"
                    )));
                }
                None
            }
            Controller::Lemma1 { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Precondition(format!("scale must be positive, got {scale}")));
                }
                None
            }
            Controller::Laplacian => None,
        };
        let runs = overrides.runs.unwrap_or(file.runs);
        let seeds = match (&file.seeds, overrides.seed, overrides.runs) {
            (Some(s), None, None) => s.clone(),
            _ => mfctrl::simulate::seed_range(overrides.seed.unwrap_or(file.seed), runs),
        };
        if seeds.is_empty() {
            return Err(Error::Precondition("at least one run is required".into()));
        }
        let window_start = file.window_start.unwrap_or(0.8 * file.horizon);
        if !(0.0..file.horizon).contains(&window_start) {
            return Err(Error::Precondition(format!(
                "window_start {window_start} outside [0, {})",
                file.horizon
            )));
        }
        Ok(ExperimentConfig {
            graph,
            graph_path,
            x0,
            xeq,
            controller: file.controller,
            schedule,
            horizon: file.horizon,
            agents: file.agents,
            dt: file.dt,
            seeds,
            window_start,
            output: overrides.out.clone().unwrap_or_else(|| resolve(base, &file.output)),
        })
    }
}
