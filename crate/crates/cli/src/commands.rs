//! The four subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use mfctrl::dynamics::{forward_flow, laplacian_rate_matrix, uniform_grid};
use mfctrl::feedback::decay_fit_errors;
use mfctrl::io;
use mfctrl::simulate::{switch_counts, trajectory_deviation};
use mfctrl::steering::schedule_endpoint;
use mfctrl::synthesis::{synthesize, synthesize_positive};
use mfctrl::{
    closed_loop_flow, global_steer, rational_realization, AgentTrace, ControlSchedule, Driver, EnsembleStats,
    Error, FeedbackLaw, GainCertificate, Graph, Result, SimConfig, StructureSpec, Trajectory,
};

use crate::config::{Controller, ExperimentConfig, Structure};
use crate::plot::{color, Plot, Series};

const DEFAULT_EPSILON: f64 = mfctrl::synthesis::DEFAULT_EPSILON;
const DEFAULT_TOL_MARGIN: f64 = mfctrl::synthesis::DEFAULT_TOL_MARGIN;
const STEER_SAMPLES: usize = 1000;

/// The resolved controller of an experiment.
#[derive(Debug, Clone)]
pub enum Control {
    Law(FeedbackLaw),
    Schedule(ControlSchedule),
}

impl Control {
    pub fn driver(&self) -> Driver<'_> {
        match self {
            Control::Law(l) => Driver::Law(l),
            Control::Schedule(s) => Driver::Schedule(s),
        }
    }

    pub fn mean_field(&self, g: &Graph, x0: &mfctrl::Density, grid: &[f64]) -> Result<Trajectory> {
        match self {
            Control::Law(l) => closed_loop_flow(g, l, x0, grid),
            Control::Schedule(s) => forward_flow(g, s, x0, grid),
        }
    }
}

fn require_connected(g: &Graph) -> Result<()> {
    match g.nonconnectivity_witness() {
        None => Ok(()),
        Some(w) => {
            let one = |v: &[usize]| v.iter().map(|x| x + 1).collect::<Vec<_>>();
            Err(Error::Precondition(format!(
                "graph is not strongly connected: vertex {} cannot be reached from vertex {}; V1 = {:?}, V2 = {:?}",
                w.v1 + 1,
                w.v2 + 1,
                one(&w.upstream),
                one(&w.downstream)
            )))
        }
    }
}

fn lmi_parameters(c: &Controller) -> (f64, f64, Structure) {
    match c {
        Controller::Lmi { epsilon, tol_margin, structure } => (*epsilon, *tol_margin, *structure),
        _ => (DEFAULT_EPSILON, DEFAULT_TOL_MARGIN, Structure::Positive),
    }
}

fn certify(cfg: &ExperimentConfig) -> Result<(GainCertificate, StructureSpec)> {
    require_connected(&cfg.graph)?;
    let (eps, tol, structure) = lmi_parameters(&cfg.controller);
    Ok(match structure {
        Structure::Positive => (
            synthesize_positive(&cfg.graph, &cfg.xeq, eps, tol)?,
            StructureSpec::positive(&cfg.graph, &cfg.xeq)?,
        ),
        Structure::Decentralized => (
            synthesize(&cfg.graph, &cfg.xeq, eps, tol)?,
            StructureSpec::decentralized(&cfg.graph),
        ),
    })
}

/// Gain law, realized with nonnegative rates when the graph is bidirected.
fn gain_law(g: &Graph, cert: &GainCertificate, xeq: &mfctrl::Density) -> Result<FeedbackLaw> {
    let law = FeedbackLaw::from_gain(g, &cert.k, xeq)?;
    if g.is_bidirected() {
        rational_realization(g, &law)
    } else {
        Ok(law)
    }
}

pub fn build_control(cfg: &ExperimentConfig) -> Result<Control> {
    let g = &cfg.graph;
    Ok(match &cfg.controller {
        Controller::Laplacian => {
            require_connected(g)?;
            Control::Law(FeedbackLaw::constant(g, laplacian_rate_matrix(g, &cfg.xeq)?.rates)?)
        }
        Controller::Lemma1 { scale } => {
            Control::Law(rational_realization(g, &FeedbackLaw::lemma1_scaled(g, &cfg.xeq, *scale)?)?)
        }
        Controller::Lmi { .. } => {
            let (cert, _) = certify(cfg)?;
            Control::Law(gain_law(g, &cert, &cfg.xeq)?)
        }
        Controller::Schedule { .. } => Control::Schedule(cfg.schedule.clone().expect("schedule loaded with config")),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

// ---- steer -----------------------------------------------------------------

pub fn steer(cfg: &ExperimentConfig) -> Result<Value> {
    let g = &cfg.graph;
    let t = cfg.horizon;
    let (schedule, segments, rho) = if cfg.x0 == cfg.xeq {
        (ControlSchedule::zero(g.edge_count(), t)?, 0, 0.0)
    } else {
        let s = global_steer(g, &cfg.x0, &cfg.xeq, t)?;
        (s.schedule, s.segments, s.rho)
    };
    let endpoint = schedule_endpoint(g, &schedule, &cfg.x0)?;
    let error = endpoint.sup_distance(cfg.xeq.as_slice());
    let traj = forward_flow(g, &schedule, &cfg.x0, &uniform_grid(t, STEER_SAMPLES))?;

    fs::create_dir_all(&cfg.output)?;
    io::write_text(&cfg.output.join("schedule.csv"), &io::schedule_to_string(&schedule))?;
    io::write_text(&cfg.output.join("steer_trajectory.csv"), &io::trajectory_to_string(&traj))?;
    let report = json!({
        "horizon": t,
        "segments": segments,
        "rho": rho,
        "intervals": schedule.interval_count(),
        "max_rate": schedule.max_rate(),
        "endpoint": endpoint.as_slice(),
        "target": cfg.xeq.as_slice(),
        "endpoint_error": error,
    });
    write_json(&cfg.output.join("steer.json"), &report)?;
    println!(
        "steer: {} segments, {} intervals, max rate {:.3e}, endpoint error {:.3e}",
        segments,
        schedule.interval_count(),
        schedule.max_rate(),
        error
    );
    Ok(report)
}

// ---- synth -----------------------------------------------------------------

pub fn synth(cfg: &ExperimentConfig) -> Result<Value> {
    let (cert, spec) = certify(cfg)?;
    let law = gain_law(&cfg.graph, &cert, &cfg.xeq)?;
    fs::create_dir_all(&cfg.output)?;
    write_json(&cfg.output.join("certificate.json"), &cert.to_file(&spec))?;
    io::write_text(&cfg.output.join("law.json"), &io::law_to_string(&law))?;
    let (eps, tol, structure) = lmi_parameters(&cfg.controller);
    let report = json!({
        "epsilon": eps,
        "tol_margin": tol,
        "structure": structure,
        "margin": cert.margin,
        "iterations": cert.iterations,
        "converged": cert.converged,
        "p_min": cert.p.iter().copied().fold(f64::INFINITY, f64::min),
        "k_max": cert.k.amax(),
        "law": law.kind().as_str(),
    });
    write_json(&cfg.output.join("synth.json"), &report)?;
    println!(
        "synth: feasible, margin {:.4e} after {} iterations; law {}",
        cert.margin,
        cert.iterations,
        law.kind().as_str()
    );
    Ok(report)
}

// ---- simulate --------------------------------------------------------------

fn trace_stem(seed: u64) -> String {
    format!("run-{seed}")
}

fn window_total(trace: &AgentTrace, from: f64) -> Result<usize> {
    Ok(switch_counts(trace, from, trace.horizon())?.iter().sum())
}

fn overlay_plot(cfg: &ExperimentConfig, traj: &Trajectory, trace: &AgentTrace) -> Plot {
    let mut series = Vec::new();
    let times = trace.times();
    for v in 0..cfg.graph.vertex_count() {
        series.push(Series {
            label: format!("x_{}", v + 1),
            points: traj.times.iter().zip(&traj.states).map(|(&t, x)| (t, x.as_slice()[v])).collect(),
            width: 3.0,
            color: color(v),
            steps: false,
        });
        series.push(Series {
            label: format!("N_{}/N", v + 1),
            points: times
                .iter()
                .zip(&trace.counts)
                .map(|(&t, c)| (t, c[v] as f64 / trace.agents as f64))
                .collect(),
            width: 0.8,
            color: color(v),
            steps: true,
        });
    }
    Plot {
        title: format!("{}: mean field (thick) and N = {} agents (thin), seed {}", cfg.controller.name(), trace.agents, trace.seed),
        x_label: "t".into(),
        y_label: "fraction of agents".into(),
        series,
    }
}

fn agent_plot(cfg: &ExperimentConfig, trace: &AgentTrace) -> Option<Plot> {
    let log = trace.log.as_ref()?;
    let mut state = *log.initial.first()? as f64 + 1.0;
    let mut points = vec![(0.0, state)];
    for tr in log.transitions.iter().filter(|tr| tr.agent == 0) {
        state = tr.to as f64 + 1.0;
        points.push((trace.time(tr.step as usize), state));
    }
    points.push((trace.horizon(), state));
    Some(Plot {
        title: format!("{}: state of agent 1, seed {}", cfg.controller.name(), trace.seed),
        x_label: "t".into(),
        y_label: "vertex".into(),
        series: vec![Series { label: "agent 1".into(), points, width: 1.5, color: color(0), steps: true }],
    })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Value> {
    let g = &cfg.graph;
    let control = build_control(cfg)?;
    let samples = (cfg.horizon / cfg.dt).round().max(1.0) as usize;
    let traj = control.mean_field(g, &cfg.x0, &uniform_grid(cfg.horizon, samples))?;
    let mf_error = traj.last().sup_distance(cfg.xeq.as_slice());

    let sim = SimConfig::new(cfg.agents, cfg.horizon, 0).with_dt(cfg.dt).recording();
    info!("simulating {} runs of {} agents", cfg.seeds.len(), cfg.agents);
    let traces = mfctrl::simulate::ensemble_traces(g, control.driver(), &cfg.x0, &sim, &cfg.seeds)?;

    let out = &cfg.output;
    let trace_dir = out.join("traces");
    fs::create_dir_all(&trace_dir)?;
    io::write_text(&out.join("meanfield.csv"), &io::trajectory_to_string(&traj))?;

    let mut switches = String::from("seed,");
    switches.push_str(&(1..=g.vertex_count()).map(|v| format!("S_{v}")).collect::<Vec<_>>().join(","));
    switches.push_str(",total\n");
    let mut runs = Vec::new();
    for trace in &traces {
        io::write_trace(&trace_dir, &trace_stem(trace.seed), trace)?;
        let counts = switch_counts(trace, cfg.window_start, cfg.horizon)?;
        let total: usize = counts.iter().sum();
        let _ = writeln!(
            switches,
            "{},{},{}",
            trace.seed,
            counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            total
        );
        let fin = trace.density_at(trace.steps());
        runs.push(json!({
            "seed": trace.seed,
            "final_error": cfg.xeq.sup_distance(&fin),
            "mean_field_deviation": trajectory_deviation(trace, &traj)?,
            "window_switches": total,
            "split_steps": trace.split_steps,
        }));
    }
    io::write_text(&out.join("switches.csv"), &switches)?;

    let variance = if traces.len() >= 2 {
        let stats = EnsembleStats::from_traces(&traces)?;
        io::write_text(&out.join("ensemble.csv"), &ensemble_csv(&stats))?;
        Some(stats.steady_state_variance(cfg.window_start))
    } else {
        None
    };

    let first = &traces[0];
    io::write_text(&out.join("overlay.svg"), &overlay_plot(cfg, &traj, first).to_svg())?;
    if let Some(p) = agent_plot(cfg, first) {
        io::write_text(&out.join("agent.svg"), &p.to_svg())?;
    }

    let report = json!({
        "controller": cfg.controller.name(),
        "agents": cfg.agents,
        "dt": cfg.dt,
        "horizon": cfg.horizon,
        "window": [cfg.window_start, cfg.horizon],
        "mean_field_error": mf_error,
        "steady_state_variance": variance,
        "runs": runs,
    });
    write_json(&out.join("summary.json"), &report)?;
    let totals: Vec<usize> = traces.iter().map(|t| window_total(t, cfg.window_start)).collect::<Result<_>>()?;
    println!(
        "simulate: {} runs of {} agents, mean-field error {:.3e}, switches in [{}, {}]: {:?}",
        traces.len(),
        cfg.agents,
        mf_error,
        cfg.window_start,
        cfg.horizon,
        totals
    );
    Ok(report)
}

fn ensemble_csv(stats: &EnsembleStats) -> String {
    let m = stats.mean.first().map_or(0, |r| r.len());
    let mut s = String::from("t");
    for v in 1..=m {
        let _ = write!(s, ",mean_{v}");
    }
    for v in 1..=m {
        let _ = write!(s, ",var_{v}");
    }
    s.push('\n');
    for (k, &t) in stats.times.iter().enumerate() {
        let _ = write!(s, "{t:.11e}");
        for x in stats.mean[k].iter().chain(&stats.variance[k]) {
            let _ = write!(s, ",{x:.11e}");
        }
        s.push('\n');
    }
    s
}

// ---- analyze ---------------------------------------------------------------

/// Count CSVs under `<output>/traces`, sorted by name.
pub fn default_traces(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.output.join("traces");
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::Precondition(format!("no traces in {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".csv") && !n.ends_with(".agents.csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Precondition(format!("no traces in {}", dir.display())));
    }
    Ok(paths)
}

pub fn analyze(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<Value> {
    let m = cfg.graph.vertex_count();
    let mut traces = Vec::new();
    for p in paths {
        let trace = io::read_trace(p).map_err(|e| match e {
            Error::Io(err) => Error::Format(format!("{}: {err}", p.display())),
            Error::Json(err) => Error::Format(format!("{}: {err}", p.display())),
            other => other,
        })?;
        if trace.vertex_count() != m {
            return Err(Error::Format(format!(
                "{} has {} vertices, the graph has {m}",
                p.display(),
                trace.vertex_count()
            )));
        }
        traces.push(trace);
    }
    let mean_field = match build_control(cfg) {
        Ok(c) => {
            let horizon = traces.iter().map(|t| t.horizon()).fold(0.0, f64::max);
            let samples = (horizon / cfg.dt).round().max(1.0) as usize;
            Some(c.mean_field(&cfg.graph, &cfg.x0, &uniform_grid(horizon, samples))?)
        }
        Err(_) => None,
    };

    let mut entries = Vec::new();
    let mut text = String::new();
    for (p, trace) in paths.iter().zip(&traces) {
        let times = trace.times();
        let errors: Vec<f64> = (0..=trace.steps())
            .map(|k| {
                let x = trace.density_at(k);
                x.iter().zip(cfg.xeq.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        let fit = decay_fit_errors(&times, &errors);
        let from = cfg.window_start.min(trace.horizon());
        let switches = match trace.log {
            Some(_) => Some(window_total(trace, from)?),
            None => None,
        };
        let deviation = match &mean_field {
            Some(traj) => trajectory_deviation(trace, traj).ok(),
            None => None,
        };
        let final_error = cfg.xeq.sup_distance(&trace.density_at(trace.steps()));
        let _ = writeln!(
            text,
            "{}: seed {}, N = {}, final error {:.3e}, {}, window switches {}, mean-field deviation {}",
            p.display(),
            trace.seed,
            trace.agents,
            final_error,
            match &fit {
                Ok(f) => format!("decay fit m0 {:.3e} lambda {:.4}", f.m0, f.lambda),
                Err(e) => format!("decay fit rejected ({e})"),
            },
            switches.map_or("n/a".into(), |s| s.to_string()),
            deviation.map_or("n/a".into(), |d| format!("{d:.3e}")),
        );
        entries.push(json!({
            "file": p.display().to_string(),
            "seed": trace.seed,
            "agents": trace.agents,
            "law": trace.label,
            "final_error": final_error,
            "decay_fit": fit.as_ref().ok().map(|f| json!({"m0": f.m0, "lambda": f.lambda, "points": f.points})),
            "decay_fit_rejected": fit.as_ref().err().map(|e| e.to_string()),
            "window_switches": switches,
            "mean_field_deviation": deviation,
        }));
    }

    let comparable = traces.len() >= 2
        && traces.iter().all(|t| t.steps() == traces[0].steps() && t.dt == traces[0].dt && t.agents == traces[0].agents);
    let variance = if comparable {
        Some(EnsembleStats::from_traces(&traces)?.steady_state_variance(cfg.window_start))
    } else {
        None
    };
    let _ = writeln!(
        text,
        "steady-state variance from t = {}: {}",
        cfg.window_start,
        variance.map_or("n/a (needs at least two matching traces)".into(), |v| format!("{v:.4e}"))
    );

    let report = json!({
        "xeq": cfg.xeq.as_slice(),
        "window_start": cfg.window_start,
        "steady_state_variance": variance,
        "traces": entries,
    });
    write_json(&cfg.output.join("report.json"), &report)?;
    io::write_text(&cfg.output.join("report.txt"), &text)?;
    print!("{text}");
    Ok(report)
}
