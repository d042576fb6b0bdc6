//! File formats. Vertex, edge and agent ids are 1-based in every file.
//!
//! Each format has a `*_to_string` writer and a `parse_*` loader; the
//! `write_*`/`read_*` wrappers only add file access.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlSchedule, Density, Trajectory};
use crate::error::{Error, Result};
use crate::feedback::{rational_realization, FeedbackLaw, LawKind};
use crate::graph::Graph;
use crate::simulate::{AgentLog, AgentTrace, Transition};

fn format_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| format_err(line, format!("not a number: {field:?}")))
}

fn parse_usize(field: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| format_err(line, format!("not an integer: {field:?}")))
}

/// Non-empty data lines after the header, with 1-based line numbers.
fn data_lines<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => return Err(format_err(1, format!("expected header {header:?}, got {h:?}"))),
        None => return Err(Error::Format("empty file".into())),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').collect())))
}

fn expect_fields(fields: &[&str], n: usize, line: usize) -> Result<()> {
    if fields.len() != n {
        return Err(format_err(line, format!("expected {n} fields, got {}", fields.len())));
    }
    Ok(())
}

// ---- graph -----------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphFile {
    #[serde(rename = "M")]
    pub m: usize,
    pub edges: Vec<(usize, usize)>,
}

pub fn graph_to_string(g: &Graph) -> String {
    let file = GraphFile {
        m: g.vertex_count(),
        edges: g.edges().iter().map(|&(s, t)| (s + 1, t + 1)).collect(),
    };
    serde_json::to_string_pretty(&file).expect("graph serializes")
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let file: GraphFile = serde_json::from_str(text)?;
    Graph::from_one_based(file.m, &file.edges)
}

// ---- schedule --------------------------------------------------------------

pub const SCHEDULE_HEADER: &str = "t_start,t_end,edge_id,rate";

/// One row per nonzero rate; an all-zero interval is kept as a single row
/// with rate 0 on edge 1 so that its breakpoints survive.
pub fn schedule_to_string(s: &ControlSchedule) -> String {
    let mut out = String::from(SCHEDULE_HEADER);
    out.push('\n');
    for (a, b, rates) in s.intervals() {
        let mut any = false;
        for (e, &r) in rates.iter().enumerate() {
            if r != 0.0 {
                writeln!(out, "{a},{b},{},{r}", e + 1).unwrap();
                any = true;
            }
        }
        if !any {
            writeln!(out, "{a},{b},1,0").unwrap();
        }
    }
    out
}

pub fn parse_schedule(text: &str, edge_count: usize) -> Result<ControlSchedule> {
    let mut breakpoints = vec![0.0];
    let mut rates: Vec<Vec<f64>> = Vec::new();
    for (line, fields) in data_lines(text, SCHEDULE_HEADER)? {
        expect_fields(&fields, 4, line)?;
        let a = parse_f64(fields[0], line)?;
        let b = parse_f64(fields[1], line)?;
        let e = parse_usize(fields[2], line)?;
        let r = parse_f64(fields[3], line)?;
        if e == 0 || e > edge_count {
            return Err(format_err(line, format!("edge id {e} outside 1..={edge_count}")));
        }
        let last = *breakpoints.last().unwrap();
        if rates.is_empty() || a != breakpoints[breakpoints.len() - 2] || b != last {
            if a != last {
                return Err(format_err(line, format!("interval starts at {a}, expected {last}")));
            }
            breakpoints.push(b);
            rates.push(vec![0.0; edge_count]);
        }
        let row = rates.last_mut().unwrap();
        if row[e - 1] != 0.0 {
            return Err(format_err(line, format!("edge {e} repeated in one interval")));
        }
        row[e - 1] = r;
    }
    if rates.is_empty() {
        return Err(Error::Format("schedule has no intervals".into()));
    }
    ControlSchedule::new(breakpoints, rates)
}

// ---- trajectory ------------------------------------------------------------

fn density_header(prefix: &str, m: usize) -> String {
    let mut h = String::from("t");
    for v in 1..=m {
        write!(h, ",{prefix}_{v}").unwrap();
    }
    h
}

/// Twelve significant digits.
fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn trajectory_to_string(traj: &Trajectory) -> String {
    let m = traj.states.first().map_or(0, Density::len);
    let mut out = density_header("x", m);
    out.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.states) {
        out.push_str(&sig12(*t));
        for v in x.as_slice() {
            out.push(',');
            out.push_str(&sig12(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectory(text: &str, m: usize) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (line, fields) in data_lines(text, &density_header("x", m))? {
        expect_fields(&fields, m + 1, line)?;
        times.push(parse_f64(fields[0], line)?);
        let x = fields[1..].iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?;
        states.push(Density::new(x).map_err(|e| format_err(line, e))?);
    }
    if times.is_empty() {
        return Err(Error::Format("trajectory has no rows".into()));
    }
    let step = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(Trajectory {
        times,
        states,
        step,
        label: String::new(),
    })
}

// ---- agent traces ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceMeta {
    pub seed: u64,
    pub dt: f64,
    pub agents: usize,
    pub steps: usize,
    pub vertices: usize,
    pub law: String,
    pub rng: String,
    pub split_steps: usize,
    pub agents_recorded: bool,
}

pub const RNG_NAME: &str = "ChaCha8";

pub fn trace_meta(trace: &AgentTrace) -> TraceMeta {
    TraceMeta {
        seed: trace.seed,
        dt: trace.dt,
        agents: trace.agents,
        steps: trace.steps(),
        vertices: trace.vertex_count(),
        law: trace.label.clone(),
        rng: RNG_NAME.into(),
        split_steps: trace.split_steps,
        agents_recorded: trace.log.is_some(),
    }
}

pub fn trace_to_string(trace: &AgentTrace) -> String {
    let mut out = density_header("N", trace.vertex_count());
    out.push('\n');
    for (k, row) in trace.counts.iter().enumerate() {
        write!(out, "{}", trace.time(k)).unwrap();
        for c in row {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub const AGENTS_HEADER: &str = "t,agent_id,vertex";

/// Initial vertex of every agent at `t = 0`, then one row per transition.
pub fn agents_to_string(trace: &AgentTrace) -> Option<String> {
    let log = trace.log.as_ref()?;
    let mut out = String::from(AGENTS_HEADER);
    out.push('\n');
    for (i, v) in log.initial.iter().enumerate() {
        writeln!(out, "0,{},{}", i + 1, v + 1).unwrap();
    }
    for tr in &log.transitions {
        writeln!(out, "{},{},{}", trace.time(tr.step as usize), tr.agent + 1, tr.to + 1).unwrap();
    }
    Some(out)
}

pub fn parse_trace(csv: &str, meta: &TraceMeta, agents_csv: Option<&str>) -> Result<AgentTrace> {
    let m = meta.vertices;
    let mut counts = Vec::with_capacity(meta.steps + 1);
    for (line, fields) in data_lines(csv, &density_header("N", m))? {
        expect_fields(&fields, m + 1, line)?;
        let t = parse_f64(fields[0], line)?;
        let k = counts.len();
        if (t - k as f64 * meta.dt).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(format_err(line, format!("time {t} is not step {k} of dt {}", meta.dt)));
        }
        let row = fields[1..]
            .iter()
            .map(|f| parse_usize(f, line).map(|c| c as u32))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().map(|&c| c as usize).sum::<usize>() != meta.agents {
            return Err(format_err(line, format!("counts do not sum to {}", meta.agents)));
        }
        counts.push(row);
    }
    if counts.len() != meta.steps + 1 {
        return Err(Error::Format(format!(
            "expected {} rows, got {}",
            meta.steps + 1,
            counts.len()
        )));
    }
    let log = match agents_csv {
        Some(text) => Some(parse_agent_log(text, meta)?),
        None => None,
    };
    Ok(AgentTrace {
        agents: meta.agents,
        dt: meta.dt,
        seed: meta.seed,
        label: meta.law.clone(),
        counts,
        log,
        split_steps: meta.split_steps,
    })
}

fn parse_agent_log(text: &str, meta: &TraceMeta) -> Result<AgentLog> {
    let mut initial = Vec::with_capacity(meta.agents);
    let mut transitions = Vec::new();
    for (line, fields) in data_lines(text, AGENTS_HEADER)? {
        expect_fields(&fields, 3, line)?;
        let t = parse_f64(fields[0], line)?;
        let agent = parse_usize(fields[1], line)?;
        let v = parse_usize(fields[2], line)?;
        if agent == 0 || agent > meta.agents || v == 0 || v > meta.vertices {
            return Err(format_err(line, "agent or vertex id out of range"));
        }
        if initial.len() < meta.agents {
            if t != 0.0 || agent != initial.len() + 1 {
                return Err(format_err(line, "initial rows must list agents 1..N at t = 0"));
            }
            initial.push((v - 1) as u16);
            continue;
        }
        let step = (t / meta.dt).round();
        if step < 1.0 || (step * meta.dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(format_err(line, format!("time {t} is not a positive grid time")));
        }
        transitions.push(Transition {
            step: step as u32,
            agent: (agent - 1) as u32,
            to: (v - 1) as u16,
        });
    }
    if initial.len() != meta.agents {
        return Err(Error::Format("agent file lists fewer agents than the metadata".into()));
    }
    Ok(AgentLog { initial, transitions })
}

// ---- laws ------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LawFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xeq: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<LawFile>>,
}

pub fn law_file(law: &FeedbackLaw) -> LawFile {
    LawFile {
        kind: law.kind().as_str().into(),
        xeq: law.xeq().map(|x| x.as_slice().to_vec()),
        gain: law.gain().map(|k| k.row_iter().map(|r| r.iter().copied().collect()).collect()),
        scale: law.scale(),
        rates: law.constant_rates().map(<[f64]>::to_vec),
        base: law.base().map(|b| Box::new(law_file(b))),
    }
}

pub fn law_from_file(g: &Graph, file: &LawFile) -> Result<FeedbackLaw> {
    let xeq = || -> Result<Density> {
        Density::new(
            file.xeq
                .clone()
                .ok_or_else(|| Error::Format(format!("{} law needs xeq", file.kind)))?,
        )
    };
    match file.kind.as_str() {
        k if k == LawKind::Constant.as_str() => FeedbackLaw::constant(
            g,
            file.rates
                .clone()
                .ok_or_else(|| Error::Format("constant law needs rates".into()))?,
        ),
        k if k == LawKind::Lemma1.as_str() => FeedbackLaw::lemma1_scaled(g, &xeq()?, file.scale.unwrap_or(1.0)),
        k if k == LawKind::GainLinear.as_str() => {
            let rows = file
                .gain
                .as_ref()
                .ok_or_else(|| Error::Format("gain law needs a gain matrix".into()))?;
            let m = g.vertex_count();
            if rows.len() != g.edge_count() || rows.iter().any(|r| r.len() != m) {
                return Err(Error::Format("gain matrix has the wrong shape".into()));
            }
            let k = DMatrix::from_fn(rows.len(), m, |r, c| rows[r][c]);
            FeedbackLaw::from_gain(g, &k, &xeq()?)
        }
        k if k == LawKind::RationalRealized.as_str() => {
            let base = file
                .base
                .as_ref()
                .ok_or_else(|| Error::Format("realized law needs its base law".into()))?;
            rational_realization(g, &law_from_file(g, base)?)
        }
        other => Err(Error::Format(format!("unknown law kind {other:?}"))),
    }
}

pub fn law_to_string(law: &FeedbackLaw) -> String {
    serde_json::to_string_pretty(&law_file(law)).expect("law serializes")
}

pub fn parse_law(g: &Graph, text: &str) -> Result<FeedbackLaw> {
    law_from_file(g, &serde_json::from_str(text)?)
}

// ---- paths -----------------------------------------------------------------

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    parse_graph(&fs::read_to_string(path)?)
}

pub fn read_schedule(path: &Path, edge_count: usize) -> Result<ControlSchedule> {
    parse_schedule(&fs::read_to_string(path)?, edge_count)
}

pub fn read_law(g: &Graph, path: &Path) -> Result<FeedbackLaw> {
    parse_law(g, &fs::read_to_string(path)?)
}

/// Writes `<stem>.csv`, `<stem>.meta.json` and, if recorded, `<stem>.agents.csv`.
pub fn write_trace(dir: &Path, stem: &str, trace: &AgentTrace) -> Result<()> {
    write_text(&dir.join(format!("{stem}.csv")), &trace_to_string(trace))?;
    write_text(
        &dir.join(format!("{stem}.meta.json")),
        &serde_json::to_string_pretty(&trace_meta(trace))?,
    )?;
    if let Some(agents) = agents_to_string(trace) {
        write_text(&dir.join(format!("{stem}.agents.csv")), &agents)?;
    }
    Ok(())
}

/// Reads the files written by [`write_trace`] given the path of the counts CSV.
pub fn read_trace(csv_path: &Path) -> Result<AgentTrace> {
    let stem = csv_path
        .to_str()
        .and_then(|s| s.strip_suffix(".csv"))
        .ok_or_else(|| Error::Format(format!("{} is not a .csv path", csv_path.display())))?;
    let meta: TraceMeta = serde_json::from_str(&fs::read_to_string(format!("{stem}.meta.json"))?)?;
    let agents = if meta.agents_recorded {
        Some(fs::read_to_string(format!("{stem}.agents.csv"))?)
    } else {
        None
    };
    parse_trace(&fs::read_to_string(csv_path)?, &meta, agents.as_deref())
}
