//! N-agent simulation through the first-order DTMC approximation of the CTMC.
//!
//! Each step, an agent at `v` moves along outgoing edge `e` with probability
//! `rate_e * dt` and stays otherwise. Rates are evaluated once per step from
//! the pre-step populations and read only `N_S(e)/N` and `N_T(e)/N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{ControlSchedule, Density, Trajectory};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::graph::{Graph, Vertex};

pub const DEFAULT_DT: f64 = 0.01;
/// Largest accepted `dt * (exit rate)` before a step is split.
pub const STEP_PROBABILITY_CAP: f64 = 0.5;
const MAX_HALVINGS: u32 = 30;

/// What drives the transition rates.
#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    Law(&'a FeedbackLaw),
    Schedule(&'a ControlSchedule),
}

impl Driver<'_> {
    pub fn label(&self) -> String {
        match self {
            Driver::Law(law) => law.kind().as_str().to_string(),
            Driver::Schedule(_) => "schedule".to_string(),
        }
    }

    fn edge_count(&self) -> usize {
        match self {
            Driver::Law(law) => law.edge_count(),
            Driver::Schedule(s) => s.edge_count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub agents: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Keep the per-agent transition log needed by [`switch_counts`].
    pub record_agents: bool,
}

impl SimConfig {
    pub fn new(agents: usize, horizon: f64, seed: u64) -> Self {
        Self {
            agents,
            dt: DEFAULT_DT,
            horizon,
            seed,
            record_agents: false,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_agents = true;
        self
    }

    fn steps(&self) -> Result<usize> {
        if self.agents == 0 {
            return Err(Error::Precondition("agent count must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite() && self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Precondition(format!(
                "need dt > 0 and horizon >= 0, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        let steps = (self.horizon / self.dt).round();
        if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(Error::Precondition(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// One agent transition, completed during the step ending at grid index `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub step: u32,
    pub agent: u32,
    pub to: u16,
}

/// Agent log: initial vertex per agent plus every transition in time order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLog {
    pub initial: Vec<u16>,
    pub transitions: Vec<Transition>,
}

impl AgentLog {
    /// Per-agent vertex at every grid index.
    pub fn states_at(&self, step: usize) -> Vec<Vertex> {
        let mut states: Vec<Vertex> = self.initial.iter().map(|&v| v as Vertex).collect();
        for tr in self.transitions.iter().take_while(|tr| tr.step as usize <= step) {
            states[tr.agent as usize] = tr.to as Vertex;
        }
        states
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrace {
    pub agents: usize,
    pub dt: f64,
    pub seed: u64,
    pub label: String,
    /// `counts[k][v]` is `N_v(k dt)`.
    pub counts: Vec<Vec<u32>>,
    pub log: Option<AgentLog>,
    /// Steps that had to be split to respect the probability cap.
    pub split_steps: usize,
}

impl AgentTrace {
    pub fn steps(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn vertex_count(&self) -> usize {
        self.counts[0].len()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.time(k)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn density_at(&self, k: usize) -> Vec<f64> {
        let n = self.agents as f64;
        self.counts[k].iter().map(|&c| c as f64 / n).collect()
    }

    /// Grid index of `t`, if `t` is on the grid.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.steps() || (k * self.dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return None;
        }
        Some(k as usize)
    }
}

/// Counts from `round(x0 * N)` with largest-remainder correction so they sum
/// to `N`. Ties go to the lower vertex id.
pub fn initial_counts(x0: &Density, agents: usize) -> Vec<u32> {
    let n = agents as f64;
    let mut counts: Vec<u32> = x0.as_slice().iter().map(|&x| (x * n).floor() as u32).collect();
    let assigned: usize = counts.iter().map(|&c| c as usize).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    let rem = |v: usize| x0[v] * n - (x0[v] * n).floor();
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &v in order.iter().take(agents.saturating_sub(assigned)) {
        counts[v] += 1;
    }
    counts
}

struct Stepper<'a> {
    g: &'a Graph,
    driver: Driver<'a>,
    agents: usize,
    rates: Vec<f64>,
    exit: Vec<f64>,
    split_steps: usize,
}

impl Stepper<'_> {
    fn evaluate(&mut self, counts: &[u32], t: f64) -> Result<f64> {
        let n = self.agents as f64;
        self.rates.iter_mut().for_each(|r| *r = 0.0);
        self.exit.iter_mut().for_each(|r| *r = 0.0);
        for (e, &(s, tv)) in self.g.edges().iter().enumerate() {
            if counts[s] == 0 {
                continue;
            }
            let rate = match self.driver {
                Driver::Law(law) => law.local_rate(e, counts[s] as f64 / n, counts[tv] as f64 / n)?,
                Driver::Schedule(sched) => sched.rates_at(t)[e],
            };
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::NegativeRate { edge: e, rate });
            }
            self.rates[e] = rate;
            self.exit[s] += rate;
        }
        Ok(self.exit.iter().copied().fold(0.0, f64::max))
    }

    /// Advances all agents by `h`, splitting in halves while the largest
    /// exit probability exceeds the cap.
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        states: &mut [Vertex],
        counts: &mut [u32],
        t: f64,
        h: f64,
        depth: u32,
        rng: &mut ChaCha8Rng,
        log: &mut Option<AgentLog>,
        step: u32,
    ) -> Result<()> {
        let max_exit = self.evaluate(counts, t)?;
        if h * max_exit > STEP_PROBABILITY_CAP {
            if depth >= MAX_HALVINGS {
                return Err(Error::StepOverflow(format!(
                    "exit rate {max_exit} needs a step below {h} at t = {t}"
                )));
            }
            if depth == 0 {
                self.split_steps += 1;
                log::warn!("dt * exit rate = {:.3} > {STEP_PROBABILITY_CAP} at t = {t}; halving", h * max_exit);
            }
            self.advance(states, counts, t, h / 2.0, depth + 1, rng, log, step)?;
            return self.advance(states, counts, t + h / 2.0, h / 2.0, depth + 1, rng, log, step);
        }
        for (agent, v) in states.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for &e in self.g.out_edges(*v) {
                acc += self.rates[e] * h;
                if u < acc {
                    let to = self.g.target(e);
                    counts[*v] -= 1;
                    counts[to] += 1;
                    *v = to;
                    if let Some(log) = log.as_mut() {
                        log.transitions.push(Transition {
                            step,
                            agent: agent as u32,
                            to: to as u16,
                        });
                    }
                    break;
                }
            }
        }
        Ok(())
    }
}

pub fn simulate_agents(g: &Graph, driver: Driver<'_>, x0: &Density, cfg: &SimConfig) -> Result<AgentTrace> {
    x0.require_len(g.vertex_count())?;
    if driver.edge_count() != g.edge_count() {
        return Err(Error::Dimension(format!(
            "driver has {} edges, graph has {}",
            driver.edge_count(),
            g.edge_count()
        )));
    }
    if let Driver::Schedule(s) = driver {
        if s.horizon() < cfg.horizon - 1e-12 {
            return Err(Error::Precondition(format!(
                "schedule ends at {} before horizon {}",
                s.horizon(),
                cfg.horizon
            )));
        }
    }
    let steps = cfg.steps()?;
    let mut counts = initial_counts(x0, cfg.agents);
    let mut states: Vec<Vertex> = Vec::with_capacity(cfg.agents);
    for (v, &c) in counts.iter().enumerate() {
        states.extend(std::iter::repeat_n(v, c as usize));
    }
    let mut log = cfg.record_agents.then(|| AgentLog {
        initial: states.iter().map(|&v| v as u16).collect(),
        transitions: Vec::new(),
    });
    let mut stepper = Stepper {
        g,
        driver,
        agents: cfg.agents,
        rates: vec![0.0; g.edge_count()],
        exit: vec![0.0; g.vertex_count()],
        split_steps: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(steps + 1);
    history.push(counts.clone());
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        stepper.advance(&mut states, &mut counts, t, cfg.dt, 0, &mut rng, &mut log, (k + 1) as u32)?;
        history.push(counts.clone());
    }
    Ok(AgentTrace {
        agents: cfg.agents,
        dt: cfg.dt,
        seed: cfg.seed,
        label: driver.label(),
        counts: history,
        log,
        split_steps: stepper.split_steps,
    })
}

pub fn empirical_density(trace: &AgentTrace, t: f64) -> Result<Density> {
    let k = trace
        .grid_index(t)
        .ok_or_else(|| Error::Precondition(format!("t = {t} is not on the trace grid")))?;
    Density::new(trace.density_at(k))
}

/// Transitions per agent completed in `(t_a, t_b]`.
pub fn switch_counts(trace: &AgentTrace, t_a: f64, t_b: f64) -> Result<Vec<usize>> {
    let log = trace
        .log
        .as_ref()
        .ok_or_else(|| Error::Precondition("agent transitions were not recorded".into()))?;
    let (ka, kb) = match (trace.grid_index(t_a), trace.grid_index(t_b)) {
        (Some(a), Some(b)) if a <= b => (a, b),
        _ => return Err(Error::Precondition(format!("window [{t_a}, {t_b}] is not on the trace grid"))),
    };
    let mut out = vec![0; trace.agents];
    for tr in &log.transitions {
        let k = tr.step as usize;
        if k > ka && k <= kb {
            out[tr.agent as usize] += 1;
        }
    }
    Ok(out)
}

/// Largest `|empirical - mean field|` over the common grid.
pub fn trajectory_deviation(trace: &AgentTrace, traj: &Trajectory) -> Result<f64> {
    if traj.len() != trace.counts.len() {
        return Err(Error::Dimension(format!(
            "trajectory has {} points, trace has {}",
            traj.len(),
            trace.counts.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        if (t - trace.time(k)).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::Dimension(format!("time mismatch at index {k}")));
        }
        worst = worst.max(x.sup_distance(&trace.density_at(k)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    /// Unbiased sample variance across runs.
    pub variance: Vec<Vec<f64>>,
    pub runs: usize,
}

impl EnsembleStats {
    pub fn from_traces(traces: &[AgentTrace]) -> Result<Self> {
        if traces.len() < 2 {
            return Err(Error::Precondition(format!("need at least 2 runs, got {}", traces.len())));
        }
        let len = traces[0].counts.len();
        let m = traces[0].vertex_count();
        if traces.iter().any(|t| t.counts.len() != len || t.dt != traces[0].dt) {
            return Err(Error::Dimension("traces have different grids".into()));
        }
        let r = traces.len() as f64;
        let mut mean = vec![vec![0.0; m]; len];
        let mut variance = vec![vec![0.0; m]; len];
        for k in 0..len {
            // Integer totals keep the mean exact when all runs agree.
            for (v, acc) in mean[k].iter_mut().enumerate() {
                let total: u64 = traces.iter().map(|tr| tr.counts[k][v] as u64).sum();
                let agents: u64 = traces.iter().map(|tr| tr.agents as u64).sum();
                *acc = total as f64 / agents as f64;
            }
            for tr in traces {
                for (v, x) in tr.density_at(k).into_iter().enumerate() {
                    variance[k][v] += (x - mean[k][v]).powi(2) / (r - 1.0);
                }
            }
        }
        Ok(Self {
            times: traces[0].times(),
            mean,
            variance,
            runs: traces.len(),
        })
    }

    /// Variance averaged over vertices and over grid times in `[t_from, T]`.
    pub fn steady_state_variance(&self, t_from: f64) -> f64 {
        let rows: Vec<&Vec<f64>> = self
            .times
            .iter()
            .zip(&self.variance)
            .filter(|(t, _)| **t >= t_from - 1e-9)
            .map(|(_, v)| v)
            .collect();
        let total: f64 = rows.iter().flat_map(|v| v.iter()).sum();
        total / (rows.len() * self.variance[0].len()).max(1) as f64
    }
}

/// Independent runs, one per seed, in parallel on the current rayon pool.
pub fn ensemble_traces(
    g: &Graph,
    driver: Driver<'_>,
    x0: &Density,
    cfg: &SimConfig,
    seeds: &[u64],
) -> Result<Vec<AgentTrace>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimConfig { seed, ..cfg.clone() };
            simulate_agents(g, driver, x0, &cfg)
        })
        .collect()
}

pub fn ensemble(g: &Graph, driver: Driver<'_>, x0: &Density, cfg: &SimConfig, seeds: &[u64]) -> Result<EnsembleStats> {
    if seeds.len() < 2 {
        return Err(Error::Precondition(format!("need at least 2 runs, got {}", seeds.len())));
    }
    let cfg = SimConfig {
        record_agents: false,
        ..cfg.clone()
    };
    EnsembleStats::from_traces(&ensemble_traces(g, driver, x0, &cfg, seeds)?)
}

/// Seeds `base, base + 1, ...`.
pub fn seed_range(base: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| base.wrapping_add(i)).collect()
}
