//! Mean-field forward equation `x' = sum_e u_e B_e x`: simplex states,
//! piecewise-constant schedules, fixed-step RK4 integration for open- and
//! closed-loop rates, closed-form edge exponentials and the Laplacian
//! constant-rate construction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph};

/// Tolerance on the simplex constraints of a [`Density`].
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Largest integrator step.
pub const MAX_STEP: f64 = 1e-3;

/// Bound on `h * (total exit rate of a vertex)` per integrator step.
pub const RATE_STEP_FACTOR: f64 = 0.1;

/// Smallest step accepted before the integrator declares a blow-up.
const MIN_STEP: f64 = 1e-12;

/// Constant-rate segments needing more RK4 steps than this are advanced with
/// the matrix exponential of the generator instead.
pub const STIFF_STEPS: usize = 10_000;

/// A point of the probability simplex over the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Density(Vec<f64>);

impl Density {
    /// Validates `values` (finite, `>= -SIMPLEX_TOL`, sum within
    /// `SIMPLEX_TOL` of 1). Slightly negative entries are clipped to 0.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDensity("empty vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("non-finite entry {v}")));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -SIMPLEX_TOL {
            return Err(Error::InvalidDensity(format!("negative entry {min:.3e}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDensity(format!(
                "entries sum to {sum:.15}, expected 1"
            )));
        }
        Ok(Self(values.into_iter().map(|v| v.max(0.0)).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Point mass at `v`.
    pub fn vertex(m: usize, v: usize) -> Self {
        let mut x = vec![0.0; m];
        x[v] = 1.0;
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self) -> bool {
        self.min() > 0.0
    }

    pub fn require_interior(&self) -> Result<()> {
        if self.is_interior() {
            Ok(())
        } else {
            Err(Error::BoundaryState { min: self.min() })
        }
    }

    pub fn require_len(&self, m: usize) -> Result<()> {
        if self.len() == m {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "density has {} entries, graph has {m} vertices",
                self.len()
            )))
        }
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        sup_norm_diff(&self.0, other)
    }

    pub fn l2_distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for Density {
    type Output = f64;
    fn index(&self, v: usize) -> &f64 {
        &self.0[v]
    }
}

pub(crate) fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Piecewise-constant nonnegative edge rates: `rates[k][e]` holds on
/// `[breakpoints[k], breakpoints[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    breakpoints: Vec<f64>,
    rates: Vec<Vec<f64>>,
}

impl ControlSchedule {
    pub fn new(breakpoints: Vec<f64>, rates: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || rates.len() != breakpoints.len() - 1 {
            return Err(Error::InvalidSchedule(format!(
                "{} breakpoints for {} intervals",
                breakpoints.len(),
                rates.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidSchedule("schedule must start at t = 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidSchedule(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        let n = rates[0].len();
        for row in &rates {
            if row.len() != n {
                return Err(Error::InvalidSchedule("ragged rate rows".into()));
            }
            for (e, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    return Err(Error::InvalidSchedule(format!("non-finite rate on edge {}", e + 1)));
                }
                if r < 0.0 {
                    return Err(Error::NegativeRate { edge: e + 1, rate: r });
                }
            }
        }
        Ok(Self { breakpoints, rates })
    }

    /// Time-invariant rates on `[0, horizon]`.
    pub fn constant(rates: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![rates])
    }

    pub fn zero(edge_count: usize, horizon: f64) -> Result<Self> {
        Self::constant(vec![0.0; edge_count], horizon)
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn edge_count(&self) -> usize {
        self.rates[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn interval_count(&self) -> usize {
        self.rates.len()
    }

    pub fn interval_rates(&self, k: usize) -> &[f64] {
        &self.rates[k]
    }

    /// `(t_start, t_end, rates)` for every interval.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, &[f64])> {
        self.breakpoints
            .windows(2)
            .zip(&self.rates)
            .map(|(w, r)| (w[0], w[1], r.as_slice()))
    }

    /// Rates in force at `t` (right-continuous; the last interval is closed).
    pub fn rates_at(&self, t: f64) -> &[f64] {
        let k = self.breakpoints[1..].partition_point(|&b| b <= t);
        &self.rates[k.min(self.rates.len() - 1)]
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Appends `other`, shifted to start at this schedule's horizon.
    pub fn append(&mut self, other: &ControlSchedule) -> Result<()> {
        if other.edge_count() != self.edge_count() {
            return Err(Error::Dimension("schedules cover different edge sets".into()));
        }
        let offset = self.horizon();
        self.breakpoints
            .extend(other.breakpoints[1..].iter().map(|b| b + offset));
        self.rates.extend(other.rates.iter().cloned());
        Ok(())
    }
}

/// Sampled solution of the forward equation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Density>,
    /// Largest integrator step actually used.
    pub step: f64,
    pub label: String,
}

impl Trajectory {
    pub fn last(&self) -> &Density {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `n + 1` equally spaced points on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

/// A per-edge transition-rate law `k_e(y)`.
pub trait RateLaw {
    fn rate(&self, e: EdgeId, y: &[f64]) -> Result<f64>;

    /// Identity string recorded in trajectory metadata.
    fn label(&self) -> String;

    /// Laws with state-dependent denominators are only defined on the
    /// interior of the simplex.
    fn requires_interior(&self) -> bool {
        false
    }

    fn rates(&self, edge_count: usize, y: &[f64]) -> Result<Vec<f64>> {
        (0..edge_count).map(|e| self.rate(e, y)).collect()
    }
}

/// Time-invariant rates viewed as a (state-independent) law.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantRates(pub Vec<f64>);

impl RateLaw for ConstantRates {
    fn rate(&self, e: EdgeId, _y: &[f64]) -> Result<f64> {
        Ok(self.0[e])
    }

    fn label(&self) -> String {
        "constant".into()
    }
}

/// `sum_e rates[e] * B_e y`, accumulated edge by edge.
pub fn apply_rates(g: &Graph, rates: &[f64], y: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (e, &(s, t)) in g.edges().iter().enumerate() {
        let flux = rates[e] * y[s];
        out[s] -= flux;
        out[t] += flux;
    }
}

/// Closed-loop vector field `sum_e k_e(y) B_e y`.
pub fn vector_field(g: &Graph, law: &dyn RateLaw, y: &[f64]) -> Result<Vec<f64>> {
    let rates = law.rates(g.edge_count(), y)?;
    let mut out = vec![0.0; y.len()];
    apply_rates(g, &rates, y, &mut out);
    Ok(out)
}

/// `||sum_e k_e(x) B_e x||_2 <= tol`.
pub fn is_equilibrium(g: &Graph, law: &dyn RateLaw, x: &Density, tol: f64) -> Result<bool> {
    let f = vector_field(g, law, x.as_slice())?;
    Ok(f.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol)
}

fn max_exit_rate(g: &Graph, rates: &[f64]) -> f64 {
    let mut exit = vec![0.0; g.vertex_count()];
    for (e, &(s, _)) in g.edges().iter().enumerate() {
        exit[s] += rates[e].abs();
    }
    exit.into_iter().fold(0.0, f64::max)
}

fn step_size(g: &Graph, rates: &[f64]) -> f64 {
    let r = max_exit_rate(g, rates);
    if r > 0.0 {
        MAX_STEP.min(RATE_STEP_FACTOR / r)
    } else {
        MAX_STEP
    }
}

fn renormalize(x: &mut [f64]) {
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::Precondition("output grid must start at t = 0".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Precondition("output grid must be finite and sorted".into()));
    }
    Ok(())
}

/// Classical RK4 step for `x' = f(x)`; `f` writes into its second argument.
fn rk4_step<F>(x: &mut [f64], h: f64, scratch: &mut Rk4Scratch, mut f: F) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    f(x, k1)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(tmp, k2)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(tmp, k3)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + h * k3[i];
    }
    f(tmp, k4)?;
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(m: usize) -> Self {
        Self {
            k1: vec![0.0; m],
            k2: vec![0.0; m],
            k3: vec![0.0; m],
            k4: vec![0.0; m],
            tmp: vec![0.0; m],
        }
    }
}

/// Integrates the open-loop forward equation under `schedule`, sampling at
/// `grid` (which must start at 0 and stay within the schedule's horizon).
pub fn forward_flow(
    g: &Graph,
    schedule: &ControlSchedule,
    x0: &Density,
    grid: &[f64],
) -> Result<Trajectory> {
    x0.require_len(g.vertex_count())?;
    check_grid(grid)?;
    if schedule.edge_count() != g.edge_count() {
        return Err(Error::Dimension(format!(
            "schedule has {} edges, graph has {}",
            schedule.edge_count(),
            g.edge_count()
        )));
    }
    let horizon = schedule.horizon();
    let t_end = *grid.last().unwrap();
    if t_end > horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidSchedule(format!(
            "schedule ends at {horizon} but output requested up to {t_end}"
        )));
    }

    let bps = schedule.breakpoints();
    let mut x = x0.as_slice().to_vec();
    let mut scratch = Rk4Scratch::new(x.len());
    let mut t = 0.0;
    let mut k = 0;
    let mut largest_step: f64 = 0.0;
    let mut states = Vec::with_capacity(grid.len());

    for &target in grid {
        let target = target.min(horizon);
        while t < target {
            while k + 1 < schedule.interval_count() && bps[k + 1] <= t {
                k += 1;
            }
            let seg_end = target.min(bps[k + 1]);
            let rates = schedule.interval_rates(k);
            let h_max = step_size(g, rates);
            let span = seg_end - t;
            let n = (span / h_max).ceil().max(1.0) as usize;
            let h = span / n as f64;
            largest_step = largest_step.max(h);
            if n > STIFF_STEPS {
                let y = (g.generator(rates) * span).exp() * nalgebra::DVector::from_column_slice(&x);
                x.iter_mut().zip(y.iter()).for_each(|(a, &b)| *a = b.max(0.0));
                renormalize(&mut x);
            } else if rates.iter().any(|&r| r != 0.0) {
                for _ in 0..n {
                    rk4_step(&mut x, h, &mut scratch, |y, out| {
                        apply_rates(g, rates, y, out);
                        Ok(())
                    })?;
                    renormalize(&mut x);
                }
            }
            t = seg_end;
        }
        states.push(Density::new(x.clone()).map_err(|e| {
            Error::Numerical(format!("open-loop state left the simplex at t = {t}: {e}"))
        })?);
    }

    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        step: largest_step,
        label: "open-loop schedule".into(),
    })
}

/// Integrates `x' = sum_e k_e(x) B_e x`. Negative rates are allowed; laws
/// that require the interior abort with [`Error::InteriorViolation`] when a
/// coordinate reaches zero.
pub fn closed_loop_flow(
    g: &Graph,
    law: &dyn RateLaw,
    x0: &Density,
    grid: &[f64],
) -> Result<Trajectory> {
    x0.require_len(g.vertex_count())?;
    check_grid(grid)?;
    let interior = law.requires_interior();
    if interior && !x0.is_interior() {
        return Err(Error::InteriorViolation { t: 0.0, min: x0.min() });
    }
    let n_e = g.edge_count();
    let mut x = x0.as_slice().to_vec();
    let mut scratch = Rk4Scratch::new(x.len());
    let mut rates = vec![0.0; n_e];
    let mut t = 0.0;
    let mut largest_step: f64 = 0.0;
    let mut states = Vec::with_capacity(grid.len());

    let field = |y: &[f64], out: &mut [f64], rates: &mut Vec<f64>| -> Result<()> {
        for (e, r) in rates.iter_mut().enumerate() {
            *r = law.rate(e, y)?;
        }
        apply_rates(g, rates, y, out);
        Ok(())
    };

    for &target in grid {
        while t < target {
            for (e, r) in rates.iter_mut().enumerate() {
                *r = law.rate(e, &x)?;
            }
            let h = step_size(g, &rates).min(target - t);
            if !(h.is_finite()) || (h < MIN_STEP && target - t > MIN_STEP) {
                return Err(Error::Numerical(format!(
                    "step size underflow at t = {t} (rates blowing up)"
                )));
            }
            largest_step = largest_step.max(h);
            let mut stage_rates = vec![0.0; n_e];
            rk4_step(&mut x, h, &mut scratch, |y, out| {
                field(y, out, &mut stage_rates)
            })?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite state at t = {t}")));
            }
            renormalize(&mut x);
            t += h;
            let min = x.iter().copied().fold(f64::INFINITY, f64::min);
            if interior && min <= 0.0 {
                return Err(Error::InteriorViolation { t, min });
            }
            if min < -SIMPLEX_TOL {
                return Err(Error::Numerical(format!(
                    "closed-loop state left the simplex at t = {t:.6} (min {min:.3e})"
                )));
            }
        }
        states.push(Density::new(x.clone())?);
    }

    Ok(Trajectory {
        times: grid.to_vec(),
        states,
        step: largest_step,
        label: law.label(),
    })
}

/// Closed-form `exp(t B_e)`: identity except `e^{-t}` at `(S, S)` and
/// `1 - e^{-t}` at `(T, S)`.
pub fn edge_exponential(g: &Graph, e: EdgeId, t: f64) -> DMatrix<f64> {
    let (s, tgt) = g.edges()[e];
    let mut m = DMatrix::identity(g.vertex_count(), g.vertex_count());
    m[(s, s)] = (-t).exp();
    m[(tgt, s)] = -(-t).exp_m1();
    m
}

/// In-place `y <- exp(tau B_e) y`.
pub fn apply_edge_exponential(g: &Graph, e: EdgeId, tau: f64, y: &mut [f64]) {
    let (s, t) = g.edges()[e];
    let moved = -(-tau).exp_m1() * y[s];
    y[s] -= moved;
    y[t] += moved;
}

/// Constant-rate controller whose generator is `-L D`, `D = diag(1/x^eq)`.
#[derive(Debug, Clone)]
pub struct LaplacianRates {
    pub matrix: DMatrix<f64>,
    /// `u_e = G[T(e), S(e)]`.
    pub rates: Vec<f64>,
}

impl LaplacianRates {
    pub fn schedule(&self, horizon: f64) -> Result<ControlSchedule> {
        ControlSchedule::constant(self.rates.clone(), horizon)
    }

    pub fn law(&self) -> ConstantRates {
        ConstantRates(self.rates.clone())
    }
}

pub fn laplacian_rate_matrix(g: &Graph, xeq: &Density) -> Result<LaplacianRates> {
    xeq.require_len(g.vertex_count())?;
    g.require_bidirected()?;
    g.require_strongly_connected()?;
    xeq.require_interior()?;
    let m = g.vertex_count();
    let d = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 / xeq[i] } else { 0.0 });
    let matrix = -(g.laplacian() * d);
    let rates = g.edges().iter().map(|&(s, t)| matrix[(t, s)]).collect();
    Ok(LaplacianRates { matrix, rates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn two_cycle() -> Graph {
        Graph::chain(2).unwrap()
    }

    fn d(v: &[f64]) -> Density {
        Density::new(v.to_vec()).unwrap()
    }

    #[test]
    fn stiff_segment_uses_exponential() {
        let g = two_cycle();
        let sched = ControlSchedule::constant(vec![1e9, 3e9], 1.0).unwrap();
        let traj = forward_flow(&g, &sched, &d(&[0.1, 0.9]), &[0.0, 1e-6, 1.0]).unwrap();
        assert!(traj.states[1].sup_distance(&[0.75, 0.25]) < 1e-12);
        assert!(traj.states[2].sup_distance(&[0.75, 0.25]) < 1e-12);
        // x_1(t) = 3/4 + (x_1(0) - 3/4) e^{-4t} at a scale that stays on RK4.
        let sched = ControlSchedule::constant(vec![1.0, 3.0], 2.0).unwrap();
        let traj = forward_flow(&g, &sched, &d(&[0.1, 0.9]), &[0.0, 0.5]).unwrap();
        assert!((traj.states[1].as_slice()[0] - (0.75 - 0.65 * (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn density_validation() {
        assert!(Density::new(vec![0.5, 0.6]).is_err());
        assert!(Density::new(vec![1.1, -0.1]).is_err());
        assert!(Density::new(vec![f64::NAN, 1.0]).is_err());
        let x = Density::new(vec![1.0 + 5e-11, -5e-11]).unwrap();
        assert_eq!(x[1], 0.0);
        assert!(!x.is_interior());
        assert!(d(&[0.3, 0.7]).is_interior());
    }

    #[test]
    fn schedule_validation_and_lookup() {
        assert!(matches!(
            ControlSchedule::new(vec![0.0, 1.0], vec![vec![-1.0]]),
            Err(Error::NegativeRate { .. })
        ));
        assert!(ControlSchedule::new(vec![0.0, 1.0, 1.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ControlSchedule::new(vec![0.5, 1.0], vec![vec![1.0]]).is_err());
        let s = ControlSchedule::new(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(s.rates_at(0.5), &[1.0]);
        assert_eq!(s.rates_at(1.0), &[3.0]);
        assert_eq!(s.rates_at(2.0), &[3.0]);
    }

    #[test]
    fn zero_rates_keep_state() {
        let g = Graph::chain(4).unwrap();
        let x0 = d(&[0.7, 0.1, 0.1, 0.1]);
        let s = ControlSchedule::zero(6, 2.0).unwrap();
        let traj = forward_flow(&g, &s, &x0, &uniform_grid(2.0, 4)).unwrap();
        assert!(traj.states.iter().all(|x| x == &x0));
    }

    #[test]
    fn two_state_closed_form() {
        let g = two_cycle();
        let s = ControlSchedule::constant(vec![1.0, 1.0], 3.0).unwrap();
        let grid = uniform_grid(3.0, 30);
        let traj = forward_flow(&g, &s, &d(&[1.0, 0.0]), &grid).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let a = 0.5 + 0.5 * (-2.0 * t).exp();
            assert!((x[0] - a).abs() < 1e-12, "t={t}: {} vs {a}", x[0]);
        }
    }

    #[test]
    fn single_edge_scalar_decay() {
        let g = Graph::from_one_based(2, &[(1, 2)]).unwrap();
        let u = 2.5;
        let s = ControlSchedule::constant(vec![u], 1.0).unwrap();
        let traj = forward_flow(&g, &s, &d(&[0.8, 0.2]), &[0.0, 0.4, 1.0]).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x[0] - 0.8 * (-u * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_gap_rejected() {
        let g = two_cycle();
        let s = ControlSchedule::constant(vec![1.0, 1.0], 1.0).unwrap();
        assert!(forward_flow(&g, &s, &d(&[0.5, 0.5]), &[0.0, 2.0]).is_err());
    }

    #[test]
    fn edge_exponentials() {
        let g = Graph::from_one_based(3, &[(1, 2), (2, 3)]).unwrap();
        assert_eq!(edge_exponential(&g, 0, 0.0), DMatrix::identity(3, 3));
        let big = edge_exponential(&g, 0, 50.0);
        assert!(big[(0, 0)] < 1e-20 && (big[(1, 0)] - 1.0).abs() < 1e-15);

        let (s, t) = (0.3_f64, 0.8_f64);
        let product = edge_exponential(&g, 1, t) * edge_exponential(&g, 0, s);
        let (es, et) = ((-s).exp(), (-t).exp());
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(3, 3, &[
            es, 0.0, 0.0,
            et * (1.0 - es), et, 0.0,
            (1.0 - et) * (1.0 - es), 1.0 - et, 1.0,
        ]);
        assert!((product - expected).abs().max() < 1e-15);
    }

    #[test]
    fn edge_exponential_matches_dense_expm() {
        let g = Graph::grid(2, 2).unwrap();
        for e in 0..g.edge_count() {
            let dense = (g.control_matrix(e) * 0.7).exp();
            assert!((dense - edge_exponential(&g, e, 0.7)).abs().max() < 1e-13);
        }
    }

    #[test]
    fn laplacian_controller() {
        let g = two_cycle();
        let lap = laplacian_rate_matrix(&g, &d(&[0.5, 0.5])).unwrap();
        assert_eq!(
            lap.matrix,
            DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 2.0, -2.0])
        );
        assert_eq!(lap.rates, vec![2.0, 2.0]);

        let g = Graph::chain(4).unwrap();
        let xeq = d(&[0.1, 0.1, 0.1, 0.7]);
        let lap = laplacian_rate_matrix(&g, &xeq).unwrap();
        let gx = &lap.matrix * nalgebra::DVector::from_column_slice(xeq.as_slice());
        assert!(gx.amax() < 1e-12);
        assert!(is_equilibrium(&g, &lap.law(), &xeq, 1e-12).unwrap());
        assert!(!is_equilibrium(&g, &lap.law(), &d(&[0.25; 4]), 1e-6).unwrap());

        let sched = lap.schedule(20.0).unwrap();
        let traj = forward_flow(&g, &sched, &d(&[0.7, 0.1, 0.1, 0.1]), &[0.0, 20.0]).unwrap();
        assert!(traj.last().sup_distance(xeq.as_slice()) < 1e-6);

        assert!(matches!(
            laplacian_rate_matrix(&g, &d(&[0.0, 0.2, 0.1, 0.7])),
            Err(Error::BoundaryState { .. })
        ));
    }

    #[test]
    fn zero_law_is_equilibrium_everywhere() {
        let g = Graph::chain(3).unwrap();
        let law = ConstantRates(vec![0.0; 4]);
        assert!(is_equilibrium(&g, &law, &d(&[0.2, 0.3, 0.5]), 0.0).unwrap());
        let traj = closed_loop_flow(&g, &law, &d(&[0.2, 0.3, 0.5]), &[0.0, 1.0]).unwrap();
        assert_eq!(traj.last(), &d(&[0.2, 0.3, 0.5]));
    }
}
