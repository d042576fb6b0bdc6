//! Constructive open-loop steering between interior densities.
//!
//! A mass `rho` is carried from a base vertex around a closed covering walk
//! and back. Each step activates a single edge; its rate is chosen so that
//! exactly the carried mass leaves the source during the step, and the last
//! departure from every vertex drops or picks up that vertex's share of the
//! requested displacement. Endpoints are evaluated exactly as products of
//! closed-form edge exponentials.

use crate::dynamics::{apply_edge_exponential, sup_norm_diff, ControlSchedule, Density};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, Walk};

/// Endpoint tolerance of a single local plan.
pub const LOCAL_ENDPOINT_TOL: f64 = 1e-9;

/// Endpoint tolerance of a concatenated global plan.
pub const GLOBAL_ENDPOINT_TOL: f64 = 1e-8;

/// One constant-rate interval of a steering plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringStep {
    pub edge: EdgeId,
    pub duration: f64,
    pub rate: f64,
    /// Mass moved from `S(e)` to `T(e)` during the step.
    pub moved: f64,
    /// Mass resident at `S(e)` when the step starts.
    pub resident: f64,
    /// True on the last departure from `S(e)` along the walk.
    pub last_departure: bool,
    /// Accumulated displacement `sigma_i` after this step.
    pub accumulated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringPlan {
    pub walk: Walk,
    pub steps: Vec<SteeringStep>,
    pub displacement: Vec<f64>,
    pub rho: f64,
    pub horizon: f64,
}

impl SteeringPlan {
    /// Piecewise-constant schedule with one active edge per interval.
    pub fn schedule(&self, edge_count: usize) -> Result<ControlSchedule> {
        let s = self.steps.len();
        if s == 0 {
            return ControlSchedule::zero(edge_count, self.horizon);
        }
        let breakpoints = (0..=s)
            .map(|i| self.horizon * i as f64 / s as f64)
            .collect();
        let rates = self
            .steps
            .iter()
            .map(|st| {
                let mut row = vec![0.0; edge_count];
                row[st.edge] = st.rate;
                row
            })
            .collect();
        ControlSchedule::new(breakpoints, rates)
    }
}

/// Largest admissible carried mass for `x0`: just under half its smallest
/// coordinate.
pub fn default_rho(x0: &Density) -> f64 {
    0.5 * x0.min() * (1.0 - 1e-9)
}

/// Steers `x0` to `x0 + dx` in time `horizon` with the default `rho`.
pub fn local_steer(
    g: &Graph,
    x0: &Density,
    dx: &[f64],
    horizon: f64,
) -> Result<(SteeringPlan, ControlSchedule)> {
    local_steer_with_rho(g, x0, dx, horizon, default_rho(x0))
}

/// Steers `x0` to `x0 + dx` in time `horizon`, carrying mass `rho`.
///
/// Requires `min x0 > 2 rho`, `sum dx = 0` and `|dx_v| <= rho / M`.
pub fn local_steer_with_rho(
    g: &Graph,
    x0: &Density,
    dx: &[f64],
    horizon: f64,
    rho: f64,
) -> Result<(SteeringPlan, ControlSchedule)> {
    let m = g.vertex_count();
    x0.require_len(m)?;
    if dx.len() != m {
        return Err(Error::Dimension(format!("displacement has {} entries", dx.len())));
    }
    g.require_strongly_connected()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    if !(rho > 0.0) || x0.min() <= 2.0 * rho {
        return Err(Error::Precondition(format!(
            "x0 too close to the boundary for rho = {rho:.3e} (min coordinate {:.3e})",
            x0.min()
        )));
    }
    let total: f64 = dx.iter().sum();
    if total.abs() > 1e-12 {
        return Err(Error::Precondition(format!("displacement sums to {total:.3e}")));
    }
    let bound = rho / m as f64;
    if let Some((v, d)) = dx
        .iter()
        .enumerate()
        .find(|(_, d)| d.abs() > bound * (1.0 + 1e-9) + 1e-15)
    {
        return Err(Error::Precondition(format!(
            "displacement {d:.3e} at vertex {} exceeds rho/M = {bound:.3e}",
            v + 1
        )));
    }

    let walk = g.covering_closed_walk(0)?;
    let s = walk.len();
    let dt = horizon / s as f64;

    let mut last_departure = vec![false; s];
    let mut seen = vec![false; m];
    for (i, &e) in walk.edges.iter().enumerate().rev() {
        let src = g.source(e);
        if !seen[src] {
            seen[src] = true;
            last_departure[i] = true;
        }
    }

    let mut y = x0.as_slice().to_vec();
    let mut sigma = 0.0;
    let mut steps = Vec::with_capacity(s);
    for (i, &e) in walk.edges.iter().enumerate() {
        let src = g.source(e);
        if last_departure[i] {
            sigma += dx[src];
        }
        let moved = (rho - sigma).max(0.0);
        let resident = y[src];
        if moved >= resident * (1.0 - 1e-12) {
            return Err(Error::Numerical(format!(
                "step {} must move {moved:.3e} but only {resident:.3e} is resident",
                i + 1
            )));
        }
        let tau = -(-moved / resident).ln_1p();
        apply_edge_exponential(g, e, tau, &mut y);
        steps.push(SteeringStep {
            edge: e,
            duration: dt,
            rate: tau / dt,
            moved,
            resident,
            last_departure: last_departure[i],
            accumulated: sigma,
        });
    }

    let plan = SteeringPlan {
        walk,
        steps,
        displacement: dx.to_vec(),
        rho,
        horizon,
    };
    let reached = endpoint(g, &plan, x0)?;
    let target: Vec<f64> = x0.as_slice().iter().zip(dx).map(|(a, b)| a + b).collect();
    let err = sup_norm_diff(reached.as_slice(), &target);
    if err > LOCAL_ENDPOINT_TOL {
        return Err(Error::Numerical(format!(
            "local steering endpoint error {err:.3e}"
        )));
    }
    let schedule = plan.schedule(g.edge_count())?;
    Ok((plan, schedule))
}

/// Exact endpoint of a plan: the ordered product of edge exponentials
/// applied to `x0`.
pub fn endpoint(g: &Graph, plan: &SteeringPlan, x0: &Density) -> Result<Density> {
    let mut y = x0.as_slice().to_vec();
    for st in &plan.steps {
        apply_edge_exponential(g, st.edge, st.rate * st.duration, &mut y);
    }
    Density::new(y)
}

/// Exact endpoint of a schedule with at most one active edge per interval.
pub fn schedule_endpoint(g: &Graph, schedule: &ControlSchedule, x0: &Density) -> Result<Density> {
    let mut y = x0.as_slice().to_vec();
    for (t0, t1, rates) in schedule.intervals() {
        let mut active = rates.iter().enumerate().filter(|(_, &r)| r != 0.0);
        if let Some((e, &r)) = active.next() {
            if active.next().is_some() {
                return Err(Error::InvalidSchedule(
                    "closed-form endpoint needs one active edge per interval".into(),
                ));
            }
            apply_edge_exponential(g, e, r * (t1 - t0), &mut y);
        }
    }
    Density::new(y)
}

/// Concatenated steering plan between two interior densities.
#[derive(Debug, Clone)]
pub struct GlobalSteering {
    pub rho: f64,
    pub segments: usize,
    pub plans: Vec<SteeringPlan>,
    pub schedule: ControlSchedule,
    pub endpoint: Density,
    pub endpoint_error: f64,
}

/// Steers `x0` to `xt` in time `horizon` by splitting the straight segment
/// into pieces small enough for [`local_steer_with_rho`].
pub fn global_steer(g: &Graph, x0: &Density, xt: &Density, horizon: f64) -> Result<GlobalSteering> {
    let m = g.vertex_count();
    x0.require_len(m)?;
    xt.require_len(m)?;
    g.require_strongly_connected()?;
    x0.require_interior()?;
    xt.require_interior()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }

    let rho = 0.5 * x0.min().min(xt.min()) * (1.0 - 1e-9);
    let diff: Vec<f64> = xt.as_slice().iter().zip(x0.as_slice()).map(|(b, a)| b - a).collect();
    let l1: f64 = diff.iter().map(|d| d.abs()).sum();
    let segments = ((m as f64 * l1 / rho).ceil() as usize).max(1);
    let seg_time = horizon / segments as f64;

    let mut plans = Vec::with_capacity(segments);
    let mut schedule: Option<ControlSchedule> = None;
    let mut current = x0.clone();
    for k in 1..=segments {
        let frac = k as f64 / segments as f64;
        let dx: Vec<f64> = (0..m)
            .map(|v| {
                let waypoint = if k == segments {
                    xt[v]
                } else {
                    x0[v] + frac * diff[v]
                };
                waypoint - current[v]
            })
            .collect();
        let (plan, sched) = local_steer_with_rho(g, &current, &dx, seg_time, rho)?;
        current = endpoint(g, &plan, &current)?;
        match schedule.as_mut() {
            Some(s) => s.append(&sched)?,
            None => schedule = Some(sched),
        }
        plans.push(plan);
    }

    let endpoint_error = current.sup_distance(xt.as_slice());
    if endpoint_error > GLOBAL_ENDPOINT_TOL {
        return Err(Error::Numerical(format!(
            "global steering endpoint error {endpoint_error:.3e}"
        )));
    }
    Ok(GlobalSteering {
        rho,
        segments,
        plans,
        schedule: schedule.expect("at least one segment"),
        endpoint: current,
        endpoint_error,
    })
}

/// Outcome of the two-vertex boundary bound `x_1(1) >= exp(-int (u12 + u21)) x_1(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

const BOUNDARY_STEPS: usize = 20_000;

/// Integrates the two-vertex forward equation on `[0, 1]` with rates
/// `u12(t)`, `u21(t)` and compares `x_1(1)` with the exponential lower bound.
pub fn boundary_bound_check<F, G>(u12: F, u21: G, x0: &Density) -> Result<BoundaryCheck>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    x0.require_len(2)?;
    let h = 1.0 / BOUNDARY_STEPS as f64;
    let rates = |t: f64| -> Result<(f64, f64)> {
        let (a, b) = (u12(t), u21(t));
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Precondition(format!(
                "rates must be finite and nonnegative, got ({a}, {b}) at t = {t}"
            )));
        }
        Ok((a, b))
    };
    let field = |t: f64, x: [f64; 2]| -> Result<[f64; 2]> {
        let (a, b) = rates(t)?;
        let flux = a * x[0] - b * x[1];
        Ok([-flux, flux])
    };

    let mut x = [x0[0], x0[1]];
    // Composite Simpson weights for the rate integral on the same grid.
    let mut integral = 0.0;
    for i in 0..BOUNDARY_STEPS {
        let t = i as f64 * h;
        let k1 = field(t, x)?;
        let k2 = field(t + 0.5 * h, [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]])?;
        let k3 = field(t + 0.5 * h, [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]])?;
        let k4 = field(t + h, [x[0] + h * k3[0], x[1] + h * k3[1]])?;
        for j in 0..2 {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let (a0, b0) = rates(t)?;
        let (am, bm) = rates(t + 0.5 * h)?;
        let (a1, b1) = rates(t + h)?;
        integral += h / 6.0 * ((a0 + b0) + 4.0 * (am + bm) + (a1 + b1));
    }
    let lhs = x[0];
    let rhs = (-integral).exp() * x0[0];
    Ok(BoundaryCheck {
        lhs,
        rhs,
        ok: lhs >= rhs - 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::forward_flow;

    fn d(v: &[f64]) -> Density {
        Density::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_displacement_round_trip() {
        let g = Graph::chain(2).unwrap();
        let x0 = d(&[0.5, 0.5]);
        let (plan, sched) = local_steer_with_rho(&g, &x0, &[0.0, 0.0], 1.0, 0.2).unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert!(plan.steps.iter().all(|s| (s.moved - 0.2).abs() < 1e-15));
        assert!(sched.max_rate() > 0.0);
        let end = endpoint(&g, &plan, &x0).unwrap();
        assert!(end.sup_distance(x0.as_slice()) < 1e-15);
    }

    #[test]
    fn two_cycle_hand_solved_rates() {
        // Step 1 moves rho - dx_1 = 0.25 of 0.5 (u dt = ln 2); step 2 moves
        // rho = 0.2 of 0.75 (u dt = ln 15/11). dt = 1/2.
        let g = Graph::chain(2).unwrap();
        let x0 = d(&[0.5, 0.5]);
        let (plan, _) = local_steer_with_rho(&g, &x0, &[-0.05, 0.05], 1.0, 0.2).unwrap();
        let r: Vec<f64> = plan.steps.iter().map(|s| s.rate).collect();
        assert!((r[0] - 2.0 * 2f64.ln()).abs() < 1e-13);
        assert!((r[1] - 2.0 * (15.0f64 / 11.0).ln()).abs() < 1e-13);
        let end = endpoint(&g, &plan, &x0).unwrap();
        assert!(end.sup_distance(&[0.45, 0.55]) < 1e-15);
    }

    #[test]
    fn four_vertex_local_steer() {
        let g = Graph::chain(4).unwrap();
        let x0 = d(&[0.3, 0.25, 0.25, 0.2]);
        let dx = [0.01, -0.01, 0.02, -0.02];
        let (plan, sched) = local_steer(&g, &x0, &dx, 0.5).unwrap();
        let end = endpoint(&g, &plan, &x0).unwrap();
        assert!(end.sup_distance(&[0.31, 0.24, 0.27, 0.18]) <= 1e-9);
        assert!((sched.horizon() - 0.5).abs() < 1e-15);
        // sigma bookkeeping: final accumulator equals the total displacement.
        assert!(plan.steps.last().unwrap().accumulated.abs() < 1e-15);
        assert!((plan.steps.last().unwrap().moved - plan.rho).abs() < 1e-15);
    }

    #[test]
    fn local_preconditions() {
        let g = Graph::chain(2).unwrap();
        let x0 = d(&[0.5, 0.5]);
        // |dx| > rho / M
        assert!(matches!(
            local_steer_with_rho(&g, &x0, &[-0.2, 0.2], 1.0, 0.2),
            Err(Error::Precondition(_))
        ));
        // min x0 <= 2 rho
        assert!(local_steer_with_rho(&g, &x0, &[0.0, 0.0], 1.0, 0.25).is_err());
        // nonzero total
        assert!(local_steer_with_rho(&g, &x0, &[0.01, 0.0], 1.0, 0.2).is_err());
        let h = Graph::from_one_based(2, &[(1, 2)]).unwrap();
        assert!(matches!(
            local_steer(&h, &x0, &[0.0, 0.0], 1.0),
            Err(Error::NotStronglyConnected)
        ));
    }

    #[test]
    fn endpoint_of_empty_and_single_step_plans() {
        let g = Graph::chain(2).unwrap();
        let x0 = d(&[0.4, 0.6]);
        let walk = g.covering_closed_walk(0).unwrap();
        let mut plan = SteeringPlan {
            walk,
            steps: vec![],
            displacement: vec![0.0, 0.0],
            rho: 0.1,
            horizon: 1.0,
        };
        assert_eq!(endpoint(&g, &plan, &x0).unwrap(), x0);
        plan.steps.push(SteeringStep {
            edge: 0,
            duration: 1.0,
            rate: 2f64.ln(),
            moved: 0.2,
            resident: 0.4,
            last_departure: true,
            accumulated: 0.0,
        });
        assert!(endpoint(&g, &plan, &x0).unwrap().sup_distance(&[0.2, 0.8]) < 1e-15);
    }

    #[test]
    fn global_steer_four_vertex() {
        let g = Graph::chain(4).unwrap();
        let x0 = d(&[0.7, 0.1, 0.1, 0.1]);
        let xt = d(&[0.1, 0.1, 0.1, 0.7]);
        let res = global_steer(&g, &x0, &xt, 1.0).unwrap();
        assert!(res.endpoint_error <= 1e-8);
        assert!((res.schedule.horizon() - 1.0).abs() < 1e-12);
        let again = schedule_endpoint(&g, &res.schedule, &x0).unwrap();
        assert!(again.sup_distance(xt.as_slice()) <= 1e-8);
        for (_, _, rates) in res.schedule.intervals() {
            assert!(rates.iter().filter(|&&r| r != 0.0).count() <= 1);
        }
    }

    #[test]
    fn global_steer_trivial_and_boundary() {
        let g = Graph::chain(3).unwrap();
        let x0 = d(&[0.2, 0.3, 0.5]);
        let res = global_steer(&g, &x0, &x0, 1.0).unwrap();
        assert_eq!(res.segments, 1);
        assert!(res.endpoint_error < 1e-15);
        assert!(matches!(
            global_steer(&g, &x0, &d(&[0.0, 0.5, 0.5]), 1.0),
            Err(Error::BoundaryState { .. })
        ));
    }

    #[test]
    fn ode_agrees_with_exact_endpoint() {
        let g = Graph::chain(4).unwrap();
        let x0 = d(&[0.3, 0.25, 0.25, 0.2]);
        let (plan, sched) = local_steer(&g, &x0, &[0.01, -0.01, 0.02, -0.02], 1.0).unwrap();
        let exact = endpoint(&g, &plan, &x0).unwrap();
        let traj = forward_flow(&g, &sched, &x0, &[0.0, 1.0]).unwrap();
        assert!(traj.last().sup_distance(exact.as_slice()) < 1e-6);
    }

    #[test]
    fn boundary_bound_examples() {
        let x0 = d(&[0.5, 0.5]);
        let c = boundary_bound_check(|_| 0.0, |_| 0.0, &x0).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.5, 0.5));
        assert!(c.ok);

        let c = boundary_bound_check(|_| 5.0, |_| 0.0, &x0).unwrap();
        let exact = 0.5 * (-5.0f64).exp();
        assert!((c.lhs - exact).abs() < 1e-12 && (c.rhs - exact).abs() < 1e-13);
        assert!(c.ok);

        let c = boundary_bound_check(|_| 3.0, |_| 3.0, &d(&[0.9, 0.1])).unwrap();
        assert!(c.ok && c.lhs > c.rhs + 0.1);

        assert!(boundary_bound_check(|_| -1.0, |_| 0.0, &x0).is_err());
    }
}
