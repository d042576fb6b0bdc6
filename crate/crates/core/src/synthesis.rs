//! Structured LMI synthesis of decentralized linear gains.
//!
//! The linearization of the forward equation at `x^eq` is `A = 0` with input
//! matrix `B = [B_e x^eq]`. Its mass mode is uncontrollable, so the solver
//! works with a regularized drift `A_eps` that moves that mode to `-eps`,
//! then searches for a diagonal `P > 0` and an edge-structured `Z` with
//!
//! ```text
//! A_eps P + P A_eps^T + B Z + Z^T B^T < 0,
//! ```
//!
//! giving the gain `K = Z P^{-1}` for which `A_eps + B K` is Hurwitz.

use nalgebra::{Cholesky, Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::Density;
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::graph::{Graph, Vertex};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_TOL_MARGIN: f64 = 1e-6;
/// Smallest diagonal entry of `P` accepted in a certificate.
pub const P_LOWER: f64 = 1e-6;

/// Linearized plant `(A, B)` at an interior equilibrium.
#[derive(Debug, Clone)]
pub struct LinearizedPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub xeq: Density,
}

pub fn linearized_pair(g: &Graph, xeq: &Density) -> Result<LinearizedPair> {
    xeq.require_len(g.vertex_count())?;
    xeq.require_interior()?;
    let m = g.vertex_count();
    let mut b = DMatrix::zeros(m, g.edge_count());
    for (e, &(s, t)) in g.edges().iter().enumerate() {
        b[(s, e)] = -xeq[s];
        b[(t, e)] = xeq[s];
    }
    Ok(LinearizedPair {
        a: DMatrix::zeros(m, m),
        b,
        xeq: xeq.clone(),
    })
}

/// Regularized drift and the coordinate change used to build it.
#[derive(Debug, Clone)]
pub struct Regularization {
    pub a_eps: DMatrix<f64>,
    /// Identity rows `1..M-1` followed by the all-ones row.
    pub transform: DMatrix<f64>,
    pub epsilon: f64,
}

/// `A_eps = T^{-1} diag(0, ..., 0, -eps) T` where `T` maps the last
/// coordinate to total mass. Since `1^T B = 0`, `T B` has a zero last row.
pub fn epsilon_regularize(pair: &LinearizedPair, epsilon: f64) -> Result<Regularization> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let m = pair.a.nrows();
    let mut transform = DMatrix::identity(m, m);
    transform.row_mut(m - 1).fill(1.0);
    let inverse = transform
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular transform".into()))?;
    let mut reduced = &transform * &pair.a * &inverse;
    reduced.row_mut(m - 1).fill(0.0);
    reduced.column_mut(m - 1).fill(0.0);
    reduced[(m - 1, m - 1)] = -epsilon;
    let a_eps = &inverse * reduced * &transform;
    Ok(Regularization {
        a_eps,
        transform,
        epsilon,
    })
}

/// Sparsity of `Z`: row `e` may be nonzero only at columns `S(e)`, `T(e)`.
/// `P` is diagonal.
///
/// The positive variant also ties `P = theta diag(x^eq)` and adds, per edge,
/// the linear constraints that make `k_e(y_S, 0) >= 0` for `y_S` in `[0, 1]`.
/// The realized law then has no outflow from an empty vertex, so the simplex
/// is invariant for the nonlinear closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSpec {
    vertices: usize,
    rows: Vec<[Vertex; 2]>,
    positive: Option<Vec<f64>>,
}

impl StructureSpec {
    pub fn decentralized(g: &Graph) -> Self {
        Self {
            vertices: g.vertex_count(),
            rows: g.edges().iter().map(|&(s, t)| [s, t]).collect(),
            positive: None,
        }
    }

    pub fn positive(g: &Graph, xeq: &Density) -> Result<Self> {
        xeq.require_len(g.vertex_count())?;
        xeq.require_interior()?;
        Ok(Self {
            positive: Some(xeq.as_slice().to_vec()),
            ..Self::decentralized(g)
        })
    }

    pub fn is_positive(&self) -> bool {
        self.positive.is_some()
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.rows[row].contains(&col)
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.vertices
    }

    /// Free entries of `Z` in row-major order: `(e, S(e))` then `(e, T(e))`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(e, cols)| cols.iter().map(move |&c| (e, c)))
    }

    /// Rows `c` with `c . z > 0` required, over the entries of `Z`.
    /// With `P = theta diag(x)`, `K_es = Z_es / (theta x_s)`, so
    /// `k_e(0, 0) >= 0` reads `Z_es + Z_et <= 0` and
    /// `k_e(1, 0) >= 0` reads `Z_es (1 - x_s) / x_s - Z_et >= 0`.
    fn linear_constraints(&self) -> Vec<Vec<f64>> {
        let Some(x) = &self.positive else {
            return Vec::new();
        };
        let nz = 2 * self.rows.len();
        let mut out = Vec::with_capacity(nz);
        for (e, &[s, _]) in self.rows.iter().enumerate() {
            let mut c = vec![0.0; nz];
            c[2 * e] = -1.0;
            c[2 * e + 1] = -1.0;
            out.push(c);
            let mut c = vec![0.0; nz];
            c[2 * e] = (1.0 - x[s]) / x[s];
            c[2 * e + 1] = -1.0;
            out.push(c);
        }
        out
    }
}

/// Data of a structured LMI feasibility problem.
#[derive(Debug, Clone, Copy)]
pub struct StructuredLmi<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub spec: &'a StructureSpec,
}

/// Raw solver output: diagonal of `P` and the free entries of `Z` in
/// [`StructureSpec::entries`] order.
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub p: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Anything able to search for `(P, Z)`; certificates are always re-checked
/// independently of the solver's own bookkeeping.
pub trait LmiSolver {
    fn solve(&self, problem: &StructuredLmi<'_>) -> Result<LmiSolution>;
}

/// Log-barrier path-following on `(P, Z, t)` minimizing the largest
/// eigenvalue `t` of the LMI block over the box `p_lower <= P_ii <= p_upper`
/// (or `p_lower <= theta <= p_upper` in the positive variant) and
/// `|Z_ec| <= z_bound`.
///
/// The optimum of `t` saturates at the mass mode quickly, so the box is what
/// shapes the gain.
#[derive(Debug, Clone)]
pub struct BarrierSolver {
    pub p_lower: f64,
    pub p_upper: f64,
    pub z_bound: f64,
    pub barrier_growth: f64,
    pub duality_gap: f64,
    pub max_newton: usize,
}

impl Default for BarrierSolver {
    fn default() -> Self {
        Self {
            p_lower: 1.0,
            p_upper: 10.0,
            z_bound: 5.0,
            barrier_growth: 8.0,
            duality_gap: 1e-9,
            max_newton: 200,
        }
    }
}

/// Affine parametrization `F(x) = sum_k x_k F_k` of the LMI block, with
/// `x = (q, z)`: `q` parametrizes `P`, `z` the free entries of `Z`.
struct AffineLmi {
    m: usize,
    /// `P = sum_k q_k diag(p_dirs[k])`.
    p_dirs: Vec<Vec<f64>>,
    basis: Vec<DMatrix<f64>>,
    linear: Vec<Vec<f64>>,
}

impl AffineLmi {
    fn new(problem: &StructuredLmi<'_>) -> Self {
        let m = problem.a.nrows();
        let a = problem.a;
        let p_dirs: Vec<Vec<f64>> = match &problem.spec.positive {
            Some(x) => vec![x.clone()],
            None => (0..m)
                .map(|i| {
                    let mut d = vec![0.0; m];
                    d[i] = 1.0;
                    d
                })
                .collect(),
        };
        let mut basis = Vec::new();
        for dir in &p_dirs {
            // A D + D A^T
            let mut f = DMatrix::zeros(m, m);
            for (i, &w) in dir.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for r in 0..m {
                    f[(r, i)] += w * a[(r, i)];
                    f[(i, r)] += w * a[(r, i)];
                }
            }
            basis.push(f);
        }
        for (e, c) in problem.spec.entries() {
            // b_e e_c^T + e_c b_e^T
            let mut f = DMatrix::zeros(m, m);
            for r in 0..m {
                f[(r, c)] += problem.b[(r, e)];
                f[(c, r)] += problem.b[(r, e)];
            }
            basis.push(f);
        }
        Self {
            m,
            p_dirs,
            basis,
            linear: problem.spec.linear_constraints(),
        }
    }

    fn np(&self) -> usize {
        self.p_dirs.len()
    }

    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.m, self.m);
        for (k, b) in self.basis.iter().enumerate() {
            if x[k] != 0.0 {
                f += b * x[k];
            }
        }
        f
    }

    fn p_diagonal(&self, q: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.m];
        for (dir, &qk) in self.p_dirs.iter().zip(q) {
            for (pi, w) in p.iter_mut().zip(dir) {
                *pi += qk * w;
            }
        }
        p
    }
}

fn lambda_max(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BarrierSolver {
    /// Barrier value, or `None` outside the domain. `x` holds `(q, z, t)`.
    fn barrier(&self, lmi: &AffineLmi, x: &[f64]) -> Option<f64> {
        let n = x.len();
        let np = lmi.np();
        let t = x[n - 1];
        let mut s = -lmi.eval(&x[..n - 1]);
        for i in 0..lmi.m {
            s[(i, i)] += t;
        }
        let chol = Cholesky::new(s)?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let mut phi = -logdet;
        for &p in &x[..np] {
            let (lo, hi) = (p - self.p_lower, self.p_upper - p);
            if lo <= 0.0 || hi <= 0.0 {
                return None;
            }
            phi -= lo.ln() + hi.ln();
        }
        let z = &x[np..n - 1];
        for &zk in z {
            let (lo, hi) = (self.z_bound + zk, self.z_bound - zk);
            if lo <= 0.0 || hi <= 0.0 {
                return None;
            }
            phi -= lo.ln() + hi.ln();
        }
        for c in &lmi.linear {
            let g = dot(c, z);
            if g <= 0.0 {
                return None;
            }
            phi -= g.ln();
        }
        Some(phi)
    }

    /// Gradient and Hessian of the barrier at a strictly feasible `x`.
    fn derivatives(&self, lmi: &AffineLmi, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = x.len();
        let m = lmi.m;
        let np = lmi.np();
        let t = x[n - 1];
        let mut s = -lmi.eval(&x[..n - 1]);
        for i in 0..m {
            s[(i, i)] += t;
        }
        let s_inv = Cholesky::new(s)
            .ok_or_else(|| Error::Numerical("barrier iterate left the LMI domain".into()))?
            .inverse();
        // dS/dx_k = -F_k for (q, z) and I for t.
        let mut w: Vec<DMatrix<f64>> = lmi.basis.iter().map(|f| -(&s_inv * f)).collect();
        w.push(s_inv.clone());

        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        for k in 0..n {
            grad[k] = -w[k].trace();
            for l in 0..=k {
                // tr(W_k W_l)
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += w[k][(i, j)] * w[l][(j, i)];
                    }
                }
                hess[(k, l)] = acc;
                hess[(l, k)] = acc;
            }
        }
        for k in 0..np {
            let (lo, hi) = (x[k] - self.p_lower, self.p_upper - x[k]);
            grad[k] += -1.0 / lo + 1.0 / hi;
            hess[(k, k)] += 1.0 / (lo * lo) + 1.0 / (hi * hi);
        }
        for k in np..n - 1 {
            let (lo, hi) = (self.z_bound + x[k], self.z_bound - x[k]);
            grad[k] += -1.0 / lo + 1.0 / hi;
            hess[(k, k)] += 1.0 / (lo * lo) + 1.0 / (hi * hi);
        }
        let z = &x[np..n - 1];
        for c in &lmi.linear {
            let g = dot(c, z);
            for (i, ci) in c.iter().enumerate() {
                if *ci == 0.0 {
                    continue;
                }
                grad[np + i] -= ci / g;
                for (j, cj) in c.iter().enumerate() {
                    hess[(np + i, np + j)] += ci * cj / (g * g);
                }
            }
        }
        Ok((grad, hess))
    }

    /// Strictly feasible start: `P` at the box midpoint, `Z = 0`, or in the
    /// positive variant a small multiple of the gain `(x_T, -1.5 x_S)`.
    fn start(&self, lmi: &AffineLmi, spec: &StructureSpec) -> Vec<f64> {
        let np = lmi.np();
        let mut x = vec![0.0; lmi.basis.len() + 1];
        x[..np].iter_mut().for_each(|q| *q = 0.5 * (self.p_lower + self.p_upper));
        if let Some(xeq) = &spec.positive {
            let theta = x[0];
            let eta = 0.1 * self.z_bound / theta;
            for (e, &[s, t]) in spec.rows.iter().enumerate() {
                // Z = K P with P_ii = theta x_i.
                x[np + 2 * e] = eta * xeq[t] * theta * xeq[s];
                x[np + 2 * e + 1] = -1.5 * eta * xeq[s] * theta * xeq[t];
            }
        }
        let n = x.len();
        x[n - 1] = lambda_max(&lmi.eval(&x[..n - 1])) + 1.0;
        x
    }
}

/// Solves `H d = g` after Jacobi scaling. Redundant `Z` entries (e.g. on
/// reverse edge pairs) make `H` nearly singular, so a growing ridge is added
/// if the factorization fails.
fn newton_solve(hess: DMatrix<f64>, g: &nalgebra::DVector<f64>) -> Result<nalgebra::DVector<f64>> {
    let n = g.len();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / hess[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| hess[(i, j)] * scale[i] * scale[j]);
    let rhs = nalgebra::DVector::from_fn(n, |i, _| g[i] * scale[i]);
    let mut ridge = 0.0;
    loop {
        let mut h = scaled.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(h) {
            let y = chol.solve(&rhs);
            return Ok(nalgebra::DVector::from_fn(n, |i, _| y[i] * scale[i]));
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
        if ridge > 1.0 {
            return Err(Error::Numerical("barrier Hessian not positive definite".into()));
        }
    }
}

impl LmiSolver for BarrierSolver {
    fn solve(&self, problem: &StructuredLmi<'_>) -> Result<LmiSolution> {
        let lmi = AffineLmi::new(problem);
        let np = lmi.np();
        let n = lmi.basis.len() + 1;
        let nz = n - 1 - np;
        let mut x = self.start(&lmi, problem.spec);

        let nu = (lmi.m + 2 * np + 2 * nz + lmi.linear.len()) as f64;
        let mut tau = 1.0;
        let mut iterations = 0;
        let converged;

        let objective = |x: &[f64], tau: f64| -> Option<f64> {
            self.barrier(&lmi, x).map(|phi| tau * x[n - 1] + phi)
        };

        loop {
            // Centering by damped Newton.
            for _ in 0..self.max_newton {
                iterations += 1;
                let (mut grad, hess) = self.derivatives(&lmi, &x)?;
                grad[n - 1] += tau;
                let g = nalgebra::DVector::from_vec(grad);
                let step = -newton_solve(hess, &g)?;
                let decrement = -g.dot(&step);
                if decrement / 2.0 <= 1e-10 {
                    break;
                }
                let f0 = objective(&x, tau).expect("iterate is feasible");
                let mut alpha = 1.0;
                loop {
                    let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
                    if let Some(f1) = objective(&trial, tau) {
                        if f1 <= f0 - 0.25 * alpha * decrement {
                            x = trial;
                            break;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < 1e-14 {
                        break;
                    }
                }
                if alpha < 1e-14 {
                    break;
                }
            }
            if nu / tau < self.duality_gap {
                converged = true;
                break;
            }
            tau *= self.barrier_growth;
        }

        Ok(LmiSolution {
            p: lmi.p_diagonal(&x[..np]),
            z: x[np..n - 1].to_vec(),
            iterations,
            converged,
        })
    }
}

/// Result of structured synthesis. `margin` is the largest eigenvalue of the
/// re-assembled LMI block.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCertificate {
    pub p: Vec<f64>,
    pub z: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub epsilon: f64,
    pub margin: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `A P + P A^T + B Z + Z^T B^T` for diagonal `P`.
pub fn lmi_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &[f64], z: &DMatrix<f64>) -> DMatrix<f64> {
    let pm = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(p));
    let ap = a * &pm;
    let bz = b * z;
    &ap + ap.transpose() + &bz + bz.transpose()
}

pub fn solve_structured_lmi(
    a_eps: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &StructureSpec,
    epsilon: f64,
    tol_margin: f64,
) -> Result<GainCertificate> {
    solve_structured_lmi_with(&BarrierSolver::default(), a_eps, b, spec, epsilon, tol_margin)
}

pub fn solve_structured_lmi_with(
    solver: &dyn LmiSolver,
    a_eps: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &StructureSpec,
    epsilon: f64,
    tol_margin: f64,
) -> Result<GainCertificate> {
    let m = a_eps.nrows();
    if !a_eps.is_square() || b.nrows() != m || spec.cols() != m || spec.rows() != b.ncols() {
        return Err(Error::Dimension(format!(
            "A is {}x{}, B is {}x{}, structure is {}x{}",
            a_eps.nrows(),
            a_eps.ncols(),
            b.nrows(),
            b.ncols(),
            spec.rows(),
            spec.cols()
        )));
    }
    let sol = solver.solve(&StructuredLmi { a: a_eps, b, spec })?;
    let mut z = DMatrix::zeros(spec.rows(), m);
    for ((e, c), v) in spec.entries().zip(&sol.z) {
        z[(e, c)] = *v;
    }
    let margin = lambda_max(&lmi_matrix(a_eps, b, &sol.p, &z));
    let p_min = sol.p.iter().copied().fold(f64::INFINITY, f64::min);
    if !(margin <= -tol_margin) || !(p_min >= P_LOWER) {
        return Err(Error::Infeasible { margin });
    }
    let mut k = z.clone();
    for (c, mut col) in k.column_iter_mut().enumerate() {
        col /= sol.p[c];
    }
    if let Some(xeq) = &spec.positive {
        let worst = positivity_slack(&spec.rows, xeq, &k);
        if worst < -1e-9 * k.amax().max(1.0) {
            return Err(Error::Numerical(format!(
                "gain violates the positivity constraints by {worst:e}"
            )));
        }
    }
    Ok(GainCertificate {
        p: sol.p,
        z,
        k,
        epsilon,
        margin,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Smallest of `k_e(0, 0)` and `k_e(1, 0)` over edges for `k(y) = K (y - x)`.
fn positivity_slack(rows: &[[Vertex; 2]], xeq: &[f64], k: &DMatrix<f64>) -> f64 {
    rows.iter()
        .enumerate()
        .flat_map(|(e, &[s, t])| {
            let at_zero = -k[(e, s)] * xeq[s] - k[(e, t)] * xeq[t];
            [at_zero, at_zero + k[(e, s)]]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Linearize, regularize and solve with default tolerances.
pub fn synthesize(g: &Graph, xeq: &Density, epsilon: f64, tol_margin: f64) -> Result<GainCertificate> {
    g.require_strongly_connected()?;
    let pair = linearized_pair(g, xeq)?;
    let reg = epsilon_regularize(&pair, epsilon)?;
    solve_structured_lmi(&reg.a_eps, &pair.b, &StructureSpec::decentralized(g), epsilon, tol_margin)
}

/// As [`synthesize`] with the positivity-preserving structure.
pub fn synthesize_positive(g: &Graph, xeq: &Density, epsilon: f64, tol_margin: f64) -> Result<GainCertificate> {
    g.require_strongly_connected()?;
    let pair = linearized_pair(g, xeq)?;
    let reg = epsilon_regularize(&pair, epsilon)?;
    solve_structured_lmi(&reg.a_eps, &pair.b, &StructureSpec::positive(g, xeq)?, epsilon, tol_margin)
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

fn remove_nearest(values: &mut Vec<Complex<f64>>, target: Complex<f64>) {
    if let Some((i, _)) = values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
    {
        values.remove(i);
    }
}

/// Checks `sigma(A + B F) \ {0} == sigma(A_eps + B F) \ {-eps}` as multisets
/// to within `1e-6`.
pub fn spectrum_relation_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    a_eps: &DMatrix<f64>,
    f: &DMatrix<f64>,
    epsilon: f64,
) -> bool {
    let bf = b * f;
    let mut original = eigenvalues(&(a + &bf));
    let mut regularized = eigenvalues(&(a_eps + &bf));
    remove_nearest(&mut original, Complex::new(0.0, 0.0));
    remove_nearest(&mut regularized, Complex::new(-epsilon, 0.0));
    for z in original {
        let nearest = regularized
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - z).norm().total_cmp(&(b.1 - z).norm()));
        match nearest {
            Some((i, w)) if (w - z).norm() <= 1e-6 * z.norm().max(1.0) => {
                regularized.remove(i);
            }
            _ => return false,
        }
    }
    regularized.is_empty()
}

/// Decentralized linear law `k(y) = K (y - x^eq)` from a certificate gain.
///
/// With the LMI written as `... + B Z + Z^T B^T < 0`, the stabilizing input
/// is `u = +K (y - x^eq)`: the closed-loop linearization is `B K`.
pub fn gain_to_feedback(g: &Graph, k: &DMatrix<f64>, xeq: &Density) -> Result<FeedbackLaw> {
    FeedbackLaw::from_gain(g, k, xeq)
}

/// Certificate serialization schema (1-based vertex columns and edge ids).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateFile {
    pub p_diagonal: Vec<f64>,
    /// `(edge_id, column, value)`.
    pub z_entries: Vec<(usize, usize, f64)>,
    pub k: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub margin: f64,
    pub solver_iterations: usize,
    pub converged: bool,
}

impl GainCertificate {
    pub fn to_file(&self, spec: &StructureSpec) -> CertificateFile {
        CertificateFile {
            p_diagonal: self.p.clone(),
            z_entries: spec
                .entries()
                .map(|(e, c)| (e + 1, c + 1, self.z[(e, c)]))
                .collect(),
            k: self.k.row_iter().map(|r| r.iter().copied().collect()).collect(),
            epsilon: self.epsilon,
            margin: self.margin,
            solver_iterations: self.iterations,
            converged: self.converged,
        }
    }

    pub fn from_file(file: &CertificateFile, edges: usize) -> Result<Self> {
        let m = file.p_diagonal.len();
        if file.k.len() != edges || file.k.iter().any(|r| r.len() != m) {
            return Err(Error::Format("gain matrix has the wrong shape".into()));
        }
        let mut z = DMatrix::zeros(edges, m);
        for &(e, c, v) in &file.z_entries {
            if e == 0 || c == 0 || e > edges || c > m {
                return Err(Error::Format(format!("Z entry ({e}, {c}) out of range")));
            }
            z[(e - 1, c - 1)] = v;
        }
        let k = DMatrix::from_fn(edges, m, |r, c| file.k[r][c]);
        Ok(Self {
            p: file.p_diagonal.clone(),
            z,
            k,
            epsilon: file.epsilon,
            margin: file.margin,
            iterations: file.solver_iterations,
            converged: file.converged,
        })
    }
}
