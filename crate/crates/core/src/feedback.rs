//! Decentralized feedback laws.
//!
//! Every law here evaluates the rate of edge `e` from the two densities at
//! its endpoints only, so decentralization holds by construction. The linear
//! law `k_e(y) = x_T y_S - x_S y_T` stabilizes `x^eq` locally but takes
//! negative values; on bidirected graphs it is realized by nonnegative
//! rational rates with the same closed-loop vector field.

use nalgebra::{Complex, DMatrix};

use crate::dynamics::{Density, RateLaw, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    Constant,
    Lemma1,
    GainLinear,
    RationalRealized,
}

impl LawKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LawKind::Constant => "constant",
            LawKind::Lemma1 => "linear-lemma1",
            LawKind::GainLinear => "gain-linear",
            LawKind::RationalRealized => "rational-realized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Constant(Vec<f64>),
    Lemma1 { scale: f64 },
    /// `k_e(y) = a_e (y_S - x_S) + b_e (y_T - x_T)`.
    Gain {
        coeffs: Vec<(f64, f64)>,
        matrix: DMatrix<f64>,
    },
    Realized(Box<FeedbackLaw>),
}

/// Per-edge rate map `k_e(y_S, y_T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    endpoints: Vec<(Vertex, Vertex)>,
    reverse: Vec<Option<EdgeId>>,
    xeq: Option<Density>,
    form: Form,
}

impl FeedbackLaw {
    fn on_graph(g: &Graph, xeq: Option<Density>, form: Form) -> Self {
        Self {
            endpoints: g.edges().to_vec(),
            reverse: (0..g.edge_count()).map(|e| g.reverse(e)).collect(),
            xeq,
            form,
        }
    }

    /// Time-invariant rates.
    pub fn constant(g: &Graph, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != g.edge_count() {
            return Err(Error::Dimension(format!(
                "{} rates for {} edges",
                rates.len(),
                g.edge_count()
            )));
        }
        Ok(Self::on_graph(g, None, Form::Constant(rates)))
    }

    /// Linear law `k_e(y) = x^eq_T y_S - x^eq_S y_T`.
    pub fn lemma1(g: &Graph, xeq: &Density) -> Result<Self> {
        Self::lemma1_scaled(g, xeq, 1.0)
    }

    /// The linear law multiplied by a positive gain `scale`, which rescales
    /// time in the closed loop without changing any structural property.
    pub fn lemma1_scaled(g: &Graph, xeq: &Density, scale: f64) -> Result<Self> {
        xeq.require_len(g.vertex_count())?;
        g.require_strongly_connected()?;
        xeq.require_interior()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Precondition(format!("gain scale must be positive, got {scale}")));
        }
        Ok(Self::on_graph(g, Some(xeq.clone()), Form::Lemma1 { scale }))
    }

    /// Linear law `k(y) = K (y - x^eq)` from an `N_E x M` gain whose row `e`
    /// is supported on columns `S(e)` and `T(e)` only.
    pub fn from_gain(g: &Graph, gain: &DMatrix<f64>, xeq: &Density) -> Result<Self> {
        xeq.require_len(g.vertex_count())?;
        if gain.nrows() != g.edge_count() || gain.ncols() != g.vertex_count() {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                gain.nrows(),
                gain.ncols(),
                g.edge_count(),
                g.vertex_count()
            )));
        }
        let mut coeffs = Vec::with_capacity(g.edge_count());
        for (e, &(s, t)) in g.edges().iter().enumerate() {
            for c in 0..g.vertex_count() {
                if c != s && c != t && gain[(e, c)] != 0.0 {
                    return Err(Error::Precondition(format!(
                        "gain row {} has a nonzero entry at column {}, outside its edge",
                        e + 1,
                        c + 1
                    )));
                }
            }
            coeffs.push((gain[(e, s)], gain[(e, t)]));
        }
        Ok(Self::on_graph(
            g,
            Some(xeq.clone()),
            Form::Gain {
                coeffs,
                matrix: gain.clone(),
            },
        ))
    }

    pub fn kind(&self) -> LawKind {
        match self.form {
            Form::Constant(_) => LawKind::Constant,
            Form::Lemma1 { .. } => LawKind::Lemma1,
            Form::Gain { .. } => LawKind::GainLinear,
            Form::Realized(_) => LawKind::RationalRealized,
        }
    }

    pub fn xeq(&self) -> Option<&Density> {
        self.xeq.as_ref()
    }

    pub fn edge_count(&self) -> usize {
        self.endpoints.len()
    }

    /// Each rate depends only on the densities at the edge's endpoints.
    pub fn is_decentralized(&self) -> bool {
        true
    }

    /// The sign-indefinite law underlying a realization.
    pub fn base(&self) -> Option<&FeedbackLaw> {
        match &self.form {
            Form::Realized(b) => Some(b),
            _ => None,
        }
    }

    pub fn gain(&self) -> Option<&DMatrix<f64>> {
        match &self.form {
            Form::Gain { matrix, .. } => Some(matrix),
            Form::Realized(b) => b.gain(),
            _ => None,
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match &self.form {
            Form::Lemma1 { scale } => Some(*scale),
            Form::Realized(b) => b.scale(),
            _ => None,
        }
    }

    pub fn constant_rates(&self) -> Option<&[f64]> {
        match &self.form {
            Form::Constant(r) => Some(r),
            _ => None,
        }
    }

    /// Rate on edge `e` from the source and target densities alone.
    pub fn local_rate(&self, e: EdgeId, ys: f64, yt: f64) -> Result<f64> {
        let (s, t) = self.endpoints[e];
        match &self.form {
            Form::Constant(r) => Ok(r[e]),
            Form::Lemma1 { scale } => {
                let x = self.xeq.as_ref().expect("linear law has a target");
                Ok(scale * (x[t] * ys - x[s] * yt))
            }
            Form::Gain { coeffs, .. } => {
                let x = self.xeq.as_ref().expect("gain law has a target");
                let (a, b) = coeffs[e];
                Ok(a * (ys - x[s]) + b * (yt - x[t]))
            }
            Form::Realized(base) => {
                let rev = self.reverse[e].ok_or(Error::NotBidirected(e + 1))?;
                if !(ys > 0.0) {
                    return Err(Error::BoundaryState { min: ys });
                }
                let forward = base.local_rate(e, ys, yt)?;
                let backward = base.local_rate(rev, yt, ys)?;
                // m^p_e k_e plus the reverse edge's negative flux |k_rev| y_T
                // re-expressed as a rate on y_S.
                let mut c = 0.0;
                if forward >= 0.0 {
                    c += forward;
                }
                if backward <= 0.0 {
                    c += -backward * yt / ys;
                }
                Ok(c)
            }
        }
    }
}

impl RateLaw for FeedbackLaw {
    fn rate(&self, e: EdgeId, y: &[f64]) -> Result<f64> {
        let (s, t) = self.endpoints[e];
        self.local_rate(e, y[s], y[t])
    }

    fn label(&self) -> String {
        self.kind().as_str().to_string()
    }

    fn requires_interior(&self) -> bool {
        self.kind() == LawKind::RationalRealized
    }
}

/// Shorthand for [`FeedbackLaw::lemma1`].
pub fn lemma1_law(g: &Graph, xeq: &Density) -> Result<FeedbackLaw> {
    FeedbackLaw::lemma1(g, xeq)
}

/// Nonnegative rational law with the same closed-loop vector field as `law`
/// on the interior of the simplex.
pub fn rational_realization(g: &Graph, law: &FeedbackLaw) -> Result<FeedbackLaw> {
    g.require_bidirected()?;
    if law.edge_count() != g.edge_count() {
        return Err(Error::Dimension("law and graph disagree on edges".into()));
    }
    if law.kind() == LawKind::RationalRealized {
        return Ok(law.clone());
    }
    Ok(FeedbackLaw::on_graph(
        g,
        law.xeq.clone(),
        Form::Realized(Box::new(law.clone())),
    ))
}

/// Jacobians `A_e` of the per-edge closed-loop fields at `x^eq` and their
/// sum `G`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub per_edge: Vec<DMatrix<f64>>,
    pub matrix: DMatrix<f64>,
}

pub fn linearization(g: &Graph, xeq: &Density) -> Result<Linearization> {
    xeq.require_len(g.vertex_count())?;
    xeq.require_interior()?;
    let m = g.vertex_count();
    let per_edge: Vec<DMatrix<f64>> = g
        .edges()
        .iter()
        .map(|&(s, t)| {
            let (xs, xt) = (xeq[s], xeq[t]);
            let mut a = DMatrix::zeros(m, m);
            a[(s, s)] = -xt * xs;
            a[(s, t)] = xs * xs;
            a[(t, t)] = -xs * xs;
            a[(t, s)] = xt * xs;
            a
        })
        .collect();
    let matrix = per_edge
        .iter()
        .fold(DMatrix::zeros(m, m), |acc, a| acc + a);
    Ok(Linearization { per_edge, matrix })
}

/// Spectral summary of a mass-conserving linear generator.
#[derive(Debug, Clone)]
pub struct SpectralCertificate {
    pub matrix: DMatrix<f64>,
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub zero_multiplicity: usize,
    /// Largest real part among the nonzero eigenvalues.
    pub gap: Option<f64>,
    /// Off-diagonal pattern of the matrix is strongly connected.
    pub irreducible: bool,
}

impl SpectralCertificate {
    pub const ZERO_CLUSTER: f64 = 1e-9;
    pub const GAP_TOL: f64 = 1e-9;

    pub fn passes(&self) -> bool {
        self.zero_multiplicity == 1 && self.gap.is_some_and(|g| g < -Self::GAP_TOL)
    }
}

/// Requires `1^T G = 0` to within `1e-12`.
pub fn spectral_certificate(matrix: &DMatrix<f64>) -> Result<SpectralCertificate> {
    if !matrix.is_square() {
        return Err(Error::Dimension("matrix must be square".into()));
    }
    let m = matrix.nrows();
    let col_sums = matrix.row_sum();
    if col_sums.amax() > 1e-12 {
        return Err(Error::Precondition(format!(
            "columns do not sum to zero (max {:.3e})",
            col_sums.amax()
        )));
    }
    let mut eigenvalues: Vec<Complex<f64>> = matrix.clone().complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let scale = matrix.amax().max(1.0);
    let is_zero = |z: &Complex<f64>| z.norm() <= SpectralCertificate::ZERO_CLUSTER * scale;
    let zero_multiplicity = eigenvalues.iter().filter(|z| is_zero(z)).count();
    let gap = eigenvalues
        .iter()
        .filter(|z| !is_zero(z))
        .map(|z| z.re)
        .reduce(f64::max);

    let mut pattern = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if i != j && matrix[(i, j)] != 0.0 {
                pattern.push((j, i));
            }
        }
    }
    let irreducible = m == 1
        || Graph::new(m, &pattern)
            .map(|g| g.is_strongly_connected())
            .unwrap_or(false);

    Ok(SpectralCertificate {
        matrix: matrix.clone(),
        eigenvalues,
        zero_multiplicity,
        gap,
        irreducible,
    })
}

/// Exponential fit `||x(t) - x^eq||_2 ~ m0 exp(-lambda t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub m0: f64,
    pub lambda: f64,
    pub points: usize,
}

/// Least-squares fit of `log ||x(t) - x^eq||_2` against `t` over the samples
/// whose error lies in `[1e-8, e(0) / 2]`.
pub fn decay_fit(traj: &Trajectory, xeq: &Density) -> Result<DecayFit> {
    let errors: Vec<f64> = traj
        .states
        .iter()
        .map(|x| x.l2_distance(xeq.as_slice()))
        .collect();
    decay_fit_errors(&traj.times, &errors)
}

/// [`decay_fit`] on precomputed error norms.
pub fn decay_fit_errors(times: &[f64], errors: &[f64]) -> Result<DecayFit> {
    let (&initial, &last) = match (errors.first(), errors.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Precondition("empty trajectory".into())),
    };
    if initial <= 0.0 {
        return Err(Error::Precondition("trajectory starts at the target".into()));
    }
    if last >= initial {
        return Err(Error::Precondition(format!(
            "trajectory does not converge (error {initial:.3e} -> {last:.3e})"
        )));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(_, &e)| (1e-8..=initial / 2.0).contains(&e))
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Precondition(format!(
            "only {} samples inside the fitting window",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx <= 0.0 {
        return Err(Error::Precondition("degenerate fitting window".into()));
    }
    let slope = sxy / sxx;
    Ok(DecayFit {
        m0: (ml - slope * mt).exp(),
        lambda: -slope,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{closed_loop_flow, uniform_grid, vector_field};

    fn d(v: &[f64]) -> Density {
        Density::new(v.to_vec()).unwrap()
    }

    #[test]
    fn lemma1_values() {
        let g = Graph::chain(2).unwrap();
        let law = lemma1_law(&g, &d(&[0.5, 0.5])).unwrap();
        let y = [0.6, 0.4];
        assert!((law.rate(0, &y).unwrap() - 0.1).abs() < 1e-15);
        assert!((law.rate(1, &y).unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(law.rate(0, &[0.5, 0.5]).unwrap(), 0.0);
        assert!(law.is_decentralized());
        assert!(matches!(
            lemma1_law(&g, &d(&[1.0, 0.0])),
            Err(Error::BoundaryState { .. })
        ));
    }

    #[test]
    fn lemma1_zero_at_equilibrium_on_chain() {
        let g = Graph::chain(4).unwrap();
        let xeq = d(&[0.1, 0.1, 0.1, 0.7]);
        let law = lemma1_law(&g, &xeq).unwrap();
        for e in 0..g.edge_count() {
            assert_eq!(law.rate(e, xeq.as_slice()).unwrap(), 0.0);
        }
    }

    #[test]
    fn realization_on_two_cycle() {
        // c_(1,2) = 0.1 + 0.1 * 0.4 / 0.6 = 1/6, c_(2,1) = 0.
        let g = Graph::chain(2).unwrap();
        let law = lemma1_law(&g, &d(&[0.5, 0.5])).unwrap();
        let real = rational_realization(&g, &law).unwrap();
        let y = [0.6, 0.4];
        assert!((real.rate(0, &y).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(real.rate(1, &y).unwrap(), 0.0);
        let a = vector_field(&g, &law, &y).unwrap();
        let b = vector_field(&g, &real, &y).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-15);
        assert!(real.requires_interior());
        assert!(real.rate(0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn realization_passes_through_nonnegative_rates() {
        let g = Graph::chain(2).unwrap();
        let law = FeedbackLaw::constant(&g, vec![0.3, 0.7]).unwrap();
        let real = rational_realization(&g, &law).unwrap();
        assert_eq!(real.rate(0, &[0.2, 0.8]).unwrap(), 0.3);
        assert_eq!(real.rate(1, &[0.2, 0.8]).unwrap(), 0.7);
    }

    #[test]
    fn realization_requires_bidirected_graph() {
        let g = Graph::from_one_based(3, &[(1, 2), (2, 3), (3, 1)]).unwrap();
        let law = lemma1_law(&g, &d(&[0.3, 0.3, 0.4])).unwrap();
        assert!(matches!(
            rational_realization(&g, &law),
            Err(Error::NotBidirected(_))
        ));
    }

    #[test]
    fn linearization_two_cycle() {
        let g = Graph::chain(2).unwrap();
        let lin = linearization(&g, &d(&[0.5, 0.5])).unwrap();
        assert_eq!(
            lin.matrix,
            DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5])
        );
        for a in &lin.per_edge {
            assert!(a.row_sum().amax() == 0.0);
        }
        let cert = spectral_certificate(&lin.matrix).unwrap();
        assert!(cert.passes() && cert.irreducible);
        assert!((cert.gap.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let g = Graph::grid(2, 2).unwrap();
        let xeq = d(&[0.1, 0.2, 0.3, 0.4]);
        let lin = linearization(&g, &xeq).unwrap();
        let law = lemma1_law(&g, &xeq).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut up = xeq.as_slice().to_vec();
            let mut dn = up.clone();
            up[j] += h;
            dn[j] -= h;
            let fu = vector_field(&g, &law, &up).unwrap();
            let fd = vector_field(&g, &law, &dn).unwrap();
            for i in 0..4 {
                let fdiff = (fu[i] - fd[i]) / (2.0 * h);
                assert!((fdiff - lin.matrix[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn certificates_for_degenerate_and_reducible_generators() {
        let zero = spectral_certificate(&DMatrix::zeros(1, 1)).unwrap();
        assert!(!zero.passes());

        // Unit-rate generator of the single edge (1,2): spectrum {0, -1} but
        // the pattern is reducible.
        let g = Graph::from_one_based(2, &[(1, 2)]).unwrap();
        let cert = spectral_certificate(&g.generator(&[1.0])).unwrap();
        assert!(!cert.irreducible);
        assert!(cert.passes());

        // Same edge with an isolated third vertex: zero becomes a double root.
        let g = Graph::from_one_based(3, &[(1, 2)]).unwrap();
        let lin = linearization(&g, &d(&[0.3, 0.3, 0.4])).unwrap();
        let cert = spectral_certificate(&lin.matrix).unwrap();
        assert_eq!(cert.zero_multiplicity, 2);
        assert!(!cert.passes() && !cert.irreducible);

        assert!(spectral_certificate(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn gain_law_sparsity_enforced() {
        let g = Graph::chain(3).unwrap();
        let xeq = d(&[0.2, 0.3, 0.5]);
        let mut k = DMatrix::zeros(4, 3);
        k[(0, 2)] = 1.0; // edge (1,2) may not read vertex 3
        assert!(FeedbackLaw::from_gain(&g, &k, &xeq).is_err());
    }

    #[test]
    fn decay_fit_two_cycle() {
        let g = Graph::chain(2).unwrap();
        let xeq = d(&[0.5, 0.5]);
        let law = lemma1_law(&g, &xeq).unwrap();
        let traj = closed_loop_flow(&g, &law, &d(&[0.52, 0.48]), &uniform_grid(25.0, 250)).unwrap();
        let fit = decay_fit(&traj, &xeq).unwrap();
        assert!((fit.lambda - 1.0).abs() < 0.15, "lambda = {}", fit.lambda);

        let flat = closed_loop_flow(&g, &law, &xeq, &uniform_grid(1.0, 10)).unwrap();
        assert!(decay_fit(&flat, &xeq).is_err());
    }
}
