//! Linearized passage near each saddle and the global transition maps.
//!
//! Near pᵢ the flow is diagonal, ẋ = diag(λ₁…λ_u)x and ẏ = −diag(λ_{u+1}…λ_n)y.
//! Trajectories enter through Σᵢ^in = {‖y‖ = 1} and leave through
//! Σᵢ^out = {‖x‖ = 1} after the time of flight T(x), which solves
//! Σⱼ xⱼ² e^{2λⱼT} = 1.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{derive_constants, principal_sequence, DerivedConstants, EquilibriumSpec, NetworkSpec};
use crate::sampling::{unit_sphere, StreamFactory};

/// Required residual of the flight-time equation.
pub const FLIGHT_RESIDUAL_TOL: f64 = 1e-12;
/// Tolerance on unit-norm invariants of section points.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Sphere samples used to bound sup‖dγ/dφ‖ (and sup‖M‖ for non-constant M).
pub const LIPSCHITZ_SAMPLES: usize = 10_000;
/// Safety inflation applied to sampled suprema.
pub const SAMPLED_SUP_INFLATION: f64 = 1.1;
/// Floor for χ when the expanding sphere is S⁰ and γ has no derivative.
const MIN_LIPSCHITZ: f64 = 1e-12;
const GENERIC_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERS: usize = 200;

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// ln‖x‖, stable for tiny components.
fn ln_norm(x: &[f64]) -> f64 {
    0.5 * log_sum_exp(x.iter().filter(|v| **v != 0.0).map(|v| 2.0 * v.abs().ln()))
}

/// Result of solving the flight-time equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Flight {
    pub time: f64,
    /// τ(x): the exit point on the unit expanding sphere.
    pub tau: Vec<f64>,
}

/// Solves Σⱼ xⱼ² exp(2λⱼT) = 1 for T.
///
/// The residual is strictly increasing and log-convex in T, so a Newton
/// iteration on its logarithm started at the upper end of the bracket
/// [−ln‖x‖/λ₁, −ln‖x‖/λ_u] descends monotonically onto the root; bisection
/// takes over if a step ever leaves the bracket.
pub fn time_of_flight(x: &[f64], lambdas: &[f64]) -> Result<f64> {
    if x.len() != lambdas.len() {
        return Err(Error::Dimension(format!(
            "x has {} components but {} expanding eigenvalues",
            x.len(),
            lambdas.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("non-finite coordinate".into()));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::OnStableManifold);
    }
    let ln_r = ln_norm(x);
    if ln_r >= 0.0 {
        return Err(Error::OutsideChart { norm: ln_r.exp() });
    }
    // (2 ln|x_j|, 2 λ_j) for the nonzero components
    let terms: Vec<(f64, f64)> = x
        .iter()
        .zip(lambdas)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, l)| (2.0 * v.abs().ln(), 2.0 * l))
        .collect();
    if terms.len() == 1 {
        let (a, l2) = terms[0];
        return Ok(-a / l2);
    }
    let lam_max = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lam_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut lo = -ln_r / lam_max;
    let mut hi = -ln_r / lam_min;

    // log residual and its derivative
    let eval = |t: f64| {
        let logs = terms.iter().map(move |(a, l)| a + l * t);
        let h = log_sum_exp(logs.clone());
        let num: f64 = terms.iter().map(|(a, l)| l * (a + l * t - h).exp()).sum();
        (h, num)
    };

    let mut t = hi;
    for _ in 0..MAX_NEWTON_ITERS {
        let (h, dh) = eval(t);
        if h == 0.0 {
            break;
        }
        if h > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let mut next = t - h / dh;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        if step <= 4.0 * f64::EPSILON * t.abs().max(1.0) || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            break;
        }
    }
    let residual = eval(t).0.exp_m1().abs();
    // the log terms carry absolute rounding error of a few ulps of their size
    let scale = terms.iter().map(|(a, _)| a.abs()).fold(1.0, f64::max);
    if residual > FLIGHT_RESIDUAL_TOL.max(16.0 * f64::EPSILON * scale) {
        return Err(Error::Parameter(format!(
            "flight-time solve stalled with residual {residual:e}"
        )));
    }
    Ok(t)
}

fn tau_at(x: &[f64], lambdas: &[f64], t: f64) -> Vec<f64> {
    x.iter()
        .zip(lambdas)
        .map(|(&v, &l)| {
            if v == 0.0 {
                0.0
            } else {
                v.signum() * (v.abs().ln() + l * t).exp()
            }
        })
        .collect()
}

/// τ(x) = (e^{λⱼT(x)} xⱼ)ⱼ, the exit direction on the unit expanding sphere.
pub fn tau(x: &[f64], lambdas: &[f64]) -> Result<Vec<f64>> {
    let t = time_of_flight(x, lambdas)?;
    Ok(tau_at(x, lambdas, t))
}

pub fn flight(x: &[f64], lambdas: &[f64]) -> Result<Flight> {
    let t = time_of_flight(x, lambdas)?;
    Ok(Flight {
        time: t,
        tau: tau_at(x, lambdas, t),
    })
}

/// 1 − τ₁(x)², evaluated as Σ_{j≥2} τⱼ² to avoid cancellation.
pub fn wedge_defect_of(tau: &[f64]) -> f64 {
    tau.iter().skip(1).map(|v| v * v).sum()
}

/// A point (x, θ) on Σᵢ^in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InSectionPoint {
    pub node: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl InSectionPoint {
    /// Builds a point, checking ‖y‖ = 1.
    pub fn new(node: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let ny = crate::sampling::norm(&y);
        if (ny - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Parameter(format!(
                "in-section direction must be a unit vector, |y| = {ny}"
            )));
        }
        Ok(InSectionPoint {
            node: node.into(),
            x,
            y,
        })
    }

    /// Builds a point, normalizing `y`.
    pub fn normalized(node: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let ny = crate::sampling::norm(&y);
        if ny == 0.0 || !ny.is_finite() {
            return Err(Error::Parameter("zero stable direction".into()));
        }
        Self::new(node, x, y.into_iter().map(|v| v / ny).collect())
    }

    pub fn x_norm(&self) -> f64 {
        crate::sampling::norm(&self.x)
    }

    /// `dump-section-point` CSV row: node,x…,y…
    pub fn csv_row(&self) -> String {
        let mut row = self.node.clone();
        for v in self.x.iter().chain(&self.y) {
            row.push(',');
            row.push_str(&crate::report::fmt_f64(*v));
        }
        row
    }

    /// Parses a row produced by [`InSectionPoint::csv_row`] given the
    /// expanding dimension of the node.
    pub fn from_csv_row(row: &str, unstable_dim: usize) -> Result<Self> {
        let mut fields = row.trim().split(',');
        let node = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Config("empty section-point row".into()))?;
        let values = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() <= unstable_dim {
            return Err(Error::Config(format!(
                "row has {} values, expected more than {unstable_dim}",
                values.len()
            )));
        }
        let (x, y) = values.split_at(unstable_dim);
        Self::new(node, x.to_vec(), y.to_vec())
    }
}

/// A point (φ, y) on Σᵢ^out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutSectionPoint {
    pub node: String,
    pub phi: Vec<f64>,
    pub y: Vec<f64>,
}

/// The linearized neighbourhood of one saddle.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalChart {
    pub label: String,
    pub expanding: Vec<f64>,
    pub contracting: Vec<f64>,
    pub constants: DerivedConstants,
}

impl LocalChart {
    pub fn new(eq: &EquilibriumSpec) -> Result<Self> {
        let constants = derive_constants(eq)?;
        Ok(LocalChart {
            label: eq.label.clone(),
            expanding: eq.expanding.clone(),
            contracting: eq.contracting.clone(),
            constants,
        })
    }

    pub fn unstable_dim(&self) -> usize {
        self.expanding.len()
    }

    pub fn stable_dim(&self) -> usize {
        self.contracting.len()
    }

    pub fn time_of_flight(&self, x: &[f64]) -> Result<f64> {
        time_of_flight(x, &self.expanding)
    }

    pub fn flight(&self, x: &[f64]) -> Result<Flight> {
        flight(x, &self.expanding)
    }

    pub fn tau(&self, x: &[f64]) -> Result<Vec<f64>> {
        tau(x, &self.expanding)
    }

    /// 1 − τ₁(x)², or `None` for x = 0 or x outside the chart.
    pub fn wedge_defect(&self, x: &[f64]) -> Option<f64> {
        self.tau(x).ok().map(|t| wedge_defect_of(&t))
    }

    fn check_point(&self, p: &InSectionPoint) -> Result<()> {
        if p.x.len() != self.unstable_dim() || p.y.len() != self.stable_dim() {
            return Err(Error::Dimension(format!(
                "point on {} has dims ({}, {}), chart has ({}, {})",
                p.node,
                p.x.len(),
                p.y.len(),
                self.unstable_dim(),
                self.stable_dim()
            )));
        }
        Ok(())
    }

    /// Contracted stable coordinates exp(−λ_{u+j}T)·yⱼ.
    fn contract(&self, y: &[f64], t: f64) -> Vec<f64> {
        y.iter()
            .zip(&self.contracting)
            .map(|(v, l)| v * (-l * t).exp())
            .collect()
    }

    /// Passage from Σᵢ^in to Σᵢ^out under the linear flow.
    pub fn local_map(&self, p: &InSectionPoint) -> Result<OutSectionPoint> {
        self.check_point(p)?;
        let f = self.flight(&p.x)?;
        Ok(OutSectionPoint {
            node: p.node.clone(),
            phi: f.tau,
            y: self.contract(&p.y, f.time),
        })
    }

    /// Whether p lies in the ε-wedge Wᵢ(ε) = {1 − τ₁² < ε²}. Points on the
    /// stable manifold (x = 0) are not members.
    pub fn wedge_membership(&self, p: &InSectionPoint, eps: f64) -> bool {
        match self.wedge_defect(&p.x) {
            Some(d) => d < eps * eps,
            None => false,
        }
    }
}

/// Free-function form of [`LocalChart::wedge_membership`].
pub fn wedge_membership(chart: &LocalChart, p: &InSectionPoint, eps: f64) -> bool {
    chart.wedge_membership(p, eps)
}

/// Matrix-valued map φ ↦ M(φ) = base + Σₖ φₖ·slopesₖ on the expanding sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixField {
    pub base: DMatrix<f64>,
    #[serde(default)]
    pub slopes: Vec<DMatrix<f64>>,
}

impl MatrixField {
    pub fn constant(m: DMatrix<f64>) -> Self {
        MatrixField {
            base: m,
            slopes: Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.slopes.is_empty()
    }

    pub fn eval(&self, phi: &[f64]) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (k, s) in self.slopes.iter().enumerate() {
            m += s * phi[k];
        }
        m
    }
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Global map data carrying Σᵢ^out to Σᵢ₊₁^in.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMapSpec {
    /// u_{i+1} × s_i.
    pub m: MatrixField,
    /// s_{i+1} × u_i; γ(φ) = normalize(G·φ).
    pub g: DMatrix<f64>,
    /// Upper bound on sup‖M(φ)‖.
    pub zeta: f64,
    /// Upper bound on sup‖dγ/dφ‖.
    pub chi: f64,
}

/// Deterministic sphere samples, including the poles ±e₁.
fn sphere_samples(dim: usize) -> Vec<Vec<f64>> {
    let f = StreamFactory::new(0x5eed_0f_5a4e);
    let mut out: Vec<Vec<f64>> = (0..LIPSCHITZ_SAMPLES as u64)
        .map(|i| unit_sphere(&mut f.stream(i), dim))
        .collect();
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    out.push(e.clone());
    e[0] = -1.0;
    out.push(e);
    out
}

fn normalize(v: DVector<f64>) -> Option<DVector<f64>> {
    let n = v.norm();
    (n > 0.0 && n.is_finite()).then(|| v / n)
}

/// Orthonormal basis of the tangent space of S^{u−1} at φ.
fn tangent_basis(phi: &DVector<f64>) -> Vec<DVector<f64>> {
    let u = phi.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(u.saturating_sub(1));
    for k in 0..u {
        let mut v = DVector::zeros(u);
        v[k] = 1.0;
        v -= phi * phi.dot(&v);
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        if let Some(v) = normalize(v).filter(|v| v.norm() > 0.5) {
            if v.iter().all(|c| c.is_finite()) {
                basis.push(v);
            }
        }
        if basis.len() + 1 == u {
            break;
        }
    }
    basis
}

impl TransitionMapSpec {
    /// Builds the map and computes ζ and χ. ζ is exact for constant M and a
    /// 10% inflated sampled supremum otherwise; χ is always sampled by
    /// central differences on the sphere and inflated.
    pub fn new(m: MatrixField, g: DMatrix<f64>) -> Result<Self> {
        let u = g.ncols();
        if u == 0 || g.nrows() == 0 || m.base.nrows() == 0 || m.base.ncols() == 0 {
            return Err(Error::Dimension("empty transition matrices".into()));
        }
        if !m.slopes.is_empty() && m.slopes.len() != u {
            return Err(Error::Dimension(format!(
                "M has {} slope matrices, expected {u}",
                m.slopes.len()
            )));
        }
        if m.slopes.iter().any(|s| s.shape() != m.base.shape()) {
            return Err(Error::Dimension("slope matrices must match M's shape".into()));
        }
        let samples = sphere_samples(u);
        let zeta = if m.is_constant() {
            operator_norm(&m.base)
        } else {
            samples
                .iter()
                .map(|phi| operator_norm(&m.eval(phi)))
                .fold(0.0, f64::max)
                * SAMPLED_SUP_INFLATION
        };
        let mut spec = TransitionMapSpec {
            m,
            g,
            zeta,
            chi: 0.0,
        };
        let mut chi = 0.0f64;
        for phi in &samples {
            if let Some(d) = spec.gamma_derivative_norm_fd(phi) {
                chi = chi.max(d);
            }
        }
        spec.chi = (chi * SAMPLED_SUP_INFLATION).max(MIN_LIPSCHITZ);
        if !(spec.zeta.is_finite() && spec.zeta > 0.0) {
            return Err(Error::DegenerateGlobalMap(format!("sup|M| = {}", spec.zeta)));
        }
        Ok(spec)
    }

    pub fn constant(m: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        Self::new(MatrixField::constant(m), g)
    }

    /// Default full-rank maps between nodes of the given dimensions. The
    /// first row of M is all ones so that M·b± has a nonzero first component.
    pub fn default_between(u_from: usize, s_from: usize, u_to: usize, s_to: usize) -> Result<Self> {
        let m = DMatrix::from_fn(u_to, s_from, |r, c| {
            if r == 0 {
                1.0
            } else if r < s_from {
                if r == c {
                    1.0
                } else {
                    0.0
                }
            } else if c == r % s_from {
                0.5
            } else {
                0.0
            }
        });
        let g = DMatrix::from_fn(s_to, u_from, |r, c| {
            if r < u_from {
                if r == c {
                    1.0
                } else {
                    0.0
                }
            } else if c == r % u_from {
                0.5
            } else {
                0.0
            }
        });
        Self::constant(m, g)
    }

    pub fn unstable_dim_from(&self) -> usize {
        self.g.ncols()
    }

    pub fn stable_dim_from(&self) -> usize {
        self.m.base.ncols()
    }

    pub fn unstable_dim_to(&self) -> usize {
        self.m.base.nrows()
    }

    pub fn stable_dim_to(&self) -> usize {
        self.g.nrows()
    }

    /// γ(φ) = G·φ/‖G·φ‖.
    pub fn gamma(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let v = &self.g * DVector::from_column_slice(phi);
        normalize(v)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::DegenerateGlobalMap("G·phi vanishes".into()))
    }

    /// Exact ‖dγ/dφ‖ restricted to the tangent space at φ.
    pub fn gamma_derivative_norm(&self, phi: &[f64]) -> Option<f64> {
        let p = DVector::from_column_slice(phi);
        let gp = &self.g * &p;
        let n = gp.norm();
        if n == 0.0 {
            return None;
        }
        let gam = &gp / n;
        let proj = DMatrix::identity(gam.len(), gam.len()) - &gam * gam.transpose();
        let d = proj * &self.g / n;
        let basis = tangent_basis(&p);
        if basis.is_empty() {
            return Some(0.0);
        }
        let t = DMatrix::from_columns(&basis);
        Some(operator_norm(&(d * t)))
    }

    /// Central-difference estimate of ‖dγ/dφ‖ along the sphere at φ.
    fn gamma_derivative_norm_fd(&self, phi: &[f64]) -> Option<f64> {
        let p = DVector::from_column_slice(phi);
        let basis = tangent_basis(&p);
        if basis.is_empty() {
            return Some(0.0);
        }
        let h = 1e-6;
        let mut cols = Vec::with_capacity(basis.len());
        for v in &basis {
            let plus = normalize(&p + v * h)?;
            let minus = normalize(&p - v * h)?;
            let gp = DVector::from_vec(self.gamma(plus.as_slice()).ok()?);
            let gm = DVector::from_vec(self.gamma(minus.as_slice()).ok()?);
            cols.push((gp - gm) / (2.0 * h));
        }
        Some(operator_norm(&DMatrix::from_columns(&cols)))
    }

    /// First components of M(e±)·b±. Both must be nonzero.
    pub fn generic_components(&self) -> [f64; 2] {
        let u = self.unstable_dim_from();
        let s = self.stable_dim_from();
        let mut out = [0.0; 2];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut e = vec![0.0; u];
            e[0] = sign;
            let mut b = DVector::zeros(s);
            b[s - 1] = sign;
            out[k] = (self.m.eval(&e) * b)[0];
        }
        out
    }

    pub fn check_generic(&self) -> Result<()> {
        let scale = self.zeta.max(1.0);
        for (c, side) in self.generic_components().iter().zip(["+", "-"]) {
            if c.abs() <= GENERIC_TOL * scale {
                return Err(Error::DegenerateGlobalMap(format!(
                    "first component of M(e{side})·b{side} is {c:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Landmarks e±, b± and y± on the in-section of one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionLandmarks {
    pub e_plus: Vec<f64>,
    pub e_minus: Vec<f64>,
    pub b_plus: Vec<f64>,
    pub b_minus: Vec<f64>,
    /// Images γ(e±) of the incoming map.
    pub y_plus: Vec<f64>,
    pub y_minus: Vec<f64>,
}

impl SectionLandmarks {
    /// Landmarks of a node with expanding dim `u` and stable dim `s`, whose
    /// incoming map is `incoming`.
    pub fn new(u: usize, s: usize, incoming: &TransitionMapSpec) -> Result<Self> {
        let axis = |dim: usize, k: usize, sign: f64| {
            let mut v = vec![0.0; dim];
            v[k] = sign;
            v
        };
        let u_prev = incoming.unstable_dim_from();
        Ok(SectionLandmarks {
            e_plus: axis(u, 0, 1.0),
            e_minus: axis(u, 0, -1.0),
            b_plus: axis(s, s - 1, 1.0),
            b_minus: axis(s, s - 1, -1.0),
            y_plus: incoming.gamma(&axis(u_prev, 0, 1.0))?,
            y_minus: incoming.gamma(&axis(u_prev, 0, -1.0))?,
        })
    }

    /// min(‖y − y₊‖, ‖y − y₋‖).
    pub fn distance_to_connection(&self, y: &[f64]) -> f64 {
        let d = |a: &[f64]| {
            a.iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        };
        d(&self.y_plus).min(d(&self.y_minus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// ‖x‖ < δ.
    E,
    /// y within δ of y₊ or y₋.
    F,
    /// E ∩ F.
    B,
}

pub fn region_membership(
    p: &InSectionPoint,
    delta: f64,
    region: Region,
    landmarks: &SectionLandmarks,
) -> bool {
    let in_e = || p.x_norm() < delta;
    let in_f = || landmarks.distance_to_connection(&p.y) < delta;
    match region {
        Region::E => in_e(),
        Region::F => in_f(),
        Region::B => in_e() && in_f(),
    }
}

/// fᵢ: Σᵢ^in → Σᵢ₊₁^in.
pub fn transition_map(
    p: &InSectionPoint,
    from: &LocalChart,
    to: &LocalChart,
    maps: &TransitionMapSpec,
) -> Result<InSectionPoint> {
    from.check_point(p)?;
    if maps.unstable_dim_from() != from.unstable_dim()
        || maps.stable_dim_from() != from.stable_dim()
        || maps.unstable_dim_to() != to.unstable_dim()
        || maps.stable_dim_to() != to.stable_dim()
    {
        return Err(Error::Dimension(format!(
            "transition map {} -> {} has incompatible shapes",
            from.label, to.label
        )));
    }
    maps.check_generic()?;
    let f = from.flight(&p.x)?;
    let contracted = DVector::from_vec(from.contract(&p.y, f.time));
    let x_next = maps.m.eval(&f.tau) * contracted;
    let y_next = maps.gamma(&f.tau)?;
    Ok(InSectionPoint {
        node: to.label.clone(),
        x: x_next.iter().copied().collect(),
        y: y_next,
    })
}

/// The principal cycle with one transition map per leg: F = f_{N*} ∘ … ∘ f₁.
#[derive(Debug, Clone)]
pub struct ReturnMap {
    pub charts: Vec<LocalChart>,
    /// `maps[i]` carries node i to node (i + 1) mod N*.
    pub maps: Vec<TransitionMapSpec>,
}

impl ReturnMap {
    pub fn new(net: &NetworkSpec, maps: Vec<TransitionMapSpec>) -> Result<Self> {
        let labels = principal_sequence(net)?;
        let charts = labels
            .iter()
            .map(|l| LocalChart::new(net.equilibrium(l).expect("principal label exists")))
            .collect::<Result<Vec<_>>>()?;
        if maps.len() != charts.len() {
            return Err(Error::Dimension(format!(
                "{} transition maps for a principal cycle of length {}",
                maps.len(),
                charts.len()
            )));
        }
        for (i, m) in maps.iter().enumerate() {
            let (a, b) = (&charts[i], &charts[(i + 1) % charts.len()]);
            let expect = (a.unstable_dim(), a.stable_dim(), b.unstable_dim(), b.stable_dim());
            let got = (
                m.unstable_dim_from(),
                m.stable_dim_from(),
                m.unstable_dim_to(),
                m.stable_dim_to(),
            );
            if expect != got {
                return Err(Error::Dimension(format!(
                    "map {} -> {}: M is {}x{} and G is {}x{}, expected M {}x{} and G {}x{}",
                    a.label, b.label, got.2, got.1, got.3, got.0, expect.2, expect.1, expect.3, expect.0
                )));
            }
        }
        Ok(ReturnMap { charts, maps })
    }

    pub fn with_default_maps(net: &NetworkSpec) -> Result<Self> {
        let labels = principal_sequence(net)?;
        let eqs: Vec<&EquilibriumSpec> = labels
            .iter()
            .map(|l| net.equilibrium(l).expect("principal label exists"))
            .collect();
        let n = eqs.len();
        let maps = (0..n)
            .map(|i| {
                let (a, b) = (eqs[i], eqs[(i + 1) % n]);
                TransitionMapSpec::default_between(
                    a.unstable_dim(),
                    a.stable_dim(),
                    b.unstable_dim(),
                    b.stable_dim(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(net, maps)
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.charts.iter().position(|c| c.label == label)
    }

    /// Landmarks on the in-section of node `i`.
    pub fn landmarks(&self, i: usize) -> Result<SectionLandmarks> {
        let n = self.len();
        let prev = &self.maps[(i + n - 1) % n];
        SectionLandmarks::new(self.charts[i].unstable_dim(), self.charts[i].stable_dim(), prev)
    }

    /// Applies fᵢ for leg `i`.
    pub fn leg(&self, i: usize, p: &InSectionPoint) -> Result<InSectionPoint> {
        let n = self.len();
        transition_map(p, &self.charts[i], &self.charts[(i + 1) % n], &self.maps[i])
    }

    /// One full loop starting on Σ₁^in. Errors carry the failing leg.
    pub fn apply(&self, p: &InSectionPoint) -> Result<InSectionPoint> {
        if p.node != self.charts[0].label {
            return Err(Error::Parameter(format!(
                "return map starts at {}, point is on {}",
                self.charts[0].label, p.node
            )));
        }
        (0..self.len()).try_fold(p.clone(), |q, i| self.leg(i, &q).map_err(|e| e.at_leg(i)))
    }

    /// Π ρᵢ over the loop.
    pub fn loop_rho(&self) -> f64 {
        self.charts.iter().map(|c| c.constants.rho).product()
    }

    /// Π μᵢ over the loop.
    pub fn loop_mu(&self) -> f64 {
        self.charts.iter().map(|c| c.constants.mu).product()
    }

    /// Constant Z of the composed bound ‖F(p).x‖ ≤ Z·‖p.x‖^{Πρᵢ}, obtained by
    /// chaining ‖x'‖ ≤ ζᵢ‖x‖^{ρᵢ} around the loop: Z = Πᵢ ζᵢ^{Π_{j>i} ρⱼ}.
    pub fn loop_zeta(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let tail: f64 = self.charts[i + 1..].iter().map(|c| c.constants.rho).product();
                self.maps[i].zeta.powf(tail)
            })
            .product()
    }
}

/// F applied to `p` for the network's principal cycle with the given maps.
pub fn return_map(p: &InSectionPoint, net: &NetworkSpec, maps: &[TransitionMapSpec]) -> Result<InSectionPoint> {
    ReturnMap::new(net, maps.to_vec())?.apply(p)
}
