//! Generalized Lotka–Volterra realizations of heteroclinic networks:
//! ẋ_k = x_k (r_k + Σⱼ A_kj xⱼ).

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    principal_sequence, validate_hypotheses, ConnectionSpec, EquilibriumSpec, Hypothesis, NetworkSpec,
    ValidationReport,
};
use crate::ode::{integrate, Control, OdeSystem, StepStats, StepperOptions};
use crate::sampling::{derive_seed, parallel_map, Workers};

/// Eigenvalues with modulus below this are treated as zero.
pub const HYPERBOLIC_TOL: f64 = 1e-9;
/// Offset along the unstable direction used to trace a connection.
pub const CONNECTION_SEED_OFFSET: f64 = 1e-8;
/// Vertex budget for traced connection polylines.
pub const MAX_POLYLINE_VERTICES: usize = 256;
/// Default step cap for GLV runs. Keeps every stage polynomial positive so
/// tiny coordinates never flip sign.
pub const DEFAULT_H_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GlvSystem {
    pub growth: Vec<f64>,
    pub interaction: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl GlvSystem {
    pub fn new(growth: Vec<f64>, interaction: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = growth.len();
        if n < 3 {
            return Err(Error::Parameter(format!("GLV dimension {n} < 3")));
        }
        if interaction.nrows() != n || interaction.ncols() != n {
            return Err(Error::Dimension(format!(
                "interaction is {}x{}, growth has {n} entries",
                interaction.nrows(),
                interaction.ncols()
            )));
        }
        if growth.iter().chain(interaction.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite GLV coefficient".into()));
        }
        if let Some(k) = (0..n).find(|&k| interaction[(k, k)] >= 0.0) {
            return Err(Error::Parameter(format!(
                "A[{k}][{k}] = {} must be strictly negative",
                interaction[(k, k)]
            )));
        }
        let labels = labels.unwrap_or_else(|| (1..=n).map(|i| format!("p{i}")).collect());
        if labels.len() != n {
            return Err(Error::Dimension(format!("{} labels for {n} species", labels.len())));
        }
        Ok(GlvSystem {
            growth,
            interaction,
            labels,
        })
    }

    /// Rows as nested vectors: A[k][j].
    pub fn from_rows(growth: Vec<f64>, rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("interaction matrix is not square".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        GlvSystem::new(growth, a, labels)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.interaction[(i, j)]).collect())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.growth.len()
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let g: f64 = self.growth[k] + (0..n).map(|l| self.interaction[(k, l)] * x[l]).sum::<f64>();
            for m in 0..n {
                j[(k, m)] = x[k] * self.interaction[(k, m)];
            }
            j[(k, k)] += g;
        }
        j
    }

    /// Axis equilibrium of species k, if r_k / (−A_kk) > 0.
    pub fn axis_point(&self, k: usize) -> Option<Vec<f64>> {
        let v = self.growth[k] / -self.interaction[(k, k)];
        (v > 0.0).then(|| {
            let mut x = vec![0.0; self.dim()];
            x[k] = v;
            x
        })
    }

    /// Transverse eigenvalue r_j + A_jk x_k at the axis equilibrium of k.
    pub fn transverse_eigenvalue(&self, k: usize, j: usize) -> f64 {
        let xk = self.growth[k] / -self.interaction[(k, k)];
        self.growth[j] + self.interaction[(j, k)] * xk
    }
}

impl OdeSystem for GlvSystem {
    fn dim(&self) -> usize {
        self.growth.len()
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let n = self.growth.len();
        for k in 0..n {
            let mut g = self.growth[k];
            for (j, xj) in x.iter().enumerate() {
                g += self.interaction[(k, j)] * xj;
            }
            dx[k] = x[k] * g;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisEquilibrium {
    pub species: usize,
    pub label: String,
    pub state: Vec<f64>,
    /// x_k A_kk = −r_k.
    pub radial: f64,
    /// (j, r_j + A_jk x_k) for every j ≠ k.
    pub transverse: Vec<(usize, f64)>,
    /// All n eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub hyperbolic: bool,
}

pub fn axis_equilibria(sys: &GlvSystem) -> Vec<AxisEquilibrium> {
    let n = sys.dim();
    (0..n)
        .filter_map(|k| {
            let state = sys.axis_point(k)?;
            let radial = state[k] * sys.interaction[(k, k)];
            let transverse: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != k)
                .map(|j| (j, sys.transverse_eigenvalue(k, j)))
                .collect();
            let mut eigenvalues: Vec<f64> = std::iter::once(radial)
                .chain(transverse.iter().map(|t| t.1))
                .collect();
            eigenvalues.sort_by(|a, b| b.total_cmp(a));
            let hyperbolic = eigenvalues.iter().all(|l| l.abs() >= HYPERBOLIC_TOL);
            Some(AxisEquilibrium {
                species: k,
                label: sys.labels[k].clone(),
                state,
                radial,
                transverse,
                eigenvalues,
                hyperbolic,
            })
        })
        .collect()
}

/// The Jacobian at the origin is diag(r).
pub fn origin_spectrum(sys: &GlvSystem) -> Vec<f64> {
    sys.growth.clone()
}

/// A connection given by species labels, for networks whose connections
/// cannot be read off the sign pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitConnection {
    pub source: String,
    pub target: String,
}

/// Builds the abstract network of the axis saddles. Without an explicit list,
/// k → j is inferred iff the j-direction expands at p_k and the k-direction
/// contracts at p_j. Equilibria are ordered along the strong chain from the
/// first species; the remaining ones follow in species order.
pub fn network_from_glv(sys: &GlvSystem, explicit: Option<&[ExplicitConnection]>) -> Result<NetworkSpec> {
    let axes = axis_equilibria(sys);
    if let Some(bad) = axes.iter().find(|a| !a.hyperbolic) {
        return Err(Error::Hypothesis {
            hypothesis: Hypothesis::H1,
            detail: format!("{} is not hyperbolic: {:?}", bad.label, bad.eigenvalues),
        });
    }
    let by_species = |s: usize| axes.iter().find(|a| a.species == s);
    let mut specs = Vec::new();
    for a in &axes {
        let mut expanding: Vec<f64> = a.eigenvalues.iter().copied().filter(|l| *l > 0.0).collect();
        let mut contracting: Vec<f64> = a.eigenvalues.iter().filter(|l| **l < 0.0).map(|l| -l).collect();
        expanding.sort_by(|x, y| y.total_cmp(x));
        contracting.sort_by(|x, y| x.total_cmp(y));
        specs.push(EquilibriumSpec::new(a.label.clone(), expanding, contracting));
    }

    let index_of_expanding = |k: usize, j: usize| -> Option<usize> {
        let lam = sys.transverse_eigenvalue(k, j);
        if lam <= 0.0 {
            return None;
        }
        let spec = &specs[axes.iter().position(|a| a.species == k)?];
        spec.expanding.iter().position(|l| *l == lam).map(|i| i + 1)
    };

    let species_of = |label: &str| -> Result<usize> {
        sys.labels
            .iter()
            .position(|l| l == label)
            .filter(|s| by_species(*s).is_some())
            .ok_or_else(|| Error::Config(format!("connection names unknown axis equilibrium {label}")))
    };

    let mut connections = Vec::new();
    match explicit {
        Some(list) => {
            for c in list {
                let (k, j) = (species_of(&c.source)?, species_of(&c.target)?);
                let idx = index_of_expanding(k, j).ok_or_else(|| Error::Hypothesis {
                    hypothesis: Hypothesis::H3,
                    detail: format!("{} -> {}: direction {} does not expand at {}", c.source, c.target, c.target, c.source),
                })?;
                connections.push(ConnectionSpec::new(&c.source, &c.target, idx));
            }
        }
        None => {
            for a in &axes {
                for b in &axes {
                    if a.species == b.species {
                        continue;
                    }
                    let out = sys.transverse_eigenvalue(a.species, b.species);
                    let back = sys.transverse_eigenvalue(b.species, a.species);
                    if out > 0.0 && back < 0.0 {
                        let idx = index_of_expanding(a.species, b.species).expect("positive eigenvalue listed");
                        connections.push(ConnectionSpec::new(&a.label, &b.label, idx));
                    }
                }
            }
            if connections.is_empty() {
                return Err(Error::AmbiguousConnections(
                    "no expanding direction points at a saddle that contracts back".into(),
                ));
            }
        }
    }

    // follow strong connections from the first equilibrium
    let mut order: Vec<usize> = Vec::new();
    let mut principal_length = specs.len();
    if !specs.is_empty() {
        let mut cur = 0usize;
        loop {
            order.push(cur);
            let next = connections
                .iter()
                .find(|c| c.is_strong() && c.source == specs[cur].label)
                .and_then(|c| specs.iter().position(|s| s.label == c.target));
            match next {
                Some(nx) if nx == order[0] => {
                    principal_length = order.len();
                    break;
                }
                Some(nx) if !order.contains(&nx) => cur = nx,
                _ => break,
            }
        }
        for i in 0..specs.len() {
            if !order.contains(&i) {
                order.push(i);
            }
        }
    }
    let equilibria = order.iter().map(|&i| specs[i].clone()).collect();
    Ok(NetworkSpec {
        equilibria,
        connections,
        principal_length,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has its initial state")
    }
}

pub fn glv_options(rel_tol: f64, abs_tol: f64) -> StepperOptions {
    StepperOptions {
        rel_tol,
        abs_tol,
        h_max: DEFAULT_H_MAX,
        nonnegative: true,
        ..StepperOptions::default()
    }
}

fn check_start(sys: &GlvSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!("x0 has {} components, system {}", x0.len(), sys.dim())));
    }
    if x0.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Parameter("x0 must lie in the closed positive orthant".into()));
    }
    Ok(())
}

/// Integrates from x0 over [0, t_max], recording every accepted step.
pub fn simulate(sys: &GlvSystem, x0: &[f64], t_max: f64, opts: &StepperOptions) -> Result<Trajectory> {
    check_start(sys, x0)?;
    let mut opts = *opts;
    opts.nonnegative = true;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let out = integrate(sys, x0, 0.0, t_max, &opts, |t, x| {
        times.push(t);
        states.push(x.to_vec());
        Control::Continue
    })?;
    Ok(Trajectory {
        times,
        states,
        stats: out.stats,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Visit {
    pub label: String,
    pub entry: f64,
    /// End of the trajectory when the visit never completed.
    pub exit: f64,
    pub min_distance: f64,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Itinerary {
    pub eps: f64,
    pub visits: Vec<Visit>,
}

impl Itinerary {
    pub fn labels(&self) -> Vec<&str> {
        self.visits.iter().map(|v| v.label.as_str()).collect()
    }
}

/// Streaming ε-ball visit detector. Crossing times are interpolated linearly
/// in the distance between consecutive states.
#[derive(Debug, Clone)]
pub struct VisitDetector {
    labels: Vec<String>,
    centers: Vec<Vec<f64>>,
    eps: f64,
    prev: Option<(f64, Vec<f64>)>,
    open: Option<(usize, f64, f64)>,
    visits: Vec<Visit>,
}

impl VisitDetector {
    pub fn new(labels: Vec<String>, centers: Vec<Vec<f64>>, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Parameter(format!("eps = {eps} must be positive")));
        }
        let mut min_sep = f64::INFINITY;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                min_sep = min_sep.min(dist(&centers[i], &centers[j]));
            }
        }
        if eps >= min_sep / 2.0 {
            return Err(Error::EpsTooLarge {
                eps,
                min_separation: min_sep,
            });
        }
        Ok(VisitDetector {
            labels,
            centers,
            eps,
            prev: None,
            open: None,
            visits: Vec::new(),
        })
    }

    /// Feeds one state; returns the index of a ball entered at this step.
    pub fn push(&mut self, t: f64, x: &[f64]) -> Option<usize> {
        let d: Vec<f64> = self.centers.iter().map(|c| dist(c, x)).collect();
        let cross = |prev: &Option<(f64, Vec<f64>)>, i: usize| -> f64 {
            match prev {
                Some((t0, d0)) if (d[i] - d0[i]).abs() > 0.0 => {
                    let s = ((self.eps - d0[i]) / (d[i] - d0[i])).clamp(0.0, 1.0);
                    t0 + s * (t - t0)
                }
                _ => t,
            }
        };
        let mut entered = None;
        if let Some((i, entry, min_d)) = self.open {
            if d[i] >= self.eps {
                let exit = cross(&self.prev, i);
                self.visits.push(Visit {
                    label: self.labels[i].clone(),
                    entry,
                    exit,
                    min_distance: min_d,
                    completed: true,
                });
                self.open = None;
            } else {
                self.open = Some((i, entry, min_d.min(d[i])));
            }
        }
        if self.open.is_none() {
            if let Some(i) = (0..d.len()).find(|&i| d[i] < self.eps) {
                let entry = if self.prev.is_some() { cross(&self.prev, i) } else { t };
                self.open = Some((i, entry, d[i]));
                entered = Some(i);
            }
        }
        self.prev = Some((t, d));
        entered
    }

    pub fn finish(mut self) -> Itinerary {
        if let Some((i, entry, min_d)) = self.open.take() {
            let end = self.prev.as_ref().map_or(entry, |p| p.0);
            self.visits.push(Visit {
                label: self.labels[i].clone(),
                entry,
                exit: end,
                min_distance: min_d,
                completed: false,
            });
        }
        Itinerary {
            eps: self.eps,
            visits: self.visits,
        }
    }
}

pub fn detect_itinerary(traj: &Trajectory, labels: &[String], centers: &[Vec<f64>], eps: f64) -> Result<Itinerary> {
    let mut det = VisitDetector::new(labels.to_vec(), centers.to_vec(), eps)?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        det.push(*t, x);
    }
    Ok(det.finish())
}

/// Labels and states of the axis equilibria named in `net`.
pub fn network_centers(sys: &GlvSystem, net: &NetworkSpec) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut labels = Vec::new();
    let mut centers = Vec::new();
    for eq in &net.equilibria {
        let s = species_index(sys, &eq.label)?;
        labels.push(eq.label.clone());
        centers.push(sys.axis_point(s).ok_or_else(|| Error::Config(format!("no axis equilibrium for {}", eq.label)))?);
    }
    Ok((labels, centers))
}

fn species_index(sys: &GlvSystem, label: &str) -> Result<usize> {
    sys.labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::Config(format!("unknown species label {label}")))
}

fn resample_polyline(points: &[Vec<f64>], max_vertices: usize) -> Vec<Vec<f64>> {
    let total: f64 = points.windows(2).map(|w| dist(&w[0], &w[1])).sum();
    if points.len() <= max_vertices || total == 0.0 {
        return points.to_vec();
    }
    let spacing = total / (max_vertices - 1) as f64;
    let mut out = vec![points[0].clone()];
    let mut acc = 0.0;
    for w in points.windows(2) {
        acc += dist(&w[0], &w[1]);
        if acc >= spacing && out.len() < max_vertices - 1 {
            out.push(w[1].clone());
            acc = 0.0;
        }
    }
    out.push(points.last().expect("nonempty").clone());
    out
}

/// Traces the connection from the axis equilibrium of `source` to that of
/// `target` inside their coordinate plane.
pub fn trace_connection(sys: &GlvSystem, source: usize, target: usize, opts: &StepperOptions) -> Result<Vec<Vec<f64>>> {
    let from = sys.axis_point(source).ok_or_else(|| Error::Parameter("source axis equilibrium missing".into()))?;
    let to = sys.axis_point(target).ok_or_else(|| Error::Parameter("target axis equilibrium missing".into()))?;
    if sys.transverse_eigenvalue(source, target) <= 0.0 {
        return Err(Error::Hypothesis {
            hypothesis: Hypothesis::H3,
            detail: format!("{} does not expand toward {}", sys.labels[source], sys.labels[target]),
        });
    }
    let mut x0 = from.clone();
    x0[target] = CONNECTION_SEED_OFFSET;
    let mut pts = vec![from.clone()];
    let mut arrived = false;
    integrate(sys, &x0, 0.0, 1e5, &StepperOptions { nonnegative: true, ..*opts }, |_, x| {
        pts.push(x.to_vec());
        if dist(x, &to) < 1e-6 {
            arrived = true;
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    if !arrived {
        return Err(Error::Hypothesis {
            hypothesis: Hypothesis::H3,
            detail: format!("unstable manifold of {} toward {} does not reach it", sys.labels[source], sys.labels[target]),
        });
    }
    pts.push(to);
    Ok(resample_polyline(&pts, MAX_POLYLINE_VERTICES))
}

pub fn distance_to_polyline(x: &[f64], poly: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for w in poly.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mut ab2 = 0.0;
        let mut dot = 0.0;
        for i in 0..x.len() {
            let ab = b[i] - a[i];
            ab2 += ab * ab;
            dot += (x[i] - a[i]) * ab;
        }
        let s = if ab2 > 0.0 { (dot / ab2).clamp(0.0, 1.0) } else { 0.0 };
        let d2: f64 = (0..x.len())
            .map(|i| {
                let p = a[i] + s * (b[i] - a[i]);
                (x[i] - p) * (x[i] - p)
            })
            .sum();
        best = best.min(d2);
    }
    best.sqrt()
}

/// The starting box U on the incoming side of p₁: a point on the incoming
/// connection at distance `distance` from p₁, with every coordinate outside
/// that connection's plane drawn from `transverse`. Both ranges are closed
/// intervals with positive lower ends, so no start lies on an invariant plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingBox {
    pub distance: [f64; 2],
    pub transverse: [f64; 2],
}

impl Default for SamplingBox {
    fn default() -> Self {
        SamplingBox {
            distance: [0.1, 0.15],
            transverse: [1e-3, 1e-2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub eps: f64,
    pub delta: f64,
    pub n_samples: u64,
    pub t_max: f64,
    pub seed: u64,
    #[serde(rename = "box")]
    pub sampling_box: SamplingBox,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            eps: 0.2,
            delta: 0.1,
            n_samples: 500,
            t_max: 2000.0,
            seed: 1,
            sampling_box: SamplingBox::default(),
            rel_tol: 1e-8,
            abs_tol: 1e-10,
        }
    }
}

impl ChannelParams {
    pub fn check(&self) -> Result<()> {
        let b = &self.sampling_box;
        if !(self.delta > 0.0) || !(self.t_max > 0.0) || self.n_samples == 0 {
            return Err(Error::Parameter("delta, t_max and n must be positive".into()));
        }
        if !(b.distance[0] > 0.0 && b.distance[0] <= b.distance[1] && b.distance[1] < self.eps) {
            return Err(Error::Parameter(format!(
                "box distance {:?} must satisfy 0 < lo <= hi < eps = {}",
                b.distance, self.eps
            )));
        }
        if !(b.transverse[0] > 0.0 && b.transverse[0] <= b.transverse[1]) {
            return Err(Error::Parameter(format!("box transverse range {:?} must be positive", b.transverse)));
        }
        glv_options(self.rel_tol, self.abs_tol).check()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SampleOutcome {
    Following,
    LeftTube,
    WrongOrder,
    Timeout,
    Aborted,
}

/// Geometry of V(ε, δ): ε-balls around the principal saddles and δ-tubes
/// around the traced principal connections.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGeometry {
    pub labels: Vec<String>,
    pub centers: Vec<Vec<f64>>,
    pub species: Vec<usize>,
    pub tubes: Vec<Vec<Vec<f64>>>,
    pub eps: f64,
    pub delta: f64,
}

impl ChannelGeometry {
    pub fn new(sys: &GlvSystem, net: &NetworkSpec, eps: f64, delta: f64, opts: &StepperOptions) -> Result<Self> {
        let labels = principal_sequence(net)?;
        let species = labels.iter().map(|l| species_index(sys, l)).collect::<Result<Vec<_>>>()?;
        let centers = species
            .iter()
            .map(|&s| sys.axis_point(s).ok_or_else(|| Error::Config("missing axis equilibrium".into())))
            .collect::<Result<Vec<_>>>()?;
        let n = species.len();
        let tubes = (0..n)
            .map(|i| trace_connection(sys, species[i], species[(i + 1) % n], opts))
            .collect::<Result<Vec<_>>>()?;
        // balls of all equilibria in the network must be disjoint
        let (all_labels, all_centers) = network_centers(sys, net)?;
        VisitDetector::new(all_labels, all_centers, eps)?;
        Ok(ChannelGeometry {
            labels,
            centers,
            species,
            tubes,
            eps,
            delta,
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.centers.iter().any(|c| dist(c, x) < self.eps)
            || self.tubes.iter().any(|t| distance_to_polyline(x, t) < self.delta)
    }

    /// Polyline of the connection entering p₁.
    pub fn incoming(&self) -> &[Vec<f64>] {
        self.tubes.last().expect("nonempty cycle")
    }

    /// Point of the incoming connection at distance `d` from p₁.
    pub fn incoming_point(&self, d: f64) -> Vec<f64> {
        let poly = self.incoming();
        let p1 = &self.centers[0];
        for w in poly.windows(2).rev() {
            let (a, b) = (&w[0], &w[1]);
            let (da, db) = (dist(a, p1), dist(b, p1));
            if da >= d && db < d {
                let s = (da - d) / (da - db);
                return a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
            }
        }
        poly[0].clone()
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R, sampling_box: &SamplingBox) -> Vec<f64> {
        let [dlo, dhi] = sampling_box.distance;
        let d = if dhi > dlo { rng.random_range(dlo..=dhi) } else { dlo };
        let mut x = self.incoming_point(d);
        let last = self.species.len() - 1;
        let plane = [self.species[0], self.species[last]];
        let [tlo, thi] = sampling_box.transverse;
        for (i, v) in x.iter_mut().enumerate() {
            if !plane.contains(&i) {
                *v = if thi > tlo { rng.random_range(tlo..=thi) } else { tlo };
            }
        }
        x
    }
}

/// Integrates one start until it completes a circuit p₁ → … → p_{N*} → p₁,
/// leaves V, visits out of order, or runs out of time.
pub fn follow_circuit(
    sys: &GlvSystem,
    geom: &ChannelGeometry,
    x0: &[f64],
    t_max: f64,
    opts: &StepperOptions,
) -> (SampleOutcome, Option<f64>) {
    let n = geom.labels.len();
    let mut det = match VisitDetector::new(geom.labels.clone(), geom.centers.clone(), geom.eps) {
        Ok(d) => d,
        Err(_) => return (SampleOutcome::Aborted, None),
    };
    let mut outcome = SampleOutcome::Timeout;
    let mut expected = 0usize;
    let mut circuit_time = None;
    let res = integrate(sys, x0, 0.0, t_max, opts, |t, x| {
        if !geom.contains(x) {
            outcome = SampleOutcome::LeftTube;
            return Control::Stop;
        }
        if let Some(i) = det.push(t, x) {
            if i != expected % n {
                outcome = SampleOutcome::WrongOrder;
                return Control::Stop;
            }
            if expected == n {
                outcome = SampleOutcome::Following;
                circuit_time = Some(t);
                return Control::Stop;
            }
            expected += 1;
        }
        Control::Continue
    });
    match res {
        Ok(_) => (outcome, circuit_time),
        Err(_) => (SampleOutcome::Aborted, None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub n_initial: u64,
    pub n_following: u64,
    pub fraction: f64,
    pub eps: f64,
    pub delta: f64,
    pub t_max: f64,
    pub seed: u64,
    #[serde(rename = "box")]
    pub sampling_box: SamplingBox,
    pub principal: Vec<String>,
    pub timeout_count: u64,
    pub left_tube_count: u64,
    pub wrong_order_count: u64,
    pub aborted_count: u64,
    pub min_circuit_time: Option<f64>,
    pub max_circuit_time: Option<f64>,
    pub hypotheses: ValidationReport,
    pub h4_flag: bool,
}

/// Samples starts in the box U near p₁ and counts those that follow the
/// principal cycle once around inside V(ε, δ).
pub fn channel_experiment(sys: &GlvSystem, net: &NetworkSpec, params: &ChannelParams, workers: Workers) -> Result<ChannelReport> {
    params.check()?;
    let opts = glv_options(params.rel_tol, params.abs_tol);
    let geom = ChannelGeometry::new(sys, net, params.eps, params.delta, &opts)?;
    let hypotheses = validate_hypotheses(net);
    let seed = derive_seed(params.seed, "channel");
    let results = parallel_map(params.n_samples, seed, workers, |_, rng| {
        let x0 = geom.sample_start(rng, &params.sampling_box);
        follow_circuit(sys, &geom, &x0, params.t_max, &opts)
    });
    let count = |o: SampleOutcome| results.iter().filter(|r| r.0 == o).count() as u64;
    let n_following = count(SampleOutcome::Following);
    let times: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
    Ok(ChannelReport {
        n_initial: params.n_samples,
        n_following,
        fraction: n_following as f64 / params.n_samples as f64,
        eps: params.eps,
        delta: params.delta,
        t_max: params.t_max,
        seed: params.seed,
        sampling_box: params.sampling_box,
        principal: geom.labels.clone(),
        timeout_count: count(SampleOutcome::Timeout),
        left_tube_count: count(SampleOutcome::LeftTube),
        wrong_order_count: count(SampleOutcome::WrongOrder),
        aborted_count: count(SampleOutcome::Aborted),
        min_circuit_time: times.iter().copied().reduce(f64::min),
        max_circuit_time: times.iter().copied().reduce(f64::max),
        h4_flag: hypotheses.violates(Hypothesis::H4),
        hypotheses,
    })
}

/// Smallest gap between distinct eigenvalues (or between an eigenvalue and
/// zero) over all axis saddles.
pub fn min_eigen_gap(sys: &GlvSystem) -> f64 {
    let mut gap = f64::INFINITY;
    for a in axis_equilibria(sys) {
        let mut ev = a.eigenvalues.clone();
        ev.push(0.0);
        ev.sort_by(|x, y| x.total_cmp(y));
        for w in ev.windows(2) {
            let g = w[1] - w[0];
            if g > 0.0 {
                gap = gap.min(g);
            }
        }
    }
    gap
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedReport {
    pub index: u64,
    pub revalidated: bool,
    pub violations: Vec<String>,
    pub channel: Option<ChannelReport>,
    pub error: Option<String>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationStudy {
    pub magnitude: f64,
    pub n_perturbations: u64,
    pub seed: u64,
    pub min_eigen_gap: f64,
    /// 1e-2 × the minimum eigenvalue gap.
    pub guideline: f64,
    pub exceeds_guideline: bool,
    pub reports: Vec<PerturbedReport>,
}

impl PerturbationStudy {
    pub fn min_fraction(&self) -> Option<f64> {
        self.reports
            .iter()
            .filter_map(|r| r.channel.as_ref().map(|c| c.fraction))
            .reduce(f64::min)
    }
}

/// Adds uniform noise in [−m, m] to every entry of r and A.
pub fn perturb_system<R: Rng + ?Sized>(sys: &GlvSystem, magnitude: f64, rng: &mut R) -> Result<GlvSystem> {
    let mut noise = || if magnitude > 0.0 { rng.random_range(-1.0..=1.0) * magnitude } else { 0.0 };
    let growth = sys.growth.iter().map(|r| r + noise()).collect();
    let mut a = sys.interaction.clone();
    for v in a.iter_mut() {
        *v += noise();
    }
    GlvSystem::new(growth, a, Some(sys.labels.clone()))
}

/// Perturbs the system `n` times, re-infers and re-validates the network and
/// reruns the channel experiment with the same channel seed. Perturbations
/// that break a hypothesis are flagged, not treated as errors.
pub fn perturb_and_redetect(
    sys: &GlvSystem,
    explicit: Option<&[ExplicitConnection]>,
    magnitude: f64,
    n_perturbations: u64,
    params: &ChannelParams,
    workers: Workers,
) -> Result<PerturbationStudy> {
    if !(magnitude >= 0.0) {
        return Err(Error::Parameter(format!("magnitude {magnitude} must be nonnegative")));
    }
    params.check()?;
    let gap = min_eigen_gap(sys);
    let factory = crate::sampling::StreamFactory::new(derive_seed(params.seed, "perturb"));
    let mut reports = Vec::new();
    for i in 0..n_perturbations {
        let mut rng = factory.stream(i);
        let mut rep = PerturbedReport {
            index: i,
            revalidated: false,
            violations: Vec::new(),
            channel: None,
            error: None,
            flagged: true,
        };
        let attempt = perturb_system(sys, magnitude, &mut rng).and_then(|p| {
            let net = network_from_glv(&p, explicit)?;
            Ok((p, net))
        });
        match attempt {
            Err(e) => rep.error = Some(e.to_string()),
            Ok((p, net)) => {
                let v = validate_hypotheses(&net);
                rep.revalidated = v.passed;
                rep.violations = v.violations.iter().map(|x| format!("{}: {}", x.hypothesis, x.detail)).collect();
                match channel_experiment(&p, &net, params, workers) {
                    Ok(c) => rep.channel = Some(c),
                    Err(e) => rep.error = Some(e.to_string()),
                }
                rep.flagged = !rep.revalidated || rep.error.is_some();
            }
        }
        reports.push(rep);
    }
    Ok(PerturbationStudy {
        magnitude,
        n_perturbations,
        seed: params.seed,
        min_eigen_gap: gap,
        guideline: 1e-2 * gap,
        exceeds_guideline: magnitude > 1e-2 * gap,
        reports,
    })
}

/// Three-species May–Leonard system: r = 1, A_kk = −1, species k+1 feels
/// −a from k and species k−1 feels −b from k (indices mod 3).
pub fn may_leonard(a: f64, b: f64) -> GlvSystem {
    let rows = vec![vec![-1.0, -b, -a], vec![-a, -1.0, -b], vec![-b, -a, -1.0]];
    GlvSystem::from_rows(vec![1.0; 3], &rows, None).expect("well-formed May-Leonard system")
}

/// GLV system with r = 1, A_kk = −1 and A_jk = −1 + λ_{j@k}, so that the
/// transverse eigenvalue at the axis equilibrium of k in direction j is
/// exactly λ_{j@k}. `transverse[k][j]` is ignored on the diagonal.
pub fn from_transverse_eigenvalues(transverse: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<GlvSystem> {
    let n = transverse.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|k| if j == k { -1.0 } else { -1.0 + transverse[k][j] }).collect())
        .collect();
    GlvSystem::from_rows(vec![1.0; n], &rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn may_leonard_spectrum() {
        let sys = may_leonard(0.8, 1.6);
        let axes = axis_equilibria(&sys);
        assert_eq!(axes.len(), 3);
        assert_eq!(axes[0].state, vec![1.0, 0.0, 0.0]);
        let expect = [0.2, -0.6, -1.0];
        for (l, e) in axes[0].eigenvalues.iter().zip(expect) {
            assert!((l - e).abs() < 1e-15, "{l} vs {e}");
        }
    }

    #[test]
    fn decoupled_system_has_no_connections() {
        let sys = GlvSystem::new(vec![1.0; 3], -DMatrix::identity(3, 3), None).unwrap();
        assert_eq!(axis_equilibria(&sys)[0].eigenvalues, vec![1.0, 1.0, -1.0]);
        assert!(matches!(network_from_glv(&sys, None), Err(Error::AmbiguousConnections(_))));
        assert_eq!(origin_spectrum(&sys), vec![1.0; 3]);
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(GlvSystem::new(vec![1.0; 2], -DMatrix::identity(2, 2), None).is_err());
        let mut a = -DMatrix::identity(3, 3);
        a[(1, 1)] = 0.0;
        assert!(GlvSystem::new(vec![1.0; 3], a, None).is_err());
    }

    #[test]
    fn may_leonard_network_is_a_valid_cycle() {
        let net = network_from_glv(&may_leonard(0.8, 1.6), None).unwrap();
        assert_eq!(net.principal_length, 3);
        let labels: Vec<&str> = net.equilibria.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["p1", "p2", "p3"]);
        let v = validate_hypotheses(&net);
        assert!(v.passed, "{v:?}");
        let weak = network_from_glv(&may_leonard(0.8, 1.1), None).unwrap();
        assert!(validate_hypotheses(&weak).violates(Hypothesis::H4));
    }

    #[test]
    fn eps_too_large_is_rejected() {
        let sys = may_leonard(0.8, 1.6);
        let net = network_from_glv(&sys, None).unwrap();
        let (labels, centers) = network_centers(&sys, &net).unwrap();
        assert!(matches!(
            VisitDetector::new(labels, centers, 0.9),
            Err(Error::EpsTooLarge { .. })
        ));
    }

    #[test]
    fn fixed_point_gives_one_open_visit() {
        let sys = may_leonard(0.8, 1.6);
        let net = network_from_glv(&sys, None).unwrap();
        let (labels, centers) = network_centers(&sys, &net).unwrap();
        let traj = simulate(&sys, &[1.0, 0.0, 0.0], 10.0, &glv_options(1e-8, 1e-10)).unwrap();
        let it = detect_itinerary(&traj, &labels, &centers, 0.2).unwrap();
        assert_eq!(it.visits.len(), 1);
        assert_eq!(it.visits[0].label, "p1");
        assert!(!it.visits[0].completed);
        assert_eq!(it.visits[0].exit, traj.end_time());
    }

    #[test]
    fn polyline_distance() {
        let poly = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        assert!((distance_to_polyline(&[0.5, 0.3], &poly) - 0.3).abs() < 1e-15);
        assert!((distance_to_polyline(&[2.0, 2.0], &poly) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn incoming_point_sits_at_requested_distance() {
        let sys = may_leonard(0.8, 1.6);
        let net = network_from_glv(&sys, None).unwrap();
        let geom = ChannelGeometry::new(&sys, &net, 0.2, 0.1, &glv_options(1e-8, 1e-10)).unwrap();
        let p = geom.incoming_point(0.12);
        assert!((dist(&p, &geom.centers[0]) - 0.12).abs() < 1e-3);
        assert_eq!(p[1], 0.0);
        assert!(geom.tubes.iter().all(|t| t.len() <= MAX_POLYLINE_VERTICES));
    }
}
