//! Abstract heteroclinic networks: saddles with ordered real spectra, the
//! connections between them, and the hypothesis checks that make a network
//! admissible for the local analysis.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stand-in for α when an equilibrium has a single expanding direction.
pub const SENTINEL_INFINITE: f64 = f64::INFINITY;

/// Relative tolerance of the low-order resonance screen.
pub const RESONANCE_RTOL: f64 = 1e-9;

/// One saddle. Eigenvalues are stored as positive magnitudes; the sign is
/// implied by which list they live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSpec {
    pub label: String,
    /// Strictly descending: λ₁ > … > λ_u > 0.
    pub expanding: Vec<f64>,
    /// Strictly ascending magnitudes: λ_{u+1} < … < λ_n.
    pub contracting: Vec<f64>,
}

impl EquilibriumSpec {
    pub fn new(label: impl Into<String>, expanding: Vec<f64>, contracting: Vec<f64>) -> Self {
        EquilibriumSpec {
            label: label.into(),
            expanding,
            contracting,
        }
    }

    /// Morse index u.
    pub fn unstable_dim(&self) -> usize {
        self.expanding.len()
    }

    pub fn stable_dim(&self) -> usize {
        self.contracting.len()
    }

    pub fn dim(&self) -> usize {
        self.expanding.len() + self.contracting.len()
    }

    /// Eigenvalues with their signs restored, expanding first.
    pub fn signed_spectrum(&self) -> Vec<f64> {
        self.expanding
            .iter()
            .copied()
            .chain(self.contracting.iter().map(|l| -l))
            .collect()
    }

    /// Checks positivity, emptiness and strict ordering of both lists.
    /// Resonances are not screened here; see [`validate_hypotheses`].
    pub fn check_well_formed(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("{}: {}", self.label, msg)));
        if self.expanding.is_empty() {
            return fail("no expanding eigenvalues".into());
        }
        if self.contracting.is_empty() {
            return fail("no contracting eigenvalues".into());
        }
        for &l in self.expanding.iter().chain(&self.contracting) {
            if !l.is_finite() || l <= 0.0 {
                return fail(format!("eigenvalue magnitude {l} is not strictly positive"));
            }
        }
        if !self.expanding.windows(2).all(|w| w[0] > w[1]) {
            return fail("expanding eigenvalues not strictly descending".into());
        }
        if !self.contracting.windows(2).all(|w| w[0] < w[1]) {
            return fail("contracting eigenvalues not strictly ascending".into());
        }
        Ok(())
    }
}

/// α, β, μ, ρ of one saddle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// λ₁/λ₂, or [`SENTINEL_INFINITE`] when u = 1.
    pub alpha: f64,
    /// λ₂/λ₁, or 0 when u = 1.
    pub beta: f64,
    /// Saddle value λ_{u+1}/λ₁.
    pub mu: f64,
    /// Midpoint of [1, μ].
    pub rho: f64,
}

impl DerivedConstants {
    pub fn has_finite_alpha(&self) -> bool {
        self.alpha.is_finite()
    }
}

pub fn derive_constants(eq: &EquilibriumSpec) -> Result<DerivedConstants> {
    eq.check_well_formed()?;
    let l1 = eq.expanding[0];
    let (alpha, beta) = match eq.expanding.get(1) {
        Some(&l2) => (l1 / l2, l2 / l1),
        None => (SENTINEL_INFINITE, 0.0),
    };
    let mu = eq.contracting[0] / l1;
    Ok(DerivedConstants {
        alpha,
        beta,
        mu,
        rho: (1.0 + mu) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub source: String,
    pub target: String,
    /// Which expanding eigenvalue the connection leaves along; 1 is the strongest.
    #[serde(rename = "index")]
    pub source_eigen_index: usize,
}

impl ConnectionSpec {
    pub fn new(source: impl Into<String>, target: impl Into<String>, index: usize) -> Self {
        ConnectionSpec {
            source: source.into(),
            target: target.into(),
            source_eigen_index: index,
        }
    }

    pub fn is_strong(&self) -> bool {
        self.source_eigen_index == 1
    }
}

/// Equilibria p₁ … p_N, labelled so that the strong unstable connection of
/// pᵢ lands on pᵢ₊₁ for i < N*, closing back to p₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub equilibria: Vec<EquilibriumSpec>,
    pub connections: Vec<ConnectionSpec>,
    pub principal_length: usize,
}

impl NetworkSpec {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.equilibria.iter().position(|e| e.label == label)
    }

    pub fn equilibrium(&self, label: &str) -> Option<&EquilibriumSpec> {
        self.equilibria.iter().find(|e| e.label == label)
    }

    /// Phase-space dimension n, taken from the first equilibrium.
    pub fn dim(&self) -> usize {
        self.equilibria.first().map_or(0, EquilibriumSpec::dim)
    }

    /// Strong connection from `source` to `target`, if declared.
    pub fn strong_connection(&self, source: &str, target: &str) -> Option<&ConnectionSpec> {
        self.connections
            .iter()
            .find(|c| c.is_strong() && c.source == source && c.target == target)
    }

    /// The principal equilibria p₁ … p_{N*} in order (no chain check).
    pub fn principal(&self) -> &[EquilibriumSpec] {
        let n = self.principal_length.min(self.equilibria.len());
        &self.equilibria[..n]
    }

    /// Stable fingerprint of the network (SHA-256 of its canonical JSON).
    pub fn fingerprint(&self) -> String {
        crate::report::sha256_hex(&serde_json::to_vec(self).expect("network serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H1,
    H2,
    H3,
    H4,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
            Hypothesis::H4 => "H4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub hypothesis: Hypothesis,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Observations that are not violations but deserve a look, e.g. N* < N.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn violates(&self, h: Hypothesis) -> bool {
        self.violations.iter().any(|v| v.hypothesis == h)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= RESONANCE_RTOL * a.abs().max(b.abs())
}

/// Pairwise-equality and order-two-sum resonance screen on a signed spectrum.
/// Returns a description of the first resonance found.
pub fn resonance_screen(signed: &[f64]) -> Option<String> {
    let n = signed.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if rel_eq(signed[i], signed[j]) {
                return Some(format!("{} = {}", signed[i], signed[j]));
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                if i == k || j == k {
                    continue;
                }
                if rel_eq(signed[k], signed[i] + signed[j]) {
                    return Some(format!("{} = {} + {}", signed[k], signed[i], signed[j]));
                }
            }
        }
    }
    None
}

fn spectrum_violations(eq: &EquilibriumSpec, n: usize, out: &mut Vec<Violation>) {
    let mut push = |h, detail: String| {
        out.push(Violation {
            hypothesis: h,
            detail: format!("{}: {}", eq.label, detail),
        })
    };
    let mut sound = true;
    for &l in eq.expanding.iter().chain(&eq.contracting) {
        if !l.is_finite() {
            push(Hypothesis::H2, format!("non-finite eigenvalue {l}"));
            sound = false;
        } else if l == 0.0 {
            push(Hypothesis::H1, "zero eigenvalue (not hyperbolic)".into());
            sound = false;
        } else if l < 0.0 {
            push(
                Hypothesis::H2,
                format!("eigenvalue magnitude {l} has the wrong sign for its list"),
            );
            sound = false;
        }
    }
    if eq.expanding.is_empty() {
        push(Hypothesis::H2, "no expanding eigenvalue (u = 0)".into());
        sound = false;
    }
    if eq.contracting.is_empty() {
        push(Hypothesis::H2, "no contracting eigenvalue (s = 0)".into());
        sound = false;
    }
    if eq.dim() != n {
        push(
            Hypothesis::H2,
            format!("u + s = {} differs from network dimension {n}", eq.dim()),
        );
    }
    if !eq.expanding.windows(2).all(|w| w[0] > w[1]) {
        push(Hypothesis::H2, "expanding eigenvalues not strictly descending".into());
        sound = false;
    }
    if !eq.contracting.windows(2).all(|w| w[0] < w[1]) {
        push(Hypothesis::H2, "contracting eigenvalues not strictly ascending".into());
        sound = false;
    }
    if let Some(res) = resonance_screen(&eq.signed_spectrum()) {
        push(Hypothesis::H2, format!("resonant eigenvalues: {res}"));
    }
    if sound {
        let c = derive_constants(eq).expect("well-formed spectrum");
        if c.mu <= 1.0 {
            push(Hypothesis::H4, format!("saddle value mu = {} <= 1", c.mu));
        }
    }
}

/// Checks H1–H4 and reports every violation found. Never fails.
pub fn validate_hypotheses(net: &NetworkSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let mut notes = Vec::new();
    let n = net.dim();

    if net.equilibria.is_empty() {
        violations.push(Violation {
            hypothesis: Hypothesis::H1,
            detail: "network has no equilibria".into(),
        });
    }
    let mut seen = HashSet::new();
    for eq in &net.equilibria {
        if !seen.insert(eq.label.as_str()) {
            violations.push(Violation {
                hypothesis: Hypothesis::H1,
                detail: format!("duplicate equilibrium label {}", eq.label),
            });
        }
    }
    for eq in &net.equilibria {
        spectrum_violations(eq, n, &mut violations);
    }

    for c in &net.connections {
        match (net.equilibrium(&c.source), net.index_of(&c.target)) {
            (Some(src), Some(_)) => {
                if c.source_eigen_index == 0 || c.source_eigen_index > src.unstable_dim() {
                    violations.push(Violation {
                        hypothesis: Hypothesis::H3,
                        detail: format!(
                            "connection {} -> {} leaves along eigenvalue {} but u = {}",
                            c.source,
                            c.target,
                            c.source_eigen_index,
                            src.unstable_dim()
                        ),
                    });
                }
            }
            _ => violations.push(Violation {
                hypothesis: Hypothesis::H3,
                detail: format!("connection {} -> {} names an unknown equilibrium", c.source, c.target),
            }),
        }
    }

    let n_star = net.principal_length;
    if n_star == 0 || n_star > net.equilibria.len() {
        violations.push(Violation {
            hypothesis: Hypothesis::H3,
            detail: format!(
                "principal length {n_star} outside 1..={}",
                net.equilibria.len()
            ),
        });
    } else {
        if let Err(Error::Hypothesis { detail, .. }) = principal_sequence_unchecked(net) {
            violations.push(Violation {
                hypothesis: Hypothesis::H3,
                detail,
            });
        }
        if n_star < net.equilibria.len() {
            notes.push(format!(
                "principal cycle closes at N* = {n_star} < N = {}; equilibria beyond p{n_star} are outside the principal cycle",
                net.equilibria.len()
            ));
        }
    }

    ValidationReport {
        passed: violations.is_empty(),
        violations,
        notes,
    }
}

fn principal_sequence_unchecked(net: &NetworkSpec) -> Result<Vec<String>> {
    let n_star = net.principal_length;
    if n_star == 0 || n_star > net.equilibria.len() {
        return Err(Error::Hypothesis {
            hypothesis: Hypothesis::H3,
            detail: format!("principal length {n_star} is not usable"),
        });
    }
    let principal = &net.equilibria[..n_star];
    for (i, eq) in principal.iter().enumerate() {
        let next = &principal[(i + 1) % n_star];
        if net.strong_connection(&eq.label, &next.label).is_none() {
            return Err(Error::Hypothesis {
                hypothesis: Hypothesis::H3,
                detail: format!(
                    "no strong unstable connection {} -> {} closing the principal cycle",
                    eq.label, next.label
                ),
            });
        }
    }
    Ok(principal.iter().map(|e| e.label.clone()).collect())
}

/// Labels p₁ … p_{N*} of the principal heteroclinic sequence, following only
/// strong (index 1) connections. Weak connections are ignored.
pub fn principal_sequence(net: &NetworkSpec) -> Result<Vec<String>> {
    principal_sequence_unchecked(net)
}
