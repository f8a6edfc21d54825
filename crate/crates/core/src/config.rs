//! JSON input files: abstract networks and GLV systems.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::glv::{network_from_glv, ChannelParams, ExplicitConnection, GlvSystem, SamplingBox};
use crate::local::{MatrixField, ReturnMap, TransitionMapSpec};
use crate::network::{ConnectionSpec, EquilibriumSpec, NetworkSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// M(φ) = m + Σₖ φₖ·slopes[k], and G, all as row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionMapFile {
    pub m: Vec<Vec<f64>>,
    #[serde(default)]
    pub slopes: Vec<Vec<Vec<f64>>>,
    pub g: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema_version: u32,
    #[serde(default)]
    pub description: Option<String>,
    pub equilibria: Vec<EquilibriumSpec>,
    pub connections: Vec<ConnectionSpec>,
    /// Defaults to the number of equilibria.
    #[serde(default)]
    pub principal_length: Option<usize>,
    #[serde(default)]
    pub transition_maps: Option<Vec<TransitionMapFile>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub eps: f64,
    pub delta: f64,
    pub n: u64,
    pub t_max: f64,
    pub seed: u64,
    #[serde(default, rename = "box")]
    pub sampling_box: Option<SamplingBox>,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationFile {
    pub magnitude: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlvFile {
    pub schema_version: u32,
    #[serde(default)]
    pub description: Option<String>,
    pub dim: usize,
    pub growth: Vec<f64>,
    pub interaction: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Needed when connections cannot be inferred from the sign pattern.
    #[serde(default)]
    pub connections: Option<Vec<ExplicitConnection>>,
    pub experiment: ExperimentFile,
    #[serde(default)]
    pub perturbation: Option<PerturbationFile>,
    /// Start state for single-trajectory runs.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Set on demo configs that carry no acceptance claims.
    #[serde(default)]
    pub demo: bool,
}

impl GlvFile {
    pub fn system(&self) -> Result<GlvSystem> {
        if self.growth.len() != self.dim || self.interaction.len() != self.dim {
            return Err(Error::Config(format!(
                "dim = {} but growth has {} entries and interaction {} rows",
                self.dim,
                self.growth.len(),
                self.interaction.len()
            )));
        }
        GlvSystem::from_rows(self.growth.clone(), &self.interaction, self.labels.clone())
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        network_from_glv(&self.system()?, self.connections.as_deref())
    }

    pub fn channel_params(&self) -> ChannelParams {
        let d = ChannelParams::default();
        let e = &self.experiment;
        ChannelParams {
            eps: e.eps,
            delta: e.delta,
            n_samples: e.n,
            t_max: e.t_max,
            seed: e.seed,
            sampling_box: e.sampling_box.unwrap_or(d.sampling_box),
            rel_tol: e.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: e.abs_tol.unwrap_or(d.abs_tol),
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what} is not a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl TransitionMapFile {
    pub fn spec(&self) -> Result<TransitionMapSpec> {
        let base = matrix(&self.m, "M")?;
        let slopes = self
            .slopes
            .iter()
            .map(|s| matrix(s, "M slope"))
            .collect::<Result<Vec<_>>>()?;
        TransitionMapSpec::new(MatrixField { base, slopes }, matrix(&self.g, "G")?)
    }
}

impl NetworkFile {
    pub fn network(&self) -> NetworkSpec {
        NetworkSpec {
            equilibria: self.equilibria.clone(),
            connections: self.connections.clone(),
            principal_length: self.principal_length.unwrap_or(self.equilibria.len()),
        }
    }

    /// Return map with the configured transition maps, or the defaults.
    pub fn return_map(&self) -> Result<ReturnMap> {
        let net = self.network();
        match &self.transition_maps {
            None => ReturnMap::with_default_maps(&net),
            Some(files) => {
                let maps = files.iter().map(TransitionMapFile::spec).collect::<Result<Vec<_>>>()?;
                ReturnMap::new(&net, maps)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    Network(NetworkFile),
    Glv(GlvFile),
}

/// A parsed config together with the raw bytes it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: Config,
    pub sha256: String,
    pub resolved: Value,
}

impl LoadedConfig {
    pub fn network(&self) -> Result<NetworkSpec> {
        match &self.config {
            Config::Network(f) => Ok(f.network()),
            Config::Glv(g) => g.network(),
        }
    }

    pub fn return_map(&self) -> Result<ReturnMap> {
        match &self.config {
            Config::Network(f) => f.return_map(),
            Config::Glv(g) => ReturnMap::with_default_maps(&g.network()?),
        }
    }

    pub fn glv(&self) -> Result<&GlvFile> {
        match &self.config {
            Config::Glv(g) => Ok(g),
            Config::Network(_) => Err(Error::Config("this command needs a GLV config".into())),
        }
    }
}

/// Parses either kind of config. A file with a `growth` field is a GLV
/// system, anything else an abstract network.
pub fn parse_config(bytes: &[u8]) -> Result<LoadedConfig> {
    let value: Value = serde_json::from_slice(bytes)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("top level must be a JSON object".into()))?;
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(Error::Config(format!("unsupported schema_version {v}"))),
        None => return Err(Error::Config("missing schema_version".into())),
    }
    let config = if obj.contains_key("growth") {
        Config::Glv(serde_json::from_value(value.clone())?)
    } else {
        Config::Network(serde_json::from_value(value.clone())?)
    };
    let resolved = match &config {
        Config::Network(f) => serde_json::to_value(f)?,
        Config::Glv(g) => serde_json::to_value(g)?,
    };
    Ok(LoadedConfig {
        config,
        sha256: crate::report::sha256_hex(bytes),
        resolved,
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&bytes).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
