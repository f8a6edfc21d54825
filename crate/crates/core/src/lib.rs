//! Numerical laboratory for attracting heteroclinic networks with real
//! eigenvalues.
//!
//! * [`network`]: abstract networks, derived constants, hypothesis checks.
//! * [`local`]: flight times, local and transition maps, the return map,
//!   wedges and neighbourhoods on the cross sections.
//! * [`stability`]: Monte Carlo wedge measures, δ-scaling, return-map
//!   iteration, lemma checks and the aggregated verdict.
//! * [`glv`]: generalized Lotka–Volterra realizations, trajectories,
//!   itineraries and channel experiments.
//! * [`config`] and [`report`]: file formats and reproducible artifacts.
//! * [`runs`]: one entry point per command-line command.

pub mod config;
pub mod error;
pub mod glv;
pub mod local;
pub mod network;
pub mod ode;
pub mod report;
pub mod runs;
pub mod sampling;
pub mod stability;

pub use error::{Error, Result};
