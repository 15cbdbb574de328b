//! Virtual scanning-probe microscope and autonomous-experiment engine.
//!
//! The crate is organized around the acquire → model → decide → act loop:
//!
//! * [`sample`] synthesizes ground-truth domain patterns and per-site
//!   hysteresis, and applies stochastic tip-induced switching.
//! * [`scope`] executes scan paths and spectroscopy against a sample with
//!   drift, noise and a simulated-time latency model.
//! * [`gp`] fits Gaussian-process surrogates; [`acquire`] turns posteriors into
//!   ranked, ordered measurement candidates.
//! * [`recon`] rebuilds full frames from sparse observations.
//! * [`agent`] holds the tabular reinforcement-learning machinery.
//! * [`feedback`] implements line-triggered domain-wall feedback.
//! * [`campaign`] orchestrates full experiments and their persistence.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod acquire;
pub mod agent;
pub mod campaign;
pub mod error;
pub mod feedback;
pub mod field;
pub mod gp;
pub mod io;
pub mod ledger;
pub mod par;
pub mod recon;
pub mod rng;
pub mod sample;
pub mod scope;

pub use error::{Error, Result};
pub use field::{Pixel, ScalarField2D};
