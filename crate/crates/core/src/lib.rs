//! Hierarchical primal-dual optimal power flow for three-phase unbalanced
//! radial distribution networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`phase`] and [`network`] model the feeder and its tree algebra,
//!   [`cluster`] the subtree partition used by the hierarchy.
//! * [`feeder`] and [`trace`] handle file formats.
//! * [`powerflow`] solves the nonlinear, linearized and balanced-voltage
//!   models; the nonlinear solve stands in for the physical network.
//! * [`gradient`] evaluates voltage sensitivities.
//! * [`solver`] runs the primal-dual iteration centrally or through the
//!   regional/central controller message protocol, and computes
//!   optimality and convergence diagnostics.

pub mod cluster;
pub mod feeder;
pub mod gradient;
pub mod network;
pub mod phase;
pub mod powerflow;
pub mod solver;
pub mod trace;
