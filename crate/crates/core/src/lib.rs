//! Mean-field control of swarms modelled as continuous-time Markov chains on
//! a directed graph.
//!
//! The density `x` over vertices follows the forward equation
//! `x' = sum_e u_e B_e x`. This crate provides:
//!
//! * [`graph`]: graphs, reachability, covering walks, non-connectivity witnesses;
//! * [`dynamics`]: densities, schedules and integrators for open and closed loop;
//! * [`steering`]: exact open-loop steering between interior densities;
//! * [`feedback`]: decentralized linear laws, their positive realization and
//!   spectral certificates;
//! * [`synthesis`]: structured LMI design of decentralized gains;
//! * [`simulate`]: N-agent stochastic simulation and ensemble statistics;
//! * [`io`]: file formats;
//! * [`instances`]: seeded random graphs, densities and schedules.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod feedback;
pub mod graph;
pub mod instances;
pub mod io;
pub mod simulate;
pub mod steering;
pub mod synthesis;

pub use dynamics::{closed_loop_flow, forward_flow, ControlSchedule, Density, RateLaw, Trajectory};
pub use error::{Error, Result};
pub use feedback::{
    lemma1_law, linearization, rational_realization, spectral_certificate, FeedbackLaw, LawKind,
    SpectralCertificate,
};
pub use graph::{EdgeId, Graph, Vertex, Walk, Witness};
pub use simulate::{ensemble, simulate_agents, AgentTrace, Driver, EnsembleStats, SimConfig};
pub use steering::{global_steer, local_steer, GlobalSteering, SteeringPlan};
pub use synthesis::{synthesize, synthesize_positive, GainCertificate, StructureSpec};
