//! Measurement-based identification of electromechanical modes from ambient
//! PMU data and a mode-selective wide-area damping controller.
//!
//! The typical flow is [`grid`] (model and linearization) → [`sim`] (ambient
//! response and PMU emulation) → [`estimation`] (state matrix from
//! covariances) → [`modal`] (modes, participation, criticality) → [`wadc`]
//! (gain and actuator selection) → [`delay`] (robustness to communication
//! delay). [`pipeline`] wires the stages together from a scenario file.

pub mod delay;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod linalg;
pub mod modal;
pub mod pipeline;
pub mod report;
pub mod sim;
pub mod synthetic;
pub mod wadc;

pub use error::{Error, Result};
pub use estimation::{lyapunov_solve, CovarianceBlocks, EstimatedModel};
pub use grid::{GridModel, LinearModel};
pub use modal::{ModalSolution, Mode};
pub use sim::{PmuConfig, PmuDataset, Trajectory};
pub use wadc::{ControlDesign, DesignProblem, DesignSettings};
