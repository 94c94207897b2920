//! Newton machinery for the ML, equilevel (LEA) and marginalized (LMA)
//! stationarity systems.

mod attractors;
mod solve;
mod state;
mod system;

pub use attractors::{attractor_f, attractor_g, attractor_h, attractor_h_frozen};
pub use solve::{
    damped_newton, newton_solve, solve_equilibrated, NewtonOptions, NewtonOutcome, StepSign,
    SystemSpec,
};
pub use state::SupportState;
pub use system::{apply_step, assemble, assemble_frozen, NewtonSystem, SystemKind};
