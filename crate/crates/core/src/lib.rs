//! Online scaled gradient methods: stepsizes learned by online learning on
//! ratio or hypergradient feedback, with monitors for their guarantees.

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod feedback;
pub mod landscape;
pub mod learners;
pub mod linalg;
pub mod problems;
pub mod solver;
pub mod stepsize;
pub mod trace;
pub mod verify;

pub use error::{OsgmError, Result};
