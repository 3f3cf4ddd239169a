//! Session service and command line for the georegion workbench.
//!
//! Sessions record a study area, a hazard, an append-only list of pipeline
//! configurations, and the runs started from them. Every run persists its
//! stage artifacts so clients can inspect each step.

pub mod api;
pub mod cli;
pub mod session;

pub use api::router;
pub use session::{SessionStore, ServiceError};
