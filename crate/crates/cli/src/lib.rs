//! Collection sessions and the HTTP service behind the `rationale` binary.

pub mod service;
pub mod session;
