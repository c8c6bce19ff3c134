//! Annotation service, batch CLI and file formats on top of `agepost-core`.

pub mod cli;
pub mod eventlog;
pub mod http;
pub mod io;
pub mod service;
