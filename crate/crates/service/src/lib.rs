//! Exam service around [`viva_cbt_core`]: voice login, the HTTP API, the
//! durable session log, and the command-line entry points.

pub mod api;
pub mod auth;
pub mod cli;
pub mod session_log;
