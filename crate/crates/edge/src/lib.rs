//! Edge daemon, client simulator and benchmark commands built on `dr_core`.

mod conn;

pub mod client;
pub mod logging;
pub mod server;

pub use client::{run_client, ClientError, ClientReport, ClientRunSpec, RunMode, Source};
pub use server::{Server, ServerConfig, ServerError, ServerHandle};
