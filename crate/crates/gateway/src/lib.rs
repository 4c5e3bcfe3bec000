//! Network front end for the conversation engine.
//!
//! Serves the JSON API and the `/ws/events` stream, drives sensor-gated
//! stations, and hosts the `ocean` command line tool.

pub mod cli;
mod clock;
mod hub;
mod routes;
mod server;
mod sessions;
mod stations;

pub use clock::Clock;
pub use hub::EventHub;
pub use routes::{router, ApiError, CatalogResponse, ForceVisual, HealthResponse, QueryRequest, SessionSnapshot};
pub use server::{AppState, Server, ServeError};
pub use sessions::{SessionSlot, Sessions};
pub use stations::{SharedMicrophone, StationHandle};
