//! HTTP service, client and CLI plumbing around the experiment engine.

pub mod client;
pub mod error;
pub mod render;
pub mod routes;
pub mod service;
pub mod store;
pub mod wire;

pub use client::{Client, ClientError};
pub use error::ApiError;
pub use routes::router;
pub use service::Service;
pub use store::Store;

/// CLI exit code for an HTTP status: 3 for 400, 4 for 404, 5 for 409 and 1
/// for anything else.
pub fn exit_code(http_status: Option<u16>) -> i32 {
    match http_status {
        Some(400) => 3,
        Some(404) => 4,
        Some(409) => 5,
        _ => 1,
    }
}
