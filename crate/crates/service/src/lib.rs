//! Review service: prediction, open and blind review sessions, consensus
//! reports and threshold refinement over an append-only event log.

pub mod config;
pub mod error;
pub mod events;
pub mod http;
pub mod service;
pub mod state;
pub mod views;

pub use config::{serve, ServiceConfig};
pub use error::{ErrorBody, ServiceError};
pub use events::{Event, EventLog, EventRecord};
pub use service::{CreateSession, Report, ReviewService, ServiceContext, REFINE_CRITERION};
pub use state::ServiceState;
pub use views::{blind_view_schema, BlindView, ItemView, OpenView};
