//! Modeling toolchain for DarTwin twin-system models.
//!
//! The crate covers the full loop around a `.dartwin` model file:
//!
//! - [`model`] — the typed in-memory representation and structural queries
//! - [`parser`] / [`serialize`] — textual form in and canonical text out
//! - [`validator`] — well-formedness diagnostics and actuation-conflict analysis
//! - [`transform`] — the architectural transformations as checked rewrites,
//!   plus structural diff and isomorphism checking
//! - [`render`] — DOT diagram output with change highlighting
//! - [`sim`] — deterministic discrete-time execution against a simple thermal
//!   plant, with goal evaluation over the recorded trace

pub mod constraint;
pub mod model;
pub mod parser;
pub mod render;
pub mod serialize;
pub mod sim;
pub mod transform;
pub mod validator;

pub use model::Model;
pub use parser::{parse_model, parse_model_named, ParseDiagnostic};
pub use serialize::serialize_model;
