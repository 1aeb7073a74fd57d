//! Explainable link forecasting on temporal knowledge graphs.
//!
//! A query `(subject, predicate, ?, t)` is answered by growing a query-local
//! inference graph backwards in time from `(subject, t)`, scoring edges with a
//! query-conditioned attention, propagating node attention along the edges
//! and pruning to the most relevant ones. The entity collecting the most
//! attention is the prediction; the surviving graph is its explanation.
//!
//! Swappable algorithm variants (sampling strategies, score aggregators,
//! evaluation filters and explanation exporters) are registered by name in
//! [`registry::Registry`] instances and chosen at runtime.

pub mod autodiff;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod explain;
pub mod params;
pub mod registry;
pub mod sampler;
pub mod segment;
pub mod store;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
