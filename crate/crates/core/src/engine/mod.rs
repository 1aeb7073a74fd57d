//! Query-local subgraph reasoning: expansion, relational attention, reverse
//! representation update, attention propagation and pruning.

mod aggregate;
mod graph;
pub mod primitives;
mod session;

pub use aggregate::{aggregator_registry, MeanAggregator, ScoreAggregator, SumAggregator};
pub use graph::{InferenceEdge, InferenceGraph, InferenceNode, NodeKey};
pub use session::{Forecast, Forecaster, Session, StepStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EntityId, PredicateId, Timestamp};

/// `(subject, predicate, ?, time)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub time: Timestamp,
}

impl Query {
    pub fn new(subject: EntityId, predicate: PredicateId, time: Timestamp) -> Self {
        Self {
            subject,
            predicate,
            time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Inference steps `L`.
    pub steps: usize,
    /// Edges kept per step.
    pub prune_k: usize,
    /// Self vs. neighborhood mixing ratio.
    pub gamma: f64,
    pub leaky_slope: f64,
    /// Entity score aggregator name (`sum` or `mean`).
    pub agg: String,
    pub dim_static: usize,
    pub dim_time: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            steps: 3,
            prune_k: 32,
            gamma: 0.5,
            leaky_slope: 0.01,
            agg: "sum".into(),
            dim_static: 32,
            dim_time: 16,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("model.steps must be >= 1".into()));
        }
        if self.prune_k == 0 {
            return Err(Error::Config("model.prune_k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("model.gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.leaky_slope > 0.0) {
            return Err(Error::Config("model.leaky_slope must be positive".into()));
        }
        if self.dim_static + self.dim_time == 0 {
            return Err(Error::Config("model dimensions must not both be zero".into()));
        }
        aggregator_registry().get(&self.agg).map(|_| ())
    }
}
