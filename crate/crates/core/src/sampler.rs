//! Prior-edge sampling strategies.
//!
//! Weighted strategies draw without replacement with renormalization after
//! every draw. This is realized with Gumbel-top-k keys, which yields exactly
//! the same distribution over ordered selections as sequential draws while
//! costing one pass over the candidate list.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::store::{AdjEntry, EntityId, Timestamp};

pub type SamplerRng = ChaCha8Rng;

/// Independent stream for one query; batch order never affects it.
pub fn query_rng(seed: u64, stream: u64) -> SamplerRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub trait SamplingStrategy: Named + Send + Sync {
    /// Picks `min(budget, edges.len())` distinct edges of a node at `node_time`.
    /// The result keeps the input (ascending time) order.
    fn sample(&self, edges: &[AdjEntry], node_time: Timestamp, budget: usize, rng: &mut SamplerRng) -> Vec<AdjEntry>;
}

/// Strategies defined by a positive weight per edge.
pub trait EdgeWeighting: Named + Send + Sync {
    /// Natural log of the unnormalized selection weight of each edge.
    fn log_weights(&self, edges: &[AdjEntry], node_time: Timestamp) -> Vec<f64>;

    /// Single-draw selection probabilities.
    fn probabilities(&self, edges: &[AdjEntry], node_time: Timestamp) -> Vec<f64> {
        let lw = self.log_weights(edges, node_time);
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }
}

impl<T: EdgeWeighting> SamplingStrategy for T {
    fn sample(&self, edges: &[AdjEntry], node_time: Timestamp, budget: usize, rng: &mut SamplerRng) -> Vec<AdjEntry> {
        if edges.len() <= budget {
            return edges.to_vec();
        }
        let lw = self.log_weights(edges, node_time);
        let mut keyed: Vec<(f64, usize)> = lw
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                (l - (-u.ln()).ln(), i)
            })
            .collect();
        keyed.select_nth_unstable_by(budget - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = keyed[..budget].iter().map(|&(_, i)| i).collect();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| edges[i]).collect()
    }
}

/// Every prior edge equally likely.
pub struct Uniform;

impl Named for Uniform {
    fn name(&self) -> &'static str {
        "uniform"
    }
}

impl EdgeWeighting for Uniform {
    fn log_weights(&self, edges: &[AdjEntry], _: Timestamp) -> Vec<f64> {
        vec![0.0; edges.len()]
    }
}

/// `P(t') ∝ exp(t' - t)`: recent events dominate.
pub struct ExpWeighted;

impl Named for ExpWeighted {
    fn name(&self) -> &'static str {
        "exp-weighted"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["exp", "exponential"]
    }
}

impl EdgeWeighting for ExpWeighted {
    fn log_weights(&self, edges: &[AdjEntry], node_time: Timestamp) -> Vec<f64> {
        edges.iter().map(|a| (a.timestamp - node_time) as f64).collect()
    }
}

/// `w(t') = 1 + (t' - t_min)` over the candidate list, normalized.
pub struct LinearWeighted;

impl Named for LinearWeighted {
    fn name(&self) -> &'static str {
        "linear-weighted"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["linear"]
    }
}

impl EdgeWeighting for LinearWeighted {
    fn log_weights(&self, edges: &[AdjEntry], _: Timestamp) -> Vec<f64> {
        let t_min = edges.iter().map(|a| a.timestamp).min().unwrap_or(0);
        edges
            .iter()
            .map(|a| (1.0 + (a.timestamp - t_min) as f64).ln())
            .collect()
    }
}

/// Deterministic: the `budget` most recent edges, ties by (predicate, neighbor).
pub struct LastN;

impl Named for LastN {
    fn name(&self) -> &'static str {
        "last-n"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["last"]
    }
}

impl SamplingStrategy for LastN {
    fn sample(&self, edges: &[AdjEntry], _: Timestamp, budget: usize, _: &mut SamplerRng) -> Vec<AdjEntry> {
        if edges.len() <= budget {
            return edges.to_vec();
        }
        let mut idx: Vec<usize> = (0..edges.len()).collect();
        idx.sort_by(|&a, &b| {
            let (x, y) = (&edges[a], &edges[b]);
            y.timestamp
                .cmp(&x.timestamp)
                .then(x.predicate.cmp(&y.predicate))
                .then(x.neighbor.cmp(&y.neighbor))
                .then(a.cmp(&b))
        });
        idx.truncate(budget);
        idx.sort_unstable();
        idx.into_iter().map(|i| edges[i]).collect()
    }
}

pub fn sampler_registry() -> &'static Registry<dyn SamplingStrategy> {
    static REG: OnceLock<Registry<dyn SamplingStrategy>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn SamplingStrategy> = Registry::new("sampling strategy");
        r.register(Arc::new(Uniform))
            .register(Arc::new(ExpWeighted))
            .register(Arc::new(LinearWeighted))
            .register(Arc::new(LastN));
        r
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            strategy: "exp-weighted".into(),
            budget: 16,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("sampling.budget must be >= 1".into()));
        }
        sampler_registry().get(&self.strategy).map(|_| ())
    }

    pub fn strategy(&self) -> Result<Arc<dyn SamplingStrategy>> {
        sampler_registry().get(&self.strategy)
    }
}

/// Samples prior edges of node `(e, node_time)` according to `cfg`.
pub fn sample_prior_edges(
    edges: &[AdjEntry],
    node_time: Timestamp,
    cfg: &SamplingConfig,
    rng: &mut SamplerRng,
) -> Result<Vec<AdjEntry>> {
    cfg.validate()?;
    Ok(cfg.strategy()?.sample(edges, node_time, cfg.budget, rng))
}

/// Distinct `(neighbor, t')` nodes among sampled edges, in first-appearance order.
pub fn collapse_to_neighbors(edges: &[AdjEntry]) -> Vec<(EntityId, Timestamp)> {
    let mut seen = std::collections::HashSet::new();
    edges
        .iter()
        .map(|a| (a.neighbor, a.timestamp))
        .filter(|k| seen.insert(*k))
        .collect()
}
