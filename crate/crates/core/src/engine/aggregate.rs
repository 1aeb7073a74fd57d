use std::sync::{Arc, OnceLock};

use crate::registry::{Named, Registry};

/// Combines the attention of all nodes that share an entity.
pub trait ScoreAggregator: Named + Send + Sync {
    /// Weight applied to the per-entity sum, given the number of nodes.
    fn sum_weight(&self, count: usize) -> f64;

    fn aggregate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.sum_weight(values.len())
    }
}

pub struct SumAggregator;

impl Named for SumAggregator {
    fn name(&self) -> &'static str {
        "sum"
    }
}

impl ScoreAggregator for SumAggregator {
    fn sum_weight(&self, _: usize) -> f64 {
        1.0
    }
}

pub struct MeanAggregator;

impl Named for MeanAggregator {
    fn name(&self) -> &'static str {
        "mean"
    }
}

impl ScoreAggregator for MeanAggregator {
    fn sum_weight(&self, count: usize) -> f64 {
        if count == 0 {
            0.0
        } else {
            1.0 / count as f64
        }
    }
}

pub fn aggregator_registry() -> &'static Registry<dyn ScoreAggregator> {
    static REG: OnceLock<Registry<dyn ScoreAggregator>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn ScoreAggregator> = Registry::new("score aggregator");
        r.register(Arc::new(SumAggregator)).register(Arc::new(MeanAggregator));
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_and_mean() {
        assert_eq!(SumAggregator.aggregate(&[0.4]), 0.4);
        assert_eq!(MeanAggregator.aggregate(&[0.4]), 0.4);
        assert!((SumAggregator.aggregate(&[0.2, 0.3]) - 0.5).abs() < 1e-15);
        assert!((MeanAggregator.aggregate(&[0.2, 0.3]) - 0.25).abs() < 1e-15);
        assert_eq!(MeanAggregator.aggregate(&[]), 0.0);
    }
}
