//! Filtered ranking and MRR / Hits@k.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::engine::{Forecaster, Query};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::store::{EntityId, PredicateId, Quadruple, Timestamp};

/// Known objects per `(s, p, t)` and per `(s, p)`.
#[derive(Clone, Debug, Default)]
pub struct FactIndex {
    at_time: HashMap<(EntityId, PredicateId, Timestamp), BTreeSet<EntityId>>,
    any_time: HashMap<(EntityId, PredicateId), BTreeSet<EntityId>>,
}

impl FactIndex {
    pub fn build<'a>(quads: impl IntoIterator<Item = &'a Quadruple>) -> Self {
        let mut idx = Self::default();
        for q in quads {
            idx.at_time
                .entry((q.subject, q.predicate, q.timestamp))
                .or_default()
                .insert(q.object);
            idx.any_time.entry((q.subject, q.predicate)).or_default().insert(q.object);
        }
        idx
    }

    pub fn objects_at(&self, s: EntityId, p: PredicateId, t: Timestamp) -> Option<&BTreeSet<EntityId>> {
        self.at_time.get(&(s, p, t))
    }

    pub fn objects_any_time(&self, s: EntityId, p: PredicateId) -> Option<&BTreeSet<EntityId>> {
        self.any_time.get(&(s, p))
    }
}

/// Which alternative answers are removed before ranking.
pub trait FilterScheme: Named + Send + Sync {
    /// Entities to exclude for `query`; the answer itself is never excluded.
    fn filter_set(&self, facts: &FactIndex, query: &Query) -> BTreeSet<EntityId>;
}

pub struct RawFilter;

impl Named for RawFilter {
    fn name(&self) -> &'static str {
        "raw"
    }
}

impl FilterScheme for RawFilter {
    fn filter_set(&self, _: &FactIndex, _: &Query) -> BTreeSet<EntityId> {
        BTreeSet::new()
    }
}

/// Objects seen with `(s, p)` at any time.
pub struct StaticFilter;

impl Named for StaticFilter {
    fn name(&self) -> &'static str {
        "static"
    }
}

impl FilterScheme for StaticFilter {
    fn filter_set(&self, facts: &FactIndex, q: &Query) -> BTreeSet<EntityId> {
        facts.objects_any_time(q.subject, q.predicate).cloned().unwrap_or_default()
    }
}

/// Objects seen with `(s, p)` at the query timestamp only.
pub struct TimeAwareFilter;

impl Named for TimeAwareFilter {
    fn name(&self) -> &'static str {
        "time-aware"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["time_aware", "timeaware"]
    }
}

impl FilterScheme for TimeAwareFilter {
    fn filter_set(&self, facts: &FactIndex, q: &Query) -> BTreeSet<EntityId> {
        facts.objects_at(q.subject, q.predicate, q.time).cloned().unwrap_or_default()
    }
}

pub fn filter_registry() -> &'static Registry<dyn FilterScheme> {
    static REG: OnceLock<Registry<dyn FilterScheme>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn FilterScheme> = Registry::new("filter");
        r.register(Arc::new(RawFilter))
            .register(Arc::new(StaticFilter))
            .register(Arc::new(TimeAwareFilter));
        r
    })
}

/// Rank of `answer` among `num_entities` entities. Entities missing from
/// `scores` score 0; an answer missing from `scores` gets rank `num_entities`.
/// Ties go to the smaller entity id.
pub fn rank_answer(
    scores: &HashMap<EntityId, f64>,
    answer: EntityId,
    filtered: &BTreeSet<EntityId>,
    num_entities: usize,
) -> usize {
    let Some(&s) = scores.get(&answer) else {
        return num_entities.max(1);
    };
    let beats = |e: EntityId, v: f64| v > s || (v == s && e < answer);
    let mut rank = 1 + scores
        .iter()
        .filter(|&(&e, &v)| e != answer && !filtered.contains(&e) && beats(e, v))
        .count();
    if s <= 0.0 {
        // Entities outside the graph tie at zero.
        let absent_smaller = (0..answer).filter(|e| !scores.contains_key(e) && !filtered.contains(e)).count();
        rank += absent_smaller;
    }
    rank.min(num_entities.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub answer: EntityId,
    pub time: Timestamp,
    pub rank: usize,
    pub filter: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    /// Hits@k keyed by k.
    pub hits: BTreeMap<usize, f64>,
    pub count: usize,
}

pub fn metrics(ranks: &[usize], ks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    Ok(Metrics {
        mrr,
        hits,
        count: ranks.len(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub filter: String,
    pub metrics: Metrics,
    #[serde(skip)]
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// `subject predicate answer time rank` lines with a header.
    pub fn ranks_tsv(&self) -> String {
        let mut out = String::from("subject\tpredicate\tanswer\ttime\trank\n");
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.subject, r.predicate, r.answer, r.time, r.rank));
        }
        out
    }
}

/// Ranks every quadruple's object. Pass reciprocal-augmented quadruples to
/// cover both query directions.
pub fn evaluate(
    fc: &Forecaster<'_>,
    quads: &[Quadruple],
    facts: &FactIndex,
    filter: &dyn FilterScheme,
    ks: &[usize],
) -> Result<EvalReport> {
    let queries: Vec<Query> = quads.iter().map(|q| Query::new(q.subject, q.predicate, q.timestamp)).collect();
    let num_entities = fc.params.dims.num_entities;
    let forecasts = fc.forecast_many(&queries);
    let mut records = Vec::with_capacity(quads.len());
    for (q, f) in quads.iter().zip(forecasts) {
        let f = f?;
        let query = f.query;
        let mut filtered = filter.filter_set(facts, &query);
        filtered.remove(&q.object);
        records.push(EvalRecord {
            subject: q.subject,
            predicate: q.predicate,
            answer: q.object,
            time: q.timestamp,
            rank: rank_answer(&f.scores(), q.object, &filtered, num_entities),
            filter: filter.name().to_string(),
        });
    }
    let ranks: Vec<usize> = records.iter().map(|r| r.rank).collect();
    Ok(EvalReport {
        filter: filter.name().to_string(),
        metrics: metrics(&ranks, ks)?,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(EntityId, f64)]) -> HashMap<EntityId, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn unique_max_is_rank_one() {
        let s = scores(&[(0, 0.2), (1, 0.7), (2, 0.1)]);
        assert_eq!(rank_answer(&s, 1, &BTreeSet::new(), 10), 1);
        assert_eq!(rank_answer(&s, 2, &BTreeSet::new(), 10), 3);
    }

    #[test]
    fn absent_answer_gets_last_rank() {
        let s = scores(&[(0, 1.0)]);
        assert_eq!(rank_answer(&s, 5, &BTreeSet::new(), 7128), 7128);
    }

    #[test]
    fn tie_and_filter_rules() {
        // A=0, B=1, C=2
        let s = scores(&[(0, 0.5), (1, 0.5), (2, 0.1)]);
        assert_eq!(rank_answer(&s, 1, &BTreeSet::new(), 3), 2);
        assert_eq!(rank_answer(&s, 1, &BTreeSet::from([0]), 3), 1);
        assert_eq!(rank_answer(&s, 0, &BTreeSet::new(), 3), 1);
    }

    #[test]
    fn zero_score_answer_ties_with_absent_entities() {
        let s = scores(&[(1, 1.0), (4, 0.0)]);
        // entity 1 beats; 0, 2, 3 are absent and tie at zero with smaller ids
        assert_eq!(rank_answer(&s, 4, &BTreeSet::new(), 6), 5);
        assert_eq!(rank_answer(&s, 4, &BTreeSet::from([2]), 6), 4);
    }

    #[test]
    fn metric_arithmetic() {
        let m = metrics(&[1, 2, 4], &[1, 3, 10]).unwrap();
        assert!((m.mrr - 1.75 / 3.0).abs() < 1e-12);
        assert!((m.hits[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.hits[&3] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.hits[&10], 1.0);
        assert!(matches!(metrics(&[], &[1]), Err(Error::EmptyRecords)));
        let all_last = metrics(&[50; 4], &[10]).unwrap();
        assert_eq!(all_last.hits[&10], 0.0);
    }

    #[test]
    fn registry_names() {
        assert_eq!(filter_registry().names(), vec!["raw", "static", "time-aware"]);
        assert!(filter_registry().get("time_aware").is_ok());
    }
}
