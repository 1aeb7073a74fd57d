//! Synthetic graphs shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tkgx::params::{ModelDims, ParameterSet};
use tkgx::store::{Dataset, Quadruple, Split, SplitData, Timestamp, Vocab, Vocabulary};

pub fn vocabulary(num_entities: usize, predicates: &[&str]) -> Vocabulary {
    let mut v = Vocabulary::new();
    v.entities = Vocab::from_names((0..num_entities).map(|i| format!("e{i}")));
    v.predicates = Vocab::from_names(predicates.iter().copied());
    v
}

/// Builds augmented splits from base quadruples over named entities `e0..`.
pub fn split_data(
    num_entities: usize,
    predicates: &[&str],
    train: Vec<Quadruple>,
    valid: Vec<Quadruple>,
    test: Vec<Quadruple>,
) -> SplitData {
    let v = vocabulary(num_entities, predicates);
    SplitData::from_raw(
        Dataset::new(train, v.clone(), Split::Train),
        Dataset::new(valid, v.clone(), Split::Valid),
        Dataset::new(test, v, Split::Test),
    )
}

/// Rule-governed graph: `(s, cause, o, t)` is always followed by
/// `(s, effect, o, t + 1)`, mixed with random `noise` facts.
pub struct RuleKg {
    pub data: SplitData,
    /// Held-out `(s, effect, o, t + 1)` facts in the test period.
    pub test_queries: Vec<Quadruple>,
    pub valid_queries: Vec<Quadruple>,
}

pub const CAUSE: u32 = 0;
pub const EFFECT: u32 = 1;

pub fn rule_kg(num_entities: usize, horizon: Timestamp, per_step: usize, seed: u64) -> RuleKg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quads = Vec::new();
    let ids: Vec<u32> = (0..num_entities as u32).collect();
    for t in 0..horizon - 1 {
        for &s in ids.choose_multiple(&mut rng, per_step) {
            let o = loop {
                let o = rng.gen_range(0..num_entities as u32);
                if o != s {
                    break o;
                }
            };
            quads.push(Quadruple::new(s, CAUSE, o, t));
            quads.push(Quadruple::new(s, EFFECT, o, t + 1));
        }
        for _ in 0..per_step {
            let a = rng.gen_range(0..num_entities as u32);
            let b = rng.gen_range(0..num_entities as u32);
            if a != b {
                quads.push(Quadruple::new(a, 2, b, t));
            }
        }
    }
    let t_valid = horizon * 7 / 10;
    let t_test = horizon * 17 / 20;
    let pick = |lo: Timestamp, hi: Timestamp| -> Vec<Quadruple> {
        quads.iter().copied().filter(|q| q.timestamp >= lo && q.timestamp < hi).collect()
    };
    let (train, valid, test) = (pick(0, t_valid), pick(t_valid, t_test), pick(t_test, horizon));
    let effect = |v: &[Quadruple]| -> Vec<Quadruple> { v.iter().copied().filter(|q| q.predicate == EFFECT).collect() };
    let valid_queries = effect(&valid);
    let test_queries = effect(&test);
    RuleKg {
        data: split_data(num_entities, &["cause", "effect", "noise"], train, valid, test),
        test_queries,
        valid_queries,
    }
}

/// Shape of the ICEWS14 benchmark: entity and predicate counts, one year of
/// daily timestamps and split sizes.
pub const ICEWS14_ENTITIES: usize = 7128;
pub const ICEWS14_PREDICATES: usize = 230;
pub const ICEWS14_SPLITS: (usize, usize, usize) = (63685, 13823, 13222);

/// Environment override for the real dataset directory.
pub fn icews14_dir() -> PathBuf {
    std::env::var_os("ICEWS14_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ICEWS14"))
}

pub fn load_icews14() -> Option<SplitData> {
    let dir = icews14_dir();
    if !dir.join("train.txt").exists() {
        return None;
    }
    SplitData::load_dir(&dir).ok()
}

/// Random graph with ICEWS14's shape and a skewed (Zipf-like) entity
/// activity, split chronologically.
pub fn icews14_like(seed: u64) -> SplitData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_train, n_valid, n_test) = ICEWS14_SPLITS;
    let weights: Vec<f64> = (1..=ICEWS14_ENTITIES).map(|r| 1.0 / (r as f64).powf(0.9)).collect();
    let total: f64 = weights.iter().sum();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let draw_entity = |rng: &mut ChaCha8Rng| -> u32 {
        let u: f64 = rng.gen();
        cdf.partition_point(|&c| c < u).min(ICEWS14_ENTITIES - 1) as u32
    };
    let make = |n: usize, lo: Timestamp, hi: Timestamp, rng: &mut ChaCha8Rng| -> Vec<Quadruple> {
        let mut v: Vec<Quadruple> = (0..n)
            .map(|_| {
                let s = draw_entity(rng);
                let mut o = draw_entity(rng);
                if o == s {
                    o = (o + 1) % ICEWS14_ENTITIES as u32;
                }
                Quadruple::new(s, rng.gen_range(0..ICEWS14_PREDICATES as u32), o, rng.gen_range(lo..hi))
            })
            .collect();
        v.sort_by_key(|q| q.timestamp);
        v
    };
    let mut train = make(n_train, 0, 304, &mut rng);
    // Every entity occurs at least once, as in the benchmark vocabulary.
    for (e, q) in train.iter_mut().enumerate().take(ICEWS14_ENTITIES) {
        q.subject = e as u32;
        if q.object == q.subject {
            q.object = (q.object + 1) % ICEWS14_ENTITIES as u32;
        }
    }
    let valid = make(n_valid, 304, 334, &mut rng);
    let test = make(n_test, 334, 365, &mut rng);
    let names: Vec<String> = (0..ICEWS14_PREDICATES).map(|i| format!("p{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    split_data(ICEWS14_ENTITIES, &refs, train, valid, test)
}

pub fn dims(num_entities: usize, num_predicates: usize, d_s: usize, d_t: usize, steps: usize) -> ModelDims {
    ModelDims {
        num_entities,
        num_predicates,
        dim_static: d_s,
        dim_time: d_t,
        steps,
    }
}

pub fn params(d: ModelDims, t_max: Timestamp, seed: u64) -> ParameterSet {
    ParameterSet::init(d, t_max, seed)
}
