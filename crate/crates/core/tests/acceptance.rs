//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria that need the real ICEWS14 files (set `ICEWS14_DIR`, default
//! `data/ICEWS14`) report FAIL with the reason when the files are absent and
//! do not fail the run; the long full-scale run (criterion 10) additionally
//! needs `TKGX_FULL_REPRO=1`.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tkgx::bench;
use tkgx::engine::{Forecaster, Hyperparams, Query};
use tkgx::eval::{evaluate, metrics, rank_answer, FactIndex, FilterScheme, StaticFilter, TimeAwareFilter};
use tkgx::explain::verify_graph;
use tkgx::params::ParameterSet;
use tkgx::sampler::SamplingConfig;
use tkgx::segment::{segment_argmax, segment_softmax, segment_sum, SegmentedVector};
use tkgx::store::{write_quadruples, EntityId, Quadruple, SplitData};
use tkgx::trainer::{fit, query_gradients, TrainingConfig, TrainingData, LOSS_EPS};

struct Outcome {
    pass: bool,
    detail: String,
    /// False when the criterion could not run here (missing dataset or an
    /// explicitly best-effort run); such failures are reported, not fatal.
    binding: bool,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            binding: true,
        }
    }

    fn unavailable(detail: String) -> Self {
        Self {
            pass: false,
            detail,
            binding: false,
        }
    }
}

fn ingestion() -> Outcome {
    let dir = common::icews14_dir();
    let (n_train, n_valid, n_test) = common::ICEWS14_SPLITS;
    let expect = (n_train, n_valid, n_test, common::ICEWS14_ENTITIES, common::ICEWS14_PREDICATES, 2 * common::ICEWS14_PREDICATES);
    if dir.join("train.txt").exists() {
        let start = Instant::now();
        let d = match SplitData::load_dir(&dir) {
            Ok(d) => d,
            Err(e) => return Outcome::check(false, format!("loading {} failed: {e}", dir.display())),
        };
        let secs = start.elapsed().as_secs_f64();
        let s = d.stats();
        let got = (s.train, s.valid, s.test, s.entities, s.base_predicates, s.predicates);
        return Outcome::check(
            got == expect && secs < 10.0,
            format!("counts {got:?} (expected {expect:?}), {secs:.2}s"),
        );
    }
    // Exercise the same path on a stand-in of identical shape so the
    // runtime is still measured.
    let synth = common::icews14_like(3);
    let tmp = tempfile::tempdir().expect("tempdir");
    for (name, ds) in [("train.txt", &synth.train), ("valid.txt", &synth.valid), ("test.txt", &synth.test)] {
        let base = &ds.quadruples[..ds.len() / 2];
        write_quadruples(&tmp.path().join(name), base, synth.vocab()).expect("write stand-in");
    }
    let start = Instant::now();
    let loaded = SplitData::load_dir(tmp.path()).expect("load stand-in");
    let secs = start.elapsed().as_secs_f64();
    let s = loaded.stats();
    Outcome::unavailable(format!(
        "ICEWS14 not found at {} (set ICEWS14_DIR); same-shape stand-in ingested as ({}, {}, {}, {} entities, {} -> {} predicates) in {secs:.2}s",
        dir.display(),
        s.train,
        s.valid,
        s.test,
        s.entities,
        s.base_predicates,
        s.predicates
    ))
}

fn segment_kernels() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_softmax = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let len = rng.gen_range(0..=200);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let s: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let sv = SegmentedVector::new(&x, &s).expect("aligned");
        let sum = segment_sum(sv, n).expect("sum");
        let naive_sum = bench::naive::sum(&x, &s, n);
        if sum.iter().zip(&naive_sum).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Outcome::check(false, "segment_sum differs from the per-segment loop".into());
        }
        if segment_argmax(sv, n).expect("argmax") != bench::naive::argmax(&x, &s, n) {
            return Outcome::check(false, "segment_argmax differs from the per-segment loop".into());
        }
        let soft = segment_softmax(sv, n).expect("softmax");
        for (a, b) in soft.iter().zip(bench::naive::softmax(&x, &s, n)) {
            worst_softmax = worst_softmax.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    let example = segment_sum(SegmentedVector::new(&[3.0, 1.0, 5.0], &[0, 0, 1]).expect("aligned"), 2).expect("sum");
    let example_ok = example.iter().map(|v| v.to_bits()).eq([4.0f64, 5.0].iter().map(|v| v.to_bits()));
    let report = bench::run(100_000, 1_000, 2, 0).expect("bench");
    let speedup = report.min_speedup();
    Outcome::check(
        worst_softmax <= 1e-12 && example_ok && speedup >= 10.0,
        format!(
            "1000 instances exact (softmax max rel err {worst_softmax:.1e}); worked example {example:?}; min speedup {speedup:.1}x at d=1e5"
        ),
    )
}

/// Random KG over five entities with the query at the first unused time.
fn gradient_toy(rng: &mut ChaCha8Rng) -> (SplitData, Query) {
    let facts: Vec<Quadruple> = (0..8)
        .map(|_| {
            let s = rng.gen_range(0..5);
            let o = (s + rng.gen_range(1..5)) % 5;
            Quadruple::new(s, rng.gen_range(0..2), o, rng.gen_range(0..5))
        })
        .collect();
    let subject = facts[0].subject;
    let data = common::split_data(5, &["p", "q"], facts, Vec::new(), Vec::new());
    (data, Query::new(subject, 0, 6))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hyper = Hyperparams {
        steps: 2,
        prune_k: 64,
        dim_static: 3,
        dim_time: 2,
        ..Hyperparams::default()
    };
    let sampling = SamplingConfig {
        budget: 4,
        ..SamplingConfig::default()
    };
    let mut worst = 0.0f64;
    let mut toys = 0;
    let mut checked = 0usize;
    let mut retries = 0usize;
    while toys < 20 {
        let (data, probe) = gradient_toy(&mut rng);
        let adj = data.adjacency();
        let dims = common::dims(5, data.num_predicates(), 3, 2, 2);
        let params = common::params(dims, 5, rng.gen());
        let fc = Forecaster::new(&params, &hyper, &sampling, &adj);
        let f = fc.forecast(probe, 0).expect("forecast");
        if f.ranked.len() < 2 || f.graph.num_nodes() < 3 {
            continue;
        }
        toys += 1;
        let answer = f.ranked[1].0;
        let quad = Quadruple::new(probe.subject, probe.predicate, answer, probe.time);
        let (_, grads) = query_gradients(&fc, &quad, 0, false).expect("grad").expect("answer in graph");
        let loss_at = |p: &ParameterSet| -> f64 {
            let fc = Forecaster::new(p, &hyper, &sampling, &adj);
            let mut s = fc.session(Query::new(quad.subject, quad.predicate, quad.timestamp), 0).expect("session");
            s.run().expect("run");
            let l = s.loss(answer, LOSS_EPS, false).expect("loss").expect("present");
            s.tape().value(l).scalar()
        };
        let mut p = params.clone();
        for id in params.ids().collect::<Vec<_>>() {
            let (rows, cols) = params.get(id).shape();
            let analytic = grads.dense(id, rows, cols);
            for k in 0..rows * cols {
                let orig = p.get(id).data[k];
                let f0 = loss_at(&p);
                let mut numeric = 0.0;
                // A step that straddles a LeakyReLU kink shows up as
                // disagreeing one-sided differences; shrink it.
                for h in [1e-5, 1e-7] {
                    p.get_mut(id).data[k] = orig + h;
                    let up = loss_at(&p);
                    p.get_mut(id).data[k] = orig - h;
                    let down = loss_at(&p);
                    p.get_mut(id).data[k] = orig;
                    numeric = (up - down) / (2.0 * h);
                    let (fwd, bwd) = ((up - f0) / h, (f0 - down) / h);
                    if (fwd - bwd).abs() <= 1e-3 * fwd.abs().max(bwd.abs()) + 1e-9 {
                        break;
                    }
                    retries += 1;
                }
                let a = analytic.data[k];
                let scale = a.abs().max(numeric.abs());
                if scale > 1e-6 {
                    worst = worst.max((a - numeric).abs() / scale);
                    checked += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::check(
        worst < 1e-3 && secs < 120.0,
        format!("{toys} toys, {checked} entries ({retries} kink retries), max relative error {worst:.2e}, {secs:.1}s"),
    )
}

struct FuzzSummary {
    queries: usize,
    causality_violations: usize,
    max_partition_err: f64,
    max_conservation_err: f64,
    negative_attention: usize,
    mass_created_by_pruning: usize,
    source: String,
    secs: f64,
}

fn fuzz() -> FuzzSummary {
    let start = Instant::now();
    let (data, source) = match common::load_icews14() {
        Some(d) => (d, "ICEWS14".to_string()),
        None => (common::icews14_like(11), "ICEWS14-shaped stand-in (dataset not found)".to_string()),
    };
    let adj = data.adjacency();
    let hyper = Hyperparams {
        dim_static: 16,
        dim_time: 8,
        ..Hyperparams::default()
    };
    let sampling = SamplingConfig::default();
    let dims = common::dims(data.num_entities(), data.num_predicates(), 16, 8, hyper.steps);
    let params = common::params(dims, data.train.max_timestamp().unwrap_or(1), 17);
    let fc = Forecaster::new(&params, &hyper, &sampling, &adj);
    let all: Vec<&Quadruple> = data.all_quadruples().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let queries: Vec<Query> = (0..10_000)
        .map(|_| {
            let q = all.choose(&mut rng).expect("non-empty");
            Query::new(q.subject, q.predicate, q.timestamp)
        })
        .collect();
    let mut s = FuzzSummary {
        queries: 0,
        causality_violations: 0,
        max_partition_err: 0.0,
        max_conservation_err: 0.0,
        negative_attention: 0,
        mass_created_by_pruning: 0,
        source,
        secs: 0.0,
    };
    for chunk in queries.chunks(500) {
        for f in fc.forecast_many(chunk) {
            let f = f.expect("forecast");
            s.queries += 1;
            s.causality_violations += verify_graph(&f.graph, &adj).len();
            let g = &f.graph;
            for e in g.edges() {
                let (from, to) = (g.node(e.from), g.node(e.to));
                if to.timestamp >= from.timestamp || from.timestamp > g.query.time {
                    s.causality_violations += 1;
                }
            }
            for st in &f.stats {
                s.max_partition_err = s.max_partition_err.max(st.partition_error);
                let err = (st.attention_before_prune - st.redistributed_mass - st.retained_mass).abs();
                s.max_conservation_err = s.max_conservation_err.max(err);
            }
            s.negative_attention += g.nodes().filter(|(_, n)| n.attention < 0.0).count();
            if let Some(last) = f.stats.last() {
                let after: f64 = g.nodes().map(|(_, n)| n.attention).sum();
                if after > last.attention_before_prune + 1e-9 {
                    s.mass_created_by_pruning += 1;
                }
            }
        }
    }
    s.secs = start.elapsed().as_secs_f64();
    s
}

fn causality(s: &FuzzSummary) -> Outcome {
    Outcome::check(
        s.queries == 10_000 && s.causality_violations == 0,
        format!(
            "{} queries on {}: {} violations, {:.1}s",
            s.queries, s.source, s.causality_violations, s.secs
        ),
    )
}

fn conservation(s: &FuzzSummary) -> Outcome {
    Outcome::check(
        s.max_partition_err <= 1e-9
            && s.max_conservation_err <= 1e-9
            && s.negative_attention == 0
            && s.mass_created_by_pruning == 0,
        format!(
            "max |Σα−1| {:.1e}, max conservation error {:.1e}, {} negative attentions, {} graphs gaining mass on pruning ({})",
            s.max_partition_err, s.max_conservation_err, s.negative_attention, s.mass_created_by_pruning, s.source
        ),
    )
}

/// Query 0 at t=10 with prior neighbors 1, 2, 3; node 1 has 4, 5; node 2
/// has 7, 8; node 3 has 6.
fn reach_topology() -> SplitData {
    let facts = vec![
        Quadruple::new(0, 0, 1, 8),
        Quadruple::new(0, 1, 2, 7),
        Quadruple::new(0, 0, 3, 6),
        Quadruple::new(1, 1, 4, 5),
        Quadruple::new(1, 0, 5, 4),
        Quadruple::new(2, 0, 7, 5),
        Quadruple::new(2, 1, 8, 4),
        Quadruple::new(3, 1, 6, 3),
    ];
    common::split_data(9, &["p", "q"], facts, Vec::new(), Vec::new())
}

fn reverse_reach() -> Outcome {
    let data = reach_topology();
    let adj = data.adjacency();
    let hyper = Hyperparams {
        steps: 2,
        prune_k: 64,
        dim_static: 4,
        dim_time: 2,
        ..Hyperparams::default()
    };
    let sampling = SamplingConfig {
        strategy: "uniform".into(),
        budget: 8,
        seed: 0,
    };
    let dims = common::dims(9, data.num_predicates(), 4, 2, 2);
    let params = common::params(dims, 10, 31);
    let query = Query::new(0, 0, 10);
    let run = |p: &ParameterSet| {
        let fc = Forecaster::new(p, &hyper, &sampling, &adj);
        let mut s = fc.session(query, 0).expect("session");
        s.run().expect("run");
        (s.hidden_of(0), s.stats().to_vec(), s.graph().num_nodes(), s.graph().num_edges())
    };
    let (base, stats, nodes, edges) = run(&params);
    let mut unchanged = Vec::new();
    for e in 4..=8u32 {
        let mut p = params.clone();
        let id = p.index().entity_static;
        for v in p.get_mut(id).row_mut(e as usize) {
            *v += 0.5;
        }
        let (h, _, _, _) = run(&p);
        let delta = h.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if delta <= 1e-12 {
            unchanged.push(e);
        }
    }
    let messages: Vec<usize> = stats.iter().map(|s| s.messages).collect();
    let per_step_edges: Vec<usize> = stats.iter().map(|s| s.edges_before_prune).collect();
    Outcome::check(
        nodes == 9 && edges == 8 && unchanged.is_empty() && messages == per_step_edges && messages == [3, 8],
        format!(
            "{nodes} nodes / {edges} edges; 2-hop perturbations leaving h²(v_q) unchanged: {unchanged:?}; messages per step {messages:?} vs edges {per_step_edges:?}"
        ),
    )
}

fn brute_force_rank(scores: &HashMap<EntityId, f64>, answer: EntityId, filtered: &BTreeSet<EntityId>, n: usize) -> usize {
    if !scores.contains_key(&answer) {
        return n;
    }
    let mut order: Vec<(f64, EntityId)> = (0..n as EntityId)
        .filter(|e| *e == answer || !filtered.contains(e))
        .map(|e| (scores.get(&e).copied().unwrap_or(0.0), e))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    1 + order.iter().position(|&(_, e)| e == answer).expect("answer listed")
}

fn filtering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 8usize;
    let base: Vec<Quadruple> = (0..50)
        .map(|_| {
            let s = rng.gen_range(0..n as u32);
            let o = (s + rng.gen_range(1..n as u32)) % n as u32;
            Quadruple::new(s, rng.gen_range(0..3), o, rng.gen_range(0..6))
        })
        .collect();
    let data = common::split_data(n, &["a", "b", "c"], base[..30].to_vec(), base[30..40].to_vec(), base[40..].to_vec());
    let facts_list: Vec<Quadruple> = data.all_quadruples().copied().collect();
    let index = FactIndex::build(&facts_list);
    let mut mismatches = 0;
    let mut queries = 0;
    for q in &facts_list {
        queries += 1;
        let query = Query::new(q.subject, q.predicate, q.timestamp);
        let brute_static: BTreeSet<EntityId> = facts_list
            .iter()
            .filter(|f| f.subject == q.subject && f.predicate == q.predicate)
            .map(|f| f.object)
            .collect();
        let brute_time: BTreeSet<EntityId> = facts_list
            .iter()
            .filter(|f| f.subject == q.subject && f.predicate == q.predicate && f.timestamp == q.timestamp)
            .map(|f| f.object)
            .collect();
        let mut scores: HashMap<EntityId, f64> = HashMap::new();
        for e in 0..n as EntityId {
            if rng.gen_bool(0.7) {
                let v = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0..4) as f64 / 4.0 };
                scores.insert(e, v);
            }
        }
        for (scheme, brute) in [(&StaticFilter as &dyn FilterScheme, &brute_static), (&TimeAwareFilter, &brute_time)] {
            let mut set = scheme.filter_set(&index, &query);
            if set != *brute {
                mismatches += 1;
            }
            set.remove(&q.object);
            let mut b = brute.clone();
            b.remove(&q.object);
            if rank_answer(&scores, q.object, &set, n) != brute_force_rank(&scores, q.object, &b, n) {
                mismatches += 1;
            }
        }
    }

    // Obama visited Germany on 2013-01-18; the test query is 2015-01-25.
    let mut vocab = tkgx::store::Vocabulary::new();
    vocab.entities = tkgx::store::Vocab::from_names(["Barack Obama", "Germany", "India"]);
    vocab.predicates = tkgx::store::Vocab::from_names(["visit"]);
    vocab.epoch = chrono::NaiveDate::from_ymd_opt(2013, 1, 1);
    let t_germany = vocab.timestamp("2013-01-18").expect("date");
    let t_query = vocab.timestamp("2015-01-25").expect("date");
    let facts = [Quadruple::new(0, 0, 1, t_germany), Quadruple::new(0, 0, 2, t_query)];
    let idx = FactIndex::build(&facts);
    let q = Query::new(0, 0, t_query);
    let static_hit = StaticFilter.filter_set(&idx, &q).contains(&1);
    let time_hit = TimeAwareFilter.filter_set(&idx, &q).contains(&1);
    Outcome::check(
        mismatches == 0 && static_hit && !time_hit,
        format!(
            "{queries} queries, {mismatches} mismatches vs brute force; Germany filtered: static={static_hit}, time-aware={time_hit}"
        ),
    )
}

fn metrics_arithmetic() -> Outcome {
    let m = metrics(&[1, 2, 4], &[1, 3, 10]).expect("metrics");
    let ok = (m.mrr - 1.75 / 3.0).abs() < 1e-12
        && (m.hits[&1] - 1.0 / 3.0).abs() < 1e-12
        && (m.hits[&3] - 2.0 / 3.0).abs() < 1e-12
        && (m.hits[&10] - 1.0).abs() < 1e-12;
    Outcome::check(
        ok,
        format!("MRR {:.4}, Hits@1 {:.4}, Hits@3 {:.4}", m.mrr, m.hits[&1], m.hits[&3]),
    )
}

/// Hits@1 of one training run on the rule graph generated from `kg_seed`.
fn learn_rule_graph(kg_seed: u64) -> (f64, Option<usize>) {
    let kg = common::rule_kg(60, 120, 4, kg_seed);
    let d = &kg.data;
    // Default architecture scaled down to a 60-entity graph.
    let hyper = Hyperparams {
        steps: 1,
        prune_k: 16,
        dim_static: 16,
        dim_time: 2,
        ..Hyperparams::default()
    };
    let sampling = SamplingConfig {
        strategy: "last-n".into(),
        budget: 16,
        seed: 0,
    };
    let cfg = TrainingConfig {
        lr: 5e-3,
        batch: 32,
        epochs: LEARN_EPOCHS,
        ..TrainingConfig::default()
    };
    let dims = common::dims(d.num_entities(), d.num_predicates(), 16, 2, 1);
    let init = common::params(dims, d.train.max_timestamp().expect("train facts"), 7);
    let adj = d.adjacency();
    let facts = FactIndex::build(d.all_quadruples());
    let data = TrainingData {
        train: &d.train.quadruples,
        valid: &kg.valid_queries,
        adj: &adj,
        facts: &facts,
    };
    let out = fit(init, &data, &hyper, &sampling, &cfg).expect("fit");
    let fc = Forecaster::new(&out.params, &hyper, &sampling, &adj);
    let report = evaluate(&fc, &kg.test_queries, &facts, &TimeAwareFilter, &[1]).expect("evaluate");
    (report.metrics.hits[&1], out.best_epoch)
}

const LEARN_EPOCHS: usize = 30;

/// Single runs swing by about 0.1 between generated graphs, so the mean over
/// a fixed set of graphs is reported.
fn learnability() -> Outcome {
    let start = Instant::now();
    let runs: Vec<(u64, f64, Option<usize>)> = (1..=4)
        .map(|seed| {
            let (h, best) = learn_rule_graph(seed);
            (seed, h, best)
        })
        .collect();
    let mean = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let per: Vec<String> = runs
        .iter()
        .map(|(s, h, b)| format!("graph {s}: {h:.3} (best epoch {})", b.map_or("-".into(), |e| e.to_string())))
        .collect();
    Outcome::check(
        mean >= 0.9 && secs < 600.0,
        format!(
            "mean Hits@1 {mean:.3} over {} rule graphs, {LEARN_EPOCHS} epochs each [{}], {secs:.1}s",
            runs.len(),
            per.join("; ")
        ),
    )
}

fn reproduction() -> Outcome {
    let Some(data) = common::load_icews14() else {
        return Outcome::unavailable(format!(
            "not run: ICEWS14 not found at {} (best-effort criterion)",
            common::icews14_dir().display()
        ));
    };
    if std::env::var_os("TKGX_FULL_REPRO").is_none() {
        return Outcome::unavailable("not run: set TKGX_FULL_REPRO=1 for the multi-hour training run".into());
    }
    let hyper = Hyperparams::default();
    let sampling = SamplingConfig::default();
    let cfg = TrainingConfig::default();
    let dims = common::dims(data.num_entities(), data.num_predicates(), hyper.dim_static, hyper.dim_time, hyper.steps);
    let init = common::params(dims, data.train.max_timestamp().unwrap_or(1), cfg.seed);
    let adj = data.adjacency();
    let facts = FactIndex::build(data.all_quadruples());
    let inputs = TrainingData {
        train: &data.train.quadruples,
        valid: &data.valid.quadruples,
        adj: &adj,
        facts: &facts,
    };
    let out = match fit(init, &inputs, &hyper, &sampling, &cfg) {
        Ok(o) => o,
        Err(e) => return Outcome::unavailable(format!("training failed: {e}")),
    };
    let fc = Forecaster::new(&out.params, &hyper, &sampling, &adj);
    match evaluate(&fc, &data.test.quadruples, &facts, &TimeAwareFilter, &[1, 3, 10]) {
        Ok(r) => {
            let mrr = 100.0 * r.metrics.mrr;
            Outcome {
                pass: (36.0..=45.0).contains(&mrr),
                detail: format!("time-aware MRR {mrr:.2}, Hits@1 {:.2}", 100.0 * r.metrics.hits[&1]),
                binding: false,
            }
        }
        Err(e) => Outcome::unavailable(format!("evaluation failed: {e}")),
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Outcome::check(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let c1 = guarded(ingestion);
    let c2 = guarded(segment_kernels);
    let c3 = guarded(gradients);
    let (c4, c5) = match catch_unwind(fuzz) {
        Ok(s) => (guarded(|| causality(&s)), guarded(|| conservation(&s))),
        Err(_) => (
            Outcome::check(false, "fuzz run panicked".into()),
            Outcome::check(false, "fuzz run panicked".into()),
        ),
    };
    let results = [
        (1, "ingestion oracle", c1),
        (2, "segment-kernel oracle", c2),
        (3, "gradient suite", c3),
        (4, "causality fuzz", c4),
        (5, "attention partition and conservation", c5),
        (6, "reverse-update reach", guarded(reverse_reach)),
        (7, "filtering oracle", guarded(filtering)),
        (8, "metrics arithmetic", guarded(metrics_arithmetic)),
        (9, "synthetic learnability", guarded(learnability)),
        (10, "full-scale reproduction", guarded(reproduction)),
    ];
    let mut fatal = false;
    for (n, name, o) in &results {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} [{name}]: {verdict} - {}", o.detail);
        fatal |= !o.pass && o.binding;
    }
    if fatal {
        std::process::exit(1);
    }
}
