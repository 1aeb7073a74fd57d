use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregator_registry, Hyperparams, InferenceGraph, Query, ScoreAggregator};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamIndex, ParameterSet};
use crate::sampler::{query_rng, SamplerRng, SamplingConfig, SamplingStrategy};
use crate::store::{EntityId, PredicateId, TemporalAdjacency};
use crate::tensor::Tensor;

/// Read-only bundle needed to answer queries.
#[derive(Clone, Copy)]
pub struct Forecaster<'a> {
    pub params: &'a ParameterSet,
    pub hyper: &'a Hyperparams,
    pub sampling: &'a SamplingConfig,
    pub adj: &'a TemporalAdjacency,
}

/// Per-step instrumentation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    /// Edge messages computed during the reverse update.
    pub messages: usize,
    /// Edges in the graph when the update ran.
    pub edges_before_prune: usize,
    pub edges_added: usize,
    pub edges_pruned: usize,
    pub nodes_removed: usize,
    /// `Σ a^l` before pruning.
    pub attention_before_prune: f64,
    /// `Σ a^{l−1}` over nodes that have outgoing edges.
    pub redistributed_mass: f64,
    /// Attention the query node kept because it had no outgoing edges.
    pub retained_mass: f64,
    /// Largest `|Σ α − 1|` over nodes with outgoing edges, before pruning.
    pub partition_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub query: Query,
    /// Entities in the inference graph, best first.
    pub ranked: Vec<(EntityId, f64)>,
    pub graph: InferenceGraph,
    pub stats: Vec<StepStats>,
}

impl Forecast {
    pub fn top(&self) -> Option<EntityId> {
        self.ranked.first().map(|&(e, _)| e)
    }

    pub fn score(&self, e: EntityId) -> f64 {
        self.ranked.iter().find(|&&(x, _)| x == e).map_or(0.0, |&(_, s)| s)
    }

    pub fn scores(&self) -> HashMap<EntityId, f64> {
        self.ranked.iter().copied().collect()
    }
}

impl<'a> Forecaster<'a> {
    pub fn new(
        params: &'a ParameterSet,
        hyper: &'a Hyperparams,
        sampling: &'a SamplingConfig,
        adj: &'a TemporalAdjacency,
    ) -> Self {
        Self {
            params,
            hyper,
            sampling,
            adj,
        }
    }

    /// Starts a query; `stream` selects the sampling RNG stream.
    pub fn session(&self, query: Query, stream: u64) -> Result<Session<'a>> {
        Session::new(*self, query, stream)
    }

    pub fn forecast(&self, query: Query, stream: u64) -> Result<Forecast> {
        let mut s = self.session(query, stream)?;
        s.run()?;
        s.finish()
    }

    /// Independent forecasts, query `i` on stream `i`.
    pub fn forecast_many(&self, queries: &[Query]) -> Vec<Result<Forecast>> {
        queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| self.forecast(*q, i as u64))
            .collect()
    }
}

struct StepVars {
    w_sub: Var,
    w_obj: Var,
    w_h: Var,
    b_h: Var,
}

/// One query's inference graph together with the recorded computation.
pub struct Session<'a> {
    fc: Forecaster<'a>,
    idx: ParamIndex,
    strategy: Arc<dyn SamplingStrategy>,
    aggregator: Arc<dyn ScoreAggregator>,
    tape: Tape,
    rng: SamplerRng,
    graph: InferenceGraph,
    completed: usize,
    dim: usize,
    /// Hidden rows, one per node slot.
    hidden: Var,
    /// Attention column, one per node slot.
    attention: Var,
    prev_attention: Var,
    query_retains: bool,
    /// Projected predicate rows at the current level.
    preds: Var,
    pred_rows: HashMap<PredicateId, usize>,
    freq: Var,
    phase: Var,
    w_v: Var,
    b_v: Var,
    steps: Vec<StepVars>,
    stats: Vec<StepStats>,
}

impl<'a> Session<'a> {
    fn new(fc: Forecaster<'a>, query: Query, stream: u64) -> Result<Self> {
        fc.hyper.validate()?;
        fc.sampling.validate()?;
        let params = fc.params;
        let dims = params.dims;
        if dims.steps < fc.hyper.steps {
            return Err(Error::Config(format!(
                "model has weights for {} steps, {} requested",
                dims.steps, fc.hyper.steps
            )));
        }
        if dims.hidden() != fc.hyper.dim_static + fc.hyper.dim_time {
            return Err(Error::Config("parameter dimensions disagree with hyperparameters".into()));
        }
        if query.subject as usize >= dims.num_entities {
            return Err(Error::UnknownEntity(query.subject));
        }
        if query.predicate as usize >= dims.num_predicates {
            return Err(Error::UnknownPredicate(query.predicate));
        }
        let idx = params.index();
        let tape = Tape::new();
        let steps = (1..=fc.hyper.steps)
            .map(|l| {
                let s = idx.step(l);
                StepVars {
                    w_sub: tape.param(s.w_sub, params.get(s.w_sub)),
                    w_obj: tape.param(s.w_obj, params.get(s.w_obj)),
                    w_h: tape.param(s.w_h, params.get(s.w_h)),
                    b_h: tape.param(s.b_h, params.get(s.b_h)),
                }
            })
            .collect();
        let freq = tape.param(idx.time_freq, params.get(idx.time_freq));
        let phase = tape.param(idx.time_phase, params.get(idx.time_phase));
        let w_v = tape.param(idx.w_v, params.get(idx.w_v));
        let b_v = tape.param(idx.b_v, params.get(idx.b_v));
        let dim = dims.hidden();
        let attention = tape.constant(Tensor::from_vec(1, 1, vec![1.0]));
        let preds = tape.constant(Tensor::zeros(0, dim));
        let mut s = Self {
            strategy: fc.sampling.strategy()?,
            aggregator: aggregator_registry().get(&fc.hyper.agg)?,
            fc,
            idx,
            rng: query_rng(fc.sampling.seed, stream),
            graph: InferenceGraph::new(query, Vec::new()),
            completed: 0,
            dim,
            hidden: attention,
            attention,
            prev_attention: attention,
            query_retains: true,
            preds,
            pred_rows: HashMap::new(),
            freq,
            phase,
            w_v,
            b_v,
            steps,
            stats: Vec::new(),
            tape,
        };
        s.hidden = s.input_hidden(&[query.subject], &[query.time], 0)?;
        s.ensure_predicates(&[query.predicate])?;
        s.sync_graph();
        Ok(s)
    }

    pub fn graph(&self) -> &InferenceGraph {
        &self.graph
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn stats(&self) -> &[StepStats] {
        &self.stats
    }

    pub fn completed_steps(&self) -> usize {
        self.completed
    }

    pub fn hidden_var(&self) -> Var {
        self.hidden
    }

    pub fn attention_var(&self) -> Var {
        self.attention
    }

    /// Current hidden state of a node slot.
    pub fn hidden_of(&self, slot: usize) -> Vec<f64> {
        self.tape.with_value(self.hidden, |t| t.row(slot).to_vec())
    }

    /// `W_v [ē ‖ Φ(t)] + b_v`, then self-transforms through step `level`.
    fn input_hidden(&self, entities: &[EntityId], times: &[i64], level: usize) -> Result<Var> {
        let t = &self.tape;
        let table = self.fc.params.get(self.idx.entity_static);
        let rows: Vec<usize> = entities.iter().map(|&e| e as usize).collect();
        if let Some(&bad) = entities.iter().find(|&&e| e as usize >= table.rows) {
            return Err(Error::UnknownEntity(bad));
        }
        let stat = t.param_rows(self.idx.entity_static, table, &rows);
        let times: Vec<f64> = times.iter().map(|&x| x as f64).collect();
        let enc = t.time_encode(self.freq, self.phase, &times)?;
        let x = t.concat_cols(&[stat, enc])?;
        let mut h = t.linear(x, self.w_v, Some(self.b_v))?;
        for sv in &self.steps[..level] {
            let z = t.linear(h, sv.w_h, Some(sv.b_h))?;
            h = t.leaky_relu(z, self.fc.hyper.leaky_slope);
        }
        Ok(h)
    }

    /// Adds missing predicate rows, projected to the current level.
    fn ensure_predicates(&mut self, preds: &[PredicateId]) -> Result<()> {
        let mut missing: Vec<PredicateId> = Vec::new();
        for &p in preds {
            if p as usize >= self.fc.params.dims.num_predicates {
                return Err(Error::UnknownPredicate(p));
            }
            if !self.pred_rows.contains_key(&p) && !missing.contains(&p) {
                missing.push(p);
            }
        }
        if missing.is_empty() {
            return Ok(());
        }
        let t = &self.tape;
        let rows: Vec<usize> = missing.iter().map(|&p| p as usize).collect();
        let mut x = t.param_rows(self.idx.pred, self.fc.params.get(self.idx.pred), &rows);
        for sv in &self.steps[..self.completed] {
            x = t.linear(x, sv.w_h, Some(sv.b_h))?;
        }
        let base = self.pred_rows.len();
        self.preds = t.concat_rows(&[self.preds, x])?;
        for (k, p) in missing.into_iter().enumerate() {
            self.pred_rows.insert(p, base + k);
        }
        Ok(())
    }

    /// Runs every remaining step.
    pub fn run(&mut self) -> Result<()> {
        while self.completed < self.fc.hyper.steps {
            self.step()?;
        }
        Ok(())
    }

    /// Expand, reverse update, propagate attention, prune.
    pub fn step(&mut self) -> Result<&StepStats> {
        if self.completed >= self.fc.hyper.steps {
            return Err(Error::Config(format!("all {} steps already ran", self.completed)));
        }
        let l = self.completed + 1;
        let mut stats = StepStats {
            step: l,
            ..Default::default()
        };
        stats.edges_added = self.expand(l)?;
        let (alphas, order) = self.reverse_update(l, &mut stats)?;
        let flows = self.propagate(alphas, &order, &mut stats)?;
        self.prune(l, flows, &order, &mut stats)?;
        self.completed = l;
        self.sync_graph();
        self.stats.push(stats);
        Ok(self.stats.last().expect("just pushed"))
    }

    fn expand(&mut self, l: usize) -> Result<usize> {
        let frontier: Vec<usize> = self
            .graph
            .nodes()
            .filter(|(_, n)| !n.expanded)
            .map(|(i, _)| i)
            .collect();
        let before_slots = self.graph.node_slots().len();
        let mut fresh: Vec<usize> = Vec::new();
        let mut added = 0;
        let mut preds = Vec::new();
        for v in frontier {
            let (e, t) = {
                let n = &mut self.graph.node_slots_mut()[v];
                n.expanded = true;
                (n.entity, n.timestamp)
            };
            let prior = self.fc.adj.prior_edges(e, t);
            let sampled = self.strategy.sample(prior, t, self.fc.sampling.budget, &mut self.rng);
            for a in sampled {
                let was_alive = self
                    .graph
                    .lookup((a.neighbor, a.timestamp))
                    .map(|i| self.graph.node(i).alive);
                let (slot, _) = self.graph.insert_node((a.neighbor, a.timestamp), l, self.dim);
                if was_alive != Some(true) {
                    fresh.push(slot);
                }
                self.graph.push_edge(v, slot, a.predicate, l);
                preds.push(a.predicate);
                added += 1;
            }
        }
        self.ensure_predicates(&preds)?;
        let new_slots = self.graph.node_slots().len() - before_slots;
        if new_slots > 0 {
            let t = &self.tape;
            let zh = t.constant(Tensor::zeros(new_slots, self.dim));
            self.hidden = t.concat_rows(&[self.hidden, zh])?;
            let za = t.constant(Tensor::zeros(new_slots, 1));
            self.attention = t.concat_rows(&[self.attention, za])?;
        }
        if !fresh.is_empty() {
            let ents: Vec<EntityId> = fresh.iter().map(|&i| self.graph.node(i).entity).collect();
            let times: Vec<i64> = fresh.iter().map(|&i| self.graph.node(i).timestamp).collect();
            let h = self.input_hidden(&ents, &times, l - 1)?;
            self.hidden = self.tape.scatter_rows(self.hidden, &fresh, h)?;
        }
        Ok(added)
    }

    /// Updates groups newest-first; returns per-edge attention and the edge
    /// id for each of its rows.
    fn reverse_update(&mut self, l: usize, stats: &mut StepStats) -> Result<(Option<Var>, Vec<usize>)> {
        let t = &self.tape;
        let sv = &self.steps[l - 1];
        let gamma = self.fc.hyper.gamma;
        let slope = self.fc.hyper.leaky_slope;
        let q_row = self.pred_rows[&self.graph.query.predicate];
        let mut h = self.hidden;
        let mut alpha_parts = Vec::new();
        let mut order = Vec::new();
        let mut edge_values: HashMap<usize, (f64, f64)> = HashMap::new();

        for g in (0..=l).rev() {
            let group: Vec<usize> = self
                .graph
                .nodes()
                .filter(|(_, n)| n.added_at_step == g)
                .map(|(i, _)| i)
                .collect();
            if group.is_empty() {
                continue;
            }
            let local: HashMap<usize, usize> = group.iter().enumerate().map(|(k, &s)| (s, k)).collect();
            let edges: Vec<(usize, usize, usize, usize)> = self
                .graph
                .edges()
                .iter()
                .filter_map(|e| local.get(&e.from).map(|&k| (e.id, k, e.to, self.pred_rows[&e.predicate])))
                .collect();
            let hs = t.gather(h, &group);
            let h_tilde = if edges.is_empty() {
                hs
            } else {
                let from: Vec<usize> = edges.iter().map(|e| group[e.1]).collect();
                let to: Vec<usize> = edges.iter().map(|e| e.2).collect();
                let pk: Vec<usize> = edges.iter().map(|e| e.3).collect();
                let seg: Vec<usize> = edges.iter().map(|e| e.1).collect();
                let hv = t.gather(h, &from);
                let hu = t.gather(h, &to);
                let hq = t.gather(h, &vec![InferenceGraph::QUERY_NODE; edges.len()]);
                let p = t.gather(self.preds, &pk);
                let pq = t.gather(self.preds, &vec![q_row; edges.len()]);
                let xs = t.concat_cols(&[hv, p, hq, pq])?;
                let xo = t.concat_cols(&[hu, p, hq, pq])?;
                let zs = t.linear(xs, sv.w_sub, None)?;
                let zo = t.linear(xo, sv.w_obj, None)?;
                let raw = t.row_dot(zs, zo)?;
                let alpha = t.segment_softmax(raw, &seg, group.len())?;
                let msg = t.scale_rows(hu, alpha)?;
                let mut agg = t.segment_sum_rows(msg, &seg, group.len())?;
                let mut has_edges = vec![false; group.len()];
                for &k in &seg {
                    has_edges[k] = true;
                }
                if has_edges.iter().any(|b| !b) {
                    let mask = t.constant(Tensor::column(has_edges.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect()));
                    let own = t.scale_rows(hs, mask)?;
                    agg = t.add(agg, own)?;
                }
                let (raw_v, alpha_v) = (t.value(raw), t.value(alpha));
                for (k, e) in edges.iter().enumerate() {
                    edge_values.insert(e.0, (raw_v.data[k], alpha_v.data[k]));
                    order.push(e.0);
                }
                stats.messages += edges.len();
                alpha_parts.push(alpha);
                agg
            };
            let mix = t.axpby(hs, gamma, h_tilde, 1.0 - gamma)?;
            let z = t.linear(mix, sv.w_h, Some(sv.b_h))?;
            let new = t.leaky_relu(z, slope);
            h = t.scatter_rows(h, &group, new)?;
        }
        self.hidden = h;
        self.preds = t.linear(self.preds, sv.w_h, Some(sv.b_h))?;
        stats.edges_before_prune = self.graph.num_edges();
        let mut alpha_sums: HashMap<usize, f64> = HashMap::new();
        for e in self.graph.edges_mut() {
            if let Some(&(raw, alpha)) = edge_values.get(&e.id) {
                e.raw_score = raw;
                e.alpha = alpha;
                *alpha_sums.entry(e.from).or_default() += alpha;
            }
        }
        stats.partition_error = alpha_sums.values().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        let alphas = match alpha_parts.len() {
            0 => None,
            1 => Some(alpha_parts[0]),
            _ => Some(t.concat_rows(&alpha_parts)?),
        };
        Ok((alphas, order))
    }

    /// Attention inflow from the previous level; returns per-edge flows.
    fn propagate(&mut self, alphas: Option<Var>, order: &[usize], stats: &mut StepStats) -> Result<Option<Var>> {
        let t = &self.tape;
        let prev = t.value(self.attention);
        let by_id = self.edge_positions();
        let from: Vec<usize> = order.iter().map(|id| self.graph.edges()[by_id[id]].from).collect();
        let mut has_out = vec![false; prev.rows];
        for &f in &from {
            has_out[f] = true;
        }
        stats.redistributed_mass = (0..prev.rows).filter(|&i| has_out[i]).map(|i| prev.data[i]).sum();
        let flows = match alphas {
            Some(a) => {
                let src = t.gather(self.attention, &from);
                Some(t.mul(a, src)?)
            }
            None => None,
        };
        if let Some(f) = flows {
            let fv = t.value(f);
            for (r, id) in order.iter().enumerate() {
                self.graph.edges_mut()[by_id[id]].contribution = fv.data[r];
            }
        }
        let retain = !has_out[InferenceGraph::QUERY_NODE];
        stats.retained_mass = if retain { prev.data[InferenceGraph::QUERY_NODE] } else { 0.0 };
        let rows: Vec<usize> = (0..order.len()).collect();
        self.prev_attention = self.attention;
        self.query_retains = retain;
        self.attention = self.inflow(flows, order, &rows)?;
        stats.attention_before_prune = self.tape.with_value(self.attention, |a| a.data.iter().sum());
        Ok(flows)
    }

    fn edge_positions(&self) -> HashMap<usize, usize> {
        self.graph.edges().iter().enumerate().map(|(i, e)| (e.id, i)).collect()
    }

    /// `a_u = Σ flows into u` over the selected flow rows, plus the query's
    /// previous attention when it has no outgoing edges.
    fn inflow(&self, flows: Option<Var>, order: &[usize], rows: &[usize]) -> Result<Var> {
        let t = &self.tape;
        let n = self.graph.node_slots().len();
        let by_id = self.edge_positions();
        let mut a = match flows {
            Some(f) if !rows.is_empty() => {
                let kept = t.gather(f, rows);
                let to: Vec<usize> = rows.iter().map(|&r| self.graph.edges()[by_id[&order[r]]].to).collect();
                t.segment_sum_rows(kept, &to, n)?
            }
            _ => t.constant(Tensor::zeros(n, 1)),
        };
        if self.query_retains {
            let mut m = vec![0.0; n];
            m[InferenceGraph::QUERY_NODE] = 1.0;
            let mask = t.constant(Tensor::column(m));
            let keep = t.scale_rows(self.prev_attention, mask)?;
            a = t.add(a, keep)?;
        }
        Ok(a)
    }

    /// Keeps this step's `K` highest-contribution edges, drops isolated
    /// nodes and recomputes attention from the surviving flows.
    fn prune(&mut self, l: usize, flows: Option<Var>, order: &[usize], stats: &mut StepStats) -> Result<()> {
        let k = self.fc.hyper.prune_k;
        let mut cand: Vec<(f64, i64, usize)> = self
            .graph
            .edges()
            .iter()
            .filter(|e| e.added_at_step == l)
            .map(|e| (e.contribution, self.graph.node(e.to).timestamp, e.id))
            .collect();
        if cand.len() <= k {
            return Ok(());
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let dropped: HashSet<usize> = cand[k..].iter().map(|c| c.2).collect();
        stats.edges_pruned = dropped.len();
        self.graph.edges_mut().retain(|e| !dropped.contains(&e.id));
        stats.nodes_removed = self.graph.drop_isolated();
        let rows: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(_, id)| !dropped.contains(id))
            .map(|(r, _)| r)
            .collect();
        self.attention = self.inflow(flows, order, &rows)?;
        Ok(())
    }

    /// Copies tape values into the graph's node records.
    fn sync_graph(&mut self) {
        let h = self.tape.value(self.hidden);
        let a = self.tape.value(self.attention);
        for (i, n) in self.graph.node_slots_mut().iter_mut().enumerate() {
            if n.alive {
                n.hidden = h.row(i).to_vec();
                n.attention = a.data[i];
            } else {
                n.attention = 0.0;
            }
        }
    }

    /// Candidate entities (ascending) and their aggregated scores as an
    /// `n × 1` variable. The query node itself is not a candidate; it only
    /// holds attention while it has no prior edges.
    pub fn entity_scores(&self) -> Result<(Vec<EntityId>, Var)> {
        let t = &self.tape;
        let alive: Vec<(usize, EntityId)> = self
            .graph
            .nodes()
            .filter(|&(i, _)| i != InferenceGraph::QUERY_NODE)
            .map(|(i, n)| (i, n.entity))
            .collect();
        let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
        for &(_, e) in &alive {
            *counts.entry(e).or_default() += 1;
        }
        let entities: Vec<EntityId> = counts.keys().copied().collect();
        let pos: HashMap<EntityId, usize> = entities.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        let slots: Vec<usize> = alive.iter().map(|&(i, _)| i).collect();
        let seg: Vec<usize> = alive.iter().map(|&(_, e)| pos[&e]).collect();
        let a = t.gather(self.attention, &slots);
        let summed = t.segment_sum_rows(a, &seg, entities.len())?;
        let w = t.constant(Tensor::column(
            entities.iter().map(|e| self.aggregator.sum_weight(counts[e])).collect(),
        ));
        Ok((entities, t.scale_rows(summed, w)?))
    }

    /// BCE of the normalized entity scores against `answer`. `None` when
    /// `skip_missing` is set and the answer never entered the graph.
    pub fn loss(&self, answer: EntityId, eps: f64, skip_missing: bool) -> Result<Option<Var>> {
        let (entities, scores) = self.entity_scores()?;
        let labels: Vec<f64> = entities.iter().map(|&e| if e == answer { 1.0 } else { 0.0 }).collect();
        if entities.is_empty() || (skip_missing && !labels.contains(&1.0)) {
            return Ok(None);
        }
        Ok(Some(self.tape.normalized_bce(scores, &labels, eps)?))
    }

    pub fn finish(self) -> Result<Forecast> {
        let (entities, scores) = self.entity_scores()?;
        let values = self.tape.value(scores);
        let mut ranked: Vec<(EntityId, f64)> = entities.into_iter().zip(values.data).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(Forecast {
            query: self.graph.query,
            ranked,
            graph: self.graph,
            stats: self.stats,
        })
    }
}
