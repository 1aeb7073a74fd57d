//! Inference graphs rendered as human-readable evidence.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::engine::{Forecast, InferenceGraph};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::store::{TemporalAdjacency, Timestamp, Vocabulary};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryNames {
    pub subject: String,
    pub predicate: String,
    pub time: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRef {
    pub entity: String,
    pub timestamp: Timestamp,
}

impl NodeRef {
    fn key(&self) -> String {
        format!("{}@{}", self.entity, self.timestamp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationNode {
    pub entity: String,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    pub attention: f64,
    /// Entity had no training facts; its embedding row is untrained.
    #[serde(default)]
    pub unseen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEdge {
    pub from: NodeRef,
    pub predicate: String,
    pub to: NodeRef,
    pub contribution: f64,
    pub attention: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationDocument {
    pub schema_version: u32,
    pub query: QueryNames,
    pub predicted: Option<String>,
    pub nodes: Vec<ExplanationNode>,
    pub edges: Vec<ExplanationEdge>,
    /// Digest of the model and configuration that produced the graph.
    pub fingerprint: String,
}

fn date_of(vocab: &Vocabulary, t: Timestamp) -> Option<String> {
    vocab
        .epoch
        .and_then(|e: NaiveDate| e.checked_add_signed(Duration::days(t)))
        .map(|d| d.format("%Y-%m-%d").to_string())
}

fn entity_name(vocab: &Vocabulary, e: u32) -> String {
    vocab.entities.name(e).map_or_else(|| format!("#{e}"), str::to_string)
}

fn by_attention_then_name(a: (f64, &str, Timestamp), b: (f64, &str, Timestamp)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2))
}

impl ExplanationDocument {
    /// Builds the document for a finished forecast. `is_unseen` flags
    /// entities without training facts.
    pub fn from_forecast(
        f: &Forecast,
        vocab: &Vocabulary,
        base_predicates: usize,
        fingerprint: &str,
        is_unseen: &dyn Fn(u32) -> bool,
    ) -> Self {
        Self::from_graph(&f.graph, f.top(), vocab, base_predicates, fingerprint, is_unseen)
    }

    pub fn from_graph(
        g: &InferenceGraph,
        predicted: Option<u32>,
        vocab: &Vocabulary,
        base_predicates: usize,
        fingerprint: &str,
        is_unseen: &dyn Fn(u32) -> bool,
    ) -> Self {
        let q = g.query;
        let mut nodes: Vec<ExplanationNode> = g
            .nodes()
            .map(|(_, n)| ExplanationNode {
                entity: entity_name(vocab, n.entity),
                timestamp: n.timestamp,
                date: date_of(vocab, n.timestamp),
                attention: n.attention,
                unseen: is_unseen(n.entity),
            })
            .collect();
        nodes.sort_by(|a, b| by_attention_then_name((a.attention, &a.entity, a.timestamp), (b.attention, &b.entity, b.timestamp)));
        let node_ref = |slot: usize| {
            let n = g.node(slot);
            NodeRef {
                entity: entity_name(vocab, n.entity),
                timestamp: n.timestamp,
            }
        };
        let mut edges: Vec<ExplanationEdge> = g
            .edges()
            .iter()
            .map(|e| ExplanationEdge {
                from: node_ref(e.from),
                predicate: vocab.predicate_name(e.predicate, base_predicates),
                to: node_ref(e.to),
                contribution: e.contribution.max(0.0),
                attention: e.alpha,
            })
            .collect();
        edges.sort_by(|a, b| {
            b.contribution
                .total_cmp(&a.contribution)
                .then_with(|| a.from.key().cmp(&b.from.key()))
                .then_with(|| a.predicate.cmp(&b.predicate))
                .then_with(|| a.to.key().cmp(&b.to.key()))
        });
        Self {
            schema_version: SCHEMA_VERSION,
            query: QueryNames {
                subject: entity_name(vocab, q.subject),
                predicate: vocab.predicate_name(q.predicate, base_predicates),
                time: q.time,
                date: date_of(vocab, q.time),
            },
            predicted: predicted.map(|e| entity_name(vocab, e)),
            nodes,
            edges,
            fingerprint: fingerprint.to_string(),
        }
    }

    /// Structural checks: edge endpoints are listed nodes, contributions are
    /// non-negative.
    pub fn check(&self) -> Result<()> {
        let keys: std::collections::HashSet<String> =
            self.nodes.iter().map(|n| format!("{}@{}", n.entity, n.timestamp)).collect();
        for e in &self.edges {
            if !keys.contains(&e.from.key()) || !keys.contains(&e.to.key()) {
                return Err(Error::LengthMismatch(format!(
                    "edge {} -> {} references a node not in the document",
                    e.from.key(),
                    e.to.key()
                )));
            }
            if e.contribution < 0.0 || !e.contribution.is_finite() {
                return Err(Error::Config(format!("edge {} has invalid contribution {}", e.from.key(), e.contribution)));
            }
        }
        Ok(())
    }
}

/// Serializes an explanation document.
pub trait Exporter: Named + Send + Sync {
    fn extension(&self) -> &'static str;
    fn export(&self, doc: &ExplanationDocument) -> Result<String>;
}

pub struct JsonExporter;

impl Named for JsonExporter {
    fn name(&self) -> &'static str {
        "json"
    }
}

impl Exporter for JsonExporter {
    fn extension(&self) -> &'static str {
        "json"
    }

    fn export(&self, doc: &ExplanationDocument) -> Result<String> {
        serde_json::to_string_pretty(doc).map_err(|e| Error::Config(format!("json export: {e}")))
    }
}

/// Graphviz output: node width grows with attention, edge ink darkens with
/// contribution relative to the largest one.
pub struct DotExporter;

impl Named for DotExporter {
    fn name(&self) -> &'static str {
        "dot"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["graphviz"]
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl Exporter for DotExporter {
    fn extension(&self) -> &'static str {
        "dot"
    }

    fn export(&self, doc: &ExplanationDocument) -> Result<String> {
        let max_att = doc.nodes.iter().map(|n| n.attention).fold(0.0, f64::max);
        let max_c = doc.edges.iter().map(|e| e.contribution).fold(0.0, f64::max);
        let mut out = String::new();
        let _ = writeln!(out, "digraph explanation {{");
        let _ = writeln!(
            out,
            "  label=\"{} {} ? @ {}\";",
            dot_escape(&doc.query.subject),
            dot_escape(&doc.query.predicate),
            doc.query.date.clone().unwrap_or_else(|| doc.query.time.to_string())
        );
        let _ = writeln!(out, "  node [shape=ellipse];");
        for n in &doc.nodes {
            let rel = if max_att > 0.0 { n.attention / max_att } else { 0.0 };
            let when = n.date.clone().unwrap_or_else(|| n.timestamp.to_string());
            let _ = writeln!(
                out,
                "  \"{}@{}\" [label=\"{}\\n{}\", width={:.3}, attention={:.6}];",
                dot_escape(&n.entity),
                n.timestamp,
                dot_escape(&n.entity),
                when,
                0.5 + 1.5 * rel,
                n.attention
            );
        }
        for e in &doc.edges {
            let rel = if max_c > 0.0 { e.contribution / max_c } else { 0.0 };
            let grey = (100.0 * (1.0 - rel)).round().clamp(0.0, 100.0) as u32;
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\", color=\"gray{}\", contribution={:.6}];",
                dot_escape(&e.from.key()),
                dot_escape(&e.to.key()),
                dot_escape(&e.predicate),
                grey,
                e.contribution
            );
        }
        out.push_str("}\n");
        Ok(out)
    }
}

pub fn exporter_registry() -> &'static Registry<dyn Exporter> {
    static REG: OnceLock<Registry<dyn Exporter>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Exporter> = Registry::new("exporter");
        r.register(Arc::new(JsonExporter)).register(Arc::new(DotExporter));
        r
    })
}

/// A graph edge not backed by a dataset fact, or one that breaks causality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub edge_id: usize,
    pub reason: String,
}

/// Checks that every edge `(from, p, to)` is a fact `(from.entity, p,
/// to.entity, to.timestamp)` in `adj` and that time flows strictly backwards.
pub fn verify_graph(g: &InferenceGraph, adj: &TemporalAdjacency) -> Vec<Violation> {
    let mut out = Vec::new();
    for e in g.edges() {
        let (from, to) = (g.node(e.from), g.node(e.to));
        if !from.alive || !to.alive {
            out.push(Violation {
                edge_id: e.id,
                reason: "endpoint was pruned".into(),
            });
        }
        if to.timestamp >= from.timestamp {
            out.push(Violation {
                edge_id: e.id,
                reason: format!("timestamp {} is not before {}", to.timestamp, from.timestamp),
            });
        }
        let genuine = adj
            .edges(from.entity)
            .iter()
            .any(|a| a.predicate == e.predicate && a.neighbor == to.entity && a.timestamp == to.timestamp);
        if !genuine {
            out.push(Violation {
                edge_id: e.id,
                reason: format!(
                    "no fact ({}, {}, {}, {})",
                    from.entity, e.predicate, to.entity, to.timestamp
                ),
            });
        }
    }
    for (_, n) in g.nodes().skip(1) {
        if n.timestamp >= g.query.time {
            out.push(Violation {
                edge_id: usize::MAX,
                reason: format!("node ({}, {}) is not before the query time", n.entity, n.timestamp),
            });
        }
    }
    out
}
