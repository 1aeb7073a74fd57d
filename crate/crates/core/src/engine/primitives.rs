//! Single-node reference forms of the attention layer.
//!
//! The batched path in [`super::Session`] records the same arithmetic on the
//! autodiff tape; these scalar versions are what it is checked against.

use std::collections::BTreeMap;

use super::ScoreAggregator;
use crate::error::{Error, Result};
use crate::segment::{segment_softmax, SegmentedVector};
use crate::store::EntityId;
use crate::tensor::{dot, Tensor};

fn concat4(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len() + c.len() + d.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.extend_from_slice(c);
    out.extend_from_slice(d);
    out
}

/// Bilinear query-conditioned edge score:
/// `⟨W_sub (h_v‖p_k‖h_q‖p_q), W_obj (h_u‖p_k‖h_q‖p_q)⟩`.
#[allow(clippy::too_many_arguments)]
pub fn edge_attention(
    w_sub: &Tensor,
    w_obj: &Tensor,
    h_v: &[f64],
    h_u: &[f64],
    p_k: &[f64],
    h_q: &[f64],
    p_q: &[f64],
) -> Result<f64> {
    let xv = concat4(h_v, p_k, h_q, p_q);
    let xu = concat4(h_u, p_k, h_q, p_q);
    if w_sub.cols != xv.len() || w_obj.cols != xu.len() || w_sub.rows != w_obj.rows {
        return Err(Error::Shape {
            op: "edge_attention",
            detail: format!(
                "W_sub {:?}, W_obj {:?}, input width {}",
                w_sub.shape(),
                w_obj.shape(),
                xv.len()
            ),
        });
    }
    Ok(dot(&w_sub.matvec(&xv), &w_obj.matvec(&xu)))
}

/// Softmax over all outgoing prior edges of one node.
pub fn normalize_attention(raw: &[f64]) -> Vec<f64> {
    if raw.is_empty() {
        return Vec::new();
    }
    let seg = vec![0; raw.len()];
    segment_softmax(SegmentedVector { values: raw, segments: &seg }, 1).expect("single segment")
}

/// `h̃ = Σ α · h_u`.
pub fn aggregate_neighbors(alphas: &[f64], neighbors: &[&[f64]]) -> Vec<f64> {
    let d = neighbors.first().map_or(0, |h| h.len());
    let mut out = vec![0.0; d];
    for (a, h) in alphas.iter().zip(neighbors) {
        for (o, x) in out.iter_mut().zip(*h) {
            *o += a * x;
        }
    }
    out
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// `LeakyReLU(W_h (γ h + (1 − γ) h̃) + b_h)`; without neighbors `h̃ = h`.
pub fn update_hidden(w_h: &Tensor, b_h: &[f64], gamma: f64, slope: f64, h: &[f64], h_tilde: Option<&[f64]>) -> Vec<f64> {
    let mix: Vec<f64> = match h_tilde {
        Some(t) => h.iter().zip(t).map(|(a, b)| gamma * a + (1.0 - gamma) * b).collect(),
        None => h.to_vec(),
    };
    w_h.matvec(&mix)
        .into_iter()
        .zip(b_h)
        .map(|(z, b)| leaky_relu(z + b, slope))
        .collect()
}

/// `p^l = W_h p^{l−1} + b_h` for every row.
pub fn project_predicates(w_h: &Tensor, b_h: &[f64], preds: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(preds.rows, w_h.rows);
    for r in 0..preds.rows {
        let v = w_h.matvec(preds.row(r));
        for ((o, x), b) in out.row_mut(r).iter_mut().zip(v).zip(b_h) {
            *o = x + b;
        }
    }
    out
}

/// Attention inflow `a_u = Σ α_vu · a_v` over `(from, to, alpha)` edges.
/// With `query_retains`, node 0 also keeps its previous attention.
pub fn propagate_attention(edges: &[(usize, usize, f64)], previous: &[f64], num_nodes: usize, query_retains: bool) -> Vec<f64> {
    let mut out = vec![0.0; num_nodes];
    for &(from, to, alpha) in edges {
        out[to] += alpha * previous.get(from).copied().unwrap_or(0.0);
    }
    if query_retains {
        out[0] += previous[0];
    }
    out
}

/// Per-entity score of `(entity, node attention)` pairs.
pub fn aggregate_entity_scores(nodes: &[(EntityId, f64)], agg: &dyn ScoreAggregator) -> BTreeMap<EntityId, f64> {
    let mut grouped: BTreeMap<EntityId, Vec<f64>> = BTreeMap::new();
    for &(e, a) in nodes {
        grouped.entry(e).or_default().push(a);
    }
    grouped.into_iter().map(|(e, v)| (e, agg.aggregate(&v))).collect()
}
