//! Trainable parameters: static entity rows, the functional time encoding,
//! predicate rows and the per-step attention/update weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamId;
use crate::error::{Error, Result};
use crate::store::{EntityId, PredicateId, Timestamp};
use crate::tensor::Tensor;

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_entities: usize,
    /// Augmented predicate count (base and reciprocal).
    pub num_predicates: usize,
    pub dim_static: usize,
    pub dim_time: usize,
    pub steps: usize,
}

impl ModelDims {
    /// Hidden size shared by nodes and predicates.
    pub fn hidden(&self) -> usize {
        self.dim_static + self.dim_time
    }
}

/// Parameter ids of one inference step.
#[derive(Clone, Copy, Debug)]
pub struct StepIds {
    pub w_sub: ParamId,
    pub w_obj: ParamId,
    pub w_h: ParamId,
    pub b_h: ParamId,
}

#[derive(Clone, Debug)]
pub struct ParamIndex {
    pub entity_static: ParamId,
    pub pred: ParamId,
    pub time_freq: ParamId,
    pub time_phase: ParamId,
    pub w_v: ParamId,
    pub b_v: ParamId,
    pub steps: Vec<StepIds>,
}

impl ParamIndex {
    fn new(steps: usize) -> Self {
        Self {
            entity_static: ParamId(0),
            pred: ParamId(1),
            time_freq: ParamId(2),
            time_phase: ParamId(3),
            w_v: ParamId(4),
            b_v: ParamId(5),
            steps: (0..steps)
                .map(|l| StepIds {
                    w_sub: ParamId(6 + 4 * l),
                    w_obj: ParamId(7 + 4 * l),
                    w_h: ParamId(8 + 4 * l),
                    b_h: ParamId(9 + 4 * l),
                })
                .collect(),
        }
    }

    /// Weights of 1-based inference step `l`.
    pub fn step(&self, l: usize) -> StepIds {
        self.steps[l - 1]
    }
}

fn param_names(steps: usize) -> Vec<String> {
    let mut names: Vec<String> = ["entity_static", "pred", "time_freq", "time_phase", "w_v", "b_v"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in 1..=steps {
        for k in ["w_sub", "w_obj", "w_h", "b_h"] {
            names.push(format!("step{l}.{k}"));
        }
    }
    names
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub dims: ModelDims,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParameterSet {
    /// Random initialization. `t_max` is the largest training timestamp.
    pub fn init(dims: ModelDims, t_max: Timestamp, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.hidden();
        let mut uniform = |rows: usize, cols: usize, bound: f64| {
            Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect())
        };
        let inv_sqrt = |n: usize| 1.0 / (n.max(1) as f64).sqrt();

        let mut tensors = vec![
            uniform(dims.num_entities, dims.dim_static, inv_sqrt(dims.dim_static)),
            uniform(dims.num_predicates, d, inv_sqrt(d)),
            Tensor::row_vector(geometric_frequencies(dims.dim_time, t_max)),
            Tensor::zeros(1, dims.dim_time),
            uniform(d, d, inv_sqrt(d)),
            Tensor::zeros(1, d),
        ];
        for _ in 0..dims.steps {
            tensors.push(uniform(d, 4 * d, inv_sqrt(4 * d)));
            tensors.push(uniform(d, 4 * d, inv_sqrt(4 * d)));
            tensors.push(uniform(d, d, inv_sqrt(d)));
            tensors.push(Tensor::zeros(1, d));
        }
        Self {
            dims,
            names: param_names(dims.steps),
            tensors,
        }
    }

    pub fn from_named(dims: ModelDims, named: Vec<(String, Tensor)>) -> Result<Self> {
        let template = Self::init(
            ModelDims {
                num_entities: 0,
                num_predicates: 0,
                ..dims
            },
            1,
            0,
        );
        let mut tensors = Vec::with_capacity(template.names.len());
        for name in &template.names {
            let t = named
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            tensors.push(t);
        }
        let ps = Self {
            dims,
            names: template.names,
            tensors,
        };
        ps.validate_shapes()?;
        Ok(ps)
    }

    fn expected_shape(&self, i: usize) -> (usize, usize) {
        let d = self.dims.hidden();
        match i {
            0 => (self.dims.num_entities, self.dims.dim_static),
            1 => (self.dims.num_predicates, d),
            2 | 3 => (1, self.dims.dim_time),
            4 => (d, d),
            5 => (1, d),
            _ => match (i - 6) % 4 {
                0 | 1 => (d, 4 * d),
                2 => (d, d),
                _ => (1, d),
            },
        }
    }

    fn validate_shapes(&self) -> Result<()> {
        for (i, t) in self.tensors.iter().enumerate() {
            if t.shape() != self.expected_shape(i) {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    self.names[i],
                    t.shape(),
                    self.expected_shape(i)
                )));
            }
        }
        Ok(())
    }

    pub fn index(&self) -> ParamIndex {
        ParamIndex::new(self.dims.steps)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// `Φ(t)` with the current frequencies and phases.
    pub fn time_encoding(&self, t: Timestamp) -> Vec<f64> {
        let idx = self.index();
        time_encoding(&self.get(idx.time_freq).data, &self.get(idx.time_phase).data, t as f64)
    }

    /// `[ē_e ‖ Φ(t)]`.
    pub fn entity_embedding(&self, e: EntityId, t: Timestamp) -> Result<Vec<f64>> {
        let table = self.get(self.index().entity_static);
        if e as usize >= table.rows {
            return Err(Error::UnknownEntity(e));
        }
        let mut v = table.row(e as usize).to_vec();
        v.extend(self.time_encoding(t));
        Ok(v)
    }

    pub fn predicate_embedding(&self, p: PredicateId) -> Result<&[f64]> {
        let table = self.get(self.index().pred);
        if p as usize >= table.rows {
            return Err(Error::UnknownPredicate(p));
        }
        Ok(table.row(p as usize))
    }
}

/// `Φ(t)_j = √(1/d) · cos(ω_j t + φ_j)`.
pub fn time_encoding(freq: &[f64], phase: &[f64], t: f64) -> Vec<f64> {
    let c = (1.0 / freq.len().max(1) as f64).sqrt();
    freq.iter().zip(phase).map(|(w, p)| c * (w * t + p).cos()).collect()
}

/// `d` frequencies spaced geometrically from 1 down to `1 / t_max`.
pub fn geometric_frequencies(d: usize, t_max: Timestamp) -> Vec<f64> {
    let t_max = (t_max.max(1)) as f64;
    match d {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..d)
            .map(|j| t_max.powf(-(j as f64) / (d - 1) as f64))
            .collect(),
    }
}
