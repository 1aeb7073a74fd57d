//! Timing of the segment kernels against a per-segment loop.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{segment_argmax, segment_softmax, segment_sum, SegmentedVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTiming {
    pub kernel: String,
    /// Mean seconds per call.
    pub naive_secs: f64,
    pub kernel_secs: f64,
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub size: usize,
    pub segments: usize,
    pub iters: usize,
    pub timings: Vec<KernelTiming>,
}

impl BenchReport {
    pub fn min_speedup(&self) -> f64 {
        self.timings.iter().map(|t| t.speedup).fold(f64::INFINITY, f64::min)
    }
}

/// One pass over the data per segment, selecting that segment's members.
pub mod naive {
    pub fn sum(x: &[f64], s: &[usize], n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| x.iter().zip(s).filter(|(_, &sk)| sk == k).fold(0.0, |acc, (v, _)| acc + v))
            .collect()
    }

    pub fn softmax(x: &[f64], s: &[usize], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for k in 0..n {
            let idx: Vec<usize> = (0..x.len()).filter(|&i| s[i] == k).collect();
            let m = idx.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = idx.iter().map(|&i| (x[i] - m).exp()).sum();
            for &i in &idx {
                out[i] = (x[i] - m).exp() / z;
            }
        }
        out
    }

    pub fn argmax(x: &[f64], s: &[usize], n: usize) -> Vec<Option<usize>> {
        (0..n)
            .map(|k| {
                let mut best: Option<usize> = None;
                for i in 0..x.len() {
                    if s[i] == k && best.map_or(true, |b| x[i] > x[b]) {
                        best = Some(i);
                    }
                }
                best
            })
            .collect()
    }
}

fn time_per_call(iters: usize, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    for _ in 0..iters {
        f();
    }
    start.elapsed().as_secs_f64() / iters as f64
}

/// Random instance with `size` values spread over `segments` segments.
pub fn random_instance(size: usize, segments: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..size).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let s = (0..size).map(|_| rng.gen_range(0..segments)).collect();
    (x, s)
}

pub fn run(size: usize, segments: usize, iters: usize, seed: u64) -> Result<BenchReport> {
    if size == 0 || segments == 0 || iters == 0 {
        return Err(Error::Config("bench sizes and iteration count must be positive".into()));
    }
    let (x, s) = random_instance(size, segments, seed);
    let sv = SegmentedVector::new(&x, &s)?;
    let mut timings = Vec::new();
    let mut record = |kernel: &str, naive_secs: f64, kernel_secs: f64| {
        timings.push(KernelTiming {
            kernel: kernel.to_string(),
            naive_secs,
            kernel_secs,
            speedup: naive_secs / kernel_secs.max(1e-12),
        });
    };

    let n_t = time_per_call(iters, || {
        black_box(naive::sum(black_box(&x), &s, segments));
    });
    let k_t = time_per_call(iters, || {
        black_box(segment_sum(black_box(sv), segments).expect("valid ids"));
    });
    record("sum", n_t, k_t);

    let n_t = time_per_call(iters, || {
        black_box(naive::softmax(black_box(&x), &s, segments));
    });
    let k_t = time_per_call(iters, || {
        black_box(segment_softmax(black_box(sv), segments).expect("valid ids"));
    });
    record("softmax", n_t, k_t);

    let n_t = time_per_call(iters, || {
        black_box(naive::argmax(black_box(&x), &s, segments));
    });
    let k_t = time_per_call(iters, || {
        black_box(segment_argmax(black_box(sv), segments).expect("valid ids"));
    });
    record("argmax", n_t, k_t);

    Ok(BenchReport {
        size,
        segments,
        iters,
        timings,
    })
}
