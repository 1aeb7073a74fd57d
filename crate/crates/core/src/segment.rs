//! Segment primitives: reductions and normalizations applied independently
//! inside index-labeled groups of a flat array.
//!
//! Every kernel is a single scatter pass over the input; no per-segment loop
//! and no materialized indicator matrix. [`indicator_matrix_sum`] builds the
//! explicit `n × d` indicator and multiplies, for cross-checking.

use crate::error::{Error, Result};

/// Values paired with a segment id per element.
#[derive(Clone, Copy, Debug)]
pub struct SegmentedVector<'a> {
    pub values: &'a [f64],
    pub segments: &'a [usize],
}

impl<'a> SegmentedVector<'a> {
    pub fn new(values: &'a [f64], segments: &'a [usize]) -> Result<Self> {
        if values.len() != segments.len() {
            return Err(Error::LengthMismatch(format!(
                "{} values vs {} segment ids",
                values.len(),
                segments.len()
            )));
        }
        Ok(Self { values, segments })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn check_segments(segments: &[usize], n: usize) -> Result<()> {
    match segments.iter().position(|&s| s >= n) {
        Some(index) => Err(Error::SegmentOutOfRange {
            index,
            id: segments[index],
            segments: n,
        }),
        None => Ok(()),
    }
}

/// `out[k] = Σ_{i: s[i] = k} x[i]`; empty segments are 0.
pub fn segment_sum(sv: SegmentedVector<'_>, n: usize) -> Result<Vec<f64>> {
    check_segments(sv.segments, n)?;
    let mut out = vec![0.0; n];
    for (&x, &s) in sv.values.iter().zip(sv.segments) {
        out[s] += x;
    }
    Ok(out)
}

/// Row-wise segment sum of a row-major `len × cols` matrix into `n × cols`.
pub fn segment_sum_rows(values: &[f64], cols: usize, segments: &[usize], n: usize) -> Result<Vec<f64>> {
    if values.len() != segments.len() * cols {
        return Err(Error::LengthMismatch(format!(
            "{} values vs {} rows of width {cols}",
            values.len(),
            segments.len()
        )));
    }
    check_segments(segments, n)?;
    let mut out = vec![0.0; n * cols];
    for (row, &s) in values.chunks_exact(cols.max(1)).zip(segments) {
        let dst = &mut out[s * cols..(s + 1) * cols];
        for (d, x) in dst.iter_mut().zip(row) {
            *d += x;
        }
    }
    Ok(out)
}

/// Per-segment maxima; empty segments hold `-inf`.
pub fn segment_max(sv: SegmentedVector<'_>, n: usize) -> Result<Vec<f64>> {
    check_segments(sv.segments, n)?;
    let mut out = vec![f64::NEG_INFINITY; n];
    for (&x, &s) in sv.values.iter().zip(sv.segments) {
        if x > out[s] {
            out[s] = x;
        }
    }
    Ok(out)
}

/// `out[i] = exp(x[i]) / Σ_{j: s[j] = s[i]} exp(x[j])`, shifted by the segment max.
pub fn segment_softmax(sv: SegmentedVector<'_>, n: usize) -> Result<Vec<f64>> {
    let max = segment_max(sv, n)?;
    let mut out: Vec<f64> = sv
        .values
        .iter()
        .zip(sv.segments)
        .map(|(&x, &s)| (x - max[s]).exp())
        .collect();
    let mut denom = vec![0.0; n];
    for (&e, &s) in out.iter().zip(sv.segments) {
        denom[s] += e;
    }
    for (o, &s) in out.iter_mut().zip(sv.segments) {
        *o /= denom[s];
    }
    Ok(out)
}

/// Index of the largest value per segment (first index on ties, `None` if empty).
pub fn segment_argmax(sv: SegmentedVector<'_>, n: usize) -> Result<Vec<Option<usize>>> {
    check_segments(sv.segments, n)?;
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (i, (&x, &s)) in sv.values.iter().zip(sv.segments).enumerate() {
        match best[s] {
            Some(j) if sv.values[j] >= x => {}
            _ => best[s] = Some(i),
        }
    }
    Ok(best)
}

/// Dense `n × d` indicator matrix `Y` with `Y[s[i], i] = 1`, multiplied by `x`.
pub fn indicator_matrix_sum(sv: SegmentedVector<'_>, n: usize) -> Result<Vec<f64>> {
    check_segments(sv.segments, n)?;
    let d = sv.len();
    let mut y = vec![0.0; n * d];
    for (i, &s) in sv.segments.iter().enumerate() {
        y[s * d + i] = 1.0;
    }
    Ok((0..n)
        .map(|k| y[k * d..(k + 1) * d].iter().zip(sv.values).map(|(a, b)| a * b).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv<'a>(x: &'a [f64], s: &'a [usize]) -> SegmentedVector<'a> {
        SegmentedVector::new(x, s).unwrap()
    }

    #[test]
    fn worked_sum_example() {
        let out = segment_sum(sv(&[3.0, 1.0, 5.0], &[0, 0, 1]), 2).unwrap();
        assert_eq!(out, vec![4.0, 5.0]);
        assert_eq!(indicator_matrix_sum(sv(&[3.0, 1.0, 5.0], &[0, 0, 1]), 2).unwrap(), vec![4.0, 5.0]);
    }

    #[test]
    fn distinct_ids_gather_and_empty_segments() {
        let out = segment_sum(sv(&[1.0, 2.0], &[1, 0]), 3).unwrap();
        assert_eq!(out, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let err = segment_sum(sv(&[1.0], &[2]), 2).unwrap_err();
        assert!(matches!(err, Error::SegmentOutOfRange { index: 0, id: 2, segments: 2 }));
        assert!(segment_softmax(sv(&[1.0], &[5]), 1).is_err());
        assert!(segment_argmax(sv(&[1.0], &[1]), 1).is_err());
        assert!(SegmentedVector::new(&[1.0], &[]).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(segment_softmax(sv(&[7.5], &[0]), 1).unwrap(), vec![1.0]);
        let out = segment_softmax(sv(&[1f64.ln(), 3f64.ln()], &[0, 0]), 1).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-15 && (out[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn argmax_cases() {
        let out = segment_argmax(sv(&[3.0, 1.0, 5.0], &[0, 0, 1]), 2).unwrap();
        assert_eq!(out, vec![Some(0), Some(2)]);
        let out = segment_argmax(sv(&[2.0, 2.0, 2.0], &[0, 0, 0]), 2).unwrap();
        assert_eq!(out, vec![Some(0), None]);
    }

    #[test]
    fn row_sum() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let out = segment_sum_rows(&x, 2, &[1, 1, 0], 2).unwrap();
        assert_eq!(out, vec![5.0, 6.0, 4.0, 6.0]);
    }
}
