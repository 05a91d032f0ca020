//! Small numerical helpers shared across modules.

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Vertex of the parabola through three equally spaced samples.
///
/// Returns the vertex offset in units of the sample spacing, relative to the
/// middle sample, together with the interpolated value there. Falls back to
/// the middle sample when the points are collinear.
pub fn parabolic_peak<T: Real>(left: T, center: T, right: T) -> (T, T) {
    let denom = left - T::lit(2.0) * center + right;
    if denom == T::zero() {
        return (T::zero(), center);
    }
    let offset = T::lit(0.5) * (left - right) / denom;
    let offset = offset.max(-T::one()).min(T::one());
    let value = center - T::lit(0.25) * (left - right) * offset;
    (offset, value)
}

pub fn check_increasing<T: Real>(grid: &[T], what: &str) -> Result<()> {
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return domain(format!("{what} is not strictly increasing at index {}", i + 1));
    }
    Ok(())
}

/// Uniform grid `start, start + step, …` up to and including `end` (within
/// half a step).
pub fn uniform_grid<T: Real>(start: T, end: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !(end >= start) {
        return domain(format!("invalid grid [{start}, {end}] with step {step}"));
    }
    let n = ((end - start) / step + T::lit(0.5)).floor().to_usize().unwrap_or(0);
    Ok((0..=n).map(|i| start + T::from_count(i) * step).collect())
}

/// Deterministic pairwise summation.
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        n if n <= 8 => values.iter().fold(T::zero(), |a, &b| a + b),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Linear interpolation of (xs, ys) at `x`; `None` outside the sampled range.
pub fn interpolate<T: Real>(xs: &[T], ys: &[T], x: T) -> Option<T> {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Some(ys[0]);
    }
    if i >= xs.len() {
        return Some(ys[xs.len() - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    Some(ys[i - 1] + w * (ys[i] - ys[i - 1]))
}
