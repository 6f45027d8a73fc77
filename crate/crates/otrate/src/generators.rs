//! Discretized continuous marginals and small synthetic measures.

use statrs::distribution::{ContinuousCDF, Normal};

use otrate_core::{DiscreteMeasure, Error};

use crate::error::HarnessResult;

/// Uniform weights on the midpoint grid of `[low, high]^d`.
pub fn uniform_grid(d: usize, n_per_axis: usize, low: f64, high: f64) -> HarnessResult<DiscreteMeasure> {
    Ok(DiscreteMeasure::uniform_grid(d, n_per_axis, low, high)?)
}

/// Product of `d` copies of the equal-mass quantile grid of `N(mean, sd^2)`:
/// atom `k` of each axis sits at the quantile `(k + 1/2) / n`.
pub fn gaussian_grid(d: usize, n: usize, mean: f64, sd: f64) -> HarnessResult<DiscreteMeasure> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("gaussian_grid(d={d}, n={n})")).into());
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidArgument(format!("gaussian_grid: {e}")))?;
    let axis: Vec<f64> = (0..n)
        .map(|k| normal.inverse_cdf((k as f64 + 0.5) / n as f64))
        .collect();
    let total = n
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidArgument("gaussian_grid is too large".into()))?;
    let mut coords = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        coords.extend(idx.iter().map(|&i| axis[i]));
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(DiscreteMeasure::from_flat(d, coords, vec![1.0 / total as f64; total])?)
}

/// `p delta_x + (1 - p) delta_y`.
pub fn two_point(x: &[f64], y: &[f64], p: f64) -> HarnessResult<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("two_point weight {p} is outside [0, 1]")).into());
    }
    Ok(DiscreteMeasure::new(vec![x.to_vec(), y.to_vec()], vec![p, 1.0 - p])?)
}
