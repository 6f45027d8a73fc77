//! Discrete probability measures on Euclidean space and couplings between them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math::kahan_sum;

/// A point of `R^d`, stored as its coordinate vector.
pub type Point = Vec<f64>;

/// Relative slack within which raw weights are silently renormalized.
pub const RENORMALIZE_SLACK: f64 = 1e-6;
/// Tolerance on the total mass of a coupling.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on each reconstructed marginal weight of a coupling.
pub const MARGINAL_TOL: f64 = 1e-10;

fn cmp_coords(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Weighted point cloud: the representation of every marginal and quantizer.
///
/// Construction drops zero weights, merges duplicate points (keeping the
/// position of their first occurrence) and renormalizes weights whose sum is
/// within [`RENORMALIZE_SLACK`] of one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    /// Builds a measure from row-major coordinates (`weights.len() * dim` entries).
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("points must have dimension >= 1".into()));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not describe {} points of dimension {}",
                coords.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite coordinate {c}")));
        }
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMeasure(format!("invalid weight {w}")));
            }
        }
        let n = weights.len();
        // Group identical points; each group is represented by its first occurrence.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            cmp_coords(&coords[a * dim..(a + 1) * dim], &coords[b * dim..(b + 1) * dim]).then(a.cmp(&b))
        });
        let mut rep = vec![usize::MAX; n];
        let mut k = 0;
        while k < n {
            let first = order[k];
            let mut j = k;
            while j < n
                && cmp_coords(
                    &coords[first * dim..(first + 1) * dim],
                    &coords[order[j] * dim..(order[j] + 1) * dim],
                ) == Ordering::Equal
            {
                rep[order[j]] = first;
                j += 1;
            }
            k = j;
        }
        let mut merged = vec![0.0; n];
        for i in 0..n {
            merged[rep[i]] += weights[i];
        }
        let mut out_coords = Vec::with_capacity(coords.len());
        let mut out_weights = Vec::with_capacity(n);
        for i in 0..n {
            if rep[i] == i && merged[i] > 0.0 {
                out_coords.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
                out_weights.push(merged[i]);
            }
        }
        if out_weights.is_empty() {
            return Err(Error::InvalidMeasure("measure has no positive weight".into()));
        }
        let total = kahan_sum(out_weights.iter().copied());
        if (total - 1.0).abs() > RENORMALIZE_SLACK {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        // sums already within rounding of one are kept, so renormalization is idempotent
        if (total - 1.0).abs() > out_weights.len() as f64 * f64::EPSILON {
            for w in &mut out_weights {
                *w /= total;
            }
        }
        Ok(Self {
            dim,
            coords: out_coords,
            weights: out_weights,
        })
    }

    /// Uniform measure on the given points (duplicates accumulate weight).
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Point) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Uniform measure on the midpoint grid of `[low, high]^d` with
    /// `n_per_axis` cells per axis, ordered row-major (last axis fastest).
    pub fn uniform_grid(d: usize, n_per_axis: usize, low: f64, high: f64) -> Result<Self> {
        if d == 0 || n_per_axis == 0 || !(high > low) {
            return Err(Error::InvalidArgument(format!(
                "uniform_grid(d={d}, n={n_per_axis}, [{low}, {high}])"
            )));
        }
        let axis: Vec<f64> = (0..n_per_axis)
            .map(|k| low + (high - low) * (k as f64 + 0.5) / n_per_axis as f64)
            .collect();
        let total = n_per_axis.pow(d as u32);
        let mut coords = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for &i in &idx {
                coords.push(axis[i]);
            }
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < n_per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self::from_flat(d, coords, vec![1.0 / total as f64; total])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Point {
        let mut m = vec![0.0; self.dim];
        for (p, &w) in self.points().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        m
    }

    /// Index of the atom located exactly at `point`, if any.
    pub fn find(&self, point: &[f64]) -> Option<usize> {
        self.points().position(|p| p == point)
    }
}

/// Row-major shape of a product of finite supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductShape {
    dims: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl ProductShape {
    pub fn new(dims: Vec<usize>, limit: usize) -> Result<Self> {
        let mut size: usize = 1;
        for &d in &dims {
            size = size.checked_mul(d).filter(|&s| s <= limit).ok_or(Error::SizeLimitExceeded {
                what: "product support",
                size: dims.iter().fold(1usize, |a, &d| a.saturating_mul(d)),
                limit,
            })?;
        }
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        Ok(Self { dims, strides, size })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn component(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.dims[axis]
    }

    pub fn unflat(&self, mut flat: usize, out: &mut [usize]) {
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = flat / s;
            flat %= s;
        }
    }
}

/// Hard cap on dense product supports.
pub const PRODUCT_LIMIT: usize = 10_000_000;

/// A joint discrete measure whose atoms are index tuples into the supports of
/// `N` marginals. Atoms are kept sorted by their row-major flat index with
/// strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    marginals: Vec<DiscreteMeasure>,
    shape: ProductShape,
    keys: Vec<usize>,
    weights: Vec<f64>,
}

impl Coupling {
    /// Builds a coupling from index tuples and weights, validating that it
    /// reproduces the given marginals.
    pub fn new(marginals: Vec<DiscreteMeasure>, atoms: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let shape = Self::shape_of(&marginals)?;
        let mut flat = Vec::with_capacity(atoms.len());
        for (idx, w) in atoms {
            if idx.len() != shape.rank() {
                return Err(Error::DimensionMismatch {
                    expected: shape.rank(),
                    found: idx.len(),
                });
            }
            if idx.iter().zip(shape.dims()).any(|(i, d)| i >= d) {
                return Err(Error::InvariantViolation(format!("atom index {idx:?} out of range")));
            }
            flat.push((shape.flat(&idx), w));
        }
        Self::from_flat(marginals, flat)
    }

    /// Builds a coupling from `(flat index, weight)` pairs.
    pub fn from_flat(marginals: Vec<DiscreteMeasure>, mut atoms: Vec<(usize, f64)>) -> Result<Self> {
        let shape = Self::shape_of(&marginals)?;
        for &(k, w) in &atoms {
            if k >= shape.size() {
                return Err(Error::InvariantViolation(format!("flat index {k} out of range")));
            }
            if !w.is_finite() || w < -1e-13 {
                return Err(Error::InvariantViolation(format!("invalid atom weight {w}")));
            }
        }
        atoms.sort_by_key(|a| a.0);
        let mut keys: Vec<usize> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (k, w) in atoms {
            if keys.last() == Some(&k) {
                *weights.last_mut().unwrap() += w;
            } else {
                keys.push(k);
                weights.push(w);
            }
        }
        let mut j = 0;
        for i in 0..keys.len() {
            if weights[i] > 0.0 {
                keys[j] = keys[i];
                weights[j] = weights[i];
                j += 1;
            }
        }
        keys.truncate(j);
        weights.truncate(j);
        let c = Self {
            marginals,
            shape,
            keys,
            weights,
        };
        c.validate()?;
        Ok(c)
    }

    /// Builds a coupling from a dense row-major array over the product support.
    pub fn from_dense(marginals: Vec<DiscreteMeasure>, dense: &[f64]) -> Result<Self> {
        let atoms = dense
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| (k, w))
            .collect();
        Self::from_flat(marginals, atoms)
    }

    fn shape_of(marginals: &[DiscreteMeasure]) -> Result<ProductShape> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument("a coupling needs at least one marginal".into()));
        }
        ProductShape::new(marginals.iter().map(|m| m.len()).collect(), PRODUCT_LIMIT)
    }

    fn validate(&self) -> Result<()> {
        let total = kahan_sum(self.weights.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvariantViolation(format!("coupling mass {total} != 1")));
        }
        let err = self.max_marginal_error();
        if err > MARGINAL_TOL {
            return Err(Error::InvariantViolation(format!("marginal reconstruction error {err:e}")));
        }
        Ok(())
    }

    pub fn marginals(&self) -> &[DiscreteMeasure] {
        &self.marginals
    }

    pub fn marginal(&self, i: usize) -> &DiscreteMeasure {
        &self.marginals[i]
    }

    pub fn n_marginals(&self) -> usize {
        self.marginals.len()
    }

    pub fn shape(&self) -> &ProductShape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[usize] {
        &self.keys
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Index into marginal `axis` of atom `k`.
    pub fn index(&self, k: usize, axis: usize) -> usize {
        self.shape.component(self.keys[k], axis)
    }

    pub fn indices(&self, k: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.rank()];
        self.shape.unflat(self.keys[k], &mut out);
        out
    }

    /// Iterator over `(index tuple, weight)`.
    pub fn atoms(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        (0..self.len()).map(move |k| (self.indices(k), self.weights[k]))
    }

    /// Weight reconstructed for marginal `axis` by summing atoms.
    pub fn marginal_weights(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.dims()[axis]];
        for (k, &w) in self.weights.iter().enumerate() {
            out[self.index(k, axis)] += w;
        }
        out
    }

    pub fn max_marginal_error(&self) -> f64 {
        (0..self.n_marginals())
            .map(|i| {
                self.marginal_weights(i)
                    .iter()
                    .zip(self.marginals[i].weights())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Concatenated coordinates of atom `k` (a point of the product space).
    pub fn joint_point(&self, k: usize) -> Point {
        let mut p = Vec::new();
        for (i, m) in self.marginals.iter().enumerate() {
            p.extend_from_slice(m.point(self.index(k, i)));
        }
        p
    }

    /// The coupling viewed as a measure on the product space.
    pub fn to_joint_measure(&self) -> Result<DiscreteMeasure> {
        let dim: usize = self.marginals.iter().map(|m| m.dim()).sum();
        let mut coords = Vec::with_capacity(self.len() * dim);
        for k in 0..self.len() {
            for (i, m) in self.marginals.iter().enumerate() {
                coords.extend_from_slice(m.point(self.index(k, i)));
            }
        }
        DiscreteMeasure::from_flat(dim, coords, self.weights.clone())
    }

    /// Dense row-major array of atom weights over the full product support.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.size()];
        for (&k, &w) in self.keys.iter().zip(&self.weights) {
            out[k] = w;
        }
        out
    }

    /// Weight of the product reference measure at atom `k`.
    pub fn product_weight(&self, k: usize) -> f64 {
        (0..self.n_marginals())
            .map(|i| self.marginals[i].weight(self.index(k, i)))
            .product()
    }

    /// Coupling given by `(id, id)_# mu`.
    pub fn diagonal(mu: &DiscreteMeasure) -> Result<Self> {
        let atoms = (0..mu.len()).map(|i| (vec![i, i], mu.weight(i))).collect();
        Self::new(vec![mu.clone(), mu.clone()], atoms)
    }
}

/// The product coupling `mu_1 ⊗ ... ⊗ mu_N`.
pub fn product_measure(marginals: &[DiscreteMeasure]) -> Result<Coupling> {
    let shape = ProductShape::new(marginals.iter().map(|m| m.len()).collect(), PRODUCT_LIMIT)?;
    let dense = product_weights(marginals, &shape);
    Coupling::from_dense(marginals.to_vec(), &dense)
}

/// Dense product weights over `shape` (which must match the marginals).
pub fn product_weights(marginals: &[DiscreteMeasure], shape: &ProductShape) -> Vec<f64> {
    let mut out = vec![1.0; shape.size()];
    for (m, &stride) in marginals.iter().zip(shape.strides()) {
        let block = stride * m.len();
        for (k, w) in out.iter_mut().enumerate() {
            *w *= m.weight((k % block) / stride);
        }
    }
    out
}
