//! Finite metric spaces, probability measures on them, cost matrices, and
//! multinomial sampling of empirical measures.
//!
//! All types are immutable after construction and safe to share across
//! threads. Sampling routines are deterministic given their seed.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Absolute tolerance on the total mass of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A finite set of support points in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpace {
    points: Vec<Vec<f64>>,
}

impl FiniteSpace {
    /// Builds a space from explicit coordinates. Points must be nonempty,
    /// share a dimension, and be pairwise distinct.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "space must contain at least one point".into(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput(
                "points must have dimension >= 1".into(),
            ));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(
                    "point coordinates must be finite".into(),
                ));
            }
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&i, &j| {
            points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::InvalidInput(
                    "support points must be distinct".into(),
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Regular grid of `p^d` points at integer coordinates `(1..=p)^d`,
/// enumerated in row-major order (last coordinate varies fastest).
///
/// Panics if `p == 0`, `d == 0`, or `p^d` overflows.
pub fn make_grid(p: usize, d: usize) -> FiniteSpace {
    assert!(p >= 1, "grid side must be at least 1");
    assert!(d >= 1, "grid dimension must be at least 1");
    let n = p.checked_pow(d as u32).expect("grid size overflows usize");
    let mut points = Vec::with_capacity(n);
    for idx in 0..n {
        let mut coords = vec![0.0; d];
        let mut rest = idx;
        for k in (0..d).rev() {
            coords[k] = (rest % p + 1) as f64;
            rest /= p;
        }
        points.push(coords);
    }
    FiniteSpace { points }
}

/// Pairwise costs `c_ij = d(x_i, x_j)^p` over a fixed space.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    exponent: f64,
}

impl CostMatrix {
    /// Wraps a user-supplied square matrix of nonnegative finite costs.
    pub fn new(entries: Array2<f64>, exponent: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::InvalidCost(format!(
                "cost matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidCost("cost matrix must be nonempty".into()));
        }
        if entries.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::InvalidCost(
                "costs must be finite and nonnegative".into(),
            ));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::InvalidCost("cost exponent must be positive".into()));
        }
        Ok(Self { entries, exponent })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Power applied to the underlying metric.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

/// Cost matrix with entries `‖x_i − x_j‖²` (squared Euclidean distance).
pub fn squared_euclidean_cost(space: &FiniteSpace) -> CostMatrix {
    let n = space.len();
    let mut entries = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let c: f64 = space.points[i]
                .iter()
                .zip(&space.points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            entries[[i, j]] = c;
            entries[[j, i]] = c;
        }
    }
    CostMatrix {
        entries,
        exponent: 2.0,
    }
}

/// A probability vector on the simplex over a fixed support of size `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates nonnegativity and total mass 1 within [`SIMPLEX_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure(
                "weight vector must be nonempty".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidMeasure(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights must sum to 1 within {SIMPLEX_TOL:.0e}, got {total}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }
}

/// Uniform distribution on `n` points.
///
/// Panics if `n == 0`.
pub fn uniform_measure(n: usize) -> DiscreteMeasure {
    assert!(n >= 1, "measure needs at least one support point");
    DiscreteMeasure {
        weights: vec![1.0 / n as f64; n],
    }
}

/// Distribution proportional to `1 + θ·i` over indices `i = 1..=n`.
/// With `θ = 0` this is the uniform distribution.
///
/// Panics if `n == 0` or `θ < 0`.
pub fn linear_trend_measure(n: usize, theta: f64) -> DiscreteMeasure {
    assert!(n >= 1, "measure needs at least one support point");
    assert!(
        theta >= 0.0 && theta.is_finite(),
        "slope must be nonnegative"
    );
    let nf = n as f64;
    let norm = nf + theta * nf * (nf + 1.0) / 2.0;
    let weights = (1..=n).map(|i| (1.0 + theta * i as f64) / norm).collect();
    DiscreteMeasure { weights }
}

/// Entrywise average of measures sharing a support.
pub fn euclidean_barycenter(measures: &[DiscreteMeasure]) -> Result<DiscreteMeasure> {
    let first = measures
        .first()
        .ok_or_else(|| Error::InvalidInput("barycenter of an empty list".into()))?;
    let n = first.len();
    let mut weights = vec![0.0; n];
    for m in measures {
        if m.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.len(),
            });
        }
        for (w, &x) in weights.iter_mut().zip(m.weights()) {
            *w += x;
        }
    }
    let k = measures.len() as f64;
    for w in &mut weights {
        *w /= k;
    }
    DiscreteMeasure::new(weights)
}

/// An observed frequency vector: `counts / sample_size` over the support.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    counts: Vec<u64>,
    sample_size: u64,
    weights: DiscreteMeasure,
}

impl EmpiricalMeasure {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let sample_size: u64 = counts.iter().sum();
        if sample_size == 0 {
            return Err(Error::InvalidMeasure(
                "empirical measure needs at least one observation".into(),
            ));
        }
        let n = sample_size as f64;
        let weights = DiscreteMeasure::new(counts.iter().map(|&c| c as f64 / n).collect())?;
        Ok(Self {
            counts,
            sample_size,
            weights,
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The empirical frequencies as a probability measure.
    pub fn as_measure(&self) -> &DiscreteMeasure {
        &self.weights
    }
}

/// Draws `counts ~ Multinomial(n, a)` deterministically from `seed`.
///
/// Panics if `n == 0`.
pub fn sample_empirical(a: &DiscreteMeasure, n: u64, seed: u64) -> EmpiricalMeasure {
    assert!(n >= 1, "sample size must be at least 1");
    let mut rng = rng_for(seed, 0);
    sample_empirical_with_rng(a, n, &mut rng)
}

pub(crate) fn sample_empirical_with_rng<R: Rng + ?Sized>(
    a: &DiscreteMeasure,
    n: u64,
    rng: &mut R,
) -> EmpiricalMeasure {
    let counts = multinomial_counts(a.weights(), n, rng);
    EmpiricalMeasure::from_counts(counts).expect("multinomial counts sum to n >= 1")
}

/// Resamples `counts ~ Multinomial(n, â)` with the same sample size,
/// deterministically from `seed`.
pub fn bootstrap_resample(m: &EmpiricalMeasure, seed: u64) -> EmpiricalMeasure {
    let mut rng = rng_for(seed, 0);
    bootstrap_resample_with_rng(m, &mut rng)
}

pub(crate) fn bootstrap_resample_with_rng<R: Rng + ?Sized>(
    m: &EmpiricalMeasure,
    rng: &mut R,
) -> EmpiricalMeasure {
    sample_empirical_with_rng(m.as_measure(), m.sample_size(), rng)
}

/// Multinomial draw by the conditional-binomial decomposition, O(N) per draw.
fn multinomial_counts<R: Rng + ?Sized>(weights: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; weights.len()];
    let last = match weights.iter().rposition(|&w| w > 0.0) {
        Some(i) => i,
        None => return counts,
    };
    let mut remaining = n;
    let mut mass_left = 1.0_f64;
    for (i, &w) in weights.iter().enumerate().take(last) {
        if remaining == 0 {
            return counts;
        }
        if w <= 0.0 {
            continue;
        }
        let p = if mass_left > 0.0 {
            (w / mass_left).min(1.0)
        } else {
            1.0
        };
        let draw = Binomial::new(remaining, p)
            .expect("binomial probability clamped to [0, 1]")
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass_left = (mass_left - w).max(0.0);
    }
    counts[last] += remaining;
    counts
}

/// Neumaier compensated sum; keeps the simplex check sharp for large `N`.
fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    n_points: usize,
    weights: Vec<f64>,
}

impl Serialize for DiscreteMeasure {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        MeasureRepr {
            n_points: self.len(),
            weights: self.weights.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(deserializer)?;
        if repr.weights.len() != repr.n_points {
            return Err(serde::de::Error::custom(format!(
                "n_points = {} does not match {} weights",
                repr.n_points,
                repr.weights.len()
            )));
        }
        DiscreteMeasure::new(repr.weights).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct EmpiricalRepr {
    n_points: usize,
    weights: Vec<f64>,
    counts: Vec<u64>,
    sample_size: u64,
}

impl Serialize for EmpiricalMeasure {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        EmpiricalRepr {
            n_points: self.len(),
            weights: self.weights.weights().to_vec(),
            counts: self.counts.clone(),
            sample_size: self.sample_size,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EmpiricalMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = EmpiricalRepr::deserialize(deserializer)?;
        if repr.counts.len() != repr.n_points {
            return Err(serde::de::Error::custom(format!(
                "n_points = {} does not match {} counts",
                repr.n_points,
                repr.counts.len()
            )));
        }
        let total: u64 = repr.counts.iter().sum();
        if total != repr.sample_size {
            return Err(serde::de::Error::custom(format!(
                "counts sum to {total}, expected sample_size {}",
                repr.sample_size
            )));
        }
        let m = EmpiricalMeasure::from_counts(repr.counts).map_err(serde::de::Error::custom)?;
        if repr.weights.len() != repr.n_points {
            return Err(serde::de::Error::custom("weights length mismatch"));
        }
        for (stored, recomputed) in repr.weights.iter().zip(m.as_measure().weights()) {
            if (stored - recomputed).abs() > 1e-9 {
                return Err(serde::de::Error::custom(
                    "stored weights are inconsistent with counts / sample_size",
                ));
            }
        }
        Ok(m)
    }
}
