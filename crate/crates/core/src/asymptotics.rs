//! Gaussian limit laws for empirical divergences.
//!
//! For samples drawn multinomially from measures on a fixed support, the
//! centered empirical divergence converges to a mean-zero Gaussian whose
//! variance is a quadratic form of the dual potentials against the
//! multinomial covariance. This module builds those laws, the directional
//! derivative of the divergence, and samplers for the limiting variables.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::ser::SerializeStruct;

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::rng::rng_for;
use crate::sinkhorn::SinkhornSolution;

/// Covariance of the centered empirical frequency vector:
/// `Σ(a)_ii = a_i(1-a_i)`, `Σ(a)_ij = -a_i a_j`. Rows sum to zero and the
/// matrix annihilates constant vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialCovariance {
    matrix: Array2<f64>,
}

impl MultinomialCovariance {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }
}

pub fn multinomial_covariance(a: &DiscreteMeasure) -> MultinomialCovariance {
    let n = a.len();
    let w = a.weights();
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            matrix[[i, j]] = if i == j {
                w[i] * (1.0 - w[i])
            } else {
                -w[i] * w[j]
            };
        }
    }
    MultinomialCovariance { matrix }
}

/// Which empirical statistic the law describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LawKind {
    #[serde(rename = "one-sample")]
    OneSample,
    #[serde(rename = "two-sample")]
    TwoSample,
}

/// Mean-zero Gaussian limit of a centered empirical divergence.
///
/// `weight_a` holds the dual potential (the `λ log u` vector in the zero-sum
/// gauge) on the support of the sampled measure, zeros elsewhere; `weight_b`
/// and `gamma` are present for two-sample laws.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticLaw {
    pub kind: LawKind,
    pub variance: f64,
    pub weight_a: Vec<f64>,
    pub weight_b: Option<Vec<f64>>,
    pub gamma: Option<f64>,
}

impl serde::Serialize for AsymptoticLaw {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("AsymptoticLaw", 3)?;
        st.serialize_field("kind", &self.kind)?;
        st.serialize_field("variance", &self.variance)?;
        st.serialize_field("gamma", &self.gamma)?;
        st.end()
    }
}

/// Quadratic form `wᵀ Σ(a) w`, i.e. the a-weighted variance of `w`.
/// Gauge-invariant: adding a constant to `w` does not change it.
pub(crate) fn covariance_quadratic_form(w: &[f64], a: &DiscreteMeasure) -> f64 {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (&wi, &ai) in w.iter().zip(a.weights()) {
        mean += ai * wi;
        second += ai * wi * wi;
    }
    (second - mean * mean).max(0.0)
}

/// Limit law of the centered empirical divergence built from a converged
/// solution. Pass `two_sample = Some((b, γ))` with `γ ∈ (0, 1)` for the
/// two-sample scaling `ρ_{n,m}`; otherwise the one-sample `√n` law is built.
pub fn asymptotic_law(
    sol: &SinkhornSolution,
    a: &DiscreteMeasure,
    two_sample: Option<(&DiscreteMeasure, f64)>,
) -> Result<AsymptoticLaw> {
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_err: sol.marginal_err,
        });
    }
    if a.len() != sol.alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: sol.alpha.len(),
            got: a.len(),
        });
    }
    let mask = |pot: &[f64], m: &DiscreteMeasure| -> Vec<f64> {
        pot.iter()
            .zip(m.weights())
            .map(|(&p, &w)| if w > 0.0 { p } else { 0.0 })
            .collect()
    };
    let weight_a = mask(&sol.alpha, a);
    let var_a = covariance_quadratic_form(&weight_a, a);
    match two_sample {
        None => Ok(AsymptoticLaw {
            kind: LawKind::OneSample,
            variance: var_a,
            weight_a,
            weight_b: None,
            gamma: None,
        }),
        Some((b, gamma)) => {
            if b.len() != sol.beta.len() {
                return Err(Error::DimensionMismatch {
                    expected: sol.beta.len(),
                    got: b.len(),
                });
            }
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "gamma must lie in (0, 1), got {gamma}"
                )));
            }
            let weight_b = mask(&sol.beta, b);
            let var_b = covariance_quadratic_form(&weight_b, b);
            Ok(AsymptoticLaw {
                kind: LawKind::TwoSample,
                variance: gamma * var_a + (1.0 - gamma) * var_b,
                weight_a,
                weight_b: Some(weight_b),
                gamma: Some(gamma),
            })
        }
    }
}

/// Derivative of the divergence at the solved pair along simplex-tangent
/// directions `(h1, h2)`: `⟨α, h1⟩ + ⟨β, h2⟩`. The directions must sum to
/// zero, otherwise the dual gauge would enter the value.
pub fn directional_derivative(sol: &SinkhornSolution, h1: &[f64], h2: &[f64]) -> Result<f64> {
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_err: sol.marginal_err,
        });
    }
    let n = sol.alpha.len();
    if h1.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h1.len(),
        });
    }
    if h2.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h2.len(),
        });
    }
    for h in [h1, h2] {
        let sum: f64 = h.iter().sum();
        let scale: f64 = h.iter().map(|x| x.abs()).sum();
        if sum.abs() > 1e-9 * (1.0 + scale) {
            return Err(Error::NotTangent(sum));
        }
    }
    let da: f64 = sol.alpha.iter().zip(h1).map(|(a, h)| a * h).sum();
    let db: f64 = sol.beta.iter().zip(h2).map(|(b, h)| b * h).sum();
    Ok(da + db)
}

/// `count` iid draws from `N(0, law.variance)`, deterministic given `seed`.
pub fn sample_limit(law: &AsymptoticLaw, count: usize, seed: u64) -> Vec<f64> {
    if law.variance <= 0.0 {
        return vec![0.0; count];
    }
    let normal = Normal::new(0.0, law.variance.sqrt()).expect("positive standard deviation");
    let mut rng = rng_for(seed, 0);
    (0..count).map(|_| normal.sample(&mut rng)).collect()
}

/// Two-sample scaling `ρ_{n,m} = √(nm / (n + m))`.
pub fn rho(n: u64, m: u64) -> f64 {
    assert!(n >= 1 && m >= 1, "sample sizes must be at least 1");
    let (n, m) = (n as f64, m as f64);
    (n * m / (n + m)).sqrt()
}
