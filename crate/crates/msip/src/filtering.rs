//! Step 4: sub-importance scores and randomized filtering of the weighted
//! histories. For linear predictors the sensitivity is the ridge leverage score.

use rand::Rng;

use crate::comparison_learning::{Sample, WeightedDataset};
use crate::linalg::Gram;
use crate::model::dot;

/// G_λ = λI + Σ w·x xᵀ over the raw samples.
pub fn leverage_gram<'a, I>(dim: usize, lambda: f64, rows: I) -> Gram
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    Gram::build(dim, lambda, rows).expect("λ > 0 keeps the Gram matrix positive definite")
}

/// min{1, w(z)·‖x_z‖²_{G_λ⁻¹}} for every sample.
pub fn sensitivities(xs: &[&[f64]], weights: &[f64], lambda: f64) -> Vec<f64> {
    assert!(lambda > 0.0, "λ must be positive");
    let Some(first) = xs.first() else { return Vec::new() };
    let gram = leverage_gram(first.len(), lambda, xs.iter().copied().zip(weights.iter().copied()));
    xs.iter().zip(weights).map(|(x, w)| (w * gram.inv_norm_sq(x)).min(1.0)).collect()
}

/// p(z) = min{1, c·Imp(z)/ε²}.
pub fn inclusion_probability(imp: f64, eps: f64, c: f64) -> f64 {
    if eps <= 0.0 {
        return 1.0;
    }
    (c * imp / (eps * eps)).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub lambda: f64,
    pub eps: f64,
    pub c: f64,
}

/// Keeps each raw sample independently with probability p(z), at multiplicity
/// 1/p(z). Certain inclusions and exclusions consume no randomness.
pub fn filter<P, F, R>(raw: &WeightedDataset<P>, features: F, params: FilterParams, rng: &mut R) -> WeightedDataset<P>
where
    P: Clone,
    F: Fn(&P) -> &[f64],
    R: Rng + ?Sized,
{
    let xs: Vec<&[f64]> = raw.samples.iter().map(|s| features(&s.payload)).collect();
    let ws: Vec<f64> = raw.samples.iter().map(|s| s.weight).collect();
    let imps = sensitivities(&xs, &ws, params.lambda);
    let mut out = WeightedDataset::new();
    for (sample, imp) in raw.samples.iter().zip(imps) {
        let p = inclusion_probability(imp, params.eps, params.c);
        let keep = if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            rng.gen::<f64>() < p
        };
        if keep {
            out.samples.push(Sample { multiplicity: 1.0 / p.min(1.0), ..sample.clone() });
        }
    }
    out
}

/// Σ w·m·⟨x, δ⟩², the squared seminorm ‖f − g‖² of the predictor difference δ.
pub fn weighted_form<P, F>(data: &WeightedDataset<P>, features: F, delta: &[f64]) -> f64
where
    F: Fn(&P) -> &[f64],
{
    data.samples
        .iter()
        .map(|s| {
            let v = dot(features(&s.payload), delta);
            s.weight * s.multiplicity * v * v
        })
        .sum()
}
