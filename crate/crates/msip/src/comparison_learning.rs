//! Step 1: weighted regression in comparison space, the confidence set 𝒬_k,
//! comparison bonuses, and the self-normalized weights w₁ and w₂.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{add_outer, min_eigenvector, quad, ridge_solve, Gram};
use crate::model::{dot, LinkFunction, LinkKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("regularized system is singular (regularizer must be positive)")]
    Singular,
    #[error("confidence level δ must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("parameter out of range: {0}")]
    BadParameter(String),
}

// ── Weighted datasets ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<P> {
    pub payload: P,
    pub episode: usize,
    /// 1/p when retained by filtering with probability p, else 1.
    pub multiplicity: f64,
    /// History-measurable regression weight in (0, 1].
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset<P> {
    pub samples: Vec<Sample<P>>,
}

impl<P> Default for WeightedDataset<P> {
    fn default() -> Self {
        Self { samples: Vec::new() }
    }
}

impl<P> WeightedDataset<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, payload: P, episode: usize, weight: f64) {
        self.samples.push(Sample { payload, episode, multiplicity: 1.0, weight });
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Multiset size Σ multiplicity.
    pub fn mass(&self) -> f64 {
        self.samples.iter().map(|s| s.multiplicity).sum()
    }

    pub fn mean_weight(&self) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        self.samples.iter().map(|s| s.weight).sum::<f64>() / self.samples.len() as f64
    }
}

/// A comparison sample: x = φ_R(τ) − φ_R(τ₀) and the averaged label f̄.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPayload {
    pub x: Vec<f64>,
    pub label: f64,
}

pub type ComparisonData = WeightedDataset<ComparisonPayload>;

// ── Fitting ──

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub const GN_MAX_ITERS: usize = 50;
pub const GN_GRAD_TOL: f64 = 1e-10;

/// θ̂_R minimizing α‖θ‖² + Σ M·w·m·(σ(⟨x, θ⟩) − f̄)².
pub fn fit_reward(data: &ComparisonData, dim: usize, sources: usize, link: LinkFunction, alpha: f64) -> Result<FitOutcome, LearnError> {
    if data.is_empty() {
        return Ok(FitOutcome { theta: vec![0.0; dim], converged: true, iterations: 0 });
    }
    let scale = sources as f64;
    match link.kind {
        LinkKind::ClippedLinear => {
            let rows = data.samples.iter().map(|s| (&s.payload.x[..], s.payload.label - 0.5, scale * s.weight * s.multiplicity));
            let theta = ridge_solve(dim, alpha, rows).ok_or(LearnError::Singular)?;
            Ok(FitOutcome { theta, converged: true, iterations: 1 })
        }
        LinkKind::Logistic => gauss_newton(data, dim, scale, link, alpha),
    }
}

fn objective(data: &ComparisonData, theta: &[f64], scale: f64, link: LinkFunction, alpha: f64) -> f64 {
    let reg = alpha * dot(theta, theta);
    reg + data
        .samples
        .iter()
        .map(|s| {
            let r = link.value(dot(&s.payload.x, theta)) - s.payload.label;
            scale * s.weight * s.multiplicity * r * r
        })
        .sum::<f64>()
}

fn gauss_newton(data: &ComparisonData, dim: usize, scale: f64, link: LinkFunction, alpha: f64) -> Result<FitOutcome, LearnError> {
    let mut theta = vec![0.0; dim];
    let mut value = objective(data, &theta, scale, link, alpha);
    for it in 0..GN_MAX_ITERS {
        let mut grad: Vec<f64> = theta.iter().map(|t| 2.0 * alpha * t).collect();
        let mut hess = DMatrix::identity(dim, dim) * (2.0 * alpha);
        for s in &data.samples {
            let z = dot(&s.payload.x, &theta);
            let r = link.value(z) - s.payload.label;
            let ds = link.derivative(z);
            let c = scale * s.weight * s.multiplicity;
            for (g, xi) in grad.iter_mut().zip(&s.payload.x) {
                *g += 2.0 * c * r * ds * xi;
            }
            let j: Vec<f64> = s.payload.x.iter().map(|xi| ds * xi).collect();
            add_outer(&mut hess, &j, 2.0 * c);
        }
        if dot(&grad, &grad).sqrt() <= GN_GRAD_TOL {
            return Ok(FitOutcome { theta, converged: true, iterations: it });
        }
        let step = hess.cholesky().ok_or(LearnError::Singular)?.solve(&nalgebra::DVector::from_vec(grad));
        // Halve the step until the objective decreases.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a - t * b).collect();
            let v = objective(data, &cand, scale, link, alpha);
            if v < value {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent possible at machine precision: treat as stationary.
            return Ok(FitOutcome { theta, converged: true, iterations: it + 1 });
        }
    }
    log::warn!("gauss-newton stopped after {GN_MAX_ITERS} iterations without meeting the gradient tolerance");
    Ok(FitOutcome { theta, converged: false, iterations: GN_MAX_ITERS })
}

// ── Confidence set and bonuses ──

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfidence {
    pub theta_hat: Vec<f64>,
    /// Σ_k = α^R I + Σ w·m·x xᵀ.
    pub gram: Gram,
    pub beta: f64,
}

impl ComparisonConfidence {
    pub fn build(theta_hat: Vec<f64>, data: &ComparisonData, alpha: f64, beta: f64) -> Result<Self, LearnError> {
        let dim = theta_hat.len();
        let gram = Gram::build(dim, alpha, data.samples.iter().map(|s| (&s.payload.x[..], s.weight * s.multiplicity)))
            .ok_or(LearnError::Singular)?;
        Ok(Self { theta_hat, gram, beta })
    }

    /// Symmetric width b̄^R = min(1, √β ‖x‖_{Σ⁻¹}).
    pub fn width(&self, x: &[f64]) -> f64 {
        (self.beta.max(0.0).sqrt() * self.gram.inv_norm_sq(x).sqrt()).min(1.0)
    }
}

/// One-sided bonus w₂ · min(1, √β ‖x‖_{Σ⁻¹}).
pub fn comparison_bonus(conf: &ComparisonConfidence, x: &[f64], w2: f64) -> f64 {
    w2 * conf.width(x)
}

/// Σ w·m·(q_{θ*} − q_{θ̂})² over the stored pairs.
pub fn cpl_to(conf: &ComparisonConfidence, theta: &[f64], data: &ComparisonData, link: LinkFunction) -> f64 {
    data.samples
        .iter()
        .map(|s| {
            let d = link.value(dot(&s.payload.x, theta)) - link.value(dot(&s.payload.x, &conf.theta_hat));
            s.weight * s.multiplicity * d * d
        })
        .sum()
}

pub fn contains_truth(conf: &ComparisonConfidence, theta_star: &[f64], data: &ComparisonData, link: LinkFunction) -> bool {
    cpl_to(conf, theta_star, data, link) <= conf.beta
}

// ── Confidence radius ──

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaRInputs {
    pub k: usize,
    /// K, the episode budget (γ_R = 1/K by default).
    pub episodes: usize,
    pub sources: usize,
    pub omega_bar: f64,
    pub n_k: f64,
    pub w2_inv: f64,
    pub cover_log: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub lambda_r: f64,
    pub c_filt: f64,
    pub gamma_r: Option<f64>,
}

/// C_R(k, ω, M, δ) = 2(ω² + k/(2M) + (3/(4M)) ln(2/δ)).
pub fn c_r(k: usize, omega: f64, sources: usize, delta: f64) -> f64 {
    let m = sources as f64;
    2.0 * (omega * omega + k as f64 / (2.0 * m) + 3.0 / (4.0 * m) * (2.0 / delta).ln())
}

pub fn beta_r(p: &BetaRInputs) -> Result<f64, LearnError> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(LearnError::BadDelta(p.delta));
    }
    let vals = [p.omega_bar, p.n_k, p.w2_inv, p.cover_log, p.epsilon, p.lambda_r, p.c_filt];
    if vals.iter().any(|v| !v.is_finite() || *v < 0.0) || p.sources == 0 || p.episodes == 0 {
        return Err(LearnError::BadParameter("β_R inputs must be finite and non-negative".into()));
    }
    let m = p.sources as f64;
    let eta_sq = 1.0 / (4.0 * m);
    let gamma = p.gamma_r.unwrap_or(1.0 / p.episodes as f64);
    let cr = c_r(p.k, p.omega_bar, p.sources, p.delta);
    Ok(p.lambda_r
        + 10.0 * eta_sq * p.cover_log
        + 5.0 * p.omega_bar * (2.0 * p.w2_inv + gamma)
        + 10.0 * gamma * (gamma * p.n_k + (p.n_k * cr).sqrt())
        + p.c_filt * p.episodes as f64 * p.epsilon)
}

/// Default cover log L_T = d̃_T ln(3K²).
pub fn default_cover_log(dim: usize, episodes: usize) -> f64 {
    let k = episodes.max(1) as f64;
    dim as f64 * (3.0 * k * k).ln()
}

// ── Self-normalized weights ──

/// Tracks the prefix normalizer for [Υ]_{≥1}^{−1/2} weights. Υ_i is the sup,
/// over the confidence ellipsoid available when sample i arrived, of the
/// directional discrepancy Δ_i / (λ D_prefix). In the linear region that sup
/// is xᵀ(αΣ/β + A_i)⁻¹x / λ with A_i = Σ_{j<i} x_j x_jᵀ/[Υ_j]^{1/2}; since the
/// predictors live in a bounded range, Δ_i ≤ `range_sq` caps it at range_sq/(λα).
#[derive(Debug, Clone)]
pub struct SelfNormalizedWeights {
    alpha: f64,
    lambda: f64,
    range_sq: f64,
    prefix: DMatrix<f64>,
    upsilon: Vec<f64>,
}

impl SelfNormalizedWeights {
    pub fn new(dim: usize, alpha: f64, lambda: f64, range_sq: f64) -> Self {
        Self { alpha, lambda, range_sq, prefix: DMatrix::zeros(dim, dim), upsilon: Vec::new() }
    }

    pub fn upsilon_history(&self) -> &[f64] {
        &self.upsilon
    }

    /// Υ for a new sample with feature `x`, against the set (`gram`, `beta`).
    pub fn upsilon(&self, x: &[f64], gram: &Gram, beta: f64) -> f64 {
        let cap = self.range_sq / (self.lambda * self.alpha);
        if beta <= 0.0 {
            return 0.0;
        }
        let m = &gram.matrix * (self.alpha / beta) + &self.prefix;
        let lin = match m.cholesky() {
            Some(ch) => quad(&ch.inverse(), x) / self.lambda,
            None => f64::INFINITY,
        };
        lin.min(cap)
    }

    /// Computes w = [Υ]_{≥1}^{−1/2} for the next sample and appends it to the prefix.
    pub fn next_weight(&mut self, x: &[f64], gram: &Gram, beta: f64) -> (f64, f64) {
        let ups = self.upsilon(x, gram, beta);
        let w = weight_from_upsilon(ups);
        add_outer(&mut self.prefix, x, w);
        self.upsilon.push(ups);
        (w, ups)
    }
}

pub fn weight_from_upsilon(ups: f64) -> f64 {
    1.0 / ups.max(1.0).sqrt()
}

/// Boundary point θ̂ + √β v/‖v‖_Σ along the top eigendirection of Σ⁻¹.
pub fn boundary_point(theta_hat: &[f64], gram: &Gram, beta: f64) -> Vec<f64> {
    let v = min_eigenvector(&gram.matrix);
    let n = quad(&gram.matrix, &v).sqrt();
    let s = if n > 0.0 { beta.max(0.0).sqrt() / n } else { 0.0 };
    theta_hat.iter().zip(&v).map(|(t, vi)| t + s * vi).collect()
}

/// w₂ = ½ [D₂(R′, R̂, N+1)]_{≥1}^{−1/2} with D₂ = α + Σ m·w·Δ_j(R′, R̂).
pub fn w2_weight(theta_hat: &[f64], gram: &Gram, beta: f64, data: &ComparisonData, link: LinkFunction, alpha: f64) -> f64 {
    let prime = boundary_point(theta_hat, gram, beta);
    let d2 = alpha
        + data
            .samples
            .iter()
            .map(|s| {
                let d = link.value(dot(&s.payload.x, &prime)) - link.value(dot(&s.payload.x, theta_hat));
                s.multiplicity * s.weight * d * d
            })
            .sum::<f64>();
    0.5 / d2.max(1.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[(Vec<f64>, f64)]) -> ComparisonData {
        let mut d = ComparisonData::new();
        for (i, (x, f)) in rows.iter().enumerate() {
            d.push(ComparisonPayload { x: x.clone(), label: *f }, i + 1, 1.0);
        }
        d
    }

    #[test]
    fn empty_fit_is_regularizer_center() {
        let f = fit_reward(&ComparisonData::new(), 3, 4, LinkFunction::CLIPPED, 1.0).unwrap();
        assert_eq!(f.theta, vec![0.0; 3]);
    }

    #[test]
    fn single_sample_hand_solution() {
        let d = data(&[(vec![1.0, 0.0], 0.7)]);
        let f = fit_reward(&d, 2, 1, LinkFunction::CLIPPED, 1.0).unwrap();
        // Independent scalar minimization of θ² + (0.2 − θ)² by golden section.
        let obj = |t: f64| t * t + (0.5 + t - 0.7) * (0.5 + t - 0.7);
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if obj(a) < obj(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        assert!((f.theta[0] - 0.1).abs() < 1e-12);
        assert!((f.theta[0] - 0.5 * (lo + hi)).abs() < 1e-9);
        assert_eq!(f.theta[1], 0.0);
    }

    #[test]
    fn orthogonal_samples_decouple() {
        let d = data(&[(vec![1.0, 0.0], 0.9), (vec![0.0, 0.5], 0.2)]);
        let f = fit_reward(&d, 2, 2, LinkFunction::CLIPPED, 1.0).unwrap();
        // Per coordinate: (α + M x²) θ = M x (f − 1/2).
        assert!((f.theta[0] - 2.0 * 0.4 / 3.0).abs() < 1e-12);
        assert!((f.theta[1] - 2.0 * 0.5 * -0.3 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn logistic_fit_converges_on_consistent_data() {
        let d = data(&[(vec![1.0], 0.6), (vec![1.0], 0.6), (vec![-1.0], 0.4)]);
        let f = fit_reward(&d, 1, 1, LinkFunction::LOGISTIC, 1e-6).unwrap();
        assert!(f.converged);
        assert!((LinkFunction::LOGISTIC.value(f.theta[0]) - 0.6).abs() < 1e-5);
    }

    #[test]
    fn bonus_points() {
        let conf = ComparisonConfidence { theta_hat: vec![0.0; 3], gram: Gram::ridge(3, 1.0), beta: 1.0 };
        assert_eq!(comparison_bonus(&conf, &[0.0; 3], 1.0), 0.0);
        assert!((comparison_bonus(&conf, &[0.3, 0.0, 0.0], 1.0) - 0.3).abs() < 1e-15);
        let zero = ComparisonConfidence { beta: 0.0, ..conf };
        assert_eq!(comparison_bonus(&zero, &[0.3, 0.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn beta_r_surviving_terms() {
        let base = BetaRInputs {
            k: 1,
            episodes: 100,
            sources: 4,
            omega_bar: 0.0,
            n_k: 0.0,
            w2_inv: 2.0,
            cover_log: 7.0,
            epsilon: 0.0,
            delta: 0.1,
            lambda_r: 1.0,
            c_filt: 1.0,
            gamma_r: None,
        };
        assert!((beta_r(&base).unwrap() - (1.0 + 10.0 * 7.0 / 16.0)).abs() < 1e-12);
        let doubled = BetaRInputs { sources: 8, ..base };
        let t4 = beta_r(&base).unwrap() - 1.0;
        let t8 = beta_r(&doubled).unwrap() - 1.0;
        assert!((t4 - 2.0 * t8).abs() < 1e-12);
        assert!(matches!(beta_r(&BetaRInputs { delta: 1.0, ..base }), Err(LearnError::BadDelta(_))));
    }

    #[test]
    fn first_sample_weight_is_one_at_defaults() {
        let mut w = SelfNormalizedWeights::new(2, 1.0, 1.0, 1.0);
        let (wt, ups) = w.next_weight(&[1.0, 1.0], &Gram::ridge(2, 1.0), 50.0);
        assert!(ups <= 1.0 + 1e-15);
        assert_eq!(wt, 1.0);
        assert_eq!(weight_from_upsilon(4.0), 0.5);
    }

    #[test]
    fn upsilon_matches_brute_force_in_linear_region() {
        // Small radius keeps the ellipsoid inside the linear region; compare
        // the closed form with a sweep of boundary directions.
        let mut w = SelfNormalizedWeights::new(2, 1.0, 1.0, 1e9);
        let gram = Gram::build(2, 1.0, [(&[1.0, 0.5][..], 1.0), (&[0.0, 1.0][..], 2.0)]).unwrap();
        let beta = 0.04;
        w.next_weight(&[0.3, 0.8], &gram, beta);
        let x = [0.7, -0.2];
        let closed = w.upsilon(&x, &gram, beta);
        let prefix = {
            let mut m = DMatrix::zeros(2, 2);
            add_outer(&mut m, &[0.3, 0.8], weight_from_upsilon(w.upsilon_history()[0]));
            m
        };
        let mut best: f64 = 0.0;
        for i in 0..20_000 {
            let ang = i as f64 / 20_000.0 * std::f64::consts::TAU;
            let u = [ang.cos(), ang.sin()];
            let s = (beta / quad(&gram.matrix, &u)).sqrt();
            let u = [u[0] * s, u[1] * s];
            let delta = dot(&x, &u).powi(2);
            best = best.max(delta / (1.0 + quad(&prefix, &u)));
        }
        assert!((closed - best).abs() < 1e-6 * closed.max(1e-12));
    }
}
