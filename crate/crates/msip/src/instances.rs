//! Hard-instance factories and random tiny instances.
//!
//! Every single-step instance appends a reference action with zero features,
//! played by π₀ and unavailable to the learner, so that p*(a) = σ(⟨θ*, φ(a)⟩).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Policy;
use crate::feedback::{DeviationSchedule, FeedbackError, FeedbackPanel, ScheduleKind};
use crate::model::{LinearInstance, LinkFunction, ModelError, RewardFeatures, RewardModel, TransitionModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("instance parameter out of range: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One state, `d` learner arms with the given features, plus the reference arm.
fn bandit(features: Vec<Vec<f64>>, theta: Vec<f64>, bound: f64) -> LinearInstance {
    let d = theta.len();
    let n_arms = features.len();
    let mut arms = features;
    arms.push(vec![0.0; d]);
    let n_actions = n_arms + 1;
    LinearInstance {
        n_states: 1,
        n_actions,
        horizon: 1,
        initial_state: 0,
        transition: TransitionModel { features: vec![vec![vec![vec![1.0]]; n_actions]], theta: vec![vec![1.0]], bound: 1.0 },
        reward: RewardModel { theta, features: RewardFeatures::Additive(vec![arms]), bound },
        link: LinkFunction::CLIPPED,
        reference: Policy::constant(1, 1, n_arms),
        learner_actions: (0..n_arms).collect(),
    }
}

fn one_hot(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

// ── Case 1: d-armed bandit with a single good arm ──

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case1Params {
    pub arms: usize,
    pub sources: usize,
    pub episodes: usize,
    #[serde(default = "default_case1_c")]
    pub c: f64,
}

fn default_case1_c() -> f64 {
    0.25
}

#[derive(Debug, Clone)]
pub struct Case1 {
    pub instance: LinearInstance,
    pub panel: FeedbackPanel,
    pub best_arm: usize,
    pub gap: f64,
}

/// Δ = c √(d/(MK)); p*(i*) = ½ + Δ and ½ elsewhere.
pub fn case1_gap(arms: usize, sources: usize, episodes: usize, c: f64) -> f64 {
    c * (arms as f64 / (sources * episodes) as f64).sqrt()
}

pub fn build_case1(p: &Case1Params, seed: u64) -> Result<Case1, InstanceError> {
    if p.arms < 2 || p.sources == 0 || p.episodes == 0 || !(p.c > 0.0) {
        return Err(InstanceError::BadParameter("case 1 needs d ≥ 2, M ≥ 1, K ≥ 1 and c > 0".into()));
    }
    let gap = case1_gap(p.arms, p.sources, p.episodes, p.c);
    if gap > 0.25 {
        return Err(InstanceError::BadParameter(format!("gap {gap} exceeds 1/4")));
    }
    let best_arm = ChaCha8Rng::seed_from_u64(seed).gen_range(0..p.arms);
    let link = LinkFunction::CLIPPED;
    let mut theta = vec![0.0; p.arms];
    theta[best_arm] = link.inverse(0.5 + gap)?;
    let instance = bandit((0..p.arms).map(|i| one_hot(p.arms, i)).collect(), theta, 0.25);
    instance.validate()?;
    let panel = FeedbackPanel::ideal(p.sources, p.episodes)?;
    Ok(Case1 { instance, panel, best_arm, gap })
}

// ── Case 2: uninformative feedback ──

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case2Params {
    pub omega: f64,
    pub episodes: usize,
    #[serde(default = "one")]
    pub sources: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct Case2 {
    /// 𝓘₁ (action 0 optimal) and 𝓘₂ (action 1 optimal).
    pub instances: [LinearInstance; 2],
    pub panel: FeedbackPanel,
    pub gap: f64,
}

/// Δ = min{ω/K, ¼}.
pub fn case2_gap(omega: f64, episodes: usize) -> f64 {
    (omega / episodes as f64).min(0.25)
}

pub fn build_case2(p: &Case2Params) -> Result<Case2, InstanceError> {
    if p.episodes == 0 || p.sources == 0 || !(p.omega >= 0.0) {
        return Err(InstanceError::BadParameter("case 2 needs K ≥ 1, M ≥ 1 and ω ≥ 0".into()));
    }
    let gap = case2_gap(p.omega, p.episodes);
    let arms = || vec![one_hot(2, 0), one_hot(2, 1)];
    let i1 = bandit(arms(), vec![gap, 0.0], 0.25);
    let i2 = bandit(arms(), vec![0.0, gap], 0.25);
    i1.validate()?;
    i2.validate()?;
    let schedule = DeviationSchedule::new(ScheduleKind::UninformativeCase2, p.omega);
    let panel = FeedbackPanel::shared(schedule, p.sources, p.episodes)?;
    Ok(Case2 { instances: [i1, i2], panel, gap })
}

// ── Counterexample for the unweighted baseline ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleParams {
    pub omega: f64,
    pub episodes: usize,
    pub dim: usize,
    pub sources: usize,
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub instance: LinearInstance,
    pub panel: FeedbackPanel,
    pub decoy_arm: usize,
    pub best_arm: usize,
}

/// Arms e_1..e_d with θ* = ¼ e_d, so the last arm is optimal (p* = ¾) and the
/// others are neutral (p* = ½). All sources share one optimism-adversarial
/// process that inflates labels whenever the first arm (the decoy) is played.
pub fn build_counterexample(p: &CounterexampleParams) -> Result<Counterexample, InstanceError> {
    if p.dim < 2 || p.episodes == 0 || p.sources == 0 || !(p.omega >= 0.0) {
        return Err(InstanceError::BadParameter("counterexample needs d ≥ 2, K ≥ 1, M ≥ 1 and ω ≥ 0".into()));
    }
    let d = p.dim;
    let best_arm = d - 1;
    let theta = one_hot(d, best_arm).into_iter().map(|v| 0.25 * v).collect();
    let instance = bandit((0..d).map(|i| one_hot(d, i)).collect(), theta, 0.25);
    instance.validate()?;
    let schedule = DeviationSchedule::new(
        ScheduleKind::OptimismAdversarial { decoy: one_hot(d, 0), threshold: 0.5, fraction: 1.0 },
        p.omega,
    );
    let panel = FeedbackPanel::shared(schedule, p.sources, p.episodes)?;
    Ok(Counterexample { instance, panel, decoy_arm: 0, best_arm })
}

// ── Random tiny instances ──

fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_ball<R: Rng>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = crate::model::norm(&v);
    let r = radius * rng.gen::<f64>();
    if n == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x * r / n).collect()
}

/// A random instance whose kernel is a mixture of `d_p` random base kernels
/// with per-step simplex weights, additive rewards with ‖φ(s, a)‖ ≤ 1/H and
/// ‖θ_R‖ ≤ ¼, and a uniform reference policy.
pub fn random_tiny(n_states: usize, n_actions: usize, horizon: usize, d_t: usize, d_p: usize, seed: u64) -> LinearInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<Vec<Vec<Vec<f64>>>> =
        (0..d_p).map(|_| (0..n_states).map(|_| (0..n_actions).map(|_| random_simplex(n_states, &mut rng)).collect()).collect()).collect();
    let features = (0..n_states)
        .map(|s| (0..n_actions).map(|a| (0..n_states).map(|n| (0..d_p).map(|i| bases[i][s][a][n]).collect()).collect()).collect())
        .collect();
    let theta_p = (0..horizon).map(|_| random_simplex(d_p, &mut rng)).collect();
    let reward_features =
        (0..n_states).map(|_| (0..n_actions).map(|_| random_ball(d_t, 1.0 / horizon as f64, &mut rng)).collect()).collect();
    let theta_r = random_ball(d_t, 0.25, &mut rng);
    LinearInstance {
        n_states,
        n_actions,
        horizon,
        initial_state: 0,
        transition: TransitionModel { features, theta: theta_p, bound: 1.0 },
        reward: RewardModel { theta: theta_r, features: RewardFeatures::Additive(reward_features), bound: 0.25 },
        link: LinkFunction::CLIPPED,
        reference: Policy::uniform(horizon, n_states, n_actions),
        learner_actions: (0..n_actions).collect(),
    }
}

// ── Bernoulli KL ──

/// KL(Ber(p) ‖ Ber(q)) with 0·ln 0 = 0.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64, InstanceError> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(InstanceError::BadParameter(format!("KL arguments ({p}, {q}) outside [0, 1]")));
    }
    if p == q {
        return Ok(0.0);
    }
    let term = |a: f64, b: f64| if a == 0.0 { Ok(0.0) } else if b == 0.0 { Err(()) } else { Ok(a * (a / b).ln()) };
    match (term(p, q), term(1.0 - p, 1.0 - q)) {
        (Ok(x), Ok(y)) => Ok((x + y).max(0.0)),
        _ => Err(InstanceError::BadParameter(format!("KL({p} ‖ {q}) is infinite"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{optimal_utility, UtilityEvaluator, DEFAULT_PAIR_CAP};

    #[test]
    fn case1_arm_probabilities() {
        let c = build_case1(&Case1Params { arms: 4, sources: 1, episodes: 100, c: 0.25 }, 5).unwrap();
        let eval = UtilityEvaluator::new(&c.instance, DEFAULT_PAIR_CAP).unwrap();
        for a in 0..4 {
            let l = eval.exact(&Policy::constant(1, 1, a)).unwrap();
            let want = if a == c.best_arm { 0.5 + c.gap } else { 0.5 };
            assert!((l - want).abs() < 1e-15, "arm {a}: {l}");
        }
        let (l_star, _) = optimal_utility(&c.instance).unwrap();
        assert!((l_star - 0.5 - c.gap).abs() < 1e-15);
    }

    #[test]
    fn case1_rejects_large_gap() {
        assert!(build_case1(&Case1Params { arms: 4, sources: 1, episodes: 1, c: 0.25 }, 0).is_err());
    }

    #[test]
    fn case2_optimum_is_action_one() {
        let c = build_case2(&Case2Params { omega: 5.0, episodes: 100, sources: 1 }).unwrap();
        assert!((c.gap - 0.05).abs() < 1e-15);
        let (l1, p1) = optimal_utility(&c.instances[0]).unwrap();
        assert!((l1 - 0.55).abs() < 1e-15);
        assert_eq!(p1, Policy::constant(1, 1, 0));
        let (_, p2) = optimal_utility(&c.instances[1]).unwrap();
        assert_eq!(p2, Policy::constant(1, 1, 1));
    }

    #[test]
    fn counterexample_linear_region() {
        let c = build_counterexample(&CounterexampleParams { omega: 4.0, episodes: 100, dim: 2, sources: 4 }).unwrap();
        assert_eq!(c.instance.link.value(0.25), 0.75);
        let eval = UtilityEvaluator::new(&c.instance, DEFAULT_PAIR_CAP).unwrap();
        assert_eq!(eval.exact(&Policy::constant(1, 1, c.best_arm)).unwrap(), 0.75);
        assert_eq!(eval.exact(&Policy::constant(1, 1, c.decoy_arm)).unwrap(), 0.5);
    }

    #[test]
    fn random_tiny_is_valid() {
        for seed in 0..20 {
            random_tiny(3, 2, 3, 3, 2, seed).validate().unwrap();
        }
    }

    #[test]
    fn kl_points() {
        assert_eq!(bernoulli_kl(0.3, 0.3).unwrap(), 0.0);
        // mpmath, 40 digits.
        let want = 0.020_410_997_260_127_565;
        assert!((bernoulli_kl(0.5, 0.6).unwrap() - want).abs() < 1e-16);
        assert_eq!(bernoulli_kl(0.0, 0.5).unwrap(), 2f64.ln());
        assert!(bernoulli_kl(0.5, 1.0).is_err());
        assert!(bernoulli_kl(-0.1, 0.5).is_err());
    }
}
