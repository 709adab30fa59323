//! Episodic simulator under ground-truth dynamics and evaluation of the
//! reference-benchmarked utility L^π and the benchmark L*.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{decimal, KernelTable, LinearInstance, ModelError, Trajectory};

pub const DEFAULT_PAIR_CAP: usize = 1_000_000;
pub const DEFAULT_POLICY_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("exact evaluation needs {needed} trajectory pairs but the cap is {cap}; switch to monte-carlo mode")]
    PairCap { needed: usize, cap: usize },
    #[error("exact evaluation needs more than {cap} trajectories; switch to monte-carlo mode")]
    TrajectoryCap { cap: usize },
    #[error("{count} deterministic Markov policies exceed the enumeration cap {cap}")]
    PolicyCap { count: f64, cap: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ── Policies ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Action distribution per `(h, s)`, indexed `[h][s][a]`.
    Markov(#[serde(with = "decimal")] Vec<Vec<Vec<f64>>>),
    /// One action per `(h, s)`, indexed `[h][s]`.
    Deterministic(Vec<Vec<usize>>),
}

impl Policy {
    pub fn constant(horizon: usize, n_states: usize, action: usize) -> Self {
        Policy::Deterministic(vec![vec![action; n_states]; horizon])
    }

    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        Policy::Markov(vec![vec![vec![1.0 / n_actions as f64; n_actions]; n_states]; horizon])
    }

    pub fn id(&self) -> String {
        match self {
            Policy::Deterministic(t) => {
                let flat: Vec<String> = t.iter().flatten().map(|a| a.to_string()).collect();
                format!("det:{}", flat.join(","))
            }
            Policy::Markov(t) => format!("markov:{}x{}", t.len(), t.first().map_or(0, Vec::len)),
        }
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        match self {
            Policy::Markov(t) => t[h][s][a],
            Policy::Deterministic(t) => {
                if t[h][s] == a {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Support of π(·|h, s) as `(action, probability)`.
    pub fn support(&self, h: usize, s: usize) -> Vec<(usize, f64)> {
        match self {
            Policy::Deterministic(t) => vec![(t[h][s], 1.0)],
            Policy::Markov(t) => t[h][s].iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect(),
        }
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        match self {
            Policy::Deterministic(t) => t[h][s],
            Policy::Markov(t) => sample_index(&t[h][s], rng),
        }
    }

    pub fn check_shape(&self, horizon: usize, n_states: usize, n_actions: usize) -> Result<(), String> {
        match self {
            Policy::Deterministic(t) => {
                if t.len() != horizon || t.iter().any(|r| r.len() != n_states || r.iter().any(|&a| a >= n_actions)) {
                    return Err("deterministic table shape mismatch".into());
                }
            }
            Policy::Markov(t) => {
                if t.len() != horizon || t.iter().any(|r| r.len() != n_states || r.iter().any(|d| d.len() != n_actions)) {
                    return Err("markov table shape mismatch".into());
                }
                for d in t.iter().flatten() {
                    let sum: f64 = d.iter().sum();
                    if d.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-12 {
                        return Err("action distribution does not sum to one".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Inverse-CDF draw consuming exactly one uniform; negative mass is treated as zero.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

// ── Rollouts ──

pub fn rollout_kernel<R: Rng + ?Sized>(
    kernel: &KernelTable,
    initial_state: usize,
    policy: &Policy,
    rng: &mut R,
    episode: usize,
) -> Trajectory {
    let horizon = kernel.len();
    let mut steps = Vec::with_capacity(horizon);
    let mut s = initial_state;
    for h in 0..horizon {
        let a = policy.sample_action(h, s, rng);
        steps.push((s, a));
        if h + 1 < horizon {
            s = sample_index(&kernel[h][s][a], rng);
        }
    }
    Trajectory::new(steps, episode)
}

pub fn rollout<R: Rng + ?Sized>(instance: &LinearInstance, policy: &Policy, rng: &mut R) -> Result<Trajectory, EnvError> {
    policy
        .check_shape(instance.horizon, instance.n_states, instance.n_actions)
        .map_err(EnvError::Config)?;
    Ok(rollout_kernel(&instance.transition.table(), instance.initial_state, policy, rng, 0))
}

/// All trajectories with positive probability under `(kernel, policy)`.
pub fn trajectory_distribution(
    kernel: &KernelTable,
    initial_state: usize,
    policy: &Policy,
    cap: usize,
) -> Result<Vec<(Vec<(usize, usize)>, f64)>, EnvError> {
    let horizon = kernel.len();
    let mut out = Vec::new();
    let mut stack = vec![(Vec::with_capacity(horizon), initial_state, 1.0f64)];
    while let Some((prefix, s, p)) = stack.pop() {
        let h = prefix.len();
        for (a, pa) in policy.support(h, s) {
            let mut steps: Vec<(usize, usize)> = prefix.clone();
            steps.push((s, a));
            let pp = p * pa;
            if h + 1 == horizon {
                out.push((steps, pp));
                if out.len() > cap {
                    return Err(EnvError::TrajectoryCap { cap });
                }
            } else {
                for (next, &pn) in kernel[h][s][a].iter().enumerate().rev() {
                    if pn > 0.0 {
                        stack.push((steps.clone(), next, pp * pn));
                    }
                }
            }
        }
    }
    // DFS pops in reverse; restore a canonical order.
    out.sort_by(|x, y| x.0.cmp(&y.0));
    Ok(out)
}

// ── Utility ──

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityMode {
    #[default]
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Caches the reference distribution so many policies can be scored cheaply.
pub struct UtilityEvaluator<'a> {
    instance: &'a LinearInstance,
    kernel: KernelTable,
    reference: Vec<(f64, f64)>,
    pair_cap: usize,
}

impl<'a> UtilityEvaluator<'a> {
    pub fn new(instance: &'a LinearInstance, pair_cap: usize) -> Result<Self, EnvError> {
        let kernel = instance.transition.table();
        let dist = trajectory_distribution(&kernel, instance.initial_state, &instance.reference, pair_cap)?;
        let reference = dist.iter().map(|(t, p)| (instance.reward.value(t), *p)).collect();
        Ok(Self { instance, kernel, reference, pair_cap })
    }

    pub fn exact(&self, policy: &Policy) -> Result<f64, EnvError> {
        let inst = self.instance;
        policy
            .check_shape(inst.horizon, inst.n_states, inst.n_actions)
            .map_err(EnvError::Config)?;
        let dist = trajectory_distribution(&self.kernel, inst.initial_state, policy, self.pair_cap)?;
        let needed = dist.len().saturating_mul(self.reference.len());
        if needed > self.pair_cap {
            return Err(EnvError::PairCap { needed, cap: self.pair_cap });
        }
        let mut total = 0.0;
        for (t, p) in &dist {
            let r = inst.reward.value(t);
            let inner: f64 = self.reference.iter().map(|&(r0, p0)| p0 * inst.link.value(r - r0)).sum();
            total += p * inner;
        }
        Ok(total)
    }
}

/// Monte-Carlo estimate of L^π with its standard error.
pub fn utility_estimate(instance: &LinearInstance, policy: &Policy, samples: usize, seed: u64) -> Result<(f64, f64), EnvError> {
    if samples == 0 {
        return Err(EnvError::Config("monte-carlo mode needs at least one sample".into()));
    }
    policy
        .check_shape(instance.horizon, instance.n_states, instance.n_actions)
        .map_err(EnvError::Config)?;
    let kernel = instance.transition.table();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..samples {
        let t = rollout_kernel(&kernel, instance.initial_state, policy, &mut rng, 0);
        let t0 = rollout_kernel(&kernel, instance.initial_state, &instance.reference, &mut rng, 0);
        let q = crate::model::comparison_prob(&instance.reward, &instance.link, &t, &t0);
        sum += q;
        sq += q * q;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

pub fn utility(instance: &LinearInstance, policy: &Policy, mode: UtilityMode) -> Result<f64, EnvError> {
    match mode {
        UtilityMode::Exact => UtilityEvaluator::new(instance, DEFAULT_PAIR_CAP)?.exact(policy),
        UtilityMode::MonteCarlo { samples, seed } => Ok(utility_estimate(instance, policy, samples, seed)?.0),
    }
}

// ── Policy enumeration and L* ──

/// Deterministic Markov policies over the learner's actions in lexicographic
/// order of their `[h][s]` encoding (first entry most significant).
pub fn enumerate_policies(instance: &LinearInstance, cap: usize) -> Result<Vec<Policy>, EnvError> {
    let mut actions = instance.learner_actions.clone();
    actions.sort_unstable();
    actions.dedup();
    let slots = instance.horizon * instance.n_states;
    let count = (actions.len() as f64).powi(slots as i32);
    if count > cap as f64 {
        return Err(EnvError::PolicyCap { count, cap });
    }
    let base = actions.len();
    let mut digits = vec![0usize; slots];
    let mut out = Vec::with_capacity(count as usize);
    loop {
        let table = digits
            .chunks(instance.n_states)
            .map(|row| row.iter().map(|&d| actions[d]).collect())
            .collect();
        out.push(Policy::Deterministic(table));
        // Increment the mixed-radix counter, last slot fastest.
        let mut i = slots;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < base {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Index of the maximum; values within `tol` of the incumbent keep the earlier index.
pub fn argmax_first(values: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > values[b] + tol => best = Some(i),
            _ => {}
        }
    }
    best
}

pub fn optimal_utility_with_caps(instance: &LinearInstance, policy_cap: usize, pair_cap: usize) -> Result<(f64, Policy), EnvError> {
    let policies = enumerate_policies(instance, policy_cap)?;
    let eval = UtilityEvaluator::new(instance, pair_cap)?;
    let values = policies.iter().map(|p| eval.exact(p)).collect::<Result<Vec<_>, _>>()?;
    let i = argmax_first(&values, 1e-12).ok_or_else(|| EnvError::Config("empty policy class".into()))?;
    Ok((values[i], policies[i].clone()))
}

pub fn optimal_utility(instance: &LinearInstance) -> Result<(f64, Policy), EnvError> {
    optimal_utility_with_caps(instance, DEFAULT_POLICY_CAP, DEFAULT_PAIR_CAP)
}
