//! Step 3: policy-level UCB evaluation and argmax selection over deterministic
//! Markov policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::comparison_learning::ComparisonConfidence;
use crate::env::{argmax_first, rollout_kernel, trajectory_distribution, EnvError, Policy, UtilityMode};
use crate::model::{dot, KernelTable, LinearInstance, Trajectory};
use crate::transition_learning::transition_bonus;

#[derive(Debug, Clone, PartialEq)]
pub struct UcbEstimate {
    pub policy_id: String,
    /// L̂_k(π).
    pub plug_in: f64,
    pub comparison_bonus: f64,
    pub transition_bonus: f64,
    pub reference_bonus: f64,
    pub total: f64,
    pub mode: UtilityMode,
    /// Standard error of `total` in monte-carlo mode, 0 when exact.
    pub std_error: f64,
}

/// Everything the planner needs from the current learner state.
pub struct PlanningModel<'a> {
    pub instance: &'a LinearInstance,
    /// P̂_k, or P* in known-transition mode.
    pub kernel: &'a KernelTable,
    pub comparison: &'a ComparisonConfidence,
    /// Per-(h, s, a) transition bonuses; `None` means b^P ≡ 0.
    pub transition_bonus: Option<&'a [Vec<Vec<f64>>]>,
    pub pair_cap: usize,
}

struct Scored {
    features: Vec<f64>,
    bonus: f64,
    prob: f64,
}

impl PlanningModel<'_> {
    fn score(&self, tau: &Trajectory, prob: f64) -> Scored {
        let bonus = self.transition_bonus.map_or(0.0, |t| transition_bonus(t, tau));
        Scored { features: self.instance.reward.features(&tau.steps), bonus, prob }
    }

    fn distribution(&self, policy: &Policy) -> Result<Vec<Scored>, EnvError> {
        let dist = trajectory_distribution(self.kernel, self.instance.initial_state, policy, self.pair_cap)?;
        Ok(dist.into_iter().map(|(steps, p)| self.score(&Trajectory::new(steps, 0), p)).collect())
    }

    /// (q̂, b̄^R) for one pair.
    fn pair_terms(&self, a: &[f64], b: &[f64]) -> (f64, f64) {
        let x: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
        let conf = self.comparison;
        (self.instance.link.value(dot(&x, &conf.theta_hat)), conf.width(&x))
    }

    /// The reference side is shared by every policy in a selection round.
    pub fn prepare(&self) -> Result<PreparedReference, EnvError> {
        let reference = self.distribution(&self.instance.reference)?;
        Ok(PreparedReference { reference })
    }

    pub fn ucb_value(&self, policy: &Policy, prepared: &PreparedReference, mode: UtilityMode) -> Result<UcbEstimate, EnvError> {
        match mode {
            UtilityMode::Exact => self.ucb_exact(policy, prepared),
            UtilityMode::MonteCarlo { samples, seed } => self.ucb_monte_carlo(policy, samples, seed),
        }
    }

    fn ucb_exact(&self, policy: &Policy, prepared: &PreparedReference) -> Result<UcbEstimate, EnvError> {
        let dist = self.distribution(policy)?;
        let reference = &prepared.reference;
        let needed = dist.len().saturating_mul(reference.len());
        if needed > self.pair_cap {
            return Err(EnvError::PairCap { needed, cap: self.pair_cap });
        }
        let (mut q, mut b) = (0.0, 0.0);
        for t in &dist {
            for r in reference {
                let (qi, bi) = self.pair_terms(&t.features, &r.features);
                q += t.prob * r.prob * qi;
                b += t.prob * r.prob * bi;
            }
        }
        let bp: f64 = dist.iter().map(|t| t.prob * t.bonus).sum();
        let b0: f64 = reference.iter().map(|r| r.prob * r.bonus).sum();
        Ok(UcbEstimate {
            policy_id: policy.id(),
            plug_in: q,
            comparison_bonus: b,
            transition_bonus: bp,
            reference_bonus: b0,
            total: q + b + bp + b0,
            mode: UtilityMode::Exact,
            std_error: 0.0,
        })
    }

    fn ucb_monte_carlo(&self, policy: &Policy, samples: usize, seed: u64) -> Result<UcbEstimate, EnvError> {
        if samples == 0 {
            return Err(EnvError::Config("monte-carlo mode needs at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s1 = self.instance.initial_state;
        let (mut sums, mut sq) = ([0.0; 4], 0.0);
        for _ in 0..samples {
            let t = self.score(&rollout_kernel(self.kernel, s1, policy, &mut rng, 0), 1.0);
            let r = self.score(&rollout_kernel(self.kernel, s1, &self.instance.reference, &mut rng, 0), 1.0);
            let (q, b) = self.pair_terms(&t.features, &r.features);
            let parts = [q, b, t.bonus, r.bonus];
            for (s, p) in sums.iter_mut().zip(parts) {
                *s += p;
            }
            let total: f64 = parts.iter().sum();
            sq += total * total;
        }
        let n = samples as f64;
        let [q, b, bp, b0] = sums.map(|s| s / n);
        let total = q + b + bp + b0;
        let var = (sq / n - total * total).max(0.0) * n / (n - 1.0).max(1.0);
        Ok(UcbEstimate {
            policy_id: policy.id(),
            plug_in: q,
            comparison_bonus: b,
            transition_bonus: bp,
            reference_bonus: b0,
            total,
            mode: UtilityMode::MonteCarlo { samples, seed },
            std_error: (var / n).sqrt(),
        })
    }
}

pub struct PreparedReference {
    reference: Vec<Scored>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub estimates: Vec<UcbEstimate>,
}

/// argmax of the UCB over an enumerated policy set; earlier policies win ties
/// within `tol`.
pub fn select_policy(model: &PlanningModel<'_>, policies: &[Policy], mode: UtilityMode, tol: f64) -> Result<Selection, EnvError> {
    if policies.is_empty() {
        return Err(EnvError::Config("empty policy set".into()));
    }
    let prepared = model.prepare()?;
    let estimates = policies.iter().map(|p| model.ucb_value(p, &prepared, mode)).collect::<Result<Vec<_>, _>>()?;
    let totals: Vec<f64> = estimates.iter().map(|e| e.total).collect();
    let index = argmax_first(&totals, tol).expect("non-empty");
    Ok(Selection { index, estimates })
}

/// Random-restart coordinate ascent over deterministic tables, used when the
/// policy class is too large to enumerate. The result is approximate.
pub fn hill_climb(model: &PlanningModel<'_>, mode: UtilityMode, restarts: usize, seed: u64) -> Result<(Policy, UcbEstimate), EnvError> {
    let inst = model.instance;
    let mut actions = inst.learner_actions.clone();
    actions.sort_unstable();
    actions.dedup();
    let prepared = model.prepare()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Policy, UcbEstimate)> = None;
    for _ in 0..restarts.max(1) {
        let mut table: Vec<Vec<usize>> =
            (0..inst.horizon).map(|_| (0..inst.n_states).map(|_| actions[rng.gen_range(0..actions.len())]).collect()).collect();
        let mut current = model.ucb_value(&Policy::Deterministic(table.clone()), &prepared, mode)?;
        loop {
            let mut improved = false;
            for h in 0..inst.horizon {
                for s in 0..inst.n_states {
                    for &a in &actions {
                        if table[h][s] == a {
                            continue;
                        }
                        let old = table[h][s];
                        table[h][s] = a;
                        let cand = model.ucb_value(&Policy::Deterministic(table.clone()), &prepared, mode)?;
                        if cand.total > current.total + 1e-12 {
                            current = cand;
                            improved = true;
                        } else {
                            table[h][s] = old;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| current.total > b.total + 1e-12) {
            best = Some((Policy::Deterministic(table), current));
        }
    }
    Ok(best.expect("at least one restart"))
}

// ── Value-to-go for probes ──

/// V_h(s) for h = 0..=H under `kernel` and `policy` with per-step rewards
/// `rewards[s][a]`; V_H ≡ 0.
pub fn value_to_go(kernel: &KernelTable, rewards: &[Vec<f64>], policy: &Policy, horizon: usize) -> Vec<Vec<f64>> {
    let n_states = rewards.len();
    let mut v = vec![vec![0.0; n_states]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..n_states {
            v[h][s] = policy
                .support(h, s)
                .into_iter()
                .map(|(a, pa)| {
                    let next: f64 =
                        if h + 1 < horizon { kernel[h][s][a].iter().zip(&v[h + 1]).map(|(p, vn)| p * vn).sum() } else { 0.0 };
                    pa * (rewards[s][a] + next)
                })
                .sum();
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison_learning::ComparisonData;
    use crate::env::{enumerate_policies, UtilityEvaluator, DEFAULT_PAIR_CAP};
    use crate::instances::random_tiny;

    fn truth_conf(inst: &LinearInstance, beta: f64) -> ComparisonConfidence {
        ComparisonConfidence::build(inst.reward.theta.clone(), &ComparisonData::new(), 1.0, beta).unwrap()
    }

    #[test]
    fn zero_bonus_truth_recovers_utility() {
        let inst = random_tiny(2, 2, 2, 2, 2, 4);
        let kernel = inst.transition.table();
        let conf = truth_conf(&inst, 0.0);
        let model = PlanningModel { instance: &inst, kernel: &kernel, comparison: &conf, transition_bonus: None, pair_cap: DEFAULT_PAIR_CAP };
        let eval = UtilityEvaluator::new(&inst, DEFAULT_PAIR_CAP).unwrap();
        let prepared = model.prepare().unwrap();
        for p in enumerate_policies(&inst, 100).unwrap() {
            let u = model.ucb_value(&p, &prepared, UtilityMode::Exact).unwrap();
            assert!((u.total - eval.exact(&p).unwrap()).abs() < 1e-14);
        }
        let r = model.ucb_value(&inst.reference, &prepared, UtilityMode::Exact).unwrap();
        assert!((r.total - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exact_matches_monte_carlo() {
        let inst = random_tiny(2, 2, 2, 2, 2, 8);
        let kernel = inst.transition.table();
        let conf = truth_conf(&inst, 0.3);
        let bonus = vec![vec![vec![0.1, 0.2], vec![0.0, 0.3]]; 2];
        let model =
            PlanningModel { instance: &inst, kernel: &kernel, comparison: &conf, transition_bonus: Some(&bonus), pair_cap: DEFAULT_PAIR_CAP };
        let p = Policy::Deterministic(vec![vec![1, 0], vec![0, 1]]);
        let prepared = model.prepare().unwrap();
        let exact = model.ucb_value(&p, &prepared, UtilityMode::Exact).unwrap();
        let mc = model.ucb_value(&p, &prepared, UtilityMode::MonteCarlo { samples: 100_000, seed: 1 }).unwrap();
        assert!((exact.total - mc.total).abs() <= 3.0 * mc.std_error, "{} vs {} ± {}", exact.total, mc.total, mc.std_error);
    }

    #[test]
    fn ties_pick_first() {
        let inst = random_tiny(2, 2, 2, 2, 2, 4);
        let kernel = inst.transition.table();
        let conf = ComparisonConfidence::build(vec![0.0; 2], &ComparisonData::new(), 1.0, 0.0).unwrap();
        let model = PlanningModel { instance: &inst, kernel: &kernel, comparison: &conf, transition_bonus: None, pair_cap: DEFAULT_PAIR_CAP };
        let policies = enumerate_policies(&inst, 100).unwrap();
        let sel = select_policy(&model, &policies, UtilityMode::Exact, 1e-12).unwrap();
        assert_eq!(sel.index, 0);
        let one = select_policy(&model, &policies[5..6], UtilityMode::Exact, 0.0).unwrap();
        assert_eq!(one.index, 0);
        assert!(select_policy(&model, &[], UtilityMode::Exact, 0.0).is_err());
    }

    #[test]
    fn hill_climb_finds_enumerated_optimum() {
        let inst = random_tiny(2, 3, 2, 2, 2, 12);
        let kernel = inst.transition.table();
        let conf = truth_conf(&inst, 0.0);
        let model = PlanningModel { instance: &inst, kernel: &kernel, comparison: &conf, transition_bonus: None, pair_cap: DEFAULT_PAIR_CAP };
        let policies = enumerate_policies(&inst, 1000).unwrap();
        let sel = select_policy(&model, &policies, UtilityMode::Exact, 0.0).unwrap();
        let (_, est) = hill_climb(&model, UtilityMode::Exact, 8, 0).unwrap();
        assert!((est.total - sel.estimates[sel.index].total).abs() < 1e-12);
    }

    #[test]
    fn value_to_go_single_step() {
        let kernel = vec![vec![vec![vec![1.0]]]];
        let v = value_to_go(&kernel, &[vec![0.7]], &Policy::constant(1, 1, 0), 1);
        assert_eq!(v, vec![vec![0.7], vec![0.0]]);
    }
}
