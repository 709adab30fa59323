//! The episode loop: comparison learning, transition learning, optimistic
//! planning, execution, labeling and filtering, for RL-MSIP and its variants.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparison_learning::{
    beta_r, contains_truth, default_cover_log, fit_reward, w2_weight, BetaRInputs, ComparisonConfidence, ComparisonData,
    ComparisonPayload, LearnError, SelfNormalizedWeights,
};
use crate::env::{
    enumerate_policies, rollout_kernel, EnvError, Policy, UtilityEvaluator, UtilityMode, DEFAULT_PAIR_CAP, DEFAULT_POLICY_CAP,
};
use crate::feedback::{averaged_label, FeedbackError, FeedbackPanel, PairContext};
use crate::filtering::{filter, FilterParams};
use crate::model::{comparison_prob, sub, KernelTable, LinearInstance, LinkKind, Trajectory};
use crate::planner::{hill_climb, select_policy, value_to_go, PlanningModel};
use crate::transition_learning::{
    beta_p, bonus_table, choose_probe, contains_truth_p, probe_dictionary, projected_kernel, w4_weight, BetaPInputs,
    TransitionConfidence, TransitionData, TransitionPayload,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    RlMsip,
    RlMsipKnownP,
    RlMsipPlugin,
    UnweightedOful,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::RlMsip => "rl-msip",
            AgentKind::RlMsipKnownP => "rl-msip-known-p",
            AgentKind::RlMsipPlugin => "rl-msip-plugin",
            AgentKind::UnweightedOful => "unweighted-oful",
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}
fn default_restarts() -> usize {
    8
}
fn default_tie_tol() -> f64 {
    1e-12
}
fn default_policy_cap() -> usize {
    DEFAULT_POLICY_CAP
}
fn default_pair_cap() -> usize {
    DEFAULT_PAIR_CAP
}

/// Parameters left as `None` are derived from the instance and K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// ω̄ for the plug-in variant.
    #[serde(default)]
    pub omega_bar: Option<f64>,
    #[serde(default = "one")]
    pub alpha_r: f64,
    /// Defaults to H².
    #[serde(default)]
    pub alpha_p: Option<f64>,
    /// Scaling λ in the directional discrepancy.
    #[serde(default = "one")]
    pub lambda: f64,
    /// λ_R in the comparison radius.
    #[serde(default = "one")]
    pub lambda_r: f64,
    #[serde(default = "one")]
    pub c_filt: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Filtering accuracy; defaults to 1/K.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Filtering constant c; defaults to ln(4K/δ).
    #[serde(default)]
    pub filter_c: Option<f64>,
    /// Ridge threshold λ in the sensitivities.
    #[serde(default = "one")]
    pub filter_lambda: f64,
    #[serde(default = "yes")]
    pub filtering: bool,
    #[serde(default)]
    pub cover_log_r: Option<f64>,
    #[serde(default)]
    pub cover_log_p: Option<f64>,
    #[serde(default)]
    pub gamma_r: Option<f64>,
    #[serde(default)]
    pub gamma_p: Option<f64>,
    /// Learner link; defaults to the instance's.
    #[serde(default)]
    pub link: Option<LinkKind>,
    #[serde(default = "default_policy_cap")]
    pub policy_cap: usize,
    #[serde(default = "default_pair_cap")]
    pub pair_cap: usize,
    #[serde(default)]
    pub planner_mode: UtilityMode,
    #[serde(default = "default_restarts")]
    pub hill_climb_restarts: usize,
    #[serde(default = "default_tie_tol")]
    pub tie_tol: f64,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            kind,
            omega_bar: None,
            alpha_r: 1.0,
            alpha_p: None,
            lambda: 1.0,
            lambda_r: 1.0,
            c_filt: 1.0,
            delta: 0.1,
            epsilon: None,
            filter_c: None,
            filter_lambda: 1.0,
            filtering: true,
            cover_log_r: None,
            cover_log_p: None,
            gamma_r: None,
            gamma_p: None,
            link: None,
            policy_cap: DEFAULT_POLICY_CAP,
            pair_cap: DEFAULT_PAIR_CAP,
            planner_mode: UtilityMode::Exact,
            hill_climb_restarts: 8,
            tie_tol: 1e-12,
        }
    }

    pub fn plugin(omega_bar: f64) -> Self {
        Self { omega_bar: Some(omega_bar), ..Self::new(AgentKind::RlMsipPlugin) }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.into()));
        match (self.kind, self.omega_bar) {
            (AgentKind::RlMsipPlugin, None) => return bad("rl-msip-plugin needs omega_bar"),
            (AgentKind::RlMsipPlugin, Some(w)) if !(w >= 0.0 && w.is_finite()) => return bad("omega_bar must be finite and ≥ 0"),
            (k, Some(_)) if k != AgentKind::RlMsipPlugin => return bad("omega_bar only applies to rl-msip-plugin"),
            _ => {}
        }
        let positive = [self.alpha_r, self.lambda, self.filter_lambda, self.c_filt + 1.0, self.lambda_r + 1.0];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.alpha_p.is_some_and(|a| !(a > 0.0)) {
            return bad("regularizers and λ must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("δ must lie in (0, 1)");
        }
        if self.epsilon.is_some_and(|e| !(e > 0.0 && e < 1.0)) {
            return bad("ε must lie in (0, 1)");
        }
        if self.filter_c.is_some_and(|c| !(c > 0.0)) {
            return bad("filter constant c must be positive");
        }
        Ok(())
    }
}

/// One row of the per-episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub run_id: String,
    pub agent: String,
    pub episodes: usize,
    pub sources: usize,
    pub omega: f64,
    pub seed: u64,
    pub episode: usize,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub l_star: f64,
    pub l_pi: f64,
    pub mean_w1: f64,
    pub mean_w3: f64,
    pub beta_r: f64,
    pub beta_p: f64,
    pub filtered_cmp: usize,
    pub filtered_tr: usize,
    pub ledger_spend: f64,
}

/// Diagnostics that do not go into the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub policy: Policy,
    pub executed: Trajectory,
    pub reference: Trajectory,
    pub labels: Vec<u8>,
    pub w2: f64,
    pub truth_in_q: bool,
    /// `None` when transitions are not learned.
    pub truth_in_p: Option<bool>,
    pub approximate_plan: bool,
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub episode: usize,
    pub error: AgentError,
    pub records: Vec<RegretRecord>,
}

struct Streams {
    env: ChaCha8Rng,
    labels: ChaCha8Rng,
    filter: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i);
            r
        };
        Self { env: stream(1), labels: stream(2), filter: stream(3) }
    }
}

pub struct Agent {
    config: AgentConfig,
    instance: LinearInstance,
    panel: FeedbackPanel,
    episodes: usize,
    seed: u64,
    run_id: String,
    k: usize,
    policies: Option<Vec<Policy>>,
    values: HashMap<String, f64>,
    l_star: f64,
    true_kernel: KernelTable,
    streams: Streams,
    raw_cmp: ComparisonData,
    raw_tr: Vec<TransitionData>,
    cmp: ComparisonData,
    tr: Vec<TransitionData>,
    w1: SelfNormalizedWeights,
    w3: Vec<SelfNormalizedWeights>,
    prev_beta_r: f64,
    prev_beta_p: f64,
    prev_policy: Policy,
    cum_regret: f64,
    forced: Option<Policy>,
}

impl Agent {
    pub fn new(config: AgentConfig, instance: LinearInstance, panel: FeedbackPanel, episodes: usize, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        instance.validate().map_err(EnvError::from)?;
        if panel.horizon() != episodes {
            return Err(AgentError::Config(format!("panel built for {} episodes, run asks for {episodes}", panel.horizon())));
        }
        let policies = match enumerate_policies(&instance, config.policy_cap) {
            Ok(p) => Some(p),
            Err(EnvError::PolicyCap { count, cap }) => {
                log::warn!("{count} policies exceed the cap {cap}; planning by hill-climbing (approximate)");
                None
            }
            Err(e) => return Err(e.into()),
        };
        let eval = UtilityEvaluator::new(&instance, config.pair_cap)?;
        let mut values = HashMap::new();
        let l_star = match &policies {
            Some(ps) => {
                let mut best = f64::NEG_INFINITY;
                for p in ps {
                    let v = eval.exact(p)?;
                    best = best.max(v);
                    values.insert(p.id(), v);
                }
                best
            }
            None => return Err(AgentError::Config("L* needs an enumerable policy class".into())),
        };
        let h = instance.horizon;
        let d_t = instance.reward.dim();
        let d_p = instance.transition.dim();
        let alpha_p = config.alpha_p.unwrap_or((h * h) as f64);
        let steps = h.saturating_sub(1);
        let run_id = format!("{}-s{seed}", config.kind.name());
        Ok(Self {
            w1: SelfNormalizedWeights::new(d_t, config.alpha_r, config.lambda, 1.0),
            w3: (0..steps).map(|_| SelfNormalizedWeights::new(d_p, alpha_p, config.lambda, (h * h) as f64)).collect(),
            raw_tr: vec![TransitionData::new(); steps],
            tr: vec![TransitionData::new(); steps],
            true_kernel: instance.transition.table(),
            prev_policy: instance.reference.clone(),
            streams: Streams::new(seed),
            config,
            instance,
            panel,
            episodes,
            seed,
            run_id,
            k: 0,
            policies,
            values,
            l_star,
            raw_cmp: ComparisonData::new(),
            cmp: ComparisonData::new(),
            prev_beta_r: 0.0,
            prev_beta_p: 0.0,
            cum_regret: 0.0,
            forced: None,
        })
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self
    }

    /// Plays `policy` every episode instead of planning; learning still runs.
    pub fn force_policy(&mut self, policy: Policy) {
        self.forced = Some(policy);
    }

    pub fn l_star(&self) -> f64 {
        self.l_star
    }

    pub fn panel(&self) -> &FeedbackPanel {
        &self.panel
    }

    pub fn episode(&self) -> usize {
        self.k
    }

    fn weighted(&self) -> bool {
        self.config.kind != AgentKind::UnweightedOful
    }

    fn learns_transitions(&self) -> bool {
        self.config.kind != AgentKind::RlMsipKnownP && self.instance.horizon > 1
    }

    fn omega_bar(&self) -> f64 {
        match self.config.kind {
            AgentKind::RlMsip | AgentKind::RlMsipKnownP => self.panel.omega(),
            AgentKind::RlMsipPlugin => self.config.omega_bar.unwrap_or(0.0),
            AgentKind::UnweightedOful => 0.0,
        }
    }

    fn epsilon(&self) -> f64 {
        self.config.epsilon.unwrap_or(1.0 / self.episodes.max(2) as f64)
    }

    fn filter_params(&self) -> FilterParams {
        let c = self.config.filter_c.unwrap_or((4.0 * self.episodes as f64 / self.config.delta).ln());
        FilterParams { lambda: self.config.filter_lambda, eps: self.epsilon(), c }
    }

    fn link(&self) -> crate::model::LinkFunction {
        self.config.link.map_or(self.instance.link, crate::model::LinkFunction::new)
    }

    fn utility_of(&mut self, policy: &Policy) -> Result<f64, AgentError> {
        if let Some(v) = self.values.get(&policy.id()) {
            return Ok(*v);
        }
        let v = UtilityEvaluator::new(&self.instance, self.config.pair_cap)?.exact(policy)?;
        self.values.insert(policy.id(), v);
        Ok(v)
    }

    pub fn run_episode(&mut self) -> Result<(RegretRecord, EpisodeTrace), AgentError> {
        self.k += 1;
        let k = self.k;
        let inst = &self.instance;
        let h_len = inst.horizon;
        let link = self.link();
        let sources = self.panel.sources();

        // Step 1: comparison model.
        let d_t = inst.reward.dim();
        let fit = fit_reward(&self.cmp, d_t, sources, link, self.config.alpha_r)?;
        let mut conf_r = ComparisonConfidence::build(fit.theta, &self.cmp, self.config.alpha_r, self.prev_beta_r)?;
        let w2 = w2_weight(&conf_r.theta_hat, &conf_r.gram, self.prev_beta_r, &self.cmp, link, self.config.alpha_r);
        let beta_r = beta_r(&BetaRInputs {
            k,
            episodes: self.episodes,
            sources,
            omega_bar: self.omega_bar(),
            n_k: self.cmp.mass(),
            w2_inv: 1.0 / w2,
            cover_log: self.config.cover_log_r.unwrap_or_else(|| default_cover_log(d_t, self.episodes)),
            epsilon: if self.config.filtering { self.epsilon() } else { 0.0 },
            delta: self.config.delta,
            lambda_r: self.config.lambda_r,
            c_filt: self.config.c_filt,
            gamma_r: self.config.gamma_r,
        })?;
        conf_r.beta = beta_r;
        let truth_in_q = contains_truth(&conf_r, &inst.reward.theta, &self.cmp, link);

        // Step 2: transition model.
        let learn_p = self.learns_transitions();
        let mut conf_p: Option<TransitionConfidence> = None;
        let mut bonus: Option<Vec<Vec<Vec<f64>>>> = None;
        let mut greedy: Vec<Vec<f64>> = Vec::new();
        let kernel: KernelTable = if learn_p {
            let d_p = inst.transition.dim();
            let alpha_p = self.config.alpha_p.unwrap_or((h_len * h_len) as f64);
            let mut c = TransitionConfidence::build(&self.tr, d_p, alpha_p, self.prev_beta_p)?;
            let w4: Vec<f64> = (0..self.tr.len()).map(|h| w4_weight(&c, h, &self.tr[h], alpha_p)).collect();
            c.beta = beta_p(&BetaPInputs {
                episodes: self.episodes,
                horizon: h_len,
                n_p: self.tr.iter().map(|d| d.mass()).sum(),
                cover_log: self.config.cover_log_p.unwrap_or_else(|| default_cover_log(d_p, self.episodes)),
                delta: self.config.delta,
                gamma_p: self.config.gamma_p,
            })?;
            let mut kernel = projected_kernel(&inst.transition, &c.thetas);
            kernel.push(self.true_kernel[h_len - 1].clone());
            let rewards: Vec<Vec<f64>> = inst.step_rewards(&conf_r.theta_hat).map_or_else(
                || vec![vec![0.0; inst.n_actions]; inst.n_states],
                |r| r.into_iter().map(|row| row.into_iter().map(|v| (0.5 + v).clamp(0.0, 1.0)).collect()).collect(),
            );
            let v = value_to_go(&kernel, &rewards, &self.prev_policy, h_len);
            greedy = v[1..h_len].to_vec();
            bonus = Some(bonus_table(&c, &inst.transition, &greedy, &w4, h_len));
            conf_p = Some(c);
            kernel
        } else {
            self.true_kernel.clone()
        };
        let truth_in_p = conf_p.as_ref().map(|c| contains_truth_p(c, &inst.transition.theta, &self.tr));

        // Step 3: planning.
        let model = PlanningModel {
            instance: inst,
            kernel: &kernel,
            comparison: &conf_r,
            transition_bonus: bonus.as_deref(),
            pair_cap: self.config.pair_cap,
        };
        let mode = match self.config.planner_mode {
            UtilityMode::MonteCarlo { samples, seed } => {
                UtilityMode::MonteCarlo { samples, seed: seed ^ self.seed.rotate_left(17) ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) }
            }
            m => m,
        };
        let mut approximate_plan = false;
        let policy = if let Some(p) = &self.forced {
            p.clone()
        } else if let Some(ps) = &self.policies {
            ps[select_policy(&model, ps, mode, self.config.tie_tol)?.index].clone()
        } else {
            approximate_plan = true;
            hill_climb(&model, mode, self.config.hill_climb_restarts, self.seed ^ k as u64)?.0
        };

        // Execute π_k and π₀.
        let s1 = inst.initial_state;
        let tau = rollout_kernel(&self.true_kernel, s1, &policy, &mut self.streams.env, k);
        let tau0 = rollout_kernel(&self.true_kernel, s1, &inst.reference, &mut self.streams.env, k);

        // Labels.
        let p_star = comparison_prob(&inst.reward, &inst.link, &tau, &tau0);
        let x = sub(&inst.reward.features(&tau.steps), &inst.reward.features(&tau0.steps));
        let (labels, _diag) = self.panel.sample_labels(&PairContext { p_star, features: &x }, k, &mut self.streams.labels);
        let label = averaged_label(&labels)?;

        // Raw histories with history-measurable weights.
        let w1 = if self.weighted() { self.w1.next_weight(&x, &conf_r.gram, beta_r).0 } else { 1.0 };
        self.raw_cmp.push(ComparisonPayload { x, label }, k, w1);
        if let Some(c) = &conf_p {
            for h in 0..h_len - 1 {
                let (s, a) = tau.steps[h];
                let next = tau.steps[h + 1].0;
                let dict = probe_dictionary(&greedy[h], h_len, k);
                let probe = choose_probe(c, &inst.transition, h, s, a, &dict);
                let payload = TransitionPayload::new(&inst.transition, s, a, next, probe);
                let w3 = if self.weighted() { self.w3[h].next_weight(&payload.psi, &c.grams[h], c.beta).0 } else { 1.0 };
                self.raw_tr[h].push(payload, k, w3);
            }
        }

        // Step 4: filtering.
        if self.config.filtering {
            let params = self.filter_params();
            self.cmp = filter(&self.raw_cmp, |p: &ComparisonPayload| &p.x[..], params, &mut self.streams.filter);
            for (raw, out) in self.raw_tr.iter().zip(self.tr.iter_mut()) {
                *out = filter(raw, |p: &TransitionPayload| &p.psi[..], params, &mut self.streams.filter);
            }
        } else {
            self.cmp = self.raw_cmp.clone();
            self.tr = self.raw_tr.clone();
        }

        let beta_p_val = conf_p.as_ref().map_or(0.0, |c| c.beta);
        self.prev_beta_r = beta_r;
        self.prev_beta_p = beta_p_val;
        self.prev_policy = policy.clone();

        let l_pi = self.utility_of(&policy)?;
        let instant = (self.l_star - l_pi).max(0.0);
        self.cum_regret += instant;
        let mean_w3 = {
            let (sum, n) = self.raw_tr.iter().flat_map(|d| &d.samples).fold((0.0, 0usize), |(s, n), x| (s + x.weight, n + 1));
            if n == 0 {
                1.0
            } else {
                sum / n as f64
            }
        };
        let record = RegretRecord {
            run_id: self.run_id.clone(),
            agent: self.config.kind.name().to_string(),
            episodes: self.episodes,
            sources,
            omega: self.panel.omega(),
            seed: self.seed,
            episode: k,
            instant_regret: instant,
            cum_regret: self.cum_regret,
            l_star: self.l_star,
            l_pi,
            mean_w1: self.raw_cmp.mean_weight(),
            mean_w3,
            beta_r,
            beta_p: beta_p_val,
            filtered_cmp: self.cmp.len(),
            filtered_tr: self.tr.iter().map(|d| d.len()).sum(),
            ledger_spend: self.panel.max_spent(),
        };
        let trace =
            EpisodeTrace { policy, executed: tau, reference: tau0, labels, w2, truth_in_q, truth_in_p, approximate_plan };
        Ok((record, trace))
    }

    /// Runs the remaining episodes, returning records and traces.
    pub fn run_traced(&mut self) -> Result<Vec<(RegretRecord, EpisodeTrace)>, RunFailure> {
        let mut out = Vec::with_capacity(self.episodes);
        while self.k < self.episodes {
            match self.run_episode() {
                Ok(r) => out.push(r),
                Err(error) => {
                    return Err(RunFailure { episode: self.k, error, records: out.into_iter().map(|(r, _)| r).collect() });
                }
            }
        }
        Ok(out)
    }
}

/// Runs `episodes` episodes of a fresh agent.
pub fn run(
    config: &AgentConfig,
    instance: &LinearInstance,
    panel: &FeedbackPanel,
    episodes: usize,
    seed: u64,
) -> Result<Vec<RegretRecord>, RunFailure> {
    if episodes == 0 {
        return Ok(Vec::new());
    }
    let mut agent = Agent::new(config.clone(), instance.clone(), panel.clone(), episodes, seed)
        .map_err(|error| RunFailure { episode: 0, error, records: Vec::new() })?;
    Ok(agent.run_traced()?.into_iter().map(|(r, _)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_case1, random_tiny, Case1Params};

    fn case1(m: usize, k: usize) -> (LinearInstance, FeedbackPanel) {
        let c = build_case1(&Case1Params { arms: 4, sources: m, episodes: k, c: 0.25 }, 3).unwrap();
        (c.instance, c.panel)
    }

    #[test]
    fn zero_episodes_is_empty() {
        let (inst, panel) = case1(1, 10);
        assert!(run(&AgentConfig::new(AgentKind::RlMsip), &inst, &panel, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn first_episode_picks_first_policy() {
        let (inst, panel) = case1(1, 10);
        let mut a = Agent::new(AgentConfig::new(AgentKind::RlMsip), inst, panel, 10, 1).unwrap();
        let (_, trace) = a.run_episode().unwrap();
        assert_eq!(trace.policy, Policy::constant(1, 1, 0));
    }

    #[test]
    fn forced_optimal_has_zero_regret() {
        let inst = random_tiny(2, 2, 2, 2, 2, 5);
        let panel = FeedbackPanel::ideal(2, 20).unwrap();
        let (_, best) = crate::env::optimal_utility(&inst).unwrap();
        let mut a = Agent::new(AgentConfig::new(AgentKind::RlMsip), inst, panel, 20, 4).unwrap();
        a.force_policy(best);
        let recs = a.run_traced().unwrap();
        assert_eq!(recs.last().unwrap().0.cum_regret, 0.0);
    }

    #[test]
    fn repeated_runs_are_identical() {
        let inst = random_tiny(2, 2, 2, 2, 2, 6);
        let panel = FeedbackPanel::ideal(2, 15).unwrap();
        let cfg = AgentConfig::new(AgentKind::RlMsip);
        assert_eq!(run(&cfg, &inst, &panel, 15, 9).unwrap(), run(&cfg, &inst, &panel, 15, 9).unwrap());
    }

    #[test]
    fn known_p_never_learns_transitions() {
        let inst = random_tiny(2, 2, 2, 2, 2, 6);
        let panel = FeedbackPanel::ideal(1, 10).unwrap();
        let mut a = Agent::new(AgentConfig::new(AgentKind::RlMsipKnownP), inst, panel, 10, 2).unwrap();
        for (r, t) in a.run_traced().unwrap() {
            assert_eq!(r.beta_p, 0.0);
            assert_eq!(r.filtered_tr, 0);
            assert_eq!(t.truth_in_p, None);
        }
    }

    #[test]
    fn plugin_requires_omega_bar() {
        assert!(AgentConfig::new(AgentKind::RlMsipPlugin).validate().is_err());
        assert!(AgentConfig::plugin(2.0).validate().is_ok());
    }

    #[test]
    fn config_defaults_from_json() {
        let c: AgentConfig = serde_json::from_str(r#"{"kind":"unweighted-oful"}"#).unwrap();
        assert_eq!(c, AgentConfig::new(AgentKind::UnweightedOful));
        assert!(serde_json::from_str::<AgentConfig>(r#"{"kind":"rl-msip","bogus":1}"#).is_err());
    }
}
