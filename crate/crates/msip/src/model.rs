//! Ground-truth model types shared by every other module: link functions,
//! linear reward and transition models, instances and trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Policy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("link argument is not finite: {0}")]
    NonFinite(f64),
    #[error("probability {0} outside the invertible range of the link")]
    NotInvertible(f64),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("trajectory does not fit the instance: {0}")]
    BadTrajectory(String),
    #[error("instance document: {0}")]
    Document(String),
}

// ── Link functions ──

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    #[default]
    ClippedLinear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFunction {
    pub kind: LinkKind,
}

impl LinkFunction {
    pub const CLIPPED: LinkFunction = LinkFunction { kind: LinkKind::ClippedLinear };
    pub const LOGISTIC: LinkFunction = LinkFunction { kind: LinkKind::Logistic };

    pub fn new(kind: LinkKind) -> Self {
        Self { kind }
    }

    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            LinkKind::ClippedLinear => 1.0,
            LinkKind::Logistic => 0.25,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, ModelError> {
        if !x.is_finite() {
            return Err(ModelError::NonFinite(x));
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation for hot loops where the argument is known finite.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            LinkKind::ClippedLinear => (0.5 + x).clamp(0.0, 1.0),
            LinkKind::Logistic => {
                // Evaluate on the side where exp does not overflow; the two
                // branches mirror each other so σ(x) + σ(−x) = 1 holds closely.
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative used by the Gauss–Newton solver. The clipped link uses the
    /// one-sided derivative 1 on the closed linear region.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            LinkKind::ClippedLinear => {
                if (-0.5..=0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            LinkKind::Logistic => {
                let s = self.value(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn inverse(&self, p: f64) -> Result<f64, ModelError> {
        match self.kind {
            LinkKind::ClippedLinear if (0.0..=1.0).contains(&p) => Ok(p - 0.5),
            LinkKind::Logistic if p > 0.0 && p < 1.0 => Ok((p / (1.0 - p)).ln()),
            _ => Err(ModelError::NotInvertible(p)),
        }
    }
}

// ── Decimal-string serialization ──

/// Serde adapter writing every real as a decimal string so reloads are bit-stable.
pub mod decimal {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;

    pub trait Decimal: Sized {
        fn to_doc(&self) -> Value;
        fn from_doc(v: &Value) -> Result<Self, String>;
    }

    impl Decimal for f64 {
        fn to_doc(&self) -> Value {
            Value::String(format!("{self:?}"))
        }
        fn from_doc(v: &Value) -> Result<Self, String> {
            match v {
                Value::String(s) => s.parse::<f64>().map_err(|_| format!("bad decimal {s:?}")),
                other => Err(format!("expected decimal string, found {other}")),
            }
        }
    }

    impl<T: Decimal> Decimal for Vec<T> {
        fn to_doc(&self) -> Value {
            Value::Array(self.iter().map(Decimal::to_doc).collect())
        }
        fn from_doc(v: &Value) -> Result<Self, String> {
            match v {
                Value::Array(items) => items.iter().map(T::from_doc).collect(),
                other => Err(format!("expected array, found {other}")),
            }
        }
    }

    pub fn serialize<T: Decimal, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        v.to_doc().serialize(s)
    }

    pub fn deserialize<'de, T: Decimal, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let v = Value::deserialize(d)?;
        T::from_doc(&v).map_err(D::Error::custom)
    }
}

// ── Trajectories ──

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(state, action)` for h = 1..H.
    pub steps: Vec<(usize, usize)>,
    pub episode: usize,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>, episode: usize) -> Self {
        Self { steps, episode }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

// ── Reward model ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub steps: Vec<(usize, usize)>,
    #[serde(with = "decimal")]
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardFeatures {
    /// φ_R(τ) = Σ_h φ(s_h, a_h), table indexed `[s][a]`.
    Additive(#[serde(with = "decimal")] Vec<Vec<Vec<f64>>>),
    /// Explicit per-trajectory rows; trajectories without a row map to zero.
    Table(Vec<TableRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardModel {
    #[serde(with = "decimal")]
    pub theta: Vec<f64>,
    pub features: RewardFeatures,
    /// B_R, the norm bound on theta.
    #[serde(with = "decimal")]
    pub bound: f64,
}

impl RewardModel {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn features(&self, steps: &[(usize, usize)]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        match &self.features {
            RewardFeatures::Additive(table) => {
                for &(s, a) in steps {
                    for (o, v) in out.iter_mut().zip(&table[s][a]) {
                        *o += v;
                    }
                }
            }
            RewardFeatures::Table(rows) => {
                if let Some(row) = rows.iter().find(|r| r.steps == steps) {
                    out.copy_from_slice(&row.features);
                }
            }
        }
        out
    }

    pub fn value(&self, steps: &[(usize, usize)]) -> f64 {
        dot(&self.features(steps), &self.theta)
    }
}

/// q_R(τ, τ̃) = σ(R(τ) − R(τ̃)).
pub fn comparison_prob(reward: &RewardModel, link: &LinkFunction, tau: &Trajectory, other: &Trajectory) -> f64 {
    link.value(reward.value(&tau.steps) - reward.value(&other.steps))
}

// ── Transition model ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionModel {
    /// φ_P(s, a, s′), indexed `[s][a][s′]`.
    #[serde(with = "decimal")]
    pub features: Vec<Vec<Vec<Vec<f64>>>>,
    /// θ_{P,h} for h = 1..H; the last one is never used for a move.
    #[serde(with = "decimal")]
    pub theta: Vec<Vec<f64>>,
    #[serde(with = "decimal")]
    pub bound: f64,
}

/// Dense kernel `[h][s][a][s′]`.
pub type KernelTable = Vec<Vec<Vec<Vec<f64>>>>;

impl TransitionModel {
    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn prob_with(&self, theta: &[f64], s: usize, a: usize, next: usize) -> f64 {
        dot(&self.features[s][a][next], theta)
    }

    pub fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.prob_with(&self.theta[h], s, a, next)
    }

    /// ψ(s, a; V) = Σ_{s′} φ_P(s, a, s′) V(s′).
    pub fn psi(&self, s: usize, a: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (phi, &vs) in self.features[s][a].iter().zip(v) {
            if vs != 0.0 {
                for (o, p) in out.iter_mut().zip(phi) {
                    *o += p * vs;
                }
            }
        }
        out
    }

    pub fn table(&self) -> KernelTable {
        self.theta.iter().map(|th| self.table_for(th)).collect()
    }

    /// Kernel `[s][a][s′]` induced by a single parameter vector.
    pub fn table_for(&self, theta: &[f64]) -> Vec<Vec<Vec<f64>>> {
        self.features
            .iter()
            .map(|per_a| per_a.iter().map(|per_next| per_next.iter().map(|phi| dot(phi, theta)).collect()).collect())
            .collect()
    }
}

// ── Instances ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearInstance {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub transition: TransitionModel,
    pub reward: RewardModel,
    pub link: LinkFunction,
    /// π₀.
    pub reference: Policy,
    /// Actions available to the learner's policy class; π₀ may use any action.
    pub learner_actions: Vec<usize>,
}

impl LinearInstance {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Invalid(m));
        let (ns, na, h) = (self.n_states, self.n_actions, self.horizon);
        if ns == 0 || na == 0 || h == 0 {
            return bad("states, actions and horizon must be positive".into());
        }
        if self.initial_state >= ns {
            return bad(format!("initial state {} out of range", self.initial_state));
        }
        if self.learner_actions.is_empty() || self.learner_actions.iter().any(|&a| a >= na) {
            return bad("learner action set empty or out of range".into());
        }
        let tr = &self.transition;
        if tr.theta.len() != h {
            return bad(format!("expected {h} transition parameters, found {}", tr.theta.len()));
        }
        let dp = tr.dim();
        if tr.features.len() != ns
            || tr.features.iter().any(|pa| pa.len() != na || pa.iter().any(|pn| pn.len() != ns || pn.iter().any(|f| f.len() != dp)))
            || tr.theta.iter().any(|t| t.len() != dp)
        {
            return bad("transition feature shape mismatch".into());
        }
        for (hh, th) in tr.theta.iter().enumerate() {
            if norm(th) > tr.bound + 1e-12 {
                return bad(format!("transition parameter at step {} exceeds bound", hh + 1));
            }
            for s in 0..ns {
                for a in 0..na {
                    let row: Vec<f64> = (0..ns).map(|n| tr.prob(hh, s, a, n)).collect();
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&p| p < -1e-12) || (sum - 1.0).abs() > 1e-9 {
                        return bad(format!("P_{}(.|{s},{a}) is not a distribution", hh + 1));
                    }
                }
            }
        }
        let rw = &self.reward;
        if norm(&rw.theta) > rw.bound + 1e-12 {
            return bad("reward parameter exceeds bound".into());
        }
        match &rw.features {
            RewardFeatures::Additive(t) => {
                if t.len() != ns || t.iter().any(|pa| pa.len() != na || pa.iter().any(|f| f.len() != rw.dim())) {
                    return bad("reward feature shape mismatch".into());
                }
                // Sufficient condition for ‖φ_R(τ)‖ ≤ 1 over all trajectories.
                let worst = t.iter().flatten().map(|f| norm(f)).fold(0.0, f64::max);
                if worst * h as f64 > 1.0 + 1e-9 {
                    return bad("trajectory reward features may exceed unit norm".into());
                }
            }
            RewardFeatures::Table(rows) => {
                for r in rows {
                    if r.features.len() != rw.dim() || norm(&r.features) > 1.0 + 1e-9 {
                        return bad("reward table row has wrong dimension or norm".into());
                    }
                    self.check_steps(&r.steps)?;
                }
            }
        }
        self.reference.check_shape(h, ns, na).map_err(|e| ModelError::Invalid(format!("reference policy: {e}")))?;
        Ok(())
    }

    fn check_steps(&self, steps: &[(usize, usize)]) -> Result<(), ModelError> {
        if steps.len() != self.horizon {
            return Err(ModelError::BadTrajectory(format!("length {} != horizon {}", steps.len(), self.horizon)));
        }
        if steps.first().map(|s| s.0) != Some(self.initial_state) {
            return Err(ModelError::BadTrajectory("does not start at the initial state".into()));
        }
        if steps.iter().any(|&(s, a)| s >= self.n_states || a >= self.n_actions) {
            return Err(ModelError::BadTrajectory("state or action out of range".into()));
        }
        Ok(())
    }

    pub fn check_trajectory(&self, tau: &Trajectory) -> Result<(), ModelError> {
        self.check_steps(&tau.steps)
    }

    pub fn comparison_prob(&self, tau: &Trajectory, other: &Trajectory) -> Result<f64, ModelError> {
        self.check_trajectory(tau)?;
        self.check_trajectory(other)?;
        Ok(comparison_prob(&self.reward, &self.link, tau, other))
    }

    /// Per-step reward r(s, a) = ⟨φ(s, a), θ_R⟩ when the features are additive.
    pub fn step_rewards(&self, theta: &[f64]) -> Option<Vec<Vec<f64>>> {
        match &self.reward.features {
            RewardFeatures::Additive(t) => Some(t.iter().map(|pa| pa.iter().map(|f| dot(f, theta)).collect()).collect()),
            RewardFeatures::Table(_) => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let inst: Self = serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

// ── Small vector helpers ──

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
