//! Multi-source preference labels with per-source deviation schedules and a
//! hard budget ledger on Σ_k |p_k^m − p_k^*|.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::dot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("cannot average an empty label vector")]
    EmptyLabels,
    #[error("a panel needs at least one source")]
    NoSources,
    #[error("budget must be finite and non-negative, got {0}")]
    BadBudget(f64),
    #[error("schedule parameter out of range: {0}")]
    BadParameter(String),
}

fn default_fraction() -> f64 {
    0.1
}

fn default_threshold() -> f64 {
    0.5
}

fn full_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    Zero,
    /// ω/K every episode, pushed upward unless that would leave [0, 1].
    Uniform,
    /// The whole budget over the first ⌈fraction·K⌉ episodes, pushed toward 1 − p*.
    FrontLoaded {
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
    /// Labels are Bernoulli(1/2) whatever the pair.
    UninformativeCase2,
    /// Inflate p to 1 on pairs whose feature difference has inner product with
    /// `decoy` above `threshold`, during the first ⌈fraction·K⌉ episodes.
    OptimismAdversarial {
        decoy: Vec<f64>,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default = "full_fraction")]
        fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationSchedule {
    pub budget: f64,
    pub kind: ScheduleKind,
}

/// What a schedule may look at: the pair and its ideal probability.
#[derive(Debug, Clone, Copy)]
pub struct PairContext<'a> {
    pub p_star: f64,
    /// φ_R(τ) − φ_R(τ₀).
    pub features: &'a [f64],
}

impl DeviationSchedule {
    pub fn new(kind: ScheduleKind, budget: f64) -> Self {
        Self { kind, budget }
    }

    pub fn zero() -> Self {
        Self::new(ScheduleKind::Zero, 0.0)
    }

    fn validate(&self) -> Result<(), FeedbackError> {
        if !self.budget.is_finite() || self.budget < 0.0 {
            return Err(FeedbackError::BadBudget(self.budget));
        }
        match &self.kind {
            ScheduleKind::FrontLoaded { fraction } | ScheduleKind::OptimismAdversarial { fraction, .. }
                if !(*fraction > 0.0 && *fraction <= 1.0) =>
            {
                Err(FeedbackError::BadParameter(format!("fraction {fraction} not in (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Signed deviation the schedule asks for at episode `k` (1-based) of `horizon`.
    pub fn requested(&self, ctx: &PairContext<'_>, k: usize, horizon: usize) -> f64 {
        let kk = horizon.max(1) as f64;
        let window = |fraction: f64| (fraction * kk).ceil().max(1.0) as usize;
        match &self.kind {
            ScheduleKind::Zero => 0.0,
            ScheduleKind::Uniform => {
                let step = self.budget / kk;
                if ctx.p_star + step <= 1.0 {
                    step
                } else {
                    -step
                }
            }
            ScheduleKind::FrontLoaded { fraction } => {
                let n = window(*fraction);
                if k > n {
                    return 0.0;
                }
                let step = self.budget / n as f64;
                if ctx.p_star <= 0.5 {
                    step
                } else {
                    -step
                }
            }
            ScheduleKind::UninformativeCase2 => 0.5 - ctx.p_star,
            ScheduleKind::OptimismAdversarial { decoy, threshold, fraction } => {
                if k <= window(*fraction) && dot(decoy, ctx.features) > *threshold {
                    1.0 - ctx.p_star
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDiagnostics {
    pub p_star: f64,
    pub p: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetLine {
    pub spent: f64,
    pub remaining: f64,
}

#[derive(Debug, Clone)]
pub struct FeedbackPanel {
    schedules: Vec<DeviationSchedule>,
    spent: Vec<f64>,
    horizon: usize,
}

impl FeedbackPanel {
    pub fn new(schedules: Vec<DeviationSchedule>, horizon: usize) -> Result<Self, FeedbackError> {
        if schedules.is_empty() {
            return Err(FeedbackError::NoSources);
        }
        for s in &schedules {
            s.validate()?;
        }
        let spent = vec![0.0; schedules.len()];
        Ok(Self { schedules, spent, horizon })
    }

    /// M sources sharing one deviation process.
    pub fn shared(schedule: DeviationSchedule, sources: usize, horizon: usize) -> Result<Self, FeedbackError> {
        Self::new(vec![schedule; sources], horizon)
    }

    pub fn ideal(sources: usize, horizon: usize) -> Result<Self, FeedbackError> {
        Self::shared(DeviationSchedule::zero(), sources, horizon)
    }

    pub fn sources(&self) -> usize {
        self.schedules.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn schedules(&self) -> &[DeviationSchedule] {
        &self.schedules
    }

    /// Largest per-source budget ω.
    pub fn omega(&self) -> f64 {
        self.schedules.iter().map(|s| s.budget).fold(0.0, f64::max)
    }

    /// Draws one label per source. Deviations are truncated so no source ever
    /// overspends; the clip to [0, 1] is charged to the ledger.
    pub fn sample_labels<R: Rng + ?Sized>(&mut self, ctx: &PairContext<'_>, k: usize, rng: &mut R) -> (Vec<u8>, LabelDiagnostics) {
        let m = self.schedules.len();
        let mut labels = Vec::with_capacity(m);
        let mut p = Vec::with_capacity(m);
        let mut delta = Vec::with_capacity(m);
        for (sched, spent) in self.schedules.iter().zip(self.spent.iter_mut()) {
            let req = sched.requested(ctx, k, self.horizon);
            let target = (ctx.p_star + req).clamp(0.0, 1.0);
            let mut dev = target - ctx.p_star;
            let remaining = (sched.budget - *spent).max(0.0);
            if dev.abs() > remaining {
                dev = remaining.copysign(dev);
            }
            let pm = (ctx.p_star + dev).clamp(0.0, 1.0);
            let realized = pm - ctx.p_star;
            *spent += realized.abs();
            labels.push(u8::from(rng.gen::<f64>() < pm));
            p.push(pm);
            delta.push(realized);
        }
        (labels, LabelDiagnostics { p_star: ctx.p_star, p, delta })
    }

    pub fn budget_report(&self) -> Vec<BudgetLine> {
        self.schedules
            .iter()
            .zip(&self.spent)
            .map(|(s, &spent)| BudgetLine { spent, remaining: s.budget - spent })
            .collect()
    }

    pub fn max_spent(&self) -> f64 {
        self.spent.iter().copied().fold(0.0, f64::max)
    }

    pub fn within_budget(&self, tol: f64) -> bool {
        self.schedules.iter().zip(&self.spent).all(|(s, &spent)| spent <= s.budget + tol)
    }
}

/// f̄ = (1/M) Σ_m f^m.
pub fn averaged_label(labels: &[u8]) -> Result<f64, FeedbackError> {
    if labels.is_empty() {
        return Err(FeedbackError::EmptyLabels);
    }
    Ok(labels.iter().map(|&l| f64::from(l)).sum::<f64>() / labels.len() as f64)
}

/// Sub-Gaussian parameter of f̄ − p̄, η_R = 1/(2√M).
pub fn averaged_noise_scale(sources: usize) -> f64 {
    0.5 / (sources as f64).sqrt()
}
