//! Step 2: value-targeted weighted regression for the transition model, the
//! confidence set 𝒫_k, probe selection, transition bonuses and w₃/w₄.

use serde::{Deserialize, Serialize};

use crate::comparison_learning::{LearnError, WeightedDataset};
use crate::env::argmax_first;
use crate::linalg::{min_eigenvector, quad, ridge_solve, Gram};
use crate::model::{dot, KernelTable, Trajectory, TransitionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// Value-to-go of the current greedy policy.
    Greedy,
    /// H·1{s′ = state}.
    Indicator(usize),
}

/// V_{t,h+1}: S → [0, H], fixed before s′ is revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeValue {
    pub kind: ProbeKind,
    pub values: Vec<f64>,
    pub episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPayload {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    /// ψ = Σ_{s′} φ_P(s, a, s′) V(s′) for the stamped probe.
    pub psi: Vec<f64>,
    /// y = V(s′).
    pub target: f64,
    pub probe: ProbeValue,
}

pub type TransitionData = WeightedDataset<TransitionPayload>;

impl TransitionPayload {
    /// Builds the regression sample; the target reads the probe stamped earlier.
    pub fn new(model: &TransitionModel, state: usize, action: usize, next_state: usize, probe: ProbeValue) -> Self {
        let psi = model.psi(state, action, &probe.values);
        let target = probe.values[next_state];
        Self { state, action, next_state, psi, target, probe }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionConfidence {
    /// θ̂_{P,h}, one per step.
    pub thetas: Vec<Vec<f64>>,
    /// Σ_{k,h} = α^P I + Σ w·m·ψ ψᵀ.
    pub grams: Vec<Gram>,
    pub beta: f64,
}

impl TransitionConfidence {
    pub fn build(data: &[TransitionData], dim: usize, alpha: f64, beta: f64) -> Result<Self, LearnError> {
        let thetas = fit_transition(data, dim, alpha)?;
        let grams = data
            .iter()
            .map(|d| Gram::build(dim, alpha, d.samples.iter().map(|s| (&s.payload.psi[..], s.weight * s.multiplicity))))
            .collect::<Option<Vec<_>>>()
            .ok_or(LearnError::Singular)?;
        Ok(Self { thetas, grams, beta })
    }

    pub fn width(&self, h: usize, psi: &[f64]) -> f64 {
        self.beta.max(0.0).sqrt() * self.grams[h].inv_norm_sq(psi).sqrt()
    }
}

/// Ridge regression per step: argmin α‖θ‖² + Σ w·m·(⟨ψ, θ⟩ − y)².
pub fn fit_transition(data: &[TransitionData], dim: usize, alpha: f64) -> Result<Vec<Vec<f64>>, LearnError> {
    data.iter()
        .map(|d| {
            ridge_solve(dim, alpha, d.samples.iter().map(|s| (&s.payload.psi[..], s.payload.target, s.weight * s.multiplicity)))
                .ok_or(LearnError::Singular)
        })
        .collect()
}

// ── Probes ──

/// Dictionary for step h: the greedy value-to-go first, then H·1{s′} in state order.
pub fn probe_dictionary(greedy_next: &[f64], horizon: usize, episode: usize) -> Vec<ProbeValue> {
    let n = greedy_next.len();
    let hh = horizon as f64;
    let mut out = vec![ProbeValue { kind: ProbeKind::Greedy, values: greedy_next.to_vec(), episode }];
    for s in 0..n {
        let mut v = vec![0.0; n];
        v[s] = hh;
        out.push(ProbeValue { kind: ProbeKind::Indicator(s), values: v, episode });
    }
    out
}

/// The dictionary element with the largest confidence width at (s, a); the
/// first one wins ties.
pub fn choose_probe(
    conf: &TransitionConfidence,
    model: &TransitionModel,
    h: usize,
    state: usize,
    action: usize,
    dictionary: &[ProbeValue],
) -> ProbeValue {
    let widths: Vec<f64> = dictionary.iter().map(|p| conf.width(h, &model.psi(state, action, &p.values))).collect();
    let i = argmax_first(&widths, 0.0).unwrap_or(0);
    dictionary[i].clone()
}

// ── Confidence radius ──

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPInputs {
    pub episodes: usize,
    pub horizon: usize,
    pub n_p: f64,
    pub cover_log: f64,
    pub delta: f64,
    pub gamma_p: Option<f64>,
}

/// C_P(t, H, δ) = H²t + (3H²/2) ln(2/δ).
pub fn c_p(t: f64, horizon: usize, delta: f64) -> f64 {
    let h2 = (horizon * horizon) as f64;
    h2 * t + 1.5 * h2 * (2.0 / delta).ln()
}

pub fn beta_p(p: &BetaPInputs) -> Result<f64, LearnError> {
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(LearnError::BadDelta(p.delta));
    }
    if [p.n_p, p.cover_log].iter().any(|v| !v.is_finite() || *v < 0.0) || p.episodes == 0 || p.horizon == 0 {
        return Err(LearnError::BadParameter("β_P inputs must be finite and non-negative".into()));
    }
    let eta = p.horizon as f64 / 2.0;
    let gamma = p.gamma_p.unwrap_or(1.0 / p.episodes as f64);
    Ok(10.0 * eta * eta * p.cover_log + 10.0 * gamma * (gamma * p.n_p + (p.n_p * c_p(p.n_p, p.horizon, p.delta)).sqrt()))
}

// ── Bonuses and membership ──

/// Per-(h, s, a) bonus w₄,h · min(H, √β · max_V ‖ψ(s, a; V)‖_{Σ_h⁻¹}). Steps
/// without a Gram matrix (the final step has no successor) contribute zero.
/// `greedy_next[h]` is the greedy value-to-go at step h + 1.
pub fn bonus_table(
    conf: &TransitionConfidence,
    model: &TransitionModel,
    greedy_next: &[Vec<f64>],
    w4: &[f64],
    horizon: usize,
) -> Vec<Vec<Vec<f64>>> {
    let n_states = model.features.len();
    let n_actions = model.features.first().map_or(0, Vec::len);
    let hh = horizon as f64;
    (0..horizon)
        .map(|h| {
            (0..n_states)
                .map(|s| {
                    (0..n_actions)
                        .map(|a| {
                            if h >= conf.grams.len() {
                                return 0.0;
                            }
                            let dict = probe_dictionary(&greedy_next[h], horizon, 0);
                            let best = dict.iter().map(|p| conf.width(h, &model.psi(s, a, &p.values))).fold(0.0, f64::max);
                            w4[h] * best.min(hh)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// b^P(τ) = Σ_h bonus(h, s_h, a_h).
pub fn transition_bonus(table: &[Vec<Vec<f64>>], tau: &Trajectory) -> f64 {
    tau.steps.iter().enumerate().map(|(h, &(s, a))| table[h][s][a]).sum()
}

/// Σ_h Σ w·m·⟨ψ, θ − θ̂_h⟩² over stored samples.
pub fn tpl_to(conf: &TransitionConfidence, thetas: &[Vec<f64>], data: &[TransitionData]) -> f64 {
    data.iter()
        .enumerate()
        .map(|(h, d)| {
            d.samples
                .iter()
                .map(|s| {
                    let diff = dot(&s.payload.psi, &thetas[h]) - dot(&s.payload.psi, &conf.thetas[h]);
                    s.weight * s.multiplicity * diff * diff
                })
                .sum::<f64>()
        })
        .sum()
}

pub fn contains_truth_p(conf: &TransitionConfidence, theta_star: &[Vec<f64>], data: &[TransitionData]) -> bool {
    tpl_to(conf, theta_star, data) <= conf.beta
}

/// w₄,h = [D₄(P̂, P′, N+1, h)]_{≥1}^{−1/2} with P′ on the ellipsoid boundary
/// along the top eigendirection of Σ_h⁻¹.
pub fn w4_weight(conf: &TransitionConfidence, h: usize, data: &TransitionData, alpha: f64) -> f64 {
    let gram = &conf.grams[h];
    let v = min_eigenvector(&gram.matrix);
    let n = quad(&gram.matrix, &v).sqrt();
    let scale = if n > 0.0 { conf.beta.max(0.0).sqrt() / n } else { 0.0 };
    let d4 = alpha
        + data
            .samples
            .iter()
            .map(|s| {
                let d = scale * dot(&s.payload.psi, &v);
                s.multiplicity * s.weight * d * d
            })
            .sum::<f64>();
    1.0 / d4.max(1.0).sqrt()
}

// ── Planning kernel ──

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Kernel induced by θ̂ with each row projected onto the simplex.
pub fn projected_kernel(model: &TransitionModel, thetas: &[Vec<f64>]) -> KernelTable {
    thetas
        .iter()
        .map(|th| {
            model
                .table_for(th)
                .into_iter()
                .map(|per_a| per_a.into_iter().map(|row| project_simplex(&row)).collect())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tabular_two_state() -> TransitionModel {
        // One state, one action, two next states; θ = (P(0), P(1)).
        TransitionModel {
            features: vec![vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]],
            theta: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            bound: 1.0,
        }
    }

    #[test]
    fn empty_fit_is_zero() {
        let th = fit_transition(&[TransitionData::new()], 3, 1.0).unwrap();
        assert_eq!(th, vec![vec![0.0; 3]]);
    }

    #[test]
    fn scalar_sample_hand_solution() {
        let mut d = TransitionData::new();
        let probe = ProbeValue { kind: ProbeKind::Greedy, values: vec![2.0], episode: 1 };
        let model = TransitionModel { features: vec![vec![vec![vec![0.5]]]], theta: vec![vec![1.0]], bound: 1.0 };
        d.push(TransitionPayload::new(&model, 0, 0, 0, probe), 1, 1.0);
        // ψ = 1, y = 2, α = 1: (1 + 1)θ = 2.
        let th = fit_transition(&[d], 1, 1.0).unwrap();
        assert!((th[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_radius_picks_first_probe() {
        let model = tabular_two_state();
        let conf = TransitionConfidence { thetas: vec![vec![0.0; 2]; 2], grams: vec![Gram::ridge(2, 1.0); 2], beta: 0.0 };
        let dict = probe_dictionary(&[0.3, 0.9], 2, 4);
        let p = choose_probe(&conf, &model, 0, 0, 0, &dict);
        assert_eq!(p.kind, ProbeKind::Greedy);
    }

    #[test]
    fn probe_follows_uncertainty() {
        let model = tabular_two_state();
        // Coordinate 0 is well estimated, coordinate 1 is not.
        let gram = Gram::build(2, 1.0, [(&[1.0, 0.0][..], 100.0)]).unwrap();
        let conf = TransitionConfidence { thetas: vec![vec![0.0; 2]; 2], grams: vec![gram.clone(), gram], beta: 1.0 };
        let dict = probe_dictionary(&[0.0, 0.0], 2, 4);
        let p = choose_probe(&conf, &model, 0, 0, 0, &dict);
        assert_eq!(p.kind, ProbeKind::Indicator(1));
        // Brute-force widths over the dictionary agree.
        let widths: Vec<f64> = dict.iter().map(|d| conf.width(0, &model.psi(0, 0, &d.values))).collect();
        assert!(widths[2] > widths[1] && widths[2] > widths[0]);
    }

    #[test]
    fn beta_p_points() {
        let base = BetaPInputs { episodes: 10, horizon: 2, n_p: 0.0, cover_log: 3.0, delta: 0.1, gamma_p: None };
        assert!((beta_p(&base).unwrap() - 10.0 * 3.0).abs() < 1e-12);
        let h4 = BetaPInputs { horizon: 4, ..base };
        assert!((beta_p(&h4).unwrap() - 4.0 * beta_p(&base).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bonus_single_step_cap() {
        // H = 1: the indicator probe has ψ = 0.5, so √4 · 0.5 = 1.0 = cap.
        let model = TransitionModel { features: vec![vec![vec![vec![0.5]]]], theta: vec![vec![2.0]], bound: 2.0 };
        let conf = TransitionConfidence { thetas: vec![vec![0.0]], grams: vec![Gram::ridge(1, 1.0)], beta: 4.0 };
        let table = bonus_table(&conf, &model, &[vec![0.0]], &[1.0], 1);
        assert!((table[0][0][0] - 1.0).abs() < 1e-15);
        let tau = Trajectory { steps: vec![(0, 0)], episode: 1 };
        assert!((transition_bonus(&table, &tau) - 1.0).abs() < 1e-15);
        let zero = TransitionConfidence { beta: 0.0, ..conf };
        assert_eq!(bonus_table(&zero, &model, &[vec![0.0]], &[1.0], 1)[0][0][0], 0.0);
    }

    #[test]
    fn bonus_zero_past_last_gram() {
        let model = TransitionModel { features: vec![vec![vec![vec![0.25]]]], theta: vec![vec![4.0]; 2], bound: 4.0 };
        let conf = TransitionConfidence { thetas: vec![vec![0.0]], grams: vec![Gram::ridge(1, 1.0)], beta: 4.0 };
        let table = bonus_table(&conf, &model, &[vec![0.0]], &[1.0], 2);
        // √4 · 0.25·2 = 1.0, below the cap H = 2.
        assert!((table[0][0][0] - 1.0).abs() < 1e-15);
        assert_eq!(table[1][0][0], 0.0);
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        let p = project_simplex(&[1.2, -0.1, 0.1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert!((p[0] - 1.0).abs() < 1e-12);
    }
}
