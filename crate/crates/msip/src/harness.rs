//! Experiment specs, parallel sweeps, CSV persistence, SVG plots and the
//! confidence-calibration experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentConfig, RegretRecord};
use crate::env::UtilityMode;
use crate::feedback::{DeviationSchedule, FeedbackPanel, ScheduleKind};
use crate::instances::{
    build_case1, build_case2, build_counterexample, random_tiny, Case1Params, Case2Params, CounterexampleParams,
};
use crate::model::LinearInstance;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 18] = [
    "run_id",
    "agent",
    "K",
    "M",
    "omega",
    "seed",
    "episode",
    "instant_regret",
    "cum_regret",
    "l_star",
    "l_pi",
    "mean_w1",
    "mean_w3",
    "beta_r",
    "beta_p",
    "filtered_cmp",
    "filtered_tr",
    "ledger_spend",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("nothing to plot: {0}")]
    EmptySelection(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

// ── Spec ──

fn default_case1_c() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "factory", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Bandit with one good arm; the good arm is drawn from the cell seed.
    Case1 {
        arms: usize,
        #[serde(default = "default_case1_c")]
        c: f64,
    },
    /// Uninformative feedback; the sub-instance is chosen by seed parity.
    Case2,
    Counterexample { dim: usize },
    RandomTiny { n_states: usize, n_actions: usize, horizon: usize, d_t: usize, d_p: usize, instance_seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub instance: InstanceSpec,
    /// Overrides the factory's own deviation process; budget comes from the ω grid.
    #[serde(default)]
    pub schedule: Option<ScheduleKind>,
    pub agents: Vec<AgentConfig>,
    pub episodes: usize,
    pub sources: Vec<usize>,
    pub omegas: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "one_worker")]
    pub workers: usize,
}

fn one_worker() -> usize {
    1
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not {SCHEMA_VERSION}", self.schema_version));
        }
        if self.agents.is_empty() || self.seeds.is_empty() || self.sources.is_empty() || self.omegas.is_empty() {
            return bad("agents, seeds, sources and omegas must be non-empty".into());
        }
        if self.episodes == 0 {
            return bad("K must be at least 1".into());
        }
        if self.sources.contains(&0) || self.omegas.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("M must be ≥ 1 and ω finite and ≥ 0".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        for a in &self.agents {
            a.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
        }
        Ok(())
    }

    /// Cells in canonical order: agent, then M, then ω, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (agent, _) in self.agents.iter().enumerate() {
            for &sources in &self.sources {
                for &omega in &self.omegas {
                    for &seed in &self.seeds {
                        out.push(Cell { agent, sources, omega, seed });
                    }
                }
            }
        }
        out
    }

    pub fn with_mode(mut self, mode: UtilityMode) -> Self {
        for a in &mut self.agents {
            a.planner_mode = mode;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub agent: usize,
    pub sources: usize,
    pub omega: f64,
    pub seed: u64,
}

impl Cell {
    pub fn run_id(&self, spec: &ExperimentSpec) -> String {
        format!("{}-a{}-M{}-w{}-s{}", spec.agents[self.agent].kind.name(), self.agent, self.sources, fmt_real(self.omega), self.seed)
    }
}

/// Instance and panel for one cell.
pub fn build_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<(LinearInstance, FeedbackPanel), String> {
    let k = spec.episodes;
    let m = cell.sources;
    let (instance, default_panel) = match &spec.instance {
        InstanceSpec::Case1 { arms, c } => {
            let b = build_case1(&Case1Params { arms: *arms, sources: m, episodes: k, c: *c }, cell.seed).map_err(|e| e.to_string())?;
            (b.instance, b.panel)
        }
        InstanceSpec::Case2 => {
            let b = build_case2(&Case2Params { omega: cell.omega, episodes: k, sources: m }).map_err(|e| e.to_string())?;
            let [i1, i2] = b.instances;
            (if cell.seed.is_multiple_of(2) { i1 } else { i2 }, b.panel)
        }
        InstanceSpec::Counterexample { dim } => {
            let b = build_counterexample(&CounterexampleParams { omega: cell.omega, episodes: k, dim: *dim, sources: m })
                .map_err(|e| e.to_string())?;
            (b.instance, b.panel)
        }
        InstanceSpec::RandomTiny { n_states, n_actions, horizon, d_t, d_p, instance_seed } => {
            let inst = random_tiny(*n_states, *n_actions, *horizon, *d_t, *d_p, *instance_seed);
            let panel = FeedbackPanel::shared(DeviationSchedule::new(ScheduleKind::Zero, cell.omega), m, k).map_err(|e| e.to_string())?;
            (inst, panel)
        }
    };
    let panel = match &spec.schedule {
        Some(kind) => FeedbackPanel::shared(DeviationSchedule::new(kind.clone(), cell.omega), m, k).map_err(|e| e.to_string())?,
        None => default_panel,
    };
    Ok((instance, panel))
}

// ── Sweeps ──

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub run_id: String,
    pub outcome: Result<Vec<RegretRecord>, String>,
}

pub fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> CellResult {
    let run_id = cell.run_id(spec);
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<Vec<RegretRecord>, String> {
        let (instance, panel) = build_cell(spec, cell)?;
        let cfg = spec.agents[cell.agent].clone();
        let mut agent = Agent::new(cfg, instance, panel, spec.episodes, cell.seed).map_err(|e| e.to_string())?.with_run_id(run_id.clone());
        agent
            .run_traced()
            .map(|v| v.into_iter().map(|(r, _)| r).collect())
            .map_err(|f| format!("episode {}: {}", f.episode, f.error))
    }));
    let outcome = match attempt {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    };
    if let Err(e) = &outcome {
        log::error!("cell {run_id} failed: {e}");
    }
    CellResult { cell: *cell, run_id, outcome }
}

/// Runs every cell on a pool of `spec.workers` threads; results keep cell order.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<CellResult>, HarnessError> {
    spec.validate()?;
    let cells = spec.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(|c| run_cell(spec, c)).collect()))
}

pub fn sweep_records(results: &[CellResult]) -> Vec<RegretRecord> {
    results.iter().filter_map(|r| r.outcome.as_ref().ok()).flatten().cloned().collect()
}

/// Per-cell CSV files under `dir/cells`, the merged `dir/results.csv`, and
/// `dir/failures.log` when any cell failed.
pub fn write_sweep(results: &[CellResult], dir: &Path) -> Result<PathBuf, HarnessError> {
    let cells = dir.join("cells");
    fs::create_dir_all(&cells).map_err(io_err(&cells))?;
    let mut failures = String::new();
    for r in results {
        match &r.outcome {
            Ok(recs) => emit_csv(recs, &cells.join(format!("{}.csv", r.run_id)))?,
            Err(e) => writeln!(failures, "{}\t{}", r.run_id, e).expect("string write"),
        }
    }
    let merged = dir.join("results.csv");
    emit_csv(&sweep_records(results), &merged)?;
    let log = dir.join("failures.log");
    if failures.is_empty() {
        if log.exists() {
            fs::remove_file(&log).map_err(io_err(&log))?;
        }
    } else {
        fs::write(&log, failures).map_err(io_err(&log))?;
    }
    Ok(merged)
}

// ── CSV ──

/// Shortest-form rendering with 12 significant digits, like C's `%.12g`.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn emit_csv(records: &[RegretRecord], path: &Path) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, csv_bytes(records)?).map_err(io_err(path))
}

pub fn csv_bytes(records: &[RegretRecord]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.run_id.clone(),
            r.agent.clone(),
            r.episodes.to_string(),
            r.sources.to_string(),
            fmt_real(r.omega),
            r.seed.to_string(),
            r.episode.to_string(),
            fmt_real(r.instant_regret),
            fmt_real(r.cum_regret),
            fmt_real(r.l_star),
            fmt_real(r.l_pi),
            fmt_real(r.mean_w1),
            fmt_real(r.mean_w3),
            fmt_real(r.beta_r),
            fmt_real(r.beta_p),
            r.filtered_cmp.to_string(),
            r.filtered_tr.to_string(),
            fmt_real(r.ledger_spend),
        ])?;
    }
    w.into_inner().map_err(|e| HarnessError::Spec(e.to_string()))
}

pub fn read_csv(path: &Path) -> Result<Vec<RegretRecord>, HarnessError> {
    let text = fs::read(path).map_err(io_err(path))?;
    parse_csv(&text)
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<RegretRecord>, HarnessError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Spec(format!("unexpected CSV header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let f = |i: usize| -> Result<f64, HarnessError> {
            row[i].parse().map_err(|_| HarnessError::Spec(format!("bad real {:?} in column {}", &row[i], CSV_HEADER[i])))
        };
        let u = |i: usize| -> Result<u64, HarnessError> {
            row[i].parse().map_err(|_| HarnessError::Spec(format!("bad integer {:?} in column {}", &row[i], CSV_HEADER[i])))
        };
        out.push(RegretRecord {
            run_id: row[0].to_string(),
            agent: row[1].to_string(),
            episodes: u(2)? as usize,
            sources: u(3)? as usize,
            omega: f(4)?,
            seed: u(5)?,
            episode: u(6)? as usize,
            instant_regret: f(7)?,
            cum_regret: f(8)?,
            l_star: f(9)?,
            l_pi: f(10)?,
            mean_w1: f(11)?,
            mean_w3: f(12)?,
            beta_r: f(13)?,
            beta_p: f(14)?,
            filtered_cmp: u(15)? as usize,
            filtered_tr: u(16)? as usize,
            ledger_spend: f(17)?,
        });
    }
    Ok(out)
}

// ── Plots ──

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    RegretVsK,
    RegretVsM,
    RegretVsOmega,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "regret-vs-k" => Ok(PlotKind::RegretVsK),
            "regret-vs-m" => Ok(PlotKind::RegretVsM),
            "regret-vs-omega" => Ok(PlotKind::RegretVsOmega),
            _ => Err(format!("unknown plot kind {s}")),
        }
    }
}

/// One plotted series: x, mean, standard error, seed count.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64, usize)>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups records into series of mean ± SE over seeds.
pub fn plot_series(records: &[RegretRecord], kind: PlotKind) -> Vec<Series> {
    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    let key_bits = |x: f64| x.to_bits();
    match kind {
        PlotKind::RegretVsK => {
            for r in records {
                let label = format!("{} M={} ω={}", r.agent, r.sources, fmt_real(r.omega));
                groups.entry(label).or_default().entry(r.episode as u64).or_default().push(r.cum_regret);
            }
        }
        PlotKind::RegretVsM | PlotKind::RegretVsOmega => {
            let mut last: BTreeMap<&str, &RegretRecord> = BTreeMap::new();
            for r in records {
                let e = last.entry(&r.run_id).or_insert(r);
                if r.episode > e.episode {
                    *e = r;
                }
            }
            for r in last.values() {
                let (label, x) = match kind {
                    PlotKind::RegretVsM => (format!("{} ω={}", r.agent, fmt_real(r.omega)), r.sources as f64),
                    _ => (format!("{} M={}", r.agent, r.sources), r.omega),
                };
                groups.entry(label).or_default().entry(key_bits(x)).or_default().push(r.cum_regret);
            }
        }
    }
    groups
        .into_iter()
        .map(|(label, pts)| {
            let mut points: Vec<(f64, f64, f64, usize)> = pts
                .into_iter()
                .map(|(x, v)| {
                    let xv = if kind == PlotKind::RegretVsK { x as f64 } else { f64::from_bits(x) };
                    let (m, se) = mean_se(&v);
                    (xv, m, se, v.len())
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn render_svg(series: &[Series], kind: PlotKind) -> Result<String, HarnessError> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(HarnessError::EmptySelection("no records".into()));
    }
    let (w, h, ml, mr, mt, mb) = (720.0, 440.0, 70.0, 190.0, 20.0, 50.0);
    let pts = series.iter().flat_map(|s| &s.points);
    let xmin = pts.clone().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let xmax = pts.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let ymax = pts.clone().map(|p| p.1 + p.2).fold(0.0, f64::max);
    let ymin = pts.map(|p| p.1 - p.2).fold(0.0, f64::min);
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let yspan = if ymax > ymin { ymax - ymin } else { 1.0 };
    let px = |x: f64| ml + (x - xmin) / xspan * (w - ml - mr);
    let py = |y: f64| h - mb - (y - ymin) / yspan * (h - mt - mb);
    let xlabel = match kind {
        PlotKind::RegretVsK => "episode k",
        PlotKind::RegretVsM => "sources M",
        PlotKind::RegretVsOmega => "imperfection budget ω",
    };
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    let (x0, y0, x1, y1) = (ml, h - mb, w - mr, mt);
    writeln!(s, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" stroke="black" fill="none"/>"#).unwrap();
    for i in 0..=4 {
        let fx = xmin + xspan * i as f64 / 4.0;
        let fy = ymin + yspan * i as f64 / 4.0;
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, px(fx), y0 + 16.0, fmt_tick(fx)).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, x0 - 6.0, py(fy) + 4.0, fmt_tick(fy)).unwrap();
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{xlabel}</text>"#, (x0 + x1) / 2.0, h - 10.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">cumulative regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.points.iter().any(|p| p.2 > 0.0) {
            let upper: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1 + p.2))).collect();
            let lower: Vec<String> = ser.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1 - p.2))).collect();
            writeln!(s, r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" ")).unwrap();
        }
        let line: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" ")).unwrap();
        let ly = mt + 14.0 + 18.0 * i as f64;
        writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, x1 + 10.0, x1 + 30.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#, x1 + 36.0, ly + 4.0, escape(&ser.label)).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    fmt_real(r)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_plot(records: &[RegretRecord], kind: PlotKind, path: &Path) -> Result<(), HarnessError> {
    let svg = render_svg(&plot_series(records, kind), kind)?;
    fs::write(path, svg).map_err(io_err(path))
}

// ── Calibration ──

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub seeds: usize,
    /// Seeds where θ*_R stayed in 𝒬_k for every k.
    pub covered_r: usize,
    /// Seeds where θ*_P stayed in 𝒫_k for every k (equal to `seeds` when not learned).
    pub covered_p: usize,
    pub covered_both: usize,
    pub failed_runs: usize,
}

impl CalibrationReport {
    pub fn fraction(&self) -> f64 {
        self.covered_both as f64 / self.seeds.max(1) as f64
    }
}

/// Runs `config` on every seed and counts runs whose confidence sets contained
/// the truth at every episode.
pub fn calibrate(
    config: &AgentConfig,
    instance: &LinearInstance,
    panel: &FeedbackPanel,
    episodes: usize,
    seeds: &[u64],
    workers: usize,
) -> Result<CalibrationReport, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    let per_seed: Vec<Option<(bool, bool)>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut agent = Agent::new(config.clone(), instance.clone(), panel.clone(), episodes, seed).ok()?;
                let trace = agent.run_traced().ok()?;
                let r = trace.iter().all(|(_, t)| t.truth_in_q);
                let p = trace.iter().all(|(_, t)| t.truth_in_p.unwrap_or(true));
                Some((r, p))
            })
            .collect()
    });
    let ok: Vec<(bool, bool)> = per_seed.iter().flatten().copied().collect();
    Ok(CalibrationReport {
        seeds: seeds.len(),
        covered_r: ok.iter().filter(|x| x.0).count(),
        covered_p: ok.iter().filter(|x| x.1).count(),
        covered_both: ok.iter().filter(|x| x.0 && x.1).count(),
        failed_runs: seeds.len() - ok.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;

    fn tiny_spec(k: usize) -> ExperimentSpec {
        ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            instance: InstanceSpec::RandomTiny { n_states: 2, n_actions: 2, horizon: 2, d_t: 2, d_p: 2, instance_seed: 1 },
            schedule: None,
            agents: vec![AgentConfig::new(AgentKind::RlMsip)],
            episodes: k,
            sources: vec![2],
            omegas: vec![0.0],
            seeds: vec![3],
            output_dir: None,
            workers: 1,
        }
    }

    #[test]
    fn fmt_real_matches_printf_g() {
        assert_eq!(fmt_real(0.0), "0");
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(0.1), "0.1");
        assert_eq!(fmt_real(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_real(2.0 / 3.0 * 1000.0), "666.666666667");
        assert_eq!(fmt_real(1e-7), "1e-07");
        assert_eq!(fmt_real(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_real(-0.000012345), "-1.2345e-05");
        assert_eq!(fmt_real(0.0001), "0.0001");
    }

    #[test]
    fn one_cell_gives_k_records() {
        let res = run_sweep(&tiny_spec(10)).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].outcome.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let bytes = csv_bytes(&[]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_round_trip() {
        let recs = sweep_records(&run_sweep(&tiny_spec(5)).unwrap());
        let bytes = csv_bytes(&recs[..1]).unwrap();
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 2);
        let bytes = csv_bytes(&recs).unwrap();
        let back = parse_csv(&bytes).unwrap();
        assert_eq!(csv_bytes(&back).unwrap(), bytes);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(fmt_real(a.cum_regret).parse::<f64>().unwrap(), b.cum_regret);
            assert_eq!(a.episode, b.episode);
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = serde_json::to_value(tiny_spec(3)).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
        let mut v = serde_json::to_value(tiny_spec(3)).unwrap();
        v["schema_version"] = serde_json::json!(2);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn plot_series_shapes() {
        let mut spec = tiny_spec(4);
        spec.agents.push(AgentConfig::new(AgentKind::UnweightedOful));
        let recs = sweep_records(&run_sweep(&spec).unwrap());
        let series = plot_series(&recs, PlotKind::RegretVsK);
        assert_eq!(series.len(), 2);
        assert!(series.iter().all(|s| s.points.iter().all(|p| p.2 == 0.0)));
        let svg = render_svg(&series, PlotKind::RegretVsK).unwrap();
        assert!(!svg.contains("<polygon"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(render_svg(&[], PlotKind::RegretVsK).is_err());
    }
}
