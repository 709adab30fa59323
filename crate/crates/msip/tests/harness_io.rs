use std::fs;

use msip::agents::{AgentConfig, AgentKind};
use msip::harness::{emit_plot, read_csv, run_sweep, write_sweep, ExperimentSpec, PlotKind, CSV_HEADER};

fn spec_with_poisoned_agent() -> ExperimentSpec {
    let good = AgentConfig::new(AgentKind::RlMsip);
    // too small to enumerate the 16 deterministic policies
    let bad = AgentConfig { policy_cap: 2, ..AgentConfig::new(AgentKind::UnweightedOful) };
    let text = format!(
        r#"{{"schema_version": 1,
            "instance": {{"factory": "random-tiny", "n_states": 2, "n_actions": 2, "horizon": 2, "d_t": 2, "d_p": 2, "instance_seed": 3}},
            "schedule": {{"kind": "uniform"}},
            "agents": [{}, {}],
            "episodes": 20, "sources": [1, 2], "omegas": [0.0, 1.5], "seeds": [4], "workers": 2}}"#,
        serde_json::to_string(&good).unwrap(),
        serde_json::to_string(&bad).unwrap()
    );
    ExperimentSpec::from_json(&text).unwrap()
}

#[test]
fn failing_cells_are_isolated() {
    let spec = spec_with_poisoned_agent();
    let results = run_sweep(&spec).unwrap();
    assert_eq!(results.len(), 8);
    let (ok, bad): (Vec<_>, Vec<_>) = results.iter().partition(|r| r.outcome.is_ok());
    assert_eq!(ok.len(), 4);
    assert!(ok.iter().all(|r| r.cell.agent == 0 && r.outcome.as_ref().unwrap().len() == 20));
    assert!(bad.iter().all(|r| r.cell.agent == 1));

    let dir = tempfile::tempdir().unwrap();
    let merged = write_sweep(&results, dir.path()).unwrap();
    let back = read_csv(&merged).unwrap();
    assert_eq!(back.len(), 80);
    let log = fs::read_to_string(dir.path().join("failures.log")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert_eq!(fs::read_dir(dir.path().join("cells")).unwrap().count(), 4);
}

#[test]
fn sweep_files_are_reproducible() {
    let spec = spec_with_poisoned_agent();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_sweep(&run_sweep(&spec).unwrap(), a.path()).unwrap();
    write_sweep(&run_sweep(&spec).unwrap(), b.path()).unwrap();
    let ra = fs::read(a.path().join("results.csv")).unwrap();
    let rb = fs::read(b.path().join("results.csv")).unwrap();
    assert_eq!(ra, rb);
    let text = String::from_utf8(ra).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(!text.contains('\r'));
}

#[test]
fn plots_render_from_merged_csv() {
    let spec = spec_with_poisoned_agent();
    let dir = tempfile::tempdir().unwrap();
    let merged = write_sweep(&run_sweep(&spec).unwrap(), dir.path()).unwrap();
    let records = read_csv(&merged).unwrap();
    for kind in [PlotKind::RegretVsK, PlotKind::RegretVsM, PlotKind::RegretVsOmega] {
        let path = dir.path().join("plot.svg");
        emit_plot(&records, kind, &path).unwrap();
        let svg = fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
        assert!(svg.contains("</svg>"));
    }
}
