//! Single-scenario and Monte Carlo execution with artifact output.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::{regular_ids, Checked, GraphSource, ScenarioConfig, SweepPoint};
use crate::engine::{self, run, RunRecord};
use crate::error::{Error, Result};
use crate::graph::{check_robustness, DirectedGraph, NodeId, DEFAULT_EXHAUSTIVE_LIMIT};
use crate::metrics::{aggregate_counters, verdict_with, ConsensusOutcome, ConsensusVerdict};
use crate::par::{try_map_indexed, ExecMode};
use crate::protocol::epsilon_bound;

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
    }
}

/// `(r, verdict)` for each `r` the exhaustive checker could decide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub checked: Vec<(usize, bool)>,
    /// Largest certified `r`, if any.
    pub max_r: Option<usize>,
    /// Why nothing could be checked.
    pub skipped: Option<String>,
}

impl RobustnessReport {
    pub fn holds(&self, r: usize) -> Option<bool> {
        self.checked.iter().find(|(k, _)| *k == r).map(|&(_, h)| h)
    }
}

/// `r`-robustness (with `s = 1`) for `r = 1, 2, ...` until it fails.
/// No graph on `n` nodes is more than `ceil(n/2)`-robust, so the scan is
/// short.
pub fn robustness_profile(g: &DirectedGraph) -> RobustnessReport {
    let n = g.node_count();
    if n > DEFAULT_EXHAUSTIVE_LIMIT {
        return RobustnessReport {
            checked: Vec::new(),
            max_r: None,
            skipped: Some(format!(
                "{n} nodes exceeds the exhaustive limit {DEFAULT_EXHAUSTIVE_LIMIT}"
            )),
        };
    }
    let mut checked = Vec::new();
    let mut max_r = None;
    for r in 1..n {
        match check_robustness(g, r, 1) {
            Ok(v) => {
                checked.push((r, v.holds));
                if !v.holds {
                    break;
                }
                max_r = Some(r);
            }
            Err(_) => break,
        }
    }
    let skipped = checked
        .is_empty()
        .then(|| format!("no robustness parameter r < n = {n}"));
    RobustnessReport {
        checked,
        max_r,
        skipped,
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub regular: Vec<NodeId>,
    pub record: RunRecord,
    pub verdict: ConsensusVerdict,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    /// The config with every default materialized.
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
    /// Graph of the first trial.
    pub graph: DirectedGraph,
    pub robustness: Option<RobustnessReport>,
    pub trials: Vec<TrialResult>,
}

/// Runs every trial of a validated config.
pub fn simulate(cfg: &ScenarioConfig, checked: Checked, mode: ExecMode) -> Result<ScenarioRun> {
    let c = cfg.c();
    let settle = cfg.settle_window();
    let trials = try_map_indexed(mode, cfg.trials, |trial| -> Result<TrialResult> {
        let sc = cfg.scenario(trial)?;
        let regular = regular_ids(sc.graph.node_count(), &sc.adversary_ids());
        let record = run(&sc)?;
        let verdict = verdict_with(&record, &regular, c, settle);
        Ok(TrialResult {
            trial,
            regular,
            record,
            verdict,
        })
    })?;
    let graph = cfg.scenario(0)?.graph;
    let robustness = cfg.graph.is_fixed().then(|| robustness_profile(&graph));
    Ok(ScenarioRun {
        config: cfg.resolved(),
        warnings: checked.warnings,
        graph,
        robustness,
        trials,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_config(out: &Path, cfg: &ScenarioConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| Error::Internal(e.to_string()))?;
    write_text(&out.join("config.resolved"), &(text + "\n"))
}

fn write_csv_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(path)?;
    body(&mut w)?;
    finish(path, w)
}

/// Writes `config.resolved`, `graph.csv`, `trajectories.csv`, `events.csv`,
/// `counters.csv`, `verdicts.csv` and `summary.txt` into `out`.
pub fn write_scenario(result: &ScenarioRun, out: &Path) -> Result<()> {
    prepare_dir(out)?;
    write_config(out, &result.config)?;
    write_csv_file(&out.join("graph.csv"), |w| result.graph.write_csv(w))?;

    let records: Vec<RunRecord> = result.trials.iter().map(|t| t.record.clone()).collect();
    write_csv_file(&out.join("trajectories.csv"), |w| {
        engine::write_trajectories_csv(&records, w)
    })?;
    write_csv_file(&out.join("events.csv"), |w| {
        engine::write_events_csv(&records, w)
    })?;
    write_csv_file(&out.join("counters.csv"), |w| {
        engine::write_counters_csv(&records, w)
    })?;
    write_csv_file(&out.join("verdicts.csv"), |w| write_verdicts(result, w))?;
    write_text(&out.join("summary.txt"), &scenario_summary(result))
}

#[derive(Serialize)]
struct VerdictRow {
    trial: usize,
    seed: u64,
    protocol: &'static str,
    safety_holds: bool,
    safety_lo: f64,
    safety_hi: f64,
    final_spread: f64,
    c: f64,
    consensus_at_c: bool,
    outcome: &'static str,
    quiesced: bool,
    quiescence_time: Option<f64>,
    transmissions_after_quiescence: u64,
    mean_updates: f64,
    mean_transmissions: f64,
    min_update_gap: Option<f64>,
    min_transmission_gap: Option<f64>,
    max_delay: f64,
}

fn min_gap(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values
        .flatten()
        .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.min(g))))
}

fn write_verdicts<W: Write>(result: &ScenarioRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in &result.trials {
        let (mean_updates, mean_transmissions) =
            aggregate_counters(std::slice::from_ref(&t.record), &t.regular).unwrap_or((0.0, 0.0));
        let v = &t.verdict;
        w.serialize(VerdictRow {
            trial: t.trial,
            seed: t.record.seed,
            protocol: t.record.protocol.name(),
            safety_holds: v.safety_holds,
            safety_lo: v.safety_interval.0,
            safety_hi: v.safety_interval.1,
            final_spread: v.final_spread,
            c: v.c,
            consensus_at_c: v.consensus_at_c,
            outcome: v.outcome.name(),
            quiesced: v.quiesced,
            quiescence_time: v.quiescence_time,
            transmissions_after_quiescence: v.transmissions_after_quiescence,
            mean_updates,
            mean_transmissions,
            min_update_gap: min_gap(t.regular.iter().map(|&i| t.record.min_update_gap[i])),
            min_transmission_gap: min_gap(
                t.regular.iter().map(|&i| t.record.min_transmission_gap[i]),
            ),
            max_delay: t.record.max_delay,
        })?;
    }
    w.flush().map_err(|e| Error::io("verdicts.csv", e))?;
    Ok(())
}

fn count(trials: &[TrialResult], pred: impl Fn(&ConsensusVerdict) -> bool) -> usize {
    trials.iter().filter(|t| pred(&t.verdict)).count()
}

fn robustness_line(report: &RobustnessReport, f: usize) -> String {
    if let Some(why) = &report.skipped {
        return format!("robustness:      not checked ({why})");
    }
    let needed = 2 * f + 1;
    let needed_text = match report.holds(needed) {
        Some(true) => format!("; {needed}-robust as required for F = {f}"),
        Some(false) => format!("; NOT {needed}-robust, required for F = {f}"),
        None if f > 0 => {
            let certified = report.max_r.is_some_and(|r| r >= needed);
            if certified {
                format!("; {needed}-robust as required for F = {f}")
            } else {
                format!("; {needed}-robustness for F = {f} not certifiable here")
            }
        }
        None => String::new(),
    };
    match report.max_r {
        Some(r) => {
            format!("robustness:      certified {r}-robust (s = 1, exhaustive){needed_text}")
        }
        None => format!("robustness:      not 1-robust{needed_text}"),
    }
}

pub fn scenario_summary(result: &ScenarioRun) -> String {
    let cfg = &result.config;
    let trials = &result.trials;
    let total = trials.len();
    let mut s = String::new();
    let g = &result.graph;
    let _ = writeln!(s, "protocol:        {}", cfg.protocol);
    let _ = writeln!(
        s,
        "graph:           {} nodes, {} directed edges, connected = {}{}",
        g.node_count(),
        g.edge_count(),
        g.is_connected(),
        if cfg.graph.is_fixed() {
            ""
        } else {
            " (first trial)"
        }
    );
    if let Some(report) = &result.robustness {
        let _ = writeln!(s, "{}", robustness_line(report, cfg.f));
    }
    let _ = writeln!(
        s,
        "adversaries:     {} (F = {})",
        cfg.adversaries.len(),
        cfg.f
    );
    let _ = writeln!(
        s,
        "epsilon:         {} (bound for c = {}: {:.6e})",
        cfg.epsilon,
        cfg.c(),
        epsilon_bound(g.omega(), g.node_count(), cfg.tau(), cfg.c())
    );
    let _ = writeln!(
        s,
        "horizon:         {} (settle window {})",
        cfg.horizon,
        cfg.settle_window()
    );
    let _ = writeln!(s, "delay:           {:?}", cfg.delay);
    let _ = writeln!(s, "trials:          {} (seed {})", total, cfg.seed);
    let _ = writeln!(s, "theorem scoped:  {}", cfg.theorem_scoped);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "safety held:     {}/{total}",
        count(trials, |v| v.safety_holds)
    );
    let _ = writeln!(
        s,
        "quiesced:        {}/{total}",
        count(trials, |v| v.quiesced)
    );
    let _ = writeln!(
        s,
        "consensus at c:  {}/{total}",
        count(trials, |v| v.consensus_at_c)
    );
    let _ = writeln!(
        s,
        "inconclusive:    {}/{total}",
        count(trials, |v| v.outcome == ConsensusOutcome::Inconclusive)
    );
    let max_spread = trials
        .iter()
        .map(|t| t.verdict.final_spread)
        .fold(0.0f64, f64::max);
    let _ = writeln!(s, "max final spread {max_spread}");
    let records: Vec<RunRecord> = trials.iter().map(|t| t.record.clone()).collect();
    if let Some(regular) = trials.first().map(|t| t.regular.clone()) {
        if let Some((u, tx)) = aggregate_counters(&records, &regular) {
            let _ = writeln!(
                s,
                "per regular agent: {u:.3} updates, {tx:.3} transmissions (mean)"
            );
        }
    }
    for w in &result.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// Loads, runs and writes one scenario.
pub fn run_scenario(
    config_path: &Path,
    out: &Path,
    overrides: Overrides,
    mode: ExecMode,
) -> Result<ScenarioRun> {
    let (mut cfg, _) = ScenarioConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let checked = cfg.validate()?;
    let result = simulate(&cfg, checked, mode)?;
    write_scenario(&result, out)?;
    Ok(result)
}

/// Aggregates for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub range: Option<f64>,
    pub adversaries: usize,
    pub protocol: &'static str,
    pub trials: usize,
    pub success_rate: f64,
    pub connectivity_rate: f64,
    pub inconclusive_rate: f64,
    pub safety_rate: f64,
    pub mean_final_spread: f64,
    pub mean_updates: f64,
    pub mean_transmissions: f64,
}

/// Verdict of one sweep trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTrial {
    pub point: usize,
    pub trial: usize,
    pub connected: bool,
    pub safety_holds: bool,
    pub final_spread: f64,
    pub outcome: &'static str,
    pub consensus_at_c: bool,
    pub mean_updates: f64,
    pub mean_transmissions: f64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
    pub points: Vec<SweepPoint>,
    pub summaries: Vec<PointSummary>,
    pub trials: Vec<SweepTrial>,
}

impl SweepRun {
    pub fn summary_for(
        &self,
        range: Option<f64>,
        adversaries: usize,
        protocol: &str,
    ) -> Option<&PointSummary> {
        self.summaries
            .iter()
            .find(|s| s.range == range && s.adversaries == adversaries && s.protocol == protocol)
    }
}

fn sweep_trial(cfg: &ScenarioConfig, points: &[SweepPoint], job: usize) -> Result<SweepTrial> {
    let (point, trial) = (job / cfg.trials, job % cfg.trials);
    let sc = cfg.scenario_at(&points[point], trial, true)?;
    let regular = regular_ids(sc.graph.node_count(), &sc.adversary_ids());
    let connected = sc.graph.is_connected();
    let record = run(&sc)?;
    let v = verdict_with(&record, &regular, cfg.c(), cfg.settle_window());
    let (mean_updates, mean_transmissions) =
        aggregate_counters(std::slice::from_ref(&record), &regular).unwrap_or((0.0, 0.0));
    Ok(SweepTrial {
        point,
        trial,
        connected,
        safety_holds: v.safety_holds,
        final_spread: v.final_spread,
        outcome: v.outcome.name(),
        consensus_at_c: v.consensus_at_c,
        mean_updates,
        mean_transmissions,
    })
}

/// Runs every sweep point `trials` times. Trials of all points share one
/// work pool.
pub fn sweep(cfg: &ScenarioConfig, checked: Checked, mode: ExecMode) -> Result<SweepRun> {
    let points = cfg.sweep_points();
    let jobs = points.len() * cfg.trials;
    let trials = try_map_indexed(mode, jobs, |job| sweep_trial(cfg, &points, job))?;
    let summaries = points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mine = &trials[k * cfg.trials..(k + 1) * cfg.trials];
            let frac = |pred: &dyn Fn(&SweepTrial) -> bool| {
                mine.iter().filter(|t| pred(t)).count() as f64 / mine.len() as f64
            };
            let mean = |f: &dyn Fn(&SweepTrial) -> f64| {
                mine.iter().map(f).sum::<f64>() / mine.len() as f64
            };
            PointSummary {
                range: p.range,
                adversaries: p.adversaries,
                protocol: p.protocol.name(),
                trials: mine.len(),
                success_rate: frac(&|t| t.consensus_at_c),
                connectivity_rate: frac(&|t| t.connected),
                inconclusive_rate: frac(&|t| t.outcome == ConsensusOutcome::Inconclusive.name()),
                safety_rate: frac(&|t| t.safety_holds),
                mean_final_spread: mean(&|t| t.final_spread),
                mean_updates: mean(&|t| t.mean_updates),
                mean_transmissions: mean(&|t| t.mean_transmissions),
            }
        })
        .collect();
    Ok(SweepRun {
        config: cfg.resolved(),
        warnings: checked.warnings,
        points,
        summaries,
        trials,
    })
}

/// Writes `config.resolved`, `success_rates.csv`, `counters.csv`,
/// `counters_table.csv`, `verdicts.csv` and `summary.txt` into `out`.
pub fn write_sweep(result: &SweepRun, out: &Path) -> Result<()> {
    prepare_dir(out)?;
    write_config(out, &result.config)?;
    write_csv_file(&out.join("success_rates.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "range",
            "n_adversaries",
            "protocol",
            "trials",
            "success_rate",
            "connectivity_rate",
            "inconclusive_rate",
            "safety_rate",
            "mean_final_spread",
        ])?;
        for s in &result.summaries {
            csv.serialize((
                s.range,
                s.adversaries,
                s.protocol,
                s.trials,
                s.success_rate,
                s.connectivity_rate,
                s.inconclusive_rate,
                s.safety_rate,
                s.mean_final_spread,
            ))?;
        }
        csv.flush().map_err(|e| Error::io("success_rates.csv", e))
    })?;
    write_csv_file(&out.join("counters.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "range",
            "n_adversaries",
            "protocol",
            "trials",
            "mean_updates",
            "mean_transmissions",
        ])?;
        for s in &result.summaries {
            csv.serialize((
                s.range,
                s.adversaries,
                s.protocol,
                s.trials,
                s.mean_updates,
                s.mean_transmissions,
            ))?;
        }
        csv.flush().map_err(|e| Error::io("counters.csv", e))
    })?;
    write_csv_file(&out.join("counters_table.csv"), |w| {
        write_counter_table(result, w)
    })?;
    write_csv_file(&out.join("verdicts.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "range",
            "n_adversaries",
            "protocol",
            "trial",
            "connected",
            "safety_holds",
            "final_spread",
            "outcome",
            "consensus_at_c",
            "mean_updates",
            "mean_transmissions",
        ])?;
        for t in &result.trials {
            let p = &result.points[t.point];
            csv.serialize((
                p.range,
                p.adversaries,
                p.protocol.name(),
                t.trial,
                t.connected,
                t.safety_holds,
                t.final_spread,
                t.outcome,
                t.consensus_at_c,
                t.mean_updates,
                t.mean_transmissions,
            ))?;
        }
        csv.flush().map_err(|e| Error::io("verdicts.csv", e))
    })?;
    write_text(&out.join("summary.txt"), &sweep_summary(result))
}

/// Rows `(range, n_A)`, columns protocol x {updates, transmissions}.
fn write_counter_table<W: Write>(result: &SweepRun, out: W) -> Result<()> {
    let mut protocols: Vec<&'static str> = Vec::new();
    let mut rows: Vec<(Option<f64>, usize)> = Vec::new();
    for s in &result.summaries {
        if !protocols.contains(&s.protocol) {
            protocols.push(s.protocol);
        }
        if !rows.contains(&(s.range, s.adversaries)) {
            rows.push((s.range, s.adversaries));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["range".to_string(), "n_adversaries".to_string()];
    for p in &protocols {
        header.push(format!("{p}_updates"));
        header.push(format!("{p}_transmissions"));
    }
    w.write_record(&header)?;
    for (range, k) in rows {
        let mut record = vec![
            range.map(|r| r.to_string()).unwrap_or_default(),
            k.to_string(),
        ];
        for p in &protocols {
            match result.summary_for(range, k, p) {
                Some(s) => {
                    record.push(s.mean_updates.to_string());
                    record.push(s.mean_transmissions.to_string());
                }
                None => record.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("counters_table.csv", e))?;
    Ok(())
}

pub fn sweep_summary(result: &SweepRun) -> String {
    let cfg = &result.config;
    let mut s = String::new();
    let graph = match &cfg.graph {
        GraphSource::Geometric { n, .. } => format!("random geometric, {n} nodes"),
        other => format!("{} nodes, fixed", other.node_count()),
    };
    let _ = writeln!(s, "graph:     {graph}");
    let _ = writeln!(
        s,
        "epsilon:   {}  c: {}  horizon: {}  settle window: {}",
        cfg.epsilon,
        cfg.c(),
        cfg.horizon,
        cfg.settle_window()
    );
    let _ = writeln!(s, "trials:    {} per point (seed {})", cfg.trials, cfg.seed);
    let _ = writeln!(s, "success:   quiesced with final regular spread <= c");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>7} {:>4} {:<28} {:>8} {:>8} {:>8} {:>10} {:>10}",
        "range", "n_A", "protocol", "success", "connect", "safe", "updates", "transmits"
    );
    for p in &result.summaries {
        let range = p.range.map_or("-".to_string(), |r| format!("{r:.4}"));
        let _ = writeln!(
            s,
            "{:>7} {:>4} {:<28} {:>8.2} {:>8.2} {:>8.2} {:>10.2} {:>10.2}",
            range,
            p.adversaries,
            p.protocol,
            p.success_rate,
            p.connectivity_rate,
            p.safety_rate,
            p.mean_updates,
            p.mean_transmissions
        );
    }
    for w in &result.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn run_sweep(
    config_path: &Path,
    out: &Path,
    overrides: Overrides,
    mode: ExecMode,
) -> Result<SweepRun> {
    let (mut cfg, _) = ScenarioConfig::load(config_path)?;
    overrides.apply(&mut cfg);
    let checked = cfg.validate()?;
    let result = sweep(&cfg, checked, mode)?;
    write_sweep(&result, out)?;
    Ok(result)
}

/// Human-readable graph report for `check-graph`.
pub fn graph_report(cfg: &ScenarioConfig) -> Result<String> {
    let g = cfg.scenario(0)?.graph;
    let mut s = String::new();
    let _ = writeln!(s, "nodes:            {}", g.node_count());
    let _ = writeln!(s, "directed edges:   {}", g.edge_count());
    let _ = writeln!(s, "connected:        {}", g.is_connected());
    let _ = writeln!(s, "min in-degree:    {}", g.min_in_degree());
    let _ = writeln!(s, "mean in-degree:   {:.3}", g.mean_in_degree());
    let _ = writeln!(s, "alpha:            {}", g.alpha());
    let report = robustness_profile(&g);
    for &(r, holds) in &report.checked {
        let _ = writeln!(s, "{r}-robust:         {holds}");
    }
    let _ = writeln!(s, "{}", robustness_line(&report, cfg.f));
    if !cfg.graph.is_fixed() {
        let _ = writeln!(
            s,
            "note: geometric source; report covers the first trial's graph"
        );
    }
    Ok(s)
}
