//! Experiment configuration, the simulation driver and CSV output.

mod reproduce;
mod spec;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use reproduce::{
    audit_good_s, clique_battery, cycle_deviation_battery, deviation_identity_battery,
    error_matrix_battery, expander_battery, long_run_endpoint, odd_cycle_battery, potential_checks,
    reproduce, single_loop_battery, steady_state_battery, Check, DipSettings, GoodSRun, LongRun,
    ReproId, Verdict,
};
pub use spec::{GraphSpec, LoadSpec, Steps};

use crate::balancers::{
    odd_cycle_rotor_config, steady_state_adversary, step, Balancer, BalancerKind, BalancerState,
    LoadVector, StepFlows,
};
use crate::error::{Error, Result};
use crate::fairness::{FairnessReport, FlowLedger};
use crate::graph::{augment, BalancingGraph};
use crate::metrics::{default_levels, MetricSeries};
use crate::spectral::{eigen_gap, transition_matrix, SpectralSummary, DENSE_LIMIT};

/// Largest graph the harness simulates.
pub const MAX_SIM_NODES: usize = 4096;

fn one() -> usize {
    1
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    /// Self-loops per node; defaults to the graph file's value, else `d`.
    /// Adversarial balancers require 0.
    #[serde(default)]
    pub d_loops: Option<usize>,
    pub balancer: BalancerKind,
    pub load: LoadSpec,
    pub steps: Steps,
    /// Tracked potential levels; defaults to `0..=⌈max₀/d⁺⌉`, subsampled.
    #[serde(default)]
    pub levels: Option<Vec<u64>>,
    /// Band width used for `φ'`.
    #[serde(default)]
    pub s: Option<u64>,
    /// Seed for random loads without an explicit seed.
    #[serde(default)]
    pub seed: u64,
    /// Record a metric row every this many steps (the last step is always kept).
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        graph: GraphSpec,
        d_loops: Option<usize>,
        balancer: BalancerKind,
        load: LoadSpec,
        steps: Steps,
    ) -> Self {
        Self {
            graph,
            d_loops,
            balancer,
            load,
            steps,
            levels: None,
            s: None,
            seed: 0,
            record_every: 1,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// A running discrete process: graph, balancer, its state, the current load
/// and the ledger of everything sent so far.
#[derive(Debug, Clone)]
pub struct Simulation {
    graph: BalancingGraph,
    balancer: Balancer,
    state: BalancerState,
    load: LoadVector,
    ledger: FlowLedger,
    t: usize,
}

impl Simulation {
    pub fn new(graph: BalancingGraph, balancer: Balancer, load: LoadVector) -> Result<Self> {
        let state = balancer.initial_state(&graph);
        Self::with_state(graph, balancer, load, state)
    }

    pub fn with_state(
        graph: BalancingGraph,
        balancer: Balancer,
        load: LoadVector,
        state: BalancerState,
    ) -> Result<Self> {
        if graph.n() > MAX_SIM_NODES {
            return Err(Error::Config(format!(
                "n={} exceeds the simulation limit of {MAX_SIM_NODES}",
                graph.n()
            )));
        }
        if load.n() != graph.n() {
            return Err(Error::invalid(format!(
                "load vector has {} entries, graph has {} nodes",
                load.n(),
                graph.n()
            )));
        }
        balancer.check(&graph)?;
        state.validate()?;
        let ledger = FlowLedger::new(&graph, &load);
        Ok(Self {
            graph,
            balancer,
            state,
            load,
            ledger,
            t: 0,
        })
    }

    /// Keeps every step's flows in the ledger. Only valid before the first step.
    pub fn with_history(mut self) -> Self {
        assert_eq!(self.t, 0, "history must be enabled before stepping");
        self.ledger = FlowLedger::with_history(&self.graph, &self.load);
        self
    }

    pub fn step(&mut self) -> Result<StepFlows> {
        let (flows, next) = step(&self.balancer, &self.graph, &self.load, &mut self.state)?;
        self.ledger.record_step(&flows)?;
        self.load = next;
        self.t += 1;
        Ok(flows)
    }

    /// Advances `steps` rounds, calling `observe(t, x_t)` after each.
    pub fn run(&mut self, steps: usize, mut observe: impl FnMut(usize, &LoadVector)) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
            observe(self.t, &self.load);
        }
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn load(&self) -> &LoadVector {
        &self.load
    }

    pub fn graph(&self) -> &BalancingGraph {
        &self.graph
    }

    pub fn balancer(&self) -> &Balancer {
        &self.balancer
    }

    pub fn state(&self) -> &BalancerState {
        &self.state
    }

    pub fn ledger(&self) -> &FlowLedger {
        &self.ledger
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRow {
    pub t: usize,
    pub max: f64,
    pub min: f64,
    pub balancedness: f64,
    pub dev_to_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Series {
    Discrete(MetricSeries),
    Continuous(Vec<ContinuousRow>),
}

impl Series {
    pub fn len(&self) -> usize {
        match self {
            Series::Discrete(s) => s.rows.len(),
            Series::Continuous(rows) => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        match self {
            Series::Discrete(s) => s.write_csv(w),
            Series::Continuous(rows) => {
                let mut out = csv::Writer::from_writer(w);
                out.write_record([
                    "t",
                    "max",
                    "min",
                    "discrepancy",
                    "balancedness",
                    "dev_to_avg",
                ])?;
                for r in rows {
                    out.write_record([
                        r.t.to_string(),
                        r.max.to_string(),
                        r.min.to_string(),
                        (r.max - r.min).to_string(),
                        r.balancedness.to_string(),
                        r.dev_to_avg.to_string(),
                    ])?;
                }
                out.flush().map_err(|e| Error::io("<csv>", e))?;
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub n: usize,
    pub d: usize,
    pub d_loops: usize,
    pub spectral: Option<SpectralSummary>,
    pub steps: usize,
    pub series: Series,
    pub fairness: Option<FairnessReport>,
    pub final_load: Option<LoadVector>,
    pub final_real: Option<Vec<f64>>,
    pub wall_time: Duration,
}

/// Resolves and executes a configuration.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    let started = Instant::now();
    let (base, file_loops) = config.graph.build()?;
    if base.n() > MAX_SIM_NODES {
        return Err(Error::Config(format!(
            "n={} exceeds the simulation limit of {MAX_SIM_NODES}",
            base.n()
        )));
    }
    if config.record_every == 0 {
        return Err(Error::Config("record_every must be at least 1".into()));
    }
    let adversarial = matches!(
        config.balancer,
        BalancerKind::AdversarySteady | BalancerKind::AdversaryRotorOdd
    );
    let d_loops = match (config.d_loops.or(file_loops), adversarial) {
        (Some(k), true) if k > 0 => {
            return Err(Error::Config(format!(
                "{} runs without self-loops (d_loops={k})",
                config.balancer
            )))
        }
        (_, true) => 0,
        (Some(k), false) => k,
        (None, false) => base.d(),
    };

    let (graph, balancer, state, load) = match config.balancer {
        BalancerKind::AdversarySteady => {
            if config.load != LoadSpec::Auto {
                return Err(Error::Config(
                    "adversary-steady builds its own load; use `auto`".into(),
                ));
            }
            let source = base.peripheral_node()?;
            let adv = steady_state_adversary(&base, source)?;
            let b = adv.balancer();
            (adv.graph, Some(b), BalancerState::Stateless, Some(adv.load))
        }
        BalancerKind::AdversaryRotorOdd => {
            let l = match config.load {
                LoadSpec::Base(l) => l,
                LoadSpec::Auto => {
                    let phi = base.odd_girth().ok_or_else(|| {
                        Error::Precondition("graph is bipartite; no odd cycle".into())
                    })? / 2;
                    2 * phi as u64
                }
                _ => {
                    return Err(Error::Config(
                        "adversary-rotor-odd takes `base:<L>` or `auto`".into(),
                    ))
                }
            };
            let cfg = odd_cycle_rotor_config(&base, l)?;
            (
                cfg.graph,
                Some(Balancer::RotorRouter),
                cfg.state,
                Some(cfg.load),
            )
        }
        kind => {
            let graph = augment(base, d_loops);
            let balancer = kind.rule();
            if let Some(b) = &balancer {
                b.check(&graph).map_err(|e| Error::Config(e.to_string()))?;
            }
            let state = balancer
                .as_ref()
                .map_or(BalancerState::Stateless, |b| b.initial_state(&graph));
            let load = config.load.build(graph.n(), config.seed)?;
            (graph, balancer, state, Some(load))
        }
    };
    let load = load.expect("every branch builds a load");
    let n = graph.n();

    let p = transition_matrix(&graph);
    let spectral = if n <= DENSE_LIMIT || config.steps == Steps::Auto || balancer.is_none() {
        Some(eigen_gap(&p)?)
    } else {
        None
    };
    let steps = match config.steps {
        Steps::Fixed(k) => k,
        Steps::Auto => spectral
            .expect("computed for auto steps")
            .balancing_steps(load.discrepancy())?,
    };
    let keep = |t: usize| t.is_multiple_of(config.record_every) || t == steps;

    let mut result = RunResult {
        config: config.clone(),
        n,
        d: graph.d(),
        d_loops: graph.d_loops(),
        spectral,
        steps,
        series: Series::Continuous(Vec::new()),
        fairness: None,
        final_load: None,
        final_real: None,
        wall_time: Duration::ZERO,
    };

    match balancer {
        None => {
            let mut x = load.as_f64();
            let avg = load.total() as f64 / n as f64;
            let row = |t: usize, x: &[f64]| {
                let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ContinuousRow {
                    t,
                    max,
                    min: x.iter().copied().fold(f64::INFINITY, f64::min),
                    balancedness: max - avg,
                    dev_to_avg: x.iter().map(|v| (v - avg).abs()).fold(0.0, f64::max),
                }
            };
            let mut rows = vec![row(0, &x)];
            for t in 1..=steps {
                x = p.apply(&x);
                if keep(t) {
                    rows.push(row(t, &x));
                }
            }
            result.series = Series::Continuous(rows);
            result.final_real = Some(x);
        }
        Some(balancer) => {
            let levels = config
                .levels
                .clone()
                .unwrap_or_else(|| default_levels(&load, graph.d_plus()));
            let s = config.s.unwrap_or(1);
            let mut series = MetricSeries::new(levels, s, graph.d_plus());
            series.record(0, &load);
            let mut sim = Simulation::with_state(graph, balancer, load, state)?;
            sim.run(steps, |t, x| {
                if keep(t) {
                    series.record(t, x);
                }
            })?;
            result.fairness = Some(sim.ledger().report());
            result.final_load = Some(sim.load().clone());
            result.series = Series::Discrete(series);
        }
    }
    result.wall_time = started.elapsed();
    Ok(result)
}

/// Writes the per-step metric CSV.
pub fn emit_csv(result: &RunResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    result
        .series
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
}

/// Reads a discrete-run CSV back into a series.
pub fn parse_csv(path: &Path, s: u64, d_plus: usize) -> Result<MetricSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    MetricSeries::read_csv(std::io::BufReader::new(file), s, d_plus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(
        graph: &str,
        loops: Option<usize>,
        b: BalancerKind,
        load: &str,
        steps: &str,
    ) -> ExperimentConfig {
        ExperimentConfig::new(
            graph.parse().unwrap(),
            loops,
            b,
            load.parse().unwrap(),
            steps.parse().unwrap(),
        )
    }

    #[test]
    fn auto_steps_on_cycle() {
        let c = cfg(
            "cycle:64",
            Some(2),
            BalancerKind::RotorRouter,
            "point:4096",
            "auto",
        );
        let r = run(&c).unwrap();
        let expected = r.spectral.unwrap().balancing_steps(4096).unwrap();
        assert_eq!(r.steps, expected);
        assert_eq!(r.series.len(), expected + 1);
        assert_eq!(r.final_load.unwrap().total(), 4096);
    }

    #[test]
    fn zero_steps_records_initial_only() {
        let r = run(&cfg(
            "cycle:8",
            None,
            BalancerKind::SendFloor,
            "point:10",
            "0",
        ))
        .unwrap();
        assert_eq!(r.series.len(), 1);
        let Series::Discrete(s) = &r.series else {
            panic!()
        };
        assert_eq!(s.rows[0].discrepancy, 10);
    }

    #[test]
    fn continuous_balances_by_auto_time() {
        let r = run(&cfg(
            "cycle:8",
            Some(2),
            BalancerKind::Continuous,
            "point:100",
            "auto",
        ))
        .unwrap();
        let Series::Continuous(rows) = &r.series else {
            panic!()
        };
        assert!(rows.last().unwrap().dev_to_avg < 1.0);
    }

    #[test]
    fn config_errors() {
        let bad_round = cfg("cycle:8", Some(1), BalancerKind::SendRound, "point:10", "5");
        assert!(matches!(run(&bad_round), Err(Error::Config(_))));
        let bad_loops = cfg(
            "cycle:8",
            Some(1),
            BalancerKind::AdversarySteady,
            "auto",
            "5",
        );
        assert!(matches!(run(&bad_loops), Err(Error::Config(_))));
        let too_big = cfg("cycle:5000", None, BalancerKind::SendFloor, "point:1", "1");
        assert!(matches!(run(&too_big), Err(Error::Config(_))));
    }

    #[test]
    fn adversaries_run() {
        let r = run(&cfg(
            "cycle:8",
            None,
            BalancerKind::AdversarySteady,
            "auto",
            "10",
        ))
        .unwrap();
        let Series::Discrete(s) = &r.series else {
            panic!()
        };
        assert!(s.rows.iter().all(|row| row.discrepancy == 6));
        let r = run(&cfg(
            "cycle:7",
            None,
            BalancerKind::AdversaryRotorOdd,
            "base:5",
            "4",
        ))
        .unwrap();
        assert_eq!(r.final_load.unwrap().total(), 7 * 10);
    }

    #[test]
    fn config_json_round_trip() {
        let mut c = cfg(
            "torus:4x2",
            Some(4),
            BalancerKind::SendRound,
            "random:64:3",
            "auto",
        );
        c.levels = Some(vec![0, 2]);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(ExperimentConfig::from_json(r#"{"graph":"cycle:x"}"#).is_err());
    }

    #[test]
    fn csv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let r = run(&cfg(
            "cycle:16",
            Some(2),
            BalancerKind::SendFloor,
            "point:300",
            "40",
        ))
        .unwrap();
        emit_csv(&r, &path).unwrap();
        let Series::Discrete(s) = &r.series else {
            panic!()
        };
        assert_eq!(&parse_csv(&path, 1, 4).unwrap(), s);
        let again = run(&r.config).unwrap();
        let second = dir.path().join("again.csv");
        emit_csv(&again, &second).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }
}
