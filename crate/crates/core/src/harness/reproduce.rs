//! Canned desk-scale experiment batteries, one per claim.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Simulation;
use crate::balancers::{
    odd_cycle_rotor_config, stateless_clique_fixture, steady_state_adversary, Balancer, LoadVector,
};
use crate::error::{Error, Result};
use crate::fairness::{
    deviation_diagnostics, normalize_remainder, round_fairness_check, FairnessReport,
    DIAGNOSTICS_TOLERANCE,
};
use crate::graph::{
    augment, cycle, hypercube, random_regular, torus, BalancingGraph, RegularGraph,
};
use crate::metrics::{
    default_levels, deviation_to_average_exact, dip_window, DipMonitor, IntervalAudit, LineParams,
    PotentialAudit,
};
use crate::spectral::{
    current_sums, default_horizon, eigen_gap, lambda_bound_check, transition_matrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReproId {
    Thm1I,
    Thm1II,
    Thm1III,
    Thm2,
    Thm4,
    Thm5,
    Thm6,
    LemmaA1,
    Eq5,
}

impl ReproId {
    pub const ALL: [ReproId; 9] = [
        ReproId::Thm1I,
        ReproId::Thm1II,
        ReproId::Thm1III,
        ReproId::Thm2,
        ReproId::Thm4,
        ReproId::Thm5,
        ReproId::Thm6,
        ReproId::LemmaA1,
        ReproId::Eq5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReproId::Thm1I => "thm1-i",
            ReproId::Thm1II => "thm1-ii",
            ReproId::Thm1III => "thm1-iii",
            ReproId::Thm2 => "thm2",
            ReproId::Thm4 => "thm4",
            ReproId::Thm5 => "thm5",
            ReproId::Thm6 => "thm6",
            ReproId::LemmaA1 => "lemmaA1",
            ReproId::Eq5 => "eq5",
        }
    }
}

impl fmt::Display for ReproId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReproId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|id| id.name()).collect();
                Error::Usage(format!(
                    "unknown experiment `{s}`; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

/// One verified inequality or identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub claim: String,
    pub instance: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(
        claim: &str,
        instance: impl Into<String>,
        measured: f64,
        bound: f64,
        passed: bool,
    ) -> Self {
        Self {
            claim: claim.to_string(),
            instance: instance.into(),
            measured,
            bound,
            passed,
        }
    }

    /// A check whose measured value must not exceed the bound.
    pub fn at_most(claim: &str, instance: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(claim, instance, measured, bound, measured <= bound)
    }

    /// A yes/no check, reported as 1/0 against 1.
    pub fn holds(claim: &str, instance: impl Into<String>, ok: bool) -> Self {
        Self::new(claim, instance, f64::from(u8::from(ok)), 1.0, ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: ReproId,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "claim", "instance", "measured", "bound", "passed"])?;
        for c in &self.checks {
            out.write_record([
                self.id.name(),
                &c.claim,
                &c.instance,
                &c.measured.to_string(),
                &c.bound.to_string(),
                if c.passed { "pass" } else { "fail" },
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Runs the battery for one claim.
pub fn reproduce(id: ReproId) -> Result<Verdict> {
    let checks = match id {
        ReproId::Thm1I => expander_battery(&[64, 128, 256])?,
        ReproId::Thm1II => cycle_deviation_battery(&[16, 32, 64, 128])?,
        ReproId::Thm1III => single_loop_battery()?,
        ReproId::Thm2 => long_run_endpoint(128, 4, 11)?.checks(),
        ReproId::Thm4 => steady_state_battery()?,
        ReproId::Thm5 => clique_battery()?,
        ReproId::Thm6 => odd_cycle_battery((5..=101).step_by(2))?,
        ReproId::LemmaA1 => error_matrix_battery()?,
        ReproId::Eq5 => deviation_identity_battery(10, 5)?,
    };
    Ok(Verdict { id, checks })
}

const CLASS_BALANCERS: [Balancer; 3] = [
    Balancer::SendFloor,
    Balancer::SendRound,
    Balancer::RotorRouter,
];

fn class_delta(b: &Balancer) -> u64 {
    b.fairness_delta()
        .expect("class balancers have a known fairness bound")
}

/// Runs `balancer` for `⌈16 ln(nK)/μ⌉` steps from `K` tokens on node 0.
fn run_to_balancing_time(
    g: &BalancingGraph,
    balancer: &Balancer,
    k: u64,
) -> Result<(Simulation, f64)> {
    let summary = eigen_gap(&transition_matrix(g))?;
    let steps = summary.balancing_steps(k)?;
    let mut load = LoadVector::zeros(g.n());
    load.0[0] = k;
    let mut sim = Simulation::new(g.clone(), balancer.clone(), load)?;
    sim.run(steps, |_, _| {})?;
    Ok((sim, summary.mu))
}

fn fairness_check(instance: &str, report: &FairnessReport, delta: u64) -> Check {
    Check::at_most(
        "cumulative fairness gap",
        instance,
        report.delta_observed as f64,
        delta as f64,
    )
}

/// `‖x − x̄‖∞ ≤ (δ+1)·d⁺·√n` and `discrepancy ≤ 2(δ+1)·d⁺·√n` on cycles with
/// `d° = d`, compared exactly after squaring.
pub fn cycle_deviation_battery(sizes: &[usize]) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &n in sizes {
        let g = augment(cycle(n)?, 2);
        let k = (n * n) as u64;
        for b in &CLASS_BALANCERS {
            let delta = class_delta(b);
            let (sim, _) = run_to_balancing_time(&g, b, k)?;
            let x = sim.load();
            let instance = format!("cycle:{n} d_loops=2 {} point:{k} t={}", b.name(), sim.t());
            let scale = ((delta + 1) * g.d_plus() as u64) as u128;
            let n128 = n as u128;
            let dev = deviation_to_average_exact(x);
            // (W/n)² ≤ scale²·n with W = n·‖x − x̄‖∞
            let w = (dev * Ratio::from_integer(n as i128)).to_integer() as u128;
            let bound = scale as f64 * (n as f64).sqrt();
            checks.push(Check::new(
                "deviation to average <= (delta+1) d+ sqrt(n)",
                instance.clone(),
                w as f64 / n as f64,
                bound,
                w * w <= n128 * n128 * scale * scale * n128,
            ));
            let disc = x.discrepancy() as u128;
            checks.push(Check::new(
                "discrepancy <= 2 (delta+1) d+ sqrt(n)",
                instance.clone(),
                disc as f64,
                2.0 * bound,
                disc * disc <= 4 * scale * scale * n128,
            ));
            checks.push(fairness_check(&instance, &sim.ledger().report(), delta));
        }
    }
    Ok(checks)
}

/// Discrepancy at `T(K)` against `98·(δd⁺ + d⁺)·√(6 ln n/μ)` on random
/// 4-regular graphs with `d° = d`.
pub fn expander_battery(sizes: &[usize]) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &n in sizes {
        let seed = n as u64;
        let g = augment(random_regular(n, 4, seed)?, 4);
        let k = (n * n) as u64;
        for b in &CLASS_BALANCERS {
            let delta = class_delta(b);
            let (sim, mu) = run_to_balancing_time(&g, b, k)?;
            let dp = g.d_plus() as f64;
            let bound = 98.0 * (delta as f64 * dp + dp) * (6.0 * (n as f64).ln() / mu).sqrt();
            let instance = format!(
                "random:{n}:4:{seed} d_loops=4 {} point:{k} t={}",
                b.name(),
                sim.t()
            );
            checks.push(Check::at_most(
                "discrepancy <= 98 (delta d+ + d+) sqrt(t_mu)",
                instance.clone(),
                sim.load().discrepancy() as f64,
                bound,
            ));
            checks.push(fairness_check(&instance, &sim.ledger().report(), delta));
        }
    }
    Ok(checks)
}

/// `‖x − x̄‖∞ ≤ δd⁺ + 2r + 1/4 + (8t_μ + 1)(δd⁺ + r)` with one self-loop per
/// node and `r = d⁺`, the bound on normalized remainders.
pub fn single_loop_battery() -> Result<Vec<Check>> {
    let graphs: Vec<(String, RegularGraph)> = vec![
        ("cycle:32".into(), cycle(32)?),
        ("torus:8x2".into(), torus(8, 2)?),
        ("hypercube:6".into(), hypercube(6)?),
    ];
    let mut checks = Vec::new();
    for (name, base) in graphs {
        let g = augment(base, 1);
        let n = g.n();
        let k = (n * n) as u64;
        let summary = eigen_gap(&transition_matrix(&g))?;
        for b in [Balancer::SendFloor, Balancer::RotorRouter] {
            let delta = class_delta(&b) as f64;
            let (sim, _) = run_to_balancing_time(&g, &b, k)?;
            let dp = g.d_plus() as f64;
            let r = dp;
            let bound = delta * dp + 2.0 * r + 0.25 + (8.0 * summary.t_mu + 1.0) * (delta * dp + r);
            let dev = deviation_to_average_exact(sim.load());
            checks.push(Check::at_most(
                "deviation to average <= delta d+ + 2r + 1/4 + (8 t_mu + 1)(delta d+ + r)",
                format!("{name} d_loops=1 {} point:{k} t={}", b.name(), sim.t()),
                *dev.numer() as f64 / *dev.denom() as f64,
                bound,
            ));
        }
    }
    Ok(checks)
}

/// Outcome of auditing one good s-balancer run.
#[derive(Debug, Clone)]
pub struct GoodSRun {
    pub instance: String,
    pub report: FairnessReport,
    pub steps: usize,
    pub final_load: LoadVector,
    pub potential: Option<PotentialAudit>,
    pub interval: Option<IntervalAudit>,
    pub dip: Option<DipMonitor>,
}

impl GoodSRun {
    pub fn s(&self) -> usize {
        self.report.good_s
    }

    /// Potential monotonicity and per-step drops held at every step.
    pub fn potentials_ok(&self) -> bool {
        self.potential.as_ref().is_some_and(|a| a.passed())
            && self.interval.as_ref().is_some_and(|a| a.passed())
    }
}

/// Settings for the dip-below-the-line monitor.
#[derive(Debug, Clone)]
pub struct DipSettings {
    pub line: LineParams,
    pub from: usize,
    pub window: usize,
}

/// Runs a balancer twice: once to measure its good-s value, then again with the
/// potential audits at that `s` (and optionally the dip monitor).
pub fn audit_good_s(
    instance: &str,
    g: &BalancingGraph,
    balancer: &Balancer,
    load: &LoadVector,
    steps: usize,
    interval_window: usize,
    dip: Option<DipSettings>,
) -> Result<GoodSRun> {
    let mut probe = Simulation::new(g.clone(), balancer.clone(), load.clone())?;
    probe.run(steps, |_, _| {})?;
    let report = probe.ledger().report();
    let mut out = GoodSRun {
        instance: instance.to_string(),
        report,
        steps,
        final_load: probe.load().clone(),
        potential: None,
        interval: None,
        dip: None,
    };
    let s = out.report.good_s as u64;
    if s == 0 {
        return Ok(out);
    }
    let levels = default_levels(load, g.d_plus());
    let mut potential = PotentialAudit::new(levels.clone(), s, g.d_plus());
    let mut interval = IntervalAudit::new(levels, s, g.d_plus(), interval_window);
    let mut monitor =
        dip.map(|d| DipMonitor::new(g.n(), load.average(), &d.line, d.from, d.window));
    potential.observe(0, load);
    interval.observe(0, load);
    let mut sim = Simulation::new(g.clone(), balancer.clone(), load.clone())?;
    sim.run(steps, |t, x| {
        potential.observe(t, x);
        interval.observe(t, x);
        if let Some(m) = &mut monitor {
            m.observe(t, x);
        }
    })?;
    out.potential = Some(potential);
    out.interval = Some(interval);
    out.dip = monitor;
    Ok(out)
}

/// The long SendRound run with `d° = 2d`.
#[derive(Debug, Clone)]
pub struct LongRun {
    pub run: GoodSRun,
    pub d: usize,
    pub d_loops: usize,
    pub d_plus: usize,
    pub balancing_steps: usize,
    pub window: usize,
    pub threshold: Ratio<i128>,
}

impl LongRun {
    /// `(2δ + 1)·d⁺ + 4d°` with `δ = 0`.
    pub fn discrepancy_bound(&self) -> u64 {
        (self.d_plus + 4 * self.d_loops) as u64
    }

    pub fn checks(&self) -> Vec<Check> {
        let r = &self.run;
        let disc = r.final_load.discrepancy();
        let mut checks = vec![
            Check::at_most(
                "final discrepancy <= (2 delta + 1) d+ + 4 d_loops",
                format!("{} t={}", r.instance, r.steps),
                disc as f64,
                self.discrepancy_bound() as f64,
            ),
            fairness_check(&r.instance, &r.report, 0),
            Check::new(
                "good s-balancer (s >= 1)",
                r.instance.clone(),
                r.s() as f64,
                1.0,
                r.s() >= 1,
            ),
        ];
        checks.extend(potential_checks(r));
        let dip_ok = r.dip.as_ref().is_some_and(|m| m.passed());
        let dip_fails = r.dip.as_ref().map_or(0, |m| m.failures.len());
        checks.push(Check::new(
            "every node dips below the line in every window after T",
            format!(
                "{} window={} from={}",
                r.instance, self.window, self.balancing_steps
            ),
            dip_fails as f64,
            0.0,
            dip_ok,
        ));
        checks
    }
}

pub fn potential_checks(r: &GoodSRun) -> Vec<Check> {
    let phi_fail = r
        .potential
        .as_ref()
        .map_or(usize::MAX, |a| a.failures.len());
    let win_fail = r.interval.as_ref().map_or(usize::MAX, |a| a.failures.len());
    vec![
        Check::new(
            "potentials non-increasing with per-step guaranteed drops",
            format!("{} s={}", r.instance, r.s()),
            phi_fail as f64,
            0.0,
            phi_fail == 0,
        ),
        Check::new(
            "interval drops for nodes crossing the band",
            format!("{} s={}", r.instance, r.s()),
            win_fail as f64,
            0.0,
            win_fail == 0,
        ),
    ]
}

/// SendRound with `d° = 2d` on a random `d`-regular graph from `K = n²` tokens,
/// run for `20·(T + ln²n/μ)` steps with all audits attached.
pub fn long_run_endpoint(n: usize, d: usize, seed: u64) -> Result<LongRun> {
    let d_loops = 2 * d;
    let g = augment(random_regular(n, d, seed)?, d_loops);
    let d_plus = g.d_plus();
    let summary = eigen_gap(&transition_matrix(&g))?;
    let k = (n * n) as u64;
    let balancing_steps = summary.balancing_steps(k)?;
    let ln_n = (n as f64).ln();
    let steps = (20.0 * (balancing_steps as f64 + ln_n * ln_n / summary.mu)).ceil() as usize;
    let lambda = Ratio::new(d_plus as i128 - 1, 2);
    let window = dip_window(n, d, summary.mu, (d_plus as f64 - 1.0) / 2.0);
    let line = LineParams {
        delta: 0,
        r: d_loops as u64,
        lambda,
        d_plus,
    };
    let mut load = LoadVector::zeros(n);
    load.0[0] = k;
    let threshold = line.threshold(load.average());
    let instance = format!("random:{n}:{d}:{seed} d_loops={d_loops} send-round point:{k}");
    let run = audit_good_s(
        &instance,
        &g,
        &Balancer::SendRound,
        &load,
        steps,
        window,
        Some(DipSettings {
            line,
            from: balancing_steps,
            window,
        }),
    )?;
    Ok(LongRun {
        run,
        d,
        d_loops,
        d_plus,
        balancing_steps,
        window,
        threshold,
    })
}

/// Steady-state adversary: fixed point for ten steps, round-fair, and
/// discrepancy at least `d·diam/2`.
pub fn steady_state_battery() -> Result<Vec<Check>> {
    let mut graphs: Vec<(String, RegularGraph)> = (8..=128)
        .map(|n| (format!("cycle:{n}"), cycle(n)))
        .map(|(s, g)| (s, g.unwrap()))
        .collect();
    graphs.push(("torus:8x2".into(), torus(8, 2)?));
    let mut checks = Vec::new();
    for (name, g) in graphs {
        let source = g.peripheral_node()?;
        let diam = g.diameter()?;
        let adv = steady_state_adversary(&g, source)?;
        let mut sim = Simulation::new(adv.graph.clone(), adv.balancer(), adv.load.clone())?;
        let mut trace = Vec::new();
        let mut fixed = true;
        for _ in 0..10 {
            let before = sim.load().clone();
            let flows = sim.step()?;
            fixed &= *sim.load() == adv.load;
            trace.push((before, flows));
        }
        let disc = adv.load.discrepancy();
        let instance = format!("{name} source={source} diam={diam}");
        checks.push(Check::holds(
            "exact fixed point over 10 steps",
            instance.clone(),
            fixed,
        ));
        checks.push(Check::holds(
            "round-fair trace",
            instance.clone(),
            round_fairness_check(&trace),
        ));
        checks.push(Check::new(
            "discrepancy >= d diam / 2",
            instance,
            disc as f64,
            (g.d() * diam) as f64 / 2.0,
            2 * disc as usize >= g.d() * diam,
        ));
    }
    Ok(checks)
}

/// SendFloor with `d° = d` never moves the clique load on circulant cliques.
pub fn clique_battery() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (n, d) in [(8, 4), (12, 6)] {
        let fx = stateless_clique_fixture(n, d)?;
        let g = augment(fx.graph.clone(), d);
        let mut sim = Simulation::new(g, Balancer::SendFloor, fx.load.clone())?;
        let mut fixed = true;
        sim.run(1000, |_, x| fixed &= *x == fx.load)?;
        let instance = format!("circlique:{n}:{d} d_loops={d} send-floor ell={}", fx.ell);
        checks.push(Check::holds(
            "load vector fixed for 1000 steps",
            instance.clone(),
            fixed,
        ));
        let disc = sim.load().discrepancy();
        checks.push(Check::new(
            "discrepancy stays floor(d/2) - 1",
            instance,
            disc as f64,
            fx.ell as f64,
            disc == fx.ell,
        ));
    }
    Ok(checks)
}

/// Rotor-router configuration on odd cycles: period two, node `u` alternating
/// `(L ± φ)·d`, antisymmetric flows, discrepancy at least `d·φ` throughout.
pub fn odd_cycle_battery(sizes: impl IntoIterator<Item = usize>) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for n in sizes {
        let base = cycle(n)?;
        let d = base.d() as u64;
        let phi = base.odd_girth().map(|g| (g - 1) / 2).unwrap_or(0) as u64;
        let l = 2 * phi.max(1);
        let cfg = odd_cycle_rotor_config(&base, l)?;
        let u = cfg.source;
        let g = cfg.graph.clone();
        let mut sim = Simulation::with_state(
            g.clone(),
            Balancer::RotorRouter,
            cfg.load.clone(),
            cfg.state.clone(),
        )?;
        let mut loads = vec![cfg.load.clone()];
        let mut antisymmetric = true;
        for _ in 0..20 {
            let flows = sim.step()?;
            for v in 0..n {
                for (i, &w) in g.base().neighbors(v).iter().enumerate() {
                    let back = g
                        .base()
                        .neighbors(w)
                        .iter()
                        .position(|&z| z == v)
                        .expect("symmetric adjacency");
                    antisymmetric &= flows.port(v, i) + flows.port(w, back) == 2 * l;
                }
            }
            loads.push(sim.load().clone());
        }
        let periodic = loads.windows(3).all(|w| w[0] == w[2]) && loads[0] != loads[1];
        let alternates = loads.iter().enumerate().all(|(t, x)| {
            x.0[u]
                == if t % 2 == 0 {
                    (l + phi) * d
                } else {
                    (l - phi) * d
                }
        });
        let min_disc = loads.iter().map(LoadVector::discrepancy).min().unwrap_or(0);
        let instance = format!("cycle:{n} L={l} phi={phi} u={u}");
        checks.push(Check::holds(
            "exactly 2-periodic",
            instance.clone(),
            periodic,
        ));
        checks.push(Check::holds(
            "node u alternates (L +- phi) d",
            instance.clone(),
            alternates,
        ));
        checks.push(Check::holds(
            "f_t(v,w) + f_t(w,v) = 2L",
            instance.clone(),
            antisymmetric,
        ));
        checks.push(Check::new(
            "discrepancy >= d phi at every step",
            instance,
            min_disc as f64,
            (d * phi) as f64,
            min_disc >= d * phi,
        ));
    }
    Ok(checks)
}

/// Error-matrix bounds for `c ∈ {1, 4}` and current sums below `24/√a`.
pub fn error_matrix_battery() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, g) in [
        ("cycle:16 d_loops=2", augment(cycle(16)?, 2)),
        ("cycle:3 d_loops=2", augment(cycle(3)?, 2)),
    ] {
        let p = transition_matrix(&g);
        let n = g.n();
        for c in [1u32, 4] {
            let horizon = default_horizon(&p, c)?;
            let unit = |_t: usize| {
                let mut e = vec![0.0; n];
                e[0] = 1.0;
                e
            };
            let signs = |t: usize| {
                let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
                (0..n)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect::<Vec<f64>>()
            };
            let reports = [
                ("unit", lambda_bound_check(&p, unit, horizon, c)?),
                ("signs", lambda_bound_check(&p, signs, horizon, c)?),
                (
                    "zero",
                    lambda_bound_check(&p, |_| vec![0.0; n], horizon, c)?,
                ),
            ];
            for (q, rep) in reports {
                let instance = format!("{name} c={c} q={q}");
                checks.push(Check::at_most(
                    "pointwise error-matrix bound 2^-c",
                    instance.clone(),
                    rep.pointwise_worst,
                    rep.pointwise_bound,
                ));
                checks.push(Check::at_most(
                    "tail sum bound n^-c max|q|",
                    instance,
                    rep.tail_sum,
                    rep.tail_bound,
                ));
            }
        }
    }
    let lazy = [
        ("cycle:16 d_loops=2", augment(cycle(16)?, 2)),
        ("cycle:3 d_loops=2", augment(cycle(3)?, 2)),
        ("torus:4x2 d_loops=4", augment(torus(4, 2)?, 4)),
        ("hypercube:4 d_loops=4", augment(hypercube(4)?, 4)),
        (
            "random:64:4:1 d_loops=4",
            augment(random_regular(64, 4, 1)?, 4),
        ),
    ];
    for (name, g) in lazy {
        let sums = current_sums(&transition_matrix(&g), 200)?;
        checks.push(Check::at_most(
            "current sum at a=0 <= 2",
            name,
            sums[0],
            2.0,
        ));
        let worst = (1..=200)
            .map(|a| sums[a] * (a as f64).sqrt())
            .fold(0.0f64, f64::max);
        checks.push(Check::new(
            "current sum < 24/sqrt(a) for a in [1,200]",
            name,
            worst,
            24.0,
            worst < 24.0,
        ));
    }
    Ok(checks)
}

/// Deviation identity on randomly drawn small instances.
pub fn deviation_identity_battery(configs: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for _ in 0..configs {
        let (name, base) = match rng.random_range(0..4) {
            0 => {
                let n = rng.random_range(3..=20);
                (format!("cycle:{n}"), cycle(n)?)
            }
            1 => {
                let side = rng.random_range(3..=5);
                (format!("torus:{side}x2"), torus(side, 2)?)
            }
            2 => {
                let dim = rng.random_range(2..=4);
                (format!("hypercube:{dim}"), hypercube(dim)?)
            }
            _ => {
                let n = 2 * rng.random_range(4..=10);
                let s = rng.random_range(0..1000);
                (format!("random:{n}:3:{s}"), random_regular(n, 3, s)?)
            }
        };
        let d = base.d();
        let balancer = CLASS_BALANCERS.choose(&mut rng).expect("non-empty").clone();
        let d_loops = match balancer {
            Balancer::SendRound => rng.random_range(d..=2 * d),
            _ => rng.random_range(0..=d),
        };
        let g = augment(base, d_loops);
        let m = rng.random_range(0..=50 * g.n() as u64);
        let mut load = LoadVector::zeros(g.n());
        for _ in 0..m {
            load.0[rng.random_range(0..g.n())] += 1;
        }
        let steps = rng.random_range(50..=100);
        let mut sim = Simulation::new(g.clone(), balancer.clone(), load)?.with_history();
        sim.run(steps, |_, _| {})?;
        let delta = class_delta(&balancer);
        let instance = format!(
            "{name} d_loops={d_loops} {} m={m} steps={steps}",
            balancer.name()
        );
        let norm = normalize_remainder(sim.ledger(), delta)?;
        let diag = deviation_diagnostics(&norm, &transition_matrix(&g));
        let (residual, eps, bound) = match &diag {
            Ok(dg) => (dg.max_residual, dg.max_eps, dg.eps_bound),
            Err(Error::DiagnosticsFailure { residual, .. }) => (*residual, f64::NAN, f64::NAN),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        checks.push(Check::at_most(
            "deviation identity residual",
            instance.clone(),
            residual,
            DIAGNOSTICS_TOLERANCE,
        ));
        checks.push(Check::at_most(
            "max |eps| <= delta d+ + r",
            instance.clone(),
            eps,
            bound,
        ));
        checks.push(Check::at_most(
            "normalized remainder |r'| <= d+",
            instance.clone(),
            norm.max_abs_remainder as f64,
            g.d_plus() as f64,
        ));
        checks.push(Check::holds(
            "all ports within delta of the mean",
            instance,
            norm.deviation_bound_holds(),
        ));
    }
    Ok(checks)
}
