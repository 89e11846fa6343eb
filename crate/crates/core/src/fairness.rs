//! Cumulative flow ledgers and fairness audits.
//!
//! A [`FlowLedger`] is fed the [`StepFlows`] of every round and keeps the
//! cumulative per-port counts. Fairness statistics are folded in online so long
//! runs need no per-step history; the history is kept only on request, for
//! remainder normalization and deviation diagnostics.

use serde::{Deserialize, Serialize};

use crate::balancers::{LoadVector, StepFlows};
use crate::error::{Error, Result};
use crate::graph::BalancingGraph;
use crate::spectral::TransitionMatrix;

/// Absolute tolerance for the deviation identity.
pub const DIAGNOSTICS_TOLERANCE: f64 = 1e-9;

const MAX_LISTED_VIOLATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub node: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Largest gap between cumulative counts of two original edges of one node.
    pub delta_observed: u128,
    /// Every port received `⌊x/d⁺⌋` or `⌈x/d⁺⌉` tokens in every step.
    pub round_fair: bool,
    pub round_fair_witness: Option<Violation>,
    /// Largest `s ≤ d°` for which the run is a good s-balancer trace, 0 if none.
    pub good_s: usize,
    /// Every original edge received at least `⌊x/d⁺⌋` tokens in every step.
    pub floor_ok: bool,
    /// Floor-clause violations; the list is capped, the count is not.
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    pub steps: usize,
}

/// Whether `s` is supported by the audited trace, and the largest `s` that is.
pub fn good_s_check(report: &FairnessReport, s: usize) -> (bool, usize) {
    (s >= 1 && s <= report.good_s, report.good_s)
}

/// Online accumulator for per-step fairness conditions.
#[derive(Debug, Clone)]
struct Tracker {
    d: usize,
    delta: u128,
    round_fair: bool,
    round_witness: Option<Violation>,
    /// Smallest ceiling-level loop count seen where it fell short of `e(u)`.
    s_cap: usize,
    violations: Vec<Violation>,
    violation_count: usize,
}

impl Tracker {
    fn new(d: usize, d_loops: usize) -> Self {
        Self {
            d,
            delta: 0,
            round_fair: true,
            round_witness: None,
            s_cap: d_loops,
            violations: Vec::new(),
            violation_count: 0,
        }
    }

    fn observe(&mut self, t: usize, u: usize, x: u64, row: &[u64]) {
        let d_plus = row.len() as u64;
        let lo = x / d_plus;
        let hi = x.div_ceil(d_plus);
        if let Some(i) = row[..self.d].iter().position(|&f| f < lo) {
            self.violation_count += 1;
            if self.violations.len() < MAX_LISTED_VIOLATIONS {
                self.violations.push(Violation {
                    t,
                    node: u,
                    detail: format!("edge port {i} sent {} < floor {lo}", row[i]),
                });
            }
        }
        if let Some(i) = row.iter().position(|&f| f < lo || f > hi) {
            if self.round_fair {
                self.round_witness = Some(Violation {
                    t,
                    node: u,
                    detail: format!("port {i} sent {} outside [{lo}, {hi}]", row[i]),
                });
            }
            self.round_fair = false;
            return;
        }
        let e = (x - d_plus * lo) as usize;
        let at_ceiling = row[self.d..].iter().filter(|&&f| f == hi).count();
        if e > 0 && at_ceiling < e {
            self.s_cap = self.s_cap.min(at_ceiling);
        }
    }

    fn observe_gap(&mut self, cumulative: &[u128]) {
        let originals = &cumulative[..self.d];
        if let (Some(max), Some(min)) = (originals.iter().max(), originals.iter().min()) {
            self.delta = self.delta.max(max - min);
        }
    }

    fn report(&self, steps: usize) -> FairnessReport {
        let good = self.round_fair && self.violation_count == 0 && self.delta <= 1;
        FairnessReport {
            delta_observed: self.delta,
            round_fair: self.round_fair,
            round_fair_witness: self.round_witness.clone(),
            good_s: if good { self.s_cap } else { 0 },
            floor_ok: self.violation_count == 0,
            violations: self.violations.clone(),
            violation_count: self.violation_count,
            steps,
        }
    }
}

/// Cumulative flows of one run, checked against the conservation identities at
/// every step.
#[derive(Debug, Clone)]
pub struct FlowLedger {
    graph: BalancingGraph,
    initial: Vec<u64>,
    cumulative: Vec<u128>,
    out: Vec<u128>,
    inflow: Vec<u128>,
    remainder: Vec<u64>,
    t: usize,
    tracker: Tracker,
    history: Option<Vec<StepFlows>>,
}

impl FlowLedger {
    pub fn new(g: &BalancingGraph, initial: &LoadVector) -> Self {
        let n = g.n();
        Self {
            graph: g.clone(),
            initial: initial.0.clone(),
            cumulative: vec![0; n * g.d_plus()],
            out: vec![0; n],
            inflow: vec![0; n],
            remainder: vec![0; n],
            t: 0,
            tracker: Tracker::new(g.d(), g.d_loops()),
            history: None,
        }
    }

    /// Ledger that also stores every step's flows.
    pub fn with_history(g: &BalancingGraph, initial: &LoadVector) -> Self {
        Self {
            history: Some(Vec::new()),
            ..Self::new(g, initial)
        }
    }

    pub fn graph(&self) -> &BalancingGraph {
        &self.graph
    }

    /// Number of recorded steps.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn initial(&self) -> &[u64] {
        &self.initial
    }

    pub fn cumulative(&self, u: usize, port: usize) -> u128 {
        self.cumulative[u * self.graph.d_plus() + port]
    }

    pub fn out_flow(&self, u: usize) -> u128 {
        self.out[u]
    }

    pub fn in_flow(&self, u: usize) -> u128 {
        self.inflow[u]
    }

    /// Remainder of the most recent step.
    pub fn remainder(&self, u: usize) -> u64 {
        self.remainder[u]
    }

    /// Load that the next recorded step must distribute.
    pub fn current_load(&self) -> LoadVector {
        LoadVector(
            (0..self.initial.len())
                .map(|u| (self.initial[u] as u128 + self.inflow[u] - self.out[u]) as u64)
                .collect(),
        )
    }

    pub fn history(&self) -> Option<&[StepFlows]> {
        self.history.as_deref()
    }

    /// Advances all cumulative quantities by one step.
    pub fn record_step(&mut self, flows: &StepFlows) -> Result<()> {
        let g = &self.graph;
        let (n, d, d_plus) = (g.n(), g.d(), g.d_plus());
        if flows.n() != n || flows.d_plus() != d_plus {
            return Err(Error::invalid("step flows do not match the ledger's graph"));
        }
        let t = self.t + 1;
        for u in 0..n {
            let x = (self.initial[u] as u128 + self.inflow[u] - self.out[u]) as u64;
            let row = flows.row(u);
            self.tracker.observe(t, u, x, row);
            let cum = &mut self.cumulative[u * d_plus..(u + 1) * d_plus];
            for (c, &f) in cum.iter_mut().zip(row) {
                *c += f as u128;
            }
            self.tracker.observe_gap(cum);
            self.out[u] += flows.out_flow(u) as u128;
            self.remainder[u] = flows.remainder(u);
            // x₁(u) + F^in_{t−1}(u) = r_t(u) + F^out_t(u)
            let lhs = self.initial[u] as u128 + self.inflow[u];
            let rhs = self.remainder[u] as u128 + self.out[u];
            if lhs != rhs {
                return Err(Error::LedgerCorruption {
                    t,
                    node: u,
                    detail: format!("x1 + F_in = {lhs} but r + F_out = {rhs}"),
                });
            }
        }
        for u in 0..n {
            let incoming: u128 = g
                .base()
                .neighbors(u)
                .iter()
                .enumerate()
                .map(|(i, &v)| flows.port(v, g.reverse_port(u, i)) as u128)
                .sum();
            self.inflow[u] += incoming + flows.loop_flow(u, d) as u128;
        }
        self.t = t;
        if let Some(h) = &mut self.history {
            h.push(flows.clone());
        }
        Ok(())
    }

    /// Fairness statistics over all recorded steps.
    pub fn report(&self) -> FairnessReport {
        self.tracker.report(self.t)
    }

    /// Largest cumulative gap between two original edges of one node, over all
    /// nodes and recorded steps.
    pub fn cumulative_fairness_gap(&self) -> u128 {
        self.tracker.delta
    }
}

/// True iff every port of every step carries `⌊x/d⁺⌋` or `⌈x/d⁺⌉` tokens, with
/// `x` the load the step distributed.
pub fn round_fairness_check(trace: &[(LoadVector, StepFlows)]) -> bool {
    trace.iter().all(|(x, flows)| {
        (0..flows.n()).all(|u| {
            let d_plus = flows.d_plus() as u64;
            let (lo, hi) = (x.0[u] / d_plus, x.0[u].div_ceil(d_plus));
            flows.row(u).iter().all(|&f| f >= lo && f <= hi)
        })
    })
}

/// Step flows after moving self-loop tokens into signed remainders.
#[derive(Debug, Clone)]
pub struct NormalizedLedger {
    graph: BalancingGraph,
    pub delta: u64,
    pub initial: Vec<u64>,
    /// Per step, row-major `n × d⁺` port flows.
    pub ports: Vec<Vec<i128>>,
    pub remainders: Vec<Vec<i128>>,
    pub max_abs_remainder: i128,
    /// Largest pairwise cumulative gap over all ports of one node.
    pub all_port_gap: i128,
    /// Largest `|d⁺·F'(e) − F'^out(u)|`; must not exceed `δ·d⁺`.
    pub worst_scaled_deviation: i128,
}

impl NormalizedLedger {
    pub fn graph(&self) -> &BalancingGraph {
        &self.graph
    }

    pub fn steps(&self) -> usize {
        self.ports.len()
    }

    pub fn deviation_bound_holds(&self) -> bool {
        self.worst_scaled_deviation <= self.delta as i128 * self.graph.d_plus() as i128
    }
}

/// Reassigns self-loop tokens to remainders so that all ports of every node,
/// self-loops included, stay pairwise cumulatively `δ`-fair.
///
/// Loops are handled one at a time; each loop's cumulative count is clamped into
/// the window `[max − δ, min + δ]` spanned by the ports already handled this
/// step, and the difference is charged to the node's remainder.
pub fn normalize_remainder(ledger: &FlowLedger, delta: u64) -> Result<NormalizedLedger> {
    let history = ledger
        .history()
        .ok_or_else(|| Error::Precondition("normalization needs a ledger with history".into()))?;
    let gap = ledger.cumulative_fairness_gap();
    if gap > delta as u128 {
        return Err(Error::Precondition(format!(
            "original edges are only {gap}-fair, not {delta}-fair"
        )));
    }
    let g = ledger.graph();
    let (n, d, d_plus) = (g.n(), g.d(), g.d_plus());
    let delta_i = delta as i128;
    let mut cum = vec![0i128; n * d_plus];
    let mut out = NormalizedLedger {
        graph: g.clone(),
        delta,
        initial: ledger.initial().to_vec(),
        ports: Vec::with_capacity(history.len()),
        remainders: Vec::with_capacity(history.len()),
        max_abs_remainder: 0,
        all_port_gap: 0,
        worst_scaled_deviation: 0,
    };
    for flows in history {
        let mut ports = vec![0i128; n * d_plus];
        let mut rem = vec![0i128; n];
        for u in 0..n {
            let row = flows.row(u);
            let c = &mut cum[u * d_plus..(u + 1) * d_plus];
            let p = &mut ports[u * d_plus..(u + 1) * d_plus];
            let mut r = flows.remainder(u) as i128;
            for i in 0..d {
                p[i] = row[i] as i128;
                c[i] += p[i];
            }
            let mut window = bounds(&c[..d]);
            for i in d..d_plus {
                let proposed = c[i] + row[i] as i128;
                let target = match window {
                    Some((lo, hi)) => proposed.clamp(hi - delta_i, lo + delta_i),
                    None => proposed,
                };
                p[i] = target - c[i];
                r += row[i] as i128 - p[i];
                c[i] = target;
                window = Some(window.map_or((target, target), |(lo, hi)| {
                    (lo.min(target), hi.max(target))
                }));
            }
            let (lo, hi) = window.unwrap_or((0, 0));
            let total: i128 = c.iter().sum();
            out.all_port_gap = out.all_port_gap.max(hi - lo);
            for &ci in c.iter() {
                out.worst_scaled_deviation = out
                    .worst_scaled_deviation
                    .max((d_plus as i128 * ci - total).abs());
            }
            out.max_abs_remainder = out.max_abs_remainder.max(r.abs());
            rem[u] = r;
        }
        out.ports.push(ports);
        out.remainders.push(rem);
    }
    Ok(out)
}

fn bounds(values: &[i128]) -> Option<(i128, i128)> {
    Some((*values.iter().min()?, *values.iter().max()?))
}

/// Per-step correction vectors of the cumulative out-flow recursion.
#[derive(Debug, Clone)]
pub struct DeviationDiagnostics {
    /// `ε_t` for `t = 1..=steps`.
    pub eps: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub max_eps: f64,
    /// `δ·d⁺ + max |r'|`.
    pub eps_bound: f64,
}

impl DeviationDiagnostics {
    pub fn eps_within_bound(&self) -> bool {
        self.max_eps <= self.eps_bound
    }
}

/// Computes `ε_t(u) = Σ_v δ_{t−1,u}(v) − r'_t(u)` where the corrective entries are
/// `F'_{t−1}(v,u) − F'^out_{t−1}(v)/d⁺` for neighbours `v` and the self-loop
/// total minus `(d°/d⁺)·F'^out_{t−1}(u)` for `u` itself, then checks
/// `F'^out_t = x₁ + P·F'^out_{t−1} + ε_t`.
pub fn deviation_diagnostics(
    ledger: &NormalizedLedger,
    p: &TransitionMatrix,
) -> Result<DeviationDiagnostics> {
    let g = ledger.graph();
    let (n, d, d_plus) = (g.n(), g.d(), g.d_plus());
    if p.n() != n || p.d_plus() != d_plus {
        return Err(Error::invalid(
            "transition matrix does not match the ledger's graph",
        ));
    }
    let dp = d_plus as i128;
    let mut cum = vec![0i128; n * d_plus];
    let mut out = vec![0i128; n];
    let mut diag = DeviationDiagnostics {
        eps: Vec::with_capacity(ledger.steps()),
        max_residual: 0.0,
        max_eps: 0.0,
        eps_bound: (ledger.delta as i128 * dp + ledger.max_abs_remainder) as f64,
    };
    for (step, (ports, rem)) in ledger.ports.iter().zip(&ledger.remainders).enumerate() {
        // d⁺·ε_t(u), exact
        let scaled: Vec<i128> = (0..n)
            .map(|u| {
                let from_neighbours: i128 = g
                    .base()
                    .neighbors(u)
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| dp * cum[v * d_plus + g.reverse_port(u, i)] - out[v])
                    .sum();
                let loops: i128 = cum[u * d_plus + d..(u + 1) * d_plus].iter().sum();
                from_neighbours + dp * loops - g.d_loops() as i128 * out[u] - dp * rem[u]
            })
            .collect();
        let eps: Vec<f64> = scaled.iter().map(|&e| e as f64 / d_plus as f64).collect();
        let prev: Vec<f64> = out.iter().map(|&o| o as f64).collect();
        let propagated = p.apply(&prev);
        for (c, &f) in cum.iter_mut().zip(ports) {
            *c += f;
        }
        for (u, o) in out.iter_mut().enumerate() {
            *o = cum[u * d_plus..(u + 1) * d_plus].iter().sum();
        }
        for u in 0..n {
            let rhs = ledger.initial[u] as f64 + propagated[u] + eps[u];
            let residual = (out[u] as f64 - rhs).abs();
            if residual > DIAGNOSTICS_TOLERANCE {
                return Err(Error::DiagnosticsFailure {
                    t: step + 1,
                    residual,
                });
            }
            diag.max_residual = diag.max_residual.max(residual);
            diag.max_eps = diag.max_eps.max(eps[u].abs());
        }
        diag.eps.push(eps);
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancers::{step, Balancer};
    use crate::graph::{augment, cycle};
    use crate::spectral::transition_matrix;

    fn run(b: &Balancer, g: &BalancingGraph, x: Vec<u64>, steps: usize) -> FlowLedger {
        let mut x = LoadVector(x);
        let mut ledger = FlowLedger::with_history(g, &x);
        let mut state = b.initial_state(g);
        for _ in 0..steps {
            let (flows, y) = step(b, g, &x, &mut state).unwrap();
            ledger.record_step(&flows).unwrap();
            x = y;
            assert_eq!(ledger.current_load(), x);
        }
        ledger
    }

    #[test]
    fn first_step_on_triangle() {
        let g = augment(cycle(3).unwrap(), 2);
        let ledger = run(&Balancer::SendFloor, &g, vec![8, 0, 0], 1);
        assert_eq!((ledger.cumulative(0, 0), ledger.cumulative(0, 1)), (2, 2));
    }

    #[test]
    fn zero_flows_only_advance_time() {
        let g = augment(cycle(3).unwrap(), 2);
        let ledger = run(&Balancer::RotorRouter, &g, vec![0; 3], 4);
        assert_eq!(ledger.t(), 4);
        assert!((0..3).all(|u| ledger.out_flow(u) == 0 && ledger.in_flow(u) == 0));
    }

    #[test]
    fn corrupt_flows_are_rejected() {
        let g = augment(cycle(3).unwrap(), 0);
        let mut ledger = FlowLedger::new(&g, &LoadVector(vec![2, 0, 0]));
        let flows =
            StepFlows::from_rows(2, &[vec![1, 0], vec![0, 0], vec![0, 0]], vec![0; 3]).unwrap();
        assert!(matches!(
            ledger.record_step(&flows),
            Err(Error::LedgerCorruption { t: 1, node: 0, .. })
        ));
    }

    #[test]
    fn class_gaps() {
        let g = augment(cycle(8).unwrap(), 2);
        assert_eq!(
            run(&Balancer::SendFloor, &g, vec![64, 0, 0, 0, 0, 0, 0, 0], 100)
                .cumulative_fairness_gap(),
            0
        );
        assert_eq!(
            run(&Balancer::SendRound, &g, vec![64, 0, 0, 0, 0, 0, 0, 0], 100)
                .cumulative_fairness_gap(),
            0
        );
        assert!(
            run(
                &Balancer::RotorRouter,
                &g,
                vec![64, 0, 0, 0, 0, 0, 0, 0],
                100
            )
            .cumulative_fairness_gap()
                <= 1
        );
    }

    #[test]
    fn round_fairness_examples() {
        let g = augment(cycle(3).unwrap(), 2);
        let x = LoadVector(vec![9, 0, 0]);
        let lopsided =
            StepFlows::from_rows(4, &[vec![9, 0, 0, 0], vec![0; 4], vec![0; 4]], vec![0; 3])
                .unwrap();
        assert!(!round_fairness_check(&[(x.clone(), lopsided)]));
        let mut state = Balancer::RotorRouter.initial_state(&g);
        let (flows, _) = step(&Balancer::RotorRouter, &g, &x, &mut state).unwrap();
        assert!(round_fairness_check(&[(x, flows)]));
    }

    #[test]
    fn good_s_on_triangle() {
        let g = augment(cycle(3).unwrap(), 2);
        let floor = run(&Balancer::SendFloor, &g, vec![7, 0, 0], 20).report();
        assert!(!floor.round_fair);
        assert_eq!(good_s_check(&floor, 1), (false, 0));
        let star = run(&Balancer::RotorRouterStar, &g, vec![7, 0, 0], 50).report();
        assert!(star.round_fair && star.good_s >= 1);
        let g = augment(cycle(9).unwrap(), 3);
        let round = run(
            &Balancer::SendRound,
            &g,
            vec![200, 0, 0, 0, 13, 0, 0, 0, 0],
            200,
        )
        .report();
        assert_eq!(good_s_check(&round, 1), (true, 1));
    }

    #[test]
    fn normalization_and_diagnostics() {
        let g = augment(cycle(3).unwrap(), 2);
        let p = transition_matrix(&g);
        for (b, delta) in [(Balancer::SendFloor, 0), (Balancer::RotorRouter, 1)] {
            let ledger = run(&b, &g, vec![37, 2, 0], 50);
            let norm = normalize_remainder(&ledger, delta).unwrap();
            assert!(norm.deviation_bound_holds());
            assert!(norm.max_abs_remainder <= g.d_plus() as i128);
            assert!(norm.all_port_gap <= delta as i128);
            let diag = deviation_diagnostics(&norm, &p).unwrap();
            assert!(diag.max_residual <= DIAGNOSTICS_TOLERANCE);
            assert!(diag.eps_within_bound());
        }
    }

    #[test]
    fn zero_run_is_identity() {
        let g = augment(cycle(5).unwrap(), 2);
        let ledger = run(&Balancer::SendFloor, &g, vec![0; 5], 10);
        let norm = normalize_remainder(&ledger, 0).unwrap();
        assert!(norm.ports.iter().flatten().all(|&f| f == 0));
        let diag = deviation_diagnostics(&norm, &transition_matrix(&g)).unwrap();
        assert!(diag.eps.iter().flatten().all(|&e| e == 0.0));
    }

    #[test]
    fn normalization_rejects_unfair_input() {
        let g = augment(cycle(8).unwrap(), 2);
        let ledger = run(
            &Balancer::RotorRouter,
            &g,
            vec![61, 0, 0, 0, 0, 0, 0, 0],
            20,
        );
        if ledger.cumulative_fairness_gap() > 0 {
            assert!(matches!(
                normalize_remainder(&ledger, 0),
                Err(Error::Precondition(_))
            ));
        }
        assert!(normalize_remainder(&FlowLedger::new(&g, &LoadVector::zeros(8)), 1).is_err());
    }
}
