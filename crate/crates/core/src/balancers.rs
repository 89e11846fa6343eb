//! Synchronous-round token balancers.
//!
//! Every discrete balancer decides, for each node independently, how many
//! tokens go over each port of the balancing graph and how many are retained as
//! a remainder. [`step`] applies those decisions to a whole load vector.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    augment, circulant_clique, circulant_clique_members, BalancingGraph, DistanceLabeling,
    RegularGraph,
};
use crate::spectral::TransitionMatrix;

/// Integer token counts per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoadVector(pub Vec<u64>);

impl LoadVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Exact average `m / n`.
    pub fn average(&self) -> Ratio<i128> {
        Ratio::new(self.total() as i128, self.n() as i128)
    }

    pub fn max(&self) -> u64 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn min(&self) -> u64 {
        self.0.iter().copied().min().unwrap_or(0)
    }

    pub fn discrepancy(&self) -> u64 {
        self.max() - self.min()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| x as f64).collect()
    }
}

impl From<Vec<u64>> for LoadVector {
    fn from(v: Vec<u64>) -> Self {
        Self(v)
    }
}

/// Tokens sent per port in one step, plus what each node retained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFlows {
    d_plus: usize,
    ports: Vec<u64>,
    remainder: Vec<u64>,
}

impl StepFlows {
    pub fn zeros(n: usize, d_plus: usize) -> Self {
        Self {
            d_plus,
            ports: vec![0; n * d_plus],
            remainder: vec![0; n],
        }
    }

    /// Builds flows from per-node port rows and remainders.
    pub fn from_rows(d_plus: usize, rows: &[Vec<u64>], remainder: Vec<u64>) -> Result<Self> {
        if rows.len() != remainder.len() || rows.iter().any(|r| r.len() != d_plus) {
            return Err(Error::invalid("flow rows do not match the port layout"));
        }
        Ok(Self {
            d_plus,
            ports: rows.concat(),
            remainder,
        })
    }

    pub fn n(&self) -> usize {
        self.remainder.len()
    }

    pub fn d_plus(&self) -> usize {
        self.d_plus
    }

    pub fn row(&self, u: usize) -> &[u64] {
        &self.ports[u * self.d_plus..(u + 1) * self.d_plus]
    }

    pub fn port(&self, u: usize, i: usize) -> u64 {
        self.ports[u * self.d_plus + i]
    }

    pub fn remainder(&self, u: usize) -> u64 {
        self.remainder[u]
    }

    pub fn out_flow(&self, u: usize) -> u64 {
        self.row(u).iter().sum()
    }

    /// Tokens retained in self-loops at `u` (the aggregate `f(u,u)`).
    pub fn loop_flow(&self, u: usize, d: usize) -> u64 {
        self.row(u)[d..].iter().sum()
    }
}

/// Per-port flows fixed for every step, as used by the steady-state adversary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTable {
    pub d_plus: usize,
    pub rows: Vec<Vec<u64>>,
}

impl FlowTable {
    pub fn get(&self, u: usize, i: usize) -> u64 {
        self.rows[u][i]
    }

    pub fn row_sum(&self, u: usize) -> u64 {
        self.rows[u].iter().sum()
    }

    /// Load vector consistent with sending this table: each node's out-flow.
    pub fn out_loads(&self) -> LoadVector {
        LoadVector((0..self.rows.len()).map(|u| self.row_sum(u)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BalancerState {
    Stateless,
    /// Rotor pointers index into `order[u]`, a permutation of the ports the
    /// rotor cycles over.
    Rotor {
        pointer: Vec<usize>,
        order: Vec<Vec<usize>>,
    },
}

impl BalancerState {
    pub fn is_stateless(&self) -> bool {
        matches!(self, BalancerState::Stateless)
    }

    /// Checks that pointers are in range and orders are permutations.
    pub fn validate(&self) -> Result<()> {
        if let BalancerState::Rotor { pointer, order } = self {
            for (u, (p, o)) in pointer.iter().zip(order).enumerate() {
                if *p >= o.len().max(1) {
                    return Err(Error::invalid(format!(
                        "rotor pointer {p} out of range at node {u}"
                    )));
                }
                let mut sorted = o.clone();
                sorted.sort_unstable();
                if sorted.iter().enumerate().any(|(i, &x)| i != x) {
                    return Err(Error::invalid(format!(
                        "port order at node {u} is not a permutation"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalancerKind {
    SendFloor,
    SendRound,
    RotorRouter,
    RotorRouterStar,
    Continuous,
    AdversarySteady,
    AdversaryRotorOdd,
}

impl BalancerKind {
    pub const ALL: [BalancerKind; 7] = [
        BalancerKind::SendFloor,
        BalancerKind::SendRound,
        BalancerKind::RotorRouter,
        BalancerKind::RotorRouterStar,
        BalancerKind::Continuous,
        BalancerKind::AdversarySteady,
        BalancerKind::AdversaryRotorOdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BalancerKind::SendFloor => "send-floor",
            BalancerKind::SendRound => "send-round",
            BalancerKind::RotorRouter => "rotor-router",
            BalancerKind::RotorRouterStar => "rotor-router-star",
            BalancerKind::Continuous => "continuous",
            BalancerKind::AdversarySteady => "adversary-steady",
            BalancerKind::AdversaryRotorOdd => "adversary-rotor-odd",
        }
    }

    /// The graph-independent discrete rule, if this kind has one.
    pub fn rule(self) -> Option<Balancer> {
        match self {
            BalancerKind::SendFloor => Some(Balancer::SendFloor),
            BalancerKind::SendRound => Some(Balancer::SendRound),
            BalancerKind::RotorRouter => Some(Balancer::RotorRouter),
            BalancerKind::RotorRouterStar => Some(Balancer::RotorRouterStar),
            _ => None,
        }
    }
}

impl fmt::Display for BalancerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BalancerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown balancer `{s}`")))
    }
}

/// A discrete balancer ready to run on a particular balancing graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Balancer {
    SendFloor,
    SendRound,
    RotorRouter,
    RotorRouterStar,
    /// Sends the same table every step; infeasible whenever a node's load
    /// differs from its table row sum.
    Fixed(FlowTable),
}

impl Balancer {
    /// Checks the balancer's structural requirements against `g`.
    pub fn check(&self, g: &BalancingGraph) -> Result<()> {
        match self {
            Balancer::SendRound if g.d_plus() < 2 * g.d() => Err(Error::InfeasibleBalancer(
                format!("send-round needs d+ >= 2d (d={}, d+={})", g.d(), g.d_plus()),
            )),
            Balancer::RotorRouterStar if g.d_loops() == 0 => Err(Error::InfeasibleBalancer(
                "rotor-router-star needs at least one self-loop".into(),
            )),
            Balancer::Fixed(t) if t.d_plus != g.d_plus() || t.rows.len() != g.n() => Err(
                Error::InfeasibleBalancer("flow table does not match the graph".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Balancer::SendFloor => "send-floor",
            Balancer::SendRound => "send-round",
            Balancer::RotorRouter => "rotor-router",
            Balancer::RotorRouterStar => "rotor-router-star",
            Balancer::Fixed(_) => "fixed-flows",
        }
    }

    /// Default state: rotors at position 0 over the canonical port order.
    pub fn initial_state(&self, g: &BalancingGraph) -> BalancerState {
        let ports = match self {
            Balancer::RotorRouter => g.d_plus(),
            Balancer::RotorRouterStar => g.d_plus() - 1,
            _ => return BalancerState::Stateless,
        };
        BalancerState::Rotor {
            pointer: vec![0; g.n()],
            order: vec![(0..ports).collect(); g.n()],
        }
    }

    /// Whether a cumulative-fairness bound is known for this balancer.
    pub fn fairness_delta(&self) -> Option<u64> {
        match self {
            Balancer::SendFloor | Balancer::SendRound => Some(0),
            Balancer::RotorRouter | Balancer::RotorRouterStar => Some(1),
            Balancer::Fixed(_) => None,
        }
    }
}

/// Port flows of one node and the tokens it keeps back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeFlows {
    pub ports: Vec<u64>,
    pub remainder: u64,
}

/// `⌊x/d⁺⌋` over every original edge; the rest spread over self-loops as evenly
/// as possible, earlier loops first. Without self-loops the rest is retained.
pub fn send_floor(x: u64, d: usize, d_loops: usize) -> NodeFlows {
    let mut ports = vec![0; d + d_loops];
    let remainder = send_floor_into(x, d, d_loops, &mut ports);
    NodeFlows { ports, remainder }
}

fn send_floor_into(x: u64, d: usize, d_loops: usize, out: &mut [u64]) -> u64 {
    let d_plus = (d + d_loops) as u64;
    let q = x / d_plus;
    out[..d].fill(q);
    spread(x - d as u64 * q, &mut out[d..])
}

/// Round-half-up `[x/d⁺]` over every original edge, the rest spread over
/// self-loops. Requires `d⁺ >= 2d` so the rest is never negative.
pub fn send_round(x: u64, d: usize, d_loops: usize) -> NodeFlows {
    let mut ports = vec![0; d + d_loops];
    let remainder = send_round_into(x, d, d_loops, &mut ports);
    NodeFlows { ports, remainder }
}

fn send_round_into(x: u64, d: usize, d_loops: usize, out: &mut [u64]) -> u64 {
    let d_plus = (d + d_loops) as u64;
    let q = (2 * x + d_plus) / (2 * d_plus);
    out[..d].fill(q);
    let sent = d as u64 * q;
    debug_assert!(sent <= x, "send-round residual negative");
    spread(x - sent, &mut out[d..])
}

/// Spreads `tokens` evenly over `slots`, earlier slots taking the surplus.
/// Returns what could not be placed (only when there are no slots).
fn spread(tokens: u64, slots: &mut [u64]) -> u64 {
    if slots.is_empty() {
        return tokens;
    }
    let k = slots.len() as u64;
    let (base, extra) = (tokens / k, tokens % k);
    for (i, s) in slots.iter_mut().enumerate() {
        *s = base + u64::from((i as u64) < extra);
    }
    0
}

/// Round-robin over `k` positions starting at `rotor`; returns the count per
/// position and the advanced rotor.
pub fn rotor_router(x: u64, rotor: usize, k: usize) -> (Vec<u64>, usize) {
    let mut out = vec![0; k];
    let next = rotor_into(x, rotor, &mut out, |p| p);
    (out, next)
}

/// Writes `x` tokens round-robin over positions, mapping position `p` to the
/// output slot `slot(p)`.
fn rotor_into(x: u64, rotor: usize, out: &mut [u64], slot: impl Fn(usize) -> usize) -> usize {
    let k = out.len();
    let (base, extra) = (x / k as u64, (x % k as u64) as usize);
    for p in 0..k {
        let offset = (p + k - rotor) % k;
        out[slot(p)] = base + u64::from(offset < extra);
    }
    (rotor + extra) % k
}

/// The last self-loop takes `⌈x/(2d°)⌉` (at most `x`); the rest goes
/// round-robin over the other `d⁺ − 1` ports.
pub fn rotor_router_star(x: u64, rotor: usize, d: usize, d_loops: usize) -> (Vec<u64>, usize) {
    let mut out = vec![0; d + d_loops];
    let order: Vec<usize> = (0..d + d_loops - 1).collect();
    let next = rotor_star_into(x, rotor, &order, d_loops, &mut out);
    (out, next)
}

fn rotor_star_into(
    x: u64,
    rotor: usize,
    order: &[usize],
    d_loops: usize,
    out: &mut [u64],
) -> usize {
    let special = x.div_ceil(2 * d_loops as u64).min(x);
    let last = out.len() - 1;
    out[last] = special;
    let (head, _) = out.split_at_mut(last);
    let mut tmp = vec![0; head.len()];
    let next = rotor_into(x - special, rotor, &mut tmp, |p| p);
    for (p, &port) in order.iter().enumerate() {
        head[port] = tmp[p];
    }
    next
}

/// Runs one synchronous round.
pub fn step(
    balancer: &Balancer,
    g: &BalancingGraph,
    x: &LoadVector,
    state: &mut BalancerState,
) -> Result<(StepFlows, LoadVector)> {
    let n = g.n();
    let (d, d_loops, d_plus) = (g.d(), g.d_loops(), g.d_plus());
    if x.n() != n {
        return Err(Error::invalid(format!(
            "load vector has {} entries, graph has {n} nodes",
            x.n()
        )));
    }
    let mut flows = StepFlows::zeros(n, d_plus);
    for u in 0..n {
        let xu = x.0[u];
        let row = &mut flows.ports[u * d_plus..(u + 1) * d_plus];
        let rem = match (balancer, &mut *state) {
            (Balancer::SendFloor, _) => send_floor_into(xu, d, d_loops, row),
            (Balancer::SendRound, _) => {
                if (d as u64) * ((2 * xu + d_plus as u64) / (2 * d_plus as u64)) > xu {
                    return Err(Error::InfeasibleBalancer(format!(
                        "send-round cannot cover its original edges at node {u} (load {xu})"
                    )));
                }
                send_round_into(xu, d, d_loops, row)
            }
            (Balancer::RotorRouter, BalancerState::Rotor { pointer, order }) => {
                let ord = &order[u];
                pointer[u] = rotor_into(xu, pointer[u], row, |p| ord[p]);
                0
            }
            (Balancer::RotorRouterStar, BalancerState::Rotor { pointer, order }) => {
                pointer[u] = rotor_star_into(xu, pointer[u], &order[u], d_loops, row);
                0
            }
            (Balancer::Fixed(table), _) => {
                if table.row_sum(u) != xu {
                    return Err(Error::InfeasibleBalancer(format!(
                        "node {u} holds {xu} tokens but its flow table sends {}",
                        table.row_sum(u)
                    )));
                }
                row.copy_from_slice(&table.rows[u]);
                0
            }
            (b, BalancerState::Stateless) => {
                return Err(Error::invalid(format!("{} needs rotor state", b.name())));
            }
        };
        flows.remainder[u] = rem;
    }
    let y = receive(g, &flows);
    Ok((flows, y))
}

/// New loads: each node's remainder plus everything arriving on its ports.
fn receive(g: &BalancingGraph, flows: &StepFlows) -> LoadVector {
    let d = g.d();
    let y = (0..g.n())
        .map(|u| {
            let incoming: u64 = g
                .base()
                .neighbors(u)
                .iter()
                .enumerate()
                .map(|(i, &v)| flows.port(v, g.reverse_port(u, i)))
                .sum();
            flows.remainder(u) + flows.loop_flow(u, d) + incoming
        })
        .collect();
    LoadVector(y)
}

/// One step of the continuous diffusion process, `y = P x`.
pub fn continuous_step(p: &TransitionMatrix, x: &[f64]) -> Vec<f64> {
    p.apply(x)
}

/// Round-fair adversary whose loads never change.
#[derive(Debug, Clone)]
pub struct SteadyStateAdversary {
    pub graph: BalancingGraph,
    pub labeling: DistanceLabeling,
    pub load: LoadVector,
    pub table: FlowTable,
}

impl SteadyStateAdversary {
    pub fn balancer(&self) -> Balancer {
        Balancer::Fixed(self.table.clone())
    }
}

/// Constant flows `f(v, w) = min(b(v), b(w))` with `b` the hop distance from
/// `source`, on the graph without self-loops. The induced load
/// `x(v) = Σ_w f(w, v)` is a fixed point.
pub fn steady_state_adversary(g: &RegularGraph, source: usize) -> Result<SteadyStateAdversary> {
    let labeling = g.distance_labeling(source)?;
    let b = &labeling.b;
    let rows: Vec<Vec<u64>> = (0..g.n())
        .map(|v| {
            g.neighbors(v)
                .iter()
                .map(|&w| b[v].min(b[w]) as u64)
                .collect()
        })
        .collect();
    let table = FlowTable {
        d_plus: g.d(),
        rows,
    };
    let load = table.out_loads();
    let graph = augment(g.clone(), 0);
    let balancer = Balancer::Fixed(table.clone());
    let (_, y) = step(&balancer, &graph, &load, &mut BalancerState::Stateless)?;
    if y != load {
        return Err(Error::Precondition(
            "steady-state flows are not a fixed point".into(),
        ));
    }
    Ok(SteadyStateAdversary {
        graph,
        labeling,
        load,
        table,
    })
}

/// Two-periodic rotor-router configuration on a non-bipartite graph without
/// self-loops.
#[derive(Debug, Clone)]
pub struct OddCycleRotorConfig {
    pub graph: BalancingGraph,
    /// Node on a shortest odd cycle; its load swings by `±φ·d` around `L·d`.
    pub source: usize,
    /// Odd girth is `2φ + 1`.
    pub phi: usize,
    pub base_load: u64,
    pub load: LoadVector,
    pub state: BalancerState,
    pub even_flows: FlowTable,
    pub odd_flows: FlowTable,
}

/// Builds the configuration from the hop labeling `b` around a node on a
/// shortest odd cycle. With `φ` from the odd girth `2φ + 1`, an edge
/// `(v1, v2)` with some label below `φ` carries `L ± (φ − min(b))` in even
/// steps (plus when `b(v1)` is even) and the mirrored amount in odd steps;
/// edges between nodes at distance `φ` or more carry `L`. Rotor orders put
/// each node's heavier even-step ports first, which makes rotor-router
/// reproduce both tables forever.
pub fn odd_cycle_rotor_config(g: &RegularGraph, base_load: u64) -> Result<OddCycleRotorConfig> {
    let (source, girth) = g
        .shortest_odd_cycle_source()
        .ok_or_else(|| Error::Precondition("graph is bipartite; no odd cycle".into()))?;
    let phi = (girth - 1) / 2;
    if base_load < phi as u64 {
        return Err(Error::Precondition(format!(
            "base load {base_load} below phi={phi} would give negative flows"
        )));
    }
    let b = g.distance_labeling(source)?.b;
    let l = base_load;
    let even = |v1: usize, v2: usize| -> u64 {
        let (b1, b2) = (b[v1], b[v2]);
        if b1.min(b2) >= phi {
            return l;
        }
        let k = (phi - b1.min(b2)) as u64;
        match (b1 % 2, b2 % 2) {
            (0, 1) => l + k,
            (1, 0) => l - k,
            _ => unreachable!("adjacent nodes below phi have labels of different parity"),
        }
    };
    let n = g.n();
    let even_rows: Vec<Vec<u64>> = (0..n)
        .map(|v| g.neighbors(v).iter().map(|&w| even(v, w)).collect())
        .collect();
    let odd_rows: Vec<Vec<u64>> = (0..n)
        .map(|v| g.neighbors(v).iter().map(|&w| even(w, v)).collect())
        .collect();

    let mut order = Vec::with_capacity(n);
    for (v, row) in even_rows.iter().enumerate() {
        let lo = *row.iter().min().unwrap_or(&0);
        let hi = *row.iter().max().unwrap_or(&0);
        if hi - lo > 1 {
            return Err(Error::Precondition(format!(
                "even-step flows at node {v} differ by more than one"
            )));
        }
        let mut ports: Vec<usize> = (0..row.len()).collect();
        // Heavier ports first; stable sort keeps canonical order within a class.
        ports.sort_by_key(|&i| std::cmp::Reverse(row[i]));
        order.push(ports);
    }
    let even_flows = FlowTable {
        d_plus: g.d(),
        rows: even_rows,
    };
    let odd_flows = FlowTable {
        d_plus: g.d(),
        rows: odd_rows,
    };
    let load = even_flows.out_loads();
    let state = BalancerState::Rotor {
        pointer: vec![0; n],
        order,
    };
    let graph = augment(g.clone(), 0);

    let mut check_state = state.clone();
    let mut x = load.clone();
    for t in 0..4 {
        let (flows, y) = step(&Balancer::RotorRouter, &graph, &x, &mut check_state)?;
        let table = if t % 2 == 0 { &even_flows } else { &odd_flows };
        if (0..n).any(|v| flows.row(v) != table.rows[v].as_slice()) {
            return Err(Error::Precondition(format!(
                "rotor-router deviates from the flow table at step {t}"
            )));
        }
        x = y;
    }
    if x != load {
        return Err(Error::Precondition(
            "configuration is not 2-periodic".into(),
        ));
    }
    Ok(OddCycleRotorConfig {
        graph,
        source,
        phi,
        base_load,
        load,
        state,
        even_flows,
        odd_flows,
    })
}

#[derive(Debug, Clone)]
pub struct CliqueFixture {
    pub graph: RegularGraph,
    pub clique: Vec<usize>,
    /// Load placed on each clique node: `⌊d/2⌋ − 1`.
    pub ell: u64,
    pub load: LoadVector,
}

/// Circulant clique graph with load `⌊d/2⌋ − 1` on each clique node.
pub fn stateless_clique_fixture(n: usize, d: usize) -> Result<CliqueFixture> {
    let graph = circulant_clique(n, d)?;
    let clique = circulant_clique_members(d);
    let ell = (d / 2).saturating_sub(1) as u64;
    let mut load = LoadVector::zeros(n);
    for &u in &clique {
        load.0[u] = ell;
    }
    Ok(CliqueFixture {
        graph,
        clique,
        ell,
        load,
    })
}
