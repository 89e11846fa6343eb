//! Regular graphs and their self-loop augmented balancing graphs.
//!
//! A [`RegularGraph`] stores sorted neighbor lists with no loops and no
//! multi-edges. [`BalancingGraph`] adds `d_loops` self-loops per node and fixes
//! the canonical port order: original edges by ascending neighbor index, then
//! the self-loops.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts made by the pairing model before giving up.
pub const RANDOM_REGULAR_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularGraph {
    n: usize,
    d: usize,
    adj: Vec<Vec<usize>>,
}

impl RegularGraph {
    /// Builds a graph from neighbor lists, checking regularity and symmetry.
    pub fn from_adjacency(mut adj: Vec<Vec<usize>>) -> Result<Self> {
        let n = adj.len();
        if n == 0 {
            return Err(Error::invalid("graph must have at least one node"));
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        let d = adj[0].len();
        for (u, list) in adj.iter().enumerate() {
            if list.len() != d {
                return Err(Error::invalid(format!(
                    "node {u} has degree {} but node 0 has degree {d}",
                    list.len()
                )));
            }
            for w in list.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::invalid(format!("duplicate edge {u}-{}", w[0])));
                }
            }
            for &v in list {
                if v >= n {
                    return Err(Error::invalid(format!(
                        "node {u} lists neighbor {v} >= n={n}"
                    )));
                }
                if v == u {
                    return Err(Error::invalid(format!("self-loop at node {u}")));
                }
            }
        }
        for (u, list) in adj.iter().enumerate() {
            for &v in list {
                if adj[v].binary_search(&u).is_err() {
                    return Err(Error::invalid(format!(
                        "asymmetric adjacency: {v} in adj({u}) but {u} not in adj({v})"
                    )));
                }
            }
        }
        Ok(Self { n, d, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adj
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Iterates over undirected edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    /// Breadth-first hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs(0).iter().all(Option::is_some)
    }

    pub fn is_bipartite(&self) -> bool {
        self.odd_girth().is_none()
    }

    pub fn distance_labeling(&self, source: usize) -> Result<DistanceLabeling> {
        if source >= self.n {
            return Err(Error::invalid(format!("source {source} >= n={}", self.n)));
        }
        let b = self
            .bfs(source)
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::Disconnected)?;
        Ok(DistanceLabeling { source, b })
    }

    pub fn eccentricity(&self, u: usize) -> Result<usize> {
        Ok(self.distance_labeling(u)?.max())
    }

    pub fn diameter(&self) -> Result<usize> {
        (0..self.n).try_fold(0, |acc, u| Ok(acc.max(self.eccentricity(u)?)))
    }

    /// A node whose eccentricity equals the diameter.
    pub fn peripheral_node(&self) -> Result<usize> {
        let mut best = (0, 0);
        for u in 0..self.n {
            let e = self.eccentricity(u)?;
            if e > best.1 {
                best = (u, e);
            }
        }
        Ok(best.0)
    }

    /// Length of the shortest odd cycle, or `None` if the graph is bipartite.
    pub fn odd_girth(&self) -> Option<usize> {
        self.shortest_odd_cycle_source().map(|(_, len)| len)
    }

    /// A node lying on a shortest odd cycle, with that cycle's length.
    ///
    /// A BFS from `s` that finds an edge between two nodes at equal depth `k`
    /// closes an odd walk of length `2k + 1` through `s`. Minimizing over all
    /// sources gives the odd girth, and the minimizing source lies on a
    /// shortest odd cycle.
    pub fn shortest_odd_cycle_source(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for s in 0..self.n {
            let dist = self.bfs(s);
            let mut level = None;
            for (u, v) in self.edges() {
                if let (Some(a), Some(b)) = (dist[u], dist[v]) {
                    if a == b {
                        level = Some(level.map_or(a, |l: usize| l.min(a)));
                    }
                }
            }
            if let Some(k) = level {
                let len = 2 * k + 1;
                if best.is_none_or(|(_, l)| len < l) {
                    best = Some((s, len));
                }
            }
        }
        best
    }

    /// Writes the graph text format: a header `n d d_loops`, then one line per
    /// node with its index followed by its ascending neighbor indices.
    pub fn to_text(&self, d_loops: usize) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.n, self.d, d_loops).unwrap();
        for (u, list) in self.adj.iter().enumerate() {
            write!(out, "{u}").unwrap();
            for v in list {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parses the graph text format, returning the graph and its `d_loops`.
    pub fn from_text(text: &str) -> Result<(Self, usize)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let nums = parse_numbers(hline, header)?;
        let [n, d, d_loops] = nums[..] else {
            return Err(Error::Parse {
                line: hline,
                msg: "header must be `n d d_loops`".into(),
            });
        };
        let mut adj: Vec<Option<Vec<usize>>> = vec![None; n];
        for (line, body) in lines {
            let nums = parse_numbers(line, body)?;
            let Some((&u, rest)) = nums.split_first() else {
                continue;
            };
            if u >= n {
                return Err(Error::Parse {
                    line,
                    msg: format!("node index {u} >= n={n}"),
                });
            }
            if rest.len() != d {
                return Err(Error::Parse {
                    line,
                    msg: format!("node {u} lists {} neighbors, expected {d}", rest.len()),
                });
            }
            if adj[u].replace(rest.to_vec()).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("node {u} listed twice"),
                });
            }
        }
        let adj = adj
            .into_iter()
            .enumerate()
            .map(|(u, l)| {
                l.ok_or(Error::Parse {
                    line: 0,
                    msg: format!("node {u} missing"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Self::from_adjacency(adj)?, d_loops))
    }

    pub fn read(path: &Path) -> Result<(Self, usize)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_numbers(line: usize, s: &str) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>().map_err(|e| Error::Parse {
                line,
                msg: format!("`{tok}`: {e}"),
            })
        })
        .collect()
}

/// Cycle `0 - 1 - ... - (n-1) - 0`.
pub fn cycle(n: usize) -> Result<RegularGraph> {
    if n < 3 {
        return Err(Error::invalid(format!("cycle needs n >= 3, got {n}")));
    }
    let adj = (0..n).map(|u| vec![(u + n - 1) % n, (u + 1) % n]).collect();
    RegularGraph::from_adjacency(adj)
}

/// The `dim`-dimensional torus with `side^dim` nodes and degree `2 * dim`.
pub fn torus(side: usize, dim: usize) -> Result<RegularGraph> {
    if side < 3 {
        return Err(Error::invalid(format!("torus needs side >= 3, got {side}")));
    }
    if dim == 0 {
        return Err(Error::invalid("torus needs dimension >= 1"));
    }
    let n = side
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::invalid("torus too large"))?;
    let adj = (0..n)
        .map(|u| {
            let mut list = Vec::with_capacity(2 * dim);
            let mut stride = 1;
            for _ in 0..dim {
                let coord = (u / stride) % side;
                let base = u - coord * stride;
                list.push(base + ((coord + 1) % side) * stride);
                list.push(base + ((coord + side - 1) % side) * stride);
                stride *= side;
            }
            list
        })
        .collect();
    RegularGraph::from_adjacency(adj)
}

pub fn hypercube(dim: usize) -> Result<RegularGraph> {
    if dim == 0 || dim >= usize::BITS as usize {
        return Err(Error::invalid(format!(
            "hypercube dimension {dim} out of range"
        )));
    }
    let n = 1usize << dim;
    let adj = (0..n)
        .map(|u| (0..dim).map(|b| u ^ (1 << b)).collect())
        .collect();
    RegularGraph::from_adjacency(adj)
}

/// Simple random `d`-regular graph from the pairing (configuration) model.
///
/// Pairings producing loops or multi-edges are rejected, as are disconnected
/// results when `d >= 2`. Dense requests (`2d > n - 1`) sample the
/// `(n-1-d)`-regular complement instead. The outcome depends only on
/// `(n, d, seed)`.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<RegularGraph> {
    if n == 0 || d >= n {
        return Err(Error::invalid(format!(
            "random regular graph needs d < n (n={n}, d={d})"
        )));
    }
    if (n * d) % 2 == 1 {
        return Err(Error::invalid(format!("n*d must be even (n={n}, d={d})")));
    }
    let complement = 2 * d > n - 1;
    let k = if complement { n - 1 - d } else { d };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<usize> = (0..n).flat_map(|u| std::iter::repeat_n(u, k)).collect();
    'attempt: for _ in 0..RANDOM_REGULAR_ATTEMPTS {
        points.shuffle(&mut rng);
        let mut adj = vec![Vec::with_capacity(k); n];
        for pair in points.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adj[u].contains(&v) {
                continue 'attempt;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        if complement {
            adj = adj
                .iter()
                .enumerate()
                .map(|(u, nb)| (0..n).filter(|&v| v != u && !nb.contains(&v)).collect())
                .collect();
        }
        let g = RegularGraph::from_adjacency(adj)?;
        if d < 2 || g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailure {
        attempts: RANDOM_REGULAR_ATTEMPTS,
    })
}

/// Circulant graph on an even number of nodes joining `i` and `j` whenever
/// `(i - j) mod n` lies in `{±1, ..., ±⌊d/2⌋}`, plus the antipodal chord when
/// `d` is odd. Nodes `0..⌊d/2⌋` form a clique.
pub fn circulant_clique(n: usize, d: usize) -> Result<RegularGraph> {
    let half = d / 2;
    if n % 2 == 1 || n == 0 {
        return Err(Error::invalid(format!(
            "circulant clique needs even n, got {n}"
        )));
    }
    if 2 * half >= n {
        return Err(Error::invalid(format!(
            "circulant clique needs 2*floor(d/2) < n (n={n}, d={d})"
        )));
    }
    let adj = (0..n)
        .map(|i| {
            let mut list: Vec<usize> = (1..=half)
                .flat_map(|k| [(i + k) % n, (i + n - k) % n])
                .collect();
            if d % 2 == 1 {
                list.push((i + n / 2) % n);
            }
            list
        })
        .collect();
    RegularGraph::from_adjacency(adj)
}

/// The clique guaranteed by [`circulant_clique`].
pub fn circulant_clique_members(d: usize) -> Vec<usize> {
    (0..d / 2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    /// Original edge towards the given neighbor.
    Edge(usize),
    /// Self-loop with the given index in `0..d_loops`.
    Loop(usize),
}

/// A regular graph augmented with `d_loops` self-loops per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancingGraph {
    base: RegularGraph,
    d_loops: usize,
    /// `reverse[u][i]` is the port index at `adj(u)[i]` that points back to `u`.
    reverse: Vec<Vec<usize>>,
}

pub fn augment(g: RegularGraph, d_loops: usize) -> BalancingGraph {
    let reverse = (0..g.n)
        .map(|u| {
            g.adj[u]
                .iter()
                .map(|&v| g.adj[v].binary_search(&u).expect("symmetric adjacency"))
                .collect()
        })
        .collect();
    BalancingGraph {
        base: g,
        d_loops,
        reverse,
    }
}

impl BalancingGraph {
    pub fn base(&self) -> &RegularGraph {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.base.n
    }

    pub fn d(&self) -> usize {
        self.base.d
    }

    pub fn d_loops(&self) -> usize {
        self.d_loops
    }

    pub fn d_plus(&self) -> usize {
        self.base.d + self.d_loops
    }

    pub fn port(&self, u: usize, i: usize) -> Port {
        let d = self.base.d;
        if i < d {
            Port::Edge(self.base.adj[u][i])
        } else {
            assert!(i < self.d_plus(), "port {i} out of range");
            Port::Loop(i - d)
        }
    }

    /// Ports of `u` in canonical order.
    pub fn ports(&self, u: usize) -> impl Iterator<Item = Port> + '_ {
        (0..self.d_plus()).map(move |i| self.port(u, i))
    }

    pub fn is_loop_port(&self, i: usize) -> bool {
        i >= self.base.d
    }

    /// Port index at `adj(u)[i]` leading back to `u`.
    pub fn reverse_port(&self, u: usize, i: usize) -> usize {
        self.reverse[u][i]
    }
}

/// Hop distances `b(v)` from a source node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceLabeling {
    pub source: usize,
    pub b: Vec<usize>,
}

impl DistanceLabeling {
    pub fn max(&self) -> usize {
        self.b.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_structure() {
        let g = cycle(5).unwrap();
        assert_eq!(g.d(), 2);
        assert_eq!(g.diameter().unwrap(), 2);
        assert_eq!(g.odd_girth(), Some(5));
        assert_eq!(cycle(3).unwrap().neighbors(0), &[1, 2]);
        assert_eq!(cycle(6).unwrap().odd_girth(), None);
        assert!(matches!(cycle(2), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn torus_cases() {
        let g = torus(4, 2).unwrap();
        assert_eq!((g.n(), g.d()), (16, 4));
        assert_eq!(torus(3, 1).unwrap(), cycle(3).unwrap());
        let g = torus(3, 2).unwrap();
        for u in 0..g.n() {
            assert_eq!(g.neighbors(u).len(), 4);
        }
        assert!(torus(2, 2).is_err());
    }

    #[test]
    fn hypercube_cases() {
        let g = hypercube(3).unwrap();
        assert_eq!((g.n(), g.d(), g.diameter().unwrap()), (8, 3, 3));
        assert_eq!(g.odd_girth(), None);
        let g = hypercube(1).unwrap();
        assert_eq!((g.n(), g.d()), (2, 1));
        assert_eq!(
            hypercube(2).unwrap().adjacency(),
            &[vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]]
        );
    }

    #[test]
    fn random_regular_forced_and_infeasible() {
        let k4 = random_regular(4, 3, 7).unwrap();
        for u in 0..4 {
            assert_eq!(k4.neighbors(u).len(), 3);
        }
        assert!(matches!(
            random_regular(5, 3, 1),
            Err(Error::InvalidParameter(_))
        ));
        assert!(random_regular(4, 4, 1).is_err());
    }

    #[test]
    fn random_regular_is_deterministic_and_connected() {
        let a = random_regular(128, 4, 1).unwrap();
        let b = random_regular(128, 4, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert_ne!(a, random_regular(128, 4, 2).unwrap());
    }

    #[test]
    fn dense_random_regular_via_complement() {
        for seed in 0..50 {
            let g = random_regular(8, 6, seed).unwrap();
            let missing: Vec<usize> = (0..8)
                .map(|u| (0..8).find(|&v| v != u && !g.has_edge(u, v)).unwrap())
                .collect();
            for u in 0..8 {
                assert_eq!(g.neighbors(u).len(), 6);
                assert_eq!(missing[missing[u]], u);
            }
        }
        assert_eq!(random_regular(10, 7, 3).unwrap().d(), 7);
    }

    #[test]
    fn circulant_clique_cases() {
        let g = circulant_clique(8, 4).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2, 6, 7]);
        assert!(g.has_edge(0, 1));
        let g = circulant_clique(6, 3).unwrap();
        assert_eq!(g.neighbors(0), &[1, 3, 5]);
        assert_eq!(
            circulant_clique(4, 2).unwrap().adjacency(),
            cycle(4).unwrap().adjacency()
        );
        assert!(circulant_clique(7, 2).is_err());
        assert!(circulant_clique(4, 4).is_err());
        let g = circulant_clique(12, 6).unwrap();
        let c = circulant_clique_members(6);
        for &a in &c {
            for &b in &c {
                assert!(a == b || g.has_edge(a, b));
            }
        }
    }

    #[test]
    fn augment_port_order() {
        let bg = augment(cycle(3).unwrap(), 2);
        assert_eq!(bg.d_plus(), 4);
        let ports: Vec<_> = bg.ports(0).collect();
        assert_eq!(
            ports,
            vec![Port::Edge(1), Port::Edge(2), Port::Loop(0), Port::Loop(1)]
        );
        assert_eq!(augment(cycle(5).unwrap(), 0).d_plus(), 2);
        let h = augment(hypercube(3).unwrap(), 3);
        assert_eq!((h.d_plus(), h.d_loops()), (6, 3));
        for u in 0..bg.n() {
            for i in 0..bg.d() {
                let v = bg.base().neighbors(u)[i];
                assert_eq!(bg.base().neighbors(v)[bg.reverse_port(u, i)], u);
            }
        }
    }

    #[test]
    fn labeling_on_cycle() {
        let l = cycle(8).unwrap().distance_labeling(0).unwrap();
        assert_eq!(l.b, vec![0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn disconnected_queries_fail() {
        // Two disjoint triangles.
        let adj = vec![
            vec![1, 2],
            vec![0, 2],
            vec![0, 1],
            vec![4, 5],
            vec![3, 5],
            vec![3, 4],
        ];
        let g = RegularGraph::from_adjacency(adj).unwrap();
        assert!(matches!(g.diameter(), Err(Error::Disconnected)));
        assert!(matches!(g.distance_labeling(0), Err(Error::Disconnected)));
        assert_eq!(g.odd_girth(), Some(3));
    }

    #[test]
    fn text_round_trip_and_asymmetry() {
        let g = torus(3, 2).unwrap();
        let text = g.to_text(4);
        let (h, loops) = RegularGraph::from_text(&text).unwrap();
        assert_eq!((h, loops), (g, 4));
        let bad = "3 1 0\n0 1\n1 2\n2 0\n";
        assert!(RegularGraph::from_text(bad).is_err());
        assert!(RegularGraph::from_text("2 1 0\n0 1\n1 x\n").is_err());
    }
}
