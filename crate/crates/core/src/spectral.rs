//! Random-walk transition matrix of a balancing graph and the spectral
//! quantities derived from it.
//!
//! All logarithms are natural logarithms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::BalancingGraph;

/// Largest dimension for which dense matrices are materialized.
pub const DENSE_LIMIT: usize = 1024;

/// Row-stochastic walk matrix: `1/d⁺` per original edge, `d°/d⁺` on the diagonal.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    n: usize,
    d_plus: usize,
    d_loops: usize,
    adj: Vec<Vec<usize>>,
    dense: Option<DMatrix<f64>>,
}

pub fn transition_matrix(g: &BalancingGraph) -> TransitionMatrix {
    let n = g.n();
    let d_plus = g.d_plus();
    let adj = g.base().adjacency().to_vec();
    let dense = (n <= DENSE_LIMIT).then(|| {
        let w = 1.0 / d_plus as f64;
        let mut m = DMatrix::zeros(n, n);
        for (u, list) in adj.iter().enumerate() {
            m[(u, u)] = g.d_loops() as f64 * w;
            for &v in list {
                m[(u, v)] = w;
            }
        }
        m
    });
    TransitionMatrix {
        n,
        d_plus,
        d_loops: g.d_loops(),
        adj,
        dense,
    }
}

impl TransitionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_plus(&self) -> usize {
        self.d_plus
    }

    pub fn d_loops(&self) -> usize {
        self.d_loops
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        let w = 1.0 / self.d_plus as f64;
        if u == v {
            self.d_loops as f64 * w
        } else if self.adj[u].binary_search(&v).is_ok() {
            w
        } else {
            0.0
        }
    }

    pub fn dense(&self) -> Result<&DMatrix<f64>> {
        self.dense.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "n={} exceeds the dense limit {DENSE_LIMIT}",
                self.n
            ))
        })
    }

    /// `P x` using the sparse structure. `P` is symmetric, so this is also `xᵀ P`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let w = 1.0 / self.d_plus as f64;
        let lw = self.d_loops as f64 * w;
        self.adj
            .iter()
            .enumerate()
            .map(|(u, list)| lw * x[u] + w * list.iter().map(|&v| x[v]).sum::<f64>())
            .collect()
    }

    fn check_ergodic(&self) -> Result<()> {
        // Rebuild connectivity from the stored adjacency.
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::NoSteadyState(
                "chain is reducible (graph disconnected)".into(),
            ));
        }
        if self.d_loops == 0 && is_bipartite(&self.adj) {
            return Err(Error::NoSteadyState(
                "chain is periodic (bipartite graph, no self-loops)".into(),
            ));
        }
        Ok(())
    }
}

fn is_bipartite(adj: &[Vec<usize>]) -> bool {
    let mut color = vec![u8::MAX; adj.len()];
    for s in 0..adj.len() {
        if color[s] != u8::MAX {
            continue;
        }
        color[s] = 0;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if color[v] == u8::MAX {
                    color[v] = 1 - color[u];
                    stack.push(v);
                } else if color[v] == color[u] {
                    return false;
                }
            }
        }
    }
    true
}

/// Uniform stationary distribution, provided the chain is ergodic.
pub fn steady_state(p: &TransitionMatrix) -> Result<Vec<f64>> {
    p.check_ergodic()?;
    Ok(vec![1.0 / p.n as f64; p.n])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub n: usize,
    pub d: usize,
    pub d_loops: usize,
    pub lambda2: f64,
    pub mu: f64,
    /// `6 ln n / μ`.
    pub t_mu: f64,
}

impl SpectralSummary {
    /// `16 ln(nK) / μ`; `K = 0` is treated as `K = 1`.
    pub fn balancing_time(&self, k: u64) -> f64 {
        16.0 * (self.n as f64 * k.max(1) as f64).ln() / self.mu
    }

    /// `⌈16 ln(nK) / μ⌉` as a step count.
    pub fn balancing_steps(&self, k: u64) -> Result<usize> {
        let t = self.balancing_time(k).ceil();
        if !t.is_finite() || !(0.0..=1e12).contains(&t) {
            return Err(Error::invalid(format!(
                "balancing time {t} is not a usable step count"
            )));
        }
        Ok(t as usize)
    }
}

fn summary(p: &TransitionMatrix, lambda2: f64) -> SpectralSummary {
    let mu = 1.0 - lambda2;
    SpectralSummary {
        n: p.n,
        d: p.d_plus - p.d_loops,
        d_loops: p.d_loops,
        lambda2,
        mu,
        t_mu: 6.0 * (p.n as f64).ln() / mu,
    }
}

/// All eigenvalues of `P`, in decreasing order.
pub fn spectrum(p: &TransitionMatrix) -> Result<Vec<f64>> {
    let m = p.dense()?.clone();
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Second-largest eigenvalue and gap. Dense decomposition up to
/// [`DENSE_LIMIT`], deflated power iteration above it.
pub fn eigen_gap(p: &TransitionMatrix) -> Result<SpectralSummary> {
    if p.n == 1 {
        return Ok(summary(p, 0.0));
    }
    if p.dense.is_some() {
        let ev = spectrum(p)?;
        Ok(summary(p, ev[1]))
    } else {
        eigen_gap_power(p, &PowerIteration::default())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub max_iterations: usize,
    /// Stop once `‖Mx − ρx‖₂` falls below this.
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            max_iterations: 2_000_000,
            residual_tol: 1e-11,
            seed: 0,
        }
    }
}

/// Power iteration on `(P + I)/2` restricted to the complement of the
/// constant vector. The shift makes the spectrum nonnegative, so the dominant
/// eigenvalue there corresponds to λ₂ by value.
pub fn eigen_gap_power(p: &TransitionMatrix, opts: &PowerIteration) -> Result<SpectralSummary> {
    let n = p.n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    deflate_normalize(&mut x);
    for _ in 0..opts.max_iterations {
        let px = p.apply(&x);
        let mut y: Vec<f64> = x.iter().zip(&px).map(|(a, b)| 0.5 * (a + b)).collect();
        let rho: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let resid = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid < opts.residual_tol {
            return Ok(summary(p, 2.0 * rho - 1.0));
        }
        deflate_normalize(&mut y);
        x = y;
    }
    Err(Error::NumericFailure {
        iterations: opts.max_iterations,
    })
}

fn deflate_normalize(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// `Λ_t = P^t − P^∞`, with `P^t` by repeated squaring.
pub fn error_matrix(p: &TransitionMatrix, t: u32) -> Result<DMatrix<f64>> {
    p.check_ergodic()?;
    let base = p.dense()?;
    let n = p.n;
    let mut result = DMatrix::identity(n, n);
    let mut sq = base.clone();
    let mut e = t;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &sq;
        }
        e >>= 1;
        if e > 0 {
            sq = &sq * &sq;
        }
    }
    result.add_scalar_mut(-1.0 / n as f64);
    Ok(result)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaBoundReport {
    pub c: u32,
    pub horizon: usize,
    /// First step covered by the pointwise claim.
    pub pointwise_from: usize,
    pub pointwise_bound: f64,
    pub pointwise_worst: f64,
    pub pointwise_pass: bool,
    /// First step of the tail sum.
    pub tail_from: usize,
    pub tail_sum: f64,
    pub tail_bound: f64,
    pub tail_pass: bool,
}

impl LambdaBoundReport {
    pub fn pass(&self) -> bool {
        self.pointwise_pass && self.tail_pass
    }
}

/// Checks the two error-matrix bounds for a vector sequence `q(t)`, `t < horizon`:
///
/// * pointwise: `‖Λ_t q_t‖∞ ≤ 2^{−c}` once `t ≥ 4c·ln(n·max‖q − q̄‖∞)/μ`;
/// * tail: `Σ_{t ≥ 6c ln n/μ} ‖Λ_t q_t‖∞ ≤ n^{−c}·max‖q_τ‖∞`.
///
/// The tail sum is truncated at `horizon`; [`default_horizon`] keeps the
/// omitted part below `e^{−40}` of the leading term.
pub fn lambda_bound_check(
    p: &TransitionMatrix,
    q: impl Fn(usize) -> Vec<f64>,
    horizon: usize,
    c: u32,
) -> Result<LambdaBoundReport> {
    p.check_ergodic()?;
    let eig = SymmetricEigen::new(p.dense()?.clone());
    let lambda2 = {
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev[1]
    };
    let mu = 1.0 - lambda2;
    let n = p.n as f64;
    let qs: Vec<Vec<f64>> = (0..horizon).map(&q).collect();

    let max_dev = qs
        .iter()
        .map(|v| {
            let mean = v.iter().sum::<f64>() / n;
            inf_norm(v.iter().map(|x| x - mean))
        })
        .fold(0.0, f64::max);
    let pointwise_from = threshold(4.0 * c as f64 * (n * max_dev).ln() / mu);
    let tail_from = threshold(6.0 * c as f64 * n.ln() / mu);

    let pointwise_bound = 2f64.powi(-(c as i32));
    let mut pointwise_worst = 0.0f64;
    let mut tail_sum = 0.0;
    let mut tail_qmax = 0.0f64;
    for (t, v) in qs.iter().enumerate() {
        if t < pointwise_from && t < tail_from {
            continue;
        }
        let val = lambda_apply_norm(&eig, v, t);
        if t >= pointwise_from {
            pointwise_worst = pointwise_worst.max(val);
        }
        if t >= tail_from {
            tail_sum += val;
            tail_qmax = tail_qmax.max(inf_norm(v.iter().copied()));
        }
    }
    let tail_bound = n.powi(-(c as i32)) * tail_qmax;
    Ok(LambdaBoundReport {
        c,
        horizon,
        pointwise_from,
        pointwise_bound,
        pointwise_worst,
        pointwise_pass: pointwise_worst <= pointwise_bound,
        tail_from,
        tail_sum,
        tail_bound,
        tail_pass: tail_sum <= tail_bound,
    })
}

/// Horizon for [`lambda_bound_check`] reaching `40/μ` past the tail start.
pub fn default_horizon(p: &TransitionMatrix, c: u32) -> Result<usize> {
    let mu = eigen_gap(p)?.mu;
    let n = p.n as f64;
    Ok(threshold(6.0 * c as f64 * n.ln() / mu) + threshold(40.0 / mu))
}

fn threshold(x: f64) -> usize {
    if x.is_nan() || x <= 0.0 {
        0
    } else {
        x.ceil() as usize
    }
}

fn inf_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖Λ_t q‖∞` through the eigendecomposition, after projecting out the mean.
fn lambda_apply_norm(eig: &SymmetricEigen<f64, nalgebra::Dyn>, q: &[f64], t: usize) -> f64 {
    let n = q.len();
    let mean = q.iter().sum::<f64>() / n as f64;
    let centered = DVector::from_iterator(n, q.iter().map(|x| x - mean));
    let coeffs = eig.eigenvectors.transpose() * centered;
    let scaled = DVector::from_iterator(
        n,
        coeffs
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, l)| c * l.powi(t.min(i32::MAX as usize) as i32)),
    );
    let out = &eig.eigenvectors * scaled;
    inf_norm(out.iter().copied())
}

/// `max_w Σ_v |P^{a+1}(v,w) − P^a(v,w)|` for `a = 0..=a_max`.
pub fn current_sums(p: &TransitionMatrix, a_max: usize) -> Result<Vec<f64>> {
    let base = p.dense()?;
    let n = p.n;
    let mut pa = DMatrix::<f64>::identity(n, n);
    let mut out = Vec::with_capacity(a_max + 1);
    for _ in 0..=a_max {
        let next = &pa * base;
        let diff = &next - &pa;
        let best = (0..n)
            .map(|w| diff.column(w).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        out.push(best);
        pa = next;
    }
    Ok(out)
}

pub fn current_sum(p: &TransitionMatrix, a: usize) -> Result<f64> {
    Ok(*current_sums(p, a)?.last().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment, cycle, hypercube, random_regular, torus};

    #[test]
    fn triangle_entries() {
        let p = transition_matrix(&augment(cycle(3).unwrap(), 2));
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(0, 1), 0.25);
        let p5 = transition_matrix(&augment(cycle(5).unwrap(), 0));
        assert_eq!(p5.get(0, 0), 0.0);
        assert_eq!(p5.get(0, 1), 0.5);
        assert_eq!(p5.get(0, 2), 0.0);
    }

    #[test]
    fn rows_are_stochastic_and_symmetric() {
        let p = transition_matrix(&augment(torus(4, 2).unwrap(), 3));
        let m = p.dense().unwrap();
        for u in 0..p.n() {
            let s: f64 = m.row(u).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for v in 0..p.n() {
                assert_eq!(m[(u, v)], m[(v, u)]);
                assert_eq!(m[(u, v)], p.get(u, v));
            }
        }
    }

    #[test]
    fn steady_state_cases() {
        let p = transition_matrix(&augment(cycle(3).unwrap(), 0));
        assert_eq!(steady_state(&p).unwrap(), vec![1.0 / 3.0; 3]);
        let p = transition_matrix(&augment(torus(4, 2).unwrap(), 4));
        assert!(steady_state(&p).unwrap().iter().all(|&x| x == 1.0 / 16.0));
        let p = transition_matrix(&augment(cycle(6).unwrap(), 0));
        assert!(matches!(steady_state(&p), Err(Error::NoSteadyState(_))));
    }

    #[test]
    fn error_matrix_zero_and_rows() {
        let p = transition_matrix(&augment(cycle(3).unwrap(), 2));
        let l0 = error_matrix(&p, 0).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                let expect = if u == v { 1.0 } else { 0.0 } - 1.0 / 3.0;
                assert!((l0[(u, v)] - expect).abs() < 1e-15);
            }
        }
        let mut prev = f64::INFINITY;
        for t in [1u32, 2, 4, 8, 16, 32] {
            let l = error_matrix(&p, t).unwrap();
            for u in 0..3 {
                assert!(l.row(u).iter().sum::<f64>().abs() < 1e-10);
            }
            let norm = l.norm();
            assert!(norm < prev);
            prev = norm;
        }
    }

    #[test]
    fn power_iteration_matches_dense() {
        for g in [
            augment(hypercube(5).unwrap(), 5),
            augment(random_regular(64, 4, 3).unwrap(), 4),
            augment(torus(5, 2).unwrap(), 2),
        ] {
            let p = transition_matrix(&g);
            let dense = eigen_gap(&p).unwrap();
            let power = eigen_gap_power(&p, &PowerIteration::default()).unwrap();
            assert!(
                (dense.lambda2 - power.lambda2).abs() < 1e-9,
                "{dense:?} vs {power:?}"
            );
        }
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        let p = transition_matrix(&augment(cycle(64).unwrap(), 2));
        let opts = PowerIteration {
            max_iterations: 10,
            ..Default::default()
        };
        assert!(matches!(
            eigen_gap_power(&p, &opts),
            Err(Error::NumericFailure { iterations: 10 })
        ));
    }

    #[test]
    fn current_sum_first_step_at_most_two() {
        let p = transition_matrix(&augment(cycle(7).unwrap(), 2));
        assert!(current_sum(&p, 0).unwrap() <= 2.0 + 1e-12);
    }

    #[test]
    fn lambda_check_zero_sequence() {
        let p = transition_matrix(&augment(cycle(3).unwrap(), 2));
        let r = lambda_bound_check(&p, |_| vec![0.0; 3], 50, 4).unwrap();
        assert!(r.pass());
        assert_eq!(r.tail_sum, 0.0);
    }
}
