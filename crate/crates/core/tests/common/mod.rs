#![allow(dead_code)]

use tokenflow::BalancingGraph;

/// Dense transition matrix assembled straight from the adjacency lists.
pub fn dense_transition(g: &BalancingGraph) -> Vec<Vec<f64>> {
    let n = g.n();
    let dp = g.d_plus() as f64;
    let mut p = vec![vec![0.0; n]; n];
    for (u, row) in p.iter_mut().enumerate() {
        row[u] = g.d_loops() as f64 / dp;
        for &v in g.base().neighbors(u) {
            row[v] += 1.0 / dp;
        }
    }
    p
}

/// Cyclic Jacobi rotations on a symmetric matrix; eigenvalues in descending order.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (head, tail) = a.split_at_mut(q);
                for (apk, aqk) in head[p].iter_mut().zip(tail[0].iter_mut()) {
                    let (x, y) = (*apk, *aqk);
                    *apk = c * x - s * y;
                    *aqk = s * x + c * y;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Second largest eigenvalue of the lazy cycle walk.
pub fn cycle_lambda2(n: usize, d_loops: usize) -> f64 {
    (d_loops as f64 + 2.0 * (2.0 * std::f64::consts::PI / n as f64).cos()) / (2 + d_loops) as f64
}

/// Rotor-router moved one token at a time.
pub fn rotor_tokens(load: &[u64], pointers: &mut [usize], g: &BalancingGraph) -> Vec<u64> {
    let mut next = vec![0u64; g.n()];
    for (u, &x) in load.iter().enumerate() {
        for _ in 0..x {
            let port = pointers[u];
            let target = if port < g.d() {
                g.base().neighbors(u)[port]
            } else {
                u
            };
            next[target] += 1;
            pointers[u] = (port + 1) % g.d_plus();
        }
    }
    next
}

/// SendFloor written directly from its definition, with all surplus kept on the node.
pub fn send_floor_totals(load: &[u64], g: &BalancingGraph) -> Vec<u64> {
    let mut next = vec![0u64; g.n()];
    for (u, &x) in load.iter().enumerate() {
        let share = x / g.d_plus() as u64;
        for &v in g.base().neighbors(u) {
            next[v] += share;
        }
        next[u] += x - share * g.d() as u64;
    }
    next
}
