//! Load observables, potentials and their per-step and per-window audits.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::balancers::LoadVector;
use crate::error::{Error, Result};

/// Most c-levels tracked by a [`MetricSeries`].
pub const MAX_TRACKED_LEVELS: usize = 64;

pub fn discrepancy(x: &LoadVector) -> u64 {
    x.discrepancy()
}

/// `Σ_v max(x(v) − c·d⁺, 0)`.
pub fn potential_phi(x: &[u64], c: u64, d_plus: usize) -> u128 {
    let level = c as u128 * d_plus as u128;
    x.iter().map(|&v| (v as u128).saturating_sub(level)).sum()
}

/// `Σ_v max(c·d⁺ + s − x(v), 0)`.
pub fn potential_phi_prime(x: &[u64], c: u64, s: u64, d_plus: usize) -> u128 {
    let level = c as u128 * d_plus as u128 + s as u128;
    x.iter().map(|&v| level.saturating_sub(v as u128)).sum()
}

/// Guaranteed one-step drop of `φ(c)` at a node whose load fell from `x_prev`
/// to `x` across the band `(c·d⁺, c·d⁺ + s)`.
pub fn drop_delta(x_prev: u64, x: u64, c: u64, s: u64, d_plus: usize) -> u64 {
    let level = c * d_plus as u64;
    if x_prev > x && x_prev > level && x < level + s {
        x_prev.min(level + s).saturating_sub(x.max(level))
    } else {
        0
    }
}

/// Guaranteed one-step drop of `φ'(c)` at a node whose load rose from `x_prev`
/// to `x` across the same band.
pub fn drop_delta_prime(x_prev: u64, x: u64, c: u64, s: u64, d_plus: usize) -> u64 {
    let level = c * d_plus as u64;
    if x_prev < x && x_prev < level + s && x > level {
        x.min(level + s).saturating_sub(x_prev.max(level))
    } else {
        0
    }
}

/// `max_u |x(u) − m/n|` as an exact fraction.
pub fn deviation_to_average_exact(x: &LoadVector) -> Ratio<i128> {
    let n = x.n() as i128;
    let m = x.total() as i128;
    let worst =
        x.0.iter()
            .map(|&v| (n * v as i128 - m).abs())
            .max()
            .unwrap_or(0);
    Ratio::new(worst, n.max(1))
}

pub fn deviation_to_average(x: &LoadVector) -> f64 {
    ratio_to_f64(deviation_to_average_exact(x))
}

/// `max − m/n`.
pub fn balancedness(x: &LoadVector) -> f64 {
    ratio_to_f64(Ratio::from_integer(x.max() as i128) - x.average())
}

pub fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Threshold `x̄ + δ·d⁺ + 2r + 1/2 + λ` that every node must dip below.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineParams {
    pub delta: u64,
    pub r: u64,
    pub lambda: Ratio<i128>,
    pub d_plus: usize,
}

impl LineParams {
    pub fn threshold(&self, average: Ratio<i128>) -> Ratio<i128> {
        average
            + Ratio::from_integer(self.delta as i128 * self.d_plus as i128 + 2 * self.r as i128)
            + Ratio::new(1, 2)
            + self.lambda
    }
}

/// Window length `⌈6·d·ln n / (μ·(λ + 1))⌉`.
pub fn dip_window(n: usize, d: usize, mu: f64, lambda: f64) -> usize {
    (6.0 * d as f64 * (n as f64).ln() / (mu * (lambda + 1.0)))
        .ceil()
        .max(1.0) as usize
}

/// For each node, whether some `t' ∈ [t+1, t+t_hat]` has `x_{t'}(u)` at or below
/// the line. `series[k]` is the load after `k` steps.
pub fn drop_below_line_check(
    series: &[LoadVector],
    t: usize,
    t_hat: usize,
    line: &LineParams,
) -> Result<Vec<bool>> {
    let end = t + t_hat;
    if end >= series.len() {
        return Err(Error::Range {
            start: t + 1,
            end,
            len: series.len(),
        });
    }
    let threshold = line.threshold(series[0].average());
    let n = series[0].n();
    Ok((0..n)
        .map(|u| {
            series[t + 1..=end]
                .iter()
                .any(|x| Ratio::from_integer(x.0[u] as i128) <= threshold)
        })
        .collect())
}

/// Online form of [`drop_below_line_check`] for every window start `t ≥ from`.
#[derive(Debug, Clone)]
pub struct DipMonitor {
    threshold: Ratio<i128>,
    /// Largest integer load at or below the threshold.
    cutoff: i128,
    from: usize,
    window: usize,
    last_dip: Vec<usize>,
    pub windows_checked: u64,
    pub failures: Vec<(usize, usize)>,
}

impl DipMonitor {
    pub fn new(
        n: usize,
        average: Ratio<i128>,
        line: &LineParams,
        from: usize,
        window: usize,
    ) -> Self {
        let threshold = line.threshold(average);
        Self {
            threshold,
            cutoff: threshold.floor().to_integer(),
            from,
            window,
            last_dip: vec![from; n],
            windows_checked: 0,
            failures: Vec::new(),
        }
    }

    pub fn threshold(&self) -> Ratio<i128> {
        self.threshold
    }

    /// Feeds the load after `t` steps.
    pub fn observe(&mut self, t: usize, x: &LoadVector) {
        if t <= self.from {
            return;
        }
        if t >= self.from + self.window {
            self.windows_checked += 1;
        }
        for (u, &v) in x.0.iter().enumerate() {
            if v as i128 <= self.cutoff {
                self.last_dip[u] = t;
            } else if t - self.last_dip[u] == self.window {
                self.failures.push((self.last_dip[u], u));
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// c-levels `0..=⌈max/d⁺⌉`, evenly subsampled down to [`MAX_TRACKED_LEVELS`].
pub fn default_levels(x: &LoadVector, d_plus: usize) -> Vec<u64> {
    let top = x.max().div_ceil(d_plus as u64);
    let count = top as usize + 1;
    if count <= MAX_TRACKED_LEVELS {
        return (0..=top).collect();
    }
    let mut levels: Vec<u64> = (0..MAX_TRACKED_LEVELS)
        .map(|i| {
            ((i as u128 * top as u128 + (MAX_TRACKED_LEVELS as u128 - 1) / 2)
                / (MAX_TRACKED_LEVELS as u128 - 1)) as u64
        })
        .collect();
    levels.dedup();
    levels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: usize,
    pub max: u64,
    pub min: u64,
    pub discrepancy: u64,
    pub balancedness: f64,
    pub dev_to_avg: f64,
    pub phi: Vec<u128>,
    pub phi_prime: Vec<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub levels: Vec<u64>,
    pub s: u64,
    pub d_plus: usize,
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn new(levels: Vec<u64>, s: u64, d_plus: usize) -> Self {
        Self {
            levels,
            s,
            d_plus,
            rows: Vec::new(),
        }
    }

    pub fn record(&mut self, t: usize, x: &LoadVector) {
        self.rows.push(MetricRow {
            t,
            max: x.max(),
            min: x.min(),
            discrepancy: x.discrepancy(),
            balancedness: balancedness(x),
            dev_to_avg: deviation_to_average(x),
            phi: self
                .levels
                .iter()
                .map(|&c| potential_phi(&x.0, c, self.d_plus))
                .collect(),
            phi_prime: self
                .levels
                .iter()
                .map(|&c| potential_phi_prime(&x.0, c, self.s, self.d_plus))
                .collect(),
        });
    }

    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "t",
            "max",
            "min",
            "discrepancy",
            "balancedness",
            "dev_to_avg",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.levels.iter().map(|c| format!("phi_c{c}")));
        h.extend(self.levels.iter().map(|c| format!("phiP_c{c}")));
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.t.to_string(),
                r.max.to_string(),
                r.min.to_string(),
                r.discrepancy.to_string(),
                r.balancedness.to_string(),
                r.dev_to_avg.to_string(),
            ];
            rec.extend(r.phi.iter().map(|v| v.to_string()));
            rec.extend(r.phi_prime.iter().map(|v| v.to_string()));
            out.write_record(rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Parses a CSV written by [`write_csv`](Self::write_csv). `s` and `d⁺` are
    /// not part of the format and must be supplied.
    pub fn read_csv<R: std::io::Read>(r: R, s: u64, d_plus: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let fixed = [
            "t",
            "max",
            "min",
            "discrepancy",
            "balancedness",
            "dev_to_avg",
        ];
        if header.len() < fixed.len() || header.iter().zip(fixed).any(|(a, b)| a != b) {
            return Err(Error::Parse {
                line: 1,
                msg: "unexpected metric header".into(),
            });
        }
        let extra: Vec<&str> = header.iter().skip(fixed.len()).collect();
        if !extra.len().is_multiple_of(2) {
            return Err(Error::Parse {
                line: 1,
                msg: "unpaired potential columns".into(),
            });
        }
        let k = extra.len() / 2;
        let levels = extra[..k]
            .iter()
            .map(|h| {
                h.strip_prefix("phi_c")
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: 1,
                        msg: format!("bad column `{h}`"),
                    })
            })
            .collect::<Result<Vec<u64>>>()?;
        let mut series = MetricSeries::new(levels, s, d_plus);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let bad = |j: usize| Error::Parse {
                line,
                msg: format!(
                    "bad value `{}` in column {}",
                    rec.get(j).unwrap_or(""),
                    header.get(j).unwrap_or("?")
                ),
            };
            macro_rules! num {
                ($j:expr) => {
                    field($j).parse().map_err(|_| bad($j))?
                };
            }
            let mut phi = Vec::with_capacity(k);
            let mut phi_prime = Vec::with_capacity(k);
            for j in 0..k {
                phi.push(num!(6 + j));
                phi_prime.push(num!(6 + k + j));
            }
            series.rows.push(MetricRow {
                t: num!(0),
                max: num!(1),
                min: num!(2),
                discrepancy: num!(3),
                balancedness: num!(4),
                dev_to_avg: num!(5),
                phi,
                phi_prime,
            });
        }
        Ok(series)
    }
}

/// Per-step check that both potentials never rise and drop by at least the
/// summed guaranteed drops, at every tracked level.
#[derive(Debug, Clone)]
pub struct PotentialAudit {
    levels: Vec<u64>,
    s: u64,
    d_plus: usize,
    prev: Option<Vec<u64>>,
    pub steps: u64,
    pub checks: u64,
    pub failures: Vec<String>,
}

impl PotentialAudit {
    pub fn new(levels: Vec<u64>, s: u64, d_plus: usize) -> Self {
        Self {
            levels,
            s,
            d_plus,
            prev: None,
            steps: 0,
            checks: 0,
            failures: Vec::new(),
        }
    }

    pub fn observe(&mut self, t: usize, x: &LoadVector) {
        if let Some(prev) = &self.prev {
            self.steps += 1;
            let (s, dp) = (self.s, self.d_plus);
            let lo = prev.iter().chain(&x.0).copied().min().unwrap_or(0);
            let hi = prev.iter().chain(&x.0).copied().max().unwrap_or(0);
            for &c in &self.levels {
                self.checks += 1;
                // Outside the band every term is constant and no drop is owed.
                let level = c * dp as u64;
                if level >= hi || level + s <= lo {
                    continue;
                }
                let phi0 = potential_phi(prev, c, dp);
                let phi1 = potential_phi(&x.0, c, dp);
                let drop: u128 = prev
                    .iter()
                    .zip(&x.0)
                    .map(|(&a, &b)| drop_delta(a, b, c, s, dp) as u128)
                    .sum();
                let phip0 = potential_phi_prime(prev, c, s, dp);
                let phip1 = potential_phi_prime(&x.0, c, s, dp);
                let dropp: u128 = prev
                    .iter()
                    .zip(&x.0)
                    .map(|(&a, &b)| drop_delta_prime(a, b, c, s, dp) as u128)
                    .sum();
                if phi1 + drop > phi0 {
                    self.failures.push(format!(
                        "t={t} c={c}: phi {phi0} -> {phi1} with guaranteed drop {drop}"
                    ));
                }
                if phip1 + dropp > phip0 {
                    self.failures.push(format!(
                        "t={t} c={c}: phi' {phip0} -> {phip1} with guaranteed drop {dropp}"
                    ));
                }
            }
        }
        match &mut self.prev {
            Some(prev) => prev.copy_from_slice(&x.0),
            None => self.prev = Some(x.0.clone()),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the interval forms of the potential drops over consecutive windows:
/// nodes starting at or above `c·d⁺ + 1` that dip to `≤ c·d⁺` cost `φ(c)` at
/// least `min(s, x_t − c·d⁺)` each, and nodes starting below `c·d⁺ + s` that
/// reach `≥ c·d⁺ + s` cost `φ'(c)` at least `min(s, c·d⁺ + s − x_t)` each.
#[derive(Debug, Clone)]
pub struct IntervalAudit {
    levels: Vec<u64>,
    s: u64,
    d_plus: usize,
    window: usize,
    start: Option<(usize, Vec<u64>)>,
    low: Vec<u64>,
    high: Vec<u64>,
    pub windows: u64,
    pub failures: Vec<String>,
}

impl IntervalAudit {
    pub fn new(levels: Vec<u64>, s: u64, d_plus: usize, window: usize) -> Self {
        Self {
            levels,
            s,
            d_plus,
            window: window.max(1),
            start: None,
            low: Vec::new(),
            high: Vec::new(),
            windows: 0,
            failures: Vec::new(),
        }
    }

    pub fn observe(&mut self, t: usize, x: &LoadVector) {
        let Some((t0, _)) = &self.start else {
            self.begin(t, x);
            return;
        };
        let t0 = *t0;
        for (u, &v) in x.0.iter().enumerate() {
            self.low[u] = self.low[u].min(v);
            self.high[u] = self.high[u].max(v);
        }
        if t - t0 >= self.window {
            self.close(t, x);
            self.begin(t, x);
        }
    }

    fn begin(&mut self, t: usize, x: &LoadVector) {
        self.start = Some((t, x.0.clone()));
        self.low = x.0.clone();
        self.high = x.0.clone();
    }

    fn close(&mut self, t: usize, x: &LoadVector) {
        let Some((t0, x0)) = &self.start else { return };
        let (s, dp) = (self.s, self.d_plus);
        self.windows += 1;
        for &c in &self.levels {
            let level = c * dp as u64;
            let mut need: u128 = 0;
            let mut need_prime: u128 = 0;
            for (u, &v) in x0.iter().enumerate() {
                if v > level && self.low[u] <= level {
                    need += s.min(v - level) as u128;
                }
                if v < level + s && self.high[u] >= level + s {
                    need_prime += s.min(level + s - v) as u128;
                }
            }
            let (phi0, phi1) = (potential_phi(x0, c, dp), potential_phi(&x.0, c, dp));
            if phi1 + need > phi0 {
                self.failures.push(format!(
                    "[{t0},{t}] c={c}: phi {phi0} -> {phi1}, required drop {need}"
                ));
            }
            let (q0, q1) = (
                potential_phi_prime(x0, c, s, dp),
                potential_phi_prime(&x.0, c, s, dp),
            );
            if q1 + need_prime > q0 {
                self.failures.push(format!(
                    "[{t0},{t}] c={c}: phi' {q0} -> {q1}, required drop {need_prime}"
                ));
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}
