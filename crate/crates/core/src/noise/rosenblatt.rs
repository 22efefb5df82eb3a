//! Rosenblatt process from a discretized double Wiener-Ito integral.
//!
//! With `k = 1 - H/2` the process is
//!
//! ```text
//! R_t = c(H) ∫∫ [ ∫_0^t (u - y1)_+^{-k} (u - y2)_+^{-k} du ] dW(y1) dW(y2)
//! ```
//!
//! The inner `du` integral is discretized by the midpoint rule on nodes
//! `u_m`, which factors the kernel as `Σ_m h φ_i(u_m) φ_j(u_m)` where `φ_i`
//! is the cell average of `(u - y)_+^{-k}` over `y`-cell `i`. A path is then
//!
//! ```text
//! R(t_k) = c h Σ_{m < k} [ X_m^2 - Σ_i φ_i(u_m)^2 ΔW_i^2 ],   X_m = Σ_i φ_i(u_m) ΔW_i
//! ```
//!
//! i.e. the off-diagonal sum `i != j` of the double integral, evaluated in
//! `O(cells)` per node instead of `O(cells^2)`.
//!
//! The `y`-grid uses cells of width `h` on `[-near_cells h, T]` and
//! geometrically growing cells further left, out to a cutoff `L` chosen from
//! an analytic bound on the omitted variance. The kernel decays only like
//! `|y|^{H-2}`, so `L` is astronomically large for `H` near 1; the geometric
//! grid keeps the cell count logarithmic in `L`.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use statrs::function::beta::beta;

use super::rng::normal;
use super::{check_dt, check_hurst, NoisePath, RngStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationConfig {
    /// Left end `L` of the integration domain. `None` derives it from `tail_tolerance`.
    pub left_cutoff: Option<f64>,
    /// Upper bound on the fraction of the variance at the horizon lost by truncating at `L`.
    pub tail_tolerance: f64,
    /// Midpoint nodes per time step for the inner `du` integral.
    pub substeps: usize,
    /// Number of width-`h` cells to the left of the origin before geometric growth.
    pub near_cells: usize,
    /// Ratio between consecutive far cell widths.
    pub growth: f64,
    pub memory_cap_bytes: u64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            left_cutoff: None,
            tail_tolerance: 1e-3,
            substeps: 1,
            near_cells: 20,
            growth: 1.1,
            memory_cap_bytes: 2 << 30,
        }
    }
}

/// Normalizing constant making `E[R_1^2] = 1`: `sqrt(H(2H-1)/2) / B(H/2, 1-H)`.
pub fn rosenblatt_scale(hurst: f64) -> f64 {
    (hurst * (2.0 * hurst - 1.0) / 2.0).sqrt() / beta(hurst / 2.0, 1.0 - hurst)
}

/// Bound on the share of `Var(R_t)` carried by `y < -L`.
fn tail_fraction_bound(hurst: f64, t: f64, cutoff: f64) -> f64 {
    let k = 4.0 * (2.0 * hurst - 1.0) / (beta(hurst / 2.0, 1.0 - hurst) * (hurst + 1.0) * (1.0 - hurst));
    k * (t / cutoff).powf(1.0 - hurst)
}

fn cutoff_for_tolerance(hurst: f64, t: f64, tol: f64) -> f64 {
    let k = 4.0 * (2.0 * hurst - 1.0) / (beta(hurst / 2.0, 1.0 - hurst) * (hurst + 1.0) * (1.0 - hurst));
    t * (k / tol).powf(1.0 / (1.0 - hurst))
}

pub struct RosenblattGenerator {
    hurst: f64,
    n: usize,
    dt: f64,
    substeps: usize,
    cutoff: f64,
    /// c(H) * h
    weight: f64,
    /// sqrt of each cell width
    cell_sd: Vec<f64>,
    /// Row `m` holds φ_i(u_m) for the active cells `i < active[m]`.
    rows: Vec<f64>,
    row_start: Vec<usize>,
}

impl fmt::Debug for RosenblattGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RosenblattGenerator")
            .field("hurst", &self.hurst)
            .field("n", &self.n)
            .field("dt", &self.dt)
            .field("cells", &self.cell_sd.len())
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl RosenblattGenerator {
    pub fn new(hurst: f64, n: usize, dt: f64, trunc: &TruncationConfig) -> Result<Self> {
        check_hurst(hurst)?;
        check_dt(dt)?;
        if trunc.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if !(trunc.growth > 1.0) {
            return Err(Error::invalid(format!("growth must exceed 1, got {}", trunc.growth)));
        }
        if !(trunc.tail_tolerance > 0.0 && trunc.tail_tolerance < 1.0) {
            return Err(Error::invalid("tail_tolerance must lie in (0, 1)"));
        }
        let horizon = n as f64 * dt;
        let h = dt / trunc.substeps as f64;
        let near = trunc.near_cells as f64 * h;
        let cutoff = match trunc.left_cutoff {
            Some(l) if l > 0.0 => l,
            Some(l) => return Err(Error::invalid(format!("left cutoff must be positive, got {l}"))),
            None if n == 0 => near,
            None => cutoff_for_tolerance(hurst, horizon, trunc.tail_tolerance).max(near),
        };

        let edges = cell_edges(horizon, h, trunc.near_cells, trunc.growth, cutoff);
        let cells = edges.len() - 1;
        let nodes = n * trunc.substeps;
        let u = |m: usize| (m as f64 + 0.5) * h;
        // cells are ordered left to right, so the active set at u is a prefix
        let active: Vec<usize> = (0..nodes)
            .map(|m| edges[1..].partition_point(|&a_right| a_right - h < u(m)).min(cells))
            .collect();
        let entries: u64 = active.iter().map(|&a| a as u64).sum();
        let required = 8 * (entries + 2 * cells as u64 + nodes as u64);
        if required > trunc.memory_cap_bytes {
            return Err(Error::Sizing {
                required,
                cap: trunc.memory_cap_bytes,
                hint: format!(
                    "{nodes} quadrature nodes x {cells} cells; reduce n, raise dt, or raise the memory cap"
                ),
            });
        }

        let half_h = hurst / 2.0;
        let prim = |z: f64| if z > 0.0 { z.powf(half_h) / half_h } else { 0.0 };
        let mut rows = Vec::with_capacity(entries as usize);
        let mut row_start = Vec::with_capacity(nodes + 1);
        row_start.push(0);
        for (m, &act) in active.iter().enumerate() {
            let um = u(m);
            for i in 0..act {
                let (a, b) = (edges[i], edges[i + 1]);
                rows.push((prim(um - a) - prim(um - b)) / (b - a));
            }
            row_start.push(rows.len());
        }
        let cell_sd = edges.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
        Ok(Self {
            hurst,
            n,
            dt,
            substeps: trunc.substeps,
            cutoff,
            weight: rosenblatt_scale(hurst) * h,
            cell_sd,
            rows,
            row_start,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn cells(&self) -> usize {
        self.cell_sd.len()
    }

    /// Upper bound on the relative variance lost to the left cutoff at the horizon.
    pub fn omitted_fraction_bound(&self) -> f64 {
        tail_fraction_bound(self.hurst, self.n as f64 * self.dt, self.cutoff)
    }

    pub fn sample(&self, stream: &RngStream) -> NoisePath {
        let mut inc = vec![0.0; self.n];
        self.fill_increments_with(&mut stream.rng(), &mut inc);
        NoisePath::from_increments(self.dt, &inc)
    }

    pub(crate) fn fill_increments_with(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        assert!(out.len() <= self.n, "requested {} increments from a Rosenblatt generator of size {}", out.len(), self.n);
        let dw: Vec<f64> = self.cell_sd.iter().map(|s| s * normal(rng)).collect();
        let dw2: Vec<f64> = dw.iter().map(|x| x * x).collect();
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in k * self.substeps..(k + 1) * self.substeps {
                let row = &self.rows[self.row_start[m]..self.row_start[m + 1]];
                let (mut x, mut diag) = (0.0, 0.0);
                for ((phi, w), w2) in row.iter().zip(&dw).zip(&dw2) {
                    x += phi * w;
                    diag += phi * phi * w2;
                }
                acc += x * x - diag;
            }
            *o = self.weight * acc;
        }
    }
}

fn cell_edges(horizon: f64, h: f64, near_cells: usize, growth: f64, cutoff: f64) -> Vec<f64> {
    let mut left = Vec::new();
    let mut y = 0.0f64;
    let near = near_cells as f64 * h;
    while -y < near.min(cutoff) - 1e-12 * h {
        y = (y - h).max(-cutoff);
        left.push(y);
    }
    while -y < cutoff {
        let w = ((growth - 1.0) * -y).max(h);
        y = (y - w).max(-cutoff);
        left.push(y);
    }
    let steps = (horizon / h).round() as usize;
    let mut edges: Vec<f64> = left.into_iter().rev().collect();
    edges.extend((0..=steps).map(|j| j as f64 * h));
    if edges.len() < 2 {
        edges = vec![-h, 0.0];
    }
    edges
}

/// Samples one Rosenblatt path on `n` steps of size `dt`.
pub fn generate_rosenblatt(
    hurst: f64,
    n: usize,
    dt: f64,
    rng: &RngStream,
    trunc: &TruncationConfig,
) -> Result<NoisePath> {
    Ok(RosenblattGenerator::new(hurst, n, dt, trunc)?.sample(rng))
}
