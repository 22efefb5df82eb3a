//! Euler-Maruyama ensembles of `x' = f(x, y) + sigma C'`, `y' = slow_rate`.
//!
//! The simulation runs in fast time `t`. Forcing increments `dC_k` come from
//! a [`NoiseSource`] seeded per path with `RngStream(master_seed, path_index)`,
//! so any path can be regenerated on its own and ensemble statistics do not
//! depend on the number of worker threads.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::csv::{fmt_f64, fmt_opt, write_lines};
use crate::error::{Error, Result};
use crate::models::{attracting_branch, linearization, ModelKind, ModelSpec};
use crate::noise::{NoiseSource, NoiseSpec, RngStream, TruncationConfig};
use crate::stats::{variance_se, Moments};

/// Paths per aggregation chunk. Fixed so the merge order never depends on
/// the thread count or on the ensemble size.
const CHUNK: usize = 64;
/// Chunks evaluated concurrently before their accumulators are merged.
const BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub noise: NoiseSpec,
    pub x0: f64,
    pub y0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub record_stride: usize,
    /// Distance from the attracting branch that counts as a jump.
    pub jump_delta: f64,
    /// `|x|` beyond which a path is considered to have blown up.
    pub blowup: f64,
    pub truncation: TruncationConfig,
}

impl SimConfig {
    pub fn new(model: ModelSpec, noise: NoiseSpec, x0: f64, y0: f64, dt: f64, t_end: f64, n_paths: usize) -> Self {
        Self {
            model,
            noise,
            x0,
            y0,
            dt,
            t_end,
            n_paths,
            master_seed: 0,
            record_stride: 10,
            jump_delta: 0.3,
            blowup: 1e3,
            truncation: TruncationConfig::default(),
        }
    }

    /// Number of Euler steps; `t_end / dt` must be an integer.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid(format!("t_end must be positive, got {}", self.t_end)));
        }
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end || n < 1.0 {
            return Err(Error::invalid(format!(
                "t_end / dt = {} is not a positive integer",
                self.t_end / self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        let n = self.steps()?;
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be positive"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be positive"));
        }
        if !(self.jump_delta >= 0.0) {
            return Err(Error::invalid(format!("jump_delta must be non-negative, got {}", self.jump_delta)));
        }
        if !(self.blowup > 0.0) {
            return Err(Error::invalid("blowup bound must be positive"));
        }
        if !(self.x0.is_finite() && self.y0.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        // re-validate in case the spec was built field by field
        ModelSpec::new(self.model.kind, self.model.epsilon, self.model.slow_rate, self.model.sigma)?;
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// First step at which the path left the attracting neighbourhood or blew up.
    pub jump_time: Option<f64>,
}

impl PathRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = (0..self.t.len()).map(|i| format!("{},{},{}", fmt_f64(self.t[i]), fmt_f64(self.x[i]), fmt_f64(self.y[i])));
        write_lines(out, "t,x,y", rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Sample variance of `x` over surviving paths; `None` below two survivors.
    pub variance: Vec<Option<f64>>,
    pub mean: Vec<Option<f64>>,
    pub n_survivors: Vec<u64>,
    pub n_paths: usize,
}

impl EnsembleStats {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Standard error of the variance estimate at record `i` (Gaussian approximation).
    pub fn variance_se(&self, i: usize) -> Option<f64> {
        self.variance[i].map(|v| variance_se(v, self.n_survivors[i]))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = (0..self.len()).map(|i| {
            format!(
                "{},{},{},{}",
                fmt_f64(self.t[i]),
                fmt_f64(self.y[i]),
                fmt_opt(self.variance[i]),
                self.n_survivors[i]
            )
        });
        write_lines(out, "t,y,variance,n_survivors", rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    /// Reads a table written by [`EnsembleStats::write_csv`].
    pub fn read_csv(text: &str) -> Result<Self> {
        let (header, rows) = crate::csv::parse(text).ok_or_else(|| Error::Data("empty ensemble table".into()))?;
        if header != ["t", "y", "variance", "n_survivors"] {
            return Err(Error::Data(format!("unexpected ensemble header {header:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Data(format!("bad number `{s}`")));
        let mut st = EnsembleStats {
            t: vec![],
            y: vec![],
            variance: vec![],
            mean: vec![],
            n_survivors: vec![],
            n_paths: 0,
        };
        for r in rows {
            if r.len() != 4 {
                return Err(Error::Data(format!("expected 4 fields, got {}", r.len())));
            }
            st.t.push(num(r[0])?);
            st.y.push(num(r[1])?);
            st.variance.push(if r[2].is_empty() { None } else { Some(num(r[2])?) });
            st.mean.push(None);
            let n = r[3].parse::<u64>().map_err(|_| Error::Data(format!("bad count `{}`", r[3])))?;
            st.n_survivors.push(n);
            st.n_paths = st.n_paths.max(n as usize);
        }
        Ok(st)
    }
}

/// A configuration with its noise source and branch table prepared once.
#[derive(Debug)]
pub struct Simulator {
    config: SimConfig,
    steps: usize,
    source: NoiseSource,
    /// `h0(y_k)` for every step, `None` once past the bifurcation.
    branch: Vec<Option<f64>>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        let steps = config.validate()?;
        let source = NoiseSource::prepare(&config.noise, steps, config.dt, &config.truncation)?;
        let branch = (0..=steps)
            .map(|k| attracting_branch(&config.model.kind, y_at(&config, k)).ok())
            .collect();
        Ok(Self {
            config,
            steps,
            source,
            branch,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn time(&self, k: usize) -> f64 {
        k as f64 * self.config.dt
    }

    fn recorded(&self) -> impl Iterator<Item = usize> + '_ {
        (0..=self.steps).step_by(self.config.record_stride)
    }

    fn n_records(&self) -> usize {
        self.steps / self.config.record_stride + 1
    }

    fn is_jump(&self, k: usize, x: f64) -> bool {
        match self.branch[k] {
            Some(h0) => (x - h0).abs() >= self.config.jump_delta,
            None => true,
        }
    }

    /// Integrates path `index`, recording every `record_stride`-th state.
    /// The path continues after a jump and stops only on blow-up.
    pub fn path(&self, index: u64) -> PathRecord {
        let c = &self.config;
        let mut inc = vec![0.0; self.steps];
        self.source.fill_increments(&RngStream::new(c.master_seed, index), &mut inc);
        let mut rec = PathRecord {
            t: Vec::with_capacity(self.n_records()),
            x: Vec::with_capacity(self.n_records()),
            y: Vec::with_capacity(self.n_records()),
            jump_time: None,
        };
        let mut x = c.x0;
        for k in 0..=self.steps {
            if k % c.record_stride == 0 {
                rec.t.push(self.time(k));
                rec.x.push(x);
                rec.y.push(y_at(c, k));
            }
            if rec.jump_time.is_none() && (self.is_jump(k, x) || !(x.abs() <= c.blowup)) {
                rec.jump_time = Some(self.time(k));
            }
            if !(x.abs() <= c.blowup) || k == self.steps {
                break;
            }
            x += c.model.drift(x, y_at(c, k)) * c.dt + c.model.sigma * inc[k];
        }
        rec
    }

    /// Adds path `index` to per-record accumulators, stopping at its jump.
    fn accumulate(&self, index: u64, inc: &mut [f64], acc: &mut [Moments]) {
        let c = &self.config;
        self.source.fill_increments(&RngStream::new(c.master_seed, index), inc);
        let mut x = c.x0;
        for k in 0..=self.steps {
            if self.is_jump(k, x) || !(x.abs() <= c.blowup) {
                return;
            }
            if k % c.record_stride == 0 {
                acc[k / c.record_stride].push(x);
            }
            if k == self.steps {
                return;
            }
            x += c.model.drift(x, y_at(c, k)) * c.dt + c.model.sigma * inc[k];
        }
    }

    pub fn run_ensemble(&self) -> EnsembleStats {
        let n_paths = self.config.n_paths;
        let n_chunks = n_paths.div_ceil(CHUNK);
        let mut total = vec![Moments::default(); self.n_records()];
        for batch in (0..n_chunks).collect::<Vec<_>>().chunks(BATCH) {
            let parts: Vec<Vec<Moments>> = batch
                .par_iter()
                .map(|&chunk| {
                    let mut acc = vec![Moments::default(); self.n_records()];
                    let mut inc = vec![0.0; self.steps];
                    for p in chunk * CHUNK..((chunk + 1) * CHUNK).min(n_paths) {
                        self.accumulate(p as u64, &mut inc, &mut acc);
                    }
                    acc
                })
                .collect();
            for part in &parts {
                for (t, p) in total.iter_mut().zip(part) {
                    t.merge(p);
                }
            }
        }
        let mut stats = EnsembleStats {
            t: self.recorded().map(|k| self.time(k)).collect(),
            y: self.recorded().map(|k| y_at(&self.config, k)).collect(),
            variance: Vec::with_capacity(total.len()),
            mean: Vec::with_capacity(total.len()),
            n_survivors: Vec::with_capacity(total.len()),
            n_paths,
        };
        // once the survivors drop below two, later records stay absent
        let mut dead = false;
        for m in &total {
            dead |= m.count < 2;
            stats.variance.push(if dead { None } else { m.variance() });
            stats.mean.push((m.count > 0).then_some(m.mean));
            stats.n_survivors.push(m.count);
        }
        stats
    }
}

/// `y_k = y0 + slow_rate * t_k`, evaluated directly so no rounding accumulates.
fn y_at(c: &SimConfig, k: usize) -> f64 {
    c.y0 + c.model.slow_rate * (k as f64 * c.dt)
}

pub fn integrate_path(config: &SimConfig, stream: &RngStream) -> Result<PathRecord> {
    let cfg = SimConfig {
        master_seed: stream.master_seed,
        ..config.clone()
    };
    Ok(Simulator::new(cfg)?.path(stream.stream_index))
}

pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleStats> {
    Ok(Simulator::new(config.clone())?.run_ensemble())
}

/// First recorded time at which `|x - h0(y)| >= delta` or `y` has reached the
/// bifurcation. `delta = 0` therefore reports a jump at the first record.
pub fn detect_jump(path: &PathRecord, model: &ModelSpec, delta: f64) -> Option<f64> {
    (0..path.t.len())
        .find(|&i| match attracting_branch(&model.kind, path.y[i]) {
            Ok(h0) => (path.x[i] - h0).abs() >= delta || !path.x[i].is_finite(),
            Err(_) => true,
        })
        .map(|i| path.t[i])
}

/// Distance from the attracting branch to the nearest other equilibrium.
fn branch_separation(m: &ModelKind, y: f64) -> f64 {
    match m {
        ModelKind::Fold => 2.0 * (-y).sqrt(),
        ModelKind::Pitchfork => (-y).sqrt(),
        ModelKind::Transcritical => -y,
        ModelKind::StommelCessi { .. } => f64::INFINITY,
    }
}

/// One point of a frozen-parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub y: f64,
    /// Distance `|y - y*|` to the bifurcation.
    pub distance: f64,
    pub variance: f64,
    pub se: f64,
    pub n_paths: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub noise: NoiseSpec,
    pub sigma: f64,
    pub ys: Vec<f64>,
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Averaging starts at `burn_in / |a(y)|` ...
    pub burn_in: f64,
    /// ... and ends at `horizon / |a(y)|`.
    pub horizon: f64,
    /// Ensemble variances averaged per window.
    pub samples: usize,
    pub truncation: TruncationConfig,
}

impl SweepConfig {
    pub fn new(noise: NoiseSpec, sigma: f64, ys: Vec<f64>, dt: f64, n_paths: usize) -> Self {
        Self {
            noise,
            sigma,
            ys,
            dt,
            n_paths,
            master_seed: 0,
            burn_in: 6.0,
            horizon: 8.0,
            samples: 200,
            truncation: TruncationConfig::default(),
        }
    }
}

/// Stationary variance of the frozen-`y` (`slow_rate = 0`) normal forms over a
/// grid of `y`, one result per model.
///
/// Each path starts on the attracting branch and runs to `horizon / |a(y)|`;
/// the ensemble variance is averaged over `[burn_in, horizon] / |a(y)|`.
/// Path `p` uses the same forcing for every model and every `y`. A path that
/// gets half way to the nearest other equilibrium is dropped from then on,
/// and `n_paths` reports the fewest survivors in the window.
pub fn stationary_sweep(models: &[ModelKind], cfg: &SweepConfig) -> Result<Vec<Vec<SweepPoint>>> {
    if cfg.ys.is_empty() || models.is_empty() {
        return Err(Error::invalid("sweep needs at least one model and one y"));
    }
    if !(cfg.burn_in >= 0.0 && cfg.horizon > cfg.burn_in) || cfg.samples == 0 || cfg.n_paths < 2 {
        return Err(Error::invalid("sweep needs 0 <= burn_in < horizon, samples >= 1 and n_paths >= 2"));
    }
    struct Job {
        model: ModelKind,
        y: f64,
        x0: f64,
        escape: f64,
        start: usize,
        end: usize,
        stride: usize,
    }
    let mut jobs = Vec::new();
    for m in models {
        for &y in &cfg.ys {
            let a = linearization(m, y)?;
            let x0 = attracting_branch(m, y)?;
            let end = (cfg.horizon / a.abs() / cfg.dt).ceil() as usize;
            let start = (cfg.burn_in / a.abs() / cfg.dt).floor() as usize;
            let stride = ((end - start) / cfg.samples).max(1);
            jobs.push(Job {
                model: *m,
                y,
                x0,
                escape: 0.5 * branch_separation(m, y),
                start,
                end,
                stride,
            });
        }
    }
    let n_max = jobs.iter().map(|j| j.end).max().unwrap_or(0);
    let source = NoiseSource::prepare(&cfg.noise, n_max, cfg.dt, &cfg.truncation)?;
    let slots: Vec<usize> = jobs.iter().map(|j| (j.end - j.start) / j.stride + 1).collect();

    let run_chunk = |chunk: usize| -> Vec<Vec<Moments>> {
        let mut acc: Vec<Vec<Moments>> = slots.iter().map(|&s| vec![Moments::default(); s]).collect();
        let mut inc = vec![0.0; n_max];
        for p in chunk * CHUNK..((chunk + 1) * CHUNK).min(cfg.n_paths) {
            source.fill_increments(&RngStream::new(cfg.master_seed, p as u64), &mut inc);
            for (job, acc) in jobs.iter().zip(acc.iter_mut()) {
                let mut x = job.x0;
                let mut escaped = false;
                for (k, dc) in inc[..job.end].iter().enumerate() {
                    if !((x - job.x0).abs() < job.escape) {
                        escaped = true;
                        break;
                    }
                    if k >= job.start && (k - job.start) % job.stride == 0 {
                        acc[(k - job.start) / job.stride].push(x);
                    }
                    x += drift_frozen(&job.model, x, job.y) * cfg.dt + cfg.sigma * dc;
                }
                if !escaped && (x - job.x0).abs() < job.escape && (job.end - job.start) % job.stride == 0 {
                    acc[(job.end - job.start) / job.stride].push(x);
                }
            }
        }
        acc
    };

    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let mut total: Vec<Vec<Moments>> = slots.iter().map(|&s| vec![Moments::default(); s]).collect();
    for batch in (0..n_chunks).collect::<Vec<_>>().chunks(BATCH) {
        let parts: Vec<_> = batch.par_iter().map(|&c| run_chunk(c)).collect();
        for part in &parts {
            for (t, p) in total.iter_mut().zip(part) {
                for (a, b) in t.iter_mut().zip(p) {
                    a.merge(b);
                }
            }
        }
    }

    let mut out = vec![Vec::with_capacity(cfg.ys.len()); models.len()];
    for (i, (job, acc)) in jobs.iter().zip(&total).enumerate() {
        let vars: Vec<f64> = acc.iter().filter_map(Moments::variance).collect();
        let survivors = acc.iter().map(|m| m.count).min().unwrap_or(0);
        if vars.len() < acc.len() || vars.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("no finite variance for {} at y = {}", job.model.name(), job.y)));
        }
        let v = vars.iter().sum::<f64>() / vars.len() as f64;
        let bif = crate::models::bifurcation_point(&job.model)?;
        out[i / cfg.ys.len()].push(SweepPoint {
            y: job.y,
            distance: bif.distance(&job.model, job.y),
            variance: v,
            se: variance_se(v, survivors),
            n_paths: survivors,
        });
    }
    Ok(out)
}

#[inline]
fn drift_frozen(m: &ModelKind, x: f64, y: f64) -> f64 {
    crate::models::drift(m, x, y)
}
