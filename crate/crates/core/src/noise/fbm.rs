//! Exact fractional Brownian motion via circulant embedding of the
//! fractional Gaussian noise covariance (Davies-Harte), with a dense
//! Cholesky fallback when the embedding is not positive semi-definite.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::rng::normal;
use super::{check_dt, check_hurst, NoisePath, RngStream};
use crate::error::{Error, Result};

/// Largest increment count for which the dense fallback is attempted.
const DENSE_LIMIT: usize = 4096;
/// Below this size the dense factorization is used directly.
const DENSE_SMALL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMethod {
    CirculantEmbedding,
    DenseCholesky,
}

impl fmt::Display for SynthesisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthesisMethod::CirculantEmbedding => "circulant-embedding",
            SynthesisMethod::DenseCholesky => "dense-cholesky",
        })
    }
}

/// `Cov(dB_j, dB_{j+k})` for increments of normalized fBm on a grid of step `dt`.
pub fn fgn_autocovariance(hurst: f64, dt: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    let g = if k == 0.0 {
        1.0
    } else {
        0.5 * ((k + 1.0).powf(h2) + (k - 1.0).powf(h2) - 2.0 * k.powf(h2))
    };
    g * dt.powf(h2)
}

enum Factor {
    Empty,
    Circulant {
        /// sqrt(lambda_j / m)
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    /// Row-major lower triangle of the Cholesky factor.
    Dense { lower: Vec<f64> },
}

pub struct FbmGenerator {
    hurst: f64,
    n: usize,
    dt: f64,
    method: SynthesisMethod,
    factor: Factor,
}

impl fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("n", &self.n)
            .field("dt", &self.dt)
            .field("method", &self.method)
            .finish()
    }
}

impl FbmGenerator {
    pub fn new(hurst: f64, n: usize, dt: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Self::build(hurst, n, dt, None)
    }

    /// Like [`FbmGenerator::new`] but also admits `hurst = 1/2`, where the
    /// process is ordinary Brownian motion. Used for self-tests.
    pub fn new_allowing_boundary(hurst: f64, n: usize, dt: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&hurst) {
            return Err(Error::invalid(format!("hurst must lie in [1/2, 1), got {hurst}")));
        }
        Self::build(hurst, n, dt, None)
    }

    /// Forces a particular synthesis method.
    pub fn with_method(hurst: f64, n: usize, dt: f64, method: SynthesisMethod) -> Result<Self> {
        if !(0.5..1.0).contains(&hurst) {
            return Err(Error::invalid(format!("hurst must lie in [1/2, 1), got {hurst}")));
        }
        Self::build(hurst, n, dt, Some(method))
    }

    fn build(hurst: f64, n: usize, dt: f64, forced: Option<SynthesisMethod>) -> Result<Self> {
        check_dt(dt)?;
        let gamma: Vec<f64> = (0..=n).map(|k| fgn_autocovariance(hurst, dt, k)).collect();
        let (method, factor) = if n == 0 {
            (SynthesisMethod::CirculantEmbedding, Factor::Empty)
        } else {
            match forced {
                Some(SynthesisMethod::DenseCholesky) => {
                    (SynthesisMethod::DenseCholesky, dense_factor(&gamma[..n])?)
                }
                Some(SynthesisMethod::CirculantEmbedding) => match circulant_factor(&gamma) {
                    Some(f) => (SynthesisMethod::CirculantEmbedding, f),
                    None => {
                        return Err(Error::invalid(format!(
                            "circulant embedding is not positive semi-definite for n = {n}"
                        )))
                    }
                },
                None if n < DENSE_SMALL => (SynthesisMethod::DenseCholesky, dense_factor(&gamma[..n])?),
                None => match circulant_factor(&gamma) {
                    Some(f) => (SynthesisMethod::CirculantEmbedding, f),
                    None => (SynthesisMethod::DenseCholesky, dense_factor(&gamma[..n])?),
                },
            }
        };
        Ok(Self {
            hurst,
            n,
            dt,
            method,
            factor,
        })
    }

    pub fn method(&self) -> SynthesisMethod {
        self.method
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sample(&self, stream: &RngStream) -> NoisePath {
        let mut inc = vec![0.0; self.n];
        self.fill_increments_with(&mut stream.rng(), &mut inc);
        NoisePath::from_increments(self.dt, &inc)
    }

    /// Fills `out` with the first `out.len()` increments (at most `n`).
    pub(crate) fn fill_increments_with(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        assert!(out.len() <= self.n, "requested {} increments from an fBm generator of size {}", out.len(), self.n);
        match &self.factor {
            Factor::Empty => {}
            Factor::Circulant { scale, fft } => {
                let mut buf: Vec<Complex<f64>> = scale
                    .iter()
                    .map(|&s| Complex::new(s * normal(rng), s * normal(rng)))
                    .collect();
                fft.process(&mut buf);
                for (o, z) in out.iter_mut().zip(&buf) {
                    *o = z.re;
                }
            }
            Factor::Dense { lower } => {
                let z: Vec<f64> = (0..self.n).map(|_| normal(rng)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &lower[i * self.n..i * self.n + i + 1];
                    *o = row.iter().zip(&z).map(|(l, z)| l * z).sum();
                }
            }
        }
    }
}

fn circulant_factor(gamma: &[f64]) -> Option<Factor> {
    // first row of the 2n circulant: g0 g1 .. g_{n-1} g_n g_{n-1} .. g1
    let n = gamma.len() - 1;
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    row.extend(gamma.iter().map(|&g| Complex::new(g, 0.0)));
    row.extend(gamma[1..n].iter().rev().map(|&g| Complex::new(g, 0.0)));
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    fft.process(&mut row);
    let max = row.iter().map(|z| z.re).fold(0.0, f64::max);
    if row.iter().any(|z| z.re < -1e-10 * max) {
        return None;
    }
    let scale = row.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
    Some(Factor::Circulant { scale, fft })
}

fn dense_factor(gamma: &[f64]) -> Result<Factor> {
    let n = gamma.len();
    if n > DENSE_LIMIT {
        return Err(Error::invalid(format!(
            "dense fBm factorization limited to {DENSE_LIMIT} increments, requested {n}"
        )));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = gamma[i - j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::invalid("fGn covariance is not positive definite"));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(Factor::Dense { lower: l })
}

/// Samples one fBm path and reports which synthesis method ran.
pub fn generate_fbm(hurst: f64, n: usize, dt: f64, rng: &RngStream) -> Result<(NoisePath, SynthesisMethod)> {
    let g = FbmGenerator::new(hurst, n, dt)?;
    Ok((g.sample(rng), g.method()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Entrywise check of the empirical increment covariance against the
    /// analytic one, in units of the standard error of each entry.
    fn check_covariance(g: &FbmGenerator, hurst: f64, dt: f64, paths: u64) {
        let n = g.n();
        let mut acc = vec![0.0; n * n];
        for p in 0..paths {
            let x = g.sample(&RngStream::new(99, p)).increments;
            for i in 0..n {
                for j in 0..n {
                    acc[i * n + j] += x[i] * x[j];
                }
            }
        }
        let m = paths as f64;
        for i in 0..n {
            for j in 0..n {
                let emp = acc[i * n + j] / m;
                let exact = fgn_autocovariance(hurst, dt, i.abs_diff(j));
                let cii = fgn_autocovariance(hurst, dt, 0);
                let se = ((cii * cii + exact * exact) / m).sqrt();
                assert!((emp - exact).abs() < 5.0 * se, "({i},{j}) emp {emp} exact {exact} se {se}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_hurst() {
        assert!(FbmGenerator::new(0.5, 10, 0.1).is_err());
        assert!(FbmGenerator::new(1.0, 10, 0.1).is_err());
        assert!(FbmGenerator::new(0.4, 10, 0.1).is_err());
        assert!(FbmGenerator::new(0.7, 10, 0.0).is_err());
        assert!(FbmGenerator::new_allowing_boundary(0.5, 10, 0.1).is_ok());
    }

    #[test]
    fn boundary_half_has_uncorrelated_increments() {
        for k in 1..20 {
            assert!(fgn_autocovariance(0.5, 0.01, k).abs() < 1e-18);
        }
        assert!((fgn_autocovariance(0.5, 0.01, 0) - 0.01).abs() < 1e-15);
        let g = FbmGenerator::new_allowing_boundary(0.5, 2000, 0.01).unwrap();
        let p = g.sample(&RngStream::new(1, 1));
        let v = p.increments.iter().map(|x| x * x).sum::<f64>() / 2000.0;
        assert!((v / 0.01 - 1.0).abs() < 0.1, "var {v}");
    }

    #[test]
    fn circulant_covariance_law() {
        let g = FbmGenerator::with_method(0.8, 8, 0.1, SynthesisMethod::CirculantEmbedding).unwrap();
        check_covariance(&g, 0.8, 0.1, 4000);
    }

    #[test]
    fn dense_covariance_law() {
        let g = FbmGenerator::with_method(0.9, 6, 0.5, SynthesisMethod::DenseCholesky).unwrap();
        check_covariance(&g, 0.9, 0.5, 4000);
    }

    #[test]
    fn small_n_uses_dense_and_large_uses_circulant() {
        assert_eq!(FbmGenerator::new(0.7, 4, 0.1).unwrap().method(), SynthesisMethod::DenseCholesky);
        let (p, m) = generate_fbm(0.7, 1000, 0.01, &RngStream::new(0, 0)).unwrap();
        assert_eq!(m, SynthesisMethod::CirculantEmbedding);
        assert_eq!(p.len(), 1001);
    }

    #[test]
    fn variance_at_unit_time() {
        // 10^4 paths: the 5% band is then 3.5 standard errors of the estimator
        let (h, dt, n) = (0.9, 1e-3, 10_000);
        let g = FbmGenerator::new(h, n, dt).unwrap();
        let k = (1.0 / dt).round() as usize;
        let m = 10_000u64;
        let mut buf = vec![0.0; n];
        let mut s2 = 0.0;
        for p in 0..m {
            g.fill_increments_with(&mut RngStream::new(17, p).rng(), &mut buf);
            let b1: f64 = buf[..k].iter().sum();
            s2 += b1 * b1;
        }
        let v = s2 / m as f64;
        assert!((v - 1.0).abs() < 0.05, "Var B_1 = {v}");
    }

    #[test]
    fn increment_scaling_over_two_decades() {
        let (h, dt, n) = (0.9, 1e-3, 10_000);
        let g = FbmGenerator::new(h, n, dt).unwrap();
        let lags = [10usize, 30, 100, 300, 1000];
        let mut sums = vec![0.0; lags.len()];
        let mut counts = vec![0usize; lags.len()];
        for p in 0..200 {
            let v = g.sample(&RngStream::new(23, p)).values;
            for (li, &lag) in lags.iter().enumerate() {
                for s in (0..n - lag).step_by(lag / 2) {
                    sums[li] += (v[s + lag] - v[s]).powi(2);
                    counts[li] += 1;
                }
            }
        }
        for (li, &lag) in lags.iter().enumerate() {
            let r = sums[li] / counts[li] as f64 / (lag as f64 * dt).powf(2.0 * h);
            assert!((r - 1.0).abs() < 0.10, "lag {lag}: ratio {r}");
        }
    }

    #[test]
    fn deterministic_per_stream() {
        let g = FbmGenerator::new(0.75, 512, 0.01).unwrap();
        let s = RngStream::new(4, 4);
        assert_eq!(g.sample(&s), g.sample(&s));
        assert_ne!(g.sample(&s), g.sample(&RngStream::new(4, 5)));
    }
}
