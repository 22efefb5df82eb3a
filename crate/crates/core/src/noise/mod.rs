//! Driving noise processes: white, coloured (Ornstein-Uhlenbeck), fractional
//! Brownian motion and the Rosenblatt process.
//!
//! Every generator is a pure function of its parameters and an [`RngStream`],
//! so paths can be produced concurrently on distinct streams.

mod fbm;
mod path;
mod rng;
mod rosenblatt;

use std::fmt;
use std::str::FromStr;

pub use fbm::{fgn_autocovariance, generate_fbm, FbmGenerator, SynthesisMethod};
pub use path::NoisePath;
pub use rng::RngStream;
pub use rosenblatt::{generate_rosenblatt, rosenblatt_scale, RosenblattGenerator, TruncationConfig};

use crate::error::{Error, Result};
use rng::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    White,
    Coloured,
    Fbm,
    Rosenblatt,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::White,
        NoiseKind::Coloured,
        NoiseKind::Fbm,
        NoiseKind::Rosenblatt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Coloured => "coloured",
            NoiseKind::Fbm => "fbm",
            NoiseKind::Rosenblatt => "rosenblatt",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "white" => Ok(NoiseKind::White),
            "coloured" | "colored" | "ou" => Ok(NoiseKind::Coloured),
            "fbm" => Ok(NoiseKind::Fbm),
            "rosenblatt" => Ok(NoiseKind::Rosenblatt),
            other => Err(Error::invalid(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// A validated description of a driving noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    White,
    /// Forcing by the derivative of an OU process with correlation parameter `tau`.
    Coloured { tau: f64 },
    Fbm { hurst: f64 },
    Rosenblatt { hurst: f64 },
}

impl NoiseSpec {
    pub fn coloured(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(NoiseSpec::Coloured { tau })
    }

    pub fn fbm(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(NoiseSpec::Fbm { hurst })
    }

    pub fn rosenblatt(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(NoiseSpec::Rosenblatt { hurst })
    }

    /// Builds a spec from a kind plus whichever parameter that kind needs.
    pub fn from_parts(kind: NoiseKind, tau: Option<f64>, hurst: Option<f64>) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::invalid(format!("noise kind `{kind}` requires `{name}`")))
        };
        match kind {
            NoiseKind::White => Ok(NoiseSpec::White),
            NoiseKind::Coloured => NoiseSpec::coloured(need(tau, "tau")?),
            NoiseKind::Fbm => NoiseSpec::fbm(need(hurst, "hurst")?),
            NoiseKind::Rosenblatt => NoiseSpec::rosenblatt(need(hurst, "hurst")?),
        }
    }

    pub fn kind(&self) -> NoiseKind {
        match self {
            NoiseSpec::White => NoiseKind::White,
            NoiseSpec::Coloured { .. } => NoiseKind::Coloured,
            NoiseSpec::Fbm { .. } => NoiseKind::Fbm,
            NoiseSpec::Rosenblatt { .. } => NoiseKind::Rosenblatt,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Coloured { tau } => Some(tau),
            _ => None,
        }
    }

    pub fn hurst(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Fbm { hurst } | NoiseSpec::Rosenblatt { hurst } => Some(hurst),
            _ => None,
        }
    }

    /// Volterra regularity `alpha = hurst - 1/2` (fBm and Rosenblatt only).
    pub fn alpha(&self) -> Option<f64> {
        self.hurst().map(|h| h - 0.5)
    }

    pub fn is_volterra(&self) -> bool {
        self.hurst().is_some()
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseSpec::White => write!(f, "white"),
            NoiseSpec::Coloured { tau } => write!(f, "coloured(tau={tau})"),
            NoiseSpec::Fbm { hurst } => write!(f, "fbm(H={hurst})"),
            NoiseSpec::Rosenblatt { hurst } => write!(f, "rosenblatt(H={hurst})"),
        }
    }
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("dt must be positive, got {dt}")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must be positive, got {tau}")))
    }
}

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.5 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("hurst must lie in (1/2, 1), got {hurst}")))
    }
}

/// Brownian motion sampled on `n` steps of size `dt`.
pub fn generate_brownian(n: usize, dt: f64, rng: &RngStream) -> Result<NoisePath> {
    check_dt(dt)?;
    let mut inc = vec![0.0; n];
    fill_brownian(&mut inc, dt, &mut rng.rng());
    Ok(NoisePath::from_increments(dt, &inc))
}

fn fill_brownian(out: &mut [f64], dt: f64, rng: &mut rand_chacha::ChaCha8Rng) {
    let sd = dt.sqrt();
    for v in out {
        *v = sd * normal(rng);
    }
}

/// Initial state of an OU path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OuStart {
    /// Drawn from the stationary law `N(0, tau/2)`.
    #[default]
    Stationary,
    Zero,
}

/// Ornstein-Uhlenbeck path `dB = -B/tau dt + dW`, sampled with the exact
/// one-step transition.
pub fn generate_ou(tau: f64, n: usize, dt: f64, rng: &RngStream, start: OuStart) -> Result<NoisePath> {
    check_tau(tau)?;
    check_dt(dt)?;
    let mut values = vec![0.0; n + 1];
    fill_ou_states(&mut values, tau, dt, start, &mut rng.rng());
    Ok(NoisePath::from_values(dt, values))
}

fn fill_ou_states(
    states: &mut [f64],
    tau: f64,
    dt: f64,
    start: OuStart,
    rng: &mut rand_chacha::ChaCha8Rng,
) {
    let decay = (-dt / tau).exp();
    // (tau/2)(1 - e^{-2dt/tau}), written to stay accurate for dt << tau
    let cond_sd = (0.5 * tau * -(-2.0 * dt / tau).exp_m1()).sqrt();
    let Some((first, rest)) = states.split_first_mut() else {
        return;
    };
    *first = match start {
        OuStart::Stationary => (0.5 * tau).sqrt() * normal(rng),
        OuStart::Zero => 0.0,
    };
    let mut b = *first;
    for s in rest {
        b = decay * b + cond_sd * normal(rng);
        *s = b;
    }
}

/// A noise generator prepared for a fixed grid, reusable across many streams.
///
/// Heavy set-up (circulant eigenvalues, Rosenblatt kernel tables) happens once
/// in [`NoiseSource::prepare`]; [`NoiseSource::fill_increments`] is then cheap
/// and safe to call from many threads.
#[derive(Debug)]
pub enum NoiseSource {
    White { dt: f64 },
    Coloured { tau: f64, dt: f64, start: OuStart },
    Fbm(FbmGenerator),
    Rosenblatt(RosenblattGenerator),
}

impl NoiseSource {
    pub fn prepare(spec: &NoiseSpec, n: usize, dt: f64, trunc: &TruncationConfig) -> Result<Self> {
        check_dt(dt)?;
        Ok(match *spec {
            NoiseSpec::White => NoiseSource::White { dt },
            NoiseSpec::Coloured { tau } => NoiseSource::Coloured {
                tau,
                dt,
                start: OuStart::Stationary,
            },
            NoiseSpec::Fbm { hurst } => NoiseSource::Fbm(FbmGenerator::new(hurst, n, dt)?),
            NoiseSpec::Rosenblatt { hurst } => {
                NoiseSource::Rosenblatt(RosenblattGenerator::new(hurst, n, dt, trunc)?)
            }
        })
    }

    /// Writes the forcing increments `dC_k` for `out.len()` steps.
    ///
    /// For coloured noise these are increments of the OU state itself, so the
    /// forcing `sigma * dB` carries both the white-noise part and the
    /// `-B/tau dt` restoring part.
    pub fn fill_increments(&self, stream: &RngStream, out: &mut [f64]) {
        let mut rng = stream.rng();
        match self {
            NoiseSource::White { dt } => fill_brownian(out, *dt, &mut rng),
            NoiseSource::Coloured { tau, dt, start } => {
                let mut states = vec![0.0; out.len() + 1];
                fill_ou_states(&mut states, *tau, *dt, *start, &mut rng);
                for (o, w) in out.iter_mut().zip(states.windows(2)) {
                    *o = w[1] - w[0];
                }
            }
            NoiseSource::Fbm(g) => g.fill_increments_with(&mut rng, out),
            NoiseSource::Rosenblatt(g) => g.fill_increments_with(&mut rng, out),
        }
    }

    /// Longest path this source can produce (`None` for streaming sources).
    pub fn capacity(&self) -> Option<usize> {
        match self {
            NoiseSource::Fbm(g) => Some(g.n()),
            NoiseSource::Rosenblatt(g) => Some(g.n()),
            _ => None,
        }
    }
}
