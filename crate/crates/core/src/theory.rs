//! Closed-form variance predictions and the Lyapunov-equation oracles.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::models::{linearization, Bifurcation, ModelKind};
use crate::noise::NoiseSpec;

/// Largest `|lambda| h` for which classical RK4 is stable on the real axis.
pub const RK4_STABILITY: f64 = 2.785;

fn check_a(a: f64) -> Result<()> {
    if a.is_finite() && a < 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("linearization a = {a} is not negative; no stationary variance")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma must be non-negative, got {sigma}")))
    }
}

/// `sigma^2 / (2|a|)`.
pub fn v_infinity_white(sigma: f64, a: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_a(a)?;
    Ok(sigma * sigma / (2.0 * a.abs()))
}

/// `sigma^2 / (2 (1/tau + |a|))`, bounded by `sigma^2 tau / 2`.
pub fn v_infinity_coloured(sigma: f64, tau: f64, a: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    check_a(a)?;
    Ok(sigma * sigma / (2.0 * (1.0 / tau + a.abs())))
}

/// `H Gamma(2H)`; equals 1/2 at the Brownian boundary `H = 1/2`.
pub fn volterra_prefactor(hurst: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::invalid(format!("hurst must lie in [1/2, 1), got {hurst}")));
    }
    Ok(hurst * gamma(2.0 * hurst))
}

/// Increment constant `c_alpha`, fixed by matching normalized fBm:
/// `c_alpha Gamma(2 alpha) = H Gamma(2H)` with `H = alpha + 1/2`.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    Ok(volterra_prefactor(alpha + 0.5)? / gamma(2.0 * alpha))
}

/// `sigma^2 H Gamma(2H) / |a|^{2H}`. `H = 1/2` is accepted and reproduces white noise.
pub fn v_infinity_volterra(sigma: f64, hurst: f64, a: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let pre = volterra_prefactor(hurst)?;
    check_a(a)?;
    Ok(sigma * sigma * pre / a.abs().powf(2.0 * hurst))
}

/// The same variance written in the Volterra parametrization,
/// `sigma^2 c_alpha Gamma(2 alpha) / |a|^{2 alpha + 1}`.
pub fn v_infinity_volterra_alpha(sigma: f64, alpha: f64, a: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let c = c_alpha(alpha)?;
    check_a(a)?;
    Ok(sigma * sigma * c * gamma(2.0 * alpha) / a.abs().powf(2.0 * alpha + 1.0))
}

/// Stationary variance of the linearized fast variable for any noise class.
pub fn v_infinity(noise: &NoiseSpec, sigma: f64, a: f64) -> Result<f64> {
    match *noise {
        NoiseSpec::White => v_infinity_white(sigma, a),
        NoiseSpec::Coloured { tau } => v_infinity_coloured(sigma, tau, a),
        NoiseSpec::Fbm { hurst } | NoiseSpec::Rosenblatt { hurst } => v_infinity_volterra(sigma, hurst, a),
    }
}

/// Exponent `beta` in `V ~ d^beta` as the distance `d` to the bifurcation shrinks.
pub fn scaling_exponent(noise: &NoiseSpec, bifurcation: Bifurcation) -> f64 {
    let pf = match *noise {
        NoiseSpec::White => -1.0,
        NoiseSpec::Coloured { .. } => 0.0,
        NoiseSpec::Fbm { hurst } | NoiseSpec::Rosenblatt { hurst } => -2.0 * hurst,
    };
    match bifurcation {
        Bifurcation::Fold => pf / 2.0,
        Bifurcation::Transcritical | Bifurcation::Pitchfork => pf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPrediction {
    pub noise: NoiseSpec,
    pub bifurcation: Bifurcation,
    pub sigma: f64,
    pub exponent: f64,
    /// `sigma^2 tau / 2` for coloured noise, the value approached at the bifurcation.
    pub finite_limit: Option<f64>,
}

impl TheoryPrediction {
    pub fn new(noise: NoiseSpec, bifurcation: Bifurcation, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            noise,
            bifurcation,
            sigma,
            exponent: scaling_exponent(&noise, bifurcation),
            finite_limit: noise.tau().map(|tau| sigma * sigma * tau / 2.0),
        })
    }

    /// Predicted stationary variance of the normal form at parameter `y < 0`.
    pub fn variance_at(&self, y: f64) -> Result<f64> {
        let a = linearization(&ModelKind::normal_form(self.bifurcation), y)?;
        v_infinity(&self.noise, self.sigma, a)
    }
}

/// Integrates `epsilon dV/ds = 2 a(y) V + sigma^2` with classical RK4, where
/// the slow time `s` runs with `y` from `y0` towards `y_end`.
///
/// Returns `(y, V)` at every step including both end points. The step is
/// checked against the RK4 stability limit over the whole range first.
pub fn solve_lyapunov_ode(
    a_of_y: impl Fn(f64) -> Result<f64>,
    sigma: f64,
    epsilon: f64,
    y0: f64,
    v0: f64,
    y_end: f64,
    step: f64,
) -> Result<Vec<(f64, f64)>> {
    check_sigma(sigma)?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let span = y_end - y0;
    let n = (span.abs() / step).ceil() as usize;
    if n == 0 {
        return Ok(vec![(y0, v0)]);
    }
    let h = span / n as f64;
    let dir = span.signum();

    let mut max_a = 0.0f64;
    for k in 0..=2 * n {
        max_a = max_a.max(a_of_y(y0 + 0.5 * k as f64 * h)?.abs());
    }
    let stiff = 2.0 * max_a * h.abs() / epsilon;
    if stiff > RK4_STABILITY {
        return Err(Error::Stiffness {
            step,
            required: RK4_STABILITY * epsilon / (2.0 * max_a),
        });
    }

    let s2 = sigma * sigma;
    let rhs = |y: f64, v: f64| -> Result<f64> { Ok(dir * (2.0 * a_of_y(y)? * v + s2) / epsilon) };
    let mut out = Vec::with_capacity(n + 1);
    let mut v = v0;
    out.push((y0, v));
    for k in 0..n {
        let y = y0 + k as f64 * h;
        let k1 = rhs(y, v)?;
        let k2 = rhs(y + 0.5 * h, v + 0.5 * h * k1)?;
        let k3 = rhs(y + 0.5 * h, v + 0.5 * h * k2)?;
        let k4 = rhs(y + h, v + h * k3)?;
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let y_next = if k + 1 == n { y_end } else { y0 + (k + 1) as f64 * h };
        out.push((y_next, v));
    }
    Ok(out)
}

/// Stationary covariance of `(x, B)` for `x' = a x + sigma B'`, `B' = -B/tau + W'`.
///
/// In first-order form `dZ = A Z dt + D dW` with `A = [[a, -sigma/tau], [0, -1/tau]]`
/// and `D = (sigma, 1)`.
pub fn solve_lyapunov_2x2(a: f64, sigma: f64, tau: f64) -> Result<[[f64; 2]; 2]> {
    check_sigma(sigma)?;
    if !(tau > 0.0 && tau.is_finite()) || !(a < 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("drift matrix is not Hurwitz (a = {a}, tau = {tau})")));
    }
    let r = 1.0 / tau + a.abs();
    let c11 = sigma * sigma / (2.0 * r);
    let c12 = sigma / (2.0 * r);
    Ok([[c11, c12], [c12, tau / 2.0]])
}

/// `|| A C + C A^T + D D^T ||_inf` for the system of [`solve_lyapunov_2x2`].
pub fn lyapunov_residual_2x2(a: f64, sigma: f64, tau: f64, c: &[[f64; 2]; 2]) -> f64 {
    let m = [[a, -sigma / tau], [0.0, -1.0 / tau]];
    let d = [sigma, 1.0];
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut r = d[i] * d[j];
            for k in 0..2 {
                r += m[i][k] * c[k][j] + c[i][k] * m[j][k];
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Evaluates `∫_0^{y/eps} exp(Φ(t)) t^{2 alpha - 1} dt` with
/// `Φ(t) = ∫_0^t a(y - eps r) dr`, the memory integral behind the Volterra
/// stationary variance. For constant `a < 0` it tends to `Gamma(2 alpha) / |a|^{2 alpha}`.
///
/// The substitution `t = tau^{1/(2 alpha)}` removes the endpoint singularity
/// (the mesh is uniform in `tau`, hence graded in `t`); composite Simpson is
/// refined by doubling until the Richardson estimate meets `rel_tol`.
pub fn volterra_limit_integral(
    a_of_u: impl Fn(f64) -> f64,
    alpha: f64,
    epsilon: f64,
    y: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    if !(epsilon > 0.0) || !(y > 0.0) {
        return Err(Error::invalid("epsilon and y must be positive"));
    }
    let p = 1.0 / (2.0 * alpha);
    let t_max = y / epsilon;
    // Truncate where the exponent drops below -50: the remainder is below e^{-50}
    // relative to the mass near the origin.
    let phi_coarse = |t_end: f64| gauss_cumulative(&a_of_u, y, epsilon, 0.0, t_end, 64);
    let mut t_end = 1.0f64.min(t_max);
    while t_end < t_max && phi_coarse(t_end) > -50.0 {
        t_end = (2.0 * t_end).min(t_max);
    }
    let tau_end = t_end.powf(2.0 * alpha);

    let simpson = |n: usize| -> f64 {
        let h = tau_end / n as f64;
        let mut phi = 0.0;
        let mut t_prev = 0.0;
        let mut sum = 0.0;
        for j in 0..=n {
            let t = (j as f64 * h).powf(p);
            phi += gauss_cumulative(&a_of_u, y, epsilon, t_prev, t, 1);
            t_prev = t;
            let w = if j == 0 || j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * phi.exp();
        }
        sum * h / 3.0 * p
    };

    let mut n = 64;
    let mut prev = simpson(n);
    let mut estimate = f64::INFINITY;
    while n < 1 << 22 {
        n *= 2;
        let cur = simpson(n);
        estimate = (cur - prev).abs() / 15.0;
        if !cur.is_finite() {
            break;
        }
        if estimate <= rel_tol * cur.abs() {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature {
        estimate,
        target: rel_tol * prev.abs(),
    })
}

/// `∫_{t0}^{t1} a(y - eps r) dr` by `panels`-panel 3-point Gauss-Legendre.
fn gauss_cumulative(a_of_u: &impl Fn(f64) -> f64, y: f64, eps: f64, t0: f64, t1: f64, panels: usize) -> f64 {
    const X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let h = (t1 - t0) / panels as f64;
    let mut s = 0.0;
    for i in 0..panels {
        let mid = t0 + (i as f64 + 0.5) * h;
        for k in 0..3 {
            s += W[k] * a_of_u(y - eps * (mid + 0.5 * h * X[k]));
        }
    }
    0.5 * h * s
}
