//! Fast-slow models `x' = f(x, y) + sigma C'`, `y' = slow_rate`.
//!
//! Three normal forms (fold, transcritical, pitchfork) and the Stommel-Cessi
//! box model `f(x, y) = y - x (1 + eta2 (1 - x)^2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bifurcation {
    Fold,
    Transcritical,
    Pitchfork,
}

impl Bifurcation {
    pub const ALL: [Bifurcation; 3] = [Bifurcation::Fold, Bifurcation::Transcritical, Bifurcation::Pitchfork];

    pub fn name(self) -> &'static str {
        match self {
            Bifurcation::Fold => "fold",
            Bifurcation::Transcritical => "transcritical",
            Bifurcation::Pitchfork => "pitchfork",
        }
    }
}

impl fmt::Display for Bifurcation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bifurcation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fold" | "saddle-node" => Ok(Bifurcation::Fold),
            "transcritical" | "tc" => Ok(Bifurcation::Transcritical),
            "pitchfork" | "pf" => Ok(Bifurcation::Pitchfork),
            other => Err(Error::invalid(format!("unknown bifurcation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Fold,
    Transcritical,
    Pitchfork,
    StommelCessi { eta2: f64 },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Fold => "fold",
            ModelKind::Transcritical => "transcritical",
            ModelKind::Pitchfork => "pitchfork",
            ModelKind::StommelCessi { .. } => "stommel",
        }
    }

    pub fn normal_form(b: Bifurcation) -> Self {
        match b {
            Bifurcation::Fold => ModelKind::Fold,
            Bifurcation::Transcritical => ModelKind::Transcritical,
            Bifurcation::Pitchfork => ModelKind::Pitchfork,
        }
    }

    /// Parses `fold`, `transcritical`, `pitchfork` or `stommel` (the latter needs `eta2`).
    pub fn from_name(name: &str, eta2: Option<f64>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "stommel" | "stommel-cessi" | "stommelcessi" => {
                let eta2 = eta2.ok_or_else(|| Error::invalid("model `stommel` requires `eta2`"))?;
                if !(eta2.is_finite() && eta2 > 0.0) {
                    return Err(Error::invalid(format!("eta2 must be positive, got {eta2}")));
                }
                Ok(ModelKind::StommelCessi { eta2 })
            }
            other => other.parse::<Bifurcation>().map(ModelKind::normal_form),
        }
    }

    /// Bifurcation type of the point this model's attracting branch runs into.
    pub fn bifurcation(&self) -> Bifurcation {
        match self {
            ModelKind::Fold | ModelKind::StommelCessi { .. } => Bifurcation::Fold,
            ModelKind::Transcritical => Bifurcation::Transcritical,
            ModelKind::Pitchfork => Bifurcation::Pitchfork,
        }
    }

    pub fn eta2(&self) -> Option<f64> {
        match *self {
            ModelKind::StommelCessi { eta2 } => Some(eta2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub epsilon: f64,
    /// `dy/dt`, e.g. `+epsilon` for the normal forms and `-epsilon` for Stommel.
    pub slow_rate: f64,
    pub sigma: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, epsilon: f64, slow_rate: f64, sigma: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be non-negative, got {sigma}")));
        }
        if !slow_rate.is_finite() {
            return Err(Error::invalid("slow_rate must be finite"));
        }
        if let ModelKind::StommelCessi { eta2 } = kind {
            if !(eta2.is_finite() && eta2 > 0.0) {
                return Err(Error::invalid(format!("eta2 must be positive, got {eta2}")));
            }
        }
        Ok(Self {
            kind,
            epsilon,
            slow_rate,
            sigma,
        })
    }

    /// Normal form with `y' = +epsilon`, drifting towards the bifurcation at `y = 0`.
    pub fn normal_form(b: Bifurcation, epsilon: f64, sigma: f64) -> Result<Self> {
        Self::new(ModelKind::normal_form(b), epsilon, epsilon, sigma)
    }

    /// Stommel-Cessi with `y' = -epsilon`, drifting towards the upper fold.
    pub fn stommel(eta2: f64, epsilon: f64, sigma: f64) -> Result<Self> {
        Self::new(ModelKind::StommelCessi { eta2 }, epsilon, -epsilon, sigma)
    }

    pub fn drift(&self, x: f64, y: f64) -> f64 {
        drift(&self.kind, x, y)
    }

    pub fn drift_dx(&self, x: f64, y: f64) -> f64 {
        drift_dx(&self.kind, x, y)
    }

    pub fn attracting_branch(&self, y: f64) -> Result<f64> {
        attracting_branch(&self.kind, y)
    }

    pub fn linearization(&self, y: f64) -> Result<f64> {
        linearization(&self.kind, y)
    }

    pub fn bifurcation_point(&self) -> Result<BifurcationPoint> {
        bifurcation_point(&self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationPoint {
    pub x_star: f64,
    pub y_star: f64,
    pub kind: Bifurcation,
}

impl BifurcationPoint {
    /// Signed distance `d > 0` on the attracting side, `d <= 0` at or past it.
    pub fn distance(&self, model: &ModelKind, y: f64) -> f64 {
        match model {
            ModelKind::StommelCessi { .. } => y - self.y_star,
            _ => self.y_star - y,
        }
    }
}

pub fn drift(model: &ModelKind, x: f64, y: f64) -> f64 {
    match *model {
        ModelKind::Fold => x * x + y,
        ModelKind::Transcritical => x * (x + y),
        ModelKind::Pitchfork => x * (y + x * x),
        ModelKind::StommelCessi { eta2 } => {
            let u = 1.0 - x;
            y - x * (1.0 + eta2 * u * u)
        }
    }
}

pub fn drift_dx(model: &ModelKind, x: f64, y: f64) -> f64 {
    match *model {
        ModelKind::Fold => 2.0 * x,
        ModelKind::Transcritical => 2.0 * x + y,
        ModelKind::Pitchfork => y + 3.0 * x * x,
        ModelKind::StommelCessi { eta2 } => {
            let u = 1.0 - x;
            -(1.0 + eta2 * u * u - 2.0 * eta2 * x * u)
        }
    }
}

pub fn bifurcation_point(model: &ModelKind) -> Result<BifurcationPoint> {
    match *model {
        ModelKind::StommelCessi { eta2 } => fold_point_stommel(eta2),
        _ => Ok(BifurcationPoint {
            x_star: 0.0,
            y_star: 0.0,
            kind: model.bifurcation(),
        }),
    }
}

/// Upper fold of the Stommel-Cessi critical manifold.
///
/// `df/dx = 0` is the quadratic `3 eta2 x^2 - 4 eta2 x + (1 + eta2) = 0`, with
/// real roots iff `eta2 > 3`.
pub fn fold_point_stommel(eta2: f64) -> Result<BifurcationPoint> {
    if !(eta2.is_finite() && eta2 > 0.0) {
        return Err(Error::invalid(format!("eta2 must be positive, got {eta2}")));
    }
    if eta2 <= 3.0 {
        return Err(Error::domain(format!(
            "eta2 = {eta2} gives a monotone critical manifold with no fold (needs eta2 > 3)"
        )));
    }
    let x_star = 2.0 / 3.0 + (eta2 - 3.0).sqrt() / (3.0 * eta2.sqrt());
    let y_star = x_star * (1.0 + eta2 * (1.0 - x_star).powi(2));
    Ok(BifurcationPoint {
        x_star,
        y_star,
        kind: Bifurcation::Fold,
    })
}

pub fn attracting_branch(model: &ModelKind, y: f64) -> Result<f64> {
    match *model {
        ModelKind::Fold => {
            if y < 0.0 {
                Ok(-(-y).sqrt())
            } else {
                Err(past(model, y, 0.0))
            }
        }
        ModelKind::Transcritical | ModelKind::Pitchfork => {
            if y < 0.0 {
                Ok(0.0)
            } else {
                Err(past(model, y, 0.0))
            }
        }
        ModelKind::StommelCessi { eta2 } => stommel_upper_root(eta2, y),
    }
}

pub fn linearization(model: &ModelKind, y: f64) -> Result<f64> {
    match *model {
        ModelKind::Fold => attracting_branch(model, y).map(|_| -2.0 * (-y).sqrt()),
        ModelKind::Transcritical | ModelKind::Pitchfork => attracting_branch(model, y).map(|_| y),
        ModelKind::StommelCessi { .. } => {
            let x = attracting_branch(model, y)?;
            Ok(drift_dx(model, x, y).min(0.0))
        }
    }
}

fn past(model: &ModelKind, y: f64, y_star: f64) -> Error {
    Error::domain(format!(
        "y = {y} is at or past the {} bifurcation at y* = {y_star}; no attracting branch",
        model.name()
    ))
}

/// Largest real root of `x (1 + eta2 (1 - x)^2) = y` on the upper branch.
fn stommel_upper_root(eta2: f64, y: f64) -> Result<f64> {
    let model = ModelKind::StommelCessi { eta2 };
    let Ok(p) = fold_point_stommel(eta2) else {
        // monotone manifold: a single root, bracketed around y
        let g = |x: f64| -drift(&model, x, y);
        let (mut lo, mut hi) = (y.min(0.0) - 1.0, y.max(0.0) + 1.0);
        while g(lo) > 0.0 {
            lo = 2.0 * lo - 1.0;
        }
        while g(hi) < 0.0 {
            hi = 2.0 * hi + 1.0;
        }
        return Ok(safeguarded_newton(g, |x| -drift_dx(&model, x, y), lo, hi));
    };
    if y.is_nan() || y < p.y_star {
        return Err(past(&model, y, p.y_star));
    }
    // Shifting to the fold, x = x* + s with s >= 0 solves
    // eta2 s^2 (3x* - 2 + s) = y - y*, which stays well conditioned at s = 0.
    let c = 3.0 * p.x_star - 2.0;
    let rhs = (y - p.y_star) / eta2;
    let g = |s: f64| s * s * (c + s) - rhs;
    let dg = |s: f64| s * (2.0 * c + 3.0 * s);
    let mut hi = rhs.sqrt().max(rhs.cbrt()) + 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let s = safeguarded_newton(g, dg, 0.0, hi);
    Ok(p.x_star + s)
}

/// Newton iteration kept inside a sign-change bracket `g(lo) <= 0 <= g(hi)`.
fn safeguarded_newton(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = x - gx / dg(x);
        let next = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if next == x || hi - lo <= f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        x = next;
    }
    x
}

/// Tabulates `(y, h0(y), a(y))` over `count` evenly spaced points.
pub fn tabulate_manifold(model: &ModelKind, y_from: f64, y_to: f64, count: usize) -> Result<Vec<(f64, f64, f64)>> {
    if count < 2 {
        return Err(Error::invalid("manifold table needs at least 2 points"));
    }
    (0..count)
        .map(|i| {
            let y = y_from + (y_to - y_from) * i as f64 / (count - 1) as f64;
            Ok((y, attracting_branch(model, y)?, linearization(model, y)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const STOMMEL: ModelKind = ModelKind::StommelCessi { eta2: 7.5 };

    #[test]
    fn normal_form_values() {
        assert_eq!(drift(&ModelKind::Fold, 0.0, 0.0), 0.0);
        assert_eq!(drift(&ModelKind::Pitchfork, 1.0, -1.0), 0.0);
        assert_eq!(attracting_branch(&ModelKind::Pitchfork, -0.5).unwrap(), 0.0);
        assert_eq!(attracting_branch(&ModelKind::Fold, -0.25).unwrap(), -0.5);
        assert_eq!(linearization(&ModelKind::Fold, -0.25).unwrap(), -1.0);
        assert_eq!(linearization(&ModelKind::Transcritical, -0.3).unwrap(), -0.3);
        for m in [ModelKind::Fold, ModelKind::Transcritical, ModelKind::Pitchfork] {
            assert!(attracting_branch(&m, 0.0).is_err());
            assert!(attracting_branch(&m, 0.1).is_err());
        }
    }

    fn bisect_cubic(y: f64) -> f64 {
        // independent: plain bisection on the cubic over [0.9, 3]
        let g = |x: f64| x * (1.0 + 7.5 * (1.0 - x) * (1.0 - x)) - y;
        let (mut a, mut b) = (0.93, 3.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(m) > 0.0 {
                b = m
            } else {
                a = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn stommel_manifold_points() {
        assert!(drift(&STOMMEL, 1.1643, 1.4).abs() < 1e-3);
        let x14 = attracting_branch(&STOMMEL, 1.4).unwrap();
        assert!((x14 - bisect_cubic(1.4)).abs() < 1e-12);
        let x = attracting_branch(&STOMMEL, 1.0642).unwrap();
        assert!((x - 1.0469).abs() < 1e-3, "{x}");
        assert!((x - bisect_cubic(1.0642)).abs() < 1e-12);
        assert!(drift(&STOMMEL, x, 1.0642).abs() < 1e-12);
    }

    #[test]
    fn stommel_fold_point() {
        let p = fold_point_stommel(7.5).unwrap();
        let s15 = 15f64.sqrt();
        assert!((p.x_star - (10.0 + s15) / 15.0).abs() < 1e-12);
        assert!((p.y_star - (11.0 / 9.0 - 1.0 / s15)).abs() < 1e-12);
        assert!(drift(&STOMMEL, p.x_star, p.y_star).abs() < 1e-12);
        assert!(drift_dx(&STOMMEL, p.x_star, p.y_star).abs() < 1e-12);
        assert!(linearization(&STOMMEL, p.y_star).unwrap().abs() < 1e-10);
        assert!(attracting_branch(&STOMMEL, p.y_star - 1e-3).is_err());
    }

    #[test]
    fn no_fold_for_small_eta2() {
        assert!(matches!(fold_point_stommel(1.0), Err(Error::Domain(_))));
        // oracle: df/dx keeps one sign on a dense grid
        let m = ModelKind::StommelCessi { eta2: 1.0 };
        assert!((0..=4000).all(|i| drift_dx(&m, -1.0 + i as f64 * 1e-3, 0.0) < 0.0));
        // while at 7.5 it changes sign
        assert!((0..=4000).any(|i| drift_dx(&STOMMEL, -1.0 + i as f64 * 1e-3, 0.0) > 0.0));
    }

    #[test]
    fn stommel_fold_scaling() {
        let p = fold_point_stommel(7.5).unwrap();
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|d| linearization(&STOMMEL, p.y_star + d).unwrap().abs() / d.sqrt())
            .collect();
        // generic fold: |a| ~ c sqrt(d), c = sqrt(2 |f_y f_xx|) = sqrt(2 * 2 eta2 (3x*-2))
        let c = (4.0 * 7.5 * (3.0 * p.x_star - 2.0)).sqrt();
        assert!((ratios[2] / c - 1.0).abs() < 0.01, "{ratios:?} vs {c}");
        assert!((ratios[1] / c - 1.0).abs() < 0.03);
    }

    #[test]
    fn model_spec_validation() {
        assert!(ModelSpec::new(ModelKind::Fold, 0.0, 0.0, 0.1).is_err());
        assert!(ModelSpec::new(ModelKind::Fold, 0.1, 0.0, -0.1).is_err());
        assert!(ModelSpec::new(ModelKind::StommelCessi { eta2: -1.0 }, 0.1, 0.0, 0.1).is_err());
        assert_eq!(ModelSpec::stommel(7.5, 0.01, 0.01).unwrap().slow_rate, -0.01);
    }
}
