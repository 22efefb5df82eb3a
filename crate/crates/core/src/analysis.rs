//! Log-log scaling fits of variance against distance to the bifurcation.

use std::fmt;
use std::io::Write;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::csv::{fmt_f64, write_lines};
use crate::error::{Error, Result};
use crate::models::Bifurcation;
use crate::noise::{NoiseKind, NoiseSpec};
use crate::simulate::{EnsembleStats, SweepPoint};
use crate::theory::scaling_exponent;

/// Slopes inside `(-BOUNDED_SLOPE, BOUNDED_SLOPE)` are candidates for a bounded verdict.
pub const BOUNDED_SLOPE: f64 = 0.15;
pub const MIN_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Diverging,
    Bounded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Diverging => "diverging",
            Verdict::Bounded => "bounded",
        })
    }
}

/// One observation: distance, variance and (optionally) its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePoint {
    pub distance: f64,
    pub variance: f64,
    pub se: Option<f64>,
}

impl From<&SweepPoint> for VariancePoint {
    fn from(p: &SweepPoint) -> Self {
        Self {
            distance: p.distance,
            variance: p.variance,
            se: Some(p.se),
        }
    }
}

/// Bin average used in the regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub log_d: f64,
    pub log_var: f64,
    pub distance: f64,
    pub variance: f64,
    pub se: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// Non-empty bins entering the regression.
    pub n_points: usize,
    pub r_squared: f64,
    pub slope_se: f64,
    /// 95% confidence interval of the slope.
    pub ci: (f64, f64),
    pub theoretical_exponent: Option<f64>,
    pub verdict: Verdict,
    /// Horizontal asymptote from `V = V0 + b d`, used by the verdict.
    pub asymptote: f64,
    pub bins: Vec<Bin>,
}

impl ScalingFit {
    pub fn with_theory(mut self, exponent: f64) -> Self {
        self.theoretical_exponent = Some(exponent);
        self
    }

    pub fn predict_log(&self, log_d: f64) -> f64 {
        self.intercept + self.slope * log_d
    }

    /// `log_d,log_var,fit_line` rows, one per bin.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = self
            .bins
            .iter()
            .map(|b| format!("{},{},{}", fmt_f64(b.log_d), fmt_f64(b.log_var), fmt_f64(self.predict_log(b.log_d))));
        write_lines(out, "log_d,log_var,fit_line", rows)
    }

    pub fn save_plot_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_plot_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

/// Header of the fit report table.
pub const FIT_HEADER: &str = "noise,bifurcation,slope,theory,ci_low,ci_high,r2,verdict";

/// One row of the fit report table.
pub fn fit_row(noise: &NoiseSpec, bifurcation: Bifurcation, fit: &ScalingFit) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        noise_label(noise),
        bifurcation,
        fmt_f64(fit.slope),
        fit.theoretical_exponent.map(fmt_f64).unwrap_or_default(),
        fmt_f64(fit.ci.0),
        fmt_f64(fit.ci.1),
        fmt_f64(fit.r_squared),
        fit.verdict
    )
}

pub fn write_fit_report<W: Write>(out: W, rows: &[(NoiseSpec, Bifurcation, ScalingFit)]) -> std::io::Result<()> {
    write_lines(out, FIT_HEADER, rows.iter().map(|(n, b, f)| fit_row(n, *b, f)))
}

/// Compact label without commas, e.g. `fbm:H=0.9`.
pub fn noise_label(noise: &NoiseSpec) -> String {
    match *noise {
        NoiseSpec::White => "white".into(),
        NoiseSpec::Coloured { tau } => format!("coloured:tau={tau}"),
        NoiseSpec::Fbm { hurst } => format!("fbm:H={hurst}"),
        NoiseSpec::Rosenblatt { hurst } => format!("rosenblatt:H={hurst}"),
    }
}

/// Converts an ensemble trace to distance/variance points, keeping only the
/// records before `y` first reaches `y_star`.
pub fn trace_points(stats: &EnsembleStats, y_star: f64) -> Vec<VariancePoint> {
    let Some(&y_first) = stats.y.first() else {
        return vec![];
    };
    let side = (y_first - y_star).signum();
    (0..stats.len())
        .take_while(|&i| (stats.y[i] - y_star) * side > 0.0)
        .filter_map(|i| {
            stats.variance[i].map(|v| VariancePoint {
                distance: (stats.y[i] - y_star).abs(),
                variance: v,
                se: stats.variance_se(i),
            })
        })
        .collect()
}

/// Bins the ensemble trace into `bins` log-spaced distance bins over
/// `window = (d_min, d_max)` and regresses `log V` on `log d`.
pub fn loglog_fit(stats: &EnsembleStats, y_star: f64, window: (f64, f64), bins: usize) -> Result<ScalingFit> {
    fit_points(&trace_points(stats, y_star), window, bins)
}

/// [`loglog_fit`] on arbitrary points.
pub fn fit_points(points: &[VariancePoint], window: (f64, f64), bins: usize) -> Result<ScalingFit> {
    let (d_min, d_max) = window;
    if !(d_min > 0.0 && d_max > d_min) {
        return Err(Error::invalid(format!("fit window ({d_min}, {d_max}) must satisfy 0 < d_min < d_max")));
    }
    if bins < MIN_BINS {
        return Err(Error::invalid(format!("need at least {MIN_BINS} bins, got {bins}")));
    }
    let (lo, hi) = (d_min.ln(), d_max.ln());
    let width = (hi - lo) / bins as f64;
    // tolerate rounding for points placed exactly on the window edges
    let slack = 1e-9 * width;
    let mut acc = vec![(0.0, 0.0, 0.0, 0usize, 0usize); bins];
    for p in points {
        let ld = p.distance.ln();
        if !(ld >= lo - slack && ld <= hi + slack) {
            continue;
        }
        if !(p.variance > 0.0) {
            return Err(Error::Data(format!(
                "non-positive variance {} at distance {}",
                p.variance, p.distance
            )));
        }
        let i = (((ld - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        let a = &mut acc[i];
        a.0 += ld;
        a.1 += p.variance.ln();
        if let Some(se) = p.se {
            a.2 += se;
            a.4 += 1;
        }
        a.3 += 1;
    }
    let bins: Vec<Bin> = acc
        .into_iter()
        .filter(|a| a.3 > 0)
        .map(|(sld, sv, sse, n, nse)| {
            // geometric means, so exact power laws survive binning
            let log_var = sv / n as f64;
            let log_d = sld / n as f64;
            Bin {
                log_d,
                log_var,
                distance: log_d.exp(),
                variance: log_var.exp(),
                // records within a bin are strongly correlated, so the mean SE is kept
                se: (nse == n).then(|| sse / n as f64),
                count: n,
            }
        })
        .collect();
    if bins.len() < MIN_BINS {
        return Err(Error::InsufficientData(format!(
            "{} non-empty bins in window ({d_min}, {d_max}); need {MIN_BINS}",
            bins.len()
        )));
    }

    let xs: Vec<f64> = bins.iter().map(|b| b.log_d).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.log_var).collect();
    let ols = Ols::fit(&xs, &ys);
    let t = StudentsT::new(0.0, 1.0, (bins.len() - 2) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY);
    let ci = (ols.slope - t * ols.slope_se, ols.slope + t * ols.slope_se);

    // horizontal-asymptote check on the linear scale
    let ds: Vec<f64> = bins.iter().map(|b| b.distance).collect();
    let vs: Vec<f64> = bins.iter().map(|b| b.variance).collect();
    let lin = Ols::fit(&ds, &vs);
    let nearest = bins.iter().min_by(|a, b| a.distance.total_cmp(&b.distance)).unwrap();
    let se_near = nearest.se.unwrap_or(0.0);
    let within = (nearest.variance - lin.intercept).abs() <= 3.0 * (se_near * se_near + lin.intercept_se * lin.intercept_se).sqrt();
    let verdict = if ols.slope.abs() < BOUNDED_SLOPE && within {
        Verdict::Bounded
    } else {
        Verdict::Diverging
    };

    Ok(ScalingFit {
        slope: ols.slope,
        intercept: ols.intercept,
        window,
        n_points: bins.len(),
        r_squared: ols.r_squared,
        slope_se: ols.slope_se,
        ci,
        theoretical_exponent: None,
        verdict,
        asymptote: lin.intercept,
        bins,
    })
}

struct Ols {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    intercept_se: f64,
    r_squared: f64,
}

impl Ols {
    fn fit(x: &[f64], y: &[f64]) -> Self {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let s2 = if x.len() > 2 { sse / (n - 2.0) } else { 0.0 };
        // a response that is constant up to rounding is fitted perfectly by a flat line
        let r_squared = if syy > 1e-24 * n * (1.0 + my * my) {
            (1.0 - sse / syy).clamp(0.0, 1.0)
        } else {
            1.0
        };
        Self {
            slope,
            intercept,
            slope_se: (s2 / sxx).sqrt(),
            intercept_se: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
            r_squared,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryComparison {
    pub slope: f64,
    pub theory: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// White-noise bifurcation whose exponent the slope also matches, if any.
    pub white_reading: Option<Bifurcation>,
    /// Set when reading the slope with a white-noise table would name the
    /// wrong bifurcation or reject the right one.
    pub misclassified_under_white: bool,
    /// `(log d, log V - theory line)` per bin, the theory line passing through
    /// the bins' centroid.
    pub residuals: Vec<(f64, f64)>,
}

impl fmt::Display for TheoryComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slope {:.4} vs theory {:.4} (|diff| {:.4}, tol {:.4}): {}",
            self.slope,
            self.theory,
            self.deviation,
            self.tolerance,
            if self.pass { "pass" } else { "fail" }
        )?;
        if self.misclassified_under_white {
            match self.white_reading {
                Some(b) => write!(f, "; white-noise assumption would misclassify (reads as {b})")?,
                None => write!(f, "; white-noise assumption would misclassify")?,
            }
        }
        Ok(())
    }
}

pub fn compare_to_theory(fit: &ScalingFit, noise: &NoiseSpec, bifurcation: Bifurcation, tolerance: f64) -> TheoryComparison {
    let theory = scaling_exponent(noise, bifurcation);
    let deviation = (fit.slope - theory).abs();
    let pass = deviation <= tolerance;
    let white_reading = Bifurcation::ALL
        .into_iter()
        .map(|b| (b, (fit.slope - scaling_exponent(&NoiseSpec::White, b)).abs()))
        .filter(|&(_, d)| d <= tolerance)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(b, _)| b);
    let misclassified_under_white =
        noise.kind() != NoiseKind::White && white_reading.is_some_and(|b| b != bifurcation || !pass);
    let n = fit.bins.len() as f64;
    let c = fit.bins.iter().map(|b| b.log_var - theory * b.log_d).sum::<f64>() / n;
    let residuals = fit.bins.iter().map(|b| (b.log_d, b.log_var - (c + theory * b.log_d))).collect();
    TheoryComparison {
        slope: fit.slope,
        theory,
        deviation,
        tolerance,
        pass,
        white_reading,
        misclassified_under_white,
        residuals,
    }
}

/// A row of the exponent table, with the Hurst index for Volterra noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    pub noise: NoiseKind,
    pub hurst: Option<f64>,
    pub bifurcation: Bifurcation,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisclassificationReport {
    /// `None` for white noise.
    pub hurst: Option<f64>,
    pub fold_exponent: f64,
    /// Other exponent-table entries with the same exponent.
    pub matches: Vec<TableEntry>,
}

impl MisclassificationReport {
    /// True when an entry with a different bifurcation shares the exponent.
    pub fn ambiguous(&self) -> bool {
        self.matches.iter().any(|m| m.bifurcation != Bifurcation::Fold)
    }
}

/// Lists the exponent-table entries indistinguishable from a fold driven by
/// noise with Hurst index `hurst` (`None` = white noise).
///
/// `hurst = 1` is accepted as the limit `alpha -> 1/2`. Volterra entries range
/// over the open interval `H' in (1/2, 1)`; a match there is reported with
/// the `H'` that produces it.
pub fn misclassification_demo(hurst: Option<f64>, tolerance: f64) -> Result<MisclassificationReport> {
    if let Some(h) = hurst {
        if !(h > 0.5 && h <= 1.0) {
            return Err(Error::invalid(format!("hurst must lie in (1/2, 1], got {h}")));
        }
    }
    let e = match hurst {
        Some(h) => -h,
        None => -0.5,
    };
    let mut matches = Vec::new();
    for b in Bifurcation::ALL {
        for (kind, ex) in [
            (NoiseKind::White, scaling_exponent(&NoiseSpec::White, b)),
            (NoiseKind::Coloured, 0.0),
        ] {
            let own = hurst.is_none() && kind == NoiseKind::White && b == Bifurcation::Fold;
            if !own && (ex - e).abs() <= tolerance {
                matches.push(TableEntry {
                    noise: kind,
                    hurst: None,
                    bifurcation: b,
                    exponent: ex,
                });
            }
        }
        // Volterra: fold gives -H', pitchfork/transcritical -2H'
        let h_match = match b {
            Bifurcation::Fold => -e,
            _ => -e / 2.0,
        };
        let own = b == Bifurcation::Fold && hurst.is_some_and(|h| (h - h_match).abs() <= tolerance);
        if h_match > 0.5 && h_match < 1.0 && !own {
            for kind in [NoiseKind::Fbm, NoiseKind::Rosenblatt] {
                matches.push(TableEntry {
                    noise: kind,
                    hurst: Some(h_match),
                    bifurcation: b,
                    exponent: e,
                });
            }
        }
    }
    Ok(MisclassificationReport {
        hurst,
        fold_exponent: e,
        matches,
    })
}
