//! Fitted exponents for every noise and normal form from frozen-y sweeps.
//! `cargo run --release --example exponent_grid -- [paths]`

use std::time::Instant;

use ews_core::analysis::{fit_points, VariancePoint};
use ews_core::models::{Bifurcation, ModelKind};
use ews_core::noise::NoiseSpec;
use ews_core::simulate::{stationary_sweep, SweepConfig};
use ews_core::theory::scaling_exponent;

fn main() {
    let ys: Vec<f64> = (0..10).map(|i| -0.4 * (0.05f64).powf(i as f64 / 9.0)).collect();
    let models = [ModelKind::Fold, ModelKind::Transcritical, ModelKind::Pitchfork];
    let paths: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let mut noises = vec![NoiseSpec::White, NoiseSpec::coloured(0.05).unwrap()];
    for h in [0.6, 0.75, 0.9] {
        noises.push(NoiseSpec::fbm(h).unwrap());
    }
    for noise in noises {
        let t = Instant::now();
        let sigma = if noise.tau().is_some() { 0.01 } else { 1e-5 };
        let cfg = SweepConfig::new(noise, sigma, ys.clone(), 1e-3, paths);
        let r = stationary_sweep(&models, &cfg).unwrap();
        for (m, pts) in models.iter().zip(&r) {
            let vp: Vec<VariancePoint> = pts.iter().map(VariancePoint::from).collect();
            let f = fit_points(&vp, (0.02, 0.4), 10).unwrap();
            let b: Bifurcation = m.bifurcation();
            println!("{noise} {} slope {:.4} theory {:.4} verdict {} minM {}", b, f.slope, scaling_exponent(&noise, b), f.verdict, pts.iter().map(|p| p.n_paths).min().unwrap());
        }
        println!("  [{:.1}s]", t.elapsed().as_secs_f64());
    }
}
