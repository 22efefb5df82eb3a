//! Runs the four Stommel cases over several seeds to show the spread of fitted slopes.
//! `cargo run --release --example seed_spread -- [seeds]`

use std::time::Instant;

use ews_core::repro::{run_case, Case};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for case in Case::ALL {
        for seed in 0..seeds {
            let t = Instant::now();
            let (r, _) = run_case(case, 0.2, seed).unwrap();
            println!("{} [{:.1}s] asym={:.3e}", r.summary(), t.elapsed().as_secs_f64(), r.fit.asymptote);
        }
    }
}
