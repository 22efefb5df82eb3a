use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ews_core::analysis::{
    compare_to_theory, loglog_fit, misclassification_demo, noise_label, write_fit_report,
};
use ews_core::config::ExperimentConfig;
use ews_core::csv::{fmt_f64, fmt_opt};
use ews_core::models::{bifurcation_point, tabulate_manifold, Bifurcation, ModelKind};
use ews_core::noise::{
    generate_brownian, generate_ou, FbmGenerator, NoiseKind, NoiseSpec, OuStart, RngStream,
    RosenblattGenerator, TruncationConfig,
};
use ews_core::repro::{run_case_with, Case};
use ews_core::simulate::{EnsembleStats, Simulator};
use ews_core::theory::{scaling_exponent, v_infinity_coloured, v_infinity_volterra, v_infinity_white};
use ews_core::{Error, Result};

/// Noise generation, variance theory, fast-slow ensembles and scaling fits.
#[derive(Parser)]
#[command(name = "ews", version)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one noise path as `t,value` CSV.
    Noise(NoiseArgs),
    /// Tabulate stationary variances and the scaling exponent over a y-range.
    Theory(TheoryArgs),
    /// Tabulate the attracting branch `y,x_upper,a`.
    Manifold(ManifoldArgs),
    /// Run an ensemble and write `ensemble.csv` plus a few paths.
    Simulate(SimulateArgs),
    /// Log-log fit of an ensemble table against the exponent table.
    Fit(FitArgs),
    /// Exponent-table entries a fold under the given noise could be mistaken for.
    Ambiguity(AmbiguityArgs),
    /// Re-run one of the Stommel-Cessi cases C1..C4.
    Repro(ReproArgs),
}

#[derive(Args, Clone)]
struct NoiseOpts {
    /// white | coloured | fbm | rosenblatt
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    hurst: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Start {
    Stationary,
    Zero,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    noise: NoiseOpts,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dt: f64,
    /// Initial OU state (coloured only).
    #[arg(long, value_enum, default_value = "stationary")]
    start: Start,
    /// Rosenblatt: bound on the variance fraction lost to the left cutoff.
    #[arg(long, default_value_t = 1e-3)]
    tail_tolerance: f64,
    /// Rosenblatt: explicit left cutoff L (overrides the tail tolerance).
    #[arg(long)]
    left_cutoff: Option<f64>,
    /// Rosenblatt: memory cap for the kernel tables, in MiB.
    #[arg(long, default_value_t = 2048)]
    memory_cap_mb: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    noise: NoiseOpts,
    #[arg(long)]
    bifurcation: String,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    y_from: f64,
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    y_to: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Space the y-grid logarithmically in |y|.
    #[arg(long)]
    log: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ManifoldArgs {
    /// fold | transcritical | pitchfork | stommel
    #[arg(long, default_value = "stommel")]
    model: String,
    #[arg(long, default_value_t = 7.5)]
    eta2: f64,
    #[arg(long, allow_hyphen_values = true)]
    y_from: f64,
    #[arg(long, allow_hyphen_values = true)]
    y_to: f64,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimOverrides {
    /// Experiment file with [model], [noise], [sim] and [analysis] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    slow_rate: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[command(flatten)]
    noise: NoiseOpts,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    record_stride: Option<usize>,
    #[arg(long)]
    jump_delta: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimOverrides,
    /// Number of individual paths to write as `path_<k>.csv`.
    #[arg(long, default_value_t = 0)]
    dump_paths: usize,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Ensemble table written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    sim: SimOverrides,
    /// Bifurcation value y*; derived from the model when omitted.
    #[arg(long, allow_hyphen_values = true)]
    y_star: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["D_MIN", "D_MAX"])]
    window: Option<Vec<f64>>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AmbiguityArgs {
    /// Hurst index in (1/2, 1]; white noise when omitted.
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Args)]
struct ReproArgs {
    /// C1 | C2 | C3 | C4
    case: String,
    /// Fraction of the full path count (C1-C3: 10^4, C4: 10^3).
    #[arg(long, default_value_t = 0.2)]
    scale: f64,
    #[arg(long, default_value = "repro-out")]
    out: PathBuf,
    /// Memory cap for the Rosenblatt kernel tables (C4), in MiB.
    #[arg(long, default_value_t = 2048)]
    memory_cap_mb: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::Sizing { .. } => 4,
        _ => 2,
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Noise(a) => cmd_noise(a, cli.seed.unwrap_or(0)),
        Command::Theory(a) => cmd_theory(a),
        Command::Manifold(a) => cmd_manifold(a),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Fit(a) => cmd_fit(a, cli.seed),
        Command::Ambiguity(a) => cmd_ambiguity(a),
        Command::Repro(a) => cmd_repro(a, cli.seed.unwrap_or(0)),
    }
}

fn noise_spec(o: &NoiseOpts) -> Result<NoiseSpec> {
    let kind: NoiseKind = o.kind.as_deref().unwrap_or("white").parse()?;
    NoiseSpec::from_parts(kind, o.tau, o.hurst)
}

/// Opens `path`, or standard output when `None`, and runs `f` on it.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_err(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn cmd_noise(a: &NoiseArgs, seed: u64) -> Result<()> {
    let spec = noise_spec(&a.noise)?;
    let stream = RngStream::new(seed, 0);
    let path = match spec {
        NoiseSpec::White => generate_brownian(a.n, a.dt, &stream)?,
        NoiseSpec::Coloured { tau } => {
            let start = match a.start {
                Start::Stationary => OuStart::Stationary,
                Start::Zero => OuStart::Zero,
            };
            generate_ou(tau, a.n, a.dt, &stream, start)?
        }
        NoiseSpec::Fbm { hurst } => {
            let g = FbmGenerator::new(hurst, a.n, a.dt)?;
            eprintln!("fbm synthesis: {}", g.method());
            g.sample(&stream)
        }
        NoiseSpec::Rosenblatt { hurst } => {
            let trunc = TruncationConfig {
                left_cutoff: a.left_cutoff,
                tail_tolerance: a.tail_tolerance,
                memory_cap_bytes: a.memory_cap_mb.saturating_mul(1 << 20),
                ..TruncationConfig::default()
            };
            let g = RosenblattGenerator::new(hurst, a.n, a.dt, &trunc)?;
            eprintln!(
                "rosenblatt grid: {} cells, cutoff {:.3e}, omitted variance fraction <= {:.2e}",
                g.cells(),
                g.cutoff(),
                g.omitted_fraction_bound()
            );
            g.sample(&stream)
        }
    };
    with_output(a.out.as_deref(), |w| path.write_csv(w))
}

fn cmd_theory(a: &TheoryArgs) -> Result<()> {
    let spec = noise_spec(&a.noise)?;
    let bif: Bifurcation = a.bifurcation.parse()?;
    if a.points < 2 {
        return Err(Error::InvalidParameter("--points must be at least 2".into()));
    }
    let model = ModelKind::normal_form(bif);
    let exponent = scaling_exponent(&spec, bif);
    let mut rows = Vec::with_capacity(a.points);
    for i in 0..a.points {
        let f = i as f64 / (a.points - 1) as f64;
        let y = if a.log {
            if a.y_from * a.y_to <= 0.0 {
                return Err(Error::InvalidParameter("--log needs a y-range of one sign".into()));
            }
            a.y_from.signum() * (a.y_from.abs().ln() * (1.0 - f) + a.y_to.abs().ln() * f).exp()
        } else {
            a.y_from + (a.y_to - a.y_from) * f
        };
        let lin = ews_core::models::linearization(&model, y)?;
        let white = v_infinity_white(a.sigma, lin)?;
        let col = a.noise.tau.map(|t| v_infinity_coloured(a.sigma, t, lin)).transpose()?;
        let vol = a.noise.hurst.map(|h| v_infinity_volterra(a.sigma, h, lin)).transpose()?;
        rows.push(format!(
            "{},{},{},{},{}",
            fmt_f64(y),
            fmt_f64(white),
            fmt_opt(col),
            fmt_opt(vol),
            fmt_f64(exponent)
        ));
    }
    with_output(a.out.as_deref(), |w| {
        writeln!(w, "y,V_white,V_coloured,V_volterra,exponent")?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}"))
    })
}

fn cmd_manifold(a: &ManifoldArgs) -> Result<()> {
    let model = ModelKind::from_name(&a.model, Some(a.eta2))?;
    let table = tabulate_manifold(&model, a.y_from, a.y_to, a.points)?;
    with_output(a.out.as_deref(), |w| {
        writeln!(w, "y,x_upper,a")?;
        table
            .iter()
            .try_for_each(|(y, x, l)| writeln!(w, "{},{},{}", fmt_f64(*y), fmt_f64(*x), fmt_f64(*l)))
    })
}

/// Loads the config (or defaults) and applies command-line overrides.
fn experiment(o: &SimOverrides, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut c = match &o.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &o.model {
        c.model.kind = m.clone();
        if !m.eq_ignore_ascii_case("stommel") {
            c.model.eta2 = None;
        }
    }
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(o.eta2.map(Some) => c.model.eta2);
    set!(o.epsilon => c.model.epsilon);
    set!(o.slow_rate.map(Some) => c.model.slow_rate);
    set!(o.sigma => c.model.sigma);
    if let Some(k) = &o.noise.kind {
        c.noise.kind = k.clone();
    }
    set!(o.noise.tau.map(Some) => c.noise.tau);
    set!(o.noise.hurst.map(Some) => c.noise.hurst);
    set!(o.x0.map(Some) => c.sim.x0);
    set!(o.y0 => c.sim.y0);
    set!(o.dt => c.sim.dt);
    set!(o.t_end => c.sim.t_end);
    set!(o.n_paths => c.sim.n_paths);
    set!(o.record_stride => c.sim.record_stride);
    set!(o.jump_delta => c.sim.jump_delta);
    set!(seed => c.sim.master_seed);
    c.validate()?;
    Ok(c)
}

fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<()> {
    let exp = experiment(&a.sim, seed)?;
    let dir = a.out.clone().unwrap_or_else(|| exp.analysis.output_dir.clone());
    let sim = Simulator::new(exp.to_sim_config()?)?;
    let stats = sim.run_ensemble();
    create_dir(&dir)?;
    stats.save_csv(&dir.join("ensemble.csv"))?;
    for k in 0..a.dump_paths.min(sim.config().n_paths) {
        sim.path(k as u64).save_csv(&dir.join(format!("path_{k}.csv")))?;
    }
    let alive = stats.n_survivors.last().copied().unwrap_or(0);
    eprintln!(
        "{} paths, {} records, {} surviving at t_end; jumped paths are excluded from the variance",
        stats.n_paths,
        stats.len(),
        alive
    );
    Ok(())
}

fn cmd_fit(a: &FitArgs, seed: Option<u64>) -> Result<()> {
    let exp = experiment(&a.sim, seed)?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| io_err(&a.input, e))?;
    let stats = EnsembleStats::read_csv(&text)?;
    let model = exp.model_spec()?;
    let noise = exp.noise_spec()?;
    let y_star = match a.y_star {
        Some(y) => y,
        None => bifurcation_point(&model.kind)?.y_star,
    };
    let window = match &a.window {
        Some(w) => (w[0], w[1]),
        None => (exp.analysis.window[0], exp.analysis.window[1]),
    };
    let bins = a.bins.unwrap_or(exp.analysis.bins);
    let tol = a.tolerance.unwrap_or(exp.analysis.tolerance);
    let bif = model.kind.bifurcation();
    let fit = loglog_fit(&stats, y_star, window, bins)?.with_theory(scaling_exponent(&noise, bif));
    let cmp = compare_to_theory(&fit, &noise, bif, tol);
    let dir = a.out.clone().unwrap_or_else(|| exp.analysis.output_dir.clone());
    create_dir(&dir)?;
    let report = dir.join("fit.csv");
    with_output(Some(&report), |w| write_fit_report(w, &[(noise, bif, fit.clone())]))?;
    fit.save_plot_csv(&dir.join("loglog.csv"))?;
    println!("{} {}: {} (verdict {}, r2 {:.4})", noise_label(&noise), bif, cmp, fit.verdict, fit.r_squared);
    Ok(())
}

fn cmd_ambiguity(a: &AmbiguityArgs) -> Result<()> {
    let r = misclassification_demo(a.hurst, a.tolerance)?;
    println!("fold exponent {}", r.fold_exponent);
    if r.matches.is_empty() {
        println!("no other table entry shares it");
    }
    for m in &r.matches {
        match m.hurst {
            Some(h) => println!("  {}(H={h}) {}: {}", m.noise, m.bifurcation, m.exponent),
            None => println!("  {} {}: {}", m.noise, m.bifurcation, m.exponent),
        }
    }
    if r.ambiguous() {
        println!("ambiguous: a different bifurcation type produces the same exponent");
    }
    Ok(())
}

fn cmd_repro(a: &ReproArgs, seed: u64) -> Result<()> {
    let case: Case = a.case.parse()?;
    let trunc = TruncationConfig {
        memory_cap_bytes: a.memory_cap_mb.saturating_mul(1 << 20),
        ..TruncationConfig::default()
    };
    let (report, sim) = run_case_with(case, a.scale, seed, &trunc)?;
    report.write_outputs(Some(&sim), &a.out)?;
    println!("{}", report.summary());
    if report.comparison.misclassified_under_white {
        println!("note: {}", report.comparison);
    }
    Ok(())
}
