use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperlab::coulomb::{coul_estimate, default_grid, solve_field};
use hyperlab::harness::{
    emit_plot_data, run_chain_experiment, run_counterexample_experiment, ExperimentConfig, ExperimentReport, PlotKind,
    RunMetadata,
};
use hyperlab::spectral::{sc_integral, structure_factor, SpectralEstimate};
use hyperlab::transport::{balanced_sample, wp_to_lebesgue, Method};
use hyperlab::variance::estimate_sigma;
use hyperlab::{Error, ProcessSpec, Result, RngSeed, TorusBox};

#[derive(Parser)]
#[command(name = "hyperlab", version, about = "Hyperuniformity, Coulomb energy and transport cost of 2D point processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Process spec as a JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Integer torus side.
    #[arg(long = "L")]
    side: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Entropic,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one configuration.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Normalised number variance sigma(r).
    Variance {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        replicas: usize,
        #[arg(long, default_value_t = 16)]
        centers: usize,
    },
    /// Averaged structure factor, radially binned.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        replicas: usize,
        #[arg(long, default_value_t = 1.0)]
        omega_max: f64,
    },
    /// SC integral and divergence flag of a spectrum CSV.
    Sc {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Truncated Coulomb energy per unit volume.
    Coulomb {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Field grid size; defaults to the resolution rule for eta.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 8)]
        replicas: usize,
        /// Write the first replica's field in HLGRID1 format.
        #[arg(long)]
        field_out: Option<PathBuf>,
    },
    /// Transport cost per unit volume to Lebesgue.
    Transport {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Cells per side; a multiple of L, at least 2L.
        #[arg(long)]
        grid_m: Option<usize>,
        #[arg(long, default_value_t = 8)]
        replicas: usize,
        /// Write the first replica's coupling as triplet CSV.
        #[arg(long)]
        coupling_out: Option<PathBuf>,
    },
    /// Implication-chain experiment.
    Chain(Experiment),
    /// Counter-example experiment.
    Counterexamples(Experiment),
}

#[derive(Args)]
struct Experiment {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `outputs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the config and stop.
    #[arg(long)]
    dry_run: bool,
}

fn read_spec(path: &Path) -> Result<ProcessSpec> {
    ProcessSpec::from_json(&std::fs::read_to_string(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn experiment(args: &Experiment, kind: &str) -> Result<bool> {
    let config = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if kind == "chain" { config.validate()? } else { config.validate_counter()? }
    if args.dry_run {
        println!("config ok");
        return Ok(true);
    }
    let start = Instant::now();
    let report: ExperimentReport = if kind == "chain" { run_chain_experiment(&config)? } else { run_counterexample_experiment(&config)? };
    let dir = args.out.clone().or_else(|| config.outputs.clone()).unwrap_or_else(|| PathBuf::from("results"));
    report.write(&dir)?;
    for k in PlotKind::ALL {
        match emit_plot_data(&report, k, &dir) {
            Ok(_) | Err(Error::IncompleteReport(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let meta = RunMetadata {
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    std::fs::write(dir.join(format!("{kind}.meta.json")), serde_json::to_string_pretty(&meta)?)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    for e in &report.errors {
        println!("ERROR {e}");
    }
    println!("report written to {}", dir.display());
    Ok(report.all_pass())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { common } => {
            let spec = read_spec(&common.spec)?;
            let c = spec.sample(&TorusBox::integer(common.side)?, RngSeed::new(common.seed))?;
            hyperlab::io::write_config(&c, create(&common.out)?)?;
        }
        Command::Variance { common, radii, replicas, centers } => {
            let spec = read_spec(&common.spec)?;
            let curve = estimate_sigma(&spec, &TorusBox::integer(common.side)?, &radii, replicas, centers, RngSeed::new(common.seed))?;
            curve.write_csv(create(&common.out)?)?;
        }
        Command::Spectrum { common, replicas, omega_max } => {
            let spec = read_spec(&common.spec)?;
            let est = structure_factor(&spec, &TorusBox::integer(common.side)?, replicas, omega_max, RngSeed::new(common.seed))?;
            est.write_csv(create(&common.out)?)?;
        }
        Command::Sc { input } => {
            let est = SpectralEstimate::read_csv(BufReader::new(File::open(&input)?))?;
            let sc = sc_integral(&est);
            println!("sc_integral {:.6e}\ndivergence_flag {}", sc.value, sc.divergence_flag);
        }
        Command::Coulomb { common, eta, grid, replicas, field_out } => {
            let spec = read_spec(&common.spec)?;
            let t = TorusBox::integer(common.side)?;
            let n = grid.unwrap_or_else(|| default_grid(&t, eta, 64));
            let seed = RngSeed::new(common.seed);
            let e = coul_estimate(&spec, &t, eta, replicas, n, seed)?;
            let mut w = create(&common.out)?;
            writeln!(w, "process,L,eta,grid,replicas,energy,stderr,max_div_residual")?;
            writeln!(w, "\"{}\",{},{},{},{},{:e},{:e},{:e}", e.process, e.side, e.eta, e.grid_n, e.replicas, e.mean, e.stderr, e.max_div_residual)?;
            if let Some(path) = field_out {
                let c = balanced_sample(&spec, &t, seed.replica(0))?;
                solve_field(&c, eta, n)?.grid.write_to(create(&path)?)?;
            }
        }
        Command::Transport { common, p, method, epsilon, grid_m, replicas, coupling_out } => {
            let spec = read_spec(&common.spec)?;
            let t = TorusBox::integer(common.side)?;
            let m = grid_m.unwrap_or(2 * common.side as usize);
            let method = match method {
                MethodArg::Exact => Method::ExactAssignment,
                MethodArg::Entropic => Method::Entropic,
            };
            let seed = RngSeed::new(common.seed);
            let mut w = create(&common.out)?;
            writeln!(w, "replica,cost_per_volume,relative_gap")?;
            for k in 0..replicas as u64 {
                let c = balanced_sample(&spec, &t, seed.replica(k))?;
                let r = wp_to_lebesgue(&c, m, p, method, epsilon)?;
                writeln!(w, "{k},{:e},{:e}", r.cost_per_volume, r.relative_gap)?;
                if k == 0 {
                    if let Some(path) = &coupling_out {
                        r.write_coupling_csv(create(path)?)?;
                    }
                }
            }
        }
        Command::Chain(args) => return experiment(&args, "chain"),
        Command::Counterexamples(args) => return experiment(&args, "counterexamples"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    hyperlab::configure_threads();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
