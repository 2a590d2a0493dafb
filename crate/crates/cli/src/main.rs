use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fineq::regress::Design;
use fineq::scenario::{builtin, load_scenario, run_scenario, RunOptions, Scenario, ScenarioKind};

/// Perturbation bounds for functional-inequality constants, checked against spectral oracles.
#[derive(Parser, Debug)]
#[command(name = "fineq", version)]
struct Cli {
    /// Scenario file (TOML). Without it a built-in scenario of the subcommand's kind runs.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV / JSON / sample artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write raw Langevin samples next to the CSV.
    #[arg(long, global = true)]
    dump_samples: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Every calculator on explicit (V, F) instances, with oracle ratios.
    Bounds,
    /// Poincaré, Cheeger and Muckenhoupt oracles of explicit instances.
    Oracle,
    /// Randomized soundness sweep.
    Sweep(SweepArgs),
    /// Mollified atomic measures: gradient bound and Poincaré bound vs oracle.
    Mollify,
    /// ULA chains with autocorrelation and decay diagnostics.
    Langevin,
    /// Sparse regression posterior: gates, constructive bound, EWA estimate.
    Regress(RegressArgs),
    /// Holley–Stroock against the Lipschitz transfer on a bump grid.
    Compare,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Instances per batch.
    #[arg(long)]
    instances: Option<usize>,
    /// Keep sampling until every theorem has this many applicable rows.
    #[arg(long)]
    min_applicable: Option<usize>,
}

#[derive(Args, Debug)]
struct RegressArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// i.i.d. Gaussian design instead of orthogonal columns.
    #[arg(long)]
    iid: bool,
}

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn kind_of(c: &Command) -> ScenarioKind {
    match c {
        Command::Bounds => ScenarioKind::Bounds,
        Command::Oracle => ScenarioKind::Oracle,
        Command::Sweep(_) => ScenarioKind::SoundnessSweep,
        Command::Mollify => ScenarioKind::Mollify,
        Command::Langevin => ScenarioKind::Langevin,
        Command::Regress(_) => ScenarioKind::Regress,
        Command::Compare => ScenarioKind::Compare,
    }
}

fn apply_overrides(sc: &mut Scenario, cmd: &Command) {
    match cmd {
        Command::Sweep(a) => {
            let s = sc.sweep.get_or_insert_with(Default::default);
            if let Some(v) = a.instances {
                s.instances = v;
            }
            if let Some(v) = a.min_applicable {
                s.min_applicable = v;
            }
        }
        Command::Regress(a) => {
            let r = sc.regress.get_or_insert_with(Default::default);
            let set = |dst: &mut usize, v: Option<usize>| v.into_iter().for_each(|v| *dst = v);
            set(&mut r.n, a.n);
            set(&mut r.m, a.m);
            set(&mut r.sparsity, a.sparsity);
            if let Some(s) = a.steps {
                r.steps = s;
                r.burn_in = r.burn_in.min(s / 2);
            }
            for (dst, v) in [(&mut r.alpha, a.alpha), (&mut r.beta, a.beta), (&mut r.tau, a.tau), (&mut r.h, a.h), (&mut r.noise_sd, a.noise_sd)] {
                if let Some(v) = v {
                    *dst = v;
                }
            }
            if a.iid {
                r.design = Design::IidGaussian;
            }
        }
        _ => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = kind_of(&cli.command);
    let mut sc = match &cli.config {
        Some(p) => match load_scenario(p) {
            Ok(sc) if sc.kind == kind => sc,
            Ok(sc) => {
                eprintln!("{}:1:1: scenario kind `{}` does not match subcommand `{}`", p.display(), sc.kind.name(), kind.name());
                return ExitCode::from(EXIT_CONFIG);
            }
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => builtin(kind),
    };
    if let Some(s) = cli.seed {
        sc.seed = s;
    }
    apply_overrides(&mut sc, &cli.command);
    if let Err((key, msg)) = fineq::scenario::validate(&sc) {
        eprintln!("<command line>:1:1: {key}: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let out = match run_scenario(&sc, &RunOptions { dump_samples: cli.dump_samples }) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let dir = cli.out_dir.clone().or_else(|| sc.output.dir.clone()).unwrap_or_else(|| PathBuf::from("fineq-out"));
    let paths = match out.write(&dir, &sc.output) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: writing artifacts to {}: {e}", dir.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    if kind == ScenarioKind::Regress {
        println!("{}", serde_json::to_string_pretty(&out.summary["details"]).unwrap_or_default());
    }
    println!("{}: {} rows, {} violations", kind.name(), out.summary["rows"], out.violations);
    println!("csv: {}", paths.csv.display());
    println!("json: {}", paths.json.display());
    for p in &paths.samples {
        println!("samples: {}", p.display());
    }
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if out.violations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATIONS)
    }
}
