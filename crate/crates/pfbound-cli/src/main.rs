//! CLI driver for the convergence experiments, bound tables, and KLE info.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pfbound::bounds::{c21, c21_sharp, c22, c4, DiscretizationSpec};
use pfbound::experiments::{run_experiment, ConvergenceTable, HighDimVariant, RunConfig};
use pfbound::fem1d::Degree;
use pfbound::kle::build_kle;
use pfbound::normal::std_normal_quantile;
use pfbound::ode::SchemeKind;

#[derive(Parser)]
#[command(name = "pfbound", version, about = "Rare-event failure probabilities for discretized models: convergence experiments and a-priori error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Euler,
    CrankNicolson,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    /// output path; stdout when omitted
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Scalar-ODE convergence study (explicit Euler / Crank-Nicolson)
    OdeExperiment {
        #[arg(long, value_enum, default_value = "euler")]
        scheme: SchemeArg,
        /// inclusive level range a..b with h = 2^-level
        #[arg(long, default_value = "0..9")]
        levels: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Two-parameter boundary-value-problem study (linear/quadratic elements)
    Bvp2dExperiment {
        #[arg(long, default_value_t = 1)]
        degree: u8,
        #[arg(long, default_value = "1..9")]
        levels: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Log-normal diffusion study with SIS (10- or 50-dimensional)
    HighdimExperiment {
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value = "1..11")]
        levels: String,
        /// SIS samples per replicate
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// SIS replicates per level
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// replicates for the h = 2^-12 reference (defaults to --replicates)
        #[arg(long)]
        ref_replicates: Option<usize>,
        #[arg(long, default_value_t = 0.25)]
        target_cov: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Grids of the Lipschitz-bound constants and the dimension factor C4
    BoundsTable {
        #[command(flatten)]
        output: OutputArgs,
    },
    /// KLE spectrum: mode index, eigenvalue, cumulative variance fraction
    KleInfo {
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        terms: usize,
        #[arg(long, default_value_t = 0.1)]
        mean: f64,
        #[arg(long, default_value_t = 0.2)]
        std: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn parse_levels(s: &str) -> anyhow::Result<(u32, u32)> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("levels must look like a..b, got {s:?}"))?;
    let lo: u32 = a.trim().parse().with_context(|| format!("bad level {a:?}"))?;
    let hi: u32 = b.trim().parse().with_context(|| format!("bad level {b:?}"))?;
    if lo > hi {
        bail!("empty level range {lo}..{hi}");
    }
    Ok((lo, hi))
}

#[derive(Serialize)]
struct ExperimentReport<'a> {
    config: &'a RunConfig,
    table: &'a ConvergenceTable,
}

fn emit(output: &OutputArgs, content: String) -> anyhow::Result<()> {
    match &output.out {
        Some(path) => fs::write(path, content).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn emit_experiment(output: &OutputArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let table = run_experiment(cfg)?;
    let content = match output.format {
        FormatArg::Csv => table.to_csv(),
        FormatArg::Json => {
            let mut s = serde_json::to_string_pretty(&ExperimentReport { config: cfg, table: &table })?;
            s.push('\n');
            s
        }
    };
    emit(output, content)
}

fn bounds_table_csv() -> anyhow::Result<String> {
    let mut out = String::from("table,param1,param2,x,value\n");
    // c21 and c21_sharp against P_f for sigma^2 in {0.1, 1, 10}, C_FE = 1
    for &sigma2 in &[0.1f64, 1.0, 10.0] {
        let sigma = sigma2.sqrt();
        for i in 0..=60 {
            let log_p = -10.0 + 9.698_970 * i as f64 / 60.0; // 1e-10 .. ~0.5
            let p = 10f64.powf(log_p);
            let beta = -sigma * std_normal_quantile(p)?;
            if beta <= 0.0 {
                continue;
            }
            writeln!(out, "c21,{sigma2:e},,{p:e},{:e}", c21(beta, sigma, 1.0)?)?;
            writeln!(out, "c21_sharp,{sigma2:e},,{p:e},{:e}", c21_sharp(beta, sigma, 1.0)?)?;
        }
    }
    // c22 / C_FE against h for C_FE in {0.1, 1, 10} and s in {1, 2}; beta = 4
    for &s in &[1.0, 2.0] {
        for &c_fe in &[0.1, 1.0, 10.0] {
            for i in 0..=60 {
                let h = 10f64.powf(-6.0 + 6.0 * i as f64 / 60.0);
                let spec = DiscretizationSpec::new(h, s, c_fe)?;
                match c22(4.0, 1.0, &spec) {
                    Ok(v) => writeln!(out, "c22,{s:e},{c_fe:e},{h:e},{:e}", v / c_fe)?,
                    Err(_) => break, // h beyond the validity threshold
                }
            }
        }
    }
    // c4 against n
    let mut n = 1usize;
    while n <= 10_000 {
        writeln!(out, "c4,,,{n},{:e}", c4(n)?)?;
        n = (n as f64 * 1.5).ceil() as usize;
    }
    Ok(out)
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::OdeExperiment { scheme, levels, seed, output } => {
            let kind = match scheme {
                SchemeArg::Euler => SchemeKind::ExplicitEuler,
                SchemeArg::CrankNicolson => SchemeKind::CrankNicolson,
            };
            let mut cfg = RunConfig::ode(kind);
            cfg.levels = parse_levels(&levels)?;
            cfg.seed = seed;
            emit_experiment(&output, &cfg)
        }
        Command::Bvp2dExperiment { degree, levels, seed, output } => {
            let deg = match degree {
                1 => Degree::Linear,
                2 => Degree::Quadratic,
                other => bail!("--degree must be 1 or 2, got {other}"),
            };
            let mut cfg = RunConfig::bvp2d(deg);
            cfg.levels = parse_levels(&levels)?;
            cfg.seed = seed;
            emit_experiment(&output, &cfg)
        }
        Command::HighdimExperiment {
            dim,
            levels,
            samples,
            replicates,
            ref_replicates,
            target_cov,
            seed,
            output,
        } => {
            let variant = match dim {
                10 => HighDimVariant::Dim10,
                50 => HighDimVariant::Dim50,
                other => bail!("--dim must be 10 or 50, got {other}"),
            };
            let mut cfg = RunConfig::highdim(variant);
            cfg.levels = parse_levels(&levels)?;
            cfg.samples = samples;
            cfg.replicates = replicates;
            cfg.ref_replicates = ref_replicates;
            cfg.target_cov = target_cov;
            cfg.seed = seed;
            emit_experiment(&output, &cfg)
        }
        Command::BoundsTable { output } => {
            let csv = bounds_table_csv()?;
            let content = match output.format {
                FormatArg::Csv => csv,
                FormatArg::Json => {
                    #[derive(Serialize)]
                    struct Row<'a> {
                        table: &'a str,
                        param1: Option<f64>,
                        param2: Option<f64>,
                        x: f64,
                        value: f64,
                    }
                    let rows: Vec<Row> = csv
                        .lines()
                        .skip(1)
                        .map(|l| {
                            let mut it = l.split(',');
                            let table = it.next().unwrap_or("");
                            let param1 = it.next().and_then(|v| v.parse().ok());
                            let param2 = it.next().and_then(|v| v.parse().ok());
                            let x = it.next().and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
                            let value = it.next().and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
                            Row { table, param1, param2, x, value }
                        })
                        .collect();
                    let mut s = serde_json::to_string_pretty(&rows)?;
                    s.push('\n');
                    s
                }
            };
            emit(&output, content)
        }
        Command::KleInfo { lambda, terms, mean, std, output } => {
            let kle = build_kle(mean, std, lambda, terms)?;
            let mut csv = String::from("m,nu,cumulative_fraction\n");
            let mut cum = 0.0;
            for m in 1..=terms {
                cum += kle.eigenvalue(m);
                writeln!(csv, "{m},{:e},{:e}", kle.eigenvalue(m), cum)?;
            }
            let content = match output.format {
                FormatArg::Csv => csv,
                FormatArg::Json => {
                    #[derive(Serialize)]
                    struct Mode {
                        m: usize,
                        nu: f64,
                        cumulative_fraction: f64,
                    }
                    let mut cum = 0.0;
                    let rows: Vec<Mode> = (1..=terms)
                        .map(|m| {
                            cum += kle.eigenvalue(m);
                            Mode { m, nu: kle.eigenvalue(m), cumulative_fraction: cum }
                        })
                        .collect();
                    let mut s = serde_json::to_string_pretty(&rows)?;
                    s.push('\n');
                    s
                }
            };
            emit(&output, content)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
