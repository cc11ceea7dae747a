use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mipool::cli::{cmd_pool_chisq, cmd_pool_f, cmd_pool_tests3, cmd_pool_welch};
use mipool::pipeline::{run_growth, run_upsit, simulate, RunConfig, SimConfig, GROWTH_SEED, UPSIT_SEED};
use mipool::pooling::{ChiSqScaling, SfaVariant};
use mipool::table::Precision;
use mipool::{Error, Result};

#[derive(Parser)]
#[command(name = "mipool", version, about = "Pool F and chi-square tests across multiply imputed datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = PrecisionArg::Display)]
    precision: PrecisionArg,

    #[arg(long, global = true, value_enum, default_value_t = VariantArg::Macro)]
    chisq_scaling: VariantArg,

    #[arg(long, global = true, value_enum, default_value_t = VariantArg::Macro)]
    sfa_variant: VariantArg,

    /// Worker threads for per-imputation work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Pool fractional-form F tests (Imputation, Source, DF, MS, de_DF, MSE).
    PoolF(InputArg),
    /// Pool chi-square tests (Imputation, Source, DF, ChiSq).
    PoolChisq(InputArg),
    /// Pool Welch ANOVA tables (Imputation, Source, DF, FValue; Error rows carry γ).
    PoolWelch(InputArg),
    /// Pool Type-III tests (Imputation, Effect, NumDF, DenDF, FValue).
    PoolTests3(InputArg),
    /// Run a bundled example end to end.
    RunExample {
        #[arg(value_enum)]
        name: Example,
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Defaults to the example's own seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo rejection rate of pooled Welch ANOVA under MCAR deletion.
    Simulate(SimArgs),
}

#[derive(Args)]
struct InputArg {
    /// CSV input; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Group sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 30, 40])]
    groups: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    means: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
    sds: Vec<f64>,
    /// Probability that a response is deleted.
    #[arg(long, default_value_t = 0.2)]
    missing: f64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20240301)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Upsit,
    Growth,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Display,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Macro,
    Text,
}

impl From<VariantArg> for ChiSqScaling {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Macro => ChiSqScaling::Macro,
            VariantArg::Text => ChiSqScaling::Text,
        }
    }
}

impl From<VariantArg> for SfaVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Macro => SfaVariant::Macro,
            VariantArg::Text => SfaVariant::Text,
        }
    }
}

fn open_input(path: &Option<PathBuf>) -> Result<Box<dyn Read>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(File::open(p)?)),
        None => Box::new(io::stdin().lock()),
    })
}

fn run(cli: &Cli) -> Result<String> {
    let precision = match cli.precision {
        PrecisionArg::Display => Precision::Display,
        PrecisionArg::Full => Precision::Full,
    };
    let scaling = ChiSqScaling::from(cli.chisq_scaling);
    let variant = SfaVariant::from(cli.sfa_variant);
    match &cli.command {
        Command::PoolF(a) => cmd_pool_f(open_input(&a.input)?)?.to_csv_string(precision),
        Command::PoolChisq(a) => cmd_pool_chisq(open_input(&a.input)?, scaling)?.to_csv_string(precision),
        Command::PoolWelch(a) => cmd_pool_welch(open_input(&a.input)?)?.to_csv_string(precision),
        Command::PoolTests3(a) => {
            cmd_pool_tests3(open_input(&a.input)?, variant, scaling)?.to_csv_string(precision)
        }
        Command::RunExample { name, m, seed } => {
            let default_seed = match name {
                Example::Upsit => UPSIT_SEED,
                Example::Growth => GROWTH_SEED,
            };
            let mut config = RunConfig::new(*m, seed.unwrap_or(default_seed));
            config.jobs = cli.jobs;
            config.chisq_scaling = scaling;
            config.sfa_variant = variant;
            match name {
                Example::Upsit => run_upsit(&config)?.render(precision),
                Example::Growth => run_growth(&config)?.render(precision),
            }
        }
        Command::Simulate(s) => {
            let config = SimConfig {
                group_sizes: s.groups.clone(),
                means: s.means.clone(),
                sds: s.sds.clone(),
                missing_fraction: s.missing,
                replications: s.reps,
                m: s.m,
                seed: s.seed,
                alpha: s.alpha,
                jobs: cli.jobs,
            };
            simulate(&config)?.render(precision)
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli).and_then(|out| emit(&cli, &out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(3)
}
