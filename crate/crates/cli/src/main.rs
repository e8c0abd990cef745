use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rcmdp_cli::{run_experiment, verify, CliError, RunConfig, Variant, VerifyOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    All,
    Nonrobust,
    Robust,
    RobustConstrained,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::All => Variant::ALL.to_vec(),
            VariantArg::Nonrobust => vec![Variant::Nonrobust],
            VariantArg::Robust => vec![Variant::Robust],
            VariantArg::RobustConstrained => vec![Variant::RobustConstrained],
        }
    }
}

/// Robust constrained policy gradient experiments on tabular MDPs.
#[derive(Debug, Parser)]
#[command(name = "rcmdp", version)]
struct Args {
    /// JSON run config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantArg,
    /// Added to every configured seed.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed_offset: u64,
    /// Output directory; overrides the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run the oracle self-checks instead of the experiment.
    #[arg(long)]
    verify: bool,
    /// With --verify: an ambiguity-set JSON file to validate.
    #[arg(long, value_name = "PATH", requires = "verify")]
    ambiguity: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), CliError> {
    if args.verify {
        let mut options = VerifyOptions { ambiguity: args.ambiguity, seed: args.seed_offset, ..Default::default() };
        if let Some(path) = &args.config {
            options.environment = RunConfig::load(path)?.environment;
        }
        let report = verify(&options);
        for line in report.lines() {
            println!("{line}");
        }
        return match report.failures() {
            0 => Ok(()),
            n => Err(CliError::Verification(n)),
        };
    }

    let path = args.config.ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut config = RunConfig::load(&path)?;
    for seed in &mut config.seeds {
        *seed = seed
            .checked_add(args.seed_offset)
            .ok_or_else(|| CliError::Usage("seed offset overflows".into()))?;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    let summary = run_experiment(&config, &args.variant.variants())?;
    for v in &summary.variants {
        println!(
            "{:<20} true return {:>10.3}  worst-case return {:>10.3}  within budget {:>5.1}%",
            v.variant.name(),
            v.mean_true_return,
            v.mean_worst_case_return,
            100.0 * v.fraction_within_tolerance
        );
    }
    println!("results written to {}", config.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
