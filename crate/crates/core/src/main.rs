use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use mcbatch::cli::{self, BatchChoice, EstimatorChoice};
use mcbatch::{ChainMatrix, Error, Family, SelectionMethod, WindowKind};

#[derive(Parser)]
#[command(name = "mcbatch", version, about = "Batch-means covariance estimation for MCMC output")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the asymptotic covariance matrix of a chain.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        /// First CSV row is a header.
        #[arg(long)]
        header: bool,
        /// bm, obm, ft-bm, ft-obm or gobm.
        #[arg(long, default_value = "obm")]
        estimator: String,
        /// Lag window for gobm: bartlett, flat-top or tukey-hanning.
        #[arg(long)]
        window: Option<WindowKind>,
        #[arg(long, conflicts_with = "method", required_unless_present = "method")]
        b: Option<usize>,
        /// ar, np, lag, cuberoot or sqrt.
        #[arg(long)]
        method: Option<SelectionMethod>,
        #[arg(long)]
        max_order: Option<usize>,
    },
    /// Report batch sizes from one or more selection methods.
    Batchsize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        header: bool,
        #[arg(long, value_delimiter = ',', default_value = "ar,np,lag")]
        method: Vec<SelectionMethod>,
        #[arg(long, default_value = "obm")]
        family: Family,
        #[arg(long)]
        flat_top: bool,
        #[arg(long)]
        max_order: Option<usize>,
    },
    /// Simulate a VAR(1) chain and write its ground truth next to it.
    Simulate {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        header: bool,
    },
    /// Run a replication experiment from a TOML config.
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn run(command: Command) -> mcbatch::Result<Value> {
    match command {
        Command::Estimate {
            input,
            header,
            estimator,
            window,
            b,
            method,
            max_order,
        } => {
            let choice = EstimatorChoice::parse(&estimator, window)?;
            let batch = match (b, method) {
                (Some(b), None) => BatchChoice::Fixed(b),
                (None, Some(m)) => BatchChoice::Method(m),
                _ => return Err(Error::InvalidArgument("give exactly one of --b and --method".into())),
            };
            let chain = ChainMatrix::load_csv(&input, header)?;
            let mut report = cli::estimate(&chain, choice, batch, max_order)?;
            report["input"] = Value::from(input.display().to_string());
            Ok(report)
        }
        Command::Batchsize {
            input,
            header,
            method,
            family,
            flat_top,
            max_order,
        } => {
            let chain = ChainMatrix::load_csv(&input, header)?;
            Ok(cli::batchsize(&chain, &method, family, flat_top, max_order))
        }
        Command::Simulate {
            p,
            rho,
            n,
            seed,
            out,
            header,
        } => cli::simulate(p, rho, n, seed, &out, header),
        Command::Replicate {
            config,
            out_dir,
            workers,
        } => cli::replicate(&config, &out_dir, workers),
    }
}

fn fail(code: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": code, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(args.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable report"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.code(), e.to_string()),
    }
}
