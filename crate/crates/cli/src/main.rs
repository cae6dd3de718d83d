use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sigspace::forms::SignatureMethod;

mod commands;
mod report;

use report::{write_json, CliError, CliResult, Report};

/// Scalar products of fixed signature: invariant geometry, measures and
/// projective state families.
#[derive(Debug, Parser)]
#[command(name = "sigspace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Signature (p, q) of a form.
    Signature {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "auto")]
        method: SignatureMethod,
        /// Relative degeneracy threshold.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Natural metric Q (or Q^a with --a) at a form.
    Metric {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Density of the invariant measure at a form.
    Density {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A group element carrying one form to another.
    Witness {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
        #[arg(long)]
        positive_det: bool,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo integral of a configured integrand over a box.
    Mc {
        #[arg(long, alias = "in")]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Ceiling on the standard error.
        #[arg(long)]
        tol: Option<f64>,
        /// Writes a convergence sweep as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compares an integral with its transform under a group element.
    Invariance {
        #[arg(long, alias = "in")]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deforms a metric field so that it takes the target value at the
    /// center. The report goes to stdout, the deformed grid to --out.
    Deform {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        center: u64,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residuals of the projective family over a random state field.
    ProjectiveDemo {
        #[arg(long, default_value_t = 3)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        rescale_c: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the acceptance battery.
    Suite {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SIGSPACE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::new("InvalidArgument", format!("SIGSPACE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new("InvalidArgument", e.to_string()))
}

/// Runs the command; the second element is the file the report is copied
/// to, if any.
fn dispatch(command: Command) -> CliResult<(Report, Option<PathBuf>)> {
    use Command::*;
    Ok(match command {
        Signature { input, method, tol, out } => (commands::signature(&input, method, tol)?, out),
        Metric { input, a, tol, out } => (commands::metric(&input, a, tol)?, out),
        Density { input, tol, out } => (commands::density_task(&input, tol)?, out),
        Witness { from, to, positive_det, tol, out } => (commands::witness(&from, &to, positive_det, tol)?, out),
        Mc { config, seed, samples, tol, csv, out } => {
            (commands::mc(&config, seed, samples, tol, csv.as_deref())?, out)
        }
        Invariance { config, seed, samples, out } => (commands::invariance(&config, seed, samples)?, out),
        Deform { grid, center, target, tol, out } => {
            (commands::deform(&grid, center, &target, out.as_deref(), tol)?, None)
        }
        ProjectiveDemo { points, dim, seed, rescale_c, out } => {
            (commands::projective_demo(points, dim, seed, rescale_c)?, out)
        }
        Suite { seed, out } => (commands::suite(seed)?, out),
    })
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn fail(e: &CliError) -> ExitCode {
    emit(&e.to_json().to_string());
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::new("Usage", e.render().to_string().trim_end())),
    };
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    let start = Instant::now();
    let (report, out) = match dispatch(cli.command) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let pass = report.pass();
    let json = report.finish(start.elapsed().as_secs_f64());
    if let Some(path) = out {
        if let Err(e) = write_json(&path, &json) {
            return fail(&e);
        }
    }
    emit(&serde_json::to_string_pretty(&json).expect("report serializes"));
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
