use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsretract_cli::commands::{self, Globals, Outputs};
use bsretract_cli::suite::SuiteConfig;

#[derive(Parser, Debug)]
#[command(name = "bsretract", version, about = "Kempf-Ness flow and unitary retraction of Baumslag-Solitar representations")]
struct Cli {
    #[command(flatten)]
    globals: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flow stops once the moment map norm is at most tol·(1 + energy)
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,

    /// Iteration budget of the flow
    #[arg(long, global = true, default_value_t = 100_000)]
    max_iter: usize,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Work in SL_n: traceless moment map, determinant-one inputs
    #[arg(long, global = true)]
    sl: bool,

    /// Print the report document (manifest and diagnostics) on stdout
    #[arg(long, global = true)]
    json: bool,

    /// Write (t, residual, unitarity_defect_A) for each retraction sample
    #[arg(long, global = true, value_name = "FILE")]
    path_csv: Option<PathBuf>,

    /// Write (iter, energy, moment_norm, step) for each flow step
    #[arg(long, global = true, value_name = "FILE")]
    trace_csv: Option<PathBuf>,

    /// Write the run manifest here instead of to stderr
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RepIo {
    /// Representation JSON, or - for stdin
    #[arg(long, short, value_name = "FILE")]
    input: PathBuf,

    /// Endpoint representation JSON (default: stdout)
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Report document with manifest and diagnostics
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the cyclic orbits that make up low-dimensional representations
    Census {
        #[arg(long, allow_hyphen_values = true)]
        p: i64,
        #[arg(long, allow_hyphen_values = true)]
        q: i64,
        #[arg(long, default_value_t = 1)]
        n_max: usize,
        /// Orbit records as JSON lines (default: stdout)
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
        /// (k, N, count) summary (default: stderr)
        #[arg(long, value_name = "FILE")]
        summary_csv: Option<PathBuf>,
    },
    /// Build a random representation from census blocks
    Construct {
        #[arg(long, allow_hyphen_values = true)]
        p: i64,
        #[arg(long, allow_hyphen_values = true)]
        q: i64,
        #[arg(long)]
        n: usize,
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Flow a representation to the Kempf-Ness set
    Flow(RepIo),
    /// Retract a representation with unitary B to its unitary polar part
    Retract(RepIo),
    /// Flow, compactify and retract
    Pipeline(RepIo),
    /// Report the finite-order and normality structure of a representation
    Verify {
        #[arg(long, short, value_name = "FILE")]
        input: PathBuf,
        /// Report document (default: stdout)
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Sweep random representations over a grid through the pipeline
    Suite {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3,-2,-1,1,2,3")]
        p_list: Vec<i64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3,-2,-1,1,2,3")]
        q_list: Vec<i64>,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        /// Seeds per grid point
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Skip re-running the pipeline on each endpoint
        #[arg(long)]
        no_idempotence: bool,
        /// Suite report JSON (default: stdout)
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = cli.globals;
    let globals = Globals {
        tol: g.tol,
        max_iter: g.max_iter,
        seed: g.seed,
        sl: g.sl,
        json: g.json,
        path_csv: g.path_csv,
        trace_csv: g.trace_csv,
        manifest: g.manifest,
    };
    let rep_outputs = |io: &RepIo| Outputs {
        out: io.out.clone(),
        report: io.report.clone(),
    };
    let exit = match cli.command {
        Command::Census {
            p,
            q,
            n_max,
            out,
            summary_csv,
        } => commands::census(p, q, n_max, out.as_deref(), summary_csv.as_deref(), &globals),
        Command::Construct { p, q, n, out, report } => commands::construct(p, q, n, &Outputs { out, report }, &globals),
        Command::Flow(io) => commands::flow_cmd(&io.input, &rep_outputs(&io), &globals),
        Command::Retract(io) => commands::retract(&io.input, &rep_outputs(&io), &globals),
        Command::Pipeline(io) => commands::pipeline(&io.input, &rep_outputs(&io), &globals),
        Command::Verify { input, report } => commands::verify(&input, report.as_deref(), &globals),
        Command::Suite {
            p_list,
            q_list,
            n_max,
            seeds,
            no_idempotence,
            report,
        } => {
            let mut cfg = SuiteConfig::product(&p_list, &q_list, n_max, seeds, globals.pipeline_config());
            cfg.check_idempotence = !no_idempotence;
            commands::suite(&cfg, report.as_deref(), &globals)
        }
    };
    ExitCode::from(exit.code() as u8)
}
