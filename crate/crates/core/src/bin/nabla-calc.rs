use clap::{Parser, Subcommand};
use nabla_calc::scenario::{builtins, emit_report, run_scenario, Format, Overrides, Scenario};
use nabla_calc::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nabla-calc", version, about = "Run connection-calculus verification scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in scenario by name.
    Run {
        #[arg(long, required_unless_present = "list_builtins")]
        scenario: Option<PathBuf>,
        /// Directory for the report; stdout when neither this nor the scenario's `output` is set.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
        /// Grid spacing, overriding the scenario's points.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_parser = ["2", "4"])]
        fd_order: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        list_builtins: bool,
    },
}

fn threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("NABLA_CALC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("NABLA_CALC_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cmd: Command) -> Result<bool, Error> {
    let Command::Run { scenario, out, format, h, fd_order, seed, list_builtins } = cmd;
    if list_builtins {
        for (name, about) in builtins() {
            println!("{name}\t{about}");
        }
        return Ok(true);
    }
    threads()?;
    let path = scenario.expect("clap requires --scenario");
    let mut s = Scenario::load(&path)?;
    s.apply(&Overrides { h, fd_order: fd_order.map(|k| k.parse().expect("validated by clap")), seed });
    s.validate()?;
    let format: Format = format.parse()?;
    let run = run_scenario(&s)?;
    for (row, ms) in run.report.rows.iter().zip(&run.runtime_ms) {
        let verdict = if row.passed { "PASS" } else { "FAIL" };
        eprintln!("{verdict} {} measured {:.3e} bound {:.3e} ({ms:.0} ms)", row.id, row.measured, row.bound);
    }
    match out.or(s.output.as_ref().map(PathBuf::from)) {
        Some(dir) => {
            let file = emit_report(&run.report, format, &dir)?;
            eprintln!("wrote {}", file.display());
        }
        None => print!("{}", run.report.render(format)?),
    }
    Ok(run.report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
