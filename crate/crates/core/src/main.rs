use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use traversim::harness::metrics::DEFAULT_OPS_HOURS;
use traversim::harness::{
    apply_patch, compute_metrics, load_scenario, read_log, run_scenario, run_sweep, sweep_csv,
    write_log,
};

#[derive(Parser)]
#[command(name = "traversim", about = "Rover traverse and coordination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics.
    Run {
        scenario: PathBuf,
        /// Write the event log here (default: $TRAVERSIM_LOG_DIR/<name>.jsonl
        /// when the variable is set).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Append the metrics as a CSV row (header written on creation).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Dump terrain heights and labels as CSV into this directory.
        #[arg(long)]
        export_terrain: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_OPS_HOURS)]
        ops_hours: f64,
    },
    /// Re-run a scenario across values of one dotted config path.
    Sweep {
        scenario: PathBuf,
        /// Dotted path into the scenario, e.g. gnc.v_cmd_faster or bus.latency.
        #[arg(long)]
        axis: String,
        /// Comma-separated JSON values, e.g. 0.7,1.0 or 0.5,1.0,1.5,2.0.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_OPS_HOURS)]
        ops_hours: f64,
    },
    /// Recompute metrics from an existing event log.
    Report {
        log: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_OPS_HOURS)]
        ops_hours: f64,
    },
}

fn default_log_path(name: &str) -> Option<PathBuf> {
    std::env::var_os("TRAVERSIM_LOG_DIR")
        .map(|dir| PathBuf::from(dir).join(format!("{name}.jsonl")))
}

fn append_csv(path: &PathBuf, header: &str, row: &str) -> traversim::Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

fn parse_values(raw: &[String]) -> Vec<serde_json::Value> {
    raw.iter()
        .map(|s| {
            serde_json::from_str(s)
                .unwrap_or_else(|_| serde_json::Value::String(s.clone()))
        })
        .collect()
}

fn execute(cli: Cli) -> traversim::Result<u8> {
    match cli.command {
        Command::Run {
            scenario,
            log,
            csv,
            export_terrain,
            ops_hours,
        } => {
            let sc = load_scenario(&scenario)?;
            let out = run_scenario(&sc)?;
            let metrics = compute_metrics(&out.events, ops_hours)?;
            if let Some(path) = log.or_else(|| default_log_path(&sc.name)) {
                if let Some(dir) = path.parent() {
                    if !dir.as_os_str().is_empty() {
                        std::fs::create_dir_all(dir)?;
                    }
                }
                write_log(&path, &out.events)?;
                println!("log:             {}", path.display());
            }
            if let Some(dir) = export_terrain {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("heights.csv"), out.grid.heights_csv())?;
                std::fs::write(dir.join("labels.csv"), out.grid.labels_csv())?;
            }
            if let Some(path) = csv {
                append_csv(
                    &path,
                    &traversim::harness::MetricsReport::csv_header(),
                    &metrics.csv_row(),
                )?;
            }
            print!("{}", metrics.summary());
            Ok(if metrics.collisions > 0 { 1 } else { 0 })
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            csv,
            ops_hours,
        } => {
            let sc = load_scenario(&scenario)?;
            let values = parse_values(&values);
            if values.is_empty() {
                return Err(traversim::Error::validation(
                    "sweep.values",
                    "need at least one value".to_string(),
                ));
            }
            for v in &values {
                apply_patch(&sc, &axis, v.clone())?;
            }
            let points = run_sweep(&sc, &axis, &values, ops_hours)?;
            let table = sweep_csv(&axis, &points);
            if let Some(path) = csv {
                std::fs::write(&path, &table)?;
                println!("wrote {}", path.display());
            } else {
                print!("{table}");
            }
            let worst = points.iter().map(|p| p.metrics.collisions).max().unwrap_or(0);
            Ok(if worst > 0 { 1 } else { 0 })
        }
        Command::Report { log, csv, ops_hours } => {
            let events = read_log(&log)?;
            let metrics = compute_metrics(&events, ops_hours)?;
            if let Some(path) = csv {
                append_csv(
                    &path,
                    &traversim::harness::MetricsReport::csv_header(),
                    &metrics.csv_row(),
                )?;
            }
            print!("{}", metrics.summary());
            Ok(if metrics.collisions > 0 { 1 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
