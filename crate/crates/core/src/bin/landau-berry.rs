use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use landau_berry::scenario::{self, OutputFormat, ScenarioConfig};
use landau_berry::Error;

#[derive(Parser)]
#[command(name = "landau-berry", version, about = "Berry phases and holonomies of Landau-level states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `output.path` in the config, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to `output.format` in the config.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run a scenario once per value of a numeric config leaf.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path to the leaf, e.g. `path.radius`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; an empty string gives a header-only table.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Defaults to csv.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn read_config(path: &PathBuf) -> Result<serde_json::Value, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    scenario::parse_json(&text)
}

fn parse_values(list: &str) -> Result<Vec<f64>, Error> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("sweep value {s:?}: {e}"))))
        .collect()
}

fn configured_output(doc: &serde_json::Value) -> (Option<PathBuf>, Option<OutputFormat>) {
    match ScenarioConfig::from_value(doc) {
        Ok(cfg) => (cfg.output.path.map(PathBuf::from), Some(cfg.output.format)),
        Err(_) => (None, None),
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out, result) = match cli.command {
        Command::Run { config, out, format } => {
            let doc = read_config(&config);
            let (cfg_out, cfg_format) = doc.as_ref().map(configured_output).unwrap_or((None, None));
            let out = out.or(cfg_out);
            let format = match format {
                Some(Format::Json) => OutputFormat::Json,
                Some(Format::Csv) => OutputFormat::Csv,
                None => cfg_format.unwrap_or_default(),
            };
            let text = doc.and_then(|d| scenario::run_value(&d)).and_then(|rec| match format {
                OutputFormat::Json => Ok(rec.to_json()),
                OutputFormat::Csv => rec.to_table()?.to_csv(),
            });
            (out, text)
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
            format,
        } => {
            let text = read_config(&config).and_then(|doc| {
                let table = scenario::sweep(&doc, &axis, &parse_values(&values)?)?;
                match format {
                    Some(Format::Json) => Ok(table.to_json()),
                    _ => table.to_csv(),
                }
            });
            (out, text)
        }
    };
    match result {
        Ok(text) => match emit(out.as_ref(), &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: cannot write output: {e}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            let record = scenario::to_json_string(&scenario::error_record(&e));
            if let Err(w) = emit(out.as_ref(), &record) {
                eprintln!("error: cannot write error record: {w}");
            }
            ExitCode::from(scenario::exit_code(&e) as u8)
        }
    }
}
