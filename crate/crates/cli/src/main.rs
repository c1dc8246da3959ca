//! `eqtri`: command-line front end to the laboratory.
//!
//! Table-shaped results go out as RFC-4180 CSV with a JSON run record beside
//! them (`<output>.run.json`, or stderr when writing to stdout). Single
//! documents go out as one JSON run record. Errors map onto the exit codes in
//! [`eqtri_core::reports::exit`].

mod args;
mod commands;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use eqtri_core::reports::{classify, exit, Format, RunConfig, RunReport};
use eqtri_core::Error;
use serde_json::Value;

use args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::PARSE_ERROR as u8 } else { exit::OK as u8 });
        }
    };
    let out = cli.out.clone();
    let (name, params, default_format) = commands::describe(&cli.command);
    let format = out.format.unwrap_or(default_format);
    let config = RunConfig::new(name, params, out.output.as_ref().map(|p| p.display().to_string()), format);
    let start = Instant::now();
    let result = commands::run(&cli.command);
    let elapsed = start.elapsed().as_secs_f64();
    let code = match result {
        Ok(outcome) => {
            let code = outcome.exit_code;
            let mut report = RunReport::ok(config, outcome.payload, elapsed, outcome.warnings);
            if let Some(status) = outcome.status {
                report.status = status.into();
            }
            match emit(&report, outcome.table.as_ref(), format, out.output.as_deref()) {
                Ok(()) => code,
                Err(e) => io_failure(&e),
            }
        }
        Err(err) => {
            let (code, _) = classify(&err);
            let report = RunReport::refused(config, &err, elapsed);
            eprintln!("eqtri {name}: {err}");
            // A refused table run leaves no table behind, only the record.
            let written = match format {
                Format::Json => write_json(&report, out.output.as_deref()),
                Format::Csv => write_sidecar(&report, out.output.as_deref()),
            };
            match written {
                Ok(()) => code,
                Err(e) => io_failure(&e),
            }
        }
    };
    ExitCode::from(code as u8)
}

fn io_failure(e: &Error) -> i32 {
    eprintln!("eqtri: {e}");
    exit::IO_ERROR
}

/// Header row plus string records.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn emit(report: &RunReport, table: Option<&Table>, format: Format, output: Option<&Path>) -> Result<(), Error> {
    match (format, table) {
        (Format::Csv, Some(table)) => {
            write_csv(table, output)?;
            write_sidecar(report, output)
        }
        (Format::Csv, None) => Err(Error::Format(format!(
            "{} has no tabular form; use --format json",
            report.config.subcommand
        ))),
        (Format::Json, _) => write_json(report, output),
    }
}

fn write_csv(table: &Table, output: Option<&Path>) -> Result<(), Error> {
    let sink: Box<dyn Write> = match output {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&table.header).map_err(io_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(report: &RunReport, output: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match output {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn write_sidecar(report: &RunReport, output: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    match output {
        Some(p) => fs::write(sidecar_path(p), text)?,
        None => io::stderr().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Render a JSON scalar as a CSV field.
pub fn field(v: impl Into<Value>) -> String {
    match v.into() {
        Value::Null => String::new(),
        Value::String(s) => s,
        other => other.to_string(),
    }
}
