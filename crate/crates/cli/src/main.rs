//! `obspart` command-line interface.

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use obspart_cli::args::{Cli, Command, OracleCommand};
use obspart_cli::report::Timing;
use obspart_cli::run::{self, write_file, Csv, Outcome};

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body = ErrorReport {
        error: ErrorBody { kind, message },
    };
    let text = serde_json::to_string(&body).unwrap_or_else(|_| String::from("{}"));
    eprintln!("{text}");
    ExitCode::from(code)
}

fn dispatch(command: &Command) -> obspart::Result<Outcome> {
    match command {
        Command::Sysinfo(a) => run::sysinfo(a),
        Command::Gramian(a) => run::gramian(a),
        Command::Partition(a) => run::partition(a, false),
        Command::Place(a) => run::place(a, false),
        Command::BaselineSpectral(a) => run::baseline_spectral(a),
        Command::Modularity(a) => run::modularity_cmd(a),
        Command::VerifyKf(a) => run::verify_kf(a),
        Command::Oracle(OracleCommand::Partition(a)) => run::partition(a, true),
        Command::Oracle(OracleCommand::Place(a)) => run::place(a, true),
        Command::Oracle(OracleCommand::Check(a)) => run::oracle_check(a),
        Command::SweepKappa(a) => run::sweep(a),
    }
}

fn csv_text(csv: &Csv) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&csv.header)?;
    for row in &csv.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.render().to_string().trim_end().to_string(), 2);
        }
    };

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => return fail("usage", format!("cannot start {} threads: {e}", cli.threads), 2),
    };
    let start = Instant::now();
    let outcome = match pool.install(|| dispatch(&cli.command)) {
        Ok(o) => o,
        Err(e) => {
            let code = if matches!(e, obspart::Error::Io { .. }) { 1 } else { 2 };
            return fail(e.kind(), e.to_string(), code);
        }
    };
    let mut report = outcome.report;
    if cli.timing {
        report.timing = Some(Timing {
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let text = match serde_json::to_string_pretty(&report) {
        Ok(t) => t + "\n",
        Err(e) => return fail("serialize", e.to_string(), 1),
    };
    let written = match &cli.out {
        Some(path) => write_file(path, &text).map_err(|e| e.to_string()),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        return fail("io", msg, 1);
    }

    if let (Some(path), Some(csv)) = (&cli.emit_csv, &outcome.csv) {
        let body = match csv_text(csv) {
            Ok(b) => b,
            Err(e) => return fail("io", e.to_string(), 1),
        };
        if let Err(e) = write_file(path, &body) {
            return fail("io", e.to_string(), 1);
        }
    }
    ExitCode::SUCCESS
}
