mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Args, CliError, RunConfig};
use squadsim::runner::{run_many, RunResult, CSV_HEADER};

fn trace_file_name(r: &RunResult) -> String {
    format!("{}-{}-n{}-s{}.trace", r.spec.protocol, r.spec.scenario.name(), r.spec.n, r.spec.seed)
}

/// Runs the sweep one n at a time so that memory stays bounded, writing
/// rows in (n, seed) order. Returns the number of failed runs.
fn sweep(config: &RunConfig, out: &mut dyn Write) -> Result<usize, CliError> {
    let out_err = |e| CliError::io(config.out.as_deref().unwrap_or("<stdout>".as_ref()), e);
    if let Some(dir) = &config.trace_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    writeln!(out, "{CSV_HEADER}").map_err(out_err)?;
    let mut failed = 0;
    let specs = config.specs();
    let per_n = specs.len() / config.ns.len();
    for batch in specs.chunks(per_n) {
        for result in run_many(batch) {
            let r = result.map_err(|e| CliError::Config(e.to_string()))?;
            writeln!(out, "{}", r.csv_row()).map_err(out_err)?;
            if let Some(dir) = &config.trace_dir {
                let path = dir.join(trace_file_name(&r));
                fs::write(&path, r.trace.to_string()).map_err(|e| CliError::io(&path, e))?;
            }
            if !r.passed() {
                failed += 1;
                eprintln!("FAIL {} n={} seed={}", r.spec.protocol, r.spec.n, r.spec.seed);
                if !r.report.decided() {
                    eprintln!("  not every correct process decided");
                }
                for v in &r.report.violations {
                    eprintln!("  {v}");
                }
            }
        }
    }
    out.flush().map_err(out_err)?;
    Ok(failed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out_dir = std::env::var_os("SQUADSIM_OUT").map(PathBuf::from);
    let config = match RunConfig::resolve(args, out_dir) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match &config.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                if let Err(e) = fs::create_dir_all(parent) {
                    eprintln!("error: {}", CliError::io(parent, e));
                    return ExitCode::from(2);
                }
            }
            File::create(path)
                .map_err(|e| CliError::io(path, e))
                .and_then(|f| sweep(&config, &mut BufWriter::new(f)))
        }
        None => sweep(&config, &mut io::stdout().lock()),
    };
    let total = config.specs().len();
    match outcome {
        Ok(0) => {
            eprintln!("{total} runs, all passed");
            ExitCode::SUCCESS
        }
        Ok(failed) => {
            eprintln!("{failed} of {total} runs failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
