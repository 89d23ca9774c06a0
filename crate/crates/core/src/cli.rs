//! Command-line front end. Reports go to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{self, FitModel, FitResult};
use crate::csvio;
use crate::expfile;
use crate::experiments::{preset, Execution, Experiment, SampleId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "polymode", version, about = "Few-photon interference in multi-degree-of-freedom photonic circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an experiment file; prints one diagnostic per line.
    Validate { path: PathBuf },
    /// Run a scan and write CSV (one file per detection trace).
    Run {
        /// Experiment file.
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        path: Option<PathBuf>,
        /// Built-in experiment: sample1, sample2, sample3 or sample4.
        #[arg(long)]
        preset: Option<String>,
        /// Output CSV. With several traces, writes `<stem>_<trace>.csv` next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the experiment.
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate scan points on one thread (output is identical).
        #[arg(long)]
        serial: bool,
    },
    /// Fit a scan CSV and print `name value sigma` lines.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "triangle")]
        model: FitModel,
        /// Accidental coincidence rate (counts/s) to subtract.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
        /// Reduced chi-square above which the fit is flagged (exit 3).
        #[arg(long, default_value_t = 3.0)]
        max_chi2: f64,
    },
    /// Print a built-in experiment in file form.
    Preset { name: String },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match cli.command {
        Command::Validate { path } => cmd_validate(&path, err),
        Command::Run { path, preset, out: out_path, seed, serial } => {
            cmd_run(path.as_deref(), preset.as_deref(), &out_path, seed, serial, err)
        }
        Command::Fit { csv, model, background, max_chi2 } => cmd_fit(&csv, model, background, max_chi2, out, err),
        Command::Preset { name } => match name.parse::<SampleId>() {
            Ok(id) => {
                let _ = out.write_all(expfile::serialize(&preset(id)).as_bytes());
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(err, "{e}");
                EXIT_INVALID
            }
        },
    }
}

fn load(path: &Path, err: &mut dyn Write) -> Result<Experiment, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        let _ = writeln!(err, "{}: {e}", path.display());
        EXIT_IO
    })?;
    expfile::parse(&text).map_err(|errors| {
        for e in errors.0 {
            let _ = writeln!(err, "{}:{e}", path.display());
        }
        EXIT_INVALID
    })
}

pub fn cmd_validate(path: &Path, err: &mut dyn Write) -> i32 {
    let exp = match load(path, err) {
        Ok(e) => e,
        Err(code) => return code,
    };
    let issues = exp.validate();
    for i in &issues {
        let _ = writeln!(err, "{i}");
    }
    if issues.is_empty() {
        EXIT_OK
    } else {
        EXIT_INVALID
    }
}

fn trace_path(out: &Path, trace: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scan".into());
    out.with_file_name(format!("{stem}_{trace}.csv"))
}

pub fn cmd_run(
    path: Option<&Path>,
    preset_name: Option<&str>,
    out: &Path,
    seed: Option<u64>,
    serial: bool,
    err: &mut dyn Write,
) -> i32 {
    let mut exp = match (path, preset_name) {
        (_, Some(name)) => match name.parse::<SampleId>() {
            Ok(id) => preset(id),
            Err(e) => {
                let _ = writeln!(err, "{e}");
                return EXIT_INVALID;
            }
        },
        (Some(p), None) => match load(p, err) {
            Ok(e) => e,
            Err(code) => return code,
        },
        (None, None) => {
            let _ = writeln!(err, "give an experiment file or --preset");
            return EXIT_INVALID;
        }
    };
    if let Some(s) = seed {
        exp.scan.seed = s;
    }
    let issues = exp.validate();
    if !issues.is_empty() {
        for i in &issues {
            let _ = writeln!(err, "{i}");
        }
        return EXIT_INVALID;
    }
    let execution = if serial { Execution::Serial } else { Execution::Parallel };
    let results = match exp.run(execution) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_INVALID;
        }
    };
    let single = results.len() == 1;
    for (name, scan) in &results {
        let target = if single { out.to_path_buf() } else { trace_path(out, name) };
        let text = csvio::write_scan(scan, exp.scan.seed, &exp.name, name);
        if let Err(e) = fs::write(&target, text) {
            let _ = writeln!(err, "{}: {e}", target.display());
            return EXIT_IO;
        }
    }
    EXIT_OK
}

fn print_fit(out: &mut dyn Write, fit: &FitResult) {
    for p in &fit.params {
        let _ = writeln!(out, "{} {} {}", p.name, p.value, p.sigma);
    }
    let _ = writeln!(out, "chi2_reduced {} 0", fit.chi2_reduced);
}

pub fn cmd_fit(csv: &Path, model: FitModel, background: f64, max_chi2: f64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match fs::read_to_string(csv) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", csv.display());
            return EXIT_IO;
        }
    };
    let scan = match csvio::read_scan(&text) {
        Ok((s, _)) => s,
        Err(e) => {
            let _ = writeln!(err, "{}:{e}", csv.display());
            return EXIT_INVALID;
        }
    };
    let raw = match analysis::fit(&scan, model) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "fit failed: {e}");
            return EXIT_FIT;
        }
    };
    let corrected = match analysis::subtract_background(&scan, background) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_INVALID;
        }
    };
    let bg = if background == 0.0 {
        raw.clone()
    } else {
        match analysis::fit(&corrected, model) {
            Ok(f) => f,
            Err(e) => {
                let _ = writeln!(err, "background-subtracted fit failed: {e}");
                return EXIT_FIT;
            }
        }
    };

    match raw.orientation {
        Some(o) => {
            let _ = writeln!(out, "# model={model} orientation={o}");
        }
        None => {
            let _ = writeln!(out, "# model={model}");
        }
    }
    print_fit(out, &raw);
    let (v, s) = raw.visibility();
    let _ = writeln!(out, "V_raw {v} {s}");
    let (v, s) = bg.visibility();
    let _ = writeln!(out, "V_bg {v} {s}");

    if !(raw.chi2_reduced <= max_chi2) {
        let _ = writeln!(
            err,
            "reduced chi-square {:.3} exceeds {max_chi2}: the {model} model does not describe these data",
            raw.chi2_reduced
        );
        return EXIT_FIT;
    }
    EXIT_OK
}
