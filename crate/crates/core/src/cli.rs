//! The `scdebug` command line. Exit status: 0 clean, 1 findings, 2 errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::annotator::{annotate, AnnotationConfig};
use crate::checker::{check_all, CheckConfig, DEFAULT_MAX_EDITS};
use crate::dsl::{parse_domain_theory, parse_sc, parse_sd_with_theory, print_sc_with_notes};
use crate::model::{DomainTheory, NoLoop, SequenceDiagram, Statechart};
use crate::report::{export_dot, render_json, render_text, AnnotationSummary, ReportBundle};
use crate::synthesizer::{nondeterminism_warnings, synthesize, SynthError};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "scdebug",
    version,
    about = "Debug sequence diagrams against a domain theory and statecharts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate diagrams with state vectors and report conflicts.
    Annotate(Common),
    /// Synthesize one statechart per object from conflict-free diagrams.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Directory for the generated .sc files.
        #[arg(short = 'o', long = "out", value_name = "DIR")]
        out: PathBuf,
        /// Also write a .dot file per chart into this directory.
        #[arg(long, value_name = "DIR")]
        dot: Option<PathBuf>,
    },
    /// Replay diagrams on statecharts and search for minimal repairs.
    Check {
        #[command(flatten)]
        common: Common,
        /// Statechart files; the chart belongs to the object named in its
        /// `statechart` header, or to the file stem.
        #[arg(long = "chart", value_name = "SC", required = true)]
        charts: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_EDITS)]
        max_edits: usize,
        /// Unknown state variables fail guards.
        #[arg(long)]
        strict_guards: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "DT")]
    pub theory: PathBuf,
    /// Sequence diagram files.
    #[arg(value_name = "SD", required = true)]
    pub sds: Vec<PathBuf>,
    /// Machine-readable report.
    #[arg(long)]
    pub json: bool,
    /// Assume no loop between messages i and j (repeatable).
    #[arg(long = "no-loop", value_name = "I:J", value_parser = parse_no_loop)]
    pub no_loops: Vec<NoLoop>,
}

fn parse_no_loop(s: &str) -> Result<NoLoop, String> {
    let (a, b) = s.split_once(':').ok_or("expected I:J")?;
    let num = |x: &str| -> Result<usize, String> {
        x.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| format!("`{x}` is not a message number"))
    };
    Ok(NoLoop::new(num(a)?, num(b)?))
}

#[derive(Debug)]
pub struct CliError(pub String);

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn load_theory(path: &Path) -> Result<DomainTheory, CliError> {
    parse_domain_theory(&read(path)?).map_err(|e| CliError(e.with_file(path.display().to_string()).to_string()))
}

fn load_sds(common: &Common, dt: &DomainTheory) -> Result<Vec<SequenceDiagram>, CliError> {
    common
        .sds
        .iter()
        .map(|p| {
            let mut sd = parse_sd_with_theory(&read(p)?, dt)
                .map_err(|e| CliError(e.with_file(p.display().to_string()).to_string()))?;
            if sd.name.is_empty() {
                sd.name = stem(p);
            }
            Ok(sd)
        })
        .collect()
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn annotation_config(common: &Common) -> AnnotationConfig {
    AnnotationConfig {
        no_loops: common.no_loops.clone(),
        ..Default::default()
    }
}

/// Annotate every diagram into a bundle.
fn annotate_all(common: &Common, dt: &DomainTheory, sds: &[SequenceDiagram]) -> Result<ReportBundle, CliError> {
    let cfg = annotation_config(common);
    let mut bundle = ReportBundle::default();
    for (sd, path) in sds.iter().zip(&common.sds) {
        let a = annotate(sd, dt, &cfg).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
        let summary = AnnotationSummary::of(&a, dt);
        for &id in &summary.unspecified {
            let m = sd.message(id).unwrap();
            bundle.warnings.push(format!(
                "{}: message {id} \"{}\" has no specification",
                sd.name,
                m.text()
            ));
        }
        bundle.annotations.push(summary);
        bundle.conflicts.extend(a.conflicts);
    }
    Ok(bundle)
}

fn emit(out: &mut dyn Write, bundle: &ReportBundle, json: bool) -> Result<(), CliError> {
    let text = if json { render_json(bundle) } else { render_text(bundle) };
    out.write_all(text.as_bytes()).map_err(|e| CliError(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

pub fn cmd_annotate(common: &Common, out: &mut dyn Write) -> Result<i32, CliError> {
    let dt = load_theory(&common.theory)?;
    let sds = load_sds(common, &dt)?;
    let bundle = annotate_all(common, &dt, &sds)?;
    emit(out, &bundle, common.json)?;
    Ok(if bundle.conflicts.is_empty() {
        EXIT_CLEAN
    } else {
        EXIT_FINDINGS
    })
}

pub fn cmd_synth(common: &Common, dir: &Path, dot: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let dt = load_theory(&common.theory)?;
    let sds = load_sds(common, &dt)?;
    let mut bundle = annotate_all(common, &dt, &sds)?;
    if !bundle.conflicts.is_empty() {
        emit(out, &bundle, common.json)?;
        return Ok(EXIT_FINDINGS);
    }
    let charts = match synthesize(&dt, &sds, &annotation_config(common)) {
        Ok(c) => c,
        Err(SynthError::Conflicts(cs)) => {
            bundle.conflicts = cs;
            emit(out, &bundle, common.json)?;
            return Ok(EXIT_FINDINGS);
        }
        Err(e) => return Err(CliError(e.to_string())),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError(format!("{}: {e}", dir.display())))?;
    if let Some(d) = dot {
        std::fs::create_dir_all(d).map_err(|e| CliError(format!("{}: {e}", d.display())))?;
    }
    let mut written = Vec::new();
    for (object, c) in &charts {
        bundle.warnings.extend(nondeterminism_warnings(&c.chart));
        let path = dir.join(format!("{object}.sc"));
        write_file(&path, &print_sc_with_notes(&c.chart, &c.notes))?;
        written.push(path);
        if let Some(d) = dot {
            let path = d.join(format!("{object}.dot"));
            write_file(&path, &export_dot(&c.chart))?;
            written.push(path);
        }
    }
    emit(out, &bundle, common.json)?;
    if !common.json {
        for p in written {
            writeln!(out, "wrote {}", p.display()).map_err(|e| CliError(e.to_string()))?;
        }
    }
    Ok(EXIT_CLEAN)
}

pub fn cmd_check(
    common: &Common,
    chart_paths: &[PathBuf],
    max_edits: usize,
    strict_guards: bool,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let dt = load_theory(&common.theory)?;
    let sds = load_sds(common, &dt)?;
    let mut charts: BTreeMap<String, Statechart> = BTreeMap::new();
    for p in chart_paths {
        let mut chart = parse_sc(&read(p)?).map_err(|e| CliError(e.with_file(p.display().to_string()).to_string()))?;
        if chart.name.is_empty() {
            chart.name = stem(p);
        }
        if charts.insert(chart.name.clone(), chart).is_some() {
            return Err(CliError(format!("{}: a second chart for the same object", p.display())));
        }
    }
    let cfg = CheckConfig {
        strict_guards,
        annotation: annotation_config(common),
    };
    let mut bundle = ReportBundle::default();
    for sd in &sds {
        let a = annotate(sd, &dt, &cfg.annotation).map_err(|e| CliError(format!("{}: {e}", sd.name)))?;
        bundle.annotations.push(AnnotationSummary::of(&a, &dt));
    }
    bundle.checks = check_all(&dt, &charts, &sds, max_edits, &cfg);
    for c in charts.values() {
        bundle.warnings.extend(nondeterminism_warnings(c));
    }
    bundle.sds = sds;
    emit(out, &bundle, common.json)?;
    let rejected = bundle.checks.iter().any(|c| !c.trace.accepted());
    Ok(if rejected { EXIT_FINDINGS } else { EXIT_CLEAN })
}

/// Parse arguments and run; returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_CLEAN };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Annotate(common) => cmd_annotate(common, out),
        Command::Synth { common, out: dir, dot } => cmd_synth(common, dir, dot.as_deref(), out),
        Command::Check {
            common,
            charts,
            max_edits,
            strict_guards,
        } => cmd_check(common, charts, *max_edits, *strict_guards, out),
    };
    match result {
        Ok(code) => code,
        Err(CliError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}
