use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;
use vmc_core::compiler::{compile_with, emit, CompileError, CompileOptions, CompileOutput, VmcSpec};
use vmc_core::models::{
    bundle_from_json, fit_gaussian_conjugate, fit_grouped, simulate_dataset, DesignSpec, ModelBundle, NigPrior,
    SimulationConfig, Term,
};
use vmc_core::presets::{demo_bundle, demo_data, preset, PRESET_IDS};
use vmc_core::sampling::quantity_labels;
use vmc_core::tables::{read_observed, write_observed, ObservedTable};
use vmc_core::{parse_spec, Error};

#[derive(Parser)]
#[command(name = "vmc", version, about = "Compile model-check specifications to Vega-Lite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a check specification
    Compile(CompileArgs),
    /// List the checkable quantities of a model bundle
    Quantities {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Fit a gaussian regression to observed data
    Fit(FitArgs),
    /// Simulate regional regression data as CSV
    Simulate(SimulateArgs),
    /// Compile a preset check, on the demo model unless inputs are given
    Check(CheckArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Check specification (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Fitted model bundle (JSON)
    #[arg(long)]
    bundle: PathBuf,
    /// Observed data (CSV)
    #[arg(long)]
    obs: PathBuf,
    /// Chart or frame set to write
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec seed; falls back to VMC_SEED
    #[arg(long)]
    seed: Option<u64>,
    /// Also write an HTML page next to the output
    #[arg(long)]
    html: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Pooled,
    Grouped,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value = "x")]
    x: String,
    /// Grouping predictor for the grouped model
    #[arg(long, default_value = "region")]
    group: String,
    #[arg(long, value_enum, default_value = "grouped")]
    model: ModelKind,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 3)]
    regions: usize,
    #[arg(long, default_value_t = 60)]
    n_per_region: usize,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Write here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// One of teaser_a..teaser_j, expressiveness_a..expressiveness_c
    #[arg(long)]
    preset: String,
    #[arg(long, requires = "obs")]
    bundle: Option<PathBuf>,
    #[arg(long, requires = "bundle")]
    obs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Falls back to VMC_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// Also write an HTML page next to the output
    #[arg(long)]
    html: bool,
}

/// A failure with its exit code and diagnostic lines.
struct Failure {
    code: u8,
    lines: Vec<(String, String)>,
}

impl Failure {
    fn usage(path: &str, msg: impl ToString) -> Self {
        Failure { code: 1, lines: vec![(path.to_string(), msg.to_string())] }
    }

    fn data(path: &str, msg: impl ToString) -> Self {
        Failure { code: 2, lines: vec![(path.to_string(), msg.to_string())] }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if let Error::Compile(CompileError::Validation(vs)) = &e {
            return Failure { code: 1, lines: vs.iter().map(|v| (v.path.clone(), v.message.clone())).collect() };
        }
        let path = match &e {
            Error::Spec(s) | Error::Compile(CompileError::Spec(s)) => s.path.clone(),
            _ => "/".into(),
        };
        let code = if e.is_spec_error() { 1 } else { 2 };
        let msg = match &e {
            Error::Spec(s) | Error::Compile(CompileError::Spec(s)) => s.message.clone(),
            other => other.to_string(),
        };
        Failure { code, lines: vec![(path, msg)] }
    }
}

impl From<CompileError> for Failure {
    fn from(e: CompileError) -> Self {
        Error::from(e).into()
    }
}

fn diag(level: &str, path: &str, msg: &str) {
    let path = if path.is_empty() { "/" } else { path };
    eprintln!("{level} {path} {msg}");
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::data(&path.display().to_string(), format!("cannot read: {e}")))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::data(&path.display().to_string(), format!("cannot write: {e}"));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("VMC_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage("VMC_SEED", format!("not an unsigned integer: `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn seed_or_env(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    match flag {
        Some(s) => Ok(Some(s)),
        None => env_seed(),
    }
}

fn load_bundle(path: &Path) -> Result<ModelBundle, Failure> {
    bundle_from_json(&read_text(path)?).map_err(|e| Failure::data(&path.display().to_string(), e))
}

fn load_obs(path: &Path, response: &str) -> Result<ObservedTable, Failure> {
    read_observed(&read_text(path)?, response).map_err(|e| Failure::data(&path.display().to_string(), e))
}

const PLAYER: &str = r##"<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>vmc</title>
<script src="https://cdn.jsdelivr.net/npm/vega@5"></script>
<script src="https://cdn.jsdelivr.net/npm/vega-lite@5"></script>
<script src="https://cdn.jsdelivr.net/npm/vega-embed@6"></script>
</head>
<body>
<div id="view"></div>
<div id="status"></div>
<script>
const doc = __DOC__;
const frames = doc.frames ? doc.frames : [{id: null, spec: doc}];
const fps = doc.fps || 1;
let i = 0;
function show() {
  const f = frames[i];
  vegaEmbed("#view", f.spec, {actions: false});
  document.getElementById("status").textContent =
    f.id === null ? "" : doc.frame_key + " " + f.id + " (" + (i + 1) + "/" + frames.length + ")";
  i = (i + 1) % frames.length;
}
show();
if (frames.length > 1) setInterval(show, 1000 / fps);
</script>
</body>
</html>
"##;

fn html_path(out: &Path) -> PathBuf {
    out.with_extension("html")
}

fn write_output(output: &CompileOutput, out: &Path, html: bool) -> Result<(), Failure> {
    let text = emit(output);
    for w in output.warnings() {
        diag("WARN", "/usermeta/warnings", &w);
    }
    write_atomic(out, &text)?;
    if html {
        // `</` would end the script element early.
        let page = PLAYER.replace("__DOC__", &text.replace("</", "<\\/"));
        write_atomic(&html_path(out), &page)?;
    }
    Ok(())
}

fn compile_spec(
    spec: &VmcSpec,
    bundle: &ModelBundle,
    obs: &ObservedTable,
    seed: Option<u64>,
) -> Result<CompileOutput, Failure> {
    let opts = CompileOptions { seed_override: seed, ..Default::default() };
    Ok(compile_with(spec, bundle, obs, opts)?)
}

fn cmd_compile(a: CompileArgs) -> Result<(), Failure> {
    let spec_text = read_text(&a.spec)?;
    let spec = parse_spec(&spec_text).map_err(|e| Failure::from(Error::from(e)))?;
    let bundle = load_bundle(&a.bundle)?;
    let obs = load_obs(&a.obs, bundle.fitted_data().response_name())?;
    let output = compile_spec(&spec, &bundle, &obs, seed_or_env(a.seed)?)?;
    write_output(&output, &a.out, a.html)
}

fn cmd_quantities(bundle: &Path) -> Result<(), Failure> {
    let b = load_bundle(bundle)?;
    for q in quantity_labels(&b) {
        println!("{q}");
    }
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<(), Failure> {
    let obs = load_obs(&a.obs, &a.response)?;
    let seed = seed_or_env(a.seed)?.unwrap_or(0);
    let model_err = |e: vmc_core::models::ModelError| Failure::data("/", e);
    let bundle = match a.model {
        ModelKind::Pooled => {
            let design = DesignSpec::new(vec![Term::Intercept, Term::Numeric(a.x.clone())], &obs).map_err(model_err)?;
            fit_gaussian_conjugate(&obs, design, &NigPrior::diffuse(2), a.draws, seed).map_err(model_err)?
        }
        ModelKind::Grouped => {
            fit_grouped(&obs, &a.group, &a.x, &NigPrior::diffuse(2), a.draws, seed).map_err(model_err)?
        }
    };
    write_atomic(&a.out, &bundle.to_json())
}

const REGION_INTERCEPTS: [f64; 3] = [1.0, 1.5, 0.5];

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    if a.regions == 0 {
        return Err(Failure::usage("--regions", "must be at least 1"));
    }
    let seed = seed_or_env(a.seed)?.unwrap_or(0);
    let slopes: Vec<f64> = (0..a.regions).map(|r| 1.0 + 1.5 * r as f64).collect();
    let intercepts: Vec<f64> = (0..a.regions).map(|r| REGION_INTERCEPTS[r % REGION_INTERCEPTS.len()]).collect();
    let cfg = SimulationConfig::with_regions(a.n_per_region, intercepts, slopes, a.sigma, seed);
    let data = simulate_dataset(&cfg).map_err(|e| Failure::usage("/", e))?;
    let csv = write_observed(&data);
    match a.out {
        Some(p) => write_atomic(&p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_check(a: CheckArgs) -> Result<(), Failure> {
    if !PRESET_IDS.contains(&a.preset.as_str()) {
        return Err(Failure::usage(
            "--preset",
            format!("unknown preset `{}`; valid presets: {}", a.preset, PRESET_IDS.join(", ")),
        ));
    }
    let seed = seed_or_env(a.seed)?;
    let (bundle, obs) = match (&a.bundle, &a.obs) {
        (Some(b), Some(o)) => {
            let bundle = load_bundle(b)?;
            let obs = load_obs(o, bundle.fitted_data().response_name())?;
            (bundle, obs)
        }
        _ => {
            let s = seed.unwrap_or(0);
            let obs = demo_data(s).map_err(|e| Failure::data("/", e))?;
            let bundle = demo_bundle(&obs, s).map_err(|e| Failure::data("/", e))?;
            (bundle, obs)
        }
    };
    let spec = preset(&a.preset, &bundle, &obs).map_err(|e| Failure::from(Error::from(e)))?;
    let output = compile_spec(&spec, &bundle, &obs, seed)?;
    write_output(&output, &a.out, a.html)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Quantities { bundle } => cmd_quantities(&bundle),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Check(a) => cmd_check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            for (path, msg) in &f.lines {
                diag("ERROR", path, msg);
            }
            ExitCode::from(f.code)
        }
    }
}
