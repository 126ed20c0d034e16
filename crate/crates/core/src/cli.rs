//! `residkit` command-line front end.

use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::calibration::{self, Side, TestSpec};
use crate::diagnostics::{self, Correction, Which};
use crate::distributions::{DistSpec, PredictiveDistribution};
use crate::exec;
use crate::fmt::sig10;
use crate::residuals::{self, DEFAULT_TRUNC_BOUND};
use crate::simulation::{self, Hypothesis, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "residkit", version, about = "Percentile-based residuals, calibration and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standard and percentile residuals for observed units.
    Residuals(ResidualsArgs),
    /// Type-I error, calibrated level and power of a residual test.
    Calibrate(CalibrateArgs),
    /// Power of the standard and percentile residual tests.
    Power(CalibrateArgs),
    /// Outlier tests, KS check and plot data for a residuals file.
    Diagnose(DiagnoseArgs),
    /// Beta-regression simulation study and figure data.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Right,
    Left,
    Two,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Right => Side::Right,
            SideArg::Left => Side::Left,
            SideArg::Two => Side::TwoSided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WhichArg {
    Star,
    Ddag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    None,
    Bonferroni,
    Bh,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = SideArg::Right)]
    pub side: SideArg,
}

impl TestArgs {
    fn spec(&self) -> Result<TestSpec, String> {
        TestSpec::new(self.side.into(), self.alpha).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory, created if absent.
    #[arg(long = "out-dir", visible_alias = "out", default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ResidualsArgs {
    /// CSV with header `unit_id,y`.
    #[arg(long)]
    pub obs: PathBuf,
    /// JSON object mapping unit ids to distribution specs, or a long-format
    /// draws CSV with header `unit_id,draw`.
    #[arg(long)]
    pub dists: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRUNC_BOUND)]
    pub trunc_bound: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Working distribution: inline JSON spec or path to one.
    #[arg(long)]
    pub d: String,
    /// True distribution (defaults to the working one).
    #[arg(long)]
    pub f: Option<String>,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Residuals CSV as written by `residkit residuals`.
    #[arg(long)]
    pub residuals: PathBuf,
    #[arg(long, value_enum, default_value_t = WhichArg::Ddag)]
    pub which: WhichArg,
    #[arg(long, value_enum, default_value_t = CorrectionArg::None)]
    pub correction: CorrectionArg,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// SimConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip the single-replication figure data.
    #[arg(long)]
    pub no_figure: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    output_dir: String,
    options: Value,
}

/// Rounds every non-integer number to 10 significant digits.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            if let Some(r) = sig10(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut v = serde_json::to_value(value).map_err(|e| e.to_string())?;
    round_floats(&mut v);
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn digest(path: &Path) -> Result<InputDigest, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn prepare_out(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn require_file(path: &Path) -> Result<(), String> {
    if path.is_file() {
        Ok(())
    } else {
        Err(format!("{}: no such file", path.display()))
    }
}

struct Run {
    args: Vec<String>,
}

impl Run {
    fn manifest(
        &self,
        command: &'static str,
        out: &Path,
        seed: Option<u64>,
        inputs: Vec<InputDigest>,
        options: Value,
    ) -> Result<(), String> {
        write_json(
            &out.join("manifest.json"),
            &Manifest {
                tool: "residkit",
                version: env!("CARGO_PKG_VERSION"),
                command,
                args: self.args.clone(),
                seed,
                inputs,
                output_dir: out.display().to_string(),
                options,
            },
        )
    }
}

/// Parses an inline JSON spec, or reads one from a file.
fn load_dist(arg: &str, inputs: &mut Vec<InputDigest>) -> Result<PredictiveDistribution, String> {
    let (text, base) = if arg.trim_start().starts_with('{') {
        (arg.to_string(), None)
    } else {
        let path = Path::new(arg);
        require_file(path)?;
        inputs.push(digest(path)?);
        let text = fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?;
        (text, path.parent().map(Path::to_path_buf))
    };
    let spec: DistSpec = serde_json::from_str(&text).map_err(|e| format!("{arg}: {e}"))?;
    spec.resolve(base.as_deref()).map_err(|e| e.to_string())
}

fn csv_error(path: &Path, e: &csv::Error) -> String {
    match e.position() {
        Some(p) => format!("{} line {}: {e}", path.display(), p.line()),
        None => format!("{}: {e}", path.display()),
    }
}

fn read_observations(path: &Path) -> Result<Vec<(String, f64)>, String> {
    #[derive(serde::Deserialize)]
    struct Obs {
        unit_id: String,
        y: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, &e))?.clone();
    if !headers.iter().any(|h| h == "unit_id") || !headers.iter().any(|h| h == "y") {
        return Err(format!("{} line 1: header must contain unit_id and y", path.display()));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Obs>() {
        let o = rec.map_err(|e| csv_error(path, &e))?;
        out.push((o.unit_id, o.y));
    }
    Ok(out)
}

fn read_draws(path: &Path) -> Result<HashMap<String, PredictiveDistribution>, String> {
    #[derive(serde::Deserialize)]
    struct Draw {
        unit_id: String,
        draw: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    let mut grouped: HashMap<String, Vec<f64>> = HashMap::new();
    for rec in rdr.deserialize::<Draw>() {
        let d = rec.map_err(|e| csv_error(path, &e))?;
        grouped.entry(d.unit_id).or_default().push(d.draw);
    }
    grouped
        .into_iter()
        .map(|(id, draws)| {
            PredictiveDistribution::empirical(draws)
                .map(|d| (id.clone(), d))
                .map_err(|e| format!("{}: unit `{id}`: {e}", path.display()))
        })
        .collect()
}

fn read_dist_map(path: &Path) -> Result<HashMap<String, PredictiveDistribution>, String> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_draws(path);
    }
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let specs: HashMap<String, DistSpec> = serde_json::from_str(&text).map_err(|e| {
        format!("{} line {} column {}: {e}", path.display(), e.line(), e.column())
    })?;
    let base = path.parent();
    specs
        .into_iter()
        .map(|(id, s)| {
            s.resolve(base)
                .map(|d| (id.clone(), d))
                .map_err(|e| format!("{}: unit `{id}`: {e}", path.display()))
        })
        .collect()
}

fn cmd_residuals(run: &Run, a: &ResidualsArgs) -> Result<i32, String> {
    require_file(&a.obs)?;
    require_file(&a.dists)?;
    let obs = read_observations(&a.obs)?;
    let dists = read_dist_map(&a.dists)?;
    let batch = residuals::batch_residuals(&obs, &dists, a.trunc_bound).map_err(|e| e.to_string())?;
    prepare_out(&a.out.out_dir)?;
    match a.out.format {
        Format::Csv => {
            let path = a.out.out_dir.join("residuals.csv");
            let f = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            residuals::write_csv(&batch.records, BufWriter::new(f)).map_err(|e| e.to_string())?;
        }
        Format::Json => write_json(&a.out.out_dir.join("residuals.json"), &batch.records)?,
    }
    let (t_star, t_ddag) = batch.truncated_counts();
    let errors: Vec<Value> = batch
        .errors
        .iter()
        .map(|(id, e)| json!({"unit_id": id, "error": e.to_string()}))
        .collect();
    write_json(
        &a.out.out_dir.join("summary.json"),
        &json!({
            "n_observations": obs.len(),
            "n_records": batch.records.len(),
            "truncated_star": t_star,
            "truncated_ddag": t_ddag,
            "n_errors": errors.len(),
            "errors": errors,
        }),
    )?;
    run.manifest(
        "residuals",
        &a.out.out_dir,
        None,
        vec![digest(&a.obs)?, digest(&a.dists)?],
        json!({"trunc_bound": a.trunc_bound, "format": format_name(a.out.format)}),
    )?;
    for (id, e) in &batch.errors {
        eprintln!("unit `{id}`: {e}");
    }
    Ok(if batch.errors.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn cmd_calibrate(run: &Run, a: &CalibrateArgs, power_only: bool) -> Result<i32, String> {
    let spec = a.test.spec()?;
    let mut inputs = Vec::new();
    let d = load_dist(&a.d, &mut inputs)?;
    let f = match &a.f {
        Some(s) => load_dist(s, &mut inputs)?,
        None => d.clone(),
    };
    prepare_out(&a.out.out_dir)?;
    let (name, file) = if power_only {
        let pow_star = calibration::power_standard(&f, &d, spec).map_err(|e| e.to_string())?;
        let pow_ddag = calibration::power_percentile(&f, &d, spec).map_err(|e| e.to_string())?;
        let v = json!({
            "spec": spec,
            "f": DistSpec::from(&f),
            "d": DistSpec::from(&d),
            "pow_star_raw": pow_star,
            "pow_ddag": pow_ddag,
        });
        write_json(&a.out.out_dir.join("power.json"), &v)?;
        println!("pow_star_raw {}  pow_ddag {}", sig10(pow_star), sig10(pow_ddag));
        ("power", "power.json")
    } else {
        let rep = calibration::full_report(&f, &d, spec).map_err(|e| e.to_string())?;
        write_json(&a.out.out_dir.join("report.json"), &rep)?;
        println!(
            "effective_alpha {}  classification {:?}  calibrated_alpha {}",
            sig10(rep.effective_alpha),
            rep.classification,
            sig10(rep.calibrated_alpha)
        );
        ("calibrate", "report.json")
    };
    run.manifest(
        name,
        &a.out.out_dir,
        None,
        inputs,
        json!({"alpha": a.test.alpha, "side": spec.side, "d": a.d, "f": a.f, "output": file}),
    )?;
    Ok(EXIT_OK)
}

fn cmd_diagnose(run: &Run, a: &DiagnoseArgs) -> Result<i32, String> {
    require_file(&a.residuals)?;
    let spec = a.test.spec()?;
    let f = fs::File::open(&a.residuals).map_err(|e| format!("{}: {e}", a.residuals.display()))?;
    let records = residuals::read_csv(f).map_err(|e| csv_error(&a.residuals, &e))?;
    let which = match a.which {
        WhichArg::Star => Which::Star,
        WhichArg::Ddag => Which::Ddag,
    };
    let correction = match a.correction {
        CorrectionArg::None => Correction::None,
        CorrectionArg::Bonferroni => Correction::Bonferroni,
        CorrectionArg::Bh => Correction::Bh,
    };
    let rep = diagnostics::diagnose(&records, which, spec, correction).map_err(|e| e.to_string())?;
    prepare_out(&a.out.out_dir)?;
    write_json(&a.out.out_dir.join("diagnostics.json"), &rep)?;
    if a.out.format == Format::Csv {
        rep.panels
            .write_csvs(&a.out.out_dir, "")
            .map_err(|e| format!("{}: {e}", a.out.out_dir.display()))?;
    }
    println!(
        "n {}  ks {} (p = {})  rejected {}",
        rep.n_units,
        sig10(rep.ks_statistic),
        sig10(rep.ks_pvalue),
        rep.n_rejected
    );
    run.manifest(
        "diagnose",
        &a.out.out_dir,
        None,
        vec![digest(&a.residuals)?],
        json!({"which": which, "correction": correction, "alpha": a.test.alpha, "side": spec.side,
               "format": format_name(a.out.format)}),
    )?;
    Ok(EXIT_OK)
}

fn cmd_simulate(run: &Run, a: &SimulateArgs) -> Result<i32, String> {
    let mut inputs = Vec::new();
    let mut cfg: SimConfig = match &a.config {
        Some(p) => {
            require_file(p)?;
            inputs.push(digest(p)?);
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("{} line {} column {}: {e}", p.display(), e.line(), e.column()))?
        }
        None => SimConfig::default(),
    };
    if let Some(r) = a.replications {
        cfg.n_replications = r;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let out = &a.out.out_dir;
    prepare_out(out)?;

    let report = exec::with_thread_limit(None, || simulation::run_study(&cfg)).map_err(|e| e.to_string())?;
    let path = out.join("study.csv");
    let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    report.write_csv(BufWriter::new(file)).map_err(|e| e.to_string())?;
    if a.out.format == Format::Json {
        write_json(&out.join("study.json"), &report)?;
    }
    for r in &report.rows {
        println!(
            "{:<11} N={} reps={} R* {} R*cal {} R‡ {} mean α* {}",
            r.hypothesis.label(),
            r.sample_size_n,
            r.replications,
            sig10(r.rate_star),
            sig10(r.rate_star_calibrated),
            sig10(r.rate_ddag),
            sig10(r.mean_calibrated_alpha)
        );
    }

    let mut figure_errors = Vec::new();
    if !a.no_figure {
        let figures: Vec<_> = exec::with_thread_limit(None, || {
            exec::Execution::default().map_slice(&Hypothesis::ALL, |&h| simulation::figure_replication(&cfg, h))
        });
        for (h, fig) in Hypothesis::ALL.into_iter().zip(figures) {
            let dir = out.join("figure").join(h.label());
            prepare_out(&dir)?;
            let fig = match fig {
                Ok(f) => f,
                Err(e) => {
                    figure_errors.push(format!("figure {}: {e}", h.label()));
                    continue;
                }
            };
            let path = dir.join("residuals.csv");
            let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            residuals::write_csv(&fig.records, BufWriter::new(file)).map_err(|e| e.to_string())?;
            for which in [Which::Star, Which::Ddag] {
                let panels = diagnostics::panel_data(&fig.records, which).map_err(|e| e.to_string())?;
                panels
                    .write_csvs(&dir, &format!("_{}", which.label()))
                    .map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            write_json(
                &dir.join("mcmc.json"),
                &json!({"rhat": fig.mcmc.rhat, "acceptance": fig.mcmc.acceptance,
                        "nonconverged": fig.mcmc.nonconverged}),
            )?;
        }
    }

    run.manifest(
        "simulate",
        out,
        Some(cfg.master_seed),
        inputs,
        json!({"config": cfg, "figure": !a.no_figure, "format": format_name(a.out.format)}),
    )?;
    for f in report.failures.iter().chain(&figure_errors) {
        eprintln!("{f}");
    }
    let partial = !report.failures.is_empty() || !figure_errors.is_empty();
    Ok(if partial { EXIT_PARTIAL } else { EXIT_OK })
}

/// Runs the command line `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let run = Run {
        args: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    let result = match &cli.command {
        Command::Residuals(a) => cmd_residuals(&run, a),
        Command::Calibrate(a) => cmd_calibrate(&run, a, false),
        Command::Power(a) => cmd_calibrate(&run, a, true),
        Command::Diagnose(a) => cmd_diagnose(&run, a),
        Command::Simulate(a) => cmd_simulate(&run, a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_FATAL
        }
    }
}
