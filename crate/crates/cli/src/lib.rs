//! Command implementations behind the `synbench` binary.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error,
//! 3 configuration mismatch between flags and an input manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use synbench::dataio::{self, Manifest, ReportFormat, MANIFEST_VERSION};
use synbench::math::Probability;
use synbench::oracle::{self, Budget, VerifyOptions};
use synbench::scoring::{self, FitOptions};
use synbench::spectral::DEFAULT_RANK_RTOL;
use synbench::synth::{self, GaussianSpec, SGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG_MISMATCH: i32 = 3;

pub const THREADS_ENV: &str = "SYNBENCH_THREADS";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "synbench", version, about = "Synthetic-Gaussian robustness-accuracy benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one SBE file per s-value plus a manifest.
    Synth(SynthArgs),
    /// Score embeddings listed in a manifest against the reference curve.
    Score(ScoreArgs),
    /// Dump the reference curve as CSV.
    Reference(ReferenceArgs),
    /// Run the property and Monte-Carlo verification suites.
    Verify(VerifyArgs),
}

/// Numeric run configuration shared by all pipeline commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunConfig {
    #[arg(long, default_value_t = synth::DEFAULT_S_MIN)]
    pub s_min: f64,
    #[arg(long, default_value_t = synth::DEFAULT_S_MAX)]
    pub s_max: f64,
    #[arg(long, default_value_t = synth::DEFAULT_S_STEPS)]
    pub s_steps: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = synth::DEFAULT_SAMPLES_PER_CLASS)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    pub eps_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.75,0.8,0.85,0.9")]
    pub a_t_list: Vec<f64>,
    #[arg(long, default_value_t = scoring::DEFAULT_A_GRID_SIZE)]
    pub a_grid_size: usize,
    #[arg(long, default_value_t = DEFAULT_RANK_RTOL)]
    pub rank_rtol: f64,
    /// Fraction of each class used for fitting; the remainder is used for margins.
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            s_min: synth::DEFAULT_S_MIN,
            s_max: synth::DEFAULT_S_MAX,
            s_steps: synth::DEFAULT_S_STEPS,
            dim: 64,
            samples_per_class: synth::DEFAULT_SAMPLES_PER_CLASS,
            seed: 0,
            eps_list: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            a_t_list: vec![0.7, 0.75, 0.8, 0.85, 0.9],
            a_grid_size: scoring::DEFAULT_A_GRID_SIZE,
            rank_rtol: DEFAULT_RANK_RTOL,
            split_ratio: None,
        }
    }
}

impl RunConfig {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }

    pub fn s_grid(&self) -> synbench::Result<SGrid> {
        synth::build_s_grid(self.s_min, self.s_max, self.s_steps)
    }

    pub fn a_grid(&self) -> synbench::Result<Vec<f64>> {
        scoring::build_a_grid(scoring::DEFAULT_A_MIN, scoring::DEFAULT_A_MAX, self.a_grid_size)
    }

    pub fn thresholds(&self) -> synbench::Result<Vec<Probability>> {
        self.a_t_list.iter().map(|&a| Probability::new(a)).collect()
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: RunConfig,
    /// Directory that receives the SBE files and the manifest.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub config: RunConfig,
    /// Manifest listing the embedding SBE files.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report file; JSON carries curves and reports, CSV the score table.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// CSV of every curve on the shared a-grid, for plotting.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub config: RunConfig,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suite to run; repeat for several. All suites when absent.
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    #[arg(long, default_value_t = VerifyOptions::default().seed)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = BudgetArg::Quick)]
    pub budget: BudgetArg,
    /// Print a JSON summary instead of the table.
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub tolerance_scale: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BudgetArg {
    Quick,
    Full,
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<synbench::Error> for Failure {
    fn from(e: synbench::Error) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

type Outcome = std::result::Result<i32, Failure>;

fn mismatch(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG_MISMATCH,
        message,
    }
}

/// Sizes the global thread pool from `SYNBENCH_THREADS` when it is set.
pub fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure {
        code: EXIT_USAGE,
        message: format!("{THREADS_ENV} must be a positive integer, got '{raw}'"),
    })?;
    // a second initialization in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> i32 {
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Synth(a) => run_synth(&a),
        Command::Score(a) => run_score(&a),
        Command::Reference(a) => run_reference(&a),
        Command::Verify(a) => run_verify(&a),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn sbe_file_name(index: usize) -> String {
    format!("s_{index:03}.sbe")
}

pub fn run_synth(args: &SynthArgs) -> Outcome {
    let cfg = &args.config;
    let s_grid = cfg.s_grid()?;
    let specs: Vec<GaussianSpec> = s_grid
        .values()
        .iter()
        .enumerate()
        .map(|(i, &s)| GaussianSpec::new(s, cfg.dim, cfg.samples_per_class, cfg.seed).with_stream(i as u64))
        .collect();
    for spec in &specs {
        spec.validate()?;
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: format!("cannot create {}: {e}", args.out_dir.display()),
    })?;
    let files: Vec<String> = (0..specs.len()).map(sbe_file_name).collect();
    specs
        .par_iter()
        .zip(files.par_iter())
        .try_for_each(|(spec, name)| {
            let data = synth::sample_dataset(spec)?;
            dataio::write_sbe(args.out_dir.join(name), &data, spec.s)
        })?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        dim: cfg.dim,
        s_grid: s_grid.values().to_vec(),
        files,
        provenance: "raw".into(),
        seed: Some(cfg.seed),
        samples_per_class: Some(cfg.samples_per_class),
    };
    let path = args.out_dir.join(MANIFEST_NAME);
    dataio::write_manifest(&path, &manifest)?;
    println!("wrote {} files and {}", manifest.files.len(), path.display());
    Ok(EXIT_OK)
}

fn check_grid(manifest: &Manifest, grid: &SGrid, path: &Path) -> std::result::Result<(), Failure> {
    let listed = &manifest.s_grid;
    let expected = grid.values();
    let same = listed.len() == expected.len()
        && listed
            .iter()
            .zip(expected)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
    if same {
        Ok(())
    } else {
        Err(mismatch(format!(
            "{} lists {} s-values on [{}, {}], configuration expects {} on [{}, {}]",
            path.display(),
            listed.len(),
            listed.first().copied().unwrap_or(f64::NAN),
            listed.last().copied().unwrap_or(f64::NAN),
            expected.len(),
            expected[0],
            expected[expected.len() - 1]
        )))
    }
}

/// Score grid in the layout of the report CSV, for the terminal.
pub fn format_table(reports: &[scoring::ScoreReport], eps_list: &[f64], a_t_list: &[Probability]) -> String {
    let mut out = format!("{:>6}", "a_t");
    for e in eps_list {
        let _ = write!(out, " {:>10}", format!("eps={e}"));
    }
    out.push('\n');
    for (j, a) in a_t_list.iter().enumerate() {
        let _ = write!(out, "{:>6}", a.value());
        for i in 0..eps_list.len() {
            let _ = write!(out, " {:>10.4}", reports[i * a_t_list.len() + j].score);
        }
        out.push('\n');
    }
    out
}

pub fn run_score(args: &ScoreArgs) -> Outcome {
    let cfg = &args.config;
    let s_grid = cfg.s_grid()?;
    let a_grid = cfg.a_grid()?;
    let thresholds = cfg.thresholds()?;
    let (manifest, data) = dataio::load_manifest_data(&args.manifest)?;
    check_grid(&manifest, &s_grid, &args.manifest)?;

    let reference = scoring::reference_curve(&s_grid, &a_grid)?;
    let opts = FitOptions {
        rank_rtol: cfg.rank_rtol,
        split_ratio: cfg.split_ratio,
    };
    let cells = scoring::fit_cells(&s_grid, &data, &opts)?;
    let sweep = scoring::eps_sweep(&cells, &reference, &cfg.eps_list, &thresholds, &cfg.digest())?;

    for curve in &sweep.curves {
        for w in curve.warnings() {
            eprintln!("warning: ε = {}: {w}", curve.epsilon);
        }
    }
    print!("{}", format_table(&sweep.reports, &cfg.eps_list, &thresholds));
    for b in &sweep.best {
        println!("best eps at a_t={}: {} (score {:.4})", b.a_t, b.epsilon, b.score);
    }

    let mut curves = vec![sweep.reference.clone()];
    curves.extend(sweep.curves.iter().cloned());
    if let Some(path) = &args.report {
        dataio::write_report(&sweep.reports, &curves, path, args.format.into())?;
    }
    if let Some(path) = &args.curves {
        let csv = dataio::render_curves_csv(&curves)?;
        fs::write(path, csv).map_err(|e| Failure {
            code: EXIT_USAGE,
            message: format!("cannot write {}: {e}", path.display()),
        })?;
    }
    Ok(EXIT_OK)
}

pub fn run_reference(args: &ReferenceArgs) -> Outcome {
    let cfg = &args.config;
    let curve = scoring::reference_curve(&cfg.s_grid()?, &cfg.a_grid()?)?;
    let csv = dataio::render_curves_csv(std::slice::from_ref(&curve))?;
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(|e| Failure {
            code: EXIT_USAGE,
            message: format!("cannot write {}: {e}", path.display()),
        })?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    passed: bool,
    seed: u64,
    suites: &'a [oracle::SuiteOutcome],
}

pub fn run_verify(args: &VerifyArgs) -> Outcome {
    let opts = VerifyOptions {
        seed: args.seed,
        budget: match args.budget {
            BudgetArg::Quick => Budget::Quick,
            BudgetArg::Full => Budget::Full,
        },
        tolerance_scale: args.tolerance_scale,
    };
    let names: Vec<&str> = if args.suites.is_empty() {
        oracle::SUITES.to_vec()
    } else {
        args.suites.iter().map(String::as_str).collect()
    };
    let outcomes = names
        .iter()
        .map(|n| oracle::run_suite(n, &opts))
        .collect::<synbench::Result<Vec<_>>>()?;
    let passed = outcomes.iter().all(|o| o.passed);
    if args.json {
        let summary = VerifySummary {
            passed,
            seed: args.seed,
            suites: &outcomes,
        };
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else {
        for o in &outcomes {
            println!(
                "{} {:<12} {:>5} checks {:>3} failures {:>7.2}s  {}",
                if o.passed { "PASS" } else { "FAIL" },
                o.name,
                o.checks,
                o.failures,
                o.seconds,
                o.detail
            );
        }
    }
    Ok(if passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = RunConfig::default();
        assert_eq!(a.digest(), RunConfig::default().digest());
        assert_eq!(a.digest().len(), 64);
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn clap_defaults_match_config_defaults() {
        let cli = Cli::try_parse_from(["synbench", "reference"]).unwrap();
        let Command::Reference(args) = cli.command else { panic!() };
        assert_eq!(args.config.digest(), RunConfig::default().digest());
    }

    #[test]
    fn table_layout() {
        let r = |eps: f64, a: f64, score: f64| scoring::ScoreReport {
            epsilon: eps,
            a_t: Probability::new(a).unwrap(),
            score,
            numerator_auc: score,
            denominator_auc: 1.0,
            config_digest: String::new(),
        };
        let reports = [r(0.0, 0.7, 1.0), r(0.2, 0.7, 0.5)];
        let t = format_table(&reports, &[0.0, 0.2], &[Probability::new(0.7).unwrap()]);
        assert_eq!(t.lines().count(), 2);
        assert!(t.lines().next().unwrap().contains("eps=0.2"));
        assert!(t.contains("1.0000") && t.contains("0.5000"));
    }
}
