//! Command-line front end for bellbeam.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! numerical failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use bellbeam_core::bench::{bench_chsh, write_bench_csv, BenchMode, BenchOptions, BENCH_CSV_HEADER};
use bellbeam_core::chsh::{
    lhv_estimate_s, max_s_over_angles, s_canonical_law, s_from_correlations, s_max_law,
    ContinuousStrategy, LhvStrategy, RandomStrategy, SignStrategy, DEFAULT_GRID_RESOLUTION,
};
use bellbeam_core::format::{fmt12, round12};
use bellbeam_core::model::{schmidt_decompose, CoherenceMatrix};
use bellbeam_core::stochastic::{
    empirical_chsh, empirical_kappa1_sq, sample_ensemble, write_ensemble_csv, EnsembleConfig,
};
use bellbeam_core::{AngleSet, SchmidtBeam};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const SCAN_POINTS: usize = 51;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<bellbeam_core::Error> for CliError {
    fn from(e: bellbeam_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analytic,
    #[serde(alias = "monte_carlo")]
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanParameter {
    Kappa,
}

/// Coherence matrix entries as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSpec {
    pub j11: f64,
    pub j22: f64,
    #[serde(default)]
    pub j12_re: f64,
    #[serde(default)]
    pub j12_im: f64,
}

/// A JSON run configuration. Every field is optional; command-line flags override it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kappa1_sq: Option<f64>,
    pub orientation: Option<f64>,
    pub intensity: Option<f64>,
    pub coherence: Option<CoherenceSpec>,
    /// `[a, a', b, b']`
    pub angles: Option<[f64; 4]>,
    #[serde(default)]
    pub degrees: bool,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub output: Option<OutputFormat>,
    pub noise_sigma: Option<f64>,
    pub strategy: Option<String>,
}

#[derive(Debug, Parser)]
#[command(name = "bellbeam", version, about = "CHSH analysis of partially coherent light beams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schmidt decomposition of the configured beam.
    Decompose(CommonArgs),
    /// S at the configured angles, optionally also by Monte Carlo and on the bench.
    Chsh {
        #[command(flatten)]
        common: CommonArgs,
        /// Also run the virtual bench.
        #[arg(long)]
        bench: bool,
        /// Emit a sweep of the maximal S instead.
        #[arg(long, value_enum)]
        scan: Option<ScanParameter>,
    },
    /// Bench readings and the S assembled from recovered probabilities.
    Bench(CommonArgs),
    /// Monte Carlo ensemble estimates.
    Mc {
        #[command(flatten)]
        common: CommonArgs,
        /// Write every realization to this CSV file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// S of a local hidden-variable strategy with a PASS/FAIL check of |S| <= 2 + 5 sigma.
    Lhv {
        #[command(flatten)]
        common: CommonArgs,
        /// `sign`, `continuous` or `random:<seed>`.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Sweep of S over a beam parameter, long-format CSV.
    Scan {
        #[arg(value_enum)]
        parameter: ScanParameter,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = SCAN_POINTS)]
        points: usize,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Schmidt weight kappa_1^2 in [0.5, 1] (thermal beam when no beam is given).
    #[arg(long, allow_negative_numbers = true)]
    pub kappa1_sq: Option<f64>,
    /// Lab orientation of u_1, radians unless --degrees.
    #[arg(long, allow_negative_numbers = true)]
    pub orientation: Option<f64>,
    /// Total intensity [default: 1].
    #[arg(long, allow_negative_numbers = true)]
    pub intensity: Option<f64>,
    /// Coherence matrix `j11,j22,re(j12),im(j12)`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub coherence: Option<Vec<f64>>,
    /// `a,a',b,b'`, radians unless --degrees.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
    /// Monte Carlo ensemble size [default: 100000].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate analytically or from a seeded Monte Carlo ensemble [default: analytic].
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Relative std of additive Gaussian detector noise on the bench.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Output format [default: json; csv for scans].
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
    /// Read angles and orientation in degrees.
    #[arg(long)]
    pub degrees: bool,
    /// Grid resolution of the angle search.
    #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
    pub grid: usize,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub beam: SchmidtBeam,
    pub angles: AngleSet,
    pub samples: usize,
    pub seed: u64,
    pub mode: Mode,
    pub output: OutputFormat,
    pub noise_sigma: Option<f64>,
    pub strategy: Option<String>,
    pub grid: usize,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

pub fn load_config(path: &PathBuf) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("invalid config {}: {e}", path.display())))
}

fn finite(name: &str, x: f64) -> CliResult<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(input(format!("{name} must be finite (got {x})")))
    }
}

impl CommonArgs {
    /// Merges the config file (if any) with the flags; flags win.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let file = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        let degrees = self.degrees || file.degrees;
        let to_rad = |x: f64| if degrees { x.to_radians() } else { x };

        let flag_schmidt = self.kappa1_sq.is_some() || self.orientation.is_some() || self.intensity.is_some();
        let flag_coherence = self.coherence.is_some();
        if flag_schmidt && flag_coherence {
            return Err(input("give either --kappa1-sq/--orientation/--intensity or --coherence, not both"));
        }
        let file_schmidt = file.kappa1_sq.is_some() || file.orientation.is_some() || file.intensity.is_some();
        if file_schmidt && file.coherence.is_some() {
            return Err(input("config gives both a Schmidt beam and a coherence matrix"));
        }

        if let Some(c) = &self.coherence {
            if !(3..=4).contains(&c.len()) {
                return Err(input(format!("--coherence takes j11,j22,re[,im] (got {} values)", c.len())));
            }
        }
        if let Some(a) = &self.angles {
            if a.len() != 4 {
                return Err(input(format!("--angles takes a,a',b,b' (got {} values)", a.len())));
            }
        }
        let coherence: Option<(f64, f64, (f64, f64))> = if flag_coherence {
            let c = self.coherence.as_deref().unwrap_or_default();
            Some((c[0], c[1], (c[2], c.get(3).copied().unwrap_or(0.0))))
        } else if flag_schmidt {
            None
        } else {
            file.coherence.map(|c| (c.j11, c.j22, (c.j12_re, c.j12_im)))
        };

        let beam = match coherence {
            Some((j11, j22, (re, im))) => {
                for (n, x) in [("j11", j11), ("j22", j22), ("re j12", re), ("im j12", im)] {
                    finite(n, x)?;
                }
                let j = CoherenceMatrix::new(j11, j22, Complex64::new(re, im))?;
                schmidt_decompose(&j)?
            }
            None => {
                // flags override the file field by field
                let k = self.kappa1_sq.or(file.kappa1_sq).unwrap_or(0.5);
                let o = self.orientation.or(file.orientation).map(to_rad).unwrap_or(0.0);
                let i = self.intensity.or(file.intensity).unwrap_or(1.0);
                SchmidtBeam::from_kappa1_sq(finite("kappa1-sq", k)?, finite("orientation", o)?, finite("intensity", i)?)?
            }
        };

        let angles = match self.angles.as_deref().map(|v| [v[0], v[1], v[2], v[3]]).or(file.angles) {
            Some(v) => {
                for x in v {
                    finite("angle", x)?;
                }
                let [a, ap, b, bp] = v.map(to_rad);
                AngleSet::new(a, ap, b, bp)
            }
            None => AngleSet::canonical(),
        };

        let mode = self.mode.or(file.mode).unwrap_or(Mode::Analytic);
        let samples = self.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES);
        if samples < 1 {
            return Err(input("samples must be at least 1"));
        }
        let noise_sigma = self.noise_sigma.or(file.noise_sigma);
        if let Some(s) = noise_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(input(format!("noise sigma must be >= 0 (got {s})")));
            }
        }
        if self.grid < 8 {
            return Err(input(format!("grid resolution must be at least 8 (got {})", self.grid)));
        }
        Ok(Resolved {
            beam,
            angles,
            samples,
            seed: self.seed.or(file.seed).unwrap_or(0),
            mode,
            output: self.output.or(file.output).unwrap_or_default(),
            noise_sigma,
            strategy: file.strategy,
            grid: self.grid,
        })
    }
}

fn r(x: f64) -> Value {
    json!(round12(x))
}

fn angles_json(set: &AngleSet) -> Value {
    let [a, ap, b, bp] = set.as_array().map(|x| round12(x.radians()));
    json!({ "a": a, "a_prime": ap, "b": b, "b_prime": bp })
}

fn csv_row(values: &[f64]) -> String {
    values.iter().map(|x| fmt12(*x)).collect::<Vec<_>>().join(",")
}

fn emit_json(out: &mut dyn Write, v: &Value) -> CliResult<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json values serialize"))?;
    Ok(())
}

fn ensemble_config(cfg: &Resolved) -> EnsembleConfig {
    EnsembleConfig::new(cfg.beam, cfg.samples, cfg.seed)
}

fn bench_options(cfg: &Resolved) -> BenchOptions {
    BenchOptions {
        noise_sigma: cfg.noise_sigma,
        noise_seed: cfg.seed,
        ..BenchOptions::default()
    }
}

pub fn cmd_decompose(cfg: &Resolved, out: &mut dyn Write) -> CliResult<()> {
    let b = &cfg.beam;
    let values = [
        b.kappa1(),
        b.kappa2(),
        b.lab_orientation().radians(),
        b.intensity(),
        b.degree_of_polarization(),
        b.concurrence(),
    ];
    match cfg.output {
        OutputFormat::Json => emit_json(
            out,
            &json!({
                "kappa1": r(values[0]),
                "kappa2": r(values[1]),
                "orientation": r(values[2]),
                "orientation_unique": b.orientation_unique(),
                "intensity": r(values[3]),
                "degree_of_polarization": r(values[4]),
                "concurrence": r(values[5]),
            }),
        ),
        OutputFormat::Csv => {
            writeln!(out, "kappa1,kappa2,orientation,intensity,degree_of_polarization,concurrence")?;
            writeln!(out, "{}", csv_row(&values))?;
            Ok(())
        }
    }
}

const CHSH_CSV_HEADER: &str = "method,a,a_prime,b,b_prime,c_ab,c_ab_prime,c_a_prime_b,c_a_prime_b_prime,s,standard_error";

/// One evaluated S: method label, correlations, S and its standard error.
struct SRow {
    method: &'static str,
    breakdown: [f64; 4],
    s: f64,
    standard_error: Option<f64>,
}

pub fn cmd_chsh(cfg: &Resolved, with_bench: bool, out: &mut dyn Write) -> CliResult<()> {
    let analytic = s_from_correlations(&cfg.beam, &cfg.angles);
    let mut rows = vec![SRow {
        method: "analytic",
        breakdown: analytic.breakdown,
        s: analytic.s,
        standard_error: None,
    }];
    if cfg.mode == Mode::MonteCarlo {
        let ens = sample_ensemble(&ensemble_config(cfg))?;
        let (v, est) = empirical_chsh(&ens, &cfg.angles)?;
        rows.push(SRow {
            method: "monte-carlo",
            breakdown: v.breakdown,
            s: v.s,
            standard_error: Some(est.standard_error),
        });
    }
    if with_bench {
        let mode = match cfg.mode {
            Mode::Analytic => BenchMode::Analytic,
            Mode::MonteCarlo => BenchMode::MonteCarlo,
        };
        let mc = ensemble_config(cfg);
        let v = bench_chsh(&cfg.beam, &cfg.angles, mode, Some(&mc), &bench_options(cfg))?;
        rows.push(SRow {
            method: "bench",
            breakdown: v.s_value.breakdown,
            s: v.s_value.s,
            standard_error: v.standard_error,
        });
    }
    match cfg.output {
        OutputFormat::Json => {
            let mut doc = json!({
                "angles": angles_json(&cfg.angles),
                "kappa1": r(cfg.beam.kappa1()),
                "kappa2": r(cfg.beam.kappa2()),
                "closed_form": r(analytic.closed_form.unwrap_or(f64::NAN)),
            });
            for row in &rows {
                doc[row.method] = json!({
                    "correlations": row.breakdown.map(round12),
                    "s": r(row.s),
                    "standard_error": row.standard_error.map(round12),
                });
            }
            emit_json(out, &doc)
        }
        OutputFormat::Csv => {
            writeln!(out, "{CHSH_CSV_HEADER}")?;
            let angles = cfg.angles.as_array().map(|x| x.radians());
            for row in &rows {
                let mut vals = angles.to_vec();
                vals.extend(row.breakdown);
                vals.push(row.s);
                let se = row.standard_error.map(fmt12).unwrap_or_default();
                writeln!(out, "{},{},{}", row.method, csv_row(&vals), se)?;
            }
            Ok(())
        }
    }
}

const SCAN_CSV_HEADER: &str = "kappa1_sq,concurrence,s_canonical,s_max,s_max_law";

/// Maximal S against `kappa1^2` on `points` equally spaced values in `[0.5, 1]`.
pub fn cmd_scan(cfg: &Resolved, points: usize, out: &mut dyn Write) -> CliResult<()> {
    if points < 2 {
        return Err(input(format!("a sweep needs at least 2 points (got {points})")));
    }
    let rows: Vec<[f64; 5]> = (0..points)
        .map(|i| {
            let k = 0.5 + 0.5 * i as f64 / (points - 1) as f64;
            let beam = SchmidtBeam::from_kappa1_sq(k, cfg.beam.lab_orientation().radians(), cfg.beam.intensity())?;
            let (_, s) = max_s_over_angles(&beam, cfg.grid);
            Ok([k, beam.concurrence(), s_canonical_law(&beam), s, s_max_law(&beam)])
        })
        .collect::<CliResult<_>>()?;
    match cfg.output {
        OutputFormat::Csv => {
            writeln!(out, "{SCAN_CSV_HEADER}")?;
            for row in &rows {
                writeln!(out, "{}", csv_row(row))?;
            }
            Ok(())
        }
        OutputFormat::Json => {
            let list: Vec<Value> = rows
                .iter()
                .map(|v| {
                    json!({
                        "kappa1_sq": r(v[0]),
                        "concurrence": r(v[1]),
                        "s_canonical": r(v[2]),
                        "s_max": r(v[3]),
                        "s_max_law": r(v[4]),
                    })
                })
                .collect();
            emit_json(out, &Value::Array(list))
        }
    }
}

/// Bench report. In CSV mode the readings go to `out` and the S summary to `err`.
pub fn cmd_bench(cfg: &Resolved, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mode = match cfg.mode {
        Mode::Analytic => BenchMode::Analytic,
        Mode::MonteCarlo => BenchMode::MonteCarlo,
    };
    let mc = ensemble_config(cfg);
    let v = bench_chsh(&cfg.beam, &cfg.angles, mode, Some(&mc), &bench_options(cfg))?;
    match cfg.output {
        OutputFormat::Csv => {
            write_bench_csv(&v.rows, &mut *out)?;
            let se = v.standard_error.map(|s| format!(" +- {}", fmt12(s))).unwrap_or_default();
            writeln!(err, "S = {}{se}", fmt12(v.s_value.s))?;
            Ok(())
        }
        OutputFormat::Json => {
            let columns: Vec<&str> = BENCH_CSV_HEADER.split(',').collect();
            let rows: Vec<Value> = v
                .rows
                .iter()
                .map(|row| {
                    let rd = &row.readings;
                    let vals = [
                        rd.a.radians(),
                        rd.b.radians(),
                        rd.k as f64,
                        rd.i_total,
                        rd.i_k_a,
                        rd.i_1_s,
                        rd.i_k1_ab,
                        rd.i_k_t,
                        row.recovered.p_k1,
                        row.recovered.p_k2,
                    ];
                    let mut obj = serde_json::Map::new();
                    for (c, x) in columns.iter().zip(vals) {
                        obj.insert(c.to_string(), r(x));
                    }
                    obj.insert("degenerate".into(), json!(row.recovered.degenerate));
                    Value::Object(obj)
                })
                .collect();
            emit_json(
                out,
                &json!({
                    "angles": angles_json(&cfg.angles),
                    "rows": rows,
                    "correlations": v.s_value.breakdown.map(round12),
                    "s": r(v.s_value.s),
                    "standard_error": v.standard_error.map(round12),
                }),
            )
        }
    }
}

pub fn cmd_mc(cfg: &Resolved, dump: Option<&PathBuf>, out: &mut dyn Write) -> CliResult<()> {
    let ens = sample_ensemble(&ensemble_config(cfg))?;
    if let Some(path) = dump {
        let file = fs::File::create(path).map_err(|e| input(format!("cannot create {}: {e}", path.display())))?;
        write_ensemble_csv(&ens, std::io::BufWriter::new(file))?;
    }
    let k = empirical_kappa1_sq(&ens)?;
    let (v, s) = empirical_chsh(&ens, &cfg.angles)?;
    let exact = s_from_correlations(&cfg.beam, &cfg.angles).s;
    match cfg.output {
        OutputFormat::Json => emit_json(
            out,
            &json!({
                "samples": cfg.samples,
                "seed": cfg.seed,
                "angles": angles_json(&cfg.angles),
                "kappa1_sq": r(k.value),
                "kappa1_sq_standard_error": r(k.standard_error),
                "correlations": v.breakdown.map(round12),
                "s": r(s.value),
                "standard_error": r(s.standard_error),
                "s_analytic": r(exact),
            }),
        ),
        OutputFormat::Csv => {
            writeln!(out, "samples,seed,kappa1_sq,kappa1_sq_standard_error,s,standard_error,s_analytic")?;
            writeln!(
                out,
                "{},{},{}",
                cfg.samples,
                cfg.seed,
                csv_row(&[k.value, k.standard_error, s.value, s.standard_error, exact])
            )?;
            Ok(())
        }
    }
}

pub fn parse_strategy(name: &str) -> CliResult<Box<dyn LhvStrategy>> {
    match name {
        "sign" => Ok(Box::new(SignStrategy)),
        "continuous" => Ok(Box::new(ContinuousStrategy)),
        _ => match name.strip_prefix("random:").map(str::parse::<u64>) {
            Some(Ok(seed)) => Ok(Box::new(RandomStrategy::generate(seed))),
            _ => Err(input(format!(
                "unknown strategy '{name}' (expected sign, continuous or random:<seed>)"
            ))),
        },
    }
}

/// Runs the strategy and reports `|S| <= 2 + 5 sigma`. A FAIL is reported as a numerical failure.
pub fn cmd_lhv(cfg: &Resolved, strategy: Option<&str>, out: &mut dyn Write) -> CliResult<()> {
    let name = strategy.or(cfg.strategy.as_deref()).unwrap_or("sign");
    let strat = parse_strategy(name)?;
    let est = lhv_estimate_s(strat.as_ref(), &cfg.angles, cfg.samples, cfg.seed)?;
    let bound = 2.0 + 5.0 * est.s.standard_error;
    let pass = est.s.value.abs() <= bound;
    let verdict = if pass { "PASS" } else { "FAIL" };
    match cfg.output {
        OutputFormat::Json => emit_json(
            out,
            &json!({
                "strategy": strat.name(),
                "samples": cfg.samples,
                "seed": cfg.seed,
                "angles": angles_json(&cfg.angles),
                "correlations": est.correlations.map(round12),
                "s": r(est.s.value),
                "standard_error": r(est.s.standard_error),
                "bound": r(bound),
                "verdict": verdict,
            }),
        )?,
        OutputFormat::Csv => {
            writeln!(out, "strategy,samples,seed,s,standard_error,bound,verdict")?;
            writeln!(
                out,
                "{},{},{},{},{verdict}",
                strat.name(),
                cfg.samples,
                cfg.seed,
                csv_row(&[est.s.value, est.s.standard_error, bound])
            )?;
        }
    }
    writeln!(
        out,
        "{verdict}: |S| = {} {} 2 + 5 sigma = {}",
        fmt12(est.s.value.abs()),
        if pass { "<=" } else { ">" },
        fmt12(bound)
    )?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{} violates the local bound", strat.name())))
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Decompose(c) => cmd_decompose(&c.resolve()?, out),
        Command::Chsh { common, bench, scan } => {
            let cfg = common.resolve()?;
            match scan {
                Some(ScanParameter::Kappa) => {
                    // a sweep is always long-format CSV unless JSON is asked for explicitly
                    let cfg = Resolved {
                        output: common.output.unwrap_or(OutputFormat::Csv),
                        ..cfg
                    };
                    cmd_scan(&cfg, SCAN_POINTS, out)
                }
                None => cmd_chsh(&cfg, *bench, out),
            }
        }
        Command::Bench(c) => cmd_bench(&c.resolve()?, out, err),
        Command::Mc { common, dump } => cmd_mc(&common.resolve()?, dump.as_ref(), out),
        Command::Lhv { common, strategy } => cmd_lhv(&common.resolve()?, strategy.as_deref(), out),
        Command::Scan { common, points, .. } => {
            let cfg = common.resolve()?;
            let cfg = Resolved {
                output: common.output.unwrap_or(OutputFormat::Csv),
                ..cfg
            };
            cmd_scan(&cfg, *points, out)
        }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
