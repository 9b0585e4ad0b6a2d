//! Command-line front end: estimate, simulate, benchmark, backtest, rank.
//!
//! Exit codes: 0 success, 1 I/O, 2 bad configuration, 3 numerical failure.
//! All randomized subcommands derive their streams from the master `--seed`,
//! so a given invocation is reproducible regardless of `--threads`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rayon::prelude::*;

use crate::covariance::{cai_liu_variance, sample_cov_centered};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::lrv::{Bandwidth, KernelKind, KernelSpec, LrvMatrix, LrvStatus};
use crate::metrics::{
    aggregate, spectral_loss, summarize, support_stats, write_freq_csv, write_freq_pgm,
    SupportFrequency, SupportStats,
};
use crate::panel::{self, TimeSeriesPanel};
use crate::portfolio::{
    abs_corr_score, backtest, f_statistic_ranking, BacktestConfig, BacktestEstimator,
};
use crate::report::{
    write_json, BacktestCell, BacktestReport, BandwidthStats, BenchmarkConfigReport,
    BenchmarkEstimatorReport, EstimateReport, RankReport, SCHEMA,
};
use crate::simulate::{
    build_adversarial, build_model1_retrying, build_model2, derive_seed, sample_var1, SimInstance,
};
use crate::threshold::{threshold_matrix, EstimatorSpec, Method, SupportMask, ThresholdRule};
use crate::tuning::{block_cv_delta, BlockCvConfig, CvResult};

#[derive(Parser)]
#[command(name = "lrcov", version, about = "Sparse covariance estimation for dependent panels")]
struct Cli {
    /// Master seed for every randomized stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory output files are written into (created if missing).
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a sparse covariance matrix from a panel CSV.
    Estimate(EstimateArgs),
    /// Generate a synthetic panel with known covariance.
    Simulate(SimulateArgs),
    /// Replicated estimator comparison on synthetic designs.
    Benchmark(BenchmarkArgs),
    /// Rolling-window portfolio backtest on a returns panel.
    Backtest(BacktestArgs),
    /// Rank columns by a screening statistic and extract a reduced panel.
    Rank(RankArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Proposed,
    Universal,
    CaiLiu,
}

impl MethodArg {
    fn to_method(self) -> Method {
        match self {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::Universal => Method::Universal,
            MethodArg::CaiLiu => Method::CaiLiu,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Hard,
    Soft,
    AdaptiveLasso,
}

impl RuleArg {
    fn to_rule(self, eta: f64) -> ThresholdRule {
        match self {
            RuleArg::Hard => ThresholdRule::Hard,
            RuleArg::Soft => ThresholdRule::Soft,
            RuleArg::AdaptiveLasso => ThresholdRule::AdaptiveLasso { eta },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Qs,
    Bartlett,
    Parzen,
    TukeyHanning,
}

impl KernelArg {
    fn to_kind(self) -> KernelKind {
        match self {
            KernelArg::Qs => KernelKind::QuadraticSpectral,
            KernelArg::Bartlett => KernelKind::Bartlett,
            KernelArg::Parzen => KernelKind::Parzen,
            KernelArg::TukeyHanning => KernelKind::TukeyHanning,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Model1,
    Model2,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankMethodArg {
    Fstat,
    Abscorr,
}

/// Cross-validation flags shared by every subcommand that tunes delta.
#[derive(Args, Clone, Copy)]
struct CvArgs {
    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    k_blocks: usize,
    /// Rows dropped on each side of a held-out block.
    #[arg(long, default_value_t = 0)]
    buffer: usize,
    /// Grid resolution: candidate deltas are j/M for j = 0..=4M.
    #[arg(long, default_value_t = 10)]
    grid_m: usize,
}

impl CvArgs {
    fn to_config(self, seed: u64) -> BlockCvConfig {
        BlockCvConfig {
            k_blocks: self.k_blocks,
            buffer: self.buffer,
            grid_m: self.grid_m,
            seed,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Panel CSV, rows = time points, columns = coordinates.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Proposed)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = RuleArg::Hard)]
    rule: RuleArg,
    /// Adaptive-lasso exponent (used when --rule adaptive-lasso).
    #[arg(long, default_value_t = 4.0)]
    eta: f64,
    /// Threshold constant: a number, or "auto" for cross-validation.
    #[arg(long, default_value = "auto")]
    delta: String,
    /// Long-run variance kernel (proposed method only).
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// Kernel bandwidth: a number, or "andrews" for the plug-in choice.
    #[arg(long)]
    bandwidth: Option<String>,
    /// Threshold diagonal entries too (kept untouched by default).
    #[arg(long)]
    threshold_diagonal: bool,
    #[command(flatten)]
    cv: CvArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Panel dimension (even, at least 4).
    #[arg(long)]
    p: usize,
    /// Series length.
    #[arg(long)]
    n: usize,
    /// Equicorrelation of the adversarial noise block.
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    /// Adversarial magnitude constant.
    #[arg(long, default_value_t = 6.0)]
    c_a: f64,
    /// Adversarial signal block size.
    #[arg(long, default_value_t = 8)]
    s1: usize,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Comma-separated panel dimensions, e.g. "100,200".
    #[arg(long)]
    p: String,
    /// Comma-separated series lengths, e.g. "300,800".
    #[arg(long)]
    n: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Comma-separated estimators: proposed, universal, cai-liu.
    #[arg(long, default_value = "proposed,universal,cai-liu")]
    methods: String,
    /// Comma-separated rules: hard, soft, adaptive-lasso.
    #[arg(long, default_value = "hard,adaptive-lasso")]
    rules: String,
    #[arg(long, default_value_t = 4.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 6.0)]
    c_a: f64,
    #[arg(long, default_value_t = 8)]
    s1: usize,
    #[command(flatten)]
    cv: CvArgs,
}

#[derive(Args)]
struct BacktestArgs {
    /// Returns panel CSV, rows = days, columns = assets.
    #[arg(long)]
    input: PathBuf,
    /// Window lengths: "50:120:5" (start:stop:step) or a comma list.
    #[arg(long)]
    windows: String,
    /// Days each set of weights is held.
    #[arg(long, default_value_t = 20)]
    hold: usize,
    /// Annualized target return for the mean-variance portfolio.
    #[arg(long, default_value_t = 0.10)]
    target_annual_return: f64,
    #[arg(long, default_value_t = 250)]
    trading_days: usize,
    /// Eigenvalue floor applied to every estimate before inversion.
    #[arg(long, default_value_t = 1e-6)]
    eigen_floor: f64,
    /// Comma-separated estimators, e.g. "sample,linear-shrinkage,proposed-hard".
    #[arg(long, default_value = "sample,linear-shrinkage,proposed-hard")]
    estimators: String,
    #[arg(long, default_value_t = 4.0)]
    eta: f64,
    #[command(flatten)]
    cv: CvArgs,
}

#[derive(Args)]
struct RankArgs {
    /// Panel CSV, rows = observations, columns = coordinates.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: RankMethodArg,
    /// Integer class label per row, one value per line (fstat only).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// How many top-ranked columns the reduced panel keeps.
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// How many bottom-ranked columns the reduced panel keeps.
    #[arg(long, default_value_t = 80)]
    bottom: usize,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        // Ignore the error when a pool already exists (tests call run() repeatedly).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    std::fs::create_dir_all(&cli.output_dir).map_err(|e| Error::io(&cli.output_dir, e))?;
    let out = cli.output_dir.clone();
    let seed = cli.seed;
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args, seed, &out),
        Command::Simulate(args) => cmd_simulate(args, seed, &out),
        Command::Benchmark(args) => cmd_benchmark(args, seed, &out),
        Command::Backtest(args) => cmd_backtest(args, seed, &out),
        Command::Rank(args) => cmd_rank(args, &out),
    }
}

fn parse_flag_f64(value: &str, flag: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("--{flag}: expected a number, got {value:?}")))
}

fn parse_usize_list(value: &str, flag: &str) -> Result<Vec<usize>> {
    let items: Result<Vec<usize>> = value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("--{flag}: expected integers, got {s:?}")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Config(format!("--{flag} is empty")));
    }
    Ok(items)
}

/// Expands "start:stop:step" into {start, start+step, ...} <= stop,
/// and also accepts a plain comma list of integers.
fn parse_windows(value: &str) -> Result<Vec<usize>> {
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "--windows: expected start:stop:step, got {value:?}"
            )));
        }
        let nums: Result<Vec<usize>> = parts
            .iter()
            .map(|s| {
                s.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("--windows: expected integers, got {s:?}"))
                })
            })
            .collect();
        let nums = nums?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if step == 0 {
            return Err(Error::Config("--windows: step must be positive".into()));
        }
        if start > stop {
            return Err(Error::Config(format!(
                "--windows: start {start} exceeds stop {stop}"
            )));
        }
        Ok((start..=stop).step_by(step).collect())
    } else {
        parse_usize_list(value, "windows")
    }
}

const ESTIMATOR_NAMES: &str = "sample, linear-shrinkage, \
     {proposed|universal|cai-liu}-{hard|soft|adaptive-lasso}";

fn parse_estimator(token: &str, eta: f64) -> Result<BacktestEstimator> {
    let token = token.trim();
    match token {
        "sample" => return Ok(BacktestEstimator::Sample),
        "linear-shrinkage" => return Ok(BacktestEstimator::LinearShrinkage),
        _ => {}
    }
    for (prefix, method) in [
        ("proposed", Method::Proposed),
        ("universal", Method::Universal),
        ("cai-liu", Method::CaiLiu),
    ] {
        let Some(rest) = token.strip_prefix(prefix) else {
            continue;
        };
        let Some(rule_name) = rest.strip_prefix('-') else {
            continue;
        };
        let rule = match rule_name {
            "hard" => ThresholdRule::Hard,
            "soft" => ThresholdRule::Soft,
            "adaptive-lasso" => ThresholdRule::AdaptiveLasso { eta },
            _ => {
                return Err(Error::Config(format!(
                    "unknown threshold rule {rule_name:?} in estimator {token:?}; \
                     valid estimators: {ESTIMATOR_NAMES}"
                )))
            }
        };
        return Ok(BacktestEstimator::Thresholded(EstimatorSpec::new(
            method, rule, 0.0,
        )));
    }
    Err(Error::Config(format!(
        "unknown estimator {token:?}; valid estimators: {ESTIMATOR_NAMES}"
    )))
}

fn rule_slug(rule: &ThresholdRule) -> String {
    match rule {
        ThresholdRule::Hard => "hard".into(),
        ThresholdRule::Soft => "soft".into(),
        ThresholdRule::AdaptiveLasso { eta } => format!("adaptive-lasso-{eta}"),
    }
}

fn write_matrix_csv(path: &Path, m: &SymMatrix) -> Result<()> {
    panel::write_csv(path, &m.to_dense(), None)
}

fn write_support_csv(path: &Path, mask: &SupportMask) -> Result<()> {
    let p = mask.dim();
    let mut text = String::new();
    for i in 0..p {
        for j in 0..p {
            if j > 0 {
                text.push(',');
            }
            text.push(if mask.get(i, j) { '1' } else { '0' });
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- estimate

fn cmd_estimate(args: EstimateArgs, seed: u64, out: &Path) -> Result<()> {
    let method = args.method.to_method();
    let rule = args.rule.to_rule(args.eta);

    if !matches!(method, Method::Proposed) && (args.kernel.is_some() || args.bandwidth.is_some()) {
        eprintln!(
            "warning: --kernel/--bandwidth only affect the proposed method; ignored for {}",
            method.name()
        );
    }
    let kernel = KernelSpec {
        kind: args.kernel.map_or(KernelKind::QuadraticSpectral, KernelArg::to_kind),
        bandwidth: match args.bandwidth.as_deref() {
            None | Some("andrews") => Bandwidth::Andrews,
            Some(text) => Bandwidth::Fixed(parse_flag_f64(text, "bandwidth")?),
        },
    };

    let panel = panel::load_csv(&args.input)?;
    let mut spec = EstimatorSpec::new(method, rule, 0.0);
    spec.kernel = kernel;
    spec.threshold_diagonal = args.threshold_diagonal;

    let (delta, delta_source, cv) = if args.delta.trim() == "auto" {
        let result = auto_delta(&panel, &spec, args.cv, seed)?;
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        (result.best_delta, "cv".to_string(), Some(result))
    } else {
        let d = parse_flag_f64(&args.delta, "delta")?;
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::Config(format!(
                "--delta must be a nonnegative number, got {d}"
            )));
        }
        (d, "fixed".to_string(), None)
    };
    spec.delta = delta;

    let centered = panel.center();
    let cov = sample_cov_centered(&centered);
    let theta = match method {
        Method::Proposed => Some(crate::lrv::lrv_matrix(&centered, &spec.kernel)?),
        _ => None,
    };
    let theta_c = match method {
        Method::CaiLiu => Some(cai_liu_variance(&centered, &cov.sigma)),
        _ => None,
    };
    let est = threshold_matrix(
        &cov,
        &spec,
        theta.as_ref(),
        theta_c.as_ref(),
        panel.n_series(),
    )?;

    let (bandwidths, degenerate_entries, clamped_entries) = match &theta {
        Some(t) => {
            let p = panel.n_series();
            let mut degenerate = Vec::new();
            let mut clamped = 0usize;
            let mut bw = Vec::with_capacity(p * (p + 1) / 2);
            for i in 0..p {
                for j in 0..=i {
                    bw.push(t.bandwidths.get(i, j));
                    match t.status(i, j) {
                        LrvStatus::Degenerate => degenerate.push((i, j)),
                        LrvStatus::Clamped => clamped += 1,
                        LrvStatus::Ok => {}
                    }
                }
            }
            (
                BandwidthStats::from_values(bw.into_iter()),
                degenerate,
                clamped,
            )
        }
        None => (None, Vec::new(), 0),
    };

    write_matrix_csv(&out.join("estimate.csv"), &est.estimate)?;
    write_matrix_csv(&out.join("thresholds.csv"), &est.thresholds)?;
    write_support_csv(&out.join("support.csv"), &est.support)?;

    let report = EstimateReport {
        schema: SCHEMA,
        input: args.input.display().to_string(),
        n: panel.n_obs(),
        p: panel.n_series(),
        method: method.name().to_string(),
        rule: spec.rule.name(),
        delta,
        delta_source,
        kernel: matches!(method, Method::Proposed).then(|| spec.kernel.kind.name().to_string()),
        cv,
        bandwidths,
        degenerate_entries,
        clamped_entries,
        support_nonzeros: est.support.count_full(),
    };
    write_json(out.join("report.json"), &report)?;
    println!(
        "estimate: {} {} delta={:.6} nonzeros={} -> {}",
        report.method,
        report.rule,
        delta,
        report.support_nonzeros,
        out.display()
    );
    Ok(())
}

/// Cross-validated delta over consecutive time folds. For non-proposed
/// methods no lag masking is involved, so this is plain K-fold CV; random
/// interleaved folds are avoided because on autocorrelated rows they
/// correlate train and validation covariances and drive delta to zero.
fn auto_delta(
    panel: &TimeSeriesPanel,
    spec: &EstimatorSpec,
    cv: CvArgs,
    seed: u64,
) -> Result<CvResult> {
    block_cv_delta(panel, spec, &cv.to_config(seed))
}

// ---------------------------------------------------------------- simulate

/// Builds the instance for one replication, retrying rejected random draws
/// (model 1 can produce an indefinite innovation block) with fresh seeds.
#[allow(clippy::too_many_arguments)]
fn build_instance(
    model: ModelArg,
    p: usize,
    n: usize,
    rho: f64,
    c_a: f64,
    s1: usize,
    master: u64,
    config: &str,
    rep: u64,
) -> Result<(SimInstance, usize)> {
    match model {
        ModelArg::Model2 => Ok((build_model2(p)?, 0)),
        ModelArg::Adversarial => Ok((build_adversarial(p, n, rho, c_a, s1)?, 0)),
        ModelArg::Model1 => build_model1_retrying(p, master, config, rep),
    }
}

fn model_name(model: ModelArg) -> &'static str {
    match model {
        ModelArg::Model1 => "model1",
        ModelArg::Model2 => "model2",
        ModelArg::Adversarial => "adversarial",
    }
}

fn cmd_simulate(args: SimulateArgs, seed: u64, out: &Path) -> Result<()> {
    let config = format!("simulate/{}/p={}/n={}", model_name(args.model), args.p, args.n);
    let (inst, retries) = build_instance(
        args.model, args.p, args.n, args.rho, args.c_a, args.s1, seed, &config, 0,
    )?;
    let panel = sample_var1(&inst, args.n, derive_seed(seed, &config, 0, "path"))?;

    panel::write_csv(&out.join("panel.csv"), panel.data(), None)?;
    write_matrix_csv(&out.join("truth.csv"), &inst.sigma_true)?;
    write_support_csv(&out.join("support_true.csv"), &inst.support_true)?;

    let report = serde_json::json!({
        "schema": SCHEMA,
        "instance": inst.name,
        "p": args.p,
        "n": args.n,
        "seed": seed,
        "construction_retries": retries,
        "support_nonzeros": inst.support_true.count_full(),
        "a_n": inst.a_n,
        "theta_zero_block": inst.theta_zero_block,
    });
    write_json(out.join("instance.json"), &report)?;
    println!("simulate: {} n={} -> {}", inst.name, args.n, out.display());
    Ok(())
}

// ---------------------------------------------------------------- benchmark

/// Per-replication output for one estimator/rule pair.
struct ComboOut {
    loss: f64,
    stats: SupportStats,
    delta: f64,
    mask: SupportMask,
}

struct RepRow {
    combos: Vec<ComboOut>,
    retries: usize,
}

fn cmd_benchmark(args: BenchmarkArgs, seed: u64, out: &Path) -> Result<()> {
    let p_list = parse_usize_list(&args.p, "p")?;
    let n_list = parse_usize_list(&args.n, "n")?;
    if args.reps == 0 {
        return Err(Error::Config("--reps must be positive".into()));
    }
    let methods: Vec<Method> = {
        let mut v = Vec::new();
        for token in args.methods.split(',') {
            v.push(match token.trim() {
                "proposed" => Method::Proposed,
                "universal" => Method::Universal,
                "cai-liu" => Method::CaiLiu,
                other => {
                    return Err(Error::Config(format!(
                        "--methods: unknown estimator {other:?}; valid: proposed, universal, cai-liu"
                    )))
                }
            });
        }
        v
    };
    let rules: Vec<ThresholdRule> = {
        let mut v = Vec::new();
        for token in args.rules.split(',') {
            v.push(match token.trim() {
                "hard" => ThresholdRule::Hard,
                "soft" => ThresholdRule::Soft,
                "adaptive-lasso" => ThresholdRule::AdaptiveLasso { eta: args.eta },
                other => {
                    return Err(Error::Config(format!(
                        "--rules: unknown rule {other:?}; valid: hard, soft, adaptive-lasso"
                    )))
                }
            });
        }
        v
    };
    let combos: Vec<(Method, ThresholdRule)> = methods
        .iter()
        .flat_map(|m| rules.iter().map(move |r| (*m, *r)))
        .collect();

    let csv_path = out.join("benchmark.csv");
    let mut csv = String::from("model,p,n,estimator,rule,loss,tpr,fpr,exact_recovery,mean_delta\n");

    for &p in &p_list {
        for &n in &n_list {
            let config = format!("{}/p={p}/n={n}", model_name(args.model));
            let rows: Result<Vec<RepRow>> = (0..args.reps as u64)
                .into_par_iter()
                .map(|rep| run_benchmark_rep(&args, seed, &config, rep, p, n, &combos))
                .collect();
            let rows = rows?;

            let mut estimators = Vec::with_capacity(combos.len());
            for (ci, (method, rule)) in combos.iter().enumerate() {
                let losses: Vec<f64> = rows.iter().map(|r| r.combos[ci].loss).collect();
                let stats: Vec<SupportStats> = rows.iter().map(|r| r.combos[ci].stats).collect();
                let deltas: Vec<f64> = rows.iter().map(|r| r.combos[ci].delta).collect();
                let mut freq = SupportFrequency::new(p);
                for row in &rows {
                    freq.add(&row.combos[ci].mask)?;
                }
                let summary = aggregate(&losses, &stats);
                let mean_delta = summarize(&deltas).map_or(f64::NAN, |s| s.mean);
                let slug = format!("{}-{}", method.name(), rule_slug(rule));
                let stem = format!("heatmap_{}_p{p}_n{n}_{slug}", model_name(args.model));
                write_freq_pgm(out.join(format!("{stem}.pgm")), &freq)?;
                write_freq_csv(out.join(format!("{stem}.csv")), &freq)?;

                let fmt_rate = |r: &crate::metrics::RateSummary| {
                    r.summary
                        .as_ref()
                        .map_or(String::new(), |s| format!("{:.2}({:.2})", s.mean, s.sd))
                };
                let loss_cell = summary
                    .loss
                    .as_ref()
                    .map_or(String::new(), |s| format!("{:.2}({:.2})", s.mean, s.sd));
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{:.2},{:.4}\n",
                    model_name(args.model),
                    p,
                    n,
                    method.name(),
                    rule.name(),
                    loss_cell,
                    fmt_rate(&summary.tpr),
                    fmt_rate(&summary.fpr),
                    summary.exact_recovery_rate,
                    mean_delta,
                ));

                estimators.push(BenchmarkEstimatorReport {
                    estimator: slug,
                    method: method.name().to_string(),
                    rule: rule.name(),
                    summary,
                    mean_delta,
                    exact_recovery_failures: rows
                        .iter()
                        .filter(|r| !r.combos[ci].stats.exact_recovery)
                        .count(),
                });
            }

            let report = BenchmarkConfigReport {
                schema: SCHEMA,
                model: model_name(args.model).to_string(),
                p,
                n,
                reps: args.reps,
                construction_retries: rows.iter().map(|r| r.retries).sum(),
                estimators,
            };
            write_json(
                out.join(format!("report_{}_p{p}_n{n}.json", model_name(args.model))),
                &report,
            )?;
            println!(
                "benchmark: {} p={p} n={n} reps={} done",
                model_name(args.model),
                args.reps
            );
        }
    }

    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    println!("benchmark: wrote {}", csv_path.display());
    Ok(())
}

fn run_benchmark_rep(
    args: &BenchmarkArgs,
    seed: u64,
    config: &str,
    rep: u64,
    p: usize,
    n: usize,
    combos: &[(Method, ThresholdRule)],
) -> Result<RepRow> {
    let (inst, retries) = build_instance(
        args.model, p, n, args.rho, args.c_a, args.s1, seed, config, rep,
    )?;
    let panel = sample_var1(&inst, n, derive_seed(seed, config, rep, "path"))?;
    let centered = panel.center();
    let cov = sample_cov_centered(&centered);

    let kernel = KernelSpec::qs_andrews();
    let theta: Option<LrvMatrix> = if combos.iter().any(|(m, _)| matches!(m, Method::Proposed)) {
        Some(crate::lrv::lrv_matrix(&centered, &kernel)?)
    } else {
        None
    };
    let theta_c: Option<SymMatrix> = if combos.iter().any(|(m, _)| matches!(m, Method::CaiLiu)) {
        Some(cai_liu_variance(&centered, &cov.sigma))
    } else {
        None
    };

    let mut outs = Vec::with_capacity(combos.len());
    for (method, rule) in combos {
        let mut spec = EstimatorSpec::new(*method, *rule, 0.0);
        // Every estimator tunes on the same consecutive five-fold partition;
        // only the proposed method masks its lag sums to the training folds.
        let cfg = BlockCvConfig {
            k_blocks: args.cv.k_blocks,
            buffer: args.cv.buffer,
            grid_m: args.cv.grid_m,
            seed: derive_seed(seed, config, rep, "cv"),
        };
        let cv = block_cv_delta(&panel, &spec, &cfg)?;
        spec.delta = cv.best_delta;
        let est = threshold_matrix(&cov, &spec, theta.as_ref(), theta_c.as_ref(), p)?;
        outs.push(ComboOut {
            loss: spectral_loss(&est.estimate, &inst.sigma_true)?,
            stats: support_stats(&est.support, &inst.support_true)?,
            delta: cv.best_delta,
            mask: est.support,
        });
    }
    Ok(RepRow {
        combos: outs,
        retries,
    })
}

// ---------------------------------------------------------------- backtest

fn cmd_backtest(args: BacktestArgs, seed: u64, out: &Path) -> Result<()> {
    let windows = parse_windows(&args.windows)?;
    let estimators: Result<Vec<BacktestEstimator>> = args
        .estimators
        .split(',')
        .map(|tok| parse_estimator(tok, args.eta))
        .collect();
    let estimators = estimators?;
    if estimators.is_empty() {
        return Err(Error::Config("--estimators is empty".into()));
    }
    let panel = panel::load_csv(&args.input)?;
    for &w in &windows {
        if w + args.hold > panel.n_obs() {
            return Err(Error::Config(format!(
                "window {w} plus hold {} exceeds the {}-row panel",
                args.hold,
                panel.n_obs()
            )));
        }
    }

    let per_window: Result<Vec<Vec<BacktestCell>>> = windows
        .par_iter()
        .map(|&window| {
            let cfg = BacktestConfig {
                window,
                hold: args.hold,
                target_annual_return: args.target_annual_return,
                trading_days: args.trading_days,
                eigen_floor: args.eigen_floor,
                estimators: estimators.clone(),
                cv: args.cv.to_config(seed),
            };
            let results = backtest(&panel, &cfg)?;
            Ok(results
                .iter()
                .map(|r| {
                    let deltas: Vec<f64> = r
                        .rebalance_log
                        .iter()
                        .filter_map(|e| e.delta)
                        .collect();
                    BacktestCell {
                        window,
                        estimator: r.estimator.clone(),
                        portfolio: r.portfolio.clone(),
                        annualized_risk: r.annualized_risk,
                        sharpe: r.sharpe,
                        rebalances: r.rebalance_log.len(),
                        gmvp_fallbacks: r
                            .rebalance_log
                            .iter()
                            .filter(|e| e.gmvp_fallback)
                            .count(),
                        mean_delta: summarize(&deltas).map(|s| s.mean),
                    }
                })
                .collect())
        })
        .collect();
    let cells: Vec<BacktestCell> = per_window?.into_iter().flatten().collect();

    let mut csv =
        String::from("window,estimator,portfolio,annualized_risk,sharpe,rebalances,gmvp_fallbacks,mean_delta\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{:.6},{},{},{},{}\n",
            c.window,
            c.estimator,
            c.portfolio,
            c.annualized_risk,
            c.sharpe.map_or(String::new(), |s| format!("{s:.6}")),
            c.rebalances,
            c.gmvp_fallbacks,
            c.mean_delta.map_or(String::new(), |d| format!("{d:.4}")),
        ));
    }
    let csv_path = out.join("backtest.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let report = BacktestReport {
        schema: SCHEMA,
        input: args.input.display().to_string(),
        hold: args.hold,
        target_annual_return: args.target_annual_return,
        trading_days: args.trading_days,
        cells,
    };
    write_json(out.join("backtest.json"), &report)?;
    println!(
        "backtest: {} windows x {} estimators -> {}",
        windows.len(),
        estimators.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- rank

fn load_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| Error::Parse {
            row: lineno + 1,
            col: 1,
            message: format!("expected an integer class label, got {line:?}"),
        })?);
    }
    if labels.len() != n {
        return Err(Error::Config(format!(
            "label file has {} entries but the panel has {} rows",
            labels.len(),
            n
        )));
    }
    Ok(labels)
}

fn cmd_rank(args: RankArgs, out: &Path) -> Result<()> {
    let panel = panel::load_csv(&args.input)?;
    let p = panel.n_series();
    if args.top + args.bottom > p {
        return Err(Error::Config(format!(
            "--top {} plus --bottom {} exceeds the {p} panel columns",
            args.top, args.bottom
        )));
    }

    let (method_name, scores) = match args.method {
        RankMethodArg::Fstat => {
            let Some(label_path) = &args.labels else {
                return Err(Error::Config(
                    "--method fstat requires --labels <file> with one class per row".into(),
                ));
            };
            let labels = load_labels(label_path, panel.n_obs())?;
            ("fstat", f_statistic_ranking(&panel, &labels)?)
        }
        RankMethodArg::Abscorr => {
            if args.labels.is_some() {
                eprintln!("warning: --labels is ignored by --method abscorr");
            }
            ("abscorr", abs_corr_score(&panel)?)
        }
    };

    // Descending by score; NaN (degenerate columns) sorts last; ties stay in
    // column order.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        match (sa.is_nan(), sb.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (false, false) => sb.partial_cmp(&sa).unwrap().then(a.cmp(&b)),
        }
    });

    let ranking: Vec<(usize, f64)> = order.iter().map(|&j| (j, scores[j])).collect();
    let selected: Vec<usize> = order[..args.top]
        .iter()
        .chain(order[p - args.bottom..].iter())
        .copied()
        .collect();

    let mut csv = String::from("rank,column,score\n");
    for (r, &(j, s)) in ranking.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", r + 1, j, panel::format_float(s)));
    }
    let csv_path = out.join("ranking.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let n = panel.n_obs();
    let mut reduced = Array2::<f64>::zeros((n, selected.len()));
    for (k, &j) in selected.iter().enumerate() {
        for t in 0..n {
            reduced[[t, k]] = panel.data()[[t, j]];
        }
    }
    let header: Vec<String> = selected.iter().map(|j| format!("c{j}")).collect();
    panel::write_csv(&out.join("reduced.csv"), &reduced, Some(&header))?;

    let report = RankReport {
        schema: SCHEMA,
        input: args.input.display().to_string(),
        method: method_name.to_string(),
        top: args.top,
        bottom: args.bottom,
        ranking,
        selected,
    };
    write_json(out.join("rank.json"), &report)?;
    println!(
        "rank: {} over {p} columns, kept {} -> {}",
        method_name,
        args.top + args.bottom,
        out.display()
    );
    Ok(())
}
