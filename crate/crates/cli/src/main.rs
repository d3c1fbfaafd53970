//! Batch CLI for robust bootstrap prediction intervals.
//!
//! Subcommands: `simulate`, `contaminate`, `fit`, `forecast`,
//! `experiment`. Outputs go to files or stdout; diagnostics and the fully
//! resolved configuration go to stderr. Exit codes: 0 ok, 2 bad
//! input/usage, 3 numerical failure.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arboot_core::{
    apply_transform, bootstrap_future_draws, bootstrap_paths, contaminate_ao, contaminate_io,
    draw_positions, evaluate_fit, fit as fit_series, forecast, interval_from_draws, load_csv_opts,
    normal_quantile_interval, prepare_bootstrap_residuals, select_order_aic, simulate,
    ArModelSpec, ContaminationAmount, CsvOptions, FitConfig, InnovationSource, OutlierKind,
    OutlierPlan, OutlierTarget, SeriesMatrix, TransformKind, TransformSpec, WeightedFit,
};
use clap::{Args, Parser, Subcommand};

use config::{
    model_from_kv, parse_distribution, parse_f64_list, parse_method, parse_rescale,
    resolved_text, scenario_from_kv, KvConfig, ScenarioOverrides,
};
use report::{forecast_csv, FitReport, ForecastReport, IntervalsDto};

#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn input(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            code: 2,
        }
    }

    pub fn numeric(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            code: 3,
        }
    }
}

impl From<arboot_core::Error> for CliError {
    fn from(e: arboot_core::Error) -> Self {
        let code = if e.is_input_error() { 2 } else { 3 };
        Self {
            kind: "core".into(),
            message: e.to_string(),
            code,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "arboot",
    version,
    about = "Robust bootstrap prediction intervals for AR/VAR time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an AR/VAR path to CSV.
    Simulate(SimulateArgs),
    /// Inject additive or innovative outliers into a CSV series.
    Contaminate(ContaminateArgs),
    /// Estimate a model and write a fit report (JSON).
    Fit(FitArgs),
    /// Bootstrap prediction intervals / Bonferroni cubes (JSON + CSV).
    Forecast(ForecastArgs),
    /// Run a Monte Carlo scenario from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ModelFlags {
    /// Model config file (key = value; see configs/).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Univariate lag coefficients, comma separated (one per lag).
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<String>,
    /// Intercept (univariate shorthand).
    #[arg(long, allow_hyphen_values = true)]
    phi0: Option<f64>,
    /// Innovation variance (univariate shorthand).
    #[arg(long)]
    sigma2: Option<f64>,
}

impl ModelFlags {
    fn build(&self) -> Result<ArModelSpec, CliError> {
        let mut kv = match &self.config {
            Some(path) => KvConfig::load(path)?,
            None => KvConfig::default(),
        };
        // flags win over file values
        let mut overlay = String::new();
        if let Some(phi) = &self.phi {
            overlay.push_str(&format!("phi = {phi}\n"));
        }
        if let Some(phi0) = self.phi0 {
            overlay.push_str(&format!("phi0 = {phi0}\n"));
        }
        if let Some(s2) = self.sigma2 {
            overlay.push_str(&format!("sigma2 = {s2}\n"));
        }
        if !overlay.is_empty() {
            let over = KvConfig::parse(&overlay)?;
            kv = kv.merged_with(&over);
        }
        model_from_kv(&kv)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    length: usize,
    #[arg(long, default_value_t = arboot_core::DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Independent stream id under the same seed.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Innovation law: gaussian, t:DF, or chisq:DF.
    #[arg(long, default_value = "gaussian")]
    dist: String,
}

#[derive(Args)]
struct ContaminateArgs {
    /// Input CSV (observations for AO, innovations for IO).
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Outlier kind: ao or io.
    #[arg(long)]
    kind: String,
    /// Outlier size, scalar or one value per component.
    #[arg(long, allow_hyphen_values = true)]
    delta: String,
    /// 1-based components to hit (default: all).
    #[arg(long)]
    mask: Option<String>,
    /// Fraction of the span to contaminate.
    #[arg(long)]
    rate: Option<f64>,
    /// Exact number of outliers.
    #[arg(long)]
    count: Option<usize>,
    /// Explicit 1-based time indices (skips random drawing).
    #[arg(long)]
    positions: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    has_header: bool,
    /// Model config file (required for io).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct EstimationFlags {
    /// Lag order: a number, or `auto` for AIC selection.
    #[arg(long, default_value = "auto")]
    order: String,
    /// Largest candidate order for `--order auto`.
    #[arg(long, default_value_t = 8)]
    p_max: usize,
    /// Estimator: ols or weighted.
    #[arg(long, default_value = "weighted")]
    method: String,
    /// Kernel bandwidth factor (g^2 = c * sigma^2).
    #[arg(long)]
    smoothing_c: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Residual pool rescaling: center or standardize.
    #[arg(long)]
    rescale: Option<String>,
    /// Key = value defaults for any of the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl EstimationFlags {
    fn fit_config(&self) -> Result<FitConfig, CliError> {
        let kv = match &self.config {
            Some(path) => KvConfig::load(path)?,
            None => KvConfig::default(),
        };
        let mut cfg = FitConfig::default();
        cfg.method = parse_method(&self.method)?;
        if let Some(c) = self.smoothing_c.or(kv.parse_key("smoothing-c")?) {
            cfg.kernel_smoothing_c = c;
        }
        if let Some(tol) = self.tol.or(kv.parse_key("tol")?) {
            cfg.tol = tol;
        }
        if let Some(mi) = self.max_iter.or(kv.parse_key("max-iter")?) {
            cfg.max_iter = mi;
        }
        let rescale_text = self
            .rescale
            .clone()
            .or_else(|| kv.get("rescale").map(str::to_string));
        if let Some(text) = rescale_text {
            cfg.rescale_mode = parse_rescale(&text)?;
        }
        Ok(cfg)
    }

    /// Fixed order, or None for AIC selection up to `p_max`.
    fn order(&self) -> Result<Option<usize>, CliError> {
        let text = self.order.trim();
        if text.eq_ignore_ascii_case("auto") {
            return Ok(None);
        }
        text.parse::<usize>().map(Some).map_err(|_| {
            CliError::input("flags", format!("--order must be a number or `auto`, got {text:?}"))
        })
    }
}

#[derive(Args)]
struct InputFlags {
    /// Input CSV path.
    input: PathBuf,
    #[arg(long)]
    has_header: bool,
    /// Treat the first column as a time index: validate and drop it.
    #[arg(long)]
    time_column: bool,
    /// Level transform: none, log-return, or log-return-pct.
    #[arg(long, default_value = "none")]
    transform: String,
}

impl InputFlags {
    fn load(&self) -> Result<SeriesMatrix, CliError> {
        let series = load_csv_opts(
            &self.input,
            CsvOptions {
                has_header: self.has_header,
                time_column: self.time_column,
            },
        )?;
        let kind = match self.transform.to_ascii_lowercase().as_str() {
            "none" => TransformKind::None,
            "log-return" => TransformKind::LogReturn,
            "log-return-pct" => TransformKind::LogReturnPct,
            other => {
                return Err(CliError::input(
                    "flags",
                    format!("unknown transform {other:?}"),
                ))
            }
        };
        Ok(apply_transform(&series, TransformSpec::new(kind))?)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputFlags,
    #[command(flatten)]
    estimation: EstimationFlags,
    /// Report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    input: InputFlags,
    #[command(flatten)]
    estimation: EstimationFlags,
    /// Output prefix: writes PREFIX.json and PREFIX.csv (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    horizon: usize,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    #[arg(long, default_value_t = 1999)]
    b_reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Skip re-estimation: use a fitted model from a config file and
    /// compute residuals/weights at those parameters.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Scenario config file (key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json, report.csv, resolved.conf.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mc_reps: Option<usize>,
    #[arg(long)]
    b_reps: Option<usize>,
    #[arg(long)]
    r_futures: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_t: Option<usize>,
    /// Comma-separated estimator list (ols,weighted).
    #[arg(long)]
    estimators: Option<String>,
    /// Cap the worker thread count.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.message, "kind": e.kind })
            );
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Contaminate(args) => cmd_contaminate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn series_to_csv(series: &SeriesMatrix) -> String {
    let mut out = series.labels().join(",");
    out.push('\n');
    let v = series.values();
    for t in 0..series.length_t() {
        let row: Vec<String> = (0..series.dim_n()).map(|c| v[(t, c)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir).map_err(|e| {
                        CliError::input("io", format!("cannot create {}: {e}", dir.display()))
                    })?;
                }
            }
            std::fs::write(path, content).map_err(|e| {
                CliError::input("io", format!("cannot write {}: {e}", path.display()))
            })?;
            println!("{}", path.display());
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn log_resolved(lines: &[(&str, String)]) {
    eprintln!("# resolved configuration");
    for (k, v) in lines {
        eprintln!("# {k} = {v}");
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let model = args.model.build()?;
    let dist = parse_distribution(&args.dist)?;
    let source = InnovationSource::new(dist, args.seed).with_stream(args.stream);
    log_resolved(&[
        ("length", args.length.to_string()),
        ("burn-in", args.burn_in.to_string()),
        ("seed", args.seed.to_string()),
        ("stream", args.stream.to_string()),
        ("dist", args.dist.clone()),
        ("n", model.dim_n().to_string()),
        ("p", model.order_p().to_string()),
    ]);
    let series = simulate(&model, args.length, &source, args.burn_in)?;
    write_or_print(args.out.as_deref(), &series_to_csv(&series))
}

fn cmd_contaminate(args: ContaminateArgs) -> Result<(), CliError> {
    let series = load_csv_opts(
        &args.input,
        CsvOptions {
            has_header: args.has_header,
            time_column: false,
        },
    )?;
    let n = series.dim_n();
    let kind = match args.kind.to_ascii_lowercase().as_str() {
        "ao" => OutlierKind::Ao,
        "io" => OutlierKind::Io,
        other => return Err(CliError::input("flags", format!("unknown kind {other:?}"))),
    };
    let delta_vals = parse_f64_list(&args.delta)?;
    let delta = if delta_vals.len() == 1 {
        nalgebra::DVector::from_element(n, delta_vals[0])
    } else if delta_vals.len() == n {
        nalgebra::DVector::from_vec(delta_vals)
    } else {
        return Err(CliError::input(
            "flags",
            format!("--delta needs 1 or {n} values"),
        ));
    };
    let mask = match &args.mask {
        None => vec![true; n],
        Some(text) => {
            let mut mask = vec![false; n];
            for part in text.split(',') {
                let idx: usize = part
                    .trim()
                    .parse()
                    .map_err(|_| CliError::input("flags", format!("bad mask entry {part:?}")))?;
                if idx == 0 || idx > n {
                    return Err(CliError::input(
                        "flags",
                        format!("mask component {idx} outside 1..={n}"),
                    ));
                }
                mask[idx - 1] = true;
            }
            mask
        }
    };
    let positions: Vec<usize> = match (&args.positions, args.rate, args.count) {
        (Some(text), None, None) => {
            let mut out = Vec::new();
            for part in text.split(',') {
                let idx: usize = part.trim().parse().map_err(|_| {
                    CliError::input("flags", format!("bad position {part:?}"))
                })?;
                if idx == 0 {
                    return Err(CliError::input("flags", "positions are 1-based"));
                }
                out.push(idx - 1);
            }
            out
        }
        (None, rate, count) => {
            let amount = match (rate, count) {
                (Some(r), None) => ContaminationAmount::Rate(r),
                (None, Some(k)) => ContaminationAmount::Count(k),
                _ => {
                    return Err(CliError::input(
                        "flags",
                        "set exactly one of --rate, --count, or --positions",
                    ))
                }
            };
            let rng = InnovationSource::gaussian(args.seed);
            draw_positions(amount, series.length_t(), &rng)?
        }
        _ => {
            return Err(CliError::input(
                "flags",
                "set exactly one of --rate, --count, or --positions",
            ))
        }
    };
    log_resolved(&[
        ("kind", args.kind.clone()),
        ("positions", format!("{positions:?}")),
        ("seed", args.seed.to_string()),
    ]);
    let plan = OutlierPlan::new(kind, delta, positions, mask, OutlierTarget::Training)?;
    let out = match kind {
        OutlierKind::Ao => contaminate_ao(&series, &plan)?,
        OutlierKind::Io => {
            let model_path = args.model.as_ref().ok_or_else(|| {
                CliError::input("flags", "--kind io needs --model (innovations are regenerated through the recursion)")
            })?;
            let kv = KvConfig::load(model_path)?;
            let model = model_from_kv(&kv)?;
            let innovations: Vec<nalgebra::DVector<f64>> =
                (0..series.length_t()).map(|t| series.row(t)).collect();
            contaminate_io(&model, &innovations, &plan)?
        }
    };
    write_or_print(args.out.as_deref(), &series_to_csv(&out))
}

struct FittedSeries {
    series: SeriesMatrix,
    fit: WeightedFit,
    config: FitConfig,
    selection: Option<arboot_core::OrderSelection>,
}

fn load_and_fit(
    input: &InputFlags,
    estimation: &EstimationFlags,
    model_file: Option<&Path>,
) -> Result<FittedSeries, CliError> {
    let series = input.load()?;
    let config = estimation.fit_config()?;
    if let Some(path) = model_file {
        let kv = KvConfig::load(path)?;
        let model = model_from_kv(&kv)?;
        let fit = evaluate_fit(&series, &model, &config)?;
        return Ok(FittedSeries {
            series,
            fit,
            config,
            selection: None,
        });
    }
    let (order, selection) = match estimation.order()? {
        Some(p) => (p, None),
        None => {
            let sel = select_order_aic(&series, estimation.p_max, &config)?;
            (sel.selected, Some(sel))
        }
    };
    let fit = fit_series(&series, order, &config)?;
    Ok(FittedSeries {
        series,
        fit,
        config,
        selection,
    })
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    log_resolved(&[
        ("input", args.input.input.display().to_string()),
        ("order", args.estimation.order.clone()),
        ("p-max", args.estimation.p_max.to_string()),
        ("method", args.estimation.method.clone()),
        ("transform", args.input.transform.clone()),
    ]);
    let fitted = load_and_fit(&args.input, &args.estimation, None)?;
    let report = FitReport::new(
        &fitted.fit,
        fitted.series.labels(),
        fitted.selection.as_ref(),
    );
    let json = serde_json::to_string_pretty(&report).expect("report serialization");
    write_or_print(args.out.as_deref(), &(json + "\n"))
}

fn cmd_forecast(args: ForecastArgs) -> Result<(), CliError> {
    if args.horizon == 0 {
        return Err(CliError::input("flags", "--horizon must be at least 1"));
    }
    log_resolved(&[
        ("input", args.input.input.display().to_string()),
        ("method", args.estimation.method.clone()),
        ("order", args.estimation.order.clone()),
        ("horizon", args.horizon.to_string()),
        ("gamma", args.gamma.to_string()),
        ("b-reps", args.b_reps.to_string()),
        ("seed", args.seed.to_string()),
        ("transform", args.input.transform.clone()),
    ]);
    let fitted = load_and_fit(&args.input, &args.estimation, args.model.as_deref())?;
    let pool = prepare_bootstrap_residuals(&fitted.fit, fitted.config.rescale_mode)?;
    let rng = InnovationSource::gaussian(args.seed);
    let params = bootstrap_paths(
        &fitted.series,
        &fitted.fit,
        &pool,
        args.b_reps,
        &rng,
        &fitted.config,
    )?;
    let fc = bootstrap_future_draws(
        &fitted.series,
        &fitted.fit,
        &params,
        &pool,
        args.horizon,
        args.gamma,
        &rng,
    )?;
    let boot_iv = interval_from_draws(&fc)?;
    let point = forecast(fitted.fit.model(), &fitted.series, args.horizon)?;
    let normal_iv = normal_quantile_interval(&point, fitted.fit.model(), args.gamma)?;

    let report = ForecastReport {
        method: fitted.fit.method().tag().to_string(),
        order: fitted.fit.model().order_p(),
        labels: fitted.series.labels().to_vec(),
        horizon: args.horizon,
        gamma: args.gamma,
        b_reps: args.b_reps,
        effective_b: fc.draws.len(),
        excluded_replicates: fc.excluded,
        redrawn_replicates: fc.redrawn,
        seed: args.seed,
        point: point
            .iter()
            .map(|y| y.iter().cloned().collect())
            .collect(),
        bootstrap: IntervalsDto::from_intervals(&boot_iv),
        normal: IntervalsDto::from_intervals(&normal_iv),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serialization");
    let csv = forecast_csv(fitted.series.labels(), &point, &boot_iv, &normal_iv);
    match &args.out {
        Some(prefix) => {
            let json_path = prefix.with_extension("json");
            let csv_path = prefix.with_extension("csv");
            write_or_print(Some(&json_path), &(json + "\n"))?;
            write_or_print(Some(&csv_path), &csv)?;
            Ok(())
        }
        None => {
            print!("{json}\n{csv}");
            Ok(())
        }
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let kv = KvConfig::load(&args.config)?;
    let overrides = ScenarioOverrides {
        mc_reps: args.mc_reps,
        b_reps: args.b_reps,
        r_futures: args.r_futures,
        horizon: args.horizon,
        gamma: args.gamma,
        seed: args.seed,
        sample_t: args.sample_t,
        estimators: args.estimators.clone(),
        threads: args.threads,
    };
    let resolved = scenario_from_kv(&kv, &overrides)?;
    let resolved_conf = resolved_text(&resolved);
    eprintln!("# resolved configuration");
    for line in resolved_conf.lines() {
        eprintln!("# {line}");
    }

    let report = match resolved.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::numeric("threads", e.to_string()))?;
            pool.install(|| arboot_core::run_scenario(&resolved.config))?
        }
        None => arboot_core::run_scenario(&resolved.config)?,
    };
    if report.unreliable {
        eprintln!("# warning: more than 2% of bootstrap replicates were excluded; treat results as unreliable");
    }

    std::fs::create_dir_all(&args.out).map_err(|e| {
        CliError::input("io", format!("cannot create {}: {e}", args.out.display()))
    })?;
    write_or_print(Some(&args.out.join("report.json")), &(report.to_json() + "\n"))?;
    write_or_print(Some(&args.out.join("report.csv")), &report.to_csv())?;
    write_or_print(Some(&args.out.join("resolved.conf")), &resolved_conf)?;
    Ok(())
}
