mod plot;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use tailbound::asymptotics::{finite_a_quantile_ratio, finite_a_ratio, limit_ratio_prob, limit_ratio_quantile, AnalyticTail, RegimeMode, TailRegime};
use tailbound::bound::{
    min_over_thresholds, perturbed, sensitivity, solve_moment_problem, worst_case_quantile_with, worst_case_tail_prob_with, Backend,
    ClosedFormParams, SolveOptions,
};
use tailbound::calibration::{calibrate_problems, nontail_cdf, Bandwidth, CalibrationConfig, SetKind, Setting};
use tailbound::evtbaseline::{mean_excess_curve, pot_upper_bound, suggest_threshold};
use tailbound::harness::{run_experiment_with, write_records_csv, write_rows_csv, ExperimentConfig};
use tailbound::model::{json_num, BoundResult, DroProblem, Objective, ShapeSpec, TailSample, ThresholdSpec};
use tailbound::transform::to_moment_problem;

use plot::{Plot, Series};

#[derive(Parser)]
#[command(name = "tailbound", version, about = "Worst-case tail probability and quantile bounds under shape and moment constraints")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Single-column CSV of observations.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// JSON configuration; flags given explicitly take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Writes a static SVG plot alongside the output.
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetArg {
    Chi2,
    Ks,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    Sos,
    Cutting,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Pareto,
    Normal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Probability,
    Quantile,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Shape order D (0 none, 1 monotone, 2 convex).
    #[arg(long)]
    order: Option<u8>,
    #[arg(long, value_enum)]
    set: Option<SetArg>,
    /// Threshold(s) as sample quantile levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    threshold: Option<Vec<f64>>,
    /// Threshold(s) as absolute values, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "threshold")]
    threshold_abs: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Writes the SOS cone program as JSON before solving.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Upper bound on P(lo ≤ X ≤ hi).
    BoundProb {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        lo: Option<f64>,
        /// Right end; `inf` for a one-sided tail.
        #[arg(long)]
        hi: Option<f64>,
    },
    /// Upper bound on the p-quantile.
    BoundQuantile {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Prints the calibrated shape and moment parameters.
    Calibrate {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Conservativeness of the convex-tail bound: limits and finite-threshold ratios.
    Conserv {
        /// Tail index ξ of the limit (defaults from --dist).
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Probability)]
        mode: ModeArg,
        /// Regime parameter: b = a + x·F̄(a)/f(a), or 1 − p = x·F̄(a).
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[arg(long, value_enum)]
        dist: Option<DistArg>,
        /// Pareto tail index α.
        #[arg(long, default_value_t = 1.0)]
        tail_index: f64,
        /// Thresholds for the finite-a ratios, comma separated.
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
    },
    /// Peaks-over-threshold GPD baseline.
    Pot {
        #[arg(long)]
        lo: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        hi: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// GPD threshold; chosen from the mean excess plot when omitted.
        #[arg(long)]
        u: Option<f64>,
    },
    /// Repeated synthetic experiment (requires --config).
    Experiment {
        /// Per-repetition records as CSV.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Runs repetitions one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Derivative of the bound along a direction of the pinned moment values.
    Sensitivity {
        /// Direction, mass coordinate first; padded with zeros.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        direction: Vec<f64>,
        /// Also reports a central finite difference with this step.
        #[arg(long)]
        fd_step: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
    },
}

/// Config file for the single-sample subcommands.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BoundConfig {
    order: u8,
    set: SetKind,
    dim: usize,
    thresholds: ThresholdSpec,
    lo: Option<f64>,
    hi: Option<f64>,
    p: Option<f64>,
    alpha: f64,
    #[serde(rename = "bootstrap_B")]
    bootstrap_b: usize,
    bandwidth: Bandwidth,
    seed: u64,
    backend: Backend,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            order: 2,
            set: SetKind::Ellipsoid,
            dim: 2,
            thresholds: ThresholdSpec::quantiles(vec![0.7]),
            lo: None,
            hi: None,
            p: None,
            alpha: 0.05,
            bootstrap_b: 500,
            bandwidth: Bandwidth::Auto,
            seed: 0,
            backend: Backend::Auto,
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_bound_config(common: &Common, args: &ProblemArgs) -> Result<(BoundConfig, SolveOptions)> {
    let mut cfg: BoundConfig = match &common.config {
        Some(p) => read_json(p)?,
        None => BoundConfig::default(),
    };
    if let Some(o) = args.order {
        cfg.order = o;
    }
    if let Some(s) = args.set {
        cfg.set = match s {
            SetArg::Chi2 => SetKind::Ellipsoid,
            SetArg::Ks => SetKind::Rectangle,
        };
    }
    if let Some(t) = &args.threshold {
        cfg.thresholds = ThresholdSpec::quantiles(t.clone());
    }
    if let Some(t) = &args.threshold_abs {
        cfg.thresholds = ThresholdSpec::absolute(t.clone());
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(b) = args.bootstrap_b {
        cfg.bootstrap_b = b;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = args.backend {
        cfg.backend = match b {
            BackendArg::Auto => Backend::Auto,
            BackendArg::Sos => Backend::Sos,
            BackendArg::Cutting => Backend::CuttingPlane,
        };
    }
    if cfg.order > 2 {
        bail!("--order must be 0, 1 or 2");
    }
    let mut opts = SolveOptions::with_backend(cfg.backend);
    opts.dump = args.dump.clone();
    Ok((cfg, opts))
}

fn load_sample(common: &Common) -> Result<Arc<TailSample>> {
    let path = common.data.as_ref().ok_or_else(|| anyhow!("--data <csv> is required"))?;
    Ok(Arc::new(TailSample::from_csv_path(path).with_context(|| format!("reading {}", path.display()))?))
}

fn calibrated(common: &Common, cfg: &BoundConfig, objective: Objective) -> Result<(Arc<TailSample>, Vec<DroProblem>)> {
    let sample = load_sample(common)?;
    let thresholds = cfg.thresholds.resolve(&sample)?;
    let calib = CalibrationConfig { alpha: cfg.alpha, bootstrap_b: cfg.bootstrap_b, bandwidth: cfg.bandwidth, seed: cfg.seed };
    let setting = Setting { order: cfg.order, set: cfg.set, dim: cfg.dim };
    let problems = calibrate_problems(sample.clone(), &thresholds, setting, objective, &calib)?;
    Ok((sample, problems))
}

fn emit(common: &Common, text: String) -> Result<()> {
    match &common.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_text(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn emit_bounds(common: &Common, kind: &str, setting: &str, objective: Value, per: Vec<BoundResult>) -> Result<()> {
    if let Some(path) = &common.plot {
        let pts: Vec<(f64, f64)> = per.iter().map(|r| (r.threshold_used, r.reported)).collect();
        Plot { title: &format!("{kind} bound by threshold {setting}"), x_label: "threshold a", y_label: kind, log_x: false, series: vec![Series { label: setting.into(), points: pts }] }
            .write(path)?;
    }
    let best = min_over_thresholds(per.clone())?;
    let text = match common.format {
        Format::Json => {
            let v = json!({
                "setting": setting,
                "objective": objective,
                "bound": best.to_json(),
                "per_threshold": per.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => csv_text(
            "threshold,value,status,backend",
            per.iter().map(|r| format!("{},{},{:?},{}", r.threshold_used, r.reported, r.status, r.diagnostics.backend)),
        ),
    };
    emit(common, text)
}

fn cmd_bound_prob(common: &Common, args: &ProblemArgs, lo: Option<f64>, hi: Option<f64>) -> Result<()> {
    let (cfg, opts) = load_bound_config(common, args)?;
    let lo = lo.or(cfg.lo).ok_or_else(|| anyhow!("--lo is required"))?;
    let hi = hi.or(cfg.hi).unwrap_or(f64::INFINITY);
    let objective = Objective::TailInterval { lo, hi };
    let (_, problems) = calibrated(common, &cfg, objective)?;
    let per = problems.iter().map(|p| worst_case_tail_prob_with(p, &opts)).collect::<tailbound::Result<Vec<_>>>()?;
    let setting = Setting { order: cfg.order, set: cfg.set, dim: cfg.dim }.label();
    emit_bounds(common, "probability", &setting, json!({"lo": lo, "hi": json_num(hi)}), per)
}

fn cmd_bound_quantile(common: &Common, args: &ProblemArgs, p: Option<f64>) -> Result<()> {
    let (cfg, opts) = load_bound_config(common, args)?;
    let p = p.or(cfg.p).ok_or_else(|| anyhow!("--p is required"))?;
    let (sample, problems) = calibrated(common, &cfg, Objective::Quantile { p })?;
    let per = problems
        .iter()
        .map(|pr| worst_case_quantile_with(pr, p, nontail_cdf(&sample, pr.a), &opts))
        .collect::<tailbound::Result<Vec<_>>>()?;
    let setting = Setting { order: cfg.order, set: cfg.set, dim: cfg.dim }.label();
    emit_bounds(common, "quantile", &setting, json!({"p": p}), per)
}

fn cmd_calibrate(common: &Common, args: &ProblemArgs) -> Result<()> {
    let (cfg, _) = load_bound_config(common, args)?;
    // the objective is irrelevant to calibration; any valid one will do
    let sample = load_sample(common)?;
    let top = cfg.thresholds.resolve(&sample)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let (_, problems) = calibrated(common, &cfg, Objective::TailInterval { lo: top, hi: f64::INFINITY })?;
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(&problems.iter().map(problem_json).collect::<Vec<_>>())? + "\n",
        Format::Csv => csv_text(
            "threshold,order,eta_lo,eta_hi,nu,mass_max",
            problems.iter().map(|p| {
                let (o, lo, hi, nu) = match p.shape {
                    ShapeSpec::None => (0, f64::NAN, f64::NAN, f64::NAN),
                    ShapeSpec::Monotone { eta } => (1, f64::NAN, eta, f64::NAN),
                    ShapeSpec::Convex { eta_lo, eta_hi, nu } => (2, eta_lo, eta_hi, nu),
                };
                format!("{},{o},{lo},{hi},{nu},{}", p.a, p.mass_cap())
            }),
        ),
    };
    emit(common, text)
}

fn problem_json(p: &DroProblem) -> Value {
    json!({ "a": p.a, "shape": p.shape, "moments": p.moments, "mass_max": p.mass_cap() })
}

fn cmd_conserv(common: &Common, xi: Option<f64>, mode: ModeArg, x: f64, dist: Option<DistArg>, tail_index: f64, a_grid: &[f64]) -> Result<()> {
    let tail = dist.map(|d| match d {
        DistArg::Pareto => AnalyticTail::Pareto { alpha: tail_index, scale: 1.0 },
        DistArg::Normal => AnalyticTail::Normal { mean: 0.0, sd: 1.0 },
    });
    let xi = match (xi, dist) {
        (Some(v), _) => v,
        (None, Some(DistArg::Pareto)) => 1.0 / tail_index,
        (None, Some(DistArg::Normal)) => 0.0,
        (None, None) => bail!("give --xi or --dist"),
    };
    let mode = match mode {
        ModeArg::Probability => RegimeMode::Probability,
        ModeArg::Quantile => RegimeMode::Quantile,
    };
    let regime = TailRegime { xi, mode, x };
    let limit = match mode {
        RegimeMode::Probability => limit_ratio_prob(&regime)?,
        RegimeMode::Quantile => limit_ratio_quantile(&regime)?,
    };
    let mut rows = Vec::new();
    if let Some(t) = tail {
        for &a in a_grid {
            let r = match mode {
                RegimeMode::Probability => {
                    let (beta, eta, _) = t.params_at(a);
                    finite_a_ratio(&t, a, a + x * beta / eta)?
                }
                RegimeMode::Quantile => finite_a_quantile_ratio(&t, a, x)?,
            };
            rows.push((a, r));
        }
    }
    if let Some(path) = &common.plot {
        let mut series = vec![Series { label: "finite a".into(), points: rows.iter().map(|(a, r)| (*a, r.ratio)).collect() }];
        if let (Some(&first), Some(&last)) = (a_grid.first(), a_grid.last()) {
            series.push(Series { label: "limit".into(), points: vec![(first, limit), (last, limit)] });
        }
        Plot { title: "bound / truth", x_label: "threshold a", y_label: "ratio", log_x: true, series }.write(path)?;
    }
    let text = match common.format {
        Format::Json => {
            let v = json!({
                "xi": xi,
                "mode": mode,
                "x": x,
                "limit_ratio": json_num(limit),
                "finite": rows.iter().map(|(a, r)| json!({"a": a, "ratio": json_num(r.ratio), "bound": json_num(r.bound), "truth": r.truth})).collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => {
            let mut out = vec![format!("inf,{limit},,")];
            out.extend(rows.iter().map(|(a, r)| format!("{a},{},{},{}", r.ratio, r.bound, r.truth)));
            csv_text("a,ratio,bound,truth", out)
        }
    };
    emit(common, text)
}

fn cmd_pot(common: &Common, lo: f64, hi: f64, alpha: f64, u: Option<f64>) -> Result<()> {
    let sample = load_sample(common)?;
    let curve = mean_excess_curve(&sample);
    let choice = suggest_threshold(&curve, lo);
    let u = match (u, choice) {
        (Some(u), _) => u,
        (None, Some(c)) => c.u,
        (None, None) => bail!("no admissible threshold on the mean excess plot; pass --u"),
    };
    if let Some(path) = &common.plot {
        let pts = curve.iter().map(|p| (p.u, p.mean_excess)).collect();
        Plot { title: "mean excess", x_label: "u", y_label: "e(u)", log_x: false, series: vec![Series { label: format!("u* = {u:.4}"), points: pts }] }
            .write(path)?;
    }
    let text = match common.format {
        Format::Json => {
            let b = pot_upper_bound(&sample, u, lo, hi, alpha)?;
            let v = json!({
                "threshold": u,
                "threshold_choice": choice,
                "fit": b.fit,
                "estimate": b.estimate,
                "se": b.se,
                "upper": b.upper,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => csv_text("u,mean_excess,exceedances", curve.iter().map(|p| format!("{},{},{}", p.u, p.mean_excess, p.exceedances))),
    };
    emit(common, text)
}

fn cmd_experiment(common: &Common, records: Option<&Path>, sequential: bool) -> Result<()> {
    let path = common.config.as_ref().ok_or_else(|| anyhow!("experiment needs --config <json>"))?;
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = run_experiment_with(&cfg, !sequential && tailbound::par::is_parallel())?;
    log::info!("experiment finished in {:.1}s", out.elapsed_s);
    if let Some(p) = records {
        write_records_csv(&out.records, std::fs::File::create(p)?)?;
    }
    if let Some(p) = &common.plot {
        let series = vec![Series { label: "upper bound".into(), points: out.rows.iter().enumerate().map(|(i, r)| (i as f64, r.upper_bound)).collect() }];
        Plot { title: "mean upper bound by row", x_label: "row", y_label: "bound", log_x: false, series }.write(p)?;
    }
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(&json!({"rows": out.rows, "elapsed_s": out.elapsed_s}))? + "\n",
        Format::Csv => {
            let mut buf = Vec::new();
            write_rows_csv(&out.rows, &mut buf)?;
            String::from_utf8(buf)?
        }
    };
    emit(common, text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sensitivity(common: &Common, direction: &[f64], fd_step: Option<f64>, a: Option<f64>, b: Option<f64>, beta: Option<f64>, eta: Option<f64>, nu: Option<f64>) -> Result<()> {
    let problem: DroProblem = match (&common.config, a, b, beta, eta, nu) {
        (Some(p), ..) => read_json(p)?,
        (None, Some(a), Some(b), Some(beta), Some(eta), Some(nu)) => ClosedFormParams { a, b, beta, eta, nu }.problem()?,
        _ => bail!("give --config <problem json> or all of --a --b --beta --eta --nu"),
    };
    let mp = to_moment_problem(&problem)?;
    let mut dr = direction.to_vec();
    dr.resize(1 + mp.set.dim(), 0.0);
    let s = sensitivity(&mp, &dr)?;
    let fd = match fd_step {
        Some(h) => {
            let opts = SolveOptions::default();
            let up = solve_moment_problem(&perturbed(&mp, h, &dr)?, &opts)?.value;
            let down = solve_moment_problem(&perturbed(&mp, -h, &dr)?, &opts)?.value;
            Some((up - down) / (2.0 * h))
        }
        None => None,
    };
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(&json!({"value": s.value, "direction": dr, "derivative": s.derivative, "finite_difference": fd, "y": s.y}))? + "\n",
        Format::Csv => csv_text("value,derivative,finite_difference", [format!("{},{},{}", s.value, s.derivative, fd.map(|v| v.to_string()).unwrap_or_default())]),
    };
    emit(common, text)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let c = &cli.common;
    match &cli.cmd {
        Cmd::BoundProb { problem, lo, hi } => cmd_bound_prob(c, problem, *lo, *hi),
        Cmd::BoundQuantile { problem, p } => cmd_bound_quantile(c, problem, *p),
        Cmd::Calibrate { problem } => cmd_calibrate(c, problem),
        Cmd::Conserv { xi, mode, x, dist, tail_index, a } => cmd_conserv(c, *xi, *mode, *x, *dist, *tail_index, a),
        Cmd::Pot { lo, hi, alpha, u } => cmd_pot(c, *lo, *hi, *alpha, *u),
        Cmd::Experiment { records, sequential } => cmd_experiment(c, records.as_deref(), *sequential),
        Cmd::Sensitivity { direction, fd_step, a, b, beta, eta, nu } => cmd_sensitivity(c, direction, *fd_step, *a, *b, *beta, *eta, *nu),
    }
}
