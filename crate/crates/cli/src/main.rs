//! `tdoa-forge`: placement design, heatmaps, simulation, estimation and
//! evaluation from files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tdoa_forge::eskf::{run_filter, EskfConfig, FilterRun, GatingReport, Profile};
use tdoa_forge::geometry::Vec3;
use tdoa_forge::io;
use tdoa_forge::measurement::{Pairing, TdoaMode, TdoaParams};
use tdoa_forge::placement::{
    escalate_anchor_count, heatmap, BcmConfig, EscalationAttempt, EscalationConfig, MetricReport, PlacementSearchSpace,
    SurfaceGridOptions,
};
use tdoa_forge::sim::{
    error_curve, rmse, run_monte_carlo, run_scenario, synthesize, trajectory_bound, truth_samples, EvalSummary,
    DEFAULT_WARMUP,
};
use tdoa_forge::{Error, Result};

const EXIT_INPUT: u8 = 1;
const EXIT_TARGET: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "tdoa-forge", version, about = "UWB TDOA anchor placement, filtering and simulation")]
#[command(after_help = "Exit codes: 0 success, 1 input error, 2 target not met, 3 filter divergence.\n\
TDOA_FORGE_THREADS caps worker threads (0 = automatic).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the smallest anchor count and positions meeting an RMSE bound target.
    PlacementOptimize(PlacementArgs),
    /// Evaluate the RMSE bound on a horizontal grid and write it as CSV.
    Heatmap(HeatmapArgs),
    /// Synthesize a scenario, run the filter and evaluate it.
    Sim(SimArgs),
    /// Replay the filter over a measurement log.
    Estimate(EstimateArgs),
    /// Compare an estimate log with ground truth.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PairingArg {
    Ring,
    Disjoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Centralized,
    Decentralized,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Arena,
    Staircase,
    Multiroom,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Arena => Profile::Arena,
            ProfileArg::Staircase => Profile::Staircase,
            ProfileArg::Multiroom => Profile::Multiroom,
        }
    }
}

#[derive(Args)]
struct PlacementArgs {
    /// Environment JSON.
    #[arg(long)]
    env: PathBuf,
    /// Target points JSON.
    #[arg(long)]
    targets: PathBuf,
    /// Required aggregate RMSE bound, m.
    #[arg(long, default_value_t = 0.2)]
    rmse_target: f64,
    #[arg(long, default_value_t = 4)]
    min_anchors: usize,
    #[arg(long, default_value_t = 24)]
    max_anchors: usize,
    #[arg(long, value_enum, default_value = "ring")]
    pairing: PairingArg,
    /// TDOA mode written to the placement file.
    #[arg(long, value_enum, default_value = "centralized")]
    mode: ModeArg,
    /// Candidate grid spacing on the boundary and wall surfaces, m.
    #[arg(long, default_value_t = 0.25)]
    resolution: f64,
    /// Minimum distance between anchors, m.
    #[arg(long, default_value_t = 0.5)]
    min_separation: f64,
    /// LOS TDOA noise std, m.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// NLOS delay per meter of obstacle crossed; 0 treats every link as unbiased.
    #[arg(long, default_value_t = 0.4)]
    kappa: f64,
    /// Maximum coordinate-descent sweeps per anchor count.
    #[arg(long, default_value_t = 20)]
    max_sweeps: usize,
    /// Shifts the first anchor of the spread initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output placement JSON.
    #[arg(long)]
    out: PathBuf,
    /// Output report JSON (default: next to --out with a `.report.json` suffix).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    placement: PathBuf,
    /// Grid height, m.
    #[arg(long, default_value_t = 1.5)]
    height: f64,
    /// Cell size, m.
    #[arg(long, default_value_t = 0.25)]
    resolution: f64,
    /// LOS TDOA noise std, m.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// NLOS delay per meter of obstacle crossed; 0 treats every link as unbiased.
    #[arg(long, default_value_t = 0.4)]
    kappa: f64,
    /// Output CSV with columns x,y,rmse_lb.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    /// Scenario JSON.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Monte-Carlo trials; 1 writes the full logs of a single run.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Overrides the scenario seed (base seed for trials).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Measurement log (JSONL).
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    placement: PathBuf,
    /// Filter preset.
    #[arg(long, value_enum, default_value = "arena")]
    profile: ProfileArg,
    /// IMU-to-tag offset in the body frame, m.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_vec3)]
    lever_arm: Option<Vec3>,
    /// Full filter configuration JSON; replaces the profile preset.
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,
    /// Output estimate log (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Output gating report JSON (default: next to --out with a `.gating.json` suffix).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("reference").required(true).args(["gt", "scenario"]))]
struct EvalArgs {
    /// Estimate log (JSONL).
    #[arg(long)]
    est: PathBuf,
    /// Measurement log holding ground-truth records.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Scenario JSON; ground truth is synthesized and the bound evaluated.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seconds after the first estimate excluded from the statistics.
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: f64,
    /// Write the per-timestep curve t,err,bound to this CSV (needs --scenario).
    #[arg(long, requires = "scenario")]
    bound: Option<PathBuf>,
    /// Output summary JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got '{s}'"));
    }
    let mut v = Vec3::zeros();
    for (k, p) in parts.iter().enumerate() {
        v[k] = p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))?;
        if !v[k].is_finite() {
            return Err(format!("'{p}' is not finite"));
        }
    }
    Ok(v)
}

fn bound_params(sigma: f64, kappa: f64) -> TdoaParams {
    TdoaParams { nlos_bias_per_meter: kappa, ..TdoaParams::unbiased(sigma) }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Serialize)]
struct PlacementReport<'a> {
    success: bool,
    rmse_target: f64,
    anchors: usize,
    pairs: usize,
    aggregate_rmse: f64,
    unobservable_points: usize,
    candidates: usize,
    sweeps: usize,
    history: &'a [f64],
    attempts: &'a [EscalationAttempt],
    metric: &'a MetricReport,
}

fn cmd_placement_optimize(a: &PlacementArgs) -> Result<u8> {
    let env = io::read_environment(&a.env)?;
    let targets = io::read_targets(&a.targets, Some(&env))?;
    let search = PlacementSearchSpace::surface_grid(
        &env,
        SurfaceGridOptions { resolution: a.resolution, min_separation: a.min_separation, include_floor: false },
    )?;
    let params = bound_params(a.sigma, a.kappa);
    let config = EscalationConfig {
        rmse_target: a.rmse_target,
        m_min: a.min_anchors,
        m_max: a.max_anchors,
        pairing: match a.pairing {
            PairingArg::Ring => Pairing::Ring,
            PairingArg::Disjoint => Pairing::Disjoint,
        },
        bcm: BcmConfig { max_sweeps: a.max_sweeps, ..BcmConfig::default() },
        seed: a.seed,
    };
    log::info!("{} candidate positions", search.candidates.len());
    let res = escalate_anchor_count(&targets, &search, &env, &params, &config)?;
    let mut placement = res.placement.clone();
    placement.mode = match a.mode {
        ModeArg::Centralized => TdoaMode::Centralized,
        ModeArg::Decentralized => TdoaMode::Decentralized,
    };
    io::write_text(&a.out, &io::placement_to_json(&placement))?;
    let report = PlacementReport {
        success: res.success,
        rmse_target: a.rmse_target,
        anchors: res.m,
        pairs: placement.pairs.len(),
        aggregate_rmse: res.report.aggregate_rmse,
        unobservable_points: res.report.unobservable_count(),
        candidates: search.candidates.len(),
        sweeps: res.sweeps,
        history: &res.history,
        attempts: &res.attempts,
        metric: &res.report,
    };
    let report_path = a.report.clone().unwrap_or_else(|| sibling(&a.out, ".report.json"));
    io::write_text(&report_path, &io::to_json(&report))?;
    println!(
        "{} anchors, {} pairs, aggregate RMSE bound {:.4} m (target {} m): {}",
        res.m,
        placement.pairs.len(),
        res.report.aggregate_rmse,
        a.rmse_target,
        if res.success { "met" } else { "NOT met" }
    );
    Ok(if res.success { 0 } else { EXIT_TARGET })
}

fn cmd_heatmap(a: &HeatmapArgs) -> Result<u8> {
    let env = io::read_environment(&a.env)?;
    let placement = io::read_placement(&a.placement)?;
    let h = heatmap(&env, &placement, &bound_params(a.sigma, a.kappa), a.height, a.resolution)?;
    io::write_text(&a.out, &io::heatmap_to_csv(&h))?;
    let unobservable = h.cells.iter().filter(|c| !c.rmse_lb.is_finite()).count();
    println!(
        "{} x {} cells at z = {} m, min bound {} m, {} unobservable",
        h.xs.len(),
        h.ys.len(),
        h.height,
        h.finite_min().map_or("n/a".into(), |m| format!("{m:.4}")),
        unobservable
    );
    Ok(0)
}

#[derive(Serialize)]
struct GatingOutput<'a> {
    #[serde(flatten)]
    report: &'a GatingReport,
    diverged: bool,
    divergence_time: Option<f64>,
    divergence: Option<&'a str>,
}

fn gating_json(run: &FilterRun) -> String {
    io::to_json(&GatingOutput {
        report: &run.report,
        diverged: run.divergence.is_some(),
        divergence_time: run.divergence.as_ref().map(|d| d.t),
        divergence: run.divergence.as_ref().map(|d| d.message.as_str()),
    })
}

fn cmd_sim(a: &SimArgs) -> Result<u8> {
    let mut scenario = io::read_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let out = &a.out;
    if a.trials == 0 {
        return Err(Error::invalid("--trials must be >= 1"));
    }
    io::write_text(&out.join("eskf_config.json"), &io::to_json(&scenario.eskf_config()))?;
    if a.trials == 1 {
        let run = run_scenario(&scenario)?;
        io::write_text(&out.join("log.jsonl"), &io::log_to_jsonl(&run.log))?;
        io::write_text(&out.join("estimates.jsonl"), &io::estimates_to_jsonl(&run.filter.estimates))?;
        io::write_text(&out.join("gating.json"), &gating_json(&run.filter))?;
        io::write_text(&out.join("placement.json"), &io::placement_to_json(&scenario.placement))?;
        io::write_text(&out.join("summary.json"), &io::to_json(&run.summary))?;
        print_summary(&run.summary);
        return Ok(if run.summary.diverged { EXIT_DIVERGED } else { 0 });
    }
    let mc = run_monte_carlo(&scenario, a.trials, scenario.seed)?;
    io::write_text(&out.join("summary.json"), &io::to_json(&mc))?;
    println!(
        "{} trials: mean RMSE {:.4} m (std {:.4}), mean bound {:.4} m, mean NEES/3 {:.3}, {} diverged",
        mc.trials, mc.mean_rmse, mc.std_rmse, mc.mean_bound, mc.mean_nees, mc.diverged
    );
    Ok(if mc.diverged > 0 { EXIT_DIVERGED } else { 0 })
}

fn print_summary(s: &EvalSummary) {
    println!(
        "RMSE {:.4} m over {} samples, bound {:.4} m, NEES/3 {:.3}, reject rate {:.4}{}",
        s.rmse,
        s.samples,
        s.bound_rmse,
        s.nees_mean,
        s.reject_rate,
        match s.divergence_time {
            Some(t) => format!(", diverged at t = {t:.3} s"),
            None => String::new(),
        }
    );
}

fn cmd_estimate(a: &EstimateArgs) -> Result<u8> {
    let placement = io::read_placement(&a.placement)?;
    let records = io::read_log(&a.log, Some(placement.len()))?;
    let mut cfg: EskfConfig = match &a.config {
        Some(path) => {
            let cfg: EskfConfig = io::parse_json(&io::read_text(path)?, path)?;
            cfg.validate().map_err(|e| Error::input(path, 1, "<root>", e.to_string()))?;
            cfg
        }
        None => Profile::from(a.profile).eskf_config(),
    };
    if let Some(l) = a.lever_arm {
        cfg.lever_arm = l;
    }
    let run = run_filter(&records, &placement, &cfg)?;
    io::write_text(&a.out, &io::estimates_to_jsonl(&run.estimates))?;
    let report_path = a.report.clone().unwrap_or_else(|| sibling(&a.out, ".gating.json"));
    io::write_text(&report_path, &gating_json(&run))?;
    let r = &run.report;
    println!(
        "{} estimates; TDOA accepted {}, rejected {}, skipped {} (reject rate {:.4})",
        run.estimates.len(),
        r.accepted,
        r.rejected,
        r.skipped,
        r.reject_rate
    );
    if let Some(d) = &run.divergence {
        eprintln!("error: filter diverged at t = {:.3} s: {}", d.t, d.message);
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn cmd_eval(a: &EvalArgs) -> Result<u8> {
    let est = io::read_estimates(&a.est)?;
    let (truth, scenario) = match (&a.gt, &a.scenario) {
        (Some(gt), _) => (truth_samples(&io::read_log(gt, None)?), None),
        (None, Some(path)) => {
            let s = io::read_scenario(path)?;
            (truth_samples(&synthesize(&s)?), Some(s))
        }
        (None, None) => unreachable!("clap enforces a reference"),
    };
    if truth.is_empty() {
        return Err(Error::invalid("reference holds no ground-truth records"));
    }
    let stats = rmse(&est, &truth, a.warmup)?;
    let mut summary = EvalSummary::from_errors(&stats);
    if let Some(s) = &scenario {
        summary.bound_rmse = trajectory_bound(&truth, stats.start, &s.placement, &s.env, &s.tdoa)?;
        if let Some(path) = &a.bound {
            let curve = error_curve(&est, &truth, a.warmup, &s.placement, &s.env, &s.tdoa)?;
            let mut csv = String::from("t,err,bound\n");
            for [t, e, b] in curve {
                csv.push_str(&format!("{t},{e},{b}\n"));
            }
            io::write_text(path, &csv)?;
        }
    }
    let json = io::to_json(&summary);
    match &a.out {
        Some(path) => {
            io::write_text(path, &json)?;
            print_summary(&summary);
        }
        None => print!("{json}"),
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = match std::env::var("TDOA_FORGE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("error: TDOA_FORGE_THREADS must be a non-negative integer, got '{v}'");
                return ExitCode::from(EXIT_INPUT);
            }
        },
        Err(_) => 0,
    };
    if let Err(e) = tdoa_forge::set_threads(threads) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    let result = match &cli.command {
        Command::PlacementOptimize(a) => cmd_placement_optimize(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Sim(a) => cmd_sim(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
