use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dpps_core::algorithms::{run_dp_admm, run_dp_ps, AdmmConfig, DualContext, Rule, RuleConfig, RunOptions, RunTrace};
use dpps_core::attack::{chance_of_success, run_attack, write_attack_csv};
use dpps_core::experiment::{
    attack_spec, compute_ae, parse_zone_lists, run_experiment, write_metrics_csv, AttackConfig, ExperimentConfig,
};
use dpps_core::model::build_centralized_soc;
use dpps_core::network::NetworkData;
use dpps_core::partition::{assignment_from_lists, build_partition, greedy_partition};
use dpps_core::privacy::{accountant_report, extended_float, Accountant, PrivacyParams, SensitivityCache};
use dpps_core::solver::{solve, SolverConfig};

/// Differentially private distributed optimal power flow.
#[derive(Parser)]
#[command(name = "dpps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the centralized relaxation and report its optimum.
    Solve {
        #[arg(long)]
        case: PathBuf,
        /// Write the conic program in text form.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Write the parsed network as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the private projected subgradient method.
    Run(RunArgs),
    /// Run the DP-ADMM baseline.
    Admm(AdmmArgs),
    /// Attack a saved trace.
    Attack(AttackArgs),
    /// Run a sweep described by a TOML config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    case: PathBuf,
    /// Zone count for the greedy partition, or explicit bus lists such as
    /// `1-5;7-10;6,11-14`.
    #[arg(long, default_value = "3")]
    zones: String,
    /// Privacy loss per iteration (or per run); `inf` disables noise.
    #[arg(long, default_value = "inf", value_parser = parse_epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value = "iter")]
    accountant: Accountant,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse sensitivities stored in this directory.
    #[arg(long)]
    sensitivity_cache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "3")]
    rule: Rule,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.5)]
    chi: f64,
    /// Polyak target; defaults to the centralized optimum.
    #[arg(long)]
    target: Option<f64>,
    /// Stop once the best gap falls to this percentage.
    #[arg(long)]
    gap_stop: Option<f64>,
}

#[derive(Args)]
struct AdmmArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 100.0)]
    rho: f64,
}

#[derive(Args)]
struct AttackArgs {
    /// Directory written by `run` or `admm`.
    #[arg(long)]
    trace: PathBuf,
    /// 1-based zone number.
    #[arg(long)]
    zone: usize,
    /// Original bus number.
    #[arg(long)]
    bus: usize,
    #[arg(long, default_value_t = 1e3)]
    gamma: f64,
    #[arg(long = "T", value_delimiter = ',', default_value = "1,10,100")]
    windows: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    gbar: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    extended_float::parse(s).ok_or_else(|| format!("invalid epsilon '{s}'"))
}

fn context(case: &Path, zones: &str, seed: u64) -> Result<DualContext> {
    let net = NetworkData::from_file(case).with_context(|| format!("reading {}", case.display()))?;
    let assignment = match zones.trim().parse::<usize>() {
        Ok(k) => greedy_partition(&net, k, seed)?,
        Err(_) => assignment_from_lists(&net, &parse_zone_lists(zones)?)?,
    };
    let part = build_partition(&net, &assignment)?;
    Ok(DualContext::new(case.display().to_string(), net, part, SolverConfig::default())?)
}

fn context_from_trace(trace: &RunTrace) -> Result<DualContext> {
    let net = NetworkData::from_file(&trace.meta.case).with_context(|| format!("reading {}", trace.meta.case))?;
    let part = build_partition(&net, &trace.meta.assignment)?;
    Ok(DualContext::new(trace.meta.case.clone(), net, part, trace.meta.solver.clone())?)
}

fn privacy(c: &CommonArgs) -> Result<PrivacyParams> {
    let p = PrivacyParams { epsilon_bar: c.epsilon, beta: c.beta, accountant: c.accountant, seed: c.seed };
    p.validate()?;
    Ok(p)
}

fn options(c: &CommonArgs, gap_stop: Option<f64>) -> Result<RunOptions> {
    let sensitivity_cache = c.sensitivity_cache.as_ref().map(SensitivityCache::new).transpose()?;
    Ok(RunOptions { gap_stop, sensitivity_cache })
}

fn finish(trace: &RunTrace, out: &Path) -> Result<()> {
    trace.save(out)?;
    write_metrics_csv(out.join("convergence.csv"), &compute_ae(trace, trace.meta.z_star)?)?;
    let last = trace.records.last().context("empty trace")?;
    let report = accountant_report(&trace.meta.privacy, trace.meta.iterations);
    println!("iterations   {}", trace.records.len());
    println!("Z*           {:.4}", trace.meta.z_star);
    println!("H_best       {:.4}", last.h_best);
    println!("objective    {:.4}", last.objective);
    println!("best gap     {:.4}%", trace.gap(last));
    if report.private {
        println!(
            "epsilon      {} per iteration, {} cumulative",
            report.per_iteration_epsilon, report.cumulative_epsilon
        );
    } else {
        println!("epsilon      inf (non-private)");
    }
    println!("trace        {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Solve { case, dump, json } => {
            let net = NetworkData::from_file(&case).with_context(|| format!("reading {}", case.display()))?;
            let model = build_centralized_soc(&net);
            if let Some(path) = dump {
                std::fs::write(path, model.program.to_text())?;
            }
            if let Some(path) = json {
                std::fs::write(path, net.to_json()?)?;
            }
            let res =
                solve(&model.program, None, &SolverConfig::default()).require_optimal("centralized relaxation")?;
            println!("buses {}  branches {}  generators {}", net.n_buses(), net.branches.len(), net.generators.len());
            println!("Z* = {:.4} $/hr  ({:.3} s)", res.objective, res.solve_time);
        }
        Command::Run(args) => {
            let c = &args.common;
            let ctx = context(&c.case, &c.zones, c.seed)?;
            let rule = RuleConfig { rule: args.rule, a: args.a, chi: args.chi, target_value: args.target };
            let trace = run_dp_ps(&ctx, &rule, &privacy(c)?, c.iters, &options(c, args.gap_stop)?)?;
            finish(&trace, &c.out)?;
        }
        Command::Admm(args) => {
            let c = &args.common;
            let ctx = context(&c.case, &c.zones, c.seed)?;
            let trace = run_dp_admm(&ctx, &AdmmConfig { rho: args.rho }, &privacy(c)?, c.iters, &options(c, None)?)?;
            finish(&trace, &c.out)?;
        }
        Command::Attack(args) => {
            let trace = RunTrace::load(&args.trace)?;
            let ctx = context_from_trace(&trace)?;
            let cfg = AttackConfig {
                zone: args.zone,
                bus: args.bus,
                gamma: args.gamma,
                windows: args.windows.clone(),
                gbar: args.gbar,
            };
            let spec = attack_spec(&ctx, &cfg)?;
            if args.windows.iter().any(|&t| t == 0 || t > trace.records.len()) {
                bail!("window lengths must lie in 1..={}", trace.records.len());
            }
            let results = run_attack(&ctx, &spec, &trace, &args.windows, args.gbar)?;
            std::fs::create_dir_all(&args.out)?;
            write_attack_csv(args.out.join("attack.csv"), &results, spec.true_demand(&ctx), ctx.net.base_mva)?;
            println!("{:>6} {:>8} {:>14} {:>10}", "T", "windows", "avg DEE (%)", "CoS (%)");
            for r in &results {
                println!("{:>6} {:>8} {:>14.4} {:>10.2}", r.window_len, r.estimates.len(), r.average_dee, r.cos);
            }
            println!("pooled CoS({}%) = {:.2}%", args.gbar, chance_of_success(&results, args.gbar));
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            let manifest = run_experiment(&cfg)?;
            let failed = manifest.failed();
            println!("{} cells, {} failed; outputs in {}", manifest.cells.len(), failed, cfg.output.display());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
