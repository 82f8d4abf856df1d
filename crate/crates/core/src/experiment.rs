//! Experiment orchestration: configs, accuracy metrics and sweeps that write
//! the CSV tables behind the convergence, privacy and attack figures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run_dp_admm, run_dp_ps, AdmmConfig, Algorithm, DualContext, RuleConfig, RunOptions, RunTrace};
use crate::attack::{chance_of_success, run_attack, write_attack_csv, AttackSpec};
use crate::error::{Error, Result};
use crate::network::NetworkData;
use crate::partition::{assignment_from_lists, build_partition, greedy_partition};
use crate::privacy::{extended_float, Accountant, PrivacyParams};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    /// Absolute accuracy error, percent.
    pub ae: f64,
    /// Signed gap `100·(Z* − Z^k)/Z*`.
    pub gap: f64,
    pub h_best: f64,
    pub objective: f64,
    pub wall_time: f64,
}

pub const METRICS_CSV_HEADER: &str = "k,ae_pct,gap_pct,h_best,objective,wall_time";

/// Per-iteration accuracy error. `Z^k` is `H_best` for DP-PS and the total
/// generation cost for DP-ADMM.
pub fn compute_ae(trace: &RunTrace, z_star: f64) -> Result<Vec<MetricsRow>> {
    if !(z_star > 0.0) {
        return Err(Error::invalid(format!("optimal value must be positive, got {z_star}")));
    }
    Ok(trace
        .records
        .iter()
        .map(|r| {
            let zk = match trace.meta.algorithm {
                Algorithm::DpPs => r.h_best,
                Algorithm::DpAdmm => r.objective,
            };
            let gap = 100.0 * (z_star - zk) / z_star;
            MetricsRow { k: r.k, ae: gap.abs(), gap, h_best: r.h_best, objective: r.objective, wall_time: r.wall_time }
        })
        .collect())
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record(&[
            r.k.to_string(),
            r.ae.to_string(),
            r.gap.to_string(),
            r.h_best.to_string(),
            r.objective.to_string(),
            r.wall_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A privacy level that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilon(#[serde(with = "extended_float")] pub f64);

impl std::fmt::Display for Epsilon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Parses zone lists written as `1-5;7-10;6,11-14` (original bus numbers).
pub fn parse_zone_lists(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .filter(|z| !z.trim().is_empty())
        .map(|zone| {
            let mut buses = Vec::new();
            for item in zone.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let num = |s: &str| {
                    s.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad bus number '{s}' in zone list")))
                };
                match item.split_once('-') {
                    Some((a, b)) => {
                        let (a, b) = (num(a)?, num(b)?);
                        if a > b {
                            return Err(Error::invalid(format!("empty bus range '{item}'")));
                        }
                        buses.extend(a..=b);
                    }
                    None => buses.push(num(item)?),
                }
            }
            Ok(buses)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionSpec {
    /// Explicit bus lists by original bus number.
    Lists { zones: Vec<Vec<usize>> },
    /// Greedy BFS partition into `k` zones.
    Greedy { k: usize, seed: u64 },
}

impl PartitionSpec {
    pub fn assignment(&self, net: &NetworkData) -> Result<Vec<usize>> {
        match self {
            PartitionSpec::Lists { zones } => assignment_from_lists(net, zones),
            PartitionSpec::Greedy { k, seed } => greedy_partition(net, *k, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// 1-based zone number.
    pub zone: usize,
    /// Original bus number.
    pub bus: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    #[serde(default = "default_gbar")]
    pub gbar: f64,
}

fn default_gamma() -> f64 {
    AttackSpec::DEFAULT_GAMMA
}
fn default_windows() -> Vec<usize> {
    vec![1, 10, 100]
}
fn default_gbar() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.05
}
fn default_a() -> f64 {
    1.0
}
fn default_chi() -> f64 {
    1.5
}
fn default_rule() -> usize {
    3
}
fn default_rho() -> f64 {
    100.0
}
fn default_gap_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    DpPs,
    DpAdmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Case file; relative paths resolve against the config file.
    pub case: PathBuf,
    pub partition: PartitionSpec,
    /// When nonempty, sweeps greedy partitions with these zone counts
    /// instead of `partition`.
    #[serde(default)]
    pub zone_counts: Vec<usize>,
    pub algorithm: AlgorithmName,
    #[serde(default = "default_rule")]
    pub rule: usize,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default)]
    pub target: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    pub epsilons: Vec<Epsilon>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_accountant")]
    pub accountant: Accountant,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub gap_stop: Option<f64>,
    /// Threshold for the iterations-to-gap table, percent.
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: f64,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    /// Also write the full-vector trace of every cell.
    #[serde(default)]
    pub save_traces: bool,
    pub output: PathBuf,
}

fn default_accountant() -> Accountant {
    Accountant::PerIteration
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config and resolves relative paths against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.case.is_relative() {
            cfg.case = base.join(&cfg.case);
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::invalid("epsilon list is empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("seed list is empty"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iteration count must be positive"));
        }
        for e in &self.epsilons {
            PrivacyParams { epsilon_bar: e.0, beta: self.beta, accountant: self.accountant, seed: 0 }.validate()?;
        }
        self.rule_config()?.validate()?;
        AdmmConfig { rho: self.rho }.validate()
    }

    pub fn rule_config(&self) -> Result<RuleConfig> {
        Ok(RuleConfig { rule: self.rule.to_string().parse()?, a: self.a, chi: self.chi, target_value: self.target })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub zones: usize,
    pub epsilon: Epsilon,
    pub seed: u64,
    pub dir: String,
    pub final_gap: Option<f64>,
    pub iterations_to_gap: Option<usize>,
    /// `(T, average DEE, CoS)` per window length.
    pub attack: Vec<(usize, f64, f64)>,
    pub pooled_cos: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub git: String,
    pub z_star: f64,
    pub cells: Vec<CellOutcome>,
}

impl Manifest {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

fn git_stamp() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median over seeds; a run that never reached the threshold counts as
/// infinitely many iterations.
pub fn median_iterations(values: &[Option<usize>]) -> Option<f64> {
    median(values.iter().map(|v| v.map_or(f64::INFINITY, |n| n as f64)).collect())
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trace, `(T, average DEE, CoS)` per window length, and pooled CoS.
type CellResult = (RunTrace, Vec<(usize, f64, f64)>, Option<f64>);

fn run_cell(cfg: &ExperimentConfig, ctx: &DualContext, epsilon: Epsilon, seed: u64, dir: &Path) -> Result<CellResult> {
    std::fs::create_dir_all(dir)?;
    let privacy = PrivacyParams { epsilon_bar: epsilon.0, beta: cfg.beta, accountant: cfg.accountant, seed };
    let opts = RunOptions { gap_stop: cfg.gap_stop, sensitivity_cache: None };
    let trace = match cfg.algorithm {
        AlgorithmName::DpPs => run_dp_ps(ctx, &cfg.rule_config()?, &privacy, cfg.iterations, &opts)?,
        AlgorithmName::DpAdmm => run_dp_admm(ctx, &AdmmConfig { rho: cfg.rho }, &privacy, cfg.iterations, &opts)?,
    };
    trace.write_csv(dir.join("trace.csv"))?;
    write_metrics_csv(dir.join("convergence.csv"), &compute_ae(&trace, trace.meta.z_star)?)?;
    if cfg.save_traces {
        trace.write_json(dir.join("trace.json"))?;
    }
    let mut attack = Vec::new();
    let mut pooled = None;
    if let Some(a) = &cfg.attack {
        let spec = attack_spec(ctx, a)?;
        let ts: Vec<usize> = a.windows.iter().copied().filter(|&t| t <= trace.records.len()).collect();
        let results = run_attack(ctx, &spec, &trace, &ts, a.gbar)?;
        write_attack_csv(dir.join("attack.csv"), &results, spec.true_demand(ctx), ctx.net.base_mva)?;
        attack = results.iter().map(|r| (r.window_len, r.average_dee, r.cos)).collect();
        pooled = Some(chance_of_success(&results, a.gbar));
    }
    Ok((trace, attack, pooled))
}

/// Builds the attack spec from 1-based zone and original bus numbers.
pub fn attack_spec(ctx: &DualContext, a: &AttackConfig) -> Result<AttackSpec> {
    if a.zone == 0 {
        return Err(Error::invalid("zones are numbered from 1"));
    }
    let bus = ctx.net.bus_index(a.bus).ok_or_else(|| Error::invalid(format!("unknown bus {}", a.bus)))?;
    let spec = AttackSpec { target_zone: a.zone - 1, target_bus: bus, gamma: a.gamma };
    spec.validate(ctx)?;
    Ok(spec)
}

/// Runs every (zone count, ε̄, seed) cell and writes the tables plus a
/// manifest. Failing cells are recorded and the sweep continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let net = NetworkData::from_file(&cfg.case)?;
    let out = &cfg.output;
    std::fs::create_dir_all(out)?;
    let case_name = cfg.case.display().to_string();

    let partitions: Vec<PartitionSpec> = if cfg.zone_counts.is_empty() {
        vec![cfg.partition.clone()]
    } else {
        let seed = match cfg.partition {
            PartitionSpec::Greedy { seed, .. } => seed,
            PartitionSpec::Lists { .. } => 0,
        };
        cfg.zone_counts.iter().map(|&k| PartitionSpec::Greedy { k, seed }).collect()
    };
    let contexts = partitions
        .iter()
        .map(|p| {
            let part = build_partition(&net, &p.assignment(&net)?)?;
            DualContext::new(case_name.clone(), net.clone(), part, SolverConfig::default())
        })
        .collect::<Result<Vec<_>>>()?;
    let z_star = contexts[0].z_star()?;

    let mut jobs = Vec::new();
    for (c, ctx) in contexts.iter().enumerate() {
        for &eps in &cfg.epsilons {
            for &seed in &cfg.seeds {
                jobs.push((c, ctx.part.n_zones(), eps, seed));
            }
        }
    }
    let cells: Vec<CellOutcome> = jobs
        .par_iter()
        .map(|&(c, zones, eps, seed)| {
            let name = format!("z{zones}_eps{eps}_seed{seed}");
            let dir = out.join("cells").join(&name);
            let mut outcome = CellOutcome {
                zones,
                epsilon: eps,
                seed,
                dir: format!("cells/{name}"),
                final_gap: None,
                iterations_to_gap: None,
                attack: Vec::new(),
                pooled_cos: None,
                error: None,
            };
            match run_cell(cfg, &contexts[c], eps, seed, &dir) {
                Ok((trace, attack, pooled)) => {
                    let rows = compute_ae(&trace, z_star).unwrap_or_default();
                    outcome.final_gap = rows.last().map(|r| r.gap);
                    outcome.iterations_to_gap = rows.iter().find(|r| r.ae <= cfg.gap_threshold).map(|r| r.k);
                    outcome.attack = attack;
                    outcome.pooled_cos = pooled;
                }
                Err(e) => {
                    log::error!("cell {name} failed: {e}");
                    outcome.error = Some(e.to_string());
                }
            }
            outcome
        })
        .collect();

    write_tables(out, cfg, &cells)?;
    let manifest =
        Manifest { config: cfg.clone(), version: env!("CARGO_PKG_VERSION").into(), git: git_stamp(), z_star, cells };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub const ITERATIONS_CSV_HEADER: &str = "zones,epsilon,seed,iterations";
pub const DEE_CSV_HEADER: &str = "zones,epsilon,seed,window_len,average_dee_pct,cos_pct";
pub const SUMMARY_CSV_HEADER: &str = "zones,epsilon,median_final_gap_pct,median_iterations,median_cos_pct,failed_cells";

fn write_tables(out: &Path, cfg: &ExperimentConfig, cells: &[CellOutcome]) -> Result<()> {
    let mut it = csv::Writer::from_path(out.join("iterations_to_gap.csv"))?;
    it.write_record(ITERATIONS_CSV_HEADER.split(','))?;
    let mut dee = csv::Writer::from_path(out.join("attack_dee.csv"))?;
    dee.write_record(DEE_CSV_HEADER.split(','))?;
    for c in cells {
        it.write_record(&[
            c.zones.to_string(),
            c.epsilon.to_string(),
            c.seed.to_string(),
            opt_str(c.iterations_to_gap),
        ])?;
        for &(t, avg, cos) in &c.attack {
            dee.write_record(&[
                c.zones.to_string(),
                c.epsilon.to_string(),
                c.seed.to_string(),
                t.to_string(),
                avg.to_string(),
                cos.to_string(),
            ])?;
        }
    }
    it.flush()?;
    dee.flush()?;

    let mut groups: BTreeMap<(usize, usize), Vec<&CellOutcome>> = BTreeMap::new();
    for c in cells {
        let e = cfg.epsilons.iter().position(|e| *e == c.epsilon).unwrap_or(0);
        groups.entry((c.zones, e)).or_default().push(c);
    }
    let mut sum = csv::Writer::from_path(out.join("summary.csv"))?;
    sum.write_record(SUMMARY_CSV_HEADER.split(','))?;
    for ((zones, e), group) in groups {
        let ok: Vec<_> = group.iter().filter(|c| c.error.is_none()).collect();
        sum.write_record(&[
            zones.to_string(),
            cfg.epsilons[e].to_string(),
            opt_str(median(ok.iter().filter_map(|c| c.final_gap).collect())),
            opt_str(median_iterations(&ok.iter().map(|c| c.iterations_to_gap).collect::<Vec<_>>())),
            opt_str(median(ok.iter().filter_map(|c| c.pooled_cos).collect())),
            (group.len() - ok.len()).to_string(),
        ])?;
    }
    sum.flush()?;
    Ok(())
}
