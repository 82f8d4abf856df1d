//! Dual decomposition drivers: the differentially private projected
//! subgradient method with its three step rules, and the DP-ADMM baseline.
//!
//! The distributed system is simulated in-process. One coordinator owns the
//! multipliers; zone workers are stateless solves that may run concurrently.
//! Every iteration is a synchronous barrier and all reductions use a fixed
//! zone order, so traces are reproducible regardless of thread count.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_centralized_soc, build_zone_subproblem, ZoneModel};
use crate::network::NetworkData;
use crate::partition::{project_in_place, DualVector, ZonePartition};
use crate::privacy::{
    accountant_report, compute_sensitivity, draw_noise, perturb, AccountantReport, PrivacyParams, SensitivityCache,
    SensitivityVector,
};
use crate::solver::{solve, ObjectiveOverlay, SolverConfig};

/// Everything a run needs besides its parameters: the network, the
/// partition, the zone programs and the solver settings.
#[derive(Debug)]
pub struct DualContext {
    pub case_name: String,
    pub net: NetworkData,
    pub part: ZonePartition,
    pub assignment: Vec<usize>,
    pub zones: Vec<ZoneModel>,
    pub solver: SolverConfig,
    /// Solve zones concurrently. Results do not depend on this.
    pub parallel: bool,
    z_star: OnceLock<f64>,
}

impl DualContext {
    pub fn new(
        case_name: impl Into<String>,
        net: NetworkData,
        part: ZonePartition,
        solver: SolverConfig,
    ) -> Result<Self> {
        solver.validate()?;
        let zones = (0..part.n_zones()).map(|z| build_zone_subproblem(&net, &part, z, None)).collect::<Result<_>>()?;
        let assignment = part.zone_of.clone();
        Ok(Self {
            case_name: case_name.into(),
            net,
            part,
            assignment,
            zones,
            solver,
            parallel: true,
            z_star: OnceLock::new(),
        })
    }

    /// Optimal value of the centralized relaxation, computed once.
    pub fn z_star(&self) -> Result<f64> {
        if let Some(&v) = self.z_star.get() {
            return Ok(v);
        }
        let model = build_centralized_soc(&self.net);
        let res = solve(&model.program, None, &self.solver).require_optimal("centralized relaxation")?;
        Ok(*self.z_star.get_or_init(|| res.objective))
    }

    /// Multiplier terms `Σ λ_zi y_zi` for zone `z` as an objective overlay.
    pub fn lambda_overlay(&self, z: usize, lambda_z: &[f64]) -> ObjectiveOverlay {
        ObjectiveOverlay::linear(self.zones[z].y_vars.iter().zip(lambda_z).map(|(&j, &l)| (j, l)).collect())
    }

    fn map_zones<T: Send>(&self, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        if self.parallel {
            (0..self.zones.len()).into_par_iter().map(f).collect()
        } else {
            (0..self.zones.len()).map(f).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneStat {
    /// Optimal value including the multiplier or penalty terms.
    pub objective: f64,
    /// Generation cost `f_z` at the zone solution.
    pub cost: f64,
    pub solve_time: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSolve {
    pub stat: ZoneStat,
    pub x_part: Vec<f64>,
    pub y_part: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    pub h: f64,
    /// Stacked boundary values, a supergradient of H at λ.
    pub y: Vec<f64>,
    pub zones: Vec<ZoneSolve>,
}

fn solve_zone(ctx: &DualContext, z: usize, overlay: &ObjectiveOverlay) -> Result<ZoneSolve> {
    let model = &ctx.zones[z];
    let res = solve(&model.program, Some(overlay), &ctx.solver).require_optimal(&format!("zone {z} subproblem"))?;
    let primal = model.split(&res.x);
    Ok(ZoneSolve {
        stat: ZoneStat {
            objective: res.objective,
            cost: model.program.objective_value(&res.x),
            solve_time: res.solve_time,
            iterations: res.iterations,
        },
        x_part: primal.x_part,
        y_part: primal.y_part,
    })
}

/// H(λ) and its supergradient, one subproblem per zone.
pub fn evaluate_dual(lambda: &DualVector, ctx: &DualContext) -> Result<DualEvaluation> {
    if lambda.len() != ctx.part.dual_len() {
        return Err(Error::LengthMismatch { expected: ctx.part.dual_len(), found: lambda.len() });
    }
    let zones = ctx.map_zones(|z| solve_zone(ctx, z, &ctx.lambda_overlay(z, lambda.zone(&ctx.part, z))))?;
    let h = zones.iter().map(|s| s.stat.objective).sum();
    let y = zones.iter().flat_map(|s| s.y_part.iter().copied()).collect();
    Ok(DualEvaluation { h, y, zones })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// Diminishing step `a/k` along the noisy supergradient.
    Rule1,
    /// Polyak step along the noisy supergradient.
    Rule2,
    /// Polyak step along a deflected direction.
    Rule3,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Rule::Rule1 => 1,
            Rule::Rule2 => 2,
            Rule::Rule3 => 3,
        };
        write!(f, "rule{n}")
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("rule") {
            "1" => Ok(Rule::Rule1),
            "2" => Ok(Rule::Rule2),
            "3" => Ok(Rule::Rule3),
            _ => Err(Error::invalid(format!("unknown step rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub rule: Rule,
    pub a: f64,
    pub chi: f64,
    /// Polyak target; `None` means the centralized optimum.
    pub target_value: Option<f64>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self { rule: Rule::Rule3, a: 1.0, chi: 1.5, target_value: None }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::invalid("rule constant a must be positive"));
        }
        if !(0.0..=2.0).contains(&self.chi) {
            return Err(Error::invalid("deflection chi must lie in [0, 2]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: DualVector,
    /// Previous direction; zero before the first step.
    pub prev_direction: DualVector,
    /// H at the current multipliers.
    pub h_current: f64,
    pub h_best: f64,
    pub best_iter: usize,
    /// 1-based iteration counter.
    pub k: usize,
}

impl DualState {
    pub fn new(part: &ZonePartition) -> Self {
        Self {
            lambda: DualVector::zeros(part),
            prev_direction: DualVector::zeros(part),
            h_current: f64::NEG_INFINITY,
            h_best: f64::NEG_INFINITY,
            best_iter: 0,
            k: 1,
        }
    }

    /// Records H(λ^k); the first iteration reaching the maximum is kept.
    pub fn observe(&mut self, h: f64) {
        self.h_current = h;
        if h > self.h_best {
            self.h_best = h;
            self.best_iter = self.k;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub alpha: f64,
    pub direction: Vec<f64>,
    pub zeta: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deflection coefficient `max(0, -χ⟨s_prev, ỹ⟩/‖s_prev‖²)`, zero when the
/// previous direction vanishes.
pub fn deflection(prev: &[f64], y_tilde: &[f64], chi: f64) -> f64 {
    let nn = dot(prev, prev);
    if nn == 0.0 {
        return 0.0;
    }
    (-chi * dot(prev, y_tilde) / nn).max(0.0)
}

/// Step size and direction for the current iterate.
///
/// Polyak steps use `max(0, target − H(λ^k))`, so a target that is already
/// met never moves the iterate backwards.
pub fn step_rule(state: &DualState, y_tilde: &[f64], cfg: &RuleConfig) -> Result<Step> {
    if y_tilde.len() != state.lambda.len() {
        return Err(Error::LengthMismatch { expected: state.lambda.len(), found: y_tilde.len() });
    }
    let (direction, zeta) = match cfg.rule {
        Rule::Rule1 | Rule::Rule2 => (y_tilde.to_vec(), 0.0),
        Rule::Rule3 => {
            let zeta = deflection(&state.prev_direction.0, y_tilde, cfg.chi);
            (y_tilde.iter().zip(&state.prev_direction.0).map(|(y, s)| y + zeta * s).collect(), zeta)
        }
    };
    let nn = dot(&direction, &direction);
    if nn < 1e-14 {
        return Err(Error::DegenerateDirection(nn));
    }
    let alpha = match cfg.rule {
        Rule::Rule1 => cfg.a / state.k as f64,
        Rule::Rule2 | Rule::Rule3 => {
            let target = cfg.target_value.ok_or_else(|| Error::invalid("Polyak rules need a target value"))?;
            (target - state.h_current).max(0.0) / nn
        }
    };
    Ok(Step { alpha, direction, zeta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { rho: 100.0 }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::invalid("rho must be positive"));
        }
        Ok(())
    }
}

/// Optional behaviour shared by both drivers.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop once `100·(Z* − H_best)/Z*` falls to this value (DP-PS only).
    pub gap_stop: Option<f64>,
    pub sensitivity_cache: Option<SensitivityCache>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    DpPs,
    DpAdmm,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::DpPs => write!(f, "dp-ps"),
            Algorithm::DpAdmm => write!(f, "dp-admm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: Algorithm,
    pub case: String,
    pub assignment: Vec<usize>,
    pub privacy: PrivacyParams,
    pub accountant: AccountantReport,
    pub rule: Option<RuleConfig>,
    pub admm: Option<AdmmConfig>,
    pub iterations: usize,
    pub z_star: f64,
    pub solver: SolverConfig,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    GapReached,
    /// Search direction vanished.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub lambda: Vec<f64>,
    pub y: Vec<f64>,
    pub xi: Vec<f64>,
    pub y_tilde: Vec<f64>,
    /// Search direction (DP-PS) or consensus values φ (DP-ADMM).
    pub direction: Vec<f64>,
    pub alpha: f64,
    pub zeta: f64,
    /// H(λ^k) for DP-PS; the augmented Lagrangian value for DP-ADMM.
    pub h: f64,
    pub h_best: f64,
    /// Total generation cost `Σ_z f_z` of the zone solutions.
    pub objective: f64,
    /// `‖φ − ỹ‖` over all copies (DP-ADMM only, zero otherwise).
    pub primal_residual: f64,
    pub sensitivity: Vec<f64>,
    pub skipped_candidates: usize,
    pub wall_time: f64,
    pub zone_stats: Vec<ZoneStat>,
    /// Internal solution of every zone, ordered like `ZoneModel::x_vars`.
    pub zone_x: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub meta: RunMeta,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

pub const TRACE_CSV_HEADER: &str =
    "k,h,h_best,gap_pct,objective,alpha,zeta,norm_y,norm_xi,norm_direction,primal_residual,max_sensitivity,skipped,wall_time";

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

impl RunTrace {
    /// Optimality gap of `H_best` in percent.
    pub fn gap(&self, record: &IterationRecord) -> f64 {
        100.0 * (self.meta.z_star - record.h_best) / self.meta.z_star
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| self.gap(r))
    }

    /// First iteration whose best gap is at most `pct` percent.
    pub fn iterations_to_gap(&self, pct: f64) -> Option<usize> {
        self.records.iter().find(|r| self.gap(r) <= pct).map(|r| r.k)
    }

    /// Largest absolute noise draw of the run.
    pub fn max_abs_noise(&self) -> f64 {
        self.records.iter().flat_map(|r| r.xi.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TRACE_CSV_HEADER.split(','))?;
        for r in &self.records {
            let max_sens = r.sensitivity.iter().fold(0.0f64, |m, v| m.max(*v));
            w.write_record(&[
                r.k.to_string(),
                r.h.to_string(),
                r.h_best.to_string(),
                self.gap(r).to_string(),
                r.objective.to_string(),
                r.alpha.to_string(),
                r.zeta.to_string(),
                norm(&r.y).to_string(),
                norm(&r.xi).to_string(),
                norm(&r.direction).to_string(),
                r.primal_residual.to_string(),
                max_sens.to_string(),
                r.skipped_candidates.to_string(),
                r.wall_time.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// Writes `trace.csv` and `trace.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.write_csv(dir.join("trace.csv"))?;
        self.write_json(dir.join("trace.json"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::read_json(dir.as_ref().join("trace.json"))
    }
}

struct Sensitivities {
    delta: Vec<f64>,
    skipped: usize,
}

fn zone_sensitivities(
    ctx: &DualContext,
    privacy: &PrivacyParams,
    overlays: &[ObjectiveOverlay],
    lambda: &[f64],
    y: &[f64],
    cache: Option<&SensitivityCache>,
) -> Result<Sensitivities> {
    if !privacy.is_private() {
        return Ok(Sensitivities { delta: vec![0.0; y.len()], skipped: 0 });
    }
    let per_zone = ctx.map_zones(|z| {
        let range = ctx.part.dual_range(z);
        let key = cache
            .map(|_| SensitivityCache::key(&ctx.case_name, &ctx.assignment, z, &lambda[range.clone()], privacy.beta));
        if let (Some(c), Some(k)) = (cache, key.as_deref()) {
            if let Some(d) = c.get(k).filter(|d| d.len() == range.len()) {
                return Ok((d, 0));
            }
        }
        let s = compute_sensitivity(&ctx.zones[z], &overlays[z], &y[range], privacy.beta, &ctx.solver)?;
        if let (Some(c), Some(k)) = (cache, key.as_deref()) {
            c.put(k, &s.delta)?;
        }
        Ok((s.delta, s.skipped))
    })?;
    let skipped = per_zone.iter().map(|p| p.1).sum();
    Ok(Sensitivities { delta: per_zone.into_iter().flat_map(|p| p.0).collect(), skipped })
}

fn meta(
    ctx: &DualContext,
    algorithm: Algorithm,
    privacy: &PrivacyParams,
    rule: Option<RuleConfig>,
    admm: Option<AdmmConfig>,
    iterations: usize,
    z_star: f64,
) -> RunMeta {
    RunMeta {
        algorithm,
        case: ctx.case_name.clone(),
        assignment: ctx.assignment.clone(),
        privacy: privacy.clone(),
        accountant: accountant_report(privacy, iterations),
        rule,
        admm,
        iterations,
        z_star,
        solver: ctx.solver.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Differentially private projected subgradient ascent on H.
pub fn run_dp_ps(
    ctx: &DualContext,
    rule_cfg: &RuleConfig,
    privacy: &PrivacyParams,
    iterations: usize,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if iterations == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }
    rule_cfg.validate()?;
    privacy.validate()?;
    let z_star = ctx.z_star()?;
    let mut cfg = rule_cfg.clone();
    if cfg.target_value.is_none() {
        cfg.target_value = Some(z_star);
    }

    let part = &ctx.part;
    let mut state = DualState::new(part);
    let mut records = Vec::with_capacity(iterations);
    let mut termination = Termination::Completed;
    let start = Instant::now();

    while state.k <= iterations {
        let k = state.k;
        let eval = evaluate_dual(&state.lambda, ctx)?;
        state.observe(eval.h);

        let overlays: Vec<_> =
            (0..ctx.zones.len()).map(|z| ctx.lambda_overlay(z, state.lambda.zone(part, z))).collect();
        let sens =
            zone_sensitivities(ctx, privacy, &overlays, &state.lambda.0, &eval.y, opts.sensitivity_cache.as_ref())?;
        let noise = draw_noise(&SensitivityVector(sens.delta.clone()), privacy, iterations, k, part)?;
        let y_tilde = perturb(&eval.y, &noise)?;

        let step = match step_rule(&state, &y_tilde, &cfg) {
            Ok(s) => Some(s),
            Err(Error::DegenerateDirection(n)) => {
                log::info!("iteration {k}: direction norm² {n:e} below threshold, stopping");
                None
            }
            Err(e) => return Err(e),
        };

        let record = IterationRecord {
            k,
            lambda: state.lambda.0.clone(),
            y: eval.y,
            xi: noise.xi,
            y_tilde,
            direction: step.as_ref().map(|s| s.direction.clone()).unwrap_or_default(),
            alpha: step.as_ref().map_or(0.0, |s| s.alpha),
            zeta: step.as_ref().map_or(0.0, |s| s.zeta),
            h: eval.h,
            h_best: state.h_best,
            objective: eval.zones.iter().map(|s| s.stat.cost).sum(),
            primal_residual: 0.0,
            sensitivity: sens.delta,
            skipped_candidates: sens.skipped,
            wall_time: start.elapsed().as_secs_f64(),
            zone_stats: eval.zones.iter().map(|s| s.stat.clone()).collect(),
            zone_x: eval.zones.into_iter().map(|s| s.x_part).collect(),
        };
        let gap = 100.0 * (z_star - state.h_best) / z_star;
        log::debug!("iter {k}: H = {:.4}, best gap {gap:.4}%", record.h);
        records.push(record);

        let Some(step) = step else {
            termination = Termination::Degenerate;
            break;
        };
        if opts.gap_stop.is_some_and(|g| gap <= g) {
            termination = Termination::GapReached;
            break;
        }

        for (l, s) in state.lambda.0.iter_mut().zip(&step.direction) {
            *l += step.alpha * s;
        }
        project_in_place(&mut state.lambda.0, part);
        state.prev_direction = DualVector(step.direction);
        state.k += 1;
    }

    Ok(RunTrace {
        meta: meta(ctx, Algorithm::DpPs, privacy, Some(cfg), None, iterations, z_star),
        records,
        termination,
    })
}

/// Differentially private ADMM on the consensus formulation.
pub fn run_dp_admm(
    ctx: &DualContext,
    admm: &AdmmConfig,
    privacy: &PrivacyParams,
    iterations: usize,
    opts: &RunOptions,
) -> Result<RunTrace> {
    if iterations == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }
    admm.validate()?;
    privacy.validate()?;
    let z_star = ctx.z_star()?;
    let part = &ctx.part;
    let rho = admm.rho;
    let n_cons = part.consensus.len();

    let mut lambda = vec![0.0; part.dual_len()];
    let mut phi = vec![0.0; n_cons];
    // consensus index of every stacked position
    let mut cons_of = vec![0usize; part.dual_len()];
    for (i, positions) in part.consensus_positions.iter().enumerate() {
        for &p in positions {
            cons_of[p] = i;
        }
    }

    let mut records = Vec::with_capacity(iterations);
    let mut h_best = f64::NEG_INFINITY;
    let start = Instant::now();

    for k in 1..=iterations {
        // f − λ·y + (ρ/2)(φ − y)²  =  f + (−λ − ρφ)·y + (ρ/2)y² + (ρ/2)φ²
        let overlays: Vec<ObjectiveOverlay> = (0..ctx.zones.len())
            .map(|z| {
                let model = &ctx.zones[z];
                let mut ov = ObjectiveOverlay::default();
                for (pos, &j) in part.dual_range(z).zip(&model.y_vars) {
                    let f = phi[cons_of[pos]];
                    ov.linear.push((j, -lambda[pos] - rho * f));
                    ov.quadratic.push((j, 0.5 * rho));
                    ov.constant += 0.5 * rho * f * f;
                }
                ov
            })
            .collect();
        let zones = ctx.map_zones(|z| solve_zone(ctx, z, &overlays[z]))?;
        let h: f64 = zones.iter().map(|s| s.stat.objective).sum();
        h_best = h_best.max(h);
        let y: Vec<f64> = zones.iter().flat_map(|s| s.y_part.iter().copied()).collect();

        let sens = zone_sensitivities(ctx, privacy, &overlays, &lambda, &y, opts.sensitivity_cache.as_ref())?;
        let noise = draw_noise(&SensitivityVector(sens.delta.clone()), privacy, iterations, k, part)?;
        let y_tilde = perturb(&y, &noise)?;

        let lambda_k = lambda.clone();
        for (i, positions) in part.consensus_positions.iter().enumerate() {
            phi[i] = positions.iter().map(|&p| y_tilde[p] - lambda[p] / rho).sum::<f64>() / positions.len() as f64;
        }
        let mut residual = 0.0;
        for p in 0..lambda.len() {
            let r = phi[cons_of[p]] - y_tilde[p];
            residual += r * r;
            lambda[p] += rho * r;
        }

        records.push(IterationRecord {
            k,
            lambda: lambda_k,
            y,
            xi: noise.xi,
            y_tilde,
            direction: phi.clone(),
            alpha: rho,
            zeta: 0.0,
            h,
            h_best,
            objective: zones.iter().map(|s| s.stat.cost).sum(),
            primal_residual: residual.sqrt(),
            sensitivity: sens.delta,
            skipped_candidates: sens.skipped,
            wall_time: start.elapsed().as_secs_f64(),
            zone_stats: zones.iter().map(|s| s.stat.clone()).collect(),
            zone_x: zones.into_iter().map(|s| s.x_part).collect(),
        });
    }

    Ok(RunTrace {
        meta: meta(ctx, Algorithm::DpAdmm, privacy, None, Some(admm.clone()), iterations, z_star),
        records,
        termination: Termination::Completed,
    })
}
