//! Load-inference adversary: fits a copy of one zone's feasible set to the
//! intercepted iterates with the target load left free, then scores the
//! recovered demand.

use serde::{Deserialize, Serialize};

use crate::algorithms::{DualContext, RunTrace};
use crate::error::{Error, Result};
use crate::model::{AffineExpr, ConicProgram, LinearConstraint, SocConstraint};
use crate::solver::solve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub target_zone: usize,
    /// Internal bus index.
    pub target_bus: usize,
    /// Fit penalty, applied to deviations in per-unit and scaled by the
    /// squared MVA base so it is commensurate with the $/hr cost.
    pub gamma: f64,
}

impl AttackSpec {
    pub const DEFAULT_GAMMA: f64 = 1e3;

    /// True active demand of the target bus (p.u.).
    pub fn true_demand(&self, ctx: &DualContext) -> f64 {
        ctx.net.buses[self.target_bus].p_demand
    }

    pub fn validate(&self, ctx: &DualContext) -> Result<()> {
        if self.target_zone >= ctx.part.n_zones() {
            return Err(Error::invalid(format!("target zone {} out of range", self.target_zone)));
        }
        if ctx.part.zone_of.get(self.target_bus) != Some(&self.target_zone) {
            return Err(Error::invalid(format!("target bus {} is not in zone {}", self.target_bus, self.target_zone)));
        }
        if self.true_demand(ctx) == 0.0 {
            return Err(Error::invalid("target bus has zero demand"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("gamma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    /// 1-based iteration indices.
    pub window: Vec<usize>,
    /// Recovered demand (p.u.).
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub window_len: usize,
    pub estimates: Vec<WindowEstimate>,
    /// Percent.
    pub de_per_window: Vec<f64>,
    pub average_dee: f64,
    /// Share of windows with error at most `g_bar`, percent.
    pub cos: f64,
}

/// ⌊K/T⌋ consecutive disjoint windows of length T; the remainder is dropped.
pub fn make_windows(total: usize, t: usize) -> Result<Vec<Vec<usize>>> {
    if t == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if t > total {
        return Err(Error::invalid(format!("window length {t} exceeds {total} iterations")));
    }
    Ok((0..total / t).map(|w| (w * t + 1..=(w + 1) * t).collect()).collect())
}

pub fn demand_error(truth: f64, estimate: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::invalid("demand error undefined for zero true demand"));
    }
    Ok(100.0 * (truth - estimate).abs() / truth.abs())
}

/// Copies `src` into `dst` with all variable indices shifted by `offset`.
fn append_program(dst: &mut ConicProgram, src: &ConicProgram, tag: &str) -> usize {
    let offset = dst.n_vars();
    for (j, v) in src.variables.iter().enumerate() {
        let idx = dst.add_var(format!("{tag}.{}", v.name), v.lower, v.upper);
        dst.linear_obj[idx] = src.linear_obj[j];
        dst.quad_obj[idx] = src.quad_obj[j];
    }
    dst.obj_constant += src.obj_constant;
    let shift = |terms: &[(usize, f64)]| terms.iter().map(|&(j, c)| (j + offset, c)).collect::<Vec<_>>();
    for r in &src.linear_constraints {
        dst.linear_constraints.push(LinearConstraint {
            label: format!("{tag}.{}", r.label),
            terms: shift(&r.terms),
            sense: r.sense,
            rhs: r.rhs,
        });
    }
    let shift_expr = |e: &AffineExpr| AffineExpr::new(shift(&e.terms), e.constant);
    for c in &src.soc_constraints {
        dst.soc_constraints.push(SocConstraint {
            label: format!("{tag}.{}", c.label),
            bound: shift_expr(&c.bound),
            members: c.members.iter().map(shift_expr).collect(),
        });
    }
    offset
}

/// Recovers the target demand from the iterates in `window`.
pub fn solve_adversary(ctx: &DualContext, spec: &AttackSpec, trace: &RunTrace, window: &[usize]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::invalid("attack window is empty"));
    }
    let z = spec.target_zone;
    let model = &ctx.zones[z];
    let local = model.local_bus(spec.target_bus).ok_or_else(|| Error::invalid("target bus not in zone"))?;
    let truth = spec.true_demand(ctx);
    let weight = spec.gamma * ctx.net.base_mva * ctx.net.base_mva;
    let range = ctx.part.dual_range(z);

    let mut prog = ConicProgram::new(format!("adversary-zone{z}"));
    let d = prog.add_var("D", 0.0, 5.0 * truth.abs());
    for &k in window {
        let rec = trace
            .records
            .get(k.wrapping_sub(1))
            .ok_or_else(|| Error::invalid(format!("iteration {k} not in trace")))?;
        let x_hat = &rec.zone_x[z];
        let y_hat = &rec.y_tilde[range.clone()];
        let offset = append_program(&mut prog, &model.program, &format!("k{k}"));
        let first_row = prog.linear_constraints.len() - model.program.linear_constraints.len();
        let row = &mut prog.linear_constraints[first_row + model.p_balance_rows[local]];
        row.terms.push((d, 1.0));
        row.rhs = 0.0;
        for (&j, &v) in model.x_vars.iter().zip(x_hat).chain(model.y_vars.iter().zip(y_hat)) {
            let idx = offset + j;
            prog.quad_obj[idx] += weight;
            prog.linear_obj[idx] -= 2.0 * weight * v;
            prog.obj_constant += weight * v * v;
        }
    }
    let res = solve(&prog, None, &ctx.solver).require_optimal("adversary program")?;
    let est = res.x[d];
    if est >= 5.0 * truth.abs() * (1.0 - 1e-6) {
        log::warn!("demand estimate {est} sits on the upper bound");
    }
    Ok(est)
}

/// Scores per-window estimates against the true demand.
pub fn score(estimates: Vec<WindowEstimate>, true_demand: f64, g_bar: f64) -> Result<AttackResult> {
    let de = estimates.iter().map(|e| demand_error(true_demand, e.demand)).collect::<Result<Vec<_>>>()?;
    let n = de.len().max(1) as f64;
    Ok(AttackResult {
        window_len: estimates.first().map_or(0, |e| e.window.len()),
        average_dee: de.iter().sum::<f64>() / n,
        cos: 100.0 * de.iter().filter(|&&v| v <= g_bar).count() as f64 / n,
        de_per_window: de,
        estimates,
    })
}

/// Chance of success pooled over several window lengths.
pub fn chance_of_success(results: &[AttackResult], g_bar: f64) -> f64 {
    let total: usize = results.iter().map(|r| r.de_per_window.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let hits: usize = results.iter().map(|r| r.de_per_window.iter().filter(|&&v| v <= g_bar).count()).sum();
    100.0 * hits as f64 / total as f64
}

/// Attacks a trace with every window length in `ts`.
pub fn run_attack(
    ctx: &DualContext,
    spec: &AttackSpec,
    trace: &RunTrace,
    ts: &[usize],
    g_bar: f64,
) -> Result<Vec<AttackResult>> {
    spec.validate(ctx)?;
    let truth = spec.true_demand(ctx);
    ts.iter()
        .map(|&t| {
            let estimates = make_windows(trace.records.len(), t)?
                .into_iter()
                .map(|w| Ok(WindowEstimate { demand: solve_adversary(ctx, spec, trace, &w)?, window: w }))
                .collect::<Result<Vec<_>>>()?;
            score(estimates, truth, g_bar)
        })
        .collect()
}

pub const ATTACK_CSV_HEADER: &str = "window_len,window_start,window_end,estimate_mw,true_mw,de_pct";

/// One row per window across all results; demands in MW.
pub fn write_attack_csv(
    path: impl AsRef<std::path::Path>,
    results: &[AttackResult],
    true_demand: f64,
    base_mva: f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ATTACK_CSV_HEADER.split(','))?;
    for r in results {
        for (e, de) in r.estimates.iter().zip(&r.de_per_window) {
            w.write_record(&[
                r.window_len.to_string(),
                e.window.first().copied().unwrap_or(0).to_string(),
                e.window.last().copied().unwrap_or(0).to_string(),
                (e.demand * base_mva).to_string(),
                (true_demand * base_mva).to_string(),
                de.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
