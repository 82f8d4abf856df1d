//! Solver-agnostic conic programs for the centralized SOC OPF and for the
//! per-zone feasible sets used by dual decomposition.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkData;
use crate::partition::{Quantity, ZonePartition};

/// Angle bounds at or beyond this magnitude are treated as absent.
const VACUOUS_ANGLE: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub label: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `‖members‖₂ ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub label: String,
    pub bound: AffineExpr,
    pub members: Vec<AffineExpr>,
}

/// Minimize `Σ quad_obj[j]·x_j² + linear_obj·x + obj_constant` over box
/// bounds, linear rows and second-order cones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub name: String,
    pub variables: Vec<Variable>,
    pub linear_obj: Vec<f64>,
    pub quad_obj: Vec<f64>,
    pub obj_constant: f64,
    pub linear_constraints: Vec<LinearConstraint>,
    pub soc_constraints: Vec<SocConstraint>,
    pub index: HashMap<String, usize>,
}

impl ConicProgram {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let j = self.variables.len();
        self.index.insert(name.clone(), j);
        self.variables.push(Variable { name, lower, upper });
        self.linear_obj.push(0.0);
        self.quad_obj.push(0.0);
        j
    }

    pub fn add_linear(&mut self, label: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.linear_constraints.push(LinearConstraint { label: label.into(), terms, sense, rhs });
        self.linear_constraints.len() - 1
    }

    pub fn add_soc(&mut self, label: impl Into<String>, bound: AffineExpr, members: Vec<AffineExpr>) {
        self.soc_constraints.push(SocConstraint { label: label.into(), bound, members });
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj_constant
            + x.iter().zip(self.linear_obj.iter().zip(&self.quad_obj)).map(|(v, (c, q))| c * v + q * v * v).sum::<f64>()
    }

    /// Largest violation of any bound, linear row or cone at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, var) in x.iter().zip(&self.variables) {
            worst = worst.max(var.lower - v).max(v - var.upper);
        }
        for row in &self.linear_constraints {
            let lhs: f64 = row.terms.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match row.sense {
                Sense::Eq => (lhs - row.rhs).abs(),
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
            };
            worst = worst.max(viol);
        }
        for cone in &self.soc_constraints {
            let norm = cone.members.iter().map(|m| m.eval(x).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(norm - cone.bound.eval(x));
        }
        worst
    }

    /// Plain-text dump for cross-checking with external solvers.
    ///
    /// ```text
    /// program <name>
    /// objective_constant <c>
    /// var <j> <name> <lower> <upper> <linear> <quadratic>
    /// row <label> <eq|le|ge> <rhs> <j>:<coef> ...
    /// soc <label> bound <const> <j>:<coef> ... | member <const> <j>:<coef> ... | ...
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "program {}", self.name);
        let _ = writeln!(out, "objective_constant {:e}", self.obj_constant);
        for (j, v) in self.variables.iter().enumerate() {
            let _ = writeln!(
                out,
                "var {j} {} {:e} {:e} {:e} {:e}",
                v.name, v.lower, v.upper, self.linear_obj[j], self.quad_obj[j]
            );
        }
        let terms = |t: &[(usize, f64)]| t.iter().map(|(j, a)| format!(" {j}:{a:e}")).collect::<String>();
        for row in &self.linear_constraints {
            let sense = match row.sense {
                Sense::Eq => "eq",
                Sense::Le => "le",
                Sense::Ge => "ge",
            };
            let _ = writeln!(out, "row {} {sense} {:e}{}", row.label, row.rhs, terms(&row.terms));
        }
        for cone in &self.soc_constraints {
            let _ = write!(out, "soc {} bound {:e}{}", cone.label, cone.bound.constant, terms(&cone.bound.terms));
            for m in &cone.members {
                let _ = write!(out, " | member {:e}{}", m.constant, terms(&m.terms));
            }
            out.push('\n');
        }
        out
    }
}

/// Box on a boundary quantity shared between zones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBound {
    pub lower: f64,
    pub upper: f64,
}

impl BoundaryBound {
    pub fn magnitude(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }
}

/// Bound on one line quantity: thermal limit for flows (or a limit implied
/// by the voltage bounds when the line is unlimited), `v̄_i v̄_j` for the
/// voltage-product terms.
pub fn line_quantity_bound(net: &NetworkData, line: usize, q: Quantity) -> BoundaryBound {
    let br = &net.branches[line];
    let vi = net.buses[br.from_bus].v_max;
    let vj = net.buses[br.to_bus].v_max;
    let y = &br.admittance;
    let m = match q {
        Quantity::WRr | Quantity::WIi | Quantity::WRiFromTo | Quantity::WRiToFrom => vi * vj,
        _ => match br.s_max {
            Some(s) => s,
            None => {
                let cross = vi * vj;
                match q {
                    Quantity::PFrom => y.g_ff.abs() * vi * vi + (y.g_ft.abs() + y.b_ft.abs()) * cross,
                    Quantity::QFrom => y.b_ff.abs() * vi * vi + (y.g_ft.abs() + y.b_ft.abs()) * cross,
                    Quantity::PTo => y.g_tt.abs() * vj * vj + (y.g_tf.abs() + y.b_tf.abs()) * cross,
                    _ => y.b_tt.abs() * vj * vj + (y.g_tf.abs() + y.b_tf.abs()) * cross,
                }
            }
        },
    };
    BoundaryBound { lower: -m, upper: m }
}

/// `[y^L_i, y^U_i]` for every consensus index.
pub fn boundary_bounds(net: &NetworkData, part: &ZonePartition) -> Vec<BoundaryBound> {
    part.consensus.iter().map(|c| line_quantity_bound(net, c.line, c.quantity)).collect()
}

/// Upper bound on the squared norm of a noisy supergradient given per-copy
/// noise magnitudes (indexed like the dual vector).
pub fn g_upper(part: &ZonePartition, bounds: &[BoundaryBound], xi_upper: &[f64]) -> f64 {
    let mut total = 0.0;
    for (z, view) in part.zone_view.iter().enumerate() {
        for (j, &i) in view.iter().enumerate() {
            let m = bounds[i].magnitude();
            let xi = xi_upper.get(part.dual_offsets[z] + j).copied().unwrap_or(0.0);
            total += m * m + xi * xi + 2.0 * xi * m;
        }
    }
    total
}

/// Variable indices of one line's eight quantities, in [`Quantity::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineVars(pub [usize; 8]);

impl LineVars {
    pub fn get(&self, q: Quantity) -> usize {
        self.0[q.offset()]
    }
}

/// A zone's conic program plus the bookkeeping needed to read its boundary
/// values and to swap its demand data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneModel {
    pub zone: usize,
    pub program: ConicProgram,
    /// Boundary variables ordered like the zone view.
    pub y_vars: Vec<usize>,
    /// All remaining variables, ascending.
    pub x_vars: Vec<usize>,
    pub buses: Vec<usize>,
    /// Active balance row of each zone bus (parallel to `buses`).
    pub p_balance_rows: Vec<usize>,
    pub q_balance_rows: Vec<usize>,
    pub u_vars: HashMap<usize, usize>,
    pub line_vars: HashMap<usize, LineVars>,
    /// `(generator, p variable, q variable)`.
    pub gen_vars: Vec<(usize, usize, usize)>,
}

/// Split of a zone solution into internal and boundary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePrimal {
    pub x_part: Vec<f64>,
    pub y_part: Vec<f64>,
}

impl ZoneModel {
    pub fn split(&self, x: &[f64]) -> ZonePrimal {
        ZonePrimal {
            x_part: self.x_vars.iter().map(|&j| x[j]).collect(),
            y_part: self.y_vars.iter().map(|&j| x[j]).collect(),
        }
    }

    /// Current active demand (p.u.) at each zone bus.
    pub fn demand(&self) -> Vec<f64> {
        self.p_balance_rows.iter().map(|&r| -self.program.linear_constraints[r].rhs).collect()
    }

    /// Replaces the active demand of the zone buses (ordered like `buses`).
    pub fn set_demand(&mut self, demand: &[f64]) -> Result<()> {
        if demand.len() != self.buses.len() {
            return Err(Error::LengthMismatch { expected: self.buses.len(), found: demand.len() });
        }
        for (&row, &d) in self.p_balance_rows.iter().zip(demand) {
            self.program.linear_constraints[row].rhs = -d;
        }
        Ok(())
    }

    /// Position of a bus within `buses`.
    pub fn local_bus(&self, bus: usize) -> Option<usize> {
        self.buses.iter().position(|&b| b == bus)
    }
}

struct ZoneSpec<'a> {
    name: String,
    zone: usize,
    buses: &'a [usize],
    lines: &'a [usize],
    nodes: &'a [usize],
    /// Consensus indices `(line, quantity)` in zone-view order.
    boundary: Vec<(usize, Quantity)>,
}

fn build_zone_model(net: &NetworkData, spec: ZoneSpec<'_>) -> ZoneModel {
    let mut prog = ConicProgram::new(spec.name);
    let bus_id = |b: usize| net.buses[b].id;

    let mut u_vars = HashMap::new();
    for &b in spec.nodes {
        let bus = &net.buses[b];
        let j = prog.add_var(format!("u[{}]", bus_id(b)), bus.v_min * bus.v_min, bus.v_max * bus.v_max);
        u_vars.insert(b, j);
    }

    let mut line_vars = HashMap::new();
    for &l in spec.lines {
        let br = &net.branches[l];
        let tag = format!("{}:{}-{}", l, bus_id(br.from_bus), bus_id(br.to_bus));
        let mut ids = [0usize; 8];
        for q in Quantity::ALL {
            let bb = line_quantity_bound(net, l, q);
            ids[q.offset()] = prog.add_var(format!("{}[{tag}]", q.label()), bb.lower, bb.upper);
        }
        let lv = LineVars(ids);
        let ui = u_vars[&br.from_bus];
        let uj = u_vars[&br.to_bus];
        let (pf, qf, pt, qt) =
            (lv.get(Quantity::PFrom), lv.get(Quantity::QFrom), lv.get(Quantity::PTo), lv.get(Quantity::QTo));
        let (wrr, wii) = (lv.get(Quantity::WRr), lv.get(Quantity::WIi));
        let (wri_ij, wri_ji) = (lv.get(Quantity::WRiFromTo), lv.get(Quantity::WRiToFrom));
        let y = br.admittance;

        // c := wRR + wII = Re(V_i V_j*), s := wRI_ji - wRI_ij = Im(V_i V_j*)
        prog.add_linear(
            format!("pF[{tag}]"),
            vec![(pf, 1.0), (ui, -y.g_ff), (wrr, -y.g_ft), (wii, -y.g_ft), (wri_ji, -y.b_ft), (wri_ij, y.b_ft)],
            Sense::Eq,
            0.0,
        );
        prog.add_linear(
            format!("qF[{tag}]"),
            vec![(qf, 1.0), (ui, y.b_ff), (wrr, y.b_ft), (wii, y.b_ft), (wri_ji, -y.g_ft), (wri_ij, y.g_ft)],
            Sense::Eq,
            0.0,
        );
        prog.add_linear(
            format!("pT[{tag}]"),
            vec![(pt, 1.0), (uj, -y.g_tt), (wrr, -y.g_tf), (wii, -y.g_tf), (wri_ji, y.b_tf), (wri_ij, -y.b_tf)],
            Sense::Eq,
            0.0,
        );
        prog.add_linear(
            format!("qT[{tag}]"),
            vec![(qt, 1.0), (uj, y.b_tt), (wrr, y.b_tf), (wii, y.b_tf), (wri_ji, y.g_tf), (wri_ij, -y.g_tf)],
            Sense::Eq,
            0.0,
        );

        if let Some(s) = br.s_max {
            let single = |j| AffineExpr::new(vec![(j, 1.0)], 0.0);
            prog.add_soc(format!("smaxF[{tag}]"), AffineExpr::new(vec![], s), vec![single(pf), single(qf)]);
            prog.add_soc(format!("smaxT[{tag}]"), AffineExpr::new(vec![], s), vec![single(pt), single(qt)]);
        }

        if br.angle_max.abs() < VACUOUS_ANGLE {
            let t = br.angle_max.tan();
            prog.add_linear(
                format!("angmax[{tag}]"),
                vec![(wri_ji, 1.0), (wri_ij, -1.0), (wrr, -t), (wii, -t)],
                Sense::Le,
                0.0,
            );
        }
        if br.angle_min.abs() < VACUOUS_ANGLE {
            let t = br.angle_min.tan();
            prog.add_linear(
                format!("angmin[{tag}]"),
                vec![(wri_ji, 1.0), (wri_ij, -1.0), (wrr, -t), (wii, -t)],
                Sense::Ge,
                0.0,
            );
        }

        prog.add_soc(
            format!("soc[{tag}]"),
            AffineExpr::new(vec![(ui, 0.5), (uj, 0.5)], 0.0),
            vec![
                AffineExpr::new(vec![(wrr, 1.0), (wii, 1.0)], 0.0),
                AffineExpr::new(vec![(wri_ji, 1.0), (wri_ij, -1.0)], 0.0),
                AffineExpr::new(vec![(ui, 0.5), (uj, -0.5)], 0.0),
            ],
        );
        line_vars.insert(l, lv);
    }

    let mut gen_vars = Vec::new();
    let base = net.base_mva;
    for &b in spec.buses {
        for &g in &net.adjacency.generators[b] {
            let gen = &net.generators[g];
            let p = prog.add_var(format!("pG[{g}]"), gen.p_min, gen.p_max);
            let q = prog.add_var(format!("qG[{g}]"), gen.q_min, gen.q_max);
            prog.quad_obj[p] = gen.c2 * base * base;
            prog.linear_obj[p] = gen.c1 * base;
            prog.obj_constant += gen.c0;
            gen_vars.push((g, p, q));
        }
    }

    let mut p_rows = Vec::with_capacity(spec.buses.len());
    let mut q_rows = Vec::with_capacity(spec.buses.len());
    for &b in spec.buses {
        let bus = &net.buses[b];
        let adj = &net.adjacency;
        let ub = u_vars[&b];
        let mut pt = Vec::new();
        let mut qt = Vec::new();
        for &l in &adj.lines_from[b] {
            pt.push((line_vars[&l].get(Quantity::PFrom), 1.0));
            qt.push((line_vars[&l].get(Quantity::QFrom), 1.0));
        }
        for &l in &adj.lines_to[b] {
            pt.push((line_vars[&l].get(Quantity::PTo), 1.0));
            qt.push((line_vars[&l].get(Quantity::QTo), 1.0));
        }
        for &(g, p, q) in &gen_vars {
            if net.generators[g].bus == b {
                pt.push((p, -1.0));
                qt.push((q, -1.0));
            }
        }
        if bus.g_shunt != 0.0 {
            pt.push((ub, bus.g_shunt));
        }
        if bus.b_shunt != 0.0 {
            qt.push((ub, -bus.b_shunt));
        }
        p_rows.push(prog.add_linear(format!("pbal[{}]", bus.id), pt, Sense::Eq, -bus.p_demand));
        q_rows.push(prog.add_linear(format!("qbal[{}]", bus.id), qt, Sense::Eq, -bus.q_demand));
    }

    let y_vars: Vec<usize> = spec.boundary.iter().map(|&(l, q)| line_vars[&l].get(q)).collect();
    let mut is_y = vec![false; prog.n_vars()];
    for &j in &y_vars {
        is_y[j] = true;
    }
    let x_vars = (0..prog.n_vars()).filter(|&j| !is_y[j]).collect();

    ZoneModel {
        zone: spec.zone,
        program: prog,
        y_vars,
        x_vars,
        buses: spec.buses.to_vec(),
        p_balance_rows: p_rows,
        q_balance_rows: q_rows,
        u_vars,
        line_vars,
        gen_vars,
    }
}

/// The full-network SOC OPF as a single zone with no boundary.
pub fn build_centralized_soc(net: &NetworkData) -> ZoneModel {
    let buses: Vec<usize> = (0..net.n_buses()).collect();
    let lines: Vec<usize> = (0..net.branches.len()).collect();
    build_zone_model(
        net,
        ZoneSpec { name: "centralized".into(), zone: 0, buses: &buses, lines: &lines, nodes: &buses, boundary: vec![] },
    )
}

/// Zone `z`'s feasible set with its own generation cost as objective. The
/// multiplier terms are applied at solve time as an objective overlay.
///
/// `demand_override`, when given, replaces the active demand of the zone
/// buses (ordered like `part.zones[z]`).
pub fn build_zone_subproblem(
    net: &NetworkData,
    part: &ZonePartition,
    z: usize,
    demand_override: Option<&[f64]>,
) -> Result<ZoneModel> {
    if z >= part.n_zones() {
        return Err(Error::invalid(format!("zone {z} out of range (have {})", part.n_zones())));
    }
    let boundary = part.zone_view[z].iter().map(|&i| (part.consensus[i].line, part.consensus[i].quantity)).collect();
    let mut model = build_zone_model(
        net,
        ZoneSpec {
            name: format!("zone{z}"),
            zone: z,
            buses: &part.zones[z],
            lines: &part.line_sets[z],
            nodes: &part.extended_nodes[z],
            boundary,
        },
    );
    if let Some(d) = demand_override {
        model.set_demand(d)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_matpower;
    use crate::partition::build_partition;

    const TWO_BUS: &str = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 100 1 1.06 0.94;\n2 1 50 10 0 0 1 1 0 100 1 1.06 0.94;\n];\nmpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n];\nmpc.branch = [\n1 2 0 0.1 0 100 0 0 0 0 1 -360 360;\n];\nmpc.gencost = [\n2 0 0 3 0.01 10 0;\n];\n";

    #[test]
    fn bounds_follow_thermal_and_voltage_limits() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 1]).unwrap();
        let b = boundary_bounds(&net, &part);
        assert_eq!(b[0], BoundaryBound { lower: -1.0, upper: 1.0 });
        assert!((b[4].upper - 1.1236).abs() < 1e-12);
        assert!((b[4].lower + 1.1236).abs() < 1e-12);
    }

    #[test]
    fn g_upper_without_noise() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 1]).unwrap();
        let b = boundary_bounds(&net, &part);
        let expect: f64 = 2.0 * b.iter().map(|bb| bb.magnitude().powi(2)).sum::<f64>();
        let got = g_upper(&part, &b, &vec![0.0; part.dual_len()]);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn demand_override_touches_one_row() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 1]).unwrap();
        let base = build_zone_subproblem(&net, &part, 1, None).unwrap();
        let bumped = build_zone_subproblem(&net, &part, 1, Some(&[0.5 * 1.05])).unwrap();
        let diff: Vec<usize> = (0..base.program.linear_constraints.len())
            .filter(|&r| base.program.linear_constraints[r] != bumped.program.linear_constraints[r])
            .collect();
        assert_eq!(diff, vec![base.p_balance_rows[0]]);
        assert_eq!(base.program.soc_constraints, bumped.program.soc_constraints);
    }

    #[test]
    fn zone_boundary_layout() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 1]).unwrap();
        let m = build_zone_subproblem(&net, &part, 0, None).unwrap();
        assert_eq!(m.y_vars.len(), 8);
        assert_eq!(m.x_vars.len() + m.y_vars.len(), m.program.n_vars());
        assert!(build_zone_subproblem(&net, &part, 2, None).is_err());
    }

    #[test]
    fn text_dump_lists_everything() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let m = build_centralized_soc(&net);
        let text = m.program.to_text();
        assert_eq!(text.lines().filter(|l| l.starts_with("var ")).count(), m.program.n_vars());
        assert_eq!(text.lines().filter(|l| l.starts_with("soc ")).count(), m.program.soc_constraints.len());
    }
}
