//! Matpower case parsing and the per-unit network model.
//!
//! Only the numeric tables of a `.m` case file are read (`mpc.baseMVA`,
//! `mpc.bus`, `mpc.gen`, `mpc.branch`, `mpc.gencost`). Everything is converted
//! to per-unit on `base_mva` at parse time, except generator cost
//! coefficients which stay in $/MW and $/MW² so objectives come out in $/hr.

use std::collections::BTreeSet;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angle-difference bound used when a branch row has no ANGMIN/ANGMAX columns.
pub const DEFAULT_ANGLE_BOUND_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    /// Bus number as written in the case file.
    pub id: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub p_demand: f64,
    pub q_demand: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    /// Internal (0-based) bus index.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Linear cost, $/MW.
    pub c1: f64,
    /// Quadratic cost, $/MW².
    pub c2: f64,
    /// Constant cost, $.
    pub c0: f64,
}

impl GeneratorRecord {
    /// Cost in $/hr of a per-unit active output on the given MVA base.
    pub fn cost(&self, p_pu: f64, base_mva: f64) -> f64 {
        let mw = p_pu * base_mva;
        self.c2 * mw * mw + self.c1 * mw + self.c0
    }
}

/// The four complex entries of a branch admittance matrix, split into
/// conductance and susceptance parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceBlock {
    pub g_ff: f64,
    pub b_ff: f64,
    pub g_ft: f64,
    pub b_ft: f64,
    pub g_tf: f64,
    pub b_tf: f64,
    pub g_tt: f64,
    pub b_tt: f64,
}

impl AdmittanceBlock {
    pub fn from_complex(ff: Complex64, ft: Complex64, tf: Complex64, tt: Complex64) -> Self {
        Self { g_ff: ff.re, b_ff: ff.im, g_ft: ft.re, b_ft: ft.im, g_tf: tf.re, b_tf: tf.im, g_tt: tt.re, b_tt: tt.im }
    }

    pub fn ff(&self) -> Complex64 {
        Complex64::new(self.g_ff, self.b_ff)
    }
    pub fn ft(&self) -> Complex64 {
        Complex64::new(self.g_ft, self.b_ft)
    }
    pub fn tf(&self) -> Complex64 {
        Complex64::new(self.g_tf, self.b_tf)
    }
    pub fn tt(&self) -> Complex64 {
        Complex64::new(self.g_tt, self.b_tt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    /// Internal (0-based) bus indices.
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charge: f64,
    pub tau: f64,
    /// Phase shift, radians.
    pub theta_shift: f64,
    /// Thermal limit in p.u.; `None` when the case leaves it unlimited.
    pub s_max: Option<f64>,
    /// Angle-difference bounds, radians.
    pub angle_min: f64,
    pub angle_max: f64,
    pub admittance: AdmittanceBlock,
}

/// Computes the branch admittance block from its series impedance, line
/// charging, tap ratio and phase shift.
pub fn admittance_block(branch: &BranchRecord) -> Result<AdmittanceBlock> {
    admittance_from_params(branch.r, branch.x, branch.b_charge, branch.tau, branch.theta_shift)
}

pub(crate) fn admittance_from_params(
    r: f64,
    x: f64,
    b_charge: f64,
    tau: f64,
    theta_shift: f64,
) -> Result<AdmittanceBlock> {
    let z = Complex64::new(r, x);
    if z.norm_sqr() == 0.0 {
        return Err(Error::SingularBranch(0));
    }
    let ys = z.inv();
    let charging = Complex64::new(0.0, b_charge / 2.0);
    let ff = (ys + charging) / (tau * tau);
    let ft = -ys / (tau * Complex64::from_polar(1.0, -theta_shift));
    let tf = -ys / (tau * Complex64::from_polar(1.0, theta_shift));
    let tt = ys + charging;
    Ok(AdmittanceBlock::from_complex(ff, ft, tf, tt))
}

/// Per-bus incidence derived from the branch and generator lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adjacency {
    pub neighbors: Vec<BTreeSet<usize>>,
    /// Lines whose from-end is the bus.
    pub lines_from: Vec<Vec<usize>>,
    /// Lines whose to-end is the bus.
    pub lines_to: Vec<Vec<usize>>,
    pub generators: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkData {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub generators: Vec<GeneratorRecord>,
    pub branches: Vec<BranchRecord>,
    #[serde(skip)]
    pub adjacency: Adjacency,
}

impl NetworkData {
    /// Validates the records and builds the adjacency structure.
    pub fn new(
        base_mva: f64,
        buses: Vec<BusRecord>,
        generators: Vec<GeneratorRecord>,
        branches: Vec<BranchRecord>,
    ) -> Result<Self> {
        let mut net = Self { base_mva, buses, generators, branches, adjacency: Adjacency::default() };
        net.validate()?;
        net.adjacency = net.build_adjacency();
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Validation(format!("baseMVA must be positive, got {}", self.base_mva)));
        }
        let n = self.buses.len();
        for bus in &self.buses {
            if !(bus.v_min > 0.0) || bus.v_min > bus.v_max {
                return Err(Error::Validation(format!(
                    "bus {}: voltage bounds [{}, {}] invalid",
                    bus.id, bus.v_min, bus.v_max
                )));
            }
            if !bus.p_demand.is_finite() || !bus.q_demand.is_finite() {
                return Err(Error::Validation(format!("bus {}: non-finite demand", bus.id)));
            }
        }
        for (g, gen) in self.generators.iter().enumerate() {
            if gen.bus >= n {
                return Err(Error::Validation(format!("generator {g} references unknown bus")));
            }
            if gen.p_min > gen.p_max || gen.q_min > gen.q_max {
                return Err(Error::Validation(format!("generator {g}: inverted bounds")));
            }
            if gen.c2 < 0.0 {
                return Err(Error::Validation(format!("generator {g}: negative quadratic cost")));
            }
        }
        for (l, br) in self.branches.iter().enumerate() {
            if br.from_bus >= n || br.to_bus >= n {
                return Err(Error::Validation(format!("branch {l} references unknown bus")));
            }
            if !(br.tau > 0.0) {
                return Err(Error::Validation(format!("branch {l}: nonpositive tap ratio {}", br.tau)));
            }
            if br.r * br.r + br.x * br.x == 0.0 {
                return Err(Error::SingularBranch(l));
            }
            if br.angle_min > br.angle_max {
                return Err(Error::Validation(format!("branch {l}: inverted angle bounds")));
            }
        }
        Ok(())
    }

    fn build_adjacency(&self) -> Adjacency {
        let n = self.buses.len();
        let mut adj = Adjacency {
            neighbors: vec![BTreeSet::new(); n],
            lines_from: vec![Vec::new(); n],
            lines_to: vec![Vec::new(); n],
            generators: vec![Vec::new(); n],
        };
        for (l, br) in self.branches.iter().enumerate() {
            adj.neighbors[br.from_bus].insert(br.to_bus);
            adj.neighbors[br.to_bus].insert(br.from_bus);
            adj.lines_from[br.from_bus].push(l);
            adj.lines_to[br.to_bus].push(l);
        }
        for (g, gen) in self.generators.iter().enumerate() {
            adj.generators[gen.bus].push(g);
        }
        adj
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Internal index of a bus given its case-file number.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Active demand vector in p.u., indexed by internal bus.
    pub fn active_demand(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.p_demand).collect()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_matpower(&text)
    }

    /// Serializes to the canonical JSON dump.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Loads a canonical JSON dump, re-validating and rebuilding adjacency.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: NetworkData = serde_json::from_str(text)?;
        Self::new(raw.base_mva, raw.buses, raw.generators, raw.branches)
    }
}

struct Table {
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Extracts `mpc.<name> = [ ... ];` as numeric rows tagged with their line number.
fn find_table(text: &str, name: &str) -> Result<Option<Table>> {
    let lines: Vec<&str> = text.lines().collect();
    let header = format!("mpc.{name}");
    let mut start = None;
    for (i, raw) in lines.iter().enumerate() {
        let line = strip_comment(raw).trim();
        if let Some(rest) = line.strip_prefix(&header) {
            let rest = rest.trim_start();
            if let Some(rest) = rest.strip_prefix('=') {
                if rest.trim_start().starts_with('[') {
                    start = Some(i);
                    break;
                }
            }
        }
    }
    let Some(start) = start else {
        return Ok(None);
    };

    let mut rows = Vec::new();
    let mut closed = false;
    for (i, raw) in lines.iter().enumerate().skip(start) {
        let lineno = i + 1;
        let mut line = strip_comment(raw);
        if i == start {
            line = &line[line.find('[').map(|p| p + 1).unwrap_or(0)..];
        }
        let body = match line.find(']') {
            Some(end) => {
                closed = true;
                &line[..end]
            }
            None => line,
        };
        for chunk in body.split(';') {
            let cells: Vec<&str> =
                chunk.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if cells.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(cells.len());
            for cell in cells {
                let v = parse_number(cell).ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: format!("mpc.{name}: cannot parse '{cell}' as a number"),
                })?;
                row.push(v);
            }
            rows.push((lineno, row));
        }
        if closed {
            break;
        }
    }
    if !closed {
        return Err(Error::Parse { line: start + 1, msg: format!("mpc.{name}: unterminated matrix") });
    }
    Ok(Some(Table { rows }))
}

fn parse_number(cell: &str) -> Option<f64> {
    match cell {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => cell.parse().ok(),
    }
}

fn find_scalar(text: &str, name: &str) -> Result<Option<(usize, f64)>> {
    let header = format!("mpc.{name}");
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if let Some(rest) = line.strip_prefix(&header) {
            let Some(rest) = rest.trim_start().strip_prefix('=') else {
                continue;
            };
            let value = rest.trim().trim_end_matches(';').trim();
            let v = parse_number(value)
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("mpc.{name}: cannot parse '{value}'") })?;
            return Ok(Some((i + 1, v)));
        }
    }
    Ok(None)
}

fn require_cols(row: &(usize, Vec<f64>), n: usize, table: &str) -> Result<()> {
    if row.1.len() < n {
        return Err(Error::Parse {
            line: row.0,
            msg: format!("mpc.{table}: expected at least {n} columns, found {}", row.1.len()),
        });
    }
    Ok(())
}

/// Parses Matpower case-file text into a validated per-unit network.
///
/// Out-of-service generators and branches are dropped. A missing `gencost`
/// table defaults every generator to `c1 = 1, c2 = 0`.
pub fn parse_matpower(text: &str) -> Result<NetworkData> {
    let (_, base_mva) =
        find_scalar(text, "baseMVA")?.ok_or_else(|| Error::Parse { line: 0, msg: "missing mpc.baseMVA".into() })?;
    let bus_t =
        find_table(text, "bus")?.ok_or_else(|| Error::Parse { line: 0, msg: "missing mpc.bus table".into() })?;
    let gen_t =
        find_table(text, "gen")?.ok_or_else(|| Error::Parse { line: 0, msg: "missing mpc.gen table".into() })?;
    let branch_t =
        find_table(text, "branch")?.ok_or_else(|| Error::Parse { line: 0, msg: "missing mpc.branch table".into() })?;
    let cost_t = find_table(text, "gencost")?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for row in &bus_t.rows {
        require_cols(row, 13, "bus")?;
        let c = &row.1;
        if c[0] < 0.0 || c[0].fract() != 0.0 {
            return Err(Error::Parse { line: row.0, msg: format!("invalid bus number {}", c[0]) });
        }
        buses.push(BusRecord {
            id: c[0] as usize,
            p_demand: c[2] / base_mva,
            q_demand: c[3] / base_mva,
            g_shunt: c[4] / base_mva,
            b_shunt: c[5] / base_mva,
            v_max: c[11],
            v_min: c[12],
        });
    }
    let lookup = |id: f64, line: usize, what: &str| -> Result<usize> {
        buses
            .iter()
            .position(|b| b.id as f64 == id)
            .ok_or_else(|| Error::Validation(format!("{what} on line {line} references unknown bus {id}")))
    };

    let mut generators = Vec::new();
    let mut gen_rows = Vec::new();
    for (g, row) in gen_t.rows.iter().enumerate() {
        require_cols(row, 10, "gen")?;
        let c = &row.1;
        if c[7] <= 0.0 {
            continue;
        }
        gen_rows.push(g);
        generators.push(GeneratorRecord {
            bus: lookup(c[0], row.0, "generator")?,
            q_max: c[3] / base_mva,
            q_min: c[4] / base_mva,
            p_max: c[8] / base_mva,
            p_min: c[9] / base_mva,
            c1: 1.0,
            c2: 0.0,
            c0: 0.0,
        });
    }

    if let Some(cost_t) = cost_t {
        if cost_t.rows.len() < gen_t.rows.len() {
            return Err(Error::Parse {
                line: cost_t.rows.last().map(|r| r.0).unwrap_or(0),
                msg: format!("mpc.gencost has {} rows for {} generators", cost_t.rows.len(), gen_t.rows.len()),
            });
        }
        for (gen, &g) in generators.iter_mut().zip(&gen_rows) {
            let row = &cost_t.rows[g];
            require_cols(row, 4, "gencost")?;
            let c = &row.1;
            if c[0] != 2.0 {
                return Err(Error::Parse { line: row.0, msg: "only polynomial gencost (model 2) is supported".into() });
            }
            let n = c[3] as usize;
            require_cols(row, 4 + n, "gencost")?;
            if n > 3 {
                return Err(Error::Parse { line: row.0, msg: format!("polynomial of degree {} not supported", n - 1) });
            }
            // coefficients are listed highest degree first
            let coeffs = &c[4..4 + n];
            let coef = |deg: usize| if deg < n { coeffs[n - 1 - deg] } else { 0.0 };
            gen.c0 = coef(0);
            gen.c1 = coef(1);
            gen.c2 = coef(2);
        }
    }

    let mut branches = Vec::new();
    for row in &branch_t.rows {
        require_cols(row, 11, "branch")?;
        let c = &row.1;
        if c[10] <= 0.0 {
            continue;
        }
        let tau = if c[8] == 0.0 { 1.0 } else { c[8] };
        let (angle_min, angle_max) = if c.len() >= 13 {
            (c[11].to_radians(), c[12].to_radians())
        } else {
            (-DEFAULT_ANGLE_BOUND_DEG.to_radians(), DEFAULT_ANGLE_BOUND_DEG.to_radians())
        };
        let s_max = if c[5] > 0.0 { Some(c[5] / base_mva) } else { None };
        let mut br = BranchRecord {
            from_bus: lookup(c[0], row.0, "branch")?,
            to_bus: lookup(c[1], row.0, "branch")?,
            r: c[2],
            x: c[3],
            b_charge: c[4],
            tau,
            theta_shift: c[9].to_radians(),
            s_max,
            angle_min,
            angle_max,
            admittance: AdmittanceBlock::from_complex(
                Complex64::default(),
                Complex64::default(),
                Complex64::default(),
                Complex64::default(),
            ),
        };
        if !(tau > 0.0) {
            return Err(Error::Validation(format!("branch on line {}: nonpositive tap ratio {tau}", row.0)));
        }
        br.admittance = admittance_block(&br).map_err(|_| Error::SingularBranch(branches.len()))?;
        branches.push(br);
    }

    NetworkData::new(base_mva, buses, generators, branches)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = two\nmpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n2 1 50 10 0 0 1 1 0 100 1 1.1 0.9;\n];\nmpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n];\nmpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1 -360 360;\n];\nmpc.gencost = [\n2 0 0 3 0.01 10 5;\n];\n";

    fn branch(r: f64, x: f64, b: f64, tau: f64, shift: f64) -> BranchRecord {
        BranchRecord {
            from_bus: 0,
            to_bus: 1,
            r,
            x,
            b_charge: b,
            tau,
            theta_shift: shift,
            s_max: None,
            angle_min: -0.5,
            angle_max: 0.5,
            admittance: admittance_from_params(r, x, b, tau, shift).unwrap(),
        }
    }

    #[test]
    fn pure_reactance_identity_tap() {
        let y = admittance_block(&branch(0.0, 0.1, 0.0, 1.0, 0.0)).unwrap();
        assert!((y.g_ff).abs() < 1e-12 && (y.b_ff + 10.0).abs() < 1e-12);
        assert!((y.g_ft).abs() < 1e-12 && (y.b_ft - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lossy_branch() {
        let y = admittance_block(&branch(0.01, 0.1, 0.0, 1.0, 0.0)).unwrap();
        assert!((y.g_ff - 0.9901).abs() < 1e-3);
        assert!((y.b_ff + 9.9010).abs() < 1e-3);
        assert_eq!(y.ff(), y.tt());
    }

    #[test]
    fn tap_scales_from_side() {
        let base = admittance_block(&branch(0.01, 0.1, 0.0, 1.0, 0.0)).unwrap();
        let tapped = admittance_block(&branch(0.01, 0.1, 0.0, 2.0, 0.0)).unwrap();
        assert!((tapped.ff() - base.ff() / 4.0).norm() < 1e-12);
        assert!((tapped.tt() - base.tt()).norm() < 1e-12);
    }

    #[test]
    fn charging_adds_half_susceptance() {
        let y = admittance_block(&branch(0.01, 0.1, 0.2, 1.0, 0.0)).unwrap();
        assert!((y.b_ff - (-9.9010 + 0.1)).abs() < 1e-3);
    }

    #[test]
    fn zero_impedance_is_singular() {
        assert!(matches!(admittance_from_params(0.0, 0.0, 0.0, 1.0, 0.0), Err(Error::SingularBranch(_))));
    }

    #[test]
    fn parses_two_bus_case() {
        let net = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.buses[1].p_demand, 0.5);
        assert_eq!(net.generators[0].c2, 0.01);
        assert_eq!(net.generators[0].c1, 10.0);
        assert_eq!(net.generators[0].c0, 5.0);
        assert_eq!(net.generators[0].p_max, 2.0);
        assert_eq!(net.branches[0].s_max, None);
        assert_eq!(net.adjacency.lines_from[0], vec![0]);
        assert_eq!(net.adjacency.lines_to[1], vec![0]);
    }

    #[test]
    fn missing_gencost_defaults_to_linear_unit_cost() {
        let text = TWO_BUS.split("mpc.gencost").next().unwrap();
        let net = parse_matpower(text).unwrap();
        assert_eq!((net.generators[0].c1, net.generators[0].c2), (1.0, 0.0));
    }

    #[test]
    fn missing_angle_columns_default_to_thirty_degrees() {
        let text = TWO_BUS.replace("1 2 0 0.1 0 0 0 0 0 0 1 -360 360;", "1 2 0 0.1 0 0 0 0 0 0 1;");
        let net = parse_matpower(&text).unwrap();
        assert!((net.branches[0].angle_max - 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn malformed_cell_reports_line() {
        let text = TWO_BUS.replace("2 1 50 10", "2 1 5x0 10");
        match parse_matpower(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_bus_is_validation_error() {
        let text = TWO_BUS.replace("1 2 0 0.1", "1 7 0 0.1");
        assert!(matches!(parse_matpower(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn nonpositive_vmin_rejected() {
        let text = TWO_BUS.replace("1.1 0.9;\n2", "1.1 0;\n2");
        assert!(matches!(parse_matpower(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn negative_tap_rejected() {
        let text = TWO_BUS.replace("0.1 0 0 0 0 0 0 1 -360", "0.1 0 0 0 0 -1 0 1 -360");
        assert!(parse_matpower(&text).is_err());
    }
}
