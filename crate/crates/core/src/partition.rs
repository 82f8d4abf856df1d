//! Zonal decomposition: zone bus sets, line sets, cuts and the consensus
//! index machinery shared by the zone subproblems and the dual update.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkData;

/// Line quantity carried by a consensus index, in enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quantity {
    PFrom,
    QFrom,
    PTo,
    QTo,
    WRr,
    WIi,
    /// `v^R_i v^I_j` for the line's from-bus `i` and to-bus `j`.
    WRiFromTo,
    /// `v^R_j v^I_i`.
    WRiToFrom,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::PFrom,
        Quantity::QFrom,
        Quantity::PTo,
        Quantity::QTo,
        Quantity::WRr,
        Quantity::WIi,
        Quantity::WRiFromTo,
        Quantity::WRiToFrom,
    ];

    pub fn offset(self) -> usize {
        self as usize
    }

    pub fn is_flow(self) -> bool {
        matches!(self, Quantity::PFrom | Quantity::QFrom | Quantity::PTo | Quantity::QTo)
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::PFrom => "pF",
            Quantity::QFrom => "qF",
            Quantity::PTo => "pT",
            Quantity::QTo => "qT",
            Quantity::WRr => "wRR",
            Quantity::WIi => "wII",
            Quantity::WRiFromTo => "wRI_ij",
            Quantity::WRiToFrom => "wRI_ji",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusIndex {
    pub line: usize,
    pub quantity: Quantity,
    /// Zones sharing this quantity, ascending.
    pub zones: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePartition {
    pub zone_of: Vec<usize>,
    /// Bus sets, ascending internal indices.
    pub zones: Vec<Vec<usize>>,
    pub line_sets: Vec<Vec<usize>>,
    /// Zone buses plus all their neighbours.
    pub extended_nodes: Vec<Vec<usize>>,
    pub cuts: Vec<Vec<usize>>,
    pub consensus: Vec<ConsensusIndex>,
    /// Per zone, the consensus indices it holds, in ascending order.
    pub zone_view: Vec<Vec<usize>>,
    /// Start of each zone's block in a stacked dual vector.
    pub dual_offsets: Vec<usize>,
    /// For each consensus index, the dual-vector positions of its copies.
    pub consensus_positions: Vec<Vec<usize>>,
}

/// Values of the consensus variables, one per consensus index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVector(pub Vec<f64>);

/// Multipliers stacked zone by zone, each block ordered like the zone view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVector(pub Vec<f64>);

impl DualVector {
    pub fn zeros(part: &ZonePartition) -> Self {
        DualVector(vec![0.0; part.dual_len()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &DualVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// The block belonging to zone `z`.
    pub fn zone<'a>(&'a self, part: &ZonePartition, z: usize) -> &'a [f64] {
        &self.0[part.dual_range(z)]
    }
}

impl ZonePartition {
    pub fn n_zones(&self) -> usize {
        self.zones.len()
    }

    pub fn dual_len(&self) -> usize {
        self.zone_view.iter().map(Vec::len).sum()
    }

    pub fn dual_range(&self, z: usize) -> std::ops::Range<usize> {
        self.dual_offsets[z]..self.dual_offsets[z] + self.zone_view[z].len()
    }

    /// Lines of zone `z` that are not cuts.
    pub fn internal_lines(&self, z: usize) -> impl Iterator<Item = usize> + '_ {
        self.line_sets[z].iter().copied().filter(move |l| self.cuts[z].binary_search(l).is_err())
    }

    /// True when every bus of zone `z` is reachable from every other one
    /// using only lines between buses of the zone.
    pub fn zone_connected(&self, net: &NetworkData, z: usize) -> bool {
        let members = &self.zones[z];
        let Some(&start) = members.first() else {
            return false;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for &n in &net.adjacency.neighbors[b] {
                if self.zone_of[n] == z && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == members.len()
    }
}

/// Builds the zone sets and consensus indexing for a bus → zone assignment.
///
/// Zones are numbered `0..k` where `k = max(assignment) + 1`; every zone must
/// hold at least one bus.
pub fn build_partition(net: &NetworkData, assignment: &[usize]) -> Result<ZonePartition> {
    let n = net.n_buses();
    if assignment.len() != n {
        return Err(Error::Partition(format!("assignment covers {} buses, network has {n}", assignment.len())));
    }
    let n_zones = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut zones = vec![Vec::new(); n_zones];
    for (bus, &z) in assignment.iter().enumerate() {
        zones[z].push(bus);
    }
    if let Some(z) = zones.iter().position(Vec::is_empty) {
        return Err(Error::Partition(format!("zone {z} is empty")));
    }

    let mut line_sets = vec![BTreeSet::new(); n_zones];
    let mut extended = vec![BTreeSet::new(); n_zones];
    for (z, members) in zones.iter().enumerate() {
        for &bus in members {
            extended[z].insert(bus);
            extended[z].extend(net.adjacency.neighbors[bus].iter().copied());
            line_sets[z].extend(net.adjacency.lines_from[bus].iter().copied());
            line_sets[z].extend(net.adjacency.lines_to[bus].iter().copied());
        }
    }

    let mut cuts = vec![Vec::new(); n_zones];
    let mut consensus = Vec::new();
    let mut zone_view = vec![Vec::new(); n_zones];
    for (l, br) in net.branches.iter().enumerate() {
        let (zf, zt) = (assignment[br.from_bus], assignment[br.to_bus]);
        if zf == zt {
            continue;
        }
        let shared = vec![zf.min(zt), zf.max(zt)];
        for &z in &shared {
            cuts[z].push(l);
        }
        for q in Quantity::ALL {
            let idx = consensus.len();
            for &z in &shared {
                zone_view[z].push(idx);
            }
            consensus.push(ConsensusIndex { line: l, quantity: q, zones: shared.clone() });
        }
    }

    let mut dual_offsets = Vec::with_capacity(n_zones);
    let mut acc = 0;
    for view in &zone_view {
        dual_offsets.push(acc);
        acc += view.len();
    }
    let mut consensus_positions = vec![Vec::new(); consensus.len()];
    for (z, view) in zone_view.iter().enumerate() {
        for (j, &i) in view.iter().enumerate() {
            consensus_positions[i].push(dual_offsets[z] + j);
        }
    }

    let part = ZonePartition {
        zone_of: assignment.to_vec(),
        zones,
        line_sets: line_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        extended_nodes: extended.into_iter().map(|s| s.into_iter().collect()).collect(),
        cuts,
        consensus,
        zone_view,
        dual_offsets,
        consensus_positions,
    };
    for z in 0..n_zones {
        if !part.zone_connected(net, z) {
            log::warn!("zone {z} is not connected internally");
        }
    }
    Ok(part)
}

/// Converts explicit zone bus lists (case-file bus numbers) into an assignment.
pub fn assignment_from_lists(net: &NetworkData, lists: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut assignment = vec![usize::MAX; net.n_buses()];
    for (z, list) in lists.iter().enumerate() {
        for &id in list {
            let b = net.bus_index(id).ok_or_else(|| Error::Partition(format!("zone {z} lists unknown bus {id}")))?;
            if assignment[b] != usize::MAX {
                return Err(Error::Partition(format!("bus {id} listed in two zones")));
            }
            assignment[b] = z;
        }
    }
    if let Some(b) = assignment.iter().position(|&z| z == usize::MAX) {
        return Err(Error::Partition(format!("bus {} not assigned to any zone", net.buses[b].id)));
    }
    Ok(assignment)
}

/// Grows `k` contiguous zones of near-equal size from seeds spread across
/// the graph, then evens out the sizes along zone borders.
pub fn greedy_partition(net: &NetworkData, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = net.n_buses();
    if k == 0 || k > n {
        return Err(Error::Partition(format!("zone count {k} outside 1..={n}")));
    }
    let neighbors = &net.adjacency.neighbors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // first seed random, the rest farthest-first by hop distance
    let mut seeds = vec![rng.gen_range(0..n)];
    let mut dist = bfs_distances(neighbors, seeds[0]);
    while seeds.len() < k {
        let next = (0..n)
            .filter(|b| !seeds.contains(b))
            .max_by_key(|&b| (dist[b], std::cmp::Reverse(b)))
            .expect("k <= n leaves a candidate");
        seeds.push(next);
        let d = bfs_distances(neighbors, next);
        for (cur, new) in dist.iter_mut().zip(d) {
            *cur = (*cur).min(new);
        }
    }

    let seed_dist: Vec<Vec<usize>> = seeds.iter().map(|&s| bfs_distances(neighbors, s)).collect();
    let mut assignment = vec![usize::MAX; n];
    let mut size = vec![1usize; k];
    for (z, &s) in seeds.iter().enumerate() {
        assignment[s] = z;
    }
    let mut remaining = n - k;
    while remaining > 0 {
        // the smallest zone that can still grow takes the unassigned
        // neighbour closest to its seed
        let pick = (0..k)
            .filter_map(|z| {
                (0..n)
                    .filter(|&b| assignment[b] == usize::MAX && neighbors[b].iter().any(|&nb| assignment[nb] == z))
                    .min_by_key(|&b| (seed_dist[z][b], b))
                    .map(|b| (size[z], z, b))
            })
            .min();
        let (z, b) = match pick {
            Some((_, z, b)) => (z, b),
            None => {
                // disconnected remainder
                let b = (0..n).find(|&b| assignment[b] == usize::MAX).expect("remaining > 0");
                ((0..k).min_by_key(|&z| (size[z], z)).unwrap(), b)
            }
        };
        assignment[b] = z;
        size[z] += 1;
        remaining -= 1;
    }
    rebalance(neighbors, &mut assignment, &mut size);
    Ok(assignment)
}

/// Moves border buses from the largest zone to a smaller neighbouring zone
/// while that narrows the size spread and keeps the donor connected.
fn rebalance(neighbors: &[BTreeSet<usize>], assignment: &mut [usize], size: &mut [usize]) {
    let n = assignment.len();
    for _ in 0..4 * n {
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for b in 0..n {
            let from = assignment[b];
            if size[from] <= 1 {
                continue;
            }
            for &nb in &neighbors[b] {
                let to = assignment[nb];
                if to == from || size[from] < size[to] + 2 {
                    continue;
                }
                let cand = (size[from] - size[to], b, from, to);
                if best.is_none_or(|cur| (cand.0, std::cmp::Reverse(cand.1)) > (cur.0, std::cmp::Reverse(cur.1)))
                    && stays_connected(neighbors, assignment, from, b)
                {
                    best = Some(cand);
                }
            }
        }
        let Some((_, b, from, to)) = best else {
            return;
        };
        assignment[b] = to;
        size[from] -= 1;
        size[to] += 1;
    }
}

/// Whether zone `z` remains connected after removing bus `removed`.
fn stays_connected(neighbors: &[BTreeSet<usize>], assignment: &[usize], z: usize, removed: usize) -> bool {
    let members: Vec<usize> = (0..assignment.len()).filter(|&b| assignment[b] == z && b != removed).collect();
    let Some(&start) = members.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(b) = queue.pop_front() {
        for &nb in &neighbors[b] {
            if nb != removed && assignment[nb] == z && seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    seen.len() == members.len()
}

fn bfs_distances(neighbors: &[BTreeSet<usize>], start: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; neighbors.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(b) = queue.pop_front() {
        for &nb in &neighbors[b] {
            if dist[nb] == usize::MAX {
                dist[nb] = dist[b] + 1;
                queue.push_back(nb);
            }
        }
    }
    dist
}

/// Orthogonal projection onto the subspace where, for every consensus index,
/// the multipliers of the sharing zones sum to zero.
pub fn project_onto_lambda_space(lam: &DualVector, part: &ZonePartition) -> DualVector {
    let mut out = lam.clone();
    project_in_place(&mut out.0, part);
    out
}

pub(crate) fn project_in_place(values: &mut [f64], part: &ZonePartition) {
    for positions in &part.consensus_positions {
        if positions.is_empty() {
            continue;
        }
        let mean = positions.iter().map(|&p| values[p]).sum::<f64>() / positions.len() as f64;
        for &p in positions {
            values[p] -= mean;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_matpower;

    pub(crate) const TWO_BUS: &str = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;\n2 1 50 10 0 0 1 1 0 100 1 1.1 0.9;\n];\nmpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n];\nmpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1 -360 360;\n];\n";

    #[test]
    fn single_zone_has_no_consensus() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 0]).unwrap();
        assert!(part.consensus.is_empty());
        assert!(part.cuts.iter().all(Vec::is_empty));
        assert_eq!(part.dual_len(), 0);
    }

    #[test]
    fn two_bus_split_has_eight_indices() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 1]).unwrap();
        assert_eq!(part.consensus.len(), 8);
        assert!(part.consensus.iter().all(|c| c.zones.len() == 2));
        assert_eq!(part.dual_len(), 16);
        assert_eq!(part.extended_nodes[0], vec![0, 1]);
        assert_eq!(part.line_sets[1], vec![0]);
    }

    #[test]
    fn empty_zone_rejected() {
        let net = parse_matpower(TWO_BUS).unwrap();
        assert!(matches!(build_partition(&net, &[0, 2]), Err(Error::Partition(_))));
    }

    #[test]
    fn mean_subtraction_example() {
        let net = parse_matpower(TWO_BUS).unwrap();
        let part = build_partition(&net, &[0, 1]).unwrap();
        let mut lam = DualVector::zeros(&part);
        let pos = &part.consensus_positions[0];
        lam.0[pos[0]] = 3.0;
        lam.0[pos[1]] = 1.0;
        let p = project_onto_lambda_space(&lam, &part);
        assert_eq!((p.0[pos[0]], p.0[pos[1]]), (1.0, -1.0));
    }

    #[test]
    fn greedy_k_too_large() {
        let net = parse_matpower(TWO_BUS).unwrap();
        assert!(greedy_partition(&net, 3, 0).is_err());
        assert!(greedy_partition(&net, 0, 0).is_err());
    }

    #[test]
    fn explicit_lists() {
        let net = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(assignment_from_lists(&net, &[vec![2], vec![1]]).unwrap(), vec![1, 0]);
        assert!(assignment_from_lists(&net, &[vec![1]]).is_err());
        assert!(assignment_from_lists(&net, &[vec![1, 2], vec![2]]).is_err());
    }
}
