#![allow(dead_code)]

use std::path::PathBuf;

use dpps_core::network::NetworkData;
use dpps_core::partition::{assignment_from_lists, build_partition, ZonePartition};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn case14() -> NetworkData {
    NetworkData::from_file(data_path("case14.m")).expect("case14 parses")
}

pub fn case118() -> NetworkData {
    NetworkData::from_file(data_path("case118.m")).expect("case118 parses")
}

/// Three-zone split of case 14 used throughout the experiments.
pub fn case14_zones() -> Vec<Vec<usize>> {
    vec![(1..=5).collect(), (7..=10).collect(), vec![6, 11, 12, 13, 14]]
}

pub fn case118_zones() -> Vec<Vec<usize>> {
    let mut z1: Vec<usize> = (1..=33).collect();
    z1.extend([113, 114, 115, 117]);
    let mut z2: Vec<usize> = (34..=75).collect();
    z2.extend([116, 118]);
    vec![z1, z2, (76..=112).collect()]
}

pub fn case14_partition(net: &NetworkData) -> ZonePartition {
    let a = assignment_from_lists(net, &case14_zones()).unwrap();
    build_partition(net, &a).unwrap()
}

/// Two buses joined by a lossless line; one generator at bus 1, load at bus 2.
pub const TWO_BUS: &str = "mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
2 1 40 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [
1 0 0 100 -100 1 100 1 300 0;
];
mpc.branch = [
1 2 0 0.05 0 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
2 0 0 3 0.01 20 0;
];
";
