use std::collections::BTreeMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

/// All-pairs shortest-path distances (km) over the network lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    buses: Vec<u32>,
    km: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn buses(&self) -> &[u32] {
        &self.buses
    }

    fn index(&self, bus: u32) -> Option<usize> {
        self.buses.binary_search(&bus).ok()
    }

    /// Distance between two buses, `None` when either is unknown.
    pub fn get(&self, a: u32, b: u32) -> Option<f64> {
        Some(self.km[self.index(a)?][self.index(b)?])
    }

    /// Like [`get`](Self::get) for buses already validated against the
    /// network.
    pub fn km(&self, a: u32, b: u32) -> f64 {
        self.get(a, b)
            .unwrap_or_else(|| panic!("bus {a} or {b} missing from distance matrix"))
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.km
    }
}

/// Runs Dijkstra from every bus. Fails with `Disconnected` naming the first
/// bus (in sorted order) that the lowest bus cannot reach.
pub fn distance_matrix(network: &Network) -> Result<DistanceMatrix> {
    let mut buses = network.buses.clone();
    buses.sort_unstable();
    buses.dedup();

    let mut graph = UnGraph::<u32, f64>::with_capacity(buses.len(), network.lines.len());
    let idx: BTreeMap<u32, NodeIndex> = buses.iter().map(|&b| (b, graph.add_node(b))).collect();
    for line in &network.lines {
        let (Some(&a), Some(&b)) = (idx.get(&line.from), idx.get(&line.to)) else {
            return Err(Error::Domain(format!(
                "line {}-{} references an unknown bus",
                line.from, line.to
            )));
        };
        graph.add_edge(a, b, line.length_km);
    }

    let mut km = Vec::with_capacity(buses.len());
    for &from in &buses {
        let reach = dijkstra(&graph, idx[&from], None, |e| *e.weight());
        let row = buses
            .iter()
            .map(|to| {
                reach.get(&idx[to]).copied().ok_or(Error::Disconnected {
                    from,
                    unreachable: *to,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        km.push(row);
    }
    Ok(DistanceMatrix { buses, km })
}
