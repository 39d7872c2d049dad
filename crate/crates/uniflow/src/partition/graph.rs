//! Compact weighted graph representation used by the multilevel partitioner.

use crate::data::GraphTopology;

/// Undirected graph in CSR form with node and edge weights. Coarse graphs
/// produced by contraction carry the accumulated weights of their fine
/// counterparts.
#[derive(Clone, Debug)]
pub struct CsrGraph {
    pub n: usize,
    pub xadj: Vec<usize>,
    pub adjncy: Vec<usize>,
    pub adjwgt: Vec<i64>,
    pub vwgt: Vec<i64>,
}

impl CsrGraph {
    pub fn from_topology(topo: &GraphTopology) -> Self {
        Self::from_edges(topo.num_nodes, &topo.edges)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut deg = vec![0usize; n];
        for &(i, j) in edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        let mut xadj = vec![0usize; n + 1];
        for v in 0..n {
            xadj[v + 1] = xadj[v] + deg[v];
        }
        let mut cursor = xadj.clone();
        let mut adjncy = vec![0usize; 2 * edges.len()];
        for &(i, j) in edges {
            adjncy[cursor[i]] = j;
            cursor[i] += 1;
            adjncy[cursor[j]] = i;
            cursor[j] += 1;
        }
        // deterministic neighbor order
        for v in 0..n {
            adjncy[xadj[v]..xadj[v + 1]].sort_unstable();
        }
        let adjwgt = vec![1i64; adjncy.len()];
        CsrGraph {
            n,
            xadj,
            adjncy,
            adjwgt,
            vwgt: vec![1; n],
        }
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        (self.xadj[v]..self.xadj[v + 1]).map(move |e| (self.adjncy[e], self.adjwgt[e]))
    }

    pub fn total_vwgt(&self) -> i64 {
        self.vwgt.iter().sum()
    }

    /// Weighted cut of a two-way partition (each undirected edge counted once).
    pub fn cut2(&self, side: &[u8]) -> i64 {
        let mut cut = 0;
        for v in 0..self.n {
            for (u, w) in self.neighbors(v) {
                if u > v && side[u] != side[v] {
                    cut += w;
                }
            }
        }
        cut
    }

    /// Induced subgraph over `nodes` (given in ascending order). Returns the
    /// subgraph and the mapping from subgraph index to original node id.
    pub fn induced(&self, nodes: &[usize]) -> (CsrGraph, Vec<usize>) {
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut xadj = vec![0usize; nodes.len() + 1];
        let mut adjncy = Vec::new();
        let mut adjwgt = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            for (u, w) in self.neighbors(v) {
                if local[u] != usize::MAX {
                    adjncy.push(local[u]);
                    adjwgt.push(w);
                }
            }
            xadj[i + 1] = adjncy.len();
        }
        let vwgt = nodes.iter().map(|&v| self.vwgt[v]).collect();
        (
            CsrGraph {
                n: nodes.len(),
                xadj,
                adjncy,
                adjwgt,
                vwgt,
            },
            nodes.to_vec(),
        )
    }
}
