//! Exhaustive partition oracle for small graphs. Enumerates every balanced
//! assignment directly from the topology; shares no code with the
//! multilevel partitioner so it can serve as an independent reference.

use super::{target_sizes, Partition};
use crate::data::GraphTopology;
use crate::error::{Error, Result};

/// Globally minimal edge cut over all assignments with exact balance.
/// Restricted to at most 12 nodes.
pub fn brute_force_partition(topo: &GraphTopology, k: usize) -> Result<Partition> {
    let n = topo.num_nodes;
    if n > 12 {
        return Err(Error::Partition(format!(
            "brute force limited to 12 nodes, got {n}"
        )));
    }
    if k < 1 || k > n {
        return Err(Error::Partition(format!("k = {k} out of range for {n} nodes")));
    }
    let adj = topo.adjacency();
    let sizes = target_sizes(n, k);

    let mut assignment = vec![usize::MAX; n];
    let mut remaining = sizes.clone();
    let mut best_cut = usize::MAX;
    let mut best_assign = Vec::new();

    fn dfs(
        v: usize,
        n: usize,
        k: usize,
        adj: &[Vec<usize>],
        assignment: &mut [usize],
        remaining: &mut [usize],
        cut_so_far: usize,
        best_cut: &mut usize,
        best_assign: &mut Vec<usize>,
    ) {
        if cut_so_far >= *best_cut {
            return;
        }
        if v == n {
            *best_cut = cut_so_far;
            *best_assign = assignment.to_vec();
            return;
        }
        let mut seen_empty_quota: Vec<usize> = Vec::new();
        for p in 0..k {
            if remaining[p] == 0 {
                continue;
            }
            // identical-quota empty parts are interchangeable; try only the first
            let untouched = remaining[p] == part_quota(p, n, k);
            if untouched {
                if seen_empty_quota.contains(&remaining[p]) {
                    continue;
                }
                seen_empty_quota.push(remaining[p]);
            }
            let extra: usize = adj[v]
                .iter()
                .filter(|&&u| u < v && assignment[u] != p)
                .count();
            assignment[v] = p;
            remaining[p] -= 1;
            dfs(
                v + 1,
                n,
                k,
                adj,
                assignment,
                remaining,
                cut_so_far + extra,
                best_cut,
                best_assign,
            );
            remaining[p] += 1;
            assignment[v] = usize::MAX;
        }
    }

    fn part_quota(p: usize, n: usize, k: usize) -> usize {
        let q = n / k;
        let r = n % k;
        if p < r {
            q + 1
        } else {
            q
        }
    }

    dfs(
        0,
        n,
        k,
        &adj,
        &mut assignment,
        &mut remaining,
        0,
        &mut best_cut,
        &mut best_assign,
    );

    Partition::from_assignment(topo, best_assign, k)
}
