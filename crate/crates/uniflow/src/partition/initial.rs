//! Initial bisection of the coarsest graph by BFS region growing.

use super::graph::CsrGraph;
use super::refine::refine_bisection;
use crate::rng::Stream;

/// BFS from `start`, claiming nodes for side 0 until its weight reaches
/// `target0`. Disconnected remainders are picked up from the lowest index.
fn grow_from(g: &CsrGraph, start: usize, target0: i64) -> Vec<u8> {
    let mut side = vec![1u8; g.n];
    let mut seen = vec![false; g.n];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    let mut w0 = 0i64;
    let mut next_unseen = 0usize;
    while w0 < target0 {
        let v = match queue.pop_front() {
            Some(v) => v,
            None => {
                while next_unseen < g.n && seen[next_unseen] {
                    next_unseen += 1;
                }
                if next_unseen >= g.n {
                    break;
                }
                seen[next_unseen] = true;
                next_unseen
            }
        };
        side[v] = 0;
        w0 += g.vwgt[v];
        for (u, _) in g.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    side
}

/// Furthest node from `start` by BFS hops (pseudo-peripheral candidate).
fn bfs_far_node(g: &CsrGraph, start: usize) -> usize {
    let mut dist = vec![usize::MAX; g.n];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    let mut far = start;
    while let Some(v) = queue.pop_front() {
        for (u, _) in g.neighbors(v) {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                if dist[u] > dist[far] {
                    far = u;
                }
                queue.push_back(u);
            }
        }
    }
    far
}

/// Bisect by growing from several candidate seeds, refining each, and
/// keeping the lowest cut (first candidate wins ties).
pub fn grow_bisection(g: &CsrGraph, target0: i64, slack: i64, rng: &mut Stream) -> Vec<u8> {
    let mut starts = vec![0usize, bfs_far_node(g, 0)];
    for _ in 0..2 {
        starts.push(rng.below(g.n.max(1)));
    }
    starts.dedup();

    let mut best: Option<(i64, Vec<u8>)> = None;
    for &s in &starts {
        let mut side = grow_from(g, s, target0);
        refine_bisection(g, &mut side, target0, slack);
        let cut = g.cut2(&side);
        if best.as_ref().is_none_or(|(bc, _)| cut < *bc) {
            best = Some((cut, side));
        }
    }
    best.expect("at least one start candidate").1
}
