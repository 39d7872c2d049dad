//! Boundary Kernighan-Lin refinement and balance repair for bisections.
//!
//! A pass tentatively moves each node at most once, always taking the best
//! admissible gain (ties broken by lowest node index), then rolls back to
//! the best prefix that satisfies the balance constraint. A pass is kept
//! only if it strictly reduces the cut, so refinement is monotone.

use super::graph::CsrGraph;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

fn gains(g: &CsrGraph, side: &[u8]) -> Vec<i64> {
    let mut gain = vec![0i64; g.n];
    for v in 0..g.n {
        for (u, w) in g.neighbors(v) {
            if side[u] != side[v] {
                gain[v] += w;
            } else {
                gain[v] -= w;
            }
        }
    }
    gain
}

/// Moves nodes from the oversized side until |w0 - target0| <= slack.
/// Unit-weight graphs always reach the target exactly.
pub fn balance_repair(g: &CsrGraph, side: &mut [u8], target0: i64, slack: i64) {
    let mut w0: i64 = (0..g.n).filter(|&v| side[v] == 0).map(|v| g.vwgt[v]).sum();
    let mut gain = gains(g, side);
    let mut moved = vec![false; g.n];
    while (w0 - target0).abs() > slack {
        let from: u8 = if w0 > target0 { 0 } else { 1 };
        let imbalance = (w0 - target0).abs();
        // best-gain node whose move does not overshoot the imbalance
        let mut best: Option<(i64, usize)> = None;
        let mut fallback: Option<(i64, i64, usize)> = None; // (new_imb, gain, v)
        for v in 0..g.n {
            if side[v] != from || moved[v] {
                continue;
            }
            let new_w0 = if from == 0 { w0 - g.vwgt[v] } else { w0 + g.vwgt[v] };
            let new_imb = (new_w0 - target0).abs();
            if new_imb < imbalance {
                let better = match best {
                    None => true,
                    Some((bg, bv)) => gain[v] > bg || (gain[v] == bg && v < bv),
                };
                if better {
                    best = Some((gain[v], v));
                }
            } else {
                let better = match fallback {
                    None => true,
                    Some((fi, fg, fv)) => {
                        new_imb < fi
                            || (new_imb == fi && (gain[v] > fg || (gain[v] == fg && v < fv)))
                    }
                };
                if better {
                    fallback = Some((new_imb, gain[v], v));
                }
            }
        }
        let v = match (best, fallback) {
            (Some((_, v)), _) => v,
            (None, Some((new_imb, _, v))) if new_imb < imbalance => v,
            _ => break, // no move can improve balance
        };
        apply_move(g, side, &mut gain, v);
        w0 += if from == 0 { -g.vwgt[v] } else { g.vwgt[v] };
        moved[v] = true;
    }
}

fn apply_move(g: &CsrGraph, side: &mut [u8], gain: &mut [i64], v: usize) {
    let old = side[v];
    side[v] = 1 - old;
    gain[v] = -gain[v];
    for (u, w) in g.neighbors(v) {
        if u == v {
            continue;
        }
        if side[u] == old {
            gain[u] += 2 * w;
        } else {
            gain[u] -= 2 * w;
        }
    }
}

/// One KL pass. Returns the cut improvement (0 when rolled back entirely).
pub fn kl_pass(g: &CsrGraph, side: &mut [u8], target0: i64, slack: i64) -> i64 {
    let mut w0: i64 = (0..g.n).filter(|&v| side[v] == 0).map(|v| g.vwgt[v]).sum();
    let mut gain = gains(g, side);
    let max_vwgt = g.vwgt.iter().copied().max().unwrap_or(1);

    // (gain, Reverse(node)): max-heap pops highest gain, then lowest index
    let mut heaps: [BinaryHeap<(i64, Reverse<usize>)>; 2] =
        [BinaryHeap::new(), BinaryHeap::new()];
    for v in 0..g.n {
        heaps[side[v] as usize].push((gain[v], Reverse(v)));
    }

    let mut locked = vec![false; g.n];
    let mut sequence: Vec<usize> = Vec::new();
    let mut cumulative = 0i64;
    let mut best_gain = 0i64;
    let mut best_len = 0usize;

    loop {
        // admissible move keeps the running imbalance within slack + one node
        let mut choice: Option<(i64, usize)> = None;
        for from in 0..2usize {
            // lazily discard stale or locked entries
            while let Some(&(gv, Reverse(v))) = heaps[from].peek() {
                if locked[v] || side[v] as usize != from || gv != gain[v] {
                    heaps[from].pop();
                } else {
                    break;
                }
            }
            if let Some(&(gv, Reverse(v))) = heaps[from].peek() {
                let new_w0 = if from == 0 { w0 - g.vwgt[v] } else { w0 + g.vwgt[v] };
                if (new_w0 - target0).abs() > slack + max_vwgt {
                    continue;
                }
                let better = match choice {
                    None => true,
                    Some((cg, cv)) => gv > cg || (gv == cg && v < cv),
                };
                if better {
                    choice = Some((gv, v));
                }
            }
        }
        let Some((gv, v)) = choice else { break };
        let from = side[v] as usize;
        heaps[from].pop();
        apply_move(g, side, &mut gain, v);
        for (u, _) in g.neighbors(v) {
            if !locked[u] {
                heaps[side[u] as usize].push((gain[u], Reverse(u)));
            }
        }
        heaps[side[v] as usize].push((gain[v], Reverse(v)));
        locked[v] = true;
        w0 += if from == 0 { -g.vwgt[v] } else { g.vwgt[v] };
        cumulative += gv;
        sequence.push(v);
        if cumulative > best_gain && (w0 - target0).abs() <= slack {
            best_gain = cumulative;
            best_len = sequence.len();
        }
    }

    // roll back past the best balanced prefix
    for &v in sequence[best_len..].iter().rev() {
        let old = side[v];
        side[v] = 1 - old;
    }
    best_gain
}

/// Repair balance, then run KL passes until the cut stops improving.
pub fn refine_bisection(g: &CsrGraph, side: &mut [u8], target0: i64, slack: i64) {
    balance_repair(g, side, target0, slack);
    for _ in 0..10 {
        if kl_pass(g, side, target0, slack) <= 0 {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::graph::CsrGraph;

    /// Two 4-cliques joined by a single bridge edge.
    fn bridge_of_cliques() -> CsrGraph {
        let mut edges = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                edges.push((a, b));
                edges.push((a + 4, b + 4));
            }
        }
        edges.push((3, 4));
        CsrGraph::from_edges(8, &edges)
    }

    #[test]
    fn kl_recovers_the_bridge_cut() {
        let g = bridge_of_cliques();
        // start from a deliberately bad balanced split
        let mut side = vec![0u8, 1, 0, 1, 0, 1, 0, 1];
        refine_bisection(&g, &mut side, 4, 0);
        assert_eq!(g.cut2(&side), 1);
        let w0 = side.iter().filter(|&&s| s == 0).count();
        assert_eq!(w0, 4);
    }

    #[test]
    fn kl_passes_never_increase_cut() {
        let mut rng = crate::rng::Stream::new(5);
        for trial in 0..30 {
            let topo = crate::synth::gen_topology(trial, 20, 4.0).unwrap();
            let g = CsrGraph::from_topology(&topo);
            let mut side: Vec<u8> = (0..20).map(|_| (rng.next_u64() & 1) as u8).collect();
            balance_repair(&g, &mut side, 10, 0);
            let mut prev = g.cut2(&side);
            for _ in 0..5 {
                kl_pass(&g, &mut side, 10, 0);
                let now = g.cut2(&side);
                assert!(now <= prev, "trial {trial}: {prev} -> {now}");
                let w0 = side.iter().filter(|&&s| s == 0).count();
                assert_eq!(w0, 10, "balance broken");
                prev = now;
            }
        }
    }

    #[test]
    fn repair_reaches_exact_balance_on_unit_weights() {
        let g = bridge_of_cliques();
        let mut side = vec![0u8; 8];
        balance_repair(&g, &mut side, 4, 0);
        assert_eq!(side.iter().filter(|&&s| s == 0).count(), 4);
    }
}
