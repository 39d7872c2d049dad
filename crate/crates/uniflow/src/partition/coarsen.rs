//! Heavy-edge matching coarsening.

use super::graph::CsrGraph;
use crate::rng::Stream;

pub struct CoarseLevel {
    pub graph: CsrGraph,
    /// Fine node index -> coarse node index.
    pub cmap: Vec<usize>,
}

/// One round of heavy-edge matching followed by contraction. Visit order is
/// seeded; among equally heavy candidate edges the lowest node index wins.
pub fn coarsen_once(g: &CsrGraph, rng: &mut Stream) -> CoarseLevel {
    let mut order: Vec<usize> = (0..g.n).collect();
    rng.shuffle(&mut order);

    let mut mate = vec![usize::MAX; g.n];
    for &v in &order {
        if mate[v] != usize::MAX {
            continue;
        }
        let mut best: Option<(i64, usize)> = None;
        for (u, w) in g.neighbors(v) {
            if u == v || mate[u] != usize::MAX {
                continue;
            }
            let better = match best {
                None => true,
                Some((bw, bu)) => w > bw || (w == bw && u < bu),
            };
            if better {
                best = Some((w, u));
            }
        }
        match best {
            Some((_, u)) => {
                mate[v] = u;
                mate[u] = v;
            }
            None => mate[v] = v,
        }
    }

    // assign coarse ids in fine-index order so contraction is deterministic
    let mut cmap = vec![usize::MAX; g.n];
    let mut next = 0usize;
    for v in 0..g.n {
        if cmap[v] != usize::MAX {
            continue;
        }
        cmap[v] = next;
        let m = mate[v];
        if m != v && cmap[m] == usize::MAX {
            cmap[m] = next;
        }
        next += 1;
    }

    let cn = next;
    let mut vwgt = vec![0i64; cn];
    for v in 0..g.n {
        vwgt[cmap[v]] += g.vwgt[v];
    }

    // accumulate edge weights between coarse nodes
    let mut buckets: Vec<std::collections::BTreeMap<usize, i64>> =
        vec![std::collections::BTreeMap::new(); cn];
    for v in 0..g.n {
        let cv = cmap[v];
        for (u, w) in g.neighbors(v) {
            let cu = cmap[u];
            if cu != cv {
                *buckets[cv].entry(cu).or_insert(0) += w;
            }
        }
    }
    let mut xadj = vec![0usize; cn + 1];
    let mut adjncy = Vec::new();
    let mut adjwgt = Vec::new();
    for (cv, bucket) in buckets.iter().enumerate() {
        for (&cu, &w) in bucket {
            adjncy.push(cu);
            adjwgt.push(w);
        }
        xadj[cv + 1] = adjncy.len();
    }

    CoarseLevel {
        graph: CsrGraph {
            n: cn,
            xadj,
            adjncy,
            adjwgt,
            vwgt,
        },
        cmap,
    }
}

/// Coarsen until at most `threshold` nodes remain or progress stalls.
pub fn multilevel_coarsen(g: &CsrGraph, threshold: usize, rng: &mut Stream) -> Vec<CoarseLevel> {
    let mut levels: Vec<CoarseLevel> = Vec::new();
    let mut current = g.clone();
    while current.n > threshold {
        let level = coarsen_once(&current, rng);
        // matching failed to shrink meaningfully (e.g. star graphs)
        if level.graph.n as f64 > current.n as f64 * 0.95 {
            break;
        }
        current = level.graph.clone();
        levels.push(level);
    }
    levels
}
