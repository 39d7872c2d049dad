//! Flow datasets: tensor storage, spatial metadata, normalization, temporal
//! splits, sliding windows, and the on-disk directory format.
//!
//! A dataset on disk is a directory containing:
//! - `meta.json` — name, kind, shape, grid/graph metadata, statistics, and
//!   the min-max normalizer once computed;
//! - `values.f32` — little-endian 32-bit floats, row-major `[T][N][C]`;
//! - `edges.jsonl` — for graphs, one JSON array `[i, j]` per line.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Grid,
    Graph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphTopology {
    pub num_nodes: usize,
    /// Undirected edges (i, j), i != j, no duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl GraphTopology {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let topo = GraphTopology { num_nodes, edges };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j) in &self.edges {
            if i == j {
                return Err(Error::Dataset(format!("self-loop at node {i}")));
            }
            if i >= self.num_nodes || j >= self.num_nodes {
                return Err(Error::Dataset(format!(
                    "edge ({i}, {j}) out of range for {} nodes",
                    self.num_nodes
                )));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::Dataset(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(())
    }

    /// Neighbor lists in ascending node order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_nodes];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.num_nodes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub interval: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Min-max normalizer, present once computed (train-split statistics).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
}

/// Affine map to [0, 1]: normalize(x) = (x - lo) / (hi - lo).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: f64,
    pub hi: f64,
}

impl Normalizer {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::DegenerateRange { min: lo, max: hi });
        }
        Ok(Normalizer { lo, hi })
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        self.lo + x * (self.hi - self.lo)
    }

    pub fn scale(&self) -> f64 {
        self.hi - self.lo
    }
}

/// History/horizon lengths of a prediction task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub history_len: usize,
    pub horizon_len: usize,
}

impl TaskSpec {
    pub fn new(history_len: usize, horizon_len: usize) -> Self {
        TaskSpec {
            history_len,
            horizon_len,
        }
    }

    pub fn window_len(&self) -> usize {
        self.history_len + self.horizon_len
    }
}

/// A T x N x C flow tensor plus spatial metadata.
#[derive(Clone, Debug)]
pub struct FlowDataset {
    pub name: String,
    pub kind: Kind,
    pub t_len: usize,
    pub num_locations: usize,
    pub channels: usize,
    /// Row-major [T][N][C].
    pub values: Vec<f32>,
    pub grid_spec: Option<GridSpec>,
    pub topology: Option<GraphTopology>,
    pub meta: DatasetMeta,
}

impl FlowDataset {
    pub fn validate(&self) -> Result<()> {
        if self.t_len < 1 || self.num_locations < 1 || self.channels < 1 {
            return Err(Error::Dataset("T, N, C must all be >= 1".into()));
        }
        if self.values.len() != self.t_len * self.num_locations * self.channels {
            return Err(Error::Shape(format!(
                "values length {} does not match T*N*C = {}",
                self.values.len(),
                self.t_len * self.num_locations * self.channels
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite value in dataset".into()));
        }
        match self.kind {
            Kind::Grid => {
                let g = self
                    .grid_spec
                    .ok_or_else(|| Error::Dataset("grid dataset missing grid_spec".into()))?;
                if g.height * g.width != self.num_locations {
                    return Err(Error::Dataset(format!(
                        "grid {}x{} does not cover N = {}",
                        g.height, g.width, self.num_locations
                    )));
                }
            }
            Kind::Graph => {
                let t = self
                    .topology
                    .as_ref()
                    .ok_or_else(|| Error::Dataset("graph dataset missing topology".into()))?;
                if t.num_nodes != self.num_locations {
                    return Err(Error::Dataset(format!(
                        "topology has {} nodes but N = {}",
                        t.num_nodes, self.num_locations
                    )));
                }
                t.validate()?;
            }
        }
        if !self.meta.mean.is_finite() || !self.meta.std.is_finite() {
            return Err(Error::Dataset("non-finite meta statistics".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, t: usize, n: usize, c: usize) -> f32 {
        self.values[(t * self.num_locations + n) * self.channels + c]
    }

    /// Recompute mean/std/min/max over all values.
    pub fn compute_stats(values: &[f32]) -> (f64, f64, f64, f64) {
        let n = values.len() as f64;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in values {
            let v = v as f64;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        let mean = sum / n;
        let var = values
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var.sqrt(), min, max)
    }
}

// --- on-disk format ------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MetaDocument {
    name: String,
    kind: Kind,
    t_len: usize,
    num_locations: usize,
    channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_nodes: Option<usize>,
    interval: String,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalizer: Option<Normalizer>,
}

pub fn save_dataset(ds: &FlowDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let doc = MetaDocument {
        name: ds.name.clone(),
        kind: ds.kind,
        t_len: ds.t_len,
        num_locations: ds.num_locations,
        channels: ds.channels,
        grid: ds.grid_spec,
        num_nodes: ds.topology.as_ref().map(|t| t.num_nodes),
        interval: ds.meta.interval.clone(),
        mean: ds.meta.mean,
        std: ds.meta.std,
        min: ds.meta.min,
        max: ds.meta.max,
        normalizer: ds.meta.normalizer,
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&doc)?;
    fs::write(&meta_path, json).map_err(|e| Error::io(meta_path.display().to_string(), e))?;

    let values_path = dir.join("values.f32");
    let file =
        fs::File::create(&values_path).map_err(|e| Error::io(values_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for &v in &ds.values {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(values_path.display().to_string(), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(values_path.display().to_string(), e))?;

    if let Some(topo) = &ds.topology {
        let edges_path = dir.join("edges.jsonl");
        let file = fs::File::create(&edges_path)
            .map_err(|e| Error::io(edges_path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        for &(i, j) in &topo.edges {
            writeln!(w, "[{i},{j}]").map_err(|e| Error::io(edges_path.display().to_string(), e))?;
        }
        w.flush()
            .map_err(|e| Error::io(edges_path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<FlowDataset> {
    let meta_path = dir.join("meta.json");
    let meta_bytes =
        fs::read(&meta_path).map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    let doc: MetaDocument = serde_json::from_slice(&meta_bytes)?;

    let values_path = dir.join("values.f32");
    let file =
        fs::File::open(&values_path).map_err(|e| Error::io(values_path.display().to_string(), e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(values_path.display().to_string(), e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Dataset(format!(
            "values.f32 has {} bytes, not a multiple of 4",
            bytes.len()
        )));
    }
    let expected = doc.t_len * doc.num_locations * doc.channels;
    if bytes.len() / 4 != expected {
        return Err(Error::Shape(format!(
            "values.f32 holds {} floats but meta says T*N*C = {expected}",
            bytes.len() / 4
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let topology = match doc.kind {
        Kind::Graph => {
            let num_nodes = doc.num_nodes.ok_or_else(|| {
                Error::Dataset("graph meta is missing num_nodes".into())
            })?;
            let edges_path = dir.join("edges.jsonl");
            let file = fs::File::open(&edges_path)
                .map_err(|e| Error::io(edges_path.display().to_string(), e))?;
            let mut edges = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(edges_path.display().to_string(), e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let pair: (usize, usize) = serde_json::from_str(&line)?;
                edges.push(pair);
            }
            Some(GraphTopology { num_nodes, edges })
        }
        Kind::Grid => None,
    };

    let ds = FlowDataset {
        name: doc.name,
        kind: doc.kind,
        t_len: doc.t_len,
        num_locations: doc.num_locations,
        channels: doc.channels,
        values,
        grid_spec: doc.grid,
        topology,
        meta: DatasetMeta {
            interval: doc.interval,
            mean: doc.mean,
            std: doc.std,
            min: doc.min,
            max: doc.max,
            normalizer: doc.normalizer,
        },
    };
    ds.validate()?;
    Ok(ds)
}

// --- normalization, splits, windows --------------------------------------

/// Min-max normalization to [0, 1]. Statistics come from the train split
/// (so evaluation never leaks future information into the scale); datasets
/// too short to split use the whole series. Values outside the train range
/// map outside [0, 1] by the same affine rule.
pub fn normalize(ds: &FlowDataset) -> Result<(FlowDataset, Normalizer)> {
    let stat_rows = if ds.t_len >= 5 {
        split_622(ds.t_len)?.0
    } else {
        0..ds.t_len
    };
    let row = ds.num_locations * ds.channels;
    let slice = &ds.values[stat_rows.start * row..stat_rows.end * row];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in slice {
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    let norm = Normalizer::new(lo, hi)?;
    let mut out = ds.clone();
    for v in &mut out.values {
        *v = norm.normalize(*v as f64) as f32;
    }
    out.meta.normalizer = Some(norm);
    Ok((out, norm))
}

/// 6:2:2 contiguous split over [0, T): train, validation, test.
pub fn split_622(t_len: usize) -> Result<(Range<usize>, Range<usize>, Range<usize>)> {
    let train_len = (t_len as f64 * 0.6).floor() as usize;
    let val_len = (t_len as f64 * 0.2).floor() as usize;
    let test_len = t_len - train_len - val_len;
    if train_len == 0 || val_len == 0 || test_len == 0 {
        return Err(Error::Dataset(format!(
            "T = {t_len} is too small for a 6:2:2 split"
        )));
    }
    Ok((
        0..train_len,
        train_len..train_len + val_len,
        train_len + val_len..t_len,
    ))
}

/// Start indices of stride-1 sliding windows of `task.window_len()` steps
/// that fit entirely inside `range`.
pub fn window_starts(range: &Range<usize>, task: &TaskSpec) -> Result<Vec<usize>> {
    let len = range.end - range.start;
    let w = task.window_len();
    if len < w {
        return Err(Error::Dataset(format!(
            "range of length {len} cannot hold a window of {w} steps"
        )));
    }
    Ok((range.start..=range.end - w).collect())
}

/// Copies the window starting at `start` for one channel: `window_len x N`.
pub fn window_channel(ds: &FlowDataset, start: usize, window_len: usize, channel: usize) -> Vec<f32> {
    let n = ds.num_locations;
    let mut out = Vec::with_capacity(window_len * n);
    for t in start..start + window_len {
        for loc in 0..n {
            out.push(ds.at(t, loc, channel));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_meta() -> DatasetMeta {
        DatasetMeta {
            interval: "1h".into(),
            mean: 0.0,
            std: 1.0,
            min: 0.0,
            max: 1.0,
            normalizer: None,
        }
    }

    fn grid_dataset(t: usize, h: usize, w: usize, values: Vec<f32>) -> FlowDataset {
        let (mean, std, min, max) = FlowDataset::compute_stats(&values);
        FlowDataset {
            name: "test".into(),
            kind: Kind::Grid,
            t_len: t,
            num_locations: h * w,
            channels: 1,
            values,
            grid_spec: Some(GridSpec {
                height: h,
                width: w,
            }),
            topology: None,
            meta: DatasetMeta {
                mean,
                std,
                min,
                max,
                ..tiny_meta()
            },
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = (0..4 * 2).map(|i| i as f32 * 0.37 + 0.001).collect();
        let ds = FlowDataset {
            name: "rt".into(),
            kind: Kind::Graph,
            t_len: 4,
            num_locations: 2,
            channels: 1,
            values: values.clone(),
            grid_spec: None,
            topology: Some(GraphTopology::new(2, vec![(0, 1)]).unwrap()),
            meta: tiny_meta(),
        };
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.values, values);
        assert_eq!(back.topology.unwrap().edges, vec![(0, 1)]);
        assert_eq!(back.t_len, 4);
        assert_eq!(back.num_locations, 2);
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ds = grid_dataset(4, 1, 2, vec![0.0; 8]);
        save_dataset(&ds, dir.path()).unwrap();
        // truncate the blob so meta and blob disagree
        let p = dir.path().join("values.f32");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Shape(_))));
    }

    #[test]
    fn grid_invariant_height_width_must_cover_n() {
        // 32x32 covering N=1024 loads
        let ok = grid_dataset(1, 32, 32, vec![0.5; 1024]);
        assert!(ok.validate().is_ok());
        // 32x32 with N=1000 fails
        let mut bad = grid_dataset(1, 32, 32, vec![0.5; 1024]);
        bad.num_locations = 1000;
        bad.values.truncate(1000);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut ds = grid_dataset(2, 1, 2, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(ds.validate().is_ok());
        ds.values[2] = f32::NAN;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn topology_rejects_self_loops_and_duplicates() {
        assert!(GraphTopology::new(3, vec![(0, 0)]).is_err());
        assert!(GraphTopology::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(GraphTopology::new(3, vec![(0, 5)]).is_err());
        assert!(GraphTopology::new(3, vec![(0, 1), (1, 2)]).is_ok());
    }

    #[test]
    fn normalize_maps_extremes_to_unit_interval() {
        // whole-series stats for short data: {0, 5, 10} -> {0, 0.5, 1}
        let ds = grid_dataset(3, 1, 1, vec![0.0, 5.0, 10.0]);
        let (out, norm) = normalize(&ds).unwrap();
        assert_eq!(norm.lo, 0.0);
        assert_eq!(norm.hi, 10.0);
        assert_eq!(out.values, vec![0.0, 0.5, 1.0]);

        let ds2 = grid_dataset(2, 1, 1, vec![-2.0, 2.0]);
        let (out2, _) = normalize(&ds2).unwrap();
        assert_eq!(out2.values, vec![0.0, 1.0]);
    }

    #[test]
    fn normalize_rejects_constant_dataset() {
        let ds = grid_dataset(3, 1, 1, vec![4.0, 4.0, 4.0]);
        assert!(matches!(
            normalize(&ds),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn normalize_roundtrip_within_1e6() {
        let mut rng = crate::rng::Stream::new(77);
        let values: Vec<f32> = (0..100).map(|_| rng.uniform(-3.0, 40.0) as f32).collect();
        let ds = grid_dataset(100, 1, 1, values.clone());
        let (out, norm) = normalize(&ds).unwrap();
        for (orig, normed) in values.iter().zip(&out.values) {
            let back = norm.denormalize(*normed as f64);
            let rel = (back - *orig as f64).abs() / orig.abs().max(1.0) as f64;
            assert!(rel < 1e-6, "orig={orig} back={back}");
        }
    }

    #[test]
    fn split_622_examples() {
        let (tr, va, te) = split_622(100).unwrap();
        assert_eq!((tr, va, te), (0..60, 60..80, 80..100));
        let (tr, va, te) = split_622(10).unwrap();
        assert_eq!((tr, va, te), (0..6, 6..8, 8..10));
        assert!(split_622(4).is_err());
    }

    #[test]
    fn split_partitions_time_axis() {
        let mut rng = crate::rng::Stream::new(1);
        for _ in 0..50 {
            let t = 5 + rng.below(300);
            let (tr, va, te) = split_622(t).unwrap();
            assert_eq!(tr.start, 0);
            assert_eq!(tr.end, va.start);
            assert_eq!(va.end, te.start);
            assert_eq!(te.end, t);
            assert_eq!(tr.len(), (t as f64 * 0.6).floor() as usize);
            assert_eq!(va.len(), (t as f64 * 0.2).floor() as usize);
        }
    }

    #[test]
    fn window_count_examples() {
        let task = TaskSpec::new(12, 12);
        assert_eq!(window_starts(&(0..24), &task).unwrap().len(), 1);
        assert_eq!(window_starts(&(0..25), &task).unwrap().len(), 2);
        assert!(window_starts(&(0..23), &task).is_err());
    }

    #[test]
    fn window_count_formula_holds_for_random_sizes() {
        let mut rng = crate::rng::Stream::new(13);
        for _ in 0..200 {
            let h = 1 + rng.below(10);
            let p = 1 + rng.below(10);
            let len = h + p + rng.below(30);
            let task = TaskSpec::new(h, p);
            let starts = window_starts(&(5..5 + len), &task).unwrap();
            assert_eq!(starts.len(), len - (h + p) + 1);
            // windows stay inside the range
            assert_eq!(*starts.first().unwrap(), 5);
            assert_eq!(*starts.last().unwrap() + h + p, 5 + len);
        }
    }
}
