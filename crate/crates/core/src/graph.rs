//! Daily semantic graphs: 96 time nodes, 7 sensor nodes and one source node
//! per logged entity, joined by four typed relations.
//!
//! | from   | relation | to     |
//! |--------|----------|--------|
//! | sensor | contain  | source |
//! | time   | start    | source |
//! | source | end      | time   |
//! | time   | will be  | time   |
//!
//! The adjacency matrix counts how many times each pair was joined; the
//! time chain only links consecutive slots and always has weight 1.

use std::collections::HashMap;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DayBucket, SensorKind};
use crate::sparse::CsrMatrix;

pub const SLOT_MINUTES: u32 = 15;
pub const SLOTS_PER_DAY: usize = 96;
pub const SENSOR_COUNT: usize = 7;
/// Time plus sensor nodes present in every graph.
pub const FIXED_NODES: usize = SLOTS_PER_DAY + SENSOR_COUNT;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Time(u8),
    Sensor(SensorKind),
    Source { entity_key: String, sensor: SensorKind },
}

impl NodeKind {
    pub fn class(&self) -> NodeClass {
        match self {
            NodeKind::Time(_) => NodeClass::Time,
            NodeKind::Sensor(_) => NodeClass::Sensor,
            NodeKind::Source { .. } => NodeClass::Source,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NodeKind::Time(slot) => {
                let minutes = *slot as u32 * SLOT_MINUTES;
                format!("{:02}:{:02}", minutes / 60, minutes % 60)
            }
            NodeKind::Sensor(s) => s.as_str().to_string(),
            NodeKind::Source { entity_key, .. } => entity_key.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Time,
    Sensor,
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeSemantic {
    Contain,
    Start,
    End,
    WillBe,
}

impl EdgeSemantic {
    /// The relation a directed edge between these node classes carries, if legal.
    pub fn between(from: NodeClass, to: NodeClass) -> Option<Self> {
        match (from, to) {
            (NodeClass::Sensor, NodeClass::Source) => Some(EdgeSemantic::Contain),
            (NodeClass::Time, NodeClass::Source) => Some(EdgeSemantic::Start),
            (NodeClass::Source, NodeClass::Time) => Some(EdgeSemantic::End),
            (NodeClass::Time, NodeClass::Time) => Some(EdgeSemantic::WillBe),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeSemantic::Contain => "contain",
            EdgeSemantic::Start => "start",
            EdgeSemantic::End => "end",
            EdgeSemantic::WillBe => "will_be",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "contain" => EdgeSemantic::Contain,
            "start" => EdgeSemantic::Start,
            "end" => EdgeSemantic::End,
            "will_be" => EdgeSemantic::WillBe,
            _ => return None,
        })
    }
}

impl fmt::Display for EdgeSemantic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("n_max {n_max} leaves no room for source nodes (needs > {FIXED_NODES})")]
    NoSourceRoom { n_max: usize },
    #[error("feature width k={k} does not match the feature layout ({expected})")]
    FeatureWidth { k: usize, expected: usize },
    #[error("slot layout must cover one day: {slots} × {minutes} min ≠ 1440")]
    SlotLayout { slots: usize, minutes: u32 },
}

/// Sizes shared by every graph of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSchema {
    pub slot_minutes: u32,
    pub slots_per_day: usize,
    pub n_max: usize,
    pub k: usize,
    pub entity_hash_buckets: usize,
}

impl Default for GraphSchema {
    fn default() -> Self {
        Self::with_n_max(256)
    }
}

impl GraphSchema {
    pub fn with_n_max(n_max: usize) -> Self {
        Self {
            slot_minutes: SLOT_MINUTES,
            slots_per_day: SLOTS_PER_DAY,
            n_max,
            k: feature_width(16),
            entity_hash_buckets: 16,
        }
    }

    pub fn source_cap(&self) -> usize {
        self.n_max.saturating_sub(FIXED_NODES)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.slot_minutes as usize * self.slots_per_day != 1440
            || self.slots_per_day != SLOTS_PER_DAY
        {
            return Err(SchemaError::SlotLayout {
                slots: self.slots_per_day,
                minutes: self.slot_minutes,
            });
        }
        if self.source_cap() < 1 {
            return Err(SchemaError::NoSourceRoom { n_max: self.n_max });
        }
        let expected = feature_width(self.entity_hash_buckets);
        if self.k != expected {
            return Err(SchemaError::FeatureWidth { k: self.k, expected });
        }
        Ok(())
    }
}

/// Feature layout: kind one-hot (3), sensor one-hot (7), time fraction (1),
/// entity hash one-hot (`buckets`), log degree (1).
pub const fn feature_width(buckets: usize) -> usize {
    3 + SENSOR_COUNT + 1 + buckets + 1
}

/// One user-day as a typed graph plus its feature and count matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub user_id: String,
    pub date: NaiveDate,
    pub nodes: Vec<NodeKind>,
    /// `n × k` node features.
    pub features: Array2<f64>,
    /// `n × n` directed join counts.
    pub adjacency: Array2<u32>,
    pub n_max: usize,
    pub dropped_sources: usize,
}

impl SemanticGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `true` for real node slots, `false` for padding up to `n_max`.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.n_max).map(|i| i < self.nodes.len()).collect()
    }

    /// Non-zero entries as `(from, to, semantic, weight)` in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, EdgeSemantic, u32)> {
        let mut out = Vec::new();
        for ((i, j), &w) in self.adjacency.indexed_iter() {
            if w > 0 {
                let sem = EdgeSemantic::between(self.nodes[i].class(), self.nodes[j].class())
                    .expect("builder only creates legal edges");
                out.push((i, j, sem, w));
            }
        }
        out
    }

    pub fn sensor_node(sensor: SensorKind) -> usize {
        SLOTS_PER_DAY + sensor.index()
    }
}

/// 15-minute slot of `t` within `date`; the end-of-day instant maps to the last slot.
pub fn slot_of(t: NaiveDateTime, date: NaiveDate) -> usize {
    let minutes = (t - date.and_time(NaiveTime::MIN)).num_minutes().max(0) as usize;
    (minutes / SLOT_MINUTES as usize).min(SLOTS_PER_DAY - 1)
}

/// 64-bit FNV-1a, used to bucket entity keys stably across runs and platforms.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Builds the day graph. Events must already be sorted by start so that
/// source order (first occurrence) is canonical.
pub fn build_day_graph(bucket: &DayBucket, schema: &GraphSchema) -> SemanticGraph {
    let cap = schema.source_cap();

    // Distinct sources by first occurrence, with total event counts.
    let mut order: Vec<(String, SensorKind)> = Vec::new();
    let mut counts: HashMap<(String, SensorKind), usize> = HashMap::new();
    for e in &bucket.events {
        let key = (e.entity_key.clone(), e.sensor);
        let c = counts.entry(key.clone()).or_insert(0);
        if *c == 0 {
            order.push(key);
        }
        *c += 1;
    }
    let mut dropped_sources = 0;
    if order.len() > cap {
        let mut ranked: Vec<(usize, usize)> = order
            .iter()
            .enumerate()
            .map(|(pos, key)| (pos, counts[key]))
            .collect();
        // Highest count first; earlier first occurrence wins ties.
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut keep: Vec<usize> = ranked[..cap].iter().map(|r| r.0).collect();
        keep.sort_unstable();
        dropped_sources = order.len() - cap;
        order = keep.into_iter().map(|p| order[p].clone()).collect();
    }

    let mut nodes: Vec<NodeKind> = (0..SLOTS_PER_DAY as u8).map(NodeKind::Time).collect();
    nodes.extend(SensorKind::ALL.iter().map(|&s| NodeKind::Sensor(s)));
    let mut source_index: HashMap<(String, SensorKind), usize> = HashMap::new();
    for (entity_key, sensor) in order {
        source_index.insert((entity_key.clone(), sensor), nodes.len());
        nodes.push(NodeKind::Source { entity_key, sensor });
    }

    let n = nodes.len();
    let mut adjacency = Array2::<u32>::zeros((n, n));
    for slot in 0..SLOTS_PER_DAY - 1 {
        adjacency[[slot, slot + 1]] = 1;
    }
    for e in &bucket.events {
        let Some(&src) = source_index.get(&(e.entity_key.clone(), e.sensor)) else {
            continue;
        };
        adjacency[[SemanticGraph::sensor_node(e.sensor), src]] += 1;
        adjacency[[slot_of(e.start, bucket.date), src]] += 1;
        if let Some(end) = e.end {
            adjacency[[src, slot_of(end, bucket.date)]] += 1;
        }
    }

    let mut graph = SemanticGraph {
        user_id: bucket.user_id.clone(),
        date: bucket.date,
        nodes,
        features: Array2::zeros((0, schema.k)),
        adjacency,
        n_max: schema.n_max,
        dropped_sources,
    };
    graph.features = node_features(&graph, schema);
    graph
}

/// Per-node feature rows computed from node kinds and the count matrix.
pub fn node_features(graph: &SemanticGraph, schema: &GraphSchema) -> Array2<f64> {
    let n = graph.nodes.len();
    let buckets = schema.entity_hash_buckets;
    let frac_col = 3 + SENSOR_COUNT;
    let hash_col = frac_col + 1;
    let degree_col = hash_col + buckets;
    let mut x = Array2::zeros((n, feature_width(buckets)));
    let last_slot = (SLOTS_PER_DAY - 1) as f64;

    for (i, node) in graph.nodes.iter().enumerate() {
        match node {
            NodeKind::Time(slot) => {
                x[[i, 0]] = 1.0;
                x[[i, frac_col]] = *slot as f64 / last_slot;
            }
            NodeKind::Sensor(s) => {
                x[[i, 1]] = 1.0;
                x[[i, 3 + s.index()]] = 1.0;
            }
            NodeKind::Source { entity_key, sensor } => {
                x[[i, 2]] = 1.0;
                x[[i, 3 + sensor.index()]] = 1.0;
                let (mut weighted, mut total) = (0.0, 0.0);
                for slot in 0..SLOTS_PER_DAY {
                    let w = graph.adjacency[[slot, i]] as f64;
                    weighted += w * slot as f64;
                    total += w;
                }
                if total > 0.0 {
                    x[[i, frac_col]] = weighted / total / last_slot;
                }
                let bucket = (fnv1a(entity_key.as_bytes()) % buckets as u64) as usize;
                x[[i, hash_col + bucket]] = 1.0;
            }
        }
        let degree: u64 = graph.adjacency.row(i).iter().map(|&w| w as u64).sum::<u64>()
            + graph.adjacency.column(i).iter().map(|&w| w as u64).sum::<u64>();
        x[[i, degree_col]] = (degree as f64).ln_1p();
    }
    x
}

/// `binarize(A + Aᵀ)` over the real nodes, padded with zeros to `n_max`.
pub fn symmetric_structure(adjacency: &Array2<u32>, n_max: usize) -> Array2<f64> {
    let n = adjacency.nrows();
    assert!(n <= n_max, "graph has {n} nodes but n_max is {n_max}");
    let mut s = Array2::zeros((n_max, n_max));
    for i in 0..n {
        for j in 0..n {
            if adjacency[[i, j]] > 0 || adjacency[[j, i]] > 0 {
                s[[i, j]] = 1.0;
            }
        }
    }
    s
}

/// Symmetric-normalized propagation matrix `D^{-1/2}(S + I)D^{-1/2}` on the
/// real nodes, zero on padded slots.
pub fn normalize_adjacency(adjacency: &Array2<u32>, n_max: usize) -> Array2<f64> {
    let n = adjacency.nrows();
    let mut s = symmetric_structure(adjacency, n_max);
    for i in 0..n {
        s[[i, i]] = 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n_max)
        .map(|i| {
            let d: f64 = s.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for ((i, j), v) in s.indexed_iter_mut() {
        if *v != 0.0 {
            *v *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    s
}

/// Model-ready tensors for one graph, padded to `n_max`.
#[derive(Debug, Clone)]
pub struct GraphTensors {
    /// `n_max × k` features, zero rows past the real nodes.
    pub features: Array2<f64>,
    pub propagation: std::rc::Rc<CsrMatrix>,
    /// `n_max × n_max` binary symmetric structure (reconstruction target).
    pub structure: Array2<f64>,
    pub mask: Vec<bool>,
}

impl GraphTensors {
    pub fn from_graph(graph: &SemanticGraph) -> Self {
        Self::from_parts(&graph.features, &graph.adjacency, graph.n_max)
    }

    pub fn from_parts(features: &Array2<f64>, adjacency: &Array2<u32>, n_max: usize) -> Self {
        let n = adjacency.nrows();
        assert_eq!(features.nrows(), n, "feature rows must match node count");
        let mut padded = Array2::zeros((n_max, features.ncols()));
        padded.slice_mut(ndarray::s![..n, ..]).assign(features);
        let a_hat = normalize_adjacency(adjacency, n_max);
        Self {
            features: padded,
            propagation: std::rc::Rc::new(CsrMatrix::from_dense(a_hat.view())),
            structure: symmetric_structure(adjacency, n_max),
            mask: (0..n_max).map(|i| i < n).collect(),
        }
    }

    pub fn n_max(&self) -> usize {
        self.mask.len()
    }

    pub fn real_nodes(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}
