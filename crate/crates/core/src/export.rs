//! Static graph exports: Graphviz DOT for viewing, node-link JSON for storage.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeSemantic, GraphSchema, NodeClass, NodeKind, SemanticGraph};
use crate::ingest::SensorKind;

/// Pen width of a weight-1 edge in DOT output.
pub const BASE_PEN_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    NodeLink,
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "nodelink" => Ok(ExportFormat::NodeLink),
            other => Err(ExportError::Usage(format!("unknown export format '{other}' (expected dot or nodelink)"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid node-link document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLinkNode {
    pub id: usize,
    pub kind: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLinkEdge {
    pub from: usize,
    pub to: usize,
    pub semantic: EdgeSemantic,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLinkDoc {
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub user_id: String,
    pub date: NaiveDate,
    pub n_max: usize,
    pub dropped_sources: usize,
    pub nodes: Vec<NodeLinkNode>,
    pub edges: Vec<NodeLinkEdge>,
}

impl NodeLinkDoc {
    pub fn from_graph(graph: &SemanticGraph) -> Self {
        let nodes = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| {
                let (kind, slot, sensor) = match node {
                    NodeKind::Time(s) => ("time", Some(*s), None),
                    NodeKind::Sensor(s) => ("sensor", None, Some(*s)),
                    NodeKind::Source { sensor, .. } => ("source", None, Some(*sensor)),
                };
                NodeLinkNode {
                    id,
                    kind: kind.to_string(),
                    label: node.label(),
                    slot,
                    sensor,
                }
            })
            .collect();
        let edges = graph
            .edges()
            .into_iter()
            .map(|(from, to, semantic, weight)| NodeLinkEdge {
                from,
                to,
                semantic,
                weight,
            })
            .collect();
        Self {
            meta: BTreeMap::new(),
            user_id: graph.user_id.clone(),
            date: graph.date,
            n_max: graph.n_max,
            dropped_sources: graph.dropped_sources,
            nodes,
            edges,
        }
    }

    pub fn with_meta(mut self, meta: BTreeMap<String, String>) -> Self {
        self.meta = meta;
        self
    }

    /// Rebuilds node list and join counts; features are recomputed with `schema`.
    pub fn to_graph(&self, schema: &GraphSchema) -> Result<SemanticGraph, ExportError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(ExportError::Invalid(format!("node ids must be dense, found {} at {i}", n.id)));
            }
            let kind = match (n.kind.as_str(), n.slot, n.sensor) {
                ("time", Some(slot), _) => NodeKind::Time(slot),
                ("sensor", _, Some(s)) => NodeKind::Sensor(s),
                ("source", _, Some(s)) => NodeKind::Source {
                    entity_key: n.label.clone(),
                    sensor: s,
                },
                _ => return Err(ExportError::Invalid(format!("node {i} has kind '{}' with missing fields", n.kind))),
            };
            nodes.push(kind);
        }
        let n = nodes.len();
        let mut adjacency = Array2::<u32>::zeros((n, n));
        for e in &self.edges {
            if e.from >= n || e.to >= n {
                return Err(ExportError::Invalid(format!("edge {}→{} out of range", e.from, e.to)));
            }
            let legal = EdgeSemantic::between(nodes[e.from].class(), nodes[e.to].class());
            if legal != Some(e.semantic) {
                return Err(ExportError::Invalid(format!(
                    "edge {}→{} labelled {} is not a legal relation",
                    e.from, e.to, e.semantic
                )));
            }
            adjacency[[e.from, e.to]] = e.weight;
        }
        let mut graph = SemanticGraph {
            user_id: self.user_id.clone(),
            date: self.date,
            nodes,
            features: Array2::zeros((0, schema.k)),
            adjacency,
            n_max: self.n_max,
            dropped_sources: self.dropped_sources,
        };
        graph.features = crate::graph::node_features(&graph, schema);
        Ok(graph)
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn color(class: NodeClass) -> &'static str {
    match class {
        NodeClass::Time => "black",
        NodeClass::Source => "red",
        NodeClass::Sensor => "cyan",
    }
}

/// Graphviz DOT: time nodes black, source nodes red, sensor nodes cyan,
/// pen width proportional to join count.
pub fn to_dot(graph: &SemanticGraph, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "// {h}");
    }
    let _ = writeln!(out, "digraph \"{}_{}\" {{", dot_escape(&graph.user_id), graph.date);
    let _ = writeln!(out, "  node [shape=circle, style=filled];");
    for (i, node) in graph.nodes.iter().enumerate() {
        let c = color(node.class());
        let _ = writeln!(
            out,
            "  n{i} [label=\"{}\", color={c}, fillcolor={c}];",
            dot_escape(&node.label())
        );
    }
    for (from, to, sem, weight) in graph.edges() {
        let _ = writeln!(
            out,
            "  n{from} -> n{to} [label=\"{sem}\", weight={weight}, penwidth={:.3}];",
            BASE_PEN_WIDTH * weight as f64
        );
    }
    out.push_str("}\n");
    out
}

pub fn export_graph(graph: &SemanticGraph, format: &str) -> Result<String, ExportError> {
    match format.parse::<ExportFormat>()? {
        ExportFormat::Dot => Ok(to_dot(graph, &[])),
        ExportFormat::NodeLink => Ok(serde_json::to_string_pretty(&NodeLinkDoc::from_graph(graph))?),
    }
}

/// One manifest row: `user_id, date, n, dropped_sources`.
pub fn manifest_line(graph: &SemanticGraph) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        graph.user_id,
        graph.date,
        graph.node_count(),
        graph.dropped_sources
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_day_graph;
    use crate::ingest::DayBucket;

    #[test]
    fn unknown_format_is_usage_error() {
        let g = build_day_graph(
            &DayBucket::empty("1", NaiveDate::from_ymd_opt(2014, 1, 1).unwrap()),
            &GraphSchema::default(),
        );
        assert!(matches!(export_graph(&g, "graphml"), Err(ExportError::Usage(_))));
    }

    #[test]
    fn empty_day_dot_counts() {
        let g = build_day_graph(
            &DayBucket::empty("1", NaiveDate::from_ymd_opt(2014, 1, 1).unwrap()),
            &GraphSchema::default(),
        );
        let dot = export_graph(&g, "dot").unwrap();
        let nodes = dot.lines().filter(|l| l.trim_start().starts_with('n') && l.contains("[label=") && !l.contains("->")).count();
        let edges = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!(nodes, 103);
        assert_eq!(edges, 95);
    }
}
