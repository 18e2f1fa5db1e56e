//! Frozen-encoder classification, t-SNE projection and cluster reporting
//! over precomputed latent codes.

mod classifier;
mod cluster;
mod io;
mod svg;
mod tsne;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Gender;

pub use classifier::{fit_frozen_classifier, ClassifierConfig};
pub use cluster::{cluster_report, kmeans, silhouette, ClusterConfig, ClusterReport, ClusterSummary, ClusterTag, KMeansResult};
pub use io::{read_embeddings, read_projection, write_embeddings, write_projection, ProjectedPoint};
pub use svg::scatter_svg;
pub use tsne::{affinities, tsne_project, TsneConfig, TsneResult};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One encoded day with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub z: Vec<f64>,
    pub sex: Gender,
    /// Position of the user in the sorted set of users.
    pub user_index: usize,
    pub user_id: String,
    pub date: NaiveDate,
    /// Optional ground-truth group such as a synthetic archetype.
    pub group: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sex,
    Index,
    Archetype,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sex => "sex",
            Task::Index => "index",
            Task::Archetype => "archetype",
        }
    }

    /// Class label of `e`, or `None` when the task does not apply.
    pub fn label(self, e: &LabeledEmbedding) -> Option<usize> {
        match self {
            Task::Sex => Some(match e.sex {
                Gender::M => 0,
                Gender::F => 1,
            }),
            Task::Index => Some(e.user_index),
            Task::Archetype => e.group,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sex" => Ok(Task::Sex),
            "index" => Ok(Task::Index),
            "archetype" => Ok(Task::Archetype),
            other => Err(AnalysisError::Usage(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub task: Task,
    /// Percent.
    pub mean_accuracy: f64,
    /// Sample standard deviation over runs, percent.
    pub std: f64,
    pub n_runs: usize,
    pub n_classes: usize,
    /// Share of the most frequent class, percent.
    pub majority_baseline: f64,
    pub run_accuracies: Vec<f64>,
}

impl AccuracyReport {
    pub fn cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean_accuracy, self.std)
    }
}

/// Mean latent code per user, keeping the user's labels and first date.
pub fn aggregate_by_user(embeddings: &[LabeledEmbedding]) -> Vec<LabeledEmbedding> {
    let mut out: Vec<(LabeledEmbedding, usize)> = Vec::new();
    for e in embeddings {
        match out.iter_mut().find(|(a, _)| a.user_id == e.user_id) {
            Some((acc, n)) => {
                for (a, b) in acc.z.iter_mut().zip(&e.z) {
                    *a += b;
                }
                *n += 1;
            }
            None => out.push((e.clone(), 1)),
        }
    }
    out.into_iter()
        .map(|(mut e, n)| {
            e.z.iter_mut().for_each(|v| *v /= n as f64);
            e
        })
        .collect()
}

/// Plain-text accuracy table: one row per method, one column per task.
pub fn accuracy_table(rows: &[(String, Vec<AccuracyReport>)]) -> String {
    let mut tasks: Vec<(Task, usize)> = Vec::new();
    for (_, reports) in rows {
        for r in reports {
            if !tasks.iter().any(|(t, _)| *t == r.task) {
                tasks.push((r.task, r.n_classes));
            }
        }
    }
    let header: Vec<String> = tasks
        .iter()
        .map(|(t, c)| format!("{} ({c} class)", t.as_str()))
        .collect();
    let method_w = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("method".len());
    let col_w = header.iter().map(|h| h.len()).max().unwrap_or(0).max(14);
    let mut text = format!("{:<method_w$}", "method");
    for h in &header {
        text.push_str(&format!("  {h:>col_w$}"));
    }
    text.push('\n');
    for (method, reports) in rows {
        text.push_str(&format!("{method:<method_w$}"));
        for (t, _) in &tasks {
            let cell = reports
                .iter()
                .find(|r| r.task == *t)
                .map_or_else(|| "-".to_string(), |r| r.cell());
            text.push_str(&format!("  {cell:>col_w$}"));
        }
        text.push('\n');
    }
    let mut baselines = String::new();
    for (t, _) in &tasks {
        if let Some(r) = rows.iter().flat_map(|(_, rs)| rs).find(|r| r.task == *t) {
            baselines.push_str(&format!(
                "majority baseline {}: {:.2}% ({} runs)\n",
                t.as_str(),
                r.majority_baseline,
                r.n_runs
            ));
        }
    }
    text + &baselines
}
