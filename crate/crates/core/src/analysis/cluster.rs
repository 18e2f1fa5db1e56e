//! Seeded k-means and the cluster composition report.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, LabeledEmbedding};
use crate::ingest::Gender;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Minimum share of one sex for a gender-specific cluster.
    pub gender_threshold: f64,
    /// Minimum share of one user for a user-specific cluster.
    pub user_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 5,
            restarts: 50,
            max_iterations: 300,
            seed: 0,
            gender_threshold: 0.8,
            user_threshold: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (a, p) in out.iter_mut().zip(points) {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, m)| (c, dist2(p, m)))
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        *a = best;
        inertia += d;
    }
    inertia
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut next = vec![0; points.len()];
    let mut trace = Vec::new();
    let mut inertia = assign(points, &centroids, &mut next);
    for _ in 0..max_iter {
        if next == assignments {
            break;
        }
        assignments.clone_from(&next);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // An empty cluster keeps its centroid.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        inertia = assign(points, &centroids, &mut next);
        trace.push(inertia);
    }
    KMeansResult {
        assignments: next,
        centroids,
        inertia,
        inertia_trace: trace,
    }
}

/// k-means++ seeding and Lloyd iterations, best of `restarts` by inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, max_iterations: usize, seed: u64) -> Result<KMeansResult, AnalysisError> {
    if k < 2 {
        return Err(AnalysisError::Usage(format!("k must be at least 2, got {k}")));
    }
    if k >= points.len() {
        return Err(AnalysisError::Usage(format!("k = {k} needs more than {k} points, got {}", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let r = lloyd(points, init, max_iterations);
        if best.as_ref().map_or(true, |b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mean silhouette coefficient; points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist2(&points[i], &points[j]).sqrt();
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterTag {
    UserSpecific,
    GenderSpecific(Gender),
    Common,
}

impl ClusterTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterTag::UserSpecific => "user-specific",
            ClusterTag::GenderSpecific(_) => "gender-specific",
            ClusterTag::Common => "common",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub male_share: f64,
    pub female_share: f64,
    pub dominant_user: String,
    pub dominant_user_share: f64,
    pub tag: ClusterTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub silhouette: f64,
    pub inertia: f64,
    pub clusters: Vec<ClusterSummary>,
}

impl ClusterReport {
    pub fn to_text(&self) -> String {
        let mut t = format!(
            "k\t{}\nsilhouette\t{:.4}\ninertia\t{:.6e}\ncluster\tsize\tmale_share\tfemale_share\tdominant_user\tdominant_user_share\ttag\n",
            self.k, self.silhouette, self.inertia
        );
        for c in &self.clusters {
            let tag = match c.tag {
                ClusterTag::GenderSpecific(g) => format!("gender-specific({g})"),
                other => other.as_str().to_string(),
            };
            t.push_str(&format!(
                "{}\t{}\t{:.3}\t{:.3}\t{}\t{:.3}\t{}\n",
                c.id, c.size, c.male_share, c.female_share, c.dominant_user, c.dominant_user_share, tag
            ));
        }
        t
    }
}

/// Clusters `points` and tags every cluster by its label composition.
/// A cluster dominated by one user is user-specific even if it is also single-sex.
pub fn cluster_report(
    points: &[Vec<f64>],
    labels: &[LabeledEmbedding],
    cfg: &ClusterConfig,
) -> Result<ClusterReport, AnalysisError> {
    if points.len() != labels.len() {
        return Err(AnalysisError::Usage("points and labels differ in length".into()));
    }
    let km = kmeans(points, cfg.k, cfg.restarts, cfg.max_iterations, cfg.seed)?;
    let mut clusters = Vec::with_capacity(cfg.k);
    for c in 0..cfg.k {
        let members: Vec<&LabeledEmbedding> = labels
            .iter()
            .zip(&km.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(l, _)| l)
            .collect();
        let size = members.len();
        let share = |n: usize| if size == 0 { 0.0 } else { n as f64 / size as f64 };
        let male = members.iter().filter(|m| m.sex == Gender::M).count();
        let mut users: Vec<(&str, usize)> = Vec::new();
        for m in &members {
            match users.iter_mut().find(|(u, _)| *u == m.user_id) {
                Some((_, n)) => *n += 1,
                None => users.push((&m.user_id, 1)),
            }
        }
        let (dominant_user, top) = users
            .iter()
            .fold(("", 0), |b, &(u, n)| if n > b.1 { (u, n) } else { b });
        let (male_share, female_share) = (share(male), share(size - male));
        let tag = if size > 0 && share(top) >= cfg.user_threshold {
            ClusterTag::UserSpecific
        } else if size > 0 && male_share >= cfg.gender_threshold {
            ClusterTag::GenderSpecific(Gender::M)
        } else if size > 0 && female_share >= cfg.gender_threshold {
            ClusterTag::GenderSpecific(Gender::F)
        } else {
            ClusterTag::Common
        };
        clusters.push(ClusterSummary {
            id: c,
            size,
            male_share,
            female_share,
            dominant_user: dominant_user.to_string(),
            dominant_user_share: share(top),
            tag,
        });
    }
    Ok(ClusterReport {
        k: cfg.k,
        silhouette: silhouette(points, &km.assignments),
        inertia: km.inertia,
        assignments: km.assignments,
        clusters,
    })
}
