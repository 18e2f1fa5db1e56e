//! Dense softmax classifier trained on frozen latent codes.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AccuracyReport, AnalysisError, LabeledEmbedding, Task};
use crate::autodiff::Tape;
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub test_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: [16, 16],
            epochs: 200,
            lr: 5e-3,
            batch_size: 32,
            test_fraction: 0.2,
        }
    }
}

/// Stratified split: `fraction` of every class (at least one item when the
/// class has two or more) goes to the test side.
fn stratified_split(labels: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in by_class {
        idx.shuffle(rng);
        let mut n_test = (idx.len() as f64 * fraction).round() as usize;
        if idx.len() >= 2 {
            n_test = n_test.clamp(1, idx.len() - 1);
        } else {
            n_test = 0;
        }
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

struct Mlp {
    blocks: Vec<Array2<f64>>,
}

impl Mlp {
    fn new(input: usize, hidden: [usize; 2], classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            blocks: vec![
                glorot(input, hidden[0], rng),
                Array2::zeros((1, hidden[0])),
                glorot(hidden[0], hidden[1], rng),
                Array2::zeros((1, hidden[1])),
                glorot(hidden[1], classes, rng),
                Array2::zeros((1, classes)),
            ],
        }
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| b.dim()).collect()
    }

    fn logits<'a>(&'a self, tape: &mut Tape<'a>, x: Array2<f64>, trainable: bool) -> (crate::autodiff::Var, Vec<crate::autodiff::Var>) {
        let vars: Vec<_> = self.blocks.iter().map(|b| tape.leaf(b, trainable)).collect();
        let x = tape.constant_owned(x);
        let h = tape.matmul(x, vars[0]);
        let h = tape.add_row_bias(h, vars[1]);
        let h = tape.relu(h);
        let h = tape.matmul(h, vars[2]);
        let h = tape.add_row_bias(h, vars[3]);
        let h = tape.relu(h);
        let o = tape.matmul(h, vars[4]);
        (tape.add_row_bias(o, vars[5]), vars)
    }

    fn predict(&self, x: Array2<f64>) -> Vec<usize> {
        let mut tape = Tape::new();
        let (o, _) = self.logits(&mut tape, x, false);
        tape.value(o)
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect()
    }
}

fn rows(data: &[Vec<f64>], idx: &[usize], mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let d = mean.len();
    Array2::from_shape_fn((idx.len(), d), |(r, c)| (data[idx[r]][c] - mean[c]) / scale[c])
}

fn one_run(data: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &ClassifierConfig, rng: &mut ChaCha8Rng) -> f64 {
    let (train, test) = stratified_split(labels, cfg.test_fraction, rng);
    let d = data[0].len();
    let mut mean = vec![0.0; d];
    for &i in &train {
        for c in 0..d {
            mean[c] += data[i][c] / train.len() as f64;
        }
    }
    let mut scale = vec![0.0; d];
    for &i in &train {
        for c in 0..d {
            scale[c] += (data[i][c] - mean[c]).powi(2) / train.len() as f64;
        }
    }
    let scale: Vec<f64> = scale.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();

    let mut mlp = Mlp::new(d, cfg.hidden, classes, rng);
    let mut opt = Adam::new(cfg.lr, &mlp.shapes());
    let mut order = train.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let x = rows(data, batch, &mean, &scale);
            let y = Rc::new(batch.iter().map(|&i| labels[i]).collect::<Vec<_>>());
            let grads = {
                let mut tape = Tape::new();
                let (o, vars) = mlp.logits(&mut tape, x, true);
                let loss = tape.softmax_cross_entropy(o, y);
                let mut g = tape.backward(loss);
                vars.iter().map(|&v| g.take(v)).collect::<Vec<_>>()
            };
            let refs: Vec<Option<&Array2<f64>>> = grads.iter().map(|g| g.as_ref()).collect();
            let mut blocks: Vec<&mut Array2<f64>> = mlp.blocks.iter_mut().collect();
            opt.update(&mut blocks, &refs);
        }
    }
    if test.is_empty() {
        return 0.0;
    }
    let predicted = mlp.predict(rows(data, &test, &mean, &scale));
    let correct = predicted.iter().zip(&test).filter(|(p, &i)| **p == labels[i]).count();
    100.0 * correct as f64 / test.len() as f64
}

/// Trains `runs` independent classifiers on fixed embeddings and reports
/// held-out accuracy. Embeddings without a label for `task` are skipped.
pub fn fit_frozen_classifier(
    embeddings: &[LabeledEmbedding],
    task: Task,
    runs: usize,
    seed: u64,
    cfg: &ClassifierConfig,
) -> Result<AccuracyReport, AnalysisError> {
    if runs == 0 {
        return Err(AnalysisError::Usage("runs must be at least 1".into()));
    }
    let labeled: Vec<(&LabeledEmbedding, usize)> = embeddings
        .iter()
        .filter_map(|e| task.label(e).map(|l| (e, l)))
        .collect();
    // Dense class ids in label order.
    let distinct: std::collections::BTreeSet<usize> = labeled.iter().map(|(_, l)| *l).collect();
    let class_of: BTreeMap<usize, usize> = distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    if class_of.len() < 2 {
        return Err(AnalysisError::Usage(format!(
            "task '{}' needs at least 2 classes, found {}",
            task.as_str(),
            class_of.len()
        )));
    }
    let data: Vec<Vec<f64>> = labeled.iter().map(|(e, _)| e.z.clone()).collect();
    let labels: Vec<usize> = labeled.iter().map(|(_, l)| class_of[l]).collect();
    let classes = class_of.len();

    let mut counts = vec![0usize; classes];
    for &l in &labels {
        counts[l] += 1;
    }
    let majority = 100.0 * *counts.iter().max().expect("non-empty") as f64 / labels.len() as f64;

    let accs: Vec<f64> = (0..runs)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            one_run(&data, &labels, classes, cfg, &mut rng)
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / runs as f64;
    let std = if runs >= 2 {
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(AccuracyReport {
        task,
        mean_accuracy: mean,
        std,
        n_runs: runs,
        n_classes: classes,
        majority_baseline: majority,
        run_accuracies: accs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Gender;
    use chrono::NaiveDate;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 3]], per: usize, noise: f64, seed: u64) -> Vec<LabeledEmbedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise).unwrap();
        let mut out = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for i in 0..per {
                out.push(LabeledEmbedding {
                    z: center.iter().map(|m| m + n.sample(&mut rng)).collect(),
                    sex: if c % 2 == 0 { Gender::M } else { Gender::F },
                    user_index: c,
                    user_id: format!("{c}"),
                    date: NaiveDate::from_ymd_opt(2013, 11, 1).unwrap() + chrono::Duration::days(i as i64),
                    group: Some(c),
                });
            }
        }
        out
    }

    fn nearest_centroid_accuracy(points: &[LabeledEmbedding]) -> f64 {
        let k = points.iter().map(|p| p.user_index).max().unwrap() + 1;
        let mut sums = vec![vec![0.0; 3]; k];
        let mut counts = vec![0.0; k];
        for p in points {
            for c in 0..3 {
                sums[p.user_index][c] += p.z[c];
            }
            counts[p.user_index] += 1.0;
        }
        let correct = points
            .iter()
            .filter(|p| {
                let best = (0..k)
                    .min_by(|&a, &b| {
                        let da: f64 = (0..3).map(|c| (p.z[c] - sums[a][c] / counts[a]).powi(2)).sum();
                        let db: f64 = (0..3).map(|c| (p.z[c] - sums[b][c] / counts[b]).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == p.user_index
            })
            .count();
        100.0 * correct as f64 / points.len() as f64
    }

    #[test]
    fn separated_clusters_are_learned() {
        let data = blobs(&[[5.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 5.0]], 30, 0.3, 1);
        assert!(nearest_centroid_accuracy(&data) >= 90.0);
        let r = fit_frozen_classifier(&data, Task::Index, 3, 7, &ClassifierConfig::default()).unwrap();
        assert!(r.mean_accuracy >= 90.0, "{r:?}");
        assert_eq!(r.n_classes, 3);
        assert!((r.majority_baseline - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn shuffled_labels_stay_near_majority() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        labels.shuffle(&mut rng);
        let data: Vec<LabeledEmbedding> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| LabeledEmbedding {
                z: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                sex: Gender::M,
                user_index: l,
                user_id: l.to_string(),
                date: NaiveDate::from_ymd_opt(2013, 11, 1).unwrap() + chrono::Duration::days(i as i64),
                group: None,
            })
            .collect();
        let cfg = ClassifierConfig {
            epochs: 60,
            ..Default::default()
        };
        let r = fit_frozen_classifier(&data, Task::Index, 5, 3, &cfg).unwrap();
        assert!((r.mean_accuracy - r.majority_baseline).abs() <= 10.0, "{r:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let data = blobs(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 12, 0.8, 3);
        let cfg = ClassifierConfig {
            epochs: 20,
            ..Default::default()
        };
        let a = fit_frozen_classifier(&data, Task::Sex, 2, 5, &cfg).unwrap();
        let b = fit_frozen_classifier(&data, Task::Sex, 2, 5, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_a_usage_error() {
        let data = blobs(&[[1.0, 0.0, 0.0]], 10, 0.1, 4);
        assert!(matches!(
            fit_frozen_classifier(&data, Task::Index, 2, 0, &ClassifierConfig::default()),
            Err(AnalysisError::Usage(_))
        ));
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let (train, test) = stratified_split(&labels, 0.2, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(train.len() + test.len(), 50);
        for c in 0..5 {
            assert_eq!(test.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
    }
}
