//! Exact t-SNE.

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// `None` picks `max(N / exaggeration / 4, 50)`.
    pub learning_rate: Option<f64>,
    pub exaggeration: f64,
    /// Share of iterations run with exaggerated affinities.
    pub exaggeration_fraction: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            exaggeration: 12.0,
            exaggeration_fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) against the unexaggerated affinities, one value per iteration.
    pub kl_trace: Vec<f64>,
    /// First iteration without exaggeration.
    pub exaggeration_end: usize,
    pub perplexity: f64,
    pub warnings: Vec<String>,
}

const PERPLEXITY_TOL: f64 = 1e-4;

fn squared_distances(points: &[Vec<f64>]) -> Array2<f64> {
    let n = points.len();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Row `i` of the conditional affinities for precision `beta`, and its perplexity.
fn row_affinities(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (&d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (d - min)).exp() };
        sum += *o;
    }
    let mut entropy = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= sum;
        if j != i && *o > 0.0 {
            entropy -= *o * o.ln();
        }
    }
    entropy.exp()
}

/// Conditional affinities `p_{j|i}` (rows sum to 1) and the perplexity each
/// row achieves after the bandwidth search.
pub fn affinities(points: &[Vec<f64>], perplexity: f64) -> (Array2<f64>, Vec<f64>) {
    let n = points.len();
    let dist = squared_distances(points);
    let mut p = Array2::zeros((n, n));
    let mut achieved = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let d = dist.row(i).to_vec();
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let mut perp = row_affinities(&d, i, beta, &mut row);
        for _ in 0..1000 {
            if (perp - perplexity).abs() < PERPLEXITY_TOL {
                break;
            }
            // Larger beta, narrower kernel, lower perplexity.
            if perp > perplexity {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            perp = row_affinities(&d, i, beta, &mut row);
        }
        achieved[i] = perp;
        p.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
    }
    (p, achieved)
}

fn kl_and_gradient(p: &Array2<f64>, y: &[[f64; 2]], exaggeration: f64, grad: &mut [[f64; 2]]) -> f64 {
    let n = y.len();
    let mut num = Array2::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[[i, j]] = v;
            num[[j, i]] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for g in grad.iter_mut() {
        *g = [0.0, 0.0];
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = (num[[i, j]] / z).max(1e-300);
            let pij = p[[i, j]];
            if pij > 0.0 {
                kl += pij * (pij / q).ln();
            }
            let m = 4.0 * (exaggeration * pij - q) * num[[i, j]];
            grad[i][0] += m * (y[i][0] - y[j][0]);
            grad[i][1] += m * (y[i][1] - y[j][1]);
        }
    }
    kl
}

/// Embeds `points` in 2-D. The perplexity is shrunk below `(N−1)/3` when needed.
pub fn tsne_project(points: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult, AnalysisError> {
    let n = points.len();
    if n < 5 {
        return Err(AnalysisError::Usage(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if points.iter().any(|p| p.len() != points[0].len() || p.iter().any(|v| !v.is_finite())) {
        return Err(AnalysisError::Usage("points must be finite with equal dimension".into()));
    }
    let mut warnings = Vec::new();
    let bound = (n - 1) as f64 / 3.0;
    let mut perplexity = cfg.perplexity;
    if perplexity >= bound {
        perplexity = (bound - 0.5).max(1.5).min(bound * 0.99);
        warnings.push(format!(
            "perplexity {} too large for {n} points; using {perplexity:.3}",
            cfg.perplexity
        ));
    }
    let (cond, _) = affinities(points, perplexity);
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = ((cond[[i, j]] + cond[[j, i]]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let lr = cfg
        .learning_rate
        .unwrap_or_else(|| (n as f64 / cfg.exaggeration / 4.0).max(50.0));
    let exaggeration_end = (cfg.iterations as f64 * cfg.exaggeration_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let early = it < exaggeration_end;
        let ex = if early { cfg.exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        kl_trace.push(kl_and_gradient(&p, &y, ex, &mut grad));
        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign { gains[i][c] * 0.8 } else { gains[i][c] + 0.2 };
                gains[i][c] = gains[i][c].max(0.01);
                update[i][c] = momentum * update[i][c] - lr * gains[i][c] * grad[i][c];
                y[i][c] += update[i][c];
            }
        }
        for c in 0..2 {
            let mean = y.iter().map(|v| v[c]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| v[c] -= mean);
        }
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(AnalysisError::Usage("t-SNE diverged; lower the learning rate".into()));
    }
    Ok(TsneResult {
        coords: y,
        kl_trace,
        exaggeration_end,
        perplexity,
        warnings,
    })
}
