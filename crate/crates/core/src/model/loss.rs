//! The three training objectives.
//!
//! * reconstruction: feature MSE over real rows plus edge BCE over real
//!   node pairs against the binarized symmetric structure;
//! * discriminator: `−μ(z_p)·log D(z_p) − log(1 − D(E(G)))`;
//! * encoder adversarial: `−log D(E(G))`.
//!
//! Scores are clamped to `[ε, 1−ε]` before taking logs.

use std::rc::Rc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    check_graph_dims, check_latent, decode_on_tape, discriminate_on_tape, ModelError, ModelParams,
    ParamVars, Reconstruction,
};
use crate::autodiff::{bce_with_logits, Tape, Var};
use crate::graph::GraphTensors;
use crate::manifold::{membership, CcmSpec};

pub const PROB_EPS: f64 = 1e-7;

/// Relative weight of the two reconstruction terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconWeights {
    pub features: f64,
    pub edges: f64,
}

impl Default for ReconWeights {
    fn default() -> Self {
        Self {
            features: 1.0,
            edges: 1.0,
        }
    }
}

pub fn reconstruction_loss(graph: &GraphTensors, recon: &Reconstruction, weights: ReconWeights) -> f64 {
    let n = graph.real_nodes();
    if n == 0 {
        return 0.0;
    }
    let k = graph.features.ncols();
    let mut mse = 0.0;
    let mut bce = 0.0;
    for i in (0..graph.n_max()).filter(|&i| graph.mask[i]) {
        for c in 0..k {
            let d = graph.features[[i, c]] - recon.x_hat[[i, c]];
            mse += d * d;
        }
        for j in (0..graph.n_max()).filter(|&j| graph.mask[j]) {
            bce += bce_with_logits(recon.a_logits[[i, j]], graph.structure[[i, j]]);
        }
    }
    weights.features * mse / (n * k) as f64 + weights.edges * bce / (n * n) as f64
}

/// Batch reconstruction loss on the tape, averaged over graphs.
pub(crate) fn reconstruction_on_tape(
    tape: &mut Tape<'_>,
    pv: &ParamVars,
    graphs: &[&GraphTensors],
    zs: Var,
    weights: ReconWeights,
) -> Var {
    let n_max = graphs[0].n_max();
    let k = graphs[0].features.ncols();
    let b = graphs.len();
    let (x_hat, logits) = decode_on_tape(tape, pv, zs, n_max);

    let mut x_target = Array2::zeros((b, n_max * k));
    let mut x_weight = Array2::zeros((b, n_max * k));
    let mut a_target = Array2::zeros((b, n_max * n_max));
    let mut a_weight = Array2::zeros((b, n_max * n_max));
    for (row, g) in graphs.iter().enumerate() {
        let n = g.real_nodes().max(1) as f64;
        let wx = weights.features / (b as f64 * n * k as f64);
        let wa = weights.edges / (b as f64 * n * n);
        for i in (0..n_max).filter(|&i| g.mask[i]) {
            for c in 0..k {
                x_target[[row, i * k + c]] = g.features[[i, c]];
                x_weight[[row, i * k + c]] = wx;
            }
            for j in (0..n_max).filter(|&j| g.mask[j]) {
                a_target[[row, i * n_max + j]] = g.structure[[i, j]];
                a_weight[[row, i * n_max + j]] = wa;
            }
        }
    }
    let lx = tape.weighted_squared_error(x_hat, Rc::new(x_target), Rc::new(x_weight));
    let la = tape.weighted_bce_with_logits(logits, Rc::new(a_target), Rc::new(a_weight));
    tape.add(lx, la)
}

/// Discriminator objective on the tape for paired prior/encoder batches.
pub(crate) fn discriminator_on_tape(
    tape: &mut Tape<'_>,
    pv: &ParamVars,
    priors: Var,
    encoded: Var,
    prior_membership: &[f64],
) -> Var {
    let b = prior_membership.len() as f64;
    let dp = discriminate_on_tape(tape, pv, priors);
    let de = discriminate_on_tape(tape, pv, encoded);
    let wp = Rc::new(prior_membership.iter().map(|m| m / b).collect());
    let we = Rc::new(vec![1.0 / b; prior_membership.len()]);
    let lp = tape.neg_log_clamped(dp, wp, PROB_EPS);
    let le = tape.neg_log_one_minus_clamped(de, we, PROB_EPS);
    tape.add(lp, le)
}

pub(crate) fn encoder_adversarial_on_tape(tape: &mut Tape<'_>, pv: &ParamVars, encoded: Var, batch: usize) -> Var {
    let de = discriminate_on_tape(tape, pv, encoded);
    tape.neg_log_clamped(de, Rc::new(vec![1.0 / batch as f64; batch]), PROB_EPS)
}

fn row(z: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector")
}

pub fn discriminator_loss(
    z_prior: &[f64],
    z_enc: &[f64],
    params: &ModelParams,
    spec: &CcmSpec,
) -> Result<f64, ModelError> {
    check_latent(z_prior, params.dims())?;
    check_latent(z_enc, params.dims())?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let p = tape.constant_owned(row(z_prior));
    let e = tape.constant_owned(row(z_enc));
    let l = discriminator_on_tape(&mut tape, &pv, p, e, &[membership(z_prior, spec)]);
    Ok(tape.scalar(l))
}

pub fn encoder_adversarial_loss(z_enc: &[f64], params: &ModelParams) -> Result<f64, ModelError> {
    check_latent(z_enc, params.dims())?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let e = tape.constant_owned(row(z_enc));
    let l = encoder_adversarial_on_tape(&mut tape, &pv, e, 1);
    Ok(tape.scalar(l))
}

/// Reconstruction loss of one graph through the full model.
pub fn graph_reconstruction_loss(
    graph: &GraphTensors,
    params: &ModelParams,
    weights: ReconWeights,
) -> Result<f64, ModelError> {
    check_graph_dims(graph, params.dims())?;
    let z = super::encode(graph, params)?;
    let recon = super::decode(&z, params)?;
    Ok(reconstruction_loss(graph, &recon, weights))
}
