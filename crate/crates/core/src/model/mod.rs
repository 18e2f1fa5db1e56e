//! Graph-convolutional adversarial autoencoder with a constant-curvature
//! latent prior.
//!
//! * encoder: two GCN layers (ReLU, then identity), masked mean-pool over
//!   real nodes, bias-free linear head to `R^{d+1}`;
//! * decoder: dense `(d+1) → h₂` (ReLU) then two dense heads producing the
//!   padded feature matrix and a symmetrized edge-logit matrix;
//! * discriminator: dense `(d+1) → h_D → h_D → 1` with ReLU and a sigmoid.

mod checkpoint;
mod gradcheck;
mod loss;
mod train;

use std::rc::Rc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tape, Var};
use crate::graph::GraphTensors;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_FORMAT};
pub use gradcheck::{
    analytic_gradients, grad_check, grad_check_with, loss_value, BlockError, GradCheckConfig,
    GradCheckInstance, GradCheckReport, LossKind,
};
pub use loss::{
    discriminator_loss, encoder_adversarial_loss, graph_reconstruction_loss, reconstruction_loss,
    ReconWeights, PROB_EPS,
};
pub use train::{
    embed_dataset, EpochLog, PhaseLosses, TrainConfig, TrainError, Trainer,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected:?}, got {got:?}")]
    Dimension {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("gradient check failed for {loss} on block {block}: relative error {rel_error:.3e}")]
    CheckFailed {
        loss: &'static str,
        block: &'static str,
        rel_error: f64,
    },
    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),
}

/// Layer sizes of the whole model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_max: usize,
    pub k: usize,
    /// Ambient latent size `d + 1`.
    pub latent: usize,
    pub h1: usize,
    pub h2: usize,
    pub hd: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockId {
    EncW1,
    EncW2,
    EncHead,
    DecW1,
    DecB1,
    DecWx,
    DecBx,
    DecWa,
    DecBa,
    DisW1,
    DisB1,
    DisW2,
    DisB2,
    DisW3,
    DisB3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Encoder,
    Decoder,
    Discriminator,
}

impl BlockId {
    pub const ALL: [BlockId; 15] = [
        BlockId::EncW1,
        BlockId::EncW2,
        BlockId::EncHead,
        BlockId::DecW1,
        BlockId::DecB1,
        BlockId::DecWx,
        BlockId::DecBx,
        BlockId::DecWa,
        BlockId::DecBa,
        BlockId::DisW1,
        BlockId::DisB1,
        BlockId::DisW2,
        BlockId::DisB2,
        BlockId::DisW3,
        BlockId::DisB3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockId::EncW1 => "enc.w1",
            BlockId::EncW2 => "enc.w2",
            BlockId::EncHead => "enc.head",
            BlockId::DecW1 => "dec.w1",
            BlockId::DecB1 => "dec.b1",
            BlockId::DecWx => "dec.wx",
            BlockId::DecBx => "dec.bx",
            BlockId::DecWa => "dec.wa",
            BlockId::DecBa => "dec.ba",
            BlockId::DisW1 => "dis.w1",
            BlockId::DisB1 => "dis.b1",
            BlockId::DisW2 => "dis.w2",
            BlockId::DisB2 => "dis.b2",
            BlockId::DisW3 => "dis.w3",
            BlockId::DisB3 => "dis.b3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn part(self) -> Part {
        use BlockId::*;
        match self {
            EncW1 | EncW2 | EncHead => Part::Encoder,
            DecW1 | DecB1 | DecWx | DecBx | DecWa | DecBa => Part::Decoder,
            DisW1 | DisB1 | DisW2 | DisB2 | DisW3 | DisB3 => Part::Discriminator,
        }
    }

    fn is_bias(self) -> bool {
        use BlockId::*;
        matches!(self, DecB1 | DecBx | DecBa | DisB1 | DisB2 | DisB3)
    }

    pub fn shape(self, d: &ModelDims) -> (usize, usize) {
        use BlockId::*;
        match self {
            EncW1 => (d.k, d.h1),
            EncW2 => (d.h1, d.h2),
            EncHead => (d.h2, d.latent),
            DecW1 => (d.latent, d.h2),
            DecB1 => (1, d.h2),
            DecWx => (d.h2, d.n_max * d.k),
            DecBx => (1, d.n_max * d.k),
            DecWa => (d.h2, d.n_max * d.n_max),
            DecBa => (1, d.n_max * d.n_max),
            DisW1 => (d.latent, d.hd),
            DisB1 => (1, d.hd),
            DisW2 => (d.hd, d.hd),
            DisB2 => (1, d.hd),
            DisW3 => (d.hd, 1),
            DisB3 => (1, 1),
        }
    }
}

/// All weights: encoder (φ), decoder (θ), discriminator (λ).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    blocks: Vec<Array2<f64>>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let blocks = BlockId::ALL.iter().map(|b| Array2::zeros(b.shape(&dims))).collect();
        Self { dims, blocks }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(dims);
        for (id, block) in BlockId::ALL.iter().zip(params.blocks.iter_mut()) {
            if id.is_bias() {
                continue;
            }
            let (fan_in, fan_out) = block.dim();
            if fan_in + fan_out == 0 {
                continue;
            }
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            block.mapv_inplace(|_| rng.gen_range(-limit..limit));
        }
        params
    }

    pub fn from_blocks(dims: ModelDims, blocks: Vec<Array2<f64>>) -> Result<Self, ModelError> {
        if blocks.len() != BlockId::ALL.len() {
            return Err(ModelError::Compatibility(format!(
                "expected {} parameter blocks, got {}",
                BlockId::ALL.len(),
                blocks.len()
            )));
        }
        for (id, b) in BlockId::ALL.iter().zip(&blocks) {
            if b.dim() != id.shape(&dims) {
                return Err(ModelError::Dimension {
                    what: id.name(),
                    expected: id.shape(&dims),
                    got: b.dim(),
                });
            }
        }
        Ok(Self { dims, blocks })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn block(&self, id: BlockId) -> &Array2<f64> {
        &self.blocks[id as usize]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut Array2<f64> {
        &mut self.blocks[id as usize]
    }

    pub fn blocks(&self) -> impl Iterator<Item = (BlockId, &Array2<f64>)> {
        BlockId::ALL.into_iter().zip(self.blocks.iter())
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Rounds every weight to the nearest `f32`, the on-disk precision.
    pub fn round_to_f32(&mut self) {
        for b in &mut self.blocks {
            b.mapv_inplace(|v| v as f32 as f64);
        }
    }

    /// Mutable references to the requested blocks, in the given order.
    pub(crate) fn blocks_mut_for(&mut self, ids: &[BlockId]) -> Vec<&mut Array2<f64>> {
        let mut slots: Vec<Option<&mut Array2<f64>>> = self.blocks.iter_mut().map(Some).collect();
        ids.iter()
            .map(|id| slots[*id as usize].take().expect("block requested twice"))
            .collect()
    }
}

/// Tape handles for every parameter block.
pub(crate) struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn register<'a>(tape: &mut Tape<'a>, params: &'a ModelParams, trainable: impl Fn(BlockId) -> bool) -> Self {
        let vars = params
            .blocks()
            .map(|(id, b)| tape.leaf(b, trainable(id)))
            .collect();
        Self { vars }
    }

    pub fn get(&self, id: BlockId) -> Var {
        self.vars[id as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One graph-convolution layer, `act(Â · H · W)`, without bias.
pub fn gcn_layer_forward(
    h: ArrayView2<f64>,
    a_hat: ArrayView2<f64>,
    w: ArrayView2<f64>,
    activation: Activation,
) -> Result<Array2<f64>, ModelError> {
    let n = h.nrows();
    if a_hat.dim() != (n, n) {
        return Err(ModelError::Dimension {
            what: "propagation matrix",
            expected: (n, n),
            got: a_hat.dim(),
        });
    }
    if w.nrows() != h.ncols() {
        return Err(ModelError::Dimension {
            what: "layer weight",
            expected: (h.ncols(), w.ncols()),
            got: w.dim(),
        });
    }
    let out = a_hat.dot(&h.dot(&w));
    Ok(match activation {
        Activation::Relu => out.mapv(|v| v.max(0.0)),
        Activation::Identity => out,
    })
}

pub(crate) fn check_graph_dims(graph: &GraphTensors, dims: &ModelDims) -> Result<(), ModelError> {
    let expected = (dims.n_max, dims.k);
    if graph.features.dim() != expected {
        return Err(ModelError::Dimension {
            what: "graph features",
            expected,
            got: graph.features.dim(),
        });
    }
    Ok(())
}

pub(crate) fn pool_weights(graph: &GraphTensors) -> Rc<Vec<f64>> {
    let n = graph.real_nodes().max(1) as f64;
    Rc::new(graph.mask.iter().map(|&m| if m { 1.0 / n } else { 0.0 }).collect())
}

/// Encoder on the tape; returns a `1 × (d+1)` row.
pub(crate) fn encode_on_tape<'a>(tape: &mut Tape<'a>, pv: &ParamVars, graph: &'a GraphTensors) -> Var {
    let x = tape.constant(&graph.features);
    let xw = tape.matmul(x, pv.get(BlockId::EncW1));
    let h1 = tape.spmatmul(graph.propagation.clone(), xw);
    let h1 = tape.relu(h1);
    let hw = tape.matmul(h1, pv.get(BlockId::EncW2));
    let h2 = tape.spmatmul(graph.propagation.clone(), hw);
    let pooled = tape.weighted_row_sum(h2, pool_weights(graph));
    tape.matmul(pooled, pv.get(BlockId::EncHead))
}

/// Decoder on the tape for a `B × (d+1)` batch; returns (flattened features, symmetrized logits).
pub(crate) fn decode_on_tape(tape: &mut Tape<'_>, pv: &ParamVars, zs: Var, n_max: usize) -> (Var, Var) {
    let h = tape.matmul(zs, pv.get(BlockId::DecW1));
    let h = tape.add_row_bias(h, pv.get(BlockId::DecB1));
    let h = tape.relu(h);
    let x = tape.matmul(h, pv.get(BlockId::DecWx));
    let x = tape.add_row_bias(x, pv.get(BlockId::DecBx));
    let l = tape.matmul(h, pv.get(BlockId::DecWa));
    let l = tape.add_row_bias(l, pv.get(BlockId::DecBa));
    let l = tape.symmetrize_blocks(l, n_max);
    (x, l)
}

/// Discriminator on the tape for a `B × (d+1)` batch; returns `B × 1` scores.
pub(crate) fn discriminate_on_tape(tape: &mut Tape<'_>, pv: &ParamVars, zs: Var) -> Var {
    let h = tape.matmul(zs, pv.get(BlockId::DisW1));
    let h = tape.add_row_bias(h, pv.get(BlockId::DisB1));
    let h = tape.relu(h);
    let h = tape.matmul(h, pv.get(BlockId::DisW2));
    let h = tape.add_row_bias(h, pv.get(BlockId::DisB2));
    let h = tape.relu(h);
    let o = tape.matmul(h, pv.get(BlockId::DisW3));
    let o = tape.add_row_bias(o, pv.get(BlockId::DisB3));
    tape.sigmoid(o)
}

/// Latent code of one graph.
pub fn encode(graph: &GraphTensors, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    check_graph_dims(graph, params.dims())?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let z = encode_on_tape(&mut tape, &pv, graph);
    Ok(tape.value(z).row(0).to_vec())
}

/// Decoder output for one latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// `n_max × k`
    pub x_hat: Array2<f64>,
    /// `n_max × n_max`, symmetric.
    pub a_logits: Array2<f64>,
}

pub fn decode(z: &[f64], params: &ModelParams) -> Result<Reconstruction, ModelError> {
    let dims = *params.dims();
    check_latent(z, &dims)?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let zs = tape.constant_owned(Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row"));
    let (x, l) = decode_on_tape(&mut tape, &pv, zs, dims.n_max);
    let x_hat = tape
        .value(x)
        .clone()
        .into_shape_with_order((dims.n_max, dims.k))
        .expect("decoder feature width");
    let a_logits = tape
        .value(l)
        .clone()
        .into_shape_with_order((dims.n_max, dims.n_max))
        .expect("decoder logit width");
    Ok(Reconstruction { x_hat, a_logits })
}

/// Probability that `z` came from the manifold prior.
pub fn discriminate(z: &[f64], params: &ModelParams) -> Result<f64, ModelError> {
    check_latent(z, params.dims())?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let zs = tape.constant_owned(Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row"));
    let p = discriminate_on_tape(&mut tape, &pv, zs);
    // A saturated f64 sigmoid rounds to exactly 0 or 1; keep the score open.
    Ok(tape.scalar(p).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

pub(crate) fn check_latent(z: &[f64], dims: &ModelDims) -> Result<(), ModelError> {
    if z.len() != dims.latent {
        return Err(ModelError::Dimension {
            what: "latent vector",
            expected: (1, dims.latent),
            got: (1, z.len()),
        });
    }
    Ok(())
}
