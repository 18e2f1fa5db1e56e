//! Central-difference check of the reverse-mode gradients.

use ndarray::Array2;
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{discriminator_on_tape, encoder_adversarial_on_tape, reconstruction_on_tape};
use super::{check_graph_dims, check_latent, encode_on_tape, BlockId, ModelError, ModelParams, ParamVars, Part, ReconWeights};
use crate::autodiff::{Tape, Var};
use crate::graph::GraphTensors;
use crate::manifold::{membership, CcmSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Reconstruction,
    Discriminator,
    EncoderAdversarial,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Reconstruction, LossKind::Discriminator, LossKind::EncoderAdversarial];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Reconstruction => "reconstruction",
            LossKind::Discriminator => "discriminator",
            LossKind::EncoderAdversarial => "encoder_adversarial",
        }
    }

    /// Blocks the loss depends on.
    pub fn blocks(self) -> Vec<BlockId> {
        BlockId::ALL
            .into_iter()
            .filter(|b| match self {
                LossKind::Reconstruction => b.part() != Part::Discriminator,
                _ => b.part() != Part::Decoder,
            })
            .collect()
    }
}

/// One graph plus one prior sample.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub graph: GraphTensors,
    pub z_prior: Vec<f64>,
    pub spec: CcmSpec,
    pub weights: ReconWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    /// Entries checked per block; `None` checks every entry.
    pub samples_per_block: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-8,
            samples_per_block: Some(64),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub loss: LossKind,
    pub block: BlockId,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&BlockError> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |b| b.max_rel_error)
    }
}

fn build_loss<'a>(tape: &mut Tape<'a>, pv: &ParamVars, inst: &'a GradCheckInstance, kind: LossKind) -> Var {
    let z = encode_on_tape(tape, pv, &inst.graph);
    let zs = tape.stack_rows(&[z]);
    match kind {
        LossKind::Reconstruction => reconstruction_on_tape(tape, pv, &[&inst.graph], zs, inst.weights),
        LossKind::Discriminator => {
            let zp = tape.constant_owned(
                Array2::from_shape_vec((1, inst.z_prior.len()), inst.z_prior.clone()).expect("row"),
            );
            let w = membership(&inst.z_prior, &inst.spec);
            discriminator_on_tape(tape, pv, zp, zs, &[w])
        }
        LossKind::EncoderAdversarial => encoder_adversarial_on_tape(tape, pv, zs, 1),
    }
}

fn check_instance(params: &ModelParams, inst: &GradCheckInstance) -> Result<(), ModelError> {
    check_graph_dims(&inst.graph, params.dims())?;
    check_latent(&inst.z_prior, params.dims())
}

pub fn loss_value(params: &ModelParams, inst: &GradCheckInstance, kind: LossKind) -> Result<f64, ModelError> {
    check_instance(params, inst)?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |_| false);
    let l = build_loss(&mut tape, &pv, inst, kind);
    Ok(tape.scalar(l))
}

/// Reverse-mode gradients of `kind` for every block in `kind.blocks()`.
pub fn analytic_gradients(
    params: &ModelParams,
    inst: &GradCheckInstance,
    kind: LossKind,
) -> Result<Vec<(BlockId, Array2<f64>)>, ModelError> {
    check_instance(params, inst)?;
    let blocks = kind.blocks();
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, |b| blocks.contains(&b));
    let l = build_loss(&mut tape, &pv, inst, kind);
    let mut grads = tape.backward(l);
    Ok(blocks
        .iter()
        .map(|&b| {
            let g = grads
                .take(pv.get(b))
                .unwrap_or_else(|| Array2::zeros(params.block(b).dim()));
            (b, g)
        })
        .collect())
}

pub fn grad_check(
    params: &ModelParams,
    inst: &GradCheckInstance,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, ModelError> {
    grad_check_with(params, inst, cfg, analytic_gradients)
}

/// Like [`grad_check`] with a caller-supplied gradient routine.
pub fn grad_check_with<F>(
    params: &ModelParams,
    inst: &GradCheckInstance,
    cfg: &GradCheckConfig,
    analytic: F,
) -> Result<GradCheckReport, ModelError>
where
    F: Fn(&ModelParams, &GradCheckInstance, LossKind) -> Result<Vec<(BlockId, Array2<f64>)>, ModelError>,
{
    let mut report = GradCheckReport::default();
    if params.num_params() == 0 {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = params.clone();
    for kind in LossKind::ALL {
        for (block, grad) in analytic(params, inst, kind)? {
            let len = grad.len();
            if len == 0 {
                continue;
            }
            let picks: Vec<usize> = match cfg.samples_per_block {
                Some(n) if n < len => sample(&mut rng, len, n).into_vec(),
                _ => (0..len).collect(),
            };
            let cols = grad.ncols();
            let mut worst = 0.0f64;
            for &flat in &picks {
                let idx = [flat / cols, flat % cols];
                let orig = params.block(block)[idx];
                probe.block_mut(block)[idx] = orig + cfg.step;
                let plus = loss_value(&probe, inst, kind)?;
                probe.block_mut(block)[idx] = orig - cfg.step;
                let minus = loss_value(&probe, inst, kind)?;
                probe.block_mut(block)[idx] = orig;
                let fd = (plus - minus) / (2.0 * cfg.step);
                let a = grad[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(cfg.floor);
                worst = worst.max(rel);
            }
            report.blocks.push(BlockError {
                loss: kind,
                block,
                max_rel_error: worst,
                checked: picks.len(),
            });
        }
    }
    if let Some(w) = report.worst() {
        if !(w.max_rel_error < cfg.tolerance) {
            return Err(ModelError::CheckFailed {
                loss: w.loss.name(),
                block: w.block.name(),
                rel_error: w.max_rel_error,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn instance(n_max: usize, k: usize) -> GradCheckInstance {
        let n = n_max - 2;
        let mut adj = Array2::<u32>::zeros((n, n));
        for i in 0..n - 1 {
            adj[[i, i + 1]] = 1 + (i % 2) as u32;
        }
        adj[[0, n - 1]] = 1;
        let x = Array2::from_shape_fn((n, k), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 7.0 + 0.05);
        GradCheckInstance {
            graph: GraphTensors::from_parts(&x, &adj, n_max),
            z_prior: vec![0.6, 0.0, 0.8],
            spec: CcmSpec::new(1.0, 2, 1.0).unwrap(),
            weights: ReconWeights::default(),
        }
    }

    fn dims() -> ModelDims {
        ModelDims {
            n_max: 8,
            k: 4,
            latent: 3,
            h1: 6,
            h2: 5,
            hd: 4,
        }
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let params = ModelParams::init(dims(), 21);
        let cfg = GradCheckConfig {
            samples_per_block: None,
            ..Default::default()
        };
        let report = grad_check(&params, &instance(8, 4), &cfg).unwrap();
        assert!(report.max_rel_error() < 1e-4);
        assert_eq!(report.blocks.len(), 9 + 9 + 9);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let params = ModelParams::init(dims(), 21);
        let corrupt = |p: &ModelParams, i: &GradCheckInstance, k: LossKind| {
            let mut g = analytic_gradients(p, i, k)?;
            for (b, arr) in &mut g {
                if *b == BlockId::EncW2 {
                    *arr *= 2.0;
                }
            }
            Ok(g)
        };
        match grad_check_with(&params, &instance(8, 4), &GradCheckConfig::default(), corrupt) {
            Err(ModelError::CheckFailed { block, .. }) => assert_eq!(block, "enc.w2"),
            other => panic!("expected CheckFailed, got {other:?}"),
        }
    }

    #[test]
    fn nothing_to_check_passes_vacuously() {
        let params = ModelParams::init(dims(), 1);
        let none = |_: &ModelParams, _: &GradCheckInstance, _: LossKind| Ok(Vec::new());
        let report = grad_check_with(&params, &instance(8, 4), &GradCheckConfig::default(), none).unwrap();
        assert!(report.blocks.is_empty());
        assert_eq!(report.max_rel_error(), 0.0);
    }
}
