//! Three-phase adversarial training.
//!
//! Per batch: (1) encoder+decoder step on the reconstruction loss,
//! (2) discriminator step on prior samples vs. encoder outputs,
//! (3) encoder step against the discriminator. Baseline mode runs phase 1 only.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{discriminator_on_tape, encoder_adversarial_on_tape, reconstruction_on_tape};
use super::{
    check_graph_dims, encode, encode_on_tape, BlockId, ModelDims, ModelError, ModelParams,
    ParamVars, Part,
};
use crate::autodiff::{Tape, Var};
use crate::graph::GraphTensors;
use crate::manifold::{manifold_deviation, membership, sample_prior_with, CcmSpec, LatentPoint};
use crate::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub h1: usize,
    pub h2: usize,
    pub hd: usize,
    pub lr_ae: f64,
    pub lr_dis: f64,
    pub lr_enc: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Plain autoencoder: phases 2 and 3 are skipped.
    pub baseline_mode: bool,
    #[serde(default)]
    pub recon_weights: super::ReconWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            h1: 32,
            h2: 32,
            hd: 16,
            lr_ae: 1e-3,
            lr_dis: 1e-3,
            lr_enc: 5e-4,
            batch_size: 16,
            epochs: 300,
            seed: 0,
            baseline_mode: false,
            recon_weights: Default::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.h1 == 0 || self.h2 == 0 || self.hd == 0 {
            return Err("hidden sizes must be positive".into());
        }
        if !(self.lr_ae > 0.0 && self.lr_dis > 0.0 && self.lr_enc > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        Ok(())
    }

    pub fn dims(&self, n_max: usize, k: usize, spec: &CcmSpec) -> ModelDims {
        ModelDims {
            n_max,
            k,
            latent: spec.ambient_dim(),
            h1: self.h1,
            h2: self.h2,
            hd: self.hd,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {phase} loss at epoch {epoch}, batch {batch}: {value}")]
    NonFinite {
        epoch: usize,
        phase: &'static str,
        batch: usize,
        value: f64,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no graphs to train on")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Losses of one batch; adversarial entries are `None` in baseline mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLosses {
    pub reconstruction: f64,
    pub discriminator: Option<f64>,
    pub encoder: Option<f64>,
}

/// One training-log row. Epoch 0 describes the untrained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_ae: f64,
    pub l_dis: f64,
    pub l_enc: f64,
    pub mean_deviation: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch\tL_AE\tL_Dis\tL_Enc\tmean_deviation";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
            self.epoch, self.l_ae, self.l_dis, self.l_enc, self.mean_deviation
        )
    }
}

const AE_BLOCKS: [BlockId; 9] = [
    BlockId::EncW1,
    BlockId::EncW2,
    BlockId::EncHead,
    BlockId::DecW1,
    BlockId::DecB1,
    BlockId::DecWx,
    BlockId::DecBx,
    BlockId::DecWa,
    BlockId::DecBa,
];
const DIS_BLOCKS: [BlockId; 6] = [
    BlockId::DisW1,
    BlockId::DisB1,
    BlockId::DisW2,
    BlockId::DisB2,
    BlockId::DisW3,
    BlockId::DisB3,
];
const ENC_BLOCKS: [BlockId; 3] = [BlockId::EncW1, BlockId::EncW2, BlockId::EncHead];

fn shapes(ids: &[BlockId], dims: &ModelDims) -> Vec<(usize, usize)> {
    ids.iter().map(|b| b.shape(dims)).collect()
}

/// Training state: parameters, one Adam per phase, and the sampling stream.
pub struct Trainer {
    params: ModelParams,
    config: TrainConfig,
    spec: CcmSpec,
    opt_ae: Adam,
    opt_dis: Adam,
    opt_enc: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(dims: ModelDims, config: TrainConfig, spec: CcmSpec) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        spec.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        let params = ModelParams::init(dims, config.seed);
        Ok(Self::with_params(params, config, spec))
    }

    pub fn with_params(params: ModelParams, config: TrainConfig, spec: CcmSpec) -> Self {
        let dims = *params.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Self {
            opt_ae: Adam::new(config.lr_ae, &shapes(&AE_BLOCKS, &dims)),
            opt_dis: Adam::new(config.lr_dis, &shapes(&DIS_BLOCKS, &dims)),
            opt_enc: Adam::new(config.lr_enc, &shapes(&ENC_BLOCKS, &dims)),
            params,
            config,
            spec,
            rng,
            epoch: 0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn apply(opt: &mut Adam, params: &mut ModelParams, ids: &[BlockId], grads: &[Option<Array2<f64>>]) {
        let refs: Vec<Option<&Array2<f64>>> = grads.iter().map(|g| g.as_ref()).collect();
        let mut blocks = params.blocks_mut_for(ids);
        opt.update(&mut blocks, &refs);
    }

    /// Runs the three phases on one batch and updates the parameters in place.
    pub fn train_step(&mut self, batch: &[&GraphTensors], batch_index: usize) -> Result<PhaseLosses, TrainError> {
        if batch.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        for g in batch {
            check_graph_dims(g, self.params.dims())?;
        }
        let epoch = self.epoch;
        let non_finite = |phase, value: f64| TrainError::NonFinite {
            epoch,
            phase,
            batch: batch_index,
            value,
        };

        // Phase 1: encoder + decoder on reconstruction.
        let (l_ae, grads) = {
            let mut tape = Tape::new();
            let pv = ParamVars::register(&mut tape, &self.params, |b| b.part() != Part::Discriminator);
            let zs = encode_batch(&mut tape, &pv, batch);
            let loss = reconstruction_on_tape(&mut tape, &pv, batch, zs, self.config.recon_weights);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(non_finite("reconstruction", value));
            }
            let mut g = tape.backward(loss);
            let grads: Vec<_> = AE_BLOCKS.iter().map(|&b| g.take(pv.get(b))).collect();
            (value, grads)
        };
        Self::apply(&mut self.opt_ae, &mut self.params, &AE_BLOCKS, &grads);

        if self.config.baseline_mode {
            return Ok(PhaseLosses {
                reconstruction: l_ae,
                discriminator: None,
                encoder: None,
            });
        }

        // Phase 2: discriminator on prior samples vs. encoder outputs.
        let priors = sample_prior_with(&self.spec, batch.len(), &mut self.rng);
        let weights: Vec<f64> = priors.iter().map(|z| membership(z, &self.spec)).collect();
        let prior_matrix = rows_to_matrix(&priors);
        let (l_dis, grads) = {
            let mut tape = Tape::new();
            let pv = ParamVars::register(&mut tape, &self.params, |b| b.part() == Part::Discriminator);
            let zs = encode_batch(&mut tape, &pv, batch);
            let zp = tape.constant(&prior_matrix);
            let loss = discriminator_on_tape(&mut tape, &pv, zp, zs, &weights);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(non_finite("discriminator", value));
            }
            let mut g = tape.backward(loss);
            let grads: Vec<_> = DIS_BLOCKS.iter().map(|&b| g.take(pv.get(b))).collect();
            (value, grads)
        };
        Self::apply(&mut self.opt_dis, &mut self.params, &DIS_BLOCKS, &grads);

        // Phase 3: encoder against the discriminator.
        let (l_enc, grads) = {
            let mut tape = Tape::new();
            let pv = ParamVars::register(&mut tape, &self.params, |b| b.part() == Part::Encoder);
            let zs = encode_batch(&mut tape, &pv, batch);
            let loss = encoder_adversarial_on_tape(&mut tape, &pv, zs, batch.len());
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(non_finite("encoder", value));
            }
            let mut g = tape.backward(loss);
            let grads: Vec<_> = ENC_BLOCKS.iter().map(|&b| g.take(pv.get(b))).collect();
            (value, grads)
        };
        Self::apply(&mut self.opt_enc, &mut self.params, &ENC_BLOCKS, &grads);

        if !self.params.is_finite() {
            return Err(non_finite("parameter update", f64::NAN));
        }
        Ok(PhaseLosses {
            reconstruction: l_ae,
            discriminator: Some(l_dis),
            encoder: Some(l_enc),
        })
    }

    /// Mean deviation from the manifold of the current encoder outputs.
    pub fn mean_deviation(&self, graphs: &[GraphTensors]) -> Result<f64, TrainError> {
        let zs = graphs
            .iter()
            .map(|g| encode(g, &self.params))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(manifold_deviation(&zs, &self.spec)
            .map_err(|e| TrainError::Config(e.to_string()))?
            .mean)
    }

    /// Losses of the current parameters without updating anything.
    pub fn evaluate(&self, graphs: &[GraphTensors]) -> Result<EpochLog, TrainError> {
        let mut l_ae = 0.0;
        let mut l_dis = 0.0;
        let mut l_enc = 0.0;
        let mut eval_rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        eval_rng.set_stream(2);
        for chunk in graphs.chunks(self.config.batch_size) {
            let batch: Vec<&GraphTensors> = chunk.iter().collect();
            let mut tape = Tape::new();
            let pv = ParamVars::register(&mut tape, &self.params, |_| false);
            let zs = encode_batch(&mut tape, &pv, &batch);
            let w = chunk.len() as f64 / graphs.len() as f64;
            let l = reconstruction_on_tape(&mut tape, &pv, &batch, zs, self.config.recon_weights);
            l_ae += w * tape.scalar(l);
            if !self.config.baseline_mode {
                let priors = sample_prior_with(&self.spec, batch.len(), &mut eval_rng);
                let weights: Vec<f64> = priors.iter().map(|z| membership(z, &self.spec)).collect();
                let zp = tape.constant_owned(rows_to_matrix(&priors));
                let ld = discriminator_on_tape(&mut tape, &pv, zp, zs, &weights);
                l_dis += w * tape.scalar(ld);
                let le = encoder_adversarial_on_tape(&mut tape, &pv, zs, batch.len());
                l_enc += w * tape.scalar(le);
            }
        }
        if self.config.baseline_mode {
            l_dis = f64::NAN;
            l_enc = f64::NAN;
        }
        Ok(EpochLog {
            epoch: self.epoch,
            l_ae,
            l_dis,
            l_enc,
            mean_deviation: self.mean_deviation(graphs)?,
        })
    }

    /// One pass over `graphs` in a seeded shuffled order.
    pub fn run_epoch(&mut self, graphs: &[GraphTensors]) -> Result<EpochLog, TrainError> {
        if graphs.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&GraphTensors> = chunk.iter().map(|&i| &graphs[i]).collect();
            let l = self.train_step(&batch, bi)?;
            sums.0 += l.reconstruction;
            sums.1 += l.discriminator.unwrap_or(f64::NAN);
            sums.2 += l.encoder.unwrap_or(f64::NAN);
            batches += 1;
        }
        let n = batches as f64;
        Ok(EpochLog {
            epoch: self.epoch,
            l_ae: sums.0 / n,
            l_dis: sums.1 / n,
            l_enc: sums.2 / n,
            mean_deviation: self.mean_deviation(graphs)?,
        })
    }

    /// Full training run. The log starts with the untrained model (epoch 0).
    pub fn fit(
        &mut self,
        graphs: &[GraphTensors],
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>, TrainError> {
        let first = self.evaluate(graphs)?;
        on_epoch(&first);
        let mut log = vec![first];
        for _ in 0..self.config.epochs {
            let row = self.run_epoch(graphs)?;
            on_epoch(&row);
            log.push(row);
        }
        Ok(log)
    }
}

fn encode_batch<'a>(tape: &mut Tape<'a>, pv: &ParamVars, batch: &[&'a GraphTensors]) -> Var {
    let rows: Vec<Var> = batch.iter().map(|g| encode_on_tape(tape, pv, g)).collect();
    tape.stack_rows(&rows)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j])
}

/// Encodes every graph; output follows `(user_id, date)` order.
pub fn embed_dataset(
    graphs: &[(String, chrono::NaiveDate, GraphTensors)],
    params: &ModelParams,
) -> Result<Vec<LatentPoint>, ModelError> {
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ua, da, _) = &graphs[a];
        let (ub, db, _) = &graphs[b];
        crate::ingest::user_sort_key(ua)
            .cmp(&crate::ingest::user_sort_key(ub))
            .then(da.cmp(db))
    });
    order
        .into_iter()
        .map(|i| {
            let (user_id, date, g) = &graphs[i];
            Ok(LatentPoint {
                z: encode(g, params)?,
                user_id: user_id.clone(),
                date: *date,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_graphs(count: usize, n_max: usize, k: usize) -> Vec<GraphTensors> {
        (0..count)
            .map(|s| {
                let n = 3 + s % (n_max - 3);
                let mut adj = Array2::<u32>::zeros((n, n));
                for i in 0..n - 1 {
                    adj[[i, (i + 1 + s) % n]] = 1;
                }
                let x = Array2::from_shape_fn((n, k), |(i, j)| ((i * 3 + j * 5 + s) % 7) as f64 / 7.0);
                GraphTensors::from_parts(&x, &adj, n_max)
            })
            .collect()
    }

    fn config(baseline: bool) -> TrainConfig {
        TrainConfig {
            h1: 8,
            h2: 8,
            hd: 8,
            batch_size: 4,
            epochs: 3,
            seed: 11,
            baseline_mode: baseline,
            lr_ae: 5e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let graphs = tiny_graphs(10, 8, 4);
        let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        let run = || {
            let cfg = config(false);
            let dims = cfg.dims(8, 4, &spec);
            let mut t = Trainer::new(dims, cfg, spec).unwrap();
            let log = t.fit(&graphs, |_| {}).unwrap();
            (t.into_params(), log)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.len(), 4);
    }

    #[test]
    fn baseline_reconstruction_decreases() {
        let graphs = tiny_graphs(10, 8, 4);
        let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        let mut cfg = config(true);
        cfg.batch_size = 10;
        cfg.lr_ae = 1e-3;
        let dims = cfg.dims(8, 4, &spec);
        let mut t = Trainer::new(dims, cfg, spec).unwrap();
        let refs: Vec<&GraphTensors> = graphs.iter().collect();
        let mut last = f64::INFINITY;
        for step in 0..50 {
            let l = t.train_step(&refs, step).unwrap();
            assert!(l.discriminator.is_none());
            assert!(l.reconstruction < last, "step {step}: {} ≥ {last}", l.reconstruction);
            last = l.reconstruction;
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        let cfg = config(false);
        let mut t = Trainer::new(cfg.dims(8, 4, &spec), cfg, spec).unwrap();
        assert!(matches!(t.train_step(&[], 0), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn non_finite_input_aborts_with_location() {
        let mut graphs = tiny_graphs(4, 8, 4);
        graphs[2].features[[0, 0]] = f64::NAN;
        let spec = CcmSpec::new(1.0, 2, 1.0).unwrap();
        let cfg = config(true);
        let mut t = Trainer::new(cfg.dims(8, 4, &spec), cfg, spec).unwrap();
        let refs: Vec<&GraphTensors> = graphs.iter().collect();
        match t.train_step(&refs, 7) {
            Err(TrainError::NonFinite { phase, batch, .. }) => {
                assert_eq!(phase, "reconstruction");
                assert_eq!(batch, 7);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
