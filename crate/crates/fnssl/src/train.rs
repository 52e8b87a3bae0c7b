//! Mini-batch training with per-epoch checkpoints and a CSV loss log.

use std::path::{Path, PathBuf};

use fnssl_core::nn::{
    adam_step, clip_grad_norm, init_params, loss_and_grad, lr_at_epoch, AdamConfig, NnError, OptimizerState,
    ParamStore,
};
use fnssl_core::sim::scene_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Precision, Store};
use crate::config::RunConfig;
use crate::dataset::{pooled_targets, prepare_input, read_recording, spectrogram};
use crate::error::{Error, Result};
use crate::labels::LabelFile;
use crate::manifest::Manifest;

pub const LOSS_LOG: &str = "loss_log.csv";
pub const LAST_CHECKPOINT: &str = "last.fnss";

const SHUFFLE_TAG: u64 = 0x5348_5546;
const CROP_TAG: u64 = 0x4352_4f50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: u32,
    pub batch: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Mean batch loss of every epoch run in this call.
    pub epoch_losses: Vec<f64>,
    pub rows: Vec<LossRow>,
    pub checkpoint: PathBuf,
}

pub fn checkpoint_name(epoch: u32) -> String {
    format!("epoch{epoch:03}.fnss")
}

fn numeric(e: NnError) -> Error {
    match e {
        NnError::NonFiniteGradient(_) => Error::Numeric(e.to_string()),
        other => Error::Data(other.to_string()),
    }
}

/// Loss and gradient of one training item: a random crop (or the whole
/// clip) of recording `index`.
fn item_gradient<R: Store>(
    cfg: &RunConfig,
    manifest: &Manifest,
    params: &ParamStore<R>,
    epoch: u32,
    index: usize,
) -> Result<(f64, ParamStore<R>)> {
    let net = cfg.network_config();
    let stft_cfg = cfg.stft_config();
    let entry = &manifest.entries[index];
    let clip = read_recording(&manifest.resolve(&entry.wav_path), &stft_cfg, net.num_mics)?;
    let labels = LabelFile::load(&manifest.resolve(&entry.label_path))?;
    let spec = spectrogram(&clip, &stft_cfg)?;
    let input: Vec<R> = prepare_input(&spec, &net, cfg.network.norm_window)?;
    let frames = spec.num_frames();
    let pooled = net.pooled_frames(frames);
    if pooled == 0 {
        return Err(Error::Data(format!("{}: recording shorter than one pooling window", entry.id)));
    }
    let crop = cfg.train.crop_frames / net.pool_stride;
    let (p0, count) = if crop == 0 || crop >= pooled {
        (0, pooled)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(cfg.seed ^ CROP_TAG, ((epoch as u64) << 32) | index as u64));
        (rng.gen_range(0..=pooled - crop), crop)
    };
    let row = net.num_freqs * net.input_channels();
    let t0 = p0 * net.pool_stride;
    let t1 = (p0 + count) * net.pool_stride;
    let target = pooled_targets(&labels, &net, p0, count)?;
    let (loss, grads) = loss_and_grad(params, &net, &input[t0 * row..t1 * row], t1 - t0, &target).map_err(numeric)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss on {}", entry.id)));
    }
    Ok((loss, grads))
}

fn read_log(path: &Path) -> Result<Vec<LossRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| Error::corrupt(path, e.to_string()))
}

fn write_log(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::corrupt(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains on `manifest`, writing `epochNNN.fnss`, `last.fnss` and
/// `loss_log.csv` into `out`. With `resume`, continues from the epoch stored
/// in that checkpoint; the remaining trajectory is the same as that of an
/// uninterrupted run.
pub fn train(cfg: &RunConfig, manifest: &Manifest, out: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    manifest.require_nonempty()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resume = resume.map(Checkpoint::load).transpose()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.train.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cfg.train.precision {
        Precision::F32 => train_impl::<f32>(cfg, manifest, out, resume),
        Precision::F64 => train_impl::<f64>(cfg, manifest, out, resume),
    })
}

fn train_impl<R: Store>(
    cfg: &RunConfig,
    manifest: &Manifest,
    out: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainSummary> {
    let net = cfg.network_config();
    let (mut params, mut opt, start) = match resume {
        Some(ck) => {
            if ck.config != net {
                return Err(Error::Data("checkpoint network differs from the configuration".into()));
            }
            let params = ck
                .params::<R>()
                .ok_or_else(|| Error::Data("checkpoint precision differs from train.precision".into()))?
                .clone();
            let opt = ck.optimizer.ok_or_else(|| Error::Data("checkpoint has no optimizer state".into()))?;
            (params, opt, ck.epoch)
        }
        None => {
            let params = init_params::<R>(&net, cfg.seed).map_err(|e| Error::Config(e.to_string()))?;
            let opt = OptimizerState::new(&params, AdamConfig::default());
            (params, opt, 0)
        }
    };
    let log_path = out.join(LOSS_LOG);
    let mut rows: Vec<LossRow> = read_log(&log_path)?.into_iter().filter(|r| r.epoch < start).collect();
    let mut epoch_losses = Vec::new();
    let mut checkpoint = out.join(LAST_CHECKPOINT);
    let n = manifest.entries.len();
    for epoch in start..cfg.train.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(scene_seed(cfg.seed ^ SHUFFLE_TAG, epoch as u64)));
        let lr = lr_at_epoch(epoch);
        let mut total = 0.0;
        let batches: Vec<&[usize]> = order.chunks(cfg.train.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let items: Vec<(f64, ParamStore<R>)> = batch
                .par_iter()
                .map(|&i| item_gradient(cfg, manifest, &params, epoch, i))
                .collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for (l, g) in &items {
                loss += l;
                grads.add_assign(g);
            }
            let inv = 1.0 / batch.len() as f64;
            loss *= inv;
            grads.scale(R::from_f64(inv));
            let grad_norm = clip_grad_norm(&mut grads, cfg.train.clip_norm);
            adam_step(&mut params, &grads, &mut opt, lr).map_err(numeric)?;
            total += loss;
            rows.push(LossRow { epoch, batch: b, loss, lr, grad_norm });
            log::debug!("epoch {epoch} batch {b}: loss {loss:.6} grad norm {grad_norm:.4}");
        }
        let mean = total / batches.len() as f64;
        epoch_losses.push(mean);
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        let ck = Checkpoint {
            config: net,
            norm_window: cfg.network.norm_window,
            epoch: epoch + 1,
            weights: R::wrap(params.clone()),
            optimizer: Some(opt.clone()),
        };
        ck.save(&out.join(checkpoint_name(epoch + 1)))?;
        checkpoint = out.join(LAST_CHECKPOINT);
        ck.save(&checkpoint)?;
        write_log(&log_path, &rows)?;
    }
    Ok(TrainSummary { epoch_losses, rows, checkpoint })
}
