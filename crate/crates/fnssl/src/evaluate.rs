//! Frame-wise DOA evaluation over a manifest.

use std::path::Path;

use fnssl_core::dsp::StftConfig;
use fnssl_core::eval::{
    baseline_ipd_localize, decode_classification, decode_inner_product, decode_regression, masked_errors, vad_mask,
    MetricReport,
};
use fnssl_core::features::{build_candidate_grid, pooled_label_frame, CandidateGrid, Direction};
use fnssl_core::nn::{infer, Head, NetworkConfig, Real};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, Weights};
use crate::config::RunConfig;
use crate::dataset::{prepare_input, read_recording, spectrogram};
use crate::error::{Error, Result};
use crate::labels::LabelFile;
use crate::manifest::{Manifest, ManifestEntry};
use crate::wav::read_wav;

/// Source of the per-frame direction estimates.
#[derive(Debug, Clone)]
pub enum Predictor {
    Network(Box<Checkpoint>),
    /// Decodes the ground-truth DP-IPD labels themselves.
    Labels,
    /// Always the same azimuth.
    Fixed(f64),
    /// Non-learned phase matching against the candidate templates.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingResult {
    pub id: String,
    pub errors: Vec<f64>,
    /// `None` when the recording has no active frames.
    pub report: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recordings: Vec<RecordingResult>,
    pub all: MetricReport,
}

/// Direction of one output row of a network with head `head`.
pub fn decode_row(head: Head, row: &[f64], grid: &CandidateGrid) -> Result<Direction> {
    let decoded = match head {
        Head::DpIpd => decode_inner_product(row, grid),
        Head::Classification { .. } => {
            // Renormalize to absorb the rounding of a single-precision softmax.
            let sum: f64 = row.iter().sum();
            let p: Vec<f64> = row.iter().map(|v| v / sum).collect();
            decode_classification(&p)
        }
        Head::Regression => decode_regression([row[0], row[1]]),
    };
    decoded.map_err(|e| Error::Numeric(e.to_string()))
}

pub fn mic_spacing(entry: &ManifestEntry) -> f64 {
    let [a, b] = [entry.array[0], entry.array[1]];
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn network_directions<R: Real>(
    params: &fnssl_core::nn::ParamStore<R>,
    net: &NetworkConfig,
    norm_window: f64,
    spec: &fnssl_core::dsp::Spectrogram,
    grid: &CandidateGrid,
) -> Result<Vec<Direction>> {
    let x: Vec<R> = prepare_input(spec, net, norm_window)?;
    let out = infer(params, net, &x, spec.num_frames()).map_err(|e| Error::Data(e.to_string()))?;
    (0..out.frames)
        .map(|p| {
            let row: Vec<f64> = out.row(p).iter().map(|v| v.to_f64()).collect();
            decode_row(net.head, &row, grid)
        })
        .collect()
}

fn evaluate_one(
    cfg: &RunConfig,
    manifest: &Manifest,
    entry: &ManifestEntry,
    predictor: &Predictor,
    stride: usize,
) -> Result<RecordingResult> {
    let stft_cfg: StftConfig = cfg.stft_config();
    let labels = LabelFile::load(&manifest.resolve(&entry.label_path))?;
    let grid = build_candidate_grid(cfg.eval.grid_resolution, &stft_cfg, mic_spacing(entry))
        .map_err(|e| Error::Config(e.to_string()))?;
    let pooled = labels.num_frames() / stride;
    let truth: Vec<Direction> = (0..pooled).map(|p| labels.direction(pooled_label_frame(p, stride))).collect();
    let est: Vec<Direction> = match predictor {
        Predictor::Labels => (0..pooled)
            .map(|p| {
                let row: Vec<f64> = labels.frame(pooled_label_frame(p, stride)).iter().map(|&v| v as f64).collect();
                decode_row(Head::DpIpd, &row, &grid)
            })
            .collect::<Result<_>>()?,
        Predictor::Fixed(a) => {
            let d = Direction::new(*a).map_err(|e| Error::Config(e.to_string()))?;
            vec![d; pooled]
        }
        Predictor::Baseline => {
            let clip = read_recording(&manifest.resolve(&entry.wav_path), &stft_cfg, 2)?;
            baseline_ipd_localize(&spectrogram(&clip, &stft_cfg)?, &grid, stride)
        }
        Predictor::Network(ck) => {
            let clip = read_recording(&manifest.resolve(&entry.wav_path), &stft_cfg, ck.config.num_mics)?;
            let spec = spectrogram(&clip, &stft_cfg)?;
            match &ck.weights {
                Weights::F32(p) => network_directions(p, &ck.config, ck.norm_window, &spec, &grid)?,
                Weights::F64(p) => network_directions(p, &ck.config, ck.norm_window, &spec, &grid)?,
            }
        }
    };
    if est.len() != pooled {
        return Err(Error::Data(format!("{}: recording and labels disagree in length", entry.id)));
    }
    let direct = read_wav(&manifest.resolve(&entry.direct_path))?;
    let mask = vad_mask(direct.channel(0), &stft_cfg, stride, pooled, cfg.eval.vad_threshold_db);
    let errors = masked_errors(&est, &truth, &mask).map_err(|e| Error::Data(e.to_string()))?;
    let report = MetricReport::from_errors(&errors).ok();
    Ok(RecordingResult { id: entry.id.clone(), errors, report })
}

/// Evaluates every recording of `manifest` (in parallel) and pools the
/// errors of all active frames into the summary.
pub fn evaluate(cfg: &RunConfig, manifest: &Manifest, predictor: &Predictor) -> Result<EvalReport> {
    manifest.require_nonempty()?;
    let stride = match predictor {
        Predictor::Network(ck) => ck.config.pool_stride,
        _ => cfg.network.pool,
    };
    if let Predictor::Network(ck) = predictor {
        if ck.config.num_freqs + 1 > cfg.stft.fft_size / 2 + 1 {
            return Err(Error::Data("checkpoint expects more frequency bins than the STFT provides".into()));
        }
    }
    let recordings: Vec<RecordingResult> = manifest
        .entries
        .par_iter()
        .map(|e| evaluate_one(cfg, manifest, e, predictor, stride))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = recordings.iter().flat_map(|r| r.errors.iter().copied()).collect();
    let all = MetricReport::from_errors(&errors).map_err(|e| Error::Data(e.to_string()))?;
    Ok(EvalReport { recordings, all })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn write_metrics_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let err = |e: csv::Error| Error::corrupt(path, e.to_string());
    w.write_record(["recording_id", "frames", "mae_deg", "acc5", "acc10", "acc15"]).map_err(err)?;
    let rows = report
        .recordings
        .iter()
        .map(|r| (r.id.as_str(), r.errors.len(), r.report))
        .chain(std::iter::once(("ALL", report.all.frames, Some(report.all))));
    for (id, frames, m) in rows {
        w.write_record([
            id.to_string(),
            frames.to_string(),
            fmt(m.map(|m| m.mae_deg)),
            fmt(m.map(|m| m.acc5)),
            fmt(m.map(|m| m.acc10)),
            fmt(m.map(|m| m.acc15)),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
