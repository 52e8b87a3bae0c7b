//! DOA trajectory of a single recording.

use std::path::Path;

use fnssl_core::dsp::{Spectrogram, StftConfig};
use fnssl_core::features::{build_candidate_grid, pooled_label_frame, NormState};
use fnssl_core::nn::{infer, ParamStore, Real, StreamingNetwork};

use crate::checkpoint::{Checkpoint, Weights};
use crate::config::Mode;
use crate::dataset::{prepare_input, read_recording, spectrogram};
use crate::error::{Error, Result};
use crate::evaluate::decode_row;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time_s: f64,
    pub azimuth_deg: f64,
}

fn outputs<R: Real>(
    params: &ParamStore<R>,
    ck: &Checkpoint,
    spec: &Spectrogram,
    mode: Mode,
) -> Result<Vec<Vec<f64>>> {
    let net = ck.config;
    let to_f64 = |v: &[R]| v.iter().map(|x| x.to_f64()).collect::<Vec<f64>>();
    match mode {
        Mode::Online => {
            let norm = NormState::with_window(ck.norm_window).map_err(|e| Error::Data(e.to_string()))?;
            let mut stream = StreamingNetwork::new(params, net, norm).map_err(|e| Error::Data(e.to_string()))?;
            let mut rows = Vec::new();
            for t in 0..spec.num_frames() {
                let frame: Vec<&[_]> = (0..spec.num_channels()).map(|m| spec.frame(m, t)).collect();
                if let Some(row) = stream.push_stft_frame(&frame).map_err(|e| Error::Data(e.to_string()))? {
                    rows.push(to_f64(&row));
                }
            }
            Ok(rows)
        }
        Mode::Offline => {
            let x: Vec<R> = prepare_input(spec, &net, ck.norm_window)?;
            let out = infer(params, &net, &x, spec.num_frames()).map_err(|e| Error::Data(e.to_string()))?;
            Ok((0..out.frames).map(|p| to_f64(out.row(p))).collect())
        }
    }
}

/// One azimuth per pooled frame, time-stamped at the center of the frame's
/// label position.
///
/// Online mode streams STFT frames through the causal network one at a time
/// with recursive normalization; it needs a causal checkpoint. Offline mode
/// runs the whole clip at once.
pub fn infer_trajectory(
    ck: &Checkpoint,
    wav: &Path,
    mode: Mode,
    stft_cfg: &StftConfig,
    grid_resolution: f64,
    mic_spacing: f64,
) -> Result<Vec<TrajectoryPoint>> {
    if mode == Mode::Online && !ck.config.causal {
        return Err(Error::Data("online inference needs a causal (online) checkpoint".into()));
    }
    let clip = read_recording(wav, stft_cfg, ck.config.num_mics)?;
    let spec = spectrogram(&clip, stft_cfg)?;
    let grid = build_candidate_grid(grid_resolution, stft_cfg, mic_spacing).map_err(|e| Error::Config(e.to_string()))?;
    let rows = match &ck.weights {
        Weights::F32(p) => outputs(p, ck, &spec, mode)?,
        Weights::F64(p) => outputs(p, ck, &spec, mode)?,
    };
    rows.iter()
        .enumerate()
        .map(|(p, row)| {
            Ok(TrajectoryPoint {
                time_s: stft_cfg.frame_center_time(pooled_label_frame(p, ck.config.pool_stride)),
                azimuth_deg: decode_row(ck.config.head, row, &grid)?.azimuth(),
            })
        })
        .collect()
}

pub fn write_trajectory_csv(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let err = |e: csv::Error| Error::corrupt(path, e.to_string());
    w.write_record(["time_s", "est_azimuth_deg"]).map_err(err)?;
    for p in points {
        w.write_record([format!("{:.6}", p.time_s), format!("{:.6}", p.azimuth_deg)]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
