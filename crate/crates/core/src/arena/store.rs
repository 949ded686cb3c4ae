//! On-disk layout of a trained sector model:
//! `model.ckpt`, `sae_encoder.ckpt`, `sae_decoder.ckpt` and `meta.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArenaError, ArenaSpec, ContextCoder, Sae, TrainedArena};
use crate::analytics::SaturationEstimate;
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::trace::{write_atomic, FeatureStats, SectorId};

#[derive(Serialize, Deserialize)]
struct Meta {
    sector: SectorId,
    spec: ArenaSpec,
    stats: FeatureStats,
    saturation: SaturationEstimate,
    regular_qos: Vec<f64>,
    loss_history: Vec<f64>,
    coder: ContextCoder,
    sae_mse: f64,
    sae_iterations: usize,
    code_range: (f64, f64),
}

pub fn save_trained(model: &TrainedArena, dir: &Path) -> Result<(), ArenaError> {
    fs::create_dir_all(dir)?;
    save_checkpoint(&model.model, &dir.join("model.ckpt"))?;
    save_checkpoint(&model.sae.encoder, &dir.join("sae_encoder.ckpt"))?;
    save_checkpoint(&model.sae.decoder, &dir.join("sae_decoder.ckpt"))?;
    let meta = Meta {
        sector: model.sector,
        spec: model.spec.clone(),
        stats: model.stats.clone(),
        saturation: model.saturation,
        regular_qos: model.regular_qos.clone(),
        loss_history: model.loss_history.clone(),
        coder: model.sae.coder.clone(),
        sae_mse: model.sae.reconstruction_mse,
        sae_iterations: model.sae.iterations,
        code_range: model.sae.code_range,
    };
    let mut bytes = serde_json::to_vec_pretty(&meta)?;
    bytes.push(b'\n');
    write_atomic(&dir.join("meta.json"), &bytes)?;
    Ok(())
}

pub fn load_trained(dir: &Path) -> Result<TrainedArena, ArenaError> {
    let meta: Meta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let sae = Sae {
        coder: meta.coder,
        encoder: load_checkpoint(&dir.join("sae_encoder.ckpt"))?,
        decoder: load_checkpoint(&dir.join("sae_decoder.ckpt"))?,
        reconstruction_mse: meta.sae_mse,
        iterations: meta.sae_iterations,
        code_range: meta.code_range,
    };
    Ok(TrainedArena {
        sector: meta.sector,
        spec: meta.spec,
        model: load_checkpoint(&dir.join("model.ckpt"))?,
        sae,
        stats: meta.stats,
        saturation: meta.saturation,
        regular_qos: meta.regular_qos,
        loss_history: meta.loss_history,
    })
}
