//! Model persistence: a JSON manifest describing the architecture,
//! schedule, scaler, and parameter layout, next to a flat little-endian
//! f64 parameter blob. Reloading reproduces the saved state bit for bit,
//! so generation from a checkpoint matches generation from the live model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackboneState};
use crate::data::{read_f64_file, write_f64_file, Scaler};
use crate::error::{Error, Result};
use crate::schedule::ScheduleKind;
use crate::stats::BandwidthSet;
use crate::train::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub backbone: BackboneConfig,
    pub schedule: ScheduleKind,
    pub t_count: usize,
    pub scaler: Scaler,
    pub seed: u64,
    pub alpha: f64,
    pub bandwidths: BandwidthSet,
    /// Parameter names and shapes in flat-vector order.
    pub layout: Vec<(String, Vec<usize>)>,
}

/// A reloaded model with everything needed to generate and denormalize.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: BackboneState,
    pub schedule: ScheduleKind,
    pub scaler: Scaler,
    pub seed: u64,
    pub alpha: f64,
    pub bandwidths: BandwidthSet,
}

pub fn save_checkpoint(
    dir: &Path,
    state: &BackboneState,
    scaler: &Scaler,
    cfg: &TrainConfig,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        backbone: state.config,
        schedule: cfg.schedule,
        t_count: state.t_count,
        scaler: scaler.clone(),
        seed: cfg.seed,
        alpha: cfg.alpha,
        bandwidths: cfg.bandwidths.clone(),
        layout: state.param_layout(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::CorruptCheckpoint(format!("manifest serialization: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    write_f64_file(&dir.join(PARAMS_FILE), &state.param_vec())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&json)
        .map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", manifest_path.display())))?;

    let mut state = BackboneState::init(manifest.backbone, manifest.t_count, 0)
        .map_err(|e| Error::CorruptCheckpoint(format!("manifest config invalid: {e}")))?;
    if state.param_layout() != manifest.layout {
        return Err(Error::CorruptCheckpoint(
            "parameter layout does not match the architecture in the manifest".into(),
        ));
    }
    let flat = read_f64_file(&dir.join(PARAMS_FILE), state.param_count())
        .map_err(|e| Error::CorruptCheckpoint(format!("parameter blob: {e}")))?;
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::CorruptCheckpoint("non-finite parameter in blob".into()));
    }
    state
        .load_param_vec(&flat)
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    Ok(Checkpoint {
        state,
        schedule: manifest.schedule,
        scaler: manifest.scaler,
        seed: manifest.seed,
        alpha: manifest.alpha,
        bandwidths: manifest.bandwidths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_sines;
    use crate::schedule::generate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trained_pair() -> (BackboneState, Scaler, TrainConfig) {
        let ds = make_sines(16, 8, 2, 4);
        let mut cfg = TrainConfig::defaults_for(8, 2);
        cfg.epochs = 2;
        cfg.t_count = 12;
        cfg.batch = 8;
        cfg.backbone.hidden = 16;
        cfg.backbone.heads = 2;
        cfg.backbone.dit_blocks = 2;
        let (state, _) = crate::train::train(&ds, &cfg).unwrap();
        (state, ds.scaler, cfg)
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let (state, scaler, cfg) = trained_pair();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &state, &scaler, &cfg).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();

        assert_eq!(back.state.param_vec(), state.param_vec());
        assert_eq!(back.state.config, state.config);
        assert_eq!(back.state.t_count, state.t_count);
        assert_eq!(back.scaler, scaler);
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.alpha, cfg.alpha);
        assert_eq!(back.bandwidths, cfg.bandwidths);

        // generation from the reloaded model matches the live model exactly
        let sched = back.schedule.build(back.state.t_count);
        let mut rng_a = ChaCha8Rng::seed_from_u64(7);
        let mut rng_b = ChaCha8Rng::seed_from_u64(7);
        let live = generate(&state, 9, &sched, &mut rng_a).unwrap();
        let loaded = generate(&back.state, 9, &sched, &mut rng_b).unwrap();
        assert_eq!(live, loaded);
    }

    #[test]
    fn missing_and_corrupt_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint(_))));

        let (state, scaler, cfg) = trained_pair();
        save_checkpoint(dir.path(), &state, &scaler, &cfg).unwrap();

        // truncated parameter blob
        let blob = std::fs::read(dir.path().join(PARAMS_FILE)).unwrap();
        std::fs::write(dir.path().join(PARAMS_FILE), &blob[..blob.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint(_))));
        std::fs::write(dir.path().join(PARAMS_FILE), &blob).unwrap();

        // mangled manifest
        std::fs::write(dir.path().join(MANIFEST_FILE), "{not json").unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn non_finite_blob_rejected() {
        let (state, scaler, cfg) = trained_pair();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &state, &scaler, &cfg).unwrap();
        let mut flat = state.param_vec();
        flat[3] = f64::NAN;
        write_f64_file(&dir.path().join(PARAMS_FILE), &flat).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::CorruptCheckpoint(_))));
    }
}
