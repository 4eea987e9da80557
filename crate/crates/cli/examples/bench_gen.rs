//! Scratch probe: where single-step denoiser inference time goes.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsgen_core::backbone::{predict_x0, BackboneState};
use tsgen_core::schedule::{randn_batch, StepVector};
use tsgen_core::train::TrainConfig;

fn main() {
    let mut cfg = TrainConfig::defaults_for(24, 5);
    cfg.backbone.hidden = 64;
    let state = BackboneState::init(cfg.backbone, cfg.t_count, 0).unwrap();
    println!("params: {}", state.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for b in [64usize, 128, 256] {
        let x = randn_batch(b, 24, 5, &mut rng);
        let t = StepVector::constant(100, b);
        let _ = predict_x0(&state, &x, &t).unwrap(); // warm
        let reps = 3;
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = predict_x0(&state, &x, &t).unwrap();
        }
        let per = t0.elapsed().as_secs_f64() / reps as f64;
        println!("batch {b}: {:.1} ms/call, {:.3} ms/sample", per * 1e3, per * 1e3 / b as f64);
    }
}
