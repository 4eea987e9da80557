//! Scratch harness: trains the desk-scale sines configuration and prints
//! the VDS/FDDS trajectory at milestones so the end-to-end budget can be
//! chosen. Not part of the test suite.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsgen_core::checkpoint::save_checkpoint;
use tsgen_core::data::{make_sines, Dataset};
use tsgen_core::eval::{discriminative_accuracy, fdds, vds};
use tsgen_core::schedule::generate;
use tsgen_core::train::{train_with, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.0005);
    let iters: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let gen_n: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(512);
    let save_dir = args.get(5).filter(|s| !s.is_empty()).cloned();
    let hidden: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(64);

    let real = make_sines(10_000, 24, 5, 0);

    // sampling-noise floors: independent draws from the same process
    for (label, n, s) in [("10000", 10_000usize, 99u64), ("2000", 2000, 98), ("512", 512, 97)] {
        let other = make_sines(n, 24, 5, s);
        println!(
            "floor 10000v{label}: vds {:.6} fdds {:.6}",
            vds(&real, &other, 50).unwrap(),
            fdds(&real, &other, 50).unwrap()
        );
    }

    let mut cfg = TrainConfig::defaults_for(24, 5);
    cfg.backbone.hidden = hidden;
    cfg.alpha = alpha;
    cfg.epochs = iters;
    cfg.seed = seed;
    println!("alpha {alpha} iters {iters} seed {seed} hidden {} gen_n {gen_n}", cfg.backbone.hidden);

    let sched = cfg.schedule.build(cfg.t_count);
    let started = Instant::now();
    let mut last = Instant::now();
    let (_state, _log) = train_with(&real, &cfg, |epoch, state, log| {
        if epoch % 100 == 0 {
            let r = log.records.last().unwrap();
            println!(
                "iter {epoch}: l0 {:.5} l_pop {:.5} ({:.1} ms/iter)",
                r.l0,
                r.l_pop,
                last.elapsed().as_secs_f64() * 10.0
            );
            last = Instant::now();
        }
        if [2000usize, 4000, 6000, 9000, 12000, 16000, 20000].contains(&epoch) || epoch == iters {
            let g0 = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            rng.set_stream(2);
            let syn = Dataset {
                samples: generate(state, gen_n, &sched, &mut rng).unwrap(),
                scaler: real.scaler.clone(),
            };
            println!(
                "milestone {epoch}: vds {:.6} fdds {:.6} (gen {:.1}s, total {:.1}s)",
                vds(&real, &syn, 50).unwrap(),
                fdds(&real, &syn, 50).unwrap(),
                g0.elapsed().as_secs_f64(),
                started.elapsed().as_secs_f64()
            );
            if epoch == iters {
                let d0 = Instant::now();
                let (da, da_std) = discriminative_accuracy(&real, &syn, 3, 0).unwrap();
                println!("final DA: {da:.4} +/- {da_std:.4} ({:.0}s)", d0.elapsed().as_secs_f64());
            }
            last = Instant::now();
        }
        Ok(())
    })
    .unwrap();
    if let Some(dir) = save_dir {
        save_checkpoint(std::path::Path::new(&dir), &_state, &real.scaler, &cfg).unwrap();
        println!("checkpoint saved to {dir}");
    }
    println!("done in {:.1}s", started.elapsed().as_secs_f64());
}
