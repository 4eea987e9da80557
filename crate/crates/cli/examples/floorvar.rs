//! Scratch probe: spread of the distribution-shift metric between independent
//! draws of the same process, as a function of the reference-set size.

use tsgen_core::data::make_sines;
use tsgen_core::eval::fdds;

fn main() {
    let real = make_sines(10_000, 24, 5, 0);
    for n in [512usize, 768] {
        let vals: Vec<f64> = (101u64..113)
            .map(|s| fdds(&real, &make_sines(n, 24, 5, s), 50).unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        println!("10000 v {n}: mean {mean:.6} sd {:.6} min {min:.6} max {max:.6}", var.sqrt());
    }
}
