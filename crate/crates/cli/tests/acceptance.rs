//! Full-system acceptance gate: independent oracles for the statistical
//! estimators, closed-form schedule identities, backbone initialization
//! contracts, sampler statistics, metric sanity checks, a desk-scale
//! end-to-end quality run, the population-term ablation, and pipeline
//! reproducibility. Each test states its tolerance inline.

use std::process::Command;
use std::sync::LazyLock;
use std::time::Instant;

use ndarray::{s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsgen_core::backbone::{dit_chain, dit_forward, forward, BackboneConfig, BackboneState};
use tsgen_core::data::{make_sines, Dataset};
use tsgen_core::eval::{discriminative_accuracy, fdds, feature_distance_report, vds};
use tsgen_core::schedule::{
    cosine_schedule, forward_sample, generate, posterior_mean, randn_batch, reverse_step,
    sample_steps, Denoiser, StepSampling, StepVector,
};
use tsgen_core::stats::{cc_vector, l_pop, mmd, population_loss, BandwidthSet};
use tsgen_core::tape::Tape;
use tsgen_core::train::{loss_total, train, TrainConfig};
use tsgen_core::SeriesBatch;

// ---- shared constants for the end-to-end runs ----

/// Training budget shared by the headline quality run and every ablation
/// arm (the ablation compares objectives under identical seeds and
/// budget). Chosen from a convergence trace of the configuration below
/// on a single CPU core.
const E2E_ITERS: usize = 6000;
/// Hidden width for CPU-feasible end-to-end training.
const E2E_HIDDEN: usize = 64;
/// Samples generated per ablation arm for the distribution-shift score.
const ABL_SAMPLES: usize = 512;
/// Samples generated for the headline quality run.
const E2E_SAMPLES: usize = 2000;
/// Generation seed shared by every arm.
const GEN_SEED: u64 = 0;

// ---- helpers ----

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &ndarray::ArrayD<f64>, b: &ndarray::ArrayD<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Dataset over an explicit sample block, borrowing a scaler of the right
/// dimensionality from the sine generator.
fn dataset_from(samples: Array3<f64>) -> Dataset {
    let f = samples.dim().2;
    let l = samples.dim().1;
    Dataset { samples, scaler: make_sines(1, l.max(2), f, 0).scaler }
}

// =====================================================================
// 1. Kernel-distance estimator against an independent brute force.
// =====================================================================

/// Textbook double-loop evaluation: biased (V-statistic) squared MMD with
/// the same multi-window exponential kernel, written independently of the
/// library implementation.
fn brute_force_mmd(p: &[f64], q: &[f64], windows: &[f64]) -> f64 {
    let pair_mean = |a: &[f64], b: &[f64], w: f64| -> f64 {
        let mut acc = 0.0;
        for &x in a {
            for &y in b {
                acc += (-(x - y) * (x - y) / w).exp();
            }
        }
        acc / (a.len() as f64 * b.len() as f64)
    };
    let mut total = 0.0;
    for &w in windows {
        total += pair_mean(p, p, w) - 2.0 * pair_mean(p, q, w) + pair_mean(q, q, w);
    }
    total.max(0.0)
}

#[test]
fn mmd_estimator_matches_brute_force() {
    let started = Instant::now();
    let bw = BandwidthSet::default();
    let mut r = rng(42);
    for case in 0..100 {
        let shift: f64 = r.gen_range(-1.0..1.0);
        let scale: f64 = r.gen_range(0.2..1.5);
        let p: Vec<f64> = (0..64).map(|_| r.gen_range(-2.0..2.0)).collect();
        let q: Vec<f64> = if case % 10 == 0 {
            p.clone() // identical sets must agree at exactly zero as well
        } else {
            (0..64).map(|_| shift + scale * r.gen_range(-2.0..2.0)).collect()
        };
        let got = mmd(&p, &q, &bw).expect("mmd");
        let want = brute_force_mmd(&p, &q, &bw.windows);
        assert!(
            (got - want).abs() < 1e-9,
            "case {case}: estimator {got} vs brute force {want}"
        );
    }

    // Single-point closed form: sets {0} and {1} under one unit window
    // give 1 + 1 - 2 e^{-1}.
    let got = mmd(&[0.0], &[1.0], &BandwidthSet::new(vec![1.0])).expect("mmd");
    let want = 2.0 - 2.0 * (-1.0f64).exp();
    assert!((got - want).abs() < 1e-12, "closed form: {got} vs {want}");

    assert!(started.elapsed().as_secs_f64() < 10.0, "estimator oracle must stay under 10 s");
}

// =====================================================================
// 2. Per-sample correlation vector against a naive Pearson evaluation.
// =====================================================================

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

#[test]
fn cc_vector_matches_naive_pearson() {
    let mut r = rng(43);
    for case in 0..100 {
        let sample = Array2::from_shape_fn((24, 5), |_| r.gen_range(-3.0..3.0));
        let cc = cc_vector(sample.view()).expect("cc_vector");
        assert_eq!(cc.values.len(), 10, "5 features give 10 pairs");
        for (k, &(i, j)) in cc.pairs.iter().enumerate() {
            let x: Vec<f64> = sample.column(i).to_vec();
            let y: Vec<f64> = sample.column(j).to_vec();
            let want = naive_pearson(&x, &y);
            assert!(
                (cc.values[k] - want).abs() < 1e-12,
                "case {case} pair ({i},{j}): {} vs naive {want}",
                cc.values[k]
            );
        }
    }

    // Hand case: columns [1,2,3] and [1,3,2] correlate at exactly 1/2.
    let sample = Array2::from(vec![[1.0, 1.0], [2.0, 3.0], [3.0, 2.0]]);
    let cc = cc_vector(sample.view()).expect("cc_vector");
    assert!((cc.values[0] - 0.5).abs() < 1e-12, "hand case: {}", cc.values[0]);
}

// =====================================================================
// 3. Noise-schedule identities.
// =====================================================================

#[test]
fn schedule_identities() {
    for t_count in [10usize, 250, 500] {
        let s = cosine_schedule(t_count);

        // Signal level strictly decays.
        for t in 1..t_count {
            assert!(
                s.alpha_bar[t] < s.alpha_bar[t - 1],
                "T={t_count}: alpha_bar must strictly decrease at t={t}"
            );
        }

        // Cumulative product identity.
        let mut prod = 1.0;
        for t in 0..t_count {
            prod *= s.alpha[t];
            assert!(
                (s.alpha_bar[t] - prod).abs() < 1e-12,
                "T={t_count}: cumulative product violated at t={t}"
            );
        }

        // Posterior coefficient identity:
        // c0[t] + c_xt[t] * sqrt(ab[t]) == sqrt(ab[t-1]).
        for t in 1..t_count {
            let lhs = s.posterior_coef_x0[t] + s.posterior_coef_xt[t] * s.alpha_bar[t].sqrt();
            let rhs = s.alpha_bar[t - 1].sqrt();
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "T={t_count}: posterior coefficients violated at t={t}: {lhs} vs {rhs}"
            );
        }

        // Noise-free posterior mean through the array operation: feeding
        // x^t = sqrt(ab[t]) x0 must return sqrt(ab[t-1]) x0.
        let mut r = rng(1000 + t_count as u64);
        let x0 = randn_batch(4, 3, 2, &mut r);
        for t in [1usize, t_count / 2, t_count - 1] {
            let tv = StepVector::constant(t, 4);
            let xt = x0.mapv(|v| v * s.alpha_bar[t].sqrt());
            let got = posterior_mean(&xt, &x0, &tv, &s).expect("posterior_mean");
            let want = x0.mapv(|v| v * s.alpha_bar[t - 1].sqrt());
            let diff = got
                .iter()
                .zip(want.iter())
                .map(|(&a, &b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-10, "T={t_count} t={t}: noise-free posterior mean off by {diff}");
        }
    }
}

// =====================================================================
// 4. Forward marginal and reverse step match their analytic moments.
// =====================================================================

#[test]
fn forward_reverse_moments() {
    let started = Instant::now();
    let n = 100_000usize;
    let sched = cosine_schedule(250);
    let mut r = rng(44);

    let moments = |x: &SeriesBatch| -> (f64, f64) {
        let m = x.sum() / n as f64;
        let v = x.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        (m, v)
    };

    // Forward marginal at two representative steps: mean sqrt(ab) c,
    // variance 1 - ab.
    let c = 0.7;
    let x0 = Array3::from_elem((n, 1, 1), c);
    for t in [5usize, 125] {
        let tv = StepVector::constant(t, n);
        let eps = randn_batch(n, 1, 1, &mut r);
        let xt = forward_sample(&x0, &tv, &eps, &sched).expect("forward_sample");
        let (m, v) = moments(&xt);
        let ab = sched.alpha_bar[t];
        let se = ((1.0 - ab) / n as f64).sqrt();
        assert!(
            (m - ab.sqrt() * c).abs() < 4.0 * se,
            "forward t={t}: mean {m} vs {} (4 SE = {})",
            ab.sqrt() * c,
            4.0 * se
        );
        assert!(
            (v - (1.0 - ab)).abs() < 0.05 * (1.0 - ab),
            "forward t={t}: variance {v} vs {}",
            1.0 - ab
        );
    }

    // Reverse step at t=125 with fixed prediction and noisy state:
    // mean c0 a + c_xt b, variance beta[t].
    let (a, b) = (0.3, -0.5);
    let t = 125usize;
    let tv = StepVector::constant(t, n);
    let x0_hat = Array3::from_elem((n, 1, 1), a);
    let xt = Array3::from_elem((n, 1, 1), b);
    let noise = randn_batch(n, 1, 1, &mut r);
    let prev = reverse_step(&x0_hat, &xt, &tv, &noise, &sched).expect("reverse_step");
    let (m, v) = moments(&prev);
    let want_mean = sched.posterior_coef_x0[t] * a + sched.posterior_coef_xt[t] * b;
    let want_var = sched.posterior_var[t];
    let se = (want_var / n as f64).sqrt();
    assert!(
        (m - want_mean).abs() < 4.0 * se,
        "reverse: mean {m} vs {want_mean} (4 SE = {})",
        4.0 * se
    );
    assert!(
        (v - want_var).abs() < 0.05 * want_var,
        "reverse: variance {v} vs {want_var}"
    );

    assert!(started.elapsed().as_secs_f64() < 30.0, "moment checks must stay under 30 s");
}

// =====================================================================
// 5. Analytic gradients against central finite differences.
// =====================================================================

#[test]
fn loss_gradients_match_finite_differences() {
    let started = Instant::now();
    let bw = BandwidthSet::default();
    let (b, l, f) = (4usize, 6, 3);
    let mut r = rng(45);
    let x0 = randn_batch(b, l, f, &mut r);
    let x0_hat = randn_batch(b, l, f, &mut r);

    // (a) population-loss gradient with respect to the prediction.
    {
        let mut tape = Tape::new();
        let hat = tape.leaf_grad(x0_hat.clone().into_dyn());
        let lp = population_loss(&mut tape, &x0, hat, &bw).expect("population_loss");
        tape.backward(lp);
        let analytic = tape.grad(hat).expect("gradient").clone();

        let delta = 1e-5;
        for idx in 0..(b * l * f) {
            let (i, rest) = (idx / (l * f), idx % (l * f));
            let (j, k) = (rest / f, rest % f);
            let mut plus = x0_hat.clone();
            plus[[i, j, k]] += delta;
            let mut minus = x0_hat.clone();
            minus[[i, j, k]] -= delta;
            let numeric = (l_pop(&x0, &plus, &bw).unwrap() - l_pop(&x0, &minus, &bw).unwrap())
                / (2.0 * delta);
            let a = analytic.as_slice().unwrap()[idx];
            assert!(
                (a - numeric).abs() <= 1e-4 * a.abs().max(numeric.abs()) + 1e-8,
                "population loss coord {idx}: analytic {a}, numeric {numeric}"
            );
        }
    }

    // (b) combined-objective gradient with respect to the prediction.
    {
        let alpha = 0.01;
        let mut tape = Tape::new();
        let hat = tape.leaf_grad(x0_hat.clone().into_dyn());
        let target = tape.leaf(x0.clone().into_dyn());
        let diff = tape.sub(hat, target);
        let sq = tape.mul(diff, diff);
        let l0 = tape.mean_all(sq);
        let lp = population_loss(&mut tape, &x0, hat, &bw).expect("population_loss");
        let scaled = tape.scale(lp, alpha);
        let total = tape.add(l0, scaled);
        tape.backward(total);
        let analytic = tape.grad(hat).expect("gradient").clone();

        let delta = 1e-5;
        for idx in 0..(b * l * f) {
            let (i, rest) = (idx / (l * f), idx % (l * f));
            let (j, k) = (rest / f, rest % f);
            let mut plus = x0_hat.clone();
            plus[[i, j, k]] += delta;
            let mut minus = x0_hat.clone();
            minus[[i, j, k]] -= delta;
            let fp = loss_total(&x0, &plus, alpha, &bw).unwrap().0;
            let fm = loss_total(&x0, &minus, alpha, &bw).unwrap().0;
            let numeric = (fp - fm) / (2.0 * delta);
            let a = analytic.as_slice().unwrap()[idx];
            assert!(
                (a - numeric).abs() <= 1e-4 * a.abs().max(numeric.abs()) + 1e-8,
                "combined loss coord {idx}: analytic {a}, numeric {numeric}"
            );
        }
    }

    // (c) twenty sampled backbone parameters through the full training
    // objective on a tiny instance.
    {
        let alpha = 0.01;
        let cfg = BackboneConfig {
            length: l,
            features: f,
            hidden: 8,
            heads: 2,
            encoder_blocks: 1,
            dit_blocks: 1,
        };
        let t_count = 12;
        let mut state = BackboneState::init(cfg, t_count, 7).expect("init");
        let sched = cosine_schedule(t_count);
        let steps = StepVector { steps: vec![3, 7, 1, 9] };
        let eps = randn_batch(b, l, f, &mut r);
        let xt = forward_sample(&x0, &steps, &eps, &sched).expect("forward_sample");

        let objective = |state: &BackboneState| -> f64 {
            let mut tape = Tape::no_grad();
            let bound = state.bind(&mut tape);
            let x_in = tape.leaf(xt.clone().into_dyn());
            let y = forward(&mut tape, &bound, &cfg, x_in, &steps.steps);
            let y_val = tape
                .value(y)
                .clone()
                .into_dimensionality::<ndarray::Ix3>()
                .expect("rank 3");
            loss_total(&x0, &y_val, alpha, &bw).unwrap().0
        };

        // Analytic gradient in flat parameter order.
        let mut tape = Tape::new();
        let bound = state.bind(&mut tape);
        let x_in = tape.leaf(xt.clone().into_dyn());
        let y = forward(&mut tape, &bound, &cfg, x_in, &steps.steps);
        let target = tape.leaf(x0.clone().into_dyn());
        let diff = tape.sub(y, target);
        let sq = tape.mul(diff, diff);
        let l0 = tape.mean_all(sq);
        let lp = population_loss(&mut tape, &x0, y, &bw).expect("population_loss");
        let scaled = tape.scale(lp, alpha);
        let total = tape.add(l0, scaled);
        tape.backward(total);
        let mut analytic = Vec::with_capacity(state.param_count());
        for v in &bound.all {
            match tape.grad(*v) {
                Some(g) => analytic.extend(g.iter().copied()),
                None => analytic.resize(analytic.len() + tape.value(*v).len(), 0.0),
            }
        }
        drop(tape);

        let theta = state.param_vec();
        assert_eq!(analytic.len(), theta.len());
        let delta = 1e-5;
        let mut picker = rng(46);
        for _ in 0..20 {
            let idx = picker.gen_range(0..theta.len());
            let mut plus = theta.clone();
            plus[idx] += delta;
            state.load_param_vec(&plus).unwrap();
            let fp = objective(&state);
            let mut minus = theta.clone();
            minus[idx] -= delta;
            state.load_param_vec(&minus).unwrap();
            let fm = objective(&state);
            let numeric = (fp - fm) / (2.0 * delta);
            let a = analytic[idx];
            assert!(
                (a - numeric).abs() <= 1e-3 * a.abs().max(numeric.abs()) + 1e-9,
                "parameter {idx}: analytic {a}, numeric {numeric}"
            );
        }
    }

    assert!(started.elapsed().as_secs_f64() < 120.0, "gradient checks must stay under 2 min");
}

// =====================================================================
// 6. Step-conditioned blocks are exact identities at initialization.
// =====================================================================

#[test]
fn dit_blocks_initialize_to_identity() {
    let cfg = BackboneConfig {
        length: 5,
        features: 4,
        hidden: 16,
        heads: 4,
        encoder_blocks: 1,
        dit_blocks: 3,
    };
    let state = BackboneState::init(cfg, 8, 3).expect("init");
    let mut tape = Tape::new();
    let bound = state.bind(&mut tape);
    let mut r = rng(47);
    let h0 = randn_batch(3, 5, 16, &mut r).into_dyn();
    let c0 = randn_batch(3, 1, 16, &mut r)
        .index_axis(Axis(1), 0)
        .to_owned()
        .into_dyn();

    // Every freshly initialized block, in both channels, maps any input
    // to itself in double precision.
    for (name, dits) in [("temporal", &bound.temporal.dits), ("dimension", &bound.dimension.dits)]
    {
        assert_eq!(dits.len(), 3);
        for (i, d) in dits.iter().enumerate() {
            let h = tape.leaf(h0.clone());
            let c = tape.leaf(c0.clone());
            let y = dit_forward(&mut tape, d, cfg.heads, h, c);
            let diff = max_abs_diff(tape.value(y), &h0);
            assert!(diff < 1e-12, "{name} block {i}: identity violated by {diff}");
        }
    }

    // Stacked with skip accumulation, block i emits (i+1) times the input.
    let h = tape.leaf(h0.clone());
    let c = tape.leaf(c0.clone());
    let outs = dit_chain(&mut tape, &bound.temporal.dits, cfg.heads, h, c);
    assert_eq!(outs.len(), 3);
    for (i, &o) in outs.iter().enumerate() {
        let want = h0.mapv(|v| v * (i + 1) as f64);
        let diff = max_abs_diff(tape.value(o), &want);
        assert!(diff < 1e-12, "chain output {i}: expected {}x input, off by {diff}", i + 1);
    }
}

// =====================================================================
// 7. Shared-step sampling: constancy, uniformity, coverage.
// =====================================================================

#[test]
fn shared_step_sampling_uniformity() {
    // Entries within one draw are identical for any batch and range.
    let mut r = rng(48);
    for _ in 0..200 {
        let sv = sample_steps(17, 250, StepSampling::Shared, &mut r);
        assert!(sv.steps.iter().all(|&s| s == sv.steps[0]), "entries must match exactly");
        assert!(sv.steps[0] >= 1 && sv.steps[0] < 250, "draw outside [1, T-1]");
    }

    // Uniformity over {1..49} for T=50: chi-squared goodness of fit over
    // 10^4 draws. 84.03713371722348 is the 0.999 quantile of the
    // chi-squared distribution with 48 degrees of freedom, so a sound
    // sampler fails this with probability 0.001.
    let t_count = 50usize;
    let draws = 10_000usize;
    let mut counts = vec![0u64; t_count - 1];
    let mut r = rng(2024);
    for _ in 0..draws {
        let sv = sample_steps(3, t_count, StepSampling::Shared, &mut r);
        assert!(sv.steps.iter().all(|&s| s == sv.steps[0]));
        counts[sv.steps[0] - 1] += 1;
    }
    let expected = draws as f64 / (t_count - 1) as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(chi2 < 84.03713371722348, "chi-squared statistic {chi2} rejects uniformity");

    // Full coverage of the support within the same draw budget.
    assert!(
        counts.iter().all(|&c| c > 0),
        "all steps in [1, T-1] must be drawn within 10^4 iterations"
    );
}

// =====================================================================
// 8. Metric sanity: zeros on identical data, separability, hand cases.
// =====================================================================

#[test]
fn metric_sanity() {
    let d = make_sines(2000, 24, 5, 12);

    // Population scores vanish on identical datasets.
    let v = vds(&d, &d, 50).expect("vds");
    let fd = fdds(&d, &d, 50).expect("fdds");
    assert!(v.abs() < 1e-12, "vds on identical data: {v}");
    assert!(fd.abs() < 1e-12, "fdds on identical data: {fd}");

    // A random split of one pool is indistinguishable.
    let a = dataset_with_scaler(d.samples.slice(s![..1000, .., ..]).to_owned(), &d);
    let b = dataset_with_scaler(d.samples.slice(s![1000.., .., ..]).to_owned(), &d);
    let (da_split, _) = discriminative_accuracy(&a, &b, 5, 21).expect("split DA");
    assert!(da_split < 0.05, "random-split distinguishability too high: {da_split}");

    // Constant zeros against constant ones are fully separable.
    let zeros = dataset_from(Array3::zeros((50, 6, 2)));
    let ones = dataset_from(Array3::from_elem((50, 6, 2), 1.0));
    let (da_const, _) = discriminative_accuracy(&zeros, &ones, 5, 22).expect("constant DA");
    assert!(da_const >= 0.45, "separable constants scored only {da_const}");

    // All six feature/distance summaries vanish on identical datasets
    // (the pairing maps each sample to itself when the sides coincide).
    let e = make_sines(300, 10, 3, 5);
    let fdr = feature_distance_report(&e, &e, 3).expect("feature distances");
    for (name, value) in [
        ("mdd", fdr.mdd),
        ("acd", fdr.acd),
        ("sd", fdr.sd),
        ("kd", fdr.kd),
        ("ed", fdr.ed),
        ("dtw", fdr.dtw),
    ] {
        assert!(value.abs() < 1e-12, "{name} on identical data: {value}");
    }

    // Hand case: warping [0,0,0] onto [0,0,1] costs exactly 1 under the
    // absolute-difference local cost, and the straight-line distance of
    // the same pair is also 1.
    let real = dataset_from(Array3::from_shape_vec((1, 3, 1), vec![0.0, 0.0, 0.0]).unwrap());
    let syn = dataset_from(Array3::from_shape_vec((1, 3, 1), vec![0.0, 0.0, 1.0]).unwrap());
    let hand = feature_distance_report(&real, &syn, 0).expect("hand case");
    assert!((hand.dtw - 1.0).abs() < 1e-12, "dtw hand case: {}", hand.dtw);
    assert!((hand.ed - 1.0).abs() < 1e-12, "ed hand case: {}", hand.ed);

    // Chunk-free reference for the sampling chain: at a batch far below
    // the internal chunk size, a handwritten reverse recursion with the
    // same draw order reproduces the library path exactly.
    struct Shrink;
    impl Denoiser for Shrink {
        fn predict_x0(
            &self,
            xt: &SeriesBatch,
            _t: &StepVector,
        ) -> tsgen_core::Result<SeriesBatch> {
            Ok(xt.mapv(|v| 0.9 * v))
        }
        fn series_length(&self) -> usize {
            4
        }
        fn series_features(&self) -> usize {
            2
        }
    }
    let sched = cosine_schedule(12);
    let got = generate(&Shrink, 10, &sched, &mut rng(31)).expect("generate");
    let mut r = rng(31);
    let mut x = randn_batch(10, 4, 2, &mut r);
    for step in (0..12).rev() {
        let tv = StepVector::constant(step, 10);
        let x0_hat = Shrink.predict_x0(&x, &tv).unwrap();
        let noise = if step == 0 {
            Array3::zeros((10, 4, 2))
        } else {
            randn_batch(10, 4, 2, &mut r)
        };
        x = reverse_step(&x0_hat, &x, &tv, &noise, &sched).unwrap();
    }
    x.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    assert_eq!(got, x, "library chain deviates from the reference recursion");
}

fn dataset_with_scaler(samples: Array3<f64>, like: &Dataset) -> Dataset {
    Dataset { samples, scaler: like.scaler.clone() }
}

// =====================================================================
// 9 & 10. Desk-scale end-to-end quality and the population-term ablation.
// =====================================================================

struct Arm {
    seed: u64,
    alpha: f64,
    fdds: f64,
}

struct Runs {
    arms: Vec<Arm>,
    /// 2000 generated samples from the seed-0 arm trained with the
    /// population term, for the headline quality thresholds.
    headline: Dataset,
}

static REAL: LazyLock<Dataset> = LazyLock::new(|| make_sines(10_000, 24, 5, 0));

static RUNS: LazyLock<Runs> = LazyLock::new(|| {
    let real = &*REAL;
    let mut arms = Vec::new();
    let mut headline = None;
    for seed in 0..5u64 {
        for alpha in [0.0005f64, 0.0] {
            let mut cfg = TrainConfig::defaults_for(24, 5);
            cfg.backbone.hidden = E2E_HIDDEN;
            cfg.epochs = E2E_ITERS;
            cfg.alpha = alpha;
            cfg.seed = seed;
            let started = Instant::now();
            let (state, _log) = train(real, &cfg).expect("training run");
            let sched = cfg.schedule.build(cfg.t_count);
            let mut gen_rng = rng(GEN_SEED);
            gen_rng.set_stream(2);
            // The chain emits fixed-size chunks from one stream, so the
            // first ABL_SAMPLES of a longer run equal a shorter run and
            // every arm is scored on identically-seeded draws. The
            // seed-0 penalty arm doubles as the headline run and draws
            // the larger evaluation set.
            let n = if seed == 0 && alpha > 0.0 { E2E_SAMPLES } else { ABL_SAMPLES };
            let samples = generate(&state, n, &sched, &mut gen_rng).expect("generation");
            let abl = dataset_with_scaler(
                samples.slice(s![..ABL_SAMPLES, .., ..]).to_owned(),
                real,
            );
            let score = fdds(real, &abl, 50).expect("fdds");
            eprintln!(
                "arm seed {seed} alpha {alpha}: fdds {score:.6} ({:.0} s)",
                started.elapsed().as_secs_f64()
            );
            if n == E2E_SAMPLES {
                headline = Some(dataset_with_scaler(samples, real));
            }
            arms.push(Arm { seed, alpha, fdds: score });
        }
    }
    Runs { arms, headline: headline.expect("headline arm ran") }
});

#[test]
fn end_to_end_quality() {
    let real = &*REAL;
    let syn = &RUNS.headline;
    let v = vds(real, syn, 50).expect("vds");
    let fd = fdds(real, syn, 50).expect("fdds");
    let (da, da_std) = discriminative_accuracy(real, syn, 5, 0).expect("DA");
    eprintln!("end-to-end: vds {v:.6} fdds {fd:.6} da {da:.4} +/- {da_std:.4}");
    assert!(v < 0.01, "value-distribution shift too high: {v}");
    assert!(fd < 0.02, "correlation-distribution shift too high: {fd}");
    assert!(da < 0.15, "generated data too distinguishable: {da}");
}

#[test]
fn population_term_ablation() {
    let runs = &*RUNS;
    let mut wins = 0;
    for seed in 0..5u64 {
        let with = runs
            .arms
            .iter()
            .find(|a| a.seed == seed && a.alpha > 0.0)
            .expect("penalty arm");
        let without = runs
            .arms
            .iter()
            .find(|a| a.seed == seed && a.alpha == 0.0)
            .expect("plain arm");
        eprintln!(
            "seed {seed}: fdds with penalty {:.6}, without {:.6}",
            with.fdds, without.fdds
        );
        if with.fdds < without.fdds {
            wins += 1;
        }
    }
    assert!(wins >= 4, "penalty improved the shift score in only {wins}/5 replicates");
}

// =====================================================================
// 11. The whole pipeline is reproducible byte for byte.
// =====================================================================

#[test]
fn pipeline_reproducibility() {
    let bin = env!("CARGO_BIN_EXE_tsgen");
    let root = tempfile::tempdir().expect("tempdir");
    let path = |s: &str| root.path().join(s).display().to_string();

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().expect("spawn");
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    run(&[
        "prepare", "--out", &path("data"), "--n", "64", "--length", "8", "--features", "2",
        "--seed", "9",
    ]);

    for tag in ["a", "b"] {
        run(&[
            "train", "--data", &path("data"), "--out", &path(&format!("{tag}/train")),
            "--epochs", "30", "--batch", "16", "--hidden", "16", "--steps", "30",
            "--dit-blocks", "1", "--seed", "7", "--log-every", "0",
        ]);
        run(&[
            "generate", "--checkpoint", &path(&format!("{tag}/train/checkpoint")), "--n", "24",
            "--seed", "3", "--out", &path(&format!("{tag}/gen")),
        ]);
        run(&[
            "evaluate", "--real", &path("data"), "--syn", &path(&format!("{tag}/gen")),
            "--seed", "5", "--out", &path(&format!("{tag}/eval")),
        ]);
    }

    for file in [
        "gen/samples.bin",
        "gen/samples_denorm.bin",
        "gen/meta.json",
        "eval/report.json",
        "eval/report.txt",
    ] {
        let a = std::fs::read(root.path().join("a").join(file)).expect("first run output");
        let b = std::fs::read(root.path().join("b").join(file)).expect("second run output");
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}
