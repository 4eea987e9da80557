//! Cross-correlation statistics, kernel maximum mean discrepancy, the
//! population-level distribution-shift loss, and histogram divergence.
//!
//! The population loss compares, for every feature pair, the batch
//! distribution of per-sample Pearson coefficients in the real data
//! against the same distribution in the model output, using a
//! multi-bandwidth RBF squared-MMD, and averages over pairs.

use ndarray::{ArrayView2, Axis, Ix3};

use crate::data::SeriesBatch;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

/// Variance below this (relative to the squared mean) counts as zero for
/// correlation purposes; it absorbs float noise from constant series.
pub fn is_degenerate(var: f64, mean: f64) -> bool {
    var <= 1e-24 * (mean * mean).max(1.0)
}

/// Pearson correlation of two equal-length series using population
/// moments: `(E[xy] - E[x]E[y]) / (sigma_x sigma_y)`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    assert!(x.len() >= 2, "pearson: need at least 2 points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cov = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let da = a - mx;
        let db = b - my;
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    vx /= n;
    vy /= n;
    cov /= n;
    if is_degenerate(vx, mx) || is_degenerate(vy, my) {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Pearson coefficients for every feature pair of one `[L, F]` sample, in
/// lexicographic pair order. Degenerate pairs (zero variance on either
/// side) carry value 0 and a flag instead of an error.
#[derive(Debug, Clone)]
pub struct CCVector {
    pub values: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub degenerate: Vec<bool>,
}

impl CCVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn cc_vector(sample: ArrayView2<f64>) -> Result<CCVector> {
    let (l, f) = sample.dim();
    if f < 2 {
        return Err(Error::NoPairs(f));
    }
    assert!(l >= 2, "cc_vector: need at least 2 time points");
    let n = l as f64;
    // shared per-dimension moments
    let mut means = vec![0.0; f];
    let mut vars = vec![0.0; f];
    for k in 0..f {
        let col = sample.column(k);
        let m = col.sum() / n;
        means[k] = m;
        vars[k] = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
    }
    let mut values = Vec::with_capacity(f * (f - 1) / 2);
    let mut pairs = Vec::with_capacity(values.capacity());
    let mut degenerate = Vec::with_capacity(values.capacity());
    for i in 0..f {
        for j in i + 1..f {
            pairs.push((i, j));
            if is_degenerate(vars[i], means[i]) || is_degenerate(vars[j], means[j]) {
                values.push(0.0);
                degenerate.push(true);
                continue;
            }
            let cov = sample
                .column(i)
                .iter()
                .zip(sample.column(j).iter())
                .map(|(&a, &b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / n;
            values.push((cov / (vars[i].sqrt() * vars[j].sqrt())).clamp(-1.0, 1.0));
            degenerate.push(false);
        }
    }
    Ok(CCVector { values, pairs, degenerate })
}

/// RBF bandwidths. The kernel is `exp(-||a - b||^2 / w)`, so each window
/// divides the squared distance directly.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BandwidthSet {
    pub windows: Vec<f64>,
}

impl BandwidthSet {
    pub fn new(windows: Vec<f64>) -> Self {
        assert!(!windows.is_empty(), "bandwidth set must be nonempty");
        assert!(windows.iter().all(|&w| w > 0.0), "bandwidths must be positive");
        BandwidthSet { windows }
    }
}

impl Default for BandwidthSet {
    /// Fixed small-to-unit bandwidths spanning the [-1, 1] range that
    /// correlation values live in; fixed (not data-dependent) so the loss
    /// is deterministic across batches.
    fn default() -> Self {
        BandwidthSet::new(vec![0.005, 0.01, 0.05, 0.1, 0.5, 1.0])
    }
}

fn mean_kernel(a: ArrayView2<f64>, b: ArrayView2<f64>, w: f64) -> f64 {
    let mut total = 0.0;
    for ra in a.rows() {
        for rb in b.rows() {
            let d2: f64 = ra.iter().zip(rb.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum();
            total += (-d2 / w).exp();
        }
    }
    total / (a.nrows() * b.nrows()) as f64
}

/// Squared MMD between two point sets (rows), summed over bandwidths:
/// `sum_w [mean k_w(P,P) - 2 mean k_w(P,Q) + mean k_w(Q,Q)]`, clamped at 0.
pub fn mmd_nd(p: ArrayView2<f64>, q: ArrayView2<f64>, bw: &BandwidthSet) -> Result<f64> {
    if p.nrows() == 0 || q.nrows() == 0 {
        return Err(Error::EmptySampleSet);
    }
    assert_eq!(p.ncols(), q.ncols(), "mmd: dimension mismatch");
    let mut total = 0.0;
    for &w in &bw.windows {
        total += mean_kernel(p, p, w) - 2.0 * mean_kernel(p, q, w) + mean_kernel(q, q, w);
    }
    Ok(total.max(0.0))
}

/// Squared MMD between two scalar sample sets.
pub fn mmd(p: &[f64], q: &[f64], bw: &BandwidthSet) -> Result<f64> {
    let pv = ArrayView2::from_shape((p.len(), 1), p).expect("column view");
    let qv = ArrayView2::from_shape((q.len(), 1), q).expect("column view");
    mmd_nd(pv, qv, bw)
}

fn mean_kernel_slice(a: &[f64], b: &[f64], w: f64) -> f64 {
    let mut total = 0.0;
    for &x in a {
        for &y in b {
            total += (-(x - y) * (x - y) / w).exp();
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Tape-recorded squared MMD between constant samples `p` and a 1-D
/// variable `q`; only the `q`-dependent terms touch the tape.
fn mmd_tape(tape: &mut Tape, p: &[f64], q: Var, bw: &BandwidthSet) -> Var {
    let nq = tape.shape(q)[0];
    let mut pp = 0.0;
    for &w in &bw.windows {
        pp += mean_kernel_slice(p, p, w);
    }
    let p_row = tape.leaf(
        ndarray::Array2::from_shape_vec((1, p.len()), p.to_vec())
            .expect("row leaf")
            .into_dyn(),
    );
    let q_col = tape.reshape(q, &[nq, 1]);
    let q_row = tape.reshape(q, &[1, nq]);
    let dpq = tape.sub(q_col, p_row);
    let dpq2 = tape.mul(dpq, dpq);
    let dqq = tape.sub(q_col, q_row);
    let dqq2 = tape.mul(dqq, dqq);
    let mut acc: Option<Var> = None;
    for &w in &bw.windows {
        let spq = tape.scale(dpq2, -1.0 / w);
        let kpq = tape.exp(spq);
        let mpq = tape.mean_all(kpq);
        let sqq = tape.scale(dqq2, -1.0 / w);
        let kqq = tape.exp(sqq);
        let mqq = tape.mean_all(kqq);
        let neg2 = tape.scale(mpq, -2.0);
        let term = tape.add(neg2, mqq);
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    tape.add_scalar(acc.expect("nonempty bandwidth set"), pp)
}

/// Population-level loss on the tape: for each feature pair, the MMD
/// between the real batch's per-sample correlation values and the model
/// batch's, averaged over pairs. Degenerate per-sample values are dropped
/// from either side; a pair with an empty side is excluded and the
/// average renormalized.
pub fn population_loss(
    tape: &mut Tape,
    x0: &SeriesBatch,
    x0_hat: Var,
    bw: &BandwidthSet,
) -> Result<Var> {
    let (b, l, f) = x0.dim();
    if tape.shape(x0_hat) != [b, l, f] {
        return Err(Error::ShapeMismatch(format!(
            "x0 {:?} vs x0_hat {:?}",
            (b, l, f),
            tape.shape(x0_hat)
        )));
    }
    if b < 2 {
        return Err(Error::InsufficientBatch(b));
    }
    if f < 2 {
        return Err(Error::NoPairs(f));
    }
    let m_pairs = f * (f - 1) / 2;

    // Real-side correlation distributions, degenerate values dropped.
    let mut p_vals: Vec<Vec<f64>> = vec![Vec::with_capacity(b); m_pairs];
    for s in 0..b {
        let cc = cc_vector(x0.index_axis(Axis(0), s))?;
        for (m, (&v, &deg)) in cc.values.iter().zip(cc.degenerate.iter()).enumerate() {
            if !deg {
                p_vals[m].push(v);
            }
        }
    }

    // Model-side degenerate (sample, dim) map, from the recorded values.
    let hat = tape
        .value(x0_hat)
        .view()
        .into_dimensionality::<Ix3>()
        .expect("x0_hat must be rank 3")
        .to_owned();
    let n = l as f64;
    let mut usable = vec![vec![true; f]; b];
    for s in 0..b {
        for k in 0..f {
            let col = hat.slice(ndarray::s![s, .., k]);
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            usable[s][k] = !is_degenerate(var, mean);
        }
    }

    // Shared centering: the epsilon under the square root keeps dropped
    // (degenerate) lanes finite so they cannot poison the backward pass.
    let mean = tape.mean_axis(x0_hat, 1);
    let centered = tape.sub(x0_hat, mean);
    let sq = tape.mul(centered, centered);
    let var = tape.mean_axis(sq, 1);
    let var_guarded = tape.add_scalar(var, 1e-24);
    let std = tape.sqrt(var_guarded); // [b, 1, f]

    let mut terms: Vec<Var> = Vec::with_capacity(m_pairs);
    let mut m_idx = 0;
    for i in 0..f {
        for j in i + 1..f {
            let p = &p_vals[m_idx];
            m_idx += 1;
            let rows: Vec<usize> =
                (0..b).filter(|&s| usable[s][i] && usable[s][j]).collect();
            if p.is_empty() || rows.is_empty() {
                continue;
            }
            let ci = tape.narrow(centered, 2, i, 1);
            let cj = tape.narrow(centered, 2, j, 1);
            let prod = tape.mul(ci, cj);
            let cov = tape.mean_axis(prod, 1); // [b, 1, 1]
            let si = tape.narrow(std, 2, i, 1);
            let sj = tape.narrow(std, 2, j, 1);
            let denom = tape.mul(si, sj);
            let rho3 = tape.div(cov, denom);
            let rho = tape.reshape(rho3, &[b]);
            let q = if rows.len() == b { rho } else { tape.rows(rho, &rows) };
            terms.push(mmd_tape(tape, p, q, bw));
        }
    }
    if terms.is_empty() {
        return Ok(tape.leaf(ndarray::arr0(0.0).into_dyn()));
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t);
    }
    Ok(tape.scale(acc, 1.0 / terms.len() as f64))
}

/// Scalar population loss (no gradients); same computation as
/// [`population_loss`] run on a value-only tape.
pub fn l_pop(x0: &SeriesBatch, x0_hat: &SeriesBatch, bw: &BandwidthSet) -> Result<f64> {
    let mut tape = Tape::no_grad();
    let hat = tape.leaf(x0_hat.clone().into_dyn());
    let node = population_loss(&mut tape, x0, hat, bw)?;
    Ok(tape.scalar(node))
}

/// Discrete KL divergence between equal-width histograms of two sample
/// sets over their union range, with additive smoothing `1e-8` applied
/// before normalization.
pub fn hist_divergence(p_samples: &[f64], q_samples: &[f64], bins: usize) -> f64 {
    let lo = p_samples
        .iter()
        .chain(q_samples)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = p_samples
        .iter()
        .chain(q_samples)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    hist_divergence_range(p_samples, q_samples, bins, lo, hi)
}

/// [`hist_divergence`] over a caller-fixed value range (out-of-range
/// values land in the edge bins).
pub fn hist_divergence_range(
    p_samples: &[f64],
    q_samples: &[f64],
    bins: usize,
    lo: f64,
    hi: f64,
) -> f64 {
    assert!(!p_samples.is_empty() && !q_samples.is_empty(), "empty sample set");
    assert!(bins >= 2, "need at least 2 bins");
    assert!(lo < hi, "empty histogram range");
    let hp = mass_histogram(p_samples, bins, lo, hi);
    let hq = mass_histogram(q_samples, bins, lo, hi);
    hp.iter().zip(hq.iter()).map(|(&p, &q)| p * (p / q).ln()).sum()
}

/// Probability-mass histogram with light smoothing so ratios stay finite.
pub(crate) fn mass_histogram(xs: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![1e-8; bins];
    for &x in xs {
        let idx = (((x - lo) / (hi - lo)) * bins as f64).max(0.0) as usize;
        h[idx.min(bins - 1)] += 1.0;
    }
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= total);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2, Array3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_hand_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_constant_input() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation)
        ));
        // float-noise constants count as constant too
        let c = [0.1, 0.1, 0.1, 0.1];
        assert!(pearson(&c, &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pearson_affine_invariance(
            xs in proptest::collection::vec(-10.0f64..10.0, 8),
            ys in proptest::collection::vec(-10.0f64..10.0, 8),
            a in 0.1f64..5.0,
            c in -3.0f64..3.0,
        ) {
            let base = match pearson(&xs, &ys) {
                Ok(v) => v,
                Err(_) => return Ok(()), // degenerate draw
            };
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&base));
            let sym = pearson(&ys, &xs).unwrap();
            prop_assert!((base - sym).abs() < 1e-10);
            let scaled: Vec<f64> = xs.iter().map(|&v| a * v + c).collect();
            prop_assert!((pearson(&scaled, &ys).unwrap() - base).abs() < 1e-9);
            let negated: Vec<f64> = xs.iter().map(|&v| -v).collect();
            prop_assert!((pearson(&negated, &ys).unwrap() + base).abs() < 1e-9);
        }

        #[test]
        fn mmd_symmetry_and_nonnegativity(
            ps in proptest::collection::vec(-1.0f64..1.0, 1..20),
            qs in proptest::collection::vec(-1.0f64..1.0, 1..20),
        ) {
            let bw = BandwidthSet::default();
            let a = mmd(&ps, &qs, &bw).unwrap();
            let b = mmd(&qs, &ps, &bw).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn hist_divergence_nonnegative(
            ps in proptest::collection::vec(-5.0f64..5.0, 1..40),
            qs in proptest::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            prop_assert!(hist_divergence(&ps, &qs, 10) >= 0.0);
        }
    }

    #[test]
    fn cc_vector_pair_counts() {
        for (f, m) in [(2usize, 1usize), (5, 10), (28, 378)] {
            let sample = Array2::from_shape_fn((6, f), |(l, k)| ((l * 7 + k * 3) as f64).sin());
            let cc = cc_vector(sample.view()).unwrap();
            assert_eq!(cc.len(), m);
            assert_eq!(cc.pairs[0], (0, 1));
        }
        assert!(matches!(
            cc_vector(Array2::zeros((6, 1)).view()),
            Err(Error::NoPairs(1))
        ));
    }

    #[test]
    fn cc_vector_duplicated_dimension_is_one() {
        let mut sample = Array2::zeros((8, 3));
        for l in 0..8 {
            sample[[l, 0]] = (l as f64 * 0.7).sin();
            sample[[l, 1]] = (l as f64 * 1.3).cos();
            sample[[l, 2]] = sample[[l, 0]];
        }
        let cc = cc_vector(sample.view()).unwrap();
        let idx = cc.pairs.iter().position(|&p| p == (0, 2)).unwrap();
        assert!((cc.values[idx] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_vector_matches_pairwise_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sample = Array2::from_shape_fn((24, 5), |_| rng.gen_range(-1.0..1.0));
        let cc = cc_vector(sample.view()).unwrap();
        let mut m = 0;
        for i in 0..5 {
            for j in i + 1..5 {
                let x: Vec<f64> = sample.column(i).to_vec();
                let y: Vec<f64> = sample.column(j).to_vec();
                let expect = pearson(&x, &y).unwrap();
                assert!((cc.values[m] - expect).abs() < 1e-12);
                assert_eq!(cc.pairs[m], (i, j));
                m += 1;
            }
        }
    }

    #[test]
    fn cc_vector_flags_degenerate_dimension() {
        let mut sample = Array2::zeros((6, 3));
        for l in 0..6 {
            sample[[l, 0]] = l as f64;
            sample[[l, 1]] = 4.2; // constant
            sample[[l, 2]] = (l as f64).cos();
        }
        let cc = cc_vector(sample.view()).unwrap();
        for (m, &(i, j)) in cc.pairs.iter().enumerate() {
            let expect_degenerate = i == 1 || j == 1;
            assert_eq!(cc.degenerate[m], expect_degenerate);
            if expect_degenerate {
                assert_eq!(cc.values[m], 0.0);
            }
        }
    }

    #[test]
    fn mmd_identical_multisets_is_zero() {
        let bw = BandwidthSet::default();
        let p = vec![0.3, -0.5, 0.9, 0.0];
        assert!(mmd(&p, &p.clone(), &bw).unwrap() < 1e-12);
    }

    #[test]
    fn mmd_single_point_closed_form() {
        let bw = BandwidthSet::new(vec![1.0]);
        let got = mmd(&[0.0], &[1.0], &bw).unwrap();
        let expect = 2.0 - 2.0 * (-1.0f64).exp();
        assert!((got - expect).abs() < 1e-12, "got {got}, expected {expect}");
    }

    #[test]
    fn mmd_monotone_in_point_separation() {
        let w = 1.0;
        let bw = BandwidthSet::new(vec![w]);
        let mut last = -1.0;
        for k in 0..=10 {
            let d = w.sqrt() * k as f64 / 10.0;
            let v = mmd(&[0.0], &[d], &bw).unwrap();
            assert!(v > last, "not monotone at d={d}");
            last = v;
        }
    }

    #[test]
    fn mmd_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bw = BandwidthSet::default();
        let got = mmd(&p, &q, &bw).unwrap();

        // independent accumulation: raw kernel sums, divided once
        let mut expect = 0.0;
        for &w in &bw.windows {
            let k = |a: &[f64], b: &[f64]| -> f64 {
                let mut s = 0.0;
                for &x in a {
                    for &y in b {
                        s += (-(x - y).powi(2) / w).exp();
                    }
                }
                s
            };
            expect += k(&p, &p) / (64.0 * 64.0) - 2.0 * k(&p, &q) / (64.0 * 64.0)
                + k(&q, &q) / (64.0 * 64.0);
        }
        assert!((got - expect.max(0.0)).abs() < 1e-9);
    }

    fn random_batch(b: usize, l: usize, f: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn((b, l, f), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn l_pop_zero_on_identical_batches() {
        let x0 = random_batch(8, 12, 3, 1);
        let v = l_pop(&x0, &x0.clone(), &BandwidthSet::default()).unwrap();
        assert!(v < 1e-10, "got {v}");
    }

    #[test]
    fn l_pop_invariant_to_per_sample_affine_rescale() {
        let x0 = random_batch(8, 12, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut scaled = x0.clone();
        for mut s in scaled.outer_iter_mut() {
            let a = rng.gen_range(0.2..3.0);
            let c = rng.gen_range(-1.0..1.0);
            s.mapv_inplace(|v| a * v + c);
        }
        let bw = BandwidthSet::default();
        let base = l_pop(&x0, &x0, &bw).unwrap();
        let moved = l_pop(&x0, &scaled, &bw).unwrap();
        assert!((base - moved).abs() < 1e-10, "{base} vs {moved}");
    }

    #[test]
    fn l_pop_matches_naive_reimplementation() {
        let x0 = random_batch(64, 24, 5, 4);
        let x0_hat = random_batch(64, 24, 5, 5);
        let bw = BandwidthSet::default();
        let got = l_pop(&x0, &x0_hat, &bw).unwrap();

        // naive: explicit loops, pearson per sample per pair, scalar mmd
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..5 {
            for j in i + 1..5 {
                let collect = |batch: &Array3<f64>| -> Vec<f64> {
                    (0..64)
                        .filter_map(|s| {
                            let x: Vec<f64> = batch.slice(ndarray::s![s, .., i]).to_vec();
                            let y: Vec<f64> = batch.slice(ndarray::s![s, .., j]).to_vec();
                            pearson(&x, &y).ok()
                        })
                        .collect()
                };
                let p = collect(&x0);
                let q = collect(&x0_hat);
                total += mmd(&p, &q, &bw).unwrap();
                count += 1;
            }
        }
        let expect = total / count as f64;
        assert!((got - expect).abs() < 1e-9, "got {got}, expected {expect}");
    }

    #[test]
    fn l_pop_gradient_matches_finite_differences() {
        let x0 = random_batch(4, 8, 2, 6);
        let x0_hat = random_batch(4, 8, 2, 7);
        let bw = BandwidthSet::default();

        let mut tape = Tape::new();
        let hat = tape.leaf_grad(x0_hat.clone().into_dyn());
        let loss = population_loss(&mut tape, &x0, hat, &bw).unwrap();
        tape.backward(loss);
        let analytic = tape.grad(hat).unwrap().clone();

        let step = 1e-5;
        for idx in 0..x0_hat.len() {
            let mut plus = x0_hat.clone();
            plus.as_slice_mut().unwrap()[idx] += step;
            let mut minus = x0_hat.clone();
            minus.as_slice_mut().unwrap()[idx] -= step;
            let numeric =
                (l_pop(&x0, &plus, &bw).unwrap() - l_pop(&x0, &minus, &bw).unwrap()) / (2.0 * step);
            let a = analytic.as_slice().unwrap()[idx];
            assert!(
                (a - numeric).abs() <= 1e-4 * a.abs().max(numeric.abs()) + 1e-8,
                "coordinate {idx}: analytic {a}, numeric {numeric}"
            );
        }
    }

    #[test]
    fn l_pop_survives_degenerate_samples() {
        let x0 = random_batch(6, 10, 3, 8);
        let mut x0_hat = random_batch(6, 10, 3, 9);
        // sample 2, dim 1 constant; at the start of training whole outputs
        // can be constant, so gradients must stay finite
        for l in 0..10 {
            x0_hat[[2, l, 1]] = 0.25;
        }
        let bw = BandwidthSet::default();
        let mut tape = Tape::new();
        let hat = tape.leaf_grad(x0_hat.into_dyn());
        let loss = population_loss(&mut tape, &x0, hat, &bw).unwrap();
        tape.backward(loss);
        assert!(tape.scalar(loss).is_finite());
        assert!(tape.grad(hat).unwrap().iter().all(|g| g.is_finite()));

        // fully-constant model output: every pair excluded, loss 0
        let zeros = Array3::zeros((6, 10, 3));
        assert_eq!(l_pop(&x0, &zeros, &bw).unwrap(), 0.0);
    }

    #[test]
    fn l_pop_rejects_small_batch_and_single_feature() {
        let bw = BandwidthSet::default();
        let one = random_batch(1, 8, 3, 10);
        assert!(matches!(
            l_pop(&one, &one.clone(), &bw),
            Err(Error::InsufficientBatch(1))
        ));
        let thin = random_batch(4, 8, 1, 11);
        assert!(matches!(l_pop(&thin, &thin.clone(), &bw), Err(Error::NoPairs(1))));
    }

    #[test]
    fn hist_divergence_zero_on_identical_samples() {
        let p = vec![0.1, -0.4, 0.9, 0.3, 0.3];
        assert!(hist_divergence(&p, &p.clone(), 50) < 1e-12);
    }

    #[test]
    fn hist_divergence_two_bin_hand_case() {
        // P mass in bin 0, Q mass in bin 1; smoothed and normalized by hand
        let got = hist_divergence(&[0.0], &[1.0], 2);
        let e = 1e-8f64;
        let p = [(1.0 + e) / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        let q = [e / (1.0 + 2.0 * e), (1.0 + e) / (1.0 + 2.0 * e)];
        let expect = p[0] * (p[0] / q[0]).ln() + p[1] * (p[1] / q[1]).ln();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn hist_divergence_stable_under_resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // q: resample p's empirical distribution
        let q: Vec<f64> = (0..10_000).map(|_| p[rng.gen_range(0..p.len())]).collect();
        let d = hist_divergence(&p, &q, 50);
        assert!(d < 0.01, "divergence {d}");
    }

    #[test]
    fn constant_degeneracy_uses_relative_threshold() {
        // variance ~1e-32 from float noise counts as degenerate...
        assert!(is_degenerate(1e-32, 0.1));
        // ...but genuine small variance does not
        assert!(!is_degenerate(1e-12, 0.1));
        assert!(!is_degenerate(1e-12, 0.0));
    }

    #[test]
    fn arr2_sanity_for_nd_mmd() {
        let p = arr2(&[[0.0, 0.0], [1.0, 1.0]]);
        let bw = BandwidthSet::new(vec![2.0]);
        let same = mmd_nd(p.view(), p.view(), &bw).unwrap();
        assert!(same < 1e-12);
    }
}
