//! Plot-data export: real-vs-synthetic cross-correlation histograms,
//! pooled value densities, and 2-D embeddings of per-sample feature
//! vectors, each written as delimited text plus a rendered raster image.
//!
//! The embedding is exact pairwise-affinity stochastic neighbor embedding
//! when the combined sample count is at most 1000, and a principal-
//! components projection beyond that; the choice and its settings land in
//! `plots_meta.json` next to the data files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{per_pair_cc, HIST_BINS};
use crate::stats::{cc_vector, mass_histogram};

pub const CC_HIST_CSV: &str = "cc_hist.csv";
pub const CC_HIST_PNG: &str = "cc_hist.png";
pub const VALUE_DENSITY_CSV: &str = "value_density.csv";
pub const VALUE_DENSITY_PNG: &str = "value_density.png";
pub const EMBED_CC_CSV: &str = "embed_cc.csv";
pub const EMBED_CC_PNG: &str = "embed_cc.png";
pub const EMBED_MEAN_CSV: &str = "embed_mean.csv";
pub const EMBED_MEAN_PNG: &str = "embed_mean.png";
pub const PLOTS_META: &str = "plots_meta.json";

/// Largest combined point count the exact embedding will accept.
const SNE_MAX_POINTS: usize = 1000;
const SNE_ITERS: usize = 500;
const SNE_LEARNING_RATE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedKind {
    /// Exact stochastic neighbor embedding up to 1000 points, then the
    /// principal-components projection.
    Auto,
    Sne,
    Pca,
}

/// Write the full plot-data set into `outdir`; returns the files written.
pub fn export_plots(real: &Dataset, syn: &Dataset, outdir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    export_plots_with(real, syn, outdir, seed, EmbedKind::Auto)
}

pub fn export_plots_with(
    real: &Dataset,
    syn: &Dataset,
    outdir: &Path,
    seed: u64,
    embed: EmbedKind,
) -> Result<Vec<PathBuf>> {
    if real.features() != syn.features() || real.length() != syn.length() {
        return Err(Error::ShapeMismatch(format!(
            "real [{}, {}] vs synthetic [{}, {}]",
            real.length(),
            real.features(),
            syn.length(),
            syn.features()
        )));
    }
    if real.n() == 0 || syn.n() == 0 {
        return Err(Error::EmptySampleSet);
    }
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();

    // (a) per-pair cross-correlation histograms over the fixed [-1, 1]
    let f = real.features();
    if f >= 2 {
        let real_cc = per_pair_cc(real)?;
        let syn_cc = per_pair_cc(syn)?;
        let pairs = pair_labels(f);
        let mut csv = String::from("pair_i,pair_j,bin_lo,bin_hi,real_freq,syn_freq\n");
        let mut panels = Vec::new();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let hp = mass_histogram(&real_cc[k], HIST_BINS, -1.0, 1.0);
            let hq = mass_histogram(&syn_cc[k], HIST_BINS, -1.0, 1.0);
            for b in 0..HIST_BINS {
                let lo = -1.0 + 2.0 * b as f64 / HIST_BINS as f64;
                let hi = -1.0 + 2.0 * (b + 1) as f64 / HIST_BINS as f64;
                writeln!(csv, "{i},{j},{lo},{hi},{},{}", hp[b], hq[b]).expect("string write");
            }
            panels.push((hp, hq));
        }
        written.push(write_text(outdir, CC_HIST_CSV, &csv)?);
        written.push(write_panels(outdir, CC_HIST_PNG, &panels)?);
    }

    // (b) pooled value densities per dimension over the union range
    let mut csv = String::from("dim,bin_lo,bin_hi,real_density,syn_density\n");
    let mut panels = Vec::new();
    for k in 0..f {
        let pool = |ds: &Dataset| -> Vec<f64> {
            ds.samples.index_axis(Axis(2), k).iter().copied().collect()
        };
        let (p, q) = (pool(real), pool(syn));
        let lo = p.iter().chain(&q).cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().chain(&q).cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let width = (hi - lo) / HIST_BINS as f64;
        let hp = mass_histogram(&p, HIST_BINS, lo, hi);
        let hq = mass_histogram(&q, HIST_BINS, lo, hi);
        for b in 0..HIST_BINS {
            let b_lo = lo + width * b as f64;
            let b_hi = lo + width * (b + 1) as f64;
            writeln!(csv, "{k},{b_lo},{b_hi},{},{}", hp[b] / width, hq[b] / width)
                .expect("string write");
        }
        panels.push((hp, hq));
    }
    written.push(write_text(outdir, VALUE_DENSITY_CSV, &csv)?);
    written.push(write_panels(outdir, VALUE_DENSITY_PNG, &panels)?);

    // (c) 2-D embeddings of per-sample feature vectors
    let mut meta_method = Vec::new();
    for (name_csv, name_png, feats_real, feats_syn) in [
        (
            EMBED_CC_CSV,
            EMBED_CC_PNG,
            cc_features(real)?,
            cc_features(syn)?,
        ),
        (EMBED_MEAN_CSV, EMBED_MEAN_PNG, mean_features(real), mean_features(syn)),
    ] {
        let n_real = feats_real.nrows();
        let combined = stack_rows(&feats_real, &feats_syn);
        let (coords, method) = embed_2d(&combined, embed, seed);
        let mut csv = String::from("set,x,y\n");
        for (row, c) in coords.outer_iter().enumerate() {
            let set = if row < n_real { "real" } else { "syn" };
            writeln!(csv, "{set},{},{}", c[0], c[1]).expect("string write");
        }
        written.push(write_text(outdir, name_csv, &csv)?);
        written.push(write_scatter(outdir, name_png, &coords, n_real)?);
        meta_method.push(method);
    }

    let meta = serde_json::json!({
        "bins": HIST_BINS,
        "seed": seed,
        "points_real": real.n(),
        "points_syn": syn.n(),
        "embedding": {
            "cc": meta_method[0],
            "mean": meta_method[1],
            "sne_iterations": SNE_ITERS,
            "sne_learning_rate": SNE_LEARNING_RATE,
            "sne_max_points": SNE_MAX_POINTS,
        },
    });
    let meta_path = outdir.join(PLOTS_META);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("meta json"))?;
    written.push(meta_path);
    Ok(written)
}

fn write_text(outdir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = outdir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn pair_labels(f: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(f * (f - 1) / 2);
    for i in 0..f {
        for j in i + 1..f {
            out.push((i, j));
        }
    }
    out
}

/// Per-sample cross-correlation vectors (degenerate entries stay at 0).
fn per_sample_cc(ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    ds.samples
        .axis_iter(Axis(0))
        .map(|s| cc_vector(s).map(|cc| cc.values))
        .collect()
}

fn cc_features(ds: &Dataset) -> Result<Array2<f64>> {
    if ds.features() >= 2 {
        let rows = per_sample_cc(ds)?;
        let d = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((ds.n(), d), flat).expect("cc feature shape"))
    } else {
        // single dimension has no pairs; embed the per-sample mean instead
        Ok(mean_features(ds))
    }
}

/// Per-sample vector of per-dimension means.
fn mean_features(ds: &Dataset) -> Array2<f64> {
    let (n, _, f) = ds.samples.dim();
    let mut out = Array2::zeros((n, f));
    for (i, s) in ds.samples.axis_iter(Axis(0)).enumerate() {
        for k in 0..f {
            out[[i, k]] = s.index_axis(Axis(1), k).mean().expect("nonempty series");
        }
    }
    out
}

fn stack_rows(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("stack rows")
}

/// 2-D coordinates for each row of `x`; returns the method actually used.
pub(crate) fn embed_2d(x: &Array2<f64>, kind: EmbedKind, seed: u64) -> (Array2<f64>, &'static str) {
    let n = x.nrows();
    let use_sne = match kind {
        EmbedKind::Sne => true,
        EmbedKind::Pca => false,
        EmbedKind::Auto => (8..=SNE_MAX_POINTS).contains(&n),
    };
    if use_sne {
        (sne(x, seed), "sne")
    } else {
        (pca_2d(x), "pca")
    }
}

/// Principal-components projection onto the top two axes, with a
/// deterministic sign convention.
pub(crate) fn pca_2d(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mean = x.mean_axis(Axis(0)).expect("nonempty matrix");
    // centered covariance
    let mut cov = Array2::zeros((d, d));
    for row in x.outer_iter() {
        for i in 0..d {
            for j in 0..d {
                cov[[i, j]] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    cov.mapv_inplace(|v| v / n as f64);
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite eigenvalues"));
    let mut out = Array2::zeros((n, 2));
    for c in 0..2.min(d) {
        let col = order[c];
        // canonical sign: the largest-magnitude loading is positive
        let mut axis: Vec<f64> = (0..d).map(|r| vecs[[r, col]]).collect();
        let lead = axis
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, row) in x.outer_iter().enumerate() {
            out[[i, c]] = (0..d).map(|k| (row[k] - mean[k]) * axis[k]).sum();
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix;
/// returns (eigenvalues, column eigenvectors).
pub(crate) fn jacobi_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let d = m.nrows();
    let mut a = m.clone();
    let mut v = Array2::eye(d);
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[[p, q]].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[[i, i]]).collect(), v)
}

/// Exact stochastic neighbor embedding with a heavy-tailed low-dimensional
/// kernel: per-point bandwidths matched to a fixed perplexity, symmetric
/// affinities, momentum gradient descent from a principal-components
/// initialization (seeded random when that collapses).
pub(crate) fn sne(x: &Array2<f64>, seed: u64) -> Array2<f64> {
    let n = x.nrows();
    assert!(n >= 2, "embedding needs at least 2 points");
    let perplexity = 30.0f64.min(((n - 1) as f64 / 3.0).max(2.0));

    // pairwise squared distances
    let mut d2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let dist: f64 = (0..x.ncols())
                .map(|k| (x[[i, k]] - x[[j, k]]).powi(2))
                .sum();
            d2[[i, j]] = dist;
            d2[[j, i]] = dist;
        }
    }

    // conditional affinities at the target entropy
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let (mut lo, mut hi) = (1e-20f64, 1e20f64);
        let mut beta = 1.0f64;
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = (-beta * d2[[i, j]]).exp();
                sum += w;
                weighted += w * d2[[i, j]];
            }
            let entropy = if sum > 0.0 { beta * weighted / sum + sum.ln() } else { 0.0 };
            if (entropy - target).abs() < 1e-5 {
                break;
            }
            if entropy > target {
                lo = beta;
                beta = if hi >= 1e20 { beta * 2.0 } else { (beta + hi) / 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            if j != i {
                let w = (-beta * d2[[i, j]]).exp();
                p[[i, j]] = w;
                sum += w;
            }
        }
        if sum > 0.0 {
            for j in 0..n {
                p[[i, j]] /= sum;
            }
        }
    }
    // symmetrize with a floor that keeps gradients alive
    let mut ps = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            ps[[i, j]] = ((p[[i, j]] + p[[j, i]]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    // initialization: shrunken principal components, random if collapsed
    let mut y = pca_2d(x);
    let spread = y.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if spread > 0.0 {
        y.mapv_inplace(|v| v / spread * 1e-4);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(401);
        y.mapv_inplace(|_| rng.gen_range(-1e-4..1e-4));
    }

    let mut velocity = Array2::<f64>::zeros((n, 2));
    for iter in 0..SNE_ITERS {
        let exaggeration = if iter < 100 { 4.0 } else { 1.0 };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };

        // low-dimensional affinities
        let mut q_w = Array2::zeros((n, n));
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dy0 = y[[i, 0]] - y[[j, 0]];
                let dy1 = y[[i, 1]] - y[[j, 1]];
                let w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                q_w[[i, j]] = w;
                q_w[[j, i]] = w;
                q_sum += 2.0 * w;
            }
        }
        let q_sum = q_sum.max(1e-12);

        let mut grad = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q_w[[i, j]];
                let q = (w / q_sum).max(1e-12);
                let coef = 4.0 * (exaggeration * ps[[i, j]] - q) * w;
                grad[[i, 0]] += coef * (y[[i, 0]] - y[[j, 0]]);
                grad[[i, 1]] += coef * (y[[i, 1]] - y[[j, 1]]);
            }
        }
        for i in 0..n {
            for c in 0..2 {
                velocity[[i, c]] =
                    momentum * velocity[[i, c]] - SNE_LEARNING_RATE * grad[[i, c]];
                y[[i, c]] += velocity[[i, c]];
            }
        }
        // re-center to keep coordinates bounded
        let mean = y.mean_axis(Axis(0)).expect("nonempty");
        for i in 0..n {
            y[[i, 0]] -= mean[0];
            y[[i, 1]] -= mean[1];
        }
    }
    y
}

// ---- rendering ----

const REAL_COLOR: Rgb<u8> = Rgb([52, 101, 164]);
const SYN_COLOR: Rgb<u8> = Rgb([204, 60, 52]);
const FRAME_COLOR: Rgb<u8> = Rgb([180, 180, 180]);

const PANEL_W: u32 = 200;
const PANEL_H: u32 = 150;
const MARGIN: u32 = 10;

fn blend(img: &mut RgbImage, x: u32, y: u32, color: Rgb<u8>) {
    let px = img.get_pixel_mut(x, y);
    for c in 0..3 {
        px.0[c] = ((px.0[c] as u16 + color.0[c] as u16) / 2) as u8;
    }
}

/// Histogram grid: one panel per (real, syn) frequency pair.
fn write_panels(outdir: &Path, name: &str, panels: &[(Vec<f64>, Vec<f64>)]) -> Result<PathBuf> {
    let cols = panels.len().min(5) as u32;
    let rows = panels.len().div_ceil(5) as u32;
    let width = cols * (PANEL_W + MARGIN) + MARGIN;
    let height = rows * (PANEL_H + MARGIN) + MARGIN;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));

    for (idx, (hp, hq)) in panels.iter().enumerate() {
        let ox = MARGIN + (idx as u32 % 5) * (PANEL_W + MARGIN);
        let oy = MARGIN + (idx as u32 / 5) * (PANEL_H + MARGIN);
        // frame
        for x in ox..ox + PANEL_W {
            img.put_pixel(x, oy, FRAME_COLOR);
            img.put_pixel(x, oy + PANEL_H - 1, FRAME_COLOR);
        }
        for y in oy..oy + PANEL_H {
            img.put_pixel(ox, y, FRAME_COLOR);
            img.put_pixel(ox + PANEL_W - 1, y, FRAME_COLOR);
        }
        let peak = hp
            .iter()
            .chain(hq.iter())
            .cloned()
            .fold(f64::MIN, f64::max)
            .max(1e-12);
        let bins = hp.len() as u32;
        let bar_w = (PANEL_W - 2).max(bins) / bins;
        for (series, color) in [(hp, REAL_COLOR), (hq, SYN_COLOR)] {
            for (b, &freq) in series.iter().enumerate() {
                let h = ((freq / peak) * (PANEL_H - 4) as f64).round() as u32;
                let x0 = ox + 1 + b as u32 * bar_w;
                for x in x0..(x0 + bar_w).min(ox + PANEL_W - 1) {
                    for y in (oy + PANEL_H - 1 - h)..(oy + PANEL_H - 1) {
                        blend(&mut img, x, y, color);
                    }
                }
            }
        }
    }
    let path = outdir.join(name);
    img.save(&path).map_err(|e| Error::MalformedFile {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(path)
}

/// Scatter plot of embedded points, real then synthetic.
fn write_scatter(outdir: &Path, name: &str, coords: &Array2<f64>, n_real: usize) -> Result<PathBuf> {
    let size = 640u32;
    let margin = 40u32;
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));

    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let xs: Vec<f64> = coords.column(0).iter().map(|&v| finite(v)).collect();
    let ys: Vec<f64> = coords.column(1).iter().map(|&v| finite(v)).collect();
    let (x_lo, x_hi) = padded_range(&xs);
    let (y_lo, y_hi) = padded_range(&ys);
    let scale_x = (size - 2 * margin) as f64 / (x_hi - x_lo);
    let scale_y = (size - 2 * margin) as f64 / (y_hi - y_lo);

    for (row, (&x, &y)) in xs.iter().zip(ys.iter()).enumerate() {
        let color = if row < n_real { REAL_COLOR } else { SYN_COLOR };
        let px = margin as f64 + (x - x_lo) * scale_x;
        let py = (size - margin) as f64 - (y - y_lo) * scale_y;
        let (px, py) = (px.round() as i64, py.round() as i64);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                let (sx, sy) = (px + dx, py + dy);
                if sx >= 0 && sy >= 0 && (sx as u32) < size && (sy as u32) < size {
                    blend(&mut img, sx as u32, sy as u32, color);
                }
            }
        }
    }
    let path = outdir.join(name);
    img.save(&path).map_err(|e| Error::MalformedFile {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(path)
}

fn padded_range(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}
