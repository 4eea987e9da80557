//! Dataset construction: delimited-table ingestion, overlapping windows,
//! per-dimension min-max scaling to [-1, 1], and the synthetic sines
//! benchmark generator.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A batch of multivariate series, `[sample][time][feature]`.
pub type SeriesBatch = Array3<f64>;

/// Numeric matrix parsed from a delimited text file.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub values: Array2<f64>,
    pub column_names: Vec<String>,
}

/// Min-max range of one feature dimension, fitted on the full table.
/// `constant` marks dimensions with `min == max`, which normalize to 0 and
/// are excluded from correlation pairs downstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerDim {
    pub min: f64,
    pub max: f64,
    pub constant: bool,
}

/// Per-dimension affine map between raw values and [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub dims: Vec<ScalerDim>,
}

impl Scaler {
    /// Fit from pooled values, one column per feature.
    fn fit(pooled: &Array2<f64>) -> Scaler {
        let dims = pooled
            .axis_iter(Axis(1))
            .map(|col| {
                let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                ScalerDim { min, max, constant: min == max }
            })
            .collect();
        Scaler { dims }
    }

    pub fn features(&self) -> usize {
        self.dims.len()
    }

    fn apply_raw(&self, k: usize, x: f64) -> f64 {
        let d = &self.dims[k];
        if d.constant {
            0.0
        } else {
            2.0 * (x - d.min) / (d.max - d.min) - 1.0
        }
    }

    fn invert_raw(&self, k: usize, y: f64) -> f64 {
        let d = &self.dims[k];
        if d.constant {
            d.min
        } else {
            (y + 1.0) / 2.0 * (d.max - d.min) + d.min
        }
    }

    /// Normalize a batch in place along the feature axis.
    pub fn normalize(&self, batch: &mut SeriesBatch) -> Result<()> {
        self.check(batch.shape()[2])?;
        for mut sample in batch.axis_iter_mut(Axis(0)) {
            for mut row in sample.axis_iter_mut(Axis(0)) {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = self.apply_raw(k, *v);
                }
            }
        }
        Ok(())
    }

    fn check(&self, features: usize) -> Result<()> {
        if features != self.dims.len() {
            return Err(Error::ScalerMismatch { scaler: self.dims.len(), data: features });
        }
        Ok(())
    }
}

/// Normalized sample set plus the scaler that produced it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: SeriesBatch,
    pub scaler: Scaler,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn length(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn features(&self) -> usize {
        self.samples.shape()[2]
    }
}

/// Map a normalized batch back to raw value space.
pub fn denormalize(batch: &SeriesBatch, scaler: &Scaler) -> Result<SeriesBatch> {
    scaler.check(batch.shape()[2])?;
    let mut out = batch.clone();
    for mut sample in out.axis_iter_mut(Axis(0)) {
        for mut row in sample.axis_iter_mut(Axis(0)) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = scaler.invert_raw(k, *v);
            }
        }
    }
    Ok(out)
}

/// Synthetic sine benchmark: entry (i, l, k) is `sin(2π·η·l + θ)` with
/// η ~ U[0,1) and θ ~ U[-π,π) drawn per (sample, feature), then min-max
/// normalized per dimension.
pub fn make_sines(n: usize, length: usize, features: usize, seed: u64) -> Dataset {
    sines_impl(n, length, features, seed, None)
}

/// Test hook: same generator with a forced frequency η for every
/// (sample, feature); phases are still drawn from the seed.
#[doc(hidden)]
pub fn make_sines_with_eta(n: usize, length: usize, features: usize, seed: u64, eta: f64) -> Dataset {
    sines_impl(n, length, features, seed, Some(eta))
}

fn sines_impl(n: usize, length: usize, features: usize, seed: u64, eta: Option<f64>) -> Dataset {
    assert!(n >= 1 && length >= 1 && features >= 1, "make_sines: empty request");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Array3::<f64>::zeros((n, length, features));
    for i in 0..n {
        for k in 0..features {
            let freq = match eta {
                Some(e) => {
                    // Keep the draw so the phase stream is unchanged.
                    let _: f64 = rng.gen();
                    e
                }
                None => rng.gen::<f64>(),
            };
            let phase = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            for l in 0..length {
                samples[[i, l, k]] =
                    (2.0 * std::f64::consts::PI * freq * l as f64 + phase).sin();
            }
        }
    }
    let pooled = pool(&samples);
    let scaler = Scaler::fit(&pooled);
    let mut ds = Dataset { samples, scaler };
    ds.scaler
        .clone()
        .normalize(&mut ds.samples)
        .expect("scaler fitted on the same data");
    ds
}

/// Flatten `[N, L, F]` to `[N*L, F]` for pooled per-dimension statistics.
fn pool(samples: &SeriesBatch) -> Array2<f64> {
    let (n, l, f) = samples.dim();
    samples
        .view()
        .into_shape_with_order((n * l, f))
        .expect("standard layout")
        .to_owned()
}

/// Parse a delimited numeric file with a single header row. Row/column
/// positions in errors are 1-based file coordinates (header is row 1).
pub fn load_table(path: &Path, delimiter: char) -> Result<RawTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::MalformedTable {
        row: 0,
        col: 0,
        detail: "empty file".into(),
    })?;
    let column_names: Vec<String> =
        header.split(delimiter).map(|s| s.trim().to_string()).collect();
    let cols = column_names.len();

    let mut values = Vec::new();
    let mut rows = 0usize;
    for (line_idx, line) in lines {
        let row_no = line_idx + 1; // 1-based file row
        let cells: Vec<&str> = line.split(delimiter).collect();
        if cells.len() != cols {
            return Err(Error::MalformedTable {
                row: row_no,
                col: cells.len().min(cols) + 1,
                detail: format!("expected {} columns, found {}", cols, cells.len()),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedTable {
                row: row_no,
                col: c + 1,
                detail: format!("non-numeric cell {:?}", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedTable {
                    row: row_no,
                    col: c + 1,
                    detail: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::MalformedTable { row: 0, col: 0, detail: "no data rows".into() });
    }
    let values = Array2::from_shape_vec((rows, cols), values).expect("rectangular by construction");
    Ok(RawTable { values, column_names })
}

/// Cut overlapping windows of `length` every `stride` rows, then normalize
/// with a scaler fitted on the full table so all windows share one value
/// space.
pub fn window(table: &RawTable, length: usize, stride: usize) -> Result<Dataset> {
    assert!(stride >= 1, "stride must be >= 1");
    let rows = table.values.shape()[0];
    let features = table.values.shape()[1];
    if rows < length {
        return Err(Error::InsufficientRows { need: length, have: rows });
    }
    let n = (rows - length) / stride + 1;
    let scaler = Scaler::fit(&table.values);
    let mut samples = Array3::<f64>::zeros((n, length, features));
    for w in 0..n {
        let start = w * stride;
        for l in 0..length {
            for k in 0..features {
                samples[[w, l, k]] = scaler.apply_raw(k, table.values[[start + l, k]]);
            }
        }
    }
    Ok(Dataset { samples, scaler })
}

// ---- directory persistence ----

/// Sidecar metadata stored next to the binary sample blob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub shape: [usize; 3],
    pub scaler: Scaler,
    pub seed: Option<u64>,
    pub source: Option<String>,
}

const META_FILE: &str = "meta.json";
const SAMPLES_FILE: &str = "samples.bin";

pub fn write_f64_file(path: &Path, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_f64_file(path: &Path, expect_len: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != expect_len * 8 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            detail: format!("expected {} bytes, found {}", expect_len * 8, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Persist a dataset as `meta.json` + flat little-endian `samples.bin`.
pub fn save_dataset(
    dir: &Path,
    ds: &Dataset,
    seed: Option<u64>,
    source: Option<String>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (n, l, f) = ds.samples.dim();
    let meta = DatasetMeta { shape: [n, l, f], scaler: ds.scaler.clone(), seed, source };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::MalformedFile { path: META_FILE.into(), detail: e.to_string() })?;
    fs::write(dir.join(META_FILE), json)?;
    write_f64_file(
        &dir.join(SAMPLES_FILE),
        ds.samples.as_slice().expect("standard layout"),
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(META_FILE);
    let json = fs::read_to_string(&meta_path)?;
    let meta: DatasetMeta = serde_json::from_str(&json).map_err(|e| Error::MalformedFile {
        path: meta_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let [n, l, f] = meta.shape;
    if meta.scaler.dims.len() != f {
        return Err(Error::ScalerMismatch { scaler: meta.scaler.dims.len(), data: f });
    }
    let data = read_f64_file(&dir.join(SAMPLES_FILE), n * l * f)?;
    let samples = Array3::from_shape_vec((n, l, f), data).expect("length checked");
    Ok(Dataset { samples, scaler: meta.scaler })
}
