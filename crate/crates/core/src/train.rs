//! Population-aware training loop. Each "epoch" is one mini-batch
//! iteration: draw a batch by seeded shuffling without replacement, draw
//! a step vector (shared-step by default) and Gaussian noise, noise the
//! batch with the closed-form forward marginal, predict the clean signal,
//! and take one AdamW step on `L_total = L0 + alpha * L_pop`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{forward, BackboneConfig, BackboneState};
use crate::data::{Dataset, SeriesBatch};
use crate::error::{Error, Result};
use crate::schedule::{forward_sample, randn_batch, sample_steps, ScheduleKind, StepSampling};
use crate::stats::{l_pop, population_loss, BandwidthSet};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Mini-batch iterations (one optimizer step each).
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Weight of the population loss; 0 disables it.
    pub alpha: f64,
    pub t_count: usize,
    pub schedule: ScheduleKind,
    pub strategy: StepSampling,
    pub backbone: BackboneConfig,
    pub bandwidths: BandwidthSet,
    pub seed: u64,
    /// Cadence (in iterations) at which persisting callers write
    /// intermediate checkpoints from the training sink; 0 = final only.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Length-24-class defaults: cosine schedule with 250 steps, batch 64,
    /// learning rate 1e-4, 4 heads, 1 encoder block, 3 DiT blocks,
    /// hidden 128, shared-step sampling, alpha 5e-4.
    pub fn defaults_for(length: usize, features: usize) -> TrainConfig {
        TrainConfig {
            epochs: 15_000,
            batch: 64,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            alpha: 0.0005,
            t_count: 250,
            schedule: ScheduleKind::Cosine,
            strategy: StepSampling::Shared,
            backbone: BackboneConfig {
                length,
                features,
                hidden: 128,
                heads: 4,
                encoder_blocks: 1,
                dit_blocks: 3,
            },
            bandwidths: BandwidthSet::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(Error::ConfigMismatch(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::ConfigMismatch("learning rate must be positive".into()));
        }
        if self.batch < 1 {
            return Err(Error::ConfigMismatch("batch must be >= 1".into()));
        }
        if self.t_count < 2 {
            return Err(Error::ConfigMismatch("need at least 2 diffusion steps".into()));
        }
        self.backbone.validate()?;
        if self.backbone.length != dataset.length() || self.backbone.features != dataset.features()
        {
            return Err(Error::ConfigMismatch(format!(
                "backbone [{}, {}] vs dataset [{}, {}]",
                self.backbone.length,
                self.backbone.features,
                dataset.length(),
                dataset.features()
            )));
        }
        if dataset.n() == 0 {
            return Err(Error::EmptySampleSet);
        }
        if self.alpha > 0.0 {
            if self.batch.min(dataset.n()) < 2 {
                return Err(Error::InsufficientBatch(self.batch.min(dataset.n())));
            }
            if self.backbone.features < 2 {
                return Err(Error::NoPairs(self.backbone.features));
            }
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub l0: f64,
    pub l_pop: f64,
    pub l_total: f64,
    /// Shared step of the batch (first entry under uniform sampling).
    pub t1: usize,
    pub wall_ms: f64,
    /// Whether the global gradient norm hit the clip threshold.
    pub clipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    /// Write as delimited text with a header row.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,l0,l_pop,l_total,t1,wall_ms,clipped\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{},{:.3},{}",
                r.epoch, r.l0, r.l_pop, r.l_total, r.t1, r.wall_ms, r.clipped as u8
            )
            .expect("string write");
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainLog> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 7 {
                return Err(Error::MalformedFile {
                    path: path.display().to_string(),
                    detail: format!("log row {i} has {} fields", cells.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::MalformedFile {
                    path: path.display().to_string(),
                    detail: format!("bad number {s:?} in row {i}"),
                })
            };
            records.push(TrainRecord {
                epoch: parse(cells[0])? as usize,
                l0: parse(cells[1])?,
                l_pop: parse(cells[2])?,
                l_total: parse(cells[3])?,
                t1: parse(cells[4])? as usize,
                wall_ms: parse(cells[5])?,
                clipped: cells[6].trim() == "1",
            });
        }
        Ok(TrainLog { records })
    }
}

/// Mean squared error over all entries.
pub fn loss_l0(x0: &SeriesBatch, x0_hat: &SeriesBatch) -> Result<f64> {
    if x0.dim() != x0_hat.dim() {
        return Err(Error::ShapeMismatch(format!(
            "x0 {:?} vs x0_hat {:?}",
            x0.dim(),
            x0_hat.dim()
        )));
    }
    let n = x0.len() as f64;
    Ok(x0
        .iter()
        .zip(x0_hat.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Combined objective `(L_total, L0, L_pop)`; `alpha = 0` skips the
/// population term entirely.
pub fn loss_total(
    x0: &SeriesBatch,
    x0_hat: &SeriesBatch,
    alpha: f64,
    bw: &BandwidthSet,
) -> Result<(f64, f64, f64)> {
    let l0 = loss_l0(x0, x0_hat)?;
    if alpha == 0.0 {
        return Ok((l0, l0, 0.0));
    }
    let lp = l_pop(x0, x0_hat, bw)?;
    Ok((l0 + alpha * lp, l0, lp))
}

/// AdamW: adaptive moments with decoupled weight decay.
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64, n_params: usize) -> AdamW {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -=
                self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Global-norm gradient clip threshold; triggering is recorded per epoch.
const CLIP_NORM: f64 = 1.0;

/// Train and receive the final state and log; `sink` runs after every
/// iteration with the 1-based epoch, current state, and log so far —
/// callers use it for progress output and for persisting intermediate
/// checkpoints at the `checkpoint_every` cadence.
pub fn train_with<F>(dataset: &Dataset, cfg: &TrainConfig, mut sink: F) -> Result<(BackboneState, TrainLog)>
where
    F: FnMut(usize, &BackboneState, &TrainLog) -> Result<()>,
{
    cfg.validate(dataset)?;
    let sched = cfg.schedule.build(cfg.t_count);
    let mut state = BackboneState::init(cfg.backbone, cfg.t_count, cfg.seed)?;
    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay, state.param_count());
    // The training stream is separated from the init stream so that
    // replaying one never perturbs the other.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let n = dataset.n();
    let (l, f) = (dataset.length(), dataset.features());
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n; // forces a shuffle before the first batch
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        // next without-replacement batch; too-small tails are skipped when
        // the population loss needs a distribution per side
        let indices: Vec<usize> = loop {
            if cursor >= n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let take = cfg.batch.min(n - cursor);
            let slice = order[cursor..cursor + take].to_vec();
            cursor += take;
            if cfg.alpha > 0.0 && take < 2 {
                continue;
            }
            break slice;
        };
        let started = Instant::now();
        let b = indices.len();
        let x0 = dataset.samples.select(Axis(0), &indices);
        let t = sample_steps(b, cfg.t_count, cfg.strategy, &mut rng);
        let eps = randn_batch(b, l, f, &mut rng);
        let xt = forward_sample(&x0, &t, &eps, &sched)?;

        let mut tape = Tape::new();
        let bound = state.bind(&mut tape);
        let x_in = tape.leaf(xt.into_dyn());
        let y = forward(&mut tape, &bound, &cfg.backbone, x_in, &t.steps);
        let target = tape.leaf(x0.clone().into_dyn());
        let diff = tape.sub(y, target);
        let sq = tape.mul(diff, diff);
        let l0_node = tape.mean_all(sq);
        let (total_node, l_pop_val) = if cfg.alpha > 0.0 {
            let lp = population_loss(&mut tape, &x0, y, &cfg.bandwidths)?;
            let scaled = tape.scale(lp, cfg.alpha);
            (tape.add(l0_node, scaled), tape.scalar(lp))
        } else {
            (l0_node, 0.0)
        };
        let l0_val = tape.scalar(l0_node);
        let total_val = tape.scalar(total_node);
        if !total_val.is_finite() {
            return Err(Error::Diverged { epoch, loss: total_val });
        }
        tape.backward(total_node);

        // flat gradient in parameter order; missing grads are zeros
        let mut grads = Vec::with_capacity(opt.m.len());
        for v in &bound.all {
            match tape.grad(*v) {
                Some(g) => grads.extend(g.iter().copied()),
                None => grads.resize(grads.len() + tape.value(*v).len(), 0.0),
            }
        }
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let clipped = norm > CLIP_NORM;
        if clipped {
            let scale = CLIP_NORM / norm;
            grads.iter_mut().for_each(|g| *g *= scale);
        }
        let mut params = state.param_vec();
        opt.step(&mut params, &grads);
        state.load_param_vec(&params)?;

        log.records.push(TrainRecord {
            epoch,
            l0: l0_val,
            l_pop: l_pop_val,
            l_total: total_val,
            t1: t.steps[0],
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            clipped,
        });
        sink(epoch + 1, &state, &log)?;
    }
    Ok((state, log))
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(BackboneState, TrainLog)> {
    train_with(dataset, cfg, |_, _, _| Ok(()))
}
