//! Closed-form diffusion mathematics: the cosine variance schedule, the
//! forward (noising) marginal, the clean-signal reparametrization, the
//! reverse posterior, and ancestral sampling driven by a denoising model.
//!
//! Steps are 0-indexed: index `t` holds the coefficients after `t + 1`
//! applications of forward noise, so `alpha_bar[0] = alpha[0]` and the
//! final index `T - 1` is the fully-noised end of the chain.

use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::SeriesBatch;
use crate::error::{Error, Result};

/// Precomputed per-step coefficients of a fixed variance schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Posterior-mean weight on the clean signal (index 0 uses the
    /// `alpha_bar[-1] = 1` convention and is never consumed).
    pub posterior_coef_x0: Vec<f64>,
    /// Posterior-mean weight on the noisy signal.
    pub posterior_coef_xt: Vec<f64>,
    /// Reverse-step variance; this schedule uses `beta[t]`.
    pub posterior_var: Vec<f64>,
}

/// Cosine schedule: `alpha_bar` follows `f(t)/f(0)` with
/// `f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2)`, `s = 0.008`. The implied
/// per-step `beta` is clipped to `[1e-8, 0.999]` and `alpha_bar` is then
/// recomputed as a running product so the product identity holds exactly.
pub fn cosine_schedule(steps: usize) -> NoiseSchedule {
    assert!(steps >= 2, "schedule needs at least 2 steps");
    let s = 0.008;
    let f = |t: f64| {
        let u = (t / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
        u.cos().powi(2)
    };
    let f0 = f(0.0);
    let mut beta = Vec::with_capacity(steps);
    let mut prev = 1.0;
    for i in 0..steps {
        let cur = f((i + 1) as f64) / f0;
        beta.push((1.0 - cur / prev).clamp(1e-8, 0.999));
        prev = cur;
    }
    from_betas(beta)
}

fn from_betas(beta: Vec<f64>) -> NoiseSchedule {
    let steps = beta.len();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for &a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let mut coef_x0 = Vec::with_capacity(steps);
    let mut coef_xt = Vec::with_capacity(steps);
    for t in 0..steps {
        let ab_prev = if t == 0 { 1.0 } else { alpha_bar[t - 1] };
        let denom = 1.0 - alpha_bar[t];
        coef_x0.push(ab_prev.sqrt() * beta[t] / denom);
        coef_xt.push(alpha[t].sqrt() * (1.0 - ab_prev) / denom);
    }
    NoiseSchedule {
        steps,
        posterior_var: beta.clone(),
        beta,
        alpha,
        alpha_bar,
        posterior_coef_x0: coef_x0,
        posterior_coef_xt: coef_xt,
    }
}

/// Named schedule constructor, recorded in checkpoints so a schedule can
/// be rebuilt from `(kind, steps)` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
}

impl ScheduleKind {
    pub fn build(self, steps: usize) -> NoiseSchedule {
        match self {
            ScheduleKind::Cosine => cosine_schedule(steps),
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(format!("unknown schedule {other:?}")),
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleKind::Cosine => write!(f, "cosine"),
        }
    }
}

/// Per-sample diffusion step indices for one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepVector {
    pub steps: Vec<usize>,
}

impl StepVector {
    pub fn constant(t: usize, batch: usize) -> Self {
        StepVector { steps: vec![t; batch] }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// How training draws diffusion steps for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSampling {
    /// Independent uniform draws from `[1, T-1]` per sample.
    Uniform,
    /// One uniform draw from `[1, T-1]` shared by the whole batch, so the
    /// batch forms a same-step sample of the noisy distribution.
    Shared,
}

impl std::str::FromStr for StepSampling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(StepSampling::Uniform),
            "shared" | "sss" => Ok(StepSampling::Shared),
            other => Err(format!("unknown step sampling strategy {other:?}")),
        }
    }
}

impl std::fmt::Display for StepSampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepSampling::Uniform => write!(f, "uniform"),
            StepSampling::Shared => write!(f, "shared"),
        }
    }
}

/// Draw a step vector for a batch of size `b`. Both strategies draw from
/// `[1, T-1]`; step 0 is never sampled during training.
pub fn sample_steps(b: usize, t_count: usize, strategy: StepSampling, rng: &mut impl Rng) -> StepVector {
    assert!(b >= 1 && t_count >= 2);
    match strategy {
        StepSampling::Uniform => StepVector {
            steps: (0..b).map(|_| rng.gen_range(1..t_count)).collect(),
        },
        StepSampling::Shared => StepVector::constant(rng.gen_range(1..t_count), b),
    }
}

fn check_steps(t: &StepVector, batch: usize, sched: &NoiseSchedule) -> Result<()> {
    if t.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "step vector has {} entries for batch of {}",
            t.len(),
            batch
        )));
    }
    for &s in &t.steps {
        if s >= sched.steps {
            return Err(Error::InvalidStep { step: s, total: sched.steps });
        }
    }
    Ok(())
}

/// Closed-form forward marginal: `sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`
/// with per-sample steps.
pub fn forward_sample(
    x0: &SeriesBatch,
    t: &StepVector,
    eps: &SeriesBatch,
    sched: &NoiseSchedule,
) -> Result<SeriesBatch> {
    if x0.dim() != eps.dim() {
        return Err(Error::ShapeMismatch(format!(
            "x0 {:?} vs eps {:?}",
            x0.dim(),
            eps.dim()
        )));
    }
    check_steps(t, x0.dim().0, sched)?;
    let mut out = x0.clone();
    for (i, mut sample) in out.outer_iter_mut().enumerate() {
        let ab = sched.alpha_bar[t.steps[i]];
        let (ca, cb) = (ab.sqrt(), (1.0 - ab).sqrt());
        sample.zip_mut_with(&eps.index_axis(ndarray::Axis(0), i), |x, &e| {
            *x = ca * *x + cb * e;
        });
    }
    Ok(out)
}

/// Invert the forward marginal: recover the clean signal from `(xt, eps)`.
pub fn reparam_x0(
    xt: &SeriesBatch,
    eps: &SeriesBatch,
    t: &StepVector,
    sched: &NoiseSchedule,
) -> Result<SeriesBatch> {
    if xt.dim() != eps.dim() {
        return Err(Error::ShapeMismatch(format!(
            "xt {:?} vs eps {:?}",
            xt.dim(),
            eps.dim()
        )));
    }
    check_steps(t, xt.dim().0, sched)?;
    let mut out = xt.clone();
    for (i, mut sample) in out.outer_iter_mut().enumerate() {
        let ab = sched.alpha_bar[t.steps[i]];
        let (ca, cb) = (ab.sqrt(), (1.0 - ab).sqrt());
        sample.zip_mut_with(&eps.index_axis(ndarray::Axis(0), i), |x, &e| {
            *x = (*x - cb * e) / ca;
        });
    }
    Ok(out)
}

/// Mean of the reverse posterior `q(x^{t-1} | x^t, x^0)`.
pub fn posterior_mean(
    xt: &SeriesBatch,
    x0: &SeriesBatch,
    t: &StepVector,
    sched: &NoiseSchedule,
) -> Result<SeriesBatch> {
    if xt.dim() != x0.dim() {
        return Err(Error::ShapeMismatch(format!(
            "xt {:?} vs x0 {:?}",
            xt.dim(),
            x0.dim()
        )));
    }
    check_steps(t, xt.dim().0, sched)?;
    if t.steps.iter().any(|&s| s == 0) {
        return Err(Error::PosteriorAtStepZero);
    }
    let mut out = x0.clone();
    for (i, mut sample) in out.outer_iter_mut().enumerate() {
        let step = t.steps[i];
        let (c0, ct) = (sched.posterior_coef_x0[step], sched.posterior_coef_xt[step]);
        sample.zip_mut_with(&xt.index_axis(ndarray::Axis(0), i), |x, &n| {
            *x = c0 * *x + ct * n;
        });
    }
    Ok(out)
}

/// One ancestral step of the reverse chain. For `t >= 1`, the posterior
/// mean plus `sqrt(beta[t])` noise; the final step `t = 0` returns the
/// model's clean prediction without noise.
pub fn reverse_step(
    x0_hat: &SeriesBatch,
    xt: &SeriesBatch,
    t: &StepVector,
    noise: &SeriesBatch,
    sched: &NoiseSchedule,
) -> Result<SeriesBatch> {
    if x0_hat.dim() != xt.dim() || noise.dim() != xt.dim() {
        return Err(Error::ShapeMismatch(format!(
            "x0_hat {:?}, xt {:?}, noise {:?}",
            x0_hat.dim(),
            xt.dim(),
            noise.dim()
        )));
    }
    check_steps(t, xt.dim().0, sched)?;
    let mut out = x0_hat.clone();
    for (i, mut sample) in out.outer_iter_mut().enumerate() {
        let step = t.steps[i];
        if step == 0 {
            continue; // already x0_hat
        }
        let (c0, ct) = (sched.posterior_coef_x0[step], sched.posterior_coef_xt[step]);
        let sd = sched.posterior_var[step].sqrt();
        let xti = xt.index_axis(ndarray::Axis(0), i);
        let ni = noise.index_axis(ndarray::Axis(0), i);
        ndarray::Zip::from(&mut sample)
            .and(&xti)
            .and(&ni)
            .for_each(|o, &x, &z| *o = c0 * *o + ct * x + sd * z);
    }
    Ok(out)
}

/// Anything that predicts the clean series from a noisy batch at given
/// steps. Implemented by the trained backbone and by test mocks.
pub trait Denoiser {
    fn predict_x0(&self, xt: &SeriesBatch, t: &StepVector) -> Result<SeriesBatch>;
    fn series_length(&self) -> usize;
    fn series_features(&self) -> usize;
}

/// Standard-normal batch of the given shape.
pub fn randn_batch(n: usize, l: usize, f: usize, rng: &mut impl Rng) -> SeriesBatch {
    let mut out = Array3::zeros((n, l, f));
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    out
}

/// Samples per chunk during generation; bounds transient memory. The
/// output is a deterministic function of the seed and `n`.
const GENERATE_CHUNK: usize = 64;

/// Draw `n` synthetic series by ancestral sampling from pure noise,
/// querying `model` for the clean-signal prediction at every step.
/// The result is clipped to the normalized range [-1, 1].
pub fn generate<M: Denoiser>(
    model: &M,
    n: usize,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<SeriesBatch> {
    assert!(n >= 1, "generate: n must be >= 1");
    let (l, f) = (model.series_length(), model.series_features());
    let mut out = Array3::zeros((n, l, f));
    let mut done = 0;
    while done < n {
        let b = GENERATE_CHUNK.min(n - done);
        let mut x = randn_batch(b, l, f, rng);
        for step in (0..sched.steps).rev() {
            let t = StepVector::constant(step, b);
            let x0_hat = model.predict_x0(&x, &t)?;
            let noise = if step == 0 {
                Array3::zeros((b, l, f))
            } else {
                randn_batch(b, l, f, rng)
            };
            x = reverse_step(&x0_hat, &x, &t, &noise, sched)?;
        }
        x.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        out.slice_mut(ndarray::s![done..done + b, .., ..]).assign(&x);
        done += b;
    }
    Ok(out)
}
