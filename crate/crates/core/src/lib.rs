//! Population-aware diffusion for multivariate time series: dataset
//! plumbing, the diffusion schedule, a dual-channel transformer denoiser,
//! a training objective that adds a cross-correlation distribution-shift
//! penalty, and the evaluation suite for individual- and population-level
//! fidelity.

pub mod backbone;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod plots;
pub mod schedule;
pub mod stats;
pub mod tape;
pub mod train;

pub use data::{Dataset, RawTable, Scaler, SeriesBatch};
pub use error::{Error, Result};
pub use eval::{EvalSettings, MetricReport};
pub use plots::{export_plots, EmbedKind};
pub use schedule::{NoiseSchedule, ScheduleKind, StepSampling, StepVector};
pub use stats::BandwidthSet;
pub use train::{TrainConfig, TrainLog};
