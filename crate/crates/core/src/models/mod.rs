//! Forecasters producing per-step Gaussian predictive distributions.

mod ar;
mod rnn;

pub use ar::{ar_forecast, fit_ar, ArModel};
pub use rnn::{rnn_loss_and_gradient, BatchForward, LossAndGradient, RecurrentForecaster};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};

/// Smallest standard deviation a forecaster emits.
pub const STD_FLOOR: f64 = 1e-4;

/// Mean and standard deviation for each of the `h` forecast steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDistribution {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ForecastDistribution {
    pub fn horizon(&self) -> usize {
        self.means.len()
    }
}

pub trait Forecaster {
    fn forecast(&self, history: &[f64], h: usize) -> Result<ForecastDistribution>;
}

/// Either forecaster, as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Ar(ArModel),
    Rnn(RecurrentForecaster),
}

impl Forecaster for AnyModel {
    fn forecast(&self, history: &[f64], h: usize) -> Result<ForecastDistribution> {
        match self {
            Self::Ar(m) => m.forecast(history, h),
            Self::Rnn(m) => m.forecast(history, h),
        }
    }
}

impl AnyModel {
    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        match self {
            Self::Ar(m) => m.write_to(ckpt),
            Self::Rnn(m) => m.write_to(ckpt),
        }
    }

    pub fn read_from(ckpt: &Checkpoint) -> Result<Self> {
        match ckpt.get("model")? {
            "ar" => Ok(Self::Ar(ArModel::read_from(ckpt)?)),
            "rnn" => Ok(Self::Rnn(RecurrentForecaster::read_from(ckpt)?)),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }
}
