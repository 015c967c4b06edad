//! EEG data handling: the epoch container and its binary format, synthetic
//! generation, preprocessing (band-pass, resample, trim, z-score), event
//! windowing, and subject-aware split protocols.

pub mod filter;
pub mod io;
pub mod split;
pub mod synth;
pub mod window;

pub use filter::{bandpass_filter, design_bandpass_taps, resample, trim_trailing};
pub use io::{load_epochs, save_epochs, EPOCH_MAGIC};
pub use split::{
    loso_plans, make_splits, zscore_normalize, SplitPlan, SplitProtocol,
    KAGGLE_ERN_TEST_SUBJECTS, PHYSIO_P300_SUBJECTS,
};
pub use synth::{synth_generate, ClassSignal, SynthSpec};
pub use window::{window_segment, ContinuousRecording, EventMarker};

use crate::error::{Error, Result};
use crate::nn::Tensor4;

/// A set of labeled EEG trials sharing one [channels x samples] layout.
/// Values are in microvolts; trials are stored contiguously, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<f64>,
    pub labels: Vec<u16>,
    pub subject_ids: Vec<u16>,
    pub session_ids: Vec<u16>,
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub sample_rate: f32,
    pub channel_names: Vec<String>,
    /// Audit trail of every preprocessing step applied, in order.
    pub preprocessing_log: Vec<String>,
}

impl EpochSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        epochs: Vec<f64>,
        labels: Vec<u16>,
        subject_ids: Vec<u16>,
        session_ids: Vec<u16>,
        n_channels: usize,
        n_samples: usize,
        n_classes: usize,
        sample_rate: f32,
    ) -> Result<Self> {
        let n_trials = labels.len();
        if subject_ids.len() != n_trials || session_ids.len() != n_trials {
            return Err(Error::Shape(format!(
                "labels ({}), subject_ids ({}) and session_ids ({}) must agree",
                n_trials,
                subject_ids.len(),
                session_ids.len()
            )));
        }
        if epochs.len() != n_trials * n_channels * n_samples {
            return Err(Error::Shape(format!(
                "epoch payload has {} values, expected {} trials x {} channels x {} samples",
                epochs.len(),
                n_trials,
                n_channels,
                n_samples
            )));
        }
        if sample_rate <= 0.0 {
            return Err(Error::Argument(format!(
                "sample_rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let channel_names = (0..n_channels).map(|c| format!("ch{c}")).collect();
        Ok(EpochSet {
            epochs,
            labels,
            subject_ids,
            session_ids,
            n_trials,
            n_channels,
            n_samples,
            n_classes,
            sample_rate,
            channel_names,
            preprocessing_log: Vec::new(),
        })
    }

    pub fn trial(&self, index: usize) -> &[f64] {
        let stride = self.n_channels * self.n_samples;
        &self.epochs[index * stride..(index + 1) * stride]
    }

    pub fn trial_mut(&mut self, index: usize) -> &mut [f64] {
        let stride = self.n_channels * self.n_samples;
        &mut self.epochs[index * stride..(index + 1) * stride]
    }

    pub fn sample(&self, trial: usize, channel: usize, t: usize) -> f64 {
        self.epochs[(trial * self.n_channels + channel) * self.n_samples + t]
    }

    /// Distinct subject ids, ascending.
    pub fn subjects(&self) -> Vec<u16> {
        let mut s: Vec<u16> = self.subject_ids.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Assemble the selected trials into a [B, 1, C, T] model input plus labels.
    pub fn batch_tensor(&self, idx: &[usize]) -> Result<(Tensor4, Vec<u16>)> {
        if idx.is_empty() {
            return Err(Error::Argument("empty trial selection".into()));
        }
        let stride = self.n_channels * self.n_samples;
        let mut data = Vec::with_capacity(idx.len() * stride);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.n_trials {
                return Err(Error::Index(format!(
                    "trial {i} out of range for {} trials",
                    self.n_trials
                )));
            }
            data.extend_from_slice(self.trial(i));
            labels.push(self.labels[i]);
        }
        let tensor = Tensor4::from_vec(data, [idx.len(), 1, self.n_channels, self.n_samples])?;
        Ok((tensor, labels))
    }

    pub(crate) fn log_step(&mut self, step: String) {
        self.preprocessing_log.push(step);
    }
}
