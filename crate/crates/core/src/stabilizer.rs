//! Ranging stabilization.
//!
//! A UWB-derived beacon position is accepted once successive observations have
//! stayed within a disparity threshold of each other for a full period. The
//! accepted position is the centroid of the samples covering that period.

use std::collections::VecDeque;

use thiserror::Error;

use crate::pose::Vec3;

/// Slack applied to timestamp comparisons so that sample clocks built from
/// `n * dt` land on period boundaries.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangingSample {
    pub position: Vec3,
    pub timestamp: f64,
}

impl RangingSample {
    pub fn new(position: Vec3, timestamp: f64) -> Self {
        Self {
            position,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizerConfig {
    /// Maximum distance between successive observations, metres.
    pub disparity_threshold: f64,
    /// Period the observations must stay consistent for, seconds.
    pub stable_duration: f64,
    /// Give up this long after the first sample, seconds.
    pub timeout: f64,
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        Self {
            disparity_threshold: 0.05,
            stable_duration: 2.0,
            timeout: 60.0,
        }
    }
}

impl StabilizerConfig {
    pub fn validate(&self) -> Result<(), StabilizerError> {
        let ok = self.disparity_threshold > 0.0
            && self.stable_duration > 0.0
            && self.timeout > self.stable_duration;
        if ok {
            Ok(())
        } else {
            Err(StabilizerError::InvalidConfig(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilizerState {
    Collecting,
    Stable { position: Vec3, stabilized_at: f64 },
    TimedOut,
}

impl StabilizerState {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, StabilizerState::Collecting)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum StabilizerError {
    #[error("sample at {got}s arrived after a sample at {last}s")]
    OutOfOrderSample { last: f64, got: f64 },
    #[error("push after the stabilizer reached a terminal state")]
    PushAfterTerminal,
    #[error("sample has a non-finite component")]
    NonFiniteSample,
    #[error("invalid stabilizer config {0:?}")]
    InvalidConfig(StabilizerConfig),
}

/// Consecutive-disparity stabilizer for one (device, beacon) ranging stream.
#[derive(Debug, Clone)]
pub struct Stabilizer {
    config: StabilizerConfig,
    /// Current unbroken run: every successive pair is within the threshold.
    run: VecDeque<RangingSample>,
    first_timestamp: Option<f64>,
    state: StabilizerState,
}

impl Stabilizer {
    pub fn new(config: StabilizerConfig) -> Result<Self, StabilizerError> {
        config.validate()?;
        Ok(Self {
            config,
            run: VecDeque::new(),
            first_timestamp: None,
            state: StabilizerState::Collecting,
        })
    }

    pub fn config(&self) -> &StabilizerConfig {
        &self.config
    }

    pub fn state(&self) -> StabilizerState {
        self.state
    }

    pub fn reset(&mut self) {
        self.run.clear();
        self.first_timestamp = None;
        self.state = StabilizerState::Collecting;
    }

    pub fn push(&mut self, sample: RangingSample) -> Result<StabilizerState, StabilizerError> {
        if self.state.is_terminal() {
            return Err(StabilizerError::PushAfterTerminal);
        }
        if !sample.timestamp.is_finite() || sample.position.iter().any(|v| !v.is_finite()) {
            return Err(StabilizerError::NonFiniteSample);
        }
        if let Some(last) = self.run.back() {
            if sample.timestamp < last.timestamp {
                return Err(StabilizerError::OutOfOrderSample {
                    last: last.timestamp,
                    got: sample.timestamp,
                });
            }
            if (sample.position - last.position).norm() > self.config.disparity_threshold {
                self.run.clear();
            }
        }
        let first = *self.first_timestamp.get_or_insert(sample.timestamp);
        self.run.push_back(sample);

        // The window starts at the last sample at or before `now - T`; drop
        // anything older since it can no longer take part.
        let cutoff = sample.timestamp - self.config.stable_duration + TIME_SLACK;
        while self.run.len() > 1 && self.run[1].timestamp <= cutoff {
            self.run.pop_front();
        }
        if self.run.len() >= 2 && self.run[0].timestamp <= cutoff {
            let sum = self
                .run
                .iter()
                .fold(Vec3::zeros(), |acc, s| acc + s.position);
            self.state = StabilizerState::Stable {
                position: sum / self.run.len() as f64,
                stabilized_at: sample.timestamp,
            };
        } else if sample.timestamp - first > self.config.timeout {
            self.state = StabilizerState::TimedOut;
        }
        Ok(self.state)
    }
}
