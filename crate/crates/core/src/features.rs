//! Attribute extraction from per-second traffic profiles.
//!
//! Seven attributes describe a profile: the fraction of idle seconds, the mean
//! rate, and the coefficient of variation of the rate measured over 1, 2, 4,
//! 8 and 16 second windows. A CV needs at least four windows, so short
//! profiles only carry the fine timescales.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Window lengths, in seconds, of the burstiness attributes.
pub const TIMESCALES: [usize; 5] = [1, 2, 4, 8, 16];
/// Minimum number of whole windows for a CV to be defined.
pub const MIN_WINDOWS: usize = 4;
pub const N_ATTRIBUTES: usize = 7;
pub const ATTRIBUTE_NAMES: [&str; N_ATTRIBUTES] = ["idle", "mean_rate", "cv1", "cv2", "cv4", "cv8", "cv16"];

/// Sub-profile windows over a 128 s profile, as inclusive 1-based seconds.
pub const SUBPROFILE_WINDOWS: [(usize, usize); 8] = [
    (1, 16),
    (1, 32),
    (1, 48),
    (1, 64),
    (17, 80),
    (33, 96),
    (49, 112),
    (65, 128),
];
pub const TRAINING_PROFILE_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub start_time: f64,
    /// Bytes per second; bin `i` covers `[start_time + i, start_time + i + 1)`.
    pub bins: Vec<f64>,
}

impl TrafficProfile {
    pub fn new(start_time: f64, bins: Vec<f64>) -> Self {
        TrafficProfile { start_time, bins }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bins `[from, to)` as a new profile.
    pub fn slice(&self, from: usize, to: usize) -> TrafficProfile {
        TrafficProfile {
            start_time: self.start_time + from as f64,
            bins: self.bins[from..to].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub idle_fraction: f64,
    pub mean_rate: f64,
    /// CV at each of [`TIMESCALES`]; `None` when unavailable.
    pub cv: [Option<f64>; 5],
}

impl AttributeVector {
    pub fn values(&self) -> [Option<f64>; N_ATTRIBUTES] {
        let [c1, c2, c4, c8, c16] = self.cv;
        [Some(self.idle_fraction), Some(self.mean_rate), c1, c2, c4, c8, c16]
    }

    pub fn from_values(v: &[Option<f64>]) -> Option<AttributeVector> {
        if v.len() != N_ATTRIBUTES {
            return None;
        }
        Some(AttributeVector {
            idle_fraction: v[0]?,
            mean_rate: v[1]?,
            cv: [v[2], v[3], v[4], v[5], v[6]],
        })
    }

    /// Timescales whose CV is available.
    pub fn available_timescales(&self) -> Vec<usize> {
        TIMESCALES
            .iter()
            .zip(self.cv.iter())
            .filter(|(_, c)| c.is_some())
            .map(|(k, _)| *k)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("expected a {expected}-bin profile, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("profile has no bins")]
    Empty,
}

pub fn idle_fraction(profile: &TrafficProfile) -> f64 {
    if profile.bins.is_empty() {
        return 0.0;
    }
    let idle = profile.bins.iter().filter(|b| **b == 0.0).count();
    idle as f64 / profile.bins.len() as f64
}

pub fn mean_rate(profile: &TrafficProfile) -> f64 {
    if profile.bins.is_empty() {
        return 0.0;
    }
    profile.bins.iter().sum::<f64>() / profile.bins.len() as f64
}

/// Coefficient of variation of the rate over `k`-second windows.
///
/// Whole windows only; a trailing partial window is dropped. The spread is
/// the population standard deviation of window rates, normalized by the mean
/// rate of the entire profile.
pub fn cv(profile: &TrafficProfile, k: usize) -> Option<f64> {
    if k == 0 {
        return None;
    }
    let windows = profile.bins.len() / k;
    if windows < MIN_WINDOWS {
        return None;
    }
    let mu = mean_rate(profile);
    if mu <= 0.0 {
        return None;
    }
    // Welford
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for w in profile.bins.chunks_exact(k) {
        let rate = w.iter().sum::<f64>() / k as f64;
        n += 1.0;
        let d = rate - mean;
        mean += d / n;
        m2 += d * (rate - mean);
    }
    let var = (m2 / n).max(0.0);
    Some(libm::sqrt(var) / mu)
}

pub fn attributes(profile: &TrafficProfile) -> AttributeVector {
    let mut out = AttributeVector {
        idle_fraction: idle_fraction(profile),
        mean_rate: mean_rate(profile),
        cv: [None; 5],
    };
    for (slot, k) in out.cv.iter_mut().zip(TIMESCALES) {
        *slot = cv(profile, k);
    }
    out
}

/// Splits a 128-bin profile into the eight training sub-profiles.
pub fn make_subprofiles(profile: &TrafficProfile) -> Result<Vec<TrafficProfile>, FeatureError> {
    if profile.bins.len() != TRAINING_PROFILE_LEN {
        return Err(FeatureError::WrongLength {
            expected: TRAINING_PROFILE_LEN,
            actual: profile.bins.len(),
        });
    }
    Ok(SUBPROFILE_WINDOWS
        .iter()
        .map(|&(first, last)| profile.slice(first - 1, last))
        .collect())
}

/// Label of a sub-profile window, e.g. `"17-80"`.
pub fn window_label(window: (usize, usize)) -> alloc::string::String {
    alloc::format!("{}-{}", window.0, window.1)
}
