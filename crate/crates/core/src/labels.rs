//! Class labels shared by the generator, the learners and the broker.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Class order of the video identifier. Index order is also the tie-break order.
pub const IDENTIFIER_CLASSES: [&str; 2] = ["video", "nonvideo"];

/// Class order of the resolution classifier.
pub const RESOLUTION_CLASSES: [&str; 4] = ["low", "medium", "high", "ultrahigh"];

/// Resolution tier of a video stream.
///
/// low covers 144p-360p, medium 480p-720p, high 1080p-1440p, ultrahigh 4K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Low,
    Medium,
    High,
    UltraHigh,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [
        Resolution::Low,
        Resolution::Medium,
        Resolution::High,
        Resolution::UltraHigh,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Resolution> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        RESOLUTION_CLASSES[self.index()]
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Resolution {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RESOLUTION_CLASSES
            .iter()
            .position(|c| *c == s)
            .and_then(Resolution::from_index)
            .ok_or(UnknownLabel)
    }
}

/// Output of the video identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamClass {
    Video,
    NonVideo,
}

impl StreamClass {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<StreamClass> {
        match i {
            0 => Some(StreamClass::Video),
            1 => Some(StreamClass::NonVideo),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        IDENTIFIER_CLASSES[self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label")]
pub struct UnknownLabel;
