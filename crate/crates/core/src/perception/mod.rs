//! Perception stages behind a pluggable backend interface: instance
//! segmentation, hole inpainting and two-stage pose estimation. The
//! reference backends are classical and fully deterministic.

mod inpaint;
mod pose;
mod segment;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inpaint::{inpaint, InpaintQuality, DEFAULT_CONVERGED_TOL, DEFAULT_FAST_ITERS};
pub use pose::{instance_extent, pose_coarse, pose_refine, CONFIDENCE_HALF_AREA};
pub use segment::segment;

use crate::scenegen::DEFAULT_FACE_COLORS;
use crate::types::{Frame, InstanceMask, Pose6D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("mask is {actual:?}, frame is {expected:?}")]
    DimMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("hole component at ({x}, {y}) touches no known pixel")]
    NoBoundary { x: u32, y: u32 },
    #[error("frame carries no depth plane")]
    NoDepth,
    #[error("instance {0} not present in mask")]
    EmptyInstance(u16),
    #[error("no finite positive depth under the instance")]
    DegenerateDepth,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

/// Which real object is removed and tracked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpec {
    pub key_colors: Vec<[u8; 3]>,
    /// Max per-channel absolute difference that still counts as a match.
    pub tolerance: u8,
    /// Label of the instance the session follows.
    pub track_instance: u16,
    pub min_instance_px: usize,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            key_colors: DEFAULT_FACE_COLORS.to_vec(),
            tolerance: 12,
            track_instance: 1,
            min_instance_px: 16,
        }
    }
}

impl TargetSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.key_colors.is_empty() {
            return Err("at least one key color is required".into());
        }
        if self.track_instance == 0 {
            return Err("track_instance 0 is background".into());
        }
        Ok(())
    }
}

/// Intermediate pose-estimation output, cheap enough to compare between
/// consecutive frames before committing to the full estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseFeatures {
    pub centroid_cam: [f64; 3],
    pub extent_cam: [f64; 3],
    pub mask_area_px: usize,
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, frame: &Frame, spec: &TargetSpec) -> Result<InstanceMask, PerceptionError>;
}

pub trait Inpainter: Send + Sync {
    fn inpaint(
        &self,
        frame: &Frame,
        mask: &InstanceMask,
        quality: InpaintQuality,
    ) -> Result<Frame, PerceptionError>;
}

pub trait PoseEstimator: Send + Sync {
    fn coarse(
        &self,
        frame: &Frame,
        mask: &InstanceMask,
        instance: u16,
    ) -> Result<PoseFeatures, PerceptionError>;

    fn refine(
        &self,
        features: &PoseFeatures,
        frame: &Frame,
        mask: &InstanceMask,
        instance: u16,
    ) -> Result<Pose6D, PerceptionError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ChromaKeySegmenter;

impl Segmenter for ChromaKeySegmenter {
    fn segment(&self, frame: &Frame, spec: &TargetSpec) -> Result<InstanceMask, PerceptionError> {
        Ok(segment(frame, spec))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HarmonicInpainter;

impl Inpainter for HarmonicInpainter {
    fn inpaint(
        &self,
        frame: &Frame,
        mask: &InstanceMask,
        quality: InpaintQuality,
    ) -> Result<Frame, PerceptionError> {
        inpaint(frame, mask, quality)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DepthPcaPoseEstimator;

impl PoseEstimator for DepthPcaPoseEstimator {
    fn coarse(
        &self,
        frame: &Frame,
        mask: &InstanceMask,
        instance: u16,
    ) -> Result<PoseFeatures, PerceptionError> {
        pose_coarse(frame, mask, instance)
    }

    fn refine(
        &self,
        features: &PoseFeatures,
        frame: &Frame,
        mask: &InstanceMask,
        instance: u16,
    ) -> Result<Pose6D, PerceptionError> {
        pose_refine(features, frame, mask, instance)
    }
}

/// The three stage implementations a session runs. Shared read-only across
/// sessions.
#[derive(Clone)]
pub struct BackendSet {
    pub segmenter: Arc<dyn Segmenter>,
    pub inpainter: Arc<dyn Inpainter>,
    pub pose_estimator: Arc<dyn PoseEstimator>,
}

impl Default for BackendSet {
    fn default() -> Self {
        Self {
            segmenter: Arc::new(ChromaKeySegmenter),
            inpainter: Arc::new(HarmonicInpainter),
            pose_estimator: Arc::new(DepthPcaPoseEstimator),
        }
    }
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendSet").finish_non_exhaustive()
    }
}
