//! Shared domain types: frames, masks, poses, camera model and the latency
//! budget arithmetic used by every stage.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted frame side, in pixels.
pub const MAX_DIM: u32 = 8192;

/// Tolerance on `| |q| - 1 |` for quaternions that claim to be unit-norm.
pub const UNIT_QUAT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("fps must be a positive finite number, got {0}")]
    NonPositiveFps(f64),
    #[error("quaternion is not unit-norm (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("{what}: expected {expected} elements, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f32),
    #[error("non-finite pose component")]
    NonFinitePose,
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid instance mask: {0}")]
    InvalidMask(String),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
}

impl PinholeIntrinsics {
    pub fn new(fx: f32, fy: f32, cx: f32, cy: f32) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(CoreError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(CoreError::InvalidIntrinsics(
                "principal point must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Checks the principal point lies inside a `width` x `height` image.
    pub fn validate_for(&self, width: u32, height: u32) -> Result<()> {
        self.validate()?;
        if self.cx < 0.0 || self.cx >= width as f32 || self.cy < 0.0 || self.cy >= height as f32 {
            return Err(CoreError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {width}x{height}",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Pinhole projection of a camera-space point to pixel coordinates.
    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 2]> {
        let [x, y, z] = p;
        if !(z > 0.0) {
            return Err(CoreError::BehindCamera(z));
        }
        Ok([
            self.fx as f64 * x / z + self.cx as f64,
            self.fy as f64 * y / z + self.cy as f64,
        ])
    }

    /// Inverse projection of pixel `(u, v)` at the given depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [
            (u - self.cx as f64) / self.fx as f64 * depth,
            (v - self.cy as f64) / self.fy as f64 * depth,
            depth,
        ]
    }
}

/// Rigid transform plus a confidence score.
///
/// Translation is in meters, rotation a unit quaternion stored `(w, x, y, z)`.
/// Components are single precision so that every pose survives the wire
/// protocol bit-for-bit; arithmetic happens in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6D {
    pub t: [f32; 3],
    pub q: [f32; 4],
    #[serde(default = "full_confidence")]
    pub confidence: f32,
}

fn full_confidence() -> f32 {
    1.0
}

impl Pose6D {
    pub fn new(t: [f32; 3], q: [f32; 4], confidence: f32) -> Result<Self> {
        let pose = Self { t, q, confidence };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            t: [0.0; 3],
            q: [1.0, 0.0, 0.0, 0.0],
            confidence: 1.0,
        }
    }

    /// Builds a pose from double-precision parts, normalizing the rotation.
    pub fn from_parts(t: Vector3<f64>, q: UnitQuaternion<f64>, confidence: f32) -> Self {
        let q = q.into_inner().normalize();
        Self {
            t: [t.x as f32, t.y as f32, t.z as f32],
            q: [q.w as f32, q.i as f32, q.j as f32, q.k as f32],
            confidence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.iter().chain(self.q.iter()).any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinitePose);
        }
        check_unit(&self.q_f64())?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(CoreError::ConfidenceOutOfRange(self.confidence));
        }
        Ok(())
    }

    pub fn q_f64(&self) -> [f64; 4] {
        self.q.map(f64::from)
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.t[0] as f64, self.t[1] as f64, self.t[2] as f64)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.q_f64();
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    pub fn transform_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Pose6D) -> Pose6D {
        let r = self.rotation();
        let t = r * other.translation() + self.translation();
        Pose6D::from_parts(t, r * other.rotation(), other.confidence)
    }

    pub fn inverse(&self) -> Pose6D {
        let r_inv = self.rotation().inverse();
        Pose6D::from_parts(-(r_inv * self.translation()), r_inv, self.confidence)
    }

    /// `t` followed by `q`, the seven floats carried on the wire.
    pub fn to_wire(&self) -> [f32; 7] {
        let [tx, ty, tz] = self.t;
        let [w, x, y, z] = self.q;
        [tx, ty, tz, w, x, y, z]
    }

    /// Inverse of [`Pose6D::to_wire`]; the wire carries no confidence.
    pub fn from_wire(v: [f32; 7], confidence: f32) -> Result<Self> {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]], confidence)
    }
}

fn check_unit(q: &[f64; 4]) -> Result<()> {
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_QUAT_TOL {
        return Err(CoreError::NonUnitQuaternion(norm));
    }
    Ok(())
}

/// Geodesic angle between two rotations in degrees, in `[0, 180]`.
///
/// Invariant under the sign of either quaternion.
pub fn quat_geodesic_deg(q1: &[f64; 4], q2: &[f64; 4]) -> Result<f64> {
    check_unit(q1)?;
    check_unit(q2)?;
    let dot: f64 = q1.iter().zip(q2).map(|(a, b)| a * b).sum();
    Ok((2.0 * dot.abs().min(1.0).acos()).to_degrees())
}

/// RGB raster with optional metric depth and camera metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    frame_id: u64,
    capture_ts: u64,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    depth: Option<Vec<f32>>,
    intrinsics: PinholeIntrinsics,
    camera_pose: Pose6D,
}

impl Frame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: u64,
        capture_ts: u64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        depth: Option<Vec<f32>>,
        intrinsics: PinholeIntrinsics,
        camera_pose: Pose6D,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let n = width as usize * height as usize;
        if pixels.len() != n * 3 {
            return Err(CoreError::LengthMismatch {
                what: "rgb pixels",
                expected: n * 3,
                actual: pixels.len(),
            });
        }
        if let Some(d) = &depth {
            if d.len() != n {
                return Err(CoreError::LengthMismatch {
                    what: "depth plane",
                    expected: n,
                    actual: d.len(),
                });
            }
        }
        intrinsics.validate()?;
        camera_pose.validate()?;
        Ok(Self {
            frame_id,
            capture_ts,
            width,
            height,
            pixels,
            depth,
            intrinsics,
            camera_pose,
        })
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
    pub fn capture_ts(&self) -> u64 {
        self.capture_ts
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    /// Mutable access to the RGB plane; the length cannot change.
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }
    pub fn depth(&self) -> Option<&[f32]> {
        self.depth.as_deref()
    }
    pub fn intrinsics(&self) -> &PinholeIntrinsics {
        &self.intrinsics
    }
    pub fn camera_pose(&self) -> &Pose6D {
        &self.camera_pose
    }

    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn with_frame_id(mut self, frame_id: u64, capture_ts: u64) -> Self {
        self.frame_id = frame_id;
        self.capture_ts = capture_ts;
        self
    }

    /// Same metadata and depth, different RGB plane.
    pub fn with_pixels(&self, pixels: Vec<u8>) -> Result<Self> {
        Self::new(
            self.frame_id,
            self.capture_ts,
            self.width,
            self.height,
            pixels,
            self.depth.clone(),
            self.intrinsics,
            self.camera_pose,
        )
    }

    pub fn into_parts(self) -> (Vec<u8>, Option<Vec<f32>>) {
        (self.pixels, self.depth)
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(CoreError::InvalidDimensions { width, height });
    }
    Ok(())
}

/// Per-pixel instance labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    width: u32,
    height: u32,
    labels: Vec<u16>,
    instance_count: u16,
}

impl InstanceMask {
    /// Validates that labels are exactly `1..=max` with no gaps.
    pub fn from_labels(width: u32, height: u32, labels: Vec<u16>) -> Result<Self> {
        check_dims(width, height)?;
        let n = width as usize * height as usize;
        if labels.len() != n {
            return Err(CoreError::LengthMismatch {
                what: "mask labels",
                expected: n,
                actual: labels.len(),
            });
        }
        let max = labels.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; max as usize + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = (1..=max as usize).find(|&l| !seen[l]) {
            return Err(CoreError::InvalidMask(format!(
                "label {missing} missing while labels go up to {max}"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            instance_count: max,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            labels: vec![0; width as usize * height as usize],
            instance_count: 0,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }
    pub fn instance_count(&self) -> u16 {
        self.instance_count
    }
    pub fn label_at(&self, x: u32, y: u32) -> u16 {
        self.labels[y as usize * self.width as usize + x as usize]
    }
    pub fn count_label(&self, label: u16) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
    pub fn nonzero_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
    pub fn has_label(&self, label: u16) -> bool {
        label != 0 && label <= self.instance_count
    }

    /// Mask holding only `label`, relabeled to 1.
    pub fn single_instance(&self, label: u16) -> InstanceMask {
        let labels: Vec<u16> = self
            .labels
            .iter()
            .map(|&l| u16::from(l == label && label != 0))
            .collect();
        let instance_count = u16::from(labels.contains(&1));
        InstanceMask {
            width: self.width,
            height: self.height,
            labels,
            instance_count,
        }
    }
}

/// Per-frame time budget derived from a target frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub struct LatencyBudget {
    pub target_fps: f64,
    pub budget_us: u64,
}

#[derive(Serialize, Deserialize)]
struct BudgetRepr {
    target_fps: f64,
}

impl TryFrom<BudgetRepr> for LatencyBudget {
    type Error = CoreError;
    fn try_from(r: BudgetRepr) -> Result<Self> {
        budget_for_fps(r.target_fps)
    }
}

impl From<LatencyBudget> for BudgetRepr {
    fn from(b: LatencyBudget) -> Self {
        BudgetRepr {
            target_fps: b.target_fps,
        }
    }
}

impl Default for LatencyBudget {
    fn default() -> Self {
        budget_for_fps(30.0).expect("30 fps is positive")
    }
}

pub fn budget_for_fps(fps: f64) -> Result<LatencyBudget> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(CoreError::NonPositiveFps(fps));
    }
    Ok(LatencyBudget {
        target_fps: fps,
        budget_us: (1e6 / fps).round() as u64,
    })
}

/// Named pipeline stages that report a duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Gate2d,
    Segment,
    Inpaint,
    Gate3d,
    PoseCoarse,
    PoseRefine,
    Compose,
    TransportUp,
    TransportDown,
    Total,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Gate2d,
        Stage::Segment,
        Stage::Inpaint,
        Stage::Gate3d,
        Stage::PoseCoarse,
        Stage::PoseRefine,
        Stage::Compose,
        Stage::TransportUp,
        Stage::TransportDown,
        Stage::Total,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Gate2d => "gate2d",
            Stage::Segment => "segment",
            Stage::Inpaint => "inpaint",
            Stage::Gate3d => "gate3d",
            Stage::PoseCoarse => "pose_coarse",
            Stage::PoseRefine => "pose_refine",
            Stage::Compose => "compose",
            Stage::TransportUp => "transport_up",
            Stage::TransportDown => "transport_down",
            Stage::Total => "total",
        }
    }

    pub fn parse(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.as_str() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Microsecond durations of the stages that actually ran. Skipped stages
/// are absent, never zero-filled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageTimings {
    entries: BTreeMap<Stage, u64>,
}

impl StageTimings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: Stage, us: u64) {
        self.entries.insert(stage, us);
    }

    /// Adds to an existing entry, creating it if absent.
    pub fn accumulate(&mut self, stage: Stage, us: u64) {
        *self.entries.entry(stage).or_insert(0) += us;
    }

    /// Sets `total`, raised to at least the largest recorded stage.
    pub fn finish(&mut self, total_us: u64) {
        let max_stage = self
            .entries
            .iter()
            .filter(|(s, _)| **s != Stage::Total)
            .map(|(_, v)| *v)
            .max()
            .unwrap_or(0);
        self.entries.insert(Stage::Total, total_us.max(max_stage));
    }

    pub fn get(&self, stage: Stage) -> Option<u64> {
        self.entries.get(&stage).copied()
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.entries.contains_key(&stage)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Stage, u64)> + '_ {
        self.entries.iter().map(|(s, v)| (*s, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<(Stage, u64)> for StageTimings {
    fn from_iter<I: IntoIterator<Item = (Stage, u64)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
