//! Temporal-redundancy gates.
//!
//! The frame passer keeps a tile cache of observed background. When the
//! camera has not moved and the cache covers the region the target is
//! predicted to occupy, the cached pixels are pasted over that region and
//! segmentation and inpainting are skipped. A forced full pass every
//! `keyframe_interval` frames bounds how stale a pasted patch can get.
//!
//! Early stop compares the coarse pose features of consecutive frames and,
//! when they are close, re-emits the previous pose instead of refining.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::PoseFeatures;
use crate::types::{quat_geodesic_deg, Frame, InstanceMask, Pose6D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatingError {
    #[error("instance {0} not present in mask")]
    EmptyInstance(u16),
    #[error("dimension mismatch: cache {cache:?}, input {input:?}")]
    DimMismatch { cache: (u32, u32), input: (u32, u32) },
    #[error("previous features present without a previous pose")]
    MissingPrevPose,
    #[error("invalid gating config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatingConfig {
    pub frame_passer_enabled: bool,
    pub early_stop_enabled: bool,
    pub tile_px: u32,
    /// Fraction of the predicted region that cached tiles must cover.
    pub tau_cover: f64,
    /// Camera translation, meters, beyond which the cache is invalid.
    pub pose_eps_t: f64,
    /// Camera rotation, degrees, beyond which the cache is invalid.
    pub pose_eps_r: f64,
    /// No run of consecutive bypassed frames is this long.
    pub keyframe_interval: u32,
    pub es_sigma_t: f64,
    pub es_sigma_e: f64,
    pub es_threshold: f64,
    pub region_dilation_px: u32,
    /// Mean absolute per-sample difference above which a re-observed tile
    /// counts as changed background. Any change empties the cache.
    pub cache_change_tol: f64,
}

impl Default for GatingConfig {
    fn default() -> Self {
        Self {
            frame_passer_enabled: true,
            early_stop_enabled: true,
            tile_px: 16,
            tau_cover: 1.0,
            pose_eps_t: 1e-3,
            pose_eps_r: 0.1,
            keyframe_interval: 30,
            es_sigma_t: 0.02,
            es_sigma_e: 0.02,
            es_threshold: 1.0,
            region_dilation_px: 8,
            cache_change_tol: 2.0,
        }
    }
}

impl GatingConfig {
    pub fn disabled() -> Self {
        Self {
            frame_passer_enabled: false,
            early_stop_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatingError> {
        let bad = |m: &str| Err(GatingError::InvalidConfig(m.into()));
        if self.tile_px < 1 {
            return bad("tile_px must be >= 1");
        }
        if !(self.tau_cover > 0.0 && self.tau_cover <= 1.0) {
            return bad("tau_cover must be in (0, 1]");
        }
        if self.keyframe_interval < 1 {
            return bad("keyframe_interval must be >= 1");
        }
        let scales = [
            self.pose_eps_t,
            self.pose_eps_r,
            self.es_sigma_t,
            self.es_sigma_e,
            self.es_threshold,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("tolerances and scales must be positive");
        }
        if !(self.cache_change_tol.is_finite() && self.cache_change_tol >= 0.0) {
            return bad("cache_change_tol must be >= 0");
        }
        Ok(())
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> usize {
        self.width() as usize * self.height() as usize
    }
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Bounding box of `instance`, grown by `dilation_px` and clipped to the frame.
pub fn predict_region(
    prev_mask: &InstanceMask,
    instance: u16,
    dilation_px: u32,
) -> Result<PixelRect, GatingError> {
    let w = prev_mask.width();
    let mut bb: Option<(u32, u32, u32, u32)> = None;
    if instance != 0 {
        for (i, _) in prev_mask
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == instance)
        {
            let (x, y) = (i as u32 % w, i as u32 / w);
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
            });
        }
    }
    let (x0, y0, x1, y1) = bb.ok_or(GatingError::EmptyInstance(instance))?;
    Ok(PixelRect {
        x0: x0.saturating_sub(dilation_px),
        y0: y0.saturating_sub(dilation_px),
        x1: (x1 + 1).saturating_add(dilation_px).min(w),
        y1: (y1 + 1).saturating_add(dilation_px).min(prev_mask.height()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedTile {
    pub pixels: Vec<u8>,
    pub last_update_frame_id: u64,
}

/// Background observations for one session, keyed to one camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundCache {
    width: u32,
    height: u32,
    tile_px: u32,
    reference_camera_pose: Option<Pose6D>,
    tiles: Vec<Option<CachedTile>>,
    frames_since_keyframe: u32,
}

impl BackgroundCache {
    pub fn new(width: u32, height: u32, tile_px: u32) -> Self {
        let tile_px = tile_px.max(1);
        let (tx, ty) = (width.div_ceil(tile_px), height.div_ceil(tile_px));
        Self {
            width,
            height,
            tile_px,
            reference_camera_pose: None,
            tiles: vec![None; tx as usize * ty as usize],
            frames_since_keyframe: 0,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
    pub fn tile_px(&self) -> u32 {
        self.tile_px
    }
    pub fn tiles_x(&self) -> u32 {
        self.width.div_ceil(self.tile_px)
    }
    pub fn tiles_y(&self) -> u32 {
        self.height.div_ceil(self.tile_px)
    }
    pub fn reference_camera_pose(&self) -> Option<&Pose6D> {
        self.reference_camera_pose.as_ref()
    }
    pub fn frames_since_keyframe(&self) -> u32 {
        self.frames_since_keyframe
    }
    pub fn tile(&self, tx: u32, ty: u32) -> Option<&CachedTile> {
        self.tiles[(ty * self.tiles_x() + tx) as usize].as_ref()
    }
    pub fn cached_tile_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.is_some()).count()
    }
    pub fn is_empty(&self) -> bool {
        self.cached_tile_count() == 0
    }

    fn tile_rect(&self, tx: u32, ty: u32) -> PixelRect {
        PixelRect {
            x0: tx * self.tile_px,
            y0: ty * self.tile_px,
            x1: ((tx + 1) * self.tile_px).min(self.width),
            y1: ((ty + 1) * self.tile_px).min(self.height),
        }
    }

    fn clear(&mut self) {
        self.tiles.iter_mut().for_each(|t| *t = None);
    }

    /// Fraction of `region` pixels that fall in cached tiles.
    pub fn coverage(&self, region: &PixelRect) -> f64 {
        if region.area() == 0 {
            return 0.0;
        }
        let mut covered = 0usize;
        for ty in region.y0 / self.tile_px..region.y1.div_ceil(self.tile_px) {
            for tx in region.x0 / self.tile_px..region.x1.div_ceil(self.tile_px) {
                if self.tile(tx, ty).is_some() {
                    let t = self.tile_rect(tx, ty);
                    let w = t.x1.min(region.x1).saturating_sub(t.x0.max(region.x0));
                    let h = t.y1.min(region.y1).saturating_sub(t.y0.max(region.y0));
                    covered += w as usize * h as usize;
                }
            }
        }
        covered as f64 / region.area() as f64
    }

    /// Cached RGB for every pixel of `region`, row-major. `None` unless the
    /// region is fully covered.
    pub fn patch(&self, region: &PixelRect) -> Option<Vec<u8>> {
        let mut out = Vec::with_capacity(region.area() * 3);
        for y in region.y0..region.y1 {
            for x in region.x0..region.x1 {
                let (tx, ty) = (x / self.tile_px, y / self.tile_px);
                let tile = self.tile(tx, ty)?;
                let tw = self.tile_rect(tx, ty).width();
                let i = (((y % self.tile_px) * tw + (x % self.tile_px)) * 3) as usize;
                out.extend_from_slice(&tile.pixels[i..i + 3]);
            }
        }
        Some(out)
    }

    /// Counts a frame that took the bypass path.
    pub fn note_bypass(&mut self) {
        self.frames_since_keyframe = self.frames_since_keyframe.saturating_add(1);
    }
}

fn camera_moved(reference: &Pose6D, current: &Pose6D, cfg: &GatingConfig) -> bool {
    let dt = (current.translation() - reference.translation()).norm();
    let dr = quat_geodesic_deg(&reference.q_f64(), &current.q_f64()).unwrap_or(f64::INFINITY);
    !(dt <= cfg.pose_eps_t && dr <= cfg.pose_eps_r)
}

/// Why a frame took the full 2D path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardReason {
    Disabled,
    EmptyCache,
    NoRegion,
    Keyframe,
    CameraMoved,
    Uncovered,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateDecision2D {
    Forward(ForwardReason),
    Bypass {
        background_patch: Vec<u8>,
        region: PixelRect,
    },
}

impl GateDecision2D {
    pub fn is_bypass(&self) -> bool {
        matches!(self, GateDecision2D::Bypass { .. })
    }
}

pub fn frame_passer_decide(
    cache: &BackgroundCache,
    cfg: &GatingConfig,
    camera_pose: &Pose6D,
    predicted_region: Option<PixelRect>,
) -> GateDecision2D {
    use ForwardReason::*;
    if !cfg.frame_passer_enabled {
        return GateDecision2D::Forward(Disabled);
    }
    let Some(reference) = cache.reference_camera_pose() else {
        return GateDecision2D::Forward(EmptyCache);
    };
    if cache.is_empty() {
        return GateDecision2D::Forward(EmptyCache);
    }
    let Some(region) = predicted_region else {
        return GateDecision2D::Forward(NoRegion);
    };
    // the frame being decided counts toward the interval
    if cache.frames_since_keyframe().saturating_add(1) >= cfg.keyframe_interval {
        return GateDecision2D::Forward(Keyframe);
    }
    if camera_moved(reference, camera_pose, cfg) {
        return GateDecision2D::Forward(CameraMoved);
    }
    if cache.coverage(&region) < cfg.tau_cover {
        return GateDecision2D::Forward(Uncovered);
    }
    match cache.patch(&region) {
        Some(background_patch) => GateDecision2D::Bypass {
            background_patch,
            region,
        },
        // partial coverage under a tau_cover below 1: nothing to paste from
        None => GateDecision2D::Forward(Uncovered),
    }
}

/// Records the background seen on a full-pass frame.
///
/// Tiles whose pixels are all background in `mask` are stored with the
/// frame id. A camera move beyond the cache tolerances, or a re-observed
/// tile that no longer matches its cached pixels, empties the cache first.
/// Resets the keyframe counter.
pub fn cache_update(
    cache: &mut BackgroundCache,
    cfg: &GatingConfig,
    frame: &Frame,
    mask: &InstanceMask,
    camera_pose: &Pose6D,
) -> Result<(), GatingError> {
    let dims = (frame.width(), frame.height());
    if dims != cache.dims() || (mask.width(), mask.height()) != cache.dims() {
        return Err(GatingError::DimMismatch {
            cache: cache.dims(),
            input: if dims != cache.dims() {
                dims
            } else {
                (mask.width(), mask.height())
            },
        });
    }
    match cache.reference_camera_pose {
        Some(reference) if !camera_moved(&reference, camera_pose, cfg) => {}
        _ => {
            cache.clear();
            cache.reference_camera_pose = Some(*camera_pose);
        }
    }

    let (tx_n, ty_n) = (cache.tiles_x(), cache.tiles_y());
    let w = frame.width() as usize;
    let px = frame.pixels();
    let labels = mask.labels();
    let mut fresh: Vec<(usize, Vec<u8>)> = Vec::new();
    let mut changed = false;
    for ty in 0..ty_n {
        for tx in 0..tx_n {
            let r = cache.tile_rect(tx, ty);
            let all_bg = (r.y0..r.y1)
                .all(|y| (r.x0..r.x1).all(|x| labels[y as usize * w + x as usize] == 0));
            if !all_bg {
                continue;
            }
            let mut pixels = Vec::with_capacity(r.area() * 3);
            for y in r.y0..r.y1 {
                let row = (y as usize * w + r.x0 as usize) * 3;
                pixels.extend_from_slice(&px[row..row + r.width() as usize * 3]);
            }
            let idx = (ty * tx_n + tx) as usize;
            if let Some(old) = &cache.tiles[idx] {
                let diff: u64 = old
                    .pixels
                    .iter()
                    .zip(&pixels)
                    .map(|(a, b)| a.abs_diff(*b) as u64)
                    .sum();
                if diff as f64 > cfg.cache_change_tol * pixels.len() as f64 {
                    changed = true;
                }
            }
            fresh.push((idx, pixels));
        }
    }
    if changed {
        cache.clear();
    }
    for (idx, pixels) in fresh {
        cache.tiles[idx] = Some(CachedTile {
            pixels,
            last_update_frame_id: frame.frame_id(),
        });
    }
    cache.frames_since_keyframe = 0;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum EarlyStopAction {
    Continue,
    Reuse(Pose6D),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision3D {
    pub action: EarlyStopAction,
    /// Normalized feature distance; absent without previous features.
    pub distance: Option<f64>,
}

/// Max of the centroid shift over `es_sigma_t` and the extent change over
/// `es_sigma_e`.
pub fn feature_distance(prev: &PoseFeatures, curr: &PoseFeatures, cfg: &GatingConfig) -> f64 {
    let norm = |a: [f64; 3], b: [f64; 3]| {
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let dt = norm(curr.centroid_cam, prev.centroid_cam) / cfg.es_sigma_t;
    let de = norm(curr.extent_cam, prev.extent_cam) / cfg.es_sigma_e;
    dt.max(de)
}

pub fn early_stop_decide(
    prev: Option<&PoseFeatures>,
    curr: &PoseFeatures,
    prev_pose: Option<&Pose6D>,
    cfg: &GatingConfig,
) -> Result<GateDecision3D, GatingError> {
    let Some(prev) = prev else {
        return Ok(GateDecision3D {
            action: EarlyStopAction::Continue,
            distance: None,
        });
    };
    let prev_pose = prev_pose.ok_or(GatingError::MissingPrevPose)?;
    let d = feature_distance(prev, curr, cfg);
    let action = if cfg.early_stop_enabled && d <= cfg.es_threshold {
        EarlyStopAction::Reuse(*prev_pose)
    } else {
        EarlyStopAction::Continue
    };
    Ok(GateDecision3D {
        action,
        distance: Some(d),
    })
}
