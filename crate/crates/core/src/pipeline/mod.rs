//! Per-session orchestration of the 2D and 3D branches.
//!
//! ```text
//! frame -> gate2d -+- Forward: segment -+- inpaint ------------------+- merge
//!                  |                    +- coarse, gate3d, refine ---+
//!                  +- Bypass: paste cached background, previous mask-+
//! ```
//!
//! The merge barrier maps the pose onto the asset, renders it when the
//! server composes, and only then commits gating state, so a failed stage
//! leaves the session exactly as it was before the frame.

mod control;
mod report;
mod scheduler;

use std::sync::Arc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use control::{AnchorModeName, ControlAction, ControlError};
pub use report::{nearest_rank, Percentiles, RunReport};
pub use scheduler::{SchedulerCounters, SchedulerState, SharedScheduler, SubmitOutcome};

use crate::compose::{map_pose, render_asset, AnchorPolicy, Asset, AssetStore, ComposeError, Placement, ScaleMode};
use crate::gating::{
    cache_update, early_stop_decide, frame_passer_decide, predict_region, BackgroundCache,
    EarlyStopAction, ForwardReason, GateDecision2D, GatingConfig, PixelRect,
};
use crate::perception::{instance_extent, BackendSet, InpaintQuality, PoseFeatures, TargetSpec};
use crate::scenegen::SequenceBundle;
use crate::types::{Frame, InstanceMask, LatencyBudget, PinholeIntrinsics, Pose6D, Stage, StageTimings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("stage {stage} failed: {cause}")]
    StageFailure { stage: Stage, cause: String },
    #[error("frame {frame_id} is not after last emitted frame {last}")]
    OutOfOrderFrame { frame_id: u64, last: u64 },
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("unknown asset {0:?}")]
    UnknownAsset(String),
}

fn failed(stage: Stage) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::StageFailure {
        stage,
        cause: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeLocation {
    #[default]
    Server,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub target: TargetSpec,
    pub asset_id: String,
    pub anchor: AnchorPolicy,
    pub gating: GatingConfig,
    pub budget: LatencyBudget,
    pub compose_location: ComposeLocation,
    pub queue_capacity: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::default(),
            asset_id: "box".into(),
            anchor: AnchorPolicy::default(),
            gating: GatingConfig::default(),
            budget: LatencyBudget::default(),
            compose_location: ComposeLocation::Server,
            queue_capacity: 2,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.queue_capacity < 1 {
            return bad("queue_capacity must be >= 1".into());
        }
        if let Err(m) = self.target.validate() {
            return bad(m);
        }
        if let Err(e) = self.gating.validate() {
            return bad(e.to_string());
        }
        if let ScaleMode::FixedScale { scale } = self.anchor.mode {
            if !(scale.is_finite() && scale > 0.0) {
                return bad(format!("fixed scale must be positive, got {scale}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFlags {
    pub frame_passer_bypass: bool,
    pub early_stop_reuse: bool,
    pub keyframe: bool,
    pub no_target: bool,
}

impl ResultFlags {
    pub fn to_bits(self) -> u8 {
        (self.frame_passer_bypass as u8)
            | (self.early_stop_reuse as u8) << 1
            | (self.keyframe as u8) << 2
            | (self.no_target as u8) << 3
    }

    /// `None` when any of bits 4..7 is set.
    pub fn from_bits(bits: u8) -> Option<Self> {
        if bits & 0xF0 != 0 {
            return None;
        }
        Some(Self {
            frame_passer_bypass: bits & 1 != 0,
            early_stop_reuse: bits & 2 != 0,
            keyframe: bits & 4 != 0,
            no_target: bits & 8 != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub frame_id: u64,
    pub inpainted: Frame,
    pub pose: Option<Pose6D>,
    pub placement: Option<Placement>,
    /// Present iff the server composes.
    pub composed: Option<Frame>,
    pub flags: ResultFlags,
    pub timings: StageTimings,
}

impl PipelineResult {
    /// Equality of everything except timings.
    pub fn same_output(&self, other: &PipelineResult) -> bool {
        self.frame_id == other.frame_id
            && self.inpainted == other.inpainted
            && self.pose == other.pose
            && self.placement == other.placement
            && self.composed == other.composed
            && self.flags == other.flags
    }
}

/// How the two branches of a frame are executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BranchExecution {
    #[default]
    Parallel,
    Sequential,
}

fn elapsed_us(t: Instant) -> u64 {
    t.elapsed().as_micros() as u64
}

struct Branch3D {
    features: PoseFeatures,
    pose: Pose6D,
    reused: bool,
    timings: Vec<(Stage, u64)>,
}

/// One processing lane: its config, gating state and the latest mask.
#[derive(Debug)]
pub struct Session {
    cfg: SessionConfig,
    backends: BackendSet,
    assets: Arc<AssetStore>,
    execution: BranchExecution,
    cache: Option<BackgroundCache>,
    last_mask: Option<InstanceMask>,
    prev_features: Option<PoseFeatures>,
    prev_pose: Option<Pose6D>,
    last_emitted: Option<u64>,
}

impl Session {
    pub fn new(
        cfg: SessionConfig,
        backends: BackendSet,
        assets: Arc<AssetStore>,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if assets.get(&cfg.asset_id).is_none() {
            return Err(PipelineError::UnknownAsset(cfg.asset_id.clone()));
        }
        Ok(Self {
            cfg,
            backends,
            assets,
            execution: BranchExecution::Parallel,
            cache: None,
            last_mask: None,
            prev_features: None,
            prev_pose: None,
            last_emitted: None,
        })
    }

    pub fn with_defaults(cfg: SessionConfig) -> Result<Self, PipelineError> {
        Self::new(cfg, BackendSet::default(), Arc::new(AssetStore::builtin()))
    }

    pub fn set_execution(&mut self, execution: BranchExecution) {
        self.execution = execution;
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }
    pub fn last_emitted(&self) -> Option<u64> {
        self.last_emitted
    }
    pub fn background_cache(&self) -> Option<&BackgroundCache> {
        self.cache.as_ref()
    }
    /// Full segmentation mask of the latest frame that was segmented.
    pub fn latest_mask(&self) -> Option<&InstanceMask> {
        self.last_mask.as_ref()
    }

    pub fn apply_control(&mut self, action: &ControlAction) -> Result<(), ControlError> {
        match action {
            ControlAction::SelectObject { u, v } => {
                let label = self
                    .last_mask
                    .as_ref()
                    .filter(|m| (0..m.width() as i64).contains(u) && (0..m.height() as i64).contains(v))
                    .map(|m| m.label_at(*u as u32, *v as u32))
                    .unwrap_or(0);
                if label == 0 {
                    return Err(ControlError::NoInstanceAt { u: *u, v: *v });
                }
                if label != self.cfg.target.track_instance {
                    self.cfg.target.track_instance = label;
                    // features of another object say nothing about this one
                    self.prev_features = None;
                    self.prev_pose = None;
                }
            }
            ControlAction::SetAsset { asset_id } => {
                if self.assets.get(asset_id).is_none() {
                    return Err(ControlError::UnknownAsset(asset_id.clone()));
                }
                self.cfg.asset_id = asset_id.clone();
            }
            ControlAction::SetGating {
                frame_passer,
                early_stop,
            } => {
                self.cfg.gating.frame_passer_enabled = *frame_passer;
                self.cfg.gating.early_stop_enabled = *early_stop;
            }
            ControlAction::SetAnchor { mode, scale } => {
                self.cfg.anchor.mode = match (mode, scale) {
                    (AnchorModeName::FitExtent, _) => ScaleMode::FitExtent,
                    (AnchorModeName::FixedScale, Some(s)) if s.is_finite() && *s > 0.0 => {
                        ScaleMode::FixedScale { scale: *s }
                    }
                    (AnchorModeName::FixedScale, s) => {
                        return Err(ControlError::InvalidAnchor(format!(
                            "fixed_scale needs a positive scale, got {s:?}"
                        )))
                    }
                };
            }
        }
        Ok(())
    }

    pub fn process_frame(&mut self, frame: Frame) -> Result<PipelineResult, PipelineError> {
        let start = Instant::now();
        if let Some(last) = self.last_emitted {
            if frame.frame_id() <= last {
                return Err(PipelineError::OutOfOrderFrame {
                    frame_id: frame.frame_id(),
                    last,
                });
            }
        }
        let gating = self.cfg.gating.clone();
        let track = self.cfg.target.track_instance;
        let mut timings = StageTimings::new();

        let t = Instant::now();
        let decision = if gating.frame_passer_enabled {
            let dims = (frame.width(), frame.height());
            if self.cache.as_ref().map(|c| (c.dims(), c.tile_px())) != Some((dims, gating.tile_px)) {
                self.cache = Some(BackgroundCache::new(dims.0, dims.1, gating.tile_px));
            }
            let region = self
                .last_mask
                .as_ref()
                .filter(|m| (m.width(), m.height()) == dims)
                .and_then(|m| predict_region(m, track, gating.region_dilation_px).ok());
            let cache = self.cache.as_ref().expect("cache created above");
            frame_passer_decide(cache, &gating, frame.camera_pose(), region)
        } else {
            self.cache = None;
            GateDecision2D::Forward(ForwardReason::Disabled)
        };
        timings.record(Stage::Gate2d, elapsed_us(t));

        let fresh_mask = match decision {
            GateDecision2D::Forward(_) => {
                let t = Instant::now();
                let m = self
                    .backends
                    .segmenter
                    .segment(&frame, &self.cfg.target)
                    .map_err(|e| failed(Stage::Segment)(&e))?;
                timings.record(Stage::Segment, elapsed_us(t));
                Some(m)
            }
            GateDecision2D::Bypass { .. } => None,
        };
        let mask = fresh_mask
            .as_ref()
            .or(self.last_mask.as_ref())
            .expect("bypass implies a previous mask");
        let no_target = !mask.has_label(track);

        let (inpainted, branch3d) = if no_target {
            (frame.clone(), None)
        } else {
            let two_d = || self.branch_2d(&frame, mask, track, &decision);
            let three_d = || self.branch_3d(&frame, mask, track, &gating);
            let (r2, r3) = match self.execution {
                BranchExecution::Sequential => (two_d(), three_d()),
                BranchExecution::Parallel => thread::scope(|s| {
                    let h = s.spawn(three_d);
                    let r2 = two_d();
                    (r2, h.join().expect("3D branch panicked"))
                }),
            };
            let (inpainted, t2) = r2?;
            let b3 = r3?;
            for (stage, us) in t2.into_iter().chain(b3.timings.iter().copied()) {
                timings.accumulate(stage, us);
            }
            (inpainted, Some(b3))
        };

        let t = Instant::now();
        let asset = self
            .assets
            .get(&self.cfg.asset_id)
            .ok_or_else(|| PipelineError::UnknownAsset(self.cfg.asset_id.clone()))?;
        let placement = match &branch3d {
            Some(b) => {
                let extent = instance_extent(&frame, mask, track, &b.pose)
                    .map_err(|e| failed(Stage::Compose)(&e))?;
                match map_pose(&b.pose, extent, &asset, &self.cfg.anchor) {
                    Ok(p) => Some(p),
                    Err(ComposeError::ZeroExtent(_)) => None,
                    Err(e) => return Err(failed(Stage::Compose)(&e)),
                }
            }
            None => None,
        };
        let composed = match (self.cfg.compose_location, &placement) {
            (ComposeLocation::Client, _) => None,
            (ComposeLocation::Server, p) => Some(
                compose_frame(&inpainted, &asset, p.as_ref(), frame.intrinsics())
                    .map_err(|e| failed(Stage::Compose)(&e))?,
            ),
        };
        if branch3d.is_some() {
            timings.record(Stage::Compose, elapsed_us(t));
        }

        // commit
        let t = Instant::now();
        if let Some(cache) = self.cache.as_mut() {
            match &fresh_mask {
                Some(m) => cache_update(cache, &gating, &frame, m, frame.camera_pose())
                    .map_err(|e| failed(Stage::Gate2d)(&e))?,
                None => cache.note_bypass(),
            }
        }
        timings.accumulate(Stage::Gate2d, elapsed_us(t));
        if let Some(m) = fresh_mask {
            self.last_mask = Some(m);
        }
        let flags = ResultFlags {
            frame_passer_bypass: decision.is_bypass(),
            early_stop_reuse: branch3d.as_ref().is_some_and(|b| b.reused),
            keyframe: decision == GateDecision2D::Forward(ForwardReason::Keyframe),
            no_target,
        };
        let pose = branch3d.as_ref().map(|b| b.pose);
        self.prev_features = branch3d.as_ref().map(|b| b.features);
        self.prev_pose = pose;
        self.last_emitted = Some(frame.frame_id());
        timings.finish(elapsed_us(start));

        Ok(PipelineResult {
            frame_id: frame.frame_id(),
            inpainted,
            pose,
            placement,
            composed,
            flags,
            timings,
        })
    }

    fn branch_2d(
        &self,
        frame: &Frame,
        mask: &InstanceMask,
        track: u16,
        decision: &GateDecision2D,
    ) -> Result<(Frame, Vec<(Stage, u64)>), PipelineError> {
        let t = Instant::now();
        match decision {
            GateDecision2D::Bypass {
                background_patch,
                region,
            } => Ok((
                paste(frame, background_patch, region),
                vec![(Stage::Gate2d, elapsed_us(t))],
            )),
            GateDecision2D::Forward(_) => {
                let out = self
                    .backends
                    .inpainter
                    .inpaint(frame, &mask.single_instance(track), InpaintQuality::default())
                    .map_err(|e| failed(Stage::Inpaint)(&e))?;
                Ok((out, vec![(Stage::Inpaint, elapsed_us(t))]))
            }
        }
    }

    fn branch_3d(
        &self,
        frame: &Frame,
        mask: &InstanceMask,
        track: u16,
        gating: &GatingConfig,
    ) -> Result<Branch3D, PipelineError> {
        let mut timings = Vec::with_capacity(3);
        let est = &self.backends.pose_estimator;
        let t = Instant::now();
        let features = est
            .coarse(frame, mask, track)
            .map_err(|e| failed(Stage::PoseCoarse)(&e))?;
        timings.push((Stage::PoseCoarse, elapsed_us(t)));

        let t = Instant::now();
        let gate = early_stop_decide(
            self.prev_features.as_ref(),
            &features,
            self.prev_pose.as_ref(),
            gating,
        )
        .map_err(|e| failed(Stage::Gate3d)(&e))?;
        timings.push((Stage::Gate3d, elapsed_us(t)));

        let (pose, reused) = match gate.action {
            EarlyStopAction::Reuse(p) => (p, true),
            EarlyStopAction::Continue => {
                let t = Instant::now();
                let p = est
                    .refine(&features, frame, mask, track)
                    .map_err(|e| failed(Stage::PoseRefine)(&e))?;
                timings.push((Stage::PoseRefine, elapsed_us(t)));
                (p, false)
            }
        };
        Ok(Branch3D {
            features,
            pose,
            reused,
            timings,
        })
    }
}

/// `frame` with `patch` (row-major RGB of `region`) written over `region`.
fn paste(frame: &Frame, patch: &[u8], region: &PixelRect) -> Frame {
    let mut out = frame.clone();
    let w = frame.width() as usize;
    let row_len = region.width() as usize * 3;
    let px = out.pixels_mut();
    for (r, y) in (region.y0..region.y1).enumerate() {
        let dst = (y as usize * w + region.x0 as usize) * 3;
        px[dst..dst + row_len].copy_from_slice(&patch[r * row_len..(r + 1) * row_len]);
    }
    out
}

/// The composed output for a result: the asset over `inpainted`, or
/// `inpainted` itself without a placement. Client-side compose uses this
/// too, so both locations produce the same bytes.
pub fn compose_frame(
    inpainted: &Frame,
    asset: &Asset,
    placement: Option<&Placement>,
    intr: &PinholeIntrinsics,
) -> Result<Frame, ComposeError> {
    match placement {
        None => Ok(inpainted.clone()),
        Some(p) => Ok(render_asset(inpainted, asset, p, intr)?.0),
    }
}

/// Runs every frame of `session`'s input in order, without drops.
pub fn run_frames(
    session: &mut Session,
    frames: impl IntoIterator<Item = Frame>,
) -> Result<(Vec<PipelineResult>, RunReport), PipelineError> {
    let mut results = Vec::new();
    for f in frames {
        results.push(session.process_frame(f)?);
    }
    let report = RunReport::from_results(&results, 0);
    Ok((results, report))
}

/// Offline in-process run of a whole bundle with the reference backends.
pub fn end_to_end_once(
    bundle: &SequenceBundle,
    cfg: &SessionConfig,
) -> Result<(Vec<PipelineResult>, RunReport), PipelineError> {
    let mut session = Session::with_defaults(cfg.clone())?;
    run_frames(&mut session, bundle.frames.iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_sequence, SceneConfig};
    use crate::types::PinholeIntrinsics;

    fn reveal(n: u32) -> SequenceBundle {
        generate_sequence(&SceneConfig::reveal_then_static(n)).unwrap()
    }

    #[test]
    fn cold_start_forwards_and_composes() {
        let b = generate_sequence(&SceneConfig { frame_count: 1, ..SceneConfig::default() }).unwrap();
        let (r, _) = end_to_end_once(&b, &SessionConfig::default()).unwrap();
        let f = &r[0].flags;
        assert!(!f.frame_passer_bypass && !f.early_stop_reuse && !f.no_target);
        assert!(r[0].pose.is_some());
        assert!(r[0].composed.is_some());
        assert!(r[0].timings.contains(Stage::Segment));
    }

    #[test]
    fn identical_frame_after_warm_up_bypasses_and_reuses() {
        let b = reveal(3);
        let (r, _) = end_to_end_once(&b, &SessionConfig::default()).unwrap();
        let f = r[2].flags;
        assert!(f.frame_passer_bypass && f.early_stop_reuse, "{f:?}");
        assert_eq!(r[2].pose, r[1].pose);
        assert!(!r[2].timings.contains(Stage::Segment));
        assert!(!r[2].timings.contains(Stage::Inpaint));
        let region = predict_region(&b.gt_masks[2], 1, GatingConfig::default().region_dilation_px).unwrap();
        for y in region.y0..region.y1 {
            for x in region.x0..region.x1 {
                assert_eq!(r[2].inpainted.rgb(x, y), b.gt_backgrounds[2].rgb(x, y));
            }
        }
    }

    #[test]
    fn pure_background_is_no_target() {
        let intr = PinholeIntrinsics::new(100.0, 100.0, 16.0, 16.0).unwrap();
        let f = Frame::new(0, 0, 32, 32, vec![90; 32 * 32 * 3], Some(vec![10.0; 1024]), intr, Pose6D::identity()).unwrap();
        let mut s = Session::with_defaults(SessionConfig::default()).unwrap();
        let r = s.process_frame(f.clone()).unwrap();
        assert!(r.flags.no_target);
        assert_eq!(r.inpainted, f);
        assert!(r.pose.is_none() && r.placement.is_none());
        assert!(!r.timings.contains(Stage::PoseCoarse));
    }

    #[test]
    fn out_of_order_rejected_and_session_survives() {
        let b = reveal(3);
        let mut s = Session::with_defaults(SessionConfig::default()).unwrap();
        s.process_frame(b.frames[1].clone()).unwrap();
        assert_eq!(
            s.process_frame(b.frames[0].clone()),
            Err(PipelineError::OutOfOrderFrame { frame_id: 0, last: 1 })
        );
        assert!(s.process_frame(b.frames[2].clone()).is_ok());
    }

    #[test]
    fn stage_failure_leaves_session_alive() {
        let b = reveal(2);
        let mut s = Session::with_defaults(SessionConfig::default()).unwrap();
        // depth stripped: the 3D branch cannot run
        let f = &b.frames[0];
        let no_depth = Frame::new(
            f.frame_id(), f.capture_ts(), f.width(), f.height(), f.pixels().to_vec(), None,
            *f.intrinsics(), *f.camera_pose(),
        )
        .unwrap();
        match s.process_frame(no_depth) {
            Err(PipelineError::StageFailure { stage, .. }) => assert_eq!(stage, Stage::PoseCoarse),
            other => panic!("{other:?}"),
        }
        assert!(s.latest_mask().is_none(), "failed frame must not commit state");
        assert!(s.process_frame(b.frames[1].clone()).is_ok());
    }

    #[test]
    fn parallel_equals_sequential() {
        let b = reveal(6);
        let run = |exec| {
            let mut s = Session::with_defaults(SessionConfig::default()).unwrap();
            s.set_execution(exec);
            run_frames(&mut s, b.frames.iter().cloned()).unwrap().0
        };
        let (p, q) = (run(BranchExecution::Parallel), run(BranchExecution::Sequential));
        assert!(p.iter().zip(&q).all(|(a, b)| a.same_output(b)));
    }

    #[test]
    fn timing_sanity() {
        let (r, _) = end_to_end_once(&reveal(5), &SessionConfig::default()).unwrap();
        for res in &r {
            let total = res.timings.get(Stage::Total).unwrap();
            assert!(res.timings.iter().all(|(_, us)| us <= total));
            if res.flags.frame_passer_bypass {
                assert!(!res.timings.contains(Stage::Segment) && !res.timings.contains(Stage::Inpaint));
            }
            assert_eq!(res.flags.early_stop_reuse, !res.timings.contains(Stage::PoseRefine));
        }
    }

    #[test]
    fn linear_motion_ordering_and_empty_bundle() {
        let cfg = SceneConfig {
            frame_count: 31,
            trajectory: crate::scenegen::Trajectory::Linear {
                start: crate::scenegen::object_pose([-0.3, 0.0, 2.0]),
                end: crate::scenegen::object_pose([0.3, 0.0, 2.0]),
            },
            ..SceneConfig::default()
        };
        let (r, _) = end_to_end_once(&generate_sequence(&cfg).unwrap(), &SessionConfig::default()).unwrap();
        assert_eq!(r.iter().map(|x| x.frame_id).collect::<Vec<_>>(), (0..31).collect::<Vec<_>>());
        let mut empty = reveal(1);
        empty.frames.clear();
        assert!(end_to_end_once(&empty, &SessionConfig::default()).unwrap().0.is_empty());
    }

    #[test]
    fn client_compose_omits_composed() {
        let cfg = SessionConfig { compose_location: ComposeLocation::Client, ..SessionConfig::default() };
        let (r, _) = end_to_end_once(&reveal(1), &cfg).unwrap();
        assert!(r[0].composed.is_none() && r[0].placement.is_some());
    }

    #[test]
    fn select_object_and_controls() {
        let b = reveal(1);
        let mut s = Session::with_defaults(SessionConfig::default()).unwrap();
        assert!(matches!(
            s.apply_control(&ControlAction::SelectObject { u: 0, v: 0 }),
            Err(ControlError::NoInstanceAt { .. })
        ));
        s.process_frame(b.frames[0].clone()).unwrap();
        let m = &b.gt_masks[0];
        let i = m.labels().iter().position(|&l| l != 0).unwrap() as u32;
        let (u, v) = ((i % m.width()) as i64, (i / m.width()) as i64);
        s.apply_control(&ControlAction::SelectObject { u, v }).unwrap();
        assert_eq!(s.config().target.track_instance, 1);
        assert!(s.apply_control(&ControlAction::SetAsset { asset_id: "nope".into() }).is_err());
        s.apply_control(&ControlAction::SetAsset { asset_id: "pyramid".into() }).unwrap();
        assert_eq!(s.config().asset_id, "pyramid");
        assert!(s
            .apply_control(&ControlAction::SetAnchor { mode: AnchorModeName::FixedScale, scale: None })
            .is_err());
        s.apply_control(&ControlAction::SetAnchor { mode: AnchorModeName::FixedScale, scale: Some(0.2) })
            .unwrap();
        assert_eq!(s.config().anchor.mode, ScaleMode::FixedScale { scale: 0.2 });
        s.apply_control(&ControlAction::SetGating { frame_passer: false, early_stop: false }).unwrap();
        assert!(!s.config().gating.frame_passer_enabled);
    }

    #[test]
    fn flag_bits_round_trip() {
        for bits in 0u8..16 {
            assert_eq!(ResultFlags::from_bits(bits).unwrap().to_bits(), bits);
        }
        assert!(ResultFlags::from_bits(0x10).is_none());
    }

    #[test]
    fn session_config_json_defaults() {
        let cfg: SessionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, SessionConfig::default());
        let back: SessionConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(SessionConfig { queue_capacity: 0, ..SessionConfig::default() }.validate().is_err());
    }
}
