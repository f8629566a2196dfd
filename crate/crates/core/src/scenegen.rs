//! Deterministic synthetic scenes with full ground truth.
//!
//! A flat-shaded box moves in front of a textured background plane that sits
//! at depth 10 m in camera space. Every frame comes with the exact object
//! silhouette, the same view with the object absent and the object pose, so
//! segmentation, inpainting and pose estimation can all be scored exactly.

use std::fs;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compose::{placed_triangles, Asset, Placement, ZBuffer};
use crate::imageio::{self, ImageIoError};
use crate::types::{CoreError, Frame, InstanceMask, PinholeIntrinsics, Pose6D};

/// Depth of the background plane in camera space, meters.
pub const BACKGROUND_DEPTH: f32 = 10.0;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] ImageIoError),
    #[error("manifest schema: {0}")]
    ManifestSchema(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub fn project_point(intr: &PinholeIntrinsics, p_cam: [f64; 3]) -> Result<[f64; 2], CoreError> {
    intr.project(p_cam)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    Checkerboard,
    Gradient,
    NoiseTexture,
}

/// Replaces the background texture from `at_frame` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSwitch {
    pub at_frame: u32,
    pub kind: BackgroundKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxObject {
    pub extents: [f64; 3],
    pub face_colors: [[u8; 3]; 6],
}

/// Saturated primaries; every background texture stays far from them.
pub const DEFAULT_FACE_COLORS: [[u8; 3]; 6] = [
    [230, 30, 30],
    [30, 230, 30],
    [30, 30, 230],
    [230, 230, 30],
    [230, 30, 230],
    [30, 230, 230],
];

impl Default for BoxObject {
    fn default() -> Self {
        Self {
            extents: [0.4, 0.25, 0.1],
            face_colors: DEFAULT_FACE_COLORS,
        }
    }
}

impl BoxObject {
    /// Rotations mapping a generic box onto itself.
    pub fn symmetry_group(&self) -> Vec<[f32; 4]> {
        vec![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn mesh(&self) -> Result<Asset, SceneError> {
        Asset::box_mesh("scene_box", self.extents, self.face_colors)
            .map_err(|e| SceneError::InvalidConfig(e.to_string()))
    }

    /// The 8 corners in the object frame.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let [hx, hy, hz] = self.extents.map(|e| e / 2.0);
        std::array::from_fn(|i| {
            Vector3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
    }
}

/// Object pose over time, in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static {
        pose: Pose6D,
    },
    /// Translation lerp and rotation slerp from first to last frame.
    Linear {
        start: Pose6D,
        end: Pose6D,
    },
    /// Circle in the plane `z = center.z` with fixed orientation.
    Orbit {
        center: [f64; 3],
        radius_m: f64,
        angular_speed_deg_per_frame: f64,
        #[serde(default)]
        phase_deg: f64,
        #[serde(default = "identity_q")]
        q: [f32; 4],
    },
    /// Holds `before` until `at_frame`, then `after`.
    Step {
        before: Pose6D,
        after: Pose6D,
        at_frame: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraMotion {
    Static { pose: Pose6D },
    Linear { start: Pose6D, end: Pose6D },
}

fn identity_q() -> [f32; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub fps: f64,
    pub intrinsics: PinholeIntrinsics,
    pub background_kind: BackgroundKind,
    pub background_switch: Option<BackgroundSwitch>,
    pub object: BoxObject,
    pub trajectory: Trajectory,
    pub camera_motion: CameraMotion,
    /// Uniform per-channel perturbation in `[-k, k]`; 0 is noiseless.
    pub noise_amplitude: u8,
}

/// Orientation of the default box: three faces visible, longest axis roughly
/// horizontal.
pub fn default_object_rotation() -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(
        (-20.0f64).to_radians(),
        25.0f64.to_radians(),
        10.0f64.to_radians(),
    )
}

pub fn object_pose(t: [f64; 3]) -> Pose6D {
    Pose6D::from_parts(Vector3::from(t), default_object_rotation(), 1.0)
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            width: 320,
            height: 240,
            frame_count: 30,
            fps: 30.0,
            intrinsics: PinholeIntrinsics {
                fx: 300.0,
                fy: 300.0,
                cx: 160.0,
                cy: 120.0,
            },
            background_kind: BackgroundKind::Gradient,
            background_switch: None,
            object: BoxObject::default(),
            trajectory: Trajectory::Static {
                pose: object_pose([0.0, 0.0, 2.0]),
            },
            camera_motion: CameraMotion::Static {
                pose: Pose6D::identity(),
            },
            noise_amplitude: 0,
        }
    }
}

impl SceneConfig {
    /// Static camera and background; the object sits at one spot for frame
    /// 0, then jumps and stays put. The jump reveals the background behind
    /// its resting place, which is what lets a background cache cover it.
    pub fn reveal_then_static(frame_count: u32) -> Self {
        Self {
            frame_count,
            trajectory: Trajectory::Step {
                before: object_pose([-0.6, -0.3, 2.0]),
                after: object_pose([0.45, 0.15, 2.0]),
                at_frame: 1,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidConfig(m));
        if self.frame_count < 1 {
            return bad("frame_count must be >= 1".into());
        }
        if self.width == 0 || self.height == 0 || self.width > 8192 || self.height > 8192 {
            return bad(format!("bad dimensions {}x{}", self.width, self.height));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        self.intrinsics
            .validate_for(self.width, self.height)
            .map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        if self.object.extents.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return bad(format!("object extents must be > 0: {:?}", self.object.extents));
        }
        for (i, a) in self.object.face_colors.iter().enumerate() {
            if self.object.face_colors[i + 1..].contains(a) {
                return bad("face colors must be pairwise distinct".into());
            }
        }
        let poses: Vec<&Pose6D> = match &self.trajectory {
            Trajectory::Static { pose } => vec![pose],
            Trajectory::Linear { start, end } => vec![start, end],
            Trajectory::Step { before, after, .. } => vec![before, after],
            Trajectory::Orbit {
                radius_m,
                angular_speed_deg_per_frame,
                center,
                ..
            } => {
                if !(radius_m.is_finite() && *radius_m >= 0.0)
                    || !angular_speed_deg_per_frame.is_finite()
                    || center.iter().any(|c| !c.is_finite())
                {
                    return bad("orbit parameters must be finite, radius >= 0".into());
                }
                vec![]
            }
        };
        let cams: Vec<&Pose6D> = match &self.camera_motion {
            CameraMotion::Static { pose } => vec![pose],
            CameraMotion::Linear { start, end } => vec![start, end],
        };
        for p in poses.into_iter().chain(cams) {
            p.validate()
                .map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        }
        if let Trajectory::Orbit { q, .. } = &self.trajectory {
            Pose6D::new([0.0; 3], *q, 1.0).map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    fn progress(&self, i: u32) -> f64 {
        if self.frame_count <= 1 {
            0.0
        } else {
            i as f64 / (self.frame_count - 1) as f64
        }
    }

    /// Object pose in world coordinates at frame `i`.
    pub fn object_world_pose(&self, i: u32) -> Pose6D {
        match &self.trajectory {
            Trajectory::Static { pose } => *pose,
            Trajectory::Linear { start, end } => interpolate(start, end, self.progress(i)),
            Trajectory::Step {
                before,
                after,
                at_frame,
            } => {
                if i < *at_frame {
                    *before
                } else {
                    *after
                }
            }
            Trajectory::Orbit {
                center,
                radius_m,
                angular_speed_deg_per_frame,
                phase_deg,
                q,
            } => {
                let theta = (phase_deg + angular_speed_deg_per_frame * i as f64).to_radians();
                let t = Vector3::new(
                    center[0] + radius_m * theta.cos(),
                    center[1] + radius_m * theta.sin(),
                    center[2],
                );
                let rot = Pose6D {
                    t: [0.0; 3],
                    q: *q,
                    confidence: 1.0,
                }
                .rotation();
                Pose6D::from_parts(t, rot, 1.0)
            }
        }
    }

    pub fn camera_pose(&self, i: u32) -> Pose6D {
        match &self.camera_motion {
            CameraMotion::Static { pose } => *pose,
            CameraMotion::Linear { start, end } => interpolate(start, end, self.progress(i)),
        }
    }

    fn background_at(&self, i: u32) -> (BackgroundKind, u64) {
        match self.background_switch {
            Some(sw) if i >= sw.at_frame => (sw.kind, sw.seed),
            _ => (self.background_kind, self.seed),
        }
    }
}

fn interpolate(a: &Pose6D, b: &Pose6D, s: f64) -> Pose6D {
    let t = a.translation() + (b.translation() - a.translation()) * s;
    let (ra, rb) = (a.rotation(), b.rotation());
    let r = ra.try_slerp(&rb, s, 1e-12).unwrap_or(ra);
    Pose6D::from_parts(t, r, 1.0)
}

/// Generated frames plus ground truth, all lists `frame_count` long.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub frames: Vec<Frame>,
    pub gt_masks: Vec<InstanceMask>,
    pub gt_backgrounds: Vec<Frame>,
    pub gt_poses: Vec<Pose6D>,
    pub symmetry_group: Vec<[f32; 4]>,
    pub seed: u64,
}

impl SequenceBundle {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn intrinsics(&self) -> Option<PinholeIntrinsics> {
        self.frames.first().map(|f| *f.intrinsics())
    }

    pub fn manifest(&self) -> Manifest {
        let first = self.frames.first();
        Manifest {
            version: MANIFEST_VERSION,
            width: first.map_or(0, |f| f.width()),
            height: first.map_or(0, |f| f.height()),
            frame_count: self.frames.len() as u32,
            intrinsics: first.map_or(
                PinholeIntrinsics {
                    fx: 1.0,
                    fy: 1.0,
                    cx: 0.0,
                    cy: 0.0,
                },
                |f| *f.intrinsics(),
            ),
            poses: self.gt_poses.iter().map(ManifestPose::from).collect(),
            camera_poses: self
                .frames
                .iter()
                .map(|f| ManifestPose::from(f.camera_pose()))
                .collect(),
            symmetry: self.symmetry_group.clone(),
            seed: self.seed,
            frame_ids: self.frames.iter().map(Frame::frame_id).collect(),
            capture_ts: self.frames.iter().map(Frame::capture_ts).collect(),
            files: self
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| ManifestFiles {
                    frame: format!("frame_{i:05}.ppm"),
                    background: format!("bg_{i:05}.ppm"),
                    mask: format!("mask_{i:05}.pgm"),
                    depth: format!("depth_{i:05}.dpt"),
                    rgb_sha256: hex(&Sha256::digest(f.pixels())),
                })
                .collect(),
        }
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes")
    }

    /// Identity of the scene: SHA-256 of the manifest JSON.
    pub fn bundle_hash(&self) -> String {
        hex(&Sha256::digest(self.manifest_json().as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPose {
    pub t: [f32; 3],
    pub q: [f32; 4],
}

impl From<&Pose6D> for ManifestPose {
    fn from(p: &Pose6D) -> Self {
        Self { t: p.t, q: p.q }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub frame: String,
    pub background: String,
    pub mask: String,
    pub depth: String,
    pub rgb_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub intrinsics: PinholeIntrinsics,
    pub poses: Vec<ManifestPose>,
    pub camera_poses: Vec<ManifestPose>,
    pub symmetry: Vec<[f32; 4]>,
    pub seed: u64,
    #[serde(default)]
    pub frame_ids: Vec<u64>,
    #[serde(default)]
    pub capture_ts: Vec<u64>,
    #[serde(default)]
    pub files: Vec<ManifestFiles>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice_hash(seed: u64, ix: i64, iy: i64) -> u64 {
    splitmix64(seed ^ splitmix64(ix as u64 ^ splitmix64(iy as u64)))
}

/// Low-saturation texture color at world point `(wx, wy)` on the
/// background plane. Every channel spread stays below 100, far from the
/// saturated object colors.
pub fn background_color(kind: BackgroundKind, seed: u64, wx: f64, wy: f64) -> [u8; 3] {
    let h = splitmix64(seed);
    let base = |k: u32| 100.0 + ((h >> (k * 8)) & 0x1f) as f64;
    let quant = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    match kind {
        BackgroundKind::Gradient => [
            quant(base(0) + 2.0 * wx),
            quant(base(1) + 1.5 * wy),
            quant(base(2) + 1.0 * (wx + wy)),
        ],
        BackgroundKind::Checkerboard => {
            let cell = 0.5;
            let parity = ((wx / cell).floor() as i64 + (wy / cell).floor() as i64).rem_euclid(2);
            let g = if parity == 0 { base(0) - 20.0 } else { base(1) + 40.0 };
            [quant(g), quant(g + 4.0), quant(g - 4.0)]
        }
        BackgroundKind::NoiseTexture => {
            let cell = 0.4;
            let (fx, fy) = (wx / cell, wy / cell);
            let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
            let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
            let (sx, sy) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
            let corner = |dx: i64, dy: i64| {
                let v = lattice_hash(seed, ix + dx, iy + dy);
                let gray = 70.0 + (v & 0x7f) as f64 * (110.0 / 127.0);
                let tint = |s: u32| ((v >> s) & 0x1f) as f64 - 15.5;
                [gray + tint(8), gray + tint(16), gray + tint(24)]
            };
            let (c00, c10, c01, c11) = (corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1));
            std::array::from_fn(|ch| {
                let top = c00[ch] + (c10[ch] - c00[ch]) * sx;
                let bottom = c01[ch] + (c11[ch] - c01[ch]) * sx;
                quant(top + (bottom - top) * sy)
            })
        }
    }
}

pub fn generate_sequence(cfg: &SceneConfig) -> Result<SequenceBundle, SceneError> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let n = w as usize * h as usize;
    let intr = cfg.intrinsics;
    let mesh = cfg.object.mesh()?;
    let n_frames = cfg.frame_count as usize;

    let mut bundle = SequenceBundle {
        frames: Vec::with_capacity(n_frames),
        gt_masks: Vec::with_capacity(n_frames),
        gt_backgrounds: Vec::with_capacity(n_frames),
        gt_poses: Vec::with_capacity(n_frames),
        symmetry_group: cfg.object.symmetry_group(),
        seed: cfg.seed,
    };

    for i in 0..cfg.frame_count {
        let camera = cfg.camera_pose(i);
        // the stored f32 pose is exactly what gets rendered
        let gt_pose = camera.inverse().compose(&cfg.object_world_pose(i));
        let gt_pose = Pose6D { confidence: 1.0, ..gt_pose };

        let (kind, tex_seed) = cfg.background_at(i);
        let mut bg = vec![0u8; n * 3];
        for y in 0..h {
            for x in 0..w {
                let pc = intr.back_project(x as f64, y as f64, BACKGROUND_DEPTH as f64);
                let pw = camera.transform_point(Vector3::from(pc));
                let c = background_color(kind, tex_seed, pw.x, pw.y);
                let idx = (y as usize * w as usize + x as usize) * 3;
                bg[idx..idx + 3].copy_from_slice(&c);
            }
        }

        let mut zb = ZBuffer::new(w, h, BACKGROUND_DEPTH as f64);
        let placement = Placement {
            pose: gt_pose,
            scale: 1.0,
        };
        for tri in placed_triangles(&mesh, &placement) {
            zb.draw(&intr, &tri);
        }

        let mut rgb = bg.clone();
        let mut depth = vec![BACKGROUND_DEPTH; n];
        let mut labels = vec![0u16; n];
        for p in 0..n {
            if zb.covered()[p] {
                rgb[p * 3..p * 3 + 3].copy_from_slice(&zb.colors()[p]);
                depth[p] = zb.depth()[p] as f32;
                labels[p] = 1;
            }
        }

        if cfg.noise_amplitude > 0 {
            let k = cfg.noise_amplitude as i16;
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ splitmix64(i as u64)));
            for p in 0..n * 3 {
                let delta = rng.random_range(-k..=k);
                let perturb = |v: u8| (v as i16 + delta).clamp(0, 255) as u8;
                rgb[p] = perturb(rgb[p]);
                bg[p] = perturb(bg[p]);
            }
        }

        let frame_id = i as u64;
        let capture_ts = (i as f64 * 1e6 / cfg.fps).round() as u64;
        bundle.frames.push(Frame::new(
            frame_id,
            capture_ts,
            w,
            h,
            rgb,
            Some(depth),
            intr,
            camera,
        )?);
        bundle.gt_backgrounds.push(Frame::new(
            frame_id,
            capture_ts,
            w,
            h,
            bg,
            Some(vec![BACKGROUND_DEPTH; n]),
            intr,
            camera,
        )?);
        bundle.gt_masks.push(InstanceMask::from_labels(w, h, labels)?);
        bundle.gt_poses.push(gt_pose);
    }
    Ok(bundle)
}

pub fn write_bundle(bundle: &SequenceBundle, dir: &Path) -> Result<(), SceneError> {
    let io = |e: std::io::Error| {
        SceneError::Io(ImageIoError::Io {
            path: dir.display().to_string(),
            source: e,
        })
    };
    fs::create_dir_all(dir).map_err(io)?;
    let manifest = bundle.manifest();
    for (i, files) in manifest.files.iter().enumerate() {
        let f = &bundle.frames[i];
        let (w, h) = (f.width(), f.height());
        imageio::write_ppm(&dir.join(&files.frame), w, h, f.pixels())?;
        imageio::write_ppm(&dir.join(&files.background), w, h, bundle.gt_backgrounds[i].pixels())?;
        imageio::write_pgm16(&dir.join(&files.mask), w, h, bundle.gt_masks[i].labels())?;
        let depth = f
            .depth()
            .ok_or_else(|| SceneError::InvalidConfig(format!("frame {i} has no depth")))?;
        imageio::write_depth(&dir.join(&files.depth), w, h, depth)?;
    }
    fs::write(dir.join("manifest.json"), bundle.manifest_json()).map_err(io)?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<SequenceBundle, SceneError> {
    let schema = |m: String| SceneError::ManifestSchema(m);
    let text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| schema(format!("cannot read manifest.json: {e}")))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(schema(format!("unsupported version {}", m.version)));
    }
    let n = m.frame_count as usize;
    for (what, len) in [
        ("poses", m.poses.len()),
        ("camera_poses", m.camera_poses.len()),
    ] {
        if len != n {
            return Err(schema(format!("{what} has {len} entries, frame_count is {n}")));
        }
    }
    for (what, len) in [
        ("frame_ids", m.frame_ids.len()),
        ("capture_ts", m.capture_ts.len()),
        ("files", m.files.len()),
    ] {
        if len != 0 && len != n {
            return Err(schema(format!("{what} has {len} entries, frame_count is {n}")));
        }
    }
    let pose = |p: &ManifestPose| {
        Pose6D::new(p.t, p.q, 1.0).map_err(|e| schema(format!("bad pose: {e}")))
    };
    let symmetry_group = m.symmetry.clone();
    for q in &symmetry_group {
        Pose6D::new([0.0; 3], *q, 1.0).map_err(|e| schema(format!("bad symmetry: {e}")))?;
    }

    let mut bundle = SequenceBundle {
        frames: Vec::with_capacity(n),
        gt_masks: Vec::with_capacity(n),
        gt_backgrounds: Vec::with_capacity(n),
        gt_poses: Vec::with_capacity(n),
        symmetry_group,
        seed: m.seed,
    };
    let dims = |w: u32, h: u32, what: &str| {
        if (w, h) != (m.width, m.height) {
            Err(schema(format!("{what} is {w}x{h}, manifest says {}x{}", m.width, m.height)))
        } else {
            Ok(())
        }
    };
    for i in 0..n {
        let names = m.files.get(i).cloned().unwrap_or_else(|| ManifestFiles {
            frame: format!("frame_{i:05}.ppm"),
            background: format!("bg_{i:05}.ppm"),
            mask: format!("mask_{i:05}.pgm"),
            depth: format!("depth_{i:05}.dpt"),
            rgb_sha256: String::new(),
        });
        let (w, h, rgb) = imageio::read_ppm(&dir.join(&names.frame))?;
        dims(w, h, &names.frame)?;
        let (bw, bh, bg) = imageio::read_ppm(&dir.join(&names.background))?;
        dims(bw, bh, &names.background)?;
        let (mw, mh, labels) = imageio::read_pgm16(&dir.join(&names.mask))?;
        dims(mw, mh, &names.mask)?;
        let (dw, dh, depth) = imageio::read_depth(&dir.join(&names.depth))?;
        dims(dw, dh, &names.depth)?;

        let frame_id = m.frame_ids.get(i).copied().unwrap_or(i as u64);
        let ts = m.capture_ts.get(i).copied().unwrap_or(0);
        let camera = pose(&m.camera_poses[i])?;
        let bg_depth = vec![BACKGROUND_DEPTH; w as usize * h as usize];
        bundle.frames.push(Frame::new(frame_id, ts, w, h, rgb, Some(depth), m.intrinsics, camera)?);
        bundle.gt_backgrounds.push(Frame::new(
            frame_id,
            ts,
            w,
            h,
            bg,
            Some(bg_depth),
            m.intrinsics,
            camera,
        )?);
        bundle.gt_masks.push(
            InstanceMask::from_labels(w, h, labels).map_err(|e| schema(format!("{}: {e}", names.mask)))?,
        );
        bundle.gt_poses.push(pose(&m.poses[i])?);
    }
    Ok(bundle)
}
