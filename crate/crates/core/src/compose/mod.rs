//! Object substitution: map the estimated real-object pose onto a virtual
//! asset and rasterize it over the inpainted frame.

pub mod asset;
pub mod raster;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asset::{Asset, AssetStore, AssetTriangle, BOX_ASSET_COLORS};
pub use raster::{CamTriangle, ZBuffer, NEAR_PLANE};

use crate::types::{CoreError, Frame, InstanceMask, PinholeIntrinsics, Pose6D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("real extent has a zero axis: {0:?}")]
    ZeroExtent([f64; 3]),
    #[error("fixed scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("asset {asset_id}: {reason}")]
    InvalidAsset { asset_id: String, reason: String },
    #[error("asset text line {line}: {reason}")]
    AssetParse { line: usize, reason: String },
    #[error("asset io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScaleMode {
    FitExtent,
    FixedScale { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    FullPose,
    TranslationOnly,
}

/// How the substitute is sized and oriented relative to the real object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPolicy {
    #[serde(flatten)]
    pub mode: ScaleMode,
    pub align: Alignment,
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        Self {
            mode: ScaleMode::FitExtent,
            align: Alignment::FullPose,
        }
    }
}

/// Asset pose in camera space plus a uniform scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub pose: Pose6D,
    pub scale: f32,
}

impl Placement {
    pub fn to_wire(&self) -> [f32; 8] {
        let p = self.pose.to_wire();
        [p[0], p[1], p[2], p[3], p[4], p[5], p[6], self.scale]
    }

    pub fn from_wire(v: [f32; 8]) -> Result<Self, ComposeError> {
        let pose = Pose6D::from_wire([v[0], v[1], v[2], v[3], v[4], v[5], v[6]], 1.0)?;
        if !(v[7].is_finite() && v[7] > 0.0) {
            return Err(ComposeError::InvalidScale(v[7] as f64));
        }
        Ok(Self { pose, scale: v[7] })
    }
}

pub fn map_pose(
    real_pose: &Pose6D,
    real_extent: [f64; 3],
    asset: &Asset,
    policy: &AnchorPolicy,
) -> Result<Placement, ComposeError> {
    let scale = match policy.mode {
        ScaleMode::FitExtent => {
            if real_extent.iter().any(|&e| !(e > 0.0)) {
                return Err(ComposeError::ZeroExtent(real_extent));
            }
            let local = asset.local_extent();
            (0..3)
                .map(|i| real_extent[i] / local[i])
                .fold(f64::INFINITY, f64::min)
        }
        ScaleMode::FixedScale { scale } => {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(ComposeError::InvalidScale(scale));
            }
            scale
        }
    };
    let q = match policy.align {
        Alignment::FullPose => real_pose.q,
        Alignment::TranslationOnly => [1.0, 0.0, 0.0, 0.0],
    };
    Ok(Placement {
        pose: Pose6D {
            t: real_pose.t,
            q,
            confidence: 1.0,
        },
        scale: scale as f32,
    })
}

/// Camera-space triangles of `asset` after scaling then the rigid pose.
pub fn placed_triangles(asset: &Asset, placement: &Placement) -> Vec<CamTriangle> {
    let s = placement.scale as f64;
    let rot: UnitQuaternion<f64> = placement.pose.rotation();
    let t = placement.pose.translation();
    let verts: Vec<Vector3<f64>> = asset
        .vertices()
        .iter()
        .map(|v| rot * (Vector3::new(v[0], v[1], v[2]) * s) + t)
        .collect();
    asset
        .triangles()
        .iter()
        .map(|tri| CamTriangle {
            v: tri.idx.map(|i| verts[i]),
            color: tri.color,
        })
        .collect()
}

/// Rasterizes the placed asset over `base`. Pixels outside the returned
/// silhouette are untouched.
pub fn render_asset(
    base: &Frame,
    asset: &Asset,
    placement: &Placement,
    intr: &PinholeIntrinsics,
) -> Result<(Frame, InstanceMask), ComposeError> {
    let (w, h) = (base.width(), base.height());
    let mut zb = ZBuffer::new(w, h, f64::INFINITY);
    for tri in placed_triangles(asset, placement) {
        zb.draw(intr, &tri);
    }
    let mut out = base.clone();
    let px = out.pixels_mut();
    let mut labels = vec![0u16; zb.covered().len()];
    for (i, (&cov, color)) in zb.covered().iter().zip(zb.colors()).enumerate() {
        if cov {
            px[i * 3..i * 3 + 3].copy_from_slice(color);
            labels[i] = 1;
        }
    }
    Ok((out, InstanceMask::from_labels(w, h, labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(w: u32, h: u32) -> Frame {
        let intr = PinholeIntrinsics::new(100.0, 100.0, w as f32 / 2.0, h as f32 / 2.0).unwrap();
        let pixels = (0..w * h * 3).map(|i| (i % 251) as u8).collect();
        Frame::new(0, 0, w, h, pixels, None, intr, Pose6D::identity()).unwrap()
    }

    fn unit_cube() -> Asset {
        Asset::box_mesh("cube", [1.0; 3], BOX_ASSET_COLORS).unwrap()
    }

    #[test]
    fn fit_extent_takes_min_ratio() {
        let p = map_pose(&Pose6D::identity(), [0.2, 0.4, 0.3], &unit_cube(), &AnchorPolicy::default())
            .unwrap();
        assert_eq!(p.scale, 0.2);
    }

    #[test]
    fn fixed_scale_ignores_extent() {
        let policy = AnchorPolicy {
            mode: ScaleMode::FixedScale { scale: 2.0 },
            align: Alignment::FullPose,
        };
        let p = map_pose(&Pose6D::identity(), [0.0, 5.0, 1.0], &unit_cube(), &policy).unwrap();
        assert_eq!(p.scale, 2.0);
    }

    #[test]
    fn zero_extent_rejected_in_fit_mode() {
        let r = map_pose(&Pose6D::identity(), [0.0, 0.4, 0.3], &unit_cube(), &AnchorPolicy::default());
        assert!(matches!(r, Err(ComposeError::ZeroExtent(_))));
    }

    #[test]
    fn translation_only_drops_rotation() {
        let real = Pose6D::from_parts(
            Vector3::new(0.1, 0.2, 2.0),
            UnitQuaternion::from_euler_angles(0.3, 0.2, 0.1),
            0.5,
        );
        let policy = AnchorPolicy {
            mode: ScaleMode::FitExtent,
            align: Alignment::TranslationOnly,
        };
        let p = map_pose(&real, [1.0; 3], &unit_cube(), &policy).unwrap();
        assert_eq!(p.pose.q, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.pose.t, real.t);
    }

    #[test]
    fn behind_camera_is_a_no_op() {
        let b = base(32, 24);
        let placement = Placement {
            pose: Pose6D {
                t: [0.0, 0.0, -5.0],
                ..Pose6D::identity()
            },
            scale: 1.0,
        };
        let (out, sil) = render_asset(&b, &unit_cube(), &placement, b.intrinsics()).unwrap();
        assert_eq!(out, b);
        assert_eq!(sil.instance_count(), 0);
    }

    #[test]
    fn placement_wire_roundtrip() {
        let p = Placement {
            pose: Pose6D::from_parts(
                Vector3::new(0.1, -0.3, 2.5),
                UnitQuaternion::from_euler_angles(1.0, 0.5, -0.2),
                1.0,
            ),
            scale: 0.35,
        };
        assert_eq!(Placement::from_wire(p.to_wire()).unwrap(), p);
    }

    #[test]
    fn anchor_policy_json_shape() {
        let json = serde_json::to_value(AnchorPolicy {
            mode: ScaleMode::FixedScale { scale: 1.5 },
            align: Alignment::TranslationOnly,
        })
        .unwrap();
        assert_eq!(
            json,
            serde_json::json!({"mode": "fixed_scale", "scale": 1.5, "align": "translation_only"})
        );
    }
}
