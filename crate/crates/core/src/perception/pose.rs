use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion, Vector3};

use crate::types::{Frame, InstanceMask, Pose6D};

use super::{PerceptionError, PoseFeatures};

/// Pixel area at which pose confidence reaches one half.
pub const CONFIDENCE_HALF_AREA: f64 = 64.0;

/// Back-projects every pixel of `instance` that has a finite positive depth.
fn masked_points(
    frame: &Frame,
    mask: &InstanceMask,
    instance: u16,
) -> Result<(Vec<Vector3<f64>>, usize), PerceptionError> {
    if (mask.width(), mask.height()) != (frame.width(), frame.height()) {
        return Err(PerceptionError::DimMismatch {
            expected: (frame.width(), frame.height()),
            actual: (mask.width(), mask.height()),
        });
    }
    let depth = frame.depth().ok_or(PerceptionError::NoDepth)?;
    let intr = frame.intrinsics();
    let w = frame.width() as usize;
    let mut points = Vec::new();
    let mut area = 0usize;
    for (i, (&label, &d)) in mask.labels().iter().zip(depth).enumerate() {
        if label != instance || instance == 0 {
            continue;
        }
        area += 1;
        if d.is_finite() && d > 0.0 {
            let p = intr.back_project((i % w) as f64, (i / w) as f64, d as f64);
            points.push(Vector3::from(p));
        }
    }
    if area == 0 {
        return Err(PerceptionError::EmptyInstance(instance));
    }
    if points.is_empty() {
        return Err(PerceptionError::DegenerateDepth);
    }
    Ok((points, area))
}

/// Cheap first stage: centroid and axis-aligned extent of the instance's
/// back-projected depth samples.
pub fn pose_coarse(
    frame: &Frame,
    mask: &InstanceMask,
    instance: u16,
) -> Result<PoseFeatures, PerceptionError> {
    let (points, area) = masked_points(frame, mask, instance)?;
    let mut sum = Vector3::zeros();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &points {
        sum += p;
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let centroid = sum / points.len() as f64;
    let extent = hi - lo;
    Ok(PoseFeatures {
        centroid_cam: centroid.into(),
        extent_cam: extent.into(),
        mask_area_px: area,
    })
}

/// Second stage: orientation from the principal axes of the point cloud.
///
/// Eigenvectors of the covariance, by descending eigenvalue, become the
/// rotation columns. Columns 0 and 1 are signed to point along the matching
/// camera axis and column 2 is their cross product, so the result is a
/// proper rotation. The translation is the coarse centroid, unchanged.
pub fn pose_refine(
    features: &PoseFeatures,
    frame: &Frame,
    mask: &InstanceMask,
    instance: u16,
) -> Result<Pose6D, PerceptionError> {
    let (points, _) = masked_points(frame, mask, instance)?;
    if points.len() < 3 {
        return Err(PerceptionError::DegenerateGeometry(format!(
            "{} points, need at least 3",
            points.len()
        )));
    }
    let mean = Vector3::from(features.centroid_cam);
    let mut cov = Matrix3::zeros();
    for p in &points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l0 > 0.0) || l1 <= l0 * 1e-12 {
        return Err(PerceptionError::DegenerateGeometry(format!(
            "spread on fewer than two axes (eigenvalues {l0:e}, {l1:e})"
        )));
    }

    let axis = |k: usize| -> Vector3<f64> {
        let v: Vector3<f64> = eig.eigenvectors.column(order[k]).into_owned().normalize();
        let along = v[k];
        let flip = if along != 0.0 {
            along < 0.0
        } else {
            // perpendicular to its camera axis: make the dominant component positive
            let dominant = (0..3).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap();
            v[dominant] < 0.0
        };
        if flip {
            -v
        } else {
            v
        }
    };
    let c0 = axis(0);
    let c1 = axis(1);
    let c2 = c0.cross(&c1).normalize();
    // re-orthogonalize column 1 against numerical drift
    let c1 = c2.cross(&c0).normalize();
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[c0, c1, c2]));
    let q = UnitQuaternion::from_rotation_matrix(&rot);

    let area = features.mask_area_px as f64;
    let confidence = (area / (area + CONFIDENCE_HALF_AREA)) as f32;
    Ok(Pose6D {
        t: features.centroid_cam.map(|c| c as f32),
        ..Pose6D::from_parts(Vector3::zeros(), q, confidence)
    })
}

/// Extent of the instance's depth samples measured along the axes of
/// `pose`. Only visible surfaces contribute, so the axis closest to the
/// viewing direction is underestimated for solid objects.
pub fn instance_extent(
    frame: &Frame,
    mask: &InstanceMask,
    instance: u16,
    pose: &Pose6D,
) -> Result<[f64; 3], PerceptionError> {
    let (points, _) = masked_points(frame, mask, instance)?;
    let inv = pose.rotation().inverse();
    let t = pose.translation();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &points {
        let l = inv * (p - t);
        lo = lo.inf(&l);
        hi = hi.sup(&l);
    }
    Ok((hi - lo).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PinholeIntrinsics;

    fn frame_with_depth(w: u32, h: u32, depth: Vec<f32>, intr: PinholeIntrinsics) -> Frame {
        Frame::new(
            0,
            0,
            w,
            h,
            vec![0; (w * h * 3) as usize],
            Some(depth),
            intr,
            Pose6D::identity(),
        )
        .unwrap()
    }

    fn mask_of(w: u32, h: u32, on: impl Fn(u32, u32) -> bool) -> InstanceMask {
        let labels = (0..w * h).map(|i| u16::from(on(i % w, i / w))).collect();
        InstanceMask::from_labels(w, h, labels).unwrap()
    }

    #[test]
    fn single_pixel_at_principal_point() {
        let intr = PinholeIntrinsics::new(200.0, 200.0, 160.0, 120.0).unwrap();
        let f = frame_with_depth(320, 240, vec![2.0; 320 * 240], intr);
        let m = mask_of(320, 240, |x, y| (x, y) == (160, 120));
        let feat = pose_coarse(&f, &m, 1).unwrap();
        assert_eq!(feat.centroid_cam, [0.0, 0.0, 2.0]);
        assert_eq!(feat.extent_cam, [0.0, 0.0, 0.0]);
        assert_eq!(feat.mask_area_px, 1);
    }

    #[test]
    fn two_pixels_back_project() {
        let intr = PinholeIntrinsics::new(200.0, 200.0, 160.0, 120.0).unwrap();
        let f = frame_with_depth(320, 240, vec![1.0; 320 * 240], intr);
        let m = mask_of(320, 240, |x, y| y == 120 && (x == 160 || x == 180));
        let feat = pose_coarse(&f, &m, 1).unwrap();
        assert!((feat.centroid_cam[0] - 0.05).abs() < 1e-12);
        assert_eq!(feat.centroid_cam[1], 0.0);
        assert_eq!(feat.centroid_cam[2], 1.0);
        assert!((feat.extent_cam[0] - 0.1).abs() < 1e-12);
        assert_eq!(&feat.extent_cam[1..], &[0.0, 0.0]);
    }

    #[test]
    fn coarse_errors() {
        let intr = PinholeIntrinsics::new(100.0, 100.0, 4.0, 4.0).unwrap();
        let no_depth = Frame::new(0, 0, 8, 8, vec![0; 192], None, intr, Pose6D::identity()).unwrap();
        let m = mask_of(8, 8, |x, _| x < 2);
        assert!(matches!(pose_coarse(&no_depth, &m, 1), Err(PerceptionError::NoDepth)));
        let f = frame_with_depth(8, 8, vec![f32::NAN; 64], intr);
        assert!(matches!(pose_coarse(&f, &m, 1), Err(PerceptionError::DegenerateDepth)));
        let f = frame_with_depth(8, 8, vec![1.0; 64], intr);
        assert!(matches!(pose_coarse(&f, &m, 2), Err(PerceptionError::EmptyInstance(2))));
    }

    #[test]
    fn flat_patch_facing_camera_is_identity() {
        let intr = PinholeIntrinsics::new(100.0, 100.0, 20.0, 20.0).unwrap();
        let f = frame_with_depth(40, 40, vec![1.5; 1600], intr);
        // wider than tall so the first principal axis is camera x
        let m = mask_of(40, 40, |x, y| (8..32).contains(&x) && (14..26).contains(&y));
        let feat = pose_coarse(&f, &m, 1).unwrap();
        let pose = pose_refine(&feat, &f, &m, 1).unwrap();
        let q = pose.q_f64();
        assert!((q[0].abs() - 1.0).abs() < 1e-6, "q = {q:?}");
        assert_eq!(pose.t, feat.centroid_cam.map(|c| c as f32));
        let area = feat.mask_area_px as f32;
        assert_eq!(pose.confidence, (area as f64 / (area as f64 + 64.0)) as f32);
        let ext = instance_extent(&f, &m, 1, &pose).unwrap();
        // 24 x 12 samples at depth 1.5 and focal 100: 23 and 11 pixel steps of 0.015 m
        assert!((ext[0] - 23.0 * 0.015).abs() < 1e-6, "{ext:?}");
        assert!((ext[1] - 11.0 * 0.015).abs() < 1e-6, "{ext:?}");
        assert!(ext[2].abs() < 1e-6);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let intr = PinholeIntrinsics::new(100.0, 100.0, 4.0, 4.0).unwrap();
        let f = frame_with_depth(8, 8, vec![1.0; 64], intr);
        let m = mask_of(8, 8, |x, y| y == 3 && x < 3);
        let feat = pose_coarse(&f, &m, 1).unwrap();
        assert!(matches!(
            pose_refine(&feat, &f, &m, 1),
            Err(PerceptionError::DegenerateGeometry(_))
        ));
    }
}
