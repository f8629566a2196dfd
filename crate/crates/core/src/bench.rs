//! Scene-quality metrics against scenegen ground truth, and report
//! comparison.
//!
//! Everything here works from what a client actually receives (inpainted
//! and composed frames, pose, flags), so reports can be computed from a
//! results directory written by either run mode.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::compose::Placement;
use crate::imageio::{read_ppm, write_ppm, ImageIoError};
use crate::pipeline::{nearest_rank, PipelineResult, ResultFlags};
use crate::scenegen::SequenceBundle;
use crate::types::{Frame, InstanceMask, Pose6D, Stage, StageTimings};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("region is empty")]
    EmptyRegion,
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((u32, u32), (u32, u32)),
    #[error("results do not align with the bundle: {0}")]
    Misaligned(String),
    #[error("reports come from different bundles: {0} vs {1}")]
    BundleMismatch(String, String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] ImageIoError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// PSNR over the nonzero pixels of `region`, all three channels.
/// Identical pixels give `f64::INFINITY`.
pub fn psnr_region(a: &Frame, b: &Frame, region: &InstanceMask) -> Result<f64, BenchError> {
    let da = (a.width(), a.height());
    for d in [(b.width(), b.height()), (region.width(), region.height())] {
        if d != da {
            return Err(BenchError::DimMismatch(da, d));
        }
    }
    let (mut sq, mut n) = (0u64, 0u64);
    for (i, _) in region.labels().iter().enumerate().filter(|(_, &l)| l != 0) {
        for c in 0..3 {
            let d = a.pixels()[i * 3 + c] as i64 - b.pixels()[i * 3 + c] as i64;
            sq += (d * d) as u64;
        }
        n += 3;
    }
    if n == 0 {
        return Err(BenchError::EmptyRegion);
    }
    if sq == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sq as f64 / n as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

/// IoU of `{a == label_a}` and `{b == label_b}`; 1 when both are empty.
pub fn mask_iou(a: &InstanceMask, b: &InstanceMask, label_a: u16, label_b: u16) -> Result<f64, BenchError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(BenchError::DimMismatch((a.width(), a.height()), (b.width(), b.height())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&la, &lb) in a.labels().iter().zip(b.labels()) {
        let (ia, ib) = (la == label_a, lb == label_b);
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Pixels where two equally sized frames differ in any channel, labeled 1.
pub fn diff_mask(a: &Frame, b: &Frame) -> Result<InstanceMask, BenchError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(BenchError::DimMismatch((a.width(), a.height()), (b.width(), b.height())));
    }
    let labels = a
        .pixels()
        .chunks_exact(3)
        .zip(b.pixels().chunks_exact(3))
        .map(|(x, y)| u16::from(x != y))
        .collect();
    Ok(InstanceMask::from_labels(a.width(), a.height(), labels).expect("labels are 0/1"))
}

fn ser_psnr<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_some(x),
        _ => s.serialize_none(),
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    Ok(Some(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY)))
}

/// Metrics of one frame. Absent fields are undefined for that frame; an
/// infinite PSNR is written as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality {
    pub frame_id: u64,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_psnr",
        deserialize_with = "de_psnr"
    )]
    pub inpaint_psnr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_t_err_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_r_err_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_flicker: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub silhouette_iou: Option<f64>,
}

pub const METRICS: [&str; 6] = [
    "inpaint_psnr_db",
    "mask_iou",
    "pose_t_err_m",
    "pose_r_err_deg",
    "temporal_flicker",
    "silhouette_iou",
];

impl FrameQuality {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "inpaint_psnr_db" => self.inpaint_psnr_db,
            "mask_iou" => self.mask_iou,
            "pose_t_err_m" => self.pose_t_err_m,
            "pose_r_err_deg" => self.pose_r_err_deg,
            "temporal_flicker" => self.temporal_flicker,
            "silhouette_iou" => self.silhouette_iou,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Aggregate {
    /// Over finite values only; `None` when there are none.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: nearest_rank(&v, 50.0)?,
            p95: nearest_rank(&v, 95.0)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub bypass: f64,
    pub reuse: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub bundle_hash: String,
    pub frames: u64,
    pub dropped: u64,
    pub metrics: BTreeMap<String, Aggregate>,
    pub rates: Rates,
    #[serde(default)]
    pub per_frame: Vec<FrameQuality>,
}

/// Rotation error in degrees, minimized over the object's symmetries.
pub fn rotation_error_deg(est: &Pose6D, gt: &Pose6D, symmetry: &[[f32; 4]]) -> f64 {
    let gq = gt.rotation();
    let identity = [[1.0f32, 0.0, 0.0, 0.0]];
    let group: &[[f32; 4]] = if symmetry.is_empty() { &identity } else { symmetry };
    group
        .iter()
        .map(|s| {
            let s = Pose6D { q: *s, ..Pose6D::identity() }.rotation();
            est.rotation().angle_to(&(gq * s)).to_degrees()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Mean absolute per-sample difference between consecutive inpainted
/// frames, over pixels inside both ground-truth masks whose true
/// background did not change. `None` when no pixel qualifies.
fn flicker(
    prev: &Frame,
    curr: &Frame,
    prev_mask: &InstanceMask,
    curr_mask: &InstanceMask,
    prev_bg: &Frame,
    curr_bg: &Frame,
) -> Option<f64> {
    let (mut sum, mut n) = (0u64, 0u64);
    for i in 0..curr_mask.labels().len() {
        if prev_mask.labels()[i] == 0 || curr_mask.labels()[i] == 0 {
            continue;
        }
        let px = i * 3..i * 3 + 3;
        if prev_bg.pixels()[px.clone()] != curr_bg.pixels()[px.clone()] {
            continue;
        }
        for c in px {
            sum += prev.pixels()[c].abs_diff(curr.pixels()[c]) as u64;
            n += 1;
        }
    }
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Scores `results` against the bundle they were produced from. Frames of
/// the bundle without a result count as dropped.
pub fn evaluate(results: &[PipelineResult], bundle: &SequenceBundle) -> Result<QualityReport, BenchError> {
    if results.is_empty() {
        return Err(BenchError::Misaligned("no results".into()));
    }
    let index: BTreeMap<u64, usize> =
        bundle.frames.iter().enumerate().map(|(i, f)| (f.frame_id(), i)).collect();
    let mut idx = Vec::with_capacity(results.len());
    for r in results {
        let &i = index
            .get(&r.frame_id)
            .ok_or_else(|| BenchError::Misaligned(format!("frame {} is not in the bundle", r.frame_id)))?;
        if idx.last().is_some_and(|&p| p >= i) {
            return Err(BenchError::Misaligned(format!("frame {} out of order", r.frame_id)));
        }
        let f = &bundle.frames[i];
        if (r.inpainted.width(), r.inpainted.height()) != (f.width(), f.height()) {
            return Err(BenchError::Misaligned(format!("frame {} has other dimensions", r.frame_id)));
        }
        idx.push(i);
    }

    let mut per_frame = Vec::with_capacity(results.len());
    for (k, (r, &i)) in results.iter().zip(&idx).enumerate() {
        let gt_mask = &bundle.gt_masks[i];
        let gt_present = gt_mask.nonzero_count() > 0;
        let mut q = FrameQuality {
            frame_id: r.frame_id,
            ..FrameQuality::default()
        };
        if gt_present {
            q.inpaint_psnr_db = Some(psnr_region(&r.inpainted, &bundle.gt_backgrounds[i], gt_mask)?);
        }
        let removed = diff_mask(&r.inpainted, &bundle.frames[i])?;
        q.mask_iou = Some(mask_iou(&removed, gt_mask, 1, 1)?);
        if let (Some(p), true) = (&r.pose, gt_present) {
            let gt = &bundle.gt_poses[i];
            q.pose_t_err_m = Some((p.translation() - gt.translation()).norm());
            q.pose_r_err_deg = Some(rotation_error_deg(p, gt, &bundle.symmetry_group));
        }
        if k > 0 {
            let j = idx[k - 1];
            q.temporal_flicker = flicker(
                &results[k - 1].inpainted,
                &r.inpainted,
                &bundle.gt_masks[j],
                gt_mask,
                &bundle.gt_backgrounds[j],
                &bundle.gt_backgrounds[i],
            );
        }
        if let Some(c) = &r.composed {
            let sil = diff_mask(c, &r.inpainted)?;
            q.silhouette_iou = Some(mask_iou(&sil, gt_mask, 1, 1)?);
        }
        per_frame.push(q);
    }

    let metrics = METRICS
        .iter()
        .filter_map(|m| Aggregate::of(per_frame.iter().filter_map(|q| q.get(m))).map(|a| (m.to_string(), a)))
        .collect();
    let frames = results.len() as u64;
    let dropped = (bundle.len() - results.len()) as u64;
    let count = |f: fn(&ResultFlags) -> bool| results.iter().filter(|r| f(&r.flags)).count() as f64;
    Ok(QualityReport {
        bundle_hash: bundle.bundle_hash(),
        frames,
        dropped,
        metrics,
        rates: Rates {
            bypass: count(|f| f.frame_passer_bypass) / frames as f64,
            reuse: count(|f| f.early_stop_reuse) / frames as f64,
            drop: dropped as f64 / (frames + dropped) as f64,
        },
        per_frame,
    })
}

/// Largest tolerated change of a metric mean in the bad direction.
/// Positive tolerance: higher is worse. Negative: lower is worse.
pub fn regression_tolerance(metric: &str) -> Option<f64> {
    Some(match metric {
        "inpaint_psnr_db" => -1.0,
        "mask_iou" => -0.01,
        "pose_t_err_m" => 0.005,
        "pose_r_err_deg" => 1.0,
        "temporal_flicker" => 1.0,
        "silhouette_iou" => -0.01,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl Delta {
    fn new(a: f64, b: f64) -> Self {
        Self { a, b, delta: b - a }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub mean: Delta,
    pub p50: Delta,
    pub p95: Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub bundle_hash: String,
    pub metrics: BTreeMap<String, MetricDelta>,
    pub rates: BTreeMap<String, Delta>,
    /// Metrics whose mean moved past its tolerance in the bad direction.
    pub regressions: Vec<String>,
}

impl Comparison {
    pub fn has_regressions(&self) -> bool {
        !self.regressions.is_empty()
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>12} {:>12} {:>12}", "metric", "a", "b", "delta");
        for (name, d) in &self.metrics {
            let flag = if self.regressions.contains(name) { "  REGRESSION" } else { "" };
            let _ = writeln!(s, "{:<18} {:>12.4} {:>12.4} {:>+12.4}{flag}", name, d.mean.a, d.mean.b, d.mean.delta);
        }
        for (name, d) in &self.rates {
            let _ = writeln!(s, "{:<18} {:>12.4} {:>12.4} {:>+12.4}", format!("{name}_rate"), d.a, d.b, d.delta);
        }
        s
    }
}

/// Deltas from `a` to `b`. Metrics present in only one report are skipped.
pub fn compare(a: &QualityReport, b: &QualityReport) -> Result<Comparison, BenchError> {
    if a.bundle_hash != b.bundle_hash {
        return Err(BenchError::BundleMismatch(a.bundle_hash.clone(), b.bundle_hash.clone()));
    }
    let mut metrics = BTreeMap::new();
    let mut regressions = Vec::new();
    for (name, ma) in &a.metrics {
        let Some(mb) = b.metrics.get(name) else { continue };
        let d = MetricDelta {
            mean: Delta::new(ma.mean, mb.mean),
            p50: Delta::new(ma.p50, mb.p50),
            p95: Delta::new(ma.p95, mb.p95),
        };
        if let Some(tol) = regression_tolerance(name) {
            let worse = if tol > 0.0 { d.mean.delta > tol } else { d.mean.delta < tol };
            if worse {
                regressions.push(name.clone());
            }
        }
        metrics.insert(name.clone(), d);
    }
    let rates = [
        ("bypass", a.rates.bypass, b.rates.bypass),
        ("reuse", a.rates.reuse, b.rates.reuse),
        ("drop", a.rates.drop, b.rates.drop),
    ]
    .into_iter()
    .map(|(n, x, y)| (n.to_string(), Delta::new(x, y)))
    .collect();
    Ok(Comparison {
        bundle_hash: a.bundle_hash.clone(),
        metrics,
        rates,
        regressions,
    })
}

/// One line of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub frame_id: u64,
    pub flags: ResultFlags,
    #[serde(default)]
    pub pose: Option<Pose6D>,
    #[serde(default)]
    pub placement: Option<Placement>,
    #[serde(default)]
    pub timings: BTreeMap<String, u64>,
    #[serde(default)]
    pub composed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub frames: Vec<ResultRecord>,
    #[serde(default)]
    pub dropped: Vec<u64>,
}

pub fn inpainted_name(frame_id: u64) -> String {
    format!("inpainted_{frame_id:05}.ppm")
}

pub fn composed_name(frame_id: u64) -> String {
    format!("composed_{frame_id:05}.ppm")
}

impl ResultRecord {
    pub fn from_result(r: &PipelineResult) -> Self {
        Self {
            frame_id: r.frame_id,
            flags: r.flags,
            pose: r.pose,
            placement: r.placement,
            timings: r.timings.iter().map(|(s, us)| (s.as_str().to_string(), us)).collect(),
            composed: r.composed.is_some(),
        }
    }
}

/// Writes one result's frames into `dir`.
pub fn write_result_frames(dir: &Path, r: &PipelineResult) -> Result<(), BenchError> {
    let f = &r.inpainted;
    write_ppm(&dir.join(inpainted_name(r.frame_id)), f.width(), f.height(), f.pixels())?;
    if let Some(c) = &r.composed {
        write_ppm(&dir.join(composed_name(r.frame_id)), c.width(), c.height(), c.pixels())?;
    }
    Ok(())
}

pub fn write_results_file(dir: &Path, file: &ResultsFile) -> Result<(), BenchError> {
    std::fs::write(dir.join("results.json"), serde_json::to_vec_pretty(file)?)?;
    Ok(())
}

/// Reads a results directory back into pipeline results, taking frame
/// metadata from the matching bundle frames.
pub fn read_results_dir(dir: &Path, bundle: &SequenceBundle) -> Result<Vec<PipelineResult>, BenchError> {
    let file: ResultsFile = serde_json::from_slice(&std::fs::read(dir.join("results.json"))?)?;
    let by_id: BTreeMap<u64, &Frame> = bundle.frames.iter().map(|f| (f.frame_id(), f)).collect();
    let load = |name: String, like: &Frame| -> Result<Frame, BenchError> {
        let (w, h, px) = read_ppm(&dir.join(&name))?;
        if (w, h) != (like.width(), like.height()) {
            return Err(BenchError::DimMismatch((w, h), (like.width(), like.height())));
        }
        Ok(like.with_pixels(px).expect("dimensions checked"))
    };
    file.frames
        .iter()
        .map(|rec| {
            let like = by_id
                .get(&rec.frame_id)
                .ok_or_else(|| BenchError::Misaligned(format!("frame {} is not in the bundle", rec.frame_id)))?;
            Ok(PipelineResult {
                frame_id: rec.frame_id,
                inpainted: load(inpainted_name(rec.frame_id), like)?,
                pose: rec.pose,
                placement: rec.placement,
                composed: if rec.composed { Some(load(composed_name(rec.frame_id), like)?) } else { None },
                flags: rec.flags,
                timings: rec
                    .timings
                    .iter()
                    .filter_map(|(n, us)| Stage::parse(n).map(|s| (s, *us)))
                    .collect::<StageTimings>(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_sequence, SceneConfig};
    use crate::types::PinholeIntrinsics;
    use proptest::prelude::*;

    fn gray(w: u32, h: u32, v: u8) -> Frame {
        let intr = PinholeIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        Frame::new(0, 0, w, h, vec![v; (w * h * 3) as usize], None, intr, Pose6D::identity()).unwrap()
    }

    fn mask(w: u32, h: u32, on: &[(u32, u32)]) -> InstanceMask {
        let mut l = vec![0u16; (w * h) as usize];
        for &(x, y) in on {
            l[(y * w + x) as usize] = 1;
        }
        InstanceMask::from_labels(w, h, l).unwrap()
    }

    /// Results an ideal pipeline would return: true background and pose.
    fn oracle(bundle: &SequenceBundle) -> Vec<PipelineResult> {
        bundle
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| PipelineResult {
                frame_id: f.frame_id(),
                inpainted: bundle.gt_backgrounds[i].clone(),
                pose: Some(bundle.gt_poses[i]),
                placement: None,
                composed: None,
                flags: ResultFlags::default(),
                timings: StageTimings::new(),
            })
            .collect()
    }

    #[test]
    fn psnr_examples() {
        let m = mask(2, 2, &[(1, 1)]);
        assert_eq!(psnr_region(&gray(2, 2, 5), &gray(2, 2, 5), &m).unwrap(), f64::INFINITY);
        let p = psnr_region(&gray(2, 2, 5), &gray(2, 2, 15), &m).unwrap();
        assert!((p - 10.0 * 650.25f64.log10()).abs() < 1e-12);
        assert!((p - 28.13).abs() < 0.005);
        assert!(matches!(psnr_region(&gray(2, 2, 5), &gray(2, 2, 5), &mask(2, 2, &[])), Err(BenchError::EmptyRegion)));
    }

    #[test]
    fn iou_examples() {
        let a = mask(4, 4, &[(0, 0), (1, 0), (0, 1), (1, 1)]);
        let b = mask(4, 4, &[(1, 0), (2, 0), (1, 1), (2, 1)]);
        assert_eq!(mask_iou(&a, &a, 1, 1).unwrap(), 1.0);
        assert!((mask_iou(&a, &b, 1, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let c = mask(4, 4, &[(3, 3)]);
        assert_eq!(mask_iou(&a, &c, 1, 1).unwrap(), 0.0);
        assert_eq!(mask_iou(&mask(4, 4, &[]), &mask(4, 4, &[]), 1, 1).unwrap(), 1.0);
    }

    #[test]
    fn oracle_pass_through_is_perfect() {
        let b = generate_sequence(&SceneConfig::reveal_then_static(4)).unwrap();
        let r = evaluate(&oracle(&b), &b).unwrap();
        for q in &r.per_frame {
            assert_eq!(q.inpaint_psnr_db, Some(f64::INFINITY));
            assert_eq!(q.mask_iou, Some(1.0));
            assert_eq!(q.pose_t_err_m, Some(0.0));
            assert!(q.pose_r_err_deg.unwrap() < 1e-3);
        }
        assert_eq!(r.dropped, 0);
        assert!(!r.metrics.contains_key("inpaint_psnr_db"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inpaint_psnr_db\":null"));
        let back: QualityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.per_frame[0].inpaint_psnr_db, Some(f64::INFINITY));
    }

    #[test]
    fn empty_results_misaligned() {
        let b = generate_sequence(&SceneConfig { frame_count: 1, ..SceneConfig::default() }).unwrap();
        assert!(matches!(evaluate(&[], &b), Err(BenchError::Misaligned(_))));
    }

    #[test]
    fn missing_frames_count_as_dropped() {
        let b = generate_sequence(&SceneConfig::reveal_then_static(4)).unwrap();
        let mut res = oracle(&b);
        res.remove(1);
        let r = evaluate(&res, &b).unwrap();
        assert_eq!((r.frames, r.dropped), (3, 1));
        assert!((r.rates.drop - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rotation_error_uses_symmetry() {
        let gt = Pose6D::identity();
        let flipped = Pose6D { q: [0.0, 0.0, 0.0, 1.0], ..gt };
        let group = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        assert!(rotation_error_deg(&flipped, &gt, &group) < 1e-9);
        assert!((rotation_error_deg(&flipped, &gt, &[]) - 180.0).abs() < 1e-9);
    }

    #[test]
    fn compare_self_is_zero_and_hash_checked() {
        let b = generate_sequence(&SceneConfig::reveal_then_static(3)).unwrap();
        let mut res = oracle(&b);
        res[1].pose = Some(Pose6D { t: [0.0, 0.0, 9.0], ..Pose6D::identity() });
        let r = evaluate(&res, &b).unwrap();
        let c = compare(&r, &r).unwrap();
        assert!(c.metrics.values().all(|d| d.mean.delta == 0.0 && d.p50.delta == 0.0 && d.p95.delta == 0.0));
        assert!(c.rates.values().all(|d| d.delta == 0.0));
        assert!(!c.has_regressions());
        let mut other = r.clone();
        other.bundle_hash = "x".into();
        assert!(matches!(compare(&r, &other), Err(BenchError::BundleMismatch(..))));
        let mut worse = r.clone();
        worse.metrics.get_mut("pose_t_err_m").unwrap().mean += 0.01;
        assert_eq!(compare(&r, &worse).unwrap().regressions, vec!["pose_t_err_m".to_string()]);
        assert!(c.table().contains("pose_t_err_m"));
    }

    #[test]
    fn results_dir_round_trip() {
        let b = generate_sequence(&SceneConfig::reveal_then_static(2)).unwrap();
        let (res, _) = crate::pipeline::end_to_end_once(&b, &Default::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for r in &res {
            write_result_frames(dir.path(), r).unwrap();
        }
        let file = ResultsFile { frames: res.iter().map(ResultRecord::from_result).collect(), dropped: vec![] };
        write_results_file(dir.path(), &file).unwrap();
        let back = read_results_dir(dir.path(), &b).unwrap();
        assert!(res.iter().zip(&back).all(|(a, b)| a.same_output(b) && a.timings == b.timings));
    }

    proptest! {
        #[test]
        fn psnr_monotone_in_noisy_pixels(
            base in prop::collection::vec(any::<u8>(), 48),
            noise in prop::collection::vec(1u8..50, 16),
            k in 0usize..16,
        ) {
            let intr = PinholeIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
            let a = Frame::new(0, 0, 4, 4, base.clone(), None, intr, Pose6D::identity()).unwrap();
            let noisy = |count: usize| {
                let mut px = base.clone();
                for i in 0..count {
                    px[i * 3] = px[i * 3].wrapping_add(noise[i]);
                }
                a.with_pixels(px).unwrap()
            };
            let full = InstanceMask::from_labels(4, 4, vec![1; 16]).unwrap();
            let fewer = psnr_region(&a, &noisy(k), &full).unwrap();
            let more = psnr_region(&a, &noisy(k + 1), &full).unwrap();
            prop_assert!(more <= fewer);
        }

        #[test]
        fn iou_symmetric_and_exact(
            la in prop::collection::vec(0u16..2, 25),
            lb in prop::collection::vec(0u16..2, 25),
        ) {
            let a = InstanceMask::from_labels(5, 5, la.clone()).unwrap();
            let b = InstanceMask::from_labels(5, 5, lb.clone()).unwrap();
            let ab = mask_iou(&a, &b, 1, 1).unwrap();
            prop_assert_eq!(ab, mask_iou(&b, &a, 1, 1).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, la == lb);
            let overlap = la.iter().zip(&lb).any(|(x, y)| *x == 1 && *y == 1);
            let both_nonempty = la.contains(&1) && lb.contains(&1);
            if both_nonempty {
                prop_assert_eq!(ab == 0.0, !overlap);
            }
        }
    }
}
