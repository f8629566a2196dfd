use crate::types::{Frame, InstanceMask};

use super::TargetSpec;

/// Chroma-key instance segmentation.
///
/// A pixel matches when its largest per-channel absolute difference to any
/// key color is within `spec.tolerance`. Matches are grouped into
/// 4-connected components; components under `spec.min_instance_px` pixels
/// are dropped and the survivors are labeled `1..=k` in the row-major order
/// of their first pixel.
pub fn segment(frame: &Frame, spec: &TargetSpec) -> InstanceMask {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let px = frame.pixels();
    let tol = spec.tolerance as i16;
    let matches: Vec<bool> = px
        .chunks_exact(3)
        .map(|c| {
            spec.key_colors.iter().any(|k| {
                (0..3).all(|ch| (c[ch] as i16 - k[ch] as i16).abs() <= tol)
            })
        })
        .collect();

    let mut labels = vec![0u16; w * h];
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    let mut next_label: u16 = 0;
    for start in 0..w * h {
        if !matches[start] || visited[start] {
            continue;
        }
        component.clear();
        visited[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            component.push(p);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if matches[q] && !visited[q] {
                    visited[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        if component.len() < spec.min_instance_px.max(1) || next_label == u16::MAX {
            continue;
        }
        next_label += 1;
        for &p in &component {
            labels[p] = next_label;
        }
    }
    InstanceMask::from_labels(frame.width(), frame.height(), labels)
        .expect("labels are contiguous by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{PinholeIntrinsics, Pose6D};

    const KEY: [u8; 3] = [230, 30, 30];

    fn frame(w: u32, h: u32, paint: &[(u32, u32)]) -> Frame {
        let mut px = vec![100u8; (w * h * 3) as usize];
        for &(x, y) in paint {
            let i = ((y * w + x) * 3) as usize;
            px[i..i + 3].copy_from_slice(&KEY);
        }
        let intr = PinholeIntrinsics::new(10.0, 10.0, 0.0, 0.0).unwrap();
        Frame::new(0, 0, w, h, px, None, intr, Pose6D::identity()).unwrap()
    }

    fn spec(min: usize) -> TargetSpec {
        TargetSpec {
            key_colors: vec![KEY],
            tolerance: 0,
            min_instance_px: min,
            ..TargetSpec::default()
        }
    }

    #[test]
    fn no_match_gives_empty_mask() {
        let m = segment(&frame(8, 8, &[]), &spec(1));
        assert_eq!(m.instance_count(), 0);
        assert!(m.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn two_blocks_labeled_in_scan_order() {
        // lower-left block starts on row 5, upper-right on row 1
        let blocks = [(1, 5), (2, 5), (1, 6), (2, 6), (6, 1), (7, 1), (6, 2), (7, 2)];
        let m = segment(&frame(10, 10, &blocks), &spec(4));
        assert_eq!(m.instance_count(), 2);
        assert_eq!(m.label_at(6, 1), 1);
        assert_eq!(m.label_at(1, 5), 2);
    }

    #[test]
    fn diagonal_neighbors_are_separate() {
        let m = segment(&frame(4, 4, &[(0, 0), (1, 1)]), &spec(1));
        assert_eq!(m.instance_count(), 2);
    }

    #[test]
    fn small_components_dropped_and_labels_compacted() {
        let paint = [(0, 0), (5, 0), (6, 0), (5, 1), (6, 1)];
        let m = segment(&frame(8, 4, &paint), &spec(4));
        assert_eq!(m.instance_count(), 1);
        assert_eq!(m.label_at(0, 0), 0);
        assert_eq!(m.label_at(5, 0), 1);
    }

    #[test]
    fn tolerance_is_inclusive() {
        let mut f = frame(2, 1, &[]);
        f.pixels_mut()[..3].copy_from_slice(&[230 - 12, 30 + 12, 30]);
        let s = TargetSpec {
            tolerance: 12,
            ..spec(1)
        };
        assert_eq!(segment(&f, &s).label_at(0, 0), 1);
        f.pixels_mut()[1] = 30 + 13;
        assert_eq!(segment(&f, &s).label_at(0, 0), 0);
    }
}
