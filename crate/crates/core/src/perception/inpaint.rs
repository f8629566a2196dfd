use serde::{Deserialize, Serialize};

use crate::types::{Frame, InstanceMask};

use super::PerceptionError;

/// Iterations used on the live path.
pub const DEFAULT_FAST_ITERS: u32 = 64;
/// Stopping threshold for converged mode, in intensity units before rounding.
pub const DEFAULT_CONVERGED_TOL: f64 = 1e-4;
const MAX_CONVERGED_ITERS: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InpaintQuality {
    /// Exactly `iters` Jacobi sweeps from the boundary-mean start.
    Fast { iters: u32 },
    /// Sweeps until the largest per-sample update drops below `tol`.
    Converged { tol: f64 },
}

impl Default for InpaintQuality {
    fn default() -> Self {
        InpaintQuality::Fast {
            iters: DEFAULT_FAST_ITERS,
        }
    }
}

/// Harmonic hole fill.
///
/// Every nonzero-labeled pixel is a hole pixel and becomes the mean of its
/// in-frame 4-neighbors, solved per channel by Jacobi iteration over the
/// holes' bounding box plus a one-pixel margin. Each hole component starts
/// from the mean of its own boundary, so every iterate is a convex
/// combination of that component's boundary values. Pixels labeled 0 are
/// copied through untouched.
pub fn inpaint(
    frame: &Frame,
    mask: &InstanceMask,
    quality: InpaintQuality,
) -> Result<Frame, PerceptionError> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    if (mask.width(), mask.height()) != (frame.width(), frame.height()) {
        return Err(PerceptionError::DimMismatch {
            expected: (frame.width(), frame.height()),
            actual: (mask.width(), mask.height()),
        });
    }
    let hole: Vec<bool> = mask.labels().iter().map(|&l| l != 0).collect();
    let Some((x0, y0, x1, y1)) = bbox(&hole, w) else {
        return Ok(frame.clone());
    };
    // box with margin, half-open
    let bx0 = x0.saturating_sub(1);
    let by0 = y0.saturating_sub(1);
    let bx1 = (x1 + 2).min(w);
    let by1 = (y1 + 2).min(h);
    let bw = bx1 - bx0;
    let local = |x: usize, y: usize| (y - by0) * bw + (x - bx0);

    // hole pixels in scan order, with their in-frame neighbors as local indices
    let mut hole_px: Vec<(usize, usize)> = Vec::new();
    let mut neighbors: Vec<[usize; 4]> = Vec::new();
    let mut n_count: Vec<u8> = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !hole[y * w + x] {
                continue;
            }
            let mut nb = [0usize; 4];
            let mut k = 0;
            for (nx, ny) in neighbors4(x, y, w, h) {
                nb[k] = local(nx, ny);
                k += 1;
            }
            hole_px.push((x, y));
            neighbors.push(nb);
            n_count.push(k as u8);
        }
    }
    let hole_index = {
        let mut idx = vec![usize::MAX; bw * (by1 - by0)];
        for (i, &(x, y)) in hole_px.iter().enumerate() {
            idx[local(x, y)] = i;
        }
        idx
    };

    let components = label_components(&hole_px, &neighbors, &n_count, &hole_index);
    let n_comp = components.iter().copied().max().map_or(0, |m| m + 1);

    let px = frame.pixels();
    let mut out = frame.clone();
    // per channel: solve on the box, write the rounded result
    for ch in 0..3 {
        let mut vals = vec![0f64; bw * (by1 - by0)];
        for y in by0..by1 {
            for x in bx0..bx1 {
                vals[local(x, y)] = px[(y * w + x) * 3 + ch] as f64;
            }
        }
        // boundary mean per component: distinct non-hole neighbors
        let mut sum = vec![0f64; n_comp];
        let mut cnt = vec![0usize; n_comp];
        let mut counted = vec![usize::MAX; bw * (by1 - by0)];
        for (i, nb) in neighbors.iter().enumerate() {
            let c = components[i];
            for &q in &nb[..n_count[i] as usize] {
                if hole_index[q] == usize::MAX && counted[q] != c {
                    counted[q] = c;
                    sum[c] += vals[q];
                    cnt[c] += 1;
                }
            }
        }
        if let Some(c) = (0..n_comp).find(|&c| cnt[c] == 0) {
            let (x, y) = hole_px[components.iter().position(|&k| k == c).unwrap()];
            return Err(PerceptionError::NoBoundary { x: x as u32, y: y as u32 });
        }
        for (i, &(x, y)) in hole_px.iter().enumerate() {
            let c = components[i];
            vals[local(x, y)] = sum[c] / cnt[c] as f64;
        }

        let mut next = vec![0f64; hole_px.len()];
        let mut sweep = |vals: &mut Vec<f64>| -> f64 {
            for (i, nb) in neighbors.iter().enumerate() {
                let k = n_count[i] as usize;
                next[i] = nb[..k].iter().map(|&q| vals[q]).sum::<f64>() / k as f64;
            }
            let mut max_change = 0f64;
            for (i, &(x, y)) in hole_px.iter().enumerate() {
                let slot = &mut vals[local(x, y)];
                max_change = max_change.max((next[i] - *slot).abs());
                *slot = next[i];
            }
            max_change
        };
        match quality {
            InpaintQuality::Fast { iters } => {
                for _ in 0..iters {
                    sweep(&mut vals);
                }
            }
            InpaintQuality::Converged { tol } => {
                let mut iter = 0u64;
                while sweep(&mut vals) >= tol && iter < MAX_CONVERGED_ITERS {
                    iter += 1;
                }
            }
        }

        let dst = out.pixels_mut();
        for &(x, y) in &hole_px {
            // f64::round rounds half away from zero
            dst[(y * w + x) * 3 + ch] = vals[local(x, y)].round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

fn bbox(hole: &[bool], w: usize) -> Option<(usize, usize, usize, usize)> {
    let mut bb: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in hole.iter().enumerate().filter(|(_, &hl)| hl) {
        let (x, y) = (i % w, i / w);
        bb = Some(match bb {
            None => (x, y, x, y),
            Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
        });
    }
    bb
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let cand = [
        (x > 0).then(|| (x - 1, y)),
        (x + 1 < w).then(|| (x + 1, y)),
        (y > 0).then(|| (x, y - 1)),
        (y + 1 < h).then(|| (x, y + 1)),
    ];
    cand.into_iter().flatten()
}

/// Component id per hole pixel, 4-connected, numbered in scan order.
fn label_components(
    hole_px: &[(usize, usize)],
    neighbors: &[[usize; 4]],
    n_count: &[u8],
    hole_index: &[usize],
) -> Vec<usize> {
    let mut comp = vec![usize::MAX; hole_px.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..hole_px.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for &q in &neighbors[i][..n_count[i] as usize] {
                let j = hole_index[q];
                if j != usize::MAX && comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{PinholeIntrinsics, Pose6D};

    fn gray_frame(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> Frame {
        let mut px = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                let v = f(x, y);
                px.extend_from_slice(&[v, v, v]);
            }
        }
        let intr = PinholeIntrinsics::new(10.0, 10.0, 0.0, 0.0).unwrap();
        Frame::new(0, 0, w, h, px, None, intr, Pose6D::identity()).unwrap()
    }

    fn mask(w: u32, h: u32, holes: &[(u32, u32)]) -> InstanceMask {
        let mut labels = vec![0u16; (w * h) as usize];
        for &(x, y) in holes {
            labels[(y * w + x) as usize] = 1;
        }
        InstanceMask::from_labels(w, h, labels).unwrap()
    }

    #[test]
    fn constant_boundary_fills_constant() {
        let f = gray_frame(3, 3, |x, y| if (x, y) == (1, 1) { 0 } else { 100 });
        let out = inpaint(&f, &mask(3, 3, &[(1, 1)]), InpaintQuality::Converged { tol: 1e-4 }).unwrap();
        assert_eq!(out.rgb(1, 1), [100, 100, 100]);
    }

    #[test]
    fn single_pixel_takes_neighbor_mean() {
        let f = gray_frame(3, 3, |x, y| match (x, y) {
            (0, 1) => 0,
            (2, 1) => 100,
            (1, 0) | (1, 2) => 50,
            _ => 255,
        });
        let out = inpaint(&f, &mask(3, 3, &[(1, 1)]), InpaintQuality::Converged { tol: 1e-4 }).unwrap();
        assert_eq!(out.rgb(1, 1), [50, 50, 50]);
    }

    #[test]
    fn full_frame_hole_has_no_boundary() {
        let all: Vec<(u32, u32)> = (0..4).flat_map(|y| (0..4).map(move |x| (x, y))).collect();
        let r = inpaint(&gray_frame(4, 4, |_, _| 9), &mask(4, 4, &all), InpaintQuality::default());
        assert!(matches!(r, Err(PerceptionError::NoBoundary { .. })));
    }

    #[test]
    fn dim_mismatch_rejected() {
        let r = inpaint(&gray_frame(4, 4, |_, _| 9), &mask(4, 3, &[]), InpaintQuality::default());
        assert!(matches!(r, Err(PerceptionError::DimMismatch { .. })));
    }

    #[test]
    fn empty_mask_is_identity() {
        let f = gray_frame(5, 5, |x, y| (x * 7 + y) as u8);
        assert_eq!(inpaint(&f, &mask(5, 5, &[]), InpaintQuality::default()).unwrap(), f);
    }

    #[test]
    fn fast_zero_iters_is_boundary_mean() {
        let f = gray_frame(5, 3, |x, _| (x * 10) as u8);
        let out = inpaint(&f, &mask(5, 3, &[(2, 1)]), InpaintQuality::Fast { iters: 0 }).unwrap();
        // boundary: (1,1)=10, (3,1)=30, (2,0)=20, (2,2)=20
        assert_eq!(out.rgb(2, 1), [20, 20, 20]);
    }

    #[test]
    fn hole_at_frame_edge_uses_in_frame_neighbors() {
        let f = gray_frame(4, 4, |_, y| (y * 40) as u8);
        let out = inpaint(&f, &mask(4, 4, &[(0, 1), (0, 2)]), InpaintQuality::Converged { tol: 1e-6 }).unwrap();
        assert_eq!(out.rgb(0, 1)[0], 40);
        assert_eq!(out.rgb(0, 2)[0], 80);
    }
}
