//! Z-buffered triangle rasterizer in camera space.
//!
//! Pixels are sampled at integer coordinates `(x, y)`, the same convention
//! the back-projection in pose estimation uses. Screen positions are snapped
//! to 1/256 pixel and all coverage tests are exact integer arithmetic, so two
//! triangles sharing an edge never both claim (or both miss) a sample.

use nalgebra::Vector3;

use crate::types::PinholeIntrinsics;

/// Triangles (or parts of them) closer than this are clipped away.
pub const NEAR_PLANE: f64 = 0.01;

const SUBPIXEL: f64 = 256.0;
// keeps edge-function products far inside i128 even for near-plane slivers
const COORD_LIMIT: i128 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CamTriangle {
    pub v: [Vector3<f64>; 3],
    pub color: [u8; 3],
}

/// Color, depth and coverage accumulated over a sequence of draws.
#[derive(Debug, Clone)]
pub struct ZBuffer {
    width: u32,
    height: u32,
    depth: Vec<f64>,
    color: Vec<[u8; 3]>,
    covered: Vec<bool>,
}

impl ZBuffer {
    /// Every pixel starts at depth `far`; fragments at or beyond it are hidden.
    pub fn new(width: u32, height: u32, far: f64) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            depth: vec![far; n],
            color: vec![[0; 3]; n],
            covered: vec![false; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn depth(&self) -> &[f64] {
        &self.depth
    }
    pub fn colors(&self) -> &[[u8; 3]] {
        &self.color
    }
    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn draw(&mut self, intr: &PinholeIntrinsics, tri: &CamTriangle) {
        let poly = clip_near(&tri.v);
        for i in 1..poly.len().saturating_sub(1) {
            self.fill([poly[0], poly[i], poly[i + 1]], intr, tri.color);
        }
    }

    fn fill(&mut self, v: [Vector3<f64>; 3], intr: &PinholeIntrinsics, color: [u8; 3]) {
        let mut s = v.map(|p| snap(intr, &p));
        let mut z = v.map(|p| p.z);
        let mut area = edge(&s[0], &s[1], &s[2]);
        if area == 0 {
            return;
        }
        if area < 0 {
            s.swap(1, 2);
            z.swap(1, 2);
            area = -area;
        }

        let min_x = s.iter().map(|p| p.0).min().unwrap();
        let max_x = s.iter().map(|p| p.0).max().unwrap();
        let min_y = s.iter().map(|p| p.1).min().unwrap();
        let max_y = s.iter().map(|p| p.1).max().unwrap();
        let sub = SUBPIXEL as i128;
        let x0 = ceil_div(min_x, sub).max(0);
        let x1 = max_x.div_euclid(sub).min(self.width as i128 - 1);
        let y0 = ceil_div(min_y, sub).max(0);
        let y1 = max_y.div_euclid(sub).min(self.height as i128 - 1);
        if x0 > x1 || y0 > y1 {
            return;
        }

        let bias = [
            top_left(&s[1], &s[2]),
            top_left(&s[2], &s[0]),
            top_left(&s[0], &s[1]),
        ];
        let inv_z = z.map(|d| 1.0 / d);
        let area_f = area as f64;
        for py in y0..=y1 {
            for px in x0..=x1 {
                let p = (px * sub, py * sub);
                let w = [
                    edge(&s[1], &s[2], &p),
                    edge(&s[2], &s[0], &p),
                    edge(&s[0], &s[1], &p),
                ];
                if !w.iter().zip(&bias).all(|(&e, &tl)| e > 0 || (e == 0 && tl)) {
                    continue;
                }
                let iz = (w[0] as f64 * inv_z[0] + w[1] as f64 * inv_z[1] + w[2] as f64 * inv_z[2])
                    / area_f;
                let depth = 1.0 / iz;
                let idx = py as usize * self.width as usize + px as usize;
                if depth < self.depth[idx] {
                    self.depth[idx] = depth;
                    self.color[idx] = color;
                    self.covered[idx] = true;
                }
            }
        }
    }
}

type Fixed = (i128, i128);

fn snap(intr: &PinholeIntrinsics, p: &Vector3<f64>) -> Fixed {
    let u = intr.fx as f64 * p.x / p.z + intr.cx as f64;
    let v = intr.fy as f64 * p.y / p.z + intr.cy as f64;
    let q = |c: f64| ((c * SUBPIXEL).round() as i128).clamp(-COORD_LIMIT, COORD_LIMIT);
    (q(u), q(v))
}

/// Twice the signed area of `(a, b, p)`; positive when `p` is on the inner
/// side of `a -> b` for a positively oriented triangle.
fn edge(a: &Fixed, b: &Fixed, p: &Fixed) -> i128 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Top edge: horizontal with the interior below. Left edge: interior to the
/// right. Samples exactly on such edges belong to the triangle.
fn top_left(a: &Fixed, b: &Fixed) -> bool {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    (dy == 0 && dx > 0) || dy < 0
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -((-a).div_euclid(b))
}

/// Sutherland-Hodgman against the plane `z = NEAR_PLANE`.
fn clip_near(v: &[Vector3<f64>; 3]) -> Vec<Vector3<f64>> {
    let inside = |p: &Vector3<f64>| p.z >= NEAR_PLANE;
    if v.iter().all(inside) {
        return v.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = v[i];
        let b = v[(i + 1) % 3];
        if inside(&a) {
            out.push(a);
        }
        if inside(&a) != inside(&b) {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> PinholeIntrinsics {
        PinholeIntrinsics::new(100.0, 100.0, 0.0, 0.0).unwrap()
    }

    /// Camera-space vertex that projects to pixel `(u, v)` at depth `z`.
    fn at(u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new(u / 100.0 * z, v / 100.0 * z, z)
    }

    #[test]
    fn shared_edge_pixels_owned_once() {
        // a square split along its diagonal; every sample covered exactly once
        let a = at(2.0, 2.0, 1.0);
        let b = at(10.0, 2.0, 1.0);
        let c = at(10.0, 10.0, 1.0);
        let d = at(2.0, 10.0, 1.0);
        let mut counts = vec![0u32; 16 * 16];
        for tri in [[a, b, c], [a, c, d]] {
            let mut zb = ZBuffer::new(16, 16, f64::INFINITY);
            zb.draw(&intr(), &CamTriangle { v: tri, color: [1, 1, 1] });
            for (i, &cov) in zb.covered().iter().enumerate() {
                counts[i] += cov as u32;
            }
        }
        assert!(counts.iter().all(|&c| c <= 1));
        // top-left rule: rows/cols 2..9 inclusive of top and left, exclusive of bottom and right
        let filled: u32 = counts.iter().sum();
        assert_eq!(filled, 8 * 8);
        assert_eq!(counts[2 * 16 + 2], 1);
        assert_eq!(counts[10 * 16 + 10], 0);
    }

    #[test]
    fn perspective_correct_depth_on_tilted_plane() {
        // plane z = 1 + 0.5 x, vertices chosen on it
        let p = |x: f64, y: f64| Vector3::new(x, y, 1.0 + 0.5 * x);
        let tri = CamTriangle {
            v: [p(-0.2, -0.2), p(0.3, -0.2), p(0.0, 0.3)],
            color: [9, 9, 9],
        };
        let intr = PinholeIntrinsics::new(100.0, 100.0, 20.0, 20.0).unwrap();
        let mut zb = ZBuffer::new(40, 40, f64::INFINITY);
        zb.draw(&intr, &tri);
        let mut checked = 0;
        for y in 0..40u32 {
            for x in 0..40u32 {
                let i = (y * 40 + x) as usize;
                if zb.covered()[i] {
                    let d = zb.depth()[i];
                    let back = intr.back_project(x as f64, y as f64, d);
                    // vertices are snapped to 1/256 px, so the plane is only matched to that precision
                    assert!((back[2] - (1.0 + 0.5 * back[0])).abs() < 1e-4);
                    checked += 1;
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn straddling_triangle_is_clipped_not_dropped() {
        let tri = CamTriangle {
            v: [
                Vector3::new(-0.1, -0.1, 1.0),
                Vector3::new(0.1, -0.1, 1.0),
                Vector3::new(0.0, 0.3, -1.0),
            ],
            color: [5, 6, 7],
        };
        let intr = PinholeIntrinsics::new(100.0, 100.0, 32.0, 32.0).unwrap();
        let mut zb = ZBuffer::new(64, 64, f64::INFINITY);
        zb.draw(&intr, &tri);
        let n = zb.covered().iter().filter(|&&c| c).count();
        assert!(n > 0);
        assert!(zb.depth().iter().all(|&d| d >= NEAR_PLANE - 1e-12));
    }

    #[test]
    fn fully_behind_near_plane_is_culled() {
        let tri = CamTriangle {
            v: [at(1.0, 1.0, -1.0), at(5.0, 1.0, -1.0), at(1.0, 5.0, -1.0)],
            color: [1, 2, 3],
        };
        let mut zb = ZBuffer::new(8, 8, f64::INFINITY);
        zb.draw(&intr(), &tri);
        assert!(zb.covered().iter().all(|&c| !c));
    }
}
