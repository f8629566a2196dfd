//! Substitute meshes: the built-in procedural assets and a loader for the
//! line-oriented triangle-mesh text format.
//!
//! ```text
//! # comment
//! v 0.5 -0.5 0.5          vertex, meters, asset-local frame
//! f 1 2 3 255 0 128       1-based vertex indices then face color
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::ComposeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssetTriangle {
    pub idx: [usize; 3],
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Asset {
    asset_id: String,
    vertices: Vec<[f64; 3]>,
    triangles: Vec<AssetTriangle>,
    local_extent: [f64; 3],
}

impl Asset {
    pub fn new(
        asset_id: impl Into<String>,
        vertices: Vec<[f64; 3]>,
        triangles: Vec<AssetTriangle>,
    ) -> Result<Self, ComposeError> {
        let asset_id = asset_id.into();
        let invalid = |reason: String| ComposeError::InvalidAsset {
            asset_id: asset_id.clone(),
            reason,
        };
        if triangles.is_empty() {
            return Err(invalid("no triangles".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite vertex coordinate".into()));
        }
        if let Some(t) = triangles
            .iter()
            .find(|t| t.idx.iter().any(|&i| i >= vertices.len()))
        {
            return Err(invalid(format!("triangle index out of range: {:?}", t.idx)));
        }
        let mut local_extent = [0.0; 3];
        for (axis, ext) in local_extent.iter_mut().enumerate() {
            let lo = vertices.iter().map(|v| v[axis]).fold(f64::INFINITY, f64::min);
            let hi = vertices.iter().map(|v| v[axis]).fold(f64::NEG_INFINITY, f64::max);
            *ext = hi - lo;
        }
        if local_extent.iter().any(|&e| !(e > 0.0)) {
            return Err(invalid(format!("degenerate extent {local_extent:?}")));
        }
        Ok(Self {
            asset_id,
            vertices,
            triangles,
            local_extent,
        })
    }

    pub fn asset_id(&self) -> &str {
        &self.asset_id
    }
    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[AssetTriangle] {
        &self.triangles
    }
    pub fn local_extent(&self) -> [f64; 3] {
        self.local_extent
    }

    /// Axis-aligned box centered at the origin, faces ordered
    /// `+x, -x, +y, -y, +z, -z`.
    pub fn box_mesh(
        asset_id: impl Into<String>,
        extents: [f64; 3],
        face_colors: [[u8; 3]; 6],
    ) -> Result<Self, ComposeError> {
        let [hx, hy, hz] = extents.map(|e| e / 2.0);
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            vertices.push([
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            ]);
        }
        // corner quads per face, as bit patterns of (x, y, z)
        const FACES: [[usize; 4]; 6] = [
            [1, 3, 7, 5],
            [0, 4, 6, 2],
            [2, 6, 7, 3],
            [0, 1, 5, 4],
            [4, 5, 7, 6],
            [0, 2, 3, 1],
        ];
        let mut triangles = Vec::with_capacity(12);
        for (quad, color) in FACES.iter().zip(face_colors) {
            triangles.push(AssetTriangle {
                idx: [quad[0], quad[1], quad[2]],
                color,
            });
            triangles.push(AssetTriangle {
                idx: [quad[0], quad[2], quad[3]],
                color,
            });
        }
        Self::new(asset_id, vertices, triangles)
    }

    /// Unit-extent square pyramid, apex toward `-y` (image up).
    pub fn pyramid(asset_id: impl Into<String>) -> Self {
        let vertices = vec![
            [-0.5, 0.5, -0.5],
            [0.5, 0.5, -0.5],
            [0.5, 0.5, 0.5],
            [-0.5, 0.5, 0.5],
            [0.0, -0.5, 0.0],
        ];
        let tri = |idx, color| AssetTriangle { idx, color };
        let triangles = vec![
            tri([0, 1, 4], [255, 40, 200]),
            tri([1, 2, 4], [40, 255, 240]),
            tri([2, 3, 4], [255, 220, 20]),
            tri([3, 0, 4], [120, 40, 255]),
            tri([0, 2, 1], [20, 20, 40]),
            tri([0, 3, 2], [20, 20, 40]),
        ];
        Self::new(asset_id, vertices, triangles).expect("pyramid is well formed")
    }

    pub fn parse(asset_id: impl Into<String>, text: &str) -> Result<Self, ComposeError> {
        let asset_id = asset_id.into();
        let err = |line: usize, reason: &str| ComposeError::AssetParse {
            line,
            reason: reason.to_string(),
        };
        if text.contains('\r') {
            return Err(err(0, "line endings must be LF"));
        }
        let mut vertices = Vec::new();
        let mut faces: Vec<(usize, [i64; 3], [u8; 3])> = Vec::new();
        for (n, raw) in text.split('\n').enumerate() {
            let lineno = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<f64> = tokens
                        .map(|t| t.parse::<f64>().map_err(|_| err(lineno, "bad float")))
                        .collect::<Result<_, _>>()?;
                    if coords.len() != 3 {
                        return Err(err(lineno, "vertex needs 3 coordinates"));
                    }
                    if coords.iter().any(|c| !c.is_finite()) {
                        return Err(err(lineno, "non-finite coordinate"));
                    }
                    vertices.push([coords[0], coords[1], coords[2]]);
                }
                Some("f") => {
                    let fields: Vec<&str> = tokens.collect();
                    if fields.len() != 6 {
                        return Err(err(lineno, "face needs 3 indices and 3 color channels"));
                    }
                    let mut idx = [0i64; 3];
                    for (slot, tok) in idx.iter_mut().zip(&fields[..3]) {
                        *slot = tok.parse().map_err(|_| err(lineno, "bad index"))?;
                    }
                    let mut color = [0u8; 3];
                    for (slot, tok) in color.iter_mut().zip(&fields[3..]) {
                        *slot = tok.parse().map_err(|_| err(lineno, "color channel must be 0-255"))?;
                    }
                    faces.push((lineno, idx, color));
                }
                Some(other) => {
                    return Err(err(lineno, &format!("unknown record '{other}'")));
                }
                None => unreachable!("blank lines skipped above"),
            }
        }
        let mut triangles = Vec::with_capacity(faces.len());
        for (lineno, idx, color) in faces {
            let mut resolved = [0usize; 3];
            for (slot, &i) in resolved.iter_mut().zip(&idx) {
                if i < 1 || i as usize > vertices.len() {
                    return Err(err(lineno, "vertex index out of range"));
                }
                *slot = i as usize - 1;
            }
            triangles.push(AssetTriangle {
                idx: resolved,
                color,
            });
        }
        Self::new(asset_id, vertices, triangles)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# asset {}\n", self.asset_id);
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for t in &self.triangles {
            out.push_str(&format!(
                "f {} {} {} {} {} {}\n",
                t.idx[0] + 1,
                t.idx[1] + 1,
                t.idx[2] + 1,
                t.color[0],
                t.color[1],
                t.color[2]
            ));
        }
        out
    }
}

/// Colors of the built-in `box` asset.
pub const BOX_ASSET_COLORS: [[u8; 3]; 6] = [
    [255, 0, 170],
    [0, 255, 255],
    [255, 230, 0],
    [120, 0, 255],
    [0, 255, 110],
    [255, 90, 0],
];

/// Read-only registry of assets by id.
#[derive(Debug, Clone)]
pub struct AssetStore {
    assets: BTreeMap<String, Arc<Asset>>,
}

impl Default for AssetStore {
    fn default() -> Self {
        Self::builtin()
    }
}

impl AssetStore {
    /// `box` (unit cube) and `pyramid`.
    pub fn builtin() -> Self {
        let mut store = Self {
            assets: BTreeMap::new(),
        };
        store.insert(
            Asset::box_mesh("box", [1.0; 3], BOX_ASSET_COLORS).expect("unit cube is well formed"),
        );
        store.insert(Asset::pyramid("pyramid"));
        store
    }

    pub fn insert(&mut self, asset: Asset) {
        self.assets
            .insert(asset.asset_id().to_string(), Arc::new(asset));
    }

    pub fn get(&self, asset_id: &str) -> Option<Arc<Asset>> {
        self.assets.get(asset_id).cloned()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.assets.keys().map(String::as_str)
    }

    /// Adds every `*.asset` file in `dir`, keyed by file stem.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, ComposeError> {
        let io = |e: std::io::Error| ComposeError::Io(format!("{}: {e}", dir.display()));
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "asset"))
            .collect();
        paths.sort();
        for path in &paths {
            let text = fs::read_to_string(path)
                .map_err(|e| ComposeError::Io(format!("{}: {e}", path.display())))?;
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            self.insert(Asset::parse(id, &text)?);
        }
        Ok(paths.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_mesh_extent_and_faces() {
        let b = Asset::box_mesh("b", [0.4, 0.2, 0.1], BOX_ASSET_COLORS).unwrap();
        assert_eq!(b.triangles().len(), 12);
        let e = b.local_extent();
        assert!((e[0] - 0.4).abs() < 1e-12 && (e[1] - 0.2).abs() < 1e-12 && (e[2] - 0.1).abs() < 1e-12);
        // each triangle lies on a single face plane
        for t in b.triangles() {
            let vs = t.idx.map(|i| b.vertices()[i]);
            let shared = (0..3).filter(|&ax| vs.iter().all(|v| v[ax] == vs[0][ax])).count();
            assert_eq!(shared, 1);
        }
    }

    #[test]
    fn parse_text_format() {
        let text = "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 1\n\nf 1 2 3 10 20 30\n";
        let a = Asset::parse("t", text).unwrap();
        assert_eq!(a.triangles()[0].idx, [0, 1, 2]);
        assert_eq!(a.triangles()[0].color, [10, 20, 30]);
        assert_eq!(Asset::parse("t", &a.to_text()).unwrap(), a);
    }

    #[test]
    fn parse_rejects_bad_input() {
        let bad = [
            "v 0 0 NaN\nv 1 0 0\nv 0 1 1\nf 1 2 3 0 0 0\n",
            "v 0 0 inf\nv 1 0 0\nv 0 1 1\nf 1 2 3 0 0 0\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 1\nf 1 2 4 0 0 0\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 1\nf 0 1 2 0 0 0\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 1\nf 1 2 3 0 0 256\n",
            "v 0 0 0\r\nv 1 0 0\nv 0 1 1\nf 1 2 3 0 0 0\n",
            "v 0 0 0\nv 1 0 0\nv 0 1 1\n",
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 3 0 0 0\n",
        ];
        for text in bad {
            assert!(Asset::parse("x", text).is_err(), "accepted: {text:?}");
        }
    }

    #[test]
    fn store_loads_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("wedge.asset"),
            Asset::pyramid("ignored").to_text(),
        )
        .unwrap();
        std::fs::write(dir.path().join("notes.txt"), "not an asset").unwrap();
        let mut store = AssetStore::builtin();
        assert_eq!(store.load_dir(dir.path()).unwrap(), 1);
        assert!(store.get("wedge").is_some());
        assert!(store.get("box").is_some());
    }
}
