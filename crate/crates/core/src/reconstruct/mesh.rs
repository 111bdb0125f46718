//! Triangle meshes, primitive solids and OBJ export.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::GeometryError;
use crate::reconstruct::polygon::{triangulate, Point};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn indices_in_range(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.triangles.iter().flatten().all(|&i| i < n)
    }

    /// True if every edge is shared by exactly two triangles with opposite
    /// orientation and no triangle repeats a vertex.
    pub fn is_closed_manifold(&self) -> bool {
        if self.triangles.is_empty() || !self.indices_in_range() {
            return false;
        }
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return false;
            }
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        edges
            .iter()
            .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Signed volume; positive for closed meshes with outward normals.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0]))
                    / 6.0
            })
            .sum()
    }

    fn push_vertex(&mut self, v: [f64; 3]) -> u32 {
        self.vertices.push(v);
        (self.vertices.len() - 1) as u32
    }
}

/// A named mesh, written as one OBJ group.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGroup {
    pub name: String,
    pub mesh: Mesh,
}

/// Extrudes a counter-clockwise polygon between `bottom` and `top`.
pub fn prism(polygon: &[Point], bottom: f64, top: f64) -> Result<Mesh, GeometryError> {
    let n = polygon.len();
    if n < 3 {
        return Err(GeometryError::Degenerate(format!(
            "polygon with {n} vertices"
        )));
    }
    if top.partial_cmp(&bottom) != Some(std::cmp::Ordering::Greater) {
        return Err(GeometryError::Degenerate(format!(
            "prism top {top} not above bottom {bottom}"
        )));
    }
    let mut mesh = Mesh::default();
    for z in [bottom, top] {
        for p in polygon {
            mesh.push_vertex([p[0], p[1], z]);
        }
    }
    let n32 = n as u32;
    for t in triangulate(polygon) {
        let [a, b, c] = t.map(|i| i as u32);
        mesh.triangles.push([a + n32, b + n32, c + n32]);
        mesh.triangles.push([c, b, a]);
    }
    for i in 0..n32 {
        let j = (i + 1) % n32;
        mesh.triangles.push([i, j, j + n32]);
        mesh.triangles.push([i, j + n32, i + n32]);
    }
    Ok(mesh)
}

/// Axis-aligned box spanning `min` to `max`.
pub fn axis_box(min: [f64; 3], max: [f64; 3]) -> Result<Mesh, GeometryError> {
    let ring = [
        [min[0], min[1]],
        [max[0], min[1]],
        [max[0], max[1]],
        [min[0], max[1]],
    ];
    if !(max[0] > min[0] && max[1] > min[1]) {
        return Err(GeometryError::Degenerate("box with empty extent".into()));
    }
    prism(&ring, min[2], max[2])
}

/// Closed cone with a `segments`-gon base.
pub fn cone(center: [f64; 3], radius: f64, height: f64, segments: usize) -> Mesh {
    let mut mesh = Mesh::default();
    let base = mesh.push_vertex(center);
    let apex = mesh.push_vertex([center[0], center[1], center[2] + height]);
    let ring: Vec<u32> = (0..segments)
        .map(|i| {
            let a = TAU * i as f64 / segments as f64;
            mesh.push_vertex([
                center[0] + radius * a.cos(),
                center[1] + radius * a.sin(),
                center[2],
            ])
        })
        .collect();
    for i in 0..segments {
        let (p, q) = (ring[i], ring[(i + 1) % segments]);
        mesh.triangles.push([p, q, apex]);
        mesh.triangles.push([q, p, base]);
    }
    mesh
}

/// Latitude/longitude sphere.
pub fn sphere(center: [f64; 3], radius: f64, rings: usize, segments: usize) -> Mesh {
    let mut mesh = Mesh::default();
    let south = mesh.push_vertex([center[0], center[1], center[2] - radius]);
    let mut bands = Vec::with_capacity(rings - 1);
    for r in 1..rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64;
        let (z, rr) = (-phi.cos() * radius, phi.sin() * radius);
        let band: Vec<u32> = (0..segments)
            .map(|s| {
                let a = TAU * s as f64 / segments as f64;
                mesh.push_vertex([
                    center[0] + rr * a.cos(),
                    center[1] + rr * a.sin(),
                    center[2] + z,
                ])
            })
            .collect();
        bands.push(band);
    }
    let north = mesh.push_vertex([center[0], center[1], center[2] + radius]);
    for s in 0..segments {
        let t = (s + 1) % segments;
        let first = &bands[0];
        mesh.triangles.push([south, first[t], first[s]]);
        let last = &bands[bands.len() - 1];
        mesh.triangles.push([north, last[s], last[t]]);
        for w in bands.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            mesh.triangles.push([lo[s], lo[t], hi[t]]);
            mesh.triangles.push([lo[s], hi[t], hi[s]]);
        }
    }
    mesh
}

/// Concatenates meshes, offsetting indices.
pub fn merge(meshes: impl IntoIterator<Item = Mesh>) -> Mesh {
    let mut out = Mesh::default();
    for m in meshes {
        let off = out.vertices.len() as u32;
        out.vertices.extend(m.vertices);
        out.triangles
            .extend(m.triangles.into_iter().map(|t| t.map(|i| i + off)));
    }
    out
}

/// Renders groups as Wavefront OBJ text with 1-based indices.
pub fn obj_text(groups: &[MeshGroup], comments: &[String]) -> String {
    let mut out = String::from("# geoseg reconstruction\n");
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let mut offset = 1u64;
    for g in groups {
        let _ = writeln!(out, "g {}", g.name);
        for v in &g.mesh.vertices {
            let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2]);
        }
        for t in &g.mesh.triangles {
            let [a, b, c] = t.map(|i| i as u64 + offset);
            let _ = writeln!(out, "f {a} {b} {c}");
        }
        offset += g.mesh.vertices.len() as u64;
    }
    out
}

pub fn export_obj(
    groups: &[MeshGroup],
    path: &Path,
    comments: &[String],
) -> Result<(), GeometryError> {
    std::fs::write(path, obj_text(groups, comments))?;
    Ok(())
}
