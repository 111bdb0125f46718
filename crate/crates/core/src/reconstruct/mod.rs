//! Geometry from refined label maps: building prisms extruded from traced
//! footprints, primitive stand-ins for cars and trees and a grid mesh over
//! ground classes.
//!
//! Footprints are kept in pixel-corner coordinates. Meshes scale x and y by
//! the configured pixel size and use denormalized elevation for z.

pub mod mesh;
pub mod polygon;

use std::collections::VecDeque;

use crate::error::GeometryError;
use crate::grid::LabelGrid;
use crate::label::ClassLabel;
use crate::raster::Raster;

pub use mesh::{axis_box, export_obj, obj_text, prism, Mesh, MeshGroup};
pub use polygon::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructParams {
    /// Douglas-Peucker tolerance in pixels.
    pub epsilon: f64,
    /// Smallest component kept, in pixels.
    pub min_area: usize,
    /// Node spacing of the ground grid, in pixels.
    pub ground_step: usize,
    /// World size of one pixel.
    pub pixel_size: f64,
    /// Percentile of non-building elevation used as ground level.
    pub ground_percentile: f64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            epsilon: 2.0,
            min_area: 25,
            ground_step: 4,
            pixel_size: 0.1,
            ground_percentile: 5.0,
        }
    }
}

/// A 4-connected set of pixels, listed in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// `(x, y, width, height)` of the pixel bounding box.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let x0 = self.pixels.iter().map(|p| p.0).min().unwrap_or(0);
        let x1 = self.pixels.iter().map(|p| p.0).max().unwrap_or(0);
        let y0 = self.pixels.first().map_or(0, |p| p.1);
        let y1 = self.pixels.last().map_or(0, |p| p.1);
        (x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    }

    /// Mean pixel-center position in pixel-corner coordinates.
    pub fn centroid(&self) -> Point {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self.pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
            (sx + x as f64, sy + y as f64)
        });
        [sx / n + 0.5, sy / n + 0.5]
    }
}

/// 4-connected components of `class`, dropping those under `min_area`.
/// Ids number the kept components in scan order of their first pixel.
pub fn extract_components(
    labels: &LabelGrid,
    class: ClassLabel,
    min_area: usize,
) -> Vec<Component> {
    let (w, h) = (labels.width(), labels.height());
    let target = class.index();
    let cells = labels.as_slice();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || cells[start] != target {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && cells[j] == target {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if members.len() >= min_area {
            members.sort_unstable();
            out.push(Component {
                id: out.len(),
                pixels: members.into_iter().map(|i| (i % w, i / w)).collect(),
            });
        }
    }
    out
}

/// Traces the outer boundary of a component and simplifies it with
/// tolerance `epsilon`. The tolerance is halved until the result is simple;
/// `epsilon <= 0` returns the raw trace.
pub fn trace_boundary(component: &Component, epsilon: f64) -> Vec<Point> {
    let raw = polygon::trace_outline(component);
    let mut eps = epsilon;
    while eps >= 0.25 {
        let simplified = polygon::simplify_closed(&raw, eps);
        if simplified.len() >= 3 && polygon::is_simple(&simplified) {
            return simplified;
        }
        eps /= 2.0;
    }
    raw
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingFootprint {
    pub id: usize,
    /// Counter-clockwise ring in pixel-corner coordinates.
    pub polygon: Vec<Point>,
    pub roof_height: f64,
}

/// Median with the two middle values averaged.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Nearest-rank percentile, `p` in `0..=100`.
pub fn percentile(values: &mut [f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
    Some(values[rank.clamp(1, values.len()) - 1])
}

/// Pixels whose four neighbors all belong to the component, or every pixel
/// if none qualify.
fn interior(component: &Component) -> Vec<(usize, usize)> {
    let set: std::collections::HashSet<_> = component.pixels.iter().copied().collect();
    let inner: Vec<_> = component
        .pixels
        .iter()
        .copied()
        .filter(|&(x, y)| {
            x > 0
                && y > 0
                && set.contains(&(x - 1, y))
                && set.contains(&(x + 1, y))
                && set.contains(&(x, y - 1))
                && set.contains(&(x, y + 1))
        })
        .collect();
    if inner.is_empty() {
        component.pixels.clone()
    } else {
        inner
    }
}

/// Median elevation over the component interior.
pub fn roof_height(component: &Component, raster: &Raster) -> f64 {
    let mut z: Vec<f64> = interior(component)
        .into_iter()
        .map(|(x, y)| raster.elevation_at(x, y))
        .collect();
    median(&mut z).unwrap_or(0.0)
}

/// Percentile of elevation over pixels not labeled building.
pub fn ground_level(labels: &LabelGrid, raster: &Raster, pct: f64) -> f64 {
    let mut z: Vec<f64> = labels
        .iter()
        .filter(|&(_, _, l)| l != ClassLabel::Building.index())
        .map(|(x, y, _)| raster.elevation_at(x, y))
        .collect();
    percentile(&mut z, pct).unwrap_or_else(|| raster.depth_range().min)
}

pub fn footprint(component: &Component, raster: &Raster, epsilon: f64) -> BuildingFootprint {
    BuildingFootprint {
        id: component.id,
        polygon: trace_boundary(component, epsilon),
        roof_height: roof_height(component, raster),
    }
}

/// Prism from the ground level up to the roof, scaled by `pixel_size`.
pub fn extrude(
    fp: &BuildingFootprint,
    ground: f64,
    pixel_size: f64,
) -> Result<Mesh, GeometryError> {
    if fp.polygon.len() < 3 {
        return Err(GeometryError::Degenerate(format!(
            "building {} footprint has {} vertices",
            fp.id,
            fp.polygon.len()
        )));
    }
    if fp.roof_height <= ground {
        return Err(GeometryError::Degenerate(format!(
            "building {} roof {} is not above ground {}",
            fp.id, fp.roof_height, ground
        )));
    }
    let ring: Vec<Point> = fp
        .polygon
        .iter()
        .map(|p| [p[0] * pixel_size, p[1] * pixel_size])
        .collect();
    prism(&ring, ground, fp.roof_height)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarPrimitive {
    pub id: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl CarPrimitive {
    pub fn mesh(&self) -> Mesh {
        axis_box(self.min, self.max).expect("car extents are positive")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreePrimitive {
    pub id: usize,
    /// Centroid in pixel-corner coordinates.
    pub center: Point,
    /// Canopy radius in pixels.
    pub radius: f64,
    pub base: f64,
    pub top: f64,
}

impl TreePrimitive {
    /// Cone trunk under a spherical canopy.
    pub fn mesh(&self, pixel_size: f64) -> Mesh {
        let r = self.radius * pixel_size;
        let (cx, cy) = (self.center[0] * pixel_size, self.center[1] * pixel_size);
        let canopy_z = (self.top - r).max(self.base + r);
        let trunk = mesh::cone([cx, cy, self.base], 0.25 * r, canopy_z - self.base, 8);
        let canopy = mesh::sphere([cx, cy, canopy_z], r, 6, 12);
        mesh::merge([trunk, canopy])
    }
}

/// One box per car component over its bounding extents.
pub fn place_cars(
    labels: &LabelGrid,
    raster: &Raster,
    ground: f64,
    params: &ReconstructParams,
) -> Vec<CarPrimitive> {
    let ps = params.pixel_size;
    extract_components(labels, ClassLabel::Car, params.min_area)
        .iter()
        .map(|c| {
            let (x, y, w, h) = c.bbox();
            let top = roof_height(c, raster).max(ground + ps);
            CarPrimitive {
                id: c.id,
                min: [x as f64 * ps, y as f64 * ps, ground],
                max: [(x + w) as f64 * ps, (y + h) as f64 * ps, top],
            }
        })
        .collect()
}

/// One tree per tree component, centered on its centroid with the radius
/// of a disc of equal area.
pub fn place_trees(
    labels: &LabelGrid,
    raster: &Raster,
    ground: f64,
    params: &ReconstructParams,
) -> Vec<TreePrimitive> {
    extract_components(labels, ClassLabel::Tree, params.min_area)
        .iter()
        .map(|c| {
            let top = c
                .pixels
                .iter()
                .map(|&(x, y)| raster.elevation_at(x, y))
                .fold(f64::NEG_INFINITY, f64::max);
            TreePrimitive {
                id: c.id,
                center: c.centroid(),
                radius: (c.area() as f64 / std::f64::consts::PI).sqrt(),
                base: ground,
                top: top.max(ground),
            }
        })
        .collect()
}

fn grid_nodes(n: usize, step: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut v: Vec<usize> = (0..n).step_by(step.max(1)).collect();
    if *v.last().expect("n > 0") != n - 1 {
        v.push(n - 1);
    }
    v
}

/// Two triangles per grid cell whose four corner pixels are ground. Nodes
/// sit at pixel centers every `step` pixels plus the last row and column.
pub fn ground_mesh(labels: &LabelGrid, raster: &Raster, step: usize, pixel_size: f64) -> Mesh {
    let xs = grid_nodes(labels.width(), step);
    let ys = grid_nodes(labels.height(), step);
    let is_ground = |x: usize, y: usize| labels.class_at(x, y).is_ground();
    let mut index = vec![u32::MAX; xs.len() * ys.len()];
    let mut mesh = Mesh::default();
    let mut node = |mesh: &mut Mesh, i: usize, j: usize| -> u32 {
        let k = j * xs.len() + i;
        if index[k] == u32::MAX {
            let (x, y) = (xs[i], ys[j]);
            mesh.vertices.push([
                (x as f64 + 0.5) * pixel_size,
                (y as f64 + 0.5) * pixel_size,
                raster.elevation_at(x, y),
            ]);
            index[k] = (mesh.vertices.len() - 1) as u32;
        }
        index[k]
    };
    for j in 0..ys.len().saturating_sub(1) {
        for i in 0..xs.len().saturating_sub(1) {
            let (x0, x1, y0, y1) = (xs[i], xs[i + 1], ys[j], ys[j + 1]);
            if !(is_ground(x0, y0) && is_ground(x1, y0) && is_ground(x0, y1) && is_ground(x1, y1)) {
                continue;
            }
            let a = node(&mut mesh, i, j);
            let b = node(&mut mesh, i + 1, j);
            let c = node(&mut mesh, i, j + 1);
            let d = node(&mut mesh, i + 1, j + 1);
            mesh.triangles.push([a, b, d]);
            mesh.triangles.push([a, d, c]);
        }
    }
    mesh
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub ground_level: f64,
    pub footprints: Vec<BuildingFootprint>,
    pub cars: Vec<CarPrimitive>,
    pub trees: Vec<TreePrimitive>,
    /// Groups in export order: buildings, cars, trees, ground.
    pub groups: Vec<MeshGroup>,
    /// Building ids dropped as degenerate.
    pub skipped: Vec<usize>,
}

/// Builds every mesh group for a label map over its raster. Degenerate or
/// non-manifold buildings are skipped and listed.
pub fn reconstruct_scene(
    labels: &LabelGrid,
    raster: &Raster,
    params: &ReconstructParams,
) -> Result<Reconstruction, GeometryError> {
    if labels.width() != raster.width() || labels.height() != raster.height() {
        return Err(GeometryError::Degenerate(format!(
            "{}x{} labels over a {}x{} raster",
            labels.width(),
            labels.height(),
            raster.width(),
            raster.height()
        )));
    }
    let ps = params.pixel_size;
    let ground = ground_level(labels, raster, params.ground_percentile);
    let mut footprints = Vec::new();
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for c in extract_components(labels, ClassLabel::Building, params.min_area) {
        let fp = footprint(&c, raster, params.epsilon);
        match extrude(&fp, ground, ps) {
            Ok(mesh) if mesh.is_closed_manifold() => {
                groups.push(MeshGroup {
                    name: format!("building_{}", fp.id),
                    mesh,
                });
                footprints.push(fp);
            }
            Ok(_) | Err(GeometryError::Degenerate(_)) => skipped.push(fp.id),
            Err(e) => return Err(e),
        }
    }
    let cars = place_cars(labels, raster, ground, params);
    groups.extend(cars.iter().map(|c| MeshGroup {
        name: format!("car_{}", c.id),
        mesh: c.mesh(),
    }));
    let trees = place_trees(labels, raster, ground, params);
    groups.extend(trees.iter().map(|t| MeshGroup {
        name: format!("tree_{}", t.id),
        mesh: t.mesh(ps),
    }));
    groups.push(MeshGroup {
        name: "ground".into(),
        mesh: ground_mesh(labels, raster, params.ground_step, ps),
    });
    Ok(Reconstruction {
        ground_level: ground,
        footprints,
        cars,
        trees,
        groups,
        skipped,
    })
}
