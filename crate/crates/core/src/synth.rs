//! Seeded synthetic urban scenes with exact labels.
//!
//! Objects are painted in a fixed order (natural ground, roads, artificial
//! ground, buildings, trees, cars), each later object overwriting the
//! labels, colors and depth under it. Roofs and paved ground share gray
//! tones, so only depth separates them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SynthError;
use crate::grid::LabelGrid;
use crate::kv::KeyValues;
use crate::label::ClassLabel;
use crate::raster::{DepthRange, Raster};

/// Side of the reference canvas the default counts are tuned for.
const REFERENCE_SIDE: usize = 600;
const PLACEMENT_TRIES: usize = 400;

const NATURAL_COLOR: [f64; 3] = [0.36, 0.42, 0.22];
const ROAD_COLOR: [f64; 3] = [0.28, 0.28, 0.30];
const TREE_COLOR: [f64; 3] = [0.15, 0.33, 0.12];
const CAR_COLORS: [[f64; 3]; 5] = [
    [0.80, 0.10, 0.10],
    [0.10, 0.20, 0.80],
    [0.92, 0.92, 0.92],
    [0.08, 0.08, 0.10],
    [0.85, 0.70, 0.10],
];
const COLOR_JITTER: f64 = 0.04;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub buildings: usize,
    /// Building side range in pixels.
    pub building_side: (usize, usize),
    /// Building height above ground, normalized depth.
    pub building_height: (f64, f64),
    pub roads: usize,
    pub road_width: (usize, usize),
    pub artificial: usize,
    pub artificial_side: (usize, usize),
    pub trees: usize,
    pub tree_radius: (usize, usize),
    /// Crown height above ground, normalized depth.
    pub tree_height: (f64, f64),
    pub cars: usize,
    /// Car footprint, short side × long side.
    pub car_size: (usize, usize),
    /// Normalized depth of the ground plane.
    pub ground_level: f64,
    /// Half-width of the uniform ground depth noise.
    pub ground_noise: f64,
    /// Half-width of the uniform roof depth noise.
    pub roof_noise: f64,
    /// Half-width of the uniform tree depth noise.
    pub tree_noise: f64,
    /// Elevation range the normalized depth maps onto.
    pub depth_range: DepthRange,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: REFERENCE_SIDE,
            height: REFERENCE_SIDE,
            seed: 0,
            buildings: 8,
            building_side: (70, 150),
            building_height: (0.3, 0.6),
            roads: 3,
            road_width: (24, 36),
            artificial: 3,
            artificial_side: (60, 140),
            trees: 24,
            tree_radius: (9, 18),
            tree_height: (0.12, 0.25),
            cars: 24,
            car_size: (12, 24),
            ground_level: 0.1,
            ground_noise: 0.01,
            roof_noise: 0.002,
            tree_noise: 0.03,
            depth_range: DepthRange {
                min: 0.0,
                max: 30.0,
            },
        }
    }
}

impl SceneSpec {
    /// Default spec for a `width × height` canvas with object counts scaled
    /// by area from the 600 × 600 defaults.
    pub fn for_canvas(width: usize, height: usize, seed: u64) -> Self {
        let d = Self::default();
        let area = (width * height) as f64 / (REFERENCE_SIDE * REFERENCE_SIDE) as f64;
        let scale = |n: usize| ((n as f64 * area).round() as usize).max(1);
        Self {
            width,
            height,
            seed,
            buildings: scale(d.buildings),
            roads: scale(d.roads),
            artificial: scale(d.artificial),
            trees: scale(d.trees),
            cars: scale(d.cars),
            ..d
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Spec(m));
        if self.width == 0 || self.height == 0 {
            return err(format!("canvas {}x{} is empty", self.width, self.height));
        }
        let ranges = [
            ("building_side", self.building_side),
            ("road_width", self.road_width),
            ("artificial_side", self.artificial_side),
            ("tree_radius", self.tree_radius),
        ];
        for (name, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return err(format!("{name} range {lo}..{hi} is empty or zero"));
            }
        }
        if self.car_size.0 == 0 || self.car_size.1 == 0 {
            return err("car_size must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("building_height", self.building_height),
            ("tree_height", self.tree_height),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                return err(format!(
                    "{name} range {lo}..{hi} must be positive and ordered"
                ));
            }
        }
        let noises = [self.ground_noise, self.roof_noise, self.tree_noise];
        if noises.iter().any(|n| n.is_nan() || *n < 0.0) {
            return err("noise amplitudes must be non-negative".into());
        }
        let top = self.ground_level + self.building_height.1.max(self.tree_height.1);
        let peak = top + self.roof_noise.max(self.tree_noise);
        let floor = self.ground_level - self.ground_noise;
        if floor < 0.0 || peak > 1.0 {
            return err(format!("depth values span {floor}..{peak}, outside [0,1]"));
        }
        if self.depth_range.max.partial_cmp(&self.depth_range.min)
            != Some(std::cmp::Ordering::Greater)
        {
            return err("depth range must be increasing".into());
        }
        Ok(())
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self, SynthError> {
        let d = Self::default();
        let pair_usize = |key: &str, def: (usize, usize)| -> Result<(usize, usize), SynthError> {
            pair(kv, key, def)
        };
        let pair_f64 =
            |key: &str, def: (f64, f64)| -> Result<(f64, f64), SynthError> { pair(kv, key, def) };
        let range = pair_f64("depth_range", (d.depth_range.min, d.depth_range.max))?;
        let spec = Self {
            width: kv.get_or("width", d.width)?,
            height: kv.get_or("height", d.height)?,
            seed: kv.get_or("seed", d.seed)?,
            buildings: kv.get_or("buildings", d.buildings)?,
            building_side: pair_usize("building_side", d.building_side)?,
            building_height: pair_f64("building_height", d.building_height)?,
            roads: kv.get_or("roads", d.roads)?,
            road_width: pair_usize("road_width", d.road_width)?,
            artificial: kv.get_or("artificial", d.artificial)?,
            artificial_side: pair_usize("artificial_side", d.artificial_side)?,
            trees: kv.get_or("trees", d.trees)?,
            tree_radius: pair_usize("tree_radius", d.tree_radius)?,
            tree_height: pair_f64("tree_height", d.tree_height)?,
            cars: kv.get_or("cars", d.cars)?,
            car_size: pair_usize("car_size", d.car_size)?,
            ground_level: kv.get_or("ground_level", d.ground_level)?,
            ground_noise: kv.get_or("ground_noise", d.ground_noise)?,
            roof_noise: kv.get_or("roof_noise", d.roof_noise)?,
            tree_noise: kv.get_or("tree_noise", d.tree_noise)?,
            depth_range: DepthRange {
                min: range.0,
                max: range.1,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.set("seed", self.seed);
        kv.set("buildings", self.buildings);
        kv.set(
            "building_side",
            format!("{},{}", self.building_side.0, self.building_side.1),
        );
        kv.set(
            "building_height",
            format!("{},{}", self.building_height.0, self.building_height.1),
        );
        kv.set("roads", self.roads);
        kv.set(
            "road_width",
            format!("{},{}", self.road_width.0, self.road_width.1),
        );
        kv.set("artificial", self.artificial);
        kv.set(
            "artificial_side",
            format!("{},{}", self.artificial_side.0, self.artificial_side.1),
        );
        kv.set("trees", self.trees);
        kv.set(
            "tree_radius",
            format!("{},{}", self.tree_radius.0, self.tree_radius.1),
        );
        kv.set(
            "tree_height",
            format!("{},{}", self.tree_height.0, self.tree_height.1),
        );
        kv.set("cars", self.cars);
        kv.set(
            "car_size",
            format!("{},{}", self.car_size.0, self.car_size.1),
        );
        kv.set("ground_level", self.ground_level);
        kv.set("ground_noise", self.ground_noise);
        kv.set("roof_noise", self.roof_noise);
        kv.set("tree_noise", self.tree_noise);
        kv.set(
            "depth_range",
            format!("{},{}", self.depth_range.min, self.depth_range.max),
        );
        kv
    }
}

fn pair<T>(kv: &KeyValues, key: &str, default: (T, T)) -> Result<(T, T), SynthError>
where
    T: std::str::FromStr + Copy,
    T::Err: std::fmt::Display,
{
    match kv.get_list::<T>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(v) => Err(SynthError::Spec(format!(
            "`{key}` needs 2 values, got {}",
            v.len()
        ))),
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    fn grown(&self, margin: usize) -> (isize, isize, isize, isize) {
        let m = margin as isize;
        (
            self.x as isize - m,
            self.y as isize - m,
            (self.x + self.width) as isize + m,
            (self.y + self.height) as isize + m,
        )
    }

    /// Whether the rectangles come closer than `margin` pixels.
    pub fn near(&self, other: &Rect, margin: usize) -> bool {
        let (x0, y0, x1, y1) = self.grown(margin);
        let (ox0, oy0, ox1, oy1) = other.grown(0);
        x0 < ox1 && ox0 < x1 && y0 < oy1 && oy0 < y1
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// A generated building with its exact roof elevation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildingTruth {
    pub footprint: Rect,
    /// Normalized roof depth before noise.
    pub roof: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeTruth {
    pub cx: usize,
    pub cy: usize,
    pub radius: usize,
}

/// A scene and the objects it was painted from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub raster: Raster,
    pub buildings: Vec<BuildingTruth>,
    pub trees: Vec<TreeTruth>,
    pub cars: Vec<Rect>,
    pub roads: Vec<Rect>,
}

struct Canvas {
    width: usize,
    labels: Vec<u8>,
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
}

impl Canvas {
    fn paint(&mut self, x: usize, y: usize, label: ClassLabel, color: [f64; 3], depth: f64) {
        let i = y * self.width + x;
        self.labels[i] = label.index();
        self.color[i] = color;
        self.depth[i] = depth;
    }

    fn all(&self, r: &Rect, label: ClassLabel) -> bool {
        (r.y..r.y + r.height)
            .all(|y| (r.x..r.x + r.width).all(|x| self.labels[y * self.width + x] == label.index()))
    }
}

#[allow(clippy::too_many_arguments)]
fn paint_rect(
    cv: &mut Canvas,
    rng: &mut ChaCha8Rng,
    r: &Rect,
    label: ClassLabel,
    base: [f64; 3],
    level: f64,
    amplitude: f64,
) {
    for y in r.y..r.y + r.height {
        for x in r.x..r.x + r.width {
            let c = jitter(rng, base);
            let d = level + noise(rng, amplitude);
            cv.paint(x, y, label, c, d);
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3]) -> [f64; 3] {
    base.map(|c| (c + rng.gen_range(-COLOR_JITTER..=COLOR_JITTER)).clamp(0.0, 1.0))
}

fn noise(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        rng.gen_range(-amplitude..=amplitude)
    } else {
        0.0
    }
}

fn gray(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let g = rng.gen_range(0.45..=0.65);
    [g, g, g + 0.02]
}

/// Random rectangle of side lengths in `side` fully inside the canvas.
fn random_rect(rng: &mut ChaCha8Rng, w: usize, h: usize, side: (usize, usize)) -> Option<Rect> {
    let rw = rng.gen_range(side.0..=side.1);
    let rh = rng.gen_range(side.0..=side.1);
    if rw > w || rh > h {
        return None;
    }
    Some(Rect {
        x: rng.gen_range(0..=w - rw),
        y: rng.gen_range(0..=h - rh),
        width: rw,
        height: rh,
    })
}

pub fn generate(spec: &SceneSpec) -> Result<Raster, SynthError> {
    generate_scene(spec).map(|s| s.raster)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ground = spec.ground_level;
    let mut cv = Canvas {
        width: w,
        labels: vec![ClassLabel::NaturalGround.index(); w * h],
        color: vec![[0.0; 3]; w * h],
        depth: vec![0.0; w * h],
    };
    for i in 0..w * h {
        cv.color[i] = jitter(&mut rng, NATURAL_COLOR);
        cv.depth[i] = ground + noise(&mut rng, spec.ground_noise);
    }

    // full-span strips, alternating horizontal and vertical
    let mut roads = Vec::new();
    let mut horizontal = Vec::new();
    for k in 0..spec.roads {
        let width = rng.gen_range(spec.road_width.0..=spec.road_width.1);
        let r = if k % 2 == 0 {
            let width = width.min(h);
            Rect {
                x: 0,
                y: rng.gen_range(0..=h - width),
                width: w,
                height: width,
            }
        } else {
            let width = width.min(w);
            Rect {
                x: rng.gen_range(0..=w - width),
                y: 0,
                width,
                height: h,
            }
        };
        roads.push(r);
        horizontal.push(k % 2 == 0);
    }
    for r in &roads {
        paint_rect(
            &mut cv,
            &mut rng,
            r,
            ClassLabel::Road,
            ROAD_COLOR,
            ground,
            spec.ground_noise,
        );
    }

    let mut placed = 0;
    for _ in 0..PLACEMENT_TRIES {
        if placed == spec.artificial {
            break;
        }
        let Some(r) = random_rect(&mut rng, w, h, spec.artificial_side) else {
            continue;
        };
        if roads.iter().any(|q| r.near(q, 0)) {
            continue;
        }
        let base = gray(&mut rng);
        paint_rect(
            &mut cv,
            &mut rng,
            &r,
            ClassLabel::ArtificialGround,
            base,
            ground,
            spec.ground_noise,
        );
        placed += 1;
    }

    let mut buildings: Vec<BuildingTruth> = Vec::new();
    for _ in 0..PLACEMENT_TRIES {
        if buildings.len() == spec.buildings {
            break;
        }
        let Some(r) = random_rect(&mut rng, w, h, spec.building_side) else {
            continue;
        };
        if roads.iter().any(|q| r.near(q, 4)) || buildings.iter().any(|b| r.near(&b.footprint, 8)) {
            continue;
        }
        let roof = ground + rng.gen_range(spec.building_height.0..=spec.building_height.1);
        let base = gray(&mut rng);
        paint_rect(
            &mut cv,
            &mut rng,
            &r,
            ClassLabel::Building,
            base,
            roof,
            spec.roof_noise,
        );
        buildings.push(BuildingTruth { footprint: r, roof });
    }

    let mut trees: Vec<TreeTruth> = Vec::new();
    for _ in 0..PLACEMENT_TRIES {
        if trees.len() == spec.trees {
            break;
        }
        let radius = rng.gen_range(spec.tree_radius.0..=spec.tree_radius.1);
        if 2 * radius + 1 > w || 2 * radius + 1 > h {
            continue;
        }
        let cx = rng.gen_range(radius..w - radius);
        let cy = rng.gen_range(radius..h - radius);
        let bbox = Rect {
            x: cx - radius,
            y: cy - radius,
            width: 2 * radius + 1,
            height: 2 * radius + 1,
        };
        if buildings.iter().any(|b| bbox.near(&b.footprint, 2))
            || roads.iter().any(|q| bbox.near(q, 0))
        {
            continue;
        }
        let crown = rng.gen_range(spec.tree_height.0..=spec.tree_height.1);
        let r2 = (radius * radius) as f64;
        for y in bbox.y..bbox.y + bbox.height {
            for x in bbox.x..bbox.x + bbox.width {
                let d2 = ((x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2)) / r2;
                if d2 > 1.0 {
                    continue;
                }
                let c = jitter(&mut rng, TREE_COLOR);
                let d = ground + crown * (1.0 - d2).sqrt() + noise(&mut rng, spec.tree_noise);
                cv.paint(x, y, ClassLabel::Tree, c, d.max(ground));
            }
        }
        trees.push(TreeTruth { cx, cy, radius });
    }

    // cars sit fully on road pixels, long side along the road
    let mut cars: Vec<Rect> = Vec::new();
    if !roads.is_empty() {
        let (short, long) = spec.car_size;
        for _ in 0..PLACEMENT_TRIES {
            if cars.len() == spec.cars {
                break;
            }
            let k = rng.gen_range(0..roads.len());
            let road = roads[k];
            let (cw, ch) = if horizontal[k] {
                (long, short)
            } else {
                (short, long)
            };
            if cw > road.width || ch > road.height {
                continue;
            }
            let r = Rect {
                x: road.x + rng.gen_range(0..=road.width - cw),
                y: road.y + rng.gen_range(0..=road.height - ch),
                width: cw,
                height: ch,
            };
            if !cv.all(&r, ClassLabel::Road) || cars.iter().any(|c| r.near(c, 3)) {
                continue;
            }
            let base = CAR_COLORS[rng.gen_range(0..CAR_COLORS.len())];
            paint_rect(
                &mut cv,
                &mut rng,
                &r,
                ClassLabel::Car,
                base,
                ground + 0.04,
                0.005,
            );
            cars.push(r);
        }
    }

    let labels = LabelGrid::new(w, h, cv.labels);
    let raster = Raster::new(w, h, cv.depth, cv.color, Some(labels))
        .map_err(|e| SynthError::Spec(e.to_string()))?
        .with_depth_range(spec.depth_range);
    Ok(Scene {
        raster,
        buildings,
        trees,
        cars,
        roads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let spec = SceneSpec {
            seed: 42,
            width: 321,
            building_height: (0.25, 0.5),
            ..SceneSpec::default()
        };
        let back = SceneSpec::from_kv(&KeyValues::parse(&spec.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn zero_canvas_is_rejected() {
        let spec = SceneSpec {
            width: 0,
            ..SceneSpec::default()
        };
        assert!(matches!(generate(&spec), Err(SynthError::Spec(_))));
    }

    #[test]
    fn out_of_range_heights_are_rejected() {
        let spec = SceneSpec {
            building_height: (0.5, 0.95),
            ..SceneSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn scaled_counts_keep_one_of_each() {
        let s = SceneSpec::for_canvas(100, 100, 1);
        assert!(
            s.buildings >= 1 && s.roads >= 1 && s.cars >= 1 && s.trees >= 1 && s.artificial >= 1
        );
    }
}
