//! Multi-scale composites: five rescaled copies of one raster packed on a
//! single canvas. Scale 0 sits at the origin and scales 1..4 run left to
//! right in a strip directly below it.

use crate::error::RasterError;
use crate::grid::LabelGrid;
use crate::kv::KeyValues;
use crate::raster::resample::{downsample_area, downsample_nearest};
use crate::raster::Raster;

pub const NUM_SCALES: usize = 5;

/// Percent removed per scale step.
const DECREMENT_PERCENT: usize = 16;

/// Side length of scale `i` for a source side `s`: `round(s·(1 − 0.16·i))`
/// with halves rounded up, computed in exact integer arithmetic.
pub fn scale_side(s: usize, i: usize) -> usize {
    let percent = 100 - DECREMENT_PERCENT * i;
    (s * percent + 50) / 100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub scale: usize,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Placement {
    pub fn contains_rect(&self, x: usize, y: usize, w: usize, h: usize) -> bool {
        x >= self.x && y >= self.y && x + w <= self.x + self.width && y + h <= self.y + self.height
    }

    pub fn overlaps(&self, other: &Placement) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    /// Number of top-left positions for an `n × n` window fully inside.
    pub fn valid_positions(&self, n: usize) -> usize {
        if self.width < n || self.height < n {
            0
        } else {
            (self.width - n + 1) * (self.height - n + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub canvas: Raster,
    pub placements: Vec<Placement>,
    /// Dimensions of the scale-0 source.
    pub source_width: usize,
    pub source_height: usize,
}

impl Composite {
    /// Placement fully containing the `w × h` rectangle at `(x, y)`.
    pub fn placement_containing(
        &self,
        x: usize,
        y: usize,
        w: usize,
        h: usize,
    ) -> Option<&Placement> {
        self.placements.iter().find(|p| p.contains_rect(x, y, w, h))
    }

    pub fn placement(&self, scale: usize) -> &Placement {
        &self.placements[scale]
    }

    /// Serializes the placement table for the sidecar file.
    pub fn placements_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("source_width", self.source_width);
        kv.set("source_height", self.source_height);
        for p in &self.placements {
            kv.set(
                &format!("placement_{}", p.scale),
                format!("{},{},{},{}", p.x, p.y, p.width, p.height),
            );
        }
        kv
    }

    pub fn placements_from_kv(
        kv: &KeyValues,
    ) -> Result<(usize, usize, Vec<Placement>), RasterError> {
        let sw = kv.require("source_width")?;
        let sh = kv.require("source_height")?;
        let mut placements = Vec::with_capacity(NUM_SCALES);
        for scale in 0..NUM_SCALES {
            let key = format!("placement_{scale}");
            let v: Vec<usize> = kv
                .get_list(&key)?
                .ok_or_else(|| crate::error::FormatError::MissingKey(key.clone()))?;
            if v.len() != 4 {
                return Err(RasterError::Invalid(format!("{key} needs 4 values")));
            }
            placements.push(Placement {
                scale,
                x: v[0],
                y: v[1],
                width: v[2],
                height: v[3],
            });
        }
        Ok((sw, sh, placements))
    }
}

/// Packs five rescaled copies of `raster` on one canvas.
///
/// Fails if the smallest scale is narrower than twice `patch_size` on
/// either axis.
pub fn build_composite(raster: &Raster, patch_size: usize) -> Result<Composite, RasterError> {
    let (w, h) = (raster.width(), raster.height());
    let sizes: Vec<(usize, usize)> = (0..NUM_SCALES)
        .map(|i| (scale_side(w, i), scale_side(h, i)))
        .collect();
    let (min_w, min_h) = sizes[NUM_SCALES - 1];
    if min_w < 2 * patch_size || min_h < 2 * patch_size {
        return Err(RasterError::Size(format!(
            "{w}x{h} source gives a {min_w}x{min_h} smallest scale, need at least {0}x{0}",
            2 * patch_size
        )));
    }

    let mut placements = Vec::with_capacity(NUM_SCALES);
    placements.push(Placement {
        scale: 0,
        x: 0,
        y: 0,
        width: w,
        height: h,
    });
    let mut cursor = 0;
    for (i, &(sw, sh)) in sizes.iter().enumerate().skip(1) {
        placements.push(Placement {
            scale: i,
            x: cursor,
            y: h,
            width: sw,
            height: sh,
        });
        cursor += sw;
    }
    let canvas_w = w.max(cursor);
    let canvas_h = h + sizes[1].1;

    let n = canvas_w * canvas_h;
    let mut depth = vec![0.0; n];
    let mut color = vec![[0.0; 3]; n];
    let mut labels = raster.labels().map(|_| vec![0u8; n]);

    let src_color: Vec<f64> = raster.color().iter().flatten().copied().collect();
    for p in &placements {
        let d = downsample_area(raster.depth(), w, h, 1, p.width, p.height);
        let c = downsample_area(&src_color, w, h, 3, p.width, p.height);
        let l = raster
            .labels()
            .map(|g| downsample_nearest(g.as_slice(), w, h, p.width, p.height));
        for y in 0..p.height {
            for x in 0..p.width {
                let src = y * p.width + x;
                let dst = (p.y + y) * canvas_w + p.x + x;
                depth[dst] = d[src].clamp(0.0, 1.0);
                color[dst] = [
                    c[3 * src].clamp(0.0, 1.0),
                    c[3 * src + 1].clamp(0.0, 1.0),
                    c[3 * src + 2].clamp(0.0, 1.0),
                ];
                if let (Some(out), Some(l)) = (labels.as_mut(), l.as_ref()) {
                    out[dst] = l[src];
                }
            }
        }
    }

    let labels = labels.map(|l| LabelGrid::new(canvas_w, canvas_h, l));
    let canvas = Raster::new(canvas_w, canvas_h, depth, color, labels)?
        .with_depth_range(raster.depth_range());
    Ok(Composite {
        canvas,
        placements,
        source_width: w,
        source_height: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_raster(side: usize, d: f64, c: [f64; 3], l: u8) -> Raster {
        let n = side * side;
        Raster::new(
            side,
            side,
            vec![d; n],
            vec![c; n],
            Some(LabelGrid::filled(side, side, l)),
        )
        .unwrap()
    }

    #[test]
    fn sides_follow_sixteen_percent_steps() {
        let sides: Vec<_> = (0..5).map(|i| scale_side(600, i)).collect();
        assert_eq!(sides, vec![600, 504, 408, 312, 216]);
        let sides: Vec<_> = (0..5).map(|i| scale_side(6000, i)).collect();
        assert_eq!(sides, vec![6000, 5040, 4080, 3120, 2160]);
        // 46.2 -> 46, 2.6 -> 3, 90.96 -> 91
        assert_eq!(scale_side(55, 1), 46);
        assert_eq!(scale_side(5, 3), 3);
        assert_eq!(scale_side(175, 3), 91);
        assert_eq!(scale_side(1, 1), 1);
    }

    #[test]
    fn placements_are_disjoint_and_recorded() {
        let r = constant_raster(600, 0.25, [0.1, 0.2, 0.3], 2);
        let comp = build_composite(&r, 100).unwrap();
        assert_eq!(comp.placements.len(), NUM_SCALES);
        let sides: Vec<_> = comp.placements.iter().map(|p| p.width).collect();
        assert_eq!(sides, vec![600, 504, 408, 312, 216]);
        for (i, a) in comp.placements.iter().enumerate() {
            for b in &comp.placements[i + 1..] {
                assert!(!a.overlaps(b));
            }
        }
        let (sw, sh, back) = Composite::placements_from_kv(&comp.placements_kv()).unwrap();
        assert_eq!((sw, sh), (600, 600));
        assert_eq!(back, comp.placements);
    }

    #[test]
    fn constant_raster_stays_constant() {
        let r = constant_raster(600, 0.25, [0.1, 0.2, 0.3], 2);
        let comp = build_composite(&r, 100).unwrap();
        let labels = comp.canvas.labels().unwrap();
        for p in &comp.placements {
            for y in p.y..p.y + p.height {
                for x in p.x..p.x + p.width {
                    assert!((comp.canvas.depth_at(x, y) - 0.25).abs() < 1e-12);
                    let c = comp.canvas.color_at(x, y);
                    assert!((c[0] - 0.1).abs() < 1e-12 && (c[2] - 0.3).abs() < 1e-12);
                    assert_eq!(labels.get(x, y), 2);
                }
            }
        }
    }

    #[test]
    fn too_small_is_a_size_error() {
        let r = constant_raster(200, 0.5, [0.5; 3], 0);
        assert!(matches!(
            build_composite(&r, 100),
            Err(RasterError::Size(_))
        ));
    }
}
