use geoseg::reconstruct::polygon::{
    is_counter_clockwise, is_simple, max_deviation, signed_area2, trace_outline,
};
use geoseg::reconstruct::{
    extract_components, extrude, footprint, ground_mesh, obj_text, place_cars, place_trees,
    reconstruct_scene, roof_height, trace_boundary, BuildingFootprint, Component, MeshGroup,
    ReconstructParams,
};
use geoseg::synth::{generate_scene, SceneSpec};
use geoseg::{ClassLabel, DepthRange, LabelGrid, Raster};
use proptest::prelude::*;

const B: u8 = 0;
const G: u8 = 4;

fn grid_from(rows: &[&str]) -> LabelGrid {
    let h = rows.len();
    let w = rows[0].len();
    let cells = rows
        .iter()
        .flat_map(|r| r.bytes().map(|c| if c == b'#' { B } else { G }))
        .collect();
    LabelGrid::new(w, h, cells)
}

fn flat_raster(labels: &LabelGrid, ground: f64, roof: f64) -> Raster {
    let depth = labels
        .as_slice()
        .iter()
        .map(|&l| if l == B { roof } else { ground })
        .collect();
    Raster::new(
        labels.width(),
        labels.height(),
        depth,
        vec![[0.5; 3]; labels.len()],
        None,
    )
    .unwrap()
}

fn rect_grid(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> LabelGrid {
    let mut g = LabelGrid::filled(w, h, G);
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            g.set(x, y, B);
        }
    }
    g
}

#[test]
fn solid_rectangle_is_one_component() {
    let g = rect_grid(20, 15, 3, 4, 7, 5);
    let comps = extract_components(&g, ClassLabel::Building, 1);
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0].area(), 35);
    assert_eq!(comps[0].bbox(), (3, 4, 7, 5));
}

#[test]
fn diagonal_touch_gives_two_components() {
    let g = grid_from(&["##..", "##..", "..##", "..##"]);
    assert_eq!(extract_components(&g, ClassLabel::Building, 1).len(), 2);
}

#[test]
fn small_specks_are_dropped() {
    let g = grid_from(&["###.....", "........", "....####", "....####", "....####"]);
    let comps = extract_components(&g, ClassLabel::Building, 10);
    assert_eq!(comps.len(), 1);
    assert_eq!(comps[0].area(), 12);
    assert_eq!(comps[0].id, 0);
}

#[test]
fn rectangle_traces_to_its_four_corners() {
    let g = rect_grid(20, 15, 3, 4, 7, 5);
    let comp = &extract_components(&g, ClassLabel::Building, 1)[0];
    let poly = trace_boundary(comp, 2.0);
    assert_eq!(poly, vec![[3.0, 4.0], [10.0, 4.0], [10.0, 9.0], [3.0, 9.0]]);
    assert!(is_counter_clockwise(&poly));
    assert_eq!(signed_area2(&poly), 70.0);
}

#[test]
fn thin_l_shape_has_six_vertices() {
    let g = grid_from(&["#....", "#....", "#....", "#####"]);
    let comp = &extract_components(&g, ClassLabel::Building, 1)[0];
    let poly = trace_boundary(comp, 0.0);
    assert_eq!(
        poly,
        vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 3.0],
            [5.0, 3.0],
            [5.0, 4.0],
            [0.0, 4.0]
        ]
    );
    assert_eq!(signed_area2(&poly), 2.0 * 8.0);
}

#[test]
fn zero_tolerance_keeps_the_raw_trace() {
    let g = grid_from(&["..##....", ".#####..", "########", ".######.", "...##..."]);
    let comp = &extract_components(&g, ClassLabel::Building, 1)[0];
    assert_eq!(trace_boundary(comp, 0.0), trace_outline(comp));
    assert!(trace_boundary(comp, 3.0).len() < trace_outline(comp).len());
}

#[test]
fn square_prism_is_a_closed_box() {
    let fp = BuildingFootprint {
        id: 0,
        polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        roof_height: 0.5,
    };
    let mesh = extrude(&fp, 0.0, 1.0).unwrap();
    assert_eq!((mesh.vertices.len(), mesh.triangles.len()), (8, 12));
    assert!(mesh.is_closed_manifold());
    assert!((mesh.volume() - 0.5).abs() < 1e-12);
}

#[test]
fn zero_height_and_degenerate_footprints_are_rejected() {
    let mut fp = BuildingFootprint {
        id: 3,
        polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        roof_height: 0.2,
    };
    assert!(extrude(&fp, 0.2, 1.0).is_err());
    fp.polygon.truncate(2);
    assert!(extrude(&fp, 0.0, 1.0).is_err());
}

#[test]
fn roof_height_is_the_median_under_salt_noise() {
    let g = rect_grid(40, 40, 5, 5, 30, 30);
    let mut raster = flat_raster(&g, 0.0, 0.5);
    let mut depth = raster.depth().to_vec();
    // every tenth building pixel spikes to 1.0
    let mut k = 0;
    for (i, &l) in g.as_slice().iter().enumerate() {
        if l == B {
            if k % 10 == 0 {
                depth[i] = 1.0;
            }
            k += 1;
        }
    }
    raster = Raster::new(40, 40, depth.clone(), vec![[0.5; 3]; 1600], None).unwrap();
    let comp = &extract_components(&g, ClassLabel::Building, 1)[0];
    let mean: f64 = comp
        .pixels
        .iter()
        .map(|&(x, y)| depth[y * 40 + x])
        .sum::<f64>()
        / comp.area() as f64;
    assert!((mean - 0.5).abs() > 0.04);
    assert_eq!(roof_height(comp, &raster), 0.5);
}

#[test]
fn round_tree_blob_recovers_its_radius() {
    let (w, h, r) = (80usize, 80usize, 12.0f64);
    let mut g = LabelGrid::filled(w, h, G);
    let mut depth = vec![0.1; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = ((x as f64 + 0.5 - 40.0).powi(2) + (y as f64 + 0.5 - 33.0).powi(2)).sqrt();
            if d <= r {
                g.set(x, y, ClassLabel::Tree.index());
                depth[y * w + x] = 0.4;
            }
        }
    }
    let raster = Raster::new(w, h, depth, vec![[0.5; 3]; w * h], None).unwrap();
    let trees = place_trees(&g, &raster, 0.1, &ReconstructParams::default());
    assert_eq!(trees.len(), 1);
    let t = &trees[0];
    assert!((t.radius - r).abs() / r < 0.1, "radius {}", t.radius);
    assert!((t.center[0] - 40.0).abs() < 0.5 && (t.center[1] - 33.0).abs() < 0.5);
    assert!(t.mesh(0.1).is_closed_manifold());
}

#[test]
fn cars_give_one_box_per_blob() {
    let mut g = LabelGrid::filled(30, 30, 2);
    let raster = Raster::new(30, 30, vec![0.2; 900], vec![[0.5; 3]; 900], None).unwrap();
    let params = ReconstructParams {
        min_area: 4,
        ..ReconstructParams::default()
    };
    assert!(place_cars(&g, &raster, 0.2, &params).is_empty());
    for (x0, y0) in [(2, 2), (20, 15)] {
        for y in y0..y0 + 3 {
            for x in x0..x0 + 6 {
                g.set(x, y, ClassLabel::Car.index());
            }
        }
    }
    let cars = place_cars(&g, &raster, 0.2, &params);
    assert_eq!(cars.len(), 2);
    let m = cars[1].mesh();
    assert_eq!((m.vertices.len(), m.triangles.len()), (8, 12));
    assert!((cars[1].min[0] - 2.0).abs() < 1e-12 && (cars[1].max[0] - 2.6).abs() < 1e-12);
}

#[test]
fn ground_mesh_triangle_counts() {
    let (w, h) = (65usize, 49usize);
    let g = LabelGrid::filled(w, h, G);
    let raster = Raster::new(w, h, vec![0.3; w * h], vec![[0.5; 3]; w * h], None).unwrap();
    let full = ground_mesh(&g, &raster, 1, 1.0);
    assert_eq!(full.triangles.len(), 2 * (w - 1) * (h - 1));
    assert!(full.vertices.iter().all(|v| v[2] == 0.3));
    let coarse = ground_mesh(&g, &raster, 4, 1.0);
    assert_eq!(coarse.triangles.len() * 16, full.triangles.len());
    assert!(coarse.indices_in_range());
}

#[test]
fn obj_export_is_deterministic_and_one_based() {
    assert_eq!(obj_text(&[], &[]), "# geoseg reconstruction\n");
    let g = rect_grid(30, 30, 5, 5, 10, 10);
    let raster = flat_raster(&g, 0.1, 0.6);
    let params = ReconstructParams::default();
    let a = reconstruct_scene(&g, &raster, &params).unwrap();
    let b = reconstruct_scene(&g, &raster, &params).unwrap();
    let (ta, tb) = (
        obj_text(&a.groups, &["run x".into()]),
        obj_text(&b.groups, &["run x".into()]),
    );
    assert_eq!(ta, tb);
    assert!(ta.lines().any(|l| l == "g building_0"));
    assert!(ta.lines().any(|l| l == "g ground"));
    let first_face = ta.lines().find(|l| l.starts_with("f ")).unwrap();
    assert!(first_face
        .split_whitespace()
        .skip(1)
        .all(|i| i.parse::<usize>().unwrap() >= 1));

    let boxed = vec![MeshGroup {
        name: "car_0".into(),
        mesh: geoseg::reconstruct::axis_box([0.0; 3], [1.0; 3]).unwrap(),
    }];
    let text = obj_text(&boxed, &[]);
    assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8);
    assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12);
}

#[test]
fn synthetic_building_is_recovered() {
    let mut spec = SceneSpec::for_canvas(200, 200, 11);
    spec.buildings = 1;
    spec.roads = 1;
    spec.trees = 0;
    spec.cars = 0;
    spec.artificial = 0;
    spec.building_side = (60, 80);
    spec.depth_range = DepthRange {
        min: 0.0,
        max: 30.0,
    };
    let scene = generate_scene(&spec).unwrap();
    let labels = scene.raster.labels().unwrap().clone();
    let truth = &scene.buildings[0];
    let rec = reconstruct_scene(&labels, &scene.raster, &ReconstructParams::default()).unwrap();
    assert_eq!(rec.footprints.len(), 1);
    let fp = &rec.footprints[0];
    assert_eq!(fp.polygon.len(), 4);
    let r = truth.footprint;
    let (x0, y0) = (r.x as f64, r.y as f64);
    let (x1, y1) = (x0 + r.width as f64, y0 + r.height as f64);
    assert_eq!(fp.polygon, vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]);
    let roof = spec.depth_range.denormalize(truth.roof);
    assert!((fp.roof_height - roof).abs() / roof < 0.02);
    assert!(rec.groups[0].mesh.is_closed_manifold());
}

fn blob_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
    (4usize..14, 4usize..14).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            proptest::collection::vec(any::<bool>(), w * h),
        )
    })
}

proptest! {
    #[test]
    fn traced_components_extrude_to_closed_prisms((w, h, cells) in blob_strategy(), eps in 0.0f64..3.0) {
        let g = LabelGrid::new(w, h, cells.iter().map(|&b| if b { B } else { G }).collect());
        let raster = flat_raster(&g, 0.1, 0.7);
        for comp in extract_components(&g, ClassLabel::Building, 1) {
            let raw = trace_outline(&comp);
            prop_assert!(is_counter_clockwise(&raw));
            let fp = footprint(&comp, &raster, eps);
            prop_assert!(fp.polygon.len() >= 3);
            prop_assert!(is_counter_clockwise(&fp.polygon));
            if is_simple(&raw) {
                prop_assert!(is_simple(&fp.polygon));
                prop_assert!(max_deviation(&raw, &fp.polygon) <= eps + 1e-9);
            }
            let mesh = extrude(&fp, 0.1, 1.0).unwrap();
            prop_assert!(mesh.is_closed_manifold());
            prop_assert!(mesh.volume() > 0.0);
        }
    }

    #[test]
    fn outline_area_matches_pixel_count_without_holes(x0 in 0usize..5, y0 in 0usize..5, rw in 1usize..9, rh in 1usize..9) {
        let g = rect_grid(15, 15, x0, y0, rw, rh);
        let comp: Component = extract_components(&g, ClassLabel::Building, 1).remove(0);
        prop_assert_eq!(signed_area2(&trace_outline(&comp)), 2.0 * (rw * rh) as f64);
    }
}
