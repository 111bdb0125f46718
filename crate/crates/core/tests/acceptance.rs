//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! Set `GEOSEG_SKIP_LONG=1` to skip the full synthetic training run.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use geoseg::cnn::{
    cross_entropy, relu, relu_backward, softmax_normalize, ConvLayer, EdgeRule, FcLayer, NetConfig,
    Network, PoolLayer, PoolMode, Tensor,
};
use geoseg::eval::f1_score;
use geoseg::mrf::{alpha_expansion, brute_force_map, EnergyParams, FlowGraph};
use geoseg::pipeline::{Pipeline, PipelineConfig, RunSummary};
use geoseg::reconstruct::{reconstruct_scene, Mesh, ReconstructParams};
use geoseg::synth::{generate_scene, SceneSpec};
use geoseg::{LabelGrid, NUM_LABELS, UNKNOWN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (u32, &'a str, Box<dyn Fn() -> Option<Outcome>>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1

fn architecture() -> Outcome {
    let net = Network::<f64>::new(NetConfig::new(100, 5), 0).map_err(|e| e.to_string())?;
    let shapes = net
        .forward_shapes(&vec![0.5; 4 * 100 * 100])
        .map_err(|e| e.to_string())?;
    let want: Vec<Vec<usize>> = vec![
        vec![4, 100, 100],
        vec![6, 96, 96],
        vec![6, 48, 48],
        vec![12, 44, 44],
        vec![12, 21, 21],
        vec![5292],
        vec![120],
        vec![80],
        vec![6],
    ];
    check(shapes == want, format!("{shapes:?}"))
}

// 2

const H: f64 = 1e-5;

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `f` around `x`.
fn worst(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut x = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(&x);
        x[i] = orig - H;
        let down = f(&x);
        x[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut errors = BTreeMap::new();

    let mut conv = ConvLayer::<f64>::zeros(3, 4, 3).unwrap();
    conv.init(&mut rng);
    conv.bias.values_mut().copy_from_slice(&random(4, &mut rng));
    let x = random(3 * 8 * 7, &mut rng);
    let r = random(4 * 6 * 5, &mut rng);
    let input = Tensor::new(vec![3, 8, 7], x.clone()).unwrap();
    let g_in = conv
        .backward(
            &input,
            &Tensor::new(vec![4, 6, 5], r.clone()).unwrap(),
            true,
        )
        .unwrap()
        .unwrap();
    let e_in = worst(&x, g_in.values(), |x| {
        dot(
            conv.forward(&Tensor::new(vec![3, 8, 7], x.to_vec()).unwrap())
                .unwrap()
                .values(),
            &r,
        )
    });
    let e_w = worst(conv.weight.values(), conv.weight.grad().unwrap(), |w| {
        let mut c = conv.clone();
        c.weight.values_mut().copy_from_slice(w);
        dot(c.forward(&input).unwrap().values(), &r)
    });
    let e_b = worst(conv.bias.values(), conv.bias.grad().unwrap(), |b| {
        let mut c = conv.clone();
        c.bias.values_mut().copy_from_slice(b);
        dot(c.forward(&input).unwrap().values(), &r)
    });
    errors.insert("conv", e_in.max(e_w).max(e_b));

    for (name, pool) in [
        (
            "avg_pool",
            PoolLayer::new(PoolMode::Average, EdgeRule::Ceil),
        ),
        ("max_pool", PoolLayer::new(PoolMode::Max, EdgeRule::Floor)),
    ] {
        let (h, w) = (9, 10);
        let x = random(2 * h * w, &mut rng);
        let out = pool
            .forward(&Tensor::new(vec![2, h, w], x.clone()).unwrap())
            .unwrap();
        let r = random(out.output.len(), &mut rng);
        let g = pool.backward(
            (2, h, w),
            &Tensor::new(out.output.shape().to_vec(), r.clone()).unwrap(),
            out.argmax.as_deref(),
        );
        errors.insert(
            name,
            worst(&x, g.values(), |x| {
                dot(
                    pool.forward(&Tensor::new(vec![2, h, w], x.to_vec()).unwrap())
                        .unwrap()
                        .output
                        .values(),
                    &r,
                )
            }),
        );
    }

    let x: Vec<f64> = random(60, &mut rng)
        .into_iter()
        .map(|v| if v.abs() < 0.01 { 0.5 } else { v })
        .collect();
    let r = random(60, &mut rng);
    let out = relu(&Tensor::new(vec![1, 6, 10], x.clone()).unwrap());
    let g = relu_backward(&out, &Tensor::new(vec![1, 6, 10], r.clone()).unwrap());
    errors.insert(
        "relu",
        worst(&x, g.values(), |x| {
            dot(
                relu(&Tensor::new(vec![1, 6, 10], x.to_vec()).unwrap()).values(),
                &r,
            )
        }),
    );

    let mut fc = FcLayer::<f64>::zeros(9, 5);
    fc.init(&mut rng);
    fc.bias.values_mut().copy_from_slice(&random(5, &mut rng));
    let x = random(9, &mut rng);
    let r = random(5, &mut rng);
    let g_in = fc.backward(&x, &r);
    let e_in = worst(&x, &g_in, |x| dot(&fc.forward(x).unwrap(), &r));
    let e_w = worst(fc.weight.values(), fc.weight.grad().unwrap(), |w| {
        let mut f = fc.clone();
        f.weight.values_mut().copy_from_slice(w);
        dot(&f.forward(&x).unwrap(), &r)
    });
    let e_b = worst(fc.bias.values(), fc.bias.grad().unwrap(), |b| {
        let mut f = fc.clone();
        f.bias.values_mut().copy_from_slice(b);
        dot(&f.forward(&x).unwrap(), &r)
    });
    errors.insert("fc", e_in.max(e_w).max(e_b));

    let logits: Vec<f64> = random(6, &mut rng).into_iter().map(|v| 3.0 * v).collect();
    let mut e_ce = 0.0f64;
    for target in 0..6 {
        let (_, g) = cross_entropy(&logits, target);
        e_ce = e_ce.max(worst(&logits, &g, |l| cross_entropy(l, target).0));
    }
    errors.insert("softmax_ce", e_ce);

    let max = errors.values().copied().fold(0.0, f64::max);
    let detail = errors
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        max < 1e-4,
        format!("max relative error {max:.1e} ({detail})"),
    )
}

// 3

fn softmax_simplex() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut non_finite = 0usize;
    for i in 0..100_000 {
        let span = if i % 2 == 0 { 500.0 } else { 5.0 };
        let mut phi = [0.0; 6];
        phi.iter_mut()
            .for_each(|v| *v = rng.gen_range(-span..=span));
        if i % 10 == 0 {
            phi[i % 6] = if i % 20 == 0 { 500.0 } else { -500.0 };
        }
        let s = softmax_normalize(&phi);
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            non_finite += 1;
        }
        worst = worst.max((s.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        worst <= 1e-9 && non_finite == 0,
        format!("max |sum - 1| = {worst:.1e}, {non_finite} bad vectors over 1e5"),
    )
}

// 4

fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LabelGrid {
    LabelGrid::new(
        w,
        h,
        (0..w * h)
            .map(|_| rng.gen_range(0..NUM_LABELS as u8))
            .collect(),
    )
}

fn mrf_oracles() -> Outcome {
    let params = EnergyParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut grid_mismatch = 0;
    for _ in 0..500 {
        let obs = random_grid(&mut rng, 2, 3);
        let (_, best) = brute_force_map(&obs, &params).map_err(|e| e.to_string())?;
        let r = alpha_expansion(&obs, &params, 10).map_err(|e| e.to_string())?;
        if r.final_energy() != best {
            grid_mismatch += 1;
        }
    }
    let mut cut_mismatch = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=12usize);
        let source: Vec<i64> = (0..n).map(|_| rng.gen_range(0..20)).collect();
        let sink: Vec<i64> = (0..n).map(|_| rng.gen_range(0..20)).collect();
        let edges: Vec<(usize, usize, i64, i64)> =
            (0..if n > 1 { rng.gen_range(0..3 * n) } else { 0 })
                .map(|_| {
                    let p = rng.gen_range(0..n);
                    let q = (p + rng.gen_range(1..n)) % n;
                    (p, q, rng.gen_range(0..15), rng.gen_range(0..15))
                })
                .collect();
        let mut g = FlowGraph::new(n);
        for i in 0..n {
            g.add_tedge(i, source[i], sink[i]);
        }
        for &(p, q, a, b) in &edges {
            g.add_edge(p, q, a, b);
        }
        let flow = g.maxflow();
        // bit i set: node i on the sink side
        let best = (0..1u32 << n)
            .map(|m| {
                let on_sink = |i: usize| m >> i & 1 == 1;
                let mut c: i64 = (0..n)
                    .map(|i| if on_sink(i) { source[i] } else { sink[i] })
                    .sum();
                for &(p, q, a, b) in &edges {
                    if !on_sink(p) && on_sink(q) {
                        c += a;
                    }
                    if !on_sink(q) && on_sink(p) {
                        c += b;
                    }
                }
                c
            })
            .min()
            .unwrap();
        if flow != best {
            cut_mismatch += 1;
        }
    }
    check(
        grid_mismatch == 0 && cut_mismatch == 0,
        format!("{grid_mismatch}/500 grid mismatches, {cut_mismatch}/200 cut mismatches"),
    )
}

// 5

fn monotone_and_metric() -> Outcome {
    let params = EnergyParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut increases = 0;
    let mut moves = 0;
    for _ in 0..100 {
        let obs = random_grid(&mut rng, 64, 64);
        let r = alpha_expansion(&obs, &params, 10).map_err(|e| e.to_string())?;
        for pair in r.trace.windows(2) {
            moves += 1;
            if pair[1].energy > pair[0].energy {
                increases += 1;
            }
        }
    }
    let mut violations = 0;
    for a in 0..NUM_LABELS as u8 {
        for b in 0..NUM_LABELS as u8 {
            for c in 0..NUM_LABELS as u8 {
                let v = |x, y| params.pairwise(x, y);
                let ok = v(a, a) == 0
                    && v(a, b) == v(b, a)
                    && (a == b || v(a, b) > 0)
                    && v(a, b) <= v(a, c) + v(c, b);
                if !ok {
                    violations += 1;
                }
            }
        }
    }
    check(
        increases == 0 && violations == 0,
        format!("{increases} increases over {moves} moves, {violations}/343 metric violations"),
    )
}

// 6

fn boundary_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (w, h, m) = (120, 90, 12);
    let mut obs = LabelGrid::filled(w, h, UNKNOWN);
    for y in m..h - m {
        for x in m..w - m {
            obs.set(x, y, rng.gen_range(0..6));
        }
    }
    let r = alpha_expansion(&obs, &EnergyParams::default(), 10).map_err(|e| e.to_string())?;
    let left = r.labels.count_unknown();
    check(
        left == 0,
        format!("{} unknown before, {left} after", obs.count_unknown()),
    )
}

// 7

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.txt");
    fs::write(
        &path,
        format!("data_dir = data\noutput_dir = run\ncheckpoint_dir = run/checkpoints\n{extra}"),
    )
    .unwrap();
    path
}

fn end_to_end(dir: &Path) -> Outcome {
    let cfg = PipelineConfig::from_file(&write_config(
        dir,
        "synth.scenes = 10\nsynth.train_scenes = 8\nsynth.width = 600\nsynth.height = 600\n\
         train.epochs = 30\ntrain.samples = 50000\nstride = 1\n",
    ))
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let p = Pipeline::new(cfg)
        .with_logger(move |m| eprintln!("  {:>7.0}s {m}", start.elapsed().as_secs_f64()));
    let s: RunSummary = p.run_all().map_err(|e| e.to_string())?;
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let (acc, f1, delta) = (
        s.refined_accuracy(),
        s.building_f1(),
        s.refined_accuracy() - s.raw_accuracy(),
    );
    check(
        acc >= 0.90 && f1 >= 0.95 && delta >= 0.0,
        format!(
            "accuracy {:.2}%, building F1 {:.2}%, refinement delta {:+.3} points, {minutes:.1} min on {} core(s)",
            100.0 * acc,
            100.0 * f1,
            100.0 * delta,
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    )
}

// 8

fn metrics_identity() -> Outcome {
    let f1 = 100.0 * f1_score(0.950, 0.944);
    check(
        (f1 - 94.7).abs() <= 0.05,
        format!("F1(95.0, 94.4) = {f1:.3}"),
    )
}

// 9

/// Splits an OBJ file into its groups with group-local indices.
fn obj_groups(text: &str) -> Vec<(String, Mesh)> {
    let mut groups: Vec<(String, Mesh, u32)> = Vec::new();
    let mut seen = 0u32;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("g") => groups.push((it.next().unwrap_or("").to_string(), Mesh::default(), seen)),
            Some("v") => {
                let v: Vec<f64> = it.map(|t| t.parse().unwrap()).collect();
                groups
                    .last_mut()
                    .unwrap()
                    .1
                    .vertices
                    .push([v[0], v[1], v[2]]);
                seen += 1;
            }
            Some("f") => {
                let g = groups.last_mut().unwrap();
                let f: Vec<u32> = it.map(|t| t.parse::<u32>().unwrap() - 1 - g.2).collect();
                g.1.triangles.push([f[0], f[1], f[2]]);
            }
            _ => {}
        }
    }
    groups.into_iter().map(|(n, m, _)| (n, m)).collect()
}

fn reconstruction(obj_dirs: &[PathBuf]) -> Outcome {
    let mut prisms = 0;
    let mut broken = 0;
    for dir in obj_dirs {
        let Ok(entries) = fs::read_dir(dir) else {
            continue;
        };
        for e in entries.filter_map(|e| e.ok()) {
            let text = fs::read_to_string(e.path()).map_err(|e| e.to_string())?;
            for (name, mesh) in obj_groups(&text) {
                if name.starts_with("building_") {
                    prisms += 1;
                    if !mesh.is_closed_manifold() {
                        broken += 1;
                    }
                }
            }
        }
    }

    let mut spec = SceneSpec::for_canvas(300, 300, 9);
    spec.buildings = 1;
    spec.building_side = (80, 120);
    let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
    let labels = scene.raster.labels().unwrap();
    let rec = reconstruct_scene(labels, &scene.raster, &ReconstructParams::default())
        .map_err(|e| e.to_string())?;
    let truth = &scene.buildings[0];
    let roof = spec.depth_range.denormalize(truth.roof);
    let fp = rec.footprints.first().ok_or("no building recovered")?;
    let r = truth.footprint;
    let corners = vec![
        [r.x as f64, r.y as f64],
        [(r.x + r.width) as f64, r.y as f64],
        [(r.x + r.width) as f64, (r.y + r.height) as f64],
        [r.x as f64, (r.y + r.height) as f64],
    ];
    let height_err = (fp.roof_height - roof).abs() / roof;
    check(
        prisms > 0 && broken == 0 && fp.polygon == corners && height_err < 0.02,
        format!(
            "{}/{prisms} exported prisms closed, rectangle -> {} vertices (corners match: {}), roof error {:.3}%",
            prisms - broken,
            fp.polygon.len(),
            fp.polygon == corners,
            100.0 * height_err
        ),
    )
}

// 10

const DETERMINISM_CONFIG: &str =
    "synth.scenes = 3\nsynth.train_scenes = 2\ntrain.epochs = 2\ntrain.samples = 1500\n\
                                  stride = 2\nsvm.samples = 5000\nseed = 17\n";

/// Label maps, reports and OBJ files of a run, keyed by relative path.
fn run_outputs(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let run = root.join("run");
    let mut out = BTreeMap::new();
    for sub in ["labels", "eval", "reconstruct"] {
        for e in fs::read_dir(run.join(sub))
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok())
        {
            let name = e.file_name().to_string_lossy().to_string();
            if sub == "eval" && !name.ends_with(".csv") && !name.ends_with(".txt") {
                continue;
            }
            out.insert(format!("{sub}/{name}"), fs::read(e.path()).unwrap());
        }
    }
    out.insert(
        "summary.txt".into(),
        fs::read(run.join("summary.txt")).unwrap_or_default(),
    );
    out
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    for dir in [a, b] {
        let cfg = PipelineConfig::from_file(&write_config(dir, DETERMINISM_CONFIG))
            .map_err(|e| e.to_string())?;
        Pipeline::new(cfg).run_all().map_err(|e| e.to_string())?;
    }
    let (x, y) = (run_outputs(a), run_outputs(b));
    let differing: Vec<&String> = x.keys().filter(|k| x.get(*k) != y.get(*k)).collect();
    check(
        x.len() > 3 && x.keys().eq(y.keys()) && differing.is_empty(),
        format!(
            "{} files compared, {} differ {:?}",
            x.len(),
            differing.len(),
            differing
        ),
    )
}

fn main() {
    let skip_long = std::env::var("GEOSEG_SKIP_LONG").is_ok_and(|v| v == "1");
    let scratch = tempfile::tempdir().expect("temporary directory");
    let dirs: Vec<PathBuf> = ["det_a", "det_b", "e2e"]
        .iter()
        .map(|d| scratch.path().join(d))
        .collect();
    for d in &dirs {
        fs::create_dir_all(d).unwrap();
    }
    let (det_a, det_b, e2e) = (dirs[0].clone(), dirs[1].clone(), dirs[2].clone());
    let obj_dirs = vec![det_a.join("run/reconstruct"), e2e.join("run/reconstruct")];

    let criteria: Vec<Criterion> = vec![
        (
            1,
            "architecture fidelity",
            Box::new(|| Some(architecture())),
        ),
        (2, "gradient correctness", Box::new(|| Some(gradients()))),
        (3, "softmax simplex", Box::new(|| Some(softmax_simplex()))),
        (
            4,
            "MRF oracle equivalence",
            Box::new(|| Some(mrf_oracles())),
        ),
        (
            5,
            "energy monotonicity and metric",
            Box::new(|| Some(monotone_and_metric())),
        ),
        (
            6,
            "boundary recovery",
            Box::new(|| Some(boundary_recovery())),
        ),
        (8, "metrics identity", Box::new(|| Some(metrics_identity()))),
        (
            10,
            "determinism",
            Box::new(move || Some(determinism(&det_a, &det_b))),
        ),
        (
            7,
            "synthetic end-to-end",
            Box::new(move || (!skip_long).then(|| end_to_end(&e2e))),
        ),
        (
            9,
            "reconstruction soundness",
            Box::new(move || Some(reconstruction(&obj_dirs))),
        ),
    ];

    let mut lines = BTreeMap::new();
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Some(Err(format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            None => format!("criterion {id:>2} {name}: SKIP (GEOSEG_SKIP_LONG=1)"),
            Some(Ok(d)) => format!("criterion {id:>2} {name}: PASS ({d}; {secs:.1}s)"),
            Some(Err(d)) => {
                failed += 1;
                format!("criterion {id:>2} {name}: FAIL ({d}; {secs:.1}s)")
            }
        };
        println!("{line}");
        lines.insert(id, line);
    }
    println!("\nacceptance summary");
    for line in lines.values() {
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
