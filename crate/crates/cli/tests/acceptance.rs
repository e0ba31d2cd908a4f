//! Desk-scale acceptance checks, one test per criterion. Each prints a
//! PASS/FAIL line with its measured runtime and budget.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor};
use nalgebra::{Rotation3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadfuse::evaluation::{
    ablation_report, average_precision, basic_metrics, confusion, confusion_at_threshold, max_f, AblationSpec,
    ConfusionCounts, ThresholdSweep,
};
use roadfuse::geometry::{
    build_pyramid, project_points, rasterize, reproject_scaled, ProjectedPoint, PyramidScale, DEPTH_CHANNEL,
    INTENSITY_CHANNEL, MASK_CHANNEL,
};
use roadfuse::kitti_io::{
    make_synthetic_sample, CameraIntrinsics, GroundTruth, ImageSize, LidarPoint, PointCloud, RigidTransform,
    SYNTH_GROUND_Z,
};
use roadfuse::network::{FusionNet, ModelConfig, Precision};
use roadfuse::training::{label_tensors, masked_cross_entropy, prepare_all, prepare_sample, train_prepared};
use roadfuse::{Backbone, RfuConfig, TrainConfig};
use roadfuse_cli::{cmd_eval, cmd_synth, cmd_train, ConfigFile, EvalSubset, Overrides, RunConfig, REPORT_JSON};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line (bypassing libtest capture) and fails the test
/// unless the check held within its runtime budget.
fn verdict(n: u32, name: &str, started: Instant, budget: Duration, ok: bool, detail: &str) {
    let elapsed = started.elapsed();
    let pass = ok && elapsed < budget;
    let line = format!(
        "acceptance criterion {n:>2} [{}] {name}: {detail} (runtime {elapsed:.2?}, budget {budget:?})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
    assert!(elapsed < budget, "criterion {n} ({name}) exceeded its budget: {elapsed:?}");
}

fn random_rigid(rng: &mut ChaCha8Rng) -> RigidTransform {
    let angles: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.2..0.2));
    // LiDAR (x fwd, y left, z up) to camera (x right, y down, z fwd), then a small wobble
    let axes = nalgebra::Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let wobble = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]);
    let t = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    RigidTransform::new(wobble.matrix() * axes, t).unwrap()
}

/// Scalar pinhole projection, written out without matrix types.
fn oracle_project(k: &CameraIntrinsics, t: &RigidTransform, p: &LidarPoint) -> (f64, f64, f64) {
    let r = t.rotation();
    let tr = t.translation();
    let (px, py, pz) = (p.x, p.y, p.z);
    let x = r[(0, 0)] * px + r[(0, 1)] * py + r[(0, 2)] * pz + tr[0];
    let y = r[(1, 0)] * px + r[(1, 1)] * py + r[(1, 2)] * pz + tr[1];
    let z = r[(2, 0)] * px + r[(2, 1)] * py + r[(2, 2)] * pz + tr[2];
    let u = (k.fx * x + k.skew * y) / z + k.cx;
    let v = k.fy * y / z + k.cy;
    (u, v, z)
}

/// Cloud of points placed in front of the camera at random pixels of the
/// interior of a `size` image.
fn cloud_in_view(rng: &mut ChaCha8Rng, k: &CameraIntrinsics, t: &RigidTransform, size: ImageSize, n: usize) -> PointCloud {
    let margin = 40.0;
    let points = (0..n)
        .map(|_| {
            let u = rng.random_range(margin..size.width as f64 - margin);
            let v = rng.random_range(margin..size.height as f64 - margin);
            let z = rng.random_range(2.0..70.0);
            let y = (v - k.cy) * z / k.fy;
            let x = ((u - k.cx) * z - k.skew * y) / k.fx;
            let cam = Vector3::new(x, y, z);
            let lidar = t.rotation().transpose() * (cam - t.translation());
            LidarPoint::new(lidar.x, lidar.y, lidar.z, rng.random_range(0.0..1.0))
        })
        .collect();
    PointCloud::new(points)
}

#[test]
fn geometry_matches_scalar_oracle() {
    let _guard = serial();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let size = ImageSize::new(384, 1248);
    let k = CameraIntrinsics::with_skew(721.5, 721.5, 609.6, 172.9, 0.0).unwrap();
    let t = random_rigid(&mut rng);
    let cloud = cloud_in_view(&mut rng, &k, &t, size, 1000);

    let projected = project_points(&k, &t, &cloud, size);
    let mut max_px_err = 0.0f64;
    let mut count_ok = projected.len() == 1000;
    for (p, q) in cloud.points.iter().zip(&projected) {
        let (u, v, z) = oracle_project(&k, &t, p);
        max_px_err = max_px_err.max((u - q.u).abs()).max((v - q.v).abs());
        count_ok &= (z - q.depth).abs() < 1e-9;
    }

    let mut max_scale_err = 0.0f64;
    for lambda in [0.25, 0.125, 0.0625] {
        let scaled = reproject_scaled(&k, lambda, &t, &cloud, size).unwrap();
        count_ok &= scaled.len() == projected.len();
        for (s, p) in scaled.iter().zip(&projected) {
            max_scale_err = max_scale_err.max((s.u - lambda * p.u).abs()).max((s.v - lambda * p.v).abs());
        }
    }
    verdict(
        1,
        "geometry oracle",
        started,
        Duration::from_secs(5),
        count_ok && max_px_err < 1e-6 && max_scale_err < 1e-9,
        &format!("{} points, max pixel error {max_px_err:.2e}, max scaled error {max_scale_err:.2e}", projected.len()),
    );
}

#[test]
fn pyramid_sizes_are_exact() {
    let _guard = serial();
    let started = Instant::now();
    let sample = make_synthetic_sample(4, (96, 320)).unwrap();
    let pyramid = build_pyramid(&sample.cloud, &sample.calib, ImageSize::new(384, 1248), &PyramidScale::DEFAULT, 80.0)
        .unwrap();
    let sizes: Vec<(usize, usize)> = [PyramidScale::Quarter, PyramidScale::Eighth, PyramidScale::Sixteenth]
        .iter()
        .map(|&s| {
            let m = pyramid.get(s).unwrap();
            (m.size().height, m.size().width)
        })
        .collect();
    verdict(
        2,
        "pyramid sizes",
        started,
        Duration::from_secs(1),
        sizes == [(96, 312), (48, 156), (24, 78)],
        &format!("{sizes:?}"),
    );
}

#[test]
fn rasterization_matches_brute_force() {
    let _guard = serial();
    let started = Instant::now();
    let (h, w, d_max) = (20, 30, 50.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut points: Vec<ProjectedPoint> = (0..500)
        .map(|_| ProjectedPoint {
            u: rng.random_range(-3.0..w as f64 + 3.0),
            v: rng.random_range(-3.0..h as f64 + 3.0),
            depth: rng.random_range(0.5..60.0),
            intensity: rng.random_range(0.0..1.0),
        })
        .collect();
    // exact depth ties in a shared cell
    points[10] = ProjectedPoint { u: 5.2, v: 6.7, depth: 3.0, intensity: 0.1 };
    points[20] = ProjectedPoint { u: 5.9, v: 6.1, depth: 3.0, intensity: 0.9 };

    let map = rasterize(&points, h, w, d_max);
    let mut mismatches = 0;
    for r in 0..h {
        for c in 0..w {
            let mut best: Option<&ProjectedPoint> = None;
            for p in &points {
                let inside = p.u >= 0.0 && p.v >= 0.0 && (p.v.floor() as usize, p.u.floor() as usize) == (r, c);
                if inside && p.depth > 0.0 && p.depth <= d_max && best.is_none_or(|b| p.depth < b.depth) {
                    best = Some(p);
                }
            }
            let expected = match best {
                Some(p) => [(p.depth / d_max) as f32, p.intensity as f32, 1.0],
                None => [0.0; 3],
            };
            let got = [
                map.grid[(r, c, DEPTH_CHANNEL)],
                map.grid[(r, c, INTENSITY_CHANNEL)],
                map.grid[(r, c, MASK_CHANNEL)],
            ];
            if expected.map(f32::to_bits) != got.map(f32::to_bits) {
                mismatches += 1;
            }
        }
    }
    verdict(
        3,
        "rasterization z-buffer",
        started,
        Duration::from_secs(5),
        mismatches == 0,
        &format!("{} occupied cells, {mismatches} mismatches", map.occupied_cells()),
    );
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize), lo: f64, hi: f64) -> Tensor {
    let n = shape.0 * shape.1 * shape.2 * shape.3;
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(data, shape, &Device::Cpu).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, h: usize, w: usize) -> GroundTruth {
    let valid = Array2::from_shape_fn((h, w), |_| rng.random_bool(0.9));
    let road = Array2::from_shape_fn((h, w), |(r, c)| valid[(r, c)] && rng.random_bool(0.4));
    GroundTruth::new(road, valid).unwrap()
}

fn random_inputs(net: &FusionNet, rng: &mut ChaCha8Rng, b: usize, h: usize, w: usize) -> (Tensor, Vec<Tensor>) {
    let image = random_tensor(rng, (b, 3, h, w), -2.0, 2.0).to_dtype(net.dtype()).unwrap();
    let lidar = net
        .lidar_scales()
        .iter()
        .map(|s| {
            let d = s.divisor();
            random_tensor(rng, (b, 3, h / d, w / d), 0.0, 1.0).to_dtype(net.dtype()).unwrap()
        })
        .collect();
    (image, lidar)
}

#[test]
fn gradients_match_finite_differences() {
    let _guard = serial();
    let started = Instant::now();
    let config = ModelConfig {
        backbone: Backbone::Toy,
        n_rfu: 3,
        rfu: RfuConfig {
            fusion_channels: 8,
            ..RfuConfig::default()
        },
        precision: Precision::F64,
    };
    let net = FusionNet::new(config, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (image, lidar) = random_inputs(&net, &mut rng, 2, 32, 64);
    let labels = [random_labels(&mut rng, 32, 64), random_labels(&mut rng, 32, 64)];
    let (road, valid) = label_tensors(&[&labels[0], &labels[1]], DType::F64).unwrap();
    let loss_of = || {
        let out = net.forward(&image, &lidar, false).unwrap();
        masked_cross_entropy(&out.logits, &road, &valid).unwrap()
    };
    let grads = loss_of().backward().unwrap();

    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let names: Vec<String> = net
        .store()
        .entries()
        .iter()
        .filter(|e| e.name.contains(".lidar.") || e.name.contains(".crp."))
        .map(|e| e.name.clone())
        .collect();
    for name in &names {
        let var = &net.store().get(name).unwrap().var;
        let original = var.as_tensor().copy().unwrap();
        let shape = original.dims().to_vec();
        let weights = original.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let analytic = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_vec1::<f64>().unwrap())
            .unwrap_or_else(|| vec![0.0; weights.len()]);
        let largest = (0..weights.len())
            .max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()))
            .unwrap();
        let mut picks = vec![largest];
        picks.extend((0..4).map(|_| rng.random_range(0..weights.len())));
        for i in picks {
            let eval_at = |delta: f64| {
                let mut w = weights.clone();
                w[i] += delta;
                net.store()
                    .assign(name, &Tensor::from_vec(w, shape.as_slice(), &Device::Cpu).unwrap())
                    .unwrap();
                loss_of().to_scalar::<f64>().unwrap()
            };
            let numeric = (eval_at(eps) - eval_at(-eps)) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
        net.store().assign(name, &original).unwrap();
    }
    verdict(
        4,
        "gradient check",
        started,
        Duration::from_secs(60),
        checked > 0 && worst < 1e-3,
        &format!("{checked} entries over {} tensors, worst relative error {worst:.2e}", names.len()),
    );
}

#[test]
fn lidar_path_is_live() {
    let _guard = serial();
    let started = Instant::now();
    let net = FusionNet::new(ModelConfig::toy(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (h, w) = (64, 160);
    let (image, lidar) = random_inputs(&net, &mut rng, 2, h, w);
    let labels = [random_labels(&mut rng, h, w), random_labels(&mut rng, h, w)];
    let (road, valid) = label_tensors(&[&labels[0], &labels[1]], net.dtype()).unwrap();
    let out = net.forward(&image, &lidar, true).unwrap();
    let grads = masked_cross_entropy(&out.logits, &road, &valid).unwrap().backward().unwrap();

    let mut norms = Vec::new();
    for i in 0..net.config().n_rfu {
        let prefix = format!("decoder.rfu{i}.lidar.");
        let sq: f64 = net
            .store()
            .entries()
            .iter()
            .filter(|e| e.name.starts_with(&prefix))
            .map(|e| {
                grads
                    .get(e.var.as_tensor())
                    .map(|g| g.to_dtype(DType::F64).unwrap().sqr().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap())
                    .unwrap_or(0.0)
            })
            .sum();
        norms.push(sq.sqrt());
    }

    let base = net.forward(&image, &lidar, false).unwrap().logits;
    let mut changes = Vec::new();
    for (i, map) in lidar.iter().enumerate() {
        let (b, c, mh, mw) = map.dims4().unwrap();
        let mut values = map.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        values[(mh / 2) * mw + mw / 2] += 1.0;
        let mut perturbed = lidar.clone();
        perturbed[i] = Tensor::from_vec(values, (b, c, mh, mw), &Device::Cpu).unwrap();
        let logits = net.forward(&image, &perturbed, false).unwrap().logits;
        let diff = (logits - &base).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        changes.push(diff);
    }
    verdict(
        5,
        "LiDAR liveness",
        started,
        Duration::from_secs(30),
        norms.iter().all(|&n| n > 0.0) && changes.iter().all(|&d| d > 0.0),
        &format!(
            "lidar_block grad norms [{}], max logit change per RFU map [{}]",
            sci(norms.iter().copied()),
            sci(changes.iter().map(|&c| c as f64))
        ),
    );
}

fn sci(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn synthetic_set(seeds: std::ops::Range<u64>) -> Vec<roadfuse::Sample> {
    seeds.map(|s| make_synthetic_sample(s, (96, 320)).unwrap()).collect()
}

#[test]
fn toy_model_overfits_eight_samples() {
    let _guard = serial();
    let started = Instant::now();
    let config = TrainConfig::toy();
    let prepared = prepare_all(&synthetic_set(0..8), &config).unwrap();
    let net = FusionNet::new(ModelConfig::toy(), config.seed).unwrap();
    let outcome = train_prepared(&net, &prepared, &[], &config, None).unwrap();
    let counts = confusion_at_threshold(&net, &prepared, 0.5, config.batch_size).unwrap();
    let iou = basic_metrics(&counts).iou;
    verdict(
        6,
        "overfit sanity",
        started,
        Duration::from_secs(15 * 60),
        outcome.steps <= 500 && iou >= 0.90,
        &format!("{} steps, training IoU {:.4}", outcome.steps, iou),
    );
}

#[test]
fn more_rfus_do_not_hurt() {
    let _guard = serial();
    let started = Instant::now();
    let config = TrainConfig::toy();
    let train = prepare_all(&synthetic_set(0..8), &config).unwrap();
    let val = prepare_all(&synthetic_set(100..108), &config).unwrap();
    let specs: Vec<AblationSpec> = (1..=3)
        .map(|n_rfu| AblationSpec {
            backbone: Backbone::Toy,
            n_rfu,
        })
        .collect();
    let report = ablation_report(&specs, &[0, 1, 2], &train, &val, RfuConfig::toy(), Precision::F32, &config, None).unwrap();
    let table = report.to_table();
    let _ = std::io::stdout().lock().write_all(table.as_bytes());
    let iou1 = report.row(Backbone::Toy, 1).unwrap().mean_iou;
    let iou3 = report.row(Backbone::Toy, 3).unwrap().mean_iou;
    verdict(
        7,
        "ablation trend",
        started,
        Duration::from_secs(3600),
        iou3 >= iou1 - 0.02 && report.rows.len() == 3 && table.lines().count() == 5,
        &format!("mean val IoU 1 RFU {iou1:.4}, 3 RFUs {iou3:.4}"),
    );
}

/// Brute-force sweep over thresholds `k/256`: per-threshold (precision, recall).
fn oracle_curve(prob: &Array2<f32>, road: &Array2<bool>, valid: &Array2<bool>) -> Vec<(f64, f64)> {
    (1..=255)
        .map(|k| {
            let t = k as f64 / 256.0;
            let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
            for ((&p, &g), &v) in prob.iter().zip(road).zip(valid) {
                if !v {
                    continue;
                }
                match (p as f64 >= t, g) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fnn += 1.0,
                    _ => {}
                }
            }
            let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
            (div(tp, tp + fp), div(tp, tp + fnn))
        })
        .collect()
}

fn oracle_max_f(curve: &[(f64, f64)]) -> f64 {
    curve
        .iter()
        .map(|&(p, r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .fold(0.0, f64::max)
}

fn oracle_ap(curve: &[(f64, f64)], road: &Array2<bool>, valid: &Array2<bool>) -> f64 {
    let pos = road.iter().zip(valid).filter(|(&g, &v)| g && v).count() as f64;
    let total = valid.iter().filter(|&&v| v).count() as f64;
    let all = (if total == 0.0 { 0.0 } else { pos / total }, if pos == 0.0 { 0.0 } else { 1.0 });
    let mut points = curve.to_vec();
    points.push(all);
    (0..41)
        .map(|k| {
            let level = k as f64 / 40.0;
            points.iter().filter(|(_, r)| *r >= level).map(|&(p, _)| p).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 41.0
}

#[test]
fn metrics_match_oracles() {
    let _guard = serial();
    let started = Instant::now();
    let m = basic_metrics(&ConfusionCounts::new(3, 1, 4, 2));
    let hand = [
        (m.precision, 0.75),
        (m.recall, 0.6),
        (m.f_measure, 2.0 / 3.0),
        (m.accuracy, 0.7),
        (m.iou, 0.5),
    ];
    let hand_ok = hand.iter().all(|(a, b)| (a - b).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sweep_err = 0.0f64;
    for _ in 0..20 {
        let prob = Array2::from_shape_fn((16, 16), |_| rng.random::<f32>());
        let road = Array2::from_shape_fn((16, 16), |_| rng.random_bool(0.4));
        let valid = Array2::from_shape_fn((16, 16), |_| rng.random_bool(0.9));
        let curve = oracle_curve(&prob, &road, &valid);
        let f = max_f(&prob, &road, &valid, 255).unwrap().max_f;
        let ap = average_precision(&prob, &road, &valid, 255).unwrap();
        sweep_err = sweep_err.max((f - oracle_max_f(&curve)).abs());
        sweep_err = sweep_err.max((ap - oracle_ap(&curve, &road, &valid)).abs());
    }

    let mut additive = true;
    for _ in 0..100 {
        let prob = Array2::from_shape_fn((16, 16), |_| rng.random::<f32>());
        let pred = prob.mapv(|p| p >= 0.5);
        let road = Array2::from_shape_fn((16, 16), |_| rng.random_bool(0.5));
        let valid = Array2::from_shape_fn((16, 16), |_| rng.random_bool(0.8));
        let part = Array2::from_shape_fn((16, 16), |_| rng.random_bool(0.5));
        let a_valid = &valid & &part;
        let b_valid = &valid & &part.mapv(|x| !x);
        let a_road = &road & &a_valid;
        let b_road = &road & &b_valid;
        let whole_road = &road & &valid;
        let whole = confusion(&pred, &whole_road, &valid).unwrap();
        let split = confusion(&pred, &a_road, &a_valid).unwrap() + confusion(&pred, &b_road, &b_valid).unwrap();
        additive &= whole == split;
        let mut s_whole = ThresholdSweep::new(255);
        s_whole.accumulate(&prob, &whole_road, &valid).unwrap();
        let mut s_a = ThresholdSweep::new(255);
        s_a.accumulate(&prob, &a_road, &a_valid).unwrap();
        let mut s_b = ThresholdSweep::new(255);
        s_b.accumulate(&prob, &b_road, &b_valid).unwrap();
        s_a.merge(&s_b).unwrap();
        additive &= s_a.counts() == s_whole.counts();
    }
    verdict(
        8,
        "metrics oracle",
        started,
        Duration::from_secs(10),
        hand_ok && sweep_err < 1e-9 && additive,
        &format!("hand case {hand_ok}, max sweep error {sweep_err:.2e}, additivity over 100 partitions {additive}"),
    );
}

fn pipeline_once(root: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    let file = ConfigFile::parse("max_steps = 50\nval_every = 5").unwrap();
    let flags = Overrides {
        dataset_root: Some(root.join("data")),
        output_dir: Some(root.join("runs")),
        seed: Some(3),
        ..Default::default()
    };
    let config = RunConfig::resolve(&file, &flags).unwrap();
    cmd_synth(&config, 8, 0, ImageSize::new(96, 320)).unwrap();
    let trained = cmd_train(&config).unwrap();
    let checkpoint = trained.final_checkpoint.clone().unwrap();
    let evaluated = cmd_eval(&config, &checkpoint, EvalSubset::Val).unwrap();
    (
        std::fs::read(&trained.metrics).unwrap(),
        std::fs::read(evaluated.run_dir.join(REPORT_JSON)).unwrap(),
    )
}

#[test]
fn pipeline_is_deterministic() {
    let _guard = serial();
    let started = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (log_a, report_a) = pipeline_once(a.path());
    let (log_b, report_b) = pipeline_once(b.path());
    let steps = String::from_utf8_lossy(&log_a).lines().filter(|l| l.contains("\"train\"")).count();
    verdict(
        9,
        "pipeline determinism",
        started,
        Duration::from_secs(5 * 60),
        !log_a.is_empty() && log_a == log_b && report_a == report_b && steps == 50,
        &format!(
            "{steps} logged steps, metric logs identical {}, eval reports identical {}",
            log_a == log_b,
            report_a == report_b
        ),
    );
}

/// Ground-plane returns of `sample` that land on the road mask after the
/// sample is resized to `target`, as `(on_road, in_bounds)`.
fn road_points_after_resize(sample: &roadfuse::Sample, target: ImageSize) -> (usize, usize) {
    let prepared = prepare_sample(sample, target, &PyramidScale::DEFAULT, 80.0, None).unwrap();
    let road = &prepared.labels.as_ref().unwrap().road;
    let ground = PointCloud::new(sample.cloud.points.iter().filter(|p| p.z == SYNTH_GROUND_Z).copied().collect());
    let resized = sample.calib.resized(target);
    let projected = project_points(&resized.intrinsics, &resized.lidar_to_cam, &ground, target);
    let on_road = projected
        .iter()
        .filter(|p| road[(p.v.floor() as usize, p.u.floor() as usize)])
        .count();
    (on_road, projected.len())
}

#[test]
fn flips_invert_and_resizing_keeps_road_points() {
    let _guard = serial();
    let started = Instant::now();
    let mut flips_exact = true;
    for seed in 0..4 {
        let sample = make_synthetic_sample(seed, (96, 320)).unwrap();
        let prepared = prepare_sample(&sample, ImageSize::new(64, 160), &PyramidScale::DEFAULT, 80.0, None).unwrap();
        let twice = prepared.flipped().flipped();
        flips_exact &= prepared.image.iter().zip(twice.image.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        for (a, b) in prepared.pyramid.maps().zip(twice.pyramid.maps()) {
            flips_exact &= a.grid.iter().zip(b.grid.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        }
        flips_exact &= prepared.labels == twice.labels;
    }

    // a KITTI-like resize to the 384x1248 network input
    let (mut on_road, mut in_bounds) = (0, 0);
    for seed in 0..4 {
        let (on, total) = road_points_after_resize(&make_synthetic_sample(seed, (352, 1216)).unwrap(), ImageSize::new(384, 1248));
        on_road += on;
        in_bounds += total;
    }
    let kept = on_road as f64 / in_bounds.max(1) as f64;

    // exact 2x horizontal downsampling of the toy pipeline, reported only
    let (mut toy_on, mut toy_total) = (0, 0);
    for seed in 0..4 {
        let (on, total) = road_points_after_resize(&make_synthetic_sample(seed, (96, 320)).unwrap(), ImageSize::new(64, 160));
        toy_on += on;
        toy_total += total;
    }
    verdict(
        10,
        "augmentation involution",
        started,
        Duration::from_secs(10),
        flips_exact && in_bounds > 0 && kept >= 0.99,
        &format!(
            "double flip exact {flips_exact}, 352x1216->384x1248 keeps {on_road}/{in_bounds} road points ({:.2}%), \
             toy 96x320->64x160 keeps {toy_on}/{toy_total} ({:.2}%)",
            100.0 * kept,
            100.0 * toy_on as f64 / toy_total.max(1) as f64
        ),
    );
}
