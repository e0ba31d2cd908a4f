//! Seeded synthetic road scenes with consistent image, LiDAR and labels.
//!
//! The scene is a flat road strip on the ground plane, bordered by raised
//! terrain and building facades, seen by a forward camera mounted below a
//! roof LiDAR (KITTI axis conventions: LiDAR x forward, y left, z up).
//! The road label is every pixel whose footprint touches the image of the
//! strip, so each road return lands on a labelled pixel.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Vector2, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    CalibrationSet, CameraIntrinsics, Category, GroundTruth, ImageSize, KittiError, LidarPoint,
    PointCloud, RigidTransform, Sample,
};

/// Height of road-surface returns in the LiDAR frame (exact in `f32`).
pub const SYNTH_GROUND_Z: f64 = -1.75;
const TERRAIN_Z: f64 = -1.5;
const ROAD_NEAR_X: f64 = 1.0;

const ROAD_POINTS: usize = 4000;
const TERRAIN_POINTS: usize = 4000;
const WALL_POINTS: usize = 1500;

struct Scene {
    lateral_offset: f64,
    half_width: f64,
    far_x: f64,
    wall_gap: f64,
    road_gray: f64,
    terrain_rgb: [f64; 3],
}

impl Scene {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            lateral_offset: rng.random_range(-1.5..1.5),
            half_width: rng.random_range(2.5..5.0),
            far_x: rng.random_range(22.0..45.0),
            wall_gap: rng.random_range(2.0..6.0),
            road_gray: rng.random_range(85.0..125.0),
            terrain_rgb: [
                rng.random_range(60.0..100.0),
                rng.random_range(100.0..140.0),
                rng.random_range(40.0..70.0),
            ],
        }
    }

    fn on_road(&self, x: f64, y: f64) -> bool {
        (ROAD_NEAR_X..=self.far_x).contains(&x) && (y - self.lateral_offset).abs() <= self.half_width
    }
}

fn synthetic_calibration(size: ImageSize) -> CalibrationSet {
    let (h, w) = (size.height as f64, size.width as f64);
    let f = 0.55 * w;
    let intrinsics = CameraIntrinsics::new(f, f, 0.5 * w, 0.4 * h).expect("positive focal length");
    // camera axes: x right, y down, z forward
    let rotation = Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    );
    let lidar_to_cam = RigidTransform::new(rotation, Vector3::new(0.02, -0.08, -0.27))
        .expect("axis permutation is a rotation");
    CalibrationSet {
        intrinsics,
        lidar_to_cam,
        image_size: size,
    }
}

/// Builds a deterministic synthetic frame of the given size.
pub fn make_synthetic_sample(seed: u64, size: (usize, usize)) -> Result<Sample, KittiError> {
    let size = ImageSize::new(size.0, size.1);
    if size.height == 0 || size.width == 0 || !size.divisible_by(32) {
        return Err(KittiError::BadSize {
            height: size.height,
            width: size.width,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(&mut rng);
    let calib = synthetic_calibration(size);

    let road_polygon = road_polygon(&scene, &calib);
    let road = Array2::from_shape_fn((size.height, size.width), |(r, c)| {
        square_meets_polygon(c as f64, r as f64, &road_polygon)
    });
    let valid = Array2::from_elem((size.height, size.width), true);
    let image = render_image(&scene, &calib, &road, &mut rng);
    let cloud = sample_cloud(&scene, &mut rng);

    Ok(Sample {
        id: format!("synth_{seed:06}"),
        image,
        cloud,
        calib,
        ground_truth: Some(GroundTruth::new(road, valid)?),
        category: Category::Synth,
    })
}

fn project(calib: &CalibrationSet, p: Vector3<f64>) -> Vector2<f64> {
    let c = calib.lidar_to_cam.apply(&p);
    let k = &calib.intrinsics;
    Vector2::new(k.fx * c.x / c.z + k.skew * c.y / c.z + k.cx, k.fy * c.y / c.z + k.cy)
}

/// Image of the road strip; all corners lie in front of the camera.
fn road_polygon(scene: &Scene, calib: &CalibrationSet) -> [Vector2<f64>; 4] {
    let (o, hw) = (scene.lateral_offset, scene.half_width);
    [
        (ROAD_NEAR_X, o + hw),
        (scene.far_x, o + hw),
        (scene.far_x, o - hw),
        (ROAD_NEAR_X, o - hw),
    ]
    .map(|(x, y)| project(calib, Vector3::new(x, y, SYNTH_GROUND_Z)))
}

/// Separating-axis test between the unit pixel square at `(x0, y0)` and a
/// convex polygon. Touching counts as intersecting.
fn square_meets_polygon(x0: f64, y0: f64, poly: &[Vector2<f64>; 4]) -> bool {
    let square = [
        Vector2::new(x0, y0),
        Vector2::new(x0 + 1.0, y0),
        Vector2::new(x0 + 1.0, y0 + 1.0),
        Vector2::new(x0, y0 + 1.0),
    ];
    let separated = |axis: Vector2<f64>| {
        let span = |pts: &[Vector2<f64>]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = axis.dot(p);
                (lo.min(d), hi.max(d))
            })
        };
        let (a_lo, a_hi) = span(&square);
        let (b_lo, b_hi) = span(poly);
        a_hi < b_lo || b_hi < a_lo
    };
    let mut axes = vec![Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
    for i in 0..poly.len() {
        let e = poly[(i + 1) % poly.len()] - poly[i];
        axes.push(Vector2::new(-e.y, e.x));
    }
    !axes.into_iter().any(separated)
}

fn render_image(scene: &Scene, calib: &CalibrationSet, road: &Array2<bool>, rng: &mut ChaCha8Rng) -> RgbImage {
    let k = calib.intrinsics;
    let cam_to_lidar_rot = calib.lidar_to_cam.rotation().transpose();
    let cam_centre = -(cam_to_lidar_rot * calib.lidar_to_cam.translation());
    let (h, w) = road.dim();
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let (u, v) = (c as f64 + 0.5, r as f64 + 0.5);
            let ray_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let ray = cam_to_lidar_rot * ray_cam;
            let noise: f64 = rng.random_range(-12.0..12.0);
            let rgb = if road[(r, c)] {
                let g = scene.road_gray + noise;
                [g, g, g + 4.0]
            } else if ray.z < -1e-6 && (TERRAIN_Z - cam_centre.z) / ray.z < 150.0 {
                let t = scene.terrain_rgb;
                [t[0] + noise, t[1] + noise, t[2] + noise]
            } else {
                let fade = 30.0 * v / h as f64;
                [150.0 + fade + noise, 190.0 + fade + noise, 235.0 + noise]
            };
            img.put_pixel(c as u32, r as u32, Rgb(rgb.map(|x| x.round().clamp(0.0, 255.0) as u8)));
        }
    }
    img
}

fn sample_cloud(scene: &Scene, rng: &mut ChaCha8Rng) -> PointCloud {
    let mut points = Vec::with_capacity(ROAD_POINTS + TERRAIN_POINTS + WALL_POINTS);
    let (o, hw) = (scene.lateral_offset, scene.half_width);

    while points.len() < ROAD_POINTS {
        let x = rng.random_range(ROAD_NEAR_X..scene.far_x);
        let y = rng.random_range(o - hw..o + hw);
        let intensity = rng.random_range(0.1..0.3);
        points.push(LidarPoint::new(x, y, SYNTH_GROUND_Z, intensity));
    }

    let lateral_extent = hw + scene.wall_gap;
    let mut terrain = 0;
    while terrain < TERRAIN_POINTS {
        let x = rng.random_range(ROAD_NEAR_X..scene.far_x + 30.0);
        let y = rng.random_range(o - lateral_extent..o + lateral_extent);
        if scene.on_road(x, y) {
            continue;
        }
        let intensity = rng.random_range(0.4..0.7);
        points.push(LidarPoint::new(x, y, TERRAIN_Z, intensity));
        terrain += 1;
    }

    for _ in 0..WALL_POINTS {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = rng.random_range(ROAD_NEAR_X..scene.far_x + 30.0);
        let z = rng.random_range(TERRAIN_Z..TERRAIN_Z + 4.0);
        let intensity = rng.random_range(0.6..0.9);
        points.push(LidarPoint::new(x, o + side * lateral_extent, z, intensity));
    }

    PointCloud::new(points)
}
