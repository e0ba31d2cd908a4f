use crate::kitti_io::ImageSize;

use super::{LidarMap, ProjectedPoint, DEPTH_CHANNEL, INTENSITY_CHANNEL, MASK_CHANNEL};

/// Z-buffered rasterization into an `H×W` LiDAR map.
///
/// Point `(u, v)` lands in cell `(floor(v), floor(u))`; the smallest depth
/// wins and exact ties keep the earlier point. Points outside the grid or
/// beyond `d_max` are skipped.
pub fn rasterize(points: &[ProjectedPoint], height: usize, width: usize, d_max: f64) -> LidarMap {
    let size = ImageSize::new(height, width);
    let mut map = LidarMap::zeros(size, 1.0, size, d_max);
    let mut best = vec![f64::INFINITY; height * width];
    for p in points {
        if !(p.u >= 0.0 && p.v >= 0.0 && p.depth > 0.0 && p.depth <= d_max) {
            continue;
        }
        let (row, col) = (p.v.floor() as usize, p.u.floor() as usize);
        if row >= height || col >= width {
            continue;
        }
        let idx = row * width + col;
        if p.depth < best[idx] {
            best[idx] = p.depth;
            map.grid[(row, col, DEPTH_CHANNEL)] = (p.depth / d_max) as f32;
            map.grid[(row, col, INTENSITY_CHANNEL)] = p.intensity as f32;
            map.grid[(row, col, MASK_CHANNEL)] = 1.0;
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(u: f64, v: f64, depth: f64, intensity: f64) -> ProjectedPoint {
        ProjectedPoint { u, v, depth, intensity }
    }

    #[test]
    fn empty_points() {
        let map = rasterize(&[], 4, 5, 80.0);
        assert!(map.grid.iter().all(|&v| v == 0.0));
        assert_eq!(map.size(), ImageSize::new(4, 5));
    }

    #[test]
    fn nearest_depth_wins() {
        let map = rasterize(&[pt(1.2, 0.5, 9.0, 0.9), pt(1.7, 0.1, 4.0, 0.2)], 2, 3, 80.0);
        assert_eq!(map.grid[(0, 1, DEPTH_CHANNEL)], (4.0f64 / 80.0) as f32);
        assert_eq!(map.grid[(0, 1, INTENSITY_CHANNEL)], 0.2);
        assert_eq!(map.occupied_cells(), 1);
    }

    #[test]
    fn exact_tie_keeps_first() {
        let map = rasterize(&[pt(0.1, 0.1, 5.0, 0.3), pt(0.9, 0.9, 5.0, 0.7)], 1, 1, 80.0);
        assert_eq!(map.grid[(0, 0, INTENSITY_CHANNEL)], 0.3);
    }

    #[test]
    fn beyond_range_skipped() {
        let map = rasterize(&[pt(0.5, 0.5, 81.0, 0.3)], 1, 1, 80.0);
        assert_eq!(map.occupied_cells(), 0);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pts in prop::collection::vec((0.0f64..6.0, 0.0f64..4.0, 0.5f64..70.0, 0.0f64..1.0), 0..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let points: Vec<_> = pts.iter().map(|&(u, v, d, i)| pt(u, v, d, i)).collect();
            let mut shuffled = points.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(rasterize(&points, 4, 6, 80.0), rasterize(&shuffled, 4, 6, 80.0));
        }

        #[test]
        fn empty_cells_are_zero(
            pts in prop::collection::vec((0.0f64..6.0, 0.0f64..4.0, 0.5f64..90.0, 0.0f64..1.0), 0..30),
        ) {
            let points: Vec<_> = pts.iter().map(|&(u, v, d, i)| pt(u, v, d, i)).collect();
            let map = rasterize(&points, 4, 6, 80.0);
            for r in 0..4 {
                for c in 0..6 {
                    if map.grid[(r, c, MASK_CHANNEL)] == 0.0 {
                        prop_assert_eq!(map.grid[(r, c, DEPTH_CHANNEL)], 0.0);
                        prop_assert_eq!(map.grid[(r, c, INTENSITY_CHANNEL)], 0.0);
                    } else {
                        let d = map.grid[(r, c, DEPTH_CHANNEL)];
                        prop_assert!(d > 0.0 && d <= 1.0);
                    }
                }
            }
        }
    }
}
