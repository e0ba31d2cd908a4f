use serde::{Deserialize, Serialize};

use super::{LidarMap, DEPTH_CHANNEL, INTENSITY_CHANNEL, MASK_CHANNEL};

/// Bilateral hole filling parameters. Off unless explicitly requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensifyConfig {
    /// Spatial Gaussian sigma, pixels.
    pub spatial_sigma: f64,
    /// Depth Gaussian sigma, meters.
    pub range_sigma: f64,
    /// Neighbourhood radius (Euclidean), pixels.
    pub radius: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            spatial_sigma: 1.5,
            range_sigma: 1.0,
            radius: 2,
        }
    }
}

/// Fills empty cells from occupied neighbours within `radius`.
///
/// Each neighbour is weighted by `exp(−d²/2σ_s²)·exp(−Δz²/2σ_r²)` where `Δz`
/// is its depth minus the spatially weighted mean depth of all neighbours.
/// Occupied cells are copied through untouched.
pub fn densify_bilateral(map: &LidarMap, config: &DensifyConfig) -> LidarMap {
    let mut out = map.clone();
    let (h, w, _) = map.grid.dim();
    let r = config.radius as isize;
    let r2 = (config.radius * config.radius) as isize;
    let two_ss = 2.0 * config.spatial_sigma * config.spatial_sigma;
    let two_rs = 2.0 * config.range_sigma * config.range_sigma;

    let mut neighbours: Vec<(f64, f64, f64)> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if map.grid[(row, col, MASK_CHANNEL)] > 0.5 {
                continue;
            }
            neighbours.clear();
            for dr in -r..=r {
                for dc in -r..=r {
                    let d2 = dr * dr + dc * dc;
                    if d2 > r2 {
                        continue;
                    }
                    let (nr, nc) = (row as isize + dr, col as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if map.grid[(nr, nc, MASK_CHANNEL)] > 0.5 {
                        let spatial = (-(d2 as f64) / two_ss).exp();
                        let depth = map.grid[(nr, nc, DEPTH_CHANNEL)] as f64 * map.d_max;
                        let intensity = map.grid[(nr, nc, INTENSITY_CHANNEL)] as f64;
                        neighbours.push((spatial, depth, intensity));
                    }
                }
            }
            if neighbours.is_empty() {
                continue;
            }
            let spatial_sum: f64 = neighbours.iter().map(|n| n.0).sum();
            let reference = neighbours.iter().map(|n| n.0 * n.1).sum::<f64>() / spatial_sum;
            let (mut wsum, mut dsum, mut isum) = (0.0, 0.0, 0.0);
            for &(spatial, depth, intensity) in &neighbours {
                let dz = depth - reference;
                let weight = spatial * (-(dz * dz) / two_rs).exp();
                wsum += weight;
                dsum += weight * depth;
                isum += weight * intensity;
            }
            if wsum <= 0.0 {
                continue;
            }
            out.grid[(row, col, DEPTH_CHANNEL)] = (dsum / wsum / map.d_max) as f32;
            out.grid[(row, col, INTENSITY_CHANNEL)] = (isum / wsum) as f32;
            out.grid[(row, col, MASK_CHANNEL)] = 1.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::ImageSize;
    use proptest::prelude::*;

    fn blank(h: usize, w: usize) -> LidarMap {
        LidarMap::zeros(ImageSize::new(h, w), 1.0, ImageSize::new(h, w), 80.0)
    }

    fn set(map: &mut LidarMap, r: usize, c: usize, depth_m: f64, intensity: f32) {
        map.grid[(r, c, DEPTH_CHANNEL)] = (depth_m / map.d_max) as f32;
        map.grid[(r, c, INTENSITY_CHANNEL)] = intensity;
        map.grid[(r, c, MASK_CHANNEL)] = 1.0;
    }

    #[test]
    fn fully_occupied_is_fixpoint() {
        let mut map = blank(3, 4);
        for r in 0..3 {
            for c in 0..4 {
                set(&mut map, r, c, 5.0 + (r * 4 + c) as f64, 0.1);
            }
        }
        assert_eq!(densify_bilateral(&map, &DensifyConfig::default()), map);
    }

    #[test]
    fn single_source_fills_four_neighbours() {
        let mut map = blank(3, 3);
        set(&mut map, 1, 1, 12.0, 0.4);
        let cfg = DensifyConfig { radius: 1, ..DensifyConfig::default() };
        let out = densify_bilateral(&map, &cfg);
        for (r, c) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert_eq!(out.grid[(r, c, MASK_CHANNEL)], 1.0);
            assert_eq!(out.grid[(r, c, DEPTH_CHANNEL)], map.grid[(1, 1, DEPTH_CHANNEL)]);
            assert_eq!(out.grid[(r, c, INTENSITY_CHANNEL)], 0.4);
        }
        for (r, c) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(out.grid[(r, c, MASK_CHANNEL)], 0.0);
        }
    }

    #[test]
    fn range_weight_favours_consistent_depths() {
        // two near sources at 10 m, one at 40 m: the fill leans to 10 m
        let mut map = blank(1, 5);
        set(&mut map, 0, 0, 10.0, 0.0);
        set(&mut map, 0, 1, 10.0, 0.0);
        set(&mut map, 0, 3, 40.0, 0.0);
        let out = densify_bilateral(&map, &DensifyConfig { radius: 2, spatial_sigma: 1.5, range_sigma: 5.0 });
        let filled = out.depth_meters(0, 2).unwrap();
        assert!(filled < 20.0, "{filled}");
    }

    proptest! {
        #[test]
        fn occupied_cells_untouched(cells in prop::collection::vec((0usize..6, 0usize..8, 1.0f64..70.0, 0.0f32..1.0), 0..20)) {
            let mut map = blank(6, 8);
            for &(r, c, d, i) in &cells {
                set(&mut map, r, c, d, i);
            }
            let out = densify_bilateral(&map, &DensifyConfig::default());
            for r in 0..6 {
                for c in 0..8 {
                    if map.grid[(r, c, MASK_CHANNEL)] > 0.5 {
                        for ch in 0..3 {
                            prop_assert_eq!(out.grid[(r, c, ch)].to_bits(), map.grid[(r, c, ch)].to_bits());
                        }
                    } else if out.grid[(r, c, MASK_CHANNEL)] == 0.0 {
                        prop_assert_eq!(out.grid[(r, c, DEPTH_CHANNEL)], 0.0);
                    }
                }
            }
        }
    }
}
