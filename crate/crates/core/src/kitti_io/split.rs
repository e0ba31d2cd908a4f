use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Size of the KITTI ROAD training set.
const KITTI_TRAINING_FRAMES: usize = 289;
/// Training share of the KITTI ROAD training set; the remainder validates.
const KITTI_TRAIN_FRAMES: usize = 240;
const TRAIN_FRACTION: f64 = 0.83;

/// Seeded shuffle into `(train, validation)` ids.
///
/// The 289-frame KITTI training set splits 240/49; other sizes keep
/// `floor(0.83·N)` for training, with at least one frame on each side.
pub fn split_dataset<T: Clone>(frames: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut shuffled = frames.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = frames.len();
    let n_train = match n {
        KITTI_TRAINING_FRAMES => KITTI_TRAIN_FRAMES,
        0 | 1 => n,
        _ => ((TRAIN_FRACTION * n as f64).floor() as usize).clamp(1, n - 1),
    };
    let val = shuffled.split_off(n_train);
    (shuffled, val)
}
