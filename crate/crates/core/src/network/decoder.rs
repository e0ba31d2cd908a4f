//! LiDAR processing block, chained residual pooling and the RFU cascade.

use candle_core::Tensor;

use crate::geometry::PyramidScale;

use super::backbone::FeaturePyramid;
use super::layers::{max_pool_same, resize_bilinear, Conv2d};
use super::params::{ParamStore, Scope};
use super::{NetworkError, RfuConfig};

type Result<T> = std::result::Result<T, NetworkError>;

/// Scales visited by the RFU cascade, coarse to fine.
pub const RFU_SCHEDULE: [PyramidScale; 3] = [PyramidScale::Sixteenth, PyramidScale::Eighth, PyramidScale::Quarter];

/// Initial weight gain of CRP convolutions relative to unit variance.
const CRP_GAIN: f64 = 0.5;
/// Initial weight gain of the classifier, kept small so training starts near
/// uniform class probabilities.
const CLASSIFIER_GAIN: f64 = 0.05;

/// Stacked 3×3 convolutions with ReLU turning a 3-channel LiDAR map into D
/// feature channels.
#[derive(Debug, Clone)]
pub struct LidarBlock {
    convs: Vec<Conv2d>,
}

impl LidarBlock {
    pub fn new(store: &mut ParamStore, scope: &Scope, config: &RfuConfig) -> Result<Self> {
        let mut convs = Vec::with_capacity(config.lidar_block_layers);
        let mut cin = 3;
        for i in 0..config.lidar_block_layers {
            let d = config.fusion_channels;
            convs.push(Conv2d::new(store, &scope.pp(format!("conv{i}")), cin, d, 3, 1, true)?);
            cin = d;
        }
        Ok(Self { convs })
    }

    pub fn forward(&self, lmap: &Tensor) -> Result<Tensor> {
        let c = lmap.dims4()?.1;
        if c != 3 {
            return Err(NetworkError::BadShape(format!("LiDAR map must have 3 channels, found {c}")));
        }
        let mut x = lmap.clone();
        for conv in &self.convs {
            x = conv.forward(&x)?.relu()?;
        }
        Ok(x)
    }
}

/// Chained residual pooling with 1×1 convolutions.
#[derive(Debug, Clone)]
pub struct Crp {
    convs: Vec<Conv2d>,
    window: usize,
}

impl Crp {
    pub fn new(store: &mut ParamStore, scope: &Scope, config: &RfuConfig) -> Result<Self> {
        let d = config.fusion_channels;
        let convs = (0..config.crp_stages)
            .map(|i| Conv2d::scaled(store, &scope.pp(format!("conv{i}")), d, d, 1, false, CRP_GAIN))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            convs,
            window: config.crp_pool_window,
        })
    }

    pub fn stages(&self) -> &[Conv2d] {
        &self.convs
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut acc = x.clone();
        let mut path = x.clone();
        for conv in &self.convs {
            path = conv.forward(&max_pool_same(&path, self.window)?)?;
            acc = (acc + &path)?;
        }
        Ok(acc)
    }
}

/// Refined fusion unit: upsampled coarse features, same-scale encoder
/// features and LiDAR features summed, then refined by CRP.
#[derive(Debug, Clone)]
pub struct Rfu {
    prev_proj: Conv2d,
    skip_proj: Conv2d,
    lidar: LidarBlock,
    crp: Crp,
}

impl Rfu {
    pub fn new(
        store: &mut ParamStore,
        scope: &Scope,
        prev_channels: usize,
        skip_channels: usize,
        config: &RfuConfig,
    ) -> Result<Self> {
        let d = config.fusion_channels;
        Ok(Self {
            prev_proj: Conv2d::scaled(store, &scope.pp("prev_proj"), prev_channels, d, 1, true, 1.0)?,
            skip_proj: Conv2d::scaled(store, &scope.pp("skip_proj"), skip_channels, d, 1, true, 1.0)?,
            lidar: LidarBlock::new(store, &scope.pp("lidar"), config)?,
            crp: Crp::new(store, &scope.pp("crp"), config)?,
        })
    }

    pub fn lidar_block(&self) -> &LidarBlock {
        &self.lidar
    }

    pub fn crp(&self) -> &Crp {
        &self.crp
    }

    pub fn forward(&self, prev: &Tensor, skip: &Tensor, lmap: &Tensor) -> Result<Tensor> {
        let (pb, _, ph, pw) = prev.dims4()?;
        let (sb, _, sh, sw) = skip.dims4()?;
        let (lb, _, lh, lw) = lmap.dims4()?;
        if pb != sb || lb != sb {
            return Err(NetworkError::ShapeMismatch(format!("batch sizes {pb}, {sb}, {lb} differ")));
        }
        if 2 * ph != sh || 2 * pw != sw {
            return Err(NetworkError::ShapeMismatch(format!(
                "prev {ph}x{pw} is not half of skip {sh}x{sw}"
            )));
        }
        if (lh, lw) != (sh, sw) {
            return Err(NetworkError::ShapeMismatch(format!(
                "LiDAR map {lh}x{lw} does not match skip {sh}x{sw}"
            )));
        }
        let up = resize_bilinear(&self.prev_proj.forward(prev)?, sh, sw)?;
        let fused = ((up + self.skip_proj.forward(skip)?)? + self.lidar.forward(lmap)?)?;
        self.crp.forward(&fused)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    rfus: Vec<Rfu>,
    classifier: Conv2d,
}

impl Decoder {
    pub fn new(
        store: &mut ParamStore,
        scope: &Scope,
        encoder_channels: [usize; 4],
        n_rfu: usize,
        config: &RfuConfig,
    ) -> Result<Self> {
        if !(1..=3).contains(&n_rfu) {
            return Err(NetworkError::InvalidConfig(format!("n_rfu must be 1, 2 or 3, got {n_rfu}")));
        }
        config.validate()?;
        let mut prev = encoder_channels[3];
        let mut rfus = Vec::with_capacity(n_rfu);
        for i in 0..n_rfu {
            let skip = encoder_channels[2 - i];
            rfus.push(Rfu::new(store, &scope.pp(format!("rfu{i}")), prev, skip, config)?);
            prev = config.fusion_channels;
        }
        let classifier = Conv2d::scaled(store, &scope.pp("classifier"), config.fusion_channels, 2, 1, true, CLASSIFIER_GAIN)?;
        Ok(Self { rfus, classifier })
    }

    pub fn rfus(&self) -> &[Rfu] {
        &self.rfus
    }

    /// Scales the decoder consumes LiDAR maps at, coarse to fine.
    pub fn scales(&self) -> &'static [PyramidScale] {
        &RFU_SCHEDULE[..self.rfus.len()]
    }

    /// Class logits at the finest RFU scale.
    pub fn forward(&self, features: &FeaturePyramid, lidar: &[Tensor]) -> Result<Tensor> {
        if lidar.len() != self.rfus.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} LiDAR maps for {} RFUs",
                lidar.len(),
                self.rfus.len()
            )));
        }
        let mut x = features.maps[3].clone();
        for (i, (rfu, lmap)) in self.rfus.iter().zip(lidar).enumerate() {
            x = rfu.forward(&x, &features.maps[2 - i], lmap)?;
        }
        self.classifier.forward(&x)
    }
}
