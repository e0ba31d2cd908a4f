use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::geometry::{LidarMapPyramid, PyramidScale};

use super::backbone::Encoder;
use super::decoder::Decoder;
use super::layers::{resize_bilinear, softmax_channels};
use super::params::{ParamGroup, ParamStore, Scope};
use super::{Backbone, NetworkError, RfuConfig};

type Result<T> = std::result::Result<T, NetworkError>;

/// Floating-point precision of parameters and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub n_rfu: usize,
    pub rfu: RfuConfig,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    pub fn paper() -> Self {
        Self {
            backbone: Backbone::Res50,
            n_rfu: 3,
            rfu: RfuConfig::default(),
            precision: Precision::F32,
        }
    }

    pub fn toy() -> Self {
        Self {
            backbone: Backbone::Toy,
            n_rfu: 3,
            rfu: RfuConfig::toy(),
            precision: Precision::F32,
        }
    }
}

/// Per-pixel class scores for a batch, channel 0 non-road and 1 road.
#[derive(Debug, Clone)]
pub struct SegmentationOutput {
    /// `(B, 2, H, W)`.
    pub logits: Tensor,
    /// Softmax of `logits` over the class axis.
    pub probabilities: Tensor,
}

impl SegmentationOutput {
    /// Road probability map of every batch element.
    pub fn road_probability_maps(&self) -> Result<Vec<Array2<f32>>> {
        let (b, _, h, w) = self.probabilities.dims4()?;
        let road = self
            .probabilities
            .narrow(1, 1, 1)?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        Ok(road
            .chunks_exact(h * w)
            .take(b)
            .map(|c| Array2::from_shape_vec((h, w), c.to_vec()).expect("chunk size"))
            .collect())
    }
}

/// Image encoder plus RFU decoder.
#[derive(Debug)]
pub struct FusionNet {
    config: ModelConfig,
    store: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

impl FusionNet {
    /// Builds a network with seeded random parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.rfu.validate()?;
        let mut store = ParamStore::new(config.precision.dtype(), seed);
        let encoder = Encoder::new(&mut store, &Scope::root("encoder", ParamGroup::Encoder), config.backbone)?;
        let decoder = Decoder::new(
            &mut store,
            &Scope::root("decoder", ParamGroup::Decoder),
            config.backbone.channels(),
            config.n_rfu,
            &config.rfu,
        )?;
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// LiDAR map scales the decoder consumes, coarse to fine.
    pub fn lidar_scales(&self) -> &'static [PyramidScale] {
        self.decoder.scales()
    }

    /// `image` is `(B, 3, H, W)`; `lidar` holds one `(B, 3, H/s, W/s)` map per
    /// entry of [`Self::lidar_scales`].
    pub fn forward(&self, image: &Tensor, lidar: &[Tensor], train: bool) -> Result<SegmentationOutput> {
        let (_, _, h, w) = image.dims4()?;
        let image = image.to_dtype(self.dtype())?;
        let lidar = lidar
            .iter()
            .map(|t| t.to_dtype(self.dtype()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let features = self.encoder.forward(&image, train)?;
        let coarse = self.decoder.forward(&features, &lidar)?;
        let logits = resize_bilinear(&coarse, h, w)?;
        let probabilities = softmax_channels(&logits)?;
        Ok(SegmentationOutput { logits, probabilities })
    }

    /// Stacks CHW images and LiDAR pyramids into network input tensors.
    pub fn batch_inputs(&self, images: &[&Array3<f32>], pyramids: &[&LidarMapPyramid]) -> Result<(Tensor, Vec<Tensor>)> {
        if images.is_empty() || images.len() != pyramids.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} images for {} LiDAR pyramids",
                images.len(),
                pyramids.len()
            )));
        }
        let (c, h, w) = images[0].dim();
        let mut pixels = Vec::with_capacity(images.len() * c * h * w);
        for img in images {
            if img.dim() != (c, h, w) {
                return Err(NetworkError::ShapeMismatch(format!(
                    "image {:?} differs from {:?}",
                    img.dim(),
                    (c, h, w)
                )));
            }
            pixels.extend(img.iter().copied());
        }
        let image = Tensor::from_vec(pixels, (images.len(), c, h, w), &Device::Cpu)?.to_dtype(self.dtype())?;
        let mut lidar = Vec::with_capacity(self.lidar_scales().len());
        for &scale in self.lidar_scales() {
            let (mh, mw) = (h / scale.divisor(), w / scale.divisor());
            let mut values = Vec::with_capacity(images.len() * 3 * mh * mw);
            for pyr in pyramids {
                let map = pyr
                    .get(scale)
                    .ok_or_else(|| NetworkError::ShapeMismatch(format!("LiDAR pyramid lacks scale {scale}")))?;
                let size = map.size();
                if (size.height, size.width) != (mh, mw) {
                    return Err(NetworkError::ShapeMismatch(format!(
                        "LiDAR map at {scale} is {size}, expected {mh}x{mw}"
                    )));
                }
                values.extend(map.to_chw());
            }
            lidar.push(Tensor::from_vec(values, (images.len(), 3, mh, mw), &Device::Cpu)?.to_dtype(self.dtype())?);
        }
        Ok((image, lidar))
    }

    /// Forward pass in inference mode returning one road-probability map per input.
    pub fn predict(&self, images: &[&Array3<f32>], pyramids: &[&LidarMapPyramid]) -> Result<Vec<Array2<f32>>> {
        let (image, lidar) = self.batch_inputs(images, pyramids)?;
        self.forward(&image, &lidar, false)?.road_probability_maps()
    }
}
