//! Residual encoders truncated before global pooling.
//!
//! Parameter names follow the torchvision layout (`conv1`, `bn1`,
//! `layer{1..4}.{i}.conv{1,2,3}`, `downsample.{0,1}`) so ImageNet weights can
//! be loaded by name.

use candle_core::Tensor;

use super::layers::{max_pool_3x3_s2, BatchNorm, Conv2d};
use super::params::{ParamStore, Scope};
use super::{Backbone, NetworkError};

type Result<T> = std::result::Result<T, NetworkError>;

/// Encoder outputs at 1/4, 1/8, 1/16 and 1/32 of the input, finest first.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub maps: [Tensor; 4],
}

impl FeaturePyramid {
    /// Stage output for divisor 4, 8, 16 or 32.
    pub fn at_divisor(&self, divisor: usize) -> Option<&Tensor> {
        match divisor {
            4 => Some(&self.maps[0]),
            8 => Some(&self.maps[1]),
            16 => Some(&self.maps[2]),
            32 => Some(&self.maps[3]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Downsample {
    conv: Conv2d,
    bn: BatchNorm,
}

impl Downsample {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.bn.forward(&self.conv.forward(x)?, train)
    }
}

#[derive(Debug, Clone)]
enum Block {
    Basic {
        conv1: Conv2d,
        bn1: BatchNorm,
        conv2: Conv2d,
        bn2: BatchNorm,
        downsample: Option<Downsample>,
    },
    Bottleneck {
        conv1: Conv2d,
        bn1: BatchNorm,
        conv2: Conv2d,
        bn2: BatchNorm,
        conv3: Conv2d,
        bn3: BatchNorm,
        downsample: Option<Downsample>,
    },
}

impl Block {
    fn basic(store: &mut ParamStore, s: &Scope, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        Ok(Block::Basic {
            conv1: Conv2d::new(store, &s.pp("conv1"), cin, cout, 3, stride, false)?,
            bn1: BatchNorm::new(store, &s.pp("bn1"), cout)?,
            conv2: Conv2d::new(store, &s.pp("conv2"), cout, cout, 3, 1, false)?,
            bn2: BatchNorm::new(store, &s.pp("bn2"), cout)?,
            downsample: downsample(store, s, cin, cout, stride)?,
        })
    }

    fn bottleneck(store: &mut ParamStore, s: &Scope, cin: usize, width: usize, stride: usize) -> Result<Self> {
        let cout = width * 4;
        Ok(Block::Bottleneck {
            conv1: Conv2d::new(store, &s.pp("conv1"), cin, width, 1, 1, false)?,
            bn1: BatchNorm::new(store, &s.pp("bn1"), width)?,
            conv2: Conv2d::new(store, &s.pp("conv2"), width, width, 3, stride, false)?,
            bn2: BatchNorm::new(store, &s.pp("bn2"), width)?,
            conv3: Conv2d::new(store, &s.pp("conv3"), width, cout, 1, 1, false)?,
            bn3: BatchNorm::new(store, &s.pp("bn3"), cout)?,
            downsample: downsample(store, s, cin, cout, stride)?,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (out, downsample) = match self {
            Block::Basic {
                conv1,
                bn1,
                conv2,
                bn2,
                downsample,
            } => {
                let y = bn1.forward(&conv1.forward(x)?, train)?.relu()?;
                (bn2.forward(&conv2.forward(&y)?, train)?, downsample)
            }
            Block::Bottleneck {
                conv1,
                bn1,
                conv2,
                bn2,
                conv3,
                bn3,
                downsample,
            } => {
                let y = bn1.forward(&conv1.forward(x)?, train)?.relu()?;
                let y = bn2.forward(&conv2.forward(&y)?, train)?.relu()?;
                (bn3.forward(&conv3.forward(&y)?, train)?, downsample)
            }
        };
        let identity = match downsample {
            Some(d) => d.forward(x, train)?,
            None => x.clone(),
        };
        Ok((out + identity)?.relu()?)
    }
}

fn downsample(store: &mut ParamStore, s: &Scope, cin: usize, cout: usize, stride: usize) -> Result<Option<Downsample>> {
    if stride == 1 && cin == cout {
        return Ok(None);
    }
    Ok(Some(Downsample {
        conv: Conv2d::new(store, &s.pp("downsample.0"), cin, cout, 1, stride, false)?,
        bn: BatchNorm::new(store, &s.pp("downsample.1"), cout)?,
    }))
}

#[derive(Debug, Clone)]
pub struct Encoder {
    backbone: Backbone,
    conv1: Conv2d,
    bn1: BatchNorm,
    stages: Vec<Vec<Block>>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, scope: &Scope, backbone: Backbone) -> Result<Self> {
        let (stem, depths, bottleneck): (usize, [usize; 4], bool) = match backbone {
            Backbone::Res50 => (64, [3, 4, 6, 3], true),
            Backbone::Res101 => (64, [3, 4, 23, 3], true),
            Backbone::Toy => (16, [1, 1, 1, 1], false),
        };
        let conv1 = Conv2d::new(store, &scope.pp("conv1"), 3, stem, 7, 2, false)?;
        let bn1 = BatchNorm::new(store, &scope.pp("bn1"), stem)?;
        let outputs = backbone.channels();
        let mut cin = stem;
        let mut stages = Vec::with_capacity(4);
        for (i, (&depth, &cout)) in depths.iter().zip(outputs.iter()).enumerate() {
            let layer = scope.pp(format!("layer{}", i + 1));
            let mut blocks = Vec::with_capacity(depth);
            for j in 0..depth {
                let stride = if j == 0 && i > 0 { 2 } else { 1 };
                let block = if bottleneck {
                    Block::bottleneck(store, &layer.pp(j), cin, cout / 4, stride)?
                } else {
                    Block::basic(store, &layer.pp(j), cin, cout, stride)?
                };
                blocks.push(block);
                cin = cout;
            }
            stages.push(blocks);
        }
        Ok(Self {
            backbone,
            conv1,
            bn1,
            stages,
        })
    }

    pub fn backbone(&self) -> Backbone {
        self.backbone
    }

    /// Runs the encoder on a `(B, 3, H, W)` batch; H and W must be multiples of 32.
    pub fn forward(&self, image: &Tensor, train: bool) -> Result<FeaturePyramid> {
        let (_, c, h, w) = image.dims4()?;
        if c != 3 {
            return Err(NetworkError::BadShape(format!("expected 3 image channels, found {c}")));
        }
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(NetworkError::BadShape(format!(
                "image {h}x{w} is not divisible by 32"
            )));
        }
        let x = self.bn1.forward(&self.conv1.forward(image)?, train)?.relu()?;
        let mut x = max_pool_3x3_s2(&x)?;
        let mut maps = Vec::with_capacity(4);
        for blocks in &self.stages {
            for block in blocks {
                x = block.forward(&x, train)?;
            }
            maps.push(x.clone());
        }
        let maps: [Tensor; 4] = maps.try_into().expect("four stages");
        Ok(FeaturePyramid { maps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ParamGroup;
    use candle_core::{DType, Device};

    fn encoder(backbone: Backbone) -> (ParamStore, Encoder) {
        let mut store = ParamStore::new(DType::F32, 1);
        let enc = Encoder::new(&mut store, &Scope::root("encoder", ParamGroup::Encoder), backbone).unwrap();
        (store, enc)
    }

    #[test]
    fn toy_pyramid_sizes() {
        let (_, enc) = encoder(Backbone::Toy);
        let x = Tensor::zeros((1, 3, 64, 64), DType::F32, &Device::Cpu).unwrap();
        let p = enc.forward(&x, false).unwrap();
        let dims: Vec<_> = p.maps.iter().map(|m| m.dims().to_vec()).collect();
        assert_eq!(
            dims,
            vec![vec![1, 16, 16, 16], vec![1, 32, 8, 8], vec![1, 64, 4, 4], vec![1, 128, 2, 2]]
        );
    }

    #[test]
    fn rejects_indivisible_input() {
        let (_, enc) = encoder(Backbone::Toy);
        let x = Tensor::zeros((1, 3, 63, 64), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(enc.forward(&x, false), Err(NetworkError::BadShape(_))));
    }

    #[test]
    fn res50_parameter_count_matches_reference() {
        // torchvision resnet50 without the fc head: 25_557_032 - 2048*1000 - 1000
        let (store, _) = encoder(Backbone::Res50);
        assert_eq!(store.trainable_count(), 23_508_032);
        assert!(store.get("encoder.layer4.2.conv3.weight").is_some());
        assert!(store.get("encoder.layer1.0.downsample.1.running_var").is_some());
    }

    #[test]
    fn res101_has_twenty_three_third_stage_blocks() {
        let (store, _) = encoder(Backbone::Res101);
        assert!(store.get("encoder.layer3.22.conv1.weight").is_some());
        assert!(store.get("encoder.layer3.23.conv1.weight").is_none());
    }
}
