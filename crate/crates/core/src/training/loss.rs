use candle_core::{DType, Device, Tensor};

use crate::kitti_io::GroundTruth;
use crate::network::log_softmax_channels;

use super::TrainError;

/// Stacks masks into `(road, valid)` tensors of shape `(B, H, W)` holding 0/1.
pub fn label_tensors(labels: &[&GroundTruth], dtype: DType) -> Result<(Tensor, Tensor), TrainError> {
    let Some(first) = labels.first() else {
        return Err(TrainError::EmptyValidRegion);
    };
    let (h, w) = first.road.dim();
    let mut road = Vec::with_capacity(labels.len() * h * w);
    let mut valid = Vec::with_capacity(labels.len() * h * w);
    for gt in labels {
        if gt.road.dim() != (h, w) {
            return Err(TrainError::InvalidConfig(format!(
                "label sizes differ within a batch: {:?} vs {:?}",
                gt.road.dim(),
                (h, w)
            )));
        }
        road.extend(gt.road.iter().map(|&r| r as u8 as f32));
        valid.extend(gt.valid.iter().map(|&v| v as u8 as f32));
    }
    let shape = (labels.len(), h, w);
    Ok((
        Tensor::from_vec(road, shape, &Device::Cpu)?.to_dtype(dtype)?,
        Tensor::from_vec(valid, shape, &Device::Cpu)?.to_dtype(dtype)?,
    ))
}

/// Mean two-class cross-entropy over valid pixels.
///
/// `logits` is `(B, 2, H, W)`; `road` and `valid` are `(B, H, W)` 0/1 maps.
pub fn masked_cross_entropy(logits: &Tensor, road: &Tensor, valid: &Tensor) -> Result<Tensor, TrainError> {
    let (b, c, h, w) = logits.dims4()?;
    if c != 2 || road.dims() != [b, h, w] || valid.dims() != [b, h, w] {
        return Err(TrainError::InvalidConfig(format!(
            "loss inputs disagree: logits {:?}, road {:?}, valid {:?}",
            logits.dims(),
            road.dims(),
            valid.dims()
        )));
    }
    let count = valid.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?;
    if count <= 0.0 {
        return Err(TrainError::EmptyValidRegion);
    }
    let logp = log_softmax_channels(logits)?;
    let lp_bg = logp.narrow(1, 0, 1)?.squeeze(1)?;
    let lp_road = logp.narrow(1, 1, 1)?.squeeze(1)?;
    let road = road.to_dtype(logits.dtype())?;
    let valid = valid.to_dtype(logits.dtype())?;
    let picked = ((&road * &lp_road)? + ((1.0 - &road)? * &lp_bg)?)?;
    Ok(((picked * valid)?.sum_all()?.neg()? / count)?)
}
