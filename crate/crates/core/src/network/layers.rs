//! Differentiable building blocks on top of candle tensors (NCHW layout).

use candle_core::{DType, Device, Tensor};

use super::params::{Init, ParamStore, Scope};
use super::NetworkError;

type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    /// He-initialised convolution, for layers followed by a ReLU.
    pub fn new(
        store: &mut ParamStore,
        scope: &Scope,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        Self::with_init(
            store,
            scope,
            (in_channels, out_channels, kernel, stride, bias),
            Init::KaimingNormal { fan_in },
        )
    }

    /// Convolution with weights of standard deviation `gain / sqrt(fan_in)`.
    pub fn scaled(
        store: &mut ParamStore,
        scope: &Scope,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        bias: bool,
        gain: f64,
    ) -> Result<Self> {
        let fan_in = (in_channels * kernel * kernel) as f64;
        Self::with_init(
            store,
            scope,
            (in_channels, out_channels, kernel, 1, bias),
            Init::Normal {
                std: gain / fan_in.sqrt(),
            },
        )
    }

    fn with_init(
        store: &mut ParamStore,
        scope: &Scope,
        (in_channels, out_channels, kernel, stride, bias): (usize, usize, usize, usize, bool),
        init: Init,
    ) -> Result<Self> {
        let weight = scope.trainable(store, "weight", (out_channels, in_channels, kernel, kernel), init)?;
        let bias = if bias {
            Some(scope.trainable(store, "bias", out_channels, Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, b.dims1()?, 1, 1))?)?,
            None => y,
        })
    }
}

/// Batch normalisation whose running statistics are only refreshed when a
/// batch is large enough to estimate them.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    weight: Tensor,
    bias: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
/// Smallest batch for which batch statistics replace the running ones.
pub const MIN_BATCH_FOR_BN_STATS: usize = 8;

impl BatchNorm {
    pub fn new(store: &mut ParamStore, scope: &Scope, channels: usize) -> Result<Self> {
        Ok(Self {
            weight: scope.trainable(store, "weight", channels, Init::Ones)?,
            bias: scope.trainable(store, "bias", channels, Init::Zeros)?,
            running_mean: scope.buffer(store, "running_mean", channels, Init::Zeros)?,
            running_var: scope.buffer(store, "running_var", channels, Init::Ones)?,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (batch, c, _, _) = x.dims4()?;
        let shape = (1, c, 1, 1);
        if train && batch >= MIN_BATCH_FOR_BN_STATS {
            let mean = x.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
            let centred = x.broadcast_sub(&mean)?;
            let var = centred.sqr()?.mean_keepdim(0)?.mean_keepdim(2)?.mean_keepdim(3)?;
            let normed = centred.broadcast_div(&(var.clone() + BN_EPS)?.sqrt()?)?;
            let new_mean = ((self.running_mean.clone() * (1.0 - BN_MOMENTUM))?
                + (mean.detach().flatten_all()? * BN_MOMENTUM)?)?;
            let new_var = ((self.running_var.clone() * (1.0 - BN_MOMENTUM))?
                + (var.detach().flatten_all()? * BN_MOMENTUM)?)?;
            update_buffer(&self.running_mean, &new_mean)?;
            update_buffer(&self.running_var, &new_var)?;
            return Ok(normed
                .broadcast_mul(&self.weight.reshape(shape)?)?
                .broadcast_add(&self.bias.reshape(shape)?)?);
        }
        let inv_std = (self.running_var.detach() + BN_EPS)?.sqrt()?.recip()?;
        let scale = (&self.weight * &inv_std)?;
        let shift = (&self.bias - (self.running_mean.detach() * &scale)?)?;
        Ok(x.broadcast_mul(&scale.reshape(shape)?)?
            .broadcast_add(&shift.reshape(shape)?)?)
    }
}

fn update_buffer(buffer: &Tensor, value: &Tensor) -> Result<()> {
    // buffer handles are variable tensors, so this shares their storage
    let var = candle_core::Var::from_tensor(buffer)?;
    var.set(&value.to_dtype(buffer.dtype())?)?;
    Ok(())
}

/// Stride-1 max pooling over a `window × window` neighbourhood with output
/// size equal to input size. Edge replication stands in for `-∞` padding:
/// every window already contains the edge pixel it would replicate.
pub fn max_pool_same(x: &Tensor, window: usize) -> Result<Tensor> {
    if window <= 1 {
        return Ok(x.clone());
    }
    let left = (window - 1) / 2;
    let right = window - 1 - left;
    let (_, _, h, w) = x.dims4()?;
    let padded = x.pad_with_same(3, left, right)?;
    let mut rows = padded.narrow(3, 0, w)?;
    for i in 1..window {
        rows = rows.maximum(&padded.narrow(3, i, w)?)?;
    }
    let padded = rows.pad_with_same(2, left, right)?;
    let mut out = padded.narrow(2, 0, h)?;
    for i in 1..window {
        out = out.maximum(&padded.narrow(2, i, h)?)?;
    }
    Ok(out)
}

/// 3×3, stride-2, padding-1 max pooling (ResNet stem). Requires even H and W.
pub fn max_pool_3x3_s2(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NetworkError::BadShape(format!("stem pooling needs even size, got {h}x{w}")));
    }
    let pooled = max_pool_same(x, 3)?;
    Ok(pooled
        .reshape((b, c, h / 2, 2, w / 2, 2))?
        .narrow(3, 0, 1)?
        .narrow(5, 0, 1)?
        .reshape((b, c, h / 2, w / 2))?)
}

/// Row-stochastic interpolation matrix `(out, in)` for half-pixel-centred
/// bilinear resampling along one axis.
pub fn bilinear_matrix(input: usize, output: usize) -> Vec<f64> {
    let mut m = vec![0.0; output * input];
    let scale = input as f64 / output as f64;
    for o in 0..output {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        let frac = src - i0 as f64;
        m[o * input + i0] += 1.0 - frac;
        m[o * input + i1] += frac;
    }
    m
}

fn axis_matrix(input: usize, output: usize, dtype: DType) -> Result<Tensor> {
    // stored transposed so that `x · Mᵀ` resamples the last axis
    let m = Tensor::from_vec(bilinear_matrix(input, output), (output, input), &Device::Cpu)?;
    Ok(m.t()?.contiguous()?.to_dtype(dtype)?)
}

/// Differentiable bilinear resize to `(out_h, out_w)`, expressed as two
/// matrix products.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let dtype = x.dtype();
    let along_w = x
        .contiguous()?
        .reshape((b * c * h, w))?
        .matmul(&axis_matrix(w, out_w, dtype)?)?
        .reshape((b, c, h, out_w))?;
    let along_h = along_w
        .transpose(2, 3)?
        .contiguous()?
        .reshape((b * c * out_w, h))?
        .matmul(&axis_matrix(h, out_h, dtype)?)?
        .reshape((b, c, out_w, out_h))?
        .transpose(2, 3)?
        .contiguous()?;
    Ok(along_h)
}

/// Softmax over the channel axis.
pub fn softmax_channels(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(1)?;
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(1)?;
    Ok(e.broadcast_div(&sum)?)
}

/// `log softmax` over the channel axis.
pub fn log_softmax_channels(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(1)?;
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(values: &[f64], shape: (usize, usize, usize, usize)) -> Tensor {
        Tensor::from_vec(values.to_vec(), shape, &Device::Cpu).unwrap()
    }

    fn naive_max_pool(x: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
        let r = (k / 2) as isize;
        let mut out = vec![f64::NEG_INFINITY; h * w];
        for i in 0..h as isize {
            for j in 0..w as isize {
                for di in -r..=r {
                    for dj in -r..=r {
                        let (a, b) = (i + di, j + dj);
                        if a >= 0 && b >= 0 && a < h as isize && b < w as isize {
                            let v = x[(a as usize) * w + b as usize];
                            let o = &mut out[(i as usize) * w + j as usize];
                            *o = o.max(v);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn same_pool_matches_naive() {
        let (h, w) = (5, 7);
        let vals: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 23) as f64 - 11.0).collect();
        for k in [3, 5] {
            let got = max_pool_same(&t(&vals, (1, 1, h, w)), k)
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1::<f64>()
                .unwrap();
            assert_eq!(got, naive_max_pool(&vals, h, w, k));
        }
    }

    #[test]
    fn stem_pool_takes_even_centres() {
        let (h, w) = (4, 6);
        let vals: Vec<f64> = (0..h * w).map(|i| ((i * 13) % 17) as f64).collect();
        let full = naive_max_pool(&vals, h, w, 3);
        let got = max_pool_3x3_s2(&t(&vals, (1, 1, h, w)))
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        let expected: Vec<f64> = (0..h / 2)
            .flat_map(|i| (0..w / 2).map(move |j| (i, j)))
            .map(|(i, j)| full[2 * i * w + 2 * j])
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn bilinear_upsample_of_constant_is_constant() {
        let x = Tensor::full(3.5f64, (1, 2, 3, 4), &Device::Cpu).unwrap();
        let y = resize_bilinear(&x, 6, 8).unwrap();
        assert_eq!(y.dims(), &[1, 2, 6, 8]);
        for v in y.flatten_all().unwrap().to_vec1::<f64>().unwrap() {
            assert!((v - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_matches_half_pixel_formula() {
        // 2 → 4: sources at -0.25 (clamped to 0), 0.25, 0.75, 1.25 (upper clamp)
        let m = bilinear_matrix(2, 4);
        assert_eq!(m, vec![1.0, 0.0, 0.75, 0.25, 0.25, 0.75, 0.0, 1.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let x = t(&[1.0, -2.0, 0.5, 3.0, 0.0, 7.0], (1, 2, 1, 3));
        let p = softmax_channels(&x).unwrap().sum(1).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for v in p {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
