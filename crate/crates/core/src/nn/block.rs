//! Residual TCN block: two dilated causal convolutions with ReLU and dropout
//! after each, an identity (or 1×1 projection) skip path and a final ReLU.

use super::layers::{conv_backward_raw, conv_forward_raw, dropout_backward, dropout_forward, relu_backward, relu_forward, seq_dims, Mode};
use crate::error::{dim_err, Result};
use crate::numerics::{Rng, Tensor};

/// Kernel `[k, Cin, Cout]` plus bias `[Cout]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
    /// 1×1 projection on the skip path, present iff `Cin != Cout`.
    pub downsample: Option<ConvParams>,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    input: Tensor,
    pre1: Tensor,
    mask1: Tensor,
    hidden: Tensor,
    pre2: Tensor,
    mask2: Tensor,
    sum: Tensor,
    dilation: usize,
}

impl BlockCache {
    pub(crate) fn relu_inputs(&self) -> [&Tensor; 3] {
        [&self.pre1, &self.pre2, &self.sum]
    }
}

#[derive(Clone, Debug)]
pub struct BlockGrads {
    pub grad_x: Tensor,
    pub conv1: (Tensor, Tensor),
    pub conv2: (Tensor, Tensor),
    pub downsample: Option<(Tensor, Tensor)>,
}

fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!("residual sum of {:?} and {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// `y = ReLU(branch(x) + skip(x))`, length preserving.
pub fn residual_block_forward(
    x: &Tensor,
    params: &BlockParams,
    dilation: usize,
    dropout_rate: f64,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor, BlockCache)> {
    let (_, _, cin) = seq_dims(x)?;
    let cout = params.conv2.out_channels();
    if params.downsample.is_none() && cin != cout {
        return Err(dim_err(format!(
            "identity skip needs equal channels, got {cin} in and {cout} out"
        )));
    }
    let pre1 = conv_forward_raw(x, &params.conv1.kernel, &params.conv1.bias, dilation)?;
    let (hidden, mask1) = dropout_forward(&relu_forward(&pre1), dropout_rate, rng, mode)?;
    let pre2 = conv_forward_raw(&hidden, &params.conv2.kernel, &params.conv2.bias, dilation)?;
    let (branch, mask2) = dropout_forward(&relu_forward(&pre2), dropout_rate, rng, mode)?;
    let sum = match &params.downsample {
        Some(p) => add(&branch, &conv_forward_raw(x, &p.kernel, &p.bias, 1)?)?,
        None => add(&branch, x)?,
    };
    let y = relu_forward(&sum);
    let cache = BlockCache {
        input: x.clone(),
        pre1,
        mask1,
        hidden,
        pre2,
        mask2,
        sum,
        dilation,
    };
    Ok((y, cache))
}

pub fn residual_block_backward(params: &BlockParams, cache: &BlockCache, grad_out: &Tensor) -> Result<BlockGrads> {
    let g_sum = relu_backward(&cache.sum, grad_out)?;
    let g_pre2 = relu_backward(&cache.pre2, &dropout_backward(&cache.mask2, &g_sum)?)?;
    let (g_hidden, gk2, gb2) = conv_backward_raw(&cache.hidden, &params.conv2.kernel, cache.dilation, &g_pre2)?;
    let g_pre1 = relu_backward(&cache.pre1, &dropout_backward(&cache.mask1, &g_hidden)?)?;
    let (gx_branch, gk1, gb1) = conv_backward_raw(&cache.input, &params.conv1.kernel, cache.dilation, &g_pre1)?;
    let (gx_skip, downsample) = match &params.downsample {
        Some(p) => {
            let (gx, gk, gb) = conv_backward_raw(&cache.input, &p.kernel, 1, &g_sum)?;
            (gx, Some((gk, gb)))
        }
        None => (g_sum, None),
    };
    Ok(BlockGrads {
        grad_x: add(&gx_branch, &gx_skip)?,
        conv1: (gk1, gb1),
        conv2: (gk2, gb2),
        downsample,
    })
}
