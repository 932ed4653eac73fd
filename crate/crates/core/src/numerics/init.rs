use super::{Rng, Tensor};
use crate::error::{arg_err, Result};

/// Values drawn i.i.d. from `U(-L, L)` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut Rng, fan_in: usize, fan_out: usize, shape: &[usize]) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(arg_err(format!(
            "glorot_uniform needs positive fans, got fan_in={fan_in} fan_out={fan_out}"
        )));
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::new(shape.to_vec(), data)
}
