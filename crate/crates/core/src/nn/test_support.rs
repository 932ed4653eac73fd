//! Central finite differences used as an independent gradient oracle.

use crate::nn::Model;
use crate::numerics::{Rng, Tensor};

pub const EPS: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so that gradients that are zero up to round-off are
/// compared absolutely.
pub const FLOOR: f64 = 1e-6;

pub fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

pub fn central_diff(at: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = at.clone();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + EPS;
        let up = f(&probe);
        probe.data_mut()[i] = orig - EPS;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * EPS));
    }
    Tensor::new(at.shape().to_vec(), out).unwrap()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn assert_grad_close(analytic: &Tensor, numeric: &Tensor) {
    assert_eq!(analytic.shape(), numeric.shape());
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let err = relative_error(a, n);
        assert!(err < REL_TOL, "coordinate {i}: analytic {a} vs numeric {n} (rel err {err})");
    }
}

/// Moves zero-initialized biases off zero. With all-zero biases a ReLU input
/// can sit exactly on the kink (e.g. where dropout cleared a whole window),
/// where a central difference straddles the non-differentiable point.
pub fn jitter_biases(model: &mut Model, rng: &mut Rng) {
    let names = model.parameter_names();
    for (name, p) in names.iter().zip(model.parameters_mut()) {
        if name.ends_with("bias") {
            p.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-0.1, 0.1));
        }
    }
}
