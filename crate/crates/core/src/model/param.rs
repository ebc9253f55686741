//! Trainable parameter storage: value, gradient, and first/second moment
//! buffers for the adaptive-moment optimizer.

use ndarray::ArrayD;

#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub moment1: ArrayD<f64>,
    pub moment2: ArrayD<f64>,
}

impl Param {
    pub fn new(value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let moment1 = ArrayD::zeros(value.raw_dim());
        let moment2 = ArrayD::zeros(value.raw_dim());
        Self {
            value,
            grad,
            moment1,
            moment2,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}
