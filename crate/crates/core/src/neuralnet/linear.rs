use super::{cross_entropy_grad, Classifier, InputGradient};
use crate::error::{invalid, Result};
use crate::signal::{ClassLabel, IqMatrix};
use crate::Scalar;

/// Affine map from the flattened 2×k input to two logits, followed by
/// softmax. Its decision boundary is a hyperplane, which makes attack
/// thresholds available in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSoftmax<T> {
    k: usize,
    /// `weights[c]` has length `2k` (row-major I then Q).
    weights: [Vec<T>; 2],
    bias: [T; 2],
}

impl<T: Scalar> LinearSoftmax<T> {
    pub fn new(k: usize, w_signal: Vec<T>, w_noise: Vec<T>, bias: [T; 2]) -> Result<Self> {
        if k == 0 || w_signal.len() != 2 * k || w_noise.len() != 2 * k {
            return Err(invalid("linear classifier weights must have length 2k"));
        }
        Ok(Self { k, weights: [w_signal, w_noise], bias })
    }

    pub fn weights(&self, label: ClassLabel) -> &[T] {
        &self.weights[label.index()]
    }

    pub fn bias(&self) -> [T; 2] {
        self.bias
    }

    pub fn set_bias(&mut self, bias: [T; 2]) {
        self.bias = bias;
    }
}

impl<T: Scalar> Classifier<T> for LinearSoftmax<T> {
    fn frame_len(&self) -> usize {
        self.k
    }

    fn logits(&self, input: &IqMatrix<T>) -> Result<[T; 2]> {
        if input.k() != self.k {
            return Err(invalid("input shape does not match classifier"));
        }
        let z = |c: usize| {
            self.bias[c] + self.weights[c].iter().zip(input.as_slice()).map(|(w, x)| *w * *x).sum::<T>()
        };
        Ok([z(0), z(1)])
    }

    fn input_gradient(&self, input: &IqMatrix<T>, target: ClassLabel) -> Result<InputGradient<T>> {
        let dl = cross_entropy_grad(self.logits(input)?, target);
        let data = (0..2 * self.k)
            .map(|i| dl[0] * self.weights[0][i] + dl[1] * self.weights[1][i])
            .collect();
        Ok(InputGradient { values: IqMatrix::from_rows(self.k, data)? })
    }
}
