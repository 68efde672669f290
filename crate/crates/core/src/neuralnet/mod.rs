//! Tiny CNN for spectrum sensing, differentiated by hand.
//!
//! Layer menu: one `(1, w)` convolution over the 2×k I/Q image, ReLU,
//! flatten, dense hidden layers with ReLU and dropout, and a 2-logit output
//! with softmax. Gradients are available both for the parameters (training)
//! and for the input (attack crafting).

mod arch;
mod io;
mod linear;
mod model;
mod train;

pub use arch::ArchSpec;
pub use io::{FORMAT_MAGIC, FORMAT_VERSION};
pub use linear::LinearSoftmax;
pub use model::{Mode, Model, TrainMeta};
pub use train::{accuracy, train, Adam, TrainConfig};

use num_complex::Complex;

use crate::error::Result;
use crate::signal::{to_real, ClassLabel, IqFrame, IqMatrix};
use crate::Scalar;

/// `∂L/∂input` for a 2×k input.
#[derive(Clone, Debug, PartialEq)]
pub struct InputGradient<T> {
    pub values: IqMatrix<T>,
}

impl<T: Scalar> InputGradient<T> {
    /// `g_I + j·g_Q`, so that `Re⟨g*, dz⟩` is the directional derivative
    /// along a complex input change `dz`.
    pub fn complex_view(&self) -> Vec<Complex<T>> {
        self.values.complex_view()
    }

    pub fn norm(&self) -> T {
        self.values.as_slice().iter().map(|v| *v * *v).sum::<T>().sqrt()
    }
}

/// Softmax over two logits, `(p_signal, p_noise)`, computed without
/// cancellation.
pub fn softmax_pair<T: Scalar>(logits: [T; 2]) -> [T; 2] {
    let d = logits[ClassLabel::Noise.index()] - logits[ClassLabel::Signal.index()];
    [sigmoid(-d), sigmoid(d)]
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Cross-entropy `-ln p_label` from logits.
pub fn cross_entropy<T: Scalar>(logits: [T; 2], label: ClassLabel) -> T {
    softplus(logits[label.other().index()] - logits[label.index()])
}

/// `∂(-ln p_label)/∂logits`.
pub(crate) fn cross_entropy_grad<T: Scalar>(logits: [T; 2], label: ClassLabel) -> [T; 2] {
    let p_other = sigmoid(logits[label.other().index()] - logits[label.index()]);
    let mut g = [T::zero(); 2];
    g[label.index()] = -p_other;
    g[label.other().index()] = p_other;
    g
}

/// Anything that can label a 2×k frame and differentiate its loss with
/// respect to the input. Implemented by [`Model`] and [`LinearSoftmax`].
pub trait Classifier<T: Scalar>: Sync {
    fn frame_len(&self) -> usize;

    /// Eval-mode logits `(z_signal, z_noise)`.
    fn logits(&self, input: &IqMatrix<T>) -> Result<[T; 2]>;

    /// Exact eval-mode gradient of `-ln p_target` with respect to the input.
    fn input_gradient(&self, input: &IqMatrix<T>, target: ClassLabel) -> Result<InputGradient<T>>;

    fn probabilities(&self, input: &IqMatrix<T>) -> Result<[T; 2]> {
        Ok(softmax_pair(self.logits(input)?))
    }

    /// Argmax; an exact tie goes to `Noise`.
    fn classify_matrix(&self, input: &IqMatrix<T>) -> Result<ClassLabel> {
        let z = self.logits(input)?;
        Ok(if z[ClassLabel::Signal.index()] > z[ClassLabel::Noise.index()] {
            ClassLabel::Signal
        } else {
            ClassLabel::Noise
        })
    }

    fn classify(&self, frame: &IqFrame<T>) -> Result<ClassLabel> {
        self.classify_matrix(&to_real(frame))
    }

    fn loss(&self, input: &IqMatrix<T>, label: ClassLabel) -> Result<T> {
        Ok(cross_entropy(self.logits(input)?, label))
    }
}
