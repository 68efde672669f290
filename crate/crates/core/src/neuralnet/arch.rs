use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::DEFAULT_FRAME_LEN;

/// Network shape. Convolution is "valid" along the sample axis and shared by
/// the I and Q rows; activations are ReLU; the output is a 2-way softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSpec {
    /// Samples per frame (input width).
    pub frame_len: usize,
    pub conv_filters: usize,
    /// `(height, width)`; height must be 1.
    pub conv_kernel: [usize; 2],
    pub hidden_layers: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            frame_len: DEFAULT_FRAME_LEN,
            conv_filters: 16,
            conv_kernel: [1, 3],
            hidden_layers: vec![64],
            dropout_rate: 0.1,
        }
    }
}

impl ArchSpec {
    pub fn with_hidden(hidden_layers: Vec<usize>) -> Self {
        Self { hidden_layers, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 {
            return Err(invalid("arch.frame_len must be positive"));
        }
        if self.conv_filters == 0 {
            return Err(invalid("arch.conv_filters must be positive"));
        }
        if self.conv_kernel[0] != 1 {
            return Err(invalid("arch.conv_kernel height must be 1"));
        }
        if self.conv_kernel[1] == 0 || self.conv_kernel[1] > self.frame_len {
            return Err(invalid("arch.conv_kernel width must be in 1..=frame_len"));
        }
        if self.hidden_layers.is_empty() {
            return Err(invalid("arch.hidden_layers needs at least one layer"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(invalid("arch.hidden_layers widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid("arch.dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }

    #[inline]
    pub fn kernel_width(&self) -> usize {
        self.conv_kernel[1]
    }

    /// Output positions per row of the valid convolution.
    #[inline]
    pub fn conv_width(&self) -> usize {
        self.frame_len - self.kernel_width() + 1
    }

    /// Length of the flattened convolution output.
    #[inline]
    pub fn flat_len(&self) -> usize {
        self.conv_filters * 2 * self.conv_width()
    }

    /// `(n_in, n_out)` of each dense layer, output layer last.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut n_in = self.flat_len();
        for &h in &self.hidden_layers {
            shapes.push((n_in, h));
            n_in = h;
        }
        shapes.push((n_in, 2));
        shapes
    }

    pub fn param_count(&self) -> usize {
        let conv = self.conv_filters * self.kernel_width() + self.conv_filters;
        conv + self.dense_shapes().iter().map(|(i, o)| i * o + o).sum::<usize>()
    }
}
