//! Complex baseband primitives: frames, QPSK symbols, AWGN, power and the
//! 2×k real representation fed to the classifier.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::Scalar;

/// Frame length used throughout the study.
pub const DEFAULT_FRAME_LEN: usize = 16;

/// `k` complex baseband samples; the unit of classification.
#[derive(Clone, Debug, PartialEq)]
pub struct IqFrame<T> {
    samples: Vec<Complex<T>>,
}

impl<T: Scalar> IqFrame<T> {
    pub fn new(samples: Vec<Complex<T>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("frame must hold at least one sample"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(invalid("frame samples must be finite"));
        }
        Ok(Self { samples })
    }

    pub fn zeros(k: usize) -> Result<Self> {
        Self::new(vec![Complex::new(T::zero(), T::zero()); k])
    }

    pub fn filled(k: usize, value: Complex<T>) -> Result<Self> {
        Self::new(vec![value; k])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; frames are non-empty by construction.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex<T>> {
        self.samples
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Self::new(self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, factor: T) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| s * factor).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|s| s.re == T::zero() && s.im == T::zero())
    }
}

pub(crate) fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Binary spectrum-sensing label. The discriminant is the classifier's
/// output index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Signal = 0,
    Noise = 1,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Signal, ClassLabel::Noise];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn other(self) -> Self {
        match self {
            ClassLabel::Signal => ClassLabel::Noise,
            ClassLabel::Noise => ClassLabel::Signal,
        }
    }
}

/// Training-set element: a frame and the class that generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame<T> {
    pub frame: IqFrame<T>,
    pub label: ClassLabel,
}

/// Draws `k` QPSK symbols `(±1 ± j)·√(Es/2)` uniformly.
pub fn qpsk_frame<T: Scalar, R: Rng + ?Sized>(
    k: usize,
    symbol_energy: T,
    rng: &mut R,
) -> Result<IqFrame<T>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if !(symbol_energy > T::zero()) || !symbol_energy.is_finite() {
        return Err(invalid("symbol energy must be positive and finite"));
    }
    let amp = (symbol_energy / T::lit(2.0)).sqrt();
    let samples = (0..k)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { amp } else { -amp };
            let im = if bits & 2 == 0 { amp } else { -amp };
            Complex::new(re, im)
        })
        .collect();
    IqFrame::new(samples)
}

/// Circularly-symmetric complex Gaussian noise with per-sample variance
/// `noise_power` (each of I and Q gets half).
pub fn awgn<T: Scalar, R: Rng + ?Sized>(k: usize, noise_power: T, rng: &mut R) -> Result<IqFrame<T>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if !(noise_power >= T::zero()) || !noise_power.is_finite() {
        return Err(invalid("noise power must be non-negative and finite"));
    }
    let std = (noise_power / T::lit(2.0)).sqrt();
    let samples = (0..k)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(std * T::lit(re), std * T::lit(im))
        })
        .collect();
    IqFrame::new(samples)
}

/// Squared ℓ2 norm, `Σ|f_i|²`.
pub fn frame_power<T: Scalar>(frame: &IqFrame<T>) -> T {
    frame.samples.iter().map(|s| s.norm_sqr()).sum()
}

pub fn db<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(invalid(format!("dB of non-positive value {x}")));
    }
    Ok(T::lit(10.0) * x.log10())
}

pub fn from_db<T: Scalar>(x_db: T) -> T {
    T::lit(10.0).powf(x_db / T::lit(10.0))
}

/// Real 2×k view of a frame: row 0 holds in-phase parts, row 1 quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct IqMatrix<T> {
    k: usize,
    data: Vec<T>,
}

impl<T: Scalar> IqMatrix<T> {
    pub const ROWS: usize = 2;

    /// `data` is row-major with 2 rows.
    pub fn from_rows(k: usize, data: Vec<T>) -> Result<Self> {
        if k == 0 || data.len() != 2 * k {
            return Err(invalid(format!("expected a 2x{k} matrix, got {} values", data.len())));
        }
        Ok(Self { k, data })
    }

    pub fn zeros(k: usize) -> Self {
        Self { k, data: vec![T::zero(); 2 * k] }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.k..(r + 1) * self.k]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.k + c]
    }

    /// `g_I + j·g_Q` per column.
    pub fn complex_view(&self) -> Vec<Complex<T>> {
        (0..self.k).map(|i| Complex::new(self.data[i], self.data[self.k + i])).collect()
    }
}

pub fn to_real<T: Scalar>(frame: &IqFrame<T>) -> IqMatrix<T> {
    let k = frame.len();
    let mut data = Vec::with_capacity(2 * k);
    data.extend(frame.samples.iter().map(|s| s.re));
    data.extend(frame.samples.iter().map(|s| s.im));
    IqMatrix { k, data }
}

pub fn from_real<T: Scalar>(m: &IqMatrix<T>) -> Result<IqFrame<T>> {
    IqFrame::new(m.complex_view())
}
