//! Rayleigh fading with path loss and lognormal shadowing:
//! `h_i = K·(d0/d)^γ·ψ·h_ray_i`, one `ψ` per realization and an independent
//! unit-power complex Gaussian `h_ray_i` per symbol.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::{awgn, check_len, IqFrame};
use crate::Scalar;

/// How the shadowing standard deviation (in dB) maps onto the gain `ψ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowingScale {
    /// `σ` is the spread of the received power: `ψ = 10^(X/20)`, so
    /// `ψ² = 10^(X/10)`.
    #[default]
    PowerDb,
    /// `σ` applies to the amplitude gain directly: `ψ = 10^(X/10)`.
    AmplitudeDb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingParams<T> {
    pub k_const: T,
    pub d0: T,
    pub gamma: T,
    pub shadow_sigma_db: T,
    pub shadowing: ShadowingScale,
}

impl<T: Scalar> Default for FadingParams<T> {
    fn default() -> Self {
        Self {
            k_const: T::one(),
            d0: T::one(),
            gamma: T::lit(2.7),
            shadow_sigma_db: T::lit(8.0),
            shadowing: ShadowingScale::PowerDb,
        }
    }
}

impl<T: Scalar> FadingParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > T::zero()) {
            return Err(invalid("fading.d0 must be positive"));
        }
        if !(self.gamma > T::zero()) {
            return Err(invalid("fading.gamma must be positive"));
        }
        if !(self.shadow_sigma_db >= T::zero()) {
            return Err(invalid("fading.shadow_sigma_db must be non-negative"));
        }
        if !self.k_const.is_finite() {
            return Err(invalid("fading.k_const must be finite"));
        }
        Ok(())
    }

    /// Deterministic amplitude path loss `K·(d0/d)^γ`.
    pub fn path_gain(&self, d: T) -> Result<T> {
        if !(d > T::zero()) || !d.is_finite() {
            return Err(invalid(format!("distance must be positive, got {d}")));
        }
        Ok(self.k_const * (self.d0 / d).powf(self.gamma))
    }

    /// Shadowing gain for a standard-normal draw `z`.
    pub fn shadowing_gain(&self, z: T) -> T {
        let x_db = self.shadow_sigma_db * z;
        let div = match self.shadowing {
            ShadowingScale::PowerDb => T::lit(20.0),
            ShadowingScale::AmplitudeDb => T::lit(10.0),
        };
        T::lit(10.0).powf(x_db / div)
    }
}

/// Diagonal channel: one complex gain per symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    gains: Vec<Complex<T>>,
    distance: T,
}

impl<T: Scalar> ChannelRealization<T> {
    pub fn new(gains: Vec<Complex<T>>, distance: T) -> Result<Self> {
        if gains.is_empty() {
            return Err(invalid("channel must have at least one gain"));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(invalid("channel gains must be finite"));
        }
        if !(distance > T::zero()) {
            return Err(invalid("channel distance must be positive"));
        }
        Ok(Self { gains, distance })
    }

    /// Unit gains; the channel that leaves frames untouched.
    pub fn identity(k: usize) -> Result<Self> {
        Self::new(vec![Complex::new(T::one(), T::zero()); k], T::one())
    }

    /// Builds `K·(d0/d)^γ·ψ·h_ray_i` from explicit components.
    pub fn from_components(p: &FadingParams<T>, d: T, psi: T, h_ray: &[Complex<T>]) -> Result<Self> {
        let scale = p.path_gain(d)? * psi;
        Self::new(h_ray.iter().map(|h| h * scale).collect(), d)
    }

    #[inline]
    pub fn gains(&self) -> &[Complex<T>] {
        &self.gains
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    #[inline]
    pub fn distance(&self) -> T {
        self.distance
    }
}

/// Distances between the background emitter (b), transmitter (t) and
/// adversary (a).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Topology<T> {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "unit_distance")]
    pub d_bt: T,
    pub d_ba: T,
    pub d_ta: T,
}

fn unit_distance<T: Scalar>() -> T {
    T::one()
}

fn default_label() -> String {
    "A1".to_string()
}

impl<T: Scalar> Topology<T> {
    pub fn new(label: impl Into<String>, d_ba: T, d_ta: T) -> Self {
        Self { label: label.into(), d_bt: T::one(), d_ba, d_ta }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("d_bt", self.d_bt), ("d_ba", self.d_ba), ("d_ta", self.d_ta)] {
            if !(d > T::zero()) || !d.is_finite() {
                return Err(invalid(format!("topology.{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Draws one realization. The draw order is fixed (one shadowing normal,
/// then `k` complex normals), so reusing a generator state at a different
/// distance yields the same `ψ` and `h_ray`.
pub fn sample_channel<T: Scalar, R: Rng + ?Sized>(
    p: &FadingParams<T>,
    d: T,
    k: usize,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    p.path_gain(d)?;
    let z: f64 = rng.sample(StandardNormal);
    let psi = p.shadowing_gain(T::lit(z));
    let unit = T::lit(0.5f64.sqrt());
    let h_ray: Vec<Complex<T>> = (0..k)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(T::lit(re) * unit, T::lit(im) * unit)
        })
        .collect();
    ChannelRealization::from_components(p, d, psi, &h_ray)
}

/// `H·x` for diagonal `H`.
pub fn apply<T: Scalar>(h: &ChannelRealization<T>, x: &IqFrame<T>) -> Result<IqFrame<T>> {
    check_len(h.len(), x.len())?;
    IqFrame::new(h.gains.iter().zip(x.samples()).map(|(g, s)| g * s).collect())
}

/// `H·x + n`.
pub fn receive<T: Scalar, R: Rng + ?Sized>(
    h: &ChannelRealization<T>,
    x: &IqFrame<T>,
    noise_power: T,
    rng: &mut R,
) -> Result<IqFrame<T>> {
    let hx = apply(h, x)?;
    hx.add(&awgn(x.len(), noise_power, rng)?)
}

/// `H_bx·x + H_ax·δ + n`: the frame seen by a node while the adversary
/// transmits `δ`.
pub fn receive_with_perturbation<T: Scalar, R: Rng + ?Sized>(
    h_bx: &ChannelRealization<T>,
    x: &IqFrame<T>,
    h_ax: &ChannelRealization<T>,
    delta: &IqFrame<T>,
    noise_power: T,
    rng: &mut R,
) -> Result<IqFrame<T>> {
    check_len(x.len(), delta.len())?;
    let hx = apply(h_bx, x)?;
    let hd = apply(h_ax, delta)?;
    hx.add(&hd)?.add(&awgn(x.len(), noise_power, rng)?)
}
