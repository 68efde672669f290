use serde::{Deserialize, Serialize};

use crate::attack::{InputSource, PowerRule};
use crate::channel::{FadingParams, Topology};
use crate::error::{invalid, Result};
use crate::neuralnet::{ArchSpec, TrainConfig};
use crate::Scalar;

/// Attack settings shared by every PNR point of a curve. The budget comes
/// from the grid; the bisection tolerance is relative to `√P_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackTemplate {
    pub power_rule: PowerRule,
    pub input_source: InputSource,
    /// `ε_acc = eps_acc_rel·√P_max`.
    pub eps_acc_rel: f64,
    pub literal_alg1: bool,
}

impl Default for AttackTemplate {
    fn default() -> Self {
        Self {
            power_rule: PowerRule::MaxBudget,
            input_source: InputSource::TransmitterInput,
            eps_acc_rel: 1e-3,
            literal_alg1: false,
        }
    }
}

impl AttackTemplate {
    pub fn new(power_rule: PowerRule, input_source: InputSource) -> Self {
        Self { power_rule, input_source, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_acc_rel > 0.0 && self.eps_acc_rel < 1.0) {
            return Err(invalid("attack.eps_acc_rel must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Everything needed to train both nodes and sweep one attack curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ScenarioConfig<T> {
    pub topology: Topology<T>,
    #[serde(default)]
    pub fading: FadingParams<T>,
    /// Receiver noise power `σ²` per complex sample.
    #[serde(default = "default_noise_power")]
    pub noise_power: T,
    #[serde(default = "default_symbol_energy")]
    pub symbol_energy: T,
    /// Frames per node dataset (half signal, half noise).
    #[serde(default = "default_train_frames")]
    pub train_frames: usize,
    /// Monte Carlo trials per PNR point.
    #[serde(default = "default_test_trials")]
    pub test_trials: usize,
    #[serde(default)]
    pub arch_t: ArchSpec,
    #[serde(default)]
    pub arch_a: ArchSpec,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default)]
    pub attack: AttackTemplate,
    #[serde(default = "default_pnr_grid")]
    pub pnr_grid_db: Vec<T>,
    #[serde(default)]
    pub master_seed: u64,
}

/// 10 dB average SNR at unit distance for unit-energy symbols.
pub const DEFAULT_NOISE_POWER: f64 = 0.1;
pub const DEFAULT_TRAIN_FRAMES: usize = 10_000;
pub const DEFAULT_TEST_TRIALS: usize = 2_000;
pub const DEFAULT_PNR_MIN_DB: f64 = -40.0;
pub const DEFAULT_PNR_MAX_DB: f64 = 20.0;
pub const DEFAULT_PNR_STEP_DB: f64 = 1.0;

fn default_noise_power<T: Scalar>() -> T {
    T::lit(DEFAULT_NOISE_POWER)
}

fn default_symbol_energy<T: Scalar>() -> T {
    T::one()
}

fn default_train_frames() -> usize {
    DEFAULT_TRAIN_FRAMES
}

fn default_test_trials() -> usize {
    DEFAULT_TEST_TRIALS
}

fn default_pnr_grid<T: Scalar>() -> Vec<T> {
    pnr_grid(T::lit(DEFAULT_PNR_MIN_DB), T::lit(DEFAULT_PNR_MAX_DB), T::lit(DEFAULT_PNR_STEP_DB))
        .expect("default grid is valid")
}

/// Inclusive grid `min, min+step, ...` up to `max` (with a half-step-free
/// tolerance so that `max` itself is kept despite rounding).
pub fn pnr_grid<T: Scalar>(min: T, max: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !min.is_finite() || !max.is_finite() || max < min {
        return Err(invalid("pnr grid needs finite min <= max and a positive step"));
    }
    let n = ((max - min) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
    if n > 100_000 {
        return Err(invalid("pnr grid has too many points"));
    }
    Ok((0..n).map(|i| min + step * T::from_count(i)).collect())
}

impl<T: Scalar> ScenarioConfig<T> {
    pub fn new(topology: Topology<T>) -> Self {
        Self {
            topology,
            fading: FadingParams::default(),
            noise_power: default_noise_power(),
            symbol_energy: default_symbol_energy(),
            train_frames: DEFAULT_TRAIN_FRAMES,
            test_trials: DEFAULT_TEST_TRIALS,
            arch_t: ArchSpec::default(),
            arch_a: ArchSpec::default(),
            train_cfg: TrainConfig::default(),
            attack: AttackTemplate::default(),
            pnr_grid_db: default_pnr_grid(),
            master_seed: 0,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.arch_t.frame_len
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.fading.validate()?;
        self.arch_t.validate()?;
        self.arch_a.validate()?;
        self.train_cfg.validate()?;
        self.attack.validate()?;
        if self.arch_t.frame_len != self.arch_a.frame_len {
            return Err(invalid("arch_t.frame_len and arch_a.frame_len must agree"));
        }
        if !(self.noise_power > T::zero()) || !self.noise_power.is_finite() {
            return Err(invalid("noise_power must be positive"));
        }
        if !(self.symbol_energy > T::zero()) || !self.symbol_energy.is_finite() {
            return Err(invalid("symbol_energy must be positive"));
        }
        if self.train_frames == 0 || self.train_frames % 2 == 1 {
            return Err(invalid("train_frames must be positive and even"));
        }
        if self.test_trials == 0 {
            return Err(invalid("test_trials must be positive"));
        }
        if self.pnr_grid_db.is_empty() {
            return Err(invalid("pnr_grid_db must be nonempty"));
        }
        if self.pnr_grid_db.iter().any(|p| !p.is_finite()) {
            return Err(invalid("pnr_grid_db entries must be finite"));
        }
        if self.pnr_grid_db.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("pnr_grid_db must be strictly increasing"));
        }
        Ok(())
    }
}
