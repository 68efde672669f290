//! Adversarial perturbations crafted on the adversary's surrogate model.
//!
//! The direction is the MRPP one: the surrogate's input gradient of the
//! loss toward `Noise`, pre-weighted by the conjugate adversary→transmitter
//! channel so the perturbation adds coherently after propagation. Power is
//! either the full budget or the smallest amplitude that flips the
//! surrogate, found by bisection.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{apply, ChannelRealization};
use crate::error::{invalid, Error, Result};
use crate::neuralnet::Classifier;
use crate::signal::{check_len, to_real, ClassLabel, IqFrame, IqMatrix};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerRule {
    /// Always transmit at `√P_max` amplitude.
    MaxBudget,
    /// Bisection for the smallest amplitude that flips the surrogate.
    SurrogateSearch,
}

/// Which received frame the adversary differentiates its surrogate at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    /// `r_bt`, the transmitter's own input (assumed known).
    TransmitterInput,
    /// `r_ba`, what the adversary itself receives.
    AdversaryInput,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec<T> {
    pub power_rule: PowerRule,
    pub input_source: InputSource,
    /// Budget on `‖δ‖²`.
    pub p_max: T,
    /// Bisection stops once the amplitude bracket is at most this wide.
    pub eps_acc: T,
    /// Run the power search exactly as printed in the original pseudocode
    /// (gate on a `Noise` decision, reversed bracket updates).
    pub literal_alg1: bool,
}

impl<T: Scalar> AttackSpec<T> {
    pub fn new(power_rule: PowerRule, input_source: InputSource, p_max: T, eps_acc: T) -> Result<Self> {
        let spec = Self { power_rule, input_source, p_max, eps_acc, literal_alg1: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > T::zero()) || !self.p_max.is_finite() {
            return Err(invalid("attack p_max must be positive"));
        }
        if !(self.eps_acc > T::zero()) || !(self.eps_acc < self.p_max.sqrt()) {
            return Err(invalid("attack eps_acc must lie in (0, sqrt(p_max))"));
        }
        Ok(())
    }
}

/// What the adversary transmits.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation<T> {
    pub delta: IqFrame<T>,
    /// Amplitude `ε` with `δ = -ε·δ_norm`.
    pub epsilon_used: T,
    pub attacked: bool,
}

impl<T: Scalar> Perturbation<T> {
    pub fn none(k: usize) -> Result<Self> {
        Ok(Self { delta: IqFrame::zeros(k)?, epsilon_used: T::zero(), attacked: false })
    }
}

/// Bookkeeping from one bisection run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchResult<T> {
    pub epsilon: T,
    pub iterations: usize,
    /// Whether any probed amplitude flipped the surrogate to `Noise`.
    pub surrogate_flipped: bool,
}

/// Unit-norm MRPP direction `conj(h_at) ⊙ g / ‖conj(h_at) ⊙ g‖`, where `g`
/// is the complex view of the surrogate's loss gradient toward `Noise` at
/// `r_ref`.
pub fn mrpp_direction<T: Scalar, C: Classifier<T> + ?Sized>(
    surrogate: &C,
    r_ref: &IqFrame<T>,
    h_at: &ChannelRealization<T>,
) -> Result<IqFrame<T>> {
    check_len(h_at.len(), r_ref.len())?;
    if h_at.gains().iter().all(|h| h.norm_sqr() == T::zero()) {
        return Err(Error::DegenerateDirection("zero channel"));
    }
    let g = surrogate.input_gradient(&to_real(r_ref), ClassLabel::Noise)?.complex_view();
    let v: Vec<Complex<T>> = h_at.gains().iter().zip(&g).map(|(h, g)| h.conj() * g).collect();
    normalize(v)
}

fn normalize<T: Scalar>(v: Vec<Complex<T>>) -> Result<IqFrame<T>> {
    let peak = v.iter().fold(T::zero(), |m, c| m.max(c.re.abs()).max(c.im.abs()));
    if !(peak > T::zero()) || !peak.is_finite() {
        return Err(Error::DegenerateDirection("zero or non-finite gradient"));
    }
    let scaled: Vec<Complex<T>> = v.into_iter().map(|c| c / peak).collect();
    let norm = scaled.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt();
    IqFrame::new(scaled.into_iter().map(|c| c / norm).collect())
}

/// `δ = -√P_max·δ_norm`.
pub fn craft_max_power<T: Scalar, C: Classifier<T> + ?Sized>(
    surrogate: &C,
    r_ref: &IqFrame<T>,
    h_at: &ChannelRealization<T>,
    p_max: T,
) -> Result<Perturbation<T>> {
    if !(p_max >= T::zero()) {
        return Err(invalid("p_max must be non-negative"));
    }
    if p_max == T::zero() {
        return Perturbation::none(r_ref.len());
    }
    match mrpp_direction(surrogate, r_ref, h_at) {
        Ok(dir) => full_budget(&dir, p_max),
        Err(Error::DegenerateDirection(_)) => Perturbation::none(r_ref.len()),
        Err(e) => Err(e),
    }
}

fn full_budget<T: Scalar>(dir: &IqFrame<T>, p_max: T) -> Result<Perturbation<T>> {
    let eps = p_max.sqrt();
    Ok(Perturbation { delta: dir.scale(-eps)?, epsilon_used: eps, attacked: true })
}

/// Bisection over `ε ∈ [0, √P_max]` on the surrogate's decision at
/// `x_adv(ε) = r_ref - ε·H_at·δ_norm`.
///
/// A probe that flips the surrogate to `Noise` lowers the upper bound,
/// otherwise the lower bound rises; the surviving upper bound is returned.
/// If no probe flips, the result is the full budget. `literal` swaps the
/// two updates.
pub fn power_search<T: Scalar, C: Classifier<T> + ?Sized>(
    surrogate: &C,
    r_ref: &IqMatrix<T>,
    h_dir: &IqMatrix<T>,
    p_max: T,
    eps_acc: T,
    literal: bool,
) -> Result<SearchResult<T>> {
    if !(eps_acc > T::zero()) {
        return Err(invalid("eps_acc must be positive"));
    }
    let mut lo = T::zero();
    let mut hi = p_max.sqrt();
    let mut iterations = 0;
    let mut flipped_any = false;
    let mut probe = r_ref.clone();
    while hi - lo > eps_acc {
        iterations += 1;
        let mid = (lo + hi) / T::lit(2.0);
        for ((p, r), d) in probe.as_mut_slice().iter_mut().zip(r_ref.as_slice()).zip(h_dir.as_slice()) {
            *p = *r - mid * *d;
        }
        let flipped = surrogate.classify_matrix(&probe)? == ClassLabel::Noise;
        flipped_any |= flipped;
        if flipped != literal {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SearchResult { epsilon: hi, iterations, surrogate_flipped: flipped_any })
}

/// Power-search perturbation without the attack gate.
pub fn craft_power_search<T: Scalar, C: Classifier<T> + ?Sized>(
    surrogate: &C,
    r_ref: &IqFrame<T>,
    h_at: &ChannelRealization<T>,
    spec: &AttackSpec<T>,
) -> Result<(Perturbation<T>, Option<SearchResult<T>>)> {
    if spec.power_rule != PowerRule::SurrogateSearch {
        return Err(invalid("craft_power_search needs the surrogate-search power rule"));
    }
    spec.validate()?;
    let dir = match mrpp_direction(surrogate, r_ref, h_at) {
        Ok(d) => d,
        Err(Error::DegenerateDirection(_)) => return Ok((Perturbation::none(r_ref.len())?, None)),
        Err(e) => return Err(e),
    };
    let h_dir = to_real(&apply(h_at, &dir)?);
    let res = power_search(surrogate, &to_real(r_ref), &h_dir, spec.p_max, spec.eps_acc, spec.literal_alg1)?;
    let delta = dir.scale(-res.epsilon)?;
    Ok((Perturbation { delta, epsilon_used: res.epsilon, attacked: true }, Some(res)))
}

/// Per-trial attack state that does not depend on the power budget: the
/// gate decision and the MRPP direction. Sweeping a PNR grid realizes the
/// same prepared attack at every budget.
pub struct PreparedAttack<'a, T, C: ?Sized> {
    surrogate: &'a C,
    power_rule: PowerRule,
    literal_alg1: bool,
    k: usize,
    /// Surrogate's label for `r_ba`.
    pub surrogate_label: ClassLabel,
    direction: Option<IqFrame<T>>,
    r_ref: IqMatrix<T>,
    h_dir: IqMatrix<T>,
}

impl<'a, T: Scalar, C: Classifier<T> + ?Sized> PreparedAttack<'a, T, C> {
    pub fn new(
        power_rule: PowerRule,
        input_source: InputSource,
        literal_alg1: bool,
        surrogate: &'a C,
        r_bt: &IqFrame<T>,
        r_ba: &IqFrame<T>,
        h_at: &ChannelRealization<T>,
    ) -> Result<Self> {
        check_len(r_bt.len(), r_ba.len())?;
        let surrogate_label = surrogate.classify(r_ba)?;
        let r_ref = match input_source {
            InputSource::TransmitterInput => r_bt,
            InputSource::AdversaryInput => r_ba,
        };
        let direction = match mrpp_direction(surrogate, r_ref, h_at) {
            Ok(d) => Some(d),
            Err(Error::DegenerateDirection(_)) => None,
            Err(e) => return Err(e),
        };
        let h_dir = match &direction {
            Some(d) => to_real(&apply(h_at, d)?),
            None => IqMatrix::zeros(r_bt.len()),
        };
        Ok(Self {
            surrogate,
            power_rule,
            literal_alg1,
            k: r_bt.len(),
            surrogate_label,
            direction,
            r_ref: to_real(r_ref),
            h_dir,
        })
    }

    pub fn direction(&self) -> Option<&IqFrame<T>> {
        self.direction.as_ref()
    }

    /// Perturbation for one budget. The attack only fires when the
    /// surrogate labels `r_ba` as `Signal` (in literal mode: the search runs
    /// on a `Noise` label and the adversary transmits regardless).
    pub fn realize(&self, p_max: T, eps_acc: T) -> Result<(Perturbation<T>, Option<SearchResult<T>>)> {
        if !(p_max >= T::zero()) {
            return Err(invalid("p_max must be non-negative"));
        }
        let Some(dir) = &self.direction else {
            return Ok((Perturbation::none(self.k)?, None));
        };
        if p_max == T::zero() {
            return Ok((Perturbation::none(self.k)?, None));
        }
        let literal = self.literal_alg1 && self.power_rule == PowerRule::SurrogateSearch;
        if literal {
            let res = if self.surrogate_label == ClassLabel::Noise {
                Some(power_search(self.surrogate, &self.r_ref, &self.h_dir, p_max, eps_acc, true)?)
            } else {
                None
            };
            let eps = res.map_or(p_max.sqrt(), |r| r.epsilon);
            let delta = dir.scale(-eps)?;
            return Ok((Perturbation { delta, epsilon_used: eps, attacked: true }, res));
        }
        if self.surrogate_label != ClassLabel::Signal {
            return Ok((Perturbation::none(self.k)?, None));
        }
        match self.power_rule {
            PowerRule::MaxBudget => Ok((full_budget(dir, p_max)?, None)),
            PowerRule::SurrogateSearch => {
                let res = power_search(self.surrogate, &self.r_ref, &self.h_dir, p_max, eps_acc, false)?;
                let delta = dir.scale(-res.epsilon)?;
                Ok((Perturbation { delta, epsilon_used: res.epsilon, attacked: true }, Some(res)))
            }
        }
    }
}

/// Full attack: gate on the surrogate's view of `r_ba`, pick the reference
/// input, then apply the power rule.
pub fn craft<T: Scalar, C: Classifier<T> + ?Sized>(
    spec: &AttackSpec<T>,
    surrogate: &C,
    r_bt: &IqFrame<T>,
    r_ba: &IqFrame<T>,
    h_at: &ChannelRealization<T>,
) -> Result<Perturbation<T>> {
    spec.validate()?;
    let prepared =
        PreparedAttack::new(spec.power_rule, spec.input_source, spec.literal_alg1, surrogate, r_bt, r_ba, h_at)?;
    Ok(prepared.realize(spec.p_max, spec.eps_acc)?.0)
}
