//! Scenario orchestration: datasets, node training, Monte Carlo attack
//! trials and the PNR curves of the four location/method/architecture
//! studies.
//!
//! Randomness uses common random numbers. Trial `i` of any curve draws its
//! symbols, fading and noise from a stream keyed only by the master seed
//! and `i`, and that one draw is evaluated at every PNR point. Curves for
//! different topologies therefore differ only through the distances, which
//! keeps ordinal comparisons between curves sharp at moderate trial counts.

mod config;
mod figures;

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{InputSource, PowerRule, PreparedAttack};
use crate::channel::{apply, receive, sample_channel, FadingParams, Topology};
use crate::error::{invalid, Result};
use crate::neuralnet::{train, ArchSpec, Classifier, Model};
use crate::rng::{derive_seed, stream, tag};
use crate::signal::{awgn, frame_power, from_db, qpsk_frame, ClassLabel, IqFrame, LabeledFrame};
use crate::channel::ChannelRealization;
use crate::Scalar;

pub use config::{
    pnr_grid, AttackTemplate, ScenarioConfig, DEFAULT_NOISE_POWER, DEFAULT_PNR_MAX_DB, DEFAULT_PNR_MIN_DB,
    DEFAULT_PNR_STEP_DB, DEFAULT_TEST_TRIALS, DEFAULT_TRAIN_FRAMES,
};
pub use figures::{reproduce, reproduce_with_cache, Figure, LOCATION_DISTANCES, UPPER_BOUND_LABEL};

/// Slack on `‖δ‖² ≤ P_max`.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// `n/2` signal frames through a fresh channel at distance `d` and `n/2`
/// noise-only frames, shuffled.
pub fn build_dataset<T: Scalar, R: Rng + ?Sized>(
    d: T,
    n: usize,
    noise_power: T,
    fading: &FadingParams<T>,
    k: usize,
    symbol_energy: T,
    rng: &mut R,
) -> Result<Vec<LabeledFrame<T>>> {
    if n % 2 == 1 {
        return Err(invalid("dataset size must be even"));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let x = qpsk_frame(k, symbol_energy, rng)?;
        let h = sample_channel(fading, d, k, rng)?;
        out.push(LabeledFrame { frame: receive(&h, &x, noise_power, rng)?, label: ClassLabel::Signal });
    }
    for _ in 0..n / 2 {
        out.push(LabeledFrame { frame: awgn(k, noise_power, rng)?, label: ClassLabel::Noise });
    }
    out.shuffle(rng);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Target,
    Surrogate,
}

impl NodeRole {
    fn name(self) -> &'static str {
        match self {
            NodeRole::Target => "target",
            NodeRole::Surrogate => "surrogate",
        }
    }
}

/// Trains one node's classifier on frames received at distance `d`.
///
/// The dataset stream depends on the role but not on `d` or the
/// architecture, so surrogates at different locations see the same fading
/// and noise draws at different path loss. Initialization additionally
/// depends on the architecture.
pub fn train_node<T: Scalar>(cfg: &ScenarioConfig<T>, role: NodeRole, d: T, arch: &ArchSpec) -> Result<Model<T>> {
    let salt = cfg.train_cfg.seed;
    let mut data_rng = stream(cfg.master_seed, &[tag("dataset"), tag(role.name()), salt]);
    let data = build_dataset(
        d,
        cfg.train_frames,
        cfg.noise_power,
        &cfg.fading,
        arch.frame_len,
        cfg.symbol_energy,
        &mut data_rng,
    )?;
    let mut tc = cfg.train_cfg.clone();
    tc.seed = derive_seed(cfg.master_seed, &[tag("init"), tag(role.name()), tag(&format!("{arch:?}")), salt]);
    train(&data, arch, &tc)
}

/// `(model_t, model_a)`: the transmitter's classifier at `d_bt` and the
/// adversary's surrogate at `d_ba`.
pub fn train_pair<T: Scalar>(cfg: &ScenarioConfig<T>) -> Result<(Model<T>, Model<T>)> {
    cfg.validate()?;
    let t = train_node(cfg, NodeRole::Target, cfg.topology.d_bt, &cfg.arch_t)?;
    let a = train_node(cfg, NodeRole::Surrogate, cfg.topology.d_ba, &cfg.arch_a)?;
    Ok((t, a))
}

/// Trained models keyed by everything that determines them.
#[derive(Default)]
pub struct ModelCache<T> {
    models: HashMap<String, Arc<Model<T>>>,
}

impl<T: Scalar> ModelCache<T> {
    pub fn new() -> Self {
        Self { models: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&mut self, cfg: &ScenarioConfig<T>, role: NodeRole, d: T, arch: &ArchSpec) -> Result<Arc<Model<T>>> {
        let key = format!(
            "{}|{}|{:x}|{:?}|{:?}|{:?}|{:?}|{:?}|{}",
            cfg.master_seed,
            role.name(),
            d.to_f64_lossy().to_bits(),
            arch,
            cfg.train_cfg,
            cfg.fading,
            cfg.noise_power,
            cfg.symbol_energy,
            cfg.train_frames
        );
        if let Some(m) = self.models.get(&key) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(train_node(cfg, role, d, arch)?);
        self.models.insert(key, Arc::clone(&m));
        Ok(m)
    }
}

/// `P_max = 10^(pnr/10)·k·σ²`: perturbation energy over the frame's total
/// receiver noise energy.
pub fn p_max_from_pnr<T: Scalar>(pnr_db: T, noise_power: T, k: usize) -> Result<T> {
    if !(noise_power > T::zero()) {
        return Err(invalid("noise_power must be positive to define PNR"));
    }
    if pnr_db.is_nan() {
        return Err(invalid("pnr_db is NaN"));
    }
    Ok(from_db(pnr_db) * T::from_count(k) * noise_power)
}

/// One occupied-channel realization: what the transmitter and the
/// adversary receive, and the adversary→transmitter channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialDraw<T> {
    pub r_bt: IqFrame<T>,
    pub r_ba: IqFrame<T>,
    pub h_at: ChannelRealization<T>,
}

/// Draw order: `x, H_bt, n_bt, H_ba, n_ba, H_at`.
pub fn draw_trial<T: Scalar, R: Rng + ?Sized>(
    cfg: &ScenarioConfig<T>,
    topology: &Topology<T>,
    rng: &mut R,
) -> Result<TrialDraw<T>> {
    let k = cfg.frame_len();
    let x = qpsk_frame(k, cfg.symbol_energy, rng)?;
    let h_bt = sample_channel(&cfg.fading, topology.d_bt, k, rng)?;
    let r_bt = receive(&h_bt, &x, cfg.noise_power, rng)?;
    let h_ba = sample_channel(&cfg.fading, topology.d_ba, k, rng)?;
    let r_ba = receive(&h_ba, &x, cfg.noise_power, rng)?;
    let h_at = sample_channel(&cfg.fading, topology.d_ta, k, rng)?;
    Ok(TrialDraw { r_bt, r_ba, h_at })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome<T> {
    pub attacked: bool,
    /// Target says `Noise` on the (possibly perturbed) frame.
    pub fooled: bool,
    /// Target's label on the clean `r_bt`.
    pub target_pre_label: ClassLabel,
    pub surrogate_label: ClassLabel,
    pub delta_power: T,
    pub p_max: T,
}

pub fn prepare_trial<'a, T: Scalar, C: Classifier<T> + ?Sized>(
    surrogate: &'a C,
    draw: &TrialDraw<T>,
    attack: &AttackTemplate,
) -> Result<PreparedAttack<'a, T, C>> {
    PreparedAttack::new(
        attack.power_rule,
        attack.input_source,
        attack.literal_alg1,
        surrogate,
        &draw.r_bt,
        &draw.r_ba,
        &draw.h_at,
    )
}

/// Realizes a prepared attack at budget `p_max` and asks the target.
pub fn evaluate_trial<T: Scalar, CT: Classifier<T> + ?Sized, CA: Classifier<T> + ?Sized>(
    target: &CT,
    prepared: &PreparedAttack<'_, T, CA>,
    draw: &TrialDraw<T>,
    target_pre_label: ClassLabel,
    p_max: T,
    eps_acc_rel: f64,
) -> Result<TrialOutcome<T>> {
    let eps_acc = (p_max.sqrt() * T::lit(eps_acc_rel)).max(T::min_positive_value());
    let (pert, _) = prepared.realize(p_max, eps_acc)?;
    let fooled = if pert.attacked {
        let received = draw.r_bt.add(&apply(&draw.h_at, &pert.delta)?)?;
        target.classify(&received)? == ClassLabel::Noise
    } else {
        target_pre_label == ClassLabel::Noise
    };
    Ok(TrialOutcome {
        attacked: pert.attacked,
        fooled,
        target_pre_label,
        surrogate_label: prepared.surrogate_label,
        delta_power: frame_power(&pert.delta),
        p_max,
    })
}

/// One trial at a single PNR.
#[allow(clippy::too_many_arguments)]
pub fn run_trial<T: Scalar, CT: Classifier<T> + ?Sized, CA: Classifier<T> + ?Sized, R: Rng + ?Sized>(
    target: &CT,
    surrogate: &CA,
    cfg: &ScenarioConfig<T>,
    topology: &Topology<T>,
    attack: &AttackTemplate,
    pnr_db: T,
    rng: &mut R,
) -> Result<TrialOutcome<T>> {
    let mut out = run_trial_sweep(target, surrogate, cfg, topology, attack, &[pnr_db], rng)?;
    Ok(out.remove(0))
}

/// One trial draw evaluated at every grid point.
pub fn run_trial_sweep<T: Scalar, CT: Classifier<T> + ?Sized, CA: Classifier<T> + ?Sized, R: Rng + ?Sized>(
    target: &CT,
    surrogate: &CA,
    cfg: &ScenarioConfig<T>,
    topology: &Topology<T>,
    attack: &AttackTemplate,
    grid: &[T],
    rng: &mut R,
) -> Result<Vec<TrialOutcome<T>>> {
    let draw = draw_trial(cfg, topology, rng)?;
    let prepared = prepare_trial(surrogate, &draw, attack)?;
    let pre = target.classify(&draw.r_bt)?;
    grid.iter()
        .map(|&pnr| {
            let p_max = p_max_from_pnr(pnr, cfg.noise_power, cfg.frame_len())?;
            evaluate_trial(target, &prepared, &draw, pre, p_max, attack.eps_acc_rel)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<T> {
    pub pnr_db: T,
    pub success_rate: T,
    pub stderr: T,
    pub n_trials: usize,
}

impl<T: Scalar> CurvePoint<T> {
    pub fn from_counts(pnr_db: T, successes: usize, n_trials: usize) -> Result<Self> {
        if n_trials == 0 || successes > n_trials {
            return Err(invalid("curve point needs 0 <= successes <= n_trials, n_trials > 0"));
        }
        let p = successes as f64 / n_trials as f64;
        Ok(Self {
            pnr_db,
            success_rate: T::lit(p),
            stderr: T::lit((p * (1.0 - p) / n_trials as f64).sqrt()),
            n_trials,
        })
    }
}

/// Provenance and diagnostics for one curve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub master_seed: u64,
    pub d_bt: f64,
    pub d_ba: f64,
    pub d_ta: f64,
    pub power_rule: Option<PowerRule>,
    pub input_source: Option<InputSource>,
    pub literal_alg1: bool,
    /// The target doubles as the surrogate.
    pub white_box: bool,
    pub target_validation_accuracy: Option<f64>,
    pub surrogate_validation_accuracy: Option<f64>,
    pub surrogate_hidden_layers: Vec<usize>,
    /// Trials where the adversary transmitted, per grid point.
    pub attacked_trials: Vec<usize>,
    /// Trials where the target already missed the clean frame.
    pub baseline_misses: usize,
    pub budget_violations: usize,
    /// Largest `‖δ‖²/P_max` seen.
    pub max_budget_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable<T> {
    pub scenario: String,
    pub points: Vec<CurvePoint<T>>,
    pub meta: TableMeta,
}

#[derive(Clone, Debug)]
struct Tally {
    fooled: Vec<usize>,
    attacked: Vec<usize>,
    baseline_misses: usize,
    violations: usize,
    max_ratio: f64,
}

impl Tally {
    fn zero(n: usize) -> Self {
        Self { fooled: vec![0; n], attacked: vec![0; n], baseline_misses: 0, violations: 0, max_ratio: 0.0 }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.fooled.iter_mut().zip(other.fooled) {
            *a += b;
        }
        for (a, b) in self.attacked.iter_mut().zip(other.attacked) {
            *a += b;
        }
        self.baseline_misses += other.baseline_misses;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
        self
    }
}

/// Stream for trial `i`; independent of topology, attack and PNR.
pub fn trial_rng<T>(cfg: &ScenarioConfig<T>, i: usize) -> crate::rng::SimRng {
    stream(cfg.master_seed, &[tag("trial"), cfg.train_cfg.seed, i as u64])
}

/// Success rate at every grid point over `cfg.test_trials` trials. Trials
/// run on the current rayon pool; counts are merged exactly, so the result
/// does not depend on the number of threads.
pub fn attack_success_curve<T: Scalar, CT: Classifier<T> + ?Sized, CA: Classifier<T> + ?Sized>(
    scenario: impl Into<String>,
    target: &CT,
    surrogate: &CA,
    cfg: &ScenarioConfig<T>,
    topology: &Topology<T>,
    attack: &AttackTemplate,
) -> Result<ResultTable<T>> {
    cfg.validate()?;
    topology.validate()?;
    attack.validate()?;
    let grid = &cfg.pnr_grid_db;
    let n = grid.len();
    let tally = (0..cfg.test_trials)
        .into_par_iter()
        .map(|i| -> Result<Tally> {
            let mut rng = trial_rng(cfg, i);
            let outcomes = run_trial_sweep(target, surrogate, cfg, topology, attack, grid, &mut rng)?;
            let mut t = Tally::zero(n);
            if outcomes.first().is_some_and(|o| o.target_pre_label == ClassLabel::Noise) {
                t.baseline_misses = 1;
            }
            for (j, o) in outcomes.iter().enumerate() {
                t.fooled[j] = usize::from(o.fooled);
                t.attacked[j] = usize::from(o.attacked);
                let (dp, pm) = (o.delta_power.to_f64_lossy(), o.p_max.to_f64_lossy());
                if dp > pm + BUDGET_TOLERANCE {
                    t.violations += 1;
                }
                if pm > 0.0 {
                    t.max_ratio = t.max_ratio.max(dp / pm);
                }
            }
            Ok(t)
        })
        .try_reduce(|| Tally::zero(n), |a, b| Ok(a.merge(b)))?;
    let points = grid
        .iter()
        .zip(&tally.fooled)
        .map(|(&pnr, &s)| CurvePoint::from_counts(pnr, s, cfg.test_trials))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable {
        scenario: scenario.into(),
        points,
        meta: TableMeta {
            master_seed: cfg.master_seed,
            d_bt: topology.d_bt.to_f64_lossy(),
            d_ba: topology.d_ba.to_f64_lossy(),
            d_ta: topology.d_ta.to_f64_lossy(),
            power_rule: Some(attack.power_rule),
            input_source: Some(attack.input_source),
            literal_alg1: attack.literal_alg1,
            attacked_trials: tally.attacked,
            baseline_misses: tally.baseline_misses,
            budget_violations: tally.violations,
            max_budget_ratio: tally.max_ratio,
            ..TableMeta::default()
        },
    })
}

fn peak_index<T: Scalar>(t: &ResultTable<T>) -> Result<usize> {
    if t.points.is_empty() {
        return Err(invalid(format!("table '{}' has no points", t.scenario)));
    }
    let mut best = 0;
    for (i, p) in t.points.iter().enumerate() {
        if p.success_rate > t.points[best].success_rate {
            best = i;
        }
    }
    Ok(best)
}

/// PNR of the highest success rate; ties go to the smallest PNR.
pub fn peak_pnr<T: Scalar>(t: &ResultTable<T>) -> Result<T> {
    Ok(t.points[peak_index(t)?].pnr_db)
}

pub fn peak_success<T: Scalar>(t: &ResultTable<T>) -> Result<T> {
    Ok(t.points[peak_index(t)?].success_rate)
}

#[cfg(test)]
mod tests;
