//! Small-scale invariant suites behind the `verify` command.
//!
//! Each suite returns a [`SuiteReport`] with timing and, on failure, the
//! seed and values of the first counterexamples.

use std::time::{Duration, Instant};

use num_complex::Complex;
use rand::Rng;
use serde::Serialize;

use crate::attack::{craft, craft_power_search, AttackSpec, InputSource, PowerRule};
use crate::channel::{receive, sample_channel, ChannelRealization, FadingParams, Topology};
use crate::error::Result;
use crate::experiment::{attack_success_curve, AttackTemplate, ScenarioConfig};
use crate::neuralnet::{ArchSpec, Classifier, InputGradient, LinearSoftmax, Model};
use crate::rng::{stream, tag};
use crate::signal::{awgn, frame_power, from_db, qpsk_frame, to_real, ClassLabel, IqFrame, IqMatrix};

const MAX_REPORTED: usize = 5;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub module: &'static str,
    pub name: &'static str,
    pub cases: usize,
    pub passed: bool,
    #[serde(serialize_with = "ser_secs")]
    pub elapsed: Duration,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

struct Recorder {
    failures: Vec<String>,
    total: usize,
}

impl Recorder {
    fn new() -> Self {
        Self { failures: Vec::new(), total: 0 }
    }

    fn fail(&mut self, msg: String) {
        self.total += 1;
        if self.failures.len() < MAX_REPORTED {
            self.failures.push(msg);
        }
    }

    fn finish(mut self, module: &'static str, name: &'static str, cases: usize, start: Instant) -> SuiteReport {
        if self.total > self.failures.len() {
            self.failures.push(format!("... {} failures in total", self.total));
        }
        SuiteReport {
            module,
            name,
            cases,
            passed: self.total == 0,
            elapsed: start.elapsed(),
            failures: self.failures,
            notes: Vec::new(),
        }
    }

    fn error(mut self, module: &'static str, name: &'static str, start: Instant, e: crate::Error) -> SuiteReport {
        self.total += 1;
        self.failures.push(format!("error: {e}"));
        self.finish(module, name, 0, start)
    }
}

/// Central finite-difference step for input gradient checks.
pub const FD_STEP: f64 = 1e-4;

/// Random frame from the operating distribution: signal at a random
/// distance or noise, at the default noise power.
fn random_input<R: Rng>(rng: &mut R) -> Result<IqMatrix<f64>> {
    let f = FadingParams::default();
    let frame = if rng.random_bool(0.5) {
        let d = rng.random_range(0.4..1.6);
        let h = sample_channel(&f, d, 16, rng)?;
        receive(&h, &qpsk_frame(16, 1.0, rng)?, 0.1, rng)?
    } else {
        awgn(16, 0.1, rng)?
    };
    Ok(to_real(&frame))
}

/// Whether every ReLU keeps its state across the central-difference
/// stencil of every input entry, i.e. the loss is smooth on the stencil.
pub fn stencil_is_smooth(model: &Model<f64>, x: &IqMatrix<f64>, step: f64) -> Result<bool> {
    let base = model.activation_pattern(x)?;
    for i in 0..x.as_slice().len() {
        for s in [step, -step] {
            let mut xs = x.clone();
            xs.as_mut_slice()[i] += s;
            if model.activation_pattern(&xs)? != base {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Compares `grad` against central differences of the eval-mode loss on
/// `cases` random (model, input, label) triples. Entry tolerance is
/// `max(1e-5, 1e-3·|g|)`.
///
/// The network is piecewise linear before the softmax, so a difference
/// quotient whose stencil straddles a ReLU kink is not a derivative
/// estimate. Such inputs are redrawn; the number of redraws is reported.
pub fn input_gradient_suite<F>(cases: usize, seed: u64, grad: F) -> SuiteReport
where
    F: Fn(&Model<f64>, &IqMatrix<f64>, ClassLabel) -> Result<InputGradient<f64>>,
{
    const MODULE: &str = "neuralnet";
    const NAME: &str = "input-gradient-finite-difference";
    let start = Instant::now();
    let mut rec = Recorder::new();
    let mut redraws = 0usize;
    for case in 0..cases {
        let mut rng = stream(seed, &[tag("verify-grad"), case as u64]);
        let depth = 1 + case % 3;
        let arch = ArchSpec::with_hidden(vec![64; depth]);
        let mut run = || -> Result<()> {
            let model = Model::<f64>::init(&arch, &mut rng)?;
            let label = if rng.random_bool(0.5) { ClassLabel::Signal } else { ClassLabel::Noise };
            let mut x = random_input(&mut rng)?;
            while !stencil_is_smooth(&model, &x, FD_STEP)? {
                redraws += 1;
                x = random_input(&mut rng)?;
            }
            let g = grad(&model, &x, label)?;
            for i in 0..x.as_slice().len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.as_mut_slice()[i] += FD_STEP;
                xm.as_mut_slice()[i] -= FD_STEP;
                let num = (model.loss(&xp, label)? - model.loss(&xm, label)?) / (2.0 * FD_STEP);
                let ana = g.values.as_slice()[i];
                let tol = (1e-3 * ana.abs()).max(1e-5);
                if (ana - num).abs() > tol {
                    rec.fail(format!(
                        "seed {seed} case {case} entry {i}: analytic {ana:.6e} vs numeric {num:.6e} (tol {tol:.1e})"
                    ));
                }
            }
            Ok(())
        };
        if let Err(e) = run() {
            return rec.error(MODULE, NAME, start, e);
        }
    }
    let mut report = rec.finish(MODULE, NAME, cases, start);
    report.notes.push(format!("{redraws} inputs redrawn for a kink inside the stencil"));
    report
}

/// Linear two-class surrogate whose decision along the MRPP ray from
/// `r_ref` through channel `h` flips at exactly `eps_star`.
pub fn linear_threshold_fixture<R: Rng>(
    rng: &mut R,
    eps_star: f64,
) -> Result<(LinearSoftmax<f64>, IqFrame<f64>, ChannelRealization<f64>)> {
    let w_s: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w_n: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = IqFrame::new((0..16).map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())?;
    let h = sample_channel(&FadingParams::default(), 0.8, 16, rng)?;
    let u: Vec<f64> = w_n.iter().zip(&w_s).map(|(a, b)| a - b).collect();
    let v: Vec<Complex<f64>> = (0..16).map(|i| h.gains()[i].norm_sqr() * Complex::new(-u[i], -u[16 + i])).collect();
    let v_norm = (0..16).map(|i| (h.gains()[i].conj() * Complex::new(u[i], u[16 + i])).norm_sqr()).sum::<f64>().sqrt();
    let uv: f64 = (0..16).map(|i| u[i] * v[i].re + u[16 + i] * v[i].im).sum::<f64>() / v_norm;
    let ux: f64 = (0..16).map(|i| u[i] * r.samples()[i].re + u[16 + i] * r.samples()[i].im).sum();
    let lin = LinearSoftmax::new(16, w_s, w_n, [0.0, eps_star * uv - ux])?;
    Ok((lin, r, h))
}

/// Power search on linear surrogates with a known flip amplitude.
pub fn bisection_oracle_suite(cases: usize, seed: u64) -> SuiteReport {
    const MODULE: &str = "attack";
    const NAME: &str = "bisection-oracle";
    let start = Instant::now();
    let mut rec = Recorder::new();
    let (p_max, eps_acc) = (16.0f64, 1e-3);
    let expected_iters = (p_max.sqrt() / eps_acc).log2().ceil() as usize;
    for case in 0..cases {
        let mut rng = stream(seed, &[tag("verify-bisect"), case as u64]);
        let eps_star = rng.random_range(0.01..3.99);
        let mut run = || -> Result<()> {
            let (lin, r, h) = linear_threshold_fixture(&mut rng, eps_star)?;
            let spec = AttackSpec::new(PowerRule::SurrogateSearch, InputSource::TransmitterInput, p_max, eps_acc)?;
            let (_, res) = craft_power_search(&lin, &r, &h, &spec)?;
            match res {
                Some(res) if (res.epsilon - eps_star).abs() <= eps_acc && res.iterations == expected_iters => {}
                other => rec.fail(format!("seed {seed} case {case}: eps* {eps_star:.6} got {other:?}")),
            }
            Ok(())
        };
        if let Err(e) = run() {
            return rec.error(MODULE, NAME, start, e);
        }
    }
    rec.finish(MODULE, NAME, cases, start)
}

/// `‖δ‖² ≤ P_max + 1e-9` for random models, frames and budgets.
pub fn budget_suite(cases: usize, seed: u64) -> SuiteReport {
    const MODULE: &str = "attack";
    const NAME: &str = "budget";
    let start = Instant::now();
    let mut rec = Recorder::new();
    let f = FadingParams::default();
    for case in 0..cases {
        let mut rng = stream(seed, &[tag("verify-budget"), case as u64]);
        let mut run = |rec: &mut Recorder| -> Result<()> {
            let model = Model::<f64>::init(&ArchSpec::default(), &mut rng)?;
            let x = qpsk_frame(16, 1.0, &mut rng)?;
            let r_bt = receive(&sample_channel(&f, 1.0, 16, &mut rng)?, &x, 0.1, &mut rng)?;
            let r_ba = receive(&sample_channel(&f, 0.5, 16, &mut rng)?, &x, 0.1, &mut rng)?;
            let h_at = sample_channel(&f, rng.random_range(0.5..1.5), 16, &mut rng)?;
            let p_max: f64 = from_db(rng.random_range(-40.0..20.0)) * 1.6;
            for rule in [PowerRule::MaxBudget, PowerRule::SurrogateSearch] {
                for src in [InputSource::TransmitterInput, InputSource::AdversaryInput] {
                    let spec = AttackSpec::new(rule, src, p_max, p_max.sqrt() * 1e-3)?;
                    let p = craft(&spec, &model, &r_bt, &r_ba, &h_at)?;
                    let e = frame_power(&p.delta);
                    if e > p_max + 1e-9 {
                        rec.fail(format!("seed {seed} case {case} {rule:?}/{src:?}: |delta|^2 {e:.9e} > {p_max:.9e}"));
                    }
                }
            }
            Ok(())
        };
        if let Err(e) = run(&mut rec) {
            return rec.error(MODULE, NAME, start, e);
        }
    }
    rec.finish(MODULE, NAME, cases, start)
}

/// Save/load is bit exact.
pub fn serialization_suite(cases: usize, seed: u64) -> SuiteReport {
    const MODULE: &str = "neuralnet";
    const NAME: &str = "serialization-roundtrip";
    let start = Instant::now();
    let mut rec = Recorder::new();
    for case in 0..cases {
        let mut rng = stream(seed, &[tag("verify-io"), case as u64]);
        let arch = ArchSpec::with_hidden(vec![8 + case; 1 + case % 3]);
        let mut run = || -> Result<bool> {
            let m = Model::<f64>::init(&arch, &mut rng)?;
            let back = Model::<f64>::load(&m.to_bytes()[..])?;
            Ok(back == m)
        };
        match run() {
            Ok(true) => {}
            Ok(false) => rec.fail(format!("seed {seed} case {case}: round trip changed the model")),
            Err(e) => return rec.error(MODULE, NAME, start, e),
        }
    }
    rec.finish(MODULE, NAME, cases, start)
}

/// A tiny curve computed on one and on several threads is identical.
pub fn determinism_suite(seed: u64) -> SuiteReport {
    const MODULE: &str = "experiment";
    const NAME: &str = "schedule-independence";
    let start = Instant::now();
    let mut rec = Recorder::new();
    let run = || -> Result<bool> {
        let mut rng = stream(seed, &[tag("verify-det")]);
        let t = Model::<f64>::init(&ArchSpec::default(), &mut rng)?;
        let a = Model::<f64>::init(&ArchSpec::default(), &mut rng)?;
        let mut cfg = ScenarioConfig::new(Topology::new("A1", 0.5, 0.5));
        cfg.master_seed = seed;
        cfg.test_trials = 40;
        cfg.pnr_grid_db = vec![-20.0, 0.0, 15.0];
        let tpl = AttackTemplate::new(PowerRule::SurrogateSearch, InputSource::TransmitterInput);
        let curve = |threads: usize| -> Result<_> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
            pool.install(|| attack_success_curve("det", &t, &a, &cfg, &cfg.topology, &tpl))
        };
        Ok(curve(1)? == curve(3)?)
    };
    match run() {
        Ok(true) => {}
        Ok(false) => rec.fail(format!("seed {seed}: 1-thread and 3-thread curves differ")),
        Err(e) => return rec.error(MODULE, NAME, start, e),
    }
    rec.finish(MODULE, NAME, 1, start)
}

/// All suites at the scale used by the `verify` command.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        input_gradient_suite(30, seed, |m, x, l| m.input_gradient(x, l)),
        bisection_oracle_suite(200, seed),
        budget_suite(50, seed),
        serialization_suite(6, seed),
        determinism_suite(seed),
    ]
}
