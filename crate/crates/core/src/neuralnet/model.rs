use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, cross_entropy_grad, softmax_pair, ArchSpec, Classifier, InputGradient};
use crate::error::{invalid, Result};
use crate::rng::SimRng;
use crate::signal::{ClassLabel, IqMatrix};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DenseLayout {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

/// Offsets of each tensor inside the flat parameter vector. Dense weights
/// are stored input-major (`w[i * n_out + o]`).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub conv_w: usize,
    pub conv_b: usize,
    pub dense: Vec<DenseLayout>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &ArchSpec) -> Self {
        let conv_w = 0;
        let conv_b = arch.conv_filters * arch.kernel_width();
        let mut next = conv_b + arch.conv_filters;
        let dense = arch
            .dense_shapes()
            .into_iter()
            .map(|(n_in, n_out)| {
                let d = DenseLayout { w: next, b: next + n_in * n_out, n_in, n_out };
                next = d.b + n_out;
                d
            })
            .collect();
        Self { conv_w, conv_b, dense, total: next }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub epochs: usize,
}

/// Forward-pass mode. Dropout is only active in `Train`.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SimRng),
}

/// Activations kept for the backward pass.
#[derive(Default)]
pub(crate) struct Tape<T> {
    input: Vec<T>,
    conv: Vec<T>,
    hidden: Vec<Vec<T>>,
    keep: Vec<Vec<T>>,
    out: Vec<Vec<T>>,
    logits: [T; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    arch: ArchSpec,
    layout: Layout,
    params: Vec<T>,
    meta: TrainMeta,
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

impl<T: Scalar> Model<T> {
    /// Random initialisation: He-uniform `±√(6/fan_in)` for the ReLU layers
    /// (convolution and hidden), Glorot-uniform for the logit layer, zero
    /// biases.
    pub fn init<R: Rng + ?Sized>(arch: &ArchSpec, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        let mut params = vec![T::zero(); layout.total];
        let mut fill = |range: std::ops::Range<usize>, limit: f64, rng: &mut R| {
            for p in &mut params[range] {
                *p = T::lit(rng.random_range(-limit..limit));
            }
        };
        let kw = arch.kernel_width();
        fill(layout.conv_w..layout.conv_b, (6.0 / kw as f64).sqrt(), rng);
        let n_dense = layout.dense.len();
        for (l, d) in layout.dense.iter().enumerate() {
            let limit = if l + 1 == n_dense {
                (6.0 / (d.n_in + d.n_out) as f64).sqrt()
            } else {
                (6.0 / d.n_in as f64).sqrt()
            };
            fill(d.w..d.b, limit, rng);
        }
        Ok(Self { arch: arch.clone(), layout, params, meta: TrainMeta::default() })
    }

    /// All parameters zero; outputs `(0.5, 0.5)` for every input.
    pub fn zeroed(arch: &ArchSpec) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        Ok(Self { arch: arch.clone(), params: vec![T::zero(); layout.total], layout, meta: TrainMeta::default() })
    }

    pub fn from_params(arch: &ArchSpec, params: Vec<T>, meta: TrainMeta) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        if params.len() != layout.total {
            return Err(invalid(format!(
                "expected {} parameters for this architecture, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        Ok(Self { arch: arch.clone(), layout, params, meta })
    }

    #[inline]
    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    #[inline]
    pub fn params(&self) -> &[T] {
        &self.params
    }

    #[inline]
    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    #[inline]
    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    pub(crate) fn set_meta(&mut self, meta: TrainMeta) {
        self.meta = meta;
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, input: &IqMatrix<T>) -> Result<()> {
        if input.k() != self.arch.frame_len {
            return Err(invalid(format!(
                "input is 2x{}, model expects 2x{}",
                input.k(),
                self.arch.frame_len
            )));
        }
        Ok(())
    }

    /// `(p_signal, p_noise)`.
    pub fn forward(&self, input: &IqMatrix<T>, mode: Mode<'_>) -> Result<[T; 2]> {
        self.check_input(input)?;
        let mut tape = Tape::default();
        let rng = match mode {
            Mode::Eval => None,
            Mode::Train(rng) => Some(rng),
        };
        self.run_forward(input.as_slice(), &mut tape, rng);
        Ok(softmax_pair(tape.logits))
    }

    pub(crate) fn run_forward(&self, input: &[T], tape: &mut Tape<T>, mut rng: Option<&mut SimRng>) {
        let p = &self.params;
        let k = self.arch.frame_len;
        let kw = self.arch.kernel_width();
        let width = self.arch.conv_width();
        let filters = self.arch.conv_filters;

        tape.input.clear();
        tape.input.extend_from_slice(input);
        tape.conv.clear();
        tape.conv.resize(self.arch.flat_len(), T::zero());
        for f in 0..filters {
            let wf = &p[self.layout.conv_w + f * kw..self.layout.conv_w + (f + 1) * kw];
            let bf = p[self.layout.conv_b + f];
            for r in 0..2 {
                let row = &input[r * k..(r + 1) * k];
                let out = &mut tape.conv[(f * 2 + r) * width..(f * 2 + r + 1) * width];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = (bf + dot(wf, &row[j..j + kw])).max(T::zero());
                }
            }
        }

        let n_hidden = self.layout.dense.len() - 1;
        tape.hidden.resize_with(n_hidden, Vec::new);
        tape.keep.resize_with(n_hidden, Vec::new);
        tape.out.resize_with(n_hidden, Vec::new);
        let rate = self.arch.dropout_rate;
        let keep_scale = T::lit(1.0 / (1.0 - rate));
        for l in 0..n_hidden {
            let d = &self.layout.dense[l];
            let mut y = p[d.b..d.b + d.n_out].to_vec();
            {
                let x = if l == 0 { &tape.conv } else { &tape.out[l - 1] };
                for (i, &xi) in x.iter().enumerate() {
                    if xi != T::zero() {
                        axpy(xi, &p[d.w + i * d.n_out..d.w + (i + 1) * d.n_out], &mut y);
                    }
                }
            }
            for v in &mut y {
                *v = v.max(T::zero());
            }
            match rng.as_deref_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep: Vec<T> = (0..d.n_out)
                        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep_scale })
                        .collect();
                    tape.out[l] = y.iter().zip(&keep).map(|(a, b)| *a * *b).collect();
                    tape.keep[l] = keep;
                }
                _ => {
                    tape.out[l].clone_from(&y);
                    tape.keep[l].clear();
                }
            }
            tape.hidden[l] = y;
        }

        let d = &self.layout.dense[n_hidden];
        let x = if n_hidden == 0 { &tape.conv } else { &tape.out[n_hidden - 1] };
        let mut z = [p[d.b], p[d.b + 1]];
        for (i, &xi) in x.iter().enumerate() {
            if xi != T::zero() {
                z[0] += xi * p[d.w + 2 * i];
                z[1] += xi * p[d.w + 2 * i + 1];
            }
        }
        tape.logits = z;
    }

    /// Backpropagates `dlogits` through the recorded activations. Parameter
    /// gradients are accumulated into `grads`; input gradients are written
    /// (overwritten) into `dinput`.
    pub(crate) fn run_backward(
        &self,
        tape: &Tape<T>,
        dlogits: [T; 2],
        mut grads: Option<&mut [T]>,
        dinput: Option<&mut [T]>,
    ) {
        let p = &self.params;
        let mut dy: Vec<T> = dlogits.to_vec();
        for l in (0..self.layout.dense.len()).rev() {
            let d = &self.layout.dense[l];
            let x = if l == 0 { &tape.conv } else { &tape.out[l - 1] };
            if let Some(g) = grads.as_deref_mut() {
                for (gb, v) in g[d.b..d.b + d.n_out].iter_mut().zip(&dy) {
                    *gb += *v;
                }
                for (i, &xi) in x.iter().enumerate() {
                    if xi != T::zero() {
                        axpy(xi, &dy, &mut g[d.w + i * d.n_out..d.w + (i + 1) * d.n_out]);
                    }
                }
            }
            let mut dx: Vec<T> = (0..d.n_in)
                .map(|i| dot(&p[d.w + i * d.n_out..d.w + (i + 1) * d.n_out], &dy))
                .collect();
            if l == 0 {
                for (v, a) in dx.iter_mut().zip(&tape.conv) {
                    if *a <= T::zero() {
                        *v = T::zero();
                    }
                }
            } else {
                let h = &tape.hidden[l - 1];
                let keep = &tape.keep[l - 1];
                for (i, v) in dx.iter_mut().enumerate() {
                    if h[i] <= T::zero() {
                        *v = T::zero();
                    } else if !keep.is_empty() {
                        *v *= keep[i];
                    }
                }
            }
            dy = dx;
        }

        // dy now holds the gradient at the convolution pre-activations.
        let k = self.arch.frame_len;
        let kw = self.arch.kernel_width();
        let width = self.arch.conv_width();
        let mut dinput = dinput;
        if let Some(di) = dinput.as_deref_mut() {
            di.iter_mut().for_each(|v| *v = T::zero());
        }
        for f in 0..self.arch.conv_filters {
            let wf = &p[self.layout.conv_w + f * kw..self.layout.conv_w + (f + 1) * kw];
            for r in 0..2 {
                let row = &tape.input[r * k..(r + 1) * k];
                let drow = &dy[(f * 2 + r) * width..(f * 2 + r + 1) * width];
                for (j, &dv) in drow.iter().enumerate() {
                    if dv == T::zero() {
                        continue;
                    }
                    if let Some(g) = grads.as_deref_mut() {
                        g[self.layout.conv_b + f] += dv;
                        axpy(dv, &row[j..j + kw], &mut g[self.layout.conv_w + f * kw..self.layout.conv_w + (f + 1) * kw]);
                    }
                    if let Some(di) = dinput.as_deref_mut() {
                        axpy(dv, wf, &mut di[r * k + j..r * k + j + kw]);
                    }
                }
            }
        }
    }

    /// Adds the gradient of `-ln p_label` for one sample into `grads` and
    /// returns the loss. Dropout is applied when `rng` is given.
    pub(crate) fn accumulate_gradient(
        &self,
        input: &[T],
        label: ClassLabel,
        tape: &mut Tape<T>,
        grads: &mut [T],
        rng: Option<&mut SimRng>,
    ) -> T {
        self.run_forward(input, tape, rng);
        let dl = cross_entropy_grad(tape.logits, label);
        self.run_backward(tape, dl, Some(grads), None);
        cross_entropy(tape.logits, label)
    }

    /// Eval-mode on/off state of every ReLU (convolution, then hidden
    /// layers). The loss is differentiable wherever this is locally
    /// constant.
    pub fn activation_pattern(&self, input: &IqMatrix<T>) -> Result<Vec<bool>> {
        self.check_input(input)?;
        let mut tape = Tape::default();
        self.run_forward(input.as_slice(), &mut tape, None);
        Ok(tape.conv.iter().chain(tape.hidden.iter().flatten()).map(|v| *v > T::zero()).collect())
    }

    /// Mean eval-mode loss and parameter gradient over a batch.
    pub fn batch_gradient(&self, batch: &[(IqMatrix<T>, ClassLabel)]) -> Result<(T, Vec<T>)> {
        if batch.is_empty() {
            return Err(invalid("empty batch"));
        }
        let mut grads = vec![T::zero(); self.params.len()];
        let mut tape = Tape::default();
        let mut loss = T::zero();
        for (x, y) in batch {
            self.check_input(x)?;
            loss += self.accumulate_gradient(x.as_slice(), *y, &mut tape, &mut grads, None);
        }
        let inv = T::one() / T::from_count(batch.len());
        grads.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grads))
    }

    pub fn batch_loss(&self, batch: &[(IqMatrix<T>, ClassLabel)]) -> Result<T> {
        let mut loss = T::zero();
        for (x, y) in batch {
            loss += self.loss(x, *y)?;
        }
        Ok(loss / T::from_count(batch.len().max(1)))
    }
}

impl<T: Scalar> Classifier<T> for Model<T> {
    fn frame_len(&self) -> usize {
        self.arch.frame_len
    }

    fn logits(&self, input: &IqMatrix<T>) -> Result<[T; 2]> {
        self.check_input(input)?;
        let mut tape = Tape::default();
        self.run_forward(input.as_slice(), &mut tape, None);
        Ok(tape.logits)
    }

    fn input_gradient(&self, input: &IqMatrix<T>, target: ClassLabel) -> Result<InputGradient<T>> {
        self.check_input(input)?;
        let mut tape = Tape::default();
        self.run_forward(input.as_slice(), &mut tape, None);
        let dl = cross_entropy_grad(tape.logits, target);
        let mut values = IqMatrix::zeros(input.k());
        self.run_backward(&tape, dl, None, Some(values.as_mut_slice()));
        Ok(InputGradient { values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::signal::{awgn, to_real};

    fn arch() -> ArchSpec {
        ArchSpec::default()
    }

    fn random_input(seed: u64, scale: f64) -> IqMatrix<f64> {
        to_real(&awgn(16, scale, &mut seeded(seed)).unwrap())
    }

    /// Independent scalar-by-scalar forward pass, indexing by layer shape
    /// rather than through the flat layout helpers.
    fn naive_logits(m: &Model<f64>, x: &IqMatrix<f64>) -> [f64; 2] {
        let a = m.arch();
        let p = m.params();
        let (f_n, kw, w_n) = (a.conv_filters, a.kernel_width(), a.conv_width());
        let mut off = 0;
        let conv_w: Vec<Vec<f64>> = (0..f_n).map(|f| p[off + f * kw..off + (f + 1) * kw].to_vec()).collect();
        off += f_n * kw;
        let conv_b = p[off..off + f_n].to_vec();
        off += f_n;
        let mut act = Vec::new();
        for f in 0..f_n {
            for r in 0..2 {
                for j in 0..w_n {
                    let mut s = conv_b[f];
                    for (t, w) in conv_w[f].iter().enumerate() {
                        s += w * x.get(r, j + t);
                    }
                    act.push(if s > 0.0 { s } else { 0.0 });
                }
            }
        }
        let shapes = a.dense_shapes();
        for (l, &(n_in, n_out)) in shapes.iter().enumerate() {
            let w = &p[off..off + n_in * n_out];
            off += n_in * n_out;
            let b = &p[off..off + n_out];
            off += n_out;
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = b[o];
                for i in 0..n_in {
                    s += act[i] * w[i * n_out + o];
                }
                next[o] = if l + 1 < shapes.len() { s.max(0.0) } else { s };
            }
            act = next;
        }
        [act[0], act[1]]
    }

    #[test]
    fn param_count_closed_form() {
        // conv 16·3+16, dense 448·64+64, output 64·2+2
        assert_eq!(arch().param_count(), 64 + 28_736 + 130);
        let m = Model::<f64>::init(&arch(), &mut seeded(0)).unwrap();
        assert_eq!(m.param_count(), 28_930);
        let deep = ArchSpec::with_hidden(vec![64, 64]);
        assert_eq!(deep.param_count(), 28_930 + 64 * 64 + 64);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Model::<f64>::init(&arch(), &mut seeded(5)).unwrap();
        let b = Model::<f64>::init(&arch(), &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        let c = Model::<f64>::init(&arch(), &mut seeded(6)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn invalid_arch_rejected() {
        let bad = ArchSpec { dropout_rate: 0.999_999, ..arch() };
        assert!(bad.validate().is_ok());
        for bad in [
            ArchSpec { dropout_rate: 1.0, ..arch() },
            ArchSpec { hidden_layers: vec![], ..arch() },
            ArchSpec { conv_kernel: [1, 17], ..arch() },
            ArchSpec { conv_kernel: [2, 3], ..arch() },
            ArchSpec { conv_filters: 0, ..arch() },
        ] {
            assert!(Model::<f64>::init(&bad, &mut seeded(0)).is_err());
        }
    }

    #[test]
    fn zero_model_is_symmetric() {
        let m = Model::<f64>::zeroed(&arch()).unwrap();
        let x = random_input(1, 1.0);
        assert_eq!(m.forward(&x, Mode::Eval).unwrap(), [0.5, 0.5]);
        assert_eq!(m.classify_matrix(&x).unwrap(), ClassLabel::Noise);
        assert!((m.loss(&x, ClassLabel::Signal).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_naive_loops() {
        for seed in 0..10 {
            let a = ArchSpec { hidden_layers: vec![8 + seed as usize, 5], conv_filters: 4, ..arch() };
            let m = Model::<f64>::init(&a, &mut seeded(seed)).unwrap();
            let x = random_input(100 + seed, 2.0);
            let z = m.logits(&x).unwrap();
            let n = naive_logits(&m, &x);
            assert!((z[0] - n[0]).abs() < 1e-9 && (z[1] - n[1]).abs() < 1e-9);
            let p = m.forward(&x, Mode::Eval).unwrap();
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_mode_is_repeatable_train_mode_drops() {
        let m = Model::<f64>::init(&ArchSpec { dropout_rate: 0.5, ..arch() }, &mut seeded(2)).unwrap();
        let x = random_input(3, 1.0);
        assert_eq!(m.forward(&x, Mode::Eval).unwrap(), m.forward(&x, Mode::Eval).unwrap());
        let mut rng = seeded(4);
        let outs: Vec<_> = (0..5).map(|_| m.forward(&x, Mode::Train(&mut rng)).unwrap()).collect();
        assert!(outs.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = Model::<f64>::init(&arch(), &mut seeded(2)).unwrap();
        let x = to_real(&awgn(15, 1.0f64, &mut seeded(0)).unwrap());
        assert!(m.forward(&x, Mode::Eval).is_err());
        assert!(m.input_gradient(&x, ClassLabel::Noise).is_err());
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let a = ArchSpec { hidden_layers: vec![6, 5], conv_filters: 3, ..arch() };
        let m = Model::<f64>::init(&a, &mut seeded(21)).unwrap();
        let batch: Vec<_> = (0..4)
            .map(|i| (random_input(40 + i, 3.0), if i % 2 == 0 { ClassLabel::Signal } else { ClassLabel::Noise }))
            .collect();
        let (_, g) = m.batch_gradient(&batch).unwrap();
        let h = 1e-5;
        for idx in (0..m.param_count()).step_by(7) {
            let mut plus = m.clone();
            plus.params_mut()[idx] += h;
            let mut minus = m.clone();
            minus.params_mut()[idx] -= h;
            let fd = (plus.batch_loss(&batch).unwrap() - minus.batch_loss(&batch).unwrap()) / (2.0 * h);
            assert!((fd - g[idx]).abs() <= 1e-6_f64.max(1e-4 * g[idx].abs()), "param {idx}: {fd} vs {}", g[idx]);
        }
    }
}
