//! Cross-entropy loss, backpropagation through time, Adam and the early-stopping loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::linalg::{argmax, log_sum_exp};
use crate::lstm::{embed, forward, forward_doc, Dims, Gate, LstmParams, Step};

/// Probabilities are clamped below at this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-300;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Parameter-shaped gradients plus the gradient with respect to every input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub params: LstmParams,
    pub d_inputs: Vec<Vec<f64>>,
}

impl Grads {
    /// Adds each `d_inputs` row (restricted to the embedding width) into the embedding row
    /// of the token it came from.
    pub fn scatter_embedding(&mut self, tokens: &[u32]) {
        let width = self.params.dims.embed;
        for (&id, dx) in tokens.iter().zip(&self.d_inputs) {
            for (e, g) in self.params.embedding.row_mut(id as usize).iter_mut().zip(&dx[..width]) {
                *e += g;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        add_params(&mut self.params, &other.params, 1.0);
    }
}

/// `acc += scale * other`, tensor by tensor.
pub fn add_params(acc: &mut LstmParams, other: &LstmParams, scale: f64) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += scale * y;
        }
    }
}

/// `-log p[label]`, computed from the logits and clamped at `-ln(PROB_FLOOR)`.
pub fn loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let nll = log_sum_exp(logits) - logits[label];
    Ok(nll.clamp(0.0, -PROB_FLOOR.ln()))
}

/// Backpropagates externally supplied hidden-state gradients through the recurrence.
///
/// `dh_ext[t]` is the gradient of the loss with respect to `h_t` from outside the cell
/// (an output head). Gate gradients accumulate into `grads`; the returned rows are the
/// gradients with respect to each input vector.
pub fn backward_cell(
    params: &LstmParams,
    steps: &[Step],
    dh_ext: &[Vec<f64>],
    grads: &mut LstmParams,
) -> Vec<Vec<f64>> {
    let h = params.dims.hidden;
    let zeros = vec![0.0; h];
    let mut d_inputs = vec![vec![0.0; params.dims.input]; steps.len()];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];

    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let (c_prev, h_prev) = if t == 0 {
            (&zeros, &zeros)
        } else {
            (&steps[t - 1].cell, &steps[t - 1].hidden)
        };
        let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let dh = dh_next[k] + dh_ext[t][k];
            let tc = s.cell[k].tanh();
            let d_out = dh * tc;
            let dc = dc_next[k] + dh * s.output[k] * (1.0 - tc * tc);
            let d_forget = dc * c_prev[k];
            let d_input = dc * s.candidate[k];
            let d_cand = dc * s.input[k];
            dc_prev[k] = dc * s.forget[k];
            da[0][k] = d_forget * s.forget[k] * (1.0 - s.forget[k]);
            da[1][k] = d_input * s.input[k] * (1.0 - s.input[k]);
            da[2][k] = d_out * s.output[k] * (1.0 - s.output[k]);
            da[3][k] = d_cand * (1.0 - s.candidate[k] * s.candidate[k]);
        }
        let mut dh_prev = vec![0.0; h];
        let gate_grads: [&mut Gate; 4] = [
            &mut grads.forget,
            &mut grads.input,
            &mut grads.output,
            &mut grads.cell,
        ];
        for ((gate, g), da_g) in params.gates().into_iter().zip(gate_grads).zip(&da) {
            g.w.add_outer(da_g, &s.x);
            g.v.add_outer(da_g, h_prev);
            for (b, d) in g.b.iter_mut().zip(da_g) {
                *b += d;
            }
            gate.w.mul_vec_t_acc(da_g, &mut d_inputs[t]);
            gate.v.mul_vec_t_acc(da_g, &mut dh_prev);
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    d_inputs
}

/// Gradients of `-log p[label]` for a trace produced by `forward` on `params`.
///
/// The embedding gradient is left at zero; see [`Grads::scatter_embedding`] or
/// [`backward_doc`].
pub fn backward(params: &LstmParams, trace: &crate::lstm::ForwardTrace, label: usize) -> Result<Grads> {
    let classes = params.dims.classes;
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    if trace.is_empty() || trace.probs.len() != classes {
        return Err(Error::Dimension("trace does not match parameters".into()));
    }
    let mut grads = LstmParams::zeros(params.dims);
    let mut dlogits = trace.probs.clone();
    dlogits[label] -= 1.0;
    let h_last = trace.final_hidden();
    grads.w_out.add_outer(&dlogits, h_last);

    let t_len = trace.len();
    let mut dh_ext = vec![vec![0.0; params.dims.hidden]; t_len];
    params.w_out.mul_vec_t_acc(&dlogits, &mut dh_ext[t_len - 1]);
    let d_inputs = backward_cell(params, &trace.steps, &dh_ext, &mut grads);
    Ok(Grads {
        params: grads,
        d_inputs,
    })
}

/// Loss and full gradients (embedding rows included) for one labeled document.
pub fn backward_doc(params: &LstmParams, doc: &Document) -> Result<(f64, Grads)> {
    let trace = forward_doc(params, doc)?;
    let l = loss(&trace.logits, doc.label)?;
    let mut grads = backward(params, &trace, doc.label)?;
    grads.scatter_embedding(&doc.tokens);
    Ok((l, grads))
}

/// Rescales `grads` in place so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut LstmParams, max_norm: f64) -> f64 {
    clip_tensors(grads.tensors_mut(), max_norm)
}

/// Same as [`clip_global_norm`] over an arbitrary list of tensors. Returns the norm before
/// clipping.
pub fn clip_tensors(tensors: Vec<&mut [f64]>, max_norm: f64) -> f64 {
    let norm = tensors
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in tensors {
            for g in t.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &LstmParams) -> Self {
        Self::with_lr(params, 1e-3)
    }

    pub fn with_lr(params: &LstmParams, lr: f64) -> Self {
        Self::for_tensors(&params.tensors(), lr)
    }

    /// Zeroed moments shaped like `tensors`.
    pub fn for_tensors(tensors: &[&[f64]], lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Bias-corrected Adam update over a flat list of tensors.
    pub fn step_tensors(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

pub fn adam_step(params: &mut LstmParams, grads: &LstmParams, state: &mut AdamState) {
    state.step_tensors(params.tensors_mut(), grads.tensors());
}

fn fill_uniform(values: &mut [f64], bound: f64, rng: &mut ChaCha8Rng) {
    if bound <= 0.0 {
        return;
    }
    for v in values {
        *v = rng.gen_range(-bound..=bound);
    }
}

/// Weights uniform in `±1/sqrt(fan_in)`, zero biases, embeddings uniform in `±0.1`.
pub fn init_params(dims: Dims, seed: u64) -> LstmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LstmParams::zeros(dims);
    fill_uniform(p.embedding.as_mut_slice(), 0.1, &mut rng);
    let in_bound = 1.0 / (dims.input as f64).sqrt();
    let h_bound = 1.0 / (dims.hidden as f64).sqrt();
    for g in [&mut p.forget, &mut p.input, &mut p.output, &mut p.cell] {
        fill_uniform(g.w.as_mut_slice(), in_bound, &mut rng);
        fill_uniform(g.v.as_mut_slice(), h_bound, &mut rng);
    }
    fill_uniform(p.w_out.as_mut_slice(), h_bound, &mut rng);
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub embed: usize,
    pub hidden: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Initial value of every forget-gate bias.
    pub forget_bias: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            hidden: 32,
            seed: 0,
            max_epochs: 20,
            patience: 3,
            lr: 1e-3,
            clip_norm: DEFAULT_CLIP_NORM,
            forget_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Snapshot with the best dev accuracy.
    pub params: LstmParams,
    pub best_dev_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Dev accuracy after each epoch.
    pub dev_history: Vec<f64>,
    /// Parameters after the last epoch run.
    pub final_params: LstmParams,
}

/// Fraction of documents whose predicted class equals the label.
pub fn accuracy(params: &LstmParams, corpus: &Corpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let hits: Vec<bool> = corpus
        .docs
        .par_iter()
        .map(|d| forward_doc(params, d).map(|t| argmax(&t.probs) == d.label))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / corpus.len() as f64)
}

/// Per-document Adam training with early stopping on dev accuracy.
///
/// Training stops once `patience` consecutive epochs pass without a strict improvement;
/// the best snapshot is returned.
pub fn train(corpus: &Corpus, dev: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    if corpus.is_empty() || dev.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.vocab != dev.vocab {
        return Err(Error::InvalidArgument(
            "train and dev corpora must share a vocabulary".into(),
        ));
    }
    let dims = Dims::classifier(
        corpus.vocab.len(),
        config.embed,
        config.hidden,
        corpus.num_classes,
    );
    let mut params = init_params(dims, config.seed);
    params.forget.b.fill(config.forget_bias);
    let mut adam = AdamState::with_lr(&params, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    let mut best = (f64::NEG_INFINITY, params.clone(), 0usize);
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs.max(1) {
        order.shuffle(&mut rng);
        for &i in &order {
            let doc = &corpus.docs[i];
            let (_, mut grads) = backward_doc(&params, doc)?;
            clip_global_norm(&mut grads.params, config.clip_norm);
            adam_step(&mut params, &grads.params, &mut adam);
        }
        let acc = accuracy(&params, dev)?;
        history.push(acc);
        if acc > best.0 {
            best = (acc, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        best_dev_accuracy: best.0,
        best_epoch: best.2,
        epochs_run: history.len(),
        params: best.1,
        dev_history: history,
        final_params: params,
    })
}

/// Convenience: loss of a document under `params`.
pub fn doc_loss(params: &LstmParams, doc: &Document) -> Result<f64> {
    let trace = forward(params, &embed(params, &doc.tokens)?)?;
    loss(&trace.logits, doc.label)
}
