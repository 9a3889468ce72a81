//! LSTM forward pass with a full per-step trace and the softmax output head.

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::linalg::{argmax, sigmoid, softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    /// Word embedding width.
    pub embed: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Gate input width: `embed` for a plain classifier, `embed + question width` for the
    /// question-conditioned reader.
    pub input: usize,
}

impl Dims {
    pub fn classifier(vocab: usize, embed: usize, hidden: usize, classes: usize) -> Self {
        Self {
            vocab,
            embed,
            hidden,
            classes,
            input: embed,
        }
    }
}

/// Affine map of one gate: `W x + V h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Matrix,
    pub v: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w: Matrix::zeros(hidden, input),
            v: Matrix::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    fn preactivation(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut a = self.b.clone();
        self.w.mul_vec_acc(x, &mut a);
        self.v.mul_vec_acc(h_prev, &mut a);
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub dims: Dims,
    pub embedding: Matrix,
    pub forget: Gate,
    pub input: Gate,
    pub output: Gate,
    pub cell: Gate,
    /// Output matrix; row `i` scores class `i`. There is no output bias.
    pub w_out: Matrix,
}

pub const TENSOR_NAMES: [&str; 14] = [
    "embedding", "w_f", "v_f", "b_f", "w_i", "v_i", "b_i", "w_o", "v_o", "b_o", "w_c", "v_c",
    "b_c", "w_out",
];

impl LstmParams {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            embedding: Matrix::zeros(dims.vocab, dims.embed),
            forget: Gate::zeros(dims.hidden, dims.input),
            input: Gate::zeros(dims.hidden, dims.input),
            output: Gate::zeros(dims.hidden, dims.input),
            cell: Gate::zeros(dims.hidden, dims.input),
            w_out: Matrix::zeros(dims.classes, dims.hidden),
        }
    }

    pub fn gates(&self) -> [&Gate; 4] {
        [&self.forget, &self.input, &self.output, &self.cell]
    }

    /// Every tensor in [`TENSOR_NAMES`] order, flattened row-major.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embedding.as_slice()];
        for g in self.gates() {
            out.extend([g.w.as_slice(), g.v.as_slice(), g.b.as_slice()]);
        }
        out.push(self.w_out.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.as_mut_slice()];
        for g in [
            &mut self.forget,
            &mut self.input,
            &mut self.output,
            &mut self.cell,
        ] {
            out.push(g.w.as_mut_slice());
            out.push(g.v.as_mut_slice());
            out.push(g.b.as_mut_slice());
        }
        out.push(self.w_out.as_mut_slice());
        out
    }

    /// Expected `(rows, cols)` of each tensor for `dims`, in [`TENSOR_NAMES`] order.
    pub fn tensor_shapes(dims: &Dims) -> [(usize, usize); 14] {
        let (h, x) = (dims.hidden, dims.input);
        let gate = [(h, x), (h, h), (h, 1)];
        [
            (dims.vocab, dims.embed),
            gate[0],
            gate[1],
            gate[2],
            gate[0],
            gate[1],
            gate[2],
            gate[0],
            gate[1],
            gate[2],
            gate[0],
            gate[1],
            gate[2],
            (dims.classes, h),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks that every tensor agrees with `dims` and holds only finite values.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.input < d.embed {
            return Err(Error::Dimension(format!(
                "gate input width {} is smaller than embedding width {}",
                d.input, d.embed
            )));
        }
        let shapes = Self::tensor_shapes(d);
        for ((name, t), (r, c)) in TENSOR_NAMES.iter().zip(self.tensors()).zip(shapes) {
            if t.len() != r * c {
                return Err(Error::Dimension(format!(
                    "tensor {name} has {} entries, expected {r}x{c}",
                    t.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("tensor {name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Quantities of a single time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub x: Vec<f64>,
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub candidate: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Full forward record. `c_0 = h_0 = 0` are implicit and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub steps: Vec<Step>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("non-empty trace").hidden
    }
}

/// Runs the recurrence over `inputs` without touching the output head.
pub fn run_cell(params: &LstmParams, inputs: &[Vec<f64>]) -> Result<Vec<Step>> {
    let h = params.dims.hidden;
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut steps = Vec::with_capacity(inputs.len());
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != params.dims.input {
            return Err(Error::Dimension(format!(
                "input {t} has width {}, expected {}",
                x.len(),
                params.dims.input
            )));
        }
        let forget: Vec<f64> = params
            .forget
            .preactivation(x, &h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let input: Vec<f64> = params
            .input
            .preactivation(x, &h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let output: Vec<f64> = params
            .output
            .preactivation(x, &h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let candidate: Vec<f64> = params
            .cell
            .preactivation(x, &h_prev)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let cell: Vec<f64> = (0..h)
            .map(|k| forget[k] * c_prev[k] + input[k] * candidate[k])
            .collect();
        let hidden: Vec<f64> = (0..h).map(|k| output[k] * cell[k].tanh()).collect();
        h_prev.clone_from(&hidden);
        c_prev.clone_from(&cell);
        steps.push(Step {
            x: x.clone(),
            forget,
            input,
            output,
            candidate,
            cell,
            hidden,
        });
    }
    Ok(steps)
}

/// Forward pass over a non-empty input sequence, ending in `softmax(W_out h_T)`.
pub fn forward(params: &LstmParams, inputs: &[Vec<f64>]) -> Result<ForwardTrace> {
    if inputs.is_empty() {
        return Err(Error::Dimension("empty input sequence".into()));
    }
    let steps = run_cell(params, inputs)?;
    let logits = params.w_out.mul_vec(&steps.last().unwrap().hidden);
    let probs = softmax_probs(&logits);
    Ok(ForwardTrace {
        steps,
        logits,
        probs,
    })
}

pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    softmax(logits)
}

/// Looks up the embedding row of every token.
pub fn embed(params: &LstmParams, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
    if tokens.is_empty() {
        return Err(Error::Dimension("empty document".into()));
    }
    tokens
        .iter()
        .map(|&id| {
            if (id as usize) < params.embedding.rows() {
                Ok(params.embedding.row(id as usize).to_vec())
            } else {
                Err(Error::TokenOutOfRange {
                    id,
                    size: params.embedding.rows(),
                })
            }
        })
        .collect()
}

pub fn forward_doc(params: &LstmParams, doc: &Document) -> Result<ForwardTrace> {
    forward(params, &embed(params, &doc.tokens)?)
}

/// Most probable class (ties go to the smaller index) and the class distribution.
pub fn predict(params: &LstmParams, doc: &Document) -> Result<(usize, Vec<f64>)> {
    let trace = forward_doc(params, doc)?;
    Ok((argmax(&trace.probs), trace.probs))
}
