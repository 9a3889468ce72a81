//! Per-word importance scores.
//!
//! `beta` splits `W_i h_T` into per-word differences of `tanh(c_j)`; `gamma` does the same
//! over partial sums of the additive cell contributions `e_{j,T}`, so the forget gates
//! after word `j` damp its share. Both are stored as logs and sum exactly (up to rounding)
//! to the logits. `gradient` is the normalized norm of the loss gradient with respect to
//! each word's embedding.

use std::fmt;
use std::str::FromStr;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::linalg::{dot, l2_norm, Matrix};
use crate::lstm::{embed, forward, ForwardTrace, LstmParams, Step};
use crate::training::backward_cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Beta,
    Gamma,
    Gradient,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Beta, Method::Gamma, Method::Gradient];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Beta => "beta",
            Method::Gamma => "gamma",
            Method::Gradient => "gradient",
        }
    }

    /// Whether scores are log multiplicative factors (as opposed to normalized magnitudes).
    pub fn is_log_domain(self) -> bool {
        !matches!(self, Method::Gradient)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown importance method {s:?}")))
    }
}

/// `scores[j][i]`: contribution of word `j` to class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    pub method: Method,
    pub scores: Vec<Vec<f64>>,
}

impl ImportanceMatrix {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Column sums; for beta and gamma these reproduce the logits.
    pub fn class_totals(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.num_classes()];
        for row in &self.scores {
            for (t, s) in totals.iter_mut().zip(row) {
                *t += s;
            }
        }
        totals
    }
}

/// Row `j` is `e_{j,T}`, word `j`'s additive share of the final cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct CellContributions {
    pub e: Vec<Vec<f64>>,
}

pub fn cell_contributions(trace: &ForwardTrace) -> CellContributions {
    CellContributions {
        e: cell_contributions_at(&trace.steps, trace.len() - 1),
    }
}

/// Additive decomposition of `c_end` over words `0..=end`, using a single backward sweep
/// for the suffix forget-gate products.
pub fn cell_contributions_at(steps: &[Step], end: usize) -> Vec<Vec<f64>> {
    let h = steps[end].cell.len();
    let mut suffix = vec![1.0; h];
    let mut e = vec![Vec::new(); end + 1];
    for j in (0..=end).rev() {
        let s = &steps[j];
        e[j] = (0..h)
            .map(|k| suffix[k] * s.input[k] * s.candidate[k])
            .collect();
        for (p, f) in suffix.iter_mut().zip(&s.forget) {
            *p *= f;
        }
    }
    e
}

/// Log factors `W_i (o ⊙ (tanh(a_j) - tanh(a_{j-1})))` for a sequence of states `a_j`
/// with `a_{-1} = 0`.
fn telescoped_scores(w_out: &Matrix, gate: &[f64], states: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = gate.len();
    let mut prev = vec![0.0; h];
    states
        .iter()
        .map(|state| {
            let cur: Vec<f64> = state.iter().map(|c| c.tanh()).collect();
            let delta: Vec<f64> = (0..h).map(|k| gate[k] * (cur[k] - prev[k])).collect();
            prev = cur;
            (0..w_out.rows()).map(|i| dot(w_out.row(i), &delta)).collect()
        })
        .collect()
}

pub fn beta_scores(params: &LstmParams, trace: &ForwardTrace) -> ImportanceMatrix {
    beta_scores_at(&params.w_out, &trace.steps, trace.len() - 1)
}

/// Beta scores with position `end` treated as the terminal state.
pub fn beta_scores_at(w_out: &Matrix, steps: &[Step], end: usize) -> ImportanceMatrix {
    let cells: Vec<Vec<f64>> = steps[..=end].iter().map(|s| s.cell.clone()).collect();
    ImportanceMatrix {
        method: Method::Beta,
        scores: telescoped_scores(w_out, &steps[end].output, &cells),
    }
}

pub fn gamma_scores(params: &LstmParams, trace: &ForwardTrace) -> ImportanceMatrix {
    gamma_scores_at(&params.w_out, &trace.steps, trace.len() - 1)
}

/// Gamma scores with position `end` treated as the terminal state.
pub fn gamma_scores_at(w_out: &Matrix, steps: &[Step], end: usize) -> ImportanceMatrix {
    let e = cell_contributions_at(steps, end);
    let h = steps[end].cell.len();
    let mut running = vec![0.0; h];
    let partial: Vec<Vec<f64>> = e
        .iter()
        .map(|row| {
            for (p, x) in running.iter_mut().zip(row) {
                *p += x;
            }
            running.clone()
        })
        .collect();
    ImportanceMatrix {
        method: Method::Gamma,
        scores: telescoped_scores(w_out, &steps[end].output, &partial),
    }
}

/// Divides each class column by its maximum; all-zero columns stay zero.
pub fn normalize_columns(raw: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let classes = raw.first().map_or(0, Vec::len);
    let mut max = vec![0.0f64; classes];
    for row in &raw {
        for (m, v) in max.iter_mut().zip(row) {
            *m = m.max(*v);
        }
    }
    raw.into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&max)
                .map(|(v, &m)| if m > 0.0 { v / m } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Unnormalized gradient magnitudes: for each class `i`, the L2 norm of
/// `d(-log p_i)/d x_j` over the first `embed_width` input coordinates, with the loss read
/// from the output head at position `end`.
pub fn gradient_raw_at(
    params: &LstmParams,
    steps: &[Step],
    probs_at_end: &[f64],
    end: usize,
    embed_width: usize,
) -> Vec<Vec<f64>> {
    let classes = probs_at_end.len();
    let h = params.dims.hidden;
    let mut raw = vec![vec![0.0; classes]; end + 1];
    let mut scratch = LstmParams {
        embedding: Matrix::zeros(0, 0),
        ..LstmParams::zeros(crate::lstm::Dims {
            vocab: 0,
            ..params.dims
        })
    };
    for class in 0..classes {
        let mut dlogits = probs_at_end.to_vec();
        dlogits[class] -= 1.0;
        let mut dh_ext = vec![vec![0.0; h]; end + 1];
        params.w_out.mul_vec_t_acc(&dlogits, &mut dh_ext[end]);
        let d_inputs = backward_cell(params, &steps[..=end], &dh_ext, &mut scratch);
        for (row, dx) in raw.iter_mut().zip(&d_inputs) {
            row[class] = l2_norm(&dx[..embed_width]);
        }
    }
    raw
}

/// Gradient baseline: per class, `‖∂(-log p_i)/∂x_j‖` divided by its maximum over `j`.
pub fn gradient_scores(params: &LstmParams, doc: &Document) -> Result<ImportanceMatrix> {
    let trace = forward(params, &embed(params, &doc.tokens)?)?;
    let raw = gradient_raw_at(
        params,
        &trace.steps,
        &trace.probs,
        trace.len() - 1,
        params.dims.embed,
    );
    Ok(ImportanceMatrix {
        method: Method::Gradient,
        scores: normalize_columns(raw),
    })
}

/// Computes the chosen measure for one document.
pub fn importance(params: &LstmParams, doc: &Document, method: Method) -> Result<ImportanceMatrix> {
    match method {
        Method::Gradient => gradient_scores(params, doc),
        Method::Beta | Method::Gamma => {
            let trace = forward(params, &embed(params, &doc.tokens)?)?;
            Ok(match method {
                Method::Beta => beta_scores(params, &trace),
                _ => gamma_scores(params, &trace),
            })
        }
    }
}

/// Scalar heat per word for `class`: the log-odds margin against the strongest other
/// class for beta/gamma, the normalized score itself for gradient.
pub fn word_heat(imp: &ImportanceMatrix, class: usize) -> Result<Vec<f64>> {
    let classes = imp.num_classes();
    if class >= classes {
        return Err(Error::LabelOutOfRange { label: class, classes });
    }
    Ok(imp
        .scores
        .iter()
        .map(|row| match imp.method {
            Method::Gradient => row[class],
            _ => {
                let rival = row
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != class)
                    .map(|(_, &s)| s)
                    .fold(f64::NEG_INFINITY, f64::max);
                if rival.is_finite() {
                    row[class] - rival
                } else {
                    row[class]
                }
            }
        })
        .collect())
}

/// `position<TAB>token<TAB>class_0_logscore ...<TAB>method`, with a header row.
pub fn to_tsv(imp: &ImportanceMatrix, tokens: &[&str]) -> String {
    let mut out = String::from("position\ttoken");
    for i in 0..imp.num_classes() {
        out.push_str(&format!("\tclass_{i}_logscore"));
    }
    out.push_str("\tmethod\n");
    for (j, row) in imp.scores.iter().enumerate() {
        out.push_str(&format!("{}\t{}", j + 1, tokens.get(j).copied().unwrap_or("")));
        for s in row {
            out.push_str(&format!("\t{s}"));
        }
        out.push_str(&format!("\t{}\n", imp.method));
    }
    out
}
