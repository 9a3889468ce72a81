//! Built-in identity suite: exact decompositions, BPTT against finite differences and the
//! phrase-score algebra, checked on random models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;
use crate::importance::{beta_scores, cell_contributions, gamma_scores, ImportanceMatrix, Method};
use crate::lstm::{forward_doc, Dims, LstmParams};
use crate::phrases::score_phrase;
use crate::training::{backward_doc, doc_loss, init_params};

pub const TELESCOPING_TOL: f64 = 1e-9;
pub const RECONSTRUCTION_TOL: f64 = 1e-10;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const GRADIENT_ABS_FLOOR: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-5;
pub const SCORE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error and the number of cases.
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}. {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

/// A random model and document: `d, h <= max_dim`, `T <= max_len`, `C` in {2, 3}.
fn random_case(rng: &mut ChaCha8Rng, max_dim: usize, max_len: usize) -> (LstmParams, Document) {
    let vocab = rng.gen_range(3..12);
    let dims = Dims::classifier(
        vocab,
        rng.gen_range(1..=max_dim),
        rng.gen_range(1..=max_dim),
        rng.gen_range(2..=3),
    );
    let mut params = init_params(dims, rng.gen());
    // Push some gates toward saturation.
    let scale = rng.gen_range(0.5..3.0);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v *= scale;
        }
    }
    for b in params.forget.b.iter_mut() {
        *b = rng.gen_range(-2.0..2.0);
    }
    let len = rng.gen_range(1..=max_len);
    let doc = Document::new((0..len).map(|_| rng.gen_range(0..vocab as u32)).collect(), 0);
    (params, doc)
}

fn telescoping(id: u8, name: &'static str, seed: u64, models: usize, method: Method) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..models {
        let (params, doc) = random_case(&mut rng, 16, 50);
        let trace = forward_doc(&params, &doc).expect("valid random case");
        let imp = match method {
            Method::Beta => beta_scores(&params, &trace),
            _ => gamma_scores(&params, &trace),
        };
        for (total, logit) in imp.class_totals().iter().zip(&trace.logits) {
            worst = worst.max((total - logit).abs());
        }
    }
    CheckResult {
        id,
        name,
        passed: worst < TELESCOPING_TOL,
        detail: format!("max |sum log score - W_i h_T| = {worst:.3e} over {models} models"),
    }
}

pub fn check_beta_telescoping(seed: u64, models: usize) -> CheckResult {
    telescoping(1, "beta telescoping", seed, models, Method::Beta)
}

pub fn check_gamma_telescoping(seed: u64, models: usize) -> CheckResult {
    telescoping(2, "gamma telescoping", seed, models, Method::Gamma)
}

pub fn check_cell_reconstruction(seed: u64, models: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..models {
        let (params, doc) = random_case(&mut rng, 16, 50);
        let trace = forward_doc(&params, &doc).expect("valid random case");
        let contributions = cell_contributions(&trace);
        let c_t = &trace.steps.last().unwrap().cell;
        for (k, c) in c_t.iter().enumerate() {
            let sum: f64 = contributions.e.iter().map(|row| row[k]).sum();
            worst = worst.max((sum - c).abs());
        }
    }
    CheckResult {
        id: 3,
        name: "additive cell reconstruction",
        passed: worst < RECONSTRUCTION_TOL,
        detail: format!("max |sum_j e_j - c_T| = {worst:.3e} over {models} models"),
    }
}

pub fn check_gradients(seed: u64, models: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut failures = 0usize;
    let mut checked = 0usize;
    for _ in 0..models {
        let (mut params, mut doc) = random_case(&mut rng, 4, 8);
        doc.label = rng.gen_range(0..params.dims.classes);
        let (_, grads) = backward_doc(&params, &doc).expect("valid random case");
        let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, g) in analytic.iter().enumerate() {
            for (k, &a) in g.iter().enumerate() {
                let orig = params.tensors()[ti][k];
                params.tensors_mut()[ti][k] = orig + FD_STEP;
                let up = doc_loss(&params, &doc).unwrap();
                params.tensors_mut()[ti][k] = orig - FD_STEP;
                let down = doc_loss(&params, &doc).unwrap();
                params.tensors_mut()[ti][k] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let diff = (a - numeric).abs();
                worst_abs = worst_abs.max(diff);
                checked += 1;
                if diff < GRADIENT_ABS_FLOOR {
                    continue;
                }
                let rel = diff / a.abs().max(numeric.abs());
                worst_rel = worst_rel.max(rel);
                if rel >= GRADIENT_REL_TOL {
                    failures += 1;
                }
            }
        }
    }
    CheckResult {
        id: 4,
        name: "BPTT vs finite differences",
        passed: failures == 0,
        detail: format!(
            "max abs diff {worst_abs:.3e}, max relative error above the {GRADIENT_ABS_FLOOR:e} floor {worst_rel:.3e}, {checked} coordinates in {models} models ({failures} failing)"
        ),
    }
}

pub fn check_phrase_scores(seed: u64, cases: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut inconsistent = 0usize;
    for case in 0..cases {
        let method = Method::ALL[case % 3];
        let len = rng.gen_range(3..30);
        let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(0..4)).collect();
        let scores: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                (0..2)
                    .map(|_| match method {
                        Method::Gradient => rng.gen_range(0.0..1.0),
                        _ => rng.gen_range(-3.0..3.0),
                    })
                    .collect()
            })
            .collect();
        let imp = ImportanceMatrix { method, scores };
        let k = rng.gen_range(1..=3.min(len));
        let b = rng.gen_range(0..=len - k);
        let phrase = tokens[b..b + k].to_vec();
        let s = score_phrase(&phrase, &[&tokens], std::slice::from_ref(&imp), method)
            .expect("phrase occurs");
        worst = worst.max((s.s1 * s.s2 - 1.0).abs());
        let expected_class = if s.s1 >= s.s2 { 0 } else { 1 };
        if s.class != expected_class || s.score != s.s1.max(s.s2) {
            inconsistent += 1;
        }
    }
    let oracle_err = hand_corpus_error();
    CheckResult {
        id: 5,
        name: "phrase-score algebra",
        passed: worst <= SCORE_TOL && inconsistent == 0 && oracle_err <= SCORE_TOL,
        detail: format!(
            "max |S1*S2 - 1| = {worst:.3e} over {cases} cases, {inconsistent} argmax inconsistencies, hand-corpus relative error {oracle_err:.3e}"
        ),
    }
}

/// Relative error of `score_phrase` against direct products and means on a fixed corpus.
fn hand_corpus_error() -> f64 {
    let docs: Vec<Vec<u32>> = vec![vec![1, 2, 3, 2, 3], vec![4, 2, 3], vec![2, 5, 2, 3]];
    let rows: [&[[f64; 2]]; 3] = [
        &[[0.1, -0.1], [0.7, -0.2], [0.4, 0.1], [-0.3, 0.2], [0.9, -0.5]],
        &[[0.0, 0.0], [0.2, 0.6], [-0.1, 0.3]],
        &[[1.2, -1.0], [0.5, 0.5], [0.05, 0.0], [0.3, -0.4]],
    ];
    let doc_refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
    let mut worst = 0.0f64;
    for method in [Method::Beta, Method::Gradient] {
        let imps: Vec<ImportanceMatrix> = rows
            .iter()
            .map(|r| ImportanceMatrix {
                method,
                scores: r
                    .iter()
                    .map(|x| match method {
                        Method::Gradient => vec![x[0].abs(), x[1].abs()],
                        _ => x.to_vec(),
                    })
                    .collect(),
            })
            .collect();
        let phrase = [2u32, 3];
        let (mut num, mut den) = (Vec::new(), Vec::new());
        for (d, tokens) in docs.iter().enumerate() {
            for b in 0..tokens.len() - 1 {
                if tokens[b..b + 2] == phrase {
                    let r = &imps[d].scores[b..b + 2];
                    match method {
                        Method::Gradient => {
                            num.push(r[0][0] + r[1][0]);
                            den.push(r[0][1] + r[1][1]);
                        }
                        _ => {
                            num.push(r[0][0].exp() * r[1][0].exp());
                            den.push(r[0][1].exp() * r[1][1].exp());
                        }
                    }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let s1 = mean(&num) / mean(&den);
        let got = score_phrase(&phrase, &doc_refs, &imps, method).expect("phrase occurs");
        worst = worst.max((got.s1 - s1).abs() / s1);
        worst = worst.max((got.s2 - 1.0 / s1).abs() * s1);
    }
    worst
}

/// Every check at full size: 200 models for the identities, 20 for gradients, 1000 score cases.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        check_beta_telescoping(seed, 200),
        check_gamma_telescoping(seed, 200),
        check_cell_reconstruction(seed, 200),
        check_gradients(seed, 20),
        check_phrase_scores(seed, 1000),
    ]
}
