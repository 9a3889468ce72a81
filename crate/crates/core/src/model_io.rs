//! Plain-text model files. Floats are written with 17 significant digits, which
//! round-trips every finite `f64` exactly, so save -> load -> save is byte-identical.
//!
//! ```text
//! lstm-distill-model 1
//! kind classifier
//! meta seed=7 epochs=4 dev_score=1.0000000000000000e0
//! vocab 3
//! <unk>
//! @ENT@
//! word
//! net reader vocab=3 embed=2 hidden=2 classes=2 input=2
//! tensor embedding 3 2
//! 1.0000000000000000e-1 -2.5000000000000000e-2
//! ...
//! end
//! ```

use std::fs;
use std::path::Path;

use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lstm::{Dims, Gate, LstmParams, TENSOR_NAMES};
use crate::qa::QaParams;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "lstm-distill-model";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Dev accuracy for classifiers, dev hits@1 for readers.
    pub dev_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Classifier(LstmParams),
    Qa(QaParams),
}

impl Model {
    fn kind(&self) -> &'static str {
        match self {
            Model::Classifier(_) => "classifier",
            Model::Qa(_) => "qa",
        }
    }

    fn nets(&self) -> Vec<(&'static str, &LstmParams)> {
        match self {
            Model::Classifier(p) => vec![("reader", p)],
            Model::Qa(q) => vec![("encoder", &q.encoder), ("reader", &q.reader)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub vocab: Vocab,
    pub meta: ModelMeta,
    pub model: Model,
}

impl ModelFile {
    pub fn classifier(&self) -> Result<&LstmParams> {
        match &self.model {
            Model::Classifier(p) => Ok(p),
            Model::Qa(_) => Err(Error::Format("expected a classifier model, found qa".into())),
        }
    }

    pub fn qa(&self) -> Result<&QaParams> {
        match &self.model {
            Model::Qa(q) => Ok(q),
            Model::Classifier(_) => Err(Error::Format("expected a qa model, found classifier".into())),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn model_to_string(file: &ModelFile) -> String {
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\nkind {}\n", file.model.kind());
    out.push_str(&format!(
        "meta seed={} epochs={} dev_score={}\n",
        file.meta.seed,
        file.meta.epochs,
        fmt_f64(file.meta.dev_score)
    ));
    out.push_str(&format!("vocab {}\n", file.vocab.len()));
    for tok in file.vocab.tokens() {
        out.push_str(tok);
        out.push('\n');
    }
    for (name, p) in file.model.nets() {
        let d = &p.dims;
        out.push_str(&format!(
            "net {name} vocab={} embed={} hidden={} classes={} input={}\n",
            d.vocab, d.embed, d.hidden, d.classes, d.input
        ));
        let shapes = LstmParams::tensor_shapes(d);
        for ((tname, t), (r, c)) in TENSOR_NAMES.iter().zip(p.tensors()).zip(shapes) {
            out.push_str(&format!("tensor {tname} {r} {c}\n"));
            if c == 0 {
                continue;
            }
            for row in t.chunks(c) {
                let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
    }
    out.push_str("end\n");
    out
}

pub fn save_model(path: impl AsRef<Path>, file: &ModelFile) -> Result<()> {
    fs::write(path, model_to_string(file))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    parse_model(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(line)
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.pos,
            msg: msg.into(),
        }
    }

    /// Next line split as `keyword rest...`, requiring the keyword.
    fn expect(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next(keyword)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}`")));
        }
        Ok(parts.collect())
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| lines.err(format!("bad {what} {s:?}")))
}

fn key_values<'a>(lines: &Lines, parts: &[&'a str], keys: &[&str]) -> Result<Vec<&'a str>> {
    if parts.len() != keys.len() {
        return Err(lines.err(format!("expected {} fields", keys.len())));
    }
    parts
        .iter()
        .zip(keys)
        .map(|(part, key)| match part.split_once('=') {
            Some((k, v)) if k == *key => Ok(v),
            _ => Err(lines.err(format!("expected `{key}=...`"))),
        })
        .collect()
}

pub fn parse_model(input: &str) -> Result<ModelFile> {
    let mut lines = Lines {
        lines: input.lines().collect(),
        pos: 0,
    };
    let header = lines.next("header")?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::Format("not an lstm-distill model file".into()));
    }
    let found: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format("missing format version".into()))?;
    if found != FORMAT_VERSION {
        return Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }

    let kind = lines.expect("kind")?;
    let nets: &[&str] = match kind.as_slice() {
        ["classifier"] => &["reader"],
        ["qa"] => &["encoder", "reader"],
        _ => return Err(lines.err("unknown model kind")),
    };

    let meta_parts = lines.expect("meta")?;
    let meta_values = key_values(&lines, &meta_parts, &["seed", "epochs", "dev_score"])?;
    let meta = ModelMeta {
        seed: parse_num(&lines, meta_values[0], "seed")?,
        epochs: parse_num(&lines, meta_values[1], "epochs")?,
        dev_score: parse_num(&lines, meta_values[2], "dev_score")?,
    };

    let vocab_parts = lines.expect("vocab")?;
    let n: usize = match vocab_parts.as_slice() {
        [n] => parse_num(&lines, n, "vocabulary size")?,
        _ => return Err(lines.err("expected `vocab <size>`")),
    };
    let mut tokens = Vec::new();
    for _ in 0..n {
        match lines.next("vocabulary token") {
            Ok(tok) => tokens.push(tok.to_owned()),
            Err(_) => {
                return Err(Error::CorruptArray {
                    name: "vocab".into(),
                    expected: n,
                    found: tokens.len(),
                })
            }
        }
    }
    let vocab = Vocab::from_tokens(tokens)?;

    let mut parsed = Vec::new();
    for &name in nets {
        parsed.push(parse_net(&mut lines, name)?);
    }
    lines.expect("end")?;
    if lines.peek().is_some() {
        return Err(lines.err("trailing content after `end`"));
    }
    for p in &parsed {
        if p.dims.vocab != vocab.len() {
            return Err(Error::Dimension(format!(
                "network vocabulary {} != file vocabulary {}",
                p.dims.vocab,
                vocab.len()
            )));
        }
    }
    let model = if parsed.len() == 1 {
        Model::Classifier(parsed.pop().unwrap())
    } else {
        let reader = parsed.pop().unwrap();
        let encoder = parsed.pop().unwrap();
        let qp = QaParams { encoder, reader };
        qp.validate()?;
        Model::Qa(qp)
    };
    Ok(ModelFile { vocab, meta, model })
}

fn parse_net(lines: &mut Lines, name: &str) -> Result<LstmParams> {
    let parts = lines.expect("net")?;
    if parts.first() != Some(&name) {
        return Err(lines.err(format!("expected network `{name}`")));
    }
    let v = key_values(
        lines,
        &parts[1..],
        &["vocab", "embed", "hidden", "classes", "input"],
    )?;
    let dims = Dims {
        vocab: parse_num(lines, v[0], "vocab")?,
        embed: parse_num(lines, v[1], "embed")?,
        hidden: parse_num(lines, v[2], "hidden")?,
        classes: parse_num(lines, v[3], "classes")?,
        input: parse_num(lines, v[4], "input")?,
    };
    let shapes = LstmParams::tensor_shapes(&dims);
    let mut arrays = Vec::with_capacity(TENSOR_NAMES.len());
    for (tname, (r, c)) in TENSOR_NAMES.iter().zip(shapes) {
        let expected = r
            .checked_mul(c)
            .ok_or_else(|| Error::Dimension(format!("tensor {tname} is too large")))?;
        let header = match lines.peek() {
            Some(l) if l.starts_with("tensor ") => lines.expect("tensor")?,
            _ => {
                return Err(Error::CorruptArray {
                    name: format!("{name}.{tname}"),
                    expected,
                    found: 0,
                })
            }
        };
        match header.as_slice() {
            [n, hr, hc] if n == tname => {
                let (hr, hc): (usize, usize) =
                    (parse_num(lines, hr, "rows")?, parse_num(lines, hc, "cols")?);
                if (hr, hc) != (r, c) {
                    return Err(Error::CorruptArray {
                        name: format!("{name}.{tname}"),
                        expected,
                        found: hr.saturating_mul(hc),
                    });
                }
            }
            _ => return Err(lines.err(format!("expected `tensor {tname} <rows> <cols>`"))),
        }
        let mut values = Vec::new();
        while let Some(line) = lines.peek() {
            if line.starts_with("tensor ") || line.starts_with("net ") || line == "end" {
                break;
            }
            lines.pos += 1;
            for tok in line.split_whitespace() {
                if values.len() == expected {
                    return Err(Error::CorruptArray {
                        name: format!("{name}.{tname}"),
                        expected,
                        found: expected + 1,
                    });
                }
                match tok.parse::<f64>() {
                    Ok(x) => values.push(x),
                    // A cut inside the last number of a truncated file.
                    Err(_) if lines.peek().is_none() => {
                        return Err(Error::CorruptArray {
                            name: format!("{name}.{tname}"),
                            expected,
                            found: values.len(),
                        })
                    }
                    Err(_) => return Err(lines.err(format!("bad value {tok:?}"))),
                }
            }
        }
        if values.len() != expected {
            return Err(Error::CorruptArray {
                name: format!("{name}.{tname}"),
                expected,
                found: values.len(),
            });
        }
        arrays.push((r, c, values));
    }

    let mut it = arrays.into_iter();
    let mut next = || it.next().expect("one array per tensor name");
    let matrix = |(r, c, v): (usize, usize, Vec<f64>)| Matrix::from_vec(r, c, v);
    let embedding = matrix(next());
    let mut gates = Vec::with_capacity(4);
    for _ in 0..4 {
        gates.push(Gate {
            w: matrix(next()),
            v: matrix(next()),
            b: next().2,
        });
    }
    let w_out = matrix(next());
    let [forget, input, output, cell]: [Gate; 4] = gates.try_into().expect("four gates");
    let params = LstmParams {
        dims,
        embedding,
        forget,
        input,
        output,
        cell,
        w_out,
    };
    params.validate()?;
    Ok(params)
}
