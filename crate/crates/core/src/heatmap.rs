//! Word heatmaps: bigger and darker means more important.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::importance::Method;

pub const BASE_FONT_PX: f64 = 10.0;
pub const EXTRA_FONT_PX: f64 = 30.0;
/// Gray level of a zero-importance word.
const LIGHT_GRAY: f64 = 200.0;
const POSITIVE_TINT: &str = "#dbe9f6";
const NEGATIVE_TINT: &str = "#f9dcdc";

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapDoc {
    pub tokens: Vec<String>,
    /// Signed heat per token; positive supports the rendered class.
    pub heat: Vec<f64>,
    pub method: Method,
    pub question: Option<String>,
}

impl HeatmapDoc {
    pub fn new(tokens: Vec<String>, heat: Vec<f64>, method: Method) -> Result<Self> {
        if tokens.len() != heat.len() {
            return Err(Error::Dimension(format!(
                "{} tokens but {} heat values",
                tokens.len(),
                heat.len()
            )));
        }
        if let Some(h) = heat.iter().find(|h| !h.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite heat value {h}")));
        }
        Ok(Self {
            tokens,
            heat,
            method,
            question: None,
        })
    }

    pub fn with_question(mut self, question: impl Into<String>) -> Self {
        self.question = Some(question.into());
        self
    }

    /// `|z_j| / max |z|`, all zero when every heat is zero.
    pub fn ratios(&self) -> Vec<f64> {
        let max = self.heat.iter().fold(0.0f64, |m, h| m.max(h.abs()));
        self.heat
            .iter()
            .map(|h| if max > 0.0 { h.abs() / max } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Html,
    Ansi,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "html" => Ok(Format::Html),
            "ansi" => Ok(Format::Ansi),
            other => Err(Error::InvalidArgument(format!("unknown heatmap format {other:?}"))),
        }
    }
}

pub fn render(doc: &HeatmapDoc, format: Format) -> String {
    match format {
        Format::Html => render_html(doc),
        Format::Ansi => render_ansi(doc),
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// One `<span>` per token inside a `<div>`.
pub fn render_html(doc: &HeatmapDoc) -> String {
    let mut out = format!("<div class=\"heatmap\" data-method=\"{}\">\n", doc.method);
    if let Some(q) = &doc.question {
        let _ = writeln!(out, "<p class=\"question\">{}</p>", escape(q));
    }
    for ((tok, &h), r) in doc.tokens.iter().zip(&doc.heat).zip(doc.ratios()) {
        let gray = (LIGHT_GRAY * (1.0 - r)).round() as u8;
        let tint = if h > 0.0 {
            POSITIVE_TINT
        } else if h < 0.0 {
            NEGATIVE_TINT
        } else {
            "transparent"
        };
        let _ = writeln!(
            out,
            "<span style=\"font-size:{:.2}px;color:rgb({gray},{gray},{gray});background:{tint}\">{}</span>",
            BASE_FONT_PX + EXTRA_FONT_PX * r,
            escape(tok)
        );
    }
    out.push_str("</div>\n");
    out
}

/// Terminal rendering: bold and colored at ratio >= 0.66, colored at >= 0.33, plain below.
/// Green supports the class, red opposes it.
pub fn render_ansi(doc: &HeatmapDoc) -> String {
    let mut words = Vec::with_capacity(doc.tokens.len());
    for ((tok, &h), r) in doc.tokens.iter().zip(&doc.heat).zip(doc.ratios()) {
        let color = if h >= 0.0 { 32 } else { 31 };
        words.push(if r >= 0.66 {
            format!("\x1b[1;{color}m{tok}\x1b[0m")
        } else if r >= 0.33 {
            format!("\x1b[{color}m{tok}\x1b[0m")
        } else {
            tok.clone()
        });
    }
    let mut out = String::new();
    if let Some(q) = &doc.question {
        let _ = writeln!(out, "Q: {q}");
    }
    out.push_str(&words.join(" "));
    out.push('\n');
    out
}
