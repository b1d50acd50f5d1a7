//! Population edge indices built from per-subject, per-delay verdicts.
//!
//! For an ordered pair X→Y with N subjects and D delays, let `n(d)` be the
//! number of subjects rejecting linearity at delay d and `wald(d)` the number
//! of those that also pass the Wald test. With the majority gate
//! `g(d) = 1[n(d) ≥ majority·N]`:
//!
//! ```text
//! TCI  = 100 / (D·N) · Σ_d g(d) · n(d)
//! TGCI = 100 / (D·N) · Σ_d g(d) · wald(d)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAJORITY: f64 = 0.7;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_D_MAX: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayTally {
    /// Index d-1 holds the count at delay d.
    pub n_by_delay: Vec<usize>,
    pub wald_by_delay: Vec<usize>,
    pub n_subjects: usize,
}

impl DelayTally {
    pub fn zeros(d_max: usize, n_subjects: usize) -> Self {
        Self {
            n_by_delay: vec![0; d_max],
            wald_by_delay: vec![0; d_max],
            n_subjects,
        }
    }

    pub fn d_max(&self) -> usize {
        self.n_by_delay.len()
    }

    fn gate(&self, n: usize, majority: f64) -> bool {
        n as f64 >= majority * self.n_subjects as f64
    }

    fn index(&self, counts: &[usize], majority: f64) -> f64 {
        let denom = (self.d_max() * self.n_subjects) as f64;
        if denom == 0.0 {
            return 0.0;
        }
        let sum: usize = self
            .n_by_delay
            .iter()
            .zip(counts)
            .filter(|(&n, _)| self.gate(n, majority))
            .map(|(_, &c)| c)
            .sum();
        sum as f64 / denom * 100.0
    }
}

/// Threshold Connectivity Index in [0, 100].
pub fn tci(tally: &DelayTally, majority: f64) -> f64 {
    tally.index(&tally.n_by_delay, majority)
}

/// Threshold Granger Causality Index in [0, 100].
pub fn tgci(tally: &DelayTally, majority: f64) -> f64 {
    tally.index(&tally.wald_by_delay, majority)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeIndex {
    pub source: String,
    pub target: String,
    pub tci: f64,
    pub tgci: f64,
    pub tally: DelayTally,
}

/// Combined (across epochs) verdict inputs for one subject, direction and
/// delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayVerdict {
    pub delay: usize,
    pub linearity_p: f64,
    /// Only present where the Wald test was run.
    pub wald_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEdgeResult {
    pub subject: String,
    pub source: String,
    pub target: String,
    pub delays: Vec<DelayVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub alpha: f64,
    pub majority: f64,
    pub d_max: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            majority: DEFAULT_MAJORITY,
            d_max: DEFAULT_D_MAX,
        }
    }
}

/// Tallies verdicts per ordered pair, emitting both directions of every pair.
/// A subject counts toward `wald(d)` only if it also rejects linearity at d.
pub fn build_edge_table(
    results: &[SubjectEdgeResult],
    pairs: &[(String, String)],
    params: &IndexParams,
) -> Result<Vec<EdgeIndex>> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let mut by_edge: BTreeMap<(&str, &str), Vec<&SubjectEdgeResult>> = BTreeMap::new();
    for r in results {
        by_edge.entry((&r.source, &r.target)).or_default().push(r);
    }
    let all_subjects: BTreeSet<&str> = results.iter().map(|r| r.subject.as_str()).collect();
    let n_subjects = all_subjects.len();

    let mut out = Vec::new();
    for (a, b) in pairs {
        for (src, tgt) in [(a.as_str(), b.as_str()), (b.as_str(), a.as_str())] {
            let rows = by_edge.get(&(src, tgt)).map(Vec::as_slice).unwrap_or(&[]);
            let subjects: BTreeSet<&str> = rows.iter().map(|r| r.subject.as_str()).collect();
            if subjects != all_subjects || rows.len() != n_subjects {
                return Err(Error::InconsistentSubjectSets(format!(
                    "{src}->{tgt} has {} of {n_subjects} subjects",
                    subjects.len()
                )));
            }
            let mut tally = DelayTally::zeros(params.d_max, n_subjects);
            for r in rows {
                for v in &r.delays {
                    if v.delay == 0 || v.delay > params.d_max {
                        continue;
                    }
                    if v.linearity_p <= params.alpha {
                        tally.n_by_delay[v.delay - 1] += 1;
                        if v.wald_p.is_some_and(|p| p <= params.alpha) {
                            tally.wald_by_delay[v.delay - 1] += 1;
                        }
                    }
                }
            }
            out.push(EdgeIndex {
                source: src.to_string(),
                target: tgt.to_string(),
                tci: tci(&tally, params.majority),
                tgci: tgci(&tally, params.majority),
                tally,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFormat {
    Dot,
    Json,
}

impl FromStr for GraphFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphWeight {
    #[default]
    Tci,
    Tgci,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    #[serde(rename = "N")]
    pub n_subjects: usize,
    #[serde(rename = "D")]
    pub d_max: usize,
    pub alpha: f64,
    pub majority: f64,
    /// Rule used to pool epoch p-values.
    #[serde(default = "fisher")]
    pub combination: String,
}

fn fisher() -> String {
    crate::inference::COMBINATION_METHOD.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonEdge {
    pub source: String,
    pub target: String,
    pub tci: f64,
    pub tgci: f64,
    pub n_by_delay: Vec<usize>,
    pub wald_by_delay: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDocument {
    pub edges: Vec<JsonEdge>,
    pub meta: GraphMeta,
}

impl EdgeDocument {
    pub fn new(edges: &[EdgeIndex], meta: GraphMeta) -> Self {
        Self {
            edges: edges
                .iter()
                .map(|e| JsonEdge {
                    source: e.source.clone(),
                    target: e.target.clone(),
                    tci: e.tci,
                    tgci: e.tgci,
                    n_by_delay: e.tally.n_by_delay.clone(),
                    wald_by_delay: e.tally.wald_by_delay.clone(),
                })
                .collect(),
            meta,
        }
    }
}

/// Pen width on a linear map from index [0, 100] to [0.5, 5.0].
pub fn pen_width(index: f64) -> f64 {
    0.5 + index.clamp(0.0, 100.0) / 100.0 * 4.5
}

#[derive(Debug, Clone, Default)]
pub struct GraphOptions {
    pub weight: GraphWeight,
    /// Edges whose weight index falls below this are left out of DOT output.
    pub threshold: f64,
    /// Channel label → region name; adds direction attributes.
    pub regions: HashMap<String, String>,
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn export_graph(edges: &[EdgeIndex], fmt: GraphFormat, meta: &GraphMeta, opts: &GraphOptions) -> Result<String> {
    match fmt {
        GraphFormat::Json => Ok(serde_json::to_string_pretty(&EdgeDocument::new(edges, meta.clone()))?),
        GraphFormat::Dot => {
            let mut s = String::from("digraph tar4c {\n");
            let mut nodes = BTreeSet::new();
            for e in edges {
                nodes.insert(e.source.as_str());
                nodes.insert(e.target.as_str());
            }
            for n in &nodes {
                let _ = writeln!(s, "  {};", quote(n));
            }
            for e in edges {
                let w = match opts.weight {
                    GraphWeight::Tci => e.tci,
                    GraphWeight::Tgci => e.tgci,
                };
                if w < opts.threshold {
                    continue;
                }
                let mut attrs = format!("penwidth={}, tci={}, tgci={}", pen_width(w), e.tci, e.tgci);
                if let (Some(a), Some(b)) = (opts.regions.get(&e.source), opts.regions.get(&e.target)) {
                    let _ = write!(attrs, ", direction={}", quote(&format!("{a}->{b}")));
                }
                let _ = writeln!(s, "  {} -> {} [{attrs}];", quote(&e.source), quote(&e.target));
            }
            s.push_str("}\n");
            Ok(s)
        }
    }
}
