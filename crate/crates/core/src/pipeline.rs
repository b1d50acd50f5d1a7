//! Batch runs over subjects, epochs and channel pairs, the audit log that
//! makes every reported index recomputable, group comparisons, and synthetic
//! dataset generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confound::{neutralize_pair, DpcaOptions};
use crate::connectivity::{
    build_edge_table, export_graph, EdgeDocument, EdgeIndex, GraphFormat, GraphMeta, GraphOptions, GraphWeight, IndexParams,
    SubjectEdgeResult, DelayVerdict,
};
use crate::error::{Error, Result};
use crate::inference::{
    bootstrap_linearity, combine_pvalues, hotelling_permutation, msc_select, wald_at, BootstrapOptions, ThetaSelector,
    COMBINATION_METHOD,
};
use crate::rng::{derive_seed, key_of};
use crate::series::{load_annotations, load_csv, min_usable_len, slice_epochs, write_annotations, write_csv, CsvSchema, EpochMark, Epoch, DEFAULT_RATE_HZ};
use crate::simgen::{gen_confounded_network, NetworkSpec};
use crate::tar::{LagOrders, TarConfig, TarData};

pub const EDGES_FILE: &str = "edges.json";
pub const DOT_FILE: &str = "graph.dot";
pub const AUDIT_FILE: &str = "audit.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub recording: PathBuf,
    /// Epoch annotations; without them the whole recording is one epoch.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    crate::connectivity::DEFAULT_ALPHA
}
fn default_majority() -> f64 {
    crate::connectivity::DEFAULT_MAJORITY
}
fn default_boot() -> usize {
    500
}
fn default_perms() -> usize {
    999
}
fn default_rate() -> f64 {
    DEFAULT_RATE_HZ
}
fn default_out() -> PathBuf {
    PathBuf::from("tar4c-out")
}
fn yes() -> bool {
    true
}

/// JSON run configuration. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subjects: Vec<SubjectEntry>,
    /// Channels to read; all columns when absent.
    #[serde(default)]
    pub channels: Option<Vec<String>>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    #[serde(default)]
    pub pairs: Vec<(String, String)>,
    #[serde(default)]
    pub tar: TarConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_majority")]
    pub majority: f64,
    #[serde(default = "default_boot")]
    pub boot: usize,
    #[serde(default = "default_perms")]
    pub perms: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub gesture: Option<String>,
    #[serde(default = "yes")]
    pub neutralize: bool,
    #[serde(default)]
    pub dpca: DpcaOptions,
    #[serde(default)]
    pub hetero_robust: bool,
    /// Candidate lag orders for the modified Schwarz criterion. Empty means
    /// the configured orders with and without driver lags.
    #[serde(default)]
    pub msc_orders: Vec<LagOrders>,
    #[serde(default = "yes")]
    pub msc: bool,
    /// Channel label → region, used for direction attributes and arrow colours.
    #[serde(default)]
    pub regions: BTreeMap<String, String>,
    #[serde(default)]
    pub graph_weight: GraphWeight,
    #[serde(default)]
    pub graph_threshold: f64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    pub fn d_max(&self) -> usize {
        self.tar.max_delay()
    }

    pub fn validate(&self) -> Result<()> {
        self.tar.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.majority) {
            return Err(Error::InvalidConfig(format!("majority {} outside [0, 1]", self.majority)));
        }
        if self.boot < 99 {
            return Err(Error::InvalidConfig(format!("boot {} below the minimum of 99", self.boot)));
        }
        let mut ids = BTreeSet::new();
        for s in &self.subjects {
            if !ids.insert(&s.id) {
                return Err(Error::InvalidConfig(format!("duplicate subject id `{}`", s.id)));
            }
            for f in std::iter::once(&s.recording).chain(s.annotations.iter()) {
                let p = self.resolve(f);
                if !p.is_file() {
                    return Err(Error::InvalidConfig(format!("subject `{}`: file {} does not exist", s.id, p.display())));
                }
            }
        }
        for (a, b) in &self.pairs {
            if a == b {
                return Err(Error::InvalidConfig(format!("pair ({a}, {b}) repeats a channel")));
            }
        }
        for o in &self.msc_orders {
            o.validate()?;
        }
        Ok(())
    }

    fn msc_grid(&self) -> Vec<LagOrders> {
        if !self.msc_orders.is_empty() {
            return self.msc_orders.clone();
        }
        let full = self.tar.orders;
        let restricted = LagOrders { q1: 0, q2: 0, ..full };
        if full.q1 + full.q2 == 0 {
            vec![full]
        } else {
            vec![full, restricted]
        }
    }
}

/// Serialized test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    pub p: f64,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub r_hat: f64,
    pub d_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTest {
    pub epoch: usize,
    pub linearity: TestRecord,
    #[serde(default)]
    pub wald: Option<TestRecord>,
    /// LR divided by the number of extra coefficients of the TAR model.
    pub f_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochFailure {
    pub epoch: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscAudit {
    pub epoch: usize,
    pub gamma: LagOrders,
    pub msc: f64,
    pub delta: f64,
    pub k_params: usize,
    pub tgc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayAudit {
    pub delay: usize,
    pub epochs: Vec<EpochTest>,
    pub failed: Vec<EpochFailure>,
    pub combined_linearity: Option<TestRecord>,
    pub rejects: bool,
    pub combined_wald: Option<TestRecord>,
    pub wald_pass: bool,
    /// Mean epoch F-type statistic.
    pub f_stat: f64,
    pub msc: Vec<MscAudit>,
}

/// Outcome for one subject and one ordered pair `source → target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAudit {
    pub subject: String,
    pub source: String,
    pub target: String,
    pub epochs_used: usize,
    pub epochs_failed: Vec<EpochFailure>,
    pub delays: Vec<DelayAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEpoch {
    pub subject: String,
    pub mark: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLog {
    pub version: String,
    pub combination: String,
    pub alpha: f64,
    pub majority: f64,
    #[serde(rename = "D")]
    pub d_max: usize,
    pub seed: u64,
    #[serde(rename = "B")]
    pub boot: usize,
    pub hetero_robust: bool,
    pub tar: TarConfig,
    pub pairs: Vec<(String, String)>,
    pub subjects: Vec<String>,
    pub skipped_epochs: Vec<SkippedEpoch>,
    pub items: Vec<ItemAudit>,
}

impl AuditLog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn meta(&self) -> GraphMeta {
        GraphMeta {
            n_subjects: self.subjects.len(),
            d_max: self.d_max,
            alpha: self.alpha,
            majority: self.majority,
            combination: self.combination.clone(),
        }
    }

    fn params(&self) -> IndexParams {
        IndexParams {
            alpha: self.alpha,
            majority: self.majority,
            d_max: self.d_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub edges: Vec<EdgeIndex>,
    pub meta: GraphMeta,
    pub audit: AuditLog,
}

struct SubjectData {
    id: String,
    epochs: Vec<(usize, Epoch)>,
}

fn load_subject(cfg: &RunConfig, s: &SubjectEntry, min_len: usize, skipped: &mut Vec<SkippedEpoch>) -> Result<SubjectData> {
    let schema = CsvSchema {
        columns: cfg.channels.clone(),
        rate_hz: cfg.rate_hz,
    };
    let m = load_csv(cfg.resolve(&s.recording), &schema)?;
    let marks = match &s.annotations {
        Some(a) => load_annotations(cfg.resolve(a))?,
        None => vec![EpochMark {
            start: 0,
            end: m.len(),
            task: String::new(),
            gesture: String::new(),
        }],
    };
    for (a, b) in &cfg.pairs {
        for l in [a, b] {
            if m.index_of(l).is_none() {
                return Err(Error::InvalidConfig(format!("pair channel `{l}` not in recording of subject `{}`", s.id)));
            }
        }
    }
    let mut epochs = Vec::new();
    for (i, mark) in marks.iter().enumerate() {
        if cfg.task.as_deref().is_some_and(|t| t != mark.task) || cfg.gesture.as_deref().is_some_and(|g| g != mark.gesture) {
            continue;
        }
        match slice_epochs(&m, std::slice::from_ref(mark), min_len) {
            Ok(mut set) => epochs.push((i, set.epochs.remove(0))),
            Err(e) => {
                warn!("subject {}: skipping epoch {i}: {e}", s.id);
                skipped.push(SkippedEpoch {
                    subject: s.id.clone(),
                    mark: i,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(SubjectData { id: s.id.clone(), epochs })
}

fn pair_key(a: &str, b: &str) -> u64 {
    key_of(&format!("{a}\u{1f}{b}"))
}

/// Neutralized (driver, response) per usable epoch.
type Prepared = Vec<(usize, std::result::Result<(Vec<f64>, Vec<f64>), String>)>;

fn prepare(cfg: &RunConfig, subj: &SubjectData, source: &str, target: &str) -> Prepared {
    subj.epochs
        .iter()
        .map(|(i, ep)| {
            let m = &ep.data;
            let (xs, ts) = (m.index_of(source).unwrap_or(0), m.index_of(target).unwrap_or(0));
            let r = if cfg.neutralize {
                neutralize_pair(m, xs, ts, &cfg.dpca).map_err(|e| e.to_string())
            } else {
                Ok((m.channel(xs).to_vec(), m.channel(ts).to_vec()))
            };
            (*i, r)
        })
        .collect()
}

fn run_item(cfg: &RunConfig, subj: &SubjectData, k: usize, dir: usize) -> ItemAudit {
    let (a, b) = &cfg.pairs[k];
    let (source, target) = if dir == 0 { (a, b) } else { (b, a) };
    let pk = pair_key(a, b);
    let prepared = prepare(cfg, subj, source, target);
    let orders = cfg.tar.orders;
    let extra = (orders.widths().1) as f64;
    let mut epochs_failed = Vec::new();
    let mut usable = Vec::new();
    for (e, r) in prepared {
        match r.and_then(|(x, y)| TarData::for_config(y.clone(), x.clone(), &cfg.tar).map(|d| (d, x, y)).map_err(|e| e.to_string())) {
            Ok(v) => usable.push((e, v)),
            Err(reason) => {
                warn!("subject {} {source}->{target}: epoch {e} unusable: {reason}", subj.id);
                epochs_failed.push(EpochFailure { epoch: e, reason });
            }
        }
    }
    let mut delays = Vec::with_capacity(cfg.tar.delays.len());
    for &d in &cfg.tar.delays {
        let cfg_d = cfg.tar.with_delays([d]);
        let mut tests = Vec::new();
        let mut failed = Vec::new();
        for (e, (data, _, _)) in &usable {
            let seed = derive_seed(cfg.seed, &[key_of(&subj.id), pk, dir as u64, *e as u64, d as u64]);
            let opts = BootstrapOptions {
                replications: cfg.boot,
                seed,
                hetero_robust: cfg.hetero_robust,
            };
            let lr = match bootstrap_linearity(data, &cfg_d, &opts) {
                Ok(r) if r.lr.is_finite() => r,
                Ok(_) => {
                    failed.push(EpochFailure {
                        epoch: *e,
                        reason: "non-finite LR statistic".into(),
                    });
                    continue;
                }
                Err(err) => {
                    failed.push(EpochFailure {
                        epoch: *e,
                        reason: err.to_string(),
                    });
                    continue;
                }
            };
            let wald = wald_at(data, &orders, cfg.tar.threshold_fn, lr.r_hat, lr.d_hat, cfg.tar.min_regime_frac, &ThetaSelector::All)
                .ok()
                .filter(|w| w.delta.is_finite())
                .map(|w| TestRecord {
                    statistic: w.delta,
                    df: Some(w.df),
                    p: w.p,
                    method: "wald-hc".into(),
                    seed: None,
                    b: None,
                    grid: Some(GridPoint { r_hat: w.r, d_hat: w.d }),
                });
            tests.push(EpochTest {
                epoch: *e,
                linearity: TestRecord {
                    statistic: lr.lr,
                    df: None,
                    p: lr.p_boot,
                    method: if cfg.hetero_robust { "sup-wald-wild-bootstrap" } else { "sup-lr-bootstrap" }.into(),
                    seed: Some(seed),
                    b: Some(cfg.boot),
                    grid: Some(GridPoint {
                        r_hat: lr.r_hat,
                        d_hat: lr.d_hat,
                    }),
                },
                wald,
                f_stat: lr.lr / extra,
            });
        }
        let mut audit = DelayAudit {
            delay: d,
            epochs: tests,
            failed,
            combined_linearity: None,
            rejects: false,
            combined_wald: None,
            wald_pass: false,
            f_stat: 0.0,
            msc: Vec::new(),
        };
        summarise_delay(&mut audit, cfg.alpha);
        if audit.rejects && cfg.msc {
            let grid = cfg.msc_grid();
            for (e, (_, x, y)) in &usable {
                if !audit.epochs.iter().any(|t| t.epoch == *e) {
                    continue;
                }
                match msc_select(y, x, &grid, &cfg_d) {
                    Ok(rec) => audit.msc.push(MscAudit {
                        epoch: *e,
                        gamma: rec.gamma,
                        msc: rec.msc,
                        delta: rec.delta,
                        k_params: rec.k_params,
                        tgc: rec.tgc(),
                    }),
                    Err(err) => warn!("subject {} {source}->{target} d={d} epoch {e}: criterion failed: {err}", subj.id),
                }
            }
        }
        delays.push(audit);
    }
    ItemAudit {
        subject: subj.id.clone(),
        source: source.clone(),
        target: target.clone(),
        epochs_used: usable.len(),
        epochs_failed,
        delays,
    }
}

fn fisher_record(ps: &[f64]) -> Option<TestRecord> {
    let c = combine_pvalues(ps).ok()?;
    Some(TestRecord {
        statistic: c.chi2,
        df: Some(c.df),
        p: c.p,
        method: COMBINATION_METHOD.into(),
        seed: None,
        b: None,
        grid: None,
    })
}

/// Fills the combined fields of a delay from its epoch records.
fn summarise_delay(a: &mut DelayAudit, alpha: f64) {
    let lin: Vec<f64> = a.epochs.iter().map(|t| t.linearity.p).collect();
    a.combined_linearity = fisher_record(&lin);
    a.rejects = a.combined_linearity.as_ref().is_some_and(|c| c.p <= alpha);
    a.combined_wald = None;
    a.wald_pass = false;
    if a.rejects {
        let w: Vec<f64> = a.epochs.iter().filter_map(|t| t.wald.as_ref().map(|w| w.p)).collect();
        a.combined_wald = fisher_record(&w);
        a.wald_pass = a.combined_wald.as_ref().is_some_and(|c| c.p <= alpha);
    }
    a.f_stat = if a.epochs.is_empty() {
        0.0
    } else {
        a.epochs.iter().map(|t| t.f_stat).sum::<f64>() / a.epochs.len() as f64
    };
}

fn verdicts(items: &[ItemAudit]) -> Vec<SubjectEdgeResult> {
    items
        .iter()
        .map(|it| SubjectEdgeResult {
            subject: it.subject.clone(),
            source: it.source.clone(),
            target: it.target.clone(),
            delays: it
                .delays
                .iter()
                .filter_map(|d| {
                    d.combined_linearity.as_ref().map(|c| DelayVerdict {
                        delay: d.delay,
                        linearity_p: c.p,
                        wald_p: d.combined_wald.as_ref().map(|w| w.p),
                    })
                })
                .collect(),
        })
        .collect()
}

/// Runs every subject × pair × direction. Work items run on the current
/// rayon pool; results do not depend on its size.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let min_len = min_usable_len(cfg.tar.orders.max_lag(), cfg.tar.max_delay());
    let mut skipped = Vec::new();
    let mut subjects = Vec::new();
    if !cfg.pairs.is_empty() {
        for s in &cfg.subjects {
            let data = load_subject(cfg, s, min_len, &mut skipped)?;
            info!("subject {}: {} usable epochs", data.id, data.epochs.len());
            subjects.push(data);
        }
    }
    let work: Vec<(usize, usize, usize)> = (0..subjects.len())
        .flat_map(|s| (0..cfg.pairs.len()).flat_map(move |k| [(s, k, 0), (s, k, 1)]))
        .collect();
    let items: Vec<ItemAudit> = work.par_iter().map(|&(s, k, dir)| run_item(cfg, &subjects[s], k, dir)).collect();
    let audit = AuditLog {
        version: env!("CARGO_PKG_VERSION").into(),
        combination: COMBINATION_METHOD.into(),
        alpha: cfg.alpha,
        majority: cfg.majority,
        d_max: cfg.d_max(),
        seed: cfg.seed,
        boot: cfg.boot,
        hetero_robust: cfg.hetero_robust,
        tar: cfg.tar.clone(),
        pairs: cfg.pairs.clone(),
        subjects: cfg.subjects.iter().map(|s| s.id.clone()).collect(),
        skipped_epochs: skipped,
        items,
    };
    let edges = build_edge_table(&verdicts(&audit.items), &audit.pairs, &audit.params())?;
    Ok(RunOutput {
        meta: audit.meta(),
        edges,
        audit,
    })
}

/// Writes the audit log plus the requested graph documents. Returns the
/// written paths.
pub fn write_outputs(out: &RunOutput, dir: &Path, formats: &[GraphFormat], opts: &GraphOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for fmt in formats {
        let name = match fmt {
            GraphFormat::Json => EDGES_FILE,
            GraphFormat::Dot => DOT_FILE,
        };
        put(name, export_graph(&out.edges, *fmt, &out.meta, opts)?)?;
    }
    put(AUDIT_FILE, serde_json::to_string_pretty(&out.audit)?)?;
    Ok(written)
}

pub fn graph_options(cfg: &RunConfig) -> GraphOptions {
    GraphOptions {
        weight: cfg.graph_weight,
        threshold: cfg.graph_threshold,
        regions: cfg.regions.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub edges: usize,
    /// Differences between the recorded and recomputed values.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes the edge table from epoch-level p-values in the audit log.
pub fn replay(audit: &AuditLog) -> Result<Vec<EdgeIndex>> {
    let mut items = audit.items.clone();
    for it in &mut items {
        for d in &mut it.delays {
            summarise_delay(d, audit.alpha);
        }
    }
    build_edge_table(&verdicts(&items), &audit.pairs, &audit.params())
}

/// Checks a bundle directory: the recomputed edges must equal `edges.json`
/// bit for bit, and the stored combined results must match their epochs.
pub fn verify_bundle(dir: &Path) -> Result<ReplayReport> {
    let audit = AuditLog::load(dir.join(AUDIT_FILE))?;
    let edges = replay(&audit)?;
    let mut mismatches = Vec::new();
    for it in &audit.items {
        for d in &it.delays {
            let mut fresh = d.clone();
            summarise_delay(&mut fresh, audit.alpha);
            if fresh.combined_linearity != d.combined_linearity || fresh.combined_wald != d.combined_wald || fresh.rejects != d.rejects || fresh.wald_pass != d.wald_pass {
                mismatches.push(format!("{} {}->{} d={}: combined results differ", it.subject, it.source, it.target, d.delay));
            }
        }
    }
    let edges_path = dir.join(EDGES_FILE);
    if edges_path.is_file() {
        let text = fs::read_to_string(&edges_path).map_err(|e| Error::io(&edges_path, e))?;
        let doc: EdgeDocument = serde_json::from_str(&text)?;
        if doc.edges.len() != edges.len() {
            mismatches.push(format!("{} recorded edges vs {} recomputed", doc.edges.len(), edges.len()));
        }
        for (r, e) in doc.edges.iter().zip(&edges) {
            if r.source != e.source
                || r.target != e.target
                || r.tci.to_bits() != e.tci.to_bits()
                || r.tgci.to_bits() != e.tgci.to_bits()
                || r.n_by_delay != e.tally.n_by_delay
                || r.wald_by_delay != e.tally.wald_by_delay
            {
                mismatches.push(format!("{}->{}: recorded indices differ from replay", r.source, r.target));
            }
        }
    }
    Ok(ReplayReport {
        edges: edges.len(),
        mismatches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrowColor {
    /// Region-forward direction dominates (prefrontal → motor in EEG use).
    Red,
    /// Region-backward direction dominates.
    Blue,
    /// First condition dominates.
    Green,
    /// Second condition dominates.
    Purple,
}

impl ArrowColor {
    pub fn name(self) -> &'static str {
        match self {
            ArrowColor::Red => "red",
            ArrowColor::Blue => "blue",
            ArrowColor::Green => "green",
            ArrowColor::Purple => "purple",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub source: String,
    pub target: String,
    /// Absent when neither endpoint region matches the forward pair.
    pub color: Option<ArrowColor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonKind {
    /// `X → Y` against `Y → X` in one condition.
    Within,
    /// The same direction in two conditions.
    Across,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub kind: ComparisonKind,
    pub first: String,
    pub second: String,
    pub t2: f64,
    pub p: f64,
    pub n_perm: usize,
    pub shrunk: bool,
    pub arrow: Option<Arrow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub conditions: Vec<String>,
    pub alpha: f64,
    pub seed: u64,
    pub comparisons: Vec<Comparison>,
}

impl CompareReport {
    pub fn arrows(&self) -> impl Iterator<Item = &Arrow> {
        self.comparisons.iter().filter_map(|c| c.arrow.as_ref())
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tar4c_compare {\n");
        for a in self.arrows() {
            let color = a.color.map_or("black", ArrowColor::name);
            s.push_str(&format!("  \"{}\" -> \"{}\" [color={color}];\n", a.source, a.target));
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub n_perm: usize,
    pub seed: u64,
    pub alpha: f64,
    pub regions: BTreeMap<String, String>,
    /// Region pair whose direction is drawn red.
    pub forward: (String, String),
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            n_perm: 999,
            seed: 0,
            alpha: 0.05,
            regions: BTreeMap::new(),
            forward: ("prefrontal".into(), "motor".into()),
        }
    }
}

/// Subject × delay matrix of F-type statistics for `source → target`, zero
/// for subjects that do not both reject linearity and pass the Wald test.
pub fn tgc_matrix(audit: &AuditLog, source: &str, target: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<&ItemAudit> = audit.items.iter().filter(|i| i.source == source && i.target == target).collect();
    if rows.is_empty() {
        return Err(Error::DimensionMismatch(format!("no results for {source}->{target}")));
    }
    let dmax = audit.d_max;
    Ok(DMatrix::from_fn(rows.len(), dmax, |i, j| {
        rows[i]
            .delays
            .iter()
            .find(|d| d.delay == j + 1)
            .filter(|d| d.rejects && d.wald_pass)
            .map_or(0.0, |d| d.f_stat)
    }))
}

fn mean_level(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.sum() / m.nrows() as f64
    }
}

fn within(audit: &AuditLog, name: &str, opts: &CompareOptions) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for (a, b) in &audit.pairs {
        let fwd = tgc_matrix(audit, a, b)?;
        let bwd = tgc_matrix(audit, b, a)?;
        let seed = derive_seed(opts.seed, &[key_of("within"), key_of(name), pair_key(a, b)]);
        let h = hotelling_permutation(&fwd, &bwd, opts.n_perm, seed)?;
        let arrow = (h.p <= opts.alpha).then(|| {
            let (s, t) = if mean_level(&fwd) >= mean_level(&bwd) { (a, b) } else { (b, a) };
            let color = match (opts.regions.get(s), opts.regions.get(t)) {
                (Some(rs), Some(rt)) if *rs == opts.forward.0 && *rt == opts.forward.1 => Some(ArrowColor::Red),
                (Some(rs), Some(rt)) if *rs == opts.forward.1 && *rt == opts.forward.0 => Some(ArrowColor::Blue),
                _ => None,
            };
            Arrow {
                source: s.clone(),
                target: t.clone(),
                color,
            }
        });
        out.push(Comparison {
            kind: ComparisonKind::Within,
            first: format!("{name}:{a}->{b}"),
            second: format!("{name}:{b}->{a}"),
            t2: h.t2,
            p: h.p,
            n_perm: h.n_perm,
            shrunk: h.shrunk,
            arrow,
        });
    }
    Ok(out)
}

fn across(first: (&str, &AuditLog), second: (&str, &AuditLog), opts: &CompareOptions) -> Result<Vec<Comparison>> {
    let (na, a) = first;
    let (nb, b) = second;
    if a.d_max != b.d_max {
        return Err(Error::DimensionMismatch(format!("{na} has {} delays, {nb} has {}", a.d_max, b.d_max)));
    }
    let mut out = Vec::new();
    for (x, y) in &a.pairs {
        if !b.pairs.iter().any(|(u, v)| (u == x && v == y) || (u == y && v == x)) {
            warn!("pair ({x}, {y}) missing from {nb}; skipped");
            continue;
        }
        for (s, t) in [(x, y), (y, x)] {
            let ma = tgc_matrix(a, s, t)?;
            let mb = tgc_matrix(b, s, t)?;
            let seed = derive_seed(opts.seed, &[key_of("across"), pair_key(s, t)]);
            let h = hotelling_permutation(&ma, &mb, opts.n_perm, seed)?;
            let arrow = (h.p <= opts.alpha).then(|| Arrow {
                source: s.clone(),
                target: t.clone(),
                color: Some(if mean_level(&ma) >= mean_level(&mb) { ArrowColor::Green } else { ArrowColor::Purple }),
            });
            out.push(Comparison {
                kind: ComparisonKind::Across,
                first: format!("{na}:{s}->{t}"),
                second: format!("{nb}:{s}->{t}"),
                t2: h.t2,
                p: h.p,
                n_perm: h.n_perm,
                shrunk: h.shrunk,
                arrow,
            });
        }
    }
    Ok(out)
}

/// One bundle: each pair's two directions are compared. Two bundles: each
/// direction is compared across the two conditions.
pub fn compare(first: (&str, &AuditLog), second: Option<(&str, &AuditLog)>, opts: &CompareOptions) -> Result<CompareReport> {
    let (comparisons, conditions) = match second {
        None => (within(first.1, first.0, opts)?, vec![first.0.to_string()]),
        Some(s) => (across(first, s, opts)?, vec![first.0.to_string(), s.0.to_string()]),
    };
    Ok(CompareReport {
        conditions,
        alpha: opts.alpha,
        seed: opts.seed,
        comparisons,
    })
}

fn default_subjects() -> usize {
    5
}
fn default_epochs() -> usize {
    4
}
fn default_epoch_len() -> usize {
    656
}
fn default_task() -> String {
    "sim".into()
}

/// Synthetic dataset description for [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub network: NetworkSpec,
    #[serde(default = "default_subjects")]
    pub subjects: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_epoch_len")]
    pub epoch_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default = "default_task")]
    pub gesture: String,
    /// Analysis settings copied into the generated run config.
    #[serde(default)]
    pub tar: TarConfig,
}

impl SimulationSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

/// Writes one recording and annotation file per subject plus a `config.json`
/// run manifest pairing the first two channels. Returns the manifest path.
pub fn simulate(spec: &SimulationSpec, dir: &Path) -> Result<PathBuf> {
    if spec.subjects == 0 || spec.epochs == 0 {
        return Err(Error::InvalidConfig("need at least one subject and one epoch".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let len = spec.epochs * spec.epoch_len;
    let labels = spec.network.labels();
    let mut subjects = Vec::with_capacity(spec.subjects);
    for s in 0..spec.subjects {
        let id = format!("S{:03}", s + 1);
        let net = gen_confounded_network(&spec.network, len, derive_seed(spec.seed, &[s as u64]))?;
        let rec = format!("{id}.csv");
        let ann = format!("{id}_epochs.csv");
        write_csv(dir.join(&rec), &net.matrix)?;
        let marks: Vec<EpochMark> = (0..spec.epochs)
            .map(|e| EpochMark {
                start: e * spec.epoch_len,
                end: (e + 1) * spec.epoch_len,
                task: spec.task.clone(),
                gesture: spec.gesture.clone(),
            })
            .collect();
        write_annotations(dir.join(&ann), &marks)?;
        subjects.push(SubjectEntry {
            id,
            recording: rec.into(),
            annotations: Some(ann.into()),
        });
    }
    let cfg = RunConfig {
        subjects,
        channels: None,
        rate_hz: DEFAULT_RATE_HZ,
        pairs: vec![(labels[0].clone(), labels[1].clone())],
        tar: spec.tar.clone(),
        alpha: default_alpha(),
        majority: default_majority(),
        boot: default_boot(),
        perms: default_perms(),
        seed: spec.seed,
        out: PathBuf::from("results"),
        task: None,
        gesture: None,
        neutralize: spec.network.n_confounders > 0,
        dpca: DpcaOptions::default(),
        hetero_robust: false,
        msc_orders: Vec::new(),
        msc: true,
        regions: BTreeMap::new(),
        graph_weight: GraphWeight::Tci,
        graph_threshold: 0.0,
        base_dir: PathBuf::new(),
    };
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
