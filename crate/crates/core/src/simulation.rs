//! Seeded synthetic benchmarks and the experiment runner.
//!
//! A batch holds `N` random sequences split into `C` near-equal clusters.
//! Clusters are told apart by planted patterns, which overwrite background
//! tokens so lengths stay exact. With `background_cluster` set, cluster 0
//! carries no pattern.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cut, estimate_k_with, ward_linkage, ValidityIndex};
use crate::dataset::{Alphabet, CategoricalSequence, SequenceDataset};
use crate::encoder::Variant;
use crate::error::{Error, Result};
use crate::pipeline::{compute, Method, PipelineConfig};
use crate::rng::{derive_seed, stream};
use crate::validation::{evaluate, inf_as_string};

/// How patterns are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    /// One pattern per cluster at a uniformly random offset.
    Shifted,
    /// Two patterns `x` then `y` per cluster with a random gap between them;
    /// `second_len` is the length of `y`.
    Gapped { second_len: usize },
    /// One pattern shared by all clusters, at an offset fixed per cluster.
    Pinned,
}

impl PatternKind {
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::Shifted => "shifted",
            PatternKind::Gapped { .. } => "gapped",
            PatternKind::Pinned => "pinned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_sequences: usize,
    pub alphabet: usize,
    /// Lengths are drawn uniformly from `min_length..=max_length`.
    pub min_length: usize,
    pub max_length: usize,
    pub pattern_len: usize,
    pub kind: PatternKind,
    pub clusters: usize,
    pub background_cluster: bool,
    pub replications: usize,
}

impl ScenarioSpec {
    /// Two clusters, half the sequences patterned.
    pub fn two_cluster(n: usize, alphabet: usize, length: usize, pattern_len: usize) -> Self {
        Self {
            n_sequences: n,
            alphabet,
            min_length: length,
            max_length: length,
            pattern_len,
            kind: PatternKind::Shifted,
            clusters: 2,
            background_cluster: true,
            replications: 1,
        }
    }

    pub fn with_lengths(mut self, min: usize, max: usize) -> Self {
        self.min_length = min;
        self.max_length = max;
        self
    }

    pub fn with_kind(mut self, kind: PatternKind) -> Self {
        self.kind = kind;
        if kind == PatternKind::Pinned {
            self.background_cluster = false;
        }
        self
    }

    /// `C` clusters, each with its own pattern.
    pub fn with_clusters(mut self, c: usize) -> Self {
        self.clusters = c;
        self.background_cluster = false;
        self
    }

    pub fn with_replications(mut self, r: usize) -> Self {
        self.replications = r;
        self
    }

    fn patterned_clusters(&self) -> usize {
        self.clusters - usize::from(self.background_cluster)
    }

    fn planted_len(&self) -> usize {
        match self.kind {
            PatternKind::Gapped { second_len } => self.pattern_len + second_len,
            _ => self.pattern_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.clusters < 2 {
            return bad("a scenario needs at least 2 clusters");
        }
        if self.n_sequences < self.clusters {
            return bad("fewer sequences than clusters");
        }
        if self.alphabet == 0 || self.pattern_len == 0 {
            return bad("alphabet size and pattern length must be positive");
        }
        if self.min_length > self.max_length {
            return bad("min_length exceeds max_length");
        }
        if matches!(self.kind, PatternKind::Gapped { second_len: 0 }) {
            return bad("the second gapped pattern must be non-empty");
        }
        let planted = self.planted_len();
        let pinned_span = if self.kind == PatternKind::Pinned {
            self.patterned_clusters() * self.pattern_len
        } else {
            0
        };
        if planted >= self.min_length || pinned_span > self.min_length {
            return Err(Error::PatternDoesNotFit {
                pattern: planted.max(pinned_span),
                length: self.min_length,
            });
        }
        Ok(())
    }
}

/// A planted pattern occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planting {
    pub pattern: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct SimBatch {
    pub dataset: SequenceDataset,
    pub patterns: Vec<Vec<u32>>,
    /// Per sequence, every pattern placed in it.
    pub plantings: Vec<Vec<Planting>>,
    /// Per-cluster offsets of a pinned pattern.
    pub pinned_offsets: Vec<usize>,
}

fn draw_tokens(rng: &mut ChaCha8Rng, len: usize, a: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..a as u32)).collect()
}

/// Distinct random patterns, falling back to duplicates only when the
/// alphabet is too small to avoid them.
fn draw_patterns(rng: &mut ChaCha8Rng, lens: &[usize], a: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::with_capacity(lens.len());
    for &len in lens {
        let mut p = draw_tokens(rng, len, a);
        for _ in 0..100 {
            if !out.contains(&p) {
                break;
            }
            p = draw_tokens(rng, len, a);
        }
        out.push(p);
    }
    out
}

/// `count` offsets in `0..=max_start`, pairwise at least `gap` apart, in random order.
fn spaced_offsets(rng: &mut ChaCha8Rng, count: usize, max_start: usize, gap: usize) -> Vec<usize> {
    let slack = max_start + gap - count * gap;
    let mut base: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=slack)).collect();
    base.sort_unstable();
    let mut offsets: Vec<usize> = base.iter().enumerate().map(|(i, b)| b + i * gap).collect();
    offsets.shuffle(rng);
    offsets
}

/// Generate one batch; fully determined by `(spec, seed)`.
pub fn gen_batch(spec: &ScenarioSpec, seed: u64) -> Result<SimBatch> {
    spec.validate()?;
    let mut rng = stream(seed, &[]);
    let (n, a, c) = (spec.n_sequences, spec.alphabet, spec.clusters);
    let patterned = spec.patterned_clusters();

    let (patterns, cluster_patterns): (Vec<Vec<u32>>, Vec<Vec<usize>>) = match spec.kind {
        PatternKind::Shifted => (
            draw_patterns(&mut rng, &vec![spec.pattern_len; patterned], a),
            (0..patterned).map(|p| vec![p]).collect(),
        ),
        PatternKind::Gapped { second_len } => {
            let lens: Vec<usize> = (0..patterned)
                .flat_map(|_| [spec.pattern_len, second_len])
                .collect();
            (
                draw_patterns(&mut rng, &lens, a),
                (0..patterned).map(|p| vec![2 * p, 2 * p + 1]).collect(),
            )
        }
        PatternKind::Pinned => (
            draw_patterns(&mut rng, &[spec.pattern_len], a),
            vec![vec![0]; patterned],
        ),
    };
    let pinned_offsets = if spec.kind == PatternKind::Pinned {
        spaced_offsets(
            &mut rng,
            patterned,
            spec.min_length - spec.pattern_len,
            spec.pattern_len,
        )
    } else {
        Vec::new()
    };

    let labels: Vec<usize> = (0..n).map(|i| i * c / n).collect();
    let mut sequences = Vec::with_capacity(n);
    let mut plantings = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        let len = rng.gen_range(spec.min_length..=spec.max_length);
        let mut tokens = draw_tokens(&mut rng, len, a);
        let mut placed = Vec::new();
        if let Some(slot) = label.checked_sub(usize::from(spec.background_cluster)) {
            let own = &cluster_patterns[slot];
            match spec.kind {
                PatternKind::Shifted => {
                    let p = own[0];
                    let offset = rng.gen_range(0..=len - patterns[p].len());
                    placed.push(Planting { pattern: p, offset });
                }
                PatternKind::Gapped { .. } => {
                    let (x, y) = (own[0], own[1]);
                    let total = patterns[x].len() + patterns[y].len();
                    let gap = rng.gen_range(0..=len - total);
                    let offset = rng.gen_range(0..=len - total - gap);
                    placed.push(Planting { pattern: x, offset });
                    placed.push(Planting {
                        pattern: y,
                        offset: offset + patterns[x].len() + gap,
                    });
                }
                PatternKind::Pinned => placed.push(Planting {
                    pattern: own[0],
                    offset: pinned_offsets[slot],
                }),
            }
        }
        for p in &placed {
            let pat = &patterns[p.pattern];
            tokens[p.offset..p.offset + pat.len()].copy_from_slice(pat);
        }
        sequences.push(CategoricalSequence {
            id: format!("s{i}"),
            tokens,
        });
        plantings.push(placed);
    }
    let dataset = SequenceDataset::new(
        Alphabet::letters(a),
        sequences,
        Some(labels),
        (0..c).map(|k| format!("c{k}")).collect(),
    )?;
    Ok(SimBatch {
        dataset,
        patterns,
        plantings,
        pinned_offsets,
    })
}

/// One grid point. Cells sharing `data_index` (and spec) see the same data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub spec: ScenarioSpec,
    pub data_index: usize,
    /// Window / `k` override; `None` uses the corpus default.
    pub window: Option<usize>,
    /// When set, also estimate the cluster count over this range.
    pub k_range: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub cells: Vec<Cell>,
    pub methods: Vec<Method>,
    pub trees: usize,
}

/// Preset names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &[
    "sim1-paper",
    "sim1-desk",
    "sim2-paper",
    "sim2-desk",
    "sim3-paper",
    "sim3-desk",
    "sim4-paper",
    "sim4-desk",
    "window-paper",
    "window-desk",
    "clusters-paper",
    "clusters-desk",
    "sens-instances",
    "sens-length",
];

fn table_methods() -> Vec<Method> {
    vec![
        Method::NTreeClus(Variant::Dt),
        Method::NTreeClus(Variant::Rf),
        Method::NTreeClus(Variant::DtPos),
        Method::NTreeClus(Variant::RfPos),
        Method::Levenshtein,
        Method::JaroWinkler,
        Method::Kmer(Some(1)),
        Method::Kmer(Some(2)),
        Method::Kmer(Some(3)),
        Method::Kmer(None),
    ]
}

fn cells_from(specs: Vec<ScenarioSpec>, window: Option<usize>) -> Vec<Cell> {
    specs
        .into_iter()
        .enumerate()
        .map(|(i, spec)| Cell {
            spec,
            data_index: i,
            window,
            k_range: None,
        })
        .collect()
}

fn grid<T: Copy, U: Copy, V: Copy, W: Copy>(
    xs: &[T],
    ys: &[U],
    zs: &[V],
    ws: &[W],
    f: impl Fn(T, U, V, W) -> ScenarioSpec,
) -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for &x in xs {
        for &y in ys {
            for &z in zs {
                for &w in ws {
                    out.push(f(x, y, z, w));
                }
            }
        }
    }
    out
}

/// Look up a named experiment grid.
pub fn preset(name: &str) -> Result<Preset> {
    let make = |description: &str, cells: Vec<Cell>, methods: Vec<Method>| Preset {
        name: name.to_string(),
        description: description.to_string(),
        cells,
        methods,
        trees: 10,
    };
    let gapped = |lp: usize| PatternKind::Gapped {
        second_len: lp * 3 / 2,
    };
    Ok(match name {
        "sim1-paper" => make(
            "pattern recognition: N in {40,120,200}, a in {4,6,10,20}, L in {20,40,90}, Lp in {6,10,15}, C = 2, 10 replications",
            cells_from(
                grid(&[40, 120, 200], &[4, 6, 10, 20], &[20, 40, 90], &[6, 10, 15], |n, a, l, lp| {
                    ScenarioSpec::two_cluster(n, a, l, lp).with_replications(10)
                }),
                None,
            ),
            table_methods(),
        ),
        "sim1-desk" => make(
            "pattern recognition, reduced: N = 40, a in {4,10}, L = 40, Lp = 10, C = 2, 5 replications",
            cells_from(
                grid(&[40], &[4, 10], &[40], &[10], |n, a, l, lp| {
                    ScenarioSpec::two_cluster(n, a, l, lp).with_replications(5)
                }),
                None,
            ),
            table_methods(),
        ),
        "sim2-paper" => make(
            "gapped patterns: N in {40,120,200}, a in {4,6,10,20}, L in {20,40,90}, (Lx,Ly) in {(2,3),(4,6),(6,9)}, C = 2, 10 replications",
            cells_from(
                grid(&[40, 120, 200], &[4, 6, 10, 20], &[20, 40, 90], &[2, 4, 6], |n, a, l, lp| {
                    ScenarioSpec::two_cluster(n, a, l, lp).with_kind(gapped(lp)).with_replications(10)
                }),
                None,
            ),
            table_methods(),
        ),
        "sim2-desk" => make(
            "gapped patterns, reduced: N = 40, a in {4,10}, L = 40, (Lx,Ly) = (4,6), C = 2, 5 replications",
            cells_from(
                grid(&[40], &[4, 10], &[40], &[4], |n, a, l, lp| {
                    ScenarioSpec::two_cluster(n, a, l, lp).with_kind(gapped(lp)).with_replications(5)
                }),
                None,
            ),
            table_methods(),
        ),
        "sim3-paper" => make(
            "pattern location: N in {40,120,200}, a in {5,7,11,16}, L in [80,120], Lp in {6,10,20}, C = 2, n = 10, 10 replications",
            cells_from(
                grid(&[40, 120, 200], &[5, 7, 11, 16], &[80], &[6, 10, 20], |n, a, l, lp| {
                    ScenarioSpec::two_cluster(n, a, l, lp)
                        .with_lengths(l, 120)
                        .with_kind(PatternKind::Pinned)
                        .with_replications(10)
                }),
                Some(10),
            ),
            table_methods(),
        ),
        "sim3-desk" => make(
            "pattern location, reduced: N = 120, a = 7, L in [80,120], Lp = 10, C = 2, n = 10, 5 replications",
            cells_from(
                vec![ScenarioSpec::two_cluster(120, 7, 80, 10)
                    .with_lengths(80, 120)
                    .with_kind(PatternKind::Pinned)
                    .with_replications(5)],
                Some(10),
            ),
            table_methods(),
        ),
        "sim4-paper" => make(
            "variable length: N in {40,120,200}, a in {5,7,11,16}, L in [80,120], Lp in {6,10,20}, C = 2, n = 10, 10 replications",
            cells_from(
                grid(&[40, 120, 200], &[5, 7, 11, 16], &[80], &[6, 10, 20], |n, a, l, lp| {
                    ScenarioSpec::two_cluster(n, a, l, lp).with_lengths(l, 120).with_replications(10)
                }),
                Some(10),
            ),
            table_methods(),
        ),
        "sim4-desk" => make(
            "variable length, reduced: N = 120, a = 7, L in [80,120], Lp = 10, C = 2, n = 10, 5 replications",
            cells_from(
                vec![ScenarioSpec::two_cluster(120, 7, 80, 10).with_lengths(80, 120).with_replications(5)],
                Some(10),
            ),
            table_methods(),
        ),
        "window-paper" | "window-desk" => {
            let (settings, windows, reps): (Vec<(usize, usize)>, Vec<usize>, usize) = if name == "window-paper" {
                (vec![(7, 8), (20, 8), (7, 15), (20, 15)], (1..=25).collect(), 10)
            } else {
                (vec![(20, 15)], (3..=15).collect(), 3)
            };
            let mut cells = Vec::new();
            for (d, &(a, lp)) in settings.iter().enumerate() {
                for &w in &windows {
                    cells.push(Cell {
                        spec: ScenarioSpec::two_cluster(180, a, 40, lp).with_replications(reps),
                        data_index: d,
                        window: Some(w),
                        k_range: None,
                    });
                }
            }
            let description = if name == "window-paper" {
                "window sensitivity: N = 180, L = 40, (a, Lp) in {7,20} x {8,15}, n = k in 1..=25, 10 replications"
            } else {
                "window sensitivity, reduced: N = 180, L = 40, a = 20, Lp = 15, n = k in 3..=15, 3 replications"
            };
            make(description, cells, vec![Method::NTreeClus(Variant::Rf), Method::Kmer(None)])
        }
        "clusters-paper" | "clusters-desk" => {
            let specs = if name == "clusters-paper" {
                let mut specs = Vec::new();
                for c in [3, 6, 10] {
                    specs.extend(grid(&[30, 100], &[4, 7, 20], &[50, 100], &[7, 18], |n, a, l, lp| {
                        ScenarioSpec::two_cluster(n, a, l, lp).with_clusters(c).with_replications(3)
                    }));
                }
                specs
            } else {
                let mut specs = Vec::new();
                for c in [3, 6, 10] {
                    specs.extend(grid(&[60], &[7, 20], &[50], &[7, 18], |n, a, l, lp| {
                        ScenarioSpec::two_cluster(n, a, l, lp).with_clusters(c).with_replications(2)
                    }));
                }
                specs
            };
            let cells = specs
                .into_iter()
                .enumerate()
                .map(|(i, spec)| Cell {
                    spec,
                    data_index: i,
                    window: None,
                    k_range: Some((2, 20)),
                })
                .collect();
            let description = if name == "clusters-paper" {
                "cluster count: N in {30,100}, a in {4,7,20}, L in {50,100}, Lp in {7,18}, C in {3,6,10}, k in 2..=20, 3 replications"
            } else {
                "cluster count, reduced: N = 60, a in {7,20}, L = 50, Lp in {7,18}, C in {3,6,10}, k in 2..=20, 2 replications"
            };
            make(description, cells, vec![Method::NTreeClus(Variant::Rf)])
        }
        "sens-instances" => make(
            "instances: N in {20,40,...,200}, a = 10, L = 40, Lp = 10, C = 2, 4 replications",
            cells_from(
                (1..=10)
                    .map(|i| ScenarioSpec::two_cluster(20 * i, 10, 40, 10).with_replications(4))
                    .collect(),
                None,
            ),
            vec![Method::NTreeClus(Variant::Rf)],
        ),
        "sens-length" => make(
            "sequence length: N = 100, a = 10, L in {20,40,...,200}, Lp = 10, C = 2, 4 replications",
            cells_from(
                (1..=10)
                    .map(|i| ScenarioSpec::two_cluster(100, 10, 20 * i, 10).with_replications(4))
                    .collect(),
                None,
            ),
            vec![Method::NTreeClus(Variant::Rf)],
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

/// One (cell, replication, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub rep: usize,
    pub method: String,
    pub kind: String,
    pub n_sequences: usize,
    pub alphabet: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub pattern_len: usize,
    pub clusters: usize,
    pub window: Option<usize>,
    pub batch_seed: u64,
    #[serde(with = "inf_as_string")]
    pub purity: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub ri: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub ari: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub f_measure: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub asw: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub ch: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub dunn: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub one_nn: Option<f64>,
    pub k_hat_asw: Option<usize>,
    pub k_hat_ch: Option<usize>,
    pub k_hat_dunn: Option<usize>,
    pub error: Option<String>,
}

impl RunRecord {
    fn blank(cell_index: usize, cell: &Cell, rep: usize, method: Method, batch_seed: u64) -> Self {
        let s = &cell.spec;
        Self {
            cell: cell_index,
            rep,
            method: method.label(),
            kind: s.kind.name().into(),
            n_sequences: s.n_sequences,
            alphabet: s.alphabet,
            min_length: s.min_length,
            max_length: s.max_length,
            pattern_len: s.pattern_len,
            clusters: s.clusters,
            window: cell.window,
            batch_seed,
            purity: None,
            ri: None,
            ari: None,
            f_measure: None,
            asw: None,
            ch: None,
            dunn: None,
            one_nn: None,
            k_hat_asw: None,
            k_hat_ch: None,
            k_hat_dunn: None,
            error: None,
        }
    }
}

/// Means over the successful runs of one method (optionally one cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub cell: Option<usize>,
    pub runs: usize,
    pub failures: usize,
    #[serde(with = "inf_as_string")]
    pub purity: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub ri: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub ari: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub f_measure: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub asw: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub one_nn: Option<f64>,
    /// Share of runs whose ASW-estimated cluster count was right.
    #[serde(with = "inf_as_string")]
    pub k_hat_asw_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub preset: String,
    pub description: String,
    pub master_seed: u64,
    pub trees: usize,
    pub cells: Vec<Cell>,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    /// One CSV row per record.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Overall summary row for `method`.
    pub fn method_summary(&self, method: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.cell.is_none())
    }

    /// Per-cell summary row.
    pub fn cell_summary(&self, method: &str, cell: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.cell == Some(cell))
    }

    /// Records of one method, in cell/replication order.
    pub fn records_of<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.method == method)
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten().filter(|v| v.is_finite()) {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn summarize_group(method: &str, cell: Option<usize>, rows: &[&RunRecord]) -> SummaryRow {
    let ok: Vec<&&RunRecord> = rows.iter().filter(|r| r.error.is_none()).collect();
    let estimated: Vec<&&&RunRecord> = ok.iter().filter(|r| r.k_hat_asw.is_some()).collect();
    SummaryRow {
        method: method.to_string(),
        cell,
        runs: rows.len(),
        failures: rows.len() - ok.len(),
        purity: mean(ok.iter().map(|r| r.purity)),
        ri: mean(ok.iter().map(|r| r.ri)),
        ari: mean(ok.iter().map(|r| r.ari)),
        f_measure: mean(ok.iter().map(|r| r.f_measure)),
        asw: mean(ok.iter().map(|r| r.asw)),
        one_nn: mean(ok.iter().map(|r| r.one_nn)),
        k_hat_asw_accuracy: (!estimated.is_empty()).then(|| {
            estimated
                .iter()
                .filter(|r| r.k_hat_asw == Some(r.clusters))
                .count() as f64
                / estimated.len() as f64
        }),
    }
}

fn summarize(methods: &[Method], n_cells: usize, records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for m in methods {
        let label = m.label();
        let rows: Vec<&RunRecord> = records.iter().filter(|r| r.method == label).collect();
        out.push(summarize_group(&label, None, &rows));
        for c in 0..n_cells {
            let cell_rows: Vec<&RunRecord> = rows.iter().copied().filter(|r| r.cell == c).collect();
            out.push(summarize_group(&label, Some(c), &cell_rows));
        }
    }
    out
}

fn run_method(
    batch: &SimBatch,
    cell: &Cell,
    method: Method,
    trees: usize,
    seed: u64,
    record: &mut RunRecord,
) -> Result<()> {
    let ds = &batch.dataset;
    let truth = ds.labels().expect("simulated batches are labelled");
    let cfg = PipelineConfig {
        window: cell.window,
        trees,
        seed,
        ..PipelineConfig::new(seed)
    };
    let out = compute(ds, method, &cfg)?;
    record.window = out.window;
    let dg = ward_linkage(&out.distances)?;
    let assign = cut(&dg, cell.spec.clusters)?;
    let report = evaluate(
        &out.distances,
        out.vectors.as_ref(),
        &assign.labels,
        Some(truth),
    )?;
    record.purity = report.external.purity;
    record.ri = report.external.ri;
    record.ari = report.external.ari;
    record.f_measure = report.external.f_measure;
    record.asw = report.internal.asw;
    record.ch = report.internal.ch;
    record.dunn = report.internal.dunn;
    record.one_nn = report.one_nn;
    if let Some((lo, hi)) = cell.k_range {
        let hi = hi.min(ds.len() - 1);
        let pick = |index| {
            estimate_k_with(&dg, out.vectors.as_ref(), &out.distances, lo..=hi, index)
                .ok()
                .map(|e| e.k_hat)
        };
        record.k_hat_asw = pick(ValidityIndex::Asw);
        record.k_hat_dunn = pick(ValidityIndex::Dunn);
        if out.vectors.is_some() {
            record.k_hat_ch = pick(ValidityIndex::Ch);
        }
    }
    Ok(())
}

/// Run every (cell, replication, method). Each batch is seeded from
/// `(master_seed, data_index, replication)`, so results do not depend on
/// scheduling. Failures are recorded per run.
pub fn run_experiment(preset: &Preset, master_seed: u64) -> ExperimentReport {
    let jobs: Vec<(usize, usize)> = preset
        .cells
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| (0..cell.spec.replications).map(move |r| (c, r)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(c, rep)| {
            let cell = &preset.cells[c];
            let batch_seed = derive_seed(master_seed, &[cell.data_index as u64, rep as u64]);
            let method_seed = derive_seed(batch_seed, &[1]);
            let batch = gen_batch(&cell.spec, batch_seed).map_err(|e| e.to_string());
            preset
                .methods
                .iter()
                .map(|&m| {
                    let mut rec = RunRecord::blank(c, cell, rep, m, batch_seed);
                    rec.error = match &batch {
                        Err(msg) => Some(msg.clone()),
                        Ok(b) => run_method(b, cell, m, preset.trees, method_seed, &mut rec)
                            .err()
                            .map(|e| e.to_string()),
                    };
                    rec
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let summary = summarize(&preset.methods, preset.cells.len(), &records);
    ExperimentReport {
        preset: preset.name.clone(),
        description: preset.description.clone(),
        master_seed,
        trees: preset.trees,
        cells: preset.cells.clone(),
        records,
        summary,
    }
}

/// Which dataset characteristic a sensitivity run varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityKind {
    Instances,
    SeqLength,
}

/// Point on a sensitivity curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: usize,
    #[serde(with = "inf_as_string")]
    pub asw: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub purity: Option<f64>,
    #[serde(with = "inf_as_string")]
    pub ari: Option<f64>,
}

/// Mean ASW and external scores against `N` or `L` for the tree encoder.
pub fn sensitivity_suite(
    kind: SensitivityKind,
    seed: u64,
) -> Result<(ExperimentReport, Vec<CurvePoint>)> {
    let p = preset(match kind {
        SensitivityKind::Instances => "sens-instances",
        SensitivityKind::SeqLength => "sens-length",
    })?;
    let report = run_experiment(&p, seed);
    let label = Method::NTreeClus(Variant::Rf).label();
    let curve = p
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let s = report
                .cell_summary(&label, c)
                .expect("every cell is summarized");
            CurvePoint {
                x: match kind {
                    SensitivityKind::Instances => cell.spec.n_sequences,
                    SensitivityKind::SeqLength => cell.spec.min_length,
                },
                asw: s.asw,
                purity: s.purity,
                ari: s.ari,
            }
        })
        .collect();
    Ok((report, curve))
}
