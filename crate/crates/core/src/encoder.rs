//! Terminal-occupancy encoding of sequences.
//!
//! Every window of a sequence is routed through every tree; the sequence is
//! represented by how many of its windows land in each terminal node. Row `i`
//! therefore sums to `trees * (L_i - n)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::{run_length, CountMatrix};
use crate::dataset::{default_window, SequenceDataset};
use crate::error::{Error, Result};
use crate::forest::{train_forest, FeatureTable, ForestModel, ForestParams};
use crate::segmentation::{segment, SegmentedMatrix};

/// Encoder flavour: one tree or a forest, with or without the window
/// position as a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dt,
    Rf,
    DtPos,
    RfPos,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dt, Variant::Rf, Variant::DtPos, Variant::RfPos];

    pub fn uses_position(self) -> bool {
        matches!(self, Variant::DtPos | Variant::RfPos)
    }

    pub fn is_forest(self) -> bool {
        matches!(self, Variant::Rf | Variant::RfPos)
    }

    /// Forest parameters for this variant; `trees` is ignored for single trees.
    pub fn params(self, trees: usize, seed: u64) -> ForestParams {
        if self.is_forest() {
            ForestParams::forest(trees, seed)
        } else {
            ForestParams::single_tree(seed)
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Dt => "ntreeclus-dt",
            Variant::Rf => "ntreeclus-rf",
            Variant::DtPos => "ntreeclus-dt-pos",
            Variant::RfPos => "ntreeclus-rf-pos",
        }
    }
}

/// Per-window terminal ids: row `r` holds exactly one id per tree.
#[derive(Debug, Clone)]
pub struct OccupancyMatrix {
    trees: usize,
    total_terminals: u32,
    ids: Vec<u32>,
}

impl OccupancyMatrix {
    pub fn n_rows(&self) -> usize {
        self.ids.len() / self.trees
    }

    pub fn trees(&self) -> usize {
        self.trees
    }

    pub fn total_terminals(&self) -> u32 {
        self.total_terminals
    }

    /// Columns holding a one in row `r`.
    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.trees..(r + 1) * self.trees]
    }

    /// Row `r` as a dense 0/1 vector over all terminals.
    pub fn dense_row(&self, r: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.total_terminals as usize];
        for &id in self.row(r) {
            out[id as usize] = 1;
        }
        out
    }
}

fn check_arity(fm: &ForestModel, sm: &SegmentedMatrix) -> Result<()> {
    if fm.n_features != sm.n_features() {
        return Err(Error::ArityMismatch {
            expected: fm.n_features,
            got: sm.n_features(),
        });
    }
    Ok(())
}

/// Route every row of `sm` through `fm`. Materializes `rows * trees` ids;
/// [`encode`] streams instead.
pub fn occupancy(fm: &ForestModel, sm: &SegmentedMatrix) -> Result<OccupancyMatrix> {
    check_arity(fm, sm)?;
    let mut ids = Vec::with_capacity(sm.n_rows() * fm.n_trees());
    for r in 0..sm.n_rows() {
        fm.route_row_into(sm, r, &mut ids);
    }
    Ok(OccupancyMatrix {
        trees: fm.n_trees(),
        total_terminals: fm.total_terminals,
        ids,
    })
}

/// Per-sequence terminal counts plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRepresentation {
    pub counts: CountMatrix,
    pub seq_ids: Vec<String>,
    pub trees: usize,
    pub window: usize,
    pub variant: Option<Variant>,
    pub seed: u64,
}

impl SequenceRepresentation {
    pub fn n_sequences(&self) -> usize {
        self.counts.n_rows()
    }

    pub fn total_terminals(&self) -> usize {
        self.counts.dim()
    }

    /// `seq_id<TAB>terminal:count terminal:count ...`, one line per sequence.
    pub fn write_sparse_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "seq_id\tterminals")?;
        for (i, id) in self.seq_ids.iter().enumerate() {
            let pairs: Vec<String> = self
                .counts
                .row(i)
                .iter()
                .map(|(c, n)| format!("{c}:{n}"))
                .collect();
            writeln!(out, "{id}\t{}", pairs.join(" "))?;
        }
        Ok(())
    }

    /// Full matrix with a `t0..t{T-1}` header.
    pub fn write_dense_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.counts.dim()).map(|j| format!("t{j}")).collect();
        writeln!(out, "seq_id\t{}", header.join("\t"))?;
        for (i, id) in self.seq_ids.iter().enumerate() {
            let row: Vec<String> = self
                .counts
                .dense_row(i)
                .iter()
                .map(u32::to_string)
                .collect();
            writeln!(out, "{id}\t{}", row.join("\t"))?;
        }
        Ok(())
    }
}

/// Aggregate terminal occupancy per source sequence.
pub fn encode(fm: &ForestModel, sm: &SegmentedMatrix) -> Result<SequenceRepresentation> {
    check_arity(fm, sm)?;
    let trees = fm.n_trees();
    let rows: Vec<Vec<(u32, u32)>> = (0..sm.n_sequences())
        .into_par_iter()
        .map(|i| {
            let range = sm.rows_of(i);
            let mut ids = Vec::with_capacity(range.len() * trees);
            for r in range {
                fm.route_row_into(sm, r, &mut ids);
            }
            run_length(ids)
        })
        .collect();

    let mut counts = CountMatrix::new(fm.total_terminals as usize);
    for (i, row) in rows.into_iter().enumerate() {
        debug_assert_eq!(
            row.iter().map(|&(_, c)| c as usize).sum::<usize>(),
            trees * sm.rows_of(i).len(),
            "row-sum law violated for sequence {i}"
        );
        counts.push_row(row);
    }
    Ok(SequenceRepresentation {
        counts,
        seq_ids: sm.sequence_ids().to_vec(),
        trees,
        window: sm.window(),
        variant: None,
        seed: fm.params.seed,
    })
}

/// End-to-end encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub variant: Variant,
    /// Window size; `None` uses [`default_window`].
    pub window: Option<usize>,
    pub trees: usize,
    pub seed: u64,
}

impl EncodeConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        Self {
            variant,
            window: None,
            trees: 10,
            seed,
        }
    }

    pub fn with_window(mut self, n: usize) -> Self {
        self.window = Some(n);
        self
    }
}

/// Result of [`encode_corpus`].
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub representation: SequenceRepresentation,
    pub model: ForestModel,
    pub segments: SegmentedMatrix,
}

/// Segment, train and encode in one step.
pub fn encode_corpus(ds: &SequenceDataset, cfg: &EncodeConfig) -> Result<EncodedCorpus> {
    let n = match cfg.window {
        Some(n) => n,
        None => default_window(ds)?,
    };
    let segments = segment(ds, n, cfg.variant.uses_position())?;
    let model = train_forest(&segments, &cfg.variant.params(cfg.trees, cfg.seed))?;
    let mut representation = encode(&model, &segments)?;
    representation.variant = Some(cfg.variant);
    Ok(EncodedCorpus {
        representation,
        model,
        segments,
    })
}
