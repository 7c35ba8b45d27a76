//! Pairwise dissimilarities and the symmetric distance matrix.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{jaro_winkler, levenshtein};
use crate::counts::{sparse_dot, sparse_l1, CountMatrix};
use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};

/// Metrics over count vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorMetric {
    Cosine,
    Manhattan,
}

/// Metrics over raw token sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StringMetric {
    Levenshtein,
    /// `1 - jaro_winkler similarity`.
    JaroWinkler,
}

/// Symmetric matrix with zero diagonal, stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    order: usize,
    condensed: Vec<f64>,
    metric: String,
    ids: Vec<String>,
}

#[inline]
fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    /// Build from a strict upper triangle in row order.
    pub fn from_condensed(
        ids: Vec<String>,
        condensed: Vec<f64>,
        metric: impl Into<String>,
    ) -> Result<Self> {
        let n = ids.len();
        if condensed.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::LengthMismatch {
                left: condensed.len(),
                right: n * n.saturating_sub(1) / 2,
            });
        }
        Ok(Self {
            order: n,
            condensed,
            metric: metric.into(),
            ids,
        })
    }

    /// Evaluate `f(i, j)` for every `i < j`, rows in parallel.
    pub fn from_fn<F>(ids: Vec<String>, metric: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let n = ids.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| f(i, j)).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let condensed: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_condensed(ids, condensed, metric)
    }

    /// Number of points.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn condensed(&self) -> &[f64] {
        &self.condensed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.condensed[condensed_index(self.order, i, j)],
            std::cmp::Ordering::Greater => self.condensed[condensed_index(self.order, j, i)],
        }
    }

    /// First non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let pos = self.condensed.iter().position(|d| !d.is_finite())?;
        let n = self.order;
        let mut i = 0;
        let mut start = 0;
        while start + (n - i - 1) <= pos {
            start += n - i - 1;
            i += 1;
        }
        Some((i, i + 1 + pos - start))
    }

    /// Full square matrix as TSV with an id header row and id column.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "\t{}", self.ids.join("\t"))?;
        for i in 0..self.order {
            let row: Vec<String> = (0..self.order)
                .map(|j| self.get(i, j).to_string())
                .collect();
            writeln!(out, "{}\t{}", self.ids[i], row.join("\t"))?;
        }
        Ok(())
    }
}

/// `1 - a.b / (|a| |b|)` for dense non-negative vectors.
pub fn cosine_dissimilarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector {
            id: if na == 0.0 { "a" } else { "b" }.into(),
        });
    }
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 1.0))
}

/// `sum |a_i - b_i|`.
pub fn manhattan(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Cosine dissimilarity of two sparse count rows with exact integer dot
/// products and norms; `None` if either row is all zeros.
pub fn sparse_cosine(a: &[(u32, u32)], b: &[(u32, u32)], na: u64, nb: u64) -> Option<f64> {
    if na == 0 || nb == 0 {
        return None;
    }
    let dot = sparse_dot(a, b);
    if dot == 0 {
        return Some(1.0);
    }
    let denom = ((na as u128 * nb as u128) as f64).sqrt();
    Some((1.0 - dot as f64 / denom).clamp(0.0, 1.0))
}

/// Pairwise distances between the rows of `counts`.
pub fn distance_matrix(
    counts: &CountMatrix,
    ids: &[String],
    metric: VectorMetric,
) -> Result<DistanceMatrix> {
    if counts.n_rows() != ids.len() {
        return Err(Error::LengthMismatch {
            left: counts.n_rows(),
            right: ids.len(),
        });
    }
    if ids.len() < 2 {
        return Err(Error::InvalidParameter(
            "a distance matrix needs at least 2 rows".into(),
        ));
    }
    match metric {
        VectorMetric::Cosine => {
            let norms: Vec<u64> = (0..counts.n_rows())
                .map(|i| counts.squared_norm(i))
                .collect();
            if let Some(i) = norms.iter().position(|&n| n == 0) {
                return Err(Error::ZeroVector { id: ids[i].clone() });
            }
            DistanceMatrix::from_fn(ids.to_vec(), "cosine", |i, j| {
                Ok(
                    sparse_cosine(counts.row(i), counts.row(j), norms[i], norms[j])
                        .expect("norms checked"),
                )
            })
        }
        VectorMetric::Manhattan => DistanceMatrix::from_fn(ids.to_vec(), "manhattan", |i, j| {
            Ok(sparse_l1(counts.row(i), counts.row(j)) as f64)
        }),
    }
}

/// Pairwise distances between dense real vectors.
pub fn distance_matrix_dense(
    rows: &[Vec<f64>],
    ids: &[String],
    metric: VectorMetric,
) -> Result<DistanceMatrix> {
    if rows.len() != ids.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: ids.len(),
        });
    }
    if ids.len() < 2 {
        return Err(Error::InvalidParameter(
            "a distance matrix needs at least 2 rows".into(),
        ));
    }
    match metric {
        VectorMetric::Cosine => {
            if let Some(i) = rows.iter().position(|r| r.iter().all(|&x| x == 0.0)) {
                return Err(Error::ZeroVector { id: ids[i].clone() });
            }
            DistanceMatrix::from_fn(ids.to_vec(), "cosine", |i, j| {
                cosine_dissimilarity(&rows[i], &rows[j])
            })
        }
        VectorMetric::Manhattan => DistanceMatrix::from_fn(ids.to_vec(), "manhattan", |i, j| {
            manhattan(&rows[i], &rows[j])
        }),
    }
}

/// Pairwise string distances over the raw token sequences of `ds`.
pub fn string_distance_matrix(
    ds: &SequenceDataset,
    metric: StringMetric,
) -> Result<DistanceMatrix> {
    if ds.len() < 2 {
        return Err(Error::InvalidParameter(
            "a distance matrix needs at least 2 rows".into(),
        ));
    }
    let seqs = ds.sequences();
    match metric {
        StringMetric::Levenshtein => DistanceMatrix::from_fn(ds.ids(), "levenshtein", |i, j| {
            Ok(levenshtein(&seqs[i].tokens, &seqs[j].tokens) as f64)
        }),
        StringMetric::JaroWinkler => DistanceMatrix::from_fn(ds.ids(), "jaro_winkler", |i, j| {
            Ok(1.0 - jaro_winkler(&seqs[i].tokens, &seqs[j].tokens))
        }),
    }
}
