//! Sparse non-negative integer count vectors.

use serde::{Deserialize, Serialize};

/// Rows of sparse counts over `dim` columns. Each row holds `(column, count)`
/// pairs sorted by column with no zero counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    dim: usize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl CountMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
        }
    }

    /// Build from rows of unsorted column ids, one entry per occurrence.
    pub fn from_occurrences(dim: usize, rows: Vec<Vec<u32>>) -> Self {
        let rows = rows.into_iter().map(run_length).collect();
        Self { dim, rows }
    }

    pub fn from_dense(rows: &[Vec<u32>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let rows = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(j, &c)| (j as u32, c))
                    .collect()
            })
            .collect();
        Self { dim, rows }
    }

    /// Append a row given as sorted, zero-free `(column, count)` pairs.
    pub fn push_row(&mut self, row: Vec<(u32, u32)>) {
        debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(row.iter().all(|&(c, n)| (c as usize) < self.dim && n > 0));
        self.rows.push(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(u32, u32)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(u32, u32)>] {
        &self.rows
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.rows[i].iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.dim];
        for row in &self.rows {
            for &(c, n) in row {
                out[c as usize] += u64::from(n);
            }
        }
        out
    }

    pub fn dense_row(&self, i: usize) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for &(c, n) in &self.rows[i] {
            out[c as usize] = n;
        }
        out
    }

    pub fn squared_norm(&self, i: usize) -> u64 {
        self.rows[i]
            .iter()
            .map(|&(_, c)| u64::from(c) * u64::from(c))
            .sum()
    }
}

/// Sort and collapse repeated column ids into counts.
pub fn run_length(mut ids: Vec<u32>) -> Vec<(u32, u32)> {
    ids.sort_unstable();
    let mut out: Vec<(u32, u32)> = Vec::new();
    for id in ids {
        match out.last_mut() {
            Some((c, n)) if *c == id => *n += 1,
            _ => out.push((id, 1)),
        }
    }
    out
}

/// Exact dot product of two sorted sparse rows.
pub fn sparse_dot(a: &[(u32, u32)], b: &[(u32, u32)]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += u64::from(a[i].1) * u64::from(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// `sum |a_k - b_k|` over two sorted sparse rows.
pub fn sparse_l1(a: &[(u32, u32)], b: &[(u32, u32)]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() || j < b.len() {
        let ca = a.get(i).map_or(u32::MAX, |p| p.0);
        let cb = b.get(j).map_or(u32::MAX, |p| p.0);
        match ca.cmp(&cb) {
            std::cmp::Ordering::Less => {
                acc += u64::from(a[i].1);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                acc += u64::from(b[j].1);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                acc += u64::from(a[i].1.abs_diff(b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    acc
}
