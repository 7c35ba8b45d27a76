//! Ward agglomerative clustering, dendrogram cuts, Newick export and
//! cluster-count estimation.

use std::cmp::Ordering;
use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::CountMatrix;
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::validation::{asw, calinski_harabasz, dunn};

/// One agglomeration step. Leaves are nodes `0..n`; merge `s` creates node `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub labels: Vec<String>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    /// Leaves under `node`, ascending.
    pub fn leaves_of(&self, node: usize) -> Vec<usize> {
        let n = self.n_leaves();
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < n {
                out.push(v);
            } else {
                let m = &self.merges[v - n];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Twice the increase in within-cluster sum of squares caused by merging
/// clusters `i` and `j`, where `w_*` are within-cluster sums of pairwise
/// dissimilarities and `b_ij` is the sum of dissimilarities across the two.
/// For two singletons this is their dissimilarity. Swapping `i` and `j`
/// gives the identical float.
#[inline]
pub fn ward_criterion(w_i: f64, w_j: f64, b_ij: f64, n_i: usize, n_j: usize) -> f64 {
    let (ni, nj) = (n_i as f64, n_j as f64);
    2.0 * ((w_i + w_j + b_ij) / (ni + nj) - (w_i / ni + w_j / nj))
}

/// Condensed index for `a < b`.
#[inline]
fn tri(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

struct WardState {
    n: usize,
    cross: Vec<f64>,
    within: Vec<f64>,
    size: Vec<usize>,
    active: Vec<bool>,
}

impl WardState {
    #[inline]
    fn crit(&self, a: usize, b: usize) -> f64 {
        ward_criterion(
            self.within[a],
            self.within[b],
            self.cross[tri(self.n, a, b)],
            self.size[a],
            self.size[b],
        )
    }

    /// Nearest active neighbour of `a`, smaller slot on ties.
    fn nearest(&self, a: usize) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for b in 0..self.n {
            if b == a || !self.active[b] {
                continue;
            }
            let d = self.crit(a, b);
            if d < best.0 || best.1 == usize::MAX {
                best = (d, b);
            }
        }
        best
    }
}

/// Ordering on candidate pairs: criterion first, then `(min, max)` of the
/// cluster representatives.
#[inline]
fn pair_cmp(d1: f64, a1: usize, b1: usize, d2: f64, a2: usize, b2: usize) -> Ordering {
    d1.partial_cmp(&d2)
        .unwrap_or(Ordering::Equal)
        .then_with(|| (a1.min(b1), a1.max(b1)).cmp(&(a2.min(b2), a2.max(b2))))
}

/// Ward linkage. Each cluster is identified by its smallest leaf index, and
/// ties are broken by the smallest such `(i, j)` pair.
pub fn ward_linkage(dm: &DistanceMatrix) -> Result<Dendrogram> {
    let n = dm.order();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "linkage needs at least 2 points".into(),
        ));
    }
    if let Some((i, j)) = dm.first_non_finite() {
        return Err(Error::NonFinite(i, j));
    }
    let mut st = WardState {
        n,
        cross: dm.condensed().to_vec(),
        within: vec![0.0; n],
        size: vec![1; n],
        active: vec![true; n],
    };
    let mut node: Vec<usize> = (0..n).collect();
    let mut nn: Vec<(f64, usize)> = (0..n).map(|a| st.nearest(a)).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut a = usize::MAX;
        for c in 0..n {
            if !st.active[c] {
                continue;
            }
            if a == usize::MAX
                || pair_cmp(nn[c].0, c, nn[c].1, nn[a].0, a, nn[a].1) == Ordering::Less
            {
                a = c;
            }
        }
        let (height, b) = nn[a];
        let (keep, gone) = (a.min(b), a.max(b));

        merges.push(Merge {
            left: node[keep],
            right: node[gone],
            height,
            size: st.size[keep] + st.size[gone],
        });

        st.within[keep] += st.within[gone] + st.cross[tri(n, keep, gone)];
        st.size[keep] += st.size[gone];
        st.active[gone] = false;
        node[keep] = n + step;
        for k in 0..n {
            if st.active[k] && k != keep {
                let add = st.cross[tri(n, gone, k)];
                st.cross[tri(n, keep, k)] += add;
            }
        }

        for (k, cached) in nn.iter_mut().enumerate() {
            if !st.active[k] || k == keep {
                continue;
            }
            if cached.1 == keep || cached.1 == gone {
                *cached = st.nearest(k);
            } else {
                let d = st.crit(k, keep);
                if pair_cmp(d, k, keep, cached.0, k, cached.1) == Ordering::Less {
                    *cached = (d, keep);
                }
            }
        }
        if step + 2 < n {
            nn[keep] = st.nearest(keep);
        }
    }
    Ok(Dendrogram {
        merges,
        labels: dm.ids().to_vec(),
    })
}

/// Flat clustering with labels `0..k` in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Relabel arbitrary ids by first occurrence.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|&r| {
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self {
            k: map.len(),
            labels,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }

    /// `seq_id,cluster` CSV.
    pub fn write_csv<W: Write>(&self, ids: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seq_id", "cluster"])?;
        for (id, l) in ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Undo the last `k - 1` merges.
pub fn cut(dg: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dg.n_leaves();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, max: n });
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (s, m) in dg.merges.iter().take(n - k).enumerate() {
        parent[m.left] = n + s;
        parent[m.right] = n + s;
    }
    let root = |mut v: usize| {
        while parent[v] != v {
            v = parent[v];
        }
        v
    };
    let roots: Vec<usize> = (0..n).map(root).collect();
    Ok(ClusterAssignment::from_raw(&roots))
}

fn newick_label(s: &str) -> String {
    const SPECIAL: &[char] = &[
        ' ', '(', ')', '[', ']', '\'', ':', ';', ',', '\t', '\n', '\r',
    ];
    if s.is_empty() || s.contains(SPECIAL) {
        format!("'{}'", s.replace('\'', "''"))
    } else {
        s.to_string()
    }
}

/// Newick text. A node sits at half its merge height (clamped to be at least
/// its children's), so two leaves merged at `h` get branches of `h/2`.
pub fn to_newick(dg: &Dendrogram, labels: &[String]) -> Result<String> {
    let n = dg.n_leaves();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    let mut text: Vec<String> = labels.iter().map(|l| newick_label(l)).collect();
    let mut depth = vec![0.0f64; 2 * n - 1];
    for (s, m) in dg.merges.iter().enumerate() {
        let h = (m.height / 2.0).max(depth[m.left]).max(depth[m.right]);
        depth[n + s] = h;
        let l = std::mem::take(&mut text[m.left]);
        let r = std::mem::take(&mut text[m.right]);
        text.push(format!(
            "({l}:{},{r}:{})",
            h - depth[m.left],
            h - depth[m.right]
        ));
    }
    let mut out = text.pop().unwrap_or_default();
    out.push(';');
    Ok(out)
}

/// Internal index used to rank cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityIndex {
    Asw,
    Ch,
    Dunn,
}

impl ValidityIndex {
    pub fn name(self) -> &'static str {
        match self {
            ValidityIndex::Asw => "asw",
            ValidityIndex::Ch => "ch",
            ValidityIndex::Dunn => "dunn",
        }
    }
}

impl std::str::FromStr for ValidityIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asw" | "silhouette" => Ok(Self::Asw),
            "ch" | "calinski-harabasz" => Ok(Self::Ch),
            "dunn" => Ok(Self::Dunn),
            other => Err(Error::InvalidParameter(format!("unknown index `{other}`"))),
        }
    }
}

/// Score of one cut; `score` is `None` when the index was degenerate there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScore {
    pub k: usize,
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub index: String,
    pub k_hat: usize,
    pub scores: Vec<KScore>,
}

impl KEstimate {
    /// `k<TAB>score` lines; degenerate cuts print `NA`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k\t{}", self.index)?;
        for s in &self.scores {
            match s.score {
                Some(v) => writeln!(out, "{}\t{v}", s.k)?,
                None => writeln!(out, "{}\tNA", s.k)?,
            }
        }
        Ok(())
    }
}

fn argmax(scores: &[KScore]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for s in scores {
        if let Some(v) = s.score {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((s.k, v));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Score every cut in `k_range` of `dg` and return the best `k`
/// (smallest on ties). CH needs `vectors`.
pub fn estimate_k_with(
    dg: &Dendrogram,
    vectors: Option<&CountMatrix>,
    dm: &DistanceMatrix,
    k_range: RangeInclusive<usize>,
    index: ValidityIndex,
) -> Result<KEstimate> {
    let n = dm.order();
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi + 1 > n || lo > hi {
        return Err(Error::KOutOfRange {
            k: if lo < 2 { lo } else { hi },
            max: n.saturating_sub(1),
        });
    }
    if index == ValidityIndex::Ch && vectors.is_none() {
        return Err(Error::InvalidParameter(
            "the ch index needs representation vectors".into(),
        ));
    }
    let scores: Vec<KScore> = (lo..=hi)
        .into_par_iter()
        .map(|k| -> Result<KScore> {
            let assign = cut(dg, k)?;
            let value = match index {
                ValidityIndex::Asw => asw(dm, &assign.labels),
                ValidityIndex::Ch => calinski_harabasz(vectors.expect("checked"), &assign.labels),
                ValidityIndex::Dunn => dunn(dm, &assign.labels),
            };
            Ok(match value {
                Ok(v) if v.is_finite() => KScore {
                    k,
                    score: Some(v),
                    note: None,
                },
                Ok(v) => KScore {
                    k,
                    score: None,
                    note: Some(format!("degenerate value {v}")),
                },
                Err(e) => KScore {
                    k,
                    score: None,
                    note: Some(e.to_string()),
                },
            })
        })
        .collect::<Result<_>>()?;
    let k_hat = argmax(&scores).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no cut in {lo}..={hi} gave a finite {} score",
            index.name()
        ))
    })?;
    Ok(KEstimate {
        index: index.name().into(),
        k_hat,
        scores,
    })
}

/// [`estimate_k_with`] on the Ward tree of `dm`.
pub fn estimate_k(
    vectors: Option<&CountMatrix>,
    dm: &DistanceMatrix,
    k_range: RangeInclusive<usize>,
    index: ValidityIndex,
) -> Result<KEstimate> {
    let dg = ward_linkage(dm)?;
    estimate_k_with(&dg, vectors, dm, k_range, index)
}

/// Weighted sum of several per-k curves after min-max normalizing each over
/// its finite values. A constant curve normalizes to zero. Cuts missing from
/// any curve are skipped.
pub fn combine_estimates(parts: &[(&KEstimate, f64)]) -> Result<KEstimate> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to combine".into()))?;
    if parts.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter(
            "weights must be finite and non-negative".into(),
        ));
    }
    let ks: Vec<usize> = first.0.scores.iter().map(|s| s.k).collect();
    if parts
        .iter()
        .any(|(e, _)| e.scores.iter().map(|s| s.k).ne(ks.iter().copied()))
    {
        return Err(Error::InvalidParameter(
            "curves cover different k ranges".into(),
        ));
    }
    let normalized: Vec<Vec<Option<f64>>> = parts
        .iter()
        .map(|(e, _)| {
            let finite = e.scores.iter().filter_map(|s| s.score);
            let lo = finite.clone().fold(f64::INFINITY, f64::min);
            let hi = finite.fold(f64::NEG_INFINITY, f64::max);
            e.scores
                .iter()
                .map(|s| {
                    s.score
                        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
                })
                .collect()
        })
        .collect();
    let scores: Vec<KScore> = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut acc = Some(0.0);
            for (p, (_, w)) in parts.iter().enumerate() {
                acc = match (acc, normalized[p][i]) {
                    (Some(a), Some(v)) => Some(a + w * v),
                    _ => None,
                };
            }
            KScore {
                k,
                score: acc,
                note: None,
            }
        })
        .collect();
    let k_hat = argmax(&scores)
        .ok_or_else(|| Error::InvalidParameter("no cut scored on every index".into()))?;
    let index = parts
        .iter()
        .map(|(e, w)| format!("{w}*{}", e.index))
        .collect::<Vec<_>>()
        .join("+");
    Ok(KEstimate {
        index,
        k_hat,
        scores,
    })
}
