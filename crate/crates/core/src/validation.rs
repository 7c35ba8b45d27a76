//! Cluster validity indices.
//!
//! Internal: average silhouette width (ASW), Calinski-Harabasz (CH) and Dunn.
//! External: purity, Rand index, adjusted Rand index and pair-counting F1.
//! Also leave-one-out 1-NN accuracy against ground truth.
//!
//! Degenerate CH and Dunn values are returned as `f64::INFINITY` rather than
//! a large finite number.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::CountMatrix;
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

fn n_clusters(labels: &[usize]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

fn require_two(labels: &[usize]) -> Result<usize> {
    let k = n_clusters(labels);
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l] = true;
    }
    let distinct = seen.iter().filter(|&&s| s).count();
    if distinct < 2 {
        return Err(Error::TooFewClusters {
            required: 2,
            got: distinct,
        });
    }
    Ok(k)
}

/// Mean silhouette width. Points in singleton clusters score 0, as does any
/// point with `max(a, b) = 0`.
pub fn asw(dm: &DistanceMatrix, labels: &[usize]) -> Result<f64> {
    check_len(dm.order(), labels.len())?;
    let k = require_two(labels)?;
    let n = labels.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let s: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0f64; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dm.get(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(s.iter().sum::<f64>() / n as f64)
}

/// Calinski-Harabasz on count vectors. Sums of squares are formed from exact
/// integer numerators; `WGSS = 0` yields `f64::INFINITY`.
pub fn calinski_harabasz(vectors: &CountMatrix, labels: &[usize]) -> Result<f64> {
    check_len(vectors.n_rows(), labels.len())?;
    let n = labels.len();
    let k = n_clusters(labels);
    if k < 2 || k >= n {
        return Err(Error::DegenerateCh { k, n });
    }
    let dim = vectors.dim();
    let mut sums = vec![vec![0u64; dim]; k];
    let mut sq = vec![0u128; k];
    let mut sizes = vec![0u64; k];
    let mut total = vec![0u64; dim];
    for (i, &l) in labels.iter().enumerate() {
        sizes[l] += 1;
        sq[l] += vectors.squared_norm(i) as u128;
        for &(c, v) in vectors.row(i) {
            sums[l][c as usize] += u64::from(v);
            total[c as usize] += u64::from(v);
        }
    }
    if sizes.contains(&0) {
        return Err(Error::DegenerateCh { k, n });
    }
    let support: Vec<usize> = (0..dim).filter(|&c| total[c] > 0).collect();
    let nn = n as i128;
    let mut wgss = 0.0f64;
    let mut bgss = 0.0f64;
    for c in 0..k {
        let nc = sizes[c] as u128;
        let p: u128 = support.iter().map(|&j| (sums[c][j] as u128).pow(2)).sum();
        // within: (n_c * sum ||x||^2 - ||S_c||^2) / n_c
        wgss += (nc * sq[c] - p) as f64 / nc as f64;
        // between: ||n S_c - n_c T||^2 / (n^2 n_c)
        let q: u128 = support
            .iter()
            .map(|&j| {
                let d = nn * sums[c][j] as i128 - sizes[c] as i128 * total[j] as i128;
                d.unsigned_abs().pow(2)
            })
            .sum();
        bgss += q as f64 / ((n as f64).powi(2) * nc as f64);
    }
    Ok(ch_ratio(bgss, wgss, k, n))
}

fn ch_ratio(bgss: f64, wgss: f64, k: usize, n: usize) -> f64 {
    if wgss == 0.0 {
        return f64::INFINITY;
    }
    (bgss / (k - 1) as f64) / (wgss / (n - k) as f64)
}

/// Calinski-Harabasz on dense real vectors.
pub fn calinski_harabasz_dense(rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_len(rows.len(), labels.len())?;
    let n = labels.len();
    let k = n_clusters(labels);
    if k < 2 || k >= n {
        return Err(Error::DegenerateCh { k, n });
    }
    let dim = rows.first().map_or(0, Vec::len);
    let mut centroids = vec![vec![0.0f64; dim]; k];
    let mut sizes = vec![0usize; k];
    let mut mean = vec![0.0f64; dim];
    for (row, &l) in rows.iter().zip(labels) {
        check_len(row.len(), dim)?;
        sizes[l] += 1;
        for (j, &x) in row.iter().enumerate() {
            centroids[l][j] += x;
            mean[j] += x;
        }
    }
    if sizes.contains(&0) {
        return Err(Error::DegenerateCh { k, n });
    }
    for (c, s) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|x| *x /= *s as f64);
    }
    mean.iter_mut().for_each(|x| *x /= n as f64);
    let wgss: f64 = rows
        .iter()
        .zip(labels)
        .map(|(r, &l)| {
            r.iter()
                .zip(&centroids[l])
                .map(|(x, c)| (x - c).powi(2))
                .sum::<f64>()
        })
        .sum();
    let bgss: f64 = centroids
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| {
            s as f64
                * c.iter()
                    .zip(&mean)
                    .map(|(x, m)| (x - m).powi(2))
                    .sum::<f64>()
        })
        .sum();
    Ok(ch_ratio(bgss, wgss, k, n))
}

/// Smallest between-cluster distance over largest cluster diameter.
/// Zero diameters with positive separation give `f64::INFINITY`.
pub fn dunn(dm: &DistanceMatrix, labels: &[usize]) -> Result<f64> {
    check_len(dm.order(), labels.len())?;
    require_two(labels)?;
    let n = labels.len();
    let (sep, diam) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sep = f64::INFINITY;
            let mut diam = 0.0f64;
            for j in (i + 1)..n {
                let d = dm.get(i, j);
                if labels[i] == labels[j] {
                    diam = diam.max(d);
                } else {
                    sep = sep.min(d);
                }
            }
            (sep, diam)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(s, d), (s2, d2)| {
            (s.min(s2), d.max(d2))
        });
    if diam == 0.0 {
        return Ok(if sep > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(sep / diam)
}

/// Cluster-by-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n_classes: usize,
}

impl ContingencyTable {
    /// Rows are clusters, columns classes; both given as dense ids.
    pub fn new(assign: &[usize], truth: &[usize]) -> Result<Self> {
        check_len(assign.len(), truth.len())?;
        let k = n_clusters(assign);
        let c = n_clusters(truth);
        let mut counts = vec![vec![0u64; c]; k];
        for (&a, &t) in assign.iter().zip(truth) {
            counts[a][t] += 1;
        }
        Ok(Self {
            counts,
            n_classes: c,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn cluster_sizes(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn class_sizes(&self) -> Vec<u64> {
        (0..self.n_classes)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// `(same cluster & same class, same cluster, same class, all)` pair counts.
    pub fn pair_counts(&self) -> (u64, u64, u64, u64) {
        let c2 = |x: u64| x * x.saturating_sub(1) / 2;
        let both = self.counts.iter().flatten().map(|&x| c2(x)).sum();
        let clusters = self.cluster_sizes().into_iter().map(c2).sum();
        let classes = self.class_sizes().into_iter().map(c2).sum();
        (both, clusters, classes, c2(self.total()))
    }
}

pub fn purity(ct: &ContingencyTable) -> f64 {
    let n = ct.total();
    if n == 0 {
        return 0.0;
    }
    let hit: u64 = ct
        .counts
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    hit as f64 / n as f64
}

pub fn rand_index(assign: &[usize], truth: &[usize]) -> Result<f64> {
    let (tp, same_cluster, same_class, all) = ContingencyTable::new(assign, truth)?.pair_counts();
    if all == 0 {
        return Ok(1.0);
    }
    let tn = all + tp - same_cluster - same_class;
    Ok((tp + tn) as f64 / all as f64)
}

/// Hubert-Arabie adjusted Rand index; `1.0` when the chance correction is
/// undefined (both partitions trivial in the same way).
pub fn adjusted_rand(assign: &[usize], truth: &[usize]) -> Result<f64> {
    let (tp, a, b, all) = ContingencyTable::new(assign, truth)?.pair_counts();
    if all == 0 {
        return Ok(1.0);
    }
    let (tp, a, b, all) = (tp as f64, a as f64, b as f64, all as f64);
    let expected = a * b / all;
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((tp - expected) / (max - expected))
}

/// Pair-counting F1; 0 when no pair is placed together in both partitions.
pub fn f_measure(ct: &ContingencyTable) -> f64 {
    let (tp, same_cluster, same_class, _) = ct.pair_counts();
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / same_cluster as f64;
    let r = tp as f64 / same_class as f64;
    2.0 * p * r / (p + r)
}

/// Leave-one-out 1-NN accuracy; distance ties go to the smaller index.
pub fn one_nn_loo(dm: &DistanceMatrix, truth: &[usize]) -> Result<f64> {
    check_len(dm.order(), truth.len())?;
    let n = truth.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "1-NN needs at least 2 points".into(),
        ));
    }
    let hits = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let mut best = (f64::INFINITY, usize::MAX);
            for j in (0..n).filter(|&j| j != i) {
                let d = dm.get(i, j);
                if d < best.0 || best.1 == usize::MAX {
                    best = (d, j);
                }
            }
            truth[best.1] == truth[i]
        })
        .count();
    Ok(hits as f64 / n as f64)
}

/// Serde adapter writing non-finite values as `"inf"`, `"-inf"` or `"nan"`.
pub mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(x),
            Some(x) if x.is_nan() => s.serialize_some("nan"),
            Some(x) if *x > 0.0 => s.serialize_some("inf"),
            Some(_) => s.serialize_some("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => None,
            Some(Repr::Num(x)) => Some(x),
            Some(Repr::Text(t)) => Some(match t.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                other => return Err(serde::de::Error::custom(format!("bad number `{other}`"))),
            }),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InternalScores {
    #[serde(with = "inf_as_string", default)]
    pub asw: Option<f64>,
    #[serde(with = "inf_as_string", default)]
    pub ch: Option<f64>,
    #[serde(with = "inf_as_string", default)]
    pub dunn: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    #[serde(with = "inf_as_string", default)]
    pub purity: Option<f64>,
    #[serde(with = "inf_as_string", default)]
    pub ri: Option<f64>,
    #[serde(with = "inf_as_string", default)]
    pub ari: Option<f64>,
    #[serde(with = "inf_as_string", default)]
    pub f_measure: Option<f64>,
}

/// Every index that could be computed for one clustering. `inputs` names
/// what each internal index was computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub internal: InternalScores,
    pub external: ExternalScores,
    #[serde(with = "inf_as_string", default)]
    pub one_nn: Option<f64>,
    pub inputs: BTreeMap<String, String>,
}

/// Compute all applicable indices. CH needs `vectors`; external indices and
/// 1-NN need `truth`. Indices that are undefined for this partition stay `None`.
pub fn evaluate(
    dm: &DistanceMatrix,
    vectors: Option<&CountMatrix>,
    assign: &[usize],
    truth: Option<&[usize]>,
) -> Result<ValidationReport> {
    check_len(dm.order(), assign.len())?;
    let mut report = ValidationReport::default();
    let metric = format!("{} distance matrix", dm.metric());
    if n_clusters(assign) >= 2 {
        report.internal.asw = Some(asw(dm, assign)?);
        report.internal.dunn = Some(dunn(dm, assign)?);
        report.inputs.insert("asw".into(), metric.clone());
        report.inputs.insert("dunn".into(), metric.clone());
    }
    if let Some(v) = vectors {
        if let Ok(ch) = calinski_harabasz(v, assign) {
            report.internal.ch = Some(ch);
            report
                .inputs
                .insert("ch".into(), "representation vectors".into());
        }
    }
    if let Some(truth) = truth {
        let ct = ContingencyTable::new(assign, truth)?;
        report.external = ExternalScores {
            purity: Some(purity(&ct)),
            ri: Some(rand_index(assign, truth)?),
            ari: Some(adjusted_rand(assign, truth)?),
            f_measure: Some(f_measure(&ct)),
        };
        report.one_nn = Some(one_nn_loo(dm, truth)?);
        report.inputs.insert("one_nn".into(), metric);
    }
    Ok(report)
}

/// Map arbitrary class names to dense ids in order of first appearance.
pub fn encode_labels<T: std::hash::Hash + Eq + Clone>(raw: &[T]) -> Vec<usize> {
    let mut map: HashMap<T, usize> = HashMap::new();
    raw.iter()
        .map(|r| {
            let next = map.len();
            *map.entry(r.clone()).or_insert(next)
        })
        .collect()
}
