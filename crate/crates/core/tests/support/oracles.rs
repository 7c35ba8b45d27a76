//! Brute-force reference implementations and randomized equivalence runs.
//! Each suite returns the number of instances checked, or the first mismatch.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use seqclus::baselines::levenshtein;
use seqclus::clustering::{ward_criterion, Merge};
use seqclus::forest::{best_split, gini, DenseTable, FeatureTable};
use seqclus::rng::stream;
use seqclus::validation::{adjusted_rand, f_measure, purity, rand_index, ContingencyTable};
use seqclus::{ward_linkage, DistanceMatrix};

pub type SuiteResult = Result<usize, String>;

// ---------------------------------------------------------------- Ward

struct Cluster {
    node: usize,
    members: Vec<usize>,
}

fn pair_sum(d: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    a.iter()
        .flat_map(|&i| b.iter().map(move |&j| d[i][j]))
        .sum()
}

fn within(d: &[Vec<f64>], a: &[usize]) -> f64 {
    let mut s = 0.0;
    for (x, &i) in a.iter().enumerate() {
        for &j in &a[x + 1..] {
            s += d[i][j];
        }
    }
    s
}

/// Exhaustive Ward: every step scores every pair of current clusters from
/// their raw member lists and merges the lowest, ties to the pair with the
/// smallest `(min leaf, min leaf)`.
pub fn naive_ward(d: &[Vec<f64>]) -> Vec<Merge> {
    let n = d.len();
    let mut clusters: Vec<Cluster> = (0..n)
        .map(|i| Cluster {
            node: i,
            members: vec![i],
        })
        .collect();
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (a, b) = (&clusters[x], &clusters[y]);
                let crit = ward_criterion(
                    within(d, &a.members),
                    within(d, &b.members),
                    pair_sum(d, &a.members, &b.members),
                    a.members.len(),
                    b.members.len(),
                );
                let ka = a.members[0];
                let kb = b.members[0];
                let key = (ka.min(kb), ka.max(kb));
                let better = match &best {
                    None => true,
                    Some((bc, bk, ..)) => crit < *bc || (crit == *bc && key < *bk),
                };
                if better {
                    best = Some((crit, key, x, y));
                }
            }
        }
        let (height, _, x, y) = best.unwrap();
        let b = clusters.remove(y);
        let a = clusters.remove(x);
        let (first, second) = if a.members[0] < b.members[0] {
            (a, b)
        } else {
            (b, a)
        };
        let mut members = [first.members, second.members].concat();
        members.sort_unstable();
        merges.push(Merge {
            left: first.node,
            right: second.node,
            height,
            size: members.len(),
        });
        clusters.push(Cluster {
            node: n + step,
            members,
        });
    }
    merges
}

/// Heights from the Lance-Williams Ward recurrence replayed along `merges`.
pub fn lance_williams_heights(d: &[Vec<f64>], merges: &[Merge]) -> Vec<f64> {
    let n = d.len();
    let total = 2 * n - 1;
    let mut dist = vec![vec![0.0; total]; total];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = d[i][j];
        }
    }
    let mut size = vec![1.0; total];
    let mut alive: Vec<bool> = (0..total).map(|v| v < n).collect();
    let mut heights = Vec::new();
    for (s, m) in merges.iter().enumerate() {
        let (i, j, new) = (m.left, m.right, n + s);
        heights.push(dist[i][j]);
        alive[i] = false;
        alive[j] = false;
        for k in 0..total {
            if !alive[k] {
                continue;
            }
            let (ni, nj, nk) = (size[i], size[j], size[k]);
            let v = ((ni + nk) * dist[i][k] + (nj + nk) * dist[j][k] - nk * dist[i][j])
                / (ni + nj + nk);
            dist[new][k] = v;
            dist[k][new] = v;
        }
        size[new] = size[i] + size[j];
        alive[new] = true;
    }
    heights
}

fn random_integer_matrix(rng: &mut ChaCha8Rng, n: usize, max: u32) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = f64::from(rng.gen_range(1..=max));
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn condensed(d: &[Vec<f64>]) -> DistanceMatrix {
    let n = d.len();
    let mut c = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            c.push(d[i][j]);
        }
    }
    DistanceMatrix::from_condensed((0..n).map(|i| format!("p{i}")).collect(), c, "test").unwrap()
}

/// Integer dissimilarities keep every within/between sum exact, so the
/// merge sequence (including ties, which small ranges make frequent) must
/// match the oracle bit for bit. Heights are also checked against the
/// Lance-Williams recurrence to a relative `1e-9`.
pub fn ward_suite(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, &[1]);
    for case in 0..instances {
        let n = rng.gen_range(2..=8);
        let max = if case % 2 == 0 { 3 } else { 50 };
        let d = random_integer_matrix(&mut rng, n, max);
        let got = ward_linkage(&condensed(&d))
            .map_err(|e| e.to_string())?
            .merges;
        let want = naive_ward(&d);
        if got != want {
            return Err(format!(
                "case {case}: ward merges {got:?} != oracle {want:?} for {d:?}"
            ));
        }
        for (s, (g, lw)) in got
            .iter()
            .zip(lance_williams_heights(&d, &want))
            .enumerate()
        {
            if (g.height - lw).abs() > 1e-9 * lw.abs().max(1.0) {
                return Err(format!(
                    "case {case} step {s}: height {} vs recurrence {lw}",
                    g.height
                ));
            }
        }
    }
    Ok(instances)
}

// ---------------------------------------------------------------- pair counting

pub struct PairOracle {
    pub purity: f64,
    pub ri: f64,
    pub ari: f64,
    pub f: f64,
}

/// Indices from an explicit walk over all `N(N-1)/2` pairs.
pub fn pair_oracle(assign: &[usize], truth: &[usize]) -> PairOracle {
    let n = assign.len();
    let (mut tp, mut fp, mut fn_, mut tn) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (assign[i] == assign[j], truth[i] == truth[j]) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
    }
    let all = tp + fp + fn_ + tn;
    let ri = if all == 0.0 { 1.0 } else { (tp + tn) / all };
    let den = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    let ari = if den == 0.0 {
        1.0
    } else {
        2.0 * (tp * tn - fn_ * fp) / den
    };
    let f = if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    let mut hits = 0usize;
    let clusters = assign.iter().max().map_or(0, |m| m + 1);
    for c in 0..clusters {
        let mut per_class = std::collections::HashMap::new();
        for i in (0..n).filter(|&i| assign[i] == c) {
            *per_class.entry(truth[i]).or_insert(0usize) += 1;
        }
        hits += per_class.values().copied().max().unwrap_or(0);
    }
    PairOracle {
        purity: hits as f64 / n as f64,
        ri,
        ari,
        f,
    }
}

pub fn pair_suite(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, &[2]);
    for case in 0..instances {
        let n = rng.gen_range(1..=7);
        let kc = rng.gen_range(1..=n);
        let kt = rng.gen_range(1..=n);
        let assign: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kc)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kt)).collect();
        let want = pair_oracle(&assign, &truth);
        let ct = ContingencyTable::new(&assign, &truth).map_err(|e| e.to_string())?;
        let got = [
            ("purity", purity(&ct), want.purity),
            (
                "ri",
                rand_index(&assign, &truth).map_err(|e| e.to_string())?,
                want.ri,
            ),
            (
                "ari",
                adjusted_rand(&assign, &truth).map_err(|e| e.to_string())?,
                want.ari,
            ),
            ("f", f_measure(&ct), want.f),
        ];
        for (name, g, w) in got {
            if (g - w).abs() > 1e-12 {
                return Err(format!(
                    "case {case}: {name} {g} vs oracle {w} for {assign:?} / {truth:?}"
                ));
            }
        }
    }
    Ok(instances)
}

// ---------------------------------------------------------------- Levenshtein

/// Full `(|a|+1) x (|b|+1)` dynamic-programming table.
pub fn levenshtein_table(a: &[u32], b: &[u32]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            t[i][j] = (t[i - 1][j] + 1)
                .min(t[i][j - 1] + 1)
                .min(t[i - 1][j - 1] + cost);
        }
    }
    t[a.len()][b.len()]
}

pub fn levenshtein_suite(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, &[3]);
    for case in 0..instances {
        let alphabet = rng.gen_range(1..=6);
        let la = rng.gen_range(0..=15);
        let lb = rng.gen_range(0..=15);
        let a: Vec<u32> = (0..la).map(|_| rng.gen_range(0..alphabet)).collect();
        let b: Vec<u32> = (0..lb).map(|_| rng.gen_range(0..alphabet)).collect();
        let (g, w) = (levenshtein(&a, &b), levenshtein_table(&a, &b));
        if g != w {
            return Err(format!(
                "case {case}: levenshtein({a:?}, {b:?}) = {g}, table says {w}"
            ));
        }
    }
    Ok(instances)
}

// ---------------------------------------------------------------- best split

pub struct SplitOracle {
    pub feature: usize,
    pub threshold: f64,
    pub left: u64,
    pub right: u64,
    pub decrease: f64,
}

/// Every midpoint between consecutive distinct observed values of every
/// feature, scored as an exact fraction `sum c_l^2 / n_l + sum c_r^2 / n_r`.
/// Ties keep the earliest `(feature, threshold)`.
pub fn exhaustive_split(
    table: &DenseTable,
    rows: &[u32],
    weights: &[u32],
    features: &[usize],
) -> Option<SplitOracle> {
    let classes = table.n_classes();
    let hist = |pick: &dyn Fn(usize) -> bool| {
        let mut h = vec![0u64; classes];
        for (&r, &w) in rows.iter().zip(weights) {
            if pick(r as usize) {
                h[table.target(r as usize) as usize] += u64::from(w);
            }
        }
        h
    };
    let sq = |h: &[u64]| h.iter().map(|&c| c as u128 * c as u128).sum::<u128>();
    let parent = hist(&|_| true);
    let total: u64 = parent.iter().sum();
    let mut best: Option<(u128, u128, SplitOracle)> = None;
    let mut fs = features.to_vec();
    fs.sort_unstable();
    fs.dedup();
    for f in fs {
        let mut values: Vec<u32> = rows.iter().map(|&r| table.value(r as usize, f)).collect();
        values.sort_unstable();
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (f64::from(pair[0]) + f64::from(pair[1])) / 2.0;
            let left = hist(&|r| f64::from(table.value(r, f)) <= threshold);
            let right: Vec<u64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
            let (nl, nr) = (left.iter().sum::<u64>(), right.iter().sum::<u64>());
            let num = sq(&left) * nr as u128 + sq(&right) * nl as u128;
            let den = nl as u128 * nr as u128;
            let better = match &best {
                None => num * total as u128 > sq(&parent) * den,
                Some((bn, bd, _)) => num * bd > bn * den,
            };
            if better {
                let w = total as f64;
                let decrease = gini(&parent).unwrap()
                    - (nl as f64 / w) * gini(&left).unwrap()
                    - (nr as f64 / w) * gini(&right).unwrap();
                best = Some((
                    num,
                    den,
                    SplitOracle {
                        feature: f,
                        threshold,
                        left: nl,
                        right: nr,
                        decrease,
                    },
                ));
            }
        }
    }
    best.map(|(_, _, s)| s)
}

pub fn split_suite(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = stream(seed, &[4]);
    for case in 0..instances {
        let m = rng.gen_range(2..=12);
        let p = rng.gen_range(1..=3);
        let classes = rng.gen_range(1..=4);
        // Wide value ranges push the scan onto its sort-based path.
        let vmax = if case % 3 == 0 {
            200
        } else {
            rng.gen_range(1..=5)
        };
        let rows_data: Vec<Vec<u32>> = (0..m)
            .map(|_| (0..p).map(|_| rng.gen_range(0..=vmax)).collect())
            .collect();
        let targets: Vec<u32> = (0..m).map(|_| rng.gen_range(0..classes)).collect();
        let table =
            DenseTable::new(rows_data.clone(), targets.clone()).map_err(|e| e.to_string())?;
        let rows: Vec<u32> = (0..m as u32).filter(|_| rng.gen_bool(0.85)).collect();
        let weighted = case % 2 == 1;
        let weights: Vec<u32> = rows
            .iter()
            .map(|_| if weighted { rng.gen_range(1..=3) } else { 1 })
            .collect();
        let features: Vec<usize> = (0..p).filter(|_| rng.gen_bool(0.8)).collect();
        let got = best_split(&table, &rows, weighted.then_some(&weights[..]), &features);
        let want = exhaustive_split(&table, &rows, &weights, &features);
        let ctx = || {
            format!("case {case}: rows {rows:?} weights {weights:?} features {features:?} data {rows_data:?} y {targets:?}")
        };
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                if g.rule.feature != w.feature
                    || g.rule.threshold != w.threshold
                    || (g.left_weight, g.right_weight) != (w.left, w.right)
                    || (g.gini_decrease - w.decrease).abs() > 1e-12
                {
                    return Err(format!(
                        "{}: split f{} <= {} ({}/{}, {}) vs oracle f{} <= {} ({}/{}, {})",
                        ctx(),
                        g.rule.feature,
                        g.rule.threshold,
                        g.left_weight,
                        g.right_weight,
                        g.gini_decrease,
                        w.feature,
                        w.threshold,
                        w.left,
                        w.right,
                        w.decrease
                    ));
                }
            }
            (g, w) => {
                return Err(format!(
                    "{}: split {:?} vs oracle {:?}",
                    ctx(),
                    g.map(|s| s.rule),
                    w.map(|s| s.feature)
                ));
            }
        }
    }
    Ok(instances)
}
