//! Comparison encoders and string measures: k-mer count profiles,
//! Levenshtein distance and Jaro-Winkler similarity. All operate on token
//! ids, so multi-character categories compare as single symbols.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::counts::{run_length, CountMatrix};
use crate::dataset::SequenceDataset;
use crate::error::{Error, Result};

/// Winkler prefix scale.
pub const WINKLER_SCALE: f64 = 0.1;
/// Longest common prefix credited by the Winkler boost.
pub const WINKLER_MAX_PREFIX: usize = 4;

/// k-mer count profiles of a corpus.
#[derive(Debug, Clone)]
pub struct KmerProfiles {
    pub k: usize,
    /// Column keys in lexicographic order of token ids.
    pub keys: Vec<Vec<u32>>,
    pub counts: CountMatrix,
}

/// Count every length-`k` substring of every sequence. Columns are the union
/// of observed k-mers sorted lexicographically; rows follow the corpus.
pub fn kmer_profiles(ds: &SequenceDataset, k: usize) -> Result<KmerProfiles> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if let Some(short) = ds.sequences().iter().find(|s| s.len() < k) {
        return Err(Error::InvalidParameter(format!(
            "sequence `{}` (length {}) is shorter than k = {k}",
            short.id,
            short.len()
        )));
    }
    let keys: BTreeSet<&[u32]> = ds
        .sequences()
        .iter()
        .flat_map(|s| s.tokens.windows(k))
        .collect();
    let column: HashMap<&[u32], u32> = keys
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, i as u32))
        .collect();
    let rows: Vec<Vec<(u32, u32)>> = ds
        .sequences()
        .par_iter()
        .map(|s| run_length(s.tokens.windows(k).map(|w| column[w]).collect()))
        .collect();
    let mut counts = CountMatrix::new(keys.len());
    for row in rows {
        counts.push_row(row);
    }
    Ok(KmerProfiles {
        k,
        keys: keys.into_iter().map(<[u32]>::to_vec).collect(),
        counts,
    })
}

/// Unit-cost edit distance (insert, delete, substitute).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.len() < b.len() {
        return levenshtein(b, a);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Jaro similarity in `[0, 1]`.
pub fn jaro<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut b_used = vec![false; b.len()];
    let mut a_matched = Vec::with_capacity(a.len());
    for (i, x) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_used[j] && b[j] == *x {
                b_used[j] = true;
                a_matched.push(x);
                break;
            }
        }
    }
    let m = a_matched.len();
    if m == 0 {
        return 0.0;
    }
    let b_matched = b.iter().zip(&b_used).filter(|(_, &u)| u).map(|(y, _)| y);
    let half_transpositions = a_matched
        .iter()
        .zip(b_matched)
        .filter(|(x, y)| **x != *y)
        .count();
    let t = half_transpositions as f64 / 2.0;
    let m = m as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler similarity: Jaro plus a boost for a shared prefix of up to
/// four tokens.
pub fn jaro_winkler<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let sim = jaro(a, b);
    let prefix = a
        .iter()
        .zip(b)
        .take(WINKLER_MAX_PREFIX)
        .take_while(|(x, y)| x == y)
        .count();
    sim + prefix as f64 * WINKLER_SCALE * (1.0 - sim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_sequences, InputFormat};

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn kmer_counts() {
        let ds = load_sequences("abcab\n".as_bytes(), InputFormat::Lines, false).unwrap();
        let p = kmer_profiles(&ds, 2).unwrap();
        // a=0, b=1, c=2 -> ab, bc, ca in lexicographic id order
        assert_eq!(p.keys, vec![vec![0, 1], vec![1, 2], vec![2, 0]]);
        assert_eq!(p.counts.dense_row(0), vec![2, 1, 1]);
    }

    #[test]
    fn kmer_unigram_histograms() {
        let ds = load_sequences("aab\nbbbc\n".as_bytes(), InputFormat::Lines, false).unwrap();
        let p = kmer_profiles(&ds, 1).unwrap();
        assert_eq!(p.counts.dense_row(0), vec![2, 1, 0]);
        assert_eq!(p.counts.dense_row(1), vec![0, 3, 1]);
        for i in 0..2 {
            assert_eq!(p.counts.row_sum(i), ds.sequences()[i].len() as u64);
        }
    }

    #[test]
    fn kmer_whole_sequence_is_one_hot() {
        let ds = load_sequences("abc\ncab\n".as_bytes(), InputFormat::Lines, false).unwrap();
        let p = kmer_profiles(&ds, 3).unwrap();
        assert_eq!(p.counts.dense_row(0), vec![1, 0]);
        assert_eq!(p.counts.dense_row(1), vec![0, 1]);
        assert!(kmer_profiles(&ds, 4).is_err());
        assert!(kmer_profiles(&ds, 0).is_err());
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein(&chars(""), &chars("abc")), 3);
        assert_eq!(levenshtein(&chars("abc"), &chars("abc")), 0);
        assert_eq!(levenshtein(&chars("kitten"), &chars("sitting")), 3);
        assert_eq!(levenshtein(&chars("sitting"), &chars("kitten")), 3);
    }

    #[test]
    fn jaro_winkler_examples() {
        assert_eq!(jaro_winkler(&chars("abc"), &chars("abc")), 1.0);
        assert_eq!(jaro_winkler(&chars("abc"), &chars("xyz")), 0.0);
        let (a, b) = (chars("MARTHA"), chars("MARHTA"));
        // m = 6, t = 1, prefix 3
        let j = (1.0 + 1.0 + 5.0 / 6.0) / 3.0;
        assert!((jaro(&a, &b) - j).abs() < 1e-12);
        assert!((jaro_winkler(&a, &b) - (j + 0.3 * (1.0 - j))).abs() < 1e-12);
        assert!((jaro(&a, &b) - 0.944_444).abs() < 1e-6);
        assert!((jaro_winkler(&a, &b) - 0.961_111).abs() < 1e-6);
    }

    #[test]
    fn jaro_edge_cases() {
        assert_eq!(jaro::<char>(&[], &[]), 1.0);
        assert_eq!(jaro(&chars("a"), &chars("")), 0.0);
        assert_eq!(jaro(&chars("a"), &chars("a")), 1.0);
        // DIXON / DICKSONX, a common reference pair
        let j = jaro(&chars("DIXON"), &chars("DICKSONX"));
        assert!((j - 0.766_667).abs() < 1e-6);
        assert!((jaro_winkler(&chars("DIXON"), &chars("DICKSONX")) - 0.813_333).abs() < 1e-6);
    }
}
