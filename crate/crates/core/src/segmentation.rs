//! Sliding-window segmentation of a corpus into an autoregressive table.
//!
//! Every length-`n+1` window of every sequence becomes one row: the first
//! `n` tokens are features, the last is the next-token target. Rows are
//! ordered by sequence, then by offset. An optional position column holds
//! the 1-based window offset and is exposed to the trees as one more feature.
//!
//! The table is stored as a view over the concatenated corpus: a row is the
//! offset of its first token, so memory stays `O(total tokens)` instead of
//! `O(rows * n)`.

use std::io::Write;
use std::ops::Range;

use crate::dataset::{Alphabet, SequenceDataset};
use crate::error::{Error, Result};
use crate::forest::FeatureTable;

#[derive(Debug, Clone)]
pub struct SegmentedMatrix {
    window: usize,
    tokens: Vec<u32>,
    row_start: Vec<usize>,
    seq_index: Vec<u32>,
    positions: Option<Vec<u32>>,
    seq_ids: Vec<String>,
    seq_rows: Vec<usize>,
    n_classes: usize,
}

fn check_window(ds: &SequenceDataset, n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::ZeroWindow);
    }
    let short: Vec<String> = ds
        .sequences()
        .iter()
        .filter(|s| s.len() <= n)
        .map(|s| s.id.clone())
        .collect();
    if short.is_empty() {
        Ok(())
    } else {
        Err(Error::WindowTooLarge { n, ids: short })
    }
}

/// Number of rows `segment(ds, n, _)` produces: `sum(L_i - n)`.
pub fn window_count(ds: &SequenceDataset, n: usize) -> Result<usize> {
    check_window(ds, n)?;
    Ok(ds.sequences().iter().map(|s| s.len() - n).sum())
}

/// Build the segmented matrix with window size `n`.
pub fn segment(ds: &SequenceDataset, n: usize, include_position: bool) -> Result<SegmentedMatrix> {
    let rows = window_count(ds, n)?;
    let total_tokens: usize = ds.sequences().iter().map(|s| s.len()).sum();

    let mut tokens = Vec::with_capacity(total_tokens);
    let mut row_start = Vec::with_capacity(rows);
    let mut seq_index = Vec::with_capacity(rows);
    let mut positions = include_position.then(|| Vec::with_capacity(rows));
    let mut seq_rows = Vec::with_capacity(ds.len() + 1);
    seq_rows.push(0);

    for (i, seq) in ds.sequences().iter().enumerate() {
        let base = tokens.len();
        tokens.extend_from_slice(&seq.tokens);
        for j in 0..seq.len() - n {
            row_start.push(base + j);
            seq_index.push(i as u32);
            if let Some(p) = positions.as_mut() {
                p.push(j as u32 + 1);
            }
        }
        seq_rows.push(row_start.len());
    }

    Ok(SegmentedMatrix {
        window: n,
        tokens,
        row_start,
        seq_index,
        positions,
        seq_ids: ds.ids(),
        seq_rows,
        n_classes: ds.alphabet().len(),
    })
}

impl SegmentedMatrix {
    /// Window size `n`.
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn has_position(&self) -> bool {
        self.positions.is_some()
    }

    pub fn n_sequences(&self) -> usize {
        self.seq_ids.len()
    }

    pub fn sequence_ids(&self) -> &[String] {
        &self.seq_ids
    }

    /// Rows contributed by sequence `i`.
    pub fn rows_of(&self, i: usize) -> Range<usize> {
        self.seq_rows[i]..self.seq_rows[i + 1]
    }

    /// Source sequence index of `row`.
    pub fn seq_index(&self, row: usize) -> usize {
        self.seq_index[row] as usize
    }

    /// 1-based window offset of `row`, when the position column is enabled.
    pub fn position(&self, row: usize) -> Option<u32> {
        self.positions.as_ref().map(|p| p[row])
    }

    /// The `n` feature tokens of `row`.
    pub fn window_tokens(&self, row: usize) -> &[u32] {
        let s = self.row_start[row];
        &self.tokens[s..s + self.window]
    }

    /// Full feature vector of `row`, including the position when enabled.
    pub fn row_features(&self, row: usize) -> Vec<u32> {
        let mut v = self.window_tokens(row).to_vec();
        if let Some(p) = self.position(row) {
            v.push(p);
        }
        v
    }

    /// Iterator over feature column `f` in row order.
    pub fn column(&self, f: usize) -> impl Iterator<Item = u32> + '_ {
        (0..self.n_rows()).map(move |r| self.value(r, f))
    }

    /// Debug dump: header `f1..fn, y_target, seq_id[, position]`, tokens as
    /// symbols and sequence ids as strings.
    pub fn write_tsv<W: Write>(&self, alphabet: &Alphabet, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.window).map(|f| format!("f{f}")).collect();
        header.push("y_target".into());
        header.push("seq_id".into());
        if self.has_position() {
            header.push("position".into());
        }
        writeln!(out, "{}", header.join("\t"))?;
        for r in 0..self.n_rows() {
            let mut fields: Vec<&str> = self
                .window_tokens(r)
                .iter()
                .map(|&t| alphabet.symbol(t))
                .collect();
            fields.push(alphabet.symbol(self.target(r)));
            fields.push(&self.seq_ids[self.seq_index(r)]);
            let pos = self.position(r).map(|p| p.to_string());
            if let Some(p) = &pos {
                fields.push(p);
            }
            writeln!(out, "{}", fields.join("\t"))?;
        }
        Ok(())
    }
}

impl FeatureTable for SegmentedMatrix {
    fn n_rows(&self) -> usize {
        self.row_start.len()
    }

    fn n_features(&self) -> usize {
        self.window + usize::from(self.has_position())
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> u32 {
        if feature < self.window {
            self.tokens[self.row_start[row] + feature]
        } else {
            // only the position column lies past the window
            self.positions.as_ref().expect("feature index out of range")[row]
        }
    }

    #[inline]
    fn target(&self, row: usize) -> u32 {
        self.tokens[self.row_start[row] + self.window]
    }

    fn max_value(&self, feature: usize) -> u32 {
        if feature < self.window {
            self.n_classes.saturating_sub(1) as u32
        } else {
            self.positions
                .as_ref()
                .and_then(|p| p.iter().max().copied())
                .unwrap_or(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_sequences, InputFormat};

    fn lines(s: &str) -> SequenceDataset {
        load_sequences(s.as_bytes(), InputFormat::Lines, false).unwrap()
    }

    fn render(sm: &SegmentedMatrix, ds: &SequenceDataset, row: usize) -> (String, String) {
        let a = ds.alphabet();
        let f: String = sm.window_tokens(row).iter().map(|&t| a.symbol(t)).collect();
        (f, a.symbol(sm.target(row)).to_owned())
    }

    #[test]
    fn single_sequence_windows() {
        let ds = lines("abcaaabcbaa");
        let sm = segment(&ds, 5, false).unwrap();
        assert_eq!(sm.n_rows(), 6);
        assert_eq!(render(&sm, &ds, 0), ("abcaa".into(), "a".into()));
        assert_eq!(render(&sm, &ds, 1), ("bcaaa".into(), "b".into()));
        assert_eq!(render(&sm, &ds, 5), ("abcba".into(), "a".into()));
        assert_eq!(sm.n_features(), 5);
    }

    #[test]
    fn position_column_is_one_based() {
        let ds = lines("abcaaabcbaa");
        let sm = segment(&ds, 5, true).unwrap();
        assert_eq!(sm.n_features(), 6);
        let pos: Vec<u32> = sm.column(5).collect();
        assert_eq!(pos, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(sm.row_features(2).len(), 6);
    }

    #[test]
    fn hundred_sequences_of_length_eleven() {
        let text: String = (0..100)
            .map(|i| {
                if i % 2 == 0 {
                    "abcaaabcbaa\n"
                } else {
                    "bbcacabcbab\n"
                }
            })
            .collect();
        let ds = lines(&text);
        assert_eq!(window_count(&ds, 5).unwrap(), 600);
        let sm = segment(&ds, 5, false).unwrap();
        assert_eq!(sm.n_rows(), 600);
        assert_eq!(sm.rows_of(99), 594..600);
    }

    #[test]
    fn minimal_window() {
        let ds = lines("ab");
        let sm = segment(&ds, 1, false).unwrap();
        assert_eq!(sm.n_rows(), 1);
        assert_eq!(render(&sm, &ds, 0), ("a".into(), "b".into()));
    }

    #[test]
    fn window_count_mixed_lengths() {
        let ds = lines("abcabc\nabcabca\n");
        assert_eq!(window_count(&ds, 5).unwrap(), 3);
        let ds = lines("abcab\nbcabc\ncabca\n");
        assert_eq!(window_count(&ds, 4).unwrap(), 3);
    }

    #[test]
    fn oversized_window_lists_offenders() {
        let ds = lines("abc\nabcdef\nab\n");
        match segment(&ds, 3, false).unwrap_err() {
            Error::WindowTooLarge { n: 3, ids } => assert_eq!(ids, ["seq1", "seq3"]),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(segment(&ds, 0, false), Err(Error::ZeroWindow)));
    }

    #[test]
    fn tsv_dump_header() {
        let ds = lines("abcab");
        let sm = segment(&ds, 2, true).unwrap();
        let mut out = Vec::new();
        sm.write_tsv(ds.alphabet(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut it = text.lines();
        assert_eq!(it.next().unwrap(), "f1\tf2\ty_target\tseq_id\tposition");
        assert_eq!(it.next().unwrap(), "a\tb\tc\tseq1\t1");
        assert_eq!(text.lines().count(), 4);
    }
}
