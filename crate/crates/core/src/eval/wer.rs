use crate::grid::{TokenId, Vocabulary, EMP, NULL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn add(&mut self, o: &EditCounts) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
        self.reference_len += o.reference_len;
    }

    /// Errors over reference length. An empty reference counts as length 1
    /// so spurious output is still penalized.
    pub fn rate(&self) -> f64 {
        if self.reference_len == 0 {
            if self.insertions > 0 {
                log::debug!("empty reference with {} insertions", self.insertions);
            }
            return self.insertions as f64;
        }
        self.errors() as f64 / self.reference_len as f64
    }
}

/// Minimal edit alignment (Levenshtein), with substitutions preferred over
/// insertion+deletion pairs on ties.
pub fn edit_counts<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    // cell: (cost, subs, dels, ins)
    let mut prev: Vec<(usize, usize, usize, usize)> = (0..=m).map(|j| (j, 0, 0, j)).collect();
    let mut cur = vec![(0, 0, 0, 0); m + 1];
    for i in 1..=n {
        cur[0] = (i, 0, i, 0);
        for j in 1..=m {
            let same = reference[i - 1] == hyp[j - 1];
            let d = prev[j - 1];
            let diag = (d.0 + usize::from(!same), d.1 + usize::from(!same), d.2, d.3);
            let up = prev[j];
            let del = (up.0 + 1, up.1, up.2 + 1, up.3);
            let left = cur[j - 1];
            let ins = (left.0 + 1, left.1, left.2, left.3 + 1);
            cur[j] = [diag, del, ins].into_iter().min_by_key(|c| c.0).unwrap();
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (_, s, d, i) = prev[m];
    EditCounts { substitutions: s, deletions: d, insertions: i, reference_len: n }
}

pub fn wer<T: PartialEq>(reference: &[T], hyp: &[T]) -> f64 {
    edit_counts(reference, hyp).rate()
}

/// Words of a decoded transcript stream: fillers dropped, pieces joined.
pub fn transcript_words(vocab: &Vocabulary, stream: &[TokenId]) -> Vec<String> {
    let kept: Vec<TokenId> = stream.iter().copied().filter(|&t| t != EMP && t != NULL).collect();
    vocab.collapse_words(&kept)
}

/// Edit rate over word pieces rather than words.
pub fn token_error_rate(reference: &[TokenId], hyp: &[TokenId]) -> f64 {
    wer(reference, hyp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(r: &[u8], h: &[u8]) -> usize {
        // plain recursion over the three edit moves
        if r.is_empty() {
            return h.len();
        }
        if h.is_empty() {
            return r.len();
        }
        let sub = brute(&r[1..], &h[1..]) + usize::from(r[0] != h[0]);
        sub.min(brute(&r[1..], h) + 1).min(brute(r, &h[1..]) + 1)
    }

    #[test]
    fn examples() {
        assert_eq!(wer(&["a", "b", "c"], &["a", "b", "c"]), 0.0);
        assert!((wer(&["a", "b", "c"], &["a", "x", "c"]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wer(&["a", "b", "c", "d"], &[] as &[&str]), 1.0);
        assert_eq!(wer(&[] as &[&str], &[] as &[&str]), 0.0);
        assert_eq!(wer(&[] as &[&str], &["a", "b"]), 2.0);
    }

    #[test]
    fn matches_recursion_on_short_sequences() {
        let all: Vec<Vec<u8>> = (0..=4usize)
            .flat_map(|len| {
                (0..3usize.pow(len as u32)).map(move |mut k| {
                    (0..len)
                        .map(|_| {
                            let d = (k % 3) as u8;
                            k /= 3;
                            d
                        })
                        .collect()
                })
            })
            .collect();
        for r in &all {
            for h in &all {
                let c = edit_counts(r, h);
                assert_eq!(c.errors(), brute(r, h), "{r:?} vs {h:?}");
                assert_eq!(c.reference_len - c.deletions + c.insertions, h.len());
            }
        }
    }

    #[test]
    fn transcript_collapses_pieces() {
        let lx = crate::corpus::Lexicon::default();
        let v = lx.vocab();
        let ids = [EMP, v.id("sun").unwrap(), EMP, v.id("##day").unwrap(), v.id("red").unwrap(), EMP];
        assert_eq!(transcript_words(v, &ids), vec!["sunday".to_string(), "red".to_string()]);
    }
}
