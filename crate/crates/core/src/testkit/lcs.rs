/// Length of the longest common subsequence by enumerating every subsequence
/// of `a` (2^|a| of them) and testing each against `b` greedily.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 20, "exhaustive enumeration is exponential");
    let mut best = 0;
    for mask in 0u32..(1u32 << a.len()) {
        let len = mask.count_ones() as usize;
        if len <= best {
            continue;
        }
        let sub: Vec<&T> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        let mut pos = 0;
        for x in b {
            if pos < sub.len() && *sub[pos] == *x {
                pos += 1;
            }
        }
        if pos == sub.len() {
            best = len;
        }
    }
    best
}

/// All sequences of length `len` over `alphabet` symbols `0..alphabet`.
pub fn all_sequences(alphabet: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..alphabet).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
    }
    out
}

/// Every sequence of length `0..=max_len` over `0..alphabet`, each with the
/// set of its distinct subsequences as a bitset. Sequences are indexed
/// longest first, so the lowest set bit of an intersection is a longest
/// common subsequence.
pub struct SubsequenceTable {
    pub sequences: Vec<Vec<usize>>,
    words: usize,
    sets: Vec<u64>,
}

impl SubsequenceTable {
    pub fn new(alphabet: usize, max_len: usize) -> Self {
        assert!(max_len <= 12);
        let sequences: Vec<Vec<usize>> = (0..=max_len).rev().flat_map(|l| all_sequences(alphabet, l)).collect();
        let index: std::collections::HashMap<&[usize], usize> =
            sequences.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
        let words = sequences.len().div_ceil(64);
        let mut sets = vec![0u64; words * sequences.len()];
        for (i, s) in sequences.iter().enumerate() {
            let row = &mut sets[i * words..(i + 1) * words];
            for mask in 0u32..(1u32 << s.len()) {
                let sub: Vec<usize> = (0..s.len()).filter(|k| mask >> k & 1 == 1).map(|k| s[k]).collect();
                let j = index[sub.as_slice()];
                row[j / 64] |= 1 << (j % 64);
            }
        }
        SubsequenceTable { sequences, words, sets }
    }

    /// LCS length of sequences `i` and `j` (table indices).
    pub fn lcs(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.sets[i * self.words..][..self.words], &self.sets[j * self.words..][..self.words]);
        for (w, (x, y)) in a.iter().zip(b).enumerate() {
            let both = x & y;
            if both != 0 {
                return self.sequences[w * 64 + both.trailing_zeros() as usize].len();
            }
        }
        unreachable!("the empty sequence is common to all")
    }
}
