//! Dense square bit matrices packed into 64-bit words, one row per word run.
//!
//! All graph-side state (adjacency, reachability closure, action mask) is kept
//! in this representation so that the per-edge closure update reduces to a
//! handful of word-parallel ORs.

/// Square 0/1 matrix with rows packed into `u64` words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    n: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(n: usize) -> Self {
        let words_per_row = n.div_ceil(64);
        BitMatrix {
            n,
            words_per_row,
            words: vec![0; n * words_per_row],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds from a predicate over (row, col).
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.n && col < self.n);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.n && col < self.n);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        if value {
            *w |= 1u64 << (col % 64);
        } else {
            *w &= !(1u64 << (col % 64));
        }
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.words[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    /// `rows[dst] |= src`, where `src` is a previously snapshotted row.
    #[inline]
    pub fn or_row_from(&mut self, dst: usize, src: &[u64]) {
        let start = dst * self.words_per_row;
        for (w, s) in self.words[start..start + self.words_per_row]
            .iter_mut()
            .zip(src)
        {
            *w |= s;
        }
    }

    /// Elementwise OR of two matrices of equal size.
    pub fn or(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (w, o) in out.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
        out
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn row_count_ones(&self, row: usize) -> usize {
        self.row_words(row)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn is_all_ones(&self) -> bool {
        self.count_ones() == self.n * self.n
    }

    /// Ones of a row as column indices, ascending.
    pub fn iter_row(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        let base = row * self.words_per_row;
        (0..self.words_per_row).flat_map(move |wi| {
            let mut w = self.words[base + wi];
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    /// All set positions as (row, col) pairs in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |r| self.iter_row(r).map(move |c| (r, c)))
    }

    /// Zero positions of a row as column indices below `n`.
    pub fn iter_row_zeros(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n;
        let base = row * self.words_per_row;
        (0..self.words_per_row).flat_map(move |wi| {
            let valid = if (wi + 1) * 64 <= n {
                u64::MAX
            } else {
                (1u64 << (n - wi * 64)) - 1
            };
            let mut w = !self.words[base + wi] & valid;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    pub fn transpose(&self) -> BitMatrix {
        BitMatrix::from_fn(self.n, |r, c| self.get(c, r))
    }

    /// Boolean matrix product: `out[r][c] = OR_m self[r][m] & other[m][c]`.
    pub fn bool_mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BitMatrix::zeros(self.n);
        for r in 0..self.n {
            let cols: Vec<usize> = self.iter_row(r).collect();
            for m in cols {
                let src: Vec<u64> = other.row_words(m).to_vec();
                out.or_row_from(r, &src);
            }
        }
        out
    }

    /// Raw words, used as a hash key for visited-state maps.
    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitMatrix({}x{})", self.n, self.n)?;
        for r in 0..self.n {
            for c in 0..self.n {
                write!(f, "{}", if self.get(r, c) { '1' } else { '0' })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_roundtrip_across_word_boundary() {
        let mut m = BitMatrix::zeros(70);
        m.set(3, 63, true);
        m.set(3, 64, true);
        m.set(69, 69, true);
        assert!(m.get(3, 63));
        assert!(m.get(3, 64));
        assert!(!m.get(3, 65));
        assert!(m.get(69, 69));
        m.set(3, 64, false);
        assert!(!m.get(3, 64));
        assert_eq!(m.count_ones(), 2);
    }

    #[test]
    fn identity_has_diagonal_only() {
        let m = BitMatrix::identity(5);
        assert_eq!(m.count_ones(), 5);
        for i in 0..5 {
            assert!(m.get(i, i));
        }
    }

    #[test]
    fn iter_row_zeros_respects_dimension() {
        let m = BitMatrix::identity(3);
        let zeros: Vec<usize> = m.iter_row_zeros(0).collect();
        assert_eq!(zeros, vec![1, 2]);
        let m = BitMatrix::identity(65);
        assert_eq!(m.iter_row_zeros(64).count(), 64);
    }

    #[test]
    fn bool_mul_matches_naive() {
        let a = BitMatrix::from_fn(6, |r, c| (r * 7 + c * 3) % 5 == 0);
        let b = BitMatrix::from_fn(6, |r, c| (r + 2 * c) % 4 == 1);
        let p = a.bool_mul(&b);
        for r in 0..6 {
            for c in 0..6 {
                let expect = (0..6).any(|m| a.get(r, m) && b.get(m, c));
                assert_eq!(p.get(r, c), expect, "({r},{c})");
            }
        }
    }

    #[test]
    fn transpose_involution() {
        let a = BitMatrix::from_fn(9, |r, c| (r * 13 + c) % 3 == 0);
        assert_eq!(a.transpose().transpose(), a);
    }
}
