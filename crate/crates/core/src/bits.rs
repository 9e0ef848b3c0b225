/// Fixed-length bit vector packed into 64-bit words.
///
/// Bits past `len` in the last word are always zero, so word-wise popcounts
/// never see stray ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Returns `(both set, set only in self, set only in other)`.
    #[inline]
    pub(crate) fn match_counts(&self, other: &BitVector) -> (u32, u32, u32) {
        debug_assert_eq!(self.len, other.len);
        let mut m11 = 0;
        let mut m10 = 0;
        let mut m01 = 0;
        for (a, b) in self.words.iter().zip(&other.words) {
            m11 += (a & b).count_ones();
            m10 += (a & !b).count_ones();
            m01 += (!a & b).count_ones();
        }
        (m11, m10, m01)
    }

    /// Keeps only the bits at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> BitVector {
        let mut out = BitVector::zeros(indices.len());
        for (dst, &src) in indices.iter().enumerate() {
            if self.get(src) {
                out.set(dst, true);
            }
        }
        out
    }
}

impl FromIterator<bool> for BitVector {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let bits: Vec<bool> = iter.into_iter().collect();
        Self::from_bools(&bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_across_word_boundary() {
        let mut a = BitVector::zeros(130);
        let mut b = BitVector::zeros(130);
        for i in [0, 63, 64, 129] {
            a.set(i, true);
        }
        for i in [63, 100, 129] {
            b.set(i, true);
        }
        assert_eq!(a.match_counts(&b), (2, 2, 1));
        assert_eq!(a.count_ones(), 4);
        a.set(0, false);
        assert!(!a.get(0));
        assert_eq!(a.select(&[129, 63, 1]), BitVector::from_bools(&[true, true, false]));
    }
}
