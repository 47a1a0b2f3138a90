//! Minimal growable bitset keyed by event index.

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn with_capacity(bits: usize) -> BitSet {
        BitSet {
            words: Vec::with_capacity(bits / 64 + 1),
        }
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words
            .get(bit / 64)
            .is_some_and(|w| w & (1 << (bit % 64)) != 0)
    }

    pub fn set(&mut self, bit: usize) {
        let word = bit / 64;
        if word >= self.words.len() {
            self.words.resize(word + 1, 0);
        }
        self.words[word] |= 1 << (bit % 64);
    }

    /// OR another set into this one.
    pub fn union_with(&mut self, other: &BitSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (dst, src) in self.words.iter_mut().zip(&other.words) {
            *dst |= src;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_union() {
        let mut a = BitSet::with_capacity(8);
        a.set(3);
        a.set(200);
        assert!(a.get(3) && a.get(200));
        assert!(!a.get(4) && !a.get(9999));
        let mut b = BitSet::default();
        b.set(64);
        b.union_with(&a);
        assert!(b.get(3) && b.get(64) && b.get(200));
    }
}
