use serde::{Deserialize, Serialize};

/// Operation accounting in units of tensor-vector-vector multiplications.
///
/// A Gram matvec `⟨A,A⟩_{-k} u` touches every stored entry twice and is
/// charged as two tvv-equivalents. A single-mode contraction
/// `leftᵀ (A ×_k x) right` also touches each entry once and counts as one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub tvv: u64,
    pub gram_matvec: u64,
    pub inner: u64,
    pub contractions: u64,
}

impl OpCounter {
    pub fn tvv_equivalents(&self) -> u64 {
        self.tvv + 2 * self.gram_matvec + self.contractions
    }

    pub fn add(&mut self, other: &OpCounter) {
        self.tvv += other.tvv;
        self.gram_matvec += other.gram_matvec;
        self.inner += other.inner;
        self.contractions += other.contractions;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_matvec_counts_twice() {
        let c = OpCounter {
            tvv: 3,
            gram_matvec: 2,
            inner: 7,
            contractions: 1,
        };
        assert_eq!(c.tvv_equivalents(), 8);
        let mut d = OpCounter::default();
        d.add(&c);
        d.add(&c);
        assert_eq!(d.tvv, 6);
    }
}
