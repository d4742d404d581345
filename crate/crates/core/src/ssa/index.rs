//! Fenwick-tree propensity index.
//!
//! Leaf `i` holds the current rate of channel `i`; the binary-indexed tree
//! over the leaves gives O(log C) rate updates and O(log C) inverse-CDF
//! channel selection. The cached total accumulates rounding drift, so the
//! engine rebuilds the tree from the exact leaf values on a fixed event
//! cadence.

#[derive(Debug, Clone)]
pub struct PropensityIndex {
    rates: Vec<f64>,
    tree: Vec<f64>, // 1-based partial sums
    total: f64,
    mask: usize,
}

impl PropensityIndex {
    pub fn new(len: usize) -> Self {
        assert!(len > 0);
        Self {
            rates: vec![0.0; len],
            tree: vec![0.0; len + 1],
            total: 0.0,
            mask: len.next_power_of_two() >> usize::from(!len.is_power_of_two()),
        }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    #[inline]
    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Set channel `i` to `v ≥ 0`.
    #[inline(always)]
    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!(v >= 0.0, "negative rate {v} at channel {i}");
        let delta = v - self.rates[i];
        if delta == 0.0 {
            return;
        }
        self.rates[i] = v;
        self.total += delta;
        let n = self.rates.len();
        let mut idx = i + 1;
        while idx <= n {
            // idx ≤ n < tree.len(), so the unchecked access is in bounds.
            unsafe { *self.tree.get_unchecked_mut(idx) += delta };
            idx += idx & idx.wrapping_neg();
        }
    }

    /// Channel with `prefix(i) <= target < prefix(i+1)`; `target` must lie in
    /// `[0, total)`. Zero-rate channels are never returned.
    #[inline]
    pub fn select(&self, target: f64) -> usize {
        let n = self.rates.len();
        let mut pos = 0usize;
        let mut rem = target;
        let mut bit = self.mask;
        while bit > 0 {
            let next = pos + bit;
            if next <= n {
                // next ≤ n < tree.len().
                let node = unsafe { *self.tree.get_unchecked(next) };
                if node <= rem {
                    pos = next;
                    rem -= node;
                }
            }
            bit >>= 1;
        }
        // pos counts leaves whose cumulative rate lies at or below target.
        let mut i = pos.min(n - 1);
        while i > 0 && self.rates[i] == 0.0 {
            i -= 1;
        }
        while self.rates[i] == 0.0 && i + 1 < n {
            i += 1;
        }
        i
    }

    /// Recompute the tree and the total exactly from the leaf rates.
    pub fn rebuild(&mut self) {
        let n = self.rates.len();
        self.tree[0] = 0.0;
        self.tree[1..=n].copy_from_slice(&self.rates);
        for i in 1..=n {
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                self.tree[j] += self.tree[i];
            }
        }
        self.total = self.rates.iter().sum();
    }
}
