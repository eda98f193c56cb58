//! Binary-counter bookkeeping for the insertion wrapper: the growing
//! universe is partitioned among active instances whose sizes are the set
//! bits of `|U_t|`, ordered by arrival.

/// One instance slot. Inactive slots keep their members for row
/// bookkeeping but are never executed again.
#[derive(Debug, Clone)]
pub struct InstanceSlot {
    /// Power of two.
    pub size: usize,
    /// Global column indices, in arrival order.
    pub members: Vec<usize>,
    pub active: bool,
}

/// Indices into `instances` touched by one insertion.
#[derive(Debug, Clone, Default)]
pub struct LayoutDelta {
    pub deactivated: Vec<usize>,
    pub created: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct CounterLayout {
    /// Arrival order of all inserted columns.
    pub order: Vec<usize>,
    pub instances: Vec<InstanceSlot>,
}

impl CounterLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn universe_size(&self) -> usize {
        self.order.len()
    }

    /// Sizes of the active instances, ascending.
    pub fn active_sizes(&self) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.instances.iter().filter(|s| s.active).map(|s| s.size).collect();
        v.sort_unstable();
        v
    }

    /// Inserts new columns. The highest changed bit `k*` of `|U_t|`
    /// deactivates every smaller active instance, and fresh instances are
    /// created for every set bit `k ≤ k*`, partitioning the arrival order.
    pub fn insert(&mut self, new_cols: &[usize]) -> LayoutDelta {
        let mut delta = LayoutDelta::default();
        if new_cols.is_empty() {
            return delta;
        }
        let old = self.order.len();
        self.order.extend_from_slice(new_cols);
        let new = self.order.len();
        let k_star = highest_differing_bit(old, new);

        for (i, slot) in self.instances.iter_mut().enumerate() {
            if slot.active && slot.size < (1usize << k_star) {
                slot.active = false;
                delta.deactivated.push(i);
            }
        }
        for k in (0..=k_star).rev() {
            if new & (1 << k) != 0 {
                let base = (new >> (k + 1)) << (k + 1);
                let members = self.order[base..base + (1 << k)].to_vec();
                self.instances.push(InstanceSlot { size: 1 << k, members, active: true });
                delta.created.push(self.instances.len() - 1);
            }
        }
        delta
    }

    /// Exact structural checks: active sizes are the set bits of `|U_t|`,
    /// active universes partition the universe, and same-size instances
    /// are pairwise disjoint. Used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.order.len();
        let sizes = self.active_sizes();
        let mut want: Vec<usize> = (0..usize::BITS)
            .filter(|&k| n & (1usize << k) != 0)
            .map(|k| 1usize << k)
            .collect();
        want.sort_unstable();
        if sizes != want {
            return Err(format!("active sizes {sizes:?} != set bits {want:?} of {n}"));
        }
        let mut seen = std::collections::HashSet::new();
        for slot in self.instances.iter().filter(|s| s.active) {
            if slot.members.len() != slot.size {
                return Err("instance size mismatch".into());
            }
            for &c in &slot.members {
                if !seen.insert(c) {
                    return Err(format!("column {c} in two active instances"));
                }
            }
        }
        if seen.len() != n {
            return Err(format!("active union {} != universe {n}", seen.len()));
        }
        // Same-size disjointness over all instances, active or not.
        let mut by_size: std::collections::HashMap<usize, std::collections::HashSet<usize>> =
            std::collections::HashMap::new();
        for slot in &self.instances {
            let set = by_size.entry(slot.size).or_default();
            for &c in &slot.members {
                if !set.insert(c) {
                    return Err(format!("column {c} repeated at size {}", slot.size));
                }
            }
        }
        Ok(())
    }
}

fn highest_differing_bit(old: usize, new: usize) -> u32 {
    debug_assert!(new > old);
    usize::BITS - 1 - (old ^ new).leading_zeros()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn paper_example_ten_elements() {
        let mut layout = CounterLayout::new();
        layout.insert(&(0..9).collect::<Vec<_>>());
        layout.check_invariants().unwrap();
        // 9 = (1001)₂ → active sizes {8, 1}.
        assert_eq!(layout.active_sizes(), vec![1, 8]);
        layout.insert(&[9]);
        layout.check_invariants().unwrap();
        // 10 = (1010)₂ → sizes {8, 2}; the previous singleton joined the
        // new pair.
        assert_eq!(layout.active_sizes(), vec![2, 8]);
        let pair = layout.instances.iter().filter(|s| s.active).find(|s| s.size == 2).unwrap();
        assert_eq!(pair.members, vec![8, 9]);
        let eight = layout.instances.iter().filter(|s| s.active).find(|s| s.size == 8).unwrap();
        assert_eq!(eight.members, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn one_by_one_growth() {
        let mut layout = CounterLayout::new();
        let mut inactive_total = 0;
        let expected = [vec![1], vec![2], vec![1, 2], vec![4]];
        for t in 0..4 {
            let delta = layout.insert(&[t]);
            inactive_total += delta.deactivated.len();
            layout.check_invariants().unwrap();
            assert_eq!(layout.active_sizes(), expected[t]);
        }
        // Cumulative count after the transition to 4: the singleton from
        // step 1, then {2} and {1} at the 4 transition.
        assert_eq!(inactive_total, 3);
        assert_eq!(layout.instances.iter().filter(|s| !s.active).count(), 3);
    }

    #[test]
    fn no_insert_no_change() {
        let mut layout = CounterLayout::new();
        layout.insert(&[0, 1, 2]);
        let before = layout.instances.len();
        let delta = layout.insert(&[]);
        assert!(delta.created.is_empty() && delta.deactivated.is_empty());
        assert_eq!(layout.instances.len(), before);
    }

    #[test]
    fn randomized_schedules_hold_invariants() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let mut layout = CounterLayout::new();
            let mut next_col = 0usize;
            for _ in 0..rng.gen_range(1..40) {
                let batch = rng.gen_range(0..5);
                let cols: Vec<usize> = (0..batch).map(|_| {
                    next_col += 1;
                    next_col - 1
                }).collect();
                layout.insert(&cols);
                layout.check_invariants().unwrap();
            }
        }
    }
}
