//! Prioritized experience replay over post-decision-state transitions.
//!
//! A sum tree gives O(log D) proportional sampling; a parallel max tree
//! gives the current maximum leaf so that new experiences enter with it.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Floor added to |TD error| before exponentiation.
pub const PRIORITY_EPS: f64 = 1e-6;

/// One post-decision-state experience `<s, a, r, s~, s'>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<[f64]>,
    pub action: usize,
    pub r_known: f64,
    pub r_unknown: f64,
    pub pds_state: Arc<[f64]>,
    pub next_state: Arc<[f64]>,
    /// Known reward of every action at the next state (empty outside PDS mode).
    pub next_known: Arc<[f64]>,
}

impl Transition {
    pub fn reward(&self) -> f64 {
        self.r_known + self.r_unknown
    }
}

/// Binary sum tree over `capacity` leaves in heap layout.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "sum tree capacity must be positive");
        Self {
            capacity,
            sums: vec![0.0; 2 * capacity - 1],
            maxes: vec![0.0; 2 * capacity - 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.sums[0]
    }

    pub fn max_leaf(&self) -> f64 {
        self.maxes[0]
    }

    pub fn leaf(&self, i: usize) -> f64 {
        self.sums[i + self.capacity - 1]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut node = i + self.capacity - 1;
        self.sums[node] = value;
        self.maxes[node] = value;
        while node > 0 {
            node = (node - 1) / 2;
            let (l, r) = (2 * node + 1, 2 * node + 2);
            self.sums[node] = self.sums[l] + self.sums[r];
            self.maxes[node] = self.maxes[l].max(self.maxes[r]);
        }
    }

    /// Leaf whose cumulative interval contains `mass`. Intervals follow the
    /// heap's leaf order, which is a fixed rotation of slot order when the
    /// capacity is not a power of two; each leaf still owns exactly its value.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 0;
        while node < self.capacity - 1 {
            let (l, r) = (2 * node + 1, 2 * node + 2);
            if mass < self.sums[l] || self.sums[r] <= 0.0 {
                node = l;
            } else {
                mass -= self.sums[l];
                node = r;
            }
        }
        node + 1 - self.capacity
    }

    /// Checks every internal node against its children.
    pub fn is_consistent(&self) -> bool {
        (0..self.capacity - 1).all(|n| {
            let s = self.sums[2 * n + 1] + self.sums[2 * n + 2];
            (self.sums[n] - s).abs() <= 1e-9 * s.abs().max(1e-300)
        })
    }
}

#[derive(Debug)]
pub struct SampleResult<'a, T> {
    pub indices: Vec<usize>,
    pub transitions: Vec<&'a T>,
    pub probabilities: Vec<f64>,
    /// Importance-sampling weights divided by the batch maximum.
    pub is_weights: Vec<f64>,
}

/// Ring buffer with proportional prioritization; evicts oldest first.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay<T> {
    tree: SumTree,
    items: Vec<T>,
    cursor: usize,
    eta1: f64,
}

impl<T> PrioritizedReplay<T> {
    pub fn new(capacity: usize, eta1: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        if !(eta1 >= 0.0) || !eta1.is_finite() {
            return Err(Error::invalid(format!("priority exponent must be >= 0, got {eta1}")));
        }
        Ok(Self {
            tree: SumTree::new(capacity),
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
            eta1,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// Slot that the next push will write.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Stores `t` with leaf value `priority^eta1`, overwriting the oldest
    /// entry when full. Returns the slot used.
    pub fn push(&mut self, t: T, priority: f64) -> Result<usize> {
        if !(priority >= 0.0) || !priority.is_finite() {
            return Err(Error::invalid(format!("priority must be finite and >= 0, got {priority}")));
        }
        Ok(self.push_leaf(t, priority.powf(self.eta1)))
    }

    /// Stores `t` at the current maximum leaf value (1 when empty).
    pub fn push_max(&mut self, t: T) -> usize {
        let leaf = if self.is_empty() { 1.0 } else { self.tree.max_leaf() };
        self.push_leaf(t, leaf)
    }

    fn push_leaf(&mut self, t: T, leaf: f64) -> usize {
        let slot = self.cursor;
        if slot < self.items.len() {
            self.items[slot] = t;
        } else {
            self.items.push(t);
        }
        self.tree.set(slot, leaf);
        self.cursor = (self.cursor + 1) % self.capacity();
        slot
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.leaf(i) / self.tree.total()
    }

    /// Stratified proportional sampling of `h` entries.
    pub fn sample<R: Rng + ?Sized>(&self, h: usize, eta2: f64, rng: &mut R) -> Result<SampleResult<'_, T>> {
        if self.is_empty() {
            return Err(Error::Precondition("cannot sample from an empty replay buffer".into()));
        }
        if h == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::Precondition("replay buffer has zero total priority".into()));
        }
        let seg = total / h as f64;
        let d = self.len() as f64;
        let mut indices = Vec::with_capacity(h);
        let mut probabilities = Vec::with_capacity(h);
        let mut raw = Vec::with_capacity(h);
        for s in 0..h {
            let u: f64 = rng.random();
            let mass = ((s as f64 + u) * seg).min(total * (1.0 - 1e-12));
            let i = self.resolve(self.tree.find(mass));
            let p = self.probability(i);
            indices.push(i);
            probabilities.push(p);
            raw.push((d * p).powf(-eta2));
        }
        let wmax = raw.iter().cloned().fold(0.0, f64::max);
        let is_weights = raw.iter().map(|w| w / wmax).collect();
        let transitions = indices.iter().map(|&i| &self.items[i]).collect();
        Ok(SampleResult {
            indices,
            transitions,
            probabilities,
            is_weights,
        })
    }

    /// Guards against rounding landing on an empty or zero-mass leaf.
    fn resolve(&self, i: usize) -> usize {
        if i < self.len() && self.tree.leaf(i) > 0.0 {
            return i;
        }
        (0..self.len())
            .rev()
            .find(|&j| self.tree.leaf(j) > 0.0)
            .unwrap_or(0)
    }

    /// Sets leaf `i` to `(|delta_i| + eps)^eta1`.
    pub fn update_priorities(&mut self, indices: &[usize], abs_td_errors: &[f64]) -> Result<()> {
        if indices.len() != abs_td_errors.len() {
            return Err(Error::invalid("indices and TD errors differ in length"));
        }
        for (&i, &e) in indices.iter().zip(abs_td_errors) {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "replay index {i} beyond occupancy {}",
                    self.len()
                )));
            }
            if !e.is_finite() {
                return Err(Error::Divergence(format!("non-finite TD error at index {i}")));
            }
            self.tree.set(i, (e.abs() + PRIORITY_EPS).powf(self.eta1));
        }
        Ok(())
    }
}
