//! Min/max priority structures over per-thread loads.

use std::cmp::Ordering;

/// Binary heap of thread ids with position tracking, so a thread's load can
/// change in place. Ties are broken towards the lower thread id.
#[derive(Clone, Debug)]
struct IndexedHeap {
    order: Ordering,
    heap: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexedHeap {
    fn new(loads: &[u64], order: Ordering) -> Self {
        let n = loads.len();
        let mut h = Self {
            order,
            heap: (0..n).collect(),
            pos: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i, loads);
        }
        h
    }

    /// True when thread `a` belongs above thread `b`.
    fn above(&self, a: usize, b: usize, loads: &[u64]) -> bool {
        match loads[a].cmp(&loads[b]) {
            Ordering::Equal => a < b,
            o => o == self.order,
        }
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i]] = i;
        self.pos[self.heap[j]] = j;
    }

    fn sift_up(&mut self, mut i: usize, loads: &[u64]) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.above(self.heap[i], self.heap[parent], loads) {
                break;
            }
            self.swap(i, parent);
            i = parent;
        }
    }

    fn sift_down(&mut self, mut i: usize, loads: &[u64]) {
        let n = self.heap.len();
        loop {
            let mut best = i;
            for child in [2 * i + 1, 2 * i + 2] {
                if child < n && self.above(self.heap[child], self.heap[best], loads) {
                    best = child;
                }
            }
            if best == i {
                break;
            }
            self.swap(i, best);
            i = best;
        }
    }

    fn fix(&mut self, thread: usize, loads: &[u64]) {
        let i = self.pos[thread];
        self.sift_up(i, loads);
        self.sift_down(self.pos[thread], loads);
    }

    fn top(&self) -> usize {
        self.heap[0]
    }
}

/// Tracks the most and least loaded threads while loads are being updated.
#[derive(Clone, Debug)]
pub struct LoadIndex {
    loads: Vec<u64>,
    max_heap: IndexedHeap,
    min_heap: IndexedHeap,
}

impl LoadIndex {
    /// # Panics
    /// Panics if `loads` is empty.
    pub fn new(loads: Vec<u64>) -> Self {
        assert!(!loads.is_empty(), "load index needs at least one thread");
        let max_heap = IndexedHeap::new(&loads, Ordering::Greater);
        let min_heap = IndexedHeap::new(&loads, Ordering::Less);
        Self {
            loads,
            max_heap,
            min_heap,
        }
    }

    /// Most loaded thread (lowest id on ties).
    pub fn max(&self) -> usize {
        self.max_heap.top()
    }

    /// Least loaded thread (lowest id on ties).
    pub fn min(&self) -> usize {
        self.min_heap.top()
    }

    pub fn load(&self, thread: usize) -> u64 {
        self.loads[thread]
    }

    pub fn loads(&self) -> &[u64] {
        &self.loads
    }

    pub fn set(&mut self, thread: usize, load: u64) {
        self.loads[thread] = load;
        self.max_heap.fix(thread, &self.loads);
        self.min_heap.fix(thread, &self.loads);
    }

    pub fn into_loads(self) -> Vec<u64> {
        self.loads
    }
}
