//! Fixed-capacity ring of frames.
//!
//! Pushing past capacity overwrites the oldest slot; the logical
//! oldest-to-newest order is recovered from the head index, so shifting
//! every cached activation by one step costs a single index update.

use crate::conv::Sequence;

#[derive(Debug, Clone)]
pub struct RingBuffer {
    context: usize,
    capacity: usize,
    fill: usize,
    // slot that the next push writes to
    head: usize,
    storage: Vec<f64>,
}

impl RingBuffer {
    pub fn new(capacity: usize, context: usize) -> Self {
        assert!(capacity >= 1, "ring capacity must be at least 1");
        RingBuffer {
            context,
            capacity,
            fill: 0,
            head: 0,
            storage: vec![0.0; capacity * context],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn is_full(&self) -> bool {
        self.fill == self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.fill == 0
    }

    /// Copy a frame into the next slot, evicting the oldest when full.
    pub fn push(&mut self, frame: &[f64]) {
        self.next_slot().copy_from_slice(frame);
        self.commit();
    }

    /// Mutable view of the slot the next push will occupy. Call
    /// [`commit`](Self::commit) after writing to make it visible.
    pub fn next_slot(&mut self) -> &mut [f64] {
        let c = self.context;
        &mut self.storage[self.head * c..(self.head + 1) * c]
    }

    pub fn commit(&mut self) {
        self.head += 1;
        if self.head == self.capacity {
            self.head = 0;
        }
        if self.fill < self.capacity {
            self.fill += 1;
        }
    }

    /// Frame at logical index `k`, where 0 is the oldest retained frame.
    #[inline]
    pub fn get(&self, k: usize) -> &[f64] {
        debug_assert!(k < self.fill);
        // oldest slot is head when full, 0 otherwise
        let start = if self.fill == self.capacity { self.head } else { 0 };
        let mut slot = start + k;
        if slot >= self.capacity {
            slot -= self.capacity;
        }
        let c = self.context;
        &self.storage[slot * c..(slot + 1) * c]
    }

    pub fn newest(&self) -> Option<&[f64]> {
        (self.fill > 0).then(|| self.get(self.fill - 1))
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.fill).map(move |k| self.get(k))
    }

    pub fn clear(&mut self) {
        self.fill = 0;
        self.head = 0;
    }

    pub fn to_sequence(&self) -> Sequence {
        let mut data = Vec::with_capacity(self.fill * self.context);
        for f in self.iter() {
            data.extend_from_slice(f);
        }
        Sequence::from_flat(self.context, data).expect("ring context is positive")
    }
}
