use rand::Rng;

use crate::gridworld::ActionMask;

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// Actions legal in `next_state`, used to mask the bootstrap maximum.
    pub next_legal: ActionMask,
}

/// A sampled batch laid out as row-major matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Minibatch {
    pub dim: usize,
    pub states: Vec<f64>,
    pub next_states: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
    pub next_legal: Vec<ActionMask>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn clear(&mut self, dim: usize) {
        self.dim = dim;
        self.states.clear();
        self.next_states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.terminals.clear();
        self.next_legal.clear();
    }

    pub fn push(&mut self, exp: &Experience) {
        self.states.extend_from_slice(&exp.state);
        self.next_states.extend_from_slice(&exp.next_state);
        self.actions.push(exp.action);
        self.rewards.push(exp.reward);
        self.terminals.push(exp.terminal);
        self.next_legal.push(exp.next_legal);
    }

    pub fn from_experiences(batch: &[Experience]) -> Self {
        let mut out = Self::default();
        out.clear(batch.first().map_or(0, |e| e.state.len()));
        for e in batch {
            out.push(e);
        }
        out
    }
}

/// Fixed-capacity ring of experiences; the oldest entry is overwritten first.
///
/// Feature vectors are stored as `f32` in flat arrays to keep large fleets
/// within memory; they are widened back to `f64` when read.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    dim: usize,
    states: Vec<f32>,
    next_states: Vec<f32>,
    actions: Vec<u8>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    next_legal: Vec<u16>,
    head: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            dim,
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            next_legal: Vec::new(),
            head: 0,
            len: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, exp: &Experience) {
        assert_eq!(exp.state.len(), self.dim, "state width");
        assert_eq!(exp.next_state.len(), self.dim, "next-state width");
        let slot = self.head;
        if self.len < self.capacity {
            self.states.extend(exp.state.iter().map(|&v| v as f32));
            self.next_states
                .extend(exp.next_state.iter().map(|&v| v as f32));
            self.actions.push(exp.action as u8);
            self.rewards.push(exp.reward);
            self.terminals.push(exp.terminal);
            self.next_legal.push(exp.next_legal.bits());
            self.len += 1;
        } else {
            let range = slot * self.dim..(slot + 1) * self.dim;
            for (dst, src) in self.states[range.clone()].iter_mut().zip(&exp.state) {
                *dst = *src as f32;
            }
            for (dst, src) in self.next_states[range].iter_mut().zip(&exp.next_state) {
                *dst = *src as f32;
            }
            self.actions[slot] = exp.action as u8;
            self.rewards[slot] = exp.reward;
            self.terminals[slot] = exp.terminal;
            self.next_legal[slot] = exp.next_legal.bits();
        }
        self.head = (self.head + 1) % self.capacity;
    }

    fn read_slot(&self, slot: usize) -> Experience {
        let range = slot * self.dim..(slot + 1) * self.dim;
        Experience {
            state: self.states[range.clone()]
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
            action: usize::from(self.actions[slot]),
            reward: self.rewards[slot],
            next_state: self.next_states[range]
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
            terminal: self.terminals[slot],
            next_legal: ActionMask::from_bits(self.next_legal[slot]),
        }
    }

    /// The `i`-th stored experience, oldest first.
    pub fn get(&self, i: usize) -> Option<Experience> {
        if i >= self.len {
            return None;
        }
        let oldest = if self.len < self.capacity {
            0
        } else {
            self.head
        };
        Some(self.read_slot((oldest + i) % self.capacity))
    }

    pub fn iter(&self) -> impl Iterator<Item = Experience> + '_ {
        (0..self.len).map(|i| self.get(i).expect("in range"))
    }

    /// Uniform sample with replacement written into `out`. Draws the same
    /// indices as [`ReplayBuffer::sample`] for the same rng state.
    pub fn sample_into<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, out: &mut Minibatch) {
        assert!(!self.is_empty(), "sampling an empty buffer");
        out.clear(self.dim);
        for _ in 0..n {
            let slot = rng.gen_range(0..self.len);
            let range = slot * self.dim..(slot + 1) * self.dim;
            out.states
                .extend(self.states[range.clone()].iter().map(|&v| f64::from(v)));
            out.next_states
                .extend(self.next_states[range].iter().map(|&v| f64::from(v)));
            out.actions.push(usize::from(self.actions[slot]));
            out.rewards.push(self.rewards[slot]);
            out.terminals.push(self.terminals[slot]);
            out.next_legal
                .push(ActionMask::from_bits(self.next_legal[slot]));
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Experience> {
        assert!(!self.is_empty(), "sampling an empty buffer");
        (0..n)
            .map(|_| self.read_slot(rng.gen_range(0..self.len)))
            .collect()
    }
}
