/// Per-variable ring buffers of the most recent `capacity` iterates, plus
/// flip counts over the whole run.
///
/// All tracked variables receive a value on every push, so the buffers share
/// one write position. Variables are stored in the solver's current (reduced)
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    capacity: usize,
    vars: usize,
    values: Vec<f64>,
    head: usize,
    filled: usize,
    flips: Vec<u32>,
    last: Vec<f64>,
    pushes: usize,
}

impl SolverTrace {
    pub fn new(vars: usize, capacity: usize) -> Self {
        let capacity = capacity.max(1);
        SolverTrace {
            capacity,
            vars,
            values: vec![0.0; vars * capacity],
            head: 0,
            filled: 0,
            flips: vec![0; vars],
            last: vec![f64::NAN; vars],
            pushes: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    /// Number of iterates currently held per variable (at most `capacity`).
    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    /// Total pushes since creation.
    pub fn pushes(&self) -> usize {
        self.pushes
    }

    /// Records one iterate for every tracked variable.
    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.vars);
        for (i, &v) in x.iter().enumerate() {
            self.values[i * self.capacity + self.head] = v;
            let prev = self.last[i];
            if (prev - 0.5) * (v - 0.5) < 0.0 {
                self.flips[i] += 1;
            }
            self.last[i] = v;
        }
        self.head = (self.head + 1) % self.capacity;
        self.filled = (self.filled + 1).min(self.capacity);
        self.pushes += 1;
    }

    /// The held iterates of variable `i`, oldest first.
    pub fn window(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.filled);
        self.window_into(i, &mut out);
        out
    }

    pub(crate) fn window_into(&self, i: usize, out: &mut Vec<f64>) {
        let row = &self.values[i * self.capacity..(i + 1) * self.capacity];
        let start = (self.head + self.capacity - self.filled) % self.capacity;
        out.extend((0..self.filled).map(|k| row[(start + k) % self.capacity]));
    }

    /// Row-major `vars x len()` matrix of all windows.
    pub fn windows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vars * self.filled);
        for i in 0..self.vars {
            self.window_into(i, &mut out);
        }
        out
    }

    pub fn flips(&self) -> &[u32] {
        &self.flips
    }

    /// Drops the variables whose `keep` entry is false, preserving the
    /// buffers and flip counts of the rest.
    pub fn retain(&mut self, keep: &[bool]) {
        debug_assert_eq!(keep.len(), self.vars);
        let cap = self.capacity;
        let mut w = 0;
        for r in 0..self.vars {
            if !keep[r] {
                continue;
            }
            if w != r {
                self.values.copy_within(r * cap..(r + 1) * cap, w * cap);
                self.flips[w] = self.flips[r];
                self.last[w] = self.last[r];
            }
            w += 1;
        }
        self.vars = w;
        self.values.truncate(w * cap);
        self.flips.truncate(w);
        self.last.truncate(w);
    }
}
