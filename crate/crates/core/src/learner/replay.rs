use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal (success); episodes cut by the horizon keep bootstrapping.
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    cursor: usize,
    data: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            cursor: 0,
            data: Vec::new(),
        })
    }

    /// Rebuilds a buffer from saved contents.
    pub fn from_parts(capacity: usize, cursor: usize, data: Vec<Transition>) -> Result<Self> {
        if capacity == 0 || data.len() > capacity || cursor >= capacity.max(1) {
            return Err(Error::Config("inconsistent replay buffer contents".into()));
        }
        Ok(Self {
            capacity,
            cursor,
            data,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.data
    }

    pub fn clear(&mut self) {
        self.data.clear();
        self.cursor = 0;
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return Err(Error::NonFinite {
                what: "reward",
                index: self.cursor,
            });
        }
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Indices drawn uniformly with replacement from the filled region.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::Config("cannot sample an empty replay buffer".into()));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.data.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.data[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use alloc::vec;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![r],
            action: vec![0.0],
            reward: r,
            next_state: vec![r],
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(t(i as f64)).unwrap();
        }
        let rewards: Vec<f64> = b.transitions().iter().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
        assert_eq!(b.cursor(), 2);
    }

    #[test]
    fn samples_only_filled_region() {
        let mut b = ReplayBuffer::new(100).unwrap();
        assert!(b.sample(1, &mut stream(0, Stream::Learner)).is_err());
        for i in 0..7 {
            b.push(t(i as f64)).unwrap();
        }
        let idx = b.sample_indices(1000, &mut stream(0, Stream::Learner)).unwrap();
        assert!(idx.iter().all(|&i| i < 7));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..100 {
            b.push(t(i as f64)).unwrap();
        }
        let n = 1_000_000;
        let mut counts = vec![0usize; 100];
        for i in b.sample_indices(n, &mut stream(3, Stream::Learner)).unwrap() {
            counts[i] += 1;
        }
        let p = 0.01;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma + 1.0, "{c}");
        }
    }

    #[test]
    fn rejects_non_finite_reward() {
        let mut b = ReplayBuffer::new(2).unwrap();
        assert!(b.push(t(f64::NAN)).is_err());
        assert!(b.is_empty());
    }
}
