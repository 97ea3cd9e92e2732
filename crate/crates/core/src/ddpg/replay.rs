use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
}

/// Bounded FIFO of transitions; the oldest is evicted first.
#[derive(Debug, Clone)]
pub struct ExperienceDeque<T> {
    buf: VecDeque<Transition<T>>,
    capacity: usize,
}

impl<T> ExperienceDeque<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "deque capacity must be positive");
        ExperienceDeque { buf: VecDeque::with_capacity(capacity.min(4096)), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.buf.iter()
    }

    /// Up to `batch` distinct transitions drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition<T>> {
        let k = batch.min(self.buf.len());
        index::sample(rng, self.buf.len(), k).into_iter().map(|i| &self.buf[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(k: usize) -> Transition<f64> {
        Transition { state: vec![k as f64], action: vec![0.0], reward: -(k as f64), next_state: vec![k as f64 + 1.0] }
    }

    proptest! {
        #[test]
        fn keeps_last_pushes_in_order(capacity in 1usize..20, pushes in 0usize..60) {
            let mut d = ExperienceDeque::new(capacity);
            for k in 0..pushes {
                d.push(t(k));
            }
            let kept: Vec<f64> = d.iter().map(|x| x.state[0]).collect();
            let expected: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|k| k as f64).collect();
            prop_assert_eq!(kept, expected);
            prop_assert!(d.len() <= capacity);
        }
    }

    #[test]
    fn sample_is_distinct_and_bounded() {
        let mut d = ExperienceDeque::new(100);
        for k in 0..10 {
            d.push(t(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = d.sample(64, &mut rng);
        assert_eq!(s.len(), 10);
        let mut ids: Vec<i64> = s.iter().map(|x| x.state[0] as i64).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 10);
        assert_eq!(d.sample(4, &mut rng).len(), 4);
    }
}
