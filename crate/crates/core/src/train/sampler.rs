use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Cycles through `0..len` in passes, reshuffling each pass. The batch for a
/// step is a pure function of the step, so a resumed run sees the same
/// batches without any saved cursor.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    len: usize,
    stream: RngStream,
    cached: Option<(u64, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(len: usize, stream: RngStream) -> Result<Self> {
        if len == 0 {
            return Err(Error::validation("sampler", "cannot sample from an empty set"));
        }
        Ok(BatchSampler {
            len,
            stream,
            cached: None,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn pass(&mut self, pass: u64) -> &[usize] {
        if self.cached.as_ref().map(|(p, _)| *p) != Some(pass) {
            let mut order: Vec<usize> = (0..self.len).collect();
            order.shuffle(&mut self.stream.derive(pass).rng());
            self.cached = Some((pass, order));
        }
        &self.cached.as_ref().expect("just filled").1
    }

    /// Indices of the `size` samples used at `step`.
    pub fn batch(&mut self, step: u64, size: usize) -> Vec<usize> {
        let start = step * size as u64;
        (start..start + size as u64)
            .map(|pos| {
                let pass = pos / self.len as u64;
                let within = (pos % self.len as u64) as usize;
                self.pass(pass)[within]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    #[test]
    fn every_pass_is_a_permutation() {
        let mut s = BatchSampler::new(10, RngStream::new(1, StreamId::LabeledSampler)).unwrap();
        let all: Vec<usize> = (0..5).flat_map(|step| s.batch(step, 4)).collect();
        for pass in all.chunks(10) {
            let mut p = pass.to_vec();
            p.sort();
            assert_eq!(p, (0..10).collect::<Vec<_>>());
        }
        assert_ne!(&all[..10], &all[10..20]);
    }

    #[test]
    fn batches_depend_only_on_step() {
        let stream = RngStream::new(4, StreamId::UnlabeledSampler);
        let mut a = BatchSampler::new(7, stream).unwrap();
        let mut b = BatchSampler::new(7, stream).unwrap();
        let seq: Vec<Vec<usize>> = (0..6).map(|s| a.batch(s, 5)).collect();
        for s in (0..6).rev() {
            assert_eq!(b.batch(s, 5), seq[s as usize]);
        }
    }

    #[test]
    fn batch_larger_than_set() {
        let mut s = BatchSampler::new(3, RngStream::new(0, StreamId::LabeledSampler)).unwrap();
        let b = s.batch(0, 7);
        assert_eq!(b.len(), 7);
        assert!(b.iter().all(|&i| i < 3));
        assert!(BatchSampler::new(0, RngStream::new(0, StreamId::LabeledSampler)).is_err());
    }
}
