use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::seed::{self, Rng};

/// `n` speakers x `m` utterances, speaker-major. `items` index into the
/// corpus the sampler was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source: String,
    pub n_speakers: usize,
    pub m_utts: usize,
    pub speakers: Vec<String>,
    pub items: Vec<usize>,
}

/// Draws GE2E batches. Speakers are visited in a fresh random order every
/// epoch, `n` at a time, so no speaker appears twice in a batch. Each
/// speaker keeps a shuffled utterance queue; a speaker with fewer than `m`
/// utterances repeats some of them.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    source: String,
    n: usize,
    m: usize,
    groups: Vec<(String, Vec<usize>)>,
    queues: Vec<Vec<usize>>,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: Rng,
}

impl BatchSampler {
    /// `groups` maps speaker id to item indices; speakers without items are
    /// ignored.
    pub fn new(
        source: impl Into<String>,
        groups: Vec<(String, Vec<usize>)>,
        n: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(Error::Config(format!(
                "batch needs at least 2 speakers x 2 utterances, got {n} x {m}"
            )));
        }
        let groups: Vec<_> = groups.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        let source = source.into();
        if groups.len() < n {
            return Err(Error::Config(format!(
                "source '{source}' has {} speakers, batch needs {n}",
                groups.len()
            )));
        }
        let queues = vec![Vec::new(); groups.len()];
        Ok(Self {
            source,
            n,
            m,
            groups,
            queues,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            rng: seed::rng(seed),
        })
    }

    /// Groups the manifest's records by speaker (sorted by id); items are
    /// record indices.
    pub fn from_manifest(
        source: impl Into<String>,
        manifest: &Manifest,
        n: usize,
        m: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in manifest.records.iter().enumerate() {
            by_speaker.entry(&r.speaker_id).or_default().push(i);
        }
        let groups = by_speaker
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self::new(source, groups, n, m, seed)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.groups.len() / self.n
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.order.is_empty() || self.cursor + self.n > self.order.len() {
            self.order = (0..self.groups.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let chosen: Vec<usize> = self.order[self.cursor..self.cursor + self.n].to_vec();
        self.cursor += self.n;

        let mut items = Vec::with_capacity(self.n * self.m);
        let mut speakers = Vec::with_capacity(self.n);
        for s in chosen {
            while self.queues[s].len() < self.m {
                let mut fresh = self.groups[s].1.clone();
                fresh.shuffle(&mut self.rng);
                // queue is consumed from the back
                fresh.extend(self.queues[s].drain(..));
                self.queues[s] = fresh;
            }
            let q = &mut self.queues[s];
            items.extend(q.drain(q.len() - self.m..).rev());
            speakers.push(self.groups[s].0.clone());
        }
        Batch {
            source: self.source.clone(),
            n_speakers: self.n,
            m_utts: self.m,
            speakers,
            items,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(speakers: usize, utts: usize) -> Vec<(String, Vec<usize>)> {
        (0..speakers)
            .map(|s| (format!("s{s:02}"), (s * utts..(s + 1) * utts).collect()))
            .collect()
    }

    #[test]
    fn exact_fit_epoch_covers_everything_once() {
        let mut b = BatchSampler::new("real", groups(16, 8), 16, 8, 1).unwrap();
        assert_eq!(b.batches_per_epoch(), 1);
        let batch = b.next_batch();
        assert_eq!(batch.items.len(), 128);
        let mut items = batch.items.clone();
        items.sort();
        assert_eq!(items, (0..128).collect::<Vec<_>>());
        // speaker-major grouping
        for (j, spk) in batch.speakers.iter().enumerate() {
            let s: usize = spk[1..].parse().unwrap();
            for &it in &batch.items[j * 8..(j + 1) * 8] {
                assert_eq!(it / 8, s);
            }
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let run = |seed| {
            let mut b = BatchSampler::new("x", groups(20, 5), 4, 3, seed).unwrap();
            (0..10).map(|_| b.next_batch()).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn distinct_speakers_and_short_speakers_repeat() {
        let mut b = BatchSampler::new("x", groups(6, 2), 3, 5, 9).unwrap();
        for _ in 0..20 {
            let batch = b.next_batch();
            let mut s = batch.speakers.clone();
            s.dedup();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 3);
            assert_eq!(batch.items.len(), 15);
        }
    }

    #[test]
    fn too_few_speakers() {
        assert!(matches!(
            BatchSampler::new("x", groups(3, 4), 4, 2, 0),
            Err(Error::Config(_))
        ));
        assert!(BatchSampler::new("x", groups(3, 4), 1, 2, 0).is_err());
    }
}
