// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Hardware barrier shared by all control cores.

use std::collections::BTreeMap;

/// Release cycle of a barrier given its arrival cycles.
pub fn barrier_sync(arrivals: &[u64]) -> Option<u64> {
    arrivals.iter().max().map(|m| m + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarrierRelease {
    pub id: u64,
    pub cycle: u64,
}

#[derive(Debug, Clone)]
pub struct BarrierUnit {
    participants: usize,
    arrived: BTreeMap<u64, Vec<(usize, u64)>>,
    release_at: Vec<Option<u64>>,
    pub releases: Vec<BarrierRelease>,
}

impl BarrierUnit {
    pub fn new(participants: usize) -> Self {
        BarrierUnit {
            participants,
            arrived: BTreeMap::new(),
            release_at: vec![None; participants],
            releases: Vec::new(),
        }
    }

    pub fn participants(&self) -> usize {
        self.participants
    }

    pub fn arrive(&mut self, id: u64, core: usize, cycle: u64) {
        let v = self.arrived.entry(id).or_default();
        debug_assert!(v.iter().all(|&(c, _)| c != core));
        v.push((core, cycle));
    }

    /// Releases every barrier whose participants have all arrived.
    /// Returns the number of barriers released.
    pub fn release_phase(&mut self) -> usize {
        let full: Vec<u64> = self
            .arrived
            .iter()
            .filter(|(_, v)| v.len() == self.participants)
            .map(|(&id, _)| id)
            .collect();
        for id in &full {
            let v = self.arrived.remove(id).unwrap();
            let cycles: Vec<u64> = v.iter().map(|&(_, c)| c).collect();
            let at = barrier_sync(&cycles).unwrap();
            for (core, _) in v {
                self.release_at[core] = Some(at);
            }
            self.releases.push(BarrierRelease { id: *id, cycle: at });
        }
        full.len()
    }

    /// True once `core` may leave its barrier; consumes the release.
    pub fn take_release(&mut self, core: usize, cycle: u64) -> bool {
        match self.release_at[core] {
            Some(at) if cycle >= at => {
                self.release_at[core] = None;
                true
            }
            _ => false,
        }
    }

    pub fn has_scheduled_release(&self, core: usize) -> bool {
        self.release_at[core].is_some()
    }

    /// Barrier ids with at least one arrival but not yet released.
    pub fn waiting(&self) -> Vec<(u64, Vec<usize>)> {
        self.arrived.iter().map(|(&id, v)| (id, v.iter().map(|&(c, _)| c).collect())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cores_release_after_last_arrival() {
        assert_eq!(barrier_sync(&[5, 9]), Some(10));
        let mut b = BarrierUnit::new(2);
        b.arrive(3, 0, 5);
        assert_eq!(b.release_phase(), 0);
        b.arrive(3, 1, 9);
        assert_eq!(b.release_phase(), 1);
        assert!(!b.take_release(0, 9));
        assert!(b.take_release(0, 10));
        assert!(b.take_release(1, 10));
        assert_eq!(b.releases, vec![BarrierRelease { id: 3, cycle: 10 }]);
    }

    #[test]
    fn single_participant_and_reuse() {
        let mut b = BarrierUnit::new(1);
        for t in [0u64, 4] {
            b.arrive(1, 0, t);
            b.release_phase();
            assert!(b.take_release(0, t + 1));
        }
        assert_eq!(b.releases.len(), 2);
        assert!(b.waiting().is_empty());
    }
}
