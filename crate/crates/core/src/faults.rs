//! Per-edge operational schedules for packet-dropping links.
//!
//! A link that is not operational in a round silently drops whatever was sent
//! over it. Every generator here produces schedules in which each edge is
//! operational at least once in every `B` consecutive rounds.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::topology::{Edge, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSchedule {
    horizon: usize,
    b: usize,
    edges: Vec<Vec<Edge>>,
    /// `bits[cluster][edge][t - 1]`.
    bits: Vec<Vec<Vec<bool>>>,
}

impl LinkSchedule {
    /// Builds a schedule by evaluating `operational(cluster, edge_index, round)`
    /// for rounds `1..=horizon`.
    pub fn from_fn(
        spec: &NetworkSpec,
        horizon: usize,
        b: usize,
        mut operational: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let edges: Vec<Vec<Edge>> = (0..spec.num_clusters()).map(|i| spec.edges(i).to_vec()).collect();
        let bits = edges
            .iter()
            .enumerate()
            .map(|(c, es)| {
                (0..es.len())
                    .map(|e| (1..=horizon).map(|t| operational(c, e, t)).collect())
                    .collect()
            })
            .collect();
        LinkSchedule {
            horizon,
            b: b.max(1),
            edges,
            bits,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn edges(&self, cluster: usize) -> &[Edge] {
        &self.edges[cluster]
    }

    /// Operational bit of edge `edge` (canonical index within `cluster`) at round `t >= 1`.
    ///
    /// Panics when `t` lies outside `1..=horizon`.
    pub fn is_operational(&self, cluster: usize, edge: usize, t: usize) -> bool {
        assert!(
            t >= 1 && t <= self.horizon,
            "round {t} outside schedule horizon 1..={}",
            self.horizon
        );
        self.bits[cluster][edge][t - 1]
    }

    /// The operational bits of one edge over rounds `1..=horizon`.
    pub fn edge_bits(&self, cluster: usize, edge: usize) -> &[bool] {
        &self.bits[cluster][edge]
    }

    /// Errors unless the schedule covers exactly the spec's edges and at least `rounds` rounds.
    pub fn check_covers(&self, spec: &NetworkSpec, rounds: usize) -> Result<()> {
        if self.edges.len() != spec.num_clusters() {
            return Err(Error::IndexMismatch(format!(
                "schedule has {} clusters, spec has {}",
                self.edges.len(),
                spec.num_clusters()
            )));
        }
        for (i, es) in self.edges.iter().enumerate() {
            if es.as_slice() != spec.edges(i) {
                return Err(Error::IndexMismatch(format!("edge set of cluster {i} differs")));
            }
        }
        if rounds > self.horizon {
            return Err(Error::IndexMismatch(format!(
                "schedule covers {} rounds, {rounds} requested",
                self.horizon
            )));
        }
        Ok(())
    }

    /// True iff every full window of `b` consecutive rounds holds an operational
    /// round for every edge.
    pub fn satisfies_window(&self, b: usize) -> bool {
        let b = b.max(1);
        self.bits.iter().flatten().all(|bits| {
            if bits.len() < b {
                return true;
            }
            let mut count = bits[..b].iter().filter(|&&x| x).count();
            if count == 0 {
                return false;
            }
            for t in b..bits.len() {
                count += bits[t] as usize;
                count -= bits[t - b] as usize;
                if count == 0 {
                    return false;
                }
            }
            true
        })
    }

    /// Writes `cluster,src,dst,round,bit` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cluster", "src", "dst", "round", "bit"])?;
        for (c, es) in self.edges.iter().enumerate() {
            for (e, &(u, v)) in es.iter().enumerate() {
                for (k, &bit) in self.bits[c][e].iter().enumerate() {
                    w.write_record([
                        c.to_string(),
                        u.to_string(),
                        v.to_string(),
                        (k + 1).to_string(),
                        (bit as u8).to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<schedule csv>", e))?;
        Ok(())
    }
}

/// Checks the schedule against its own `B`.
pub fn validate_window(sched: &LinkSchedule) -> bool {
    sched.satisfies_window(sched.b)
}

/// Every link operational in every round (`B = 1`).
pub fn always_on(spec: &NetworkSpec, horizon: usize) -> LinkSchedule {
    LinkSchedule::from_fn(spec, horizon, 1, |_, _, _| true)
}

/// Round 1 is operational for every edge; afterwards the gap to the next
/// operational round is `min(B, G)` with `G ~ Geometric(1 / (1.5 B))` on `{1, 2, ...}`.
pub fn geometric_schedule(spec: &NetworkSpec, horizon: usize, b: usize, seed: u64) -> LinkSchedule {
    let b = b.max(1);
    let p = 1.0 / (1.5 * b as f64);
    let geom = Geometric::new(p).expect("p in (0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = Vec::new();
    for i in 0..spec.num_clusters() {
        let mut cluster_bits = Vec::with_capacity(spec.edges(i).len());
        for _ in spec.edges(i) {
            let mut row = vec![false; horizon];
            let mut t = 1;
            while t <= horizon {
                row[t - 1] = true;
                let gap = (1 + geom.sample(&mut rng)).min(b as u64) as usize;
                t += gap;
            }
            cluster_bits.push(row);
        }
        bits.push(cluster_bits);
    }
    LinkSchedule {
        horizon,
        b,
        edges: (0..spec.num_clusters()).map(|i| spec.edges(i).to_vec()).collect(),
        bits,
    }
}

/// Worst case admitted by the window assumption: each edge is operational
/// exactly once in every aligned block of `B` rounds, at a seeded position.
///
/// The sliding-window constraint forces the in-block offset to be
/// non-increasing from one block to the next, so each offset is drawn
/// uniformly from `0..=previous_offset`. A trailing partial block gets an
/// operational round only when the last full window would otherwise be empty.
pub fn adversarial_schedule(spec: &NetworkSpec, horizon: usize, b: usize, seed: u64) -> LinkSchedule {
    let b = b.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = Vec::new();
    for i in 0..spec.num_clusters() {
        let mut cluster_bits = Vec::with_capacity(spec.edges(i).len());
        for _ in spec.edges(i) {
            let mut row = vec![false; horizon];
            let mut max_offset = b - 1;
            let mut last = 0usize;
            let mut start = 0usize;
            while start < horizon {
                let len = (horizon - start).min(b);
                if len < b && horizon < last + b {
                    break;
                }
                let offset = rng.random_range(0..=max_offset.min(len - 1));
                row[start + offset] = true;
                last = start + offset + 1;
                max_offset = offset;
                start += b;
            }
            cluster_bits.push(row);
        }
        bits.push(cluster_bits);
    }
    LinkSchedule {
        horizon,
        b,
        edges: (0..spec.num_clusters()).map(|i| spec.edges(i).to_vec()).collect(),
        bits,
    }
}
