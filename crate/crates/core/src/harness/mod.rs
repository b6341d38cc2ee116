//! Scenario configuration, network builders, delay accounting and the
//! experiment runner.

mod run;
mod scenario;
pub mod verify;

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::faults::LinkSchedule;
use crate::topology::{Edge, NetworkSpec};

pub use run::{
    run_scenario, run_seed, write_run_set, MeanRecord, MetricsRecord, RunOutput, RunSet, ScenarioResult,
};
pub use scenario::{DelayModel, FaultKind, FaultModel, NetworkSource, Scenario, Task};

/// Cluster sizes of the 16-agent underwater-style layout.
pub const UWA_CLUSTER_SIZES: [usize; 3] = [6, 5, 5];

/// Independent sub-seed for one purpose within a run.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// 16 agents in three clusters (6, 5, 5). Each cluster is a random recursive
/// tree hanging off its lowest id (the cluster head, which is also the
/// designated agent), with every tree edge used in both directions.
pub fn build_uwa_like(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters = Vec::new();
    let mut edges = Vec::new();
    let mut next = 0;
    for &size in &UWA_CLUSTER_SIZES {
        let members: Vec<usize> = (next..next + size).collect();
        next += size;
        let mut set = Vec::new();
        for k in 1..size {
            let parent = members[rng.random_range(0..k)];
            set.push((parent, members[k]));
            set.push((members[k], parent));
        }
        clusters.push(members);
        edges.push(set);
    }
    NetworkSpec::new(next, clusters, edges).expect("tree clusters are valid")
}

/// Merges every cluster into one network and joins each pair of clusters
/// with a bidirectional edge between seeded-random members. The added edges
/// are recorded as bridges.
pub fn build_single_network_baseline(spec: &NetworkSpec, seed: u64) -> Result<NetworkSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<Edge> = (0..spec.num_clusters()).flat_map(|c| spec.edges(c).to_vec()).collect();
    let mut bridges = Vec::new();
    for c1 in 0..spec.num_clusters() {
        for c2 in c1 + 1..spec.num_clusters() {
            let u = *spec.cluster(c1).choose(&mut rng).expect("clusters are non-empty");
            let v = *spec.cluster(c2).choose(&mut rng).expect("clusters are non-empty");
            bridges.push((u, v));
            bridges.push((v, u));
        }
    }
    edges.extend(&bridges);
    let mut merged = NetworkSpec::new(spec.num_agents(), vec![(0..spec.num_agents()).collect()], vec![edges])?;
    merged.set_bridges(bridges)?;
    Ok(merged)
}

/// Baseline link fates: edges that also exist in the clustered network keep
/// their bits; bridges take theirs from `bridge_source`, which must cover
/// `baseline`.
pub fn baseline_schedule(
    clustered: &NetworkSpec,
    sched: &LinkSchedule,
    baseline: &NetworkSpec,
    bridge_source: &LinkSchedule,
) -> LinkSchedule {
    let lookup = |edge: Edge| {
        let c = clustered.cluster_of(edge.0);
        clustered.edges(c).binary_search(&edge).ok().map(|e| (c, e))
    };
    let sources: Vec<Option<(usize, usize)>> = baseline.edges(0).iter().map(|&edge| lookup(edge)).collect();
    LinkSchedule::from_fn(baseline, sched.horizon(), sched.b(), |c, e, t| match sources[e] {
        Some((oc, oe)) if !baseline.is_bridge(baseline.edges(0)[e]) => sched.is_operational(oc, oe, t),
        _ => bridge_source.is_operational(c, e, t),
    })
}

/// Delay of round `t` in units of `λ`.
///
/// Hierarchical runs (`sync_period = Some(Γ)`) pay `λ` per round plus the
/// parameter-server cost on fusion rounds. Single-network runs pay the
/// bridge cost instead of `λ` in rounds where any bridge is operational.
pub fn account_delay(t: usize, sync_period: Option<usize>, bridge_active: bool, delay: &DelayModel) -> f64 {
    match sync_period {
        Some(p) if p > 0 && t % p == 0 => delay.unit * (1.0 + delay.ps_multiplier),
        Some(_) => delay.unit,
        None if bridge_active => delay.unit * delay.ps_multiplier,
        None => delay.unit,
    }
}

/// Whether any bridge of `spec` is operational in round `t`.
pub fn bridge_active(spec: &NetworkSpec, sched: &LinkSchedule, t: usize) -> bool {
    (0..spec.num_clusters()).any(|c| {
        spec.edges(c)
            .iter()
            .enumerate()
            .any(|(e, &edge)| spec.is_bridge(edge) && sched.is_operational(c, e, t))
    })
}
