//! Multi-cluster directed networks.
//!
//! A [`NetworkSpec`] partitions agents `0..N` into clusters. Every directed
//! edge stays inside one cluster; clusters talk to each other only through the
//! parameter server, via one designated agent each. Edges are kept sorted
//! lexicographically per cluster, and that order is the canonical edge index
//! used by schedules, engines and the matrix oracle alike.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Edge = (usize, usize);

/// Default resample cap for [`generate_sbm`].
pub const DEFAULT_GENERATION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct NetworkSpec {
    num_agents: usize,
    clusters: Vec<Vec<usize>>,
    edges: Vec<Vec<Edge>>,
    designated: Vec<usize>,
    bridges: BTreeSet<Edge>,
    cluster_of: Vec<usize>,
    out_degree: Vec<usize>,
}

/// On-disk layout of a [`NetworkSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecFile {
    num_agents: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    bridges: Vec<Edge>,
    clusters: Vec<ClusterFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterFile {
    agents: Vec<usize>,
    #[serde(default)]
    edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    designated: Option<usize>,
}

impl TryFrom<SpecFile> for NetworkSpec {
    type Error = Error;

    fn try_from(file: SpecFile) -> Result<Self> {
        let designated: Vec<Option<usize>> = file.clusters.iter().map(|c| c.designated).collect();
        let (clusters, edges) = file
            .clusters
            .into_iter()
            .map(|c| (c.agents, c.edges))
            .unzip();
        let mut spec = NetworkSpec::new(file.num_agents, clusters, edges)?;
        for (i, d) in designated.into_iter().enumerate() {
            if let Some(d) = d {
                spec.set_designated(i, d)?;
            }
        }
        spec.set_bridges(file.bridges)?;
        Ok(spec)
    }
}

impl From<NetworkSpec> for SpecFile {
    fn from(spec: NetworkSpec) -> Self {
        let clusters = (0..spec.num_clusters())
            .map(|i| ClusterFile {
                agents: spec.clusters[i].clone(),
                edges: spec.edges[i].clone(),
                designated: Some(spec.designated[i]),
            })
            .collect();
        SpecFile {
            num_agents: spec.num_agents,
            bridges: spec.bridges.into_iter().collect(),
            clusters,
        }
    }
}

impl NetworkSpec {
    /// Builds a spec from a cluster partition and per-cluster edge sets.
    ///
    /// Agent lists and edge lists are sorted and deduplicated. The designated
    /// agent of each cluster defaults to its lowest agent id.
    pub fn new(num_agents: usize, clusters: Vec<Vec<usize>>, edges: Vec<Vec<Edge>>) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::InvalidSpec("network has no agents".into()));
        }
        if clusters.is_empty() {
            return Err(Error::InvalidSpec("network has no clusters".into()));
        }
        if clusters.len() != edges.len() {
            return Err(Error::InvalidSpec(format!(
                "{} clusters but {} edge sets",
                clusters.len(),
                edges.len()
            )));
        }

        let mut cluster_of = vec![usize::MAX; num_agents];
        let mut sorted_clusters = Vec::with_capacity(clusters.len());
        for (i, members) in clusters.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyCluster(i));
            }
            let mut members = members;
            members.sort_unstable();
            for &a in &members {
                if a >= num_agents {
                    return Err(Error::InvalidSpec(format!("agent {a} out of range 0..{num_agents}")));
                }
                if cluster_of[a] != usize::MAX {
                    return Err(Error::InvalidSpec(format!("agent {a} listed in more than one cluster")));
                }
                cluster_of[a] = i;
            }
            sorted_clusters.push(members);
        }
        if let Some(a) = cluster_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidSpec(format!("agent {a} belongs to no cluster")));
        }

        let mut out_degree = vec![0; num_agents];
        let mut sorted_edges = Vec::with_capacity(edges.len());
        for (i, set) in edges.into_iter().enumerate() {
            let set: BTreeSet<Edge> = set.into_iter().collect();
            for &(u, v) in &set {
                if u >= num_agents || v >= num_agents {
                    return Err(Error::InvalidSpec(format!("edge ({u},{v}) references unknown agent")));
                }
                if u == v {
                    return Err(Error::InvalidSpec(format!("explicit self-loop on agent {u}")));
                }
                if cluster_of[u] != i || cluster_of[v] != i {
                    return Err(Error::InvalidSpec(format!("edge ({u},{v}) leaves cluster {i}")));
                }
                out_degree[u] += 1;
            }
            sorted_edges.push(set.into_iter().collect());
        }

        let designated = sorted_clusters.iter().map(|c| c[0]).collect();
        Ok(NetworkSpec {
            num_agents,
            clusters: sorted_clusters,
            edges: sorted_edges,
            designated,
            bridges: BTreeSet::new(),
            cluster_of,
            out_degree,
        })
    }

    pub fn set_designated(&mut self, cluster: usize, agent: usize) -> Result<()> {
        if cluster >= self.num_clusters() || self.cluster_of.get(agent) != Some(&cluster) {
            return Err(Error::InvalidSpec(format!(
                "designated agent {agent} is not a member of cluster {cluster}"
            )));
        }
        self.designated[cluster] = agent;
        Ok(())
    }

    /// Tags edges as expensive inter-group bridges (used by the single-network baseline).
    pub fn set_bridges(&mut self, bridges: impl IntoIterator<Item = Edge>) -> Result<()> {
        let bridges: BTreeSet<Edge> = bridges.into_iter().collect();
        for &(u, v) in &bridges {
            let known = self
                .cluster_of
                .get(u)
                .is_some_and(|&c| self.edges[c].binary_search(&(u, v)).is_ok());
            if !known {
                return Err(Error::InvalidSpec(format!("bridge ({u},{v}) is not an edge")));
            }
        }
        self.bridges = bridges;
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, i: usize) -> &[usize] {
        &self.clusters[i]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Edges of cluster `i` in lexicographic order.
    pub fn edges(&self, i: usize) -> &[Edge] {
        &self.edges[i]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn designated(&self, i: usize) -> usize {
        self.designated[i]
    }

    pub fn designated_agents(&self) -> &[usize] {
        &self.designated
    }

    pub fn is_designated(&self, agent: usize) -> bool {
        self.designated[self.cluster_of[agent]] == agent
    }

    pub fn cluster_of(&self, agent: usize) -> usize {
        self.cluster_of[agent]
    }

    /// Out-degree in the superset edge set of the agent's cluster.
    pub fn out_degree(&self, agent: usize) -> usize {
        self.out_degree[agent]
    }

    pub fn bridges(&self) -> &BTreeSet<Edge> {
        &self.bridges
    }

    pub fn is_bridge(&self, edge: Edge) -> bool {
        self.bridges.contains(&edge)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub diameters: Vec<usize>,
    pub betas: Vec<f64>,
}

/// Checks that every cluster is strongly connected and reports its diameter
/// and mixing weight `1 / max_j (d_j + 1)^2`.
pub fn validate(spec: &NetworkSpec) -> Result<ValidationReport> {
    let mut diameters = Vec::with_capacity(spec.num_clusters());
    let mut betas = Vec::with_capacity(spec.num_clusters());
    for i in 0..spec.num_clusters() {
        let members = spec.cluster(i);
        if members.is_empty() {
            return Err(Error::EmptyCluster(i));
        }
        let diameter = cluster_diameter(members, spec.edges(i)).ok_or(Error::NotStronglyConnected(i))?;
        let max_deg = members.iter().map(|&a| spec.out_degree(a)).max().unwrap_or(0);
        diameters.push(diameter);
        betas.push(1.0 / ((max_deg + 1) as f64).powi(2));
    }
    Ok(ValidationReport { diameters, betas })
}

/// Directed diameter by BFS from every member; `None` when some pair is unreachable.
pub fn cluster_diameter(members: &[usize], edges: &[Edge]) -> Option<usize> {
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(k, &a)| (a, k)).collect();
    let n = members.len();
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[local[&u]].push(local[&v]);
    }
    let mut diameter = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &d in &dist {
            if d == usize::MAX {
                return None;
            }
            diameter = diameter.max(d);
        }
    }
    Some(diameter)
}

/// Graph constants that drive the convergence bounds.
///
/// `contraction = (min_i beta_i)^(2 D* B)` and `gamma = 1 - contraction / (4 M^2)`.
/// For realistic graphs `contraction` is far below machine epsilon, so `gamma`
/// rounds to exactly 1.0 in f64; the log-space fields keep full precision and
/// every bound is evaluated from them.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConstants {
    pub num_clusters: usize,
    pub b: usize,
    pub diameters: Vec<usize>,
    pub d_star: usize,
    pub betas: Vec<f64>,
    pub min_beta: f64,
    /// `2 D* B`.
    pub exponent: u32,
    pub contraction: f64,
    pub ln_contraction: f64,
    pub gamma: f64,
    /// `1 - gamma`, exact.
    pub gamma_gap: f64,
    /// `ln gamma`, exact.
    pub ln_gamma: f64,
    /// Synchronization period; `max(1, B D*)`.
    pub sync_period: usize,
}

impl GraphConstants {
    /// `(1/(4 M^2)) (min beta)^(2 D* B)`: floor on the entries of any 2Γ-round product.
    pub fn entry_floor(&self) -> f64 {
        self.gamma_gap
    }

    pub fn ln_entry_floor(&self) -> f64 {
        self.ln_contraction - (4.0 * (self.num_clusters as f64).powi(2)).ln()
    }

    pub fn with_sync_period(mut self, period: usize) -> Self {
        self.sync_period = period.max(1);
        self
    }
}

pub fn derive_constants(spec: &NetworkSpec, b: usize) -> Result<GraphConstants> {
    if b == 0 {
        return Err(Error::ParameterOutOfRange("B must be positive".into()));
    }
    let report = validate(spec)?;
    let m = spec.num_clusters();
    let d_star = report.diameters.iter().copied().max().unwrap_or(0);
    let min_beta = report.betas.iter().copied().fold(f64::INFINITY, f64::min);
    let exponent = u32::try_from(2 * d_star * b)
        .map_err(|_| Error::ParameterOutOfRange("2 D* B overflows".into()))?;
    let ln_contraction = exponent as f64 * min_beta.ln();
    let contraction = ln_contraction.exp();
    let ln_gap = ln_contraction - (4.0 * (m as f64).powi(2)).ln();
    let gamma_gap = ln_gap.exp();
    Ok(GraphConstants {
        num_clusters: m,
        b,
        diameters: report.diameters,
        d_star,
        betas: report.betas,
        min_beta,
        exponent,
        contraction,
        ln_contraction,
        gamma: 1.0 - gamma_gap,
        gamma_gap,
        ln_gamma: (-gamma_gap).ln_1p(),
        sync_period: (b * d_star).max(1),
    })
}

/// Augmented graph of one cluster: agents plus one virtual node per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    pub cluster: usize,
    pub agents: Vec<usize>,
    pub edges: Vec<Edge>,
    agent_index: HashMap<usize, usize>,
}

impl AugmentedGraph {
    pub fn total_size(&self) -> usize {
        self.agents.len() + self.edges.len()
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_index(&self, agent: usize) -> Option<usize> {
        self.agent_index.get(&agent).copied()
    }

    /// Local index of the virtual node carrying edge `(src, dst)`.
    pub fn edge_index(&self, edge: Edge) -> Option<usize> {
        self.edges.binary_search(&edge).ok().map(|k| self.agents.len() + k)
    }

    /// Edge set of the augmented graph, in local indices.
    pub fn augmented_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(3 * self.edges.len());
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            let (iu, iv) = (self.agent_index[&u], self.agent_index[&v]);
            let n = self.agents.len() + k;
            out.push((iu, iv));
            out.push((iu, n));
            out.push((n, iv));
        }
        out.sort_unstable();
        out
    }
}

/// Agents in ascending id order, then virtual nodes in lexicographic edge order.
pub fn build_augmented(spec: &NetworkSpec, cluster: usize) -> AugmentedGraph {
    let agents = spec.cluster(cluster).to_vec();
    let agent_index = agents.iter().enumerate().map(|(k, &a)| (a, k)).collect();
    AugmentedGraph {
        cluster,
        agents,
        edges: spec.edges(cluster).to_vec(),
        agent_index,
    }
}

/// Samples clusters of the given sizes, each directed pair present with
/// probability `edge_prob`, resampling a cluster until it is strongly connected.
/// Agent ids are assigned contiguously, cluster by cluster.
pub fn generate_clustered(sizes: &[usize], edge_prob: f64, seed: u64, max_attempts: usize) -> Result<NetworkSpec> {
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("edge probability {edge_prob} not in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters = Vec::with_capacity(sizes.len());
    let mut edges = Vec::with_capacity(sizes.len());
    let mut next = 0;
    for (i, &n) in sizes.iter().enumerate() {
        let members: Vec<usize> = (next..next + n).collect();
        next += n;
        let mut attempts = 0;
        let set = loop {
            if attempts == max_attempts {
                return Err(Error::GenerationBudgetExceeded { cluster: i, attempts });
            }
            attempts += 1;
            let mut set = Vec::new();
            for &u in &members {
                for &v in &members {
                    if u != v && rng.random_bool(edge_prob) {
                        set.push((u, v));
                    }
                }
            }
            if cluster_diameter(&members, &set).is_some() {
                break set;
            }
        };
        clusters.push(members);
        edges.push(set);
    }
    NetworkSpec::new(next, clusters, edges)
}

/// Stochastic-block-model network: `num_clusters` clusters of `nodes_per_cluster` agents.
pub fn generate_sbm(num_clusters: usize, nodes_per_cluster: usize, edge_prob: f64, seed: u64) -> Result<NetworkSpec> {
    generate_clustered(
        &vec![nodes_per_cluster; num_clusters],
        edge_prob,
        seed,
        DEFAULT_GENERATION_ATTEMPTS,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bidirectional_pairs(m: usize) -> NetworkSpec {
        let clusters = (0..m).map(|i| vec![2 * i, 2 * i + 1]).collect();
        let edges = (0..m)
            .map(|i| vec![(2 * i, 2 * i + 1), (2 * i + 1, 2 * i)])
            .collect();
        NetworkSpec::new(2 * m, clusters, edges).unwrap()
    }

    /// Diameter via boolean matrix powers, independent of BFS.
    fn diameter_by_matrix_powers(n: usize, edges: &[Edge]) -> Option<usize> {
        let mut adj = vec![vec![false; n]; n];
        for &(u, v) in edges {
            adj[u][v] = true;
        }
        let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
        for k in 0..n {
            if reach.iter().all(|row| row.iter().all(|&x| x)) {
                return Some(k);
            }
            let mut next = reach.clone();
            for i in 0..n {
                for j in 0..n {
                    if reach[i][j] {
                        for l in 0..n {
                            if adj[j][l] {
                                next[i][l] = true;
                            }
                        }
                    }
                }
            }
            reach = next;
        }
        None
    }

    #[test]
    fn directed_cycle_is_strongly_connected() {
        let spec = NetworkSpec::new(3, vec![vec![0, 1, 2]], vec![vec![(0, 1), (1, 2), (2, 0)]]).unwrap();
        let report = validate(&spec).unwrap();
        assert_eq!(report.diameters, vec![2]);
    }

    #[test]
    fn one_way_edge_is_not_strongly_connected() {
        let spec = NetworkSpec::new(2, vec![vec![0, 1]], vec![vec![(0, 1)]]).unwrap();
        assert!(matches!(validate(&spec), Err(Error::NotStronglyConnected(0))));
    }

    #[test]
    fn bidirectional_pairs_constants() {
        let report = validate(&bidirectional_pairs(2)).unwrap();
        assert_eq!(report.diameters, vec![1, 1]);
        assert_eq!(report.betas, vec![0.25, 0.25]);
    }

    #[test]
    fn constants_single_pair() {
        let c = derive_constants(&bidirectional_pairs(1), 1).unwrap();
        assert_eq!(c.min_beta, 0.25);
        assert_eq!(c.d_star, 1);
        assert_eq!(c.sync_period, 1);
        assert_relative_eq!(c.gamma, 1.0 - 1.0 / 64.0, max_relative = 1e-15);
    }

    #[test]
    fn constants_two_pairs() {
        let c = derive_constants(&bidirectional_pairs(2), 2).unwrap();
        assert_eq!(c.sync_period, 2);
        assert_relative_eq!(c.gamma, 1.0 - (1.0 / 16.0) * 0.25f64.powi(4), max_relative = 1e-15);
        assert_relative_eq!(c.gamma_gap, (1.0 / 16.0) * 0.25f64.powi(4), max_relative = 1e-12);
        assert_relative_eq!(c.ln_gamma, c.gamma.ln(), max_relative = 1e-9);
    }

    #[test]
    fn single_agent_clusters_have_unit_sync_period() {
        let spec = NetworkSpec::new(2, vec![vec![0], vec![1]], vec![vec![], vec![]]).unwrap();
        let c = derive_constants(&spec, 3).unwrap();
        assert_eq!(c.d_star, 0);
        assert_eq!(c.sync_period, 1);
        assert!(c.gamma > 0.0 && c.gamma < 1.0);
    }

    #[test]
    fn rejects_inter_cluster_edges_and_self_loops() {
        let err = NetworkSpec::new(2, vec![vec![0], vec![1]], vec![vec![(0, 1)], vec![]]);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
        let err = NetworkSpec::new(1, vec![vec![0]], vec![vec![(0, 0)]]);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
        let err = NetworkSpec::new(2, vec![vec![0, 1], vec![]], vec![vec![], vec![]]);
        assert!(matches!(err, Err(Error::EmptyCluster(1))));
        let err = NetworkSpec::new(3, vec![vec![0, 1]], vec![vec![]]);
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn designated_defaults_to_lowest_id() {
        let spec = NetworkSpec::new(3, vec![vec![2, 1], vec![0]], vec![vec![(1, 2), (2, 1)], vec![]]).unwrap();
        assert_eq!(spec.designated_agents(), &[1, 0]);
        assert!(spec.is_designated(1));
        assert!(!spec.is_designated(2));
    }

    #[test]
    fn augmented_example_graph() {
        let spec = NetworkSpec::new(
            3,
            vec![vec![0, 1, 2]],
            vec![vec![(0, 1), (1, 0), (0, 2), (2, 1)]],
        )
        .unwrap();
        let aug = build_augmented(&spec, 0);
        assert_eq!(aug.total_size(), 7);
        assert_eq!(aug.edge_index((0, 1)), Some(3));
        assert_eq!(aug.edge_index((0, 2)), Some(4));
        assert_eq!(aug.edge_index((1, 0)), Some(5));
        assert_eq!(aug.edge_index((2, 1)), Some(6));
        assert_eq!(aug.augmented_edges().len(), 12);
        assert!(aug.augmented_edges().contains(&(0, 3)));
        assert!(aug.augmented_edges().contains(&(3, 1)));
    }

    #[test]
    fn augmented_trivial_cases() {
        let single = NetworkSpec::new(1, vec![vec![0]], vec![vec![]]).unwrap();
        let aug = build_augmented(&single, 0);
        assert_eq!(aug.total_size(), 1);
        assert!(aug.augmented_edges().is_empty());

        let pair = bidirectional_pairs(1);
        let aug = build_augmented(&pair, 0);
        assert_eq!(aug.total_size(), 4);
        assert_eq!(aug.edge_index((0, 1)), Some(2));
        assert_eq!(aug.edge_index((1, 0)), Some(3));
    }

    #[test]
    fn sbm_64_nodes() {
        let spec = generate_sbm(8, 8, 0.3, 42).unwrap();
        assert_eq!(spec.num_agents(), 64);
        assert_eq!(spec.num_clusters(), 8);
        validate(&spec).unwrap();
        let c = derive_constants(&spec, 2).unwrap();
        assert!(c.gamma_gap > 0.0 && c.gamma_gap < 1.0);
        assert!(c.sync_period >= 1);
        assert_eq!(generate_sbm(8, 8, 0.3, 42).unwrap(), spec);
    }

    #[test]
    fn sbm_edge_cases() {
        let complete = generate_sbm(2, 4, 1.0, 0).unwrap();
        assert_eq!(complete.edges(0).len(), 12);
        let singles = generate_sbm(3, 1, 0.5, 0).unwrap();
        assert_eq!(singles.num_edges(), 0);
        validate(&singles).unwrap();
        assert!(matches!(
            generate_clustered(&[6], 1e-6, 1, 50),
            Err(Error::GenerationBudgetExceeded { cluster: 0, attempts: 50 })
        ));
        assert!(generate_sbm(1, 3, 0.0, 0).is_err());
    }

    #[test]
    fn bfs_diameter_matches_matrix_powers() {
        for seed in 0..40 {
            let n = 2 + (seed as usize % 9);
            let spec = generate_clustered(&[n], 0.35, seed, 10_000).unwrap();
            let bfs = validate(&spec).unwrap().diameters[0];
            assert_eq!(Some(bfs), diameter_by_matrix_powers(n, spec.edges(0)), "seed {seed}");
        }
        assert_eq!(diameter_by_matrix_powers(2, &[(0, 1)]), None);
    }

    #[test]
    fn toml_round_trip() {
        let mut spec = generate_sbm(2, 3, 0.8, 5).unwrap();
        spec.set_designated(1, 4).unwrap();
        let text = spec.to_toml().unwrap();
        let back = NetworkSpec::from_toml(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn toml_rejects_bad_designated() {
        let text = "num_agents = 2\n[[clusters]]\nagents = [0]\ndesignated = 1\n[[clusters]]\nagents = [1]\n";
        assert!(NetworkSpec::from_toml(text).is_err());
    }
}
