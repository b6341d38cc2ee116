//! Hierarchical push-sum over packet-dropping links.
//!
//! Each agent keeps a value `z`, a mass `m`, running totals `sigma` /
//! `sigma_tilde` of what it has ever sent, and per incoming link the running
//! totals `rho` / `rho_tilde` it has received. A dropped packet leaves the
//! sent-but-unreceived amount `sigma_src - rho_link` parked on the link; the
//! next successful delivery releases it. Every `Γ` rounds the designated agent
//! of each cluster exchanges half of its state with the parameter server.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::faults::LinkSchedule;
use crate::topology::NetworkSpec;

/// Estimates are only read from agents whose mass is at least this large.
pub const MASS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub z: DVector<f64>,
    pub m: f64,
    pub sigma: DVector<f64>,
    pub sigma_tilde: f64,
    /// Cumulative received value, one entry per incoming link.
    pub rho: Vec<DVector<f64>>,
    pub rho_tilde: Vec<f64>,
}

impl AgentState {
    fn new(init: DVector<f64>, in_degree: usize) -> Self {
        let dim = init.len();
        AgentState {
            z: init,
            m: 1.0,
            sigma: DVector::zeros(dim),
            sigma_tilde: 0.0,
            rho: vec![DVector::zeros(dim); in_degree],
            rho_tilde: vec![0.0; in_degree],
        }
    }
}

/// Half of a designated agent's state, as sent to the parameter server.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMessage {
    pub cluster: usize,
    pub half_z: DVector<f64>,
    pub half_m: f64,
}

#[derive(Debug, Clone, Copy)]
struct Link {
    src: usize,
    dst: usize,
    cluster: usize,
    /// Canonical edge index within the cluster.
    edge: usize,
    /// Position of this link in `dst`'s incoming list.
    slot: usize,
}

/// Synchronous push-sum engine over all clusters.
#[derive(Debug, Clone)]
pub struct PushSum {
    spec: NetworkSpec,
    dim: usize,
    agents: Vec<AgentState>,
    links: Vec<Link>,
    incoming: Vec<Vec<usize>>,
    /// Row order of [`PushSum::stacked_z`]: `Ok(agent)` or `Err(link)`.
    order: Vec<std::result::Result<usize, usize>>,
    round: usize,
}

impl PushSum {
    pub fn new(spec: &NetworkSpec, init: &[DVector<f64>]) -> Result<Self> {
        if init.len() != spec.num_agents() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_agents(),
                got: init.len(),
            });
        }
        let dim = init[0].len();
        if let Some(bad) = init.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }

        let mut links = Vec::with_capacity(spec.num_edges());
        let mut incoming = vec![Vec::new(); spec.num_agents()];
        let mut order = Vec::with_capacity(spec.num_agents() + spec.num_edges());
        for c in 0..spec.num_clusters() {
            order.extend(spec.cluster(c).iter().map(|&a| Ok(a)));
            for (e, &(src, dst)) in spec.edges(c).iter().enumerate() {
                let id = links.len();
                links.push(Link {
                    src,
                    dst,
                    cluster: c,
                    edge: e,
                    slot: incoming[dst].len(),
                });
                incoming[dst].push(id);
                order.push(Err(id));
            }
        }
        let agents = init
            .iter()
            .zip(&incoming)
            .map(|(w, inc)| AgentState::new(w.clone(), inc.len()))
            .collect();
        Ok(PushSum {
            spec: spec.clone(),
            dim,
            agents,
            links,
            incoming,
            order,
            round: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the last completed round.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn state(&self, agent: usize) -> &AgentState {
        &self.agents[agent]
    }

    pub fn states(&self) -> &[AgentState] {
        &self.agents
    }

    pub(crate) fn z_mut(&mut self, agent: usize) -> &mut DVector<f64> {
        &mut self.agents[agent].z
    }

    /// One round of robust push-sum (all clusters in parallel).
    pub fn local_round(&mut self, sched: &LinkSchedule, t: usize) {
        self.mix_round(sched, t, None);
    }

    /// One round of robust push-sum with the dynamics matrix applied to the
    /// value side (`sigma`, `rho`, `z`); the mass side is never transformed.
    pub(crate) fn mix_round(&mut self, sched: &LinkSchedule, t: usize, dynamics: Option<&DMatrix<f64>>) {
        let scale: Vec<f64> = (0..self.agents.len())
            .map(|a| 1.0 / (self.spec.out_degree(a) + 1) as f64)
            .collect();

        let sigma_plus: Vec<DVector<f64>> = self
            .agents
            .iter()
            .zip(&scale)
            .map(|(s, &k)| &s.sigma + &s.z * k)
            .collect();
        let sigma_tilde_plus: Vec<f64> = self
            .agents
            .iter()
            .zip(&scale)
            .map(|(s, &k)| s.sigma_tilde + s.m * k)
            .collect();

        for j in 0..self.agents.len() {
            let k = scale[j];
            let state = &mut self.agents[j];
            let mut z_plus = &state.z * k;
            let mut m_plus = state.m * k;
            for (slot, &l) in self.incoming[j].iter().enumerate() {
                let link = self.links[l];
                if sched.is_operational(link.cluster, link.edge, t) {
                    z_plus += &sigma_plus[link.src] - &state.rho[slot];
                    m_plus += sigma_tilde_plus[link.src] - state.rho_tilde[slot];
                    state.rho[slot].copy_from(&sigma_plus[link.src]);
                    state.rho_tilde[slot] = sigma_tilde_plus[link.src];
                }
            }

            let mut sigma = &sigma_plus[j] + &z_plus * k;
            let mut z = z_plus * k;
            if let Some(a) = dynamics {
                sigma = a * sigma;
                z = a * z;
                for rho in &mut state.rho {
                    *rho = a * &*rho;
                }
            }
            state.sigma = sigma;
            state.z = z;
            state.sigma_tilde = sigma_tilde_plus[j] + m_plus * k;
            state.m = m_plus * k;
        }
        self.round = t;
    }

    /// Half-state messages the designated agents send to the parameter server.
    pub fn fusion_messages(&self) -> Vec<FusionMessage> {
        self.spec
            .designated_agents()
            .iter()
            .enumerate()
            .map(|(cluster, &a)| FusionMessage {
                cluster,
                half_z: &self.agents[a].z * 0.5,
                half_m: 0.5 * self.agents[a].m,
            })
            .collect()
    }

    /// Parameter-server fusion: each designated agent sets
    /// `z <- z/2 + (1/2M) Σ z_{i0}` (and likewise `m`).
    pub fn ps_fusion(&mut self) {
        let messages = self.fusion_messages();
        let m = messages.len() as f64;
        let mut avg_z = DVector::zeros(self.dim);
        let mut avg_m = 0.0;
        for msg in &messages {
            avg_z += &msg.half_z;
            avg_m += msg.half_m;
        }
        avg_z /= m;
        avg_m /= m;
        for msg in &messages {
            let a = self.spec.designated(msg.cluster);
            let state = &mut self.agents[a];
            state.z = &msg.half_z + &avg_z;
            state.m = msg.half_m + avg_m;
        }
    }

    /// Value parked on link `(src, dst)`: `sigma_src - rho_link`.
    pub fn virtual_z(&self, link: usize) -> DVector<f64> {
        let l = self.links[link];
        &self.agents[l.src].sigma - &self.agents[l.dst].rho[l.slot]
    }

    pub fn virtual_m(&self, link: usize) -> f64 {
        let l = self.links[link];
        self.agents[l.src].sigma_tilde - self.agents[l.dst].rho_tilde[l.slot]
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Agent mass plus mass in flight on every link.
    pub fn total_mass(&self) -> f64 {
        let agents: f64 = self.agents.iter().map(|s| s.m).sum();
        let parked: f64 = (0..self.links.len()).map(|l| self.virtual_m(l)).sum();
        agents + parked
    }

    /// Values of all augmented nodes, one row per node, clusters in order and
    /// within a cluster agents first then edges in lexicographic order.
    pub fn stacked_z(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.order.len(), self.dim);
        for (row, node) in self.order.iter().enumerate() {
            let v = match *node {
                Ok(a) => self.agents[a].z.clone(),
                Err(l) => self.virtual_z(l),
            };
            out.set_row(row, &v.transpose());
        }
        out
    }

    pub fn stacked_m(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.order.len(),
            self.order.iter().map(|node| match *node {
                Ok(a) => self.agents[a].m,
                Err(l) => self.virtual_m(l),
            }),
        )
    }

    /// Ratio `z / m` of an agent.
    pub fn estimate(&self, agent: usize) -> Result<DVector<f64>> {
        let s = &self.agents[agent];
        if !(s.m >= MASS_FLOOR) {
            return Err(Error::MassUnderflow {
                agent,
                round: self.round,
                mass: s.m,
            });
        }
        Ok(&s.z / s.m)
    }

    pub fn estimates(&self) -> Result<Vec<DVector<f64>>> {
        (0..self.agents.len()).map(|a| self.estimate(a)).collect()
    }

    /// Sum of `z` over every augmented node.
    pub fn total_z(&self) -> DVector<f64> {
        let mut total = DVector::zeros(self.dim);
        for s in &self.agents {
            total += &s.z;
        }
        for l in 0..self.links.len() {
            total += self.virtual_z(l);
        }
        total
    }
}

/// Per-round record of a consensus run; index `t` holds the state after round `t`
/// (index 0 is the initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusTrace {
    pub estimates: Vec<Vec<DVector<f64>>>,
    pub masses: Vec<Vec<f64>>,
    pub total_mass: Vec<f64>,
    pub target: DVector<f64>,
}

impl ConsensusTrace {
    pub fn rounds(&self) -> usize {
        self.estimates.len() - 1
    }

    /// Per-agent distance to the initial average after round `t`.
    pub fn errors(&self, t: usize) -> Vec<f64> {
        self.estimates[t].iter().map(|e| (e - &self.target).norm()).collect()
    }

    pub fn max_error(&self, t: usize) -> f64 {
        self.errors(t).into_iter().fold(0.0, f64::max)
    }

    /// Writes `round,agent,cluster,est_0..est_{d-1},mass`.
    pub fn write_csv<W: Write>(&self, spec: &NetworkSpec, out: W) -> Result<()> {
        let dim = self.target.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["round".to_string(), "agent".into(), "cluster".into()];
        header.extend((0..dim).map(|k| format!("est_{k}")));
        header.push("mass".into());
        w.write_record(&header)?;
        for (t, (ests, masses)) in self.estimates.iter().zip(&self.masses).enumerate() {
            for (a, (e, m)) in ests.iter().zip(masses).enumerate() {
                let mut row = vec![t.to_string(), a.to_string(), spec.cluster_of(a).to_string()];
                row.extend(e.iter().map(|x| crate::fmt_f64(*x)));
                row.push(crate::fmt_f64(*m));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }
}

/// Runs hierarchical push-sum for `rounds` rounds, fusing after the local
/// round whenever `t % sync_period == 0`. `observer` sees the engine after
/// every round.
pub fn run_consensus_observed(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    init: &[DVector<f64>],
    rounds: usize,
    sync_period: usize,
    mut observer: impl FnMut(usize, &PushSum),
) -> Result<ConsensusTrace> {
    if sync_period == 0 {
        return Err(Error::ParameterOutOfRange("synchronization period must be >= 1".into()));
    }
    sched.check_covers(spec, rounds)?;
    let mut engine = PushSum::new(spec, init)?;
    let n = spec.num_agents() as f64;
    let target = init.iter().fold(DVector::zeros(engine.dim()), |acc, w| acc + w) / n;

    let mut trace = ConsensusTrace {
        estimates: vec![engine.estimates()?],
        masses: vec![engine.states().iter().map(|s| s.m).collect()],
        total_mass: vec![engine.total_mass()],
        target,
    };
    observer(0, &engine);
    for t in 1..=rounds {
        engine.local_round(sched, t);
        if t % sync_period == 0 {
            engine.ps_fusion();
        }
        trace.estimates.push(engine.estimates()?);
        trace.masses.push(engine.states().iter().map(|s| s.m).collect());
        trace.total_mass.push(engine.total_mass());
        observer(t, &engine);
    }
    Ok(trace)
}

pub fn run_consensus(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    init: &[DVector<f64>],
    rounds: usize,
    sync_period: usize,
) -> Result<ConsensusTrace> {
    run_consensus_observed(spec, sched, init, rounds, sync_period, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{always_on, LinkSchedule};
    use approx::assert_relative_eq;

    fn scalars(values: &[f64]) -> Vec<DVector<f64>> {
        values.iter().map(|&v| DVector::from_element(1, v)).collect()
    }

    fn pair() -> NetworkSpec {
        NetworkSpec::new(2, vec![vec![0, 1]], vec![vec![(0, 1), (1, 0)]]).unwrap()
    }

    #[test]
    fn isolated_agent_is_fixed_point() {
        let spec = NetworkSpec::new(1, vec![vec![0]], vec![vec![]]).unwrap();
        let sched = always_on(&spec, 10);
        let init = vec![DVector::from_vec(vec![3.0, -1.5])];
        let trace = run_consensus(&spec, &sched, &init, 10, 1).unwrap();
        for t in 0..=10 {
            assert_eq!(trace.estimates[t][0], init[0]);
            assert_eq!(trace.masses[t][0], 1.0);
        }
    }

    #[test]
    fn pair_conserves_mass() {
        let spec = pair();
        let sched = always_on(&spec, 20);
        let trace = run_consensus(&spec, &sched, &scalars(&[1.0, 0.0]), 20, 1).unwrap();
        for m in &trace.total_mass {
            assert_relative_eq!(*m, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn dropped_packet_parks_on_virtual_node() {
        // Edge (0,1) drops at t = 1; (1,0) delivers.
        let spec = pair();
        let sched = LinkSchedule::from_fn(&spec, 1, 2, |_, e, t| !(e == 0 && t == 1));
        let mut engine = PushSum::new(&spec, &scalars(&[1.0, 0.0])).unwrap();
        engine.local_round(&sched, 1);
        // d = 1 everywhere. sigma+_0 = 1/2, sent but not received.
        // z+_0 = 1/2 + (sigma+_1 - 0) = 1/2, z_0 = 1/4, sigma_0 = 1/2 + 1/4 = 3/4.
        // rho_{01} stays 0, so the link holds 3/4.
        let parked = engine.virtual_z(0)[0];
        assert_relative_eq!(parked, 0.75, max_relative = 1e-15);
        assert_eq!(engine.state(1).rho[0][0], 0.0);
        assert_relative_eq!(engine.state(0).z[0], 0.25, max_relative = 1e-15);
        assert_relative_eq!(engine.state(1).z[0], 0.0);
        // Mass: sigma~_0 = 1/2 + 1/2 = 1 with nothing received on (0,1).
        assert_relative_eq!(engine.virtual_m(0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(engine.total_mass(), 2.0, max_relative = 1e-15);
        // Total value is conserved too.
        assert_relative_eq!(engine.total_z()[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn fusion_two_clusters() {
        let spec = NetworkSpec::new(2, vec![vec![0], vec![1]], vec![vec![], vec![]]).unwrap();
        let mut engine = PushSum::new(&spec, &scalars(&[4.0, 8.0])).unwrap();
        engine.ps_fusion();
        assert_relative_eq!(engine.state(0).z[0], 0.75 * 4.0 + 0.25 * 8.0);
        assert_relative_eq!(engine.state(1).z[0], 0.25 * 4.0 + 0.75 * 8.0);
        assert_relative_eq!(engine.total_mass(), 2.0);
    }

    #[test]
    fn fusion_single_cluster_is_identity() {
        let spec = pair();
        let mut engine = PushSum::new(&spec, &scalars(&[0.3, 0.7])).unwrap();
        let before = engine.states().to_vec();
        engine.ps_fusion();
        assert_eq!(engine.states(), &before[..]);
    }

    #[test]
    fn fusion_leaves_other_agents_alone() {
        let spec = NetworkSpec::new(
            4,
            vec![vec![0, 1], vec![2, 3]],
            vec![vec![(0, 1), (1, 0)], vec![(2, 3), (3, 2)]],
        )
        .unwrap();
        let mut engine = PushSum::new(&spec, &scalars(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        let msgs = engine.fusion_messages();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[1].half_z[0], 1.5);
        engine.ps_fusion();
        assert_eq!(engine.state(1).z[0], 2.0);
        assert_eq!(engine.state(3).z[0], 4.0);
        assert_relative_eq!(engine.states().iter().map(|s| s.m).sum::<f64>(), 4.0);
    }

    #[test]
    fn constant_init_stays_constant() {
        let spec = crate::topology::generate_sbm(2, 4, 0.5, 8).unwrap();
        let sched = crate::faults::adversarial_schedule(&spec, 40, 3, 1);
        let init = vec![DVector::from_vec(vec![2.5, -1.0]); 8];
        let trace = run_consensus(&spec, &sched, &init, 40, 3).unwrap();
        for t in 0..=40 {
            assert!(trace.max_error(t) < 1e-12);
        }
    }

    #[test]
    fn pair_converges_to_average() {
        let spec = pair();
        let sched = always_on(&spec, 60);
        let trace = run_consensus(&spec, &sched, &scalars(&[1.0, 0.0]), 60, 1).unwrap();
        assert!(trace.max_error(60) < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = pair();
        let sched = always_on(&spec, 5);
        assert!(matches!(
            run_consensus(&spec, &sched, &scalars(&[1.0]), 5, 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(run_consensus(&spec, &sched, &scalars(&[1.0, 0.0]), 5, 0).is_err());
        assert!(matches!(
            run_consensus(&spec, &sched, &scalars(&[1.0, 0.0]), 6, 1),
            Err(Error::IndexMismatch(_))
        ));
    }

    #[test]
    fn zero_mass_is_reported() {
        let spec = pair();
        let mut engine = PushSum::new(&spec, &scalars(&[1.0, 0.0])).unwrap();
        engine.agents[1].m = 0.0;
        assert!(matches!(engine.estimate(1), Err(Error::MassUnderflow { agent: 1, .. })));
    }

    #[test]
    fn trace_csv_columns() {
        let spec = pair();
        let sched = always_on(&spec, 1);
        let trace = run_consensus(&spec, &sched, &scalars(&[1.0, 0.0]), 1, 1).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&spec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round,agent,cluster,est_0,mass"));
        assert_eq!(text.lines().count(), 1 + 2 * 2);
    }
}
