use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::{adversarial_schedule, always_on, geometric_schedule, LinkSchedule};
use crate::topology::{derive_constants, generate_sbm, NetworkSpec};

/// Where the network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    /// 16-agent, 3-cluster tree layout.
    Uwa { seed: u64 },
    Sbm {
        clusters: usize,
        nodes_per_cluster: usize,
        edge_prob: f64,
        seed: u64,
    },
    /// TOML network file; relative paths resolve against the scenario file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    AlwaysOn,
    Geometric,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultModel {
    pub kind: FaultKind,
    /// Window length; ignored (treated as 1) for `always_on`.
    #[serde(default = "one")]
    pub b: usize,
}

fn one() -> usize {
    1
}

impl FaultModel {
    pub fn window(&self) -> usize {
        match self.kind {
            FaultKind::AlwaysOn => 1,
            _ => self.b.max(1),
        }
    }

    pub fn schedule(&self, spec: &NetworkSpec, horizon: usize, seed: u64) -> LinkSchedule {
        match self.kind {
            FaultKind::AlwaysOn => always_on(spec, horizon),
            FaultKind::Geometric => geometric_schedule(spec, horizon, self.window(), seed),
            FaultKind::Adversarial => adversarial_schedule(spec, horizon, self.window(), seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// Average consensus on standard-normal initial vectors.
    Consensus { dim: usize },
    /// Static-state estimation with partial Gaussian observation matrices.
    Estimation {
        dim: usize,
        noise_sigma_bar: f64,
        /// Multiplies the `1/√t` step schedule.
        step_scale: f64,
        /// Feasible radius as a multiple of `‖w*‖`.
        #[serde(default = "ten")]
        radius_factor: f64,
    },
    /// Tracking `w*[t] = a w*[t-1]` with `H = I` at every agent.
    Tracking {
        dim: usize,
        noise_sigma_bar: f64,
        a: f64,
        /// Feasible radius as a multiple of `‖w*[0]‖`.
        #[serde(default = "two")]
        radius_factor: f64,
    },
}

fn ten() -> f64 {
    10.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    /// `λ`, the cost of an ordinary round.
    pub unit: f64,
    /// Extra cost of parameter-server and bridge traffic, in units of `λ`.
    pub ps_multiplier: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            unit: 1.0,
            ps_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    /// Synchronization period; defaults to `max(1, B D*)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    /// Also run the merged single-network baseline.
    #[serde(default)]
    pub baseline: bool,
    /// Seed for the baseline's bridge placement.
    #[serde(default)]
    pub bridge_seed: u64,
    pub network: NetworkSource,
    pub faults: FaultModel,
    pub task: Task,
    #[serde(default)]
    pub delay: DelayModel,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Reads a scenario and resolves a relative network path against the
    /// scenario file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::from_toml(&text)?;
        if let NetworkSource::File { path: p } = &mut s.network {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn build_network(&self) -> Result<NetworkSpec> {
        match &self.network {
            NetworkSource::Uwa { seed } => Ok(super::build_uwa_like(*seed)),
            NetworkSource::Sbm {
                clusters,
                nodes_per_cluster,
                edge_prob,
                seed,
            } => generate_sbm(*clusters, *nodes_per_cluster, *edge_prob, *seed),
            NetworkSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                NetworkSpec::from_toml(&text)
            }
        }
    }

    /// Effective synchronization period for `spec`.
    pub fn sync_period(&self, spec: &NetworkSpec) -> Result<usize> {
        match self.gamma {
            Some(g) => Ok(g),
            None => Ok(derive_constants(spec, self.faults.window())?.sync_period),
        }
    }

    /// Checks everything that does not need the network.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(format!("{}: {msg}", self.name)));
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        if self.gamma == Some(0) {
            return bad("gamma must be >= 1".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if !(self.delay.unit > 0.0 && self.delay.ps_multiplier >= 0.0) {
            return bad("delay unit must be positive".into());
        }
        let (dim, sigma) = match &self.task {
            Task::Consensus { dim } => (*dim, 0.0),
            Task::Estimation {
                dim,
                noise_sigma_bar,
                step_scale,
                radius_factor,
            } => {
                if !(*step_scale > 0.0 && *radius_factor > 0.0) {
                    return bad("step scale and radius factor must be positive".into());
                }
                (*dim, *noise_sigma_bar)
            }
            Task::Tracking {
                dim,
                noise_sigma_bar,
                a,
                radius_factor,
            } => {
                if !(0.0..=1.0).contains(a) || !(*radius_factor >= 1.0) {
                    return bad("need 0 <= a <= 1 and radius factor >= 1".into());
                }
                (*dim, *noise_sigma_bar)
            }
        };
        if dim == 0 || !(sigma >= 0.0) {
            return bad("need dim >= 1 and noise >= 0".into());
        }
        Ok(())
    }

    /// Full validation including `T >= 2Γ`.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<usize> {
        self.check()?;
        let gamma = self.sync_period(spec)?;
        if self.rounds < 2 * gamma {
            return Err(Error::InvalidScenario(format!(
                "{}: {} rounds is fewer than 2Γ = {}",
                self.name,
                self.rounds,
                2 * gamma
            )));
        }
        if self.baseline && spec.num_clusters() < 2 {
            return Err(Error::InvalidScenario(format!(
                "{}: the baseline needs at least two clusters",
                self.name
            )));
        }
        Ok(gamma)
    }

    /// Example scenarios, one per task.
    pub fn examples() -> Vec<Scenario> {
        vec![
            Scenario {
                name: "consensus-sbm".into(),
                rounds: 400,
                seeds: (0..5).collect(),
                gamma: None,
                baseline: false,
                bridge_seed: 0,
                network: NetworkSource::Sbm {
                    clusters: 3,
                    nodes_per_cluster: 5,
                    edge_prob: 0.4,
                    seed: 1,
                },
                faults: FaultModel {
                    kind: FaultKind::Geometric,
                    b: 2,
                },
                task: Task::Consensus { dim: 2 },
                delay: DelayModel::default(),
            },
            Scenario {
                name: "estimation-uwa".into(),
                rounds: 20_000,
                seeds: (0..10).collect(),
                gamma: None,
                baseline: true,
                bridge_seed: 0,
                network: NetworkSource::Uwa { seed: 0 },
                faults: FaultModel {
                    kind: FaultKind::Geometric,
                    b: 2,
                },
                task: Task::Estimation {
                    dim: 9,
                    noise_sigma_bar: 0.2,
                    step_scale: 0.05,
                    radius_factor: 10.0,
                },
                delay: DelayModel::default(),
            },
            Scenario {
                name: "tracking-sbm".into(),
                rounds: 1000,
                seeds: (0..10).collect(),
                gamma: None,
                baseline: false,
                bridge_seed: 0,
                network: NetworkSource::Sbm {
                    clusters: 8,
                    nodes_per_cluster: 8,
                    edge_prob: 0.3,
                    seed: 42,
                },
                faults: FaultModel {
                    kind: FaultKind::Geometric,
                    b: 2,
                },
                task: Task::Tracking {
                    dim: 2,
                    noise_sigma_bar: 0.2,
                    a: 0.99,
                    radius_factor: 2.0,
                },
                delay: DelayModel::default(),
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_round_trip_and_validate() {
        for s in Scenario::examples() {
            let text = s.to_toml().unwrap();
            assert_eq!(Scenario::from_toml(&text).unwrap(), s);
            let spec = s.build_network().unwrap();
            s.validate(&spec).unwrap();
        }
    }

    #[test]
    fn parses_minimal_file() {
        let text = r#"
            name = "tiny"
            rounds = 20
            seeds = [1, 2]

            [network]
            kind = "sbm"
            clusters = 2
            nodes_per_cluster = 3
            edge_prob = 0.5
            seed = 3

            [faults]
            kind = "always_on"

            [task]
            kind = "consensus"
            dim = 1
        "#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.faults.window(), 1);
        assert_eq!(s.delay, DelayModel::default());
        assert!(!s.baseline);
    }

    #[test]
    fn rejects_bad_values() {
        let mut s = Scenario::examples().remove(0);
        let spec = s.build_network().unwrap();
        s.gamma = Some(0);
        assert!(matches!(s.validate(&spec), Err(Error::InvalidScenario(_))));
        s.gamma = Some(300);
        assert!(matches!(s.validate(&spec), Err(Error::InvalidScenario(_))));
        s.gamma = None;
        s.seeds.clear();
        assert!(s.check().is_err());
        assert!(Scenario::from_toml("name = 1").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = Scenario::examples()[0].to_toml().unwrap();
        text.push_str("\nsurprise = 1\n");
        assert!(Scenario::from_toml(&text).is_err());
    }
}
