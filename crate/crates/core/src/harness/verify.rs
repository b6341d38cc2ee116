//! Seeded invariant and oracle-equivalence checks, shared by the CLI
//! `verify` command and the acceptance tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimation::ObservationModel;
use crate::faults::{adversarial_schedule, geometric_schedule, LinkSchedule};
use crate::hps::{run_consensus_observed, PushSum};
use crate::oracle::{
    build_f, build_m_with, ergodicity_delta, lemma1_bound, lemma2_floor, propagate_consensus, propagate_tracking,
    psi_sweep, SystemIndexMap,
};
use crate::topology::{derive_constants, generate_clustered, GraphConstants, NetworkSpec};
use crate::tracking::{DynamicsModel, Tracker, TrackingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// A random small clustered network with a window-respecting schedule.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: NetworkSpec,
    pub sched: LinkSchedule,
    pub constants: GraphConstants,
    pub sync_period: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceShape {
    pub max_clusters: usize,
    pub max_nodes: usize,
    pub max_b: usize,
    pub horizon: usize,
    pub adversarial_only: bool,
}

impl Instance {
    pub fn random(seed: u64, shape: InstanceShape) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..=shape.max_clusters);
        let sizes: Vec<usize> = (0..m).map(|_| rng.random_range(1..=shape.max_nodes)).collect();
        let p = rng.random_range(0.3..0.9);
        let mut spec = generate_clustered(&sizes, p, rng.random(), 10_000)?;
        for c in 0..m {
            let members = spec.cluster(c).to_vec();
            spec.set_designated(c, members[rng.random_range(0..members.len())])?;
        }
        let b = rng.random_range(1..=shape.max_b);
        let sched_seed = rng.random();
        let sched = if shape.adversarial_only || rng.random_bool(0.5) {
            adversarial_schedule(&spec, shape.horizon, b, sched_seed)
        } else {
            geometric_schedule(&spec, shape.horizon, b, sched_seed)
        };
        let constants = derive_constants(&spec, b)?;
        let sync_period = constants.sync_period;
        Ok(Instance {
            spec,
            sched,
            constants,
            sync_period,
        })
    }

    pub fn random_init(&self, dim: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
        (0..self.spec.num_agents())
            .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0)))
            .collect()
    }
}

/// Candidate dynamics matrices for the tracking checks.
pub fn dynamics_family() -> Vec<DMatrix<f64>> {
    vec![
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2) * 0.99,
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5])),
    ]
}

/// Largest relative deviation of total mass (agents plus links) from `N`
/// over every round of both engines.
pub fn mass_conservation(seeds: std::ops::Range<u64>, rounds: usize) -> Result<f64> {
    let shape = InstanceShape {
        max_clusters: 3,
        max_nodes: 5,
        max_b: 4,
        horizon: rounds,
        adversarial_only: false,
    };
    let family = dynamics_family();
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let inst = Instance::random(seed, shape)?;
        let n = inst.spec.num_agents() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let init = inst.random_init(2, &mut rng);
        run_consensus_observed(&inst.spec, &inst.sched, &init, rounds, inst.sync_period, |_, e| {
            worst = worst.max((e.total_mass() - n).abs() / n);
        })?;

        let model = ObservationModel::identity(inst.spec.num_agents(), 2, 0.2, &mut rng)?;
        let a = family[(seed % 3) as usize].clone();
        let dynamics = DynamicsModel::new(a, DVector::from_vec(vec![1.0, -1.0]))?;
        let cfg = TrackingConfig {
            lambda1: model.lambda_max(),
            w_radius: 3.0,
        };
        let mut tracker = Tracker::new(&inst.spec, &inst.sched, &model, &dynamics, cfg, Some(inst.sync_period), seed)?;
        for _ in 0..rounds {
            tracker.step()?;
            worst = worst.max((tracker.engine().total_mass() - n).abs() / n);
        }
    }
    Ok(worst)
}

fn equivalence_shape(horizon: usize) -> InstanceShape {
    InstanceShape {
        max_clusters: 2,
        max_nodes: 4,
        max_b: 3,
        horizon,
        adversarial_only: false,
    }
}

fn random_gamma(inst: &Instance, rng: &mut impl Rng) -> usize {
    // Mix the default period with short ones so fusion rounds are frequent.
    if rng.random_bool(0.5) {
        inst.sync_period
    } else {
        rng.random_range(1..=3)
    }
}

/// Largest entrywise gap between the push-sum engine and exact matrix
/// propagation of `(z, m)`, over every round.
pub fn consensus_equivalence(seeds: std::ops::Range<u64>, rounds: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let inst = Instance::random(seed, equivalence_shape(rounds))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
        let gamma = random_gamma(&inst, &mut rng);
        let init = inst.random_init(2, &mut rng);
        let oracle = propagate_consensus(&inst.spec, &inst.sched, &init, rounds, Some(gamma))?;
        let mut engine = PushSum::new(&inst.spec, &init)?;
        for t in 1..=rounds {
            engine.local_round(&inst.sched, t);
            if t % gamma == 0 {
                engine.ps_fusion();
            }
            worst = worst.max((engine.stacked_z() - &oracle.z[t]).amax());
            worst = worst.max((engine.stacked_m() - &oracle.m[t]).amax());
        }
    }
    Ok(worst)
}

/// Largest entrywise gap between the tracking engine's stacked `z` and the
/// Kronecker propagation driven by the engine's own gradient injections.
pub fn tracking_equivalence(seeds: std::ops::Range<u64>, rounds: usize) -> Result<f64> {
    let family = dynamics_family();
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let inst = Instance::random(seed, equivalence_shape(rounds))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7ac);
        let gamma = random_gamma(&inst, &mut rng);
        let model = ObservationModel::identity(inst.spec.num_agents(), 2, 0.2, &mut rng)?;
        for a in &family {
            let dynamics = DynamicsModel::new(a.clone(), DVector::from_vec(vec![2.0, -1.0]))?;
            let cfg = TrackingConfig {
                lambda1: model.lambda_max(),
                w_radius: 5.0,
            };
            let mut tracker = Tracker::new(&inst.spec, &inst.sched, &model, &dynamics, cfg, Some(gamma), seed)?;
            let mut injections = Vec::with_capacity(rounds);
            let mut engine_z = Vec::with_capacity(rounds);
            for _ in 0..rounds {
                tracker.step()?;
                injections.push(tracker.last_injection().to_vec());
                engine_z.push(tracker.engine().stacked_z());
            }
            let oracle = propagate_tracking(&inst.spec, &inst.sched, a, &injections, Some(gamma))?;
            for (t, z) in engine_z.iter().enumerate() {
                worst = worst.max((z - &oracle[t + 1]).amax());
            }
        }
    }
    Ok(worst)
}

/// Summary of the matrix-structure checks over a set of instances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructureReport {
    /// Largest `|column sum - 1|` over every `M[t]`, or a negative entry.
    pub column_sum_gap: f64,
    pub min_entry: f64,
    /// Largest deviation of `F` from double stochasticity.
    pub fusion_gap: f64,
    pub floor_windows: usize,
    pub floor_violations: usize,
    /// Violating windows that contain an exact zero (unreachable pairs).
    pub floor_zero_windows: usize,
    /// Windows whose agent-to-agent block alone falls below the floor.
    pub floor_agent_violations: usize,
    /// Same, counting only windows that start right after a multiple of `2Γ`.
    pub floor_aligned_windows: usize,
    pub floor_aligned_violations: usize,
    pub ergodicity_pairs: usize,
    pub ergodicity_violations: usize,
    /// Pairs with `⌊t/2Γ⌋ >= ⌈r/2Γ⌉` above the smooth rate `γ^{(t-r)/2Γ}`.
    pub ergodicity_smooth_pairs: usize,
    pub ergodicity_smooth_violations: usize,
    /// Largest `δ(Ψ) - bound` seen (negative when the bound always holds).
    pub ergodicity_worst_margin: f64,
}

/// Column stochasticity of every `M[t]`, double stochasticity of `F`, the
/// entry floor of `Ψ` over every window of length `2Γ`, and the ergodicity
/// rate bound for every `(r, t)` pair.
pub fn matrix_structure(seeds: std::ops::Range<u64>, rounds: usize) -> Result<StructureReport> {
    let shape = InstanceShape {
        max_clusters: 3,
        max_nodes: 3,
        max_b: 2,
        horizon: rounds,
        adversarial_only: false,
    };
    let mut rep = StructureReport {
        min_entry: f64::INFINITY,
        ergodicity_worst_margin: f64::NEG_INFINITY,
        ..Default::default()
    };
    for seed in seeds {
        let inst = Instance::random(seed, shape)?;
        let gamma = inst.sync_period;
        let map = SystemIndexMap::new(&inst.spec);
        let agent_rows = map.agent_rows(&inst.spec);
        for t in 1..=rounds {
            let m = build_m_with(&map, &inst.spec, &inst.sched, t, Some(gamma))?.matrix;
            for col in m.column_iter() {
                rep.column_sum_gap = rep.column_sum_gap.max((col.sum() - 1.0).abs());
            }
            rep.min_entry = rep.min_entry.min(m.min());
        }
        let f = build_f(&inst.spec);
        for k in 0..f.nrows() {
            rep.fusion_gap = rep.fusion_gap.max((f.row(k).sum() - 1.0).abs());
            rep.fusion_gap = rep.fusion_gap.max((f.column(k).sum() - 1.0).abs());
        }

        let floor = lemma2_floor(&inst.constants);
        let window = 2 * gamma;
        for r in 1..=rounds {
            let sweep = psi_sweep(&inst.spec, &inst.sched, r, rounds, Some(gamma))?;
            for (k, p) in sweep.iter().enumerate().skip(1) {
                let t = r + k - 1;
                if k == window {
                    rep.floor_windows += 1;
                    let aligned = (r - 1) % window == 0;
                    if aligned {
                        rep.floor_aligned_windows += 1;
                    }
                    if p.min() < floor {
                        rep.floor_violations += 1;
                        if p.min() == 0.0 {
                            rep.floor_zero_windows += 1;
                        }
                        if aligned {
                            rep.floor_aligned_violations += 1;
                        }
                    }
                    let agent_min = agent_rows
                        .iter()
                        .flat_map(|&i| agent_rows.iter().map(move |&j| (i, j)))
                        .map(|ij| p[ij])
                        .fold(f64::INFINITY, f64::min);
                    if agent_min < floor {
                        rep.floor_agent_violations += 1;
                    }
                }
                let delta = ergodicity_delta(p)?;
                let bound = lemma1_bound(&inst.constants, r, t);
                rep.ergodicity_pairs += 1;
                rep.ergodicity_worst_margin = rep.ergodicity_worst_margin.max(delta - bound);
                if delta > bound + 1e-12 {
                    rep.ergodicity_violations += 1;
                }
                if t / window >= r.div_ceil(window) {
                    rep.ergodicity_smooth_pairs += 1;
                    let smooth = ((t - r) as f64 / window as f64 * inst.constants.ln_gamma).exp();
                    if delta > smooth + 1e-12 {
                        rep.ergodicity_smooth_violations += 1;
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Every check at a size suitable for an interactive run.
pub fn run_all(seed_count: u64) -> Result<Vec<CheckOutcome>> {
    run_all_from(0, seed_count)
}

/// [`run_all`] over instance seeds `first..first + count`.
pub fn run_all_from(first: u64, count: u64) -> Result<Vec<CheckOutcome>> {
    let seeds = first..first + count;
    let mut out = Vec::new();
    let mass = mass_conservation(seeds.clone(), 200)?;
    out.push(CheckOutcome {
        name: "mass conservation".into(),
        passed: mass <= 1e-9,
        detail: format!("worst relative drift {mass:.3e} (limit 1e-9)"),
    });
    let cons = consensus_equivalence(seeds.clone(), 50)?;
    out.push(CheckOutcome {
        name: "consensus oracle equivalence".into(),
        passed: cons <= 1e-9,
        detail: format!("worst entry gap {cons:.3e} (limit 1e-9)"),
    });
    let tr = tracking_equivalence(seeds.clone(), 50)?;
    out.push(CheckOutcome {
        name: "tracking oracle equivalence".into(),
        passed: tr <= 1e-9,
        detail: format!("worst entry gap {tr:.3e} (limit 1e-9)"),
    });
    let s = matrix_structure(first..first + count.min(10), 24)?;
    out.push(CheckOutcome {
        name: "transition matrices column stochastic".into(),
        passed: s.column_sum_gap <= 1e-12 && s.min_entry >= 0.0,
        detail: format!("worst column-sum gap {:.3e}, min entry {:.3e}", s.column_sum_gap, s.min_entry),
    });
    out.push(CheckOutcome {
        name: "fusion matrix doubly stochastic".into(),
        passed: s.fusion_gap <= 1e-12,
        detail: format!("worst gap {:.3e}", s.fusion_gap),
    });
    out.push(CheckOutcome {
        name: "entry floor over 2Γ windows".into(),
        passed: s.floor_violations == 0,
        detail: format!(
            "{} of {} windows below the floor, {} with exact zeros ({} of {} fusion-aligned; {} on agent entries alone)",
            s.floor_violations,
            s.floor_windows,
            s.floor_zero_windows,
            s.floor_aligned_violations,
            s.floor_aligned_windows,
            s.floor_agent_violations
        ),
    });
    out.push(CheckOutcome {
        name: "ergodicity rate".into(),
        passed: s.ergodicity_violations == 0 && s.ergodicity_smooth_violations == 0,
        detail: format!(
            "{} of {} (r, t) pairs above the block-count bound, {} of {} above the smooth rate",
            s.ergodicity_violations, s.ergodicity_pairs, s.ergodicity_smooth_violations, s.ergodicity_smooth_pairs
        ),
    });
    Ok(out)
}
