use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{account_delay, baseline_schedule, bridge_active, build_single_network_baseline, sub_seed, Scenario, Task};
use crate::error::{Error, Result};
use crate::estimation::{EstimationConfig, Estimator, ObservationModel};
use crate::faults::LinkSchedule;
use crate::hps::run_consensus_observed;
use crate::oracle::{theorem1_bound, theorem2_bound, theorem3_bounds, Theorem2Params, Theorem3Params};
use crate::topology::{derive_constants, GraphConstants, NetworkSpec};
use crate::tracking::{DynamicsModel, Tracker, TrackingConfig, TrackingConstants, TrackingTrace};

const STREAM_SCHEDULE: u64 = 0;
const STREAM_MODEL: u64 = 1;
const STREAM_TRUTH: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_BRIDGES: u64 = 4;

/// Confidence parameter used when attaching high-probability bounds.
pub const BOUND_DELTA: f64 = 0.05;

/// One round of one run. Round 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    /// Cumulative delay in units of `λ`.
    pub cumulative_delay: f64,
    pub agent_errors: Vec<f64>,
    pub mean_error: f64,
    pub max_error: f64,
    pub bound: Option<f64>,
    /// Tracking only: bound on `‖w_j - z̄‖`, every agent.
    pub residual_bound: Option<f64>,
}

impl MetricsRecord {
    fn new(round: usize, cumulative_delay: f64, agent_errors: Vec<f64>, bound: Option<f64>) -> Self {
        let mean_error = agent_errors.iter().sum::<f64>() / agent_errors.len() as f64;
        let max_error = agent_errors.iter().copied().fold(0.0, f64::max);
        MetricsRecord {
            round,
            cumulative_delay,
            agent_errors,
            mean_error,
            max_error,
            bound,
            residual_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub trajectory: Option<TrackingTrace>,
}

impl RunOutput {
    /// First cumulative delay at which the mean error drops to `threshold`,
    /// linearly interpolated between rounds.
    pub fn delay_to_threshold(&self, threshold: f64) -> Option<f64> {
        delay_to_threshold(
            self.records.iter().map(|r| (r.cumulative_delay, r.mean_error)),
            threshold,
        )
    }
}

/// Seed statistics of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRecord {
    pub round: usize,
    pub cumulative_delay: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub min_error: f64,
    pub max_error: f64,
    /// Largest bound over seeds.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub label: String,
    pub sync_period: Option<usize>,
    pub runs: Vec<RunOutput>,
    pub mean: Vec<MeanRecord>,
}

impl RunSet {
    fn new(label: &str, sync_period: Option<usize>, runs: Vec<RunOutput>) -> Self {
        let rounds = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
        let k = runs.len() as f64;
        let mean = (0..rounds)
            .map(|t| {
                let errs: Vec<f64> = runs.iter().map(|r| r.records[t].mean_error).collect();
                let mean = errs.iter().sum::<f64>() / k;
                let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / k;
                let bound = runs
                    .iter()
                    .map(|r| r.records[t].bound)
                    .try_fold(f64::NEG_INFINITY, |acc, b| b.map(|b| acc.max(b)));
                MeanRecord {
                    round: t,
                    cumulative_delay: runs.iter().map(|r| r.records[t].cumulative_delay).sum::<f64>() / k,
                    mean_error: mean,
                    std_error: var.sqrt(),
                    min_error: errs.iter().copied().fold(f64::INFINITY, f64::min),
                    max_error: errs.iter().copied().fold(0.0, f64::max),
                    bound,
                }
            })
            .collect();
        RunSet {
            label: label.to_string(),
            sync_period,
            runs,
            mean,
        }
    }

    /// Delay-to-threshold of the seed-mean curve, threshold relative to its
    /// round-0 error.
    pub fn mean_delay_to_fraction(&self, fraction: f64) -> Option<f64> {
        let initial = self.mean.first()?.mean_error;
        delay_to_threshold(
            self.mean.iter().map(|r| (r.cumulative_delay, r.mean_error)),
            fraction * initial,
        )
    }
}

fn delay_to_threshold(points: impl Iterator<Item = (f64, f64)>, threshold: f64) -> Option<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for (x, y) in points {
        if y <= threshold {
            return Some(match prev {
                Some((px, py)) if py > y => px + (x - px) * (py - threshold) / (py - y),
                _ => x,
            });
        }
        prev = Some((x, y));
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub hierarchical: RunSet,
    pub baseline: Option<RunSet>,
}

/// Per-seed problem instance shared by the hierarchical and baseline runs.
enum Problem {
    Consensus(Vec<DVector<f64>>),
    Estimation {
        model: ObservationModel,
        w_star: DVector<f64>,
        cfg: EstimationConfig,
    },
    Tracking {
        model: ObservationModel,
        dynamics: DynamicsModel,
        cfg: TrackingConfig,
    },
}

fn normal_vector(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

fn build_problem(task: &Task, clustered: &NetworkSpec, seed: u64) -> Result<Problem> {
    let mut model_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_MODEL));
    let mut truth_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, STREAM_TRUTH));
    let n = clustered.num_agents();
    Ok(match task {
        Task::Consensus { dim } => Problem::Consensus((0..n).map(|_| normal_vector(*dim, &mut truth_rng)).collect()),
        Task::Estimation {
            dim,
            noise_sigma_bar,
            step_scale,
            radius_factor,
        } => {
            let model = ObservationModel::partial(clustered, *dim, *noise_sigma_bar, &mut model_rng)?;
            let w_star = normal_vector(*dim, &mut truth_rng);
            let cfg = EstimationConfig {
                step_scale: *step_scale,
                w_radius: radius_factor * w_star.norm(),
            };
            Problem::Estimation { model, w_star, cfg }
        }
        Task::Tracking {
            dim,
            noise_sigma_bar,
            a,
            radius_factor,
        } => {
            let model = ObservationModel::identity(n, *dim, *noise_sigma_bar, &mut model_rng)?;
            let w0 = normal_vector(*dim, &mut truth_rng);
            let cfg = TrackingConfig {
                lambda1: model.lambda_max(),
                w_radius: radius_factor * w0.norm(),
            };
            let dynamics = DynamicsModel::scalar(*a, w0)?;
            Problem::Tracking { model, dynamics, cfg }
        }
    })
}

fn bound_constants(spec: &NetworkSpec, b: usize, sync_period: Option<usize>) -> Result<Option<GraphConstants>> {
    match sync_period {
        Some(p) => Ok(Some(derive_constants(spec, b)?.with_sync_period(p))),
        None => Ok(None),
    }
}

/// Runs one seed on one network. `sync_period = None` is a single-network
/// run without fusion; its delay follows the bridge rule.
pub fn run_seed(
    scenario: &Scenario,
    problem_spec: &NetworkSpec,
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    sync_period: Option<usize>,
    seed: u64,
) -> Result<RunOutput> {
    let problem = build_problem(&scenario.task, problem_spec, seed)?;
    run_problem(scenario, &problem, spec, sched, sync_period, seed)
}

fn run_problem(
    scenario: &Scenario,
    problem: &Problem,
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    sync_period: Option<usize>,
    seed: u64,
) -> Result<RunOutput> {
    let rounds = scenario.rounds;
    let constants = bound_constants(spec, scenario.faults.window(), sync_period)?;
    let period = constants.as_ref().map(|c| 2 * c.sync_period);
    let mut delay = 0.0;
    let mut step_delay = |t: usize| {
        delay += account_delay(t, sync_period, sync_period.is_none() && bridge_active(spec, sched, t), &scenario.delay);
        delay
    };
    let noise_seed = sub_seed(seed, STREAM_NOISE);
    let n = spec.num_agents();
    let mut records = Vec::with_capacity(rounds + 1);
    let mut trajectory = None;

    match problem {
        Problem::Consensus(init) => {
            let norm_sum: f64 = init.iter().map(|w| w.norm()).sum();
            let trace = run_consensus_observed(spec, sched, init, rounds, sync_period.unwrap_or(usize::MAX), |_, _| {})?;
            for t in 0..=rounds {
                let d = if t == 0 { 0.0 } else { step_delay(t) };
                let bound = match &constants {
                    Some(c) if t >= 2 * c.sync_period => Some(theorem1_bound(c, norm_sum, n, t)?),
                    _ => None,
                };
                records.push(MetricsRecord::new(t, d, trace.errors(t), bound));
            }
        }
        Problem::Estimation { model, w_star, cfg } => {
            let mut est = Estimator::new(spec, sched, model, cfg.clone(), w_star.clone(), sync_period, noise_seed)?;
            records.push(MetricsRecord::new(0, 0.0, vec![w_star.norm(); n], None));
            let r0 = 2.0 * cfg.w_radius;
            let params = Theorem2Params {
                num_agents: n,
                lambda_min: model.lambda_min(),
                l0: model.l0(r0),
                l: r0 * model.lambda_max(),
                r_squared: cfg.r_squared(w_star),
                delta: BOUND_DELTA,
            };
            for t in 1..=rounds {
                est.step()?;
                let errors = (0..n).map(|j| (est.running_average(j) - w_star).norm()).collect();
                let bound = match &constants {
                    Some(c) if Some(t) >= period => Some(theorem2_bound(c, &params, |r| cfg.eta(r), t)?.sqrt()),
                    _ => None,
                };
                records.push(MetricsRecord::new(t, step_delay(t), errors, bound));
            }
        }
        Problem::Tracking { model, dynamics, cfg } => {
            let mut tracker = Tracker::new(spec, sched, model, dynamics, cfg.clone(), sync_period, noise_seed)?;
            records.push(MetricsRecord::new(0, 0.0, vec![dynamics.w_star_0().norm(); n], None));
            let params = match &constants {
                Some(c) => {
                    let tc = TrackingConstants::new(c, dynamics.a_norm())?;
                    Some(Theorem3Params {
                        dim: dynamics.dim(),
                        lambda1: model.lambda_max(),
                        lambda_d: model.lambda_min(),
                        l0: model.l0(2.0 * cfg.w_radius),
                        b0: model.b0(),
                        w_star_0_norm: dynamics.w_star_0().norm(),
                        delta: BOUND_DELTA,
                        b: tc.b,
                        one_minus_b: tc.one_minus_b,
                        t0: tc.t0,
                        t_bar0: tc.t_bar0,
                    })
                }
                None => None,
            };
            let mut trace = TrackingTrace {
                estimates: Vec::with_capacity(rounds),
                truth: Vec::with_capacity(rounds),
                errors: Vec::with_capacity(rounds),
                residuals: Vec::with_capacity(rounds),
                total_mass: Vec::with_capacity(rounds),
            };
            for t in 1..=rounds {
                tracker.step()?;
                let truth = tracker.truth().clone();
                let z_bar = tracker.z_bar();
                let estimates: Vec<DVector<f64>> = (0..n).map(|j| tracker.estimate(j).clone()).collect();
                let errors: Vec<f64> = estimates.iter().map(|w| (w - &truth).norm()).collect();
                trace.residuals.push(estimates.iter().map(|w| (w - &z_bar).norm()).collect());
                trace.total_mass.push(tracker.engine().total_mass());
                let bounds = match (&constants, &params) {
                    (Some(c), Some(p)) => Some(theorem3_bounds(c, p, t)?),
                    _ => None,
                };
                let mut record = MetricsRecord::new(t, step_delay(t), errors.clone(), bounds.and_then(|b| b.error));
                record.residual_bound = bounds.map(|b| b.residual);
                records.push(record);
                trace.errors.push(errors);
                trace.estimates.push(estimates);
                trace.truth.push(truth);
            }
            trajectory = Some(trace);
        }
    }
    Ok(RunOutput {
        seed,
        records,
        trajectory,
    })
}

fn with_context<T>(scenario: &Scenario, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Scenario {
        scenario: scenario.name.clone(),
        seed,
        source: Box::new(e),
    })
}

/// Runs every seed (in parallel, one thread per seed) and, when requested,
/// the single-network baseline on the same problems and link fates. Writes
/// CSVs under `out_dir/<name>/` when `out_dir` is given.
pub fn run_scenario(scenario: &Scenario, out_dir: Option<&Path>) -> Result<ScenarioResult> {
    let spec = scenario.build_network()?;
    let gamma = scenario.validate(&spec)?;
    let merged = if scenario.baseline {
        Some(build_single_network_baseline(&spec, scenario.bridge_seed)?)
    } else {
        None
    };

    let outcomes: Vec<Result<(RunOutput, Option<RunOutput>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenario
            .seeds
            .iter()
            .map(|&seed| {
                let spec = &spec;
                let merged = merged.as_ref();
                s.spawn(move || {
                    with_context(scenario, seed, run_pair(scenario, spec, merged, gamma, seed))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });

    let mut hier = Vec::new();
    let mut base = Vec::new();
    for o in outcomes {
        let (h, b) = o?;
        hier.push(h);
        base.extend(b);
    }
    let result = ScenarioResult {
        name: scenario.name.clone(),
        hierarchical: RunSet::new("hierarchical", Some(gamma), hier),
        baseline: merged.as_ref().map(|_| RunSet::new("baseline", None, base)),
    };
    if let Some(dir) = out_dir {
        let dir = dir.join(&scenario.name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_run_set(&result.hierarchical, &spec, &dir, "")?;
        if let (Some(set), Some(m)) = (&result.baseline, &merged) {
            write_run_set(set, m, &dir, "baseline_")?;
        }
    }
    Ok(result)
}

fn run_pair(
    scenario: &Scenario,
    spec: &NetworkSpec,
    merged: Option<&NetworkSpec>,
    gamma: usize,
    seed: u64,
) -> Result<(RunOutput, Option<RunOutput>)> {
    let problem = build_problem(&scenario.task, spec, seed)?;
    let sched = scenario.faults.schedule(spec, scenario.rounds, sub_seed(seed, STREAM_SCHEDULE));
    let hier = run_problem(scenario, &problem, spec, &sched, Some(gamma), seed)?;
    let base = match merged {
        Some(m) => {
            let bridges = scenario.faults.schedule(m, scenario.rounds, sub_seed(seed, STREAM_BRIDGES));
            let base_sched = baseline_schedule(spec, &sched, m, &bridges);
            Some(run_problem(scenario, &problem, m, &base_sched, None, seed)?)
        }
        None => None,
    };
    Ok((hier, base))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn opt(x: Option<f64>) -> String {
    x.map(crate::fmt_f64).unwrap_or_default()
}

/// Writes `{prefix}seed_<s>.csv` (per agent), `{prefix}seed_<s>_summary.csv`,
/// `{prefix}mean.csv` and, for tracking, `{prefix}trajectory_seed_<s>.csv`.
pub fn write_run_set(set: &RunSet, spec: &NetworkSpec, dir: &Path, prefix: &str) -> Result<()> {
    use crate::fmt_f64 as f;
    for run in &set.runs {
        let mut w = csv_writer(&dir.join(format!("{prefix}seed_{}.csv", run.seed)))?;
        w.write_record(["round", "cumulative_delay", "agent", "cluster", "l2_error"])?;
        for r in &run.records {
            for (a, e) in r.agent_errors.iter().enumerate() {
                w.write_record([
                    r.round.to_string(),
                    f(r.cumulative_delay),
                    a.to_string(),
                    spec.cluster_of(a).to_string(),
                    f(*e),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        let mut w = csv_writer(&dir.join(format!("{prefix}seed_{}_summary.csv", run.seed)))?;
        w.write_record(["round", "cumulative_delay", "mean_error", "max_error", "bound"])?;
        for r in &run.records {
            w.write_record([
                r.round.to_string(),
                f(r.cumulative_delay),
                f(r.mean_error),
                f(r.max_error),
                opt(r.bound),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        if let Some(traj) = &run.trajectory {
            let path = dir.join(format!("{prefix}trajectory_seed_{}.csv", run.seed));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            traj.write_csv(BufWriter::new(file))?;
        }
    }
    let mut w = csv_writer(&dir.join(format!("{prefix}mean.csv")))?;
    w.write_record([
        "round",
        "cumulative_delay",
        "mean_error",
        "std_error",
        "min_error",
        "max_error",
        "bound",
    ])?;
    for r in &set.mean {
        w.write_record([
            r.round.to_string(),
            f(r.cumulative_delay),
            f(r.mean_error),
            f(r.std_error),
            f(r.min_error),
            f(r.max_error),
            opt(r.bound),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{DelayModel, FaultKind, FaultModel, NetworkSource};
    use super::*;

    fn consensus_pair() -> Scenario {
        Scenario {
            name: "pair".into(),
            rounds: 60,
            seeds: vec![0, 1],
            gamma: None,
            baseline: false,
            bridge_seed: 0,
            network: NetworkSource::Sbm {
                clusters: 1,
                nodes_per_cluster: 2,
                edge_prob: 1.0,
                seed: 0,
            },
            faults: FaultModel {
                kind: FaultKind::AlwaysOn,
                b: 1,
            },
            task: Task::Consensus { dim: 2 },
            delay: DelayModel::default(),
        }
    }

    #[test]
    fn reliable_pair_reaches_consensus() {
        let result = run_scenario(&consensus_pair(), None).unwrap();
        for run in &result.hierarchical.runs {
            assert!(run.records.last().unwrap().max_error < 1e-8);
        }
    }

    #[test]
    fn delay_is_non_decreasing_and_bounded_below() {
        let result = run_scenario(&consensus_pair(), None).unwrap();
        let recs = &result.hierarchical.runs[0].records;
        assert!(recs.windows(2).all(|w| w[1].cumulative_delay > w[0].cumulative_delay));
        // Γ = 1 on a single-hop cluster: 3λ per round.
        assert_eq!(recs[60].cumulative_delay, 180.0);
    }

    #[test]
    fn identical_scenarios_write_identical_csv() {
        let s = consensus_pair();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_scenario(&s, Some(a.path())).unwrap();
        run_scenario(&s, Some(b.path())).unwrap();
        for name in ["seed_0.csv", "seed_1_summary.csv", "mean.csv"] {
            let x = std::fs::read(a.path().join("pair").join(name)).unwrap();
            let y = std::fs::read(b.path().join("pair").join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn threshold_interpolation() {
        let pts = [(0.0, 1.0), (2.0, 0.5), (4.0, 0.0)];
        assert_eq!(delay_to_threshold(pts.into_iter(), 0.75), Some(1.0));
        assert_eq!(delay_to_threshold(pts.into_iter(), 1.0), Some(0.0));
        assert_eq!(delay_to_threshold(pts.into_iter(), -1.0), None);
    }

    #[test]
    fn seed_mean_moves_less_than_any_seed_deviation() {
        let mut s = consensus_pair();
        s.faults = FaultModel {
            kind: FaultKind::Geometric,
            b: 3,
        };
        s.network = NetworkSource::Sbm {
            clusters: 2,
            nodes_per_cluster: 3,
            edge_prob: 0.6,
            seed: 1,
        };
        s.gamma = Some(4);
        s.seeds = vec![0, 1, 2];
        let three = run_scenario(&s, None).unwrap().hierarchical;
        s.seeds.push(3);
        let four = run_scenario(&s, None).unwrap().hierarchical;
        for t in 0..=s.rounds {
            let shift = (four.mean[t].mean_error - three.mean[t].mean_error).abs();
            let new = four.runs[3].records[t].mean_error;
            assert!(shift <= (new - three.mean[t].mean_error).abs() + 1e-15);
        }
    }

    #[test]
    fn estimation_and_tracking_run_with_baseline() {
        let mut est = Scenario::examples().remove(1);
        est.rounds = 40;
        est.seeds = vec![0, 1];
        let r = run_scenario(&est, None).unwrap();
        let base = r.baseline.unwrap();
        assert_eq!(base.runs.len(), 2);
        // Same truth: identical round-0 errors.
        assert_eq!(base.runs[0].records[0].mean_error, r.hierarchical.runs[0].records[0].mean_error);

        let mut tr = Scenario::examples().remove(2);
        tr.rounds = 30;
        tr.seeds = vec![5];
        tr.baseline = true;
        let dir = tempfile::tempdir().unwrap();
        run_scenario(&tr, Some(dir.path())).unwrap();
        assert!(dir.path().join("tracking-sbm/trajectory_seed_5.csv").exists());
        assert!(dir.path().join("tracking-sbm/baseline_mean.csv").exists());
    }

    #[test]
    fn too_few_rounds_is_rejected() {
        let mut s = consensus_pair();
        s.gamma = Some(5);
        s.rounds = 9;
        assert!(matches!(run_scenario(&s, None), Err(Error::InvalidScenario(_))));
    }
}
