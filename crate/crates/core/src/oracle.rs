//! Dense matrix reference model of the push-sum dynamics.
//!
//! Every cluster's augmented graph (agents plus one virtual node per edge) is
//! laid out in a single global index space. `M[t]` is the column-stochastic
//! map `z[t] = M[t] z[t-1]`; on fusion rounds it is `F M̄[t]`. The bounds at
//! the bottom are evaluated in log space because the graph constants
//! underflow long before they become interesting.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::faults::LinkSchedule;
use crate::topology::{build_augmented, AugmentedGraph, Edge, GraphConstants, NetworkSpec};

const STOCHASTIC_TOL: f64 = 1e-9;

/// Global numbering of all augmented nodes; cluster blocks in order, agents
/// first within each block.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemIndexMap {
    graphs: Vec<AugmentedGraph>,
    offsets: Vec<usize>,
    total: usize,
}

impl SystemIndexMap {
    pub fn new(spec: &NetworkSpec) -> Self {
        let graphs: Vec<AugmentedGraph> = (0..spec.num_clusters()).map(|c| build_augmented(spec, c)).collect();
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut total = 0;
        for g in &graphs {
            offsets.push(total);
            total += g.total_size();
        }
        SystemIndexMap { graphs, offsets, total }
    }

    /// `Ñ`.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn graph(&self, cluster: usize) -> &AugmentedGraph {
        &self.graphs[cluster]
    }

    pub fn offset(&self, cluster: usize) -> usize {
        self.offsets[cluster]
    }

    pub fn agent(&self, spec: &NetworkSpec, agent: usize) -> usize {
        let c = spec.cluster_of(agent);
        self.offsets[c] + self.graphs[c].agent_index(agent).expect("agent belongs to its cluster")
    }

    pub fn edge(&self, cluster: usize, edge: Edge) -> Option<usize> {
        self.graphs[cluster].edge_index(edge).map(|k| self.offsets[cluster] + k)
    }

    /// Global indices of the real agents, ordered by agent id.
    pub fn agent_rows(&self, spec: &NetworkSpec) -> Vec<usize> {
        (0..spec.num_agents()).map(|a| self.agent(spec, a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub matrix: DMatrix<f64>,
    pub round: usize,
    pub fusion: bool,
}

/// `M[t]`; `F M̄[t]` when `sync_period` divides `t`.
pub fn build_m(spec: &NetworkSpec, sched: &LinkSchedule, t: usize, sync_period: Option<usize>) -> Result<TransitionMatrix> {
    let map = SystemIndexMap::new(spec);
    build_m_with(&map, spec, sched, t, sync_period)
}

pub fn build_m_with(
    map: &SystemIndexMap,
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    t: usize,
    sync_period: Option<usize>,
) -> Result<TransitionMatrix> {
    if t == 0 {
        return Err(Error::ParameterOutOfRange("rounds start at 1".into()));
    }
    sched.check_covers(spec, t)?;
    let n = map.len();
    let mut m = DMatrix::zeros(n, n);
    let inv = |a: usize| 1.0 / (spec.out_degree(a) + 1) as f64;
    for c in 0..spec.num_clusters() {
        let edges = spec.edges(c);
        for &a in spec.cluster(c) {
            let ja = map.agent(spec, a);
            m[(ja, ja)] = inv(a) * inv(a);
        }
        for (e, &(src, dst)) in edges.iter().enumerate() {
            let bit = if sched.is_operational(c, e, t) { 1.0 } else { 0.0 };
            let js = map.agent(spec, src);
            let jd = map.agent(spec, dst);
            let jn = map.edge(c, (src, dst)).expect("edge is in its cluster");
            m[(jd, js)] += bit * inv(dst) * inv(src);
            m[(jd, jn)] += bit * inv(dst);
            m[(jn, js)] += inv(src) * inv(src) + (1.0 - bit) * inv(src);
            m[(jn, jn)] += 1.0 - bit;
            // What reaches `src` this round is forwarded onto the link with
            // weight 1/(d_src + 1).
            for (k, &(ksrc, kdst)) in edges.iter().enumerate() {
                if kdst != src || !sched.is_operational(c, k, t) {
                    continue;
                }
                let jk = map.agent(spec, ksrc);
                let jkn = map.edge(c, (ksrc, kdst)).expect("edge is in its cluster");
                m[(jn, jk)] += inv(ksrc) * inv(src);
                m[(jn, jkn)] += inv(src);
            }
        }
    }
    let fusion = sync_period.is_some_and(|p| p > 0 && t % p == 0);
    if fusion {
        m = build_f_with(map, spec) * m;
    }
    Ok(TransitionMatrix { matrix: m, round: t, fusion })
}

/// Parameter-server fusion matrix: `(M+1)/(2M)` on designated diagonals,
/// `1/(2M)` between designated agents, identity elsewhere.
pub fn build_f(spec: &NetworkSpec) -> DMatrix<f64> {
    build_f_with(&SystemIndexMap::new(spec), spec)
}

pub fn build_f_with(map: &SystemIndexMap, spec: &NetworkSpec) -> DMatrix<f64> {
    let mut f = DMatrix::identity(map.len(), map.len());
    let m = spec.num_clusters() as f64;
    let designated: Vec<usize> = spec.designated_agents().iter().map(|&a| map.agent(spec, a)).collect();
    for &i in &designated {
        for &j in &designated {
            f[(i, j)] = if i == j { (m + 1.0) / (2.0 * m) } else { 1.0 / (2.0 * m) };
        }
    }
    f
}

/// `Ψ(r, t) = Mᵀ[r] Mᵀ[r+1] ... Mᵀ[t]`; identity when `r = t + 1`.
pub fn psi(spec: &NetworkSpec, sched: &LinkSchedule, r: usize, t: usize, sync_period: Option<usize>) -> Result<DMatrix<f64>> {
    let map = SystemIndexMap::new(spec);
    if r == 0 || r > t + 1 {
        return Err(Error::ParameterOutOfRange(format!("need 1 <= r <= t + 1, got r = {r}, t = {t}")));
    }
    let mut product = DMatrix::identity(map.len(), map.len());
    for tau in r..=t {
        product = build_m_with(&map, spec, sched, tau, sync_period)?.matrix * product;
    }
    Ok(product.transpose())
}

/// Every `Ψ(r, t)` for fixed `r` and `t = r-1 ..= t_max`, built incrementally.
pub fn psi_sweep(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    r: usize,
    t_max: usize,
    sync_period: Option<usize>,
) -> Result<Vec<DMatrix<f64>>> {
    let map = SystemIndexMap::new(spec);
    let mut out = vec![DMatrix::identity(map.len(), map.len())];
    let mut product = DMatrix::identity(map.len(), map.len());
    for tau in r..=t_max {
        product = build_m_with(&map, spec, sched, tau, sync_period)?.matrix * product;
        out.push(product.transpose());
    }
    Ok(out)
}

fn check_row_stochastic(a: &DMatrix<f64>) -> Result<()> {
    for (i, row) in a.row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|&x| x < -STOCHASTIC_TOL) {
            return Err(Error::NotRowStochastic { row: i, sum });
        }
    }
    Ok(())
}

/// `δ(A) = max_j max_{i1,i2} |A_{i1 j} - A_{i2 j}|`.
pub fn ergodicity_delta(a: &DMatrix<f64>) -> Result<f64> {
    check_row_stochastic(a)?;
    Ok(a.column_iter()
        .map(|col| col.max() - col.min())
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0))
}

/// `λ(A) = 1 - min_{i1,i2} Σ_j min(A_{i1 j}, A_{i2 j})`.
pub fn ergodicity_lambda(a: &DMatrix<f64>) -> Result<f64> {
    check_row_stochastic(a)?;
    let n = a.nrows();
    let mut worst = f64::INFINITY;
    for i1 in 0..n {
        for i2 in i1 + 1..n {
            let overlap: f64 = (0..a.ncols()).map(|j| a[(i1, j)].min(a[(i2, j)])).sum();
            worst = worst.min(overlap);
        }
    }
    if n < 2 {
        return Ok(0.0);
    }
    Ok((1.0 - worst).clamp(0.0, 1.0))
}

/// Stacked `(z, m)` per round; index 0 is the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// `Ñ × d`, one row per augmented node.
    pub z: Vec<DMatrix<f64>>,
    pub m: Vec<DVector<f64>>,
}

/// Stacks per-agent rows into the global layout, zero on virtual nodes.
pub fn stack_agents(spec: &NetworkSpec, map: &SystemIndexMap, rows: &[DVector<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.len() != spec.num_agents() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_agents(),
            got: rows.len(),
        });
    }
    let mut out = DMatrix::zeros(map.len(), dim);
    for (a, v) in rows.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        out.set_row(map.agent(spec, a), &v.transpose());
    }
    Ok(out)
}

/// Exact linear propagation `z[t] = M[t] z[t-1]`, `m[t] = M[t] m[t-1]`.
pub fn propagate_consensus(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    init: &[DVector<f64>],
    rounds: usize,
    sync_period: Option<usize>,
) -> Result<Propagation> {
    let map = SystemIndexMap::new(spec);
    let dim = init.first().map(|v| v.len()).unwrap_or(0);
    let mut z = stack_agents(spec, &map, init, dim)?;
    let mut m = DVector::zeros(map.len());
    for r in map.agent_rows(spec) {
        m[r] = 1.0;
    }
    let mut out = Propagation {
        z: vec![z.clone()],
        m: vec![m.clone()],
    };
    for t in 1..=rounds {
        let mt = build_m_with(&map, spec, sched, t, sync_period)?.matrix;
        z = &mt * z;
        m = &mt * m;
        out.z.push(z.clone());
        out.m.push(m.clone());
    }
    Ok(out)
}

/// Largest dimension for which the Kronecker product is built explicitly.
pub const KRONECKER_MAX_DIM: usize = 4;

/// `z[t] = (M[t] ⊗ A) z[t-1] - g̃[t]` from `z[0] = 0`, where `injections[t-1]`
/// holds the per-agent vectors subtracted in round `t`. Fusion acts after the
/// subtraction, so on fusion rounds `g̃ = (F ⊗ I) g`.
pub fn propagate_tracking(
    spec: &NetworkSpec,
    sched: &LinkSchedule,
    a: &DMatrix<f64>,
    injections: &[Vec<DVector<f64>>],
    sync_period: Option<usize>,
) -> Result<Vec<DMatrix<f64>>> {
    let map = SystemIndexMap::new(spec);
    let d = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.ncols(),
        });
    }
    let f = build_f_with(&map, spec);
    let mut z = DMatrix::zeros(map.len(), d);
    let mut out = vec![z.clone()];
    for (k, g) in injections.iter().enumerate() {
        let t = k + 1;
        let step = build_m_with(&map, spec, sched, t, sync_period)?;
        let mut g = stack_agents(spec, &map, g, d)?;
        if step.fusion {
            g = &f * g;
        }
        z = if d <= KRONECKER_MAX_DIM {
            let kron = step.matrix.kronecker(a);
            unvec(&(kron * vec_rows(&z)), map.len(), d)
        } else {
            &step.matrix * &z * a.transpose()
        } - g;
        out.push(z.clone());
    }
    Ok(out)
}

/// Node-major flattening: entry `(i, k)` goes to `i d + k`.
fn vec_rows(z: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(z.len(), z.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()))
}

fn unvec(v: &DVector<f64>, rows: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, d, v.as_slice())
}

/// Dense text export: a `rows cols` header line, then one row per line.
pub fn write_dense<W: Write>(a: &DMatrix<f64>, mut out: W) -> Result<()> {
    let io = |e| Error::io("<dense matrix>", e);
    writeln!(out, "{} {}", a.nrows(), a.ncols()).map_err(io)?;
    for row in a.row_iter() {
        let line: Vec<String> = row.iter().map(|x| crate::fmt_f64(*x)).collect();
        writeln!(out, "{}", line.join(" ")).map_err(io)?;
    }
    Ok(())
}

pub fn read_dense(text: &str) -> Result<DMatrix<f64>> {
    let bad = |what: &str| Error::ParameterOutOfRange(format!("dense matrix text: {what}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad("header needs two numbers"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines {
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|_| bad("bad entry"))?);
        }
    }
    if data.len() != rows * cols {
        return Err(bad("entry count does not match header"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn check_horizon(constants: &GraphConstants, t: usize) -> Result<f64> {
    let period = 2 * constants.sync_period;
    if t < period {
        return Err(Error::ParameterOutOfRange(format!("t = {t} is below 2Γ = {period}")));
    }
    Ok(period as f64)
}

fn ln_m2(constants: &GraphConstants) -> f64 {
    (constants.num_clusters as f64).powi(2).ln()
}

/// `4 M² Σ‖w‖ γ^{⌊t/2Γ⌋ - 1} / ((min β)^{2D*B} N)`.
pub fn theorem1_bound(constants: &GraphConstants, init_norm_sum: f64, num_agents: usize, t: usize) -> Result<f64> {
    check_horizon(constants, t)?;
    if !(init_norm_sum >= 0.0) || num_agents == 0 {
        return Err(Error::ParameterOutOfRange("need Σ‖w‖ >= 0 and N >= 1".into()));
    }
    if init_norm_sum == 0.0 {
        return Ok(0.0);
    }
    let blocks = (t / (2 * constants.sync_period)) as f64 - 1.0;
    let ln = 4f64.ln() + ln_m2(constants) + init_norm_sum.ln() + blocks * constants.ln_gamma
        - constants.ln_contraction
        - (num_agents as f64).ln();
    Ok(ln.exp())
}

/// `γ^{⌊t/2Γ⌋ - ⌈r/2Γ⌉}` (capped at 1): the number of whole fusion-aligned
/// `2Γ` blocks inside `[r, t]` drives the contraction.
pub fn lemma1_bound(constants: &GraphConstants, r: usize, t: usize) -> f64 {
    let period = 2 * constants.sync_period;
    let blocks = (t / period) as i64 - r.div_ceil(period) as i64;
    if blocks <= 0 {
        1.0
    } else {
        (blocks as f64 * constants.ln_gamma).exp()
    }
}

/// `(1/(4 M²)) (min β)^{2D*B}`.
pub fn lemma2_floor(constants: &GraphConstants) -> f64 {
    constants.ln_entry_floor().exp()
}

/// Inputs to the estimation error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Params {
    pub num_agents: usize,
    /// Smallest eigenvalue of `K`.
    pub lambda_min: f64,
    pub l0: f64,
    /// `L = R0 ‖K‖`.
    pub l: f64,
    pub r_squared: f64,
    pub delta: f64,
}

/// Squared-error bound on the running average for an arbitrary
/// non-increasing step sequence `eta(r)`.
pub fn theorem2_bound(
    constants: &GraphConstants,
    p: &Theorem2Params,
    eta: impl Fn(usize) -> f64,
    t: usize,
) -> Result<f64> {
    check_horizon(constants, t)?;
    let finite = [p.lambda_min, p.l0, p.l, p.r_squared].iter().all(|x| x.is_finite() && *x >= 0.0);
    if !finite || !(p.lambda_min > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::ParameterOutOfRange("estimation bound parameters".into()));
    }
    let tf = t as f64;
    let n = p.num_agents as f64;
    let eta_sum: f64 = (1..=t).map(|r| eta(r - 1)).sum();
    let eta_t = eta(t);
    if !(eta_t > 0.0) {
        return Err(Error::ParameterOutOfRange("step size must stay positive".into()));
    }
    let x = constants.ln_gamma / (2 * constants.sync_period) as f64;
    let ln_mixing = 4f64.ln() + ln_m2(constants) + 2.0 * p.l0.ln() + x - (-x.exp_m1()).ln() - constants.ln_contraction;
    let mixing = (ln_mixing + (eta_sum / tf).ln()).exp();
    let sum = n * p.l0 * p.l0 / (2.0 * tf) * eta_sum
        + n * p.r_squared / (tf * eta_t)
        + mixing
        + 4.0 * n * p.l * p.r_squared.sqrt() * ((1.0 / p.delta).ln() / tf).sqrt();
    Ok(sum / p.lambda_min)
}

/// Inputs to the tracking bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Params {
    pub dim: usize,
    pub lambda1: f64,
    pub lambda_d: f64,
    pub l0: f64,
    pub b0: f64,
    pub w_star_0_norm: f64,
    pub delta: f64,
    pub b: f64,
    /// `1 - b`, given separately to keep precision when `b` rounds to 1.
    pub one_minus_b: f64,
    pub t0: f64,
    pub t_bar0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Bounds {
    /// Bound on `‖w_j[t] - z̄[t]‖`.
    pub residual: f64,
    /// Bound on `‖w_j[t] - w*[t]‖`; `None` before `t̄0`.
    pub error: Option<f64>,
}

pub fn theorem3_bounds(constants: &GraphConstants, p: &Theorem3Params, t: usize) -> Result<Theorem3Bounds> {
    let finite = [p.lambda1, p.lambda_d, p.l0, p.b0, p.w_star_0_norm, p.one_minus_b, p.t0, p.t_bar0]
        .iter()
        .all(|x| x.is_finite());
    if !finite || !(p.lambda1 > 0.0 && p.lambda_d > 0.0) || !(p.one_minus_b > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) || t == 0 {
        return Err(Error::ParameterOutOfRange("tracking bound parameters".into()));
    }
    let tf = t as f64;
    let ln_c = ln_m2(constants) + p.l0.ln() - constants.ln_contraction - p.lambda1.ln();
    let residual = if tf >= p.t_bar0 {
        (16f64.ln() + ln_c - p.one_minus_b.ln() - tf.ln()).exp()
    } else {
        (4f64.ln() + ln_c).exp() * p.t0.max(0.0)
    };
    let error = (tf >= p.t_bar0).then(|| {
        let ratio = p.lambda1 / p.lambda_d;
        let e = ratio.exp();
        let d = p.dim as f64;
        p.w_star_0_norm * e / tf
            + (ratio + 4f64.ln() + ln_c).exp() * p.t0 * p.t0 / tf
            + (ratio + 32f64.ln() + ln_c - p.one_minus_b.ln()).exp() * (tf + 1.0).ln() / tf
            + 2.0 * p.b0 * e / p.lambda1 * (d / (2.0 * tf) * (d / p.delta).ln()).sqrt()
    });
    Ok(Theorem3Bounds { residual, error })
}
