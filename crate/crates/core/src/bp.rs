//! Exact and stochastic belief propagation in p-form.
//!
//! An iteration recomputes the factor-to-variable messages of the scheduled
//! factors from the previous variable-to-factor messages, then recomputes
//! every variable-to-factor message from the fresh factor messages. Both
//! directions are damped.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::graph::{Adjacency, FactorGraph};
use crate::messages::{damp_unchecked, BpMessageStore};
use crate::model::Configuration;
use crate::rng::{bernoulli_threshold, EngineTag, Lineage, RngStream};

/// Largest factor degree the exact engine will enumerate.
pub const EXACT_DEGREE_LIMIT: usize = 20;
/// Above this many incoming messages products are taken in log space.
const LOG_DOMAIN_THRESHOLD: usize = 30;
/// Cached exact factor tables are skipped past this many entries.
const TABLE_CACHE_LIMIT: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Every factor sends fresh messages each iteration.
    Full,
    /// A uniformly drawn subset of this many factors per iteration.
    MiniBatch(usize),
}

impl Schedule {
    /// Factors updated at `iteration`, ascending.
    pub fn factors(&self, m: usize, seed: u64, iteration: usize) -> Vec<usize> {
        match *self {
            Schedule::MiniBatch(b) if b < m => {
                let mut rng = RngStream::new(seed, Lineage::new(EngineTag::Schedule, 0, iteration, 0));
                let mut picked = sample(&mut rng, m, b).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..m).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpParams {
    /// Monte Carlo samples per clamp.
    pub l_bp: usize,
    /// Damping factor: 1 replaces messages, 0 freezes them.
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once the largest message change falls below this.
    pub tol: f64,
    pub schedule: Schedule,
    /// Reuse one sample set for both clamps instead of drawing two.
    pub common_random_numbers: bool,
    /// Reset `gamma` to `1 - train accuracy` every 20 iterations.
    pub adaptive_gamma: bool,
}

impl Default for BpParams {
    fn default() -> Self {
        Self {
            l_bp: 5,
            gamma: 0.5,
            max_iters: 20,
            tol: 1e-4,
            schedule: Schedule::Full,
            common_random_numbers: false,
            adaptive_gamma: false,
        }
    }
}

impl BpParams {
    pub fn validate(&self) -> Result<()> {
        contract(self.l_bp >= 1, || "l_bp must be at least 1".into())?;
        contract((0.0..=1.0).contains(&self.gamma), || format!("gamma {} outside [0, 1]", self.gamma))?;
        contract(self.tol > 0.0, || "convergence tolerance must be positive".into())?;
        contract(self.max_iters >= 1, || "max_iters must be at least 1".into())?;
        contract(!matches!(self.schedule, Schedule::MiniBatch(0)), || "mini-batch of zero factors".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BpMode {
    Exact,
    Stochastic,
}

/// A message in p-form together with its unnormalized components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MessageUpdate {
    pub p1: f64,
    pub p1_unnorm: f64,
    pub p0_unnorm: f64,
}

impl MessageUpdate {
    pub fn from_unnorm(p1_unnorm: f64, p0_unnorm: f64) -> Result<Self> {
        let z = p1_unnorm + p0_unnorm;
        if !(z > 0.0) {
            return Err(Error::Contradiction);
        }
        Ok(Self { p1: p1_unnorm / z, p1_unnorm, p0_unnorm })
    }

    /// Local partition value `p~(0) + p~(1)`.
    pub fn partition(&self) -> f64 {
        self.p1_unnorm + self.p0_unnorm
    }
}

/// Log-space pair `(ln p~(1), ln p~(0))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct LogPair {
    pub log1: f64,
    pub log0: f64,
}

impl LogPair {
    /// Normalized `p(1)`, or `None` when both terms vanish.
    #[inline]
    pub fn p1(&self) -> Option<f64> {
        match (self.log1 == f64::NEG_INFINITY, self.log0 == f64::NEG_INFINITY) {
            (true, true) => None,
            (true, false) => Some(0.0),
            (false, true) => Some(1.0),
            _ => Some(1.0 / (1.0 + (self.log0 - self.log1).exp())),
        }
    }

    #[inline]
    pub fn log_partition(&self) -> f64 {
        log_add_exp(self.log1, self.log0)
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

#[inline]
fn ln0(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Products of `(q, 1 - q)` over all of `q`, in log space.
pub(crate) fn product_logs(q: impl Iterator<Item = f64>) -> LogPair {
    let mut acc = LogPair { log1: 0.0, log0: 0.0 };
    for p in q {
        acc.log1 += ln0(p);
        acc.log0 += ln0(1.0 - p);
    }
    acc
}

/// For every position `k`, the products of `(q_j, 1 - q_j)` over `j != k`,
/// in log space. Exact zeros are counted rather than logged so that
/// removing a zero term restores a finite product.
pub(crate) fn leave_one_out_logs(q: &[f64], out: &mut Vec<LogPair>) {
    out.clear();
    let (mut sum1, mut sum0) = (0.0, 0.0);
    let (mut zeros1, mut zeros0) = (0usize, 0usize);
    for &p in q {
        if p > 0.0 { sum1 += p.ln() } else { zeros1 += 1 }
        if p < 1.0 { sum0 += (1.0 - p).ln() } else { zeros0 += 1 }
    }
    for &p in q {
        let log1 = if p > 0.0 {
            if zeros1 > 0 { f64::NEG_INFINITY } else { sum1 - p.ln() }
        } else if zeros1 > 1 {
            f64::NEG_INFINITY
        } else {
            sum1
        };
        let log0 = if p < 1.0 {
            if zeros0 > 0 { f64::NEG_INFINITY } else { sum0 - (1.0 - p).ln() }
        } else if zeros0 > 1 {
            f64::NEG_INFINITY
        } else {
            sum0
        };
        out.push(LogPair { log1, log0 });
    }
}

fn update_from_products(incoming: &[f64]) -> Result<MessageUpdate> {
    if incoming.len() <= LOG_DOMAIN_THRESHOLD {
        let p1u: f64 = incoming.iter().product();
        let p0u: f64 = incoming.iter().map(|p| 1.0 - p).product();
        return MessageUpdate::from_unnorm(p1u, p0u);
    }
    let logs = product_logs(incoming.iter().copied());
    let p1 = logs.p1().ok_or(Error::Contradiction)?;
    Ok(MessageUpdate { p1, p1_unnorm: logs.log1.exp(), p0_unnorm: logs.log0.exp() })
}

/// Variable `var` to factor `factor`: product of the other incoming factor
/// messages.
pub fn exact_var_to_factor(
    store: &BpMessageStore,
    adj: &Adjacency,
    var: usize,
    factor: usize,
) -> Result<MessageUpdate> {
    let incoming: Vec<f64> = adj.var_factors[var]
        .iter()
        .filter(|&&j| j != factor)
        .map(|&j| store.f2v(j, var))
        .collect();
    update_from_products(&incoming)
}

/// Belief of `var`: product over every incoming factor message.
pub fn belief(store: &BpMessageStore, adj: &Adjacency, var: usize) -> Result<f64> {
    let logs = product_logs(adj.var_factors[var].iter().map(|&j| store.f2v(j, var)));
    logs.p1().ok_or(Error::Contradiction)
}

/// Factor `factor` to variable `var` by enumerating every assignment of
/// the rest of the factor's scope.
pub fn exact_factor_to_var<G: FactorGraph>(
    graph: &G,
    store: &BpMessageStore,
    factor: usize,
    var: usize,
) -> Result<MessageUpdate> {
    let scope = graph.scope(factor);
    check_exact_degree(scope.len())?;
    let pos = scope
        .iter()
        .position(|&v| v == var)
        .ok_or_else(|| Error::Contract(format!("variable {var} not adjacent to factor {factor}")))?;
    let others: Vec<usize> = scope.iter().copied().filter(|&v| v != var).collect();
    let _ = pos;
    let mut config = vec![0u8; graph.num_vars()];
    let mut scratch = Vec::new();
    let (mut p1u, mut p0u) = (0.0, 0.0);
    for t in 0u64..(1u64 << others.len()) {
        let mut weight = 1.0;
        for (j, &v) in others.iter().enumerate() {
            let bit = ((t >> j) & 1) as u8;
            config[v] = bit;
            let q = store.v2f(factor, v);
            weight *= if bit == 1 { q } else { 1.0 - q };
        }
        if weight == 0.0 {
            continue;
        }
        config[var] = 1;
        p1u += weight * graph.value_with(factor, &config, &mut scratch);
        config[var] = 0;
        p0u += weight * graph.value_with(factor, &config, &mut scratch);
    }
    MessageUpdate::from_unnorm(p1u, p0u)
}

pub(crate) fn check_exact_degree(degree: usize) -> Result<()> {
    if degree > EXACT_DEGREE_LIMIT {
        return Err(Error::Tractability(format!(
            "exact factor update over {degree} variables exceeds the limit of {EXACT_DEGREE_LIMIT}"
        )));
    }
    Ok(())
}

/// Factor values over every assignment of its scope.
pub(crate) fn factor_table<G: FactorGraph>(graph: &G, factor: usize) -> Vec<f64> {
    let scope = graph.scope(factor);
    let mut config = vec![0u8; graph.num_vars()];
    let mut scratch = Vec::new();
    (0u64..(1u64 << scope.len()))
        .map(|t| {
            for (j, &v) in scope.iter().enumerate() {
                config[v] = ((t >> j) & 1) as u8;
            }
            graph.value_with(factor, &config, &mut scratch)
        })
        .collect()
}

/// Exact messages from one factor to every scope variable, given the
/// incoming messages `q` in scope order.
pub(crate) fn exact_factor_messages(table: &[f64], q: &[f64]) -> Result<Vec<MessageUpdate>> {
    let d = q.len();
    let mut acc1 = vec![0.0; d];
    let mut acc0 = vec![0.0; d];
    let mut prefix = vec![1.0; d + 1];
    let mut suffix = vec![1.0; d + 1];
    for (t, &f) in table.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        for j in 0..d {
            let term = if (t >> j) & 1 == 1 { q[j] } else { 1.0 - q[j] };
            prefix[j + 1] = prefix[j] * term;
        }
        for j in (0..d).rev() {
            let term = if (t >> j) & 1 == 1 { q[j] } else { 1.0 - q[j] };
            suffix[j] = suffix[j + 1] * term;
        }
        for j in 0..d {
            let w = f * prefix[j] * suffix[j + 1];
            if (t >> j) & 1 == 1 {
                acc1[j] += w;
            } else {
                acc0[j] += w;
            }
        }
    }
    acc1.iter().zip(&acc0).map(|(&a, &b)| MessageUpdate::from_unnorm(a, b)).collect()
}

/// Result of one stochastic factor update on a single edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SbpEdge {
    pub update: MessageUpdate,
    /// Every sample for both clamps had zero value; `update.p1` is 0.5.
    pub starved: bool,
}

/// Reusable buffers for stochastic factor updates.
#[derive(Default)]
pub(crate) struct SbpScratch {
    config: Vec<u8>,
    thresholds: Vec<u64>,
    eval: Vec<i32>,
}

#[inline]
fn fill_bits(rng: &mut RngStream, scope: &[usize], thresholds: &[u64], config: &mut [u8]) {
    let mut pairs = scope.chunks_exact(2).zip(thresholds.chunks_exact(2));
    for (v, t) in &mut pairs {
        let r = rand::RngCore::next_u64(rng);
        config[v[0]] = ((r & 0xffff_ffff) < t[0]) as u8;
        config[v[1]] = ((r >> 32) < t[1]) as u8;
    }
    if scope.len() % 2 == 1 {
        let last = scope.len() - 1;
        config[scope[last]] = rng.bit(thresholds[last]);
    }
}

/// Monte Carlo factor update: for each scope variable and each clamp,
/// average the factor over `l_bp` configurations drawn from the incoming
/// messages. `incoming` is indexed by variable.
pub(crate) fn sbp_from_incoming<G: FactorGraph>(
    graph: &G,
    factor: usize,
    incoming: &[f64],
    l_bp: usize,
    common_random_numbers: bool,
    rng: &mut RngStream,
    scratch: &mut SbpScratch,
    out: &mut Vec<SbpEdge>,
) {
    let scope = graph.scope(factor);
    scratch.config.clear();
    scratch.config.resize(graph.num_vars(), 0);
    scratch.thresholds.clear();
    scratch.thresholds.extend(scope.iter().map(|&v| bernoulli_threshold(incoming[v])));
    out.clear();
    let inv_l = 1.0 / l_bp as f64;
    for &var in scope {
        let (mut sum1, mut sum0) = (0.0, 0.0);
        for _ in 0..l_bp {
            fill_bits(rng, scope, &scratch.thresholds, &mut scratch.config);
            scratch.config[var] = 1;
            sum1 += graph.value_with(factor, &scratch.config, &mut scratch.eval);
            if !common_random_numbers {
                fill_bits(rng, scope, &scratch.thresholds, &mut scratch.config);
            }
            scratch.config[var] = 0;
            sum0 += graph.value_with(factor, &scratch.config, &mut scratch.eval);
        }
        let (p1u, p0u) = (sum1 * inv_l, sum0 * inv_l);
        out.push(match MessageUpdate::from_unnorm(p1u, p0u) {
            Ok(update) => SbpEdge { update, starved: false },
            Err(_) => SbpEdge {
                update: MessageUpdate { p1: 0.5, p1_unnorm: 0.0, p0_unnorm: 0.0 },
                starved: true,
            },
        });
    }
}

/// Stochastic factor-to-variable update for every variable in the scope
/// of `factor`, in scope order.
pub fn sbp_factor_to_var<G: FactorGraph>(
    graph: &G,
    store: &BpMessageStore,
    factor: usize,
    params: &BpParams,
    rng: &mut RngStream,
) -> Result<Vec<SbpEdge>> {
    contract(params.l_bp >= 1, || "l_bp must be at least 1".into())?;
    contract(factor < graph.num_factors(), || format!("factor {factor} out of range"))?;
    let mut out = Vec::new();
    sbp_from_incoming(
        graph,
        factor,
        store.v2f_row(factor),
        params.l_bp,
        params.common_random_numbers,
        rng,
        &mut SbpScratch::default(),
        &mut out,
    );
    Ok(out)
}

/// Thresholds beliefs at 0.5; ties go to 1.
pub fn extract_config(values: &[f64]) -> Configuration {
    Configuration { bits: values.iter().map(|&v| (v >= 0.5) as u8).collect() }
}

/// Fraction of factors satisfied by `config` under the hard predicate.
pub fn satisfied_fraction<G: FactorGraph>(graph: &G, factors: &[usize], config: &Configuration) -> f64 {
    if factors.is_empty() {
        return 1.0;
    }
    let hit = factors.iter().filter(|&&f| graph.satisfied(f, &config.bits)).count();
    hit as f64 / factors.len() as f64
}

/// Report for one completed iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct BpStep {
    /// 1-based index of the iteration just completed.
    pub iteration: usize,
    pub max_delta: f64,
    pub gamma: f64,
    pub starved_edges: usize,
    pub beliefs: Vec<f64>,
    pub config: Configuration,
    /// Fraction of all factors satisfied by `config`.
    pub train_accuracy: f64,
    /// Same, restricted to the factors scheduled this iteration.
    pub satisfied_fraction: f64,
}

/// Iterative BP state over a factor graph.
pub struct BpSolver<'g, G: FactorGraph> {
    graph: &'g G,
    adj: Adjacency,
    params: BpParams,
    mode: BpMode,
    seed: u64,
    store: BpMessageStore,
    iteration: usize,
    gamma: f64,
    last_accuracy: Option<f64>,
    tables: Option<Vec<Vec<f64>>>,
}

impl<'g, G: FactorGraph> BpSolver<'g, G> {
    pub fn new(graph: &'g G, params: BpParams, mode: BpMode, seed: u64) -> Result<Self> {
        let store = BpMessageStore::uniform(graph.num_factors(), graph.num_vars());
        Self::resume(graph, params, mode, seed, store, 0)
    }

    /// Continues from a saved store. Streams are keyed by iteration, so a
    /// resumed run replays the draws of an uninterrupted one.
    pub fn resume(
        graph: &'g G,
        params: BpParams,
        mode: BpMode,
        seed: u64,
        store: BpMessageStore,
        iteration: usize,
    ) -> Result<Self> {
        params.validate()?;
        contract(
            store.num_factors() == graph.num_factors() && store.num_vars() == graph.num_vars(),
            || "message store does not match the graph".into(),
        )?;
        let adj = Adjacency::of(graph);
        let tables = if mode == BpMode::Exact {
            let degree = adj.max_factor_degree();
            check_exact_degree(degree)?;
            let entries = graph.num_factors().saturating_mul(1usize << degree);
            (entries <= TABLE_CACHE_LIMIT)
                .then(|| (0..graph.num_factors()).into_par_iter().map(|f| factor_table(graph, f)).collect())
        } else {
            None
        };
        let gamma = params.gamma;
        Ok(Self {
            graph,
            adj,
            params,
            mode,
            seed,
            store,
            iteration,
            gamma,
            last_accuracy: None,
            tables,
        })
    }

    pub fn store(&self) -> &BpMessageStore {
        &self.store
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beliefs(&self) -> Result<Vec<f64>> {
        (0..self.graph.num_vars()).map(|v| belief(&self.store, &self.adj, v)).collect()
    }

    fn fresh_factor_messages(&self, factor: usize) -> Result<(Vec<f64>, usize)> {
        let scope = self.graph.scope(factor);
        match self.mode {
            BpMode::Exact => {
                let q: Vec<f64> = scope.iter().map(|&v| self.store.v2f(factor, v)).collect();
                let owned;
                let table = match &self.tables {
                    Some(t) => &t[factor],
                    None => {
                        owned = factor_table(self.graph, factor);
                        &owned
                    }
                };
                let updates = exact_factor_messages(table, &q)?;
                Ok((updates.iter().map(|u| u.p1).collect(), 0))
            }
            BpMode::Stochastic => {
                let mut rng = RngStream::new(
                    self.seed,
                    Lineage::new(EngineTag::SbpFactor, factor, self.iteration, 0),
                );
                let mut out = Vec::with_capacity(scope.len());
                sbp_from_incoming(
                    self.graph,
                    factor,
                    self.store.v2f_row(factor),
                    self.params.l_bp,
                    self.params.common_random_numbers,
                    &mut rng,
                    &mut SbpScratch::default(),
                    &mut out,
                );
                let starved = out.iter().filter(|e| e.starved).count();
                Ok((out.iter().map(|e| e.update.p1).collect(), starved))
            }
        }
    }

    /// Runs one iteration.
    pub fn step(&mut self) -> Result<BpStep> {
        if self.params.adaptive_gamma && self.iteration > 0 && self.iteration % crate::snmp::ADAPTIVE_PERIOD == 0 {
            if let Some(acc) = self.last_accuracy {
                self.gamma = crate::snmp::adaptive_gamma(acc)?;
            }
        }
        let gamma = self.gamma;
        let scheduled = self.params.schedule.factors(self.graph.num_factors(), self.seed, self.iteration);
        let fresh: Vec<(Vec<f64>, usize)> = scheduled
            .par_iter()
            .map(|&f| self.fresh_factor_messages(f))
            .collect::<Result<_>>()?;

        let mut max_delta: f64 = 0.0;
        let mut starved_edges = 0;
        for (&factor, (messages, starved)) in scheduled.iter().zip(&fresh) {
            starved_edges += starved;
            for (&var, &p) in self.graph.scope(factor).iter().zip(messages) {
                let idx = self.store.idx(factor, var);
                let old = self.store.factor_to_var[idx];
                let new = damp_unchecked(old, p, gamma);
                max_delta = max_delta.max((new - old).abs());
                self.store.factor_to_var[idx] = new;
            }
        }

        let store = &self.store;
        let adj = &self.adj;
        let fresh_v2f: Vec<Vec<f64>> = (0..self.graph.num_vars())
            .into_par_iter()
            .map(|var| {
                let factors = &adj.var_factors[var];
                let q: Vec<f64> = factors.iter().map(|&f| store.f2v(f, var)).collect();
                let mut loo = Vec::with_capacity(q.len());
                leave_one_out_logs(&q, &mut loo);
                loo.iter().map(|l| l.p1().ok_or(Error::Contradiction)).collect()
            })
            .collect::<Result<_>>()?;
        for (var, messages) in fresh_v2f.iter().enumerate() {
            for (&factor, &p) in self.adj.var_factors[var].iter().zip(messages) {
                let idx = self.store.idx(factor, var);
                let old = self.store.var_to_factor[idx];
                let new = damp_unchecked(old, p, gamma);
                max_delta = max_delta.max((new - old).abs());
                self.store.var_to_factor[idx] = new;
            }
        }
        self.iteration += 1;

        let beliefs = self.beliefs()?;
        let config = extract_config(&beliefs);
        let all: Vec<usize> = (0..self.graph.num_factors()).collect();
        let train_accuracy = satisfied_fraction(self.graph, &all, &config);
        self.last_accuracy = Some(train_accuracy);
        Ok(BpStep {
            iteration: self.iteration,
            max_delta,
            gamma,
            starved_edges,
            satisfied_fraction: satisfied_fraction(self.graph, &scheduled, &config),
            beliefs,
            config,
            train_accuracy,
        })
    }
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct BpTraceRow {
    pub iteration: usize,
    pub max_delta: f64,
    pub train_accuracy: f64,
    pub satisfied_fraction: f64,
    pub starved_edges: usize,
    pub gamma: f64,
}

impl From<&BpStep> for BpTraceRow {
    fn from(s: &BpStep) -> Self {
        Self {
            iteration: s.iteration,
            max_delta: s.max_delta,
            train_accuracy: s.train_accuracy,
            satisfied_fraction: s.satisfied_fraction,
            starved_edges: s.starved_edges,
            gamma: s.gamma,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BpRun {
    pub store: BpMessageStore,
    pub beliefs: Vec<f64>,
    pub config: Configuration,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<BpTraceRow>,
}

/// Runs BP from uniform messages until the largest message change drops
/// below `params.tol` or `params.max_iters` iterations have run.
pub fn run_bp<G: FactorGraph>(graph: &G, params: &BpParams, mode: BpMode, seed: u64) -> Result<BpRun> {
    let mut solver = BpSolver::new(graph, params.clone(), mode, seed)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last = None;
    for _ in 0..params.max_iters {
        let step = solver.step()?;
        trace.push(BpTraceRow::from(&step));
        converged = step.max_delta < params.tol;
        last = Some(step);
        if converged {
            break;
        }
    }
    let last = last.expect("max_iters >= 1");
    Ok(BpRun {
        store: solver.store.clone(),
        beliefs: last.beliefs,
        config: last.config,
        iterations: solver.iteration,
        converged,
        trace,
    })
}
