//! Survey propagation over binned BP messages.
//!
//! A survey is a histogram over the probability a BP message would carry,
//! on the uniform [`BinGrid`](crate::BinGrid). Factor updates follow the
//! stochastic scheme: draw message sets from the incoming surveys, run a
//! stochastic BP update on each draw and bin the result weighted by its
//! local partition value. Variable updates are either stochastic (S4P) or
//! an exact FFT convolution on a logit grid (S3P).

mod fft;
mod oracle;
mod stochastic;

pub use fft::s3p_var_to_factor_fft;
pub use oracle::{exact_sp_oracle, SpOracle, ORACLE_ENUMERATION_LIMIT};
pub use stochastic::{
    s4p_factor_to_var, s4p_var_to_factor, sample_bp_messages_from_surveys, sp_marginal, SpMarginal,
};

use rayon::prelude::*;

use crate::bp::{extract_config, satisfied_fraction, Schedule};
use crate::error::{contract, Result};
use crate::graph::{Adjacency, FactorGraph};
use crate::grid::BinGrid;
use crate::messages::{damp_histogram_in_place, SurveyStore};
use crate::model::Configuration;
use crate::rng::{EngineTag, Lineage, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpVariant {
    /// Stochastic factor updates, FFT variable updates.
    S3p,
    /// Stochastic updates in both directions.
    S4p,
}

impl std::fmt::Display for SpVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpVariant::S3p => "s3p",
            SpVariant::S4p => "s4p",
        })
    }
}

impl std::str::FromStr for SpVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s3p" => Ok(SpVariant::S3p),
            "s4p" => Ok(SpVariant::S4p),
            other => Err(crate::Error::Contract(format!("unknown SP variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpParams {
    pub k_bins: usize,
    /// Outer samples per survey update.
    pub l_sp: usize,
    /// Inner samples per stochastic BP update.
    pub l_bp: usize,
    pub gamma: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub variant: SpVariant,
    /// Logits are clamped to `[-logit_clip, logit_clip]` on the FFT path.
    pub logit_clip: f64,
    /// Spacing of the FFT logit grid.
    pub logit_step: f64,
    pub schedule: Schedule,
    pub adaptive_gamma: bool,
    pub common_random_numbers: bool,
}

impl Default for SpParams {
    fn default() -> Self {
        Self {
            k_bins: 31,
            l_sp: 50,
            l_bp: 5,
            gamma: 0.5,
            max_iters: 20,
            tol: 1e-4,
            variant: SpVariant::S4p,
            logit_clip: 12.0,
            logit_step: 0.05,
            schedule: Schedule::Full,
            adaptive_gamma: false,
            common_random_numbers: false,
        }
    }
}

impl SpParams {
    pub fn validate(&self) -> Result<()> {
        contract(self.k_bins >= 2, || "k_bins must be at least 2".into())?;
        contract(self.l_sp >= 1, || "l_sp must be at least 1".into())?;
        contract(self.l_bp >= 1, || "l_bp must be at least 1".into())?;
        contract((0.0..=1.0).contains(&self.gamma), || format!("gamma {} outside [0, 1]", self.gamma))?;
        contract(self.max_iters >= 1, || "max_iters must be at least 1".into())?;
        contract(self.tol > 0.0, || "convergence tolerance must be positive".into())?;
        contract(self.logit_clip > 0.0 && self.logit_clip.is_finite(), || "logit_clip must be positive".into())?;
        contract(
            self.logit_step > 0.0 && self.logit_step <= self.logit_clip,
            || "logit_step must be in (0, logit_clip]".into(),
        )?;
        contract(!matches!(self.schedule, Schedule::MiniBatch(0)), || "mini-batch of zero factors".into())
    }
}

/// A freshly computed survey for one edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSurvey {
    pub histogram: Vec<f64>,
    /// No sample carried weight; `histogram` was reset to uniform.
    pub degenerate: bool,
}

impl EdgeSurvey {
    pub(crate) fn from_weights(mut weights: Vec<f64>) -> Self {
        match crate::messages::normalize_in_place(&mut weights) {
            Ok(()) => Self { histogram: weights, degenerate: false },
            Err(_) => Self::uniform(weights.len()),
        }
    }

    pub(crate) fn uniform(k: usize) -> Self {
        Self { histogram: vec![1.0 / k as f64; k], degenerate: true }
    }
}

/// Report for one completed SP iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SpStep {
    pub iteration: usize,
    pub max_delta: f64,
    pub gamma: f64,
    /// Edge updates reset to uniform this iteration.
    pub degenerate_edges: usize,
    /// Variables whose marginal estimate fell back to 0.5.
    pub degenerate_marginals: usize,
    pub marginals: Vec<f64>,
    /// Per-variable marginal histograms, `N x K`.
    pub histograms: Vec<Vec<f64>>,
    pub config: Configuration,
    pub train_accuracy: f64,
    pub satisfied_fraction: f64,
}

pub struct SpSolver<'g, G: FactorGraph> {
    graph: &'g G,
    adj: Adjacency,
    params: SpParams,
    seed: u64,
    surveys: SurveyStore,
    iteration: usize,
    gamma: f64,
    last_accuracy: Option<f64>,
}

impl<'g, G: FactorGraph> SpSolver<'g, G> {
    /// Starts from uniform surveys.
    pub fn new(graph: &'g G, params: SpParams, seed: u64) -> Result<Self> {
        let surveys = SurveyStore::uniform(graph.num_factors(), graph.num_vars(), params.k_bins);
        Self::resume(graph, params, seed, surveys, 0)
    }

    pub fn resume(
        graph: &'g G,
        params: SpParams,
        seed: u64,
        surveys: SurveyStore,
        iteration: usize,
    ) -> Result<Self> {
        params.validate()?;
        contract(
            surveys.num_factors() == graph.num_factors()
                && surveys.num_vars() == graph.num_vars()
                && surveys.k() == params.k_bins,
            || "survey store does not match the graph".into(),
        )?;
        BinGrid::new(params.k_bins)?;
        let gamma = params.gamma;
        Ok(Self {
            graph,
            adj: Adjacency::of(graph),
            params,
            seed,
            surveys,
            iteration,
            gamma,
            last_accuracy: None,
        })
    }

    pub fn surveys(&self) -> &SurveyStore {
        &self.surveys
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &SpParams {
        &self.params
    }

    /// Marginal estimates and histograms at the current surveys.
    pub fn marginals(&self) -> Result<Vec<SpMarginal>> {
        (0..self.graph.num_vars())
            .into_par_iter()
            .map(|var| {
                let mut rng =
                    RngStream::new(self.seed, Lineage::new(EngineTag::SpMarginal, var, self.iteration, 0));
                sp_marginal(&self.surveys, &self.adj, var, &self.params, &mut rng)
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<SpStep> {
        if self.params.adaptive_gamma
            && self.iteration > 0
            && self.iteration % crate::snmp::ADAPTIVE_PERIOD == 0
        {
            if let Some(acc) = self.last_accuracy {
                self.gamma = crate::snmp::adaptive_gamma(acc)?;
            }
        }
        let gamma = self.gamma;
        let k = self.params.k_bins;
        let scheduled = self.params.schedule.factors(self.graph.num_factors(), self.seed, self.iteration);

        let fresh_f2v: Vec<Vec<EdgeSurvey>> = scheduled
            .par_iter()
            .map(|&f| {
                let mut rng = RngStream::new(self.seed, Lineage::new(EngineTag::S4pFactor, f, self.iteration, 0));
                s4p_factor_to_var(self.graph, &self.surveys, f, &self.params, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut max_delta: f64 = 0.0;
        let mut degenerate_edges = 0;
        let mut old = vec![0.0; k];
        for (&factor, edges) in scheduled.iter().zip(&fresh_f2v) {
            for (&var, edge) in self.graph.scope(factor).iter().zip(edges) {
                degenerate_edges += edge.degenerate as usize;
                let slot = self.surveys.f2v_mut(factor, var);
                old.copy_from_slice(slot);
                damp_histogram_in_place(slot, &edge.histogram, gamma)?;
                max_delta = max_delta.max(max_diff(&old, slot));
            }
        }

        let fresh_v2f: Vec<Vec<EdgeSurvey>> = (0..self.graph.num_vars())
            .into_par_iter()
            .map(|var| match self.params.variant {
                SpVariant::S4p => {
                    let mut rng =
                        RngStream::new(self.seed, Lineage::new(EngineTag::S4pVar, var, self.iteration, 0));
                    s4p_var_to_factor(&self.surveys, &self.adj, var, &self.params, &mut rng)
                }
                SpVariant::S3p => s3p_var_to_factor_fft(&self.surveys, &self.adj, var, &self.params),
            })
            .collect::<Result<_>>()?;
        for (var, edges) in fresh_v2f.iter().enumerate() {
            for (&factor, edge) in self.adj.var_factors[var].iter().zip(edges) {
                degenerate_edges += edge.degenerate as usize;
                let slot = self.surveys.v2f_mut(factor, var);
                old.copy_from_slice(slot);
                damp_histogram_in_place(slot, &edge.histogram, gamma)?;
                max_delta = max_delta.max(max_diff(&old, slot));
            }
        }
        self.iteration += 1;

        let marginals = self.marginals()?;
        let degenerate_marginals = marginals.iter().filter(|m| m.degenerate).count();
        let values: Vec<f64> = marginals.iter().map(|m| m.p1).collect();
        let config = extract_config(&values);
        let all: Vec<usize> = (0..self.graph.num_factors()).collect();
        let train_accuracy = satisfied_fraction(self.graph, &all, &config);
        self.last_accuracy = Some(train_accuracy);
        Ok(SpStep {
            iteration: self.iteration,
            max_delta,
            gamma,
            degenerate_edges,
            degenerate_marginals,
            satisfied_fraction: satisfied_fraction(self.graph, &scheduled, &config),
            histograms: marginals.into_iter().map(|m| m.histogram).collect(),
            marginals: values,
            config,
            train_accuracy,
        })
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct SpRun {
    pub surveys: SurveyStore,
    pub marginals: Vec<f64>,
    pub config: Configuration,
    pub iterations: usize,
    pub converged: bool,
    /// One entry per iteration.
    pub trace: Vec<SpStep>,
}

/// Runs SP from uniform surveys until the largest survey change drops
/// below `params.tol` or `params.max_iters` iterations have run.
pub fn run_sp<G: FactorGraph>(graph: &G, params: &SpParams, seed: u64) -> Result<SpRun> {
    let mut solver = SpSolver::new(graph, params.clone(), seed)?;
    let mut trace: Vec<SpStep> = Vec::new();
    let mut converged = false;
    for _ in 0..params.max_iters {
        let step = solver.step()?;
        converged = step.max_delta < params.tol;
        trace.push(step);
        if converged {
            break;
        }
    }
    let last = trace.last().expect("max_iters >= 1");
    Ok(SpRun {
        surveys: solver.surveys.clone(),
        marginals: last.marginals.clone(),
        config: last.config.clone(),
        iterations: solver.iteration,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TableGraph;

    #[test]
    fn frozen_with_zero_gamma() {
        let g = TableGraph::random_tree(5, 2);
        for variant in [SpVariant::S3p, SpVariant::S4p] {
            let params = SpParams { k_bins: 5, l_sp: 10, gamma: 0.0, max_iters: 3, variant, ..Default::default() };
            let run = run_sp(&g, &params, 1).unwrap();
            assert_eq!(run.surveys, SurveyStore::uniform(g.num_factors(), 5, 5));
        }
    }

    #[test]
    fn trace_shape_and_normalization() {
        let g = TableGraph::random_tree(6, 3);
        let params = SpParams { k_bins: 7, l_sp: 20, max_iters: 4, tol: 1e-300, ..Default::default() };
        let run = run_sp(&g, &params, 9).unwrap();
        assert_eq!(run.trace.len(), 4);
        for step in &run.trace {
            assert_eq!(step.histograms.len(), 6);
            for h in &step.histograms {
                assert_eq!(h.len(), 7);
                assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        run.surveys.validate(1e-9).unwrap();
    }

    #[test]
    fn replay_is_deterministic() {
        let g = TableGraph::random_tree(5, 8);
        let params = SpParams { k_bins: 5, l_sp: 15, max_iters: 3, ..Default::default() };
        let a = run_sp(&g, &params, 4).unwrap();
        let b = run_sp(&g, &params, 4).unwrap();
        assert_eq!(a.surveys, b.surveys);
        assert_eq!(a.marginals, b.marginals);
    }

    #[test]
    fn variant_round_trips_through_text() {
        for v in [SpVariant::S3p, SpVariant::S4p] {
            assert_eq!(v.to_string().parse::<SpVariant>().unwrap(), v);
        }
        assert!("s5p".parse::<SpVariant>().is_err());
    }
}
