//! Monte Carlo survey updates and marginals.

use super::{EdgeSurvey, SpParams};
use crate::bp::{leave_one_out_logs, log_add_exp, product_logs, sbp_from_incoming, SbpScratch};
use crate::error::{contract, Error, Result};
use crate::graph::{Adjacency, FactorGraph};
use crate::grid::BinGrid;
use crate::messages::SurveyStore;
use crate::rng::RngStream;

/// Cumulative mass of a survey, for inverse-CDF draws.
pub(crate) struct Cdf(Vec<f64>);

impl Cdf {
    pub fn new(survey: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cum: Vec<f64> = survey
            .iter()
            .map(|&w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::DegenerateSurvey);
        }
        Ok(Self(cum))
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let total = *self.0.last().expect("nonempty survey");
        let u = rng.uniform() * total;
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

/// Draws one bin per survey and returns the bin centers.
pub fn sample_bp_messages_from_surveys(
    surveys: &[&[f64]],
    grid: &BinGrid,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let cdfs = surveys
        .iter()
        .map(|s| {
            contract(s.len() == grid.k(), || "survey length does not match the grid".into())?;
            Cdf::new(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cdfs.iter().map(|c| grid.centers()[c.sample(rng)]).collect())
}

/// Stochastic factor-to-variable survey update for every variable in the
/// scope of `factor`, in scope order.
pub fn s4p_factor_to_var<G: FactorGraph>(
    graph: &G,
    surveys: &SurveyStore,
    factor: usize,
    params: &SpParams,
    rng: &mut RngStream,
) -> Result<Vec<EdgeSurvey>> {
    let grid = BinGrid::new(surveys.k())?;
    let scope = graph.scope(factor);
    let cdfs = scope
        .iter()
        .map(|&v| Cdf::new(surveys.v2f(factor, v)))
        .collect::<Result<Vec<_>>>()?;
    let k = grid.k();
    let mut weights = vec![vec![0.0; k]; scope.len()];
    let mut incoming = vec![0.5; graph.num_vars()];
    let mut scratch = SbpScratch::default();
    let mut edges = Vec::with_capacity(scope.len());
    for _ in 0..params.l_sp {
        for (&v, cdf) in scope.iter().zip(&cdfs) {
            incoming[v] = grid.centers()[cdf.sample(rng)];
        }
        sbp_from_incoming(
            graph,
            factor,
            &incoming,
            params.l_bp,
            params.common_random_numbers,
            rng,
            &mut scratch,
            &mut edges,
        );
        for (hist, edge) in weights.iter_mut().zip(&edges) {
            if !edge.starved {
                hist[grid.bin_of(edge.update.p1)] += edge.update.partition();
            }
        }
    }
    Ok(weights.into_iter().map(EdgeSurvey::from_weights).collect())
}

/// Per-bin log-weight accumulator.
struct LogHistogram(Vec<f64>);

impl LogHistogram {
    fn new(k: usize) -> Self {
        Self(vec![f64::NEG_INFINITY; k])
    }

    #[inline]
    fn add(&mut self, bin: usize, log_weight: f64) {
        if log_weight > f64::NEG_INFINITY {
            self.0[bin] = log_add_exp(self.0[bin], log_weight);
        }
    }

    fn into_edge(self) -> EdgeSurvey {
        let top = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return EdgeSurvey::uniform(self.0.len());
        }
        EdgeSurvey::from_weights(self.0.iter().map(|&l| (l - top).exp()).collect())
    }
}

/// Stochastic variable-to-factor survey update for every factor adjacent
/// to `var`, in adjacency order.
pub fn s4p_var_to_factor(
    surveys: &SurveyStore,
    adj: &Adjacency,
    var: usize,
    params: &SpParams,
    rng: &mut RngStream,
) -> Result<Vec<EdgeSurvey>> {
    let grid = BinGrid::new(surveys.k())?;
    let factors = &adj.var_factors[var];
    let cdfs = factors
        .iter()
        .map(|&f| Cdf::new(surveys.f2v(f, var)))
        .collect::<Result<Vec<_>>>()?;
    let mut hists: Vec<LogHistogram> = factors.iter().map(|_| LogHistogram::new(grid.k())).collect();
    let mut q = vec![0.0; factors.len()];
    let mut loo = Vec::with_capacity(factors.len());
    for _ in 0..params.l_sp {
        for (p, cdf) in q.iter_mut().zip(&cdfs) {
            *p = grid.centers()[cdf.sample(rng)];
        }
        leave_one_out_logs(&q, &mut loo);
        for (hist, logs) in hists.iter_mut().zip(&loo) {
            if let Some(p1) = logs.p1() {
                hist.add(grid.bin_of(p1), logs.log_partition());
            }
        }
    }
    Ok(hists.into_iter().map(LogHistogram::into_edge).collect())
}

/// Marginal estimate for one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct SpMarginal {
    /// Partition-weighted mean of the sampled beliefs.
    pub p1: f64,
    /// Partition-weighted histogram of the sampled beliefs.
    pub histogram: Vec<f64>,
    /// No draw carried weight; `p1` is 0.5 and the histogram uniform.
    pub degenerate: bool,
}

/// Draws full incoming message sets from the factor-to-variable surveys of
/// `var` and averages the resulting beliefs, each weighted by its
/// unnormalized partition value.
pub fn sp_marginal(
    surveys: &SurveyStore,
    adj: &Adjacency,
    var: usize,
    params: &SpParams,
    rng: &mut RngStream,
) -> Result<SpMarginal> {
    let grid = BinGrid::new(surveys.k())?;
    let factors = &adj.var_factors[var];
    let cdfs = factors
        .iter()
        .map(|&f| Cdf::new(surveys.f2v(f, var)))
        .collect::<Result<Vec<_>>>()?;
    let mut hist = LogHistogram::new(grid.k());
    // Running weighted mean with the weights rescaled to the largest seen.
    let (mut top, mut mass, mut mean_acc) = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut q = vec![0.0; factors.len()];
    for _ in 0..params.l_sp {
        for (p, cdf) in q.iter_mut().zip(&cdfs) {
            *p = grid.centers()[cdf.sample(rng)];
        }
        let logs = product_logs(q.iter().copied());
        let Some(p1) = logs.p1() else { continue };
        let lw = logs.log_partition();
        hist.add(grid.bin_of(p1), lw);
        if lw > top {
            let shrink = (top - lw).exp();
            mass *= shrink;
            mean_acc *= shrink;
            top = lw;
        }
        let w = (lw - top).exp();
        mass += w;
        mean_acc += w * p1;
    }
    let edge = hist.into_edge();
    if edge.degenerate || !(mass > 0.0) {
        return Ok(SpMarginal { p1: 0.5, histogram: edge.histogram, degenerate: true });
    }
    Ok(SpMarginal { p1: (mean_acc / mass).clamp(0.0, 1.0), histogram: edge.histogram, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::{sbp_factor_to_var, BpParams};
    use crate::graph::{TableFactor, TableGraph};
    use crate::messages::BpMessageStore;
    use crate::rng::{EngineTag, Lineage};

    fn rng(i: usize) -> RngStream {
        RngStream::new(17, Lineage::new(EngineTag::Test, i, 0, 0))
    }

    fn delta(k: usize, bin: usize) -> Vec<f64> {
        let mut h = vec![0.0; k];
        h[bin] = 1.0;
        h
    }

    #[test]
    fn delta_surveys_sample_their_center() {
        let grid = BinGrid::new(11).unwrap();
        let s = delta(11, 7);
        let mut r = rng(0);
        for _ in 0..100 {
            assert_eq!(sample_bp_messages_from_surveys(&[&s], &grid, &mut r).unwrap(), vec![0.7]);
        }
    }

    #[test]
    fn uniform_k2_is_fair() {
        let grid = BinGrid::new(2).unwrap();
        let s = [0.5, 0.5];
        let mut r = rng(1);
        let n = 10_000;
        let ones: f64 = (0..n).map(|_| sample_bp_messages_from_surveys(&[&s], &grid, &mut r).unwrap()[0]).sum();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((ones / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn empty_survey_is_degenerate() {
        let grid = BinGrid::new(3).unwrap();
        let s = [0.0; 3];
        assert!(matches!(
            sample_bp_messages_from_surveys(&[&s], &grid, &mut rng(0)),
            Err(Error::DegenerateSurvey)
        ));
    }

    fn surveys_with_v2f(m: usize, n: usize, k: usize, bins: &[usize]) -> SurveyStore {
        let mut s = SurveyStore::uniform(m, n, k);
        for f in 0..m {
            for (v, &b) in bins.iter().enumerate() {
                s.v2f_mut(f, v).copy_from_slice(&delta(k, b));
            }
        }
        s
    }

    #[test]
    fn constant_factor_gives_delta_at_half() {
        let g = TableGraph::new(2, vec![TableFactor { scope: vec![0, 1], table: vec![0.7; 4] }]);
        let s = SurveyStore::uniform(1, 2, 5);
        let params = SpParams { k_bins: 5, l_sp: 30, ..Default::default() };
        for e in s4p_factor_to_var(&g, &s, 0, &params, &mut rng(2)).unwrap() {
            assert_eq!(e.histogram, delta(5, 2));
        }
    }

    #[test]
    fn delta_inputs_reduce_to_sbp() {
        // Deterministic factor and delta surveys at 0 / 1: every inner SBP
        // update equals the single direct update.
        let g = TableGraph::new(
            3,
            vec![TableFactor { scope: vec![0, 1, 2], table: vec![0.2, 1.0, 0.5, 0.0, 0.9, 0.1, 0.3, 0.6] }],
        );
        let k = 5;
        let s = surveys_with_v2f(1, 3, k, &[4, 0, 4]);
        let params = SpParams { k_bins: k, l_sp: 100, ..Default::default() };
        let out = s4p_factor_to_var(&g, &s, 0, &params, &mut rng(3)).unwrap();
        let mut bp = BpMessageStore::uniform(1, 3);
        bp.var_to_factor.copy_from_slice(&[1.0, 0.0, 1.0]);
        let direct = sbp_factor_to_var(&g, &bp, 0, &BpParams::default(), &mut rng(4)).unwrap();
        let grid = BinGrid::new(k).unwrap();
        for (e, d) in out.iter().zip(&direct) {
            assert!(e.histogram[grid.bin_of(d.update.p1)] >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn all_zero_factor_is_degenerate() {
        let g = TableGraph::new(2, vec![TableFactor { scope: vec![0, 1], table: vec![0.0; 4] }]);
        let s = SurveyStore::uniform(1, 2, 3);
        let params = SpParams { k_bins: 3, l_sp: 5, ..Default::default() };
        for e in s4p_factor_to_var(&g, &s, 0, &params, &mut rng(5)).unwrap() {
            assert!(e.degenerate);
            assert_eq!(e.histogram, vec![1.0 / 3.0; 3]);
        }
    }

    fn surveys_with_f2v(m: usize, k: usize, hists: &[Vec<f64>]) -> SurveyStore {
        let mut s = SurveyStore::uniform(m, 1, k);
        for (f, h) in hists.iter().enumerate() {
            s.f2v_mut(f, 0).copy_from_slice(h);
        }
        s
    }

    #[test]
    fn var_update_passes_single_delta_through() {
        let k = 11;
        let s = surveys_with_f2v(2, k, &[delta(k, 9), delta(k, 3)]);
        let adj = Adjacency::dense(2, 1);
        let params = SpParams { k_bins: k, l_sp: 20, ..Default::default() };
        let out = s4p_var_to_factor(&s, &adj, 0, &params, &mut rng(6)).unwrap();
        // Factor 0 receives what factor 1 sent and vice versa.
        assert_eq!(out[0].histogram, delta(k, 3));
        assert_eq!(out[1].histogram, delta(k, 9));
    }

    #[test]
    fn var_update_of_halves_is_half() {
        let k = 5;
        let s = surveys_with_f2v(4, k, &vec![delta(k, 2); 4]);
        let adj = Adjacency::dense(4, 1);
        let params = SpParams { k_bins: k, l_sp: 10, ..Default::default() };
        for e in s4p_var_to_factor(&s, &adj, 0, &params, &mut rng(7)).unwrap() {
            assert_eq!(e.histogram, delta(k, 2));
        }
    }

    #[test]
    fn marginal_of_deltas() {
        let k = 5;
        let adj = Adjacency::dense(3, 1);
        let params = SpParams { k_bins: k, l_sp: 50, ..Default::default() };
        let s = surveys_with_f2v(3, k, &vec![delta(k, 4); 3]);
        assert_eq!(sp_marginal(&s, &adj, 0, &params, &mut rng(8)).unwrap().p1, 1.0);
        let s = surveys_with_f2v(3, k, &vec![delta(k, 2); 3]);
        let m = sp_marginal(&s, &adj, 0, &params, &mut rng(9)).unwrap();
        assert!((m.p1 - 0.5).abs() < 1e-12);
        assert_eq!(m.histogram, delta(k, 2));
    }

    #[test]
    fn contradictory_marginal_falls_back() {
        let k = 3;
        let adj = Adjacency::dense(2, 1);
        let params = SpParams { k_bins: k, l_sp: 10, ..Default::default() };
        let s = surveys_with_f2v(2, k, &[delta(k, 0), delta(k, 2)]);
        let m = sp_marginal(&s, &adj, 0, &params, &mut rng(10)).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.p1, 0.5);
    }
}
