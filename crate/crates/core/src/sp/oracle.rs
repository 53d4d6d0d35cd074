//! Exact binned SP by enumerating every bin combination. Tiny graphs only.

use super::SpParams;
use crate::bp::{check_exact_degree, exact_factor_messages, factor_table};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, FactorGraph};
use crate::grid::BinGrid;
use crate::messages::{damp_histogram_in_place, normalize_in_place, SurveyStore};

/// Largest number of bin combinations a single oracle update may visit.
pub const ORACLE_ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Clone, Debug)]
pub struct SpOracle {
    pub surveys: SurveyStore,
    pub marginals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Calls `visit(bins)` for every assignment of one bin per position.
fn for_each_combo(positions: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut bins = vec![0usize; positions];
    loop {
        visit(&bins);
        let mut j = 0;
        while j < positions {
            bins[j] += 1;
            if bins[j] < k {
                break;
            }
            bins[j] = 0;
            j += 1;
        }
        if j == positions {
            return;
        }
    }
}

fn factor_update(
    table: &[f64],
    scope: &[usize],
    factor: usize,
    surveys: &SurveyStore,
    grid: &BinGrid,
) -> Vec<Option<Vec<f64>>> {
    let k = grid.k();
    let d = scope.len();
    (0..d)
        .map(|pos| {
            let others: Vec<usize> = (0..d).filter(|&j| j != pos).collect();
            let mut hist = vec![0.0; k];
            let mut q = vec![0.5; d];
            for_each_combo(others.len(), k, |bins| {
                let mut w = 1.0;
                for (&j, &b) in others.iter().zip(bins) {
                    w *= surveys.v2f(factor, scope[j])[b];
                    q[j] = grid.centers()[b];
                }
                if w == 0.0 {
                    return;
                }
                if let Ok(updates) = exact_factor_messages(table, &q) {
                    let u = updates[pos];
                    hist[grid.bin_of(u.p1)] += w * u.partition();
                }
            });
            normalize_in_place(&mut hist).ok().map(|_| hist)
        })
        .collect()
}

/// Weighted histogram of `prod q / (prod q + prod (1 - q))` over every
/// bin combination of `slices`, plus the weighted mean.
fn product_histogram(slices: &[&[f64]], grid: &BinGrid) -> Option<(Vec<f64>, f64)> {
    let k = grid.k();
    let mut hist = vec![0.0; k];
    let mut mean = 0.0;
    for_each_combo(slices.len(), k, |bins| {
        let (mut w, mut p1u, mut p0u) = (1.0, 1.0, 1.0);
        for (s, &b) in slices.iter().zip(bins) {
            w *= s[b];
            let c = grid.centers()[b];
            p1u *= c;
            p0u *= 1.0 - c;
        }
        let z = p1u + p0u;
        if w == 0.0 || z == 0.0 {
            return;
        }
        hist[grid.bin_of(p1u / z)] += w * z;
        mean += w * p1u;
    });
    let total: f64 = hist.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mean = mean / total;
    normalize_in_place(&mut hist).ok()?;
    Some((hist, mean))
}

/// Iterates exact binned SP from uniform surveys with the damping,
/// iteration budget and tolerance of `params`, using exact BP updates
/// inside every bin combination.
pub fn exact_sp_oracle<G: FactorGraph>(graph: &G, params: &SpParams) -> Result<SpOracle> {
    params.validate()?;
    let grid = BinGrid::new(params.k_bins)?;
    let k = grid.k();
    let adj = Adjacency::of(graph);
    let degree = adj.max_factor_degree().max(adj.max_var_degree());
    check_exact_degree(adj.max_factor_degree())?;
    let combos = (k as f64).powi(degree.saturating_sub(1) as i32);
    if combos > ORACLE_ENUMERATION_LIMIT {
        return Err(Error::Tractability(format!(
            "{combos:.0} bin combinations per update exceed {ORACLE_ENUMERATION_LIMIT:.0}"
        )));
    }
    let (m, n) = (graph.num_factors(), graph.num_vars());
    let tables: Vec<Vec<f64>> = (0..m).map(|f| factor_table(graph, f)).collect();
    let mut surveys = SurveyStore::uniform(m, n, k);
    let uniform = vec![1.0 / k as f64; k];
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..params.max_iters {
        let before = surveys.clone();
        for f in 0..m {
            let scope = graph.scope(f);
            for (&v, hist) in scope.iter().zip(factor_update(&tables[f], scope, f, &before, &grid)) {
                damp_histogram_in_place(surveys.f2v_mut(f, v), hist.as_deref().unwrap_or(&uniform), params.gamma)?;
            }
        }
        let mid = surveys.clone();
        for v in 0..n {
            let factors = &adj.var_factors[v];
            for &f in factors {
                let slices: Vec<&[f64]> = factors.iter().filter(|&&j| j != f).map(|&j| mid.f2v(j, v)).collect();
                let fresh = product_histogram(&slices, &grid).map(|(h, _)| h);
                damp_histogram_in_place(surveys.v2f_mut(f, v), fresh.as_deref().unwrap_or(&uniform), params.gamma)?;
            }
        }
        iterations += 1;
        if surveys.max_abs_diff(&before) < params.tol {
            converged = true;
            break;
        }
    }
    let marginals = (0..n)
        .map(|v| {
            let slices: Vec<&[f64]> = adj.var_factors[v].iter().map(|&f| surveys.f2v(f, v)).collect();
            product_histogram(&slices, &grid).map_or(0.5, |(_, mean)| mean)
        })
        .collect();
    Ok(SpOracle { surveys, marginals, iterations, converged })
}
