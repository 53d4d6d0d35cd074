//! Factor graph abstraction shared by the BP and SP engines.
//!
//! Training problems are dense (every factor touches every variable) but
//! the engines only rely on this trait, so small sparse graphs with
//! explicit tables can be used to check them against brute force.

use rand::Rng;

use crate::rng::{EngineTag, Lineage, RngStream};

pub trait FactorGraph: Sync {
    fn num_factors(&self) -> usize;
    fn num_vars(&self) -> usize;
    /// Variables adjacent to `factor`, ascending.
    fn scope(&self, factor: usize) -> &[usize];
    /// Factor value on a full-length bit configuration. Bits outside the
    /// scope are ignored.
    fn value(&self, factor: usize, config: &[u8]) -> f64;

    /// Same as [`value`](Self::value), reusing a caller-owned buffer.
    fn value_with(&self, factor: usize, config: &[u8], _scratch: &mut Vec<i32>) -> f64 {
        self.value(factor, config)
    }

    /// Hard satisfaction, used for accuracy traces.
    fn satisfied(&self, factor: usize, config: &[u8]) -> bool {
        self.value(factor, config) >= 1.0
    }
}

/// Neighbor lists in both directions.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub factor_vars: Vec<Vec<usize>>,
    pub var_factors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn of<G: FactorGraph + ?Sized>(graph: &G) -> Self {
        let mut var_factors = vec![Vec::new(); graph.num_vars()];
        let factor_vars: Vec<Vec<usize>> =
            (0..graph.num_factors()).map(|f| graph.scope(f).to_vec()).collect();
        for (f, scope) in factor_vars.iter().enumerate() {
            for &v in scope {
                var_factors[v].push(f);
            }
        }
        Self { factor_vars, var_factors }
    }

    pub fn dense(m: usize, n: usize) -> Self {
        Self {
            factor_vars: vec![(0..n).collect(); m],
            var_factors: vec![(0..m).collect(); n],
        }
    }

    pub fn max_factor_degree(&self) -> usize {
        self.factor_vars.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_var_degree(&self) -> usize {
        self.var_factors.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// A factor given by an explicit nonnegative table over its scope.
///
/// Entry `t` of the table corresponds to the assignment where scope
/// variable `j` takes bit `(t >> j) & 1`.
#[derive(Clone, Debug)]
pub struct TableFactor {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TableGraph {
    n: usize,
    factors: Vec<TableFactor>,
}

impl TableGraph {
    pub fn new(n: usize, factors: Vec<TableFactor>) -> Self {
        for f in &factors {
            assert_eq!(f.table.len(), 1 << f.scope.len(), "table size must be 2^|scope|");
            assert!(f.scope.windows(2).all(|w| w[0] < w[1]), "scope must be ascending");
            assert!(f.scope.iter().all(|&v| v < n), "scope variable out of range");
        }
        Self { n, factors }
    }

    pub fn factors(&self) -> &[TableFactor] {
        &self.factors
    }

    /// Random tree-structured factor graph over `n` variables with
    /// strictly positive tables.
    ///
    /// Each new factor joins exactly one existing variable to one or two
    /// fresh ones, so the bipartite graph stays acyclic. Some variables
    /// also get a unary factor.
    pub fn random_tree(n: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, Lineage::new(EngineTag::Test, n, 0, 0));
        let mut factors = Vec::new();
        let mut next = 1;
        while next < n {
            let anchor = rng.gen_range(0..next);
            let fresh = if next + 1 < n && rng.gen_bool(0.3) { 2 } else { 1 };
            let mut scope: Vec<usize> = std::iter::once(anchor).chain(next..next + fresh).collect();
            scope.sort_unstable();
            next += fresh;
            factors.push(Self::random_factor(scope, &mut rng));
        }
        for v in 0..n {
            if rng.gen_bool(0.4) {
                factors.push(Self::random_factor(vec![v], &mut rng));
            }
        }
        if factors.is_empty() {
            factors.push(Self::random_factor(vec![0], &mut rng));
        }
        Self::new(n, factors)
    }

    fn random_factor(scope: Vec<usize>, rng: &mut RngStream) -> TableFactor {
        let table = (0..1 << scope.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
        TableFactor { scope, table }
    }
}

impl FactorGraph for TableGraph {
    fn num_factors(&self) -> usize {
        self.factors.len()
    }

    fn num_vars(&self) -> usize {
        self.n
    }

    fn scope(&self, factor: usize) -> &[usize] {
        &self.factors[factor].scope
    }

    fn value(&self, factor: usize, config: &[u8]) -> f64 {
        let f = &self.factors[factor];
        let t = f
            .scope
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &v)| acc | ((config[v] as usize & 1) << j));
        f.table[t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_tree_is_acyclic() {
        for seed in 0..20 {
            let g = TableGraph::random_tree(8, seed);
            let adj = Adjacency::of(&g);
            // Bipartite tree/forest: edges = nodes - components.
            let edges: usize = adj.factor_vars.iter().map(Vec::len).sum();
            let nodes = g.num_vars() + g.num_factors();
            assert_eq!(edges + 1, nodes, "seed {seed}");
        }
    }

    #[test]
    fn table_lookup_uses_scope_order() {
        let g = TableGraph::new(
            3,
            vec![TableFactor { scope: vec![0, 2], table: vec![1.0, 2.0, 3.0, 4.0] }],
        );
        assert_eq!(g.value(0, &[0, 1, 0]), 1.0);
        assert_eq!(g.value(0, &[1, 0, 0]), 2.0);
        assert_eq!(g.value(0, &[0, 0, 1]), 3.0);
        assert_eq!(g.value(0, &[1, 1, 1]), 4.0);
    }
}
