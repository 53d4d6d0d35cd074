//! Reference computations written independently of the engines: plain
//! enumeration over configurations or bin combinations, no shared helpers.

#![allow(dead_code)]

use binmp_core::{FactorGraph, TableGraph};

/// Marginal `P(x_v = 1)` for every variable by summing the product of all
/// factor values over every configuration.
pub fn brute_force_marginals(graph: &TableGraph) -> Vec<f64> {
    let n = graph.num_vars();
    let mut z = 0.0;
    let mut ones = vec![0.0; n];
    let mut config = vec![0u8; n];
    for mask in 0u64..(1 << n) {
        for (v, c) in config.iter_mut().enumerate() {
            *c = ((mask >> v) & 1) as u8;
        }
        let w: f64 = (0..graph.num_factors()).map(|f| graph.value(f, &config)).product();
        z += w;
        for v in 0..n {
            if config[v] == 1 {
                ones[v] += w;
            }
        }
    }
    ones.iter().map(|o| o / z).collect()
}

/// Unnormalized factor-to-variable message by enumerating the rest of the
/// scope with incoming probabilities `q` (indexed by variable).
pub fn factor_message_unnorm<G: FactorGraph>(graph: &G, factor: usize, var: usize, q: &[f64]) -> (f64, f64) {
    let scope = graph.scope(factor).to_vec();
    let others: Vec<usize> = scope.iter().copied().filter(|&v| v != var).collect();
    let mut config = vec![0u8; graph.num_vars()];
    let (mut s1, mut s0) = (0.0, 0.0);
    for mask in 0u64..(1 << others.len()) {
        let mut w = 1.0;
        for (j, &v) in others.iter().enumerate() {
            let bit = ((mask >> j) & 1) as u8;
            config[v] = bit;
            w *= if bit == 1 { q[v] } else { 1.0 - q[v] };
        }
        config[var] = 1;
        s1 += w * graph.value(factor, &config);
        config[var] = 0;
        s0 += w * graph.value(factor, &config);
    }
    (s1, s0)
}

/// Variable-to-factor surveys by enumerating every bin combination of the
/// other incoming surveys. Each combination is weighted by the product of
/// its survey entries and by the partition `prod c + prod (1 - c)`, then
/// binned at its normalized product. Centers are `b / (K - 1)`, so the
/// product and the bin are computed exactly on the integers `b`, which
/// settles ties on bin boundaries by the round-half-up rule.
pub fn enumerate_var_to_factor(incoming: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let top = (k - 1) as u128;
    let d = incoming.len();
    (0..d)
        .map(|out| {
            let others: Vec<&Vec<f64>> = (0..d).filter(|&j| j != out).map(|j| &incoming[j]).collect();
            let scale = (top as f64).powi(others.len() as i32);
            let mut hist = vec![0.0; k];
            let combos = k.pow(others.len() as u32);
            for mut code in 0..combos {
                let (mut w, mut ones, mut zeros) = (1.0, 1u128, 1u128);
                for s in &others {
                    let b = code % k;
                    code /= k;
                    w *= s[b];
                    ones *= b as u128;
                    zeros *= top - b as u128;
                }
                let den = ones + zeros;
                if w > 0.0 && den > 0 {
                    // round(ones / den * top) with halves going up
                    let bin = ((2 * ones * top + den) / (2 * den)) as usize;
                    hist[bin] += w * den as f64 / scale;
                }
            }
            let total: f64 = hist.iter().sum();
            hist.iter().map(|h| h / total).collect()
        })
        .collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, (var / xs.len() as f64).sqrt())
}
