//! Training problems as factor graphs.
//!
//! Example `I` contributes the factor `f_I(w) = [g_w(x_I) = y_I]`. With a
//! finite inverse temperature `beta` an unsatisfied factor is worth
//! `exp(-beta)` instead of zero, so the joint weight of a configuration is
//! `exp(-beta * #unsatisfied)`.

use crate::error::{contract, Result};
use crate::graph::FactorGraph;
use crate::model::{Architecture, Configuration};

/// Inverse temperature: positive, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beta(f64);

impl Beta {
    pub const INFINITE: Beta = Beta(f64::INFINITY);

    pub fn new(beta: f64) -> Result<Self> {
        contract(beta > 0.0, || format!("beta must be positive, got {beta}"))?;
        Ok(Beta(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Factor value when the example is misclassified.
    pub fn unsatisfied_value(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            (-self.0).exp()
        }
    }
}

impl std::fmt::Display for Beta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Beta {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "+inf" => Ok(Beta::INFINITE),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| crate::Error::Contract(format!("cannot parse beta {other:?}")))?;
                Beta::new(v)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    inputs: Vec<u8>,
    labels: Vec<u8>,
    arch: Architecture,
    beta: Beta,
    d: usize,
    all_vars: Vec<usize>,
    unsat: f64,
}

impl Problem {
    /// `inputs` is row-major `[M x d]` with `d = arch.input_dim()`.
    pub fn new(inputs: Vec<u8>, labels: Vec<u8>, arch: Architecture, beta: Beta) -> Result<Self> {
        arch.validate()?;
        let d = arch.input_dim();
        let m = labels.len();
        contract(m >= 1, || "a problem needs at least one example".into())?;
        contract(inputs.len() == m * d, || {
            format!("inputs hold {} values, expected {m} x {d}", inputs.len())
        })?;
        contract(
            inputs.iter().chain(&labels).all(|&v| v <= 1),
            || "inputs and labels must be binary".into(),
        )?;
        let n = arch.param_count();
        contract(n > 0, || "architecture has no parameters".into())?;
        Ok(Self {
            inputs,
            labels,
            arch,
            beta,
            d,
            all_vars: (0..n).collect(),
            unsat: beta.unsatisfied_value(),
        })
    }

    pub fn num_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_params(&self) -> usize {
        self.all_vars.len()
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn beta(&self) -> Beta {
        self.beta
    }

    pub fn input(&self, factor: usize) -> &[u8] {
        &self.inputs[factor * self.d..(factor + 1) * self.d]
    }

    pub fn inputs(&self) -> &[u8] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Same data and architecture at another temperature.
    pub fn with_beta(&self, beta: Beta) -> Self {
        Self { beta, unsat: beta.unsatisfied_value(), ..self.clone() }
    }

    /// Same architecture and temperature restricted to a subset of examples.
    pub fn subset(&self, factors: &[usize]) -> Result<Self> {
        let inputs = factors.iter().flat_map(|&f| self.input(f).iter().copied()).collect();
        let labels = factors.iter().map(|&f| self.labels[f]).collect();
        Self::new(inputs, labels, self.arch.clone(), self.beta)
    }

    /// Hard predicate: 1 iff the network classifies example `factor` correctly.
    pub fn factor_eval(&self, config: &Configuration, factor: usize) -> Result<u8> {
        contract(factor < self.num_examples(), || format!("factor {factor} out of range"))?;
        let label = self.arch.forward(config, self.input(factor))?;
        Ok((label == self.labels[factor]) as u8)
    }

    /// 1 if satisfied, `exp(-beta)` otherwise.
    pub fn relaxed_factor_eval(&self, config: &Configuration, factor: usize) -> Result<f64> {
        Ok(if self.factor_eval(config, factor)? == 1 { 1.0 } else { self.unsat })
    }

    /// Relaxed values for a batch of candidate configurations.
    pub fn batch_eval(&self, configs: &[Configuration], factor: usize) -> Result<Vec<f64>> {
        contract(factor < self.num_examples(), || format!("factor {factor} out of range"))?;
        let n = self.num_params();
        contract(configs.iter().all(|c| c.len() == n), || "configuration length mismatch".into())?;
        let mut scratch = Vec::new();
        Ok(configs
            .iter()
            .map(|c| self.value_with(factor, &c.bits, &mut scratch))
            .collect())
    }

    /// Fraction of training examples classified correctly.
    pub fn train_accuracy(&self, config: &Configuration) -> f64 {
        let mut scratch = Vec::new();
        let correct = (0..self.num_examples())
            .filter(|&f| self.hard_eval(f, &config.bits, &mut scratch))
            .count();
        correct as f64 / self.num_examples() as f64
    }

    #[inline]
    fn hard_eval(&self, factor: usize, bits: &[u8], scratch: &mut Vec<i32>) -> bool {
        self.arch.forward_bits(bits, self.input(factor), scratch) == self.labels[factor]
    }
}

impl FactorGraph for Problem {
    fn num_factors(&self) -> usize {
        self.num_examples()
    }

    fn num_vars(&self) -> usize {
        self.num_params()
    }

    fn scope(&self, _factor: usize) -> &[usize] {
        &self.all_vars
    }

    fn value(&self, factor: usize, config: &[u8]) -> f64 {
        self.value_with(factor, config, &mut Vec::new())
    }

    #[inline]
    fn value_with(&self, factor: usize, config: &[u8], scratch: &mut Vec<i32>) -> f64 {
        if self.hard_eval(factor, config, scratch) {
            1.0
        } else {
            self.unsat
        }
    }

    fn satisfied(&self, factor: usize, config: &[u8]) -> bool {
        self.hard_eval(factor, config, &mut Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(beta: Beta) -> Problem {
        // Two examples on a 2-input linear model.
        Problem::new(vec![1, 1, 1, 0], vec![1, 0], Architecture::Linear { input_dim: 2 }, beta).unwrap()
    }

    #[test]
    fn factor_eval_is_the_indicator() {
        let p = tiny(Beta::INFINITE);
        let c = Configuration::new(vec![1, 1]).unwrap();
        assert_eq!(p.factor_eval(&c, 0).unwrap(), 1);
        assert_eq!(p.factor_eval(&c, 1).unwrap(), 0);
    }

    #[test]
    fn relaxed_values() {
        let c = Configuration::new(vec![1, 1]).unwrap();
        assert_eq!(tiny(Beta::INFINITE).relaxed_factor_eval(&c, 0).unwrap(), 1.0);
        assert_eq!(tiny(Beta::INFINITE).relaxed_factor_eval(&c, 1).unwrap(), 0.0);
        let v = tiny(Beta::new(1.0).unwrap()).relaxed_factor_eval(&c, 1).unwrap();
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(tiny(Beta::new(1.0).unwrap()).relaxed_factor_eval(&c, 0).unwrap(), 1.0);
    }

    #[test]
    fn beta_must_be_positive() {
        assert!(Beta::new(0.0).is_err());
        assert!(Beta::new(-1.0).is_err());
        assert!(Beta::new(f64::NAN).is_err());
        assert!("inf".parse::<Beta>().unwrap().is_infinite());
        assert_eq!("2.5".parse::<Beta>().unwrap().value(), 2.5);
    }

    #[test]
    fn rejects_bad_problems() {
        let arch = Architecture::Linear { input_dim: 2 };
        assert!(Problem::new(vec![], vec![], arch.clone(), Beta::INFINITE).is_err());
        assert!(Problem::new(vec![1, 2], vec![1], arch.clone(), Beta::INFINITE).is_err());
        assert!(Problem::new(vec![1], vec![1], arch, Beta::INFINITE).is_err());
    }

    #[test]
    fn batch_matches_single_evals() {
        let p = tiny(Beta::new(2.0).unwrap());
        let configs: Vec<_> = [[0, 0], [0, 1], [1, 0], [1, 1], [1, 1]]
            .iter()
            .map(|b| Configuration::new(b.to_vec()).unwrap())
            .collect();
        for f in 0..2 {
            let batch = p.batch_eval(&configs, f).unwrap();
            for (c, v) in configs.iter().zip(&batch) {
                assert_eq!(*v, p.relaxed_factor_eval(c, f).unwrap());
            }
            assert_eq!(batch[3], batch[4]);
        }
        assert_eq!(p.batch_eval(&configs[..1], 0).unwrap()[0], p.relaxed_factor_eval(&configs[0], 0).unwrap());
    }

    proptest! {
        #[test]
        fn relaxed_is_monotone_in_beta(b1 in 0.01f64..50.0, b2 in 0.01f64..50.0) {
            let c = Configuration::new(vec![1, 1]).unwrap();
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            let v_lo = tiny(Beta::new(lo).unwrap()).relaxed_factor_eval(&c, 1).unwrap();
            let v_hi = tiny(Beta::new(hi).unwrap()).relaxed_factor_eval(&c, 1).unwrap();
            prop_assert!(v_hi <= v_lo);
            prop_assert_eq!(tiny(Beta::new(lo).unwrap()).relaxed_factor_eval(&c, 0).unwrap(), 1.0);
        }
    }
}
