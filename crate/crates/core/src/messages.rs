//! Dense message stores, damping and histogram normalization.
//!
//! Both stores are laid out row-major by factor: the entry for edge
//! `(factor, var)` lives at `factor * n + var` (times `k` for surveys).

use crate::error::{contract, Error, Result};

/// Scalar BP messages in p-form, `p(w = 1)`, for both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct BpMessageStore {
    m: usize,
    n: usize,
    pub var_to_factor: Vec<f64>,
    pub factor_to_var: Vec<f64>,
}

impl BpMessageStore {
    /// All messages at 0.5.
    pub fn uniform(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            var_to_factor: vec![0.5; m * n],
            factor_to_var: vec![0.5; m * n],
        }
    }

    pub fn from_parts(
        m: usize,
        n: usize,
        var_to_factor: Vec<f64>,
        factor_to_var: Vec<f64>,
    ) -> Result<Self> {
        contract(var_to_factor.len() == m * n && factor_to_var.len() == m * n, || {
            format!("message store expects {} entries per direction", m * n)
        })?;
        let store = Self { m, n, var_to_factor, factor_to_var };
        store.validate()?;
        Ok(store)
    }

    pub fn num_factors(&self) -> usize {
        self.m
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn idx(&self, factor: usize, var: usize) -> usize {
        factor * self.n + var
    }

    #[inline]
    pub fn v2f(&self, factor: usize, var: usize) -> f64 {
        self.var_to_factor[factor * self.n + var]
    }

    #[inline]
    pub fn f2v(&self, factor: usize, var: usize) -> f64 {
        self.factor_to_var[factor * self.n + var]
    }

    /// Messages sent from variables to `factor`, indexed by variable.
    pub fn v2f_row(&self, factor: usize) -> &[f64] {
        &self.var_to_factor[factor * self.n..(factor + 1) * self.n]
    }

    /// Every entry finite and inside `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let ok = self
            .var_to_factor
            .iter()
            .chain(&self.factor_to_var)
            .all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        contract(ok, || "BP message outside [0, 1] or non-finite".into())
    }

    /// Largest absolute entry-wise difference over both directions.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.var_to_factor, &other.var_to_factor)
            .max(max_abs_diff(&self.factor_to_var, &other.factor_to_var))
    }
}

/// Surveys: per-edge histograms over `k` probability bins, both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct SurveyStore {
    m: usize,
    n: usize,
    k: usize,
    pub var_to_factor: Vec<f64>,
    pub factor_to_var: Vec<f64>,
}

impl SurveyStore {
    /// Every slice uniform over the `k` bins.
    pub fn uniform(m: usize, n: usize, k: usize) -> Self {
        let v = 1.0 / k as f64;
        Self {
            m,
            n,
            k,
            var_to_factor: vec![v; m * n * k],
            factor_to_var: vec![v; m * n * k],
        }
    }

    pub fn from_parts(
        m: usize,
        n: usize,
        k: usize,
        var_to_factor: Vec<f64>,
        factor_to_var: Vec<f64>,
    ) -> Result<Self> {
        contract(
            var_to_factor.len() == m * n * k && factor_to_var.len() == m * n * k,
            || format!("survey store expects {} entries per direction", m * n * k),
        )?;
        Ok(Self { m, n, k, var_to_factor, factor_to_var })
    }

    pub fn num_factors(&self) -> usize {
        self.m
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn range(&self, factor: usize, var: usize) -> std::ops::Range<usize> {
        let start = (factor * self.n + var) * self.k;
        start..start + self.k
    }

    pub fn v2f(&self, factor: usize, var: usize) -> &[f64] {
        &self.var_to_factor[self.range(factor, var)]
    }

    pub fn f2v(&self, factor: usize, var: usize) -> &[f64] {
        &self.factor_to_var[self.range(factor, var)]
    }

    pub fn v2f_mut(&mut self, factor: usize, var: usize) -> &mut [f64] {
        let r = self.range(factor, var);
        &mut self.var_to_factor[r]
    }

    pub fn f2v_mut(&mut self, factor: usize, var: usize) -> &mut [f64] {
        let r = self.range(factor, var);
        &mut self.factor_to_var[r]
    }

    /// Every slice nonnegative and summing to one within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for data in [&self.var_to_factor, &self.factor_to_var] {
            for slice in data.chunks(self.k) {
                let ok = slice.iter().all(|v| v.is_finite() && *v >= 0.0)
                    && (slice.iter().sum::<f64>() - 1.0).abs() <= tol;
                contract(ok, || format!("survey slice not normalized: {slice:?}"))?;
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.var_to_factor, &other.var_to_factor)
            .max(max_abs_diff(&self.factor_to_var, &other.factor_to_var))
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_gamma(gamma: f64) -> Result<()> {
    contract((0.0..=1.0).contains(&gamma), || format!("damping factor {gamma} outside [0, 1]"))
}

/// `(1 - gamma) * old + gamma * fresh`.
pub fn damp(old: f64, fresh: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(damp_unchecked(old, fresh, gamma))
}

#[inline]
pub(crate) fn damp_unchecked(old: f64, fresh: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        fresh
    } else if gamma == 0.0 {
        old
    } else {
        (1.0 - gamma) * old + gamma * fresh
    }
}

/// Damps histogram `old` towards `fresh` and renormalizes the result.
pub fn damp_histogram(old: &[f64], fresh: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    contract(old.len() == fresh.len(), || "histogram shapes differ".into())?;
    let mut out = old.to_vec();
    damp_histogram_in_place(&mut out, fresh, gamma)?;
    Ok(out)
}

pub(crate) fn damp_histogram_in_place(old: &mut [f64], fresh: &[f64], gamma: f64) -> Result<()> {
    if gamma == 0.0 {
        return Ok(());
    }
    for (o, f) in old.iter_mut().zip(fresh) {
        *o = damp_unchecked(*o, *f, gamma);
    }
    normalize_in_place(old)
}

/// Scales a nonnegative histogram to unit mass.
pub fn normalize_histogram(unnormalized: &[f64]) -> Result<Vec<f64>> {
    let mut out = unnormalized.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn normalize_in_place(hist: &mut [f64]) -> Result<()> {
    contract(hist.iter().all(|v| *v >= 0.0), || "histogram has negative or NaN entries".into())?;
    let total: f64 = hist.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateSurvey);
    }
    for v in hist.iter_mut() {
        *v /= total;
    }
    Ok(())
}
