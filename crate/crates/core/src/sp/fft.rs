//! Exact variable-to-factor survey updates by convolution on a logit grid.
//!
//! The belief a variable sends is `sigmoid(sum of incoming logits)` and its
//! partition weight is `prod p + prod (1 - p)`. Each incoming survey is
//! split into two tilted histograms over grid logits, one weighted by `p`
//! and one by `1 - p`, so that the weight factorizes over the sum. Both
//! channels are convolved in the frequency domain, leaving out one factor
//! at a time, and the weighted sum-of-logits distribution is mapped back
//! onto probability bins.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{EdgeSurvey, SpParams};
use crate::error::{contract, Error, Result};
use crate::graph::Adjacency;
use crate::grid::BinGrid;
use crate::messages::SurveyStore;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Grid offset of each bin center's clipped logit, and the probability the
/// rounded offset stands for.
fn center_offsets(grid: &BinGrid, clip: f64, step: f64) -> (Vec<i64>, Vec<f64>) {
    grid.centers()
        .iter()
        .map(|&c| {
            let t = (logit(c).clamp(-clip, clip) / step).round() as i64;
            (t, sigmoid(t as f64 * step))
        })
        .unzip()
}

/// Leave-one-out products of `spectra` (each a pair of channels), emitted
/// in order through `emit`.
fn leave_one_out<F: FnMut(usize, &[Complex64], &[Complex64])>(
    spectra: &[(Vec<Complex64>, Vec<Complex64>)],
    lo: usize,
    hi: usize,
    acc: (&[Complex64], &[Complex64]),
    emit: &mut F,
) {
    if hi - lo == 1 {
        emit(lo, acc.0, acc.1);
        return;
    }
    let mid = (lo + hi) / 2;
    let fold = |range: std::ops::Range<usize>| {
        let mut a = acc.0.to_vec();
        let mut b = acc.1.to_vec();
        for (sa, sb) in &spectra[range] {
            for (x, y) in a.iter_mut().zip(sa) {
                *x *= y;
            }
            for (x, y) in b.iter_mut().zip(sb) {
                *x *= y;
            }
        }
        (a, b)
    };
    let right = fold(mid..hi);
    leave_one_out(spectra, lo, mid, (&right.0, &right.1), emit);
    drop(right);
    let left = fold(lo..mid);
    leave_one_out(spectra, mid, hi, (&left.0, &left.1), emit);
}

/// Variable-to-factor surveys for every factor adjacent to `var`, in
/// adjacency order, computed deterministically.
pub fn s3p_var_to_factor_fft(
    surveys: &SurveyStore,
    adj: &Adjacency,
    var: usize,
    params: &SpParams,
) -> Result<Vec<EdgeSurvey>> {
    contract(params.logit_clip > 0.0 && params.logit_step > 0.0, || "logit grid must be positive".into())?;
    let grid = BinGrid::new(surveys.k())?;
    let k = grid.k();
    let factors = &adj.var_factors[var];
    let degree = factors.len();
    if degree == 0 {
        return Ok(Vec::new());
    }
    if degree == 1 {
        // No other factor: the message is the uniform one.
        let mut h = vec![0.0; k];
        h[grid.bin_of(0.5)] = 1.0;
        return Ok(vec![EdgeSurvey { histogram: h, degenerate: false }]);
    }
    let step = params.logit_step;
    let (offsets, probs) = center_offsets(&grid, params.logit_clip, step);
    let half = offsets.iter().map(|t| t.abs()).max().unwrap_or(0);
    let terms = degree - 1;
    let support = terms * (2 * half as usize) + 1;
    let len = support.next_power_of_two();
    let (forward, inverse) = plans(len);

    // Tilted, normalized channels per incoming survey, packed as a + ib.
    let mut spectra = Vec::with_capacity(degree);
    let mut log_mass = Vec::with_capacity(degree);
    for &f in factors {
        let survey = surveys.f2v(f, var);
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let (mut mass0, mut mass1) = (0.0, 0.0);
        for ((&s, &t), &p) in survey.iter().zip(&offsets).zip(&probs) {
            let idx = (t + half) as usize;
            buf[idx].re += s * (1.0 - p);
            buf[idx].im += s * p;
            mass0 += s * (1.0 - p);
            mass1 += s * p;
        }
        if !(mass0 > 0.0 && mass1 > 0.0) {
            return Err(Error::DegenerateSurvey);
        }
        for x in buf.iter_mut() {
            x.re /= mass0;
            x.im /= mass1;
        }
        forward.process(&mut buf);
        // Unpack the two real-signal spectra.
        let mut a = vec![Complex64::new(0.0, 0.0); len];
        let mut b = vec![Complex64::new(0.0, 0.0); len];
        for w in 0..len {
            let z = buf[w];
            let zc = buf[(len - w) % len].conj();
            a[w] = (z + zc) * 0.5;
            b[w] = (z - zc) * Complex64::new(0.0, -0.5);
        }
        spectra.push((a, b));
        log_mass.push((mass0.ln(), mass1.ln()));
    }
    let total0: f64 = log_mass.iter().map(|m| m.0).sum();
    let total1: f64 = log_mass.iter().map(|m| m.1).sum();

    // Bin of every reachable sum-of-logits offset.
    let shift = terms as i64 * half;
    let bin_of_sum: Vec<usize> =
        (0..support).map(|s| grid.bin_of(sigmoid((s as i64 - shift) as f64 * step))).collect();

    let ones = vec![Complex64::new(1.0, 0.0); len];
    let mut out = vec![None; degree];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    leave_one_out(&spectra, 0, degree, (&ones, &ones), &mut |i, a, b| {
        let l0 = total0 - log_mass[i].0;
        let l1 = total1 - log_mass[i].1;
        let top = l0.max(l1);
        let (c0, c1) = ((l0 - top).exp(), (l1 - top).exp());
        for ((x, ya), yb) in buf.iter_mut().zip(a).zip(b) {
            *x = ya * c0 + yb * c1;
        }
        inverse.process(&mut buf);
        let mut hist = vec![0.0; k];
        for (s, &bin) in bin_of_sum.iter().enumerate() {
            hist[bin] += buf[s].re.max(0.0);
        }
        out[i] = Some(EdgeSurvey::from_weights(hist));
    });
    Ok(out.into_iter().map(|e| e.expect("every edge emitted")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta(k: usize, bin: usize) -> Vec<f64> {
        let mut h = vec![0.0; k];
        h[bin] = 1.0;
        h
    }

    fn store(k: usize, hists: &[Vec<f64>]) -> SurveyStore {
        let mut s = SurveyStore::uniform(hists.len(), 1, k);
        for (f, h) in hists.iter().enumerate() {
            s.f2v_mut(f, 0).copy_from_slice(h);
        }
        s
    }

    fn params(k: usize) -> SpParams {
        SpParams { k_bins: k, ..Default::default() }
    }

    #[test]
    fn single_incoming_survey_round_trips() {
        let k = 11;
        let h: Vec<f64> = (0..k).map(|i| (i + 1) as f64 / 66.0).collect();
        let s = store(k, &[vec![1.0 / k as f64; k], h.clone()]);
        let out = s3p_var_to_factor_fft(&s, &Adjacency::dense(2, 1), 0, &params(k)).unwrap();
        // The weight of a lone message is p + (1 - p) = 1.
        for (a, b) in out[0].histogram.iter().zip(&h) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn two_deltas_at_point_eight() {
        let k = 6;
        let s = store(k, &[delta(k, 4), delta(k, 4), delta(k, 4)]);
        let out = s3p_var_to_factor_fft(&s, &Adjacency::dense(3, 1), 0, &params(k)).unwrap();
        let target = BinGrid::new(k).unwrap().bin_index(0.64 / 0.68).unwrap();
        for e in &out {
            assert!(e.histogram[target] > 1.0 - 1e-9);
        }
    }

    #[test]
    fn lone_edge_gets_half() {
        let k = 5;
        let s = store(k, &[delta(k, 0)]);
        let out = s3p_var_to_factor_fft(&s, &Adjacency::dense(1, 1), 0, &params(k)).unwrap();
        assert_eq!(out[0].histogram, delta(k, 2));
    }

    #[test]
    fn outputs_are_normalized() {
        let k = 31;
        let hists: Vec<Vec<f64>> = (0..9)
            .map(|f| (0..k).map(|i| ((i * 7 + f * 3) % 11) as f64 + 0.5).collect::<Vec<f64>>())
            .map(|h| {
                let t: f64 = h.iter().sum();
                h.iter().map(|x| x / t).collect()
            })
            .collect();
        let s = store(k, &hists);
        for e in s3p_var_to_factor_fft(&s, &Adjacency::dense(9, 1), 0, &params(k)).unwrap() {
            assert!((e.histogram.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(e.histogram.iter().all(|&x| x >= 0.0));
        }
    }
}
