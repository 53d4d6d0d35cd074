//! Random small instances on which every engine must keep messages in
//! [0, 1] and survey slices normalized after each iteration.

#![allow(dead_code)]

use binmp_core::{
    Architecture, Beta, BpMessageStore, BpMode, BpParams, BpSolver, Problem, Schedule, SpParams, SpSolver,
    SpVariant, SurveyStore, TableGraph,
};
use proptest::prelude::*;

pub fn check_bp(store: &BpMessageStore) -> Result<(), TestCaseError> {
    for &x in store.var_to_factor.iter().chain(&store.factor_to_var) {
        prop_assert!((0.0..=1.0).contains(&x), "message {x}");
    }
    Ok(())
}

pub fn check_surveys(store: &SurveyStore) -> Result<(), TestCaseError> {
    let k = store.k();
    for slice in store.var_to_factor.chunks(k).chain(store.factor_to_var.chunks(k)) {
        let total: f64 = slice.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9, "slice sums to {total}");
        prop_assert!(slice.iter().all(|&x| x >= 0.0));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Case {
    pub n: usize,
    pub m: usize,
    pub bits: Vec<u8>,
    pub labels: Vec<u8>,
    pub beta: Option<f64>,
    pub gamma: f64,
    pub k: usize,
    pub batch: usize,
    pub seed: u64,
}

pub fn cases() -> impl Strategy<Value = Case> {
    (1usize..=5, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0u8..=1, n * m),
            prop::collection::vec(0u8..=1, m),
            prop::option::of(0.05f64..20.0),
            0.0f64..=1.0,
            2usize..=9,
            0usize..=m,
            any::<u64>(),
        )
            .prop_map(move |(bits, labels, beta, gamma, k, batch, seed)| Case {
                n,
                m,
                bits,
                labels,
                beta,
                gamma,
                k,
                batch,
                seed,
            })
    })
}

pub fn run_case(c: &Case) -> Result<(), TestCaseError> {
    let beta = c.beta.map_or(Beta::INFINITE, |b| Beta::new(b).unwrap());
    let p = Problem::new(c.bits.clone(), c.labels.clone(), Architecture::Linear { input_dim: c.n }, beta).unwrap();
    let schedule = if c.batch == 0 { Schedule::Full } else { Schedule::MiniBatch(c.batch) };
    let bp = BpParams { l_bp: 4, gamma: c.gamma, max_iters: 3, schedule, ..Default::default() };

    let mut sbp = BpSolver::new(&p, bp.clone(), BpMode::Stochastic, c.seed).unwrap();
    for _ in 0..3 {
        sbp.step().unwrap();
        check_bp(sbp.store())?;
    }
    // Exact BP may legitimately hit an all-zero factor at infinite beta.
    let mut exact = BpSolver::new(&p, bp, BpMode::Exact, c.seed).unwrap();
    for _ in 0..3 {
        match exact.step() {
            Ok(_) => check_bp(exact.store())?,
            Err(binmp_core::Error::Contradiction) => {
                prop_assert!(c.beta.is_none());
                break;
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
    for variant in [SpVariant::S3p, SpVariant::S4p] {
        let sp = SpParams { k_bins: c.k, l_sp: 6, l_bp: 3, gamma: c.gamma, variant, schedule, ..Default::default() };
        let mut solver = SpSolver::new(&p, sp, c.seed).unwrap();
        for _ in 0..2 {
            let step = solver.step().unwrap();
            check_surveys(solver.surveys())?;
            for h in &step.histograms {
                prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
            prop_assert!(step.marginals.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
    Ok(())
}


pub fn run_tree_case(n: usize, seed: u64, gamma: f64) -> Result<(), TestCaseError> {
    let g = TableGraph::random_tree(n, seed);
    let params = BpParams { gamma, max_iters: 3, l_bp: 5, ..Default::default() };
    for mode in [BpMode::Exact, BpMode::Stochastic] {
        let mut s = BpSolver::new(&g, params.clone(), mode, seed).unwrap();
        for _ in 0..3 {
            s.step().unwrap();
            check_bp(s.store())?;
        }
    }
    Ok(())
}
