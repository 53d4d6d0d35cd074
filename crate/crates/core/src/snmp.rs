//! The combined solver: stochastic BP first, survey propagation when BP
//! leaves constraints unsatisfied.

use std::time::Instant;

use crate::bp::{BpMode, BpParams, BpSolver};
use crate::messages::{BpMessageStore, SurveyStore};
use crate::error::{contract, Result};
use crate::model::{Architecture, Configuration};
use crate::problem::Problem;
use crate::sp::{SpParams, SpSolver, SpVariant};

pub use crate::bp::extract_config;

/// Adaptive damping is re-evaluated at multiples of this iteration count.
pub const ADAPTIVE_PERIOD: usize = 20;

/// Damping `1 - accuracy`.
pub fn adaptive_gamma(accuracy: f64) -> Result<f64> {
    contract((0.0..=1.0).contains(&accuracy), || format!("accuracy {accuracy} outside [0, 1]"))?;
    Ok(1.0 - accuracy)
}

/// Fraction of examples `config` classifies correctly.
pub fn accuracy(arch: &Architecture, inputs: &[u8], labels: &[u8], config: &Configuration) -> Result<f64> {
    contract(!labels.is_empty(), || "accuracy of an empty example set".into())?;
    let d = arch.input_dim();
    contract(inputs.len() == labels.len() * d, || "inputs and labels disagree in length".into())?;
    contract(config.len() == arch.param_count(), || "configuration length mismatch".into())?;
    let mut scratch = Vec::new();
    let correct = inputs
        .chunks_exact(d)
        .zip(labels)
        .filter(|(x, &y)| arch.forward_bits(&config.bits, x, &mut scratch) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineUsed {
    Sbp,
    S4p,
    S3p,
}

impl std::fmt::Display for EngineUsed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineUsed::Sbp => "sbp",
            EngineUsed::S4p => "s4p",
            EngineUsed::S3p => "s3p",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub config: Configuration,
    pub beliefs: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub engine_used: EngineUsed,
    /// BP iterations plus SP iterations, if SP ran.
    pub iterations: usize,
    pub wall_time: f64,
    pub seed: u64,
}

/// Message state handed to a progress observer.
pub enum SolverState<'a> {
    Bp(&'a BpMessageStore),
    Sp(&'a SurveyStore),
}

/// One completed iteration of either phase.
pub struct SnmpProgress<'a> {
    pub engine: EngineUsed,
    /// Counts BP iterations, then continues through SP iterations.
    pub iteration: usize,
    pub config: &'a Configuration,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub state: SolverState<'a>,
}

/// Runs stochastic BP and returns its configuration if it classifies every
/// training example correctly; otherwise runs SP from uniform surveys and
/// returns that result. `test` is an optional held-out set with the same
/// architecture.
pub fn run_snmp(
    problem: &Problem,
    bp_params: &BpParams,
    sp_params: &SpParams,
    seed: u64,
    test: Option<&Problem>,
) -> Result<SolveResult> {
    run_snmp_observed(problem, bp_params, sp_params, seed, test, |_| Ok(()))
}

/// [`run_snmp`] calling `observer` after every iteration. An error from the
/// observer aborts the run.
pub fn run_snmp_observed<F>(
    problem: &Problem,
    bp_params: &BpParams,
    sp_params: &SpParams,
    seed: u64,
    test: Option<&Problem>,
    mut observer: F,
) -> Result<SolveResult>
where
    F: FnMut(&SnmpProgress<'_>) -> Result<()>,
{
    if let Some(t) = test {
        contract(t.arch() == problem.arch(), || "test set uses another architecture".into())?;
    }
    let start = Instant::now();
    let test_acc = |c: &Configuration| test.map(|t| t.train_accuracy(c));

    let mut bp = BpSolver::new(problem, bp_params.clone(), BpMode::Stochastic, seed)?;
    let mut last = None;
    for _ in 0..bp_params.max_iters {
        let step = bp.step()?;
        observer(&SnmpProgress {
            engine: EngineUsed::Sbp,
            iteration: step.iteration,
            config: &step.config,
            train_accuracy: step.train_accuracy,
            test_accuracy: test_acc(&step.config),
            state: SolverState::Bp(bp.store()),
        })?;
        let done = step.max_delta < bp_params.tol;
        last = Some(step);
        if done {
            break;
        }
    }
    let last = last.expect("max_iters >= 1");
    let bp_iterations = bp.iteration();

    let (config, beliefs, engine_used, iterations) = if last.train_accuracy == 1.0 {
        (last.config, last.beliefs, EngineUsed::Sbp, bp_iterations)
    } else {
        let engine = match sp_params.variant {
            SpVariant::S3p => EngineUsed::S3p,
            SpVariant::S4p => EngineUsed::S4p,
        };
        let mut sp = SpSolver::new(problem, sp_params.clone(), seed)?;
        let mut last = None;
        for _ in 0..sp_params.max_iters {
            let step = sp.step()?;
            observer(&SnmpProgress {
                engine,
                iteration: bp_iterations + step.iteration,
                config: &step.config,
                train_accuracy: step.train_accuracy,
                test_accuracy: test_acc(&step.config),
                state: SolverState::Sp(sp.surveys()),
            })?;
            let done = step.max_delta < sp_params.tol;
            last = Some(step);
            if done {
                break;
            }
        }
        let last = last.expect("max_iters >= 1");
        (last.config, last.marginals, engine, bp_iterations + sp.iteration())
    };
    let train_accuracy = problem.train_accuracy(&config);
    let test_accuracy = test_acc(&config);
    Ok(SolveResult {
        config,
        beliefs,
        train_accuracy,
        test_accuracy,
        engine_used,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        seed,
    })
}
