//! The five experiment commands. Each `*_rows` function computes results in
//! memory; [`run`] writes them under the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use binmp_core::checkpoint::Checkpoint;
use binmp_core::datasets::{gen_glass, gen_stained_glass, load_digits_csv, load_mnist_idx, Dataset};
use binmp_core::{
    run_bp, run_snmp_observed, run_sp, Beta, BinGrid, BpMode, BpSolver, EngineUsed, Problem, SolverState,
    SpSolver, SpVariant,
};
use log::info;
use rayon::prelude::*;

use crate::config::{DatasetKind, DatasetSpec, ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};
use crate::output::{real, write_csv};

pub const CONSISTENCY_BP_HEADER: [&str; 7] = ["N", "M", "gamma", "L_BP", "seed", "acc_exact", "acc_sbp"];
pub const CONSISTENCY_SP_HEADER: [&str; 8] = ["K", "gamma", "L_BP", "L_SP", "M", "seed", "acc_s3p", "acc_s4p"];
pub const PHASE_HEADER: [&str; 7] = ["dataset", "N", "M", "alpha", "seed", "engine", "train_acc"];
pub const PHASE_MEANS_HEADER: [&str; 7] = ["dataset", "N", "M", "alpha", "engine", "seeds", "mean_train_acc"];
pub const BIN_RUNS_HEADER: [&str; 6] = ["engine", "L_SP", "seed", "iterations", "train_acc", "file"];
pub const MNIST_HEADER: [&str; 6] = ["beta", "seed", "engine", "iteration", "train_acc", "test_acc"];
pub const MNIST_FINAL_HEADER: [&str; 6] = ["beta", "seed", "engine_used", "iterations", "train_acc", "test_acc"];

/// Header of a bin-trace file with `k` bins.
pub fn bin_trace_header(k: usize) -> Vec<String> {
    ["iteration".to_string(), "variable".to_string()]
        .into_iter()
        .chain((0..k).map(|b| format!("bin_{b}")))
        .collect()
}

/// Loads or generates the configured dataset with `m` training examples
/// (0 keeps everything a loader finds).
pub fn load_dataset(spec: &DatasetSpec, m: usize, seed: u64) -> Result<Dataset> {
    let keep = |ds: Dataset| -> Result<Dataset> {
        if m > ds.num_examples() {
            return Err(CliError::Data(format!("asked for {m} examples, the data holds {}", ds.num_examples())));
        }
        Ok(if m == 0 { ds } else { ds.truncate(m) })
    };
    match spec.kind {
        DatasetKind::Glass => gen_glass(spec.n, m, seed).map_err(CliError::data),
        DatasetKind::StainedGlass => gen_stained_glass(&spec.teacher(), m, seed).map_err(CliError::data),
        DatasetKind::Digits => keep(load_digits_csv(&spec.path, spec.classes, None).map_err(CliError::data)?),
        DatasetKind::Mnist => {
            let file = |name: &str| spec.path.join(name);
            let train = load_mnist_idx(
                &file("train-images-idx3-ubyte"),
                &file("train-labels-idx1-ubyte"),
                spec.classes,
                spec.pool,
            )
            .map_err(CliError::data)?;
            let test = load_mnist_idx(
                &file("t10k-images-idx3-ubyte"),
                &file("t10k-labels-idx1-ubyte"),
                spec.classes,
                spec.pool,
            )
            .map_err(CliError::data)?;
            let ds = keep(train)?.with_test(test.train).map_err(CliError::data)?;
            Ok(if spec.test_m == 0 { ds } else { ds.truncate_test(spec.test_m) })
        }
    }
}

fn problem(cfg: &ExperimentConfig, ds: &Dataset, beta: Beta) -> Result<Problem> {
    let arch = cfg.model.architecture(ds.d)?;
    Ok(ds.problem(arch, beta)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyBpRow {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub l_bp: usize,
    pub seed: u64,
    pub acc_exact: f64,
    pub acc_sbp: f64,
}

/// Exact BP and SBP on the same glass instance with `M = 2^N`.
pub fn consistency_bp_rows(cfg: &ExperimentConfig) -> Result<Vec<ConsistencyBpRow>> {
    let g = &cfg.grid;
    let mut jobs = Vec::new();
    for &n in &g.n {
        if n > 20 {
            return Err(CliError::Tractability(format!("exact BP with N = {n} exceeds the limit of 20")));
        }
        for &gamma in &g.gamma {
            for &l_bp in &g.l_bp {
                for &seed in &cfg.seeds {
                    jobs.push((n, gamma, l_bp, seed));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(n, gamma, l_bp, seed)| {
            let m = 1usize << n;
            let ds = gen_glass(n, m, seed).map_err(CliError::data)?;
            let p = problem(cfg, &ds, cfg.beta)?;
            let params = binmp_core::BpParams { gamma, l_bp, ..cfg.bp.clone() };
            let exact = run_bp(&p, &params, BpMode::Exact, seed)?;
            let sbp = run_bp(&p, &params, BpMode::Stochastic, seed)?;
            Ok(ConsistencyBpRow {
                n,
                m,
                gamma,
                l_bp,
                seed,
                acc_exact: p.train_accuracy(&exact.config),
                acc_sbp: p.train_accuracy(&sbp.config),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencySpRow {
    pub k: usize,
    pub gamma: f64,
    pub l_bp: usize,
    pub l_sp: usize,
    pub m: usize,
    pub seed: u64,
    pub acc_s3p: f64,
    pub acc_s4p: f64,
}

/// S3P and S4P on the same glass instance.
pub fn consistency_sp_rows(cfg: &ExperimentConfig) -> Result<Vec<ConsistencySpRow>> {
    let g = &cfg.grid;
    let mut jobs = Vec::new();
    for &k in &g.k {
        for &gamma in &g.gamma {
            for &l_bp in &g.l_bp {
                for &l_sp in &g.l_sp {
                    for &m in &g.m {
                        for &seed in &cfg.seeds {
                            jobs.push((k, gamma, l_bp, l_sp, m, seed));
                        }
                    }
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(k, gamma, l_bp, l_sp, m, seed)| {
            let ds = gen_glass(cfg.dataset.n, m, seed).map_err(CliError::data)?;
            let p = problem(cfg, &ds, cfg.beta)?;
            let params = binmp_core::SpParams { k_bins: k, gamma, l_bp, l_sp, ..cfg.sp.clone() };
            let acc = |variant| -> Result<f64> {
                let run = run_sp(&p, &binmp_core::SpParams { variant, ..params.clone() }, seed)?;
                Ok(p.train_accuracy(&run.config))
            };
            Ok(ConsistencySpRow { k, gamma, l_bp, l_sp, m, seed, acc_s3p: acc(SpVariant::S3p)?, acc_s4p: acc(SpVariant::S4p)? })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PhaseEngine {
    Sbp,
    Snmp,
}

impl PhaseEngine {
    pub fn name(self) -> &'static str {
        match self {
            PhaseEngine::Sbp => "sbp",
            PhaseEngine::Snmp => "snmp",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRow {
    pub dataset: DatasetKind,
    /// Number of weights.
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub engine: PhaseEngine,
    pub train_acc: f64,
}

impl PhaseRow {
    pub fn alpha(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

/// SBP and SNMP train accuracy for every `M` and seed. The SBP figure is
/// the first phase of the SNMP run, which is the same computation.
pub fn phase_rows(cfg: &ExperimentConfig) -> Result<Vec<PhaseRow>> {
    let loaded = match cfg.dataset.kind {
        DatasetKind::Digits => Some(load_dataset(&cfg.dataset, 0, 0)?),
        _ => None,
    };
    let mut jobs = Vec::new();
    for &m in &cfg.grid.m {
        for &seed in &cfg.seeds {
            jobs.push((m, seed));
        }
    }
    let pairs: Vec<[PhaseRow; 2]> = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let ds = match &loaded {
                Some(full) if m > full.num_examples() => {
                    return Err(CliError::Data(format!(
                        "asked for {m} examples, the data holds {}",
                        full.num_examples()
                    )))
                }
                Some(full) => full.clone().truncate(m),
                None => load_dataset(&cfg.dataset, m, seed)?,
            };
            let p = problem(cfg, &ds, cfg.beta)?;
            let mut sbp_acc = 0.0;
            let result = run_snmp_observed(&p, &cfg.bp, &cfg.sp, seed, None, |e| {
                if e.engine == EngineUsed::Sbp {
                    sbp_acc = e.train_accuracy;
                }
                Ok(())
            })?;
            let row = |engine, train_acc| PhaseRow {
                dataset: cfg.dataset.kind,
                n: p.num_params(),
                m,
                seed,
                engine,
                train_acc,
            };
            Ok([row(PhaseEngine::Sbp, sbp_acc), row(PhaseEngine::Snmp, result.train_accuracy)])
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMean {
    pub dataset: DatasetKind,
    pub n: usize,
    pub m: usize,
    pub engine: PhaseEngine,
    pub seeds: usize,
    pub mean_train_acc: f64,
}

/// Seed averages per `(M, engine)`, ordered by `M`.
pub fn phase_means(rows: &[PhaseRow]) -> Vec<PhaseMean> {
    let mut groups: BTreeMap<(usize, PhaseEngine), (DatasetKind, usize, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        groups.entry((r.m, r.engine)).or_insert((r.dataset, r.n, Vec::new())).2.push(r.train_acc);
    }
    groups
        .into_iter()
        .map(|((m, engine), (dataset, n, accs))| PhaseMean {
            dataset,
            n,
            m,
            engine,
            seeds: accs.len(),
            mean_train_acc: accs.iter().sum::<f64>() / accs.len() as f64,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinTraceRun {
    /// `None` for the SBP run.
    pub l_sp: Option<usize>,
    pub seed: u64,
    /// `[iteration][variable][bin]`.
    pub histograms: Vec<Vec<Vec<f64>>>,
    pub train_acc: f64,
}

impl BinTraceRun {
    pub fn engine(&self) -> &'static str {
        if self.l_sp.is_some() {
            "sp"
        } else {
            "sbp"
        }
    }

    pub fn file_name(&self) -> String {
        match self.l_sp {
            Some(l) => format!("lsp{l}_seed{}.csv", self.seed),
            None => format!("sbp_seed{}.csv", self.seed),
        }
    }
}

/// Per-iteration marginal histograms of SP for each `L_SP`, and of SBP with
/// each belief placed in its bin. Runs always last `max_iters` iterations.
pub fn bin_trace_runs(cfg: &ExperimentConfig) -> Result<Vec<BinTraceRun>> {
    let grid = BinGrid::new(cfg.sp.k_bins)?;
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        jobs.push((None, seed));
        for &l in &cfg.grid.l_sp {
            jobs.push((Some(l), seed));
        }
    }
    jobs.par_iter()
        .map(|&(l_sp, seed)| {
            let ds = load_dataset(&cfg.dataset, cfg.dataset.m, seed)?;
            let p = problem(cfg, &ds, cfg.beta)?;
            let mut histograms = Vec::new();
            let config = match l_sp {
                Some(l_sp) => {
                    let params = binmp_core::SpParams { l_sp, ..cfg.sp.clone() };
                    let mut solver = SpSolver::new(&p, params, seed)?;
                    let mut config = None;
                    for _ in 0..cfg.sp.max_iters {
                        let step = solver.step()?;
                        histograms.push(step.histograms);
                        config = Some(step.config);
                    }
                    config
                }
                None => {
                    let mut solver = BpSolver::new(&p, cfg.bp.clone(), BpMode::Stochastic, seed)?;
                    let mut config = None;
                    for _ in 0..cfg.bp.max_iters {
                        let step = solver.step()?;
                        let rows = step
                            .beliefs
                            .iter()
                            .map(|&b| {
                                let mut h = vec![0.0; grid.k()];
                                h[grid.bin_index(b)?] = 1.0;
                                Ok(h)
                            })
                            .collect::<binmp_core::Result<Vec<_>>>()?;
                        histograms.push(rows);
                        config = Some(step.config);
                    }
                    config
                }
            };
            let config = config.expect("max_iters >= 1");
            Ok(BinTraceRun { l_sp, seed, histograms, train_acc: p.train_accuracy(&config) })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnistRow {
    pub beta: Beta,
    pub seed: u64,
    pub engine: EngineUsed,
    pub iteration: usize,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnistRun {
    pub beta: Beta,
    pub seed: u64,
    pub engine_used: EngineUsed,
    pub iterations: usize,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub trace: Vec<MnistRow>,
}

fn checkpoint_path(dir: &Path, beta: Beta, seed: u64, iteration: usize) -> PathBuf {
    dir.join(format!("beta{beta}_seed{seed}_iter{iteration:04}.ckpt"))
}

/// Mini-batch SNMP for every temperature in the beta grid and every seed.
/// Checkpoints go to `checkpoint_dir` when it is given and checkpointing is
/// enabled.
pub fn mnist_runs(cfg: &ExperimentConfig, checkpoint_dir: Option<&Path>) -> Result<Vec<MnistRun>> {
    let ds = load_dataset(&cfg.dataset, cfg.dataset.m, 0)?;
    let arch = cfg.model.architecture(ds.d)?;
    info!("mnist-train: {} examples, {} weights", ds.num_examples(), arch.param_count());
    if let Some(dir) = checkpoint_dir.filter(|_| cfg.checkpoint_every > 0) {
        std::fs::create_dir_all(dir)?;
    }
    let mut jobs = Vec::new();
    for &beta in &cfg.grid.beta {
        for &seed in &cfg.seeds {
            jobs.push((beta, seed));
        }
    }
    jobs.par_iter()
        .map(|&(beta, seed)| {
            let p = ds.problem(arch.clone(), beta)?;
            let test = ds.test_problem(arch.clone(), beta)?;
            let mut trace = Vec::new();
            let r = run_snmp_observed(&p, &cfg.bp, &cfg.sp, seed, test.as_ref(), |e| {
                trace.push(MnistRow {
                    beta,
                    seed,
                    engine: e.engine,
                    iteration: e.iteration,
                    train_acc: e.train_accuracy,
                    test_acc: e.test_accuracy,
                });
                if let Some(dir) = checkpoint_dir {
                    if cfg.checkpoint_every > 0 && e.iteration % cfg.checkpoint_every == 0 {
                        let ckpt = match e.state {
                            SolverState::Bp(store) => Checkpoint::from_bp(store, e.iteration as u64, seed),
                            SolverState::Sp(store) => Checkpoint::from_surveys(store, e.iteration as u64, seed),
                        };
                        ckpt.save(&checkpoint_path(dir, beta, seed, e.iteration))?;
                    }
                }
                Ok(())
            })?;
            info!("beta {beta} seed {seed}: {} train {:.4} in {:.1}s", r.engine_used, r.train_accuracy, r.wall_time);
            Ok(MnistRun {
                beta,
                seed,
                engine_used: r.engine_used,
                iterations: r.iterations,
                train_acc: r.train_accuracy,
                test_acc: r.test_accuracy,
                trace,
            })
        })
        .collect()
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

/// Runs the configured experiment and writes its outputs under
/// `cfg.out_dir`. Returns the files written.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out)?;
    let config_path = out.join("config.ini");
    std::fs::write(&config_path, cfg.emit())?;
    let mut written = vec![config_path];
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = out.join(name);
        write_csv(&path, header, &rows)?;
        written.push(path);
        Ok(())
    };
    match cfg.kind {
        ExperimentKind::ConsistencyBp => {
            let rows = consistency_bp_rows(cfg)?
                .into_iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.m.to_string(),
                        r.gamma.to_string(),
                        r.l_bp.to_string(),
                        r.seed.to_string(),
                        real(r.acc_exact),
                        real(r.acc_sbp),
                    ]
                })
                .collect();
            emit("consistency_bp.csv", &CONSISTENCY_BP_HEADER, rows)?;
        }
        ExperimentKind::ConsistencySp => {
            let rows = consistency_sp_rows(cfg)?
                .into_iter()
                .map(|r| {
                    vec![
                        r.k.to_string(),
                        r.gamma.to_string(),
                        r.l_bp.to_string(),
                        r.l_sp.to_string(),
                        r.m.to_string(),
                        r.seed.to_string(),
                        real(r.acc_s3p),
                        real(r.acc_s4p),
                    ]
                })
                .collect();
            emit("consistency_sp.csv", &CONSISTENCY_SP_HEADER, rows)?;
        }
        ExperimentKind::PhaseSweep => {
            let rows = phase_rows(cfg)?;
            let means = phase_means(&rows)
                .into_iter()
                .map(|r| {
                    vec![
                        r.dataset.to_string(),
                        r.n.to_string(),
                        r.m.to_string(),
                        real(r.m as f64 / r.n as f64),
                        r.engine.name().to_string(),
                        r.seeds.to_string(),
                        real(r.mean_train_acc),
                    ]
                })
                .collect();
            let rows = rows
                .iter()
                .map(|r| {
                    vec![
                        r.dataset.to_string(),
                        r.n.to_string(),
                        r.m.to_string(),
                        real(r.alpha()),
                        r.seed.to_string(),
                        r.engine.name().to_string(),
                        real(r.train_acc),
                    ]
                })
                .collect();
            emit("phase_sweep.csv", &PHASE_HEADER, rows)?;
            emit("phase_means.csv", &PHASE_MEANS_HEADER, means)?;
        }
        ExperimentKind::BinTrace => {
            let runs = bin_trace_runs(cfg)?;
            let header = bin_trace_header(cfg.sp.k_bins);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut summary = Vec::new();
            for run in &runs {
                let rows = run
                    .histograms
                    .iter()
                    .enumerate()
                    .flat_map(|(t, vars)| {
                        vars.iter().enumerate().map(move |(v, h)| {
                            [(t + 1).to_string(), v.to_string()]
                                .into_iter()
                                .chain(h.iter().map(|x| format!("{x:.9}")))
                                .collect()
                        })
                    })
                    .collect();
                let name = format!("bin_trace/{}", run.file_name());
                emit(&name, &header, rows)?;
                summary.push(vec![
                    run.engine().to_string(),
                    run.l_sp.map(|l| l.to_string()).unwrap_or_default(),
                    run.seed.to_string(),
                    run.histograms.len().to_string(),
                    real(run.train_acc),
                    name,
                ]);
            }
            emit("bin_trace_runs.csv", &BIN_RUNS_HEADER, summary)?;
        }
        ExperimentKind::MnistTrain => {
            let runs = mnist_runs(cfg, Some(&out.join("checkpoints")))?;
            let trace = runs
                .iter()
                .flat_map(|r| &r.trace)
                .map(|t| {
                    vec![
                        t.beta.to_string(),
                        t.seed.to_string(),
                        t.engine.to_string(),
                        t.iteration.to_string(),
                        real(t.train_acc),
                        opt_real(t.test_acc),
                    ]
                })
                .collect();
            let finals = runs
                .iter()
                .map(|r| {
                    vec![
                        r.beta.to_string(),
                        r.seed.to_string(),
                        r.engine_used.to_string(),
                        r.iterations.to_string(),
                        real(r.train_acc),
                        opt_real(r.test_acc),
                    ]
                })
                .collect();
            emit("mnist_train.csv", &MNIST_HEADER, trace)?;
            emit("mnist_final.csv", &MNIST_FINAL_HEADER, finals)?;
        }
    }
    Ok(written)
}
