//! Experiment configuration files.
//!
//! One experiment per file, INI style:
//!
//! ```ini
//! [experiment]
//! kind = phase-sweep
//! seeds = 0:19
//! out = results/phase
//! beta = 3
//!
//! [dataset]
//! kind = glass
//! n = 10
//!
//! [grid]
//! m = 5:50:5
//! ```
//!
//! Integer lists accept comma-separated items, each a value or an inclusive
//! range `start:end` or `start:end:step`. Keys left out take the defaults of
//! the experiment kind.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use binmp_core::{Architecture, Beta, BpParams, Schedule, SpParams};
use ini::{Ini, Properties};
use log::warn;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    ConsistencyBp,
    ConsistencySp,
    PhaseSweep,
    BinTrace,
    MnistTrain,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::ConsistencyBp,
        ExperimentKind::ConsistencySp,
        ExperimentKind::PhaseSweep,
        ExperimentKind::BinTrace,
        ExperimentKind::MnistTrain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ConsistencyBp => "consistency-bp",
            ExperimentKind::ConsistencySp => "consistency-sp",
            ExperimentKind::PhaseSweep => "phase-sweep",
            ExperimentKind::BinTrace => "bin-trace",
            ExperimentKind::MnistTrain => "mnist-train",
        }
    }
}

impl Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Glass,
    StainedGlass,
    Digits,
    Mnist,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Glass => "glass",
            DatasetKind::StainedGlass => "stained-glass",
            DatasetKind::Digits => "digits",
            DatasetKind::Mnist => "mnist",
        }
    }
}

impl Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [DatasetKind::Glass, DatasetKind::StainedGlass, DatasetKind::Digits, DatasetKind::Mnist]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown dataset kind {s:?}")))
    }
}

/// Where training examples come from.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Input dimension of glass, and of the stained-glass teacher.
    pub n: usize,
    /// Hidden layer widths of the stained-glass teacher.
    pub teacher_hidden: Vec<usize>,
    /// Training examples to generate or keep; 0 keeps every loaded example.
    /// Sweeps over `M` ignore it.
    pub m: usize,
    /// Held-out examples to keep; 0 keeps all.
    pub test_m: usize,
    /// Digits CSV file, or the directory holding the four MNIST IDX files.
    pub path: PathBuf,
    pub classes: (u8, u8),
    pub pool: bool,
}

impl DatasetSpec {
    fn defaults(kind: DatasetKind) -> Self {
        let mut spec = DatasetSpec {
            kind,
            n: 10,
            teacher_hidden: vec![1],
            m: 20,
            test_m: 0,
            path: PathBuf::new(),
            classes: (0, 1),
            pool: true,
        };
        match kind {
            DatasetKind::Glass => {}
            DatasetKind::StainedGlass => spec.n = 30,
            DatasetKind::Digits => {
                spec.n = 64;
                spec.m = 0;
                spec.path = PathBuf::from("data/digits/digits.csv");
            }
            DatasetKind::Mnist => {
                spec.n = 196;
                spec.m = 200;
                spec.path = PathBuf::from("data/mnist01");
            }
        }
        spec
    }

    pub fn teacher(&self) -> Architecture {
        Architecture::Mlp { input_dim: self.n, hidden: self.teacher_hidden.clone() }
    }
}

/// Student network family; the input dimension comes from the data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelSpec {
    Linear,
    Mlp { hidden: Vec<usize> },
    /// The fixed two-layer convolutional preset on 14x14 inputs.
    Conv,
}

impl ModelSpec {
    pub fn architecture(&self, input_dim: usize) -> Result<Architecture> {
        let arch = match self {
            ModelSpec::Linear => Architecture::Linear { input_dim },
            ModelSpec::Mlp { hidden } => Architecture::Mlp { input_dim, hidden: hidden.clone() },
            ModelSpec::Conv => {
                let conv = Architecture::mnist_conv();
                if conv.input_dim() != input_dim {
                    return Err(CliError::Config(format!(
                        "the conv preset needs {} inputs, the data has {input_dim}",
                        conv.input_dim()
                    )));
                }
                conv
            }
        };
        arch.validate()?;
        Ok(arch)
    }

    fn name(&self) -> &'static str {
        match self {
            ModelSpec::Linear => "linear",
            ModelSpec::Mlp { .. } => "mlp",
            ModelSpec::Conv => "conv",
        }
    }
}

/// Values swept by a command. Each command reads only the grids it uses.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub gamma: Vec<f64>,
    pub l_bp: Vec<usize>,
    pub l_sp: Vec<usize>,
    pub k: Vec<usize>,
    pub beta: Vec<Beta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Temperature for every command except `mnist-train`, which sweeps
    /// `grid.beta`.
    pub beta: Beta,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub bp: BpParams,
    pub sp: SpParams,
    pub grid: SweepGrid,
    /// Write a checkpoint every this many iterations; 0 disables them.
    pub checkpoint_every: usize,
}

fn beta(v: f64) -> Beta {
    Beta::new(v).expect("positive literal")
}

fn range(start: usize, end: usize, step: usize) -> Vec<usize> {
    (start..=end).step_by(step).collect()
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self::defaults_with(kind, Self::default_dataset(kind))
    }

    fn default_dataset(kind: ExperimentKind) -> DatasetKind {
        match kind {
            ExperimentKind::MnistTrain => DatasetKind::Mnist,
            _ => DatasetKind::Glass,
        }
    }

    fn defaults_with(kind: ExperimentKind, dataset_kind: DatasetKind) -> Self {
        let mut dataset = DatasetSpec::defaults(dataset_kind);
        let mut bp = BpParams { l_bp: 5, gamma: 0.5, max_iters: 20, ..BpParams::default() };
        let mut sp = SpParams { k_bins: 31, l_sp: 50, l_bp: 5, gamma: 0.5, max_iters: 20, ..SpParams::default() };
        let mut grid = SweepGrid {
            n: vec![dataset.n],
            m: vec![dataset.m],
            gamma: vec![0.5],
            l_bp: vec![5],
            l_sp: vec![50],
            k: vec![31],
            beta: vec![beta(2.0)],
        };
        let mut model = ModelSpec::Linear;
        let mut cfg_beta = beta(2.0);
        let mut seed_list = seeds(10);
        let mut checkpoint_every = 0;
        match kind {
            ExperimentKind::ConsistencyBp => {
                grid.n = vec![4, 6];
                grid.gamma = vec![0.2, 0.5, 0.8];
                grid.l_bp = vec![5, 20];
            }
            ExperimentKind::ConsistencySp => {
                dataset.n = 8;
                grid.k = vec![31];
                grid.gamma = vec![0.5];
                grid.l_bp = vec![5];
                grid.l_sp = vec![10, 50];
                grid.m = vec![8, 16];
                seed_list = seeds(5);
            }
            ExperimentKind::PhaseSweep => {
                cfg_beta = beta(3.0);
                bp = BpParams { l_bp: 20, max_iters: 50, ..bp };
                sp = SpParams { l_bp: 20, gamma: 0.2, max_iters: 50, ..sp };
                seed_list = seeds(20);
                grid.m = match dataset_kind {
                    DatasetKind::Digits => range(5, 245, 10),
                    _ => range(5, 50, 5),
                };
                if dataset_kind == DatasetKind::StainedGlass {
                    model = ModelSpec::Mlp { hidden: dataset.teacher_hidden.clone() };
                }
            }
            ExperimentKind::BinTrace => {
                cfg_beta = beta(3.0);
                dataset.m = 20;
                grid.l_sp = vec![1, 10, 100, 500];
                seed_list = seeds(1);
            }
            ExperimentKind::MnistTrain => {
                bp.schedule = Schedule::MiniBatch(32);
                bp.max_iters = 50;
                sp = SpParams { l_sp: 10, max_iters: 10, ..sp };
                grid.beta = vec![beta(0.1), beta(1.0), beta(10.0), beta(100.0), Beta::INFINITE];
                seed_list = seeds(1);
                checkpoint_every = 10;
            }
        }
        ExperimentConfig {
            kind,
            seeds: seed_list,
            out_dir: PathBuf::from("results").join(kind.name()),
            beta: cfg_beta,
            dataset,
            model,
            bp,
            sp,
            grid,
            checkpoint_every,
        }
    }

    /// Replaces grids and engine sizes with the values used for the
    /// published figures. Every replacement is logged as a warning.
    pub fn apply_paper_scale(&mut self) {
        let note = |what: &str, value: String| {
            warn!("paper scale: {what} = {value}; expect long runtimes");
        };
        match self.kind {
            ExperimentKind::ConsistencyBp => {
                self.grid.n = vec![4, 6, 8, 10];
                self.grid.gamma = vec![0.2, 0.5, 0.8];
                self.grid.l_bp = vec![5, 8, 10, 12, 15, 20, 25, 50];
                note("grid.n", "4,6,8,10".into());
                note("grid.l_bp", "5,8,10,12,15,20,25,50".into());
            }
            ExperimentKind::ConsistencySp => {
                self.dataset.n = 20;
                self.grid.k = vec![31, 51, 101, 201];
                self.grid.gamma = vec![0.2, 0.5, 0.8];
                self.grid.l_bp = vec![5, 10, 20, 50, 100];
                self.grid.l_sp = vec![5, 10, 20, 50, 100];
                self.grid.m = vec![8, 12, 16, 32];
                note("dataset.n", "20".into());
                note("grid.k", "31,51,101,201".into());
                note("grid.l_bp and grid.l_sp", "5,10,20,50,100".into());
                note("grid.m", "8,12,16,32".into());
            }
            ExperimentKind::PhaseSweep => {
                self.bp.l_bp = 5;
                self.sp.l_bp = 5;
                self.sp.l_sp = 100;
                self.sp.k_bins = 201;
                self.seeds = seeds(20);
                note("bp.l_bp and sp.l_bp", "5".into());
                note("sp.l_sp", "100".into());
                note("sp.k", "201".into());
            }
            ExperimentKind::BinTrace => {
                self.grid.l_sp = vec![1, 10, 100, 1000];
                note("grid.l_sp", "1,10,100,1000".into());
            }
            ExperimentKind::MnistTrain => {
                self.dataset.m = 0;
                self.dataset.test_m = 0;
                note("dataset.m", "all examples".into());
            }
        }
    }

    /// Checks every bound the commands rely on.
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(what.to_string()))
            }
        };
        need(!self.seeds.is_empty(), "seeds must not be empty")?;
        need(self.dataset.n > 0, "dataset.n must be positive")?;
        need(self.dataset.classes.0 != self.dataset.classes.1, "dataset.classes must differ")?;
        self.bp.validate()?;
        self.sp.validate()?;
        let g = &self.grid;
        let grids: [(&str, bool); 7] = [
            ("grid.n", g.n.is_empty() || g.n.contains(&0)),
            ("grid.m", g.m.is_empty() || g.m.contains(&0)),
            ("grid.gamma", g.gamma.is_empty() || g.gamma.iter().any(|x| !(0.0..=1.0).contains(x))),
            ("grid.l_bp", g.l_bp.is_empty() || g.l_bp.contains(&0)),
            ("grid.l_sp", g.l_sp.is_empty() || g.l_sp.contains(&0)),
            ("grid.k", g.k.is_empty() || g.k.iter().any(|&k| k < 2)),
            ("grid.beta", g.beta.is_empty()),
        ];
        for (name, bad) in grids {
            need(!bad, &format!("{name} must be non-empty and within bounds"))?;
        }
        match (self.kind, self.dataset.kind) {
            (ExperimentKind::PhaseSweep, DatasetKind::Mnist) => {
                need(false, "phase-sweep supports glass, stained-glass and digits")
            }
            (ExperimentKind::MnistTrain, k) if k != DatasetKind::Mnist => {
                need(false, "mnist-train needs dataset kind mnist")
            }
            (ExperimentKind::ConsistencyBp | ExperimentKind::ConsistencySp, k) if k != DatasetKind::Glass => {
                need(false, "consistency experiments run on glass")
            }
            _ => Ok(()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (section, props) in ini.iter() {
            let Some(name) = section else {
                if props.is_empty() {
                    continue;
                }
                return Err(CliError::Config("keys must sit inside a [section]".into()));
            };
            let allowed = allowed_keys(name)
                .ok_or_else(|| CliError::Config(format!("unknown section [{name}]")))?;
            for (key, _) in props.iter() {
                if !allowed.contains(&key) {
                    return Err(CliError::Config(format!("unknown key {key:?} in [{name}]")));
                }
            }
        }
        let empty = Properties::new();
        let sec = |name: &str| Section { name: name.to_string(), props: ini.section(Some(name)).unwrap_or(&empty) };

        let exp = sec("experiment");
        let kind: ExperimentKind = exp
            .raw("kind")
            .ok_or_else(|| CliError::Config("[experiment] kind is required".into()))?
            .parse()?;
        let ds = sec("dataset");
        let dataset_kind = match ds.raw("kind") {
            Some(v) => v.parse()?,
            None => Self::default_dataset(kind),
        };
        let mut c = Self::defaults_with(kind, dataset_kind);

        if let Some(v) = exp.raw("seeds") {
            c.seeds = parse_list(v, "experiment", "seeds")?;
        }
        if let Some(v) = exp.raw("out") {
            c.out_dir = PathBuf::from(v);
        }
        exp.set(&mut c.beta, "beta")?;
        exp.set(&mut c.checkpoint_every, "checkpoint_every")?;

        ds.set(&mut c.dataset.n, "n")?;
        if let Some(v) = ds.raw("teacher_hidden") {
            c.dataset.teacher_hidden = parse_list(v, "dataset", "teacher_hidden")?;
        }
        ds.set(&mut c.dataset.m, "m")?;
        ds.set(&mut c.dataset.test_m, "test_m")?;
        if let Some(v) = ds.raw("path") {
            c.dataset.path = PathBuf::from(v);
        }
        if let Some(v) = ds.raw("classes") {
            let pair: Vec<u8> = parse_list(v, "dataset", "classes")?;
            match pair[..] {
                [a, b] => c.dataset.classes = (a, b),
                _ => return Err(CliError::Config("[dataset] classes takes two labels".into())),
            }
        }
        ds.set(&mut c.dataset.pool, "pool")?;

        let model = sec("model");
        let hidden = match model.raw("hidden") {
            Some(v) => Some(parse_list::<usize>(v, "model", "hidden")?),
            None => None,
        };
        match model.raw("arch") {
            Some("linear") => c.model = ModelSpec::Linear,
            Some("mlp") => {
                let default = match &c.model {
                    ModelSpec::Mlp { hidden } => hidden.clone(),
                    _ => vec![2],
                };
                c.model = ModelSpec::Mlp { hidden: hidden.clone().unwrap_or(default) };
            }
            Some("conv") => c.model = ModelSpec::Conv,
            Some(other) => return Err(CliError::Config(format!("unknown model arch {other:?}"))),
            None => {}
        }
        if let (Some(h), ModelSpec::Mlp { hidden }) = (hidden, &mut c.model) {
            *hidden = h;
        }
        if c.model == ModelSpec::Conv {
            // The convolutional preset trains with adaptive damping.
            c.bp.adaptive_gamma = true;
            c.sp.adaptive_gamma = true;
        }

        let bp = sec("bp");
        bp.set(&mut c.bp.l_bp, "l_bp")?;
        bp.set(&mut c.bp.gamma, "gamma")?;
        bp.set(&mut c.bp.max_iters, "max_iters")?;
        bp.set(&mut c.bp.tol, "tol")?;
        bp.schedule(&mut c.bp.schedule)?;
        bp.set(&mut c.bp.common_random_numbers, "crn")?;
        bp.set(&mut c.bp.adaptive_gamma, "adaptive_gamma")?;

        let sp = sec("sp");
        sp.set(&mut c.sp.k_bins, "k")?;
        sp.set(&mut c.sp.l_sp, "l_sp")?;
        sp.set(&mut c.sp.l_bp, "l_bp")?;
        sp.set(&mut c.sp.gamma, "gamma")?;
        sp.set(&mut c.sp.max_iters, "max_iters")?;
        sp.set(&mut c.sp.tol, "tol")?;
        if let Some(v) = sp.raw("variant") {
            c.sp.variant = v.parse().map_err(|_| CliError::Config(format!("unknown sp variant {v:?}")))?;
        }
        sp.set(&mut c.sp.logit_clip, "logit_clip")?;
        sp.set(&mut c.sp.logit_step, "logit_step")?;
        sp.schedule(&mut c.sp.schedule)?;
        sp.set(&mut c.sp.common_random_numbers, "crn")?;
        sp.set(&mut c.sp.adaptive_gamma, "adaptive_gamma")?;

        let grid = sec("grid");
        grid.list(&mut c.grid.n, "n")?;
        grid.list(&mut c.grid.m, "m")?;
        grid.list(&mut c.grid.gamma, "gamma")?;
        grid.list(&mut c.grid.l_bp, "l_bp")?;
        grid.list(&mut c.grid.l_sp, "l_sp")?;
        grid.list(&mut c.grid.k, "k")?;
        grid.list(&mut c.grid.beta, "beta")?;

        c.validate()?;
        Ok(c)
    }

    /// Serializes every field, so `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut ini = Ini::new();
        ini.with_section(Some("experiment"))
            .set("kind", self.kind.name())
            .set("seeds", join(&self.seeds))
            .set("out", self.out_dir.display().to_string())
            .set("beta", self.beta.to_string())
            .set("checkpoint_every", self.checkpoint_every.to_string());
        let d = &self.dataset;
        ini.with_section(Some("dataset"))
            .set("kind", d.kind.name())
            .set("n", d.n.to_string())
            .set("teacher_hidden", join(&d.teacher_hidden))
            .set("m", d.m.to_string())
            .set("test_m", d.test_m.to_string())
            .set("path", d.path.display().to_string())
            .set("classes", format!("{},{}", d.classes.0, d.classes.1))
            .set("pool", d.pool.to_string());
        {
            let mut model = ini.with_section(Some("model"));
            model.set("arch", self.model.name());
            if let ModelSpec::Mlp { hidden } = &self.model {
                model.set("hidden", join(hidden));
            }
        }
        let b = &self.bp;
        ini.with_section(Some("bp"))
            .set("l_bp", b.l_bp.to_string())
            .set("gamma", b.gamma.to_string())
            .set("max_iters", b.max_iters.to_string())
            .set("tol", b.tol.to_string())
            .set("batch", batch(b.schedule))
            .set("crn", b.common_random_numbers.to_string())
            .set("adaptive_gamma", b.adaptive_gamma.to_string());
        let s = &self.sp;
        ini.with_section(Some("sp"))
            .set("k", s.k_bins.to_string())
            .set("l_sp", s.l_sp.to_string())
            .set("l_bp", s.l_bp.to_string())
            .set("gamma", s.gamma.to_string())
            .set("max_iters", s.max_iters.to_string())
            .set("tol", s.tol.to_string())
            .set("variant", s.variant.to_string())
            .set("logit_clip", s.logit_clip.to_string())
            .set("logit_step", s.logit_step.to_string())
            .set("batch", batch(s.schedule))
            .set("crn", s.common_random_numbers.to_string())
            .set("adaptive_gamma", s.adaptive_gamma.to_string());
        let g = &self.grid;
        ini.with_section(Some("grid"))
            .set("n", join(&g.n))
            .set("m", join(&g.m))
            .set("gamma", join(&g.gamma))
            .set("l_bp", join(&g.l_bp))
            .set("l_sp", join(&g.l_sp))
            .set("k", join(&g.k))
            .set("beta", join(&g.beta));
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ini output is utf-8")
    }
}

fn allowed_keys(section: &str) -> Option<&'static [&'static str]> {
    Some(match section {
        "experiment" => &["kind", "seeds", "out", "beta", "checkpoint_every"],
        "dataset" => &["kind", "n", "teacher_hidden", "m", "test_m", "path", "classes", "pool"],
        "model" => &["arch", "hidden"],
        "bp" => &["l_bp", "gamma", "max_iters", "tol", "batch", "crn", "adaptive_gamma"],
        "sp" => &[
            "k", "l_sp", "l_bp", "gamma", "max_iters", "tol", "variant", "logit_clip", "logit_step", "batch",
            "crn", "adaptive_gamma",
        ],
        "grid" => &["n", "m", "gamma", "l_bp", "l_sp", "k", "beta"],
        _ => return None,
    })
}

fn batch(schedule: Schedule) -> String {
    match schedule {
        Schedule::Full => "0".into(),
        Schedule::MiniBatch(b) => b.to_string(),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Parses a comma list whose integer items may be inclusive ranges.
pub fn parse_list<T: ListItem>(value: &str, section: &str, key: &str) -> Result<Vec<T>> {
    let bad = |detail: String| CliError::Config(format!("[{section}] {key}: {detail}"));
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(bad("empty list item".into()));
        }
        T::push_item(item, &mut out).map_err(bad)?;
    }
    Ok(out)
}

pub trait ListItem: Sized {
    fn push_item(item: &str, out: &mut Vec<Self>) -> std::result::Result<(), String>;
}

fn scalar<T: FromStr>(item: &str) -> std::result::Result<T, String> {
    item.parse().map_err(|_| format!("cannot parse {item:?}"))
}

macro_rules! integer_items {
    ($($t:ty),*) => {$(
        impl ListItem for $t {
            fn push_item(item: &str, out: &mut Vec<Self>) -> std::result::Result<(), String> {
                let parts: Vec<&str> = item.split(':').collect();
                match parts[..] {
                    [v] => out.push(scalar(v)?),
                    [a, b] | [a, b, _] => {
                        let (a, b): ($t, $t) = (scalar(a)?, scalar(b)?);
                        let step: usize = if parts.len() == 3 { scalar(parts[2])? } else { 1 };
                        if a > b || step == 0 {
                            return Err(format!("bad range {item:?}"));
                        }
                        out.extend((a..=b).step_by(step));
                    }
                    _ => return Err(format!("bad range {item:?}")),
                }
                Ok(())
            }
        }
    )*};
}

integer_items!(u8, u64, usize);

impl ListItem for f64 {
    fn push_item(item: &str, out: &mut Vec<Self>) -> std::result::Result<(), String> {
        out.push(scalar(item)?);
        Ok(())
    }
}

impl ListItem for Beta {
    fn push_item(item: &str, out: &mut Vec<Self>) -> std::result::Result<(), String> {
        out.push(item.parse().map_err(|e: binmp_core::Error| e.to_string())?);
        Ok(())
    }
}

struct Section<'a> {
    name: String,
    props: &'a Properties,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.props.get(key).map(str::trim)
    }

    fn set<T: FromStr>(&self, slot: &mut T, key: &str) -> Result<()> {
        if let Some(v) = self.raw(key) {
            *slot = v
                .parse()
                .map_err(|_| CliError::Config(format!("[{}] {key}: cannot parse {v:?}", self.name)))?;
        }
        Ok(())
    }

    fn list<T: ListItem>(&self, slot: &mut Vec<T>, key: &str) -> Result<()> {
        if let Some(v) = self.raw(key) {
            *slot = parse_list(v, &self.name, key)?;
        }
        Ok(())
    }

    fn schedule(&self, slot: &mut Schedule) -> Result<()> {
        let mut b = match slot {
            Schedule::Full => 0,
            Schedule::MiniBatch(b) => *b,
        };
        self.set(&mut b, "batch")?;
        *slot = if b == 0 { Schedule::Full } else { Schedule::MiniBatch(b) };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use binmp_core::SpVariant;

    #[test]
    fn defaults_round_trip_for_every_kind() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::defaults(kind);
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c, "{kind}");
        }
    }

    #[test]
    fn edited_config_round_trips() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::PhaseSweep);
        c.dataset = DatasetSpec::defaults(DatasetKind::StainedGlass);
        c.model = ModelSpec::Mlp { hidden: vec![3, 2] };
        c.sp.variant = SpVariant::S3p;
        c.sp.schedule = Schedule::MiniBatch(7);
        c.bp.gamma = 0.1 + 0.2;
        c.grid.beta = vec![Beta::INFINITE, beta(0.3)];
        c.seeds = vec![4, 9, 2];
        assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
    }

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_list::<usize>("5:20:5,40", "g", "m").unwrap(), vec![5, 10, 15, 20, 40]);
        assert_eq!(parse_list::<u64>("0:3", "e", "seeds").unwrap(), vec![0, 1, 2, 3]);
        assert!(parse_list::<usize>("4:1", "g", "m").is_err());
        assert!(parse_list::<usize>("1,,2", "g", "m").is_err());
        let b = parse_list::<Beta>("0.1,inf", "g", "beta").unwrap();
        assert!(b[1].is_infinite());
    }

    #[test]
    fn minimal_file_takes_kind_defaults() {
        let c = ExperimentConfig::parse("[experiment]\nkind = phase-sweep\n[dataset]\nkind = digits\n").unwrap();
        assert_eq!(c.grid.m.len(), 25);
        assert_eq!(c.grid.m[0], 5);
        assert_eq!(*c.grid.m.last().unwrap(), 245);
        assert_eq!(c.seeds.len(), 20);
        let bp = ExperimentConfig::parse("[experiment]\nkind = consistency-bp\n").unwrap();
        assert_eq!(bp.grid.n, vec![4, 6]);
    }

    #[test]
    fn conv_preset_turns_on_adaptive_damping() {
        let c = ExperimentConfig::parse("[experiment]\nkind = mnist-train\n[model]\narch = conv\n").unwrap();
        assert!(c.bp.adaptive_gamma && c.sp.adaptive_gamma);
        assert_eq!(c.model.architecture(196).unwrap().param_count(), 89);
        assert!(c.model.architecture(64).is_err());
    }

    #[test]
    fn paper_scale_grids() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::ConsistencyBp);
        c.apply_paper_scale();
        assert_eq!(c.grid.n.len() * c.grid.gamma.len() * c.grid.l_bp.len(), 4 * 3 * 8);
        let mut c = ExperimentConfig::defaults(ExperimentKind::ConsistencySp);
        c.apply_paper_scale();
        assert_eq!(c.grid.m, vec![8, 12, 16, 32]);
        assert_eq!(c.grid.l_sp, vec![5, 10, 20, 50, 100]);
        assert_eq!(c.dataset.n, 20);
        let c = ExperimentConfig::defaults(ExperimentKind::MnistTrain);
        assert_eq!(c.grid.beta.len(), 5);
        assert!(c.grid.beta[4].is_infinite());
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "[experiment]\nseeds = 1\n",
            "[experiment]\nkind = nope\n",
            "[experiment]\nkind = bin-trace\ncolour = red\n",
            "[experiment]\nkind = bin-trace\n[extra]\n",
            "[experiment]\nkind = bin-trace\n[bp]\ngamma = 2\n",
            "[experiment]\nkind = bin-trace\n[grid]\nk = 1\n",
            "[experiment]\nkind = bin-trace\nseeds = 3:1\n",
            "[experiment]\nkind = phase-sweep\n[dataset]\nkind = mnist\n",
            "[experiment]\nkind = bin-trace\nbeta = 0\n",
            "kind = bin-trace\n",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }
}
