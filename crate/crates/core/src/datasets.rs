//! Dataset generators and loaders.
//!
//! All inputs and labels are binary. Generated datasets are pure functions
//! of their sizes and seed; loaded datasets record the source path and a
//! 64-bit FNV-1a digest of their contents.

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use fnv::FnvHasher;

use crate::error::{contract, Error, Result};
use crate::model::{Architecture, Configuration};
use crate::problem::{Beta, Problem};
use crate::rng::{bernoulli_threshold, EngineTag, Lineage, RngStream};

/// Digits features at or above this value become 1.
pub const DIGITS_THRESHOLD: u8 = 8;
/// MNIST pixels at or above this value become 1.
pub const PIXEL_THRESHOLD: u8 = 128;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Inputs `[M x d]` and labels `[M]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub inputs: Vec<u8>,
    pub labels: Vec<u8>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn truncate(&mut self, m: usize, d: usize) {
        self.labels.truncate(m);
        self.inputs.truncate(m * d);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Generated { generator: String, seed: u64 },
    File { path: String, digest: u64 },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Generated { generator, seed } => write!(f, "{generator}(seed={seed})"),
            Provenance::File { path, digest } => write!(f, "{path}#{digest:016x}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub d: usize,
    pub train: Split,
    pub test: Option<Split>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(d: usize, train: Split, test: Option<Split>, provenance: Provenance) -> Result<Self> {
        let ds = Self { d, train, test, provenance };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        contract(self.d > 0, || "input dimension must be positive".into())?;
        for split in std::iter::once(&self.train).chain(self.test.as_ref()) {
            contract(split.inputs.len() == split.labels.len() * self.d, || {
                format!("{} inputs do not form {} rows of {}", split.inputs.len(), split.labels.len(), self.d)
            })?;
            contract(split.inputs.iter().chain(&split.labels).all(|&v| v <= 1), || {
                "dataset entries must be binary".into()
            })?;
        }
        Ok(())
    }

    pub fn num_examples(&self) -> usize {
        self.train.len()
    }

    pub fn input(&self, row: usize) -> &[u8] {
        &self.train.inputs[row * self.d..(row + 1) * self.d]
    }

    /// Keeps the first `m` training rows.
    pub fn truncate(mut self, m: usize) -> Self {
        self.train.truncate(m, self.d);
        self
    }

    /// Keeps the first `m` test rows.
    pub fn truncate_test(mut self, m: usize) -> Self {
        if let Some(t) = self.test.as_mut() {
            t.truncate(m, self.d);
        }
        self
    }

    pub fn with_test(mut self, test: Split) -> Result<Self> {
        self.test = Some(test);
        self.validate()?;
        Ok(self)
    }

    /// FNV-1a over `d`, then each split as row count, inputs and labels.
    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write(&(self.d as u64).to_le_bytes());
        for split in std::iter::once(&self.train).chain(self.test.as_ref()) {
            h.write(&(split.len() as u64).to_le_bytes());
            h.write(&split.inputs);
            h.write(&split.labels);
        }
        h.finish()
    }

    pub fn problem(&self, arch: Architecture, beta: Beta) -> Result<Problem> {
        Problem::new(self.train.inputs.clone(), self.train.labels.clone(), arch, beta)
    }

    pub fn test_problem(&self, arch: Architecture, beta: Beta) -> Result<Option<Problem>> {
        self.test
            .as_ref()
            .map(|t| Problem::new(t.inputs.clone(), t.labels.clone(), arch, beta))
            .transpose()
    }
}

fn fair_bits(rng: &mut RngStream, count: usize, out: &mut Vec<u8>) {
    let half = bernoulli_threshold(0.5);
    out.extend((0..count).map(|_| rng.bit(half)));
}

/// Fair Bernoulli inputs of dimension `n` and fair Bernoulli labels. Row
/// `r` depends only on `(seed, r)`, so a smaller `m` is a prefix of a
/// larger one.
pub fn gen_glass(n: usize, m: usize, seed: u64) -> Result<Dataset> {
    contract(n > 0, || "glass needs at least one input".into())?;
    let mut inputs = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(m);
    for r in 0..m {
        let mut rng = RngStream::new(seed, Lineage::new(EngineTag::Dataset, r, 0, 0));
        fair_bits(&mut rng, n, &mut inputs);
        fair_bits(&mut rng, 1, &mut labels);
    }
    Dataset::new(
        n,
        Split { inputs, labels },
        None,
        Provenance::Generated { generator: format!("glass(n={n},m={m})"), seed },
    )
}

/// The default teacher: 30 inputs, one hidden unit, 31 weights.
pub fn default_teacher() -> Architecture {
    Architecture::Mlp { input_dim: 30, hidden: vec![1] }
}

/// Teacher weights drawn from `seed`.
pub fn teacher_config(teacher: &Architecture, seed: u64) -> Configuration {
    let mut rng = RngStream::new(seed, Lineage::new(EngineTag::Teacher, 0, 0, 0));
    let mut bits = Vec::with_capacity(teacher.param_count());
    fair_bits(&mut rng, teacher.param_count(), &mut bits);
    Configuration { bits }
}

/// Fair Bernoulli inputs labelled by a teacher network with fair random
/// weights, so the teacher's own weights satisfy every example.
pub fn gen_stained_glass(teacher: &Architecture, m: usize, seed: u64) -> Result<Dataset> {
    teacher.validate()?;
    let d = teacher.input_dim();
    let config = teacher_config(teacher, seed);
    let mut inputs = Vec::with_capacity(d * m);
    let mut labels = Vec::with_capacity(m);
    let mut scratch = Vec::new();
    for r in 0..m {
        let mut rng = RngStream::new(seed, Lineage::new(EngineTag::Dataset, r, 1, 0));
        let start = inputs.len();
        fair_bits(&mut rng, d, &mut inputs);
        labels.push(teacher.forward_bits(&config.bits, &inputs[start..], &mut scratch));
    }
    Dataset::new(
        d,
        Split { inputs, labels },
        None,
        Provenance::Generated { generator: format!("stained-glass(d={d},m={m})"), seed },
    )
}

fn file_digest(path: &Path) -> Result<u64> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut h = FnvHasher::default();
    h.write(&bytes);
    Ok(h.finish())
}

fn check_pair(pair: (u8, u8)) -> Result<()> {
    contract(pair.0 != pair.1, || format!("class pair ({}, {}) must be distinct", pair.0, pair.1))
}

/// Loads the two classes of `pair` from a digits CSV (64 features in
/// `0..=16` then the label per row, no header), maps `pair.0 -> 0` and
/// `pair.1 -> 1`, thresholds features at [`DIGITS_THRESHOLD`] and keeps the
/// first `max_examples` rows in file order.
pub fn load_digits_csv(path: &Path, pair: (u8, u8), max_examples: Option<usize>) -> Result<Dataset> {
    check_pair(pair)?;
    const D: usize = 64;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(File::open(path)?));
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut seen = (false, false);
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if record.len() != D + 1 {
            return Err(Error::Parse { line, msg: format!("expected {} fields, found {}", D + 1, record.len()) });
        }
        let mut values = [0u8; D + 1];
        for (slot, field) in values.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("not a number: {field:?}") })?;
            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(Error::Parse { line, msg: format!("not a small integer: {field:?}") });
            }
            *slot = v as u8;
        }
        if values[..D].iter().any(|&v| v > 16) {
            return Err(Error::Parse { line, msg: "feature outside 0..=16".into() });
        }
        let label = values[D];
        let y = if label == pair.0 {
            seen.0 = true;
            0
        } else if label == pair.1 {
            seen.1 = true;
            1
        } else {
            continue;
        };
        inputs.extend(values[..D].iter().map(|&v| (v >= DIGITS_THRESHOLD) as u8));
        labels.push(y);
    }
    if !seen.0 {
        return Err(Error::EmptyClass(pair.0));
    }
    if !seen.1 {
        return Err(Error::EmptyClass(pair.1));
    }
    let ds = Dataset::new(
        D,
        Split { inputs, labels },
        None,
        Provenance::File { path: path.display().to_string(), digest: file_digest(path)? },
    )?;
    Ok(match max_examples {
        Some(m) => ds.truncate(m),
        None => ds,
    })
}

fn truncated(what: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("{what} is truncated"))
        } else {
            Error::Io(e)
        }
    }
}

/// Raw IDX images: `(count, rows, cols, pixels)`.
fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = BufReader::new(File::open(path)?);
    let err = truncated("image file");
    let magic = r.read_u32::<BigEndian>().map_err(&err)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let count = r.read_u32::<BigEndian>().map_err(&err)? as usize;
    let rows = r.read_u32::<BigEndian>().map_err(&err)? as usize;
    let cols = r.read_u32::<BigEndian>().map_err(&err)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    r.read_exact(&mut pixels).map_err(&err)?;
    Ok((count, rows, cols, pixels))
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let err = truncated("label file");
    let magic = r.read_u32::<BigEndian>().map_err(&err)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let count = r.read_u32::<BigEndian>().map_err(&err)? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels).map_err(&err)?;
    Ok(labels)
}

/// 2x2 max-pooling of a `rows x cols` grayscale image.
pub fn max_pool_2x2(image: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    let (h, w) = (rows / 2, cols / 2);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let at = |dy: usize, dx: usize| image[(2 * y + dy) * cols + 2 * x + dx];
            out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
        }
    }
    out
}

/// Loads the two classes of `pair` from IDX image and label files. With
/// `pool`, images are max-pooled 2x2 on grayscale before thresholding at
/// [`PIXEL_THRESHOLD`].
pub fn load_mnist_idx(images: &Path, labels: &Path, pair: (u8, u8), pool: bool) -> Result<Dataset> {
    check_pair(pair)?;
    let (count, rows, cols, pixels) = read_idx_images(images)?;
    let raw_labels = read_idx_labels(labels)?;
    if raw_labels.len() != count {
        return Err(Error::Format(format!("{count} images but {} labels", raw_labels.len())));
    }
    if pool && (rows % 2 != 0 || cols % 2 != 0) {
        return Err(Error::Format(format!("cannot pool {rows}x{cols} images 2x2")));
    }
    let d = if pool { (rows / 2) * (cols / 2) } else { rows * cols };
    let mut inputs = Vec::new();
    let mut out_labels = Vec::new();
    let mut seen = (false, false);
    for (image, &label) in pixels.chunks_exact(rows * cols).zip(&raw_labels) {
        let y = if label == pair.0 {
            seen.0 = true;
            0
        } else if label == pair.1 {
            seen.1 = true;
            1
        } else {
            continue;
        };
        let gray = if pool { max_pool_2x2(image, rows, cols) } else { image.to_vec() };
        inputs.extend(gray.iter().map(|&p| (p >= PIXEL_THRESHOLD) as u8));
        out_labels.push(y);
    }
    if !seen.0 {
        return Err(Error::EmptyClass(pair.0));
    }
    if !seen.1 {
        return Err(Error::EmptyClass(pair.1));
    }
    let mut h = FnvHasher::default();
    h.write(&file_digest(images)?.to_le_bytes());
    h.write(&file_digest(labels)?.to_le_bytes());
    Dataset::new(
        d,
        Split { inputs, labels: out_labels },
        None,
        Provenance::File { path: images.display().to_string(), digest: h.finish() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn glass_is_reproducible_and_nested() {
        let a = gen_glass(10, 50, 7).unwrap();
        assert_eq!(a, gen_glass(10, 50, 7).unwrap());
        let b = gen_glass(10, 20, 7).unwrap();
        assert_eq!(&a.train.inputs[..200], &b.train.inputs[..]);
        assert_eq!(&a.train.labels[..20], &b.train.labels[..]);
        assert_ne!(a.train, gen_glass(10, 50, 8).unwrap().train);
    }

    #[test]
    fn glass_is_fair() {
        let g = gen_glass(10, 10_000, 1).unwrap();
        let mean = g.train.inputs.iter().map(|&v| v as f64).sum::<f64>() / g.train.inputs.len() as f64;
        assert!((mean - 0.5).abs() < 0.02);
        let ones = g.train.labels.iter().map(|&v| v as f64).sum::<f64>() / 10_000.0;
        assert!((ones - 0.5).abs() < 0.02);
    }

    #[test]
    fn stained_glass_labels_follow_teacher() {
        let teacher = default_teacher();
        assert_eq!(teacher.param_count(), 31);
        let ds = gen_stained_glass(&teacher, 40, 5).unwrap();
        let config = teacher_config(&teacher, 5);
        for r in 0..40 {
            assert_eq!(teacher.forward(&config, ds.input(r)).unwrap(), ds.train.labels[r]);
        }
    }

    fn write_temp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    fn digits_row(features: [u8; 64], label: u8) -> String {
        let mut s: Vec<String> = features.iter().map(|v| v.to_string()).collect();
        s.push(label.to_string());
        s.join(",") + "\n"
    }

    #[test]
    fn digits_threshold_and_labels() {
        let mut f = [0u8; 64];
        f[0] = 16;
        f[1] = 7;
        f[2] = 8;
        let text = digits_row([0; 64], 3) + &digits_row(f, 5) + &digits_row([1; 64], 9);
        let file = write_temp(text.as_bytes());
        let ds = load_digits_csv(file.path(), (3, 5), None).unwrap();
        assert_eq!(ds.num_examples(), 2);
        assert_eq!(ds.train.labels, vec![0, 1]);
        assert!(ds.input(0).iter().all(|&v| v == 0));
        assert_eq!(&ds.input(1)[..4], &[1, 0, 1, 0]);
        assert_eq!(load_digits_csv(file.path(), (3, 5), Some(1)).unwrap().num_examples(), 1);
    }

    #[test]
    fn digits_errors() {
        let good = digits_row([0; 64], 0) + &digits_row([0; 64], 1);
        let file = write_temp((good.clone() + "1,2,3\n").as_bytes());
        assert!(matches!(load_digits_csv(file.path(), (0, 1), None), Err(Error::Parse { line: 3, .. })));
        let file = write_temp(good.as_bytes());
        assert!(matches!(load_digits_csv(file.path(), (0, 7), None), Err(Error::EmptyClass(7))));
    }

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, count, rows, cols] {
            v.extend(x.to_be_bytes());
        }
        v.extend(pixels);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_LABELS_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend(labels);
        v
    }

    #[test]
    fn mnist_pooling_and_threshold() {
        let mut pixels = vec![0u8; 3 * 16];
        // Image 1: one bright pixel in the bottom-right pooling window.
        pixels[16 + 15] = 200;
        // Image 2: a 127 pixel stays dark.
        pixels[32] = 127;
        let images = write_temp(&idx_images(3, 4, 4, &pixels));
        let labels = write_temp(&idx_labels(&[0, 1, 0]));
        let ds = load_mnist_idx(images.path(), labels.path(), (0, 1), true).unwrap();
        assert_eq!(ds.d, 4);
        assert_eq!(ds.train.labels, vec![0, 1, 0]);
        assert_eq!(ds.input(0), &[0, 0, 0, 0]);
        assert_eq!(ds.input(1), &[0, 0, 0, 1]);
        assert_eq!(ds.input(2), &[0, 0, 0, 0]);
        let raw = load_mnist_idx(images.path(), labels.path(), (0, 1), false).unwrap();
        assert_eq!(raw.d, 16);
    }

    #[test]
    fn mnist_format_errors() {
        let mut bad = idx_images(1, 2, 2, &[0; 4]);
        bad[3] = 0x02;
        let images = write_temp(&bad);
        let labels = write_temp(&idx_labels(&[0]));
        assert!(matches!(load_mnist_idx(images.path(), labels.path(), (0, 1), true), Err(Error::Format(_))));
        let short = write_temp(&idx_images(2, 2, 2, &[0; 5]));
        assert!(matches!(load_mnist_idx(short.path(), labels.path(), (0, 1), true), Err(Error::Format(_))));
        let images = write_temp(&idx_images(1, 2, 2, &[0; 4]));
        assert!(matches!(load_mnist_idx(images.path(), labels.path(), (0, 1), true), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn digest_tracks_content() {
        let a = gen_glass(5, 5, 1).unwrap();
        let b = gen_glass(5, 5, 2).unwrap();
        assert_eq!(a.digest(), gen_glass(5, 5, 1).unwrap().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
