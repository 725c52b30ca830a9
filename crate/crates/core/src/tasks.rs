//! Datasets: the signal-generation task, a synthetic common-suffix
//! classification task, and a loader for precomputed per-timestep features.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Per-step targets, squared-error loss.
    Regression,
    /// One label per sequence, read at the final step.
    Classification,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Sequence(Matrix),
    Class(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    /// `l x N_x`.
    pub input: Matrix,
    pub target: Target,
}

impl Item {
    pub fn len(&self) -> usize {
        self.input.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.input.rows() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub items: Vec<Item>,
    pub kind: TaskKind,
    pub splits: Splits,
    /// Class count for classification, 0 for regression.
    pub num_classes: usize,
}

impl SequenceDataset {
    pub fn new(items: Vec<Item>, kind: TaskKind, splits: Splits, num_classes: usize) -> Result<Self> {
        let ds = SequenceDataset {
            items,
            kind,
            splits,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .items
            .first()
            .ok_or_else(|| Error::EmptyInput("dataset has no items".into()))?;
        let n_x = first.input.cols();
        let n_y = match (&first.target, self.kind) {
            (Target::Sequence(t), TaskKind::Regression) => t.cols(),
            (Target::Class(_), TaskKind::Classification) => self.num_classes,
            _ => return Err(Error::Input("target type does not match task kind".into())),
        };
        if self.kind == TaskKind::Classification && self.num_classes < 2 {
            return Err(Error::Input("classification needs at least 2 classes".into()));
        }
        for (q, item) in self.items.iter().enumerate() {
            if item.input.cols() != n_x {
                return Err(Error::dim(format!(
                    "item {q} has {} features, expected {n_x}",
                    item.input.cols()
                )));
            }
            item.input.check_finite(&format!("input of item {q}"))?;
            match (&item.target, self.kind) {
                (Target::Sequence(t), TaskKind::Regression) => {
                    if t.shape() != (item.len(), n_y) {
                        return Err(Error::dim(format!(
                            "target of item {q} is {:?}, expected ({}, {n_y})",
                            t.shape(),
                            item.len()
                        )));
                    }
                    t.check_finite(&format!("target of item {q}"))?;
                }
                (Target::Class(c), TaskKind::Classification) => {
                    if *c >= self.num_classes {
                        return Err(Error::Index {
                            index: *c,
                            len: self.num_classes,
                        });
                    }
                }
                _ => return Err(Error::Input(format!("item {q} has the wrong target type"))),
            }
        }
        let n = self.items.len();
        for &i in self
            .splits
            .train
            .iter()
            .chain(&self.splits.val)
            .chain(&self.splits.test)
        {
            if i >= n {
                return Err(Error::Index { index: i, len: n });
            }
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.items[0].input.cols()
    }

    pub fn output_size(&self) -> usize {
        match (&self.items[0].target, self.kind) {
            (Target::Sequence(t), _) => t.cols(),
            (Target::Class(_), _) => self.num_classes,
        }
    }

    pub fn l_max(&self) -> usize {
        self.items.iter().map(Item::len).max().unwrap_or(0)
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Item> {
        indices.iter().map(|&i| &self.items[i]).collect()
    }

    pub fn train(&self) -> Vec<&Item> {
        self.subset(&self.splits.train)
    }

    /// Validation items, falling back to the training items when no
    /// validation split exists.
    pub fn val(&self) -> Vec<&Item> {
        if self.splits.val.is_empty() {
            self.train()
        } else {
            self.subset(&self.splits.val)
        }
    }

    /// Test items, falling back to validation.
    pub fn test(&self) -> Vec<&Item> {
        if self.splits.test.is_empty() {
            self.val()
        } else {
            self.subset(&self.splits.test)
        }
    }

    /// Target signal of a single-item regression dataset.
    pub fn target_signal(&self) -> Option<&Matrix> {
        match &self.items.first()?.target {
            Target::Sequence(t) => Some(t),
            Target::Class(_) => None,
        }
    }
}

/// Built-in test signal: a seeded sum of sinusoids plus small Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_synth_seed")]
    pub seed: u64,
    #[serde(default = "default_components")]
    pub components: usize,
    /// Noise std relative to the unscaled signal amplitude.
    #[serde(default = "default_synth_noise")]
    pub noise: f64,
    /// Shortest and longest sinusoid period in steps.
    #[serde(default = "default_periods")]
    pub periods: (f64, f64),
}

fn default_synth_seed() -> u64 {
    7
}
fn default_components() -> usize {
    5
}
fn default_synth_noise() -> f64 {
    0.005
}
fn default_periods() -> (f64, f64) {
    (12.0, 150.0)
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: default_synth_seed(),
            components: default_components(),
            noise: default_synth_noise(),
            periods: default_periods(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SignalSource {
    /// Plain text, one real per line.
    File(PathBuf),
    Synth(SynthSpec),
}

/// Samples of the built-in synthesized signal (before scaling).
pub fn synthesize_signal(spec: &SynthSpec, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.periods;
    let comps: Vec<(f64, f64, f64)> = (0..spec.components)
        .map(|_| {
            // log-uniform period, amplitude in [0.3, 1], uniform phase
            let period = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
            let amp = 0.3 + 0.7 * rng.random::<f64>();
            let phase = std::f64::consts::TAU * rng.random::<f64>();
            (std::f64::consts::TAU / period, amp, phase)
        })
        .collect();
    (0..n)
        .map(|t| {
            let clean: f64 = comps.iter().map(|(w, a, p)| a * (w * t as f64 + p).sin()).sum();
            let eps: f64 = rng.sample(StandardNormal);
            clean + spec.noise * eps
        })
        .collect()
}

/// Reads a signal file: one real per line, blank lines ignored.
pub fn read_signal_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read signal file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("not a number: {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "non-finite value".into(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Min-max scaling onto `[-1, 1]`; both endpoints are hit exactly.
pub fn scale_to_unit_range(signal: &[f64]) -> Result<Vec<f64>> {
    let lo = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if signal.is_empty() || !(hi > lo) {
        return Err(Error::Scaling("signal is empty or constant".into()));
    }
    Ok(signal
        .iter()
        .map(|&v| {
            if v == lo {
                -1.0
            } else if v == hi {
                1.0
            } else {
                (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
            }
        })
        .collect())
}

/// Single-item regression task: the input is `n` zero vectors of size 1 and
/// the target is the first `n` samples of the signal scaled to `[-1, 1]`.
pub fn make_generation_task(source: &SignalSource, n: usize) -> Result<SequenceDataset> {
    if n == 0 {
        return Err(Error::EmptyInput("generation length is 0".into()));
    }
    let raw = match source {
        SignalSource::File(path) => {
            let s = read_signal_file(path)?;
            if s.len() < n {
                return Err(Error::Input(format!(
                    "{} has {} samples, {n} requested",
                    path.display(),
                    s.len()
                )));
            }
            s[..n].to_vec()
        }
        SignalSource::Synth(spec) => synthesize_signal(spec, n),
    };
    let scaled = scale_to_unit_range(&raw)?;
    let item = Item {
        input: Matrix::zeros(n, 1),
        target: Target::Sequence(Matrix::from_vec(n, 1, scaled)?),
    };
    SequenceDataset::new(
        vec![item],
        TaskKind::Regression,
        Splits {
            train: vec![0],
            val: vec![0],
            test: vec![0],
        },
        0,
    )
}

/// Parameters of the synthetic common-suffix task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonSuffixSpec {
    pub classes: usize,
    pub per_class: usize,
    pub prefix_len: usize,
    pub suffix_len: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    /// Std of the per-item Gaussian jitter added to the templates.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_features() -> usize {
    13
}
fn default_jitter() -> f64 {
    0.3
}

impl CommonSuffixSpec {
    pub fn new(classes: usize, per_class: usize, prefix_len: usize, suffix_len: usize, seed: u64) -> Self {
        CommonSuffixSpec {
            classes,
            per_class,
            prefix_len,
            suffix_len,
            features: default_features(),
            jitter: default_jitter(),
            seed,
        }
    }

    /// Training items per class, 5 of every 7 rounded, at least one item on each side.
    pub fn train_per_class(&self) -> usize {
        if self.per_class <= 1 {
            return self.per_class;
        }
        (self.per_class * 5).div_ceil(7).clamp(1, self.per_class - 1)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// Classification task where only a class-specific prefix carries the label
/// and every sequence ends with the same suffix. Features are standardized with
/// training-split statistics; validation reuses the clean training items.
pub fn make_common_suffix_task(spec: &CommonSuffixSpec) -> Result<SequenceDataset> {
    if spec.classes < 2 {
        return Err(Error::dim(format!("need at least 2 classes, got {}", spec.classes)));
    }
    if spec.per_class == 0 || spec.features == 0 || spec.prefix_len + spec.suffix_len == 0 {
        return Err(Error::dim("items, features and length must be positive"));
    }
    if !(spec.jitter >= 0.0) {
        return Err(Error::dim("jitter must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = spec.features;
    let prefixes: Vec<Matrix> = (0..spec.classes)
        .map(|_| gaussian(&mut rng, spec.prefix_len, a, 1.0))
        .collect();
    let suffix = gaussian(&mut rng, spec.suffix_len, a, 1.0);
    let template = |c: usize| -> Result<Matrix> { prefixes[c].vstack(&suffix) };

    let n_train = spec.train_per_class();
    let mut items = Vec::new();
    let mut splits = Splits::default();
    for c in 0..spec.classes {
        let base = template(c)?;
        for j in 0..spec.per_class {
            let noise = gaussian(&mut rng, base.rows(), a, spec.jitter);
            let idx = items.len();
            items.push(Item {
                input: base.add(&noise)?,
                target: Target::Class(c),
            });
            if j < n_train {
                splits.train.push(idx);
            } else {
                splits.test.push(idx);
            }
        }
    }
    splits.val = splits.train.clone();
    standardize(&mut items, &splits.train);
    SequenceDataset::new(items, TaskKind::Classification, splits, spec.classes)
}

/// Per-feature mean/std over every timestep of the reference items, applied
/// to all items. Constant features are only centred.
fn standardize(items: &mut [Item], reference: &[usize]) {
    let Some(first) = items.first() else { return };
    let a = first.input.cols();
    let mut sum = vec![0.0; a];
    let mut count = 0usize;
    for &i in reference {
        for r in 0..items[i].len() {
            for (s, v) in sum.iter_mut().zip(items[i].input.row(r)) {
                *s += v;
            }
        }
        count += items[i].len();
    }
    if count == 0 {
        return;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut var = vec![0.0; a];
    for &i in reference {
        for r in 0..items[i].len() {
            for ((s, v), mu) in var.iter_mut().zip(items[i].input.row(r)).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / count as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for item in items.iter_mut() {
        for r in 0..item.len() {
            for ((v, mu), sd) in item.input.row_mut(r).iter_mut().zip(&mean).zip(&std) {
                *v = (*v - mu) / sd;
            }
        }
    }
}

/// Reads one feature CSV: a header row, then one timestep per row.
pub fn read_feature_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read feature file {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |msg: String| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| fmt(format!("not a finite number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(fmt(format!("{} columns, expected {w}", row.len())));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }
    Matrix::from_rows(&rows)
}

/// One entry of a label file: `path,label[,split]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Parses a label file. Relative paths resolve against the label file's
/// directory; the split column defaults to `train`. Lines starting with `#`
/// are comments.
pub fn read_label_file(path: &Path) -> Result<Vec<LabelEntry>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read label file {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fmt = |msg: String| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(fmt("expected path,label[,split]".into()));
        }
        let label = fields[1]
            .parse()
            .map_err(|_| fmt(format!("bad label {:?}", fields[1])))?;
        let split = match fields.get(2).copied() {
            None | Some("train") => Split::Train,
            Some("val") => Split::Val,
            Some("test") => Split::Test,
            Some(other) => return Err(fmt(format!("unknown split {other:?}"))),
        };
        let p = Path::new(fields[0]);
        out.push(LabelEntry {
            path: if p.is_relative() { base.join(p) } else { p.to_path_buf() },
            label,
            split,
        });
    }
    Ok(out)
}

/// One classification item per feature file. `splits` defaults to all-train.
/// Standardization statistics come from the training split only; with no
/// validation entries the clean training items double as validation.
pub fn load_feature_csv(paths: &[PathBuf], labels: &[usize], splits: Option<&[Split]>) -> Result<SequenceDataset> {
    if paths.is_empty() {
        return Err(Error::EmptyInput("no feature files given".into()));
    }
    if labels.len() != paths.len() {
        return Err(Error::Input(format!(
            "{} feature files but {} labels",
            paths.len(),
            labels.len()
        )));
    }
    if let Some(s) = splits {
        if s.len() != paths.len() {
            return Err(Error::Input("split list length differs from file list".into()));
        }
    }
    let mut items = Vec::with_capacity(paths.len());
    let mut width = None;
    for (path, &label) in paths.iter().zip(labels) {
        let input = read_feature_csv(path)?;
        match width {
            None => width = Some(input.cols()),
            Some(w) if w != input.cols() => {
                return Err(Error::Format {
                    path: path.clone(),
                    line: 2,
                    msg: format!("{} columns, other files have {w}", input.cols()),
                })
            }
            _ => {}
        }
        items.push(Item {
            input,
            target: Target::Class(label),
        });
    }
    let mut sp = Splits::default();
    for i in 0..items.len() {
        match splits.map_or(Split::Train, |s| s[i]) {
            Split::Train => sp.train.push(i),
            Split::Val => sp.val.push(i),
            Split::Test => sp.test.push(i),
        }
    }
    if sp.train.is_empty() {
        return Err(Error::Input("no training items".into()));
    }
    if sp.val.is_empty() {
        sp.val = sp.train.clone();
    }
    standardize(&mut items, &sp.train);
    let num_classes = (labels.iter().copied().max().unwrap_or(0) + 1).max(2);
    SequenceDataset::new(items, TaskKind::Classification, sp, num_classes)
}

/// Loads every file named in a label file.
pub fn load_labelled_features(label_file: &Path) -> Result<SequenceDataset> {
    let entries = read_label_file(label_file)?;
    let paths: Vec<PathBuf> = entries.iter().map(|e| e.path.clone()).collect();
    let labels: Vec<usize> = entries.iter().map(|e| e.label).collect();
    let splits: Vec<Split> = entries.iter().map(|e| e.split).collect();
    load_feature_csv(&paths, &labels, Some(&splits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn generation_task_shape_and_range() {
        let ds = make_generation_task(&SignalSource::Synth(SynthSpec::default()), 300).unwrap();
        assert_eq!(ds.items.len(), 1);
        assert_eq!(ds.kind, TaskKind::Regression);
        let t = ds.target_signal().unwrap();
        assert_eq!(t.shape(), (300, 1));
        assert_eq!(ds.items[0].input, Matrix::zeros(300, 1));
        let lo = t.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (-1.0, 1.0));
    }

    #[test]
    fn synth_is_deterministic() {
        let src = SignalSource::Synth(SynthSpec::default());
        assert_eq!(
            make_generation_task(&src, 300).unwrap(),
            make_generation_task(&src, 300).unwrap()
        );
    }

    #[test]
    fn signal_file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sig.txt");
        let mut f = fs::File::create(&p).unwrap();
        for i in 0..320 {
            writeln!(f, "{}", (i as f64 * 0.1).sin()).unwrap();
        }
        drop(f);
        let ds = make_generation_task(&SignalSource::File(p.clone()), 300).unwrap();
        assert_eq!(ds.target_signal().unwrap().rows(), 300);
        assert!(matches!(
            make_generation_task(&SignalSource::File(p), 400),
            Err(Error::Input(_))
        ));

        let c = dir.path().join("const.txt");
        fs::write(&c, "0.5\n".repeat(10)).unwrap();
        assert!(matches!(
            make_generation_task(&SignalSource::File(c), 10),
            Err(Error::Scaling(_))
        ));
        assert!(matches!(
            make_generation_task(&SignalSource::File(dir.path().join("missing")), 10),
            Err(Error::Input(_))
        ));
        let bad = dir.path().join("bad.txt");
        fs::write(&bad, "1.0\nfoo\n").unwrap();
        assert!(matches!(read_signal_file(&bad), Err(Error::Format { line: 2, .. })));
    }

    #[test]
    fn common_suffix_balanced_splits() {
        let ds = make_common_suffix_task(&CommonSuffixSpec::new(5, 7, 4, 6, 1)).unwrap();
        assert_eq!(ds.items.len(), 35);
        assert_eq!(ds.splits.train.len(), 25);
        assert_eq!(ds.splits.test.len(), 10);
        assert_eq!(ds.input_size(), 13);
        assert_eq!(ds.output_size(), 5);
        for c in 0..5 {
            let count = |idx: &[usize]| idx.iter().filter(|&&i| ds.items[i].target == Target::Class(c)).count();
            assert_eq!(count(&ds.splits.train), 5);
            assert_eq!(count(&ds.splits.test), 2);
        }
    }

    #[test]
    fn common_suffix_standardized_on_train() {
        let ds = make_common_suffix_task(&CommonSuffixSpec::new(3, 7, 5, 5, 2)).unwrap();
        let train = ds.train();
        let n: usize = train.iter().map(|i| i.len()).sum();
        for f in 0..13 {
            let mean: f64 = train
                .iter()
                .flat_map(|i| (0..i.len()).map(move |r| i.input[(r, f)]))
                .sum::<f64>()
                / n as f64;
            let var: f64 = train
                .iter()
                .flat_map(|i| (0..i.len()).map(move |r| i.input[(r, f)]))
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn common_suffix_shared_suffix_without_jitter() {
        let mut spec = CommonSuffixSpec::new(3, 2, 3, 4, 9);
        spec.jitter = 0.0;
        let ds = make_common_suffix_task(&spec).unwrap();
        let a = &ds.items[0].input;
        let b = &ds.items[2].input;
        assert_eq!(a.row_range(3, 7), b.row_range(3, 7));
        assert_ne!(a.row_range(0, 3), b.row_range(0, 3));
    }

    #[test]
    fn common_suffix_errors_and_determinism() {
        assert!(matches!(
            make_common_suffix_task(&CommonSuffixSpec::new(1, 7, 3, 3, 0)),
            Err(Error::Dimension(_))
        ));
        let s = CommonSuffixSpec::new(5, 7, 3, 0, 4);
        assert_eq!(
            make_common_suffix_task(&s).unwrap(),
            make_common_suffix_task(&s).unwrap()
        );
    }

    #[test]
    fn feature_csv_loader() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, rows: usize, cols: usize, off: f64| {
            let p = dir.path().join(name);
            let mut s = (0..cols).map(|c| format!("f{c}")).collect::<Vec<_>>().join(",");
            s.push('\n');
            for r in 0..rows {
                let row: Vec<String> = (0..cols)
                    .map(|c| format!("{}", off + (r * cols + c) as f64 * 0.37))
                    .collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
            fs::write(&p, s).unwrap();
            p
        };
        let a = write("a.csv", 4, 13, 0.0);
        let b = write("b.csv", 6, 13, 1.0);
        let ds = load_feature_csv(&[a.clone(), b.clone()], &[0, 1], None).unwrap();
        assert_eq!(ds.input_size(), 13);
        assert_eq!(ds.l_max(), 6);
        for f in 0..13 {
            let mean: f64 = ds
                .items
                .iter()
                .flat_map(|i| (0..i.len()).map(move |r| i.input[(r, f)]))
                .sum::<f64>()
                / 10.0;
            assert!(mean.abs() < 1e-10);
        }
        assert!(matches!(load_feature_csv(&[], &[], None), Err(Error::EmptyInput(_))));
        assert!(matches!(
            load_feature_csv(std::slice::from_ref(&a), &[0, 1], None),
            Err(Error::Input(_))
        ));
        let c = write("c.csv", 3, 12, 0.0);
        assert!(matches!(
            load_feature_csv(&[a.clone(), c], &[0, 1], None),
            Err(Error::Format { .. })
        ));
        let ragged = dir.path().join("r.csv");
        fs::write(&ragged, "x,y\n1,2\n3\n").unwrap();
        assert!(matches!(read_feature_csv(&ragged), Err(Error::Format { line: 3, .. })));

        let labels = dir.path().join("labels.txt");
        fs::write(&labels, "a.csv,0\nb.csv,1,test\n").unwrap();
        let ds = load_labelled_features(&labels).unwrap();
        assert_eq!(ds.splits.train, vec![0]);
        assert_eq!(ds.splits.test, vec![1]);
        assert_eq!(load_labelled_features(&labels).unwrap(), ds);
    }
}
