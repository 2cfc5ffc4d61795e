//! Synthetic corpora and downstream tasks.
//!
//! A [`Language`] is a seeded first-order Markov chain over the content tokens.
//! The top of the vocabulary is organised as twin pairs `(a_i, b_i)` that share
//! both their outgoing and incoming transition weights, so a model pretrained on
//! the corpus sees them in identical contexts. Classification triggers come from
//! the `a` side (variant A) or the `b` side (variant B) with the same class
//! semantics, which gives two related tasks with disjoint surface tokens.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::IGNORE_INDEX;

pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const MASK: u32 = 3;
pub const FIRST_CONTENT: u32 = 4;

/// Trigger tokens per class in generated classification tasks.
pub const TRIGGERS_PER_CLASS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub size: usize,
}

impl Vocab {
    pub fn new(size: usize) -> Result<Self> {
        if size <= FIRST_CONTENT as usize + 8 {
            return Err(Error::Config(format!("vocabulary of {size} is too small")));
        }
        Ok(Vocab { size })
    }

    pub fn is_reserved(id: u32) -> bool {
        id < FIRST_CONTENT
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskKind {
    Classification { num_labels: usize },
    Tagging { num_labels: usize },
    MlmCorpus,
}

impl TaskKind {
    pub fn num_labels(&self) -> Option<usize> {
        match self {
            TaskKind::Classification { num_labels } | TaskKind::Tagging { num_labels } => Some(*num_labels),
            TaskKind::MlmCorpus => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    None,
    Class(usize),
    /// One tag per position of `ids`; [`IGNORE_INDEX`] on CLS/SEP.
    Tags(Vec<usize>),
}

/// Token ids start with CLS and end with SEP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub target: Target,
}

impl Example {
    pub fn class(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn uniform(n: usize) -> Self {
        SplitSizes {
            train: n,
            dev: n,
            test: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskDataset {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub seed: u64,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    /// Sequences cut to fit the maximum length while loading.
    pub truncated: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl TaskDataset {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.dev.is_empty() && self.test.is_empty()
    }
}

/// Seeded Markov chain over content tokens with twin pairs at the top of the
/// vocabulary.
#[derive(Clone, Debug)]
pub struct Language {
    vocab: Vocab,
    seed: u64,
    /// Cumulative successor distribution per content token.
    cumulative: Vec<Vec<f64>>,
    start: Vec<f64>,
    twins: usize,
}

impl Language {
    pub fn new(vocab: Vocab, seed: u64) -> Self {
        let n = vocab.size - FIRST_CONTENT as usize;
        let twins = n / 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Zipf-like popularity over a random ordering of the content tokens.
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut popularity = vec![0.0; n];
        for (rank, &tok) in order.iter().enumerate() {
            popularity[tok] = 1.0 / (rank as f64 + 1.0);
        }
        let pop_cum = cumulative(&popularity);
        let mut weights = vec![vec![0.0; n]; n];
        for row in weights.iter_mut() {
            for _ in 0..6 {
                let j = sample(&pop_cum, rng.gen());
                row[j] += 0.5 + rng.gen::<f64>();
            }
            for w in row.iter_mut() {
                *w += 0.01;
            }
        }
        let (a0, b0) = (n - 2 * twins, n - twins);
        for i in 0..twins {
            let (a, b) = (a0 + i, b0 + i);
            weights[b] = weights[a].clone();
            for row in weights.iter_mut() {
                row[b] = row[a];
            }
        }
        let mut start = popularity;
        for i in 0..twins {
            start[b0 + i] = start[a0 + i];
        }
        Language {
            vocab,
            seed,
            cumulative: weights.iter().map(|w| cumulative(w)).collect(),
            start: cumulative(&start),
            twins,
        }
    }

    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of twin pairs.
    pub fn twin_count(&self) -> usize {
        self.twins
    }

    pub fn twin(&self, variant: Variant, i: usize) -> u32 {
        let n = self.vocab.size - FIRST_CONTENT as usize;
        let base = match variant {
            Variant::A => n - 2 * self.twins,
            Variant::B => n - self.twins,
        };
        FIRST_CONTENT + (base + i) as u32
    }

    /// Whether `id` is in the twin region (a potential trigger).
    pub fn is_twin(&self, id: u32) -> bool {
        let n = self.vocab.size - FIRST_CONTENT as usize;
        id >= FIRST_CONTENT && (id - FIRST_CONTENT) as usize >= n - 2 * self.twins
    }

    /// Content tokens outside the twin region.
    pub fn fillers(&self) -> std::ops::Range<u32> {
        let n = self.vocab.size - FIRST_CONTENT as usize;
        FIRST_CONTENT..FIRST_CONTENT + (n - 2 * self.twins) as u32
    }

    /// Trigger tokens of `class` in `variant`.
    pub fn triggers(&self, variant: Variant, class: usize) -> Vec<u32> {
        (0..TRIGGERS_PER_CLASS)
            .map(|j| self.twin(variant, class * TRIGGERS_PER_CLASS + j))
            .collect()
    }

    /// `len` content tokens drawn from the chain.
    pub fn sample_content(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut cur = sample(&self.start, rng.gen());
        out.push(FIRST_CONTENT + cur as u32);
        for _ in 1..len {
            cur = sample(&self.cumulative[cur], rng.gen());
            out.push(FIRST_CONTENT + cur as u32);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    A,
    B,
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn sample(cumulative: &[f64], u: f64) -> usize {
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn split_rng(seed: u64, split: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split);
    rng
}

fn wrap(content: Vec<u32>) -> Vec<u32> {
    let mut ids = Vec::with_capacity(content.len() + 2);
    ids.push(CLS);
    ids.extend(content);
    ids.push(SEP);
    ids
}

/// MLM pretraining corpus of `len`-token sequences (plus CLS/SEP).
pub fn gen_corpus(lang: &Language, seed: u64, sizes: SplitSizes, len: usize) -> TaskDataset {
    let make = |split: u64, n: usize| {
        let mut rng = split_rng(seed, split);
        (0..n)
            .map(|_| Example {
                ids: wrap(lang.sample_content(&mut rng, len)),
                target: Target::None,
            })
            .collect()
    };
    TaskDataset {
        kind: TaskKind::MlmCorpus,
        vocab_size: lang.vocab.size,
        seed,
        train: make(0, sizes.train),
        dev: make(1, sizes.dev),
        test: make(2, sizes.test),
        truncated: 0,
    }
}

/// Sequence classification: the label is the class whose trigger tokens were
/// planted in an otherwise trigger-free chain sample. Exactly balanced.
pub fn gen_classification_task(
    lang: &Language,
    seed: u64,
    num_labels: usize,
    sizes: SplitSizes,
    len: usize,
    variant: Variant,
) -> Result<TaskDataset> {
    if num_labels < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {num_labels}")));
    }
    if num_labels * TRIGGERS_PER_CLASS > lang.twin_count() {
        return Err(Error::Config(format!(
            "vocabulary has {} twin pairs, {num_labels} classes need {}",
            lang.twin_count(),
            num_labels * TRIGGERS_PER_CLASS
        )));
    }
    if len < 2 {
        return Err(Error::Config("classification sequences need at least 2 tokens".into()));
    }
    let fillers = lang.fillers();
    let make = |split: u64, n: usize| {
        let mut rng = split_rng(seed, split);
        let mut labels: Vec<usize> = (0..n).map(|i| i % num_labels).collect();
        labels.shuffle(&mut rng);
        labels
            .into_iter()
            .map(|label| {
                let mut content = lang.sample_content(&mut rng, len);
                for tok in content.iter_mut() {
                    if lang.is_twin(*tok) {
                        *tok = rng.gen_range(fillers.clone());
                    }
                }
                let triggers = lang.triggers(variant, label);
                let count = rng.gen_range(1..=2);
                let mut positions: Vec<usize> = (0..len).collect();
                positions.shuffle(&mut rng);
                for &p in &positions[..count] {
                    content[p] = *triggers.choose(&mut rng).expect("non-empty");
                }
                Example {
                    ids: wrap(content),
                    target: Target::Class(label),
                }
            })
            .collect()
    };
    Ok(TaskDataset {
        kind: TaskKind::Classification { num_labels },
        vocab_size: lang.vocab.size,
        seed,
        train: make(0, sizes.train),
        dev: make(1, sizes.dev),
        test: make(2, sizes.test),
        truncated: 0,
    })
}

/// Tokens whose successor gets a non-zero tag.
pub fn is_marker(id: u32) -> bool {
    id >= FIRST_CONTENT && id % 4 == 0
}

/// Tag of `cur` given its left neighbour: 0 unless `prev` is a marker, then
/// `1 + cur mod (k − 1)`.
pub fn window_tag(prev: u32, cur: u32, num_labels: usize) -> usize {
    if is_marker(prev) {
        1 + cur as usize % (num_labels - 1)
    } else {
        0
    }
}

/// Token tagging with tags given by [`window_tag`].
pub fn gen_tagging_task(
    lang: &Language,
    seed: u64,
    num_labels: usize,
    sizes: SplitSizes,
    len: usize,
) -> Result<TaskDataset> {
    if num_labels < 2 {
        return Err(Error::Config(format!("need at least 2 tags, got {num_labels}")));
    }
    let make = |split: u64, n: usize| {
        let mut rng = split_rng(seed, split);
        (0..n)
            .map(|_| {
                let ids = wrap(lang.sample_content(&mut rng, len));
                let tags = tags_for(&ids, num_labels);
                Example {
                    ids,
                    target: Target::Tags(tags),
                }
            })
            .collect()
    };
    Ok(TaskDataset {
        kind: TaskKind::Tagging { num_labels },
        vocab_size: lang.vocab.size,
        seed,
        train: make(0, sizes.train),
        dev: make(1, sizes.dev),
        test: make(2, sizes.test),
        truncated: 0,
    })
}

fn tags_for(ids: &[u32], num_labels: usize) -> Vec<usize> {
    ids.iter()
        .enumerate()
        .map(|(i, &id)| {
            if Vocab::is_reserved(id) || i == 0 {
                IGNORE_INDEX
            } else {
                window_tag(ids[i - 1], id, num_labels)
            }
        })
        .collect()
}

/// BERT-style corruption: each non-reserved position is selected with
/// probability 0.15; selected positions become MASK (80%), a random content
/// token (10%) or stay unchanged (10%). Targets hold the original id at
/// selected positions and [`IGNORE_INDEX`] elsewhere.
pub fn mlm_corrupt(batch: &[Vec<u32>], vocab: Vocab, seed: u64) -> (Vec<Vec<u32>>, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for seq in batch {
        let mut inp = seq.clone();
        let mut tgt = vec![IGNORE_INDEX; seq.len()];
        for (i, &id) in seq.iter().enumerate() {
            if Vocab::is_reserved(id) || rng.gen::<f64>() >= 0.15 {
                continue;
            }
            tgt[i] = id as usize;
            let r: f64 = rng.gen();
            if r < 0.8 {
                inp[i] = MASK;
            } else if r < 0.9 {
                inp[i] = rng.gen_range(FIRST_CONTENT..vocab.size as u32);
            }
        }
        inputs.push(inp);
        targets.push(tgt);
    }
    (inputs, targets)
}

// ------------------------------------------------------------------ TSV files

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_ids(path: &Path, line: usize, text: &str, vocab_size: usize) -> Result<Vec<u32>> {
    text.split_whitespace()
        .map(|tok| {
            let id: u32 = tok
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad token id `{tok}`")))?;
            if id as usize >= vocab_size {
                return Err(Error::Index {
                    what: "token id (line)",
                    position: line,
                    value: id as usize,
                    limit: vocab_size,
                });
            }
            Ok(id)
        })
        .collect()
}

/// Reads one split file. Lines hold content tokens only; CLS/SEP are added
/// here, and sequences longer than `max_len − 2` tokens are cut (counted).
pub fn load_tsv(path: &Path, kind: TaskKind, vocab_size: usize, max_len: usize) -> Result<(Vec<Example>, usize)> {
    let file = fs::File::open(path)?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let cap = max_len.saturating_sub(2);
    let mut out = Vec::new();
    let mut truncated = 0;
    let mut cut = |mut content: Vec<u32>, tags: Option<&mut Vec<usize>>| {
        if content.len() > cap {
            truncated += 1;
            content.truncate(cap);
            if let Some(t) = tags {
                t.truncate(cap);
            }
        }
        content
    };
    match kind {
        TaskKind::Classification { num_labels } => {
            for (i, line) in lines.iter().enumerate() {
                let ln = i + 1;
                let (label, ids) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err(path, ln, "expected `label<TAB>ids`"))?;
                let label: usize = label
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, ln, format!("bad label `{label}`")))?;
                if label >= num_labels {
                    return Err(parse_err(path, ln, format!("label {label} >= {num_labels}")));
                }
                let content = cut(parse_ids(path, ln, ids, vocab_size)?, None);
                out.push(Example {
                    ids: wrap(content),
                    target: Target::Class(label),
                });
            }
        }
        TaskKind::Tagging { num_labels } => {
            if lines.len() % 2 != 0 {
                return Err(parse_err(path, lines.len(), "tagging files hold id/tag line pairs"));
            }
            for (i, pair) in lines.chunks(2).enumerate() {
                let ln = 2 * i + 1;
                let content = parse_ids(path, ln, &pair[0], vocab_size)?;
                let mut tags = pair[1]
                    .split_whitespace()
                    .map(|t| {
                        let tag: usize = t
                            .parse()
                            .map_err(|_| parse_err(path, ln + 1, format!("bad tag `{t}`")))?;
                        if tag >= num_labels {
                            return Err(parse_err(path, ln + 1, format!("tag {tag} >= {num_labels}")));
                        }
                        Ok(tag)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if tags.len() != content.len() {
                    return Err(parse_err(path, ln + 1, "tag count differs from token count"));
                }
                let content = cut(content, Some(&mut tags));
                let mut full = vec![IGNORE_INDEX];
                full.extend(tags);
                full.push(IGNORE_INDEX);
                out.push(Example {
                    ids: wrap(content),
                    target: Target::Tags(full),
                });
            }
        }
        TaskKind::MlmCorpus => {
            for (i, line) in lines.iter().enumerate() {
                let content = cut(parse_ids(path, i + 1, line, vocab_size)?, None);
                out.push(Example {
                    ids: wrap(content),
                    target: Target::None,
                });
            }
        }
    }
    Ok((out, truncated))
}

fn content(ids: &[u32]) -> &[u32] {
    let start = usize::from(ids.first() == Some(&CLS));
    let end = ids.len() - usize::from(ids.len() > start && ids.last() == Some(&SEP));
    &ids[start..end]
}

fn join<T: ToString>(xs: impl Iterator<Item = T>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn save_tsv(path: &Path, examples: &[Example]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        let ids = join(content(&ex.ids).iter());
        match &ex.target {
            Target::Class(c) => writeln!(w, "{c}\t{ids}")?,
            Target::Tags(tags) => {
                let inner = &tags[1..tags.len() - 1];
                writeln!(w, "{ids}")?;
                writeln!(w, "{}", join(inner.iter()))?;
            }
            Target::None => writeln!(w, "{ids}")?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    #[serde(flatten)]
    kind: TaskKind,
    vocab_size: usize,
    seed: u64,
}

impl TaskDataset {
    /// Writes `meta.json` plus `train.tsv`, `dev.tsv`, `test.tsv` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = DatasetMeta {
            kind: self.kind,
            vocab_size: self.vocab_size,
            seed: self.seed,
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(dir.join("meta.json"), json + "\n")?;
        save_tsv(&dir.join("train.tsv"), &self.train)?;
        save_tsv(&dir.join("dev.tsv"), &self.dev)?;
        save_tsv(&dir.join("test.tsv"), &self.test)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path, max_len: usize) -> Result<Self> {
        let meta_path: PathBuf = dir.join("meta.json");
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
            .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
        let mut truncated = 0;
        let mut load = |name: &str| -> Result<Vec<Example>> {
            let (ex, t) = load_tsv(&dir.join(name), meta.kind, meta.vocab_size, max_len)?;
            truncated += t;
            Ok(ex)
        };
        let (train, dev, test) = (load("train.tsv")?, load("dev.tsv")?, load("test.tsv")?);
        Ok(TaskDataset {
            kind: meta.kind,
            vocab_size: meta.vocab_size,
            seed: meta.seed,
            train,
            dev,
            test,
            truncated,
        })
    }
}
