//! Context-independent code token recognizer.
//!
//! A binary classifier over a token's surface string: four Gaussian-binned
//! language-model features (word-unigram and char-6-gram log probabilities
//! under a prose LM and a code LM) go through a linear layer, the output is
//! concatenated with a hashed-subword embedding and passed through a tanh
//! hidden layer into a single sigmoid node. A token is CODE when the score
//! exceeds 0.5; the binary decision selects a row of a learned embedding
//! table, which is what the tagger consumes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive::{export_params, Provenance};
use crate::lm::NgramLm;
use crate::neural::{seeded_rng, Dense, Matrix, ParamStore, Tape, TrainConfig};
use crate::signals::{fit_binner, BinaryEmbedding, GaussianBinner, SubwordConfig, SubwordEmbedder};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LexLabel {
    Code,
    Ambiguous,
    NonCode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub token: String,
    pub label: LexLabel,
}

/// `token TAB {CODE|AMBIGUOUS|NON_CODE}` lines; duplicate tokens are an error.
pub fn parse_lexicon(name: &str, text: &str) -> Result<Vec<LexiconEntry>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(name, lineno + 1, "expected `token<TAB>label`"))?;
        let label = match label.trim() {
            "CODE" => LexLabel::Code,
            "AMBIGUOUS" => LexLabel::Ambiguous,
            "NON_CODE" => LexLabel::NonCode,
            other => {
                return Err(Error::parse(
                    name,
                    lineno + 1,
                    format!("unknown lexicon label `{other}`"),
                ))
            }
        };
        if !seen.insert(token.to_string()) {
            return Err(Error::parse(
                name,
                lineno + 1,
                format!("duplicate lexicon token `{token}`"),
            ));
        }
        entries.push(LexiconEntry {
            token: token.to_string(),
            label,
        });
    }
    Ok(entries)
}

pub fn read_lexicon(path: &Path) -> Result<Vec<LexiconEntry>> {
    let text = std::fs::read_to_string(path)?;
    parse_lexicon(&path.display().to_string(), &text)
}

/// AMBIGUOUS merges into NON_CODE before any training or evaluation.
pub fn merge_ambiguous(entries: &[LexiconEntry]) -> Vec<(String, bool)> {
    entries
        .iter()
        .map(|e| (e.token.clone(), e.label == LexLabel::Code))
        .collect()
}

/// The four language models feeding the recognizer, in feature order.
pub struct CodeRecLms {
    pub prose_word: NgramLm,
    pub code_word: NgramLm,
    pub prose_char: NgramLm,
    pub code_char: NgramLm,
}

impl CodeRecLms {
    /// Raw log-prob features in the fixed order
    /// (prose-word, code-word, prose-char, code-char).
    pub fn raw_features(&self, token: &str) -> Result<[f64; 4]> {
        Ok([
            self.prose_word.token_logprob(token)?,
            self.code_word.token_logprob(token)?,
            self.prose_char.token_logprob(token)?,
            self.code_char.token_logprob(token)?,
        ])
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "prose_word": self.prose_word.to_json(),
            "code_word": self.code_word.to_json(),
            "prose_char": self.prose_char.to_json(),
            "code_char": self.code_char.to_json(),
        })
    }

    fn from_json(value: &serde_json::Value) -> Result<CodeRecLms> {
        let get = |k: &str| {
            value
                .get(k)
                .ok_or_else(|| Error::Archive(format!("missing LM `{k}` in payload")))
        };
        Ok(CodeRecLms {
            prose_word: NgramLm::from_json(get("prose_word")?)?,
            code_word: NgramLm::from_json(get("code_word")?)?,
            prose_char: NgramLm::from_json(get("prose_char")?)?,
            code_char: NgramLm::from_json(get("code_char")?)?,
        })
    }
}

/// Concatenation of the four Gaussian-binned LM features; `4k` wide, each
/// k-block L1-normalized.
pub fn featurize(token: &str, lms: &CodeRecLms, binners: &[GaussianBinner; 4]) -> Result<Vec<f64>> {
    let raw = lms.raw_features(token)?;
    let mut out = Vec::with_capacity(4 * binners[0].k());
    for (x, binner) in raw.iter().zip(binners.iter()) {
        out.extend(binner.bin(*x)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodeRecConfig {
    pub k_bins: usize,
    pub lin_dim: usize,
    pub hidden: usize,
    /// Width of the code-recognizer vector fed to the tagger.
    pub d_cr: usize,
    pub use_word_lm: bool,
    pub use_char_lm: bool,
    pub use_subword: bool,
    pub subword: SubwordConfig,
    pub train: TrainConfig,
}

impl Default for CodeRecConfig {
    fn default() -> Self {
        CodeRecConfig {
            k_bins: 10,
            lin_dim: 32,
            hidden: 64,
            d_cr: 100,
            use_word_lm: true,
            use_char_lm: true,
            use_subword: true,
            subword: SubwordConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl CodeRecConfig {
    /// Width of the binned input actually consumed, given the ablation flags.
    pub fn feature_dim(&self) -> usize {
        let blocks = 2 * usize::from(self.use_word_lm) + 2 * usize::from(self.use_char_lm);
        blocks * self.k_bins
    }
}

pub struct CodeRecModel {
    pub config: CodeRecConfig,
    pub store: ParamStore,
    pub binners: [GaussianBinner; 4],
    pub lms: CodeRecLms,
    lin: Dense,
    hidden: Dense,
    out: Dense,
    subword: Option<SubwordEmbedder>,
    output_table: BinaryEmbedding,
    pub provenance: Provenance,
}

impl CodeRecModel {
    /// Deterministic construction from config and seed; loading an archive
    /// rebuilds with the same seed and then overwrites all values.
    pub fn build(
        config: CodeRecConfig,
        lms: CodeRecLms,
        binners: [GaussianBinner; 4],
        seed: u64,
    ) -> Result<CodeRecModel> {
        let mut rng = seeded_rng(seed);
        let mut store = ParamStore::new();
        let lin = Dense::new(&mut store, &mut rng, "coderec.lin", config.feature_dim(), config.lin_dim);
        let subword = if config.use_subword {
            Some(SubwordEmbedder::new(
                &mut store,
                &mut rng,
                "coderec.subword",
                config.subword.clone(),
            ))
        } else {
            None
        };
        let hidden_in = config.lin_dim + if config.use_subword { config.subword.dim } else { 0 };
        let hidden = Dense::new(&mut store, &mut rng, "coderec.hidden", hidden_in, config.hidden);
        let out = Dense::new(&mut store, &mut rng, "coderec.out", config.hidden, 1);
        let output_table = BinaryEmbedding::new(&mut store, &mut rng, "coderec.table", config.d_cr);
        Ok(CodeRecModel {
            config,
            store,
            binners,
            lms,
            lin,
            hidden,
            out,
            subword,
            output_table,
            provenance: Provenance {
                seed,
                ..Provenance::default()
            },
        })
    }

    /// Feature vector restricted to the enabled blocks.
    fn enabled_features(&self, token: &str) -> Result<Vec<f64>> {
        let full = featurize(token, &self.lms, &self.binners)?;
        let k = self.config.k_bins;
        let mut out = Vec::with_capacity(self.config.feature_dim());
        if self.config.use_word_lm {
            out.extend_from_slice(&full[0..2 * k]);
        }
        if self.config.use_char_lm {
            out.extend_from_slice(&full[2 * k..4 * k]);
        }
        Ok(out)
    }

    fn logit(&self, tape: &mut Tape, store: &ParamStore, token: &str) -> Result<crate::neural::NodeId> {
        let feats = self.enabled_features(token)?;
        let f = tape.constant(Matrix::from_vec(feats.len(), 1, feats));
        let lin = self.lin.forward(tape, store, f);
        let joined = match &self.subword {
            Some(sw) => {
                let sv = sw.embed(tape, store, token);
                tape.concat_rows(&[lin, sv])
            }
            None => lin,
        };
        let h_pre = self.hidden.forward(tape, store, joined);
        let h = tape.tanh(h_pre);
        Ok(self.out.forward(tape, store, h))
    }

    /// Probability that the token is a code token.
    pub fn score(&self, token: &str) -> Result<f64> {
        let mut tape = Tape::new();
        let logit = self.logit(&mut tape, &self.store, token)?;
        Ok(crate::neural::tensor::sigmoid(tape.scalar(logit)))
    }

    /// CODE iff score strictly exceeds 0.5.
    pub fn decide(&self, token: &str) -> Result<bool> {
        Ok(self.score(token)? > 0.5)
    }

    /// The code-recognizer vector: the embedding-table row picked by the
    /// binary decision.
    pub fn vector(&self, token: &str) -> Result<Vec<f64>> {
        let decision = self.decide(token)?;
        Ok(self.output_table.lookup_value(&self.store, decision))
    }

    pub fn output_table_rows(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.output_table.lookup_value(&self.store, false),
            self.output_table.lookup_value(&self.store, true),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let payload = CodeRecPayload {
            config: self.config.clone(),
            binners: self.binners.to_vec(),
            lms: self.lms.to_json(),
            params: export_params(&self.store)?,
            provenance: self.provenance.clone(),
        };
        crate::archive::save(path, ARCHIVE_KIND, &payload)
    }

    pub fn load(path: &Path) -> Result<CodeRecModel> {
        let payload: CodeRecPayload = crate::archive::load(path, ARCHIVE_KIND)?;
        let lms = CodeRecLms::from_json(&payload.lms)?;
        let binners: [GaussianBinner; 4] = payload
            .binners
            .try_into()
            .map_err(|_| Error::Archive("expected exactly 4 binners".into()))?;
        let mut model = CodeRecModel::build(payload.config, lms, binners, payload.provenance.seed)?;
        model.store.import(&payload.params)?;
        model.provenance = payload.provenance;
        Ok(model)
    }
}

pub const ARCHIVE_KIND: &str = "coderec";

#[derive(Serialize, Deserialize)]
struct CodeRecPayload {
    config: CodeRecConfig,
    binners: Vec<GaussianBinner>,
    lms: serde_json::Value,
    params: BTreeMap<String, Matrix>,
    provenance: Provenance,
}

/// Precision/recall/F1 for the CODE class.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn prf(pairs: &[(bool, bool)]) -> Prf {
    let tp = pairs.iter().filter(|(g, p)| *g && *p).count() as f64;
    let fp = pairs.iter().filter(|(g, p)| !*g && *p).count() as f64;
    let fnn = pairs.iter().filter(|(g, p)| *g && !*p).count() as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CodeRecReport {
    pub train: Prf,
    pub test: Prf,
    pub loss_trace: Vec<f64>,
}

/// Train on a lexicon (AMBIGUOUS already merged away by this function).
pub fn train_coderec(
    train: &[LexiconEntry],
    test: &[LexiconEntry],
    lms: CodeRecLms,
    config: CodeRecConfig,
    seed: u64,
) -> Result<(CodeRecModel, CodeRecReport)> {
    let train_pairs = merge_ambiguous(train);
    let test_pairs = merge_ambiguous(test);
    if train_pairs.is_empty() {
        return Err(Error::Train("empty training lexicon".into()));
    }
    let n_code = train_pairs.iter().filter(|(_, c)| *c).count();
    if n_code == 0 || n_code == train_pairs.len() {
        return Err(Error::Train(
            "training lexicon has a single class after merging".into(),
        ));
    }

    // Fit one binner per LM feature on the training lexicon's feature values.
    let mut columns: [Vec<f64>; 4] = Default::default();
    for (token, _) in &train_pairs {
        let raw = lms.raw_features(token)?;
        for (col, x) in columns.iter_mut().zip(raw) {
            col.push(x);
        }
    }
    let binners: [GaussianBinner; 4] = [
        fit_binner(&columns[0], config.k_bins)?,
        fit_binner(&columns[1], config.k_bins)?,
        fit_binner(&columns[2], config.k_bins)?,
        fit_binner(&columns[3], config.k_bins)?,
    ];

    let mut model = CodeRecModel::build(config, lms, binners, seed)?;
    let train_cfg = model.config.train.clone();
    // The training loop owns the store; the model lends its layer handles.
    let mut store = std::mem::take(&mut model.store);
    let loss_trace = crate::neural::run_epochs(
        &mut store,
        &train_pairs,
        &train_cfg,
        |tape, store, (token, is_code)| {
            let logit = model.logit(tape, store, token)?;
            Ok(tape.bce_with_logit(logit, f64::from(*is_code)))
        },
        |_, _| {},
    )?;
    model.store = store;

    let eval = |model: &CodeRecModel, pairs: &[(String, bool)]| -> Result<Prf> {
        let mut out = Vec::with_capacity(pairs.len());
        for (token, gold) in pairs {
            out.push((*gold, model.decide(token)?));
        }
        Ok(prf(&out))
    };
    let report = CodeRecReport {
        train: eval(&model, &train_pairs)?,
        test: eval(&model, &test_pairs)?,
        loss_trace,
    };
    Ok((model, report))
}

/// Ablation axis of the recognizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CodeRecAblation {
    Full,
    DropCharLm,
    DropWordLm,
    DropSubword,
}

impl CodeRecAblation {
    pub fn apply(self, mut config: CodeRecConfig) -> CodeRecConfig {
        match self {
            CodeRecAblation::Full => {}
            CodeRecAblation::DropCharLm => config.use_char_lm = false,
            CodeRecAblation::DropWordLm => config.use_word_lm = false,
            CodeRecAblation::DropSubword => config.use_subword = false,
        }
        config
    }

    pub fn label(self) -> &'static str {
        match self {
            CodeRecAblation::Full => "full",
            CodeRecAblation::DropCharLm => "-char-lm",
            CodeRecAblation::DropWordLm => "-word-lm",
            CodeRecAblation::DropSubword => "-subword",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub test: Prf,
}

/// Train the full model plus each single-feature drop and report test rows.
pub fn ablate_coderec(
    train: &[LexiconEntry],
    test: &[LexiconEntry],
    build_lms: impl Fn() -> Result<CodeRecLms>,
    config: &CodeRecConfig,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for variant in [
        CodeRecAblation::Full,
        CodeRecAblation::DropCharLm,
        CodeRecAblation::DropWordLm,
        CodeRecAblation::DropSubword,
    ] {
        let cfg = variant.apply(config.clone());
        let (_, report) = train_coderec(train, test, build_lms()?, cfg, seed)?;
        rows.push(AblationRow {
            variant: variant.label().to_string(),
            test: report.test,
        });
    }
    Ok(rows)
}
