//! Corpus data model, CoNLL-style ingestion with BIO repair, corpus
//! statistics, and token-level annotation agreement.
//!
//! File format: `token TAB label`, with an optional third column `1`/`0` for
//! the markdown flag. Blank lines separate sentences; lines starting with
//! `# key=value` carry post metadata (`post_id`, `post_kind`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tokenizer::Token;
use crate::{Error, Result};

pub const CODE_TYPES: [&str; 8] = [
    "Class",
    "Variable",
    "In_Line_Code",
    "Function",
    "Library",
    "Value",
    "Data_Type",
    "HTML_XML_Tag",
];

pub const NL_TYPES: [&str; 12] = [
    "Application",
    "UI_Element",
    "Language",
    "Data_Structure",
    "Algorithm",
    "File_Type",
    "File_Name",
    "Version",
    "Device",
    "OS",
    "Website",
    "User_Name",
];

/// The 20-type entity inventory and its 41-label BIO space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySchema {
    types: Vec<String>,
}

impl EntitySchema {
    pub fn standard() -> Self {
        EntitySchema {
            types: CODE_TYPES
                .iter()
                .chain(NL_TYPES.iter())
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn is_code_type(&self, ty: &str) -> bool {
        CODE_TYPES.contains(&ty)
    }

    /// Label inventory: `O` first, then `B-t`, `I-t` per type in order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(1 + 2 * self.types.len());
        labels.push("O".to_string());
        for t in &self.types {
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        if label == "O" {
            return Some(0);
        }
        let (prefix, ty) = label.split_once('-')?;
        let k = self.types.iter().position(|t| t == ty)?;
        match prefix {
            "B" => Some(1 + 2 * k),
            "I" => Some(2 + 2 * k),
            _ => None,
        }
    }

    pub fn label_count(&self) -> usize {
        1 + 2 * self.types.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostKind {
    Question,
    Answer,
}

/// One sentence with gold labels and post provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<Token>,
    pub labels: Vec<String>,
    pub post_id: String,
    pub post_kind: PostKind,
    /// Stable id used to key sidecar embeddings: `<post_id>#<n>`.
    pub sent_id: String,
}

impl AnnotatedSentence {
    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }
}

/// A loaded corpus plus any repair warnings emitted while reading.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub sentences: Vec<AnnotatedSentence>,
    pub warnings: Vec<String>,
    /// Whether the source file carried the markdown column.
    pub has_markdown: bool,
}

pub fn read_conll(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)?;
    read_conll_str(&path.display().to_string(), &text)
}

pub fn read_conll_str(name: &str, text: &str) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut post_id = String::from("unknown");
    let mut post_kind = PostKind::Question;
    let mut per_post_counter: BTreeMap<String, usize> = BTreeMap::new();
    let mut tokens: Vec<(String, String, bool)> = Vec::new();

    let mut flush = |corpus: &mut Corpus,
                     tokens: &mut Vec<(String, String, bool)>,
                     post_id: &str,
                     post_kind: PostKind,
                     counter: &mut BTreeMap<String, usize>| {
        if tokens.is_empty() {
            return;
        }
        let n = counter.entry(post_id.to_string()).or_insert(0);
        let sent_id = format!("{post_id}#{n}");
        *n += 1;
        let sentence = build_sentence(std::mem::take(tokens), post_id, post_kind, sent_id);
        corpus.sentences.push(sentence);
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            flush(
                &mut corpus,
                &mut tokens,
                &post_id,
                post_kind,
                &mut per_post_counter,
            );
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some((key, value)) = meta.split_once('=') {
                match key.trim() {
                    "post_id" => post_id = value.trim().to_string(),
                    "post_kind" => {
                        post_kind = match value.trim() {
                            "question" => PostKind::Question,
                            "answer" => PostKind::Answer,
                            other => {
                                return Err(Error::parse(
                                    name,
                                    lineno + 1,
                                    format!("unknown post_kind `{other}`"),
                                ))
                            }
                        }
                    }
                    _ => {}
                }
            }
            continue;
        }
        let mut cols = line.split('\t');
        let token = cols
            .next()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::parse(name, lineno + 1, "empty token column"))?;
        let label = cols
            .next()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::parse(name, lineno + 1, "missing label column"))?;
        if !valid_label_shape(label) {
            return Err(Error::parse(
                name,
                lineno + 1,
                format!("malformed label `{label}`"),
            ));
        }
        let markdown = match cols.next() {
            None => false,
            Some("1") => {
                corpus.has_markdown = true;
                true
            }
            Some("0") => {
                corpus.has_markdown = true;
                false
            }
            Some(other) => {
                return Err(Error::parse(
                    name,
                    lineno + 1,
                    format!("markdown column must be 0 or 1, got `{other}`"),
                ))
            }
        };
        if cols.next().is_some() {
            return Err(Error::parse(name, lineno + 1, "too many columns"));
        }
        tokens.push((token.to_string(), label.to_string(), markdown));
    }
    flush(
        &mut corpus,
        &mut tokens,
        &post_id,
        post_kind,
        &mut per_post_counter,
    );

    // Repair illegal BIO transitions: a stray I-t becomes B-t.
    for sentence in &mut corpus.sentences {
        let mut prev: Option<String> = None;
        for (k, label) in sentence.labels.iter_mut().enumerate() {
            if let Some(ty) = label.strip_prefix("I-") {
                let legal = matches!(
                    prev.as_deref(),
                    Some(p) if p == &format!("B-{ty}") || p == &format!("I-{ty}")
                );
                if !legal {
                    corpus.warnings.push(format!(
                        "{}: token {} `{}`: I-{ty} without preceding B-{ty}; repaired to B-{ty}",
                        sentence.sent_id, k, sentence.tokens[k].surface
                    ));
                    *label = format!("B-{ty}");
                }
            }
            prev = Some(label.clone());
        }
    }
    Ok(corpus)
}

fn valid_label_shape(label: &str) -> bool {
    label == "O"
        || label
            .strip_prefix("B-")
            .or_else(|| label.strip_prefix("I-"))
            .map(|t| !t.is_empty())
            .unwrap_or(false)
}

fn build_sentence(
    tokens: Vec<(String, String, bool)>,
    post_id: &str,
    post_kind: PostKind,
    sent_id: String,
) -> AnnotatedSentence {
    // CoNLL files carry no offsets; reconstruct them as if the surfaces were
    // joined by single spaces.
    let mut out_tokens = Vec::with_capacity(tokens.len());
    let mut labels = Vec::with_capacity(tokens.len());
    let mut pos = 0usize;
    for (surface, label, markdown) in tokens {
        let n = surface.chars().count();
        out_tokens.push(Token {
            surface,
            char_start: pos,
            char_end: pos + n,
            in_code_markdown: markdown,
        });
        pos += n + 1;
        labels.push(label);
    }
    AnnotatedSentence {
        tokens: out_tokens,
        labels,
        post_id: post_id.to_string(),
        post_kind,
        sent_id,
    }
}

/// Serialize back to the file format. Emits the markdown column when asked.
pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    let mut last_post: Option<(&str, PostKind)> = None;
    for s in &corpus.sentences {
        let key = (s.post_id.as_str(), s.post_kind);
        if last_post != Some(key) {
            let kind = match s.post_kind {
                PostKind::Question => "question",
                PostKind::Answer => "answer",
            };
            let _ = writeln!(out, "# post_id={}", s.post_id);
            let _ = writeln!(out, "# post_kind={kind}");
            last_post = Some(key);
        }
        for (tok, label) in s.tokens.iter().zip(&s.labels) {
            if corpus.has_markdown {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    tok.surface,
                    label,
                    u8::from(tok.in_code_markdown)
                );
            } else {
                let _ = writeln!(out, "{}\t{}", tok.surface, label);
            }
        }
        out.push('\n');
    }
    out
}

/// Counts for one split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub n_questions: usize,
    pub n_answers: usize,
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub n_entities: usize,
}

impl SplitStats {
    pub fn add(&mut self, other: &SplitStats) {
        self.n_questions += other.n_questions;
        self.n_answers += other.n_answers;
        self.n_sentences += other.n_sentences;
        self.n_tokens += other.n_tokens;
        self.n_entities += other.n_entities;
    }
}

/// Entities are maximal B/I runs; after BIO repair this equals the B count.
pub fn count_entities(labels: &[String]) -> usize {
    labels.iter().filter(|l| l.starts_with("B-")).count()
}

pub fn compute_stats(corpus: &Corpus) -> SplitStats {
    let mut stats = SplitStats::default();
    let mut seen_questions = std::collections::BTreeSet::new();
    let mut seen_answers = std::collections::BTreeSet::new();
    for s in &corpus.sentences {
        stats.n_sentences += 1;
        stats.n_tokens += s.tokens.len();
        stats.n_entities += count_entities(&s.labels);
        match s.post_kind {
            PostKind::Question => {
                seen_questions.insert(s.post_id.clone());
            }
            PostKind::Answer => {
                seen_answers.insert(s.post_id.clone());
            }
        }
    }
    stats.n_questions = seen_questions.len();
    stats.n_answers = seen_answers.len();
    stats
}

/// Token-level Cohen's kappa between two aligned label sequences.
///
/// kappa = (p_o - p_e) / (1 - p_e), with chance agreement from the two
/// marginal label distributions. Returns 1.0 when p_e = 1 (both annotators
/// constant and identical).
pub fn cohen_kappa(labels_a: &[String], labels_b: &[String]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Dim(format!(
            "kappa needs aligned sequences, got {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::Invalid("kappa over empty sequences".into()));
    }
    let n = labels_a.len() as f64;
    let mut marg_a: BTreeMap<&str, f64> = BTreeMap::new();
    let mut marg_b: BTreeMap<&str, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (a, b) in labels_a.iter().zip(labels_b) {
        *marg_a.entry(a).or_default() += 1.0;
        *marg_b.entry(b).or_default() += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let mut p_e = 0.0;
    for (label, ca) in &marg_a {
        if let Some(cb) = marg_b.get(label) {
            p_e += (ca / n) * (cb / n);
        }
    }
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
