//! Deterministic synthetic data: prose/code text for language models, labeled
//! lexicons for the code recognizer, and small annotated corpora for the
//! sequence models. Everything derives from an explicit seed so tests and
//! benchmark runs are reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::coderec::{LexLabel, LexiconEntry};
use crate::corpus::{AnnotatedSentence, Corpus, PostKind};
use crate::tokenizer::Token;

const SYLLABLES: [&str; 24] = [
    "ba", "co", "da", "fe", "gi", "ho", "ju", "ka", "lo", "mi", "nu", "pe", "qua", "ri", "so",
    "ta", "ve", "wi", "xo", "ya", "zu", "bra", "sten", "dor",
];

/// An English-looking lowercase word of 2-4 syllables.
pub fn prose_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=4);
    (0..n)
        .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
        .collect()
}

/// An identifier-looking stem: letters, underscores, digits.
pub fn code_stem(rng: &mut ChaCha8Rng) -> String {
    let mut s = prose_word(rng);
    match rng.random_range(0..4) {
        0 => s = format!("{s}_{}", prose_word(rng)),
        1 => s = format!("{s}{}", rng.random_range(0..100)),
        2 => {
            // camelCase
            let tail = prose_word(rng);
            let mut chars = tail.chars();
            let head = chars.next().unwrap().to_uppercase().to_string();
            s = format!("{s}{head}{}", chars.as_str());
        }
        _ => {}
    }
    s
}

/// Decorate a stem with code punctuation drawn from `charset` entries such as
/// `"()"`, `"::"`, `"[]"`, `"{}"`, `"=="`, `"."`.
pub fn decorate_code(rng: &mut ChaCha8Rng, stem: &str, charset: &[&str]) -> String {
    match charset[rng.random_range(0..charset.len())] {
        "()" => format!("{stem}()"),
        "::" => format!("std::{stem}"),
        "[]" => format!("{stem}[{}]", rng.random_range(0..10)),
        "{}" => format!("{{{stem}}}"),
        "==" => format!("{stem}==0"),
        "." => format!("{stem}.{}", prose_word(rng)),
        "->" => format!("{stem}->{}", prose_word(rng)),
        other => format!("{stem}{other}"),
    }
}

pub const DEFAULT_CODE_CHARSET: [&str; 4] = ["()", "::", ".", "->"];

/// Whitespace-joined prose text of roughly `n_tokens` words.
pub fn prose_corpus(rng: &mut ChaCha8Rng, n_tokens: usize) -> String {
    (0..n_tokens)
        .map(|_| prose_word(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whitespace-joined code-snippet text over the given punctuation charset.
pub fn code_corpus(rng: &mut ChaCha8Rng, n_tokens: usize, charset: &[&str]) -> String {
    (0..n_tokens)
        .map(|_| {
            let stem = code_stem(rng);
            decorate_code(rng, &stem, charset)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A separable lexicon: a token is CODE iff it carries code punctuation from
/// `charset`. Each group holds one decorated code token (out-of-vocabulary
/// for the word LMs, like real identifiers), one NON_CODE word drawn from the
/// prose vocabulary (in-vocabulary, like common English words), and one fresh
/// out-of-vocabulary NON_CODE word, so neither "is OOV" nor "looks prosey"
/// alone solves the task. A third of the in-vocabulary words are AMBIGUOUS.
/// All tokens are distinct.
pub fn lexicon(
    rng: &mut ChaCha8Rng,
    n_groups: usize,
    charset: &[&str],
    prose_vocab: &[&str],
) -> Vec<LexiconEntry> {
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = Vec::new();
    while entries.len() < n_groups * 3 {
        // Short stems keep the punctuation density of code tokens high.
        let stem: String = (0..rng.random_range(1..=2))
            .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
            .collect();
        let code = decorate_code(rng, &stem, charset);
        let invocab = prose_vocab[rng.random_range(0..prose_vocab.len())].to_string();
        let oov = if rng.random_range(0..2) == 0 {
            format!("{}ing", prose_word(rng))
        } else {
            format!("{}{}", prose_word(rng), prose_word(rng))
        };
        if !seen.insert(code.clone()) || !seen.insert(invocab.clone()) || !seen.insert(oov.clone())
        {
            continue;
        }
        entries.push(LexiconEntry {
            token: code,
            label: LexLabel::Code,
        });
        entries.push(LexiconEntry {
            token: invocab,
            label: if rng.random_range(0..3) == 0 {
                LexLabel::Ambiguous
            } else {
                LexLabel::NonCode
            },
        });
        entries.push(LexiconEntry {
            token: oov,
            label: LexLabel::NonCode,
        });
    }
    entries
}

/// Distinct whitespace-separated words of a text, in first-seen order.
pub fn vocab_of(text: &str) -> Vec<&str> {
    let mut seen = std::collections::BTreeSet::new();
    text.split_whitespace()
        .filter(|w| seen.insert(*w))
        .collect()
}

struct EntityPattern {
    surfaces: Vec<&'static str>,
    ty: &'static str,
    is_code: bool,
}

fn entity_pool() -> Vec<EntityPattern> {
    let e = |surfaces: Vec<&'static str>, ty: &'static str, is_code: bool| EntityPattern {
        surfaces,
        ty,
        is_code,
    };
    vec![
        e(vec!["foo()"], "Function", true),
        e(vec!["init()"], "Function", true),
        e(vec!["connect()"], "Function", true),
        e(vec!["ArrayList"], "Class", true),
        e(vec!["HashMap"], "Class", true),
        e(vec!["StringBuilder"], "Class", true),
        e(vec!["int"], "Data_Type", true),
        e(vec!["float64"], "Data_Type", true),
        e(vec!["my_var"], "Variable", true),
        e(vec!["tmp_x"], "Variable", true),
        e(vec!["numpy"], "Library", true),
        e(vec!["x==y"], "In_Line_Code", true),
        e(vec!["array", "list"], "Data_Structure", false),
        e(vec!["hash", "table"], "Data_Structure", false),
        e(vec!["binary", "tree"], "Data_Structure", false),
        e(vec!["firefox"], "Application", false),
        e(vec!["excel"], "Application", false),
        e(vec!["linux"], "OS", false),
        e(vec!["windows"], "OS", false),
        e(vec!["python"], "Language", false),
        e(vec!["java"], "Language", false),
        e(vec!["quick", "sort"], "Algorithm", false),
    ]
}

const FILLER: [&str; 26] = [
    "i", "want", "to", "convert", "the", "a", "is", "not", "working", "how", "can", "use",
    "when", "this", "error", "tried", "need", "help", "it", "on", "in", "with", "my", "and",
    "but", "now",
];

/// A small annotated corpus with noisy markdown flags: code-entity tokens are
/// flagged often, prose rarely, mirroring how posters actually use the tag.
pub fn tagged_corpus(rng: &mut ChaCha8Rng, n_sentences: usize) -> Corpus {
    let pool = entity_pool();
    let mut sentences = Vec::with_capacity(n_sentences);
    for k in 0..n_sentences {
        let mut surfaces: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut flags: Vec<bool> = Vec::new();
        let mut push_filler = |rng: &mut ChaCha8Rng,
                               surfaces: &mut Vec<String>,
                               labels: &mut Vec<String>,
                               flags: &mut Vec<bool>,
                               lo: usize,
                               hi: usize| {
            for _ in 0..rng.random_range(lo..=hi) {
                surfaces.push(FILLER[rng.random_range(0..FILLER.len())].to_string());
                labels.push("O".to_string());
                flags.push(rng.random_range(0..20) == 0);
            }
        };
        push_filler(rng, &mut surfaces, &mut labels, &mut flags, 1, 3);
        let n_entities = rng.random_range(1..=2);
        for _ in 0..n_entities {
            let ent = &pool[rng.random_range(0..pool.len())];
            for (j, s) in ent.surfaces.iter().enumerate() {
                surfaces.push(s.to_string());
                labels.push(format!("{}{}", if j == 0 { "B-" } else { "I-" }, ent.ty));
                let p = if ent.is_code { 14 } else { 2 };
                flags.push(rng.random_range(0..20) < p);
            }
            push_filler(rng, &mut surfaces, &mut labels, &mut flags, 1, 3);
        }
        let mut pos = 0usize;
        let tokens: Vec<Token> = surfaces
            .iter()
            .zip(&flags)
            .map(|(s, &f)| {
                let n = s.chars().count();
                let t = Token {
                    surface: s.clone(),
                    char_start: pos,
                    char_end: pos + n,
                    in_code_markdown: f,
                };
                pos += n + 1;
                t
            })
            .collect();
        let post_id = format!("synth{}", k / 4);
        sentences.push(AnnotatedSentence {
            sent_id: format!("{post_id}#{}", k % 4),
            tokens,
            labels,
            post_id,
            post_kind: if k % 2 == 0 {
                PostKind::Question
            } else {
                PostKind::Answer
            },
        });
    }
    Corpus {
        sentences,
        warnings: Vec::new(),
        has_markdown: true,
    }
}
