//! Rule-based tokenizer for social programming text.
//!
//! Splits on Unicode whitespace, then scans each chunk left to right. At each
//! position the protected-pattern rules are tried in order and the first
//! match wins; otherwise a maximal alphanumeric run or a single punctuation
//! character is emitted. Software-related tokens such as `txScope.Complete()`,
//! `std::condition_variable`, `math.h`, `<span>` and `a==b` therefore survive
//! as single tokens while ordinary prose punctuation is split off.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default protected-pattern inventory, shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("rules_v1.txt");

/// A post: extracted text plus character ranges known to sit inside
/// `<code>` markdown tags.
#[derive(Clone, Debug, Default)]
pub struct RawPost {
    pub text: String,
    /// Half-open `(start, end)` character ranges; must be ordered,
    /// non-overlapping, and within bounds.
    pub markdown_spans: Vec<(usize, usize)>,
}

/// One token with its character span in the source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
    pub in_code_markdown: bool,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let n = surface.chars().count();
        Token {
            surface,
            char_start: 0,
            char_end: n,
            in_code_markdown: false,
        }
    }
}

struct Rule {
    name: String,
    re: Regex,
}

/// Tokenizer with an ordered, versioned protected-pattern rule list.
pub struct Tokenizer {
    rules: Vec<Rule>,
    version: String,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::from_rules_text(DEFAULT_RULES).expect("bundled rules must parse")
    }
}

impl Tokenizer {
    /// Parse a rule file: `name TAB regex` lines, `#` comments, and a
    /// `version TAB n` line.
    pub fn from_rules_text(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut version = String::from("unversioned");
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, pat) = line.split_once('\t').ok_or_else(|| {
                Error::parse("rules", lineno + 1, "expected `name<TAB>pattern`")
            })?;
            if name == "version" {
                version = pat.trim().to_string();
                continue;
            }
            let re = Regex::new(&format!("^(?:{pat})")).map_err(|e| {
                Error::parse("rules", lineno + 1, format!("bad regex for {name}: {e}"))
            })?;
            rules.push(Rule {
                name: name.to_string(),
                re,
            });
        }
        Ok(Tokenizer { rules, version })
    }

    pub fn from_rules_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Tokenizer::from_rules_text(&text)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn rule_names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name.as_str()).collect()
    }

    /// Tokenize plain text. Total: empty input gives an empty list and every
    /// non-whitespace character lands in exactly one token.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        let mut char_pos = 0usize;
        let mut byte_pos = 0usize;
        let bytes_len = text.len();
        while byte_pos < bytes_len {
            let rest = &text[byte_pos..];
            let c = rest.chars().next().unwrap();
            if c.is_whitespace() {
                byte_pos += c.len_utf8();
                char_pos += 1;
                continue;
            }
            // Chunk = run up to the next whitespace; rules never cross it.
            let chunk_bytes = rest
                .char_indices()
                .find(|(_, c)| c.is_whitespace())
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            let chunk = &rest[..chunk_bytes];
            let mut offset = 0usize;
            while offset < chunk.len() {
                let tail = &chunk[offset..];
                let matched = self
                    .rules
                    .iter()
                    .find_map(|r| r.re.find(tail).map(|m| m.as_str()))
                    .filter(|m| !m.is_empty());
                let surface = match matched {
                    Some(m) => m,
                    None => {
                        let first = tail.chars().next().unwrap();
                        if is_word_char(first) {
                            let end = tail
                                .char_indices()
                                .find(|(_, c)| !is_word_char(*c))
                                .map(|(i, _)| i)
                                .unwrap_or(tail.len());
                            &tail[..end]
                        } else {
                            &tail[..first.len_utf8()]
                        }
                    }
                };
                let n_chars = surface.chars().count();
                tokens.push(Token {
                    surface: surface.to_string(),
                    char_start: char_pos,
                    char_end: char_pos + n_chars,
                    in_code_markdown: false,
                });
                char_pos += n_chars;
                offset += surface.len();
            }
            byte_pos += chunk_bytes;
        }
        tokens
    }

    /// Tokenize a post and flag tokens that overlap its markdown spans.
    pub fn tokenize_post(&self, post: &RawPost) -> Result<Vec<Token>> {
        validate_spans(&post.markdown_spans, post.text.chars().count())?;
        let mut tokens = self.tokenize(&post.text);
        mark_markdown(&mut tokens, &post.markdown_spans);
        Ok(tokens)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn validate_spans(spans: &[(usize, usize)], text_chars: usize) -> Result<()> {
    let mut prev_end = 0usize;
    for &(start, end) in spans {
        if start >= end || end > text_chars || start < prev_end {
            return Err(Error::Invalid(format!(
                "markdown span ({start},{end}) is out of order or out of bounds"
            )));
        }
        prev_end = end;
    }
    Ok(())
}

/// Set `in_code_markdown` for every token whose character range overlaps any
/// span. Partial overlap flags the whole token.
pub fn mark_markdown(tokens: &mut [Token], spans: &[(usize, usize)]) {
    for tok in tokens.iter_mut() {
        tok.in_code_markdown = spans
            .iter()
            .any(|&(s, e)| s < tok.char_end && tok.char_start < e);
    }
}

/// Concatenated token surfaces must equal the input minus its whitespace.
pub fn coverage_holds(text: &str, tokens: &[Token]) -> bool {
    let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let joined: String = tokens.iter().map(|t| t.surface.as_str()).collect();
    stripped == joined
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn golden_protected_tokens_stay_whole() {
        let tk = Tokenizer::default();
        for text in [
            "txScope.Complete()",
            "std::condition_variable",
            "math.h",
            "<span>",
            "a==b",
        ] {
            let toks = tk.tokenize(text);
            assert_eq!(surfaces(&toks), vec![text], "splitting {text}");
        }
    }

    #[test]
    fn prose_punctuation_splits() {
        let tk = Tokenizer::default();
        let toks = tk.tokenize("Hello, world.");
        assert_eq!(surfaces(&toks), vec!["Hello", ",", "world", "."]);
    }

    #[test]
    fn empty_text_yields_empty_list() {
        let tk = Tokenizer::default();
        assert!(tk.tokenize("").is_empty());
        assert!(tk.tokenize("   \u{a0}\t\n").is_empty());
    }

    #[test]
    fn nbsp_is_a_separator() {
        let tk = Tokenizer::default();
        let toks = tk.tokenize("foo\u{a0}bar");
        assert_eq!(surfaces(&toks), vec!["foo", "bar"]);
    }

    #[test]
    fn urls_emoticons_versions_paths() {
        let tk = Tokenizer::default();
        assert_eq!(
            surfaces(&tk.tokenize("see https://example.com/a?b=c now")),
            vec!["see", "https://example.com/a?b=c", "now"]
        );
        assert_eq!(surfaces(&tk.tokenize("great :-) <3")), vec!["great", ":-)", "<3"]);
        assert_eq!(
            surfaces(&tk.tokenize("upgrade to 3.5.1 today")),
            vec!["upgrade", "to", "3.5.1", "today"]
        );
        assert_eq!(
            surfaces(&tk.tokenize("edit /etc/hosts file")),
            vec!["edit", "/etc/hosts", "file"]
        );
        assert_eq!(
            surfaces(&tk.tokenize("it's a well-known trick")),
            vec!["it's", "a", "well-known", "trick"]
        );
    }

    #[test]
    fn char_offsets_reconstruct_surfaces() {
        let tk = Tokenizer::default();
        let text = "a==b  Hello, \u{a0}math.h\u{30c6}";
        let chars: Vec<char> = text.chars().collect();
        for tok in tk.tokenize(text) {
            let sub: String = chars[tok.char_start..tok.char_end].iter().collect();
            assert_eq!(sub, tok.surface);
            assert!(tok.char_start < tok.char_end);
            assert!(!tok.surface.chars().any(char::is_whitespace));
        }
    }

    #[test]
    fn markdown_overlap_flags_whole_token() {
        let tk = Tokenizer::default();
        let post = RawPost {
            text: "list is".into(),
            markdown_spans: vec![(0, 4)],
        };
        let toks = tk.tokenize_post(&post).unwrap();
        assert!(toks[0].in_code_markdown);
        assert!(!toks[1].in_code_markdown);

        // Half-covered token still gets flagged.
        let post = RawPost {
            text: "listing".into(),
            markdown_spans: vec![(0, 3)],
        };
        let toks = tk.tokenize_post(&post).unwrap();
        assert!(toks[0].in_code_markdown);

        // No spans: all flags false.
        let post = RawPost {
            text: "plain words".into(),
            markdown_spans: vec![],
        };
        assert!(tk
            .tokenize_post(&post)
            .unwrap()
            .iter()
            .all(|t| !t.in_code_markdown));
    }

    #[test]
    fn bad_spans_rejected() {
        let tk = Tokenizer::default();
        for spans in [vec![(3, 2)], vec![(0, 99)], vec![(2, 4), (3, 5)]] {
            let post = RawPost {
                text: "abcdef".into(),
                markdown_spans: spans,
            };
            assert!(tk.tokenize_post(&post).is_err());
        }
    }

    #[test]
    fn idempotent_on_produced_tokens() {
        let tk = Tokenizer::default();
        let text = "Use txScope.Complete() or std::abs(x), v1.2.3, <div>, don't :-) a/b {x}!";
        for tok in tk.tokenize(text) {
            let again = tk.tokenize(&tok.surface);
            assert_eq!(
                surfaces(&again),
                vec![tok.surface.as_str()],
                "token {} is not idempotent",
                tok.surface
            );
        }
    }

    #[test]
    fn rules_file_roundtrip_and_version() {
        let tk = Tokenizer::default();
        assert_eq!(tk.version(), "1");
        assert!(tk.rule_names().contains(&"member_chain"));
        let custom = "version\t9\nsemicolon_pair\t;;\n";
        let tk2 = Tokenizer::from_rules_text(custom).unwrap();
        assert_eq!(tk2.version(), "9");
        assert_eq!(surfaces(&tk2.tokenize("a;;b")), vec!["a", ";;", "b"]);
    }

    proptest::proptest! {
        #[test]
        fn coverage_and_determinism(text in "[ -~\u{a0}\u{30c6}\u{4e2d}]{0,60}") {
            let tk = Tokenizer::default();
            let toks = tk.tokenize(&text);
            proptest::prop_assert!(coverage_holds(&text, &toks));
            let again = tk.tokenize(&text);
            proptest::prop_assert_eq!(toks, again);
        }
    }
}
