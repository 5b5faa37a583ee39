//! Scalar-to-vector Gaussian binning, word-frequency and markdown features,
//! hashed subword embeddings, and the pluggable per-token word-representation
//! providers used by the sequence models.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::neural::layers::fnv1a;
use crate::neural::{BiLstm, CharCnn, NodeId, ParamId, ParamStore, Tape};
use crate::{Error, Result};

/// Radial-basis binning of a scalar into k L1-normalized responses.
///
/// Centers are evenly spaced over the fitted range and sigma is half the bin
/// width: sigma = (max-min) / (2(k-1)) for k > 1, else 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBinner {
    centers: Vec<f64>,
    sigma: f64,
    min: f64,
    max: f64,
}

pub fn fit_binner(values: &[f64], k: usize) -> Result<GaussianBinner> {
    if values.is_empty() {
        return Err(Error::Invalid("fit_binner over empty values".into()));
    }
    if k < 1 {
        return Err(Error::Config("binner needs k >= 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite value in fit_binner".into()));
    }
    let mut min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        // Degenerate sample: widen to a unit range around the point so the
        // centers stay strictly increasing and sigma stays positive.
        min -= 0.5;
        max += 0.5;
    }
    let (centers, sigma) = if k == 1 {
        (vec![(min + max) / 2.0], 1.0)
    } else {
        let step = (max - min) / (k - 1) as f64;
        (
            (0..k).map(|j| min + step * j as f64).collect(),
            (max - min) / (2.0 * (k - 1) as f64),
        )
    };
    Ok(GaussianBinner {
        centers,
        sigma,
        min,
        max,
    })
}

impl GaussianBinner {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Component j = exp(-(x-mu_j)^2 / (2 sigma^2)), L1-normalized. Computed
    /// through a max shift so far-out x still yields a probability vector.
    pub fn bin(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(Error::Invalid(format!("bin() of non-finite value {x}")));
        }
        let logs: Vec<f64> = self
            .centers
            .iter()
            .map(|&c| -((x - c) * (x - c)) / (2.0 * self.sigma * self.sigma))
            .collect();
        Ok(crate::neural::tensor::softmax(&logs))
    }
}

/// Token frequencies from a training split, binned in log(1+freq) space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencyFeature {
    counts: BTreeMap<String, u64>,
    binner: GaussianBinner,
}

impl FrequencyFeature {
    /// Count surface frequencies over the training split and fit the binner
    /// on log(1+freq) of the distinct training tokens.
    pub fn fit(train: &[AnnotatedSentence], k: usize) -> Result<FrequencyFeature> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for s in train {
            for t in &s.tokens {
                *counts.entry(t.surface.clone()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Invalid("frequency table from empty corpus".into()));
        }
        let values: Vec<f64> = counts.values().map(|&c| (1.0 + c as f64).ln()).collect();
        let binner = fit_binner(&values, k)?;
        Ok(FrequencyFeature { counts, binner })
    }

    pub fn raw(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn feature(&self, token: &str) -> Vec<f64> {
        let x = (1.0 + self.raw(token) as f64).ln();
        self.binner.bin(x).expect("log1p of a count is finite")
    }

    pub fn k(&self) -> usize {
        self.binner.k()
    }
}

/// Hashed character n-gram (3..6) embedder in the FastText style: a word
/// vector is the sum of its n-gram vectors plus a whole-word vector, with
/// deterministic FNV-1a hashing into fixed bucket tables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubwordConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
    pub dim: usize,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig {
            min_n: 3,
            max_n: 6,
            buckets: 1 << 16,
            dim: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubwordEmbedder {
    pub cfg: SubwordConfig,
    pub ngram_table: ParamId,
    pub word_table: ParamId,
}

impl SubwordEmbedder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        cfg: SubwordConfig,
    ) -> Self {
        let ngram_table =
            store.add_xavier(rng, &format!("{prefix}.ngrams"), cfg.buckets, cfg.dim);
        let word_table = store.add_xavier(rng, &format!("{prefix}.words"), cfg.buckets, cfg.dim);
        SubwordEmbedder {
            cfg,
            ngram_table,
            word_table,
        }
    }

    /// Bucket ids of all character n-grams of `<token>` in the 3..6 range.
    pub fn ngram_ids(&self, token: &str) -> Vec<usize> {
        let chars: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut ids = Vec::new();
        for n in self.cfg.min_n..=self.cfg.max_n {
            if chars.len() < n {
                break;
            }
            for w in chars.windows(n) {
                let s: String = w.iter().collect();
                ids.push((fnv1a(s.as_bytes()) as usize) % self.cfg.buckets);
            }
        }
        ids
    }

    pub fn word_id(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) as usize) % self.cfg.buckets
    }

    /// Tape-side embedding: sum of n-gram rows plus the whole-word row.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, token: &str) -> NodeId {
        let word = tape.param_rows(store, self.word_table, &[self.word_id(token)]);
        let ngrams = self.ngram_ids(token);
        let v = if ngrams.is_empty() {
            word
        } else {
            let g = tape.param_rows(store, self.ngram_table, &ngrams);
            let summed = tape.sum_rows(g);
            tape.add(summed, word)
        };
        tape.reshape(v, self.cfg.dim, 1)
    }

    /// Plain (non-tape) embedding; bit-identical to the tape path, so the
    /// n-gram rows accumulate first and the word row is added last.
    pub fn embed_value(&self, store: &ParamStore, token: &str) -> Vec<f64> {
        let ngram_table = store.value(self.ngram_table);
        let mut out = vec![0.0; self.cfg.dim];
        for id in self.ngram_ids(token) {
            for (o, &x) in out.iter_mut().zip(ngram_table.row(id)) {
                *o += x;
            }
        }
        for (o, &x) in out
            .iter_mut()
            .zip(store.value(self.word_table).row(self.word_id(token)))
        {
            *o += x;
        }
        out
    }
}

/// Two-row learned table for a binary flag (markdown, code decision,
/// segment decision). Row 0 is the "off" row.
#[derive(Clone, Debug)]
pub struct BinaryEmbedding {
    pub table: ParamId,
    pub dim: usize,
}

impl BinaryEmbedding {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize) -> Self {
        let table = store.add_xavier(rng, name, 2, dim);
        BinaryEmbedding { table, dim }
    }

    pub fn lookup(&self, tape: &mut Tape, store: &ParamStore, flag: bool) -> NodeId {
        let row = tape.param_rows(store, self.table, &[usize::from(flag)]);
        tape.reshape(row, self.dim, 1)
    }

    pub fn lookup_value(&self, store: &ParamStore, flag: bool) -> Vec<f64> {
        store.value(self.table).row(usize::from(flag)).to_vec()
    }
}

/// Configuration of a word-representation provider.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderConfig {
    /// Context-independent vectors from a text file; OOV maps to zeros.
    StaticFile { path: String, dim: usize },
    /// Frozen per-sentence vectors keyed by sentence id.
    ContextualSidecar { path: String, dim: usize },
    /// Char-CNN + hashed word embedding + sentence BiLSTM, trained with the
    /// downstream model.
    TrainableEncoder {
        dim: usize,
        char_buckets: usize,
        char_dim: usize,
        filters: usize,
        word_buckets: usize,
        word_dim: usize,
    },
}

impl ProviderConfig {
    pub fn trainable_default(dim: usize) -> Self {
        ProviderConfig::TrainableEncoder {
            dim,
            char_buckets: 512,
            char_dim: 16,
            filters: 30,
            word_buckets: 4096,
            word_dim: 32,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProviderConfig::StaticFile { dim, .. } => *dim,
            ProviderConfig::ContextualSidecar { dim, .. } => *dim,
            ProviderConfig::TrainableEncoder { dim, .. } => *dim,
        }
    }
}

/// Context-independent embeddings loaded from `word v1 .. vd` lines.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StaticEmbeddings {
    pub dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl StaticEmbeddings {
    pub fn read(path: &Path, dim: usize) -> Result<StaticEmbeddings> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text, dim)
    }

    pub fn parse(name: &str, text: &str, dim: usize) -> Result<StaticEmbeddings> {
        let mut vectors = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap().to_string();
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        Error::parse(name, lineno + 1, format!("bad float `{p}`"))
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Dim(format!(
                    "{name}:{}: vector for `{word}` has {} dims, expected {dim}",
                    lineno + 1,
                    values.len()
                )));
            }
            vectors.insert(word, values);
        }
        Ok(StaticEmbeddings { dim, vectors })
    }

    /// OOV convention: the zero vector.
    pub fn get(&self, token: &str) -> Vec<f64> {
        self.vectors
            .get(token)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }
}

/// Per-sentence stored vectors: `# sent=<id>` header, one line of d floats
/// per token.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SidecarEmbeddings {
    pub dim: usize,
    sentences: BTreeMap<String, Vec<Vec<f64>>>,
}

impl SidecarEmbeddings {
    pub fn new(dim: usize) -> Self {
        SidecarEmbeddings {
            dim,
            sentences: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, sent_id: &str, vectors: Vec<Vec<f64>>) {
        self.sentences.insert(sent_id.to_string(), vectors);
    }

    pub fn read(path: &Path, dim: usize) -> Result<SidecarEmbeddings> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text, dim)
    }

    pub fn parse(name: &str, text: &str, dim: usize) -> Result<SidecarEmbeddings> {
        let mut out = SidecarEmbeddings::new(dim);
        let mut current: Option<(String, Vec<Vec<f64>>)> = None;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(id) = line.strip_prefix("# sent=") {
                if let Some((id, vecs)) = current.take() {
                    out.sentences.insert(id, vecs);
                }
                current = Some((id.trim().to_string(), Vec::new()));
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (_, vecs) = current.as_mut().ok_or_else(|| {
                Error::parse(name, lineno + 1, "vector line before any `# sent=` header")
            })?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| Error::parse(name, lineno + 1, format!("bad float `{p}`")))
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Dim(format!(
                    "{name}:{}: vector has {} dims, expected {dim}",
                    lineno + 1,
                    values.len()
                )));
            }
            vecs.push(values);
        }
        if let Some((id, vecs)) = current.take() {
            out.sentences.insert(id, vecs);
        }
        Ok(out)
    }

    pub fn write(&self) -> String {
        let mut out = String::new();
        for (id, vecs) in &self.sentences {
            out.push_str(&format!("# sent={id}\n"));
            for v in vecs {
                let line: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn get(&self, sent_id: &str, n_tokens: usize) -> Result<&[Vec<f64>]> {
        let vecs = self.sentences.get(sent_id).ok_or_else(|| {
            Error::Invalid(format!("sidecar has no vectors for sentence `{sent_id}`"))
        })?;
        if vecs.len() != n_tokens {
            return Err(Error::Dim(format!(
                "sidecar sentence `{sent_id}` has {} vectors for {n_tokens} tokens",
                vecs.len()
            )));
        }
        Ok(vecs)
    }
}

/// Trainable char-CNN + word-hash + BiLSTM sentence encoder.
#[derive(Clone, Debug)]
pub struct TrainableEncoder {
    pub dim: usize,
    char_cnn: CharCnn,
    word_table: ParamId,
    word_buckets: usize,
    word_dim: usize,
    bilstm: BiLstm,
}

impl TrainableEncoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dim: usize,
        char_buckets: usize,
        char_dim: usize,
        filters: usize,
        word_buckets: usize,
        word_dim: usize,
    ) -> Result<Self> {
        if dim % 2 != 0 {
            return Err(Error::Config(
                "trainable encoder dim must be even (BiLSTM halves)".into(),
            ));
        }
        let char_cnn = CharCnn::new(
            store,
            rng,
            &format!("{prefix}.char_cnn"),
            char_buckets,
            char_dim,
            filters,
        );
        let word_table =
            store.add_xavier(rng, &format!("{prefix}.word_table"), word_buckets, word_dim);
        let bilstm = BiLstm::new(
            store,
            rng,
            &format!("{prefix}.bilstm"),
            filters + word_dim,
            dim / 2,
        );
        Ok(TrainableEncoder {
            dim,
            char_cnn,
            word_table,
            word_buckets,
            word_dim,
            bilstm,
        })
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        surfaces: &[&str],
    ) -> Result<Vec<NodeId>> {
        let xs: Vec<NodeId> = surfaces
            .iter()
            .map(|tok| {
                let chars = self.char_cnn.encode(tape, store, tok);
                let wid = (fnv1a(tok.as_bytes()) as usize) % self.word_buckets;
                let word = tape.param_rows(store, self.word_table, &[wid]);
                let word = tape.reshape(word, self.word_dim, 1);
                tape.concat_rows(&[chars, word])
            })
            .collect();
        self.bilstm.run(tape, store, &xs)
    }
}

/// A word-representation provider: exactly one d-vector per token.
pub enum EmbeddingProvider {
    Static(StaticEmbeddings),
    Sidecar(SidecarEmbeddings),
    Trainable(TrainableEncoder),
}

impl EmbeddingProvider {
    /// Build from config; trainable params land in `store` under `prefix`.
    pub fn build(
        cfg: &ProviderConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
    ) -> Result<EmbeddingProvider> {
        match cfg {
            ProviderConfig::StaticFile { path, dim } => Ok(EmbeddingProvider::Static(
                StaticEmbeddings::read(Path::new(path), *dim)?,
            )),
            ProviderConfig::ContextualSidecar { path, dim } => Ok(EmbeddingProvider::Sidecar(
                SidecarEmbeddings::read(Path::new(path), *dim)?,
            )),
            ProviderConfig::TrainableEncoder {
                dim,
                char_buckets,
                char_dim,
                filters,
                word_buckets,
                word_dim,
            } => Ok(EmbeddingProvider::Trainable(TrainableEncoder::new(
                store,
                rng,
                prefix,
                *dim,
                *char_buckets,
                *char_dim,
                *filters,
                *word_buckets,
                *word_dim,
            )?)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Static(s) => s.dim,
            EmbeddingProvider::Sidecar(s) => s.dim,
            EmbeddingProvider::Trainable(t) => t.dim,
        }
    }

    /// One node per token of the sentence.
    pub fn embed_sentence(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sent_id: &str,
        surfaces: &[&str],
    ) -> Result<Vec<NodeId>> {
        if surfaces.is_empty() {
            return Err(Error::Invalid("embed_sentence on empty sentence".into()));
        }
        match self {
            EmbeddingProvider::Static(s) => Ok(surfaces
                .iter()
                .map(|tok| tape.colvec(&s.get(tok)))
                .collect()),
            EmbeddingProvider::Sidecar(s) => {
                let vecs = s.get(sent_id, surfaces.len())?;
                Ok(vecs.iter().map(|v| tape.colvec(v)).collect())
            }
            EmbeddingProvider::Trainable(t) => t.encode(tape, store, surfaces),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_conll_str;
    use crate::neural::seeded_rng;

    #[test]
    fn binner_formula_two_points() {
        // values {0, 10}, k=3 -> centers {0, 5, 10}, sigma = 2.5
        let b = fit_binner(&[0.0, 10.0], 3).unwrap();
        assert_eq!(b.centers(), &[0.0, 5.0, 10.0]);
        assert!((b.sigma() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn binner_k1_center_at_midpoint() {
        let b = fit_binner(&[2.0, 8.0], 1).unwrap();
        assert_eq!(b.centers(), &[5.0]);
        assert_eq!(b.sigma(), 1.0);
    }

    #[test]
    fn binner_centers_match_recomputation_on_uniform_sample() {
        let mut rng = seeded_rng(13);
        use rand::Rng;
        let values: Vec<f64> = (0..1000).map(|_| rng.random_range(-3.0..7.0)).collect();
        let k = 10;
        let b = fit_binner(&values, k).unwrap();
        // Independent recomputation of the center formula.
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (j, &c) in b.centers().iter().enumerate() {
            let expect = min + (max - min) / (k - 1) as f64 * j as f64;
            assert!((c - expect).abs() < 1e-12);
        }
        assert!((b.sigma() - (max - min) / (2.0 * 9.0)).abs() < 1e-12);
    }

    #[test]
    fn bin_is_probability_vector_and_peaks_at_center() {
        let b = fit_binner(&[0.0, 10.0], 5).unwrap();
        for &x in &[-1e9, -3.7, 0.0, 2.5, 9.99, 1e9] {
            let v = b.bin(x).unwrap();
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(v.iter().all(|&c| c >= 0.0));
        }
        for (j, &c) in b.centers().to_vec().iter().enumerate() {
            let v = b.bin(c).unwrap();
            let argmax = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, j, "x = mu_j must peak at component j");
        }
        assert!(b.bin(f64::NAN).is_err());
    }

    #[test]
    fn bin_closed_form_cross_check() {
        // centers {0,5,10}, sigma 2.5, x = 2.5: components by closed form.
        let b = fit_binner(&[0.0, 10.0], 3).unwrap();
        let x: f64 = 2.5;
        let raw: Vec<f64> = [0.0, 5.0, 10.0]
            .iter()
            .map(|&c: &f64| (-((x - c) * (x - c)) / (2.0 * 2.5 * 2.5)).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        let got = b.bin(x).unwrap();
        for (g, r) in got.iter().zip(&raw) {
            assert!((g - r / z).abs() < 1e-12);
        }
    }

    #[test]
    fn binner_degenerate_range_stays_valid() {
        let b = fit_binner(&[4.0, 4.0, 4.0], 3).unwrap();
        assert!(b.sigma() > 0.0);
        let v = b.bin(4.0).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    fn toy_corpus() -> Vec<AnnotatedSentence> {
        read_conll_str(
            "t",
            "the\tO\nthe\tO\nthe\tO\nlist\tB-Data_Structure\n\nthe\tO\nvalue\tO\n\n",
        )
        .unwrap()
        .sentences
    }

    #[test]
    fn frequency_feature_unseen_is_log1() {
        let f = FrequencyFeature::fit(&toy_corpus(), 10).unwrap();
        assert_eq!(f.raw("nonesuch"), 0);
        let bins = f.feature("nonesuch");
        assert_eq!(bins.len(), 10);
        // log(1+0) = 0 is the bottom of the fitted range here, so the mass
        // concentrates at the first bin.
        let argmax = bins
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 0);
    }

    #[test]
    fn frequency_feature_most_frequent_tops_out() {
        let f = FrequencyFeature::fit(&toy_corpus(), 10).unwrap();
        assert_eq!(f.raw("the"), 4);
        let bins = f.feature("the");
        let argmax = bins
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 9, "most frequent token peaks in the top bin");
    }

    #[test]
    fn subword_distinguishes_list_from_call() {
        let mut rng = seeded_rng(5);
        let mut store = ParamStore::new();
        let sw = SubwordEmbedder::new(
            &mut store,
            &mut rng,
            "sw",
            SubwordConfig {
                buckets: 1 << 12,
                dim: 8,
                ..SubwordConfig::default()
            },
        );
        let a = sw.embed_value(&store, "list");
        let b = sw.embed_value(&store, "list()");
        assert_ne!(a, b);
        // Hashing is stable: same ids on a rebuilt embedder.
        let mut store2 = ParamStore::new();
        let sw2 = SubwordEmbedder::new(&mut store2, &mut seeded_rng(5), "sw", sw.cfg.clone());
        assert_eq!(sw.ngram_ids("list()"), sw2.ngram_ids("list()"));
        assert_eq!(sw.word_id("map"), sw2.word_id("map"));
    }

    #[test]
    fn subword_tape_matches_value_path() {
        let mut rng = seeded_rng(6);
        let mut store = ParamStore::new();
        let sw = SubwordEmbedder::new(
            &mut store,
            &mut rng,
            "sw",
            SubwordConfig {
                buckets: 256,
                dim: 4,
                ..SubwordConfig::default()
            },
        );
        let mut tape = Tape::new();
        let node = sw.embed(&mut tape, &store, "map()");
        let direct = sw.embed_value(&store, "map()");
        assert_eq!(tape.value(node).data(), direct.as_slice());
    }

    #[test]
    fn binary_embedding_rows_differ_and_reproduce() {
        let build = || {
            let mut rng = seeded_rng(9);
            let mut store = ParamStore::new();
            let be = BinaryEmbedding::new(&mut store, &mut rng, "md", 100);
            (be.lookup_value(&store, false), be.lookup_value(&store, true))
        };
        let (off1, on1) = build();
        let (off2, on2) = build();
        assert_ne!(off1, on1);
        assert_eq!(off1, off2);
        assert_eq!(on1, on2);
    }

    #[test]
    fn static_embeddings_parse_and_oov_zero() {
        let se = StaticEmbeddings::parse("t", "list 0.1 0.2\nmap -1 2\n", 2).unwrap();
        assert_eq!(se.get("list"), vec![0.1, 0.2]);
        assert_eq!(se.get("nonesuch"), vec![0.0, 0.0]);
        assert!(StaticEmbeddings::parse("t", "bad 1 2 3\n", 2).is_err());
    }

    #[test]
    fn sidecar_roundtrip_bit_identical_and_misses_error() {
        let mut sc = SidecarEmbeddings::new(3);
        sc.insert("q1#0", vec![vec![0.1, -0.25, 3.5e-7], vec![1.0, 2.0, 3.0]]);
        let text = sc.write();
        let sc2 = SidecarEmbeddings::parse("t", &text, 3).unwrap();
        assert_eq!(sc2.get("q1#0", 2).unwrap(), sc.get("q1#0", 2).unwrap());
        let err = sc2.get("q9#9", 1).unwrap_err();
        assert!(err.to_string().contains("q9#9"));
        assert!(sc2.get("q1#0", 5).is_err());
    }

    #[test]
    fn provider_contract_one_vector_per_token() {
        let mut rng = seeded_rng(21);
        let mut store = ParamStore::new();
        let provider = EmbeddingProvider::build(
            &ProviderConfig::trainable_default(16),
            &mut store,
            &mut rng,
            "prov",
        )
        .unwrap();
        let mut tape = Tape::new();
        let out = provider
            .embed_sentence(&mut tape, &store, "s0", &["convert", "list()", "now"])
            .unwrap();
        assert_eq!(out.len(), 3);
        for n in out {
            assert_eq!(tape.value(n).shape(), (16, 1));
        }
        assert!(provider
            .embed_sentence(&mut tape, &store, "s0", &[])
            .is_err());
    }
}
