//! Word and character n-gram language models with additive smoothing.
//!
//! Per-order conditional tables are smoothed with additive alpha and linearly
//! interpolated with uniform weights across orders 1..n. Character models pad
//! each token with n-1 begin markers and one end marker; their per-token
//! score is the mean per-character log probability, so token length does not
//! leak into downstream features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LmLevel {
    Word,
    Char,
}

/// How a character model folds per-position log probabilities into one score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CharReduction {
    #[default]
    Mean,
    Sum,
    Min,
}

const UNK: u32 = 0;
const BOS: u32 = 1;
const EOS: u32 = 2;
const FIRST_SYMBOL: u32 = 3;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    counts: BTreeMap<u32, u64>,
}

/// Smoothed conditional probability tables for one level and order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NgramLm {
    pub level: LmLevel,
    pub order: usize,
    pub alpha: f64,
    pub reduction: CharReduction,
    symbols: Vec<String>,
    #[serde(skip)]
    symbol_ids: BTreeMap<String, u32>,
    /// tables[k-1] holds order-k contexts (context length k-1).
    #[serde(with = "table_serde")]
    tables: Vec<BTreeMap<Vec<u32>, ContextCounts>>,
}

/// JSON object keys must be strings, so count tables travel as sorted entry
/// lists instead of maps.
mod table_serde {
    use super::ContextCounts;
    use serde::de::Deserializer;
    use serde::ser::Serializer;
    use serde::{Deserialize, Serialize};
    use std::collections::BTreeMap;

    type Tables = Vec<BTreeMap<Vec<u32>, ContextCounts>>;

    pub fn serialize<S: Serializer>(tables: &Tables, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<(&Vec<u32>, &ContextCounts)>> =
            tables.iter().map(|t| t.iter().collect()).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Tables, D::Error> {
        let rows: Vec<Vec<(Vec<u32>, ContextCounts)>> = Vec::deserialize(de)?;
        Ok(rows.into_iter().map(|r| r.into_iter().collect()).collect())
    }
}

impl NgramLm {
    /// Train on raw text; tokens are whitespace-separated.
    pub fn train(corpus_text: &str, level: LmLevel, order: usize, alpha: f64) -> Result<NgramLm> {
        Self::train_with_reduction(corpus_text, level, order, alpha, CharReduction::Mean)
    }

    pub fn train_with_reduction(
        corpus_text: &str,
        level: LmLevel,
        order: usize,
        alpha: f64,
        reduction: CharReduction,
    ) -> Result<NgramLm> {
        if order < 1 {
            return Err(Error::Config("LM order must be >= 1".into()));
        }
        if alpha < 0.0 {
            return Err(Error::Config("smoothing alpha must be >= 0".into()));
        }
        let tokens: Vec<&str> = corpus_text.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(Error::Invalid("empty corpus for LM training".into()));
        }
        let mut lm = NgramLm {
            level,
            order,
            alpha,
            reduction,
            symbols: Vec::new(),
            symbol_ids: BTreeMap::new(),
            tables: vec![BTreeMap::new(); order],
        };
        match level {
            LmLevel::Word => {
                let ids: Vec<u32> = tokens.iter().map(|t| lm.intern(t)).collect();
                lm.count_sequence(&ids, false);
            }
            LmLevel::Char => {
                for token in &tokens {
                    let ids: Vec<u32> = token.chars().map(|c| lm.intern(&c.to_string())).collect();
                    lm.count_sequence(&ids, true);
                }
            }
        }
        Ok(lm)
    }

    fn intern(&mut self, sym: &str) -> u32 {
        if let Some(&id) = self.symbol_ids.get(sym) {
            return id;
        }
        let id = FIRST_SYMBOL + self.symbols.len() as u32;
        self.symbols.push(sym.to_string());
        self.symbol_ids.insert(sym.to_string(), id);
        id
    }

    fn lookup(&self, sym: &str) -> u32 {
        self.symbol_ids.get(sym).copied().unwrap_or(UNK)
    }

    /// Re-derive the id map after deserialization.
    fn rebuild_index(&mut self) {
        self.symbol_ids = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), FIRST_SYMBOL + i as u32))
            .collect();
    }

    fn count_sequence(&mut self, ids: &[u32], pad: bool) {
        let mut seq = Vec::with_capacity(ids.len() + self.order);
        if pad {
            seq.extend(std::iter::repeat(BOS).take(self.order.saturating_sub(1)));
        }
        seq.extend_from_slice(ids);
        if pad {
            seq.push(EOS);
        }
        let first_predicted = if pad { self.order - 1 } else { 0 };
        for i in first_predicted..seq.len() {
            if !pad && seq[i] == BOS {
                continue;
            }
            let sym = seq[i];
            for k in 1..=self.order {
                let ctx_start = i.saturating_sub(k - 1);
                if !pad && i + 1 < k {
                    continue; // not enough unpadded context for this order
                }
                let ctx = seq[ctx_start..i].to_vec();
                let entry = self.tables[k - 1].entry(ctx).or_default();
                entry.total += 1;
                *entry.counts.entry(sym).or_default() += 1;
            }
        }
    }

    /// Prediction alphabet size: seen symbols + UNK (+ EOS for char level).
    pub fn alphabet_size(&self) -> usize {
        match self.level {
            LmLevel::Word => self.symbols.len() + 1,
            LmLevel::Char => self.symbols.len() + 2,
        }
    }

    /// Iterate the prediction alphabet ids.
    fn alphabet(&self) -> Vec<u32> {
        let mut ids = vec![UNK];
        if self.level == LmLevel::Char {
            ids.push(EOS);
        }
        ids.extend((0..self.symbols.len() as u32).map(|i| FIRST_SYMBOL + i));
        ids
    }

    /// Additive-alpha conditional for one order: (c + a) / (total + a*V).
    fn cond_prob(&self, k: usize, ctx: &[u32], sym: u32) -> f64 {
        let v = self.alphabet_size() as f64;
        let (total, count) = match self.tables[k - 1].get(ctx) {
            Some(e) => (e.total as f64, e.counts.get(&sym).copied().unwrap_or(0) as f64),
            None => (0.0, 0.0),
        };
        let denom = total + self.alpha * v;
        if denom == 0.0 {
            return 0.0; // alpha = 0 and unseen context: pure ML has no mass here
        }
        (count + self.alpha) / denom
    }

    /// Uniform linear interpolation across orders 1..=n; `ctx` is the full
    /// n-1 preceding symbols (shorter suffixes are taken per order).
    pub(crate) fn interp_prob(&self, ctx: &[u32], sym: u32) -> f64 {
        let mut p = 0.0;
        for k in 1..=self.order {
            let take = (k - 1).min(ctx.len());
            let sub = &ctx[ctx.len() - take..];
            p += self.cond_prob(k, sub, sym);
        }
        p / self.order as f64
    }

    fn char_ids(&self, token: &str) -> Vec<u32> {
        token.chars().map(|c| self.lookup(&c.to_string())).collect()
    }

    /// Log probability of one token.
    ///
    /// Word level: log of the (interpolated) unigram probability, UNK for
    /// out-of-vocabulary words. Char level: the configured reduction over the
    /// per-position log probabilities of the padded character sequence.
    pub fn token_logprob(&self, token: &str) -> Result<f64> {
        if token.is_empty() {
            return Err(Error::Invalid("token_logprob of empty token".into()));
        }
        match self.level {
            LmLevel::Word => {
                let sym = self.lookup(token);
                Ok(self.cond_prob(1, &[], sym).ln())
            }
            LmLevel::Char => {
                let ids = self.char_ids(token);
                let mut seq = Vec::with_capacity(ids.len() + self.order);
                seq.extend(std::iter::repeat(BOS).take(self.order - 1));
                seq.extend(ids);
                seq.push(EOS);
                let mut logps = Vec::new();
                for i in (self.order - 1)..seq.len() {
                    let ctx = &seq[i.saturating_sub(self.order - 1)..i];
                    logps.push(self.interp_prob(ctx, seq[i]).ln());
                }
                Ok(match self.reduction {
                    CharReduction::Mean => logps.iter().sum::<f64>() / logps.len() as f64,
                    CharReduction::Sum => logps.iter().sum(),
                    CharReduction::Min => logps.iter().cloned().fold(f64::INFINITY, f64::min),
                })
            }
        }
    }

    /// Sum of interpolated probabilities over the prediction alphabet; 1.0
    /// for any context when alpha > 0.
    pub fn normalization_mass(&self, ctx_symbols: &[&str]) -> f64 {
        let ctx: Vec<u32> = ctx_symbols.iter().map(|s| self.lookup(s)).collect();
        self.alphabet()
            .into_iter()
            .map(|sym| self.interp_prob(&ctx, sym))
            .sum()
    }

    /// Contexts observed for the top order, as symbol strings (UNK/BOS shown
    /// as placeholders). Used by normalization spot checks.
    pub fn sample_contexts(&self, limit: usize) -> Vec<Vec<String>> {
        self.tables[self.order - 1]
            .keys()
            .take(limit)
            .map(|ctx| {
                ctx.iter()
                    .map(|&id| match id {
                        UNK => "<unk>".to_string(),
                        BOS => "<s>".to_string(),
                        EOS => "</s>".to_string(),
                        _ => self.symbols[(id - FIRST_SYMBOL) as usize].clone(),
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("LM serialization")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<NgramLm> {
        let mut lm: NgramLm = serde_json::from_value(value.clone())
            .map_err(|e| Error::Archive(format!("bad LM payload: {e}")))?;
        lm.rebuild_index();
        Ok(lm)
    }
}
