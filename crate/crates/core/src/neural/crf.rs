//! Linear-chain CRF scoring: forward log-partition, Viterbi decoding, and the
//! tape-side negative log-likelihood. Every sequence model in the crate goes
//! through these functions; there is no second CRF implementation.

use super::tape::{NodeId, Tape};
use super::tensor::{log_sum_exp, Matrix};
use crate::{Error, Result};

/// Concrete CRF scores: pairwise transitions plus begin/end unaries.
/// Entries may be `-inf` to forbid a transition; `NaN`/`+inf` are invalid.
#[derive(Clone, Debug)]
pub struct CrfScores {
    pub transitions: Matrix,
    pub begin: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfScores {
    pub fn zeros(labels: usize) -> Self {
        CrfScores {
            transitions: Matrix::zeros(labels, labels),
            begin: vec![0.0; labels],
            end: vec![0.0; labels],
        }
    }

    pub fn labels(&self) -> usize {
        self.begin.len()
    }

    fn validate(&self, emissions: &Matrix) -> Result<()> {
        let l = self.labels();
        if emissions.rows() == 0 {
            return Err(Error::Invalid("CRF requires at least one position".into()));
        }
        if emissions.cols() != l || self.transitions.shape() != (l, l) || self.end.len() != l {
            return Err(Error::Dim(format!(
                "CRF shapes: emissions {}x{}, {l} labels",
                emissions.rows(),
                emissions.cols()
            )));
        }
        if !emissions.all_finite() {
            return Err(Error::Invalid("non-finite emission score".into()));
        }
        let ok = |x: &f64| !x.is_nan() && *x != f64::INFINITY;
        if !self.transitions.data().iter().all(ok)
            || !self.begin.iter().all(ok)
            || !self.end.iter().all(ok)
        {
            return Err(Error::Invalid("invalid CRF transition score".into()));
        }
        Ok(())
    }
}

/// log of the sum over all label paths of exp(path score), by the forward
/// recursion in log space. `emissions` is `T x L`.
pub fn log_partition(emissions: &Matrix, crf: &CrfScores) -> Result<f64> {
    crf.validate(emissions)?;
    let l = crf.labels();
    let mut alpha: Vec<f64> = (0..l)
        .map(|j| emissions.get(0, j) + crf.begin[j])
        .collect();
    let mut scores = vec![0.0; l];
    for t in 1..emissions.rows() {
        let mut next = vec![0.0; l];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in 0..l {
                scores[i] = alpha[i] + crf.transitions.get(i, j);
            }
            *slot = log_sum_exp(&scores) + emissions.get(t, j);
        }
        alpha = next;
    }
    for (a, e) in alpha.iter_mut().zip(&crf.end) {
        *a += e;
    }
    Ok(log_sum_exp(&alpha))
}

/// Highest-scoring path and its score. Ties break toward the lowest label
/// index at each backtracking step (including the final position).
pub fn viterbi(emissions: &Matrix, crf: &CrfScores) -> Result<(Vec<usize>, f64)> {
    crf.validate(emissions)?;
    let l = crf.labels();
    let t_len = emissions.rows();
    let mut delta: Vec<f64> = (0..l)
        .map(|j| emissions.get(0, j) + crf.begin[j])
        .collect();
    let mut backptr = vec![vec![0usize; l]; t_len];
    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; l];
        for j in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let s = d + crf.transitions.get(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + emissions.get(t, j);
            backptr[t][j] = arg;
        }
        delta = next;
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (j, &d) in delta.iter().enumerate() {
        let s = d + crf.end[j];
        if s > best {
            best = s;
            last = j;
        }
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = backptr[t][path[t]];
    }
    Ok((path, best))
}

/// Score of one specific label path.
pub fn path_score(emissions: &Matrix, crf: &CrfScores, path: &[usize]) -> f64 {
    assert_eq!(path.len(), emissions.rows());
    let mut s = crf.begin[path[0]] + emissions.get(0, path[0]);
    for t in 1..path.len() {
        s += crf.transitions.get(path[t - 1], path[t]) + emissions.get(t, path[t]);
    }
    s + crf.end[path[path.len() - 1]]
}

/// Tape-side log-partition over per-position emission nodes (each `L x 1`).
pub fn log_partition_tape(
    tape: &mut Tape,
    emissions: &[NodeId],
    trans: NodeId,
    begin: NodeId,
    end: NodeId,
) -> NodeId {
    assert!(!emissions.is_empty());
    let mut alpha = tape.add(emissions[0], begin);
    for &e in &emissions[1..] {
        alpha = tape.crf_step(alpha, trans, e);
    }
    let fin = tape.add(alpha, end);
    tape.log_sum_exp(fin)
}

/// Negative log-likelihood of `gold` under the CRF, on the tape.
pub fn nll_tape(
    tape: &mut Tape,
    emissions: &[NodeId],
    trans: NodeId,
    begin: NodeId,
    end: NodeId,
    gold: &[usize],
) -> NodeId {
    assert_eq!(emissions.len(), gold.len());
    let log_z = log_partition_tape(tape, emissions, trans, begin, end);
    let mut score = tape.pick(begin, gold[0], 0);
    let e0 = tape.pick(emissions[0], gold[0], 0);
    score = tape.add(score, e0);
    for t in 1..gold.len() {
        let tr = tape.pick(trans, gold[t - 1], gold[t]);
        let em = tape.pick(emissions[t], gold[t], 0);
        score = tape.add(score, tr);
        score = tape.add(score, em);
    }
    let en = tape.pick(end, gold[gold.len() - 1], 0);
    score = tape.add(score, en);
    tape.sub(log_z, score)
}
