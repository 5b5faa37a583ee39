//! Span-level scoring, the error taxonomy, and unseen/ambiguous-token
//! accuracy analysis.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::{AnnotatedSentence, EntitySchema};
use crate::{Error, Result};

/// An entity span: half-open token range plus type.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub ty: String,
}

/// Extract maximal B/I runs. A stray I-t (after O or a different type) starts
/// a new span, matching the usual conlleval treatment of repaired data.
pub fn extract_spans(labels: &[String]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, label) in labels.iter().enumerate() {
        let (prefix, ty) = match label.split_once('-') {
            Some((p, t)) => (p, t),
            None => ("O", ""),
        };
        let continues = matches!(
            (&open, prefix),
            (Some((_, open_ty)), "I") if open_ty == ty
        );
        if !continues {
            if let Some((start, ty)) = open.take() {
                spans.push(Span {
                    start,
                    end: i,
                    ty,
                });
            }
            if prefix == "B" || prefix == "I" {
                open = Some((i, ty.to_string()));
            }
        }
    }
    if let Some((start, ty)) = open {
        spans.push(Span {
            start,
            end: labels.len(),
            ty,
        });
    }
    spans
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PrCounts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl PrCounts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Span-level error cells: exact-boundary matches split into correct and
/// wrong-type; the rest are either completely missed gold spans (all tokens
/// predicted O), spurious predictions over gold O tokens, or boundary errors.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ErrorCells {
    pub correct: usize,
    /// Exact boundaries, wrong entity type.
    pub type_mismatch: usize,
    /// Gold span whose tokens were all predicted O.
    pub missed: usize,
    /// Predicted span whose tokens are all gold O.
    pub spurious: usize,
    /// Remaining boundary disagreements (partial overlaps), counted over
    /// both unmatched gold and unmatched predicted spans.
    pub boundary: usize,
}

impl ErrorCells {
    /// Total evaluated units: every gold span plus every unmatched prediction.
    pub fn total_units(&self) -> usize {
        self.correct + self.type_mismatch + self.missed + self.spurious + self.boundary
    }
}

/// The full evaluation report.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EvalReport {
    pub overall: PrCounts,
    pub per_type: BTreeMap<String, PrCounts>,
    pub cells: ErrorCells,
    /// Token-level confusion over {O, code-entity group, NL-entity group}.
    pub token_confusion: [[usize; 3]; 3],
    pub unseen_accuracy: Option<f64>,
    pub ambiguous_accuracy: Option<f64>,
    pub unseen_total: usize,
    pub ambiguous_total: usize,
}

fn token_group(schema: &EntitySchema, label: &str) -> usize {
    match label.split_once('-') {
        None => 0,
        Some((_, ty)) => {
            if schema.is_code_type(ty) {
                1
            } else {
                2
            }
        }
    }
}

/// Exact-match span precision/recall/F1, micro-averaged overall and per type,
/// plus the error taxonomy cells.
pub fn span_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Dim(format!(
            "gold has {} sentences, predictions {}",
            gold.len(),
            pred.len()
        )));
    }
    let schema = EntitySchema::standard();
    let mut report = EvalReport::default();
    for (k, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Dim(format!(
                "sentence {k}: gold has {} tokens, prediction {}",
                g.len(),
                p.len()
            )));
        }
        let gs = extract_spans(g);
        let ps = extract_spans(p);
        let gset: BTreeSet<&Span> = gs.iter().collect();
        let pset: BTreeSet<&Span> = ps.iter().collect();

        report.overall.gold += gs.len();
        report.overall.predicted += ps.len();
        for s in &gs {
            report.per_type.entry(s.ty.clone()).or_default().gold += 1;
        }
        for s in &ps {
            report.per_type.entry(s.ty.clone()).or_default().predicted += 1;
        }
        for s in &gs {
            if pset.contains(s) {
                report.overall.correct += 1;
                report.per_type.entry(s.ty.clone()).or_default().correct += 1;
            }
        }

        // Error cells. Boundary-exact matches pair up gold and prediction;
        // the remainder classifies by token overlap with O.
        let pred_boundaries: BTreeSet<(usize, usize)> =
            ps.iter().map(|s| (s.start, s.end)).collect();
        let gold_boundaries: BTreeSet<(usize, usize)> =
            gs.iter().map(|s| (s.start, s.end)).collect();
        for s in &gs {
            if pset.contains(s) {
                report.cells.correct += 1;
            } else if pred_boundaries.contains(&(s.start, s.end)) {
                report.cells.type_mismatch += 1;
            } else if (s.start..s.end).all(|t| p[t] == "O") {
                report.cells.missed += 1;
            } else {
                report.cells.boundary += 1;
            }
        }
        for s in &ps {
            if gold_boundaries.contains(&(s.start, s.end)) {
                continue; // paired above as correct or type mismatch
            }
            if (s.start..s.end).all(|t| g[t] == "O") {
                report.cells.spurious += 1;
            } else {
                report.cells.boundary += 1;
            }
        }

        for (gl, pl) in g.iter().zip(p) {
            report.token_confusion[token_group(&schema, gl)][token_group(&schema, pl)] += 1;
        }
    }
    Ok(report)
}

/// Unseen/ambiguous analysis over gold in-span tokens of the evaluation set.
///
/// Unseen: surface absent from the training corpus. Ambiguous: surface seen
/// with more than one distinct gold label in training. Accuracy is token-level
/// label accuracy; empty sets report as None.
pub fn unseen_ambiguous_accuracy(
    train: &[AnnotatedSentence],
    gold: &[AnnotatedSentence],
    pred: &[Vec<String>],
) -> Result<(Option<f64>, Option<f64>, usize, usize)> {
    if gold.len() != pred.len() {
        return Err(Error::Dim(format!(
            "gold has {} sentences, predictions {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut train_labels: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for s in train {
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            train_labels.entry(&t.surface).or_default().insert(l);
        }
    }
    let mut unseen = (0usize, 0usize);
    let mut ambiguous = (0usize, 0usize);
    for (s, p) in gold.iter().zip(pred) {
        if s.tokens.len() != p.len() {
            return Err(Error::Dim(format!(
                "sentence {}: gold has {} tokens, prediction {}",
                s.sent_id,
                s.tokens.len(),
                p.len()
            )));
        }
        for ((t, gl), pl) in s.tokens.iter().zip(&s.labels).zip(p) {
            if gl == "O" {
                continue;
            }
            let hit = usize::from(gl == pl);
            match train_labels.get(t.surface.as_str()) {
                None => {
                    unseen.0 += hit;
                    unseen.1 += 1;
                }
                Some(labels) if labels.len() > 1 => {
                    ambiguous.0 += hit;
                    ambiguous.1 += 1;
                }
                _ => {}
            }
        }
    }
    let ratio = |(hits, total): (usize, usize)| {
        if total == 0 {
            None
        } else {
            Some(hits as f64 / total as f64)
        }
    };
    Ok((ratio(unseen), ratio(ambiguous), unseen.1, ambiguous.1))
}

/// Attach the unseen/ambiguous analysis to a report.
pub fn with_unseen_analysis(
    mut report: EvalReport,
    train: &[AnnotatedSentence],
    gold: &[AnnotatedSentence],
    pred: &[Vec<String>],
) -> Result<EvalReport> {
    let (unseen, ambiguous, n_unseen, n_ambiguous) =
        unseen_ambiguous_accuracy(train, gold, pred)?;
    report.unseen_accuracy = unseen;
    report.ambiguous_accuracy = ambiguous;
    report.unseen_total = n_unseen;
    report.ambiguous_total = n_ambiguous;
    Ok(report)
}

/// Human-readable rendering.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "overall: P {:.2} R {:.2} F1 {:.2}  (gold {}, predicted {}, correct {})\n",
        100.0 * report.overall.precision(),
        100.0 * report.overall.recall(),
        100.0 * report.overall.f1(),
        report.overall.gold,
        report.overall.predicted,
        report.overall.correct
    ));
    for (ty, c) in &report.per_type {
        out.push_str(&format!(
            "  {:<16} P {:6.2} R {:6.2} F1 {:6.2}  (gold {:4})\n",
            ty,
            100.0 * c.precision(),
            100.0 * c.recall(),
            100.0 * c.f1(),
            c.gold
        ));
    }
    out.push_str(&format!(
        "errors: correct {}, type-mismatch {}, missed {}, spurious {}, boundary {}\n",
        report.cells.correct,
        report.cells.type_mismatch,
        report.cells.missed,
        report.cells.spurious,
        report.cells.boundary
    ));
    out.push_str("token confusion (rows gold, cols predicted; O/code/NL):\n");
    for row in &report.token_confusion {
        out.push_str(&format!("  {:>8} {:>8} {:>8}\n", row[0], row[1], row[2]));
    }
    if let Some(u) = report.unseen_accuracy {
        out.push_str(&format!(
            "unseen-token accuracy: {:.2}% over {} tokens\n",
            100.0 * u,
            report.unseen_total
        ));
    } else {
        out.push_str("unseen-token accuracy: N/A (no unseen in-span tokens)\n");
    }
    if let Some(a) = report.ambiguous_accuracy {
        out.push_str(&format!(
            "ambiguous-token accuracy: {:.2}% over {} tokens\n",
            100.0 * a,
            report.ambiguous_total
        ));
    } else {
        out.push_str("ambiguous-token accuracy: N/A (no ambiguous in-span tokens)\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_conll_str;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_prediction_is_perfect() {
        let g = vec![labels(&["B-Class", "I-Class", "O", "B-OS"])];
        let r = span_f1(&g, &g).unwrap();
        assert_eq!(r.overall.precision(), 1.0);
        assert_eq!(r.overall.recall(), 1.0);
        assert_eq!(r.overall.f1(), 1.0);
        assert_eq!(r.cells.correct, 2);
        assert_eq!(r.cells.total_units(), 2);
    }

    #[test]
    fn half_overlap_scores_half() {
        // gold spans {A, B}, predicted {A, C}
        let g = vec![labels(&["B-Class", "O", "B-OS", "O"])];
        let p = vec![labels(&["B-Class", "O", "O", "B-Device"])];
        let r = span_f1(&g, &p).unwrap();
        assert_eq!(r.overall.precision(), 0.5);
        assert_eq!(r.overall.recall(), 0.5);
        assert_eq!(r.overall.f1(), 0.5);
    }

    #[test]
    fn swapping_gold_and_pred_swaps_p_and_r() {
        let g = vec![labels(&["B-Class", "I-Class", "O", "B-OS", "O"])];
        let p = vec![labels(&["B-Class", "O", "O", "B-OS", "B-Device"])];
        let a = span_f1(&g, &p).unwrap();
        let b = span_f1(&p, &g).unwrap();
        assert_eq!(a.overall.precision(), b.overall.recall());
        assert_eq!(a.overall.recall(), b.overall.precision());
    }

    #[test]
    fn stray_inside_starts_a_span() {
        let spans = extract_spans(&labels(&["O", "I-Class", "I-Class", "O"]));
        assert_eq!(
            spans,
            vec![Span {
                start: 1,
                end: 3,
                ty: "Class".into()
            }]
        );
        // B after I of the same type starts a new span.
        let spans = extract_spans(&labels(&["B-Class", "B-Class"]));
        assert_eq!(spans.len(), 2);
    }

    #[test]
    fn all_o_prediction_fills_missed_cell() {
        let g = vec![labels(&["B-Class", "I-Class", "O", "B-OS"])];
        let p = vec![labels(&["O", "O", "O", "O"])];
        let r = span_f1(&g, &p).unwrap();
        assert_eq!(r.cells.missed, 2);
        assert_eq!(r.cells.correct + r.cells.type_mismatch + r.cells.spurious, 0);
    }

    #[test]
    fn correct_span_wrong_type_cell() {
        let g = vec![labels(&["B-Class", "I-Class", "O"])];
        let p = vec![labels(&["B-Function", "I-Function", "O"])];
        let r = span_f1(&g, &p).unwrap();
        assert_eq!(r.cells.type_mismatch, 1);
        assert_eq!(r.overall.f1(), 0.0);
    }

    #[test]
    fn hand_built_six_token_example_matches_manual_count() {
        // gold: [Class Class] O [OS] [Device] O O
        // pred: [Class Class] O [Website] O  O [Value]
        let g = vec![labels(&["B-Class", "I-Class", "O", "B-OS", "B-Device", "O"])];
        let p = vec![labels(&["B-Class", "I-Class", "O", "B-Website", "O", "B-Value"])];
        let r = span_f1(&g, &p).unwrap();
        // Manual: correct = Class span; type-mismatch = OS/Website (same
        // boundary); missed = Device (pred all O); spurious = Value (gold O).
        assert_eq!(r.cells.correct, 1);
        assert_eq!(r.cells.type_mismatch, 1);
        assert_eq!(r.cells.missed, 1);
        assert_eq!(r.cells.spurious, 1);
        assert_eq!(r.cells.boundary, 0);
        assert_eq!(r.cells.total_units(), 4);
        // Token confusion: gold groups [code,code,O,NL,NL,O],
        // pred groups [code,code,O,NL,O,code].
        assert_eq!(r.token_confusion[0][0], 1);
        assert_eq!(r.token_confusion[0][1], 1);
        assert_eq!(r.token_confusion[1][1], 2);
        assert_eq!(r.token_confusion[2][2], 1);
        assert_eq!(r.token_confusion[2][0], 1);
    }

    #[test]
    fn unseen_and_ambiguous_sets() {
        let train = read_conll_str(
            "t",
            "list\tB-Data_Structure\n\nlist\tB-Variable\n\nint\tB-Data_Type\n\n",
        )
        .unwrap()
        .sentences;
        let gold = read_conll_str("t", "list\tB-Variable\nnewtok\tB-Class\nint\tB-Data_Type\n\n")
            .unwrap()
            .sentences;
        let pred = vec![labels(&["B-Variable", "O", "B-Data_Type"])];
        let (unseen, ambiguous, n_unseen, n_ambiguous) =
            unseen_ambiguous_accuracy(&train, &gold, &pred).unwrap();
        // "newtok" unseen and mispredicted; "list" ambiguous and correct.
        assert_eq!(n_unseen, 1);
        assert_eq!(unseen, Some(0.0));
        assert_eq!(n_ambiguous, 1);
        assert_eq!(ambiguous, Some(1.0));
        // "int" seen with a single tag: in neither set.

        // No in-span tokens at all -> N/A.
        let gold2 = read_conll_str("t", "plain\tO\n\n").unwrap().sentences;
        let pred2 = vec![labels(&["O"])];
        let (u2, a2, _, _) = unseen_ambiguous_accuracy(&train, &gold2, &pred2).unwrap();
        assert_eq!(u2, None);
        assert_eq!(a2, None);
    }

    #[test]
    fn length_mismatch_errors() {
        let g = vec![labels(&["O", "O"])];
        let p = vec![labels(&["O"])];
        assert!(span_f1(&g, &p).is_err());
    }

    proptest::proptest! {
        #[test]
        fn randomized_corpora_match_set_oracle(
            sentences in proptest::collection::vec(
                proptest::collection::vec(0..5u8, 1..12),
                1..6,
            ),
            pred_seed in proptest::collection::vec(
                proptest::collection::vec(0..5u8, 1..12),
                1..6,
            ),
        ) {
            // Map small ints onto a tiny label set.
            let to_label = |k: u8| match k {
                0 => "O".to_string(),
                1 => "B-Class".to_string(),
                2 => "I-Class".to_string(),
                3 => "B-OS".to_string(),
                _ => "I-OS".to_string(),
            };
            let gold: Vec<Vec<String>> = sentences
                .iter()
                .map(|s| s.iter().map(|&k| to_label(k)).collect())
                .collect();
            // Align predictions to gold lengths by cycling the seed data.
            let pred: Vec<Vec<String>> = gold
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let src = &pred_seed[i % pred_seed.len()];
                    (0..g.len()).map(|t| to_label(src[t % src.len()])).collect()
                })
                .collect();
            let report = span_f1(&gold, &pred).unwrap();

            // Independent set-intersection oracle.
            let mut gold_all: Vec<(usize, Span)> = Vec::new();
            let mut pred_all: Vec<(usize, Span)> = Vec::new();
            for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
                gold_all.extend(extract_spans(g).into_iter().map(|s| (i, s)));
                pred_all.extend(extract_spans(p).into_iter().map(|s| (i, s)));
            }
            let gset: BTreeSet<_> = gold_all.iter().cloned().collect();
            let pset: BTreeSet<_> = pred_all.iter().cloned().collect();
            let correct = gset.intersection(&pset).count();
            proptest::prop_assert_eq!(report.overall.gold, gset.len());
            proptest::prop_assert_eq!(report.overall.predicted, pset.len());
            proptest::prop_assert_eq!(report.overall.correct, correct);
            // Cells sum to all evaluated units.
            let units = gset.len()
                + pset.iter().filter(|(i, s)| {
                    !gset.iter().any(|(gi, gs)| gi == i && gs.start == s.start && gs.end == s.end)
                }).count();
            proptest::prop_assert_eq!(report.cells.total_units(), units);
        }
    }
}
