//! Multi-label F1 and the per-class binary report.
//!
//! Zero-division convention: precision, recall or F1 with a zero denominator is 0.
//!
//! Per-class "binary" rows treat a class as a two-class problem. Their macro columns
//! average the metric over the positive and the negative class; their micro columns pool
//! both classes' counts, which makes micro precision, recall and F1 all equal accuracy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::labels::{LabelVector, TriggerClass, NUM_CLASSES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Positive-class F1.
    pub fn f1(&self) -> f64 {
        f1_from(self.tp, self.fp, self.fn_)
    }

    /// The same table seen from the negative class.
    pub fn flipped(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn binary_macro_f1(&self) -> f64 {
        (self.f1() + self.flipped().f1()) / 2.0
    }

    pub fn binary_macro_precision(&self) -> f64 {
        (self.precision() + self.flipped().precision()) / 2.0
    }

    pub fn binary_macro_recall(&self) -> f64 {
        (self.recall() + self.flipped().recall()) / 2.0
    }
}

/// Which classes enter the macro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacroAverage {
    /// All 32 classes; absent classes contribute 0.
    #[default]
    AllClasses,
    /// Only classes with at least one positive in the ground truth.
    PresentInTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultilabelScores {
    pub f1_macro: f64,
    pub p_macro: f64,
    pub r_macro: f64,
    pub f1_micro: f64,
    pub p_micro: f64,
    pub r_micro: f64,
}

fn check_inputs(preds: &[LabelVector], truth: &[LabelVector]) -> Result<()> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch(preds.len(), truth.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn class_counts(
    preds: &[LabelVector],
    truth: &[LabelVector],
    class: TriggerClass,
) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (p, t) in preds.iter().zip(truth) {
        c.add(p.contains(class), t.contains(class));
    }
    c
}

pub fn multilabel_f1(
    preds: &[LabelVector],
    truth: &[LabelVector],
    averaging: MacroAverage,
) -> Result<MultilabelScores> {
    check_inputs(preds, truth)?;
    let counts: Vec<(TriggerClass, ConfusionCounts)> = TriggerClass::all()
        .map(|c| (c, class_counts(preds, truth, c)))
        .collect();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let (mut f1_sum, mut p_sum, mut r_sum, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (class, c) in &counts {
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
        let include = match averaging {
            MacroAverage::AllClasses => true,
            MacroAverage::PresentInTruth => c.tp + c.fn_ > 0,
        };
        if !include {
            continue;
        }
        if c.tp + c.fp + c.fn_ == 0 {
            log::debug!("{class}: no positives in truth or predictions; F1 taken as 0");
        }
        f1_sum += c.f1();
        p_sum += c.precision();
        r_sum += c.recall();
        n += 1;
    }
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(MultilabelScores {
        f1_macro: mean(f1_sum),
        p_macro: mean(p_sum),
        r_macro: mean(r_sum),
        f1_micro: f1_from(tp, fp, fn_),
        p_micro: ratio(tp, tp + fp),
        r_micro: ratio(tp, tp + fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryRow {
    pub class: usize,
    pub name: String,
    pub pos_ratio: f64,
    pub f1_macro: f64,
    pub p_macro: f64,
    pub r_macro: f64,
    pub f1_micro: f64,
    pub p_micro: f64,
    pub r_micro: f64,
    pub pos_pred_ratio: f64,
    pub counts: ConfusionCounts,
}

impl BinaryRow {
    pub fn from_counts(class: TriggerClass, c: ConfusionCounts) -> Self {
        let n = c.total();
        let acc = c.accuracy();
        BinaryRow {
            class: class.number(),
            name: class.name().to_string(),
            pos_ratio: ratio(c.tp + c.fn_, n),
            f1_macro: c.binary_macro_f1(),
            p_macro: c.binary_macro_precision(),
            r_macro: c.binary_macro_recall(),
            f1_micro: acc,
            p_micro: acc,
            r_micro: acc,
            pos_pred_ratio: ratio(c.tp + c.fp, n),
            counts: c,
        }
    }
}

pub fn binary_class_report(
    preds: &[LabelVector],
    truth: &[LabelVector],
    class: TriggerClass,
) -> Result<BinaryRow> {
    check_inputs(preds, truth)?;
    Ok(BinaryRow::from_counts(class, class_counts(preds, truth, class)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_documents: usize,
    pub per_class: Vec<BinaryRow>,
    pub overall: MultilabelScores,
    /// Macro scores restricted to classes present in the ground truth.
    pub overall_present: MultilabelScores,
    pub all_negative_predictions: usize,
}

pub fn report(preds: &[LabelVector], truth: &[LabelVector]) -> Result<MetricsReport> {
    check_inputs(preds, truth)?;
    let per_class = TriggerClass::all()
        .map(|c| BinaryRow::from_counts(c, class_counts(preds, truth, c)))
        .collect::<Vec<_>>();
    debug_assert_eq!(per_class.len(), NUM_CLASSES);
    Ok(MetricsReport {
        n_documents: preds.len(),
        per_class,
        overall: multilabel_f1(preds, truth, MacroAverage::AllClasses)?,
        overall_present: multilabel_f1(preds, truth, MacroAverage::PresentInTruth)?,
        all_negative_predictions: preds.iter().filter(|p| p.is_empty()).count(),
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>10} {:>8} {:>7} {:>7} {:>8} {:>7} {:>7} {:>15}",
            "Class", "Pos. Ratio", "F1-macro", "P-macro", "R-macro", "F1-micro", "P-micro", "R-micro", "Pos. Pred. Ratio"
        )?;
        for r in &self.per_class {
            writeln!(
                f,
                "{:<16} {:>10.3} {:>8.3} {:>7.3} {:>7.3} {:>8.3} {:>7.3} {:>7.3} {:>15.3}",
                r.name, r.pos_ratio, r.f1_macro, r.p_macro, r.r_macro, r.f1_micro, r.p_micro, r.r_micro, r.pos_pred_ratio
            )?;
        }
        let o = &self.overall;
        writeln!(
            f,
            "{:<16} {:>10} {:>8.4} {:>7.4} {:>7.4} {:>8.4} {:>7.4} {:>7.4} {:>15}",
            "Multi-label", "-", o.f1_macro, o.p_macro, o.r_macro, o.f1_micro, o.p_micro, o.r_micro, "-"
        )?;
        writeln!(
            f,
            "\ndocuments: {}  all-negative predictions: {}  F1-macro over present classes: {:.4}",
            self.n_documents, self.all_negative_predictions, self.overall_present.f1_macro
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(numbers: &[usize]) -> LabelVector {
        LabelVector::from_classes(numbers.iter().map(|&n| TriggerClass::from_number(n).unwrap()))
    }

    #[test]
    fn perfect_and_total_miss() {
        let truth = vec![lv(&[1, 2]), lv(&[3]), lv(&[1])];
        let s = multilabel_f1(&truth, &truth, MacroAverage::AllClasses).unwrap();
        assert_eq!(s.f1_micro, 1.0);
        // every class present somewhere in the complement, so all 32 are perfect too
        let all = vec![LabelVector::from_bits(u32::MAX); 2];
        let s = multilabel_f1(&all, &all, MacroAverage::AllClasses).unwrap();
        assert_eq!((s.f1_macro, s.f1_micro), (1.0, 1.0));

        let preds: Vec<_> = truth.iter().map(|t| t.complement()).collect();
        let s = multilabel_f1(&preds, &truth, MacroAverage::AllClasses).unwrap();
        assert_eq!((s.f1_macro, s.f1_micro), (0.0, 0.0));
    }

    #[test]
    fn hand_computed_two_documents() {
        let truth = vec![lv(&[1]), lv(&[1, 2])];
        let preds = vec![lv(&[1]), lv(&[1])];
        let s = multilabel_f1(&preds, &truth, MacroAverage::PresentInTruth).unwrap();
        assert_eq!(s.f1_macro, 0.5);
        assert_eq!(s.f1_micro, 0.8);
        assert_eq!(s.p_micro, 1.0);
        let all = multilabel_f1(&preds, &truth, MacroAverage::AllClasses).unwrap();
        assert_eq!(all.f1_macro, 1.0 / 32.0);
    }

    #[test]
    fn all_negative_binary_row() {
        let class = TriggerClass::from_number(2).unwrap();
        let truth: Vec<_> = (0..100).map(|i| if i < 10 { lv(&[2]) } else { lv(&[1]) }).collect();
        let preds = vec![LabelVector::EMPTY; 100];
        let row = binary_class_report(&preds, &truth, class).unwrap();
        assert_eq!(row.pos_pred_ratio, 0.0);
        assert_eq!(row.pos_ratio, 0.1);
        assert!((row.f1_micro - 0.9).abs() < 1e-12);
        assert_eq!((row.p_micro, row.r_micro), (row.f1_micro, row.f1_micro));
        assert!((row.f1_macro - 0.5 * (180.0 / 190.0)).abs() < 1e-12);
        assert!((row.f1_macro - 0.474).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            multilabel_f1(&[lv(&[1])], &[], MacroAverage::AllClasses),
            Err(Error::LengthMismatch(1, 0))
        ));
        assert!(matches!(report(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn single_correct_document() {
        let r = report(&[lv(&[5])], &[lv(&[5])]).unwrap();
        assert_eq!(r.overall.f1_micro, 1.0);
        // the negative side has no support at all, so it scores 0 under the
        // zero-division convention and halves the binary macro
        assert_eq!(r.per_class[4].f1_macro, 0.5);
        assert_eq!(r.per_class[4].f1_micro, 1.0);
        assert_eq!(r.all_negative_predictions, 0);
    }
}
