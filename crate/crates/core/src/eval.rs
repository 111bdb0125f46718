//! Confusion matrices, per-class precision/recall/F1 and disagreement
//! images.

use std::fmt::Write as _;

use crate::error::EvalError;
use crate::grid::LabelGrid;
use crate::label::{ClassLabel, NUM_CLASSES};
use crate::raster::Raster;

/// Column and row order of the printed report.
pub const REPORT_ORDER: [ClassLabel; NUM_CLASSES] = [
    ClassLabel::Road,
    ClassLabel::Building,
    ClassLabel::NaturalGround,
    ClassLabel::Tree,
    ClassLabel::Car,
    ClassLabel::ArtificialGround,
];

fn short_name(c: ClassLabel) -> &'static str {
    match c {
        ClassLabel::Road => "roads",
        ClassLabel::Building => "bldgs",
        ClassLabel::NaturalGround => "nat. gnd.",
        ClassLabel::Tree => "tree",
        ClassLabel::Car => "car",
        ClassLabel::ArtificialGround => "artif. gnd.",
        ClassLabel::Unknown => "unknown",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    /// `counts[reference][predicted]`
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, reference: usize) -> u64 {
        self.counts[reference].iter().sum()
    }

    pub fn column_sum(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|r| r[predicted]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self
            .counts
            .iter_mut()
            .flatten()
            .zip(other.counts.iter().flatten())
        {
            *a += b;
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..NUM_CLASSES).all(|r| (0..NUM_CLASSES).all(|c| r == c || self.counts[r][c] == 0))
    }
}

fn dims(reference: &LabelGrid, predicted: &LabelGrid) -> Result<(), EvalError> {
    if reference.same_shape(predicted) {
        Ok(())
    } else {
        Err(EvalError::Dimension {
            ref_w: reference.width(),
            ref_h: reference.height(),
            pred_w: predicted.width(),
            pred_h: predicted.height(),
        })
    }
}

/// Counts pixels where `mask` (row-major, if given) is set and both labels
/// are classes. Unknown pixels on either side are skipped.
pub fn confusion(
    reference: &LabelGrid,
    predicted: &LabelGrid,
    mask: Option<&[bool]>,
) -> Result<ConfusionMatrix, EvalError> {
    dims(reference, predicted)?;
    if let Some(m) = mask {
        assert_eq!(m.len(), reference.len(), "mask length must match the grids");
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&r, &p)) in reference
        .as_slice()
        .iter()
        .zip(predicted.as_slice())
        .enumerate()
    {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if (r as usize) < NUM_CLASSES && (p as usize) < NUM_CLASSES {
            cm.counts[r as usize][p as usize] += 1;
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub f1: [f64; NUM_CLASSES],
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn scores(cm: &ConfusionMatrix) -> ClassScores {
    let mut s = ClassScores {
        precision: [0.0; NUM_CLASSES],
        recall: [0.0; NUM_CLASSES],
        f1: [0.0; NUM_CLASSES],
        accuracy: ratio(cm.trace(), cm.total()),
    };
    for c in 0..NUM_CLASSES {
        let tp = cm.counts[c][c];
        s.precision[c] = ratio(tp, cm.column_sum(c));
        s.recall[c] = ratio(tp, cm.row_sum(c));
        s.f1[c] = f1_score(s.precision[c], s.recall[c]);
    }
    s
}

pub const DIFF_AGREE: [f64; 3] = [0.0, 1.0, 0.0];
pub const DIFF_DISAGREE: [f64; 3] = [1.0, 0.0, 0.0];
pub const DIFF_UNKNOWN: [f64; 3] = [0.0, 0.0, 0.0];

/// Green where the labels agree, red where they differ, black where either
/// side is unknown. Depth is zero.
pub fn diff_image(reference: &LabelGrid, predicted: &LabelGrid) -> Result<Raster, EvalError> {
    dims(reference, predicted)?;
    let color = reference
        .as_slice()
        .iter()
        .zip(predicted.as_slice())
        .map(|(&r, &p)| {
            if r as usize >= NUM_CLASSES || p as usize >= NUM_CLASSES {
                DIFF_UNKNOWN
            } else if r == p {
                DIFF_AGREE
            } else {
                DIFF_DISAGREE
            }
        })
        .collect();
    let (w, h) = (reference.width(), reference.height());
    Ok(Raster::new(w, h, vec![0.0; w * h], color, None).expect("colors are in range"))
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Rows of the report: one per reference class (row percentages), then
/// precision, recall and F1, all in percent.
fn report_rows(cm: &ConfusionMatrix) -> Vec<(String, Vec<String>)> {
    let s = scores(cm);
    let mut rows = Vec::new();
    for r in REPORT_ORDER {
        let ri = r.index() as usize;
        let total = cm.row_sum(ri);
        let cells = REPORT_ORDER
            .iter()
            .map(|c| pct(ratio(cm.counts[ri][c.index() as usize], total)))
            .collect();
        rows.push((short_name(r).to_string(), cells));
    }
    let per_class = |v: &[f64; NUM_CLASSES]| {
        REPORT_ORDER
            .iter()
            .map(|c| pct(v[c.index() as usize]))
            .collect()
    };
    rows.push(("Prec./Corr.".into(), per_class(&s.precision)));
    rows.push(("Rec./Compl.".into(), per_class(&s.recall)));
    rows.push(("F1".into(), per_class(&s.f1)));
    rows
}

fn header() -> Vec<String> {
    std::iter::once("pred./ref.".to_string())
        .chain(REPORT_ORDER.iter().map(|c| short_name(*c).to_string()))
        .collect()
}

pub fn report_csv(cm: &ConfusionMatrix) -> String {
    let mut out = header().join(",");
    out.push('\n');
    for (name, cells) in report_rows(cm) {
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    let _ = writeln!(out, "Acc.,{}", pct(scores(cm).accuracy));
    out
}

pub fn report_table(cm: &ConfusionMatrix) -> String {
    let head = header();
    let rows = report_rows(cm);
    let first = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain([head[0].len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = (0..NUM_CLASSES)
        .map(|i| {
            rows.iter()
                .map(|(_, c)| c[i].len())
                .chain([head[i + 1].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, name: &str, cells: &[String]| {
        let _ = write!(out, "{name:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, " | {c:>w$}");
        }
        out.push('\n');
    };
    line(&mut out, &head[0], &head[1..]);
    let rule = first + widths.iter().map(|w| w + 3).sum::<usize>();
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for (name, cells) in &rows {
        line(&mut out, name, cells);
    }
    let _ = writeln!(out, "Acc. {}", pct(scores(cm).accuracy));
    out
}
