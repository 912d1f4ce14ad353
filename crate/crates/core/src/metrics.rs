//! Pixel-level segmentation metrics.
//!
//! Accuracy is `(tp + tn) / total`, distinct from IoU.

use std::io::Write;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with prediction and truth exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tn,
        }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

/// Which ratios had a zero denominator (and were reported as 0).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub iou: bool,
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub accuracy: bool,
}

impl UndefinedFlags {
    pub fn any(&self) -> bool {
        self.iou || self.precision || self.recall || self.f1 || self.accuracy
    }

    fn names(&self) -> Vec<&'static str> {
        [
            (self.iou, "iou"),
            (self.precision, "precision"),
            (self.recall, "recall"),
            (self.f1, "f1"),
            (self.accuracy, "accuracy"),
        ]
        .into_iter()
        .filter_map(|(set, name)| set.then_some(name))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub counts: ConfusionCounts,
    pub undefined: UndefinedFlags,
}

/// Confusion counts over pixels valid in both masks.
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    pred.grid()
        .ensure_matches(truth.grid(), "confusion prediction vs truth")?;
    let mut c = ConfusionCounts::default();
    let rows = pred
        .bits()
        .iter()
        .zip(pred.valid())
        .zip(truth.bits().iter().zip(truth.valid()));
    for ((&p, &pv), (&t, &tv)) in rows {
        if !(pv && tv) {
            continue;
        }
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derives the metric suite. F1 uses the Dice form `2tp / (2tp + fp + fn)`,
/// which equals the harmonic mean of precision and recall whenever both exist.
pub fn report(c: ConfusionCounts) -> Result<MetricsReport> {
    if c.total() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut u = UndefinedFlags::default();
    let iou = ratio(c.tp, c.tp + c.fp + c.fn_, &mut u.iou);
    let precision = ratio(c.tp, c.tp + c.fp, &mut u.precision);
    let recall = ratio(c.tp, c.tp + c.fn_, &mut u.recall);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, &mut u.f1);
    let accuracy = ratio(c.tp + c.tn, c.total(), &mut u.accuracy);
    Ok(MetricsReport {
        iou,
        precision,
        recall,
        f1,
        accuracy,
        counts: c,
        undefined: u,
    })
}

/// One evaluated `(method, scene)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub scene: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "method,scene,iou,precision,recall,f1,accuracy,tp,fp,fn,tn,undefined"
    )?;
    for r in rows {
        let m = &r.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.scene,
            m.iou,
            m.precision,
            m.recall,
            m.f1,
            m.accuracy,
            m.counts.tp,
            m.counts.fp,
            m.counts.fn_,
            m.counts.tn,
            m.undefined.names().join(";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(
            Grid::simple(2, bits.len() / 2, 1.0),
            bits.iter().map(|&b| b == 1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn confusion_examples() {
        let all = mask(&[1, 1, 1, 1]);
        assert_eq!(
            confusion(&all, &all).unwrap(),
            ConfusionCounts {
                tp: 4,
                fp: 0,
                fn_: 0,
                tn: 0
            }
        );
        let c = confusion(&mask(&[1, 0, 1, 1]), &mask(&[1, 1, 0, 1])).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 2,
                fp: 1,
                fn_: 1,
                tn: 0
            }
        );
        let none = mask(&[0, 0, 0, 0]);
        assert_eq!(confusion(&none, &none).unwrap().tn, 4);
    }

    #[test]
    fn confusion_skips_invalid_pixels() {
        let grid = Grid::simple(2, 1, 1.0);
        let pred =
            BinaryMask::with_validity(grid.clone(), vec![true, true], vec![true, false]).unwrap();
        let truth = BinaryMask::new(grid, vec![true, true]).unwrap();
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c.total(), 1);
        assert_eq!(c.tp, 1);
    }

    #[test]
    fn hand_computed_report() {
        let r = report(ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 0,
        })
        .unwrap();
        assert_eq!(r.iou, 0.5);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.5);
        assert!(!r.undefined.any());
    }

    #[test]
    fn perfect_report() {
        let r = report(ConfusionCounts {
            tp: 9,
            ..Default::default()
        })
        .unwrap();
        assert_eq!([r.iou, r.precision, r.recall, r.f1, r.accuracy], [1.0; 5]);
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let r = report(ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: 5,
            tn: 5,
        })
        .unwrap();
        assert!(r.undefined.precision);
        assert_eq!(r.precision, 0.0);
        assert_eq!((r.recall, r.iou, r.accuracy), (0.0, 0.0, 0.5));
        assert!(!r.undefined.recall);

        let r = report(ConfusionCounts {
            tn: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(r.undefined.iou && r.undefined.precision && r.undefined.recall && r.undefined.f1);
        assert!(!r.undefined.accuracy);
        assert!(matches!(
            report(ConfusionCounts::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn csv_rows() {
        let r = report(ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
            tn: 0,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_csv(
            &[MetricsRow {
                method: "gradual".into(),
                scene: "s0".into(),
                report: r,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with(
            "gradual,s0,0.5,0.6666666666666666,0.6666666666666666,0.6666666666666666,0.5,2,1,1,0,"
        ));
        let json = serde_json::to_value(r).unwrap();
        assert_eq!(json["counts"]["fn"], 1);
    }
}
