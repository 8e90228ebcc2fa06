use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// One-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Per-epoch training and validation series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    rows: Vec<EpochMetrics>,
}

pub const CSV_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    Svg,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: EpochMetrics) -> Result<()> {
        if let Some(last) = self.rows.last() {
            ensure!(row.epoch > last.epoch, "epoch {} does not follow {}", row.epoch, last.epoch);
        }
        ensure!(
            (0.0..=1.0).contains(&row.train_accuracy) && (0.0..=1.0).contains(&row.val_accuracy),
            "accuracies must lie in [0, 1]"
        );
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[EpochMetrics] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn epoch(&self, epoch: usize) -> Option<&EpochMetrics> {
        self.rows.iter().find(|r| r.epoch == epoch)
    }

    /// First epoch whose validation accuracy reaches `target`.
    pub fn epochs_to_val_accuracy(&self, target: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.val_accuracy >= target).map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.val_loss, r.train_accuracy, r.val_accuracy
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {CSV_HEADER:?}"),
                })
            }
        }
        let mut log = MetricsLog::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |k: usize| fields[k].parse::<f64>().map_err(|e| err(format!("{}: {e}", fields[k])));
            let row = EpochMetrics {
                epoch: fields[0].parse().map_err(|e| err(format!("{}: {e}", fields[0])))?,
                train_loss: num(1)?,
                val_loss: num(2)?,
                train_accuracy: num(3)?,
                val_accuracy: num(4)?,
            };
            log.push(row).map_err(|e| err(e.to_string()))?;
        }
        Ok(log)
    }

    /// Two stacked line charts (loss, accuracy), each with a train and a validation series.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const CHART_H: f64 = 240.0;
        const PAD: f64 = 48.0;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            2.0 * CHART_H + 40.0
        );
        let epochs: Vec<f64> = self.rows.iter().map(|r| r.epoch as f64).collect();
        let charts: [(&str, Vec<f64>, Vec<f64>); 2] = [
            (
                "Training vs Validation loss",
                self.rows.iter().map(|r| r.train_loss).collect(),
                self.rows.iter().map(|r| r.val_loss).collect(),
            ),
            (
                "Training vs Validation accuracy",
                self.rows.iter().map(|r| r.train_accuracy).collect(),
                self.rows.iter().map(|r| r.val_accuracy).collect(),
            ),
        ];
        let (x_lo, x_hi) = span(&epochs);
        for (c, (title, train, val)) in charts.iter().enumerate() {
            let top = 20.0 + c as f64 * (CHART_H + 20.0);
            let (y_lo, y_hi) = span(&train.iter().chain(val).copied().collect::<Vec<_>>());
            let px = |x: f64| PAD + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * PAD);
            let py = |y: f64| top + CHART_H - PAD + -(y - y_lo) / (y_hi - y_lo) * (CHART_H - 2.0 * PAD);
            let _ = writeln!(svg, "<g class=\"chart\">");
            let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{title}</text>", W / 2.0, top + 14.0);
            let _ = writeln!(
                svg,
                "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{PAD}\" y1=\"{}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>",
                W - PAD,
                top + PAD,
                b = top + CHART_H - PAD
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-size=\"10\">{y_hi:.3}</text><text x=\"4\" y=\"{}\" font-size=\"10\">{y_lo:.3}</text>",
                4.0,
                top + PAD,
                top + CHART_H - PAD
            );
            for (series, colour, values) in [("train", "#1f77b4", train), ("validation", "#d62728", val)] {
                let points: Vec<String> = epochs
                    .iter()
                    .zip(values.iter())
                    .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
                let _ = writeln!(
                    svg,
                    "<polyline class=\"{series}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>",
                    points.join(" ")
                );
            }
            let _ = writeln!(
                svg,
                "<text x=\"{x}\" y=\"{y}\" fill=\"#1f77b4\">train</text><text x=\"{x}\" y=\"{}\" fill=\"#d62728\">validation</text>",
                top + PAD + 14.0,
                x = W - PAD - 70.0,
                y = top + PAD
            );
            let _ = writeln!(svg, "</g>");
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn span(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

pub fn export_curves(log: &MetricsLog, path: impl AsRef<Path>, format: CurveFormat) -> Result<()> {
    ensure!(!log.is_empty(), "cannot export an empty metrics log");
    let path = path.as_ref();
    let body = match format {
        CurveFormat::Csv => log.to_csv(),
        CurveFormat::Svg => log.to_svg(),
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(epoch: usize, x: f64) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_loss: x,
            val_loss: x * 1.5,
            train_accuracy: x.fract(),
            val_accuracy: (x / 3.0).fract(),
        }
    }

    #[test]
    fn one_epoch_csv_has_two_lines() {
        let mut log = MetricsLog::new();
        log.push(row(1, 0.25)).unwrap();
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert_eq!(csv.lines().nth(1), Some("1,0.250000,0.375000,0.250000,0.083333"));
    }

    #[test]
    fn svg_has_two_series_per_chart() {
        let mut log = MetricsLog::new();
        for e in 1..=4 {
            log.push(row(e, 1.0 / e as f64)).unwrap();
        }
        let svg = log.to_svg();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let charts: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("chart")).collect();
        assert_eq!(charts.len(), 2);
        for chart in charts {
            let lines: Vec<_> = chart.children().filter(|n| n.has_tag_name("polyline")).collect();
            assert_eq!(lines.len(), 2);
            assert!(lines.iter().all(|l| l.attribute("points").unwrap().split(' ').count() == 4));
        }
    }

    #[test]
    fn push_enforces_invariants() {
        let mut log = MetricsLog::new();
        log.push(row(2, 0.1)).unwrap();
        assert!(log.push(row(2, 0.1)).is_err());
        assert!(log
            .push(EpochMetrics {
                val_accuracy: 1.5,
                ..row(3, 0.1)
            })
            .is_err());
        assert!(export_curves(&MetricsLog::new(), "/nonexistent/x.csv", CurveFormat::Csv).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_at_six_decimals(values in prop::collection::vec((0.0f64..10.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..20)) {
            let mut log = MetricsLog::new();
            for (i, (loss, a, b)) in values.iter().enumerate() {
                log.push(EpochMetrics { epoch: i + 1, train_loss: *loss, val_loss: loss / 2.0, train_accuracy: *a, val_accuracy: *b }).unwrap();
            }
            let back = MetricsLog::parse_csv(&log.to_csv()).unwrap();
            prop_assert_eq!(back.len(), log.len());
            for (x, y) in log.rows().iter().zip(back.rows()) {
                prop_assert_eq!(x.epoch, y.epoch);
                for (p, q) in [(x.train_loss, y.train_loss), (x.val_loss, y.val_loss), (x.train_accuracy, y.train_accuracy), (x.val_accuracy, y.val_accuracy)] {
                    prop_assert_eq!(format!("{p:.6}"), format!("{q:.6}"));
                }
            }
            prop_assert_eq!(MetricsLog::parse_csv(&back.to_csv()).unwrap(), back);
        }
    }
}
