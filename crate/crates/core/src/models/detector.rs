//! S×S grid single-shot detection: target encoding, the three-part loss,
//! IoU and non-maximum suppression.
//!
//! Each grid cell holds `B` boxes of `(x offset, y offset, √w, √h, confidence)`
//! followed by `C` class scores. A box belongs to the cell containing its
//! centre; offsets are relative to that cell and sizes are stored as square
//! roots so that errors on small boxes weigh more.

use serde::{Deserialize, Serialize};

use crate::dataset::YoloAnnotation;
use crate::error::{ensure, Result};
use crate::tensor::{l2_penalty, Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Grid side S.
    pub grid: usize,
    /// Boxes per cell B.
    pub boxes: usize,
    /// Class count C.
    pub classes: usize,
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
    pub weight_decay: f64,
}

impl DetectorConfig {
    pub fn new(classes: usize) -> Self {
        DetectorConfig {
            grid: 3,
            boxes: 1,
            classes,
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.grid >= 1 && self.boxes >= 1 && self.classes >= 1,
            "detector needs S, B, C >= 1, got S={} B={} C={}",
            self.grid,
            self.boxes,
            self.classes
        );
        ensure!(
            self.lambda_coord >= 0.0 && self.lambda_noobj >= 0.0 && self.weight_decay >= 0.0,
            "loss weights must be nonnegative"
        );
        Ok(())
    }

    /// Values per cell: `5·B + C`.
    pub fn cell_len(&self) -> usize {
        5 * self.boxes + self.classes
    }

    pub fn grid_shape(&self) -> [usize; 3] {
        [self.grid, self.grid, self.cell_len()]
    }

    fn check_grid(&self, t: &Tensor, what: &str) -> Result<()> {
        let expected = self.grid_shape();
        ensure!(
            t.shape() == expected || (t.rank() == 1 && t.len() == expected.iter().product::<usize>()),
            "{what} grid shape {:?} does not match S×S×(5B+C) = {expected:?}",
            t.shape()
        );
        Ok(())
    }

    fn at(&self, row: usize, col: usize, k: usize) -> usize {
        (row * self.grid + col) * self.cell_len() + k
    }
}

/// Normalised `(cx, cy, w, h)` box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        NormBox {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }
}

impl From<&YoloAnnotation> for NormBox {
    fn from(a: &YoloAnnotation) -> Self {
        NormBox {
            cx: a.cx,
            cy: a.cy,
            w: a.w,
            h: a.h,
        }
    }
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &NormBox, b: &NormBox) -> f64 {
    let [ax0, ay0, ax1, ay1] = a.corners();
    let [bx0, by0, bx1, by1] = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let area_a = (ax1 - ax0).max(0.0) * (ay1 - ay0).max(0.0);
    let area_b = (bx1 - bx0).max(0.0) * (by1 - by0).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn responsible_cell(v: f64, grid: usize) -> usize {
    ((v * grid as f64).floor().max(0.0) as usize).min(grid - 1)
}

/// Builds the target grid. The cell containing a box centre gets confidence 1,
/// cell-relative offsets, root sizes and a one-hot class in box slot 0; a later
/// annotation replaces an earlier one in the same cell.
pub fn encode_targets(anns: &[YoloAnnotation], cfg: &DetectorConfig) -> Result<Tensor> {
    cfg.validate()?;
    let mut grid = Tensor::zeros(&cfg.grid_shape());
    let s = cfg.grid as f64;
    for a in anns {
        ensure!(
            a.class_id < cfg.classes,
            "class {} out of range for {} classes",
            a.class_id,
            cfg.classes
        );
        let row = responsible_cell(a.cy, cfg.grid);
        let col = responsible_cell(a.cx, cfg.grid);
        let base = cfg.at(row, col, 0);
        let cell = &mut grid.data_mut()[base..base + cfg.cell_len()];
        cell.fill(0.0);
        cell[0] = a.cx * s - col as f64;
        cell[1] = a.cy * s - row as f64;
        cell[2] = a.w.sqrt();
        cell[3] = a.h.sqrt();
        cell[4] = 1.0;
        cell[5 * cfg.boxes + a.class_id] = 1.0;
    }
    Ok(grid)
}

/// Inverse of [`encode_targets`]: one annotation per cell with confidence 1, row-major.
pub fn decode_targets(grid: &Tensor, cfg: &DetectorConfig) -> Result<Vec<YoloAnnotation>> {
    cfg.check_grid(grid, "target")?;
    let s = cfg.grid as f64;
    let d = grid.data();
    let mut out = Vec::new();
    for row in 0..cfg.grid {
        for col in 0..cfg.grid {
            let cell = &d[cfg.at(row, col, 0)..cfg.at(row, col, cfg.cell_len())];
            if cell[4] != 1.0 {
                continue;
            }
            let class_scores = Tensor::from_vec(cell[5 * cfg.boxes..].to_vec());
            out.push(YoloAnnotation {
                class_id: class_scores.argmax(),
                cx: (col as f64 + cell[0]) / s,
                cy: (row as f64 + cell[1]) / s,
                w: cell[2] * cell[2],
                h: cell[3] * cell[3],
            });
        }
    }
    Ok(out)
}

/// One scored box produced by the detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: NormBox,
    pub class_id: usize,
    pub score: f64,
}

/// Every predicted box, scored by its confidence clamped to `[0, 1]` and
/// labelled with the cell's highest class score.
pub fn decode_predictions(pred: &Tensor, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    cfg.check_grid(pred, "prediction")?;
    let s = cfg.grid as f64;
    let d = pred.data();
    let mut out = Vec::new();
    for row in 0..cfg.grid {
        for col in 0..cfg.grid {
            let cell = &d[cfg.at(row, col, 0)..cfg.at(row, col, cfg.cell_len())];
            let class_id = Tensor::from_vec(cell[5 * cfg.boxes..].to_vec()).argmax();
            for b in 0..cfg.boxes {
                let v = &cell[5 * b..5 * b + 5];
                out.push(Detection {
                    bbox: NormBox {
                        cx: (col as f64 + v[0]) / s,
                        cy: (row as f64 + v[1]) / s,
                        w: v[2] * v[2],
                        h: v[3] * v[3],
                    },
                    class_id,
                    score: v[4].clamp(0.0, 1.0),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DetectorLoss {
    pub total: f64,
    pub localization: f64,
    pub confidence: f64,
    pub classification: f64,
    pub regularization: f64,
}

/// Loss components plus the gradient of `total − regularization` w.r.t. `pred`.
///
/// The regularization gradient (`2·weight_decay·w`) is left to the optimizer.
pub fn detector_loss_grad(
    pred: &Tensor,
    target: &Tensor,
    cfg: &DetectorConfig,
    params: &[Param],
) -> Result<(DetectorLoss, Tensor)> {
    cfg.validate()?;
    cfg.check_grid(pred, "prediction")?;
    cfg.check_grid(target, "target")?;
    let s = cfg.grid as f64;
    let p = pred.data();
    let t = target.data();
    let mut grad = vec![0.0; p.len()];
    let mut loss = DetectorLoss::default();

    for row in 0..cfg.grid {
        for col in 0..cfg.grid {
            let base = cfg.at(row, col, 0);
            let has_object = t[base + 4] == 1.0;
            let responsible = if has_object {
                let truth = NormBox {
                    cx: (col as f64 + t[base]) / s,
                    cy: (row as f64 + t[base + 1]) / s,
                    w: t[base + 2] * t[base + 2],
                    h: t[base + 3] * t[base + 3],
                };
                let mut best = (0, f64::NEG_INFINITY);
                for b in 0..cfg.boxes {
                    let v = &p[base + 5 * b..base + 5 * b + 4];
                    let guess = NormBox {
                        cx: (col as f64 + v[0]) / s,
                        cy: (row as f64 + v[1]) / s,
                        w: v[2] * v[2],
                        h: v[3] * v[3],
                    };
                    let overlap = iou(&guess, &truth);
                    if overlap > best.1 {
                        best = (b, overlap);
                    }
                }
                Some(best.0)
            } else {
                None
            };

            for b in 0..cfg.boxes {
                let o = base + 5 * b;
                if Some(b) == responsible {
                    for k in 0..4 {
                        let diff = p[o + k] - t[base + k];
                        loss.localization += cfg.lambda_coord * diff * diff;
                        grad[o + k] = 2.0 * cfg.lambda_coord * diff;
                    }
                    let diff = p[o + 4] - 1.0;
                    loss.confidence += diff * diff;
                    grad[o + 4] = 2.0 * diff;
                } else {
                    let c = p[o + 4];
                    loss.confidence += cfg.lambda_noobj * c * c;
                    grad[o + 4] = 2.0 * cfg.lambda_noobj * c;
                }
            }
            if has_object {
                for k in 5 * cfg.boxes..cfg.cell_len() {
                    let diff = p[base + k] - t[base + k];
                    loss.classification += diff * diff;
                    grad[base + k] = 2.0 * diff;
                }
            }
        }
    }
    loss.regularization = l2_penalty(params, cfg.weight_decay);
    loss.total = loss.localization + loss.confidence + loss.classification + loss.regularization;
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Localization, confidence, classification and regularization losses.
pub fn detector_loss(pred: &Tensor, target: &Tensor, cfg: &DetectorConfig, params: &[Param]) -> Result<DetectorLoss> {
    detector_loss_grad(pred, target, cfg, params).map(|(l, _)| l)
}

/// Per-class greedy suppression. Output is ordered by descending score, with
/// input order breaking ties; a box is dropped when its IoU with an already
/// kept box of the same class exceeds `iou_threshold`.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = detections[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ParamKind;

    fn ann(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> YoloAnnotation {
        YoloAnnotation { class_id, cx, cy, w, h }
    }

    #[test]
    fn encode_examples() {
        let cfg = DetectorConfig::new(2);
        let g = encode_targets(&[ann(1, 0.5, 0.5, 0.2, 0.4)], &cfg).unwrap();
        let at = |r, c, k| g.data()[cfg.at(r, c, k)];
        assert_eq!((at(1, 1, 0), at(1, 1, 1)), (0.5, 0.5));
        assert_eq!(at(1, 1, 4), 1.0);
        assert_eq!((at(1, 1, 5), at(1, 1, 6)), (0.0, 1.0));
        assert!((at(1, 1, 2) - 0.2f64.sqrt()).abs() < 1e-15);

        let g = encode_targets(&[ann(0, 0.0, 0.0, 0.1, 0.1)], &cfg).unwrap();
        assert_eq!(g.data()[cfg.at(0, 0, 4)], 1.0);
        assert_eq!((g.data()[cfg.at(0, 0, 0)], g.data()[cfg.at(0, 0, 1)]), (0.0, 0.0));

        let g = encode_targets(&[ann(0, 1.0, 1.0, 0.1, 0.1)], &cfg).unwrap();
        assert_eq!(g.data()[cfg.at(2, 2, 4)], 1.0);
        assert_eq!(g.data()[cfg.at(2, 2, 0)], 1.0);

        assert!(encode_targets(&[ann(2, 0.5, 0.5, 0.1, 0.1)], &cfg).is_err());
    }

    #[test]
    fn later_annotation_wins_a_cell() {
        let cfg = DetectorConfig::new(3);
        let g = encode_targets(&[ann(0, 0.5, 0.5, 0.2, 0.2), ann(2, 0.45, 0.55, 0.1, 0.3)], &cfg).unwrap();
        let back = decode_targets(&g, &cfg).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].class_id, 2);
        assert_eq!(g.data()[cfg.at(1, 1, 5)], 0.0);
    }

    #[test]
    fn iou_examples() {
        let a = NormBox { cx: 0.5, cy: 0.5, w: 0.2, h: 0.2 };
        assert_eq!(iou(&a, &a), 1.0);
        let far = NormBox { cx: 0.9, cy: 0.9, w: 0.1, h: 0.1 };
        assert_eq!(iou(&a, &far), 0.0);
        let p = |x0: f64, y0: f64, x1: f64, y1: f64| NormBox::from_corners(x0, y0, x1, y1);
        assert!((iou(&p(0., 0., 2., 2.), &p(1., 0., 3., 2.)) - 1.0 / 3.0).abs() < 1e-15);
        let zero = NormBox { cx: 0.5, cy: 0.5, w: 0.0, h: 0.0 };
        assert_eq!(iou(&zero, &zero), 0.0);
    }

    #[test]
    fn loss_examples() {
        let cfg = DetectorConfig {
            weight_decay: 0.3,
            ..DetectorConfig::new(3)
        };
        let t = encode_targets(&[ann(1, 0.5, 0.5, 0.2, 0.2), ann(0, 0.1, 0.9, 0.1, 0.1)], &cfg).unwrap();
        let zero_w = vec![Param::new("w", ParamKind::Weight, Tensor::zeros(&[4]))];
        let l = detector_loss(&t, &t, &cfg, &zero_w).unwrap();
        assert_eq!(l, DetectorLoss::default());

        let mut p = t.clone();
        p.data_mut()[cfg.at(1, 1, 0)] += 0.1;
        let l = detector_loss(&p, &t, &DetectorConfig::new(3), &[]).unwrap();
        assert!((l.localization - 0.05).abs() < 1e-12, "{l:?}");
        assert_eq!((l.confidence, l.classification), (0.0, 0.0));
        assert!((l.total - 0.05).abs() < 1e-12);

        let w = vec![Param::new("w", ParamKind::Weight, Tensor::from_vec(vec![1., 2.]))];
        assert!((detector_loss(&t, &t, &cfg, &w).unwrap().regularization - 1.5).abs() < 1e-12);
        assert!(detector_loss(&Tensor::zeros(&[2, 2, 8]), &t, &cfg, &[]).is_err());
    }

    #[test]
    fn noobj_and_multi_box_responsibility() {
        let cfg = DetectorConfig {
            boxes: 2,
            ..DetectorConfig::new(1)
        };
        let t = encode_targets(&[ann(0, 0.5, 0.5, 0.3, 0.3)], &cfg).unwrap();
        let mut p = t.clone();
        // slot 1 of the responsible cell overlaps better than slot 0
        let base = cfg.at(1, 1, 0);
        p.data_mut()[base] = 0.1;
        p.data_mut()[base + 5..base + 10].copy_from_slice(&[0.5, 0.5, 0.3f64.sqrt(), 0.3f64.sqrt(), 0.7]);
        let (l, g) = detector_loss_grad(&p, &t, &cfg, &[]).unwrap();
        // slot 1 responsible: conf (0.7-1)^2, slot 0 noobj with conf 1: 0.5·1
        assert!((l.confidence - (0.09 + 0.5)).abs() < 1e-12, "{l:?}");
        assert_eq!(l.localization, 0.0);
        assert_eq!(g.data()[base], 0.0);
        assert!((g.data()[base + 4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nms_examples() {
        let d = |cx, class_id, score| Detection {
            bbox: NormBox { cx, cy: 0.5, w: 0.2, h: 0.2 },
            class_id,
            score,
        };
        // widths 0.2 with shift 0.05: IoU = 0.15/0.25 = 0.6
        let kept = nms(&[d(0.5, 0, 0.8), d(0.55, 0, 0.9)], 0.5);
        assert_eq!(kept, vec![d(0.55, 0, 0.9)]);
        let kept = nms(&[d(0.2, 0, 0.3), d(0.8, 0, 0.9)], 0.5);
        assert_eq!(kept, vec![d(0.8, 0, 0.9), d(0.2, 0, 0.3)]);
        let kept = nms(&[d(0.5, 0, 0.5), d(0.5, 1, 0.5)], 0.5);
        assert_eq!(kept, vec![d(0.5, 0, 0.5), d(0.5, 1, 0.5)]);
    }

    #[test]
    fn decode_predictions_scores() {
        let cfg = DetectorConfig::new(2);
        let mut p = encode_targets(&[ann(1, 0.5, 0.5, 0.25, 0.36)], &cfg).unwrap();
        p.data_mut()[cfg.at(0, 0, 4)] = 1.7;
        let dets = decode_predictions(&p, &cfg).unwrap();
        assert_eq!(dets.len(), 9);
        assert_eq!(dets[0].score, 1.0);
        let best = dets[4];
        assert_eq!(best.class_id, 1);
        assert!((best.bbox.w - 0.25).abs() < 1e-12 && (best.bbox.h - 0.36).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let cfg = DetectorConfig {
            grid: 2,
            ..DetectorConfig::new(3)
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = encode_targets(&[ann(2, 0.3, 0.2, 0.3, 0.4), ann(0, 0.8, 0.7, 0.2, 0.1)], &cfg).unwrap();
        let data: Vec<f64> = (0..t.len()).map(|_| rng.random_range(0.05..0.95)).collect();
        let p = Tensor::new(t.shape().to_vec(), data).unwrap();
        let (_, g) = detector_loss_grad(&p, &t, &cfg, &[]).unwrap();
        let eps = 1e-5;
        for i in 0..p.len() {
            let mut hi = p.clone();
            hi.data_mut()[i] += eps;
            let mut lo = p.clone();
            lo.data_mut()[i] -= eps;
            let numeric = (detector_loss(&hi, &t, &cfg, &[]).unwrap().total
                - detector_loss(&lo, &t, &cfg, &[]).unwrap().total)
                / (2.0 * eps);
            let err = crate::tensor::relative_error(g.data()[i], numeric);
            assert!(err <= 1e-6, "entry {i}: {} vs {numeric}", g.data()[i]);
        }
    }
}
