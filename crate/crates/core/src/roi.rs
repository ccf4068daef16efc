//! Detection boxes, Soft-NMS score decay and fusion of per-box depth
//! fragments into one reference-frame depth map.

use thiserror::Error;

use crate::raster::PixelRect;
use crate::sgm::DepthMap;

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("box ({x0},{y0})-({x1},{y1}) is degenerate")]
    DegenerateBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("fragment {frag_w}x{frag_h} does not match the {rect_w}x{rect_h} pixel extent of its box")]
    FragmentMismatch {
        frag_w: usize,
        frag_h: usize,
        rect_w: usize,
        rect_h: usize,
    },
}

/// Axis-aligned detection with a confidence score. Coordinates are pixels,
/// max-exclusive in spirit (`x0 < x1`, `y0 < y1`).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub score: f64,
    pub label: String,
}

impl DetectionBox {
    pub fn new(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        score: f64,
        label: impl Into<String>,
    ) -> Result<Self, RoiError> {
        if !(x0 < x1 && y0 < y1) {
            return Err(RoiError::DegenerateBox { x0, y0, x1, y1 });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(RoiError::InvalidScore(score));
        }
        Ok(Self {
            x0,
            y0,
            x1,
            y1,
            score,
            label: label.into(),
        })
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Integer pixel extent: rounded outward and clamped to the frame.
    /// `None` when nothing of the box remains inside.
    pub fn pixel_rect(&self, width: usize, height: usize) -> Option<PixelRect> {
        let x0 = self.x0.floor().max(0.0) as usize;
        let y0 = self.y0.floor().max(0.0) as usize;
        let x1 = (self.x1.ceil().max(0.0) as usize).min(width);
        let y1 = (self.y1.ceil().max(0.0) as usize).min(height);
        PixelRect::new(x0, y0, x1, y1).ok()
    }

    /// Box with coordinates multiplied per axis and rounded outward.
    pub fn scaled_outward(&self, sx: f64, sy: f64) -> DetectionBox {
        DetectionBox {
            x0: (self.x0 * sx).floor(),
            y0: (self.y0 * sy).floor(),
            x1: (self.x1 * sx).ceil(),
            y1: (self.y1 * sy).ceil(),
            score: self.score,
            label: self.label.clone(),
        }
    }
}

/// Intersection area over union area.
pub fn iou(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Score decay applied to boxes overlapping the current maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayKind {
    /// `score *= 1 - iou` at or above the overlap threshold.
    Linear,
    /// Score zeroed at or above the threshold; reproduces classic NMS.
    Rectangular,
}

/// Soft non-maximum suppression with linear decay: greedily select the
/// highest-score remaining box, decay every other remaining box that
/// overlaps it by at least `overlap_threshold`, repeat; finally drop boxes
/// whose decayed score fell below `score_cutoff`. Output is sorted by final
/// score, ties stable by input order. Geometry is never modified.
pub fn soft_nms(
    boxes: &[DetectionBox],
    overlap_threshold: f64,
    score_cutoff: f64,
) -> Vec<DetectionBox> {
    soft_nms_with_decay(boxes, overlap_threshold, score_cutoff, DecayKind::Linear)
}

pub fn soft_nms_with_decay(
    boxes: &[DetectionBox],
    overlap_threshold: f64,
    score_cutoff: f64,
    decay: DecayKind,
) -> Vec<DetectionBox> {
    // (input order, box) pairs; scores decay in place
    let mut remaining: Vec<(usize, DetectionBox)> =
        boxes.iter().cloned().enumerate().collect();
    let mut selected: Vec<(usize, DetectionBox)> = Vec::with_capacity(remaining.len());

    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if remaining[i].1.score > remaining[best].1.score {
                best = i;
            }
        }
        let max_box = remaining.remove(best);
        for (_, other) in remaining.iter_mut() {
            let overlap = iou(&max_box.1, other);
            if overlap >= overlap_threshold {
                match decay {
                    DecayKind::Linear => other.score *= 1.0 - overlap,
                    DecayKind::Rectangular => other.score = 0.0,
                }
            }
        }
        selected.push(max_box);
    }

    selected.retain(|(_, b)| b.score >= score_cutoff);
    // selection order is already score-descending except where decays
    // produced ties; make the order explicit and input-stable
    selected.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
    selected.into_iter().map(|(_, b)| b).collect()
}

/// Fuse per-box depth fragments into one full-size depth map. Pixels
/// outside every box stay invalid; in overlaps the fragment of the
/// higher-score box wins, ties going to the earlier entry.
pub fn fuse_selective_depth(
    rois: &[(DetectionBox, DepthMap)],
    width: usize,
    height: usize,
) -> Result<DepthMap, RoiError> {
    let mut order: Vec<usize> = (0..rois.len()).collect();
    order.sort_by(|&a, &b| {
        rois[b]
            .0
            .score
            .partial_cmp(&rois[a].0.score)
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut out = DepthMap::new_invalid(width, height);
    let mut written = vec![false; width * height];
    for i in order {
        let (bx, fragment) = &rois[i];
        let rect = bx
            .pixel_rect(width, height)
            .ok_or(RoiError::DegenerateBox {
                x0: bx.x0,
                y0: bx.y0,
                x1: bx.x1,
                y1: bx.y1,
            })?;
        if fragment.width() != rect.width() || fragment.height() != rect.height() {
            return Err(RoiError::FragmentMismatch {
                frag_w: fragment.width(),
                frag_h: fragment.height(),
                rect_w: rect.width(),
                rect_h: rect.height(),
            });
        }
        for fy in 0..rect.height() {
            for fx in 0..rect.width() {
                let (x, y) = (rect.x0 + fx, rect.y0 + fy);
                if !written[y * width + x] {
                    written[y * width + x] = true;
                    out.set(x, y, fragment.raw(fx, fy));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64, score: f64) -> DetectionBox {
        DetectionBox::new(x0, y0, x1, y1, score, "building").unwrap()
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.5);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.5);
        let b = bx(5.0, 5.0, 6.0, 6.0, 0.5);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_offset_unit_squares() {
        // intersection 0.5, union 1.5
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.5);
        let b = bx(0.5, 0.0, 1.5, 1.0, 0.5);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn soft_nms_disjoint_boxes_unchanged() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.9);
        let b = bx(5.0, 0.0, 6.0, 1.0, 0.8);
        let out = soft_nms(&[a.clone(), b.clone()], 0.3, 0.0);
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn soft_nms_identical_boxes_second_decays_to_zero() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.9);
        let b = bx(0.0, 0.0, 1.0, 1.0, 0.8);
        let out = soft_nms(&[a.clone(), b], 0.3, 0.01);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn soft_nms_linear_decay_at_half_iou() {
        // two boxes with IoU exactly 0.5: widths 1 and 2 sharing one unit
        let a = bx(0.0, 0.0, 2.0, 1.0, 0.8);
        let m = bx(0.0, 0.0, 1.0, 1.0, 0.9);
        assert_eq!(iou(&m, &a), 0.5);
        let out = soft_nms(&[m.clone(), a], 0.3, 0.0);
        assert_eq!(out[0], m);
        assert!((out[1].score - 0.8 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn soft_nms_below_threshold_untouched() {
        let a = bx(0.0, 0.0, 2.0, 1.0, 0.8);
        let m = bx(0.0, 0.0, 1.0, 1.0, 0.9);
        let out = soft_nms(&[m, a.clone()], 0.6, 0.0);
        assert_eq!(out[1].score, a.score);
    }

    #[test]
    fn soft_nms_empty_input() {
        assert!(soft_nms(&[], 0.3, 0.8).is_empty());
    }

    #[test]
    fn soft_nms_top_box_keeps_its_score_and_no_geometry_changes() {
        let boxes = vec![
            bx(0.0, 0.0, 4.0, 4.0, 0.7),
            bx(1.0, 1.0, 5.0, 5.0, 0.95),
            bx(2.0, 0.0, 6.0, 4.0, 0.8),
        ];
        let out = soft_nms(&boxes, 0.1, 0.0);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].score, 0.95);
        for b in &out {
            assert!(boxes
                .iter()
                .any(|i| (i.x0, i.y0, i.x1, i.y1) == (b.x0, b.y0, b.x1, b.y1)));
            assert!(b.score <= boxes.iter().map(|i| i.score).fold(0.0, f64::max));
        }
    }

    #[test]
    fn soft_nms_threshold_one_is_identity_when_ious_below_one() {
        let boxes = vec![
            bx(0.0, 0.0, 4.0, 4.0, 0.7),
            bx(1.0, 1.0, 5.0, 5.0, 0.95),
        ];
        let out = soft_nms(&boxes, 1.0, 0.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].score, 0.95);
        assert_eq!(out[1].score, 0.7);
    }

    /// Classic greedy NMS, written independently as the oracle.
    fn classic_nms(boxes: &[DetectionBox], threshold: f64) -> Vec<DetectionBox> {
        let mut rest: Vec<DetectionBox> = boxes.to_vec();
        let mut kept = Vec::new();
        while !rest.is_empty() {
            let mut best = 0;
            for i in 1..rest.len() {
                if rest[i].score > rest[best].score {
                    best = i;
                }
            }
            let m = rest.remove(best);
            rest.retain(|b| iou(&m, b) < threshold);
            kept.push(m);
        }
        kept
    }

    #[test]
    fn rectangular_decay_reproduces_classic_nms() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.gen_range(1..12);
            let boxes: Vec<DetectionBox> = (0..n)
                .map(|_| {
                    let x0 = rng.gen::<f64>() * 50.0;
                    let y0 = rng.gen::<f64>() * 50.0;
                    bx(
                        x0,
                        y0,
                        x0 + 2.0 + rng.gen::<f64>() * 20.0,
                        y0 + 2.0 + rng.gen::<f64>() * 20.0,
                        (rng.gen::<f64>() * 0.98 + 0.01).min(1.0),
                    )
                })
                .collect();
            let got = soft_nms_with_decay(&boxes, 0.3, 0.005, DecayKind::Rectangular);
            let expected = classic_nms(&boxes, 0.3);
            let key = |b: &DetectionBox| (b.x0, b.y0, b.x1, b.y1);
            assert_eq!(
                got.iter().map(key).collect::<Vec<_>>(),
                expected.iter().map(key).collect::<Vec<_>>()
            );
        }
    }

    fn constant_fragment(w: usize, h: usize, depth: f32) -> DepthMap {
        let mut d = DepthMap::new_invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                d.set(x, y, depth);
            }
        }
        d
    }

    #[test]
    fn fuse_single_full_frame_box() {
        let b = bx(0.0, 0.0, 8.0, 6.0, 0.9);
        let frag = constant_fragment(8, 6, 3.0);
        let out = fuse_selective_depth(&[(b, frag.clone())], 8, 6).unwrap();
        assert_eq!(out, frag);
    }

    #[test]
    fn fuse_disjoint_boxes_union() {
        let a = bx(0.0, 0.0, 3.0, 3.0, 0.9);
        let b = bx(5.0, 3.0, 8.0, 6.0, 0.8);
        let out = fuse_selective_depth(
            &[
                (a, constant_fragment(3, 3, 2.0)),
                (b, constant_fragment(3, 3, 4.0)),
            ],
            8,
            6,
        )
        .unwrap();
        assert_eq!(out.get(1, 1), Some(2.0));
        assert_eq!(out.get(6, 4), Some(4.0));
        assert_eq!(out.get(4, 1), None);
    }

    #[test]
    fn fuse_overlap_higher_score_wins() {
        let hi = bx(0.0, 0.0, 4.0, 4.0, 0.9);
        let lo = bx(2.0, 0.0, 6.0, 4.0, 0.7);
        let out = fuse_selective_depth(
            &[
                (lo, constant_fragment(4, 4, 9.0)),
                (hi, constant_fragment(4, 4, 5.0)),
            ],
            8,
            4,
        )
        .unwrap();
        // overlap columns 2..4 read the high-score depth
        assert_eq!(out.get(2, 1), Some(5.0));
        assert_eq!(out.get(3, 2), Some(5.0));
        assert_eq!(out.get(4, 2), Some(9.0));
    }

    #[test]
    fn fuse_idempotent_over_duplicates() {
        let b = bx(1.0, 1.0, 4.0, 4.0, 0.9);
        let frag = constant_fragment(3, 3, 7.0);
        let once = fuse_selective_depth(&[(b.clone(), frag.clone())], 6, 6).unwrap();
        let twice = fuse_selective_depth(&[(b.clone(), frag.clone()), (b, frag)], 6, 6).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn fuse_rejects_mismatched_fragment() {
        let b = bx(0.0, 0.0, 4.0, 4.0, 0.9);
        let frag = constant_fragment(3, 4, 1.0);
        assert!(matches!(
            fuse_selective_depth(&[(b, frag)], 8, 8),
            Err(RoiError::FragmentMismatch { .. })
        ));
    }

    #[test]
    fn box_validation() {
        assert!(DetectionBox::new(0.0, 0.0, 0.0, 1.0, 0.5, "b").is_err());
        assert!(DetectionBox::new(0.0, 0.0, 1.0, 1.0, 1.5, "b").is_err());
        assert!(DetectionBox::new(3.0, 1.0, 1.0, 2.0, 0.5, "b").is_err());
    }

    #[test]
    fn pixel_rect_rounds_outward_and_clamps() {
        let b = bx(1.2, 2.8, 4.1, 5.0, 0.5);
        let r = b.pixel_rect(100, 100).unwrap();
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (1, 2, 5, 5));
        let b = bx(-3.0, -2.0, 2.5, 3.5, 0.5);
        let r = b.pixel_rect(100, 100).unwrap();
        assert_eq!((r.x0, r.y0, r.x1, r.y1), (0, 0, 3, 4));
        let b = bx(150.0, 0.0, 160.0, 10.0, 0.5);
        assert!(b.pixel_rect(100, 100).is_none());
    }
}
