use super::MetricError;
use crate::raster::{same_dims, BinaryMask};

/// IoU of two masks; an empty union scores 1.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricError> {
    same_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricError::TooFewSamples { need: 1, got: 0 });
    }
    Ok(())
}

/// Mean IoU of full (amodal) masks.
pub fn miou_full(gts: &[BinaryMask], preds: &[BinaryMask]) -> Result<f64, MetricError> {
    check_lengths(gts.len(), preds.len())?;
    let mut sum = 0.0;
    for (g, p) in gts.iter().zip(preds) {
        sum += mask_iou(g, p)?;
    }
    Ok(sum / gts.len() as f64)
}

/// Mean IoU restricted to occluded regions: both masks have the
/// ground-truth visible region removed before comparison.
pub fn miou_occ(gt_amodal: &[BinaryMask], gt_visible: &[BinaryMask], pred_amodal: &[BinaryMask]) -> Result<f64, MetricError> {
    check_lengths(gt_amodal.len(), gt_visible.len())?;
    check_lengths(gt_amodal.len(), pred_amodal.len())?;
    let mut sum = 0.0;
    for ((amodal, visible), pred) in gt_amodal.iter().zip(gt_visible).zip(pred_amodal) {
        let stray = visible.and_not(amodal)?.count();
        if stray > 0 {
            log::warn!("{stray} visible pixels lie outside the amodal mask; clipping");
        }
        let gt_occ = amodal.and_not(visible)?;
        let pred_occ = pred.and_not(visible)?;
        sum += mask_iou(&gt_occ, &pred_occ)?;
    }
    Ok(sum / gt_amodal.len() as f64)
}
