use super::{BinaryMask, EpeMap, FlowField};
use crate::error::{ensure_same_size, Error, Result};

/// Outlier thresholds of the Fl-all metric: absolute (px) and relative.
const FL_ABS_PX: f64 = 3.0;
const FL_REL: f64 = 0.05;

pub fn epe_map(pred: &FlowField, gt: &FlowField) -> Result<EpeMap> {
    ensure_same_size("epe_map", pred.size(), gt.size())?;
    let (h, w) = pred.size();
    let n = h * w;
    let (p, g) = (pred.data(), gt.data());
    let data = (0..n).map(|i| (p[i] - g[i]).hypot(p[n + i] - g[n + i])).collect();
    EpeMap::new(h, w, data)
}

fn check_valid(pred: &FlowField, gt: &FlowField, valid: &BinaryMask) -> Result<()> {
    ensure_same_size("metric", pred.size(), gt.size())?;
    ensure_same_size("metric validity mask", pred.size(), valid.size())?;
    if valid.count() == 0 {
        return Err(Error::EmptyMask("no valid pixels to evaluate"));
    }
    Ok(())
}

/// Mean end-point error over pixels with `valid == 1`.
pub fn mean_epe(pred: &FlowField, gt: &FlowField, valid: &BinaryMask) -> Result<f64> {
    check_valid(pred, gt, valid)?;
    let epe = epe_map(pred, gt)?;
    let (sum, count) = epe
        .data()
        .iter()
        .zip(valid.data())
        .filter(|(_, &v)| v)
        .fold((0.0, 0usize), |(s, c), (e, _)| (s + e, c + 1));
    Ok(sum / count as f64)
}

/// Percentage of valid pixels whose EPE exceeds both 3 px and 5% of the
/// ground-truth magnitude.
pub fn fl_all(pred: &FlowField, gt: &FlowField, valid: &BinaryMask) -> Result<f64> {
    check_valid(pred, gt, valid)?;
    let epe = epe_map(pred, gt)?;
    let n = gt.height() * gt.width();
    let g = gt.data();
    let mut outliers = 0usize;
    let mut count = 0usize;
    for i in 0..n {
        if !valid.data()[i] {
            continue;
        }
        count += 1;
        let e = epe.data()[i];
        let mag = g[i].hypot(g[n + i]);
        if e > FL_ABS_PX && e > FL_REL * mag {
            outliers += 1;
        }
    }
    Ok(100.0 * outliers as f64 / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let pred = FlowField::uniform(8, 8, 3.0, 4.0);
        let gt = FlowField::zeros(8, 8);
        let epe = epe_map(&pred, &gt).unwrap();
        assert!(epe.data().iter().all(|&e| e == 5.0));
        assert_eq!(mean_epe(&pred, &gt, &BinaryMask::ones(8, 8)).unwrap(), 5.0);
        assert!(epe_map(&pred, &pred).unwrap().data().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn masked_mean_ignores_invalid_pixels() {
        let gt = FlowField::zeros(1, 2);
        let mut pred = FlowField::zeros(1, 2);
        pred.set(0, 1, 10.0, 0.0);
        let valid = BinaryMask::new(1, 2, vec![true, false]).unwrap();
        assert_eq!(mean_epe(&pred, &gt, &valid).unwrap(), 0.0);
    }

    #[test]
    fn empty_valid_mask_is_an_error() {
        let f = FlowField::zeros(4, 4);
        let none = BinaryMask::zeros(4, 4);
        assert!(matches!(mean_epe(&f, &f, &none), Err(Error::EmptyMask(_))));
        assert!(matches!(fl_all(&f, &f, &none), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn fl_all_outlier_rule() {
        let valid = BinaryMask::ones(4, 4);
        // |gt| = 100, epe = 4: above 3 px but below 5 px (5% of 100).
        let gt = FlowField::uniform(4, 4, 60.0, 80.0);
        let pred = FlowField::uniform(4, 4, 60.0, 84.0);
        assert_eq!(fl_all(&pred, &gt, &valid).unwrap(), 0.0);
        // |gt| = 10, epe = 4: above 3 px and above 0.5 px.
        let gt = FlowField::uniform(4, 4, 6.0, 8.0);
        let pred = FlowField::uniform(4, 4, 6.0, 12.0);
        assert_eq!(fl_all(&pred, &gt, &valid).unwrap(), 100.0);
        assert_eq!(fl_all(&gt, &gt, &valid).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(epe_map(&FlowField::zeros(4, 4), &FlowField::zeros(4, 5)).is_err());
    }
}
