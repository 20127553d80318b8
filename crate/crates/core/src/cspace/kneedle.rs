use crate::error::{Error, Result};

/// Kneedle knee detector for a concave, increasing curve.
///
/// Returns the index of the knee point. `x` must be strictly monotonic;
/// both axes are normalized to [0, 1] before forming the difference curve
/// `y - x`. A local maximum of the difference curve is a knee once the curve
/// later falls below `d_max - sensitivity * mean(dx)`.
pub fn kneedle(x: &[f64], y: &[f64], sensitivity: f64) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < 4 {
        return Err(Error::NoKnee(format!("{} points, need at least 4", x.len())));
    }
    let increasing = x.windows(2).all(|w| w[1] > w[0]);
    let decreasing = x.windows(2).all(|w| w[1] < w[0]);
    if !increasing && !decreasing {
        return Err(Error::NoKnee("x is not strictly monotonic".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    if decreasing {
        order.reverse();
    }
    let normalize = |v: &[f64]| -> Option<Vec<f64>> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo > 0.0).then(|| order.iter().map(|&i| (v[i] - lo) / (hi - lo)).collect())
    };
    let xn = normalize(x).ok_or_else(|| Error::NoKnee("x range is zero".into()))?;
    let yn = normalize(y).ok_or_else(|| Error::NoKnee("y range is zero".into()))?;
    let diff: Vec<f64> = xn.iter().zip(&yn).map(|(a, b)| b - a).collect();
    let spread = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max) - diff.iter().copied().fold(f64::INFINITY, f64::min);
    if spread < 1e-12 {
        return Err(Error::NoKnee("difference curve is flat".into()));
    }
    let step = xn.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (xn.len() - 1) as f64;
    let n = diff.len();
    let is_local_max = |i: usize| i > 0 && i + 1 < n && diff[i] >= diff[i - 1] && diff[i] > diff[i + 1];
    for i in (1..n - 1).filter(|&i| is_local_max(i)) {
        let threshold = diff[i] - sensitivity * step;
        for (j, &d) in diff.iter().enumerate().skip(i + 1) {
            if is_local_max(j) {
                break;
            }
            if d < threshold {
                return Ok(order[i]);
            }
        }
    }
    Err(Error::NoKnee("no local maximum of the difference curve qualifies".into()))
}

/// Knee of a `(resolution m, coverage %)` curve with sensitivity 1.
///
/// Resolutions enter as sample densities (1 / resolution), so the curve is
/// increasing and concave in cost.
pub fn select_resolution_kneedle(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.iter().any(|&(r, _)| !(r > 0.0)) {
        return Err(Error::InvalidParameter("resolutions must be > 0".into()));
    }
    let x: Vec<f64> = curve.iter().map(|&(r, _)| 1.0 / r).collect();
    let y: Vec<f64> = curve.iter().map(|&(_, c)| c).collect();
    Ok(curve[kneedle(&x, &y, 1.0)?].0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: [(f64, f64); 4] = [(0.5, 62.23), (0.25, 86.39), (0.1, 96.43), (0.025, 98.14)];

    #[test]
    fn resolution_table_knee() {
        assert_eq!(select_resolution_kneedle(&TABLE).unwrap(), 0.1);
        let mut rev = TABLE;
        rev.reverse();
        assert_eq!(select_resolution_kneedle(&rev).unwrap(), 0.1);
    }

    #[test]
    fn straight_line_has_no_knee() {
        let x: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
        assert!(matches!(kneedle(&x, &x, 1.0), Err(Error::NoKnee(_))));
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(select_resolution_kneedle(&TABLE[..3]), Err(Error::NoKnee(_))));
    }

    #[test]
    fn saturating_exponential() {
        // normalized difference (1 - e^{-5x}) / (1 - e^{-5}) - x peaks where
        // e^{-5x} = (1 - e^{-5}) / 5, i.e. x = 0.3233; nearest grid point 6/19
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - (-5.0 * v).exp()).collect();
        let analytic = -((1.0 - (-5f64).exp()) / 5.0).ln() / 5.0;
        assert!((analytic - 0.3233).abs() < 1e-4);
        let knee = x[kneedle(&x, &y, 1.0).unwrap()];
        assert!((knee - analytic).abs() <= 0.5 / 19.0, "{knee}");
    }
}
