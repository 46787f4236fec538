use super::HierarchyError;

/// Dynamic time warping cost between equal-length series.
///
/// Local cost is the squared difference; steps are match, insertion and
/// deletion. The warping path is confined to a Sakoe-Chiba band
/// `|i - j| <= band`; a band of 0 reduces to the squared Euclidean distance
/// and `band >= len` is unconstrained.
pub fn dtw_distance(a: &[f64], b: &[f64], band: usize) -> Result<f64, HierarchyError> {
    if a.len() != b.len() {
        return Err(HierarchyError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n == 0 {
        return Ok(0.0);
    }
    let band = band.min(n);
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut curr = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr.fill(f64::INFINITY);
        let lo = i.saturating_sub(band).max(1);
        let hi = (i + band).min(n);
        for j in lo..=hi {
            let d = a[i - 1] - b[j - 1];
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = d * d + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[n])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cost of every monotone warping path from (0,0) to (n-1,n-1).
    fn enumerate_min(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + (a[i] - b[j]).powi(2);
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best
    }

    #[test]
    fn identical_series_cost_zero() {
        let x = [0.3, -1.0, 2.0, 4.5];
        assert_eq!(dtw_distance(&x, &x, 1).unwrap(), 0.0);
    }

    #[test]
    fn matches_path_enumeration() {
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 0.0];
        let oracle = enumerate_min(&a, &b);
        assert_eq!(oracle, 0.0);
        assert_eq!(dtw_distance(&a, &b, 4).unwrap(), oracle);
        let a = [0.5, -1.0, 2.0, 0.25, 3.0];
        let b = [1.5, 0.0, -2.0, 1.25, 0.0];
        assert!((dtw_distance(&a, &b, 10).unwrap() - enumerate_min(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn band_zero_is_squared_euclidean() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(dtw_distance(&a, &b, 0).unwrap(), 5.0);
        assert!(dtw_distance(&a, &b, 5).unwrap() <= 5.0);
        assert_eq!(dtw_distance(&a, &b, 5).unwrap(), 2.0);
    }

    #[test]
    fn symmetric_and_rejects_length_mismatch() {
        let a = [0.1, 0.7, -0.3, 0.9, 1.1, 0.0];
        let b = [0.5, -0.2, 0.4, 0.3, -1.0, 2.0];
        assert_eq!(dtw_distance(&a, &b, 2).unwrap(), dtw_distance(&b, &a, 2).unwrap());
        assert!(dtw_distance(&a, &b[..5], 2).is_err());
    }
}
