use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Six-number summary used for per-epoch signal features. Undefined
/// moments are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Unbiased (n - 1) variance; `None` for a single value.
    pub variance: Option<f64>,
    /// `m3 / m2^1.5`; `None` for n < 3 or zero spread.
    pub skewness: Option<f64>,
    /// `m4 / m2^2`; `None` for n < 4 or zero spread.
    pub kurtosis: Option<f64>,
}

pub fn sample_stats(values: &[f64]) -> Result<SampleStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("statistics of an empty sample".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let variance = (values.len() >= 2).then(|| m2 * n / (n - 1.0));
    let scale = min.abs().max(max.abs()).max(f64::MIN_POSITIVE);
    let degenerate = m2 <= f64::EPSILON * f64::EPSILON * scale * scale;
    let skewness = (values.len() >= 3 && !degenerate).then(|| m3 / m2.powf(1.5));
    let kurtosis = (values.len() >= 4 && !degenerate).then(|| m4 / (m2 * m2));
    Ok(SampleStats {
        mean,
        min,
        max,
        variance,
        skewness,
        kurtosis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_masks_shape() {
        let s = sample_stats(&[45.0; 4]).unwrap();
        assert_eq!(s.mean, 45.0);
        assert_eq!(s.variance, Some(0.0));
        assert_eq!(s.skewness, None);
        assert_eq!(s.kurtosis, None);
    }

    #[test]
    fn small_samples() {
        let s = sample_stats(&[40.0, 50.0]).unwrap();
        assert_eq!(s.skewness, None);
        assert_eq!(s.variance, Some(50.0));
        let s = sample_stats(&[40.0, 45.0, 50.0]).unwrap();
        assert_eq!(s.skewness, Some(0.0));
        assert_eq!(s.kurtosis, None);
        let s = sample_stats(&[7.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.variance), (7.0, 7.0, 7.0, None));
    }

    #[test]
    fn empty_is_error() {
        assert!(sample_stats(&[]).is_err());
    }
}
