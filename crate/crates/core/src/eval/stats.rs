use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean, unbiased variance and adjusted Fisher-Pearson skewness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Set when the variance is zero and the skewness is reported as 0.
    pub degenerate: bool,
}

pub fn moments(values: &[f64]) -> Result<Moments> {
    let n = values.len();
    if n < 3 {
        return Err(Error::data(format!("moments need at least 3 values, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / nf, m3 / nf);
    let variance = m2 * nf / (nf - 1.0);
    if m2 == 0.0 {
        return Ok(Moments {
            mean,
            variance: 0.0,
            skewness: 0.0,
            degenerate: true,
        });
    }
    let g1 = m3 / m2.powf(1.5);
    let skewness = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    Ok(Moments {
        mean,
        variance,
        skewness,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_binary_sample() {
        let m = moments(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.mean, 0.5);
        assert!((m.variance - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.skewness, 0.0);
        assert!(!m.degenerate);
    }

    #[test]
    fn constant_sample_is_flagged() {
        let m = moments(&[0.7; 5]).unwrap();
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.skewness, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn skewness_matches_hand_computation() {
        // {0, 0, 0, 1}: mean 1/4, m2 = 3/16, m3 = 3/32 → g1 = 2/√3,
        // G1 = g1·√12/2 = 2.
        let m = moments(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((m.skewness - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_values() {
        assert!(moments(&[1.0, 2.0]).is_err());
    }
}
