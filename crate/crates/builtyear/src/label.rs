//! Gaussian encoding of heterogeneous built-time labels.
//!
//! A built time can be an exact year, a century, or a dynasty span. All three
//! are represented as a Gaussian N(mu, sigma^2) over years CE:
//!
//! * exact year: mu = year, sigma = 2.5 (the 95% band covers 10 years),
//! * century n: mu = 100*(n-1) + 50, sigma = 25,
//! * dynasty (start, end): mu = midpoint, sigma = span/4, so mu +/- 2*sigma
//!   lands exactly on the span endpoints.
//!
//! The century convention here is that the nth century runs from year
//! 100*(n-1)+1 through 100*n (the 10th century is 901-1000).

use crate::error::{Error, Result};

/// Standard deviation assigned to exact-year labels, in years.
pub const YEAR_SIGMA: f64 = 2.5;

/// Standard deviation assigned to century labels, in years.
pub const CENTURY_SIGMA: f64 = 25.0;

/// A built time as a Gaussian over years CE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLabel {
    /// Mean, in years CE.
    pub mu: f64,
    /// Standard deviation, in years; strictly positive.
    pub sigma: f64,
}

/// Encodes an exact built year.
pub fn encode_year(year: i64) -> GaussianLabel {
    GaussianLabel {
        mu: year as f64,
        sigma: YEAR_SIGMA,
    }
}

/// Encodes a century by its ordinal (15 means the 15th century, mu = 1450).
pub fn encode_century(ordinal: i64) -> Result<GaussianLabel> {
    if ordinal < 1 {
        return Err(Error::InvalidArgument(format!(
            "century ordinal must be >= 1, got {ordinal}"
        )));
    }
    Ok(GaussianLabel {
        mu: 100.0 * (ordinal - 1) as f64 + 50.0,
        sigma: CENTURY_SIGMA,
    })
}

/// Encodes a dynasty span as mu = midpoint, sigma = span/4. No rounding:
/// a 99-year span yields a half-integral mean and a fractional sigma.
pub fn encode_dynasty(start: i64, end: i64) -> Result<GaussianLabel> {
    if start >= end {
        return Err(Error::InvalidArgument(format!(
            "dynasty span must have start < end, got ({start}, {end})"
        )));
    }
    Ok(GaussianLabel {
        mu: (start + end) as f64 / 2.0,
        sigma: (end - start) as f64 / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_golden_values() {
        assert_eq!(encode_year(1259), GaussianLabel { mu: 1259.0, sigma: 2.5 });
        assert_eq!(encode_year(0), GaussianLabel { mu: 0.0, sigma: 2.5 });
        assert_eq!(encode_year(1091), GaussianLabel { mu: 1091.0, sigma: 2.5 });
    }

    #[test]
    fn century_golden_values() {
        assert_eq!(encode_century(15).unwrap(), GaussianLabel { mu: 1450.0, sigma: 25.0 });
        assert_eq!(encode_century(10).unwrap(), GaussianLabel { mu: 950.0, sigma: 25.0 });
        assert_eq!(encode_century(1).unwrap(), GaussianLabel { mu: 50.0, sigma: 25.0 });
    }

    #[test]
    fn century_rejects_non_positive_ordinals() {
        assert!(encode_century(0).is_err());
        assert!(encode_century(-3).is_err());
    }

    #[test]
    fn dynasty_golden_values() {
        // Kamakura.
        assert_eq!(
            encode_dynasty(1185, 1333).unwrap(),
            GaussianLabel { mu: 1259.0, sigma: 37.0 }
        );
        assert_eq!(encode_dynasty(0, 4).unwrap(), GaussianLabel { mu: 2.0, sigma: 1.0 });
        // Fractional mean and sigma survive unrounded.
        assert_eq!(
            encode_dynasty(901, 1000).unwrap(),
            GaussianLabel { mu: 950.5, sigma: 24.75 }
        );
    }

    #[test]
    fn dynasty_rejects_degenerate_spans() {
        assert!(encode_dynasty(1200, 1200).is_err());
        assert!(encode_dynasty(1300, 1200).is_err());
    }

    #[test]
    fn dynasty_two_sigma_band_is_the_span() {
        for &(s, e) in &[(1185i64, 1333i64), (600, 640), (901, 1000), (-200, 500)] {
            let l = encode_dynasty(s, e).unwrap();
            assert_eq!(l.mu - 2.0 * l.sigma, s as f64);
            assert_eq!(l.mu + 2.0 * l.sigma, e as f64);
        }
    }

    #[test]
    fn consecutive_centuries_are_100_years_apart() {
        for n in 2..=21 {
            let a = encode_century(n - 1).unwrap();
            let b = encode_century(n).unwrap();
            assert_eq!(b.mu - a.mu, 100.0);
        }
    }

    #[test]
    fn all_encoders_produce_positive_sigma() {
        assert!(encode_year(-500).sigma > 0.0);
        assert!(encode_century(7).unwrap().sigma > 0.0);
        assert!(encode_dynasty(40, 41).unwrap().sigma > 0.0);
    }
}
