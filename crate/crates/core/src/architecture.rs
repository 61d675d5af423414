//! Closed-form genetic-architecture quantities.

use crate::error::{Error, Result};

/// Genetic variance explained by markers with iid effects of variance
/// `sigma_b2`: `sigma_b2 * sum 2 p (1 - p)`.
pub fn expected_genetic_variance(freqs: &[f64], sigma_b2: f64) -> Result<f64> {
    if !(sigma_b2 >= 0.0) {
        return Err(Error::invalid(format!("sigma_b2 must be >= 0, got {sigma_b2}")));
    }
    if let Some(f) = freqs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::invalid(format!("allele frequency {f} outside [0, 1]")));
    }
    Ok(sigma_b2 * freqs.iter().map(|&p| 2.0 * p * (1.0 - p)).sum::<f64>())
}

/// Number of independent chromosome segments, `4 Ne L` with `L` in Morgans.
pub fn effective_qtl_count(ne: f64, length_morgans: f64) -> Result<f64> {
    if !(ne > 0.0) || !(length_morgans > 0.0) {
        return Err(Error::invalid(format!(
            "Ne and L must be positive (got Ne={ne}, L={length_morgans})"
        )));
    }
    Ok(4.0 * ne * length_morgans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genetic_variance_examples() {
        assert_eq!(expected_genetic_variance(&[0.5; 8], 1.0).unwrap(), 4.0);
        assert_eq!(expected_genetic_variance(&[0.1, 0.3, 0.7], 0.0).unwrap(), 0.0);
        let v = expected_genetic_variance(&[0.1, 0.3], 2.0).unwrap();
        assert!((v - 1.2).abs() < 1e-12);
        assert!(expected_genetic_variance(&[1.2], 1.0).is_err());
        assert!(expected_genetic_variance(&[0.2], -1.0).is_err());
    }

    #[test]
    fn qtl_count_examples() {
        assert_eq!(effective_qtl_count(100.0, 30.0).unwrap(), 12_000.0);
        assert_eq!(effective_qtl_count(1.0, 1.0).unwrap(), 4.0);
        assert_eq!(effective_qtl_count(3000.0, 35.0).unwrap(), 420_000.0);
        assert!(effective_qtl_count(0.0, 1.0).is_err());
    }
}
