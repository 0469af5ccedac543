//! Shared statistical helpers for unit tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square p-value; cells with expectation below 5 are pooled.
pub fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < 5.0 {
            pooled_obs += o;
            pooled_exp += e;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    assert!(cells >= 2, "too few cells for a chi-square test");
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}
