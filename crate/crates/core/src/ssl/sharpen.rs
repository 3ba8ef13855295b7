use crate::error::{Error, Result};

use super::prob::{argmax, ProbVector};

/// Raises each entry to `1 / temperature` and renormalizes, in place.
///
/// Entries are scaled by the row maximum before exponentiation so small
/// temperatures do not underflow the whole row.
pub fn sharpen_row(row: &mut [f64], temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::validation(
            "temperature",
            format!("must be > 0, got {temperature}"),
        ));
    }
    if row.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    let max = row[argmax(row)];
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::InvalidDistribution(
            "cannot sharpen an all-zero distribution".into(),
        ));
    }
    if temperature == 1.0 {
        return Ok(());
    }
    let inv_t = 1.0 / temperature;
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v / max).powf(inv_t);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

/// `Sharpen(p, T)_i = p_i^(1/T) / sum_k p_k^(1/T)`.
pub fn sharpen(p: &ProbVector, temperature: f64) -> Result<ProbVector> {
    let mut values = p.values().to_vec();
    sharpen_row(&mut values, temperature)?;
    ProbVector::new(values)
}
