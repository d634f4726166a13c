use super::ImagingError;

/// Piecewise aggregate approximation: the mean of each of `target_n`
/// equal-length segments, with the last segment absorbing the remainder.
pub fn paa_downsample(series: &[f64], target_n: usize) -> Result<Vec<f64>, ImagingError> {
    if target_n == 0 {
        return Err(ImagingError::InvalidParam("target length must be positive".into()));
    }
    if series.len() < target_n {
        return Err(ImagingError::TooShort { len: series.len(), min: target_n });
    }
    let seg = series.len() / target_n;
    Ok((0..target_n)
        .map(|k| {
            let start = k * seg;
            let end = if k + 1 == target_n { series.len() } else { start + seg };
            series[start..end].iter().sum::<f64>() / (end - start) as f64
        })
        .collect())
}
