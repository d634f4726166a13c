use super::ImagingError;

/// Dense `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self { n, data: vec![value; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

fn need_two(series: &[f64]) -> Result<(), ImagingError> {
    if series.len() < 2 {
        return Err(ImagingError::TooShort { len: series.len(), min: 2 });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ImagingError::InvalidParam("series contains non-finite values".into()));
    }
    Ok(())
}

/// Nearest-rank `q`-quantile of the `N(N-1)/2` pairwise absolute differences:
/// the `ceil(q * m)`-th smallest of the `m` distances.
pub fn rp_epsilon_from_quantile(series: &[f64], q: f64) -> Result<f64, ImagingError> {
    need_two(series)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(ImagingError::InvalidParam(format!("quantile {q} outside (0, 1]")));
    }
    let n = series.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((series[i] - series[j]).abs());
        }
    }
    let rank = ((q * d.len() as f64).ceil() as usize).clamp(1, d.len());
    let (_, eps, _) = d.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*eps)
}

/// `R[i,j] = 1` iff `|x_i - x_j| <= epsilon`.
pub fn encode_rp(series: &[f64], epsilon: f64) -> Result<SquareMatrix, ImagingError> {
    need_two(series)?;
    if !(epsilon >= 0.0) {
        return Err(ImagingError::InvalidParam(format!("epsilon {epsilon} must be >= 0")));
    }
    Ok(SquareMatrix::from_fn(series.len(), |i, j| {
        if (series[i] - series[j]).abs() <= epsilon {
            1.0
        } else {
            0.0
        }
    }))
}

/// Equal-frequency quantile bins (0-based). Bin edges are the order
/// statistics at ranks `floor(k N / Q)`, `k = 1..Q-1`, and a value lands in
/// the bin counting how many edges it reaches, so ties always share a bin.
pub fn mtf_bins(series: &[f64], q_bins: usize) -> Result<Vec<usize>, ImagingError> {
    need_two(series)?;
    if q_bins < 2 || q_bins > series.len() {
        return Err(ImagingError::InvalidParam(format!("q_bins {q_bins} must lie in 2..={}", series.len())));
    }
    let n = series.len();
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..q_bins).map(|k| sorted[k * n / q_bins]).collect();
    Ok(series.iter().map(|&x| edges.iter().filter(|&&e| x >= e).count()).collect())
}

/// Row-stochastic first-order transition matrix over the quantile bins
/// (`q x q`, row-major). Rows of never-left states are uniform.
pub fn mtf_transition_matrix(series: &[f64], q_bins: usize) -> Result<(Vec<usize>, Vec<f64>), ImagingError> {
    let bins = mtf_bins(series, q_bins)?;
    let mut counts = vec![0.0; q_bins * q_bins];
    for w in bins.windows(2) {
        counts[w[0] * q_bins + w[1]] += 1.0;
    }
    for row in counts.chunks_mut(q_bins) {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            row.fill(1.0 / q_bins as f64);
        } else {
            row.iter_mut().for_each(|c| *c /= total);
        }
    }
    Ok((bins, counts))
}

/// `M[i,j] = P[b_i, b_j]`.
pub fn encode_mtf(series: &[f64], q_bins: usize) -> Result<SquareMatrix, ImagingError> {
    let (bins, p) = mtf_transition_matrix(series, q_bins)?;
    Ok(SquareMatrix::from_fn(series.len(), |i, j| p[bins[i] * q_bins + bins[j]]))
}

/// Min-max rescale to `[-1, 1]`; a constant series maps to all zeros.
pub fn rescale_unit(series: &[f64]) -> Vec<f64> {
    let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; series.len()];
    }
    series.iter().map(|&v| (((v - hi) + (v - lo)) / range).clamp(-1.0, 1.0)).collect()
}

/// `G[i,j] = cos(phi_i + phi_j)` with `phi = arccos(rescaled x)`, expanded as
/// `x_i x_j - sqrt(1 - x_i^2) sqrt(1 - x_j^2)`. Going through `acos` loses
/// about half the digits near the ends of the range.
pub fn encode_gasf(series: &[f64]) -> Result<SquareMatrix, ImagingError> {
    need_two(series)?;
    let x = rescale_unit(series);
    let s: Vec<f64> = x.iter().map(|v| (1.0 - v * v).max(0.0).sqrt()).collect();
    Ok(SquareMatrix::from_fn(series.len(), |i, j| x[i] * x[j] - s[i] * s[j]))
}
