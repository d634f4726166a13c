use super::{check_rate, SignalError};

/// Minimum series length accepted by [`bandpass_vibration`].
pub const MIN_FILTER_LEN: usize = 8;

/// Second-order IIR section, coefficients normalized so that `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Transfer function evaluated on the unit circle at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> (f64, f64) {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
        // z^-1 = cos w - i sin w
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            (re, im)
        };
        let (nr, ni) = eval(&self.b);
        let (dr, di) = eval(&self.a);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }

    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let (re, im) = self.response(freq_hz, sample_rate_hz);
        re.hypot(im)
    }

    /// Transposed direct-form II state that yields the step-response steady state.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 - a2 * dc;
        let z1 = b1 - a1 * dc + z2;
        [z1, z2]
    }

    fn run(&self, x: &[f64], mut state: [f64; 2], out: &mut Vec<f64>) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        out.clear();
        out.reserve(x.len());
        for &v in x {
            let y = b0 * v + state[0];
            state[0] = b1 * v - a1 * y + state[1];
            state[1] = b2 * v - a2 * y;
            out.push(y);
        }
    }

    /// Zero-phase forward-backward filtering with odd-extension padding and
    /// steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = PAD_LEN.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.step_state();
        let mut fwd = Vec::new();
        let x0 = ext[0];
        self.run(&ext, [zi[0] * x0, zi[1] * x0], &mut fwd);
        fwd.reverse();
        let mut bwd = Vec::new();
        let y0 = fwd[0];
        self.run(&fwd, [zi[0] * y0, zi[1] * y0], &mut bwd);
        bwd.reverse();
        bwd.drain(..pad);
        bwd.truncate(n);
        bwd
    }
}

const PAD_LEN: usize = 9;

/// Second-order Butterworth band-pass obtained by the bilinear transform of
/// the analog prototype `B s / (s^2 + B s + W0^2)` with pre-warped edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassDesign {
    pub low_hz: f64,
    pub high_hz: f64,
    pub sample_rate_hz: f64,
    pub biquad: Biquad,
}

impl BandpassDesign {
    pub fn new(sample_rate_hz: f64, low_hz: f64, high_hz: f64) -> Result<Self, SignalError> {
        check_rate(sample_rate_hz)?;
        let nyquist = sample_rate_hz / 2.0;
        if !(low_hz.is_finite() && high_hz.is_finite() && 0.0 < low_hz && low_hz < high_hz && high_hz < nyquist) {
            return Err(SignalError::Band { low: low_hz, high: high_hz, nyquist });
        }
        let k = 2.0 * sample_rate_hz;
        let warp = |f: f64| k * (std::f64::consts::PI * f / sample_rate_hz).tan();
        let (w1, w2) = (warp(low_hz), warp(high_hz));
        let bw = w2 - w1;
        let w0sq = w1 * w2;
        let a0 = k * k + bw * k + w0sq;
        let g = bw * k / a0;
        let biquad = Biquad {
            b: [g, 0.0, -g],
            a: [1.0, (2.0 * w0sq - 2.0 * k * k) / a0, (k * k - bw * k + w0sq) / a0],
        };
        Ok(Self { low_hz, high_hz, sample_rate_hz, biquad })
    }

    /// Magnitude of the forward-backward (squared) response.
    pub fn zero_phase_gain(&self, freq_hz: f64) -> f64 {
        self.biquad.magnitude(freq_hz, self.sample_rate_hz).powi(2)
    }
}

/// Band-passes the load into the zero-mean vibration channel.
pub fn bandpass_vibration(
    load: &[f64],
    sample_rate_hz: f64,
    low_hz: f64,
    high_hz: f64,
) -> Result<Vec<f64>, SignalError> {
    let design = BandpassDesign::new(sample_rate_hz, low_hz, high_hz)?;
    if load.len() < MIN_FILTER_LEN {
        return Err(SignalError::TooShort { len: load.len(), min: MIN_FILTER_LEN });
    }
    if let Some(i) = load.iter().position(|v| !v.is_finite()) {
        return Err(SignalError::NonFinite(i));
    }
    Ok(design.biquad.filtfilt(load))
}
