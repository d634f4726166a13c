use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_rate, SignalError};

/// Adaptive empty/occupied detector settings.
///
/// The threshold is the midpoint between the two centers of an optimal
/// two-means split of the load values seen over the trailing horizon. A split
/// only recalibrates the threshold when the two clusters are far apart and
/// explain most of the variance; otherwise the last accepted threshold stays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancyConfig {
    pub horizon_s: f64,
    /// Hysteresis half-width as a fraction of the cluster-center distance.
    pub hysteresis_frac: f64,
    /// A state change needs the crossing to persist this long.
    pub dwell_s: f64,
    /// Below this load range over the horizon the state is held.
    pub min_range_kg: f64,
    pub min_separation_kg: f64,
    /// Between-cluster share of total variance required to accept a split.
    pub min_bimodality: f64,
    pub bin_kg: f64,
    pub update_interval_s: f64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            horizon_s: 1800.0,
            hysteresis_frac: 0.1,
            dwell_s: 5.0,
            min_range_kg: 2.0,
            min_separation_kg: 10.0,
            min_bimodality: 0.9,
            bin_kg: 0.05,
            update_interval_s: 1.0,
        }
    }
}

/// Minimum record length for occupancy detection.
pub const MIN_OCCUPANCY_SECONDS: f64 = 60.0;

pub fn detect_occupancy(load: &[f64], sample_rate_hz: f64) -> Result<Vec<u8>, SignalError> {
    detect_occupancy_with(load, sample_rate_hz, &OccupancyConfig::default())
}

#[derive(Debug, Clone, Copy)]
struct Calibration {
    threshold: f64,
    band: f64,
}

#[derive(Default)]
struct RollingHistogram {
    bins: BTreeMap<i64, u32>,
}

impl RollingHistogram {
    fn add(&mut self, bin: i64) {
        *self.bins.entry(bin).or_insert(0) += 1;
    }

    fn remove(&mut self, bin: i64) {
        if let Some(c) = self.bins.get_mut(&bin) {
            *c -= 1;
            if *c == 0 {
                self.bins.remove(&bin);
            }
        }
    }

    fn span_bins(&self) -> i64 {
        match (self.bins.first_key_value(), self.bins.last_key_value()) {
            (Some((lo, _)), Some((hi, _))) => hi - lo,
            _ => 0,
        }
    }

    /// Best two-means split over bin centers: (low center, high center, bimodality).
    fn two_means(&self, bin_kg: f64) -> Option<(f64, f64, f64)> {
        let center = |b: i64| b as f64 * bin_kg;
        let (mut n, mut s, mut ss) = (0.0, 0.0, 0.0);
        for (&b, &c) in &self.bins {
            let (c, v) = (c as f64, center(b));
            n += c;
            s += c * v;
            ss += c * v * v;
        }
        let mean = s / n;
        let var = ss / n - mean * mean;
        if self.bins.len() < 2 || !(var > 0.0) {
            return None;
        }
        let (mut n1, mut s1) = (0.0, 0.0);
        let mut best: Option<(f64, f64, f64)> = None;
        let last = *self.bins.last_key_value()?.0;
        for (&b, &c) in &self.bins {
            if b == last {
                break;
            }
            n1 += c as f64;
            s1 += c as f64 * center(b);
            let n2 = n - n1;
            let (m1, m2) = (s1 / n1, (s - s1) / n2);
            let between = n1 * n2 * (m2 - m1).powi(2) / (n * n);
            if best.map_or(true, |(_, _, bv)| between > bv) {
                best = Some((m1, m2, between));
            }
        }
        best.map(|(m1, m2, between)| (m1, m2, (between / var).min(1.0)))
    }
}

pub fn detect_occupancy_with(
    load: &[f64],
    sample_rate_hz: f64,
    config: &OccupancyConfig,
) -> Result<Vec<u8>, SignalError> {
    check_rate(sample_rate_hz)?;
    let min = (MIN_OCCUPANCY_SECONDS * sample_rate_hz).ceil() as usize;
    if load.len() < min {
        return Err(SignalError::TooShort { len: load.len(), min });
    }
    if let Some(i) = load.iter().position(|v| !v.is_finite()) {
        return Err(SignalError::NonFinite(i));
    }
    let samples = |secs: f64| ((secs * sample_rate_hz).round() as usize).max(1);
    let horizon = samples(config.horizon_s);
    let dwell = samples(config.dwell_s);
    let update = samples(config.update_interval_s);
    let bin_of = |v: f64| (v / config.bin_kg).round() as i64;

    let mut hist = RollingHistogram::default();
    let mut calibration: Option<Calibration> = None;
    let mut hold = true;
    let mut state = 0u8;
    let mut pending = 0usize;
    let mut out = Vec::with_capacity(load.len());

    for (i, &x) in load.iter().enumerate() {
        hist.add(bin_of(x));
        if i >= horizon {
            hist.remove(bin_of(load[i - horizon]));
        }
        if i % update == 0 {
            hold = (hist.span_bins() as f64) * config.bin_kg < config.min_range_kg;
            if !hold {
                if let Some((lo, hi, bimodality)) = hist.two_means(config.bin_kg) {
                    if hi - lo >= config.min_separation_kg && bimodality >= config.min_bimodality {
                        calibration = Some(Calibration {
                            threshold: 0.5 * (lo + hi),
                            band: config.hysteresis_frac * (hi - lo),
                        });
                    }
                }
            }
        }
        match calibration {
            Some(c) if !hold => {
                let crossing = if state == 0 { x > c.threshold + c.band } else { x < c.threshold - c.band };
                if crossing {
                    pending += 1;
                    if pending >= dwell {
                        state ^= 1;
                        pending = 0;
                    }
                } else {
                    pending = 0;
                }
            }
            _ => pending = 0,
        }
        out.push(state);
    }
    Ok(out)
}

/// Minutes elapsed since the start of the current occupied run; the first
/// occupied sample of a run counts as zero.
pub fn in_bed_duration(occupancy: &[u8], sample_rate_hz: f64) -> Result<Vec<f64>, SignalError> {
    check_rate(sample_rate_hz)?;
    let mut run_start = None;
    occupancy
        .iter()
        .enumerate()
        .map(|(i, &o)| match o {
            0 => {
                run_start = None;
                Ok(0.0)
            }
            1 => {
                let start = *run_start.get_or_insert(i);
                Ok((i - start) as f64 / sample_rate_hz / 60.0)
            }
            value => Err(SignalError::NotBinary { index: i, value }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 10 min empty, 10 min occupied, 10 min empty at 1 Hz, with true edges.
    fn bimodal_trace() -> (Vec<f64>, Vec<u8>, [usize; 2]) {
        let mut load = vec![5.0; 600];
        load.extend(vec![72.0; 600]);
        load.extend(vec![5.0; 600]);
        let truth = load.iter().map(|&v| u8::from(v > 40.0)).collect();
        (load, truth, [600, 1200])
    }

    fn agrees_away_from_edges(got: &[u8], truth: &[u8], edges: &[usize], margin: usize) -> bool {
        got.iter().zip(truth).enumerate().all(|(i, (g, t))| {
            edges.iter().any(|&e| i + margin >= e && i < e + margin) || g == t
        })
    }

    #[test]
    fn flat_zero_is_unoccupied() {
        let occ = detect_occupancy(&vec![0.0; 120], 1.0).unwrap();
        assert!(occ.iter().all(|&o| o == 0));
    }

    #[test]
    fn bimodal_trace_tracks_edges_within_ten_seconds() {
        let (load, truth, edges) = bimodal_trace();
        let occ = detect_occupancy(&load, 1.0).unwrap();
        assert!(agrees_away_from_edges(&occ, &truth, &edges, 10));
    }

    #[test]
    fn constant_occupied_after_calibration_prefix_stays_occupied() {
        let mut load = vec![5.0; 600];
        load.extend(vec![72.0; 3 * 3600]);
        let occ = detect_occupancy(&load, 1.0).unwrap();
        assert!(occ[..600].iter().all(|&o| o == 0));
        assert!(occ[610..].iter().all(|&o| o == 1));
    }

    #[test]
    fn small_offset_does_not_change_detection() {
        let (load, _, _) = bimodal_trace();
        let base = detect_occupancy(&load, 1.0).unwrap();
        for offset in [0.25, 0.5, 0.73, 1.0] {
            let shifted: Vec<f64> = load.iter().map(|v| v + offset).collect();
            assert_eq!(detect_occupancy(&shifted, 1.0).unwrap(), base, "offset {offset}");
        }
    }

    #[test]
    fn single_sample_spike_does_not_flip() {
        let mut load = vec![5.0; 600];
        load[300] = 80.0;
        load.extend(vec![72.0; 600]);
        load[900] = 5.0;
        let occ = detect_occupancy(&load, 1.0).unwrap();
        assert!(occ[..600].iter().all(|&o| o == 0));
        assert!(occ[610..].iter().all(|&o| o == 1));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(detect_occupancy(&[0.0; 59], 1.0), Err(SignalError::TooShort { .. })));
    }

    #[test]
    fn duration_examples() {
        assert_eq!(in_bed_duration(&[0; 5], 25.0).unwrap(), vec![0.0; 5]);
        assert_eq!(in_bed_duration(&[0, 1, 1, 1, 0, 1], 1.0 / 60.0).unwrap(), vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        let d = in_bed_duration(&[1; 180], 1.0 / 60.0).unwrap();
        assert_eq!(*d.last().unwrap(), 179.0);
        assert!(matches!(in_bed_duration(&[0, 2], 1.0), Err(SignalError::NotBinary { index: 1, value: 2 })));
    }

    #[test]
    fn positive_duration_implies_occupied() {
        let occ: Vec<u8> = (0..500).map(|i| u8::from((i / 37) % 3 != 0)).collect();
        let d = in_bed_duration(&occ, 2.0).unwrap();
        assert!(d.iter().zip(&occ).all(|(&v, &o)| v <= 0.0 || o == 1));
    }
}
