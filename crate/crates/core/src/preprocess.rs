//! Time synchronization from injected pulse markers and Butterworth bandpass
//! filtering.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Recording;

/// Length of each scan window used when searching for the marker pattern.
pub const PULSE_SCAN_WINDOW_S: f64 = 20.0;

/// Marker waveform: one long pulse, a low gap, then two trailer pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulsePattern {
    pub start_pulse_width_s: f64,
    pub low_gap_s: f64,
    pub trailer_pulse_period_s: f64,
    pub trailer_duty: f64,
    /// `None` uses 5 × the channel's median absolute deviation.
    pub amplitude_threshold: Option<f64>,
}

impl Default for PulsePattern {
    fn default() -> Self {
        Self {
            start_pulse_width_s: 2.0,
            low_gap_s: 6.0,
            trailer_pulse_period_s: 2.0,
            trailer_duty: 0.5,
            amplitude_threshold: None,
        }
    }
}

impl PulsePattern {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            self.start_pulse_width_s,
            self.low_gap_s,
            self.trailer_pulse_period_s,
        ];
        if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidParameter("pulse durations must be positive".into()));
        }
        if !(self.trailer_duty > 0.0 && self.trailer_duty < 1.0) {
            return Err(Error::InvalidParameter("trailer duty must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// (duration in seconds, is-high) for each segment of the marker.
    pub fn segments(&self) -> [(f64, bool); 6] {
        let on = self.trailer_pulse_period_s * self.trailer_duty;
        let off = self.trailer_pulse_period_s - on;
        [
            (self.start_pulse_width_s, true),
            (self.low_gap_s, false),
            (on, true),
            (off, false),
            (on, true),
            (off, false),
        ]
    }

    pub fn total_duration_s(&self) -> f64 {
        self.segments().iter().map(|s| s.0).sum()
    }

    /// Renders the marker as a 0/amplitude waveform at the given rate.
    pub fn render(&self, sample_rate_hz: f64, amplitude: f64) -> Vec<f64> {
        let bounds = self.boundaries(sample_rate_hz);
        let mut out = vec![0.0; *bounds.last().unwrap()];
        for (i, (_, high)) in self.segments().iter().enumerate() {
            if *high {
                out[bounds[i]..bounds[i + 1]].fill(amplitude);
            }
        }
        out
    }

    /// Cumulative segment boundaries in samples, rounded from cumulative time.
    fn boundaries(&self, sample_rate_hz: f64) -> [usize; 7] {
        let mut bounds = [0usize; 7];
        let mut t = 0.0;
        for (i, (d, _)) in self.segments().iter().enumerate() {
            t += d;
            bounds[i + 1] = (t * sample_rate_hz).round() as usize;
        }
        bounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandpassSpec {
    pub order: usize,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self {
            order: 5,
            low_cut_hz: 0.1,
            high_cut_hz: 40.0,
        }
    }
}

impl BandpassSpec {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter("filter order must be at least 1".into()));
        }
        let nyquist = sample_rate_hz / 2.0;
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz < self.high_cut_hz) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < low cut < high cut, got {} / {}",
                self.low_cut_hz, self.high_cut_hz
            )));
        }
        if self.high_cut_hz >= nyquist {
            return Err(Error::InvalidParameter(format!(
                "high cut {} Hz is not below Nyquist {nyquist} Hz",
                self.high_cut_hz
            )));
        }
        Ok(())
    }
}

/// Sample indices at which the two streams line up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncResult {
    pub eeg_start_index: usize,
    pub eog_start_index: usize,
    pub common_length: usize,
}

/// Second-order section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    pub fn poles(&self) -> [Complex<f64>; 2] {
        quadratic_roots(self.a[1], self.a[2])
    }

    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        (z_inv * self.b[1] + z2 * self.b[2] + self.b[0])
            / (z_inv * self.a[1] + z2 * self.a[2] + self.a[0])
    }
}

/// Roots of `z² + c1 z + c0`.
fn quadratic_roots(c1: f64, c0: f64) -> [Complex<f64>; 2] {
    let disc = Complex::new(c1 * c1 - 4.0 * c0, 0.0).sqrt();
    [(-disc - c1) / 2.0, (disc - c1) / 2.0]
}

/// Cascade of second-order sections designed for one sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub sample_rate_hz: f64,
    pub sections: Vec<Biquad>,
}

impl FilterCoefficients {
    /// Complex response of the cascade at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex<f64> {
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn poles(&self) -> Vec<Complex<f64>> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Expands the cascade into single numerator/denominator polynomials in z⁻¹.
    pub fn transfer_function(&self) -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![1.0];
        let mut a = vec![1.0];
        for s in &self.sections {
            b = poly_mul(&b, &s.b);
            a = poly_mul(&a, &s.a);
        }
        (b, a)
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, x) in p.iter().enumerate() {
        for (j, y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Digital Butterworth bandpass: analog prototype, lowpass-to-bandpass
/// transform, bilinear mapping with prewarped edges, then pairing of the
/// conjugate poles into second-order sections. The gain is normalized to 1
/// at the geometric center of the passband.
pub fn design_butterworth(spec: &BandpassSpec, sample_rate_hz: f64) -> Result<FilterCoefficients> {
    spec.validate(sample_rate_hz)?;
    let n = spec.order;
    let fs2 = 2.0 * sample_rate_hz;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / sample_rate_hz).tan();
    let (wl, wh) = (warp(spec.low_cut_hz), warp(spec.high_cut_hz));
    let bw = wh - wl;
    let w0_sq = wl * wh;

    let mut poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let proto = Complex::from_polar(1.0, theta);
        // s² - p·bw·s + w0² = 0 for each prototype pole p
        let half = proto * (bw / 2.0);
        let disc = (half * half - w0_sq).sqrt();
        for s in [half + disc, half - disc] {
            poles.push((s + fs2) / (-s + fs2));
        }
    }

    const IMAG_EPS: f64 = 1e-12;
    let mut sections = Vec::with_capacity(n);
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= IMAG_EPS)
        .map(|p| p.re)
        .collect();
    real.sort_by(f64::total_cmp);
    for p in poles.iter().filter(|p| p.im > IMAG_EPS) {
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(r1 + r2), r1 * r2],
        });
    }
    sections.sort_by(|x, y| {
        let rx = x.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        let ry = y.poles().iter().map(|p| p.norm()).fold(0.0, f64::max);
        rx.total_cmp(&ry)
    });

    let mut coeffs = FilterCoefficients {
        sample_rate_hz,
        sections,
    };
    let center_hz = sample_rate_hz / std::f64::consts::PI * (w0_sq.sqrt() / fs2).atan();
    let gain = coeffs.magnitude(center_hz);
    for v in &mut coeffs.sections[0].b {
        *v /= gain;
    }
    Ok(coeffs)
}

/// Causal single-pass filtering of every channel through the section cascade.
pub fn apply_filter(rec: &Recording, coeffs: &FilterCoefficients) -> Result<Recording> {
    if (coeffs.sample_rate_hz - rec.sample_rate_hz()).abs() > 1e-9 {
        return Err(Error::SampleRateMismatch(
            coeffs.sample_rate_hz,
            rec.sample_rate_hz(),
        ));
    }
    let radius = coeffs.max_pole_radius();
    if !(radius < 1.0) {
        return Err(Error::UnstableFilter(radius));
    }
    let input = rec.samples();
    let mut out = DMatrix::zeros(input.nrows(), input.ncols());
    let mut buf = Vec::with_capacity(input.ncols());
    for ch in 0..input.nrows() {
        buf.clear();
        buf.extend(input.row(ch).iter());
        filter_in_place(&mut buf, &coeffs.sections);
        for (t, v) in buf.iter().enumerate() {
            out[(ch, t)] = *v;
        }
    }
    rec.with_samples(out)
}

/// Transposed direct form II, one section after another.
fn filter_in_place(x: &mut [f64], sections: &[Biquad]) {
    for s in sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = s.b[0] * input + z1;
            z1 = s.b[1] * input - s.a[1] * y + z2;
            z2 = s.b[2] * input - s.a[2] * y;
            *v = y;
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// 5 × median absolute deviation about the median.
pub fn default_pulse_threshold(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = x.iter().map(|u| (u - med).abs()).collect();
    5.0 * median(&mut dev)
}

/// Finds the first sample where the marker pattern starts on `channel`.
///
/// The channel is binarized against the amplitude threshold and scanned in
/// 20 s windows (hopped so every start position is examined once). A
/// candidate must be a rising edge whose high run lasts through the first
/// tenth of the start pulse; each nominal segment must then be at least 90 %
/// high (pulses) or at most 10 % high (gaps).
pub fn detect_pulse_start(rec: &Recording, channel: &str, pattern: &PulsePattern) -> Result<usize> {
    pattern.validate()?;
    let ch = rec.channel_index(channel)?;
    let x = rec.channel(ch);
    let fs = rec.sample_rate_hz();
    let bounds = pattern.boundaries(fs);
    let pattern_len = bounds[6];
    if pattern_len == 0 || x.len() < pattern_len {
        return Err(Error::InvalidRecording(format!(
            "recording ({} samples) is shorter than the pulse pattern ({pattern_len})",
            x.len()
        )));
    }
    let threshold = pattern
        .amplitude_threshold
        .unwrap_or_else(|| default_pulse_threshold(&x));
    let high: Vec<bool> = x.iter().map(|v| *v > threshold).collect();

    // prefix sums of the high flags for O(1) segment fractions
    let mut prefix = vec![0usize; high.len() + 1];
    for (i, h) in high.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(*h);
    }
    let guard = ((bounds[1] as f64 * 0.1).round() as usize).max(1);
    let segments = pattern.segments();
    let matches_at = |s: usize| -> bool {
        if !high[s] || (s > 0 && high[s - 1]) {
            return false;
        }
        if prefix[s + guard] - prefix[s] != guard {
            return false;
        }
        segments.iter().enumerate().all(|(i, (_, is_high))| {
            let (a, b) = (s + bounds[i], s + bounds[i + 1]);
            if b <= a {
                return true;
            }
            let frac = (prefix[b] - prefix[a]) as f64 / (b - a) as f64;
            if *is_high {
                frac >= 0.9
            } else {
                frac <= 0.1
            }
        })
    };

    let window = ((PULSE_SCAN_WINDOW_S * fs).round() as usize).max(pattern_len);
    let hop = window - pattern_len + 1;
    let last_start = x.len() - pattern_len;
    let mut window_start = 0;
    while window_start <= last_start {
        let end = (window_start + hop - 1).min(last_start);
        if let Some(s) = (window_start..=end).find(|&s| matches_at(s)) {
            return Ok(s);
        }
        window_start += hop;
    }
    Err(Error::PatternNotFound)
}

/// Locates the marker in both streams and reports the overlapping span.
pub fn locate_sync(
    eeg: &Recording,
    eeg_channel: &str,
    eog: &Recording,
    eog_channel: &str,
    pattern: &PulsePattern,
) -> Result<SyncResult> {
    let eeg_start_index = detect_pulse_start(eeg, eeg_channel, pattern)?;
    let eog_start_index = detect_pulse_start(eog, eog_channel, pattern)?;
    let common_length = (eeg.len() - eeg_start_index).min(eog.len() - eog_start_index);
    Ok(SyncResult {
        eeg_start_index,
        eog_start_index,
        common_length,
    })
}

/// Crops both recordings to start at their sync index and to equal length.
pub fn synchronize(
    eeg: &Recording,
    eog: &Recording,
    eeg_idx: usize,
    eog_idx: usize,
) -> Result<(Recording, Recording)> {
    if (eeg.sample_rate_hz() - eog.sample_rate_hz()).abs() > 1e-9 {
        return Err(Error::SampleRateMismatch(eeg.sample_rate_hz(), eog.sample_rate_hz()));
    }
    for (idx, rec) in [(eeg_idx, eeg), (eog_idx, eog)] {
        if idx > rec.len() {
            return Err(Error::OutOfRange {
                index: idx,
                len: 0,
                available: rec.len(),
            });
        }
    }
    let len = (eeg.len() - eeg_idx).min(eog.len() - eog_idx);
    if len == 0 {
        return Err(Error::ZeroOverlap);
    }
    Ok((eeg.crop(eeg_idx, len)?, eog.crop(eog_idx, len)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn design_default() -> FilterCoefficients {
        design_butterworth(&BandpassSpec::default(), 128.0).unwrap()
    }

    fn single(name: &str, x: Vec<f64>, fs: f64) -> Recording {
        Recording::from_rows(vec![name.to_string()], fs, &[x]).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    // Reference magnitudes from an independent bilinear Butterworth design
    // (order 5, 0.1-40 Hz, fs 128 Hz, second-order sections).
    const REFERENCE: [(f64, f64); 8] = [
        (0.01, 9.918985219499513e-06),
        (0.1, 0.7071067811766861),
        (1.0, 0.9999999999915725),
        (10.0, 0.9999999952040108),
        (20.0, 0.9999849206340815),
        (40.0, 0.7071067811865474),
        (50.0, 0.043733587622281654),
        (60.0, 6.903065853763296e-05),
    ];

    #[test]
    fn matches_reference_magnitudes() {
        let c = design_default();
        assert_eq!(c.sections.len(), 5);
        for (f, expected) in REFERENCE {
            let got = c.magnitude(f);
            assert!(
                (got - expected).abs() < 1e-6 * expected,
                "{f} Hz: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn cascade_agrees_with_expanded_polynomials() {
        let c = design_default();
        let (b, a) = c.transfer_function();
        assert_eq!(b.len(), 11);
        // the expanded form is too ill-conditioned near DC to compare below ~0.5 Hz
        for f in [0.5, 10.0, 39.0, 60.0] {
            let w = 2.0 * PI * f / 128.0;
            let eval = |p: &[f64]| {
                p.iter()
                    .enumerate()
                    .fold(Complex::new(0.0, 0.0), |acc, (k, v)| {
                        acc + Complex::from_polar(*v, -w * k as f64)
                    })
            };
            let direct = (eval(&b) / eval(&a)).norm();
            let cascade = c.magnitude(f);
            assert!((direct - cascade).abs() < 1e-6 * cascade, "{f} Hz: {direct} vs {cascade}");
        }
    }

    #[test]
    fn passband_stopband_and_dc() {
        let c = design_default();
        let h10 = c.magnitude(10.0);
        assert!((0.707..=1.0).contains(&h10));
        assert!(c.magnitude(0.01) < 0.1);
        assert!(c.magnitude(60.0) < 0.1);
        assert!(c.magnitude(0.0) < 1e-3);
    }

    #[test]
    fn decays_monotonically_above_high_cut() {
        let c = design_default();
        let mut prev = c.magnitude(40.0);
        let mut f = 40.25;
        while f < 64.0 {
            let m = c.magnitude(f);
            assert!(m <= prev, "{f} Hz: {m} > {prev}");
            prev = m;
            f += 0.25;
        }
    }

    #[test]
    fn poles_stay_inside_unit_circle() {
        for fs in [100.0, 128.0, 256.0, 500.0, 1000.0] {
            for order in 1..=8 {
                for (lo, hi) in [(0.1, 40.0), (1.0, 30.0), (0.5, 45.0), (8.0, 13.0)] {
                    let spec = BandpassSpec { order, low_cut_hz: lo, high_cut_hz: hi };
                    let c = design_butterworth(&spec, fs).unwrap();
                    assert_eq!(c.poles().len(), 2 * order);
                    assert!(c.max_pole_radius() < 1.0, "{spec:?} @ {fs}");
                }
            }
        }
    }

    #[test]
    fn cutoff_at_or_above_nyquist_is_rejected() {
        let spec = BandpassSpec { high_cut_hz: 64.0, ..BandpassSpec::default() };
        assert!(matches!(design_butterworth(&spec, 128.0), Err(Error::InvalidParameter(_))));
        let spec = BandpassSpec { low_cut_hz: 50.0, high_cut_hz: 40.0, order: 5 };
        assert!(design_butterworth(&spec, 128.0).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let rec = single("A", vec![0.0; 500], 128.0);
        let out = apply_filter(&rec, &design_default()).unwrap();
        assert!(out.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ten_hz_sine_passes_at_designed_gain() {
        let fs = 128.0;
        let x: Vec<f64> = (0..20_000).map(|t| (2.0 * PI * 10.0 * t as f64 / fs).sin()).collect();
        let c = design_default();
        let out = apply_filter(&single("A", x.clone(), fs), &c).unwrap().channel(0);
        let half = x.len() / 2;
        let expected = c.magnitude(10.0) * rms(&x[half..]);
        let got = rms(&out[half..]);
        assert!((got - expected).abs() / expected < 0.02, "{got} vs {expected}");
    }

    #[test]
    fn slow_drift_is_suppressed() {
        let fs = 128.0;
        // several periods of a 0.01 Hz drift
        let x: Vec<f64> = (0..(fs as usize * 600))
            .map(|t| (2.0 * PI * 0.01 * t as f64 / fs).sin())
            .collect();
        let out = apply_filter(&single("A", x.clone(), fs), &design_default())
            .unwrap()
            .channel(0);
        let half = x.len() / 2;
        assert!(rms(&out[half..]) < 0.1 * rms(&x[half..]));
    }

    #[test]
    fn unstable_or_mismatched_coefficients_are_rejected() {
        let rec = single("A", vec![1.0; 10], 128.0);
        let bad = FilterCoefficients {
            sample_rate_hz: 128.0,
            sections: vec![Biquad { b: [1.0, 0.0, 0.0], a: [1.0, -2.0, 1.0] }],
        };
        assert!(matches!(apply_filter(&rec, &bad), Err(Error::UnstableFilter(_))));
        let other_rate = design_butterworth(&BandpassSpec::default(), 256.0).unwrap();
        assert!(matches!(apply_filter(&rec, &other_rate), Err(Error::SampleRateMismatch(..))));
    }

    #[test]
    fn filtering_is_linear() {
        let fs = 128.0;
        let x: Vec<f64> = (0..2000).map(|t| (t as f64 * 0.37).sin() + 0.2).collect();
        let y: Vec<f64> = (0..2000).map(|t| ((t * t) % 17) as f64 - 8.0).collect();
        let (a, b) = (1.7, -0.6);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let rec = Recording::from_rows(vec!["x".into(), "y".into(), "m".into()], fs, &[x, y, mix])
            .unwrap();
        let out = apply_filter(&rec, &design_default()).unwrap();
        let (fx, fy, fm) = (out.channel(0), out.channel(1), out.channel(2));
        for t in 0..fm.len() {
            assert!((fm[t] - (a * fx[t] + b * fy[t])).abs() < 1e-9);
        }
    }

    fn with_pattern(len: usize, at: usize, fs: f64) -> Vec<f64> {
        let mut x = vec![0.0; len];
        let marker = PulsePattern::default().render(fs, 100.0);
        x[at..at + marker.len()].copy_from_slice(&marker);
        x
    }

    #[test]
    fn finds_injected_pattern() {
        let fs = 128.0;
        let rec = single("PULSE", with_pattern(12_000, 5000, fs), fs);
        assert_eq!(detect_pulse_start(&rec, "PULSE", &PulsePattern::default()).unwrap(), 5000);
        let rec = single("PULSE", with_pattern(3000, 0, fs), fs);
        assert_eq!(detect_pulse_start(&rec, "PULSE", &PulsePattern::default()).unwrap(), 0);
    }

    #[test]
    fn flat_channel_has_no_pattern() {
        let rec = single("PULSE", vec![0.0; 5000], 128.0);
        assert!(matches!(
            detect_pulse_start(&rec, "PULSE", &PulsePattern::default()),
            Err(Error::PatternNotFound)
        ));
        assert!(matches!(
            detect_pulse_start(&rec, "NOPE", &PulsePattern::default()),
            Err(Error::UnknownChannel(_))
        ));
    }

    #[test]
    fn lone_pulse_is_not_a_pattern() {
        let mut x = vec![0.0; 6000];
        x[1000..1256].fill(50.0);
        let rec = single("PULSE", x, 128.0);
        assert!(detect_pulse_start(&rec, "PULSE", &PulsePattern::default()).is_err());
    }

    #[test]
    fn sync_crops_to_common_length() {
        let fs = 128.0;
        let eeg = single("A", (0..1000).map(f64::from).collect(), fs);
        let eog = single("E", (0..900).map(f64::from).collect(), fs);
        let (a, e) = synchronize(&eeg, &eog, 100, 40).unwrap();
        assert_eq!((a.len(), e.len()), (860, 860));
        assert_eq!(a.samples()[(0, 0)], 100.0);
        assert_eq!(e.samples()[(0, 0)], 40.0);
        assert!((a.t0_offset_s() - 100.0 / fs).abs() < 1e-15);
    }

    #[test]
    fn sync_at_origin_is_identity() {
        let eeg = single("A", (0..50).map(f64::from).collect(), 128.0);
        let (a, b) = synchronize(&eeg, &eeg, 0, 0).unwrap();
        assert_eq!(a, eeg);
        assert_eq!(b, eeg);
    }

    #[test]
    fn sync_errors() {
        let eeg = single("A", vec![1.0; 100], 128.0);
        let eog = single("E", vec![1.0; 100], 128.0);
        assert!(matches!(synchronize(&eeg, &eog, 100, 0), Err(Error::ZeroOverlap)));
        assert!(matches!(synchronize(&eeg, &eog, 101, 0), Err(Error::OutOfRange { .. })));
        let eog256 = single("E", vec![1.0; 100], 256.0);
        assert!(matches!(synchronize(&eeg, &eog256, 0, 0), Err(Error::SampleRateMismatch(..))));
    }
}
