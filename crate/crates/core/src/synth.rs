//! Synthetic EEG/EOG scenarios with known ground truth.
//!
//! Neural sources are sinusoids at distinct EEG-band frequencies plus uniform
//! noise. The ocular source is a train of squared-cosine blinks on top of slow
//! eye movements; it leaks into the EEG channels through per-channel weights
//! and is also recorded, with a little sensor noise, as the EOG reference.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PulsePattern;
use crate::signal_io::{
    Dataset, Label, LabeledWindow, Recording, DEFAULT_SAMPLE_RATE_HZ, DEFAULT_WINDOW_LEN,
    EEG_CHANNELS,
};

pub const BLINK_WIDTH_S: f64 = 0.3;
pub const MAX_CONDITION_NUMBER: f64 = 100.0;

/// Ocular leakage per channel of the 14-channel montage: strong frontally,
/// absent over occipital/temporal sites.
pub const DEFAULT_BLINK_WEIGHTS: [f64; 14] = [
    1.0, 0.3, 0.6, 0.5, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.3, 0.7, 0.7, 1.0,
];

/// Dominant oscillation of each class in [`make_labeled_set`], in label order.
pub const CLASS_FREQUENCIES_HZ: [f64; 5] = [6.0, 10.0, 14.0, 18.0, 22.0];
pub const LABELED_SET_CHANNELS: usize = 14;

/// Where and how loudly to stamp the synchronization marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseInjection {
    pub pattern: PulsePattern,
    /// Seconds of idle signal before the marker, per device.
    pub eeg_lead_s: f64,
    pub eog_lead_s: f64,
    /// Quiet seconds between the end of the marker and the scenario data.
    pub guard_s: f64,
    pub amplitude: f64,
}

impl Default for PulseInjection {
    fn default() -> Self {
        Self {
            pattern: PulsePattern::default(),
            eeg_lead_s: 7.0,
            eog_lead_s: 3.0,
            guard_s: 2.0,
            amplitude: 50.0,
        }
    }
}

impl PulseInjection {
    /// Seconds from marker onset to the first scenario sample.
    pub fn data_offset_s(&self) -> f64 {
        self.pattern.total_duration_s() + self.guard_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n_channels: usize,
    /// Neural sources; the ocular source comes on top.
    pub n_sources: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub blink_rate_hz: f64,
    pub blink_amplitude: f64,
    pub eye_movement_amplitude: f64,
    pub eog_noise: f64,
    /// Per-channel ocular leakage; `None` uses [`default_blink_weights`].
    pub blink_weights: Option<Vec<f64>>,
    /// channels × sources; `None` draws a seeded diagonally dominant matrix.
    pub mixing: Option<Vec<Vec<f64>>>,
    pub pulse: Option<PulseInjection>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_channels: 14,
            n_sources: 13,
            duration_s: 120.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            blink_rate_hz: 0.25,
            blink_amplitude: 5.0,
            eye_movement_amplitude: 0.6,
            eog_noise: 0.05,
            blink_weights: None,
            mixing: None,
            pulse: None,
            seed: 42,
        }
    }
}

pub fn default_blink_weights(n_channels: usize) -> Vec<f64> {
    if n_channels == DEFAULT_BLINK_WEIGHTS.len() {
        return DEFAULT_BLINK_WEIGHTS.to_vec();
    }
    let mut w = vec![0.0; n_channels];
    if let Some(first) = w.first_mut() {
        *first = 1.0;
    }
    if n_channels > 1 {
        w[n_channels - 1] = 0.8;
    }
    w
}

/// Marker-stamped raw streams, as two unsynchronized devices would record them.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStreams {
    pub eeg: Recording,
    pub eog: Recording,
    pub eeg_marker_index: usize,
    pub eog_marker_index: usize,
    /// Samples from marker onset to the first scenario sample.
    pub data_offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// neural sources × time
    pub sources: DMatrix<f64>,
    /// ocular source that leaks into the EEG
    pub ocular: Vec<f64>,
    /// recorded EOG reference: ocular source plus sensor noise
    pub eog: Vec<f64>,
    /// channels × neural sources
    pub mixing: DMatrix<f64>,
    pub blink_weights: Vec<f64>,
    pub contaminated: Recording,
    pub clean: Recording,
    pub eog_recording: Recording,
    /// Windows tiling the scenario, labels cycling through the label set.
    pub schedule: Vec<(usize, Label)>,
    pub raw: Option<RawStreams>,
}

impl GroundTruth {
    /// `weight × ocular` for one channel.
    pub fn artifact(&self, channel: usize) -> Vec<f64> {
        self.ocular.iter().map(|o| self.blink_weights[channel] * o).collect()
    }
}

fn channel_names(n: usize) -> Vec<String> {
    if n == EEG_CHANNELS.len() {
        EEG_CHANNELS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|i| format!("CH{i}")).collect()
    }
}

/// Squared-cosine blinks of ~300 ms at jittered intervals around `1 / rate_hz`.
pub fn make_blink_train(
    duration_s: f64,
    rate_hz: f64,
    amplitude: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(duration_s > 0.0 && rate_hz > 0.0 && sample_rate_hz > 0.0) {
        return Err(Error::InvalidParameter(
            "duration, blink rate and sample rate must be positive".into(),
        ));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut out = vec![0.0; n];
    if amplitude == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = 1.0 / rate_hz;
    let half = BLINK_WIDTH_S / 2.0;
    let mut center = rng.random_range(0.0..period);
    while center < duration_s {
        let first = (((center - half) * sample_rate_hz).ceil().max(0.0)) as usize;
        let last = (((center + half) * sample_rate_hz).floor() as usize).min(n.saturating_sub(1));
        for (i, v) in out.iter_mut().enumerate().take(last + 1).skip(first) {
            let dt = i as f64 / sample_rate_hz - center;
            if dt.abs() < half {
                let c = (PI * dt / BLINK_WIDTH_S).cos();
                *v += amplitude * c * c;
            }
        }
        center += period * rng.random_range(0.7..1.3);
    }
    Ok(out)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn uniform_noise(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

pub fn make_scenario(spec: &ScenarioSpec) -> Result<GroundTruth> {
    let (c, k) = (spec.n_channels, spec.n_sources);
    if c == 0 || k == 0 || k > c {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_sources <= n_channels, got {k} / {c}"
        )));
    }
    if !(spec.duration_s > 0.0 && spec.sample_rate_hz > 0.0 && spec.blink_rate_hz > 0.0) {
        return Err(Error::InvalidParameter("durations and rates must be positive".into()));
    }
    let fs = spec.sample_rate_hz;
    let n = (spec.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let weights = spec.blink_weights.clone().unwrap_or_else(|| default_blink_weights(c));
    if weights.len() != c {
        return Err(Error::LengthMismatch { left: c, right: weights.len() });
    }

    let mixing = match &spec.mixing {
        Some(rows) => {
            if rows.len() != c || rows.iter().any(|r| r.len() != k) {
                return Err(Error::DimensionMismatch(format!("mixing must be {c} x {k}")));
            }
            DMatrix::from_fn(c, k, |i, j| rows[i][j])
        }
        None => DMatrix::from_fn(c, k, |i, j| {
            let off = rng.random_range(-0.4..0.4);
            if i == j {
                1.0 + off / 2.0
            } else {
                off
            }
        }),
    };
    let mut total = mixing.clone();
    if weights.iter().any(|w| *w != 0.0) {
        total = total.insert_column(k, 0.0);
        total.set_column(k, &nalgebra::DVector::from_column_slice(&weights));
    }
    let cond = condition_number(&total);
    if !(cond < MAX_CONDITION_NUMBER) {
        return Err(Error::InvalidParameter(format!(
            "mixing condition number {cond:.1} is not below {MAX_CONDITION_NUMBER}"
        )));
    }

    // neural sources spread over 4-30 Hz, each with its own phase
    let sources = {
        let mut s = DMatrix::zeros(k, n);
        for j in 0..k {
            let freq = 4.0 + 26.0 * (j as f64 + 0.5) / k as f64 + rng.random_range(-0.3..0.3);
            let phase = rng.random_range(0.0..2.0 * PI);
            for t in 0..n {
                s[(j, t)] = (2.0 * PI * freq * t as f64 / fs + phase).sin()
                    + 0.5 * rng.random_range(-1.0..1.0);
            }
        }
        s
    };

    let blink = make_blink_train(
        spec.duration_s,
        spec.blink_rate_hz,
        spec.blink_amplitude,
        fs,
        rng.random(),
    )?;
    let mut ocular: Vec<f64> = blink[..n.min(blink.len())].to_vec();
    ocular.resize(n, 0.0);
    if spec.eye_movement_amplitude != 0.0 {
        for _ in 0..3 {
            let freq = rng.random_range(0.2..0.8);
            let phase = rng.random_range(0.0..2.0 * PI);
            for (t, v) in ocular.iter_mut().enumerate() {
                *v += spec.eye_movement_amplitude * (2.0 * PI * freq * t as f64 / fs + phase).sin();
            }
        }
    }
    let eog_noise = uniform_noise(&mut rng, n, spec.eog_noise);
    let eog: Vec<f64> = ocular.iter().zip(&eog_noise).map(|(o, e)| o + e).collect();

    let clean_samples = &mixing * &sources;
    let mut contaminated_samples = clean_samples.clone();
    for ch in 0..c {
        if weights[ch] != 0.0 {
            for t in 0..n {
                contaminated_samples[(ch, t)] += weights[ch] * ocular[t];
            }
        }
    }

    let names = channel_names(c);
    let clean = Recording::new(names.clone(), fs, clean_samples)?;
    let contaminated = Recording::new(names, fs, contaminated_samples)?;
    let eog_recording = Recording::from_rows(vec!["EOG".into()], fs, std::slice::from_ref(&eog))?;
    let schedule = (0..n / DEFAULT_WINDOW_LEN)
        .map(|i| (i * DEFAULT_WINDOW_LEN, Label::ALL[i % Label::COUNT]))
        .collect();

    let raw = match &spec.pulse {
        Some(pulse) => Some(stamp_raw_streams(
            &contaminated,
            &eog_recording,
            pulse,
            rng.random(),
        )?),
        None => None,
    };

    Ok(GroundTruth {
        sources,
        ocular,
        eog,
        mixing,
        blink_weights: weights,
        contaminated,
        clean,
        eog_recording,
        schedule,
        raw,
    })
}

/// Prepends lead-in, marker and guard to every channel of both recordings.
fn stamp_raw_streams(
    eeg: &Recording,
    eog: &Recording,
    pulse: &PulseInjection,
    seed: u64,
) -> Result<RawStreams> {
    pulse.pattern.validate()?;
    let fs = eeg.sample_rate_hz();
    let marker = pulse.pattern.render(fs, pulse.amplitude);
    let guard = (pulse.guard_s * fs).round() as usize;
    let data_offset = marker.len() + guard;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stamp = |rec: &Recording, lead_s: f64| -> Result<(Recording, usize)> {
        let lead = (lead_s * fs).round() as usize;
        let prefix = lead + data_offset;
        let mut out = DMatrix::zeros(rec.n_channels(), prefix + rec.len());
        for ch in 0..rec.n_channels() {
            for t in 0..prefix {
                out[(ch, t)] = 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
            for (i, m) in marker.iter().enumerate() {
                out[(ch, lead + i)] += m;
            }
            for t in 0..rec.len() {
                out[(ch, prefix + t)] = rec.samples()[(ch, t)];
            }
        }
        Ok((Recording::new(rec.channel_names().to_vec(), fs, out)?, lead))
    };
    let (raw_eeg, eeg_marker_index) = stamp(eeg, pulse.eeg_lead_s)?;
    let (raw_eog, eog_marker_index) = stamp(eog, pulse.eog_lead_s)?;
    Ok(RawStreams {
        eeg: raw_eeg,
        eog: raw_eog,
        eeg_marker_index,
        eog_marker_index,
        data_offset,
    })
}

/// A zero-baseline channel with gaussian noise and the marker stamped at `at`.
pub fn marker_channel(
    len: usize,
    at: usize,
    pattern: &PulsePattern,
    sample_rate_hz: f64,
    amplitude: f64,
    noise: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    pattern.validate()?;
    let marker = pattern.render(sample_rate_hz, amplitude);
    if at + marker.len() > len {
        return Err(Error::OutOfRange { index: at, len: marker.len(), available: len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len)
        .map(|_| noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    for (i, m) in marker.iter().enumerate() {
        x[at + i] += m;
    }
    Ok(x)
}

/// Five classes of 14-channel windows, each dominated by its own frequency
/// from [`CLASS_FREQUENCIES_HZ`] (at the default sample rate) with random
/// per-channel amplitude and phase plus uniform noise.
pub fn make_labeled_set(n_per_class: usize, window_len: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 || window_len == 0 {
        return Err(Error::InvalidParameter("counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = DEFAULT_SAMPLE_RATE_HZ;
    let mut windows = Vec::with_capacity(n_per_class * Label::COUNT);
    for _ in 0..n_per_class {
        for label in Label::ALL {
            let freq = CLASS_FREQUENCIES_HZ[label.index()];
            let mut samples = DMatrix::zeros(LABELED_SET_CHANNELS, window_len);
            for ch in 0..LABELED_SET_CHANNELS {
                let amp = rng.random_range(0.5..1.5);
                let phase = rng.random_range(0.0..2.0 * PI);
                for t in 0..window_len {
                    samples[(ch, t)] = amp * (2.0 * PI * freq * t as f64 / fs + phase).sin()
                        + 0.5 * rng.random_range(-1.0..1.0);
                }
            }
            windows.push(LabeledWindow { samples, label });
        }
    }
    Ok(Dataset::new(windows))
}

/// Concatenates windows into one recording plus the schedule that re-slices it.
pub fn dataset_to_recording(ds: &Dataset) -> Result<(Recording, Vec<(usize, Label)>)> {
    let first = ds.windows.first().ok_or(Error::EmptyDataset)?;
    let (channels, len) = first.samples.shape();
    if ds.windows.iter().any(|w| w.samples.shape() != (channels, len)) {
        return Err(Error::DimensionMismatch("windows differ in shape".into()));
    }
    let mut samples = DMatrix::zeros(channels, len * ds.len());
    let mut schedule = Vec::with_capacity(ds.len());
    for (i, w) in ds.windows.iter().enumerate() {
        samples.columns_mut(i * len, len).copy_from(&w.samples);
        schedule.push((i * len, w.label));
    }
    let rec = Recording::new(channel_names(channels), DEFAULT_SAMPLE_RATE_HZ, samples)?;
    Ok((rec, schedule))
}
