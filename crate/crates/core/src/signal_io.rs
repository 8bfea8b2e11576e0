//! Recording, window and report file formats.
//!
//! Recordings are CSV files with one header row of channel names and one row
//! per time sample. The sample rate and synchronization offset live in a small
//! TOML sidecar next to the CSV (`eeg.csv` → `eeg.meta.toml`); a missing
//! sidecar means [`DEFAULT_SAMPLE_RATE_HZ`] and zero offset.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DenoiseReport;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 128.0;
pub const DEFAULT_WINDOW_LEN: usize = 640;

/// Electrode labels of the 14-channel headset montage, in recording order.
pub const EEG_CHANNELS: [&str; 14] = [
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
];

pub const REPORT_HEADER: &str = "channel,corr_before,corr_after,snr_db";

/// Uniformly sampled multi-channel signal; rows are channels, columns samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    channel_names: Vec<String>,
    sample_rate_hz: f64,
    samples: DMatrix<f64>,
    t0_offset_s: f64,
}

impl Recording {
    pub fn new(
        channel_names: Vec<String>,
        sample_rate_hz: f64,
        samples: DMatrix<f64>,
    ) -> Result<Self> {
        Self::with_offset(channel_names, sample_rate_hz, samples, 0.0)
    }

    pub fn with_offset(
        channel_names: Vec<String>,
        sample_rate_hz: f64,
        samples: DMatrix<f64>,
        t0_offset_s: f64,
    ) -> Result<Self> {
        if channel_names.len() != samples.nrows() {
            return Err(Error::ChannelCountMismatch {
                expected: channel_names.len(),
                found: samples.nrows(),
            });
        }
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidRecording(
                "recording needs at least one channel and one sample".into(),
            ));
        }
        for (i, name) in channel_names.iter().enumerate() {
            if channel_names[..i].contains(name) {
                return Err(Error::InvalidRecording(format!(
                    "duplicate channel name {name:?}"
                )));
            }
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            // column-major storage: position = col * nrows + row
            return Err(Error::NonFiniteSample {
                row: pos / samples.nrows(),
                channel: pos % samples.nrows(),
            });
        }
        Ok(Self {
            channel_names,
            sample_rate_hz,
            samples,
            t0_offset_s,
        })
    }

    /// Builds a recording from per-channel rows.
    pub fn from_rows(
        channel_names: Vec<String>,
        sample_rate_hz: f64,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != len) {
            return Err(Error::LengthMismatch {
                left: len,
                right: bad.len(),
            });
        }
        let samples = DMatrix::from_fn(rows.len(), len, |r, c| rows[r][c]);
        Self::new(channel_names, sample_rate_hz, samples)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn t0_offset_s(&self) -> f64 {
        self.t0_offset_s
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channel_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    /// Copy of one channel as a plain vector.
    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.samples.row(index).iter().copied().collect()
    }

    /// Same metadata, new sample matrix of identical shape.
    pub fn with_samples(&self, samples: DMatrix<f64>) -> Result<Self> {
        if samples.shape() != self.samples.shape() {
            return Err(Error::DimensionMismatch(format!(
                "expected {:?}, got {:?}",
                self.samples.shape(),
                samples.shape()
            )));
        }
        Self::with_offset(
            self.channel_names.clone(),
            self.sample_rate_hz,
            samples,
            self.t0_offset_s,
        )
    }

    /// Columns `start..start + len`, shifting the time offset accordingly.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::OutOfRange {
                index: start,
                len,
                available: self.len(),
            });
        }
        Ok(Self {
            channel_names: self.channel_names.clone(),
            sample_rate_hz: self.sample_rate_hz,
            samples: self.samples.columns(start, len).into_owned(),
            t0_offset_s: self.t0_offset_s + start as f64 / self.sample_rate_hz,
        })
    }
}

/// The five cognitive labels, in output-unit order of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Lab,
    College,
    Friends,
    Dog,
    Cat,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::Lab,
        Label::College,
        Label::Friends,
        Label::Dog,
        Label::Cat,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Lab => "LAB",
            Label::College => "COLLEGE",
            Label::Friends => "FRIENDS",
            Label::Dog => "DOG",
            Label::Cat => "CAT",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// One channels × window_len slice with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub samples: DMatrix<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub windows: Vec<LabeledWindow>,
}

impl Dataset {
    pub fn new(windows: Vec<LabeledWindow>) -> Self {
        Self { windows }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Sidecar {
    sample_rate_hz: Option<f64>,
    #[serde(default)]
    t0_offset_s: f64,
}

/// `eeg.csv` → `eeg.meta.toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.toml")
}

/// Reads a recording CSV, taking the sample rate from its sidecar when present.
pub fn load_recording(path: &Path, expected_channels: Option<usize>) -> Result<Recording> {
    let meta = sidecar_path(path);
    let sidecar = if meta.exists() {
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        toml::from_str::<Sidecar>(&text).map_err(|e| Error::Parse {
            path: meta.clone(),
            line: 0,
            message: e.to_string(),
        })?
    } else {
        Sidecar::default()
    };
    let rate = sidecar.sample_rate_hz.unwrap_or(DEFAULT_SAMPLE_RATE_HZ);
    let mut rec = load_recording_at_rate(path, expected_channels, rate)?;
    rec.t0_offset_s = sidecar.t0_offset_s;
    Ok(rec)
}

/// Reads a recording CSV with an explicit sample rate, ignoring any sidecar.
pub fn load_recording_at_rate(
    path: &Path,
    expected_channels: Option<usize>,
    sample_rate_hz: f64,
) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let names: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(parse_err(1, "header must name every channel".into()));
    }
    if let Some(expected) = expected_channels {
        if expected != names.len() {
            return Err(Error::ChannelCountMismatch {
                expected,
                found: names.len(),
            });
        }
    }

    let n_channels = names.len();
    let mut data = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse_err(row + 2, e.to_string())),
        }
        if record.len() != n_channels {
            return Err(parse_err(
                row + 2,
                format!("expected {n_channels} cells, found {}", record.len()),
            ));
        }
        for (channel, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_err(row + 2, format!("non-numeric cell {cell:?}")))?;
            if !value.is_finite() {
                return Err(Error::NonFiniteSample { row, channel });
            }
            data.push(value);
        }
        row += 1;
    }
    if row == 0 {
        return Err(parse_err(2, "no samples".into()));
    }
    // data is row-major time × channel; the matrix wants channel × time.
    let samples = DMatrix::from_column_slice(n_channels, row, &data);
    Recording::new(names, sample_rate_hz, samples)
}

/// Writes the CSV and its metadata sidecar. Values use shortest round-trip formatting.
pub fn write_recording(rec: &Recording, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{}", rec.channel_names.join(","))?;
        for t in 0..rec.len() {
            for c in 0..rec.n_channels() {
                if c > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{}", rec.samples[(c, t)])?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))?;

    let meta = sidecar_path(path);
    let text = toml::to_string(&Sidecar {
        sample_rate_hz: Some(rec.sample_rate_hz),
        t0_offset_s: rec.t0_offset_s,
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

/// Cuts labeled windows of `window_len` samples starting at each scheduled index.
pub fn slice_windows(
    rec: &Recording,
    schedule: &[(usize, Label)],
    window_len: usize,
) -> Result<Vec<LabeledWindow>> {
    if window_len == 0 {
        return Err(Error::InvalidParameter("window length must be positive".into()));
    }
    schedule
        .iter()
        .map(|&(start, label)| {
            if start + window_len > rec.len() {
                return Err(Error::OutOfRange {
                    index: start,
                    len: window_len,
                    available: rec.len(),
                });
            }
            Ok(LabeledWindow {
                samples: rec.samples.columns(start, window_len).into_owned(),
                label,
            })
        })
        .collect()
}

/// Seeded shuffle then split; the train side gets `round(fraction * N)` windows.
pub fn split_dataset(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fraction * ds.len() as f64).round() as usize).min(ds.len());
    let pick = |idx: &[usize]| Dataset::new(idx.iter().map(|&i| ds.windows[i].clone()).collect());
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

pub fn load_schedule(path: &Path) -> Result<Vec<(usize, Label)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut schedule = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "expected start_index,label".into(),
            });
        }
        let start = record[0].parse::<usize>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad start index {:?}", &record[0]),
        })?;
        schedule.push((start, record[1].parse()?));
    }
    Ok(schedule)
}

pub fn write_schedule(schedule: &[(usize, Label)], path: &Path) -> Result<()> {
    let mut text = String::from("start_index,label\n");
    for (start, label) in schedule {
        text.push_str(&format!("{start},{label}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every `<name>.schedule.csv` in `dir` together with its `<name>.csv` recording.
pub fn load_training_dir(dir: &Path, window_len: usize) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut schedules: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".schedule.csv"))
        })
        .collect();
    schedules.sort();
    let mut windows = Vec::new();
    for schedule_path in schedules {
        let name = schedule_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name.trim_end_matches(".schedule.csv");
        let rec = load_recording(&dir.join(format!("{stem}.csv")), None)?;
        let schedule = load_schedule(&schedule_path)?;
        windows.extend(slice_windows(&rec, &schedule, window_len)?);
    }
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset::new(windows))
}

/// Writes the per-channel before/after correlation and SNR table.
pub fn write_report(report: &DenoiseReport, path: &Path) -> Result<()> {
    fs::write(path, format_report(report)?).map_err(|e| Error::io(path, e))
}

pub fn format_report(report: &DenoiseReport) -> Result<String> {
    let n = report.channel_names.len();
    for len in [report.corr_before.len(), report.corr_after.len(), report.snr_db.len()] {
        if len != n {
            return Err(Error::LengthMismatch { left: n, right: len });
        }
    }
    let mut text = String::from(REPORT_HEADER);
    text.push('\n');
    for i in 0..n {
        text.push_str(&format!(
            "{},{},{},{}\n",
            report.channel_names[i], report.corr_before[i], report.corr_after[i], report.snr_db[i]
        ));
    }
    Ok(text)
}

/// Parses a report CSV back into its columns; verdicts are not part of the file.
pub fn read_report(path: &Path) -> Result<DenoiseReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {REPORT_HEADER}"),
        });
    }
    let mut report = DenoiseReport::default();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: format!("malformed report row {line:?}"),
        };
        if cells.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        report.channel_names.push(cells[0].to_string());
        report.corr_before.push(num(cells[1])?);
        report.corr_after.push(num(cells[2])?);
        report.snr_db.push(num(cells[3])?);
    }
    Ok(report)
}
