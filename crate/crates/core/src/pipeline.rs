//! End-to-end run driven by one TOML document:
//! sync → filter → ICA → score/scale → reconstruct → report → (optional) train.
//!
//! ```toml
//! [paths]
//! eeg = "eeg.csv"
//! eog = "eog.csv"
//! schedule = "schedule.csv"   # optional, enables windowing and training
//! out_dir = "out"
//!
//! [sync]
//! mode = "auto"               # auto | manual | none
//!
//! [filter]
//! order = 5
//! low_cut_hz = 0.1
//! high_cut_hz = 40.0
//!
//! [ica]
//! seed = 42
//!
//! [denoise]
//! threshold = 0.1
//!
//! [train]
//! epochs = 30
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{denoise, ComponentVerdict, DenoiseConfig};
use crate::cnn::{train, Architecture, CnnModel, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::ica::IcaParams;
use crate::metrics::DenoiseReport;
use crate::preprocess::{apply_filter, design_butterworth, locate_sync, synchronize, BandpassSpec, PulsePattern};
use crate::signal_io::{
    load_recording, load_recording_at_rate, load_schedule, slice_windows, split_dataset, write_recording,
    write_report, Dataset, Recording, DEFAULT_WINDOW_LEN,
};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EEGICA_CONFIG";

/// Guard between the end of the marker and the first data sample.
pub const DEFAULT_GUARD_S: f64 = 2.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub eeg: Option<PathBuf>,
    pub eog: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    /// Overrides the sidecar rate of every input.
    pub sample_rate_hz: Option<f64>,
    pub eeg_channels: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncMode {
    #[default]
    Auto,
    Manual,
    /// Inputs are already aligned; both are cut to the shorter length.
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSection {
    pub mode: SyncMode,
    /// Marker channel names; the first channel when unset.
    pub eeg_channel: Option<String>,
    pub eog_channel: Option<String>,
    /// Marker onsets for manual mode.
    pub eeg_index: Option<usize>,
    pub eog_index: Option<usize>,
    /// Seconds from marker onset to the first data sample. Defaults to the
    /// marker length plus [`DEFAULT_GUARD_S`].
    pub skip_s: Option<f64>,
    pub pattern: PulsePattern,
}

impl SyncSection {
    fn skip_samples(&self, sample_rate_hz: f64) -> Result<usize> {
        let skip = self
            .skip_s
            .unwrap_or_else(|| self.pattern.total_duration_s() + DEFAULT_GUARD_S);
        if !(skip >= 0.0 && skip.is_finite()) {
            return Err(Error::Config(format!("sync.skip_s must be non-negative, got {skip}")));
        }
        Ok((skip * sample_rate_hz).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsSection {
    pub len: usize,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for WindowsSection {
    fn default() -> Self {
        Self {
            len: DEFAULT_WINDOW_LEN,
            train_fraction: 0.8,
            split_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    /// Training runs only when this is set and a schedule is given.
    pub enabled: bool,
    #[serde(flatten)]
    pub config: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            enabled: true,
            config: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub signal: SignalSection,
    pub sync: SyncSection,
    pub filter: BandpassSpec,
    pub ica: IcaParams,
    pub denoise: DenoiseConfig,
    pub windows: WindowsSection,
    pub train: TrainSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads a config file; relative paths become relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let paths = &mut cfg.paths;
        for p in [&mut paths.eeg, &mut paths.eog, &mut paths.schedule, &mut paths.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `path` if given, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    /// Applies one seed to ICA, the train/test split and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.ica.seed = seed;
        self.windows.split_seed = seed;
        self.train.config.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        if let Some(rate) = self.signal.sample_rate_hz {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!("signal.sample_rate_hz must be positive, got {rate}")));
            }
            self.filter.validate(rate).map_err(as_config)?;
        }
        self.sync.pattern.validate().map_err(as_config)?;
        if self.sync.mode == SyncMode::Manual && (self.sync.eeg_index.is_none() || self.sync.eog_index.is_none()) {
            return Err(Error::Config("manual sync needs sync.eeg_index and sync.eog_index".into()));
        }
        self.denoise.validate().map_err(as_config)?;
        self.train.config.validate().map_err(as_config)?;
        if self.windows.len == 0 {
            return Err(Error::Config("windows.len must be positive".into()));
        }
        if !(self.windows.train_fraction > 0.0 && self.windows.train_fraction < 1.0) {
            return Err(Error::Config("windows.train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn required(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        path.clone().ok_or_else(|| Error::Config(format!("paths.{key} is not set")))
    }

    pub fn load_input(&self, path: &Path, expected_channels: Option<usize>) -> Result<Recording> {
        match self.signal.sample_rate_hz {
            Some(rate) => load_recording_at_rate(path, expected_channels, rate),
            None => load_recording(path, expected_channels),
        }
    }
}

/// Aligns the two streams according to the sync section. Returns the cropped
/// recordings and the marker onsets used (`None` for mode `none`).
pub fn sync_stage(eeg: &Recording, eog: &Recording, sync: &SyncSection) -> Result<(Recording, Recording, Option<(usize, usize)>)> {
    let (eeg_mark, eog_mark) = match sync.mode {
        SyncMode::None => {
            let (a, b) = synchronize(eeg, eog, 0, 0)?;
            return Ok((a, b, None));
        }
        SyncMode::Manual => (
            sync.eeg_index.ok_or_else(|| Error::Config("sync.eeg_index is not set".into()))?,
            sync.eog_index.ok_or_else(|| Error::Config("sync.eog_index is not set".into()))?,
        ),
        SyncMode::Auto => {
            let first = |rec: &Recording| rec.channel_names().first().cloned().unwrap_or_default();
            let eeg_ch = sync.eeg_channel.clone().unwrap_or_else(|| first(eeg));
            let eog_ch = sync.eog_channel.clone().unwrap_or_else(|| first(eog));
            let found = locate_sync(eeg, &eeg_ch, eog, &eog_ch, &sync.pattern)?;
            (found.eeg_start_index, found.eog_start_index)
        }
    };
    let skip = sync.skip_samples(eeg.sample_rate_hz())?;
    let (a, b) = synchronize(eeg, eog, eeg_mark + skip, eog_mark + skip)?;
    Ok((a, b, Some((eeg_mark, eog_mark))))
}

pub fn format_verdicts(verdicts: &[ComponentVerdict]) -> String {
    let mut text = String::from("component,abs_correlation,selected,scale_factor\n");
    for v in verdicts {
        text.push_str(&format!(
            "{},{},{},{}\n",
            v.component_index, v.abs_correlation, v.selected, v.scale_factor
        ));
    }
    text
}

pub fn write_verdicts(verdicts: &[ComponentVerdict], path: &Path) -> Result<()> {
    fs::write(path, format_verdicts(verdicts)).map_err(|e| Error::io(path, e))
}

/// The default network for `channels`-channel windows. The dense stack is
/// locked to the default window length, so any other length is refused.
pub fn architecture_for(channels: usize, window_len: usize) -> Result<Architecture> {
    let arch = Architecture {
        input_channels: channels,
        ..Architecture::default()
    };
    if window_len != arch.input_len {
        return Err(Error::Config(format!(
            "the classifier takes {}-sample windows, windows.len is {window_len}",
            arch.input_len
        )));
    }
    arch.validate()?;
    Ok(arch)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub report: DenoiseReport,
    pub history: Option<TrainHistory>,
    /// Every file written, in order.
    pub artifacts: Vec<PathBuf>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let eeg_path = cfg.required(&cfg.paths.eeg, "eeg")?;
    let eog_path = cfg.required(&cfg.paths.eog, "eog")?;
    let out_dir = cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("eegica-out"));

    // read everything before writing anything
    let eeg = cfg.load_input(&eeg_path, cfg.signal.eeg_channels)?;
    let eog = cfg.load_input(&eog_path, None)?;
    let schedule = cfg.paths.schedule.as_deref().map(load_schedule).transpose()?;

    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut artifacts = Vec::new();
    let mut emit = |name: &str| {
        let p = out_dir.join(name);
        artifacts.push(p.clone());
        p
    };

    let (eeg, eog, _) = sync_stage(&eeg, &eog, &cfg.sync)?;
    let eog = reference_channel(&eog, cfg.sync.eog_channel.as_deref())?;
    write_recording(&eeg, &emit("synced_eeg.csv"))?;
    write_recording(&eog, &emit("synced_eog.csv"))?;

    let coeffs = design_butterworth(&cfg.filter, eeg.sample_rate_hz())?;
    let eeg = apply_filter(&eeg, &coeffs)?;
    let eog = apply_filter(&eog, &coeffs)?;
    write_recording(&eeg, &emit("filtered_eeg.csv"))?;
    write_recording(&eog, &emit("filtered_eog.csv"))?;

    let outcome = denoise(&eeg, &eog, &cfg.denoise, &cfg.ica)?;
    write_recording(&outcome.components.to_recording()?, &emit("components.csv"))?;
    let model_path = emit("ica_model.json");
    fs::write(&model_path, outcome.model.to_json()?).map_err(|e| Error::io(&model_path, e))?;
    write_verdicts(&outcome.report.verdicts, &emit("verdicts.csv"))?;
    write_recording(&outcome.clean, &emit("clean_eeg.csv"))?;
    write_report(&outcome.report, &emit("report.csv"))?;

    let mut history = None;
    if let (Some(schedule), true) = (schedule, cfg.train.enabled) {
        let windows = slice_windows(&outcome.clean, &schedule, cfg.windows.len)?;
        let ds = Dataset::new(windows);
        let (train_set, test_set) = if ds.len() >= 2 {
            let (a, b) = split_dataset(&ds, cfg.windows.train_fraction, cfg.windows.split_seed)?;
            (a, (!b.is_empty()).then_some(b))
        } else {
            (ds, None)
        };
        let arch = architecture_for(outcome.clean.n_channels(), cfg.windows.len)?;
        let mut model = CnnModel::new(arch, cfg.train.config.seed)?;
        let h = train(&mut model, &train_set, test_set.as_ref(), &cfg.train.config)?;
        model.save(&emit("cnn_model.json"))?;
        h.save_csv(&emit("loss_history.csv"))?;
        history = Some(h);
    }

    Ok(PipelineOutcome {
        out_dir,
        report: outcome.report,
        history,
        artifacts,
    })
}

/// The single EOG channel used as the reference: the named one, or the only
/// channel of a one-channel recording.
pub fn reference_channel(eog: &Recording, name: Option<&str>) -> Result<Recording> {
    let index = match name {
        Some(n) => eog.channel_index(n)?,
        None if eog.n_channels() == 1 => 0,
        None => {
            return Err(Error::ChannelCountMismatch {
                expected: 1,
                found: eog.n_channels(),
            })
        }
    };
    if eog.n_channels() == 1 {
        return Ok(eog.clone());
    }
    Recording::from_rows(vec![eog.channel_names()[index].clone()], eog.sample_rate_hz(), &[eog.channel(index)])
}
