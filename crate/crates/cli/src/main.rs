//! `eegica`: command-line front end for ocular artifact removal and window
//! classification. Every subcommand reads the shared TOML config (`--config`
//! or `$EEGICA_CONFIG`) and lets flags override it.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eegica::artifact::{build_report, denoise};
use eegica::cnn::{train, CnnModel, TrainHistory};
use eegica::error::{exit, Error, Result};
use eegica::ica::fit_ica;
use eegica::pipeline::{
    architecture_for, reference_channel, run_pipeline, sync_stage, write_verdicts, PipelineConfig, SyncMode,
    CONFIG_ENV,
};
use eegica::preprocess::{apply_filter, design_butterworth};
use eegica::signal_io::{
    format_report, load_recording, load_training_dir, split_dataset, write_recording, write_report, write_schedule,
};
use eegica::synth::{dataset_to_recording, make_labeled_set, make_scenario, ScenarioSpec};

#[derive(Parser)]
#[command(name = "eegica", version, about = "Remove ocular artifacts from EEG with FastICA and classify EEG windows")]
struct Cli {
    /// Pipeline config (TOML); flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic EEG/EOG scenario with ground truth
    Synth(SynthArgs),
    /// Align EEG and EOG on their pulse markers
    Sync(SyncArgs),
    /// Butterworth bandpass a recording
    Filter(FilterArgs),
    /// Decompose a recording into independent components
    Ica(IcaArgs),
    /// Remove EOG-correlated components and report before/after metrics
    Denoise(DenoiseArgs),
    /// Correlation and SNR report for an existing input/cleaned pair
    Metrics(MetricsArgs),
    /// Train the window classifier
    Train(TrainArgs),
    /// Classify one window
    Predict(PredictArgs),
    /// Run sync, filter, ICA denoising, report and optional training
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario description (TOML); defaults when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write a separable labeled set with this many windows per class
    #[arg(long, value_name = "N")]
    labeled: Option<usize>,
}

#[derive(Args)]
struct SyncArgs {
    #[arg(long)]
    eeg: PathBuf,
    #[arg(long)]
    eog: PathBuf,
    /// Locate the pulse markers automatically
    #[arg(long, conflicts_with_all = ["eeg_idx", "eog_idx"])]
    auto: bool,
    #[arg(long, requires = "eog_idx")]
    eeg_idx: Option<usize>,
    #[arg(long, requires = "eeg_idx")]
    eog_idx: Option<usize>,
    #[arg(long)]
    eeg_channel: Option<String>,
    #[arg(long)]
    eog_channel: Option<String>,
    /// Seconds from marker onset to the first data sample
    #[arg(long)]
    skip_s: Option<f64>,
    /// Output directory for synced_eeg.csv and synced_eog.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
}

#[derive(Args)]
struct IcaArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output directory for components.csv and ica_model.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    eeg: PathBuf,
    #[arg(long)]
    eog: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    report: PathBuf,
    /// Where to write the cleaned recording
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export the components, separation model and verdicts for inspection
    #[arg(long, value_name = "DIR")]
    dump_components: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Recording before denoising
    #[arg(long)]
    input: PathBuf,
    /// Recording after denoising
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    eog: PathBuf,
    /// Write the report here instead of standard output
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of <name>.csv recordings with <name>.schedule.csv labels
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Loss and accuracy per epoch (CSV)
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// One window as a recording CSV
    #[arg(long)]
    window: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    eeg: Option<PathBuf>,
    #[arg(long)]
    eog: Option<PathBuf>,
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Skip windowing and training even when a schedule is configured
    #[arg(long)]
    no_train: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eegica: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Sync(a) => cmd_sync(cfg, a),
        Command::Filter(a) => cmd_filter(cfg, a),
        Command::Ica(a) => cmd_ica(cfg, a),
        Command::Denoise(a) => cmd_denoise(cfg, a),
        Command::Metrics(a) => cmd_metrics(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Predict(a) => cmd_predict(a),
        Command::Pipeline(a) => cmd_pipeline(cfg, a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec: ScenarioSpec = match &a.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let gt = make_scenario(&spec).map_err(|e| match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    })?;
    create_dir(&a.out)?;

    let mut cfg = PipelineConfig::default();
    match &gt.raw {
        Some(raw) => {
            write_recording(&raw.eeg, &a.out.join("eeg.csv"))?;
            write_recording(&raw.eog, &a.out.join("eog.csv"))?;
            let pulse = spec.pulse.clone().unwrap_or_default();
            cfg.sync.pattern = pulse.pattern.clone();
            cfg.sync.skip_s = Some(pulse.data_offset_s());
            println!("markers at eeg {} eog {}", raw.eeg_marker_index, raw.eog_marker_index);
        }
        None => {
            write_recording(&gt.contaminated, &a.out.join("eeg.csv"))?;
            write_recording(&gt.eog_recording, &a.out.join("eog.csv"))?;
            cfg.sync.mode = SyncMode::None;
        }
    }
    write_recording(&gt.clean, &a.out.join("clean.csv"))?;
    write_schedule(&gt.schedule, &a.out.join("schedule.csv"))?;

    cfg.paths.eeg = Some("eeg.csv".into());
    cfg.paths.eog = Some("eog.csv".into());
    cfg.paths.schedule = Some("schedule.csv".into());
    cfg.paths.out_dir = Some("out".into());
    cfg.ica.seed = spec.seed;
    let text = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&a.out.join("pipeline.toml"), &text)?;

    if let Some(n) = a.labeled {
        let dir = a.out.join("train");
        create_dir(&dir)?;
        let ds = make_labeled_set(n, cfg.windows.len, spec.seed)?;
        let (rec, schedule) = dataset_to_recording(&ds)?;
        write_recording(&rec, &dir.join("labeled.csv"))?;
        write_schedule(&schedule, &dir.join("labeled.schedule.csv"))?;
    }
    println!("wrote scenario to {}", a.out.display());
    Ok(())
}

fn cmd_sync(mut cfg: PipelineConfig, a: SyncArgs) -> Result<()> {
    if let (Some(e), Some(o)) = (a.eeg_idx, a.eog_idx) {
        cfg.sync.mode = SyncMode::Manual;
        cfg.sync.eeg_index = Some(e);
        cfg.sync.eog_index = Some(o);
    } else if a.auto {
        cfg.sync.mode = SyncMode::Auto;
    }
    if a.eeg_channel.is_some() {
        cfg.sync.eeg_channel = a.eeg_channel;
    }
    if a.eog_channel.is_some() {
        cfg.sync.eog_channel = a.eog_channel;
    }
    if a.skip_s.is_some() {
        cfg.sync.skip_s = a.skip_s;
    }
    cfg.validate()?;
    let eeg = cfg.load_input(&a.eeg, cfg.signal.eeg_channels)?;
    let eog = cfg.load_input(&a.eog, None)?;
    let (eeg, eog, marks) = sync_stage(&eeg, &eog, &cfg.sync)?;
    create_dir(&a.out)?;
    write_recording(&eeg, &a.out.join("synced_eeg.csv"))?;
    write_recording(&eog, &a.out.join("synced_eog.csv"))?;
    if let Some((e, o)) = marks {
        println!("eeg marker {e}, eog marker {o}");
    }
    println!("{} common samples", eeg.len());
    Ok(())
}

fn cmd_filter(mut cfg: PipelineConfig, a: FilterArgs) -> Result<()> {
    if let Some(o) = a.order {
        cfg.filter.order = o;
    }
    if let Some(l) = a.low {
        cfg.filter.low_cut_hz = l;
    }
    if let Some(h) = a.high {
        cfg.filter.high_cut_hz = h;
    }
    cfg.validate()?;
    let rec = cfg.load_input(&a.input, None)?;
    let coeffs = design_butterworth(&cfg.filter, rec.sample_rate_hz()).map_err(config_error)?;
    write_recording(&apply_filter(&rec, &coeffs)?, &a.out)
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    }
}

fn cmd_ica(mut cfg: PipelineConfig, a: IcaArgs) -> Result<()> {
    if a.components.is_some() {
        cfg.ica.n_components = a.components;
    }
    if let Some(s) = a.seed {
        cfg.ica.seed = s;
    }
    cfg.validate()?;
    let rec = cfg.load_input(&a.input, cfg.signal.eeg_channels)?;
    let (model, components) = fit_ica(&rec, &cfg.ica).map_err(config_error)?;
    create_dir(&a.out)?;
    write_recording(&components.to_recording()?, &a.out.join("components.csv"))?;
    write_text(&a.out.join("ica_model.json"), &model.to_json()?)?;
    println!(
        "{} components, {} after {} iterations",
        model.n_components(),
        if model.converged { "converged" } else { "not converged" },
        model.iterations
    );
    Ok(())
}

fn cmd_denoise(mut cfg: PipelineConfig, a: DenoiseArgs) -> Result<()> {
    if let Some(t) = a.threshold {
        cfg.denoise.threshold = t;
    }
    if let Some(s) = a.seed {
        cfg.ica.seed = s;
    }
    if a.components.is_some() {
        cfg.ica.n_components = a.components;
    }
    cfg.validate()?;
    let eeg = cfg.load_input(&a.eeg, cfg.signal.eeg_channels)?;
    let eog = reference_channel(&cfg.load_input(&a.eog, None)?, cfg.sync.eog_channel.as_deref())?;
    let outcome = denoise(&eeg, &eog, &cfg.denoise, &cfg.ica).map_err(config_error)?;
    if let Some(dir) = &a.dump_components {
        create_dir(dir)?;
        write_recording(&outcome.components.to_recording()?, &dir.join("components.csv"))?;
        write_text(&dir.join("ica_model.json"), &outcome.model.to_json()?)?;
        write_verdicts(&outcome.report.verdicts, &dir.join("verdicts.csv"))?;
    }
    if let Some(out) = &a.out {
        write_recording(&outcome.clean, out)?;
    }
    write_report(&outcome.report, &a.report)?;
    let selected = outcome.report.verdicts.iter().filter(|v| v.selected).count();
    println!("{selected} of {} components attenuated", outcome.report.verdicts.len());
    Ok(())
}

fn cmd_metrics(cfg: PipelineConfig, a: MetricsArgs) -> Result<()> {
    let input = cfg.load_input(&a.input, None)?;
    let clean = cfg.load_input(&a.clean, Some(input.n_channels()))?;
    let eog = reference_channel(&cfg.load_input(&a.eog, None)?, cfg.sync.eog_channel.as_deref())?;
    let report = build_report(&input, &clean, &eog, Vec::new())?;
    match &a.report {
        Some(p) => write_report(&report, p),
        None => {
            print!("{}", format_report(&report)?);
            Ok(())
        }
    }
}

fn cmd_train(mut cfg: PipelineConfig, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.train.config;
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        t.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    let ds = load_training_dir(&a.data, cfg.windows.len)?;
    let channels = ds.windows[0].samples.nrows();
    let (train_set, test_set) = if ds.len() >= 2 {
        let (tr, te) = split_dataset(&ds, cfg.windows.train_fraction, cfg.windows.split_seed)?;
        (tr, (!te.is_empty()).then_some(te))
    } else {
        (ds, None)
    };
    let mut model = CnnModel::new(architecture_for(channels, cfg.windows.len)?, cfg.train.config.seed)?;
    let history = train(&mut model, &train_set, test_set.as_ref(), &cfg.train.config)?;
    model.save(&a.out)?;
    if let Some(p) = &a.history {
        history.save_csv(p)?;
    }
    print_summary(&history);
    Ok(())
}

fn print_summary(h: &TrainHistory) {
    if let (Some(loss), Some(acc)) = (h.loss.last(), h.train_accuracy.last()) {
        print!("{} epochs, loss {loss:.4}, train accuracy {acc:.3}", h.epochs());
        if let Some(test) = h.test_accuracy.as_ref().and_then(|t| t.last()) {
            print!(", test accuracy {test:.3}");
        }
        println!();
    }
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = CnnModel::load(&a.model)?;
    let window = load_recording(&a.window, Some(model.architecture().input_channels))?;
    let scores = model.forward(&[window.samples()])?;
    let label = eegica::cnn::argmax_label(&scores[0]);
    let parts: Vec<String> = eegica::Label::ALL
        .iter()
        .zip(scores[0])
        .map(|(l, s)| format!("{l}={s:.4}"))
        .collect();
    println!("{label} ({})", parts.join(" "));
    Ok(())
}

fn cmd_pipeline(mut cfg: PipelineConfig, a: PipelineArgs) -> Result<()> {
    for (slot, value) in [
        (&mut cfg.paths.eeg, a.eeg),
        (&mut cfg.paths.eog, a.eog),
        (&mut cfg.paths.schedule, a.schedule),
        (&mut cfg.paths.out_dir, a.out),
    ] {
        if value.is_some() {
            *slot = value;
        }
    }
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    if let Some(t) = a.threshold {
        cfg.denoise.threshold = t;
    }
    if let Some(e) = a.epochs {
        cfg.train.config.epochs = e;
    }
    if a.no_train {
        cfg.train.enabled = false;
    }
    let outcome = run_pipeline(&cfg)?;
    let selected = outcome.report.verdicts.iter().filter(|v| v.selected).count();
    println!(
        "{selected} of {} components attenuated; outputs in {}",
        outcome.report.verdicts.len(),
        outcome.out_dir.display()
    );
    if let Some(h) = &outcome.history {
        print_summary(h);
    }
    Ok(())
}
