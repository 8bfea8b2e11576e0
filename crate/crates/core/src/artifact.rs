//! EOG component selection and attenuation.
//!
//! Each independent component is scored by its absolute Spearman correlation
//! with the EOG reference. Components scoring above the threshold are scaled
//! down, not removed:
//!
//! | score `c`              | scale factor |
//! |------------------------|--------------|
//! | `c <= threshold`       | 1            |
//! | `threshold < c <= 0.5` | `1 - 2c`     |
//! | `c > 0.5`              | `1 - c`      |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ica::{fit_ica, inverse_ica, ComponentSet, IcaParams, SeparationModel};
use crate::metrics::{residual_noise, snr_db, spearman, DenoiseReport};
use crate::signal_io::Recording;

/// Upper end of the `1 - 2c` branch (inclusive).
pub const STRONG_CORRELATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentVerdict {
    pub component_index: usize,
    pub abs_correlation: f64,
    pub selected: bool,
    pub scale_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseConfig {
    pub threshold: f64,
    /// When false, only positive correlations can select a component.
    pub use_absolute_correlation: bool,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            use_absolute_correlation: true,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn check_eog(eog: &Recording, len: usize) -> Result<Vec<f64>> {
    if eog.n_channels() != 1 {
        return Err(Error::ChannelCountMismatch {
            expected: 1,
            found: eog.n_channels(),
        });
    }
    if eog.len() != len {
        return Err(Error::LengthMismatch {
            left: len,
            right: eog.len(),
        });
    }
    Ok(eog.channel(0))
}

fn signed_scores(components: &ComponentSet, eog: &Recording) -> Result<Vec<f64>> {
    let reference = check_eog(eog, components.components.ncols())?;
    (0..components.len())
        .map(|i| spearman(&components.component(i), &reference))
        .collect()
}

/// `(component index, |Spearman(component, EOG)|)` for every component.
pub fn score_components(components: &ComponentSet, eog: &Recording) -> Result<Vec<(usize, f64)>> {
    Ok(signed_scores(components, eog)?
        .into_iter()
        .map(f64::abs)
        .enumerate()
        .collect())
}

/// Scale factor for one score under the piecewise rule.
pub fn scale_factor(score: f64, threshold: f64) -> f64 {
    if score <= threshold {
        1.0
    } else if score <= STRONG_CORRELATION {
        1.0 - 2.0 * score
    } else {
        1.0 - score
    }
}

pub fn decide(scores: &[(usize, f64)], config: &DenoiseConfig) -> Result<Vec<ComponentVerdict>> {
    config.validate()?;
    scores
        .iter()
        .map(|&(component_index, score)| {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::InvalidParameter(format!(
                    "score {score} for component {component_index} is outside [0, 1]"
                )));
            }
            Ok(ComponentVerdict {
                component_index,
                abs_correlation: score,
                selected: score > config.threshold,
                scale_factor: scale_factor(score, config.threshold),
            })
        })
        .collect()
}

/// Multiplies each component by its verdict's scale factor.
pub fn apply_verdicts(components: &ComponentSet, verdicts: &[ComponentVerdict]) -> Result<ComponentSet> {
    if verdicts.len() != components.len() {
        return Err(Error::LengthMismatch {
            left: components.len(),
            right: verdicts.len(),
        });
    }
    let mut out = components.clone();
    for v in verdicts {
        if v.component_index >= out.len() {
            return Err(Error::DimensionMismatch(format!(
                "verdict for component {} of {}",
                v.component_index,
                out.len()
            )));
        }
        if v.scale_factor != 1.0 {
            out.components.row_mut(v.component_index).scale_mut(v.scale_factor);
        }
    }
    Ok(out)
}

/// Everything produced by one [`denoise`] call.
#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub clean: Recording,
    pub report: DenoiseReport,
    pub model: SeparationModel,
    pub components: ComponentSet,
}

/// Per-channel before/after correlation against the EOG and Hjorth SNR of
/// the cleaned channel over the removed residual.
pub fn build_report(
    input: &Recording,
    clean: &Recording,
    eog: &Recording,
    verdicts: Vec<ComponentVerdict>,
) -> Result<DenoiseReport> {
    if input.samples().shape() != clean.samples().shape() {
        return Err(Error::DimensionMismatch("input and clean differ in shape".into()));
    }
    let reference = check_eog(eog, input.len())?;
    let mut report = DenoiseReport {
        channel_names: input.channel_names().to_vec(),
        verdicts,
        ..DenoiseReport::default()
    };
    for ch in 0..input.n_channels() {
        let (before, after) = (input.channel(ch), clean.channel(ch));
        report.corr_before.push(spearman(&before, &reference)?.abs());
        report.corr_after.push(spearman(&after, &reference)?.abs());
        let noise = residual_noise(&before, &after)?;
        report.snr_db.push(snr_db(&after, &noise)?);
    }
    Ok(report)
}

/// Fit ICA, score and scale the EOG-like components, reconstruct, report.
pub fn denoise(
    eeg: &Recording,
    eog: &Recording,
    config: &DenoiseConfig,
    ica: &IcaParams,
) -> Result<DenoiseOutcome> {
    config.validate()?;
    check_eog(eog, eeg.len())?;
    let (model, components) = fit_ica(eeg, ica)?;
    let scores: Vec<(usize, f64)> = if config.use_absolute_correlation {
        score_components(&components, eog)?
    } else {
        signed_scores(&components, eog)?
            .into_iter()
            .map(|s| s.max(0.0))
            .enumerate()
            .collect()
    };
    let verdicts = decide(&scores, config)?;
    let scaled = apply_verdicts(&components, &verdicts)?;
    let clean = inverse_ica(&scaled, &model, eeg)?;
    let report = build_report(eeg, &clean, eog, verdicts)?;
    Ok(DenoiseOutcome {
        clean,
        report,
        model,
        components,
    })
}
