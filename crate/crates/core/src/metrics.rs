//! Validation measures: Spearman rank correlation, Hjorth-activity SNR and
//! classification accuracy.

use crate::artifact::ComponentVerdict;
use crate::error::{Error, Result};

/// Per-channel outcome of a denoising run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseReport {
    pub channel_names: Vec<String>,
    /// |Spearman| of each input channel against the EOG reference.
    pub corr_before: Vec<f64>,
    /// |Spearman| of each cleaned channel against the EOG reference.
    pub corr_after: Vec<f64>,
    /// `+inf` when nothing was removed from the channel.
    pub snr_db: Vec<f64>,
    pub verdicts: Vec<ComponentVerdict>,
}

/// 1-based ranks with ties sharing the average of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold equal values: ranks i+1..=j
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// The textbook `1 - 6 Σd² / (n(n² - 1))` form. Only valid without ties; kept
/// as an independent cross-check of [`spearman`].
pub fn spearman_closed_form(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    // rank = 1 + number of strictly smaller values (exact when tie-free)
    let rank = |v: &[f64], i: usize| 1 + v.iter().filter(|&&u| u < v[i]).count();
    let n = x.len() as f64;
    let sum_d2: f64 = (0..x.len())
        .map(|i| {
            let d = rank(x, i) as f64 - rank(y, i) as f64;
            d * d
        })
        .sum();
    Ok(1.0 - 6.0 * sum_d2 / (n * (n * n - 1.0)))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    Ok(())
}

/// Hjorth activity: the population (1/n) variance, used as signal power.
pub fn hjorth_activity(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    Ok(x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

/// `10 log10(activity(clean) / activity(noise))`. Zero noise power yields `+inf`.
pub fn snr_db(clean: &[f64], noise: &[f64]) -> Result<f64> {
    let signal = hjorth_activity(clean)?;
    let noise = hjorth_activity(noise)?;
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// What denoising removed: `input - clean`.
pub fn residual_noise(input: &[f64], clean: &[f64]) -> Result<Vec<f64>> {
    if input.len() != clean.len() {
        return Err(Error::LengthMismatch {
            left: input.len(),
            right: clean.len(),
        });
    }
    Ok(input.iter().zip(clean).map(|(a, b)| a - b).collect())
}

pub fn accuracy<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spearman_hand_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 1.0, 4.0, 3.0];
        assert_eq!(spearman_closed_form(&x, &y).unwrap(), 0.6);
        assert!((spearman(&x, &y).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        // x has a tie: (1, 2.5, 2.5, 4) vs (1, 2, 3, 4) → Pearson of ranks
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let expected = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((r - expected).abs() < 1e-15);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn activity_cases() {
        assert_eq!(hjorth_activity(&[3.0; 8]).unwrap(), 0.0);
        assert_eq!(hjorth_activity(&[-1.0, 1.0]).unwrap(), 1.0);
        let x = [0.3, -1.2, 2.5, 0.7];
        let scaled: Vec<f64> = x.iter().map(|v| v * -3.0).collect();
        let (a, b) = (hjorth_activity(&x).unwrap(), hjorth_activity(&scaled).unwrap());
        assert!((b - 9.0 * a).abs() < 1e-12);
        assert!(hjorth_activity(&[1.0]).is_err());
    }

    #[test]
    fn snr_cases() {
        let s = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(snr_db(&s, &s).unwrap(), 0.0);
        let n: Vec<f64> = s.iter().map(|v| v / 10.0).collect();
        assert!((snr_db(&s, &n).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(snr_db(&s, &[0.5; 4]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn residual_cases() {
        let clean = [1.0, 2.0, 3.0];
        assert_eq!(residual_noise(&clean, &clean).unwrap(), vec![0.0; 3]);
        let blink = [0.0, 4.0, 0.5];
        let input: Vec<f64> = clean.iter().zip(&blink).map(|(c, b)| c + b).collect();
        assert_eq!(residual_noise(&input, &clean).unwrap(), blink.to_vec());
        assert!(residual_noise(&[1.0], &clean).is_err());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[0, 0, 0]).unwrap(), 0.0);
        let truth = [0; 10];
        let mut predicted = [0; 10];
        predicted[4] = 1;
        assert_eq!(accuracy(&predicted, &truth).unwrap(), 0.9);
        assert!(matches!(accuracy::<u8>(&[], &[]), Err(Error::EmptyDataset)));
    }

    fn distinct(n: usize) -> impl Strategy<Value = Vec<f64>> {
        // a shuffled permutation scaled to floats is tie-free by construction
        Just((0..n).map(|i| i as f64 * 0.37 - 3.0).collect::<Vec<_>>()).prop_shuffle()
    }

    proptest! {
        #[test]
        fn spearman_symmetric_and_bounded(
            x in prop::collection::vec(-1e3f64..1e3, 2..60),
            seed in any::<u64>(),
        ) {
            let y: Vec<f64> = x.iter().enumerate()
                .map(|(i, v)| ((i as u64).wrapping_mul(seed | 1) % 97) as f64 - v * 0.1)
                .collect();
            if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&y, &x)) {
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn spearman_invariant_under_increasing_maps(x in distinct(30), y in distinct(30)) {
            let base = spearman(&x, &y).unwrap();
            let fx: Vec<f64> = x.iter().map(|v| v.exp() * 2.0 + v.powi(3)).collect();
            prop_assert!((spearman(&fx, &y).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn rank_path_matches_closed_form(x in distinct(25), y in distinct(25)) {
            let a = spearman(&x, &y).unwrap();
            let b = spearman_closed_form(&x, &y).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn snr_is_scale_invariant(
            clean in prop::collection::vec(-10.0f64..10.0, 8..40),
            scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        ) {
            let noise: Vec<f64> = clean.iter().enumerate().map(|(i, v)| (i as f64).sin() + 0.1 * v).collect();
            let a = snr_db(&clean, &noise).unwrap();
            let sc: Vec<f64> = clean.iter().map(|v| v * scale).collect();
            let sn: Vec<f64> = noise.iter().map(|v| v * scale).collect();
            let b = snr_db(&sc, &sn).unwrap();
            if a.is_finite() {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
