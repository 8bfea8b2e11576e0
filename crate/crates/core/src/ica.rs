//! FastICA with the kurtosis (cubic) contrast and symmetric decorrelation,
//! plus projection of components back to sensor space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::Recording;

/// Eigenvalues at or below this fraction of the largest are treated as null.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaParams {
    /// `None` means one component per channel.
    pub n_components: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IcaParams {
    fn default() -> Self {
        Self {
            n_components: None,
            seed: 42,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Centering, whitening, demixing and the pseudo-inverse remixing transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationModel {
    pub mean: DVector<f64>,
    /// components × channels
    pub whitening: DMatrix<f64>,
    /// components × components, orthonormal rows
    pub demixing: DMatrix<f64>,
    /// channels × components
    pub remixing: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SeparationModel {
    pub fn n_components(&self) -> usize {
        self.demixing.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    /// Total unmixing transform `demixing · whitening` (components × channels).
    pub fn unmixing(&self) -> DMatrix<f64> {
        &self.demixing * &self.whitening
    }

    /// Applies the fitted transform to new data with the same channel layout.
    pub fn transform(&self, rec: &Recording) -> Result<ComponentSet> {
        if rec.n_channels() != self.n_channels() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} channels, recording {}",
                self.n_channels(),
                rec.n_channels()
            )));
        }
        let centered = center_with(rec.samples(), &self.mean);
        Ok(ComponentSet {
            components: self.unmixing() * centered,
            sample_rate_hz: rec.sample_rate_hz(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelDocument>(text)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    mean: Vec<f64>,
    whitening: Vec<Vec<f64>>,
    demixing: Vec<Vec<f64>>,
    remixing: Vec<Vec<f64>>,
    converged: bool,
    iterations: usize,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("ragged {what} matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

impl From<&SeparationModel> for ModelDocument {
    fn from(m: &SeparationModel) -> Self {
        Self {
            mean: m.mean.iter().copied().collect(),
            whitening: to_rows(&m.whitening),
            demixing: to_rows(&m.demixing),
            remixing: to_rows(&m.remixing),
            converged: m.converged,
            iterations: m.iterations,
        }
    }
}

impl TryFrom<ModelDocument> for SeparationModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let model = SeparationModel {
            mean: DVector::from_vec(doc.mean),
            whitening: from_rows(&doc.whitening, "whitening")?,
            demixing: from_rows(&doc.demixing, "demixing")?,
            remixing: from_rows(&doc.remixing, "remixing")?,
            converged: doc.converged,
            iterations: doc.iterations,
        };
        let (c, k) = (model.n_channels(), model.n_components());
        if model.whitening.shape() != (k, c)
            || model.demixing.shape() != (k, k)
            || model.remixing.shape() != (c, k)
        {
            return Err(Error::DimensionMismatch("inconsistent model matrices".into()));
        }
        Ok(model)
    }
}

/// Estimated sources, one row per component, each with zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub components: DMatrix<f64>,
    pub sample_rate_hz: f64,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.components.nrows() == 0
    }

    pub fn component(&self, index: usize) -> Vec<f64> {
        self.components.row(index).iter().copied().collect()
    }

    /// Components as a recording with channels named `IC1`, `IC2`, ...
    pub fn to_recording(&self) -> Result<Recording> {
        let names = (1..=self.len()).map(|i| format!("IC{i}")).collect();
        Recording::new(names, self.sample_rate_hz, self.components.clone())
    }
}

/// Output of [`whiten`].
#[derive(Debug, Clone)]
pub struct Whitening {
    /// components × time, identity covariance
    pub whitened: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// components × channels
    pub matrix: DMatrix<f64>,
    /// channels × components, inverse of `matrix` on the retained subspace
    pub dewhitening: DMatrix<f64>,
}

fn center_with(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (mut row, m) in c.row_iter_mut().zip(mean.iter()) {
        row.add_scalar_mut(-m);
    }
    c
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending
/// order and each eigenvector's largest entry made positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let n = eig.eigenvectors.nrows();
    let mut vectors = DMatrix::zeros(n, order.len());
    for (j, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(j, &(col * sign));
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (values, vectors)
}

/// PCA whitening onto the `n_components` strongest principal directions.
pub fn whiten(samples: &DMatrix<f64>, n_components: usize) -> Result<Whitening> {
    let (channels, len) = samples.shape();
    if n_components == 0 || n_components > channels {
        return Err(Error::InvalidParameter(format!(
            "n_components must be in 1..={channels}, got {n_components}"
        )));
    }
    if len < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let mean = samples.column_mean();
    let centered = center_with(samples, &mean);
    let cov = &centered * centered.transpose() / len as f64;
    let (values, vectors) = sorted_eigen(cov);
    let largest = values[0];
    let rank = if largest > 0.0 {
        values.iter().filter(|v| **v > RANK_TOLERANCE * largest).count()
    } else {
        0
    };
    if rank < n_components {
        return Err(Error::RankDeficient {
            rank,
            required: n_components,
        });
    }
    let basis = vectors.columns(0, n_components);
    let mut matrix = basis.transpose();
    let mut dewhitening = basis.into_owned();
    for k in 0..n_components {
        let s = values[k].sqrt();
        matrix.row_mut(k).scale_mut(1.0 / s);
        dewhitening.column_mut(k).scale_mut(s);
    }
    Ok(Whitening {
        whitened: &matrix * &centered,
        mean,
        matrix,
        dewhitening,
    })
}

/// `W ← (W Wᵀ)^{-1/2} W`, which makes the rows of `W` orthonormal.
pub fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()),
    ));
    &vectors * inv_sqrt * vectors.transpose() * w
}

/// One fixed-point step with `g(u) = u³`, `g'(u) = 3u²`, before decorrelation:
/// `W⁺ = E[g(Wz) zᵀ] − diag(E[g'(Wz)]) W`.
pub fn fixed_point_step(w: &DMatrix<f64>, whitened: &DMatrix<f64>) -> DMatrix<f64> {
    let len = whitened.ncols() as f64;
    let projected = w * whitened;
    let cubed = projected.map(|u| u * u * u);
    let mut next = cubed * whitened.transpose() / len;
    for (i, row) in projected.row_iter().enumerate() {
        let mean_deriv = row.iter().map(|u| 3.0 * u * u).sum::<f64>() / len;
        let scaled = w.row(i) * mean_deriv;
        let mut target = next.row_mut(i);
        target -= scaled;
    }
    next
}

/// Largest `|1 - |⟨w_new, w_old⟩||` over rows.
fn convergence_gap(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    new.row_iter()
        .zip(old.row_iter())
        .map(|(a, b)| (1.0 - a.dot(&b).abs()).abs())
        .fold(0.0, f64::max)
}

/// Fits a symmetric FastICA model and returns it with the training components.
///
/// Hitting `max_iter` is not an error; the model's `converged` flag reports it.
pub fn fit_ica(rec: &Recording, params: &IcaParams) -> Result<(SeparationModel, ComponentSet)> {
    let channels = rec.n_channels();
    let n_components = params.n_components.unwrap_or(channels);
    if n_components == 0 || n_components > channels {
        return Err(Error::InvalidParameter(format!(
            "n_components must be in 1..={channels}, got {n_components}"
        )));
    }
    if rec.len() < 10 * channels {
        return Err(Error::InvalidRecording(format!(
            "ICA needs at least {} samples for {channels} channels, got {}",
            10 * channels,
            rec.len()
        )));
    }
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(Error::InvalidParameter("tol and max_iter must be positive".into()));
    }

    let white = whiten(rec.samples(), n_components)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = DMatrix::from_fn(n_components, n_components, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let mut w = symmetric_decorrelation(&init);

    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let next = symmetric_decorrelation(&fixed_point_step(&w, &white.whitened));
        let gap = convergence_gap(&next, &w);
        w = next;
        if gap < params.tol {
            converged = true;
            break;
        }
    }

    let components = &w * &white.whitened;
    let remixing = &white.dewhitening * w.transpose();
    let model = SeparationModel {
        mean: white.mean,
        whitening: white.matrix,
        demixing: w,
        remixing,
        converged,
        iterations,
    };
    Ok((
        model,
        ComponentSet {
            components,
            sample_rate_hz: rec.sample_rate_hz(),
        },
    ))
}

/// Projects components back to sensor space: `remixing · components + mean`.
/// `template` supplies channel names, rate and offset for the result.
pub fn inverse_ica(
    components: &ComponentSet,
    model: &SeparationModel,
    template: &Recording,
) -> Result<Recording> {
    if components.len() != model.n_components() {
        return Err(Error::DimensionMismatch(format!(
            "{} components for a {}-component model",
            components.len(),
            model.n_components()
        )));
    }
    if template.n_channels() != model.n_channels()
        || template.len() != components.components.ncols()
    {
        return Err(Error::DimensionMismatch(
            "template recording does not match model/components".into(),
        ));
    }
    let mut out = &model.remixing * &components.components;
    for (mut row, m) in out.row_iter_mut().zip(model.mean.iter()) {
        row.add_scalar_mut(*m);
    }
    template.with_samples(out)
}

/// Excess kurtosis `E[(x−μ)⁴]/σ⁴ − 3` with population moments.
pub fn kurtosis(x: &[f64]) -> Result<f64> {
    if x.len() < 4 {
        return Err(Error::InvalidParameter("kurtosis needs at least four samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d2 = (v - mean) * (v - mean);
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson;
    use std::f64::consts::PI;

    fn rec_from(samples: DMatrix<f64>) -> Recording {
        let names = (0..samples.nrows()).map(|c| format!("C{c}")).collect();
        Recording::new(names, 128.0, samples).unwrap()
    }

    /// Best |Pearson| per true source over all permutations (brute force).
    fn best_assignment(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Vec<f64> {
        let k = truth.nrows();
        let corr: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let a: Vec<f64> = truth.row(i).iter().copied().collect();
                (0..k)
                    .map(|j| {
                        let b: Vec<f64> = est.row(j).iter().copied().collect();
                        pearson(&a, &b).unwrap().abs()
                    })
                    .collect()
            })
            .collect();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = (f64::NEG_INFINITY, vec![]);
        permute(&mut perm, 0, &mut |p| {
            let scores: Vec<f64> = (0..k).map(|i| corr[i][p[i]]).collect();
            let total: f64 = scores.iter().sum();
            if total > best.0 {
                best = (total, scores);
            }
        });
        best.1
    }

    fn permute(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
        if i == p.len() {
            f(p);
            return;
        }
        for j in i..p.len() {
            p.swap(i, j);
            permute(p, i + 1, f);
            p.swap(i, j);
        }
    }

    fn sine_and_uniform(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(2, n, |r, t| {
            if r == 0 {
                (2.0 * PI * 7.0 * t as f64 / 128.0).sin()
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
    }

    #[test]
    fn recovers_two_mixed_sources() {
        let sources = sine_and_uniform(5000, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mixing = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let rec = rec_from(&mixing * &sources);
        let (model, comps) = fit_ica(&rec, &IcaParams::default()).unwrap();
        assert!(model.converged);
        for score in best_assignment(&sources, &comps.components) {
            assert!(score >= 0.99, "{score}");
        }
    }

    #[test]
    fn identity_mixing_returns_inputs() {
        let sources = sine_and_uniform(5000, 8);
        let (_, comps) = fit_ica(&rec_from(sources.clone()), &IcaParams::default()).unwrap();
        for score in best_assignment(&sources, &comps.components) {
            assert!(score >= 0.999, "{score}");
        }
    }

    #[test]
    fn duplicate_channel_is_rank_deficient() {
        let s = sine_and_uniform(1000, 1);
        let dup = DMatrix::from_fn(2, 1000, |_, t| s[(1, t)]);
        let err = fit_ica(&rec_from(dup), &IcaParams::default()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, required: 2 }), "{err}");
    }

    #[test]
    fn too_many_components_or_too_short() {
        let rec = rec_from(sine_and_uniform(1000, 1));
        let params = IcaParams { n_components: Some(3), ..IcaParams::default() };
        assert!(matches!(fit_ica(&rec, &params), Err(Error::InvalidParameter(_))));
        let short = rec_from(sine_and_uniform(19, 1));
        assert!(matches!(fit_ica(&short, &IcaParams::default()), Err(Error::InvalidRecording(_))));
    }

    #[test]
    fn components_are_centered_unit_variance() {
        let sources = sine_and_uniform(4000, 5);
        let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let shifted = (&mixing * &sources).add_scalar(7.5);
        let (model, comps) = fit_ica(&rec_from(shifted), &IcaParams::default()).unwrap();
        let n = comps.components.ncols() as f64;
        for row in comps.components.row_iter() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
        let wwt = &model.demixing * model.demixing.transpose();
        assert!((wwt - DMatrix::identity(2, 2)).amax() < 1e-9);
        let product = model.unmixing() * &model.remixing;
        assert!((product - DMatrix::identity(2, 2)).amax() < 1e-6);
    }

    /// Four-phase ±1 patterns: exactly zero mean, unit variance, zero covariance.
    fn orthogonal_pair(n: usize, scale: (f64, f64)) -> DMatrix<f64> {
        DMatrix::from_fn(2, n, |r, t| {
            let v = match (r, t % 4) {
                (0, 0 | 1) | (1, 0 | 2) => 1.0,
                _ => -1.0,
            };
            v * if r == 0 { scale.0 } else { scale.1 }
        })
    }

    #[test]
    fn whitening_diagonal_covariance() {
        let w = whiten(&orthogonal_pair(400, (2.0, 1.0)), 2).unwrap();
        // KᵀK = C⁻¹ = diag(1/4, 1) regardless of rotation
        let ktk = w.matrix.transpose() * &w.matrix;
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0]));
        assert!((ktk - expected).amax() < 1e-12);
        let cov = &w.whitened * w.whitened.transpose() / 400.0;
        assert!((cov - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn whitening_white_data_is_orthogonal() {
        let w = whiten(&orthogonal_pair(400, (1.0, 1.0)), 2).unwrap();
        assert!((w.matrix.transpose() * &w.matrix - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn whitening_constant_channel_fails() {
        let mut x = orthogonal_pair(400, (1.0, 1.0));
        x.row_mut(1).fill(3.0);
        assert!(matches!(whiten(&x, 2), Err(Error::RankDeficient { rank: 1, .. })));
    }

    #[test]
    fn round_trip_and_component_removal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sources = DMatrix::from_fn(3, 3000, |r, t| match r {
            0 => (t as f64 * 0.3).sin(),
            1 => rng.random_range(-1.0..1.0),
            _ => if (t / 37) % 2 == 0 { 1.0 } else { -1.0 },
        });
        let mixing = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.4, -0.5, 1.0, 0.1, 0.3, 0.6, 1.2]);
        let rec = rec_from(&mixing * &sources);
        let (model, comps) = fit_ica(&rec, &IcaParams::default()).unwrap();

        let back = inverse_ica(&comps, &model, &rec).unwrap();
        let rel = (back.samples() - rec.samples()).norm() / rec.samples().norm();
        assert!(rel < 1e-8, "{rel}");

        let mut zeroed = comps.clone();
        zeroed.components.row_mut(1).fill(0.0);
        let out = inverse_ica(&zeroed, &model, &rec).unwrap();
        // explicit rank-1 removal of component 1's sensor projection
        let a = model.remixing.column(1);
        let s = comps.components.row(1);
        let expected = rec.samples() - a * s;
        assert!((out.samples() - expected).amax() < 1e-9);

        let none = ComponentSet {
            components: DMatrix::zeros(3, 3000),
            sample_rate_hz: 128.0,
        };
        let flat = inverse_ica(&none, &model, &rec).unwrap();
        for c in 0..3 {
            assert!(flat.samples().row(c).iter().all(|v| (v - model.mean[c]).abs() < 1e-12));
        }

        let wrong = ComponentSet { components: DMatrix::zeros(2, 3000), sample_rate_hz: 128.0 };
        assert!(matches!(inverse_ica(&wrong, &model, &rec), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn converged_rows_are_fixed_points() {
        let sources = sine_and_uniform(5000, 2);
        let mixing = DMatrix::from_row_slice(2, 2, &[0.8, 0.3, -0.4, 1.1]);
        let rec = rec_from(&mixing * &sources);
        let params = IcaParams { tol: 1e-10, max_iter: 1000, ..IcaParams::default() };
        let (model, _) = fit_ica(&rec, &params).unwrap();
        assert!(model.converged);
        let white = whiten(rec.samples(), 2).unwrap();
        let next = symmetric_decorrelation(&fixed_point_step(&model.demixing, &white.whitened));
        assert!(convergence_gap(&next, &model.demixing) < 1e-6);
    }

    #[test]
    fn fit_is_bit_reproducible() {
        let sources = sine_and_uniform(3000, 4);
        let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.2, 1.0]);
        let rec = rec_from(&mixing * &sources);
        let params = IcaParams { seed: 99, ..IcaParams::default() };
        let (m1, c1) = fit_ica(&rec, &params).unwrap();
        let (m2, c2) = fit_ica(&rec, &params).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn model_json_round_trip() {
        let rec = rec_from(sine_and_uniform(2000, 6));
        let (model, _) = fit_ica(&rec, &IcaParams::default()).unwrap();
        let back = SeparationModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let comps = back.transform(&rec).unwrap();
        assert_eq!(comps.len(), 2);
    }

    #[test]
    fn kurtosis_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gauss: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(kurtosis(&gauss).unwrap().abs() < 0.1);
        let rademacher: Vec<f64> = (0..1000).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((kurtosis(&rademacher).unwrap() + 2.0).abs() < 1e-12);
        assert!(matches!(kurtosis(&[2.0; 10]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn decorrelation_yields_orthonormal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in [2, 5, 14] {
            let w = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = symmetric_decorrelation(&w);
            assert!((&d * d.transpose() - DMatrix::identity(k, k)).amax() < 1e-9);
        }
    }
}
