//! Change detection by unmasking.
//!
//! A window's examples are split into the reference half (label normal) and
//! the examined half (label abnormal). A linear classifier is trained to tell
//! them apart, its training accuracy is recorded, the `m` features with the
//! strongest weights are dropped, and the process repeats `k` times. Halves
//! that differ only in a few features become inseparable quickly; the mean
//! accuracy over the loops is the anomaly score of the examined half.

mod logistic;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Channel;

pub use logistic::{Fit, LogisticConfig, Solver, Trainer};

/// Accuracy assigned to loops that cannot be trained.
pub const CHANCE: f64 = 0.5;

/// Labeled examples of one `(window, bin, channel)` triple, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub window_id: usize,
    pub bin: usize,
    pub channel: Channel,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<bool>,
}

impl WindowBatch {
    pub fn new(window_id: usize, bin: usize, channel: Channel, dim: usize) -> Self {
        Self {
            window_id,
            bin,
            channel,
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Appends an example; `abnormal` is true for the examined half.
    pub fn push(&mut self, values: &[f64], abnormal: bool) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::Argument(format!(
                "example of length {} in a batch of dimension {}",
                values.len(),
                self.dim
            )));
        }
        self.features.extend_from_slice(values);
        self.labels.push(abnormal);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// `(normal, abnormal)` example counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let abnormal = self.labels.iter().filter(|&&l| l).count();
        (self.labels.len() - abnormal, abnormal)
    }

    /// The same examples with every label flipped.
    pub fn with_swapped_labels(&self) -> Self {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|l| *l = !*l);
        out
    }
}

/// Features still available to the classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    mask: Vec<bool>,
    indices: Vec<usize>,
}

impl ActiveSet {
    pub fn full(dim: usize) -> Self {
        Self {
            mask: vec![true; dim],
            indices: (0..dim).collect(),
        }
    }

    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; dim];
        for i in indices {
            *mask
                .get_mut(i)
                .ok_or_else(|| Error::Argument(format!("feature {i} outside dimension {dim}")))? =
                true;
        }
        let indices = (0..dim).filter(|&i| mask[i]).collect();
        Ok(Self { mask, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn contains(&self, feature: usize) -> bool {
        self.mask.get(feature).copied().unwrap_or(false)
    }

    /// Active features in increasing order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn remove(&mut self, features: &[usize]) {
        for &f in features {
            if let Some(m) = self.mask.get_mut(f) {
                *m = false;
            }
        }
        let mask = &self.mask;
        self.indices.retain(|&i| mask[i]);
    }
}

/// A trained linear classifier. Weights of inactive features are exactly 0;
/// the bias is neither regularized nor eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub active: ActiveSet,
}

impl ClassifierState {
    pub fn score(&self, x: &[f64]) -> f64 {
        logistic::dot(&self.weights, x) + self.bias
    }
}

/// Trains on `active` with the default descent settings and returns the
/// classifier and its training accuracy.
///
/// A batch missing one of the classes yields [`Error::DegenerateBatch`].
pub fn train_logistic(
    batch: &WindowBatch,
    active: &ActiveSet,
    lambda: f64,
) -> Result<(ClassifierState, f64)> {
    let fit = train_logistic_with(batch, active, LogisticConfig::new(lambda))?;
    Ok((fit.state, fit.accuracy))
}

pub fn train_logistic_with(
    batch: &WindowBatch,
    active: &ActiveSet,
    config: LogisticConfig,
) -> Result<Fit> {
    validate_lambda(config.lambda)?;
    if active.is_empty() {
        return Err(Error::Argument("active feature set is empty".into()));
    }
    if active.mask.len() != batch.dim() {
        return Err(Error::Argument(format!(
            "active set over {} features for a batch of dimension {}",
            active.mask.len(),
            batch.dim()
        )));
    }
    let (normal, abnormal) = batch.class_counts();
    if normal == 0 || abnormal == 0 {
        return Err(Error::DegenerateBatch { normal, abnormal });
    }
    Ok(Trainer::new(batch, config).fit(active))
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Argument(format!(
            "regularization {lambda} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// Outcome of one elimination round.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    /// Removed features, in selection order.
    pub removed: Vec<usize>,
    pub active: ActiveSet,
    /// The active set held no more than `m` features and is now empty.
    pub exhausted: bool,
}

/// Drops the `m/2` largest and `m/2` most negative weights from the active set.
///
/// Ties go to the lower feature index. A side with fewer than `m/2` weights of
/// its sign hands its unused quota to the remaining features with the largest
/// `|weight|`.
pub fn eliminate_features(state: &ClassifierState, m: usize) -> Result<Elimination> {
    if m == 0 || !m.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "features eliminated per loop must be even and positive, got {m}"
        )));
    }
    let active = state.active.indices();
    if active.len() <= m {
        let removed = active.to_vec();
        let mut rest = state.active.clone();
        rest.remove(&removed);
        return Ok(Elimination {
            removed,
            active: rest,
            exhausted: true,
        });
    }
    let w = &state.weights;
    let half = m / 2;
    let mut positive: Vec<usize> = active.iter().copied().filter(|&j| w[j] > 0.0).collect();
    positive.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    positive.truncate(half);
    let mut negative: Vec<usize> = active.iter().copied().filter(|&j| w[j] < 0.0).collect();
    negative.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    negative.truncate(half);

    let mut removed = positive;
    removed.extend(negative);
    let shortfall = m - removed.len();
    if shortfall > 0 {
        let mut taken = vec![false; w.len()];
        removed.iter().for_each(|&j| taken[j] = true);
        let mut rest: Vec<usize> = active.iter().copied().filter(|&j| !taken[j]).collect();
        rest.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
        removed.extend(rest.into_iter().take(shortfall));
    }
    let mut rest = state.active.clone();
    rest.remove(&removed);
    Ok(Elimination {
        removed,
        active: rest,
        exhausted: false,
    })
}

/// Accuracy trace of one unmasking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmaskingProfile {
    pub accuracies: Vec<f64>,
    /// Number of features the classifier was trained on in each loop.
    pub active_sizes: Vec<usize>,
    /// Descent iterations per loop (0 for untrained loops).
    pub iterations: Vec<usize>,
    pub eliminated_per_loop: usize,
    /// The batch lacked two examples of some class; every loop is at chance.
    pub degenerate: bool,
}

impl UnmaskingProfile {
    pub fn loops(&self) -> usize {
        self.accuracies.len()
    }

    pub fn score(&self) -> f64 {
        score(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnmaskParams {
    pub loops: usize,
    pub eliminate: usize,
    pub lambda: f64,
}

impl Default for UnmaskParams {
    fn default() -> Self {
        Self {
            loops: 10,
            eliminate: 50,
            lambda: 0.1,
        }
    }
}

impl UnmaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.loops == 0 {
            return Err(Error::Argument("unmasking needs at least one loop".into()));
        }
        if self.eliminate < 2 || !self.eliminate.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "features eliminated per loop must be even and >= 2, got {}",
                self.eliminate
            )));
        }
        validate_lambda(self.lambda)
    }
}

/// Runs `k` train/eliminate loops over the batch.
///
/// Loops after the active set runs out, and every loop of a batch with fewer
/// than two examples in some class, score [`CHANCE`].
pub fn unmask(batch: &WindowBatch, k: usize, m: usize, lambda: f64) -> Result<UnmaskingProfile> {
    unmask_with(
        batch,
        &UnmaskParams {
            loops: k,
            eliminate: m,
            lambda,
        },
        LogisticConfig::new(lambda),
    )
}

pub fn unmask_with(
    batch: &WindowBatch,
    params: &UnmaskParams,
    solver: LogisticConfig,
) -> Result<UnmaskingProfile> {
    params.validate()?;
    let (k, m) = (params.loops, params.eliminate);
    let dim = batch.dim();
    let arithmetic_sizes: Vec<usize> = (0..k).map(|i| dim.saturating_sub(i * m)).collect();
    let (normal, abnormal) = batch.class_counts();
    if normal < 2 || abnormal < 2 || dim == 0 {
        return Ok(UnmaskingProfile {
            accuracies: vec![CHANCE; k],
            active_sizes: arithmetic_sizes,
            iterations: vec![0; k],
            eliminated_per_loop: m,
            degenerate: true,
        });
    }
    let config = LogisticConfig {
        lambda: params.lambda,
        ..solver
    };
    let mut trainer = Trainer::new(batch, config);
    let mut active = ActiveSet::full(dim);
    let mut accuracies = Vec::with_capacity(k);
    let mut active_sizes = Vec::with_capacity(k);
    let mut iterations = Vec::with_capacity(k);
    for _ in 0..k {
        active_sizes.push(active.len());
        if active.is_empty() {
            accuracies.push(CHANCE);
            iterations.push(0);
            continue;
        }
        let fit = trainer.fit(&active);
        accuracies.push(fit.accuracy);
        iterations.push(fit.iterations);
        let elim = eliminate_features(&fit.state, m)?;
        trainer.downdate(&elim.removed);
        active = elim.active;
    }
    Ok(UnmaskingProfile {
        accuracies,
        active_sizes,
        iterations,
        eliminated_per_loop: m,
        degenerate: false,
    })
}

/// Mean training accuracy over the loops.
pub fn score(profile: &UnmaskingProfile) -> f64 {
    if profile.accuracies.is_empty() {
        return CHANCE;
    }
    profile.accuracies.iter().sum::<f64>() / profile.accuracies.len() as f64
}

/// One line of the profile dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecord {
    pub window_id: usize,
    pub bin: usize,
    pub channel: Channel,
    pub profile: UnmaskingProfile,
}

/// Writes `window_id,bin,channel,loop,accuracy` rows.
pub fn write_profiles_csv<W: Write>(mut out: W, records: &[ProfileRecord]) -> std::io::Result<()> {
    writeln!(out, "window_id,bin,channel,loop,accuracy")?;
    for r in records {
        for (i, acc) in r.profile.accuracies.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", r.window_id, r.bin, r.channel, i, acc)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_from(rows: &[(&[f64], bool)]) -> WindowBatch {
        let mut b = WindowBatch::new(0, 0, Channel::Motion, rows[0].0.len());
        for (x, y) in rows {
            b.push(x, *y).unwrap();
        }
        b
    }

    fn state_with(weights: Vec<f64>) -> ClassifierState {
        let d = weights.len();
        ClassifierState {
            weights,
            bias: 0.0,
            active: ActiveSet::full(d),
        }
    }

    #[test]
    fn identical_twins_score_half() {
        let b = batch_from(&[(&[0.3, 0.7], false), (&[0.3, 0.7], true)]);
        let (_, acc) = train_logistic(&b, &ActiveSet::full(2), 0.1).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn one_dimensional_separation() {
        let b = batch_from(&[(&[-1.0], false), (&[1.0], true)]);
        let (state, acc) = train_logistic(&b, &ActiveSet::full(1), 0.1).unwrap();
        assert_eq!(acc, 1.0);
        assert!(state.weights[0] > 0.0);
    }

    #[test]
    fn training_errors() {
        let b = batch_from(&[(&[1.0], false), (&[2.0], false)]);
        assert!(matches!(
            train_logistic(&b, &ActiveSet::full(1), 0.1),
            Err(Error::DegenerateBatch { normal: 2, abnormal: 0 })
        ));
        let b = batch_from(&[(&[1.0], false), (&[2.0], true)]);
        let empty = ActiveSet::from_indices(1, []).unwrap();
        assert!(matches!(
            train_logistic(&b, &empty, 0.1),
            Err(Error::Argument(_))
        ));
        assert!(train_logistic(&b, &ActiveSet::full(1), -1.0).is_err());
    }

    #[test]
    fn elimination_by_signed_rank() {
        let e = eliminate_features(&state_with(vec![3.0, -2.0, 1.0, -1.0, 0.0, 0.0]), 2).unwrap();
        assert_eq!(e.removed, vec![0, 1]);
        assert_eq!(e.active.indices(), &[2, 3, 4, 5]);
        assert!(!e.exhausted);
    }

    #[test]
    fn elimination_all_zero_uses_index_order() {
        let e = eliminate_features(&state_with(vec![0.0; 6]), 2).unwrap();
        let mut removed = e.removed.clone();
        removed.sort();
        assert_eq!(removed, vec![0, 1]);
    }

    #[test]
    fn elimination_fills_scarce_side_by_magnitude() {
        // one negative weight, quota of two per side
        let e = eliminate_features(&state_with(vec![0.5, 0.9, -0.1, 0.7, 0.2, 0.05]), 4).unwrap();
        assert_eq!(e.removed, vec![1, 3, 2, 0]);
    }

    #[test]
    fn elimination_exhausts_small_sets() {
        let e = eliminate_features(&state_with(vec![1.0, 2.0]), 4).unwrap();
        assert!(e.exhausted);
        assert!(e.active.is_empty());
        assert!(eliminate_features(&state_with(vec![1.0; 4]), 3).is_err());
    }

    #[test]
    fn elimination_only_touches_active() {
        let mut s = state_with(vec![5.0, 4.0, -3.0, 2.0, -1.0, 0.5]);
        s.active.remove(&[0]);
        s.weights[0] = 0.0;
        let e = eliminate_features(&s, 2).unwrap();
        assert_eq!(e.removed, vec![1, 2]);
    }

    #[test]
    fn twin_batch_profile_is_chance() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..8).map(|j| ((i * 5 + j * 3) % 7) as f64 / 7.0).collect())
            .collect();
        let mut b = WindowBatch::new(0, 0, Channel::Appearance, 8);
        for r in &rows {
            b.push(r, false).unwrap();
        }
        for r in &rows {
            b.push(r, true).unwrap();
        }
        let p = unmask(&b, 5, 2, 0.1).unwrap();
        assert_eq!(p.accuracies, vec![0.5; 5]);
        assert_eq!(score(&p), 0.5);
        assert_eq!(p.active_sizes, vec![8, 6, 4, 2, 0]);
    }

    #[test]
    fn degenerate_batches_score_chance() {
        let b = batch_from(&[(&[1.0, 0.0], false), (&[0.0, 1.0], true), (&[0.0, 0.9], true)]);
        let p = unmask(&b, 4, 2, 0.1).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.accuracies, vec![0.5; 4]);
        let empty = WindowBatch::new(0, 0, Channel::Motion, 3);
        assert_eq!(unmask(&empty, 2, 2, 0.1).unwrap().accuracies, vec![0.5; 2]);
    }

    #[test]
    fn parameter_validation() {
        let b = batch_from(&[(&[1.0], false), (&[2.0], true)]);
        assert!(unmask(&b, 0, 2, 0.1).is_err());
        assert!(unmask(&b, 3, 3, 0.1).is_err());
        assert!(unmask(&b, 3, 0, 0.1).is_err());
    }

    #[test]
    fn score_is_the_mean() {
        let mut p = UnmaskingProfile {
            accuracies: vec![0.5; 10],
            active_sizes: vec![0; 10],
            iterations: vec![0; 10],
            eliminated_per_loop: 50,
            degenerate: false,
        };
        assert_eq!(score(&p), 0.5);
        p.accuracies = vec![1.0; 10];
        assert_eq!(score(&p), 1.0);
        p.accuracies[1..].iter_mut().for_each(|a| *a = 0.5);
        assert!((score(&p) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn profile_csv() {
        let rec = ProfileRecord {
            window_id: 3,
            bin: 1,
            channel: Channel::Motion,
            profile: UnmaskingProfile {
                accuracies: vec![1.0, 0.75],
                active_sizes: vec![4, 2],
                iterations: vec![10, 8],
                eliminated_per_loop: 2,
                degenerate: false,
            },
        };
        let mut buf = Vec::new();
        write_profiles_csv(&mut buf, &[rec]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "window_id,bin,channel,loop,accuracy\n3,1,motion,0,1\n3,1,motion,1,0.75\n"
        );
    }
}
