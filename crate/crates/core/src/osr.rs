//! The statistical open-set classifier. Each known class is summarized by
//! its prototype (the representation centroid), the mean m and population
//! standard deviation s of training distances to that prototype, and a
//! count. A test point's outlier score is the smallest normalized
//! deviation |D(mu_k, z) - m_k| / s_k over classes; scores above the
//! threshold are routed to UNKNOWN, everything else to the argmin class.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelTag, RepresentationSet};
use crate::error::{Error, Result};

/// Floor for the distance standard deviation; a zero-variance class would
/// otherwise reject its own members through a division by zero.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Empirical-Rule cutoff: three standard deviations.
pub const EMPIRICAL_RULE_THRESHOLD: f64 = 3.0;

/// Summary statistics of one known class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub id: usize,
    pub prototype: Vec<f64>,
    pub m: f64,
    pub s: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Empirical Rule: flag scores above three standard deviations.
    Statistical,
    /// A percentile of training scores, picked by [`manual_threshold`].
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub mode: ThresholdMode,
    pub value: f64,
}

/// A fitted open-set model; immutable after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsrModel {
    pub classes: Vec<ClassStats>,
    pub distance: DistanceKind,
    pub threshold: Threshold,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fit per-class prototypes and distance statistics from known-class
/// training representations. The standard deviation is the population
/// form (divisor N) over the distances d_i = D(mu_k, z_i), floored at
/// `epsilon`. The returned model starts in statistical threshold mode.
pub fn fit_class_stats(reps: &RepresentationSet, epsilon: f64) -> Result<OsrModel> {
    if reps.is_empty() {
        return Err(Error::EmptyInput("no representations to fit".into()));
    }
    if reps.dim() == 0 {
        return Err(Error::InvalidParameter(
            "representations must have dimension >= 1".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }

    let mut by_class: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
    for item in &reps.items {
        match item.label {
            LabelTag::Known(id) => by_class.entry(id).or_default().push(&item.z),
            LabelTag::Unknown => {
                return Err(Error::UnknownLabel(format!(
                    "`{}` (unknown-labeled sample in a training set)",
                    item.id
                )))
            }
        }
    }

    let d = reps.dim();
    let mut classes = Vec::with_capacity(by_class.len());
    for (id, members) in by_class {
        let n = members.len();
        let mut prototype = vec![0.0; d];
        for z in &members {
            for (p, v) in prototype.iter_mut().zip(*z) {
                *p += v;
            }
        }
        for p in &mut prototype {
            *p /= n as f64;
        }
        let distances: Vec<f64> = members.iter().map(|z| euclidean(&prototype, z)).collect();
        let m = distances.iter().sum::<f64>() / n as f64;
        let variance = distances.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        let s = variance.sqrt().max(epsilon);
        classes.push(ClassStats {
            id,
            prototype,
            m,
            s,
            n,
        });
    }
    Ok(OsrModel {
        classes,
        distance: DistanceKind::Euclidean,
        threshold: Threshold {
            mode: ThresholdMode::Statistical,
            value: EMPIRICAL_RULE_THRESHOLD,
        },
    })
}

impl OsrModel {
    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.prototype.len())
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::shape(
                "outlier score input",
                &[self.dim()],
                &[z.len()],
            ));
        }
        Ok(())
    }

    /// Normalized deviation from each class: |D(mu_k, z) - m_k| / s_k.
    pub fn deviations(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        Ok(self
            .classes
            .iter()
            .map(|c| (euclidean(&c.prototype, z) - c.m).abs() / c.s)
            .collect())
    }

    /// The smallest normalized deviation over classes.
    pub fn outlier_score(&self, z: &[f64]) -> Result<f64> {
        Ok(self
            .deviations(z)?
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    }

    /// UNKNOWN when the outlier score exceeds the active threshold, else
    /// the class with the smallest deviation (ties to the smaller id).
    pub fn classify(&self, z: &[f64]) -> Result<LabelTag> {
        let deviations = self.deviations(z)?;
        let mut best = 0usize;
        for (k, dev) in deviations.iter().enumerate() {
            if *dev < deviations[best] {
                best = k;
            }
        }
        if deviations[best] > self.threshold.value {
            return Ok(LabelTag::Unknown);
        }
        Ok(LabelTag::Known(self.classes[best].id))
    }

    pub fn with_threshold(mut self, mode: ThresholdMode, value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "threshold must be finite and positive, got {value}"
            )));
        }
        self.threshold = Threshold { mode, value };
        Ok(self)
    }
}

/// Nearest-rank percentile of training outlier scores: sorted ascending,
/// 1-based index ceil(p/100 * N).
pub fn manual_threshold(train_scores: &[f64], percentile: f64) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(Error::EmptyInput(
            "no scores for the manual threshold".into(),
        ));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile must be in (0, 100], got {percentile}"
        )));
    }
    let mut sorted = train_scores.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("manual threshold scores".into()));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

pub fn save_osr(path: &Path, model: &OsrModel) -> Result<()> {
    let text = serde_json::to_string_pretty(model)?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_osr(path: &Path) -> Result<OsrModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Representation;
    use crate::seeding::rng;
    use rand::Rng;

    fn reps_from(points: &[(usize, Vec<f64>)]) -> RepresentationSet {
        RepresentationSet::new(
            points
                .iter()
                .enumerate()
                .map(|(i, (label, z))| Representation {
                    id: format!("s{i}"),
                    label: LabelTag::Known(*label),
                    z: z.clone(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn hand_example_model() -> OsrModel {
        // One class at {(0,0), (1,0), (5,0)}: mu = (2,0), distances {2,1,3},
        // m = 2, s = sqrt(2/3) ~ 0.816497.
        fit_class_stats(
            &reps_from(&[
                (0, vec![0.0, 0.0]),
                (0, vec![1.0, 0.0]),
                (0, vec![5.0, 0.0]),
            ]),
            DEFAULT_EPSILON,
        )
        .unwrap()
    }

    #[test]
    fn hand_example_statistics() {
        let model = hand_example_model();
        let c = &model.classes[0];
        assert_eq!(c.prototype, vec![2.0, 0.0]);
        assert!((c.m - 2.0).abs() < 1e-12);
        assert!((c.s - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((c.s - 0.816497).abs() < 1e-6);
        assert_eq!(c.n, 3);
    }

    #[test]
    fn hand_example_scores_and_decisions() {
        let model = hand_example_model();
        let near = model.outlier_score(&[6.0, 0.0]).unwrap();
        assert!((near - 2.449490).abs() < 1e-6);
        assert_eq!(model.classify(&[6.0, 0.0]).unwrap(), LabelTag::Known(0));

        let far = model.outlier_score(&[10.0, 0.0]).unwrap();
        assert!((far - 7.348469).abs() < 1e-6);
        assert_eq!(model.classify(&[10.0, 0.0]).unwrap(), LabelTag::Unknown);
    }

    #[test]
    fn point_at_mean_distance_scores_zero() {
        let model = hand_example_model();
        // Distance 2 from the prototype (2,0) equals m exactly.
        assert_eq!(model.outlier_score(&[4.0, 0.0]).unwrap(), 0.0);
        assert_eq!(model.outlier_score(&[2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn prototype_itself_is_not_score_zero() {
        // At z = mu the deviation is m/s = 2/0.816497 ~ 2.449, still inside
        // the three-sigma rule, so it classifies as the class.
        let model = hand_example_model();
        let at_proto = model.outlier_score(&[2.0, 0.0]).unwrap();
        assert!((at_proto - 2.449490).abs() < 1e-6);
        assert_eq!(model.classify(&[2.0, 0.0]).unwrap(), LabelTag::Known(0));
    }

    #[test]
    fn singleton_class_degenerates_to_epsilon() {
        let model = fit_class_stats(&reps_from(&[(4, vec![3.0, -1.0])]), DEFAULT_EPSILON).unwrap();
        let c = &model.classes[0];
        assert_eq!(c.prototype, vec![3.0, -1.0]);
        assert_eq!(c.m, 0.0);
        assert_eq!(c.s, DEFAULT_EPSILON);
        assert_eq!(model.outlier_score(&[3.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_pair_floors_s() {
        // {(0,0), (4,0)}: both at distance 2 from mu = (2,0), zero variance.
        let model = fit_class_stats(
            &reps_from(&[(0, vec![0.0, 0.0]), (0, vec![4.0, 0.0])]),
            DEFAULT_EPSILON,
        )
        .unwrap();
        let c = &model.classes[0];
        assert_eq!(c.m, 2.0);
        assert_eq!(c.s, DEFAULT_EPSILON);
    }

    #[test]
    fn fit_rejects_unknown_labels_and_empty_sets() {
        assert!(fit_class_stats(&RepresentationSet::default(), 1e-8).is_err());
        let mut reps = reps_from(&[(0, vec![0.0])]);
        reps.items.push(Representation {
            id: "u".into(),
            label: LabelTag::Unknown,
            z: vec![1.0],
        });
        assert!(matches!(
            fit_class_stats(&reps, 1e-8),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn fit_is_order_invariant() {
        let a = fit_class_stats(
            &reps_from(&[
                (1, vec![0.0, 1.0]),
                (0, vec![2.0, 2.0]),
                (1, vec![4.0, -1.0]),
                (0, vec![0.0, 0.0]),
            ]),
            1e-8,
        )
        .unwrap();
        let b = fit_class_stats(
            &reps_from(&[
                (0, vec![0.0, 0.0]),
                (1, vec![4.0, -1.0]),
                (0, vec![2.0, 2.0]),
                (1, vec![0.0, 1.0]),
            ]),
            1e-8,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn argmin_ties_break_to_smaller_class_id() {
        // Two identical classes: every deviation ties, class 2 must win
        // over class 5 by id order.
        let model = fit_class_stats(
            &reps_from(&[
                (5, vec![0.0, 0.0]),
                (5, vec![1.0, 0.0]),
                (5, vec![5.0, 0.0]),
                (2, vec![0.0, 0.0]),
                (2, vec![1.0, 0.0]),
                (2, vec![5.0, 0.0]),
            ]),
            1e-8,
        )
        .unwrap();
        assert_eq!(model.classify(&[6.0, 0.0]).unwrap(), LabelTag::Known(2));
        assert_eq!(model.classify(&[4.0, 0.0]).unwrap(), LabelTag::Known(2));
    }

    #[test]
    fn extreme_thresholds() {
        let base = hand_example_model();
        let never = base
            .clone()
            .with_threshold(ThresholdMode::Manual, f64::MAX)
            .unwrap();
        let mut r = rng(8);
        for _ in 0..50 {
            let z = [r.gen_range(-100.0..100.0), r.gen_range(-100.0..100.0)];
            assert!(!never.classify(&z).unwrap().is_unknown());
        }
        let always = base.with_threshold(ThresholdMode::Manual, 1e-300).unwrap();
        assert!(always.classify(&[10.0, 0.0]).unwrap().is_unknown());
        // Exact-equality scores (score 0) stay known even at threshold 0+.
        assert_eq!(always.classify(&[4.0, 0.0]).unwrap(), LabelTag::Known(0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = hand_example_model();
        assert!(model.outlier_score(&[1.0]).is_err());
        assert!(model.classify(&[1.0, 2.0, 3.0]).is_err());
    }

    /// Naive restatement of the fitting and scoring formulas, kept wilfully
    /// independent of the production code paths.
    mod brute {
        use crate::corpus::{LabelTag, RepresentationSet};

        pub struct Class {
            pub id: usize,
            pub mu: Vec<f64>,
            pub m: f64,
            pub s: f64,
        }

        pub fn fit(reps: &RepresentationSet, eps: f64) -> Vec<Class> {
            let mut ids: Vec<usize> = reps
                .items
                .iter()
                .filter_map(|r| r.label.known_id())
                .collect();
            ids.sort_unstable();
            ids.dedup();
            ids.into_iter()
                .map(|id| {
                    let zs: Vec<&Vec<f64>> = reps
                        .items
                        .iter()
                        .filter(|r| r.label == LabelTag::Known(id))
                        .map(|r| &r.z)
                        .collect();
                    let d = zs[0].len();
                    let mu: Vec<f64> = (0..d)
                        .map(|k| zs.iter().map(|z| z[k]).sum::<f64>() / zs.len() as f64)
                        .collect();
                    let dist = |z: &[f64]| -> f64 {
                        mu.iter()
                            .zip(z)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    };
                    let ds: Vec<f64> = zs.iter().map(|z| dist(z)).collect();
                    let m = ds.iter().sum::<f64>() / ds.len() as f64;
                    let var = ds.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / ds.len() as f64;
                    Class {
                        id,
                        mu,
                        m,
                        s: var.sqrt().max(eps),
                    }
                })
                .collect()
        }

        pub fn score(classes: &[Class], z: &[f64]) -> f64 {
            classes
                .iter()
                .map(|c| {
                    let d =
                        c.mu.iter()
                            .zip(z)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt();
                    (d - c.m).abs() / c.s
                })
                .fold(f64::INFINITY, f64::min)
        }

        pub fn classify(classes: &[Class], z: &[f64], threshold: f64) -> LabelTag {
            let mut best = 0;
            let mut best_dev = f64::INFINITY;
            for (k, c) in classes.iter().enumerate() {
                let d =
                    c.mu.iter()
                        .zip(z)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                let dev = (d - c.m).abs() / c.s;
                if dev < best_dev {
                    best_dev = dev;
                    best = k;
                }
            }
            if best_dev > threshold {
                LabelTag::Unknown
            } else {
                LabelTag::Known(classes[best].id)
            }
        }
    }

    #[test]
    fn agrees_with_brute_force_reimplementation() {
        let mut r = rng(33);
        for trial in 0..20 {
            let num_classes = r.gen_range(1..5);
            let d = r.gen_range(1..5);
            let mut points = Vec::new();
            for class in 0..num_classes {
                let center: Vec<f64> = (0..d).map(|_| r.gen_range(-5.0..5.0)).collect();
                for _ in 0..r.gen_range(1..12) {
                    let z: Vec<f64> = center.iter().map(|c| c + r.gen_range(-1.0..1.0)).collect();
                    points.push((class, z));
                }
            }
            let reps = reps_from(&points);
            let model = fit_class_stats(&reps, 1e-8).unwrap();
            let classes = brute::fit(&reps, 1e-8);

            for (got, want) in model.classes.iter().zip(&classes) {
                assert_eq!(got.id, want.id);
                for (a, b) in got.prototype.iter().zip(&want.mu) {
                    assert!((a - b).abs() < 1e-9);
                }
                assert!((got.m - want.m).abs() < 1e-9);
                assert!((got.s - want.s).abs() < 1e-9);
            }
            for _ in 0..30 {
                let z: Vec<f64> = (0..d).map(|_| r.gen_range(-8.0..8.0)).collect();
                let fast = model.outlier_score(&z).unwrap();
                let slow = brute::score(&classes, &z);
                assert!((fast - slow).abs() < 1e-9, "trial {trial}");
                assert_eq!(
                    model.classify(&z).unwrap(),
                    brute::classify(&classes, &z, 3.0),
                    "trial {trial}"
                );
            }
        }
    }

    #[test]
    fn classify_unknown_iff_score_exceeds_threshold() {
        let mut r = rng(44);
        let points: Vec<(usize, Vec<f64>)> = (0..30)
            .map(|i| (i % 3, vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]))
            .collect();
        let model = fit_class_stats(&reps_from(&points), 1e-8).unwrap();
        for _ in 0..200 {
            let z = [r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0)];
            let score = model.outlier_score(&z).unwrap();
            assert!(score >= 0.0);
            let is_unknown = model.classify(&z).unwrap().is_unknown();
            assert_eq!(is_unknown, score > model.threshold.value);
        }
    }

    #[test]
    fn scaling_representations_preserves_decisions() {
        let mut r = rng(55);
        let points: Vec<(usize, Vec<f64>)> = (0..24)
            .map(|i| (i % 4, vec![r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)]))
            .collect();
        let queries: Vec<[f64; 2]> = (0..60)
            .map(|_| [r.gen_range(-8.0..8.0), r.gen_range(-8.0..8.0)])
            .collect();
        let base = fit_class_stats(&reps_from(&points), 1e-8).unwrap();
        // Powers of two scale distances exactly in floating point, so the
        // decisions must match bit for bit when epsilon scales along.
        for alpha in [0.25f64, 2.0, 1024.0] {
            let scaled_points: Vec<(usize, Vec<f64>)> = points
                .iter()
                .map(|(l, z)| (*l, z.iter().map(|v| v * alpha).collect()))
                .collect();
            let scaled = fit_class_stats(&reps_from(&scaled_points), 1e-8 * alpha).unwrap();
            for q in &queries {
                let qs = [q[0] * alpha, q[1] * alpha];
                assert_eq!(
                    base.classify(q).unwrap(),
                    scaled.classify(&qs).unwrap(),
                    "alpha {alpha}"
                );
                let a = base.outlier_score(q).unwrap();
                let b = scaled.outlier_score(&qs).unwrap();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn manual_threshold_nearest_rank() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(manual_threshold(&scores, 99.0).unwrap(), 99.0);
        assert_eq!(manual_threshold(&scores, 100.0).unwrap(), 100.0);
        assert_eq!(manual_threshold(&scores, 1.0).unwrap(), 1.0);
        assert_eq!(manual_threshold(&scores, 50.0).unwrap(), 50.0);
        assert_eq!(manual_threshold(&[7.5; 9], 99.0).unwrap(), 7.5);
        assert_eq!(manual_threshold(&[3.25], 42.0).unwrap(), 3.25);
        assert!(manual_threshold(&[], 99.0).is_err());
        assert!(manual_threshold(&[1.0], 0.0).is_err());
        assert!(manual_threshold(&[1.0], 101.0).is_err());
    }

    #[test]
    fn model_json_schema_round_trip() {
        let model = hand_example_model();
        let text = serde_json::to_string(&model).unwrap();
        assert!(text.contains("\"distance\":\"euclidean\""));
        assert!(text.contains("\"mode\":\"statistical\""));
        assert!(text.contains("\"prototype\":[2.0,0.0]"));
        let back: OsrModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);

        let dir = std::env::temp_dir().join("fcg_osr_model_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("osr.json");
        save_osr(&path, &model).unwrap();
        assert_eq!(load_osr(&path).unwrap(), model);
        std::fs::remove_file(&path).unwrap();
    }
}
