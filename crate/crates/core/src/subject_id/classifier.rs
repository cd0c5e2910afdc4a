use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, SubjectError, FEATURE_COUNT};

pub const MODEL_FORMAT: &str = "homesense-svm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Human,
    NonHuman,
}

impl Label {
    pub fn is_human(self) -> bool {
        self == Label::Human
    }

    fn sign(self) -> f64 {
        if self.is_human() {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// L2 regularisation strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { lambda: 1e-3, epochs: 60, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lambda: f64,
    pub samples: usize,
}

/// Linear max-margin classifier over standardised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format: String,
    pub version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub meta: TrainingMeta,
}

impl ClassifierModel {
    pub fn decision_value(&self, fv: &FeatureVector) -> f64 {
        let x = fv.to_array();
        let mut d = self.bias;
        for i in 0..FEATURE_COUNT {
            d += self.weights[i] * (x[i] - self.feature_means[i]) / self.feature_scales[i];
        }
        d
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, SubjectError> {
        let model: ClassifierModel = serde_json::from_str(text).map_err(|e| SubjectError::Model(e.to_string()))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(SubjectError::Model(format!(
                "unsupported model {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                model.format, model.version
            )));
        }
        let lens = [model.weights.len(), model.feature_means.len(), model.feature_scales.len()];
        if lens.iter().any(|&l| l != FEATURE_COUNT) {
            return Err(SubjectError::Model(format!("expected {FEATURE_COUNT} weights, means and scales")));
        }
        if !model.feature_scales.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(SubjectError::Model("feature scales must be positive".into()));
        }
        Ok(model)
    }
}

/// Minimises `lambda/2 |w|^2 + mean hinge` by seeded stochastic subgradient
/// steps (step `1/(lambda t)`), returning the average of the second-half
/// iterates. The bias is an extra standardised input fixed at 1.
pub fn train(data: &[(FeatureVector, Label)], params: &TrainParams) -> Result<ClassifierModel, SubjectError> {
    if data.is_empty() {
        return Err(SubjectError::EmptyDataset);
    }
    if !(params.lambda.is_finite() && params.lambda > 0.0) || params.epochs == 0 {
        return Err(SubjectError::InvalidParams("lambda must be > 0 and epochs >= 1".into()));
    }
    let humans = data.iter().filter(|(_, l)| l.is_human()).count();
    if humans == 0 || humans == data.len() {
        return Err(SubjectError::SingleClass);
    }
    for (fv, _) in data {
        if let Some(i) = fv.first_non_finite() {
            return Err(SubjectError::NonFinite { feature: super::FEATURE_NAMES[i] });
        }
    }

    let n = data.len() as f64;
    let mut means = vec![0.0; FEATURE_COUNT];
    for (fv, _) in data {
        for (m, x) in means.iter_mut().zip(fv.to_array()) {
            *m += x / n;
        }
    }
    let mut scales = vec![0.0; FEATURE_COUNT];
    for (fv, _) in data {
        for ((s, x), m) in scales.iter_mut().zip(fv.to_array()).zip(&means) {
            *s += (x - m).powi(2) / n;
        }
    }
    for s in &mut scales {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let rows: Vec<([f64; FEATURE_COUNT + 1], f64)> = data
        .iter()
        .map(|(fv, l)| {
            let x = fv.to_array();
            let mut z = [1.0; FEATURE_COUNT + 1];
            for i in 0..FEATURE_COUNT {
                z[i] = (x[i] - means[i]) / scales[i];
            }
            (z, l.sign())
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut w = [0.0; FEATURE_COUNT + 1];
    let mut avg = [0.0; FEATURE_COUNT + 1];
    let mut averaged = 0usize;
    let total = params.epochs * rows.len();
    let mut t = 0usize;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let (z, y) = &rows[i];
            let eta = 1.0 / (params.lambda * t as f64);
            let margin = y * w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - eta * params.lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, zj) in w.iter_mut().zip(z) {
                    *wj += eta * y * zj;
                }
            }
            if 2 * t > total {
                averaged += 1;
                for (a, wj) in avg.iter_mut().zip(&w) {
                    *a += (wj - *a) / averaged as f64;
                }
            }
        }
    }

    Ok(ClassifierModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        weights: avg[..FEATURE_COUNT].to_vec(),
        bias: avg[FEATURE_COUNT],
        feature_means: means,
        feature_scales: scales,
        meta: TrainingMeta { seed: params.seed, epochs: params.epochs, lambda: params.lambda, samples: data.len() },
    })
}

/// Human iff the decision value is strictly positive; a value of exactly 0
/// goes to non-human.
pub fn classify(model: &ClassifierModel, fv: &FeatureVector) -> Result<(Label, f64), SubjectError> {
    if let Some(i) = fv.first_non_finite() {
        return Err(SubjectError::NonFinite { feature: super::FEATURE_NAMES[i] });
    }
    let d = model.decision_value(fv);
    Ok((if d > 0.0 { Label::Human } else { Label::NonHuman }, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(speed: f64, gait: bool) -> FeatureVector {
        FeatureVector { gait_present: gait, speed_mean: speed, ..FeatureVector::zero() }
    }

    #[test]
    fn separable_toy_set() {
        let data = vec![(fv(1.2, true), Label::Human), (fv(0.3, false), Label::NonHuman)];
        let model = train(&data, &TrainParams::default()).unwrap();
        for (x, l) in &data {
            assert_eq!(classify(&model, x).unwrap().0, *l);
        }
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![(fv(1.0, true), Label::Human), (fv(1.1, true), Label::Human)];
        assert_eq!(train(&data, &TrainParams::default()), Err(SubjectError::SingleClass));
        assert_eq!(train(&[], &TrainParams::default()), Err(SubjectError::EmptyDataset));
    }

    #[test]
    fn boundary_goes_to_non_human() {
        let data = vec![(fv(1.2, true), Label::Human), (fv(0.3, false), Label::NonHuman)];
        let mut model = train(&data, &TrainParams::default()).unwrap();
        model.weights = vec![0.0; FEATURE_COUNT];
        model.bias = 0.0;
        assert_eq!(classify(&model, &fv(5.0, true)).unwrap(), (Label::NonHuman, 0.0));
    }

    #[test]
    fn non_finite_rejected() {
        let data = vec![(fv(1.2, true), Label::Human), (fv(0.3, false), Label::NonHuman)];
        let model = train(&data, &TrainParams::default()).unwrap();
        let bad = FeatureVector { ms_mean: f64::INFINITY, ..fv(1.0, true) };
        assert_eq!(classify(&model, &bad), Err(SubjectError::NonFinite { feature: "ms_mean" }));
        assert!(train(&[(bad, Label::Human), (fv(0.3, false), Label::NonHuman)], &TrainParams::default()).is_err());
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let data: Vec<_> = (0..40)
            .map(|i| {
                let h = i % 2 == 0;
                (fv(if h { 1.0 } else { 0.5 } + 0.01 * i as f64, h), if h { Label::Human } else { Label::NonHuman })
            })
            .collect();
        let a = train(&data, &TrainParams::default()).unwrap();
        let b = train(&data, &TrainParams::default()).unwrap();
        assert_eq!(a, b);
        let back = ClassifierModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        let mut wrong = a.clone();
        wrong.version = 99;
        assert!(ClassifierModel::from_json(&wrong.to_json()).is_err());
    }
}
