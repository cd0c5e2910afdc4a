use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_sim::{
    derive_seed, generate_mixture, ChannelConfig, ImpairmentConfig, MixtureComponent, SubjectKind, SubjectProfile,
};
use crate::foundation::{analyze_window, PowerWindow, SensingConfig};

use super::{classify, features_of, train, FeatureVector, Label, SubjectError, TrainParams};

/// One synthetic deployment: a channel character plus the per-kind subject
/// ranges drawn from for every window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub id: u32,
    pub ratio_center_db: f64,
    pub ratio_spread_db: f64,
    pub path_count: usize,
    pub subcarrier_coherence: f64,
}

pub fn default_environments() -> Vec<Environment> {
    [(12.0, 80, 0.1), (6.0, 100, 0.05), (15.0, 120, 0.2), (3.0, 60, 0.1), (9.0, 150, 0.15)]
        .iter()
        .enumerate()
        .map(|(i, &(center, paths, coherence))| Environment {
            id: i as u32,
            ratio_center_db: center,
            ratio_spread_db: 6.0,
            path_count: paths,
            subcarrier_coherence: coherence,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub environments: Vec<Environment>,
    pub kinds: Vec<SubjectKind>,
    pub windows_per_kind: usize,
    /// Extra windows per environment with a human and a pet moving at equal
    /// energy, labelled human.
    pub co_presence_windows: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            environments: default_environments(),
            kinds: vec![SubjectKind::Human, SubjectKind::Pet, SubjectKind::Robot, SubjectKind::Fan],
            windows_per_kind: 12,
            co_presence_windows: 0,
            sample_rate_hz: 500.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub environment: u32,
    pub kind: SubjectKind,
    /// A second subject moving in the same window.
    pub companion: Option<SubjectKind>,
    pub features: FeatureVector,
}

impl LabeledWindow {
    pub fn label(&self) -> Label {
        if self.kind.is_human() {
            Label::Human
        } else {
            Label::NonHuman
        }
    }
}

/// Draws a subject of `kind` with parameters varied around the defaults.
pub fn vary_subject(kind: SubjectKind, rng: &mut impl Rng) -> SubjectProfile {
    match kind {
        SubjectKind::Human => {
            let cycle = rng.random_range(1.0..1.25);
            let depth = rng.random_range(0.2..0.7);
            SubjectProfile { gait_depth: depth, ..SubjectProfile::legged(kind, cycle, rng.random_range(1.1..1.5)) }
        }
        SubjectKind::Pet => {
            let cycle = rng.random_range(0.35..0.55);
            let depth = rng.random_range(0.3..0.7);
            SubjectProfile { gait_depth: depth, ..SubjectProfile::legged(kind, cycle, rng.random_range(0.35..0.6)) }
        }
        SubjectKind::Robot => {
            SubjectProfile { base_speed_mps: rng.random_range(0.2..0.4), ..SubjectProfile::robot() }
        }
        SubjectKind::Fan => SubjectProfile { base_speed_mps: rng.random_range(0.08..0.2), ..SubjectProfile::fan() },
        SubjectKind::None => SubjectProfile::none(),
    }
}

/// Channel configuration for one window of `env`.
pub fn environment_channel(env: &Environment, sample_rate_hz: f64, seed: u64) -> ChannelConfig {
    let mut cfg = ChannelConfig::new(seed)
        .with_sample_rate(sample_rate_hz)
        .with_paths(env.path_count)
        .with_coherence(env.subcarrier_coherence);
    cfg.spread_ratio(env.ratio_center_db, env.ratio_spread_db);
    cfg
}

/// Generates one window of the given mixture and returns its features.
pub fn window_features(
    cfg: &ChannelConfig,
    components: &[MixtureComponent],
    sensing: &SensingConfig,
) -> Result<FeatureVector, SubjectError> {
    let frames = generate_mixture(cfg, components, sensing.window_len_s, &ImpairmentConfig::none())?;
    let mut window = PowerWindow::new(sensing.window_len_s, cfg.sample_rate_hz)?;
    for f in &frames {
        window.update(f)?;
    }
    Ok(features_of(&analyze_window(&window, sensing)?))
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<LabeledWindow>, SubjectError> {
    let sensing = SensingConfig::default();
    // (environment, kind slot, window); slot == kinds.len() is co-presence
    let mut jobs: Vec<(usize, usize, usize)> = Vec::new();
    for e in 0..spec.environments.len() {
        for k in 0..spec.kinds.len() {
            jobs.extend((0..spec.windows_per_kind).map(|w| (e, k, w)));
        }
        jobs.extend((0..spec.co_presence_windows).map(|w| (e, spec.kinds.len(), w)));
    }
    jobs.par_iter()
        .map(|&(e, k, w)| {
            let env = &spec.environments[e];
            let index = ((env.id as u64) << 32) | ((k as u64) << 16) | w as u64;
            let seed = derive_seed(spec.seed, index + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = environment_channel(env, spec.sample_rate_hz, seed);
            let (kind, companion) = match spec.kinds.get(k) {
                Some(&kind) => (kind, None),
                None => (SubjectKind::Human, Some(SubjectKind::Pet)),
            };
            let mut components = vec![MixtureComponent::new(vary_subject(kind, &mut rng))];
            if let Some(other) = companion {
                components.push(MixtureComponent::new(vary_subject(other, &mut rng)));
            }
            let features = window_features(&cfg, &components, &sensing)?;
            Ok(LabeledWindow { environment: env.id, kind, companion, features })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub held_out: u32,
    pub windows: usize,
    /// Fraction of held-out windows labelled correctly.
    pub accuracy: f64,
    /// Fraction of held-out non-human windows labelled human.
    pub false_alarm_rate: f64,
    /// Fraction of held-out human windows labelled human.
    pub human_recall: f64,
}

/// Trains on all environments but one and scores the held-out one, for each
/// environment in ascending id order.
pub fn leave_one_environment_out(
    data: &[LabeledWindow],
    params: &TrainParams,
) -> Result<Vec<FoldMetrics>, SubjectError> {
    let mut envs: Vec<u32> = data.iter().map(|d| d.environment).collect();
    envs.sort_unstable();
    envs.dedup();
    if envs.len() < 2 {
        return Err(SubjectError::TooFewFolds(envs.len()));
    }
    envs.iter()
        .map(|&held| {
            let train_set: Vec<(FeatureVector, Label)> =
                data.iter().filter(|d| d.environment != held).map(|d| (d.features, d.label())).collect();
            let model = train(&train_set, params)?;
            let test: Vec<&LabeledWindow> = data.iter().filter(|d| d.environment == held).collect();
            let mut correct = 0;
            let (mut others, mut alarms, mut humans, mut hits) = (0, 0, 0, 0);
            for d in &test {
                let (label, _) = classify(&model, &d.features)?;
                correct += usize::from(label == d.label());
                if d.label().is_human() {
                    humans += 1;
                    hits += usize::from(label.is_human());
                } else {
                    others += 1;
                    alarms += usize::from(label.is_human());
                }
            }
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            Ok(FoldMetrics {
                held_out: held,
                windows: test.len(),
                accuracy: ratio(correct, test.len()),
                false_alarm_rate: ratio(alarms, others),
                human_recall: ratio(hits, humans),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn environments_are_distinct() {
        let envs = default_environments();
        assert_eq!(envs.len(), 5);
        let mut ids: Vec<u32> = envs.iter().map(|e| e.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn varied_subjects_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [SubjectKind::Human, SubjectKind::Pet, SubjectKind::Robot, SubjectKind::Fan] {
            for _ in 0..50 {
                vary_subject(kind, &mut rng).validate().unwrap();
            }
        }
    }

    #[test]
    fn single_environment_is_rejected() {
        let d = LabeledWindow { environment: 3, kind: SubjectKind::Human, companion: None, features: FeatureVector::zero() };
        assert_eq!(leave_one_environment_out(&[d], &TrainParams::default()), Err(SubjectError::TooFewFolds(1)));
    }
}
