use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rng_stream, SimError, STREAM_SPEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Human,
    Pet,
    Robot,
    Fan,
    None,
}

impl SubjectKind {
    pub fn is_legged(self) -> bool {
        matches!(self, SubjectKind::Human | SubjectKind::Pet)
    }

    pub fn is_human(self) -> bool {
        self == SubjectKind::Human
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubjectKind::Human => "human",
            SubjectKind::Pet => "pet",
            SubjectKind::Robot => "robot",
            SubjectKind::Fan => "fan",
            SubjectKind::None => "none",
        }
    }
}

impl std::str::FromStr for SubjectKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(SubjectKind::Human),
            "pet" => Ok(SubjectKind::Pet),
            "robot" => Ok(SubjectKind::Robot),
            "fan" => Ok(SubjectKind::Fan),
            "none" => Ok(SubjectKind::None),
            other => Err(SimError::InvalidConfig { field: "kind", reason: format!("unknown subject kind `{other}`") }),
        }
    }
}

/// Default depth of the per-stride speed dip for legged subjects.
pub const HUMAN_GAIT_DEPTH: f64 = 0.6;
pub const PET_GAIT_DEPTH: f64 = 0.5;

/// Movement description of the scatterer that perturbs the channel.
///
/// Legged subjects move with mean speed `stride_length_m / stride_cycle_s`;
/// `base_speed_mps` must agree with that ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub kind: SubjectKind,
    pub base_speed_mps: f64,
    pub stride_cycle_s: f64,
    pub stride_length_m: f64,
    pub speed_jitter: f64,
    pub collision_rate_hz: f64,
    /// Relative speed dip per stride, in [0, 1]; legged subjects only.
    pub gait_depth: f64,
}

impl SubjectProfile {
    pub fn legged(kind: SubjectKind, stride_cycle_s: f64, stride_length_m: f64) -> Self {
        Self {
            kind,
            base_speed_mps: stride_length_m / stride_cycle_s,
            stride_cycle_s,
            stride_length_m,
            speed_jitter: 0.05,
            collision_rate_hz: 0.0,
            gait_depth: if kind == SubjectKind::Pet { PET_GAIT_DEPTH } else { HUMAN_GAIT_DEPTH },
        }
    }

    /// Adult walking gait: 1.1 s cycle, 1.3 m stride.
    pub fn human() -> Self {
        Self::legged(SubjectKind::Human, 1.1, 1.3)
    }

    /// Quadrupedal gait: shorter, faster strides than a human.
    pub fn pet() -> Self {
        Self { speed_jitter: 0.08, ..Self::legged(SubjectKind::Pet, 0.45, 0.5) }
    }

    pub fn robot() -> Self {
        Self {
            kind: SubjectKind::Robot,
            base_speed_mps: 0.3,
            stride_cycle_s: 1.0,
            stride_length_m: 1.0,
            speed_jitter: 0.0,
            collision_rate_hz: 0.1,
            gait_depth: 0.0,
        }
    }

    pub fn fan() -> Self {
        Self {
            kind: SubjectKind::Fan,
            base_speed_mps: 0.15,
            stride_cycle_s: 1.0,
            stride_length_m: 1.0,
            speed_jitter: 0.0,
            collision_rate_hz: 0.0,
            gait_depth: 0.0,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: SubjectKind::None,
            base_speed_mps: 0.0,
            stride_cycle_s: 1.0,
            stride_length_m: 1.0,
            speed_jitter: 0.0,
            collision_rate_hz: 0.0,
            gait_depth: 0.0,
        }
    }

    pub fn default_for(kind: SubjectKind) -> Self {
        match kind {
            SubjectKind::Human => Self::human(),
            SubjectKind::Pet => Self::pet(),
            SubjectKind::Robot => Self::robot(),
            SubjectKind::Fan => Self::fan(),
            SubjectKind::None => Self::none(),
        }
    }

    /// A scatterer moving at a fixed speed (a wheeled subject that never collides).
    pub fn constant_speed(speed_mps: f64) -> Self {
        Self { base_speed_mps: speed_mps, collision_rate_hz: 0.0, ..Self::robot() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &'static str, reason: String| Err(SimError::InvalidConfig { field, reason });
        if !(self.base_speed_mps.is_finite() && self.base_speed_mps >= 0.0) {
            return bad("base_speed_mps", format!("must be finite and >= 0, got {}", self.base_speed_mps));
        }
        if self.kind == SubjectKind::None && self.base_speed_mps != 0.0 {
            return bad("base_speed_mps", "must be 0 for kind `none`".into());
        }
        if !(self.stride_cycle_s.is_finite() && self.stride_cycle_s > 0.0) {
            return bad("stride_cycle_s", format!("must be finite and > 0, got {}", self.stride_cycle_s));
        }
        if !(self.stride_length_m.is_finite() && self.stride_length_m > 0.0) {
            return bad("stride_length_m", format!("must be finite and > 0, got {}", self.stride_length_m));
        }
        if !(self.speed_jitter.is_finite() && self.speed_jitter >= 0.0) {
            return bad("speed_jitter", format!("must be finite and >= 0, got {}", self.speed_jitter));
        }
        if !(self.collision_rate_hz.is_finite() && self.collision_rate_hz >= 0.0) {
            return bad("collision_rate_hz", format!("must be finite and >= 0, got {}", self.collision_rate_hz));
        }
        if !(0.0..=1.0).contains(&self.gait_depth) {
            return bad("gait_depth", format!("must lie in [0, 1], got {}", self.gait_depth));
        }
        if self.kind.is_legged() {
            let implied = self.stride_length_m / self.stride_cycle_s;
            if (implied - self.base_speed_mps).abs() > 1e-9 * implied.max(1.0) {
                return bad(
                    "base_speed_mps",
                    format!("legged subject must move at stride_length/stride_cycle = {implied}"),
                );
            }
        }
        Ok(())
    }
}

/// Instantaneous speed of `subject`, sampled at `rate_hz` for `duration_s`.
///
/// Legged subjects follow a raised cosine per stride (minimum at stance,
/// peak mid-swing) whose integral over one cycle is the stride length.
/// Robots hold piecewise-constant speeds that jump at Poisson collision
/// times. Fans hold a constant micro-motion speed.
pub fn speed_waveform(
    subject: &SubjectProfile,
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>, SimError> {
    subject.validate()?;
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(SimError::InvalidConfig { field: "rate_hz", reason: format!("must be > 0, got {rate_hz}") });
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SimError::InvalidDuration(duration_s));
    }
    let n = (duration_s * rate_hz).ceil() as usize;
    let mut rng = rng_stream(seed, STREAM_SPEED);
    let times = (0..n).map(|i| i as f64 / rate_hz);

    let out = match subject.kind {
        SubjectKind::None => times.map(|t| (t, 0.0)).collect(),
        SubjectKind::Fan => times.map(|t| (t, subject.base_speed_mps)).collect(),
        SubjectKind::Human | SubjectKind::Pet => {
            let depth = subject.gait_depth;
            let cycle = subject.stride_cycle_s;
            let mean = subject.stride_length_m / cycle;
            let strides = (duration_s / cycle).ceil() as usize + 1;
            let gains: Vec<f64> = (0..strides)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (1.0 + subject.speed_jitter * z).max(0.0)
                })
                .collect();
            times
                .map(|t| {
                    let stride = (t / cycle).floor() as usize;
                    let phase = (t / cycle).fract();
                    let v = mean * gains[stride.min(strides - 1)] * (1.0 - depth * (2.0 * PI * phase).cos());
                    (t, v.max(0.0))
                })
                .collect()
        }
        SubjectKind::Robot => {
            let mut next_collision = if subject.collision_rate_hz > 0.0 {
                Exp::new(subject.collision_rate_hz).expect("positive rate").sample(&mut rng)
            } else {
                f64::INFINITY
            };
            let mut level = subject.base_speed_mps;
            times
                .map(|t| {
                    while t >= next_collision {
                        level = subject.base_speed_mps * rng.random_range(0.5..1.2);
                        next_collision += Exp::new(subject.collision_rate_hz).expect("positive rate").sample(&mut rng);
                    }
                    (t, level)
                })
                .collect()
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = (lag..n).map(|i| (x[i] - mean) * (x[i - lag] - mean)).sum();
        cov / var
    }

    #[test]
    fn human_waveform_period_matches_stride_cycle() {
        let rate = 100.0;
        let w = speed_waveform(&SubjectProfile::human(), 30.0, rate, 4).unwrap();
        let v: Vec<f64> = w.iter().map(|p| p.1).collect();
        // first local maximum of the waveform autocorrelation past lag 0
        let acf: Vec<f64> = (0..300).map(|l| autocorr(&v, l)).collect();
        let first_peak = (1..299).find(|&l| acf[l] > acf[l - 1] && acf[l] >= acf[l + 1]).unwrap();
        assert!((first_peak as i64 - 110).abs() <= 1, "peak at lag {first_peak}");
    }

    #[test]
    fn one_human_cycle_covers_one_stride() {
        let mut profile = SubjectProfile::human();
        profile.speed_jitter = 0.0;
        let rate = 1000.0;
        let w = speed_waveform(&profile, 1.1, rate, 1).unwrap();
        let dist: f64 = w.iter().map(|p| p.1 / rate).sum();
        assert!((dist - 1.3).abs() < 0.01, "distance {dist}");
    }

    #[test]
    fn robot_without_collisions_is_constant() {
        let mut robot = SubjectProfile::robot();
        robot.collision_rate_hz = 0.0;
        let w = speed_waveform(&robot, 20.0, 50.0, 2).unwrap();
        assert!(w.iter().all(|p| p.1 == robot.base_speed_mps));
    }

    #[test]
    fn robot_collisions_are_jumps() {
        let mut robot = SubjectProfile::robot();
        robot.collision_rate_hz = 1.0;
        let w = speed_waveform(&robot, 30.0, 50.0, 2).unwrap();
        let jumps = w.windows(2).filter(|p| p[0].1 != p[1].1).count();
        assert!(jumps >= 10, "only {jumps} jumps");
    }

    #[test]
    fn pet_cadence_is_faster_than_human() {
        assert!(SubjectProfile::pet().stride_cycle_s < SubjectProfile::human().stride_cycle_s);
        assert!(SubjectProfile::pet().stride_length_m < SubjectProfile::human().stride_length_m);
    }

    #[test]
    fn none_subject_must_be_still() {
        let mut p = SubjectProfile::none();
        p.base_speed_mps = 0.5;
        assert!(p.validate().is_err());
        assert!(speed_waveform(&SubjectProfile::none(), 1.0, 10.0, 0).unwrap().iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn unknown_kind_is_named() {
        let err = "dragon".parse::<SubjectKind>().unwrap_err();
        assert!(err.to_string().contains("kind"));
    }
}
