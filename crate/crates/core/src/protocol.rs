//! Measurement sequences (methods I and II) and fluorescence synthesis.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::DecayTrace;
use crate::error::{Error, Result};
use crate::kinetics::{RadiationFlags, Schedule, Trajectory};
use crate::levelcat::FrequencyList;
use crate::lineshape::instantaneous_thz_frequency;

/// Measurement mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Continuous secular excitation, decay rate read from the trace.
    I,
    /// Short THz+REMPD pulse, fluorescence ratio before/after.
    II,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::I => "I",
            Method::II => "II",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Method::I),
            "II" | "2" => Ok(Method::II),
            _ => Err(Error::InvalidMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Preparation,
    /// Method II: secular scan giving the reference fluorescence level.
    Normalization,
    Cooling,
    /// Method I: REMPD and THz on, decay followed under secular excitation.
    Observation,
    /// Method II: the short REMPD and THz window.
    Excitation,
    /// Method II: secular scan recording the reduced level.
    Readout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub start_s: f64,
    pub duration_s: f64,
    pub flags: RadiationFlags,
}

impl Phase {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s()
    }
}

/// Durations of the measurement sequence, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub preparation_s: f64,
    /// Rotational cooling time before THz and REMPD start.
    pub cooling_s: f64,
    /// Method I: time followed after REMPD turn-on.
    pub observation_s: f64,
    /// Method II: length of the initial secular scan (part of the cooling time).
    pub normalization_scan_s: f64,
    /// Method II: THz + REMPD window.
    pub rempd_window_s: f64,
    /// Method II: readout of the reduced level.
    pub readout_s: f64,
    /// Spacing of fluorescence samples.
    pub sample_interval_s: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            preparation_s: 1.0,
            cooling_s: 35.0,
            observation_s: 60.0,
            normalization_scan_s: 5.0,
            rempd_window_s: 3.0,
            readout_s: 5.0,
            sample_interval_s: 0.02,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("preparation_s", self.preparation_s),
            ("cooling_s", self.cooling_s),
            ("observation_s", self.observation_s),
            ("normalization_scan_s", self.normalization_scan_s),
            ("rempd_window_s", self.rempd_window_s),
            ("readout_s", self.readout_s),
            ("sample_interval_s", self.sample_interval_s),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.normalization_scan_s >= self.cooling_s {
            return Err(Error::Validation(
                "normalization scan must be shorter than the cooling time".into(),
            ));
        }
        Ok(())
    }
}

/// Full phase sequence of one measurement cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTimeline {
    pub method: Method,
    pub phases: Vec<Phase>,
    /// List stepped through while the THz flag is on. Outside those phases
    /// the source sits 500 MHz away from resonance.
    pub list: FrequencyList,
    pub cooling_s: f64,
    pub rempd_window_s: f64,
}

const COOLING_BOTH: RadiationFlags = RadiationFlags {
    cooling_5p5: true,
    cooling_2p7: true,
    ..RadiationFlags::OFF
};

/// Phase sequence for `method` with `list` driving the THz source.
pub fn build_timeline(
    method: Method,
    list: &FrequencyList,
    config: &ProtocolConfig,
) -> Result<ProtocolTimeline> {
    config.validate()?;
    if list.entries_hz.is_empty() {
        return Err(Error::Validation(format!("list {} is empty", list.name)));
    }
    let mut phases = Vec::new();
    let mut t = 0.0;
    let mut push = |kind, duration_s, flags| {
        phases.push(Phase {
            kind,
            start_s: t,
            duration_s,
            flags,
        });
        t += duration_s;
    };
    push(PhaseKind::Preparation, config.preparation_s, RadiationFlags::OFF);
    let rempd_window_s = match method {
        Method::I => {
            push(
                PhaseKind::Cooling,
                config.cooling_s,
                RadiationFlags {
                    secular_scan: true,
                    ..COOLING_BOTH
                },
            );
            // 2.7 um blocked, 5.5 um stays on.
            push(
                PhaseKind::Observation,
                config.observation_s,
                RadiationFlags {
                    cooling_5p5: true,
                    cooling_2p7: false,
                    rempd: true,
                    thz: true,
                    secular_scan: true,
                },
            );
            config.observation_s
        }
        Method::II => {
            push(
                PhaseKind::Normalization,
                config.normalization_scan_s,
                RadiationFlags {
                    secular_scan: true,
                    ..COOLING_BOTH
                },
            );
            push(
                PhaseKind::Cooling,
                config.cooling_s - config.normalization_scan_s,
                COOLING_BOTH,
            );
            push(
                PhaseKind::Excitation,
                config.rempd_window_s,
                RadiationFlags {
                    rempd: true,
                    thz: true,
                    ..RadiationFlags::OFF
                },
            );
            push(
                PhaseKind::Readout,
                config.readout_s,
                RadiationFlags {
                    secular_scan: true,
                    ..RadiationFlags::OFF
                },
            );
            config.rempd_window_s
        }
    };
    Ok(ProtocolTimeline {
        method,
        phases,
        list: list.clone(),
        cooling_s: config.cooling_s,
        rempd_window_s,
    })
}

impl ProtocolTimeline {
    pub fn duration(&self) -> f64 {
        self.phases.last().map_or(0.0, Phase::end_s)
    }

    pub fn phase_at(&self, t: f64) -> Option<&Phase> {
        self.phases.iter().find(|p| p.contains(t))
    }

    pub fn phase(&self, kind: PhaseKind) -> Option<&Phase> {
        self.phases.iter().find(|p| p.kind == kind)
    }

    /// Time at which REMPD and THz are switched on.
    pub fn rempd_onset(&self) -> f64 {
        self.phases
            .iter()
            .find(|p| p.flags.rempd)
            .map_or(self.duration(), |p| p.start_s)
    }

    /// JSON description of the phases and their flags.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timeline serializes")
    }
}

impl Schedule for ProtocolTimeline {
    fn radiation_at(&self, t: f64) -> RadiationFlags {
        self.phase_at(t).map_or(RadiationFlags::OFF, |p| p.flags)
    }

    fn thz_offset_at(&self, t: f64) -> Option<f64> {
        let phase = self.phase_at(t)?;
        phase
            .flags
            .thz
            .then(|| instantaneous_thz_frequency(&self.list, t - phase.start_s))
    }
}

/// Map from undissociated molecule number to Be+ fluorescence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceModel {
    /// Fluorescence with no molecules, counts/s.
    pub background_level: f64,
    /// Counts/s per molecule in the linear regime.
    pub gain: f64,
    /// Molecule number at which the response is halved; `None` is linear.
    pub saturation_number: Option<f64>,
    /// Additive Gaussian noise, counts/s.
    pub noise_sigma: f64,
    /// Draw photon shot noise instead of Gaussian noise.
    pub poisson: bool,
    pub rng_seed: u64,
}

impl Default for FluorescenceModel {
    fn default() -> Self {
        Self {
            background_level: 2000.0,
            gain: 20.0,
            saturation_number: None,
            noise_sigma: 150.0,
            poisson: false,
            rng_seed: 0,
        }
    }
}

impl FluorescenceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Validation("gain must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation("noise_sigma must be >= 0".into()));
        }
        if !self.background_level.is_finite() || self.background_level < 0.0 {
            return Err(Error::Validation("background_level must be >= 0".into()));
        }
        if let Some(s) = self.saturation_number {
            if !(s > 0.0) {
                return Err(Error::Validation("saturation_number must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Noise-free fluorescence for `molecules`.
    pub fn mean_signal(&self, molecules: f64) -> f64 {
        let response = match self.saturation_number {
            Some(s) => molecules / (1.0 + molecules / s),
            None => molecules,
        };
        self.background_level + self.gain * response
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..*self
        }
    }
}

/// Fluorescence samples during the secular-scan phases of `timeline`.
pub fn synthesize_trace(
    trajectory: &Trajectory,
    fm: &FluorescenceModel,
    timeline: &ProtocolTimeline,
    sample_interval_s: f64,
) -> Result<DecayTrace> {
    fm.validate()?;
    if !(sample_interval_s > 0.0) {
        return Err(Error::Validation("sample interval must be > 0".into()));
    }
    let (t_start, t_stop) = trajectory.span();
    if t_start > 1e-9 || t_stop < timeline.duration() - 1e-9 {
        return Err(Error::Domain(format!(
            "trajectory ({t_start}, {t_stop}) does not cover the timeline (0, {})",
            timeline.duration()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fm.rng_seed);
    let gaussian = Normal::new(0.0, fm.noise_sigma)
        .map_err(|e| Error::Validation(format!("noise: {e}")))?;
    let mut samples = Vec::new();
    for phase in timeline.phases.iter().filter(|p| p.flags.secular_scan) {
        let n = (phase.duration_s / sample_interval_s + 1e-9).floor() as usize;
        for i in 0..n {
            let t = phase.start_s + i as f64 * sample_interval_s;
            let mean = fm.mean_signal(trajectory.molecules_at(t));
            let value = if fm.poisson {
                let expected = (mean * sample_interval_s).max(0.0);
                let counts = if expected > 0.0 {
                    Poisson::new(expected)
                        .map_err(|e| Error::Domain(format!("shot noise: {e}")))?
                        .sample(&mut rng)
                } else {
                    0.0
                };
                counts / sample_interval_s
            } else if fm.noise_sigma > 0.0 {
                mean + gaussian.sample(&mut rng)
            } else {
                mean
            };
            samples.push((t, value));
        }
    }
    Ok(DecayTrace {
        samples,
        method: Some(timeline.method),
        list_name: timeline.list.name.clone(),
        rep: 0,
        seed: fm.rng_seed,
    })
}

/// Mean fluorescence of the normalization scan and of the readout
/// (method II).
pub fn method2_levels(trace: &DecayTrace, timeline: &ProtocolTimeline) -> Result<(f64, f64)> {
    let window = |kind| -> Result<(f64, f64)> {
        let p = timeline
            .phase(kind)
            .ok_or_else(|| Error::InvalidMethod(format!("timeline has no {kind:?} phase")))?;
        Ok((p.start_s, p.end_s() - 1e-9))
    };
    let before = trace.mean_level(window(PhaseKind::Normalization)?)?;
    let after = trace.mean_level(window(PhaseKind::Readout)?)?;
    Ok((before, after))
}

/// After/before ratio; the reference level must exceed `noise_floor`.
pub fn method2_signal(before: f64, after: f64, noise_floor: f64) -> Result<f64> {
    if !(before > noise_floor.max(0.0)) {
        return Err(Error::BelowNoiseFloor {
            level: before,
            floor: noise_floor,
        });
    }
    Ok(after / before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::PopulationState;

    fn list_a() -> FrequencyList {
        FrequencyList::new("A", &[-33.211, -6.539, -9.069, -2.138])
    }

    fn constant_trajectory(molecules: f64, t_end: f64) -> Trajectory {
        let mut a = PopulationState::zeros(8);
        a.ground_hf[0] = molecules;
        let mut b = a.clone();
        b.time = t_end;
        Trajectory { states: vec![a, b] }
    }

    #[test]
    fn method_one_sequence() {
        let tl = build_timeline(Method::I, &list_a(), &ProtocolConfig::default()).unwrap();
        let kinds: Vec<_> = tl.phases.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            [PhaseKind::Preparation, PhaseKind::Cooling, PhaseKind::Observation]
        );
        let cooling = tl.phase(PhaseKind::Cooling).unwrap();
        assert_eq!(cooling.duration_s, 35.0);
        assert!(cooling.flags.cooling_2p7 && cooling.flags.secular_scan);
        let obs = tl.phase(PhaseKind::Observation).unwrap();
        assert!(obs.duration_s >= 60.0);
        assert!(obs.flags.cooling_5p5 && !obs.flags.cooling_2p7);
        assert!(obs.flags.rempd && obs.flags.thz && obs.flags.secular_scan);
        assert_eq!(tl.rempd_onset(), 36.0);
    }

    #[test]
    fn method_two_sequence() {
        let tl = build_timeline(Method::II, &list_a(), &ProtocolConfig::default()).unwrap();
        let ex = tl.phase(PhaseKind::Excitation).unwrap();
        assert_eq!(ex.duration_s, 3.0);
        assert!(!ex.flags.cooling_2p7 && !ex.flags.cooling_5p5 && !ex.flags.secular_scan);
        let norm = tl.phase(PhaseKind::Normalization).unwrap();
        assert!(norm.flags.secular_scan && norm.flags.cooling_2p7);
        let cool = tl.phase(PhaseKind::Cooling).unwrap();
        assert!(!cool.flags.secular_scan);
        assert_eq!(norm.duration_s + cool.duration_s, 35.0);
        assert!(tl.phase(PhaseKind::Readout).unwrap().flags.secular_scan);
    }

    #[test]
    fn timing_independent_of_list() {
        let cfg = ProtocolConfig::default();
        let a = build_timeline(Method::I, &list_a(), &cfg).unwrap();
        let bg = build_timeline(Method::I, &FrequencyList::new("detuned500", &[500.0]), &cfg).unwrap();
        assert_eq!(a.phases, bg.phases);
        assert_eq!(bg.thz_offset_at(40.0).map(|f| (f - 500e6).abs() <= 2e3), Some(true));
    }

    #[test]
    fn schedule_audit() {
        for method in [Method::I, Method::II] {
            let tl = build_timeline(method, &list_a(), &ProtocolConfig::default()).unwrap();
            let mut t = 0.0;
            while t < tl.duration() + 1.0 {
                let flags = tl.radiation_at(t);
                match tl.phases.iter().find(|p| p.contains(t)) {
                    Some(p) => assert_eq!(flags, p.flags),
                    None => assert_eq!(flags, RadiationFlags::OFF),
                }
                assert_eq!(tl.thz_offset_at(t).is_some(), flags.thz);
                t += 0.01;
            }
            // boundaries belong to the following phase
            for w in tl.phases.windows(2) {
                assert_eq!(tl.radiation_at(w[1].start_s), w[1].flags);
            }
        }
    }

    #[test]
    fn thz_steps_through_list() {
        let tl = build_timeline(Method::I, &list_a(), &ProtocolConfig::default()).unwrap();
        let onset = tl.rempd_onset();
        for (k, want) in list_a().entries_hz.iter().enumerate() {
            let f = tl.thz_offset_at(onset + 0.2 * k as f64 + 0.1).unwrap();
            assert!((f - want).abs() <= 2e3 + 1e-6);
        }
    }

    #[test]
    fn rejects_bad_durations_and_methods() {
        let cfg = ProtocolConfig {
            cooling_s: 0.0,
            ..Default::default()
        };
        assert!(build_timeline(Method::I, &list_a(), &cfg).is_err());
        assert!(matches!("III".parse::<Method>(), Err(Error::InvalidMethod(_))));
        assert_eq!("ii".parse::<Method>().unwrap(), Method::II);
    }

    #[test]
    fn identity_mapping_without_noise() {
        let tl = build_timeline(Method::I, &list_a(), &ProtocolConfig::default()).unwrap();
        let fm = FluorescenceModel {
            background_level: 0.0,
            gain: 1.0,
            saturation_number: None,
            noise_sigma: 0.0,
            poisson: false,
            rng_seed: 1,
        };
        let traj = constant_trajectory(300.0, tl.duration());
        let tr = synthesize_trace(&traj, &fm, &tl, 0.1).unwrap();
        assert!(tr.samples.iter().all(|s| s.1 == 300.0));
        assert!(tr.samples.first().unwrap().0 >= 1.0);
    }

    #[test]
    fn half_saturation() {
        let fm = FluorescenceModel {
            background_level: 0.0,
            gain: 2.0,
            saturation_number: Some(300.0),
            noise_sigma: 0.0,
            ..Default::default()
        };
        assert_eq!(fm.mean_signal(300.0), 300.0);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let tl = build_timeline(Method::II, &list_a(), &ProtocolConfig::default()).unwrap();
        let traj = constant_trajectory(300.0, tl.duration());
        let fm = FluorescenceModel::default().with_seed(42);
        let a = synthesize_trace(&traj, &fm, &tl, 0.02).unwrap();
        let b = synthesize_trace(&traj, &fm, &tl, 0.02).unwrap();
        assert_eq!(a, b);
        let c = synthesize_trace(&traj, &fm.with_seed(43), &tl, 0.02).unwrap();
        assert_ne!(a.samples, c.samples);
        let shot = FluorescenceModel {
            poisson: true,
            ..fm
        };
        let p = synthesize_trace(&traj, &shot, &tl, 0.02).unwrap();
        assert_eq!(p, synthesize_trace(&traj, &shot, &tl, 0.02).unwrap());
    }

    #[test]
    fn method_two_ratio() {
        assert_eq!(method2_signal(1000.0, 1000.0, 10.0).unwrap(), 1.0);
        assert!((method2_signal(1000.0, 700.0, 10.0).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(
            method2_signal(5.0, 3.0, 10.0),
            Err(Error::BelowNoiseFloor { .. })
        ));
        let tl = build_timeline(Method::II, &list_a(), &ProtocolConfig::default()).unwrap();
        let traj = constant_trajectory(300.0, tl.duration());
        let fm = FluorescenceModel {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let tr = synthesize_trace(&traj, &fm, &tl, 0.02).unwrap();
        let (before, after) = method2_levels(&tr, &tl).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn uncovered_trajectory_rejected() {
        let tl = build_timeline(Method::I, &list_a(), &ProtocolConfig::default()).unwrap();
        let traj = constant_trajectory(300.0, 10.0);
        assert!(synthesize_trace(&traj, &FluorescenceModel::default(), &tl, 0.1).is_err());
    }

    #[test]
    fn timeline_json_lists_phases() {
        let tl = build_timeline(Method::II, &list_a(), &ProtocolConfig::default()).unwrap();
        let json = tl.to_json();
        let back: ProtocolTimeline = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tl);
        assert!(json.contains("\"excitation\""));
    }
}
