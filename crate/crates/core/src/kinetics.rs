//! Population rate equations for HD+ in v=0: black-body couplings between
//! rotational manifolds, THz hyperfine excitation, rotational-cooling pumps
//! and REMPD loss from N=1.
//!
//! The N=0 and N=1 manifolds are resolved into hyperfine states; N>=2 are
//! tracked as whole manifolds. BBR is hyperfine-blind: each molecule in a
//! manifold leaves at the manifold rate and arrivals are shared among
//! hyperfine states in proportion to their degeneracy. The system is linear
//! and conserves molecules plus dissociated products.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{fit_exponential_with, DecayTrace, FitOptions};
use crate::error::{Error, Result};
use crate::levelcat::{ground_index, n1_index, HyperfineLine, GROUND_STATES, N1_STATES};
use crate::lineshape::{doppler_sigma, excitation_rate_with_sigma, DopplerParams, MagneticField};
use crate::radfield::{
    manifold_bbr_rates, truncated_thermal_populations, EinsteinSet, ThermalEnvironment,
};

/// Largest accepted integration step, s.
pub const MAX_STEP_S: f64 = 1.0e-3;
/// Populations below this value abort the integration.
pub const NEGATIVITY_LIMIT: f64 = -1.0e-9;
/// Default rotational truncation level.
pub const DEFAULT_N_MAX: usize = 8;

const N_GROUND: usize = GROUND_STATES.len();
const N_UPPER: usize = N1_STATES.len();
const GROUND_DEGENERACY: f64 = 12.0;
const N1_DEGENERACY: f64 = 36.0;

/// Which radiation sources are on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadiationFlags {
    /// 5.5 um pump, N=2 -> N=0.
    pub cooling_5p5: bool,
    /// 2.7 um pump, N=1 -> N=0.
    pub cooling_2p7: bool,
    pub rempd: bool,
    /// THz frequency list running; when off the source sits far from any line.
    pub thz: bool,
    pub secular_scan: bool,
}

impl RadiationFlags {
    pub const OFF: RadiationFlags = RadiationFlags {
        cooling_5p5: false,
        cooling_2p7: false,
        rempd: false,
        thz: false,
        secular_scan: false,
    };
}

/// Time-dependent drive seen by the rate equations.
pub trait Schedule {
    fn radiation_at(&self, t: f64) -> RadiationFlags;
    /// THz offset from the reference frequency, or `None` when the THz drive
    /// is off.
    fn thz_offset_at(&self, t: f64) -> Option<f64>;
}

/// Drive that never changes; the THz offset, if any, is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSchedule {
    pub flags: RadiationFlags,
    pub thz_offset_hz: Option<f64>,
}

impl ConstantSchedule {
    pub fn dark() -> Self {
        Self {
            flags: RadiationFlags::OFF,
            thz_offset_hz: None,
        }
    }
}

impl Schedule for ConstantSchedule {
    fn radiation_at(&self, _t: f64) -> RadiationFlags {
        self.flags
    }

    fn thz_offset_at(&self, _t: f64) -> Option<f64> {
        if self.flags.thz {
            self.thz_offset_hz
        } else {
            None
        }
    }
}

/// Populations (molecule numbers or fractions) at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    /// (v=0,N=0) hyperfine states in [`GROUND_STATES`] order.
    pub ground_hf: [f64; N_GROUND],
    /// (v=0,N=1) hyperfine states in [`N1_STATES`] order.
    pub n1_hf: [f64; N_UPPER],
    /// Manifolds N=2..=n_max.
    pub coarse: Vec<f64>,
    pub dissociated: f64,
    pub time: f64,
}

impl PopulationState {
    pub fn zeros(n_max: usize) -> Self {
        Self {
            ground_hf: [0.0; N_GROUND],
            n1_hf: [0.0; N_UPPER],
            coarse: vec![0.0; n_max.saturating_sub(1)],
            dissociated: 0.0,
            time: 0.0,
        }
    }

    pub fn n_max(&self) -> usize {
        self.coarse.len() + 1
    }

    pub fn len(&self) -> usize {
        N_GROUND + N_UPPER + self.coarse.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ground_total(&self) -> f64 {
        self.ground_hf.iter().sum()
    }

    pub fn n1_total(&self) -> f64 {
        self.n1_hf.iter().sum()
    }

    /// Population of rotational manifold `n`.
    pub fn manifold(&self, n: usize) -> f64 {
        match n {
            0 => self.ground_total(),
            1 => self.n1_total(),
            _ => self.coarse.get(n - 2).copied().unwrap_or(0.0),
        }
    }

    /// Undissociated molecules.
    pub fn molecules(&self) -> f64 {
        self.ground_total() + self.n1_total() + self.coarse.iter().sum::<f64>()
    }

    /// Molecules plus dissociated products (conserved).
    pub fn total(&self) -> f64 {
        self.molecules() + self.dissociated
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.ground_hf.iter_mut().for_each(|x| *x *= factor);
        out.n1_hf.iter_mut().for_each(|x| *x *= factor);
        out.coarse.iter_mut().for_each(|x| *x *= factor);
        out.dissociated *= factor;
        out
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.ground_hf);
        v.extend_from_slice(&self.n1_hf);
        v.extend_from_slice(&self.coarse);
        v.push(self.dissociated);
        v
    }

    fn from_slice(y: &[f64], time: f64) -> Self {
        let mut ground_hf = [0.0; N_GROUND];
        ground_hf.copy_from_slice(&y[..N_GROUND]);
        let mut n1_hf = [0.0; N_UPPER];
        n1_hf.copy_from_slice(&y[N_GROUND..N_GROUND + N_UPPER]);
        let coarse = y[N_GROUND + N_UPPER..y.len() - 1].to_vec();
        Self {
            ground_hf,
            n1_hf,
            coarse,
            dissociated: y[y.len() - 1],
            time,
        }
    }

    fn component_name(index: usize, n_coarse: usize) -> String {
        if index < N_GROUND {
            format!("N=0 {}", GROUND_STATES[index])
        } else if index < N_GROUND + N_UPPER {
            format!("N=1 {}", N1_STATES[index - N_GROUND])
        } else if index < N_GROUND + N_UPPER + n_coarse {
            format!("N={}", index - N_GROUND - N_UPPER + 2)
        } else {
            "dissociated".to_string()
        }
    }
}

/// Rates and couplings of the population model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub n_max: usize,
    pub einstein: EinsteinSet,
    pub environment: ThermalEnvironment,
    /// BBR couplings on/off (off only for diagnostics).
    pub bbr: bool,
    /// Lines the THz source can drive.
    pub lines: Vec<HyperfineLine>,
    pub field: MagneticField,
    pub doppler: DopplerParams,
    /// On-resonance pumping rate of a unit-weight line, s^-1.
    pub thz_peak_rate: f64,
    /// Effective REMPD loss rate out of N=1, s^-1.
    pub rempd_rate: f64,
    /// 5.5 um pump rate N=2 -> N=0, s^-1.
    pub cooling_rate_5p5: f64,
    /// 2.7 um pump rate N=1 -> N=0, s^-1.
    pub cooling_rate_2p7: f64,
}

impl RateModel {
    /// BBR-only model with the fitted default Einstein coefficients.
    pub fn bbr_only(n_max: usize) -> Self {
        Self {
            n_max,
            einstein: EinsteinSet::fitted_default(),
            environment: ThermalEnvironment::default(),
            bbr: true,
            lines: Vec::new(),
            field: MagneticField::new(1.0),
            doppler: DopplerParams::hd_plus(0.012),
            thz_peak_rate: 0.0,
            rempd_rate: 0.0,
            cooling_rate_5p5: 0.0,
            cooling_rate_2p7: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::Validation("n_max must be >= 2".into()));
        }
        if self.bbr && self.einstein.n_max() < self.n_max {
            return Err(Error::Validation(format!(
                "Einstein set covers N <= {} but n_max = {}",
                self.einstein.n_max(),
                self.n_max
            )));
        }
        self.einstein.validate()?;
        self.environment.validate()?;
        self.field.validate()?;
        self.doppler.validate()?;
        let rates = [
            self.thz_peak_rate,
            self.rempd_rate,
            self.cooling_rate_5p5,
            self.cooling_rate_2p7,
        ];
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Validation("rates must be finite and >= 0".into()));
        }
        for line in &self.lines {
            if ground_index(&line.lower).is_none() || n1_index(&line.upper).is_none() {
                return Err(Error::Validation(format!(
                    "line {} does not connect N=0 and N=1 hyperfine states",
                    line.label()
                )));
            }
        }
        Ok(())
    }

    fn tables(&self) -> Result<RateTables> {
        self.validate()?;
        let mut up = vec![0.0; self.n_max];
        let mut down = vec![0.0; self.n_max];
        if self.bbr {
            for n in 0..self.n_max {
                let r = manifold_bbr_rates(&self.einstein, &self.environment, n)?;
                up[n] = r.absorption;
                down[n] = r.stimulated + r.spontaneous;
            }
        }
        let thz_lines = self
            .lines
            .iter()
            .map(|line| {
                let lower = ground_index(&line.lower).expect("validated");
                let upper = n1_index(&line.upper).expect("validated");
                ThzLine {
                    line: line.clone(),
                    lower,
                    upper,
                    back_ratio: f64::from(line.lower.degeneracy())
                        / f64::from(line.upper.degeneracy()),
                }
            })
            .collect();
        Ok(RateTables {
            up,
            down,
            ground_share: GROUND_STATES.map(|s| f64::from(s.degeneracy()) / GROUND_DEGENERACY),
            n1_share: N1_STATES.map(|s| f64::from(s.degeneracy()) / N1_DEGENERACY),
            thz_lines,
            doppler_sigma: doppler_sigma(&self.doppler),
        })
    }

    /// Largest total loss rate out of any component under the given flags,
    /// with every THz line on resonance.
    fn max_outflow(&self, tables: &RateTables) -> f64 {
        let thz: f64 = self.thz_peak_rate
            * tables
                .thz_lines
                .iter()
                .map(|l| l.line.weight * l.back_ratio.max(1.0))
                .sum::<f64>();
        let bbr = tables
            .up
            .iter()
            .zip(&tables.down)
            .map(|(u, d)| u + d)
            .fold(0.0, f64::max);
        bbr + thz + self.rempd_rate + self.cooling_rate_2p7 + self.cooling_rate_5p5
    }
}

#[derive(Debug, Clone)]
struct ThzLine {
    line: HyperfineLine,
    lower: usize,
    upper: usize,
    /// g_lower / g_upper, the stimulated-emission share of the pumping rate.
    back_ratio: f64,
}

#[derive(Debug, Clone)]
struct RateTables {
    /// BBR absorption rate N -> N+1, indexed by N.
    up: Vec<f64>,
    /// BBR stimulated + spontaneous rate N+1 -> N, indexed by N.
    down: Vec<f64>,
    ground_share: [f64; N_GROUND],
    n1_share: [f64; N_UPPER],
    thz_lines: Vec<ThzLine>,
    doppler_sigma: f64,
}

impl RateTables {
    fn thz_rates(&self, model: &RateModel, thz_offset: Option<f64>, out: &mut Vec<f64>) {
        out.clear();
        match thz_offset {
            Some(offset) if model.thz_peak_rate > 0.0 => out.extend(self.thz_lines.iter().map(|l| {
                excitation_rate_with_sigma(
                    &l.line,
                    offset,
                    &model.field,
                    self.doppler_sigma,
                    model.thz_peak_rate,
                )
            })),
            _ => out.resize(self.thz_lines.len(), 0.0),
        }
    }

    fn derivatives(
        &self,
        model: &RateModel,
        flags: RadiationFlags,
        thz_rates: &[f64],
        y: &[f64],
        dy: &mut [f64],
    ) {
        dy.iter_mut().for_each(|d| *d = 0.0);
        let n_coarse = y.len() - N_GROUND - N_UPPER - 1;
        let (g0, rest) = y.split_at(N_GROUND);
        let (n1, rest) = rest.split_at(N_UPPER);
        let coarse = &rest[..n_coarse];
        let ground_total: f64 = g0.iter().sum();
        let n1_total: f64 = n1.iter().sum();
        let diss = y.len() - 1;
        let c0 = N_GROUND + N_UPPER;

        // N=0 <-> N=1
        let (up0, down0) = (self.up[0], self.down[0]);
        for i in 0..N_GROUND {
            dy[i] += -up0 * g0[i] + down0 * n1_total * self.ground_share[i];
        }
        for j in 0..N_UPPER {
            dy[N_GROUND + j] += up0 * ground_total * self.n1_share[j] - down0 * n1[j];
        }
        // N=1 <-> N=2
        if n_coarse > 0 {
            let (up1, down1) = (self.up[1], self.down[1]);
            for j in 0..N_UPPER {
                dy[N_GROUND + j] += -up1 * n1[j] + down1 * coarse[0] * self.n1_share[j];
            }
            dy[c0] += up1 * n1_total - down1 * coarse[0];
        }
        // N>=2 chain
        for k in 0..n_coarse.saturating_sub(1) {
            let n = k + 2;
            let flux = self.up[n] * coarse[k] - self.down[n] * coarse[k + 1];
            dy[c0 + k] -= flux;
            dy[c0 + k + 1] += flux;
        }

        if flags.cooling_2p7 && model.cooling_rate_2p7 > 0.0 {
            let p = model.cooling_rate_2p7;
            for j in 0..N_UPPER {
                dy[N_GROUND + j] -= p * n1[j];
            }
            for i in 0..N_GROUND {
                dy[i] += p * n1_total * self.ground_share[i];
            }
        }
        if flags.cooling_5p5 && model.cooling_rate_5p5 > 0.0 && n_coarse > 0 {
            let flux = model.cooling_rate_5p5 * coarse[0];
            dy[c0] -= flux;
            for i in 0..N_GROUND {
                dy[i] += flux * self.ground_share[i];
            }
        }
        if flags.rempd && model.rempd_rate > 0.0 {
            for j in 0..N_UPPER {
                let flux = model.rempd_rate * n1[j];
                dy[N_GROUND + j] -= flux;
                dy[diss] += flux;
            }
        }
        for (l, rate) in self.thz_lines.iter().zip(thz_rates) {
            if *rate == 0.0 {
                continue;
            }
            let flux = rate * (g0[l.lower] - l.back_ratio * n1[l.upper]);
            dy[l.lower] -= flux;
            dy[N_GROUND + l.upper] += flux;
        }
    }
}

/// Time derivative of the populations under the given drive.
pub fn derivatives(
    state: &PopulationState,
    model: &RateModel,
    flags: RadiationFlags,
    thz_offset_hz: Option<f64>,
) -> Result<PopulationState> {
    if state.n_max() != model.n_max {
        return Err(Error::Validation(format!(
            "state has n_max {} but model has {}",
            state.n_max(),
            model.n_max
        )));
    }
    let tables = model.tables()?;
    let mut rates = Vec::new();
    let offset = if flags.thz { thz_offset_hz } else { None };
    tables.thz_rates(model, offset, &mut rates);
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    tables.derivatives(model, flags, &rates, &y, &mut dy);
    Ok(PopulationState::from_slice(&dy, state.time))
}

/// Sampled solution of the rate equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<PopulationState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn molecule_numbers(&self) -> Vec<f64> {
        self.states.iter().map(PopulationState::molecules).collect()
    }

    pub fn first(&self) -> &PopulationState {
        &self.states[0]
    }

    pub fn last(&self) -> &PopulationState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn span(&self) -> (f64, f64) {
        (self.first().time, self.last().time)
    }

    /// Undissociated molecule number at `t`, linearly interpolated.
    pub fn molecules_at(&self, t: f64) -> f64 {
        let idx = self.states.partition_point(|s| s.time <= t);
        if idx == 0 {
            return self.first().molecules();
        }
        if idx >= self.states.len() {
            return self.last().molecules();
        }
        let (a, b) = (&self.states[idx - 1], &self.states[idx]);
        let w = (t - a.time) / (b.time - a.time);
        a.molecules() * (1.0 - w) + b.molecules() * w
    }

    /// CSV with columns time_s, N0, N1, N2plus, dissociated, total.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,N0,N1,N2plus,dissociated,total\n");
        for s in &self.states {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.time,
                s.ground_total(),
                s.n1_total(),
                s.coarse.iter().sum::<f64>(),
                s.dissociated,
                s.total()
            );
        }
        out
    }

    /// Molecule number as a decay trace, for fitting.
    pub fn molecule_trace(&self) -> DecayTrace {
        DecayTrace::from_samples(
            self.states.iter().map(|s| (s.time, s.molecules())).collect(),
        )
    }
}

/// Fixed-step RK4 solution recording every step.
pub fn integrate(
    initial: &PopulationState,
    model: &RateModel,
    schedule: &dyn Schedule,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_sampled(initial, model, schedule, t_end, dt, dt)
}

/// Fixed-step RK4 solution recording roughly every `record_interval`
/// seconds (always including the final state).
pub fn integrate_sampled(
    initial: &PopulationState,
    model: &RateModel,
    schedule: &dyn Schedule,
    t_end: f64,
    dt: f64,
    record_interval: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || dt > MAX_STEP_S * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            dt,
            reason: "must be in (0, 1 ms]".into(),
        });
    }
    let t0 = initial.time;
    if !(t_end > t0) {
        return Err(Error::Domain(format!(
            "t_end {t_end} must exceed the initial time {t0}"
        )));
    }
    if initial.n_max() != model.n_max {
        return Err(Error::Validation(format!(
            "state has n_max {} but model has {}",
            initial.n_max(),
            model.n_max
        )));
    }
    let tables = model.tables()?;
    if model.max_outflow(&tables) * dt > 2.5 {
        return Err(Error::StepSize {
            dt,
            reason: format!(
                "fastest rate {:.3e}/s is outside the RK4 stability region",
                model.max_outflow(&tables)
            ),
        });
    }

    let n_steps = ((t_end - t0) / dt - 1e-9).ceil() as usize;
    let record_every = ((record_interval / dt).round() as usize).max(1);
    let n = initial.len();
    let mut y = initial.to_vec();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];
    let mut rates = Vec::with_capacity(tables.thz_lines.len());
    let mut states = Vec::with_capacity(n_steps / record_every + 2);
    states.push(initial.clone());

    let eval = |t: f64, y: &[f64], dy: &mut [f64], rates: &mut Vec<f64>| {
        let flags = schedule.radiation_at(t);
        let offset = if flags.thz {
            schedule.thz_offset_at(t)
        } else {
            None
        };
        tables.thz_rates(model, offset, rates);
        tables.derivatives(model, flags, rates, y, dy);
    };

    for step in 0..n_steps {
        let t = t0 + step as f64 * dt;
        let h = dt.min(t_end - t);
        eval(t, &y, &mut k[0], &mut rates);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        eval(t + 0.5 * h, &tmp, &mut k[1], &mut rates);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        eval(t + 0.5 * h, &tmp, &mut k[2], &mut rates);
        for i in 0..n {
            tmp[i] = y[i] + h * k[2][i];
        }
        eval(t + h, &tmp, &mut k[3], &mut rates);
        for i in 0..n {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        let t_next = if step + 1 == n_steps { t_end } else { t + h };
        if let Some((idx, value)) = y
            .iter()
            .enumerate()
            .find(|(_, v)| **v < NEGATIVITY_LIMIT)
        {
            return Err(Error::Negativity {
                time: t_next,
                component: PopulationState::component_name(idx, n - N_GROUND - N_UPPER - 1),
                value: *value,
            });
        }
        if (step + 1) % record_every == 0 || step + 1 == n_steps {
            states.push(PopulationState::from_slice(&y, t_next));
        }
    }
    Ok(Trajectory { states })
}

/// Thermal-equilibrium populations (truncated at `n_max`) for `total`
/// molecules, hyperfine states filled by degeneracy.
pub fn thermal_state(total: f64, env: &ThermalEnvironment, n_max: usize) -> PopulationState {
    let p = truncated_thermal_populations(env, n_max);
    let mut state = PopulationState::zeros(n_max);
    for (i, s) in GROUND_STATES.iter().enumerate() {
        state.ground_hf[i] = total * p[0] * f64::from(s.degeneracy()) / GROUND_DEGENERACY;
    }
    for (j, s) in N1_STATES.iter().enumerate() {
        state.n1_hf[j] = total * p[1] * f64::from(s.degeneracy()) / N1_DEGENERACY;
    }
    for (k, c) in state.coarse.iter_mut().enumerate() {
        *c = total * p[k + 2];
    }
    state
}

/// Relative N>=2 population left after rotational cooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidueProfile {
    /// Proportional to the thermal populations of N>=2.
    Thermal { temperature_k: f64 },
    /// Explicit weights for N = 2, 3, ...; missing levels get 0.
    Explicit { weights: Vec<f64> },
}

impl Default for ResidueProfile {
    fn default() -> Self {
        ResidueProfile::Thermal {
            temperature_k: 300.0,
        }
    }
}

impl ResidueProfile {
    fn weights(&self, n_max: usize) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match self {
            ResidueProfile::Thermal { temperature_k } => {
                let env = ThermalEnvironment::at(*temperature_k);
                truncated_thermal_populations(&env, n_max)[2..].to_vec()
            }
            ResidueProfile::Explicit { weights } => (0..n_max - 1)
                .map(|k| weights.get(k).copied().unwrap_or(0.0))
                .collect(),
        };
        if raw.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Validation("residue weights must be >= 0".into()));
        }
        let sum: f64 = raw.iter().sum();
        if sum == 0.0 {
            return Ok(raw);
        }
        Ok(raw.into_iter().map(|w| w / sum).collect())
    }
}

/// State right after rotational cooling: `ground_fraction` of the molecules
/// in N=0 (split 1:3:3:5 by degeneracy), N=1 empty, the rest over N>=2.
pub fn prepare_cooled_state(
    total_molecules: f64,
    ground_fraction: f64,
    residue: &ResidueProfile,
    n_max: usize,
) -> Result<PopulationState> {
    if !(0.0..=1.0).contains(&ground_fraction) {
        return Err(Error::Domain(format!(
            "ground fraction {ground_fraction} outside [0, 1]"
        )));
    }
    if !(total_molecules >= 0.0) {
        return Err(Error::Domain("molecule number must be >= 0".into()));
    }
    if n_max < 2 {
        return Err(Error::Domain("n_max must be >= 2".into()));
    }
    let mut state = PopulationState::zeros(n_max);
    let ground = total_molecules * ground_fraction;
    for (i, s) in GROUND_STATES.iter().enumerate() {
        state.ground_hf[i] = ground * f64::from(s.degeneracy()) / GROUND_DEGENERACY;
    }
    let weights = residue.weights(n_max)?;
    let rest = total_molecules - ground;
    if rest > 0.0 && weights.iter().all(|w| *w == 0.0) {
        return Err(Error::Validation(
            "residue profile is empty but population remains outside N=0".into(),
        ));
    }
    for (c, w) in state.coarse.iter_mut().zip(weights) {
        *c = rest * w;
    }
    Ok(state)
}

/// Exponential decay rate of the undissociated molecule number over
/// `window` (absolute times), fitted without a constant offset.
pub fn decay_rate(trajectory: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let (start, stop) = trajectory.span();
    if window.0 < start - 1e-9 || window.1 > stop + 1e-9 || !(window.0 < window.1) {
        return Err(Error::Domain(format!(
            "window ({}, {}) outside trajectory span ({start}, {stop})",
            window.0, window.1
        )));
    }
    let fit = fit_exponential_with(
        &trajectory.molecule_trace(),
        window,
        &FitOptions::without_offset(),
    )?;
    Ok(fit.rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelcat::default_catalog;

    fn all_off(n_max: usize) -> RateModel {
        RateModel {
            bbr: false,
            ..RateModel::bbr_only(n_max)
        }
    }

    #[test]
    fn zero_rates_give_zero_derivative() {
        let state = thermal_state(300.0, &ThermalEnvironment::default(), 8);
        let d = derivatives(&state, &all_off(8), RadiationFlags::OFF, None).unwrap();
        assert_eq!(d.total(), 0.0);
        assert!(d.ground_hf.iter().chain(&d.n1_hf).chain(&d.coarse).all(|x| *x == 0.0));
    }

    #[test]
    fn single_spontaneous_channel() {
        // Only A(1->0) at T=0: absorption and stimulated emission vanish.
        let mut model = RateModel::bbr_only(2);
        model.environment.temperature_k = 1e-6;
        model.einstein = EinsteinSet::new(vec![0.02, 1e-30]).unwrap();
        let mut state = PopulationState::zeros(2);
        state.n1_hf[4] = 10.0;
        let d = derivatives(&state, &model, RadiationFlags::OFF, None).unwrap();
        assert_eq!(d.dissociated, 0.0);
        assert!((d.n1_total() + 0.02 * 10.0).abs() < 1e-12);
        assert!((d.ground_total() - 0.02 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn rempd_moves_n1_into_dissociated() {
        let mut model = all_off(3);
        model.rempd_rate = 0.5;
        let mut state = PopulationState::zeros(3);
        state.n1_hf[0] = 4.0;
        let flags = RadiationFlags {
            rempd: true,
            ..RadiationFlags::OFF
        };
        let d = derivatives(&state, &model, flags, None).unwrap();
        assert_eq!(d.dissociated, 2.0);
        assert_eq!(d.n1_hf[0], -2.0);
    }

    #[test]
    fn no_radiation_gives_constant_trajectory() {
        let state = prepare_cooled_state(300.0, 0.7, &ResidueProfile::default(), 8).unwrap();
        let traj = integrate(&state, &all_off(8), &ConstantSchedule::dark(), 1.0, 1e-3).unwrap();
        assert_eq!(traj.states.len(), 1001);
        for s in &traj.states {
            assert_eq!(s.ground_hf, state.ground_hf);
            assert_eq!(s.coarse, state.coarse);
        }
    }

    #[test]
    fn step_size_limits() {
        let state = PopulationState::zeros(8);
        let model = RateModel::bbr_only(8);
        assert!(matches!(
            integrate(&state, &model, &ConstantSchedule::dark(), 1.0, 2e-3),
            Err(Error::StepSize { .. })
        ));
        let mut stiff = model.clone();
        stiff.rempd_rate = 1e5;
        assert!(matches!(
            integrate(&state, &stiff, &ConstantSchedule::dark(), 1.0, 1e-3),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn negativity_is_reported() {
        let mut state = PopulationState::zeros(8);
        state.coarse[0] = -1.0;
        let err = integrate(&state, &RateModel::bbr_only(8), &ConstantSchedule::dark(), 0.01, 1e-3)
            .unwrap_err();
        assert!(matches!(err, Error::Negativity { .. }));
    }

    #[test]
    fn prepared_state_fractions() {
        let s = prepare_cooled_state(300.0, 0.7, &ResidueProfile::default(), 8).unwrap();
        assert!((s.ground_total() - 210.0).abs() < 1e-9);
        assert_eq!(s.n1_total(), 0.0);
        assert!((s.molecules() - 300.0).abs() < 1e-9);
        let ratios: Vec<f64> = s.ground_hf.iter().map(|g| g / s.ground_hf[0]).collect();
        assert_eq!(ratios, vec![1.0, 3.0, 3.0, 5.0]);
        let zero = prepare_cooled_state(0.0, 0.4, &ResidueProfile::default(), 8).unwrap();
        assert_eq!(zero.total(), 0.0);
        assert!(prepare_cooled_state(300.0, 1.2, &ResidueProfile::default(), 8).is_err());
    }

    #[test]
    fn thermal_state_difference() {
        let env = ThermalEnvironment {
            temperature_k: 300.0,
            rotational_constant_hz: 657.46e9,
        };
        let s = thermal_state(300.0, &env, 8);
        let diff = (s.ground_total() - s.n1_total()) / 300.0;
        assert!((diff + 0.145).abs() < 0.005, "{diff}");
    }

    #[test]
    fn thz_pumping_conserves_and_targets_lower_state() {
        let cat = default_catalog();
        let mut model = all_off(3);
        model.lines = cat.lines.clone();
        model.thz_peak_rate = 2.0;
        let state = prepare_cooled_state(120.0, 1.0, &ResidueProfile::default(), 3).unwrap();
        let flags = RadiationFlags {
            thz: true,
            ..RadiationFlags::OFF
        };
        let d = derivatives(&state, &model, flags, Some(-9.069e6)).unwrap();
        // (1,0,0) holds 10 molecules and is driven on resonance.
        assert!((d.ground_hf[0] + 20.0).abs() < 1e-9);
        assert!(d.total().abs() < 1e-12);
    }
}
