//! End-to-end runs: timeline, population dynamics, fluorescence, analysis.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    aggregate, average_traces, fit_exponential_with, local_log_slope, DecayTrace, FitResult,
    SpectrumPoint,
};
use crate::config::{CoolingMode, RateMode, SimulationConfig};
use crate::error::{Error, Result};
use crate::kinetics::{integrate_sampled, prepare_cooled_state, thermal_state, Trajectory};
use crate::levelcat::{canonical_list_name, Catalog, DETUNED_500};
use crate::protocol::{
    build_timeline, method2_levels, method2_signal, synthesize_trace, Method, ProtocolTimeline,
};

/// Result of one seeded repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    /// Method I: decay rate (1/s). Method II: relative decrease 1 - after/before.
    pub signal: f64,
    #[serde(skip)]
    pub trace: DecayTrace,
    pub fit: Option<FitResult>,
    /// Method II: background-subtracted (before, after) levels.
    pub levels: Option<(f64, f64)>,
}

/// All repetitions for one list.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub method: Method,
    pub list_name: String,
    pub timeline: ProtocolTimeline,
    pub trajectory: Trajectory,
    pub reps: Vec<RepResult>,
}

impl SimulationOutput {
    pub fn signals(&self) -> Vec<f64> {
        self.reps.iter().map(|r| r.signal).collect()
    }

    pub fn averaged_trace(&self) -> Result<DecayTrace> {
        let traces: Vec<DecayTrace> = self.reps.iter().map(|r| r.trace.clone()).collect();
        average_traces(&traces)
    }

    /// Mean and standard deviation of the per-repetition signals.
    pub fn summary(&self, normalization: Option<f64>) -> Result<SpectrumPoint> {
        let mut point = aggregate(&self.signals(), normalization)?;
        point.list_name = self.list_name.clone();
        point.method = Some(self.method);
        Ok(point)
    }

    /// Fit over the averaged trace (method I).
    pub fn averaged_fit(&self, cfg: &SimulationConfig) -> Result<FitResult> {
        method1_fit(cfg, &self.timeline, &self.averaged_trace()?)
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub method: Method,
    pub points: Vec<SpectrumPoint>,
    /// Mean background rate used to normalize method I points.
    pub background_rate: Option<f64>,
    pub runs: Vec<SimulationOutput>,
}

/// Seed for one repetition, derived from the master seed.
pub fn derive_seed(master: u64, method: Method, list_name: &str, rep: usize) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ if method == Method::I { 1 } else { 2 });
    for b in list_name.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ rep as u64)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fit window in absolute time.
pub fn fit_window(cfg: &SimulationConfig, timeline: &ProtocolTimeline) -> (f64, f64) {
    let t0 = timeline.rempd_onset();
    (
        t0 + cfg.analysis.fit_window_start_s,
        t0 + cfg.analysis.fit_window_stop_s,
    )
}

/// Noise-free population trajectory over the whole timeline.
///
/// In `Prepared` mode the run starts at REMPD turn-on from the post-cooling
/// state; earlier times hold that state. Only the molecule number is read
/// there, and it cannot change while REMPD is off.
pub fn simulate_trajectory(
    cfg: &SimulationConfig,
    catalog: &Catalog,
    method: Method,
    list_name: &str,
) -> Result<(ProtocolTimeline, Trajectory)> {
    let list = catalog.require_list(canonical_list_name(list_name))?;
    let timeline = build_timeline(method, list, &cfg.protocol)?;
    let model = cfg.rate_model(method, catalog.lines.clone())?;
    let n_max = cfg.bbr.n_max;
    let dt = cfg.integration.time_step_s;
    let record = cfg.integration.record_interval_s;
    let end = timeline.duration();
    let trajectory = match cfg.rates.cooling_mode {
        CoolingMode::Prepared => {
            let onset = timeline.rempd_onset();
            let mut start = prepare_cooled_state(
                cfg.ions.molecule_count,
                cfg.ions.ground_fraction,
                &cfg.residue,
                n_max,
            )?;
            let mut states = vec![start.clone()];
            start.time = onset;
            let tail = integrate_sampled(&start, &model, &timeline, end, dt, record)?;
            states.extend(tail.states);
            Trajectory { states }
        }
        CoolingMode::Dynamic => {
            let start = thermal_state(cfg.ions.molecule_count, &cfg.environment(), n_max);
            integrate_sampled(&start, &model, &timeline, end, dt, record)?
        }
    };
    Ok((timeline, trajectory))
}

/// Method I decay fit. Without a floating offset the known zero-molecule
/// fluorescence level is subtracted first.
pub fn method1_fit(
    cfg: &SimulationConfig,
    timeline: &ProtocolTimeline,
    trace: &DecayTrace,
) -> Result<FitResult> {
    let window = fit_window(cfg, timeline);
    if cfg.analysis.fit_offset {
        fit_exponential_with(trace, window, &cfg.fit_options())
    } else {
        let shifted = trace.shifted(-cfg.fluorescence.background_counts_per_s);
        let mut fit = fit_exponential_with(&shifted, window, &cfg.fit_options())?;
        fit.offset = cfg.fluorescence.background_counts_per_s;
        Ok(fit)
    }
}

/// Signal extracted from one fluorescence trace.
pub fn analyze_trace(
    cfg: &SimulationConfig,
    timeline: &ProtocolTimeline,
    trace: &DecayTrace,
) -> Result<(f64, Option<FitResult>, Option<(f64, f64)>)> {
    match timeline.method {
        Method::I => {
            let fit = method1_fit(cfg, timeline, trace)?;
            let rate = match cfg.analysis.rate_mode {
                RateMode::Fit => fit.rate,
                RateMode::At25s => {
                    let t0 = timeline.rempd_onset();
                    local_log_slope(
                        trace,
                        (
                            t0 + cfg.analysis.rate25_window_start_s,
                            t0 + cfg.analysis.rate25_window_stop_s,
                        ),
                        cfg.fluorescence.background_counts_per_s,
                    )?
                }
            };
            Ok((rate, Some(fit), None))
        }
        Method::II => {
            let (before, after) = method2_levels(trace, timeline)?;
            let bg = cfg.fluorescence.background_counts_per_s;
            let n_norm = (cfg.protocol.normalization_scan_s / cfg.protocol.sample_interval_s)
                .max(1.0);
            let floor = 3.0 * cfg.noise_sigma(Method::II) / n_norm.sqrt();
            let ratio = method2_signal(before - bg, after - bg, floor)?;
            Ok((1.0 - ratio, None, Some((before - bg, after - bg))))
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn run_reps(
    cfg: &SimulationConfig,
    timeline: &ProtocolTimeline,
    trajectory: &Trajectory,
    list_name: &str,
    reps: usize,
) -> Result<Vec<RepResult>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(cfg.master_seed, timeline.method, list_name, rep);
            let fm = cfg.fluorescence_model(timeline.method, seed);
            let mut trace =
                synthesize_trace(trajectory, &fm, timeline, cfg.protocol.sample_interval_s)?;
            trace.rep = rep;
            let (signal, fit, levels) = analyze_trace(cfg, timeline, &trace)?;
            Ok(RepResult {
                rep,
                seed,
                signal,
                trace,
                fit,
                levels,
            })
        })
        .collect()
}

fn simulate_in_pool(
    cfg: &SimulationConfig,
    catalog: &Catalog,
    method: Method,
    list_name: &str,
    reps: usize,
) -> Result<SimulationOutput> {
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    let name = canonical_list_name(list_name).to_string();
    let (timeline, trajectory) = simulate_trajectory(cfg, catalog, method, &name)?;
    let reps = run_reps(cfg, &timeline, &trajectory, &name, reps)?;
    Ok(SimulationOutput {
        method,
        list_name: name,
        timeline,
        trajectory,
        reps,
    })
}

/// `reps` seeded repetitions of one list on `workers` threads.
pub fn simulate(
    cfg: &SimulationConfig,
    catalog: &Catalog,
    method: Method,
    list_name: &str,
    reps: usize,
    workers: usize,
) -> Result<SimulationOutput> {
    pool(workers)?.install(|| simulate_in_pool(cfg, catalog, method, list_name, reps))
}

/// One spectrum point per list. Method I rates are divided by the mean
/// rate of the detuned500 list, which is simulated even if not requested.
pub fn spectrum(
    cfg: &SimulationConfig,
    catalog: &Catalog,
    method: Method,
    lists: &[String],
    reps: usize,
    workers: usize,
) -> Result<Spectrum> {
    if lists.is_empty() {
        return Err(Error::Config("at least one list is required".into()));
    }
    let mut names: Vec<String> = lists
        .iter()
        .map(|l| canonical_list_name(l).to_string())
        .collect();
    let needs_background = method == Method::I && !names.iter().any(|n| n == DETUNED_500);
    if needs_background {
        names.push(DETUNED_500.to_string());
    }
    for n in &names {
        catalog.require_list(n)?;
    }
    let mut runs = pool(workers)?.install(|| {
        names
            .par_iter()
            .map(|n| simulate_in_pool(cfg, catalog, method, n, reps))
            .collect::<Result<Vec<_>>>()
    })?;
    let background_rate = match method {
        Method::I => {
            let bg = runs
                .iter()
                .find(|r| r.list_name == DETUNED_500)
                .expect("background run present");
            let s = bg.signals();
            Some(s.iter().sum::<f64>() / s.len() as f64)
        }
        Method::II => None,
    };
    if needs_background {
        runs.pop();
    }
    let points = runs
        .iter()
        .map(|r| r.summary(background_rate))
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        method,
        points,
        background_rate,
        runs,
    })
}
