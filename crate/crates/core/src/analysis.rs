//! Decay-rate fitting, repetition aggregation and spectrum output.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Method;

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 10;
const MAX_ITERATIONS: usize = 100;
const PARAM_TOLERANCE: f64 = 1e-8;

/// Time series of fluorescence (or molecule number) samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    /// (time s, value) pairs with strictly increasing times.
    pub samples: Vec<(f64, f64)>,
    pub method: Option<Method>,
    pub list_name: String,
    pub rep: usize,
    pub seed: u64,
}

impl DecayTrace {
    pub fn from_samples(samples: Vec<(f64, f64)>) -> Self {
        Self {
            samples,
            method: None,
            list_name: String::new(),
            rep: 0,
            seed: 0,
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Validation(
                "trace times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Samples with `start <= t <= stop`.
    pub fn window(&self, window: (f64, f64)) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .copied()
            .filter(|(t, _)| *t >= window.0 - 1e-9 && *t <= window.1 + 1e-9)
            .collect()
    }

    /// Mean value over a time window.
    pub fn mean_level(&self, window: (f64, f64)) -> Result<f64> {
        let w = self.window(window);
        if w.is_empty() {
            return Err(Error::DegenerateData(format!(
                "no samples in ({}, {})",
                window.0, window.1
            )));
        }
        Ok(w.iter().map(|s| s.1).sum::<f64>() / w.len() as f64)
    }

    /// Copy with `delta` added to every value.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| s.1 += delta);
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| s.1 *= factor);
        out
    }

    /// Rows `time_s,fluorescence,method,list,rep,seed` without a header.
    pub fn write_csv_rows(&self, out: &mut String) {
        let method = self.method.map_or_else(String::new, |m| m.to_string());
        for (t, y) in &self.samples {
            let _ = writeln!(
                out,
                "{t},{y},{method},{},{},{}",
                self.list_name, self.rep, self.seed
            );
        }
    }

    pub const CSV_HEADER: &'static str = "time_s,fluorescence,method,list,rep,seed";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        self.write_csv_rows(&mut out);
        out
    }
}

/// Exponential fit `amplitude * exp(-rate (t - window.0)) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    /// Value of the exponential term at the window start.
    pub amplitude: f64,
    pub offset: f64,
    pub rate_stddev: f64,
    pub window: (f64, f64),
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Float a constant offset.
    pub offset: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { offset: true }
    }
}

impl FitOptions {
    pub fn without_offset() -> Self {
        Self { offset: false }
    }
}

/// Least-squares fit of `a exp(-G t) + c` over `window` with a floating
/// offset.
pub fn fit_exponential(trace: &DecayTrace, window: (f64, f64)) -> Result<FitResult> {
    fit_exponential_with(trace, window, &FitOptions::default())
}

/// Gauss-Newton with Levenberg damping, started from a log-linear
/// regression on offset-subtracted data. Non-convergence is reported
/// through `converged = false` with the best iterate.
pub fn fit_exponential_with(
    trace: &DecayTrace,
    window: (f64, f64),
    options: &FitOptions,
) -> Result<FitResult> {
    if !(window.0 < window.1) {
        return Err(Error::Domain(format!(
            "fit window ({}, {}) is empty",
            window.0, window.1
        )));
    }
    let data = trace.window(window);
    if data.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateData(format!(
            "{} samples in window, need at least {MIN_FIT_SAMPLES}",
            data.len()
        )));
    }
    let t0 = window.0;
    let ts: Vec<f64> = data.iter().map(|s| s.0 - t0).collect();
    // Fitting in units of the largest magnitude keeps power-of-two rescaling exact.
    let scale = data.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::DegenerateData("trace is identically zero".into()));
    }
    let ys: Vec<f64> = data.iter().map(|s| s.1 / scale).collect();
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
            (lo.min(*y), hi.max(*y))
        });
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateData("trace is constant".into()));
    }

    let n_params = if options.offset { 3 } else { 2 };
    let mut params = initial_guess(&ts, &ys, options.offset);
    let mut cost = sum_sq(&residuals(&ts, &ys, &params));
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian(&ts, &params, n_params);
        let r = DVector::from_vec(residuals(&ts, &ys, &params));
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = jtj.clone();
            for i in 0..n_params {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = params;
            for i in 0..n_params {
                trial[i] += step[i];
            }
            let rel_change = (0..n_params)
                .map(|i| step[i].abs() / params[i].abs().max(1e-12))
                .fold(0.0, f64::max);
            let trial_cost = sum_sq(&residuals(&ts, &ys, &trial));
            if trial_cost.is_finite() && trial_cost <= cost {
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_change < PARAM_TOLERANCE {
                    converged = true;
                }
                break;
            }
            if rel_change < PARAM_TOLERANCE {
                // No downhill step left at this resolution.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            break;
        }
    }

    let dof = ys.len().saturating_sub(n_params).max(1);
    let variance = cost / dof as f64;
    let jac = jacobian(&ts, &params, n_params);
    let rate_stddev = (jac.transpose() * &jac)
        .try_inverse()
        .map(|cov| (cov[(1, 1)] * variance).max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);

    Ok(FitResult {
        rate: params[1],
        amplitude: params[0] * scale,
        offset: if options.offset { params[2] * scale } else { 0.0 },
        rate_stddev,
        window,
        converged,
        iterations,
    })
}

fn model(t: f64, p: &[f64; 3]) -> f64 {
    p[0] * (-p[1] * t).exp() + p[2]
}

fn residuals(ts: &[f64], ys: &[f64], p: &[f64; 3]) -> Vec<f64> {
    ts.iter().zip(ys).map(|(t, y)| model(*t, p) - y).collect()
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian(ts: &[f64], p: &[f64; 3], n_params: usize) -> DMatrix<f64> {
    DMatrix::from_fn(ts.len(), n_params, |i, j| {
        let e = (-p[1] * ts[i]).exp();
        match j {
            0 => e,
            1 => -p[0] * ts[i] * e,
            _ => 1.0,
        }
    })
}

/// Straight-line fit, returns (slope, intercept).
fn linear_regression(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn initial_guess(ts: &[f64], ys: &[f64], with_offset: bool) -> [f64; 3] {
    let offset = if with_offset {
        three_point_offset(ts, ys).unwrap_or_else(|| {
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo - 0.5 * (hi - lo)
        })
    } else {
        0.0
    };
    let (xs, ls): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y - offset > 0.0)
        .map(|(t, y)| (*t, (y - offset).ln()))
        .unzip();
    match linear_regression(&xs, &ls) {
        Some((slope, intercept)) => [intercept.exp(), -slope, offset],
        None => {
            let span = ts.last().unwrap_or(&1.0) - ts[0];
            [ys[0] - offset, 1.0 / span.max(1e-12), offset]
        }
    }
}

/// Offset estimate from the means of the first, middle and last thirds.
fn three_point_offset(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let n = ys.len() / 3;
    if n == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (y1, y2, y3) = (
        mean(&ys[..n]),
        mean(&ys[n..2 * n]),
        mean(&ys[ys.len() - n..]),
    );
    let (t1, t2, t3) = (
        mean(&ts[..n]),
        mean(&ts[n..2 * n]),
        mean(&ts[ts.len() - n..]),
    );
    // Only exact for equal spacing; good enough as a starting point.
    if ((t2 - t1) - (t3 - t2)).abs() > 0.2 * (t3 - t1) {
        return None;
    }
    let denom = y1 - 2.0 * y2 + y3;
    let ratio = (y2 - y3) / (y1 - y2);
    if !(ratio > 0.0 && ratio < 1.0) || denom == 0.0 {
        return None;
    }
    Some(y1 - (y1 - y2) * (y1 - y2) / denom)
}

/// Slope of `-ln(y - offset)` against time over a window: the local decay
/// rate, e.g. 25 s after REMPD turn-on with window (20, 30).
pub fn local_log_slope(trace: &DecayTrace, window: (f64, f64), offset: f64) -> Result<f64> {
    let data = trace.window(window);
    if data.len() < 2 {
        return Err(Error::DegenerateData("fewer than 2 samples in window".into()));
    }
    let (xs, ls): (Vec<f64>, Vec<f64>) = data
        .iter()
        .map(|(t, y)| {
            let v = y - offset;
            if v > 0.0 {
                Ok((*t, v.ln()))
            } else {
                Err(Error::DegenerateData(format!(
                    "value {y} at t = {t} is not above the offset {offset}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let (slope, _) = linear_regression(&xs, &ls)
        .ok_or_else(|| Error::DegenerateData("degenerate time grid".into()))?;
    Ok(-slope)
}

/// One point of a Fig. 5 style spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub list_name: String,
    pub method: Option<Method>,
    /// Mean of the (normalized) per-repetition signals.
    pub normalized_signal: f64,
    /// Standard deviation of the data (n-1 divisor), not of the mean.
    pub stddev: f64,
    pub n_reps: usize,
}

impl SpectrumPoint {
    pub fn standard_error(&self) -> f64 {
        self.stddev / (self.n_reps as f64).sqrt()
    }
}

/// Mean and sample standard deviation of per-repetition signals, each
/// divided by `normalization` when given. Single values get stddev 0.
pub fn aggregate(values: &[f64], normalization: Option<f64>) -> Result<SpectrumPoint> {
    if values.is_empty() {
        return Err(Error::DegenerateData("no repetitions to aggregate".into()));
    }
    if let Some(norm) = normalization {
        if !(norm != 0.0 && norm.is_finite()) {
            return Err(Error::Domain(format!("invalid normalization {norm}")));
        }
    }
    let mut scaled: Vec<f64> = values
        .iter()
        .map(|v| normalization.map_or(*v, |n| v / n))
        .collect();
    // Fixed summation order makes the result independent of input order.
    scaled.sort_by(f64::total_cmp);
    let n = scaled.len() as f64;
    let mean = scaled.iter().sum::<f64>() / n;
    let stddev = if scaled.len() > 1 {
        (scaled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SpectrumPoint {
        list_name: String::new(),
        method: None,
        normalized_signal: mean,
        stddev,
        n_reps: scaled.len(),
    })
}

/// Pointwise mean of traces on identical time grids.
pub fn average_traces(traces: &[DecayTrace]) -> Result<DecayTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::DegenerateData("no traces to average".into()))?;
    for (k, tr) in traces.iter().enumerate().skip(1) {
        if tr.samples.len() != first.samples.len()
            || tr
                .samples
                .iter()
                .zip(&first.samples)
                .any(|(a, b)| a.0 != b.0)
        {
            return Err(Error::GridMismatch(format!(
                "trace {k} differs from trace 0"
            )));
        }
    }
    let n = traces.len() as f64;
    let samples = first
        .samples
        .iter()
        .enumerate()
        .map(|(i, (t, _))| {
            let sum: f64 = traces.iter().map(|tr| tr.samples[i].1).sum();
            (*t, sum / n)
        })
        .collect();
    Ok(DecayTrace {
        samples,
        method: first.method,
        list_name: first.list_name.clone(),
        rep: 0,
        seed: first.seed,
    })
}

pub const SPECTRUM_CSV_HEADER: &str = "list,method,mean_signal,stddev,n_reps";

/// Spectrum CSV, one row per point.
pub fn spectrum_csv(points: &[SpectrumPoint]) -> String {
    let mut out = format!("{SPECTRUM_CSV_HEADER}\n");
    for p in points {
        let method = p.method.map_or_else(String::new, |m| m.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.list_name, method, p.normalized_signal, p.stddev, p.n_reps
        );
    }
    out
}

/// Plot data as `x,y,yerr` triplets.
pub fn plot_data(points: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("x,y,yerr\n");
    for (x, y, e) in points {
        let _ = writeln!(out, "{x},{y},{e}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(a: f64, rate: f64, c: f64, dt: f64, t_end: f64) -> DecayTrace {
        let n = (t_end / dt).round() as usize;
        DecayTrace::from_samples(
            (0..=n)
                .map(|i| {
                    let t = i as f64 * dt;
                    (t, a * (-rate * t).exp() + c)
                })
                .collect(),
        )
    }

    #[test]
    fn recovers_noiseless_model() {
        let tr = synthetic(100.0, 0.075, 10.0, 0.02, 10.0);
        let fit = fit_exponential(&tr, (0.0, 10.0)).unwrap();
        assert!(fit.converged);
        assert!((fit.rate - 0.075).abs() < 1e-6, "{fit:?}");
        assert!((fit.offset - 10.0).abs() < 1e-4);
        assert!((fit.amplitude - 100.0).abs() < 1e-4);
    }

    #[test]
    fn recovers_without_offset() {
        let tr = synthetic(300.0, 0.05, 0.0, 0.1, 30.0);
        let fit = fit_exponential_with(&tr, (0.0, 10.0), &FitOptions::without_offset()).unwrap();
        assert!((fit.rate - 0.05).abs() < 1e-6);
        assert_eq!(fit.offset, 0.0);
    }

    #[test]
    fn window_offset_start() {
        let tr = synthetic(100.0, 0.2, 5.0, 0.05, 40.0);
        let fit = fit_exponential(&tr, (20.0, 30.0)).unwrap();
        assert!((fit.rate - 0.2).abs() < 1e-6);
        assert!((fit.amplitude - 100.0 * (-4.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let tr = synthetic(0.0, 0.1, 42.0, 0.1, 10.0);
        assert!(matches!(
            fit_exponential(&tr, (0.0, 10.0)),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn too_few_samples() {
        let tr = synthetic(10.0, 0.1, 0.0, 1.0, 5.0);
        assert!(matches!(
            fit_exponential(&tr, (0.0, 5.0)),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn scale_invariance_of_rate() {
        let mut tr = synthetic(80.0, 0.06, 12.0, 0.1, 10.0);
        // Add a deterministic wiggle so the fit is not exact.
        for (i, s) in tr.samples.iter_mut().enumerate() {
            s.1 += 0.3 * ((i as f64) * 1.7).sin();
        }
        let base = fit_exponential(&tr, (0.0, 10.0)).unwrap().rate;
        let doubled = fit_exponential(&tr.scaled(4.0), (0.0, 10.0)).unwrap().rate;
        assert_eq!(base, doubled);
        let other = fit_exponential(&tr.scaled(3.7), (0.0, 10.0)).unwrap().rate;
        assert!((other - base).abs() <= 1e-9 * base);
    }

    #[test]
    fn aggregate_arithmetic() {
        let p = aggregate(&[0.9, 1.0, 1.1], None).unwrap();
        assert!((p.normalized_signal - 1.0).abs() < 1e-15);
        assert!((p.stddev - 0.1).abs() < 1e-12);
        assert_eq!(p.n_reps, 3);
        let single = aggregate(&[0.4], None).unwrap();
        assert_eq!(single.stddev, 0.0);
        assert!(aggregate(&[], None).is_err());
    }

    #[test]
    fn self_normalization() {
        let values = [0.071, 0.069, 0.075, 0.080, 0.066, 0.073, 0.077, 0.070, 0.068];
        let mean = values.iter().sum::<f64>() / 9.0;
        let p = aggregate(&values, Some(mean)).unwrap();
        assert!((p.normalized_signal - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_of_traces() {
        let a = synthetic(10.0, 0.1, 0.0, 0.5, 10.0);
        let b = synthetic(20.0, 0.3, 1.0, 0.5, 10.0);
        let avg = average_traces(&[a.clone(), b.clone()]).unwrap();
        for ((x, y), z) in a.samples.iter().zip(&b.samples).zip(&avg.samples) {
            assert_eq!(z.1, (x.1 + y.1) / 2.0);
        }
        assert_eq!(average_traces(std::slice::from_ref(&a)).unwrap().samples, a.samples);
        let c = synthetic(1.0, 0.1, 0.0, 0.25, 10.0);
        assert!(matches!(average_traces(&[a, c]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn log_slope_of_pure_exponential() {
        let tr = synthetic(100.0, 0.04, 3.0, 0.1, 40.0);
        let r = local_log_slope(&tr, (20.0, 30.0), 3.0).unwrap();
        assert!((r - 0.04).abs() < 1e-10);
        assert!(local_log_slope(&tr, (20.0, 30.0), 1e6).is_err());
    }

    #[test]
    fn csv_layouts() {
        let mut p = aggregate(&[1.0, 2.0], None).unwrap();
        p.list_name = "A".into();
        p.method = Some(Method::II);
        let csv = spectrum_csv(&[p]);
        assert!(csv.starts_with("list,method,mean_signal,stddev,n_reps\n"));
        assert!(csv.contains("A,II,1.5,"));
        let tr = DecayTrace {
            samples: vec![(0.0, 1.0)],
            method: Some(Method::I),
            list_name: "B".into(),
            rep: 3,
            seed: 9,
        };
        assert_eq!(tr.to_csv(), "time_s,fluorescence,method,list,rep,seed\n0,1,I,B,3,9\n");
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(mut v in proptest::collection::vec(-10.0f64..10.0, 2..20), seed in 0u64..1000) {
            let before = aggregate(&v, Some(1.3)).unwrap();
            // deterministic shuffle
            let len = v.len();
            for i in 0..len {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64).wrapping_mul(1442695040888963407)) >> 33) as usize % len;
                v.swap(i, j);
            }
            let after = aggregate(&v, Some(1.3)).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn fit_recovers_rate_on_noiseless_data(rate in 0.01f64..0.5, a in 1.0f64..1000.0, c in 0.0f64..100.0) {
            let tr = synthetic(a, rate, c, 0.05, 10.0);
            let fit = fit_exponential(&tr, (0.0, 10.0)).unwrap();
            prop_assert!((fit.rate - rate).abs() < 1e-6 * rate.max(1.0), "{:?}", fit);
        }
    }
}
