//! Doppler widths, Zeeman-shifted line positions and the THz excitation
//! profile seen by a line.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::constants::{hd_plus_mass_kg, BOLTZMANN, F0_SPINLESS_HZ, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::levelcat::{FrequencyList, HyperfineLine};

/// Quadrature order for averaging over the field distribution.
pub const FIELD_QUADRATURE_POINTS: usize = 16;

/// Beyond this many effective standard deviations the Gaussian is treated as 0.
const NEGLIGIBLE_SIGMAS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerParams {
    pub ion_temperature_k: f64,
    pub ion_mass_kg: f64,
    pub transition_frequency_hz: f64,
}

impl DopplerParams {
    /// HD+ on the fundamental rotational line at the given temperature.
    pub fn hd_plus(ion_temperature_k: f64) -> Self {
        Self {
            ion_temperature_k,
            ion_mass_kg: hd_plus_mass_kg(),
            transition_frequency_hz: F0_SPINLESS_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ion_temperature_k >= 0.0)
            || !(self.ion_mass_kg > 0.0)
            || !(self.transition_frequency_hz > 0.0)
        {
            return Err(Error::Validation(
                "Doppler parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Magnetic field magnitude with an optional Gaussian spread over the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticField {
    pub magnitude_g: f64,
    pub spread_g: f64,
}

impl MagneticField {
    pub fn new(magnitude_g: f64) -> Self {
        Self {
            magnitude_g,
            spread_g: 0.0,
        }
    }

    pub fn with_spread(magnitude_g: f64, spread_g: f64) -> Self {
        Self {
            magnitude_g,
            spread_g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude_g >= 0.0) || !(self.spread_g >= 0.0) {
            return Err(Error::Validation(
                "magnetic field and spread must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian Doppler FWHM `f0 sqrt(8 ln2 k T / (m c^2))`, Hz.
pub fn doppler_fwhm(p: &DopplerParams) -> f64 {
    let t = p.ion_temperature_k.max(0.0);
    p.transition_frequency_hz
        * (8.0 * LN_2 * BOLTZMANN * t / (p.ion_mass_kg * SPEED_OF_LIGHT * SPEED_OF_LIGHT)).sqrt()
}

/// Standard deviation of the Doppler Gaussian.
pub fn doppler_sigma(p: &DopplerParams) -> f64 {
    doppler_fwhm(p) / (2.0 * (2.0 * LN_2).sqrt())
}

fn position_at(line: &HyperfineLine, b: f64) -> f64 {
    line.zero_field_offset_hz + line.zeeman_c1_hz_per_g * b + line.zeeman_c2_hz_per_g2 * b * b
}

/// Line position at the field magnitude, as an offset from the reference, Hz.
pub fn line_position(line: &HyperfineLine, field: &MagneticField) -> f64 {
    position_at(line, field.magnitude_g)
}

/// THz offset at time `t` into a list sequence: the entry active in the
/// current dwell slot plus a sinusoidal modulation.
pub fn instantaneous_thz_frequency(list: &FrequencyList, t: f64) -> f64 {
    list.entries_hz[entry_index(list, t)]
        + list.fm_amplitude_hz * (2.0 * PI * list.fm_rate_hz * t).sin()
}

/// Index of the list entry active at `t` (t measured from the list start).
pub fn entry_index(list: &FrequencyList, t: f64) -> usize {
    // Tolerance keeps exact dwell boundaries (0.6 / 0.2 = 2.999..) in the next slot.
    let slot = (t.max(0.0) / list.dwell_s + 1e-9).floor() as usize;
    slot % list.entries_hz.len()
}

/// Pumping rate on `line` for THz radiation at `thz_offset_hz`:
/// `peak_rate * weight * exp(-d^2 / (2 sigma^2))`, averaged over the field
/// spread when one is given.
pub fn excitation_rate(
    line: &HyperfineLine,
    thz_offset_hz: f64,
    field: &MagneticField,
    doppler: &DopplerParams,
    peak_rate: f64,
) -> f64 {
    excitation_rate_with_sigma(line, thz_offset_hz, field, doppler_sigma(doppler), peak_rate)
}

/// Same as [`excitation_rate`] with a precomputed Doppler sigma.
pub fn excitation_rate_with_sigma(
    line: &HyperfineLine,
    thz_offset_hz: f64,
    field: &MagneticField,
    sigma: f64,
    peak_rate: f64,
) -> f64 {
    let scale = peak_rate * line.weight;
    if scale == 0.0 {
        return 0.0;
    }
    let gaussian = |b: f64| -> f64 {
        let d = thz_offset_hz - position_at(line, b);
        if sigma == 0.0 {
            return if d == 0.0 { 1.0 } else { 0.0 };
        }
        let z = d / sigma;
        if z.abs() > NEGLIGIBLE_SIGMAS {
            0.0
        } else {
            (-0.5 * z * z).exp()
        }
    };
    if field.spread_g == 0.0 {
        return scale * gaussian(field.magnitude_g);
    }
    // Skip the quadrature when the line cannot come close to the THz offset.
    let b0 = field.magnitude_g;
    let reach = 10.0 * field.spread_g;
    let slope = line.zeeman_c1_hz_per_g.abs()
        + 2.0 * line.zeeman_c2_hz_per_g2.abs() * (b0.abs() + reach);
    let nearest = (thz_offset_hz - position_at(line, b0)).abs() - slope * reach;
    if sigma > 0.0 && nearest > NEGLIGIBLE_SIGMAS * sigma {
        return 0.0;
    }
    let (nodes, weights) = gauss_hermite();
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * gaussian(b0 + std::f64::consts::SQRT_2 * field.spread_g * x);
    }
    scale * acc / PI.sqrt()
}

/// Nodes and weights of the 16-point Gauss-Hermite rule (weight `exp(-x^2)`).
pub fn gauss_hermite() -> &'static ([f64; FIELD_QUADRATURE_POINTS], [f64; FIELD_QUADRATURE_POINTS]) {
    static RULE: OnceLock<([f64; FIELD_QUADRATURE_POINTS], [f64; FIELD_QUADRATURE_POINTS])> =
        OnceLock::new();
    RULE.get_or_init(|| compute_gauss_hermite::<FIELD_QUADRATURE_POINTS>())
}

/// Newton iteration on the orthonormal Hermite recurrence.
fn compute_gauss_hermite<const N: usize>() -> ([f64; N], [f64; N]) {
    let pim4 = PI.powf(-0.25);
    let n = N as f64;
    let mut x = [0.0; N];
    let mut w = [0.0; N];
    let m = N.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n + 1.0).sqrt() - 1.85575 * (2.0 * n + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * n.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..N {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[N - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[N - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelcat::{default_catalog, Polarization, GROUND_STATES, N1_STATES};
    use proptest::prelude::*;

    fn test_line(offset: f64, c1: f64, c2: f64) -> HyperfineLine {
        HyperfineLine {
            lower: GROUND_STATES[2],
            upper: N1_STATES[4],
            lower_jz: Some(0),
            upper_jz: Some(0),
            zero_field_offset_hz: offset,
            zeeman_c1_hz_per_g: c1,
            zeeman_c2_hz_per_g2: c2,
            polarization: Polarization::Pi,
            weight: 1.0,
            low_shift: false,
            targeted: true,
        }
    }

    #[test]
    fn doppler_widths() {
        let w10 = doppler_fwhm(&DopplerParams::hd_plus(0.010));
        assert!((w10 - 54.2e3).abs() < 0.1e3, "{w10}");
        let w15 = doppler_fwhm(&DopplerParams::hd_plus(0.015));
        assert!((w15 - 66.4e3).abs() < 0.1e3, "{w15}");
        assert_eq!(doppler_fwhm(&DopplerParams::hd_plus(0.0)), 0.0);
    }

    #[test]
    fn doppler_scales_with_sqrt_temperature() {
        for t in [0.001, 0.01, 0.15, 2.0] {
            let a = doppler_fwhm(&DopplerParams::hd_plus(t));
            let b = doppler_fwhm(&DopplerParams::hd_plus(4.0 * t));
            assert!((b - 2.0 * a).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn chosen_line_positions() {
        let line = test_line(-6.617e6, 0.0, 78.0e3);
        assert_eq!(line_position(&line, &MagneticField::new(0.0)), -6.617e6);
        let at1 = line_position(&line, &MagneticField::new(1.0));
        assert!((at1 + 6.539e6).abs() < 1e-6);
    }

    #[test]
    fn bundled_lines_reproduce_list_a() {
        let cat = default_catalog();
        let a = cat.list("A").unwrap();
        let field = MagneticField::new(1.0);
        let positions: Vec<f64> = cat.targeted().map(|l| line_position(l, &field)).collect();
        for entry in &a.entries_hz {
            assert!(positions.iter().any(|p| (p - entry).abs() <= 1.0e3));
        }
    }

    #[test]
    fn fm_schedule() {
        let list = crate::levelcat::builtin_lists().remove(1);
        assert_eq!(list.name, "A");
        assert_eq!(instantaneous_thz_frequency(&list, 0.0), -33.211e6);
        let f = instantaneous_thz_frequency(&list, 0.05);
        assert!((f - (-33.211e6 + 2.0e3)).abs() < 1e-6);
        let t = 0.21;
        let f = instantaneous_thz_frequency(&list, t);
        let fm = 2.0e3 * (2.0 * PI * 5.0 * t).sin();
        assert!((f - (-6.539e6 + fm)).abs() < 1e-6);
        assert_eq!(entry_index(&list, 0.6), 3);
        assert_eq!(entry_index(&list, 0.8), 0);
    }

    #[test]
    fn excitation_on_and_half_maximum() {
        let line = test_line(0.0, 0.0, 0.0);
        let d = DopplerParams::hd_plus(0.01);
        let field = MagneticField::new(1.0);
        assert_eq!(excitation_rate(&line, 0.0, &field, &d, 3.0), 3.0);
        let half = doppler_fwhm(&d) / 2.0;
        let r = excitation_rate(&line, half, &field, &d, 3.0);
        assert!((r - 1.5).abs() < 1e-12);
    }

    #[test]
    fn detuned_list_b_is_far_in_the_wings() {
        let line = test_line(-9.069e6, 0.0, 0.0);
        let d = DopplerParams::hd_plus(0.01);
        let r = excitation_rate(&line, -9.773e6, &MagneticField::new(1.0), &d, 1.0);
        assert!(r < 1e-10);
    }

    #[test]
    fn gauss_hermite_rule() {
        let (x, w) = gauss_hermite();
        let sum: f64 = w.iter().sum();
        assert!((sum - PI.sqrt()).abs() < 1e-13);
        let m2: f64 = x.iter().zip(w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
        let m30: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(30)).sum();
        // int x^30 exp(-x^2) dx = Gamma(15.5)
        let expected = (1..=15).fold(PI.sqrt(), |acc, k| acc * (k as f64 - 0.5));
        assert!((m30 - expected).abs() / expected < 1e-10);
    }

    #[test]
    fn field_spread_matches_brute_force_average() {
        let line = test_line(0.0, 200.0e3, 0.0);
        let d = DopplerParams::hd_plus(0.012);
        let sigma = doppler_sigma(&d);
        let field = MagneticField::with_spread(1.0, 0.1);
        let thz = 230.0e3;
        // Riemann sum over the field distribution.
        let mut acc = 0.0;
        let db = 1e-4;
        let mut b = 0.0;
        while b < 2.0 {
            let pdf = (-(b - 1.0f64).powi(2) / (2.0 * 0.01)).exp() / (0.1 * (2.0 * PI).sqrt());
            let delta = thz - 200.0e3 * b;
            acc += pdf * (-(delta * delta) / (2.0 * sigma * sigma)).exp() * db;
            b += db;
        }
        let q = excitation_rate(&line, thz, &field, &d, 1.0);
        assert!((q - acc).abs() < 1e-6, "{q} vs {acc}");
        // Broadened Gaussian with sigma_eff = sqrt(sigma^2 + (c1 sB)^2), exact for linear shifts.
        let s_eff = (sigma * sigma + (200.0e3f64 * 0.1).powi(2)).sqrt();
        let exact = sigma / s_eff * (-(30.0e3f64.powi(2)) / (2.0 * s_eff * s_eff)).exp();
        assert!((q - exact).abs() < 1e-6, "{q} vs {exact}");
    }

    proptest! {
        #[test]
        fn excitation_symmetric_and_maximal_on_resonance(delta in 0.0f64..500e3, t in 0.005f64..0.3) {
            let line = test_line(-2.0e6, 0.0, 0.0);
            let d = DopplerParams::hd_plus(t);
            let field = MagneticField::new(1.0);
            let plus = excitation_rate(&line, -2.0e6 + delta, &field, &d, 1.0);
            let minus = excitation_rate(&line, -2.0e6 - delta, &field, &d, 1.0);
            // (-2 MHz + d) and (-2 MHz - d) round differently; allow that.
            prop_assert!((plus - minus).abs() <= 1e-9 * plus.max(minus));
            prop_assert!(plus <= excitation_rate(&line, -2.0e6, &field, &d, 1.0));
        }

        #[test]
        fn polynomial_position(c1 in -1e6f64..1e6, c2 in -1e5f64..1e5, b in 0.0f64..3.0) {
            let line = test_line(-6.0e6, c1, c2);
            let diff = line_position(&line, &MagneticField::new(b)) - line_position(&line, &MagneticField::new(0.0));
            let expected = c1 * b + c2 * b * b;
            prop_assert!((diff - expected).abs() <= 1e-9 * (1.0 + expected.abs()) + 2e-9);
        }
    }
}
