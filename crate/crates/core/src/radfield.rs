//! Black-body radiation field: Planck occupancy, Einstein-coefficient rates
//! and thermal rotational populations in v=0.

use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, F0_SPINLESS_HZ, PLANCK};
use crate::error::{Error, Result};

/// Largest thermal population fraction allowed beyond the truncation level.
pub const TRUNCATION_TAIL_LIMIT: f64 = 1.0e-3;

/// Mean photon number `1 / (exp(h f / k T) - 1)`.
pub fn planck_occupancy(frequency_hz: f64, temperature_k: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    if !(temperature_k >= 0.0) {
        return Err(Error::Domain(format!(
            "temperature must be >= 0, got {temperature_k}"
        )));
    }
    if temperature_k == 0.0 {
        return Ok(0.0);
    }
    let x = PLANCK * frequency_hz / (BOLTZMANN * temperature_k);
    Ok(1.0 / x.exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnvironment {
    pub temperature_k: f64,
    /// Rotational constant in frequency units, Hz.
    pub rotational_constant_hz: f64,
}

impl Default for ThermalEnvironment {
    fn default() -> Self {
        Self {
            temperature_k: 300.0,
            rotational_constant_hz: F0_SPINLESS_HZ / 2.0,
        }
    }
}

impl ThermalEnvironment {
    pub fn at(temperature_k: f64) -> Self {
        Self {
            temperature_k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_k > 0.0) {
            return Err(Error::Validation("BBR temperature must be > 0".into()));
        }
        if !(self.rotational_constant_hz > 0.0) {
            return Err(Error::Validation("rotational constant must be > 0".into()));
        }
        Ok(())
    }

    /// Frequency of the rigid-rotor transition N+1 -> N: `2 B (N+1)`.
    pub fn transition_frequency(&self, n_lower: usize) -> f64 {
        2.0 * self.rotational_constant_hz * (n_lower as f64 + 1.0)
    }
}

/// Spontaneous emission rate for one rotational transition in v=0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EinsteinA {
    pub n_upper: usize,
    pub n_lower: usize,
    /// s^-1
    pub a: f64,
}

/// Einstein A coefficients for N+1 -> N, indexed by the lower level N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EinsteinSet {
    pub a_by_lower: Vec<f64>,
}

impl EinsteinSet {
    pub fn new(a_by_lower: Vec<f64>) -> Result<Self> {
        let set = Self { a_by_lower };
        set.validate()?;
        Ok(set)
    }

    /// Rates fitted so that the N=0 -> 1 BBR absorption is 0.09/s and the
    /// N=2 -> 1 spontaneous rate 0.06/s at 300 K. Higher transitions follow the
    /// rigid-rotor scaling `A ~ (N+1)^4 / (2N+3)` from the 2 -> 1 value.
    pub fn fitted_default() -> Self {
        let env = ThermalEnvironment::default();
        let n10 = planck_occupancy(env.transition_frequency(0), env.temperature_k)
            .expect("positive frequency");
        let a10 = 0.09 / (3.0 * n10);
        let a21 = 0.06;
        let shape = |n: f64| (n + 1.0).powi(4) / (2.0 * n + 3.0);
        let mut a = vec![a10, a21];
        for n in 2..8 {
            a.push(a21 * shape(n as f64) / shape(1.0));
        }
        Self { a_by_lower: a }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a_by_lower.is_empty() {
            return Err(Error::Validation("Einstein A set is empty".into()));
        }
        if let Some(bad) = self.a_by_lower.iter().position(|a| !(*a > 0.0)) {
            return Err(Error::Validation(format!(
                "Einstein A for {} -> {bad} must be > 0",
                bad + 1
            )));
        }
        Ok(())
    }

    /// Highest rotational level reachable with this set.
    pub fn n_max(&self) -> usize {
        self.a_by_lower.len()
    }

    pub fn get(&self, n_lower: usize) -> Option<EinsteinA> {
        self.a_by_lower.get(n_lower).map(|&a| EinsteinA {
            n_upper: n_lower + 1,
            n_lower,
            a,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbrRates {
    pub absorption: f64,
    pub stimulated: f64,
    pub spontaneous: f64,
}

/// Absorption, stimulated and spontaneous emission rates for one transition,
/// with `n` the Planck occupancy at `frequency_hz`:
/// spontaneous `A`, stimulated `A n`, absorption `A n g_u / g_l`.
pub fn bbr_rates(
    einstein: &EinsteinA,
    frequency_hz: f64,
    env: &ThermalEnvironment,
    lower_deg: u32,
    upper_deg: u32,
) -> Result<BbrRates> {
    if lower_deg == 0 || upper_deg == 0 {
        return Err(Error::Domain("degeneracies must be > 0".into()));
    }
    let occupancy = planck_occupancy(frequency_hz, env.temperature_k)?;
    let stimulated = einstein.a * occupancy;
    Ok(BbrRates {
        absorption: stimulated * f64::from(upper_deg) / f64::from(lower_deg),
        stimulated,
        spontaneous: einstein.a,
    })
}

/// Rates for the rigid-rotor transition `n_lower + 1 -> n_lower`.
pub fn manifold_bbr_rates(
    einstein: &EinsteinSet,
    env: &ThermalEnvironment,
    n_lower: usize,
) -> Result<BbrRates> {
    let a = einstein.get(n_lower).ok_or_else(|| {
        Error::Domain(format!("no Einstein A for {} -> {n_lower}", n_lower + 1))
    })?;
    let g = |n: usize| 2 * n as u32 + 1;
    bbr_rates(
        &a,
        env.transition_frequency(n_lower),
        env,
        g(n_lower),
        g(n_lower + 1),
    )
}

fn boltzmann_weights(env: &ThermalEnvironment, n_max: usize) -> Vec<f64> {
    if env.temperature_k == 0.0 {
        let mut w = vec![0.0; n_max + 1];
        w[0] = 1.0;
        return w;
    }
    let x = PLANCK * env.rotational_constant_hz / (BOLTZMANN * env.temperature_k);
    (0..=n_max)
        .map(|n| {
            let n = n as f64;
            (2.0 * n + 1.0) * (-x * n * (n + 1.0)).exp()
        })
        .collect()
}

/// Boltzmann distribution over N = 0..=n_max, normalized over that range
/// without a tail check.
pub fn truncated_thermal_populations(env: &ThermalEnvironment, n_max: usize) -> Vec<f64> {
    let w = boltzmann_weights(env, n_max);
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

/// Thermal rotational population fractions p_0..p_{n_max}, summing to 1.
/// Fails when the population beyond `n_max` exceeds 1e-3 of the total.
pub fn thermal_rotational_populations(
    env: &ThermalEnvironment,
    n_max: usize,
) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::Domain("n_max must be >= 1".into()));
    }
    if !(env.temperature_k >= 0.0) || !(env.rotational_constant_hz > 0.0) {
        return Err(Error::Domain("invalid thermal environment".into()));
    }
    // Extend far enough that the remaining terms are negligible.
    let mut far = n_max + 1;
    let weights = loop {
        let w = boltzmann_weights(env, far);
        if w[far] < 1e-18 * w.iter().sum::<f64>() || far > 10_000 {
            break w;
        }
        far *= 2;
    };
    let total: f64 = weights.iter().sum();
    let kept: f64 = weights[..=n_max].iter().sum();
    let tail = (total - kept) / total;
    if tail > TRUNCATION_TAIL_LIMIT {
        return Err(Error::Truncation { n_max, tail });
    }
    Ok(weights[..=n_max].iter().map(|w| w / kept).collect())
}
