//! Simulation configuration, stored as TOML with units in the key names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::FitOptions;
use crate::error::{Error, Result};
use crate::kinetics::{RateModel, ResidueProfile, DEFAULT_N_MAX, MAX_STEP_S};
use crate::levelcat::{default_catalog, load_catalog, Catalog, HyperfineLine};
use crate::lineshape::{DopplerParams, MagneticField};
use crate::protocol::{FluorescenceModel, Method, ProtocolConfig};
use crate::radfield::{EinsteinSet, ThermalEnvironment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Line catalog file; the bundled catalog when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog_path: Option<PathBuf>,
    pub master_seed: u64,
    pub field: FieldConfig,
    pub ions: IonConfig,
    pub bbr: BbrConfig,
    pub residue: ResidueProfile,
    pub rates: RateConfig,
    pub fluorescence: FluorescenceConfig,
    pub protocol: ProtocolConfig,
    pub analysis: AnalysisConfig,
    pub integration: IntegrationConfig,
    pub metadata: ApparatusMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub magnetic_field_gauss: f64,
    /// Gaussian spread of the field over the ion ensemble.
    pub magnetic_field_spread_gauss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonConfig {
    pub molecule_count: f64,
    /// p(N=0) - p(N=1) right after rotational cooling.
    pub ground_fraction: f64,
    /// Method I (liquid ensemble).
    pub ion_temperature_liquid_k: f64,
    /// Method II (crystallized ensemble).
    pub ion_temperature_crystal_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbrConfig {
    pub temperature_k: f64,
    pub n_max: usize,
    /// A(N+1 -> N) for N = 0, 1, ...
    pub einstein_a_per_s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoolingMode {
    /// Start the excitation phase from the post-cooling state given by
    /// `ground_fraction` and the residue profile.
    Prepared,
    /// Integrate the cooling phase from thermal equilibrium with the pump rates.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    /// REMPD loss out of N=1 in the liquid-state runs (method I).
    pub rempd_rate_method1_per_s: f64,
    /// REMPD loss out of N=1 in the crystallized runs (method II).
    pub rempd_rate_method2_per_s: f64,
    /// "Very high intensity" REMPD rate used for the saturated-limit checks.
    pub rempd_saturated_rate_per_s: f64,
    /// On-resonance pumping rate of a unit-weight THz line.
    pub thz_peak_rate_per_s: f64,
    pub cooling_rate_5p5_per_s: f64,
    pub cooling_rate_2p7_per_s: f64,
    pub cooling_mode: CoolingMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluorescenceConfig {
    pub background_counts_per_s: f64,
    pub gain_counts_per_s_per_molecule: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturation_molecules: Option<f64>,
    /// Gaussian noise per sample in the liquid-state runs (method I).
    pub noise_sigma_liquid_counts_per_s: f64,
    /// Gaussian noise per sample in the crystallized runs (method II).
    pub noise_sigma_crystal_counts_per_s: f64,
    pub poisson: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Exponential fit over the fit window.
    Fit,
    /// Local log-slope over the 25 s window.
    At25s,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Relative to REMPD turn-on.
    pub fit_window_start_s: f64,
    pub fit_window_stop_s: f64,
    /// Float a constant offset. When false the configured background level
    /// is subtracted and a pure exponential is fitted.
    pub fit_offset: bool,
    pub rate_mode: RateMode,
    pub rate25_window_start_s: f64,
    pub rate25_window_stop_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub time_step_s: f64,
    pub record_interval_s: f64,
}

/// Apparatus settings kept for the record; they do not enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApparatusMetadata {
    pub secular_scan_low_khz: f64,
    pub secular_scan_high_khz: f64,
    pub trap_drive_mhz: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            catalog_path: None,
            master_seed: 20_240_601,
            field: FieldConfig::default(),
            ions: IonConfig::default(),
            bbr: BbrConfig::default(),
            residue: ResidueProfile::default(),
            rates: RateConfig::default(),
            fluorescence: FluorescenceConfig::default(),
            protocol: ProtocolConfig::default(),
            analysis: AnalysisConfig::default(),
            integration: IntegrationConfig::default(),
            metadata: ApparatusMetadata::default(),
        }
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            magnetic_field_gauss: 1.0,
            magnetic_field_spread_gauss: 0.1,
        }
    }
}

impl Default for IonConfig {
    fn default() -> Self {
        Self {
            molecule_count: 300.0,
            ground_fraction: 0.7,
            ion_temperature_liquid_k: 0.150,
            ion_temperature_crystal_k: 0.012,
        }
    }
}

impl Default for BbrConfig {
    fn default() -> Self {
        Self {
            temperature_k: 300.0,
            n_max: DEFAULT_N_MAX,
            einstein_a_per_s: EinsteinSet::fitted_default().a_by_lower,
        }
    }
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            rempd_rate_method1_per_s: 0.3,
            rempd_rate_method2_per_s: 0.3,
            rempd_saturated_rate_per_s: 1000.0,
            thz_peak_rate_per_s: 1.0,
            cooling_rate_5p5_per_s: 0.49,
            cooling_rate_2p7_per_s: 0.49,
            cooling_mode: CoolingMode::Prepared,
        }
    }
}

impl Default for FluorescenceConfig {
    fn default() -> Self {
        Self {
            background_counts_per_s: 2000.0,
            gain_counts_per_s_per_molecule: 20.0,
            saturation_molecules: None,
            noise_sigma_liquid_counts_per_s: 1500.0,
            noise_sigma_crystal_counts_per_s: 150.0,
            poisson: false,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            fit_window_start_s: 0.0,
            fit_window_stop_s: 10.0,
            fit_offset: false,
            rate_mode: RateMode::Fit,
            rate25_window_start_s: 20.0,
            rate25_window_stop_s: 30.0,
        }
    }
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            time_step_s: MAX_STEP_S,
            record_interval_s: 0.02,
        }
    }
}

impl Default for ApparatusMetadata {
    fn default() -> Self {
        Self {
            secular_scan_low_khz: 740.0,
            secular_scan_high_khz: 900.0,
            trap_drive_mhz: 14.2,
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // Catalog paths are relative to the config file.
        if let (Some(rel), Some(dir)) = (&cfg.catalog_path, path.parent()) {
            if rel.is_relative() {
                cfg.catalog_path = Some(dir.join(rel));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reference config with every default spelled out.
    pub fn reference_toml() -> String {
        let header = "\
# rotspec simulation config. Every key is optional; missing keys take the
# values shown here. Units are part of the key names.
";
        format!("{header}\n{}", Self::default().to_toml())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.field.magnetic_field_gauss) || !nonneg(self.field.magnetic_field_spread_gauss) {
            return bad("magnetic field and spread must be >= 0");
        }
        if !pos(self.ions.molecule_count) {
            return bad("molecule_count must be > 0");
        }
        if !(0.0..=1.0).contains(&self.ions.ground_fraction) {
            return bad("ground_fraction must lie in [0, 1]");
        }
        if !pos(self.ions.ion_temperature_liquid_k) || !pos(self.ions.ion_temperature_crystal_k) {
            return bad("ion temperatures must be > 0");
        }
        if !nonneg(self.bbr.temperature_k) {
            return bad("bbr temperature_k must be >= 0");
        }
        if self.bbr.n_max < 2 || self.bbr.einstein_a_per_s.len() < self.bbr.n_max {
            return bad("need n_max >= 2 and one Einstein A per manifold below n_max");
        }
        EinsteinSet::new(self.bbr.einstein_a_per_s.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let r = &self.rates;
        for v in [
            r.rempd_rate_method1_per_s,
            r.rempd_rate_method2_per_s,
            r.rempd_saturated_rate_per_s,
            r.thz_peak_rate_per_s,
            r.cooling_rate_5p5_per_s,
            r.cooling_rate_2p7_per_s,
        ] {
            if !nonneg(v) {
                return bad("rates must be finite and >= 0");
            }
        }
        for method in [Method::I, Method::II] {
            self.fluorescence_model(method, 0)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.protocol
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let a = &self.analysis;
        if !(a.fit_window_start_s < a.fit_window_stop_s) || !(a.rate25_window_start_s < a.rate25_window_stop_s) {
            return bad("analysis windows must have start < stop");
        }
        if a.fit_window_stop_s > self.protocol.observation_s {
            return bad("fit window extends past the observation time");
        }
        let i = &self.integration;
        if !(pos(i.time_step_s) && i.time_step_s <= MAX_STEP_S) {
            return bad("time_step_s must lie in (0, 0.001]");
        }
        if !pos(i.record_interval_s) {
            return bad("record_interval_s must be > 0");
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<Catalog> {
        match &self.catalog_path {
            Some(path) => load_catalog(path),
            None => Ok(default_catalog()),
        }
    }

    pub fn environment(&self) -> ThermalEnvironment {
        ThermalEnvironment::at(self.bbr.temperature_k)
    }

    pub fn einstein(&self) -> Result<EinsteinSet> {
        EinsteinSet::new(self.bbr.einstein_a_per_s.clone())
    }

    pub fn magnetic_field(&self) -> MagneticField {
        MagneticField::with_spread(
            self.field.magnetic_field_gauss,
            self.field.magnetic_field_spread_gauss,
        )
    }

    pub fn ion_temperature(&self, method: Method) -> f64 {
        match method {
            Method::I => self.ions.ion_temperature_liquid_k,
            Method::II => self.ions.ion_temperature_crystal_k,
        }
    }

    pub fn rempd_rate(&self, method: Method) -> f64 {
        match method {
            Method::I => self.rates.rempd_rate_method1_per_s,
            Method::II => self.rates.rempd_rate_method2_per_s,
        }
    }

    /// Rate model for `method` with the given THz lines.
    pub fn rate_model(&self, method: Method, lines: Vec<HyperfineLine>) -> Result<RateModel> {
        let model = RateModel {
            n_max: self.bbr.n_max,
            einstein: self.einstein()?,
            environment: self.environment(),
            bbr: true,
            lines,
            field: self.magnetic_field(),
            doppler: DopplerParams::hd_plus(self.ion_temperature(method)),
            thz_peak_rate: self.rates.thz_peak_rate_per_s,
            rempd_rate: self.rempd_rate(method),
            cooling_rate_5p5: self.rates.cooling_rate_5p5_per_s,
            cooling_rate_2p7: self.rates.cooling_rate_2p7_per_s,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn noise_sigma(&self, method: Method) -> f64 {
        match method {
            Method::I => self.fluorescence.noise_sigma_liquid_counts_per_s,
            Method::II => self.fluorescence.noise_sigma_crystal_counts_per_s,
        }
    }

    pub fn fluorescence_model(&self, method: Method, seed: u64) -> FluorescenceModel {
        let f = &self.fluorescence;
        FluorescenceModel {
            background_level: f.background_counts_per_s,
            gain: f.gain_counts_per_s_per_molecule,
            saturation_number: f.saturation_molecules,
            noise_sigma: self.noise_sigma(method),
            poisson: f.poisson,
            rng_seed: seed,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            offset: self.analysis.fit_offset,
        }
    }
}
