//! Level structure of HD+ in (v=0, N=0,1) and the hyperfine line catalog.
//!
//! Line data and frequency lists are read from a plain-text catalog file:
//!
//! ```text
//! [meta]
//! reference_frequency_MHz = 1314925.752
//!
//! [lines]
//! # lower  upper  jz  jz'  offset_MHz  c1_kHz_per_G  c2_kHz_per_G2  pol  weight  low_shift  targeted
//! 1,2,2  1,2,3  0  0  -33.211  0  0  pi  1.0  yes  yes
//!
//! [list.A]
//! entries_MHz = -33.211, -6.539, -9.069, -2.138
//! dwell_s = 0.2
//! fm_amplitude_kHz = 2
//! fm_rate_Hz = 5
//! ```
//!
//! Frequencies are offsets from the spinless reference frequency.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{F0_SPINLESS_HZ, KHZ, MHZ};
use crate::error::{Error, Result};
use crate::lineshape::{line_position, MagneticField};

/// Largest |c2| (at 1 G) allowed for a line flagged as low-shift, Hz.
pub const LOW_SHIFT_C2_LIMIT_HZ: f64 = 6.2e3;

/// Every entry of lists A..E must lie within this distance of the reference.
pub const LIST_SPAN_LIMIT_HZ: f64 = 40.0e6;

pub const DEFAULT_DWELL_S: f64 = 0.200;
pub const DEFAULT_FM_AMPLITUDE_HZ: f64 = 2.0e3;
pub const DEFAULT_FM_RATE_HZ: f64 = 5.0;

/// Name of the far-detuned background list.
pub const DETUNED_500: &str = "detuned500";

const BUNDLED_CATALOG: &str = include_str!("../data/default_catalog.txt");

/// A ro-vibrational level with its rigid-rotor energy offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoVibLevel {
    pub v: u32,
    pub n: u32,
    /// Energy relative to (v=0, N=0), in frequency units (Hz).
    pub energy_offset_hz: f64,
}

impl RoVibLevel {
    /// Rigid-rotor level `E_N = B N (N+1)` in v=0.
    pub fn rigid_rotor(n: u32, rotational_constant_hz: f64) -> Self {
        let n_f = f64::from(n);
        Self {
            v: 0,
            n,
            energy_offset_hz: rotational_constant_hz * n_f * (n_f + 1.0),
        }
    }
}

/// Hyperfine state labelled by the (approximate) quantum numbers (F, S, J).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HyperfineState {
    pub v: u32,
    pub n: u32,
    pub f: u8,
    pub s: u8,
    pub j: u8,
}

impl HyperfineState {
    pub const fn new(n: u32, f: u8, s: u8, j: u8) -> Self {
        Self { v: 0, n, f, s, j }
    }

    pub fn degeneracy(&self) -> u32 {
        2 * u32::from(self.j) + 1
    }

    pub fn level(&self, rotational_constant_hz: f64) -> RoVibLevel {
        RoVibLevel::rigid_rotor(self.n, rotational_constant_hz)
    }

    fn fsj_token(&self) -> String {
        format!("{},{},{}", self.f, self.s, self.j)
    }
}

impl fmt::Display for HyperfineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.f, self.s, self.j)
    }
}

/// The four hyperfine states of (v=0, N=0), in population-vector order.
pub const GROUND_STATES: [HyperfineState; 4] = [
    HyperfineState::new(0, 1, 0, 0),
    HyperfineState::new(0, 0, 1, 1),
    HyperfineState::new(0, 1, 1, 1),
    HyperfineState::new(0, 1, 2, 2),
];

/// The ten hyperfine states of (v=0, N=1), in population-vector order.
pub const N1_STATES: [HyperfineState; 10] = [
    HyperfineState::new(1, 0, 1, 0),
    HyperfineState::new(1, 0, 1, 1),
    HyperfineState::new(1, 0, 1, 2),
    HyperfineState::new(1, 1, 0, 1),
    HyperfineState::new(1, 1, 1, 0),
    HyperfineState::new(1, 1, 1, 1),
    HyperfineState::new(1, 1, 1, 2),
    HyperfineState::new(1, 1, 2, 1),
    HyperfineState::new(1, 1, 2, 2),
    HyperfineState::new(1, 1, 2, 3),
];

pub fn ground_index(state: &HyperfineState) -> Option<usize> {
    GROUND_STATES.iter().position(|s| s == state)
}

pub fn n1_index(state: &HyperfineState) -> Option<usize> {
    N1_STATES.iter().position(|s| s == state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Pi,
    Sigma,
}

impl FromStr for Polarization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pi" => Ok(Polarization::Pi),
            "sigma" => Ok(Polarization::Sigma),
            other => Err(format!("unknown polarization '{other}'")),
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::Pi => f.write_str("pi"),
            Polarization::Sigma => f.write_str("sigma"),
        }
    }
}

/// One electric-dipole line between a (v=0,N=0) and a (v=0,N=1) hyperfine
/// (sub)state. The position in a field `B` (gauss) is
/// `zero_field_offset + c1 B + c2 B^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineLine {
    pub lower: HyperfineState,
    pub upper: HyperfineState,
    pub lower_jz: Option<i8>,
    pub upper_jz: Option<i8>,
    pub zero_field_offset_hz: f64,
    pub zeeman_c1_hz_per_g: f64,
    pub zeeman_c2_hz_per_g2: f64,
    pub polarization: Polarization,
    /// Relative line strength.
    pub weight: f64,
    /// One of the Jz=0 -> Jz'=0 lines with a small quadratic Zeeman shift.
    pub low_shift: bool,
    /// Addressed by the frequency lists.
    pub targeted: bool,
}

impl HyperfineLine {
    pub fn label(&self) -> String {
        let jz = |v: Option<i8>| v.map_or_else(|| "*".to_string(), |j| j.to_string());
        format!(
            "{}->{} [{}->{}]",
            self.lower,
            self.upper,
            jz(self.lower_jz),
            jz(self.upper_jz)
        )
    }
}

/// A named, cyclically stepped set of THz frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyList {
    pub name: String,
    /// Offsets from the reference frequency, Hz.
    pub entries_hz: Vec<f64>,
    pub dwell_s: f64,
    /// Peak frequency deviation of the modulation, Hz.
    pub fm_amplitude_hz: f64,
    pub fm_rate_hz: f64,
}

impl FrequencyList {
    pub fn new(name: &str, entries_mhz: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            entries_hz: entries_mhz.iter().map(|m| m * MHZ).collect(),
            dwell_s: DEFAULT_DWELL_S,
            fm_amplitude_hz: DEFAULT_FM_AMPLITUDE_HZ,
            fm_rate_hz: DEFAULT_FM_RATE_HZ,
        }
    }

    /// Time for one pass through all entries.
    pub fn cycle_duration(&self) -> f64 {
        self.dwell_s * self.entries_hz.len() as f64
    }

    pub fn is_detuned_background(&self) -> bool {
        self.name == DETUNED_500
    }
}

/// Required entry count for the lists whose names are fixed.
fn required_entry_count(name: &str) -> Option<usize> {
    match name {
        "A'" => Some(7),
        "A" | "B" | "C" | "D" | "E" => Some(4),
        DETUNED_500 => Some(1),
        _ => None,
    }
}

/// Accepts the alias `Aprime` for `A'` (easier to type on a shell).
pub fn canonical_list_name(name: &str) -> &str {
    match name {
        "Aprime" | "aprime" | "A_prime" => "A'",
        other => other,
    }
}

pub fn validate_list(list: &FrequencyList) -> Result<()> {
    let name = list.name.as_str();
    if name.is_empty() {
        return Err(Error::Validation("frequency list with empty name".into()));
    }
    if list.entries_hz.is_empty() {
        return Err(Error::Validation(format!("list {name} has no entries")));
    }
    if let Some(n) = required_entry_count(name) {
        if list.entries_hz.len() != n {
            return Err(Error::Validation(format!(
                "list {name} must have {n} entries, found {}",
                list.entries_hz.len()
            )));
        }
    }
    if name == DETUNED_500 && list.entries_hz[0] != 500.0 * MHZ {
        return Err(Error::Validation(format!(
            "list {DETUNED_500} must contain exactly +500 MHz"
        )));
    }
    if matches!(name, "A'" | "A" | "B" | "C" | "D" | "E") {
        if let Some(bad) = list
            .entries_hz
            .iter()
            .find(|e| e.abs() > LIST_SPAN_LIMIT_HZ)
        {
            return Err(Error::Validation(format!(
                "list {name} entry {} MHz is outside +/-40 MHz",
                bad / MHZ
            )));
        }
    }
    if list.entries_hz.iter().any(|e| !e.is_finite()) {
        return Err(Error::Validation(format!("list {name} has a non-finite entry")));
    }
    if !(list.dwell_s > 0.0) {
        return Err(Error::Validation(format!("list {name}: dwell must be > 0")));
    }
    if !(list.fm_amplitude_hz >= 0.0) || !(list.fm_rate_hz >= 0.0) {
        return Err(Error::Validation(format!(
            "list {name}: FM amplitude and rate must be >= 0"
        )));
    }
    Ok(())
}

fn validate_line(line: &HyperfineLine) -> Result<()> {
    let label = line.label();
    if ground_index(&line.lower).is_none() {
        return Err(Error::Validation(format!(
            "line {label}: lower state is not a (v=0,N=0) hyperfine state"
        )));
    }
    if n1_index(&line.upper).is_none() {
        return Err(Error::Validation(format!(
            "line {label}: upper state is not a (v=0,N=1) hyperfine state"
        )));
    }
    if let Some(jz) = line.lower_jz {
        if i32::from(jz).unsigned_abs() > u32::from(line.lower.j) {
            return Err(Error::Validation(format!("line {label}: |Jz| > J")));
        }
    }
    if let Some(jz) = line.upper_jz {
        if i32::from(jz).unsigned_abs() > u32::from(line.upper.j) {
            return Err(Error::Validation(format!("line {label}: |Jz'| > J'")));
        }
    }
    let values = [
        line.zero_field_offset_hz,
        line.zeeman_c1_hz_per_g,
        line.zeeman_c2_hz_per_g2,
        line.weight,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("line {label}: non-finite value")));
    }
    if line.weight < 0.0 {
        return Err(Error::Validation(format!("line {label}: negative weight")));
    }
    if line.low_shift {
        if line.zeeman_c1_hz_per_g != 0.0 {
            return Err(Error::Validation(format!(
                "line {label}: low-shift line must have zero linear Zeeman coefficient"
            )));
        }
        if line.zeeman_c2_hz_per_g2.abs() > LOW_SHIFT_C2_LIMIT_HZ {
            return Err(Error::Validation(format!(
                "line {label}: low-shift line has quadratic shift above 6.2 kHz at 1 G"
            )));
        }
    }
    Ok(())
}

/// Reference frequency, line set and frequency lists. Immutable after load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub reference_frequency_hz: f64,
    pub lines: Vec<HyperfineLine>,
    pub lists: Vec<FrequencyList>,
}

impl Catalog {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_frequency_hz > 0.0) || !self.reference_frequency_hz.is_finite() {
            return Err(Error::Validation(
                "reference frequency must be positive".into(),
            ));
        }
        for line in &self.lines {
            validate_line(line)?;
        }
        for (i, list) in self.lists.iter().enumerate() {
            validate_list(list)?;
            if self.lists[..i].iter().any(|l| l.name == list.name) {
                return Err(Error::Validation(format!(
                    "duplicate frequency list {}",
                    list.name
                )));
            }
        }
        Ok(())
    }

    /// Looks up a frequency list by name (`Aprime` is accepted for `A'`).
    pub fn list(&self, name: &str) -> Option<&FrequencyList> {
        let name = canonical_list_name(name);
        self.lists.iter().find(|l| l.name == name)
    }

    pub fn require_list(&self, name: &str) -> Result<&FrequencyList> {
        self.list(name)
            .ok_or_else(|| Error::UnknownList(name.to_string()))
    }

    pub fn targeted(&self) -> impl Iterator<Item = &HyperfineLine> {
        self.lines.iter().filter(|l| l.targeted)
    }

    /// Serializes to the catalog text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# HD+ (v=0,N=0) -> (v'=0,N'=1) hyperfine line catalog\n");
        out.push_str("# frequencies are offsets from the spinless reference frequency\n\n");
        out.push_str("[meta]\n");
        let _ = writeln!(
            out,
            "reference_frequency_MHz = {}",
            scaled_repr(self.reference_frequency_hz, MHZ)
        );
        out.push_str("\n[lines]\n");
        out.push_str(
            "# lower upper jz jz' offset_MHz c1_kHz_per_G c2_kHz_per_G2 pol weight low_shift targeted\n",
        );
        let jz = |v: Option<i8>| v.map_or_else(|| "-".to_string(), |j| j.to_string());
        let yn = |b: bool| if b { "yes" } else { "no" };
        for line in &self.lines {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {} {}",
                line.lower.fsj_token(),
                line.upper.fsj_token(),
                jz(line.lower_jz),
                jz(line.upper_jz),
                scaled_repr(line.zero_field_offset_hz, MHZ),
                scaled_repr(line.zeeman_c1_hz_per_g, KHZ),
                scaled_repr(line.zeeman_c2_hz_per_g2, KHZ),
                line.polarization,
                line.weight,
                yn(line.low_shift),
                yn(line.targeted),
            );
        }
        for list in &self.lists {
            let _ = writeln!(out, "\n[list.{}]", list.name);
            let entries: Vec<String> = list
                .entries_hz
                .iter()
                .map(|e| scaled_repr(*e, MHZ))
                .collect();
            let _ = writeln!(out, "entries_MHz = {}", entries.join(", "));
            let _ = writeln!(out, "dwell_s = {}", list.dwell_s);
            let _ = writeln!(
                out,
                "fm_amplitude_kHz = {}",
                scaled_repr(list.fm_amplitude_hz, KHZ)
            );
            let _ = writeln!(out, "fm_rate_Hz = {}", list.fm_rate_hz);
        }
        out
    }
}

impl FromStr for Catalog {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        parse_catalog(text)
    }
}

/// Shortest decimal representation of `value / scale` that parses back to
/// exactly `value` once multiplied by `scale`.
fn scaled_repr(value: f64, scale: f64) -> String {
    let base = value / scale;
    if base * scale == value {
        return format!("{base}");
    }
    let mut up = base;
    let mut down = base;
    for _ in 0..8 {
        up = next_toward(up, f64::INFINITY);
        down = next_toward(down, f64::NEG_INFINITY);
        if up * scale == value {
            return format!("{up}");
        }
        if down * scale == value {
            return format!("{down}");
        }
    }
    format!("{base}")
}

fn next_toward(x: f64, target: f64) -> f64 {
    if x == target || x.is_nan() {
        return x;
    }
    if x == 0.0 {
        let tiny = f64::from_bits(1);
        return if target > 0.0 { tiny } else { -tiny };
    }
    let bits = x.to_bits();
    let away_from_zero = (target > x) == (x > 0.0);
    f64::from_bits(if away_from_zero { bits + 1 } else { bits - 1 })
}

enum Section {
    None,
    Meta,
    Lines,
    List(usize),
}

struct PartialList {
    name: String,
    entries: Option<Vec<f64>>,
    dwell_s: f64,
    fm_amplitude_hz: f64,
    fm_rate_hz: f64,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid {what} '{token}'")))
}

fn parse_fsj(token: &str, n: u32, line: usize) -> Result<HyperfineState> {
    let parts: Vec<&str> = token.trim_matches(|c| c == '(' || c == ')').split(',').collect();
    if parts.len() != 3 {
        return Err(parse_err(line, format!("expected F,S,J triple, got '{token}'")));
    }
    let mut q = [0u8; 3];
    for (slot, part) in q.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("invalid quantum number in '{token}'")))?;
    }
    Ok(HyperfineState::new(n, q[0], q[1], q[2]))
}

fn parse_jz(token: &str, line: usize) -> Result<Option<i8>> {
    if token == "-" || token == "*" {
        return Ok(None);
    }
    token
        .parse()
        .map(Some)
        .map_err(|_| parse_err(line, format!("invalid Jz '{token}'")))
}

fn parse_flag(token: &str, line: usize) -> Result<bool> {
    match token.to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" | "1" => Ok(true),
        "no" | "n" | "false" | "0" => Ok(false),
        _ => Err(parse_err(line, format!("invalid flag '{token}' (use yes/no)"))),
    }
}

fn parse_line_row(row: &str, line_no: usize) -> Result<HyperfineLine> {
    let tokens: Vec<&str> = row.split_whitespace().collect();
    if tokens.len() != 11 {
        return Err(parse_err(
            line_no,
            format!("line row needs 11 columns, found {}", tokens.len()),
        ));
    }
    Ok(HyperfineLine {
        lower: parse_fsj(tokens[0], 0, line_no)?,
        upper: parse_fsj(tokens[1], 1, line_no)?,
        lower_jz: parse_jz(tokens[2], line_no)?,
        upper_jz: parse_jz(tokens[3], line_no)?,
        zero_field_offset_hz: parse_f64(tokens[4], line_no, "offset")? * MHZ,
        zeeman_c1_hz_per_g: parse_f64(tokens[5], line_no, "c1")? * KHZ,
        zeeman_c2_hz_per_g2: parse_f64(tokens[6], line_no, "c2")? * KHZ,
        polarization: tokens[7]
            .parse()
            .map_err(|e: String| parse_err(line_no, e))?,
        weight: parse_f64(tokens[8], line_no, "weight")?,
        low_shift: parse_flag(tokens[9], line_no)?,
        targeted: parse_flag(tokens[10], line_no)?,
    })
}

/// Parses and validates catalog text.
pub fn parse_catalog(text: &str) -> Result<Catalog> {
    let mut reference = None;
    let mut lines = Vec::new();
    let mut lists: Vec<PartialList> = Vec::new();
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "unterminated section header"))?
                .trim();
            section = match header {
                "meta" => Section::Meta,
                "lines" => Section::Lines,
                h => match h.strip_prefix("list.") {
                    Some(name) if !name.is_empty() => {
                        lists.push(PartialList {
                            name: name.to_string(),
                            entries: None,
                            dwell_s: DEFAULT_DWELL_S,
                            fm_amplitude_hz: DEFAULT_FM_AMPLITUDE_HZ,
                            fm_rate_hz: DEFAULT_FM_RATE_HZ,
                        });
                        Section::List(lists.len() - 1)
                    }
                    _ => return Err(parse_err(line_no, format!("unknown section [{h}]"))),
                },
            };
            continue;
        }
        match section {
            Section::None => {
                return Err(parse_err(line_no, "content outside of any section"));
            }
            Section::Lines => lines.push(parse_line_row(content, line_no)?),
            Section::Meta | Section::List(_) => {
                let (key, value) = content
                    .split_once('=')
                    .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
                let (key, value) = (key.trim(), value.trim());
                if let Section::List(i) = section {
                    let list = &mut lists[i];
                    match key {
                        "entries_MHz" => {
                            let entries = value
                                .split(',')
                                .filter(|t| !t.trim().is_empty())
                                .map(|t| parse_f64(t, line_no, "entry").map(|v| v * MHZ))
                                .collect::<Result<Vec<_>>>()?;
                            list.entries = Some(entries);
                        }
                        "dwell_s" => list.dwell_s = parse_f64(value, line_no, "dwell")?,
                        "fm_amplitude_kHz" => {
                            list.fm_amplitude_hz = parse_f64(value, line_no, "FM amplitude")? * KHZ;
                        }
                        "fm_rate_Hz" => list.fm_rate_hz = parse_f64(value, line_no, "FM rate")?,
                        other => {
                            return Err(parse_err(line_no, format!("unknown list key '{other}'")))
                        }
                    }
                } else {
                    match key {
                        "reference_frequency_MHz" => {
                            reference = Some(parse_f64(value, line_no, "reference frequency")? * MHZ);
                        }
                        other => {
                            return Err(parse_err(line_no, format!("unknown meta key '{other}'")))
                        }
                    }
                }
            }
        }
    }

    let lists = lists
        .into_iter()
        .map(|p| {
            let entries_hz = p.entries.ok_or_else(|| {
                Error::Validation(format!("list {} has no entries_MHz key", p.name))
            })?;
            Ok(FrequencyList {
                name: p.name,
                entries_hz,
                dwell_s: p.dwell_s,
                fm_amplitude_hz: p.fm_amplitude_hz,
                fm_rate_hz: p.fm_rate_hz,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let catalog = Catalog {
        reference_frequency_hz: reference.unwrap_or(F0_SPINLESS_HZ),
        lines,
        lists,
    };
    catalog.validate()?;
    Ok(catalog)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let text = std::fs::read_to_string(path)?;
    parse_catalog(&text)
}

pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, catalog.to_text())?;
    Ok(())
}

/// The catalog shipped with the crate.
pub fn default_catalog() -> Catalog {
    parse_catalog(BUNDLED_CATALOG).expect("bundled catalog is valid")
}

pub fn bundled_catalog_text() -> &'static str {
    BUNDLED_CATALOG
}

/// The excitation lists A', A, B, C, D, E and the 500 MHz background list.
pub fn builtin_lists() -> Vec<FrequencyList> {
    vec![
        FrequencyList::new(
            "A'",
            &[-33.211, -6.597, -6.578, -6.558, -6.539, -9.069, -2.138],
        ),
        FrequencyList::new("A", &[-33.211, -6.539, -9.069, -2.138]),
        FrequencyList::new("B", &[-34.993, -7.850, -9.773, -2.465]),
        FrequencyList::new("C", &[-31.408, -5.096, -8.355, -1.812]),
        FrequencyList::new("D", &[-34.102, -7.194, -9.421, -2.301]),
        FrequencyList::new("E", &[-32.310, -5.817, -8.712, -1.975]),
        FrequencyList::new(DETUNED_500, &[500.0]),
    ]
}

/// Lower hyperfine state addressed by each entry of a built-in list, with the
/// magnetic field (gauss) assumed when the entry was computed.
///
/// Returns `None` for the background list and for unknown names.
pub fn builtin_entry_targets(name: &str) -> Option<Vec<(HyperfineState, f64)>> {
    let [s100, s011, s111, s122] = GROUND_STATES;
    match canonical_list_name(name) {
        "A'" => Some(vec![
            (s122, 1.0),
            (s111, 0.25),
            (s111, 0.5),
            (s111, 0.75),
            (s111, 1.0),
            (s100, 1.0),
            (s011, 1.0),
        ]),
        "A" | "B" | "C" | "D" | "E" => {
            Some(vec![(s122, 1.0), (s111, 1.0), (s100, 1.0), (s011, 1.0)])
        }
        _ => None,
    }
}

/// Pairs every list entry with each catalog line lying within `tolerance_hz`
/// of it at the given field.
pub fn targeted_lines<'a>(
    catalog: &'a Catalog,
    list: &FrequencyList,
    field: &MagneticField,
    tolerance_hz: f64,
) -> Vec<(f64, &'a HyperfineLine)> {
    let mut pairs = Vec::new();
    for &entry in &list.entries_hz {
        for line in &catalog.lines {
            if (line_position(line, field) - entry).abs() <= tolerance_hz {
                pairs.push((entry, line));
            }
        }
    }
    pairs
}
