//! Seeded scenario generation and the `scenario/v1` JSON format.
//!
//! Every random draw comes from its own ChaCha8 substream keyed by
//! `(seed, purpose, i, j)`, so a cell's value never depends on iteration
//! order, on the other dimensions of the scenario, or on thread count.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    select_offload_wd, validate_scenario, ArrivalSequences, ChannelSet, Scenario, SystemParams, TaskLibrary,
};

pub const SCHEMA_VERSION: &str = "scenario/v1";

const KBIT: f64 = 1e3;
const MHZ: f64 = 1e6;

/// Generator configuration. All fields are in base units.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub num_wds: usize,
    pub num_tasks: usize,
    pub caching_slots: usize,
    pub slots: usize,
    pub slot_len: f64,
    pub w_mec: f64,
    pub w_wd: f64,
    pub noise_power: f64,
    pub mec_capacitance: f64,
    pub mec_cycles_per_bit: f64,
    pub wd_capacitance: f64,
    pub wd_cycles_per_bit: f64,
    /// Caching-phase offload bandwidth (Hz); not given in the reference setup,
    /// so it defaults to the execution-phase value.
    pub caching_bandwidth: f64,
    pub bandwidth: f64,
    pub rician_factor: f64,
    /// Linear pathloss at 1 m.
    pub omega0: f64,
    pub pathloss_exp: f64,
    pub zipf_shape: f64,
    /// Task size range in bits.
    pub size_range: (f64, f64),
    /// Cache capacity in bits.
    pub capacity: f64,
    /// WD-to-AP distances in meters; `None` spreads them over 500..1000 m.
    pub distances: Option<Vec<f64>>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_wds: 20,
            num_tasks: 40,
            caching_slots: 5,
            slots: 30,
            slot_len: 0.1,
            w_mec: 0.1,
            w_wd: 0.9,
            noise_power: 1e-8,
            mec_capacitance: 1e-29,
            mec_cycles_per_bit: 1e3,
            wd_capacitance: 1e-28,
            wd_cycles_per_bit: 3e3,
            caching_bandwidth: 2e6,
            bandwidth: 2e6,
            rician_factor: 3.0,
            omega0: 10f64.powf(-3.2),
            pathloss_exp: 3.0,
            zipf_shape: 0.5,
            size_range: (1e3, 5e3),
            capacity: 20e3,
            distances: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.rician_factor >= 0.0) {
            bad.push("rician_factor must be >= 0");
        }
        if !(self.omega0 > 0.0) {
            bad.push("omega0 must be > 0");
        }
        if !(self.size_range.0 > 0.0 && self.size_range.0 <= self.size_range.1) {
            bad.push("size range must satisfy 0 < min <= max");
        }
        if !(self.zipf_shape >= 0.0) {
            bad.push("zipf_shape must be >= 0");
        }
        if !(self.capacity >= 0.0) {
            bad.push("capacity must be >= 0");
        }
        if let Some(d) = &self.distances {
            if d.len() != self.num_wds {
                bad.push("distances must have one entry per WD");
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(bad.join("; ")))
        }
    }

    /// WD distances, either explicit or `500 + 500 (k-1)/(K-1)` meters.
    pub fn wd_distances(&self) -> Vec<f64> {
        if let Some(d) = &self.distances {
            return d.clone();
        }
        let k = self.num_wds;
        if k == 1 {
            return vec![500.0];
        }
        (0..k).map(|i| 500.0 + 500.0 * i as f64 / (k - 1) as f64).collect()
    }

    pub fn system_params(&self) -> SystemParams {
        SystemParams {
            num_wds: self.num_wds,
            num_tasks: self.num_tasks,
            caching_slots: self.caching_slots,
            slots: self.slots,
            slot_len: self.slot_len,
            w_mec: self.w_mec,
            w_wd: self.w_wd,
            noise_power: self.noise_power,
            mec_capacitance: self.mec_capacitance,
            mec_cycles_per_bit: self.mec_cycles_per_bit,
            wd_capacitance: vec![self.wd_capacitance; self.num_wds],
            wd_cycles_per_bit: vec![self.wd_cycles_per_bit; self.num_wds],
            caching_bandwidth: vec![self.caching_bandwidth; self.caching_slots],
            bandwidth: vec![vec![self.bandwidth; self.slots]; self.num_wds],
        }
    }
}

/// What a random substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    CachingChannel = 1,
    Channel = 2,
    Arrival = 3,
    TaskSize = 4,
    TieBreak = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(purpose, i, j)` cell of a seeded run.
pub fn substream(seed: u64, purpose: Purpose, i: u64, j: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for (chunk, word) in key.chunks_exact_mut(8).zip([purpose as u64, i, j, 0x6d65_6361_6368_6521]) {
        h = splitmix64(h ^ word);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Rician fading with a unit line-of-sight component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rician {
    los: f64,
    scatter: f64,
}

impl Rician {
    /// Average power `omega0 * d^-alpha`, split by the Rician factor.
    pub fn new(rician_factor: f64, omega0: f64, pathloss_exp: f64, distance: f64) -> Self {
        let mean_power = omega0 * distance.powf(-pathloss_exp);
        Self {
            los: (rician_factor * mean_power / (1.0 + rician_factor)).sqrt(),
            scatter: (mean_power / (1.0 + rician_factor)).sqrt(),
        }
    }

    /// Complex coefficient `(re, im)`; the scattered part is `CN(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        (self.los + self.scatter * s * re, self.scatter * s * im)
    }

    pub fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (re, im) = self.sample(rng);
        re * re + im * im
    }
}

/// Draws `|h|^2` for the caching-phase uploader and for every WD and slot.
pub fn gen_channels(cfg: &GenConfig, distances: &[f64], offload_wd: usize) -> Result<ChannelSet> {
    if let Some(k) = distances.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Domain(format!("distance[{k}] must be > 0")));
    }
    let d_ko = *distances
        .get(offload_wd)
        .ok_or_else(|| Error::Domain("offloading WD index out of range".into()))?;
    let uploader = Rician::new(cfg.rician_factor, cfg.omega0, cfg.pathloss_exp, d_ko);
    let caching_gain = (0..cfg.caching_slots)
        .map(|i| uploader.sample_gain(&mut substream(cfg.seed, Purpose::CachingChannel, 0, i as u64)))
        .collect();
    let gain = distances
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let ch = Rician::new(cfg.rician_factor, cfg.omega0, cfg.pathloss_exp, d);
            (0..cfg.slots)
                .map(|n| ch.sample_gain(&mut substream(cfg.seed, Purpose::Channel, k as u64, n as u64)))
                .collect()
        })
        .collect();
    Ok(ChannelSet { caching_gain, gain })
}

/// Zipf law over ranks `1..=L`; task `l` (zero-based) has rank `l + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    pub fn new(num_tasks: usize, shape: f64) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::Domain("Zipf needs at least one task".into()));
        }
        let weights: Vec<f64> = (1..=num_tasks).map(|r| (r as f64).powf(-shape)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { cdf })
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

pub fn gen_arrivals(cfg: &GenConfig) -> Result<ArrivalSequences> {
    let zipf = Zipf::new(cfg.num_tasks, cfg.zipf_shape)?;
    let tasks = (0..cfg.num_wds)
        .map(|k| {
            (0..cfg.slots)
                .map(|n| zipf.sample(&mut substream(cfg.seed, Purpose::Arrival, k as u64, n as u64)))
                .collect()
        })
        .collect();
    Ok(ArrivalSequences { tasks })
}

pub fn gen_library(cfg: &GenConfig) -> Result<TaskLibrary> {
    let (lo, hi) = cfg.size_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Domain("size range must satisfy 0 < min <= max".into()));
    }
    let sizes = (0..cfg.num_tasks)
        .map(|l| {
            if lo == hi {
                lo
            } else {
                substream(cfg.seed, Purpose::TaskSize, l as u64, 0).random_range(lo..hi)
            }
        })
        .collect();
    Ok(TaskLibrary { sizes, capacity: cfg.capacity })
}

/// Builds and validates a full scenario from a configuration.
pub fn generate(cfg: &GenConfig) -> Result<Scenario> {
    cfg.validate()?;
    let distances = cfg.wd_distances();
    let offload_wd = select_offload_wd(&distances)?;
    let s = Scenario {
        params: cfg.system_params(),
        library: gen_library(cfg)?,
        channels: gen_channels(cfg, &distances, offload_wd)?,
        arrivals: gen_arrivals(cfg)?,
        offload_wd,
    };
    validate_scenario(&s).into_result()?;
    Ok(s)
}

/// Units used by a scenario document. Only the bit and bandwidth units
/// admit alternatives; everything else is fixed to SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub bits: String,
    pub time: String,
    pub bandwidth: String,
    pub power: String,
}

impl Default for Units {
    fn default() -> Self {
        Self { bits: "bit".into(), time: "s".into(), bandwidth: "Hz".into(), power: "W".into() }
    }
}

impl Units {
    fn factors(&self) -> Result<(f64, f64)> {
        let bits = match self.bits.as_str() {
            "bit" => 1.0,
            "Kbit" => KBIT,
            other => return Err(Error::Parse(format!("unsupported bit unit `{other}`"))),
        };
        let bw = match self.bandwidth.as_str() {
            "Hz" => 1.0,
            "MHz" => MHZ,
            other => return Err(Error::Parse(format!("unsupported bandwidth unit `{other}`"))),
        };
        if self.time != "s" || self.power != "W" {
            return Err(Error::Parse("time must be `s` and power `W`".into()));
        }
        Ok((bits, bw))
    }
}

/// On-disk form of a scenario. Indices are one-based, matching the
/// task/WD numbering `T_1..T_L`, `WD-1..WD-K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema: String,
    pub units: Units,
    pub params: ParamsDoc,
    pub library: LibraryDoc,
    pub channels: ChannelSet,
    /// One-based task index per WD and slot.
    pub arrivals: Vec<Vec<usize>>,
    /// One-based index of the caching-phase uploader.
    pub offload_wd: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub num_wds: usize,
    pub num_tasks: usize,
    pub caching_slots: usize,
    pub slots: usize,
    pub slot_len: f64,
    pub w_mec: f64,
    pub w_wd: f64,
    pub noise_power: f64,
    pub mec_capacitance: f64,
    pub mec_cycles_per_bit: f64,
    pub wd_capacitance: Vec<f64>,
    pub wd_cycles_per_bit: Vec<f64>,
    pub caching_bandwidth: Vec<f64>,
    pub bandwidth: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryDoc {
    pub sizes: Vec<f64>,
    pub capacity: f64,
}

impl ScenarioDoc {
    pub fn from_scenario(s: &Scenario) -> Self {
        let p = &s.params;
        Self {
            schema: SCHEMA_VERSION.into(),
            units: Units::default(),
            params: ParamsDoc {
                num_wds: p.num_wds,
                num_tasks: p.num_tasks,
                caching_slots: p.caching_slots,
                slots: p.slots,
                slot_len: p.slot_len,
                w_mec: p.w_mec,
                w_wd: p.w_wd,
                noise_power: p.noise_power,
                mec_capacitance: p.mec_capacitance,
                mec_cycles_per_bit: p.mec_cycles_per_bit,
                wd_capacitance: p.wd_capacitance.clone(),
                wd_cycles_per_bit: p.wd_cycles_per_bit.clone(),
                caching_bandwidth: p.caching_bandwidth.clone(),
                bandwidth: p.bandwidth.clone(),
            },
            library: LibraryDoc { sizes: s.library.sizes.clone(), capacity: s.library.capacity },
            channels: s.channels.clone(),
            arrivals: s.arrivals.tasks.iter().map(|r| r.iter().map(|t| t + 1).collect()).collect(),
            offload_wd: s.offload_wd + 1,
        }
    }

    /// Converts to base units and validates.
    pub fn into_scenario(self) -> Result<Scenario> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: self.schema, expected: SCHEMA_VERSION });
        }
        let (bit, hz) = self.units.factors()?;
        let p = self.params;
        let scale = |v: Vec<f64>, f: f64| -> Vec<f64> {
            if f == 1.0 {
                v
            } else {
                v.into_iter().map(|x| x * f).collect()
            }
        };
        let one_based = |x: usize, what: &str| -> Result<usize> {
            x.checked_sub(1).ok_or_else(|| Error::Parse(format!("{what} indices are one-based")))
        };
        let arrivals = self
            .arrivals
            .into_iter()
            .map(|row| row.into_iter().map(|t| one_based(t, "task")).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let s = Scenario {
            params: SystemParams {
                num_wds: p.num_wds,
                num_tasks: p.num_tasks,
                caching_slots: p.caching_slots,
                slots: p.slots,
                slot_len: p.slot_len,
                w_mec: p.w_mec,
                w_wd: p.w_wd,
                noise_power: p.noise_power,
                mec_capacitance: p.mec_capacitance,
                mec_cycles_per_bit: p.mec_cycles_per_bit,
                wd_capacitance: p.wd_capacitance,
                wd_cycles_per_bit: p.wd_cycles_per_bit,
                caching_bandwidth: scale(p.caching_bandwidth, hz),
                bandwidth: p.bandwidth.into_iter().map(|r| scale(r, hz)).collect(),
            },
            library: TaskLibrary {
                sizes: scale(self.library.sizes, bit),
                capacity: self.library.capacity * bit,
            },
            channels: self.channels,
            arrivals: ArrivalSequences { tasks: arrivals },
            offload_wd: one_based(self.offload_wd, "WD")?,
        };
        validate_scenario(&s).into_result()?;
        Ok(s)
    }
}

pub fn scenario_to_json(s: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioDoc::from_scenario(s))?)
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    // Check the version before the shape so a future schema gets a clear error.
    match value.get("schema").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(Error::SchemaVersion { found: other.to_string(), expected: SCHEMA_VERSION })
        }
        None => return Err(Error::Parse("missing `schema` field".into())),
    }
    let doc: ScenarioDoc = serde_json::from_value(value)?;
    doc.into_scenario()
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<()> {
    fs::write(path, scenario_to_json(s)?)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_json(&fs::read_to_string(path)?)
}

/// Generator configuration as read from JSON or the command line, with
/// sizes in Kbits and bandwidths in MHz. Missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfigDoc {
    pub seed: u64,
    pub num_wds: usize,
    pub num_tasks: usize,
    pub caching_slots: usize,
    pub slots: usize,
    pub slot_len: f64,
    pub w_mec: f64,
    pub w_wd: f64,
    pub noise_power: f64,
    pub mec_capacitance: f64,
    pub mec_cycles_per_bit: f64,
    pub wd_capacitance: f64,
    pub wd_cycles_per_bit: f64,
    pub caching_bandwidth_mhz: f64,
    pub bandwidth_mhz: f64,
    pub rician_factor: f64,
    pub omega0: f64,
    pub pathloss_exp: f64,
    pub zipf_shape: f64,
    pub size_min_kbits: f64,
    pub size_max_kbits: f64,
    pub capacity_kbits: f64,
    pub distances: Option<Vec<f64>>,
}

impl Default for GenConfigDoc {
    fn default() -> Self {
        Self::from(&GenConfig::default())
    }
}

impl From<&GenConfig> for GenConfigDoc {
    fn from(c: &GenConfig) -> Self {
        Self {
            seed: c.seed,
            num_wds: c.num_wds,
            num_tasks: c.num_tasks,
            caching_slots: c.caching_slots,
            slots: c.slots,
            slot_len: c.slot_len,
            w_mec: c.w_mec,
            w_wd: c.w_wd,
            noise_power: c.noise_power,
            mec_capacitance: c.mec_capacitance,
            mec_cycles_per_bit: c.mec_cycles_per_bit,
            wd_capacitance: c.wd_capacitance,
            wd_cycles_per_bit: c.wd_cycles_per_bit,
            caching_bandwidth_mhz: c.caching_bandwidth / MHZ,
            bandwidth_mhz: c.bandwidth / MHZ,
            rician_factor: c.rician_factor,
            omega0: c.omega0,
            pathloss_exp: c.pathloss_exp,
            zipf_shape: c.zipf_shape,
            size_min_kbits: c.size_range.0 / KBIT,
            size_max_kbits: c.size_range.1 / KBIT,
            capacity_kbits: c.capacity / KBIT,
            distances: c.distances.clone(),
        }
    }
}

impl From<GenConfigDoc> for GenConfig {
    fn from(d: GenConfigDoc) -> Self {
        Self {
            seed: d.seed,
            num_wds: d.num_wds,
            num_tasks: d.num_tasks,
            caching_slots: d.caching_slots,
            slots: d.slots,
            slot_len: d.slot_len,
            w_mec: d.w_mec,
            w_wd: d.w_wd,
            noise_power: d.noise_power,
            mec_capacitance: d.mec_capacitance,
            mec_cycles_per_bit: d.mec_cycles_per_bit,
            wd_capacitance: d.wd_capacitance,
            wd_cycles_per_bit: d.wd_cycles_per_bit,
            caching_bandwidth: d.caching_bandwidth_mhz * MHZ,
            bandwidth: d.bandwidth_mhz * MHZ,
            rician_factor: d.rician_factor,
            omega0: d.omega0,
            pathloss_exp: d.pathloss_exp,
            zipf_shape: d.zipf_shape,
            size_range: (d.size_min_kbits * KBIT, d.size_max_kbits * KBIT),
            capacity: d.capacity_kbits * KBIT,
            distances: d.distances,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small() -> GenConfig {
        GenConfig { seed: 7, num_wds: 3, num_tasks: 5, caching_slots: 2, slots: 6, ..GenConfig::default() }
    }

    #[test]
    fn channels_are_deterministic() {
        let cfg = small();
        let d = cfg.wd_distances();
        assert_eq!(gen_channels(&cfg, &d, 0).unwrap(), gen_channels(&cfg, &d, 0).unwrap());
        let other = GenConfig { seed: 8, ..cfg.clone() };
        assert_ne!(gen_channels(&cfg, &d, 0).unwrap(), gen_channels(&other, &d, 0).unwrap());
        assert!(gen_channels(&cfg, &[500.0, 0.0, 600.0], 0).is_err());
    }

    #[test]
    fn default_distances_span_500_to_1000() {
        let d = GenConfig::default().wd_distances();
        assert_eq!(d.len(), 20);
        assert_eq!(d[0], 500.0);
        assert_eq!(d[19], 1000.0);
    }

    #[test]
    fn pure_scattering_has_zero_mean() {
        let ch = Rician::new(0.0, 1.0, 3.0, 1.0);
        let n = 100_000;
        let (mut sr, mut si) = (0.0, 0.0);
        for i in 0..n {
            let (re, im) = ch.sample(&mut substream(3, Purpose::Channel, 0, i));
            sr += re;
            si += im;
        }
        // each component has variance 1/2
        let se = (0.5 / n as f64).sqrt();
        assert!((sr / n as f64).abs() < 3.0 * se);
        assert!((si / n as f64).abs() < 3.0 * se);
    }

    #[test]
    fn zipf_two_tasks() {
        let p = Zipf::new(2, 0.5).unwrap().probabilities();
        assert_relative_eq!(p[0], 1.0 / (1.0 + 2f64.powf(-0.5)), max_relative = 1e-12);
        assert_relative_eq!(p[0], 0.5858, epsilon = 1e-4);
        assert_relative_eq!(p[1], 0.4142, epsilon = 1e-4);
        for l in [1, 3, 17, 100] {
            let s: f64 = Zipf::new(l, 0.5).unwrap().probabilities().iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        }
        assert!(Zipf::new(0, 0.5).is_err());
    }

    #[test]
    fn uniform_library_mean() {
        let cfg = GenConfig { num_tasks: 100_000, ..small() };
        let lib = gen_library(&cfg).unwrap();
        let mean = lib.total_bits() / lib.sizes.len() as f64;
        assert!((mean - 3000.0).abs() < 30.0, "mean {mean}");
        assert!(lib.sizes.iter().all(|&d| (1000.0..5000.0).contains(&d)));
    }

    #[test]
    fn degenerate_size_range() {
        let cfg = GenConfig { size_range: (2000.0, 2000.0), ..small() };
        assert!(gen_library(&cfg).unwrap().sizes.iter().all(|&d| d == 2000.0));
        assert_eq!(gen_library(&cfg).unwrap(), gen_library(&cfg).unwrap());
    }

    #[test]
    fn growing_horizon_keeps_earlier_draws() {
        let a = small();
        let b = GenConfig { slots: 11, ..a.clone() };
        let sa = generate(&a).unwrap();
        let sb = generate(&b).unwrap();
        for k in 0..a.num_wds {
            assert_eq!(sa.arrivals.tasks[k][..], sb.arrivals.tasks[k][..a.slots]);
            assert_eq!(sa.channels.gain[k][..], sb.channels.gain[k][..a.slots]);
        }
    }

    #[test]
    fn generated_values_respect_invariants() {
        for seed in 0..10_000u64 {
            let cfg = GenConfig { seed, num_wds: 2, num_tasks: 3, caching_slots: 1, slots: 2, ..GenConfig::default() };
            let s = generate(&cfg).unwrap();
            assert!(validate_scenario(&s).is_ok());
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = generate(&GenConfig::default()).unwrap();
        let text = scenario_to_json(&s).unwrap();
        assert_eq!(scenario_from_json(&text).unwrap(), s);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_scenario(&s, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), s);
    }

    #[test]
    fn load_rejects_invalid_and_unknown_version() {
        let s = generate(&small()).unwrap();
        let mut doc = ScenarioDoc::from_scenario(&s);
        doc.params.caching_slots = doc.params.slots;
        let err = doc.into_scenario().unwrap_err();
        assert!(err.to_string().contains("N_p < N"), "{err}");

        let mut value = serde_json::to_value(ScenarioDoc::from_scenario(&s)).unwrap();
        value["schema"] = "scenario/v2".into();
        let err = scenario_from_json(&value.to_string()).unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { .. }), "{err}");
    }

    #[test]
    fn kbit_and_mhz_units_convert_at_load() {
        let s = generate(&small()).unwrap();
        let mut doc = ScenarioDoc::from_scenario(&s);
        doc.units.bits = "Kbit".into();
        doc.units.bandwidth = "MHz".into();
        doc.library.sizes.iter_mut().for_each(|d| *d /= 1e3);
        doc.library.capacity /= 1e3;
        doc.params.bandwidth.iter_mut().flatten().for_each(|b| *b /= 1e6);
        doc.params.caching_bandwidth.iter_mut().for_each(|b| *b /= 1e6);
        let back = doc.into_scenario().unwrap();
        for (a, b) in back.library.sizes.iter().zip(&s.library.sizes) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert_relative_eq!(back.params.bandwidth[0][0], 2e6, max_relative = 1e-12);
    }

    #[test]
    fn config_doc_converts_units() {
        let doc: GenConfigDoc = serde_json::from_str(r#"{"capacity_kbits": 12, "bandwidth_mhz": 1.5}"#).unwrap();
        let cfg = GenConfig::from(doc);
        assert_eq!(cfg.capacity, 12_000.0);
        assert_eq!(cfg.bandwidth, 1.5e6);
        assert_eq!(cfg.num_wds, 20);
    }
}
