//! Domain types for a single caching/execution block.
//!
//! Indices are zero-based everywhere inside the crate: WD `k` is `0..K`,
//! task `l` is `0..L`, slot `n` is `0..N`. Quantities are stored in base
//! units (bits, seconds, Hz, Watts, Joules); unit conversion happens only
//! at the file/CLI boundary.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// System-wide constants of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub num_wds: usize,
    pub num_tasks: usize,
    /// Slots in the task caching phase.
    pub caching_slots: usize,
    /// Slots in the task arrival/execution phase.
    pub slots: usize,
    /// Slot length in seconds.
    pub slot_len: f64,
    /// Weight on MEC server energy.
    pub w_mec: f64,
    /// Weight on WD energy.
    pub w_wd: f64,
    /// AWGN power at the AP receiver (W).
    pub noise_power: f64,
    pub mec_capacitance: f64,
    pub mec_cycles_per_bit: f64,
    pub wd_capacitance: Vec<f64>,
    pub wd_cycles_per_bit: Vec<f64>,
    /// Offload bandwidth per caching-phase slot (Hz).
    pub caching_bandwidth: Vec<f64>,
    /// Offload bandwidth per WD and execution-phase slot (Hz).
    pub bandwidth: Vec<Vec<f64>>,
}

/// The task library and the MEC cache capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLibrary {
    /// Input size of each task in bits.
    pub sizes: Vec<f64>,
    /// Cache capacity in bits.
    pub capacity: f64,
}

impl TaskLibrary {
    pub fn total_bits(&self) -> f64 {
        self.sizes.iter().sum()
    }
}

/// Squared channel magnitudes for both phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// `|h|^2` of the selected offloading WD in each caching-phase slot.
    pub caching_gain: Vec<f64>,
    /// `|h|^2` per WD and execution-phase slot.
    pub gain: Vec<Vec<f64>>,
}

/// Task index arriving at each WD in each execution-phase slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalSequences {
    pub tasks: Vec<Vec<usize>>,
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub library: TaskLibrary,
    pub channels: ChannelSet,
    pub arrivals: ArrivalSequences,
    /// WD that uploads the cacheable tasks during the caching phase.
    pub offload_wd: usize,
}

/// Caching decision of one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheState {
    Uncached,
    Cached,
    Free,
}

/// Caching vector with fixed and free entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CachePlacement {
    pub states: Vec<CacheState>,
}

impl CachePlacement {
    pub fn all_free(num_tasks: usize) -> Self {
        Self { states: vec![CacheState::Free; num_tasks] }
    }

    pub fn none_cached(num_tasks: usize) -> Self {
        Self { states: vec![CacheState::Uncached; num_tasks] }
    }

    pub fn from_cached(cached: &[bool]) -> Self {
        Self {
            states: cached
                .iter()
                .map(|&c| if c { CacheState::Cached } else { CacheState::Uncached })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Tasks fixed to "not cached".
    pub fn uncached(&self) -> Vec<usize> {
        self.indices(CacheState::Uncached)
    }

    /// Tasks fixed to "cached".
    pub fn cached(&self) -> Vec<usize> {
        self.indices(CacheState::Cached)
    }

    pub fn free(&self) -> Vec<usize> {
        self.indices(CacheState::Free)
    }

    pub fn is_integral(&self) -> bool {
        !self.states.contains(&CacheState::Free)
    }

    /// Bits occupied by tasks fixed to "cached".
    pub fn cached_bits(&self, library: &TaskLibrary) -> f64 {
        self.cached().iter().map(|&l| library.sizes[l]).sum()
    }

    /// `Some(alpha)` when no entry is free.
    pub fn as_bools(&self) -> Option<Vec<bool>> {
        self.states
            .iter()
            .map(|s| match s {
                CacheState::Uncached => Some(false),
                CacheState::Cached => Some(true),
                CacheState::Free => None,
            })
            .collect()
    }

    fn indices(&self, which: CacheState) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == which)
            .map(|(l, _)| l)
            .collect()
    }
}

impl fmt::Display for CachePlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.states {
            let c = match s {
                CacheState::Uncached => '0',
                CacheState::Cached => '1',
                CacheState::Free => '*',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// All continuous decision variables, in bits.
///
/// Structurally fixed entries (`caching_offload[N_p-1]`, `caching_mec[0]`,
/// `offload[k][N-1]`, `mec[0]`) are stored as literal zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub caching_offload: Vec<f64>,
    pub caching_mec: Vec<f64>,
    pub local: Vec<Vec<f64>>,
    pub offload: Vec<Vec<f64>>,
    pub mec: Vec<f64>,
}

impl Schedule {
    pub fn zeros(params: &SystemParams) -> Self {
        Self {
            caching_offload: vec![0.0; params.caching_slots],
            caching_mec: vec![0.0; params.caching_slots],
            local: vec![vec![0.0; params.slots]; params.num_wds],
            offload: vec![vec![0.0; params.slots]; params.num_wds],
            mec: vec![0.0; params.slots],
        }
    }
}

/// Energy per term, in Joules.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mec_caching: f64,
    pub offload_caching: f64,
    pub mec_execution: f64,
    pub local: Vec<f64>,
    pub offload: Vec<f64>,
}

impl EnergyBreakdown {
    /// Weighted energy of the caching phase.
    pub fn caching_phase(&self, params: &SystemParams) -> f64 {
        params.w_mec * self.mec_caching + params.w_wd * self.offload_caching
    }

    /// Weighted energy of the arrival/execution phase.
    pub fn execution_phase(&self, params: &SystemParams) -> f64 {
        params.w_mec * self.mec_execution
            + params.w_wd * (self.local_total() + self.offload_total())
    }

    pub fn local_total(&self) -> f64 {
        self.local.iter().sum()
    }

    pub fn offload_total(&self) -> f64 {
        self.offload.iter().sum()
    }

    pub fn weighted(&self, params: &SystemParams) -> f64 {
        params.w_mec * (self.mec_caching + self.mec_execution)
            + params.w_wd * (self.offload_caching + self.local_total() + self.offload_total())
    }
}

/// Which scheme produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    Bnb,
    Popularity,
    Relaxation,
    NoCaching,
    FullOffloading,
    FullLocal,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Bnb,
        SchemeId::Popularity,
        SchemeId::Relaxation,
        SchemeId::NoCaching,
        SchemeId::FullOffloading,
        SchemeId::FullLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Bnb => "bnb",
            SchemeId::Popularity => "popularity",
            SchemeId::Relaxation => "relaxation",
            SchemeId::NoCaching => "no-caching",
            SchemeId::FullOffloading => "full-offloading",
            SchemeId::FullLocal => "full-local",
        }
    }

    /// Whether the scheme can place tasks in the cache at all.
    pub fn caches(self) -> bool {
        self != SchemeId::NoCaching
    }

    /// Whether the scheme runs branch-and-bound over the caching vector.
    pub fn uses_bnb(self) -> bool {
        matches!(self, SchemeId::Bnb | SchemeId::FullOffloading | SchemeId::FullLocal)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown scheme `{s}`")))
    }
}

/// Outcome of running one scheme on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: SchemeId,
    /// Weighted-sum energy in Joules.
    pub objective: f64,
    pub breakdown: EnergyBreakdown,
    pub placement: CachePlacement,
    pub schedule: Schedule,
    pub kkt_residual: f64,
    /// Certified optimality gap in Joules (0 for a single convex solve).
    pub bnb_gap: f64,
    pub node_count: usize,
    pub runtime: f64,
    /// Set when a rounded placement had to be repaired to fit the cache.
    pub repaired: bool,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }

    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }

    fn positive(&mut self, value: f64, path: impl Into<String>) {
        self.check(value > 0.0 && value.is_finite(), path, "must be > 0");
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self.violations))
        }
    }
}

impl fmt::Display for ValidationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("OK");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Checks every structural invariant of a scenario. Violations are data.
pub fn validate_scenario(s: &Scenario) -> ValidationResult {
    let mut v = ValidationResult::default();
    let p = &s.params;

    v.check(p.num_wds >= 1, "params.num_wds", "must be >= 1");
    v.check(p.num_tasks >= 1, "params.num_tasks", "must be >= 1");
    v.check(p.caching_slots >= 1, "params.caching_slots", "must be >= 1");
    v.check(p.slots >= 1, "params.slots", "must be >= 1");
    v.check(p.caching_slots < p.slots, "params.caching_slots", "N_p < N violated");
    v.positive(p.slot_len, "params.slot_len");
    v.check(p.w_mec >= 0.0, "params.w_mec", "must be >= 0");
    v.check(p.w_wd >= 0.0, "params.w_wd", "must be >= 0");
    v.check(
        (p.w_mec + p.w_wd - 1.0).abs() <= WEIGHT_SUM_TOL,
        "params.w_mec+params.w_wd",
        "w0+w1=1 violated",
    );
    v.positive(p.noise_power, "params.noise_power");
    v.positive(p.mec_capacitance, "params.mec_capacitance");
    v.positive(p.mec_cycles_per_bit, "params.mec_cycles_per_bit");

    let per_wd = [("params.wd_capacitance", &p.wd_capacitance), ("params.wd_cycles_per_bit", &p.wd_cycles_per_bit)];
    for (name, values) in per_wd {
        if values.len() != p.num_wds {
            v.push(name, format!("expected {} entries, found {}", p.num_wds, values.len()));
        }
        for (k, &x) in values.iter().enumerate() {
            v.positive(x, format!("{name}[{k}]"));
        }
    }
    if p.caching_bandwidth.len() != p.caching_slots {
        v.push(
            "params.caching_bandwidth",
            format!("expected {} entries, found {}", p.caching_slots, p.caching_bandwidth.len()),
        );
    }
    for (i, &b) in p.caching_bandwidth.iter().enumerate() {
        v.positive(b, format!("params.caching_bandwidth[{i}]"));
    }
    check_matrix(&mut v, "params.bandwidth", &p.bandwidth, p.num_wds, p.slots);

    if s.library.sizes.len() != p.num_tasks {
        v.push(
            "library.sizes",
            format!("expected {} entries, found {}", p.num_tasks, s.library.sizes.len()),
        );
    }
    for (l, &d) in s.library.sizes.iter().enumerate() {
        v.positive(d, format!("library.sizes[{l}]"));
    }
    v.check(
        s.library.capacity >= 0.0 && s.library.capacity.is_finite(),
        "library.capacity",
        "must be >= 0",
    );

    if s.channels.caching_gain.len() != p.caching_slots {
        v.push(
            "channels.caching_gain",
            format!("expected {} entries, found {}", p.caching_slots, s.channels.caching_gain.len()),
        );
    }
    for (i, &h) in s.channels.caching_gain.iter().enumerate() {
        v.positive(h, format!("channels.caching_gain[{i}]"));
    }
    check_matrix(&mut v, "channels.gain", &s.channels.gain, p.num_wds, p.slots);

    if s.arrivals.tasks.len() != p.num_wds {
        v.push(
            "arrivals.tasks",
            format!("expected {} rows, found {}", p.num_wds, s.arrivals.tasks.len()),
        );
    }
    for (k, row) in s.arrivals.tasks.iter().enumerate() {
        if row.len() != p.slots {
            v.push(format!("arrivals.tasks[{k}]"), format!("expected {} entries, found {}", p.slots, row.len()));
        }
        for (n, &t) in row.iter().enumerate() {
            v.check(t < p.num_tasks, format!("arrivals.tasks[{k}][{n}]"), "task index out of range");
        }
    }
    v.check(s.offload_wd < p.num_wds, "offload_wd", "WD index out of range");
    v
}

fn check_matrix(v: &mut ValidationResult, name: &str, m: &[Vec<f64>], rows: usize, cols: usize) {
    if m.len() != rows {
        v.push(name, format!("expected {rows} rows, found {}", m.len()));
    }
    for (k, row) in m.iter().enumerate() {
        if row.len() != cols {
            v.push(format!("{name}[{k}]"), format!("expected {cols} entries, found {}", row.len()));
        }
        for (n, &x) in row.iter().enumerate() {
            v.positive(x, format!("{name}[{k}][{n}]"));
        }
    }
}

/// Picks the WD with the smallest pathloss, i.e. the smallest distance.
/// Ties go to the lowest index.
pub fn select_offload_wd(distances: &[f64]) -> Result<usize> {
    if distances.is_empty() {
        return Err(Error::Domain("distance list is empty".into()));
    }
    if let Some(k) = distances.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Domain(format!("distance[{k}] must be > 0")));
    }
    let mut best = 0;
    for (k, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Distinct tasks among the first `prefix` arrivals (`1 <= prefix <= N`).
pub fn build_cts(seq: &[usize], prefix: usize) -> Result<BTreeSet<usize>> {
    if prefix == 0 || prefix > seq.len() {
        return Err(Error::Domain(format!(
            "slot {prefix} out of range 1..={}",
            seq.len()
        )));
    }
    Ok(seq[..prefix].iter().copied().collect())
}

/// First arrival slot of every task at every WD (`None` if it never arrives).
pub fn first_arrivals(arrivals: &ArrivalSequences, num_tasks: usize) -> Vec<Vec<Option<usize>>> {
    arrivals
        .tasks
        .iter()
        .map(|seq| {
            let mut first = vec![None; num_tasks];
            for (n, &t) in seq.iter().enumerate() {
                if first[t].is_none() {
                    first[t] = Some(n);
                }
            }
            first
        })
        .collect()
}

/// Uncached bits that have arrived at WD `k` within the first `prefix` slots.
pub fn arrived_bits(s: &Scenario, k: usize, prefix: usize, placement: &CachePlacement) -> Result<f64> {
    let alpha = placement
        .as_bools()
        .ok_or_else(|| Error::Domain("placement has free entries".into()))?;
    if alpha.len() != s.library.sizes.len() {
        return Err(Error::Domain("placement length differs from library size".into()));
    }
    let seq = s
        .arrivals
        .tasks
        .get(k)
        .ok_or_else(|| Error::Domain(format!("WD {k} out of range")))?;
    let cts = build_cts(seq, prefix)?;
    Ok(cts
        .into_iter()
        .filter(|&l| !alpha[l])
        .map(|l| s.library.sizes[l])
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, GenConfig};

    fn two_task_scenario(seq: Vec<usize>) -> Scenario {
        let mut cfg = GenConfig::default();
        cfg.num_wds = 1;
        cfg.num_tasks = 2;
        cfg.caching_slots = 1;
        cfg.slots = seq.len();
        let mut s = generate(&cfg).unwrap();
        s.library.sizes = vec![1000.0, 2000.0];
        s.arrivals.tasks = vec![seq];
        s
    }

    #[test]
    fn default_scenario_is_valid() {
        let s = generate(&GenConfig::default()).unwrap();
        assert_eq!(s.params.num_wds, 20);
        assert_eq!(s.params.caching_slots, 5);
        assert_eq!(s.params.slots, 30);
        let v = validate_scenario(&s);
        assert!(v.is_ok(), "{v}");
    }

    #[test]
    fn caching_slots_must_be_fewer() {
        let mut s = generate(&GenConfig::default()).unwrap();
        s.params.caching_slots = 30;
        s.params.caching_bandwidth = vec![2e6; 30];
        s.channels.caching_gain = vec![1e-11; 30];
        let v = validate_scenario(&s);
        assert_eq!(v.violations.len(), 1, "{v}");
        assert!(v.violations[0].message.contains("N_p < N"));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut s = generate(&GenConfig::default()).unwrap();
        s.params.w_mec = 0.5;
        s.params.w_wd = 0.9;
        let v = validate_scenario(&s);
        assert!(v.violations.iter().any(|x| x.message.contains("w0+w1=1")), "{v}");
    }

    #[test]
    fn bad_indices_are_reported_with_paths() {
        let mut s = generate(&GenConfig::default()).unwrap();
        s.arrivals.tasks[3][7] = 999;
        s.library.sizes[2] = -1.0;
        s.offload_wd = 20;
        let v = validate_scenario(&s);
        let paths: Vec<_> = v.violations.iter().map(|x| x.path.as_str()).collect();
        assert!(paths.contains(&"arrivals.tasks[3][7]"));
        assert!(paths.contains(&"library.sizes[2]"));
        assert!(paths.contains(&"offload_wd"));
    }

    #[test]
    fn offload_wd_is_nearest() {
        let k = 20;
        let d: Vec<f64> = (0..k).map(|i| 500.0 + 500.0 * i as f64 / (k - 1) as f64).collect();
        assert_eq!(select_offload_wd(&d).unwrap(), 0);
        assert_eq!(select_offload_wd(&[700.0]).unwrap(), 0);
        assert_eq!(select_offload_wd(&[800.0, 200.0, 500.0]).unwrap(), 1);
        assert_eq!(select_offload_wd(&[300.0, 200.0, 200.0]).unwrap(), 1);
        assert!(select_offload_wd(&[]).is_err());
        assert!(select_offload_wd(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn cts_examples() {
        let seq = [0, 2, 0];
        assert_eq!(build_cts(&seq, 3).unwrap(), BTreeSet::from([0, 2]));
        assert_eq!(build_cts(&seq, 1).unwrap(), BTreeSet::from([0]));
        assert!(build_cts(&seq, 0).is_err());
        assert!(build_cts(&seq, 4).is_err());

        let seq = [1, 1, 3];
        for i in 1..=3 {
            for j in i..=3 {
                assert!(build_cts(&seq, i).unwrap().is_subset(&build_cts(&seq, j).unwrap()));
            }
        }
    }

    #[test]
    fn arrived_bits_examples() {
        let s = two_task_scenario(vec![0, 1, 0]);
        let none = CachePlacement::none_cached(2);
        assert_eq!(arrived_bits(&s, 0, 3, &none).unwrap(), 3000.0);
        assert_eq!(arrived_bits(&s, 0, 1, &none).unwrap(), 1000.0);
        let first = CachePlacement::from_cached(&[true, false]);
        assert_eq!(arrived_bits(&s, 0, 3, &first).unwrap(), 2000.0);
        let all = CachePlacement::from_cached(&[true, true]);
        for n in 1..=3 {
            assert_eq!(arrived_bits(&s, 0, n, &all).unwrap(), 0.0);
        }
        assert!(arrived_bits(&s, 0, 3, &CachePlacement::all_free(2)).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.name().parse::<SchemeId>().unwrap(), id);
        }
        assert_eq!("Full_Local".parse::<SchemeId>().unwrap(), SchemeId::FullLocal);
        assert!("greedy".parse::<SchemeId>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cts_is_monotone_and_bounded(seq in prop::collection::vec(0usize..6, 1..20)) {
                let mut prev = BTreeSet::new();
                for n in 1..=seq.len() {
                    let cts = build_cts(&seq, n).unwrap();
                    prop_assert!(prev.is_subset(&cts));
                    prop_assert!(cts.len() <= n.min(6));
                    prev = cts;
                }
            }

            #[test]
            fn arrived_bits_monotone(
                seq in prop::collection::vec(0usize..2, 2..12),
                flip in 0usize..2,
            ) {
                let s = two_task_scenario(seq.clone());
                let none = CachePlacement::none_cached(2);
                let mut cached = vec![false; 2];
                cached[flip] = true;
                let some = CachePlacement::from_cached(&cached);
                let mut prev = 0.0;
                for n in 1..=seq.len() {
                    let a = arrived_bits(&s, 0, n, &none).unwrap();
                    prop_assert!(a >= prev);
                    prop_assert!(arrived_bits(&s, 0, n, &some).unwrap() <= a);
                    prev = a;
                }
            }

            #[test]
            fn offload_wd_scale_invariant(
                d in prop::collection::vec(1.0f64..1000.0, 1..10),
                scale in 1e-3f64..1e3,
            ) {
                let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
                prop_assert_eq!(select_offload_wd(&d).unwrap(), select_offload_wd(&scaled).unwrap());
            }
        }
    }
}
