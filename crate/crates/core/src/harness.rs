//! Multi-seed parameter sweeps with CSV output, and single-run summaries.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Scenario, SchemeId, SolveReport};
use crate::scenario::{generate, GenConfig};
use crate::schemes::{run_scheme, SchemeConfig};

/// Largest library size for which branch-and-bound schemes run by default.
pub const DEFAULT_BNB_CAP: usize = 16;

/// Seeds used when a sweep does not list its own.
pub const DEFAULT_SEED_COUNT: u64 = 20;

/// CSV header, in column order.
pub const COLUMNS: [&str; 14] = [
    "scheme",
    "sweep_value",
    "seed",
    "objective_J",
    "e_mec_p1",
    "e_off_p1",
    "e_mec_p2",
    "e_loc_total",
    "e_off_total",
    "kkt_residual",
    "bnb_gap",
    "node_count",
    "runtime_s",
    "error",
];

/// The generator field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    /// Cache capacity, with values in Kbits.
    Dmax,
    /// Receiver noise power, with values in Watts.
    Sigma2,
    /// Library size, with integer values.
    L,
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dmax" | "capacity" => Ok(SweepVar::Dmax),
            "sigma2" | "noise" | "noise_power" => Ok(SweepVar::Sigma2),
            "l" | "tasks" | "num_tasks" => Ok(SweepVar::L),
            other => Err(Error::Parse(format!("unknown sweep variable `{other}` (dmax, sigma2, l)"))),
        }
    }
}

impl SweepVar {
    /// Copy of `base` with this variable set to `value`.
    pub fn apply(self, base: &GenConfig, value: f64) -> Result<GenConfig> {
        let mut cfg = base.clone();
        match self {
            SweepVar::Dmax => cfg.capacity = value * 1e3,
            SweepVar::Sigma2 => cfg.noise_power = value,
            SweepVar::L => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Domain(format!("library size must be a positive integer, got {value}")));
                }
                cfg.num_tasks = value as usize;
            }
        }
        Ok(cfg)
    }
}

/// A full sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: GenConfig,
    pub var: SweepVar,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<SchemeId>,
    pub scheme_cfg: SchemeConfig,
    /// Branch-and-bound schemes are refused above this many tasks.
    pub bnb_cap: usize,
    /// Fill the `runtime_s` column. Off by default so output is reproducible.
    pub record_runtime: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn new(base: GenConfig, var: SweepVar, values: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            base,
            var,
            values,
            seeds,
            schemes: SchemeId::ALL.to_vec(),
            scheme_cfg: SchemeConfig::default(),
            bnb_cap: DEFAULT_BNB_CAP,
            record_runtime: false,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Domain("a sweep needs at least one seed".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Domain("a sweep needs at least one scheme".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("sweep value {v} is not a finite non-negative number")));
        }
        if self.var != SweepVar::Dmax {
            if let Some(v) = self.values.iter().find(|v| **v <= 0.0) {
                return Err(Error::Domain(format!("sweep value {v} must be positive")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Domain("thread count must be positive".into()));
        }
        self.scheme_cfg.bnb.validate()
    }
}

/// One CSV line. `seed` is `"mean"` on averaged rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: String,
    pub sweep_value: f64,
    pub seed: String,
    #[serde(rename = "objective_J")]
    pub objective_j: f64,
    pub e_mec_p1: Option<f64>,
    pub e_off_p1: Option<f64>,
    pub e_mec_p2: Option<f64>,
    pub e_loc_total: Option<f64>,
    pub e_off_total: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub bnb_gap: Option<f64>,
    pub node_count: Option<f64>,
    pub runtime_s: Option<f64>,
    pub error: String,
}

impl SweepRow {
    fn from_outcome(id: SchemeId, value: f64, seed: u64, outcome: &Result<SolveReport>, timed: bool) -> Self {
        match outcome {
            Ok(r) => Self {
                scheme: id.name().into(),
                sweep_value: value,
                seed: seed.to_string(),
                objective_j: r.objective,
                e_mec_p1: Some(r.breakdown.mec_caching),
                e_off_p1: Some(r.breakdown.offload_caching),
                e_mec_p2: Some(r.breakdown.mec_execution),
                e_loc_total: Some(r.breakdown.local_total()),
                e_off_total: Some(r.breakdown.offload_total()),
                kkt_residual: Some(r.kkt_residual),
                bnb_gap: Some(r.bnb_gap),
                node_count: Some(r.node_count as f64),
                runtime_s: timed.then_some(r.runtime),
                error: String::new(),
            },
            Err(e) => Self {
                scheme: id.name().into(),
                sweep_value: value,
                seed: seed.to_string(),
                objective_j: f64::INFINITY,
                e_mec_p1: None,
                e_off_p1: None,
                e_mec_p2: None,
                e_loc_total: None,
                e_off_total: None,
                kkt_residual: None,
                bnb_gap: None,
                node_count: None,
                runtime_s: None,
                error: match e {
                    Error::Infeasible(_) => "infeasible".into(),
                    other => other.to_string(),
                },
            },
        }
    }

    fn mean(rows: &[&SweepRow]) -> Self {
        let n = rows.len() as f64;
        let avg = |f: fn(&SweepRow) -> Option<f64>| -> Option<f64> {
            rows.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / n)
        };
        let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
        Self {
            scheme: rows[0].scheme.clone(),
            sweep_value: rows[0].sweep_value,
            seed: "mean".into(),
            objective_j: rows.iter().map(|r| r.objective_j).sum::<f64>() / n,
            e_mec_p1: avg(|r| r.e_mec_p1),
            e_off_p1: avg(|r| r.e_off_p1),
            e_mec_p2: avg(|r| r.e_mec_p2),
            e_loc_total: avg(|r| r.e_loc_total),
            e_off_total: avg(|r| r.e_off_total),
            kkt_residual: avg(|r| r.kkt_residual),
            bnb_gap: avg(|r| r.bnb_gap),
            node_count: avg(|r| r.node_count),
            runtime_s: avg(|r| r.runtime_s),
            error: if failed == 0 { String::new() } else { format!("{failed} of {} seeds failed", rows.len()) },
        }
    }
}

/// Runs one scheme, refusing branch-and-bound on oversized libraries.
pub fn run_guarded(s: &Scenario, id: SchemeId, cfg: &SchemeConfig, bnb_cap: usize) -> Result<SolveReport> {
    if id.uses_bnb() && s.params.num_tasks > bnb_cap {
        return Err(Error::Refused(format!(
            "{id} enumerates caching vectors and is capped at L <= {bnb_cap} (this scenario has L = {})",
            s.params.num_tasks
        )));
    }
    let started = Instant::now();
    let mut report = run_scheme(s, id, cfg)?;
    report.runtime = started.elapsed().as_secs_f64();
    Ok(report)
}

fn run_cell(spec: &SweepSpec, value: f64, seed: u64) -> Vec<SweepRow> {
    let scenario = spec.var.apply(&spec.base, value).and_then(|mut cfg| {
        cfg.seed = seed;
        generate(&cfg)
    });
    spec.schemes
        .iter()
        .map(|&id| {
            let outcome = scenario.as_ref().map_err(|e| Error::Domain(e.to_string())).and_then(|s| {
                run_guarded(s, id, &spec.scheme_cfg, spec.bnb_cap)
            });
            if let Err(e) = &outcome {
                warn!("{id} at {value} seed {seed}: {e}");
            }
            SweepRow::from_outcome(id, value, seed, &outcome, spec.record_runtime)
        })
        .collect()
}

/// Runs every `(value, seed, scheme)` cell and appends one mean row per
/// `(value, scheme)`. Rows come out in value, seed, scheme order whatever
/// the thread count.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells: Vec<(f64, u64)> =
        spec.values.iter().flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s))).collect();
    info!("sweep over {} cells x {} schemes", cells.len(), spec.schemes.len());
    let work = || cells.par_iter().map(|&(v, s)| run_cell(spec, v, s)).collect::<Vec<_>>();
    let per_cell = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let per_value = spec.seeds.len();
    let mut rows = Vec::with_capacity(per_cell.len() * spec.schemes.len() + spec.values.len() * spec.schemes.len());
    for block in per_cell.chunks(per_value) {
        for cell in block {
            rows.extend(cell.iter().cloned());
        }
        for (j, _) in spec.schemes.iter().enumerate() {
            let seed_rows: Vec<&SweepRow> = block.iter().map(|cell| &cell[j]).collect();
            rows.push(SweepRow::mean(&seed_rows));
        }
    }
    Ok(rows)
}

/// Writes the header and rows. An empty row list gives a header-only file.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}

/// Human-readable report of one run.
pub fn summary(s: &Scenario, r: &SolveReport) -> String {
    let p = &s.params;
    let b = &r.breakdown;
    let mut out = String::new();
    let _ = writeln!(out, "scheme           {}", r.scheme);
    let _ = writeln!(out, "objective        {:.9e} J", r.objective);
    let _ = writeln!(out, "caching phase    {:.9e} J (weighted)", b.caching_phase(p));
    let _ = writeln!(out, "  mec            {:.9e} J", b.mec_caching);
    let _ = writeln!(out, "  offload        {:.9e} J", b.offload_caching);
    let _ = writeln!(out, "execution phase  {:.9e} J (weighted)", b.execution_phase(p));
    let _ = writeln!(out, "  mec            {:.9e} J", b.mec_execution);
    let _ = writeln!(out, "  local          {:.9e} J", b.local_total());
    let _ = writeln!(out, "  offload        {:.9e} J", b.offload_total());
    for (k, (loc, off)) in b.local.iter().zip(&b.offload).enumerate() {
        let _ = writeln!(out, "    WD-{:<3} local {loc:.6e} J  offload {off:.6e} J", k + 1);
    }
    let _ = writeln!(
        out,
        "placement        {} ({} of {} Kbits used)",
        r.placement,
        r.placement.cached_bits(&s.library) / 1e3,
        s.library.capacity / 1e3
    );
    let _ = writeln!(out, "kkt residual     {:.3e}", r.kkt_residual);
    let _ = writeln!(out, "gap              {:.3e} J", r.bnb_gap);
    let _ = writeln!(out, "nodes            {}", r.node_count);
    if r.repaired {
        let _ = writeln!(out, "rounding         repaired to fit the cache");
    }
    let _ = writeln!(out, "runtime          {:.3} s", r.runtime);
    out
}

/// Runs one scheme on one scenario and returns the report with its summary.
pub fn run_single(s: &Scenario, id: SchemeId, cfg: &SchemeConfig, bnb_cap: usize) -> Result<(SolveReport, String)> {
    let report = run_guarded(s, id, cfg, bnb_cap)?;
    let text = summary(s, &report);
    Ok((report, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GenConfig {
        GenConfig {
            num_wds: 2,
            num_tasks: 4,
            caching_slots: 2,
            slots: 4,
            noise_power: 1e-15,
            ..GenConfig::default()
        }
    }

    #[test]
    fn empty_values_give_header_only() {
        let spec = SweepSpec::new(tiny(), SweepVar::Dmax, vec![], vec![1]);
        let rows = run_sweep(&spec).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), COLUMNS.join(",") + "\n");
    }

    #[test]
    fn rows_round_trip() {
        let mut spec = SweepSpec::new(tiny(), SweepVar::Dmax, vec![2.0, 6.0], vec![3, 4]);
        spec.schemes = vec![SchemeId::Popularity, SchemeId::NoCaching];
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2 * (2 * 2 + 2));
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn mean_rows_average_seed_rows() {
        let mut spec = SweepSpec::new(tiny(), SweepVar::Dmax, vec![4.0], vec![1, 2, 3]);
        spec.schemes = vec![SchemeId::Relaxation];
        let rows = run_sweep(&spec).unwrap();
        let mean = rows.last().unwrap();
        assert_eq!(mean.seed, "mean");
        let avg = rows[..3].iter().map(|r| r.objective_j).sum::<f64>() / 3.0;
        assert!((mean.objective_j - avg).abs() <= 1e-12 * avg.abs());
    }

    #[test]
    fn no_caching_ignores_capacity() {
        let mut spec = SweepSpec::new(tiny(), SweepVar::Dmax, vec![0.0, 5.0, 50.0], vec![9]);
        spec.schemes = vec![SchemeId::NoCaching];
        let rows = run_sweep(&spec).unwrap();
        let objs: Vec<f64> = rows.iter().filter(|r| r.seed == "9").map(|r| r.objective_j).collect();
        assert_eq!(objs.len(), 3);
        assert!(objs.iter().all(|&o| o == objs[0]));
    }

    #[test]
    fn oversized_bnb_is_refused_in_its_cell() {
        let base = GenConfig { num_tasks: 40, ..tiny() };
        let s = generate(&base).unwrap();
        let err = run_guarded(&s, SchemeId::Bnb, &SchemeConfig::default(), DEFAULT_BNB_CAP).unwrap_err();
        assert!(matches!(err, Error::Refused(_)));

        let mut spec = SweepSpec::new(base, SweepVar::Dmax, vec![4.0], vec![1]);
        spec.schemes = vec![SchemeId::FullLocal, SchemeId::NoCaching];
        let rows = run_sweep(&spec).unwrap();
        assert!(rows[0].error.starts_with("refused"));
        assert!(rows[0].objective_j.is_infinite());
        assert!(rows[1].error.is_empty());
    }

    #[test]
    fn sweep_var_parsing_and_application() {
        assert_eq!("Dmax".parse::<SweepVar>().unwrap(), SweepVar::Dmax);
        assert_eq!("sigma2".parse::<SweepVar>().unwrap(), SweepVar::Sigma2);
        assert_eq!("L".parse::<SweepVar>().unwrap(), SweepVar::L);
        assert!("bandwidth".parse::<SweepVar>().is_err());
        let base = tiny();
        assert_eq!(SweepVar::Dmax.apply(&base, 7.5).unwrap().capacity, 7.5e3);
        assert_eq!(SweepVar::L.apply(&base, 6.0).unwrap().num_tasks, 6);
        assert!(SweepVar::L.apply(&base, 2.5).is_err());
    }

    #[test]
    fn summary_mentions_every_phase() {
        let s = generate(&tiny()).unwrap();
        let (r, text) = run_single(&s, SchemeId::Popularity, &SchemeConfig::default(), DEFAULT_BNB_CAP).unwrap();
        assert!(text.contains("caching phase"));
        assert!(text.contains("execution phase"));
        assert!(text.contains(&r.placement.to_string()));
    }
}
