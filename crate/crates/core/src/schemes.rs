//! The low-complexity caching schemes and the benchmark schemes, all
//! producing a [`SolveReport`] so they can be compared directly.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::bnb::{repair_rounding, run_bnb, BnbConfig};
use crate::error::{Error, Result};
use crate::model::{ArrivalSequences, CachePlacement, Scenario, SchemeId, SolveReport};
use crate::scenario::{substream, Purpose};
use crate::subproblem::{assemble, solve, PinnedClass, DEFAULT_TOL};

/// Settings shared by every scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub bnb: BnbConfig,
    /// KKT tolerance of single convex solves.
    pub tol: f64,
    /// Seed for shuffling tasks with equal popularity and size; `None` keeps
    /// them in index order.
    pub popularity_tie_seed: Option<u64>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { bnb: BnbConfig::default(), tol: DEFAULT_TOL, popularity_tie_seed: None }
    }
}

/// Number of times each task is requested over all WDs and slots.
pub fn popularity_scores(arrivals: &ArrivalSequences, num_tasks: usize) -> Result<Vec<usize>> {
    let mut scores = vec![0; num_tasks];
    for (k, seq) in arrivals.tasks.iter().enumerate() {
        for (n, &l) in seq.iter().enumerate() {
            *scores.get_mut(l).ok_or_else(|| {
                Error::Domain(format!("WD {k} slot {n} requests task {l}, library has {num_tasks}"))
            })? += 1;
        }
    }
    Ok(scores)
}

/// Task indices by descending score, then descending size, then ascending
/// index (or a seeded shuffle among exact ties).
pub fn popularity_order(scores: &[usize], sizes: &[f64], tie_seed: Option<u64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(sizes[b].total_cmp(&sizes[a])).then(a.cmp(&b)));
    if let Some(seed) = tie_seed {
        let mut rng = substream(seed, Purpose::TieBreak, 0, 0);
        let mut start = 0;
        while start < order.len() {
            let key = (scores[order[start]], sizes[order[start]]);
            let end = start + order[start..].iter().take_while(|&&l| (scores[l], sizes[l]) == key).count();
            order[start..end].shuffle(&mut rng);
            start = end;
        }
    }
    order
}

/// Longest prefix of `order` whose total size fits in `capacity`.
pub fn fitting_prefix(order: &[usize], sizes: &[f64], capacity: f64) -> usize {
    let mut used = 0.0;
    for (m, &l) in order.iter().enumerate() {
        used += sizes[l];
        if used > capacity {
            return m;
        }
    }
    order.len()
}

fn fixed_report(s: &Scenario, cached: &[bool], scheme: SchemeId, tol: f64) -> Result<SolveReport> {
    let inst = assemble(s, &CachePlacement::from_cached(cached))?;
    solve(&inst, tol)?.check()?.report(&inst, scheme)
}

/// Caches the most requested tasks that fit, then optimizes the schedule.
pub fn popularity_caching(s: &Scenario, cfg: &SchemeConfig) -> Result<SolveReport> {
    let started = Instant::now();
    let scores = popularity_scores(&s.arrivals, s.params.num_tasks)?;
    let order = popularity_order(&scores, &s.library.sizes, cfg.popularity_tie_seed);
    let m = fitting_prefix(&order, &s.library.sizes, s.library.capacity);
    let mut cached = vec![false; s.params.num_tasks];
    for &l in &order[..m] {
        cached[l] = true;
    }
    let mut report = fixed_report(s, &cached, SchemeId::Popularity, cfg.tol)?;
    report.runtime = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Solves the relaxed problem, rounds the caching values at 0.5 (repairing
/// capacity if needed) and re-optimizes the schedule.
pub fn relaxation_rounding(s: &Scenario, cfg: &SchemeConfig) -> Result<SolveReport> {
    let started = Instant::now();
    let free = CachePlacement::all_free(s.params.num_tasks);
    let inst = assemble(s, &free)?;
    let relaxed = solve(&inst, cfg.tol)?.check()?;
    let alpha = inst.alpha_values(relaxed.x());
    let (cached, repaired) = repair_rounding(&alpha, &free, &s.library);
    let mut report = fixed_report(s, &cached, SchemeId::Relaxation, cfg.tol)?;
    report.node_count = 2;
    report.repaired = repaired;
    report.runtime = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Optimal value of the fully relaxed problem (Joules).
pub fn relaxed_value(s: &Scenario, tol: f64) -> Result<f64> {
    let inst = assemble(s, &CachePlacement::all_free(s.params.num_tasks))?;
    Ok(solve(&inst, tol)?.check()?.objective)
}

/// Runs one of the benchmark schemes.
pub fn run_benchmark(s: &Scenario, id: SchemeId, cfg: &SchemeConfig) -> Result<SolveReport> {
    let started = Instant::now();
    let pinned = match id {
        SchemeId::NoCaching => {
            let mut report = fixed_report(s, &vec![false; s.params.num_tasks], id, cfg.tol)?;
            report.runtime = started.elapsed().as_secs_f64();
            return Ok(report);
        }
        SchemeId::FullOffloading => PinnedClass::Local,
        SchemeId::FullLocal => PinnedClass::Offload,
        other => return Err(Error::Domain(format!("{other} is not a benchmark scheme"))),
    };
    let root = CachePlacement::all_free(s.params.num_tasks);
    Ok(run_bnb(s, &cfg.bnb, &root, Some(pinned), id)?.report)
}

/// Runs any scheme.
pub fn run_scheme(s: &Scenario, id: SchemeId, cfg: &SchemeConfig) -> Result<SolveReport> {
    match id {
        SchemeId::Bnb => {
            let root = CachePlacement::all_free(s.params.num_tasks);
            Ok(run_bnb(s, &cfg.bnb, &root, None, id)?.report)
        }
        SchemeId::Popularity => popularity_caching(s, cfg),
        SchemeId::Relaxation => relaxation_rounding(s, cfg),
        SchemeId::NoCaching | SchemeId::FullOffloading | SchemeId::FullLocal => run_benchmark(s, id, cfg),
    }
}
