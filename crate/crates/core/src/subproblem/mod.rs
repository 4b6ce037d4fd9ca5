//! The continuous problem `P(L0, L1)`: every caching variable is either
//! fixed (0 or 1) or relaxed to `[0, 1]`, and all bit counts are continuous.
//!
//! Inside an instance, bits are measured in Kbits and energy in mJ; the
//! conversion back to bits and Joules happens in [`ConvexInstance::schedule`]
//! and [`ConvexSolution::objective`].

mod barrier;
mod dump;

use std::fmt;

use crate::energy::{self, cpu_term, offload_term, EnergyTerm};
use crate::error::{Error, Result};
use crate::model::{first_arrivals, CachePlacement, CacheState, Scenario, Schedule, SchemeId, SolveReport};

pub use barrier::solve;
pub use dump::dump;

/// Bits per solver bit unit.
pub const BIT_UNIT: f64 = 1e3;
/// Joules per solver energy unit.
pub const ENERGY_UNIT: f64 = 1e-3;
/// Default KKT tolerance, in solver units.
pub const DEFAULT_TOL: f64 = 1e-8;

/// A decision variable of the continuous problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// Relaxed caching decision of a free task.
    Alpha(usize),
    /// Bits uploaded by the offloading WD in a caching-phase slot.
    CachingOffload(usize),
    /// Bits executed by the MEC server in a caching-phase slot.
    CachingMec(usize),
    Local { wd: usize, slot: usize },
    Offload { wd: usize, slot: usize },
    /// Bits executed by the MEC server in an execution-phase slot.
    Mec(usize),
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Alpha(l) => write!(f, "alpha[{l}]"),
            VarKind::CachingOffload(i) => write!(f, "caching_offload[{i}]"),
            VarKind::CachingMec(i) => write!(f, "caching_mec[{i}]"),
            VarKind::Local { wd, slot } => write!(f, "local[{wd}][{slot}]"),
            VarKind::Offload { wd, slot } => write!(f, "offload[{wd}][{slot}]"),
            VarKind::Mec(n) => write!(f, "mec[{n}]"),
        }
    }
}

/// Which constraint family a row belongs to. Slot fields are zero-based and
/// name the last slot of the cumulative sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowLabel {
    /// Cached bits fit in the cache.
    Capacity,
    /// The uploader sends exactly the cached bits during the caching phase.
    CachingOffloadTotal,
    /// MEC cannot execute cached bits before they are uploaded.
    CachingCausality(usize),
    /// MEC finishes all cached bits within the caching phase.
    CachingCompletion,
    /// A WD cannot process bits that have not arrived yet.
    Causality { wd: usize, slot: usize },
    /// A WD processes all uncached arrived bits by the last slot.
    Deadline { wd: usize },
    /// MEC cannot execute offloaded bits before they are received.
    MecCausality(usize),
    /// MEC executes all offloaded bits by the last slot.
    MecDeadline,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Capacity => write!(f, "capacity"),
            RowLabel::CachingOffloadTotal => write!(f, "caching_offload_total"),
            RowLabel::CachingCausality(i) => write!(f, "caching_causality[{i}]"),
            RowLabel::CachingCompletion => write!(f, "caching_completion"),
            RowLabel::Causality { wd, slot } => write!(f, "causality[{wd}][{slot}]"),
            RowLabel::Deadline { wd } => write!(f, "deadline[{wd}]"),
            RowLabel::MecCausality(n) => write!(f, "mec_causality[{n}]"),
            RowLabel::MecDeadline => write!(f, "mec_deadline"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

/// Linear row `coeffs . x (<= | =) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: RowLabel,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// Execution-phase variable class held at zero by a benchmark scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PinnedClass {
    Local,
    Offload,
}

/// A set of rows whose bounds cannot be met simultaneously.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub rows: Vec<RowLabel>,
    pub reason: String,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.rows.iter().map(ToString::to_string).collect();
        write!(f, "{} [{}]", self.reason, rows.join(", "))
    }
}

/// Variable lookup tables of an instance.
#[derive(Debug, Clone, Default)]
pub(crate) struct VarIndex {
    pub alpha: Vec<Option<usize>>,
    pub caching_offload: Vec<Option<usize>>,
    pub caching_mec: Vec<Option<usize>>,
    pub local: Vec<Vec<Option<usize>>>,
    pub offload: Vec<Vec<Option<usize>>>,
    pub mec: Vec<Option<usize>>,
}

/// The assembled continuous problem for one caching placement.
#[derive(Debug, Clone)]
pub struct ConvexInstance<'a> {
    pub scenario: &'a Scenario,
    /// Placement after implied fixings (see [`assemble_pinned`]).
    pub placement: CachePlacement,
    pub pinned: Option<PinnedClass>,
    pub vars: Vec<VarKind>,
    /// Weighted energy of each variable in solver units; `None` for caching variables.
    pub terms: Vec<Option<EnergyTerm>>,
    pub rows: Vec<Row>,
    /// Set when fixed caching decisions already violate a constraint.
    pub infeasible: Option<Certificate>,
    pub(crate) index: VarIndex,
    /// First arrival slot of each task at each WD.
    pub(crate) first: Vec<Vec<Option<usize>>>,
}

impl ConvexInstance<'_> {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn upper_bound(&self, j: usize) -> Option<f64> {
        match self.vars[j] {
            VarKind::Alpha(_) => Some(1.0),
            _ => None,
        }
    }

    pub fn objective_scaled(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .zip(x)
            .filter_map(|(t, &v)| t.map(|t| t.value(v)))
            .sum()
    }

    /// Converts a solver point (Kbits) into a schedule in bits.
    pub fn schedule(&self, x: &[f64]) -> Schedule {
        let mut sched = Schedule::zeros(&self.scenario.params);
        for (kind, &v) in self.vars.iter().zip(x) {
            let bits = v.max(0.0) * BIT_UNIT;
            match *kind {
                VarKind::Alpha(_) => {}
                VarKind::CachingOffload(i) => sched.caching_offload[i] = bits,
                VarKind::CachingMec(i) => sched.caching_mec[i] = bits,
                VarKind::Local { wd, slot } => sched.local[wd][slot] = bits,
                VarKind::Offload { wd, slot } => sched.offload[wd][slot] = bits,
                VarKind::Mec(n) => sched.mec[n] = bits,
            }
        }
        sched
    }

    /// Caching value of every task: fixed entries as 0/1, free ones from `x`.
    pub fn alpha_values(&self, x: &[f64]) -> Vec<f64> {
        self.placement
            .states
            .iter()
            .enumerate()
            .map(|(l, s)| match s {
                CacheState::Uncached => 0.0,
                CacheState::Cached => 1.0,
                CacheState::Free => self.index.alpha[l].map_or(0.0, |j| x[j].clamp(0.0, 1.0)),
            })
            .collect()
    }
}

/// Outcome class of a convex solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Lagrange multipliers, one per row and per variable bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Multipliers {
    /// `>= 0` on `<=` rows, free on `=` rows.
    pub rows: Vec<f64>,
    /// For `x >= 0`.
    pub lower: Vec<f64>,
    /// For `alpha <= 1` (zero for variables without an upper bound).
    pub upper: Vec<f64>,
}

/// Primal-dual point at which KKT conditions are evaluated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KktPoint {
    pub x: Vec<f64>,
    pub multipliers: Multipliers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub status: SolveStatus,
    pub point: KktPoint,
    /// Objective in Joules.
    pub objective: f64,
    /// Residual as tracked by the solver, in solver units.
    pub kkt_residual: f64,
    /// Sum of complementarity products, an estimate of the duality gap (Joules).
    pub duality_gap: f64,
    pub newton_iterations: usize,
    pub certificate: Option<Certificate>,
}

impl ConvexSolution {
    pub(crate) fn infeasible(inst: &ConvexInstance<'_>, cert: Certificate) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            point: KktPoint { x: vec![0.0; inst.num_vars()], multipliers: Multipliers::default() },
            objective: f64::INFINITY,
            kkt_residual: f64::INFINITY,
            duality_gap: 0.0,
            newton_iterations: 0,
            certificate: Some(cert),
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.point.x
    }

    /// Turns a non-optimal status into the matching error.
    pub fn check(self) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible(
                self.certificate.map_or_else(|| "no certificate".to_string(), |c| c.to_string()),
            )),
            SolveStatus::MaxIter => Err(Error::MaxIter { iterations: self.newton_iterations, residual: self.kkt_residual }),
        }
    }

    /// Report for an optimal solve of an instance whose caching vector is integral.
    pub fn report(&self, inst: &ConvexInstance<'_>, scheme: SchemeId) -> Result<SolveReport> {
        let schedule = inst.schedule(self.x());
        let (objective, breakdown) = energy::objective(inst.scenario, &schedule)?;
        let cached: Vec<bool> = inst.alpha_values(self.x()).iter().map(|&a| a > 0.5).collect();
        Ok(SolveReport {
            scheme,
            objective,
            breakdown,
            placement: CachePlacement::from_cached(&cached),
            schedule,
            kkt_residual: self.kkt_residual,
            bnb_gap: 0.0,
            node_count: 1,
            runtime: 0.0,
            repaired: false,
        })
    }
}

/// Assembles `P(L0, L1)` with no pinned variable class.
pub fn assemble<'a>(s: &'a Scenario, placement: &CachePlacement) -> Result<ConvexInstance<'a>> {
    assemble_pinned(s, placement, None)
}

/// Assembles `P(L0, L1)`, optionally with a class of execution-phase bit
/// counts removed (held at zero).
///
/// With local computing pinned, every task that first arrives at some WD in
/// the last slot can only be served from the cache, so free entries for such
/// tasks are fixed to cached and uncached ones make the instance infeasible.
pub fn assemble_pinned<'a>(
    s: &'a Scenario,
    placement: &CachePlacement,
    pinned: Option<PinnedClass>,
) -> Result<ConvexInstance<'a>> {
    let p = &s.params;
    let lib = &s.library;
    if placement.len() != p.num_tasks {
        return Err(Error::Dimension(format!(
            "placement has {} entries, library has {}",
            placement.len(),
            p.num_tasks
        )));
    }
    let (np, n_slots, k_wds) = (p.caching_slots, p.slots, p.num_wds);
    let first = first_arrivals(&s.arrivals, p.num_tasks);
    let mut placement = placement.clone();
    let mut infeasible = None;

    if pinned == Some(PinnedClass::Local) {
        for (k, row) in first.iter().enumerate() {
            for (l, f) in row.iter().enumerate() {
                if *f != Some(n_slots - 1) {
                    continue;
                }
                match placement.states[l] {
                    CacheState::Free => placement.states[l] = CacheState::Cached,
                    CacheState::Cached => {}
                    CacheState::Uncached => {
                        infeasible.get_or_insert(Certificate {
                            rows: vec![
                                RowLabel::Causality { wd: k, slot: n_slots - 2 },
                                RowLabel::Deadline { wd: k },
                            ],
                            reason: format!(
                                "task {l} first arrives at WD {k} in the last slot and can be neither offloaded nor computed locally"
                            ),
                        });
                    }
                }
            }
        }
    }

    let cached_bits = placement.cached_bits(lib);
    if cached_bits > lib.capacity && infeasible.is_none() {
        infeasible = Some(Certificate {
            rows: vec![RowLabel::Capacity],
            reason: format!("cached tasks need {cached_bits} bits, capacity is {}", lib.capacity),
        });
    }

    let tau = p.slot_len;
    let wd_weight = p.w_wd;
    let mec_cost = cpu_term(p.mec_capacitance, p.mec_cycles_per_bit, tau)
        .rescaled(BIT_UNIT, ENERGY_UNIT)
        .weighted(p.w_mec);

    let mut vars = Vec::new();
    let mut terms = Vec::new();
    let mut push = |kind: VarKind, term: Option<EnergyTerm>| {
        vars.push(kind);
        terms.push(term);
        Some(vars.len() - 1)
    };
    let mut index = VarIndex::default();

    index.alpha = placement
        .states
        .iter()
        .enumerate()
        .map(|(l, st)| if *st == CacheState::Free { push(VarKind::Alpha(l), None) } else { None })
        .collect();
    index.caching_offload = (0..np)
        .map(|i| {
            if i + 1 < np {
                let term = offload_term(s.channels.caching_gain[i], p.caching_bandwidth[i], tau, p.noise_power)
                    .rescaled(BIT_UNIT, ENERGY_UNIT)
                    .weighted(wd_weight);
                push(VarKind::CachingOffload(i), Some(term))
            } else {
                None
            }
        })
        .collect();
    index.caching_mec = (0..np)
        .map(|i| if i > 0 { push(VarKind::CachingMec(i), Some(mec_cost)) } else { None })
        .collect();
    for k in 0..k_wds {
        let local_cost = cpu_term(p.wd_capacitance[k], p.wd_cycles_per_bit[k], tau)
            .rescaled(BIT_UNIT, ENERGY_UNIT)
            .weighted(wd_weight);
        let local = (0..n_slots)
            .map(|n| {
                if pinned == Some(PinnedClass::Local) {
                    None
                } else {
                    push(VarKind::Local { wd: k, slot: n }, Some(local_cost))
                }
            })
            .collect();
        let offload = (0..n_slots)
            .map(|n| {
                if pinned == Some(PinnedClass::Offload) || n + 1 == n_slots {
                    None
                } else {
                    let term = offload_term(s.channels.gain[k][n], p.bandwidth[k][n], tau, p.noise_power)
                        .rescaled(BIT_UNIT, ENERGY_UNIT)
                        .weighted(wd_weight);
                    push(VarKind::Offload { wd: k, slot: n }, Some(term))
                }
            })
            .collect();
        index.local.push(local);
        index.offload.push(offload);
    }
    index.mec = (0..n_slots)
        .map(|n| if n > 0 { push(VarKind::Mec(n), Some(mec_cost)) } else { None })
        .collect();

    let size = |l: usize| lib.sizes[l] / BIT_UNIT;
    let free_alpha = || index.alpha.iter().enumerate().filter_map(|(l, j)| j.map(|j| (l, j)));
    let mut rows = Vec::new();

    rows.push(Row {
        label: RowLabel::Capacity,
        coeffs: free_alpha().map(|(l, j)| (j, size(l))).collect(),
        sense: Sense::Le,
        rhs: (lib.capacity - cached_bits) / BIT_UNIT,
    });

    let mut coeffs: Vec<(usize, f64)> = index.caching_offload.iter().flatten().map(|&j| (j, 1.0)).collect();
    coeffs.extend(free_alpha().map(|(l, j)| (j, -size(l))));
    rows.push(Row {
        label: RowLabel::CachingOffloadTotal,
        coeffs,
        sense: Sense::Eq,
        rhs: cached_bits / BIT_UNIT,
    });

    for i in 0..np {
        let mut coeffs: Vec<(usize, f64)> = index.caching_mec[..=i].iter().flatten().map(|&j| (j, 1.0)).collect();
        coeffs.extend(index.caching_offload[..i].iter().flatten().map(|&j| (j, -1.0)));
        rows.push(Row { label: RowLabel::CachingCausality(i), coeffs, sense: Sense::Le, rhs: 0.0 });
    }

    let mut coeffs: Vec<(usize, f64)> = index.caching_mec.iter().flatten().map(|&j| (j, 1.0)).collect();
    coeffs.extend(index.caching_offload.iter().flatten().map(|&j| (j, -1.0)));
    rows.push(Row { label: RowLabel::CachingCompletion, coeffs, sense: Sense::Eq, rhs: 0.0 });

    let mut deadlines = Vec::with_capacity(k_wds);
    for k in 0..k_wds {
        for n in 0..n_slots {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for j in 0..=n {
                coeffs.extend(index.local[k][j].map(|v| (v, 1.0)));
                coeffs.extend(index.offload[k][j].map(|v| (v, 1.0)));
            }
            let mut rhs = 0.0;
            for (l, f) in first[k].iter().enumerate() {
                if !f.is_some_and(|f| f <= n) {
                    continue;
                }
                match placement.states[l] {
                    CacheState::Cached => {}
                    CacheState::Uncached => rhs += size(l),
                    CacheState::Free => {
                        rhs += size(l);
                        coeffs.push((index.alpha[l].expect("free task has a variable"), size(l)));
                    }
                }
            }
            let row = Row { label: RowLabel::Causality { wd: k, slot: n }, coeffs, sense: Sense::Le, rhs };
            if n + 1 == n_slots {
                deadlines.push(Row { label: RowLabel::Deadline { wd: k }, sense: Sense::Eq, ..row.clone() });
            }
            rows.push(row);
        }
    }
    rows.extend(deadlines);

    for n in 0..n_slots.saturating_sub(1) {
        let mut coeffs: Vec<(usize, f64)> = index.mec[..=n].iter().flatten().map(|&j| (j, 1.0)).collect();
        for k in 0..k_wds {
            coeffs.extend(index.offload[k][..n].iter().flatten().map(|&j| (j, -1.0)));
        }
        rows.push(Row { label: RowLabel::MecCausality(n), coeffs, sense: Sense::Le, rhs: 0.0 });
    }
    let mut coeffs: Vec<(usize, f64)> = index.mec.iter().flatten().map(|&j| (j, 1.0)).collect();
    for k in 0..k_wds {
        coeffs.extend(index.offload[k].iter().flatten().map(|&j| (j, -1.0)));
    }
    rows.push(Row { label: RowLabel::MecDeadline, coeffs, sense: Sense::Eq, rhs: 0.0 });

    Ok(ConvexInstance { scenario: s, placement, pinned, vars, terms, rows, infeasible, index, first })
}

/// Largest objective gradient entry at `x`, floored at one. Dual-side
/// residuals are measured relative to it so badly conditioned channels
/// (gradients of 1e6 mJ/Kbit and more) are held to the same standard.
pub fn gradient_scale(terms: &[Option<EnergyTerm>], x: &[f64]) -> f64 {
    terms.iter().zip(x).filter_map(|(t, &v)| t.map(|t| t.grad(v).abs())).fold(1.0, f64::max)
}

/// Max-norm KKT residual of a primal-dual point.
///
/// Combines stationarity of the Lagrangian, primal feasibility, dual
/// feasibility and complementary slackness over every row and bound of
/// the instance. Primal terms are in Kbits; stationarity, multiplier signs
/// and complementarity are divided by [`gradient_scale`]. It is zero
/// exactly at an optimal primal-dual pair.
pub fn kkt_residual(inst: &ConvexInstance<'_>, point: &KktPoint) -> Result<f64> {
    let n = inst.num_vars();
    let m = &point.multipliers;
    if point.x.len() != n || m.lower.len() != n || m.upper.len() != n || m.rows.len() != inst.rows.len() {
        return Err(Error::Dimension(format!(
            "KKT point has {} values, {} lower and {} upper multipliers, {} row multipliers; instance has {n} variables and {} rows",
            point.x.len(),
            m.lower.len(),
            m.upper.len(),
            m.rows.len(),
            inst.rows.len()
        )));
    }
    let x = &point.x;
    let scale = gradient_scale(&inst.terms, x);
    let mut stat: Vec<f64> = inst
        .terms
        .iter()
        .zip(x)
        .map(|(t, &v)| t.map_or(0.0, |t| t.grad(v)))
        .collect();
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for (row, &y) in inst.rows.iter().zip(&m.rows) {
        for &(j, a) in &row.coeffs {
            stat[j] += y * a;
        }
        let gap = row.rhs - row.activity(x);
        match row.sense {
            Sense::Eq => primal = primal.max(gap.abs()),
            Sense::Le => {
                primal = primal.max(-gap);
                dual = dual.max(-y).max((y * gap).abs());
            }
        }
    }
    for j in 0..n {
        let (mu, eta) = (m.lower[j], m.upper[j]);
        stat[j] += eta - mu;
        primal = primal.max(-x[j]);
        dual = dual.max(-mu).max((mu * x[j]).abs());
        match inst.upper_bound(j) {
            Some(u) => {
                primal = primal.max(x[j] - u);
                dual = dual.max(-eta).max((eta * (u - x[j])).abs());
            }
            None => dual = dual.max(eta.abs()),
        }
    }
    let dual = stat.iter().fold(dual, |acc, s| acc.max(s.abs()));
    Ok(primal.max(dual / scale))
}
