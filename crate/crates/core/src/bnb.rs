//! Branch-and-bound over the Boolean caching vector.
//!
//! Each node fixes some tasks to cached or uncached and relaxes the rest.
//! The relaxed optimum is the node's lower bound; rounding the relaxed
//! caching values (with capacity repair) and re-solving gives a feasible
//! incumbent and hence an upper bound. The search stops once the gap
//! between the best incumbent and the smallest live lower bound is at most
//! `epsilon` Joules.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::time::Instant;

use log::debug;

use crate::error::{Error, Result};
use crate::model::{CachePlacement, CacheState, Scenario, SchemeId, SolveReport, TaskLibrary};
use crate::subproblem::{assemble_pinned, solve, PinnedClass, SolveStatus, DEFAULT_TOL};

/// Relaxed caching values within this distance of 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    /// Relaxed value closest to 0.5, ties to the lowest index.
    MostFractional,
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOrder {
    BestFirst,
    DepthFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbConfig {
    /// Absolute optimality gap in Joules.
    pub epsilon: f64,
    pub max_nodes: usize,
    pub branch_rule: BranchRule,
    pub node_order: NodeOrder,
    /// KKT tolerance of every convex solve.
    pub tol: f64,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            max_nodes: 100_000,
            branch_rule: BranchRule::MostFractional,
            node_order: NodeOrder::BestFirst,
            tol: DEFAULT_TOL,
        }
    }
}

impl BnbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_nodes == 0 {
            return Err(Error::Domain("max_nodes must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("solver tolerance must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub id: usize,
    pub placement: CachePlacement,
    /// Relaxed optimum in Joules (never below the parent's bound).
    pub lower_bound: f64,
    /// Relaxed caching value of every task.
    pub alpha: Vec<f64>,
    pub depth: usize,
}

impl BnbNode {
    pub fn root(placement: CachePlacement) -> Self {
        let alpha = placement
            .states
            .iter()
            .map(|s| match s {
                CacheState::Cached => 1.0,
                CacheState::Uncached => 0.0,
                CacheState::Free => 0.5,
            })
            .collect();
        let depth = placement.states.iter().filter(|s| **s != CacheState::Free).count();
        Self { id: 0, placement, lower_bound: f64::NEG_INFINITY, alpha, depth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Branch,
    Prune,
    Fathom,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Branch => "branch",
            Action::Prune => "prune",
            Action::Fathom => "fathom",
        })
    }
}

/// One step of the search, as written to the progress log.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub node: usize,
    pub depth: usize,
    pub lower: f64,
    pub global_lower: f64,
    pub global_upper: f64,
    pub action: Action,
    /// Placement of the node, `0`/`1`/`*` per task.
    pub placement: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "node={} depth={} lower={:.12e} global_lower={:.12e} global_upper={:.12e} action={} placement={}",
            self.node, self.depth, self.lower, self.global_lower, self.global_upper, self.action, self.placement
        )
    }
}

/// Result of a branch-and-bound run with its search trace.
#[derive(Debug, Clone)]
pub struct BnbRun {
    pub report: SolveReport,
    /// Relaxed optimum at the root.
    pub root_lower: f64,
    pub global_lower: f64,
    pub trace: Vec<Event>,
    /// Whether the gap target was met before `max_nodes`.
    pub converged: bool,
}

/// Rounds relaxed caching values at 0.5 and evicts rounded-up free tasks in
/// ascending relaxed value (ties to the lowest index) until the cache fits.
///
/// Returns the cached set and whether any eviction happened.
pub fn repair_rounding(alpha: &[f64], base: &CachePlacement, library: &TaskLibrary) -> (Vec<bool>, bool) {
    let mut cached: Vec<bool> = base
        .states
        .iter()
        .zip(alpha)
        .map(|(s, &a)| match s {
            CacheState::Cached => true,
            CacheState::Uncached => false,
            CacheState::Free => a > 0.5,
        })
        .collect();
    let mut candidates: Vec<usize> =
        (0..cached.len()).filter(|&l| cached[l] && base.states[l] == CacheState::Free).collect();
    candidates.sort_by(|&a, &b| alpha[a].total_cmp(&alpha[b]).then(a.cmp(&b)));
    let mut used: f64 = cached.iter().zip(&library.sizes).filter(|(c, _)| **c).map(|(_, d)| d).sum();
    let mut repaired = false;
    for l in candidates {
        if used <= library.capacity {
            break;
        }
        cached[l] = false;
        used -= library.sizes[l];
        repaired = true;
    }
    (cached, repaired)
}

/// Index to branch on, or `None` when no task is free.
pub fn select_branch(node: &BnbNode, rule: BranchRule) -> Option<usize> {
    let free = node.placement.free();
    match rule {
        BranchRule::LowestIndex => free.first().copied(),
        BranchRule::MostFractional => free
            .into_iter()
            .min_by(|&a, &b| (node.alpha[a] - 0.5).abs().total_cmp(&(node.alpha[b] - 0.5).abs()).then(a.cmp(&b))),
    }
}

/// Children with the chosen task uncached and cached, in that order.
pub fn branch(node: &BnbNode, rule: BranchRule) -> Result<(BnbNode, BnbNode)> {
    let l = select_branch(node, rule).ok_or_else(|| Error::Domain("node has no free task to branch on".into()))?;
    let child = |state: CacheState| {
        let mut placement = node.placement.clone();
        placement.states[l] = state;
        let mut alpha = node.alpha.clone();
        alpha[l] = if state == CacheState::Cached { 1.0 } else { 0.0 };
        BnbNode { id: 0, placement, lower_bound: node.lower_bound, alpha, depth: node.depth + 1 }
    };
    Ok((child(CacheState::Uncached), child(CacheState::Cached)))
}

/// Outcome of bounding one node.
#[derive(Debug, Clone)]
pub struct NodeBound {
    pub lower: f64,
    pub upper: f64,
    pub incumbent: Option<SolveReport>,
    /// Relaxed values of every task (fixed entries as 0/1).
    pub alpha: Vec<f64>,
    pub integral: bool,
    pub repaired: bool,
}

/// Evaluates nodes and caches fixed-placement solves.
struct Bounder<'a> {
    scenario: &'a Scenario,
    pinned: Option<PinnedClass>,
    scheme: SchemeId,
    tol: f64,
    fixed: HashMap<Vec<bool>, Option<SolveReport>>,
}

impl<'a> Bounder<'a> {
    fn fixed_solve(&mut self, cached: Vec<bool>) -> Result<Option<SolveReport>> {
        if let Some(hit) = self.fixed.get(&cached) {
            return Ok(hit.clone());
        }
        let placement = CachePlacement::from_cached(&cached);
        let inst = assemble_pinned(self.scenario, &placement, self.pinned)?;
        let sol = solve(&inst, self.tol)?;
        let report = match sol.status {
            SolveStatus::Infeasible => None,
            _ => Some(sol.check()?.report(&inst, self.scheme)?),
        };
        self.fixed.insert(cached, report.clone());
        Ok(report)
    }

    fn bound(&mut self, node: &BnbNode) -> Result<NodeBound> {
        let inst = assemble_pinned(self.scenario, &node.placement, self.pinned)?;
        let sol = solve(&inst, self.tol)?;
        if sol.status == SolveStatus::Infeasible {
            return Ok(NodeBound {
                lower: f64::INFINITY,
                upper: f64::INFINITY,
                incumbent: None,
                alpha: node.alpha.clone(),
                integral: true,
                repaired: false,
            });
        }
        let sol = sol.check()?;
        let alpha = inst.alpha_values(sol.x());
        let near_integral = inst
            .placement
            .free()
            .iter()
            .all(|&l| alpha[l] <= INTEGRALITY_TOL || alpha[l] >= 1.0 - INTEGRALITY_TOL);
        let (cached, repaired) = repair_rounding(&alpha, &inst.placement, &self.scenario.library);
        let integral = near_integral && !repaired;
        let incumbent = self.fixed_solve(cached)?;
        let upper = incumbent.as_ref().map_or(f64::INFINITY, |r| r.objective);
        let relaxed = sol.objective.max(node.lower_bound);
        let lower = if integral || inst.placement.free().is_empty() { upper } else { relaxed };
        Ok(NodeBound { lower, upper, incumbent, alpha, integral, repaired })
    }
}

/// Bounds a single node: relaxed optimum and repaired-rounding incumbent.
pub fn bound(node: &BnbNode, s: &Scenario, cfg: &BnbConfig) -> Result<NodeBound> {
    Bounder { scenario: s, pinned: None, scheme: SchemeId::Bnb, tol: cfg.tol, fixed: HashMap::new() }.bound(node)
}

struct Queued(BnbNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Max-heap order: the smallest bound, then the oldest node, comes first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.lower_bound.total_cmp(&self.0.lower_bound).then(other.0.id.cmp(&self.0.id))
    }
}

enum Frontier {
    Best(BinaryHeap<Queued>),
    Depth(Vec<BnbNode>),
}

impl Frontier {
    fn push(&mut self, n: BnbNode) {
        match self {
            Frontier::Best(h) => h.push(Queued(n)),
            Frontier::Depth(v) => v.push(n),
        }
    }

    fn pop(&mut self) -> Option<BnbNode> {
        match self {
            Frontier::Best(h) => h.pop().map(|q| q.0),
            Frontier::Depth(v) => v.pop(),
        }
    }

    fn min_lower(&self) -> Option<f64> {
        match self {
            Frontier::Best(h) => h.peek().map(|q| q.0.lower_bound),
            Frontier::Depth(v) => v.iter().map(|n| n.lower_bound).min_by(f64::total_cmp),
        }
    }
}

/// ε-optimal caching vector for the full problem.
pub fn solve_bnb(s: &Scenario, cfg: &BnbConfig) -> Result<SolveReport> {
    solve_bnb_from(s, cfg, &CachePlacement::all_free(s.params.num_tasks))
}

/// Branch-and-bound restricted to completions of `root`.
pub fn solve_bnb_from(s: &Scenario, cfg: &BnbConfig, root: &CachePlacement) -> Result<SolveReport> {
    Ok(run_bnb(s, cfg, root, None, SchemeId::Bnb)?.report)
}

struct Search<'a> {
    bounder: Bounder<'a>,
    frontier: Frontier,
    trace: Vec<Event>,
    upper: f64,
    incumbent: Option<SolveReport>,
    repaired: bool,
    next_id: usize,
    evaluated: usize,
}

impl Search<'_> {
    fn global_lower(&self) -> f64 {
        self.frontier.min_lower().map_or(self.upper, |m| m.min(self.upper))
    }

    fn log(&mut self, node: &BnbNode, global_lower: f64, action: Action) {
        let e = Event {
            node: node.id,
            depth: node.depth,
            lower: node.lower_bound,
            global_lower,
            global_upper: self.upper,
            action,
            placement: node.placement.to_string(),
        };
        debug!("bnb {e}");
        self.trace.push(e);
    }

    /// Bounds a node and either queues it or closes it; returns its lower bound.
    fn visit(&mut self, mut node: BnbNode) -> Result<f64> {
        node.id = self.next_id;
        self.next_id += 1;
        self.evaluated += 1;
        let b = self.bounder.bound(&node)?;
        node.lower_bound = b.lower;
        node.alpha = b.alpha;
        if b.upper < self.upper {
            self.upper = b.upper;
            self.incumbent = b.incumbent;
            self.repaired = b.repaired;
        }
        let gl = self.global_lower().min(node.lower_bound);
        if b.integral || node.placement.free().is_empty() {
            self.log(&node, gl, Action::Fathom);
        } else if node.lower_bound >= self.upper {
            self.log(&node, gl, Action::Prune);
        } else {
            self.frontier.push(node);
        }
        Ok(b.lower)
    }
}

/// Full search with trace, optionally with a Phase-II variable class pinned to zero.
pub fn run_bnb(
    s: &Scenario,
    cfg: &BnbConfig,
    root: &CachePlacement,
    pinned: Option<PinnedClass>,
    scheme: SchemeId,
) -> Result<BnbRun> {
    cfg.validate()?;
    if root.len() != s.params.num_tasks {
        return Err(Error::Dimension(format!(
            "root placement has {} entries, library has {}",
            root.len(),
            s.params.num_tasks
        )));
    }
    let started = Instant::now();
    let mut search = Search {
        bounder: Bounder { scenario: s, pinned, scheme, tol: cfg.tol, fixed: HashMap::new() },
        frontier: match cfg.node_order {
            NodeOrder::BestFirst => Frontier::Best(BinaryHeap::new()),
            NodeOrder::DepthFirst => Frontier::Depth(Vec::new()),
        },
        trace: Vec::new(),
        upper: f64::INFINITY,
        incumbent: None,
        repaired: false,
        next_id: 0,
        evaluated: 0,
    };

    let root_lower = search.visit(BnbNode::root(root.clone()))?;
    let mut converged = true;
    while search.frontier.min_lower().is_some() {
        let global_lower = search.global_lower();
        if search.upper - global_lower <= cfg.epsilon {
            break;
        }
        if search.evaluated >= cfg.max_nodes {
            converged = false;
            break;
        }
        let node = search.frontier.pop().expect("frontier is non-empty");
        if node.lower_bound >= search.upper {
            search.log(&node, global_lower, Action::Prune);
            continue;
        }
        let (zero, one) = branch(&node, cfg.branch_rule)?;
        search.log(&node, global_lower, Action::Branch);
        search.visit(zero)?;
        search.visit(one)?;
    }

    let global_lower = search.global_lower();
    let Some(mut report) = search.incumbent else {
        return Err(Error::Infeasible(format!(
            "no caching vector below {root} admits a feasible schedule{}",
            pinned.map_or(String::new(), |p| format!(" with {p:?} pinned to zero"))
        )));
    };
    report.bnb_gap = (search.upper - global_lower).max(0.0);
    report.node_count = search.evaluated;
    report.runtime = started.elapsed().as_secs_f64();
    report.repaired = search.repaired;
    debug!(
        "bnb done: {} nodes, objective {:.12e} J, gap {:.3e} J{}",
        search.evaluated,
        report.objective,
        report.bnb_gap,
        if converged { "" } else { " (node limit reached)" }
    );
    Ok(BnbRun { report, root_lower, global_lower, trace: search.trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, GenConfig};
    use crate::subproblem::assemble;

    fn library(sizes: &[f64], capacity: f64) -> TaskLibrary {
        TaskLibrary { sizes: sizes.to_vec(), capacity }
    }

    #[test]
    fn repair_evicts_least_confident() {
        let lib = library(&[4e3, 4e3, 4e3], 8e3);
        let (cached, repaired) = repair_rounding(&[0.9, 0.8, 0.6], &CachePlacement::all_free(3), &lib);
        assert_eq!(cached, vec![true, true, false]);
        assert!(repaired);
    }

    #[test]
    fn repair_keeps_fitting_rounding() {
        let lib = library(&[4e3, 4e3, 4e3], 8e3);
        let (cached, repaired) = repair_rounding(&[0.9, 0.5, 0.2], &CachePlacement::all_free(3), &lib);
        assert_eq!(cached, vec![true, false, false]);
        assert!(!repaired);
    }

    #[test]
    fn repair_never_evicts_fixed_tasks() {
        let lib = library(&[4e3, 4e3, 4e3], 8e3);
        let base = CachePlacement { states: vec![CacheState::Cached, CacheState::Free, CacheState::Free] };
        let (cached, repaired) = repair_rounding(&[1.0, 0.7, 0.9], &base, &lib);
        assert_eq!(cached, vec![true, false, true]);
        assert!(repaired);
    }

    #[test]
    fn repair_ties_evict_lowest_index_first() {
        let lib = library(&[4e3, 4e3, 4e3], 8e3);
        let (cached, _) = repair_rounding(&[0.7, 0.7, 0.7], &CachePlacement::all_free(3), &lib);
        assert_eq!(cached, vec![false, true, true]);
    }

    fn node_with(alpha: &[f64]) -> BnbNode {
        let mut n = BnbNode::root(CachePlacement::all_free(alpha.len()));
        n.alpha = alpha.to_vec();
        n
    }

    #[test]
    fn most_fractional_choice() {
        let n = node_with(&[0.1, 0.49, 0.95]);
        assert_eq!(select_branch(&n, BranchRule::MostFractional), Some(1));
        assert_eq!(select_branch(&n, BranchRule::LowestIndex), Some(0));
        let tie = node_with(&[0.4, 0.6, 0.4]);
        assert_eq!(select_branch(&tie, BranchRule::MostFractional), Some(0));
    }

    #[test]
    fn single_task_root_children() {
        let root = BnbNode::root(CachePlacement::all_free(1));
        let (a, b) = branch(&root, BranchRule::MostFractional).unwrap();
        assert_eq!(a.placement.states, vec![CacheState::Uncached]);
        assert_eq!(b.placement.states, vec![CacheState::Cached]);
        assert_eq!((a.depth, b.depth), (1, 1));
    }

    #[test]
    fn children_partition_free_set() {
        let mut root = node_with(&[0.3, 0.5, 0.8, 0.1]);
        root.placement.states[3] = CacheState::Cached;
        let parent_free = root.placement.free();
        let (a, b) = branch(&root, BranchRule::MostFractional).unwrap();
        for child in [&a, &b] {
            let mut expect = parent_free.clone();
            expect.retain(|&l| l != 1);
            assert_eq!(child.placement.free(), expect);
        }
    }

    #[test]
    fn branching_needs_a_free_task() {
        let n = BnbNode::root(CachePlacement::from_cached(&[true, false]));
        assert!(branch(&n, BranchRule::MostFractional).is_err());
    }

    fn balanced(seed: u64, k: usize, l: usize, np: usize, n: usize) -> Scenario {
        let cfg = GenConfig {
            seed,
            num_wds: k,
            num_tasks: l,
            caching_slots: np,
            slots: n,
            noise_power: 1e-15,
            capacity: 6e3,
            ..GenConfig::default()
        };
        generate(&cfg).unwrap()
    }

    fn enumerate(s: &Scenario) -> f64 {
        let l = s.params.num_tasks;
        (0..1u32 << l)
            .map(|mask| {
                let cached: Vec<bool> = (0..l).map(|i| mask >> i & 1 == 1).collect();
                let inst = assemble(s, &CachePlacement::from_cached(&cached)).unwrap();
                let sol = solve(&inst, DEFAULT_TOL).unwrap();
                match sol.status {
                    SolveStatus::Infeasible => f64::INFINITY,
                    _ => sol.check().unwrap().report(&inst, SchemeId::Bnb).unwrap().objective,
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn fixed_root_is_a_single_solve() {
        let s = balanced(1, 2, 3, 2, 4);
        let root = CachePlacement::from_cached(&[true, false, false]);
        let b = bound(&BnbNode::root(root.clone()), &s, &BnbConfig::default()).unwrap();
        assert_eq!(b.lower, b.upper);
        let run = run_bnb(&s, &BnbConfig::default(), &root, None, SchemeId::Bnb).unwrap();
        assert_eq!(run.report.node_count, 1);
        assert_eq!(run.report.bnb_gap, 0.0);
        assert_eq!(run.report.placement, root);
    }

    #[test]
    fn zero_capacity_matches_no_caching() {
        let mut s = balanced(2, 2, 4, 3, 6);
        s.library.capacity = 0.0;
        let report = solve_bnb(&s, &BnbConfig::default()).unwrap();
        assert!(report.placement.cached().is_empty());
        let inst = assemble(&s, &CachePlacement::none_cached(4)).unwrap();
        let none = solve(&inst, DEFAULT_TOL).unwrap().check().unwrap().report(&inst, SchemeId::NoCaching).unwrap();
        assert!((report.objective - none.objective).abs() <= 1e-9);
    }

    #[test]
    fn four_task_instance_matches_enumeration() {
        for seed in 0..4 {
            let s = balanced(10 + seed, 2, 4, 3, 6);
            let run = run_bnb(&s, &BnbConfig::default(), &CachePlacement::all_free(4), None, SchemeId::Bnb).unwrap();
            let oracle = enumerate(&s);
            assert!((run.report.objective - oracle).abs() <= 1e-6, "seed {seed}: {} vs {oracle}", run.report.objective);
            assert!(run.report.bnb_gap <= 1e-9);
            assert!(run.root_lower <= run.report.objective + 1e-9);
        }
    }

    #[test]
    fn bounds_are_monotone_and_bracket_optimum() {
        for (seed, order) in [(20, NodeOrder::BestFirst), (21, NodeOrder::DepthFirst), (22, NodeOrder::BestFirst)] {
            let s = balanced(seed, 3, 5, 3, 6);
            let cfg = BnbConfig { node_order: order, ..BnbConfig::default() };
            let run = run_bnb(&s, &cfg, &CachePlacement::all_free(5), None, SchemeId::Bnb).unwrap();
            let oracle = enumerate(&s);
            let mut prev_upper = f64::INFINITY;
            for e in &run.trace {
                assert!(e.global_lower <= oracle + 1e-9, "{e}");
                assert!(e.global_upper >= oracle - 1e-9, "{e}");
                assert!(e.global_upper <= prev_upper);
                prev_upper = e.global_upper;
            }
            if order == NodeOrder::BestFirst {
                let branches: Vec<f64> =
                    run.trace.iter().filter(|e| e.action == Action::Branch).map(|e| e.global_lower).collect();
                assert!(branches.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            }
        }
    }

    #[test]
    fn node_limit_reports_gap() {
        let s = balanced(30, 3, 6, 3, 6);
        let cfg = BnbConfig { max_nodes: 1, ..BnbConfig::default() };
        let run = run_bnb(&s, &cfg, &CachePlacement::all_free(6), None, SchemeId::Bnb).unwrap();
        assert_eq!(run.report.node_count, 1);
        if !run.converged {
            assert!(run.report.bnb_gap > 0.0);
        }
    }

    #[test]
    fn event_lines_are_key_value() {
        let s = balanced(31, 2, 3, 2, 4);
        let run = run_bnb(&s, &BnbConfig::default(), &CachePlacement::all_free(3), None, SchemeId::Bnb).unwrap();
        let line = run.trace[0].to_string();
        for key in ["node=", "depth=", "lower=", "global_lower=", "global_upper=", "action="] {
            assert!(line.contains(key), "{line}");
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let s = balanced(32, 1, 2, 2, 3);
        let cfg = BnbConfig { epsilon: 0.0, ..BnbConfig::default() };
        assert!(solve_bnb(&s, &cfg).is_err());
    }
}
